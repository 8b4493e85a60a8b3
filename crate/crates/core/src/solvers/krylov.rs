//! Restarted GMRES with right preconditioning on grid fields.

use crate::error::Result;
use crate::grid::Field;

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Field,
    pub iterations: usize,
    /// Final `‖b − A x‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solve `A x = b` from `x = 0`, iterating on `A M y = b` with `x = M y`.
/// `apply` and `precond` may fail (e.g. a Hessian product hitting overflow).
pub fn gmres<A, M>(
    mut apply: A,
    precond: M,
    b: &Field,
    rel_tol: f64,
    restart: usize,
    max_iters: usize,
) -> Result<GmresOutcome>
where
    A: FnMut(&Field) -> Result<Field>,
    M: Fn(&Field) -> Field,
{
    let grid = b.grid().clone();
    let b_norm = b.l2_norm();
    let mut x = Field::zeros(&grid);
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, relative_residual: 0.0, converged: true });
    }
    let target = rel_tol * b_norm;
    let mut total = 0;
    let mut r = b.clone();
    let mut r_norm = b_norm;

    while total < max_iters {
        let m = restart.min(max_iters - total);
        let mut basis: Vec<Field> = vec![r.scale(1.0 / r_norm)];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut rhs = vec![0.0; m + 1];
        rhs[0] = r_norm;
        let mut k_used = 0;

        for k in 0..m {
            let mut v = apply(&precond(&basis[k]))?;
            // Modified Gram–Schmidt.
            for (j, bj) in basis.iter().enumerate() {
                let hjk = v.dot(bj);
                h[j][k] = hjk;
                v = v.axpy(-hjk, bj);
            }
            let norm = v.l2_norm();
            h[k + 1][k] = norm;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            rhs[k + 1] = -sn[k] * rhs[k];
            rhs[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if rhs[k + 1].abs() <= target || norm == 0.0 {
                break;
            }
            basis.push(v.scale(1.0 / norm));
        }

        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = rhs[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = Field::zeros(&grid);
        for (yi, bi) in y.iter().zip(&basis) {
            update = update.axpy(*yi, bi);
        }
        x = &x + &precond(&update);
        r = b - &apply(&x)?;
        r_norm = r.l2_norm();
        if r_norm <= target || k_used == 0 {
            break;
        }
    }
    let relative_residual = r_norm / b_norm;
    Ok(GmresOutcome { x, iterations: total, relative_residual, converged: relative_residual <= rel_tol })
}
