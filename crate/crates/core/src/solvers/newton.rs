//! Matrix-free Newton–Krylov on the gradient.
//!
//! Hessian-vector products are central differences of the exact discrete
//! gradient. Steps are damped by backtracking on `‖gradient‖₂`, which works
//! for minima and saddles alike.

use super::krylov::gmres;
use super::{apply_precond, potential_shift, preconditioner, SolveOptions};
use crate::error::Result;
use crate::functional::{gradient, Problem};
use crate::grid::Field;

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub u: Field,
    pub grad: Field,
    pub grad_norm: f64,
    /// `‖gradient‖₂` at the start and after every accepted step.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// `(∇I(u + h v) − ∇I(u − h v)) / 2h` with `h = fd_step · max(1, ‖u‖∞) / ‖v‖∞`.
pub fn hessian_vector(p: &Problem, u: &Field, v: &Field, fd_step: f64) -> Result<Field> {
    let vmax = v.linf_norm();
    if vmax == 0.0 {
        return Ok(Field::zeros(p.grid()));
    }
    let h = fd_step * u.linf_norm().max(1.0) / vmax;
    let gp = gradient(p, &u.axpy(h, v))?;
    let gm = gradient(p, &u.axpy(-h, v))?;
    Ok((&gp - &gm).scale(0.5 / h))
}

/// Newton–Krylov from `u0` until `‖gradient‖₂ ≤ tol`. Iterates rejected by
/// `admissible` are treated like failed line-search trials.
pub fn newton_refine(
    p: &Problem,
    u0: &Field,
    opts: &SolveOptions,
    tol: f64,
    admissible: impl Fn(&Field) -> bool,
) -> Result<NewtonOutcome> {
    let mut u = u0.clone();
    let mut g = gradient(p, &u)?;
    let mut gn = g.l2_norm();
    let mut history = vec![gn];
    for _ in 0..opts.newton_max_iters {
        if gn <= tol {
            break;
        }
        let m = preconditioner(p, opts, potential_shift(p, &u));
        let rhs = -&g;
        let lin = gmres(
            |v| hessian_vector(p, &u, v, opts.fd_step),
            |v| apply_precond(&m, v),
            &rhs,
            opts.krylov_tol,
            opts.krylov_restart,
            opts.krylov_max_iters,
        )?;
        let step = lin.x;
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..12 {
            let trial = u.axpy(t, &step);
            if admissible(&trial) {
                if let Ok(gt) = gradient(p, &trial) {
                    let nt = gt.l2_norm();
                    if nt <= (1.0 - 1e-4 * t) * gn {
                        accepted = Some((trial, gt, nt));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((un, gt, nt)) = accepted else {
            log::debug!("newton stalled at |g| = {gn:e}");
            break;
        };
        log::debug!("newton: |g| {gn:e} -> {nt:e} (t = {t}, krylov {} its)", lin.iterations);
        u = un;
        g = gt;
        gn = nt;
        history.push(gn);
    }
    Ok(NewtonOutcome { converged: gn <= tol, u, grad: g, grad_norm: gn, history })
}
