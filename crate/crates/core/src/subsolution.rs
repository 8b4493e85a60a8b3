//! An explicit subsolution of the fourth-order equation.
//!
//! A mean-zero source `φ` equals `−A−1` on the δ-disks around the vortices
//! and a positive constant `φ₀` away from the 2δ-disks. The mean-zero solution
//! `ũ` of `ε²Δ²ũ − Δũ = φ` is shifted down by a constant `k` large enough that
//! `s − f(e^{σ+u̲}) ≥ (s − f(0))/2`; for λ large and ε small the shifted field
//! `u̲ = ũ − k` satisfies `ε²Δ²u̲ − Δu̲ ≤ F(u̲)` pointwise.

use crate::error::{Result, VortexError};
use crate::functional::{nonlinear_source, Problem};
use crate::grid::{Field, Grid};
use crate::operators::solve_fourth_linear;
use crate::singular::VortexSet;

/// Added to the measured bound when choosing `k`.
pub const K_SLACK: f64 = 0.1;

/// Smallest admissible δ in grid cells.
pub const MIN_DELTA_CELLS: f64 = 4.0;

/// C^∞ step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Default δ: L/8, reduced if needed so the 2δ-disks stay disjoint.
pub fn default_delta(grid: &Grid, vortices: &VortexSet) -> f64 {
    let mut delta = grid.length() / 8.0;
    let pts: Vec<_> = vortices.iter().map(|v| v.position()).collect();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            delta = delta.min(0.24 * grid.distance(*a, *b));
        }
    }
    delta
}

fn check_delta(grid: &Grid, vortices: &VortexSet, delta: f64) -> Result<()> {
    let h = grid.spacing();
    if !(delta >= MIN_DELTA_CELLS * h) {
        return Err(VortexError::InvalidParameter(format!(
            "delta = {delta:.4e} is under-resolved (need at least {MIN_DELTA_CELLS} h = {:.4e})",
            MIN_DELTA_CELLS * h
        )));
    }
    if 2.0 * delta >= 0.5 * grid.length() {
        return Err(VortexError::InvalidParameter(format!(
            "2 delta = {:.4e} must stay below L/2",
            2.0 * delta
        )));
    }
    let pts: Vec<_> = vortices.iter().map(|v| v.position()).collect();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            if grid.distance(*a, *b) <= 4.0 * delta {
                return Err(VortexError::InvalidParameter(format!(
                    "2 delta disks around {a:?} and {b:?} overlap"
                )));
            }
        }
    }
    Ok(())
}

/// Radial blend `b ∈ [0, 1]`: 0 on the δ-disks, 1 outside the 2δ-disks.
fn blend(grid: &Grid, vortices: &VortexSet, delta: f64) -> Field {
    Field::from_fn(grid, |x, y| {
        vortices
            .iter()
            .map(|v| smooth_step((grid.distance((x, y), v.position()) - delta) / delta))
            .fold(1.0, f64::min)
    })
}

/// The bump source `φ` and its outer level `φ₀`.
pub fn build_bump(grid: &Grid, vortices: &VortexSet, delta: f64) -> Result<(Field, f64)> {
    check_delta(grid, vortices, delta)?;
    let a = 4.0 * std::f64::consts::PI * vortices.total() as f64 / grid.area();
    let b = blend(grid, vortices, delta);
    let t = b.integrate();
    // ∫φ = −(A+1)|M| + (φ₀ + A + 1) T = 0.
    let phi0 = (a + 1.0) * (grid.area() / t - 1.0);
    let phi = b.map(|bv| -a - 1.0 + (phi0 + a + 1.0) * bv);
    Ok((phi, phi0))
}

#[derive(Clone, Debug)]
pub struct SubsolutionResult {
    pub phi: Field,
    pub phi0: f64,
    pub u_tilde: Field,
    pub k: f64,
    /// `u̲ = ũ − k`.
    pub u_sub: Field,
    /// `φ − F(u̲)`; the subsolution inequality is `margin ≤ 0`.
    pub margin: Field,
    /// Max margin over the δ-disks.
    pub inner_margin: f64,
    /// Max margin over the complement.
    pub outer_margin: f64,
    /// `min (s − f(e^{σ+u̲})) − (s − f(0))/2`, nonnegative when the sign condition holds.
    pub sign_margin: f64,
    pub verified: bool,
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Build `φ`, `ũ`, `k` and `u̲`, then evaluate the margins.
pub fn build_subsolution(p: &Problem, delta: f64) -> Result<SubsolutionResult> {
    let grid = p.grid();
    let bg = p.background();
    let (phi, phi0) = build_bump(grid, bg.vortices(), delta)?;
    let u_tilde = solve_fourth_linear(&phi, p.epsilon())?;
    let model = p.model();
    let target = model.inverse(0.5 * (model.s() + model.f0()))?;
    let top = bg.sigma.zip_map(&u_tilde, |s, u| s + u).max();
    let k = top - target.ln() + K_SLACK;
    let u_sub = u_tilde.add_constant(-k);
    let draft = SubsolutionResult {
        phi,
        phi0,
        u_tilde,
        k,
        u_sub,
        margin: Field::zeros(grid),
        inner_margin: f64::NAN,
        outer_margin: f64::NAN,
        sign_margin: f64::NAN,
        verified: false,
        lambda: p.lambda(),
        epsilon: p.epsilon(),
        delta,
    };
    verify_subsolution(p, draft, delta)
}

/// Evaluate `φ − F(u̲)` pointwise, split it by region, and check the sign condition.
pub fn verify_subsolution(p: &Problem, mut r: SubsolutionResult, delta: f64) -> Result<SubsolutionResult> {
    let grid = p.grid();
    let bg = p.background();
    let source = nonlinear_source(p, &r.u_sub)?;
    let margin = &r.phi - &source;
    let mut inner = f64::NEG_INFINITY;
    let mut outer = f64::NEG_INFINITY;
    for idx in 0..grid.len() {
        let x = grid.coords(idx);
        let m = margin.values()[idx];
        if bg.vortices().iter().any(|v| grid.distance(x, v.position()) < delta) {
            inner = inner.max(m);
        } else {
            outer = outer.max(m);
        }
    }
    let model = p.model();
    let s = model.s();
    let half_gap = 0.5 * (s - model.f0());
    let sign_margin = bg
        .w
        .zip_map(&r.u_sub, |w, u| s - model.f(w * u.exp()) - half_gap)
        .min();
    r.verified = inner <= 0.0 && outer <= 0.0 && sign_margin >= -1e-10;
    r.margin = margin;
    r.inner_margin = inner;
    r.outer_margin = outer;
    r.sign_margin = sign_margin;
    r.lambda = p.lambda();
    r.epsilon = p.epsilon();
    r.delta = delta;
    Ok(r)
}

/// Feasibility sweep over (λ, ε).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeTable {
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `verified[i][j]` for `lambdas[i]`, `epsilons[j]`.
    pub verified: Vec<Vec<bool>>,
    /// Smallest λ verified at the smallest ε.
    pub lambda0: Option<f64>,
    /// Largest ε still verified at `lambda0`.
    pub eps_lambda: Option<f64>,
}

impl ProbeTable {
    /// CSV with rows λ, columns ε, cells 0/1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda");
        for e in &self.epsilons {
            out.push_str(&format!(",{e}"));
        }
        out.push('\n');
        for (l, row) in self.lambdas.iter().zip(&self.verified) {
            out.push_str(&format!("{l}"));
            for v in row {
                out.push_str(if *v { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

fn is_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Build and verify the subsolution on every cell of the grid `λ × ε`.
pub fn probe_parameters(p0: &Problem, delta: f64, lambdas: &[f64], epsilons: &[f64]) -> Result<ProbeTable> {
    if lambdas.is_empty() || epsilons.is_empty() || !is_increasing(lambdas) || !is_increasing(epsilons) {
        return Err(VortexError::InvalidParameter(
            "probe grids must be non-empty and strictly increasing".into(),
        ));
    }
    let mut verified = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let mut row = Vec::with_capacity(epsilons.len());
        for &e in epsilons {
            let p = p0.with_lambda(l)?.with_epsilon(e)?;
            row.push(build_subsolution(&p, delta)?.verified);
        }
        verified.push(row);
    }
    let first = verified.iter().position(|row| row[0]);
    let lambda0 = first.map(|i| lambdas[i]);
    let eps_lambda = first.and_then(|i| {
        let row = &verified[i];
        let run = row.iter().take_while(|v| **v).count();
        (run > 0).then(|| epsilons[run - 1])
    });
    Ok(ProbeTable { lambdas: lambdas.to_vec(), epsilons: epsilons.to_vec(), verified, lambda0, eps_lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::gradient;
    use crate::model::VortexModel;
    use crate::singular::{build_sigma, Vortex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn u1_problem(lambda: f64, eps: f64) -> Problem {
        let l = 2.0 * PI;
        let g = Grid::new(128, l).unwrap();
        let bg = build_sigma(&g, &VortexSet::single(l / 2.0, l / 2.0)).unwrap();
        Problem::new(VortexModel::u1(), bg, lambda, eps).unwrap()
    }

    #[test]
    fn smooth_step_is_monotone() {
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = smooth_step(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bump_properties() {
        let l = 2.0 * PI;
        let g = Grid::new(128, l).unwrap();
        let v = VortexSet::single(l / 2.0, l / 2.0);
        let a = 4.0 * PI / g.area();
        let delta = l / 8.0;
        let (phi, phi0) = build_bump(&g, &v, delta).unwrap();
        assert!(phi.integrate().abs() < 1e-10);
        assert!((phi.min() + a + 1.0).abs() < 1e-14);
        assert!((phi.max() - phi0).abs() < 1e-14 && phi0 > 0.0);
        for idx in 0..g.len() {
            let r = g.distance(g.coords(idx), (l / 2.0, l / 2.0));
            let val = phi.values()[idx];
            if r < delta {
                assert_eq!(val, -a - 1.0);
            }
            if r > 2.0 * delta {
                assert!((val - phi0).abs() < 1e-14);
            }
        }
        // Independent oracle for φ₀: the blend's mass from a fine radial quadrature.
        let m = 200_000;
        let dr = delta / m as f64;
        let mut ring = 0.0;
        for i in 0..m {
            let r = delta + (i as f64 + 0.5) * dr;
            ring += (1.0 - smooth_step((r - delta) / delta)) * 2.0 * PI * r * dr;
        }
        let deficit = PI * delta * delta + ring;
        let expect = (a + 1.0) * (g.area() / (g.area() - deficit) - 1.0);
        assert!((phi0 - expect).abs() < 1e-6 * expect, "{phi0} vs {expect}");
    }

    #[test]
    fn bump_symmetric_under_swap() {
        let l = 2.0 * PI;
        let g = Grid::new(64, l).unwrap();
        let h = g.spacing();
        let v = VortexSet::new(vec![Vortex::new(16.0 * h, 16.0 * h, 1), Vortex::new(48.0 * h, 48.0 * h, 1)]).unwrap();
        let (phi, _) = build_bump(&g, &v, l / 10.0).unwrap();
        assert!((&phi.roll(32, 32) - &phi).linf_norm() < 1e-13);
    }

    #[test]
    fn bump_rejects_bad_delta() {
        let l = 2.0 * PI;
        let g = Grid::new(64, l).unwrap();
        let v = VortexSet::single(1.0, 1.0);
        assert!(build_bump(&g, &v, g.spacing()).is_err());
        assert!(build_bump(&g, &v, 0.3 * l).is_err());
        let two = VortexSet::new(vec![Vortex::new(1.0, 1.0, 1), Vortex::new(2.0, 1.0, 1)]).unwrap();
        assert!(build_bump(&g, &two, 0.5).is_err());
        assert!(default_delta(&g, &two) < 0.25);
    }

    #[test]
    fn shift_target_examples() {
        assert_eq!(VortexModel::u1().inverse(0.5).unwrap().ln(), 0.5f64.ln());
        let cp = VortexModel::cp1(0.0).unwrap();
        assert!((cp.inverse(0.5 * (cp.s() + cp.f0())).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn u1_subsolution_verified_at_large_lambda() {
        let p = u1_problem(40.0, 1e-3);
        let r = build_subsolution(&p, 2.0 * PI / 8.0).unwrap();
        assert!(r.verified, "inner {} outer {} sign {}", r.inner_margin, r.outer_margin, r.sign_margin);
        assert!(r.u_tilde.integrate().abs() < 1e-8);
        assert!(r.phi.integrate().abs() < 1e-8);
        assert!(r.sign_margin >= 0.0);

        // Weak form against nonnegative test fields.
        let g = gradient(&p, &r.u_sub).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let test = Field::random_smooth(p.grid(), &mut rng, 3, 1.0);
            let test = test.add_constant(-test.min() + rng.gen_range(0.0..1.0));
            assert!(g.dot(&test) <= 1e-8 * test.l1_norm() * p.scale());
        }
    }

    #[test]
    fn weak_lambda_fails_outside() {
        let p = u1_problem(0.1, 1e-3);
        let r = build_subsolution(&p, 2.0 * PI / 8.0).unwrap();
        assert!(!r.verified);
        assert!(r.outer_margin > 0.0);
    }

    #[test]
    fn limit_subsolution() {
        let p = u1_problem(40.0, 0.0);
        let r = build_subsolution(&p, 2.0 * PI / 8.0).unwrap();
        assert!(r.verified);
    }

    #[test]
    fn u_tilde_converges_at_second_order() {
        let p = u1_problem(40.0, 0.0);
        let delta = 2.0 * PI / 8.0;
        let base = build_subsolution(&p, delta).unwrap().u_tilde;
        let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| {
                let r = build_subsolution(&p.with_epsilon(e).unwrap(), delta).unwrap();
                (e.ln(), (&r.u_tilde - &base).norms().h2().ln())
            })
            .collect();
        let slope = least_squares_slope(&pts);
        assert!((slope - 2.0).abs() <= 0.1, "{slope}");
    }

    fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn probe_table_shape_and_threshold() {
        let p = u1_problem(40.0, 1e-3);
        let lambdas = [0.5, 2.0, 10.0, 40.0];
        let eps = [1e-3, 1e-2, 1e-1];
        let t = probe_parameters(&p, 2.0 * PI / 8.0, &lambdas, &eps).unwrap();
        assert_eq!(t.verified.len(), 4);
        assert!(t.verified.iter().all(|r| r.len() == 3));
        assert!(t.verified[0].iter().all(|v| !v));
        let l0 = t.lambda0.expect("feasible lambda");
        let i0 = lambdas.iter().position(|&l| l == l0).unwrap();
        assert!(t.verified[..i0].iter().all(|r| !r[0]));
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("lambda,0.001,0.01,0.1\n0.5,0,0,0\n"));
        assert!(probe_parameters(&p, 0.7, &[2.0, 1.0], &eps).is_err());
    }
}
