//! The original second-order system behind the fourth-order equation:
//!
//! ```text
//! −Δu = ε⁻¹λ (v − f(z)) − A,
//! −Δv = ε⁻¹ [λ f′(z) z (s − v) − ε⁻¹ (v − f(z))],       z = e^{σ+u},
//! ```
//!
//! with `v = −ελ⁻¹Δu + ελ⁻¹A + f(z)`. Eliminating `v` gives the fourth-order
//! equation, so a critical point of `I_ε` yields a solution pair.

use crate::error::{Result, VortexError};
use crate::functional::Problem;
use crate::grid::Field;
use crate::operators::laplacian;

#[derive(Clone, Debug)]
pub struct SystemPair {
    pub u: Field,
    pub v: Field,
    pub residual_a: Field,
    pub residual_b: Field,
    /// `ε² · residual_b`, the ε-uniform form of the second residual.
    pub residual_b_scaled: Field,
    pub flux: f64,
}

impl SystemPair {
    /// `|flux − 4πn| / 4πn`.
    pub fn flux_error(&self, p: &Problem) -> f64 {
        let target = 4.0 * std::f64::consts::PI * p.n() as f64;
        (self.flux - target).abs() / target
    }
}

fn f_of_z(p: &Problem, u: &Field) -> Field {
    let model = p.model();
    p.background().w.zip_map(u, |w, x| model.f(w * x.exp()))
}

fn require_positive_epsilon(p: &Problem) -> Result<()> {
    if p.epsilon() > 0.0 {
        Ok(())
    } else {
        Err(VortexError::InvalidParameter("the second-order system needs epsilon > 0".into()))
    }
}

/// `v = −ελ⁻¹Δu + ελ⁻¹A + f(e^{σ+u})`; at ε = 0 this is `f(e^{σ+u})`.
pub fn recover_v(p: &Problem, u: &Field) -> Field {
    let c = p.epsilon() / p.lambda();
    let lap = laplacian(u);
    let a = p.a();
    f_of_z(p, u).zip_map(&lap, |f, l| f + c * (a - l))
}

/// Raw residuals `(ra, rb)` of the two equations.
pub fn system_residual(p: &Problem, u: &Field, v: &Field) -> Result<(Field, Field)> {
    require_positive_epsilon(p)?;
    let (eps, lambda, a, s) = (p.epsilon(), p.lambda(), p.a(), p.model().s());
    let model = p.model();
    let w = &p.background().w;
    let lap_u = laplacian(u);
    let lap_v = laplacian(v);
    let n = p.grid().len();
    let mut ra = Vec::with_capacity(n);
    let mut rb = Vec::with_capacity(n);
    for i in 0..n {
        let z = w.values()[i] * u.values()[i].exp();
        let (f, f1, _) = model.eval(z);
        let vi = v.values()[i];
        ra.push(-lap_u.values()[i] - lambda / eps * (vi - f) + a);
        rb.push(-lap_v.values()[i] - (lambda * f1 * z * (s - vi) - (vi - f) / eps) / eps);
    }
    let ra = Field::new(p.grid(), ra).map_err(|_| VortexError::NonFinite("system residual"))?;
    let rb = Field::new(p.grid(), rb).map_err(|_| VortexError::NonFinite("system residual"))?;
    Ok((ra, rb))
}

/// `∫ ε⁻¹λ (v − f(e^{σ+u}))`, which equals `4πn` at a solution.
pub fn flux(p: &Problem, u: &Field, v: &Field) -> Result<f64> {
    require_positive_epsilon(p)?;
    let c = p.lambda() / p.epsilon();
    Ok(v.zip_map(&f_of_z(p, u), |vi, f| c * (vi - f)).integrate())
}

/// Recover `v` from `u` and evaluate both residuals and the flux.
pub fn certify(p: &Problem, u: &Field) -> Result<SystemPair> {
    let v = recover_v(p, u);
    let (residual_a, residual_b) = system_residual(p, u, &v)?;
    let eps2 = p.epsilon() * p.epsilon();
    let residual_b_scaled = residual_b.scale(eps2);
    let flux = flux(p, u, &v)?;
    Ok(SystemPair { u: u.clone(), v, residual_a, residual_b, residual_b_scaled, flux })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::residual_fourth;
    use crate::grid::Grid;
    use crate::model::VortexModel;
    use crate::singular::{build_sigma, SingularBackground, Vortex, VortexSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem(vortices: VortexSet, model: VortexModel, lambda: f64, eps: f64) -> Problem {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        Problem::new(model, build_sigma(&g, &vortices).unwrap(), lambda, eps).unwrap()
    }

    fn random(p: &Problem, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::random_smooth(p.grid(), &mut rng, 4, 0.5)
    }

    #[test]
    fn constant_u_gives_closed_form_v() {
        let p = problem(VortexSet::single(PI, PI), VortexModel::u1(), 4.0, 0.1);
        let u = Field::constant(p.grid(), -0.3);
        let v = recover_v(&p, &u);
        let bg = p.background();
        for i in 0..p.grid().len() {
            let expect = 0.1 / 4.0 * p.a() + bg.w.values()[i] * (-0.3f64).exp();
            assert!((v.values()[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn epsilon_zero_degenerates() {
        let p = problem(VortexSet::single(PI, PI), VortexModel::cp1(0.0).unwrap(), 4.0, 0.0);
        let u = random(&p, 1);
        let v = recover_v(&p, &u);
        let f = p.background().w.zip_map(&u, |w, x| p.model().f(w * x.exp()));
        assert_eq!(v.values(), f.values());
        assert!(system_residual(&p, &u, &v).is_err());
    }

    #[test]
    fn first_equation_holds_by_construction_and_flux_is_quantized() {
        for vs in [
            VortexSet::single(PI, PI),
            VortexSet::new(vec![Vortex::new(1.0, 1.0, 1), Vortex::new(4.0, 4.0, 1)]).unwrap(),
            VortexSet::new(vec![Vortex::new(2.0, 3.0, 2)]).unwrap(),
        ] {
            let p = problem(vs, VortexModel::u1(), 5.0, 0.05);
            let u = random(&p, 2);
            let pair = certify(&p, &u).unwrap();
            let scale = laplacian(&u).linf_norm() + p.a();
            assert!(pair.residual_a.linf_norm() < 1e-12 * scale, "{}", pair.residual_a.linf_norm());
            assert!(pair.flux_error(&p) < 1e-12, "{}", pair.flux);
        }
    }

    #[test]
    fn scaled_second_residual_eliminates_v() {
        // With v recovered from u, (λ/ε) ε² rb equals
        // ε²Δ²u − Δu + A − ελΔf + ελ f′z(A − Δu) − λ² f′z(s − f).
        let (lambda, eps) = (3.0, 0.05);
        let p = problem(VortexSet::single(PI, PI), VortexModel::cp1(0.0).unwrap(), lambda, eps);
        let u = random(&p, 3);
        let pair = certify(&p, &u).unwrap();
        let w = &p.background().w;
        let z = w.zip_map(&u, |w, x| w * x.exp());
        let lap_f = laplacian(&z.map(|t| p.model().f(t)));
        let lap_u = laplacian(&u);
        let bilap = laplacian(&lap_u);
        let a = p.a();
        let expect: Vec<f64> = (0..p.grid().len())
            .map(|i| {
                let (f, f1, _) = p.model().eval(z.values()[i]);
                let fz = f1 * z.values()[i];
                eps * eps * bilap.values()[i] - lap_u.values()[i] + a - eps * lambda * lap_f.values()[i]
                    + eps * lambda * fz * (a - lap_u.values()[i])
                    - lambda * lambda * fz * (p.model().s() - f)
            })
            .collect();
        let expect = Field::new(p.grid(), expect).unwrap();
        let got = pair.residual_b_scaled.scale(lambda / eps);
        assert!((&got - &expect).linf_norm() < 1e-10 * expect.linf_norm());
        // Not a solution, so the residual is far from zero.
        assert!(pair.residual_b_scaled.l2_norm() > 1e-3);
        // On a resolved field this is the fourth-order residual.
        let r4 = residual_fourth(&p, &u).unwrap();
        assert!((&got - &r4).l2_norm() < 1e-3 * r4.l2_norm());
    }

    #[test]
    fn vortex_free_constant_solution() {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        for model in [VortexModel::u1(), VortexModel::cp1(0.3).unwrap(), VortexModel::power(2.0, 0.5).unwrap()] {
            let p = Problem::new(model.clone(), SingularBackground::vortex_free(&g), 2.0, 0.1).unwrap();
            let c = model.inverse(model.s()).unwrap().ln();
            let u = Field::constant(&g, c);
            let pair = certify(&p, &u).unwrap();
            assert!((&pair.v - &Field::constant(&g, model.s())).linf_norm() < 1e-14);
            assert!(pair.residual_a.linf_norm() < 1e-12);
            assert!(pair.residual_b.linf_norm() < 1e-12, "{}", model.name());
        }
    }
}
