//! The energy `I_ε`, its L² gradient and related pointwise operators.
//!
//! ```text
//! I_ε(u) = ε²/2 ∫(Δu)² + ½∫|∇u|² + ελ∫f′(z) z|∇(σ+u)|² + λ²/2 ∫(f(z) − s)² + A∫u,
//! z = e^{σ+u} = w e^u.
//! ```
//!
//! The singular product `z|∇(σ+u)|²` is always assembled from the regular
//! background fields as `e^u (q + 2∇w·∇u + w|∇u|²)`, so vortex zeros are exact.
//! The gradient is the exact derivative of the discrete energy: the spectral
//! gradient and divergence are negative adjoints, and the Dirichlet term is
//! evaluated as `½⟨u, −Δu⟩`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Result, VortexError};
use crate::grid::{Field, Grid};
use crate::model::VortexModel;
use crate::operators::{divergence, gradient as spectral_gradient, laplacian};
use crate::singular::{build_sigma, SingularBackground};

/// Largest `u` admitted before `e^u` is considered an overflow.
pub const MAX_EXPONENT: f64 = 700.0;

/// Fine evaluation grid for 3/2-rule dealiasing of the nonlinear terms.
#[derive(Clone, Debug)]
struct Dealias {
    background: Arc<SingularBackground>,
}

/// λ, ε, model and background: everything that defines `I_ε`.
#[derive(Clone, Debug)]
pub struct Problem {
    model: VortexModel,
    background: Arc<SingularBackground>,
    lambda: f64,
    epsilon: f64,
    dealias: Option<Dealias>,
}

impl Problem {
    pub fn new(model: VortexModel, background: SingularBackground, lambda: f64, epsilon: f64) -> Result<Problem> {
        Problem::from_shared(model, Arc::new(background), lambda, epsilon)
    }

    pub fn from_shared(
        model: VortexModel,
        background: Arc<SingularBackground>,
        lambda: f64,
        epsilon: f64,
    ) -> Result<Problem> {
        check_parameters(lambda, epsilon)?;
        Ok(Problem { model, background, lambda, epsilon, dealias: None })
    }

    /// Evaluate the nonlinear terms on a grid 3/2 times finer. `u` is
    /// interpolated spectrally (dropping the Nyquist mode) and the fine-grid
    /// gradient is restricted back, which keeps the gradient exact for the
    /// dealiased energy.
    pub fn with_dealiasing(mut self) -> Result<Problem> {
        let n = self.grid().n();
        let fine_n = (3 * n).div_ceil(2);
        let fine_n = fine_n + fine_n % 2;
        let fine = Grid::new(fine_n, self.grid().length())?;
        let bg = build_sigma(&fine, self.background.vortices())?;
        self.dealias = Some(Dealias { background: Arc::new(bg) });
        Ok(self)
    }

    pub fn is_dealiased(&self) -> bool {
        self.dealias.is_some()
    }

    /// Same problem at another ε, sharing the background.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Problem> {
        check_parameters(self.lambda, epsilon)?;
        Ok(Problem { epsilon, ..self.clone() })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Problem> {
        check_parameters(lambda, self.epsilon)?;
        Ok(Problem { lambda, ..self.clone() })
    }

    pub fn grid(&self) -> &Grid {
        self.background.grid()
    }

    pub fn model(&self) -> &VortexModel {
        &self.model
    }

    pub fn background(&self) -> &SingularBackground {
        &self.background
    }

    pub fn shared_background(&self) -> Arc<SingularBackground> {
        self.background.clone()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn a(&self) -> f64 {
        self.background.a()
    }

    pub fn n(&self) -> u32 {
        self.background.n()
    }

    /// `1 + λ²`, the natural size of the gradient.
    pub fn scale(&self) -> f64 {
        1.0 + self.lambda * self.lambda
    }

    /// Default stationarity tolerance `1e-8 (1 + λ²)`.
    pub fn grad_tol(&self) -> f64 {
        1e-8 * self.scale()
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if !u.grid().same_as(self.grid()) {
            return Err(VortexError::GridMismatch(format!(
                "field on {:?}, problem on {:?}",
                u.grid(),
                self.grid()
            )));
        }
        let max_u = u.max();
        if !max_u.is_finite() || !u.is_finite() {
            return Err(VortexError::NonFinite("u"));
        }
        if max_u > MAX_EXPONENT {
            let max_sigma_plus_u = self.background.sigma.zip_map(u, |s, v| s + v).max();
            return Err(VortexError::Overflow { max_u, max_sigma_plus_u });
        }
        Ok(())
    }
}

fn check_parameters(lambda: f64, epsilon: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(VortexError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(VortexError::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

/// The five summands of `I_ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub biharmonic: f64,
    pub dirichlet: f64,
    pub cross: f64,
    pub potential: f64,
    pub linear: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn assemble(biharmonic: f64, dirichlet: f64, cross: f64, potential: f64, linear: f64) -> Self {
        EnergyBreakdown {
            biharmonic,
            dirichlet,
            cross,
            potential,
            linear,
            total: biharmonic + dirichlet + cross + potential + linear,
        }
    }

    /// `I₀` of the same field: the total without the ε-dependent terms.
    pub fn limit_total(&self) -> f64 {
        self.dirichlet + self.potential + self.linear
    }
}

/// Pointwise nonlinear quantities at `z = w e^u`.
struct Pointwise {
    eu: Vec<f64>,
    z: Vec<f64>,
    f: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    ux: Field,
    uy: Field,
    /// `z|∇(σ+u)|² = e^u (q + 2∇w·∇u + w|∇u|²)`.
    g: Vec<f64>,
}

fn pointwise(model: &VortexModel, bg: &SingularBackground, u: &Field) -> Pointwise {
    let len = u.values().len();
    let (ux, uy) = spectral_gradient(u);
    let mut eu = Vec::with_capacity(len);
    let mut z = Vec::with_capacity(len);
    let mut f = Vec::with_capacity(len);
    let mut f1 = Vec::with_capacity(len);
    let mut f2 = Vec::with_capacity(len);
    let mut g = Vec::with_capacity(len);
    let w = bg.w.values();
    let (gwx, gwy) = (bg.grad_w.0.values(), bg.grad_w.1.values());
    let q = bg.q.values();
    for i in 0..len {
        let e = u.values()[i].exp();
        let zi = w[i] * e;
        let (a, b, c) = model.eval(zi);
        let (dx, dy) = (ux.values()[i], uy.values()[i]);
        eu.push(e);
        z.push(zi);
        f.push(a);
        f1.push(b);
        f2.push(c);
        g.push(e * (q[i] + 2.0 * (gwx[i] * dx + gwy[i] * dy) + w[i] * (dx * dx + dy * dy)));
    }
    Pointwise { eu, z, f, f1, f2, ux, uy, g }
}

/// `a(u)` as `2∇·(f′ z∇(σ+u)) − (f″z + f′) z|∇(σ+u)|²`, using
/// `z∇(σ+u) = e^u (∇w + w∇u)`. Equal to the chain-rule form in the continuum,
/// and the form whose negative is exactly the cross-term gradient.
fn a_divergence_form(bg: &SingularBackground, pw: &Pointwise) -> Vec<f64> {
    let grid = pw.ux.grid();
    let len = pw.z.len();
    let w = bg.w.values();
    let (gwx, gwy) = (bg.grad_w.0.values(), bg.grad_w.1.values());
    let jx: Vec<f64> = (0..len)
        .map(|i| pw.f1[i] * pw.eu[i] * (gwx[i] + w[i] * pw.ux.values()[i]))
        .collect();
    let jy: Vec<f64> = (0..len)
        .map(|i| pw.f1[i] * pw.eu[i] * (gwy[i] + w[i] * pw.uy.values()[i]))
        .collect();
    let div = divergence(&Field::from_vec(grid, jx), &Field::from_vec(grid, jy));
    (0..len)
        .map(|i| 2.0 * div.values()[i] - (pw.f2[i] * pw.z[i] + pw.f1[i]) * pw.g[i])
        .collect()
}

/// Cross and potential energies and (optionally) their L² gradient, all on the grid of `u`.
fn nonlinear_terms(
    p: &Problem,
    bg: &SingularBackground,
    u: &Field,
    want_gradient: bool,
) -> Result<(f64, f64, Option<Field>)> {
    let grid = u.grid();
    let weight = grid.weight();
    let el = p.epsilon * p.lambda;
    let l2 = p.lambda * p.lambda;
    let s = p.model.s();
    let pw = pointwise(&p.model, bg, u);
    let len = pw.z.len();

    let mut cross = 0.0;
    let mut potential = 0.0;
    for i in 0..len {
        if el != 0.0 {
            cross += pw.f1[i] * pw.g[i];
        }
        potential += (pw.f[i] - s) * (pw.f[i] - s);
    }
    cross *= el * weight;
    potential *= 0.5 * l2 * weight;
    if !(cross.is_finite() && potential.is_finite()) {
        return Err(VortexError::NonFinite("energy"));
    }
    if !want_gradient {
        return Ok((cross, potential, None));
    }

    let mut grad: Vec<f64> = (0..len).map(|i| l2 * (pw.f[i] - s) * pw.f1[i] * pw.z[i]).collect();
    if el != 0.0 {
        let a_u = a_divergence_form(bg, &pw);
        for i in 0..len {
            grad[i] -= el * a_u[i];
        }
    }
    let grad = Field::from_vec(grid, grad);
    if !grad.is_finite() {
        return Err(VortexError::NonFinite("gradient"));
    }
    Ok((cross, potential, Some(grad)))
}

/// Spectral interpolation onto a finer grid, dropping the coarse Nyquist modes.
pub(crate) fn prolong(u: &Field, fine: &Grid) -> Field {
    let coarse = u.grid();
    let (n, m) = (coarse.n(), fine.n());
    let c = coarse.forward(u.values());
    let ratio = (m * m) as f64 / (n * n) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    for iy in 0..n {
        for ix in 0..n {
            if ix == n / 2 || iy == n / 2 {
                continue;
            }
            let fx = if ix < n / 2 { ix } else { m - (n - ix) };
            let fy = if iy < n / 2 { iy } else { m - (n - iy) };
            out[fy * m + fx] = c[iy * n + ix] * ratio;
        }
    }
    Field::from_vec(fine, fine.inverse_real(out))
}

/// L² adjoint of [`prolong`]: keep the coarse non-Nyquist modes.
pub(crate) fn restrict(g: &Field, coarse: &Grid) -> Field {
    let fine = g.grid();
    let (n, m) = (coarse.n(), fine.n());
    let c = fine.forward(g.values());
    let ratio = (n * n) as f64 / (m * m) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for iy in 0..n {
        for ix in 0..n {
            if ix == n / 2 || iy == n / 2 {
                continue;
            }
            let fx = if ix < n / 2 { ix } else { m - (n - ix) };
            let fy = if iy < n / 2 { iy } else { m - (n - iy) };
            out[iy * n + ix] = c[fy * m + fx] * ratio;
        }
    }
    Field::from_vec(coarse, coarse.inverse_real(out))
}

fn evaluate(p: &Problem, u: &Field, want_gradient: bool) -> Result<(EnergyBreakdown, Option<Field>)> {
    p.check_field(u)?;
    let eps2 = p.epsilon * p.epsilon;
    let spec = u.spectrum();
    let lap = spec.multiply_radial(|k2| -k2).into_field();
    let biharmonic = 0.5 * eps2 * lap.dot(&lap);
    let dirichlet = -0.5 * u.dot(&lap);
    let linear = p.a() * u.integrate();

    let (cross, potential, nl_grad) = match &p.dealias {
        None => nonlinear_terms(p, &p.background, u, want_gradient)?,
        Some(d) => {
            let fine_u = prolong(u, d.background.grid());
            let (c, pot, g) = nonlinear_terms(p, &d.background, &fine_u, want_gradient)?;
            (c, pot, g.map(|g| restrict(&g, p.grid())))
        }
    };
    let energy = EnergyBreakdown::assemble(biharmonic, dirichlet, cross, potential, linear);

    let grad = nl_grad.map(|nl| {
        // ε²Δ²u − Δu + A, applied in one spectral pass.
        let linear_part = spec.multiply_radial(|k2| eps2 * k2 * k2 + k2).into_field();
        let a = p.a();
        nl.zip_map(&linear_part, |x, y| x + y + a)
    });
    Ok((energy, grad))
}

pub fn energy(p: &Problem, u: &Field) -> Result<EnergyBreakdown> {
    evaluate(p, u, false).map(|(e, _)| e)
}

/// The field `g` with `⟨I_ε′(u), φ⟩ = ∫ g φ`.
pub fn gradient(p: &Problem, u: &Field) -> Result<Field> {
    energy_and_gradient(p, u).map(|(_, g)| g)
}

pub fn energy_and_gradient(p: &Problem, u: &Field) -> Result<(EnergyBreakdown, Field)> {
    let (e, g) = evaluate(p, u, true)?;
    Ok((e, g.expect("gradient requested")))
}

/// Strong form of the fourth-order equation, LHS − RHS:
///
/// `ε²Δ²u − Δu + ελ(f″z + f′) z|∇(σ+u)|² − 2ελ Δf(z) + λ² f′ z (f − s) + A`.
///
/// Unlike [`gradient`], `Δf(z)` is taken spectrally on the composite field, so
/// the two agree only up to the resolution of `f(z)`.
pub fn residual_fourth(p: &Problem, u: &Field) -> Result<Field> {
    p.check_field(u)?;
    let grid = p.grid();
    let eps2 = p.epsilon * p.epsilon;
    let el = p.epsilon * p.lambda;
    let l2 = p.lambda * p.lambda;
    let s = p.model.s();
    let pw = pointwise(&p.model, &p.background, u);
    let lap_f = laplacian(&Field::from_vec(grid, pw.f.clone()));
    let linear_part = u.spectrum().multiply_radial(|k2| eps2 * k2 * k2 + k2).into_field();
    let a = p.a();
    let values: Vec<f64> = (0..grid.len())
        .map(|i| {
            linear_part.values()[i]
                + el * ((pw.f2[i] * pw.z[i] + pw.f1[i]) * pw.g[i] - 2.0 * lap_f.values()[i])
                + l2 * pw.f1[i] * pw.z[i] * (pw.f[i] - s)
                + a
        })
        .collect();
    let out = Field::from_vec(grid, values);
    if !out.is_finite() {
        return Err(VortexError::NonFinite("residual"));
    }
    Ok(out)
}

/// `a(u) = (f″z + f′) z|∇(σ+u)|² + 2 f′ z Δ(σ+u)`, evaluated in the
/// divergence form that matches the discrete gradient: on the coarse grid
/// `ε²Δ²u − Δu − F(u)` is exactly [`gradient`].
pub fn a_operator(p: &Problem, u: &Field) -> Result<Field> {
    p.check_field(u)?;
    let pw = pointwise(&p.model, &p.background, u);
    let out = Field::from_vec(p.grid(), a_divergence_form(&p.background, &pw));
    if !out.is_finite() {
        return Err(VortexError::NonFinite("a(u)"));
    }
    Ok(out)
}

/// `F(u) = ελ a(u) + λ² f′ z (s − f) − A`, the right-hand side of
/// `ε²Δ²u − Δu = F(u)`.
pub fn nonlinear_source(p: &Problem, u: &Field) -> Result<Field> {
    let a_u = a_operator(p, u)?;
    let pw = pointwise(&p.model, &p.background, u);
    let el = p.epsilon * p.lambda;
    let l2 = p.lambda * p.lambda;
    let s = p.model.s();
    let a = p.a();
    let values = (0..u.values().len())
        .map(|i| el * a_u.values()[i] + l2 * pw.f1[i] * pw.z[i] * (s - pw.f[i]) - a)
        .collect();
    Ok(Field::from_vec(p.grid(), values))
}

/// `Δf(z)` taken spectrally minus its chain-rule expansion
/// `(f″z + f′) z|∇(σ+u)|² + f′ z Δ(σ+u)`.
pub fn chain_rule_defect(p: &Problem, u: &Field) -> Result<Field> {
    p.check_field(u)?;
    let pw = pointwise(&p.model, &p.background, u);
    let lap_f = laplacian(&Field::from_vec(p.grid(), pw.f.clone()));
    let lap_u = laplacian(u);
    let a = p.a();
    let values = (0..u.values().len())
        .map(|i| {
            lap_f.values()[i]
                - (pw.f2[i] * pw.z[i] + pw.f1[i]) * pw.g[i]
                - pw.f1[i] * pw.z[i] * (lap_u.values()[i] - a)
        })
        .collect();
    Ok(Field::from_vec(p.grid(), values))
}

/// Both sides of the integration-by-parts identity
///
/// ```text
/// ∫(f″z + f′) z|∇(σ+u)|² u + 2∫f′ z∇(σ+u)·∇u  =  ∫f′ z∇(σ+u)·∇u − ∫f′ z Δ(σ+u) u.
/// ```
pub fn identity_check(p: &Problem, u: &Field) -> Result<(f64, f64)> {
    p.check_field(u)?;
    let bg = &p.background;
    let pw = pointwise(&p.model, bg, u);
    let lap_u = laplacian(u);
    let a = p.a();
    let w = bg.w.values();
    let (gwx, gwy) = (bg.grad_w.0.values(), bg.grad_w.1.values());
    let mut first = 0.0;
    let mut flux = 0.0;
    let mut lap_term = 0.0;
    for i in 0..pw.z.len() {
        let (ux, uy) = (pw.ux.values()[i], pw.uy.values()[i]);
        let ui = u.values()[i];
        first += (pw.f2[i] * pw.z[i] + pw.f1[i]) * pw.g[i] * ui;
        // z∇(σ+u) = e^u(∇w + w∇u).
        let jx = pw.eu[i] * (gwx[i] + w[i] * ux);
        let jy = pw.eu[i] * (gwy[i] + w[i] * uy);
        flux += pw.f1[i] * (jx * ux + jy * uy);
        lap_term += pw.f1[i] * pw.z[i] * (lap_u.values()[i] - a) * ui;
    }
    let weight = p.grid().weight();
    let lhs = (first + 2.0 * flux) * weight;
    let rhs = (flux - lap_term) * weight;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singular::{Vortex, VortexSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem(n: usize, model: VortexModel, lambda: f64, eps: f64) -> Problem {
        let l = 2.0 * PI;
        let g = Grid::new(n, l).unwrap();
        let bg = build_sigma(&g, &VortexSet::single(l / 2.0, l / 2.0)).unwrap();
        Problem::new(model, bg, lambda, eps).unwrap()
    }

    fn random(grid: &Grid, seed: u64, amp: f64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::random_smooth(grid, &mut rng, 4, amp)
    }

    fn models() -> Vec<VortexModel> {
        vec![VortexModel::u1(), VortexModel::cp1(0.0).unwrap(), VortexModel::power(2.0, 1.0).unwrap()]
    }

    #[test]
    fn zero_field_energy_is_finite_and_positive() {
        let p = problem(128, VortexModel::u1(), 40.0, 1e-3);
        let e = energy(&p, &Field::zeros(p.grid())).unwrap();
        assert_eq!(e.biharmonic, 0.0);
        assert_eq!(e.dirichlet, 0.0);
        assert_eq!(e.linear, 0.0);
        assert!(e.cross > 0.0 && e.potential > 0.0 && e.total.is_finite());
        // Regression baseline: independent quadrature of the two surviving terms.
        let bg = p.background();
        let pot = 0.5 * 1600.0 * bg.w.map(|w| (w - 1.0) * (w - 1.0)).integrate();
        let cross = 1e-3 * 40.0 * bg.q.integrate();
        assert!((e.potential - pot).abs() < 1e-10 * pot);
        assert!((e.cross - cross).abs() < 1e-10 * cross);
    }

    #[test]
    fn lambda_scaling() {
        let p = problem(64, VortexModel::cp1(0.0).unwrap(), 3.0, 0.05);
        let q = p.with_lambda(6.0).unwrap();
        let u = random(p.grid(), 1, 0.5);
        let a = energy(&p, &u).unwrap();
        let b = energy(&q, &u).unwrap();
        assert!((b.potential - 4.0 * a.potential).abs() < 1e-12 * b.potential);
        assert!((b.cross - 2.0 * a.cross).abs() < 1e-12 * b.cross);
        assert_eq!(a.biharmonic, b.biharmonic);
        assert_eq!(a.dirichlet, b.dirichlet);
        assert_eq!(a.linear, b.linear);
    }

    #[test]
    fn epsilon_zero_degenerates_to_limit_functional() {
        let p = problem(64, VortexModel::u1(), 3.0, 0.0);
        let u = random(p.grid(), 2, 0.5);
        let e = energy(&p, &u).unwrap();
        assert_eq!(e.biharmonic, 0.0);
        assert_eq!(e.cross, 0.0);
        assert_eq!(e.total, e.limit_total());
        let pe = p.with_epsilon(0.1).unwrap();
        let e2 = energy(&pe, &u).unwrap();
        assert!(e2.total >= e2.limit_total());
        assert!((e2.limit_total() - e.total).abs() < 1e-12 * e.total.abs());
    }

    #[test]
    fn terms_are_nonnegative_and_sum() {
        for m in models() {
            let p = problem(64, m, 2.0, 0.1);
            let u = random(p.grid(), 3, 1.0);
            let e = energy(&p, &u).unwrap();
            assert!(e.biharmonic >= 0.0 && e.dirichlet >= 0.0 && e.cross >= 0.0 && e.potential >= 0.0);
            assert_eq!(e.total, e.biharmonic + e.dirichlet + e.cross + e.potential + e.linear);
        }
    }

    fn fd_order(p: &Problem, u: &Field, phi: &Field) -> (f64, f64) {
        let g = gradient(p, u).unwrap();
        let exact = g.dot(phi);
        let errs: Vec<f64> = [1e-3, 1e-4]
            .iter()
            .map(|&h| {
                let ep = energy(p, &u.axpy(h, phi)).unwrap().total;
                let em = energy(p, &u.axpy(-h, phi)).unwrap().total;
                ((ep - em) / (2.0 * h) - exact).abs()
            })
            .collect();
        ((errs[0] / errs[1]).log10(), errs[1] / exact.abs().max(1.0))
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (k, m) in models().into_iter().enumerate() {
            for eps in [0.0, 1e-2] {
                let p = problem(64, m.clone(), 3.0, eps);
                let u = random(p.grid(), 10 + k as u64, 0.5);
                let phi = random(p.grid(), 20 + k as u64, 1.0);
                let (order, rel) = fd_order(&p, &u, &phi);
                assert!(order >= 1.9, "{} eps={eps}: order {order}", m.name());
                assert!(rel < 1e-6, "{} eps={eps}: rel {rel}", m.name());
            }
        }
    }

    #[test]
    fn dealiased_gradient_is_consistent() {
        let p = problem(64, VortexModel::cp1(0.2).unwrap(), 3.0, 1e-2).with_dealiasing().unwrap();
        assert_eq!(p.dealias.as_ref().unwrap().background.grid().n(), 96);
        let u = random(p.grid(), 4, 0.5);
        let phi = random(p.grid(), 5, 1.0);
        let (order, _) = fd_order(&p, &u, &phi);
        assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn prolong_restrict_adjoint() {
        let coarse = Grid::new(32, 2.0).unwrap();
        let fine = Grid::new(48, 2.0).unwrap();
        let u = random(&coarse, 6, 1.0);
        let g = random(&fine, 7, 1.0);
        let lhs = prolong(&u, &fine).dot(&g);
        let rhs = u.dot(&restrict(&g, &coarse));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        // Band-limited data survive the round trip.
        let back = restrict(&prolong(&u, &fine), &coarse);
        assert!((&back - &u).linf_norm() < 1e-12);
    }

    #[test]
    fn residual_agrees_with_gradient_on_resolved_fields() {
        for m in models() {
            let p = problem(128, m.clone(), 5.0, 0.02);
            for seed in 0..5 {
                let u = random(p.grid(), 30 + seed, 0.5);
                let g = gradient(&p, &u).unwrap();
                let r = residual_fourth(&p, &u).unwrap();
                let rel = (&g - &r).l2_norm() / g.l2_norm();
                assert!(rel < 1e-10, "{}: {rel:e}", m.name());
            }
        }
    }

    #[test]
    fn source_form_reproduces_gradient() {
        for m in models() {
            let p = problem(128, m.clone(), 5.0, 0.02);
            let u = random(p.grid(), 60, 0.5);
            let g = gradient(&p, &u).unwrap();
            let f = nonlinear_source(&p, &u).unwrap();
            let lhs = u.spectrum().multiply_radial(|k2| 4e-4 * k2 * k2 + k2).into_field();
            assert!((&(&lhs - &f) - &g).linf_norm() < 1e-10 * g.linf_norm(), "{}", m.name());
            // Chain-rule form of a(u) on a resolved field.
            let bg = p.background();
            let (ux, uy) = spectral_gradient(&u);
            let lap = laplacian(&u);
            let a_u = a_operator(&p, &u).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..p.grid().len() {
                let e = u.values()[i].exp();
                let z = bg.w.values()[i] * e;
                let (_, f1, f2) = p.model().eval(z);
                let gs = e * (bg.q.values()[i]
                    + 2.0 * (bg.grad_w.0.values()[i] * ux.values()[i] + bg.grad_w.1.values()[i] * uy.values()[i])
                    + bg.w.values()[i] * (ux.values()[i].powi(2) + uy.values()[i].powi(2)));
                let chain = (f2 * z + f1) * gs + 2.0 * f1 * z * (lap.values()[i] - p.a());
                worst = worst.max((chain - a_u.values()[i]).abs());
            }
            assert!(worst < 1e-6 * a_u.linf_norm(), "{}: {worst:e}", m.name());
        }
    }

    #[test]
    fn mean_of_gradient_matches_constant_test_direction() {
        let p = problem(64, VortexModel::cp1(0.0).unwrap(), 4.0, 0.05);
        let u = random(p.grid(), 8, 0.5);
        let g = gradient(&p, &u).unwrap();
        let bg = p.background();
        let model = p.model();
        let (el, l2) = (p.epsilon() * p.lambda(), p.lambda() * p.lambda());
        // ⟨I′(u), 1⟩ = ελ∫(f″z + f′) z|∇(σ+u)|² + λ²∫f′z(f − s) + A|M|.
        let (ux, uy) = spectral_gradient(&u);
        let mut expect = 0.0;
        for i in 0..p.grid().len() {
            let e = u.values()[i].exp();
            let z = bg.w.values()[i] * e;
            let (f, f1, f2) = model.eval(z);
            let gs = e * (bg.q.values()[i]
                + 2.0 * (bg.grad_w.0.values()[i] * ux.values()[i] + bg.grad_w.1.values()[i] * uy.values()[i])
                + bg.w.values()[i] * (ux.values()[i].powi(2) + uy.values()[i].powi(2)));
            expect += el * (f2 * z + f1) * gs + l2 * f1 * z * (f - model.s());
        }
        expect = expect * p.grid().weight() + p.a() * p.grid().area();
        assert!((g.integrate() - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }

    #[test]
    fn limit_gradient_matches_second_order_equation() {
        let p = problem(64, VortexModel::u1(), 3.0, 0.0);
        let u = random(p.grid(), 9, 0.5);
        let g = gradient(&p, &u).unwrap();
        let bg = p.background();
        let lap = laplacian(&u);
        // −Δu − λ² f′z(s − f) + A with f(t) = t, s = 1, λ² = 9.
        let expect: Vec<f64> = (0..p.grid().len())
            .map(|i| {
                let z = bg.w.values()[i] * u.values()[i].exp();
                -lap.values()[i] - 9.0 * z * (1.0 - z) + p.a()
            })
            .collect();
        let expect = Field::new(p.grid(), expect).unwrap();
        assert!((&g - &expect).linf_norm() < 1e-10 * expect.linf_norm());
    }

    #[test]
    fn integration_by_parts_identity() {
        for m in models() {
            let p = problem(128, m.clone(), 5.0, 0.01);
            for seed in 0..5 {
                let u = random(p.grid(), 40 + seed, 0.5);
                let (lhs, rhs) = identity_check(&p, &u).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-7 * (lhs.abs() + rhs.abs() + 1.0),
                    "{}: {lhs} vs {rhs}",
                    m.name()
                );
            }
            let (lhs, rhs) = identity_check(&p, &Field::zeros(p.grid())).unwrap();
            assert_eq!((lhs, rhs), (0.0, 0.0));
        }
    }

    #[test]
    fn chain_rule_defect_is_small_away_from_vortices() {
        let p = problem(128, VortexModel::cp1(0.0).unwrap(), 5.0, 0.01);
        let u = random(p.grid(), 50, 0.5);
        let d = chain_rule_defect(&p, &u).unwrap();
        let lap_f_scale = {
            let z = p.background().w.zip_map(&u, |w, v| w * v.exp());
            laplacian(&z.map(|t| p.model().f(t))).linf_norm()
        };
        assert!(d.linf_norm() < 1e-6 * lap_f_scale.max(1.0), "{}", d.linf_norm());
    }

    #[test]
    fn constants_drive_energy_to_minus_infinity() {
        let p = problem(64, VortexModel::u1(), 3.0, 1e-3);
        let e = |c: f64| energy(&p, &Field::constant(p.grid(), c)).unwrap().total;
        assert!(e(-40.0) < e(-20.0) && e(-80.0) < e(-40.0));
    }

    #[test]
    fn overflow_and_mismatch_are_reported() {
        let p = problem(64, VortexModel::u1(), 3.0, 1e-3);
        let err = energy(&p, &Field::constant(p.grid(), 800.0)).unwrap_err();
        assert!(matches!(err, VortexError::Overflow { .. }), "{err}");
        let other = Grid::new(32, 2.0 * PI).unwrap();
        assert!(energy(&p, &Field::zeros(&other)).is_err());
        assert!(p.with_lambda(0.0).is_err());
        assert!(p.with_epsilon(-1.0).is_err());
    }

    #[test]
    fn power_below_one_is_rejected_at_grid_vortex() {
        // f′(0) = ∞ multiplies the exact zero of z at an on-grid vortex.
        let p = problem(64, VortexModel::power(0.5, 1.0).unwrap(), 3.0, 1e-2);
        assert!(energy(&p, &Field::zeros(p.grid())).is_err());
        let l = 2.0 * PI;
        let g = Grid::new(64, l).unwrap();
        let bg = build_sigma(&g, &VortexSet::new(vec![Vortex::new(1.01, 2.02, 1)]).unwrap()).unwrap();
        let p = Problem::new(VortexModel::power(0.5, 1.0).unwrap(), bg, 3.0, 1e-2).unwrap();
        assert!(energy(&p, &Field::zeros(p.grid())).is_ok());
    }
}
