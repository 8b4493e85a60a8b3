//! Spectral linear operators on the torus.
//!
//! Every operator here is a Fourier multiplier. Even-order symbols keep the
//! Nyquist mode; first derivatives drop it so that the discrete gradient and
//! divergence are exact negative adjoints of each other.

use num_complex::Complex64;

use crate::error::{Result, VortexError};
use crate::grid::{Field, Grid};

/// Relative tolerance for classifying data as mean-zero.
pub const MEAN_ZERO_TOL: f64 = 1e-10;

/// A real Fourier multiplier sampled on the grid's wavenumber lattice.
#[derive(Clone, Debug)]
pub struct SpectralMultiplier {
    grid: Grid,
    symbol: Vec<f64>,
}

impl SpectralMultiplier {
    /// Build from a function of `|k|²`.
    pub fn radial<F: Fn(f64) -> f64>(grid: &Grid, symbol: F) -> SpectralMultiplier {
        let n = grid.n();
        let k = grid.wavenumbers();
        let symbol = (0..grid.len())
            .map(|idx| {
                let kx = k[idx % n];
                let ky = k[idx / n];
                symbol(kx * kx + ky * ky)
            })
            .collect();
        SpectralMultiplier { grid: grid.clone(), symbol }
    }

    /// −Δ, symbol `|k|²`.
    pub fn neg_laplacian(grid: &Grid) -> SpectralMultiplier {
        SpectralMultiplier::radial(grid, |k2| k2)
    }

    /// ε²Δ² − Δ, symbol `ε²|k|⁴ + |k|²`.
    pub fn fourth_order(grid: &Grid, eps: f64) -> SpectralMultiplier {
        SpectralMultiplier::radial(grid, |k2| eps * eps * k2 * k2 + k2)
    }

    /// G_ε = (−ε²Δ + 1)⁻¹.
    pub fn green(grid: &Grid, eps: f64) -> SpectralMultiplier {
        SpectralMultiplier::radial(grid, |k2| 1.0 / (1.0 + eps * eps * k2))
    }

    /// (ε²Δ² − Δ + shift)⁻¹, the solver preconditioner.
    pub fn preconditioner(grid: &Grid, eps: f64, shift: f64) -> SpectralMultiplier {
        SpectralMultiplier::radial(grid, |k2| 1.0 / (eps * eps * k2 * k2 + k2 + shift))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply(&self, f: &Field) -> Field {
        debug_assert!(self.grid.same_as(f.grid()));
        let mut coeffs = self.grid.forward(f.values());
        for (c, m) in coeffs.iter_mut().zip(&self.symbol) {
            *c *= *m;
        }
        Field::from_vec(&self.grid, self.grid.inverse_real(coeffs))
    }
}

fn apply_radial<F: Fn(f64) -> f64>(f: &Field, symbol: F) -> Field {
    f.spectrum().multiply_radial(symbol).into_field()
}

/// Spectral Laplacian.
pub fn laplacian(f: &Field) -> Field {
    apply_radial(f, |k2| -k2)
}

/// Spectral bi-Laplacian Δ².
pub fn bilaplacian(f: &Field) -> Field {
    apply_radial(f, |k2| k2 * k2)
}

/// G_ε f = (−ε²Δ + 1)⁻¹ f. ε = 0 is the identity.
pub fn green_eps(f: &Field, eps: f64) -> Result<Field> {
    check_eps(eps)?;
    if eps == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_radial(f, |k2| 1.0 / (1.0 + eps * eps * k2)))
}

/// Fails unless `|mean f| ≤ 1e-10 ‖f‖₂`.
pub fn check_mean_zero(f: &Field) -> Result<()> {
    let mean = f.mean();
    let limit = MEAN_ZERO_TOL * f.l2_norm();
    if mean.abs() > limit {
        return Err(VortexError::NonzeroMean { mean, limit });
    }
    Ok(())
}

/// The mean-zero solution `g` of `−Δg = f`.
pub fn inv_neg_laplacian(f: &Field) -> Result<Field> {
    check_mean_zero(f)?;
    Ok(apply_radial(f, |k2| if k2 == 0.0 { 0.0 } else { 1.0 / k2 }))
}

/// The mean-zero solution of `ε²Δ²ũ − Δũ = φ`, via the factorization
/// `ε²Δ² − Δ = (−ε²Δ + 1)(−Δ)`.
pub fn solve_fourth_linear(phi: &Field, eps: f64) -> Result<Field> {
    check_eps(eps)?;
    inv_neg_laplacian(&green_eps(phi, eps)?)
}

/// Spectral gradient `(∂ₓf, ∂ᵧf)`.
pub fn gradient(f: &Field) -> (Field, Field) {
    let spec = f.spectrum();
    (spec.derivative(0).into_field(), spec.derivative(1).into_field())
}

/// Spectral divergence `∂ₓa + ∂ᵧb`; the negative adjoint of [`gradient`].
pub fn divergence(a: &Field, b: &Field) -> Field {
    let grid = a.grid();
    let n = grid.n();
    let k = grid.odd_wavenumbers();
    let ca = grid.forward(a.values());
    let cb = grid.forward(b.values());
    let coeffs: Vec<Complex64> = ca
        .iter()
        .zip(&cb)
        .enumerate()
        .map(|(idx, (x, y))| Complex64::new(0.0, k[idx % n]) * x + Complex64::new(0.0, k[idx / n]) * y)
        .collect();
    Field::from_vec(grid, grid.inverse_real(coeffs))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(VortexError::InvalidParameter(format!("epsilon must be >= 0, got {eps}")));
    }
    Ok(())
}
