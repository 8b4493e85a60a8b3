//! Post-solve check of the smoothed comparison inequality.
//!
//! With `F = F_ε(u)`, a solution satisfies `−Δu = G_ε ∗ F` exactly. The
//! comparison argument uses the inequality `−Δu ≥ G_ε ∗ F` together with the
//! auxiliary field `w_ε = (1 − Δ)⁻¹(G_ε ∗ F + u)`, which must stay above `u̲`.

use crate::error::Result;
use crate::functional::{nonlinear_source, Problem};
use crate::grid::Field;
use crate::operators::{green_eps, laplacian, SpectralMultiplier};

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `max(G_ε ∗ F − (−Δu))`; the inequality holds when this is ≤ the tolerance.
    pub inequality_residual: f64,
    /// `‖−Δu − G_ε ∗ F‖₂`.
    pub equation_residual: f64,
    /// `min(u − u̲)`.
    pub min_gap: f64,
    /// `min(w_ε − u̲)`.
    pub min_w_gap: f64,
    pub tolerance: f64,
}

impl ComparisonReport {
    pub fn passes(&self) -> bool {
        self.inequality_residual <= self.tolerance && self.min_gap > 0.0 && self.min_w_gap > -self.tolerance
    }
}

/// `tol` bounds the pointwise inequality residual.
pub fn comparison_diagnostic(p: &Problem, u: &Field, u_sub: &Field, tol: f64) -> Result<ComparisonReport> {
    let f = nonlinear_source(p, u)?;
    let gf = green_eps(&f, p.epsilon())?;
    let neg_lap = -&laplacian(u);
    let diff = &gf - &neg_lap;
    let helmholtz = SpectralMultiplier::radial(p.grid(), |k2| 1.0 / (1.0 + k2));
    let w = helmholtz.apply(&(&gf + u));
    Ok(ComparisonReport {
        inequality_residual: diff.max(),
        equation_residual: diff.l2_norm(),
        min_gap: u.zip_map(u_sub, |a, b| a - b).min(),
        min_w_gap: w.zip_map(u_sub, |a, b| a - b).min(),
        tolerance: tol,
    })
}
