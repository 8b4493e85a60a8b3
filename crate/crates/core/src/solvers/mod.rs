//! Critical-point solvers for `I_ε`.
//!
//! * [`minimize_constrained`]: projected preconditioned descent over
//!   `{u ≥ u̲}`, finished by a Newton–Krylov polish once the iterate is interior.
//! * [`mountain_pass`]: a discretized path from the local minimum to a
//!   far lower point, deformed until its highest node is a critical point.
//! * [`newton_refine`]: matrix-free Newton–Krylov on the gradient.
//! * [`comparison_diagnostic`] and [`continuation`]: post-solve checks.

mod comparison;
mod continuation;
mod descent;
mod krylov;
mod mountain;
mod newton;

pub use comparison::{comparison_diagnostic, ComparisonReport};
pub use continuation::{continuation, ContinuationReport, ContinuationStep};
pub use descent::{minimize_constrained, minimize_constrained_from};
pub use krylov::{gmres, GmresOutcome};
pub use mountain::mountain_pass;
pub use newton::{hessian_vector, newton_refine, NewtonOutcome};

use crate::error::{Result, VortexError};
use crate::functional::{EnergyBreakdown, Problem};
use crate::grid::Field;
use crate::operators::SpectralMultiplier;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Iteration cap for the projected descent.
    pub max_iters: usize,
    /// Stationarity tolerance on `‖gradient‖₂`; `None` means `1e-8 (1 + λ²)`.
    pub grad_tol: Option<f64>,
    /// Hand over to Newton when the projected gradient is below `newton_switch · (1 + λ²)`.
    pub newton_switch: f64,
    pub newton_max_iters: usize,
    /// Relative residual target of the inner Krylov solves.
    pub krylov_tol: f64,
    pub krylov_restart: usize,
    pub krylov_max_iters: usize,
    /// Relative finite-difference step for Hessian-vector products.
    pub fd_step: f64,
    /// Use the spectral preconditioner `(ε²Δ² − Δ + c)⁻¹`.
    pub preconditioner: bool,
    /// Initial offset of the descent iterate above the subsolution.
    pub initial_offset: f64,
    /// Number of path nodes for the mountain pass (odd, at least 11).
    pub path_nodes: usize,
    /// Cap on path deformation steps.
    pub path_iters: usize,
    /// Starting far-endpoint shift (negative); doubled until the energy drops enough.
    pub far_shift: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            grad_tol: None,
            newton_switch: 1e-3,
            newton_max_iters: 40,
            krylov_tol: 1e-3,
            krylov_restart: 50,
            krylov_max_iters: 400,
            fd_step: 1e-6,
            preconditioner: true,
            initial_offset: 0.5,
            path_nodes: 41,
            path_iters: 4000,
            far_shift: -40.0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.newton_switch, self.krylov_tol, self.fd_step];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(VortexError::InvalidParameter("solver tolerances must be positive".into()));
        }
        if let Some(t) = self.grad_tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(VortexError::InvalidParameter(format!("grad_tol must be positive, got {t}")));
            }
        }
        if self.path_nodes < 11 || self.path_nodes % 2 == 0 {
            return Err(VortexError::InvalidParameter(format!(
                "path_nodes must be odd and at least 11, got {}",
                self.path_nodes
            )));
        }
        if !(self.far_shift < 0.0 && self.far_shift.is_finite()) {
            return Err(VortexError::InvalidParameter("far_shift must be negative".into()));
        }
        if self.krylov_restart == 0 || self.max_iters == 0 {
            return Err(VortexError::InvalidParameter("iteration limits must be positive".into()));
        }
        Ok(())
    }

    pub fn tolerance(&self, p: &Problem) -> f64 {
        self.grad_tol.unwrap_or_else(|| p.grad_tol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveKind {
    LocalMin,
    MountainPass,
}

impl SolveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveKind::LocalMin => "local_min",
            SolveKind::MountainPass => "mountain_pass",
        }
    }
}

/// One row of an iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    /// `min(u − u̲)`; NaN where no obstacle applies.
    pub min_gap: f64,
    pub contact_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub u: Field,
    pub energy: EnergyBreakdown,
    pub grad_norm: f64,
    pub grad_tol: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kind: SolveKind,
    /// `min(u − u̲)` for local minima.
    pub min_gap: Option<f64>,
    /// Energies along the final path for mountain-pass solves.
    pub path_profile: Option<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    /// `‖gradient‖₂` before and after each Newton step.
    pub newton_history: Vec<f64>,
}

impl SolveOutcome {
    /// Trace as CSV: iter, energy, grad_norm, min_gap, contact_fraction.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,energy,grad_norm,min_gap,contact_fraction\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}\n",
                r.iter, r.energy, r.grad_norm, r.min_gap, r.contact_fraction
            ));
        }
        out
    }
}

/// Preconditioner shift: the curvature of the potential at `u`, at least 1.
pub(crate) fn potential_shift(p: &Problem, u: &Field) -> f64 {
    let bg = p.background();
    let model = p.model();
    let l2 = p.lambda() * p.lambda();
    let mean = bg
        .w
        .zip_map(u, |w, v| {
            let z = w * v.exp();
            let (_, f1, _) = model.eval(z);
            let fz = f1 * z;
            if fz.is_finite() {
                fz * fz
            } else {
                0.0
            }
        })
        .mean();
    (l2 * mean).max(1.0)
}

pub(crate) fn preconditioner(p: &Problem, opts: &SolveOptions, shift: f64) -> Option<SpectralMultiplier> {
    opts.preconditioner
        .then(|| SpectralMultiplier::preconditioner(p.grid(), p.epsilon(), shift))
}

pub(crate) fn apply_precond(m: &Option<SpectralMultiplier>, g: &Field) -> Field {
    match m {
        Some(m) => m.apply(g),
        None => g.clone(),
    }
}
