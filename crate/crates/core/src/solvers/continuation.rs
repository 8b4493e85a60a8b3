//! ε-continuation towards the second-order limit.
//!
//! The limit problem (ε = 0) is solved first from its own subsolution. Then
//! each ε of a decreasing schedule is solved warm-started from the previous
//! solution, and compared with the limit.

use super::descent::{minimize_constrained, minimize_constrained_from};
use super::{SolveOptions, SolveOutcome};
use crate::error::{Result, VortexError};
use crate::functional::{EnergyBreakdown, Problem};
use crate::subsolution::build_subsolution;

#[derive(Clone, Debug)]
pub struct ContinuationStep {
    pub epsilon: f64,
    pub energy: EnergyBreakdown,
    /// `ε ‖Δu_ε‖₂`.
    pub eps_laplacian: f64,
    /// `‖u_ε − u₀‖_{H¹}`.
    pub h1_distance: f64,
    /// `‖ũ_ε − ũ₀‖_{H²}` for the subsolution building blocks.
    pub subsolution_h2_distance: f64,
    /// `I_ε(u_ε) − I₀(u₀)`.
    pub energy_gap: f64,
    pub subsolution_verified: bool,
    pub outcome: SolveOutcome,
}

#[derive(Clone, Debug)]
pub struct ContinuationReport {
    pub limit: SolveOutcome,
    pub limit_subsolution_verified: bool,
    pub steps: Vec<ContinuationStep>,
}

impl ContinuationReport {
    /// Whether `values` decreases along the schedule, allowing each step to rise
    /// by at most `wiggle` relative to its predecessor.
    pub fn decreasing(values: &[f64], wiggle: f64) -> bool {
        values.windows(2).all(|w| w[1] <= w[0] * (1.0 + wiggle))
    }

    pub fn eps_laplacians(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.eps_laplacian).collect()
    }

    pub fn cross_terms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.energy.cross).collect()
    }

    /// Least-squares slope of `log ‖ũ_ε − ũ₀‖_{H²}` against `log ε`.
    pub fn subsolution_slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .steps
            .iter()
            .map(|s| (s.epsilon.ln(), s.subsolution_h2_distance.ln()))
            .collect();
        loglog_slope(&pts)
    }

    /// `|I_ε(u_ε) − I₀(u₀)| / |I₀(u₀)|` at the smallest ε.
    pub fn final_relative_energy_gap(&self) -> f64 {
        let last = self.steps.last().expect("non-empty schedule");
        last.energy_gap.abs() / self.limit.energy.total.abs().max(f64::MIN_POSITIVE)
    }

    pub fn all_converged(&self) -> bool {
        self.limit.converged && self.steps.iter().all(|s| s.outcome.converged)
    }

    /// CSV with one row per ε.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epsilon,energy,cross,eps_laplacian,h1_distance,subsolution_h2_distance,energy_gap,grad_norm,converged\n",
        );
        for s in &self.steps {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                s.epsilon,
                s.energy.total,
                s.energy.cross,
                s.eps_laplacian,
                s.h1_distance,
                s.subsolution_h2_distance,
                s.energy_gap,
                s.outcome.grad_norm,
                s.outcome.converged
            ));
        }
        out
    }
}

pub(crate) fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Solve along `schedule` (strictly decreasing, positive) and at ε = 0.
pub fn continuation(p: &Problem, schedule: &[f64], delta: f64, opts: &SolveOptions) -> Result<ContinuationReport> {
    if schedule.is_empty()
        || schedule.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        || schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(VortexError::InvalidParameter(
            "continuation schedule must be positive and strictly decreasing".into(),
        ));
    }
    let p0 = p.with_epsilon(0.0)?;
    let sub0 = build_subsolution(&p0, delta)?;
    let limit = minimize_constrained(&p0, &sub0.u_sub, opts)?;
    let e0 = limit.energy.total;

    let mut steps: Vec<ContinuationStep> = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let pe = p.with_epsilon(eps)?;
        let sub = build_subsolution(&pe, delta)?;
        let outcome = match steps.last() {
            Some(prev) => minimize_constrained_from(&pe, &sub.u_sub, &prev.outcome.u, opts)?,
            None => minimize_constrained(&pe, &sub.u_sub, opts)?,
        };
        log::info!(
            "continuation eps={eps:e}: I={:e} |g|={:e} converged={}",
            outcome.energy.total,
            outcome.grad_norm,
            outcome.converged
        );
        let u = &outcome.u;
        steps.push(ContinuationStep {
            epsilon: eps,
            energy: outcome.energy,
            eps_laplacian: eps * u.norms().laplacian_l2,
            h1_distance: (u - &limit.u).norms().h1(),
            subsolution_h2_distance: (&sub.u_tilde - &sub0.u_tilde).norms().h2(),
            energy_gap: outcome.energy.total - e0,
            subsolution_verified: sub.verified,
            outcome,
        });
    }
    Ok(ContinuationReport { limit_subsolution_verified: sub0.verified, limit, steps })
}
