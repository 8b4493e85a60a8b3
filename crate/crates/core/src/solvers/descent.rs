//! Local minimization of `I_ε` over `{u ≥ u̲}`.
//!
//! Projected gradient descent in the metric of the spectral preconditioner,
//! with Barzilai–Borwein steps and monotone Armijo backtracking. Once the
//! iterate leaves the obstacle and the projected gradient is small, a Newton
//! polish finishes the solve; if it fails, descent resumes.

use super::newton::newton_refine;
use super::{apply_precond, potential_shift, preconditioner, SolveKind, SolveOptions, SolveOutcome, TraceRow};
use crate::error::{Result, VortexError};
use crate::functional::{energy, energy_and_gradient, Problem};
use crate::grid::Field;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Start from `u̲ + opts.initial_offset`.
pub fn minimize_constrained(p: &Problem, u_sub: &Field, opts: &SolveOptions) -> Result<SolveOutcome> {
    let u0 = u_sub.add_constant(opts.initial_offset);
    minimize_constrained_from(p, u_sub, &u0, opts)
}

/// Warm-started variant; `u0` is projected onto `{u ≥ u̲}` first.
pub fn minimize_constrained_from(
    p: &Problem,
    u_sub: &Field,
    u0: &Field,
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    opts.validate()?;
    if !u_sub.grid().same_as(p.grid()) || !u0.grid().same_as(p.grid()) {
        return Err(VortexError::GridMismatch("initial data and problem grids differ".into()));
    }
    let tol = opts.tolerance(p);
    let mut switch = opts.newton_switch * p.scale();
    let len = p.grid().len() as f64;
    let gap = |u: &Field| u.zip_map(u_sub, |a, b| a - b).min();

    let mut u = u0.max_with(u_sub);
    let mut m = preconditioner(p, opts, potential_shift(p, &u));
    let (mut e, mut g) = energy_and_gradient(p, &u)?;
    let mut prev: Option<(Field, Field)> = None;
    let mut alpha = 1.0;
    let mut trace = Vec::new();
    let mut newton_history = Vec::new();

    for iter in 0..opts.max_iters {
        let mut contact = 0usize;
        let pg = Field::new(
            p.grid(),
            (0..g.values().len())
                .map(|i| {
                    if u.values()[i] <= u_sub.values()[i] {
                        contact += 1;
                        g.values()[i].min(0.0)
                    } else {
                        g.values()[i]
                    }
                })
                .collect(),
        )?;
        let pgn = pg.l2_norm();
        trace.push(TraceRow {
            iter,
            energy: e.total,
            grad_norm: pgn,
            min_gap: gap(&u),
            contact_fraction: contact as f64 / len,
        });

        if contact == 0 && pgn <= switch {
            if pgn <= tol {
                return Ok(finish(p, u, pgn, tol, iter, trace, newton_history, gap));
            }
            let nt = newton_refine(p, &u, opts, tol, |v| gap(v) > 0.0)?;
            newton_history.extend_from_slice(&nt.history);
            if nt.converged {
                let e_nt = energy(p, &nt.u)?;
                // A minimum polish must not climb.
                if e_nt.total <= e.total + 1e-10 * e.total.abs().max(1.0) {
                    return Ok(finish(p, nt.u, nt.grad_norm, tol, iter, trace, newton_history, gap));
                }
            }
            log::debug!("newton polish failed at |pg| = {pgn:e}; resuming descent");
            switch *= 0.1;
            m = preconditioner(p, opts, potential_shift(p, &u));
            prev = None;
        }

        if let Some((u_prev, g_prev)) = &prev {
            let s = &u - u_prev;
            let y = &g - g_prev;
            let sy = s.dot(&y);
            let ypy = y.dot(&apply_precond(&m, &y));
            alpha = if sy > 0.0 && ypy > 0.0 { (sy / ypy).clamp(1e-8, 1e4) } else { (2.0 * alpha).min(1e4) };
        }
        let d = -&apply_precond(&m, &g);

        let mut step = None;
        let mut a = alpha;
        for _ in 0..MAX_BACKTRACKS {
            let trial = u.axpy(a, &d).max_with(u_sub);
            let s = &trial - &u;
            let slope = g.dot(&s);
            if slope < 0.0 {
                if let Ok((et, gt)) = energy_and_gradient(p, &trial) {
                    if et.total <= e.total + ARMIJO * slope {
                        step = Some((trial, et, gt));
                        break;
                    }
                }
            }
            a *= 0.5;
        }
        let Some((un, en, gn)) = step else {
            // Stalled on round-off: report where we are if it is already good enough.
            if contact == 0 && pgn <= tol {
                return Ok(finish(p, u, pgn, tol, iter, trace, newton_history, gap));
            }
            return Err(VortexError::LineSearch { iterations: iter, energy: e.total });
        };
        alpha = a;
        prev = Some((std::mem::replace(&mut u, un), std::mem::replace(&mut g, gn)));
        e = en;
    }
    let pgn = trace.last().map(|r| r.grad_norm).unwrap_or(f64::NAN);
    let mut out = finish(p, u, pgn, tol, opts.max_iters, trace, newton_history, gap);
    out.converged = false;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &Problem,
    u: Field,
    grad_norm: f64,
    tol: f64,
    iterations: usize,
    trace: Vec<TraceRow>,
    newton_history: Vec<f64>,
    gap: impl Fn(&Field) -> f64,
) -> SolveOutcome {
    let energy = energy(p, &u).expect("energy was finite at the accepted iterate");
    let min_gap = gap(&u);
    SolveOutcome {
        energy,
        grad_norm,
        grad_tol: tol,
        iterations,
        converged: grad_norm <= tol && min_gap > 0.0,
        kind: SolveKind::LocalMin,
        min_gap: Some(min_gap),
        path_profile: None,
        trace,
        newton_history,
        u,
    }
}
