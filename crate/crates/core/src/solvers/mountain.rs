//! Mountain-pass critical point by path deformation.
//!
//! The path runs from the local minimum to `u_min + c` with `c` so negative
//! that the energy there is below `I(u_min) − 1`. Each sweep:
//!
//! 1. the highest interior node climbs: a 1-D maximization along the path
//!    tangent, then a descent step orthogonal to it;
//! 2. every other interior node takes an orthogonal descent step;
//! 3. nodes are re-spread along the polyline with the highest node held fixed
//!    at the middle index, geometrically graded so spacing is finest there.
//!
//! Inner products are taken in the metric of the preconditioner, so the
//! preconditioned gradient splits cleanly into tangent and normal parts.
//! When the top node's gradient is small a Newton polish converges it.

use super::newton::newton_refine;
use super::{apply_precond, potential_shift, preconditioner, SolveKind, SolveOptions, SolveOutcome, TraceRow};
use crate::error::{Result, VortexError};
use crate::functional::{energy, energy_and_gradient, gradient, Problem};
use crate::grid::Field;
use crate::operators::SpectralMultiplier;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const COLLAPSE: f64 = 1e-6;
const FAR_LIMIT: f64 = 1e6;

struct Metric {
    pre: Option<SpectralMultiplier>,
    inv: Option<SpectralMultiplier>,
}

impl Metric {
    fn new(p: &Problem, opts: &SolveOptions, shift: f64) -> Metric {
        let eps2 = p.epsilon() * p.epsilon();
        Metric {
            pre: preconditioner(p, opts, shift),
            inv: opts
                .preconditioner
                .then(|| SpectralMultiplier::radial(p.grid(), |k2| eps2 * k2 * k2 + k2 + shift)),
        }
    }

    fn inner(&self, a: &Field, b: &Field) -> f64 {
        match &self.inv {
            Some(m) => a.dot(&m.apply(b)),
            None => a.dot(b),
        }
    }

    fn norm(&self, a: &Field) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }
}

/// Locate the far endpoint shift `c < 0` with `I(u_min + c) < I(u_min) − 1`.
pub(crate) fn far_endpoint(p: &Problem, u_min: &Field, start: f64, e_min: f64) -> Result<f64> {
    let mut c = start;
    while c.abs() <= FAR_LIMIT {
        let e = energy(p, &u_min.add_constant(c))?.total;
        if e < e_min - 1.0 {
            return Ok(c);
        }
        c *= 2.0;
    }
    Err(VortexError::NoFarEndpoint { shift: c })
}

pub fn mountain_pass(p: &Problem, u_min: &Field, opts: &SolveOptions) -> Result<SolveOutcome> {
    opts.validate()?;
    if !u_min.grid().same_as(p.grid()) {
        return Err(VortexError::GridMismatch("u_min and problem grids differ".into()));
    }
    let tol = opts.tolerance(p);
    let mut switch = opts.newton_switch * p.scale();
    let k = opts.path_nodes;
    let mid = (k - 1) / 2;
    let e_min = energy(p, u_min)?.total;
    let c = far_endpoint(p, u_min, opts.far_shift, e_min)?;
    log::debug!("far endpoint shift {c}");

    // Geometric shifts concentrate the initial nodes near the minimum, where the
    // barrier along constant shifts sits.
    let span = (1.0 + c.abs()).ln();
    let mut nodes: Vec<Field> = (0..k)
        .map(|i| u_min.add_constant(-((span * i as f64 / (k - 1) as f64).exp() - 1.0)))
        .collect();
    let mut energies: Vec<f64> = nodes.iter().map(|u| energy(p, u).map(|e| e.total)).collect::<Result<_>>()?;
    let mut alphas = vec![1.0f64; k];
    let shift = potential_shift(p, &nodes[mid]);
    let mut metric = Metric::new(p, opts, shift);
    let unit = Field::constant(p.grid(), 1.0);

    let mut trace = Vec::new();
    let mut newton_history = Vec::new();
    for iter in 0..opts.path_iters {
        let top = argmax_interior(&energies);
        if metric.norm(&(&nodes[top] - &nodes[0])) <= COLLAPSE {
            return Err(VortexError::PathCollapse { distance: (&nodes[top] - &nodes[0]).l2_norm() });
        }
        let (e_top, g_top) = energy_and_gradient(p, &nodes[top])?;
        let gn = g_top.l2_norm();
        trace.push(TraceRow {
            iter,
            energy: e_top.total,
            grad_norm: gn,
            min_gap: f64::NAN,
            contact_fraction: 0.0,
        });
        if gn <= switch {
            let nt = newton_refine(p, &nodes[top], opts, tol, |_| true)?;
            newton_history.extend_from_slice(&nt.history);
            let dist = (&nt.u - u_min).linf_norm();
            if nt.converged && dist > COLLAPSE {
                let energy = energy(p, &nt.u)?;
                return Ok(SolveOutcome {
                    u: nt.u,
                    energy,
                    grad_norm: nt.grad_norm,
                    grad_tol: tol,
                    iterations: iter,
                    converged: true,
                    kind: SolveKind::MountainPass,
                    min_gap: None,
                    path_profile: Some(energies),
                    trace,
                    newton_history,
                });
            }
            log::debug!("mountain-pass newton failed at |g| = {gn:e}");
            switch *= 0.1;
        }
        if iter % 50 == 0 {
            metric = Metric::new(p, opts, potential_shift(p, &nodes[top]));
        }

        for i in 1..k - 1 {
            let tangent = unit_tangent(&metric, &nodes[i - 1], &nodes[i + 1]);
            let (mut u, mut e, mut g) = if i == top {
                (nodes[i].clone(), e_top.total, g_top.clone())
            } else {
                let (e, g) = energy_and_gradient(p, &nodes[i])?;
                (nodes[i].clone(), e.total, g)
            };
            if i == top {
                let reach = 0.5
                    * metric
                        .norm(&(&nodes[i] - &nodes[i - 1]))
                        .min(metric.norm(&(&nodes[i + 1] - &nodes[i])));
                if let Some((un, en)) = climb(p, &u, e, &g, &tangent, reach)? {
                    u = un;
                    e = en;
                    g = gradient(p, &u)?;
                }
            }
            let pg = apply_precond(&metric.pre, &g);
            let gt = g.dot(&tangent);
            let d = pg.axpy(-gt, &tangent).scale(-1.0);
            let slope = g.dot(&d);
            if slope < 0.0 {
                let mut a = (alphas[i] * 2.0).min(10.0);
                for _ in 0..MAX_BACKTRACKS {
                    let trial = u.axpy(a, &d);
                    if let Ok(et) = energy(p, &trial) {
                        if et.total <= e + ARMIJO * a * slope {
                            u = trial;
                            e = et.total;
                            break;
                        }
                    }
                    a *= 0.5;
                }
                alphas[i] = a;
            }
            nodes[i] = u;
            energies[i] = e;
        }

        let top = argmax_interior(&energies);
        let e_top = energies[top];
        // Finest spacing next to the top node: a unit constant shift.
        respread(&metric, &mut nodes, top, mid, metric.norm(&unit));
        for i in 1..k - 1 {
            energies[i] = if i == mid { e_top } else { energy(p, &nodes[i])?.total };
        }
    }
    let top = argmax_interior(&energies);
    let u = nodes[top].clone();
    let g = gradient(p, &u)?;
    Ok(SolveOutcome {
        energy: energy(p, &u)?,
        grad_norm: g.l2_norm(),
        grad_tol: tol,
        iterations: opts.path_iters,
        converged: false,
        kind: SolveKind::MountainPass,
        min_gap: None,
        path_profile: Some(energies),
        trace,
        newton_history,
        u,
    })
}

fn argmax_interior(e: &[f64]) -> usize {
    (1..e.len() - 1).max_by(|&a, &b| e[a].total_cmp(&e[b])).expect("at least three nodes")
}

fn unit_tangent(metric: &Metric, prev: &Field, next: &Field) -> Field {
    let t = next - prev;
    let n = metric.norm(&t);
    if n > 0.0 {
        t.scale(1.0 / n)
    } else {
        t
    }
}

/// Newton step on the energy along the tangent, capped at `reach`.
/// Returns the new point only if it raises the energy.
fn climb(
    p: &Problem,
    u: &Field,
    e: f64,
    g: &Field,
    tangent: &Field,
    reach: f64,
) -> Result<Option<(Field, f64)>> {
    let gt = g.dot(tangent);
    if gt == 0.0 || reach <= 0.0 {
        return Ok(None);
    }
    let h = 1e-4 * reach;
    let curvature = (gradient(p, &u.axpy(h, tangent))?.dot(tangent) - gt) / h;
    let mut t = if curvature < 0.0 { -gt / curvature } else { gt.signum() * reach };
    t = t.clamp(-reach, reach);
    for _ in 0..6 {
        let trial = u.axpy(t, tangent);
        if let Ok(et) = energy(p, &trial) {
            if et.total > e {
                return Ok(Some((trial, et.total)));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Redistribute nodes along the polyline so node `top` lands at index `mid`,
/// with spacing graded geometrically away from it.
fn respread(metric: &Metric, nodes: &mut Vec<Field>, top: usize, mid: usize, h0: f64) {
    let k = nodes.len();
    let seg: Vec<f64> = (0..k - 1).map(|i| metric.norm(&(&nodes[i + 1] - &nodes[i]))).collect();
    let mut arc = vec![0.0; k];
    for i in 0..k - 1 {
        arc[i + 1] = arc[i] + seg[i];
    }
    let s_top = arc[top];
    let left = graded(s_top, mid, h0);
    let right = graded(arc[k - 1] - s_top, k - 1 - mid, h0);
    let mut targets = Vec::with_capacity(k);
    for j in 0..=mid {
        // Distances from the top node, decreasing towards it.
        targets.push(s_top - left[mid - j]);
    }
    for d in right.iter().skip(1) {
        targets.push(s_top + d);
    }
    let old = nodes.clone();
    for (j, &s) in targets.iter().enumerate() {
        if j == 0 || j == k - 1 || j == mid {
            continue;
        }
        let i = match arc.iter().position(|&a| a > s) {
            Some(i) => i.clamp(1, k - 1),
            None => k - 1,
        };
        let (a0, a1) = (arc[i - 1], arc[i]);
        let t = if a1 > a0 { ((s - a0) / (a1 - a0)).clamp(0.0, 1.0) } else { 0.0 };
        nodes[j] = old[i - 1].scale(1.0 - t).axpy(t, &old[i]);
    }
    nodes[mid] = old[top].clone();
}

/// Cumulative distances `0 = d_0 < … < d_m = total` whose first step is
/// `min(h0, total/m)` and whose steps grow geometrically.
fn graded(total: f64, m: usize, h0: f64) -> Vec<f64> {
    if m == 0 {
        return vec![0.0];
    }
    let first = h0.min(total / m as f64);
    let sum = |r: f64| if (r - 1.0).abs() < 1e-12 { first * m as f64 } else { first * (r.powi(m as i32) - 1.0) / (r - 1.0) };
    let (mut lo, mut hi) = (1.0, 2.0);
    while sum(hi) < total {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid) < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let mut out = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    let mut step = first;
    out.push(0.0);
    for _ in 0..m {
        acc += step;
        step *= r;
        out.push(acc);
    }
    let scale = total / acc;
    out.iter().map(|d| d * scale).collect()
}
