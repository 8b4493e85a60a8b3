//! The singular background `σ`.
//!
//! `σ` is the mean-zero solution of `−Δσ = A − 4π Σ m_j δ_{p_j}` with
//! `A = 4πn/|M|`. It is split as
//!
//! ```text
//! σ = Σ_j m_j χ(|x − p_j|) log|x − p_j|²  +  σ_reg  +  c
//! ```
//!
//! where `χ` is a smooth radial cutoff equal to 1 near the origin. The
//! Laplacian of each cutoff logarithm is `4πδ` plus a smooth defect known in
//! closed form, so `σ_reg` solves a Poisson problem with a smooth right-hand
//! side and is computed spectrally. The constant `c` fixes `∫σ = 0` using the
//! exact radial integral of the cutoff logarithm.
//!
//! The cutoff is `χ(r) = ½ erfc((r − L/4)/β)` with `β = L/40`. It equals 1
//! to within 1e-40 for `r < L/20` and vanishes to the same accuracy beyond
//! `L/2`, so the wrapped distance is only ever used where it is smooth. A
//! Gaussian-profile transition is spectrally resolvable, which a compactly
//! supported polynomial blend is not.

use libm::erfc;

use crate::error::{Result, VortexError};
use crate::grid::{Field, Grid};
use crate::operators::{self, laplacian};

/// Samples closer than this (relative to L) to a vortex are the vortex itself.
const COINCIDENCE: f64 = 1e-12;

/// Minimum vortex separation in grid cells.
pub const MIN_SEPARATION_CELLS: f64 = 2.0;

/// Storage clamp for `σ` at the vortex points.
pub const SIGMA_FLOOR: f64 = -745.0;

/// Relative tolerance on the solvability of the regular Poisson problem.
const SOLVABILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vortex {
    pub x: f64,
    pub y: f64,
    pub multiplicity: u32,
}

impl Vortex {
    pub fn new(x: f64, y: f64, multiplicity: u32) -> Vortex {
        Vortex { x, y, multiplicity }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Vortex points with positive integer multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct VortexSet {
    vortices: Vec<Vortex>,
}

impl VortexSet {
    pub fn new(vortices: Vec<Vortex>) -> Result<VortexSet> {
        if vortices.is_empty() {
            return Err(VortexError::InvalidVortices("at least one vortex is required".into()));
        }
        for v in &vortices {
            if v.multiplicity == 0 {
                return Err(VortexError::InvalidVortices(format!(
                    "vortex at ({}, {}) has multiplicity 0",
                    v.x, v.y
                )));
            }
            if !(v.x.is_finite() && v.y.is_finite()) {
                return Err(VortexError::InvalidVortices("non-finite vortex position".into()));
            }
        }
        Ok(VortexSet { vortices })
    }

    pub fn single(x: f64, y: f64) -> VortexSet {
        VortexSet { vortices: vec![Vortex::new(x, y, 1)] }
    }

    /// Total vortex number `n = Σ m_j`.
    pub fn total(&self) -> u32 {
        self.vortices.iter().map(|v| v.multiplicity).sum()
    }

    pub fn len(&self) -> usize {
        self.vortices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vortices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vortex> {
        self.vortices.iter()
    }

    pub fn as_slice(&self) -> &[Vortex] {
        &self.vortices
    }

    /// Shift every point by `(dx, dy)`, wrapping into `[0, L)²`.
    pub fn translated(&self, dx: f64, dy: f64, length: f64) -> VortexSet {
        let wrap = |v: f64| v.rem_euclid(length);
        VortexSet {
            vortices: self
                .vortices
                .iter()
                .map(|v| Vortex::new(wrap(v.x + dx), wrap(v.y + dy), v.multiplicity))
                .collect(),
        }
    }

    /// Points must lie in `[0, L)²` and be pairwise separated by a few grid cells.
    pub fn validate_on(&self, grid: &Grid) -> Result<()> {
        let l = grid.length();
        for v in &self.vortices {
            if !(0.0..l).contains(&v.x) || !(0.0..l).contains(&v.y) {
                return Err(VortexError::InvalidVortices(format!(
                    "vortex ({}, {}) lies outside [0, {l})^2",
                    v.x, v.y
                )));
            }
        }
        let min_sep = MIN_SEPARATION_CELLS * grid.spacing();
        for (i, a) in self.vortices.iter().enumerate() {
            for b in &self.vortices[i + 1..] {
                let d = grid.distance(a.position(), b.position());
                if d < min_sep {
                    return Err(VortexError::InvalidVortices(format!(
                        "vortices ({}, {}) and ({}, {}) are {d:.3e} apart, below {min_sep:.3e}; \
                         merge them into one point with the summed multiplicity",
                        a.x, a.y, b.x, b.y
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Radial cutoff `χ(r) = ½ erfc((r − r₀)/β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub center: f64,
    pub width: f64,
}

impl Cutoff {
    pub fn for_length(length: f64) -> Cutoff {
        Cutoff { center: 0.25 * length, width: length / 40.0 }
    }

    pub fn value(&self, r: f64) -> f64 {
        0.5 * erfc((r - self.center) / self.width)
    }

    pub fn d1(&self, r: f64) -> f64 {
        let s = (r - self.center) / self.width;
        -(-s * s).exp() / (self.width * std::f64::consts::PI.sqrt())
    }

    pub fn d2(&self, r: f64) -> f64 {
        let s = (r - self.center) / self.width;
        -2.0 * s / self.width * self.d1(r)
    }

    /// `∫_{ℝ²} χ(|x|) log|x|² dx`, by Simpson's rule after the substitution
    /// `r = R t²` that removes the logarithmic singularity at the origin.
    pub fn log_integral(&self, radius: f64) -> f64 {
        let intervals = 40_000;
        let dt = 1.0 / intervals as f64;
        let integrand = |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            let r = radius * t * t;
            self.value(r) * (r * r).ln() * 2.0 * std::f64::consts::PI * r * 2.0 * radius * t
        };
        let mut sum = integrand(0.0) + integrand(1.0);
        for i in 1..intervals {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * integrand(i as f64 * dt);
        }
        sum * dt / 3.0
    }
}

/// `σ` and the regular quantities built from it.
#[derive(Clone, Debug)]
pub struct SingularBackground {
    grid: Grid,
    vortices: VortexSet,
    cutoff: Cutoff,
    a: f64,
    /// `σ`, clamped at [`SIGMA_FLOOR`] at vortex points.
    pub sigma: Field,
    /// Spectral part of `σ` (mean zero).
    pub sigma_reg: Field,
    /// Additive constant fixing `∫σ = 0`.
    pub constant: f64,
    /// `w = e^σ`, exactly zero at vortex grid points.
    pub w: Field,
    /// `∇e^σ`.
    pub grad_w: (Field, Field),
    /// `e^σ|∇σ|²`.
    pub q: Field,
    /// Mean of the regular Poisson source before it was projected out.
    pub source_mean: f64,
    /// `∫σ` evaluated on the regularized representation.
    pub sigma_integral: f64,
    /// Flat indices of grid points that coincide with a vortex.
    pub vortex_points: Vec<usize>,
}

impl SingularBackground {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn vortices(&self) -> &VortexSet {
        &self.vortices
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    /// `A = 4πn/|M|`.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> u32 {
        self.vortices.total()
    }

    /// `e^σΔσ`, which equals `−A e^σ` identically.
    pub fn w_laplacian_sigma(&self) -> Field {
        self.w.scale(-self.a)
    }

    /// Background with no vortices: `σ = 0`, `A = 0`. Only used to exercise the
    /// trivial constant solution in tests.
    #[cfg(test)]
    pub(crate) fn vortex_free(grid: &Grid) -> SingularBackground {
        SingularBackground {
            grid: grid.clone(),
            vortices: VortexSet { vortices: Vec::new() },
            cutoff: Cutoff::for_length(grid.length()),
            a: 0.0,
            sigma: Field::zeros(grid),
            sigma_reg: Field::zeros(grid),
            constant: 0.0,
            w: Field::constant(grid, 1.0),
            grad_w: (Field::zeros(grid), Field::zeros(grid)),
            q: Field::zeros(grid),
            source_mean: 0.0,
            sigma_integral: 0.0,
            vortex_points: Vec::new(),
        }
    }
}

/// Per-point contribution of one cutoff logarithm `S = χ log r²`.
struct LogTerm {
    value: f64,
    grad: (f64, f64),
    defect: f64,
}

fn log_term(cutoff: &Cutoff, d: (f64, f64)) -> LogTerm {
    let r2 = d.0 * d.0 + d.1 * d.1;
    let r = r2.sqrt();
    let chi = cutoff.value(r);
    let d1 = cutoff.d1(r);
    let d2 = cutoff.d2(r);
    let log = r2.ln();
    let radial = d1 * log / r + 2.0 * chi / r2;
    LogTerm {
        value: chi * log,
        grad: (radial * d.0, radial * d.1),
        // ΔS − 4πδ = (χ″ + χ′/r) log r² + 4χ′/r.
        defect: (d2 + d1 / r) * log + 4.0 * d1 / r,
    }
}

/// Build `σ` and its regular derived fields on `grid`.
pub fn build_sigma(grid: &Grid, vortices: &VortexSet) -> Result<SingularBackground> {
    vortices.validate_on(grid)?;
    let l = grid.length();
    let area = grid.area();
    let n_total = vortices.total() as f64;
    let a = 4.0 * std::f64::consts::PI * n_total / area;
    let cutoff = Cutoff::for_length(l);
    let tiny = COINCIDENCE * l;

    let len = grid.len();
    let mut sing = vec![0.0; len];
    let mut sing_gx = vec![0.0; len];
    let mut sing_gy = vec![0.0; len];
    let mut source = vec![a; len];
    // For each grid point: which vortex (if any) it sits on.
    let mut on_vortex: Vec<Option<usize>> = vec![None; len];

    for idx in 0..len {
        let x = grid.coords(idx);
        for (j, v) in vortices.iter().enumerate() {
            let d = grid.displacement(x, v.position());
            let m = v.multiplicity as f64;
            if d.0.hypot(d.1) < tiny {
                on_vortex[idx] = Some(j);
                continue;
            }
            let t = log_term(&cutoff, d);
            sing[idx] += m * t.value;
            sing_gx[idx] += m * t.grad.0;
            sing_gy[idx] += m * t.grad.1;
            source[idx] += m * t.defect;
        }
    }

    let source = Field::new(grid, source)?;
    let source_mean = source.mean();
    let flux = 4.0 * std::f64::consts::PI * n_total;
    if (source_mean * area).abs() > SOLVABILITY_TOL * flux {
        return Err(VortexError::NonzeroMean {
            mean: source_mean,
            limit: SOLVABILITY_TOL * flux / area,
        });
    }
    let sigma_reg = operators::inv_neg_laplacian(&source.add_constant(-source_mean))?;
    let (reg_gx, reg_gy) = operators::gradient(&sigma_reg);

    let radial_integral = cutoff.log_integral(0.5 * l);
    let constant = -n_total * radial_integral / area;
    let sigma_integral = n_total * radial_integral + sigma_reg.integrate() + constant * area;

    let mut sigma = vec![0.0; len];
    let mut w = vec![0.0; len];
    let mut gwx = vec![0.0; len];
    let mut gwy = vec![0.0; len];
    let mut q = vec![0.0; len];
    let mut vortex_points = Vec::new();
    for idx in 0..len {
        match on_vortex[idx] {
            Some(j) => {
                vortex_points.push(idx);
                sigma[idx] = SIGMA_FLOOR;
                // w ≈ c_j r^{2m} locally; q → 4c_j for m = 1 and 0 otherwise.
                if vortices.as_slice()[j].multiplicity == 1 {
                    let c_j = (sigma_reg.values()[idx] + constant + sing[idx]).exp();
                    q[idx] = 4.0 * c_j;
                }
            }
            None => {
                let s = sing[idx] + sigma_reg.values()[idx] + constant;
                let gx = sing_gx[idx] + reg_gx.values()[idx];
                let gy = sing_gy[idx] + reg_gy.values()[idx];
                let e = s.exp();
                sigma[idx] = s.max(SIGMA_FLOOR);
                w[idx] = e;
                gwx[idx] = e * gx;
                gwy[idx] = e * gy;
                q[idx] = e * (gx * gx + gy * gy);
            }
        }
    }

    Ok(SingularBackground {
        grid: grid.clone(),
        vortices: vortices.clone(),
        cutoff,
        a,
        sigma: Field::new(grid, sigma)?,
        sigma_reg,
        constant,
        w: Field::new(grid, w)?,
        grad_w: (Field::new(grid, gwx)?, Field::new(grid, gwy)?),
        q: Field::new(grid, q)?,
        source_mean,
        sigma_integral,
        vortex_points,
    })
}

/// Residuals of the two background identities.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    /// `max |q − Δw − A w|` over grid points farther than `excluded_radius` from every vortex.
    pub gradient_identity_residual: f64,
    pub w_max: f64,
    pub tolerance: f64,
    pub excluded_radius: f64,
    pub min_w: f64,
    pub max_q: f64,
    pub max_grad_w: f64,
    pub max_w_at_vortices: f64,
    pub sigma_integral: f64,
    pub source_mean: f64,
    pub passes: bool,
}

/// Check `e^σ|∇σ|² = Δe^σ + A e^σ` away from the vortices, plus sign and
/// boundedness of the derived fields.
pub fn verify_singular_identities(sb: &SingularBackground) -> IdentityReport {
    let grid = sb.grid();
    let lap_w = laplacian(&sb.w);
    let excluded = 3.0 * grid.spacing();
    let mut residual = 0.0_f64;
    for idx in 0..grid.len() {
        let x = grid.coords(idx);
        if sb.vortices().iter().any(|v| grid.distance(x, v.position()) <= excluded) {
            continue;
        }
        let r = sb.q.values()[idx] - lap_w.values()[idx] - sb.a() * sb.w.values()[idx];
        residual = residual.max(r.abs());
    }
    let w_max = sb.w.max();
    let tolerance = 1e-6 * w_max;
    let min_w = sb.w.min();
    let max_w_at_vortices = sb
        .vortex_points
        .iter()
        .map(|&i| sb.w.values()[i])
        .fold(0.0, f64::max);
    let max_grad_w = sb.grad_w.0.linf_norm().max(sb.grad_w.1.linf_norm());
    let max_q = sb.q.linf_norm();
    let bounded = w_max.is_finite() && max_grad_w.is_finite() && max_q.is_finite();
    IdentityReport {
        gradient_identity_residual: residual,
        w_max,
        tolerance,
        excluded_radius: excluded,
        min_w,
        max_q,
        max_grad_w,
        max_w_at_vortices,
        sigma_integral: sb.sigma_integral,
        source_mean: sb.source_mean,
        passes: residual <= tolerance
            && min_w >= 0.0
            && max_w_at_vortices <= 1e-12
            && bounded
            && sb.sigma_integral.abs() <= 1e-8,
    }
}
