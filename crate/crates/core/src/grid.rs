//! Flat square torus `[0, L)²` sampled on a uniform `N × N` grid.
//!
//! Fields are stored row-major with the row index running over `y`:
//! sample `(ix, iy)` sits at `(ix·h, iy·h)` and lives at `values[iy * N + ix]`.
//! Spectral coefficients use the same layout with standard DFT ordering of
//! the integer frequencies (`0, 1, …, N/2-1, -N/2, …, -1`).

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, VortexError};

pub const MIN_GRID_SIZE: usize = 16;

struct GridData {
    n: usize,
    length: f64,
    spacing: f64,
    /// Angular wavenumbers per axis in DFT order; the Nyquist entry is `-π N / L`.
    wavenumbers: Vec<f64>,
    /// Same as `wavenumbers` with the Nyquist entry zeroed, used for odd-order
    /// derivatives so that real fields map to real fields.
    odd_wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic discretization of the torus. Cheap to clone.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridData>,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Grid> {
        if n % 2 != 0 {
            return Err(VortexError::InvalidGrid(format!("N must be even, got {n}")));
        }
        if n < MIN_GRID_SIZE {
            return Err(VortexError::InvalidGrid(format!(
                "N must be at least {MIN_GRID_SIZE}, got {n}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(VortexError::InvalidGrid(format!(
                "L must be positive and finite, got {length}"
            )));
        }
        let base = 2.0 * std::f64::consts::PI / length;
        let wavenumbers: Vec<f64> = (0..n)
            .map(|i| {
                let freq = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                base * freq
            })
            .collect();
        let mut odd_wavenumbers = wavenumbers.clone();
        odd_wavenumbers[n / 2] = 0.0;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Grid {
            inner: Arc::new(GridData {
                n,
                length,
                spacing: length / n as f64,
                wavenumbers,
                odd_wavenumbers,
                forward,
                inverse,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    /// |M| = L².
    pub fn area(&self) -> f64 {
        self.inner.length * self.inner.length
    }

    /// Number of samples, N².
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight h².
    pub fn weight(&self) -> f64 {
        self.inner.spacing * self.inner.spacing
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    pub(crate) fn odd_wavenumbers(&self) -> &[f64] {
        &self.inner.odd_wavenumbers
    }

    pub fn max_wavenumber(&self) -> f64 {
        self.inner
            .wavenumbers
            .iter()
            .fold(0.0_f64, |m, k| m.max(k.abs()))
    }

    /// Physical coordinates of the sample at flat index `idx`.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let n = self.inner.n;
        let h = self.inner.spacing;
        ((idx % n) as f64 * h, (idx / n) as f64 * h)
    }

    /// Minimal periodic displacement `x - p` with components in `[-L/2, L/2)`.
    pub fn displacement(&self, x: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let l = self.inner.length;
        let wrap = |d: f64| d - l * (d / l).round();
        (wrap(x.0 - p.0), wrap(x.1 - p.1))
    }

    pub fn distance(&self, x: (f64, f64), p: (f64, f64)) -> f64 {
        let (dx, dy) = self.displacement(x, p);
        dx.hypot(dy)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.length == other.inner.length)
    }

    /// Unnormalized 2-D forward DFT of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.inner.forward);
        buf
    }

    /// Inverse of [`Grid::forward`] (including the 1/N² factor), keeping the real part.
    pub fn inverse_real(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut coeffs, &self.inner.inverse);
        let scale = 1.0 / self.len() as f64;
        coeffs.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, n);
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, n);
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("length", &self.inner.length)
            .finish()
    }
}

/// Spectral-space view of a field: raw DFT coefficients in grid layout.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Multiply every coefficient by `symbol(kx, ky)`, where `kx`, `ky` are the
    /// even-order wavenumbers (Nyquist kept).
    pub fn multiply<F>(&self, symbol: F) -> Spectrum
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let n = self.grid.n();
        let k = self.grid.wavenumbers();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c * symbol(k[idx % n], k[idx / n]))
            .collect();
        Spectrum { grid: self.grid.clone(), coeffs }
    }

    /// Multiply by a real symbol of `|k|²`.
    pub fn multiply_radial<F>(&self, symbol: F) -> Spectrum
    where
        F: Fn(f64) -> f64,
    {
        self.multiply(|kx, ky| Complex64::new(symbol(kx * kx + ky * ky), 0.0))
    }

    /// Spectral partial derivative along `axis` (0 = x, 1 = y), Nyquist mode dropped.
    pub fn derivative(&self, axis: usize) -> Spectrum {
        let n = self.grid.n();
        let k = self.grid.odd_wavenumbers();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let kk = if axis == 0 { k[idx % n] } else { k[idx / n] };
                c * Complex64::new(0.0, kk)
            })
            .collect();
        Spectrum { grid: self.grid.clone(), coeffs }
    }

    /// Σ_k m(|k|²) |c_k|² |M| with `c_k` the normalized Fourier coefficients.
    pub fn weighted_energy<F>(&self, weight: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let n = self.grid.n();
        let k = self.grid.wavenumbers();
        let norm = 1.0 / (self.grid.len() as f64);
        let sum: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let kx = k[idx % n];
                let ky = k[idx / n];
                weight(kx * kx + ky * ky) * (c * norm).norm_sqr()
            })
            .sum();
        sum * self.grid.area()
    }

    pub fn to_field(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.grid.inverse_real(self.coeffs.clone()),
        }
    }

    pub fn into_field(self) -> Field {
        let values = self.grid.inverse_real(self.coeffs);
        Field { grid: self.grid, values }
    }
}

/// The four norms used throughout the solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub laplacian_l2: f64,
    pub linf: f64,
}

impl Norms {
    /// Full H¹ norm.
    pub fn h1(&self) -> f64 {
        self.l2.hypot(self.h1_semi)
    }

    /// Full H² norm, `(‖f‖² + ‖∇f‖² + ‖Δf‖²)^½`.
    pub fn h2(&self) -> f64 {
        (self.l2 * self.l2 + self.h1_semi * self.h1_semi + self.laplacian_l2 * self.laplacian_l2)
            .sqrt()
    }
}

/// Real scalar samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(VortexError::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VortexError::NonFinite("field samples"));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Internal constructor without the finiteness scan.
    pub(crate) fn from_vec(grid: &Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Grid) -> Field {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Field {
        Field { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn<F>(grid: &Grid, f: F) -> Field
    where
        F: Fn(f64, f64) -> f64,
    {
        let values = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.coords(idx);
                f(x, y)
            })
            .collect();
        Field { grid: grid.clone(), values }
    }

    /// A smooth random trigonometric polynomial with frequencies `|kx|, |ky| ≤ kmax`
    /// and amplitudes decaying like `1 / (1 + |k|²)`.
    pub fn random_smooth<R: Rng>(grid: &Grid, rng: &mut R, kmax: i32, amplitude: f64) -> Field {
        let base = 2.0 * std::f64::consts::PI / grid.length();
        let mut modes = Vec::new();
        for kx in -kmax..=kmax {
            for ky in 0..=kmax {
                if ky == 0 && kx < 0 {
                    continue;
                }
                let decay = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
                let a = rng.gen_range(-1.0..1.0) * decay;
                let b = if kx == 0 && ky == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) * decay };
                modes.push((base * kx as f64, base * ky as f64, a, b));
            }
        }
        Field::from_fn(grid, |x, y| {
            amplitude
                * modes
                    .iter()
                    .map(|&(kx, ky, a, b)| {
                        let phase = kx * x + ky * y;
                        a * phase.cos() + b * phase.sin()
                    })
                    .sum::<f64>()
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n() + ix]
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum { grid: self.grid.clone(), coeffs: self.grid.forward(&self.values) }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Field {
        debug_assert!(self.grid.same_as(&other.grid));
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| v * c)
    }

    /// `self + a·x`.
    pub fn axpy(&self, a: f64, x: &Field) -> Field {
        self.zip_map(x, |s, xv| s + a * xv)
    }

    pub fn add_constant(&self, c: f64) -> Field {
        self.map(|v| v + c)
    }

    /// Pointwise maximum.
    pub fn max_with(&self, other: &Field) -> Field {
        self.zip_map(other, f64::max)
    }

    /// h² Σ values.
    pub fn integrate(&self) -> f64 {
        self.grid.weight() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// L² inner product `∫ f g`.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        self.grid.weight() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.weight() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Spectral ‖f‖₂, ‖∇f‖₂, ‖Δf‖₂ and ‖f‖_∞.
    pub fn norms(&self) -> Norms {
        let spec = self.spectrum();
        Norms {
            l2: spec.weighted_energy(|_| 1.0).sqrt(),
            h1_semi: spec.weighted_energy(|k2| k2).sqrt(),
            laplacian_l2: spec.weighted_energy(|k2| k2 * k2).sqrt(),
            linf: self.linf_norm(),
        }
    }

    /// Cyclic shift by whole grid cells.
    pub fn roll(&self, sx: isize, sy: isize) -> Field {
        let n = self.grid.n() as isize;
        let mut values = vec![0.0; self.values.len()];
        for iy in 0..n {
            for ix in 0..n {
                let tx = (ix + sx).rem_euclid(n);
                let ty = (iy + sy).rem_euclid(n);
                values[(ty * n + tx) as usize] = self.values[(iy * n + ix) as usize];
            }
        }
        Field { grid: self.grid.clone(), values }
    }

    /// Write in the `.vfd` text format: a `vortexfield v1 N L` header followed by
    /// N rows of N values (row index = y).
    pub fn write_vfd<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.grid.n();
        writeln!(out, "vortexfield v1 {} {}", n, self.grid.length())?;
        for row in self.values.chunks(n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_vfd<R: BufRead>(input: R) -> Result<Field> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| VortexError::Format("empty file".into()))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "vortexfield" || parts[1] != "v1" {
            return Err(VortexError::Format(format!("bad header {header:?}")));
        }
        let n: usize = parts[2]
            .parse()
            .map_err(|_| VortexError::Format(format!("bad N in header {header:?}")))?;
        let length: f64 = parts[3]
            .parse()
            .map_err(|_| VortexError::Format(format!("bad L in header {header:?}")))?;
        let grid = Grid::new(n, length)?;
        let mut values = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    VortexError::Format(format!("row {}: cannot parse {tok:?}", row + 1))
                })?;
                values.push(v);
            }
            if values.len() - before != n {
                return Err(VortexError::Format(format!(
                    "row {} has {} values, expected {n}",
                    row + 1,
                    values.len() - before
                )));
            }
        }
        if values.len() != n * n {
            return Err(VortexError::Format(format!(
                "expected {n} rows, found {}",
                values.len() / n
            )));
        }
        Field::new(&grid, values)
    }

    pub fn save_vfd(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_vfd(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load_vfd(path: &Path) -> Result<Field> {
        let file = std::fs::File::open(path)?;
        Field::read_vfd(std::io::BufReader::new(file))
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}
