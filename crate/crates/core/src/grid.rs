//! Radial discretization of R^3.
//!
//! A radial function u(|x|) is stored through v = r u on the interior nodes
//! r_j = j dr, j = 1..n, dr = L/(n+1), with v(0) = v(L) = 0. On this
//! representation the 3D Laplacian acts as Δu = (1/r) ∂_r² v, which the sine
//! basis sin(κ_k r), κ_k = kπ/L, diagonalizes exactly. Spectral coefficients
//! are normalized so that Plancherel reads
//!
//! ```text
//! ∫ |u|² dx = 4π Σ_k |ĉ_k|²,   ∫ |∇u|² dx = 4π Σ_k κ_k² |ĉ_k|².
//! ```
//!
//! Quadrature is composite Simpson on the full node set 0..=n+1 (with a 3/8
//! closing panel when the interval count is odd). Integrals over a ball
//! [0, R] finish the last partial cell with a three-point interpolant.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{config_err, Error, Result};

pub const MIN_NODES: usize = 16;

const FOUR_PI: f64 = 4.0 * PI;

struct GridInner {
    length: f64,
    n: usize,
    dr: f64,
    kappa: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

/// Uniform radial mesh with its sine-transform plan. Cheap to clone; the
/// plan is shared, scratch space is per call or per [`SpectralWorkspace`].
#[derive(Clone)]
pub struct RadialGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialGrid")
            .field("length", &self.inner.length)
            .field("n", &self.inner.n)
            .finish()
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.length.to_bits() == other.inner.length.to_bits()
                && self.inner.n == other.inner.n)
    }
}

impl RadialGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(config_err(format!("grid length must be positive, got {length}")));
        }
        if n < MIN_NODES {
            return Err(config_err(format!("grid needs at least {MIN_NODES} nodes, got {n}")));
        }
        let dr = length / (n + 1) as f64;
        let kappa = (1..=n).map(|k| k as f64 * PI / length).collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Ok(Self {
            inner: Arc::new(GridInner {
                length,
                n,
                dr,
                kappa,
                fft,
            }),
        })
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dr(&self) -> f64 {
        self.inner.dr
    }

    /// Radius of interior node `i` (0-based, so `node(0) = dr`).
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.inner.dr
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.inner.n).map(move |i| self.node(i))
    }

    /// Mode wavenumbers κ_k = kπ/L, k = 1..n.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.kappa
    }

    /// Stable identifier used in run records.
    pub fn fingerprint(&self) -> String {
        format!("radial-sine:L={:016x}:n={}", self.inner.length.to_bits(), self.inner.n)
    }

    pub(crate) fn check_same(&self, other: &RadialGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn workspace(&self) -> SpectralWorkspace {
        SpectralWorkspace::new(self)
    }

    /// Composite Simpson over all nodes 0..=n+1 of samples `f` (length n+2).
    pub fn quad_nodes(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.inner.n + 2);
        simpson(f, self.inner.dr)
    }

    /// ∫_0^x of the node samples `f` (length n+2), x clamped to [0, L].
    pub fn quad_nodes_upto(&self, f: &[f64], x: f64) -> f64 {
        debug_assert_eq!(f.len(), self.inner.n + 2);
        let dr = self.inner.dr;
        let last = self.inner.n + 1;
        let s = x.clamp(0.0, self.inner.length) / dr;
        let m = s.floor() as usize;
        if m >= last {
            return simpson(f, dr);
        }
        let theta = s - m as f64;
        simpson(&f[..=m], dr) + partial_cell(f, m, theta, dr)
    }

    /// 4π ∫_0^L g(r) r² dr for samples `g` on the interior nodes. The
    /// integrand vanishes at both ends (r² at the origin, v(L) = 0 at the wall).
    pub fn radial_integral(&self, g: &[f64]) -> f64 {
        FOUR_PI * self.quad_nodes(&self.r2_weighted(g))
    }

    /// 4π ∫_0^R g(r) r² dr for samples `g` on the interior nodes.
    pub fn radial_integral_ball(&self, g: &[f64], radius: f64) -> f64 {
        FOUR_PI * self.quad_nodes_upto(&self.r2_weighted(g), radius)
    }

    fn r2_weighted(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.inner.n);
        let mut f = Vec::with_capacity(self.inner.n + 2);
        f.push(0.0);
        f.extend(g.iter().enumerate().map(|(i, &gi)| {
            let r = self.node(i);
            gi * r * r
        }));
        f.push(0.0);
        f
    }

    /// Weights w_j with Σ_j w_j g_j = [`radial_integral`](Self::radial_integral)(g).
    pub fn volume_weights(&self) -> Vec<f64> {
        let n = self.inner.n;
        let w = simpson_weights(n + 2, self.inner.dr);
        (0..n)
            .map(|i| {
                let r = self.node(i);
                FOUR_PI * r * r * w[i + 1]
            })
            .collect()
    }

    /// Pads interior samples with the given end values into an n+2 array.
    pub fn with_ends(&self, start: f64, interior: &[f64], end: f64) -> Vec<f64> {
        let mut f = Vec::with_capacity(interior.len() + 2);
        f.push(start);
        f.extend_from_slice(interior);
        f.push(end);
        f
    }
}

fn simpson(f: &[f64], h: f64) -> f64 {
    let m = f.len().saturating_sub(1);
    match m {
        0 => 0.0,
        1 => 0.5 * h * (f[0] + f[1]),
        _ if m.is_multiple_of(2) => simpson_even(f, h),
        3 => three_eighths(f, h),
        _ => simpson_even(&f[..=m - 3], h) + three_eighths(&f[m - 3..], h),
    }
}

/// Per-node weights of [`simpson`] for `len` samples.
fn simpson_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; len];
    let m = len.saturating_sub(1);
    let even_panel = |w: &mut [f64], start: usize, end: usize| {
        for i in (start..end).step_by(2) {
            w[i] += h / 3.0;
            w[i + 1] += 4.0 * h / 3.0;
            w[i + 2] += h / 3.0;
        }
    };
    match m {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ if m.is_multiple_of(2) => even_panel(&mut w, 0, m),
        _ => {
            if m > 3 {
                even_panel(&mut w, 0, m - 3);
            }
            for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                w[m - 3 + j] += 3.0 * h / 8.0 * c;
            }
        }
    }
    w
}

fn simpson_even(f: &[f64], h: f64) -> f64 {
    let m = f.len() - 1;
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, &x) in f.iter().enumerate().take(m).skip(1) {
        if i % 2 == 1 {
            odd += x;
        } else {
            even += x;
        }
    }
    h / 3.0 * (f[0] + 4.0 * odd + 2.0 * even + f[m])
}

fn three_eighths(f: &[f64], h: f64) -> f64 {
    3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3])
}

/// ∫ over [r_m, r_m + θ dr] of the quadratic through three neighbouring nodes.
fn partial_cell(f: &[f64], m: usize, theta: f64, h: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let (t2, t3) = (theta * theta, theta * theta * theta);
    if m >= 1 {
        let (a, b, c) = (f[m - 1], f[m], f[m + 1]);
        h * (theta * b + t2 / 4.0 * (c - a) + t3 / 6.0 * (c - 2.0 * b + a))
    } else {
        let (a, b, c) = (f[0], f[1], f[2]);
        h * (theta * a + t2 / 4.0 * (-3.0 * a + 4.0 * b - c) + t3 / 6.0 * (a - 2.0 * b + c))
    }
}

/// Scratch buffers for the sine/cosine transforms of one grid.
pub struct SpectralWorkspace {
    grid: RadialGrid,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectralWorkspace {
    pub fn new(grid: &RadialGrid) -> Self {
        let len = 2 * (grid.len() + 1);
        let scratch_len = grid.inner.fft.get_inplace_scratch_len();
        Self {
            grid: grid.clone(),
            buf: vec![Complex64::new(0.0, 0.0); len],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// out_j = Σ_{k=1}^n x_k sin(π j k / (n+1)), j = 1..n.
    pub fn sine_sum(&mut self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.len();
        let big = n + 1;
        let zero = Complex64::new(0.0, 0.0);
        self.buf[0] = zero;
        self.buf[big] = zero;
        for (k, &xk) in x.iter().enumerate() {
            self.buf[k + 1] = xk;
            self.buf[2 * big - k - 1] = -xk;
        }
        self.grid.inner.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        // X_j = -2i S_j
        let half_i = Complex64::new(0.0, 0.5);
        for (j, o) in out.iter_mut().enumerate() {
            *o = half_i * self.buf[j + 1];
        }
    }

    /// out_j = Σ_{k=1}^n x_k cos(π j k / (n+1)), j = 1..n+1 (`out` has n+1 slots;
    /// the last one is the value at the wall r = L).
    pub fn cosine_sum(&mut self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.len();
        let big = n + 1;
        let zero = Complex64::new(0.0, 0.0);
        self.buf[0] = zero;
        self.buf[big] = zero;
        for (k, &xk) in x.iter().enumerate() {
            self.buf[k + 1] = xk;
            self.buf[2 * big - k - 1] = xk;
        }
        self.grid.inner.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (j, o) in out.iter_mut().enumerate() {
            *o = 0.5 * self.buf[j + 1];
        }
    }

    /// Normalized sine coefficients ĉ_k of v = r u.
    pub fn forward_v(&mut self, v: &[Complex64], coeffs: &mut [Complex64]) {
        self.sine_sum(v, coeffs);
        let scale = 2.0 / (self.grid.len() + 1) as f64 * (0.5 * self.grid.length()).sqrt();
        coeffs.iter_mut().for_each(|c| *c *= scale);
    }

    /// Inverse of [`forward_v`](Self::forward_v).
    pub fn inverse_v(&mut self, coeffs: &[Complex64], v: &mut [Complex64]) {
        let inv = 1.0 / (0.5 * self.grid.length()).sqrt();
        let tmp: Vec<Complex64> = coeffs.iter().map(|c| c * inv).collect();
        self.sine_sum(&tmp, v);
    }

    /// ∂_r v at nodes 1..=n+1 from normalized coefficients.
    pub fn dv_dr(&mut self, coeffs: &[Complex64], out: &mut [Complex64]) {
        let inv = 1.0 / (0.5 * self.grid.length()).sqrt();
        let tmp: Vec<Complex64> = coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, &k)| c * (k * inv))
            .collect();
        self.cosine_sum(&tmp, out);
    }

    /// ∂_r² v at interior nodes from normalized coefficients.
    pub fn d2v_dr2(&mut self, coeffs: &[Complex64], out: &mut [Complex64]) {
        let inv = 1.0 / (0.5 * self.grid.length()).sqrt();
        let tmp: Vec<Complex64> = coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, &k)| -c * (k * k * inv))
            .collect();
        self.sine_sum(&tmp, out);
    }
}

/// Complex samples of a radial function u(r) on a [`RadialGrid`].
#[derive(Clone, Debug)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<Complex64>,
}

impl PartialEq for RadialField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl RadialField {
    pub fn new(grid: &RadialGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(config_err(format!(
                "field has {} samples, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &RadialGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid: grid.clone(),
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn from_real_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    /// Rebuild u = v / r from samples of v = r u.
    pub fn from_v(grid: &RadialGrid, v: &[Complex64]) -> Self {
        let values = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| vi / grid.node(i))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// v = r u at the interior nodes.
    pub fn v(&self) -> Vec<Complex64> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &u)| u * self.grid.node(i))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric("field contains non-finite samples".into()))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &z)| f(self.grid.node(i), z))
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn sub(&self, other: &RadialField) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn abs_pow(&self, p: f64) -> Vec<f64> {
        self.values.iter().map(|z| z.norm().powf(p)).collect()
    }

    pub fn norm_sqr(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_spectral(&self) -> SpectralCoeffs {
        let mut ws = self.grid.workspace();
        self.to_spectral_with(&mut ws)
    }

    pub fn to_spectral_with(&self, ws: &mut SpectralWorkspace) -> SpectralCoeffs {
        let v = self.v();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        ws.forward_v(&v, &mut coeffs);
        SpectralCoeffs {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// ‖u‖_{L²(R³)}.
    pub fn l2_norm(&self) -> f64 {
        integrate_power(self, 2).unwrap_or(f64::NAN).sqrt()
    }

    /// ‖∇u‖_{L²(R³)}.
    pub fn h1_seminorm(&self) -> f64 {
        gradient_sq(self).sqrt()
    }

    /// ‖u‖_{H¹} = ‖u‖₂ + ‖∇u‖₂.
    pub fn h1_norm(&self) -> f64 {
        self.l2_norm() + self.h1_seminorm()
    }
}

/// Normalized sine coefficients of v = r u.
#[derive(Clone, Debug)]
pub struct SpectralCoeffs {
    grid: RadialGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn new(grid: &RadialGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(config_err("coefficient count does not match grid"));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn to_field(&self) -> RadialField {
        let mut ws = self.grid.workspace();
        self.to_field_with(&mut ws)
    }

    pub fn to_field_with(&self, ws: &mut SpectralWorkspace) -> RadialField {
        let mut v = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        ws.inverse_v(&self.coeffs, &mut v);
        RadialField::from_v(&self.grid, &v)
    }

    /// 4π Σ |ĉ_k|².
    pub fn mass(&self) -> f64 {
        FOUR_PI * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// 4π Σ κ_k² |ĉ_k|².
    pub fn kinetic(&self) -> f64 {
        FOUR_PI
            * self
                .coeffs
                .iter()
                .zip(self.grid.wavenumbers())
                .map(|(c, k)| k * k * c.norm_sqr())
                .sum::<f64>()
    }

    /// Multiply every mode by e^{-iκ² t}.
    pub fn propagate(&self, t: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, &k)| c * Complex64::from_polar(1.0, -k * k * t))
            .collect();
        Self {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn sub(&self, other: &SpectralCoeffs) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    /// ‖·‖_{H¹} = ‖·‖₂ + ‖∇·‖₂ computed on the coefficients.
    pub fn h1_norm(&self) -> f64 {
        self.mass().sqrt() + self.kinetic().sqrt()
    }
}

pub fn make_grid(length: f64, n: usize) -> Result<RadialGrid> {
    RadialGrid::new(length, n)
}

/// ∫ |u|^p dx over R³.
pub fn integrate_power(f: &RadialField, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::Domain("exponent must be at least 1".into()));
    }
    f.ensure_finite()?;
    let g: Vec<f64> = f.values.iter().map(|z| z.norm().powi(p as i32)).collect();
    Ok(f.grid.radial_integral(&g))
}

/// ∫ |∇u|² dx, evaluated spectrally.
pub fn gradient_sq(f: &RadialField) -> f64 {
    f.to_spectral().kinetic()
}

/// ∫_{|x| ≤ R} |u|^p dx.
pub fn ball_integral(f: &RadialField, p: u32, radius: f64) -> Result<f64> {
    let length = f.grid.length();
    if !(radius > 0.0 && radius <= length * (1.0 + 1e-12)) {
        return Err(config_err(format!("ball radius {radius} outside (0, {length}]")));
    }
    f.ensure_finite()?;
    let g: Vec<f64> = f.values.iter().map(|z| z.norm().powi(p as i32)).collect();
    Ok(f.grid.radial_integral_ball(&g, radius))
}

/// e^{itΔ} f, exact on the sine modes.
pub fn free_propagate(f: &RadialField, t: f64) -> RadialField {
    if t == 0.0 {
        return f.clone();
    }
    let mut ws = f.grid.workspace();
    f.to_spectral_with(&mut ws).propagate(t).to_field_with(&mut ws)
}

/// max_j r_j |u(r_j)|.
pub fn radial_sup_weighted(f: &RadialField) -> f64 {
    f.values
        .iter()
        .enumerate()
        .map(|(i, z)| f.grid.node(i) * z.norm())
        .fold(0.0, f64::max)
}

/// Spectral derivatives of a field needed by the virial machinery.
pub struct Derivatives {
    /// v = r u at interior nodes.
    pub v: Vec<Complex64>,
    /// ∂_r v at nodes 1..=n+1 (last entry is the wall).
    pub dv: Vec<Complex64>,
}

impl Derivatives {
    pub fn of(f: &RadialField, ws: &mut SpectralWorkspace) -> Self {
        let grid = f.grid();
        let v = f.v();
        let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
        ws.forward_v(&v, &mut c);
        let mut dv = vec![Complex64::new(0.0, 0.0); grid.len() + 1];
        ws.dv_dr(&c, &mut dv);
        Self { v, dv }
    }

    /// r ∂_r u = ∂_r v - v / r at interior nodes.
    pub fn r_du(&self, grid: &RadialGrid) -> Vec<Complex64> {
        self.v
            .iter()
            .zip(&self.dv)
            .enumerate()
            .map(|(i, (&v, &dv))| dv - v / grid.node(i))
            .collect()
    }
}

/// Δu at the interior nodes via the sine series.
pub fn laplacian(f: &RadialField) -> RadialField {
    let grid = f.grid();
    let mut ws = grid.workspace();
    let c = f.to_spectral_with(&mut ws);
    let mut d2 = vec![Complex64::new(0.0, 0.0); grid.len()];
    ws.d2v_dr2(c.coeffs(), &mut d2);
    RadialField::from_v(grid, &d2)
}

/// u and ∂_r u between the nodes, from the sine series of v = r u.
pub struct SeriesEvaluator {
    norm: f64,
    k1: f64,
    length: f64,
    coeffs: Vec<Complex64>,
}

impl SeriesEvaluator {
    pub fn new(f: &RadialField) -> Self {
        let length = f.grid.length();
        Self {
            norm: (2.0 / length).sqrt(),
            k1: PI / length,
            length,
            coeffs: f.to_spectral().coeffs,
        }
    }

    /// (v, ∂_r v) at 0 ≤ r ≤ L.
    pub fn v_at(&self, r: f64) -> (Complex64, Complex64) {
        let step = Complex64::from_polar(1.0, self.k1 * r.clamp(0.0, self.length));
        let mut rot = step;
        let (mut v, mut dv) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for (k, c) in self.coeffs.iter().enumerate() {
            v += c * rot.im;
            dv += c * ((k + 1) as f64 * rot.re);
            rot *= step;
        }
        (self.norm * v, self.norm * self.k1 * dv)
    }

    /// (u, ∂_r u) at 0 < r ≤ L.
    pub fn u_at(&self, r: f64) -> (Complex64, Complex64) {
        let (v, dv) = self.v_at(r);
        let u = v / r;
        (u, (dv - u) / r)
    }
}

const GAUSS8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Composite 8-point Gauss–Legendre (node, weight) pairs on [a, b] with
/// panels no wider than `h`.
pub fn gauss_panels(a: f64, b: f64, h: f64) -> Vec<(f64, f64)> {
    if !(b > a) {
        return Vec::new();
    }
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(8 * panels);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for &(x, w) in &GAUSS8 {
            out.push((mid - half * x, half * w));
            out.push((mid + half * x, half * w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss(grid: &RadialGrid) -> RadialField {
        RadialField::from_real_fn(grid, |r| (-r * r).exp())
    }

    #[test]
    fn grid_spacing_and_first_node() {
        let g = make_grid(50.0, 4096).unwrap();
        assert_eq!(g.dr(), 50.0 / 4097.0);
        assert!((g.node(0) - 0.012204).abs() < 1e-6);
        assert!((g.dr() * 4097.0 - 50.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(make_grid(0.0, 128), Err(Error::Config(_))));
        assert!(matches!(make_grid(-1.0, 128), Err(Error::Config(_))));
        assert!(matches!(make_grid(10.0, 15), Err(Error::Config(_))));
    }

    #[test]
    fn zero_field_integrals_vanish() {
        let g = make_grid(20.0, 255).unwrap();
        let z = RadialField::zeros(&g);
        assert_eq!(integrate_power(&z, 2).unwrap(), 0.0);
        assert_eq!(gradient_sq(&z), 0.0);
        assert_eq!(ball_integral(&z, 2, 5.0).unwrap(), 0.0);
        assert_eq!(radial_sup_weighted(&z), 0.0);
    }

    #[test]
    fn gaussian_moments() {
        let g = make_grid(50.0, 4096).unwrap();
        let f = gauss(&g);
        let pi32 = PI.powf(1.5);
        assert_relative_eq!(integrate_power(&f, 2).unwrap(), pi32 / (2.0 * 2f64.sqrt()), max_relative = 1e-8);
        assert_relative_eq!(integrate_power(&f, 4).unwrap(), pi32 / 8.0, max_relative = 1e-8);
        assert_relative_eq!(gradient_sq(&f), 3.0 * pi32 / (2.0 * 2f64.sqrt()), max_relative = 1e-6);
    }

    #[test]
    fn volume_weights_reproduce_quadrature() {
        for n in [16, 17, 255, 256] {
            let g = make_grid(10.0, n).unwrap();
            let f = gauss(&g);
            let dens = f.norm_sqr();
            let w = g.volume_weights();
            let dot: f64 = w.iter().zip(&dens).map(|(a, b)| a * b).sum();
            let direct = g.radial_integral(&dens);
            assert!((dot - direct).abs() <= 1e-14 * direct.abs().max(1.0), "n={n}");
        }
    }

    #[test]
    fn unit_ball_volume() {
        let g = make_grid(50.0, 4096).unwrap();
        let one = RadialField::from_real_fn(&g, |_| 1.0);
        let vol = ball_integral(&one, 2, 1.0).unwrap();
        assert!((vol - 4.0 * PI / 3.0).abs() < 1e-6, "{vol}");
    }

    #[test]
    fn ball_at_wall_matches_full_integral() {
        let g = make_grid(50.0, 4096).unwrap();
        let f = gauss(&g);
        let a = ball_integral(&f, 2, 50.0).unwrap();
        let b = integrate_power(&f, 2).unwrap();
        assert!((a - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn ball_radius_out_of_range() {
        let g = make_grid(10.0, 63).unwrap();
        let f = gauss(&g);
        assert!(matches!(ball_integral(&f, 2, 10.5), Err(Error::Config(_))));
        assert!(matches!(ball_integral(&f, 2, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn integrate_power_rejects_non_finite() {
        let g = make_grid(10.0, 63).unwrap();
        let mut vals = vec![Complex64::new(1.0, 0.0); 63];
        vals[7] = Complex64::new(f64::NAN, 0.0);
        let f = RadialField::new(&g, vals).unwrap();
        assert!(matches!(integrate_power(&f, 2), Err(Error::Numeric(_))));
    }

    #[test]
    fn propagate_identity_and_unitarity() {
        let g = make_grid(50.0, 4096).unwrap();
        let f = gauss(&g);
        assert_eq!(free_propagate(&f, 0.0), f);
        let m0 = integrate_power(&f, 2).unwrap();
        let m1 = integrate_power(&free_propagate(&f, 5.0), 2).unwrap();
        assert!((m0 - m1).abs() <= 1e-12 * m0 * 10.0, "{m0} {m1}");
    }

    #[test]
    fn single_mode_is_eigenfunction() {
        let g = make_grid(PI, 127).unwrap();
        // v = sin(3r) so u = sin(3r)/r, κ_3 = 3 on L = π.
        let f = RadialField::from_real_fn(&g, |r| (3.0 * r).sin() / r);
        let t = 0.37;
        let out = free_propagate(&f, t);
        let phase = Complex64::from_polar(1.0, -9.0 * t);
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn weighted_sup_of_lorentzian() {
        let g = make_grid(40.0, 4095).unwrap();
        let f = RadialField::from_real_fn(&g, |r| 1.0 / (1.0 + r * r));
        assert!((radial_sup_weighted(&f) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn laplacian_of_gaussian() {
        let g = make_grid(30.0, 2047).unwrap();
        let f = gauss(&g);
        let lap = laplacian(&f);
        for (i, z) in lap.values().iter().enumerate() {
            let r = g.node(i);
            let exact = (4.0 * r * r - 6.0) * (-r * r).exp();
            assert!((z.re - exact).abs() < 1e-9, "r={r}");
        }
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = make_grid(30.0, 2047).unwrap();
        let f = gauss(&g);
        let mut ws = g.workspace();
        let d = Derivatives::of(&f, &mut ws);
        let rdu = d.r_du(&g);
        for (i, z) in rdu.iter().enumerate() {
            let r = g.node(i);
            assert!((z.re - (-2.0 * r * r * (-r * r).exp())).abs() < 1e-10);
        }
        assert!(d.dv[g.len()].norm() < 1e-12);
    }

    #[test]
    fn series_evaluator_between_nodes() {
        let g = make_grid(30.0, 1023).unwrap();
        let f = gauss(&g);
        let ev = SeriesEvaluator::new(&f);
        for r in [0.1234, 1.0, 2.71] {
            let (u, du) = ev.u_at(r);
            assert!((u.re - (-r * r).exp()).abs() < 1e-12);
            assert!((du.re + 2.0 * r * (-r * r).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn gauss_panels_integrate_polynomials() {
        let pts = gauss_panels(1.0, 3.0, 0.7);
        let s: f64 = pts.iter().map(|(x, w)| w * x.powi(7)).sum();
        assert!((s - (3f64.powi(8) - 1.0) / 8.0).abs() < 1e-10);
        assert!(gauss_panels(2.0, 2.0, 0.1).is_empty());
    }
}
