//! Periodic tensor-product grids on the unit torus `[0,1]^d` and Fourier
//! pseudo-spectral calculus on real fields.
//!
//! Fields are stored row-major over axes (the last axis is contiguous).
//! Every derivative is the exact derivative of the trigonometric interpolant,
//! with the Nyquist mode dropped on the differentiated axis. The `*_dealiased`
//! variants additionally apply the 2/3 rule, zeroing any mode whose index on
//! some axis exceeds `n / 3`; they are meant for divergences and gradients of
//! pointwise products.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid with `n` points on each of `dim` axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n must be even and at least 8, got {n}")));
        }
        if n.checked_pow(dim as u32).and_then(|p| p.checked_mul(8)).is_none() {
            return Err(Error::InvalidGrid(format!("{n}^{dim} points do not fit in memory")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Largest retained mode index under the 2/3 rule.
    pub fn cutoff(&self) -> usize {
        self.n / 3
    }

    /// Same dimension, different resolution.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.dim, n)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis integer indices of a flat index.
    pub fn indices(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for (a, slot) in out.iter_mut().enumerate().take(self.dim) {
            *slot = (flat / self.stride(a)) % self.n;
        }
        out
    }

    /// Physical coordinates in `[0,1)^dim` of a flat index.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.indices(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 / self.n as f64;
        }
        x
    }

    /// Signed wavenumber of FFT index `j`; the Nyquist index maps to `+n/2`.
    fn wavenumber(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }
}

/// Real scalar field on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "scalar field" });
        }
        Ok(Self { grid, values })
    }

    /// Constructor without the finiteness check; rates and scratch fields use it.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at the grid points; `f` receives the `dim` coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                f(&x[..grid.dim])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(self.grid, other.grid)?;
        Ok(self.zip_unchecked(other, f))
    }

    fn zip_unchecked(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_unchecked(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_unchecked(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_unchecked(rhs, |a, b| a * b)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|v| -v)
    }
}

/// `dim` scalar components on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(comps: Vec<ScalarField>) -> Result<Self> {
        let grid = comps.first().ok_or(Error::GridMismatch)?.grid;
        if comps.len() != grid.dim || comps.iter().any(|c| c.grid != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, comps: vec![ScalarField::zeros(grid); grid.dim] }
    }

    /// Spatially uniform vector; missing components are zero.
    pub fn uniform(grid: GridSpec, c: &[f64]) -> Self {
        let comps = (0..grid.dim)
            .map(|a| ScalarField::constant(grid, c.get(a).copied().unwrap_or(0.0)))
            .collect();
        Self { grid, comps }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let comps = (0..grid.dim).map(|a| ScalarField::from_fn(grid, |x| f(a, x))).collect();
        Self { grid, comps }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn comp(&self, a: usize) -> &ScalarField {
        &self.comps[a]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut ScalarField {
        &mut self.comps[a]
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<ScalarField> {
        self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(ScalarField::is_finite)
    }

    pub fn map_comps(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self { grid: self.grid, comps: self.comps.iter().map(f).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_comps(|f| f.scale(c))
    }

    /// Multiplies every component by the scalar field `s`.
    pub fn scale_by(&self, s: &ScalarField) -> Self {
        self.map_comps(|f| f * s)
    }

    /// Divides every component by the scalar field `s`.
    pub fn div_by(&self, s: &ScalarField) -> Self {
        self.map_comps(|f| f.zip_unchecked(s, |a, b| a / b))
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            x.axpy(a, y);
        }
    }

    /// Pointwise Euclidean norm squared.
    pub fn norm_sq(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        for c in &self.comps {
            for (o, v) in out.values.iter_mut().zip(&c.values) {
                *o += v * v;
            }
        }
        out
    }

    pub fn dot(&self, other: &Self) -> ScalarField {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let mut out = ScalarField::zeros(self.grid);
        for (c, d) in self.comps.iter().zip(&other.comps) {
            for ((o, a), b) in out.values.iter_mut().zip(&c.values).zip(&d.values) {
                *o += a * b;
            }
        }
        out
    }

    /// Outer product `self ⊗ other`, entry `(i, j) = self_i * other_j`.
    pub fn outer(&self, other: &Self) -> TensorField {
        let d = self.dim();
        let mut comps = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                comps.push(&self.comps[i] * &other.comps[j]);
            }
        }
        TensorField { grid: self.grid, comps }
    }

    /// Max over points of the Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.norm_sq().max().max(0.0).sqrt()
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            grid: self.grid,
            comps: self.comps.iter().zip(&rhs.comps).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            grid: self.grid,
            comps: self.comps.iter().zip(&rhs.comps).map(|(a, b)| a - b).collect(),
        }
    }
}

/// `dim × dim` components, entry `(i, j)` stored at `i * dim + j`.
///
/// For a gradient, entry `(i, j)` is `∂_j F_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: GridSpec,
    comps: Vec<ScalarField>,
}

impl TensorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, comps: vec![ScalarField::zeros(grid); grid.dim * grid.dim] }
    }

    pub fn from_comps(grid: GridSpec, comps: Vec<ScalarField>) -> Result<Self> {
        if comps.len() != grid.dim * grid.dim || comps.iter().any(|c| c.grid != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[i * self.grid.dim + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut ScalarField {
        let d = self.grid.dim;
        &mut self.comps[i * d + j]
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim();
        let mut comps = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                comps.push(self.get(j, i).clone());
            }
        }
        Self { grid: self.grid, comps }
    }

    /// Symmetric part `(T + Tᵗ) / 2`.
    pub fn sym(&self) -> Self {
        self.combine_transpose(0.5)
    }

    /// Antisymmetric part `(T − Tᵗ) / 2`.
    pub fn antisym(&self) -> Self {
        self.combine_transpose(-0.5)
    }

    fn combine_transpose(&self, s: f64) -> Self {
        let d = self.dim();
        let mut comps = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                comps.push(self.get(i, j).zip_unchecked(self.get(j, i), |a, b| 0.5 * a + s * b));
            }
        }
        Self { grid: self.grid, comps }
    }

    pub fn map_comps(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self { grid: self.grid, comps: self.comps.iter().map(f).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_comps(|f| f.scale(c))
    }

    pub fn scale_by(&self, s: &ScalarField) -> Self {
        self.map_comps(|f| f * s)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            x.axpy(a, y);
        }
    }

    /// Adds `s` to every diagonal entry.
    pub fn add_diagonal(&mut self, s: &ScalarField) {
        for i in 0..self.dim() {
            self.get_mut(i, i).axpy(1.0, s);
        }
    }

    /// Pointwise Frobenius norm squared `T : T`.
    pub fn frob_sq(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        for c in &self.comps {
            for (o, v) in out.values.iter_mut().zip(&c.values) {
                *o += v * v;
            }
        }
        out
    }
}

impl Add for &TensorField {
    type Output = TensorField;
    fn add(self, rhs: &TensorField) -> TensorField {
        TensorField {
            grid: self.grid,
            comps: self.comps.iter().zip(&rhs.comps).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &TensorField {
    type Output = TensorField;
    fn sub(self, rhs: &TensorField) -> TensorField {
        TensorField {
            grid: self.grid,
            comps: self.comps.iter().zip(&rhs.comps).map(|(a, b)| a - b).collect(),
        }
    }
}

pub(crate) fn same_grid(a: GridSpec, b: GridSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

// ---------------------------------------------------------------------------
// FFT machinery

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
        })
        .clone()
}

fn transform(grid: GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    let p = plans(n);
    let fft = if inverse { &p.inv } else { &p.fwd };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..grid.dim {
        let stride = grid.stride(axis);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let outer = grid.len() / (n * stride);
        for o in 0..outer {
            for i in 0..stride {
                let base = o * n * stride + i;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
    if inverse {
        let norm = 1.0 / grid.len() as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}

/// Fourier coefficients (unnormalized forward DFT) of a real field.
pub(crate) fn forward(f: &ScalarField) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(f.grid, &mut data, false);
    data
}

/// Inverse transform, keeping the real part.
pub(crate) fn inverse(grid: GridSpec, mut spec: Vec<Complex64>) -> ScalarField {
    transform(grid, &mut spec, true);
    ScalarField::from_raw(grid, spec.into_iter().map(|c| c.re).collect())
}

/// Inverse transform returning the full complex result; used to check the
/// real-to-real contract.
pub fn imaginary_residue(f: &ScalarField, op: impl Fn(&mut [Complex64], GridSpec)) -> f64 {
    let mut spec = forward(f);
    op(&mut spec, f.grid);
    transform(f.grid, &mut spec, true);
    spec.iter().fold(0.0, |m, c| m.max(c.im.abs()))
}

/// Spectral symbol of `∂_axis` at flat index `idx`; zero on the Nyquist index.
fn ik(grid: GridSpec, idx: &[usize; 3], axis: usize) -> Complex64 {
    let j = idx[axis];
    if grid.is_nyquist(j) {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, 2.0 * PI * grid.wavenumber(j) as f64)
    }
}

fn keep(grid: GridSpec, idx: &[usize; 3]) -> bool {
    let c = grid.cutoff() as i64;
    (0..grid.dim).all(|a| grid.wavenumber(idx[a]).abs() <= c)
}

fn laplacian_symbol(grid: GridSpec, idx: &[usize; 3]) -> f64 {
    -(0..grid.dim).map(|a| ik(grid, idx, a).im.powi(2)).sum::<f64>()
}

/// Applies a spectral multiplier in place.
fn multiply(grid: GridSpec, spec: &mut [Complex64], mask: bool, sym: impl Fn(&[usize; 3]) -> Complex64) {
    for (flat, c) in spec.iter_mut().enumerate() {
        let idx = grid.indices(flat);
        if mask && !keep(grid, &idx) {
            *c = Complex64::default();
        } else {
            *c *= sym(&idx);
        }
    }
}

/// Applies the 2/3-rule mask in place.
pub fn dealias_in_place(spec: &mut [Complex64], grid: GridSpec) {
    multiply(grid, spec, true, |_| Complex64::new(1.0, 0.0));
}

fn check_finite(f: &ScalarField) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what: "derivative input" })
    }
}

fn derivative(f: &ScalarField, axis: usize, mask: bool) -> ScalarField {
    let grid = f.grid;
    let mut spec = forward(f);
    multiply(grid, &mut spec, mask, |idx| ik(grid, idx, axis));
    inverse(grid, spec)
}

// ---------------------------------------------------------------------------
// Public calculus

/// Exact spectral derivative along `axis`.
pub fn ddx(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    if axis >= f.grid.dim {
        return Err(Error::AxisOutOfRange { axis, dim: f.grid.dim });
    }
    check_finite(f)?;
    Ok(derivative(f, axis, false))
}

fn grad_impl(f: &ScalarField, mask: bool) -> VectorField {
    let grid = f.grid;
    let spec = forward(f);
    let comps = (0..grid.dim)
        .map(|a| {
            let mut s = spec.clone();
            multiply(grid, &mut s, mask, |idx| ik(grid, idx, a));
            inverse(grid, s)
        })
        .collect();
    VectorField { grid, comps }
}

pub fn grad(f: &ScalarField) -> VectorField {
    grad_impl(f, false)
}

/// Gradient with the 2/3 mask applied.
pub fn grad_dealiased(f: &ScalarField) -> VectorField {
    grad_impl(f, true)
}

fn div_impl(fl: &VectorField, mask: bool) -> ScalarField {
    let grid = fl.grid;
    let mut acc = vec![Complex64::default(); grid.len()];
    for (a, c) in fl.comps.iter().enumerate() {
        let mut s = forward(c);
        multiply(grid, &mut s, mask, |idx| ik(grid, idx, a));
        for (x, y) in acc.iter_mut().zip(s) {
            *x += y;
        }
    }
    inverse(grid, acc)
}

pub fn div(fl: &VectorField) -> ScalarField {
    div_impl(fl, false)
}

pub fn div_dealiased(fl: &VectorField) -> ScalarField {
    div_impl(fl, true)
}

/// Row-wise divergence `(div T)_i = Σ_j ∂_j T_ij`.
pub fn div_tensor(t: &TensorField) -> VectorField {
    div_tensor_impl(t, false)
}

/// [`div_tensor`] with the 2/3 mask applied.
pub fn div_tensor_dealiased(t: &TensorField) -> VectorField {
    div_tensor_impl(t, true)
}

fn div_tensor_impl(t: &TensorField, mask: bool) -> VectorField {
    let grid = t.grid;
    let d = grid.dim;
    let comps = (0..d)
        .map(|i| {
            let mut acc = vec![Complex64::default(); grid.len()];
            for j in 0..d {
                let mut s = forward(t.get(i, j));
                multiply(grid, &mut s, mask, |idx| ik(grid, idx, j));
                for (x, y) in acc.iter_mut().zip(s) {
                    *x += y;
                }
            }
            inverse(grid, acc)
        })
        .collect();
    VectorField { grid, comps }
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid;
    let mut spec = forward(f);
    multiply(grid, &mut spec, false, |idx| Complex64::new(laplacian_symbol(grid, idx), 0.0));
    inverse(grid, spec)
}

/// `∇Δf`.
pub fn grad_laplacian(f: &ScalarField) -> VectorField {
    let grid = f.grid;
    let spec = forward(f);
    let comps = (0..grid.dim)
        .map(|a| {
            let mut s = spec.clone();
            multiply(grid, &mut s, false, |idx| ik(grid, idx, a) * laplacian_symbol(grid, idx));
            inverse(grid, s)
        })
        .collect();
    VectorField { grid, comps }
}

/// `∇F` with entry `(i, j) = ∂_j F_i`.
pub fn jacobian(fl: &VectorField) -> TensorField {
    let grid = fl.grid;
    let d = grid.dim;
    let mut comps = Vec::with_capacity(d * d);
    for c in &fl.comps {
        let spec = forward(c);
        for j in 0..d {
            let mut s = spec.clone();
            multiply(grid, &mut s, false, |idx| ik(grid, idx, j));
            comps.push(inverse(grid, s));
        }
    }
    TensorField { grid, comps }
}

/// Multiplies mode `k` by `symbol(k)`, where `k` holds the signed integer
/// wavenumbers per axis (the Nyquist index is reported as `+n/2`).
pub fn fourier_multiplier(f: &ScalarField, symbol: impl Fn(&[i64]) -> f64) -> ScalarField {
    let grid = f.grid;
    let mut spec = forward(f);
    let mut k = [0i64; 3];
    for (flat, c) in spec.iter_mut().enumerate() {
        let idx = grid.indices(flat);
        for a in 0..grid.dim {
            k[a] = grid.wavenumber(idx[a]);
        }
        *c *= symbol(&k[..grid.dim]);
    }
    inverse(grid, spec)
}

/// 2/3-rule truncation.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut spec = forward(f);
    dealias_in_place(&mut spec, f.grid);
    inverse(f.grid, spec)
}

pub fn dealias_vector(f: &VectorField) -> VectorField {
    f.map_comps(dealias)
}

/// Spectral interpolation onto a grid of the same dimension and different
/// resolution. Modes that do not fit (and Nyquist modes) are dropped.
pub fn resample(f: &ScalarField, target: GridSpec) -> Result<ScalarField> {
    let src = f.grid;
    if src.dim != target.dim {
        return Err(Error::GridMismatch);
    }
    if src == target {
        return Ok(f.clone());
    }
    let spec = forward(f);
    let half = (src.n.min(target.n) / 2) as i64;
    let scale = target.len() as f64 / src.len() as f64;
    let mut out = vec![Complex64::default(); target.len()];
    for (flat, c) in spec.iter().enumerate() {
        let idx = src.indices(flat);
        let mut dst = 0;
        let mut fits = true;
        for a in 0..src.dim {
            let k = src.wavenumber(idx[a]);
            if k.abs() >= half || src.is_nyquist(idx[a]) {
                fits = false;
                break;
            }
            let j = k.rem_euclid(target.n as i64) as usize;
            dst += j * target.stride(a);
        }
        if fits {
            out[dst] = c * scale;
        }
    }
    Ok(inverse(target, out))
}

pub fn resample_vector(f: &VectorField, target: GridSpec) -> Result<VectorField> {
    let comps = f.comps.iter().map(|c| resample(c, target)).collect::<Result<Vec<_>>>()?;
    Ok(VectorField { grid: target, comps })
}

// ---------------------------------------------------------------------------
// Quadrature and norms (volume of the unit torus is 1)

pub fn integrate(f: &ScalarField) -> f64 {
    // Pairwise summation keeps the mean accurate for long reductions.
    pairwise_sum(&f.values) / f.values.len() as f64
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    integrate(&f.map(|v| v * v)).sqrt()
}

pub fn l2_norm_vector(f: &VectorField) -> f64 {
    integrate(&f.norm_sq()).sqrt()
}

pub fn l2_norm_tensor(t: &TensorField) -> f64 {
    integrate(&t.frob_sq()).sqrt()
}

pub fn linf_norm(f: &ScalarField) -> f64 {
    f.max_abs()
}

pub fn linf_norm_vector(f: &VectorField) -> f64 {
    f.max_norm()
}

pub fn lgamma_norm(f: &ScalarField, gamma: f64) -> f64 {
    integrate(&f.map(|v| v.abs().powf(gamma))).powf(1.0 / gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(n: usize) -> GridSpec {
        GridSpec::new(1, n).unwrap()
    }

    fn sin_mode(grid: GridSpec, k: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| (2.0 * PI * k * x[0]).sin())
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(0, 16).is_err());
        assert!(GridSpec::new(4, 16).is_err());
        assert!(GridSpec::new(1, 6).is_err());
        assert!(GridSpec::new(1, 17).is_err());
        let g = GridSpec::new(3, 8).unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(g.cutoff(), 2);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = ScalarField::constant(g1(32), 3.5);
        assert!(ddx(&f, 0).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn derivative_of_sine() {
        let grid = g1(64);
        let d = ddx(&sin_mode(grid, 1.0), 0).unwrap();
        let exact = ScalarField::from_fn(grid, |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!((&d - &exact).max_abs() <= 1e-12);
    }

    #[test]
    fn derivative_of_cos_4pi() {
        let grid = g1(64);
        let f = ScalarField::from_fn(grid, |x| (4.0 * PI * x[0]).cos());
        let exact = ScalarField::from_fn(grid, |x| -4.0 * PI * (4.0 * PI * x[0]).sin());
        assert!((&ddx(&f, 0).unwrap() - &exact).max_abs() <= 1e-11);
    }

    #[test]
    fn ddx_errors() {
        let f = ScalarField::zeros(g1(16));
        assert_eq!(ddx(&f, 1), Err(Error::AxisOutOfRange { axis: 1, dim: 1 }));
        let mut bad = f.clone();
        bad.values_mut()[3] = f64::NAN;
        assert!(matches!(ddx(&bad, 0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn laplacian_and_grad_laplacian() {
        let grid = g1(64);
        let f = sin_mode(grid, 1.0);
        let lap = laplacian(&f);
        assert!((&lap - &f.scale(-4.0 * PI * PI)).max_abs() < 1e-10);
        let c = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
        let gl = grad_laplacian(&c);
        let exact = sin_mode(grid, 1.0).scale((2.0 * PI).powi(3));
        assert!((gl.comp(0) - &exact).max_abs() < 1e-11 * (2.0 * PI).powi(3));
        let k = ScalarField::constant(grid, 2.0);
        assert!(div(&grad(&k)).max_abs() < 1e-14);
    }

    #[test]
    fn dealias_examples() {
        let grid = g1(64);
        let low = sin_mode(grid, 1.0);
        assert!((&dealias(&low) - &low).max_abs() < 1e-14);
        let nyq = ScalarField::from_fn(grid, |x| (PI * 64.0 * x[0]).cos());
        assert!(dealias(&nyq).max_abs() < 1e-14);
        let above = sin_mode(grid, 22.0);
        assert!(dealias(&above).max_abs() < 1e-13);
        let edge = sin_mode(grid, 21.0);
        assert!((&dealias(&edge) - &edge).max_abs() < 1e-12);
    }

    #[test]
    fn quadrature_examples() {
        let grid = GridSpec::new(2, 16).unwrap();
        assert!((integrate(&ScalarField::constant(grid, 1.0)) - 1.0).abs() < 1e-15);
        let g = g1(32);
        assert!(integrate(&sin_mode(g, 1.0)).abs() < 1e-16);
        let f = ScalarField::from_fn(g, |x| 2.0 + (2.0 * PI * x[0]).cos());
        assert!((l2_norm(&f).powi(2) - 4.5).abs() < 1e-13);
        assert!((linf_norm(&f) - 3.0).abs() < 1e-15);
        let half = ScalarField::constant(g, 0.5);
        assert!((lgamma_norm(&half, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn resample_round_trip_of_band_limited_field() {
        let coarse = g1(16);
        let fine = g1(64);
        let f = ScalarField::from_fn(coarse, |x| 1.0 + 0.3 * (2.0 * PI * 3.0 * x[0]).cos());
        let up = resample(&f, fine).unwrap();
        let exact = ScalarField::from_fn(fine, |x| 1.0 + 0.3 * (2.0 * PI * 3.0 * x[0]).cos());
        assert!((&up - &exact).max_abs() < 1e-14);
        let down = resample(&up, coarse).unwrap();
        assert!((&down - &f).max_abs() < 1e-14);
    }

    #[test]
    fn two_dimensional_mixed_derivative() {
        let grid = GridSpec::new(2, 32).unwrap();
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos());
        let dy = ddx(&f, 1).unwrap();
        let exact = ScalarField::from_fn(grid, |x| {
            -4.0 * PI * (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin()
        });
        assert!((&dy - &exact).max_abs() < 1e-11);
        let j = jacobian(&grad(&f));
        assert!((j.get(0, 1) - j.get(1, 0)).max_abs() < 1e-10);
    }
}
