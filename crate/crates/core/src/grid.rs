//! Uniform Cartesian configuration-space grids, fields sampled on them,
//! discrete differential operators and quadrature.
//!
//! Samples are stored row-major with the particle-1 axes first, so axis 0 is
//! the slowest index and the last particle-2 axis is contiguous. Finite
//! differences treat everything outside the box as zero; callers are expected
//! to keep their fields decayed at the boundary.

use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative magnitude below which a field counts as decayed on the boundary shell.
pub const BOUNDARY_DECAY: f64 = 1e-12;

/// How derivatives are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffBackend {
    /// Centered stencils of the given even order (2, 4, 6 or 8), zero-padded.
    FiniteDifference { order: usize },
    /// Fourier differentiation; assumes periodic fields.
    Spectral,
}

impl Default for DiffBackend {
    fn default() -> Self {
        DiffBackend::FiniteDifference { order: 8 }
    }
}

impl DiffBackend {
    /// Half-width of the first-derivative stencil, 0 for spectral.
    pub fn stencil_radius(&self) -> usize {
        match self {
            DiffBackend::FiniteDifference { order } => order / 2,
            DiffBackend::Spectral => 0,
        }
    }
}

pub(crate) fn first_weights(order: usize) -> &'static [f64] {
    match order {
        2 => &[1.0 / 2.0],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        6 => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        8 => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => unreachable!("order validated on construction"),
    }
}

pub(crate) fn second_weights(order: usize) -> (f64, &'static [f64]) {
    match order {
        2 => (-2.0, &[1.0]),
        4 => (-5.0 / 2.0, &[4.0 / 3.0, -1.0 / 12.0]),
        6 => (-49.0 / 18.0, &[3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0]),
        8 => (
            -205.0 / 72.0,
            &[8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
        ),
        _ => unreachable!("order validated on construction"),
    }
}

/// A uniform grid over `[-L, L)` on every axis of a one- or two-particle
/// configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims_per_particle: usize,
    particles: usize,
    points_per_axis: usize,
    half_extent: f64,
    backend: DiffBackend,
}

impl Grid {
    /// Two-particle grid with `d` dimensions per particle, `n` points per axis
    /// and half extent `l`.
    pub fn new(d: usize, n: usize, l: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGrid("dimensions per particle must be >= 1".into()));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidGrid(format!("half extent must be positive, got {l}")));
        }
        let total = (n as u128).checked_pow(2 * d as u32);
        if total.map_or(true, |t| t > (1u128 << 34)) {
            return Err(Error::InvalidGrid(format!("{n}^{} points is too many", 2 * d)));
        }
        Ok(Grid {
            dims_per_particle: d,
            particles: 2,
            points_per_axis: n,
            half_extent: l,
            backend: DiffBackend::default(),
        })
    }

    pub fn with_backend(mut self, backend: DiffBackend) -> Result<Self> {
        if let DiffBackend::FiniteDifference { order } = backend {
            if ![2, 4, 6, 8].contains(&order) {
                return Err(Error::InvalidGrid(format!(
                    "finite-difference order must be 2, 4, 6 or 8, got {order}"
                )));
            }
            if self.points_per_axis < 2 * order {
                return Err(Error::InvalidGrid(format!(
                    "{} points per axis is too few for order {order}",
                    self.points_per_axis
                )));
            }
        }
        self.backend = backend;
        Ok(self)
    }

    /// The grid of particle 1 alone (same axes, spacing and backend).
    pub fn single_particle(&self) -> Self {
        Grid { particles: 1, ..*self }
    }

    pub fn dims_per_particle(&self) -> usize {
        self.dims_per_particle
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn backend(&self) -> DiffBackend {
        self.backend
    }

    pub fn axes(&self) -> usize {
        self.dims_per_particle * self.particles
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points_per_axis as f64
    }

    /// Volume element `h^axes`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.axes() as i32)
    }

    /// Coordinate of grid index `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.spacing()
    }

    pub fn axis_coordinates(&self) -> Vec<f64> {
        (0..self.points_per_axis).map(|i| self.coordinate(i)).collect()
    }

    /// Distance between neighbours along `axis` in the flat sample array.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.axes() - 1 - axis) as u32)
    }

    /// Index along `axis` of the flat sample `flat`.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.points_per_axis
    }

    /// First axis belonging to particle 2.
    pub fn particle2_axis(&self) -> usize {
        self.dims_per_particle
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.axes() {
            return Err(Error::AxisOutOfRange {
                axis,
                axes: self.axes(),
            });
        }
        Ok(())
    }

    /// True when the flat index lies within `margin` points of any face.
    pub fn near_boundary(&self, flat: usize, margin: usize) -> bool {
        let n = self.points_per_axis;
        (0..self.axes()).any(|a| {
            let i = self.axis_index(flat, a);
            i < margin || i + margin >= n
        })
    }
}

/// Scalar types that can be sampled on a grid.
pub trait Sample:
    Copy
    + Send
    + Sync
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + 'static
{
    fn to_complex(self) -> Complex64;
    fn from_complex(c: Complex64) -> Self;
    fn is_finite_sample(self) -> bool;
    fn magnitude(self) -> f64;
}

impl Sample for f64 {
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_complex(c: Complex64) -> Self {
        c.re
    }
    fn is_finite_sample(self) -> bool {
        self.is_finite()
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Sample for Complex64 {
    fn to_complex(self) -> Complex64 {
        self
    }
    fn from_complex(c: Complex64) -> Self {
        c
    }
    fn is_finite_sample(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Samples of a scalar quantity on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    samples: Vec<T>,
}

pub type RealField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Sample> Field<T> {
    pub fn new(grid: Grid, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::SampleCount {
                got: samples.len(),
                expected: grid.len(),
            });
        }
        Ok(Field { grid, samples })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            samples: vec![T::default(); grid.len()],
        }
    }

    /// Sample `f` at every grid point; `f` receives the coordinates of all axes.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> T) -> Self {
        let axes = grid.axes();
        let n = grid.points_per_axis();
        let coords = grid.axis_coordinates();
        let mut idx = vec![0usize; axes];
        let mut x = vec![coords[0]; axes];
        let mut samples = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            samples.push(f(&x));
            for a in (0..axes).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    x[a] = coords[idx[a]];
                    break;
                }
                idx[a] = 0;
                x[a] = coords[0];
            }
        }
        Field { grid, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite_sample())
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.magnitude()))
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|&s| f(s)).collect(),
        }
    }

    pub fn zip_map<U: Sample, V: Sample>(
        &self,
        other: &Field<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Field<V>> {
        self.same_grid(other.grid())?;
        Ok(Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub(crate) fn same_grid(&self, other: &Grid) -> Result<()> {
        if &self.grid != other {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Partial derivative along `axis`.
    pub fn diff(&self, axis: usize) -> Result<Self> {
        self.grid.check_axis(axis)?;
        let mut out = vec![T::default(); self.samples.len()];
        self.diff_into(axis, 1, &mut out);
        Ok(Field {
            grid: self.grid,
            samples: out,
        })
    }

    /// Second partial derivative along `axis`.
    pub fn diff2(&self, axis: usize) -> Result<Self> {
        self.grid.check_axis(axis)?;
        let mut out = vec![T::default(); self.samples.len()];
        self.diff_into(axis, 2, &mut out);
        Ok(Field {
            grid: self.grid,
            samples: out,
        })
    }

    /// Sum of second derivatives over every axis.
    pub fn laplacian(&self) -> Self {
        let mut acc = vec![T::default(); self.samples.len()];
        let mut tmp = vec![T::default(); self.samples.len()];
        for axis in 0..self.grid.axes() {
            self.diff_into(axis, 2, &mut tmp);
            for (a, &t) in acc.iter_mut().zip(&tmp) {
                *a += t;
            }
        }
        Field {
            grid: self.grid,
            samples: acc,
        }
    }

    fn diff_into(&self, axis: usize, order: usize, out: &mut [T]) {
        let n = self.grid.points_per_axis();
        let inner = self.grid.stride(axis);
        let h = self.grid.spacing();
        match self.grid.backend() {
            DiffBackend::FiniteDifference { order: acc } => {
                if order == 1 {
                    let w: Vec<f64> = first_weights(acc).iter().map(|c| c / h).collect();
                    stencil_odd(&self.samples, out, n, inner, &w);
                } else {
                    let (c0, ws) = second_weights(acc);
                    let w: Vec<f64> = ws.iter().map(|c| c / (h * h)).collect();
                    stencil_even(&self.samples, out, n, inner, c0 / (h * h), &w);
                }
            }
            DiffBackend::Spectral => {
                spectral(&self.samples, out, n, inner, self.grid.half_extent(), order)
            }
        }
    }
}

// out = sum_k w_k (f[i+k] - f[i-k]), zero outside the box.
fn stencil_odd<T: Sample>(src: &[T], dst: &mut [T], n: usize, inner: usize, w: &[f64]) {
    let m = w.len();
    let block = n * inner;
    for (s, d) in src.chunks_exact(block).zip(dst.chunks_exact_mut(block)) {
        if inner == 1 {
            for i in 0..n {
                let mut acc = T::default();
                if i >= m && i + m < n {
                    for (k, &wk) in w.iter().enumerate() {
                        acc += (s[i + k + 1] - s[i - k - 1]) * wk;
                    }
                } else {
                    for (k, &wk) in w.iter().enumerate() {
                        let k = k + 1;
                        if i + k < n {
                            acc += s[i + k] * wk;
                        }
                        if i >= k {
                            acc += s[i - k] * (-wk);
                        }
                    }
                }
                d[i] = acc;
            }
        } else {
            for i in 0..n {
                let row = &mut d[i * inner..(i + 1) * inner];
                row.fill(T::default());
                for (k, &wk) in w.iter().enumerate() {
                    let k = k + 1;
                    if i + k < n {
                        axpy(row, wk, &s[(i + k) * inner..(i + k + 1) * inner]);
                    }
                    if i >= k {
                        axpy(row, -wk, &s[(i - k) * inner..(i - k + 1) * inner]);
                    }
                }
            }
        }
    }
}

// out = c0 f[i] + sum_k w_k (f[i+k] + f[i-k]), zero outside the box.
fn stencil_even<T: Sample>(
    src: &[T],
    dst: &mut [T],
    n: usize,
    inner: usize,
    c0: f64,
    w: &[f64],
) {
    let m = w.len();
    let block = n * inner;
    for (s, d) in src.chunks_exact(block).zip(dst.chunks_exact_mut(block)) {
        if inner == 1 {
            for i in 0..n {
                let mut acc = s[i] * c0;
                if i >= m && i + m < n {
                    for (k, &wk) in w.iter().enumerate() {
                        acc += (s[i + k + 1] + s[i - k - 1]) * wk;
                    }
                } else {
                    for (k, &wk) in w.iter().enumerate() {
                        let k = k + 1;
                        if i + k < n {
                            acc += s[i + k] * wk;
                        }
                        if i >= k {
                            acc += s[i - k] * wk;
                        }
                    }
                }
                d[i] = acc;
            }
        } else {
            for i in 0..n {
                let row = &mut d[i * inner..(i + 1) * inner];
                for (r, &v) in row.iter_mut().zip(&s[i * inner..(i + 1) * inner]) {
                    *r = v * c0;
                }
                for (k, &wk) in w.iter().enumerate() {
                    let k = k + 1;
                    if i + k < n {
                        axpy(row, wk, &s[(i + k) * inner..(i + k + 1) * inner]);
                    }
                    if i >= k {
                        axpy(row, wk, &s[(i - k) * inner..(i - k + 1) * inner]);
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Sample>(y: &mut [T], a: f64, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

fn spectral<T: Sample>(src: &[T], dst: &mut [T], n: usize, inner: usize, l: f64, order: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let dk = std::f64::consts::PI / l;
    let multiplier: Vec<Complex64> = (0..n)
        .map(|m| {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            let k = signed * dk;
            match order {
                1 if m == n / 2 => Complex64::new(0.0, 0.0),
                1 => Complex64::new(0.0, k),
                _ => Complex64::new(-k * k, 0.0),
            }
        })
        .collect();
    let scale = 1.0 / n as f64;
    let block = n * inner;
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for (s, d) in src.chunks_exact(block).zip(dst.chunks_exact_mut(block)) {
        for j in 0..inner {
            for (i, v) in line.iter_mut().enumerate() {
                *v = s[i * inner + j].to_complex();
            }
            fwd.process(&mut line);
            for (v, m) in line.iter_mut().zip(&multiplier) {
                *v *= m * scale;
            }
            inv.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                d[i * inner + j] = T::from_complex(*v);
            }
        }
    }
}

/// Result of a quadrature together with the boundary-decay diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// False when the integrand exceeds [`BOUNDARY_DECAY`] (relative to its
    /// maximum) somewhere on the outermost layer of grid points.
    pub boundary_decayed: bool,
}

/// Neumaier-compensated sum in a fixed order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl Field<f64> {
    /// Riemann sum `sum f * h^axes`.
    pub fn integrate(&self) -> f64 {
        compensated_sum(self.samples.iter().copied()) * self.grid.cell_volume()
    }

    pub fn integrate_checked(&self) -> Integral {
        let peak = self.max_abs();
        let shell = self
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.near_boundary(*i, 1))
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        Integral {
            value: self.integrate(),
            boundary_decayed: shell <= BOUNDARY_DECAY * peak,
        }
    }

    pub fn gradient(&self) -> VectorField {
        let components = (0..self.grid.axes())
            .map(|a| self.diff(a).expect("axis in range"))
            .collect();
        VectorField { components }
    }

    pub fn mul(&self, other: &RealField) -> Result<RealField> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Integrate out the particle-2 coordinates.
    pub fn marginalize_particle2(&self) -> Result<RealField> {
        let grid = self.two_particle_grid()?;
        let block = grid.points_per_axis().pow(grid.dims_per_particle() as u32);
        let w = grid.spacing().powi(grid.dims_per_particle() as i32);
        let samples = self
            .samples
            .chunks_exact(block)
            .map(|c| compensated_sum(c.iter().copied()) * w)
            .collect();
        Field::new(grid.single_particle(), samples)
    }

    /// Integrate out the particle-1 coordinates.
    pub fn marginalize_particle1(&self) -> Result<RealField> {
        let grid = self.two_particle_grid()?;
        let block = grid.points_per_axis().pow(grid.dims_per_particle() as u32);
        let w = grid.spacing().powi(grid.dims_per_particle() as i32);
        let samples = (0..block)
            .map(|j| compensated_sum((0..block).map(|i| self.samples[i * block + j])) * w)
            .collect();
        Field::new(grid.single_particle(), samples)
    }

    fn two_particle_grid(&self) -> Result<Grid> {
        if self.grid.particles() != 2 {
            return Err(Error::InvalidGrid("marginal needs a two-particle field".into()));
        }
        Ok(self.grid)
    }
}

impl<'a, T: Sample> Add for &'a Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a + b).expect("fields on one grid")
    }
}

impl<'a, T: Sample> Sub for &'a Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a - b).expect("fields on one grid")
    }
}

/// One real field per axis on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<RealField>,
}

impl VectorField {
    pub fn new(components: Vec<RealField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidGrid("vector field without components".into()))?;
        if components.len() != first.grid().axes() {
            return Err(Error::InvalidGrid(format!(
                "{} components for a {}-axis grid",
                components.len(),
                first.grid().axes()
            )));
        }
        for c in &components[1..] {
            c.same_grid(first.grid())?;
        }
        Ok(VectorField { components })
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[RealField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &RealField {
        &self.components[axis]
    }

    pub fn into_components(self) -> Vec<RealField> {
        self.components
    }

    pub fn divergence(&self) -> RealField {
        let mut acc = RealField::zeros(*self.grid());
        for (a, c) in self.components.iter().enumerate() {
            let d = c.diff(a).expect("axis in range");
            for (x, y) in acc.samples_mut().iter_mut().zip(d.samples()) {
                *x += y;
            }
        }
        acc
    }

    pub fn dot(&self, other: &VectorField) -> Result<RealField> {
        let mut acc = RealField::zeros(*self.grid());
        for (a, b) in self.components.iter().zip(&other.components) {
            a.same_grid(b.grid())?;
            for ((x, p), q) in acc.samples_mut().iter_mut().zip(a.samples()).zip(b.samples()) {
                *x += p * q;
            }
        }
        Ok(acc)
    }

    pub fn norm_sqr(&self) -> RealField {
        self.dot(self).expect("same grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn build_grid_examples() {
        let g = Grid::new(1, 8, 4.0).unwrap();
        assert_eq!(g.axes(), 2);
        assert_eq!(g.len(), 64);
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.coordinate(0), -4.0);

        let g = Grid::new(1, 256, 8.0).unwrap();
        assert_eq!(g.len(), 65536);
        assert_eq!(g.spacing(), 0.0625);

        let g = Grid::new(2, 8, 4.0).unwrap();
        assert_eq!(g.axes(), 4);
        assert_eq!(g.len(), 4096);
    }

    #[test]
    fn build_grid_rejects_bad_input() {
        assert!(Grid::new(1, 7, 4.0).is_err());
        assert!(Grid::new(1, 9, 4.0).is_err());
        assert!(Grid::new(1, 6, 4.0).is_err());
        assert!(Grid::new(1, 8, 0.0).is_err());
        assert!(Grid::new(1, 8, -1.0).is_err());
        assert!(Grid::new(0, 8, 1.0).is_err());
        let g = Grid::new(1, 8, 4.0).unwrap();
        assert!(g.with_backend(DiffBackend::FiniteDifference { order: 3 }).is_err());
        // order 8 needs 16 points
        assert!(g.with_backend(DiffBackend::FiniteDifference { order: 8 }).is_err());
    }

    #[test]
    fn diff_axis_out_of_range() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let f = RealField::zeros(g);
        assert!(matches!(f.diff(2), Err(Error::AxisOutOfRange { axis: 2, axes: 2 })));
    }

    #[test]
    fn from_fn_orders_axes_row_major() {
        let g = Grid::new(1, 8, 4.0).unwrap();
        let f = RealField::from_fn(g, |x| 10.0 * x[0] + x[1]);
        // flat index 1 advances the last axis
        assert_eq!(f.samples()[0], -44.0);
        assert_eq!(f.samples()[1], -43.0);
        assert_eq!(f.samples()[8], -34.0);
        assert_eq!(g.axis_index(9, 0), 1);
        assert_eq!(g.axis_index(9, 1), 1);
    }

    #[test]
    fn constant_has_zero_derivative_in_the_interior() {
        let g = Grid::new(1, 32, 4.0).unwrap();
        let f = RealField::from_fn(g, |_| 3.5);
        for axis in 0..2 {
            let d = f.diff(axis).unwrap();
            for (i, v) in d.samples().iter().enumerate() {
                if !g.near_boundary(i, 4) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        let gs = g.with_backend(DiffBackend::Spectral).unwrap();
        let f = RealField::from_fn(gs, |_| 3.5);
        assert!(f.diff(1).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn linear_field_differentiates_exactly() {
        let g = Grid::new(1, 32, 4.0).unwrap();
        let f = RealField::from_fn(g, |x| x[0]);
        let d0 = f.diff(0).unwrap();
        let d1 = f.diff(1).unwrap();
        for i in 0..g.len() {
            if !g.near_boundary(i, 4) {
                assert_relative_eq!(d0.samples()[i], 1.0, epsilon = 1e-13);
                assert!(d1.samples()[i].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let l = 4.0;
        let g = Grid::new(1, 64, l)
            .unwrap()
            .with_backend(DiffBackend::Spectral)
            .unwrap();
        let f = RealField::from_fn(g, |x| (PI * x[0] / l).sin());
        let d = f.diff(0).unwrap();
        let exact = RealField::from_fn(g, |x| PI / l * (PI * x[0] / l).cos());
        assert!((&d - &exact).max_abs() < 1e-10);
        // and the untouched axis
        assert!(f.diff(1).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_quadratic_is_four() {
        let g = Grid::new(1, 32, 4.0).unwrap();
        let f = RealField::from_fn(g, |x| x[0] * x[0] + x[1] * x[1]);
        let lap = f.laplacian();
        for (i, v) in lap.samples().iter().enumerate() {
            if !g.near_boundary(i, 4) {
                assert_relative_eq!(*v, 4.0, epsilon = 1e-11);
            }
        }
        assert!(RealField::from_fn(g, |_| 1.0).laplacian().samples()[16 * 32 + 16].abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_gaussian() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = RealField::from_fn(g, |x| (-x[0] * x[0] - x[1] * x[1]).exp());
        let lap = f.laplacian();
        let exact = RealField::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            (4.0 * r2 - 4.0) * (-r2).exp()
        });
        let peak = exact.max_abs();
        assert!((&lap - &exact).max_abs() < 1e-6 * peak);
    }

    #[test]
    fn integrals() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        assert_eq!(RealField::zeros(g).integrate(), 0.0);
        let gauss = RealField::from_fn(g, |x| (-x[0] * x[0] - x[1] * x[1]).exp());
        let q = gauss.integrate_checked();
        assert!((q.value - PI).abs() < 1e-8);
        assert!(q.boundary_decayed);

        let g = Grid::new(1, 16, 4.0).unwrap();
        let one = RealField::from_fn(g, |_| 1.0);
        let q = one.integrate_checked();
        assert_relative_eq!(q.value, 64.0, epsilon = 1e-12);
        assert!(!q.boundary_decayed);
    }

    #[test]
    fn marginals_of_product_gaussian() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = RealField::from_fn(g, |x| (-x[0] * x[0] - x[1] * x[1]).exp());
        let m = f.marginalize_particle2().unwrap();
        assert_eq!(m.grid().axes(), 1);
        for (i, v) in m.samples().iter().enumerate() {
            let x = g.coordinate(i);
            assert!((v - PI.sqrt() * (-x * x).exp()).abs() < 1e-10);
        }
        assert_relative_eq!(m.integrate(), f.integrate(), max_relative = 1e-13);

        let z = RealField::zeros(g).marginalize_particle2().unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn symmetric_field_has_equal_marginals() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let f = RealField::from_fn(g, |x| {
            (-(x[0] * x[0] + x[1] * x[1]) - 0.7 * x[0] * x[1] + 0.3 * (x[0] + x[1])).exp()
        });
        let m2 = f.marginalize_particle2().unwrap();
        let m1 = f.marginalize_particle1().unwrap();
        for (a, b) in m2.samples().iter().zip(m1.samples()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn marginal_on_four_axes() {
        let g = Grid::new(2, 16, 5.0).unwrap();
        let f = RealField::from_fn(g, |x| (-x.iter().map(|v| v * v).sum::<f64>()).exp());
        let m = f.marginalize_particle2().unwrap();
        assert_eq!(m.samples().len(), 256);
        assert_relative_eq!(m.integrate(), f.integrate(), max_relative = 1e-12);
    }
}
