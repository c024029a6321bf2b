//! Periodic-box spectral discretization: grids, real scalar fields, and
//! FFT-based operators (Laplacian, kinetic quadratic form, preconditioner,
//! trigonometric resampling).
//!
//! The box is `[-L, L)³` sampled on `n³` uniform nodes, stored row-major with
//! the first coordinate fastest. Wavenumbers are `k = (π/L)·m` with integer
//! frequencies `m ∈ [-n/2, n/2)`. Quadrature is the plain node sum `h³ Σ`,
//! which is exact for band-limited periodic integrands.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("box half-length must be positive and finite, got {0}")]
    BadHalfLength(f64),
    #[error("points per dim must be even, >= 8, with no prime factors beyond 2 and 3, got {0}")]
    BadPointCount(usize),
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field values must all be finite")]
    NonFinite,
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Uniform periodic grid on `[-L, L)³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    half_length: T,
    points_per_dim: usize,
}

/// FFT sizes are restricted to even 3-smooth counts: powers of two and
/// `2^a 3^b` mixtures (32, 48, 64, 96, ...) keep the transforms fast while
/// admitting the common 48-point lattice.
fn is_admissible_point_count(n: usize) -> bool {
    if n < 8 || n % 2 != 0 {
        return false;
    }
    let mut m = n;
    for p in [2usize, 3] {
        while m % p == 0 {
            m /= p;
        }
    }
    m == 1
}

impl<T: Real> GridSpec<T> {
    /// Build a grid; `half_length > 0`, `points_per_dim` even 3-smooth `>= 8`.
    pub fn new(half_length: T, points_per_dim: usize) -> Result<Self, GridError> {
        if !(half_length > T::zero()) || !half_length.is_finite() {
            return Err(GridError::BadHalfLength(half_length.as_f64()));
        }
        if !is_admissible_point_count(points_per_dim) {
            return Err(GridError::BadPointCount(points_per_dim));
        }
        Ok(Self {
            half_length,
            points_per_dim,
        })
    }

    #[inline]
    pub fn half_length(&self) -> T {
        self.half_length
    }

    #[inline]
    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// Node spacing `h = 2L/n`, exact by construction.
    #[inline]
    pub fn spacing(&self) -> T {
        T::of(2.0) * self.half_length / T::of(self.points_per_dim as f64)
    }

    /// Total node count `n³`.
    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_dim.pow(3)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along any axis: `-L + i h`.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        -self.half_length + self.spacing() * T::of(i as f64)
    }

    /// Signed integer frequency of mode index `i`: `0..n/2-1, -n/2..-1`.
    #[inline]
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.points_per_dim as i64;
        let i = i as i64;
        if i <= n / 2 - 1 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber of mode index `i`: `(π/L)·freq(i)`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> T {
        T::of(std::f64::consts::PI) / self.half_length * T::of(self.freq(i) as f64)
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        let n = self.points_per_dim;
        i1 + n * (i2 + n * i3)
    }

    /// Node quadrature weight `h³`.
    #[inline]
    pub fn cell_volume(&self) -> T {
        let h = self.spacing();
        h * h * h
    }
}

/// Deterministic two-level compensated sum: fixed 1024-element chunks are
/// summed independently (in parallel) and the partials are folded in order,
/// so results do not depend on the thread count.
pub fn stable_sum<T: Real>(values: &[T]) -> T {
    const CHUNK: usize = 1024;
    if values.len() <= CHUNK {
        return values.iter().copied().sum();
    }
    let partials: Vec<T> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().copied().sum())
        .collect();
    partials.iter().copied().sum()
}

/// Real scalar samples on a [`GridSpec`], row-major with `x₁` fastest.
#[derive(Clone, Debug)]
pub struct ScalarField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn constant(grid: GridSpec<T>, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec<T>, values: Vec<T>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    /// Sample `f(x₁, x₂, x₃)` at every node.
    pub fn from_fn(grid: GridSpec<T>, f: impl Fn(T, T, T) -> T + Sync) -> Self {
        let n = grid.points_per_dim();
        let coords: Vec<T> = (0..n).map(|i| grid.coord(i)).collect();
        let mut values = vec![T::zero(); grid.len()];
        values
            .par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(i3, slab)| {
                let x3 = coords[i3];
                for i2 in 0..n {
                    let x2 = coords[i2];
                    for i1 in 0..n {
                        slab[i1 + n * i2] = f(coords[i1], x2, x3);
                    }
                }
            });
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec<T> {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Box quadrature `h³ Σ f`.
    pub fn integrate(&self) -> T {
        self.grid.cell_volume() * stable_sum(&self.values)
    }

    /// `∫ f g` over the box.
    pub fn inner(&self, other: &Self) -> T {
        debug_assert_eq!(self.grid, other.grid);
        const CHUNK: usize = 1024;
        let partials: Vec<T> = self
            .values
            .par_chunks(CHUNK)
            .zip(other.values.par_chunks(CHUNK))
            .map(|(a, b)| {
                let mut s = T::zero();
                for (x, y) in a.iter().zip(b) {
                    s = s + *x * *y;
                }
                s
            })
            .collect();
        self.grid.cell_volume() * partials.iter().copied().sum()
    }

    pub fn norm_l2(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn linf(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `self += c * other`, elementwise.
    pub fn add_scaled(&mut self, c: T, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .par_iter_mut()
            .zip(other.values.par_iter())
            .for_each(|(a, b)| *a = *a + c * *b);
    }

    pub fn scale(&mut self, c: T) {
        self.values.par_iter_mut().for_each(|a| *a = *a * c);
    }

    /// Elementwise map into a new field.
    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        let values = self.values.par_iter().map(|&v| f(v)).collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Elementwise product.
    pub fn mul_pointwise(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Max |value| over the six box faces divided by the global max |value|.
    /// Gauges how much of the profile leaks to the (periodic) boundary.
    pub fn boundary_leak(&self) -> T {
        let n = self.grid.points_per_dim();
        let mut face_max = T::zero();
        let mut check = |idx: usize| {
            let v = self.values[idx].abs();
            if v > face_max {
                face_max = v;
            }
        };
        for a in 0..n {
            for b in 0..n {
                check(self.grid.index(0, a, b));
                check(self.grid.index(a, 0, b));
                check(self.grid.index(a, b, 0));
            }
        }
        let global = self.linf();
        if global == T::zero() {
            T::zero()
        } else {
            face_max / global
        }
    }

    /// Density centroid `∫ x f / ∫ f` (meaningful for localized nonnegative f).
    pub fn centroid(&self) -> [T; 3] {
        let n = self.grid.points_per_dim();
        let mass = stable_sum(&self.values);
        if mass == T::zero() {
            return [T::zero(); 3];
        }
        let mut m = [T::zero(); 3];
        for i3 in 0..n {
            let x3 = self.grid.coord(i3);
            for i2 in 0..n {
                let x2 = self.grid.coord(i2);
                let mut row = [T::zero(); 3];
                for i1 in 0..n {
                    let v = self.values[self.grid.index(i1, i2, i3)];
                    row[0] = row[0] + v * self.grid.coord(i1);
                    row[1] = row[1] + v * x2;
                    row[2] = row[2] + v * x3;
                }
                for a in 0..3 {
                    m[a] = m[a] + row[a];
                }
            }
        }
        [m[0] / mass, m[1] / mass, m[2] / mass]
    }

    /// Root-mean-square radius about `center`, weighted by this field.
    pub fn rms_radius_about(&self, center: [T; 3]) -> T {
        let n = self.grid.points_per_dim();
        let mass = stable_sum(&self.values);
        if mass <= T::zero() {
            return T::zero();
        }
        let mut second = T::zero();
        for i3 in 0..n {
            let d3 = self.grid.coord(i3) - center[2];
            for i2 in 0..n {
                let d2 = self.grid.coord(i2) - center[1];
                let mut row = T::zero();
                for i1 in 0..n {
                    let d1 = self.grid.coord(i1) - center[0];
                    let v = self.values[self.grid.index(i1, i2, i3)];
                    row = row + v * (d1 * d1 + d2 * d2 + d3 * d3);
                }
                second = second + row;
            }
        }
        (second / mass).sqrt()
    }
}

/// Reusable FFT plans and spectral kernels for one grid size.
pub struct Spectral3d<T: Real> {
    grid: GridSpec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

enum Axis {
    Y,
    Z,
}

impl<T: Real> Spectral3d<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_dim();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec<T> {
        self.grid
    }

    fn fft_lines(&self, buf: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        let n = self.grid.points_per_dim();
        buf.par_chunks_mut(n * n).for_each_init(
            || vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()],
            |scratch, slab| plan.process_with_scratch(slab, scratch),
        );
    }

    fn transpose(&self, src: &[Complex<T>], dst: &mut [Complex<T>], axis: Axis) {
        let n = self.grid.points_per_dim();
        match axis {
            // (x, y, z) -> (y, x, z): swap within each z-slab.
            Axis::Y => dst.par_chunks_mut(n * n).enumerate().for_each(|(i3, slab)| {
                let base = i3 * n * n;
                for i2 in 0..n {
                    for i1 in 0..n {
                        slab[i2 + n * i1] = src[base + i1 + n * i2];
                    }
                }
            }),
            // (x, y, z) -> (z, y, x).
            Axis::Z => dst.par_chunks_mut(n * n).enumerate().for_each(|(i1, slab)| {
                for i2 in 0..n {
                    for i3 in 0..n {
                        slab[i3 + n * i2] = src[i1 + n * (i2 + n * i3)];
                    }
                }
            }),
        }
    }

    fn fft3_inplace(&self, buf: &mut Vec<Complex<T>>, plan: &Arc<dyn Fft<T>>) {
        let len = buf.len();
        let mut tmp = vec![Complex::new(T::zero(), T::zero()); len];
        self.fft_lines(buf, plan);
        self.transpose(buf, &mut tmp, Axis::Y);
        self.fft_lines(&mut tmp, plan);
        self.transpose(&tmp, buf, Axis::Y);
        self.transpose(buf, &mut tmp, Axis::Z);
        self.fft_lines(&mut tmp, plan);
        self.transpose(&tmp, buf, Axis::Z);
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, f: &ScalarField<T>) -> Vec<Complex<T>> {
        debug_assert_eq!(f.grid(), self.grid);
        let mut buf: Vec<Complex<T>> = f
            .values()
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        self.fft3_inplace(&mut buf, &self.forward);
        buf
    }

    /// Inverse transform (normalized by `1/n³`), real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex<T>>) -> ScalarField<T> {
        self.fft3_inplace(&mut spectrum, &self.inverse);
        let scale = T::one() / T::of(self.grid.len() as f64);
        let values = spectrum.par_iter().map(|c| c.re * scale).collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Multiply the spectrum in place by a function of the wavenumber vector.
    fn apply_symbol(&self, spectrum: &mut [Complex<T>], symbol: impl Fn(T) -> T + Sync) {
        let n = self.grid.points_per_dim();
        let k: Vec<T> = (0..n).map(|i| self.grid.wavenumber(i)).collect();
        spectrum
            .par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(i3, slab)| {
                let k3sq = k[i3] * k[i3];
                for i2 in 0..n {
                    let k23 = k[i2] * k[i2] + k3sq;
                    for i1 in 0..n {
                        let ksq = k[i1] * k[i1] + k23;
                        let w = symbol(ksq);
                        slab[i1 + n * i2] = slab[i1 + n * i2] * w;
                    }
                }
            });
    }

    /// `-Δ f`, computed spectrally.
    pub fn laplacian(&self, f: &ScalarField<T>) -> ScalarField<T> {
        let mut spec = self.forward(f);
        self.apply_symbol(&mut spec, |ksq| ksq);
        self.inverse_real(spec)
    }

    /// `∫ |∇f|²` via Parseval; always nonnegative.
    pub fn kinetic_form(&self, f: &ScalarField<T>) -> T {
        let spec = self.forward(f);
        let n = self.grid.points_per_dim();
        let k: Vec<T> = (0..n).map(|i| self.grid.wavenumber(i)).collect();
        let partials: Vec<T> = spec
            .par_chunks(n * n)
            .enumerate()
            .map(|(i3, slab)| {
                let k3sq = k[i3] * k[i3];
                let mut s = T::zero();
                for i2 in 0..n {
                    let k23 = k[i2] * k[i2] + k3sq;
                    for i1 in 0..n {
                        let c = slab[i1 + n * i2];
                        s = s + (k[i1] * k[i1] + k23) * (c.re * c.re + c.im * c.im);
                    }
                }
                s
            })
            .collect();
        let sum: T = partials.iter().copied().sum();
        sum * self.grid.cell_volume() / T::of(self.grid.len() as f64)
    }

    /// `(-Δ + shift)^{-1} f`: the inverse-kinetic preconditioner.
    pub fn shifted_inverse_kinetic(&self, f: &ScalarField<T>, shift: T) -> ScalarField<T> {
        let mut spec = self.forward(f);
        self.apply_symbol(&mut spec, |ksq| T::one() / (ksq + shift));
        self.inverse_real(spec)
    }

    /// Spectral partial derivative `∂f/∂x_axis`.
    pub fn derivative(&self, f: &ScalarField<T>, axis: usize) -> ScalarField<T> {
        let n = self.grid.points_per_dim();
        let k: Vec<T> = (0..n).map(|i| self.grid.wavenumber(i)).collect();
        let mut spec = self.forward(f);
        spec.par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(i3, slab)| {
                for i2 in 0..n {
                    for i1 in 0..n {
                        let kv = match axis {
                            0 => k[i1],
                            1 => k[i2],
                            _ => k[i3],
                        };
                        let c = slab[i1 + n * i2];
                        slab[i1 + n * i2] = Complex::new(-kv * c.im, kv * c.re);
                    }
                }
            });
        self.inverse_real(spec)
    }

    /// Zero all modes with any |frequency| above `2/3 · n/2` (dealiasing).
    pub fn lowpass_two_thirds(&self, f: &ScalarField<T>) -> ScalarField<T> {
        let n = self.grid.points_per_dim() as i64;
        let cut = n / 3;
        self.lowpass(f, cut)
    }

    /// Zero all modes with any |frequency| above `cut`.
    pub fn lowpass(&self, f: &ScalarField<T>, cut: i64) -> ScalarField<T> {
        let n = self.grid.points_per_dim();
        let keep: Vec<bool> = (0..n).map(|i| self.grid.freq(i).abs() <= cut).collect();
        let mut spec = self.forward(f);
        spec.par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(i3, slab)| {
                for i2 in 0..n {
                    for i1 in 0..n {
                        if !(keep[i1] && keep[i2] && keep[i3]) {
                            slab[i1 + n * i2] = Complex::new(T::zero(), T::zero());
                        }
                    }
                }
            });
        self.inverse_real(spec)
    }

    /// Shift a field: returns samples of `f(x + delta)` (exact Fourier phase
    /// twist; no interpolation error for grid-representable fields).
    pub fn translate(&self, f: &ScalarField<T>, delta: [T; 3]) -> ScalarField<T> {
        let n = self.grid.points_per_dim();
        let mut spec = self.forward(f);
        let phase: Vec<Vec<Complex<T>>> = (0..3)
            .map(|axis| {
                (0..n)
                    .map(|i| {
                        let arg = self.grid.wavenumber(i) * delta[axis];
                        Complex::new(arg.cos(), arg.sin())
                    })
                    .collect()
            })
            .collect();
        spec.par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(i3, slab)| {
                let p3 = phase[2][i3];
                for i2 in 0..n {
                    let p23 = phase[1][i2] * p3;
                    for i1 in 0..n {
                        slab[i1 + n * i2] = slab[i1 + n * i2] * (phase[0][i1] * p23);
                    }
                }
            });
        self.inverse_real(spec)
    }

    /// Trigonometric interpolation of `f` at the affine targets
    /// `scale · y + shift` for every node `y` of `out_grid`.
    ///
    /// Targets outside the source box wrap periodically; callers working with
    /// decayed profiles should enforce their own support checks. Evaluation is
    /// exact (to rounding) for band-limited fields without Nyquist content.
    pub fn sample_affine(
        &self,
        f: &ScalarField<T>,
        scale: T,
        shift: [T; 3],
        out_grid: GridSpec<T>,
    ) -> ScalarField<T> {
        debug_assert_eq!(f.grid(), self.grid);
        let n = self.grid.points_per_dim();
        let n_out = out_grid.points_per_dim();
        let inv_len = T::one() / T::of(self.grid.len() as f64);
        let mut spec = self.forward(f);
        spec.par_iter_mut().for_each(|c| *c = *c * inv_len);

        // Per-axis evaluation matrices E[j, m] = exp(i k_m (scale·y_j + shift)),
        // with the extra (−1)^freq factor relating DFT coefficients to the
        // e^{ikx} basis on a box that starts at −L.
        let eval_matrix = |axis: usize| -> Vec<Complex<T>> {
            let pi = T::of(std::f64::consts::PI);
            let mut e = vec![Complex::new(T::zero(), T::zero()); n_out * n];
            for j in 0..n_out {
                let target = scale * out_grid.coord(j) + shift[axis];
                for m in 0..n {
                    let arg = self.grid.wavenumber(m) * target
                        + pi * T::of(self.grid.freq(m) as f64);
                    e[j * n + m] = Complex::new(arg.cos(), arg.sin());
                }
            }
            e
        };

        // Contract the mode index axis-by-axis; lines are made contiguous by
        // the same transposes used in the FFT passes.
        let contract_lines = |data: &[Complex<T>], e: &[Complex<T>], lines: usize| {
            let mut out = vec![Complex::new(T::zero(), T::zero()); lines * n_out];
            out.par_chunks_mut(n_out)
                .zip(data.par_chunks(n))
                .for_each(|(out_line, in_line)| {
                    for (j, o) in out_line.iter_mut().enumerate() {
                        let row = &e[j * n..(j + 1) * n];
                        let mut acc = Complex::new(T::zero(), T::zero());
                        for (w, v) in row.iter().zip(in_line) {
                            acc = acc + *w * *v;
                        }
                        *o = acc;
                    }
                });
            out
        };

        // Axis X (contiguous), then Y and Z via transposes. Intermediate
        // shapes mix n and n_out, so the transposes are done inline here.
        let nn = n;
        let data = contract_lines(&spec, &eval_matrix(0), nn * nn); // [x_out, y, z]
        // Transpose (x_out, y, z) -> (y, x_out, z)
        let mut t = vec![Complex::new(T::zero(), T::zero()); n_out * nn * nn];
        t.par_chunks_mut(n_out * nn).enumerate().for_each(|(i3, slab)| {
            for i2 in 0..nn {
                for i1 in 0..n_out {
                    slab[i2 + nn * i1] = data[i1 + n_out * (i2 + nn * i3)];
                }
            }
        });
        let data = contract_lines(&t, &eval_matrix(1), n_out * nn); // [y_out, x_out, z]
        // Transpose (y_out, x_out, z) -> (z, x_out, y_out)
        let mut t = vec![Complex::new(T::zero(), T::zero()); nn * n_out * n_out];
        t.par_chunks_mut(nn * n_out).enumerate().for_each(|(i2, slab)| {
            // slab index over (z, x_out) for fixed y_out = i2
            for i1 in 0..n_out {
                for i3 in 0..nn {
                    slab[i3 + nn * i1] = data[i2 + n_out * (i1 + n_out * i3)];
                }
            }
        });
        let data = contract_lines(&t, &eval_matrix(2), n_out * n_out); // [z_out, x_out, y_out]
        // Back to (x_out, y_out, z_out)
        let mut values = vec![T::zero(); n_out * n_out * n_out];
        values
            .par_chunks_mut(n_out * n_out)
            .enumerate()
            .for_each(|(i3, slab)| {
                for i2 in 0..n_out {
                    for i1 in 0..n_out {
                        slab[i1 + n_out * i2] = data[i3 + n_out * (i1 + n_out * i2)].re;
                    }
                }
            });
        ScalarField {
            grid: out_grid,
            values,
        }
    }
}

/// Build a grid (`L`, `n` nodes per dimension).
pub fn make_grid<T: Real>(half_length: T, points_per_dim: usize) -> Result<GridSpec<T>, GridError> {
    GridSpec::new(half_length, points_per_dim)
}

/// `h³ Σ f` over the box.
pub fn integrate<T: Real>(f: &ScalarField<T>) -> T {
    f.integrate()
}

/// Spectral `-Δ f`. Plans transforms on each call; hot paths should hold a
/// [`Spectral3d`] instead.
pub fn laplacian_apply<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    Spectral3d::new(f.grid()).laplacian(f)
}

/// `∫ |∇f|²` via Parseval.
pub fn kinetic_quadratic_form<T: Real>(f: &ScalarField<T>) -> T {
    Spectral3d::new(f.grid()).kinetic_form(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(l: f64, n: usize) -> GridSpec<f64> {
        GridSpec::new(l, n).unwrap()
    }

    #[test]
    fn make_grid_spacing() {
        assert_eq!(grid(8.0, 32).spacing(), 0.5);
        assert_eq!(grid(12.0, 64).spacing(), 0.375);
    }

    #[test]
    fn make_grid_rejects_bad_counts() {
        assert!(GridSpec::new(8.0, 30).is_err());
        assert!(GridSpec::new(8.0, 4).is_err());
        assert!(GridSpec::new(8.0, 27).is_err());
        assert!(GridSpec::new(-1.0, 32).is_err());
        assert!(GridSpec::new(8.0, 48).is_ok());
    }

    #[test]
    fn integrate_constant_and_zero() {
        let g = grid(8.0, 16);
        assert!((ScalarField::constant(g, 1.0).integrate() - 4096.0).abs() < 1e-9);
        assert_eq!(ScalarField::zeros(g).integrate(), 0.0);
    }

    #[test]
    fn integrate_normalized_gaussian() {
        let g = grid(8.0, 32);
        let c = PI.powf(-0.75);
        let f = ScalarField::from_fn(g, |x, y, z| c * (-(x * x + y * y + z * z) / 2.0).exp());
        let norm = f.mul_pointwise(&f).integrate();
        assert!((norm - 1.0).abs() < 1e-10, "norm = {norm}");
    }

    #[test]
    fn laplacian_of_fourier_mode() {
        let g = grid(8.0, 32);
        let k = PI / 8.0;
        let f = ScalarField::from_fn(g, |x, _, _| (k * x).sin());
        let lap = laplacian_apply(&f);
        let want = k * k;
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a - want * b).abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = grid(8.0, 16);
        let lap = laplacian_apply(&ScalarField::constant(g, 3.5));
        assert!(lap.linf() < 1e-12);
    }

    /// Smooth decayed bump used by several spectral tests.
    fn bump(g: GridSpec<f64>, width: f64) -> ScalarField<f64> {
        ScalarField::from_fn(g, |x, y, z| {
            let r2 = x * x + y * y + z * z;
            (1.0 + 0.3 * x + 0.2 * y * z) * (-r2 / (2.0 * width * width)).exp()
        })
    }

    fn fd_laplacian(f: &ScalarField<f64>) -> ScalarField<f64> {
        let g = f.grid();
        let n = g.points_per_dim();
        let h2 = g.spacing() * g.spacing();
        let mut out = ScalarField::zeros(g);
        for i3 in 0..n {
            for i2 in 0..n {
                for i1 in 0..n {
                    let c = 6.0 * f.values()[g.index(i1, i2, i3)];
                    let s = f.values()[g.index((i1 + 1) % n, i2, i3)]
                        + f.values()[g.index((i1 + n - 1) % n, i2, i3)]
                        + f.values()[g.index(i1, (i2 + 1) % n, i3)]
                        + f.values()[g.index(i1, (i2 + n - 1) % n, i3)]
                        + f.values()[g.index(i1, i2, (i3 + 1) % n)]
                        + f.values()[g.index(i1, i2, (i3 + n - 1) % n)];
                    out.values_mut()[g.index(i1, i2, i3)] = (c - s) / h2;
                }
            }
        }
        out
    }

    #[test]
    fn laplacian_matches_finite_differences_at_second_order() {
        let err = |n: usize| {
            let f = bump(grid(8.0, n), 1.2);
            let spec = laplacian_apply(&f);
            let fd = fd_laplacian(&f);
            let mut e = 0.0f64;
            for (a, b) in spec.values().iter().zip(fd.values()) {
                e = e.max((a - b).abs());
            }
            e
        };
        let e32 = err(32);
        let e64 = err(64);
        assert!(e32 < 0.2, "coarse error too large: {e32}");
        // Second-order oracle: its own error dominates and shrinks like h².
        let ratio = e64 / e32;
        assert!(
            (0.15..0.40).contains(&ratio),
            "expected ~0.25 error ratio, got {ratio}"
        );
    }

    #[test]
    fn kinetic_of_constant_is_zero() {
        let g = grid(8.0, 16);
        assert!(kinetic_quadratic_form(&ScalarField::constant(g, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn kinetic_of_single_mode() {
        let l = 8.0;
        let g = grid(l, 32);
        let k = PI / l;
        let f = ScalarField::from_fn(g, |x, _, _| (k * x).sin());
        let want = k * k * (2.0 * l).powi(3) / 2.0;
        let got = kinetic_quadratic_form(&f);
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn kinetic_of_unit_gaussian() {
        let g = grid(8.0, 32);
        let c = PI.powf(-0.75);
        let f = ScalarField::from_fn(g, |x, y, z| c * (-(x * x + y * y + z * z) / 2.0).exp());
        let got = kinetic_quadratic_form(&f);
        assert!((got - 1.5).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn laplacian_is_linear() {
        let g = grid(8.0, 24);
        let f = bump(g, 1.0);
        let h = bump(g, 1.6);
        let (alpha, beta) = (0.7, -1.3);
        let mut combo = f.clone();
        combo.scale(alpha);
        combo.add_scaled(beta, &h);
        let lhs = laplacian_apply(&combo);
        let mut rhs = laplacian_apply(&f);
        rhs.scale(alpha);
        rhs.add_scaled(beta, &laplacian_apply(&h));
        let scale = lhs.linf().max(1e-300);
        let mut diff = lhs.clone();
        diff.add_scaled(-1.0, &rhs);
        assert!(diff.linf() / scale < 1e-12);
    }

    #[test]
    fn kinetic_consistent_with_selfadjoint_form() {
        let g = grid(8.0, 32);
        let f = bump(g, 1.1);
        let a = kinetic_quadratic_form(&f);
        let b = f.inner(&laplacian_apply(&f));
        assert!((a - b).abs() / a.abs() < 1e-10, "parseval {a} vs form {b}");
    }

    #[test]
    fn integrate_is_linear_and_positive() {
        let g = grid(8.0, 16);
        let f = bump(g, 1.0);
        let h = bump(g, 2.0);
        let mut combo = f.clone();
        combo.scale(2.0);
        combo.add_scaled(3.0, &h);
        let lhs = combo.integrate();
        let rhs = 2.0 * f.integrate() + 3.0 * h.integrate();
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
        let sq = f.mul_pointwise(&f);
        assert!(sq.integrate() > 0.0);
    }

    #[test]
    fn dilation_covariance_of_kinetic_form() {
        let g = grid(12.0, 64);
        let f = bump(g, 1.0);
        let base = kinetic_quadratic_form(&f);
        let spectral = Spectral3d::new(g);
        for t in [0.5f64, 2.0] {
            // The output box shrinks for t > 1 so the targets t·y stay inside
            // the source box.
            let out = grid(12.0 / t.max(1.0), 64);
            let mut dilated = spectral.sample_affine(&f, t, [0.0; 3], out);
            dilated.scale(t.powf(1.5));
            let got = kinetic_quadratic_form(&dilated);
            let want = t * t * base;
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-4, "t={t}: rel error {rel}");
        }
    }

    #[test]
    fn sample_affine_identity() {
        let g = grid(8.0, 24);
        let f = bump(g, 1.3);
        let s = Spectral3d::new(g);
        let same = s.sample_affine(&f, 1.0, [0.0; 3], g);
        let mut diff = same.clone();
        diff.add_scaled(-1.0, &f);
        assert!(diff.linf() < 1e-10);
    }

    #[test]
    fn translate_matches_analytic_shift() {
        let g = grid(8.0, 32);
        let f = ScalarField::from_fn(g, |x, y, z| {
            (-(x * x + y * y + z * z) / 2.0).exp() * (1.0 + 0.2 * x)
        });
        let s = Spectral3d::new(g);
        let shifted = s.translate(&f, [0.3, -0.15, 0.05]);
        let want = ScalarField::from_fn(g, |x, y, z| {
            let (x, y, z) = (x + 0.3, y - 0.15, z + 0.05);
            (-(x * x + y * y + z * z) / 2.0).exp() * (1.0 + 0.2 * x)
        });
        let mut diff = shifted.clone();
        diff.add_scaled(-1.0, &want);
        // Limited by the profile's own periodic truncation, not the phase twist.
        assert!(diff.linf() < 1e-7, "diff {}", diff.linf());
    }

    #[test]
    fn boundary_leak_detects_decay() {
        let g = grid(8.0, 32);
        let narrow = bump(g, 0.8);
        assert!(narrow.boundary_leak() < 1e-10);
        let wide = bump(g, 4.0);
        assert!(wide.boundary_leak() > 1e-3);
    }
}
