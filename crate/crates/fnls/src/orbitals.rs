//! Orthonormal orbital frames: Gram matrices, symmetric (Löwdin)
//! orthonormalization, densities, and seeded random initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{GridSpec, ScalarField};
use crate::linalg;
use crate::real::Real;

/// Gram eigenvalues below this are treated as a numerically rank-deficient
/// frame: re-randomize rather than regularize.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OrbitalError {
    #[error("degenerate frame: smallest Gram eigenvalue {0} below threshold")]
    DegenerateFrame(f64),
    #[error("orbital count must be >= 1")]
    EmptyFrame,
    #[error("orbital width must lie in (0, L/3), got {0}")]
    BadWidth(f64),
    #[error("random initialization failed after {0} re-randomizations")]
    InitFailed(usize),
}

/// Symmetric `N x N` Gram matrix `G_ij = ∫ u_i u_j`.
#[derive(Clone, Debug)]
pub struct GramMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> GramMatrix<T> {
    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `max_ij |G_ij − δ_ij|`.
    pub fn max_deviation_from_identity(&self) -> T {
        let mut dev = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let target = if i == j { T::one() } else { T::zero() };
                dev = dev.max((self.entry(i, j) - target).abs());
            }
        }
        dev
    }

    pub fn smallest_eigenvalue(&self) -> T {
        linalg::symeig(&self.data, self.n).values[0]
    }
}

/// A frame of `N` real orbitals on a common grid, with occupation numbers
/// (all 1 for the projector frames used by the solvers).
#[derive(Clone, Debug)]
pub struct OrbitalSet<T> {
    grid: GridSpec<T>,
    orbitals: Vec<ScalarField<T>>,
    occupations: Vec<T>,
}

impl<T: Real> OrbitalSet<T> {
    pub fn new(orbitals: Vec<ScalarField<T>>) -> Result<Self, OrbitalError> {
        if orbitals.is_empty() {
            return Err(OrbitalError::EmptyFrame);
        }
        let grid = orbitals[0].grid();
        let occupations = vec![T::one(); orbitals.len()];
        Ok(Self {
            grid,
            orbitals,
            occupations,
        })
    }

    pub fn with_occupations(
        orbitals: Vec<ScalarField<T>>,
        occupations: Vec<T>,
    ) -> Result<Self, OrbitalError> {
        let mut s = Self::new(orbitals)?;
        assert_eq!(s.orbitals.len(), occupations.len(), "occupation count");
        s.occupations = occupations;
        Ok(s)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    #[inline]
    pub fn grid(&self) -> GridSpec<T> {
        self.grid
    }

    #[inline]
    pub fn orbital(&self, i: usize) -> &ScalarField<T> {
        &self.orbitals[i]
    }

    #[inline]
    pub fn orbitals(&self) -> &[ScalarField<T>] {
        &self.orbitals
    }

    #[inline]
    pub fn occupations(&self) -> &[T] {
        &self.occupations
    }

    pub fn set_occupations(&mut self, occ: Vec<T>) {
        assert_eq!(occ.len(), self.orbitals.len());
        self.occupations = occ;
    }

    /// Apply an `N x N` matrix on the right: `ũ_j = Σ_i u_i R[i][j]`
    /// (row-major `r`). Orthogonal `r` preserves orthonormality.
    pub fn rotate(&self, r: &[T]) -> Self {
        let n = self.len();
        assert_eq!(r.len(), n * n, "rotation shape");
        let rotated: Vec<ScalarField<T>> = (0..n)
            .map(|j| {
                let mut acc = ScalarField::zeros(self.grid);
                for i in 0..n {
                    acc.add_scaled(r[i * n + j], &self.orbitals[i]);
                }
                acc
            })
            .collect();
        Self {
            grid: self.grid,
            orbitals: rotated,
            occupations: self.occupations.clone(),
        }
    }
}

/// Gram matrix of a frame, symmetrized against quadrature rounding.
pub fn gram<T: Real>(s: &OrbitalSet<T>) -> GramMatrix<T> {
    let n = s.len();
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let v = s.orbital(i).inner(s.orbital(j));
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    GramMatrix { n, data }
}

/// Symmetric orthonormalization: right-multiply the frame by `G^{-1/2}`.
/// Preserves the span and treats the orbitals symmetrically; fails when the
/// Gram spectrum drops below `sigma_min`.
pub fn loewdin_with<T: Real>(
    s: &OrbitalSet<T>,
    sigma_min: T,
) -> Result<OrbitalSet<T>, OrbitalError> {
    let g = gram(s);
    let inv_sqrt = linalg::inv_sqrt_spd(&g.data, g.n, sigma_min)
        .map_err(|lambda| OrbitalError::DegenerateFrame(lambda.as_f64()))?;
    Ok(s.rotate(&inv_sqrt))
}

/// [`loewdin_with`] at the default singularity threshold.
pub fn loewdin<T: Real>(s: &OrbitalSet<T>) -> Result<OrbitalSet<T>, OrbitalError> {
    loewdin_with(s, T::of(DEFAULT_SIGMA_MIN))
}

/// Modified Gram-Schmidt fallback for frames too ill-conditioned for a stable
/// `G^{-1/2}`; fails on a vanishing column.
pub fn gram_schmidt<T: Real>(s: &OrbitalSet<T>) -> Result<OrbitalSet<T>, OrbitalError> {
    let mut out: Vec<ScalarField<T>> = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        let mut v = s.orbital(i).clone();
        for prev in &out {
            let c = v.inner(prev);
            v.add_scaled(-c, prev);
        }
        let norm = v.norm_l2();
        if norm.as_f64() < 1e-12 {
            return Err(OrbitalError::DegenerateFrame(norm.as_f64()));
        }
        v.scale(T::one() / norm);
        out.push(v);
    }
    OrbitalSet::with_occupations(out, s.occupations().to_vec())
}

/// Density `ρ(x) = Σ_i n_i u_i(x)²`; nonnegative, `∫ρ = Σ n_i` for
/// orthonormal frames.
pub fn density<T: Real>(s: &OrbitalSet<T>) -> ScalarField<T> {
    let mut rho = ScalarField::zeros(s.grid());
    for (u, &occ) in s.orbitals().iter().zip(s.occupations()) {
        let sq = u.mul_pointwise(u);
        rho.add_scaled(occ, &sq);
    }
    rho
}

/// Deterministic random frame: Gaussian envelope of the given width times
/// independent low-order polynomial factors, then Löwdin orthonormalization.
/// Retries with derived sub-seeds (up to 5) if the draw is degenerate.
pub fn random_init<T: Real>(
    grid: GridSpec<T>,
    count: usize,
    seed: u64,
    width: T,
) -> Result<OrbitalSet<T>, OrbitalError> {
    if count == 0 {
        return Err(OrbitalError::EmptyFrame);
    }
    let max_width = grid.half_length() / T::of(3.0);
    if !(width > T::zero()) || !(width < max_width) {
        return Err(OrbitalError::BadWidth(width.as_f64()));
    }

    const MAX_ATTEMPTS: usize = 5;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64 * 0x9e37_79b9));
        let orbitals: Vec<ScalarField<T>> = (0..count)
            .map(|_| {
                // Degree-2 polynomial with coefficients in [-1, 1]; the
                // constant term is biased away from zero so no draw starts
                // pointwise-tiny near the envelope center.
                let mut c = [0.0f64; 10];
                for v in c.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                c[0] = c[0] + 0.5 * if c[0] >= 0.0 { 1.0 } else { -1.0 };
                let w = width;
                ScalarField::from_fn(grid, move |x, y, z| {
                    let env = (-(x * x + y * y + z * z) / (T::of(2.0) * w * w)).exp();
                    let poly = T::of(c[0])
                        + T::of(c[1]) * x
                        + T::of(c[2]) * y
                        + T::of(c[3]) * z
                        + T::of(c[4]) * x * y
                        + T::of(c[5]) * y * z
                        + T::of(c[6]) * x * z
                        + T::of(c[7]) * x * x
                        + T::of(c[8]) * y * y
                        + T::of(c[9]) * z * z;
                    env * poly
                })
            })
            .collect();
        let raw = OrbitalSet::new(orbitals)?;
        match loewdin(&raw) {
            Ok(s) => return Ok(s),
            Err(OrbitalError::DegenerateFrame(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(OrbitalError::InitFailed(MAX_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(l: f64, n: usize) -> crate::field::GridSpec<f64> {
        crate::field::make_grid(l, n).unwrap()
    }

    fn gaussian(grid: GridSpec<f64>, center: [f64; 3], width: f64) -> ScalarField<f64> {
        let norm = (PI * width * width).powf(-0.75);
        ScalarField::from_fn(grid, move |x, y, z| {
            let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2);
            norm * (-r2 / (2.0 * width * width)).exp()
        })
    }

    #[test]
    fn gram_of_single_normalized_gaussian() {
        let g = grid(8.0, 32);
        let s = OrbitalSet::new(vec![gaussian(g, [0.0; 3], 1.0)]).unwrap();
        let gm = gram(&s);
        assert!((gm.entry(0, 0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gram_of_duplicate_orbitals_is_rank_deficient() {
        let g = grid(8.0, 32);
        let f = gaussian(g, [0.0; 3], 1.0);
        let s = OrbitalSet::new(vec![f.clone(), f]).unwrap();
        let gm = gram(&s);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((gm.entry(i, j) - 1.0).abs() < 1e-10);
        }
        assert!(gm.smallest_eigenvalue() < 1e-9);
        assert!(matches!(loewdin(&s), Err(OrbitalError::DegenerateFrame(_))));
    }

    #[test]
    fn loewdin_produces_identity_gram() {
        let g = grid(8.0, 16);
        let s = OrbitalSet::new(vec![
            gaussian(g, [0.0; 3], 1.0),
            gaussian(g, [0.8, 0.0, 0.0], 1.2),
            gaussian(g, [0.0, -0.5, 0.4], 0.9),
        ])
        .unwrap();
        let ortho = loewdin(&s).unwrap();
        assert!(gram(&ortho).max_deviation_from_identity() < 1e-10);
    }

    #[test]
    fn loewdin_fixes_orthonormal_input() {
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 11, 1.0).unwrap();
        let again = loewdin(&s).unwrap();
        for i in 0..3 {
            let mut diff = again.orbital(i).clone();
            diff.add_scaled(-1.0, s.orbital(i));
            assert!(diff.linf() < 1e-10);
        }
    }

    #[test]
    fn loewdin_on_far_separated_gaussians_is_near_identity() {
        // Overlap ≈ exp(-sep²/4w²) = e^{-25}; the correction is of that order.
        let g = grid(16.0, 64);
        let s = OrbitalSet::new(vec![
            gaussian(g, [-5.0, 0.0, 0.0], 1.0),
            gaussian(g, [5.0, 0.0, 0.0], 1.0),
        ])
        .unwrap();
        let ortho = loewdin(&s).unwrap();
        for i in 0..2 {
            let mut diff = ortho.orbital(i).clone();
            diff.add_scaled(-1.0, s.orbital(i));
            assert!(diff.linf() < 1e-9, "correction {}", diff.linf());
        }
    }

    #[test]
    fn density_integrates_to_orbital_count() {
        let g = grid(8.0, 32);
        let one = OrbitalSet::new(vec![gaussian(g, [0.0; 3], 1.0)]).unwrap();
        assert!((density(&one).integrate() - 1.0).abs() < 1e-8);

        let three = random_init(g, 3, 5, 1.2).unwrap();
        assert!((density(&three).integrate() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn density_of_zero_orbitals_is_zero() {
        let g = grid(8.0, 16);
        let s = OrbitalSet::new(vec![ScalarField::zeros(g)]).unwrap();
        assert_eq!(density(&s).linf(), 0.0);
    }

    #[test]
    fn random_init_is_deterministic() {
        let g = grid(8.0, 16);
        let a = random_init(g, 2, 7, 1.0).unwrap();
        let b = random_init(g, 2, 7, 1.0).unwrap();
        for i in 0..2 {
            assert_eq!(a.orbital(i).values(), b.orbital(i).values());
        }
        assert!(gram(&a).max_deviation_from_identity() < 1e-10);
    }

    #[test]
    fn random_init_decays_at_boundary() {
        let g = grid(8.0, 32);
        let s = random_init(g, 4, 3, 1.0).unwrap();
        for i in 0..4 {
            assert!(s.orbital(i).boundary_leak() < 1e-6);
        }
    }

    #[test]
    fn random_init_rejects_bad_width() {
        let g = grid(8.0, 16);
        assert!(matches!(
            random_init(g, 2, 1, 3.0),
            Err(OrbitalError::BadWidth(_))
        ));
    }

    #[test]
    fn loewdin_is_idempotent() {
        let g = grid(8.0, 16);
        let s = OrbitalSet::new(vec![
            gaussian(g, [0.3, 0.0, 0.0], 1.0),
            gaussian(g, [-0.4, 0.2, 0.0], 1.1),
        ])
        .unwrap();
        let once = loewdin(&s).unwrap();
        let twice = loewdin(&once).unwrap();
        for i in 0..2 {
            let mut diff = twice.orbital(i).clone();
            diff.add_scaled(-1.0, once.orbital(i));
            assert!(diff.linf() < 1e-10);
        }
    }

    #[test]
    fn density_invariant_under_frame_rotation() {
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 13, 1.0).unwrap();
        // A deterministic orthogonal matrix: polar factor of a fixed one.
        let raw = [0.9, -0.2, 0.1, 0.3, 1.1, -0.4, 0.0, 0.5, 0.8];
        let r = crate::linalg::polar_factor(&raw, 3);
        let rotated = s.rotate(&r);
        let mut diff = density(&rotated);
        diff.add_scaled(-1.0, &density(&s));
        assert!(diff.linf() < 1e-12, "density changed by {}", diff.linf());
    }
}
