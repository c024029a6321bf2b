//! Trap potentials: zero, anisotropic harmonic, and ring-shaped
//! `V(x) = ω₁(r − A)² + ω₂ x₃²` with `r = √(x₁² + x₂²)`.
//!
//! All variants are nonnegative with minimum value 0. Potentials are evaluated
//! analytically at grid nodes; no interpolation is involved.

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{GridSpec, ScalarField};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("harmonic frequencies must be positive, got {0}")]
    BadFrequency(f64),
    #[error("ring parameters must be positive (omega1, omega2, radius), got {0}")]
    BadRingParameter(f64),
    #[error("ring radius {radius} does not fit in box of half-length {half_length} (need radius < L/2)")]
    RingOutsideBox { radius: f64, half_length: f64 },
    #[error("level parameter beta must be positive, got {0}")]
    BadBeta(f64),
}

/// Confining trap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrapPotential<T> {
    /// Free case, `V = 0`.
    Zero,
    /// `V(x) = Σ_i ω_i (x_i − c_i)²` with all `ω_i > 0`.
    Harmonic { omega: [T; 3], center: [T; 3] },
    /// `V(x) = ω₁ (r − A)² + ω₂ x₃²`; minimum set is the circle `r = A, x₃ = 0`.
    RingShaped { omega1: T, omega2: T, radius: T },
}

impl<T: Real> TrapPotential<T> {
    pub fn harmonic(omega: [T; 3], center: [T; 3]) -> Result<Self, PotentialError> {
        for w in omega {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(PotentialError::BadFrequency(w.as_f64()));
            }
        }
        Ok(Self::Harmonic { omega, center })
    }

    pub fn ring(omega1: T, omega2: T, radius: T) -> Result<Self, PotentialError> {
        for v in [omega1, omega2, radius] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(PotentialError::BadRingParameter(v.as_f64()));
            }
        }
        Ok(Self::RingShaped {
            omega1,
            omega2,
            radius,
        })
    }

    /// Pointwise evaluation; `>= 0` for all inputs.
    #[inline]
    pub fn eval(&self, x1: T, x2: T, x3: T) -> T {
        match *self {
            Self::Zero => T::zero(),
            Self::Harmonic { omega, center } => {
                let d1 = x1 - center[0];
                let d2 = x2 - center[1];
                let d3 = x3 - center[2];
                omega[0] * d1 * d1 + omega[1] * d2 * d2 + omega[2] * d3 * d3
            }
            Self::RingShaped {
                omega1,
                omega2,
                radius,
            } => {
                let r = (x1 * x1 + x2 * x2).sqrt();
                let dr = r - radius;
                omega1 * dr * dr + omega2 * x3 * x3
            }
        }
    }

    /// Check geometric fit against a grid (the ring circle must lie well
    /// inside the box: `A < L/2`).
    pub fn check_fits(&self, grid: GridSpec<T>) -> Result<(), PotentialError> {
        if let Self::RingShaped { radius, .. } = *self {
            if !(radius < grid.half_length() / T::of(2.0)) {
                return Err(PotentialError::RingOutsideBox {
                    radius: radius.as_f64(),
                    half_length: grid.half_length().as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Sample the potential at every node of `grid`.
pub fn sample_potential<T: Real>(
    v: &TrapPotential<T>,
    grid: GridSpec<T>,
) -> Result<ScalarField<T>, PotentialError> {
    v.check_fits(grid)?;
    Ok(ScalarField::from_fn(grid, |x1, x2, x3| v.eval(x1, x2, x3)))
}

/// `h³ Σ max(β − V, 0)^{5/2}` over the nodes of `grid`.
///
/// Streams the node values without materializing a field, so very fine grids
/// (needed to resolve the thin sublevel sets of small β) stay cheap in memory.
pub fn beta_level_integral<T: Real>(
    v: &TrapPotential<T>,
    beta: T,
    grid: GridSpec<T>,
) -> Result<T, PotentialError> {
    if !(beta > T::zero()) {
        return Err(PotentialError::BadBeta(beta.as_f64()));
    }
    let n = grid.points_per_dim();
    let coords: Vec<T> = (0..n).map(|i| grid.coord(i)).collect();
    let exponent = T::of(2.5);
    let partials: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i3| {
            let x3 = coords[i3];
            let mut s = T::zero();
            for i2 in 0..n {
                let x2 = coords[i2];
                for &x1 in &coords {
                    let gap = beta - v.eval(x1, x2, x3);
                    if gap > T::zero() {
                        s = s + gap.powf(exponent);
                    }
                }
            }
            s
        })
        .collect();
    let sum: T = partials.iter().copied().sum();
    Ok(sum * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::fit_power_law;

    fn grid(l: f64, n: usize) -> crate::field::GridSpec<f64> {
        crate::field::make_grid(l, n).unwrap()
    }

    #[test]
    fn ring_vanishes_on_minimum_circle() {
        let v: TrapPotential<f64> = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        assert_eq!(v.eval(2.0, 0.0, 0.0), 0.0);
        // Rotated point on the same circle.
        let (s, c) = (0.6f64, 0.8f64);
        assert!(v.eval(2.0 * c, 2.0 * s, 0.0).abs() < 1e-12);
    }

    #[test]
    fn ring_direct_substitution() {
        let v: TrapPotential<f64> = TrapPotential::ring(1.0, 4.0, 2.0).unwrap();
        assert!((v.eval(0.0, 0.0, 1.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_samples_to_zero_field() {
        let g = grid(8.0, 16);
        let f = sample_potential(&TrapPotential::<f64>::Zero, g).unwrap();
        assert_eq!(f.linf(), 0.0);
    }

    #[test]
    fn samples_are_nonnegative() {
        let g = grid(8.0, 16);
        for v in [
            TrapPotential::harmonic([1.0, 2.0, 0.5], [0.1, 0.0, -0.3]).unwrap(),
            TrapPotential::ring(1.0, 1.0, 2.0).unwrap(),
        ] {
            let f = sample_potential(&v, g).unwrap();
            assert!(f.values().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn ring_must_fit_in_box() {
        let g = grid(8.0, 16);
        let v = TrapPotential::ring(1.0, 1.0, 5.0).unwrap();
        assert!(matches!(
            sample_potential(&v, g),
            Err(PotentialError::RingOutsideBox { .. })
        ));
    }

    #[test]
    fn ring_axisymmetric_analytically() {
        let v: TrapPotential<f64> = TrapPotential::ring(1.3, 0.7, 2.0).unwrap();
        let (r, z) = (2.7, 0.4);
        let base = v.eval(r, 0.0, z);
        for k in 1..12 {
            let th = 0.5 * k as f64;
            let got = v.eval(r * th.cos(), r * th.sin(), z);
            assert!((got - base).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_level_rejects_nonpositive_beta() {
        let g = grid(8.0, 16);
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        assert!(beta_level_integral(&v, 0.0, g).is_err());
    }

    #[test]
    fn beta_level_zero_when_below_potential_floor() {
        // Harmonic trap centered off-node so V > 0 at every node; tiny beta
        // leaves the positive part empty.
        let g = grid(2.0, 16);
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.033, 0.021, 0.047]).unwrap();
        let val = beta_level_integral(&v, 1e-6, g).unwrap();
        assert_eq!(val, 0.0);
    }

    #[test]
    fn beta_level_monotone_in_beta() {
        let g = grid(4.0, 32);
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        let mut prev = 0.0;
        for i in 1..=6 {
            let beta = 0.05 * i as f64;
            let val = beta_level_integral(&v, beta, g).unwrap();
            assert!(val >= prev);
            prev = val;
        }
    }

    #[test]
    fn beta_level_harmonic_quartic_law() {
        // V = |x|²: ∫(β−V)₊^{5/2} = c β⁴; tiny support needs a fine grid but
        // only a small box.
        let g = grid(0.75, 128);
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let betas: Vec<f64> = (0..7).map(|i| 1e-2 * 10f64.powf(i as f64 / 6.0)).collect();
        let pts: Vec<(f64, f64)> = betas
            .iter()
            .map(|&b| (b, beta_level_integral(&v, b, g).unwrap()))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!(
            (fit.exponent - 4.0).abs() < 0.1,
            "harmonic exponent {}",
            fit.exponent
        );
    }
}
