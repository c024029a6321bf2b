//! The constrained energy functional, its orbital gradient, Lagrange
//! multipliers, and the finite-rank kinetic/interaction ratio.
//!
//! For an orthonormal frame `(u_1..u_N)` with density `ρ = Σ n_i u_i²`:
//!
//! ```text
//! E_a = Σ_i n_i ∫ |∇u_i|²  +  ∫ V ρ  −  a ∫ ρ^{5/3}
//! H_V u = -Δu + V u - (5a/3) ρ^{2/3} u
//! ```
//!
//! The subspace Hamiltonian `Λ_ij = ⟨u_i, H_V u_j⟩` is symmetrized before
//! diagonalization to suppress quadrature asymmetry; its sorted spectrum is
//! the multiplier set of the frame.

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{ScalarField, Spectral3d};
use crate::linalg;
use crate::orbitals::{density, OrbitalSet};
use crate::potential::{sample_potential, TrapPotential};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("zero density: kinetic/interaction ratio undefined")]
    ZeroDensity,
}

/// Energy split into its three terms; `total = kinetic + potential − interaction`
/// holds exactly by construction.
#[derive(Clone, Copy, Debug)]
pub struct EnergyBreakdown<T> {
    pub coupling: T,
    pub kinetic: T,
    pub potential: T,
    pub interaction: T,
    pub total: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn csv_header() -> &'static str {
        "a,kinetic,potential,interaction,total"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.coupling.as_f64(),
            self.kinetic.as_f64(),
            self.potential.as_f64(),
            self.interaction.as_f64(),
            self.total.as_f64()
        )
    }
}

/// Sorted Lagrange multipliers `μ_1 ≤ … ≤ μ_N` with the orthogonal rotation
/// that diagonalizes the subspace Hamiltonian.
#[derive(Clone, Debug)]
pub struct MultiplierSet<T> {
    pub values: Vec<T>,
    /// Row-major `N x N`; column `j` maps the input frame onto the orbital of
    /// `values[j]`.
    pub rotation: Vec<T>,
}

/// Everything the solvers need from one pass over a frame.
pub(crate) struct FrameEval<T> {
    /// `H_V u_i` for each orbital.
    pub h_fields: Vec<ScalarField<T>>,
    /// Symmetrized `Λ_ij = ⟨u_i, H_V u_j⟩`, row-major.
    pub lambda: Vec<T>,
    pub breakdown: EnergyBreakdown<T>,
    /// `∫ ρ^{5/3}`.
    pub rho53: T,
    pub rho: ScalarField<T>,
    /// `ρ^{2/3}` (after the optional dealiasing filter).
    pub rho23: ScalarField<T>,
    /// Effective single-particle potential `V − (5a/3) ρ^{2/3}`.
    pub effective_potential: ScalarField<T>,
}

/// One full Hamiltonian/energy evaluation of a frame. `v_field` is the trap
/// sampled on the frame's grid (`None` means free space). With `dealias` the
/// density passes through a 2/3-rule low-pass before the fractional powers.
pub(crate) fn evaluate_frame<T: Real>(
    spectral: &Spectral3d<T>,
    s: &OrbitalSet<T>,
    coupling: T,
    v_field: Option<&ScalarField<T>>,
    dealias: bool,
) -> FrameEval<T> {
    let n = s.len();
    let rho = density(s);
    let rho_eff = if dealias {
        spectral.lowpass_two_thirds(&rho).map(|r| r.max(T::zero()))
    } else {
        rho.clone()
    };
    let two_thirds = T::of(2.0) / T::of(3.0);
    let five_thirds = T::of(5.0) / T::of(3.0);
    let rho23 = rho_eff.map(|r| r.powf(two_thirds));
    let rho53 = rho_eff.map(|r| r.powf(five_thirds)).integrate();

    let laplacians: Vec<ScalarField<T>> = s
        .orbitals()
        .par_iter()
        .map(|u| spectral.laplacian(u))
        .collect();

    let kinetic: T = s
        .orbitals()
        .iter()
        .zip(&laplacians)
        .zip(s.occupations())
        .map(|((u, lap), &occ)| occ * u.inner(lap))
        .sum();

    let interaction_factor = five_thirds * coupling;
    let h_fields: Vec<ScalarField<T>> = s
        .orbitals()
        .par_iter()
        .zip(laplacians.into_par_iter())
        .map(|(u, mut h)| {
            if let Some(v) = v_field {
                let vu = v.mul_pointwise(u);
                h.add_scaled(T::one(), &vu);
            }
            let au = rho23.mul_pointwise(u);
            h.add_scaled(-interaction_factor, &au);
            h
        })
        .collect();

    let mut lambda = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            lambda[i * n + j] = s.orbital(i).inner(&h_fields[j]);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let sym = (lambda[i * n + j] + lambda[j * n + i]) * T::of(0.5);
            lambda[i * n + j] = sym;
            lambda[j * n + i] = sym;
        }
    }

    let potential = match v_field {
        Some(v) => v.inner(&rho),
        None => T::zero(),
    };
    let interaction = coupling * rho53;
    let total = kinetic + potential - interaction;
    let mut effective_potential = rho23.map(|r| -interaction_factor * r);
    if let Some(v) = v_field {
        effective_potential.add_scaled(T::one(), v);
    }
    FrameEval {
        h_fields,
        lambda,
        breakdown: EnergyBreakdown {
            coupling,
            kinetic,
            potential,
            interaction,
            total,
        },
        rho53,
        rho,
        rho23,
        effective_potential,
    }
}

fn sampled<T: Real>(v: &TrapPotential<T>, s: &OrbitalSet<T>) -> Option<ScalarField<T>> {
    match v {
        TrapPotential::Zero => None,
        _ => Some(sample_potential(v, s.grid()).expect("potential fits the frame's grid")),
    }
}

/// Energy of an orthonormal frame in trap `v` at coupling `a >= 0`.
pub fn energy<T: Real>(s: &OrbitalSet<T>, coupling: T, v: &TrapPotential<T>) -> EnergyBreakdown<T> {
    let spectral = Spectral3d::new(s.grid());
    evaluate_frame(&spectral, s, coupling, sampled(v, s).as_ref(), false).breakdown
}

/// Energy against a pre-sampled potential field (free space when `None`).
pub fn energy_with_field<T: Real>(
    s: &OrbitalSet<T>,
    coupling: T,
    v_field: Option<&ScalarField<T>>,
) -> EnergyBreakdown<T> {
    let spectral = Spectral3d::new(s.grid());
    evaluate_frame(&spectral, s, coupling, v_field, false).breakdown
}

/// Finite-rank kinetic/interaction ratio
/// `‖γ‖^{2/3} · Tr(−Δγ) / ∫ρ^{5/3}` of a nonzero frame.
pub fn lt_ratio<T: Real>(s: &OrbitalSet<T>) -> Result<T, EnergyError> {
    let spectral = Spectral3d::new(s.grid());
    let rho = density(s);
    let five_thirds = T::of(5.0) / T::of(3.0);
    let rho53 = rho.map(|r| r.powf(five_thirds)).integrate();
    if !(rho53 > T::zero()) {
        return Err(EnergyError::ZeroDensity);
    }
    let kinetic: T = s
        .orbitals()
        .par_iter()
        .zip(s.occupations().par_iter())
        .map(|(u, &occ)| occ * spectral.kinetic_form(u))
        .sum();
    let norm = s
        .occupations()
        .iter()
        .fold(T::zero(), |m, &o| m.max(o));
    Ok(norm.powf(T::of(2.0) / T::of(3.0)) * kinetic / rho53)
}

/// Diagonalize the subspace Hamiltonian: returns the sorted multipliers and
/// the correspondingly rotated frame (same span and density as the input).
pub fn subspace_hamiltonian<T: Real>(
    s: &OrbitalSet<T>,
    coupling: T,
    v: &TrapPotential<T>,
) -> (MultiplierSet<T>, OrbitalSet<T>) {
    let spectral = Spectral3d::new(s.grid());
    subspace_hamiltonian_with(&spectral, s, coupling, sampled(v, s).as_ref())
}

pub(crate) fn subspace_hamiltonian_with<T: Real>(
    spectral: &Spectral3d<T>,
    s: &OrbitalSet<T>,
    coupling: T,
    v_field: Option<&ScalarField<T>>,
) -> (MultiplierSet<T>, OrbitalSet<T>) {
    let eval = evaluate_frame(spectral, s, coupling, v_field, false);
    multipliers_from_lambda(s, &eval.lambda)
}

pub(crate) fn multipliers_from_lambda<T: Real>(
    s: &OrbitalSet<T>,
    lambda: &[T],
) -> (MultiplierSet<T>, OrbitalSet<T>) {
    let n = s.len();
    let eig = linalg::symeig(lambda, n);
    let rotated = s.rotate(&eig.vectors);
    (
        MultiplierSet {
            values: eig.values,
            rotation: eig.vectors,
        },
        rotated,
    )
}

/// Steepest-descent direction on the orthonormal-frame manifold: the full
/// L² gradient `g_i = 2 (H_V u_i − Σ_j Λ_ij u_j)`, orthogonal to the span of
/// the frame. The directional derivative of the energy along a tangent `v`
/// is `Σ_i ∫ g_i v_i`.
pub fn projected_gradient<T: Real>(
    s: &OrbitalSet<T>,
    coupling: T,
    v: &TrapPotential<T>,
) -> Vec<ScalarField<T>> {
    let spectral = Spectral3d::new(s.grid());
    let eval = evaluate_frame(&spectral, s, coupling, sampled(v, s).as_ref(), false);
    gradient_from_eval(s, &eval)
}

pub(crate) fn gradient_from_eval<T: Real>(
    s: &OrbitalSet<T>,
    eval: &FrameEval<T>,
) -> Vec<ScalarField<T>> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let mut g = eval.h_fields[i].clone();
            for j in 0..n {
                g.add_scaled(-eval.lambda[i * n + j], s.orbital(j));
            }
            g.scale(T::of(2.0));
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::orbitals::{gram, loewdin, random_init, OrbitalSet};
    use std::f64::consts::PI;

    fn grid(l: f64, n: usize) -> crate::field::GridSpec<f64> {
        crate::field::make_grid(l, n).unwrap()
    }

    fn gaussian_orbital(g: GridSpec<f64>, width: f64) -> ScalarField<f64> {
        let norm = (PI * width * width).powf(-0.75);
        ScalarField::from_fn(g, move |x, y, z| {
            norm * (-(x * x + y * y + z * z) / (2.0 * width * width)).exp()
        })
    }

    #[test]
    fn single_mode_energy_is_pure_kinetic() {
        let l = 8.0;
        let g = grid(l, 32);
        let k = PI / l;
        let norm = (2.0 / (2.0 * l).powi(3)).sqrt();
        let u = ScalarField::from_fn(g, |x, _, _| norm * (k * x).sin());
        let s = OrbitalSet::new(vec![u]).unwrap();
        let e = energy(&s, 0.0, &TrapPotential::Zero);
        assert!((e.total - k * k).abs() < 1e-12);
        assert_eq!(e.total, e.kinetic);
        assert_eq!(e.potential, 0.0);
        assert_eq!(e.interaction, 0.0);
    }

    #[test]
    fn zero_coupling_energy_splits() {
        let g = grid(8.0, 16);
        let s = random_init(g, 2, 4, 1.0).unwrap();
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        let e = energy(&s, 0.0, &v);
        assert_eq!(e.interaction, 0.0);
        assert!((e.total - (e.kinetic + e.potential)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_in_harmonic_trap() {
        let g = grid(8.0, 32);
        let s = OrbitalSet::new(vec![gaussian_orbital(g, 1.0)]).unwrap();
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let e = energy(&s, 0.0, &v);
        assert!((e.kinetic - 1.5).abs() < 1e-5, "kinetic {}", e.kinetic);
        assert!((e.potential - 1.5).abs() < 1e-5, "potential {}", e.potential);
    }

    #[test]
    fn lt_ratio_of_unit_gaussian() {
        let g = grid(8.0, 32);
        let s = OrbitalSet::new(vec![gaussian_orbital(g, 1.0)]).unwrap();
        // ∫ρ^{5/3} = (3/5)^{3/2}/π for the unit-width Gaussian density.
        let want = 1.5 / ((3.0f64 / 5.0).powf(1.5) / PI);
        let got = lt_ratio(&s).unwrap();
        assert!((got - want).abs() / want < 1e-5, "ratio {got} vs {want}");
    }

    #[test]
    fn lt_ratio_invariant_under_occupation_scaling() {
        let g = grid(8.0, 16);
        let mut s = random_init(g, 3, 8, 1.0).unwrap();
        let base = lt_ratio(&s).unwrap();
        for c in [0.5, 2.0] {
            s.set_occupations(vec![c; 3]);
            let scaled = lt_ratio(&s).unwrap();
            assert!((scaled - base).abs() / base < 1e-10, "c={c}");
        }
    }

    #[test]
    fn lt_ratio_invariant_under_dilation() {
        let g = grid(12.0, 48);
        let s = OrbitalSet::new(vec![gaussian_orbital(g, 1.0)]).unwrap();
        let base = lt_ratio(&s).unwrap();
        let spectral = Spectral3d::new(g);
        for t in [0.5f64, 2.0] {
            let out = grid(12.0 / t.max(1.0), 48);
            let mut w = spectral.sample_affine(s.orbital(0), t, [0.0; 3], out);
            w.scale(t.powf(1.5));
            let st = OrbitalSet::new(vec![w]).unwrap();
            let got = lt_ratio(&st).unwrap();
            assert!((got - base).abs() / base < 1e-4, "t={t}: {got} vs {base}");
        }
    }

    #[test]
    fn lt_ratio_rejects_zero_density() {
        let g = grid(8.0, 16);
        let s = OrbitalSet::new(vec![ScalarField::zeros(g)]).unwrap();
        assert!(matches!(lt_ratio(&s), Err(EnergyError::ZeroDensity)));
    }

    /// First four eigenmodes of −Δ + |x|²: Gaussian and the three dipoles.
    fn oscillator_modes(g: GridSpec<f64>) -> OrbitalSet<f64> {
        let g0 = gaussian_orbital(g, 1.0);
        let raw = vec![
            g0.clone(),
            ScalarField::from_fn(g, |x, y, z| {
                x * (PI).powf(-0.75) * (-(x * x + y * y + z * z) / 2.0).exp()
            }),
            ScalarField::from_fn(g, |x, y, z| {
                y * (PI).powf(-0.75) * (-(x * x + y * y + z * z) / 2.0).exp()
            }),
            ScalarField::from_fn(g, |x, y, z| {
                z * (PI).powf(-0.75) * (-(x * x + y * y + z * z) / 2.0).exp()
            }),
        ];
        loewdin(&OrbitalSet::new(raw).unwrap()).unwrap()
    }

    #[test]
    fn oscillator_modes_give_known_multipliers() {
        let g = grid(8.0, 32);
        let s = oscillator_modes(g);
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let (mu, rotated) = subspace_hamiltonian(&s, 0.0, &v);
        let want = [3.0, 5.0, 5.0, 5.0];
        for (got, want) in mu.values.iter().zip(want) {
            assert!((got - want).abs() < 1e-4, "mu {got} vs {want}");
        }
        // Already-diagonal frame: rotation is identity up to sign and the
        // arbitrary basis of the degenerate triple; the spectrum is unchanged.
        assert!(mu.rotation[0].abs() > 0.999);
        let (mu2, _) = subspace_hamiltonian(&rotated, 0.0, &v);
        for (a, b) in mu.values.iter().zip(&mu2.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn multiplier_sum_identity() {
        // Σ μ_i = E_a(γ) − (2a/3) ∫ρ^{5/3}, exactly on the grid.
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 21, 1.0).unwrap();
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        let a = 0.7;
        let (mu, _) = subspace_hamiltonian(&s, a, &v);
        let spectral = Spectral3d::new(g);
        let vf = sample_potential(&v, g).unwrap();
        let eval = evaluate_frame(&spectral, &s, a, Some(&vf), false);
        let lhs: f64 = mu.values.iter().sum();
        let rhs = eval.breakdown.total - (2.0 * a / 3.0) * eval.rho53;
        assert!(
            (lhs - rhs).abs() / rhs.abs().max(1.0) < 1e-10,
            "sum {lhs} vs {rhs}"
        );
    }

    #[test]
    fn subspace_hamiltonian_preserves_density_and_energy() {
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 2, 1.0).unwrap();
        let v = TrapPotential::ring(1.0, 2.0, 2.0).unwrap();
        let (_, rotated) = subspace_hamiltonian(&s, 0.4, &v);
        let mut drho = density(&rotated);
        drho.add_scaled(-1.0, &density(&s));
        assert!(drho.linf() < 1e-10);
        let e0 = energy(&s, 0.4, &v);
        let e1 = energy(&rotated, 0.4, &v);
        assert!((e0.total - e1.total).abs() < 1e-10);
    }

    #[test]
    fn energy_invariant_under_frame_rotation() {
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 17, 1.0).unwrap();
        let v = TrapPotential::harmonic([1.0, 0.5, 2.0], [0.0; 3]).unwrap();
        let raw = [0.2, -0.8, 0.1, 0.9, 0.4, -0.3, 0.1, 0.2, 1.0];
        let r = crate::linalg::polar_factor(&raw, 3);
        let e0 = energy(&s, 0.6, &v);
        let e1 = energy(&s.rotate(&r), 0.6, &v);
        assert!((e0.total - e1.total).abs() < 1e-10);
        assert!((e0.kinetic - e1.kinetic).abs() < 1e-10);
    }

    #[test]
    fn gradient_orthogonal_to_frame() {
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 6, 1.0).unwrap();
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        let grad = projected_gradient(&s, 0.5, &v);
        for gi in &grad {
            for j in 0..3 {
                assert!(gi.inner(s.orbital(j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_vanishes_on_eigenframe() {
        let g = grid(8.0, 32);
        let s = oscillator_modes(g);
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let grad = projected_gradient(&s, 0.0, &v);
        for gi in &grad {
            assert!(gi.norm_l2() < 1e-6, "residual {}", gi.norm_l2());
        }
    }

    /// Random tangent directions at `s` (orthogonal to the frame's span).
    fn tangent_directions(
        s: &OrbitalSet<f64>,
        seed: u64,
        count: usize,
    ) -> Vec<Vec<ScalarField<f64>>> {
        (0..count)
            .map(|k| {
                let raw = random_init(s.grid(), s.len(), seed + 1000 * k as u64, 1.3).unwrap();
                (0..s.len())
                    .map(|i| {
                        let mut d = raw.orbital(i).clone();
                        for j in 0..s.len() {
                            let c = d.inner(s.orbital(j));
                            d.add_scaled(-c, s.orbital(j));
                        }
                        d
                    })
                    .collect()
            })
            .collect()
    }

    fn retract(s: &OrbitalSet<f64>, step: f64, dir: &[ScalarField<f64>]) -> OrbitalSet<f64> {
        let moved: Vec<ScalarField<f64>> = s
            .orbitals()
            .iter()
            .zip(dir)
            .map(|(u, d)| {
                let mut m = u.clone();
                m.add_scaled(step, d);
                m
            })
            .collect();
        loewdin(&OrbitalSet::new(moved).unwrap()).unwrap()
    }

    #[test]
    fn descent_direction_matches_gradient_norm() {
        let g = grid(8.0, 16);
        let s = random_init(g, 2, 31, 1.0).unwrap();
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let a = 0.2;
        let grad = projected_gradient(&s, a, &v);
        let g2: f64 = grad.iter().map(|gi| gi.inner(gi)).sum();
        let eps = 1e-5;
        let e0 = energy(&s, a, &v).total;
        let e1 = energy(&retract(&s, -eps, &grad), a, &v).total;
        let slope = (e1 - e0) / eps;
        assert!(
            (slope + g2).abs() / g2 < 0.01,
            "slope {slope} vs -|g|² {}",
            -g2
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = grid(8.0, 16);
        let s = random_init(g, 2, 41, 1.0).unwrap();
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        let a = 0.3;
        let grad = projected_gradient(&s, a, &v);
        let eps = 1e-5;
        for dir in tangent_directions(&s, 77, 5) {
            let pairing: f64 = grad.iter().zip(&dir).map(|(gi, di)| gi.inner(di)).sum();
            let ep = energy(&retract(&s, eps, &dir), a, &v).total;
            let em = energy(&retract(&s, -eps, &dir), a, &v).total;
            let fd = (ep - em) / (2.0 * eps);
            assert!(
                (fd - pairing).abs() / pairing.abs().max(1e-12) < 1e-4,
                "fd {fd} vs pairing {pairing}"
            );
        }
    }

    #[test]
    fn coercivity_identity_below_ratio() {
        // E = (1 − a/ratio)·kinetic + potential holds exactly for unit
        // occupations, and is nonnegative for a below the frame's own ratio.
        let g = grid(8.0, 16);
        let s = random_init(g, 2, 19, 1.0).unwrap();
        let v = TrapPotential::harmonic([1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let ratio = lt_ratio(&s).unwrap();
        let a = 0.5 * ratio;
        let e = energy(&s, a, &v);
        let reconstructed = (1.0 - a / ratio) * e.kinetic + e.potential;
        assert!((e.total - reconstructed).abs() / e.total.abs() < 1e-10);
        assert!(e.total >= 0.0);
    }

    #[test]
    fn frame_gram_stays_orthonormal_after_rotation() {
        let g = grid(8.0, 16);
        let s = random_init(g, 3, 23, 1.0).unwrap();
        let v = TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
        let (_, rotated) = subspace_hamiltonian(&s, 0.2, &v);
        assert!(gram(&rotated).max_deviation_from_identity() < 1e-10);
    }
}
