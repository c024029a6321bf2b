//! Ground-state solvers and best-constant estimators.
//!
//! Two independent routes to the same minimizers: projected-gradient descent
//! with backtracking line search and Löwdin retraction ([`minimize_direct`]),
//! and self-consistent field iteration with density mixing ([`scf`]). Their
//! agreement is the primary internal consistency check.
//!
//! [`estimate_critical_coupling`] minimizes the kinetic/interaction ratio
//! over free-space frames (the finite-rank best constant `a_N*`), pinning the
//! scale-invariant dilation mode by rescaling to a fixed density rms radius
//! after accepted steps. [`estimate_dual_constant`] converts it to the dual
//! constant `L_N*` both through the closed-form duality product and through
//! an independent negative-eigenvalue-sum computation.

use thiserror::Error;

use crate::eigen::{self, EigenError, EigenOptions};
use crate::energy::{
    evaluate_frame, multipliers_from_lambda, subspace_hamiltonian_with, EnergyBreakdown,
    FrameEval, MultiplierSet,
};
use crate::field::{GridSpec, ScalarField, Spectral3d};
use crate::linalg;
use crate::orbitals::{
    density, gram_schmidt, loewdin, OrbitalError, OrbitalSet,
};
use crate::potential::{sample_potential, PotentialError, TrapPotential};
use crate::real::Real;

/// Armijo sufficient-decrease constant for the backtracking line searches.
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Trust cap on the L² displacement of any orbital in one line-search step.
/// Near the critical coupling the discrete energy has a spurious collapsed
/// minimum (profiles of width ~h); warm-started continuation must not be able
/// to hop the barrier in a single step.
const TRUST_RADIUS: f64 = 0.5;

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig<T> {
    pub max_outer: usize,
    /// Relative energy-change stopping threshold.
    pub energy_tol: T,
    /// Absolute L² residual threshold on the orbital equations.
    pub residual_tol: T,
    /// Initial line-search step.
    pub step0: T,
    /// Backtracking factor in (0, 1).
    pub backtrack: T,
    /// Density mixing weight in (0, 1] for the SCF iteration.
    pub mixing: T,
    pub seed: u64,
    /// Target density rms radius pinning the dilation mode of the
    /// scale-invariant ratio minimization.
    pub rescale_radius: T,
    /// Precondition descent directions with the shifted inverse kinetic.
    pub precondition: bool,
    /// 2/3-rule low-pass on the density before fractional powers.
    pub dealias: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            max_outer: 2000,
            energy_tol: T::of(1e-9),
            residual_tol: T::of(1e-6),
            step0: T::one(),
            backtrack: T::of(0.5),
            mixing: T::of(0.3),
            seed: 1,
            rescale_radius: T::of(1.5),
            precondition: true,
            dealias: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError<T>> {
        let ok = self.energy_tol > T::zero()
            && self.residual_tol > T::zero()
            && self.step0 > T::zero()
            && self.backtrack > T::zero()
            && self.backtrack < T::one()
            && self.mixing > T::zero()
            && self.mixing <= T::one()
            && self.rescale_radius > T::zero()
            && self.max_outer > 0;
        if ok {
            Ok(())
        } else {
            Err(SolverError::Config(
                "tolerances and steps must be positive, backtrack in (0,1), mixing in (0,1]"
                    .into(),
            ))
        }
    }
}

/// Outcome of a ground-state solve.
#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub converged: bool,
    pub orbitals: OrbitalSet<T>,
    pub energy: EnergyBreakdown<T>,
    pub multipliers: MultiplierSet<T>,
    /// Energy after every accepted outer step (non-increasing for the direct
    /// minimizer).
    pub trace: Vec<T>,
    pub boundary_leak: T,
    pub residual_max: T,
    pub outer_iterations: usize,
    /// `∫ ρ^{5/3}` of the final frame.
    pub rho53: T,
}

#[derive(Debug, Error)]
pub enum SolverError<T: Real> {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("potential: {0}")]
    Potential(#[from] PotentialError),
    #[error("frame: {0}")]
    Frame(#[from] OrbitalError),
    #[error("eigensolver: {0}")]
    Eigen(EigenError<T>),
    #[error("no convergence after {iterations} outer steps (residual {residual})")]
    NotConverged {
        iterations: usize,
        residual: T,
        report: Box<SolveReport<T>>,
    },
    #[error("energy cycling detected after {iterations} SCF steps; reduce the density mixing weight")]
    Oscillation { iterations: usize },
    #[error("coupling must be nonnegative, got {0}")]
    NegativeCoupling(f64),
    #[error("trial scale must satisfy tau >= 1, got {0}")]
    BadTrialScale(f64),
    #[error("trial state support (|y0| + cutoff radius 2) exceeds the box half-length {0}")]
    TrialSupportOverflow(f64),
}

fn sampled_potential<T: Real>(
    v: &TrapPotential<T>,
    grid: GridSpec<T>,
) -> Result<Option<ScalarField<T>>, SolverError<T>> {
    Ok(match v {
        TrapPotential::Zero => None,
        _ => Some(sample_potential(v, grid)?),
    })
}

/// Re-orthonormalize a trial frame: Löwdin first, Gram-Schmidt as the
/// fallback for ill-conditioned Gram matrices.
fn retract<T: Real>(raw: &OrbitalSet<T>) -> Result<OrbitalSet<T>, OrbitalError> {
    match loewdin(raw) {
        Ok(s) => Ok(s),
        Err(OrbitalError::DegenerateFrame(_)) => gram_schmidt(raw),
        Err(e) => Err(e),
    }
}

struct Residuals<T> {
    fields: Vec<ScalarField<T>>,
    max_norm: T,
}

/// Orbital-equation residuals `r_i = H u_i − Σ_j Λ_ij u_j` of an evaluated
/// frame (the projected gradient is `2 r`).
fn residuals_from_eval<T: Real>(s: &OrbitalSet<T>, eval: &FrameEval<T>) -> Residuals<T> {
    let n = s.len();
    let fields: Vec<ScalarField<T>> = (0..n)
        .map(|i| {
            let mut r = eval.h_fields[i].clone();
            for j in 0..n {
                r.add_scaled(-eval.lambda[i * n + j], s.orbital(j));
            }
            r
        })
        .collect();
    let max_norm = fields
        .iter()
        .map(|r| r.norm_l2())
        .fold(T::zero(), |a, b| a.max(b));
    Residuals { fields, max_norm }
}

/// Preconditioned, tangent-projected descent direction.
///
/// The preconditioner is the symmetric sandwich `D^{1/2} (−Δ+σ)^{-1} D^{1/2}`
/// with the pointwise damping `D = 1/(1 + |W|/σ)`: the inverse kinetic tames
/// high-frequency modes while `D` tames the regions where the effective
/// potential dominates the Hessian (a bare inverse kinetic caps stable steps
/// at `~σ/max|W|`, which is crippling for steep traps).
fn descent_direction<T: Real>(
    spectral: &Spectral3d<T>,
    s: &OrbitalSet<T>,
    eval: &FrameEval<T>,
    residuals: &Residuals<T>,
    precondition: bool,
) -> Vec<ScalarField<T>> {
    let n = s.len();
    let shift = (0..n)
        .map(|i| eval.lambda[i * n + i].abs())
        .fold(T::one(), |a, b| a.max(b));
    let damp_sqrt = eval
        .effective_potential
        .map(|w| (T::one() / (T::one() + w.abs() / shift)).sqrt());
    residuals
        .fields
        .iter()
        .map(|r| {
            let mut d = if precondition {
                let inner = r.mul_pointwise(&damp_sqrt);
                let smoothed = spectral.shifted_inverse_kinetic(&inner, shift);
                smoothed.mul_pointwise(&damp_sqrt)
            } else {
                r.clone()
            };
            for j in 0..n {
                let c = d.inner(s.orbital(j));
                d.add_scaled(-c, s.orbital(j));
            }
            d
        })
        .collect()
}

fn step_frame<T: Real>(
    s: &OrbitalSet<T>,
    step: T,
    dir: &[ScalarField<T>],
) -> Result<OrbitalSet<T>, OrbitalError> {
    let moved: Vec<ScalarField<T>> = s
        .orbitals()
        .iter()
        .zip(dir)
        .map(|(u, d)| {
            let mut m = u.clone();
            m.add_scaled(-step, d);
            m
        })
        .collect();
    retract(&OrbitalSet::new(moved)?)
}

/// Projected-gradient minimization of `E_a` over orthonormal frames, with a
/// pre-sampled potential (`None` = free space).
pub(crate) fn minimize_with_field<T: Real>(
    cfg: &SolverConfig<T>,
    coupling: T,
    v_field: Option<&ScalarField<T>>,
    init: &OrbitalSet<T>,
) -> Result<SolveReport<T>, SolverError<T>> {
    cfg.validate()?;
    if coupling < T::zero() {
        return Err(SolverError::NegativeCoupling(coupling.as_f64()));
    }
    let spectral = Spectral3d::new(init.grid());
    let mut s = retract(init)?;
    let mut eval = evaluate_frame(&spectral, &s, coupling, v_field, cfg.dealias);
    let mut trace = vec![eval.breakdown.total];
    let mut step = cfg.step0;
    let mut converged = false;
    let mut outer_done = 0;
    let mut stagnant = 0usize;
    let mut best_residual = T::infinity();
    let mut res = residuals_from_eval(&s, &eval);

    for outer in 0..cfg.max_outer {
        outer_done = outer + 1;
        let dir = descent_direction(&spectral, &s, &eval, &res, cfg.precondition);
        let mut slope: T = res
            .fields
            .iter()
            .zip(&dir)
            .map(|(r, d)| r.inner(d))
            .sum::<T>()
            * T::of(2.0);
        let dir = if slope > T::zero() {
            dir
        } else {
            // Preconditioner failed to give a descent direction; fall back to
            // the raw gradient.
            slope = res
                .fields
                .iter()
                .map(|r| r.inner(r))
                .sum::<T>()
                * T::of(2.0);
            res.fields.clone()
        };

        let dir_norm = dir
            .iter()
            .map(|d| d.norm_l2())
            .fold(T::zero(), |a, b| a.max(b));
        let eta_cap = if dir_norm > T::zero() {
            T::of(TRUST_RADIUS) / dir_norm
        } else {
            step
        };
        let mut eta = step.min(eta_cap);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = step_frame(&s, eta, &dir)?;
            let cand_eval = evaluate_frame(&spectral, &cand, coupling, v_field, cfg.dealias);
            if cand_eval.breakdown.total
                <= eval.breakdown.total - T::of(ARMIJO) * eta * slope
            {
                accepted = Some((cand, cand_eval, eta));
                break;
            }
            eta = eta * cfg.backtrack;
        }

        let Some((cand, cand_eval, eta_used)) = accepted else {
            // Line search stagnated at the minimum step: accept the current
            // point as final.
            converged = res.max_norm <= cfg.residual_tol;
            break;
        };
        let prev_total = eval.breakdown.total;
        s = cand;
        eval = cand_eval;
        trace.push(eval.breakdown.total);
        res = residuals_from_eval(&s, &eval);
        step = (eta_used * T::of(2.0)).min(cfg.step0 * T::of(64.0));

        let denom = eval.breakdown.total.abs().max(T::of(1e-300));
        let rel_change = (prev_total - eval.breakdown.total).abs() / denom;
        crate::debug!(
            "minimize outer {outer}: E = {:.12e}, resid {:.3e}, step {:.2e}",
            eval.breakdown.total.as_f64(),
            res.max_norm.as_f64(),
            eta_used.as_f64()
        );
        if rel_change < cfg.energy_tol {
            if res.max_norm <= cfg.residual_tol {
                converged = true;
                break;
            }
            // Energy is flat; keep going only while the residual still makes
            // geometric progress, otherwise it has hit a resolution floor.
            if res.max_norm < best_residual * T::of(0.9) {
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= 12 {
                    break;
                }
            }
        } else {
            stagnant = 0;
        }
        best_residual = best_residual.min(res.max_norm);
    }

    let (multipliers, rotated) = multipliers_from_lambda(&s, &eval.lambda);
    let report = SolveReport {
        converged,
        boundary_leak: eval.rho.boundary_leak(),
        residual_max: res.max_norm,
        energy: eval.breakdown,
        rho53: eval.rho53,
        multipliers,
        orbitals: rotated,
        trace,
        outer_iterations: outer_done,
    };
    if converged {
        Ok(report)
    } else {
        Err(SolverError::NotConverged {
            iterations: outer_done,
            residual: report.residual_max,
            report: Box::new(report),
        })
    }
}

/// Projected-gradient descent for the trapped ground state at coupling `a`.
pub fn minimize_direct<T: Real>(
    cfg: &SolverConfig<T>,
    coupling: T,
    v: &TrapPotential<T>,
    init: &OrbitalSet<T>,
) -> Result<SolveReport<T>, SolverError<T>> {
    let v_field = sampled_potential(v, init.grid())?;
    minimize_with_field(cfg, coupling, v_field.as_ref(), init)
}

/// Self-consistent field iteration: eigen-decompose the density-dependent
/// Hamiltonian, rebuild the density, and mix.
pub fn scf<T: Real>(
    cfg: &SolverConfig<T>,
    coupling: T,
    v: &TrapPotential<T>,
    init: &OrbitalSet<T>,
) -> Result<SolveReport<T>, SolverError<T>> {
    let v_field = sampled_potential(v, init.grid())?;
    scf_with_field(cfg, coupling, v_field.as_ref(), init)
}

pub(crate) fn scf_with_field<T: Real>(
    cfg: &SolverConfig<T>,
    coupling: T,
    v_field: Option<&ScalarField<T>>,
    init: &OrbitalSet<T>,
) -> Result<SolveReport<T>, SolverError<T>> {
    cfg.validate()?;
    if coupling < T::zero() {
        return Err(SolverError::NegativeCoupling(coupling.as_f64()));
    }
    let grid = init.grid();
    let spectral = Spectral3d::new(grid);
    let count = init.len();
    let factor = T::of(5.0) / T::of(3.0) * coupling;
    let two_thirds = T::of(2.0) / T::of(3.0);
    let eig_opts = EigenOptions {
        tol: cfg.residual_tol * T::of(0.1),
        max_iter: 800,
        seed: cfg.seed,
    };

    let effective = |rho: &ScalarField<T>| -> ScalarField<T> {
        let mut w = rho.map(|r| -factor * r.powf(two_thirds));
        if let Some(v) = v_field {
            w.add_scaled(T::one(), v);
        }
        w
    };

    let solve_linear = |rho: &ScalarField<T>| -> Result<_, SolverError<T>> {
        let w = effective(rho);
        eigen::lowest_eigenpairs(&w, count, eig_opts).map_err(SolverError::Eigen)
    };

    let mut rho = density(init);
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;
    let mut outer_done = 0;
    let mut last: Option<(eigen::EigenResult<T>, OrbitalSet<T>)> = None;

    for outer in 0..cfg.max_outer {
        outer_done = outer + 1;
        let eig = solve_linear(&rho)?;
        let frame = eigen::eigenfields_as_frame(&eig);
        let rho_new = density(&frame);
        let eval = evaluate_frame(&spectral, &frame, coupling, v_field, cfg.dealias);
        trace.push(eval.breakdown.total);

        let mut diff = rho_new.clone();
        diff.add_scaled(-T::one(), &rho);
        let delta = diff.map(|d| d.abs()).integrate();
        crate::debug!(
            "scf outer {outer}: E = {:.10e}, |drho|_1 = {:.3e}",
            eval.breakdown.total.as_f64(),
            delta.as_f64()
        );
        last = Some((eig, frame));

        // a = 0 decouples: the first eigen-decomposition is already exact.
        if coupling == T::zero() || delta < cfg.energy_tol * T::of(count as f64) {
            converged = true;
            break;
        }
        // Energy cycling (period-2 oscillation) over the last four steps.
        let k = trace.len();
        if k >= 4 {
            let scale = trace[k - 1].abs().max(T::one());
            let flat2 = (trace[k - 1] - trace[k - 3]).abs() < T::of(1e-10) * scale
                && (trace[k - 2] - trace[k - 4]).abs() < T::of(1e-10) * scale;
            let swinging = (trace[k - 1] - trace[k - 2]).abs() > T::of(1e-6) * scale;
            if flat2 && swinging {
                return Err(SolverError::Oscillation { iterations: k });
            }
        }

        rho.scale(T::one() - cfg.mixing);
        rho.add_scaled(cfg.mixing, &rho_new);
    }

    let (eig, frame) = last.expect("at least one SCF step ran");
    let eval = evaluate_frame(&spectral, &frame, coupling, v_field, cfg.dealias);
    let res = residuals_from_eval(&frame, &eval);
    let n = frame.len();
    let mut identity = vec![T::zero(); n * n];
    for i in 0..n {
        identity[i * n + i] = T::one();
    }
    let report = SolveReport {
        converged,
        boundary_leak: eval.rho.boundary_leak(),
        residual_max: res.max_norm,
        energy: eval.breakdown,
        rho53: eval.rho53,
        multipliers: MultiplierSet {
            values: eig.eigenvalues.clone(),
            rotation: identity,
        },
        orbitals: frame,
        trace,
        outer_iterations: outer_done,
    };
    if converged {
        Ok(report)
    } else {
        Err(SolverError::NotConverged {
            iterations: outer_done,
            residual: report.residual_max,
            report: Box::new(report),
        })
    }
}

/// Estimate of the finite-rank critical coupling together with its optimizer.
#[derive(Clone, Debug)]
pub struct CriticalEstimate<T> {
    /// The minimized kinetic/interaction ratio (the `a_N*` estimate).
    pub value: T,
    /// Optimizer frame, scale-pinned to the configured rms radius.
    pub optimizer: OrbitalSet<T>,
    /// Multipliers of the optimizer's free-space self-consistent operator;
    /// all strictly negative for a genuine full-rank optimizer.
    pub multipliers: MultiplierSet<T>,
    pub residual_max: T,
    pub iterations: usize,
    /// Set when the last multiplier is not clearly negative (the converged
    /// frame does not genuinely use all N levels).
    pub rank_deficient: bool,
}

/// Oscillator-like start frame for the ratio minimization: Gaussian envelope
/// times degree-ordered polynomial shapes, with a small seeded perturbation,
/// Löwdin-orthonormalized. Much closer to the optimizer basin than raw noise.
fn structured_init<T: Real>(
    grid: GridSpec<T>,
    count: usize,
    seed: u64,
    target_rms: T,
) -> Result<OrbitalSet<T>, SolverError<T>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // Gaussian density rms is sqrt(3/2)·width.
    let width = target_rms / T::of(1.5f64.sqrt());
    let base: Vec<Box<dyn Fn(T, T, T) -> T + Sync>> = vec![
        Box::new(|_, _, _| T::one()),
        Box::new(|x, _, _| x),
        Box::new(|_, y, _| y),
        Box::new(|_, _, z| z),
        Box::new(|x, y, _| x * y),
        Box::new(|_, y, z| y * z),
        Box::new(|x, _, z| x * z),
        Box::new(|x, y, _| x * x - y * y),
        Box::new(|x, _, z| x * x - z * z),
        Box::new(|x, y, z| x * x + y * y + z * z - T::of(1.5)),
    ];
    assert!(count <= base.len(), "structured init supports N <= 10");
    let fields: Vec<ScalarField<T>> = (0..count)
        .map(|i| {
            let mut c = [0.0f64; 4];
            for v in c.iter_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
            let shape = &base[i];
            let w = width;
            ScalarField::from_fn(grid, move |x, y, z| {
                let env = (-(x * x + y * y + z * z) / (T::of(2.0) * w * w)).exp();
                let noise = T::of(c[0]) + T::of(c[1]) * x + T::of(c[2]) * y + T::of(c[3]) * z;
                env * (shape(x, y, z) + noise)
            })
        })
        .collect();
    Ok(retract(&OrbitalSet::new(fields)?)?)
}

/// Tangent-projected dilation generator of the frame, `(3/2)u + x·∇u`
/// componentwise. On an unbounded domain this is an exactly flat direction of
/// the ratio; on the box it develops a spurious downhill branch toward
/// delocalized states, so the descent removes it.
fn dilation_mode<T: Real>(spectral: &Spectral3d<T>, s: &OrbitalSet<T>) -> Vec<ScalarField<T>> {
    let grid = s.grid();
    let n = grid.points_per_dim();
    let coords: Vec<T> = (0..n).map(|i| grid.coord(i)).collect();
    let mut modes: Vec<ScalarField<T>> = s
        .orbitals()
        .iter()
        .map(|u| {
            let mut m = u.clone();
            m.scale(T::of(1.5));
            for axis in 0..3 {
                let du = spectral.derivative(u, axis);
                let mut xdu = du;
                let vals = xdu.values_mut();
                for i3 in 0..n {
                    for i2 in 0..n {
                        for i1 in 0..n {
                            let c = coords[match axis {
                                0 => i1,
                                1 => i2,
                                _ => i3,
                            }];
                            vals[grid.index(i1, i2, i3)] = vals[grid.index(i1, i2, i3)] * c;
                        }
                    }
                }
                m.add_scaled(T::one(), &xdu);
            }
            m
        })
        .collect();
    for i in 0..s.len() {
        for j in 0..s.len() {
            let c = modes[i].inner(s.orbital(j));
            modes[i].add_scaled(-c, s.orbital(j));
        }
    }
    modes
}

/// Minimize `Tr(-Δγ) / ∫ρ^{5/3}` over orthonormal free-space `N`-frames by
/// projected gradient descent on the ratio. The scale-invariant dilation mode
/// (spuriously unbounded below on the box) is projected out of the descent
/// direction, and every candidate is re-pinned to the configured density rms
/// radius before its ratio is compared.
pub fn estimate_critical_coupling<T: Real>(
    cfg: &SolverConfig<T>,
    grid: GridSpec<T>,
    count: usize,
) -> Result<CriticalEstimate<T>, SolverError<T>> {
    cfg.validate()?;
    let spectral = Spectral3d::new(grid);
    let mut s = structured_init(grid, count, cfg.seed, cfg.rescale_radius)?;
    pin_scale(&spectral, &mut s, cfg.rescale_radius)?;

    let pinned_step = |s: &OrbitalSet<T>,
                       eta: T,
                       dir: &[ScalarField<T>]|
     -> Result<(OrbitalSet<T>, RatioEval<T>), SolverError<T>> {
        let mut cand = step_frame(s, eta, dir)?;
        pin_scale(&spectral, &mut cand, cfg.rescale_radius)?;
        let eval = RatioEval::new(&spectral, &cand);
        Ok((cand, eval))
    };

    let mut eval = RatioEval::new(&spectral, &s);
    let mut step = cfg.step0;
    let mut converged = false;
    let mut iterations = 0;
    let mut stagnant = 0usize;
    let mut best_residual = T::infinity();

    for outer in 0..cfg.max_outer {
        iterations = outer + 1;
        let res = residuals_from_eval(&s, &eval.frame);
        let mut dir = descent_direction(&spectral, &s, &eval.frame, &res, cfg.precondition);
        let modes = dilation_mode(&spectral, &s);
        let mode_norm: T = modes.iter().map(|m| m.inner(m)).sum();
        if mode_norm > T::zero() {
            let coef: T = dir
                .iter()
                .zip(&modes)
                .map(|(d, m)| d.inner(m))
                .sum::<T>()
                / mode_norm;
            for (d, m) in dir.iter_mut().zip(&modes) {
                d.add_scaled(-coef, m);
            }
        }
        let mut slope: T = res
            .fields
            .iter()
            .zip(&dir)
            .map(|(r, d)| r.inner(d))
            .sum::<T>()
            * T::of(2.0)
            / eval.rho53;
        let dir = if slope > T::zero() {
            dir
        } else {
            slope = res.fields.iter().map(|r| r.inner(r)).sum::<T>() * T::of(2.0) / eval.rho53;
            res.fields.clone()
        };

        let mut eta = step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let (cand, cand_eval) = pinned_step(&s, eta, &dir)?;
            if cand_eval.ratio <= eval.ratio - T::of(ARMIJO) * eta * slope {
                accepted = Some((cand, cand_eval, eta));
                break;
            }
            eta = eta * cfg.backtrack;
        }
        let Some((cand, cand_eval, eta_used)) = accepted else {
            converged = res.max_norm <= cfg.residual_tol;
            break;
        };
        let prev_ratio = eval.ratio;
        s = cand;
        eval = cand_eval;
        step = (eta_used * T::of(2.0)).min(cfg.step0 * T::of(64.0));

        let rel = (prev_ratio - eval.ratio).abs() / eval.ratio;
        let res_now = residuals_from_eval(&s, &eval.frame);
        crate::debug!(
            "ratio outer {outer}: F = {:.10e}, resid {:.3e}, step {:.2e}",
            eval.ratio.as_f64(),
            res_now.max_norm.as_f64(),
            eta_used.as_f64()
        );
        if rel < cfg.energy_tol {
            if res_now.max_norm <= cfg.residual_tol {
                converged = true;
                break;
            }
            if res_now.max_norm < best_residual * T::of(0.9) {
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= 12 {
                    break;
                }
            }
        } else {
            stagnant = 0;
        }
        best_residual = best_residual.min(res_now.max_norm);
    }

    let res = residuals_from_eval(&s, &eval.frame);
    let (multipliers, optimizer) = multipliers_from_lambda(&s, &eval.frame.lambda);
    let rank_deficient = *multipliers.values.last().expect("nonempty")
        > -T::of(10.0) * cfg.residual_tol;
    let estimate = CriticalEstimate {
        value: eval.ratio,
        optimizer,
        multipliers,
        residual_max: res.max_norm,
        iterations,
        rank_deficient,
    };
    if converged {
        Ok(estimate)
    } else {
        Err(SolverError::NotConverged {
            iterations,
            residual: res.max_norm,
            report: Box::new(SolveReport {
                converged: false,
                boundary_leak: density(&estimate.optimizer).boundary_leak(),
                residual_max: estimate.residual_max,
                energy: EnergyBreakdown {
                    coupling: T::zero(),
                    kinetic: eval.kinetic,
                    potential: T::zero(),
                    interaction: T::zero(),
                    total: eval.ratio,
                },
                rho53: eval.rho53,
                multipliers: estimate.multipliers.clone(),
                orbitals: estimate.optimizer.clone(),
                trace: Vec::new(),
                outer_iterations: iterations,
            }),
        })
    }
}

/// Frame evaluation specialised to the free-space ratio `T/P`: the effective
/// Hamiltonian is `-Δ − (5/3)·(T/P)·ρ^{2/3}`, whose residuals are the ratio's
/// gradient up to the factor `2/P`.
struct RatioEval<T> {
    frame: FrameEval<T>,
    ratio: T,
    kinetic: T,
    rho53: T,
}

impl<T: Real> RatioEval<T> {
    fn new(spectral: &Spectral3d<T>, s: &OrbitalSet<T>) -> Self {
        // One free-Laplacian pass gives T and P; the ratio Hamiltonian
        // H u = −Δu − (5/3)(T/P) ρ^{2/3} u is then assembled from its pieces.
        let probe = evaluate_frame(spectral, s, T::zero(), None, false);
        let ratio = probe.breakdown.kinetic / probe.rho53;
        let factor = T::of(5.0) / T::of(3.0) * ratio;
        let n = s.len();
        let h_fields: Vec<ScalarField<T>> = probe
            .h_fields
            .iter()
            .zip(s.orbitals())
            .map(|(h0, u)| {
                let mut h = h0.clone();
                let au = probe.rho23.mul_pointwise(u);
                h.add_scaled(-factor, &au);
                h
            })
            .collect();
        let mut lambda = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let v = s.orbital(i).inner(&h_fields[j]);
                lambda[i * n + j] = v;
                lambda[j * n + i] = v;
            }
        }
        let kinetic = probe.breakdown.kinetic;
        let rho53 = probe.rho53;
        let effective_potential = probe.rho23.map(|r| -factor * r);
        let frame = FrameEval {
            h_fields,
            lambda,
            breakdown: EnergyBreakdown {
                coupling: ratio,
                kinetic,
                potential: T::zero(),
                interaction: ratio * rho53,
                total: kinetic - ratio * rho53,
            },
            rho53,
            rho: probe.rho,
            rho23: probe.rho23,
            effective_potential,
        };
        Self {
            ratio,
            kinetic,
            rho53,
            frame,
        }
    }
}

/// Re-center the frame on its density centroid and rescale so the density rms
/// radius equals `target`. Returns whether anything was changed.
fn pin_scale<T: Real>(
    spectral: &Spectral3d<T>,
    s: &mut OrbitalSet<T>,
    target: T,
) -> Result<bool, SolverError<T>> {
    let rho = density(s);
    let centroid = rho.centroid();
    let rms = rho.rms_radius_about(centroid);
    if !(rms > T::zero()) {
        return Ok(false);
    }
    let scale = rms / target;
    let h = s.grid().spacing();
    let drift = centroid.iter().fold(T::zero(), |m, &c| m.max(c.abs()));
    if (scale - T::one()).abs() < T::of(5e-3) && drift < h * T::of(0.05) {
        return Ok(false);
    }
    let amp = scale.powf(T::of(1.5));
    let resampled: Vec<ScalarField<T>> = s
        .orbitals()
        .iter()
        .map(|u| {
            let mut w = spectral.sample_affine(u, scale, centroid, s.grid());
            w.scale(amp);
            w
        })
        .collect();
    let raw = OrbitalSet::with_occupations(resampled, s.occupations().to_vec())?;
    *s = retract(&raw)?;
    Ok(true)
}

/// Dual best constant, by the closed-form duality product and by the
/// independent negative-eigenvalue route.
#[derive(Clone, Copy, Debug)]
pub struct DualConstantEstimate<T> {
    /// `((3/5)(2/5)^{2/3} / a_N*)^{3/2}`.
    pub dual: T,
    /// `Σ|λ_j(-Δ - A)|_- / ∫A^{5/2}` with `A = (5/3) a_N* ρ^{2/3}`.
    pub direct: T,
}

/// The duality product `(3/5)(2/5)^{2/3}` linking the two best constants.
pub fn duality_product<T: Real>() -> T {
    T::of(3.0 / 5.0) * T::of(2.0 / 5.0).powf(T::of(2.0 / 3.0))
}

pub fn estimate_dual_constant<T: Real>(
    cfg: &SolverConfig<T>,
    count: usize,
    optimizer: &OrbitalSet<T>,
    critical: T,
) -> Result<DualConstantEstimate<T>, SolverError<T>> {
    let dual = (duality_product::<T>() / critical).powf(T::of(1.5));
    let factor = T::of(5.0) / T::of(3.0) * critical;
    let a_field = density(optimizer).map(|r| factor * r.powf(T::of(2.0) / T::of(3.0)));
    let denom = a_field.map(|v| v.powf(T::of(2.5))).integrate();
    let opts = EigenOptions {
        tol: cfg.residual_tol,
        max_iter: 800,
        seed: cfg.seed,
    };
    let num = eigen::neg_eigenvalue_sum(&a_field, count, opts).map_err(SolverError::Eigen)?;
    Ok(DualConstantEstimate {
        dual,
        direct: num / denom,
    })
}

/// Ground-state verification: the frame must span the lowest-`N` eigenspace
/// of its own self-consistent operator, with a simple first level.
#[derive(Clone, Debug)]
pub struct GroundStateCheck<T> {
    pub pass: bool,
    /// Largest principal angle (radians) between the frame span and the
    /// lowest-`N` eigenspace.
    pub max_principal_angle: T,
    /// Frame multipliers (sorted).
    pub multipliers: Vec<T>,
    /// Lowest `N+1` eigenvalues of the self-consistent operator.
    pub spectrum: Vec<T>,
    /// `μ₂ − μ₁ > slack` (simplicity of the first level).
    pub first_level_simple: bool,
    /// `λ_{N+1} − μ_N ≤ slack`: the gap at the Fermi level closes.
    pub degenerate_at_fermi: bool,
}

pub fn verify_groundstate<T: Real>(
    s: &OrbitalSet<T>,
    coupling: T,
    v: &TrapPotential<T>,
    tol: T,
) -> Result<GroundStateCheck<T>, SolverError<T>> {
    let grid = s.grid();
    let spectral = Spectral3d::new(grid);
    let v_field = sampled_potential(v, grid)?;
    let count = s.len();
    let rho = density(s);
    let factor = T::of(5.0) / T::of(3.0) * coupling;
    let mut w = rho.map(|r| -factor * r.powf(T::of(2.0) / T::of(3.0)));
    if let Some(vf) = &v_field {
        w.add_scaled(T::one(), vf);
    }
    let opts = EigenOptions {
        tol: (tol * T::of(0.1)).min(T::of(1e-6)),
        max_iter: 800,
        seed: 1,
    };
    // Extra levels so a degenerate multiplet at the Fermi level can be
    // followed to its end.
    let extra = 3usize;
    let eig = eigen::lowest_eigenpairs(&w, count + extra, opts).map_err(SolverError::Eigen)?;

    let (mu, _) = subspace_hamiltonian_with(&spectral, s, coupling, v_field.as_ref());

    let slack = tol * T::one().max(eig.eigenvalues[0].abs());
    let fermi_gap = eig.eigenvalues[count] - mu.values[count - 1];
    let degenerate_at_fermi = fermi_gap <= slack;

    // Span containment: principal angles between the frame and the lowest
    // eigenspace, extended through any multiplet straddling the Fermi level
    // (inside a degenerate multiplet the lowest-N slice is not unique).
    let mut span = count;
    while degenerate_at_fermi
        && span < count + extra
        && eig.eigenvalues[span] - mu.values[count - 1] <= slack
    {
        span += 1;
    }
    let mut gram = vec![T::zero(); count * count];
    let overlaps: Vec<Vec<T>> = (0..count)
        .map(|i| {
            (0..span)
                .map(|j| s.orbital(i).inner(&eig.eigenfields[j]))
                .collect()
        })
        .collect();
    for i in 0..count {
        for j in 0..count {
            let mut acc = T::zero();
            for k in 0..span {
                acc = acc + overlaps[i][k] * overlaps[j][k];
            }
            gram[i * count + j] = acc;
        }
    }
    let sigma_min_sq = linalg::symeig(&gram, count).values[0].max(T::zero());
    let cos_min = sigma_min_sq.sqrt().min(T::one());
    let max_principal_angle = cos_min.acos();

    let second = if count >= 2 {
        mu.values[1]
    } else {
        eig.eigenvalues[1]
    };
    let first_level_simple = second - mu.values[0] > slack;
    let pass = max_principal_angle < tol && first_level_simple;
    Ok(GroundStateCheck {
        pass,
        max_principal_angle,
        multipliers: mu.values,
        spectrum: eig.eigenvalues,
        first_level_simple,
        degenerate_at_fermi,
    })
}

/// Energy of the cut-off, dilated, re-orthonormalized trial frame built from
/// a best-constant optimizer: concentration scale `tau >= 1` at center `y0`.
///
/// The dilation is evaluated analytically (kinetic and interaction pick up
/// the exact factor `tau²`; the trap term is integrated in the blown-up
/// frame), so arbitrarily large `tau` stays fully resolved on the optimizer's
/// grid. `box_half_length` is the physical box the trial state must fit in.
pub fn trial_energy<T: Real>(
    tau: T,
    y0: [T; 3],
    coupling: T,
    v: &TrapPotential<T>,
    optimizer: &OrbitalSet<T>,
    box_half_length: T,
) -> Result<EnergyBreakdown<T>, SolverError<T>> {
    if !(tau >= T::one()) {
        return Err(SolverError::BadTrialScale(tau.as_f64()));
    }
    let reach = y0.iter().fold(T::zero(), |m, &c| m.max(c.abs())) + T::of(2.0);
    if reach > box_half_length {
        return Err(SolverError::TrialSupportOverflow(box_half_length.as_f64()));
    }
    let grid = optimizer.grid();
    let spectral = Spectral3d::new(grid);

    // Smooth cutoff: 1 on [0,1], 0 on [2,∞), C^∞ in between; applied in the
    // blown-up coordinate where the profile lives (radius tau, 2·tau).
    let cutoff = |r: T| -> T {
        let t = r / tau;
        if t <= T::one() {
            T::one()
        } else if t >= T::of(2.0) {
            T::zero()
        } else {
            let f = |x: T| {
                if x > T::zero() {
                    (-T::one() / x).exp()
                } else {
                    T::zero()
                }
            };
            let a = f(T::of(2.0) - t);
            a / (a + f(t - T::one()))
        }
    };

    let cut_fields: Vec<ScalarField<T>> = optimizer
        .orbitals()
        .iter()
        .map(|u| {
            let g = u.grid();
            let n = g.points_per_dim();
            let mut out = u.clone();
            for i3 in 0..n {
                for i2 in 0..n {
                    for i1 in 0..n {
                        let (x, y, z) = (g.coord(i1), g.coord(i2), g.coord(i3));
                        let r = (x * x + y * y + z * z).sqrt();
                        let idx = g.index(i1, i2, i3);
                        out.values_mut()[idx] = out.values()[idx] * cutoff(r);
                    }
                }
            }
            out
        })
        .collect();
    let trial = loewdin(&OrbitalSet::new(cut_fields)?)?;

    let eval = evaluate_frame(&spectral, &trial, T::zero(), None, false);
    let kinetic_blown = eval.breakdown.kinetic;
    let rho53 = eval.rho53;
    // Trap term on the blown-up profile: ∫ V(y/tau + y0) ρ(y) dy.
    let v_scaled = ScalarField::from_fn(grid, |x, y, z| {
        v.eval(x / tau + y0[0], y / tau + y0[1], z / tau + y0[2])
    });
    let potential = v_scaled.inner(&eval.rho);

    let tau2 = tau * tau;
    let kinetic = tau2 * kinetic_blown;
    let interaction = coupling * tau2 * rho53;
    Ok(EnergyBreakdown {
        coupling,
        kinetic,
        potential,
        interaction,
        total: kinetic + potential - interaction,
    })
}
