//! Ground-state solvers for N-orbital fermionic nonlinear Schrödinger systems
//! with attractive `ρ^{5/3}` self-interaction in a periodic 3D box.
//!
//! The crate minimizes the constrained energy
//!
//! ```text
//! E_a(u_1..u_N) = Σ_i ∫ |∇u_i|² + ∫ V ρ − a ∫ ρ^{5/3},   ρ = Σ_i |u_i|²,
//! ```
//!
//! over orthonormal orbital frames, estimates the critical coupling `a_N*`
//! (the best constant of the finite-rank Lieb-Thirring ratio) together with
//! its dual constant `L_N*`, and provides a continuation harness that tracks
//! energy scaling, density blow-up, and concentration of minimizers in
//! ring-shaped traps as the coupling approaches `a_N*`.
//!
//! All field arithmetic is spectral (FFT) on a uniform periodic grid and is
//! generic over the scalar type through [`Real`]; concrete `f64` aliases are
//! exported at the crate root ([`Grid`], [`Field`], [`Orbitals`], ...).

pub mod eigen;
pub mod energy;
pub mod field;
pub mod io;
pub mod linalg;
pub mod log;
pub mod orbitals;
pub mod potential;
pub mod real;
pub mod scaling;
pub mod solver;

pub use real::Real;

/// `f64` grid specification.
pub type Grid = field::GridSpec<f64>;
/// `f64` scalar field.
pub type Field = field::ScalarField<f64>;
/// `f64` trap potential.
pub type Trap = potential::TrapPotential<f64>;
/// `f64` orthonormal orbital frame.
pub type Orbitals = orbitals::OrbitalSet<f64>;
/// `f64` energy breakdown.
pub type Energy = energy::EnergyBreakdown<f64>;
/// `f64` solver configuration.
pub type Config = solver::SolverConfig<f64>;
// (aliases for in-progress modules are added as the modules land)
