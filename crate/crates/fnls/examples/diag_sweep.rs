//! One-point sweep diagnostic at decreasing gaps. Dev tool.

use fnls::field::make_grid;
use fnls::solver::{estimate_critical_coupling, SolverConfig};

fn main() {
    let grid = make_grid(12.0, 48).unwrap();
    let cfg = SolverConfig {
        energy_tol: 1e-11,
        residual_tol: 1e-3,
        rescale_radius: 1.8,
        ..SolverConfig::default()
    };
    let est = estimate_critical_coupling(&cfg, grid, 1).unwrap();
    eprintln!("a* = {}", est.value);

    let v = fnls::potential::TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
    let w_grid = make_grid(8.0, 64).unwrap();
    let sweep_cfg = SolverConfig {
        energy_tol: 1e-6,
        residual_tol: 2e-3,
        rescale_radius: 1.8,
        ..SolverConfig::default()
    };
    let gaps = [1e-1f64, 1e-2, 1e-3];
    let t0 = std::time::Instant::now();
    let out =
        fnls::scaling::sweep(&sweep_cfg, w_grid, &v, est.value, &gaps, &est.optimizer).unwrap();
    for r in &out.records {
        eprintln!(
            "gap {:.1e}: I/sqrt(gap) = {:.5}, conv {}",
            r.gap,
            r.energy / r.gap.sqrt(),
            r.converged
        );
    }
    eprintln!("3-point sweep: {:.1}s", t0.elapsed().as_secs_f32());
}
