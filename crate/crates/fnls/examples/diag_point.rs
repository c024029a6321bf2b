//! Deep diagnostic of a single small-gap sweep point on two boxes. Dev tool.

use fnls::field::{make_grid, GridSpec, ScalarField};
use fnls::orbitals::density;
use fnls::solver::{estimate_critical_coupling, SolverConfig};

fn moments(rho: &ScalarField<f64>) -> [f64; 3] {
    let g = rho.grid();
    let n = g.points_per_dim();
    let c = rho.centroid();
    let mut m = [0.0; 3];
    let mut mass = 0.0;
    for i3 in 0..n {
        for i2 in 0..n {
            for i1 in 0..n {
                let v = rho.values()[g.index(i1, i2, i3)];
                let d = [
                    g.coord(i1) - c[0],
                    g.coord(i2) - c[1],
                    g.coord(i3) - c[2],
                ];
                for a in 0..3 {
                    m[a] += v * d[a] * d[a];
                }
                mass += v;
            }
        }
    }
    [
        (m[0] / mass).sqrt(),
        (m[1] / mass).sqrt(),
        (m[2] / mass).sqrt(),
    ]
}

fn main() {
    let grid = make_grid(12.0, 48).unwrap();
    let cfg = SolverConfig {
        energy_tol: 1e-11,
        residual_tol: 1e-3,
        rescale_radius: 1.8,
        ..SolverConfig::default()
    };
    let est = estimate_critical_coupling(&cfg, grid, 1).unwrap();
    let v = fnls::potential::TrapPotential::ring(1.0, 1.0, 2.0).unwrap();

    for (l, n) in [(8.0, 64usize), (9.0, 72)] {
        let w_grid: GridSpec<f64> = make_grid(l, n).unwrap();
        let sweep_cfg = SolverConfig {
            energy_tol: 1e-9,
            residual_tol: 2e-3,
            rescale_radius: 1.8,
            ..SolverConfig::default()
        };
        let gaps = [1e-1f64, 1e-2, 1e-3];
        let t0 = std::time::Instant::now();
        let out = fnls::scaling::sweep(&sweep_cfg, w_grid, &v, est.value, &gaps, &est.optimizer)
            .unwrap();
        println!("== box L={l} n={n} ({:.0}s)", t0.elapsed().as_secs_f32());
        for (r, prof) in out.records.iter().zip(&out.profiles) {
            let rho = density(prof);
            let m = moments(&rho);
            println!(
                "gap {:.1e}: I/sqrt = {:.5}, conv {}, axis widths [{:.3} {:.3} {:.3}], mu~ {:.4}",
                r.gap,
                r.energy / r.gap.sqrt(),
                r.converged,
                m[0],
                m[1],
                m[2],
                r.multipliers[0] * r.eps * r.eps,
            );
        }
    }
}
