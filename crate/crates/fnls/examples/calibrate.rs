//! Grid-calibration probe: compares the critical-coupling estimator against
//! the radial shooting value at several resolutions. Dev tool, not a test.

use fnls::field::make_grid;
use fnls::solver::{estimate_critical_coupling, SolverConfig};

/// Ground state of -R'' - (2/r) R' + R = R^{7/3}: bisection on R(0).
fn shoot_ground_state() -> (f64, f64) {
    let h = 5e-4;
    let r_max = 30.0;
    // Returns (+1 overshoot: crossed zero, -1 undershoot: turned back up, mass)
    let integrate = |s: f64| -> (i32, f64) {
        let mut r = 1e-6;
        let mut u = s + (s - s.powf(7.0 / 3.0)) * r * r / 6.0;
        let mut du = (s - s.powf(7.0 / 3.0)) * r / 3.0;
        let mut mass = 0.0;
        let f = |r: f64, u: f64, du: f64| -> (f64, f64) {
            let upow = if u > 0.0 { u.powf(7.0 / 3.0) } else { -(-u).powf(7.0 / 3.0) };
            (du, u - upow - 2.0 / r * du)
        };
        while r < r_max {
            let (k1u, k1d) = f(r, u, du);
            let (k2u, k2d) = f(r + 0.5 * h, u + 0.5 * h * k1u, du + 0.5 * h * k1d);
            let (k3u, k3d) = f(r + 0.5 * h, u + 0.5 * h * k2u, du + 0.5 * h * k2d);
            let (k4u, k4d) = f(r + h, u + h * k3u, du + h * k3d);
            let u_new = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            let du_new = du + h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            mass += h * 0.5 * (r * r * u * u + (r + h) * (r + h) * u_new * u_new);
            r += h;
            u = u_new;
            du = du_new;
            if u < 0.0 {
                return (1, mass);
            }
            if du > 0.0 {
                return (-1, mass);
            }
        }
        (-1, mass)
    };
    let mut lo = 3.0;
    let mut hi = 8.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (sign, _) = integrate(mid);
        if sign > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s_star = 0.5 * (lo + hi);
    let (_, mass) = integrate(s_star);
    (s_star, 4.0 * std::f64::consts::PI * mass)
}

fn main() {
    let (s0, m) = shoot_ground_state();
    let a1_oracle = 0.6 * m.powf(2.0 / 3.0);
    println!("shooting: R(0) = {s0:.8}, mass = {m:.8}, a1* = {a1_oracle:.8}");

    let grid = make_grid(12.0, 48).unwrap();
    let cfg = SolverConfig {
        energy_tol: 1e-11,
        residual_tol: 1e-3,
        rescale_radius: 1.8,
        ..SolverConfig::default()
    };
    let t0 = std::time::Instant::now();
    let est = estimate_critical_coupling(&cfg, grid, 1).unwrap();
    println!(
        "a1* estimate = {:.8} (rel dev {:.2e}), residual {:.2e}, iters {}, {:.1}s",
        est.value,
        (est.value - a1_oracle).abs() / a1_oracle,
        est.residual_max,
        est.iterations,
        t0.elapsed().as_secs_f32()
    );

    // Short sweep toward the critical coupling in a ring trap.
    let v = fnls::potential::TrapPotential::ring(1.0, 1.0, 2.0).unwrap();
    let w_grid = make_grid(8.0, 64).unwrap();
    let sweep_cfg = SolverConfig {
        energy_tol: 1e-9,
        residual_tol: 1e-3,
        rescale_radius: 1.8,
        ..SolverConfig::default()
    };
    let gaps: Vec<f64> = (0..7)
        .map(|i| 1e-1 * 10f64.powf(-(i as f64) / 3.0))
        .collect();
    let t0 = std::time::Instant::now();
    match fnls::scaling::sweep(&sweep_cfg, w_grid, &v, est.value, &gaps, &est.optimizer) {
        Ok(out) => {
            println!("sweep took {:.1}s", t0.elapsed().as_secs_f32());
            for r in &out.records {
                let p = (r.x_max[0] * r.x_max[0] + r.x_max[1] * r.x_max[1]).sqrt();
                println!(
                    "gap {:.3e}: I={:.6e} I/sqrt(gap)={:.5} rho53={:.4e} |p|={:.4} z={:.2e} mu1={:.4} eps2mu={:.4} leak={:.1e} conv={}",
                    r.gap,
                    r.energy,
                    r.energy / r.gap.sqrt(),
                    r.rho53,
                    p,
                    r.x_max[2],
                    r.multipliers[0],
                    r.eps * r.eps * r.multipliers[0],
                    r.boundary_leak,
                    r.converged
                );
            }
            let e_pts: Vec<(f64, f64)> = out.records.iter().map(|r| (r.gap, r.energy)).collect();
            let d_pts: Vec<(f64, f64)> = out.records.iter().map(|r| (r.gap, r.rho53)).collect();
            let ef = fnls::scaling::fit_power_law(&e_pts).unwrap();
            let df = fnls::scaling::fit_power_law(&d_pts).unwrap();
            println!(
                "I_a fit: exponent {:.4} (r2 {:.6}); rho53 fit: exponent {:.4} (r2 {:.6})",
                ef.exponent, ef.r_squared, df.exponent, df.r_squared
            );
        }
        Err(e) => println!("sweep FAILED: {e}"),
    }
}
