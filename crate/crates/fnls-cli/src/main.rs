//! Command-line surface: ground-state solves, critical-constant estimation,
//! coupling sweeps, ground-state verification, and plot-ready reports.
//!
//! All subcommands read the structured `key = value` configuration, write
//! outputs atomically (temp file + rename), and exit nonzero on any error.
//! `FNLS_LOG=info|debug` controls progress logging on stderr.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fnls::energy::EnergyBreakdown;
use fnls::io::config::{parse_config, CouplingSpec, RunConfig};
use fnls::io::records::{read_records, write_records};
use fnls::io::snapshot::{atomic_write, read_orbitals, write_orbitals};
use fnls::orbitals::random_init;
use fnls::potential::TrapPotential;
use fnls::scaling::{
    canonical_multipliers, canonical_scale, fit_power_law, limit_energy_check,
    multiplier_limit_check, sweep, SweepRecord,
};
use fnls::solver::{
    estimate_critical_coupling, estimate_dual_constant, minimize_direct, verify_groundstate,
    SolveReport,
};

#[derive(Parser)]
#[command(name = "fnls", version, about = "Fermionic NLS ground states in a periodic box")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Structured key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one trapped ground-state problem at a fixed coupling.
    Solve(CommonArgs),
    /// Estimate the critical coupling and its optimizer frame.
    #[command(name = "aNstar")]
    ANstar(CommonArgs),
    /// Continuation sweep toward the critical coupling with scaling fits.
    Sweep(CommonArgs),
    /// Verify a converged frame against the ground-state definition.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Orbital snapshot to verify.
        #[arg(long)]
        snapshot: PathBuf,
        /// Principal-angle tolerance.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Render plot-ready data files from an existing records.csv.
    Report {
        /// Directory holding records.csv; figures are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &CommonArgs) -> Result<(RunConfig, PathBuf)> {
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("thread pool")?;
    }
    let text = fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut cfg = parse_config(&text).context("parsing configuration")?;
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn energy_csv(e: &EnergyBreakdown<f64>) -> String {
    format!("{}\n{}\n", EnergyBreakdown::<f64>::csv_header(), e.csv_row())
}

fn trace_csv(report: &SolveReport<f64>) -> String {
    let mut out = String::from("step,total\n");
    for (i, e) in report.trace.iter().enumerate() {
        out.push_str(&format!("{i},{e:.16e}\n"));
    }
    out
}

fn multipliers_csv(mu: &[f64]) -> String {
    let mut out = String::from("index,mu\n");
    for (i, m) in mu.iter().enumerate() {
        out.push_str(&format!("{},{:.16e}\n", i + 1, m));
    }
    out
}

fn run_solve(common: CommonArgs) -> Result<()> {
    let (cfg, out) = load(&common)?;
    let CouplingSpec::Single(a) = cfg.coupling else {
        bail!("solve needs problem.a (a single coupling); use the sweep subcommand for gap lists");
    };
    let width = (cfg.grid.half_length() / 4.0).min(cfg.solver.rescale_radius);
    let init = random_init(cfg.grid, cfg.orbital_count, cfg.solver.seed, width)?;
    let report = minimize_direct(&cfg.solver, a, &cfg.potential, &init)?;
    write_text(&out.join("energy.csv"), &energy_csv(&report.energy))?;
    write_text(&out.join("trace.csv"), &trace_csv(&report))?;
    write_text(
        &out.join("multipliers.csv"),
        &multipliers_csv(&report.multipliers.values),
    )?;
    write_orbitals(&report.orbitals, &out.join("orbitals.fnls"))?;
    println!(
        "converged in {} steps: E = {:.10e} (kinetic {:.6e}, potential {:.6e}, interaction {:.6e}), residual {:.3e}, boundary leak {:.2e}",
        report.outer_iterations,
        report.energy.total,
        report.energy.kinetic,
        report.energy.potential,
        report.energy.interaction,
        report.residual_max,
        report.boundary_leak
    );
    Ok(())
}

fn run_anstar(common: CommonArgs) -> Result<()> {
    let (cfg, out) = load(&common)?;
    let est = estimate_critical_coupling(&cfg.solver, cfg.grid, cfg.orbital_count)?;
    let dual = estimate_dual_constant(&cfg.solver, cfg.orbital_count, &est.optimizer, est.value)?;
    let mut text = String::from(
        "N,a_star,residual,iterations,rank_deficient,L_star_dual,L_star_direct\n",
    );
    text.push_str(&format!(
        "{},{:.16e},{:.3e},{},{},{:.16e},{:.16e}\n",
        cfg.orbital_count,
        est.value,
        est.residual_max,
        est.iterations,
        est.rank_deficient as u8,
        dual.dual,
        dual.direct
    ));
    write_text(&out.join("anstar.csv"), &text)?;
    write_text(
        &out.join("multipliers.csv"),
        &multipliers_csv(&est.multipliers.values),
    )?;
    write_orbitals(&est.optimizer, &out.join("optimizer.fnls"))?;
    println!(
        "a_{}* = {:.8} (residual {:.2e}); L* dual = {:.6e}, direct = {:.6e}",
        cfg.orbital_count, est.value, est.residual_max, dual.dual, dual.direct
    );
    Ok(())
}

fn run_sweep(common: CommonArgs) -> Result<()> {
    let (cfg, out) = load(&common)?;
    let CouplingSpec::Gaps(gaps) = cfg.coupling.clone() else {
        bail!("sweep needs problem.gaps (a decreasing gap list)");
    };
    let est = estimate_critical_coupling(&cfg.solver, cfg.grid, cfg.orbital_count)
        .context("critical-coupling estimation")?;
    write_orbitals(&est.optimizer, &out.join("optimizer.fnls"))?;

    let sweep_out = sweep(
        &cfg.solver,
        cfg.grid,
        &cfg.potential,
        est.value,
        &gaps,
        &est.optimizer,
    )?;
    write_records(&sweep_out.records, &out.join("records.csv"))?;
    for (i, profile) in sweep_out.profiles.iter().enumerate() {
        write_orbitals(profile, &out.join(format!("profile_{i:03}.fnls")))?;
    }

    // Scaling fits over converged records.
    let good: Vec<&SweepRecord<f64>> =
        sweep_out.records.iter().filter(|r| r.converged).collect();
    let mut fits = String::from("name,exponent,prefactor,r_squared\n");
    if good.len() >= 3 {
        let e_fit = fit_power_law(
            &good.iter().map(|r| (r.gap, r.energy)).collect::<Vec<_>>(),
        )?;
        let d_fit = fit_power_law(
            &good.iter().map(|r| (r.gap, r.rho53)).collect::<Vec<_>>(),
        )?;
        fits.push_str(&format!(
            "energy_vs_gap,{:.16e},{:.16e},{:.16e}\n",
            e_fit.exponent, e_fit.prefactor, e_fit.r_squared
        ));
        fits.push_str(&format!(
            "rho53_vs_gap,{:.16e},{:.16e},{:.16e}\n",
            d_fit.exponent, d_fit.prefactor, d_fit.r_squared
        ));
    }
    write_text(&out.join("fits.csv"), &fits)?;

    // Limit diagnostics (ring traps only).
    if matches!(cfg.potential, TrapPotential::RingShaped { .. }) {
        let limit = limit_energy_check(&sweep_out.records, &est.optimizer, &cfg.potential)?;
        let scale = canonical_scale(&est.optimizer, &cfg.potential, limit.p_hat);
        let mu_hat = canonical_multipliers(&est.multipliers, scale);
        let mu_rep = multiplier_limit_check(&sweep_out.records, &mu_hat)?;
        let mut text = String::from("name,value\n");
        text.push_str(&format!("c0,{:.16e}\n", limit.c0));
        text.push_str(&format!("c1,{:.16e}\n", limit.c1));
        text.push_str(&format!("limit_lhs,{:.16e}\n", limit.lhs));
        text.push_str(&format!("limit_rhs,{:.16e}\n", limit.rhs));
        text.push_str(&format!("limit_rel_err,{:.16e}\n", limit.rel_err));
        text.push_str(&format!("canonical_scale,{:.16e}\n", limit.scale));
        for (i, d) in mu_rep.rel_dist_smallest.iter().enumerate() {
            text.push_str(&format!("mu_{}_rel_dist,{:.16e}\n", i + 1, d));
        }
        text.push_str(&format!(
            "mu_negative_at_smallest,{}\n",
            mu_rep.negative_at_smallest as u8
        ));
        write_text(&out.join("limit.csv"), &text)?;
    }

    println!(
        "swept {} gaps ({} converged); records in {}",
        sweep_out.records.len(),
        good.len(),
        out.join("records.csv").display()
    );
    Ok(())
}

fn run_verify(common: CommonArgs, snapshot: PathBuf, tol: f64) -> Result<i32> {
    let (cfg, out) = load(&common)?;
    let CouplingSpec::Single(a) = cfg.coupling else {
        bail!("verify needs problem.a");
    };
    let frame = read_orbitals::<f64>(&snapshot)
        .with_context(|| format!("reading {}", snapshot.display()))?;
    let check = verify_groundstate(&frame, a, &cfg.potential, tol)?;
    let mut text = String::new();
    text.push_str(&format!("pass,{}\n", check.pass as u8));
    text.push_str(&format!(
        "max_principal_angle,{:.16e}\n",
        check.max_principal_angle
    ));
    text.push_str(&format!(
        "first_level_simple,{}\n",
        check.first_level_simple as u8
    ));
    text.push_str(&format!(
        "degenerate_at_fermi,{}\n",
        check.degenerate_at_fermi as u8
    ));
    for (i, m) in check.multipliers.iter().enumerate() {
        text.push_str(&format!("mu_{},{:.16e}\n", i + 1, m));
    }
    for (i, l) in check.spectrum.iter().enumerate() {
        text.push_str(&format!("lambda_{},{:.16e}\n", i + 1, l));
    }
    write_text(&out.join("verify.csv"), &text)?;
    if check.pass {
        println!("PASS: angle {:.3e}", check.max_principal_angle);
        Ok(0)
    } else {
        println!("FAIL: angle {:.3e}", check.max_principal_angle);
        Ok(3)
    }
}

fn run_report(out: PathBuf) -> Result<()> {
    let records = read_records(&out.join("records.csv"))
        .with_context(|| format!("reading {}", out.join("records.csv").display()))?;
    if records.is_empty() {
        bail!("no records to report");
    }
    let mut energy = String::from("gap,I_a\n");
    let mut density = String::from("gap,rho53\n");
    let mut conc = String::from("eps,p_norm,z\n");
    let n_mu = records[0].multipliers.len();
    let mut mus = String::from("gap,");
    mus.push_str(
        &(1..=n_mu)
            .map(|i| format!("eps2_mu_{i}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    mus.push('\n');
    for r in &records {
        energy.push_str(&format!("{:.16e},{:.16e}\n", r.gap, r.energy));
        density.push_str(&format!("{:.16e},{:.16e}\n", r.gap, r.rho53));
        let p = (r.x_max[0] * r.x_max[0] + r.x_max[1] * r.x_max[1]).sqrt();
        conc.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            r.eps,
            p,
            r.x_max[2]
        ));
        let scaled: Vec<String> = r
            .multipliers
            .iter()
            .map(|m| format!("{:.16e}", m * r.eps * r.eps))
            .collect();
        mus.push_str(&format!("{:.16e},{}\n", r.gap, scaled.join(",")));
    }
    write_text(&out.join("fig_energy_scaling.csv"), &energy)?;
    write_text(&out.join("fig_density_scaling.csv"), &density)?;
    write_text(&out.join("fig_concentration.csv"), &conc)?;
    write_text(&out.join("fig_multipliers.csv"), &mus)?;
    println!("wrote 4 figure files to {}", out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(c) => run_solve(c).map(|()| 0),
        Command::ANstar(c) => run_anstar(c).map(|()| 0),
        Command::Sweep(c) => run_sweep(c).map(|()| 0),
        Command::Verify {
            common,
            snapshot,
            tol,
        } => run_verify(common, snapshot, tol),
        Command::Report { out } => run_report(out).map(|()| 0),
    };
    match code {
        Ok(c) => std::process::exit(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
