//! Thin CLI around the scenario pipeline.  Subcommands: spectrum,
//! report, sweep, mc, det-trace, check.  Exit code 0 only when every
//! asserted invariant passes (1 config, 2 invariant, 3 numerical, 4 io).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use formflow::error::FlowError;
use formflow::scenario::{
    self, det_trace, full_report, mc_compare, parse_scenario, render_report, spectral_run, sweep,
    Scenario,
};

#[derive(Parser)]
#[command(name = "formflow", about = "spectral workbench for stochastic flows on forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// scenario TOML file
    #[arg(long)]
    scenario: PathBuf,
    /// output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// worker threads (0 = rayon default)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// assemble, decompose, write eigenvalues.csv
    Spectrum(Common),
    /// full diagnostic report (report.txt + eigenvalues.csv)
    Report(Common),
    /// temperature sweep over run.t_list (sweep.csv)
    Sweep(Common),
    /// integrators vs spectral equilibrium densities (histogram.csv)
    Mc(Common),
    /// fixed points and Lefschetz traces (fixed_points.csv)
    DetTrace(Common),
    /// fast invariant suite only
    Check(Common),
}

fn load(common: &Common) -> Result<Scenario, FlowError> {
    if common.threads > 0 {
        // wide stacks: LAPACK-backed calls may run inside workers
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .stack_size(64 << 20)
            .build_global();
    }
    let text = std::fs::read_to_string(&common.scenario)?;
    let mut s = parse_scenario(&text)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    std::fs::create_dir_all(&common.out)?;
    Ok(s)
}

fn run() -> Result<(), FlowError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Check(c) => {
            let s = load(c)?;
            let set = s.assemble(s.resolution(), false)?;
            let inv = scenario::invariant_suite(&set)?;
            println!("d_squared_max = {:.3e}", inv.d_squared_max);
            println!("susy_residual_rel = {:.3e}", inv.susy_residual_rel);
            println!("reality_residual = {:.3e}", inv.reality_residual);
            println!("pass = {}", inv.pass);
            if !inv.pass {
                return Err(FlowError::InvariantFailed {
                    name: "suite".into(),
                    detail: "see printed residuals".into(),
                });
            }
            Ok(())
        }
        Command::Spectrum(c) => {
            let s = load(c)?;
            let run = spectral_run(&s, false)?;
            let path = c.out.join("eigenvalues.csv");
            scenario::write_eigenvalue_csv(&path, &run)?;
            println!("wrote {}", path.display());
            println!(
                "blocks decomposed: {} eigenvalues, θ = {:.3e}",
                run.spectrum.pairs.len(),
                run.zero_modes.threshold
            );
            Ok(())
        }
        Command::Report(c) => {
            let s = load(c)?;
            let rep = full_report(&s)?;
            let text = render_report(&s, &rep);
            std::fs::write(c.out.join("report.txt"), &text)?;
            scenario::write_eigenvalue_csv(&c.out.join("eigenvalues.csv"), &rep.run)?;
            print!("{text}");
            Ok(())
        }
        Command::Sweep(c) => {
            let s = load(c)?;
            let table = sweep(&s)?;
            scenario::write_sweep_csv(&c.out.join("sweep.csv"), &table)?;
            for row in &table.rows {
                println!(
                    "T = {}: W = {}, Γ_g = {:.6e}, E_g = {:.6e}, {}",
                    row.temperature,
                    row.report.witten_index,
                    row.report.gamma_g,
                    row.report.e_g,
                    row.report.classification
                );
            }
            match table.restoration_t {
                Some(t) => println!("restored (UNBROKEN_TE) from T = {t}"),
                None => println!("no restoration within the sampled range"),
            }
            Ok(())
        }
        Command::Mc(c) => {
            let s = load(c)?;
            let comparisons = mc_compare(&s)?;
            for (i, cmp) in comparisons.iter().enumerate() {
                let name = if i == 0 {
                    "histogram.csv".to_string()
                } else {
                    format!("histogram_{}.csv", cmp.integrator)
                };
                scenario::write_histogram_csv(&c.out.join(&name), &cmp.histogram)?;
                println!(
                    "{}: L1 vs H_strat TE = {:.4}, L1 vs H_ito TE = {:.4} ({} samples) -> {}",
                    cmp.integrator, cmp.l1_strat, cmp.l1_ito, cmp.histogram.total, name
                );
            }
            Ok(())
        }
        Command::DetTrace(c) => {
            let s = load(c)?;
            let rep = det_trace(&s)?;
            scenario::write_fixed_points_csv(&c.out.join("fixed_points.csv"), &rep, s.dim())?;
            println!("fixed points: {}", rep.fixed_points.len());
            for (t, v) in &rep.lefschetz_per_time {
                println!("lefschetz(t = {t}) = {v:.9}");
            }
            println!("lefschetz integer = {}", rep.lefschetz);
            println!("z-weight trace at t = {} -> {:.6}", rep.z_time, rep.z_trace);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                FlowError::Config(_) | FlowError::InvalidParameter { .. } => 1,
                FlowError::InvariantFailed { .. } | FlowError::AmbiguousGap { .. } => 2,
                FlowError::Io(_) => 4,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}
