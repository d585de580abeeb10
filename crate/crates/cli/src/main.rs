//! Command-line front end: resolves a scenario, runs one stage into an
//! output directory and reports where the artifacts went.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nanoring::par::Execution;
use nanoring::scenario::{self, pipeline, RunManifest, Scenario, Stage};
use nanoring::{Error, Result};

#[derive(Parser)]
#[command(name = "nanoring", version, about = "Vortex-pulse driven charge dynamics in concentric quantum rings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary problem and write the occupied orbitals.
    Eigensolve(RunArgs),
    /// Propagate, then write dipole traces, spectrograms and Stokes maps.
    Simulate(RunArgs),
    /// Recompute spectrograms (and wavelet maps) from a stored dipole trace.
    Spectrum(RunArgs),
    /// Recompute Stokes maps from a stored dipole trace.
    Stokes(RunArgs),
    /// Write the first-order transition line list.
    Oracle(RunArgs),
    /// Sweep winding number and intensity and probe one spectrogram point.
    Scan(RunArgs),
    /// Print the bundled scenarios.
    ListScenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario name or path to a TOML file.
    #[arg(long)]
    scenario: String,
    /// Output directory [default: $NANORING_OUT/<scenario name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Apply the scenario's [ci] reductions.
    #[arg(long)]
    ci_scale: bool,
    /// Replace one field, e.g. `grid.nx=128` or `stack.rings.0.width=30`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run the kernels on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long, env = "NANORING_OUT", default_value = "nanoring-out", hide_env_values = true)]
    out_root: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> Result<(Scenario, PathBuf, Execution)> {
        let s = scenario::resolve(&self.scenario, self.ci_scale, &self.overrides)?;
        let dir = self.out.clone().unwrap_or_else(|| self.out_root.join(&s.name));
        let exec = if self.sequential { Execution::Sequential } else { Execution::Parallel };
        Ok((s, dir, exec))
    }
}

fn report(dir: &std::path::Path, manifest: &RunManifest) {
    println!(
        "{} [{}] -> {} ({} artifacts, {:.1} s)",
        manifest.command,
        &manifest.scenario_hash[..12],
        dir.display(),
        manifest.artifacts.len(),
        manifest.wall_seconds.unwrap_or(0.0)
    );
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::ListScenarios => {
            for (name, text) in scenario::BUNDLED {
                let s = scenario::parse_scenario(text)?;
                let ci = if s.ci.is_some() { " (ci)" } else { "" };
                println!("{name:<10}{ci:<6}{}", s.description);
            }
        }
        Command::Eigensolve(a) => {
            let (s, dir, _) = a.resolve()?;
            let (m, orbitals) = pipeline::eigensolve(&s, &dir)?;
            for o in &orbitals {
                println!("n0={:<2} m0={:<4} E={:>10.5} meV  f={:.4}", o.n0, o.m0, o.energy, o.occupation);
            }
            report(&dir, &m);
        }
        Command::Oracle(a) => {
            let (s, dir, _) = a.resolve()?;
            let (m, lines) = pipeline::oracle(&s, &dir)?;
            for l in lines.iter().take(10) {
                println!("{:?} -> {:?}  {:.4} meV  {:.4} THz  weight {:.3e}", l.from, l.to, l.delta_e, l.frequency_thz, l.weight);
            }
            report(&dir, &m);
        }
        Command::Simulate(a) => {
            let (s, dir, exec) = a.resolve()?;
            let out = scenario::run_pipeline(&s, &dir, exec)?;
            let summary = &out.main.summary;
            println!("max norm drift {:.2e}", summary.max_norm_drift);
            for c in &summary.channels {
                let [s1, s2, s3] = c.peak_stokes;
                println!(
                    "{:<6} peak {:.3} THz ({:.3} meV) at {:.2} ps  S0 {:.3e}  S1/S0 {s1:+.3} S2/S0 {s2:+.3} S3/S0 {s3:+.3}",
                    c.label, c.peak_frequency, c.peak_energy_mev, c.peak_time, c.peak_s0
                );
            }
            report(&dir, &out.manifest);
        }
        Command::Spectrum(a) => reanalyze(a, Stage::Spectrum)?,
        Command::Stokes(a) => reanalyze(a, Stage::Stokes)?,
        Command::Scan(a) => {
            let (s, dir, exec) = a.resolve()?;
            let out = scenario::run_scan(&s, &dir, exec)?;
            for (m, row) in out.m_oam.iter().zip(&out.values) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.3e}")).collect();
                println!("m_oam {m:>3}: {}", cells.join("  "));
            }
            report(&dir, &out.manifest);
        }
    }
    Ok(())
}

fn reanalyze(a: RunArgs, stage: Stage) -> Result<()> {
    let (s, dir, exec) = a.resolve()?;
    let m = pipeline::reanalyze(&s, &dir, stage, exec)?;
    report(&dir, &m);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            exit(&e)
        }
    }
}

fn exit(e: &Error) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
