//! Command-line front end for the `epiqbd` library.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use epiqbd::data::{
    ensemble_csv, fixture, format_sig, parse_series_file, rho_csv, trace_csv, trajectory_csv,
    write_file, Strictness,
};
use epiqbd::estimate::{estimate_regimes, fit_weights};
use epiqbd::intervention::{scenario_report, Scenario};
use epiqbd::model::{ParamsFile, RateConvention, RegimeSchedule};
use epiqbd::simulate::{simulate_ensemble, simulate_once, SimulationConfig};
use epiqbd::transient::{day_grid, mean_trajectory_with_tol, MeanEngine};

pub mod reproduce;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "epiqbd",
    version,
    about = "Batch birth-death epidemic model: estimation, transient means, simulation and scenarios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate infection and disappearing rates from a daily series
    Estimate {
        /// Series CSV
        #[arg(long)]
        input: PathBuf,
        /// First day of the second regime
        #[arg(long)]
        change_point: Option<usize>,
        /// Report broken row identities as warnings instead of failing
        #[arg(long)]
        lax: bool,
    },
    /// Run a Monte-Carlo ensemble and write daily summaries
    Simulate {
        /// Parameters JSON
        #[arg(long)]
        params: PathBuf,
        /// Number of observation days
        #[arg(long)]
        days: u32,
        /// Number of replications
        #[arg(long)]
        reps: u32,
        #[arg(long)]
        seed: u64,
        /// Ensemble CSV (day,mean,var,p05,p95)
        #[arg(long)]
        out: PathBuf,
        /// Per-group counts of replication 0
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Expected trajectory by uniformization of the truncated chain
    Transient {
        /// Parameters JSON
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        days: u32,
        /// Total truncation tolerance, in (0, 1e-3]
        #[arg(long)]
        tol: f64,
        /// Trajectory CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit batch-size pair and weights to a series
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        change_point: Option<usize>,
        /// Candidate pairs, e.g. `0-1,1-2`
        #[arg(long, value_parser = parse_pairs)]
        pairs: Pairs,
        /// Reading of the estimated infection rate
        #[arg(long, default_value = "flow", value_parser = parse_convention)]
        convention: RateConvention,
        /// Write the fitted schedule as a parameters JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Control-effect ratios of a scenario's rate, batch-size and initial-count edits
    Intervene {
        #[arg(long)]
        params: PathBuf,
        /// Scenario JSON
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        days: u32,
        /// Ratio CSV (day,rho_lambda,rho_d,rho_k)
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-estimate and back-test a bundled country fixture
    Reproduce {
        /// One of new-york, india, egypt, south-korea, italy, mexico
        #[arg(long)]
        country: String,
        #[arg(long, default_value = "flow", value_parser = parse_convention)]
        convention: RateConvention,
        #[arg(long)]
        outdir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairs(pub Vec<(u32, u32)>);

fn parse_pairs(s: &str) -> std::result::Result<Pairs, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (a, b) = item
            .split_once(['-', ':'])
            .ok_or_else(|| format!("pair `{item}` should look like 1-2"))?;
        let a: u32 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad batch size in `{item}`"))?;
        let b: u32 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad batch size in `{item}`"))?;
        if a >= b {
            return Err(format!("pair `{item}` needs d1 < d2"));
        }
        out.push((a, b));
    }
    if out.is_empty() {
        return Err("no pairs given".into());
    }
    Ok(Pairs(out))
}

fn parse_convention(s: &str) -> std::result::Result<RateConvention, String> {
    s.parse::<RateConvention>().map_err(|e| e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| epiqbd::Error::Io(format!("{}: {e}", path.display())).into())
}

fn load_schedule(path: &Path) -> Result<RegimeSchedule> {
    let text = read_text(path)?;
    let schedule = ParamsFile::from_json(&text)
        .and_then(|p| p.to_schedule())
        .with_context(|| format!("parameters file {}", path.display()))?;
    Ok(schedule)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Estimate {
            input,
            change_point,
            lax,
        } => {
            let strictness = if lax {
                Strictness::Lax
            } else {
                Strictness::Strict
            };
            let series = parse_series_file(&input, strictness)
                .with_context(|| format!("series {}", input.display()))?;
            for w in series.warnings() {
                eprintln!("warning: {w}");
            }
            let estimates = estimate_regimes(&series, change_point)?;
            for e in &estimates {
                if estimates.len() > 1 {
                    print!("days={}-{}, ", e.window.first_day, e.window.last_day);
                }
                println!(
                    "beta_hat={}, mu_hat={}, k={}",
                    format_sig(e.beta_hat),
                    format_sig(e.mu_hat),
                    e.k
                );
            }
        }
        Command::Simulate {
            params,
            days,
            reps,
            seed,
            out,
            trace,
        } => {
            let schedule = load_schedule(&params)?;
            if let Some(path) = &trace {
                let once = simulate_once(&schedule, days, seed)?;
                write_file(path, &trace_csv(&once.counts))?;
            }
            let summary = simulate_ensemble(&SimulationConfig {
                schedule,
                horizon: days,
                replications: reps,
                seed,
            })?;
            write_file(&out, &ensemble_csv(&summary))?;
        }
        Command::Transient {
            params,
            days,
            tol,
            out,
        } => {
            let schedule = load_schedule(&params)?;
            let traj = mean_trajectory_with_tol(
                &schedule,
                &day_grid(days),
                MeanEngine::Uniformization,
                tol,
            )?;
            if let Some(worst) = traj
                .mass_defect
                .as_ref()
                .and_then(|m| m.iter().copied().reduce(f64::max))
            {
                if worst > tol {
                    eprintln!("warning: mass defect reached {worst:.3e}");
                }
            }
            write_file(&out, &trajectory_csv(&traj))?;
        }
        Command::Fit {
            input,
            change_point,
            pairs,
            convention,
            out,
        } => {
            let series = parse_series_file(&input, Strictness::Strict)
                .with_context(|| format!("series {}", input.display()))?;
            let estimates = estimate_regimes(&series, change_point)?;
            let fit = fit_weights(&series, &estimates, &pairs.0, convention)?;
            for ((e, p), m) in estimates.iter().zip(&fit.pairs).zip(&fit.mixtures) {
                let w = m.weights();
                println!(
                    "days={}-{}, pair=({},{}), r1={:.3}, r2={:.3}",
                    e.window.first_day, e.window.last_day, p.0, p.1, w[0], w[1]
                );
            }
            println!("objective={}", format_sig(fit.objective));
            if let Some(path) = out {
                write_file(&path, &ParamsFile::from_schedule(&fit.schedule)?.to_json())?;
            }
        }
        Command::Intervene {
            params,
            scenario,
            days,
            out,
        } => {
            let schedule = load_schedule(&params)?;
            let scenario = Scenario::from_json(&read_text(&scenario)?)
                .with_context(|| format!("scenario {}", scenario.display()))?;
            let report = scenario_report(
                &schedule,
                &scenario,
                &day_grid(days),
                MeanEngine::ClosedForm,
            )?;
            write_file(
                &out,
                &rho_csv(&report.rho_lambda, &report.rho_d, &report.rho_k),
            )?;
        }
        Command::Reproduce {
            country,
            convention,
            outdir,
        } => {
            let f = fixture(&country)?;
            std::fs::create_dir_all(&outdir)
                .map_err(|e| epiqbd::Error::Io(format!("{}: {e}", outdir.display())))?;
            let rep = reproduce::reproduce(&f, convention)?;
            write_file(
                outdir.join(format!("{}-trajectory.csv", f.key)),
                &rep.trajectory_csv,
            )?;
            write_file(outdir.join(format!("{}.svg", f.key)), &rep.svg)?;
            write_file(outdir.join(format!("{}-report.txt", f.key)), &rep.report)?;
            print!("{}", rep.report);
        }
    }
    Ok(())
}

/// Exit code for a failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use epiqbd::Error as E;
    match err.downcast_ref::<E>() {
        Some(
            E::ToleranceUnachievable(_)
            | E::Overflow
            | E::LevelOverflow { .. }
            | E::DegenerateScenario { .. },
        ) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_lists() {
        assert_eq!(parse_pairs("0-1,1-2").unwrap(), Pairs(vec![(0, 1), (1, 2)]));
        assert_eq!(parse_pairs("0:2").unwrap(), Pairs(vec![(0, 2)]));
        assert!(parse_pairs("2-1").is_err());
        assert!(parse_pairs("").is_err());
    }

    #[test]
    fn numeric_errors_map_to_three() {
        let e: anyhow::Error = epiqbd::Error::ToleranceUnachievable("x".into()).into();
        assert_eq!(exit_code(&e), EXIT_NUMERIC);
        let e: anyhow::Error = epiqbd::Error::EmptyInput.into();
        assert_eq!(exit_code(&e.context("reading")), EXIT_DATA);
    }
}
