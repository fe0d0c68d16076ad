use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evade_cli::commands;
use evade_cli::scenario_file;
use evade_cli::CliError;
use evade_core::simulation::SweepAxis;

/// Closed-loop collision avoidance on curved roads.
///
/// Log verbosity is read from EVADE_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "evade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario file (`key = value` lines).
    scenario: PathBuf,
    /// Override a scenario key, e.g. `--set speed=75km/h`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop manoeuvre and write trace.csv, region.csv, metrics.json, plot.py.
    Run {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep speed or radius over planner variants and write table.csv and rows.json.
    Sweep {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Speeds in km/h, comma separated.
        #[arg(long, conflicts_with = "radii", required_unless_present = "radii")]
        speeds: Option<String>,
        /// Radii in m, comma separated.
        #[arg(long)]
        radii: Option<String>,
        /// Comma-separated variants or `all`.
        #[arg(long, default_value = "all")]
        variants: String,
        #[arg(short, long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Print the ancillary gain, invariant tube and tightened bounds as JSON.
    TightenSets {
        #[command(flatten)]
        sc: ScenarioArgs,
    },
    /// Run and check each recorded position against the region planned for it.
    ValidateConstraints {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Allowed violation in m.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Exit with a run failure when any step is outside its region.
        #[arg(long)]
        strict: bool,
    },
    /// Print the scenario keys with their units.
    Keys,
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serialises")
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { sc, out } => {
            let scenario = commands::load_scenario(&sc.scenario, &sc.overrides)?;
            let rep = commands::run(&scenario, &out)?;
            let m = &rep.trace.metrics;
            println!(
                "{}: IACA_delta {:.4} rad, IACA_ax {:.4} m/s2, IACA_Mz {:.1} N*m, max e_y {:.3} m, min separation {}",
                rep.trace.scenario,
                m.iaca_delta,
                m.iaca_ax,
                m.iaca_mz,
                m.max_e_y,
                m.min_separation.map_or("n/a".into(), |d| format!("{d:.3} m"))
            );
            for f in rep.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep {
            sc,
            speeds,
            radii,
            variants,
            out,
        } => {
            let scenario = commands::load_scenario(&sc.scenario, &sc.overrides)?;
            let axis = match (speeds, radii) {
                (Some(s), _) => SweepAxis::Speed(commands::parse_list(&s)?),
                (None, Some(r)) => SweepAxis::Radius(commands::parse_list(&r)?),
                (None, None) => unreachable!("clap requires one axis"),
            };
            let variants = commands::parse_variants(&variants)?;
            let rep = commands::sweep(&scenario, &axis, &variants, &out)?;
            for f in &rep.files {
                println!("wrote {}", f.display());
            }
            if !rep.failures.is_empty() {
                return Err(CliError::Run(rep.failures.join("; ")));
            }
        }
        Command::TightenSets { sc } => {
            let scenario = commands::load_scenario(&sc.scenario, &sc.overrides)?;
            println!("{}", json(&commands::tighten_sets(&scenario)?));
        }
        Command::ValidateConstraints { sc, tolerance, strict } => {
            let scenario = commands::load_scenario(&sc.scenario, &sc.overrides)?;
            let rep = commands::validate_constraints(&scenario, tolerance)?;
            println!("{}", json(&rep));
            if strict && !rep.violations.is_empty() {
                return Err(CliError::Run(format!("{} steps outside their region", rep.violations.len())));
            }
        }
        Command::Keys => print!("{}", scenario_file::schema()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EVADE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // usage errors are configuration errors; help and version exit cleanly
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
