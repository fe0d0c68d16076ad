use std::fs;
use std::path::{Path, PathBuf};

use evade_core::geometry::Point2;
use evade_core::error::MpcError;
use evade_core::mpc::RobustSetup;
use evade_core::simulation::{self, Metrics, SimTrace, SweepAxis};
use evade_core::{Scenario, Variant};
use log::info;
use nalgebra::DVector;
use serde::Serialize;

use crate::artifacts;
use crate::scenario_file::{self, ConfigError};
use crate::CliError;

/// Reads a scenario file, then applies `key=value` overrides in order.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let name = path.display().to_string();
    let base = Scenario {
        name: path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned()),
        ..Scenario::default()
    };
    let mut sc = scenario_file::apply_lines(base, &text, &name)?;
    for (i, ov) in overrides.iter().enumerate() {
        if !ov.contains('=') {
            return Err(ConfigError::Parse {
                source_name: "--set".into(),
                line: i + 1,
                column: 1,
                message: format!("override `{ov}` is not `key=value`"),
            }
            .into());
        }
        sc = scenario_file::apply_lines(sc, ov, "--set").map_err(|e| match e {
            ConfigError::Parse {
                source_name,
                column,
                message,
                ..
            } => ConfigError::Parse {
                source_name,
                line: i + 1,
                column,
                message,
            },
            other => other,
        })?;
    }
    scenario_file::validate(&sc, &name)?;
    Ok(sc)
}

/// An empty trace standing in for a run that failed before its first step.
fn failed_trace(sc: &Scenario, reason: String) -> SimTrace {
    SimTrace {
        scenario: sc.name.clone(),
        variant: sc.variant(),
        t_s: sc.plant.vehicle.t_s,
        rows: Vec::new(),
        metrics: Metrics::default(),
        window: None,
        manoeuvre_complete: false,
        abort: Some(reason),
    }
}

pub struct RunReport {
    pub trace: SimTrace,
    pub files: Vec<PathBuf>,
}

/// Runs the closed loop and writes its artifacts. A collision, abort or early failure is
/// returned as [`CliError::Run`] after the artifacts are on disk.
pub fn run(sc: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    info!("running {} ({})", sc.name, sc.variant().as_str());
    let (trace, err) = match simulation::run(sc) {
        Ok(t) => (t, None),
        Err(e) => {
            let err = CliError::from(e);
            if matches!(err, CliError::Config(_)) {
                return Err(err);
            }
            (failed_trace(sc, err.to_string()), Some(err))
        }
    };
    let mut files = artifacts::emit_artifacts(&trace, out)?;
    let path = out.join("scenario.txt");
    fs::write(&path, scenario_file::emit_scenario(sc)).map_err(|e| CliError::io(&path, e))?;
    files.push(path);
    if let Some(err) = err {
        return Err(err);
    }
    if let Some(reason) = &trace.abort {
        return Err(CliError::Run(format!("aborted: {reason}")));
    }
    if trace.metrics.collision {
        return Err(CliError::Run(format!(
            "collision (min separation {:.3} m)",
            trace.metrics.min_separation.unwrap_or(0.0)
        )));
    }
    Ok(RunReport { trace, files })
}

pub fn parse_list(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| {
                CliError::Config(ConfigError::Invalid {
                    source_name: "command line".into(),
                    message: format!("`{}` is not a number", p.trim()),
                })
            })
        })
        .collect()
}

pub fn parse_variants(raw: &str) -> Result<Vec<Variant>, CliError> {
    if raw.trim() == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    raw.split(',')
        .map(|p| {
            Variant::parse(p.trim()).ok_or_else(|| {
                CliError::Config(ConfigError::Invalid {
                    source_name: "command line".into(),
                    message: format!("unknown variant `{}`", p.trim()),
                })
            })
        })
        .collect()
}

pub struct SweepReport {
    pub rows: Vec<simulation::SweepRow>,
    pub files: Vec<PathBuf>,
    /// Rows that errored, aborted or collided.
    pub failures: Vec<String>,
}

pub fn sweep(sc: &Scenario, axis: &SweepAxis, variants: &[Variant], out: &Path) -> Result<SweepReport, CliError> {
    let rows = simulation::sweep(sc, axis, variants)?;
    let files = artifacts::emit_sweep(axis, &rows, out)?;
    let failures = rows
        .iter()
        .filter_map(|r| {
            let why = r
                .error
                .clone()
                .or_else(|| r.abort.clone())
                .or_else(|| r.metrics.filter(|m| m.collision).map(|_| "collision".to_string()))?;
            Some(format!("{} at {}={}: {why}", r.variant.as_str(), axis.name(), r.axis_value))
        })
        .collect();
    Ok(SweepReport { rows, files, failures })
}

#[derive(Debug, Serialize)]
pub struct TubeReport {
    pub v_ref: f64,
    pub v_range: (f64, f64),
    pub gain: Vec<Vec<f64>>,
    pub spectral_radii: Vec<f64>,
    /// Extent `[lo, hi]` of the disturbance set along each state axis.
    pub w_extent: Vec<[f64; 2]>,
    pub tube_extent: Vec<[f64; 2]>,
    pub tube_s: usize,
    pub tube_alpha: f64,
    pub state_lo: [f64; 4],
    pub state_hi: [f64; 4],
    pub tight_state_lo: [f64; 4],
    pub tight_state_hi: [f64; 4],
    pub input_lo: [f64; 2],
    pub input_hi: [f64; 2],
    pub tight_input_lo: [f64; 2],
    pub tight_input_hi: [f64; 2],
}

/// Ancillary gain, disturbance set, invariant tube and tightened bounds at the scenario speed.
pub fn tighten_sets(sc: &Scenario) -> Result<TubeReport, CliError> {
    let v_ref = sc.v0();
    let setup = RobustSetup::compute(&sc.plant.vehicle, &sc.mpc, v_ref).map_err(|e| match e {
        e @ (MpcError::EmptyTightenedSet(_) | MpcError::GainDesign { .. }) => CliError::RobustSetup(e),
        other => CliError::Run(other.to_string()),
    })?;
    let n = setup.tube.dim();
    let axis = |i: usize, sign: f64| {
        let mut d = DVector::zeros(n);
        d[i] = sign;
        d
    };
    let extent = |f: &dyn Fn(&DVector<f64>) -> f64| -> Vec<[f64; 2]> {
        (0..n).map(|i| [-f(&axis(i, -1.0)), f(&axis(i, 1.0))]).collect()
    };
    Ok(TubeReport {
        v_ref,
        v_range: sc.mpc.robust.speed_range(v_ref),
        gain: setup.k.row_iter().map(|r| r.iter().copied().collect()).collect(),
        spectral_radii: setup.spectral_radii.clone(),
        w_extent: extent(&|d| setup.w.support(d).expect("disturbance set is bounded")),
        tube_extent: extent(&|d| setup.tube.support(d)),
        tube_s: setup.tube.s,
        tube_alpha: setup.tube.alpha,
        state_lo: setup.state_bounds.lo,
        state_hi: setup.state_bounds.hi,
        tight_state_lo: setup.tight_state.lo,
        tight_state_hi: setup.tight_state.hi,
        input_lo: setup.input_bounds.lo,
        input_hi: setup.input_bounds.hi,
        tight_input_lo: setup.tight_input.lo,
        tight_input_hi: setup.tight_input.hi,
    })
}

#[derive(Debug, Serialize)]
pub struct ConstraintReport {
    pub steps: usize,
    pub fcc_steps: usize,
    pub rcc_steps: usize,
    pub slack_steps: usize,
    /// Steps whose CG lies outside its region by more than the tolerance.
    pub violations: Vec<f64>,
    /// Smallest signed distance from the CG to its region (negative outside).
    pub min_margin: f64,
    pub tolerance: f64,
}

/// Runs the closed loop and checks every recorded CG against the region planned at that step.
pub fn validate_constraints(sc: &Scenario, tolerance: f64) -> Result<ConstraintReport, CliError> {
    let trace = simulation::run(sc)?;
    let mut rep = ConstraintReport {
        steps: trace.rows.len(),
        fcc_steps: 0,
        rcc_steps: 0,
        slack_steps: 0,
        violations: Vec::new(),
        min_margin: f64::INFINITY,
        tolerance,
    };
    for r in &trace.rows {
        use evade_core::constraints::Mode;
        match r.region.mode {
            Mode::Fcc => rep.fcc_steps += 1,
            Mode::Rcc => rep.rcc_steps += 1,
            Mode::None => {}
        }
        rep.slack_steps += usize::from(r.slack_used);
        let m = r.region.min_margin(&Point2::new(r.plant.x, r.plant.y));
        rep.min_margin = rep.min_margin.min(m);
        if m < -tolerance {
            rep.violations.push(r.t);
        }
    }
    Ok(rep)
}
