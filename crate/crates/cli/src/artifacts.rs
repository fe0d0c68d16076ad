//! Run artifacts. Every file is a pure function of the trace, so re-emitting the
//! same trace reproduces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use evade_core::geometry::Sense;
use evade_core::simulation::{SimTrace, SweepAxis, SweepRow};
use evade_core::Metrics;
use serde::Serialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// `(name, unit)` of every trace column, in order.
pub const TRACE_COLUMNS: &[(&str, &str)] = &[
    ("t", "s"),
    ("x", "m"),
    ("y", "m"),
    ("psi", "rad"),
    ("v_x", "m/s"),
    ("v_y", "m/s"),
    ("r", "rad/s"),
    ("omega_fl", "rad/s"),
    ("omega_fr", "rad/s"),
    ("omega_rl", "rad/s"),
    ("omega_rr", "rad/s"),
    ("s", "m"),
    ("e_y", "m"),
    ("e_psi", "rad"),
    ("kappa", "1/m"),
    ("mode", "-"),
    ("delta_f", "rad"),
    ("a_x", "m/s2"),
    ("v_star", "m/s"),
    ("qp_status", "-"),
    ("qp_iterations", "-"),
    ("kkt_residual", "-"),
    ("objective", "-"),
    ("slack_used", "-"),
    ("tube_reset", "-"),
    ("torque_fl", "N*m"),
    ("torque_fr", "N*m"),
    ("torque_rl", "N*m"),
    ("torque_rr", "N*m"),
    ("torque_ff_total", "N*m"),
    ("yaw_moment", "N*m"),
    ("fx_target", "N"),
    ("fy_target", "N"),
    ("mz_target", "N*m"),
    ("fx_measured", "N"),
    ("fy_measured", "N"),
    ("mz_measured", "N*m"),
    ("allocation_residual", "-"),
    ("lead_x", "m"),
    ("lead_y", "m"),
    ("lead_psi", "rad"),
    ("separation", "m"),
];

/// Halfspace rows `a*x + b*y + c <= 0` (or `>= 0`) with `(a, b)` of unit length.
pub const REGION_COLUMNS: &[(&str, &str)] = &[
    ("t", "s"),
    ("mode", "-"),
    ("kind", "-"),
    ("a", "-"),
    ("b", "-"),
    ("c", "m"),
    ("sense", "-"),
];

fn header(kind: &str, cols: &[(&str, &str)]) -> String {
    let names: Vec<String> = cols.iter().map(|(n, u)| format!("{n}[{u}]")).collect();
    format!("# evade {kind} schema {SCHEMA_VERSION}\n{}\n", names.join(","))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn trace_csv(trace: &SimTrace) -> String {
    let mut out = header("trace", TRACE_COLUMNS);
    for r in &trace.rows {
        let p = &r.plant;
        let lead = r.lead;
        let cells: Vec<String> = vec![
            r.t.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.psi.to_string(),
            p.v_x.to_string(),
            p.v_y.to_string(),
            p.r.to_string(),
            p.omega[0].to_string(),
            p.omega[1].to_string(),
            p.omega[2].to_string(),
            p.omega[3].to_string(),
            r.s.to_string(),
            r.e_y.to_string(),
            r.e_psi.to_string(),
            r.kappa.to_string(),
            r.mode.as_str().to_string(),
            r.input.delta_f.to_string(),
            r.input.a_x.to_string(),
            r.v_star.to_string(),
            r.status.as_str().to_string(),
            r.iterations.to_string(),
            r.kkt_residual.to_string(),
            r.objective.to_string(),
            u8::from(r.slack_used).to_string(),
            u8::from(r.tube_reset).to_string(),
            r.torque.t[0].to_string(),
            r.torque.t[1].to_string(),
            r.torque.t[2].to_string(),
            r.torque.t[3].to_string(),
            r.torque.t_ff_total.to_string(),
            r.yaw_moment.to_string(),
            r.force_target[0].to_string(),
            r.force_target[1].to_string(),
            r.force_target[2].to_string(),
            r.force_measured[0].to_string(),
            r.force_measured[1].to_string(),
            r.force_measured[2].to_string(),
            r.allocation_residual.to_string(),
            opt(lead.map(|l| l.0)),
            opt(lead.map(|l| l.1)),
            opt(lead.map(|l| l.2)),
            opt(r.separation),
        ];
        debug_assert_eq!(cells.len(), TRACE_COLUMNS.len());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn region_csv(trace: &SimTrace) -> String {
    let mut out = header("region", REGION_COLUMNS);
    for r in &trace.rows {
        let reg = &r.region;
        let rows = [("upper", Some(reg.upper)), ("lower", Some(reg.lower)), ("collision", reg.collision)];
        for (kind, h) in rows {
            let Some(h) = h else { continue };
            let h = h.normalized();
            let sense = match h.sense {
                Sense::Le => "le",
                Sense::Ge => "ge",
            };
            let _ = writeln!(out, "{},{},{kind},{},{},{},{sense}", r.t, reg.mode.as_str(), h.a, h.b, h.c);
        }
    }
    out
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    schema_version: u32,
    scenario: &'a str,
    variant: &'a str,
    t_s: f64,
    steps: usize,
    window: Option<(f64, f64)>,
    manoeuvre_complete: bool,
    abort: Option<&'a str>,
    max_kkt_residual: f64,
    metrics: &'a Metrics,
}

pub fn metrics_json(trace: &SimTrace) -> String {
    let file = MetricsFile {
        schema_version: SCHEMA_VERSION,
        scenario: &trace.scenario,
        variant: trace.variant.as_str(),
        t_s: trace.t_s,
        steps: trace.rows.len(),
        window: trace.window,
        manoeuvre_complete: trace.manoeuvre_complete,
        abort: trace.abort.as_deref(),
        max_kkt_residual: trace.max_kkt_residual(),
        metrics: &trace.metrics,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("metrics serialise");
    s.push('\n');
    s
}

/// Matplotlib script that draws the trajectory, speed/heading and yaw-moment figures
/// from the CSVs next to it.
pub const PLOT_SCRIPT: &str = include_str!("plot.py");

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes trace.csv, region.csv, metrics.json and plot.py into `dir`.
pub fn emit_artifacts(trace: &SimTrace, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(vec![
        write(dir.join("trace.csv"), &trace_csv(trace))?,
        write(dir.join("region.csv"), &region_csv(trace))?,
        write(dir.join("metrics.json"), &metrics_json(trace))?,
        write(dir.join("plot.py"), PLOT_SCRIPT)?,
    ])
}

#[derive(Serialize)]
struct SweepFile<'a> {
    schema_version: u32,
    axis: &'a str,
    rows: &'a [SweepRow],
}

/// Writes table.csv (metrics × variants by axis value) and rows.json.
pub fn emit_sweep(axis: &SweepAxis, rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let table = format!(
        "# evade sweep schema {SCHEMA_VERSION}; IACA_delta[rad] IACA_ax[m/s2] IACA_Mz[N*m] max_e_y[m] max_e_psi[rad] min_separation[m]\n{}",
        evade_core::simulation::sweep_table_csv(axis, rows)
    );
    let out = SweepFile {
        schema_version: SCHEMA_VERSION,
        axis: axis.name(),
        rows,
    };
    let mut json = serde_json::to_string_pretty(&out).expect("sweep rows serialise");
    json.push('\n');
    Ok(vec![write(dir.join("table.csv"), &table)?, write(dir.join("rows.json"), &json)?])
}
