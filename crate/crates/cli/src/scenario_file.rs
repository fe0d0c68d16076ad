//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! Dimensioned quantities carry an explicit unit (`750 m`, `80 km/h`, `0.1 s`,
//! `-0.35 rad`); lists separate elements with commas and each element carries its
//! own unit. Keys that are not set keep the defaults of [`Scenario::default`].
//!
//! ```text
//! variant = robust
//! radius = 500 m
//! speed = 75 km/h
//! mu = 0.4
//! mpc.state_lo = -50 m, -10 m, 0 m/s, -0.35 rad
//! ```

use std::fmt::Write as _;

use evade_core::constraints::AvoidanceSide;
use evade_core::simulation::{LeadSpec, PathSpec, Turn};
use evade_core::{Scenario, Variant};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{source_name}: {message}")]
    Invalid { source_name: String, message: String },
}

/// `(suffix, factor to SI)`, grouped by dimension.
const UNITS: &[(&str, &[(&str, f64)])] = &[
    ("length", &[("m", 1.0), ("km", 1000.0), ("cm", 0.01), ("mm", 0.001)]),
    ("speed", &[("m/s", 1.0), ("km/h", 1.0 / 3.6), ("kmh", 1.0 / 3.6), ("kph", 1.0 / 3.6)]),
    ("time", &[("s", 1.0), ("ms", 0.001)]),
    ("angle", &[("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)]),
    ("acceleration", &[("m/s2", 1.0), ("m/s^2", 1.0)]),
    ("mass", &[("kg", 1.0)]),
    ("inertia", &[("kg*m2", 1.0), ("kg*m^2", 1.0), ("kgm2", 1.0)]),
    ("torque", &[("N*m", 1.0), ("Nm", 1.0)]),
    ("curvature", &[("1/m", 1.0)]),
];

fn dimension_of(unit: &str) -> Option<(&'static str, f64)> {
    UNITS
        .iter()
        .find_map(|(dim, us)| us.iter().find(|(u, _)| *u == unit).map(|(_, f)| (*dim, *f)))
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// One number stored in `unit` (empty for plain numbers); optional positivity.
    Scalar { unit: &'static str, positive: bool },
    /// Fixed-length list, one stored unit per element.
    List(&'static [&'static str]),
    /// `n` diagonal entries or `n²` row-major entries.
    Matrix(usize),
    /// `auto` or two speeds.
    SpeedRange,
    Count { min: u64 },
    Word(&'static [&'static str]),
    /// Breakpoints `s : κ` separated by commas.
    Profile,
    Text,
}

struct Field {
    key: &'static str,
    kind: Kind,
}

const fn scalar(key: &'static str, unit: &'static str, positive: bool) -> Field {
    Field {
        key,
        kind: Kind::Scalar { unit, positive },
    }
}

const STATE_UNITS: &[&str] = &["m", "m", "m/s", "rad"];
const INPUT_UNITS: &[&str] = &["rad", "m/s2"];

/// Emission order; every field of [`Scenario`] is reachable from here.
const FIELDS: &[Field] = &[
    Field { key: "name", kind: Kind::Text },
    Field { key: "variant", kind: Kind::Word(&["nominal", "offset_free", "robust"]) },
    Field { key: "seed", kind: Kind::Count { min: 0 } },
    scalar("duration", "s", true),
    scalar("speed", "km/h", true),
    scalar("mu", "", true),
    Field { key: "tv", kind: Kind::Word(&["on", "off"]) },
    Field { key: "side", kind: Kind::Word(&["left", "right"]) },
    scalar("return_threshold", "m", true),
    scalar("initial_offset_noise", "m", false),
    Field { key: "road", kind: Kind::Word(&["straight", "arc", "profile"]) },
    scalar("road.radius", "m", true),
    Field { key: "road.turn", kind: Kind::Word(&["left", "right"]) },
    Field { key: "road.profile", kind: Kind::Profile },
    scalar("road.length", "m", true),
    Field { key: "lead", kind: Kind::Word(&["none", "ahead"]) },
    scalar("lead.s", "m", true),
    scalar("lead.e_y", "m", false),
    scalar("lead.speed", "km/h", false),
    Field { key: "mpc.horizon", kind: Kind::Count { min: 1 } },
    Field { key: "mpc.q", kind: Kind::Matrix(4) },
    Field { key: "mpc.r", kind: Kind::Matrix(2) },
    Field { key: "mpc.p", kind: Kind::Matrix(4) },
    Field { key: "mpc.error_weights", kind: Kind::List(&["", ""]) },
    Field { key: "mpc.state_lo", kind: Kind::List(STATE_UNITS) },
    Field { key: "mpc.state_hi", kind: Kind::List(STATE_UNITS) },
    Field { key: "mpc.input_lo", kind: Kind::List(INPUT_UNITS) },
    Field { key: "mpc.input_hi", kind: Kind::List(INPUT_UNITS) },
    Field { key: "mpc.e_y_bounds", kind: Kind::List(&["m", "m"]) },
    Field { key: "mpc.e_psi_bounds", kind: Kind::List(&["rad", "rad"]) },
    scalar("mpc.slack_penalty", "", true),
    Field { key: "robust.v_range", kind: Kind::SpeedRange },
    Field { key: "robust.gain_q", kind: Kind::List(&["", "", "", ""]) },
    Field { key: "robust.gain_r", kind: Kind::List(&["", ""]) },
    Field { key: "robust.mismatch_floor", kind: Kind::List(STATE_UNITS) },
    scalar("robust.mrpi_eps", "", true),
    Field { key: "solver.max_iter", kind: Kind::Count { min: 1 } },
    scalar("solver.tol", "", true),
    scalar("solver.kkt_tol", "", true),
    Field { key: "solver.active_set_iter", kind: Kind::Count { min: 0 } },
    scalar("tv.k_p", "", false),
    scalar("tv.k_r", "", false),
    Field { key: "tv.w_e", kind: Kind::List(&["", "", ""]) },
    scalar("tv.w_f", "", false),
    scalar("tv.w_df", "", false),
    scalar("tv.torque_limit", "N*m", true),
    scalar("vehicle.l_f", "m", true),
    scalar("vehicle.l_r", "m", true),
    scalar("vehicle.mass", "kg", true),
    scalar("vehicle.i_z", "kg*m2", true),
    scalar("vehicle.lane_width", "m", true),
    scalar("vehicle.t_s", "s", true),
    scalar("vehicle.wheel_radius_eff", "m", true),
    scalar("vehicle.track_width", "m", true),
    scalar("vehicle.body_width", "m", true),
    scalar("tire.b", "", true),
    scalar("tire.c", "", true),
    scalar("tire.slip_speed_floor", "m/s", true),
    scalar("plant.wheel_inertia", "kg*m2", true),
    scalar("envelope.time_gap", "s", true),
    scalar("envelope.l_c", "m", true),
    scalar("envelope.w", "m", true),
    scalar("edges.left", "m", false),
    scalar("edges.right", "m", false),
    scalar("footprint.front", "m", true),
    scalar("footprint.rear", "m", true),
];

/// Short spellings accepted on input.
const ALIASES: &[(&str, &str)] = &[("radius", "road.radius"), ("length", "road.length")];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<f64>),
    Count(u64),
    Word(String),
    Range(Option<(f64, f64)>),
    Profile(Vec<(f64, f64)>),
}

fn field(key: &str) -> Option<&'static Field> {
    let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, k)| k);
    FIELDS.iter().find(|f| f.key == key)
}

fn diag_or_full(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    if diagonal {
        m.diagonal().iter().copied().collect()
    } else {
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
    }
}

fn get(sc: &Scenario, key: &str) -> Option<Value> {
    use Value::*;
    let m = &sc.mpc;
    let v = &sc.plant.vehicle;
    Some(match key {
        "name" => Word(sc.name.clone()),
        "variant" => Word(m.variant.as_str().into()),
        "seed" => Count(sc.seed),
        "duration" => Num(sc.duration),
        "speed" => Num(sc.speed_kmh),
        "mu" => Num(sc.mu),
        "tv" => Word(if sc.tv_enabled { "on" } else { "off" }.into()),
        "side" => Word(match sc.side {
            AvoidanceSide::Left => "left".into(),
            AvoidanceSide::Right => "right".into(),
        }),
        "return_threshold" => Num(sc.return_threshold),
        "initial_offset_noise" => Num(sc.initial_offset_noise),
        "road" => Word(match sc.path {
            PathSpec::Straight => "straight".into(),
            PathSpec::Arc { .. } => "arc".into(),
            PathSpec::Profile(_) => "profile".into(),
        }),
        "road.radius" => match sc.path {
            PathSpec::Arc { radius, .. } => Num(radius),
            _ => return None,
        },
        "road.turn" => match sc.path {
            PathSpec::Arc { turn, .. } => Word(turn.as_str().into()),
            _ => return None,
        },
        "road.profile" => match &sc.path {
            PathSpec::Profile(bp) => Profile(bp.clone()),
            _ => return None,
        },
        "road.length" => Num(sc.road_length),
        "lead" => Word(if sc.lead.is_some() { "ahead" } else { "none" }.into()),
        "lead.s" => Num(sc.lead?.s),
        "lead.e_y" => Num(sc.lead?.e_y),
        "lead.speed" => Num(sc.lead?.speed_kmh),
        "mpc.horizon" => Count(m.horizon as u64),
        "mpc.q" => List(diag_or_full(&m.q)),
        "mpc.r" => List(diag_or_full(&m.r)),
        "mpc.p" => List(diag_or_full(&m.p)),
        "mpc.error_weights" => List(m.error_weights.to_vec()),
        "mpc.state_lo" => List(m.state_bounds.lo.to_vec()),
        "mpc.state_hi" => List(m.state_bounds.hi.to_vec()),
        "mpc.input_lo" => List(m.input_bounds.lo.to_vec()),
        "mpc.input_hi" => List(m.input_bounds.hi.to_vec()),
        "mpc.e_y_bounds" => List(vec![m.error_bounds[0].0, m.error_bounds[0].1]),
        "mpc.e_psi_bounds" => List(vec![m.error_bounds[1].0, m.error_bounds[1].1]),
        "mpc.slack_penalty" => Num(m.slack_penalty),
        "robust.v_range" => Range(m.robust.v_range),
        "robust.gain_q" => List(m.robust.gain_q.to_vec()),
        "robust.gain_r" => List(m.robust.gain_r.to_vec()),
        "robust.mismatch_floor" => List(m.robust.mismatch_floor.to_vec()),
        "robust.mrpi_eps" => Num(m.robust.mrpi_eps),
        "solver.max_iter" => Count(m.solver.max_iter as u64),
        "solver.tol" => Num(m.solver.tol),
        "solver.kkt_tol" => Num(m.solver.kkt_tol),
        "solver.active_set_iter" => Count(m.solver.active_set_iter as u64),
        "tv.k_p" => Num(sc.tv.k_p),
        "tv.k_r" => Num(sc.tv.k_r),
        "tv.w_e" => List(sc.tv.weights.w_e.to_vec()),
        "tv.w_f" => Num(sc.tv.weights.w_f),
        "tv.w_df" => Num(sc.tv.weights.w_df),
        "tv.torque_limit" => Num(sc.tv.torque_limit),
        "vehicle.l_f" => Num(v.l_f),
        "vehicle.l_r" => Num(v.l_r),
        "vehicle.mass" => Num(v.mass),
        "vehicle.i_z" => Num(v.i_z),
        "vehicle.lane_width" => Num(v.lane_width),
        "vehicle.t_s" => Num(v.t_s),
        "vehicle.wheel_radius_eff" => Num(v.wheel_radius_eff),
        "vehicle.track_width" => Num(v.track_width),
        "vehicle.body_width" => Num(v.body_width),
        "tire.b" => Num(sc.plant.tire.b),
        "tire.c" => Num(sc.plant.tire.c),
        "tire.slip_speed_floor" => Num(sc.plant.tire.slip_speed_floor),
        "plant.wheel_inertia" => Num(sc.plant.wheel_inertia),
        "envelope.time_gap" => Num(sc.envelope.time_gap),
        "envelope.l_c" => Num(sc.envelope.l_c),
        "envelope.w" => Num(sc.envelope.w),
        "edges.left" => Num(sc.edges.left),
        "edges.right" => Num(sc.edges.right),
        "footprint.front" => Num(sc.footprint.front),
        "footprint.rear" => Num(sc.footprint.rear),
        _ => unreachable!("field table and accessors disagree on {key}"),
    })
}

fn matrix(n: usize, vals: &[f64]) -> DMatrix<f64> {
    if vals.len() == n {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(vals))
    } else {
        DMatrix::from_row_slice(n, n, vals)
    }
}

fn arr<const N: usize>(v: &[f64]) -> [f64; N] {
    v.try_into().expect("length checked by the parser")
}

/// Applies a parsed value; `Err` carries a message for assignments that conflict with the
/// current road or lead configuration.
fn set(sc: &mut Scenario, key: &str, val: Value) -> Result<(), String> {
    use Value::*;
    let m = &mut sc.mpc;
    let v = &mut sc.plant.vehicle;
    match (key, val) {
        ("name", Word(s)) => sc.name = s,
        ("variant", Word(s)) => m.variant = Variant::parse(&s).expect("word checked"),
        ("seed", Count(n)) => sc.seed = n,
        ("duration", Num(x)) => sc.duration = x,
        ("speed", Num(x)) => sc.speed_kmh = x,
        ("mu", Num(x)) => sc.mu = x,
        ("tv", Word(s)) => sc.tv_enabled = s == "on",
        ("side", Word(s)) => {
            sc.side = if s == "left" {
                AvoidanceSide::Left
            } else {
                AvoidanceSide::Right
            }
        }
        ("return_threshold", Num(x)) => sc.return_threshold = x,
        ("initial_offset_noise", Num(x)) => sc.initial_offset_noise = x,
        ("road", Word(s)) => {
            sc.path = match (s.as_str(), &sc.path) {
                ("straight", _) => PathSpec::Straight,
                ("arc", p @ PathSpec::Arc { .. }) => p.clone(),
                ("arc", _) => PathSpec::Arc {
                    radius: 750.0,
                    turn: Turn::Right,
                },
                (_, p @ PathSpec::Profile(_)) => p.clone(),
                _ => PathSpec::Profile(vec![(0.0, 0.0)]),
            }
        }
        ("road.radius", Num(x)) => {
            let turn = match sc.path {
                PathSpec::Arc { turn, .. } => turn,
                _ => Turn::Right,
            };
            sc.path = PathSpec::Arc { radius: x, turn };
        }
        ("road.turn", Word(s)) => match &mut sc.path {
            PathSpec::Arc { turn, .. } => *turn = if s == "left" { Turn::Left } else { Turn::Right },
            _ => return Err("road.turn only applies to arc roads".into()),
        },
        ("road.profile", Profile(bp)) => sc.path = PathSpec::Profile(bp),
        ("road.length", Num(x)) => sc.road_length = x,
        ("lead", Word(s)) => {
            sc.lead = match s.as_str() {
                "none" => None,
                _ => Some(sc.lead.unwrap_or_default()),
            }
        }
        (k @ ("lead.s" | "lead.e_y" | "lead.speed"), Num(x)) => {
            let lead = sc.lead.get_or_insert_with(LeadSpec::default);
            match k {
                "lead.s" => lead.s = x,
                "lead.e_y" => lead.e_y = x,
                _ => lead.speed_kmh = x,
            }
        }
        ("mpc.horizon", Count(n)) => m.horizon = n as usize,
        ("mpc.q", List(x)) => m.q = matrix(4, &x),
        ("mpc.r", List(x)) => m.r = matrix(2, &x),
        ("mpc.p", List(x)) => m.p = matrix(4, &x),
        ("mpc.error_weights", List(x)) => m.error_weights = arr(&x),
        ("mpc.state_lo", List(x)) => m.state_bounds.lo = arr(&x),
        ("mpc.state_hi", List(x)) => m.state_bounds.hi = arr(&x),
        ("mpc.input_lo", List(x)) => m.input_bounds.lo = arr(&x),
        ("mpc.input_hi", List(x)) => m.input_bounds.hi = arr(&x),
        ("mpc.e_y_bounds", List(x)) => m.error_bounds[0] = (x[0], x[1]),
        ("mpc.e_psi_bounds", List(x)) => m.error_bounds[1] = (x[0], x[1]),
        ("mpc.slack_penalty", Num(x)) => m.slack_penalty = x,
        ("robust.v_range", Range(r)) => m.robust.v_range = r,
        ("robust.gain_q", List(x)) => m.robust.gain_q = arr(&x),
        ("robust.gain_r", List(x)) => m.robust.gain_r = arr(&x),
        ("robust.mismatch_floor", List(x)) => m.robust.mismatch_floor = arr(&x),
        ("robust.mrpi_eps", Num(x)) => m.robust.mrpi_eps = x,
        ("solver.max_iter", Count(n)) => m.solver.max_iter = n as usize,
        ("solver.tol", Num(x)) => m.solver.tol = x,
        ("solver.kkt_tol", Num(x)) => m.solver.kkt_tol = x,
        ("solver.active_set_iter", Count(n)) => m.solver.active_set_iter = n as usize,
        ("tv.k_p", Num(x)) => sc.tv.k_p = x,
        ("tv.k_r", Num(x)) => sc.tv.k_r = x,
        ("tv.w_e", List(x)) => sc.tv.weights.w_e = arr(&x),
        ("tv.w_f", Num(x)) => sc.tv.weights.w_f = x,
        ("tv.w_df", Num(x)) => sc.tv.weights.w_df = x,
        ("tv.torque_limit", Num(x)) => sc.tv.torque_limit = x,
        ("vehicle.l_f", Num(x)) => v.l_f = x,
        ("vehicle.l_r", Num(x)) => v.l_r = x,
        ("vehicle.mass", Num(x)) => v.mass = x,
        ("vehicle.i_z", Num(x)) => v.i_z = x,
        ("vehicle.lane_width", Num(x)) => v.lane_width = x,
        ("vehicle.t_s", Num(x)) => v.t_s = x,
        ("vehicle.wheel_radius_eff", Num(x)) => v.wheel_radius_eff = x,
        ("vehicle.track_width", Num(x)) => v.track_width = x,
        ("vehicle.body_width", Num(x)) => v.body_width = x,
        ("tire.b", Num(x)) => sc.plant.tire.b = x,
        ("tire.c", Num(x)) => sc.plant.tire.c = x,
        ("tire.slip_speed_floor", Num(x)) => sc.plant.tire.slip_speed_floor = x,
        ("plant.wheel_inertia", Num(x)) => sc.plant.wheel_inertia = x,
        ("envelope.time_gap", Num(x)) => sc.envelope.time_gap = x,
        ("envelope.l_c", Num(x)) => sc.envelope.l_c = x,
        ("envelope.w", Num(x)) => sc.envelope.w = x,
        ("edges.left", Num(x)) => sc.edges.left = x,
        ("edges.right", Num(x)) => sc.edges.right = x,
        ("footprint.front", Num(x)) => sc.footprint.front = x,
        ("footprint.rear", Num(x)) => sc.footprint.rear = x,
        (k, val) => unreachable!("no setter for {k} = {val:?}"),
    }
    Ok(())
}

/// Error at a column of the current line, 0-based offset into the line.
struct At<'a> {
    line: usize,
    text: &'a str,
}

impl At<'_> {
    fn col(&self, part: &str) -> usize {
        // `part` is always a subslice of the line
        part.as_ptr() as usize - self.text.as_ptr() as usize + 1
    }
}

type PResult<T> = Result<T, (usize, String)>;

/// Splits `"750m"` / `"-0.35 rad"` into a finite number and a unit suffix.
fn number_with_unit(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    (1..=s.len()).rev().filter(|&i| s.is_char_boundary(i)).find_map(|i| {
        let num = &s[..i];
        // `inf`/`nan` parse as floats but are never valid here
        if num.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
            return None;
        }
        num.parse::<f64>().ok().filter(|x| x.is_finite()).map(|x| (x, s[i..].trim()))
    })
}

/// Converts `raw` (with unit) into `stored` units.
fn quantity(at: &At, raw: &str, stored: &str) -> PResult<f64> {
    let col = at.col(raw.trim_start());
    let (x, unit) = number_with_unit(raw).ok_or_else(|| (col, format!("expected a number, found `{}`", raw.trim())))?;
    if stored.is_empty() {
        return if unit.is_empty() {
            Ok(x)
        } else {
            Err((col, format!("`{unit}` given for a plain number")))
        };
    }
    let (want_dim, f_stored) = dimension_of(stored).expect("stored units are in the table");
    if unit.is_empty() {
        return Err((col, format!("missing unit: expected a {want_dim} such as `{}`", stored)));
    }
    let (dim, f) = dimension_of(unit).ok_or_else(|| (col, format!("unknown unit `{unit}`")))?;
    if dim != want_dim {
        return Err((col, format!("unit mismatch: `{unit}` is a {dim}, expected a {want_dim}")));
    }
    Ok(if f == f_stored { x } else { x * f / f_stored })
}

fn items(raw: &str) -> Vec<&str> {
    raw.split(',').collect()
}

fn parse_value(at: &At, f: &Field, raw: &str) -> PResult<Value> {
    let col = at.col(raw.trim_start());
    match f.kind {
        Kind::Scalar { unit, positive } => {
            let x = quantity(at, raw, unit)?;
            if positive && !(x > 0.0) {
                return Err((col, format!("{} must be positive, got {x}", f.key)));
            }
            Ok(Value::Num(x))
        }
        Kind::List(units) => {
            let parts = items(raw);
            if parts.len() != units.len() {
                return Err((col, format!("{} takes {} values, found {}", f.key, units.len(), parts.len())));
            }
            parts.iter().zip(units).map(|(p, u)| quantity(at, p, u)).collect::<PResult<_>>().map(Value::List)
        }
        Kind::Matrix(n) => {
            let parts = items(raw);
            if parts.len() != n && parts.len() != n * n {
                return Err((col, format!("{} takes {n} diagonal or {} full entries, found {}", f.key, n * n, parts.len())));
            }
            parts.iter().map(|p| quantity(at, p, "")).collect::<PResult<_>>().map(Value::List)
        }
        Kind::SpeedRange => {
            if raw.trim() == "auto" {
                return Ok(Value::Range(None));
            }
            let parts = items(raw);
            if parts.len() != 2 {
                return Err((col, format!("{} takes `auto` or two speeds", f.key)));
            }
            let lo = quantity(at, parts[0], "m/s")?;
            let hi = quantity(at, parts[1], "m/s")?;
            if !(lo > 0.0 && hi >= lo) {
                return Err((col, format!("{} needs 0 < low <= high", f.key)));
            }
            Ok(Value::Range(Some((lo, hi))))
        }
        Kind::Count { min } => {
            let n: u64 = raw.trim().parse().map_err(|_| (col, format!("expected a whole number, found `{}`", raw.trim())))?;
            if n < min {
                return Err((col, format!("{} must be at least {min}", f.key)));
            }
            Ok(Value::Count(n))
        }
        Kind::Word(words) => {
            let w = raw.trim().to_ascii_lowercase();
            let w = if f.key == "variant" {
                Variant::parse(&w).map(|v| v.as_str().to_string()).unwrap_or(w)
            } else {
                w
            };
            if !words.contains(&w.as_str()) {
                return Err((col, format!("{} must be one of {}", f.key, words.join(", "))));
            }
            Ok(Value::Word(w))
        }
        Kind::Profile => {
            let mut bp = Vec::new();
            for item in items(raw) {
                let (s, k) = item
                    .split_once(':')
                    .ok_or_else(|| (at.col(item), "profile entries are `s : curvature`".to_string()))?;
                bp.push((quantity(at, s, "m")?, quantity(at, k, "1/m")?));
            }
            Ok(Value::Profile(bp))
        }
        Kind::Text => {
            let t = raw.trim();
            if t.is_empty() {
                return Err((col, format!("{} must not be empty", f.key)));
            }
            Ok(Value::Word(t.to_string()))
        }
    }
}

/// Applies `key = value` lines on top of `base`.
pub fn apply_lines(base: Scenario, text: &str, source_name: &str) -> Result<Scenario, ConfigError> {
    let mut sc = base;
    let err = |line: usize, column: usize, message: String| ConfigError::Parse {
        source_name: source_name.to_string(),
        line,
        column,
        message,
    };
    for (i, full) in text.lines().enumerate() {
        let line = i + 1;
        let content = full.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let at = At { line, text: full };
        let Some((key_raw, raw)) = content.split_once('=') else {
            return Err(err(line, at.col(content.trim_start()), "expected `key = value`".into()));
        };
        let key = key_raw.trim();
        let key_col = at.col(key_raw.trim_start());
        let f = field(key).ok_or_else(|| err(line, key_col, format!("unknown key `{key}`")))?;
        if raw.trim().is_empty() {
            return Err(err(line, at.col(raw) + raw.len(), format!("{key} has no value")));
        }
        let val = parse_value(&at, f, raw).map_err(|(c, m)| err(at.line, c, m))?;
        set(&mut sc, f.key, val).map_err(|m| err(line, key_col, m))?;
    }
    Ok(sc)
}

/// Parses a scenario file and validates the result.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<Scenario, ConfigError> {
    let sc = apply_lines(Scenario::default(), text, source_name)?;
    validate(&sc, source_name)?;
    Ok(sc)
}

pub fn validate(sc: &Scenario, source_name: &str) -> Result<(), ConfigError> {
    sc.validate().map_err(|e| ConfigError::Invalid {
        source_name: source_name.to_string(),
        message: e.to_string(),
    })
}

fn fmt_q(x: f64, unit: &str) -> String {
    if unit.is_empty() {
        format!("{x}")
    } else {
        format!("{x} {unit}")
    }
}

/// Every field, one per line, in a form [`parse_scenario`] reads back exactly.
pub fn emit_scenario(sc: &Scenario) -> String {
    let mut out = String::from("# evade scenario\n");
    for f in FIELDS {
        let Some(v) = get(sc, f.key) else { continue };
        let text = match (f.kind, v) {
            (Kind::Scalar { unit, .. }, Value::Num(x)) => fmt_q(x, unit),
            (Kind::List(units), Value::List(xs)) => {
                xs.iter().zip(units).map(|(x, u)| fmt_q(*x, u)).collect::<Vec<_>>().join(", ")
            }
            (Kind::Matrix(_), Value::List(xs)) => xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", "),
            (Kind::SpeedRange, Value::Range(None)) => "auto".into(),
            (Kind::SpeedRange, Value::Range(Some((lo, hi)))) => format!("{lo} m/s, {hi} m/s"),
            (Kind::Count { .. }, Value::Count(n)) => n.to_string(),
            (Kind::Word(_) | Kind::Text, Value::Word(w)) => w,
            (Kind::Profile, Value::Profile(bp)) => bp
                .iter()
                .map(|(s, k)| format!("{s} m : {k} 1/m"))
                .collect::<Vec<_>>()
                .join(", "),
            (_, v) => unreachable!("{} has kind {:?} but value {v:?}", f.key, f.kind),
        };
        let _ = writeln!(out, "{} = {text}", f.key);
    }
    out
}

/// Keys with their stored unit, for `--help`-style listings.
pub fn schema() -> String {
    let mut out = String::new();
    for f in FIELDS {
        let desc = match f.kind {
            Kind::Scalar { unit, .. } if unit.is_empty() => "number".to_string(),
            Kind::Scalar { unit, .. } => format!("number [{unit}]"),
            Kind::List(units) => format!(
                "list [{}]",
                units.iter().map(|u| if u.is_empty() { "-" } else { u }).collect::<Vec<_>>().join(", ")
            ),
            Kind::Matrix(n) => format!("{n} diagonal or {} row-major entries", n * n),
            Kind::SpeedRange => "`auto` or two speeds".into(),
            Kind::Count { min } => format!("whole number >= {min}"),
            Kind::Word(w) => w.join(" | "),
            Kind::Profile => "`s : curvature` pairs [m : 1/m]".into(),
            Kind::Text => "text".into(),
        };
        let _ = writeln!(out, "{:<26} {desc}", f.key);
    }
    out
}
