use evade_cli::scenario_file::{apply_lines, emit_scenario, parse_scenario, ConfigError};
use evade_core::constraints::AvoidanceSide;
use evade_core::simulation::{LeadSpec, PathSpec, Turn};
use evade_core::{Scenario, Variant};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn parse_err(text: &str) -> (usize, usize, String) {
    match parse_scenario(text, "test.scn") {
        Err(ConfigError::Parse {
            line, column, message, ..
        }) => (line, column, message),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn minimal_file_fills_defaults() {
    let sc = parse_scenario("radius=750m\nspeed=80kmh\nvariant=nominal\n", "min.scn").unwrap();
    let expected = Scenario {
        path: PathSpec::Arc {
            radius: 750.0,
            turn: Turn::Right,
        },
        speed_kmh: 80.0,
        ..Scenario::default()
    };
    assert_eq!(sc, expected);
}

#[test]
fn negative_speed_is_a_range_error() {
    let (line, col, msg) = parse_err("# header\nspeed=-5kmh\n");
    assert_eq!((line, col), (2, 7));
    assert!(msg.contains("positive"), "{msg}");
}

#[test]
fn unit_errors_point_at_the_value() {
    let (line, col, msg) = parse_err("radius = 750 s");
    assert_eq!((line, col), (1, 10));
    assert!(msg.contains("unit mismatch"), "{msg}");

    let (_, _, msg) = parse_err("radius = 750");
    assert!(msg.contains("missing unit"), "{msg}");

    let (_, _, msg) = parse_err("mu = 0.5 m");
    assert!(msg.contains("plain number"), "{msg}");

    let (_, _, msg) = parse_err("radius = 750 furlong");
    assert!(msg.contains("unknown unit"), "{msg}");
}

#[test]
fn unknown_keys_and_bad_syntax_are_rejected() {
    let (line, col, msg) = parse_err("speed = 80 km/h\n   radius_m = 750 m\n");
    assert_eq!((line, col), (2, 4));
    assert!(msg.contains("unknown key `radius_m`"), "{msg}");

    let (line, _, msg) = parse_err("\n\nspeed 80 km/h");
    assert_eq!(line, 3);
    assert!(msg.contains("key = value"), "{msg}");

    assert!(parse_err("speed = inf km/h").2.contains("expected a number"));
    assert!(parse_err("speed = NaN km/h").2.contains("expected a number"));
    assert!(parse_err("mpc.state_lo = 1 m, 2 m").2.contains("takes 4 values"));
    assert!(parse_err("mpc.q = 1, 2, 3").2.contains("4 diagonal or 16"));
    assert!(parse_err("variant = fancy").2.contains("one of"));
    assert!(parse_err("mpc.horizon = 0").2.contains("at least 1"));
    assert!(parse_err("speed =").2.contains("no value"));
}

#[test]
fn road_turn_needs_an_arc() {
    let (line, col, msg) = parse_err("road = straight\nroad.turn = left\n");
    assert_eq!((line, col), (2, 1));
    assert!(msg.contains("arc"), "{msg}");
}

#[test]
fn whole_scenario_validation_still_applies() {
    // every key is locally fine, but the lead sits beyond the road end
    match parse_scenario("road.length = 100 m\nlead.s = 150 m\n", "x.scn") {
        Err(ConfigError::Invalid { message, .. }) => assert!(message.contains("lead"), "{message}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn units_convert_to_stored_units() {
    let sc = parse_scenario(
        "radius = 0.75 km\nspeed = 20 m/s\nvehicle.t_s = 100 ms\nmpc.e_psi_bounds = -9 deg, 9 deg\nlead.speed = 5 m/s\n",
        "u.scn",
    )
    .unwrap();
    assert_eq!(sc.path, PathSpec::Arc { radius: 750.0, turn: Turn::Right });
    assert!((sc.speed_kmh - 72.0).abs() < 1e-12);
    assert!((sc.plant.vehicle.t_s - 0.1).abs() < 1e-15);
    assert!((sc.mpc.error_bounds[1].1 - 9f64.to_radians()).abs() < 1e-15);
    assert!((sc.lead.unwrap().speed_kmh - 18.0).abs() < 1e-12);
    // same unit as stored: no arithmetic on the value
    let sc = parse_scenario("speed = 0.1 kmh", "u.scn").unwrap();
    assert_eq!(sc.speed_kmh, 0.1);
}

#[test]
fn comments_aliases_and_variant_spellings() {
    let sc = parse_scenario(
        "# wet curve\n\nvariant = Offset-Free   # planner\nradius = 500 m\nmu = 0.4\nlead = none\n",
        "w.scn",
    )
    .unwrap();
    assert_eq!(sc.variant(), Variant::OffsetFree);
    assert_eq!(sc.lead, None);
    assert_eq!(sc.mu, 0.4);
}

/// Subject parameters of the reference vehicle and the lane width.
#[test]
fn table_one_file_reproduces_reference_parameters() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/table1_curve.scn")).unwrap();
    let sc = parse_scenario(&text, "table1_curve.scn").unwrap();
    let v = sc.plant.vehicle;
    assert_eq!(v.l_f, 1.43);
    assert_eq!(v.l_r, 1.21);
    assert_eq!(v.mass, 1360.0);
    assert_eq!(v.i_z, 2050.0);
    assert_eq!(v.lane_width, 5.0);
    assert_eq!(v.t_s, 0.1);
    assert_eq!(sc.path, PathSpec::Arc { radius: 750.0, turn: Turn::Right });
    assert_eq!(sc.speed_kmh, 80.0);
    assert_eq!(sc.mu, 1.0);
    assert_eq!(sc.lead, Some(LeadSpec { s: 50.0, e_y: 0.0, speed_kmh: 0.0 }));
}

#[test]
fn emitted_default_parses_to_default() {
    let sc = Scenario::default();
    assert_eq!(parse_scenario(&emit_scenario(&sc), "e.scn").unwrap(), sc);
}

fn pos() -> impl Strategy<Value = f64> + Clone {
    prop_oneof![1e-3f64..1e4, Just(1.0), (1u32..1000).prop_map(|k| k as f64 * 0.1)]
}

fn signed() -> impl Strategy<Value = f64> + Clone {
    prop_oneof![-1e4f64..1e4, Just(0.0), Just(-0.35)]
}

fn arr<const N: usize>(s: impl Strategy<Value = f64> + Clone) -> impl Strategy<Value = [f64; N]> {
    proptest::collection::vec(s, N).prop_map(|v| v.try_into().unwrap())
}

fn mat(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop_oneof![
        proptest::collection::vec(pos(), n).prop_map(move |d| DMatrix::from_diagonal(&d.into())),
        proptest::collection::vec(signed(), n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v)),
    ]
}

fn path() -> impl Strategy<Value = PathSpec> {
    prop_oneof![
        Just(PathSpec::Straight),
        (pos(), any::<bool>()).prop_map(|(radius, l)| PathSpec::Arc {
            radius,
            turn: if l { Turn::Left } else { Turn::Right },
        }),
        proptest::collection::vec((pos(), -0.01f64..0.01), 1..5).prop_map(PathSpec::Profile),
    ]
}

prop_compose! {
    fn mpc_part()(
        variant in prop_oneof![Just(Variant::Nominal), Just(Variant::OffsetFree), Just(Variant::Robust)],
        horizon in 1usize..40,
        q in mat(4), r in mat(2), p in mat(4),
        ew in arr::<2>(pos()),
        slo in arr::<4>(signed()), shi in arr::<4>(signed()),
        ilo in arr::<2>(signed()), ihi in arr::<2>(signed()),
        eb in arr::<4>(signed()),
        slack in pos(),
        v_range in proptest::option::of((pos(), pos()).prop_map(|(a, b)| (a, a + b))),
        gq in arr::<4>(pos()), gr in arr::<2>(pos()), floor in arr::<4>(pos()), eps in pos(),
        solver in (1usize..10_000, pos(), pos(), 0usize..50),
    ) -> evade_core::MpcConfig {
        let mut m = evade_core::MpcConfig::default();
        m.variant = variant;
        m.horizon = horizon;
        m.q = q;
        m.r = r;
        m.p = p;
        m.error_weights = ew;
        m.state_bounds.lo = slo;
        m.state_bounds.hi = shi;
        m.input_bounds.lo = ilo;
        m.input_bounds.hi = ihi;
        m.error_bounds = [(eb[0], eb[1]), (eb[2], eb[3])];
        m.slack_penalty = slack;
        m.robust.v_range = v_range;
        m.robust.gain_q = gq;
        m.robust.gain_r = gr;
        m.robust.mismatch_floor = floor;
        m.robust.mrpi_eps = eps;
        m.solver.max_iter = solver.0;
        m.solver.tol = solver.1;
        m.solver.kkt_tol = solver.2;
        m.solver.active_set_iter = solver.3;
        m
    }
}

prop_compose! {
    fn scenario()(
        name in "[A-Za-z0-9_.=-]{1,24}",
        path in path(),
        lead in proptest::option::of((pos(), signed(), pos())),
        mpc in mpc_part(),
        head in arr::<6>(pos()),
        tv in (any::<bool>(), signed(), signed(), arr::<3>(pos()), signed(), signed(), pos()),
        vehicle in arr::<9>(pos()),
        tire in arr::<3>(pos()),
        wheel_inertia in pos(),
        env in arr::<3>(pos()),
        edges in arr::<2>(signed()),
        left in any::<bool>(),
        fp in arr::<2>(pos()),
        seed in any::<u64>(),
        noise in signed(),
    ) -> Scenario {
        let mut s = Scenario::default();
        s.name = name;
        s.path = path;
        s.road_length = head[0];
        s.speed_kmh = head[1];
        s.mu = head[2];
        s.return_threshold = head[3];
        s.duration = head[4];
        s.lead = lead.map(|(s, e_y, v)| LeadSpec { s, e_y, speed_kmh: v });
        s.mpc = mpc;
        s.tv_enabled = tv.0;
        s.tv.k_p = tv.1;
        s.tv.k_r = tv.2;
        s.tv.weights.w_e = tv.3;
        s.tv.weights.w_f = tv.4;
        s.tv.weights.w_df = tv.5;
        s.tv.torque_limit = tv.6;
        let v = &mut s.plant.vehicle;
        [v.l_f, v.l_r, v.mass, v.i_z, v.lane_width, v.t_s, v.wheel_radius_eff, v.track_width, v.body_width] = vehicle;
        s.plant.tire.b = tire[0];
        s.plant.tire.c = tire[1];
        s.plant.tire.slip_speed_floor = tire[2];
        s.plant.wheel_inertia = wheel_inertia;
        s.envelope.time_gap = env[0];
        s.envelope.l_c = env[1];
        s.envelope.w = env[2];
        s.edges.left = edges[0];
        s.edges.right = edges[1];
        s.side = if left { AvoidanceSide::Left } else { AvoidanceSide::Right };
        s.footprint.front = fp[0];
        s.footprint.rear = fp[1];
        s.seed = seed;
        s.initial_offset_noise = noise;
        s
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Reading an emitted scenario over an unrelated base recovers it exactly, so the
    /// emitter covers every field and loses no precision.
    #[test]
    fn emit_then_parse_is_identity(a in scenario(), base in scenario()) {
        let text = emit_scenario(&a);
        let back = apply_lines(base, &text, "roundtrip").map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, a);
    }

    #[test]
    fn emission_is_stable(a in scenario()) {
        let text = emit_scenario(&a);
        let back = apply_lines(Scenario::default(), &text, "roundtrip").unwrap();
        prop_assert_eq!(emit_scenario(&back), text);
    }
}
