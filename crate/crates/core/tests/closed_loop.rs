use evade_core::models::VehicleParams;
use evade_core::plant::{PlantParams, PlantState, Surface, Plant};
use evade_core::simulation::{self, PathSpec, Scenario, SweepAxis};
use evade_core::torque_vectoring::{allocate, cg_forces, force_jacobian, AllocationWeights, CgForceTarget, TireForceState};
use evade_core::Variant;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn straight_no_lead(variant: Variant) -> Scenario {
    Scenario {
        path: PathSpec::Straight,
        lead: None,
        duration: 10.0,
        mpc: evade_core::MpcConfig::with_variant(variant),
        ..Scenario::default()
    }
}

#[test]
fn regulation_about_the_reference() {
    for variant in [Variant::Nominal, Variant::OffsetFree] {
        let tr = simulation::run(&straight_no_lead(variant)).unwrap();
        assert!(tr.abort.is_none(), "{:?}", tr.abort);
        assert!(tr.metrics.max_e_y < 1e-3, "{variant:?}: {}", tr.metrics.max_e_y);
        assert!((tr.rows.last().unwrap().t - 10.0).abs() < 0.11);
    }
}

#[test]
fn identical_scenarios_give_identical_traces() {
    let mut sc = straight_no_lead(Variant::Nominal);
    sc.initial_offset_noise = 0.3;
    sc.seed = 17;
    sc.duration = 4.0;
    let a = serde_json::to_string(&simulation::run(&sc).unwrap()).unwrap();
    let b = serde_json::to_string(&simulation::run(&sc).unwrap()).unwrap();
    assert_eq!(a, b);
    sc.seed = 18;
    let c = serde_json::to_string(&simulation::run(&sc).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sweep_records_every_pair_and_keeps_failures() {
    let mut template = straight_no_lead(Variant::Nominal);
    template.duration = 1.0;
    let rows = simulation::sweep(&template, &SweepAxis::Speed(vec![60.0, 70.0]), &[Variant::Nominal, Variant::Robust]).unwrap();
    assert_eq!(rows.len(), 4);
    let csv = simulation::sweep_table_csv(&SweepAxis::Speed(vec![60.0, 70.0]), &rows);
    assert!(csv.lines().next().unwrap().contains("60"));
    assert!(simulation::sweep(&template, &SweepAxis::Speed(vec![-5.0]), &[Variant::Nominal]).is_err());
}

#[test]
fn steady_cornering_matches_single_track_yaw_gain() {
    // identical tyres with static loads make the single-track model neutral: r = v δ / L
    let params = PlantParams::default();
    let plant = Plant::new(params, Surface::new(1.0).unwrap());
    let v0 = 15.0;
    let delta = 0.005;
    let mut s = PlantState::rolling(0.0, 0.0, 0.0, v0, &params);
    for i in 0..100 {
        let t = 40.0 * (v0 - s.v_x);
        s = plant.advance(&s, delta, &[t; 4], 0.1, i as f64 * 0.1).unwrap();
    }
    let want = s.v_x * delta / params.vehicle.wheelbase();
    assert!((s.r - want).abs() < 0.02 * want, "yaw rate {} vs {}", s.r, want);
    assert!((s.v_x - v0).abs() < 0.05);
}

#[test]
fn free_rolling_straight_line_keeps_speed() {
    let params = PlantParams::default();
    let plant = Plant::new(params, Surface::new(0.4).unwrap());
    let s0 = PlantState::rolling(0.0, 0.0, 0.3, 20.0, &params);
    let s = plant.advance(&s0, 0.0, &[0.0; 4], 2.0, 0.0).unwrap();
    assert!((s.v_x - 20.0).abs() < 1e-9 && s.r.abs() < 1e-12);
    assert!((s.x - 40.0 * 0.3f64.cos()).abs() < 1e-6 && (s.y - 40.0 * 0.3f64.sin()).abs() < 1e-6);
}

proptest! {
    #[test]
    fn allocation_solves_weighted_least_squares(
        fx in prop::array::uniform4(-3000.0..3000.0f64),
        fy in prop::array::uniform4(-3000.0..3000.0f64),
        delta in -0.2..0.2f64,
        des in prop::array::uniform3(-5000.0..5000.0f64),
    ) {
        let p = VehicleParams::default();
        let f = TireForceState { f_x: fx, f_y: fy };
        let target = CgForceTarget { f_x_des: des[0], f_y_des: des[1], g_z_des: des[2] };
        let w = AllocationWeights::default();
        let j = force_jacobian(delta, &p);
        let measured = cg_forces(&f, delta, &p);
        let a = allocate(&f, &target, &measured, &w, &j, p.wheel_radius_eff);
        // stacked least-squares form of the same objective, solved by SVD
        let e = target.to_vector() - measured.to_vector();
        let mut m = DMatrix::zeros(3 + 16, 8);
        let mut rhs = DVector::zeros(3 + 16);
        for r in 0..3 {
            let s = w.w_e[r].sqrt();
            for c in 0..8 {
                m[(r, c)] = s * j[(r, c)];
            }
            rhs[r] = s * e[r];
        }
        let fv = f.to_vector();
        for c in 0..8 {
            m[(3 + c, c)] = w.w_f.sqrt();
            rhs[3 + c] = -w.w_f.sqrt() * fv[c];
            m[(11 + c, c)] = w.w_df.sqrt();
        }
        let theta = m.svd(true, true).solve(&rhs, 1e-14).unwrap();
        for c in 0..8 {
            prop_assert!((a.theta_f[c] - theta[c]).abs() <= 1e-7 * theta.amax().max(1.0));
        }
        for i in 0..4 {
            prop_assert!((a.delta_t[i] - p.wheel_radius_eff * theta[i]).abs() <= 1e-7 * theta.amax().max(1.0));
        }
    }
}
