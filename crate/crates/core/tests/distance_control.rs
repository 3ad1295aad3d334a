use guidebot_core::distance_control::{
    controller_step, reset, ControllerMemory, DistanceGains, UserEstimate,
};
use guidebot_core::dynamics::{plant_step, PlantCommand, PlantConfig, PlantState, SwitchedLongitudinalModel};
use guidebot_core::geometry::Pose2;
use guidebot_core::synthesis::gains::{design_gains, DesignWeights, GainsFile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn gains_file() -> &'static GainsFile {
    static FILE: OnceLock<GainsFile> = OnceLock::new();
    FILE.get_or_init(|| design_gains(&SwitchedLongitudinalModel::default(), &DesignWeights::default(), 1.5).unwrap())
}

fn est(d: f64, v_vi: f64) -> UserEstimate {
    UserEstimate {
        d,
        p_vi: 0.0,
        v_vi,
        a_vi: 0.0,
        valid: true,
        age: 0.0,
    }
}

/// Nominal loop: plant at 1 ms, controller at Ts, stationary user at p = 0,
/// speed reference clamped to [-v_max, v_max]. Returns d sampled at Ts.
fn simulate(gains: &DistanceGains, d0: f64, d_ref: impl Fn(f64) -> f64, v_bias: f64, horizon: f64) -> Vec<f64> {
    let model = SwitchedLongitudinalModel::default();
    let cfg = PlantConfig::default();
    let mut plant = PlantState::at_rest(Pose2::default());
    plant.long.p = d0;
    let mut mem = ControllerMemory::default();
    let mut out = Vec::new();
    let steps = (horizon / gains.ts).round() as usize;
    let sub = (gains.ts / 1e-3).round() as usize;
    for k in 0..steps {
        let t = k as f64 * gains.ts;
        let d = plant.long.p;
        out.push(d);
        let (v, next) = controller_step(gains, mem, &est(d, v_bias), d_ref(t), plant.long.v).unwrap();
        let v_cmd = v.clamp(-gains.v_max, gains.v_max);
        mem = next;
        mem.track_applied(v_cmd);
        for _ in 0..sub {
            plant = plant_step(&model, &cfg, &plant, PlantCommand { v_ref: v_cmd, omega_ref: 0.0 }, 1e-3).unwrap();
        }
    }
    out
}

#[test]
fn controller_two_with_zero_k5_is_controller_one() {
    let g2 = DistanceGains::from_file(gains_file(), true);
    let g1 = g2.without_integral();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut m1, mut m2) = (ControllerMemory::default(), ControllerMemory::default());
    let c1 = DistanceGains { k5: 0.0, ..g2 };
    for _ in 0..500 {
        let e = est(rng.random_range(0.5..3.0), rng.random_range(-0.5..1.5));
        let v = rng.random_range(0.0..1.5);
        let (a, n1) = controller_step(&g1, m1, &e, 1.5, v).unwrap();
        let (b, n2) = controller_step(&c1, m2, &e, 1.5, v).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        m1 = n1;
        m2 = n2;
    }
}

#[test]
fn anti_windup_bound_holds_for_any_sequence() {
    let g = DistanceGains::from_file(gains_file(), true);
    let bound = g.v_max / (3.0 * g.k5.abs());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mem = ControllerMemory::default();
    for _ in 0..5000 {
        let e = est(rng.random_range(-20.0..20.0), rng.random_range(-3.0..3.0));
        let (_, next) = controller_step(&g, mem, &e, 1.5, rng.random_range(-2.0..2.0)).unwrap();
        assert!(next.integrator.abs() <= bound);
        mem = next;
    }
}

#[test]
fn step_reference_with_stationary_user() {
    let g2 = DistanceGains::from_file(gains_file(), true);
    let g1 = DistanceGains::from_file(gains_file(), false);
    let step = |t: f64| if t < 5.0 { 1.5 } else { 2.5 };
    for (g, tol) in [(g2, 0.05), (g1, 0.10)] {
        let d = simulate(&g, 1.5, step, 0.0, 30.0);
        let end = *d.last().unwrap();
        assert!((end - 2.5).abs() < tol, "k5 = {}: d = {end}", g.k5);
        let peak = d.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak < 2.5 + 0.5);
    }
    let d = simulate(&g2, 1.5, step, 0.0, 60.0);
    assert!((d.last().unwrap() - 2.5).abs() < 1e-3);
}

/// Largest constant `v_VI` bias the saturated integrator can cancel: in steady
/// state `k5 i = (k1 + k3) b` with `|k5 i| <= v_MAX / 3`.
fn admissible_bias(g: &DistanceGains) -> f64 {
    g.v_max / 3.0 / (g.k1 + g.k3).abs()
}

#[test]
fn integral_action_rejects_admissible_velocity_bias() {
    let g2 = DistanceGains::from_file(gains_file(), true);
    let g1 = g2.without_integral();
    let b_max = admissible_bias(&g2);
    for bias in [0.5 * b_max, 0.9 * b_max, -0.9 * b_max] {
        let d = simulate(&g2, 1.5, |_| 1.5, bias, 200.0);
        assert!((d.last().unwrap() - 1.5).abs() < 1e-3, "bias {bias}: {}", d.last().unwrap());
        let d1 = simulate(&g1, 1.5, |_| 1.5, bias, 200.0);
        let offset = (g1.k1 + g1.k3) * bias / g1.k2;
        assert!((d1.last().unwrap() - 1.5 - offset).abs() < 1e-3, "controller 1 offset");
    }
}

#[test]
fn bias_beyond_saturation_leaves_predicted_offset() {
    let g2 = DistanceGains::from_file(gains_file(), true);
    let bias = 0.2;
    assert!(bias > admissible_bias(&g2));
    let d = simulate(&g2, 1.5, |_| 1.5, bias, 200.0);
    // Integrator pinned at sign(e) times its bound: k2 e + k5 i_sat = (k1 + k3) b.
    let e = [1.0, -1.0]
        .into_iter()
        .map(|s| ((g2.k1 + g2.k3) * bias - g2.k5 * s * g2.integrator_bound()) / g2.k2)
        .zip([1.0, -1.0])
        .find(|(e, s)| e.signum() == *s)
        .unwrap()
        .0;
    assert!((d.last().unwrap() - 1.5 - e).abs() < 1e-3, "{} vs {e}", d.last().unwrap() - 1.5);
}

fn smooth(t: f64) -> (f64, f64) {
    (0.8 + 0.3 * (0.7 * t).sin(), 0.3 * 0.7 * (0.7 * t).cos())
}

/// Residual between the recursion and the continuous law, using exact
/// derivatives for a and a_VI.
fn max_law_residual(ts: f64) -> f64 {
    let g = DistanceGains {
        ts,
        ..DistanceGains::from_file(gains_file(), true)
    };
    let mut mem = ControllerMemory::default();
    let mut worst: f64 = 0.0;
    let mut prev_v_ref: Option<f64> = None;
    let steps = (4.0 / ts) as usize;
    for k in 0..steps {
        let t = k as f64 * ts;
        let (v_vi, a_vi) = smooth(t);
        let (v, a) = smooth(t + 0.4);
        let e = 0.2 * (0.5 * t).sin();
        let i = mem.integrator;
        let (v_ref, next) = controller_step(&g, mem, &est(1.5 + e, v_vi), 1.5, v).unwrap();
        if let Some(prev) = prev_v_ref {
            let a_ref = (v_ref - prev) / ts;
            let law = a_vi
                + g.k1 * (v_ref - v_vi)
                + g.k2 * e
                + g.k3 * (v - v_vi)
                + g.k4 * (a - a_vi)
                + g.k5 * i;
            if k > 2 {
                worst = worst.max((a_ref - law).abs());
            }
        }
        prev_v_ref = Some(v_ref);
        mem = next;
    }
    worst
}

#[test]
fn recursion_matches_continuous_law_to_first_order() {
    let r1 = max_law_residual(0.01);
    let r2 = max_law_residual(0.005);
    assert!(r1 * 0.01 < 10.0 * 0.01 * 0.01, "{r1}");
    let ratio = r2 / r1;
    assert!((0.4..0.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reset_mid_run_has_no_large_transient() {
    let g = DistanceGains::from_file(gains_file(), true);
    let model = SwitchedLongitudinalModel::default();
    let cfg = PlantConfig::default();
    let mut plant = PlantState::at_rest(Pose2::default());
    plant.long.p = 1.5;
    let mut mem = ControllerMemory::default();
    let mut prev_cmd: Option<f64> = None;
    let mut worst_normal: f64 = 0.0;
    let mut at_reset = 0.0;
    for k in 0..300 {
        let t = k as f64 * g.ts;
        let v_user = if t < 3.0 { 0.0 } else { 0.6 };
        if k == 200 {
            mem = reset(mem);
        }
        let (v, next) = controller_step(&g, mem, &est(plant.long.p - v_user * (t - 3.0).max(0.0), v_user), 1.5, plant.long.v).unwrap();
        let v_cmd = v.clamp(-1.5, 1.5);
        if let Some(p) = prev_cmd {
            let jump = (v_cmd - p).abs();
            if k == 200 {
                at_reset = jump;
            } else if k > 150 {
                worst_normal = worst_normal.max(jump);
            }
        }
        prev_cmd = Some(v_cmd);
        mem = next;
        mem.track_applied(v_cmd);
        for _ in 0..100 {
            plant = plant_step(&model, &cfg, &plant, PlantCommand { v_ref: v_cmd, omega_ref: 0.0 }, 1e-3).unwrap();
        }
    }
    // One period of slew at 1 m/s^2 on top of the normal step size.
    assert!(at_reset <= worst_normal + 1.0 * g.ts, "{at_reset} vs {worst_normal}");
}

#[test]
fn invalid_estimate_holds_last_output() {
    let g = DistanceGains::from_file(gains_file(), false);
    let (v, mem) = controller_step(&g, ControllerMemory::default(), &est(2.0, 0.0), 1.5, 0.0).unwrap();
    let err = controller_step(&g, mem, &est(2.0, 0.0).aged(1.0), 1.5, 0.0).unwrap_err();
    assert_eq!(
        err,
        guidebot_core::distance_control::ControlError::EstimateInvalid { hold: v }
    );
}
