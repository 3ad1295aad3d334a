//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use guidebot_core::dynamics::{
    discretize, plant_step, DiscreteMode, DiscreteModePair, ModeParams, PlantCommand, PlantConfig,
    PlantState, SwitchedLongitudinalModel,
};
use guidebot_core::geometry::{Pose2, Vec2};
use guidebot_core::perception::{
    detect_people, single_linkage, Tracker, TrackerConfig, CLUSTER_TOLERANCE,
};
use guidebot_core::planning::costmap::CellState;
use guidebot_core::sim::log::write_csv;
use guidebot_core::sim::world::{raycast, LidarConfig, OccupancyGrid};
use guidebot_core::sim::{run_scenario, RunResult, Scenario, Simulation};
use guidebot_core::supervision::{
    select_velocity, FsmConfig, FsmState, Supervisor, SupervisorInputs, Transition, VelocityCommand, V_EPS,
};
use guidebot_core::synthesis::{synthesize, synthesize_integral, PerformanceSpec, DEFAULT_TOL};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(sc: Scenario) -> RunResult {
    run_scenario(sc, None).expect("scenario runs")
}

// 1 -------------------------------------------------------------------------

fn rk4_oracle(m: &ModeParams, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let f = |x: [f64; 4], u: f64| [u, x[2], x[3], (x[0] - x[2] - m.alpha * x[3] + m.zero_t * u) / m.beta];
    let flow = |mut x: [f64; 4], u: f64| {
        let h = 1e-5;
        let add = |x: [f64; 4], k: [f64; 4], s: f64| std::array::from_fn::<f64, 4, _>(|i| x[i] + s * k[i]);
        for _ in 0..(ts / h).round() as usize {
            let k1 = f(x, u);
            let k2 = f(add(x, k1, h / 2.0), u);
            let k3 = f(add(x, k2, h / 2.0), u);
            let k4 = f(add(x, k3, h), u);
            x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        x
    };
    let mut a = DMatrix::zeros(4, 4);
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        a.set_column(j, &nalgebra::DVector::from_row_slice(&flow(e, 0.0)));
    }
    (a, DMatrix::from_column_slice(4, 1, &flow([0.0; 4], 1.0)))
}

fn step_extremes(from: f64, to: f64) -> (f64, f64, f64) {
    let model = SwitchedLongitudinalModel::default();
    let cfg = PlantConfig::default();
    let mut s = PlantState::at_rest(Pose2::new(0.0, 0.0, 0.0));
    s.long.v_ref = from;
    s.long.v = from;
    let cmd = PlantCommand { v_ref: to, omega_ref: 0.0 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..30_000 {
        s = plant_step(&model, &cfg, &s, cmd, cfg.max_dt).unwrap();
        lo = lo.min(s.long.v);
        hi = hi.max(s.long.v);
    }
    (lo, hi, s.long.v)
}

fn model_fidelity() -> Check {
    let start = Instant::now();
    let model = SwitchedLongitudinalModel::default();
    let pair = discretize(&model).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (mode, dm) in pair.modes() {
        let (a, b) = rk4_oracle(model.mode(mode), model.ts);
        worst = worst.max((&dm.a - &a).abs().max()).max((&dm.b - &b).abs().max());
    }
    let (acc_lo, _, acc_end) = step_extremes(0.0, 1.0);
    let (_, dec_hi, dec_end) = step_extremes(1.0, 0.0);
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst < 1e-6, "ZOH vs RK4 max entry error {worst:e}");
    ensure!(acc_lo < 0.0 && dec_hi > 1.0, "no inverse response: {acc_lo} {dec_hi}");
    ensure!((acc_end - 1.0).abs() < 1e-3 && dec_end.abs() < 1e-3, "DC gain off: {acc_end} {dec_end}");
    ensure!(secs < 1.0, "runtime {secs:.2} s");
    Ok(format!(
        "max entry error {worst:.1e}; undershoot {:.3} (acc), {:.3} (dec); final {acc_end:.4}/{dec_end:.4}; {secs:.2} s",
        -acc_lo,
        dec_hi - 1.0
    ))
}

// 2 -------------------------------------------------------------------------

const GOLDEN_COST_4: f64 = 914.8424757;
const GOLDEN_COST_5: f64 = 2712.4465;

fn synthesis_validity() -> Check {
    let start = Instant::now();
    let modes = discretize(&SwitchedLongitudinalModel::default()).map_err(|e| e.to_string())?;
    let four = synthesize(&modes, &PerformanceSpec::default_four_state(), DEFAULT_TOL).map_err(|e| e.to_string())?;
    let five = synthesize_integral(&modes, &PerformanceSpec::default_integral(), DEFAULT_TOL).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rho = four
        .spectral_radii(&modes)
        .into_iter()
        .chain(five.spectral_radii(&modes.with_distance_integrator()))
        .map(|(_, r)| r)
        .fold(0.0, f64::max);
    let margin = four.min_margin().min(five.min_margin());
    let rel4 = (four.cost - GOLDEN_COST_4).abs() / GOLDEN_COST_4;
    let rel5 = (five.cost - GOLDEN_COST_5).abs() / GOLDEN_COST_5;
    ensure!(rho <= 1.0 - 1e-4, "spectral radius {rho}");
    ensure!(margin >= -1e-6, "LMI block min eigenvalue {margin:e}");
    ensure!(rel4 < 0.01 && rel5 < 0.01, "trace(S) off golden by {rel4:.2e} / {rel5:.2e}");
    ensure!(secs < 10.0, "runtime {secs:.2} s");
    Ok(format!(
        "max rho {rho:.5}; min block eig {margin:.1e}; trace(S) {:.4} / {:.4} (rel {rel4:.1e} / {rel5:.1e}); {secs:.2} s",
        four.cost, five.cost
    ))
}

// 3 -------------------------------------------------------------------------

fn lq_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    for (a, b, q, r) in [(0.5, 1.0, 1.0, 1.0), (0.9, 0.2, 2.0, 0.5), (1.2, 1.0, 1.0, 3.0)] {
        let m = DiscreteMode { a: DMatrix::from_element(1, 1, a), b: DMatrix::from_element(1, 1, b) };
        let pair = DiscreteModePair { acc: m.clone(), dec: m, ts: 0.1 };
        let perf = PerformanceSpec::diagonal(&[q], r).map_err(|e| e.to_string())?;
        let sol = synthesize(&pair, &perf, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let mut p = q;
        for _ in 0..100_000 {
            p = q + a * a * p - (a * b * p).powi(2) / (r + b * b * p);
        }
        let k = -a * b * p / (r + b * b * p);
        worst = worst.max((sol.k[(0, 0)] - k).abs());
    }
    ensure!(worst < 1e-3, "gain differs from Riccati LQR by {worst:e}");
    Ok(format!("max |K - K_lqr| = {worst:.1e} over 3 scalar problems"))
}

// 4 -------------------------------------------------------------------------

fn step_reference() -> Check {
    let mut lines = Vec::new();
    let mut fails = Vec::new();
    for controller in [2u8, 1] {
        let mut sc = load("a1_step_reference.toml");
        sc.controller = controller;
        let start = Instant::now();
        let r = run(sc);
        let secs = start.elapsed().as_secs_f64();
        let m = &r.metrics;
        let settle = m.max_settling_time.unwrap_or(f64::INFINITY);
        let ss_limit = if controller == 2 { 0.02 } else { 0.10 };
        if !(m.max_steady_state_error < ss_limit) {
            fails.push(format!("C{controller} steady-state {:.4}", m.max_steady_state_error));
        }
        if !(settle <= 15.0) {
            fails.push(format!("C{controller} settling {settle:.1} s"));
        }
        if !(m.max_overshoot <= 0.5) {
            fails.push(format!("C{controller} overshoot {:.3}", m.max_overshoot));
        }
        if m.steps.len() != 2 {
            fails.push(format!("C{controller} saw {} steps", m.steps.len()));
        }
        if !(secs < 5.0) {
            fails.push(format!("C{controller} runtime {secs:.2} s"));
        }
        lines.push(format!(
            "C{controller}: ss {:.4} m, settle {settle:.1} s, overshoot {:.3} m, {secs:.2} s",
            m.max_steady_state_error, m.max_overshoot
        ));
    }
    if fails.is_empty() { Ok(lines.join("; ")) } else { Err(fails.join("; ")) }
}

// 5 -------------------------------------------------------------------------

fn walking_user() -> Check {
    let sc = load("a5_walking_user.toml");
    ensure!(sc.duration >= 120.0 && sc.controller == 2, "scenario is not a 120 s Controller 2 run");
    let r = run(sc);
    let m = &r.metrics;
    ensure!(m.max_abs_error < 0.5, "max |d - d_ref| = {:.3}", m.max_abs_error);
    ensure!(m.collisions == 0, "{} collisions", m.collisions);
    let speeds: Vec<f64> = r.log.iter().filter(|x| x.t > 5.0).map(|x| x.v_vi_true).collect();
    let vmax = speeds.iter().cloned().fold(0.0, f64::max);
    ensure!(vmax <= 1.0 + 1e-9, "user faster than 1 m/s");
    Ok(format!("max |d - d_ref| = {:.3} m over {:.0} s, user speed up to {vmax:.2} m/s", m.max_abs_error, m.duration))
}

// 6 -------------------------------------------------------------------------

fn velocity_mixing() -> Check {
    let grid = |lo: f64, hi: f64, n: usize| (0..=n).map(move |k| lo + (hi - lo) * k as f64 / n as f64);
    let mut count = 0usize;
    for v_dwa in grid(0.0, 1.5, 60).chain([5e-4, V_EPS]) {
        for w in grid(-1.0, 1.0, 40) {
            for v_dist in grid(-1.0, 3.0, 80) {
                let c = select_velocity(v_dwa, w, v_dist, 1.5);
                count += 1;
                if v_dwa < V_EPS {
                    ensure!(c == VelocityCommand::STOP, "v_dwa = {v_dwa} not stopped");
                    continue;
                }
                ensure!(c.v_ref == v_dwa.min(v_dist.clamp(0.0, 1.5)), "min rule at {v_dwa} {v_dist}");
                ensure!((0.0..=1.5).contains(&c.v_ref), "clamp at {v_dwa} {v_dist}");
                ensure!(c.v_ref <= v_dwa && c.v_ref <= v_dist.max(0.0), "dominance at {v_dwa} {v_dist}");
                if c.v_ref > 0.0 && c.v_ref < v_dwa {
                    let e = (c.omega_ref / c.v_ref - w / v_dwa).abs();
                    ensure!(e <= 1e-12, "curvature error {e:e}");
                } else if c.v_ref == v_dwa {
                    ensure!(c.omega_ref == w, "omega not forwarded");
                }
            }
        }
    }
    Ok(format!("{count} lattice points exact"))
}

// 7 -------------------------------------------------------------------------

fn nominal() -> SupervisorInputs {
    SupervisorInputs {
        v_dwa: 0.8,
        omega_dwa: 0.2,
        planner_feasible: true,
        v_dist: 0.5,
        user_distance: Some(1.5),
        localization_quality: 1.0,
        ..Default::default()
    }
}

/// Drives a supervisor through a script of `(inputs, ticks)`; returns the
/// transitions with their global tick index, checking stop outputs.
fn script(sup: &mut Supervisor, steps: &[(SupervisorInputs, usize)]) -> Result<Vec<(usize, Transition)>, String> {
    let mut out = Vec::new();
    let mut k = 0;
    for (inp, n) in steps {
        for _ in 0..*n {
            let (cmd, t) = sup.step(inp, 0.1);
            if sup.state.is_stop() && cmd != VelocityCommand::STOP {
                return Err(format!("stop state {:?} emitted {cmd:?}", sup.state));
            }
            if sup.state == FsmState::LowSpeed && cmd != (VelocityCommand { v_ref: inp.v_dwa, omega_ref: inp.omega_dwa }) {
                return Err("LOW_SPEED did not forward planner velocities".into());
            }
            if let Some(t) = t {
                out.push((k, t));
            }
            k += 1;
        }
    }
    Ok(out)
}

fn fsm_conformance() -> Check {
    use Transition::*;
    let n = nominal();
    let mut s = Supervisor::default();
    let trace = script(
        &mut s,
        &[
            (n, 30),
            (SupervisorInputs { manual_ack: true, ..n }, 1),
            (SupervisorInputs { v_robot: 0.4, v_user: 0.4, ..n }, 1),
            (SupervisorInputs { planner_feasible: false, ..n }, 20),
            (n, 1),
            (SupervisorInputs { user_distance: None, ..n }, 11),
            (SupervisorInputs { localization_quality: 0.2, ..n }, 5),
            (n, 10),
        ],
    )?;
    let expected = vec![(30, T3), (31, T4), (51, T6), (52, T7), (63, T5), (68, T1), (78, T2)];
    ensure!(trace == expected, "trace {trace:?}");
    for inp in [
        SupervisorInputs { user_distance: Some(3.6), ..n },
        SupervisorInputs { manual_stop: true, ..n },
        SupervisorInputs { goal_reached: true, ..n },
    ] {
        let mut s = Supervisor::default();
        s.state = FsmState::Cruise;
        ensure!(script(&mut s, &[(inp, 1)])? == vec![(0, T5)], "immediate T5 missing");
    }

    let allowed = |t: Transition, from: FsmState, to: FsmState| {
        use FsmState::*;
        match t {
            T1 => from != Lost && to == Lost,
            T2 => from == Lost && to == StoppedHuman,
            T3 => from == StoppedHuman && to == LowSpeed,
            T4 => from == LowSpeed && to == Cruise,
            T5 => matches!(from, Cruise | LowSpeed | StoppedRobot) && to == StoppedHuman,
            T6 => matches!(from, Cruise | LowSpeed) && to == StoppedRobot,
            T7 => from == StoppedRobot && to == Cruise,
        }
    };
    let mut visited = 0;
    let mut fired = std::collections::HashSet::new();
    for state in FsmState::ALL {
        for timer in [0.0, 0.45, 0.95, 1.05, 1.95, 2.05] {
            for quality in [0.2, 0.5, 0.9] {
                for feasible in [false, true] {
                    for user in [None, Some(1.5), Some(3.5), Some(4.0)] {
                        for bits in 0..8u8 {
                            for v in [0.0, 0.3, 0.4] {
                                let inp = SupervisorInputs {
                                    planner_feasible: feasible,
                                    user_distance: user,
                                    localization_quality: quality,
                                    manual_ack: bits & 1 != 0,
                                    manual_stop: bits & 2 != 0,
                                    goal_reached: bits & 4 != 0,
                                    v_robot: v,
                                    v_user: v,
                                    ..n
                                };
                                let mut s = Supervisor::new(FsmConfig::default());
                                s.state = state;
                                s.low_quality_time = timer;
                                s.good_quality_time = timer;
                                s.user_missing_time = timer;
                                s.infeasible_time = timer;
                                let mut twin = s;
                                let (cmd, t) = s.step(&inp, 0.1);
                                ensure!(twin.step(&inp, 0.1) == (cmd, t), "nondeterministic step");
                                match t {
                                    None => ensure!(s.state == state, "silent state change"),
                                    Some(t) => {
                                        ensure!(allowed(t, state, s.state), "{t:?} from {state:?} to {:?}", s.state);
                                        fired.insert(t);
                                    }
                                }
                                ensure!(!s.state.is_stop() || cmd == VelocityCommand::STOP, "stop state moved");
                                visited += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    ensure!(fired.len() == 7, "lattice fired only {} transitions", fired.len());
    Ok(format!("T1..T7 traced; {visited} lattice points total and deterministic"))
}

// 8 -------------------------------------------------------------------------

fn startup_smoothness() -> Check {
    let r = run(load("a8_startup.toml"));
    let first = r.log.iter().position(|x| x.fsm_state == "LOW_SPEED").ok_or("never entered LOW_SPEED")?;
    let len = r.log[first..].iter().take_while(|x| x.fsm_state == "LOW_SPEED").count();
    let low = &r.log[first..first + len];
    let v_max = low.iter().map(|x| x.v).fold(f64::NEG_INFINITY, f64::max);
    let dv: Vec<f64> = low.windows(2).map(|w| w[1].v_ref - w[0].v_ref).filter(|d| *d != 0.0).collect();
    let sign_changes = dv.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    ensure!(v_max > 0.3, "peak speed in LOW_SPEED {v_max:.3}");
    ensure!(sign_changes <= 2, "{sign_changes} sign changes of dv_ref/dt");
    ensure!(r.metrics.collisions == 0, "{} collisions", r.metrics.collisions);
    let d_min = r.log.iter().map(|x| x.d).filter(|d| d.is_finite()).fold(f64::INFINITY, f64::min);
    Ok(format!(
        "LOW_SPEED for {:.1} s, peak v {v_max:.3} m/s, {sign_changes} dv_ref sign changes, min gap {d_min:.2} m",
        len as f64 * 0.1
    ))
}

// 9 -------------------------------------------------------------------------

fn crowd_disambiguation() -> Check {
    let sc = load("a9_crowd.toml");
    ensure!(sc.pedestrians.len() == 3, "expected three walkers");
    let mut sim = Simulation::new(sc, None).map_err(|e| e.to_string())?;
    let mut log = Vec::new();
    let mut min_moving = usize::MAX;
    while !sim.finished() {
        let row = sim.step().map_err(|e| e.to_string())?;
        if row.t >= 5.0 {
            let moving = sim.tracker.published().filter(|t| t.velocity().norm() > 0.35).count();
            min_moving = min_moving.min(moving);
        }
        log.push(row);
    }
    let m = guidebot_core::sim::compute_metrics(&log);
    let user_ticks = log.iter().filter(|x| x.t >= 5.0 && x.selected_ped == 0).count();
    let total = log.iter().filter(|x| x.t >= 5.0).count();
    ensure!(m.wrong_selection_ticks == 0, "{} ticks on the wrong person", m.wrong_selection_ticks);
    ensure!(m.track_switches == 0, "{} track switches", m.track_switches);
    ensure!(user_ticks == total, "user unselected on {} ticks", total - user_ticks);
    ensure!(min_moving >= 3, "only {min_moving} moving tracks at some tick");
    ensure!(m.collisions == 0, "{} collisions", m.collisions);
    Ok(format!("user selected on all {total} ticks after 5 s, 0 switches, >= {min_moving} moving tracks throughout"))
}

// 10 ------------------------------------------------------------------------

fn obstacle_navigation() -> Check {
    let mut parts = Vec::new();
    for name in ["a10_bollards.toml", "a10_stairs.toml"] {
        let sc = load(name);
        let length = sc.plan.length();
        let r = run(sc);
        ensure!(r.metrics.collisions == 0, "{name}: {} collisions", r.metrics.collisions);
        ensure!(r.failures.is_empty(), "{name}: {}", r.failures.join(", "));
        let clr = r.log.iter().map(|x| x.clearance).fold(f64::INFINITY, f64::min);
        parts.push(format!("{name}: s {:.1}/{length:.1}, min clearance {clr:.2} m", r.metrics.final_s));
    }

    // Stairs: lethal in the costmap while nothing in the world reflects a beam there.
    let sc = load("a10_stairs.toml");
    let stairs = |p: Vec2| (8.0..=12.0).contains(&p.x) && (-3.0..=-0.9).contains(&p.y);
    let mut sim = Simulation::new(sc, None).map_err(|e| e.to_string())?;
    while sim.plant.pose.x < 6.0 && !sim.finished() {
        sim.step().map_err(|e| e.to_string())?;
    }
    let grid = &sim.scenario.grid;
    let mut scan_hits = 0;
    let mut checked = 0;
    for j in 0..grid.height {
        for i in 0..grid.width {
            let c = grid.cell_center(i, j);
            if stairs(c) && grid.occupied[j * grid.width + i] {
                scan_hits += 1;
            }
        }
    }
    for k in 0..=8 {
        for l in 0..=4 {
            let p = Vec2::new(8.25 + 0.4 * k as f64, -2.75 + 0.4 * l as f64);
            ensure!(sim.costmap.state_at(p) == CellState::Lethal, "stairs cell {p:?} not lethal");
            checked += 1;
        }
    }
    ensure!(scan_hits == 0, "stairs region has {scan_hits} reflecting cells");
    parts.push(format!("{checked} stairs samples lethal with no reflecting cells"));
    Ok(parts.join("; "))
}

// 11 ------------------------------------------------------------------------

fn union_find(points: &[Vec2], tol: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    // Repeated relaxation to the minimum index in each connected component.
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && (points[i] - points[j]).norm() <= tol && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index = std::collections::BTreeMap::new();
    for i in 0..n {
        let g = *index.entry(label[i]).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

fn tracking_pipeline() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in 0..100 {
        let n = rng.random_range(1..=200);
        let ext = rng.random_range(1.0..8.0);
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.random_range(-ext..ext), rng.random_range(-ext..ext))).collect();
        ensure!(single_linkage(&pts, CLUSTER_TOLERANCE) == union_find(&pts, CLUSTER_TOLERANCE), "instance {inst} differs");
    }

    let mut tr = Tracker::new(TrackerConfig::default());
    let mut noise = ChaCha8Rng::seed_from_u64(12);
    for k in 0..100 {
        let z = Vec2::new(0.1 * k as f64 + noise.random_range(-0.02..0.02), noise.random_range(-0.02..0.02));
        tr.update(&[z], 0.1);
    }
    let speed = tr.tracks.first().map(|t| t.velocity().norm()).ok_or("no track")?;
    ensure!((speed - 1.0).abs() <= 0.1, "speed estimate {speed:.3}");

    // A person standing behind the robot, seen through the full scan pipeline.
    let grid = OccupancyGrid::empty(Vec2::new(-10.0, -10.0), Vec2::new(20.0, 20.0), 0.05);
    let pose = Pose2::new(0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut tr = Tracker::default();
    let mut ids = std::collections::HashSet::new();
    let ticks = 6000;
    for k in 0..ticks {
        let scan = raycast(&grid, &[Vec2::new(-1.5, 0.0)], &pose, pose, &LidarConfig::default(), k as f64 * 0.1, &mut rng);
        tr.update(&detect_people(&scan), 0.1);
        if k >= 3 {
            let published: Vec<_> = tr.published().collect();
            ensure!(published.len() == 1, "standing user not tracked at tick {k}");
            ids.insert(published[0].id);
        }
    }
    ensure!(ids.len() == 1, "standing user re-identified {} times", ids.len());
    Ok(format!("100 clustering instances exact; speed {speed:.3} m/s; standing user kept one track for {} s", ticks / 10))
}

// 12 ------------------------------------------------------------------------

fn determinism() -> Check {
    let mut names: Vec<PathBuf> = std::fs::read_dir(scenario_path(""))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    for path in &names {
        let sc = Scenario::load(path).map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                let mut buf = Vec::new();
                write_csv(&mut buf, &run(sc.clone()).log).unwrap();
                buf
            })
            .collect();
        ensure!(bytes[0] == bytes[1], "{} differs between runs", path.display());
    }
    Ok(format!("{} scenarios bitwise identical on re-run", names.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("model fidelity", model_fidelity),
        ("synthesis validity", synthesis_validity),
        ("LQ equivalence", lq_equivalence),
        ("step reference", step_reference),
        ("walking user", walking_user),
        ("velocity mixing", velocity_mixing),
        ("FSM conformance", fsm_conformance),
        ("start-up smoothness", startup_smoothness),
        ("crowd disambiguation", crowd_disambiguation),
        ("obstacle navigation", obstacle_navigation),
        ("tracking pipeline", tracking_pipeline),
        ("determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
