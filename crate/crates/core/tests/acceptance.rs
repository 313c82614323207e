//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any of them fails.
//!
//! ```text
//! cargo test --release -p zerotrack --test acceptance
//! ```

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix4, Matrix4x2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use zerotrack::control::{error_state, linearize, propagate_error, ErrorState, MpcController};
use zerotrack::estimator::{ekf_predict, ekf_update_heading, ekf_update_position, EkfState, NoiseConfig};
use zerotrack::dynamics::{step, Command, VehicleParams, VehicleState};
use zerotrack::harness::{
    evaluate, run_repetitions, run_scenario, NnController, PathSpec, RunTrace, ScenarioConfig,
    SensorMode,
};
use zerotrack::imitation::{
    collect_mpc_dataset, ingest_hil_recording, model_to_string, train, Activation, Model, NetworkParams, Source,
};
use zerotrack::paths::{training_family, Direction, FamilySpeed, ReferencePath, ReferenceSample, SpeedProfile, DEFAULT_SPACING};
use zerotrack::Result;

const A1_RADIUS_REL_TOL: f64 = 1e-6;
const A1_MAX_SECONDS: f64 = 1.0;
const A2_PAIRS: usize = 100_000;
const A2_REL_TOL: f64 = 1e-12;
const A3_POINTS: usize = 1000;
const A3_LINEARIZE_REL_TOL: f64 = 1e-5;
const A3_GRADIENT_REL_TOL: f64 = 1e-4;
const A4_OFFSET: f64 = 0.5;
const A4_THRESHOLD: f64 = 0.05;
const A4_SETTLE_BY: f64 = 10.0;
const A4_HOLD_FOR: f64 = 30.0;
const A5_MEAN_RATIO: f64 = 2.0;
const A5_MAX_ERROR: f64 = 1.0;
const A5_MAX_SECONDS: f64 = 60.0;
const A6_SPEED_TOL: f64 = 0.3;
const A6_FAST_SPEED: f64 = 2.0;
const A8_SEEDS: u64 = 20;
const A8_INITIAL_ERROR: f64 = -0.5;
const A8_THROTTLE: f64 = 0.5;
const A8_STEERING: f64 = 0.25;
const A8_SETTLE_BY: f64 = 5.0;
const A8_REL_TOL: f64 = 0.05;
/// Graded: the error at `A8_SETTLE_BY` and its RMS over
/// `[A8_SETTLE_BY, A8_HOLD_UNTIL]`. The instantaneous worst case up to
/// `A8_DURATION` is reported only.
const A8_HOLD_UNTIL: f64 = 10.0;
const A8_DURATION: f64 = 30.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn mean_tv(traces: &[RunTrace]) -> f64 {
    traces.iter().map(|t| t.steering_total_variation()).sum::<f64>() / traces.len() as f64
}

fn a1_circle_radius() -> Result<Verdict> {
    let start = Instant::now();
    let p = VehicleParams::default();
    let mut worst: f64 = 0.0;
    for steering in [-0.9, -0.5, 0.25, 0.5, 1.0] {
        for v in [0.5, 1.0, 2.0] {
            let throttle = p.cruise_throttle(v);
            let v_eq = throttle * p.speed_noload;
            let u = Command::new(steering, throttle);
            let radius = p.wheelbase / (p.beta * steering).tan();
            let center = (0.0, radius);
            let dt = 0.01;
            let steps = (2.0 * std::f64::consts::PI * radius.abs() / v_eq / dt).ceil() as usize;
            let mut q = VehicleState::new(0.0, 0.0, 0.0, v_eq);
            for _ in 0..steps {
                q = step(&q, &u, dt, &p)?;
                let r = (q.x - center.0).hypot(q.y - center.1);
                worst = worst.max((r - radius.abs()).abs() / radius.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= A1_RADIUS_REL_TOL && secs < A1_MAX_SECONDS,
        format!("worst relative radius error {worst:.2e}, {secs:.3} s"),
    )
}

fn a2_norm_preservation() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..A2_PAIRS {
        let q = VehicleState::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(0.0..3.0),
        );
        let r = ReferenceSample {
            x: rng.random_range(-50.0..50.0),
            y: rng.random_range(-50.0..50.0),
            theta: rng.random_range(-10.0..10.0),
            v: rng.random_range(0.0..3.0),
            s: 0.0,
            curvature: 0.0,
        };
        let e = error_state(&q, &r);
        let d2 = (r.x - q.x).powi(2) + (r.y - q.y).powi(2);
        worst = worst.max((e.e1 * e.e1 + e.e2 * e.e2 - d2).abs() / d2.max(1.0));
    }
    verdict(worst <= A2_REL_TOL, format!("worst relative error {worst:.2e} over {A2_PAIRS} pairs"))
}

fn relative(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

fn a3_linearize() -> Result<f64> {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dt = 0.1;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..A3_POINTS {
        let e = ErrorState::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let u = Command::new(rng.random_range(-0.9..0.9), rng.random_range(0.05..0.95));
        let r = ReferenceSample {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            v: rng.random_range(0.5..2.0),
            s: 0.0,
            curvature: rng.random_range(-0.5..0.5),
        };
        let lin = linearize(&e, &u, &r, dt, &p);
        let mut a = Matrix4::zeros();
        for j in 0..4 {
            let mut plus = e.to_vector();
            let mut minus = e.to_vector();
            plus[j] += h;
            minus[j] -= h;
            let fp = propagate_error(&ErrorState::from_vector(&plus), &u, &r, dt, &p).to_vector();
            let fm = propagate_error(&ErrorState::from_vector(&minus), &u, &r, dt, &p).to_vector();
            a.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        let mut b = Matrix4x2::zeros();
        for j in 0..2 {
            let shift = |d: f64| {
                let mut v = [u.steering(), u.throttle()];
                v[j] += d;
                Command::new(v[0], v[1])
            };
            let fp = propagate_error(&e, &shift(h), &r, dt, &p).to_vector();
            let fm = propagate_error(&e, &shift(-h), &r, dt, &p).to_vector();
            b.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        worst = worst
            .max(relative(lin.a.as_slice(), a.as_slice()))
            .max(relative(lin.b.as_slice(), b.as_slice()));
    }
    Ok(worst)
}

fn flatten(weights: &[DMatrix<f64>; 3], biases: &[nalgebra::DVector<f64>; 3]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..3 {
        out.extend(weights[k].iter());
        out.extend(biases[k].iter());
    }
    out
}

fn a3_backprop() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let net = NetworkParams::xavier([8, 8], Activation::Tanh, &mut rng);
    let n = 20;
    let x = DMatrix::from_fn(4, n, |_, _| rng.random_range(-2.0..2.0));
    let y = DMatrix::from_fn(2, n, |i, _| if i == 0 { rng.random_range(-1.0..1.0) } else { rng.random_range(0.0..1.0) });
    let (_, grads) = net.loss_and_gradient(&x, &y);
    let analytic = flatten(&grads.weights, &grads.biases);

    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..3 {
        for i in 0..net.weights[k].len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.weights[k].as_mut_slice()[i] += h;
            minus.weights[k].as_mut_slice()[i] -= h;
            numeric.push((plus.loss(&x, &y) - minus.loss(&x, &y)) / (2.0 * h));
        }
        for i in 0..net.biases[k].len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.biases[k][i] += h;
            minus.biases[k][i] -= h;
            numeric.push((plus.loss(&x, &y) - minus.loss(&x, &y)) / (2.0 * h));
        }
    }
    Ok(relative(&analytic, &numeric))
}

fn a3_oracles() -> Result<Verdict> {
    let lin = a3_linearize()?;
    let grad = a3_backprop()?;
    verdict(
        lin < A3_LINEARIZE_REL_TOL && grad < A3_GRADIENT_REL_TOL,
        format!("linearize worst {lin:.2e} over {A3_POINTS} points, 4-8-8-2 backprop {grad:.2e}"),
    )
}

fn a4_mpc_contraction() -> Result<Verdict> {
    let mut details = Vec::new();
    let mut pass = true;
    for side in [1.0, -1.0] {
        let mut cfg = ScenarioConfig {
            path: PathSpec::Circle {
                radius: 5.0,
                direction: Direction::Ccw,
                profile: SpeedProfile::constant(1.0),
                spacing: DEFAULT_SPACING,
            },
            duration: Some(A4_SETTLE_BY + A4_HOLD_FOR),
            ..Default::default()
        };
        cfg.initial_offset.lateral = side * A4_OFFSET;
        cfg.initial_offset.jitter = zerotrack::imitation::Perturbation::none();
        let path = cfg.path.build()?;
        let mut mpc = MpcController::new(cfg.mpc.clone(), cfg.vehicle)?;
        let trace = run_scenario(&cfg, &path, &mut mpc, 0)?;
        let hit = trace.records.iter().find(|r| r.ct_err < A4_THRESHOLD).map(|r| r.t);
        let ok = match hit {
            Some(t0) => {
                let held = trace.records.iter().filter(|r| r.t >= t0).all(|r| r.ct_err < A4_THRESHOLD);
                let span = trace.records.last().map_or(0.0, |r| r.t) - t0;
                t0 <= A4_SETTLE_BY && held && span >= A4_HOLD_FOR - cfg.control_dt()
            }
            None => false,
        };
        pass &= ok && trace.completed();
        let after: f64 = hit.map_or(f64::NAN, |t0| {
            trace.records.iter().filter(|r| r.t >= t0).map(|r| r.ct_err).fold(0.0, f64::max)
        });
        details.push(format!(
            "{} offset: below {A4_THRESHOLD} m at {} s, max afterwards {after:.4} m",
            if side > 0.0 { "outer" } else { "inner" },
            hit.map_or("never".into(), |t| format!("{t:.1}"))
        ));
    }
    // a positive offset is to the left, which is inside a counter-clockwise circle
    details.reverse();
    verdict(pass, details.join("; "))
}

struct ConstantSpeedModels {
    cfg: ScenarioConfig,
    course: ReferencePath,
    mpc_model: Model,
}

fn a5_zero_shot() -> Result<(Verdict, ConstantSpeedModels)> {
    let start = Instant::now();
    let cfg = ScenarioConfig::default();
    let family = training_family(FamilySpeed::Constant { speed: 1.0 }, DEFAULT_SPACING)?;
    let data = collect_mpc_dataset(&family, &cfg.vehicle, &cfg.mpc, &cfg.collect)?;
    let (model, _) = train(&data, &cfg.train)?;
    let course = cfg.path.build()?;
    let mut mpc = MpcController::new(cfg.mpc.clone(), cfg.vehicle)?;
    let mut nn = NnController::new(model.clone());
    let mpc_traces = run_repetitions(&cfg, &course, &mut mpc)?;
    let nn_traces = run_repetitions(&cfg, &course, &mut nn)?;
    let secs = start.elapsed().as_secs_f64();
    let m = evaluate(&mpc_traces, &course)?;
    let n = evaluate(&nn_traces, &course)?;
    let laps = nn_traces.iter().all(|t| t.completed());
    let pass = laps && n.mean <= A5_MEAN_RATIO * m.mean && n.max < A5_MAX_ERROR && secs < A5_MAX_SECONDS;
    let v = Verdict {
        pass,
        detail: format!(
            "nn mean {:.4} m vs mpc {:.4} m (ratio {:.2}), nn max {:.4} m, {} reps, {secs:.1} s",
            n.mean,
            m.mean,
            n.mean / m.mean,
            n.max,
            nn_traces.len()
        ),
    };
    Ok((v, ConstantSpeedModels { cfg, course, mpc_model: model }))
}

fn a6_multi_speed() -> Result<Verdict> {
    let cfg = ScenarioConfig {
        path: PathSpec::multi_speed_course(),
        ..Default::default()
    };
    let family = training_family(FamilySpeed::multi_speed(), DEFAULT_SPACING)?;
    let data = collect_mpc_dataset(&family, &cfg.vehicle, &cfg.mpc, &cfg.collect)?;
    let (model, _) = train(&data, &cfg.train)?;
    let course = cfg.path.build()?;
    let traces = run_repetitions(&cfg, &course, &mut NnController::new(model))?;
    let fast: Vec<f64> = traces
        .iter()
        .flat_map(|t| &t.records)
        .filter(|r| course.samples()[r.ref_idx].v >= A6_FAST_SPEED - 1e-9)
        .map(|r| r.truth.v)
        .collect();
    let (lo, hi) = fast.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let speed_ok = !fast.is_empty()
        && traces.iter().all(|t| t.completed())
        && fast.iter().all(|v| (v - A6_FAST_SPEED).abs() <= A6_SPEED_TOL);

    // the HIL pathway: ingest a recording, train, drive the same course
    let (hil, _) = ingest_hil_recording(&fixture("hil_multi_speed.csv"))?;
    let tagged = hil.samples().iter().all(|s| s.source == Source::Hil);
    let (hil_model, history) = train(&hil, &cfg.train)?;
    let hil_traces = run_repetitions(&cfg, &course, &mut NnController::named(hil_model, "nn_hil"))?;
    let hil_summary = evaluate(&hil_traces, &course)?;
    let structural = tagged
        && history.iter().all(|h| h.train.is_finite())
        && hil_traces.len() == cfg.repetitions
        && hil_traces.iter().all(|t| !t.records.is_empty() && t.records.iter().all(|r| r.truth.is_finite()))
        && hil_summary.mean.is_finite();
    verdict(
        speed_ok && structural,
        format!(
            "mpc-trained nn speed on v_r=2 points in [{lo:.3}, {hi:.3}] ({} records); hil pathway ran {} reps on {} samples, mean {:.4} m",
            fast.len(),
            hil_traces.len(),
            hil.len(),
            hil_summary.mean
        ),
    )
}

fn trace_bytes(trace: &RunTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    trace.write_csv_to(&mut buf)?;
    Ok(buf)
}

fn a7_determinism(models: &ConstantSpeedModels) -> Result<Verdict> {
    let mut cfg = models.cfg.clone();
    cfg.sensors.mode = SensorMode::Noisy;
    cfg.seed = 7;
    let mut identical = true;
    let mut files = 0;
    for rep in 0..2 {
        let mut mpc = MpcController::new(cfg.mpc.clone(), cfg.vehicle)?;
        let a = trace_bytes(&run_scenario(&cfg, &models.course, &mut mpc, rep)?)?;
        let b = trace_bytes(&run_scenario(&cfg, &models.course, &mut mpc, rep)?)?;
        let mut nn = NnController::new(models.mpc_model.clone());
        let c = trace_bytes(&run_scenario(&cfg, &models.course, &mut nn, rep)?)?;
        let d = trace_bytes(&run_scenario(&cfg, &models.course, &mut NnController::new(models.mpc_model.clone()), rep)?)?;
        identical &= a == b && c == d;
        files += 4;
    }
    // the whole collect and train pipeline too
    let family = training_family(FamilySpeed::Constant { speed: 1.0 }, DEFAULT_SPACING)?;
    let retrained = train(&collect_mpc_dataset(&family, &cfg.vehicle, &cfg.mpc, &cfg.collect)?, &cfg.train)?.0;
    let same_model = model_to_string(&retrained)? == model_to_string(&models.mpc_model)?;
    verdict(
        identical && same_model,
        format!("{files} trace files compared byte for byte, retrained model identical: {same_model}"),
    )
}

fn a8_ekf_speed() -> Result<Verdict> {
    let p = VehicleParams::default();
    let noise = NoiseConfig::default();
    let u = Command::new(A8_STEERING, A8_THROTTLE);
    let v_true = A8_THROTTLE * p.speed_noload;
    let plant_dt = 0.01;
    let (mut worst_at, mut worst_rms, mut peak): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = 0;
    for seed in 0..A8_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos_noise = Normal::new(0.0, noise.position_std).expect("valid std");
        let head_noise = Normal::new(0.0, noise.heading_std).expect("valid std");
        let mut truth = VehicleState::new(0.0, 0.0, 0.0, v_true);
        let guess = VehicleState { v: v_true * (1.0 + A8_INITIAL_ERROR), ..truth };
        let mut ekf = EkfState::with_std(guess, [0.02, 0.02, 0.01, 0.5 * v_true]);
        let mut at_settle = f64::NAN;
        let (mut sum_sq, mut count) = (0.0, 0usize);
        let steps = (A8_DURATION / plant_dt).round() as usize;
        let settle_step = (A8_SETTLE_BY / plant_dt).round() as usize;
        let hold_step = (A8_HOLD_UNTIL / plant_dt).round() as usize;
        for k in 1..=steps {
            truth = step(&truth, &u, plant_dt, &p)?;
            ekf = ekf_predict(&ekf, &u, plant_dt, &p, &noise)?;
            // heading every plant step (100 Hz), position every tenth (10 Hz)
            ekf = ekf_update_heading(&ekf, truth.theta + head_noise.sample(&mut rng), &noise)?.0;
            if k % 10 == 0 {
                let z = (truth.x + pos_noise.sample(&mut rng), truth.y + pos_noise.sample(&mut rng));
                ekf = ekf_update_position(&ekf, z, &noise)?.0;
            }
            let err = (ekf.mean.v - truth.v).abs() / truth.v;
            if k == settle_step {
                at_settle = err;
            }
            if (settle_step..=hold_step).contains(&k) {
                sum_sq += err * err;
                count += 1;
            }
            if k >= settle_step {
                peak = peak.max(err);
            }
        }
        let rms = (sum_sq / count as f64).sqrt();
        worst_at = worst_at.max(at_settle);
        worst_rms = worst_rms.max(rms);
        if !(at_settle <= A8_REL_TOL && rms <= A8_REL_TOL) {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!(
            "{failures}/{A8_SEEDS} seeds failed; worst relative speed error at {A8_SETTLE_BY} s {worst_at:.4}, \
             worst rms over [{A8_SETTLE_BY}, {A8_HOLD_UNTIL}] s {worst_rms:.4} \
             (instantaneous peak up to {A8_DURATION} s, not graded: {peak:.4})"
        ),
    )
}

fn a9_trait_transfer(models: &ConstantSpeedModels) -> Result<Verdict> {
    let (hil, _) = ingest_hil_recording(&fixture("hil_constant_speed.csv"))?;
    let (hil_model, _) = train(&hil, &models.cfg.train)?;
    let compare = |mode: SensorMode| -> Result<(f64, f64, f64, f64)> {
        let mut cfg = models.cfg.clone();
        cfg.sensors.mode = mode;
        let mpc_nn = run_repetitions(&cfg, &models.course, &mut NnController::new(models.mpc_model.clone()))?;
        let hil_nn = run_repetitions(&cfg, &models.course, &mut NnController::named(hil_model.clone(), "nn_hil"))?;
        Ok((
            evaluate(&mpc_nn, &models.course)?.mean,
            evaluate(&hil_nn, &models.course)?.mean,
            mean_tv(&mpc_nn),
            mean_tv(&hil_nn),
        ))
    };
    let (m_err, h_err, m_tv, h_tv) = compare(SensorMode::Noisy)?;
    // with exact sensing both policies' steering is dominated by the course
    // curvature; reported for reference only
    let (tm_err, th_err, tm_tv, th_tv) = compare(SensorMode::Truth)?;
    verdict(
        m_err <= h_err && h_tv < m_tv,
        format!(
            "noisy sensing: mean error mpc-nn {m_err:.4} m <= hil-nn {h_err:.4} m, steering TV hil-nn {h_tv:.2} < mpc-nn {m_tv:.2} \
             (exact sensing, not graded: errors {tm_err:.4}/{th_err:.4} m, TV {tm_tv:.2}/{th_tv:.2})"
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, &str, Result<Verdict>)> = Vec::new();
    results.push(("A1", "dynamics circle radius", a1_circle_radius()));
    results.push(("A2", "error-state norm preservation", a2_norm_preservation()));
    results.push(("A3", "jacobian and gradient oracles", a3_oracles()));
    results.push(("A4", "mpc closed-loop contraction", a4_mpc_contraction()));
    let models = match a5_zero_shot() {
        Ok((v, m)) => {
            results.push(("A5", "zero-shot generalization", Ok(v)));
            Some(m)
        }
        Err(e) => {
            results.push(("A5", "zero-shot generalization", Err(e)));
            None
        }
    };
    results.push(("A6", "multi-speed tracking", a6_multi_speed()));
    match &models {
        Some(m) => results.push(("A7", "determinism", a7_determinism(m))),
        None => results.push(("A7", "determinism", verdict(false, "skipped: A5 produced no model".into()))),
    }
    results.push(("A8", "ekf speed estimation", a8_ekf_speed()));
    match &models {
        Some(m) => results.push(("A9", "trait transfer", a9_trait_transfer(m))),
        None => results.push(("A9", "trait transfer", verdict(false, "skipped: A5 produced no model".into()))),
    }

    let mut failed = 0;
    for (id, name, result) in &results {
        let (pass, detail) = match result {
            Ok(v) => (v.pass, v.detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{id} {name:<32} {} {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
