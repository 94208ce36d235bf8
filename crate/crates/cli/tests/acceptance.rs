//! Acceptance gate: one PASS/FAIL line per criterion, with the measured
//! values and the pinned tolerances. Exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::support::{
    fuzz_input, jittered_waypoints, oracle_aggregate, oracle_report_csv, oracle_score, oracle_upsample,
    random_coordinate, random_path, random_rater_score, OracleParams, VALID_TRAJECTORY_TEXT,
};
use common::{code, fixture, fixture_pairs, stderr, stdout, trajkit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajkit::grpo::gradcheck::DEFAULT_TOLERANCE;
use trajkit::grpo::{
    collect_groups, group_advantages, kl_estimate, surrogate_loss_and_grad, toy_instance, train, GrpoConfig,
    PolicyParams, PolicyShape,
};
use trajkit::rfs::{aggregate_rfs, score_prediction, RaterSelect, RfsConfig};
use trajkit::schema::{
    parse_trajectory_text, serialize_trajectory_text, validate_annotation, PredictionOutput, RatedTrajectory,
    ScenarioFrame, TextErrorKind,
};
use trajkit::synth::{generate, prefit_policy, split, SynthSpec};
use trajkit::traj::{resample_4hz_to_1hz, upsample_spline, upsample_spline_with, SplineOptions};
use trajkit::{Execution, Trajectory, Waypoint};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn wp(w: &[[f64; 2]; 5]) -> [Waypoint; 5] {
    w.map(|p| Waypoint::new(p[0], p[1]))
}

fn rated(path: &[[f64; 2]], score: f64) -> RatedTrajectory {
    RatedTrajectory::new(Trajectory::from_xy(path, 4).unwrap(), score).unwrap()
}

fn spline_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut knot_err, mut oracle_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let w: [[f64; 2]; 5] = std::array::from_fn(|_| [rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0)]);
        for anchor in [true, false] {
            let dense = upsample_spline_with(&wp(&w), SplineOptions { anchor_origin: anchor }).unwrap();
            for (a, b) in resample_4hz_to_1hz(&dense).unwrap().iter().zip(&w) {
                knot_err = knot_err.max((a.x - b[0]).abs()).max((a.y - b[1]).abs());
            }
            for (p, o) in dense.points().iter().zip(oracle_upsample(&w, anchor)) {
                oracle_err = oracle_err.max((p.x - o[0]).abs()).max((p.y - o[1]).abs());
            }
        }
    }
    let mut linear_err = 0.0f64;
    for _ in 0..100 {
        let (vx, vy) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let line: Vec<Waypoint> = (1..=5).map(|s| Waypoint::new(vx * s as f64, vy * s as f64)).collect();
        for (k, p) in upsample_spline(&line).unwrap().points().iter().enumerate() {
            let t = (k + 1) as f64 * 0.25;
            linear_err = linear_err.max((p.x - vx * t).abs()).max((p.y - vy * t).abs());
        }
    }
    ensure!(knot_err <= 1e-9, "knot error {knot_err:e} > 1e-9");
    ensure!(linear_err <= 1e-9, "linear error {linear_err:e} > 1e-9");
    ensure!(oracle_err <= 1e-9, "oracle disagreement {oracle_err:e} > 1e-9");
    Ok(format!(
        "knots {knot_err:.1e}, linear {linear_err:.1e}, oracle {oracle_err:.1e} on 1000 inputs (tol 1e-9)"
    ))
}

fn rfs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let raters: Vec<_> = (0..3).map(|_| (random_path(&mut rng), random_rater_score(&mut rng))).collect();
        let target = rng.random_range(0..3);
        let w = jittered_waypoints(&mut rng, &raters[target].0);
        let p = OracleParams { max_mode: i % 2 == 1, ..OracleParams::default() };
        let cfg = RfsConfig {
            rater_select: if p.max_mode { RaterSelect::Max } else { RaterSelect::Nearest },
            ..RfsConfig::default()
        };
        let rs: Vec<_> = raters.iter().map(|(t, s)| rated(t, *s)).collect();
        let out = if i % 3 == 0 {
            PredictionOutput::RawText(serialize_trajectory_text(&wp(&w)).unwrap())
        } else {
            PredictionOutput::Waypoints(wp(&w))
        };
        let got = score_prediction(&out, &rs, &cfg).unwrap().score;
        worst = worst.max((got - oracle_score(&oracle_upsample(&w, true), &raters, &p)).abs());
    }
    ensure!(worst <= 1e-12, "max disagreement {worst:e} > 1e-12");

    let cfg = RfsConfig::default();
    let mut exact = 0;
    for _ in 0..500 {
        let path = random_path(&mut rng);
        let knots: [[f64; 2]; 5] = std::array::from_fn(|i| path[4 * i + 3]);
        let shared = oracle_upsample(&knots, true);
        let s = rng.random_range(4.0..=10.0);
        let far: Vec<_> = shared.iter().map(|p| [p[0] + 1e5, p[1]]).collect();
        let rs = vec![rated(&shared, s), rated(&far, 10.0), rated(&far, 9.0)];
        let inside = score_prediction(&PredictionOutput::Waypoints(wp(&knots)), &rs, &cfg).unwrap();
        ensure!(inside.in_trust_region && inside.score == s, "in-region score {} != rater {s}", inside.score);
        let away = knots.map(|p| [p[0] + 3e4, p[1] + 3e4]);
        let floor = score_prediction(&PredictionOutput::Waypoints(wp(&away)), &rs, &cfg).unwrap().score;
        let text = score_prediction(&PredictionOutput::RawText("no plan".into()), &rs, &cfg).unwrap().score;
        ensure!(floor == 4.0 && text == 4.0, "floor cases gave {floor} and {text}");
        exact += 1;
    }
    Ok(format!(
        "max |pipeline - oracle| {worst:.1e} on 10000 frames (tol 1e-12); {exact} floor and in-region cases exact"
    ))
}

fn aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..1000 {
        let n_cats = rng.random_range(1..9);
        let pairs: Vec<(String, f64)> = (0..rng.random_range(1..80))
            .map(|_| (format!("c{}", rng.random_range(0..n_cats)), rng.random_range(4.0..=10.0)))
            .collect();
        let agg = aggregate_rfs(&pairs).map_err(|e| e.to_string())?;
        let (rows, final_rfs) = oracle_aggregate(&pairs);
        ensure!(agg.final_rfs == final_rfs, "final {} != oracle {final_rfs}", agg.final_rfs);
        let got: Vec<_> = agg.per_category.iter().map(|c| (c.category.clone(), c.n, c.mean)).collect();
        ensure!(got == rows, "per-category rows differ");
    }
    let example = aggregate_rfs(&[("A", 8.0), ("A", 10.0), ("B", 4.0)]).unwrap().final_rfs;
    ensure!(example == 6.5, "worked example gave {example}");
    Ok("1000 multisets bit-identical to group-by oracle; {A:[8,10], B:[4]} -> 6.5".into())
}

fn grammar() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let prev_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut crashes = 0;
    for _ in 0..100_000 {
        let s = fuzz_input(&mut rng);
        if catch_unwind(AssertUnwindSafe(|| {
            let _ = parse_trajectory_text(&s);
            let _ = validate_annotation(&s);
        }))
        .is_err()
        {
            crashes += 1;
        }
    }
    std::panic::set_hook(prev_hook);
    ensure!(crashes == 0, "{crashes} crashes in 100000 fuzz inputs");

    for _ in 0..10_000 {
        let w: [Waypoint; 5] = std::array::from_fn(|_| Waypoint::new(random_coordinate(&mut rng), random_coordinate(&mut rng)));
        let back = parse_trajectory_text(&serialize_trajectory_text(&w).unwrap()).map_err(|e| e.to_string())?;
        ensure!(
            back.iter().zip(&w).all(|(a, b)| a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits()),
            "round trip changed {w:?}"
        );
    }

    let kind = |s: &str| parse_trajectory_text(s).map(|_| ()).map_err(|e| e.kind);
    let fence = kind(&format!("```\n{VALID_TRAJECTORY_TEXT}\n```"));
    let count = kind("[1, 0], [2, 0], [3, 0], [4, 0]");
    let suffix = kind(&format!("{VALID_TRAJECTORY_TEXT} as planned"));
    ensure!(fence == Err(TextErrorKind::ExpectedOpenBracket), "fence: {fence:?}");
    ensure!(count == Err(TextErrorKind::TooFewPairs { found: 4 }), "count: {count:?}");
    ensure!(suffix == Err(TextErrorKind::TrailingInput), "suffix: {suffix:?}");
    Ok("0 crashes in 100000 fuzz inputs; 10000 bit-exact round trips; fence, count, suffix rejected".into())
}

fn gradient() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let r = toy_instance(seed).check().map_err(|e| e.to_string())?;
        worst = worst.max(r.max_rel_error);
    }
    ensure!(worst <= DEFAULT_TOLERANCE, "max relative error {worst:e} > {DEFAULT_TOLERANCE:e}");
    Ok(format!("max relative error {worst:.2e} over seeds 0-9 (tol 1e-4)"))
}

fn grpo_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut worst_mean, mut worst_std_gap, mut checked) = (0.0f64, 0.0f64, 0);
    for _ in 0..2000 {
        let g = rng.random_range(2..33);
        let rewards: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
        let n = g as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        let a = group_advantages(&rewards);
        let am = a.iter().sum::<f64>() / n;
        let asd = (a.iter().map(|x| (x - am).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(am.abs());
        if std >= 1e-2 {
            ensure!(asd <= 1.0 + 1e-12, "advantage std {asd} above 1");
            worst_std_gap = worst_std_gap.max(1.0 - asd);
            checked += 1;
        }
    }
    ensure!(worst_mean <= 1e-9, "advantage mean {worst_mean:e} > 1e-9");
    ensure!(worst_std_gap <= 1e-6, "advantage std off by {worst_std_gap:e}");

    let mut min_kl = f64::INFINITY;
    for _ in 0..100_000 {
        let kl = kl_estimate(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        min_kl = min_kl.min(kl);
    }
    ensure!(min_kl >= 0.0, "k3 went negative: {min_kl}");

    let frames = generate(&SynthSpec { n_scenarios: 8, ..SynthSpec::grpo_task(6) }).unwrap();
    let refs: Vec<&ScenarioFrame> = frames.iter().collect();
    let p = PolicyParams::random(PolicyShape::default(), 0.5, &mut rng);
    let cfg = GrpoConfig { kl_coeff: 0.0, ..GrpoConfig::default() };
    let mut groups = collect_groups(&p, &p, &refs, &cfg, 6, Execution::Sequential).map_err(|e| e.to_string())?;
    for grp in &mut groups {
        let flat = vec![0.55; grp.rollouts.len()];
        for (r, a) in grp.rollouts.iter_mut().zip(group_advantages(&flat)) {
            r.reward = 0.55;
            r.advantage = a;
        }
    }
    let grad = surrogate_loss_and_grad(&p, &groups, &cfg, Execution::Sequential).map_err(|e| e.to_string())?.grad;
    let max_g = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    ensure!(max_g == 0.0, "uniform-reward surrogate gradient {max_g:e}");
    Ok(format!(
        "advantage |mean| {worst_mean:.1e} (tol 1e-9), std gap {worst_std_gap:.1e} on {checked} groups with std >= 1e-2 (tol 1e-6); min k3 {min_kl:.1e}; uniform-reward gradient 0"
    ))
}

fn rl_improves() -> Outcome {
    let seed = 0;
    let frames = generate(&SynthSpec::grpo_task(seed)).map_err(|e| e.to_string())?;
    let (tr, ev) = split(&frames, 63, seed).map_err(|e| e.to_string())?;
    ensure!(tr.len() == 416 && ev.len() == 63, "split {}/{}", tr.len(), ev.len());
    let init = prefit_policy(&tr, PolicyShape::default(), 0.5, 1.0, seed).map_err(|e| e.to_string())?;
    let cfg = GrpoConfig { seed, ..GrpoConfig::default() };
    let out = train(&cfg, &init, &tr, &ev, Execution::Sequential).map_err(|e| e.to_string())?;
    let curve: Vec<f64> = out.eval_rows().map(|r| r.eval_reward.unwrap()).collect();
    ensure!(curve.len() == 21, "expected 21 evaluations, got {}", curve.len());
    let (first, last) = (curve[0], *curve.last().unwrap());
    let worst_drop = curve.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    ensure!(last - first >= 0.3, "gain {:.3} < 0.3", last - first);
    ensure!(last >= 0.9, "final reward {last:.3} < 0.9");
    ensure!(worst_drop <= 0.05, "a 100-step window dropped {worst_drop:.3} > 0.05");
    Ok(format!(
        "eval reward {first:.3} -> {last:.3} over 2000 steps (gain >= 0.3, final >= 0.9); largest window drop {worst_drop:.3} (max 0.05)"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let run = |args: &[&std::ffi::OsStr]| -> Result<std::process::Output, String> {
        let o = trajkit(args);
        if code(&o) != 0 {
            return Err(format!("{:?} exited {}: {}", args, code(&o), stderr(&o)));
        }
        Ok(o)
    };
    let eval_cfg = fixture("evaluate.json");
    let e1 = run(&["evaluate".as_ref(), "--config".as_ref(), eval_cfg.as_os_str()])?;
    let e2 = run(&["evaluate".as_ref(), "--config".as_ref(), eval_cfg.as_os_str()])?;
    ensure!(e1.stdout == e2.stdout, "evaluate output differs between runs");
    let golden = fs::read_to_string(fixture("golden_report.csv")).map_err(|e| e.to_string())?;
    ensure!(stdout(&e1) == golden, "evaluate report differs from the golden file");
    ensure!(oracle_report_csv(&fixture_pairs()) == golden, "golden file differs from the oracle report");

    let cfg = d.join("run.json");
    fs::write(
        &cfg,
        r#"{"synth": {"n_scenarios": 60, "preference_shift": 2.0}, "train": {"holdout": 12, "grpo": {"steps": 20, "batch_frames": 8, "eval_every": 5}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let gen = d.join(format!("gen_{tag}.jsonl"));
        let out = d.join(format!("train_{tag}"));
        run(&["generate".as_ref(), "--config".as_ref(), cfg.as_os_str(), "--seed".as_ref(), "17".as_ref(), "--out".as_ref(), gen.as_os_str()])?;
        run(&["train".as_ref(), "--config".as_ref(), cfg.as_os_str(), "--seed".as_ref(), "17".as_ref(), "--out".as_ref(), out.as_os_str()])?;
        let read = |p: std::path::PathBuf| fs::read(p).map_err(|e| e.to_string());
        outputs.push((read(gen)?, read(out.join("checkpoint.json"))?, read(out.join("metrics.csv"))?));
    }
    ensure!(outputs[0].0 == outputs[1].0, "generate output differs between runs");
    ensure!(outputs[0].1 == outputs[1].1, "train checkpoint differs between runs");
    ensure!(outputs[0].2 == outputs[1].2, "train metrics differ between runs");
    Ok("evaluate, generate and train byte-identical across two runs; golden report matches".into())
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "spline exactness", limit: Some(Duration::from_secs(1)), run: spline_exactness },
        Criterion { id: 2, name: "RFS oracle equivalence", limit: Some(Duration::from_secs(30)), run: rfs_oracle },
        Criterion { id: 3, name: "aggregation", limit: None, run: aggregation },
        Criterion { id: 4, name: "grammar", limit: None, run: grammar },
        Criterion { id: 5, name: "GRPO gradient", limit: Some(Duration::from_secs(120)), run: gradient },
        Criterion { id: 6, name: "GRPO invariants", limit: None, run: grpo_invariants },
        Criterion { id: 7, name: "RL improves reward", limit: Some(Duration::from_secs(300)), run: rl_improves },
        Criterion { id: 8, name: "determinism", limit: None, run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if took > limit => Err(format!("took {:.2} s, limit {} s", took.as_secs_f64(), limit.as_secs())),
            (r, _) => r,
        };
        let budget = c.limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default();
        match result {
            Ok(detail) => println!("criterion {} {}: PASS ({detail}; {:.2} s{budget})", c.id, c.name, took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("criterion {} {}: FAIL ({why}; {:.2} s{budget})", c.id, c.name, took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
