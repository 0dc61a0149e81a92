//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line
//! (straight to stderr, so it shows even when output is captured); the
//! test fails if any criterion does.
//!
//! Everything runs from one test function so the wall-clock budgets are
//! not skewed by other tests competing for cores.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use facectl::animation::{make_synthetic_clips, sample_clip, sample_count, AnimationClip};
use facectl::control_space::idx;
use facectl::curve::{BezierSegment, Interp, Keyframe, Point, Track, TIME_TOLERANCE};
use facectl::dataset::{self, assign_splits, build_in_memory, BuildConfig, Record, Split, SplitLevel};
use facectl::eval::{self, EvalReport, LookupPredictor, NearestNeighbor, RandomControls, RandomTraining, TestCase};
use facectl::render::{FaceGeometry, Frame};
use facectl::similarity::{ssim, SsimParams, Window};
use facectl::{ControlRegistry, ControlVector, Exec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn line(n: u32, title: &str, outcome: &Outcome, elapsed: Duration) {
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let text = format!(
        "[{tag}] criterion {n}: {title} ({:.1}s) {detail}\n",
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(text.as_bytes());
}

fn within(budget: Duration, elapsed: Duration) -> Result<(), String> {
    if elapsed < budget {
        Ok(())
    } else {
        Err(format!(
            "took {:.1}s, budget {:.0}s",
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        ))
    }
}

// ---- 1 --------------------------------------------------------------------

fn random_segment(rng: &mut ChaCha8Rng) -> BezierSegment {
    let t0 = rng.gen_range(0.0..10.0);
    let dt = rng.gen_range(0.01..5.0);
    let p0 = Point::new(t0, rng.gen_range(-2.0..2.0));
    let p3 = Point::new(t0 + dt, rng.gen_range(-2.0..2.0));
    // handle times anywhere in the span keep time monotone
    let p1 = Point::new(t0 + rng.gen_range(0.0..=1.0) * dt, rng.gen_range(-3.0..3.0));
    let p2 = Point::new(t0 + rng.gen_range(0.0..=1.0) * dt, rng.gen_range(-3.0..3.0));
    BezierSegment::new(p0, p1, p2, p3).expect("random monotone segment")
}

fn oracle_linear(keys: &[(f64, f64)], t: f64) -> f64 {
    if t <= keys[0].0 {
        return keys[0].1;
    }
    for w in keys.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if t <= t1 {
            let a = (t1 - t) / (t1 - t0);
            return a * v0 + (1.0 - a) * v1;
        }
    }
    keys[keys.len() - 1].1
}

fn oracle_step(keys: &[(f64, f64)], t: f64) -> f64 {
    keys.iter().rev().find(|k| k.0 <= t).unwrap_or(&keys[0]).1
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_identity = 0.0f64;
    let mut worst_residual = 0.0f64;
    for _ in 0..1000 {
        let s = random_segment(&mut rng);
        let e0 = s.eval(0.0).unwrap();
        let e1 = s.eval(1.0).unwrap();
        let mid = s.eval(0.5).unwrap();
        let mt = (s.p0.t + 3.0 * s.p1.t + 3.0 * s.p2.t + s.p3.t) / 8.0;
        let mv = (s.p0.v + 3.0 * s.p1.v + 3.0 * s.p2.v + s.p3.v) / 8.0;
        for d in [
            e0.t - s.p0.t,
            e0.v - s.p0.v,
            e1.t - s.p3.t,
            e1.v - s.p3.v,
            mid.t - mt,
            mid.v - mv,
        ] {
            worst_identity = worst_identity.max(d.abs());
        }
        for _ in 0..10 {
            let t = rng.gen_range(s.p0.t..=s.p3.t);
            let u = s.solve_time(t, TIME_TOLERANCE).map_err(|e| e.to_string())?;
            ensure!((0.0..=1.0).contains(&u), "solver returned u = {u}");
            worst_residual = worst_residual.max((s.eval(u).unwrap().t - t).abs());
        }
    }
    ensure!(
        worst_identity <= 1e-12,
        "endpoint/midpoint identity off by {worst_identity:e}"
    );
    ensure!(worst_residual <= 1e-9, "time inversion residual {worst_residual:e}");

    let mut worst_grid = 0.0f64;
    for trial in 0..200 {
        let n = rng.gen_range(2..=8);
        let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let pairs: Vec<(f64, f64)> = times.iter().map(|&t| (t, rng.gen_range(-1.0..2.0))).collect();
        let mode = if trial % 2 == 0 { Interp::Linear } else { Interp::Step };
        let keys = pairs.iter().map(|&(t, v)| Keyframe::new(t, v, mode)).collect();
        let (track, _) = Track::new(0, keys).map_err(|e| e.to_string())?;
        let mut grid: Vec<f64> = (0..=20_000).map(|i| -1.0 + 12.0 * i as f64 / 20_000.0).collect();
        grid.extend(pairs.iter().map(|p| p.0));
        for t in grid {
            let want = match mode {
                Interp::Linear => oracle_linear(&pairs, t),
                _ => oracle_step(&pairs, t),
            };
            worst_grid = worst_grid.max((track.eval(t) - want).abs());
        }
    }
    ensure!(
        worst_grid <= 1e-9,
        "linear/step off the dense-grid oracle by {worst_grid:e}"
    );
    Ok(format!(
        "identity err {worst_identity:.1e}, inversion residual {worst_residual:.1e}, grid err {worst_grid:.1e}"
    ))
}

// ---- 2 --------------------------------------------------------------------

fn random_frame(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Frame {
    let pixels = (0..w * h).map(|_| rng.gen()).collect();
    Frame::from_pixels(w, h, pixels).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let modes = [SsimParams::default(), SsimParams::global()];
    let p = SsimParams::default();
    ensure!(p.k1 == 0.01 && p.k2 == 0.03 && p.l == 255.0, "constants changed: {p:?}");
    ensure!(
        p.window == Window::Sliding { size: 8, stride: 8 },
        "default window changed"
    );

    let mut worst_self = 0.0f64;
    for _ in 0..20 {
        let x = random_frame(&mut rng, 96, 64);
        for m in &modes {
            worst_self = worst_self.max((ssim(&x, &x, m).unwrap() - 1.0).abs());
        }
    }
    ensure!(worst_self <= 1e-12, "ssim(x, x) off by {worst_self:e}");

    for _ in 0..100 {
        let x = random_frame(&mut rng, 64, 64);
        let y = random_frame(&mut rng, 64, 64);
        for m in &modes {
            let (a, b) = (ssim(&x, &y, m).unwrap(), ssim(&y, &x, m).unwrap());
            ensure!(a == b, "asymmetric: {a} vs {b}");
        }
    }

    let c1 = (0.01f64 * 255.0).powi(2);
    let analytic = c1 / (255.0f64.powi(2) + c1);
    let white = Frame::filled(64, 64, 255);
    let black = Frame::filled(64, 64, 0);
    for m in &modes {
        let got = ssim(&white, &black, m).unwrap();
        ensure!(
            (got - analytic).abs() <= 1e-9,
            "constant pair gives {got}, expected {analytic}"
        );
    }
    ensure!((analytic - 9.999e-5).abs() < 1e-8, "analytic value {analytic}");
    Ok(format!("self err {worst_self:.1e}, constant pair {analytic:.6e}"))
}

// ---- 3 --------------------------------------------------------------------

fn criterion_3(dir: &Path) -> Outcome {
    let reg = ControlRegistry::standard();
    let clips = make_synthetic_clips(50, 3, &reg);
    let cfg = BuildConfig {
        seed: 3,
        ..Default::default()
    };
    ensure!(
        cfg.timestep == 0.02 && cfg.theta == 0.99 && cfg.resolution == 512,
        "defaults changed: {cfg:?}"
    );
    let root = dir.join("c3");
    let m = dataset::build(&clips, &cfg, &FaceGeometry::default(), &reg, &root, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let report = dataset::verify(&root, Exec::Parallel).map_err(|e| e.to_string())?;
    ensure!(
        report.records == m.records.len(),
        "verified {} of {} records",
        report.records,
        m.records.len()
    );
    ensure!(report.is_clean(), "{} violations: {report:?}", report.violations());
    Ok(format!("{} records from 50 clips, 0 violations", report.records))
}

// ---- 4 --------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let reg = ControlRegistry::standard();
    ensure!(
        sample_count(2.0, 0.02) == 101,
        "count law gives {}",
        sample_count(2.0, 0.02)
    );
    let (tr, _) = Track::new(
        idx::JP,
        vec![
            Keyframe::new(0.0, 1.0, Interp::Linear),
            Keyframe::new(2.0, 0.0, Interp::Linear),
        ],
    )
    .unwrap();
    let clip = AnimationClip::new("two_seconds", 2.0, vec![tr], BTreeMap::new()).unwrap();
    let seq = sample_clip(&clip, 0.02, &reg).map_err(|e| e.to_string())?;
    ensure!(
        seq.samples.len() == 101,
        "2.0 s clip gives {} samples",
        seq.samples.len()
    );

    let mut records: Vec<Record> = (0..100)
        .map(|i| Record {
            id: format!("r{i:03}"),
            image: String::new(),
            clip: "c".into(),
            t: 0.0,
            split: Split::Test,
            values: reg.neutral_vector(),
        })
        .collect();
    assign_splits(&mut records, 0.8, SplitLevel::Record, 4);
    let train = records.iter().filter(|r| r.split == Split::Train).count();
    ensure!(
        train == 80 && records.len() - train == 20,
        "split {train}/{}",
        records.len() - train
    );
    Ok("101 samples; 80/20".into())
}

// ---- 5 --------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let reg = ControlRegistry::standard();
    let jp = [0.0, 0.25, 0.5, 0.75, 1.0];
    let bil = [0.125, 0.375, 0.5, 0.625, 0.875];
    let np = [-0.25, 0.0, 0.125, 0.25, 0.5];
    let vectors: Vec<ControlVector> = (0..5)
        .map(|i| {
            let mut v = reg.neutral_vector();
            v.set(idx::JP, jp[i]);
            v.set(idx::BIL, bil[i]);
            v.set(idx::NP, np[i]);
            v
        })
        .collect();
    let s = dataset::channel_stats(&vectors, &reg).map_err(|e| e.to_string())?;
    // hand arithmetic: JP mean 2.5/5, var 0.625/5; BIL and NP deviations ±0.375, ±0.125, 0
    let expect = [
        (idx::JP, 0.5, 0.125f64.sqrt(), 0.0, 1.0),
        (idx::BIL, 0.5, 0.25, 0.125, 0.875),
        (idx::NP, 0.125, 0.25, -0.25, 0.5),
    ];
    for (i, mean, std, min, max) in expect {
        let got = &s[i];
        ensure!(
            (got.mean, got.std, got.min, got.max) == (mean, std, min, max),
            "{}: got {:?}",
            got.abbrev,
            (got.mean, got.std, got.min, got.max)
        );
    }
    for (i, st) in s.iter().enumerate() {
        if [idx::JP, idx::BIL, idx::NP].contains(&i) {
            continue;
        }
        ensure!(
            st.mean == reg.channel(i).neutral && st.std == 0.0,
            "{} not at rest",
            st.abbrev
        );
    }

    // a dataset built from a clip with no tracks is all neutral
    let still = AnimationClip::new("still", 2.0, vec![], BTreeMap::new()).unwrap();
    let cfg = BuildConfig {
        resolution: 64,
        ..Default::default()
    };
    let ds =
        build_in_memory(&[still], &cfg, &FaceGeometry::default(), &reg, Exec::Parallel).map_err(|e| e.to_string())?;
    let s = dataset::channel_stats(ds.records.iter().map(|r| &r.values), &reg).map_err(|e| e.to_string())?;
    ensure!(s.len() == 30, "{} stat rows", s.len());
    for (i, st) in s.iter().enumerate() {
        ensure!(
            st.mean == reg.channel(i).neutral && st.std == 0.0,
            "{}: mean {} std {}",
            st.abbrev,
            st.mean,
            st.std
        );
    }
    Ok("fixture exact; neutral dataset at rest on all 30 channels".into())
}

// ---- 6 --------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let r = EvalReport::from_errors("synthetic", &[0.0, 0.0, 0.0, 0.4]).map_err(|e| e.to_string())?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    ensure!(
        close(r.mae, 0.1) && close(r.sd, 0.2) && close(r.sem, 0.1),
        "MAE {} SD {} SEM {}",
        r.mae,
        r.sd,
        r.sem
    );
    ensure!(
        close(r.ci95_lo, -0.096) && close(r.ci95_hi, 0.296),
        "CI [{}, {}]",
        r.ci95_lo,
        r.ci95_hi
    );
    let (lo, hi) = eval::ci95(0.0114, 0.0005);
    ensure!(
        (lo - 0.0105).abs() <= 5e-4 && (hi - 0.0123).abs() <= 5e-4,
        "CI [{lo}, {hi}] vs [0.0105, 0.0123]"
    );
    Ok(format!("CI [{lo:.5}, {hi:.5}] vs reference [0.0105, 0.0123]"))
}

// ---- 7 --------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let reg = ControlRegistry::standard();
    let cfg = BuildConfig {
        seed: 7,
        ..Default::default()
    };
    let clips = make_synthetic_clips(4, 7, &reg);
    let mut ds =
        build_in_memory(&clips, &cfg, &FaceGeometry::default(), &reg, Exec::Parallel).map_err(|e| e.to_string())?;
    ensure!(ds.records.len() >= 500, "only {} records", ds.records.len());
    ds.records.truncate(500);
    ds.frames.truncate(500);
    assign_splits(&mut ds.records, cfg.split_fraction, SplitLevel::Record, cfg.seed);

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, f) in ds.records.iter().zip(&ds.frames) {
        let case = TestCase::new(r.id.clone(), f.clone(), r.values);
        match r.split {
            Split::Train => train.push(case),
            Split::Test => test.push(case),
        }
    }
    ensure!(
        train.len() == 400 && test.len() == 100,
        "split {}/{}",
        train.len(),
        test.len()
    );

    let rc = RandomControls::new(reg.clone(), 7);
    let rt = RandomTraining::new(train.iter().map(|c| c.truth).collect(), 7).map_err(|e| e.to_string())?;
    let nn = NearestNeighbor::new(train).map_err(|e| e.to_string())?;
    let perfect = LookupPredictor::perfect(&test);
    let reports = eval::compare(&[&rc, &rt, &nn, &perfect], &test, &reg, Exec::Parallel).map_err(|e| e.to_string())?;
    let (rc, rt, nn, perfect) = (&reports[0], &reports[1], &reports[2], &reports[3]);
    ensure!(
        nn.mae < rt.mae && nn.mae < rc.mae,
        "NN {} RT {} RC {}",
        nn.mae,
        rt.mae,
        rc.mae
    );
    ensure!(perfect.mae == 0.0, "perfect predictor MAE {}", perfect.mae);
    Ok(format!(
        "MAE NN {:.4} < RT {:.4}, RC {:.4}; perfect 0",
        nn.mae, rt.mae, rc.mae
    ))
}

// ---- 8 --------------------------------------------------------------------

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_8(dir: &Path) -> Outcome {
    let reg = ControlRegistry::standard();
    let cfg = BuildConfig {
        seed: 8,
        ..Default::default()
    };
    let clips = make_synthetic_clips(3, 8, &reg);
    let geo = FaceGeometry::default();
    let mut trees = Vec::new();
    for (name, threads, exec) in [
        ("t1", 1, Exec::Parallel),
        ("t4", 4, Exec::Parallel),
        ("seq", 1, Exec::Sequential),
    ] {
        let root = dir.join(name);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| dataset::build(&clips, &cfg, &geo, &reg, &root, exec))
            .map_err(|e| e.to_string())?;
        trees.push(tree(&root));
    }
    let files = trees[0].len();
    ensure!(
        trees[0].contains_key(Path::new(dataset::MANIFEST_FILE)),
        "no manifest written"
    );
    ensure!(trees[0] == trees[1], "1 vs 4 threads differ");
    ensure!(trees[0] == trees[2], "parallel vs sequential differ");
    Ok(format!(
        "{files} files byte-identical across 1 thread, 4 threads, sequential"
    ))
}

#[test]
fn primary_acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let secs = Duration::from_secs;
    type Run<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, Option<Duration>, Run)> = vec![
        (1, "interpolation kernels", Some(secs(10)), Box::new(criterion_1)),
        (2, "SSIM", Some(secs(10)), Box::new(criterion_2)),
        (
            3,
            "alignment audit, 50 clips at 512x512",
            Some(secs(300)),
            Box::new(|| criterion_3(tmp.path())),
        ),
        (4, "count law and split", None, Box::new(criterion_4)),
        (5, "statistics", None, Box::new(criterion_5)),
        (6, "evaluation arithmetic", None, Box::new(criterion_6)),
        (
            7,
            "baseline ordering, 500 records",
            Some(secs(120)),
            Box::new(criterion_7),
        ),
        (
            8,
            "determinism across thread counts",
            None,
            Box::new(|| criterion_8(tmp.path())),
        ),
    ];
    let mut failed = Vec::new();
    for (n, title, budget, run) in &criteria {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(b)) = (&outcome, budget) {
            if let Err(e) = within(*b, elapsed) {
                outcome = Err(e);
            }
        }
        line(*n, title, &outcome, elapsed);
        if outcome.is_err() {
            failed.push(*n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
