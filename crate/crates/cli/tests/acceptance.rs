//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Every reference value here comes from an oracle written for this
//! file, not from the code under test.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use droploop::baseline::{augment, cross_validate, fold_assignment, gradient, objective, ScoredCondition, SgdConfig};
use droploop::closed_loop::{prediction_rmse, Optimizer, RunLedger, StepTimings, UpdateRecord, LEDGER_SCHEMA};
use droploop::printer::{simulate_print, SimPrinterConfig};
use droploop::surrogate::{expected_improvement_from, kernel, suggest, GpConfig, GpModel, SuggestConfig};
use droploop::vision::{
    combined_loss, geometric_loss, score_image, segment, yield_loss, LabeledSegmentation, LossWeights, SegmentParams,
};
use droploop::{lhs_sample, ParameterSpace, PrintConditions, Raster, Transform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("scoring oracle equivalence", c01_scoring_oracle),
        ("loss bounds and weighted-mean identity", c02_bounds_identity),
        ("dihedral invariance", c03_dihedral),
        ("augmentation count", c04_augmentation_count),
        ("LHS stratification", c05_lhs_strata),
        ("GP correctness", c06_gp),
        ("reference-table suggestion quadrant", c07_table_quadrant),
        ("SGD correctness", c08_sgd),
        ("simulator convergence", c09_convergence),
        ("train-speed ordering", c10_train_ratio),
        ("determinism", c11_determinism),
        ("RMSE arithmetic", c12_rmse),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {:02} {} {name}: {} [{:.2?}]",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed()
        );
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- fixtures

/// Dark disks and bars on a light substrate with a little texture.
fn random_raster(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster {
    let mut img = Raster::filled(w, h, 255).unwrap();
    for _ in 0..rng.random_range(1..8) {
        let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let r = rng.random_range(1.5..(w.min(h) as f64 / 4.0));
        let bar = rng.random_bool(0.25);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if bar { dx.abs() < r && dy.abs() < r / 3.0 } else { dx * dx + dy * dy <= r * r };
                if inside {
                    img.set(x, y, rng.random_range(30..60));
                }
            }
        }
    }
    img
}

fn table1() -> Vec<(PrintConditions, f64)> {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table1.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
            (PrintConditions::new(f[0], f[1], f[2]), f[3])
        })
        .collect()
}

// ---------------------------------------------------------------- 1

/// pi to 20 significant digits as a ratio of integers.
const PI_NUM: i128 = 31_415_926_535_897_932_385;
const PI_DEN: i128 = 10_000_000_000_000_000_000;

/// Enumerates every labelled pixel. A pixel counts as outside its droplet
/// when its squared distance to the centroid exceeds A / pi, decided in
/// exact integer arithmetic after scaling by n^2.
fn oracle_losses(seg: &LabeledSegmentation) -> (f64, f64) {
    let w = seg.width();
    let mut pixels: BTreeMap<u32, Vec<(i128, i128)>> = BTreeMap::new();
    for (i, &l) in seg.labels().iter().enumerate() {
        if l != 0 {
            pixels.entry(l).or_default().push(((i % w) as i128, (i / w) as i128));
        }
    }
    let total = seg.labels().len();
    let labelled: usize = pixels.values().map(Vec::len).sum();
    let yield_ = (total - labelled) as f64 / total as f64;
    if pixels.is_empty() {
        return (1.0, yield_);
    }
    let mut sum = 0.0;
    for px in pixels.values() {
        let n = px.len() as i128;
        let (sx, sy) = px.iter().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
        let outside = px
            .iter()
            .filter(|(x, y)| {
                let (dx, dy) = (n * x - sx, n * y - sy);
                (dx * dx + dy * dy) * PI_NUM > n * n * n * PI_DEN
            })
            .count();
        sum += outside as f64 / n as f64;
    }
    (sum / pixels.len() as f64, yield_)
}

fn c01_scoring_oracle() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(16..=64), rng.random_range(16..=64));
        let seg = segment(&random_raster(&mut rng, w, h), &SegmentParams::default());
        let (g, e) = oracle_losses(&seg);
        if geometric_loss(&seg) != g || yield_loss(&seg) != e {
            mismatches += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(mismatches == 0 && secs < 5.0, format!("{mismatches}/50 mismatches in {secs:.2} s"))
}

// ---------------------------------------------------------------- 2

fn c02_bounds_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut out_of_range = 0;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(4..40), rng.random_range(4..40));
        let k = rng.random_range(0..6u32);
        let labels = (0..w * h).map(|_| if k == 0 { 0 } else { rng.random_range(0..=k) }).collect();
        let seg = LabeledSegmentation::from_labels(w, h, labels).unwrap();
        let (wg, we) = (rng.random_range(0.0..5.0), rng.random_range(0.01..5.0));
        let s = combined_loss(&seg, &LossWeights::new(wg, we).unwrap());
        if ![s.geometric, s.yield_, s.combined].iter().all(|v| (0.0..=1.0).contains(v)) {
            out_of_range += 1;
        }
        worst = worst.max((s.combined - (wg * s.geometric + we * s.yield_) / (wg + we)).abs());
    }
    verdict(
        out_of_range == 0 && worst <= 1e-12,
        format!("{out_of_range} out of range, max identity error {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn c03_dihedral() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (params, w) = (SegmentParams::default(), LossWeights::default());
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s = rng.random_range(16..=64);
        let img = random_raster(&mut rng, s, s);
        let base = score_image(&img, &params, &w);
        for t in Transform::ALL {
            let v = score_image(&img.transformed(t), &params, &w);
            worst = worst.max((v.geometric - base.geometric).abs()).max((v.yield_ - base.yield_).abs());
        }
    }
    verdict(worst <= 1e-9, format!("max deviation {worst:.1e} over 20 fixtures x 7 transforms"))
}

// ---------------------------------------------------------------- 4

fn c04_augmentation_count() -> Verdict {
    let space = ParameterSpace::default();
    let cfg = SimPrinterConfig::default();
    let samples: Vec<_> = lhs_sample(&space, 12, 4)
        .unwrap()
        .into_iter()
        .map(|c| (c, simulate_print(&c, &cfg).unwrap()))
        .collect();
    let set = augment(&samples, &SegmentParams::default(), &LossWeights::default()).unwrap();
    let per_parent = (0..12).all(|p| set.records.iter().filter(|r| r.parent == p).count() == 42);
    verdict(set.len() == 504 && per_parent, format!("{} records from 12 images", set.len()))
}

// ---------------------------------------------------------------- 5

fn c05_lhs_strata() -> Verdict {
    let space = ParameterSpace::default();
    let mut bad = 0;
    for n in [1usize, 5, 12, 50] {
        for seed in 0..100 {
            let pts = lhs_sample(&space, n, seed).unwrap();
            for d in 0..3 {
                let mut hits = vec![0; n];
                for p in &pts {
                    let dim = &space.dims()[d];
                    let u = (p.to_array()[d] - dim.low) / (dim.high - dim.low);
                    hits[((u * n as f64).floor() as usize).min(n - 1)] += 1;
                }
                bad += usize::from(pts.len() != n || hits.iter().any(|h| *h != 1));
            }
        }
    }
    verdict(bad == 0, format!("{bad} of 1200 (n, seed, dimension) cases off-stratum"))
}

// ---------------------------------------------------------------- 6

/// `(1 + sqrt5 + 5/3) exp(-sqrt5)` evaluated with 40-digit arithmetic.
const MATERN_AT_ONE: f64 = 0.523_994_108_831_820_310_592_713_250_76;

fn c06_gp() -> Verdict {
    let k = kernel(&[0.2, 0.5, 0.5], &[1.2, 0.5, 0.5], [1.0; 3], 1.0).unwrap();
    let a = (k - MATERN_AT_ONE).abs() <= 1e-10;

    let data = table1();
    let gp = GpModel::fit(&data, &ParameterSpace::default(), &GpConfig::default()).unwrap();
    let resid = data
        .iter()
        .map(|(c, y)| (gp.predict(c).mean - y).abs())
        .fold(0.0, f64::max);
    let b = resid <= 0.1;

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_z: f64 = 0.0;
    for _ in 0..20 {
        let mean = rng.random_range(0.0..1.0);
        let std = rng.random_range(0.01..0.5);
        let f_star = mean + std * rng.random_range(-2.0..2.0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let gain = (f_star - (mean + std * z)).max(0.0);
            s += gain;
            s2 += gain * gain;
        }
        let mc = s / n as f64;
        let se = ((s2 / n as f64 - mc * mc) / n as f64).sqrt();
        worst_z = worst_z.max((expected_improvement_from(mean, std, f_star) - mc).abs() / se);
    }
    let c = worst_z <= 3.0;
    let tag = |ok: bool| if ok { "PASS" } else { "FAIL" };
    verdict(
        a && b && c,
        format!(
            "(a) {} kernel {k:.16}; (b) {} max training residual {resid:.4} with jitter 0.01; (c) {} worst |EI - MC| = {worst_z:.2} SE",
            tag(a),
            tag(b),
            tag(c)
        ),
    )
}

// ---------------------------------------------------------------- 7

fn c07_table_quadrant() -> Verdict {
    let space = ParameterSpace::default();
    let pick = || {
        let cfg = GpConfig {
            seed: 42,
            ..GpConfig::default()
        };
        let gp = GpModel::fit(&table1(), &space, &cfg).unwrap();
        let sc = SuggestConfig {
            seed: 42,
            ..SuggestConfig::default()
        };
        suggest(&gp, gp.best_observed(), &sc).conditions
    };
    let (a, b) = (pick(), pick());
    let d = space.dims();
    let low_p = a.pressure < (d[0].low + d[0].high) / 2.0;
    let high_f = a.frequency > (d[1].low + d[1].high) / 2.0;
    verdict(
        low_p && high_f && a == b,
        format!("suggested ({} MPa, {} Hz, {} mm/s), repeatable: {}", a.pressure, a.frequency, a.speed, a == b),
    )
}

// ---------------------------------------------------------------- 8

/// Least squares with an intercept, from the normal equations by Gaussian
/// elimination with partial pivoting.
fn least_squares(data: &[([f64; 3], f64)]) -> [f64; 4] {
    let mut m = [[0.0; 5]; 4];
    for (x, y) in data {
        let row = [x[0], x[1], x[2], 1.0];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += row[i] * row[j];
            }
            m[i][4] += row[i] * y;
        }
    }
    for c in 0..4 {
        let p = (c..4).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..4 {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..5 {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    std::array::from_fn(|i| m[i][4] / m[i][i])
}

fn c08_sgd() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let data: Vec<([f64; 3], f64)> = (0..30)
            .map(|_| (std::array::from_fn(|_| rng.random::<f64>()), rng.random::<f64>()))
            .collect();
        let theta: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let theta0 = rng.random_range(-1.0..1.0);
        let lambda = 10f64.powf(rng.random_range(-6.0..0.0));
        let (g, g0) = gradient(&data, &theta, theta0, lambda);
        let h = 1e-6;
        let mut fd = [0.0; 4];
        for (i, slot) in fd.iter_mut().enumerate() {
            let shifted = |s: f64| {
                let mut t = theta;
                let mut t0 = theta0;
                if i < 3 {
                    t[i] += s;
                } else {
                    t0 += s;
                }
                objective(&data, &t, t0, lambda)
            };
            *slot = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
        let analytic = [g[0], g[1], g[2], g0];
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = analytic.iter().zip(&fd).fold(0.0f64, |m, (a, f)| m.max((a - f).abs()));
        worst_grad = worst_grad.max(err / scale);
    }
    let grad_ok = worst_grad <= 1e-5;

    let space = ParameterSpace::default();
    let truth = |x: &[f64; 3]| 0.2 + 0.3 * x[0] - 0.15 * x[1] + 0.05 * x[2];
    let xy: Vec<([f64; 3], f64)> = (0..300)
        .map(|_| {
            let x = std::array::from_fn(|_| rng.random::<f64>());
            (x, truth(&x))
        })
        .collect();
    let ls = least_squares(&xy);
    let scored: Vec<_> = xy
        .iter()
        .map(|(x, y)| ScoredCondition {
            conditions: space.denormalize(*x),
            loss: *y,
        })
        .collect();
    let model = cross_validate(&scored, &space, &SgdConfig::default()).unwrap();
    let fitted = [model.theta[0], model.theta[1], model.theta[2], model.theta0];
    let coef_err = fitted.iter().zip(&ls).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let fit_ok = coef_err <= 0.01;

    let mut partition_ok = true;
    for (n, seed) in [(504, 0), (37, 5), (10, 9), (1000, 3)] {
        let folds = fold_assignment(n, 10, seed);
        let mut sizes = [0usize; 10];
        for f in &folds {
            partition_ok &= *f < 10;
            sizes[(*f).min(9)] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        partition_ok &= folds.len() == n && sizes.iter().sum::<usize>() == n && hi - lo <= 1;
    }
    verdict(
        grad_ok && fit_ok && partition_ok,
        format!(
            "gradient rel err {worst_grad:.1e}; coefficients within {coef_err:.1e} of least squares; folds partition: {partition_ok}"
        ),
    )
}

// ---------------------------------------------------------------- CLI runs

fn droploop(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_droploop"))
        .env_remove("DROPLOOP_OUT")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn only_dir(out: &Path) -> PathBuf {
    let mut entries: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "expected one directory in {}", out.display());
    entries.pop().unwrap()
}

fn ledger(dir: &Path) -> RunLedger {
    let l = std::fs::read_to_string(dir.join("ledger.jsonl")).unwrap();
    let t = std::fs::read_to_string(dir.join("timings.jsonl")).unwrap();
    RunLedger::from_jsonl(&l, Some(&t)).unwrap()
}

fn sample_losses(dir: &Path) -> Vec<(String, f64)> {
    let text = std::fs::read_to_string(dir.join("samples.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_owned(), f[8].parse().unwrap())
        })
        .collect()
}

// ---------------------------------------------------------------- 9

fn c09_convergence() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let o = droploop(tmp.path(), &["run", "--seed", "42"]);
    let secs = t.elapsed().as_secs_f64();
    if !o.status.success() {
        return verdict(false, format!("run failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let dir = only_dir(tmp.path());
    let l = ledger(&dir);
    let last = l.final_record().unwrap();
    let best_init = sample_losses(&dir)
        .iter()
        .filter(|(origin, _)| origin == "initialization")
        .map(|s| s.1)
        .fold(f64::INFINITY, f64::min);
    let pass = l.converged() && l.len() <= 10 && last.actual_loss <= best_init && secs < 60.0;
    verdict(
        pass,
        format!(
            "converged {} at update {:?}, final loss {:.4} vs best initial {best_init:.4}, {secs:.2} s",
            l.converged(),
            l.converged_at(),
            last.actual_loss
        ),
    )
}

// ---------------------------------------------------------------- 10

fn c10_train_ratio() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let o = droploop(tmp.path(), &["compare", "--seed", "42"]);
    if !o.status.success() {
        return verdict(false, format!("compare failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let dir = only_dir(tmp.path());
    let bo = ledger(&dir.join("bo"));
    let sgd = ledger(&dir.join("sgd"));
    let small: Vec<f64> = bo.records.iter().filter(|r| r.training_samples <= 16).map(|r| r.timings.train).collect();
    let bo_train = small.iter().sum::<f64>() / small.len() as f64;
    // 12 samples x 6 tiles x 7 transforms = 504 augmented records
    let first = &sgd.records[0];
    assert_eq!(first.training_samples, 12);
    let sgd_train = first.timings.train;
    let ratio = sgd_train / bo_train;
    verdict(
        ratio >= 10.0,
        format!(
            "BO {:.2} ms/update over {} updates, SGD {:.2} ms on 504 records: SGD/BO = {ratio:.2} (need >= 10)",
            bo_train * 1e3,
            small.len(),
            sgd_train * 1e3
        ),
    )
}

// ---------------------------------------------------------------- 11

fn files_with(dir: &Path, ext: &str, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_with(&p, ext, out);
        } else if p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
}

fn c11_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        assert!(droploop(&out, &["run", "--seed", "7"]).status.success());
        let dir = only_dir(&out);
        for kind in ["acquisition", "loss-delta", "manifold1d"] {
            assert!(droploop(&out, &["report", dir.to_str().unwrap(), "--kind", kind]).status.success());
        }
        dirs.push(dir);
    }
    let mut compared = vec![PathBuf::from("ledger.jsonl")];
    for ext in ["csv", "png"] {
        let mut found = Vec::new();
        files_with(&dirs[0], ext, &mut found);
        compared.extend(found.into_iter().map(|p| p.strip_prefix(&dirs[0]).unwrap().to_owned()));
    }
    let differing: Vec<_> = compared
        .iter()
        .filter(|rel| std::fs::read(dirs[0].join(rel)).ok() != std::fs::read(dirs[1].join(rel)).ok())
        .collect();
    let same_name = dirs[0].file_name() == dirs[1].file_name();
    verdict(
        differing.is_empty() && same_name,
        format!("{} files compared, {} differ {:?}", compared.len(), differing.len(), differing),
    )
}

// ---------------------------------------------------------------- 12

fn record(i: usize, predicted: f64, actual: f64) -> UpdateRecord {
    UpdateRecord {
        schema: LEDGER_SCHEMA,
        update_index: i,
        optimizer: Optimizer::Bo,
        suggestion: PrintConditions::new(0.05, 30.0, 300.0),
        normalized: [0.5; 3],
        predicted_loss: predicted,
        actual_loss: actual,
        geometric_loss: actual,
        yield_loss: actual,
        training_samples: 11 + i,
        best_loss_before: 1.0,
        converged: false,
        first_suggested_at: None,
        timings: StepTimings::default(),
    }
}

fn c12_rmse() -> Verdict {
    let cases: [(Vec<(f64, f64)>, f64, f64); 4] = [
        (vec![(0.3, 0.3)], 0.0, 0.0),
        // errors 0.1 and 0.3: sqrt((0.01 + 0.09) / 2)
        (vec![(0.5, 0.4), (0.1, 0.4)], 0.05f64.sqrt(), 0.3),
        // errors 0.2, 0.2, 0.4: sqrt(0.24 / 3) = sqrt(0.08)
        (vec![(0.0, 0.2), (0.6, 0.4), (0.0, 0.4)], 0.08f64.sqrt(), 0.4),
        (vec![(0.25, 0.75)], 0.5, 0.5),
    ];
    let mut worst: f64 = 0.0;
    for (pairs, overall, last) in &cases {
        let l = RunLedger {
            optimizer: Optimizer::Bo,
            records: pairs.iter().enumerate().map(|(i, (p, a))| record(i + 1, *p, *a)).collect(),
        };
        let r = prediction_rmse(&l).unwrap();
        worst = worst.max((r.overall - overall).abs()).max((r.final_update - last).abs());
    }
    let empty_rejected = prediction_rmse(&RunLedger::new(Optimizer::Sgd)).is_err();
    verdict(
        worst <= 1e-12 && empty_rejected,
        format!("max error {worst:.1e} over {} ledgers; empty ledger rejected: {empty_rejected}", cases.len()),
    )
}
