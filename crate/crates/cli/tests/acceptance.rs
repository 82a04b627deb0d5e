//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Expected values come from closed forms or brute-force
//! re-implementations written here, not from the library under test.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use koopman_ecg::koopman::{
    edmd_fit, predict_anchored, reconstruction_target, DictionaryConfig, FitConfig, KoopmanModel, C64,
};
use koopman_ecg::models::loss::cross_entropy;
use koopman_ecg::models::{attention, Classifier, DropoutCtx, Mat, RnnConfig, RnnModel, TransformerConfig, TransformerModel};
use koopman_ecg::signal::{segment, synth_ecg, zscore, SynthClass};
use koopman_ecg::wavelet::{dwt, idwt, WaveletFamily, WaveletSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 125.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.2} s (limit {limit_s} s)"))
}

fn linear(delay: usize) -> DictionaryConfig {
    DictionaryConfig {
        delay,
        poly_deg: 1,
        rbf_centers: 0,
        rbf_sigma: 1.0,
        center_seed: 0,
    }
}

fn nearest(vals: &[C64], want: C64) -> f64 {
    vals.iter().map(|v| (v - want).norm()).fold(f64::INFINITY, f64::min)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let theta = PI / 5.0;
    let rot: Vec<f64> = (0..80).map(|t| (theta * t as f64 + 0.4).cos()).collect();
    let m = edmd_fit(&rot, 1.0, linear(2), FitConfig { svd_rank: 16, ridge_reg: 0.0 }).unwrap();
    let rot_err = nearest(m.retained_eigvals(), C64::from_polar(1.0, theta))
        .max(nearest(m.retained_eigvals(), C64::from_polar(1.0, -theta)));
    let lti: Vec<f64> = (0..60).map(|t| 0.9f64.powi(t)).collect();
    let m = edmd_fit(&lti, 1.0, linear(1), FitConfig { svd_rank: 16, ridge_reg: 0.0 }).unwrap();
    // the constant observable contributes λ = 1; the state's own mode is the dominant non-constant one
    let lti_err = nearest(m.retained_eigvals(), C64::new(0.9, 0.0));
    let (fast, t) = within(start.elapsed(), 1.0);
    outcome(
        rot_err < 1e-8 && lti_err < 1e-10 && fast,
        format!("rotation |Δλ| {rot_err:.2e} (tol 1e-8), LTI |Δλ| {lti_err:.2e} (tol 1e-10), {t}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let x: Vec<f64> = (0..250).map(|t| (2.0 * PI * 8.0 * t as f64 / FS).sin()).collect();
    let dict = DictionaryConfig { delay: 8, ..DictionaryConfig::default() };
    let m = edmd_fit(&x, FS, dict, FitConfig::default()).unwrap();
    let angle = 2.0 * PI * 8.0 / FS;
    let hit = |sign: f64| {
        m.retained_eigvals()
            .iter()
            .any(|l| (0.999..=1.001).contains(&l.norm()) && (l.arg() - sign * angle).abs() <= 1e-3)
    };
    let best = m
        .retained_eigvals()
        .iter()
        .filter(|l| l.im > 0.0)
        .min_by(|a, b| (a.arg() - angle).abs().total_cmp(&(b.arg() - angle).abs()))
        .copied()
        .unwrap_or_default();
    let (fast, t) = within(start.elapsed(), 1.0);
    outcome(
        hit(1.0) && hit(-1.0) && fast,
        format!(
            "closest pair |λ| {:.6}, angle error {:.2e} rad (tol 1e-3), {t}",
            best.norm(),
            (best.arg() - angle).abs()
        ),
    )
}

/// 50 two-second windows from synthetic Normal records, z-scored per record.
fn normal_windows() -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for seed in 0.. {
        let s = zscore(&synth_ecg(SynthClass::Normal, 10.0, FS, 7000 + seed).unwrap()).unwrap();
        for w in segment(&s, 2.0, 1.0).unwrap().windows {
            out.push(w);
            if out.len() == 50 {
                return out;
            }
        }
    }
    unreachable!()
}

fn nrmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let std = (a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let rmse = (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt();
    rmse / std
}

fn default_fits(windows: &[Vec<f64>]) -> Vec<KoopmanModel> {
    windows
        .iter()
        .map(|w| edmd_fit(w, FS, DictionaryConfig::default(), FitConfig::default()).unwrap())
        .collect()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let windows = normal_windows();
    let models = default_fits(&windows);
    let errs: Vec<f64> = windows
        .iter()
        .zip(&models)
        .map(|(w, m)| nrmse(&reconstruction_target(m, w), &predict_anchored(m, w, 1).unwrap()))
        .collect();
    let good = errs.iter().filter(|&&e| e <= 0.10).count();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let (fast, t) = within(start.elapsed(), 30.0);
    outcome(
        good * 10 >= 9 * errs.len() && fast,
        format!(
            "{good}/{} windows with one-step NRMSE ≤ 0.10 (need 90%), worst {worst:.4}, {t}",
            errs.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let models = default_fits(&normal_windows());
    let all: Vec<f64> = models.iter().flat_map(|m| m.retained_eigvals().iter().map(|l| l.norm())).collect();
    let inside = all.iter().filter(|&&r| r <= 1.01).count();
    let frac = inside as f64 / all.len() as f64;
    outcome(
        frac >= 0.90,
        format!("{inside}/{} retained eigenvalues with |λ| ≤ 1.01 ({:.1}%, need 90%)", all.len(), 100.0 * frac),
    )
}

/// Published 8-tap Daubechies scaling filter (four vanishing moments).
const DB4_SCALING: [f64; 8] = [
    0.230_377_813_308_855_2,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut pr, mut parseval) = (0.0f64, 0.0f64);
    for family in [WaveletFamily::Haar, WaveletFamily::DB4] {
        let spec = WaveletSpec { family, levels: 4 };
        for _ in 0..100 {
            let x: Vec<f64> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d = dwt(&x, spec).unwrap();
            let y = idwt(&d, spec).unwrap();
            pr = pr.max(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = d.bands().flatten().map(|v| v * v).sum();
            parseval = parseval.max((ex - ec).abs() / ex);
        }
    }
    let filter_err = WaveletFamily::DB4
        .scaling()
        .iter()
        .zip(DB4_SCALING)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut cubic_max = 0.0f64;
    for trial in 0..10 {
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..256)
            .map(|i| {
                let t = i as f64 / 128.0 - 1.0 + 0.01 * trial as f64;
                c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t
            })
            .collect();
        let d = dwt(&x, WaveletSpec { family: WaveletFamily::DB4, levels: 1 }).unwrap();
        let finest = d.details.last().unwrap();
        // coefficients whose 8-tap support does not cross the periodic wrap
        let interior = (x.len() - DB4_SCALING.len()) / 2 + 1;
        cubic_max = finest[..interior].iter().map(|v| v.abs()).fold(cubic_max, f64::max);
    }
    outcome(
        pr < 1e-10 && parseval < 1e-9 && cubic_max < 1e-10 && filter_err < 1e-12,
        format!(
            "reconstruction ∞-norm {pr:.2e} (tol 1e-10), Parseval rel {parseval:.2e} (tol 1e-9), \
             DB4 cubic finest details {cubic_max:.2e} (tol 1e-10, non-wrapping coefficients), \
             DB4 filter vs published {filter_err:.1e}"
        ),
    )
}

/// Central-difference check of every parameter group; returns the worst
/// relative error over groups.
/// Worst relative error over parameter groups, plus the number of null
/// groups. A group whose true gradient is identically zero (the attention key
/// bias: softmax ignores a shift shared by all keys) has no meaningful relative
/// error; it passes when both sides are below `NULL_GRAD` in norm.
fn fd_check<M: Classifier>(model: &mut M, batch: &[(&Mat, usize)], dropout: Option<DropoutCtx>) -> GradCheck {
    const NULL_GRAD: f64 = 1e-8;
    let (_, grads) = model.loss_and_grad(batch, dropout);
    let h = 1e-5;
    let mut out = GradCheck { worst: 0.0, groups: grads.tensors.len(), null: 0 };
    for g in 0..out.groups {
        let (mut diff, mut fd_sq, mut an_sq) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..grads.tensors[g].len() {
            let orig = model.params().tensors[g].data[i];
            model.params_mut().tensors[g].data[i] = orig + h;
            let (lp, _) = model.loss_and_grad(batch, dropout);
            model.params_mut().tensors[g].data[i] = orig - h;
            let (lm, _) = model.loss_and_grad(batch, dropout);
            model.params_mut().tensors[g].data[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.tensors[g].data[i];
            diff += (fd - an) * (fd - an);
            fd_sq += fd * fd;
            an_sq += an * an;
        }
        let rel = if fd_sq.sqrt() < NULL_GRAD && an_sq.sqrt() < NULL_GRAD {
            out.null += 1;
            0.0
        } else {
            (diff / (fd_sq + an_sq)).sqrt()
        };
        out.worst = out.worst.max(rel);
    }
    out
}

struct GradCheck {
    worst: f64,
    groups: usize,
    null: usize,
}

fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = TransformerConfig {
        input_dim: 3,
        layers: 1,
        heads: 2,
        emb_dim: 8,
        ff_dim: 16,
        dropout: 0.1,
        n_classes: 3,
        max_tokens: 2,
    };
    let mut tx = TransformerModel::new(cfg, 11).unwrap();
    let xs: Vec<Mat> = (0..3).map(|_| rand_mat(&mut rng, 2, 3)).collect();
    let batch: Vec<(&Mat, usize)> = xs.iter().zip([0, 2, 1]).collect();
    let tx_plain = fd_check(&mut tx, &batch, None);
    let tx_drop = fd_check(&mut tx, &batch, Some(DropoutCtx { seed: 3, step: 1 }));

    let mut rnn = RnnModel::new(RnnConfig { input_dim: 1, hidden: 6, n_classes: 3 }, 12).unwrap();
    let seqs: Vec<Mat> = [5, 7, 5].iter().map(|&t| rand_mat(&mut rng, t, 1)).collect();
    let batch: Vec<(&Mat, usize)> = seqs.iter().zip([1, 0, 2]).collect();
    let rnn = fd_check(&mut rnn, &batch, None);
    let (fast, t) = within(start.elapsed(), 60.0);
    outcome(
        tx_plain.worst < 1e-4 && tx_drop.worst < 1e-4 && rnn.worst < 1e-4 && fast,
        format!(
            "transformer {} groups ({} null) max rel {:.2e} (with dropout {:.2e}), \
             RNN {} groups ({} null) max rel {:.2e} (tol 1e-4), {t}",
            tx_plain.groups, tx_plain.null, tx_plain.worst, tx_drop.worst, rnn.groups, rnn.null, rnn.worst
        ),
    )
}

fn brute_attention(q: &Mat, k: &Mat, v: &Mat) -> Mat {
    let d = q.cols as f64;
    let mut out = Mat::zeros(q.rows, v.cols);
    for i in 0..q.rows {
        let s: Vec<f64> = (0..k.rows)
            .map(|j| (0..q.cols).map(|c| q.at(i, c) * k.at(j, c)).sum::<f64>() / d.sqrt())
            .collect();
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..v.cols {
            *out.at_mut(i, c) = (0..k.rows).map(|j| e[j] / z * v.at(j, c)).sum();
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (tq, tk, dk, dv) = (
            rng.random_range(1..6),
            rng.random_range(1..6),
            rng.random_range(1..5),
            rng.random_range(1..5),
        );
        let q = rand_mat(&mut rng, tq, dk);
        let k = rand_mat(&mut rng, tk, dk);
        let v = rand_mat(&mut rng, tk, dv);
        let got = attention(&q, &k, &v).unwrap();
        let want = brute_attention(&q, &k, &v);
        worst = worst.max(got.data.iter().zip(&want.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let mut ce = 0.0f64;
    for c in 2..=6 {
        for label in 0..c {
            ce = ce.max((cross_entropy(&vec![0.37; c], label) - (c as f64).ln()).abs());
        }
    }
    outcome(
        worst < 1e-12 && ce < 1e-12,
        format!("attention max |Δ| {worst:.2e} over 20 cases, uniform-logit CE |Δ| {ce:.2e} (tol 1e-12)"),
    )
}

fn kecg(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kecg")).args(args).output().expect("run kecg");
    (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_default()
}

/// `system -> mean_macro_f1` from summary.csv.
fn summary_means(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some((f.first()?.to_string(), f.get(3)?.parse().ok()?))
        })
        .collect()
}

fn criteria_8_to_10(dir: &Path) -> [Outcome; 3] {
    let data = dir.join("data");
    let (ok, err) = kecg(&["synth", "--out", data.to_str().unwrap()]);
    assert!(ok, "synth failed: {err}");
    let run = |name: &str| {
        let out = dir.join(name);
        let start = Instant::now();
        let (ok, err) = kecg(&[
            "compare",
            "--task",
            "four",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        (ok, err, start.elapsed(), out)
    };

    let (ok1, err1, t1, out1) = run("run1");
    let summary = read(&out1.join("summary.csv"));
    let means = summary_means(&summary);
    let mean = |s: &str| means.iter().find(|(n, _)| n == s).map_or(f64::NAN, |m| m.1);
    let ablated = mean("KoopmanTxAblated");
    let (k, w) = (mean("KoopmanTx"), mean("WaveletTx"));
    let (fast, t) = within(t1, 30.0 * 60.0);
    let report_rows = read(&out1.join("report.csv")).lines().count().saturating_sub(1);
    let c8 = outcome(
        ok1 && ablated >= 0.90 && k >= w && means.len() == 5 && report_rows == 25 && fast,
        format!(
            "KoopmanTxAblated mean test macro-F1 {ablated:.4} (need ≥ 0.90), KoopmanTx {k:.4} vs WaveletTx {w:.4}, \
             {} summary rows, {report_rows} run rows, {t}{}",
            means.len(),
            if ok1 { String::new() } else { format!("; compare failed: {err1}") }
        ),
    );

    let ablation = read(&out1.join("ablation.csv"));
    let cells: Vec<Vec<String>> = ablation.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let f1 = |c: &Vec<String>| c[4].parse::<f64>().unwrap_or(f64::NAN);
    let winner = cells.iter().find(|c| c[7] == "1");
    let default = cells.iter().find(|c| c[0] == "8" && c[1] == "0" && c[2] == "0.3" && c[3] == "16");
    let finite_max = cells.iter().map(f1).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let c9 = match (winner, default) {
        (Some(wc), Some(dc)) => outcome(
            f1(wc) >= f1(dc) && f1(wc) >= finite_max && cells.len() == 108,
            format!(
                "winner val macro-F1 {:.4} ≥ default cell {:.4} and grid max {finite_max:.4} over {} cells; \
                 run_ablation takes only train and validation records",
                f1(wc),
                f1(dc),
                cells.len()
            ),
        ),
        _ => outcome(false, format!("ablation.csv missing winner or default cell ({} rows)", cells.len())),
    };

    let (ok2, err2, _, out2) = run("run2");
    let same = |f: &str| {
        let a = std::fs::read(out1.join(f)).ok();
        a.is_some() && a == std::fs::read(out2.join(f)).ok()
    };
    let files = ["report.csv", "summary.csv", "ablation.csv"];
    let identical: Vec<&str> = files.iter().copied().filter(|f| same(f)).collect();
    let c10 = outcome(
        ok1 && ok2 && identical.len() == files.len(),
        format!(
            "byte-identical across two runs: {identical:?} of {files:?}{}",
            if ok2 { String::new() } else { format!("; second compare failed: {err2}") }
        ),
    );
    [c8, c9, c10]
}

fn main() {
    // `cargo test -- --list` and filters only need the target to exist
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // numeric arguments select criteria, e.g. `cargo test --test acceptance -- 6 7`
    let only: Vec<usize> = args.iter().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    let unit: [fn() -> Outcome; 7] = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7];
    for (n, f) in (1..).zip(unit) {
        if wanted(n) {
            report(n, f());
        }
    }
    if (8..=10).any(wanted) {
        let dir = tempfile::tempdir().expect("tempdir");
        for (n, o) in (8..).zip(criteria_8_to_10(dir.path())) {
            report(n, o);
        }
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
