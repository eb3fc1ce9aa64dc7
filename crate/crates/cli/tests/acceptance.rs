//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc::sync_channel;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use flamestab::features::FeatureMatrix;
use flamestab::flsc::{classify_clip_flsc, FlscConfig};
use flamestab::imaging::{BoundingBox, Clip};
use flamestab::kmeans::{fit_kmeans, fit_kmeans_traced, KMeansParams};
use flamestab::label::Binary;
use flamestab::pca::fit_pca;
use flamestab::pipeline::{classify_clip, load_model, save_model, train_unsupervised, TrainConfig, UnsupervisedModel};
use flamestab::synthgen::{
    ceiling_noise_sigma, expected_label, generate_clip, render_frame, sweep_scenario, CorpusSpec, ExpectedLabel,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tempfile::TempDir;

type Verdict = Result<String, String>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flamestab"))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_csv(args: &[&str]) -> Result<Vec<Vec<String>>, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    Ok(text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect())
}

// 1. Evaluation arithmetic against the reference rate triples, through the CLI.
fn evaluation_arithmetic(dir: &Path) -> Verdict {
    const TOL_POINTS: f64 = 0.15;
    let ids: Vec<String> = (0..53).map(|i| format!("v{i:02}")).collect();
    let is_stable = |i: usize| i < 38;
    let mut raters = String::from("video_id,rater_id,score\n");
    for (i, id) in ids.iter().enumerate() {
        raters += &format!("{id},consensus,{}\n", if is_stable(i) { 2 } else { 0 });
    }
    let truth = dir.join("raters.csv");
    fs::write(&truth, raters).map_err(|e| e.to_string())?;

    // (name, fp, fn, accuracy %, fp rate %, fn rate %)
    let reference = [
        ("flsc", 3, 4, 86.8, 7.9, 26.7),
        ("unsupervised", 5, 9, 73.6, 13.2, 60.0),
        ("supervised", 1, 4, 90.6, 2.6, 26.6),
    ];
    let mut args = vec!["evaluate".to_string(), "--truth".into(), truth.display().to_string()];
    for (name, fp, fn_, ..) in reference {
        let mut csv = String::from("video_id,prediction\n");
        for (i, id) in ids.iter().enumerate() {
            let predicted_unstable = if is_stable(i) { i < fp } else { i - 38 >= fn_ };
            csv += &format!("{id},{}\n", if predicted_unstable { 0 } else { 2 });
        }
        let path = dir.join(format!("{name}.csv"));
        fs::write(&path, csv).map_err(|e| e.to_string())?;
        args.push("--pred".into());
        args.push(format!("{name}={}", path.display()));
    }
    let rows = run_csv(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for (name, _, _, acc, fpr, fnr) in reference {
        let row = rows.iter().find(|r| r[0] == name).ok_or(format!("no row for {name}"))?;
        let got: Vec<f64> = row[6..9].iter().map(|v| 100.0 * v.parse::<f64>().unwrap()).collect();
        for (g, want) in got.iter().zip([acc, fpr, fnr]) {
            worst = worst.max((g - want).abs());
        }
        details.push(format!("{name} ({:.2}, {:.2}, {:.2})", got[0], got[1], got[2]));
    }
    check(
        worst <= TOL_POINTS,
        format!("{}; worst gap {worst:.3} points (tolerance {TOL_POINTS})", details.join(", ")),
    )
}

// 2. Random baseline through the CLI.
fn random_baseline() -> Verdict {
    let started = Instant::now();
    let rows = run_csv(&["baseline", "--stable", "38", "--unstable", "15", "--trials", "1000", "--seed", "53"])?;
    let mean: f64 = rows[1][2].parse().unwrap();
    let std: f64 = rows[1][3].parse().unwrap();
    let rows = run_csv(&["baseline", "--stable", "38", "--unstable", "15", "--trials", "100000", "--seed", "53"])?;
    let elapsed = started.elapsed();
    let big_std: f64 = rows[1][3].parse().unwrap();
    let analytic = 0.5 / 53f64.sqrt();
    let ok = rows[1][1] == "53"
        && (0.485..=0.515).contains(&mean)
        && (0.059..=0.079).contains(&std)
        && (big_std - analytic).abs() <= 0.003
        && elapsed < Duration::from_secs(5);
    check(
        ok,
        format!(
            "1000 trials: {:.2}% ± {:.2}%; 1e5 trials std {:.3}% vs analytic {:.3}%; {:.2}s",
            100.0 * mean,
            100.0 * std,
            100.0 * big_std,
            100.0 * analytic,
            elapsed.as_secs_f64()
        ),
    )
}

// 3. FLSC against the analytic oracle over a seeded sweep.
fn flsc_oracle() -> Verdict {
    let started = Instant::now();
    let anchor = BoundingBox::new(60, 90, 30, 50).unwrap();
    let config = FlscConfig::with_box(anchor);
    let frame = (160, 120);
    let mut exact = 0;
    let mut noisy = 0;
    let mut indeterminate = 0;
    let sigma = ceiling_noise_sigma(anchor.area());
    for seed in 0..200 {
        let s = sweep_scenario(seed, anchor, frame, 0.0);
        let want = expected_label(&s, &config).map_err(|e| e.to_string())?;
        let got = classify_clip_flsc(&generate_clip(&s).unwrap(), &config).map_err(|e| e.to_string())?;
        exact += (got == want.analytic()) as usize;

        let s = sweep_scenario(seed, anchor, frame, sigma);
        let want = expected_label(&s, &config).map_err(|e| e.to_string())?;
        indeterminate += matches!(want, ExpectedLabel::Indeterminate { .. }) as usize;
        let got = classify_clip_flsc(&generate_clip(&s).unwrap(), &config).map_err(|e| e.to_string())?;
        noisy += (got == want.analytic()) as usize;
    }
    let elapsed = started.elapsed();
    check(
        exact == 200 && noisy >= 198 && elapsed < Duration::from_secs(30),
        format!(
            "noise 0: {exact}/200; noise sigma {sigma:.3} per pixel: {noisy}/200 ({indeterminate} near a threshold); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// 4. Gram-matrix PCA against a dense covariance eigendecomposition.
fn pca_oracle() -> Verdict {
    const MATCH_TOL: f64 = 1e-8;
    const ORTHO_TOL: f64 = 1e-9;
    let mut worst_match: f64 = 0.0;
    let mut worst_ortho: f64 = 0.0;
    let mut maximality_violations = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(3..=10);
        let p = rng.random_range(2..=50);
        // uneven column scales keep the spectrum well separated
        let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..3.0)).collect();
        let data: Vec<f64> = (0..n * p)
            .map(|i| scales[i % p] * normal(&mut rng) + rng.random_range(-5.0..5.0))
            .collect();
        let x = FeatureMatrix::from_rows(p, data.clone(), (0..n).map(|i| (format!("r{i}"), 0)).collect()).map_err(|e| e.to_string())?;
        let k = (n - 1).min(p);
        let model = fit_pca(&x, k).map_err(|e| e.to_string())?;

        let dense = DMatrix::from_row_slice(n, p, &data);
        let mean = dense.row_mean();
        let mut centered = dense.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        for (i, &j) in order.iter().take(k).enumerate() {
            let lambda = eig.eigenvalues[j];
            let v = eig.eigenvectors.column(j);
            let c = model.component(i);
            let sign = if c.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            worst_match = worst_match.max((model.explained_variance()[i] - lambda).abs() / lambda.max(1.0));
            for r in 0..n {
                let row: Vec<f64> = dense.row(r).iter().copied().collect();
                let ours = model.transform(&row).map_err(|e| e.to_string())?[i];
                let oracle = sign * centered.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
                worst_match = worst_match.max((ours - oracle).abs());
            }
        }
        for a in 0..k {
            for b in 0..k {
                let d: f64 = model.component(a).iter().zip(model.component(b)).map(|(x, y)| x * y).sum();
                worst_ortho = worst_ortho.max((d - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        let variance_along = |d: &[f64]| -> f64 {
            centered
                .row_iter()
                .map(|r| r.iter().zip(d).map(|(a, b)| a * b).sum::<f64>().powi(2))
                .sum::<f64>()
                / (n as f64 - 1.0)
        };
        let l1 = model.explained_variance()[0];
        let l2 = model.explained_variance().get(1).copied().unwrap_or(0.0);
        let c1 = model.component(0);
        for _ in 0..200 {
            let mut d: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter_mut().for_each(|v| *v /= norm);
            if variance_along(&d) > l1 * (1.0 + 1e-9) {
                maximality_violations += 1;
            }
            // the second component must beat every direction orthogonal to the first
            let proj: f64 = d.iter().zip(c1).map(|(a, b)| a * b).sum();
            d.iter_mut().zip(c1).for_each(|(v, c)| *v -= proj * c);
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                d.iter_mut().for_each(|v| *v /= norm);
                if variance_along(&d) > l2 * (1.0 + 1e-9) + 1e-12 {
                    maximality_violations += 1;
                }
            }
        }
    }
    check(
        worst_match <= MATCH_TOL && worst_ortho <= ORTHO_TOL && maximality_violations == 0,
        format!(
            "20 matrices: worst projection/variance gap {worst_match:.2e} (tol {MATCH_TOL:.0e}), \
             orthonormality {worst_ortho:.2e} (tol {ORTHO_TOL:.0e}), {maximality_violations} maximality violations"
        ),
    )
}

/// Unit-variance blobs; `min_gap` is the smallest allowed distance between centres.
fn blobs(rng: &mut ChaCha8Rng, n: usize, k: usize, dim: usize, min_gap: f64) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < k {
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..10.0 + 4.0 * min_gap)).collect();
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_gap);
        if far {
            centers.push(c);
        }
    }
    (0..n)
        .map(|i| {
            let c = &centers[i % k];
            c.iter().map(|v| v + normal(rng)).collect()
        })
        .collect()
}

fn partition_inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        let mean: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>();
    }
    total
}

/// Lowest inertia over every assignment of points to k non-empty clusters.
fn brute_force_optimum(points: &[Vec<f64>], k: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut best = (f64::INFINITY, vec![]);
    let mut labels = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        if (0..k).all(|j| labels.contains(&j)) {
            let v = partition_inertia(points, &labels, k);
            if v < best.0 {
                best = (v, labels.clone());
            }
        }
    }
    best
}

/// Labels renumbered by first appearance, so equal partitions compare equal.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

// 5. k-means monotonicity, global optimum on small instances, and the worked example.
fn kmeans_checks() -> Verdict {
    let mut violations = 0;
    let mut traces = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(10..=200);
        let k = rng.random_range(1..=6);
        let dim = rng.random_range(1..=5);
        let points = blobs(&mut rng, n, k, dim, 0.0);
        let (_, runs) = fit_kmeans_traced(&points, &KMeansParams::new(k, seed)).map_err(|e| e.to_string())?;
        for run in runs {
            traces += 1;
            violations += run
                .inertia_history
                .windows(2)
                .filter(|w| w[1] > w[0] * (1.0 + 1e-12))
                .count();
        }
    }

    let mut optimal = 0;
    let mut same_partition = 0;
    let mut generating_recovered = 0;
    let instances = 60;
    for seed in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.random_range(4..=12);
        let k = rng.random_range(1..=3);
        // well separated: centres at least 10 sigma apart
        let points = blobs(&mut rng, n, k, 2, 10.0);
        let (best, best_labels) = brute_force_optimum(&points, k);
        let model = fit_kmeans(&points, &KMeansParams::new(k, seed)).map_err(|e| e.to_string())?;
        let labels: Vec<usize> = points.iter().map(|p| model.assign(p).unwrap()).collect();
        let got = partition_inertia(&points, &labels, k);
        if got <= best * (1.0 + 1e-9) + 1e-12 {
            optimal += 1;
        }
        same_partition += (canonical(&labels) == canonical(&best_labels)) as usize;
        let generating: Vec<usize> = (0..n).map(|i| i % k).collect();
        generating_recovered += (canonical(&labels) == canonical(&generating)) as usize;
    }

    let points: Vec<Vec<f64>> = [0.0, 1.0, 9.0, 10.0].iter().map(|&v| vec![v]).collect();
    let model = fit_kmeans(&points, &KMeansParams::new(2, 0)).map_err(|e| e.to_string())?;
    let mut centroids: Vec<f64> = model.centroids.iter().map(|c| c[0]).collect();
    centroids.sort_by(f64::total_cmp);
    let example = centroids == [0.5, 9.5] && model.inertia == 1.0;

    check(
        violations == 0 && optimal == instances && same_partition == instances && generating_recovered == instances && example,
        format!(
            "{violations} inertia increases over {traces} runs of 100 fits; optimum inertia {optimal}/{instances}, \
             brute-force partition {same_partition}/{instances}, generating partition {generating_recovered}/{instances}; {{0,1,9,10}} -> {centroids:?}, inertia {}",
            model.inertia
        ),
    )
}

struct FullSizeRun {
    model: UnsupervisedModel,
    extinction_in_cluster: usize,
    extinction_windows: usize,
    held_out_correct: usize,
    held_out: usize,
    elapsed: Duration,
}

fn full_size_run() -> Result<FullSizeRun, String> {
    let started = Instant::now();
    let spec = CorpusSpec::full_size();
    let training = spec.scenarios(40, 15, 2024);
    let clips = training
        .iter()
        .map(|(id, s)| Ok((id.clone(), generate_clip(s)?)));
    let trained = train_unsupervised(clips, &TrainConfig::new(FlscConfig::default(), 2024)).map_err(|e| e.to_string())?;
    let model = trained.model;
    let extinction: Vec<_> = trained.windows.iter().filter(|w| w.0.starts_with("unstable")).collect();
    let extinction_in_cluster = extinction.iter().filter(|w| w.2 == model.unstable_cluster).count();

    let held = spec.scenarios(10, 10, 7);
    let mut held_out_correct = 0;
    for (_, s) in &held {
        let clip: Clip = generate_clip(s).map_err(|e| e.to_string())?;
        let verdict = classify_clip(&model, &clip).map_err(|e| e.to_string())?;
        held_out_correct += (verdict.label == s.truth()) as usize;
    }
    Ok(FullSizeRun {
        model,
        extinction_in_cluster,
        extinction_windows: extinction.len(),
        held_out_correct,
        held_out: held.len(),
        elapsed: started.elapsed(),
    })
}

// 6. End-to-end pipeline at full frame size.
fn end_to_end(run: &Result<FullSizeRun, String>) -> Verdict {
    let run = run.as_ref().map_err(Clone::clone)?;
    let accuracy = run.held_out_correct as f64 / run.held_out as f64;
    let share = run.extinction_in_cluster as f64 / run.extinction_windows as f64;
    let unstable_fraction = run.model.training_summary[run.model.unstable_cluster].unstable_fraction();
    let highest = run
        .model
        .training_summary
        .iter()
        .all(|s| s.unstable_fraction() <= unstable_fraction);
    check(
        accuracy >= 0.9
            && share >= 0.8
            && highest
            && !run.model.low_confidence
            && run.model.feature_len() == 45_000
            && run.elapsed < Duration::from_secs(180),
        format!(
            "held-out clip accuracy {}/{} ({:.0}%), extinction windows in unstable cluster {}/{} ({:.0}%), \
             PC ratios {:.2?}, {:.0}s",
            run.held_out_correct,
            run.held_out,
            100.0 * accuracy,
            run.extinction_in_cluster,
            run.extinction_windows,
            100.0 * share,
            run.model.pca.explained_variance_ratio(),
            run.elapsed.as_secs_f64()
        ),
    )
}

/// `(tag, payload start, payload length)` for every section of a model file.
fn sections(bytes: &[u8]) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut pos = 8;
    while pos + 12 <= bytes.len() - 4 {
        let tag = String::from_utf8_lossy(&bytes[pos..pos + 4]).into_owned();
        let len = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap()) as usize;
        out.push((tag, pos + 12, len));
        pos += 12 + len + 4;
    }
    out
}

fn load_error(bytes: &[u8]) -> Option<(String, String)> {
    match UnsupervisedModel::from_bytes(bytes) {
        Err(flamestab::Error::ModelLoad { section, message }) => Some((section, message)),
        _ => None,
    }
}

// 7. Byte-identical retraining, exact round trip, and named-section corruption errors.
fn determinism_and_persistence(dir: &Path) -> Verdict {
    let corpus = dir.join("corpus");
    let c = corpus.display().to_string();
    run_csv(&[
        "synth-corpus", "--out", &c, "--stable", "20", "--unstable", "8", "--seed", "9", "--width", "96", "--height",
        "72", "--box", "30,60,20,24",
    ])?;
    let a = dir.join("a.fspm");
    let b = dir.join("b.fspm");
    for path in [&a, &b] {
        run_csv(&["train", &c, "--seed", "31", "--out", &path.display().to_string(), "--box", "30,60,20,24"])?;
    }
    let bytes = fs::read(&a).map_err(|e| e.to_string())?;
    let identical = bytes == fs::read(&b).map_err(|e| e.to_string())?;

    let model = load_model(&a).map_err(|e| e.to_string())?;
    let resaved = dir.join("c.fspm");
    save_model(&model, &resaved).map_err(|e| e.to_string())?;
    let round_trip = fs::read(&resaved).map_err(|e| e.to_string())? == bytes
        && UnsupervisedModel::from_bytes(&model.to_bytes()).ok().as_ref() == Some(&model);

    let mut named = 0;
    let layout = sections(&bytes);
    for (tag, start, len) in &layout {
        let mut flipped = bytes.clone();
        flipped[start + len / 2] ^= 0x5a;
        let mut cut = bytes.clone();
        cut.truncate(start + len / 2);
        let ok = |e: Option<(String, String)>| e.is_some_and(|(s, _)| &s == tag);
        named += (ok(load_error(&flipped)) && ok(load_error(&cut))) as usize;
    }
    let mut magic = bytes.clone();
    magic[1] = b'X';
    let mut version = bytes.clone();
    version[4] = 0;
    let mut trailer = bytes.clone();
    *trailer.last_mut().unwrap() ^= 1;
    let header_ok = load_error(&magic).is_some_and(|(_, m)| m.contains("bad magic"))
        && load_error(&version).is_some_and(|(_, m)| m.contains("unsupported version"))
        && load_error(&trailer).is_some_and(|(s, _)| s == "trailer");

    check(
        identical && round_trip && named == layout.len() && layout.len() == 9 && header_ok,
        format!(
            "retrain byte-identical: {identical}; load/save identity: {round_trip}; \
             corruption and truncation named for {named}/{} sections; magic/version/trailer errors: {header_ok}",
            layout.len()
        ),
    )
}

fn vm_hwm_kib(pid: u32) -> Option<u64> {
    let status = fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

// 8. Live monitor latency and memory on a paced 60 s stream.
fn monitor_latency(run: &Result<FullSizeRun, String>, dir: &Path) -> Verdict {
    const LIMIT: Duration = Duration::from_millis(100);
    const MAX_GROWTH_KIB: u64 = 8 * 1024;
    let run = run.as_ref().map_err(Clone::clone)?;
    let model_path: PathBuf = dir.join("full_size.fspm");
    save_model(&run.model, &model_path).map_err(|e| e.to_string())?;

    let spec = CorpusSpec::full_size();
    let fps = 30.0;
    let frames = 60 * 30;
    let window = 30;
    let mut scenario = spec.stable_scenario(606);
    scenario.duration = frames;
    // extinction bursts in three windows
    let burst = spec.extinction_scenario(607).events;
    for target in [10usize, 25, 40] {
        scenario.events.extend(burst.iter().filter(|e| e.start_frame < window).map(|e| {
            let mut e = *e;
            e.start_frame += target * window;
            e.end_frame += target * window;
            e
        }));
    }
    let truth: Vec<bool> = (0..frames / window).map(|w| scenario.has_event_in(w * window, window)).collect();

    let mut child = bin()
        .args(["monitor", &model_path.display().to_string(), "--stream", "stdin"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| e.to_string())?;
    let pid = child.id();
    let mut stdin = child.stdin.take().unwrap();
    let stdout = child.stdout.take().unwrap();

    let reader = thread::spawn(move || {
        BufReader::new(stdout)
            .lines()
            .map(|l| (Instant::now(), l.unwrap()))
            .collect::<Vec<_>>()
    });

    let (tx, rx) = sync_channel(90);
    let producer = {
        let scenario = scenario.clone();
        thread::spawn(move || {
            for f in 0..frames {
                if tx.send(render_frame(&scenario, f).unwrap().into_pixels()).is_err() {
                    return;
                }
            }
        })
    };

    let written = Arc::new(Mutex::new(vec![None; frames / window]));
    let started = Instant::now();
    let mut hwm_early = None;
    let mut send = || -> std::io::Result<()> {
        stdin.write_all(format!("FSPV1 {} {} {}\n", spec.width, spec.height, fps).as_bytes())?;
        for (f, pixels) in rx.iter().enumerate() {
            let due = started + Duration::from_secs_f64(f as f64 / fps);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            stdin.write_all(&pixels)?;
            if f % window == window - 1 {
                written.lock().unwrap()[f / window] = Some(Instant::now());
            }
            if f == 300 {
                hwm_early = vm_hwm_kib(pid);
            }
        }
        Ok(())
    };
    let sent = send();
    let hwm_late = vm_hwm_kib(pid);
    drop(stdin);
    let status = child.wait().map_err(|e| e.to_string())?;
    producer.join().unwrap();
    let lines = reader.join().unwrap();
    sent.map_err(|e| format!("writing stream: {e}"))?;
    if !status.success() {
        return Err(format!("monitor exited with {status}"));
    }

    let written = written.lock().unwrap();
    let mut worst = Duration::ZERO;
    let mut records = 0;
    let mut agree = 0;
    for (at, line) in &lines {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let Some(w) = v["window"].as_u64() else { continue };
        let w = w as usize;
        records += 1;
        let sent_at = written[w].ok_or(format!("record for unsent window {w}"))?;
        worst = worst.max(at.saturating_duration_since(sent_at));
        agree += ((v["label"] == Binary::Unstable.as_str()) == truth[w]) as usize;
    }
    let growth = match (hwm_early, hwm_late) {
        (Some(a), Some(b)) => Some(b.saturating_sub(a)),
        _ => None,
    };
    check(
        records == frames / window && worst < LIMIT && growth.is_some_and(|g| g <= MAX_GROWTH_KIB),
        format!(
            "{records} records, worst flush latency {:.1} ms (limit 100), peak RSS {} KiB at 10 s -> {} KiB at 60 s \
             (growth limit {MAX_GROWTH_KIB} KiB), labels agree with generator on {agree}/{records} windows, {:.0}s",
            worst.as_secs_f64() * 1e3,
            hwm_early.map_or("?".into(), |v| v.to_string()),
            hwm_late.map_or("?".into(), |v| v.to_string()),
            started.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    // `cargo test -- --list` and similar probes from the test runner
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let dir = TempDir::new().expect("temp dir");
    let mut failed = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {n} ({name}): {detail}");
    };
    report(1, "evaluation arithmetic", evaluation_arithmetic(dir.path()));
    report(2, "random baseline", random_baseline());
    report(3, "FLSC oracle sweep", flsc_oracle());
    report(4, "PCA oracle equivalence", pca_oracle());
    report(5, "k-means", kmeans_checks());
    let full = full_size_run();
    report(6, "end-to-end pipeline", end_to_end(&full));
    report(7, "determinism and persistence", determinism_and_persistence(dir.path()));
    report(8, "monitor latency", monitor_latency(&full, dir.path()));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
