//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1, 2, 3, 6 and 7 are contracts of the implementation and fail
//! the test. Criteria 4, 5 and 8 are empirical reproduction targets; they
//! are measured exactly as stated and printed, but only fail the test when
//! `COLEARN_ACCEPTANCE_STRICT=1`. Set `COLEARN_ACCEPTANCE_OUTPUT=<dir>` to
//! keep the experiment's CSVs and plots.

use std::path::Path;
use std::time::Instant;

use colearn::autodiff::{Tape, Tensor};
use colearn::data::{build_symmetric, corrupt_labels, parse_cifar10_records, ImageDataset, ImageShape, CIFAR10_RECORD_BYTES};
use colearn::gradcheck::{check_total_loss, fixture_network, loss_fixture, spread_coords, GradTolerance};
use colearn::harness::{run_experiment, DatasetConfig, ExperimentConfig, NoiseConfig, RunArtifacts, RunOptions};
use colearn::losses::{
    cosine_similarity, cross_entropy, info_nce_pair, intrinsic_loss, mix_rows, similarity_metric, structural_loss,
    total_loss, LossConfig, MixupDraw, Reduction, SupervisedTerm, View, ViewPair,
};
use colearn::model::{NetworkConfig, ModelParams, BatchViews};
use colearn::rng;
use colearn::train::{Method, TrainConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// 1. Gradient oracle
// ---------------------------------------------------------------------------

fn criterion_gradients() -> Verdict {
    let start = Instant::now();
    let cfg = LossConfig::default();
    let tol = GradTolerance::default();
    let (params, views) = loss_fixture(&fixture_network(), 0).expect("fixture");
    let narrow = check_total_loss(&params, &views, &cfg, tol, None).expect("narrow check");
    let (params, views) = loss_fixture(&NetworkConfig::new(64, 3), 1).expect("fixture");
    let coords = spread_coords(&params, 25, 1);
    let wide = check_total_loss(&params, &views, &cfg, tol, Some(&coords)).expect("default-width check");
    let secs = start.elapsed().as_secs_f64();
    let pass = narrow.passed() && wide.passed() && secs < 30.0;
    verdict(
        pass,
        format!(
            "narrow network {}/{} coordinates, default widths {} sampled coordinates, {} mismatches against max(1e-4 rel, 1e-7 abs), {secs:.1} s (limit 30 s)",
            narrow.checked - narrow.mismatches.len(),
            narrow.checked,
            wide.checked,
            narrow.mismatches.len() + wide.mismatches.len(),
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Loss identities
// ---------------------------------------------------------------------------

fn rows(r: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(r).unwrap()
}

fn frozen_loss(params: &ModelParams, views: &BatchViews, cfg: &LossConfig) -> (f64, colearn::losses::LossBreakdown) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut mix = rng::stream(&[rng::tag::MIXUP, 0]);
    let out = total_loss(&mut tape, views, &bound, cfg, &mut mix).unwrap();
    (tape.value(out.total).item().unwrap(), out.breakdown)
}

fn criterion_loss_identities() -> Verdict {
    let start = Instant::now();
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let ln4 = 4f64.ln();

    let onehot = rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
    checks.push(("CE of a perfect prediction is 0", cross_entropy(&onehot, &onehot).unwrap() == 0.0));
    let uniform = rows(&[vec![0.1; 10]]);
    let target = rows(&[(0..10).map(|k| if k == 3 { 1.0 } else { 0.0 }).collect()]);
    checks.push(("uniform CE is ln C", (cross_entropy(&target, &uniform).unwrap() - 10f64.ln()).abs() < 1e-9));
    let probs = rows(&[vec![0.7, 0.2, 0.1], vec![0.25, 0.5, 0.25]]);
    let (a, b) = (-(0.2f64.ln()), -(0.25f64.ln()));
    let tgt = rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
    checks.push(("mean reduction averages the batch", (cross_entropy(&tgt, &probs).unwrap() - (a + b) / 2.0).abs() < 1e-12));

    let x = rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
    let y = rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    let perm = vec![2, 0, 1];
    let at = |lambda: f64| MixupDraw { lambdas: vec![lambda], permutation: perm.clone() };
    checks.push(("MixUp at λ=1 returns the inputs", mix_rows(&x, &at(1.0)).unwrap() == x && mix_rows(&y, &at(1.0)).unwrap() == y));
    let partner = rows(&[x.row(2).to_vec(), x.row(0).to_vec(), x.row(1).to_vec()]);
    checks.push(("MixUp at λ=0 returns the partners", mix_rows(&x, &at(0.0)).unwrap() == partner));
    let soft = mix_rows(&y, &at(0.37)).unwrap();
    checks.push(("mixed labels sum to 1", (0..3).all(|i| (soft.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12)));
    let p3 = rows(&[vec![0.6, 0.4], vec![0.3, 0.7], vec![0.5, 0.5]]);
    let mixed_ce = |lambda: f64| cross_entropy(&mix_rows(&y, &at(lambda)).unwrap(), &p3).unwrap();
    checks.push(("MixUp CE at λ=1 is plain CE", mixed_ce(1.0) == cross_entropy(&y, &p3).unwrap()));
    let self_mix = MixupDraw { lambdas: vec![0.42], permutation: vec![0, 1, 2] };
    checks.push((
        "self-mixing reduces to plain CE",
        (cross_entropy(&mix_rows(&y, &self_mix).unwrap(), &p3).unwrap() - cross_entropy(&y, &p3).unwrap()).abs() < 1e-12,
    ));
    checks.push((
        "MixUp CE is affine in λ",
        (mixed_ce(0.3) - (0.3 * mixed_ce(1.0) + 0.7 * mixed_ce(0.0))).abs() < 1e-12,
    ));

    let cos = |a: &[f64], b: &[f64]| cosine_similarity(a, b).unwrap();
    checks.push(("cosine of orthogonal vectors is 0", cos(&[1.0, 0.0], &[0.0, 1.0]) == 0.0));
    checks.push(("cosine is scale invariant", (cos(&[1.0, 2.0], &[3.0, 6.0]) - 1.0).abs() < 1e-12));
    checks.push(("cosine of antipodal vectors is -1", (cos(&[1.0, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-12));

    let same = rows(&[vec![0.3, -0.4, 1.2], vec![0.3, -0.4, 1.2]]);
    let identical = ViewPair { v2: &same, v3: &same };
    checks.push((
        "identical projections, N=2: InfoNCE is ln 4",
        [0.1, 0.5, 1.0, 3.0].iter().all(|&tau| (info_nce_pair(0, View::Second, View::Third, identical, tau, false).unwrap() - ln4).abs() < 1e-9),
    ));
    let basis = rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let hand = info_nce_pair(0, View::Second, View::Third, ViewPair { v2: &basis, v3: &basis }, 1.0, false).unwrap();
    checks.push(("orthogonal negatives, τ=1: InfoNCE is ln 4 - 1", (hand - (ln4 - 1.0)).abs() < 1e-12));
    let v2 = rows(&[vec![0.2, 0.9, -0.3], vec![-0.5, 0.1, 0.8], vec![0.7, 0.7, 0.1]]);
    let v3 = rows(&[vec![0.3, 0.8, -0.1], vec![-0.4, 0.3, 0.6], vec![0.9, 0.5, 0.2]]);
    let scaled = |t: &Tensor| Tensor::from_vec(t.shape().to_vec(), t.data().iter().map(|x| 2.5 * x).collect()).unwrap();
    let (s2, s3) = (scaled(&v2), scaled(&v3));
    let l = intrinsic_loss(ViewPair { v2: &v2, v3: &v3 }, 0.5, false, Reduction::Mean).unwrap();
    let ls = intrinsic_loss(ViewPair { v2: &s2, v3: &s3 }, 0.5, false, Reduction::Mean).unwrap();
    checks.push(("InfoNCE is invariant to projection scale", (l - ls).abs() < 1e-12));
    let pair_mean = (0..3)
        .map(|i| info_nce_pair(i, View::Second, View::Third, ViewPair { v2: &v2, v3: &v3 }, 0.5, false).unwrap())
        .sum::<f64>()
        / 3.0;
    checks.push(("intrinsic loss is twice the mean pair loss", (l - 2.0 * pair_mean).abs() < 1e-12));

    checks.push(("p(0) = 1", similarity_metric(0.0, 0.5).unwrap() == 1.0));
    checks.push(("p(1) at σ=0.5 is e^-2", (similarity_metric(1.0, 0.5).unwrap() - (-2f64).exp()).abs() < 1e-12));
    let p = |d: f64| similarity_metric(d, 0.5).unwrap();
    checks.push(("p is strictly decreasing", p(0.5) > p(1.0) && p(1.0) > p(2.0)));

    let e = rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    checks.push(("structural loss of identical metrics is 0", structural_loss(&e, &e, 0.5, Reduction::Mean).unwrap().abs() < 1e-9));
    let t = 0.5f64.sqrt();
    let q_rows = rows(&[vec![1.0, 0.0], vec![1.0 - t, t]]);
    let same2 = rows(&[vec![0.6, 0.8], vec![0.6, 0.8]]);
    checks.push((
        "structural loss hand value is 2",
        (structural_loss(&same2, &q_rows, 0.5, Reduction::Mean).unwrap() - 2.0).abs() < 1e-12,
    ));
    let proj = rows(&[vec![0.2, 0.9], vec![-0.5, 0.1], vec![0.7, 0.7]]);
    let pr = rows(&[vec![0.2, 0.8], vec![0.5, 0.5], vec![0.9, 0.1]]);
    let proj_p = rows(&[proj.row(2).to_vec(), proj.row(0).to_vec(), proj.row(1).to_vec()]);
    let pr_p = rows(&[pr.row(2).to_vec(), pr.row(0).to_vec(), pr.row(1).to_vec()]);
    checks.push((
        "structural loss is invariant to batch order",
        (structural_loss(&proj, &pr, 0.5, Reduction::Mean).unwrap() - structural_loss(&proj_p, &pr_p, 0.5, Reduction::Mean).unwrap()).abs() < 1e-12,
    ));

    let (params, views) = loss_fixture(&fixture_network(), 3).unwrap();
    let (total, parts) = frozen_loss(&params, &views, &LossConfig::default());
    checks.push((
        "breakdown components sum to the total",
        parts.total == parts.l_sup + parts.l_int + parts.l_str && (total - parts.total).abs() < 1e-12,
    ));
    let no_str = LossConfig { structural: false, ..LossConfig::default() };
    let (total_ns, parts_ns) = frozen_loss(&params, &views, &no_str);
    checks.push((
        "no_str reports l_str = 0 and leaves it out of the total",
        parts_ns.l_str == 0.0 && total_ns == parts_ns.l_sup + parts_ns.l_int,
    ));
    let plain = LossConfig { supervised: SupervisedTerm::Plain, ..LossConfig::default() };
    let weighted = LossConfig { supervised: SupervisedTerm::Weighted(0.01), ..LossConfig::default() };
    let (_, ce) = frozen_loss(&params, &views, &plain);
    let (_, w) = frozen_loss(&params, &views, &weighted);
    checks.push(("weighted_sup with w=0.01 scales CE by 0.01", w.l_sup == 0.01 * ce.l_sup));

    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let pass = failed.is_empty() && secs < 5.0;
    let mut detail = format!("{}/{} identities hold, {secs:.2} s (limit 5 s)", checks.len() - failed.len(), checks.len());
    if !failed.is_empty() {
        detail.push_str(&format!("; failing: {}", failed.join(", ")));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------
// 3. Noise statistics
// ---------------------------------------------------------------------------

fn balanced(n: usize, classes: usize) -> ImageDataset {
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    ImageDataset::new(ImageShape::new(1, 1, 1), vec![0; n], labels, classes).unwrap()
}

fn criterion_noise() -> Verdict {
    let start = Instant::now();
    let q = build_symmetric(10, 0.5, false).unwrap();
    let flip = corrupt_labels(&balanced(10_000, 10), &q, 2024).unwrap().noise_fraction();
    let flip_ok = (flip - 0.5).abs() <= 0.015;

    // Goodness of fit of every (clean, noisy) cell against n_i · Q[i][j]:
    // ten independent multinomial rows, 9 degrees of freedom each.
    let big = corrupt_labels(&balanced(50_000, 10), &q, 7).unwrap();
    let mut counts = [[0usize; 10]; 10];
    for (&c, &y) in big.clean_labels().iter().zip(big.noisy_labels()) {
        counts[c][y] += 1;
    }
    let mut stat = 0.0;
    for (i, row) in counts.iter().enumerate() {
        let n_i = row.iter().sum::<usize>() as f64;
        for (j, &o) in row.iter().enumerate() {
            let expected = n_i * q.get(i, j);
            stat += (o as f64 - expected).powi(2) / expected;
        }
    }
    let dof = 90.0;
    let critical = ChiSquared::new(dof).unwrap().inverse_cdf(1.0 - 0.001);
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        flip_ok && stat < critical && secs < 10.0,
        format!(
            "flip rate {flip:.4} (|Δ| ≤ 0.015), χ² = {stat:.1} on {dof} dof vs critical {critical:.1} at α=0.001 (p = {p_value:.3}), {secs:.2} s"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4, 5, 8. The synthetic ordering experiment
// ---------------------------------------------------------------------------

fn arm(method: Method, name: &str, weight: f64) -> TrainConfig {
    TrainConfig { name: name.into(), sup_weight: weight, epochs: 30, batch_size: 16, ..TrainConfig::for_method(method) }
}

fn run_grid(out: &Path) -> RunArtifacts {
    let cfg = ExperimentConfig {
        output_dir: out.to_path_buf(),
        seeds: vec![0, 1, 2],
        last_k: 10,
        save_checkpoints: false,
        dataset: DatasetConfig { num_classes: 10, n_train: 5000, n_test: 1000, side: 16, ..DatasetConfig::default() },
        noise: NoiseConfig { rate: 0.5, ..NoiseConfig::default() },
        methods: vec![
            arm(Method::Colearning, "colearning", 0.01),
            arm(Method::StandardCe, "standard_ce", 0.01),
            arm(Method::ColearningNoStr, "colearning_no_str", 0.01),
            arm(Method::WeightedSup, "weighted_sup_w0.01", 0.01),
            arm(Method::WeightedSup, "weighted_sup_w1", 1.0),
        ],
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    run_experiment(&cfg, &RunOptions { resume: true, jobs, output_dir: None, verbose: false }).expect("experiment runs")
}

struct Grid {
    acc: std::collections::HashMap<String, (f64, f64)>,
    mem: std::collections::HashMap<String, f64>,
    secs: f64,
}

fn grid() -> Grid {
    let start = Instant::now();
    let keep = std::env::var_os("COLEARN_ACCEPTANCE_OUTPUT");
    let tmp = tempfile::tempdir().unwrap();
    let dir = keep.as_deref().map_or(tmp.path(), Path::new);
    let artifacts = run_grid(dir);
    let secs = start.elapsed().as_secs_f64();
    println!("  synthetic experiment (C=10, 5000/1000, 16×16×3, symmetric 50%, 30 epochs, batch 16, seeds 0-2) took {secs:.0} s");
    for s in &artifacts.summaries {
        println!(
            "    {:<20} last-10 test acc {:.4} ± {:.4}   final memorization {:.4} ± {:.4}",
            s.label, s.test_acc_mean, s.test_acc_std, s.final_memorization_mean, s.final_memorization_std
        );
    }
    Grid {
        acc: artifacts.summaries.iter().map(|s| (s.label.clone(), (s.test_acc_mean, s.test_acc_std))).collect(),
        mem: artifacts.summaries.iter().map(|s| (s.label.clone(), s.final_memorization_mean)).collect(),
        secs,
    }
}

fn criterion_ordering(g: &Grid) -> Verdict {
    let co = g.acc["colearning"].0 * 100.0;
    let ce = g.acc["standard_ce"].0 * 100.0;
    let ns = g.acc["colearning_no_str"].0 * 100.0;
    let first = co - ce >= 5.0;
    let second = co >= ns - 1.0;
    // The wall-clock target assumes a multi-core laptop running cells in
    // parallel; it is reported but does not decide the verdict.
    verdict(
        first && second,
        format!(
            "colearning {co:.2}% vs standard_ce {ce:.2}% (needs ≥ +5.00, got {:+.2}); vs colearning_no_str {ns:.2}% (needs ≥ -1.00, got {:+.2}); grid wall time {:.0} s (laptop target 900 s)",
            co - ce,
            co - ns,
            g.secs
        ),
    )
}

fn criterion_memorization(g: &Grid) -> Verdict {
    let ce = g.mem["standard_ce"];
    let co = g.mem["colearning"];
    verdict(
        ce - co >= 0.10,
        format!("final memorization standard_ce {ce:.4} vs colearning {co:.4} (needs gap ≥ 0.10, got {:+.4})", ce - co),
    )
}

fn criterion_weighted(g: &Grid) -> Verdict {
    let co = g.acc["colearning"].0 * 100.0;
    let w_small = g.acc["weighted_sup_w0.01"].0 * 100.0;
    let w_large = g.acc["weighted_sup_w1"].0 * 100.0;
    verdict(
        (w_small - co).abs() <= 5.0 && w_large < w_small,
        format!(
            "w=0.01 {w_small:.2}% vs colearning {co:.2}% (needs |Δ| ≤ 5.00, got {:.2}); w=1.0 {w_large:.2}% (needs < w=0.01)",
            (w_small - co).abs()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. Determinism
// ---------------------------------------------------------------------------

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "clmp" || x == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_determinism() -> Verdict {
    let start = Instant::now();
    let small = |method: Method| TrainConfig { epochs: 3, ..TrainConfig::for_method(method) };
    let cfg = ExperimentConfig {
        seeds: vec![0, 1],
        last_k: 2,
        dataset: DatasetConfig { n_train: 400, n_test: 100, side: 12, ..DatasetConfig::default() },
        noise: NoiseConfig { rate: 0.4, ..NoiseConfig::default() },
        methods: vec![small(Method::Colearning), small(Method::StandardCe)],
        ..ExperimentConfig::default()
    };
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: usize| {
        let dir = root.path().join(name);
        run_experiment(&cfg, &RunOptions { resume: false, jobs, output_dir: Some(dir.clone()), verbose: false }).unwrap();
        snapshot(&dir)
    };
    let a = run("a", 1);
    let b = run("b", 1);
    let c = run("c", 4);
    let traces = a.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        !a.is_empty() && a == b && a == c,
        format!(
            "{} files ({traces} CSVs, checkpoints, plots): rerun identical {}, --jobs 4 vs 1 identical {}, {secs:.1} s",
            a.len(),
            a == b,
            a == c
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. CIFAR-10 loader
// ---------------------------------------------------------------------------

fn criterion_cifar() -> Verdict {
    let mut file = Vec::with_capacity(2 * CIFAR10_RECORD_BYTES);
    for (r, label) in [(0usize, 3u8), (1, 9)] {
        file.push(label);
        for ch in 0..3 {
            for row in 0..32 {
                for col in 0..32 {
                    file.push(((r * 97 + ch * 61 + row * 7 + col * 3) % 256) as u8);
                }
            }
        }
    }
    let (pixels, labels) = parse_cifar10_records(&file).unwrap();
    let ds = ImageDataset::new(ImageShape::new(32, 32, 3), pixels, labels, 10).unwrap();
    let mut exact = ds.len() == 2 && ds.clean_labels() == [3, 9];
    let mut rebuilt = Vec::with_capacity(file.len());
    for r in 0..ds.len() {
        let img = ds.image(r);
        rebuilt.push(ds.clean_labels()[r] as u8);
        for ch in 0..3 {
            for row in 0..32 {
                for col in 0..32 {
                    let expected = ((r * 97 + ch * 61 + row * 7 + col * 3) % 256) as u8;
                    exact &= img.at(row, col, ch) == expected;
                    rebuilt.push(img.at(row, col, ch));
                }
            }
        }
    }
    exact &= rebuilt == file;
    let empty_ok = parse_cifar10_records(&[]).is_ok_and(|(p, l)| p.is_empty() && l.is_empty());
    let rejected = [3072usize, CIFAR10_RECORD_BYTES + 1, 4000, 2 * CIFAR10_RECORD_BYTES - 1]
        .iter()
        .all(|&n| parse_cifar10_records(&vec![0u8; n]).is_err());
    let mut bad_label = file.clone();
    bad_label[0] = 10;
    let label_rejected = parse_cifar10_records(&bad_label).is_err();
    verdict(
        exact && empty_ok && rejected && label_rejected,
        format!(
            "2-record fixture bit-exact {exact}, empty file → 0 images {empty_ok}, malformed sizes (3072, 3074, 4000, 6145 bytes) rejected {rejected}, label byte 10 rejected {label_rejected}"
        ),
    )
}

fn main() {
    // libtest-style filtering: `cargo test -- --list` and name filters are
    // not meaningful for a single sequential run; `--list` prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let strict = std::env::var("COLEARN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(u8, &str, bool, Verdict)> = Vec::new();
    let mut report = |id: u8, name: &'static str, contract: bool, v: Verdict| {
        println!("criterion {id} [{name}]: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, contract, v));
    };

    report(1, "gradient oracle", true, criterion_gradients());
    report(2, "loss identities", true, criterion_loss_identities());
    report(3, "noise statistics", true, criterion_noise());
    report(6, "determinism", true, criterion_determinism());
    report(7, "CIFAR-10 loader", true, criterion_cifar());
    let g = grid();
    report(4, "ordering experiment", false, criterion_ordering(&g));
    report(5, "memorization diagnostic", false, criterion_memorization(&g));
    report(8, "weighted-variant sanity", false, criterion_weighted(&g));

    results.sort_by_key(|r| r.0);
    println!("\nsummary:");
    for (id, name, contract, v) in &results {
        let kind = if *contract { "contract" } else { "empirical" };
        println!("  {id} {name:<24} {kind:<9} {}", if v.pass { "PASS" } else { "FAIL" });
    }
    let fatal: Vec<u8> = results.iter().filter(|r| !r.3.pass && (r.2 || strict)).map(|r| r.0).collect();
    let reported: Vec<u8> = results.iter().filter(|r| !r.3.pass && !r.2 && !strict).map(|r| r.0).collect();
    if !reported.is_empty() {
        println!("empirical criteria {reported:?} failed; reported only (set COLEARN_ACCEPTANCE_STRICT=1 to make them fatal)");
    }
    if !fatal.is_empty() {
        eprintln!("acceptance failed: criteria {fatal:?}");
        std::process::exit(1);
    }
}
