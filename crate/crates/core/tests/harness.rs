use std::path::Path;
use std::process::Command;

use colearn::eval::{last_k_summary, mean_and_std, MetricsRow};
use colearn::harness::{parse_config, read_trace_csv};
use colearn::plot::{render_svg, PlotSeries};

const CONFIG: &str = r#"
seeds = [0, 1]
last_k = 2

[dataset]
n_train = 240
n_test = 60
side = 8
num_classes = 4

[noise]
rate = 0.4

[[methods]]
method = "colearning"
epochs = 3

[[methods]]
method = "standard_ce"
epochs = 3
"#;

fn colearn(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_colearn")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn run_writes_every_artifact_and_is_deterministic_across_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    for (dir, jobs) in [(&one, "1"), (&four, "4")] {
        let out = colearn(&["run", &cfg, "--output-dir", dir.to_str().unwrap(), "--jobs", jobs]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("colearning: last-2 test accuracy"), "{stdout}");
    }
    let a = outputs(&one);
    assert_eq!(a, outputs(&four), "--jobs 4 differs from --jobs 1");

    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for cell in ["colearning_s0", "colearning_s1", "standard_ce_s0", "standard_ce_s1"] {
        for ext in ["csv", "clmp", "done"] {
            assert!(names.contains(&format!("{cell}.{ext}").as_str()), "missing {cell}.{ext} in {names:?}");
        }
    }
    for stem in ["l_sup", "l_int", "l_str", "l_total", "test_acc", "clean_train_acc", "memorization"] {
        assert!(names.contains(&format!("{stem}.svg").as_str()), "missing {stem}.svg");
    }

    // The summary is last_k_summary of the traces as stored.
    let traces: Vec<Vec<MetricsRow>> =
        ["colearning_s0", "colearning_s1"].iter().map(|c| read_trace_csv(&one.join(format!("{c}.csv"))).unwrap()).collect();
    assert!(traces.iter().all(|t| t.len() == 3));
    let (mean, std) = last_k_summary(&traces, 2).unwrap();
    let finals: Vec<f64> = traces.iter().map(|t| t[2].noisy_subset_memorization).collect();
    let (mem_mean, _) = mean_and_std(&finals);
    let summary = std::fs::read_to_string(one.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,seeds,last_k,test_acc_mean,test_acc_std,final_memorization_mean,final_memorization_std"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], ["colearning", "2", "2"]);
    let close = |s: &str, v: f64| (s.parse::<f64>().unwrap() - v).abs() <= 1e-5 * v.abs().max(1e-12);
    assert!(close(row[3], mean) && close(row[4], std) && close(row[5], mem_mean), "{row:?} vs {mean} {std} {mem_mean}");

    // Rerunning into the same directory reproduces the bytes.
    let again = colearn(&["run", &cfg, "--output-dir", one.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(a, outputs(&one));
}

#[test]
fn resume_skips_finished_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let dir = tmp.path().join("out");
    let d = dir.to_str().unwrap();
    assert!(colearn(&["run", &cfg, "--output-dir", d]).status.success());
    let before = outputs(&dir);

    // An unfinished cell (no marker) is rerun; finished ones are kept.
    std::fs::remove_file(dir.join("standard_ce_s1.done")).unwrap();
    std::fs::write(dir.join("standard_ce_s1.csv"), "garbage").unwrap();
    let out = colearn(&["run", &cfg, "--output-dir", d, "--resume"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[standard_ce_s1] start"), "{stderr}");
    assert!(!stderr.contains("[colearning_s0] start"), "{stderr}");
    assert_eq!(before, outputs(&dir));
}

#[test]
fn config_errors_exit_1_with_key_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (CONFIG.replace("epochs = 3\n\n[[methods]]", "tua = 0.5\n\n[[methods]]"), "methods[0].tua", Some("did you mean `tau`")),
        (CONFIG.replace("rate = 0.4", "rate = 1.4"), "noise.rate", None),
        (CONFIG.replace("[noise]", "[noize]"), "noize", Some("did you mean `noise`")),
        (CONFIG.replace("seeds = [0, 1]", ""), "seeds", None),
        (CONFIG.replace("method = \"standard_ce\"", "method = \"sgd\""), "methods[1]", None),
        (CONFIG.replace("epochs = 3\n\n[[methods]]", "epochs = 0\n\n[[methods]]"), "methods[0].epochs", None),
    ];
    for (text, path, hint) in cases {
        let cfg = write_config(tmp.path(), &text);
        let out = colearn(&["run", &cfg, "--output-dir", tmp.path().join("never").to_str().unwrap()]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(1), "{path}: {stderr}");
        assert!(stderr.contains(path), "expected `{path}` in: {stderr}");
        if let Some(h) = hint {
            assert!(stderr.contains(h), "expected `{h}` in: {stderr}");
        }
        assert!(!tmp.path().join("never").exists(), "{path}: outputs written for an invalid config");
    }
    let missing = colearn(&["run", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(colearn(&["bogus"]).status.code(), Some(1));
    assert_eq!(colearn(&["run"]).status.code(), Some(1));
    assert_eq!(colearn(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let file = tmp.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    let out = colearn(&["run", &cfg, "--output-dir", file.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gradcheck_subcommand_passes() {
    let out = colearn(&["gradcheck"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("0 mismatches"), "{stdout}");
}

#[test]
fn corrupt_subcommand_writes_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let dir = tmp.path().join("data");
    let out = colearn(&["corrupt", &cfg, "--output-dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train = colearn::data::ImageDataset::load_clds(&dir.join("train.clds")).unwrap();
    let test = colearn::data::ImageDataset::load_clds(&dir.join("test.clds")).unwrap();
    assert_eq!((train.len(), test.len()), (240, 60));
    assert_eq!(test.noise_fraction(), 0.0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("noise fraction: {:.4}", train.noise_fraction())), "{stdout}");
    assert!(stdout.contains(&format!("{:016x}", train.noisy_label_digest())), "{stdout}");
}

#[test]
fn parsed_config_matches_file() {
    let cfg = parse_config(CONFIG).unwrap();
    assert_eq!(cfg.seeds, [0, 1]);
    assert_eq!(cfg.methods.len(), 2);
    assert_eq!(cfg.methods[1].epochs, 3);
    assert_eq!(cfg.dataset.num_classes, 4);
    assert_eq!(cfg.noise.rate, 0.4);
}

fn legend_names(svg: &str) -> Vec<String> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    let legend = doc.descendants().find(|n| n.attribute("class") == Some("legend")).expect("legend group");
    legend.children().filter(|n| n.has_tag_name("text")).map(|n| n.text().unwrap_or("").to_string()).collect()
}

#[test]
fn svg_is_well_formed_with_ordered_legend() {
    let a = PlotSeries { name: "colearning".into(), mean: vec![0.2, 0.5, 0.7], std: vec![0.01, 0.02, 0.03] };
    let b = PlotSeries { name: "standard_ce".into(), mean: vec![0.3, 0.4, 0.45], std: vec![0.0; 3] };
    let svg = render_svg(&[a, b], "Test accuracy").unwrap();
    assert_eq!(legend_names(&svg), ["colearning", "standard_ce"]);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("mean")).count(), 2);
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("band")).count(), 2);
}

/// Pixel y coordinates of a series' mean polyline.
fn mean_ys(svg: &str) -> Vec<f64> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let line = doc.descendants().find(|n| n.attribute("class") == Some("mean")).unwrap();
    line.attribute("points").unwrap().split_whitespace().map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn constant_series_gets_a_visible_range() {
    let flat = PlotSeries { name: "flat".into(), mean: vec![0.5; 4], std: vec![0.0; 4] };
    let svg = render_svg(&[flat], "flat").unwrap();
    let ys = mean_ys(&svg);
    assert!(ys.windows(2).all(|w| w[0] == w[1]));
    // Plot area spans y ∈ [40, 390]; the padded range [0.45, 0.55] puts the
    // line in the middle.
    assert!((ys[0] - 215.0).abs() < 1e-6, "{}", ys[0]);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let ticks: Vec<f64> = doc
        .descendants()
        .find(|n| n.attribute("class") == Some("y-ticks"))
        .unwrap()
        .children()
        .filter(|n| n.has_tag_name("text"))
        .map(|n| n.text().unwrap().parse().unwrap())
        .collect();
    assert!(ticks.first().unwrap() <= &0.46 && ticks.last().unwrap() >= &0.54, "{ticks:?}");

    let single = PlotSeries { name: "one epoch".into(), mean: vec![0.3], std: vec![0.0] };
    assert!(roxmltree::Document::parse(&render_svg(&[single], "one").unwrap()).is_ok());
}
