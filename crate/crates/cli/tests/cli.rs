use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multirate::bilinear::load_descriptor;
use multirate::bilinear::SketchParams;
use multirate::media::{save_flow, save_frame, FlowField, Frame};
use multirate::rng;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multirate")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--out", path(dir), "gen"];
    args.extend_from_slice(extra);
    run(&args)
}

// --------------------------------------------------------------------- gen

#[test]
fn gen_writes_manifest_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = gen(&out, &["--classes", "3", "--videos", "2", "--frames", "12", "--canvas", "24x32"]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).trim().ends_with("manifest.tsv"));
    let manifest = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 6);
    let frames = tree(&out).iter().filter(|(n, _)| n.ends_with(".pgm")).count();
    assert_eq!(frames, 6 * 12);
}

#[test]
fn gen_rejects_a_single_class() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gen(dir.path(), &["--classes", "1"])), 2);
    assert_eq!(code(&gen(dir.path(), &["--canvas", "0x5"])), 2);
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let flags = ["--classes", "2", "--videos", "2", "--frames", "10"];
    assert_eq!(code(&gen(a.path(), &flags)), 0);
    assert_eq!(code(&gen(b.path(), &flags)), 0);
    assert_eq!(tree(a.path()), tree(b.path()));
}

// ------------------------------------------------------------------ sample

fn index_lists(s: &str) -> Vec<Vec<usize>> {
    s.lines()
        .map(|l| l.split_whitespace().filter(|t| *t != "|").map(|t| t.parse().unwrap()).collect())
        .collect()
}

#[test]
fn sample_zero_max_stride_is_consecutive() {
    let o = run(&["sample", "--len", "8", "--max-stride", "0", "--video-len", "50", "--count", "20"]);
    assert_eq!(code(&o), 0);
    let lists = index_lists(&stdout(&o));
    assert_eq!(lists.len(), 20);
    for l in lists {
        assert_eq!(l.len(), 8);
        assert!(l.windows(2).all(|w| w[1] == w[0] + 1));
    }
}

#[test]
fn sample_obeys_bounds_and_segments() {
    let o = run(&["--seed", "4", "sample", "--len", "5", "--max-stride", "3", "--video-len", "60", "--count", "50", "--segments", "3"]);
    assert_eq!(code(&o), 0);
    for l in index_lists(&stdout(&o)) {
        assert_eq!(l.len(), 15);
        assert!(l.iter().all(|&i| i < 60));
        for clip in l.chunks(5) {
            assert!(clip.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= 3));
        }
    }
}

#[test]
fn sample_histogram_counts_every_stride() {
    let o = run(&["sample", "--len", "11", "--max-stride", "5", "--video-len", "120", "--count", "100000", "--hist"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut sum = 0u64;
    let mut total = 0u64;
    for line in text.lines().skip(1) {
        let mut f = line.split('\t');
        let (k, n) = (f.next().unwrap(), f.next().unwrap().parse::<u64>().unwrap());
        if k == "total" {
            total = n;
        } else {
            let s: usize = k.parse().unwrap();
            assert!(s <= 5);
            sum += n;
            // each of the six strides is drawn about a sixth of the time
            assert!((n as f64 - 1_000_000.0 / 6.0).abs() < 3000.0, "stride {s}: {n}");
        }
    }
    assert_eq!(sum, 100_000 * 10);
    assert_eq!(total, sum);
}

#[test]
fn sample_rejects_short_videos() {
    assert_eq!(code(&run(&["sample", "--video-len", "5", "--len", "10"])), 2);
    assert_eq!(code(&run(&["sample", "--len", "0"])), 2);
}

// --------------------------------------------------------------- flowcheck

fn flow_row<'a>(text: &'a str, name: &str) -> &'a str {
    text.lines().find(|l| l.starts_with(&format!("{name}\t"))).unwrap_or_else(|| panic!("no {name} row in {text}"))
}

#[test]
fn flowcheck_default_scene_passes() {
    let o = run(&["flowcheck"]);
    let text = stdout(&o);
    assert_eq!(code(&o), 0, "{text}");
    for name in ["warp_identity", "warp_shift", "occlusion_iou", "gt_loss_below_zero_flow_loss", "gradient"] {
        assert!(flow_row(&text, name).contains("\tPASS\t"), "{text}");
    }
    let err: f64 = flow_row(&text, "max_gradient_relative_error").split('\t').nth(1).unwrap().parse().unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn flowcheck_zero_flow_has_the_larger_loss() {
    let loss = |flow: &str| -> f64 {
        let o = run(&["flowcheck", "--flow", flow]);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        flow_row(&text, "loss").split('\t').nth(2).unwrap().split(' ').next().unwrap().parse().unwrap()
    };
    assert!(loss("all-zero") > loss("gt"));
}

#[test]
fn flowcheck_reports_failures_with_exit_one() {
    // a tolerance no finite-difference check can meet
    let o = run(&["flowcheck", "--tolerance", "1e-14"]);
    assert_eq!(code(&o), 1);
    assert!(flow_row(&stdout(&o), "gradient").contains("\tFAIL\t"));
}

#[test]
fn flowcheck_rejects_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    save_frame(&Frame::filled(8, 8, 1, 0.5).unwrap(), p("a.pgm")).unwrap();
    save_frame(&Frame::filled(8, 8, 1, 0.25).unwrap(), p("b.pgm")).unwrap();
    save_flow(&FlowField::constant(8, 8, 0.3, 0.2), p("f.flo")).unwrap();
    save_flow(&FlowField::zeros(6, 8), p("g.flo")).unwrap();
    save_flow(&FlowField::constant(8, 8, -0.3, -0.2), p("h.flo")).unwrap();
    let args = |bwd: &str| {
        vec![
            "flowcheck".to_string(),
            "--frame1".into(),
            path(&p("a.pgm")).into(),
            "--frame2".into(),
            path(&p("b.pgm")).into(),
            "--flow-fwd".into(),
            path(&p("f.flo")).into(),
            "--flow-bwd".into(),
            path(&p(bwd)).into(),
        ]
    };
    let o = Command::new(env!("CARGO_BIN_EXE_multirate")).args(args("g.flo")).output().unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_multirate")).args(args("h.flo")).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn flowcheck_rejects_invalid_constants() {
    assert_eq!(code(&run(&["flowcheck", "--eps", "0"])), 2);
    assert_eq!(code(&run(&["flowcheck", "--alpha2", "-1"])), 2);
}

// ------------------------------------------------------------------ encode

#[test]
fn encode_unit_dimension_is_a_signed_product() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--seed", "3", "--out", path(dir.path()), "encode", "--dim", "1", "--channels", "2", "--grid", "1", "--maps", "1",
        "--exact", "--no-normalize",
    ];
    let o = run(&args);
    assert_eq!(code(&o), 0, "{o:?}");
    let sketch = load_descriptor(dir.path().join("map_0000.cbpd")).unwrap();
    let exact = load_descriptor(dir.path().join("map_0000.exact.cbpd")).unwrap();
    assert_eq!(sketch.len(), 1);
    assert_eq!(exact.len(), 4);
    // (s1 . x)(s2 . x) = sum_ij s1_i s2_j x_i x_j
    let p = SketchParams::new(2, 1, rng::derive(3, &[2])).unwrap();
    let mut expected = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            expected += f64::from(p.s1[i]) * f64::from(p.s2[j]) * f64::from(exact.values[i * 2 + j]);
        }
    }
    assert!((f64::from(sketch.values[0]) - expected).abs() < 1e-5, "{} vs {expected}", sketch.values[0]);
}

fn sketch_error(dim: usize) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let d = dim.to_string();
    let o = run(&["--out", path(dir.path()), "encode", "--channels", "16", "--dim", &d, "--exact"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    flow_row(&text, "sketch_relative_error").split('\t').nth(1).unwrap().trim_start_matches("median ").parse().unwrap()
}

#[test]
fn encode_error_shrinks_when_dimension_doubles() {
    for d in [1024, 4096] {
        let (a, b) = (sketch_error(d), sketch_error(2 * d));
        assert!(b < a, "d={d}: {a} then {b}");
    }
}

#[test]
fn encode_rejects_non_power_of_two() {
    assert_eq!(code(&run(&["encode", "--dim", "1000"])), 2);
    assert_eq!(code(&run(&["encode", "--dim", "0"])), 2);
}

#[test]
fn encode_dataset_writes_both_streams() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert_eq!(code(&gen(&ds, &["--classes", "2", "--videos", "1", "--frames", "20", "--canvas", "24x24"])), 0);
    let out = dir.path().join("enc");
    let o = run(&["--out", path(&out), "encode", "--dataset", path(&ds), "--dim", "64"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let files: Vec<String> = tree(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(files.len(), 4, "{files:?}");
    for f in &files {
        let d = load_descriptor(out.join(f)).unwrap();
        assert_eq!(d.len(), 64);
        assert!((d.norm() - 1.0).abs() < 1e-4);
    }
}

// -------------------------------------------------------------- experiment

fn small_dataset(dir: &Path) -> String {
    let ds = dir.join("ds");
    assert_eq!(code(&gen(&ds, &["--classes", "2", "--videos", "5", "--frames", "72", "--canvas", "24x24"])), 0);
    path(&ds).to_string()
}

fn experiment(dir: &Path, ds: &str, out: &str, extra: &[&str]) -> Output {
    let out = dir.join(out);
    let mut args = vec![
        "--out", path(&out), "experiment", "--dataset", ds, "--seeds", "1", "--epochs", "4", "--dim", "32", "--anchors",
        "2", "--crop", "20", "--grid", "2", "--test-fraction", "0.4",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn experiment_fixed_only_has_one_regime_row() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let o = experiment(dir.path(), &ds, "ex", &["--regimes", "fixed-only", "--no-sweep"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let grid = fs::read_to_string(dir.path().join("ex/grid.tsv")).unwrap();
    let rows: Vec<&str> = grid.lines().collect();
    assert_eq!(rows.len(), 2, "{grid}");
    assert!(rows[1].starts_with("without_rts\t"));
    let report = fs::read_to_string(dir.path().join("ex/report.tsv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "regime\tperturbation\tseed\taccuracy");
    assert_eq!(report.lines().count(), 1 + 5);
    assert!(!dir.path().join("ex/sweep.tsv").exists());
}

#[test]
fn experiment_outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let extra = ["--sweep-strides", "0,3"];
    let one = experiment(dir.path(), &ds, "t1", &[&["--threads", "1"][..], &extra[..]].concat());
    let four = experiment(dir.path(), &ds, "t4", &[&["--threads", "4"][..], &extra[..]].concat());
    assert_eq!(code(&one), 0, "{one:?}");
    assert_eq!(code(&four), 0);
    for f in ["report.tsv", "grid.tsv", "sweep.tsv"] {
        assert_eq!(fs::read(dir.path().join("t1").join(f)).unwrap(), fs::read(dir.path().join("t4").join(f)).unwrap(), "{f}");
    }
    assert_eq!(stdout(&one), stdout(&four));
}

#[test]
fn experiment_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    assert_eq!(code(&run(&["experiment", "--dataset", path(&missing)])), 2);
    assert_eq!(code(&run(&["experiment"])), 2);
    let ds = small_dataset(dir.path());
    assert_eq!(code(&experiment(dir.path(), &ds, "x", &["--dim", "30"])), 2);
    assert_eq!(code(&experiment(dir.path(), &ds, "x", &["--regimes", "rts-only", "--assert-trends"])), 2);
    // fixed(9) leaves 8 of 72 frames, too few for an 11-frame clip
    assert_eq!(code(&experiment(dir.path(), &ds, "x", &["--fixed", "9"])), 2);
}

#[test]
fn experiment_stride_reading_labels_columns() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let o = experiment(dir.path(), &ds, "ex", &["--fixed-reading", "stride", "--fixed", "2", "--no-sweep"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let grid = fs::read_to_string(dir.path().join("ex/grid.tsv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "regime\tnone\tevery(2)\trandom(5)");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--threads", "0", "sample"])), 2);
}
