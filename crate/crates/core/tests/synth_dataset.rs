use std::fs;
use std::path::Path;

use multirate::synth::{gen_dataset, generate_videos, read_manifest, DatasetConfig, MotionConfig, MANIFEST_FILE};

fn small(seed: u64) -> DatasetConfig {
    DatasetConfig {
        n_classes: 2,
        videos_per_class: 1,
        frames: 16,
        seed,
        ..DatasetConfig::default()
    }
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

#[test]
fn two_classes_one_video_sixteen_frames() {
    let dir = tempfile::tempdir().unwrap();
    let entries = gen_dataset(&small(0), dir.path()).unwrap();
    assert_eq!(entries.len(), 2);
    let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.trim().is_empty()).count(), 2);
    let frames = tree(dir.path()).iter().filter(|(n, _)| n.ends_with(".pgm")).count();
    assert_eq!(frames, 32);
    let back = read_manifest(dir.path()).unwrap();
    assert_eq!(back, entries);
    for e in &back {
        assert_eq!(e.num_frames, 16);
        assert!(e.relative_path.starts_with(e.class_id.to_string()));
    }
}

#[test]
fn same_seed_gives_identical_trees() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_dataset(&small(5), a.path()).unwrap();
    gen_dataset(&small(5), b.path()).unwrap();
    gen_dataset(&small(6), c.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn single_class_is_rejected() {
    let cfg = DatasetConfig {
        n_classes: 1,
        ..small(0)
    };
    let dir = tempfile::tempdir().unwrap();
    assert!(gen_dataset(&cfg, dir.path()).is_err());
}

/// Mean per-sprite speed recovered from the integer displacements. Per-axis
/// total variation is used because rounding errors telescope along each
/// monotone stretch, unlike per-step Euclidean lengths.
fn class_speeds(cfg: &DatasetConfig) -> Vec<f64> {
    let videos = generate_videos(cfg).unwrap();
    let mut sum = vec![0.0; cfg.n_classes];
    let mut count = vec![0usize; cfg.n_classes];
    for v in &videos {
        let t = &v.tracks;
        let steps = t.frame_count() - 1;
        for k in 0..t.sprite_count() {
            let (mut tx, mut ty) = (0i64, 0i64);
            for f in 0..steps {
                let (a, b) = (t.position(k, f), t.position(k, f + 1));
                tx += (b.0 - a.0).abs();
                ty += (b.1 - a.1).abs();
            }
            sum[v.entry.class_id] += ((tx * tx + ty * ty) as f64).sqrt() / steps as f64;
            count[v.entry.class_id] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, n)| s / *n as f64).collect()
}

#[test]
fn fast_and_slow_classes_differ_by_the_speed_ratio() {
    for ratio in [2.5, 3.0] {
        let cfg = DatasetConfig {
            n_classes: 2,
            videos_per_class: 30,
            frames: 60,
            seed: 1,
            motion: MotionConfig {
                fast_ratio: ratio,
                ..MotionConfig::default()
            },
            ..DatasetConfig::default()
        };
        let s = class_speeds(&cfg);
        let measured = s[1] / s[0];
        assert!((measured - ratio).abs() <= 0.05 * ratio, "ratio {ratio}: measured {measured} from {s:?}");
    }
}
