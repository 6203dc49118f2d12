//! `multirate`: dataset generation, sampler inspection, flow-loss checks,
//! descriptor encoding and the frame-rate robustness experiment.
//!
//! Exit status: 0 on success, 1 on runtime or check failure, 2 on invalid
//! usage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use multirate::bilinear::{exact_bilinear, normalize_descriptor, save_descriptor, Descriptor, FeatureMap, SketchParams, TensorSketcher};
use multirate::flow::{
    check_loss_gradient, inverse_warp, occlusion_aware_loss, occlusion_flags, CharbonnierParams, OcclusionParams,
};
use multirate::media::{load_flow, load_frame, FlowField};
use multirate::pipeline::{
    extract_features, load_dataset, robustness_experiment, stride_sweep, sweep_trends, table_trends, EvalConfig,
    ExperimentConfig, FeatureConfig, Regime, TrendCheck,
};
use multirate::rng;
use multirate::sampler::{sample_consecutive, sample_segment_clips, SamplerConfig};
use multirate::synth::{gen_dataset, render_sequence, smooth_flow, DatasetConfig, MotionConfig, Perturbation, SceneSpec, MANIFEST_FILE};

#[derive(Parser, Debug)]
#[command(name = "multirate", version, about = "Multirate video recognition toolkit")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Maximum worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multirate sprite dataset.
    Gen(GenArgs),
    /// Draw clip indices with random temporal skipping.
    Sample(SampleArgs),
    /// Check warping, occlusion, loss and its gradient.
    Flowcheck(FlowcheckArgs),
    /// Write compact bilinear descriptors.
    Encode(EncodeArgs),
    /// Run the frame-rate robustness experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Videos per class.
    #[arg(long, default_value_t = 50)]
    videos: usize,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    /// Canvas size as HEIGHTxWIDTH.
    #[arg(long, default_value = "48x48", value_parser = parse_size)]
    canvas: (usize, usize),
    /// Fast-to-slow speed ratio.
    #[arg(long, default_value_t = MotionConfig::default().fast_ratio)]
    speed_ratio: f64,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Clip length.
    #[arg(long, default_value_t = 11)]
    len: usize,
    #[arg(long, default_value_t = 5)]
    max_stride: usize,
    #[arg(long, default_value_t = 120)]
    video_len: usize,
    /// Number of draws.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// One clip per segment of the video.
    #[arg(long, default_value_t = 1)]
    segments: usize,
    /// Print a stride histogram instead of the index lists.
    #[arg(long)]
    hist: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FlowChoice {
    /// Ground-truth flow of the generated scene.
    Gt,
    /// All-zero flow.
    #[value(alias = "all-zero")]
    Zero,
}

#[derive(Args, Debug)]
struct FlowcheckArgs {
    /// Flow evaluated on the generated scene.
    #[arg(long, value_enum, default_value_t = FlowChoice::Gt)]
    flow: FlowChoice,
    /// Generated scene size (square).
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Integer sprite displacement per frame as DX,DY.
    #[arg(long, default_value = "2,1", value_parser = parse_shift)]
    shift: (i64, i64),
    #[arg(long, default_value_t = 0.01)]
    alpha1: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha2: f64,
    #[arg(long, default_value_t = 0.001)]
    eps: f64,
    #[arg(long, default_value_t = 0.45)]
    charbonnier_alpha: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Relative-error tolerance of the gradient check.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// First frame (PGM/PPM); use with --frame2, --flow-fwd, --flow-bwd.
    #[arg(long, requires_all = ["frame2", "flow_fwd", "flow_bwd"])]
    frame1: Option<PathBuf>,
    #[arg(long)]
    frame2: Option<PathBuf>,
    /// Forward flow (.flo).
    #[arg(long)]
    flow_fwd: Option<PathBuf>,
    /// Backward flow (.flo).
    #[arg(long)]
    flow_bwd: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Sketch dimension (power of two).
    #[arg(long, default_value_t = 8192)]
    dim: usize,
    /// Also write the exact bilinear descriptor and report the sketch error.
    #[arg(long)]
    exact: bool,
    /// Independent sketch draws used to estimate the error with --exact.
    #[arg(long, default_value_t = 16, requires = "exact")]
    trials: usize,
    /// Skip signed square root and L2 normalization.
    #[arg(long)]
    no_normalize: bool,
    /// Dataset root; descriptors of the middle clip of each video.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Restrict to one video id.
    #[arg(long, requires = "dataset")]
    video: Option<String>,
    #[arg(long, default_value_t = 11)]
    clip_len: usize,
    /// Feature grid cells per side.
    #[arg(long, default_value_t = 3)]
    feature_grid: usize,
    /// Random feature maps: channel count.
    #[arg(long, default_value_t = 16, conflicts_with = "dataset")]
    channels: usize,
    /// Random feature maps: cells per side.
    #[arg(long, default_value_t = 14, conflicts_with = "dataset")]
    grid: usize,
    /// Random feature maps: how many.
    #[arg(long, default_value_t = 8, conflicts_with = "dataset")]
    maps: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RegimeSet {
    Both,
    /// Consecutive training clips only.
    FixedOnly,
    /// Random temporal skipping only.
    RtsOnly,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FixedReading {
    /// fixed(k) keeps frames k apart: 0, k+1, 2(k+1), ...
    Apart,
    /// fixed(k) keeps every k-th frame: 0, k, 2k, ...
    Stride,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Dataset root written by `gen`.
    #[arg(long)]
    dataset: PathBuf,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, value_enum, default_value_t = RegimeSet::Both)]
    regimes: RegimeSet,
    /// Maximum stride of the random-skipping regime.
    #[arg(long, default_value_t = 5)]
    max_stride: usize,
    /// Fixed test skips (besides none and random).
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    fixed: Vec<usize>,
    #[arg(long, value_enum, default_value_t = FixedReading::Apart)]
    fixed_reading: FixedReading,
    /// Maximum stride of the random test perturbation.
    #[arg(long, default_value_t = 5)]
    random_max: usize,
    /// Max strides of the accuracy-vs-stride sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,2,4,6")]
    sweep_strides: Vec<usize>,
    /// Skip the accuracy-vs-stride sweep.
    #[arg(long)]
    no_sweep: bool,
    #[arg(long, default_value_t = 11)]
    clip_len: usize,
    #[arg(long, default_value_t = 1)]
    segments: usize,
    /// Evaluation clips per video.
    #[arg(long, default_value_t = 25)]
    anchors: usize,
    /// Crop size for training and ten-crop testing; 0 disables cropping.
    #[arg(long, default_value_t = 40)]
    crop: usize,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Sketch dimension (power of two).
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Feature grid cells per side.
    #[arg(long, default_value_t = 3)]
    grid: usize,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    /// Fusion weight of the spatial stream.
    #[arg(long, default_value_t = 1.0)]
    w_spatial: f64,
    /// Fusion weight of the temporal stream.
    #[arg(long, default_value_t = 1.0)]
    w_temporal: f64,
    /// Exit 1 unless the accuracy orderings hold.
    #[arg(long)]
    assert_trends: bool,
    /// Minimum accuracy gain of random skipping under random test
    /// perturbation.
    #[arg(long, default_value_t = 0.03)]
    margin: f64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<multirate::Error> for Failure {
    fn from(e: multirate::Error) -> Self {
        use multirate::Error::*;
        match e {
            InvalidArgument(_) | SizeMismatch(_) | DimensionMismatch { .. } | OutOfBounds { .. } | TooShort(_)
            | NotFound(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HEIGHTxWIDTH")?;
    let h: usize = h.trim().parse().map_err(|_| "bad height")?;
    let w: usize = w.trim().parse().map_err(|_| "bad width")?;
    if h == 0 || w == 0 {
        return Err("size must be positive".into());
    }
    Ok((h, w))
}

fn parse_shift(s: &str) -> Result<(i64, i64), String> {
    let (x, y) = s.split_once(',').ok_or("expected DX,DY")?;
    Ok((
        x.trim().parse().map_err(|_| "bad DX")?,
        y.trim().parse().map_err(|_| "bad DY")?,
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Sample(a) => cmd_sample(cli, a),
        Command::Flowcheck(a) => cmd_flowcheck(cli, a),
        Command::Encode(a) => cmd_encode(cli, a),
        Command::Experiment(a) => cmd_experiment(cli, a),
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------

fn cmd_gen(cli: &Cli, a: &GenArgs) -> CliResult<()> {
    if !(a.speed_ratio > 0.0) {
        return usage("--speed-ratio must be positive");
    }
    let cfg = DatasetConfig {
        n_classes: a.classes,
        videos_per_class: a.videos,
        frames: a.frames,
        canvas: a.canvas,
        seed: cli.seed,
        motion: MotionConfig {
            fast_ratio: a.speed_ratio,
            ..MotionConfig::default()
        },
    };
    cfg.validate()?;
    let entries = gen_dataset(&cfg, &cli.out)?;
    println!("{}", cli.out.join(MANIFEST_FILE).display());
    eprintln!("{} videos of {} frames", entries.len(), a.frames);
    Ok(())
}

// ---------------------------------------------------------------------------

fn cmd_sample(cli: &Cli, a: &SampleArgs) -> CliResult<()> {
    if a.len == 0 || a.count == 0 || a.segments == 0 {
        return usage("--len, --count and --segments must be at least 1");
    }
    if a.video_len < a.len * a.segments {
        return usage(format!(
            "video of {} frames cannot hold {} segment(s) of {}-frame clips",
            a.video_len, a.segments, a.len
        ));
    }
    let cfg = SamplerConfig::new(a.len, a.max_stride, cli.seed)?;
    let mut r = rng::stream(cli.seed, &[0x5a]);
    let mut hist: BTreeMap<usize, u64> = (0..=a.max_stride.max(1)).map(|s| (s, 0)).collect();
    let mut out = String::new();
    for _ in 0..a.count {
        let clips = sample_segment_clips(a.video_len, a.segments, &cfg, &mut r)?;
        if a.hist {
            for c in &clips {
                for s in c.strides() {
                    *hist.entry(s).or_default() += 1;
                }
            }
        } else {
            let line: Vec<String> = clips
                .iter()
                .map(|c| c.as_slice().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
                .collect();
            out.push_str(&line.join(" | "));
            out.push('\n');
        }
    }
    if a.hist {
        out.push_str("stride\tcount\n");
        for (s, n) in &hist {
            out.push_str(&format!("{s}\t{n}\n"));
        }
        out.push_str(&format!("total\t{}\n", hist.values().sum::<u64>()));
    }
    print!("{out}");
    Ok(())
}

// ---------------------------------------------------------------------------

struct CheckTable {
    rows: Vec<(String, bool, String)>,
}

impl CheckTable {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.rows.push((name.to_string(), passed, detail));
    }

    fn print(&self) -> bool {
        println!("check\tstatus\tdetail");
        for (n, p, d) in &self.rows {
            println!("{n}\t{}\t{d}", if *p { "PASS" } else { "FAIL" });
        }
        self.rows.iter().all(|r| r.1)
    }
}

fn cmd_flowcheck(cli: &Cli, a: &FlowcheckArgs) -> CliResult<()> {
    let cparams = CharbonnierParams::new(a.charbonnier_alpha, a.eps)?;
    let oparams = OcclusionParams::new(a.alpha1, a.alpha2)?;
    if !(a.step > 0.0) || !(a.tolerance > 0.0) {
        return usage("--step and --tolerance must be positive");
    }
    let mut table = CheckTable { rows: Vec::new() };

    let (i1, i2, mf, mb) = match (&a.frame1, &a.frame2, &a.flow_fwd, &a.flow_bwd) {
        (Some(f1), Some(f2), Some(ff), Some(fb)) => {
            let (i1, i2) = (load_frame(f1)?, load_frame(f2)?);
            let (mf, mb) = (load_flow(ff)?, load_flow(fb)?);
            for (name, dims) in [("frame2", i2.dims()), ("flow-fwd", mf.dims()), ("flow-bwd", mb.dims())] {
                if dims != i1.dims() || i1.channels() != i2.channels() {
                    return usage(format!("{name} does not match frame1 ({:?} vs {:?})", dims, i1.dims()));
                }
            }
            (i1, i2, mf, mb)
        }
        _ => {
            if a.size < 8 {
                return usage("--size must be at least 8");
            }
            let n = a.size;
            let side = n / 3;
            let (dx, dy) = a.shift;
            let start = ((n as i64 - side as i64) / 2 - dx / 2, (n as i64 - side as i64) / 2 - dy / 2);
            let spec = SceneSpec::translating(
                (n, n),
                (side, side),
                (start.0 as f64, start.1 as f64),
                (dx as f64, dy as f64),
                2,
                cli.seed,
            )?;
            let (frames, gt) = render_sequence(&spec, 2)?;
            let (i1, i2) = (frames[0].clone(), frames[1].clone());

            let iou_f = gt.occlusion_fwd[0].iou(&occlusion_flags(&gt.flows_fwd[0], &gt.flows_bwd[0], &oparams)?.0, 1)?;
            let iou_b = gt.occlusion_bwd[0].iou(&occlusion_flags(&gt.flows_bwd[0], &gt.flows_fwd[0], &oparams)?.0, 1)?;
            table.push(
                "occlusion_iou",
                iou_f.min(iou_b) >= 0.9,
                format!("forward {iou_f:.4}, backward {iou_b:.4} (>= 0.9)"),
            );

            let zero = FlowField::zeros(n, n);
            let gt_loss = occlusion_aware_loss(&i1, &i2, &gt.flows_fwd[0], &gt.flows_bwd[0], &cparams, &oparams)?;
            let zero_loss = occlusion_aware_loss(&i1, &i2, &zero, &zero, &cparams, &oparams)?;
            table.push(
                "gt_loss_below_zero_flow_loss",
                gt_loss.value < zero_loss.value,
                format!("ground truth {:.6} vs zero flow {:.6}", gt_loss.value, zero_loss.value),
            );
            let (mf, mb) = match a.flow {
                FlowChoice::Gt => (gt.flows_fwd[0].clone(), gt.flows_bwd[0].clone()),
                FlowChoice::Zero => (zero.clone(), zero),
            };
            (i1, i2, mf, mb)
        }
    };
    let (h, w) = i1.dims();

    let (same, valid) = inverse_warp(&i1, &FlowField::zeros(h, w))?;
    table.push(
        "warp_identity",
        same == i1 && valid.count_ones() == h * w,
        "zero-flow warp reproduces the frame bit for bit".into(),
    );
    let (sx, sy) = (1usize.min(w - 1), 1usize.min(h - 1));
    let (shifted, valid) = inverse_warp(&i2, &FlowField::constant(h, w, sx as f64, sy as f64))?;
    let mut exact = true;
    for y in 0..h {
        for x in 0..w {
            if valid.get(x, y) {
                for c in 0..i2.channels() {
                    exact &= shifted.get(x, y, c) == i2.get(x + sx, y + sy, c);
                }
            }
        }
    }
    table.push("warp_shift", exact, format!("({sx}, {sy}) shift matches the pixel oracle"));

    let report = occlusion_aware_loss(&i1, &i2, &mf, &mb, &cparams, &oparams)?;
    table.push(
        "loss",
        report.value.is_finite(),
        format!(
            "{:.6} (forward {:.6}, backward {:.6}, non-occluded {:.3}/{:.3})",
            report.value,
            report.forward_term,
            report.backward_term,
            report.nonoccluded_fraction_fwd,
            report.nonoccluded_fraction_bwd
        ),
    );

    // integer flows sit on bilinear cell edges, so the generated scene is
    // checked at the chosen flow plus a smooth sub-pixel offset
    let (gf, gb) = if a.frame1.is_some() {
        (mf, mb)
    } else {
        let mut r = rng::stream(cli.seed, &[0xf10]);
        let add = |base: &FlowField, r: &mut rand_chacha::ChaCha8Rng| {
            let jitter = smooth_flow(h, w, 6, (0.15, 0.45), r);
            FlowField::from_fn(h, w, |x, y| {
                let (u, v) = base.get(x, y);
                let (ju, jv) = jitter.get(x, y);
                (u + ju, v - jv)
            })
        };
        (add(&mf, &mut r), add(&mb, &mut r))
    };
    let g = check_loss_gradient(&i1, &i2, &gf, &gb, &cparams, &oparams, a.step, a.tolerance)?;
    table.push(
        "gradient",
        g.compared > 0 && g.pass_fraction() >= 0.99,
        format!(
            "{}/{} components below {:e}; max relative error {:.3e}, median {:.3e}",
            g.within_tolerance, g.compared, a.tolerance, g.max_relative_error, g.median_relative_error
        ),
    );
    println!("max_gradient_relative_error\t{:.6e}", g.max_relative_error);

    if table.print() {
        Ok(())
    } else {
        Err(Failure::Runtime("one or more checks failed".into()))
    }
}

// ---------------------------------------------------------------------------

fn relative_error(approx: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        approx.abs()
    } else {
        (approx - exact).abs() / exact.abs()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn cmd_encode(cli: &Cli, a: &EncodeArgs) -> CliResult<()> {
    if a.dim == 0 || !a.dim.is_power_of_two() {
        return usage(format!("--dim must be a power of two, got {}", a.dim));
    }
    create_dir(&cli.out)?;
    let finish = |d: Descriptor| if a.no_normalize { d } else { normalize_descriptor(&d) };

    // (name, map) pairs to encode
    let mut maps: Vec<(String, FeatureMap)> = Vec::new();
    if let Some(root) = &a.dataset {
        let fc = FeatureConfig {
            grid: (a.feature_grid, a.feature_grid),
            ..FeatureConfig::default()
        };
        fc.validate()?;
        let videos = load_dataset(root)?;
        let chosen: Vec<_> = videos.iter().filter(|v| a.video.as_ref().is_none_or(|id| v.id() == id)).collect();
        if chosen.is_empty() {
            return usage("no matching video in the dataset");
        }
        for v in chosen {
            if v.len() < a.clip_len || a.clip_len == 0 {
                return usage(format!("video {} is shorter than --clip-len {}", v.id(), a.clip_len));
            }
            let start = (v.len() - a.clip_len) / 2;
            let (frames, flows) = v.clip(&sample_consecutive(v.len(), start, a.clip_len)?)?;
            let f = extract_features(&frames, &flows, &fc)?;
            maps.push((format!("{}.spatial", v.id()), f.spatial));
            maps.push((format!("{}.temporal", v.id()), f.temporal));
        }
    } else {
        if a.channels == 0 || a.grid == 0 || a.maps == 0 {
            return usage("--channels, --grid and --maps must be at least 1");
        }
        let mut r = rng::stream(cli.seed, &[0xfea7]);
        for i in 0..a.maps {
            let data = (0..a.grid * a.grid * a.channels).map(|_| r.random_range(-1.0f32..1.0)).collect();
            maps.push((format!("map_{i:04}"), FeatureMap::new(a.grid, a.grid, a.channels, data)?));
        }
    }

    // one sketcher per channel count, seeded by --seed
    let mut sketchers: BTreeMap<usize, TensorSketcher> = BTreeMap::new();
    let mut sketches = Vec::with_capacity(maps.len());
    for (name, map) in &maps {
        let c = map.channels();
        if !sketchers.contains_key(&c) {
            sketchers.insert(c, TensorSketcher::new(SketchParams::new(c, a.dim, rng::derive(cli.seed, &[c as u64]))?)?);
        }
        let raw = sketchers[&c].pool(map)?;
        let path = cli.out.join(format!("{name}.cbpd"));
        let out = finish(raw.clone());
        save_descriptor(&out, &path)?;
        if a.dim <= 8 {
            println!("{}\t{:?}", path.display(), out.values);
        } else {
            println!("{}", path.display());
        }
        sketches.push(raw);
    }

    if a.exact {
        let exact: Vec<Descriptor> = maps.iter().map(|(_, m)| exact_bilinear(m)).collect();
        for ((name, _), e) in maps.iter().zip(&exact) {
            save_descriptor(&finish(e.clone()), cli.out.join(format!("{name}.exact.cbpd")))?;
        }
        // kernel error over every pair of maps with the same channel count
        let pairs: Vec<(usize, usize)> = (0..maps.len())
            .flat_map(|i| (i..maps.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| maps[i].1.channels() == maps[j].1.channels() && (i != j || maps.len() == 1))
            .collect();
        let kernel = |i: usize, j: usize| exact[i].dot(&exact[j]);
        let written: Vec<f64> =
            pairs.iter().map(|&(i, j)| relative_error(sketches[i].dot(&sketches[j]), kernel(i, j))).collect();
        // a single draw is dominated by which hash buckets happen to collide,
        // so the error at this dimension is also estimated over fresh draws
        let mut drawn = written.clone();
        for t in 1..a.trials as u64 {
            let mut fresh: BTreeMap<usize, TensorSketcher> = BTreeMap::new();
            let mut pooled = Vec::with_capacity(maps.len());
            for (_, map) in &maps {
                let c = map.channels();
                if !fresh.contains_key(&c) {
                    let seed = rng::derive(cli.seed, &[c as u64, t]);
                    fresh.insert(c, TensorSketcher::new(SketchParams::new(c, a.dim, seed)?)?);
                }
                pooled.push(fresh[&c].pool(map)?);
            }
            drawn.extend(pairs.iter().map(|&(i, j)| relative_error(pooled[i].dot(&pooled[j]), kernel(i, j))));
        }
        println!(
            "written_sketch_relative_error\tmedian {:.6e}\tmax {:.6e}\tpairs {}",
            median(written.clone()),
            written.iter().cloned().fold(0.0, f64::max),
            written.len()
        );
        println!(
            "sketch_relative_error\tmedian {:.6e}\tpairs {}\tdraws {}",
            median(drawn),
            pairs.len(),
            a.trials.max(1)
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn cmd_experiment(cli: &Cli, a: &ExperimentArgs) -> CliResult<()> {
    if !a.dataset.join(MANIFEST_FILE).is_file() {
        return usage(format!("no dataset manifest under {}", a.dataset.display()));
    }
    if a.seeds == 0 {
        return usage("--seeds must be at least 1");
    }
    if a.dim == 0 || !a.dim.is_power_of_two() {
        return usage(format!("--dim must be a power of two, got {}", a.dim));
    }
    if a.assert_trends && a.regimes != RegimeSet::Both {
        return usage("--assert-trends compares both regimes; use --regimes both");
    }
    if a.assert_trends && a.fixed.is_empty() {
        return usage("--assert-trends needs at least one fixed perturbation");
    }
    let fixed = |k: usize| -> CliResult<Perturbation> {
        match a.fixed_reading {
            FixedReading::Apart => Ok(Perturbation::Fixed(k)),
            FixedReading::Stride if k == 0 => usage("stride reading needs fixed skips >= 1"),
            FixedReading::Stride => Ok(Perturbation::EveryKth(k)),
        }
    };
    let mut perturbations = vec![Perturbation::None];
    for &k in &a.fixed {
        perturbations.push(fixed(k)?);
    }
    perturbations.push(Perturbation::Random(a.random_max));
    let regimes = match a.regimes {
        RegimeSet::Both => vec![Regime::without_rts(), Regime::with_rts(a.max_stride)],
        RegimeSet::FixedOnly => vec![Regime::without_rts()],
        RegimeSet::RtsOnly => vec![Regime::with_rts(a.max_stride)],
    };
    let crop = (a.crop > 0).then_some((a.crop, a.crop));
    let defaults = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        regimes,
        perturbations,
        seeds: (0..a.seeds as u64).map(|i| cli.seed.wrapping_add(i)).collect(),
        classes: 0,
        clip_len: a.clip_len,
        segments: a.segments,
        train_crop: crop,
        softmax: multirate::pipeline::SoftmaxParams {
            epochs: a.epochs,
            learning_rate: a.lr,
            ..defaults.softmax.clone()
        },
        eval: EvalConfig {
            anchors: a.anchors,
            clip_len: a.clip_len,
            segments: a.segments,
            crop,
        },
        features: FeatureConfig {
            grid: (a.grid, a.grid),
            ..FeatureConfig::default()
        },
        sketch_dim: a.dim,
        fusion: (a.w_spatial, a.w_temporal),
        test_fraction: a.test_fraction,
    };
    if !(a.w_spatial >= 0.0 && a.w_temporal >= 0.0 && a.w_spatial + a.w_temporal > 0.0) {
        return usage("fusion weights must be non-negative and not both zero");
    }
    cfg.validate()?;

    let videos = load_dataset(&a.dataset)?;
    let classes = videos.iter().map(|v| v.class_id()).max().map_or(0, |m| m + 1);
    if classes < 2 {
        return usage("dataset needs at least two classes");
    }
    let cfg = ExperimentConfig { classes, ..cfg };
    create_dir(&cli.out)?;

    let report = robustness_experiment(&videos, &cfg)?;
    write_file(&cli.out.join("report.tsv"), &report.to_tsv())?;
    write_file(&cli.out.join("grid.tsv"), &report.grid_tsv())?;
    print!("{}", report.grid_tsv());
    eprintln!("table runtime {:.1}s", report.runtime.as_secs_f64());

    let mut checks: Vec<TrendCheck> = Vec::new();
    if a.regimes == RegimeSet::Both {
        match table_trends(&report, a.margin) {
            Ok(c) => checks.extend(c),
            Err(e) if a.assert_trends => return Err(e.into()),
            Err(e) => println!("trend\ttable\tSKIP\t{e}"),
        }
    }
    if !a.no_sweep {
        let sweep = stride_sweep(&videos, &a.sweep_strides, Perturbation::Random(a.random_max), &cfg)?;
        write_file(&cli.out.join("sweep.tsv"), &sweep.sweep_tsv())?;
        print!("{}", sweep.sweep_tsv());
        eprintln!("sweep runtime {:.1}s", sweep.runtime.as_secs_f64());
        checks.push(sweep_trends(&sweep, &a.sweep_strides)?);
    }
    for c in &checks {
        println!("trend\t{}\t{}\t{}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    if a.assert_trends && checks.iter().any(|c| !c.passed) {
        return Err(Failure::Runtime("trend assertion failed".into()));
    }
    Ok(())
}
