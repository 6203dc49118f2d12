//! Synthetic multirate sprite videos with exact ground-truth flow and
//! occlusion, an on-disk dataset generator, and frame-rate perturbations.
//!
//! Sprites are textured rectangles pasted over a static textured background
//! at integer positions, later sprites on top. Because every layer moves
//! rigidly by whole pixels, the flow between any two frames and the set of
//! pixels that disappear between them are known exactly.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::media::{save_frame, BinaryMask, FlowField, Frame};
use crate::rng;

/// One moving rectangle. `velocities[t]` is the displacement from frame `t`
/// to frame `t + 1`; positions are rounded cumulative sums of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub height: usize,
    pub width: usize,
    /// Top-left corner `(x, y)` in frame 0.
    pub start: (f64, f64),
    pub velocities: Vec<(f64, f64)>,
    pub texture: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub background: Frame,
    pub sprites: Vec<Sprite>,
}

/// Exact per-pair flows and occlusion for a rendered sequence. Entry `t`
/// describes the pair `(t, t + 1)`; backward quantities live on frame `t + 1`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub flows_fwd: Vec<FlowField>,
    pub flows_bwd: Vec<FlowField>,
    pub occlusion_fwd: Vec<BinaryMask>,
    pub occlusion_bwd: Vec<BinaryMask>,
}

/// Integer sprite positions per frame; enough to recover flow and occlusion
/// between any pair of frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneTracks {
    height: usize,
    width: usize,
    sizes: Vec<(usize, usize)>,
    /// `positions[sprite][frame] = (x, y)` of the top-left corner.
    positions: Vec<Vec<(i64, i64)>>,
}

impl SceneTracks {
    pub fn new(height: usize, width: usize, sizes: Vec<(usize, usize)>, positions: Vec<Vec<(i64, i64)>>) -> Result<Self> {
        if sizes.len() != positions.len() {
            return Err(Error::InvalidData("one track per sprite required".into()));
        }
        let frames = positions.first().map_or(0, Vec::len);
        if positions.iter().any(|p| p.len() != frames) {
            return Err(Error::InvalidData("tracks differ in length".into()));
        }
        let tracks = Self {
            height,
            width,
            sizes,
            positions,
        };
        for (k, track) in tracks.positions.iter().enumerate() {
            for (t, &(x, y)) in track.iter().enumerate() {
                let (h, w) = tracks.sizes[k];
                let off = x + w as i64 <= 0
                    || y + h as i64 <= 0
                    || x >= width as i64
                    || y >= height as i64;
                if off {
                    return Err(Error::InvalidData(format!(
                        "sprite {k} is fully off-canvas in frame {t}"
                    )));
                }
            }
        }
        Ok(tracks)
    }

    pub fn frame_count(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn sprite_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn position(&self, sprite: usize, frame: usize) -> (i64, i64) {
        self.positions[sprite][frame]
    }

    /// Topmost layer per pixel: 0 for background, `k + 1` for sprite `k`.
    pub fn layer_map(&self, frame: usize) -> Vec<u16> {
        let (h, w) = (self.height as i64, self.width as i64);
        let mut map = vec![0u16; self.height * self.width];
        for (k, &(sh, sw)) in self.sizes.iter().enumerate() {
            let (px, py) = self.positions[k][frame];
            for y in py.max(0)..(py + sh as i64).min(h) {
                for x in px.max(0)..(px + sw as i64).min(w) {
                    map[(y * w + x) as usize] = k as u16 + 1;
                }
            }
        }
        map
    }

    fn displacement(&self, layer: u16, from: usize, to: usize) -> (i64, i64) {
        if layer == 0 {
            return (0, 0);
        }
        let k = usize::from(layer - 1);
        let (a, b) = (self.positions[k][from], self.positions[k][to]);
        (b.0 - a.0, b.1 - a.1)
    }

    /// Flow on frame `from` pointing to where each pixel's content sits in
    /// frame `to`.
    pub fn flow_between(&self, from: usize, to: usize) -> FlowField {
        let layers = self.layer_map(from);
        let w = self.width;
        FlowField::from_fn(self.height, w, |x, y| {
            let (dx, dy) = self.displacement(layers[y * w + x], from, to);
            (dx as f64, dy as f64)
        })
    }

    /// Pixels of frame `from` whose content is not visible in frame `to`:
    /// they land off-canvas or under a different layer.
    pub fn occlusion_between(&self, from: usize, to: usize) -> BinaryMask {
        let src = self.layer_map(from);
        let dst = self.layer_map(to);
        let (h, w) = (self.height as i64, self.width as i64);
        BinaryMask::from_fn(self.height, self.width, |x, y| {
            let layer = src[y * self.width + x];
            let (dx, dy) = self.displacement(layer, from, to);
            let (qx, qy) = (x as i64 + dx, y as i64 + dy);
            qx < 0 || qy < 0 || qx >= w || qy >= h || dst[(qy * w + qx) as usize] != layer
        })
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let pairs = self.frame_count().saturating_sub(1);
        GroundTruth {
            flows_fwd: (0..pairs).map(|t| self.flow_between(t, t + 1)).collect(),
            flows_bwd: (0..pairs).map(|t| self.flow_between(t + 1, t)).collect(),
            occlusion_fwd: (0..pairs).map(|t| self.occlusion_between(t, t + 1)).collect(),
            occlusion_bwd: (0..pairs).map(|t| self.occlusion_between(t + 1, t)).collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("canvas\t{}\t{}\n", self.height, self.width);
        for (k, (h, w)) in self.sizes.iter().enumerate() {
            s.push_str(&format!("sprite\t{k}\t{h}\t{w}\n"));
        }
        for t in 0..self.frame_count() {
            for k in 0..self.sizes.len() {
                let (x, y) = self.positions[k][t];
                s.push_str(&format!("pos\t{t}\t{k}\t{x}\t{y}\n"));
            }
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Manifest {
            line,
            reason: reason.to_string(),
        };
        let mut canvas = None;
        let mut sizes = Vec::new();
        let mut positions: Vec<Vec<(i64, i64)>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let num = |i: usize| -> Result<i64> {
                f.get(i)
                    .and_then(|v| v.parse::<i64>().ok())
                    .ok_or_else(|| bad(n + 1, "expected integer field"))
            };
            match f[0] {
                "canvas" => canvas = Some((num(1)? as usize, num(2)? as usize)),
                "sprite" => {
                    if num(1)? as usize != sizes.len() {
                        return Err(bad(n + 1, "sprites out of order"));
                    }
                    sizes.push((num(2)? as usize, num(3)? as usize));
                    positions.push(Vec::new());
                }
                "pos" => {
                    let (t, k) = (num(1)? as usize, num(2)? as usize);
                    let track = positions.get_mut(k).ok_or_else(|| bad(n + 1, "unknown sprite"))?;
                    if track.len() != t {
                        return Err(bad(n + 1, "positions out of order"));
                    }
                    track.push((num(3)?, num(4)?));
                }
                "" => {}
                _ => return Err(bad(n + 1, "unknown record")),
            }
        }
        let (h, w) = canvas.ok_or_else(|| bad(0, "missing canvas record"))?;
        SceneTracks::new(h, w, sizes, positions)
    }
}

impl SceneSpec {
    /// Rounded integer positions of every sprite for `frames` frames.
    pub fn tracks(&self, frames: usize) -> Result<SceneTracks> {
        let mut positions = Vec::with_capacity(self.sprites.len());
        for (k, s) in self.sprites.iter().enumerate() {
            if s.velocities.len() + 1 < frames {
                return Err(Error::InvalidArgument(format!(
                    "sprite {k} has {} velocities for {frames} frames",
                    s.velocities.len()
                )));
            }
            if s.texture.dims() != (s.height, s.width) {
                return Err(Error::InvalidData(format!("sprite {k} texture size mismatch")));
            }
            let (mut x, mut y) = s.start;
            let mut track = Vec::with_capacity(frames);
            for t in 0..frames {
                track.push((x.round() as i64, y.round() as i64));
                if t + 1 < frames {
                    x += s.velocities[t].0;
                    y += s.velocities[t].1;
                }
            }
            positions.push(track);
        }
        SceneTracks::new(
            self.height,
            self.width,
            self.sprites.iter().map(|s| (s.height, s.width)).collect(),
            positions,
        )
    }

    /// Renders frame `t` given precomputed tracks.
    pub fn render_frame(&self, tracks: &SceneTracks, t: usize) -> Result<Frame> {
        let ch = self.background.channels();
        let mut data = self.background.data().to_vec();
        let (h, w) = (self.height as i64, self.width as i64);
        for (k, s) in self.sprites.iter().enumerate() {
            if s.texture.channels() != ch {
                return Err(Error::InvalidData("sprite and background channels differ".into()));
            }
            let (px, py) = tracks.position(k, t);
            for y in py.max(0)..(py + s.height as i64).min(h) {
                for x in px.max(0)..(px + s.width as i64).min(w) {
                    let (lx, ly) = ((x - px) as usize, (y - py) as usize);
                    let dst = ((y * w + x) as usize) * ch;
                    for c in 0..ch {
                        data[dst + c] = s.texture.get(lx, ly, c);
                    }
                }
            }
        }
        Frame::new(self.height, self.width, ch, data)
    }

    /// A scene with one sprite translating by a constant displacement.
    pub fn translating(
        canvas: (usize, usize),
        sprite: (usize, usize),
        start: (f64, f64),
        velocity: (f64, f64),
        frames: usize,
        seed: u64,
    ) -> Result<SceneSpec> {
        let mut r = rng::stream(seed, &[0x7a55]);
        Ok(SceneSpec {
            height: canvas.0,
            width: canvas.1,
            background: value_noise(canvas.0, canvas.1, 6, (0.05, 0.55), &mut r)?,
            sprites: vec![Sprite {
                height: sprite.0,
                width: sprite.1,
                start,
                velocities: vec![velocity; frames.saturating_sub(1)],
                texture: value_noise(sprite.0, sprite.1, 3, (0.45, 0.95), &mut r)?,
            }],
        })
    }
}

/// Renders `frames` frames and the exact per-pair ground truth.
pub fn render_sequence(spec: &SceneSpec, frames: usize) -> Result<(Vec<Frame>, GroundTruth)> {
    if frames < 2 {
        return Err(Error::InvalidArgument("need at least two frames".into()));
    }
    let tracks = spec.tracks(frames)?;
    let rendered = (0..frames)
        .map(|t| spec.render_frame(&tracks, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((rendered, tracks.ground_truth()))
}

/// Coarse random lattice on `spacing`-pixel centres, bilinearly interpolated
/// to `height x width`, with lattice values uniform in `range`.
fn lattice_noise<R: Rng + ?Sized>(height: usize, width: usize, spacing: usize, range: (f64, f64), rng: &mut R) -> Vec<f64> {
    let spacing = spacing.max(1);
    let (gh, gw) = (height / spacing + 2, width / spacing + 2);
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(range.0..=range.1)).collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 / spacing as f64, y as f64 / spacing as f64);
            let (x0, y0) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
            let at = |i: usize, j: usize| lattice[j * gw + i];
            out.push(
                (1.0 - tx) * (1.0 - ty) * at(x0, y0)
                    + tx * (1.0 - ty) * at(x0 + 1, y0)
                    + (1.0 - tx) * ty * at(x0, y0 + 1)
                    + tx * ty * at(x0 + 1, y0 + 1),
            );
        }
    }
    out
}

/// Smooth random single-channel texture with values in `range`.
pub fn value_noise<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    spacing: usize,
    range: (f32, f32),
    rng: &mut R,
) -> Result<Frame> {
    let (lo, hi) = (f64::from(range.0), f64::from(range.1));
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidArgument(format!("texture range {range:?} outside [0, 1]")));
    }
    let data = lattice_noise(height, width, spacing, (lo, hi), rng);
    Frame::new(height, width, 1, data.into_iter().map(|v| (v as f32).clamp(range.0, range.1)).collect())
}

/// Smooth random flow with both components in `range`.
pub fn smooth_flow<R: Rng + ?Sized>(height: usize, width: usize, spacing: usize, range: (f64, f64), rng: &mut R) -> FlowField {
    let u = lattice_noise(height, width, spacing, range, rng);
    let v = lattice_noise(height, width, spacing, range, rng);
    FlowField::from_fn(height, width, |x, y| (u[y * width + x], v[y * width + x]))
}

// ---------------------------------------------------------------------------
// motion classes

/// Speed profile families. Each class of the synthetic corpus uses one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeedProfile {
    ConstantSlow,
    ConstantFast,
    Accelerating,
    Oscillating,
    Decelerating,
    /// Slow drift with short fast bursts.
    Burst,
}

impl SpeedProfile {
    pub const ALL: [SpeedProfile; 6] = [
        SpeedProfile::ConstantSlow,
        SpeedProfile::ConstantFast,
        SpeedProfile::Accelerating,
        SpeedProfile::Oscillating,
        SpeedProfile::Decelerating,
        SpeedProfile::Burst,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SpeedProfile::ConstantSlow => "constant-slow",
            SpeedProfile::ConstantFast => "constant-fast",
            SpeedProfile::Accelerating => "accelerating",
            SpeedProfile::Oscillating => "oscillating",
            SpeedProfile::Decelerating => "decelerating",
            SpeedProfile::Burst => "burst",
        }
    }

    /// Signed speed (pixels per frame along the sprite's heading) for each of
    /// `steps` transitions.
    pub fn speeds<R: Rng + ?Sized>(&self, steps: usize, cfg: &MotionConfig, rng: &mut R) -> Vec<f64> {
        let jitter = |rng: &mut R| 1.0 + cfg.jitter * rng.random_range(-1.0..=1.0);
        let slow = cfg.slow_speed * jitter(rng);
        let fast = cfg.slow_speed * cfg.fast_ratio * jitter(rng);
        let ramp = |t: usize| if steps > 1 { t as f64 / (steps - 1) as f64 } else { 0.0 };
        match self {
            SpeedProfile::ConstantSlow => vec![slow; steps],
            SpeedProfile::ConstantFast => vec![fast; steps],
            SpeedProfile::Accelerating => (0..steps)
                .map(|t| 0.25 * slow + (fast - 0.25 * slow) * ramp(t))
                .collect(),
            SpeedProfile::Decelerating => (0..steps)
                .map(|t| fast - (fast - 0.25 * slow) * ramp(t))
                .collect(),
            SpeedProfile::Oscillating => {
                let period = rng.random_range(cfg.period.0..=cfg.period.1);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (0..steps)
                    .map(|t| fast * (std::f64::consts::TAU * t as f64 / period + phase).sin())
                    .collect()
            }
            SpeedProfile::Burst => {
                let period = rng.random_range(cfg.period.0..=cfg.period.1).round() as usize;
                let offset = rng.random_range(0..period.max(1));
                (0..steps)
                    .map(|t| if (t + offset) % period.max(1) < 4 { 1.5 * fast } else { 0.5 * slow })
                    .collect()
            }
        }
    }
}

impl fmt::Display for SpeedProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A label and the speed family that generates its videos.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionClass {
    pub class_id: usize,
    pub profile: SpeedProfile,
}

impl MotionClass {
    /// Classes `0..n` in the order of [`SpeedProfile::ALL`].
    pub fn standard(n: usize) -> Result<Vec<MotionClass>> {
        if n < 2 || n > SpeedProfile::ALL.len() {
            return Err(Error::InvalidArgument(format!(
                "class count must be in 2..={}, got {n}",
                SpeedProfile::ALL.len()
            )));
        }
        Ok(SpeedProfile::ALL[..n]
            .iter()
            .enumerate()
            .map(|(class_id, &profile)| MotionClass { class_id, profile })
            .collect())
    }
}

/// Speed ranges and scene layout for generated videos.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    /// Constant-slow speed in pixels per frame.
    pub slow_speed: f64,
    /// Constant-fast speed as a multiple of the slow speed.
    pub fast_ratio: f64,
    /// Relative per-video speed jitter.
    pub jitter: f64,
    /// Oscillation / burst period range in frames.
    pub period: (f64, f64),
    pub sprites_per_video: usize,
    pub sprite_size: (usize, usize),
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            slow_speed: 0.8,
            fast_ratio: 2.5,
            jitter: 0.15,
            period: (12.0, 20.0),
            sprites_per_video: 2,
            sprite_size: (10, 14),
        }
    }
}

/// Random scene whose sprites all follow `profile`, bouncing off the canvas
/// edges so that they stay fully visible.
pub fn random_scene<R: Rng + ?Sized>(
    canvas: (usize, usize),
    frames: usize,
    profile: SpeedProfile,
    cfg: &MotionConfig,
    rng: &mut R,
) -> Result<SceneSpec> {
    let (h, w) = canvas;
    let background = value_noise(h, w, 6, (0.05, 0.55), rng)?;
    let steps = frames.saturating_sub(1);
    let mut sprites = Vec::with_capacity(cfg.sprites_per_video);
    for _ in 0..cfg.sprites_per_video {
        let sh = rng.random_range(cfg.sprite_size.0..=cfg.sprite_size.1).min(h);
        let sw = rng.random_range(cfg.sprite_size.0..=cfg.sprite_size.1).min(w);
        let texture = value_noise(sh, sw, 3, (0.45, 0.95), rng)?;
        let (xmax, ymax) = ((w - sw) as f64, (h - sh) as f64);
        let start = (
            rng.random_range(0.0..=xmax).round(),
            rng.random_range(0.0..=ymax).round(),
        );
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let mut heading = (angle.cos(), angle.sin());
        let speeds = profile.speeds(steps, cfg, rng);
        let (mut x, mut y) = start;
        let mut velocities = Vec::with_capacity(steps);
        for s in speeds {
            let (nx, ny) = (x + s * heading.0, y + s * heading.1);
            let (nx, flip_x) = reflect(nx, xmax);
            let (ny, flip_y) = reflect(ny, ymax);
            if flip_x {
                heading.0 = -heading.0;
            }
            if flip_y {
                heading.1 = -heading.1;
            }
            velocities.push((nx - x, ny - y));
            x = nx;
            y = ny;
        }
        sprites.push(Sprite {
            height: sh,
            width: sw,
            start,
            velocities,
            texture,
        });
    }
    Ok(SceneSpec {
        height: h,
        width: w,
        background,
        sprites,
    })
}

/// Mirrors `p` back into `[0, max]`; reports whether the heading flips.
fn reflect(mut p: f64, max: f64) -> (f64, bool) {
    if max <= 0.0 {
        return (0.0, false);
    }
    let mut flipped = false;
    while p < 0.0 || p > max {
        p = if p < 0.0 { -p } else { 2.0 * max - p };
        flipped = !flipped;
    }
    (p, flipped)
}

// ---------------------------------------------------------------------------
// dataset on disk

/// Parameters of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_classes: usize,
    pub videos_per_class: usize,
    pub frames: usize,
    pub canvas: (usize, usize),
    pub seed: u64,
    pub motion: MotionConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_classes: 4,
            videos_per_class: 50,
            frames: 120,
            canvas: (48, 48),
            seed: 0,
            motion: MotionConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        MotionClass::standard(self.n_classes)?;
        if self.videos_per_class == 0 {
            return Err(Error::InvalidArgument("need at least one video per class".into()));
        }
        if self.frames < 2 {
            return Err(Error::InvalidArgument("videos need at least two frames".into()));
        }
        let (lo, hi) = self.motion.sprite_size;
        if lo == 0 || lo > hi || hi > self.canvas.0 || hi > self.canvas.1 {
            return Err(Error::InvalidArgument(format!(
                "canvas {:?} cannot hold sprites of size {:?}",
                self.canvas, self.motion.sprite_size
            )));
        }
        Ok(())
    }
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub class_id: usize,
    pub num_frames: usize,
    /// Video directory relative to the dataset root.
    pub relative_path: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const TRACKS_FILE: &str = "tracks.tsv";

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.pgm")
}

/// A generated video held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub entry: ManifestEntry,
    pub frames: Vec<Frame>,
    pub tracks: SceneTracks,
}

/// Generates the corpus in memory. Video `i` of class `c` draws from its own
/// random stream, so the result does not depend on scheduling.
pub fn generate_videos(cfg: &DatasetConfig) -> Result<Vec<SyntheticVideo>> {
    cfg.validate()?;
    let classes = MotionClass::standard(cfg.n_classes)?;
    let jobs: Vec<(MotionClass, usize)> = classes
        .iter()
        .flat_map(|c| (0..cfg.videos_per_class).map(move |i| (*c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(class, i)| {
            let mut r = rng::stream(cfg.seed, &[class.class_id as u64, i as u64]);
            let spec = random_scene(cfg.canvas, cfg.frames, class.profile, &cfg.motion, &mut r)?;
            let tracks = spec.tracks(cfg.frames)?;
            let frames = (0..cfg.frames)
                .map(|t| spec.render_frame(&tracks, t))
                .collect::<Result<Vec<_>>>()?;
            let video_id = format!("c{}_v{i:04}", class.class_id);
            Ok(SyntheticVideo {
                entry: ManifestEntry {
                    relative_path: PathBuf::from(class.class_id.to_string()).join(&video_id),
                    video_id,
                    class_id: class.class_id,
                    num_frames: cfg.frames,
                },
                frames,
                tracks,
            })
        })
        .collect()
}

/// Writes `<root>/<class_id>/<video_id>/frame_%05d.pgm`, a `tracks.tsv` with
/// the sprite positions next to the frames, and `<root>/manifest.tsv`.
pub fn gen_dataset(cfg: &DatasetConfig, root: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let root = root.as_ref();
    let videos = generate_videos(cfg)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    videos.par_iter().try_for_each(|v| {
        let dir = root.join(&v.entry.relative_path);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (t, f) in v.frames.iter().enumerate() {
            save_frame(f, dir.join(frame_file_name(t)))?;
        }
        let tracks = dir.join(TRACKS_FILE);
        fs::write(&tracks, v.tracks.to_tsv()).map_err(|e| Error::io(&tracks, e))
    })?;
    let entries: Vec<ManifestEntry> = videos.into_iter().map(|v| v.entry).collect();
    write_manifest(root, &entries)?;
    Ok(entries)
}

pub fn write_manifest(root: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let path = root.join(MANIFEST_FILE);
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for e in entries {
        writeln!(
            file,
            "{}\t{}\t{}\t{}",
            e.video_id,
            e.class_id,
            e.num_frames,
            e.relative_path.display()
        )
        .map_err(|err| Error::io(&path, err))?;
    }
    Ok(())
}

pub fn read_manifest(root: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = root.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = |reason: &str| Error::Manifest {
                line: n + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            Ok(ManifestEntry {
                video_id: f[0].to_string(),
                class_id: f[1].parse().map_err(|_| bad("bad class id"))?,
                num_frames: f[2].parse().map_err(|_| bad("bad frame count"))?,
                relative_path: PathBuf::from(f[3]),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// frame-rate perturbation

/// Test-time frame-rate change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Perturbation {
    None,
    /// Keep frames `k` apart: indices `0, k+1, 2(k+1), ...`.
    Fixed(usize),
    /// Keep every `k`-th frame: indices `0, k, 2k, ...`.
    EveryKth(usize),
    /// Cumulative random strides drawn uniformly from `{1, ..., k+1}`.
    Random(usize),
}

impl Perturbation {
    pub fn label(&self) -> String {
        match self {
            Perturbation::None => "none".into(),
            Perturbation::Fixed(k) => format!("fixed({k})"),
            Perturbation::EveryKth(k) => format!("every({k})"),
            Perturbation::Random(k) => format!("random({k})"),
        }
    }

    /// Source indices kept from a video of `len` frames.
    pub fn indices<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<Vec<usize>> {
        let out: Vec<usize> = match *self {
            Perturbation::None => (0..len).collect(),
            Perturbation::Fixed(k) => (0..len).step_by(k + 1).collect(),
            Perturbation::EveryKth(k) => {
                if k == 0 {
                    return Err(Error::InvalidArgument("every-kth stride must be >= 1".into()));
                }
                (0..len).step_by(k).collect()
            }
            Perturbation::Random(k) => {
                let mut out = Vec::new();
                let mut at = 0;
                while at < len {
                    out.push(at);
                    at += rng.random_range(1..=k + 1);
                }
                out
            }
        };
        if out.len() < 2 {
            return Err(Error::TooShort(format!(
                "{} leaves {} of {len} frames",
                self.label(),
                out.len()
            )));
        }
        Ok(out)
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(Perturbation::None);
        }
        let arg = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?.parse().ok()
        };
        if let Some(k) = arg("fixed") {
            Ok(Perturbation::Fixed(k))
        } else if let Some(k) = arg("every") {
            Ok(Perturbation::EveryKth(k))
        } else if let Some(k) = arg("random") {
            Ok(Perturbation::Random(k))
        } else {
            Err(Error::InvalidArgument(format!("unknown perturbation {s:?}")))
        }
    }
}

/// Applies a frame-rate perturbation to a frame list.
pub fn resample_video<R: Rng + ?Sized>(frames: &[Frame], mode: Perturbation, rng: &mut R) -> Result<Vec<Frame>> {
    Ok(mode
        .indices(frames.len(), rng)?
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}
