//! Clip index generation: consecutive, fixed-stride and random temporal
//! skipping, plus segment partitioning and evenly spaced evaluation anchors.
//!
//! All samplers take the random source explicitly so callers can derive one
//! stream per video and keep results independent of scheduling.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};

/// Redraws allowed before a random clip falls back to all-zero strides.
pub const MAX_REJECTIONS: usize = 100;

/// Ordered, 0-based frame indices of a sampled clip.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClipIndices(Vec<usize>);

impl ClipIndices {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidData(
                "clip indices must be nondecreasing".into(),
            ));
        }
        Ok(Self(indices))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Distance between the first and last index.
    pub fn span(&self) -> usize {
        match (self.0.first(), self.0.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    /// Per-step skips between consecutive indices.
    pub fn strides(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.windows(2).map(|w| w[1] - w[0])
    }

    pub fn offset(&self, by: usize) -> ClipIndices {
        ClipIndices(self.0.iter().map(|i| i + by).collect())
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl AsRef<[usize]> for ClipIndices {
    fn as_ref(&self) -> &[usize] {
        &self.0
    }
}

/// Clip length, maximum per-step skip and seed for random temporal skipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub clip_len: usize,
    pub max_stride: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(clip_len: usize, max_stride: usize, seed: u64) -> Result<Self> {
        if clip_len == 0 {
            return Err(Error::InvalidArgument("clip length must be at least 1".into()));
        }
        Ok(Self {
            clip_len,
            max_stride,
            seed,
        })
    }
}

/// How training clips are drawn from a video or segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipStrategy {
    /// Fixed stride with a uniformly random valid start. Stride 1 is the
    /// consecutive sampler.
    FixedStride(usize),
    /// Random temporal skipping with the given maximum stride.
    RandomSkip(usize),
}

impl ClipStrategy {
    pub fn draw<R: Rng + ?Sized>(&self, video_len: usize, clip_len: usize, rng: &mut R) -> Result<ClipIndices> {
        match *self {
            ClipStrategy::FixedStride(tau) => {
                let span = (clip_len.max(1) - 1) * tau;
                if clip_len == 0 || span >= video_len {
                    return Err(Error::OutOfBounds {
                        video_len,
                        len: clip_len,
                        span,
                    });
                }
                let start = rng.random_range(0..video_len - span);
                sample_fixed_stride(video_len, start, clip_len, tau)
            }
            ClipStrategy::RandomSkip(max_stride) => sample_rts(video_len, clip_len, max_stride, rng),
        }
    }
}

/// `[t, t+1, ..., t+L-1]`.
pub fn sample_consecutive(video_len: usize, start: usize, clip_len: usize) -> Result<ClipIndices> {
    sample_fixed_stride(video_len, start, clip_len, 1)
}

/// `[t, t+tau, ..., t+(L-1)tau]`.
pub fn sample_fixed_stride(video_len: usize, start: usize, clip_len: usize, tau: usize) -> Result<ClipIndices> {
    if clip_len == 0 {
        return Err(Error::InvalidArgument("clip length must be at least 1".into()));
    }
    let span = (clip_len - 1) * tau;
    if start + span >= video_len {
        return Err(Error::OutOfBounds {
            video_len,
            len: clip_len,
            span: start + span,
        });
    }
    Ok(ClipIndices((0..clip_len).map(|k| start + k * tau).collect()))
}

/// Random temporal skipping.
///
/// Draws `L-1` strides uniformly from `{0, ..., max_stride}`, then a start
/// uniformly among the positions where the realized span fits. Spans that do
/// not fit are redrawn; after [`MAX_REJECTIONS`] failures the strides fall
/// back to zero. `max_stride = 0` means no skipping at all and yields
/// consecutive frames.
pub fn sample_rts<R: Rng + ?Sized>(
    video_len: usize,
    clip_len: usize,
    max_stride: usize,
    rng: &mut R,
) -> Result<ClipIndices> {
    if clip_len == 0 {
        return Err(Error::InvalidArgument("clip length must be at least 1".into()));
    }
    if video_len < clip_len {
        return Err(Error::OutOfBounds {
            video_len,
            len: clip_len,
            span: clip_len - 1,
        });
    }
    let strides = if max_stride == 0 {
        vec![1; clip_len - 1]
    } else {
        draw_strides(video_len, clip_len, max_stride, rng)
    };
    let span: usize = strides.iter().sum();
    let start = rng.random_range(0..video_len - span);
    let mut indices = Vec::with_capacity(clip_len);
    let mut at = start;
    indices.push(at);
    for s in strides {
        at += s;
        indices.push(at);
    }
    Ok(ClipIndices(indices))
}

fn draw_strides<R: Rng + ?Sized>(video_len: usize, clip_len: usize, max_stride: usize, rng: &mut R) -> Vec<usize> {
    let mut strides = vec![0; clip_len - 1];
    for _ in 0..MAX_REJECTIONS {
        for s in strides.iter_mut() {
            *s = rng.random_range(0..=max_stride);
        }
        if strides.iter().sum::<usize>() < video_len {
            return strides;
        }
    }
    vec![0; clip_len - 1]
}

/// Contiguous, near-equal partition of `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLayout {
    boundaries: Vec<Range<usize>>,
}

impl SegmentLayout {
    pub fn segment_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[Range<usize>] {
        &self.boundaries
    }
}

/// Splits `T` frames into `S` contiguous segments whose sizes differ by at
/// most one; earlier segments take the larger size.
pub fn partition_segments(video_len: usize, segments: usize) -> Result<SegmentLayout> {
    if segments == 0 {
        return Err(Error::InvalidArgument("segment count must be at least 1".into()));
    }
    if video_len < segments {
        return Err(Error::TooShort(format!(
            "{video_len} frames cannot form {segments} segments"
        )));
    }
    let (base, extra) = (video_len / segments, video_len % segments);
    let mut boundaries = Vec::with_capacity(segments);
    let mut start = 0;
    for k in 0..segments {
        let size = base + usize::from(k < extra);
        boundaries.push(start..start + size);
        start += size;
    }
    Ok(SegmentLayout { boundaries })
}

/// One random-skipping clip per segment, confined to that segment.
pub fn sample_segment_clips<R: Rng + ?Sized>(
    video_len: usize,
    segments: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<ClipIndices>> {
    sample_segment_clips_with(
        video_len,
        segments,
        cfg.clip_len,
        ClipStrategy::RandomSkip(cfg.max_stride),
        rng,
    )
}

pub fn sample_segment_clips_with<R: Rng + ?Sized>(
    video_len: usize,
    segments: usize,
    clip_len: usize,
    strategy: ClipStrategy,
    rng: &mut R,
) -> Result<Vec<ClipIndices>> {
    let layout = partition_segments(video_len, segments)?;
    if let Some(short) = layout.boundaries().iter().find(|r| r.len() < clip_len) {
        return Err(Error::TooShort(format!(
            "segment {short:?} is shorter than clip length {clip_len}"
        )));
    }
    layout
        .boundaries()
        .iter()
        .map(|r| Ok(strategy.draw(r.len(), clip_len, rng)?.offset(r.start)))
        .collect()
}

/// `K` evenly spaced indices over `[0, T)`: `round(i (T-1) / (K-1))` with
/// halves rounded up, or the middle frame when `K = 1`.
pub fn eval_sample_indices(video_len: usize, count: usize) -> Result<ClipIndices> {
    if video_len == 0 || count == 0 {
        return Err(Error::InvalidArgument(
            "evaluation sampling needs T >= 1 and K >= 1".into(),
        ));
    }
    let last = video_len - 1;
    if count == 1 {
        return Ok(ClipIndices(vec![(last + 1) / 2]));
    }
    let den = count - 1;
    Ok(ClipIndices(
        (0..count)
            .map(|i| (2 * i * last + den) / (2 * den))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn consecutive_examples() {
        assert_eq!(sample_consecutive(10, 0, 3).unwrap().as_slice(), &[0, 1, 2]);
        assert_eq!(sample_consecutive(10, 7, 3).unwrap().as_slice(), &[7, 8, 9]);
        assert!(matches!(
            sample_consecutive(10, 8, 3),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn fixed_stride_examples() {
        assert_eq!(
            sample_fixed_stride(20, 0, 4, 3).unwrap().as_slice(),
            &[0, 3, 6, 9]
        );
        assert_eq!(
            sample_fixed_stride(10, 2, 5, 1).unwrap(),
            sample_consecutive(10, 2, 5).unwrap()
        );
        assert!(sample_fixed_stride(10, 0, 4, 4).is_err());
    }

    #[test]
    fn rts_zero_stride_is_consecutive() {
        let mut r = rng(3);
        for _ in 0..200 {
            let c = sample_rts(30, 6, 0, &mut r).unwrap();
            let t = c.as_slice()[0];
            assert_eq!(c, sample_consecutive(30, t, 6).unwrap());
        }
    }

    #[test]
    fn rts_rejects_short_video() {
        assert!(sample_rts(5, 10, 3, &mut rng(0)).is_err());
    }

    #[test]
    fn rts_span_bound() {
        // 19 steps of at most 6 frames: span at most 114, so 115 frames
        let mut r = rng(11);
        let mut widest = 0;
        for _ in 0..20_000 {
            let c = sample_rts(200, 20, 6, &mut r).unwrap();
            assert!(*c.as_slice().last().unwrap() < 200);
            widest = widest.max(c.span());
        }
        assert!(widest <= 114);
        // mean span 57, standard deviation about 8.7
        assert!(widest >= 85, "widest span {widest}");
    }

    #[test]
    fn rts_falls_back_to_zero_strides() {
        // 10 strides each >= 1 almost surely exceed a 3-frame video
        let c = sample_rts(11, 11, 50, &mut rng(1)).unwrap();
        assert!(c.span() <= 10);
        let c = sample_rts(11, 11, 1000, &mut rng(2)).unwrap();
        assert_eq!(c.span(), 0);
    }

    #[test]
    fn partition_examples() {
        let seg = |t, s| {
            partition_segments(t, s)
                .unwrap()
                .boundaries()
                .to_vec()
        };
        assert_eq!(seg(9, 3), vec![0..3, 3..6, 6..9]);
        assert_eq!(seg(10, 3), vec![0..4, 4..7, 7..10]);
        assert!(partition_segments(2, 3).is_err());
    }

    #[test]
    fn segment_clips_confined() {
        let cfg = SamplerConfig::new(5, 2, 0).unwrap();
        let layout = partition_segments(300, 3).unwrap();
        for seed in 0..10_000u64 {
            let clips = sample_segment_clips(300, 3, &cfg, &mut rng(seed)).unwrap();
            assert_eq!(clips.len(), 3);
            for (clip, range) in clips.iter().zip(layout.boundaries()) {
                assert!(clip.as_slice().iter().all(|i| range.contains(i)));
            }
        }
    }

    #[test]
    fn single_segment_matches_whole_video_rts() {
        let cfg = SamplerConfig::new(6, 3, 0).unwrap();
        let a = sample_segment_clips(40, 1, &cfg, &mut rng(5)).unwrap();
        let b = sample_rts(40, 6, 3, &mut rng(5)).unwrap();
        assert_eq!(a, vec![b]);
    }

    #[test]
    fn forced_segment_layout() {
        let cfg = SamplerConfig::new(4, 0, 0).unwrap();
        let clips = sample_segment_clips(12, 3, &cfg, &mut rng(9)).unwrap();
        assert_eq!(
            clips.iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>(),
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10, 11]]
        );
        let cfg = SamplerConfig::new(5, 0, 0).unwrap();
        assert!(sample_segment_clips(12, 3, &cfg, &mut rng(9)).is_err());
    }

    #[test]
    fn eval_indices_examples() {
        assert_eq!(
            eval_sample_indices(25, 25).unwrap().into_vec(),
            (0..25).collect::<Vec<_>>()
        );

        // oracle: floor(x + 1/2) in exact rational arithmetic via f64 on small ints
        let idx = eval_sample_indices(100, 25).unwrap().into_vec();
        let oracle: Vec<usize> = (0..25)
            .map(|i| ((i as f64) * 99.0 / 24.0 + 0.5).floor() as usize)
            .collect();
        assert_eq!(idx, oracle);
        assert_eq!((idx[0], idx[24]), (0, 99));
        assert_eq!(&idx[..6], &[0, 4, 8, 12, 17, 21]);

        let short = eval_sample_indices(3, 25).unwrap().into_vec();
        assert_eq!(short.len(), 25);
        assert!(short.windows(2).all(|w| w[0] <= w[1]));
        assert!(short.iter().all(|i| *i < 3));
        assert_eq!((short[0], short[24]), (0, 2));

        assert_eq!(eval_sample_indices(5, 1).unwrap().into_vec(), vec![2]);
        assert_eq!(eval_sample_indices(4, 1).unwrap().into_vec(), vec![2]);
    }

    proptest! {
        #[test]
        fn rts_output_contract(t in 1usize..400, l in 1usize..30, m in 0usize..12, seed: u64) {
            prop_assume!(t >= l);
            let a = sample_rts(t, l, m, &mut rng(seed)).unwrap();
            let b = sample_rts(t, l, m, &mut rng(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), l);
            prop_assert!(a.as_slice().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(a.as_slice().iter().all(|i| *i < t));
            if m > 0 {
                prop_assert!(a.strides().all(|s| s <= m));
            }
        }

        #[test]
        fn eval_contract(t in 1usize..500, k in 1usize..60) {
            let idx = eval_sample_indices(t, k).unwrap().into_vec();
            prop_assert_eq!(idx.len(), k);
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(idx.iter().all(|i| *i < t));
            if k > 1 {
                prop_assert_eq!(idx[0], 0);
                prop_assert_eq!(idx[k - 1], t - 1);
            }
        }

        #[test]
        fn partition_contract(t in 1usize..1000, s in 1usize..20) {
            prop_assume!(t >= s);
            let layout = partition_segments(t, s).unwrap();
            let b = layout.boundaries();
            prop_assert_eq!(b.len(), s);
            prop_assert_eq!(b[0].start, 0);
            prop_assert_eq!(b[s - 1].end, t);
            for w in b.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert!(w[0].len() >= w[1].len());
                prop_assert!(w[0].len() - w[1].len() <= 1);
            }
        }
    }
}
