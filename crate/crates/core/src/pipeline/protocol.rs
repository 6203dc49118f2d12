//! Test-time protocol: evenly spaced clips, ten crops per clip, score
//! averaging and late fusion of the two streams.

use rayon::prelude::*;

use crate::bilinear::Descriptor;
use crate::error::{Error, Result};
use crate::media::{FlowField, Frame};
use crate::sampler::{eval_sample_indices, partition_segments, sample_consecutive};

use super::classifier::TwoStreamModel;
use super::dataset::Video;
use super::descriptor::{make_descriptor, Sketchers, Stream};
use super::features::{extract_features, FeatureConfig};

/// A crop rectangle, optionally mirrored horizontally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub height: usize,
    pub width: usize,
    pub flip: bool,
}

impl CropWindow {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            x: 0,
            y: 0,
            height,
            width,
            flip: false,
        }
    }

    fn is_identity_for(&self, dims: (usize, usize)) -> bool {
        !self.flip && self.x == 0 && self.y == 0 && (self.height, self.width) == dims
    }

    /// Crops frames and flows alike; flipping mirrors the flow and negates
    /// its horizontal component.
    pub fn apply(&self, frames: &[Frame], flows: &[FlowField]) -> Result<(Vec<Frame>, Vec<FlowField>)> {
        if frames.first().is_some_and(|f| self.is_identity_for(f.dims())) {
            return Ok((frames.to_vec(), flows.to_vec()));
        }
        Ok((
            frames
                .iter()
                .map(|f| f.crop(self.x, self.y, self.height, self.width, self.flip))
                .collect::<Result<_>>()?,
            flows
                .iter()
                .map(|f| f.crop(self.x, self.y, self.height, self.width, self.flip))
                .collect::<Result<_>>()?,
        ))
    }
}

/// Four corners and the centre, each plain and mirrored.
pub fn tencrop_windows(height: usize, width: usize, crop_h: usize, crop_w: usize) -> Result<Vec<CropWindow>> {
    if crop_h == 0 || crop_w == 0 || crop_h > height || crop_w > width {
        return Err(Error::InvalidArgument(format!(
            "crop {crop_h}x{crop_w} does not fit in {height}x{width}"
        )));
    }
    let (dx, dy) = (width - crop_w, height - crop_h);
    let origins = [(0, 0), (dx, 0), (0, dy), (dx, dy), (dx / 2, dy / 2)];
    Ok([false, true]
        .iter()
        .flat_map(|&flip| {
            origins.iter().map(move |&(x, y)| CropWindow {
                x,
                y,
                height: crop_h,
                width: crop_w,
                flip,
            })
        })
        .collect())
}

pub fn tencrop(frame: &Frame, crop_h: usize, crop_w: usize) -> Result<Vec<Frame>> {
    tencrop_windows(frame.height(), frame.width(), crop_h, crop_w)?
        .iter()
        .map(|c| frame.crop(c.x, c.y, c.height, c.width, c.flip))
        .collect()
}

/// Test-time sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Evenly spaced clips per video.
    pub anchors: usize,
    pub clip_len: usize,
    pub segments: usize,
    /// Ten-crop size, or the full frame only when `None`.
    pub crop: Option<(usize, usize)>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            anchors: 25,
            clip_len: 11,
            segments: 3,
            crop: Some((40, 40)),
        }
    }
}

/// Descriptor pairs `(spatial, temporal)` for every anchor and crop of a
/// video. Anchor `i` takes the `i`-th of `anchors` evenly spaced consecutive
/// clips inside each segment.
pub fn video_descriptors(
    video: &Video,
    eval: &EvalConfig,
    features: &FeatureConfig,
    sketchers: &Sketchers,
) -> Result<Vec<(Descriptor, Descriptor)>> {
    let layout = partition_segments(video.len(), eval.segments)?;
    let mut starts = Vec::with_capacity(layout.segment_count());
    for r in layout.boundaries() {
        if r.len() < eval.clip_len || eval.clip_len == 0 {
            return Err(Error::TooShort(format!(
                "video {} segment {r:?} cannot hold a clip of {}",
                video.id(),
                eval.clip_len
            )));
        }
        let local = eval_sample_indices(r.len() - eval.clip_len + 1, eval.anchors)?;
        starts.push(local.as_slice().iter().map(|s| s + r.start).collect::<Vec<_>>());
    }
    let (h, w) = video.dims();
    let windows = match eval.crop {
        Some((ch, cw)) => tencrop_windows(h, w, ch, cw)?,
        None => vec![CropWindow::full(h, w)],
    };
    let mut out = Vec::with_capacity(eval.anchors * windows.len());
    for i in 0..eval.anchors {
        let clips = starts
            .iter()
            .map(|s| video.clip(&sample_consecutive(video.len(), s[i], eval.clip_len)?))
            .collect::<Result<Vec<_>>>()?;
        for win in &windows {
            let segs = clips
                .iter()
                .map(|(frames, flows)| {
                    let (frames, flows) = win.apply(frames, flows)?;
                    extract_features(&frames, &flows, features)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push((
                make_descriptor(&segs, Stream::Spatial, &sketchers.spatial)?,
                make_descriptor(&segs, Stream::Temporal, &sketchers.temporal)?,
            ));
        }
    }
    Ok(out)
}

/// Pre-softmax class scores per stream, averaged over all clips and crops.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScores {
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

pub fn score_descriptors(model: &TwoStreamModel, descriptors: &[(Descriptor, Descriptor)]) -> Result<VideoScores> {
    if descriptors.is_empty() {
        return Err(Error::InvalidArgument("no descriptors to score".into()));
    }
    let k = model.spatial.classes();
    let mut spatial = vec![0.0; k];
    let mut temporal = vec![0.0; k];
    for (s, t) in descriptors {
        for (acc, z) in spatial.iter_mut().zip(model.spatial.logits(s)?) {
            *acc += z;
        }
        for (acc, z) in temporal.iter_mut().zip(model.temporal.logits(t)?) {
            *acc += z;
        }
    }
    let n = descriptors.len() as f64;
    spatial.iter_mut().chain(temporal.iter_mut()).for_each(|v| *v /= n);
    Ok(VideoScores { spatial, temporal })
}

pub fn predict_video(
    model: &TwoStreamModel,
    video: &Video,
    eval: &EvalConfig,
    features: &FeatureConfig,
    sketchers: &Sketchers,
) -> Result<VideoScores> {
    score_descriptors(model, &video_descriptors(video, eval, features, sketchers)?)
}

/// Weighted average `(ws * s + wt * t) / (ws + wt)` of two score vectors.
pub fn late_fuse(spatial: &[f64], temporal: &[f64], w_spatial: f64, w_temporal: f64) -> Result<Vec<f64>> {
    if spatial.len() != temporal.len() {
        return Err(Error::SizeMismatch(format!(
            "{} spatial scores vs {} temporal scores",
            spatial.len(),
            temporal.len()
        )));
    }
    let total = w_spatial + w_temporal;
    if !(w_spatial >= 0.0 && w_temporal >= 0.0 && total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fusion weights must be non-negative and not both zero, got {w_spatial}, {w_temporal}"
        )));
    }
    Ok(spatial
        .iter()
        .zip(temporal)
        .map(|(s, t)| (w_spatial * s + w_temporal * t) / total)
        .collect())
}

impl VideoScores {
    pub fn fused(&self, weights: (f64, f64)) -> Result<Vec<f64>> {
        late_fuse(&self.spatial, &self.temporal, weights.0, weights.1)
    }
}

/// Index of the largest score; the first on ties.
pub fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Descriptors of many videos, computed in parallel and returned in input
/// order.
pub(crate) fn all_video_descriptors(
    videos: &[Video],
    eval: &EvalConfig,
    features: &FeatureConfig,
    sketchers: &Sketchers,
) -> Result<Vec<Vec<(Descriptor, Descriptor)>>> {
    videos
        .par_iter()
        .map(|v| video_descriptors(v, eval, features, sketchers))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::classifier::ClassifierModel;
    use crate::synth::SceneSpec;

    #[test]
    fn ten_crops_of_a_frame() {
        let f = Frame::from_fn(6, 8, 1, |x, y, _| (x + 8 * y) as f32 / 48.0).unwrap();
        let crops = tencrop(&f, 4, 4).unwrap();
        assert_eq!(crops.len(), 10);
        assert_eq!(crops[0].get(0, 0, 0), f.get(0, 0, 0));
        assert_eq!(crops[3].get(3, 3, 0), f.get(7, 5, 0));
        assert_eq!(crops[4].get(0, 0, 0), f.get(2, 1, 0));
        // mirrored top-left crop starts at the crop's right edge
        assert_eq!(crops[5].get(0, 0, 0), f.get(3, 0, 0));
        assert!(tencrop(&f, 7, 4).is_err());
    }

    #[test]
    fn flipped_flow_negates_u() {
        let flow = FlowField::from_fn(4, 4, |x, y| (x as f64, y as f64));
        let frame = Frame::filled(4, 4, 1, 0.5).unwrap();
        let win = CropWindow {
            x: 1,
            y: 0,
            height: 2,
            width: 3,
            flip: true,
        };
        let (_, flows) = win.apply(&[frame.clone(), frame], &[flow]).unwrap();
        assert_eq!(flows[0].get(0, 1), (-3.0, 1.0));
    }

    #[test]
    fn fusion_and_argmax() {
        let s = VideoScores {
            spatial: vec![0.6, 0.4],
            temporal: vec![0.1, 0.9],
        };
        assert_eq!(s.fused((1.0, 1.0)).unwrap(), vec![0.35, 0.65]);
        assert_eq!(late_fuse(&[1.0, 2.0], &[3.0, 6.0], 3.0, 1.0).unwrap(), vec![1.5, 3.0]);
        assert_eq!(argmax(&s.fused((1.0, 0.0)).unwrap()), 0);
        assert!(late_fuse(&[1.0], &[1.0, 2.0], 1.0, 1.0).is_err());
        assert!(late_fuse(&[1.0], &[1.0], 0.0, 0.0).is_err());
        assert!(late_fuse(&[1.0], &[1.0], -1.0, 2.0).is_err());
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn descriptor_count_and_uniform_scores() {
        let frames = 30;
        let spec = SceneSpec::translating((20, 20), (6, 6), (2.0, 3.0), (0.3, 0.2), frames, 4).unwrap();
        let tracks = spec.tracks(frames).unwrap();
        let rendered = (0..frames).map(|t| spec.render_frame(&tracks, t).unwrap()).collect();
        let video = Video::new("v", 0, rendered, tracks).unwrap();
        let eval = EvalConfig {
            anchors: 3,
            clip_len: 5,
            segments: 2,
            crop: Some((16, 16)),
        };
        let fc = FeatureConfig::default();
        let sk = Sketchers::new(&fc, 32, 0).unwrap();
        let d = video_descriptors(&video, &eval, &fc, &sk).unwrap();
        assert_eq!(d.len(), 30);
        let model = TwoStreamModel {
            spatial: ClassifierModel::zeros(3, 32),
            temporal: ClassifierModel::zeros(3, 32),
        };
        let scores = score_descriptors(&model, &d).unwrap();
        assert!(scores.spatial.iter().chain(&scores.temporal).all(|z| *z == 0.0));
        let long = EvalConfig {
            clip_len: 16,
            ..eval
        };
        assert!(video_descriptors(&video, &long, &fc, &sk).is_err());
    }
}
