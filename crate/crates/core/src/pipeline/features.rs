//! Per-cell feature maps for the appearance and motion streams.

use crate::bilinear::FeatureMap;
use crate::error::{Error, Result};
use crate::media::{FlowField, Frame, VideoClip};
use crate::sampler::partition_segments;

/// Grid and histogram layout of the feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Cells per column and per row.
    pub grid: (usize, usize),
    /// Increasing positive flow-magnitude edges `e_0 < e_1 < ...`. The
    /// histogram has a zero bin `[0, e_0)`, bins `[e_i, e_{i+1})` and an
    /// open-ended last bin `[e_last, inf)`.
    pub magnitude_edges: Vec<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            grid: (3, 3),
            magnitude_edges: vec![0.5, 1.5, 2.5, 3.5, 5.0, 7.0, 10.0],
        }
    }
}

impl FeatureConfig {
    pub const SPATIAL_CHANNELS: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::InvalidArgument("feature grid must be nonempty".into()));
        }
        let e = &self.magnitude_edges;
        if e.is_empty() || !(e[0] > 0.0) || e.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("magnitude edges must be positive and increasing".into()));
        }
        Ok(())
    }

    pub fn spatial_channels(&self) -> usize {
        Self::SPATIAL_CHANNELS
    }

    pub fn histogram_bins(&self) -> usize {
        self.magnitude_edges.len() + 1
    }

    /// Histogram bins followed by mean u, mean v and mean magnitude.
    pub fn temporal_channels(&self) -> usize {
        self.histogram_bins() + 3
    }
}

/// Feature maps of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFeatures {
    /// Mean intensity and mean per-pixel temporal variance per cell.
    pub spatial: FeatureMap,
    /// Flow-magnitude histogram and mean flow per cell.
    pub temporal: FeatureMap,
}

/// [`extract_features`] on the frames of a sampled clip.
pub fn extract_clip_features(clip: &VideoClip, flows: &[FlowField], cfg: &FeatureConfig) -> Result<StreamFeatures> {
    extract_features(clip.frames(), flows, cfg)
}

/// Computes both feature maps of a clip. `flows[t]` is the flow from frame
/// `t` to frame `t + 1`; a single-frame clip has no flows and an all-zero
/// motion map.
pub fn extract_features(frames: &[Frame], flows: &[FlowField], cfg: &FeatureConfig) -> Result<StreamFeatures> {
    cfg.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("clip has no frames".into()))?;
    let (h, w) = first.dims();
    let ch = first.channels();
    if frames.iter().any(|f| f.dims() != (h, w) || f.channels() != ch) {
        return Err(Error::SizeMismatch("clip frames differ in size".into()));
    }
    if flows.len() + 1 != frames.len() {
        return Err(Error::SizeMismatch(format!(
            "{} frames need {} flows, got {}",
            frames.len(),
            frames.len() - 1,
            flows.len()
        )));
    }
    if flows.iter().any(|f| f.dims() != (h, w)) {
        return Err(Error::SizeMismatch("flow size differs from frame size".into()));
    }
    if cfg.grid.0 > h || cfg.grid.1 > w {
        return Err(Error::InvalidArgument(format!(
            "grid {:?} is finer than the {h}x{w} frame",
            cfg.grid
        )));
    }

    // per-pixel mean and variance over frames, averaged over channels
    let n = frames.len() as f64;
    let mut mean = vec![0.0f64; h * w];
    let mut sq = vec![0.0f64; h * w];
    for f in frames {
        for (p, px) in f.data().chunks_exact(ch).enumerate() {
            let v = px.iter().map(|&c| f64::from(c)).sum::<f64>() / ch as f64;
            mean[p] += v;
            sq[p] += v * v;
        }
    }
    let var: Vec<f64> = mean.iter().zip(&sq).map(|(m, s)| (s / n - (m / n).powi(2)).max(0.0)).collect();
    for m in &mut mean {
        *m /= n;
    }

    let rows = partition_segments(h, cfg.grid.0)?;
    let cols = partition_segments(w, cfg.grid.1)?;
    let (sc, tc) = (cfg.spatial_channels(), cfg.temporal_channels());
    let bins = cfg.histogram_bins();
    let mut spatial = Vec::with_capacity(cfg.grid.0 * cfg.grid.1 * sc);
    let mut temporal = Vec::with_capacity(cfg.grid.0 * cfg.grid.1 * tc);
    for ry in rows.boundaries() {
        for rx in cols.boundaries() {
            let area = (ry.len() * rx.len()) as f64;
            let (mut m, mut v) = (0.0, 0.0);
            for y in ry.clone() {
                for x in rx.clone() {
                    m += mean[y * w + x];
                    v += var[y * w + x];
                }
            }
            spatial.push((m / area) as f32);
            spatial.push((v / area) as f32);

            let mut cell = vec![0.0f64; tc];
            if !flows.is_empty() {
                let count = area * flows.len() as f64;
                for flow in flows {
                    for y in ry.clone() {
                        for x in rx.clone() {
                            let (u, v) = flow.get(x, y);
                            let mag = u.hypot(v);
                            cell[cfg.magnitude_edges.partition_point(|&e| e <= mag)] += 1.0;
                            cell[bins] += u;
                            cell[bins + 1] += v;
                            cell[bins + 2] += mag;
                        }
                    }
                }
                for c in &mut cell {
                    *c /= count;
                }
            }
            temporal.extend(cell.into_iter().map(|c| c as f32));
        }
    }
    Ok(StreamFeatures {
        spatial: FeatureMap::new(cfg.grid.0, cfg.grid.1, sc, spatial)?,
        temporal: FeatureMap::new(cfg.grid.0, cfg.grid.1, tc, temporal)?,
    })
}
