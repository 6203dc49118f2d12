//! Clip descriptors: segment aggregation, Tensor Sketch pooling and
//! normalization.

use std::fmt;

use crate::bilinear::{aggregate_segments, normalize_descriptor, Descriptor, FeatureMap, SketchParams, TensorSketcher};
use crate::error::{Error, Result};
use crate::rng;

use super::features::{FeatureConfig, StreamFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Spatial,
    Temporal,
}

impl Stream {
    pub fn select<'a>(&self, f: &'a StreamFeatures) -> &'a FeatureMap {
        match self {
            Stream::Spatial => &f.spatial,
            Stream::Temporal => &f.temporal,
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stream::Spatial => "spatial",
            Stream::Temporal => "temporal",
        })
    }
}

/// One sketcher per stream, with independent hash tables.
#[derive(Debug)]
pub struct Sketchers {
    pub spatial: TensorSketcher,
    pub temporal: TensorSketcher,
}

impl Sketchers {
    pub fn new(features: &FeatureConfig, dim: usize, seed: u64) -> Result<Self> {
        features.validate()?;
        Ok(Self {
            spatial: TensorSketcher::new(SketchParams::new(
                features.spatial_channels(),
                dim,
                rng::derive(seed, &[1]),
            )?)?,
            temporal: TensorSketcher::new(SketchParams::new(
                features.temporal_channels(),
                dim,
                rng::derive(seed, &[2]),
            )?)?,
        })
    }

    pub fn get(&self, stream: Stream) -> &TensorSketcher {
        match stream {
            Stream::Spatial => &self.spatial,
            Stream::Temporal => &self.temporal,
        }
    }

    pub fn dim(&self) -> usize {
        self.spatial.dim()
    }
}

/// Multiplies the per-segment maps of `stream`, pools the product with the
/// sketcher and normalizes the result.
pub fn make_descriptor(segments: &[StreamFeatures], stream: Stream, sketcher: &TensorSketcher) -> Result<Descriptor> {
    if segments.is_empty() {
        return Err(Error::InvalidArgument("no segments to describe".into()));
    }
    let maps: Vec<FeatureMap> = segments.iter().map(|s| stream.select(s).clone()).collect();
    let pooled = sketcher.pool(&aggregate_segments(&maps)?)?;
    Ok(normalize_descriptor(&pooled))
}
