//! Videos with the sprite tracks needed to recover their motion.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::media::{load_frame, FlowField, Frame};
use crate::sampler::ClipIndices;
use crate::synth::{frame_file_name, read_manifest, Perturbation, SceneTracks, SyntheticVideo, TRACKS_FILE};

/// A labelled frame sequence. `origin[i]` is the index in the originally
/// generated sequence of frame `i`, so flow stays exact after resampling.
#[derive(Debug, Clone)]
pub struct Video {
    id: String,
    class_id: usize,
    frames: Vec<Frame>,
    tracks: SceneTracks,
    origin: Vec<usize>,
}

impl Video {
    pub fn new(id: impl Into<String>, class_id: usize, frames: Vec<Frame>, tracks: SceneTracks) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidData("video has no frames".into()));
        }
        if tracks.frame_count() != frames.len() {
            return Err(Error::SizeMismatch(format!(
                "{} frames but tracks cover {}",
                frames.len(),
                tracks.frame_count()
            )));
        }
        if frames.iter().any(|f| f.dims() != tracks.dims()) {
            return Err(Error::SizeMismatch("frame size differs from the track canvas".into()));
        }
        let origin = (0..frames.len()).collect();
        Ok(Self {
            id: id.into(),
            class_id,
            frames,
            tracks,
            origin,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    /// Exact flow from frame `a` to frame `b` of this (possibly resampled)
    /// video.
    pub fn flow(&self, a: usize, b: usize) -> FlowField {
        self.tracks.flow_between(self.origin[a], self.origin[b])
    }

    /// Frames and consecutive-pair flows of a clip.
    pub fn clip(&self, indices: &ClipIndices) -> Result<(Vec<Frame>, Vec<FlowField>)> {
        let idx = indices.as_slice();
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::OutOfBounds {
                video_len: self.len(),
                len: idx.len(),
                span: bad,
            });
        }
        let frames = idx.iter().map(|&i| self.frames[i].clone()).collect();
        let flows = idx.windows(2).map(|w| self.flow(w[0], w[1])).collect();
        Ok((frames, flows))
    }

    /// The video as it would be recorded at a different frame rate.
    pub fn perturbed<R: Rng + ?Sized>(&self, mode: Perturbation, rng: &mut R) -> Result<Video> {
        let keep = mode.indices(self.len(), rng)?;
        Ok(Video {
            id: self.id.clone(),
            class_id: self.class_id,
            frames: keep.iter().map(|&i| self.frames[i].clone()).collect(),
            tracks: self.tracks.clone(),
            origin: keep.iter().map(|&i| self.origin[i]).collect(),
        })
    }
}

impl From<SyntheticVideo> for Video {
    fn from(v: SyntheticVideo) -> Self {
        let origin = (0..v.frames.len()).collect();
        Video {
            id: v.entry.video_id,
            class_id: v.entry.class_id,
            frames: v.frames,
            tracks: v.tracks,
            origin,
        }
    }
}

/// Reads every video listed in `<root>/manifest.tsv`.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<Video>> {
    let root = root.as_ref();
    let entries = read_manifest(root)?;
    entries
        .par_iter()
        .map(|e| {
            let dir = root.join(&e.relative_path);
            let frames = (0..e.num_frames)
                .map(|t| load_frame(dir.join(frame_file_name(t))))
                .collect::<Result<Vec<_>>>()?;
            let path = dir.join(TRACKS_FILE);
            let text = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
            Video::new(e.video_id.clone(), e.class_id, frames, SceneTracks::from_tsv(&text)?)
        })
        .collect()
}
