//! Fluctuating luminance stability classifier.
//!
//! The anchor-region mean luminance of every frame is compared against the
//! mean over the whole clip. A relative deviation above `unstable_threshold`
//! in any frame makes the clip unstable; otherwise a deviation above
//! `uncertain_threshold` makes it uncertain; otherwise it is stable.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{box_mean, BoundingBox, Clip, TopOriginRect};
use crate::label::StabilityLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlscConfig {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub unstable_threshold: f64,
    pub uncertain_threshold: f64,
}

impl FlscConfig {
    pub const DEFAULT_UNSTABLE: f64 = 0.25;
    pub const DEFAULT_UNCERTAIN: f64 = 0.15;

    pub fn new(bbox: BoundingBox, uncertain_threshold: f64, unstable_threshold: f64) -> Result<Self> {
        let config = Self {
            bbox,
            unstable_threshold,
            uncertain_threshold,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_box(bbox: BoundingBox) -> Self {
        Self {
            bbox,
            unstable_threshold: Self::DEFAULT_UNSTABLE,
            uncertain_threshold: Self::DEFAULT_UNCERTAIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.uncertain_threshold, self.unstable_threshold);
        if 0.0 < lo && lo < hi && hi < 1.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "thresholds must satisfy 0 < uncertain ({lo}) < unstable ({hi}) < 1"
            )))
        }
    }

    /// Label for the largest relative deviation seen in a clip.
    pub fn label_for_deviation(&self, max_deviation: f64) -> StabilityLabel {
        if max_deviation > self.unstable_threshold {
            StabilityLabel::Unstable
        } else if max_deviation > self.uncertain_threshold {
            StabilityLabel::Uncertain
        } else {
            StabilityLabel::Stable
        }
    }
}

impl Default for FlscConfig {
    fn default() -> Self {
        Self::with_box(BoundingBox::DEFAULT_ANCHOR)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDeviation {
    pub frame_index: usize,
    pub frame_mean: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSeries {
    pub clip_mean: f64,
    pub per_frame: Vec<FrameDeviation>,
}

impl DeviationSeries {
    pub fn max_deviation(&self) -> f64 {
        self.per_frame
            .iter()
            .map(|d| d.relative_deviation)
            .fold(0.0, f64::max)
    }

    /// Writes `frame,frame_mean,relative_deviation`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["frame", "frame_mean", "relative_deviation"])?;
        for d in &self.per_frame {
            w.write_record([
                d.frame_index.to_string(),
                d.frame_mean.to_string(),
                d.relative_deviation.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn box_rect(clip: &Clip, bbox: &BoundingBox) -> Result<TopOriginRect> {
    let (w, h) = clip
        .dimensions()
        .ok_or_else(|| Error::EmptyInput("clip has no frames".into()))?;
    bbox.to_top_origin(w, h)
}

fn frame_means(clip: &Clip, bbox: &BoundingBox) -> Result<Vec<f64>> {
    let rect = box_rect(clip, bbox)?;
    Ok(clip.frames().par_iter().map(|f| box_mean(f, &rect)).collect())
}

fn mean_of_frame_means(means: &[f64]) -> f64 {
    crate::stats::compensated_sum(means.iter().copied()) / means.len() as f64
}

pub fn clip_mean_luminance(clip: &Clip, bbox: &BoundingBox) -> Result<f64> {
    let means = frame_means(clip, bbox)?;
    Ok(mean_of_frame_means(&means))
}

/// Relative deviations of per-frame anchor means against their common mean.
pub fn deviations_from_means(means: &[f64]) -> Result<DeviationSeries> {
    if means.is_empty() {
        return Err(Error::EmptyInput("no frames".into()));
    }
    let clip_mean = mean_of_frame_means(means);
    if clip_mean <= 0.0 {
        return Err(Error::DarkClip);
    }
    let per_frame = means
        .iter()
        .enumerate()
        .map(|(frame_index, &frame_mean)| FrameDeviation {
            frame_index,
            frame_mean,
            relative_deviation: (frame_mean - clip_mean).abs() / clip_mean,
        })
        .collect();
    Ok(DeviationSeries {
        clip_mean,
        per_frame,
    })
}

pub fn deviation_series(clip: &Clip, config: &FlscConfig) -> Result<DeviationSeries> {
    deviations_from_means(&frame_means(clip, &config.bbox)?)
}

/// Ternary label from per-frame anchor means. A dark region reads as a
/// detached flame.
pub fn classify_frame_means(means: &[f64], config: &FlscConfig) -> Result<StabilityLabel> {
    match deviations_from_means(means) {
        Ok(series) => Ok(config.label_for_deviation(series.max_deviation())),
        Err(Error::DarkClip) => Ok(StabilityLabel::Unstable),
        Err(e) => Err(e),
    }
}

pub fn classify_clip_flsc(clip: &Clip, config: &FlscConfig) -> Result<StabilityLabel> {
    config.validate()?;
    classify_frame_means(&frame_means(clip, &config.bbox)?, config)
}
