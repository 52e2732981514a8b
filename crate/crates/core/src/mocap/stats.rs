use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::MotionClip;
use crate::error::{Error, Result};

/// Floor applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel population mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn compute_stats(clips: &[MotionClip]) -> Result<NormalizationStats> {
    compute_stats_frames(clips.iter().map(|c| c.frames()))
}

/// Two-pass mean and variance over every frame of every input.
///
/// A channel whose values are all identical gets that value as its mean
/// exactly, so it normalizes to exactly zero.
pub fn compute_stats_frames<'a>(
    clips: impl IntoIterator<Item = ArrayView2<'a, f64>> + Clone,
) -> Result<NormalizationStats> {
    let mut width = None;
    let mut count = 0usize;
    let mut sum: Vec<f64> = Vec::new();
    let mut first: Vec<f64> = Vec::new();
    let mut constant: Vec<bool> = Vec::new();
    for clip in clips.clone() {
        let m = *width.get_or_insert(clip.ncols());
        if clip.ncols() != m {
            return Err(Error::Shape(format!(
                "clip has {} channels, expected {m}",
                clip.ncols()
            )));
        }
        if sum.is_empty() {
            sum = vec![0.0; m];
            constant = vec![true; m];
            first = clip.row(0).to_vec();
        }
        for row in clip.rows() {
            for c in 0..m {
                sum[c] += row[c];
                constant[c] &= row[c] == first[c];
            }
        }
        count += clip.nrows();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("statistics need at least one frame".into()));
    }
    let n = count as f64;
    let mean: Vec<f64> = sum
        .iter()
        .zip(&constant)
        .zip(&first)
        .map(|((s, &k), &f)| if k { f } else { s / n })
        .collect();
    let mut sq = vec![0.0; mean.len()];
    for clip in clips {
        for row in clip.rows() {
            for (c, acc) in sq.iter_mut().enumerate() {
                let d = row[c] - mean[c];
                *acc += d * d;
            }
        }
    }
    let std = sq.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(NormalizationStats { mean, std })
}

impl NormalizationStats {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, frames: ArrayView2<'_, f64>) -> Result<()> {
        if frames.ncols() != self.width() {
            return Err(Error::Shape(format!(
                "frames have {} channels, statistics have {}",
                frames.ncols(),
                self.width()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, frames: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(frames)?;
        let mut out = frames.to_owned();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, frames: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(frames)?;
        let mut out = frames.to_owned();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        Ok(out)
    }
}
