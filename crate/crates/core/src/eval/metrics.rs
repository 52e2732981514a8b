use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::mocap::rotation::{expmap_to_rotmat, rotmat_to_euler};
use crate::mocap::MotionClip;
use crate::net::Matrix;

/// Row-wise softmax with temperature 1.
pub fn softmax_rows(scores: &Matrix) -> Matrix {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

fn entropy<'a>(p: impl IntoIterator<Item = &'a f64>) -> f64 {
    -p.into_iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InceptionStats {
    /// One posterior over the `K` actions per clip.
    pub posteriors: Matrix,
    pub marginal: Vec<f64>,
    /// `H(action)` in nats.
    pub h_action: f64,
    /// `H(action | animation)`, the mean posterior entropy.
    pub h_conditional: f64,
    pub score: f64,
    /// Per-action terms `mean_i p(a|i) ln(p(a|i) / p(a))`; they sum to `score`.
    pub per_action: Vec<f64>,
}

/// `H(marginal) - mean H(posterior)` for rows that are probability vectors.
pub fn inception_from_posteriors(posteriors: Matrix) -> Result<InceptionStats> {
    let (n, k) = posteriors.dim();
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("inception score of an empty clip set".into()));
    }
    for (i, row) in posteriors.rows().into_iter().enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("posterior {i} is not a distribution")));
        }
    }
    let marginal = posteriors.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let h_action = entropy(&marginal);
    let h_conditional = posteriors.rows().into_iter().map(|r| entropy(r.iter())).sum::<f64>() / n as f64;
    let per_action = (0..k)
        .map(|a| {
            posteriors
                .column(a)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * (p.ln() - marginal[a].ln()))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    Ok(InceptionStats {
        posteriors,
        marginal,
        h_action,
        h_conditional,
        score: h_action - h_conditional,
        per_action,
    })
}

/// Inception score of clips given their `clips x K` ranker scores.
pub fn inception_score(scores: &Matrix) -> Result<InceptionStats> {
    if scores.ncols() < 2 {
        return Err(Error::InvalidArgument(
            "inception score needs K >= 2 descriptions".into(),
        ));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ranker scores".into()));
    }
    inception_from_posteriors(softmax_rows(scores))
}

/// Percentage of queries whose true candidate is among the `k` best.
///
/// Ties are broken in favor of the lower candidate index, so a true
/// candidate tied with an earlier one ranks below it.
pub fn recall_at_k(scores: &Matrix, truth: &[usize], k: usize) -> Result<f64> {
    let (q, kk) = scores.dim();
    if k == 0 || k > kk {
        return Err(Error::InvalidArgument(format!("recall@{k} over {kk} candidates")));
    }
    if truth.len() != q || q == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} truths for {q} queries",
            truth.len()
        )));
    }
    let mut hits = 0;
    for (row, &t) in scores.rows().into_iter().zip(truth) {
        if t >= kk {
            return Err(Error::InvalidArgument(format!("truth index {t} out of {kk}")));
        }
        let st = row[t];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(j, &s)| s > st || (s == st && j < t))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / q as f64)
}

/// The `k` descriptions covering the most frames, ties broken alphabetically.
pub fn top_k_pool<'a>(items: impl IntoIterator<Item = (&'a str, usize)>, k: usize) -> Result<Vec<String>> {
    let mut frames: BTreeMap<&str, usize> = BTreeMap::new();
    for (d, n) in items {
        *frames.entry(d).or_default() += n;
    }
    if k == 0 || k > frames.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {k} descriptions out of {}",
            frames.len()
        )));
    }
    let mut ranked: Vec<(&str, usize)> = frames.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(d, _)| d.to_string()).collect())
}

/// Frames after the last seed frame that correspond to `ms` milliseconds.
pub fn horizon_frame(ms: f64, frame_rate: f64) -> Result<usize> {
    let x = ms * frame_rate / 1000.0;
    let r = x.round();
    if !(x >= 0.0 && (x - r).abs() <= 1e-9 * x.max(1.0)) {
        return Err(Error::InvalidArgument(format!(
            "{ms} ms is not a whole number of frames at {frame_rate} Hz"
        )));
    }
    Ok(r as usize)
}

/// Euler angles in radians of every rotation joint of one exponential-map frame.
fn euler_row(clip: &MotionClip, t: usize) -> Result<Vec<f64>> {
    let layout = clip.skeleton().rotation_layout()?;
    let frame = clip.frames().row(t).to_owned();
    let mut out = Vec::with_capacity(3 * layout.len());
    for slot in layout {
        let [x, y, z] = slot.columns;
        let r = expmap_to_rotmat([frame[x], frame[y], frame[z]]);
        out.extend(rotmat_to_euler(&r, slot.order));
    }
    Ok(out)
}

/// Euclidean distance between Euler angles of all rotation channels at each
/// horizon, counted from the last seed frame (index `seed_len - 1`).
/// Position channels are not compared.
pub fn completion_error(
    predicted: &MotionClip,
    truth: &MotionClip,
    seed_len: usize,
    horizons_ms: &[f64],
) -> Result<Vec<f64>> {
    if predicted.frames().dim() != truth.frames().dim() {
        return Err(Error::Shape(format!(
            "predicted clip {:?} and truth {:?} differ in shape",
            predicted.frames().dim(),
            truth.frames().dim()
        )));
    }
    if seed_len == 0 || seed_len > truth.len() {
        return Err(Error::InvalidArgument(format!("seed of {seed_len} frames")));
    }
    let (p, t) = (predicted.to_expmap()?, truth.to_expmap()?);
    horizons_ms
        .iter()
        .map(|&ms| {
            let i = seed_len - 1 + horizon_frame(ms, truth.frame_rate())?;
            if i >= truth.len() {
                return Err(Error::InvalidArgument(format!(
                    "horizon {ms} ms reaches frame {i} of a {}-frame clip",
                    truth.len()
                )));
            }
            let (a, b) = (euler_row(&p, i)?, euler_row(&t, i)?);
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        })
        .collect()
}

/// The seed followed by copies of its last frame, `total` frames in all.
pub fn zero_velocity_baseline(seed: ArrayView2<'_, f64>, total: usize) -> Result<Array2<f64>> {
    let n = seed.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "zero-velocity baseline needs a seed frame".into(),
        ));
    }
    if total < n {
        return Err(Error::InvalidArgument(format!(
            "{total} frames cannot hold a {n}-frame seed"
        )));
    }
    let last = seed.row(n - 1);
    Ok(Array2::from_shape_fn((total, seed.ncols()), |(t, c)| {
        if t < n {
            seed[[t, c]]
        } else {
            last[c]
        }
    }))
}
