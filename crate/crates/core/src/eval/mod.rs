//! Rankers, retrieval and inception metrics, and motion-completion error.

pub mod metrics;
pub mod ranker;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use metrics::{
    completion_error, horizon_frame, inception_from_posteriors, inception_score, recall_at_k, softmax_rows, top_k_pool,
    zero_velocity_baseline, InceptionStats,
};
pub use ranker::{train_ranker, Ranker, RankerConfig, RankerData, RankerMode};

pub const DEFAULT_HORIZONS_MS: [f64; 4] = [80.0, 160.0, 320.0, 400.0];
pub const RECALL_KS: [usize; 4] = [1, 3, 5, 10];

/// Inception score and retrieval recall of one clip set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub clips: usize,
    pub inception: f64,
    /// Description to its share of the inception score.
    pub inception_per_action: BTreeMap<String, f64>,
    /// `"r@1"`, `"r@3"`, ... in percent; only `k <= K` are present.
    pub recall: BTreeMap<String, f64>,
}

impl SampleMetrics {
    /// `scores` is `clips x K` against `pool`; `truth` indexes into `pool`.
    pub fn from_scores(scores: &crate::net::Matrix, truth: &[usize], pool: &[String]) -> crate::Result<Self> {
        let stats = inception_score(scores)?;
        let mut recall = BTreeMap::new();
        for k in RECALL_KS.into_iter().filter(|&k| k <= pool.len()) {
            recall.insert(format!("r@{k}"), recall_at_k(scores, truth, k)?);
        }
        Ok(Self {
            clips: scores.nrows(),
            inception: stats.score,
            inception_per_action: pool.iter().cloned().zip(stats.per_action).collect(),
            recall,
        })
    }
}

/// Mean Euler-angle error at one horizon for a model and the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonError {
    pub ms: f64,
    pub frame: usize,
    pub model: f64,
    pub zero_velocity: f64,
}

/// Everything `evaluate` reports, written as pretty JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pool: Vec<String>,
    pub real: Option<SampleMetrics>,
    pub generated: Option<SampleMetrics>,
    pub completion: Vec<HorizonError>,
}
