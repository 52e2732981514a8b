//! A small synthetic mocap corpus with three actions that differ in which
//! joint moves and how fast, for checking the whole pipeline end to end.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mocap::dataset::{write_descriptions, DESCRIPTIONS_FILE};
use crate::mocap::{write_bvh, AngleUnits, Channel, Joint, MotionClip, Skeleton};

/// Sinusoid on one exponential-map channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub channel: usize,
    pub amplitude: f64,
    /// Added to the clip's random phase.
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthAction {
    pub sentence: String,
    pub frequency_hz: f64,
    pub waves: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub clips: usize,
    pub seconds: f64,
    pub capture_rate: f64,
    /// Standard deviation of per-frame Gaussian noise, radians.
    pub noise: f64,
    /// Relative amplitude jitter per clip.
    pub jitter: f64,
    /// Every `test_every`-th clip goes to the test split.
    pub test_every: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 200,
            seconds: 8.0,
            capture_rate: 32.0,
            noise: 0.02,
            jitter: 0.1,
            test_every: 4,
            seed: 0,
        }
    }
}

/// Hips (legs) as root and a right arm, three rotation channels each.
pub fn skeleton() -> Skeleton {
    let rot = vec![Channel::Zrotation, Channel::Yrotation, Channel::Xrotation];
    Skeleton::new(vec![
        Joint {
            name: "Hips".into(),
            parent: None,
            offset: [0.0; 3],
            channels: rot.clone(),
            end_site: None,
        },
        Joint {
            name: "RightArm".into(),
            parent: Some(0),
            offset: [-15.0, 40.0, 0.0],
            channels: rot,
            end_site: Some([-25.0, 0.0, 0.0]),
        },
    ])
    .expect("static skeleton is valid")
}

/// Column layout of [`skeleton`]: 0..3 are the hips (z, y, x), 3..6 the arm.
pub fn actions() -> Vec<SynthAction> {
    let w = |channel, amplitude, phase| Wave {
        channel,
        amplitude,
        phase,
    };
    vec![
        SynthAction {
            sentence: "walk forward".into(),
            frequency_hz: 1.0,
            waves: vec![w(2, 0.4, 0.0), w(1, 0.15, TAU / 4.0)],
        },
        SynthAction {
            sentence: "run fast".into(),
            frequency_hz: 2.0,
            waves: vec![w(2, 0.7, 0.0), w(1, 0.3, TAU / 4.0)],
        },
        SynthAction {
            sentence: "wave".into(),
            frequency_hz: 1.5,
            waves: vec![w(3, 0.6, 0.0), w(5, 0.3, TAU / 4.0)],
        },
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub split: &'static str,
    pub description: String,
    pub clip: MotionClip,
}

/// Clip `i` performs action `i mod 3`; the same seed gives the same corpus.
pub fn generate(config: &SynthConfig) -> Result<Vec<SynthClip>> {
    if config.clips == 0 || config.test_every < 2 || !(config.seconds > 0.0 && config.capture_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs clips > 0, test_every >= 2 and positive duration and rate".into(),
        ));
    }
    let skel = Arc::new(skeleton());
    let acts = actions();
    let frames = (config.seconds * config.capture_rate).round() as usize;
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.clips);
    for i in 0..config.clips {
        let act = &acts[i % acts.len()];
        let phase = rng.random_range(0.0..TAU);
        let gains: Vec<f64> = act
            .waves
            .iter()
            .map(|_| 1.0 + rng.random_range(-config.jitter..=config.jitter))
            .collect();
        let mut m = Array2::zeros((frames, skel.num_channels()));
        for ((t, c), v) in m.indexed_iter_mut() {
            let time = t as f64 / config.capture_rate;
            *v = noise.sample(&mut rng);
            for (wave, g) in act.waves.iter().zip(&gains) {
                if wave.channel == c {
                    *v += g * wave.amplitude * (TAU * act.frequency_hz * time + phase + wave.phase).sin();
                }
            }
        }
        out.push(SynthClip {
            id: format!("clip_{i:04}"),
            split: if i % config.test_every == config.test_every - 1 {
                "test"
            } else {
                "train"
            },
            description: act.sentence.clone(),
            clip: MotionClip::new(m, config.capture_rate, AngleUnits::ExpMap, skel.clone())?,
        });
    }
    Ok(out)
}

/// Writes the corpus in the raw dataset layout: `<root>/{train,test}/<id>.bvh`
/// and `<root>/descriptions.tsv`.
pub fn write_corpus(root: &Path, clips: &[SynthClip]) -> Result<()> {
    let mut descriptions = BTreeMap::new();
    for c in clips {
        let dir = root.join(c.split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.bvh", c.id));
        let text = write_bvh(c.clip.skeleton(), &c.clip)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        descriptions.insert(c.id.clone(), c.description.clone());
    }
    write_descriptions(&root.join(DESCRIPTIONS_FILE), &descriptions)
}
