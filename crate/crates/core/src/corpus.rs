//! Preprocessing of a raw BVH dataset into exponential-map clips at the
//! training rate, and the on-disk layout of the result.
//!
//! ```text
//! <dir>/skeleton.json   joint tree
//! <dir>/stats.json      per-channel mean and std over the train split
//! <dir>/vocab.txt       index<TAB>word
//! <dir>/meta.json       frame rate
//! <dir>/{train,test}.tsv  id<TAB>frames<TAB>sentence
//! <dir>/clips/<split>/<id>.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::RankerData;
use crate::mocap::dataset::{read_frames_csv, write_frames_csv, SPLITS};
use crate::mocap::{
    compute_stats, parse_bvh, resample, AngleUnits, DatasetSplit, MotionClip, NormalizationStats, Skeleton,
};
use crate::net::Matrix;
use crate::text::{tokenize, ActionDescription, Vocabulary};
use crate::training::TrainingData;

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedClip {
    pub id: String,
    pub description: ActionDescription,
    /// Exponential-map frames at the dataset rate.
    pub clip: MotionClip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedDataset {
    pub skeleton: Arc<Skeleton>,
    pub frame_rate: f64,
    pub stats: NormalizationStats,
    pub vocab: Vocabulary,
    pub train: Vec<ProcessedClip>,
    pub test: Vec<ProcessedClip>,
}

/// A file that could not be used, and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    frame_rate: f64,
}

fn load_one(source: &Path, frame_rate: f64, skeleton: &mut Option<Arc<Skeleton>>) -> Result<MotionClip> {
    let text = fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
    let (skel, clip) = parse_bvh(&text)?;
    match skeleton {
        Some(s) if **s != *skel => {
            return Err(Error::Dataset("skeleton differs from the first clip's".into()));
        }
        Some(_) => {}
        None => *skeleton = Some(skel),
    }
    let shared = skeleton.clone().expect("set above");
    let (rate, units) = (clip.frame_rate(), clip.units());
    let clip = MotionClip::new(clip.into_frames(), rate, units, shared)?;
    resample(&clip.to_expmap()?, frame_rate)
}

/// Reads `<root>/{train,test}/*.bvh` with `descriptions.tsv`, converts to
/// exponential maps and resamples to `frame_rate`.
///
/// Unreadable files are collected in the second return value unless
/// `strict`, in which case the first failure is returned. Statistics and
/// vocabulary come from the train split only.
pub fn preprocess(root: &Path, frame_rate: f64, strict: bool) -> Result<(ProcessedDataset, Vec<Skipped>)> {
    let split = DatasetSplit::load(root)?;
    let mut skeleton = None;
    let mut skipped = Vec::new();
    let mut parts: [Vec<(String, String, MotionClip)>; 2] = [Vec::new(), Vec::new()];
    for (entries, out) in [&split.train, &split.test].into_iter().zip(parts.iter_mut()) {
        for e in entries {
            let loaded = tokenize(&e.description).and_then(|_| load_one(&e.source, frame_rate, &mut skeleton));
            match loaded {
                Ok(clip) => out.push((e.id.clone(), e.description.clone(), clip)),
                Err(err) if strict => {
                    return Err(Error::Dataset(format!("{}: {err}", e.source.display())));
                }
                Err(err) => skipped.push(Skipped {
                    path: e.source.clone(),
                    reason: err.to_string(),
                }),
            }
        }
    }
    let [train, test] = parts;
    if train.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable training clips under {}",
            root.display()
        )));
    }
    let stats = compute_stats(&train.iter().map(|t| t.2.clone()).collect::<Vec<_>>())?;
    let vocab = Vocabulary::build(train.iter().map(|t| t.1.as_str()))?;
    let wrap = |v: Vec<(String, String, MotionClip)>| -> Result<Vec<ProcessedClip>> {
        v.into_iter()
            .map(|(id, d, clip)| {
                Ok(ProcessedClip {
                    id,
                    description: ActionDescription::new(&d, &vocab)?,
                    clip,
                })
            })
            .collect()
    };
    let dataset = ProcessedDataset {
        skeleton: skeleton.expect("at least one clip loaded"),
        frame_rate,
        stats,
        train: wrap(train)?,
        test: wrap(test)?,
        vocab,
    };
    Ok((dataset, skipped))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl ProcessedDataset {
    pub fn split(&self, name: &str) -> &[ProcessedClip] {
        if name == "test" {
            &self.test
        } else {
            &self.train
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("skeleton.json"), &*self.skeleton)?;
        write_json(&dir.join("stats.json"), &self.stats)?;
        write_json(
            &dir.join("meta.json"),
            &Meta {
                frame_rate: self.frame_rate,
            },
        )?;
        self.vocab.save(&dir.join("vocab.txt"))?;
        for name in SPLITS {
            let clip_dir = dir.join("clips").join(name);
            fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
            let mut manifest = String::new();
            for c in self.split(name) {
                manifest.push_str(&format!("{}\t{}\t{}\n", c.id, c.clip.len(), c.description.raw));
                let path = clip_dir.join(format!("{}.csv", c.id));
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_frames_csv(file, &self.skeleton, &c.clip.frames().to_owned())?;
            }
            let path = dir.join(format!("{name}.tsv"));
            fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let skeleton: Arc<Skeleton> = Arc::new(read_json(&dir.join("skeleton.json"))?);
        let stats: NormalizationStats = read_json(&dir.join("stats.json"))?;
        let meta: Meta = read_json(&dir.join("meta.json"))?;
        let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
        let expected = skeleton.channel_names();
        let mut splits = [Vec::new(), Vec::new()];
        for (name, out) in SPLITS.into_iter().zip(splits.iter_mut()) {
            let path = dir.join(format!("{name}.tsv"));
            let manifest = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in manifest.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
                let mut f = line.splitn(3, '\t');
                let (Some(id), Some(_), Some(sentence)) = (f.next(), f.next(), f.next()) else {
                    return Err(Error::Dataset(format!("{name}.tsv line {}: expected 3 fields", i + 1)));
                };
                let csv_path = dir.join("clips").join(name).join(format!("{id}.csv"));
                let file = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
                let (header, frames) = read_frames_csv(file)?;
                if header != expected {
                    return Err(Error::Dataset(format!(
                        "{}: header does not match the skeleton",
                        csv_path.display()
                    )));
                }
                out.push(ProcessedClip {
                    id: id.to_string(),
                    description: ActionDescription::new(sentence, &vocab)?,
                    clip: MotionClip::new(frames, meta.frame_rate, AngleUnits::ExpMap, skeleton.clone())?,
                });
            }
        }
        let [train, test] = splits;
        Ok(Self {
            skeleton,
            frame_rate: meta.frame_rate,
            stats,
            vocab,
            train,
            test,
        })
    }

    /// Normalized frames of a split, one matrix per clip.
    pub fn normalized(&self, split: &str) -> Result<Vec<Matrix>> {
        self.split(split)
            .iter()
            .map(|c| self.stats.normalize(c.clip.frames()))
            .collect()
    }

    /// Normalized clips of at least `frames` frames with their tokens.
    pub fn training_data(&self, split: &str, frames: usize) -> Result<TrainingData> {
        let mut data = TrainingData::default();
        for c in self.split(split).iter().filter(|c| c.clip.len() >= frames) {
            data.clips.push(self.stats.normalize(c.clip.frames())?);
            data.tokens.push(c.description.tokens.clone());
        }
        if data.clips.is_empty() {
            return Err(Error::Dataset(format!("no {split} clip has {frames} frames")));
        }
        Ok(data)
    }

    /// Like [`Self::training_data`], with descriptions grouped into a pool.
    pub fn ranker_data(&self, split: &str, frames: usize) -> Result<RankerData> {
        let d = self.training_data(split, frames)?;
        Ok(RankerData::from_tokens(d.clips, &d.tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, write_corpus, SynthConfig};

    #[test]
    fn synthetic_round_trip() {
        let raw = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            clips: 8,
            seconds: 2.0,
            ..SynthConfig::default()
        };
        let clips = generate(&config).unwrap();
        write_corpus(raw.path(), &clips).unwrap();
        let (ds, skipped) = preprocess(raw.path(), 8.0, true).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(ds.train.len(), 6);
        assert_eq!(ds.test.len(), 2);
        assert_eq!(ds.train[0].clip.len(), 16);
        // BVH keeps 6 decimals of degrees.
        let src = clips[0].clip.frames();
        for (a, b) in ds.train[0].clip.frames().iter().zip(src.slice(ndarray::s![..;4, ..])) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let out = tempfile::tempdir().unwrap();
        ds.save(out.path()).unwrap();
        assert_eq!(ProcessedDataset::load(out.path()).unwrap(), ds);
    }

    #[test]
    fn broken_files_are_skipped_unless_strict() {
        let raw = tempfile::tempdir().unwrap();
        let clips = generate(&SynthConfig {
            clips: 4,
            seconds: 1.0,
            ..SynthConfig::default()
        })
        .unwrap();
        write_corpus(raw.path(), &clips).unwrap();
        fs::write(raw.path().join("train/clip_0001.bvh"), "HIERARCHY\nROOT").unwrap();
        let (ds, skipped) = preprocess(raw.path(), 8.0, false).unwrap();
        assert_eq!(skipped.len(), 1);
        assert_eq!(ds.train.len(), 2);
        assert!(preprocess(raw.path(), 8.0, true).is_err());
    }

    #[test]
    fn empty_directory_fails() {
        let raw = tempfile::tempdir().unwrap();
        fs::write(raw.path().join("descriptions.tsv"), "").unwrap();
        assert!(preprocess(raw.path(), 8.0, false).is_err());
    }
}
