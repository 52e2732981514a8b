//! Raw dataset layout, splits, resampling, clip windows and CSV export.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::Rng;

use super::{MotionClip, Skeleton};
use crate::error::{Error, Result};

pub const DESCRIPTIONS_FILE: &str = "descriptions.tsv";
pub const SPLITS: [&str; 2] = ["train", "test"];

/// Keeps every `stride`-th frame starting at frame 0, where
/// `stride = source_rate / target_rate` must be a positive integer.
pub fn resample(clip: &MotionClip, target_rate: f64) -> Result<MotionClip> {
    let stride = resample_stride(clip.frame_rate(), target_rate)?;
    let frames = clip.frames().slice(s![..;stride, ..]).to_owned();
    MotionClip::new(frames, target_rate, clip.units(), clip.skeleton().clone())
}

pub fn resample_stride(source_rate: f64, target_rate: f64) -> Result<usize> {
    let ratio = source_rate / target_rate;
    let stride = ratio.round();
    if !(target_rate > 0.0 && ratio.is_finite() && stride >= 1.0 && (ratio - stride).abs() <= 1e-9 * ratio) {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {source_rate} Hz to {target_rate} Hz with an integer stride"
        )));
    }
    Ok(stride as usize)
}

/// Offset uniform on `0..=n - length`.
pub fn sample_offset<R: Rng + ?Sized>(n: usize, length: usize, rng: &mut R) -> Result<usize> {
    if length == 0 || length > n {
        return Err(Error::InvalidArgument(format!(
            "cannot take a {length}-frame window from {n} frames"
        )));
    }
    Ok(rng.random_range(0..=n - length))
}

/// A contiguous `length`-frame window at a uniformly random offset.
pub fn sample_clip<R: Rng + ?Sized>(clip: &MotionClip, length: usize, rng: &mut R) -> Result<MotionClip> {
    let offset = sample_offset(clip.len(), length, rng)?;
    clip.with_frames(clip.frames().slice(s![offset..offset + length, ..]).to_owned())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetEntry {
    pub id: String,
    pub source: PathBuf,
    pub description: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<DatasetEntry>,
    pub test: Vec<DatasetEntry>,
}

impl DatasetSplit {
    /// Reads `<root>/descriptions.tsv` and lists `<root>/{train,test}/*.bvh`.
    ///
    /// Every clip needs a description, and a clip id may appear in only one
    /// split. Entries are sorted by id.
    pub fn load(root: &Path) -> Result<Self> {
        let desc_path = root.join(DESCRIPTIONS_FILE);
        let descriptions = read_descriptions(&desc_path)?;
        let mut split = DatasetSplit::default();
        for name in SPLITS {
            let dir = root.join(name);
            if !dir.is_dir() {
                continue;
            }
            let mut entries = Vec::new();
            for item in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                let path = item.map_err(|e| Error::io(&dir, e))?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("bvh") {
                    continue;
                }
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::Dataset(format!("bad file name {}", path.display())))?
                    .to_string();
                let description = descriptions
                    .get(&id)
                    .ok_or_else(|| Error::Dataset(format!("clip {id} has no entry in {DESCRIPTIONS_FILE}")))?
                    .clone();
                entries.push(DatasetEntry {
                    id,
                    source: path,
                    description,
                });
            }
            entries.sort_by(|a, b| a.id.cmp(&b.id));
            match name {
                "train" => split.train = entries,
                _ => split.test = entries,
            }
        }
        let train_ids: HashSet<&str> = split.train.iter().map(|e| e.id.as_str()).collect();
        if let Some(dup) = split.test.iter().find(|e| train_ids.contains(e.id.as_str())) {
            return Err(Error::Dataset(format!("clip {} is in both splits", dup.id)));
        }
        if split.train.is_empty() && split.test.is_empty() {
            return Err(Error::Dataset(format!("found 0 clips under {}", root.display())));
        }
        Ok(split)
    }
}

/// `clip_id<TAB>sentence` per line; blank lines and `#` comments are skipped.
pub fn read_descriptions(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_descriptions(&text)
}

pub fn parse_descriptions(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::Dataset(format!("{DESCRIPTIONS_FILE} line {}: expected id<TAB>sentence", i + 1)))?;
        if out.insert(id.trim().to_string(), sentence.trim().to_string()).is_some() {
            return Err(Error::Dataset(format!(
                "{DESCRIPTIONS_FILE} line {}: duplicate id {id}",
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn write_descriptions(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut text = String::new();
    for (id, sentence) in entries {
        text.push_str(id);
        text.push('\t');
        text.push_str(sentence);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Header row of channel names, then one row per frame.
pub fn write_frames_csv<W: Write>(out: W, skeleton: &Skeleton, frames: &Array2<f64>) -> Result<()> {
    let names = skeleton.channel_names();
    if names.len() != frames.ncols() {
        return Err(Error::Shape(format!(
            "frames have {} columns, skeleton has {} channels",
            frames.ncols(),
            names.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&names)?;
    for row in frames.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Inverse of [`write_frames_csv`]; returns the header and the matrix.
pub fn read_frames_csv<R: Read>(input: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        for cell in record.iter() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Dataset(format!("csv row {}: bad number {cell:?}", rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let frames = Array2::from_shape_vec((rows, header.len()), data).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((header, frames))
}
