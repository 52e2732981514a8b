use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use dvgan_core::corpus::{self, ProcessedClip, ProcessedDataset};
use dvgan_core::eval::ranker::{train_ranker as fit_ranker, RankerLog};
use dvgan_core::eval::{
    completion_error, horizon_frame, top_k_pool, zero_velocity_baseline, EvaluationReport, HorizonError, Ranker,
    RankerConfig, SampleMetrics, DEFAULT_HORIZONS_MS,
};
use dvgan_core::generator::SeedFrames;
use dvgan_core::mocap::dataset::write_frames_csv;
use dvgan_core::mocap::{write_bvh, AngleUnits, MotionClip, NormalizationStats, Skeleton};
use dvgan_core::net::{Checkpoint, Matrix};
use dvgan_core::synth::{self, SynthConfig};
use dvgan_core::text::{ActionDescription, Vocabulary};
use dvgan_core::training::{GanModel, Trainer, TrainingConfig};

use crate::{
    CompleteArgs, EvaluateArgs, ExportArgs, GenerateArgs, PreprocessArgs, SynthArgs, TrainGanArgs, TrainRankerArgs,
};

const GAN_CHECKPOINT: &str = "gan.ckpt";
const RANKER_CHECKPOINT: &str = "ranker.ckpt";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Settings from an optional TOML file, with command-line values layered
/// on top and defaults filling the rest.
struct Layered(toml::Table);

impl Layered {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self(toml::Table::new()));
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self(
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        ))
    }

    fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        if let Some(v) = value {
            self.0.insert(key.to_string(), toml::Value::try_from(v)?);
        }
        Ok(())
    }

    fn finish<T: DeserializeOwned>(self) -> Result<T> {
        self.0.try_into().context("invalid configuration")
    }
}

/// Writes the effective configuration next to a command's outputs.
fn echo_config<T: Serialize>(dir: &Path, name: &str, config: &T) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, toml::to_string(config)?).with_context(|| format!("writing {}", path.display()))
}

fn write_clip(dir: &Path, stem: &str, clip: &MotionClip, format: &str) -> Result<()> {
    if format != "csv" {
        let path = dir.join(format!("{stem}.bvh"));
        fs::write(&path, write_bvh(clip.skeleton(), clip)?).with_context(|| format!("writing {}", path.display()))?;
    }
    if format != "bvh" {
        let path = dir.join(format!("{stem}.csv"));
        let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write_frames_csv(file, clip.skeleton(), &clip.to_expmap()?.into_frames())?;
    }
    Ok(())
}

fn slug(text: &str) -> String {
    let s: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "sample".into()
    } else {
        s
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut layered = Layered::load(a.config.as_deref())?;
    layered.set("clips", a.clips)?;
    layered.set("seconds", a.seconds)?;
    layered.set("capture_rate", a.capture_rate)?;
    layered.set("noise", a.noise)?;
    layered.set("seed", a.seed)?;
    let config: SynthConfig = layered.finish()?;
    let clips = synth::generate(&config)?;
    create_dir(&a.out)?;
    synth::write_corpus(&a.out, &clips)?;
    echo_config(&a.out, "synth.toml", &config)?;
    eprintln!("wrote {} clips to {}", clips.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct PreprocessEcho<'a> {
    input: &'a Path,
    frame_rate: f64,
    strict: bool,
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    let (dataset, skipped) = corpus::preprocess(&a.input, a.frame_rate, a.strict)?;
    for s in &skipped {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.reason.replace('\n', " "));
    }
    dataset.save(&a.out)?;
    echo_config(
        &a.out,
        "preprocess.toml",
        &PreprocessEcho {
            input: &a.input,
            frame_rate: a.frame_rate,
            strict: a.strict,
        },
    )?;
    eprintln!(
        "{} train and {} test clips at {} Hz ({} skipped)",
        dataset.train.len(),
        dataset.test.len(),
        dataset.frame_rate,
        skipped.len()
    );
    Ok(())
}

/// Dataset facts a checkpoint needs to be used without the dataset.
fn dataset_meta(ds: &ProcessedDataset) -> serde_json::Value {
    serde_json::json!({
        "vocab": ds.vocab.to_text(),
        "skeleton": &*ds.skeleton,
        "stats": ds.stats,
        "frame_rate": ds.frame_rate,
    })
}

struct DatasetMeta {
    vocab: Vocabulary,
    skeleton: Arc<Skeleton>,
    stats: NormalizationStats,
    frame_rate: f64,
}

fn read_dataset_meta(ck: &Checkpoint) -> Result<DatasetMeta> {
    let m = &ck.meta["dataset"];
    ensure!(m.is_object(), "checkpoint carries no dataset metadata");
    Ok(DatasetMeta {
        vocab: Vocabulary::from_text(m["vocab"].as_str().context("checkpoint vocabulary")?)?,
        skeleton: Arc::new(serde_json::from_value(m["skeleton"].clone())?),
        stats: serde_json::from_value(m["stats"].clone())?,
        frame_rate: m["frame_rate"].as_f64().context("checkpoint frame rate")?,
    })
}

fn load_dataset(dir: &Path) -> Result<ProcessedDataset> {
    ProcessedDataset::load(dir).with_context(|| format!("loading processed dataset {}", dir.display()))
}

fn save_checkpoint(ck: &mut Checkpoint, ds: &ProcessedDataset, path: &Path) -> Result<()> {
    ck.meta["dataset"] = dataset_meta(ds);
    ck.save(path)?;
    Ok(())
}

pub fn train_gan(a: TrainGanArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data)?;
    let mut layered = Layered::load(a.config.as_deref())?;
    layered.set("iterations", a.iterations)?;
    layered.set("d_steps", a.d_steps)?;
    layered.set("batch_size", a.batch_size)?;
    layered.set("frames", a.frames)?;
    layered.set("hidden", a.hidden)?;
    layered.set("lr", a.lr)?;
    layered.set("lambda", a.lambda)?;
    layered.set("generator", a.generator)?;
    layered.set("discriminator", a.discriminator)?;
    layered.set("final_cut", a.final_cut)?;
    layered.set("augment", a.augment)?;
    layered.set("seed", a.seed)?;
    layered.set("checkpoint_every", a.checkpoint_every)?;
    let mut config: TrainingConfig = layered.finish()?;
    config.frame_rate = ds.frame_rate;

    let mut trainer = match &a.resume {
        Some(path) => {
            let mut t = Trainer::from_checkpoint(&Checkpoint::load(path)?)?;
            // Only the schedule can change on resume; the model is fixed.
            t.model.config.iterations = config.iterations;
            t.model.config.checkpoint_every = config.checkpoint_every;
            config = t.model.config.clone();
            t
        }
        None => Trainer::new(&config, ds.skeleton.num_channels(), ds.vocab.len())?,
    };
    let data = ds.training_data("train", config.frames)?;

    create_dir(&a.out)?;
    let ckpt_dir = a.out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    echo_config(&a.out, "config.toml", &config)?;
    let log_path = a.out.join("log.jsonl");
    let log_file = fs::OpenOptions::new()
        .create(true)
        .append(a.resume.is_some())
        .write(true)
        .truncate(a.resume.is_none())
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let mut log = BufWriter::new(log_file);

    let every = config.checkpoint_every;
    trainer.run(&data, |t, r| {
        writeln!(log, "{}", serde_json::to_string(r)?).map_err(|e| dvgan_core::Error::Io {
            path: log_path.clone(),
            source: e,
        })?;
        if every > 0 && r.iteration % every == 0 {
            log.flush().map_err(|e| dvgan_core::Error::Io {
                path: log_path.clone(),
                source: e,
            })?;
            let mut ck = t.to_checkpoint();
            ck.meta["dataset"] = dataset_meta(&ds);
            ck.save(&ckpt_dir.join(format!("iter_{:06}.ckpt", r.iteration)))?;
            eprintln!(
                "iteration {}: d_loss {:.4} g_loss {:.4} penalty {:.4}",
                r.iteration, r.d_loss, r.g_loss, r.penalty
            );
        }
        Ok(())
    })?;
    log.flush()?;
    save_checkpoint(&mut trainer.to_checkpoint(), &ds, &a.out.join(GAN_CHECKPOINT))?;
    eprintln!("saved {}", a.out.join(GAN_CHECKPOINT).display());
    Ok(())
}

pub fn train_ranker(a: TrainRankerArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data)?;
    let mut layered = Layered::load(a.config.as_deref())?;
    layered.set("mode", a.mode)?;
    layered.set("frames", a.frames)?;
    layered.set("hidden", a.hidden)?;
    layered.set("candidates", a.candidates)?;
    layered.set("epochs", a.epochs)?;
    layered.set("lr", a.lr)?;
    layered.set("batch_size", a.batch_size)?;
    layered.set("seed", a.seed)?;
    let config: RankerConfig = layered.finish()?;
    let data = ds.ranker_data("train", config.frames)?;
    create_dir(&a.out)?;
    echo_config(&a.out, "config.toml", &config)?;
    let (ranker, log): (Ranker, RankerLog) = fit_ranker(&config, &data, ds.vocab.len(), |epoch, loss| {
        if (epoch + 1) % 10 == 0 {
            eprintln!("epoch {}: loss {loss:.4}", epoch + 1);
        }
    })?;
    let mut lines = String::new();
    for (i, l) in log.epoch_loss.iter().enumerate() {
        lines.push_str(&serde_json::to_string(&serde_json::json!({"epoch": i + 1, "loss": l}))?);
        lines.push('\n');
    }
    fs::write(a.out.join("log.jsonl"), lines)?;
    save_checkpoint(&mut ranker.to_checkpoint(), &ds, &a.out.join(RANKER_CHECKPOINT))?;
    eprintln!("saved {}", a.out.join(RANKER_CHECKPOINT).display());
    Ok(())
}

struct LoadedGan {
    model: GanModel,
    meta: DatasetMeta,
}

fn load_gan(path: &Path) -> Result<LoadedGan> {
    let ck = Checkpoint::load(path)?;
    let model = Trainer::from_checkpoint(&ck)?.model;
    Ok(LoadedGan {
        model,
        meta: read_dataset_meta(&ck)?,
    })
}

fn load_ranker(path: &Path) -> Result<(Ranker, DatasetMeta)> {
    let ck = Checkpoint::load(path)?;
    Ok((Ranker::from_checkpoint(&ck)?, read_dataset_meta(&ck)?))
}

/// Splits `(B*n) x M` normalized frames into denormalized exponential-map clips.
fn to_clips(frames: &Matrix, n: usize, meta: &DatasetMeta) -> Result<Vec<MotionClip>> {
    let raw = meta.stats.denormalize(frames.view())?;
    raw.axis_chunks_iter(ndarray::Axis(0), n)
        .map(|c| {
            Ok(MotionClip::new(
                c.to_owned(),
                meta.frame_rate,
                AngleUnits::ExpMap,
                meta.skeleton.clone(),
            )?)
        })
        .collect()
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    ensure!(a.count > 0, "--count must be positive");
    let gan = load_gan(&a.checkpoint)?;
    let model = match a.frames {
        Some(n) => gan.model.with_frames(n)?,
        None => gan.model.clone(),
    };
    let desc = ActionDescription::new(&a.text, &gan.meta.vocab)?;
    let tokens: Vec<&[usize]> = vec![&desc.tokens; a.count];
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let frames = model.generate(&tokens, &mut rng)?;
    let n = model.generator.config().frames;
    create_dir(&a.out)?;
    let stem = slug(&a.text);
    for (i, clip) in to_clips(&frames, n, &gan.meta)?.iter().enumerate() {
        write_clip(&a.out, &format!("{stem}_{i:03}"), clip, &a.format)?;
    }
    eprintln!("wrote {} clips of {n} frames to {}", a.count, a.out.display());
    Ok(())
}

/// Seeds, completions and ground truth of up to `count` clips.
struct Completion {
    ids: Vec<String>,
    predicted: Vec<MotionClip>,
    truth: Vec<MotionClip>,
}

fn run_completion(
    gan: &LoadedGan,
    clips: &[ProcessedClip],
    seed_frames: usize,
    total: usize,
    count: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Completion> {
    ensure!(
        seed_frames >= 1 && seed_frames < total,
        "need 1 <= seed frames ({seed_frames}) < output frames ({total})"
    );
    let model = gan.model.with_frames(total)?;
    let usable: Vec<&ProcessedClip> = clips
        .iter()
        .filter(|c| c.clip.len() >= total)
        .take(count.unwrap_or(usize::MAX))
        .collect();
    ensure!(
        !usable.is_empty(),
        "no clip has the {total} frames needed for completion"
    );
    let mut out = Completion {
        ids: Vec::new(),
        predicted: Vec::new(),
        truth: Vec::new(),
    };
    for c in usable {
        let truth = c
            .clip
            .with_frames(c.clip.frames().slice(ndarray::s![..total, ..]).to_owned())?;
        let norm = gan.meta.stats.normalize(truth.frames())?;
        let seed = SeedFrames {
            frames: norm.slice(ndarray::s![..seed_frames, ..]).to_owned(),
            len: seed_frames,
        };
        let predicted = model.complete(&[&c.description.tokens], &seed, total, rng)?;
        out.predicted.extend(to_clips(&predicted, total, &gan.meta)?);
        out.truth.push(truth);
        out.ids.push(c.id.clone());
    }
    Ok(out)
}

/// Mean model and zero-velocity errors per horizon.
fn completion_table(c: &Completion, seed_frames: usize, horizons: &[f64]) -> Result<Vec<HorizonError>> {
    let mut model = vec![0.0; horizons.len()];
    let mut zero = vec![0.0; horizons.len()];
    for (p, t) in c.predicted.iter().zip(&c.truth) {
        let baseline = t.with_frames(zero_velocity_baseline(
            t.frames().slice(ndarray::s![..seed_frames, ..]),
            t.len(),
        )?)?;
        for (acc, e) in model.iter_mut().zip(completion_error(p, t, seed_frames, horizons)?) {
            *acc += e / c.truth.len() as f64;
        }
        for (acc, e) in zero
            .iter_mut()
            .zip(completion_error(&baseline, t, seed_frames, horizons)?)
        {
            *acc += e / c.truth.len() as f64;
        }
    }
    let rate = c.truth[0].frame_rate();
    horizons
        .iter()
        .enumerate()
        .map(|(i, &ms)| {
            Ok(HorizonError {
                ms,
                frame: horizon_frame(ms, rate)?,
                model: model[i],
                zero_velocity: zero[i],
            })
        })
        .collect()
}

pub fn complete(a: CompleteArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data)?;
    let gan = load_gan(&a.checkpoint)?;
    let total = a.frames.unwrap_or(gan.model.config.frames);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let c = run_completion(&gan, ds.split(&a.split), a.seed_frames, total, a.count, &mut rng)?;
    create_dir(&a.out)?;
    for ((id, p), t) in c.ids.iter().zip(&c.predicted).zip(&c.truth) {
        write_clip(&a.out, &format!("{id}_completed"), p, "both")?;
        write_clip(&a.out, &format!("{id}_truth"), t, "bvh")?;
    }
    if let Some(h) = &a.horizons_ms {
        let table = completion_table(&c, a.seed_frames, h)?;
        fs::write(a.out.join("errors.json"), serde_json::to_string_pretty(&table)?)?;
        for row in &table {
            eprintln!(
                "{} ms: model {:.4} zero-velocity {:.4}",
                row.ms, row.model, row.zero_velocity
            );
        }
    }
    eprintln!("completed {} clips into {}", c.ids.len(), a.out.display());
    Ok(())
}

/// One random `n`-frame window of each clip, normalized, stacked.
fn sample_windows(
    clips: &[&ProcessedClip],
    n: usize,
    stats: &NormalizationStats,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    let m = stats.width();
    let mut out = Matrix::zeros((clips.len() * n, m));
    for (i, c) in clips.iter().enumerate() {
        let o = rng.random_range(0..=c.clip.len() - n);
        let w = stats.normalize(c.clip.frames().slice(ndarray::s![o..o + n, ..]))?;
        out.slice_mut(ndarray::s![i * n..(i + 1) * n, ..]).assign(&w);
    }
    Ok(out)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data)?;
    let (ranker, rmeta) = load_ranker(&a.ranker)?;
    ensure!(
        rmeta.vocab == ds.vocab,
        "the ranker was trained with a different vocabulary"
    );
    let n = ranker.config.frames;
    let split = ds.split(&a.split);

    // Candidate pool: the split's descriptions, most training frames first.
    let mut train_frames: Vec<(&str, usize)> = split.iter().map(|c| (c.description.raw.as_str(), 0)).collect();
    train_frames.extend(ds.train.iter().map(|c| (c.description.raw.as_str(), c.clip.len())));
    let distinct = {
        let mut d: Vec<&str> = split.iter().map(|c| c.description.raw.as_str()).collect();
        d.sort_unstable();
        d.dedup();
        d.len()
    };
    ensure!(
        distinct >= 2,
        "the {} split has fewer than 2 distinct descriptions",
        a.split
    );
    let in_split: std::collections::BTreeSet<&str> = split.iter().map(|c| c.description.raw.as_str()).collect();
    let pool = top_k_pool(
        train_frames.into_iter().filter(|(d, _)| in_split.contains(d)),
        a.k.min(distinct),
    )?;
    let pool_desc: Vec<ActionDescription> = pool
        .iter()
        .map(|p| ActionDescription::new(p, &ds.vocab))
        .collect::<dvgan_core::Result<_>>()?;
    let pool_tokens: Vec<&[usize]> = pool_desc.iter().map(|d| d.tokens.as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut report = EvaluationReport {
        pool: pool.clone(),
        ..EvaluationReport::default()
    };

    let real: Vec<&ProcessedClip> = split
        .iter()
        .filter(|c| c.clip.len() >= n && pool.contains(&c.description.raw))
        .collect();
    if !real.is_empty() {
        let x = sample_windows(&real, n, &ds.stats, &mut rng)?;
        let truth: Vec<usize> = real
            .iter()
            .map(|c| pool.iter().position(|p| *p == c.description.raw).expect("filtered"))
            .collect();
        let scores = ranker.score(&x, &pool_tokens)?;
        report.real = Some(SampleMetrics::from_scores(&scores, &truth, &pool)?);
    }

    if let Some(path) = &a.gan {
        let gan = load_gan(path)?;
        ensure!(
            gan.meta.vocab == ds.vocab,
            "the generator was trained with a different vocabulary"
        );
        ensure!(
            gan.model.config.frames == n,
            "generator N = {} differs from ranker N = {n}",
            gan.model.config.frames
        );
        ensure!(a.samples > 0, "--samples must be positive");
        let tokens: Vec<&[usize]> = pool_tokens
            .iter()
            .flat_map(|t| std::iter::repeat_n(*t, a.samples))
            .collect();
        let truth: Vec<usize> = (0..pool.len())
            .flat_map(|i| std::iter::repeat_n(i, a.samples))
            .collect();
        let frames = gan.model.generate(&tokens, &mut rng)?;
        let scores = ranker.score(&frames, &pool_tokens)?;
        report.generated = Some(SampleMetrics::from_scores(&scores, &truth, &pool)?);

        if matches!(gan.model.generator, dvgan_core::generator::Generator::Rnn(_)) {
            let horizons = a.horizons_ms.clone().unwrap_or_else(|| DEFAULT_HORIZONS_MS.to_vec());
            let longest = horizons
                .iter()
                .map(|&h| horizon_frame(h, ds.frame_rate))
                .collect::<dvgan_core::Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(0);
            let total = a.frames.unwrap_or(a.seed_frames + longest);
            let c = run_completion(&gan, split, a.seed_frames, total, None, &mut rng)?;
            report.completion = completion_table(&c, a.seed_frames, &horizons)?;
        }
    }

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&a.out, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    for (name, m) in [("real", &report.real), ("generated", &report.generated)] {
        if let Some(m) = m {
            eprintln!(
                "{name}: {} clips, inception {:.4}, r@1 {:.1}%",
                m.clips,
                m.inception,
                m.recall.get("r@1").copied().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

pub fn export(a: ExportArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data)?;
    let clips: Vec<&ProcessedClip> = ds
        .split(&a.split)
        .iter()
        .filter(|c| a.id.as_ref().is_none_or(|id| *id == c.id))
        .collect();
    if clips.is_empty() {
        bail!("no clip to export from the {} split", a.split);
    }
    create_dir(&a.out)?;
    for c in &clips {
        write_clip(&a.out, &c.id, &c.clip, &a.format)?;
    }
    eprintln!("exported {} clips to {}", clips.len(), a.out.display());
    Ok(())
}
