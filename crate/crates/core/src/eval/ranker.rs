//! Dual-encoder rankers scoring (description, animation) pairs, trained by
//! retrieving the right description among `K` candidates.

use ndarray::{s, Array2};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::DownResidual;
use crate::error::{Error, Result};
use crate::mocap::dataset::sample_offset;
use crate::net::layers::run_lstm;
use crate::net::{Adam, AdamConfig, Checkpoint, Ctx, Linear, Lstm, Matrix, ParamStore, Tape, Var};
use crate::text::TextEncoder;

/// Floor on the animation-embedding norm before division.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankerMode {
    Cnn,
    Rnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub mode: RankerMode,
    pub frames: usize,
    pub hidden: usize,
    /// Candidates per training example, the true description included.
    pub candidates: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            mode: RankerMode::Rnn,
            frames: 64,
            hidden: 1024,
            candidates: 15,
            epochs: 100,
            lr: 1e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.candidates == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(
                "ranker hidden, batch_size, candidates and lr must be positive".into(),
            ));
        }
        match self.mode {
            RankerMode::Cnn if !self.frames.is_power_of_two() => Err(Error::InvalidArgument(
                "the convolutional ranker needs a power-of-two clip length".into(),
            )),
            RankerMode::Rnn if self.frames < 2 => Err(Error::InvalidArgument(
                "the recurrent ranker needs at least 2 frames".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub enum AnimationEncoder {
    /// Per-frame encoding, then halving residual blocks down to one frame.
    Cnn {
        encode: Linear,
        residuals: Vec<DownResidual>,
    },
    /// Pose path averaged over frames plus a recurrent path over frame
    /// differences, merged by a linear map.
    Rnn {
        pose: Linear,
        diff: Linear,
        lstm: Lstm,
        diff_out: Linear,
        combine: Linear,
    },
}

/// Clip (row-block) embeddings divided by `max(||x||, NORM_FLOOR)` row-wise.
pub fn normalize_rows(x: Var<'_>) -> Var<'_> {
    let k = x.shape().1;
    let inv = x.square().sum_cols().clamp_min(NORM_FLOOR * NORM_FLOOR).sqrt().recip();
    x * inv.repeat_cols(k)
}

/// Mean over examples of `-log softmax` of the true candidate, where the
/// softmax runs over each row's candidate columns only.
pub fn candidate_nll<'t>(scores: Var<'t>, candidates: &[Vec<usize>], truth: &[usize]) -> Result<Var<'t>> {
    let (b, p) = scores.shape();
    if candidates.len() != b || truth.len() != b {
        return Err(Error::Shape(format!(
            "{b} score rows with {} candidate lists and {} truths",
            candidates.len(),
            truth.len()
        )));
    }
    let values = scores.value();
    let mut mask = Array2::zeros((b, p));
    let mut onehot = Array2::zeros((b, p));
    let mut shift = Array2::zeros((b, p));
    let mut row_max = Array2::zeros((b, 1));
    for (i, (cands, &t)) in candidates.iter().zip(truth).enumerate() {
        if !cands.contains(&t) || cands.iter().any(|&c| c >= p) {
            return Err(Error::InvalidArgument(format!("bad candidate list for example {i}")));
        }
        let m = cands.iter().map(|&c| values[[i, c]]).fold(f64::NEG_INFINITY, f64::max);
        for &c in cands {
            mask[[i, c]] = 1.0;
        }
        onehot[[i, t]] = 1.0;
        shift.row_mut(i).fill(m);
        row_max[[i, 0]] = m;
    }
    let tape = scores.tape();
    let exp = (scores - tape.constant(shift)).exp() * tape.constant(mask);
    let lse = exp.sum_cols().ln() + tape.constant(row_max);
    let truth_score = (scores * tape.constant(onehot)).sum_cols();
    Ok((lse - truth_score).mean())
}

/// Normalized clips with an index into a pool of distinct descriptions.
#[derive(Clone, Debug, Default)]
pub struct RankerData {
    pub clips: Vec<Matrix>,
    pub labels: Vec<usize>,
    pub pool: Vec<Vec<usize>>,
}

impl RankerData {
    /// Groups identical token sequences into one pool entry, in first-seen order.
    pub fn from_tokens(clips: Vec<Matrix>, tokens: &[Vec<usize>]) -> Self {
        let mut pool: Vec<Vec<usize>> = Vec::new();
        let labels = tokens
            .iter()
            .map(|t| {
                pool.iter().position(|p| p == t).unwrap_or_else(|| {
                    pool.push(t.clone());
                    pool.len() - 1
                })
            })
            .collect();
        Self { clips, labels, pool }
    }

    pub fn pool_refs(&self) -> Vec<&[usize]> {
        self.pool.iter().map(Vec::as_slice).collect()
    }

    /// One uniformly placed `frames`-long window per listed clip.
    pub fn windows<R: Rng + ?Sized>(&self, picks: &[usize], frames: usize, rng: &mut R) -> Result<Matrix> {
        let dof = self.clips.first().map_or(0, |c| c.ncols());
        let mut out = Array2::zeros((picks.len() * frames, dof));
        for (b, &i) in picks.iter().enumerate() {
            let clip = &self.clips[i];
            let o = sample_offset(clip.nrows(), frames, rng)?;
            out.slice_mut(s![b * frames..(b + 1) * frames, ..])
                .assign(&clip.slice(s![o..o + frames, ..]));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct Ranker {
    pub config: RankerConfig,
    pub dof: usize,
    pub vocab_size: usize,
    pub store: ParamStore,
    pub text: TextEncoder,
    pub anim: AnimationEncoder,
}

impl Ranker {
    pub const LAYERS: usize = 2;

    pub fn new<R: Rng + ?Sized>(config: &RankerConfig, dof: usize, vocab_size: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let k = config.hidden;
        let mut store = ParamStore::new();
        let text = TextEncoder::new(&mut store, "rank.text", vocab_size, k, rng);
        let anim = match config.mode {
            RankerMode::Cnn => AnimationEncoder::Cnn {
                encode: Linear::new(&mut store, "rank.encode", dof, k, rng),
                residuals: (0..config.frames.trailing_zeros())
                    .map(|i| DownResidual::new(&mut store, &format!("rank.res{i}"), k, rng))
                    .collect(),
            },
            RankerMode::Rnn => AnimationEncoder::Rnn {
                pose: Linear::new(&mut store, "rank.pose", dof, k, rng),
                diff: Linear::new(&mut store, "rank.diff", dof, k, rng),
                lstm: Lstm::new(&mut store, "rank.lstm", k, k, Self::LAYERS, rng),
                diff_out: Linear::new(&mut store, "rank.diff_out", k, k, rng),
                combine: Linear::new(&mut store, "rank.combine", 2 * k, k, rng),
            },
        };
        Ok(Self {
            config: config.clone(),
            dof,
            vocab_size,
            store,
            text,
            anim,
        })
    }

    /// Unnormalized animation embeddings, `B x k`, for `(B*N) x M` clips.
    pub fn embed_animation<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>) -> Result<Var<'t>> {
        let n = self.config.frames;
        let (rows, cols) = x.shape();
        if cols != self.dof || rows == 0 || rows % n != 0 {
            return Err(Error::Shape(format!(
                "ranker input is {rows}x{cols}, expected blocks of {n} frames with {} channels",
                self.dof
            )));
        }
        match &self.anim {
            AnimationEncoder::Cnn { encode, residuals } => {
                let mut h = encode.forward(ctx, x)?;
                let mut block = n;
                for r in residuals {
                    h = r.forward(ctx, h, block)?;
                    block /= 2;
                }
                Ok(h)
            }
            AnimationEncoder::Rnn {
                pose,
                diff,
                lstm,
                diff_out,
                combine,
            } => {
                let b = rows / n;
                let h_a = pose.forward(ctx, x)?.mean_rows(n);
                let later: Vec<usize> = (0..b).flat_map(|i| (1..n).map(move |t| i * n + t)).collect();
                let v = diff.forward(ctx, (x - x.shift_rows(n, 1)).gather_rows(&later))?;
                let h_d = run_lstm(lstm, ctx, v, n - 1)?.0;
                let d = diff_out.forward(ctx, h_d)?.mean_rows(n - 1);
                combine.forward(ctx, ctx.tape().concat_cols(&[d, h_a]))
            }
        }
    }

    /// `B x P` matching scores of every clip against every description.
    pub fn scores_var<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>, descriptions: &[&[usize]]) -> Result<Var<'t>> {
        let h_txt = self.text.encode(ctx, descriptions)?;
        let anim = normalize_rows(self.embed_animation(ctx, x)?);
        Ok(anim.matmul(h_txt.t()))
    }

    /// Score matrix for `(B*N) x M` clips, evaluated in chunks.
    pub fn score(&self, clips: &Matrix, descriptions: &[&[usize]]) -> Result<Matrix> {
        const CHUNK: usize = 64;
        let n = self.config.frames;
        let total = clips.nrows() / n.max(1);
        let mut out = Array2::zeros((total, descriptions.len()));
        for start in (0..total).step_by(CHUNK) {
            let end = (start + CHUNK).min(total);
            let tape = Tape::new();
            let ctx = Ctx::new(&tape, &self.store);
            let x = tape.constant(clips.slice(s![start * n..end * n, ..]).to_owned());
            let sc = self.scores_var(&ctx, x, descriptions)?;
            out.slice_mut(s![start..end, ..]).assign(&*sc.value());
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "ranker",
            "config": self.config,
            "dof": self.dof,
            "vocab_size": self.vocab_size,
        }));
        ck.push_store("rank", &self.store);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta["kind"] != "ranker" {
            return Err(Error::Checkpoint("not a ranker checkpoint".into()));
        }
        let config: RankerConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let field = |k: &str| {
            ck.meta[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Checkpoint(format!("missing field {k}")))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Ranker::new(&config, field("dof")?, field("vocab_size")?, &mut rng)?;
        ck.load_store("rank", &mut r.store)?;
        Ok(r)
    }
}

/// The true label plus `k - 1` others drawn uniformly without replacement.
pub fn sample_candidates<R: Rng + ?Sized>(truth: usize, pool: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > pool || truth >= pool {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} candidates from {pool} descriptions"
        )));
    }
    let mut out = vec![truth];
    out.extend(
        index::sample(rng, pool - 1, k - 1)
            .into_iter()
            .map(|j| if j >= truth { j + 1 } else { j }),
    );
    Ok(out)
}

/// Mean candidate NLL of every epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankerLog {
    pub epoch_loss: Vec<f64>,
}

/// Trains a fresh ranker with Adam; each epoch visits every clip once in a
/// shuffled order, taking one random window per visit.
pub fn train_ranker(
    config: &RankerConfig,
    data: &RankerData,
    vocab_size: usize,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(Ranker, RankerLog)> {
    config.validate()?;
    let (b, n, k) = (config.batch_size, config.frames, config.candidates);
    if data.clips.is_empty() || data.clips.len() != data.labels.len() {
        return Err(Error::Dataset("ranker data is empty or unlabeled".into()));
    }
    if k > data.pool.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the {} distinct training descriptions",
            data.pool.len()
        )));
    }
    let dof = data.clips[0].ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ranker = Ranker::new(config, dof, vocab_size, &mut rng)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &ranker.store,
    );
    let mut log = RankerLog::default();
    let mut order: Vec<usize> = (0..data.clips.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for picks in order.chunks(b) {
            let x = data.windows(picks, n, &mut rng)?;
            let mut cands = Vec::with_capacity(picks.len());
            for &i in picks {
                cands.push(sample_candidates(data.labels[i], data.pool.len(), k, &mut rng)?);
            }
            let mut used: Vec<usize> = cands.iter().flatten().copied().collect();
            used.sort_unstable();
            used.dedup();
            let column = |d: usize| used.binary_search(&d).expect("candidate is in the used set");
            let local: Vec<Vec<usize>> = cands.iter().map(|c| c.iter().map(|&d| column(d)).collect()).collect();
            let truth: Vec<usize> = picks.iter().map(|&i| column(data.labels[i])).collect();
            let descs: Vec<&[usize]> = used.iter().map(|&d| data.pool[d].as_slice()).collect();

            let tape = Tape::new();
            let ctx = Ctx::new(&tape, &ranker.store);
            let scores = ranker.scores_var(&ctx, tape.constant(x), &descs)?;
            let loss = candidate_nll(scores, &local, &truth)?;
            if !loss.item().is_finite() {
                return Err(Error::NonFinite("ranker loss".into()));
            }
            total += loss.item() * picks.len() as f64;
            let grads = ctx.grads(loss);
            adam.step(&mut ranker.store, &grads);
        }
        let mean = total / data.clips.len() as f64;
        on_epoch(epoch, mean);
        log.epoch_loss.push(mean);
    }
    Ok((ranker, log))
}
