//! WGAN-GP objective and the alternating critic/generator optimization loop.

use std::time::Instant;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{
    sample_shifts, shift_frames, DiffValidateInput, Discriminator, DiscriminatorConfig, DiscriminatorMode,
};
use crate::error::{Error, Result};
use crate::generator::{sample_cut_offsets, Generator, GeneratorConfig, GeneratorMode, LatentStack, SeedFrames};
use crate::mocap::dataset::sample_offset;
use crate::net::{Adam, AdamConfig, Checkpoint, Ctx, Matrix, ParamStore, Tape, Var};
use crate::text::TextEncoder;

/// Added under the square root of the gradient norm so it stays
/// differentiable at zero.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Gradient-penalty weight.
    pub lambda: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Outer iterations; each is `d_steps` critic updates then one generator update.
    pub iterations: u64,
    pub d_steps: u32,
    pub batch_size: usize,
    /// Clip length N in frames.
    pub frames: usize,
    /// Frame rate f in Hz.
    pub frame_rate: f64,
    /// Hidden size k.
    pub hidden: usize,
    pub generator: GeneratorMode,
    pub final_cut: bool,
    pub discriminator: DiscriminatorMode,
    pub diff_input: DiffValidateInput,
    /// Random temporal shifts of critic inputs.
    pub augment: bool,
    pub seed: u64,
    /// Save a checkpoint every this many iterations; 0 disables periodic saves.
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            iterations: 20_000,
            d_steps: 10,
            batch_size: 64,
            frames: 64,
            frame_rate: 12.5,
            hidden: 256,
            generator: GeneratorMode::Cnn,
            final_cut: true,
            discriminator: DiscriminatorMode::Cnn,
            diff_input: DiffValidateInput::Hidden,
            augment: true,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.lr > 0.0 && self.frame_rate > 0.0) {
            return bad("lr and frame_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.d_steps == 0 || self.batch_size == 0 || self.hidden == 0 {
            return bad("d_steps, batch_size and hidden must be positive");
        }
        if !self.frames.is_power_of_two() || self.frames < 2 {
            return bad("frames must be a power of two and at least 2");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn generator_config(&self, dof: usize) -> GeneratorConfig {
        GeneratorConfig {
            frames: self.frames,
            dof,
            hidden: self.hidden,
            final_cut: self.final_cut,
            mode: self.generator,
        }
    }

    pub fn discriminator_config(&self, dof: usize) -> DiscriminatorConfig {
        DiscriminatorConfig {
            frames: self.frames,
            dof,
            hidden: self.hidden,
            mode: self.discriminator,
            diff_input: self.diff_input,
        }
    }
}

/// Per-sample `eps ~ U[0, 1]`.
pub fn sample_epsilons<R: Rng + ?Sized>(batch: usize, rng: &mut R) -> Vec<f64> {
    (0..batch).map(|_| rng.random::<f64>()).collect()
}

/// `eps_b * real + (1 - eps_b) * fake` for each sample `b` of `frames` rows.
pub fn interpolate(real: &Matrix, fake: &Matrix, eps: &[f64], frames: usize) -> Result<Matrix> {
    if real.dim() != fake.dim() || real.nrows() != frames * eps.len() {
        return Err(Error::Shape(format!(
            "interpolating {:?} and {:?} with {} weights of {frames} frames",
            real.dim(),
            fake.dim(),
            eps.len()
        )));
    }
    let mut out = fake.clone();
    for (b, &e) in eps.iter().enumerate() {
        let rows = s![b * frames..(b + 1) * frames, ..];
        let mut o = out.slice_mut(rows);
        o.zip_mut_with(&real.slice(rows), |f, &r| *f = e * r + (1.0 - e) * *f);
    }
    Ok(out)
}

/// Gradient penalty and the mean input-gradient norm it was computed from.
#[derive(Clone, Copy, Debug)]
pub struct Penalty<'t> {
    pub value: Var<'t>,
    pub mean_norm: f64,
}

/// `lambda * mean_b (||grad_x D(x_b)||_2 - 1)^2`, where the norm runs over
/// all `frames x M` coordinates of each sample. `x_hat` must be a node that
/// `critic` reads from; the result stays differentiable in the critic's
/// parameters.
pub fn gradient_penalty<'t>(
    tape: &'t Tape,
    critic: impl FnOnce(Var<'t>) -> Result<Var<'t>>,
    x_hat: Var<'t>,
    frames: usize,
    lambda: f64,
) -> Result<Penalty<'t>> {
    let (rows, _) = x_hat.shape();
    if frames == 0 || rows % frames != 0 {
        return Err(Error::Shape(format!(
            "{rows} rows do not split into samples of {frames}"
        )));
    }
    let y = critic(x_hat)?;
    let g = tape.grad(y.sum(), &[x_hat])[0].unwrap_or_else(|| tape.zeros(x_hat.shape().0, x_hat.shape().1));
    if g.value().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("critic input gradient".into()));
    }
    let norm = g.square().sum_cols().sum_rows(frames).offset(NORM_EPS).sqrt();
    let mean_norm = norm.value().mean().unwrap_or(0.0);
    let value = norm.offset(-1.0).square().mean().scale(lambda);
    Ok(Penalty { value, mean_norm })
}

/// Critic and generator objectives on one batch.
#[derive(Clone, Copy, Debug)]
pub struct Losses<'t> {
    /// `-(mean D(real) - mean D(fake)) + penalty`; minimized by the critic.
    pub d_loss: Var<'t>,
    /// `-mean D(fake)`; minimized by the generator.
    pub g_loss: Var<'t>,
    pub real_mean: f64,
    pub fake_mean: f64,
    pub penalty: Penalty<'t>,
}

/// Builds both objectives from raw critic values (no logarithm).
pub fn wgan_gp_losses<'t, F>(
    tape: &'t Tape,
    critic: F,
    real: Var<'t>,
    fake: Var<'t>,
    x_hat: Var<'t>,
    frames: usize,
    lambda: f64,
) -> Result<Losses<'t>>
where
    F: Fn(Var<'t>) -> Result<Var<'t>>,
{
    let d_real = critic(real)?.mean();
    let d_fake = critic(fake)?.mean();
    let penalty = gradient_penalty(tape, &critic, x_hat, frames, lambda)?;
    let d_loss = d_fake - d_real + penalty.value;
    let g_loss = -d_fake;
    for (name, v) in [("d_loss", d_loss), ("g_loss", g_loss)] {
        if !v.item().is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    Ok(Losses {
        d_loss,
        g_loss,
        real_mean: d_real.item(),
        fake_mean: d_fake.item(),
        penalty,
    })
}

/// Normalized training clips and their token sequences.
#[derive(Clone, Debug, Default)]
pub struct TrainingData {
    pub clips: Vec<Matrix>,
    pub tokens: Vec<Vec<usize>>,
}

impl TrainingData {
    pub fn check(&self, frames: usize, dof: usize) -> Result<()> {
        if self.clips.is_empty() || self.clips.len() != self.tokens.len() {
            return Err(Error::Dataset("training data is empty or unlabeled".into()));
        }
        for (i, c) in self.clips.iter().enumerate() {
            if c.ncols() != dof {
                return Err(Error::Shape(format!(
                    "clip {i} has {} channels, expected {dof}",
                    c.ncols()
                )));
            }
            if c.nrows() < frames {
                return Err(Error::Dataset(format!(
                    "clip {i} has {} frames, shorter than N = {frames}",
                    c.nrows()
                )));
            }
        }
        Ok(())
    }

    /// Uniformly chosen clips, each cut to a random `frames`-long window.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch: usize,
        frames: usize,
        rng: &mut R,
    ) -> Result<(Matrix, Vec<usize>)> {
        let dof = self.clips[0].ncols();
        let mut out = Array2::zeros((batch * frames, dof));
        let mut picks = Vec::with_capacity(batch);
        for b in 0..batch {
            let i = rng.random_range(0..self.clips.len());
            let clip = &self.clips[i];
            let o = sample_offset(clip.nrows(), frames, rng)?;
            out.slice_mut(s![b * frames..(b + 1) * frames, ..])
                .assign(&clip.slice(s![o..o + frames, ..]));
            picks.push(i);
        }
        Ok((out, picks))
    }
}

fn shift_batch(x: &Matrix, frames: usize, shifts: &[isize]) -> Matrix {
    let mut out = Array2::zeros(x.dim());
    for (b, &sft) in shifts.iter().enumerate() {
        let rows = s![b * frames..(b + 1) * frames, ..];
        out.slice_mut(rows).assign(&shift_frames(x.slice(rows), sft));
    }
    out
}

/// Generator and critic with their own text encoders and parameter stores.
#[derive(Clone, Debug)]
pub struct GanModel {
    pub config: TrainingConfig,
    pub dof: usize,
    pub vocab_size: usize,
    pub g_store: ParamStore,
    pub generator: Generator,
    pub g_text: TextEncoder,
    pub d_store: ParamStore,
    pub discriminator: Discriminator,
    pub d_text: TextEncoder,
}

impl GanModel {
    pub fn new<R: Rng + ?Sized>(config: &TrainingConfig, dof: usize, vocab_size: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let k = config.hidden;
        let mut g_store = ParamStore::new();
        let g_text = TextEncoder::new(&mut g_store, "gen.text", vocab_size, k, rng);
        let generator = Generator::new(&mut g_store, "gen", config.generator_config(dof), rng)?;
        let mut d_store = ParamStore::new();
        let d_text = TextEncoder::new(&mut d_store, "disc.text", vocab_size, k, rng);
        let discriminator = Discriminator::new(&mut d_store, "disc", config.discriminator_config(dof), rng)?;
        Ok(Self {
            config: config.clone(),
            dof,
            vocab_size,
            g_store,
            generator,
            g_text,
            d_store,
            discriminator,
            d_text,
        })
    }

    /// The same model with the recurrent generator unrolled for `frames`
    /// frames. The convolutional generator's depth depends on N, so it has
    /// no such variant.
    pub fn with_frames(&self, frames: usize) -> Result<Self> {
        let Generator::Rnn(g) = &self.generator else {
            return Err(Error::InvalidArgument(
                "only the recurrent generator can change its clip length".into(),
            ));
        };
        Ok(Self {
            generator: Generator::Rnn(g.with_frames(frames)?),
            ..self.clone()
        })
    }

    /// Builds the generator graph for a batch of token sequences.
    pub fn generator_forward<'t, R: Rng + ?Sized>(
        &self,
        ctx: &Ctx<'t, '_>,
        tokens: &[&[usize]],
        rng: &mut R,
    ) -> Result<Var<'t>> {
        let b = tokens.len();
        let h = self.g_text.encode(ctx, tokens)?;
        let cfg = self.generator.config();
        let z = LatentStack::sample(cfg, b, rng);
        let offsets = if cfg.final_cut {
            sample_cut_offsets(cfg.frames, b, rng)
        } else {
            Vec::new()
        };
        Ok(self.generator.forward(ctx, &z, h, &offsets)?.motion)
    }

    /// Samples `(B*N) x M` normalized motion for the given sentences.
    pub fn generate<R: Rng + ?Sized>(&self, tokens: &[&[usize]], rng: &mut R) -> Result<Matrix> {
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &self.g_store);
        let out = self.generator_forward(&ctx, tokens, rng)?;
        Ok((*out.value()).clone())
    }

    /// RNN-generator completion: `len`-frame outputs whose first frames are `seed`.
    pub fn complete<R: Rng + ?Sized>(
        &self,
        tokens: &[&[usize]],
        seed: &SeedFrames,
        len: usize,
        rng: &mut R,
    ) -> Result<Matrix> {
        let Generator::Rnn(g) = &self.generator else {
            return Err(Error::InvalidArgument(
                "completion needs the recurrent generator".into(),
            ));
        };
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &self.g_store);
        let h = self.g_text.encode(&ctx, tokens)?;
        let z = LatentStack::sample_rnn(&g.config, tokens.len(), len, rng);
        let out = g.forward(&ctx, &z, h, &[], Some(seed))?;
        Ok((*out.motion.value()).clone())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u64,
    pub g_updates: u64,
    pub d_updates: u64,
    /// Averages over this iteration's critic steps.
    pub d_real: f64,
    pub d_fake: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_param_grad_norm: f64,
    pub g_param_grad_norm: f64,
    pub elapsed_secs: f64,
}

/// Append-only list of log records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Optimizer state plus the model, resumable from a checkpoint.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: GanModel,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    pub d_updates: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(config: &TrainingConfig, dof: usize, vocab_size: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = GanModel::new(config, dof, vocab_size, &mut rng)?;
        let adam_g = Adam::new(config.adam(), &model.g_store);
        let adam_d = Adam::new(config.adam(), &model.d_store);
        Ok(Self {
            model,
            adam_g,
            adam_d,
            rng,
            iteration: 0,
            d_updates: 0,
            started: Instant::now(),
        })
    }

    fn critic_step(&mut self, data: &TrainingData) -> Result<(f64, f64, f64, f64, f64, f64)> {
        let m = &self.model;
        let cfg = &m.config;
        let (b, n) = (cfg.batch_size, cfg.frames);
        let rng = &mut self.rng;
        let (real, picks) = data.sample_batch(b, n, rng)?;
        let tokens: Vec<&[usize]> = picks.iter().map(|&i| data.tokens[i].as_slice()).collect();
        let fake = m.generate(&tokens, rng)?;
        let eps = sample_epsilons(b, rng);
        let x_hat = interpolate(&real, &fake, &eps, n)?;
        let (real_in, fake_in) = if cfg.augment {
            let sr = sample_shifts(n, b, rng);
            let sf = sample_shifts(n, b, rng);
            (shift_batch(&real, n, &sr), shift_batch(&fake, n, &sf))
        } else {
            (real, fake)
        };

        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &m.d_store);
        let h = m.d_text.encode(&ctx, &tokens)?;
        let critic = |x| m.discriminator.score(&ctx, x, h);
        let losses = wgan_gp_losses(
            &tape,
            critic,
            tape.constant(real_in),
            tape.constant(fake_in),
            tape.leaf(x_hat),
            n,
            cfg.lambda,
        )?;
        let grads = ctx.grads(losses.d_loss);
        if !grads.is_finite() {
            return Err(Error::NonFinite("critic parameter gradients".into()));
        }
        let stats = (
            losses.real_mean,
            losses.fake_mean,
            losses.penalty.value.item(),
            losses.penalty.mean_norm,
            losses.d_loss.item(),
            grads.global_norm(),
        );
        self.adam_d.step(&mut self.model.d_store, &grads);
        self.d_updates += 1;
        Ok(stats)
    }

    fn generator_step(&mut self, data: &TrainingData) -> Result<(f64, f64)> {
        let m = &self.model;
        let cfg = &m.config;
        let (b, n) = (cfg.batch_size, cfg.frames);
        let rng = &mut self.rng;
        let picks: Vec<usize> = (0..b).map(|_| rng.random_range(0..data.clips.len())).collect();
        let tokens: Vec<&[usize]> = picks.iter().map(|&i| data.tokens[i].as_slice()).collect();

        let tape = Tape::new();
        let gctx = Ctx::new(&tape, &m.g_store);
        let dctx = Ctx::new(&tape, &m.d_store);
        let mut fake = m.generator_forward(&gctx, &tokens, rng)?;
        if cfg.augment {
            fake = fake.shift_rows_each(n, &sample_shifts(n, b, rng));
        }
        let h = m.d_text.encode(&dctx, &tokens)?;
        let g_loss = -m.discriminator.score(&dctx, fake, h)?.mean();
        if !g_loss.item().is_finite() {
            return Err(Error::NonFinite("g_loss".into()));
        }
        let grads = gctx.grads(g_loss);
        if !grads.is_finite() {
            return Err(Error::NonFinite("generator parameter gradients".into()));
        }
        let out = (g_loss.item(), grads.global_norm());
        self.adam_g.step(&mut self.model.g_store, &grads);
        Ok(out)
    }

    /// One outer iteration: `d_steps` critic updates, then one generator update.
    pub fn step(&mut self, data: &TrainingData) -> Result<LogRecord> {
        let d_steps = self.model.config.d_steps;
        let mut acc = [0.0; 6];
        for _ in 0..d_steps {
            let s = self.critic_step(data)?;
            for (a, v) in acc.iter_mut().zip([s.0, s.1, s.2, s.3, s.4, s.5]) {
                *a += v / d_steps as f64;
            }
        }
        let (g_loss, g_norm) = self.generator_step(data)?;
        self.iteration += 1;
        Ok(LogRecord {
            iteration: self.iteration,
            g_updates: self.adam_g.steps,
            d_updates: self.d_updates,
            d_real: acc[0],
            d_fake: acc[1],
            penalty: acc[2],
            grad_norm: acc[3],
            d_loss: acc[4],
            g_loss,
            d_param_grad_norm: acc[5],
            g_param_grad_norm: g_norm,
            elapsed_secs: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Runs until `config.iterations`, calling `on_record` after every
    /// iteration (e.g. to stream the log or save checkpoints).
    pub fn run(
        &mut self,
        data: &TrainingData,
        mut on_record: impl FnMut(&Trainer, &LogRecord) -> Result<()>,
    ) -> Result<TrainingLog> {
        data.check(self.model.config.frames, self.model.dof)?;
        let mut log = TrainingLog::default();
        while self.iteration < self.model.config.iterations {
            let r = self.step(data)?;
            on_record(self, &r)?;
            log.push(r);
        }
        Ok(log)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let m = &self.model;
        let meta = serde_json::json!({
            "kind": "gan",
            "config": m.config,
            "dof": m.dof,
            "vocab_size": m.vocab_size,
            "iteration": self.iteration,
            "d_updates": self.d_updates,
            "adam_g_steps": self.adam_g.steps,
            "adam_d_steps": self.adam_d.steps,
            "rng": rng_state(&self.rng),
        });
        let mut ck = Checkpoint::new(meta);
        ck.push_store("gen", &m.g_store);
        ck.push_store("disc", &m.d_store);
        for (name, v) in self.adam_g.export(&m.g_store, "adam_g") {
            ck.push(name, v);
        }
        for (name, v) in self.adam_d.export(&m.d_store, "adam_d") {
            ck.push(name, v);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        if meta["kind"] != "gan" {
            return Err(Error::Checkpoint("not a GAN checkpoint".into()));
        }
        let config: TrainingConfig = serde_json::from_value(meta["config"].clone())?;
        let field = |k: &str| {
            meta[k]
                .as_u64()
                .ok_or_else(|| Error::Checkpoint(format!("missing field {k}")))
        };
        let mut t = Trainer::new(&config, field("dof")? as usize, field("vocab_size")? as usize)?;
        ck.load_store("gen", &mut t.model.g_store)?;
        ck.load_store("disc", &mut t.model.d_store)?;
        let lookup = |name: &str| ck.tensor(name).cloned();
        t.adam_g
            .import(&t.model.g_store, "adam_g", field("adam_g_steps")?, lookup)?;
        t.adam_d
            .import(&t.model.d_store, "adam_d", field("adam_d_steps")?, lookup)?;
        t.iteration = field("iteration")?;
        t.d_updates = field("d_updates")?;
        t.rng = rng_from_state(&meta["rng"])?;
        Ok(t)
    }
}

/// Seed, stream and word position of a ChaCha generator, as JSON.
pub fn rng_state(rng: &ChaCha8Rng) -> serde_json::Value {
    let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    serde_json::json!({
        "seed": seed,
        "stream": rng.get_stream().to_string(),
        "word_pos": rng.get_word_pos().to_string(),
    })
}

pub fn rng_from_state(v: &serde_json::Value) -> Result<ChaCha8Rng> {
    let bad = || Error::Checkpoint("malformed RNG state".into());
    let hex = v["seed"].as_str().ok_or_else(bad)?;
    if hex.len() != 64 {
        return Err(bad());
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    let stream: u64 = v["stream"].as_str().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let pos: u128 = v["word_pos"].as_str().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Ok(rng)
}
