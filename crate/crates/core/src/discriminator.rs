//! Dense-validation critics and the temporal-shift augmentation.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::KERNEL;
use crate::mocap::MotionClip;
use crate::net::layers::{downsample2x, run_lstm};
use crate::net::{Conv1d, Ctx, Linear, Lstm, ParamId, ParamStore, Var};

/// Shift range `[-floor(n/2), floor(n/2)]`.
pub fn max_shift(n: usize) -> isize {
    (n / 2) as isize
}

pub fn sample_shifts<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<isize> {
    let m = max_shift(n) as i64;
    (0..batch).map(|_| rng.random_range(-m..=m) as isize).collect()
}

/// Moves frames `s` steps later (earlier for negative `s`), filling vacated
/// frames with zeros.
pub fn shift_frames(frames: ArrayView2<'_, f64>, s: isize) -> Array2<f64> {
    let n = frames.nrows() as isize;
    let mut out = Array2::zeros(frames.dim());
    let lo = s.clamp(0, n);
    let hi = (n + s).clamp(0, n);
    if lo < hi {
        out.slice_mut(s![lo..hi, ..])
            .assign(&frames.slice(s![lo - s..hi - s, ..]));
    }
    out
}

/// Random temporal shift of a single (normalized) clip.
pub fn temporal_shift<R: Rng + ?Sized>(clip: &MotionClip, rng: &mut R) -> Result<MotionClip> {
    let s = sample_shifts(clip.len(), 1, rng)[0];
    clip.with_frames(shift_frames(clip.frames(), s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminatorMode {
    Cnn,
    Rnn,
}

/// Which sequence the RNN critic's diff validator reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffValidateInput {
    /// The recurrent outputs `h` over the encoded differences.
    #[default]
    Hidden,
    /// The encoded differences `d` themselves.
    Encoded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub frames: usize,
    pub dof: usize,
    pub hidden: usize,
    pub mode: DiscriminatorMode,
    #[serde(default)]
    pub diff_input: DiffValidateInput,
}

/// `h_i = down(h_{i+1}) + conv(relu(down(conv(h_{i+1}))))`.
#[derive(Clone, Debug)]
pub struct DownResidual {
    inner: Conv1d,
    outer: Conv1d,
}

impl DownResidual {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, k: usize, rng: &mut R) -> Self {
        Self {
            inner: Conv1d::new(store, &format!("{name}.in"), k, k, KERNEL, rng),
            outer: Conv1d::new(store, &format!("{name}.out"), k, k, KERNEL, rng),
        }
    }

    /// `h` holds blocks of `block` frames; the result has blocks of `block / 2`.
    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, h: Var<'t>, block: usize) -> Result<Var<'t>> {
        let inner = downsample2x(self.inner.forward(ctx, h, block)?, block)?.relu();
        let outer = self.outer.forward(ctx, inner, block / 2)?;
        Ok(downsample2x(h, block)? + outer)
    }
}

/// Two-layer per-frame MLP matching a hidden sequence against `h_txt`,
/// averaged over frames: `mean(W2 relu(W1 h + Wt h_txt))`.
#[derive(Clone, Debug)]
pub struct Validator {
    pub hidden: Linear,
    pub text: Linear,
    pub score: Linear,
}

impl Validator {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, k: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.h"), k, k, rng),
            text: Linear::new(store, &format!("{name}.txt"), k, k, rng),
            score: Linear::new(store, &format!("{name}.score"), k, 1, rng),
        }
    }

    /// `h` is `(B*block) x k`, `h_txt` is `B x k`; returns `B x 1`.
    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, h: Var<'t>, h_txt: Var<'t>, block: usize) -> Result<Var<'t>> {
        let a = self.hidden.forward(ctx, h)? + self.text.forward(ctx, h_txt)?.repeat_rows(block);
        Ok(self.score.forward(ctx, a.relu())?.mean_rows(block))
    }

    pub fn params(&self) -> [ParamId; 6] {
        [
            self.hidden.w,
            self.hidden.b,
            self.text.w,
            self.text.b,
            self.score.w,
            self.score.b,
        ]
    }
}

/// Per-resolution scores (index 0 is the single-frame level), mixing
/// weights and the critic value `y = sum_i exp(w_i) s_i`, each `B x 1`.
#[derive(Clone, Debug)]
pub struct ValidationReport<'t> {
    pub scores: Vec<Var<'t>>,
    pub weights: Var<'t>,
    pub y: Var<'t>,
}

#[derive(Clone, Debug)]
pub struct CnnDiscriminator {
    pub config: DiscriminatorConfig,
    encode: Conv1d,
    /// `residuals[i]` maps level `i + 1` to level `i`.
    residuals: Vec<DownResidual>,
    pub validators: Vec<Validator>,
    pub weights: ParamId,
}

fn check_input(x: Var<'_>, h_txt: Var<'_>, frames: usize, dof: usize, hidden: usize) -> Result<usize> {
    let (rows, cols) = x.shape();
    if cols != dof || rows == 0 || rows % frames != 0 {
        return Err(Error::Shape(format!(
            "critic input is {:?}, expected (B*{frames}, {dof})",
            x.shape()
        )));
    }
    let b = rows / frames;
    if h_txt.shape() != (b, hidden) {
        return Err(Error::Shape(format!(
            "h_txt is {:?}, expected ({b}, {hidden})",
            h_txt.shape()
        )));
    }
    Ok(b)
}

impl CnnDiscriminator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: DiscriminatorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if !config.frames.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "N = {} is not a power of two",
                config.frames
            )));
        }
        let k = config.hidden;
        let levels = config.frames.trailing_zeros() as usize;
        let encode = Conv1d::new(store, &format!("{name}.encode"), config.dof, k, 1, rng);
        let residuals = (0..levels)
            .map(|i| DownResidual::new(store, &format!("{name}.res{i}"), k, rng))
            .collect();
        let validators = (0..=levels)
            .map(|i| Validator::new(store, &format!("{name}.val{i}"), k, rng))
            .collect();
        let weights = store.add(format!("{name}.mix"), Array2::zeros((1, levels + 1)));
        Ok(Self {
            config,
            encode,
            residuals,
            validators,
            weights,
        })
    }

    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>, h_txt: Var<'t>) -> Result<ValidationReport<'t>> {
        let cfg = &self.config;
        let n = cfg.frames;
        let b = check_input(x, h_txt, n, cfg.dof, cfg.hidden)?;
        let levels = self.residuals.len();
        let mut hs = vec![self.encode.forward(ctx, x, n)?];
        for i in (0..levels).rev() {
            let block = 2 << i;
            let h = self.residuals[i].forward(ctx, *hs.last().unwrap(), block)?;
            hs.push(h);
        }
        hs.reverse();
        let scores = hs
            .iter()
            .enumerate()
            .map(|(i, &h)| self.validators[i].forward(ctx, h, h_txt, 1 << i))
            .collect::<Result<Vec<_>>>()?;
        let weights = ctx.param(self.weights);
        let mix = weights.exp();
        let y = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| mix.slice_cols(i, 1).repeat_rows(b) * s)
            .reduce(|a, c| a + c)
            .expect("at least one level");
        Ok(ValidationReport { scores, weights, y })
    }
}

/// Frame score, diff score, their weights and `y = w_A s_A + w_D s_D`.
#[derive(Clone, Debug)]
pub struct RnnValidationReport<'t> {
    pub s_a: Var<'t>,
    pub s_d: Var<'t>,
    pub weights: Var<'t>,
    pub y: Var<'t>,
}

/// Pose pathway plus a recurrent pathway over frame differences.
#[derive(Clone, Debug)]
pub struct RnnDiscriminator {
    pub config: DiscriminatorConfig,
    frame_encode: Linear,
    diff_encode: Linear,
    lstm: Lstm,
    pub frame_validate: Validator,
    pub diff_validate: Validator,
    /// `1 x 2`: `[w_A, w_D]`.
    pub weights: ParamId,
}

impl RnnDiscriminator {
    pub const LAYERS: usize = 2;

    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: DiscriminatorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.frames < 2 {
            return Err(Error::InvalidArgument("the recurrent critic needs N >= 2".into()));
        }
        let (k, m) = (config.hidden, config.dof);
        Ok(Self {
            config,
            frame_encode: Linear::new(store, &format!("{name}.frame"), m, k, rng),
            diff_encode: Linear::new(store, &format!("{name}.diff"), m, k, rng),
            lstm: Lstm::new(store, &format!("{name}.lstm"), k, k, Self::LAYERS, rng),
            frame_validate: Validator::new(store, &format!("{name}.val_frame"), k, rng),
            diff_validate: Validator::new(store, &format!("{name}.val_diff"), k, rng),
            weights: store.add(format!("{name}.mix"), Array2::ones((1, 2))),
        })
    }

    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>, h_txt: Var<'t>) -> Result<RnnValidationReport<'t>> {
        let cfg = &self.config;
        let n = cfg.frames;
        let b = check_input(x, h_txt, n, cfg.dof, cfg.hidden)?;
        let z = self.frame_encode.forward(ctx, x)?;
        let s_a = self.frame_validate.forward(ctx, z, h_txt, n)?;
        let later: Vec<usize> = (0..b).flat_map(|i| (1..n).map(move |t| i * n + t)).collect();
        let diffs = (x - x.shift_rows(n, 1)).gather_rows(&later);
        let d = self.diff_encode.forward(ctx, diffs)?;
        let seq = match cfg.diff_input {
            DiffValidateInput::Hidden => run_lstm(&self.lstm, ctx, d, n - 1)?.0,
            DiffValidateInput::Encoded => d,
        };
        let s_d = self.diff_validate.forward(ctx, seq, h_txt, n - 1)?;
        let weights = ctx.param(self.weights);
        let y = weights.slice_cols(0, 1).repeat_rows(b) * s_a + weights.slice_cols(1, 1).repeat_rows(b) * s_d;
        Ok(RnnValidationReport { s_a, s_d, weights, y })
    }
}

#[derive(Clone, Debug)]
pub enum Discriminator {
    Cnn(CnnDiscriminator),
    Rnn(RnnDiscriminator),
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: DiscriminatorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match config.mode {
            DiscriminatorMode::Cnn => Discriminator::Cnn(CnnDiscriminator::new(store, name, config, rng)?),
            DiscriminatorMode::Rnn => Discriminator::Rnn(RnnDiscriminator::new(store, name, config, rng)?),
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        match self {
            Discriminator::Cnn(d) => &d.config,
            Discriminator::Rnn(d) => &d.config,
        }
    }

    /// Critic values, `B x 1`.
    pub fn score<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>, h_txt: Var<'t>) -> Result<Var<'t>> {
        Ok(match self {
            Discriminator::Cnn(d) => d.forward(ctx, x, h_txt)?.y,
            Discriminator::Rnn(d) => d.forward(ctx, x, h_txt)?.y,
        })
    }
}
