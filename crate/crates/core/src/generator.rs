//! Text-conditioned motion generators.
//!
//! Batches of `B` sequences of `T` frames are stored as `(B*T) x C` matrices,
//! sequence-major, so row `b*T + t` is frame `t` of sample `b`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mocap::MotionClip;
use crate::net::{tape::stack_frames, Conv1d, Ctx, Linear, Lstm, Matrix, ParamStore, Var};

/// Kernel width of the convolutions on residual and plot paths.
pub const KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    Cnn,
    Rnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Output frames; a power of two for the CNN generator.
    pub frames: usize,
    /// Degrees of freedom per frame.
    pub dof: usize,
    /// Hidden size of every module.
    pub hidden: usize,
    pub final_cut: bool,
    pub mode: GeneratorMode,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || (self.mode == GeneratorMode::Cnn && !self.frames.is_power_of_two()) {
            return Err(Error::InvalidArgument(format!(
                "N = {} is not a positive power of two",
                self.frames
            )));
        }
        if self.dof == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("M and k must be positive".into()));
        }
        Ok(())
    }

    /// Length of the tape before the final cut.
    pub fn tape_len(&self) -> usize {
        if self.final_cut {
            2 * self.frames
        } else {
            self.frames
        }
    }

    /// Number of residual upsampling modules of the CNN generator; there is
    /// one more plot module than this.
    pub fn cnn_levels(&self) -> usize {
        self.tape_len().trailing_zeros() as usize
    }
}

/// Gaussian latent codes.
///
/// CNN mode: `levels[i]` is `(B*2^i) x k`. RNN mode: `levels[t]` is `B x k`,
/// one per tape frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStack {
    pub batch: usize,
    pub levels: Vec<Matrix>,
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

impl LatentStack {
    pub fn sample_cnn<R: Rng + ?Sized>(config: &GeneratorConfig, batch: usize, rng: &mut R) -> Self {
        let levels = (0..=config.cnn_levels())
            .map(|i| normal_matrix(batch << i, config.hidden, rng))
            .collect();
        Self { batch, levels }
    }

    /// `steps` per-frame codes; pass `config.tape_len()` for plain sampling.
    pub fn sample_rnn<R: Rng + ?Sized>(config: &GeneratorConfig, batch: usize, steps: usize, rng: &mut R) -> Self {
        let levels = (0..steps).map(|_| normal_matrix(batch, config.hidden, rng)).collect();
        Self { batch, levels }
    }

    pub fn sample<R: Rng + ?Sized>(config: &GeneratorConfig, batch: usize, rng: &mut R) -> Self {
        match config.mode {
            GeneratorMode::Cnn => Self::sample_cnn(config, batch, rng),
            GeneratorMode::Rnn => Self::sample_rnn(config, batch, config.tape_len(), rng),
        }
    }
}

/// Cut offsets for a batch, each uniform on `0..=n`.
pub fn sample_cut_offsets<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..=n)).collect()
}

/// Keeps frames `offset..offset + n` of every `2n`-frame tape in the batch.
pub fn final_cut<'t>(tape: Var<'t>, n: usize, offsets: &[usize]) -> Result<Var<'t>> {
    if tape.shape().0 != 2 * n * offsets.len() {
        return Err(Error::Shape(format!(
            "final cut expects {} tapes of {} frames, got {} rows",
            offsets.len(),
            2 * n,
            tape.shape().0
        )));
    }
    if let Some(&o) = offsets.iter().find(|&&o| o > n) {
        return Err(Error::InvalidArgument(format!("cut offset {o} > {n}")));
    }
    Ok(tape.window_rows(2 * n, n, offsets))
}

/// Cuts a uniformly placed `N`-frame segment from a `2N`-frame clip.
pub fn final_cut_clip<R: Rng + ?Sized>(tape: &MotionClip, n: usize, rng: &mut R) -> Result<MotionClip> {
    if n == 0 || tape.len() != 2 * n {
        return Err(Error::Shape(format!(
            "tape has {} frames, expected {}",
            tape.len(),
            2 * n
        )));
    }
    let offset = rng.random_range(0..=n);
    tape.with_frames(tape.frames().slice(ndarray::s![offset..offset + n, ..]).to_owned())
}

/// Forward pass results. `motion` is `(B*N) x M`; `tape` is the pre-cut
/// `(B*T) x M` sequence (the same node as `motion` without a final cut).
#[derive(Clone, Debug)]
pub struct GeneratorOutput<'t> {
    pub motion: Var<'t>,
    pub tape: Var<'t>,
    pub batch: usize,
    pub offsets: Vec<usize>,
    /// Per-sample shape of each hidden level: `(2^i, k)` for the CNN
    /// generator, `(T, k)` once for the RNN generator.
    pub level_shapes: Vec<(usize, usize)>,
    /// RNN only: `Linear(d_t)` for `t = 1..T`, each `B x M`.
    pub deltas: Vec<Var<'t>>,
}

/// `Conv1d(ReLU(Conv1d(z) + h_txt))`.
#[derive(Clone, Debug)]
struct PlotConv {
    inner: Conv1d,
    outer: Conv1d,
}

impl PlotConv {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, k: usize, rng: &mut R) -> Self {
        Self {
            inner: Conv1d::new(store, &format!("{name}.in"), k, k, KERNEL, rng),
            outer: Conv1d::new(store, &format!("{name}.out"), k, k, KERNEL, rng),
        }
    }

    fn forward<'t>(&self, ctx: &Ctx<'t, '_>, z: Var<'t>, h_txt: Var<'t>, block: usize) -> Result<Var<'t>> {
        let a = self.inner.forward(ctx, z, block)? + h_txt.repeat_rows(block);
        self.outer.forward(ctx, a.relu(), block)
    }
}

#[derive(Clone, Debug)]
struct UpResidual {
    inner: Conv1d,
    outer: Conv1d,
}

/// Progressive upsampling generator.
#[derive(Clone, Debug)]
pub struct CnnGenerator {
    pub config: GeneratorConfig,
    plots: Vec<PlotConv>,
    residuals: Vec<UpResidual>,
    decode: Conv1d,
}

impl CnnGenerator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: GeneratorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let k = config.hidden;
        let levels = config.cnn_levels();
        let plots = (0..=levels)
            .map(|i| PlotConv::new(store, &format!("{name}.plot{i}"), k, rng))
            .collect();
        let residuals = (1..=levels)
            .map(|i| UpResidual {
                inner: Conv1d::new(store, &format!("{name}.res{i}.in"), k, k, KERNEL, rng),
                outer: Conv1d::new(store, &format!("{name}.res{i}.out"), k, k, KERNEL, rng),
            })
            .collect();
        let decode = Conv1d::new(store, &format!("{name}.decode"), k, config.dof, 1, rng);
        Ok(Self {
            config,
            plots,
            residuals,
            decode,
        })
    }

    pub fn num_plots(&self) -> usize {
        self.plots.len()
    }

    pub fn num_residuals(&self) -> usize {
        self.residuals.len()
    }

    pub fn forward<'t>(
        &self,
        ctx: &Ctx<'t, '_>,
        z: &LatentStack,
        h_txt: Var<'t>,
        offsets: &[usize],
    ) -> Result<GeneratorOutput<'t>> {
        let cfg = &self.config;
        let (k, b) = (cfg.hidden, z.batch);
        if z.levels.len() != self.plots.len() {
            return Err(Error::Shape(format!(
                "{} latent levels for {} plot modules",
                z.levels.len(),
                self.plots.len()
            )));
        }
        if h_txt.shape() != (b, k) {
            return Err(Error::Shape(format!(
                "h_txt is {:?}, expected ({b}, {k})",
                h_txt.shape()
            )));
        }
        let tape = ctx.tape();
        let mut level_shapes = Vec::with_capacity(self.plots.len());
        let mut h = None;
        for (i, (plot, zi)) in self.plots.iter().zip(&z.levels).enumerate() {
            let block = 1 << i;
            if zi.dim() != (b * block, k) {
                return Err(Error::Shape(format!(
                    "z_{i} is {:?}, expected ({}, {k})",
                    zi.dim(),
                    b * block
                )));
            }
            let p = plot.forward(ctx, tape.constant(zi.clone()), h_txt, block)?;
            let next = match h {
                None => p,
                Some(prev) => {
                    let res = &self.residuals[i - 1];
                    let inner = res.inner.forward(ctx, prev, block / 2)?.up2() + p;
                    prev.up2() + res.outer.forward(ctx, inner.relu(), block)?
                }
            };
            let (rows, cols) = next.shape();
            level_shapes.push((rows / b, cols));
            h = Some(next);
        }
        let t_len = cfg.tape_len();
        let out = self.decode.forward(ctx, h.expect("at least one level"), t_len)?;
        finish(out, cfg, b, offsets, level_shapes, Vec::new())
    }
}

fn finish<'t>(
    tape: Var<'t>,
    cfg: &GeneratorConfig,
    batch: usize,
    offsets: &[usize],
    level_shapes: Vec<(usize, usize)>,
    deltas: Vec<Var<'t>>,
) -> Result<GeneratorOutput<'t>> {
    let motion = if cfg.final_cut {
        if offsets.len() != batch {
            return Err(Error::Shape(format!("{} cut offsets for batch {batch}", offsets.len())));
        }
        final_cut(tape, cfg.frames, offsets)?
    } else {
        tape
    };
    Ok(GeneratorOutput {
        motion,
        tape,
        batch,
        offsets: if cfg.final_cut { offsets.to_vec() } else { Vec::new() },
        level_shapes,
        deltas,
    })
}

/// Linear, ReLU after adding `h_txt`, Linear.
#[derive(Clone, Debug)]
struct PlotMlp {
    inner: Linear,
    outer: Linear,
}

impl PlotMlp {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, k: usize, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.in"), k, k, rng),
            outer: Linear::new(store, &format!("{name}.out"), k, k, rng),
        }
    }

    fn forward<'t>(&self, ctx: &Ctx<'t, '_>, z: Var<'t>, h_txt: Var<'t>) -> Result<Var<'t>> {
        let a = self.inner.forward(ctx, z)? + h_txt;
        self.outer.forward(ctx, a.relu())
    }
}

/// Ground-truth frames that replace the first `len` generated frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedFrames {
    /// `(B*len) x M`, sequence-major.
    pub frames: Matrix,
    pub len: usize,
}

/// Frame-difference recurrent generator.
#[derive(Clone, Debug)]
pub struct RnnGenerator {
    pub config: GeneratorConfig,
    initial_plot: PlotMlp,
    decode: Linear,
    plot: PlotMlp,
    prev: Linear,
    pub lstm: Lstm,
    pub diff_decode: Linear,
}

impl RnnGenerator {
    pub const LAYERS: usize = 2;

    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: GeneratorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (k, m) = (config.hidden, config.dof);
        Ok(Self {
            config,
            initial_plot: PlotMlp::new(store, &format!("{name}.plot0"), k, rng),
            decode: Linear::new(store, &format!("{name}.decode"), k, m, rng),
            plot: PlotMlp::new(store, &format!("{name}.plot"), k, rng),
            prev: Linear::new(store, &format!("{name}.prev"), m, k, rng),
            lstm: Lstm::new(store, &format!("{name}.lstm"), 2 * k, k, Self::LAYERS, rng),
            diff_decode: Linear::new(store, &format!("{name}.diff"), k, m, rng),
        })
    }

    /// Same parameters, different output length.
    pub fn with_frames(&self, frames: usize) -> Result<Self> {
        let config = GeneratorConfig { frames, ..self.config };
        config.validate()?;
        Ok(Self { config, ..self.clone() })
    }

    /// Runs `z.levels.len()` steps. Without a seed this should equal
    /// `config.tape_len()` and the final cut applies if configured; with a
    /// seed no cut is made and the output has one frame per latent step.
    pub fn forward<'t>(
        &self,
        ctx: &Ctx<'t, '_>,
        z: &LatentStack,
        h_txt: Var<'t>,
        offsets: &[usize],
        seed: Option<&SeedFrames>,
    ) -> Result<GeneratorOutput<'t>> {
        let cfg = &self.config;
        let (k, m, b) = (cfg.hidden, cfg.dof, z.batch);
        let steps = z.levels.len();
        if steps == 0 {
            return Err(Error::Shape("no latent steps".into()));
        }
        if h_txt.shape() != (b, k) {
            return Err(Error::Shape(format!(
                "h_txt is {:?}, expected ({b}, {k})",
                h_txt.shape()
            )));
        }
        if let Some(zt) = z.levels.iter().find(|zt| zt.dim() != (b, k)) {
            return Err(Error::Shape(format!("z_t is {:?}, expected ({b}, {k})", zt.dim())));
        }
        if seed.is_none() && steps != cfg.tape_len() {
            return Err(Error::Shape(format!(
                "{steps} latent steps, expected {}",
                cfg.tape_len()
            )));
        }
        let tape = ctx.tape();
        let seed_rows: Vec<Var<'t>> = match seed {
            None => Vec::new(),
            Some(s) => {
                if s.len == 0 || s.len >= steps {
                    return Err(Error::InvalidArgument(format!(
                        "seed of {} frames for a {steps}-frame output",
                        s.len
                    )));
                }
                if s.frames.dim() != (b * s.len, m) {
                    return Err(Error::Shape(format!(
                        "seed is {:?}, expected ({}, {m})",
                        s.frames.dim(),
                        b * s.len
                    )));
                }
                let all = tape.constant(s.frames.clone());
                (0..s.len).map(|t| all.frame(s.len, t)).collect()
            }
        };

        let mut a = match seed_rows.first() {
            Some(&s0) => s0,
            None => {
                let p0 = self
                    .initial_plot
                    .forward(ctx, tape.constant(z.levels[0].clone()), h_txt)?;
                self.decode.forward(ctx, p0)?
            }
        };
        let mut frames = Vec::with_capacity(steps);
        frames.push(a);
        let mut deltas = Vec::with_capacity(steps - 1);
        if steps > 1 {
            // all per-step plots in one batched pass, then split by step
            let zs: Vec<Var<'t>> = z.levels[1..].iter().map(|zt| tape.constant(zt.clone())).collect();
            let plots = self
                .plot
                .forward(ctx, stack_frames(tape, &zs), h_txt.repeat_rows(steps - 1))?;
            let mut state = self.lstm.zero_state(ctx, b);
            for t in 1..steps {
                let p = plots.frame(steps - 1, t - 1);
                let x = tape.concat_cols(&[self.prev.forward(ctx, a)?, p]);
                let (d, next) = self.lstm.step(ctx, x, &state)?;
                state = next;
                let delta = self.diff_decode.forward(ctx, d)?;
                deltas.push(delta);
                a = match seed_rows.get(t) {
                    Some(&gt) => gt,
                    None => a + delta,
                };
                frames.push(a);
            }
        }
        let out = stack_frames(tape, &frames);
        if seed.is_some() {
            return Ok(GeneratorOutput {
                motion: out,
                tape: out,
                batch: b,
                offsets: Vec::new(),
                level_shapes: vec![(steps, k)],
                deltas,
            });
        }
        finish(out, cfg, b, offsets, vec![(steps, k)], deltas)
    }
}

/// Either generator behind one interface.
#[derive(Clone, Debug)]
pub enum Generator {
    Cnn(CnnGenerator),
    Rnn(RnnGenerator),
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: GeneratorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match config.mode {
            GeneratorMode::Cnn => Generator::Cnn(CnnGenerator::new(store, name, config, rng)?),
            GeneratorMode::Rnn => Generator::Rnn(RnnGenerator::new(store, name, config, rng)?),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        match self {
            Generator::Cnn(g) => &g.config,
            Generator::Rnn(g) => &g.config,
        }
    }

    pub fn forward<'t>(
        &self,
        ctx: &Ctx<'t, '_>,
        z: &LatentStack,
        h_txt: Var<'t>,
        offsets: &[usize],
    ) -> Result<GeneratorOutput<'t>> {
        match self {
            Generator::Cnn(g) => g.forward(ctx, z, h_txt, offsets),
            Generator::Rnn(g) => g.forward(ctx, z, h_txt, offsets, None),
        }
    }
}
