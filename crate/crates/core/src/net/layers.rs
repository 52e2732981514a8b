//! Differentiable building blocks shared by every network.
//!
//! The free functions check shapes and return [`Error::Shape`] instead of
//! panicking; the layer structs own parameter ids and call into them.

use rand::Rng;

use super::params::{Ctx, ParamId, ParamStore};
use super::tape::Var;
use crate::error::{Error, Result};

fn shape_err(what: &str, detail: String) -> Error {
    Error::Shape(format!("{what}: {detail}"))
}

/// `y = x W + b` for row-vector inputs `x: R x in`, `W: in x out`, `b: 1 x out`.
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (rows, cin) = x.shape();
    let (win, wout) = w.shape();
    if cin != win || b.shape() != (1, wout) {
        return Err(shape_err(
            "linear",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    Ok(x.matmul(w) + b.repeat_rows(rows))
}

/// Stride-1, zero-padded 1-D convolution over time.
///
/// `x` holds sequences of `block` frames stacked by rows. `w` has shape
/// `(kernel*in) x out`; rows `j*in .. (j+1)*in` are the weights of tap `j`,
/// which reads frame `t + j - (kernel-1)/2`. Length is preserved.
pub fn conv1d<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>, kernel: usize, block: usize) -> Result<Var<'t>> {
    if kernel.is_multiple_of(2) {
        return Err(shape_err("conv1d", format!("kernel size {kernel} is even")));
    }
    let (rows, cin) = x.shape();
    if block == 0 || rows % block != 0 {
        return Err(shape_err(
            "conv1d",
            format!("{rows} rows do not split into sequences of {block}"),
        ));
    }
    if w.shape().0 != kernel * cin {
        return Err(shape_err(
            "conv1d",
            format!("input width {cin}, kernel {kernel}, weights {:?}", w.shape()),
        ));
    }
    if kernel == 1 {
        return linear(x, w, b);
    }
    let pad = (kernel - 1) / 2;
    let taps: Vec<Var<'t>> = (0..kernel)
        .map(|j| x.shift_rows(block, pad as isize - j as isize))
        .collect();
    let stacked = x.tape().concat_cols(&taps);
    linear(stacked, w, b)
}

/// Pairwise mean over time; every sequence length must be even.
pub fn downsample2x(x: Var<'_>, block: usize) -> Result<Var<'_>> {
    let rows = x.shape().0;
    if block == 0 || !block.is_multiple_of(2) || !rows.is_multiple_of(block) {
        return Err(shape_err(
            "downsample2x",
            format!("sequence length {block} (rows {rows}) must be even"),
        ));
    }
    Ok(x.down2())
}

/// Nearest-neighbour repetition over time.
pub fn upsample2x(x: Var<'_>) -> Var<'_> {
    x.up2()
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), inputs, outputs, inputs, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, outputs, inputs, rng);
        Self { w, b, inputs, outputs }
    }

    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>) -> Result<Var<'t>> {
        linear(x, ctx.param(self.w), ctx.param(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "conv1d kernel must be odd");
        let fan_in = kernel * inputs;
        let w = store.add_uniform(format!("{name}.w"), fan_in, outputs, fan_in, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, outputs, fan_in, rng);
        Self {
            w,
            b,
            kernel,
            inputs,
            outputs,
        }
    }

    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, x: Var<'t>, block: usize) -> Result<Var<'t>> {
        conv1d(x, ctx.param(self.w), ctx.param(self.b), self.kernel, block)
    }
}

/// Word-embedding table; row `i` is the vector of token `i`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        let table = store.add_uniform(format!("{name}.table"), vocab, dim, dim, rng);
        Self { table, vocab, dim }
    }

    pub fn forward<'t>(&self, ctx: &Ctx<'t, '_>, tokens: &[usize]) -> Result<Var<'t>> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::InvalidArgument(format!(
                "token {bad} outside vocabulary of {}",
                self.vocab
            )));
        }
        Ok(ctx.param(self.table).gather_rows(tokens))
    }
}

#[derive(Clone, Debug)]
struct LstmLayer {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

/// Per-layer `(h, c)` pairs, each `B x hidden`.
pub type LstmState<'t> = Vec<(Var<'t>, Var<'t>)>;

/// Stacked LSTM; gate column order is input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    layers: Vec<LstmLayer>,
    pub inputs: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let cin = if l == 0 { inputs } else { hidden };
                LstmLayer {
                    wx: store.add_uniform(format!("{name}.l{l}.wx"), cin, 4 * hidden, hidden, rng),
                    wh: store.add_uniform(format!("{name}.l{l}.wh"), hidden, 4 * hidden, hidden, rng),
                    b: store.add_uniform(format!("{name}.l{l}.b"), 1, 4 * hidden, hidden, rng),
                }
            })
            .collect();
        Self { layers, inputs, hidden }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_state<'t>(&self, ctx: &Ctx<'t, '_>, batch: usize) -> LstmState<'t> {
        let tape = ctx.tape();
        (0..self.layers.len())
            .map(|_| (tape.zeros(batch, self.hidden), tape.zeros(batch, self.hidden)))
            .collect()
    }

    /// One time step through every layer. Returns the top layer's hidden
    /// output and the new state.
    pub fn step<'t>(
        &self,
        ctx: &Ctx<'t, '_>,
        input: Var<'t>,
        state: &LstmState<'t>,
    ) -> Result<(Var<'t>, LstmState<'t>)> {
        if state.len() != self.layers.len() {
            return Err(shape_err(
                "lstm_step",
                format!("{} state layers for {} layers", state.len(), self.layers.len()),
            ));
        }
        let (batch, cin) = input.shape();
        if cin != self.inputs {
            return Err(shape_err(
                "lstm_step",
                format!("input width {cin}, expected {}", self.inputs),
            ));
        }
        let hdim = self.hidden;
        let mut x = input;
        let mut next = Vec::with_capacity(self.layers.len());
        for (layer, &(h, c)) in self.layers.iter().zip(state) {
            if h.shape() != (batch, hdim) || c.shape() != (batch, hdim) {
                return Err(shape_err(
                    "lstm_step",
                    format!("state {:?}/{:?}, expected ({batch}, {hdim})", h.shape(), c.shape()),
                ));
            }
            let gates =
                x.matmul(ctx.param(layer.wx)) + h.matmul(ctx.param(layer.wh)) + ctx.param(layer.b).repeat_rows(batch);
            let i = gates.slice_cols(0, hdim).sigmoid();
            let f = gates.slice_cols(hdim, hdim).sigmoid();
            let g = gates.slice_cols(2 * hdim, hdim).tanh();
            let o = gates.slice_cols(3 * hdim, hdim).sigmoid();
            let c2 = f * c + i * g;
            let h2 = o * c2.tanh();
            next.push((h2, c2));
            x = h2;
        }
        Ok((x, next))
    }
}

/// Runs an LSTM over `steps` frames stored in block layout and returns the
/// top-layer outputs in the same layout, plus the final state.
pub fn run_lstm<'t>(lstm: &Lstm, ctx: &Ctx<'t, '_>, seq: Var<'t>, steps: usize) -> Result<(Var<'t>, LstmState<'t>)> {
    let rows = seq.shape().0;
    if steps == 0 || !rows.is_multiple_of(steps) {
        return Err(shape_err(
            "run_lstm",
            format!("{rows} rows do not split into sequences of {steps}"),
        ));
    }
    let batch = rows / steps;
    let mut state = lstm.zero_state(ctx, batch);
    let mut outs = Vec::with_capacity(steps);
    for t in 0..steps {
        let (out, next) = lstm.step(ctx, seq.frame(steps, t), &state)?;
        outs.push(out);
        state = next;
    }
    Ok((super::tape::stack_frames(ctx.tape(), &outs), state))
}
