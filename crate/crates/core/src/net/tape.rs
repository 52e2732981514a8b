//! Reverse-mode automatic differentiation over 2-D matrices.
//!
//! Every backward rule is itself expressed with tape operations, so gradients
//! are ordinary [`Var`]s that can be differentiated again. The critic's
//! gradient penalty relies on this (it differentiates a gradient norm with
//! respect to the critic parameters).
//!
//! Batched sequences are stored flattened: `B` sequences of `L` frames become a
//! `(B*L) x C` matrix where rows `b*L .. (b+1)*L` hold sequence `b`. The
//! time-aware operations (`shift_rows`, `sum_rows`, `repeat_rows`, `down2`,
//! `up2`) take that block length so they never mix frames of different samples.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

pub type Matrix = Array2<f64>;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Scale(usize, f64),
    Offset(usize),
    Relu(usize),
    ClampMin(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Recip(usize),
    Square(usize),
    SumAll(usize),
    SumRows {
        a: usize,
        block: usize,
    },
    RepeatRows {
        a: usize,
        block: usize,
    },
    SumCols(usize),
    RepeatCols(usize),
    ShiftRows {
        a: usize,
        block: usize,
        shifts: Rc<[isize]>,
    },
    Down2(usize),
    Up2(usize),
    GatherRows {
        a: usize,
        index: Rc<[usize]>,
    },
    ScatterRows {
        a: usize,
        index: Rc<[usize]>,
    },
    ConcatRows(Rc<[usize]>),
    ConcatCols(Rc<[usize]>),
    SliceCols {
        a: usize,
        start: usize,
    },
    PadCols {
        a: usize,
        start: usize,
    },
}

impl Op {
    fn any_input(&self, mut f: impl FnMut(usize) -> bool) -> bool {
        use Op::*;
        match self {
            Leaf => false,
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => f(*a) || f(*b),
            Transpose(a)
            | Scale(a, _)
            | Offset(a)
            | Relu(a)
            | ClampMin(a, _)
            | Sigmoid(a)
            | Tanh(a)
            | Exp(a)
            | Ln(a)
            | Sqrt(a)
            | Recip(a)
            | Square(a)
            | SumAll(a)
            | SumCols(a)
            | Down2(a)
            | Up2(a) => f(*a),
            SumRows { a, .. }
            | RepeatRows { a, .. }
            | RepeatCols(a)
            | ShiftRows { a, .. }
            | GatherRows { a, .. }
            | ScatterRows { a, .. }
            | SliceCols { a, .. }
            | PadCols { a, .. } => f(*a),
            ConcatRows(xs) | ConcatCols(xs) => xs.iter().any(|&x| f(x)),
        }
    }
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
}

/// Append-only record of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}({}x{})", self.id, r, c)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Records an input value. Whether it is differentiated depends only on
    /// the `wrt` list handed to [`Tape::grad`].
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.push(Array2::from_elem((1, 1), value), Op::Leaf)
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Var<'_> {
        self.push(Array2::zeros((rows, cols)), Op::Leaf)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let cols = values[0].ncols();
        assert!(values.iter().all(|v| v.ncols() == cols), "concat_rows: column mismatch");
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows");
        self.push(out, Op::ConcatRows(parts.iter().map(|p| p.id).collect()))
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = values[0].nrows();
        assert!(values.iter().all(|v| v.nrows() == rows), "concat_cols: row mismatch");
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols");
        self.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
    }

    /// Gradients of `y` (summed over its entries) with respect to `wrt`.
    ///
    /// The returned gradients live on this tape and can be differentiated
    /// again. `None` means `y` does not depend on that input.
    pub fn grad<'t>(&'t self, y: Var<'t>, wrt: &[Var<'t>]) -> Vec<Option<Var<'t>>> {
        assert!(std::ptr::eq(y.tape, self), "variable from another tape");
        let n = y.id + 1;
        let Some(lo) = wrt.iter().map(|w| w.id).filter(|&i| i < n).min() else {
            return vec![None; wrt.len()];
        };
        let mut dep = vec![false; n];
        for w in wrt {
            if w.id < n {
                dep[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in lo..n {
                if !dep[i] {
                    dep[i] = nodes[i].op.any_input(|j| dep[j]);
                }
            }
        }
        if !dep[y.id] {
            return vec![None; wrt.len()];
        }

        let mut grads: Vec<Option<Var<'t>>> = vec![None; n];
        let (r, c) = y.shape();
        grads[y.id] = Some(self.constant(Array2::ones((r, c))));
        for i in (lo..n).rev() {
            if !dep[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            let out = Var { tape: self, id: i };
            self.backward(out, &op, g, &dep, &mut grads);
        }
        wrt.iter().map(|w| if w.id < n { grads[w.id] } else { None }).collect()
    }

    fn backward<'t>(&'t self, out: Var<'t>, op: &Op, g: Var<'t>, dep: &[bool], grads: &mut [Option<Var<'t>>]) {
        let var = |id: usize| Var { tape: self, id };
        let mut acc = |id: usize, gi: Var<'t>| {
            if dep[id] {
                grads[id] = Some(match grads[id] {
                    Some(prev) => prev + gi,
                    None => gi,
                });
            }
        };
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(a, g);
                acc(b, g);
            }
            Op::Sub(a, b) => {
                acc(a, g);
                if dep[b] {
                    acc(b, -g);
                }
            }
            Op::Mul(a, b) => {
                if dep[a] {
                    acc(a, g * var(b));
                }
                if dep[b] {
                    acc(b, g * var(a));
                }
            }
            Op::MatMul(a, b) => {
                if dep[a] {
                    acc(a, g.matmul(var(b).t()));
                }
                if dep[b] {
                    acc(b, var(a).t().matmul(g));
                }
            }
            Op::Transpose(a) => acc(a, g.t()),
            Op::Scale(a, c) => acc(a, g.scale(c)),
            Op::Offset(a) => acc(a, g),
            Op::Relu(a) => {
                let mask = var(a).value().mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                acc(a, g * self.constant(mask));
            }
            Op::ClampMin(a, floor) => {
                let mask = var(a).value().mapv(|x| if x > floor { 1.0 } else { 0.0 });
                acc(a, g * self.constant(mask));
            }
            Op::Sigmoid(a) => acc(a, g * (out * out.scale(-1.0).offset(1.0))),
            Op::Tanh(a) => acc(a, g * out.square().scale(-1.0).offset(1.0)),
            Op::Exp(a) => acc(a, g * out),
            Op::Ln(a) => acc(a, g * var(a).recip()),
            Op::Sqrt(a) => acc(a, (g * out.recip()).scale(0.5)),
            Op::Recip(a) => acc(a, -(g * out.square())),
            Op::Square(a) => acc(a, (g * var(a)).scale(2.0)),
            Op::SumAll(a) => {
                let (r, c) = var(a).shape();
                acc(a, g.repeat_cols(c).repeat_rows(r));
            }
            Op::SumRows { a, block } => acc(a, g.repeat_rows(block)),
            Op::RepeatRows { a, block } => acc(a, g.sum_rows(block)),
            Op::SumCols(a) => {
                let c = var(a).shape().1;
                acc(a, g.repeat_cols(c));
            }
            Op::RepeatCols(a) => acc(a, g.sum_cols()),
            Op::ShiftRows { a, block, ref shifts } => {
                let back: Vec<isize> = shifts.iter().map(|s| -s).collect();
                acc(a, g.shift_rows_each(block, &back));
            }
            Op::Down2(a) => acc(a, g.up2().scale(0.5)),
            Op::Up2(a) => acc(a, g.down2().scale(2.0)),
            Op::GatherRows { a, ref index } => {
                let rows = var(a).shape().0;
                acc(a, g.scatter_rows(index, rows));
            }
            Op::ScatterRows { a, ref index, .. } => acc(a, g.gather_rows(index)),
            Op::ConcatRows(ref parts) => {
                let mut start = 0;
                for &p in parts.iter() {
                    let len = var(p).shape().0;
                    if dep[p] {
                        let idx: Vec<usize> = (start..start + len).collect();
                        acc(p, g.gather_rows(&idx));
                    }
                    start += len;
                }
            }
            Op::ConcatCols(ref parts) => {
                let mut start = 0;
                for &p in parts.iter() {
                    let len = var(p).shape().1;
                    if dep[p] {
                        acc(p, g.slice_cols(start, len));
                    }
                    start += len;
                }
            }
            Op::SliceCols { a, start, .. } => {
                let total = var(a).shape().1;
                acc(a, g.pad_cols(start, total));
            }
            Op::PadCols { a, start, .. } => {
                let len = var(a).shape().1;
                acc(a, g.slice_cols(start, len));
            }
        }
    }
}

fn map_unary(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    a.mapv(f)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        (v.nrows(), v.ncols())
    }

    /// The single entry of a 1x1 value.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on a non-scalar");
        v[[0, 0]]
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "variables from different tapes");
    }

    fn unary(&self, value: Matrix, op: Op) -> Var<'t> {
        self.tape.push(value, op)
    }

    fn elementwise(&self, other: Var<'t>, what: &str) -> (Rc<Matrix>, Rc<Matrix>) {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.dim(), b.dim(), "{what}: shape mismatch");
        (a, b)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.ncols(), b.nrows(), "matmul: {:?} x {:?}", a.dim(), b.dim());
        self.unary(a.dot(&*b), Op::MatMul(self.id, other.id))
    }

    pub fn t(self) -> Var<'t> {
        let a = self.value();
        self.unary(a.t().to_owned(), Op::Transpose(self.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| x * c), Op::Scale(self.id, c))
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| x + c), Op::Offset(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn clamp_min(self, floor: f64) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| x.max(floor)), Op::ClampMin(self.id, floor))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| 1.0 / (1.0 + (-x).exp())), Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, f64::tanh), Op::Tanh(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, f64::exp), Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, f64::ln), Op::Ln(self.id))
    }

    pub fn sqrt(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, f64::sqrt), Op::Sqrt(self.id))
    }

    pub fn recip(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, f64::recip), Op::Recip(self.id))
    }

    pub fn square(self) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| x * x), Op::Square(self.id))
    }

    /// Sum of all entries, as a 1x1 value.
    pub fn sum(self) -> Var<'t> {
        let a = self.value();
        self.unary(Array2::from_elem((1, 1), a.sum()), Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum().scale(1.0 / (r * c) as f64)
    }

    /// Sums each block of `block` consecutive rows: `(B*block) x C -> B x C`.
    pub fn sum_rows(self, block: usize) -> Var<'t> {
        let a = self.value();
        assert!(
            block > 0 && a.nrows().is_multiple_of(block),
            "sum_rows: {} rows not divisible by block {}",
            a.nrows(),
            block
        );
        let b = a.nrows() / block;
        let mut out = Array2::zeros((b, a.ncols()));
        for (i, mut row) in out.outer_iter_mut().enumerate() {
            for r in 0..block {
                row += &a.row(i * block + r);
            }
        }
        self.unary(out, Op::SumRows { a: self.id, block })
    }

    /// Per-block average over time: `(B*block) x C -> B x C`.
    pub fn mean_rows(self, block: usize) -> Var<'t> {
        self.sum_rows(block).scale(1.0 / block as f64)
    }

    /// Repeats every row `block` times: `B x C -> (B*block) x C`.
    pub fn repeat_rows(self, block: usize) -> Var<'t> {
        let a = self.value();
        assert!(block > 0, "repeat_rows: zero block");
        let mut out = Array2::zeros((a.nrows() * block, a.ncols()));
        for (i, row) in a.outer_iter().enumerate() {
            for r in 0..block {
                out.row_mut(i * block + r).assign(&row);
            }
        }
        self.unary(out, Op::RepeatRows { a: self.id, block })
    }

    /// Row sums: `R x C -> R x 1`.
    pub fn sum_cols(self) -> Var<'t> {
        let a = self.value();
        let out = a.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.unary(out, Op::SumCols(self.id))
    }

    /// Broadcasts a column: `R x 1 -> R x cols`.
    pub fn repeat_cols(self, cols: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.ncols(), 1, "repeat_cols needs a single column");
        let out = a.broadcast((a.nrows(), cols)).expect("broadcast").to_owned();
        self.unary(out, Op::RepeatCols(self.id))
    }

    /// Shifts every block by the same number of rows; see [`Var::shift_rows_each`].
    pub fn shift_rows(self, block: usize, shift: isize) -> Var<'t> {
        let rows = self.shape().0;
        assert!(block > 0 && rows.is_multiple_of(block), "shift_rows: bad block");
        let shifts = vec![shift; rows / block];
        self.shift_rows_each(block, &shifts)
    }

    /// Shifts block `b` by `shifts[b]` rows. Row `t` of the output block is row
    /// `t - s` of the input block, zero where that index falls outside it, so
    /// positive shifts move content toward later frames.
    pub fn shift_rows_each(self, block: usize, shifts: &[isize]) -> Var<'t> {
        let a = self.value();
        assert!(
            block > 0 && a.nrows() == block * shifts.len(),
            "shift_rows: {} rows vs {} blocks of {}",
            a.nrows(),
            shifts.len(),
            block
        );
        let mut out = Array2::zeros(a.dim());
        let len = block as isize;
        for (b, &s) in shifts.iter().enumerate() {
            let lo = s.max(0);
            let hi = (len + s).min(len);
            if lo >= hi {
                continue;
            }
            let base = (b * block) as isize;
            out.slice_mut(s![base + lo..base + hi, ..])
                .assign(&a.slice(s![base + lo - s..base + hi - s, ..]));
        }
        self.unary(
            out,
            Op::ShiftRows {
                a: self.id,
                block,
                shifts: shifts.into(),
            },
        )
    }

    /// Averages non-overlapping row pairs (length halves).
    pub fn down2(self) -> Var<'t> {
        let a = self.value();
        assert!(a.nrows().is_multiple_of(2), "down2: odd row count {}", a.nrows());
        let mut out = Array2::zeros((a.nrows() / 2, a.ncols()));
        Zip::from(out.rows_mut())
            .and(a.slice(s![0..;2, ..]).rows())
            .and(a.slice(s![1..;2, ..]).rows())
            .for_each(|mut o, x, y| {
                Zip::from(&mut o)
                    .and(&x)
                    .and(&y)
                    .for_each(|o, &x, &y| *o = 0.5 * (x + y));
            });
        self.unary(out, Op::Down2(self.id))
    }

    /// Repeats every row twice (length doubles).
    pub fn up2(self) -> Var<'t> {
        let a = self.value();
        let mut out = Array2::zeros((a.nrows() * 2, a.ncols()));
        out.slice_mut(s![0..;2, ..]).assign(&*a);
        out.slice_mut(s![1..;2, ..]).assign(&*a);
        self.unary(out, Op::Up2(self.id))
    }

    /// Output row `r` is input row `index[r]`.
    pub fn gather_rows(self, index: &[usize]) -> Var<'t> {
        let a = self.value();
        let mut out = Array2::zeros((index.len(), a.ncols()));
        for (r, &i) in index.iter().enumerate() {
            assert!(i < a.nrows(), "gather_rows: index {} out of {}", i, a.nrows());
            out.row_mut(r).assign(&a.row(i));
        }
        self.unary(
            out,
            Op::GatherRows {
                a: self.id,
                index: index.into(),
            },
        )
    }

    /// Adds input row `r` into output row `index[r]` of a zero `rows x C` matrix.
    pub fn scatter_rows(self, index: &[usize], rows: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.nrows(), index.len(), "scatter_rows: index length");
        let mut out = Array2::zeros((rows, a.ncols()));
        for (r, &i) in index.iter().enumerate() {
            assert!(i < rows, "scatter_rows: index {} out of {}", i, rows);
            let mut dst = out.row_mut(i);
            dst += &a.row(r);
        }
        self.unary(
            out,
            Op::ScatterRows {
                a: self.id,
                index: index.into(),
            },
        )
    }

    /// Contiguous window of `len` rows out of every block of `block` rows,
    /// starting at `offsets[b]` inside block `b`.
    pub fn window_rows(self, block: usize, len: usize, offsets: &[usize]) -> Var<'t> {
        let rows = self.shape().0;
        assert_eq!(rows, block * offsets.len(), "window_rows: block layout");
        let mut index = Vec::with_capacity(len * offsets.len());
        for (b, &o) in offsets.iter().enumerate() {
            assert!(o + len <= block, "window_rows: window past block end");
            index.extend((0..len).map(|u| b * block + o + u));
        }
        self.gather_rows(&index)
    }

    /// Rows `t`, `steps + t`, `2*steps + t`, ... (frame `t` of every sample).
    pub fn frame(self, steps: usize, t: usize) -> Var<'t> {
        let rows = self.shape().0;
        assert!(t < steps && rows.is_multiple_of(steps), "frame: bad layout");
        let index: Vec<usize> = (0..rows / steps).map(|b| b * steps + t).collect();
        self.gather_rows(&index)
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        let a = self.value();
        assert!(start + len <= a.ncols(), "slice_cols out of range");
        let out = a.slice(s![.., start..start + len]).to_owned();
        self.unary(out, Op::SliceCols { a: self.id, start })
    }

    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        let a = self.value();
        assert!(start + a.ncols() <= total, "pad_cols out of range");
        let mut out = Array2::zeros((a.nrows(), total));
        out.slice_mut(s![.., start..start + a.ncols()]).assign(&*a);
        self.unary(out, Op::PadCols { a: self.id, start })
    }
}

/// Interleaves per-step `B x C` frames into the block layout: row `b*T + t`
/// of the result is row `b` of `steps[t]`.
pub fn stack_frames<'t>(tape: &'t Tape, steps: &[Var<'t>]) -> Var<'t> {
    let t_len = steps.len();
    let b = steps[0].shape().0;
    let time_major = tape.concat_rows(steps);
    let index: Vec<usize> = (0..b * t_len)
        .map(|r| {
            let (sample, t) = (r / t_len, r % t_len);
            t * b + sample
        })
        .collect();
    time_major.gather_rows(&index)
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = self.elementwise(rhs, "add");
        self.unary(&*a + &*b, Op::Add(self.id, rhs.id))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = self.elementwise(rhs, "sub");
        self.unary(&*a - &*b, Op::Sub(self.id, rhs.id))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    /// Elementwise product.
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = self.elementwise(rhs, "mul");
        self.unary(&*a * &*b, Op::Mul(self.id, rhs.id))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}
