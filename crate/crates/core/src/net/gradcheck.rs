//! Central finite differences for verifying tape gradients.

use super::params::{Ctx, ParamStore};
use super::tape::{Matrix, Tape, Var};
use crate::error::Result;

/// Default step: large enough to avoid round-off, small enough for O(h^2)
/// truncation error at 64-bit precision.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    /// `||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2)`.
    pub fn relative_error(&self) -> f64 {
        relative_error(&self.analytic, &self.numeric)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

fn flatten(ms: &[Matrix]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.iter().copied()).collect()
}

fn unflatten(template: &[Matrix], flat: &[f64]) -> Vec<Matrix> {
    let mut it = flat.iter().copied();
    template
        .iter()
        .map(|m| m.mapv(|_| it.next().expect("flat length")))
        .collect()
}

/// Checks gradients of a scalar-valued tape function with respect to its
/// input matrices.
pub fn check_inputs<F>(inputs: &[Matrix], h: f64, f: F) -> GradCheck
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let y = f(&tape, &vars);
    let grads = tape.grad(y.sum(), &vars);
    let analytic: Vec<f64> = grads
        .iter()
        .zip(inputs)
        .flat_map(|(g, m)| match g {
            Some(g) => g.value().iter().copied().collect::<Vec<_>>(),
            None => vec![0.0; m.len()],
        })
        .collect();
    let numeric = central_difference(&flatten(inputs), h, |flat| {
        let probe = unflatten(inputs, flat);
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = probe.into_iter().map(|m| tape.leaf(m)).collect();
        f(&tape, &vars).value().sum()
    });
    GradCheck { analytic, numeric }
}

/// Checks gradients of a scalar-valued function with respect to every
/// parameter of `store`.
pub fn check_params<F>(store: &ParamStore, h: f64, f: F) -> Result<GradCheck>
where
    F: for<'t, 's> Fn(&Ctx<'t, 's>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let ctx = Ctx::new(&tape, store);
    let y = f(&ctx)?;
    let analytic = ctx.grads(y.sum()).flatten(store);
    let mut probe_store = store.clone();
    let mut failure = None;
    let numeric = central_difference(&store.flatten(), h, |flat| {
        probe_store.unflatten(flat);
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &probe_store);
        match f(&ctx) {
            Ok(y) => y.value().sum(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(GradCheck { analytic, numeric })
}
