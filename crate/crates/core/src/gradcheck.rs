//! Central finite-difference gradient checking.
//!
//! The oracle evaluates the recorded forward computation only — never the
//! backward pass it is checking. Checks run at f64 with h = 1e-4.

use crate::array::Array;
use crate::graph::{Graph, Param, Tensor};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
    pub coords: usize,
}

impl CheckOutcome {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

fn forward_value<B>(inputs: &[Array<f64>], build: &B) -> f64
where
    B: Fn(&Graph<f64>, &[Tensor<f64>]) -> Tensor<f64>,
{
    let g = Graph::<f64>::new();
    let tensors: Vec<Tensor<f64>> = inputs.iter().map(|a| g.constant(a.clone())).collect();
    build(&g, &tensors).scalar_value()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares reverse-mode gradients of `build` against central differences
/// for every coordinate of every input.
pub fn check_gradients<B>(name: &str, inputs: &[Array<f64>], build: B) -> CheckOutcome
where
    B: Fn(&Graph<f64>, &[Tensor<f64>]) -> Tensor<f64>,
{
    check_gradients_with_step(name, inputs, build, DEFAULT_STEP)
}

pub fn check_gradients_with_step<B>(
    name: &str,
    inputs: &[Array<f64>],
    build: B,
    h: f64,
) -> CheckOutcome
where
    B: Fn(&Graph<f64>, &[Tensor<f64>]) -> Tensor<f64>,
{
    check_gradients_pair(name, inputs, &build, &build, h)
}

/// Like [`check_gradients_with_step`], but finite differences run on a
/// separate `surrogate` function. Used for straight-through estimators,
/// whose backward pass is defined as the gradient of the soft surrogate
/// rather than of the (piecewise-constant) hard forward.
pub fn check_gradients_pair<A, B>(
    name: &str,
    inputs: &[Array<f64>],
    analytic_build: A,
    surrogate: B,
    h: f64,
) -> CheckOutcome
where
    A: Fn(&Graph<f64>, &[Tensor<f64>]) -> Tensor<f64>,
    B: Fn(&Graph<f64>, &[Tensor<f64>]) -> Tensor<f64>,
{
    // analytic gradients
    let params: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, a)| Param::new(format!("{name}/input{i}"), a.clone()))
        .collect();
    let g = Graph::<f64>::new();
    let tensors: Vec<Tensor<f64>> = params.iter().map(|p| g.param(p)).collect();
    let loss = analytic_build(&g, &tensors);
    assert!(
        loss.value().is_scalar(),
        "{name}: loss must be scalar, got {:?}",
        loss.shape()
    );
    let grads = g
        .backward(&loss)
        .unwrap_or_else(|e| panic!("{name}: backward failed: {e}"));
    let analytic: Vec<Array<f64>> = params
        .iter()
        .map(|p| {
            grads
                .of_param(p)
                .cloned()
                .unwrap_or_else(|| Array::zeros(p.shape()))
        })
        .collect();

    // numeric gradients by forward evaluation only
    let mut max_err = 0.0f64;
    let mut coords = 0usize;
    let mut work: Vec<Array<f64>> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let fp = forward_value(&work, &surrogate);
            work[i].data_mut()[j] = orig - h;
            let fm = forward_value(&work, &surrogate);
            work[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let err = rel_err(analytic[i].data()[j], numeric);
            if err > max_err {
                max_err = err;
            }
            coords += 1;
        }
    }
    CheckOutcome {
        name: name.to_string(),
        max_rel_err: max_err,
        coords,
    }
}
