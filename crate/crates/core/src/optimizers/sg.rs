use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{epoch_rng, EpochTrace, IterState, MethodFamily};
use crate::problems::FiniteSumProblem;

/// Plain stochastic gradient, `x_{k+1} = x_k - η ∇f_{i_k}(x_k)` with uniform
/// i.i.d. indices.
pub fn run_sg(prob: &FiniteSumProblem, eta: f64, x0: &DVector<f64>, steps: usize, seed: u64) -> EpochTrace {
    sg_with_rng(prob, eta, x0, steps, &mut epoch_rng(seed, 0))
}

pub(super) fn sg_with_rng(
    prob: &FiniteSumProblem,
    eta: f64,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> EpochTrace {
    let n = prob.n();
    let comps = prob.components();
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(steps + 1);
    let mut indices = Vec::with_capacity(steps);
    let mut inputs = Vec::with_capacity(steps);
    states.push(IterState::Point(x.clone()));
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        let grad = comps[i].gradient(&x);
        x -= &grad * eta;
        indices.push(i);
        inputs.push(vec![grad]);
        states.push(IterState::Point(x.clone()));
    }
    EpochTrace {
        family: MethodFamily::Sg,
        anchor: x0.clone(),
        x_star: prob.x_star().clone(),
        states,
        indices,
        inputs,
        couplings: Vec::new(),
        output: x,
    }
}
