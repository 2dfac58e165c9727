use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{epoch_rng, EpochTrace, IterState, MethodFamily};
use crate::problems::FiniteSumProblem;

/// How the next anchor is formed from an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvrgOption {
    /// `x̃⁺ = x_m`.
    I,
    /// `x̃⁺ = (1/m) Σ_{k<m} x_k`.
    II,
}

/// One SVRG epoch from anchor `x_tilde`:
/// `x_{k+1} = x_k - η (∇f_i(x_k) - ∇f_i(x̃) + ∇g(x̃))`.
pub fn run_svrg_epoch(
    prob: &FiniteSumProblem,
    eta: f64,
    m: usize,
    option: SvrgOption,
    x_tilde: &DVector<f64>,
    seed: u64,
) -> EpochTrace {
    svrg_with_rng(prob, eta, m, option, x_tilde, &mut epoch_rng(seed, 0))
}

pub(super) fn svrg_with_rng(
    prob: &FiniteSumProblem,
    eta: f64,
    m: usize,
    option: SvrgOption,
    x_tilde: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> EpochTrace {
    let n = prob.n();
    let comps = prob.components();
    let x_star = prob.x_star();
    // the one full gradient of the epoch
    let anchor_grad = prob.full_gradient(x_tilde);

    let mut x = x_tilde.clone();
    let mut states = Vec::with_capacity(m + 1);
    let mut indices = Vec::with_capacity(m);
    let mut inputs = Vec::with_capacity(m);
    let mut running_sum = DVector::zeros(prob.p());
    states.push(IterState::Point(x.clone()));
    for _ in 0..m {
        let i = rng.random_range(0..n);
        let grad_x = comps[i].gradient(&x);
        let grad_anchor = comps[i].gradient(x_tilde);
        let grad_star = comps[i].gradient(x_star);
        let direction = &grad_x - &grad_anchor + &anchor_grad;

        running_sum += &x;
        x -= direction * eta;

        indices.push(i);
        inputs.push(vec![&grad_x - &grad_star, grad_star - grad_anchor + &anchor_grad]);
        states.push(IterState::Point(x.clone()));
    }
    let output = match option {
        SvrgOption::I => x,
        SvrgOption::II => running_sum / m as f64,
    };
    EpochTrace {
        family: match option {
            SvrgOption::I => MethodFamily::SvrgOptionI,
            SvrgOption::II => MethodFamily::SvrgOptionII,
        },
        anchor: x_tilde.clone(),
        x_star: x_star.clone(),
        states,
        indices,
        inputs,
        couplings: Vec::new(),
        output,
    }
}
