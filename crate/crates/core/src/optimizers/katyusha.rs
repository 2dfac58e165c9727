use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{epoch_rng, EpochTrace, IterState, MethodFamily, MethodSpec};
use crate::error::{Error, Result};
use crate::problems::FiniteSumProblem;

/// Quantities produced by one inner Katyusha iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KatyushaStep {
    /// `x_{k+1} = τ₁z_k + τ₂x̃ + (1-τ₁-τ₂)y_k`.
    pub coupling: DVector<f64>,
    /// Variance-reduced gradient `v_k`.
    pub v: DVector<f64>,
    pub z_next: DVector<f64>,
    pub y_next: DVector<f64>,
    /// Subgradient of `ψ` at `z_{k+1}`.
    pub g: DVector<f64>,
    /// Subgradient of `ψ` at `y_{k+1}`.
    pub h: DVector<f64>,
}

/// One inner iteration with a given component index.
///
/// `anchor_grad` is `∇f(x̃)`. The z- and y-updates are prox steps with sizes
/// `α` and `ζ`, so `z_{k+1} = z_k - α(v_k + g_k)` and
/// `y_{k+1} = x_{k+1} - ζ(v_k + h_k)`.
pub fn katyusha_step(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    z: &DVector<f64>,
    y: &DVector<f64>,
    x_tilde: &DVector<f64>,
    anchor_grad: &DVector<f64>,
    index: usize,
) -> KatyushaStep {
    let reg = prob.regularizer();
    let comp = &prob.components()[index];
    let carry = 1.0 - spec.tau1 - spec.tau2;
    let coupling = z * spec.tau1 + x_tilde * spec.tau2 + y * carry;
    let v = comp.gradient(&coupling) - comp.gradient(x_tilde) + anchor_grad;
    let z_next = reg.prox(spec.alpha, &(z - &v * spec.alpha));
    let y_next = reg.prox(spec.zeta, &(&coupling - &v * spec.zeta));
    let g = reg.subgradient(&z_next);
    let h = reg.subgradient(&y_next);
    KatyushaStep { coupling, v, z_next, y_next, g, h }
}

/// One Katyusha epoch from `x_tilde` with `y₀ = z₀ = x̃`.
///
/// The output is the `(1 + σ_ψ α)^j`-weighted average of `y₁ … y_m`, with
/// `σ_ψ` the modulus of the regularizer.
pub fn run_katyusha_epoch(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x_tilde: &DVector<f64>,
    seed: u64,
) -> Result<EpochTrace> {
    let spec = spec.validated()?;
    katyusha_with_rng(prob, &spec, x_tilde, &mut epoch_rng(seed, 0))
}

pub(super) fn katyusha_with_rng(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x_tilde: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<EpochTrace> {
    if !prob.is_composite() {
        return Err(Error::InvalidProblem("Katyusha needs a composite problem".into()));
    }
    if spec.family != MethodFamily::Katyusha {
        return Err(Error::InvalidMethod(format!("expected a Katyusha spec, got {}", spec.family)));
    }
    let n = prob.n();
    let m = spec.m;
    let anchor_grad = prob.full_gradient(x_tilde);
    let growth = 1.0 + prob.regularizer().modulus() * spec.alpha;

    let mut z = x_tilde.clone();
    let mut y = x_tilde.clone();
    let mut states = Vec::with_capacity(m + 1);
    let mut indices = Vec::with_capacity(m);
    let mut inputs = Vec::with_capacity(m);
    let mut couplings = Vec::with_capacity(m);
    let mut weighted = DVector::zeros(prob.p());
    let mut weight_total = 0.0;
    states.push(IterState::Katyusha { z: z.clone(), y: y.clone() });
    for k in 0..m {
        let i = rng.random_range(0..n);
        let step = katyusha_step(prob, spec, &z, &y, x_tilde, &anchor_grad, i);
        // weights scaled by growth^{-(m-1)} to stay finite for long epochs
        let weight = growth.powi(k as i32 - (m as i32 - 1));
        weighted += &step.y_next * weight;
        weight_total += weight;

        z = step.z_next;
        y = step.y_next;
        indices.push(i);
        couplings.push(step.coupling);
        inputs.push(vec![step.v, step.g, step.h]);
        states.push(IterState::Katyusha { z: z.clone(), y: y.clone() });
    }
    Ok(EpochTrace {
        family: MethodFamily::Katyusha,
        anchor: x_tilde.clone(),
        x_star: prob.x_star().clone(),
        states,
        indices,
        inputs,
        couplings,
        output: weighted / weight_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_classes::FunctionClass;
    use crate::problems::{generate_problem, Regularizer};

    fn composite_problem(n: usize) -> FiniteSumProblem {
        let fc = FunctionClass::composite(0.1, 1.0).unwrap();
        generate_problem(31, n, 3, fc, Regularizer::quadratic_l2(0.1).unwrap()).unwrap()
    }

    #[test]
    fn rejects_non_composite_problem() {
        let fc = FunctionClass::smooth_convex(0.1, 1.0).unwrap();
        let prob = generate_problem(1, 4, 3, fc, Regularizer::none()).unwrap();
        let spec = MethodSpec::katyusha(5, 0.3, 0.5, 1.0, 1.0 / 3.0).unwrap();
        assert!(run_katyusha_epoch(&prob, &spec, &DVector::zeros(3), 0).is_err());
    }

    #[test]
    fn momentum_off_reduces_to_gradient_descent_on_z() {
        // τ₁ = 1, τ₂ = 0, ψ = None, n = 1
        let fc = FunctionClass::composite(0.2, 1.0).unwrap();
        let prob = generate_problem(6, 1, 3, fc, Regularizer::none()).unwrap();
        let alpha = 0.4;
        let spec = MethodSpec::katyusha(12, 1.0, 0.0, alpha, 1.0 / 3.0).unwrap();
        let x0 = DVector::from_element(3, 1.5);
        let trace = run_katyusha_epoch(&prob, &spec, &x0, 2).unwrap();
        let mut z = x0.clone();
        for k in 0..12 {
            let IterState::Katyusha { z: zk, .. } = &trace.states[k] else { unreachable!() };
            assert!((zk - &z).amax() < 1e-12);
            assert!((&trace.couplings[k] - zk).amax() < 1e-15);
            z -= prob.full_gradient(&z) * alpha;
        }
    }

    #[test]
    fn uniform_weights_without_regularizer() {
        let fc = FunctionClass::composite(0.2, 1.0).unwrap();
        let prob = generate_problem(6, 4, 3, fc, Regularizer::none()).unwrap();
        let spec = MethodSpec::katyusha(7, 0.3, 0.5, 0.5, 1.0 / 3.0).unwrap();
        let trace = run_katyusha_epoch(&prob, &spec, &DVector::from_element(3, 1.0), 9).unwrap();
        let mean = trace.states[1..].iter().fold(DVector::zeros(3), |acc, s| acc + s.iterate()) / 7.0;
        assert!((&trace.output - &mean).amax() < 1e-14);
    }

    #[test]
    fn geometric_weights_match_direct_sum() {
        let prob = composite_problem(5);
        let spec = MethodSpec::katyusha(6, 0.3, 0.5, 0.8, 1.0 / 3.0).unwrap();
        let trace = run_katyusha_epoch(&prob, &spec, &DVector::from_element(3, 1.0), 4).unwrap();
        let theta: f64 = 1.0 + 0.1 * 0.8;
        let mut num = DVector::zeros(3);
        let mut den = 0.0;
        for j in 0..6 {
            num += trace.states[j + 1].iterate() * theta.powi(j as i32);
            den += theta.powi(j as i32);
        }
        assert!((&trace.output - num / den).amax() < 1e-14);
    }

    #[test]
    fn prox_updates_match_closed_form() {
        let prob = composite_problem(8);
        let spec = MethodSpec::katyusha(20, 0.25, 0.4, 0.7, 0.3).unwrap();
        let trace = run_katyusha_epoch(&prob, &spec, &DVector::from_element(3, -2.0), 1).unwrap();
        let s = prob.regularizer().sigma_psi;
        for k in 0..20 {
            let (IterState::Katyusha { z, .. }, IterState::Katyusha { z: z1, y: y1 }) =
                (&trace.states[k], &trace.states[k + 1])
            else {
                unreachable!()
            };
            let v = &trace.inputs[k][0];
            let z_expected = (z - v * 0.7) / (1.0 + 0.7 * s);
            let y_expected = (&trace.couplings[k] - v * 0.3) / (1.0 + 0.3 * s);
            assert!((z1 - z_expected).amax() < 1e-14);
            assert!((y1 - y_expected).amax() < 1e-14);
            // recorded subgradients are exact for the quadratic regularizer
            assert_eq!(trace.inputs[k][1], z1 * s);
            assert_eq!(trace.inputs[k][2], y1 * s);
        }
    }

    #[test]
    fn mean_variance_reduced_gradient_is_unbiased() {
        let prob = composite_problem(7);
        let spec = MethodSpec::katyusha(1, 0.3, 0.5, 0.5, 1.0 / 3.0).unwrap();
        let x_tilde = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        let z = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![-1.0, 0.5, 0.2]);
        let anchor_grad = prob.full_gradient(&x_tilde);
        let mut mean = DVector::zeros(3);
        let mut q = DVector::zeros(3);
        for i in 0..prob.n() {
            let step = katyusha_step(&prob, &spec, &z, &y, &x_tilde, &anchor_grad, i);
            mean += step.v / prob.n() as f64;
            q = step.coupling;
        }
        assert!((mean - prob.full_gradient(&q)).amax() < 1e-14);
    }

    #[test]
    fn full_momentum_ignores_y() {
        // ψ = None and τ₁ + τ₂ = 1: y never enters x_{k+1}
        let fc = FunctionClass::composite(0.2, 1.0).unwrap();
        let prob = generate_problem(6, 4, 3, fc, Regularizer::none()).unwrap();
        let spec = MethodSpec::katyusha(1, 0.4, 0.6, 0.5, 1.0 / 3.0).unwrap();
        let x_tilde = DVector::from_element(3, 0.5);
        let z = DVector::from_element(3, -0.5);
        let g = prob.full_gradient(&x_tilde);
        let a = katyusha_step(&prob, &spec, &z, &DVector::from_element(3, 100.0), &x_tilde, &g, 2);
        let b = katyusha_step(&prob, &spec, &z, &DVector::from_element(3, -7.0), &x_tilde, &g, 2);
        assert_eq!(a.coupling, b.coupling);
        assert_eq!(a.z_next, b.z_next);
    }
}
