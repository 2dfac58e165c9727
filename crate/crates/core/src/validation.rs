//! Numerical checks of the inequalities behind the certificates.
//!
//! Per-step inequalities use exact expectations: the index is enumerated over
//! all `n` components. Only the multi-epoch checks are Monte Carlo.
//!
//! Violations are reported normalized: `(LHS - RHS) / scale`. For the
//! expectation checks the scale is `L · max(1, ‖x - x⋆‖² + ‖x̃ - x⋆‖² + N/L²)`
//! with `N = (1/n)Σ‖∇f_i(x⋆)‖²`. This makes one absolute slack meaningful
//! for states drawn at very different distances from the optimum.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::FunctionClass;
use crate::lmi_engine::{katyusha_certificate, storage, Certificate, DEFAULT_TOL};
use crate::optimizers::{
    katyusha_step, lyapunov, run_epoch, run_epochs, EpochTrace, MethodFamily, MethodSpec,
};
use crate::problems::FiniteSumProblem;
use crate::supply_rates::{
    katyusha_supply_rate, sg_supply_rates, svrg_i_supply_rates, svrg_ii_supply_rates, BoundContext,
    BoundDescriptor, SupplyRate,
};

/// Slack for the expectation inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-9;
/// Relative tolerance of the quadratic-form identity.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Slack for the pathwise dissipation inequality.
pub const DISSIPATION_SLACK: f64 = 1e-8;

/// Distances from the optimum at which random states are drawn.
pub const STATE_SCALES: [f64; 3] = [1e-3, 1.0, 1e3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub trials: usize,
    /// Largest normalized `LHS - RHS` seen (0 when nothing was evaluated).
    pub max_violation: f64,
    pub slack: f64,
    /// `max_violation ≤ slack`; vacuously true for skipped checks.
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl InequalityReport {
    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            trials: 0,
            max_violation: 0.0,
            slack: 0.0,
            pass: true,
            skipped: Some(reason.into()),
        }
    }
}

struct Tracker {
    name: String,
    slack: f64,
    trials: usize,
    worst: f64,
}

impl Tracker {
    fn new(name: &str, slack: f64) -> Self {
        Self { name: name.into(), slack, trials: 0, worst: f64::NEG_INFINITY }
    }

    fn record(&mut self, violation: f64) {
        self.trials += 1;
        // NaN must fail, never vanish in a max
        self.worst = if violation.is_nan() { f64::INFINITY } else { self.worst.max(violation) };
    }

    fn finish(self) -> InequalityReport {
        let max_violation = if self.trials == 0 { 0.0 } else { self.worst };
        InequalityReport {
            pass: max_violation <= self.slack,
            name: self.name,
            trials: self.trials,
            max_violation,
            slack: self.slack,
            skipped: None,
        }
    }
}

fn random_direction(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    loop {
        let d = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(rng));
        let norm = d.norm();
        if norm > 1e-12 {
            return d / norm;
        }
    }
}

/// A point at distance `scale · U(0.5, 2)` from `center`, with the scale
/// picked uniformly from [`STATE_SCALES`].
fn random_state(rng: &mut ChaCha8Rng, center: &DVector<f64>) -> DVector<f64> {
    let scale = STATE_SCALES[rng.random_range(0..STATE_SCALES.len())] * rng.random_range(0.5..2.0);
    center + random_direction(rng, center.len()) * scale
}

/// Per-component gradients at `x`, `x̃` and `x⋆` for one state pair.
struct Enumeration {
    d: DVector<f64>,
    d_tilde: DVector<f64>,
    /// `r_i = ∇f_i(x) - ∇f_i(x⋆)`.
    r: Vec<DVector<f64>>,
    /// `u_i = ∇f_i(x⋆) - ∇f_i(x̃) + ∇g(x̃)`.
    u: Vec<DVector<f64>>,
    /// `∇f_i(x)`.
    grad_x: Vec<DVector<f64>>,
    gap_x: f64,
    gap_tilde: f64,
}

impl Enumeration {
    fn new(prob: &FiniteSumProblem, x: &DVector<f64>, x_tilde: &DVector<f64>) -> Self {
        let xs = prob.x_star();
        let comps = prob.components();
        let grad_x: Vec<_> = comps.iter().map(|c| c.gradient(x)).collect();
        let grad_t: Vec<_> = comps.iter().map(|c| c.gradient(x_tilde)).collect();
        let grad_s: Vec<_> = comps.iter().map(|c| c.gradient(xs)).collect();
        let full_t = prob.full_gradient(x_tilde);
        let r = grad_x.iter().zip(&grad_s).map(|(a, b)| a - b).collect();
        let u = grad_s.iter().zip(&grad_t).map(|(s, t)| s - t + &full_t).collect();
        Self {
            d: x - xs,
            d_tilde: x_tilde - xs,
            r,
            u,
            grad_x,
            gap_x: prob.suboptimality(x),
            gap_tilde: prob.suboptimality(x_tilde),
        }
    }

    fn mean<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        let n = self.r.len();
        (0..n).map(f).sum::<f64>() / n as f64
    }

    fn context(&self, noise: f64) -> BoundContext {
        BoundContext {
            anchor_distance_sq: self.d_tilde.norm_squared(),
            iterate_gap: self.gap_x,
            anchor_gap: self.gap_tilde,
            next_iterate_gap: 0.0,
            gradient_noise: noise,
        }
    }
}

fn expected_supply(rate: &SupplyRate, blocks: impl Fn(usize) -> Vec<DVector<f64>>, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let b = blocks(i);
            let refs: Vec<&DVector<f64>> = b.iter().collect();
            rate.evaluate(&refs).expect("block count matches the supply rate")
        })
        .sum::<f64>()
        / n as f64
}

/// Checks S1–S9 and the supply-rate bounds of the SG, SVRG Option I and
/// Option II lemmas at `trials` random state pairs `(x, x̃)`.
///
/// Needs a non-composite problem (`∇g(x⋆) = 0`). Checks whose assumptions
/// the problem's class does not meet are reported as skipped.
pub fn check_appendix_inequalities(prob: &FiniteSumProblem, trials: usize, seed: u64) -> Vec<InequalityReport> {
    const NAMES: [&str; 19] = [
        "S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9", "L4.S1", "L4.S2", "L5.S1", "L5.S2", "L5.S3",
        "L5.S4", "L6.S1", "L6.S2", "L6.S3", "L6.S3.sharp",
    ];
    if prob.is_composite() {
        return NAMES
            .iter()
            .map(|n| InequalityReport::skipped(n, "composite problem: the optimum does not zero the smooth gradient"))
            .collect();
    }
    let fc = *prob.function_class();
    let convex = fc.component_assumption.is_convex();
    let (s, l) = (fc.sigma, fc.lipschitz);
    let m = fc.component_iqc_matrix();
    let noise = prob.gradient_noise();
    let n = prob.n();
    let mut trackers: Vec<Tracker> = NAMES.iter().map(|name| Tracker::new(name, INEQUALITY_SLACK)).collect();
    let svrg_i = svrg_i_supply_rates(&fc).expect("Option I rates accept every class");
    let sg = sg_supply_rates(&fc).ok();
    let svrg_ii = svrg_ii_supply_rates(&fc).ok();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x = random_state(&mut rng, prob.x_star());
        let x_tilde = random_state(&mut rng, prob.x_star());
        let e = Enumeration::new(prob, &x, &x_tilde);
        let scale = l * (1.0f64).max(e.d.norm_squared() + e.d_tilde.norm_squared() + noise / (l * l));
        let mut push = |idx: usize, lhs: f64, rhs: f64| trackers[idx].record((lhs - rhs) / scale);
        let ctx = e.context(noise);

        // S1 is an identity: check both signs
        let s1 = e.mean(|i| e.d.dot(&e.u[i]));
        push(0, s1.abs(), 0.0);
        let u_sq = e.mean(|i| e.u[i].norm_squared());
        push(1, u_sq, l * l * e.d_tilde.norm_squared());
        if convex {
            push(2, e.mean(|i| e.r[i].norm_squared()), 2.0 * l * e.gap_x);
            push(3, u_sq, 2.0 * l * e.gap_tilde);
        }
        let q = |i: usize| {
            m[(0, 0)] * e.d.norm_squared() + 2.0 * m[(0, 1)] * e.d.dot(&e.r[i]) + m[(1, 1)] * e.r[i].norm_squared()
        };
        push(4, e.mean(q), 0.0);
        push(5, (0..n).map(q).fold(f64::NEG_INFINITY, f64::max), 0.0);
        push(6, e.mean(|i| 2.0 * s * e.d.norm_squared() - 2.0 * e.d.dot(&e.r[i])), 0.0);
        // S8 reads "≥"; record gap - E[...] ≤ 0
        push(7, e.gap_x, e.mean(|i| e.d.dot(&(&e.r[i] + &e.u[i]))));
        push(8, e.d_tilde.norm_squared(), 2.0 / s * e.gap_tilde);

        if let Some(rates) = &sg {
            for (j, rate) in rates.iter().enumerate() {
                let es = expected_supply(rate, |i| vec![e.d.clone(), e.grad_x[i].clone()], n);
                push(9 + j, es, rate.bound.value(&ctx));
            }
        }
        for (j, rate) in svrg_i.iter().enumerate() {
            let es = expected_supply(rate, |i| vec![e.d.clone(), e.r[i].clone(), e.u[i].clone()], n);
            let bound = rate.bound.value(&ctx);
            if rate.bound == BoundDescriptor::ExactZero {
                push(11 + j, es.abs(), bound);
            } else {
                push(11 + j, es, bound);
            }
        }
        if let Some(rates) = &svrg_ii {
            for (j, rate) in rates.iter().enumerate() {
                let es = expected_supply(rate, |i| vec![e.d.clone(), e.r[i].clone(), e.u[i].clone()], n);
                push(15 + j, es, rate.bound.value(&ctx));
                if j == 2 {
                    // the rate formula relies on the factor-two version
                    push(18, es, -2.0 * e.gap_x);
                }
            }
        }
    }

    trackers
        .into_iter()
        .enumerate()
        .map(|(idx, t)| {
            let needs_convex = matches!(idx, 2 | 3 | 9 | 10 | 15..=18);
            if needs_convex && !convex {
                InequalityReport::skipped(NAMES[idx], "requires convex components")
            } else {
                t.finish()
            }
        })
        .collect()
}

/// Terms of the upper bound on the coupling left side, evaluated from the
/// actual points of one inner step. Returns `(sum, Σ|term|)`.
fn coupling_terms(
    fc: &FunctionClass,
    spec: &MethodSpec,
    x_star: &DVector<f64>,
    y: &DVector<f64>,
    x_tilde: &DVector<f64>,
    step: &crate::optimizers::KatyushaStep,
) -> (f64, f64) {
    let (t1, t2) = (spec.tau1, spec.tau2);
    let tt = 1.0 - t1 - t2;
    let q = &step.coupling;
    let (v, g, h) = (&step.v, &step.g, &step.h);
    let (z1, y1) = (&step.z_next, &step.y_next);
    let terms = [
        fc.lipschitz / 2.0 * (1.0 + 1.0 / t2) * (y1 - q).norm_squared(),
        v.dot(&(y1 - q)),
        t2 * v.dot(&(q - x_tilde)),
        t1 * v.dot(&(q - x_star)),
        tt * v.dot(&(q - y)),
        tt * h.dot(&(y1 - y)),
        t1 * h.dot(&(y1 - z1)),
        t1 * (g.dot(&(z1 - x_star)) - fc.sigma / 2.0 * (z1 - x_star).norm_squared()),
        t2 * h.dot(&(y1 - x_tilde)),
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// Checks the Katyusha supply-rate bound (`KAT.S1`) with exact expectations,
/// and that the supply rate's quadratic form equals minus the term-by-term
/// coupling sum for every index (`KAT.S18`).
pub fn check_katyusha_supply(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    trials: usize,
    seed: u64,
) -> Result<Vec<InequalityReport>> {
    let fc = *prob.function_class();
    if !prob.is_composite() {
        return Ok(vec![
            InequalityReport::skipped("KAT.S1", "requires a composite problem"),
            InequalityReport::skipped("KAT.S18", "requires a composite problem"),
        ]);
    }
    if prob.regularizer().modulus() < fc.sigma {
        let reason = "the regularizer must be sigma-strongly convex on its own";
        return Ok(vec![InequalityReport::skipped("KAT.S1", reason), InequalityReport::skipped("KAT.S18", reason)]);
    }
    let rate = katyusha_supply_rate(&fc, spec)?;
    let xs = prob.x_star();
    let n = prob.n();
    let l = fc.lipschitz;
    let mut bound = Tracker::new("KAT.S1", INEQUALITY_SLACK);
    let mut identity = Tracker::new("KAT.S18", IDENTITY_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let z = random_state(&mut rng, xs);
        let y = random_state(&mut rng, xs);
        let x_tilde = random_state(&mut rng, xs);
        let anchor_grad = prob.full_gradient(&x_tilde);
        let mut es = 0.0;
        let mut next_gap = 0.0;
        for i in 0..n {
            let step = katyusha_step(prob, spec, &z, &y, &x_tilde, &anchor_grad, i);
            let blocks = [&z - xs, &y - xs, &x_tilde - xs, step.v.clone(), step.g.clone(), step.h.clone()];
            let refs: Vec<&DVector<f64>> = blocks.iter().collect();
            let s = rate.evaluate(&refs)?;
            let (sum, magnitude) = coupling_terms(&fc, spec, xs, &y, &x_tilde, &step);
            identity.record((s + sum).abs() / magnitude.max(f64::MIN_POSITIVE));
            es += s / n as f64;
            next_gap += prob.suboptimality(&step.y_next) / n as f64;
        }
        let ctx = BoundContext {
            iterate_gap: prob.suboptimality(&y),
            anchor_gap: prob.suboptimality(&x_tilde),
            next_iterate_gap: next_gap,
            ..Default::default()
        };
        let dist = (&z - xs).norm_squared() + (&y - xs).norm_squared() + (&x_tilde - xs).norm_squared();
        let scale = l * (1.0f64).max(dist + prob.gradient_noise() / (l * l));
        bound.record((es - rate.bound.value(&ctx)) / scale);
    }
    Ok(vec![bound.finish(), identity.finish()])
}

/// Pathwise check of `V(ξ_{k+1}) - ρ²V(ξ_k) ≤ Σ λ_j S_j(ξ_k, w_k)` along a
/// recorded trace, normalized by `max(1, |V(ξ_{k+1})| + ρ²|V(ξ_k)| + Σ|λ_j S_j|)`.
pub fn check_dissipation_on_trace(trace: &EpochTrace, cert: &Certificate) -> Result<InequalityReport> {
    let inst = &cert.instance;
    let mut t = Tracker::new("DISS", DISSIPATION_SLACK);
    if trace.steps() == 0 {
        return Ok(t.finish());
    }
    let dx = inst.system.state_dim();
    let dw = inst.system.input_dim();
    if trace.state_blocks(0).len() != dx {
        return Err(Error::DimensionMismatch(format!(
            "trace state has {} blocks, certificate expects {dx}",
            trace.state_blocks(0).len()
        )));
    }
    if trace.inputs.len() != trace.steps() {
        return Err(Error::MissingTraceData(format!("{} inputs for {} steps", trace.inputs.len(), trace.steps())));
    }
    for k in 0..trace.steps() {
        let w = &trace.inputs[k];
        if w.len() != dw {
            return Err(Error::MissingTraceData(format!("step {k} records {} input blocks, expected {dw}", w.len())));
        }
        let xi = trace.state_blocks(k);
        let xi_next = trace.state_blocks(k + 1);
        let v_now = storage(&inst.pbar, &xi);
        let v_next = storage(&inst.pbar, &xi_next);
        let blocks: Vec<&DVector<f64>> = xi.iter().chain(w.iter()).collect();
        let mut supply = 0.0;
        let mut magnitude = v_next.abs() + inst.rho_sq * v_now.abs();
        for (rate, &lam) in inst.supply_rates.iter().zip(&inst.lambdas) {
            let s = lam * rate.evaluate(&blocks)?;
            supply += s;
            magnitude += s.abs();
        }
        t.record((v_next - inst.rho_sq * v_now - supply) / magnitude.max(1.0));
    }
    Ok(t.finish())
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Monte Carlo check of `E V(x̃^{s+1}) ≤ ν E V(x̃^s)` for every epoch `s`.
///
/// For each epoch the per-seed differences `V_{s+1} - ν V_s` must have a
/// sample mean within three standard errors of non-positive. The reported
/// violation is `(mean - 3·SE) / mean(V_s)`; the check passes when it is ≤ 0.
pub fn check_epoch_contraction(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x0: &DVector<f64>,
    epochs: usize,
    seeds: &[u64],
    nu: f64,
) -> Result<InequalityReport> {
    const NAME: &str = "CONTRACTION";
    if nu >= 1.0 {
        return Ok(InequalityReport::skipped(NAME, format!("nu = {nu} is not a contraction")));
    }
    if lyapunov(prob, spec.family, x0) == 0.0 {
        return Ok(InequalityReport::skipped(NAME, "starting point is optimal; ratios undefined"));
    }
    if seeds.is_empty() {
        return Ok(InequalityReport::skipped(NAME, "no seeds"));
    }
    let runs = seeds
        .iter()
        .map(|&seed| run_epochs(prob, spec, x0, epochs, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Tracker::new(NAME, 0.0);
    for s in 0..epochs {
        let before: Vec<f64> = runs.iter().map(|r| r[s].v_start).collect();
        let diffs: Vec<f64> = runs.iter().map(|r| r[s].v_end - nu * r[s].v_start).collect();
        let (mean_before, _) = mean_and_se(&before);
        if mean_before <= 0.0 {
            continue;
        }
        let (mean, se) = mean_and_se(&diffs);
        t.record((mean - 3.0 * se) / mean_before);
    }
    Ok(t.finish())
}

/// Mean epoch ratio `Σ V(x̃^{s+1}) / Σ V(x̃^s)` across seeds for the first epoch.
pub fn observed_contraction(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x0: &DVector<f64>,
    seeds: &[u64],
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &seed in seeds {
        let trace = run_epoch(prob, spec, x0, seed, 0)?;
        num += lyapunov(prob, spec.family, &trace.output);
        den += lyapunov(prob, spec.family, x0);
    }
    Ok(num / den)
}

/// Monte Carlo check of the one-step coupling inequality
///
/// ```text
/// c E‖z_{k+1} - x⋆‖² + a E D_{k+1} - cρ² E‖z_k - x⋆‖² - aτ̃ E D_k ≤ aτ₂ D̃
/// ```
///
/// with `(c, ρ², a)` from the standard Katyusha certificate, over one epoch
/// from `x_tilde` per seed. Passes when, at every step, the sample mean of the
/// per-path difference is at most three standard errors above zero.
pub fn check_katyusha_coupling(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x_tilde: &DVector<f64>,
    seeds: &[u64],
) -> Result<InequalityReport> {
    const NAME: &str = "KAT.COUPLING";
    let fc = *prob.function_class();
    let k = katyusha_certificate(&fc, spec, DEFAULT_TOL)?;
    if !k.certificate.verified {
        return Ok(InequalityReport::skipped(NAME, "the Katyusha certificate does not verify for these parameters"));
    }
    if seeds.is_empty() {
        return Ok(InequalityReport::skipped(NAME, "no seeds"));
    }
    let inst = &k.certificate.instance;
    let (c, rho_sq, a) = (inst.pbar[(0, 0)], inst.rho_sq, inst.lambdas[0]);
    let carry = 1.0 - spec.tau1 - spec.tau2;
    let xs = prob.x_star();
    let d_tilde = prob.suboptimality(x_tilde);
    let traces = seeds
        .iter()
        .map(|&seed| run_epoch(prob, spec, x_tilde, seed, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Tracker::new(NAME, 0.0);
    let scale = (c * (x_tilde - xs).norm_squared() + a * d_tilde).max(f64::MIN_POSITIVE);
    for step in 0..spec.m {
        let diffs: Vec<f64> = traces
            .iter()
            .map(|tr| {
                let (crate::optimizers::IterState::Katyusha { z, y }, crate::optimizers::IterState::Katyusha { z: z1, y: y1 }) =
                    (&tr.states[step], &tr.states[step + 1])
                else {
                    unreachable!("Katyusha traces hold Katyusha states")
                };
                c * (z1 - xs).norm_squared() + a * prob.suboptimality(y1)
                    - c * rho_sq * (z - xs).norm_squared()
                    - a * carry * prob.suboptimality(y)
                    - a * spec.tau2 * d_tilde
            })
            .collect();
        let (mean, se) = mean_and_se(&diffs);
        t.record((mean - 3.0 * se) / scale);
    }
    Ok(t.finish())
}

/// Families whose traces carry the inputs needed for [`check_dissipation_on_trace`].
pub fn traces_support_dissipation(family: MethodFamily) -> bool {
    matches!(family, MethodFamily::Sg | MethodFamily::SvrgOptionI | MethodFamily::SvrgOptionII | MethodFamily::Katyusha)
}
