//! SG, SVRG (Options I and II) and Katyusha, recording traces in the
//! state-space coordinates used by the certificates.
//!
//! Index sampling: every epoch `s` of a run seeded with `seed` draws from
//! stream `s` of a ChaCha8 generator keyed by `seed`. Epochs can therefore be
//! replayed on their own, and runs with different seeds share no state.

mod katyusha;
mod sg;
mod svrg;

pub use katyusha::{katyusha_step, run_katyusha_epoch, KatyushaStep};
pub use sg::run_sg;
pub use svrg::{run_svrg_epoch, SvrgOption};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::FunctionClass;
use crate::problems::FiniteSumProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodFamily {
    Sg,
    #[serde(alias = "svrg1")]
    SvrgOptionI,
    #[serde(rename = "svrg_option_ii", alias = "svrg2")]
    SvrgOptionII,
    Katyusha,
}

impl MethodFamily {
    /// Short CLI name.
    pub fn cli_name(self) -> &'static str {
        match self {
            MethodFamily::Sg => "sg",
            MethodFamily::SvrgOptionI => "svrg1",
            MethodFamily::SvrgOptionII => "svrg2",
            MethodFamily::Katyusha => "katyusha",
        }
    }

    pub fn from_cli_name(s: &str) -> Option<Self> {
        match s {
            "sg" => Some(MethodFamily::Sg),
            "svrg1" => Some(MethodFamily::SvrgOptionI),
            "svrg2" => Some(MethodFamily::SvrgOptionII),
            "katyusha" => Some(MethodFamily::Katyusha),
            _ => None,
        }
    }
}

impl std::fmt::Display for MethodFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

/// Method parameters. Fields that do not apply to a family are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub family: MethodFamily,
    /// Learning rate (SG, SVRG).
    #[serde(default)]
    pub eta: f64,
    /// Epoch length; for SG the number of steps per reported epoch.
    pub m: usize,
    #[serde(default)]
    pub tau1: f64,
    #[serde(default)]
    pub tau2: f64,
    /// Katyusha z-step size.
    #[serde(default)]
    pub alpha: f64,
    /// Katyusha y-step size.
    #[serde(default)]
    pub zeta: f64,
}

impl MethodSpec {
    pub fn sg(eta: f64, steps: usize) -> Result<Self> {
        Self { family: MethodFamily::Sg, eta, m: steps, tau1: 0.0, tau2: 0.0, alpha: 0.0, zeta: 0.0 }.validated()
    }

    pub fn svrg(option: SvrgOption, eta: f64, m: usize) -> Result<Self> {
        let family = match option {
            SvrgOption::I => MethodFamily::SvrgOptionI,
            SvrgOption::II => MethodFamily::SvrgOptionII,
        };
        Self { family, eta, m, tau1: 0.0, tau2: 0.0, alpha: 0.0, zeta: 0.0 }.validated()
    }

    pub fn katyusha(m: usize, tau1: f64, tau2: f64, alpha: f64, zeta: f64) -> Result<Self> {
        Self { family: MethodFamily::Katyusha, eta: 0.0, m, tau1, tau2, alpha, zeta }.validated()
    }

    /// The standard Katyusha parameters: `τ₂ = 1/2`,
    /// `τ₁ = min(√(mσ/3L), 1/2)`, `α = 1/(3τ₁L)`, `ζ = 1/(3L)`.
    pub fn katyusha_recipe(fc: &FunctionClass, m: usize) -> Result<Self> {
        let l = fc.lipschitz;
        let tau1 = (m as f64 * fc.sigma / (3.0 * l)).sqrt().min(0.5);
        Self::katyusha(m, tau1, 0.5, 1.0 / (3.0 * tau1 * l), 1.0 / (3.0 * l))
    }

    /// Checks the parameter invariants of the family.
    pub fn validated(self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidMethod(msg));
        if self.m == 0 {
            return bad("epoch length m must be at least 1".into());
        }
        match self.family {
            MethodFamily::Sg | MethodFamily::SvrgOptionI | MethodFamily::SvrgOptionII => {
                if !(self.eta.is_finite() && self.eta >= 0.0) {
                    return bad(format!("eta must be a non-negative number, got {}", self.eta));
                }
            }
            MethodFamily::Katyusha => {
                let finite = [self.tau1, self.tau2, self.alpha, self.zeta].iter().all(|v| v.is_finite());
                if !finite {
                    return bad("katyusha parameters must be finite".into());
                }
                if self.tau1 <= 0.0 {
                    return bad(format!("tau1 must be positive, got {}", self.tau1));
                }
                if self.tau2 < 0.0 {
                    return bad(format!("tau2 must be non-negative, got {}", self.tau2));
                }
                if self.tau1 + self.tau2 > 1.0 + 1e-12 {
                    return bad(format!("tau1 + tau2 must not exceed 1, got {}", self.tau1 + self.tau2));
                }
                if self.alpha <= 0.0 || self.zeta <= 0.0 {
                    return bad(format!("alpha and zeta must be positive, got {} and {}", self.alpha, self.zeta));
                }
            }
        }
        Ok(self)
    }

    /// Whether the step size lies in the range covered by the closed-form
    /// SVRG rates (`η < 1/L` for Option I, `η < 1/(2L)` for Option II).
    pub fn in_analysis_regime(&self, lipschitz: f64) -> bool {
        match self.family {
            MethodFamily::SvrgOptionI => self.eta > 0.0 && self.eta < 1.0 / lipschitz,
            MethodFamily::SvrgOptionII => self.eta > 0.0 && self.eta < 0.5 / lipschitz,
            MethodFamily::Sg => self.eta > 0.0 && self.eta < 1.0 / lipschitz,
            MethodFamily::Katyusha => true,
        }
    }
}

/// State of one step.
#[derive(Debug, Clone, PartialEq)]
pub enum IterState {
    /// `x_k` for SG and SVRG.
    Point(DVector<f64>),
    /// `(z_k, y_k)` for Katyusha.
    Katyusha { z: DVector<f64>, y: DVector<f64> },
}

impl IterState {
    /// The iterate the method reports: `x_k`, or `y_k` for Katyusha.
    pub fn iterate(&self) -> &DVector<f64> {
        match self {
            IterState::Point(x) => x,
            IterState::Katyusha { y, .. } => y,
        }
    }
}

/// One epoch (or, for SG, one run) of a method.
///
/// `inputs[k]` holds the blocks of `w_k`:
/// SG `[∇f_i(x_k)]`; SVRG `[∇f_i(x_k) - ∇f_i(x⋆), ∇f_i(x⋆) - ∇f_i(x̃) + ∇g(x̃)]`;
/// Katyusha `[v_k, g_k, h_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub family: MethodFamily,
    /// `x̃` (the starting point for SG).
    pub anchor: DVector<f64>,
    pub x_star: DVector<f64>,
    /// `steps + 1` states.
    pub states: Vec<IterState>,
    /// Sampled component indices, zero-based.
    pub indices: Vec<usize>,
    pub inputs: Vec<Vec<DVector<f64>>>,
    /// Katyusha coupling points `x_{k+1}` (the gradient query `q_k`); empty otherwise.
    pub couplings: Vec<DVector<f64>>,
    /// Epoch output `x̃⁺`.
    pub output: DVector<f64>,
}

impl EpochTrace {
    pub fn steps(&self) -> usize {
        self.indices.len()
    }

    /// Blocks of `ξ_k`: `[x_k - x⋆]`, or `[z_k - x⋆, y_k - x⋆, x̃ - x⋆]`.
    pub fn state_blocks(&self, k: usize) -> Vec<DVector<f64>> {
        match &self.states[k] {
            IterState::Point(x) => vec![x - &self.x_star],
            IterState::Katyusha { z, y } => {
                vec![z - &self.x_star, y - &self.x_star, &self.anchor - &self.x_star]
            }
        }
    }
}

/// Per-epoch record produced by [`run_epochs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    /// `V(x̃^s)`.
    pub v_start: f64,
    /// `V(x̃^{s+1})`.
    pub v_end: f64,
    pub anchor_norm: f64,
    pub output_norm: f64,
}

/// Lyapunov functional of each family: `‖x - x⋆‖²` for SG and Option I,
/// `g(x) - g(x⋆)` for Option II, `F(x) - F(x⋆)` for Katyusha.
pub fn lyapunov(prob: &FiniteSumProblem, family: MethodFamily, x: &DVector<f64>) -> f64 {
    match family {
        MethodFamily::Sg | MethodFamily::SvrgOptionI => (x - prob.x_star()).norm_squared(),
        MethodFamily::SvrgOptionII | MethodFamily::Katyusha => prob.suboptimality(x),
    }
}

pub(crate) fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Runs epoch number `epoch` of `spec` from `anchor`.
pub fn run_epoch(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    anchor: &DVector<f64>,
    seed: u64,
    epoch: usize,
) -> Result<EpochTrace> {
    let spec = spec.validated()?;
    if anchor.len() != prob.p() {
        return Err(Error::DimensionMismatch(format!(
            "starting point has dimension {}, problem has {}",
            anchor.len(),
            prob.p()
        )));
    }
    let mut rng = epoch_rng(seed, epoch);
    match spec.family {
        MethodFamily::Sg => Ok(sg::sg_with_rng(prob, spec.eta, anchor, spec.m, &mut rng)),
        MethodFamily::SvrgOptionI => Ok(svrg::svrg_with_rng(prob, spec.eta, spec.m, SvrgOption::I, anchor, &mut rng)),
        MethodFamily::SvrgOptionII => {
            Ok(svrg::svrg_with_rng(prob, spec.eta, spec.m, SvrgOption::II, anchor, &mut rng))
        }
        MethodFamily::Katyusha => katyusha::katyusha_with_rng(prob, &spec, anchor, &mut rng),
    }
}

/// Chains `num_epochs` epochs starting from `x0`, recording the family's
/// Lyapunov value at each anchor.
pub fn run_epochs(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x0: &DVector<f64>,
    num_epochs: usize,
    seed: u64,
) -> Result<Vec<EpochSummary>> {
    Ok(run_epochs_traced(prob, spec, x0, num_epochs, seed)?.0)
}

/// Like [`run_epochs`], also returning every epoch trace.
pub fn run_epochs_traced(
    prob: &FiniteSumProblem,
    spec: &MethodSpec,
    x0: &DVector<f64>,
    num_epochs: usize,
    seed: u64,
) -> Result<(Vec<EpochSummary>, Vec<EpochTrace>)> {
    if num_epochs == 0 {
        return Err(Error::InvalidMethod("num_epochs must be at least 1".into()));
    }
    let mut anchor = x0.clone();
    let mut summaries = Vec::with_capacity(num_epochs);
    let mut traces = Vec::with_capacity(num_epochs);
    for s in 0..num_epochs {
        let trace = run_epoch(prob, spec, &anchor, seed, s)?;
        summaries.push(EpochSummary {
            epoch: s,
            v_start: lyapunov(prob, spec.family, &anchor),
            v_end: lyapunov(prob, spec.family, &trace.output),
            anchor_norm: anchor.norm(),
            output_norm: trace.output.norm(),
        });
        anchor = trace.output.clone();
        traces.push(trace);
    }
    Ok((summaries, traces))
}
