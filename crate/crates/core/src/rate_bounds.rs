//! Closed-form epoch rates and the rates implied by verified certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{ComponentAssumption, FunctionClass};
use crate::lmi_engine::{katyusha_certificate, Certificate, DEFAULT_TOL};
use crate::optimizers::{MethodFamily, MethodSpec};

/// A named additive (or structural) part of a rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    pub name: String,
    pub value: f64,
}

/// Epochs and component-gradient evaluations needed to shrink the Lyapunov
/// value by `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub epsilon: f64,
    pub epochs: u64,
    pub gradients_per_epoch: u64,
    pub total_gradients: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub family: MethodFamily,
    /// Epoch contraction factor (per-step factor for SG).
    pub nu: f64,
    /// Per-step rate `ρ²` of the underlying certificate.
    pub rho_sq: f64,
    pub terms: Vec<RateTerm>,
    pub complexity: Option<Complexity>,
}

impl RateReport {
    fn new(family: MethodFamily, nu: f64, rho_sq: f64, terms: &[(&str, f64)]) -> Self {
        Self {
            family,
            nu,
            rho_sq,
            terms: terms.iter().map(|&(name, value)| RateTerm { name: name.into(), value }).collect(),
            complexity: None,
        }
    }

    pub fn contracting(&self) -> bool {
        self.nu < 1.0
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }

    /// Adds `⌈log(1/ε)/log(1/ν)⌉` epochs and the gradient count; left empty
    /// when `ν ≥ 1`.
    pub fn with_complexity(mut self, epsilon: f64, n: usize, m: usize) -> Self {
        self.complexity = epochs_needed(self.nu, epsilon).map(|epochs| {
            let per = gradients_per_epoch(self.family, n, m);
            Complexity { epsilon, epochs, gradients_per_epoch: per, total_gradients: epochs * per }
        });
        self
    }
}

/// `⌈log(1/ε) / log(1/ν)⌉`, or `None` when `ν ∉ (0, 1)` or `ε ∉ (0, 1)`.
pub fn epochs_needed(nu: f64, epsilon: f64) -> Option<u64> {
    if !(nu > 0.0 && nu < 1.0 && epsilon > 0.0 && epsilon < 1.0) {
        return None;
    }
    Some(((1.0 / epsilon).ln() / (1.0 / nu).ln()).ceil() as u64)
}

/// Component-gradient evaluations per epoch as implemented: one full gradient
/// (`n`) plus two component gradients per inner step for SVRG and Katyusha.
/// For SG an "epoch" is `m` single-gradient steps.
pub fn gradients_per_epoch(family: MethodFamily, n: usize, m: usize) -> u64 {
    match family {
        MethodFamily::Sg => m as u64,
        _ => (n + 2 * m) as u64,
    }
}

fn check_step(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::RateUndefined(format!("step size must be positive, got {eta}")))
    }
}

/// Plain SG: `E‖x_k - x⋆‖² ≤ ρ^{2k}‖x₀ - x⋆‖² + c · (1/n)Σ‖∇f_i(x⋆)‖²` with
/// `ρ² = 1 - 2σ(η - Lη²)` and `c = η/(σ(1 - Lη))`. `nu` holds `ρ²`.
pub fn sg_rate(fc: &FunctionClass, eta: f64) -> Result<RateReport> {
    check_step(eta)?;
    let (s, l) = (fc.sigma, fc.lipschitz);
    if eta * l >= 1.0 {
        return Err(Error::RateUndefined(format!("SG bound needs eta < 1/L = {}", 1.0 / l)));
    }
    let rho_sq = 1.0 - 2.0 * s * (eta - l * eta * eta);
    let residual = eta / (s * (1.0 - l * eta));
    Ok(RateReport::new(MethodFamily::Sg, rho_sq, rho_sq, &[("noise_coefficient", residual)]))
}

/// SVRG Option I: `ν = (1 - 2ησ(1 - ηL))^m + ηL²/(σ(1 - ηL))`.
pub fn svrg_i_rate(fc: &FunctionClass, eta: f64, m: usize) -> Result<RateReport> {
    check_step(eta)?;
    let (s, l) = (fc.sigma, fc.lipschitz);
    if eta * l >= 1.0 {
        return Err(Error::RateUndefined(format!("Option I rate needs eta < 1/L = {}", 1.0 / l)));
    }
    let rho_sq = 1.0 - 2.0 * eta * s * (1.0 - eta * l);
    let power = rho_sq.powi(m as i32);
    let residual = eta * l * l / (s * (1.0 - eta * l));
    Ok(RateReport::new(MethodFamily::SvrgOptionI, power + residual, rho_sq, &[("power", power), ("residual", residual)]))
}

/// SVRG Option I with smooth-only components:
/// `ν = (1 - 2ση + 2L²η²)^m + ηL²/(σ - ηL²)`.
pub fn svrg_i_rate_smooth_only(fc: &FunctionClass, eta: f64, m: usize) -> Result<RateReport> {
    check_step(eta)?;
    let (s, l) = (fc.sigma, fc.lipschitz);
    if s - eta * l * l <= 0.0 {
        return Err(Error::RateUndefined(format!("smooth-only rate needs eta < sigma/L^2 = {}", s / (l * l))));
    }
    let rho_sq = 1.0 - 2.0 * s * eta + 2.0 * l * l * eta * eta;
    let power = rho_sq.powi(m as i32);
    let residual = eta * l * l / (s - eta * l * l);
    Ok(RateReport::new(MethodFamily::SvrgOptionI, power + residual, rho_sq, &[("power", power), ("residual", residual)]))
}

/// SVRG Option II for general multipliers:
/// `ν = (σ⁻¹ + mLλ₂) / ((λ₃ - Lλ₁)m)`.
pub fn svrg_ii_rate(fc: &FunctionClass, m: usize, lambdas: [f64; 3]) -> Result<RateReport> {
    let (s, l) = (fc.sigma, fc.lipschitz);
    let [l1, l2, l3] = lambdas;
    let denom = l3 - l * l1;
    if denom <= 0.0 {
        return Err(Error::RateUndefined(format!("Option II rate needs lambda3 - L*lambda1 > 0, got {denom}")));
    }
    if m == 0 {
        return Err(Error::RateUndefined("epoch length must be positive".into()));
    }
    let start = 1.0 / (s * denom * m as f64);
    let variance = l * l2 / denom;
    Ok(RateReport::new(MethodFamily::SvrgOptionII, start + variance, 1.0, &[("start", start), ("variance", variance)]))
}

/// The standard Option II multipliers `λ = (2η², 2η², η)`.
pub fn svrg_ii_standard_lambdas(eta: f64) -> [f64; 3] {
    [2.0 * eta * eta, 2.0 * eta * eta, eta]
}

/// Option II closed form `1/(mση(1 - 2Lη)) + 2Lη/(1 - 2Lη)`.
pub fn svrg_ii_closed_form(fc: &FunctionClass, eta: f64, m: usize) -> Result<f64> {
    check_step(eta)?;
    let (s, l) = (fc.sigma, fc.lipschitz);
    let q = 1.0 - 2.0 * l * eta;
    if q <= 0.0 {
        return Err(Error::RateUndefined(format!("Option II closed form needs eta < 1/(2L) = {}", 0.5 / l)));
    }
    Ok(1.0 / (m as f64 * s * eta * q) + 2.0 * l * eta / q)
}

/// Telescoped Katyusha epoch bound.
///
/// With `θ = 1/ρ²`, `W = Σ_{j<m} θ^j`, `τ̃ = 1 - τ₁ - τ₂` and a certificate
/// `P̄ = c e₁e₁ᵀ`, multiplier `a`, summing `θ^k` times the one-step bound
///
/// ```text
/// c‖z_{k+1} - x⋆‖² + a D_{k+1} ≤ cρ²‖z_k - x⋆‖² + a(τ̃ D_k + τ₂ D̃),   D = F(y) - F⋆
/// ```
///
/// over `k < m`, using `D₀ = D̃` (since `y₀ = x̃`) and convexity for the
/// `θ^j`-weighted output, gives
///
/// ```text
/// a(1 - τ̃θ) W D⁺ + cθ^{m-1}‖z_m - x⋆‖² ≤ (a(τ₂W + τ̃) + 2cρ²/σ) D̃
/// ```
///
/// where `‖x̃ - x⋆‖² ≤ (2/σ) D̃` was used. Hence
/// `ν = (a(τ₂W + τ̃) + 2cρ²/σ) / (a(1 - τ̃θ)W)`, valid when `τ̃θ < 1`.
/// The output weights of the optimizer are `(1 + σ_ψα)^j`, so the bound
/// applies to runs with `1/ρ² = 1 + σ_ψα`.
pub fn katyusha_rate_from_certificate(
    fc: &FunctionClass,
    spec: &MethodSpec,
    cert: &Certificate,
) -> Result<RateReport> {
    if !cert.verified {
        return Err(Error::NotCertified(cert.failures.join("; ")));
    }
    let inst = &cert.instance;
    let c = inst.pbar[(0, 0)];
    let a = inst.lambdas.first().copied().ok_or_else(|| Error::DimensionMismatch("no multiplier".into()))?;
    let rho_sq = inst.rho_sq;
    if !(rho_sq > 0.0 && a > 0.0) {
        return Err(Error::RateUndefined("Katyusha telescoping needs rho^2 > 0 and a positive multiplier".into()));
    }
    let theta = 1.0 / rho_sq;
    let m = spec.m;
    let carry = 1.0 - spec.tau1 - spec.tau2;
    let weight_sum: f64 = (0..m).map(|j| theta.powi(j as i32)).sum();
    let shrink = 1.0 - carry * theta;
    if shrink <= 0.0 {
        return Err(Error::RateUndefined(format!("telescoping needs (1 - tau1 - tau2)(1/rho^2) < 1, got {}", carry * theta)));
    }
    let numerator = a * (spec.tau2 * weight_sum + carry) + 2.0 * c * rho_sq / fc.sigma;
    let denominator = a * shrink * weight_sum;
    Ok(RateReport::new(
        MethodFamily::Katyusha,
        numerator / denominator,
        rho_sq,
        &[
            ("growth", theta),
            ("telescoped_weight", theta.powi(m as i32)),
            ("weight_sum", weight_sum),
            ("numerator", numerator),
            ("denominator", denominator),
        ],
    ))
}

/// Katyusha epoch rate from the standard certificate; fails when that
/// certificate does not verify for `spec`.
pub fn katyusha_epoch_rate(fc: &FunctionClass, spec: &MethodSpec) -> Result<RateReport> {
    let k = katyusha_certificate(fc, spec, DEFAULT_TOL)?;
    katyusha_rate_from_certificate(fc, spec, &k.certificate)
}

/// Epoch factor implied by a verified certificate of `spec`'s family.
///
/// Option I: `ν = ρ^{2m} + λ₁L²/(c(1 - ρ²))` with `P̄ = c`.
/// Option II: `ν = (c/σ + mLλ₂)/((λ₃ - Lλ₁)m)`. This uses the sharp bound
/// `E S₃ ≤ -2(g(x_k) - g⋆)` that follows from convexity of `g`.
pub fn nu_from_certificate(fc: &FunctionClass, spec: &MethodSpec, cert: &Certificate) -> Result<f64> {
    if !cert.verified {
        return Err(Error::NotCertified(cert.failures.join("; ")));
    }
    let inst = &cert.instance;
    let l = fc.lipschitz;
    match spec.family {
        MethodFamily::Sg => Err(Error::RateUndefined("SG has no epoch rate".into())),
        MethodFamily::SvrgOptionI => {
            let c = inst.pbar[(0, 0)];
            if inst.rho_sq >= 1.0 || c <= 0.0 {
                return Err(Error::RateUndefined("Option I rate needs rho^2 < 1 and P > 0".into()));
            }
            Ok(inst.rho_sq.powi(spec.m as i32) + inst.lambdas[0] * l * l / (c * (1.0 - inst.rho_sq)))
        }
        MethodFamily::SvrgOptionII => {
            let c = inst.pbar[(0, 0)];
            let denom = inst.lambdas[2] - l * inst.lambdas[0];
            if denom <= 0.0 {
                return Err(Error::RateUndefined("Option II rate needs lambda3 - L*lambda1 > 0".into()));
            }
            Ok((c / fc.sigma + spec.m as f64 * l * inst.lambdas[1]) / (denom * spec.m as f64))
        }
        MethodFamily::Katyusha => Ok(katyusha_rate_from_certificate(fc, spec, cert)?.nu),
    }
}

/// The closed-form rate matching the family and function class of `spec`.
pub fn closed_form_rate(fc: &FunctionClass, spec: &MethodSpec) -> Result<RateReport> {
    match spec.family {
        MethodFamily::Sg => sg_rate(fc, spec.eta),
        MethodFamily::SvrgOptionI => match fc.component_assumption {
            ComponentAssumption::SmoothOnly => svrg_i_rate_smooth_only(fc, spec.eta, spec.m),
            _ => svrg_i_rate(fc, spec.eta, spec.m),
        },
        MethodFamily::SvrgOptionII => svrg_ii_rate(fc, spec.m, svrg_ii_standard_lambdas(spec.eta)),
        MethodFamily::Katyusha => katyusha_epoch_rate(fc, spec),
    }
}
