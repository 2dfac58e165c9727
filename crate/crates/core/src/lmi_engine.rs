//! Assembly, verification and search of the dissipation LMI
//!
//! ```text
//! [ĀᵀP̄Ā - ρ²P̄, ĀᵀP̄B̄; B̄ᵀP̄Ā, B̄ᵀP̄B̄] - Σ λ_j X̄_j ⪯ 0
//! ```
//!
//! in reduced form. Since `(M ⊗ I_p)` has the spectrum of `M`, feasibility of
//! the reduced matrix is equivalent to feasibility of the lifted one.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{ComponentAssumption, FunctionClass};
use crate::linalg::{matrix_rows, symmetric_eigen};
use crate::optimizers::{MethodFamily, MethodSpec};
use crate::rate_bounds;
use crate::supply_rates::{
    katyusha_supply_rate, sg_supply_rates, supply_rates_for, svrg_i_supply_rates, svrg_ii_supply_rates,
    MultiplierSign, SupplyRate,
};

/// Default tolerance on the largest LMI eigenvalue.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Slack allowed on `P̄ ⪰ 0` and on non-negative multipliers.
pub const SIGN_SLACK: f64 = 1e-12;

/// Reduced state-space matrices `ξ_{k+1} = Āξ_k + B̄w_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMatrices {
    #[serde(with = "matrix_rows")]
    pub abar: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub bbar: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn new(abar: DMatrix<f64>, bbar: DMatrix<f64>) -> Result<Self> {
        if !abar.is_square() || bbar.nrows() != abar.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                abar.nrows(),
                abar.ncols(),
                bbar.nrows(),
                bbar.ncols()
            )));
        }
        Ok(Self { abar, bbar })
    }

    /// `Ā = 1`, `B̄ = -η`.
    pub fn sg(eta: f64) -> Self {
        Self { abar: DMatrix::identity(1, 1), bbar: DMatrix::from_element(1, 1, -eta) }
    }

    /// `Ā = 1`, `B̄ = [-η, -η]`.
    pub fn svrg(eta: f64) -> Self {
        Self { abar: DMatrix::identity(1, 1), bbar: DMatrix::from_row_slice(1, 2, &[-eta, -eta]) }
    }

    /// State `(z, y, x̃)`, input `(v, g, h)`.
    pub fn katyusha(spec: &MethodSpec) -> Self {
        let (t1, t2, a, z) = (spec.tau1, spec.tau2, spec.alpha, spec.zeta);
        let tt = 1.0 - t1 - t2;
        Self {
            abar: DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, t1, tt, t2, 0.0, 0.0, 1.0]),
            bbar: DMatrix::from_row_slice(3, 3, &[-a, -a, 0.0, -z, 0.0, -z, 0.0, 0.0, 0.0]),
        }
    }

    pub fn for_method(spec: &MethodSpec) -> Self {
        match spec.family {
            MethodFamily::Sg => Self::sg(spec.eta),
            MethodFamily::SvrgOptionI | MethodFamily::SvrgOptionII => Self::svrg(spec.eta),
            MethodFamily::Katyusha => Self::katyusha(spec),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.abar.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.bbar.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiInstance {
    pub system: SystemMatrices,
    pub supply_rates: Vec<SupplyRate>,
    pub rho_sq: f64,
    #[serde(with = "matrix_rows")]
    pub pbar: DMatrix<f64>,
    pub lambdas: Vec<f64>,
}

impl LmiInstance {
    fn check_dims(&self) -> Result<()> {
        let (dx, dw) = (self.system.state_dim(), self.system.input_dim());
        if self.pbar.nrows() != dx || self.pbar.ncols() != dx {
            return Err(Error::DimensionMismatch(format!("P is {}x{}, state has dimension {dx}", self.pbar.nrows(), self.pbar.ncols())));
        }
        if self.lambdas.len() != self.supply_rates.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} multipliers for {} supply rates",
                self.lambdas.len(),
                self.supply_rates.len()
            )));
        }
        if let Some(bad) = self.supply_rates.iter().find(|r| r.dim() != dx + dw) {
            return Err(Error::DimensionMismatch(format!("{} has dimension {}, expected {}", bad.name, bad.dim(), dx + dw)));
        }
        Ok(())
    }
}

/// The reduced left-hand side. A negative free multiplier needs no special
/// handling: `λX̄ = (-λ)(-X̄)`.
pub fn assemble_lhs(instance: &LmiInstance) -> Result<DMatrix<f64>> {
    instance.check_dims()?;
    let SystemMatrices { abar, bbar } = &instance.system;
    let p = &instance.pbar;
    let (dx, dw) = (abar.nrows(), bbar.ncols());
    let mut lhs = DMatrix::zeros(dx + dw, dx + dw);
    let pa = p * abar;
    let pb = p * bbar;
    lhs.view_mut((0, 0), (dx, dx)).copy_from(&(abar.transpose() * &pa - p * instance.rho_sq));
    lhs.view_mut((0, dx), (dx, dw)).copy_from(&(abar.transpose() * &pb));
    lhs.view_mut((dx, 0), (dw, dx)).copy_from(&(bbar.transpose() * &pa));
    lhs.view_mut((dx, dx), (dw, dw)).copy_from(&(bbar.transpose() * &pb));
    for (rate, &lam) in instance.supply_rates.iter().zip(&instance.lambdas) {
        lhs -= &rate.xbar * lam;
    }
    // exact symmetry despite rounding in the products
    Ok((&lhs + lhs.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub instance: LmiInstance,
    #[serde(with = "matrix_rows")]
    pub lhs: DMatrix<f64>,
    pub lhs_max_eig: f64,
    pub tolerance: f64,
    pub verified: bool,
    /// Epoch factor `ν` implied by the certificate, when the family has one.
    pub derived_rate: Option<f64>,
    /// Reasons for rejection; empty when verified.
    pub failures: Vec<String>,
}

fn block_labels(dim: usize) -> Vec<&'static str> {
    match dim {
        2 => vec!["x", "w"],
        3 => vec!["x", "r", "u"],
        6 => vec!["z", "y", "x_tilde", "v", "g", "h"],
        _ => Vec::new(),
    }
}

/// Checks an instance: largest LHS eigenvalue against `tol`, `P̄ ⪰ 0`, `ρ² ∈ [0, 1]`,
/// and the sign of every non-negative multiplier.
pub fn verify_certificate(instance: &LmiInstance, tol: f64) -> Result<Certificate> {
    let lhs = assemble_lhs(instance)?;
    let eig = symmetric_eigen(&lhs)?;
    let lhs_max_eig = eig.max();
    let mut failures = Vec::new();
    if lhs_max_eig > tol {
        let top = eig.eigenvectors.column(eig.eigenvalues.len() - 1);
        let labels = block_labels(lhs.nrows());
        let support: Vec<String> = (0..top.len())
            .filter(|&i| top[i].abs() > 0.1)
            .map(|i| labels.get(i).map_or_else(|| i.to_string(), |s| s.to_string()))
            .collect();
        failures.push(format!(
            "LMI has positive eigenvalue {lhs_max_eig:.6e} > {tol:e}, eigenvector on blocks [{}]",
            support.join(", ")
        ));
    }
    let p_min = symmetric_eigen(&instance.pbar)?.min();
    if p_min < -SIGN_SLACK {
        failures.push(format!("P is not positive semidefinite (smallest eigenvalue {p_min:.6e})"));
    }
    if !(0.0..=1.0).contains(&instance.rho_sq) {
        failures.push(format!("rho^2 = {} outside [0, 1]", instance.rho_sq));
    }
    for (rate, &lam) in instance.supply_rates.iter().zip(&instance.lambdas) {
        if rate.multiplier_sign == MultiplierSign::NonNegative && lam < -SIGN_SLACK {
            failures.push(format!("multiplier for {} is negative ({lam:.6e})", rate.name));
        }
    }
    Ok(Certificate {
        instance: instance.clone(),
        lhs,
        lhs_max_eig,
        tolerance: tol,
        verified: failures.is_empty(),
        derived_rate: None,
        failures,
    })
}

fn with_rate(mut cert: Certificate, fc: &FunctionClass, spec: &MethodSpec) -> Certificate {
    if cert.verified {
        cert.derived_rate = rate_bounds::nu_from_certificate(fc, spec, &cert).ok();
    }
    cert
}

/// SG with `P̄ = 1`, `λ = (η - Lη², η²)`, `ρ² = 1 - 2σλ₁`; the LHS is zero.
pub fn sg_certificate(fc: &FunctionClass, eta: f64, tol: f64) -> Result<Certificate> {
    let l1 = eta - fc.lipschitz * eta * eta;
    let instance = LmiInstance {
        system: SystemMatrices::sg(eta),
        supply_rates: sg_supply_rates(fc)?,
        rho_sq: 1.0 - 2.0 * l1 * fc.sigma,
        pbar: DMatrix::identity(1, 1),
        lambdas: vec![l1, eta * eta],
    };
    verify_certificate(&instance, tol)
}

/// SVRG Option I with `P̄ = 1`.
///
/// Convex components: `λ = (2η², η - Lη², η², Lη²)`, `ρ² = 1 - 2σ(η - Lη²)`.
/// Smooth-only components: `λ = (2η², η, η², 0)`, `ρ² = 1 - 2ση + 2L²η²`.
/// Both leave `[[0,0,0],[0,-η²,η²],[0,η²,-η²]]`.
pub fn svrg_i_certificate(fc: &FunctionClass, eta: f64, m: usize, tol: f64) -> Result<Certificate> {
    let (s, l) = (fc.sigma, fc.lipschitz);
    let e2 = eta * eta;
    let (lambdas, rho_sq) = match fc.component_assumption {
        ComponentAssumption::SmoothOnly => (vec![2.0 * e2, eta, e2, 0.0], 1.0 - 2.0 * s * eta + 2.0 * l * l * e2),
        _ => (vec![2.0 * e2, eta - l * e2, e2, l * e2], 1.0 - 2.0 * s * (eta - l * e2)),
    };
    let instance = LmiInstance {
        system: SystemMatrices::svrg(eta),
        supply_rates: svrg_i_supply_rates(fc)?,
        rho_sq,
        pbar: DMatrix::identity(1, 1),
        lambdas,
    };
    let spec = MethodSpec::svrg(crate::optimizers::SvrgOption::I, eta, m)?;
    Ok(with_rate(verify_certificate(&instance, tol)?, fc, &spec))
}

/// SVRG Option II with `P̄ = 1`, `ρ = 1`, `λ = (2η², 2η², η)`.
pub fn svrg_ii_certificate(fc: &FunctionClass, eta: f64, m: usize, tol: f64) -> Result<Certificate> {
    let e2 = eta * eta;
    let instance = LmiInstance {
        system: SystemMatrices::svrg(eta),
        supply_rates: svrg_ii_supply_rates(fc)?,
        rho_sq: 1.0,
        pbar: DMatrix::identity(1, 1),
        lambdas: vec![2.0 * e2, 2.0 * e2, eta],
    };
    let spec = MethodSpec::svrg(crate::optimizers::SvrgOption::II, eta, m)?;
    Ok(with_rate(verify_certificate(&instance, tol)?, fc, &spec))
}

/// Katyusha certificate together with the closed-form feasibility test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatyushaCertificate {
    pub certificate: Certificate,
    /// `τ₁ ≤ (5τ₂ - 1)/(9αLτ₂)`; `None` outside its domain
    /// (`τ₂ < 1/5` or `ζ ≠ 1/(3L)`).
    pub predicate: Option<bool>,
    /// `(5τ₂ - 1)/(9αLτ₂) - τ₁`.
    pub margin: Option<f64>,
}

impl KatyushaCertificate {
    /// Whether the closed-form test and the eigenvalue check disagree.
    pub fn disagrees(&self) -> bool {
        self.predicate.is_some_and(|p| p != self.certificate.verified)
    }
}

/// Katyusha with `P̄ = ((1+ασ)/2) e₁e₁ᵀ`, `ρ² = 1/(1+ασ)`, `λ₁ = α/τ₁`.
pub fn katyusha_certificate(fc: &FunctionClass, spec: &MethodSpec, tol: f64) -> Result<KatyushaCertificate> {
    let rate = katyusha_supply_rate(fc, spec)?;
    let (s, l) = (fc.sigma, fc.lipschitz);
    let (t1, t2, a, z) = (spec.tau1, spec.tau2, spec.alpha, spec.zeta);
    let mut pbar = DMatrix::zeros(3, 3);
    pbar[(0, 0)] = (1.0 + a * s) / 2.0;
    let instance = LmiInstance {
        system: SystemMatrices::katyusha(spec),
        supply_rates: vec![rate],
        rho_sq: 1.0 / (1.0 + a * s),
        pbar,
        lambdas: vec![a / t1],
    };
    let certificate = with_rate(verify_certificate(&instance, tol)?, fc, spec);
    let standard_zeta = (z * 3.0 * l - 1.0).abs() <= 1e-12;
    let (predicate, margin) = if standard_zeta && t2 >= 0.2 {
        let bound = (5.0 * t2 - 1.0) / (9.0 * a * l * t2);
        (Some(t1 <= bound), Some(bound - t1))
    } else {
        (None, None)
    };
    Ok(KatyushaCertificate { certificate, predicate, margin })
}

/// The closed-form certificate of a method.
pub fn analytic_certificate(fc: &FunctionClass, spec: &MethodSpec, tol: f64) -> Result<Certificate> {
    let spec = spec.validated()?;
    match spec.family {
        MethodFamily::Sg => sg_certificate(fc, spec.eta, tol),
        MethodFamily::SvrgOptionI => svrg_i_certificate(fc, spec.eta, spec.m, tol),
        MethodFamily::SvrgOptionII => svrg_ii_certificate(fc, spec.eta, spec.m, tol),
        MethodFamily::Katyusha => Ok(katyusha_certificate(fc, &spec, tol)?.certificate),
    }
}

/// Parametric family of storage matrices explored by the search. The LMI is
/// homogeneous in `(P̄, λ)`, so each family fixes the scale of `P̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PFamily {
    /// `P̄ = I`.
    ScaledIdentity,
    /// `P̄ = e₁e₁ᵀ`.
    KatyushaFirstBlock,
    /// `P̄ = LLᵀ / tr(LLᵀ)` for lower-triangular `L`; state dimension ≤ 3.
    FullSymmetric,
}

impl PFamily {
    pub fn default_for(family: MethodFamily) -> Self {
        match family {
            MethodFamily::Katyusha => PFamily::KatyushaFirstBlock,
            _ => PFamily::ScaledIdentity,
        }
    }

    fn num_params(self, dx: usize) -> usize {
        match self {
            PFamily::FullSymmetric => dx * (dx + 1) / 2,
            _ => 0,
        }
    }

    fn initial_params(self, dx: usize) -> Vec<f64> {
        match self {
            PFamily::FullSymmetric => {
                let mut v = Vec::with_capacity(dx * (dx + 1) / 2);
                for i in 0..dx {
                    for j in 0..=i {
                        v.push(if i == j { 1.0 } else { 0.0 });
                    }
                }
                v
            }
            _ => Vec::new(),
        }
    }

    fn matrix(self, dx: usize, params: &[f64]) -> DMatrix<f64> {
        match self {
            PFamily::ScaledIdentity => DMatrix::identity(dx, dx),
            PFamily::KatyushaFirstBlock => {
                let mut p = DMatrix::zeros(dx, dx);
                p[(0, 0)] = 1.0;
                p
            }
            PFamily::FullSymmetric => {
                let mut low = DMatrix::zeros(dx, dx);
                let mut it = params.iter();
                for i in 0..dx {
                    for j in 0..=i {
                        low[(i, j)] = *it.next().expect("parameter count");
                    }
                }
                let p = &low * low.transpose();
                let tr = p.trace();
                if tr > 0.0 {
                    p / tr
                } else {
                    DMatrix::identity(dx, dx) / dx as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub tol: f64,
    /// Maximum number of LMI evaluations.
    pub max_evaluations: usize,
    pub seed: u64,
    /// Starting multiplier vectors tried before the generic ones.
    pub hints: Vec<Vec<f64>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_evaluations: 20_000, seed: 0, hints: Vec::new() }
    }
}

/// Result of a heuristic search. `NotFound` never proves infeasibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchOutcome {
    Certified { certificate: Certificate, evaluations: usize },
    NotFound { best: Certificate, evaluations: usize },
}

impl SearchOutcome {
    pub fn certificate(&self) -> &Certificate {
        match self {
            SearchOutcome::Certified { certificate, .. } => certificate,
            SearchOutcome::NotFound { best, .. } => best,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, SearchOutcome::Certified { .. })
    }
}

struct Objective<'a> {
    system: &'a SystemMatrices,
    rates: &'a [SupplyRate],
    rho_sq: f64,
    family: PFamily,
    evaluations: usize,
}

impl Objective<'_> {
    fn split<'b>(&self, x: &'b [f64]) -> (&'b [f64], &'b [f64]) {
        x.split_at(self.rates.len())
    }

    fn instance(&self, x: &[f64]) -> LmiInstance {
        let (lambdas, params) = self.split(x);
        LmiInstance {
            system: self.system.clone(),
            supply_rates: self.rates.to_vec(),
            rho_sq: self.rho_sq,
            pbar: self.family.matrix(self.system.state_dim(), params),
            lambdas: lambdas.to_vec(),
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (v, rate) in x.iter_mut().zip(self.rates) {
            if rate.multiplier_sign == MultiplierSign::NonNegative && *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        match assemble_lhs(&self.instance(x)).and_then(|lhs| symmetric_eigen(&lhs)) {
            Ok(eig) => eig.max(),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Minimizes the largest LMI eigenvalue over the multipliers (and the
/// parameters of `p_family`) at fixed `ρ²`.
///
/// The objective is convex in the multipliers, so a projected pattern search
/// over coordinate and random directions is used, started from the hints, from
/// zero and from a small uniform point. Evaluation order is fixed, making the
/// result deterministic in `options.seed`.
pub fn search_certificate(
    system: &SystemMatrices,
    supply_rates: &[SupplyRate],
    rho_sq: f64,
    p_family: PFamily,
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    if !(0.0..=1.0).contains(&rho_sq) {
        return Err(Error::InvalidMethod(format!("rho^2 must lie in [0, 1], got {rho_sq}")));
    }
    let dx = system.state_dim();
    if p_family == PFamily::FullSymmetric && dx > 3 {
        return Err(Error::DimensionMismatch("full symmetric P is limited to state dimension 3".into()));
    }
    let k = supply_rates.len();
    let dim = k + p_family.num_params(dx);
    let mut obj = Objective { system, rates: supply_rates, rho_sq, family: p_family, evaluations: 0 };
    // validate dimensions once up front
    obj.instance(&vec![0.0; dim]).check_dims()?;

    let p0 = p_family.initial_params(dx);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for hint in &options.hints {
        if hint.len() == k {
            starts.push(hint.iter().copied().chain(p0.iter().copied()).collect());
        }
    }
    starts.push(std::iter::repeat_n(0.0, k).chain(p0.iter().copied()).collect());
    starts.push(std::iter::repeat_n(1e-2, k).chain(p0.iter().copied()).collect());

    let mut best_x = Vec::new();
    let mut best_f = f64::INFINITY;
    for mut s in starts {
        obj.project(&mut s);
        let f = obj.value(&s);
        if f < best_f {
            best_f = f;
            best_x = s;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let scale = best_x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = (0.5 * scale).max(1e-2);
    while best_f > options.tol && obj.evaluations < options.max_evaluations && step > 1e-16 {
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4 * dim);
        for i in 0..dim {
            for sgn in [1.0, -1.0] {
                let mut d = vec![0.0; dim];
                d[i] = sgn;
                dirs.push(d);
            }
        }
        for _ in 0..2 * dim {
            let d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            dirs.push(d.into_iter().map(|v| v / norm).collect());
        }
        let mut improved = false;
        for d in dirs {
            if obj.evaluations >= options.max_evaluations {
                break;
            }
            let mut cand: Vec<f64> = best_x.iter().zip(&d).map(|(x, d)| x + step * d).collect();
            obj.project(&mut cand);
            let f = obj.value(&cand);
            if f < best_f {
                best_f = f;
                best_x = cand;
                improved = true;
                if best_f <= options.tol {
                    break;
                }
            }
        }
        if improved {
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }

    let certificate = verify_certificate(&obj.instance(&best_x), options.tol)?;
    let evaluations = obj.evaluations;
    Ok(if certificate.verified {
        SearchOutcome::Certified { certificate, evaluations }
    } else {
        SearchOutcome::NotFound { best: certificate, evaluations }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bisection {
    /// Smallest `ρ²` certified, to within `tol_rho` of the boundary found.
    pub rho_sq: f64,
    pub certificate: Certificate,
    pub iterations: usize,
}

/// Bisection on `ρ²` over `[0, 1]`.
///
/// Sound because the LHS depends on `ρ²` only through `-ρ²P̄` with `P̄ ⪰ 0`:
/// any certificate at `ρ²` also certifies every larger `ρ²`. Each step warm
/// starts from the multipliers of the last success.
pub fn bisect_rate(
    system: &SystemMatrices,
    supply_rates: &[SupplyRate],
    p_family: PFamily,
    tol_rho: f64,
    options: &SearchOptions,
) -> Result<Bisection> {
    if tol_rho <= 0.0 {
        return Err(Error::InvalidMethod("tol_rho must be positive".into()));
    }
    let top = search_certificate(system, supply_rates, 1.0, p_family, options)?;
    let SearchOutcome::Certified { certificate: mut best, .. } = top else {
        return Err(Error::NotCertified("no certificate found even at rho^2 = 1".into()));
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut iterations = 0;
    while hi - lo > tol_rho {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let mut opts = options.clone();
        opts.hints.insert(0, best.instance.lambdas.clone());
        match search_certificate(system, supply_rates, mid, p_family, &opts)? {
            SearchOutcome::Certified { certificate, .. } => {
                hi = mid;
                best = certificate;
            }
            SearchOutcome::NotFound { .. } => lo = mid,
        }
    }
    Ok(Bisection { rho_sq: hi, certificate: best, iterations })
}

/// Assembles the instance of a method with given `(P̄, ρ², λ)`.
pub fn method_instance(
    fc: &FunctionClass,
    spec: &MethodSpec,
    pbar: DMatrix<f64>,
    rho_sq: f64,
    lambdas: Vec<f64>,
) -> Result<LmiInstance> {
    let instance = LmiInstance {
        system: SystemMatrices::for_method(spec),
        supply_rates: supply_rates_for(fc, spec)?,
        rho_sq,
        pbar,
        lambdas,
    };
    instance.check_dims()?;
    Ok(instance)
}

/// `V(ξ) = ξᵀ(P̄ ⊗ I)ξ` on stacked state blocks.
pub fn storage(pbar: &DMatrix<f64>, blocks: &[DVector<f64>]) -> f64 {
    let refs: Vec<&DVector<f64>> = blocks.iter().collect();
    crate::linalg::block_quadratic_form(pbar, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::SvrgOption;

    fn fc(s: f64, l: f64) -> FunctionClass {
        FunctionClass::smooth_convex(s, l).unwrap()
    }

    #[test]
    fn sg_closed_form_certificate_is_zero_matrix() {
        let cert = sg_certificate(&fc(1.0, 10.0), 0.05, DEFAULT_TOL).unwrap();
        assert!(cert.verified);
        assert!(cert.lhs.amax() < 1e-15);
        assert!((cert.instance.rho_sq - 0.95).abs() < 1e-15);
    }

    #[test]
    fn svrg_closed_form_matrices() {
        let eta = 0.01;
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 1.0, -1.0]) * (eta * eta);
        for cert in [
            svrg_i_certificate(&fc(0.1, 1.0), eta, 100, DEFAULT_TOL).unwrap(),
            svrg_ii_certificate(&fc(0.1, 1.0), eta, 100, DEFAULT_TOL).unwrap(),
        ] {
            assert!(cert.verified);
            assert!((&cert.lhs - &expected).amax() < 1e-14);
            assert!(cert.lhs_max_eig <= 1e-12);
        }
    }

    #[test]
    fn no_supply_rates_gives_plain_products() {
        let system = SystemMatrices::katyusha(&MethodSpec::katyusha(5, 0.3, 0.4, 0.5, 0.2).unwrap());
        let instance = LmiInstance {
            system: system.clone(),
            supply_rates: Vec::new(),
            rho_sq: 1.0,
            pbar: DMatrix::identity(3, 3),
            lambdas: Vec::new(),
        };
        let lhs = assemble_lhs(&instance).unwrap();
        let (a, b) = (&system.abar, &system.bbar);
        let mut expected = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                let col = |k: usize| if k < 3 { a.column(k).into_owned() } else { b.column(k - 3).into_owned() };
                expected[(i, j)] = col(i).dot(&col(j)) - if i == j && i < 3 { 1.0 } else { 0.0 };
            }
        }
        assert!((lhs - expected).amax() < 1e-15);
    }

    #[test]
    fn perturbed_multiplier_fails_with_positive_eigenvalue() {
        let mut cert = svrg_i_certificate(&fc(0.1, 1.0), 0.1, 10, DEFAULT_TOL).unwrap();
        cert.instance.lambdas[2] *= 0.5;
        let bad = verify_certificate(&cert.instance, DEFAULT_TOL).unwrap();
        assert!(!bad.verified);
        let eig = bad.lhs.clone().symmetric_eigen().eigenvalues.max();
        assert!(eig > 1e-6 && (eig - bad.lhs_max_eig).abs() < 1e-12);
    }

    #[test]
    fn negative_nonnegative_multiplier_rejected() {
        let mut cert = sg_certificate(&fc(1.0, 10.0), 0.05, DEFAULT_TOL).unwrap();
        cert.instance.lambdas[0] = -1e-11;
        let bad = verify_certificate(&cert.instance, 1.0).unwrap();
        assert!(!bad.verified);
        assert!(bad.failures.iter().any(|f| f.contains("negative")));
    }

    #[test]
    fn free_multiplier_may_be_negative() {
        let mut cert = svrg_i_certificate(&fc(0.1, 1.0), 0.1, 10, DEFAULT_TOL).unwrap();
        // flipping λ₄ and X̄₄ together leaves the LMI unchanged
        cert.instance.lambdas[3] = -cert.instance.lambdas[3];
        cert.instance.supply_rates[3].xbar *= -1.0;
        let same = verify_certificate(&cert.instance, DEFAULT_TOL).unwrap();
        assert!(same.verified);
    }

    #[test]
    fn katyusha_recipe_boundary() {
        let f = FunctionClass::composite(0.01, 1.0).unwrap();
        let spec = MethodSpec::katyusha_recipe(&f, 100).unwrap();
        let k = katyusha_certificate(&f, &spec, DEFAULT_TOL).unwrap();
        assert!(k.certificate.verified, "{:?}", k.certificate.failures);
        assert!(k.certificate.lhs_max_eig <= 1e-12);
        assert_eq!(k.predicate, Some(true));
        assert!(!k.disagrees());

        // recipe with τ₁ < 1/2, so τ₁ can be inflated at τ₂ = 1/2
        let f = FunctionClass::composite(0.001, 1.0).unwrap();
        let spec = MethodSpec::katyusha_recipe(&f, 100).unwrap();
        assert!(katyusha_certificate(&f, &spec, DEFAULT_TOL).unwrap().certificate.verified);
        let inflated = MethodSpec { tau1: spec.tau1 * 1.1, ..spec };
        let k = katyusha_certificate(&f, &inflated, DEFAULT_TOL).unwrap();
        assert!(!k.certificate.verified);
        assert_eq!(k.predicate, Some(false));
        let msg = &k.certificate.failures[0];
        assert!(msg.contains("positive eigenvalue") && msg.contains("v, ") && msg.contains("h]"), "{msg}");
    }

    #[test]
    fn katyusha_displayed_form() {
        let f = FunctionClass::composite(0.02, 2.0).unwrap();
        let (t1, a) = (0.3, 0.5);
        let spec = MethodSpec::katyusha(10, t1, 0.5, a, 1.0 / 6.0).unwrap();
        let lhs = katyusha_certificate(&f, &spec, DEFAULT_TOL).unwrap().certificate.lhs;
        let c = a / 2.0 * (a - 1.0 / (3.0 * 2.0 * t1));
        let mut expected = DMatrix::zeros(6, 6);
        for (i, j) in [(3, 3), (3, 5), (5, 3), (5, 5)] {
            expected[(i, j)] += c;
        }
        for (i, j, s) in [(4, 4, -1.0), (5, 5, -1.0), (4, 5, 1.0), (5, 4, 1.0)] {
            expected[(i, j)] += s * a * a / 2.0;
        }
        assert!((lhs - expected).amax() < 1e-14);
    }

    #[test]
    fn katyusha_predicate_domain() {
        let f = FunctionClass::composite(0.01, 1.0).unwrap();
        let off = MethodSpec::katyusha(10, 0.3, 0.1, 0.5, 1.0 / 3.0).unwrap();
        assert_eq!(katyusha_certificate(&f, &off, DEFAULT_TOL).unwrap().predicate, None);
        let other_zeta = MethodSpec::katyusha(10, 0.3, 0.5, 0.5, 0.25).unwrap();
        assert_eq!(katyusha_certificate(&f, &other_zeta, DEFAULT_TOL).unwrap().predicate, None);
    }

    #[test]
    fn degenerate_zero_certificate() {
        let f = fc(0.1, 1.0);
        let instance = LmiInstance {
            system: SystemMatrices::svrg(0.0),
            supply_rates: svrg_ii_supply_rates(&f).unwrap(),
            rho_sq: 1.0,
            pbar: DMatrix::zeros(1, 1),
            lambdas: vec![0.0; 3],
        };
        let cert = verify_certificate(&instance, DEFAULT_TOL).unwrap();
        assert!(cert.verified && cert.lhs.amax() == 0.0);
    }

    #[test]
    fn dimension_mismatch_reported() {
        let f = fc(0.1, 1.0);
        let instance = LmiInstance {
            system: SystemMatrices::sg(0.1),
            supply_rates: svrg_ii_supply_rates(&f).unwrap(),
            rho_sq: 1.0,
            pbar: DMatrix::identity(1, 1),
            lambdas: vec![0.0; 3],
        };
        assert!(matches!(assemble_lhs(&instance), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn search_finds_sg_certificate_and_rejects_fast_rate() {
        let f = fc(1.0, 10.0);
        let system = SystemMatrices::sg(0.05);
        let rates = sg_supply_rates(&f).unwrap();
        let ok = search_certificate(&system, &rates, 0.95, PFamily::ScaledIdentity, &SearchOptions::default()).unwrap();
        assert!(ok.is_certified());
        let no = search_certificate(&system, &rates, 0.5, PFamily::ScaledIdentity, &SearchOptions::default()).unwrap();
        assert!(!no.is_certified());
    }

    #[test]
    fn search_with_full_p_on_katyusha_state_is_rejected() {
        let f = FunctionClass::composite(0.01, 1.0).unwrap();
        let spec = MethodSpec::katyusha_recipe(&f, 100).unwrap();
        let rates = supply_rates_for(&f, &spec).unwrap();
        let system = SystemMatrices::katyusha(&spec);
        let out = search_certificate(&system, &rates, 0.99, PFamily::FullSymmetric, &SearchOptions::default());
        assert!(out.is_ok());
    }

    #[test]
    fn search_finds_svrg_certificates() {
        let f = fc(0.1, 1.0);
        for option in [SvrgOption::I, SvrgOption::II] {
            let spec = MethodSpec::svrg(option, 0.1, 10).unwrap();
            let rho = if option == SvrgOption::I { 1.0 - 2.0 * 0.1 * (0.1 - 0.01) + 1e-3 } else { 1.0 };
            let out = search_certificate(
                &SystemMatrices::for_method(&spec),
                &supply_rates_for(&f, &spec).unwrap(),
                rho,
                PFamily::ScaledIdentity,
                &SearchOptions::default(),
            )
            .unwrap();
            assert!(out.is_certified(), "{option:?}: {:?}", out.certificate().failures);
        }
    }

    #[test]
    fn bisection_recovers_sg_rate() {
        let f = fc(1.0, 10.0);
        let b = bisect_rate(
            &SystemMatrices::sg(0.05),
            &sg_supply_rates(&f).unwrap(),
            PFamily::ScaledIdentity,
            1e-4,
            &SearchOptions::default(),
        )
        .unwrap();
        assert!((b.rho_sq - 0.95).abs() <= 1e-4, "{}", b.rho_sq);
        assert!(b.certificate.verified);
    }

    #[test]
    fn frozen_dynamics_only_certify_unit_rate() {
        let f = fc(1.0, 10.0);
        let b = bisect_rate(
            &SystemMatrices::sg(0.0),
            &sg_supply_rates(&f).unwrap(),
            PFamily::ScaledIdentity,
            1e-4,
            &SearchOptions::default(),
        )
        .unwrap();
        assert!(b.rho_sq > 1.0 - 1e-4);
    }

    #[test]
    fn certificate_is_monotone_in_rate() {
        let f = fc(1.0, 10.0);
        let out = search_certificate(
            &SystemMatrices::sg(0.05),
            &sg_supply_rates(&f).unwrap(),
            0.97,
            PFamily::ScaledIdentity,
            &SearchOptions::default(),
        )
        .unwrap();
        let mut inst = out.certificate().instance.clone();
        inst.rho_sq = 0.99;
        assert!(verify_certificate(&inst, DEFAULT_TOL).unwrap().verified);
    }
}
