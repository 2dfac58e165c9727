//! Finite-sum quadratic test problems with exact oracles.
//!
//! Each component is `f_i(x) = ½ xᵀQ_i x + b_iᵀx`, so expectations over the
//! sampled index can be computed exactly by enumeration and `σ`, `L` are read
//! off spectra. Problems serialize as their generation recipe, never as
//! matrix dumps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{ComponentAssumption, FunctionClass};
use crate::linalg::symmetric_eigen;

/// Tolerance on `‖∇F(x⋆)‖` accepted for a generated minimizer.
pub const OPTIMALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    QuadraticL2,
}

/// `ψ(x) = (σ_ψ / 2)‖x‖²` or nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    #[serde(default)]
    pub sigma_psi: f64,
}

impl Default for Regularizer {
    fn default() -> Self {
        Self::none()
    }
}

impl Regularizer {
    pub fn none() -> Self {
        Self { kind: RegularizerKind::None, sigma_psi: 0.0 }
    }

    pub fn quadratic_l2(sigma_psi: f64) -> Result<Self> {
        if !(sigma_psi.is_finite() && sigma_psi > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "quadratic regularizer needs sigma_psi > 0, got {sigma_psi}"
            )));
        }
        Ok(Self { kind: RegularizerKind::QuadraticL2, sigma_psi })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self.kind {
            RegularizerKind::None => Ok(()),
            RegularizerKind::QuadraticL2 => Self::quadratic_l2(self.sigma_psi).map(|_| ()),
        }
    }

    /// Strong-convexity modulus of `ψ` (zero when absent).
    pub fn modulus(&self) -> f64 {
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::QuadraticL2 => self.sigma_psi,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.modulus() * x.norm_squared()
    }

    /// The (unique) subgradient of the smooth quadratic regularizer.
    pub fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x * self.modulus()
    }

    /// `argmin_z { ‖z - v‖² / (2·step) + ψ(z) }`.
    pub fn prox(&self, step: f64, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            RegularizerKind::None => v.clone(),
            RegularizerKind::QuadraticL2 => v / (1.0 + step * self.sigma_psi),
        }
    }
}

/// One quadratic component `½ xᵀQx + bᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticComponent {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl QuadraticComponent {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }
}

/// Generation recipe, the JSON form of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub function_class: FunctionClass,
    #[serde(default)]
    pub regularizer: Regularizer,
}

impl ProblemSpec {
    pub fn generate(&self) -> Result<FiniteSumProblem> {
        generate_problem(self.seed, self.n, self.p, self.function_class, self.regularizer)
    }
}

/// `F(x) = (1/n) Σ f_i(x) + ψ(x)` with a precomputed minimizer.
#[derive(Debug, Clone)]
pub struct FiniteSumProblem {
    components: Vec<QuadraticComponent>,
    regularizer: Regularizer,
    fclass: FunctionClass,
    x_star: DVector<f64>,
    mean_hessian: DMatrix<f64>,
    mean_linear: DVector<f64>,
    spec: Option<ProblemSpec>,
}

impl FiniteSumProblem {
    /// Builds a problem from explicit components, checking every class
    /// invariant and solving for the minimizer.
    pub fn from_components(
        components: Vec<QuadraticComponent>,
        regularizer: Regularizer,
        fclass: FunctionClass,
    ) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidProblem("need at least one component".into()));
        }
        let p = components[0].linear.len();
        if p == 0 {
            return Err(Error::InvalidProblem("dimension must be at least one".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if c.hessian.nrows() != p || c.hessian.ncols() != p || c.linear.len() != p {
                return Err(Error::DimensionMismatch(format!("component {i} is not {p}-dimensional")));
            }
        }
        regularizer.validate()?;
        if regularizer.kind == RegularizerKind::QuadraticL2 && !fclass.composite {
            return Err(Error::InvalidProblem("a regularizer requires a composite function class".into()));
        }
        if fclass.composite && !fclass.component_assumption.is_convex() {
            return Err(Error::InvalidProblem("composite problems need convex components".into()));
        }

        let l = fclass.lipschitz;
        let spectral_slack = 1e-10 * l.max(1.0);
        for (i, c) in components.iter().enumerate() {
            if crate::linalg::asymmetry(&c.hessian) > 1e-12 * l.max(1.0) {
                return Err(Error::InvalidProblem(format!("component {i} Hessian is not symmetric")));
            }
            let eig = symmetric_eigen(&c.hessian)?;
            let floor = match fclass.component_assumption {
                ComponentAssumption::SmoothConvex => 0.0,
                ComponentAssumption::SmoothStronglyConvex => fclass.sigma,
                ComponentAssumption::SmoothOnly => -l,
            };
            if eig.min() < floor - spectral_slack || eig.max() > l + spectral_slack {
                return Err(Error::InvalidProblem(format!(
                    "component {i} spectrum [{}, {}] outside [{floor}, {l}]",
                    eig.min(),
                    eig.max()
                )));
            }
        }

        let nf = n as f64;
        let mean_hessian = components.iter().fold(DMatrix::zeros(p, p), |acc, c| acc + &c.hessian) / nf;
        let mean_linear = components.iter().fold(DVector::zeros(p), |acc, c| acc + &c.linear) / nf;
        let curvature = &mean_hessian + DMatrix::identity(p, p) * regularizer.modulus();
        let avg = symmetric_eigen(&curvature)?;
        if avg.min() < fclass.sigma - spectral_slack {
            return Err(Error::InvalidProblem(format!(
                "average curvature {} is below sigma = {}",
                avg.min(),
                fclass.sigma
            )));
        }

        let x_star = solve_spd(&curvature, &(-&mean_linear))?;
        let problem = Self { components, regularizer, fclass, x_star, mean_hessian, mean_linear, spec: None };
        let residual = problem.optimality_residual();
        if residual > OPTIMALITY_TOL * problem.mean_linear.norm().max(1.0) {
            return Err(Error::InvalidProblem(format!("minimizer residual {residual:e} too large")));
        }
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.x_star.len()
    }

    pub fn components(&self) -> &[QuadraticComponent] {
        &self.components
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn function_class(&self) -> &FunctionClass {
        &self.fclass
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn mean_hessian(&self) -> &DMatrix<f64> {
        &self.mean_hessian
    }

    /// Generation recipe when the problem came from [`generate_problem`].
    pub fn spec(&self) -> Option<&ProblemSpec> {
        self.spec.as_ref()
    }

    pub fn is_composite(&self) -> bool {
        self.fclass.composite
    }

    pub fn component_value(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.component(i).map(|c| c.value(x))
    }

    /// `∇f_i(x) = Q_i x + b_i`.
    pub fn component_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.component(i).map(|c| c.gradient(x))
    }

    fn component(&self, i: usize) -> Result<&QuadraticComponent> {
        self.components.get(i).ok_or(Error::IndexOutOfRange { index: i, n: self.n() })
    }

    /// Gradient of the smooth part, `(1/n) Σ ∇f_i(x)`.
    pub fn full_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let sum = self.components.iter().fold(DVector::zeros(self.p()), |acc, c| acc + c.gradient(x));
        sum / self.n() as f64
    }

    /// Smooth part `(1/n) Σ f_i(x)`.
    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum::<f64>() / self.n() as f64
    }

    /// `F(x) = g(x) + ψ(x)`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.regularizer.value(x)
    }

    /// `‖∇F(x⋆)‖`.
    pub fn optimality_residual(&self) -> f64 {
        (self.full_gradient(&self.x_star) + self.regularizer.subgradient(&self.x_star)).norm()
    }

    /// `F(x) - F(x⋆)`, clamped at zero.
    ///
    /// Evaluated through the exact second-order expansion around `x⋆`, which
    /// avoids cancellation when `x` is close to the optimum.
    pub fn suboptimality(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x_star;
        let grad_star = self.full_gradient(&self.x_star) + self.regularizer.subgradient(&self.x_star);
        let curvature = d.dot(&(&self.mean_hessian * &d)) + self.regularizer.modulus() * d.norm_squared();
        (grad_star.dot(&d) + 0.5 * curvature).max(0.0)
    }

    /// `(1/n) Σ ‖∇f_i(x⋆)‖²`, the residual noise of plain SG at the optimum.
    pub fn gradient_noise(&self) -> f64 {
        self.components.iter().map(|c| c.gradient(&self.x_star).norm_squared()).sum::<f64>() / self.n() as f64
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("curvature matrix is not positive definite".into()))?;
    let mut x = chol.solve(b);
    // one step of iterative refinement
    let r = b - a * &x;
    x += chol.solve(&r);
    Ok(x)
}

fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

fn gaussian_vector(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Deterministic synthetic instance for the given class.
///
/// Convex classes draw `Q_i = a R_i + c I` with `R_i` random PSD (top
/// eigenvalue one, some eigenvalues zero) and `(a, c)` the smallest shift
/// meeting the average-curvature floor while keeping `λ_max(Q_i) = L`.
/// `SmoothOnly` draws `Q_i = H + t E_i` with zero-mean symmetric `E_i`, so the
/// components are indefinite while their average `H` stays in `[σ, L]`.
pub fn generate_problem(
    seed: u64,
    n: usize,
    p: usize,
    fclass: FunctionClass,
    regularizer: Regularizer,
) -> Result<FiniteSumProblem> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidProblem(format!("need n >= 1 and p >= 1, got n = {n}, p = {p}")));
    }
    FunctionClass::new(fclass.sigma, fclass.lipschitz, fclass.component_assumption, fclass.composite)?;
    regularizer.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = fclass.lipschitz;
    // curvature the smooth part must supply on average
    let need = (fclass.sigma - regularizer.modulus()).max(0.0);

    let hessians: Vec<DMatrix<f64>> = match fclass.component_assumption {
        ComponentAssumption::SmoothConvex | ComponentAssumption::SmoothStronglyConvex => {
            let floor = if fclass.component_assumption == ComponentAssumption::SmoothStronglyConvex {
                fclass.sigma
            } else {
                0.0
            };
            let raw: Vec<DMatrix<f64>> = (0..n)
                .map(|_| {
                    let u = random_orthogonal(&mut rng, p);
                    let d = DVector::from_fn(p, |j, _| {
                        let keep = rng.random_bool(0.7);
                        let val: f64 = rng.random_range(0.0..1.0);
                        if j == 0 {
                            1.0
                        } else if keep {
                            val
                        } else {
                            0.0
                        }
                    });
                    let r = &u * DMatrix::from_diagonal(&d) * u.transpose();
                    crate::linalg::symmetrize(&r)
                })
                .collect();
            let mean = raw.iter().fold(DMatrix::zeros(p, p), |acc, r| acc + r) / n as f64;
            let mu = symmetric_eigen(&mean)?.min().max(0.0);
            // top eigenvalue of every R_i is one by construction
            let shift = if 1.0 - mu > 1e-12 { (need - l * mu) / (1.0 - mu) } else { floor };
            let c = shift.max(floor).min(l);
            let a = l - c;
            raw.into_iter().map(|r| r * a + DMatrix::identity(p, p) * c).collect()
        }
        ComponentAssumption::SmoothOnly => {
            if fclass.composite {
                return Err(Error::InvalidProblem("composite problems need convex components".into()));
            }
            let lo = fclass.sigma;
            let hi = (0.5 * l).max(lo);
            let u = random_orthogonal(&mut rng, p);
            let h_diag = DVector::from_fn(p, |j, _| if j == 0 { lo } else { rng.random_range(lo..=hi) });
            let h = crate::linalg::symmetrize(&(&u * DMatrix::from_diagonal(&h_diag) * u.transpose()));
            let mut perturb: Vec<DMatrix<f64>> = (0..n)
                .map(|_| {
                    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    crate::linalg::symmetrize(&g)
                })
                .collect();
            let mean = perturb.iter().fold(DMatrix::zeros(p, p), |acc, e| acc + e) / n as f64;
            for e in &mut perturb {
                *e -= &mean;
            }
            let h_norm = h_diag.amax();
            let mut e_norm: f64 = 0.0;
            for e in &perturb {
                let eig = symmetric_eigen(e)?;
                e_norm = e_norm.max(eig.max().abs().max(eig.min().abs()));
            }
            let t = if e_norm > 0.0 { (l - h_norm) / e_norm * (1.0 - 1e-9) } else { 0.0 };
            perturb.into_iter().map(|e| crate::linalg::symmetrize(&(&h + e * t))).collect()
        }
    };

    let components = hessians
        .into_iter()
        .map(|hessian| QuadraticComponent { hessian, linear: gaussian_vector(&mut rng, p) })
        .collect();
    let mut problem = FiniteSumProblem::from_components(components, regularizer, fclass)?;
    problem.spec = Some(ProblemSpec { n, p, seed, function_class: fclass, regularizer });
    Ok(problem)
}

impl Serialize for FiniteSumProblem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.spec {
            Some(spec) => spec.serialize(s),
            None => Err(serde::ser::Error::custom("only generated problems can be serialized")),
        }
    }
}

impl<'de> Deserialize<'de> for FiniteSumProblem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ProblemSpec::deserialize(d)?.generate().map_err(serde::de::Error::custom)
    }
}
