//! Reduced supply-rate matrices `X̄_j` and the bounds on their expectations.
//!
//! Block orders are fixed:
//! - SG: `(x - x⋆, ∇f_i(x))`
//! - SVRG: `(x - x⋆, r, u)` with `r = ∇f_i(x) - ∇f_i(x⋆)` and
//!   `u = ∇f_i(x⋆) - ∇f_i(x̃) + ∇g(x̃)`
//! - Katyusha: `(z - x⋆, y - x⋆, x̃ - x⋆, v, g, h)`
//!
//! Every matrix acts on stacked p-vectors through `X̄ ⊗ I_p`, which is never
//! formed; see [`SupplyRate::evaluate`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{ComponentAssumption, FunctionClass};
use crate::linalg::{asymmetry, block_quadratic_form, matrix_rows};
use crate::optimizers::{MethodFamily, MethodSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierSign {
    NonNegative,
    /// Allowed only when the expected supply is exactly zero.
    Free,
}

/// Right-hand side `Λ_j` of `E S_j ≤ Λ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundDescriptor {
    /// `Λ = 0`.
    NonPositive,
    /// `E S = 0`, so the multiplier may take either sign.
    ExactZero,
    /// `Λ = c · E‖x̃ - x⋆‖²`.
    ScaledAnchorDistance { coefficient: f64 },
    /// `Λ = c · (E g(x_k) - g(x⋆))`.
    ScaledIterateGap { coefficient: f64 },
    /// `Λ = c · (E g(x̃) - g(x⋆))`.
    ScaledAnchorGap { coefficient: f64 },
    /// `Λ = c · (1/n) Σ ‖∇f_i(x⋆)‖²`.
    ScaledGradientNoise { coefficient: f64 },
    /// `Λ = (1-τ₁-τ₂)(F(y_k) - F⋆) - (E F(y_{k+1}) - F⋆) + τ₂(F(x̃) - F⋆)`.
    CouplingCombination { tau1: f64, tau2: f64 },
}

/// State functionals a bound may refer to, all measured relative to the optimum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundContext {
    /// `‖x̃ - x⋆‖²`.
    pub anchor_distance_sq: f64,
    /// Objective gap at the current iterate (`x_k`, or `y_k` for Katyusha).
    pub iterate_gap: f64,
    /// Objective gap at the anchor.
    pub anchor_gap: f64,
    /// Expected objective gap after the step (Katyusha `E F(y_{k+1}) - F⋆`).
    pub next_iterate_gap: f64,
    /// `(1/n) Σ ‖∇f_i(x⋆)‖²`.
    pub gradient_noise: f64,
}

impl BoundDescriptor {
    pub fn value(&self, ctx: &BoundContext) -> f64 {
        match *self {
            BoundDescriptor::NonPositive | BoundDescriptor::ExactZero => 0.0,
            BoundDescriptor::ScaledAnchorDistance { coefficient } => coefficient * ctx.anchor_distance_sq,
            BoundDescriptor::ScaledIterateGap { coefficient } => coefficient * ctx.iterate_gap,
            BoundDescriptor::ScaledAnchorGap { coefficient } => coefficient * ctx.anchor_gap,
            BoundDescriptor::ScaledGradientNoise { coefficient } => coefficient * ctx.gradient_noise,
            BoundDescriptor::CouplingCombination { tau1, tau2 } => {
                (1.0 - tau1 - tau2) * ctx.iterate_gap - ctx.next_iterate_gap + tau2 * ctx.anchor_gap
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyRate {
    pub name: String,
    #[serde(with = "matrix_rows")]
    pub xbar: DMatrix<f64>,
    pub multiplier_sign: MultiplierSign,
    pub bound: BoundDescriptor,
}

impl SupplyRate {
    pub fn new(
        name: impl Into<String>,
        xbar: DMatrix<f64>,
        multiplier_sign: MultiplierSign,
        bound: BoundDescriptor,
    ) -> Result<Self> {
        let name = name.into();
        if !xbar.is_square() {
            return Err(Error::DimensionMismatch(format!("{name}: supply-rate matrix must be square")));
        }
        if asymmetry(&xbar) > 1e-14 {
            return Err(Error::DimensionMismatch(format!("{name}: supply-rate matrix is not symmetric")));
        }
        if multiplier_sign == MultiplierSign::Free && bound != BoundDescriptor::ExactZero {
            return Err(Error::InvalidMethod(format!("{name}: a free multiplier needs an exactly-zero bound")));
        }
        Ok(Self { name, xbar, multiplier_sign, bound })
    }

    fn fixed(name: &str, xbar: DMatrix<f64>, sign: MultiplierSign, bound: BoundDescriptor) -> Self {
        Self::new(name, xbar, sign, bound).expect("built-in supply rates are well formed")
    }

    pub fn dim(&self) -> usize {
        self.xbar.nrows()
    }

    /// `S(ξ, w) = [ξ; w]ᵀ (X̄ ⊗ I_p) [ξ; w]` for stacked blocks.
    pub fn evaluate(&self, blocks: &[&DVector<f64>]) -> Result<f64> {
        if blocks.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} expects {} blocks, got {}",
                self.name,
                self.dim(),
                blocks.len()
            )));
        }
        Ok(block_quadratic_form(&self.xbar, blocks))
    }
}

fn require_convex(fc: &FunctionClass, what: &str) -> Result<()> {
    if fc.component_assumption.is_convex() {
        Ok(())
    } else {
        Err(Error::WrongAssumption {
            required: format!("convex components for {what}"),
            actual: fc.component_assumption.to_string(),
        })
    }
}

fn mat(d: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for &(i, j, v) in entries {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// The two SG supply rates: strong convexity of `g` and co-coercivity of `f_i`.
pub fn sg_supply_rates(fc: &FunctionClass) -> Result<Vec<SupplyRate>> {
    require_convex(fc, "SG")?;
    let (s, l) = (fc.sigma, fc.lipschitz);
    Ok(vec![
        SupplyRate::fixed(
            "X1",
            mat(2, &[(0, 0, 2.0 * s), (0, 1, -1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::NonPositive,
        ),
        SupplyRate::fixed(
            "X2",
            mat(2, &[(0, 1, -l), (1, 1, 1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::ScaledGradientNoise { coefficient: 2.0 },
        ),
    ])
}

/// The four SVRG Option I supply rates. The third one embeds the component
/// multiplier `M`: the co-coercivity form for convex components (strongly
/// convex ones included), the Lipschitz form for smooth-only components.
pub fn svrg_i_supply_rates(fc: &FunctionClass) -> Result<Vec<SupplyRate>> {
    let (s, l) = (fc.sigma, fc.lipschitz);
    let m = match fc.component_assumption {
        ComponentAssumption::SmoothOnly => fc.component_iqc_matrix(),
        _ => fc.with_assumption(ComponentAssumption::SmoothConvex).component_iqc_matrix(),
    };
    Ok(vec![
        SupplyRate::fixed(
            "X1",
            mat(3, &[(2, 2, 1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::ScaledAnchorDistance { coefficient: l * l },
        ),
        SupplyRate::fixed(
            "X2",
            mat(3, &[(0, 0, 2.0 * s), (0, 1, -1.0), (0, 2, -1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::NonPositive,
        ),
        SupplyRate::fixed(
            "X3",
            mat(3, &[(0, 0, m[(0, 0)]), (0, 1, m[(0, 1)]), (1, 1, m[(1, 1)])]),
            MultiplierSign::NonNegative,
            BoundDescriptor::NonPositive,
        ),
        SupplyRate::fixed("X4", mat(3, &[(0, 2, -1.0)]), MultiplierSign::Free, BoundDescriptor::ExactZero),
    ])
}

/// The three SVRG Option II supply rates (function-value based).
pub fn svrg_ii_supply_rates(fc: &FunctionClass) -> Result<Vec<SupplyRate>> {
    require_convex(fc, "SVRG Option II")?;
    let l = fc.lipschitz;
    Ok(vec![
        SupplyRate::fixed(
            "X1",
            mat(3, &[(1, 1, 1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::ScaledIterateGap { coefficient: 2.0 * l },
        ),
        SupplyRate::fixed(
            "X2",
            mat(3, &[(2, 2, 1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::ScaledAnchorGap { coefficient: 2.0 * l },
        ),
        SupplyRate::fixed(
            "X3",
            mat(3, &[(0, 1, -1.0), (0, 2, -1.0)]),
            MultiplierSign::NonNegative,
            BoundDescriptor::ScaledIterateGap { coefficient: -1.0 },
        ),
    ])
}

/// Scalar coefficients of the four matrices making up the Katyusha supply rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatyushaCoefficients {
    /// `σ τ₁ / 2`, the `(z, z)` weight of the first matrix.
    pub strong: f64,
    /// `τ₁(ασ + 1)/2`, the `(z, v)` and `(z, g)` weight of the first matrix.
    pub cross: f64,
    /// `ζ - ατ₁/2 - Lζ²(1+τ₂)/(2τ₂)`.
    pub c2: f64,
    /// `ατ₁(ασ + 1)/2`.
    pub c3: f64,
    /// `ατ₁/2`.
    pub c4: f64,
}

impl KatyushaCoefficients {
    pub fn new(fc: &FunctionClass, spec: &MethodSpec) -> Result<Self> {
        let (s, l) = (fc.sigma, fc.lipschitz);
        let (t1, t2, a, z) = (spec.tau1, spec.tau2, spec.alpha, spec.zeta);
        if t2 <= 0.0 {
            return Err(Error::InvalidMethod("the Katyusha supply rate needs tau2 > 0".into()));
        }
        Ok(Self {
            strong: s * t1 / 2.0,
            cross: t1 * (a * s + 1.0) / 2.0,
            c2: z - a * t1 / 2.0 - l * z * z * (1.0 + t2) / (2.0 * t2),
            c3: a * t1 * (a * s + 1.0) / 2.0,
            c4: a * t1 / 2.0,
        })
    }
}

/// The single Katyusha supply rate with its coupling bound.
///
/// Assembled as `-A₁ + c₂B₂ + c₃B₃ + c₄B₄` where `A₁` holds `-στ₁/2` at
/// `(z, z)` and `τ₁(ασ+1)/2` at `(z, v)`, `(z, g)`; `B₂` is the all-ones
/// pattern on `{v, h}`, `B₃` on `{v, g}`, and `B₄ = (e_g - e_h)(e_g - e_h)ᵀ`.
pub fn katyusha_supply_rate(fc: &FunctionClass, spec: &MethodSpec) -> Result<SupplyRate> {
    if !fc.composite {
        return Err(Error::WrongAssumption {
            required: "a composite function class for Katyusha".into(),
            actual: "non-composite".into(),
        });
    }
    require_convex(fc, "Katyusha")?;
    if spec.family != MethodFamily::Katyusha {
        return Err(Error::InvalidMethod(format!("expected a Katyusha spec, got {}", spec.family)));
    }
    let spec = spec.validated()?;
    let k = KatyushaCoefficients::new(fc, &spec)?;
    const Z: usize = 0;
    const V: usize = 3;
    const G: usize = 4;
    const H: usize = 5;
    let mut x = DMatrix::zeros(6, 6);
    x[(Z, Z)] += k.strong;
    for b in [V, G] {
        x[(Z, b)] -= k.cross;
        x[(b, Z)] -= k.cross;
    }
    for (i, j) in [(V, V), (V, H), (H, V), (H, H)] {
        x[(i, j)] += k.c2;
    }
    for (i, j) in [(V, V), (V, G), (G, V), (G, G)] {
        x[(i, j)] += k.c3;
    }
    for (i, j, sgn) in [(G, G, 1.0), (H, H, 1.0), (G, H, -1.0), (H, G, -1.0)] {
        x[(i, j)] += sgn * k.c4;
    }
    SupplyRate::new(
        "X1",
        x,
        MultiplierSign::NonNegative,
        BoundDescriptor::CouplingCombination { tau1: spec.tau1, tau2: spec.tau2 },
    )
}

/// Supply rates of a method family.
pub fn supply_rates_for(fc: &FunctionClass, spec: &MethodSpec) -> Result<Vec<SupplyRate>> {
    match spec.family {
        MethodFamily::Sg => sg_supply_rates(fc),
        MethodFamily::SvrgOptionI => svrg_i_supply_rates(fc),
        MethodFamily::SvrgOptionII => svrg_ii_supply_rates(fc),
        MethodFamily::Katyusha => Ok(vec![katyusha_supply_rate(fc, spec)?]),
    }
}
