//! Regularity assumptions on the objective and its components.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What is assumed about each component `f_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentAssumption {
    /// Each `f_i` is convex and `L`-smooth.
    SmoothConvex,
    /// Each `f_i` is `σ`-strongly convex and `L`-smooth.
    SmoothStronglyConvex,
    /// Each `f_i` is only `L`-smooth (possibly nonconvex); `g` stays strongly convex.
    SmoothOnly,
}

impl ComponentAssumption {
    /// True when every component is at least convex.
    pub fn is_convex(self) -> bool {
        !matches!(self, ComponentAssumption::SmoothOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentAssumption::SmoothConvex => "smooth_convex",
            ComponentAssumption::SmoothStronglyConvex => "smooth_strongly_convex",
            ComponentAssumption::SmoothOnly => "smooth_only",
        }
    }
}

impl std::fmt::Display for ComponentAssumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ComponentAssumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "smooth_convex" => Ok(Self::SmoothConvex),
            "smooth_strongly_convex" => Ok(Self::SmoothStronglyConvex),
            "smooth_only" => Ok(Self::SmoothOnly),
            other => Err(Error::InvalidFunctionClass(format!("unknown component assumption `{other}`"))),
        }
    }
}

/// Strong convexity modulus `σ`, smoothness `L` and the component assumption.
///
/// In the composite setting `F = f + ψ`, `sigma` is the modulus of `ψ` and
/// `lipschitz` the smoothness of each `f_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionClass {
    pub sigma: f64,
    pub lipschitz: f64,
    pub component_assumption: ComponentAssumption,
    #[serde(default)]
    pub composite: bool,
}

#[derive(Deserialize)]
struct RawFunctionClass {
    sigma: f64,
    lipschitz: f64,
    component_assumption: ComponentAssumption,
    #[serde(default)]
    composite: bool,
}

impl<'de> Deserialize<'de> for FunctionClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFunctionClass::deserialize(d)?;
        FunctionClass::new(raw.sigma, raw.lipschitz, raw.component_assumption, raw.composite)
            .map_err(serde::de::Error::custom)
    }
}

impl FunctionClass {
    pub fn new(
        sigma: f64,
        lipschitz: f64,
        component_assumption: ComponentAssumption,
        composite: bool,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidFunctionClass(format!("sigma must be positive and finite, got {sigma}")));
        }
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::InvalidFunctionClass(format!(
                "lipschitz must be positive and finite, got {lipschitz}"
            )));
        }
        if sigma > lipschitz {
            return Err(Error::InvalidFunctionClass(format!(
                "sigma ({sigma}) exceeds lipschitz ({lipschitz})"
            )));
        }
        Ok(Self { sigma, lipschitz, component_assumption, composite })
    }

    /// Convex, `L`-smooth components with a `σ`-strongly convex average.
    pub fn smooth_convex(sigma: f64, lipschitz: f64) -> Result<Self> {
        Self::new(sigma, lipschitz, ComponentAssumption::SmoothConvex, false)
    }

    /// `F = f + ψ` with convex `L`-smooth `f_i` and `σ`-strongly convex `ψ`.
    pub fn composite(sigma: f64, lipschitz: f64) -> Result<Self> {
        Self::new(sigma, lipschitz, ComponentAssumption::SmoothConvex, true)
    }

    pub fn with_assumption(mut self, assumption: ComponentAssumption) -> Self {
        self.component_assumption = assumption;
        self
    }

    /// `κ = L / σ`.
    pub fn condition_number(&self) -> f64 {
        self.lipschitz / self.sigma
    }

    /// The 2×2 multiplier `M` for which
    /// `[x - x⋆; ∇f_i(x) - ∇f_i(x⋆)]ᵀ (M ⊗ I) [·] ≤ 0` for every component.
    pub fn component_iqc_matrix(&self) -> Matrix2<f64> {
        let (s, l) = (self.sigma, self.lipschitz);
        match self.component_assumption {
            ComponentAssumption::SmoothStronglyConvex => {
                Matrix2::new(2.0 * s * l, -(s + l), -(s + l), 2.0)
            }
            ComponentAssumption::SmoothConvex => Matrix2::new(0.0, -l, -l, 2.0),
            ComponentAssumption::SmoothOnly => Matrix2::new(-2.0 * l * l, 0.0, 0.0, 2.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::block_quadratic_form;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn condition_number_examples() {
        assert_eq!(FunctionClass::smooth_convex(1.0, 10.0).unwrap().condition_number(), 10.0);
        assert_eq!(FunctionClass::smooth_convex(1.0, 1.0).unwrap().condition_number(), 1.0);
        assert_eq!(FunctionClass::smooth_convex(0.01, 1.0).unwrap().condition_number(), 100.0);
    }

    #[test]
    fn rejects_invalid_moduli() {
        assert!(FunctionClass::smooth_convex(0.0, 1.0).is_err());
        assert!(FunctionClass::smooth_convex(-1.0, 1.0).is_err());
        assert!(FunctionClass::smooth_convex(2.0, 1.0).is_err());
        assert!(FunctionClass::smooth_convex(f64::NAN, 1.0).is_err());
        assert!(FunctionClass::smooth_convex(0.1, f64::INFINITY).is_err());
    }

    #[test]
    fn iqc_matrices() {
        let convex = FunctionClass::smooth_convex(1.0, 10.0).unwrap();
        assert_eq!(convex.component_iqc_matrix(), Matrix2::new(0.0, -10.0, -10.0, 2.0));

        let smooth = FunctionClass::new(0.5, 1.0, ComponentAssumption::SmoothOnly, false).unwrap();
        assert_eq!(smooth.component_iqc_matrix(), Matrix2::new(-2.0, 0.0, 0.0, 2.0));

        let strong = FunctionClass::new(1.0, 1.0, ComponentAssumption::SmoothStronglyConvex, false).unwrap();
        assert_eq!(strong.component_iqc_matrix(), Matrix2::new(2.0, -2.0, -2.0, 2.0));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let fc = FunctionClass::smooth_convex(0.1, 1.0).unwrap();
        let s = serde_json::to_string(&fc).unwrap();
        assert_eq!(serde_json::from_str::<FunctionClass>(&s).unwrap(), fc);
        let bad = r#"{"sigma": 2.0, "lipschitz": 1.0, "component_assumption": "smooth_convex"}"#;
        assert!(serde_json::from_str::<FunctionClass>(bad).is_err());
    }

    #[test]
    fn co_coercivity_holds_for_random_convex_quadratics() {
        // f(x) = ½ xᵀQx with 0 ⪯ Q ⪯ L I, x⋆ = 0
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let l = 3.0;
        let fc = FunctionClass::smooth_convex(0.1, l).unwrap();
        let iqc = fc.component_iqc_matrix();
        let m = DMatrix::from_fn(2, 2, |i, j| iqc[(i, j)]);
        for _ in 0..500 {
            let p = 4;
            let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let q0 = &g * g.transpose();
            let top = q0.clone().symmetric_eigen().eigenvalues.max();
            let q = q0 * (l * rng.random_range(0.0..1.0) / top);
            let x = DVector::from_fn(p, |_, _| rng.random_range(-5.0..5.0));
            let grad = &q * &x;
            assert!(block_quadratic_form(&m, &[&x, &grad]) <= 1e-10);
        }
    }

    proptest! {
        #[test]
        fn condition_number_at_least_one(sigma in 1e-6f64..1.0, ratio in 1.0f64..1e4) {
            let fc = FunctionClass::smooth_convex(sigma, sigma * ratio).unwrap();
            prop_assert!(fc.condition_number() >= 1.0 - 1e-12);
        }
    }
}
