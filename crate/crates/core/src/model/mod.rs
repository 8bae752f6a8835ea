//! Problem instances: coefficients of the controlled jump diffusion, the
//! driver, barriers, terminal reward and the control set.

mod driver;
mod functions;
mod validate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use driver::{BoundDriver, DriverForm, DriverSpec, Generator, Source};
pub use functions::{BarrierFn, Piece, Piecewise, StateControlFn, TerminalFn};
pub use validate::{
    check_gamma_condition, check_gamma_condition_for, validate, ConditionReport, GammaFailure, ValidationConfig,
    ValidationReport, Violation, ViolationKind,
};

/// Finite jump measure `ν = Σ_j ν_j δ_{e_j}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct JumpMeasure<T> {
    pub marks: Vec<T>,
    /// Intensities, in 1/time.
    pub weights: Vec<T>,
}

impl<T: Scalar> JumpMeasure<T> {
    pub fn none() -> Self {
        Self { marks: vec![], weights: vec![] }
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// `λ = Σ_j ν_j`.
    pub fn total_intensity(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// `‖k‖_ν = (Σ_j k_j² ν_j)^{1/2}`.
    pub fn norm(&self, k: &[T]) -> T {
        k.iter().zip(&self.weights).map(|(&kj, &w)| kj * kj * w).sum::<T>().sqrt()
    }
}

/// `b`, `σ` and `β(x, α, e) = e · jump(x, α)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct CoefficientSet<T> {
    pub drift: StateControlFn<T>,
    pub vol: StateControlFn<T>,
    pub jump: StateControlFn<T>,
    /// Declared Lipschitz constant `C` for `b`, `σ` and the bound `|β| ≤ C·|e|`.
    pub lipschitz: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Barriers<T> {
    /// `h1`; absent means no lower obstacle.
    pub lower: Option<BarrierFn<T>>,
    /// `h2`; absent means no upper obstacle.
    pub upper: Option<BarrierFn<T>>,
    /// Growth constant `C` in `|h1| + |h2| + |g| ≤ C(1 + |x|^p)`.
    pub growth_c: T,
}

/// A complete problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct ProblemSpec<T> {
    pub coefficients: CoefficientSet<T>,
    pub jumps: JumpMeasure<T>,
    pub driver: DriverSpec<T>,
    pub barriers: Barriers<T>,
    pub terminal: TerminalFn<T>,
    pub controls: Vec<T>,
    pub horizon: T,
    pub growth_p: u32,
}

impl<T: Scalar> ProblemSpec<T> {
    /// Frozen dynamics, zero driver, no obstacles, constant terminal `c`.
    pub fn trivial(terminal: T) -> Self {
        let zero = T::zero();
        Self {
            coefficients: CoefficientSet {
                drift: StateControlFn::constant(zero),
                vol: StateControlFn::constant(zero),
                jump: StateControlFn::constant(T::one()),
                lipschitz: T::lit(10.0),
            },
            jumps: JumpMeasure::none(),
            driver: DriverSpec::zero(),
            barriers: Barriers { lower: None, upper: None, growth_c: T::lit(10.0) },
            terminal: TerminalFn::Constant { value: terminal },
            controls: vec![zero],
            horizon: T::one(),
            growth_p: 1,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hard structural checks. Sampled invariants live in [`validate`].
    pub fn check_structure(&self) -> Result<()> {
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::Malformed(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        if self.controls.is_empty() {
            return Err(Error::Malformed("control grid is empty".into()));
        }
        if self.jumps.marks.len() != self.jumps.weights.len() {
            return Err(Error::Malformed(format!(
                "jump measure has {} marks but {} weights",
                self.jumps.marks.len(),
                self.jumps.weights.len()
            )));
        }
        self.driver.check_shape(self.jumps.len()).map_err(Error::Malformed)?;
        self.terminal.check_shape().map_err(Error::Malformed)?;
        for b in [&self.barriers.lower, &self.barriers.upper].into_iter().flatten() {
            b.check_shape().map_err(Error::Malformed)?;
        }
        Ok(())
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn control_index(&self, alpha: T) -> Result<usize> {
        self.controls
            .iter()
            .position(|&a| a == alpha)
            .ok_or_else(|| Error::UnknownControl(alpha.to_f64_lossy()))
    }

    #[inline]
    pub fn drift(&self, x: T, alpha: T) -> T {
        self.coefficients.drift.eval(x, alpha)
    }

    #[inline]
    pub fn vol(&self, x: T, alpha: T) -> T {
        self.coefficients.vol.eval(x, alpha)
    }

    /// `β(x, α, e_j)`.
    #[inline]
    pub fn jump_size(&self, x: T, alpha: T, mark: usize) -> T {
        self.jumps.marks[mark] * self.coefficients.jump.eval(x, alpha)
    }

    /// `b(x, α) − Σ_j β(x, α, e_j) ν_j`: drift of the state once jumps are
    /// taken uncompensated.
    pub fn effective_drift(&self, x: T, alpha: T) -> T {
        let comp = (0..self.jumps.len()).fold(T::zero(), |acc, j| acc + self.jump_size(x, alpha, j) * self.jumps.weights[j]);
        self.drift(x, alpha) - comp
    }

    /// `h1(t, x)`, `−∞` without a lower obstacle.
    #[inline]
    pub fn lower(&self, t: T, x: T) -> T {
        self.barriers.lower.as_ref().map_or(T::neg_infinity(), |h| h.eval(t, x))
    }

    /// `h2(t, x)`, `+∞` without an upper obstacle.
    #[inline]
    pub fn upper(&self, t: T, x: T) -> T {
        self.barriers.upper.as_ref().map_or(T::infinity(), |h| h.eval(t, x))
    }

    #[inline]
    pub fn terminal_value(&self, x: T) -> T {
        self.terminal.eval(x)
    }

    /// Driver bound to this instance's jump intensities.
    pub fn generator(&self) -> BoundDriver<'_, T> {
        BoundDriver { driver: &self.driver, weights: &self.jumps.weights }
    }

    /// Whether `b`, `σ` and `β` ignore the control.
    pub fn coefficients_control_free(&self) -> bool {
        self.coefficients.drift.control_free() && self.coefficients.vol.control_free() && self.coefficients.jump.control_free()
    }
}

/// `f(α, t, x, y, z, k)` for a control value from the grid.
pub fn eval_driver<T: Scalar>(spec: &ProblemSpec<T>, alpha: T, t: T, x: T, y: T, z: T, k: &[T]) -> Result<T> {
    spec.control_index(alpha)?;
    if k.len() != spec.jumps.len() {
        return Err(Error::Malformed(format!("k has {} entries for {} jump marks", k.len(), spec.jumps.len())));
    }
    Ok(spec.driver.eval(&spec.jumps.weights, alpha, t, x, y, z, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with(form: DriverForm<f64>) -> ProblemSpec<f64> {
        let mut s = ProblemSpec::trivial(0.5);
        s.jumps = JumpMeasure { marks: vec![0.5], weights: vec![1.0] };
        s.driver = DriverSpec::with_form(form);
        s
    }

    #[test]
    fn driver_family_values() {
        let s = spec_with(DriverForm::Zero);
        assert_eq!(eval_driver(&s, 0.0, 0.3, 1.0, 5.0, -2.0, &[3.0]).unwrap(), 0.0);
        let s = spec_with(DriverForm::Discount { rate: 0.1, rate_alpha: 0.0 });
        assert_eq!(eval_driver(&s, 0.0, 0.0, 0.0, 2.0, 0.0, &[0.0]).unwrap(), -0.2);
        let s = spec_with(DriverForm::ZAmbiguity { kappa: 0.5, rate: 0.0 });
        assert_eq!(eval_driver(&s, 0.0, 0.0, 0.0, 0.0, -2.0, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn unknown_control_is_an_error() {
        let s = spec_with(DriverForm::Zero);
        assert!(matches!(eval_driver(&s, 0.7, 0.0, 0.0, 0.0, 0.0, &[0.0]), Err(Error::UnknownControl(_))));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let s = spec_with(DriverForm::JumpRisk { rate: 0.05, gamma: vec![0.3] });
        let text = s.to_json_string().unwrap();
        let back = ProblemSpec::<f64>::from_json_str(&text).unwrap();
        assert_eq!(back, s);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().insert("bogus".into(), serde_json::json!(1));
        assert!(ProblemSpec::<f64>::from_json_str(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["driver"]["form"]["extra"] = serde_json::json!(2.0);
        assert!(ProblemSpec::<f64>::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn malformed_specs_are_hard_errors() {
        let mut s = ProblemSpec::<f64>::trivial(0.0);
        s.horizon = -1.0;
        assert!(matches!(s.check_structure(), Err(Error::Malformed(_))));
        let mut s = ProblemSpec::<f64>::trivial(0.0);
        s.controls.clear();
        assert!(matches!(s.check_structure(), Err(Error::Malformed(_))));
    }

    #[test]
    fn effective_drift_subtracts_compensator() {
        let mut s = ProblemSpec::<f64>::trivial(0.0);
        s.coefficients.drift = StateControlFn::constant(1.0);
        s.jumps = JumpMeasure { marks: vec![0.2, -0.1], weights: vec![2.0, 1.0] };
        assert!((s.effective_drift(0.0, 0.0) - (1.0 - 0.4 + 0.1)).abs() < 1e-15);
    }
}
