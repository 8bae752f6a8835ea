//! BSDE drivers `f(α, t, x, y, z, k)` as named families.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Source term `c(t, x, α) = c0 + cx·x + ca·α` added to every family.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Source<T> {
    #[serde(default)]
    pub c0: T,
    #[serde(default)]
    pub cx: T,
    #[serde(default)]
    pub ca: T,
}

impl<T: Scalar> Source<T> {
    #[inline]
    pub fn eval(&self, x: T, alpha: T) -> T {
        self.c0 + self.cx * x + self.ca * alpha
    }
}

/// The `(y, z, k)` part of the driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields, bound = "T: Scalar")]
pub enum DriverForm<T> {
    Zero,
    /// `−(rate + rate_alpha·α)·y + z_coef·z + Σ_j γ_j k_j ν_j`
    Linear {
        rate: T,
        #[serde(default)]
        rate_alpha: T,
        #[serde(default)]
        z_coef: T,
        gamma: Vec<T>,
    },
    /// `−(rate + rate_alpha·α)·y`
    Discount {
        rate: T,
        #[serde(default)]
        rate_alpha: T,
    },
    /// `−rate·y + κ·|z|`
    ZAmbiguity {
        kappa: T,
        #[serde(default)]
        rate: T,
    },
    /// `−rate·y + Σ_j γ_j k_j ν_j`
    JumpRisk { rate: T, gamma: Vec<T> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct DriverSpec<T> {
    pub form: DriverForm<T>,
    #[serde(default)]
    pub source: Source<T>,
    /// Declared Lipschitz constant in `(α, x, y, z, k)`.
    pub lipschitz: T,
}

impl<T: Scalar> DriverSpec<T> {
    pub fn zero() -> Self {
        Self { form: DriverForm::Zero, source: Source::default(), lipschitz: T::one() }
    }

    pub fn with_form(form: DriverForm<T>) -> Self {
        Self { form, source: Source::default(), lipschitz: T::lit(10.0) }
    }

    /// Evaluates `f`. `weights` are the jump intensities `ν_j`, `k` has one
    /// entry per mark.
    #[inline]
    pub fn eval(&self, weights: &[T], alpha: T, _t: T, x: T, y: T, z: T, k: &[T]) -> T {
        let source = self.source.eval(x, alpha);
        let jump_term = |gamma: &[T]| -> T {
            gamma.iter().zip(k).zip(weights).fold(T::zero(), |acc, ((&g, &kj), &nu)| acc + kj * g * nu)
        };
        source
            + match &self.form {
                DriverForm::Zero => T::zero(),
                DriverForm::Linear { rate, rate_alpha, z_coef, gamma } => {
                    -(*rate + *rate_alpha * alpha) * y + *z_coef * z + jump_term(gamma)
                }
                DriverForm::Discount { rate, rate_alpha } => -(*rate + *rate_alpha * alpha) * y,
                DriverForm::ZAmbiguity { kappa, rate } => -*rate * y + *kappa * z.abs(),
                DriverForm::JumpRisk { rate, gamma } => -*rate * y + jump_term(gamma),
            }
    }

    /// The kernel `γ(α, t, x, y, z, k1, k2)(e_j)` of the jump comparison
    /// condition, one entry per mark.
    pub fn gamma(&self, n_marks: usize) -> Vec<T> {
        match &self.form {
            DriverForm::Linear { gamma, .. } | DriverForm::JumpRisk { gamma, .. } => gamma.clone(),
            _ => vec![T::zero(); n_marks],
        }
    }

    /// For drivers of the form `c(x, α) − r(α)·y`, returns `r(α)`.
    pub fn affine_in_y_rate(&self, alpha: T) -> Option<T> {
        let zero = T::zero();
        match &self.form {
            DriverForm::Zero => Some(zero),
            DriverForm::Discount { rate, rate_alpha } => Some(*rate + *rate_alpha * alpha),
            DriverForm::Linear { rate, rate_alpha, z_coef, gamma } if *z_coef == zero && gamma.iter().all(|g| *g == zero) => {
                Some(*rate + *rate_alpha * alpha)
            }
            DriverForm::JumpRisk { rate, gamma } if gamma.iter().all(|g| *g == zero) => Some(*rate),
            DriverForm::ZAmbiguity { kappa, rate } if *kappa == zero => Some(*rate),
            _ => None,
        }
    }

    /// Whether the driver depends on `(x, y, z, k)` only through
    /// `(α, x, y, z, ⟨k, γ⟩_ν)`, the structure under which the comparison
    /// principle for the HJB system is known to hold. Every named family
    /// qualifies: jumps enter only through `Σ_j γ_j k_j ν_j`, if at all.
    pub fn has_comparison_structure(&self) -> bool {
        true
    }

    pub(crate) fn check_shape(&self, n_marks: usize) -> Result<(), String> {
        match &self.form {
            DriverForm::Linear { gamma, .. } | DriverForm::JumpRisk { gamma, .. } if gamma.len() != n_marks => {
                Err(format!("driver gamma has {} entries for {} jump marks", gamma.len(), n_marks))
            }
            _ => Ok(()),
        }
    }
}

/// A driver together with the jump measure it integrates against.
///
/// Anything implementing this can be fed to the sampled condition checks,
/// including hand-built drivers outside the named families.
pub trait Generator<T: Scalar> {
    fn value(&self, alpha: T, t: T, x: T, y: T, z: T, k: &[T]) -> T;

    /// `γ(α, t, x, y, z, k1, k2)(e_j)`, one entry per mark.
    fn gamma(&self, alpha: T, t: T, x: T, y: T, z: T, k1: &[T], k2: &[T]) -> Vec<T>;
}

/// [`DriverSpec`] bound to jump intensities.
pub struct BoundDriver<'a, T> {
    pub driver: &'a DriverSpec<T>,
    pub weights: &'a [T],
}

impl<T: Scalar> Generator<T> for BoundDriver<'_, T> {
    fn value(&self, alpha: T, t: T, x: T, y: T, z: T, k: &[T]) -> T {
        self.driver.eval(self.weights, alpha, t, x, y, z, k)
    }

    fn gamma(&self, _alpha: T, _t: T, _x: T, _y: T, _z: T, _k1: &[T], _k2: &[T]) -> Vec<T> {
        self.driver.gamma(self.weights.len())
    }
}
