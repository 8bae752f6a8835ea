//! Sampled checks of the standing assumptions on a [`ProblemSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Generator, JumpMeasure, ProblemSpec};
use crate::error::Result;
use crate::scalar::Scalar;

/// Sampling density and domain for [`validate`].
#[derive(Clone, Debug)]
pub struct ValidationConfig {
    pub seed: u64,
    /// Random pairs drawn for each Lipschitz check.
    pub random_pairs: usize,
    pub t_points: usize,
    pub x_points: usize,
    pub x_range: (f64, f64),
    /// Half-width of the sampled `y`, `z` and `k` ranges.
    pub yzk_range: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { seed: 0, random_pairs: 256, t_points: 5, x_points: 21, x_range: (-5.0, 5.0), yzk_range: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    JumpMeasure,
    BarrierOrder,
    Growth,
    CoefficientLipschitz,
    JumpBound,
    DriverLipschitz,
    DriverGrowth,
    GammaLowerBound,
    GammaBound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

const SLACK: f64 = 1e-12;

/// Checks every sampled invariant. Malformed instances are hard errors;
/// everything else lands in the report.
pub fn validate<T: Scalar>(spec: &ProblemSpec<T>, config: &ValidationConfig) -> Result<ValidationReport> {
    spec.check_structure()?;
    let mut report = ValidationReport::default();
    let slack = T::lit(SLACK);

    for (j, (&e, &w)) in spec.jumps.marks.iter().zip(&spec.jumps.weights).enumerate() {
        if !(w > T::zero()) || !w.is_finite() {
            report.push(ViolationKind::JumpMeasure, format!("jump weight {j} must be positive and finite, got {w}"));
        }
        if e == T::zero() || !e.is_finite() {
            report.push(ViolationKind::JumpMeasure, format!("jump mark {j} must be finite and nonzero, got {e}"));
        }
        if spec.jumps.marks[..j].contains(&e) {
            report.push(ViolationKind::JumpMeasure, format!("jump mark {j} duplicates an earlier mark {e}"));
        }
    }

    let ts: Vec<T> = lin_points(T::zero(), spec.horizon, config.t_points.max(1));
    let xs: Vec<T> = lin_points(T::lit(config.x_range.0), T::lit(config.x_range.1), config.x_points.max(1));
    let p = spec.growth_p as i32;
    let growth_c = spec.barriers.growth_c;
    let finite_abs = |v: T| if v.is_finite() { v.abs() } else { T::zero() };

    for &t in &ts {
        for &x in &xs {
            let (h1, h2) = (spec.lower(t, x), spec.upper(t, x));
            if h1 > h2 {
                report.push(ViolationKind::BarrierOrder, format!("barrier order violated at (t,x)=({t}, {x}): h1={h1} > h2={h2}"));
            }
            let total = finite_abs(h1) + finite_abs(h2) + spec.terminal_value(x).abs();
            let bound = growth_c * (T::one() + x.abs().powi(p));
            if total > bound + slack {
                report.push(ViolationKind::Growth, format!("growth bound violated at (t,x)=({t}, {x}): {total} > {bound}"));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (xlo, xhi) = config.x_range;
    let r = config.yzk_range;
    let c = spec.coefficients.lipschitz;
    let controls = &spec.controls;
    let pick = |rng: &mut ChaCha8Rng| controls[rng.random_range(0..controls.len())];
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| T::lit(rng.random_range(lo..=hi));

    for _ in 0..config.random_pairs {
        let (x1, x2) = (draw(&mut rng, xlo, xhi), draw(&mut rng, xlo, xhi));
        let (a1, a2) = (pick(&mut rng), pick(&mut rng));
        let dist = (x1 - x2).abs() + (a1 - a2).abs();
        for (name, v1, v2) in [
            ("drift", spec.drift(x1, a1), spec.drift(x2, a2)),
            ("volatility", spec.vol(x1, a1), spec.vol(x2, a2)),
        ] {
            if (v1 - v2).abs() > c * dist + slack {
                report.push(
                    ViolationKind::CoefficientLipschitz,
                    format!("{name} Lipschitz bound violated between (x,α)=({x1}, {a1}) and ({x2}, {a2})"),
                );
            }
        }
        for (j, &e) in spec.jumps.marks.iter().enumerate() {
            let (b1, b2) = (spec.jump_size(x1, a1, j), spec.jump_size(x2, a2, j));
            if b1.abs() > c * e.abs() + slack {
                report.push(ViolationKind::JumpBound, format!("jump bound |β| ≤ C·|e| violated at (x,α,e)=({x1}, {a1}, {e})"));
            }
            if (b1 - b2).abs() > c * dist * e.abs() + slack {
                report.push(
                    ViolationKind::JumpBound,
                    format!("jump Lipschitz bound violated between (x,α)=({x1}, {a1}) and ({x2}, {a2}) at e={e}"),
                );
            }
        }
    }

    let weights = &spec.jumps.weights;
    let nj = spec.jumps.len();
    let cf = spec.driver.lipschitz;
    for _ in 0..config.random_pairs {
        let t = draw(&mut rng, 0.0, spec.horizon.to_f64_lossy());
        let (x1, x2) = (draw(&mut rng, xlo, xhi), draw(&mut rng, xlo, xhi));
        let (a1, a2) = (pick(&mut rng), pick(&mut rng));
        let (y1, y2) = (draw(&mut rng, -r, r), draw(&mut rng, -r, r));
        let (z1, z2) = (draw(&mut rng, -r, r), draw(&mut rng, -r, r));
        let k1: Vec<T> = (0..nj).map(|_| draw(&mut rng, -r, r)).collect();
        let k2: Vec<T> = (0..nj).map(|_| draw(&mut rng, -r, r)).collect();
        let dk: Vec<T> = k1.iter().zip(&k2).map(|(&a, &b)| a - b).collect();
        let dist = (a1 - a2).abs() + (x1 - x2).abs() + (y1 - y2).abs() + (z1 - z2).abs() + spec.jumps.norm(&dk);
        let f1 = spec.driver.eval(weights, a1, t, x1, y1, z1, &k1);
        let f2 = spec.driver.eval(weights, a2, t, x2, y2, z2, &k2);
        if (f1 - f2).abs() > cf * dist + slack {
            report.push(ViolationKind::DriverLipschitz, format!("driver Lipschitz bound violated near (t,x,y,z)=({t}, {x1}, {y1}, {z1})"));
        }
        let zeros = vec![T::zero(); nj];
        let f0 = spec.driver.eval(weights, a1, t, x1, T::zero(), T::zero(), &zeros);
        if f0.abs() > growth_c * (T::one() + x1.abs().powi(p)) + slack {
            report.push(ViolationKind::DriverGrowth, format!("driver growth bound violated at (t,x)=({t}, {x1})"));
        }
    }

    for (j, &g) in spec.driver.gamma(nj).iter().enumerate() {
        if g < -T::one() {
            report.push(ViolationKind::GammaLowerBound, format!("gamma lower bound violated at mark {j}: γ={g} < -1"));
        }
        if g.abs() > cf {
            report.push(ViolationKind::GammaBound, format!("gamma bound |γ| ≤ C violated at mark {j}: γ={g}"));
        }
    }

    Ok(report)
}

fn lin_points<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / T::from_usize_lossy(n - 1);
    (0..n).map(|i| lo + step * T::from_usize_lossy(i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaFailure {
    pub alpha: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub margin: f64,
}

/// Outcome of the sampled jump comparison condition
/// `f(k2) − f(k1) ≥ ⟨γ, k2 − k1⟩_ν`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub samples: usize,
    /// Smallest observed `f(k2) − f(k1) − ⟨γ, k2 − k1⟩_ν`.
    pub worst_margin: f64,
    pub failures: Vec<GammaFailure>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn check_gamma_condition<T: Scalar>(spec: &ProblemSpec<T>, sample_count: usize, rng_seed: u64) -> ConditionReport {
    check_gamma_condition_for(&spec.generator(), &spec.jumps, &spec.controls, spec.horizon, sample_count, rng_seed)
}

/// Same check for an arbitrary [`Generator`].
pub fn check_gamma_condition_for<T: Scalar, G: Generator<T>>(
    generator: &G,
    jumps: &JumpMeasure<T>,
    controls: &[T],
    horizon: T,
    sample_count: usize,
    rng_seed: u64,
) -> ConditionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let tol = T::lit(SLACK);
    let nj = jumps.len();
    let mut worst = T::infinity();
    let mut failures = Vec::new();
    let mut draw = |lo: f64, hi: f64| T::lit(rng.random_range(lo..=hi));
    let n = sample_count.max(1);
    for s in 0..n {
        let alpha = controls[s % controls.len()];
        let t = draw(0.0, horizon.to_f64_lossy());
        let x = draw(-5.0, 5.0);
        let y = draw(-10.0, 10.0);
        let z = draw(-10.0, 10.0);
        let k1: Vec<T> = (0..nj).map(|_| draw(-10.0, 10.0)).collect();
        let k2: Vec<T> = (0..nj).map(|_| draw(-10.0, 10.0)).collect();
        let gamma = generator.gamma(alpha, t, x, y, z, &k1, &k2);
        let inner = (0..nj).fold(T::zero(), |acc, j| acc + gamma[j] * (k2[j] - k1[j]) * jumps.weights[j]);
        let margin = generator.value(alpha, t, x, y, z, &k2) - generator.value(alpha, t, x, y, z, &k1) - inner;
        if margin < worst {
            worst = margin;
        }
        if margin < -tol {
            failures.push(GammaFailure {
                alpha: alpha.to_f64_lossy(),
                t: t.to_f64_lossy(),
                x: x.to_f64_lossy(),
                y: y.to_f64_lossy(),
                z: z.to_f64_lossy(),
                k1: k1.iter().map(|v| v.to_f64_lossy()).collect(),
                k2: k2.iter().map(|v| v.to_f64_lossy()).collect(),
                margin: margin.to_f64_lossy(),
            });
        }
    }
    ConditionReport { samples: n, worst_margin: worst.to_f64_lossy(), failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BarrierFn, Barriers, DriverForm, DriverSpec};

    fn constants_spec() -> ProblemSpec<f64> {
        let mut s = ProblemSpec::trivial(0.5);
        s.barriers = Barriers {
            lower: Some(BarrierFn::Constant { value: 0.0 }),
            upper: Some(BarrierFn::Constant { value: 1.0 }),
            growth_c: 10.0,
        };
        s
    }

    #[test]
    fn constants_validate_clean() {
        let report = validate(&constants_spec(), &ValidationConfig::default()).unwrap();
        assert!(report.is_empty(), "{:?}", report);
    }

    #[test]
    fn reversed_barriers_reported_at_first_node() {
        let mut s = constants_spec();
        s.barriers.lower = Some(BarrierFn::Constant { value: 1.0 });
        s.barriers.upper = Some(BarrierFn::Constant { value: 0.0 });
        let report = validate(&s, &ValidationConfig::default()).unwrap();
        let first = report.violations.iter().find(|v| v.kind == ViolationKind::BarrierOrder).unwrap();
        assert!(first.message.starts_with("barrier order violated at (t,x)=(0, -5)"), "{}", first.message);
    }

    #[test]
    fn gamma_below_minus_one_is_reported() {
        let mut s = constants_spec();
        s.jumps = JumpMeasure { marks: vec![0.1], weights: vec![1.0] };
        s.driver = DriverSpec { form: DriverForm::JumpRisk { rate: 0.0, gamma: vec![-2.0] }, source: Default::default(), lipschitz: 10.0 };
        let report = validate(&s, &ValidationConfig::default()).unwrap();
        assert!(report.contains(ViolationKind::GammaLowerBound));
        assert!(report.violations.iter().any(|v| v.message.contains("gamma lower bound violated")));
    }

    #[test]
    fn validation_is_deterministic() {
        let mut s = constants_spec();
        s.coefficients.lipschitz = 1e-3;
        s.coefficients.drift = crate::model::StateControlFn::Affine { c0: 0.0, cx: 1.0, ca: 0.0 };
        let cfg = ValidationConfig { seed: 9, ..Default::default() };
        let a = validate(&s, &cfg).unwrap();
        let b = validate(&s, &cfg).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}
