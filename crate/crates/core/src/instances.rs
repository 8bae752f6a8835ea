//! Bundled problem instances and a generator of small random instances for
//! oracle comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::TimeStateGrid;
use crate::model::{
    BarrierFn, Barriers, CoefficientSet, DriverForm, DriverSpec, JumpMeasure, Piece, ProblemSpec, Source, StateControlFn,
    TerminalFn,
};

/// Named instance with its default grid `(N, M, x_min, x_max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundled {
    pub name: &'static str,
    pub spec: ProblemSpec<f64>,
    pub grid: (usize, usize, f64, f64),
}

impl Bundled {
    pub fn grid(&self) -> TimeStateGrid<f64> {
        let (n, m, lo, hi) = self.grid;
        TimeStateGrid::new(n, m, lo, hi, self.spec.horizon).expect("bundled grid")
    }
}

fn coefficients(drift: StateControlFn<f64>, vol: StateControlFn<f64>, jump: StateControlFn<f64>) -> CoefficientSet<f64> {
    CoefficientSet { drift, vol, jump, lipschitz: 10.0 }
}

fn saturating_barrier(c0: f64, ct: f64, amplitude: f64, slope: f64, shift: f64) -> BarrierFn<f64> {
    BarrierFn::Saturating { c0, ct, amplitude, slope, shift }
}

/// `h1 ≡ 0`, `h2 ≡ 1`, `g ≡ 0.5` under a plain diffusion.
pub fn constants_demo() -> Bundled {
    let mut spec = ProblemSpec::trivial(0.5);
    spec.coefficients.vol = StateControlFn::constant(0.3);
    spec.barriers = Barriers {
        lower: Some(BarrierFn::Constant { value: 0.0 }),
        upper: Some(BarrierFn::Constant { value: 1.0 }),
        growth_c: 10.0,
    };
    Bundled { name: "constants_demo", spec, grid: (10, 21, -2.0, 2.0) }
}

/// Two controls, two jump marks, a z-ambiguity driver and smooth obstacles.
pub fn mixed_jump() -> Bundled {
    let spec = ProblemSpec {
        coefficients: coefficients(
            StateControlFn::Saturating { c0: 0.0, amplitude: 0.3, slope: -1.0, shift: 0.0, ca: 0.1 },
            StateControlFn::Affine { c0: 0.2, cx: 0.0, ca: 0.1 },
            StateControlFn::Affine { c0: 1.0, cx: 0.0, ca: 0.5 },
        ),
        jumps: JumpMeasure { marks: vec![-0.2, 0.3], weights: vec![0.5, 0.3] },
        driver: DriverSpec {
            form: DriverForm::ZAmbiguity { kappa: 0.2, rate: 0.05 },
            source: Source { c0: 0.0, cx: 0.0, ca: -0.05 },
            lipschitz: 10.0,
        },
        barriers: Barriers {
            lower: Some(saturating_barrier(0.2, -0.25, 0.4, 1.0, 0.0)),
            upper: Some(saturating_barrier(0.8, 0.0, 0.4, 1.0, 0.2)),
            growth_c: 10.0,
        },
        terminal: TerminalFn::Saturating { c0: 0.2, amplitude: 0.5, slope: 1.0, shift: 0.0 },
        controls: vec![0.0, 1.0],
        horizon: 0.5,
        growth_p: 1,
    };
    Bundled { name: "mixed_jump", spec, grid: (10, 41, -4.0, 4.0) }
}

/// Two controls, two jump marks, a discounting driver with a running source:
/// the criterion is then a plain expectation and can be sampled.
pub fn mixed_discount() -> Bundled {
    let spec = ProblemSpec {
        coefficients: coefficients(
            StateControlFn::Affine { c0: 0.0, cx: -0.2, ca: 0.3 },
            StateControlFn::Affine { c0: 0.25, cx: 0.0, ca: 0.1 },
            StateControlFn::Affine { c0: 1.0, cx: 0.0, ca: 0.5 },
        ),
        jumps: JumpMeasure { marks: vec![-0.2, 0.3], weights: vec![0.4, 0.3] },
        driver: DriverSpec {
            form: DriverForm::Discount { rate: 0.05, rate_alpha: 0.1 },
            source: Source { c0: 0.3, cx: 0.05, ca: 0.05 },
            lipschitz: 10.0,
        },
        barriers: Barriers {
            lower: Some(saturating_barrier(-0.2, 0.0, 0.4, 1.0, 0.0)),
            upper: Some(saturating_barrier(0.45, 0.0, 0.3, 1.5, 0.3)),
            growth_c: 10.0,
        },
        terminal: TerminalFn::Saturating { c0: 0.15, amplitude: 0.45, slope: 1.2, shift: 0.0 },
        controls: vec![0.0, 1.0],
        horizon: 0.5,
        growth_p: 1,
    };
    Bundled { name: "mixed_discount", spec, grid: (20, 61, -3.0, 3.0) }
}

/// `g = 1{x > 0}` between `h1 ≡ 0` and `h2 ≡ 1`.
pub fn step_envelope() -> Bundled {
    let mut spec = ProblemSpec::trivial(0.0);
    spec.coefficients.vol = StateControlFn::constant(0.3);
    spec.driver = DriverSpec::with_form(DriverForm::ZAmbiguity { kappa: 0.1, rate: 0.0 });
    spec.barriers = Barriers {
        lower: Some(BarrierFn::Constant { value: 0.0 }),
        upper: Some(BarrierFn::Constant { value: 1.0 }),
        growth_c: 10.0,
    };
    spec.terminal = TerminalFn::Piecewise {
        breakpoints: vec![0.0],
        pieces: vec![Piece { value: 0.0, slope: 0.0 }, Piece { value: 1.0, slope: 0.0 }],
        point_values: vec![0.0],
    };
    spec.horizon = 0.5;
    Bundled { name: "step_envelope", spec, grid: (20, 41, -2.0, 2.0) }
}

/// `f = −0.1·y`, `g ≡ 1`, far obstacles, `Δt = 0.1`, `N = 10`.
pub fn linear_closed_form() -> Bundled {
    let mut spec = ProblemSpec::trivial(1.0);
    spec.coefficients.vol = StateControlFn::constant(0.2);
    spec.driver = DriverSpec::with_form(DriverForm::Discount { rate: 0.1, rate_alpha: 0.0 });
    spec.barriers = Barriers {
        lower: Some(BarrierFn::Constant { value: -1.0 }),
        upper: Some(BarrierFn::Constant { value: 2.0 }),
        growth_c: 10.0,
    };
    spec.horizon = 1.0;
    Bundled { name: "linear_closed_form", spec, grid: (10, 11, -1.0, 1.0) }
}

pub fn bundled() -> Vec<Bundled> {
    vec![constants_demo(), mixed_jump(), mixed_discount(), step_envelope(), linear_closed_form()]
}

pub fn bundled_by_name(name: &str) -> Option<Bundled> {
    bundled().into_iter().find(|b| b.name == name)
}

/// Driver families drawn by [`random_small_instance`], in rotation.
pub const DRIVER_FAMILIES: [&str; 5] = ["zero", "linear", "discount", "z_ambiguity", "jump_risk"];

/// Small random instance whose scenario tree stays within the enumeration
/// budget.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallInstance {
    pub seed: u64,
    pub family: &'static str,
    pub spec: ProblemSpec<f64>,
    pub grid: TimeStateGrid<f64>,
    pub root: usize,
}

/// The driver family is `seed mod 5`; the tree shape `(N, J)` cycles
/// through `(3, 0), (2, 2), (2, 1), (1, 2), (2, 0)` with `seed / 5`.
/// Obstacles are random piecewise-linear with `h1 < h2`; the terminal reward
/// is piecewise with jumps. Coefficients are small enough that every step of
/// the scheme is monotone in the next-step values.
pub fn random_small_instance(seed: u64) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family_idx = (seed % 5) as usize;
    let (n, n_marks) = [(3, 0), (2, 2), (2, 1), (1, 2), (2, 0)][((seed / 5) % 5) as usize];
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);

    let marks: Vec<f64> = (0..n_marks).map(|_| u(-0.4, 0.4)).collect();
    let weights: Vec<f64> = (0..n_marks).map(|_| u(0.2, 0.8)).collect();
    let gamma: Vec<f64> = (0..n_marks).map(|_| u(-0.5, 0.8)).collect();
    let form = match family_idx {
        0 => DriverForm::Zero,
        1 => DriverForm::Linear { rate: u(0.0, 0.5), rate_alpha: 0.0, z_coef: u(-0.3, 0.3), gamma: gamma.clone() },
        2 => DriverForm::Discount { rate: u(0.0, 0.5), rate_alpha: 0.0 },
        3 => DriverForm::ZAmbiguity { kappa: u(0.0, 0.3), rate: u(0.0, 0.3) },
        _ => DriverForm::JumpRisk { rate: u(0.0, 0.3), gamma },
    };
    let source = Source { c0: u(-0.3, 0.3), cx: u(-0.2, 0.2), ca: 0.0 };

    let mut knots: Vec<f64> = (0..3).map(|_| u(-1.0, 1.0)).collect();
    knots.sort_by(f64::total_cmp);
    let lower_values: Vec<f64> = (0..3).map(|_| u(-1.0, 0.1)).collect();
    let upper_values: Vec<f64> = (0..3).map(|_| u(0.4, 1.3)).collect();
    let mut breaks = vec![u(-0.8, 0.0), u(0.0, 0.8)];
    breaks.sort_by(f64::total_cmp);
    let pieces: Vec<Piece<f64>> = (0..3).map(|_| Piece { value: u(-1.2, 1.6), slope: u(-1.0, 1.0) }).collect();
    let point_values = vec![u(-1.2, 1.6), u(-1.2, 1.6)];

    let spec = ProblemSpec {
        coefficients: coefficients(
            StateControlFn::Affine { c0: u(-0.2, 0.2), cx: u(-0.2, 0.2), ca: 0.0 },
            StateControlFn::Affine { c0: u(0.2, 0.4), cx: 0.0, ca: 0.0 },
            StateControlFn::constant(1.0),
        ),
        jumps: JumpMeasure { marks, weights },
        driver: DriverSpec { form, source, lipschitz: 10.0 },
        barriers: Barriers {
            lower: Some(BarrierFn::PiecewiseLinear { knots: knots.clone(), values: lower_values, ct: u(-0.2, 0.2) }),
            upper: Some(BarrierFn::PiecewiseLinear { knots, values: upper_values, ct: u(-0.2, 0.2) }),
            growth_c: 10.0,
        },
        terminal: TerminalFn::Piecewise { breakpoints: breaks, pieces, point_values },
        controls: vec![0.0],
        horizon: 0.1 * n as f64,
        growth_p: 1,
    };
    let grid = TimeStateGrid::new(n, 9, -1.0, 1.0, spec.horizon).expect("small grid");
    let root = 2 + (seed % 5) as usize;
    SmallInstance { seed, family: DRIVER_FAMILIES[family_idx], spec, grid, root }
}
