#![allow(dead_code)]

use mixed_dynkin::chain::TimeStateGrid;
use mixed_dynkin::model::{
    BarrierFn, Barriers, CoefficientSet, DriverForm, DriverSpec, JumpMeasure, Piece, ProblemSpec, Source, StateControlFn,
    TerminalFn,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAMILIES: usize = 5;

/// Random two-control instance on an 8 × 17 grid over `[−2, 2]`, `T = 0.4`.
///
/// The driver family is `seed mod 5`; obstacles are smooth (saturating or
/// affine) and well separated; the terminal reward is piecewise with jumps.
/// Coefficients keep every explicit step monotone in the next-step values.
pub fn random_spec(seed: u64) -> (ProblemSpec<f64>, TimeStateGrid<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let n_marks = (u(0.0, 3.0) as usize).min(2);
    let marks: Vec<f64> = (0..n_marks).map(|_| u(-0.5, 0.5)).collect();
    let weights: Vec<f64> = (0..n_marks).map(|_| u(0.2, 1.0)).collect();
    let gamma: Vec<f64> = (0..n_marks).map(|_| u(-0.5, 0.8)).collect();
    let form = match seed % FAMILIES as u64 {
        0 => DriverForm::Zero,
        1 => DriverForm::Linear { rate: u(0.0, 0.5), rate_alpha: u(0.0, 0.2), z_coef: u(-0.3, 0.3), gamma },
        2 => DriverForm::Discount { rate: u(0.0, 0.5), rate_alpha: u(0.0, 0.2) },
        3 => DriverForm::ZAmbiguity { kappa: u(0.0, 0.3), rate: u(0.0, 0.3) },
        _ => DriverForm::JumpRisk { rate: u(0.0, 0.3), gamma },
    };
    let source = Source { c0: u(-0.5, 0.5), cx: u(-0.2, 0.2), ca: u(-0.2, 0.2) };
    let mut barrier = |centre: f64| {
        if u(0.0, 1.0) < 0.5 {
            BarrierFn::Saturating { c0: centre + u(-0.2, 0.2), ct: u(-0.3, 0.3), amplitude: u(0.0, 0.3), slope: u(0.5, 2.0), shift: u(-1.0, 1.0) }
        } else {
            BarrierFn::Affine { c0: centre + u(-0.2, 0.2), ct: u(-0.3, 0.3), cx: u(-0.1, 0.1) }
        }
    };
    let lower = barrier(-0.5);
    let upper = barrier(1.0);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let mut breaks = vec![u(-1.5, 0.0), u(0.0, 1.5)];
    breaks.sort_by(f64::total_cmp);
    let pieces = (0..3).map(|_| Piece { value: u(-1.0, 1.5), slope: u(-0.5, 0.5) }).collect();
    let point_values = vec![u(-1.0, 1.5), u(-1.0, 1.5)];
    let spec = ProblemSpec {
        coefficients: CoefficientSet {
            drift: StateControlFn::Affine { c0: u(-0.3, 0.3), cx: u(-0.2, 0.2), ca: u(-0.3, 0.3) },
            vol: StateControlFn::Affine { c0: u(0.25, 0.4), cx: 0.0, ca: u(0.0, 0.1) },
            jump: StateControlFn::Affine { c0: 1.0, cx: 0.0, ca: u(0.0, 0.5) },
            lipschitz: 10.0,
        },
        jumps: JumpMeasure { marks, weights },
        driver: DriverSpec { form, source, lipschitz: 10.0 },
        barriers: Barriers { lower: Some(lower), upper: Some(upper), growth_c: 10.0 },
        terminal: TerminalFn::Piecewise { breakpoints: breaks, pieces, point_values },
        controls: vec![0.0, 1.0],
        horizon: 0.4,
        growth_p: 1,
    };
    let grid = TimeStateGrid::new(8, 17, -2.0, 2.0, 0.4).expect("grid");
    (spec, grid)
}

/// `spec` restricted to its first control.
pub fn first_control_only(spec: &ProblemSpec<f64>) -> ProblemSpec<f64> {
    let mut s = spec.clone();
    s.controls.truncate(1);
    s
}

pub fn assert_nodewise_le(a: &[f64], b: &[f64], tol: f64, what: &str) {
    for (idx, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(*x <= *y + tol, "{what}: entry {idx}: {x} > {y}");
    }
}

/// Raises one piece of data by `bump`: `0` terminal, `1` lower obstacle,
/// `2` upper obstacle, otherwise the driver source.
pub fn raise(spec: &ProblemSpec<f64>, which: usize, bump: f64) -> ProblemSpec<f64> {
    let mut s = spec.clone();
    match which {
        0 => s.terminal = shift_terminal(s.terminal, bump),
        1 => s.barriers.lower = s.barriers.lower.map(|h| shift_barrier(h, bump)),
        2 => s.barriers.upper = s.barriers.upper.map(|h| shift_barrier(h, bump)),
        _ => s.driver.source.c0 += bump,
    }
    s
}

fn shift_terminal(g: TerminalFn<f64>, by: f64) -> TerminalFn<f64> {
    match g {
        TerminalFn::Piecewise { breakpoints, pieces, point_values } => TerminalFn::Piecewise {
            breakpoints,
            pieces: pieces.into_iter().map(|p| Piece { value: p.value + by, ..p }).collect(),
            point_values: point_values.into_iter().map(|v| v + by).collect(),
        },
        other => panic!("unexpected terminal family {other:?}"),
    }
}

fn shift_barrier(h: BarrierFn<f64>, by: f64) -> BarrierFn<f64> {
    match h {
        BarrierFn::Saturating { c0, ct, amplitude, slope, shift } => BarrierFn::Saturating { c0: c0 + by, ct, amplitude, slope, shift },
        BarrierFn::Affine { c0, ct, cx } => BarrierFn::Affine { c0: c0 + by, ct, cx },
        other => panic!("unexpected barrier family {other:?}"),
    }
}
