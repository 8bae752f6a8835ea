//! Named parametric function families for coefficients, barriers and the
//! terminal reward.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A function of state and control, `(x, α) ↦ φ(x, α)`.
///
/// Used for the drift `b`, the volatility `σ` and the state/control factor of
/// the jump coefficient `β(x, α, e) = e · φ(x, α)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields, bound = "T: Scalar")]
pub enum StateControlFn<T> {
    /// `c0 + cx·x + ca·α`
    Affine {
        c0: T,
        #[serde(default)]
        cx: T,
        #[serde(default)]
        ca: T,
    },
    /// `c0 + amplitude·tanh(slope·(x − shift)) + ca·α`
    Saturating {
        c0: T,
        amplitude: T,
        slope: T,
        #[serde(default)]
        shift: T,
        #[serde(default)]
        ca: T,
    },
}

impl<T: Scalar> StateControlFn<T> {
    pub fn constant(c0: T) -> Self {
        Self::Affine { c0, cx: T::zero(), ca: T::zero() }
    }

    #[inline]
    pub fn eval(&self, x: T, alpha: T) -> T {
        match *self {
            Self::Affine { c0, cx, ca } => c0 + cx * x + ca * alpha,
            Self::Saturating { c0, amplitude, slope, shift, ca } => {
                c0 + amplitude * (slope * (x - shift)).tanh() + ca * alpha
            }
        }
    }

    /// True when the function does not depend on the control.
    pub fn control_free(&self) -> bool {
        match *self {
            Self::Affine { ca, .. } | Self::Saturating { ca, .. } => ca == T::zero(),
        }
    }
}

/// A barrier `(t, x) ↦ h(t, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields, bound = "T: Scalar")]
pub enum BarrierFn<T> {
    Constant {
        value: T,
    },
    /// `c0 + ct·t + cx·x`
    Affine {
        c0: T,
        #[serde(default)]
        ct: T,
        #[serde(default)]
        cx: T,
    },
    /// `c0 + ct·t + cx·x + cxx·x²`
    Quadratic {
        c0: T,
        #[serde(default)]
        ct: T,
        #[serde(default)]
        cx: T,
        cxx: T,
    },
    /// `c0 + ct·t + amplitude·tanh(slope·(x − shift))`
    Saturating {
        c0: T,
        #[serde(default)]
        ct: T,
        amplitude: T,
        slope: T,
        #[serde(default)]
        shift: T,
    },
    /// Continuous piecewise-linear interpolation through `(knots, values)`,
    /// flat outside the knot range, plus `ct·t`.
    PiecewiseLinear {
        knots: Vec<T>,
        values: Vec<T>,
        #[serde(default)]
        ct: T,
    },
}

impl<T: Scalar> BarrierFn<T> {
    pub fn eval(&self, t: T, x: T) -> T {
        match self {
            Self::Constant { value } => *value,
            Self::Affine { c0, ct, cx } => *c0 + *ct * t + *cx * x,
            Self::Quadratic { c0, ct, cx, cxx } => *c0 + *ct * t + *cx * x + *cxx * x * x,
            Self::Saturating { c0, ct, amplitude, slope, shift } => {
                *c0 + *ct * t + *amplitude * (*slope * (x - *shift)).tanh()
            }
            Self::PiecewiseLinear { knots, values, ct } => interp_flat(knots, values, x) + *ct * t,
        }
    }

    /// Smooth families (class C^{1,2} in `(t, x)`).
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::PiecewiseLinear { .. })
    }

    pub(crate) fn check_shape(&self) -> Result<(), String> {
        match self {
            Self::PiecewiseLinear { knots, values, .. } => check_knots(knots, values),
            _ => Ok(()),
        }
    }
}

/// One affine piece of a [`Piecewise`] function: `value + slope·(x − anchor)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Piece<T> {
    pub value: T,
    pub slope: T,
}

/// Piecewise-affine function with declared breakpoints, possibly
/// discontinuous at them.
///
/// With breakpoints `b_0 < … < b_{m−1}` there are `m + 1` pieces. Piece 0
/// lives on `(−∞, b_0)` and is anchored at `b_0`; piece `j ≥ 1` lives on
/// `(b_{j−1}, b_j)` and is anchored at `b_{j−1}`. `point_values[j]` is the
/// value taken exactly at `b_j`. With no breakpoints the single piece is
/// anchored at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Piecewise<T> {
    pub breakpoints: Vec<T>,
    pub pieces: Vec<Piece<T>>,
    pub point_values: Vec<T>,
}

impl<T: Scalar> Piecewise<T> {
    pub fn check_shape(&self) -> Result<(), String> {
        let m = self.breakpoints.len();
        if self.pieces.len() != m + 1 {
            return Err(format!("piecewise terminal needs {} pieces for {} breakpoints, got {}", m + 1, m, self.pieces.len()));
        }
        if self.point_values.len() != m {
            return Err(format!("piecewise terminal needs {} point values, got {}", m, self.point_values.len()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("piecewise breakpoints must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn anchor(&self, piece: usize) -> T {
        match (piece, self.breakpoints.is_empty()) {
            (_, true) => T::zero(),
            (0, false) => self.breakpoints[0],
            (j, false) => self.breakpoints[j - 1],
        }
    }

    #[inline]
    pub fn piece_eval(&self, piece: usize, x: T) -> T {
        let p = self.pieces[piece];
        p.value + p.slope * (x - self.anchor(piece))
    }

    /// Returns `(piece index, Some(breakpoint index))` if `x` sits on a breakpoint.
    fn locate(&self, x: T) -> (usize, Option<usize>) {
        for (j, &b) in self.breakpoints.iter().enumerate() {
            if x < b {
                return (j, None);
            }
            if x == b {
                return (j, Some(j));
            }
        }
        (self.breakpoints.len(), None)
    }

    pub fn eval(&self, x: T) -> T {
        match self.locate(x) {
            (_, Some(j)) => self.point_values[j],
            (piece, None) => self.piece_eval(piece, x),
        }
    }

    /// Lower semicontinuous envelope: the minimum of the point value and both
    /// one-sided limits at breakpoints, the function itself elsewhere.
    pub fn lsc_envelope(&self, x: T) -> T {
        match self.locate(x) {
            (_, Some(j)) => {
                let left = self.piece_eval(j, x);
                let right = self.piece_eval(j + 1, x);
                self.point_values[j].min(left).min(right)
            }
            (piece, None) => self.piece_eval(piece, x),
        }
    }

    /// Inf-convolution `inf_y { g(y) + n·|x − y| }`, evaluated in closed form.
    ///
    /// Returns `−∞` when an unbounded piece is steeper than `n` in the
    /// direction of its unbounded end.
    pub fn inf_convolution(&self, n: T, x: T) -> T {
        let m = self.breakpoints.len();
        let mut best = T::infinity();
        let mut consider = |v: T| {
            if v < best {
                best = v;
            }
        };
        for (j, &b) in self.breakpoints.iter().enumerate() {
            consider(self.point_values[j] + n * (x - b).abs());
        }
        for piece in 0..=m {
            let slope = self.pieces[piece].slope;
            let lo = if piece == 0 { None } else { Some(self.breakpoints[piece - 1]) };
            let hi = if piece == m { None } else { Some(self.breakpoints[piece]) };
            if lo.is_none() && slope > n {
                return T::neg_infinity();
            }
            if hi.is_none() && slope < -n {
                return T::neg_infinity();
            }
            if let Some(a) = lo {
                consider(self.piece_eval(piece, a) + n * (x - a).abs());
            }
            if let Some(b) = hi {
                consider(self.piece_eval(piece, b) + n * (x - b).abs());
            }
            let inside = lo.is_none_or(|a| x > a) && hi.is_none_or(|b| x < b);
            if inside {
                consider(self.piece_eval(piece, x));
            }
        }
        best
    }

    /// Largest absolute piece slope (the Lipschitz constant of each piece).
    pub fn max_slope(&self) -> T {
        self.pieces.iter().fold(T::zero(), |acc, p| acc.max(p.slope.abs()))
    }
}

/// Terminal reward `x ↦ g(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields, bound = "T: Scalar")]
pub enum TerminalFn<T> {
    Constant {
        value: T,
    },
    /// `c0 + cx·x`
    Affine {
        c0: T,
        #[serde(default)]
        cx: T,
    },
    /// `scale·(x − strike)⁺`
    Call {
        strike: T,
        scale: T,
    },
    /// `c0 + amplitude·tanh(slope·(x − shift))`
    Saturating {
        c0: T,
        amplitude: T,
        slope: T,
        #[serde(default)]
        shift: T,
    },
    PiecewiseLinear {
        knots: Vec<T>,
        values: Vec<T>,
    },
    /// Possibly discontinuous; see [`Piecewise`].
    Piecewise {
        breakpoints: Vec<T>,
        pieces: Vec<Piece<T>>,
        point_values: Vec<T>,
    },
}

impl<T: Scalar> TerminalFn<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Constant { value } => *value,
            Self::Affine { c0, cx } => *c0 + *cx * x,
            Self::Call { strike, scale } => {
                if x > *strike {
                    *scale * (x - *strike)
                } else {
                    T::zero()
                }
            }
            Self::Saturating { c0, amplitude, slope, shift } => *c0 + *amplitude * (*slope * (x - *shift)).tanh(),
            Self::PiecewiseLinear { knots, values } => interp_flat(knots, values, x),
            Self::Piecewise { .. } => self.as_piecewise().expect("piecewise").eval(x),
        }
    }

    /// Breakpoint representation, available for every piecewise-affine family.
    pub fn as_piecewise(&self) -> Option<Piecewise<T>> {
        let zero = T::zero();
        let flat = |value: T| Piece { value, slope: zero };
        match self {
            Self::Constant { value } => Some(Piecewise { breakpoints: vec![], pieces: vec![flat(*value)], point_values: vec![] }),
            Self::Affine { c0, cx } => Some(Piecewise {
                breakpoints: vec![],
                pieces: vec![Piece { value: *c0, slope: *cx }],
                point_values: vec![],
            }),
            Self::Call { strike, scale } => Some(Piecewise {
                breakpoints: vec![*strike],
                pieces: vec![flat(zero), Piece { value: zero, slope: *scale }],
                point_values: vec![zero],
            }),
            Self::Saturating { .. } => None,
            Self::PiecewiseLinear { knots, values } => {
                let m = knots.len();
                let mut pieces = Vec::with_capacity(m + 1);
                pieces.push(flat(values[0]));
                for j in 1..m {
                    pieces.push(Piece { value: values[j - 1], slope: segment_slope(knots, values, j) });
                }
                pieces.push(flat(values[m - 1]));
                Some(Piecewise { breakpoints: knots.clone(), pieces, point_values: values.clone() })
            }
            Self::Piecewise { breakpoints, pieces, point_values } => Some(Piecewise {
                breakpoints: breakpoints.clone(),
                pieces: pieces.clone(),
                point_values: point_values.clone(),
            }),
        }
    }

    pub fn is_continuous(&self) -> bool {
        match self {
            Self::Piecewise { .. } => {
                let pw = self.as_piecewise().expect("piecewise");
                pw.breakpoints.iter().enumerate().all(|(j, &b)| {
                    let left = pw.piece_eval(j, b);
                    let right = pw.piece_eval(j + 1, b);
                    left == right && left == pw.point_values[j]
                })
            }
            _ => true,
        }
    }

    pub(crate) fn check_shape(&self) -> Result<(), String> {
        match self {
            Self::PiecewiseLinear { knots, values } => check_knots(knots, values),
            Self::Piecewise { .. } => self.as_piecewise().expect("piecewise").check_shape(),
            _ => Ok(()),
        }
    }
}

fn check_knots<T: Scalar>(knots: &[T], values: &[T]) -> Result<(), String> {
    if knots.is_empty() || knots.len() != values.len() {
        return Err(format!("piecewise-linear needs matching non-empty knots/values (got {} and {})", knots.len(), values.len()));
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err("piecewise-linear knots must be strictly increasing".into());
    }
    Ok(())
}

#[inline]
fn segment_slope<T: Scalar>(knots: &[T], values: &[T], j: usize) -> T {
    (values[j] - values[j - 1]) / (knots[j] - knots[j - 1])
}

fn interp_flat<T: Scalar>(knots: &[T], values: &[T], x: T) -> T {
    let m = knots.len();
    if x <= knots[0] {
        return values[0];
    }
    if x >= knots[m - 1] {
        return values[m - 1];
    }
    let j = knots.partition_point(|&k| k <= x);
    values[j - 1] + segment_slope(knots, values, j) * (x - knots[j - 1])
}
