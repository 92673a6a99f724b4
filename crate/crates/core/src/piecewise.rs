//! Continuous piecewise-linear maps on the real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Continuous piecewise-linear function given by knots and the two tail slopes.
///
/// Between consecutive knots the function interpolates linearly; left of the
/// first knot it continues with `left_slope`, right of the last with
/// `right_slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear<T> {
    points: Vec<(T, T)>,
    left_slope: T,
    right_slope: T,
}

impl<T: Scalar> PiecewiseLinear<T> {
    pub fn new(points: Vec<(T, T)>, left_slope: T, right_slope: T) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMap("at least one knot is required".into()));
        }
        let finite = points.iter().all(|(x, y)| x.is_finite() && y.is_finite())
            && left_slope.is_finite()
            && right_slope.is_finite();
        if !finite {
            return Err(Error::InvalidMap("knots and slopes must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidMap("knots must be strictly increasing".into()));
        }
        Ok(PiecewiseLinear {
            points,
            left_slope,
            right_slope,
        })
    }

    pub fn linear(intercept: T, slope: T) -> Self {
        PiecewiseLinear {
            points: vec![(T::zero(), intercept)],
            left_slope: slope,
            right_slope: slope,
        }
    }

    pub fn zero() -> Self {
        Self::linear(T::zero(), T::zero())
    }

    pub fn constant(c: T) -> Self {
        Self::linear(c, T::zero())
    }

    pub fn identity() -> Self {
        Self::linear(T::zero(), T::one())
    }

    /// Haircut map `(1+a1) y⁺ − (1+a2) y⁻`.
    pub fn haircut(a1: T, a2: T) -> Self {
        PiecewiseLinear {
            points: vec![(T::zero(), T::zero())],
            left_slope: T::one() + a2,
            right_slope: T::one() + a1,
        }
    }

    /// Call payoff `(s − k)⁺`.
    pub fn call(strike: T) -> Self {
        PiecewiseLinear {
            points: vec![(strike, T::zero())],
            left_slope: T::zero(),
            right_slope: T::one(),
        }
    }

    /// Put payoff `(k − s)⁺`.
    pub fn put(strike: T) -> Self {
        PiecewiseLinear {
            points: vec![(strike, T::zero())],
            left_slope: -T::one(),
            right_slope: T::zero(),
        }
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn left_slope(&self) -> T {
        self.left_slope
    }

    pub fn right_slope(&self) -> T {
        self.right_slope
    }

    /// Slope and intercept of the linear piece active at `x`.
    fn piece(&self, x: T) -> (T, T) {
        if x.is_nan() {
            return (x, x);
        }
        let pts = &self.points;
        let (x0, y0) = pts[0];
        if x <= x0 {
            return (self.left_slope, y0 - self.left_slope * x0);
        }
        let (xm, ym) = pts[pts.len() - 1];
        if x >= xm {
            return (self.right_slope, ym - self.right_slope * xm);
        }
        let k = pts.partition_point(|p| p.0 <= x);
        let (xa, ya) = pts[k - 1];
        let (xb, yb) = pts[k];
        let slope = (yb - ya) / (xb - xa);
        (slope, ya - slope * xa)
    }

    pub fn eval(&self, x: T) -> T {
        if x.is_nan() {
            return x;
        }
        let pts = &self.points;
        let (x0, y0) = pts[0];
        if x <= x0 {
            return y0 + self.left_slope * (x - x0);
        }
        let (xm, ym) = pts[pts.len() - 1];
        if x >= xm {
            return ym + self.right_slope * (x - xm);
        }
        let k = pts.partition_point(|p| p.0 <= x);
        let (xa, ya) = pts[k - 1];
        let (xb, yb) = pts[k];
        ya + (yb - ya) * (x - xa) / (xb - xa)
    }

    /// All piece slopes, tails included.
    pub fn slopes(&self) -> Vec<T> {
        let mut out = vec![self.left_slope];
        out.extend(
            self.points
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)),
        );
        out.push(self.right_slope);
        out
    }

    pub fn lipschitz(&self) -> T {
        self.slopes()
            .into_iter()
            .fold(T::zero(), |m, s| m.max(s.abs()))
    }

    pub fn is_increasing(&self) -> bool {
        self.slopes().into_iter().all(|s| s >= T::zero())
    }

    /// `x ↦ λ f(x)`.
    pub fn scaled(&self, lambda: T) -> Self {
        PiecewiseLinear {
            points: self.points.iter().map(|&(x, y)| (x, lambda * y)).collect(),
            left_slope: lambda * self.left_slope,
            right_slope: lambda * self.right_slope,
        }
    }

    /// `x ↦ f(−x)`.
    pub fn reflected(&self) -> Self {
        PiecewiseLinear {
            points: self.points.iter().rev().map(|&(x, y)| (-x, y)).collect(),
            left_slope: -self.right_slope,
            right_slope: -self.left_slope,
        }
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Self) -> Self {
        let mut xs: Vec<T> = self
            .points
            .iter()
            .chain(other.points.iter())
            .map(|p| p.0)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        xs.dedup();
        PiecewiseLinear {
            points: xs
                .into_iter()
                .map(|x| (x, self.eval(x) + other.eval(x)))
                .collect(),
            left_slope: self.left_slope + other.left_slope,
            right_slope: self.right_slope + other.right_slope,
        }
    }

    /// Whether `f(x) ≥ 0` for every `x ≥ a`, decided on knots and the right tail.
    pub fn nonnegative_from(&self, a: T) -> bool {
        self.eval(a) >= T::zero()
            && self
                .points
                .iter()
                .filter(|p| p.0 > a)
                .all(|p| p.1 >= T::zero())
            && self.right_slope >= T::zero()
    }

    /// Whether `f(x) ≤ 0` for every `x ≥ a`.
    pub fn nonpositive_from(&self, a: T) -> bool {
        self.scaled(-T::one()).nonnegative_from(a)
    }

    /// Whether `f(λx) = λ f(x)` for all `λ ≥ 0`, i.e. linear on each half-line.
    pub fn is_positively_homogeneous(&self) -> bool {
        if self.eval(T::zero()) != T::zero() {
            return false;
        }
        let eps = T::epsilon() * T::lit(8.0);
        self.points.iter().all(|&(x, y)| {
            let slope = if x < T::zero() {
                self.left_slope
            } else {
                self.right_slope
            };
            let expected = slope * x;
            (y - expected).abs() <= eps * (x.abs() * slope.abs().max(T::one()))
        })
    }

    /// Mean of `f(s·e^{a u})` over `u` uniform on `[−1, 1]`, in closed form.
    pub fn log_cell_average(&self, s: T, a: T) -> T {
        if a <= T::zero() {
            return self.eval(s);
        }
        let mut cuts = vec![-T::one()];
        for &(k, _) in &self.points {
            if k > T::zero() {
                let u = (k / s).ln() / a;
                if u > -T::one() && u < T::one() {
                    cuts.push(u);
                }
            }
        }
        cuts.push(T::one());
        let mut total = T::zero();
        for w in cuts.windows(2) {
            let (u1, u2) = (w[0], w[1]);
            if u2 <= u1 {
                continue;
            }
            let mid = s * (a * T::half() * (u1 + u2)).exp();
            let (slope, intercept) = self.piece(mid);
            let growth = s * (a * u1).exp() * (a * (u2 - u1)).exp_m1() / a;
            total = total + intercept * (u2 - u1) + slope * growth;
        }
        total * T::half()
    }
}
