//! One-dimensional tabulated curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn validate_breakpoints(points: &[(f64, f64)], what: &str) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Validation(format!("{what} needs at least two breakpoints")));
    }
    for (k, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Validation(format!("{what}: breakpoint {k} is not finite")));
        }
    }
    for (k, w) in points.windows(2).enumerate() {
        if w[1].0 <= w[0].0 {
            return Err(Error::Validation(format!(
                "{what}: abscissae must be strictly increasing (breakpoint {})",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Index `k` of the segment `[x_k, x_{k+1}]` containing `x`, clamped to the ends.
fn segment(xs: impl Fn(usize) -> f64, n: usize, x: f64) -> usize {
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < xs(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Piecewise-linear curve through ordered breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        validate_breakpoints(&points, "piecewise-linear curve")?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Interpolates inside the domain and holds the end values outside it.
    pub fn eval(&self, x: f64) -> f64 {
        let p = &self.points;
        let (lo, hi) = self.domain();
        if x <= lo {
            return p[0].1;
        }
        if x >= hi {
            return p[p.len() - 1].1;
        }
        let k = segment(|i| p[i].0, p.len(), x);
        let (x0, y0) = p[k];
        let (x1, y1) = p[k + 1];
        if x == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = Error;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(c: PiecewiseLinear) -> Self {
        c.points
    }
}

/// Shape-preserving cubic Hermite curve (Fritsch–Carlson slopes).
///
/// Continuously differentiable, which the gradient backend relies on, and
/// monotone wherever the data are. Outside the domain it extends linearly
/// with the end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        validate_breakpoints(&points, "monotone cubic curve")?;
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let delta: Vec<f64> = (0..n - 1)
            .map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]))
            .collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            m[k] = if delta[k - 1] * delta[k] <= 0.0 {
                0.0
            } else {
                (delta[k - 1] + delta[k]) / 2.0
            };
        }
        for k in 0..n - 1 {
            if delta[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / delta[k];
            let b = m[k + 1] / delta[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[k] = t * a * delta[k];
                m[k + 1] = t * b * delta[k];
            }
        }
        Ok(Self { xs, ys, slopes: m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.ys.iter().copied()).collect()
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        let (lo, hi) = self.domain();
        if x <= lo {
            return (self.ys[0] + self.slopes[0] * (x - lo), self.slopes[0]);
        }
        if x >= hi {
            return (
                self.ys[n - 1] + self.slopes[n - 1] * (x - hi),
                self.slopes[n - 1],
            );
        }
        let k = segment(|i| self.xs[i], n, x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let slope = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        (value, slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_slope(x).0
    }

    /// +1 if strictly increasing data, -1 if strictly decreasing, 0 otherwise.
    pub fn monotone_direction(&self) -> i8 {
        let inc = self.ys.windows(2).all(|w| w[1] > w[0]);
        let dec = self.ys.windows(2).all(|w| w[1] < w[0]);
        match (inc, dec) {
            (true, _) => 1,
            (_, true) => -1,
            _ => 0,
        }
    }
}

impl TryFrom<Vec<(f64, f64)>> for MonotoneCubic {
    type Error = Error;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<MonotoneCubic> for Vec<(f64, f64)> {
    fn from(c: MonotoneCubic) -> Self {
        c.points()
    }
}
