//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::ShapeMismatch(format!("{} abscissae, {} ordinates", xs.len(), ys.len())));
        }
        if xs.len() < 2 {
            return Err(Error::DegenerateCurve(format!("{} points, need at least 2", xs.len())));
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(Error::Range("non-finite interpolation data".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotonicAbscissa);
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes: slopes(xs, ys),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    fn segment(&self, x: f64) -> usize {
        self.xs.partition_point(|&k| k <= x).clamp(1, self.xs.len() - 1) - 1
    }

    fn check(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if x >= lo && x <= hi {
            Ok(())
        } else {
            Err(Error::OutOfRange(x))
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        Ok(self.ys[k] * (2.0 * t3 - 3.0 * t2 + 1.0)
            + h * self.slopes[k] * (t3 - 2.0 * t2 + t)
            + self.ys[k + 1] * (3.0 * t2 - 2.0 * t3)
            + h * self.slopes[k + 1] * (t3 - t2))
    }

    /// Antiderivative of segment `k` from its left knot to local parameter `t`.
    fn segment_primitive(&self, k: usize, t: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        h * (self.ys[k] * (t4 / 2.0 - t3 + t)
            + h * self.slopes[k] * (t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0)
            + self.ys[k + 1] * (t3 - t4 / 2.0)
            + h * self.slopes[k + 1] * (t4 / 4.0 - t3 / 3.0))
    }

    fn primitive(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let whole: f64 = (0..k).map(|j| self.segment_primitive(j, 1.0)).sum();
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        whole + self.segment_primitive(k, t)
    }

    /// Exact integral of the interpolant over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.primitive(b) - self.primitive(a))
    }
}

fn slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// One-sided three-point end slope, limited to keep the end segment monotone.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
