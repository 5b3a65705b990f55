//! Natural cubic spline on a uniform grid, used for sub-sample peak refinement.

use crate::{Error, Result};

/// Natural cubic spline through `(x0 + i·h, y[i])`.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x0: f64, h: f64, y: &[f64]) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::invalid("spline", "need at least two knots"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("spline", "knot spacing must be positive"));
        }
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the tridiagonal system
            // m[i-1] + 4 m[i] + m[i+1] = 6 (y[i-1] - 2y[i] + y[i+1]) / h²
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]) / (h * h);
                if i == 0 {
                    c[i] = 1.0 / 4.0;
                    d[i] = rhs / 4.0;
                } else {
                    let denom = 4.0 - c[i - 1];
                    c[i] = 1.0 / denom;
                    d[i] = (rhs - d[i - 1]) / denom;
                }
            }
            m[k] = d[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = d[i] - c[i] * m[i + 2];
            }
        }
        Ok(Self {
            x0,
            h,
            y: y.to_vec(),
            m,
        })
    }

    pub fn knots(&self) -> usize {
        self.y.len()
    }

    fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    fn segment(&self, x: f64) -> (usize, f64) {
        let last = self.y.len() - 2;
        let i = (((x - self.x0) / self.h).floor().max(0.0) as usize).min(last);
        (i, x - (self.x0 + self.h * i as f64))
    }

    /// Coefficients `(a, b, c, d)` of segment `i` in `a + b·t + c·t² + d·t³`.
    fn coefficients(&self, i: usize) -> (f64, f64, f64, f64) {
        let h = self.h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        (
            y0,
            (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0,
            m0 / 2.0,
            (m1 - m0) / (6.0 * h),
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.segment(x);
        let (a, b, c, d) = self.coefficients(i);
        a + t * (b + t * (c + t * d))
    }

    /// Location and value of the spline maximum over its knot span.
    ///
    /// The spline is scanned at `oversample` points per knot interval and the
    /// best segment is then maximised in closed form, so the result is not
    /// quantised to the scan grid.
    pub fn maximum(&self, oversample: usize) -> (f64, f64) {
        self.maximum_in(self.x0, self.x_max(), oversample)
    }

    /// Maximum restricted to `[lo, hi]`, clipped to the knot span.
    pub fn maximum_in(&self, lo: f64, hi: f64, oversample: usize) -> (f64, f64) {
        let lo = lo.max(self.x0);
        let hi = hi.min(self.x_max()).max(lo);
        let span = hi - lo;
        let steps = ((oversample.max(1) as f64 * span / self.h).ceil() as usize).max(1);
        let (mut best_x, mut best_y) = (lo, self.eval(lo));
        for s in 1..=steps {
            let x = lo + span * s as f64 / steps as f64;
            let v = self.eval(x);
            if v > best_y {
                best_x = x;
                best_y = v;
            }
        }
        let (seg, _) = self.segment(best_x);
        let first = seg.saturating_sub(1);
        let last = (seg + 1).min(self.y.len() - 2);
        for i in first..=last {
            let (_, b, c, d) = self.coefficients(i);
            let start = self.x0 + self.h * i as f64;
            for t in stationary_points(b, c, d) {
                let x = start + t;
                if (0.0..=self.h).contains(&t) && (lo..=hi).contains(&x) {
                    let v = self.eval(x);
                    if v > best_y {
                        best_x = x;
                        best_y = v;
                    }
                }
            }
        }
        (best_x, best_y)
    }
}

/// Real roots of `b + 2c·t + 3d·t²`.
fn stationary_points(b: f64, c: f64, d: f64) -> Vec<f64> {
    let (qa, qb, qc) = (3.0 * d, 2.0 * c, b);
    if qa.abs() < 1e-300 {
        if qb.abs() < 1e-300 {
            return Vec::new();
        }
        return vec![-qc / qb];
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (qb + qb.signum() * sq);
    let mut roots = vec![q / qa];
    if q != 0.0 {
        roots.push(qc / q);
    }
    roots
}
