//! Shape-preserving cubic interpolation of strictly increasing tables.
//!
//! Tangents follow the Fritsch-Carlson construction, so the interpolant is
//! monotone whenever the data are; inversion bisects the interpolant.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("table needs at least 2 rows, got {0}")]
    TooShort(usize),
    #[error("table x-values must be strictly increasing and finite (row {0})")]
    NonMonotoneX(usize),
    #[error("table y-values must be strictly increasing and finite (row {0})")]
    NonMonotoneY(usize),
    #[error("value {0:.6e} outside table range [{1:.6e}, {2:.6e}]")]
    OutOfRange(f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    tangents: Vec<f64>,
}

impl MonotoneTable {
    pub fn new(rows: &[(f64, f64)]) -> Result<Self, TableError> {
        if rows.len() < 2 {
            return Err(TableError::TooShort(rows.len()));
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for i in 0..rows.len() {
            if !xs[i].is_finite() || (i > 0 && xs[i] <= xs[i - 1]) {
                return Err(TableError::NonMonotoneX(i));
            }
            if !ys[i].is_finite() || (i > 0 && ys[i] <= ys[i - 1]) {
                return Err(TableError::NonMonotoneY(i));
            }
        }
        let tangents = fritsch_carlson_tangents(&xs, &ys);
        Ok(MonotoneTable { xs, ys, tangents })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }
    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }
    pub fn y_min(&self) -> f64 {
        self.ys[0]
    }
    pub fn y_max(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    /// Tangent dy/dx at the first/last node.
    pub fn end_slopes(&self) -> (f64, f64) {
        (self.tangents[0], *self.tangents.last().unwrap())
    }

    fn segment_of(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, TableError> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return Err(TableError::OutOfRange(x, self.x_min(), self.x_max()));
        }
        let i = self.segment_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Ok(self.ys[i] * h00
            + h * self.tangents[i] * h10
            + self.ys[i + 1] * h01
            + h * self.tangents[i + 1] * h11)
    }

    pub fn eval_deriv(&self, x: f64) -> Result<f64, TableError> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return Err(TableError::OutOfRange(x, self.x_min(), self.x_max()));
        }
        let i = self.segment_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let d00 = (6.0 * t * t - 6.0 * t) / h;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = (6.0 * t - 6.0 * t * t) / h;
        let d11 = 3.0 * t * t - 2.0 * t;
        Ok(self.ys[i] * d00
            + self.tangents[i] * d10
            + self.ys[i + 1] * d01
            + self.tangents[i + 1] * d11)
    }

    /// x with eval(x) = y, by bisection (the interpolant is monotone).
    pub fn invert(&self, y: f64) -> Result<f64, TableError> {
        if !(y >= self.y_min() && y <= self.y_max()) {
            return Err(TableError::OutOfRange(y, self.y_min(), self.y_max()));
        }
        let i = match self.ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => return Ok(self.xs[i]),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        };
        let (mut a, mut b) = (self.xs[i], self.xs[i + 1]);
        for _ in 0..90 {
            let m = 0.5 * (a + b);
            if self.eval(m)? < y {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

fn fritsch_carlson_tangents(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n - 1];
    for i in 0..n - 1 {
        d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] > 0.0 { 0.5 * (d[i - 1] + d[i]) } else { 0.0 };
    }
    // clamp tangents into the monotone region
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / d[i];
        let b = m[i + 1] / d[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * d[i];
            m[i + 1] = tau * b * d[i];
        }
    }
    m
}

/// Necessary-and-sufficient Fritsch-Carlson test for a single cubic Hermite
/// segment with normalized endpoint slopes `alpha = da/delta`, `beta = db/delta`.
pub fn hermite_segment_monotone(alpha: f64, beta: f64) -> bool {
    if alpha < 0.0 || beta < 0.0 {
        return false;
    }
    if alpha + beta - 2.0 <= 0.0 {
        return true;
    }
    if 2.0 * alpha + beta - 3.0 <= 0.0 || alpha + 2.0 * beta - 3.0 <= 0.0 {
        return true;
    }
    let phi = alpha - (2.0 * alpha + beta - 3.0).powi(2) / (3.0 * (alpha + beta - 2.0));
    phi >= 0.0
}
