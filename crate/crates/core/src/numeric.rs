//! Scalar numeric helpers: stable log-domain accumulation, monotone-residual
//! bisection for threshold computation, and small least-squares fits.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("residual not monotone on probe grid over [{lo:.3e}, {hi:.3e}] (worst increase {worst:.3e} at t={at:.3e})")]
    NonMonotoneResidual { lo: f64, hi: f64, worst: f64, at: f64 },
    #[error("residual already negative at the lower end {lo:.3e} of the search range")]
    NegativeAtFloor { lo: f64 },
    #[error("invalid search range [{lo:.3e}, {hi:.3e}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("{0}")]
    Other(String),
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log(exp(a) - exp(b)) for a >= b; -inf when a == b.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    debug_assert!(a >= b, "log_sub_exp needs a >= b, got {a} < {b}");
    if a == b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Outcome of a threshold search: either a bracketed root or the search
/// capped out at the top of the range with the condition holding throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdOutcome {
    Root(f64),
    CappedAtHi(f64),
}

impl ThresholdOutcome {
    pub fn value(&self) -> f64 {
        match *self {
            ThresholdOutcome::Root(v) => v,
            ThresholdOutcome::CappedAtHi(v) => v,
        }
    }

    pub fn is_capped(&self) -> bool {
        matches!(self, ThresholdOutcome::CappedAtHi(_))
    }
}

pub const PROBE_POINTS: usize = 64;
pub const BISECT_ITERS: usize = 60;

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Largest `t` in `[lo, hi]` below which `residual(t) > 0`, for a residual
/// that is non-increasing in `t`. The residual is probed on a 64-point
/// geometric grid first; a non-monotone probe is an error, not a guess.
pub fn largest_threshold<F: Fn(f64) -> f64>(
    lo: f64,
    hi: f64,
    residual: F,
) -> Result<ThresholdOutcome, NumericError> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(NumericError::InvalidRange { lo, hi });
    }
    let probes = log_spaced(lo, hi, PROBE_POINTS);
    let vals: Vec<f64> = probes.iter().map(|&t| residual(t)).collect();
    let mut worst = 0.0f64;
    let mut worst_at = lo;
    for i in 1..vals.len() {
        let slack = 1e-12 * (1.0 + vals[i - 1].abs());
        if vals[i] > vals[i - 1] + slack {
            let inc = vals[i] - vals[i - 1];
            if inc > worst {
                worst = inc;
                worst_at = probes[i];
            }
        }
    }
    if worst > 0.0 {
        return Err(NumericError::NonMonotoneResidual { lo, hi, worst, at: worst_at });
    }
    if vals[0] <= 0.0 {
        return Err(NumericError::NegativeAtFloor { lo });
    }
    if *vals.last().unwrap() > 0.0 {
        return Ok(ThresholdOutcome::CappedAtHi(hi));
    }
    // Bracket the sign change on the probe grid, then bisect in log t.
    let k = vals.iter().position(|&v| v <= 0.0).unwrap();
    let (mut a, mut b) = (probes[k - 1].ln(), probes[k].ln());
    for _ in 0..BISECT_ITERS {
        let m = 0.5 * (a + b);
        if residual(m.exp()) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(ThresholdOutcome::Root((0.5 * (a + b)).exp()))
}

/// First down-crossing of a residual that is positive near `lo` but need not
/// be globally monotone: scans a dense geometric grid, then verifies local
/// monotonicity on the bracketing interval before bisecting inside it.
pub fn first_crossing_threshold<F: Fn(f64) -> f64>(
    lo: f64,
    hi: f64,
    residual: F,
) -> Result<ThresholdOutcome, NumericError> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(NumericError::InvalidRange { lo, hi });
    }
    const SCAN: usize = 1024;
    let grid = log_spaced(lo, hi, SCAN);
    if residual(grid[0]) <= 0.0 {
        return Err(NumericError::NegativeAtFloor { lo });
    }
    let mut bracket = None;
    for w in grid.windows(2) {
        if residual(w[1]) <= 0.0 {
            bracket = Some((w[0], w[1]));
            break;
        }
    }
    let (blo, bhi) = match bracket {
        None => return Ok(ThresholdOutcome::CappedAtHi(hi)),
        Some(b) => b,
    };
    match largest_threshold(blo, bhi, &residual) {
        Ok(ThresholdOutcome::Root(r)) => Ok(ThresholdOutcome::Root(r)),
        // The bracket endpoints straddle a sign change, so a capped outcome
        // inside the bracket cannot happen; map everything else through.
        Ok(ThresholdOutcome::CappedAtHi(v)) => Ok(ThresholdOutcome::Root(v)),
        Err(e) => Err(e),
    }
}

/// Least-squares slope of y against x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    sxy / sxx
}

/// Fit y = a*x1 + b*x2 + c by least squares; returns (a, b).
pub fn ls_fit2(x1: &[f64], x2: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let m1 = x1.iter().sum::<f64>() / n;
    let m2 = x2.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..ys.len() {
        let d1 = x1[i] - m1;
        let d2 = x2[i] - m2;
        let dy = ys[i] - my;
        s11 += d1 * d1;
        s12 += d1 * d2;
        s22 += d2 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (s1y * s22 - s2y * s12) / det;
    let b = (s2y * s11 - s1y * s12) / det;
    (a, b)
}
