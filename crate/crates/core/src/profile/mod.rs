//! Radial defining functions f with F(z) = f(|z|), evaluated in log-domain.
//!
//! The built-in flat kinds vanish to infinite order at r = 0, so f itself
//! underflows any fixed-width format long before the asymptotically
//! interesting regime; every code path works with log f and only
//! exponentiates inside integrands where tau * f(r) is the controlled
//! quantity.

pub mod table;
pub mod witness;

use crate::real::Real;
use table::{hermite_segment_monotone, MonotoneTable, TableError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("invalid profile parameter: {0}")]
    Parameter(String),
    #[error("splice construction failed: {0}")]
    Splice(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum ProfileKind {
    /// f(r) = exp(-1/r^beta) near 0, spliced to a quadratic tail.
    ExpBeta { beta: f64 },
    /// f(r) = exp(-e^{1/r}) near 0, spliced to a quadratic tail.
    DoubleExp,
    /// f(r) = r^{2M} everywhere: the finite-type prototype, kept as an
    /// oracle anchor; the condition checker flags it by design.
    PowerType { two_m: u32 },
    /// Tabulated (r, log f), interpolated monotone-cubically.
    Custom,
}

/// C1 continuation of the core formula: cubic Hermite on
/// [r_core, r_tail] in (r, log f), then log f = ln_c + 2 ln r.
#[derive(Debug, Clone)]
struct Splice {
    r_core: f64,
    r_tail: f64,
    ya: f64,
    da: f64,
    yb: f64,
    db: f64,
    ln_c: f64,
}

impl Splice {
    fn hermite<R: Real>(&self, r: &R) -> R {
        let h = self.r_tail - self.r_core;
        let t = r.add_f64(-self.r_core).mul_f64(1.0 / h);
        let one_mt = R::one().sub(&t);
        let t2 = t.mul(&t);
        let h00 = t.mul_f64(2.0).add(&R::one()).mul(&one_mt).mul(&one_mt);
        let h10 = t.mul(&one_mt).mul(&one_mt);
        let h01 = t2.mul(&t.mul_f64(-2.0).add_f64(3.0));
        let h11 = t2.mul(&t.sub(&R::one()));
        h00.mul_f64(self.ya)
            .add(&h10.mul_f64(h * self.da))
            .add(&h01.mul_f64(self.yb))
            .add(&h11.mul_f64(h * self.db))
    }

    fn hermite_deriv(&self, r: f64) -> f64 {
        let h = self.r_tail - self.r_core;
        let t = (r - self.r_core) / h;
        let d00 = (6.0 * t * t - 6.0 * t) / h;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = (6.0 * t - 6.0 * t * t) / h;
        let d11 = 3.0 * t * t - 2.0 * t;
        self.ya * d00 + self.da * d10 + self.yb * d01 + self.db * d11
    }
}

#[derive(Debug, Clone)]
enum Core {
    ExpBeta { beta: f64 },
    DoubleExp,
    PowerType { two_m: u32 },
    Custom { tbl: MonotoneTable, low_slope_loglog: f64, high_slope: f64 },
}

#[derive(Debug, Clone)]
pub struct RadialProfile {
    kind: ProfileKind,
    core: Core,
    splice: Option<Splice>,
    r_unit: f64,
}

pub const EXP_BETA_SPLICE_RADIUS: f64 = 0.5;
pub const DOUBLE_EXP_SPLICE_RADIUS: f64 = 0.25;

impl RadialProfile {
    pub fn exp_beta(beta: f64) -> Result<Self, ProfileError> {
        Self::exp_beta_with_splice(beta, EXP_BETA_SPLICE_RADIUS)
    }

    pub fn exp_beta_with_splice(beta: f64, r_core: f64) -> Result<Self, ProfileError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ProfileError::Parameter(format!("beta must be positive, got {beta}")));
        }
        if !(r_core > 0.0 && r_core < 1.0) {
            return Err(ProfileError::Parameter(format!(
                "splice radius must lie in (0, 1), got {r_core}"
            )));
        }
        let ya = -r_core.powf(-beta);
        let da = beta * r_core.powf(-beta - 1.0);
        let splice = build_splice(r_core, ya, da)?;
        let mut p = RadialProfile {
            kind: ProfileKind::ExpBeta { beta },
            core: Core::ExpBeta { beta },
            splice: Some(splice),
            r_unit: f64::NAN,
        };
        p.r_unit = p.inv_f(0.0)?;
        Ok(p)
    }

    pub fn double_exp() -> Result<Self, ProfileError> {
        Self::double_exp_with_splice(DOUBLE_EXP_SPLICE_RADIUS)
    }

    pub fn double_exp_with_splice(r_core: f64) -> Result<Self, ProfileError> {
        if !(r_core > 0.0 && r_core < 1.0) {
            return Err(ProfileError::Parameter(format!(
                "splice radius must lie in (0, 1), got {r_core}"
            )));
        }
        let e = (1.0 / r_core).exp();
        let ya = -e;
        let da = e / (r_core * r_core);
        let splice = build_splice(r_core, ya, da)?;
        let mut p = RadialProfile {
            kind: ProfileKind::DoubleExp,
            core: Core::DoubleExp,
            splice: Some(splice),
            r_unit: f64::NAN,
        };
        p.r_unit = p.inv_f(0.0)?;
        Ok(p)
    }

    pub fn power_type(two_m: u32) -> Result<Self, ProfileError> {
        if two_m == 0 || two_m % 2 != 0 {
            return Err(ProfileError::Parameter(format!(
                "power must be an even positive integer, got {two_m}"
            )));
        }
        Ok(RadialProfile {
            kind: ProfileKind::PowerType { two_m },
            core: Core::PowerType { two_m },
            splice: None,
            r_unit: 1.0,
        })
    }

    /// Tabulated (r, log f) pairs; strict monotonicity is validated on load.
    /// Below the table the profile continues as a power law in (log r, log f),
    /// above it linearly in (r, log f), using the interpolant's end slopes.
    pub fn custom(rows: &[(f64, f64)]) -> Result<Self, ProfileError> {
        if rows.iter().any(|r| r.0 <= 0.0) {
            return Err(ProfileError::Parameter("table radii must be positive".into()));
        }
        let tbl = MonotoneTable::new(rows)?;
        let (d_lo, d_hi) = tbl.end_slopes();
        let first_secant = (rows[1].1 - rows[0].1) / (rows[1].0 - rows[0].0);
        let n = rows.len();
        let last_secant = (rows[n - 1].1 - rows[n - 2].1) / (rows[n - 1].0 - rows[n - 2].0);
        let low_slope = if d_lo > 0.0 { d_lo } else { first_secant };
        let high_slope = if d_hi > 0.0 { d_hi } else { last_secant };
        let low_slope_loglog = tbl.x_min() * low_slope;
        let mut p = RadialProfile {
            kind: ProfileKind::Custom,
            core: Core::Custom { tbl, low_slope_loglog, high_slope },
            splice: None,
            r_unit: f64::NAN,
        };
        p.r_unit = p.inv_f(0.0)?;
        Ok(p)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    /// f^{-1}(1), cached at construction.
    pub fn r_unit(&self) -> f64 {
        self.r_unit
    }

    /// Start of the pure quadratic tail (for the built-in spliced kinds).
    pub fn tail_start(&self) -> Option<f64> {
        self.splice.as_ref().map(|s| s.r_tail)
    }

    /// Radius up to which the core closed-form formula is exact.
    pub fn core_radius(&self) -> Option<f64> {
        self.splice.as_ref().map(|s| s.r_core)
    }

    /// (eta, log C, R) such that log f(r) >= log C + eta ln r for r >= R,
    /// by construction of the tail. None for custom profiles.
    pub fn tail_bound(&self) -> Option<(f64, f64, f64)> {
        match &self.core {
            Core::PowerType { two_m } => Some((*two_m as f64, 0.0, 1.0)),
            Core::Custom { .. } => None,
            _ => self.splice.as_ref().map(|s| (2.0, s.ln_c, s.r_tail)),
        }
    }

    /// log f(r). Returns -inf at r = 0; errors on negative or non-finite r.
    pub fn eval_logf(&self, r: f64) -> Result<f64, ProfileError> {
        if !r.is_finite() || r < 0.0 {
            return Err(ProfileError::Domain(format!("radius must be finite and >= 0, got {r}")));
        }
        if r == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_f::<f64>(&r))
    }

    /// log f(r) for r > 0, in the oracle's scalar type.
    pub fn log_f<R: Real>(&self, r: &R) -> R {
        let rf = r.to_f64();
        if let Some(s) = &self.splice {
            if rf > s.r_core {
                if rf < s.r_tail {
                    return s.hermite(r);
                }
                return r.ln().mul_f64(2.0).add_f64(s.ln_c);
            }
        }
        match &self.core {
            Core::ExpBeta { beta } => r.ln().mul_f64(-*beta).exp().neg(),
            Core::DoubleExp => r.recip().exp().neg(),
            Core::PowerType { two_m } => r.ln().mul_f64(*two_m as f64),
            Core::Custom { tbl, low_slope_loglog, high_slope } => {
                let y = if rf < tbl.x_min() {
                    tbl.y_min() + low_slope_loglog * (rf.ln() - tbl.x_min().ln())
                } else if rf > tbl.x_max() {
                    tbl.y_max() + high_slope * (rf - tbl.x_max())
                } else {
                    tbl.eval(rf).expect("in-range table eval")
                };
                R::from_f64(y)
            }
        }
    }

    /// d(log f)/dr for r > 0.
    pub fn logf_deriv(&self, r: f64) -> Result<f64, ProfileError> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(ProfileError::Domain(format!("radius must be positive, got {r}")));
        }
        if let Some(s) = &self.splice {
            if r > s.r_core {
                if r < s.r_tail {
                    return Ok(s.hermite_deriv(r));
                }
                return Ok(2.0 / r);
            }
        }
        Ok(match &self.core {
            Core::ExpBeta { beta } => beta * r.powf(-beta - 1.0),
            Core::DoubleExp => (1.0 / r).exp() / (r * r),
            Core::PowerType { two_m } => *two_m as f64 / r,
            Core::Custom { tbl, low_slope_loglog, high_slope } => {
                if r < tbl.x_min() {
                    low_slope_loglog / r
                } else if r > tbl.x_max() {
                    *high_slope
                } else {
                    tbl.eval_deriv(r).expect("in-range table deriv")
                }
            }
        })
    }

    /// f(r); underflows to 0 deep inside the flat region.
    pub fn eval_f(&self, r: f64) -> Result<f64, ProfileError> {
        Ok(self.eval_logf(r)?.exp())
    }

    /// r with log f(r) = log_t. Monotone in log_t; round-trips with
    /// eval_logf to about 1e-14 relative.
    pub fn inv_f(&self, log_t: f64) -> Result<f64, ProfileError> {
        if log_t.is_nan() {
            return Err(ProfileError::Domain("log_t is NaN".into()));
        }
        if log_t == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if log_t == f64::INFINITY {
            return Err(ProfileError::Range("log_t = +inf has no finite preimage".into()));
        }
        if let Some(s) = &self.splice {
            if log_t > s.ya {
                if log_t >= s.yb {
                    return Ok(((log_t - s.ln_c) / 2.0).exp());
                }
                // bisect the Hermite segment
                let (mut a, mut b) = (s.r_core, s.r_tail);
                for _ in 0..90 {
                    let m = 0.5 * (a + b);
                    if s.hermite(&m) < log_t {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Ok(0.5 * (a + b));
            }
        }
        match &self.core {
            Core::ExpBeta { beta } => Ok((-(-log_t).ln() / beta).exp()),
            Core::DoubleExp => Ok(1.0 / (-log_t).ln()),
            Core::PowerType { two_m } => Ok((log_t / *two_m as f64).exp()),
            Core::Custom { tbl, low_slope_loglog, high_slope } => {
                if log_t < tbl.y_min() {
                    Ok(tbl.x_min() * ((log_t - tbl.y_min()) / low_slope_loglog).exp())
                } else if log_t > tbl.y_max() {
                    Ok(tbl.x_max() + (log_t - tbl.y_max()) / high_slope)
                } else {
                    Ok(tbl.invert(log_t)?)
                }
            }
        }
    }

    /// Lambda_f(x) = -1/log f(x) for 0 < x < f^{-1}(1); 0 at x = 0.
    pub fn lambda_f(&self, x: f64) -> Result<f64, ProfileError> {
        if !x.is_finite() || x < 0.0 {
            return Err(ProfileError::Domain(format!("x must be finite and >= 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let lf = self.eval_logf(x)?;
        if lf >= 0.0 {
            return Err(ProfileError::Domain(format!(
                "x = {x} is not below f^{{-1}}(1) = {}",
                self.r_unit
            )));
        }
        Ok(-1.0 / lf)
    }

    /// ln Lambda_f(x); -inf at x = 0. Stays meaningful where Lambda_f itself
    /// underflows (the very flat kinds near 0).
    pub fn lambda_f_log(&self, x: f64) -> Result<f64, ProfileError> {
        if !x.is_finite() || x < 0.0 {
            return Err(ProfileError::Domain(format!("x must be finite and >= 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let lf = self.eval_logf(x)?;
        if lf >= 0.0 {
            return Err(ProfileError::Domain(format!(
                "x = {x} is not below f^{{-1}}(1) = {}",
                self.r_unit
            )));
        }
        Ok(-(-lf).ln())
    }

    /// G_f = Lambda_f^{-1}; satisfies f^{-1}(t) = G_f(1/log(1/t)) exactly.
    pub fn g_f(&self, y: f64) -> Result<f64, ProfileError> {
        if y.is_nan() || y < 0.0 || y == f64::INFINITY {
            return Err(ProfileError::Range(format!("y must be finite and >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        self.inv_f(-1.0 / y)
    }
}

/// Quadratic-tail splice: searches for the narrowest transition width (from
/// r_core down by halves) whose single cubic Hermite segment is certified
/// monotone, with the tail fixed at log f = 2 ln r.
fn build_splice(r_core: f64, ya: f64, da: f64) -> Result<Splice, ProfileError> {
    let ln_c = 0.0;
    if ya >= 2.0 * r_core.ln() {
        return Err(ProfileError::Splice(format!(
            "core value f({r_core}) = e^{ya:.3} is not below the quadratic tail"
        )));
    }
    for k in 0..=40 {
        let r_tail = r_core * (1.0 + (2.0f64).powi(-k));
        let yb = ln_c + 2.0 * r_tail.ln();
        let db = 2.0 / r_tail;
        let delta = (yb - ya) / (r_tail - r_core);
        if delta <= 0.0 {
            continue;
        }
        if hermite_segment_monotone(da / delta, db / delta) {
            return Ok(Splice { r_core, r_tail, ya, da, yb, db, ln_c });
        }
    }
    Err(ProfileError::Splice(format!(
        "no monotone Hermite transition found from r = {r_core} (slope {da:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_beta_core_logf_closed_form() {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        // log f(r) = -1/r on the core
        assert!((p.eval_logf(0.1).unwrap() + 10.0).abs() < 1e-12);
        assert!((p.eval_logf(0.25).unwrap() + 4.0).abs() < 1e-12);
        let p2 = RadialProfile::exp_beta(2.0).unwrap();
        assert!((p2.eval_logf(0.1).unwrap() + 100.0).abs() < 1e-10);
    }

    #[test]
    fn logf_at_zero_is_neg_infinity() {
        for p in [
            RadialProfile::exp_beta(0.5).unwrap(),
            RadialProfile::double_exp().unwrap(),
            RadialProfile::power_type(2).unwrap(),
        ] {
            assert_eq!(p.eval_logf(0.0).unwrap(), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn power_type_is_global_power_law() {
        let p = RadialProfile::power_type(2).unwrap();
        assert!((p.eval_logf(2.0).unwrap() - 2.0 * 2.0f64.ln()).abs() < 1e-14);
        assert!((p.eval_logf(37.5).unwrap() - 2.0 * 37.5f64.ln()).abs() < 1e-12);
        assert_eq!(p.r_unit(), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RadialProfile::exp_beta(0.0).is_err());
        assert!(RadialProfile::exp_beta(f64::NAN).is_err());
        assert!(RadialProfile::power_type(3).is_err());
        assert!(RadialProfile::power_type(0).is_err());
        assert!(RadialProfile::exp_beta(1.0).unwrap().eval_logf(f64::INFINITY).is_err());
        assert!(RadialProfile::exp_beta(1.0).unwrap().eval_logf(-0.5).is_err());
    }

    #[test]
    fn inv_f_closed_forms() {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        // t = e^{-10}: r = 0.1
        assert!((p.inv_f(-10.0).unwrap() - 0.1).abs() < 1e-14);
        assert_eq!(p.inv_f(f64::NEG_INFINITY).unwrap(), 0.0);
        let d = RadialProfile::double_exp().unwrap();
        // t = exp(-e^{10}): r = 0.1
        let r = d.inv_f(-(10.0f64.exp())).unwrap();
        assert!((r - 0.1).abs() / 0.1 < 1e-12);
    }

    #[test]
    fn splice_is_value_and_slope_matched() {
        for p in [
            RadialProfile::exp_beta(0.5).unwrap(),
            RadialProfile::exp_beta(1.0).unwrap(),
            RadialProfile::exp_beta(2.0).unwrap(),
            RadialProfile::double_exp().unwrap(),
        ] {
            let rc = p.core_radius().unwrap();
            let h = rc * 1e-7;
            let below = p.eval_logf(rc - h).unwrap();
            let above = p.eval_logf(rc + h).unwrap();
            let deriv = p.logf_deriv(rc).unwrap();
            // value continuity and slope continuity across the joint
            assert!((above - below - 2.0 * h * deriv).abs() < 1e-5 * (1.0 + deriv * h),
                "joint mismatch for {:?}", p.kind());
            let rt = p.tail_start().unwrap();
            let below_t = p.eval_logf(rt - h).unwrap();
            let above_t = p.eval_logf(rt + h).unwrap();
            assert!((above_t - below_t).abs() < 1e-4);
        }
    }

    #[test]
    fn logf_strictly_increasing_across_regions() {
        // grid floor chosen above the -inf saturation radius of DoubleExp
        for p in [
            RadialProfile::exp_beta(0.5).unwrap(),
            RadialProfile::exp_beta(3.5).unwrap(),
            RadialProfile::double_exp().unwrap(),
        ] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..2000 {
                let r = 2e-3 * (10.0f64).powf(4.0 * i as f64 / 1999.0);
                let v = p.eval_logf(r).unwrap();
                assert!(v > prev, "not increasing at r={r} for {:?}", p.kind());
                prev = v;
            }
        }
    }

    #[test]
    fn round_trip_inside_splice_region() {
        let p = RadialProfile::double_exp().unwrap();
        let s = p.tail_start().unwrap();
        let rc = p.core_radius().unwrap();
        for i in 0..50 {
            let r = rc + (s - rc) * (i as f64 + 0.5) / 50.0;
            let lg = p.eval_logf(r).unwrap();
            let r2 = p.inv_f(lg).unwrap();
            assert!((r2 - r).abs() / r < 1e-12, "r={r} r2={r2}");
        }
    }

    #[test]
    fn lambda_closed_forms() {
        let p = RadialProfile::exp_beta(2.0).unwrap();
        for &x in &[0.05, 0.2, 0.4] {
            assert!((p.lambda_f(x).unwrap() - x * x).abs() < 1e-14);
        }
        assert_eq!(p.lambda_f(0.0).unwrap(), 0.0);
        let d = RadialProfile::double_exp().unwrap();
        let want = (-10.0f64).exp();
        assert!((d.lambda_f(0.1).unwrap() - want).abs() / want < 1e-12);
        // x at or beyond f^{-1}(1) leaves the gauge's domain
        assert!(p.lambda_f(p.r_unit()).is_err());
        assert!(p.lambda_f(p.r_unit() * 1.5).is_err());
    }

    #[test]
    fn g_f_closed_forms_and_inverse_identity() {
        let p = RadialProfile::exp_beta(2.0).unwrap();
        for &y in &[1e-4, 1e-2, 0.04] {
            assert!((p.g_f(y).unwrap() - y.sqrt()).abs() < 1e-14);
        }
        assert_eq!(p.g_f(0.0).unwrap(), 0.0);
        assert!(p.g_f(-1.0).is_err());
        // f^{-1}(t) = G_f(1/log(1/t)) across many decades
        let q = RadialProfile::exp_beta(1.0).unwrap();
        for i in 1..40 {
            let log_t = -(1.12f64).powi(i) * 2.0;
            let lhs = q.inv_f(log_t).unwrap();
            let rhs = q.g_f(1.0 / -log_t).unwrap();
            assert!((lhs - rhs).abs() / lhs < 1e-12);
        }
    }

    #[test]
    fn custom_table_round_trips() {
        // tabulate log f for the beta = 1 kind and rebuild it
        let p = RadialProfile::exp_beta(1.0).unwrap();
        let rows: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let r = 0.01 * (300.0f64).powf(i as f64 / 199.0);
                (r, p.eval_logf(r).unwrap())
            })
            .collect();
        let c = RadialProfile::custom(&rows).unwrap();
        for &r in &[0.02, 0.1, 0.7, 2.5] {
            let a = c.eval_logf(r).unwrap();
            let b = p.eval_logf(r).unwrap();
            assert!((a - b).abs() < 2e-3 * (1.0 + b.abs()), "r={r}: {a} vs {b}");
        }
        let lg = c.eval_logf(0.09).unwrap();
        assert!((c.inv_f(lg).unwrap() - 0.09).abs() < 1e-10);
        // strictly monotone table required
        let mut bad = rows.clone();
        bad[5].1 = bad[4].1;
        assert!(RadialProfile::custom(&bad).is_err());
    }

    #[test]
    fn high_precision_logf_agrees_with_double() {
        use crate::real::HighReal;
        for p in [RadialProfile::exp_beta(1.0).unwrap(), RadialProfile::double_exp().unwrap()] {
            for &r in &[0.07, 0.2, 0.3, 0.8, 2.0] {
                let a = p.eval_logf(r).unwrap();
                let b = p.log_f(&HighReal::from_f64(r)).to_f64();
                assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()), "r={r}: {a} vs {b}");
            }
        }
    }
}
