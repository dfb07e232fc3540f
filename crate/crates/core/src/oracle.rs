//! Numerical oracle for the diagonal kernel of the model domain.
//!
//! The weighted fiber kernel on C with weight e^{-2 tau F} has orthogonal
//! monomials, so its diagonal is the moment series
//! K_tau(z,z) = sum |z|^{2n} / c_n(tau) with
//! c_n(tau) = 2 pi int_0^inf r^{2n+1} e^{-2 tau f(r)} dr,
//! and the domain kernel on the diagonal is the Laplace-type superposition
//! K(z, it) = (1/pi) int_0^inf tau K_tau(z,z) e^{-2 tau t} dtau.
//! Re w never enters: vertical translations are automorphisms.
//!
//! Everything runs in log-domain on a generic scalar so the same code path
//! serves binary doubles and the high-precision backend.

use crate::geometry::log_t_plus_f;
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::profile::witness::DerivedConstants;
use crate::profile::{ProfileError, RadialProfile};
use crate::quad::{integrate_log, LogIntegral, QuadError, QuadOpts};
use crate::real::{lse2, Precision, Real};
use num_complex::Complex64;
use serde::Serialize;
use std::cell::Cell;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("evaluation point outside the domain: {0}")]
    Domain(String),
    #[error("series for K_tau not yet decreasing at n = {n_cap} (tau = {tau:.6e})")]
    SeriesUnconverged { n_cap: usize, tau: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOpts {
    pub rel_tol: f64,
    pub precision: Precision,
    pub n_cap: usize,
    pub panel_cap: usize,
}

impl Default for OracleOpts {
    fn default() -> Self {
        OracleOpts { rel_tol: 1e-8, precision: Precision::Double, n_cap: 20_000, panel_cap: 4096 }
    }
}

impl OracleOpts {
    pub fn with_tol(rel_tol: f64) -> Self {
        OracleOpts { rel_tol, ..OracleOpts::default() }
    }

    fn quad(&self, tol: f64) -> QuadOpts {
        QuadOpts { rel_tol: tol, panel_cap: self.panel_cap, max_passes: 64 }
    }
}

const LOG_2PI: f64 = 1.837877066409345483560659472811;
const TRUNC_PAD: f64 = 780.0;

/// Breakpoints (in x = ln r) for the weighted radial moment of order n.
/// The domain splits at the half-weight radius f^{-1}(1/(2 tau)), at the
/// n-balance radius f^{-1}((n+1)/tau), and at the splice radii.
fn moment_breaks(
    profile: &RadialProfile,
    n: usize,
    ln_tau: f64,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>, OracleError> {
    let two_n2 = (2 * n + 2) as f64;
    let r_cut = profile.inv_f(-(2.0f64.ln() + ln_tau))?;
    let r_bal = profile.inv_f(((n + 1) as f64).ln() - ln_tau)?;
    let x_cut = r_cut.ln();
    let x_bal = r_bal.ln();
    let x_lo = x_cut.min(x_bal) - TRUNC_PAD / two_n2;
    // right end: push 2 tau f(r) well past the observed maximum; the caller
    // verifies and extends if the first guess was short
    let f_target = (TRUNC_PAD + 2.0 * two_n2).ln();
    let r_hi = profile.inv_f(f_target - ln_tau)?;
    let x_hi = r_hi.ln().max(x_bal + 2.0) + 0.5;

    let mut xs = vec![x_lo];
    for frac in [-9.0f64, -3.5, -1.2, -0.35, 0.0, 0.35, 1.2, 3.5] {
        xs.push(x_cut + frac);
        xs.push(x_bal + frac);
    }
    if let (Some(rc), Some(rt)) = (profile.core_radius(), profile.tail_start()) {
        xs.push(rc.ln());
        xs.push(rt.ln());
    }
    if let Some(w) = warm {
        let mut w2 = w.to_vec();
        thin_breaks(&mut w2, 24);
        xs.extend_from_slice(&w2);
    }
    xs.push(x_hi);
    xs.retain(|x| x.is_finite());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = vec![x_lo];
    for &x in &xs {
        if x > *out.last().unwrap() + 1e-9 && x <= x_hi {
            out.push(x);
        }
    }
    if *out.last().unwrap() < x_hi {
        out.push(x_hi);
    }
    Ok(out)
}

/// Keeps endpoints, subsamples the interior; warm-start sets otherwise grow
/// without bound as the series order climbs.
fn thin_breaks(v: &mut Vec<f64>, max: usize) {
    if v.len() <= max {
        return;
    }
    let n = v.len();
    let mut out = Vec::with_capacity(max);
    for i in 0..max {
        out.push(v[i * (n - 1) / (max - 1)]);
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    *v = out;
}

#[derive(Debug, Clone)]
pub struct LogMoment<R> {
    /// ln c_n(tau), including the angular 2 pi.
    pub log_value: R,
    pub rel_err: f64,
    breaks: Vec<f64>,
}

/// Combines two adjacent integration results (left spans smaller x).
fn merge_pieces<R: Real>(left: LogIntegral<R>, right: LogIntegral<R>) -> LogIntegral<R> {
    let log_value = lse2(&left.log_value, &right.log_value);
    // relative errors combine through value weights; the max is a safe cover
    let rel_err = left.rel_err.max(right.rel_err);
    let mut breaks = left.breaks;
    let left_end = *breaks.last().unwrap();
    breaks.extend(right.breaks.into_iter().filter(|&b| b > left_end));
    LogIntegral {
        log_value,
        rel_err,
        panels: left.panels + right.panels,
        evals: left.evals + right.evals,
        breaks,
    }
}

/// ln c_n(tau) by adaptive log-domain quadrature over x = ln r, with the
/// truncation edges verified against the computed total and extended when
/// they fall short.
pub fn log_moment<R: Real>(
    profile: &RadialProfile,
    n: usize,
    ln_tau: f64,
    opts: &OracleOpts,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<LogMoment<R>, OracleError> {
    let two_n2 = (2 * n + 2) as f64;
    let ln_tau_r = R::from_f64(ln_tau);
    let g = |x: f64| -> Result<R, QuadError> {
        let r = R::from_f64(x).exp();
        let q = ln_tau_r.add(&profile.log_f(&r));
        let tau_f = q.exp();
        Ok(R::from_f64(two_n2 * x).sub(&tau_f.mul_f64(2.0)))
    };
    let breaks = moment_breaks(profile, n, ln_tau, warm)?;
    let mut result = integrate_log(g, &breaks, &opts.quad(tol))?;
    // verify the truncation edges against the computed total; integrate any
    // shortfall as separate edge pieces rather than redoing the whole range
    for _ in 0..8 {
        let total = result.log_value.to_f64();
        let edge_cap = total + tol.ln() - 12.0;
        let lo = *result.breaks.first().unwrap();
        let hi = *result.breaks.last().unwrap();
        let g_lo = g(lo).map_err(OracleError::Quad)?.to_f64();
        let g_hi = g(hi).map_err(OracleError::Quad)?.to_f64();
        let extend_left = g_lo - two_n2.ln() > edge_cap;
        let extend_right = g_hi > edge_cap;
        if !extend_left && !extend_right {
            break;
        }
        if extend_left {
            let piece = integrate_log(g, &[lo - 400.0 / two_n2, lo], &opts.quad(tol))?;
            result = merge_pieces(piece, result);
        }
        if extend_right {
            let piece = integrate_log(g, &[hi, hi + 1.5], &opts.quad(tol))?;
            result = merge_pieces(result, piece);
        }
    }
    Ok(LogMoment {
        log_value: result.log_value.add_f64(LOG_2PI),
        rel_err: result.rel_err,
        breaks: result.breaks,
    })
}

/// ln c_n(tau) in binary double. The public spec-level entry point.
pub fn moment(
    profile: &RadialProfile,
    n: usize,
    tau: f64,
    tol: f64,
) -> Result<f64, OracleError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(OracleError::Domain(format!("tau must be positive, got {tau}")));
    }
    let opts = OracleOpts::with_tol(tol);
    Ok(log_moment::<f64>(profile, n, tau.ln(), &opts, tol, None)?.log_value)
}

/// Rows ln c_0 .. ln c_{n_max} at a fixed tau, with the worst quadrature
/// error across rows.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTable {
    pub tau: f64,
    pub log_c: Vec<f64>,
    pub n_max: usize,
    pub quad_err: f64,
}

impl MomentTable {
    pub fn build(
        profile: &RadialProfile,
        tau: f64,
        n_max: usize,
        tol: f64,
    ) -> Result<Self, OracleError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(OracleError::Domain(format!("tau must be positive, got {tau}")));
        }
        let opts = OracleOpts::with_tol(tol);
        let mut log_c = Vec::with_capacity(n_max + 1);
        let mut warm: Option<Vec<f64>> = None;
        let mut quad_err = 0.0f64;
        for n in 0..=n_max {
            let m = log_moment::<f64>(profile, n, tau.ln(), &opts, tol, warm.as_deref())?;
            quad_err = quad_err.max(m.rel_err);
            log_c.push(m.log_value);
            warm = Some(m.breaks);
        }
        Ok(MomentTable { tau, log_c, n_max, quad_err })
    }

    /// Cauchy-Schwarz for moments: 2 ln c_n <= ln c_{n-1} + ln c_{n+1}.
    /// Returns the worst slack (nonnegative when log-convexity holds).
    pub fn log_convexity_margin(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for n in 1..self.log_c.len().saturating_sub(1) {
            worst = worst.min(self.log_c[n - 1] + self.log_c[n + 1] - 2.0 * self.log_c[n]);
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct KTauDiag<R> {
    /// ln K_tau(z, z).
    pub log_value: R,
    pub n_used: usize,
    pub rel_err: f64,
}

/// How far the series walks with a fresh adaptive quadrature per term before
/// switching to the shared-mesh path.
const DIRECT_SERIES_CAP: usize = 16;

struct SharedMesh<R> {
    xs: Vec<f64>,
    /// -2 tau f(e^x) + ln(w * h), per node.
    base: Vec<R>,
}

impl<R: Real> SharedMesh<R> {
    fn build(profile: &RadialProfile, ln_tau: f64, breaks: &[f64]) -> Self {
        let ln_tau_r = R::from_f64(ln_tau);
        let mut xs = Vec::new();
        let mut base = Vec::new();
        for w in breaks.windows(2) {
            let c = 0.5 * (w[0] + w[1]);
            let h = 0.5 * (w[1] - w[0]);
            for (j, &xi) in crate::quad::XGK.iter().enumerate() {
                let pts: &[f64] = if j == 7 { &[c] } else { &[c - h * xi, c + h * xi] };
                for &x in pts {
                    let r = R::from_f64(x).exp();
                    let tau_f = ln_tau_r.add(&profile.log_f(&r)).exp();
                    xs.push(x);
                    base.push(tau_f.mul_f64(-2.0).add_f64((crate::quad::WGK[j] * h).ln()));
                }
            }
        }
        SharedMesh { xs, base }
    }

    /// ln c_n on the fixed mesh.
    fn log_moment(&self, n: usize) -> R {
        let two_n2 = (2 * n + 2) as f64;
        let terms: Vec<R> =
            self.xs.iter().zip(&self.base).map(|(&x, b)| b.add_f64(two_n2 * x)).collect();
        crate::real::lse(&terms).add_f64(LOG_2PI)
    }
}

/// ln K_tau(z,z) = ln sum_n |z|^{2n}/c_n(tau), truncated once the terms are
/// decreasing and the bounded geometric tail drops below tolerance.
///
/// Short series walk term by term with warm-started adaptive quadrature.
/// Long series amortize one node mesh across all n (the mesh is the union of
/// adaptive meshes probed at geometrically spaced orders) and re-verify the
/// peak and final terms against independent adaptive runs.
pub fn k_tau_diag_ln<R: Real>(
    profile: &RadialProfile,
    abs_z: f64,
    ln_tau: f64,
    opts: &OracleOpts,
    tol: f64,
) -> Result<KTauDiag<R>, OracleError> {
    let moment_tol = (tol * 0.25).max(1e-13);
    let c0 = log_moment::<R>(profile, 0, ln_tau, opts, moment_tol, None)?;
    if abs_z == 0.0 {
        return Ok(KTauDiag { log_value: c0.log_value.neg(), n_used: 0, rel_err: c0.rel_err });
    }
    let ln_z2 = 2.0 * abs_z.ln();
    let tail_tol = (tol * 0.25).ln();
    let mut sum = c0.log_value.neg();
    let mut warm = c0.breaks.clone();
    let mut rel_err = c0.rel_err;
    let mut prev_term = sum.clone();

    let converged = |term: &R, prev: &R, sum: &R| -> bool {
        let ratio = term.sub(prev).exp().to_f64();
        if ratio >= 0.95 {
            return false;
        }
        let tail = term.to_f64() + (ratio / (1.0 - ratio)).max(1e-300).ln();
        tail < sum.to_f64() + tail_tol
    };

    for n in 1..=DIRECT_SERIES_CAP {
        let m = log_moment::<R>(profile, n, ln_tau, opts, moment_tol, Some(&warm))?;
        warm = m.breaks;
        rel_err = rel_err.max(m.rel_err);
        let term = R::from_f64(n as f64 * ln_z2).sub(&m.log_value);
        sum = lse2(&sum, &term);
        if converged(&term, &prev_term, &sum) {
            return Ok(KTauDiag { log_value: sum, n_used: n, rel_err: rel_err + tol * 0.25 });
        }
        prev_term = term;
    }

    // Long series: probe adaptive meshes at geometric orders to learn where
    // the integrand support travels, then sum on the union mesh.
    let mut mesh_breaks = c0.breaks.clone();
    mesh_breaks.extend_from_slice(&warm);
    let mut probe_n = DIRECT_SERIES_CAP * 2;
    let mut probe_warm = warm.clone();
    loop {
        let m = log_moment::<R>(profile, probe_n, ln_tau, opts, moment_tol, Some(&probe_warm))?;
        rel_err = rel_err.max(m.rel_err);
        mesh_breaks.extend_from_slice(&m.breaks);
        let term = R::from_f64(probe_n as f64 * ln_z2).sub(&m.log_value);
        probe_warm = m.breaks;
        let done = term.to_f64() < sum.to_f64() + tail_tol - 60.0;
        if done || probe_n >= opts.n_cap {
            break;
        }
        probe_n *= 2;
    }
    mesh_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mesh_breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-10);

    for round in 0..3usize {
        thin_breaks(&mut mesh_breaks, 64 + 32 * round);
        let mesh = SharedMesh::<R>::build(profile, ln_tau, &mesh_breaks);
        let mut msum = sum.clone();
        let mut mprev = prev_term.clone();
        let mut peak_n = DIRECT_SERIES_CAP + 1;
        let mut peak_val = f64::NEG_INFINITY;
        let mut n_final = 0usize;
        for n in DIRECT_SERIES_CAP + 1..=opts.n_cap {
            let term = R::from_f64(n as f64 * ln_z2).sub(&mesh.log_moment(n));
            if term.to_f64() > peak_val {
                peak_val = term.to_f64();
                peak_n = n;
            }
            msum = lse2(&msum, &term);
            if converged(&term, &mprev, &msum) {
                n_final = n;
                break;
            }
            mprev = term;
        }
        if n_final == 0 {
            return Err(OracleError::SeriesUnconverged { n_cap: opts.n_cap, tau: ln_tau.exp() });
        }
        // sentinel verification: the mesh must reproduce independent
        // adaptive values at the peak and at the truncation order
        let mut ok = true;
        let mut extra: Vec<f64> = Vec::new();
        for sn in [peak_n, n_final] {
            let m = log_moment::<R>(profile, sn, ln_tau, opts, moment_tol, None)?;
            let mesh_val = mesh.log_moment(sn);
            let diff = (m.log_value.to_f64() - mesh_val.to_f64()).abs();
            if diff > (5.0 * moment_tol).max(1e-11) {
                ok = false;
            }
            extra.extend_from_slice(&m.breaks);
        }
        if ok {
            return Ok(KTauDiag {
                log_value: msum,
                n_used: n_final,
                rel_err: rel_err + tol * 0.5,
            });
        }
        mesh_breaks.extend_from_slice(&extra);
        mesh_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mesh_breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-10);
    }
    Err(OracleError::SeriesUnconverged { n_cap: opts.n_cap, tau: ln_tau.exp() })
}

/// Certified upper bound for ln K_tau(z,z) from the mean-value inequality
/// on a disc of radius delta: K_tau(z,z) <= e^{2 tau f(|z|+delta)}/(pi delta^2).
/// Used to dispose of quadrature panels whose series would be pointlessly
/// long; the caller must verify such panels are negligible.
pub fn k_tau_upper_bound_log(profile: &RadialProfile, abs_z: f64, ln_tau: f64) -> f64 {
    let mut best = f64::INFINITY;
    for mult in [1e-6f64, 1e-4, 1e-2, 0.3] {
        let delta = (abs_z * mult).max(mult * mult);
        let lf = match profile.eval_logf(abs_z + delta) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let tau_f = (ln_tau + lf).exp();
        let b = 2.0 * tau_f - std::f64::consts::PI.ln() - 2.0 * delta.ln();
        best = best.min(b);
    }
    best
}

/// ln K_tau(z,z) in binary double. The public spec-level entry point.
pub fn k_tau_diag(
    profile: &RadialProfile,
    abs_z: f64,
    tau: f64,
    tol: f64,
) -> Result<f64, OracleError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(OracleError::Domain(format!("tau must be positive, got {tau}")));
    }
    if !(abs_z >= 0.0 && abs_z.is_finite()) {
        return Err(OracleError::Domain(format!("|z| must be finite, got {abs_z}")));
    }
    let opts = OracleOpts::with_tol(tol);
    Ok(k_tau_diag_ln::<f64>(profile, abs_z, tau.ln(), &opts, tol)?.log_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalFlag {
    /// log f(|z|) within 1e-3 of log t: the point hugs the boundary.
    ConditioningWarning,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelEvaluation {
    /// ln K(z, it).
    pub value_log: f64,
    pub rel_err: f64,
    pub n_max_used: usize,
    pub tau_nodes_used: usize,
    pub flags: Vec<EvalFlag>,
}

/// Diagonal kernel at (z, it) for |z| = abs_z, t > 0. Requires a strictly
/// interior point; a point within 1e-3 log-margin of the boundary gets a
/// conditioning flag attached instead of an error.
pub fn kernel_diag(
    profile: &RadialProfile,
    abs_z: f64,
    t: f64,
    opts: &OracleOpts,
) -> Result<KernelEvaluation, OracleError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(OracleError::Domain(format!("t must be positive, got {t}")));
    }
    if !(abs_z >= 0.0 && abs_z.is_finite()) {
        return Err(OracleError::Domain(format!("|z| must be finite, got {abs_z}")));
    }
    let margin = t.ln() - profile.eval_logf(abs_z)?;
    if margin <= 0.0 {
        return Err(OracleError::Domain(format!(
            "(z, it) with |z| = {abs_z:.6e}, t = {t:.6e} is not interior (log margin {margin:.3e})"
        )));
    }
    let mut flags = Vec::new();
    if margin < 1e-3 {
        flags.push(EvalFlag::ConditioningWarning);
    }
    let (value_log, rel_err, n_max_used, tau_nodes_used) = match opts.precision {
        Precision::Double => kernel_diag_impl::<f64>(profile, abs_z, t, opts)?,
        Precision::High => kernel_diag_impl::<crate::real::HighReal>(profile, abs_z, t, opts)?,
    };
    Ok(KernelEvaluation { value_log, rel_err, n_max_used, tau_nodes_used, flags })
}

fn kernel_diag_impl<R: Real>(
    profile: &RadialProfile,
    abs_z: f64,
    t: f64,
    opts: &OracleOpts,
) -> Result<(f64, f64, usize, usize), OracleError> {
    let tol = opts.rel_tol;
    let inner_tol = (tol * 0.2).max(1e-13);
    // the integrand dies like e^{-2 tau (t - f(|z|))}: center the panels on
    // the effective gap, not on t itself
    let log_gap = {
        let lf = profile.eval_logf(abs_z)?;
        t.ln() + (-(lf - t.ln()).exp()).ln_1p()
    };
    let y_star = -log_gap;
    let ln_t_r = R::from_f64(t).ln();
    let inner_err = Cell::new(0.0f64);
    let n_used = Cell::new(0usize);
    let nodes = Cell::new(0usize);
    // nodes where the series overran its cap and a mean-value bound stood in;
    // admissible only if they end up contributing below tolerance
    let bounded_mass = std::cell::RefCell::new(Vec::<f64>::new());
    let g = |y: f64| -> Result<R, QuadError> {
        nodes.set(nodes.get() + 1);
        let tau_t = R::from_f64(y).add(&ln_t_r).exp();
        let decay = tau_t.mul_f64(2.0);
        let kt = match k_tau_diag_ln::<R>(profile, abs_z, y, opts, inner_tol) {
            Ok(v) => v,
            Err(OracleError::SeriesUnconverged { .. }) => {
                let cap = k_tau_upper_bound_log(profile, abs_z, y);
                let v = R::from_f64(2.0 * y + cap).sub(&decay);
                bounded_mass.borrow_mut().push(v.to_f64());
                return Ok(v);
            }
            Err(OracleError::Quad(q)) => return Err(q),
            Err(e) => return Err(QuadError::Integrand { at: y, msg: e.to_string() }),
        };
        inner_err.set(inner_err.get().max(kt.rel_err));
        n_used.set(n_used.get().max(kt.n_used));
        Ok(R::from_f64(2.0 * y).add(&kt.log_value).sub(&decay))
    };

    // panels around the balance point tau ~ 1/(t - f(|z|)): six decades on
    // the power-law side; on the exponential side tau = e^{3.5} tau* already
    // kills 2 e^{3.5} ~ 66 log-units, and the series order grows linearly in
    // tau, so the top edge stays tight and extends only while it contributes
    let offsets = [
        -13.8, -9.0, -6.0, -4.0, -2.5, -1.5, -0.8, 0.0, 0.8, 1.6, 2.4, 3.5,
    ];
    let breaks: Vec<f64> = offsets.iter().map(|o| y_star + o).collect();
    let mut result = integrate_log(g, &breaks, &opts.quad(tol * 0.5))?;
    for _ in 0..12 {
        let total = result.log_value.to_f64();
        let edge_cap = total + tol.ln() - 9.0;
        let lo = *result.breaks.first().unwrap();
        let hi = *result.breaks.last().unwrap();
        let g_lo = g(lo).map_err(OracleError::Quad)?.to_f64();
        let g_hi = g(hi).map_err(OracleError::Quad)?.to_f64();
        // left tail decays like tau^2, right tail like e^{-2 tau t}
        let extend_left = g_lo + 0.5f64.ln() > edge_cap;
        let extend_right = g_hi > edge_cap;
        if !extend_left && !extend_right {
            break;
        }
        if extend_left {
            let piece = integrate_log(g, &[lo - 4.0, lo], &opts.quad(tol * 0.5))?;
            result = merge_pieces(piece, result);
        }
        if extend_right {
            let piece = integrate_log(g, &[hi, hi + 1.5], &opts.quad(tol * 0.5))?;
            result = merge_pieces(result, piece);
        }
    }
    let total = result.log_value.to_f64();
    let capped = bounded_mass.borrow();
    let mut bound_err = 0.0;
    if !capped.is_empty() {
        // width proxy: no panel in the y-grid is wider than the extension step
        let mass = log_sum_exp(&capped) + (4.0f64).ln();
        let rel = (mass - total).exp();
        if rel > tol {
            return Err(OracleError::SeriesUnconverged {
                n_cap: opts.n_cap,
                tau: (-t.ln()).exp(),
            });
        }
        bound_err = rel;
    }
    let value_log = total - std::f64::consts::PI.ln();
    let rel_err = result.rel_err + inner_err.get() + bound_err;
    Ok((value_log, rel_err, n_used.get(), nodes.get()))
}

/// The boundary-decay test function phi_t(z, w) = -4 t^2 / (w + it)^2.
pub fn phi_t(w: Complex64, t: f64) -> Complex64 {
    let den = w + Complex64::new(0.0, t);
    Complex64::new(-4.0 * t * t, 0.0) / (den * den)
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiNorm {
    /// ln of the squared norm over the domain cut to the unit-scale polydisc.
    pub exact_log: f64,
    /// ln of the closed-chain majorant 8 pi^2 t^4 int_0^A r (t + f)^{-2} dr.
    pub majorant_log: f64,
    /// ln of the majorant's three radial pieces: [0, R_t], [R_t, R_sqrt(t)],
    /// [R_sqrt(t), A]; they log-sum to majorant_log.
    pub split_logs: [f64; 3],
    pub rel_err: f64,
}

/// Universal constant of the norm majorization chain: 8 pi^2 (the angular
/// 2 pi times 8 int (1+X^2)^{-2} dX = 4 pi).
pub const NORM_CHAIN_CONST: f64 = 78.95683520871486895067593422986;

/// ||phi_t||^2 over Omega_F cut to D(0;A) x D(0;1), together with its
/// radial-integral majorant and the majorant's three-interval split.
pub fn phi_norm_sq(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    t: f64,
    h0: f64,
    tol: f64,
) -> Result<PhiNorm, OracleError> {
    if !(t > 0.0 && t < h0) {
        return Err(OracleError::Domain(format!(
            "t must lie in (0, H0) = (0, {h0:.3e}), got {t:.3e}"
        )));
    }
    let a_cap = constants.a;
    let opts = OracleOpts::with_tol(tol);
    let r_t = profile.inv_f(t.ln())?;
    let r_sqrt_t = profile.inv_f(0.5 * t.ln())?.min(a_cap);

    // exact: 2 pi int_0^A r J(f(r), t) dr with J the w-disc integral; the
    // u-line integral inside J is closed-form, the v-line is quadrature over
    // xi = ln(v + t).
    let inner_tol = (tol * 0.1).max(1e-12);
    let v_integral = |logf_r: f64| -> Result<f64, QuadError> {
        let xi_lo = log_add_exp(logf_r, t.ln());
        let xi_hi = (1.0 + t).ln();
        if xi_hi <= xi_lo {
            return Ok(f64::NEG_INFINITY);
        }
        let g = |xi: f64| -> Result<f64, QuadError> {
            let q = xi.exp();
            let v = q - t;
            let one_minus_v = (1.0 + t) - q;
            if one_minus_v <= 0.0 || v >= 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let u_half = (one_minus_v * (1.0 + v)).sqrt();
            let s = u_half / q;
            let gq = s / (1.0 + s * s) + s.atan();
            if gq <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(-2.0 * xi + gq.ln())
        };
        let mut bk = vec![xi_lo];
        for frac in [0.02f64, 0.1, 0.3, 0.6, 0.9] {
            bk.push(xi_lo + (xi_hi - xi_lo) * frac);
        }
        bk.push(xi_hi);
        let r = integrate_log(g, &bk, &opts.quad(inner_tol))?;
        Ok(r.log_value)
    };

    let inner_err = Cell::new(0.0f64);
    let outer = |x: f64| -> Result<f64, QuadError> {
        let logf_r = profile
            .log_f::<f64>(&x.exp());
        let j = v_integral(logf_r)?;
        Ok(2.0 * x + (16.0f64).ln() + 4.0 * t.ln() + j)
    };
    let r_lo = (r_t * 1e-8).min(a_cap * 1e-10);
    let mut bk = vec![r_lo.ln()];
    for &r in &[r_t * 0.3, r_t, r_t * 3.0, r_sqrt_t * 0.8, r_sqrt_t] {
        if r > r_lo && r < a_cap {
            bk.push(r.ln());
        }
    }
    if let Some(rc) = profile.core_radius() {
        if rc > r_lo && rc < a_cap {
            bk.push(rc.ln());
        }
    }
    bk.push(a_cap.ln());
    bk.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bk.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let exact_int = integrate_log(outer, &bk, &opts.quad(tol))?;
    let exact_log = LOG_2PI + exact_int.log_value;

    // majorant pieces: m(r) = r / (t + f(r))^2 on the three intervals
    let m_integrand = |x: f64| -> Result<f64, QuadError> {
        let lq = log_t_plus_f(profile, t, x.exp())
            .map_err(|e| QuadError::Integrand { at: x, msg: e.to_string() })?;
        Ok(2.0 * x - 2.0 * lq)
    };
    let scale = NORM_CHAIN_CONST.ln() - LOG_2PI + 4.0 * t.ln();
    let mut split_logs = [f64::NEG_INFINITY; 3];
    let pieces = [(r_lo, r_t), (r_t, r_sqrt_t), (r_sqrt_t, a_cap)];
    let mut rel_err = exact_int.rel_err + inner_err.get();
    for (i, &(lo, hi)) in pieces.iter().enumerate() {
        if !(hi > lo) {
            continue;
        }
        let seg = [lo.ln(), 0.5 * (lo.ln() + hi.ln()), hi.ln()];
        let r = integrate_log(m_integrand, &seg, &opts.quad(tol))?;
        rel_err = rel_err.max(r.rel_err);
        split_logs[i] = scale + LOG_2PI + r.log_value;
    }
    let majorant_log = log_sum_exp(&split_logs);
    Ok(PhiNorm { exact_log, majorant_log, split_logs, rel_err })
}

/// ln of the closed-form chain bound 8 pi^2 (1 + K/4) t^2 [f^{-1}(t)]^2.
pub fn norm_chain_bound_log(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    t: f64,
) -> Result<f64, OracleError> {
    let r_t = profile.inv_f(t.ln())?;
    Ok(NORM_CHAIN_CONST.ln()
        + (1.0 + constants.doubling_k / 4.0).ln()
        + 2.0 * t.ln()
        + 2.0 * r_t.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn siegel() -> RadialProfile {
        RadialProfile::power_type(2).unwrap()
    }

    #[test]
    fn power_type_moments_match_gaussian_closed_form() {
        // c_n = pi n! / (2 tau)^{n+1}
        let p = siegel();
        for &tau in &[0.5f64, 1.0, 3.0] {
            let mut ln_fact = 0.0;
            for n in 0..=8usize {
                if n > 0 {
                    ln_fact += (n as f64).ln();
                }
                let want = std::f64::consts::PI.ln() + ln_fact
                    - (n as f64 + 1.0) * (2.0 * tau).ln();
                let got = moment(&p, n, tau, 1e-11).unwrap();
                assert!(
                    (got - want).abs() < 1e-9,
                    "n={n} tau={tau}: got {got}, want {want}"
                );
            }
        }
        // tau = 1/2: c_0 = pi
        let c0 = moment(&p, 0, 0.5, 1e-11).unwrap();
        assert!((c0 - std::f64::consts::PI.ln()).abs() < 1e-10);
    }

    #[test]
    fn moments_grow_as_tau_shrinks() {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        for n in [0usize, 3] {
            let mut prev = f64::NEG_INFINITY;
            for &tau in &[1e4f64, 1e2, 1.0, 1e-2] {
                let c = moment(&p, n, tau, 1e-9).unwrap();
                assert!(c > prev, "c_{n}({tau}) not larger");
                prev = c;
            }
        }
    }

    #[test]
    fn moment_rejects_bad_tau() {
        let p = siegel();
        assert!(moment(&p, 0, 0.0, 1e-9).is_err());
        assert!(moment(&p, 0, f64::INFINITY, 1e-9).is_err());
    }

    #[test]
    fn moment_table_log_convex() {
        for p in [siegel(), RadialProfile::exp_beta(1.0).unwrap()] {
            for &tau in &[0.7f64, 30.0, 1e4] {
                let t = MomentTable::build(&p, tau, 24, 1e-10).unwrap();
                let margin = t.log_convexity_margin();
                assert!(margin > -1e-7, "{:?} tau={tau}: margin {margin}", p.kind());
            }
        }
    }

    #[test]
    fn k_tau_closed_forms_on_siegel() {
        let p = siegel();
        // z = 0: 1/c_0 = 2 tau / pi
        for &tau in &[0.5f64, 2.0, 40.0] {
            let got = k_tau_diag(&p, 0.0, tau, 1e-10).unwrap();
            let want = (2.0 * tau / std::f64::consts::PI).ln();
            assert!((got - want).abs() < 1e-9, "tau={tau}");
        }
        // z != 0: (2 tau / pi) e^{2 tau |z|^2}
        for &(z, tau) in &[(0.4f64, 1.0f64), (1.2, 2.5), (0.1, 30.0)] {
            let got = k_tau_diag(&p, z, tau, 1e-10).unwrap();
            let want = (2.0 * tau / std::f64::consts::PI).ln() + 2.0 * tau * z * z;
            assert!((got - want).abs() < 1e-8, "z={z} tau={tau}: {got} vs {want}");
        }
    }

    #[test]
    fn k_tau_at_origin_is_reciprocal_c0_for_flat_kind() {
        let p = RadialProfile::exp_beta(2.0).unwrap();
        let tau = 1e3;
        let got = k_tau_diag(&p, 0.0, tau, 1e-10).unwrap();
        let c0 = moment(&p, 0, tau, 1e-10).unwrap();
        assert!((got + c0).abs() < 1e-12);
    }

    #[test]
    fn kernel_matches_siegel_closed_form_at_origin() {
        let p = siegel();
        let opts = OracleOpts::with_tol(1e-9);
        let k = kernel_diag(&p, 0.0, 1.0, &opts).unwrap();
        let want = (1.0 / (2.0 * std::f64::consts::PI.powi(2))).ln();
        assert!((k.value_log - want).abs() < 1e-7, "got {}", k.value_log);
        assert!(k.rel_err < 1e-7);
        assert!(k.flags.is_empty());
    }

    #[test]
    fn kernel_matches_siegel_closed_form_off_axis() {
        let p = siegel();
        let opts = OracleOpts::with_tol(1e-9);
        for &(z, t) in &[(0.5f64, 1.0f64), (0.2, 0.1), (1.0, 1.5)] {
            let gap = t - z * z;
            let k = kernel_diag(&p, z, t, &opts).unwrap();
            let want = -(2.0 * std::f64::consts::PI.powi(2) * gap.powi(3)).ln();
            assert!(
                (k.value_log - want).abs() < 3e-7,
                "z={z} t={t}: got {}, want {want}",
                k.value_log
            );
        }
    }

    #[test]
    fn kernel_scaling_law_on_siegel() {
        // K(0, i lambda t) = lambda^{-3} K(0, it)
        let p = siegel();
        let opts = OracleOpts::with_tol(1e-9);
        let k1 = kernel_diag(&p, 0.0, 0.3, &opts).unwrap().value_log;
        let k2 = kernel_diag(&p, 0.0, 3.0, &opts).unwrap().value_log;
        assert!((k1 - k2 - 3.0 * (10.0f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn kernel_requires_interior_point() {
        let p = siegel();
        let opts = OracleOpts::default();
        assert!(matches!(
            kernel_diag(&p, 1.0, 0.5, &opts),
            Err(OracleError::Domain(_))
        ));
        assert!(kernel_diag(&p, 0.0, 0.0, &opts).is_err());
        // boundary-proximal point gets flagged, not rejected
        let q = RadialProfile::exp_beta(1.0).unwrap();
        let t = (-2.5f64).exp() * (1.0 + 9e-4);
        let prox = OracleOpts::with_tol(1e-4);
        let k = kernel_diag(&q, 0.4, t, &prox).unwrap();
        assert!(k.flags.contains(&EvalFlag::ConditioningWarning));
    }

    #[test]
    fn kernel_monotonicities() {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        let opts = OracleOpts::with_tol(1e-8);
        // decreasing in t at z = 0
        let mut prev = f64::INFINITY;
        for &t in &[1e-2f64, 3e-2, 1e-1, 0.5] {
            let k = kernel_diag(&p, 0.0, t, &opts).unwrap().value_log;
            assert!(k < prev);
            prev = k;
        }
        // increasing in |z| at fixed t
        let t = 1e-2;
        let mut prev = f64::NEG_INFINITY;
        for &z in &[0.0f64, 0.05, 0.1, 0.15] {
            let k = kernel_diag(&p, z, t, &opts).unwrap().value_log;
            assert!(k > prev, "z={z}");
            prev = k;
        }
    }

    #[test]
    fn kernel_high_precision_agrees_with_double() {
        let p = siegel();
        let mut opts = OracleOpts::with_tol(1e-9);
        opts.precision = Precision::High;
        let k = kernel_diag(&p, 0.0, 1.0, &opts).unwrap();
        let want = (1.0 / (2.0 * std::f64::consts::PI.powi(2))).ln();
        assert!((k.value_log - want).abs() < 1e-7);

        let q = RadialProfile::exp_beta(1.0).unwrap();
        let kd = kernel_diag(&q, 0.0, 1e-4, &OracleOpts::with_tol(1e-9)).unwrap();
        opts.rel_tol = 1e-9;
        let kh = kernel_diag(&q, 0.0, 1e-4, &opts).unwrap();
        assert!(
            (kd.value_log - kh.value_log).abs() < 1e-6,
            "double {} vs high {}",
            kd.value_log,
            kh.value_log
        );
    }

    #[test]
    fn unconverged_surfaces_as_error() {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        let opts = OracleOpts { rel_tol: 1e-12, panel_cap: 3, ..OracleOpts::default() };
        assert!(matches!(
            kernel_diag(&p, 0.0, 1e-3, &opts),
            Err(OracleError::Quad(QuadError::Unconverged { .. }))
        ));
    }

    #[test]
    fn phi_t_is_one_at_the_probe_point() {
        let t = 0.37;
        let v = phi_t(Complex64::new(0.0, t), t);
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // and translation leaves |phi| shrinking away from the pole
        let far = phi_t(Complex64::new(5.0, t), t);
        assert!(far.norm() < 1.0);
    }
}
