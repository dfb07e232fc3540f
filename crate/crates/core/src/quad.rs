//! Adaptive 15-point Gauss-Kronrod panels driven entirely in log-domain:
//! the integrand supplies log values, panel sums are log-sum-exp with the
//! panel maximum factored out, and the Kronrod/Gauss discrepancy provides
//! the error estimate. Integrands for the flat profiles span thousands of
//! orders of magnitude, so nothing here ever forms a linear integrand value.

use crate::real::{log_diff, lse, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature unconverged: {panels} panels, relative error {rel_err:.3e} (cap {cap})")]
    Unconverged { panels: usize, rel_err: f64, cap: usize },
    #[error("integrand failure at x = {at:.6e}: {msg}")]
    Integrand { at: f64, msg: String },
    #[error("need at least two breakpoints, got {0}")]
    Breakpoints(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub rel_tol: f64,
    pub panel_cap: usize,
    pub max_passes: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { rel_tol: 1e-10, panel_cap: 4096, max_passes: 64 }
    }
}

impl QuadOpts {
    pub fn with_tol(rel_tol: f64) -> Self {
        QuadOpts { rel_tol, ..QuadOpts::default() }
    }
}

#[derive(Debug, Clone)]
pub struct LogIntegral<R> {
    /// log of the integral value.
    pub log_value: R,
    /// estimated relative error of the value.
    pub rel_err: f64,
    pub panels: usize,
    pub evals: usize,
    /// final panel edges, reusable as warm-start breakpoints.
    pub breaks: Vec<f64>,
}

// 15-point Kronrod abscissae (nonnegative half), embedded 7-point Gauss at
// the odd indices plus the center.
pub(crate) const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
pub(crate) const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Panel<R> {
    a: f64,
    b: f64,
    log_kron: R,
    log_err: R,
}

fn gk15_log<R: Real>(
    g: &mut dyn FnMut(f64) -> Result<R, QuadError>,
    a: f64,
    b: f64,
) -> Result<(Panel<R>, usize), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let ln_h = h.ln();
    let mut kron_terms: Vec<R> = Vec::with_capacity(15);
    let mut gauss_terms: Vec<R> = Vec::with_capacity(7);
    let mut evals = 0usize;
    for (j, &xi) in XGK.iter().enumerate() {
        let pts: &[f64] = if j == 7 { &[c] } else { &[c - h * xi, c + h * xi] };
        for &x in pts {
            let v = g(x)?;
            if v.is_nan() {
                return Err(QuadError::Integrand { at: x, msg: "log-integrand is NaN".into() });
            }
            evals += 1;
            kron_terms.push(v.add_f64(WGK[j].ln()));
            if j % 2 == 1 {
                gauss_terms.push(v.add_f64(WG[j / 2].ln()));
            } else if j == 7 {
                gauss_terms.push(v.add_f64(WG[3].ln()));
            }
        }
    }
    let log_kron = lse(&kron_terms).add_f64(ln_h);
    let log_gauss = lse(&gauss_terms).add_f64(ln_h);
    let log_err = if log_kron >= log_gauss {
        log_diff(&log_kron, &log_gauss)
    } else {
        log_diff(&log_gauss, &log_kron)
    };
    Ok((Panel { a, b, log_kron, log_err }, evals))
}

/// Integrates exp(g(x)) dx over the span of `breakpoints`, refining panels
/// until the summed Kronrod/Gauss discrepancy drops below `rel_tol` of the
/// total. Exceeding the panel cap is an explicit error, not a best effort.
pub fn integrate_log<R: Real>(
    mut g: impl FnMut(f64) -> Result<R, QuadError>,
    breakpoints: &[f64],
    opts: &QuadOpts,
) -> Result<LogIntegral<R>, QuadError> {
    if breakpoints.len() < 2 {
        return Err(QuadError::Breakpoints(breakpoints.len()));
    }
    let mut evals = 0usize;
    let mut panels: Vec<Panel<R>> = Vec::new();
    for w in breakpoints.windows(2) {
        if !(w[1] > w[0]) {
            return Err(QuadError::Integrand {
                at: w[0],
                msg: format!("breakpoints not strictly increasing: {} then {}", w[0], w[1]),
            });
        }
        let (p, e) = gk15_log(&mut g, w[0], w[1])?;
        evals += e;
        panels.push(p);
    }

    for _pass in 0..opts.max_passes {
        let total_val = lse(&panels.iter().map(|p| p.log_kron.clone()).collect::<Vec<_>>());
        let total_err = lse(&panels.iter().map(|p| p.log_err.clone()).collect::<Vec<_>>());
        if total_val.is_neg_infinity() {
            return Ok(finish(panels, total_val, 0.0, evals));
        }
        let rel = total_err.sub(&total_val).exp().to_f64();
        if rel <= opts.rel_tol {
            return Ok(finish(panels, total_val, rel, evals));
        }
        if panels.len() >= opts.panel_cap {
            return Err(QuadError::Unconverged { panels: panels.len(), rel_err: rel, cap: opts.panel_cap });
        }
        // split the worst quarter of panels (at least one)
        let mut order: Vec<usize> = (0..panels.len()).collect();
        order.sort_by(|&i, &j| {
            panels[j].log_err.partial_cmp(&panels[i].log_err).unwrap_or(std::cmp::Ordering::Equal)
        });
        let n_split = (panels.len() / 4).max(1).min(opts.panel_cap - panels.len()).max(1);
        let mut split_set: Vec<usize> = order.into_iter().take(n_split).collect();
        split_set.sort_unstable_by(|a, b| b.cmp(a));
        for idx in split_set {
            let Panel { a, b, .. } = panels[idx];
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                continue; // panel at floating-point resolution
            }
            let (p1, e1) = gk15_log(&mut g, a, m)?;
            let (p2, e2) = gk15_log(&mut g, m, b)?;
            evals += e1 + e2;
            panels[idx] = p1;
            panels.push(p2);
        }
    }
    let total_val = lse(&panels.iter().map(|p| p.log_kron.clone()).collect::<Vec<_>>());
    let total_err = lse(&panels.iter().map(|p| p.log_err.clone()).collect::<Vec<_>>());
    let rel = total_err.sub(&total_val).exp().to_f64();
    if rel <= opts.rel_tol {
        return Ok(finish(panels, total_val, rel, evals));
    }
    Err(QuadError::Unconverged { panels: panels.len(), rel_err: rel, cap: opts.panel_cap })
}

fn finish<R: Real>(mut panels: Vec<Panel<R>>, total: R, rel: f64, evals: usize) -> LogIntegral<R> {
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap());
    let mut breaks: Vec<f64> = panels.iter().map(|p| p.a).collect();
    breaks.push(panels.last().unwrap().b);
    LogIntegral { log_value: total, rel_err: rel, panels: panels.len(), evals, breaks }
}
