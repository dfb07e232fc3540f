//! Flatness witnesses, the derived constants, and the grid-based condition
//! checkers: monotonicity, infinite-order vanishing, the chi-sandwich,
//! convexity of chi^p, the tail lower bound, and the doubling inequalities.

use super::{ProfileError, RadialProfile};
use crate::profile::table::MonotoneTable;
use serde::Serialize;

/// The comparison function chi in the flatness condition. `LambdaF` uses the
/// profile's own gauge (sandwich ratio identically 1); a table supplies chi
/// pointwise on [x_min, eps0].
#[derive(Debug, Clone, Serialize)]
pub enum ChiSpec {
    LambdaF,
    Table(MonotoneTable),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StarParams {
    pub eta: f64,
    pub c: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatnessWitness {
    pub chi: ChiSpec,
    pub p: f64,
    pub b: f64,
    pub eps0: f64,
    pub star: StarParams,
}

impl FlatnessWitness {
    pub fn lambda_f(p: f64, b: f64, eps0: f64, star: StarParams) -> Result<Self, ProfileError> {
        let w = FlatnessWitness { chi: ChiSpec::LambdaF, p, b, eps0, star };
        w.validate()?;
        Ok(w)
    }

    /// Default witness for a built-in profile: chi = Lambda_f with B = 1 and
    /// the star parameters read off the constructed quadratic tail.
    pub fn default_for(profile: &RadialProfile, p: f64, eps0: f64) -> Result<Self, ProfileError> {
        let (eta, ln_c, r) = profile.tail_bound().ok_or_else(|| {
            ProfileError::Parameter("custom profiles need explicit star parameters".into())
        })?;
        Self::lambda_f(p, 1.0, eps0, StarParams { eta, c: ln_c.exp(), r })
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let ok = self.p > 0.0
            && self.p.is_finite()
            && self.b >= 1.0
            && self.b.is_finite()
            && self.eps0 > 0.0
            && self.eps0.is_finite()
            && self.star.eta > 0.0
            && self.star.c > 0.0
            && self.star.r > 0.0;
        if !ok {
            return Err(ProfileError::Parameter(format!(
                "witness wants p > 0, B >= 1, eps0 > 0 and positive star parameters: \
                 p={}, B={}, eps0={}, star=({}, {}, {})",
                self.p, self.b, self.eps0, self.star.eta, self.star.c, self.star.r
            )));
        }
        Ok(())
    }

    /// ln chi(x) for x in (0, eps0].
    pub fn chi_log(&self, profile: &RadialProfile, x: f64) -> Result<f64, ProfileError> {
        match &self.chi {
            ChiSpec::LambdaF => profile.lambda_f_log(x),
            ChiSpec::Table(tbl) => {
                let v = tbl.eval(x)?;
                if v <= 0.0 {
                    return Err(ProfileError::Domain(format!("chi({x}) = {v} is not positive")));
                }
                Ok(v.ln())
            }
        }
    }

    /// kappa_0 = chi^{-1}, evaluated at y > 0.
    pub fn chi_inv(&self, profile: &RadialProfile, y: f64) -> Result<f64, ProfileError> {
        match &self.chi {
            ChiSpec::LambdaF => profile.g_f(y),
            ChiSpec::Table(tbl) => Ok(tbl.invert(y)?),
        }
    }
}

/// Constants derived from a verified witness by closed formulas.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivedConstants {
    pub kappa_eta: u32,
    pub m: f64,
    pub mu: f64,
    pub c1: f64,
    /// Doubling inequality constant K = M(M+2) ...
    pub doubling_k: f64,
    /// ... valid on (0, T), T = min(T1/2, T1/B) with T1 = chi(eps0)/B.
    pub doubling_t: f64,
    pub a: f64,
}

pub fn derive_constants(
    witness: &FlatnessWitness,
    profile: &RadialProfile,
) -> Result<DerivedConstants, ProfileError> {
    witness.validate()?;
    let kappa_eta = if witness.star.eta > 1.0 {
        1
    } else {
        // least integer strictly greater than 1/eta
        (1.0 / witness.star.eta).floor() as u32 + 1
    };
    let m = (2.0 * witness.b * witness.b).powf(witness.p) - 1.0;
    let mu = 1.0 / (m + 1.0);
    let c1 = 64.0 / (mu * mu * std::f64::consts::PI * std::f64::consts::PI);
    let t1 = witness.chi_log(profile, witness.eps0)?.exp() / witness.b;
    let doubling_t = (t1 / 2.0).min(t1 / witness.b);
    let doubling_k = m * (m + 2.0);
    let a = profile.r_unit().min(1.0);
    Ok(DerivedConstants { kappa_eta, m, mu, c1, doubling_k, doubling_t, a })
}

/// Geometric grids the checker runs on.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    /// Bottom of the geometric grid on (0, eps0], as a fraction of eps0.
    pub eps_lo_frac: f64,
    pub eps_nodes: usize,
    /// Top of the tail grid on [R, r_max].
    pub r_max: f64,
    pub tail_nodes: usize,
    /// Infinite-order vanishing is tested for k = 1..=k_max.
    pub k_max: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { eps_lo_frac: 1e-8, eps_nodes: 512, r_max: 100.0, tail_nodes: 128, k_max: 64 }
    }
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub const CONVEXITY_TOL: f64 = -1e-10;
pub const LOG_MARGIN_TOL: f64 = -1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    /// Worst-case margin; positive means the condition held with room.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Runs every structural condition on geometric grids and reports
/// per-condition pass/fail with worst-case margins. A failing condition is a
/// report entry, not an error.
pub fn check_conditions(
    profile: &RadialProfile,
    witness: &FlatnessWitness,
    grid: &GridSpec,
) -> Result<ConditionReport, ProfileError> {
    witness.validate()?;
    if grid.eps_nodes < 8 || grid.tail_nodes < 2 {
        return Err(ProfileError::Parameter(format!(
            "grids too small: eps_nodes={}, tail_nodes={}",
            grid.eps_nodes, grid.tail_nodes
        )));
    }
    if grid.r_max <= witness.star.r {
        return Err(ProfileError::Parameter(format!(
            "r_max = {} must exceed the star radius R = {}",
            grid.r_max, witness.star.r
        )));
    }
    let mut checks = Vec::new();
    let eps_grid = geometric_grid(witness.eps0 * grid.eps_lo_frac, witness.eps0, grid.eps_nodes);
    let tail_grid = geometric_grid(witness.star.r, grid.r_max, grid.tail_nodes);

    checks.push(check_monotone(profile, &eps_grid, &tail_grid)?);
    checks.push(check_vanishing(profile, &eps_grid, grid.k_max)?);
    checks.push(check_sandwich(profile, witness, &eps_grid)?);
    checks.push(check_chi_monotone(profile, witness, &eps_grid)?);
    checks.push(check_convexity(profile, witness, &eps_grid)?);
    checks.push(check_tail(profile, witness, &tail_grid)?);
    Ok(ConditionReport { checks })
}

fn check_monotone(
    profile: &RadialProfile,
    eps_grid: &[f64],
    tail_grid: &[f64],
) -> Result<ConditionCheck, ProfileError> {
    let mut grid: Vec<f64> = eps_grid.to_vec();
    let bridge = geometric_grid(*eps_grid.last().unwrap(), tail_grid[0], 64);
    grid.extend_from_slice(&bridge[1..]);
    grid.extend_from_slice(&tail_grid[1..]);
    let mut worst = f64::INFINITY;
    let mut worst_r = grid[0];
    let mut saturated = 0usize;
    let mut prev = profile.eval_logf(grid[0])?;
    for &r in &grid[1..] {
        let v = profile.eval_logf(r)?;
        // where log f saturates to -inf the format can no longer resolve the
        // (true) increase; count those nodes instead of comparing them
        if prev == f64::NEG_INFINITY && v == f64::NEG_INFINITY {
            saturated += 1;
            continue;
        }
        let step = v - prev;
        if step < worst {
            worst = step;
            worst_r = r;
        }
        prev = v;
    }
    Ok(ConditionCheck {
        name: "monotone_f".into(),
        passed: worst > 0.0,
        margin: worst,
        detail: format!(
            "min increment of log f is {worst:.3e} near r = {worst_r:.3e}{}",
            if saturated > 0 {
                format!("; {saturated} nodes below log-representable range")
            } else {
                String::new()
            }
        ),
    })
}

fn check_vanishing(
    profile: &RadialProfile,
    eps_grid: &[f64],
    k_max: u32,
) -> Result<ConditionCheck, ProfileError> {
    let r0 = eps_grid[0];
    let r1 = eps_grid[1];
    let lf0 = profile.eval_logf(r0)?;
    let lf1 = profile.eval_logf(r1)?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_k = 1;
    let mut trend_ok = true;
    for k in 1..=k_max {
        let d0 = lf0 - k as f64 * r0.ln();
        let d1 = lf1 - k as f64 * r1.ln();
        // d must be negative at the smallest node and falling toward 0
        if d0 == f64::NEG_INFINITY {
            continue;
        }
        if d0 > worst {
            worst = d0;
            worst_k = k;
        }
        if d1 != f64::NEG_INFINITY && d0 >= d1 {
            trend_ok = false;
        }
    }
    if worst == f64::NEG_INFINITY {
        // log f underflowed the whole grid bottom: vanishing beyond doubt
        return Ok(ConditionCheck {
            name: "infinite_order_vanishing".into(),
            passed: true,
            margin: f64::INFINITY,
            detail: format!("log f(r) = -inf at r = {r0:.3e}; all k <= {k_max} pass"),
        });
    }
    let passed = worst < 0.0 && trend_ok;
    Ok(ConditionCheck {
        name: "infinite_order_vanishing".into(),
        passed,
        margin: -worst,
        detail: format!(
            "worst log(f(r)/r^k) = {worst:.3e} at k = {worst_k}, r = {r0:.3e}{}",
            if trend_ok { "" } else { "; ratio not falling as r -> 0" }
        ),
    })
}

fn check_sandwich(
    profile: &RadialProfile,
    witness: &FlatnessWitness,
    eps_grid: &[f64],
) -> Result<ConditionCheck, ProfileError> {
    let ln_b = witness.b.ln();
    let mut worst = f64::INFINITY;
    let mut worst_x = eps_grid[0];
    let mut skipped = 0usize;
    for &x in eps_grid {
        let lam = match profile.lambda_f_log(x) {
            Ok(v) => v,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let chi = match witness.chi_log(profile, x) {
            Ok(v) => v,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if lam == f64::NEG_INFINITY && chi == f64::NEG_INFINITY {
            continue;
        }
        let m = (ln_b + chi - lam).min(lam - (chi - ln_b));
        if m < worst {
            worst = m;
            worst_x = x;
        }
    }
    let passed = worst >= LOG_MARGIN_TOL && skipped == 0;
    Ok(ConditionCheck {
        name: "flatness_sandwich".into(),
        passed,
        margin: worst,
        detail: format!(
            "worst log-margin of (1/B)chi <= Lambda_f <= B chi is {worst:.3e} at x = {worst_x:.3e}{}",
            if skipped > 0 { format!("; {skipped} nodes not evaluable") } else { String::new() }
        ),
    })
}

fn check_chi_monotone(
    profile: &RadialProfile,
    witness: &FlatnessWitness,
    eps_grid: &[f64],
) -> Result<ConditionCheck, ProfileError> {
    let mut worst = f64::INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for &x in eps_grid {
        let v = witness.chi_log(profile, x).unwrap_or(f64::NAN);
        if v.is_nan() {
            return Ok(ConditionCheck {
                name: "chi_monotone".into(),
                passed: false,
                margin: f64::NAN,
                detail: format!("chi not evaluable at x = {x:.3e}"),
            });
        }
        if prev != f64::NEG_INFINITY {
            worst = worst.min(v - prev);
        }
        prev = v;
    }
    Ok(ConditionCheck {
        name: "chi_monotone".into(),
        passed: worst > 0.0,
        margin: worst,
        detail: format!("min increment of ln chi on the grid is {worst:.3e}"),
    })
}

fn check_convexity(
    profile: &RadialProfile,
    witness: &FlatnessWitness,
    eps_grid: &[f64],
) -> Result<ConditionCheck, ProfileError> {
    // chi^p needs linear values; restrict to nodes where it is representable.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &x in eps_grid {
        if let Ok(cl) = witness.chi_log(profile, x) {
            let y = (witness.p * cl).exp();
            if y > 1e-290 && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    if xs.len() < 8 {
        return Ok(ConditionCheck {
            name: "chi_p_convex".into(),
            passed: false,
            margin: f64::NAN,
            detail: format!("only {} representable nodes for chi^p", xs.len()),
        });
    }
    let mut worst = f64::INFINITY;
    let mut worst_x = xs[0];
    for i in 1..xs.len() - 1 {
        let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
        let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
        let d2 = ((y2 - y1) / (x2 - x1) - (y1 - y0) / (x1 - x0)) / (x2 - x0);
        let scale = (y0.abs() + y1.abs() + y2.abs()) / ((x2 - x0) * (x2 - x0)) + 1e-300;
        let normalized = d2 / scale;
        if normalized < worst {
            worst = normalized;
            worst_x = x1;
        }
    }
    Ok(ConditionCheck {
        name: "chi_p_convex".into(),
        passed: worst >= CONVEXITY_TOL,
        margin: worst,
        detail: format!(
            "min normalized second divided difference of chi^p is {worst:.3e} at x = {worst_x:.3e} \
             ({} nodes, tested down to x = {:.3e})",
            xs.len(),
            xs[0]
        ),
    })
}

fn check_tail(
    profile: &RadialProfile,
    witness: &FlatnessWitness,
    tail_grid: &[f64],
) -> Result<ConditionCheck, ProfileError> {
    let ln_c = witness.star.c.ln();
    let mut worst = f64::INFINITY;
    let mut worst_r = tail_grid[0];
    for &r in tail_grid {
        let m = profile.eval_logf(r)? - (ln_c + witness.star.eta * r.ln());
        if m < worst {
            worst = m;
            worst_r = r;
        }
    }
    Ok(ConditionCheck {
        name: "tail_lower_bound".into(),
        passed: worst >= LOG_MARGIN_TOL,
        margin: worst,
        detail: format!(
            "worst log-margin of f(r) >= C r^eta on [R, r_max] is {worst:.3e} at r = {worst_r:.3e}"
        ),
    })
}

/// Grid check of the doubling inequalities on (0, T): strictness of
/// G_f(2t) - G_f(t), the linear bound with M, and the squared bound with K.
#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub passed: bool,
    /// Smallest K that would survive the grid: max of G(2t)^2/G(t)^2 - 1.
    pub empirical_k: f64,
    pub worst_linear_margin: f64,
    pub worst_squared_margin: f64,
    pub nodes: usize,
}

pub fn check_doubling(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    t_lo: f64,
    t_hi: f64,
    nodes: usize,
) -> Result<DoublingReport, ProfileError> {
    if !(t_lo > 0.0 && t_hi > t_lo) || nodes < 2 {
        return Err(ProfileError::Parameter(format!(
            "doubling grid wants 0 < t_lo < t_hi and >= 2 nodes; got [{t_lo:.3e}, {t_hi:.3e}] x {nodes}"
        )));
    }
    if t_hi >= constants.doubling_t {
        return Err(ProfileError::Parameter(format!(
            "doubling grid top {t_hi:.6e} reaches past T = {:.6e}",
            constants.doubling_t
        )));
    }
    let mut empirical_k = f64::NEG_INFINITY;
    let mut worst_linear = f64::INFINITY;
    let mut worst_squared = f64::INFINITY;
    let mut strict_ok = true;
    for &t in &geometric_grid(t_lo, t_hi, nodes) {
        let g1 = profile.g_f(t)?;
        let g2 = profile.g_f(2.0 * t)?;
        if !(g2 > g1 && g1 > 0.0) {
            strict_ok = false;
            continue;
        }
        let ratio2 = (g2 / g1).powi(2) - 1.0;
        empirical_k = empirical_k.max(ratio2);
        // margins are relative: positive iff inequality holds
        worst_linear = worst_linear.min(constants.m - (g2 - g1) / g1);
        worst_squared = worst_squared.min(constants.doubling_k - ratio2);
    }
    let tol = 1e-9 * (1.0 + constants.doubling_k);
    Ok(DoublingReport {
        passed: strict_ok && worst_linear >= -tol && worst_squared >= -tol,
        empirical_k,
        worst_linear_margin: worst_linear,
        worst_squared_margin: worst_squared,
        nodes,
    })
}

/// Checks the convexity-ratio bound kappa_0(Bt)/kappa_0(t) <= B^p on
/// (0, T1/B) and the two-sided kappa sandwich of G_f on (0, T1].
#[derive(Debug, Clone, Serialize)]
pub struct RatioFactReport {
    pub passed: bool,
    pub worst_ratio_margin: f64,
    pub worst_sandwich_margin: f64,
}

pub fn check_ratio_fact(
    profile: &RadialProfile,
    witness: &FlatnessWitness,
    nodes: usize,
) -> Result<RatioFactReport, ProfileError> {
    let t1 = witness.chi_log(profile, witness.eps0)?.exp() / witness.b;
    let ln_bp = witness.p * witness.b.ln();
    let mut worst_ratio = f64::INFINITY;
    let mut worst_sandwich = f64::INFINITY;
    for &t in &geometric_grid(t1 * 1e-9 / witness.b, t1 * 0.999 / witness.b, nodes) {
        let k0_bt = witness.chi_inv(profile, witness.b * t)?;
        let k0_t = witness.chi_inv(profile, t)?;
        worst_ratio = worst_ratio.min(ln_bp - (k0_bt / k0_t).ln());
        let g = profile.g_f(t)?;
        let kappa1 = witness.chi_inv(profile, t / witness.b)?;
        worst_sandwich = worst_sandwich.min((g / kappa1).ln().min((k0_bt / g).ln()));
    }
    Ok(RatioFactReport {
        passed: worst_ratio >= LOG_MARGIN_TOL && worst_sandwich >= LOG_MARGIN_TOL,
        worst_ratio_margin: worst_ratio,
        worst_sandwich_margin: worst_sandwich,
    })
}

/// Smallest p from a fixed ladder whose chi^p convexity check passes with
/// chi = Lambda_f; the search is a default policy, not a canonical choice.
pub fn suggest_p(
    profile: &RadialProfile,
    eps0: f64,
    grid: &GridSpec,
) -> Result<Option<f64>, ProfileError> {
    const LADDER: [f64; 9] = [1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0];
    let (eta, ln_c, r) = profile
        .tail_bound()
        .ok_or_else(|| ProfileError::Parameter("suggest_p needs a built-in profile".into()))?;
    for &p in &LADDER {
        let w = FlatnessWitness::lambda_f(p, 1.0, eps0, StarParams { eta, c: ln_c.exp(), r })?;
        let eps_grid = geometric_grid(eps0 * grid.eps_lo_frac, eps0, grid.eps_nodes);
        let check = check_convexity(profile, &w, &eps_grid)?;
        if check.passed {
            return Ok(Some(p));
        }
    }
    Ok(None)
}
