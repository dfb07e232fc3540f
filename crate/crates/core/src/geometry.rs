//! Geometry of the model domain: membership, approach regions, the
//! admissibility thresholds, the inscribed polydisc with its volume-reciprocal
//! envelope, and the bounded realization map.

use crate::numeric::{self, log_add_exp, NumericError, ThresholdOutcome};
use crate::profile::witness::{DerivedConstants, StarParams};
use crate::profile::{ProfileError, RadialProfile};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("map pole at w = -i")]
    Pole,
    #[error("containment audit failed: {0}")]
    ContainmentAudit(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Approach region with tangential contact of order up to N.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct ApproachRegion {
    pub alpha: f64,
    pub n: u32,
}

impl ApproachRegion {
    pub fn new(alpha: f64, n: u32) -> Result<Self, GeometryError> {
        if !(alpha > 0.0 && alpha.is_finite()) || n == 0 {
            return Err(GeometryError::Argument(format!(
                "approach region wants alpha > 0 and N >= 1, got ({alpha}, {n})"
            )));
        }
        Ok(ApproachRegion { alpha, n })
    }
}

/// Interior membership, decided in log-domain: Im w > f(|z|).
pub fn in_domain(profile: &RadialProfile, z: Complex64, w: Complex64) -> bool {
    if !z.is_finite() || !w.is_finite() || w.im <= 0.0 {
        return false;
    }
    match profile.eval_logf(z.norm()) {
        Ok(lf) => w.im.ln() > lf,
        Err(_) => false,
    }
}

/// Strict membership in the approach region (and in the domain).
pub fn in_approach_region(
    profile: &RadialProfile,
    region: ApproachRegion,
    z: Complex64,
    w: Complex64,
) -> bool {
    if !in_domain(profile, z, w) {
        return false;
    }
    let lhs = (z.norm_sqr() + w.re * w.re).sqrt();
    lhs < region.alpha * w.im.powf(1.0 / region.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BindingConstraint {
    /// alpha t^{1/N} <= (mu/4) f^{-1}(t) gave out first.
    TangentialContact,
    /// The comparison-radius cap R_cmp was the binding constraint.
    ComparisonRadius,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    /// Admissibility threshold for the approach region.
    pub h_n_alpha: f64,
    /// Radius below which the 3/4-ratio comparison holds.
    pub r_cmp: f64,
    /// Threshold for the norm-chain estimates (and the full lower bound).
    pub h0: f64,
    pub binding: BindingConstraint,
}

const T_FLOOR: f64 = 1e-300;
const T_CEIL: f64 = 0.999;

/// Computes the three thresholds by bisection on residuals that are verified
/// monotone on a probe grid first; a non-monotone probe is an error, never a
/// guessed value.
pub fn compute_thresholds(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    region: ApproachRegion,
) -> Result<Thresholds, GeometryError> {
    let t_big = constants.doubling_t;

    // R_cmp: f^{-1}(3t/4) must dominate G_f at half the log-scale, and that
    // half-scale must sit inside the doubling window.
    let r_cmp = numeric::largest_threshold(T_FLOOR, T_CEIL, |t| {
        let l = -t.ln();
        let res_a = l - (4.0f64 / 3.0).ln();
        let res_b = t_big - 1.0 / (2.0 * l);
        res_a.min(res_b)
    })?
    .value();

    // H_{N,alpha}: largest t with alpha t^{1/N} <= (mu/4) f^{-1}(t). The
    // log-residual need not be monotone over the whole range, so bracket the
    // first crossing and verify monotonicity only inside the bracket.
    let mu4 = constants.mu / 4.0;
    let res_contact = |t: f64| -> f64 {
        let rinv = match profile.inv_f(t.ln()) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        mu4.ln() + rinv.ln() - region.alpha.ln() - t.ln() / region.n as f64
    };
    let contact = numeric::first_crossing_threshold(T_FLOOR, r_cmp, res_contact)?;
    let (h_n_alpha, binding) = match contact {
        ThresholdOutcome::Root(v) => (v, BindingConstraint::TangentialContact),
        ThresholdOutcome::CappedAtHi(v) => (v, BindingConstraint::ComparisonRadius),
    };

    // H0: the quadratic term of the norm split dominates the t^{5/2} term,
    // the log-scale stays inside the doubling window, and the slab below H0
    // keeps |z| < A and t < f(A).
    let a = constants.a;
    let ln_f_a = profile.eval_logf(a)?;
    let res_h0 = |t: f64| -> f64 {
        let l = -t.ln();
        let r_t = match profile.inv_f(t.ln()) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let r_sqrt_t = match profile.inv_f(0.5 * t.ln()) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let gap = a * (a - r_sqrt_t);
        let dom = if gap <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (2.0f64).ln() + 2.0 * t.ln() + 2.0 * r_t.ln()
                - ((0.25f64).ln() + 2.5 * t.ln() + gap.ln())
        };
        let window = t_big - 1.0 / l;
        let slab = ln_f_a - t.ln();
        dom.min(window).min(slab)
    };
    let h0 = numeric::largest_threshold(T_FLOOR, T_CEIL, res_h0)?.value();

    Ok(Thresholds { h_n_alpha, r_cmp, h0, binding })
}

#[derive(Debug, Clone, Copy)]
pub struct Polydisc {
    pub center_z: Complex64,
    pub center_w: Complex64,
    pub radius_z: f64,
    pub radius_w: f64,
}

impl Polydisc {
    pub fn volume(&self) -> f64 {
        std::f64::consts::PI.powi(2) * self.radius_z.powi(2) * self.radius_w.powi(2)
    }

    pub fn log_volume(&self) -> f64 {
        2.0 * std::f64::consts::PI.ln() + 2.0 * self.radius_z.ln() + 2.0 * self.radius_w.ln()
    }
}

pub const DEFAULT_AUDIT_SAMPLES: usize = 256;

/// The inscribed polydisc D(z; (mu/2) f^{-1}(t)) x D(it; t/4). The
/// distinguished boundary is sampled (seeded, plus the extremal corner) and
/// every sample is asserted interior; an audit failure signals an
/// inconsistency between the thresholds and the profile.
pub fn polydisc_at(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    z: Complex64,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<Polydisc, GeometryError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(GeometryError::Argument(format!("t must be positive, got {t}")));
    }
    let radius_z = 0.5 * constants.mu * profile.inv_f(t.ln())?;
    let radius_w = 0.25 * t;
    let disc = Polydisc {
        center_z: z,
        center_w: Complex64::new(0.0, t),
        radius_z,
        radius_w,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let audit = |theta: f64, phi: f64| -> Result<(), GeometryError> {
        let zb = z + Complex64::from_polar(radius_z, theta);
        let wb = disc.center_w + Complex64::from_polar(radius_w, phi);
        if !in_domain(profile, zb, wb) {
            return Err(GeometryError::ContainmentAudit(format!(
                "boundary sample (|z'| = {:.6e}, Im w' = {:.6e}) escapes the domain at t = {t:.3e}",
                zb.norm(),
                wb.im
            )));
        }
        Ok(())
    };
    // extremal corner: radially outward in z, lowest point of the w-disc
    let out = if z.norm() > 0.0 { z.arg() } else { 0.0 };
    audit(out, -std::f64::consts::FRAC_PI_2)?;
    for _ in 0..samples.max(DEFAULT_AUDIT_SAMPLES) {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        audit(theta, phi)?;
    }
    Ok(disc)
}

/// C1 t^{-2} [f^{-1}(t)]^{-2}: the volume-reciprocal upper envelope.
pub fn upper_bound_env_log(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    t: f64,
) -> Result<f64, GeometryError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(GeometryError::Argument(format!("t must be positive, got {t}")));
    }
    let rinv = profile.inv_f(t.ln())?;
    Ok(constants.c1.ln() - 2.0 * t.ln() - 2.0 * rinv.ln())
}

pub fn upper_bound_env(
    profile: &RadialProfile,
    constants: &DerivedConstants,
    t: f64,
) -> Result<f64, GeometryError> {
    Ok(upper_bound_env_log(profile, constants, t)?.exp())
}

/// The envelope without the constant: E(t) = t^{-2} [f^{-1}(t)]^{-2}.
pub fn envelope_log(profile: &RadialProfile, t: f64) -> Result<f64, GeometryError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(GeometryError::Argument(format!("t must be positive, got {t}")));
    }
    Ok(-2.0 * t.ln() - 2.0 * profile.inv_f(t.ln())?.ln())
}

/// The bounded realization (psi_1, psi_2) = ((2i)^k z/(i+w)^k, (i-w)/(i+w)).
pub fn psi_map(kappa: u32, z: Complex64, w: Complex64) -> Result<(Complex64, Complex64), GeometryError> {
    let i = Complex64::new(0.0, 1.0);
    let den = i + w;
    if den.norm() == 0.0 {
        return Err(GeometryError::Pole);
    }
    let psi2 = (i - w) / den;
    let base = 2.0 * i / den;
    let psi1 = base.powu(kappa) * z;
    Ok((psi1, psi2))
}

/// The closed-form bound on sup |psi_1|^2 over the domain, from the star
/// parameters: max{4^k R^2, (4/C^2)^k R^{-2(eta k - 1)}}.
pub fn psi_bound_sq(star: &StarParams, kappa: u32) -> f64 {
    let k = kappa as f64;
    let first = (4.0f64).powf(k) * star.r * star.r;
    let second = (4.0 / (star.c * star.c)).powf(k) * star.r.powf(-2.0 * (star.eta * k - 1.0));
    first.max(second)
}

/// Log of t + f(r), stable when f(r) underflows.
pub fn log_t_plus_f(profile: &RadialProfile, t: f64, r: f64) -> Result<f64, GeometryError> {
    Ok(log_add_exp(t.ln(), profile.eval_logf(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::witness::{derive_constants, FlatnessWitness};

    fn beta1_setup() -> (RadialProfile, DerivedConstants) {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        let w = FlatnessWitness::default_for(&p, 2.0, 0.4).unwrap();
        let c = derive_constants(&w, &p).unwrap();
        (p, c)
    }

    #[test]
    fn domain_membership_basics() {
        let (p, _) = beta1_setup();
        let i = Complex64::new(0.0, 1.0);
        assert!(in_domain(&p, Complex64::new(0.0, 0.0), i));
        // w real: never interior
        assert!(!in_domain(&p, Complex64::new(0.0, 0.0), Complex64::new(3.0, 0.0)));
        // straddle the boundary Im w = f(0.1) = e^{-10}
        let f01 = (-10.0f64).exp();
        let z = Complex64::new(0.1, 0.0);
        assert!(!in_domain(&p, z, Complex64::new(0.0, f01 * (1.0 - 1e-9))));
        assert!(in_domain(&p, z, Complex64::new(0.0, f01 * (1.0 + 1e-9))));
    }

    #[test]
    fn approach_region_membership() {
        let (p, _) = beta1_setup();
        let r11 = ApproachRegion::new(1.0, 1).unwrap();
        // on-axis points always qualify
        for &t in &[1e-8, 1e-3, 0.5] {
            assert!(in_approach_region(&p, r11, Complex64::new(0.0, 0.0), Complex64::new(0.0, t)));
        }
        // |Re w| = t fails the strict inequality for alpha = 1, N = 1
        for &t in &[1e-6, 1e-2] {
            assert!(!in_approach_region(&p, r11, Complex64::new(0.0, 0.0), Complex64::new(t, t)));
        }
        // boundary case |z| = alpha (Im w)^{1/N} is excluded
        let r12 = ApproachRegion::new(1.0, 2).unwrap();
        assert!(!in_approach_region(
            &p,
            r12,
            Complex64::new(0.01, 0.0),
            Complex64::new(0.0, 1e-4)
        ));
    }

    #[test]
    fn thresholds_match_closed_form_root() {
        // alpha=1, N=1, mu=1/4: the contact residual's root solves
        // t log(1/t) = 1/16; bisect that closed form independently.
        let (p, c) = beta1_setup();
        assert_eq!(c.mu, 0.25);
        let th = compute_thresholds(&p, &c, ApproachRegion::new(1.0, 1).unwrap()).unwrap();
        let (mut a, mut b) = (1e-4f64, 0.5f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m * (1.0 / m).ln() < 1.0 / 16.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let want = 0.5 * (a + b);
        assert!(
            (th.h_n_alpha - want).abs() / want < 1e-6,
            "H = {:.6e}, closed-form root = {want:.6e}",
            th.h_n_alpha
        );
        assert!(th.h_n_alpha < th.r_cmp);
        assert_eq!(th.binding, BindingConstraint::TangentialContact);
        assert!((want - 1.5e-2).abs() < 2e-3);
    }

    #[test]
    fn thresholds_alpha_to_zero_caps_at_r_cmp() {
        let (p, c) = beta1_setup();
        let th = compute_thresholds(&p, &c, ApproachRegion::new(1e-9, 1).unwrap()).unwrap();
        assert_eq!(th.binding, BindingConstraint::ComparisonRadius);
        assert!((th.h_n_alpha - th.r_cmp).abs() / th.r_cmp < 1e-12);
    }

    #[test]
    fn thresholds_shrink_with_tangency_order() {
        let (p, c) = beta1_setup();
        let h1 = compute_thresholds(&p, &c, ApproachRegion::new(1.0, 1).unwrap()).unwrap();
        let h4 = compute_thresholds(&p, &c, ApproachRegion::new(1.0, 4).unwrap()).unwrap();
        assert!(h4.h_n_alpha < h1.h_n_alpha);
    }

    #[test]
    fn r_cmp_cap_value() {
        // r_cmp = min(3/4, e^{-1/(2T)}), here T = 0.2
        let (p, c) = beta1_setup();
        let th = compute_thresholds(&p, &c, ApproachRegion::new(1.0, 1).unwrap()).unwrap();
        let want = (-1.0f64 / (2.0 * 0.2)).exp();
        assert!((th.r_cmp - want).abs() / want < 1e-9, "r_cmp = {:.6e}", th.r_cmp);
    }

    #[test]
    fn compare1_holds_below_r_cmp() {
        let (p, c) = beta1_setup();
        let th = compute_thresholds(&p, &c, ApproachRegion::new(1.0, 2).unwrap()).unwrap();
        for i in 0..200 {
            let t = th.r_cmp * 0.999 * (1e-30f64).powf(i as f64 / 199.0).max(1e-30);
            let lhs = p.inv_f((0.75 * t).ln()).unwrap() / p.inv_f(t.ln()).unwrap();
            assert!(lhs >= c.mu * (1.0 - 1e-12), "t={t:.3e}: ratio {lhs:.6} < mu {}", c.mu);
        }
    }

    #[test]
    fn polydisc_radii_and_audit() {
        let (p, c) = beta1_setup();
        // f^{-1}(e^{-100}) = 1/100, mu/2 = 1/8: radius_z = 1/800
        let t = (-100.0f64).exp();
        let d = polydisc_at(&p, &c, Complex64::new(0.0, 0.0), t, 256, 7).unwrap();
        assert!((d.radius_z - 1.0 / 800.0).abs() < 1e-15);
        assert!((d.radius_w - t / 4.0).abs() < 1e-30);
        assert_eq!(d.center_w, Complex64::new(0.0, t));
    }

    #[test]
    fn containment_inequality_inside_region() {
        // |z| + (mu/2) f^{-1}(t) < f^{-1}(3t/4) for admissible points
        let (p, c) = beta1_setup();
        let region = ApproachRegion::new(1.0, 2).unwrap();
        let th = compute_thresholds(&p, &c, region).unwrap();
        for i in 1..=40 {
            let t = th.h_n_alpha * 0.999 * (1e-4f64).powf(i as f64 / 40.0);
            let z = region.alpha * t.powf(1.0 / region.n as f64) * 0.999;
            let lhs = z + 0.5 * c.mu * p.inv_f(t.ln()).unwrap();
            let rhs = p.inv_f((0.75 * t).ln()).unwrap();
            assert!(lhs < rhs, "t={t:.3e}: {lhs:.6e} !< {rhs:.6e}");
        }
    }

    #[test]
    fn envelope_is_polydisc_volume_reciprocal() {
        let (p, c) = beta1_setup();
        for &t in &[1e-2, 1e-5, (-100.0f64).exp()] {
            let d = polydisc_at(&p, &c, Complex64::new(0.0, 0.0), t, 16, 3).unwrap();
            let lhs = upper_bound_env_log(&p, &c, t).unwrap();
            assert!(
                (lhs + d.log_volume()).abs() < 1e-12,
                "t={t:.3e}: env*vol = {:.3e}",
                (lhs + d.log_volume()).exp()
            );
        }
    }

    #[test]
    fn envelope_closed_form_beta1() {
        // mu = 1/4: C1 e^{20} * 100 at t = e^{-10}
        let (p, c) = beta1_setup();
        let t = (-10.0f64).exp();
        let want = (1024.0 / std::f64::consts::PI.powi(2)).ln() + 20.0 + 100.0f64.ln();
        let got = upper_bound_env_log(&p, &c, t).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn envelope_log_slope_at_most_minus_two() {
        let (p, c) = beta1_setup();
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..60 {
            let t = 1e-8 * (1e6f64).powf(i as f64 / 59.0);
            let v = upper_bound_env_log(&p, &c, t).unwrap();
            if let Some((t0, v0)) = prev {
                let slope = (v - v0) / (t.ln() - t0.ln());
                assert!(slope <= -2.0 + 1e-9, "slope {slope:.6} at t = {t:.3e}");
            }
            prev = Some((t, v));
        }
    }

    #[test]
    fn power_type_envelope_closed_form() {
        // f = r^2: f^{-1}(t) = sqrt(t), envelope = C1 t^{-3}
        let p = RadialProfile::power_type(2).unwrap();
        let w = FlatnessWitness::lambda_f(
            2.0,
            1.0,
            0.4,
            StarParams { eta: 2.0, c: 1.0, r: 1.0 },
        )
        .unwrap();
        let c = derive_constants(&w, &p).unwrap();
        for &t in &[1e-3, 0.1, 2.0] {
            let got = upper_bound_env_log(&p, &c, t).unwrap();
            let want = c.c1.ln() - 3.0 * t.ln();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_map_fixed_points_and_pole() {
        let z0 = Complex64::new(0.0, 0.0);
        let (p1, p2) = psi_map(1, z0, z0).unwrap();
        assert!((p1 - z0).norm() < 1e-15);
        assert!((p2 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let (q1, q2) = psi_map(1, z0, Complex64::new(0.0, 1.0)).unwrap();
        assert!(q1.norm() < 1e-15 && q2.norm() < 1e-15);
        assert!(matches!(
            psi_map(1, z0, Complex64::new(0.0, -1.0)),
            Err(GeometryError::Pole)
        ));
    }

    #[test]
    fn psi_bound_formula() {
        let star = StarParams { eta: 2.0, c: 1.0, r: 1.0 };
        assert!((psi_bound_sq(&star, 1) - 4.0).abs() < 1e-15);
        let star2 = StarParams { eta: 0.5, c: 2.0, r: 3.0 };
        // kappa for eta = 0.5 is 3: max{4^3*9, 1^3 * 3^{-2(1.5-1)}}
        assert!((psi_bound_sq(&star2, 3) - 576.0).abs() < 1e-12);
    }

    #[test]
    fn psi_injective_on_sample_batch() {
        let p = RadialProfile::exp_beta(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for _ in 0..300 {
            let r: f64 = rng.gen_range(0.0..2.0);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let z = Complex64::from_polar(r, th);
            let u: f64 = rng.gen_range(-5.0..5.0);
            let h: f64 = (10.0f64).powf(rng.gen_range(-8.0..2.0));
            let f = p.eval_f(z.norm()).unwrap();
            let w = Complex64::new(u, f + h);
            pts.push(psi_map(1, z, w).unwrap());
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = (pts[i].0 - pts[j].0).norm() + (pts[i].1 - pts[j].1).norm();
                assert!(d > 0.0, "collision between samples {i} and {j}");
            }
        }
    }

    #[test]
    fn psi_image_bounded_small_monte_carlo() {
        // unit-test-sized version of the boundedness audit
        let p = RadialProfile::exp_beta(1.0).unwrap();
        let star = StarParams { eta: 2.0, c: 1.0, r: p.tail_start().unwrap() };
        let bound = psi_bound_sq(&star, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut sup1: f64 = 0.0;
        let mut sup2: f64 = 0.0;
        for _ in 0..2000 {
            let r: f64 = (10.0f64).powf(rng.gen_range(-6.0..1.0));
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let z = Complex64::from_polar(r, th);
            let u: f64 = rng.gen_range(-50.0..50.0);
            let h: f64 = (10.0f64).powf(rng.gen_range(-12.0..2.0));
            let w = Complex64::new(u, p.eval_f(r).unwrap() + h);
            let (p1, p2) = psi_map(1, z, w).unwrap();
            sup1 = sup1.max(p1.norm_sqr());
            sup2 = sup2.max(p2.norm());
        }
        assert!(sup2 <= 1.0 + 1e-12, "sup |psi_2| = {sup2}");
        assert!(sup1 <= bound, "sup |psi_1|^2 = {sup1} > {bound}");
    }
}
