//! Numerical toolkit for diagonal Bergman kernels of flat model domains
//! {(z, w) : Im w > f(|z|)} in C^2, with two-sided growth-envelope
//! verification machinery built around a quadrature oracle.

pub mod geometry;
pub mod numeric;
pub mod oracle;
pub mod quad;
pub mod profile;
pub mod real;

pub use profile::witness::{
    check_conditions, check_doubling, check_ratio_fact, derive_constants, suggest_p, ChiSpec,
    ConditionCheck, ConditionReport, DerivedConstants, DoublingReport, FlatnessWitness, GridSpec,
    RatioFactReport, StarParams,
};
pub use profile::{ProfileError, ProfileKind, RadialProfile};
pub use real::{HighReal, Precision, Real};
