//! Numerical laboratory for radial blow-up solutions of
//!
//! ```text
//! Δp u = v^m |∇u|^alpha,   Δp v = v^beta |∇u|^q
//! ```
//!
//! - [`paramlab`]: parameter domain, exponents, constants, regimes.
//! - [`radial`]: the singular radial initial value problem and the
//!   blow-up radius map.
//! - [`dynsys`]: the log-time flow, its equilibria and spectra.
//! - [`verify`]: rate fits and convergence of the boundary-layer profile.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynsys;
pub mod error;
pub mod interp;
pub mod ode;
pub mod par;
pub mod paramlab;
pub mod radial;
pub mod verify;

pub use error::{Error, Result};
pub use paramlab::{
    classify_regime, compute_constants, derive_exponents, log_constants, validate_params,
    AsymptoticConstants, DerivedExponents, LogConstants, ParamSet, Preset, Regime, RegimeTag,
};
