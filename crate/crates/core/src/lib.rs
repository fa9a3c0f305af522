//! Battery models at three fidelities, degradation accounting and schedule
//! optimization for energy arbitrage and peak shaving.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod degradation;
pub mod ecm;
pub mod erm;
pub mod error;
pub mod grid;
pub mod interp;
pub mod optimizer;
pub mod presets;
pub mod spm;
pub mod trace;

pub use error::{Electrode, Error, Result, Violation, ViolationKind};
