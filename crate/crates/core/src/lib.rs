//! Desk-scale simulator for a multi-user entanglement-distribution network:
//! a broadband photon-pair source sliced into ITU grid channels, an actively
//! routed optical switch fabric, gated single-photon detection, and
//! polarization state tomography.

// Negated float comparisons like `!(x > 0.0)` are used on purpose in the
// validators: they reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod phase_lock;
pub mod quantum;
pub mod scenario;
pub mod source;
pub mod switch;
pub mod tomography;
pub mod wdm;

pub use error::{Error, Result};
