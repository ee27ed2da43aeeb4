//! Multiple testing with e-values.
//!
//! Threshold procedures (BH, Storey, BC, flexible BC) are expressed through a
//! single feasibility search and converted to e-values, which can then be
//! weighted and merged across groups, across procedures, or across knockoff
//! statistics before a final e-BH selection.

pub mod error;
pub mod groups;
pub mod hybrid;
pub mod knockoff;
pub mod lfdr;
pub mod procedures;
pub mod sim;
pub mod structure;
pub mod types;

mod mirror;

pub use error::{Error, Result};
pub use procedures::{
    ebh_select, fdp_power, procedure_to_evalues, solve_threshold, storey_pi0, FnRule,
    ProcedureKind, ProcedureSpec, RejectionRule, SharedRule, ThresholdResult,
};
pub use types::{EValueSet, PValueSet, RejectionSet, WeightVector};
