//! Online multiple testing with ADDIS-Graphs.
//!
//! Procedures assign each hypothesis a significance level before its
//! p-value is seen, using only outcomes of earlier hypotheses outside its
//! conflict set. FWER engines satisfy the ADDIS budget condition, the FDR
//! engine its FDR counterpart, and the correlation engine the joint-tail
//! condition; [`ledger`] checks each on realized trajectories.

pub mod alpha_c;
pub mod conflicts;
pub mod engine;
pub mod error;
pub mod gamma;
pub mod indicators;
pub mod ledger;
pub mod numeric;
pub mod oracles;
pub mod par;
pub mod replay;
pub mod schedule;
pub mod sim;
pub mod stream;

pub use conflicts::{validate_conflicts, ConflictStructure};
pub use engine::{Engine, EngineConfig, Observation, Procedure, Registration};
pub use error::{Error, Result};
pub use gamma::{gamma_value, GammaSpec};
pub use indicators::{compute_indicators, HypothesisRecord, Indicators};
pub use ledger::{
    check_corr_condition, check_fdr_condition, check_fwer_condition, ConditionReport, LedgerEntry,
    TrajectoryLedger,
};
pub use schedule::WeightRule;
