//! Variant-specific (sieve) vaccine effect estimation from two-arm trial
//! data: identification functionals with assumption ledgers, confidence
//! intervals, falsification and null-hypothesis tests, partial-identification
//! bounds, and a simulation engine with analytic oracles for validating the
//! whole stack.

pub mod bounds;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimands;
pub mod hypothesis;
mod parallel;
pub mod special;
pub mod survival;
pub mod uncertainty;

pub use data::{
    Arm, AssumptionChecks, CountTable, EventRecord, EventType, Exposure, MarkDichotomizationConfig,
    Outcome, SubjectRecord, ValidationReport, Variant,
};
pub use error::{Error, Result};
pub use estimands::{
    Assumption, CcsMode, CiMethod, EetRoute, EstimandOptions, EstimandTag, RatioEstimate,
    RiskRatioInterpretation, StratumSelector, ZeroCellPolicy,
};
