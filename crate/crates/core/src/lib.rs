//! Group configuration of feature models.
//!
//! A group of stakeholders configures a product line together: members
//! state (or have predicted) include/exclude preferences, the engine merges
//! them without overruling anyone, escalates disagreements to a negotiation
//! phase and repairs inconsistencies with ranked minimal diagnoses.
//!
//! * [`fm`]: feature models, their text format, CNF and SAT checks.
//! * [`preferences`]: preference state, interaction data and [`Session`].
//! * [`grouprec`]: collaborative filtering, aggregation, next-constraint
//!   recommendation.
//! * [`diagnosis`]: QuickXPlain, hitting-set diagnosis, ranking.
//! * [`negotiation`]: the session phase machine, proposals, patterns and
//!   reconfiguration.

pub mod diagnosis;
pub mod error;
pub mod fm;
pub mod grouprec;
pub mod negotiation;
pub mod preferences;

pub use diagnosis::{
    enumerate_diagnoses, quickxplain, rank_diagnoses, ConflictSet, Diagnosis, DiagnosisReport,
    RankedReport,
};
pub use error::{Error, ModelError, ParseError, ParseErrorKind};
pub use fm::{
    constraint_importance, enumerate_configurations, is_consistent, parse_model, to_cnf, Choice,
    ConstraintId, Decision, FeatureId, FeatureModel,
};
pub use grouprec::{
    aggregate_preferences, predict_constraint_order, predict_feature_preference, predict_rating,
    recommend_next_constraint, similarity, AggregationStrategy, NextConstraintRecommendation,
    TieBreak,
};
pub use negotiation::{
    detect_conflicts, generate_patterns, Change, NegotiationPattern, PatternKind, Proposal,
    SessionPhase,
};
pub use preferences::{
    load_interactions, ConflictRecord, ConflictStatus, InteractionMatrix, ItemKind, MemberId,
    Position, Pref, Provenance, Session, SessionSettings,
};
