use thiserror::Error;

use crate::fm::{ConstraintId, FeatureId};
use crate::negotiation::SessionPhase;
use crate::preferences::ItemKind;

/// Structural problems with a feature model or an edit to one.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid feature name `{0}`")]
    InvalidName(String),
    #[error("invalid constraint id `{0}`")]
    InvalidConstraintId(String),
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(FeatureId),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` would be its own ancestor")]
    Cycle(FeatureId),
    #[error("feature `{0}` already belongs to a group")]
    FeatureInTwoGroups(FeatureId),
    #[error("group under `{0}` needs at least two members")]
    GroupTooSmall(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("expected `model <name>` as the first directive")]
    MissingModelDirective,
    #[error("missing `root` directive")]
    MissingRoot,
    #[error(transparent)]
    Model(ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown constraint {0}")]
    UnknownConstraint(ConstraintId),
    #[error("unknown variable {0} in assumptions")]
    UnknownVariable(usize),
    #[error("model has {features} features, enumeration supports at most {max}")]
    ModelTooLarge { features: usize, max: usize },
    #[error("the feature model has no valid configuration")]
    ModelInconsistent,
    #[error("interaction data line {line}: {reason}")]
    Interactions { line: usize, reason: String },
    #[error("expected {expected:?} interaction data, got {actual:?}")]
    KindMismatch { expected: ItemKind, actual: ItemKind },
    #[error("unknown member `{0}`")]
    UnknownMember(String),
    #[error("invalid member name `{0}`")]
    InvalidMember(String),
    #[error("invalid rating: {0}")]
    InvalidRating(String),
    #[error("duplicate member `{0}`")]
    DuplicateMember(String),
    #[error("a session needs at least one member")]
    NoMembers,
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("member `{member}` already rated `{item}`")]
    AlreadyRated { member: String, item: String },
    #[error("need interaction data for at least {needed} members, got {got}")]
    MatrixTooSmall { needed: usize, got: usize },
    #[error("decisions are consistent, nothing to diagnose")]
    NothingToDiagnose,
    #[error("`{0}` is not a group decision of this session")]
    NotAGroupDecision(String),
    #[error("no diagnosis report available")]
    NoDiagnosisReport,
    #[error("diagnosis report is stale: the session changed after ranking")]
    StaleDiagnosis,
    #[error("diagnosis index {index} out of range ({len} diagnoses)")]
    InvalidDiagnosisIndex { index: usize, len: usize },
    #[error("no conflict on `{0}`")]
    UnknownConflict(String),
    #[error("conflict on `{0}` is already resolved")]
    ConflictResolved(String),
    #[error("unknown proposal `{0}`")]
    UnknownProposal(String),
    #[error("operation not allowed in phase {0:?}")]
    IllegalPhase(SessionPhase),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse_error",
            Error::Model(ModelError::UnknownFeature(_)) | Error::UnknownFeature(_) => {
                "unknown_feature"
            }
            Error::Model(_) => "invalid_model",
            Error::UnknownConstraint(_) => "unknown_constraint",
            Error::UnknownVariable(_) => "unknown_variable",
            Error::ModelTooLarge { .. } => "model_too_large",
            Error::ModelInconsistent => "model_inconsistent",
            Error::Interactions { .. } => "invalid_interactions",
            Error::KindMismatch { .. } => "kind_mismatch",
            Error::UnknownMember(_) => "unknown_member",
            Error::InvalidMember(_) => "invalid_member",
            Error::InvalidRating(_) => "invalid_rating",
            Error::DuplicateMember(_) => "duplicate_member",
            Error::NoMembers => "no_members",
            Error::UnknownItem(_) => "unknown_item",
            Error::AlreadyRated { .. } => "already_rated",
            Error::MatrixTooSmall { .. } => "matrix_too_small",
            Error::NothingToDiagnose => "nothing_to_diagnose",
            Error::NotAGroupDecision(_) => "not_a_group_decision",
            Error::NoDiagnosisReport => "no_diagnosis_report",
            Error::StaleDiagnosis => "stale_diagnosis",
            Error::InvalidDiagnosisIndex { .. } => "invalid_diagnosis_index",
            Error::UnknownConflict(_) => "unknown_conflict",
            Error::ConflictResolved(_) => "conflict_resolved",
            Error::UnknownProposal(_) => "unknown_proposal",
            Error::IllegalPhase(_) => "illegal_phase",
        }
    }
}
