//! Feature models: representation, text format, CNF translation and
//! SAT-based consistency queries.

mod analysis;
mod cnf;
mod model;
mod parse;
mod sat;

pub use analysis::{
    constraint_importance, enumerate_configurations, is_consistent, ConsistencyChecker,
    MAX_ENUMERATION_FEATURES,
};
pub use cnf::{to_cnf, CnfFormula, Lit, Var, VarInfo};
pub use model::{
    Choice, Constraint, ConstraintId, Decision, Expr, FeatureId, FeatureModel, Group, GroupKind,
    Relation,
};
pub use parse::{parse_expr, parse_model};
pub use sat::{feature_projections, solve, Assignment, SatResult};

/// The small phone product line used throughout the docs and tests.
pub const PHONE_MODEL: &str = "model phone
root Phone
mandatory Phone Screen
optional Phone GPS
alt Screen Basic HD
constraint (not (and Basic GPS))
";
