//! Consistency queries and configuration enumeration.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::fm::cnf::{to_cnf, CnfFormula, Lit, Var};
use crate::fm::model::{ConstraintId, Decision, FeatureId, FeatureModel};
use crate::fm::sat::{solve, SatResult};

/// Largest model `enumerate_configurations` accepts.
pub const MAX_ENUMERATION_FEATURES: usize = 24;

/// A model together with its CNF, for repeated consistency checks.
#[derive(Debug, Clone)]
pub struct ConsistencyChecker<'m> {
    model: &'m FeatureModel,
    cnf: CnfFormula,
}

impl<'m> ConsistencyChecker<'m> {
    pub fn new(model: &'m FeatureModel) -> Self {
        ConsistencyChecker { model, cnf: to_cnf(model) }
    }

    pub fn model(&self) -> &'m FeatureModel {
        self.model
    }

    pub fn cnf(&self) -> &CnfFormula {
        &self.cnf
    }

    pub fn literal(&self, decision: &Decision) -> Result<Lit, Error> {
        let pos = self
            .model
            .position(decision.feature.as_str())
            .ok_or_else(|| Error::UnknownFeature(decision.feature.to_string()))?;
        Ok(Lit::new(Var(pos), decision.value.as_bool()))
    }

    pub fn is_consistent<'d>(
        &self,
        decisions: impl IntoIterator<Item = &'d Decision>,
    ) -> Result<bool, Error> {
        let lits = decisions
            .into_iter()
            .map(|d| self.literal(d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(solve(&self.cnf, &lits)?.is_sat())
    }

    /// A full configuration extending `decisions`, if one exists.
    pub fn complete<'d>(
        &self,
        decisions: impl IntoIterator<Item = &'d Decision>,
    ) -> Result<Option<BTreeSet<FeatureId>>, Error> {
        let lits = decisions
            .into_iter()
            .map(|d| self.literal(d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match solve(&self.cnf, &lits)? {
            SatResult::Sat(a) => Some(
                self.model
                    .features()
                    .enumerate()
                    .filter(|(i, _)| a.value(Var(*i)))
                    .map(|(_, f)| f.clone())
                    .collect(),
            ),
            SatResult::Unsat => None,
        })
    }
}

pub fn is_consistent<'d>(
    model: &FeatureModel,
    decisions: impl IntoIterator<Item = &'d Decision>,
) -> Result<bool, Error> {
    ConsistencyChecker::new(model).is_consistent(decisions)
}

/// Every valid configuration, by brute force over the model semantics
/// (not through the CNF). Sorted by size, then lexicographically by sorted
/// feature names; truncated to `limit`.
pub fn enumerate_configurations(
    model: &FeatureModel,
    limit: usize,
) -> Result<Vec<BTreeSet<FeatureId>>, Error> {
    let n = model.feature_count();
    if n > MAX_ENUMERATION_FEATURES {
        return Err(Error::ModelTooLarge { features: n, max: MAX_ENUMERATION_FEATURES });
    }
    let features: Vec<&FeatureId> = model.features().collect();
    let mut found: Vec<BTreeSet<FeatureId>> = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let selected: BTreeSet<&str> =
            (0..n).filter(|i| mask & (1 << i) != 0).map(|i| features[i].as_str()).collect();
        if model.satisfied_by(&selected) {
            found.push(selected.iter().map(|s| FeatureId::new(*s).expect("valid name")).collect());
        }
    }
    found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter())));
    found.truncate(limit);
    Ok(found)
}

/// Number of distinct features a constraint mentions.
pub fn constraint_importance(model: &FeatureModel, id: ConstraintId) -> Result<usize, Error> {
    model
        .constraint(id)
        .map(|c| c.expr.atoms().len())
        .ok_or(Error::UnknownConstraint(id))
}
