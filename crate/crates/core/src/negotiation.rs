//! Session lifecycle: phase machine, win-win proposals, negotiation
//! patterns and reconfiguration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fm::{parse_expr, Choice, ConstraintId, FeatureId, GroupKind, Relation};
use crate::grouprec::aggregate_preferences;
use crate::error::ParseErrorKind;
use crate::preferences::{ConflictOrigin, ConflictRecord, ConflictStatus, MemberId, Pref, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Elicitation,
    Prediction,
    Aggregation,
    Negotiation,
    #[serde(rename = "diagnosis")]
    DiagnosisPhase,
    Complete,
}

impl SessionPhase {
    /// Whether `from -> to` is an allowed transition. Staying in the same
    /// phase is not a transition.
    pub fn can_transition(from: SessionPhase, to: SessionPhase) -> bool {
        use SessionPhase::*;
        matches!(
            (from, to),
            (Elicitation, Prediction)
                | (Prediction, Aggregation)
                | (Aggregation, Negotiation | DiagnosisPhase | Complete)
                | (Negotiation, Aggregation)
                | (DiagnosisPhase, Aggregation)
                | (_, Aggregation)
        ) && from != to
    }

    pub(crate) fn is_past_aggregation(self) -> bool {
        matches!(
            self,
            SessionPhase::Negotiation | SessionPhase::DiagnosisPhase | SessionPhase::Complete
        )
    }
}

/// A resolution offer for one conflicted feature. It takes effect only
/// once every member has accepted it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub feature: FeatureId,
    pub value: Choice,
    pub proposer: MemberId,
    pub rationale: String,
    pub acceptances: BTreeSet<MemberId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    SuggestAlternative,
    CiteConstraint,
    SplitDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiationPattern {
    pub kind: PatternKind,
    pub feature: FeatureId,
    pub alternative: Option<FeatureId>,
    pub text: String,
    pub evidence: Vec<ConstraintId>,
}

/// Open conflicts, ordered by feature name.
pub fn detect_conflicts(session: &Session) -> Vec<ConflictRecord> {
    let mut open: Vec<ConflictRecord> =
        session.conflicts().iter().filter(|c| c.is_open()).cloned().collect();
    open.sort_by(|a, b| a.feature.cmp(&b.feature));
    open
}

fn open_conflict<'s>(session: &'s Session, feature: &str) -> Result<&'s ConflictRecord, Error> {
    let conflict =
        session.conflict(feature).ok_or_else(|| Error::UnknownConflict(feature.to_string()))?;
    if !conflict.is_open() {
        return Err(Error::ConflictResolved(feature.to_string()));
    }
    Ok(conflict)
}

fn suggest(feature: &FeatureId, alternative: &FeatureId, evidence_text: &str, evidence: Vec<ConstraintId>) -> NegotiationPattern {
    NegotiationPattern {
        kind: PatternKind::SuggestAlternative,
        feature: feature.clone(),
        alternative: Some(alternative.clone()),
        text: format!(
            "We shouldn't include the feature {feature} since it conflicts with {evidence_text}; \
             the feature {alternative} could be an alternative"
        ),
        evidence,
    }
}

/// Discussion aids for an open conflict on `feature`.
///
/// Alternatives are found syntactically: siblings in the feature's group,
/// and features `g` with a constraint written as `(not (and feature g))`.
/// Output order: alternatives by name, constraint citations by id, then the
/// split-decision fallback.
pub fn generate_patterns(session: &Session, feature: &str) -> Result<Vec<NegotiationPattern>, Error> {
    let conflict = open_conflict(session, feature)?;
    let model = session.model();
    let f = &conflict.feature;

    // (alternative, from_group, constraint id) sorts group evidence first.
    let mut alternatives: Vec<(FeatureId, Option<ConstraintId>, NegotiationPattern)> = Vec::new();
    if let Some(group) = model.group_of(f.as_str()) {
        let kind = match group.kind {
            GroupKind::Alternative => "alternative",
            GroupKind::Or => "or",
        };
        let text = format!("the {kind} group of {}", group.parent);
        for g in group.members.iter().filter(|g| *g != f) {
            alternatives.push((g.clone(), None, suggest(f, g, &text, Vec::new())));
        }
    }
    for c in model.constraints() {
        let Some((a, b)) = c.expr.as_excludes() else { continue };
        let other = if a == f { b } else if b == f { a } else { continue };
        if other == f {
            continue;
        }
        let text = format!("constraint {} {}", c.id, c.expr);
        alternatives.push((other.clone(), Some(c.id), suggest(f, other, &text, vec![c.id])));
    }
    alternatives.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));

    let mut patterns: Vec<NegotiationPattern> = alternatives.into_iter().map(|(_, _, p)| p).collect();
    for c in model.constraints().iter().filter(|c| c.expr.mentions(f.as_str())) {
        patterns.push(NegotiationPattern {
            kind: PatternKind::CiteConstraint,
            feature: f.clone(),
            alternative: None,
            text: format!("Constraint {} involves {f}: {}", c.id, c.expr),
            evidence: vec![c.id],
        });
    }
    patterns.push(NegotiationPattern {
        kind: PatternKind::SplitDecision,
        feature: f.clone(),
        alternative: None,
        text: format!("defer {f}: mark Unstated and revisit after other decisions"),
        evidence: Vec::new(),
    });
    Ok(patterns)
}

/// A change applied by [`Session::reconfigure`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Change {
    SetPreference { member: String, feature: String, value: Pref },
    AddFeature { name: String, parent: String, relation: Relation },
    AddConstraint { expr: String },
}

impl Session {
    /// Re-aggregates preferences. Features reopened by an applied diagnosis
    /// stay held out until someone restates or a proposal resolves them.
    pub(crate) fn run_aggregation(&mut self) {
        let (mut decisions, mut conflicts) = aggregate_preferences(self, self.settings.strategy);
        for held in self
            .conflicts
            .iter()
            .filter(|c| c.is_open() && c.origin == ConflictOrigin::Retracted)
        {
            decisions.remove(&held.feature);
            conflicts.retain(|c| c.feature != held.feature);
            conflicts.push(held.clone());
        }
        conflicts.sort_by(|a, b| a.feature.cmp(&b.feature));
        self.group_decisions = decisions;
        self.conflicts = conflicts;
        let open: BTreeSet<FeatureId> =
            self.conflicts.iter().filter(|c| c.is_open()).map(|c| c.feature.clone()).collect();
        self.proposals.retain(|p| open.contains(&p.feature));
    }

    /// Moves to `phase`; staying put is allowed.
    pub(crate) fn enter(&mut self, phase: SessionPhase) {
        debug_assert!(
            self.phase == phase || SessionPhase::can_transition(self.phase, phase),
            "illegal transition {:?} -> {:?}",
            self.phase,
            phase
        );
        self.phase = phase;
    }

    fn has_open_conflicts(&self) -> bool {
        self.conflicts.iter().any(ConflictRecord::is_open)
    }

    fn decisions_consistent(&self) -> Result<bool, Error> {
        crate::fm::is_consistent(&self.model, &self.decision_list())
    }

    /// Aggregation followed by routing: conflicts go to negotiation first,
    /// then inconsistencies to diagnosis.
    fn aggregate_and_route(&mut self) -> Result<(), Error> {
        self.run_aggregation();
        if self.has_open_conflicts() {
            self.enter(SessionPhase::Negotiation);
        } else if !self.decisions_consistent()? {
            self.enter(SessionPhase::DiagnosisPhase);
            self.diagnose()?;
        } else {
            self.enter(SessionPhase::Complete);
        }
        Ok(())
    }

    /// Advances the session by one phase transition where one is possible.
    pub fn step(&mut self) -> Result<(), Error> {
        let before = self.clone();
        match self.phase {
            SessionPhase::Elicitation => self.enter(SessionPhase::Prediction),
            SessionPhase::Prediction => {
                self.predict_preferences()?;
                self.enter(SessionPhase::Aggregation);
            }
            SessionPhase::Aggregation => {
                if let Err(e) = self.aggregate_and_route() {
                    *self = before;
                    return Err(e);
                }
            }
            SessionPhase::Negotiation => {
                if !self.has_open_conflicts() {
                    self.enter(SessionPhase::Aggregation);
                }
            }
            SessionPhase::DiagnosisPhase => {
                if self.decisions_consistent()? {
                    self.enter(SessionPhase::Aggregation);
                }
            }
            SessionPhase::Complete => {}
        }
        if *self != before && self.revision == before.revision {
            self.touch();
        }
        Ok(())
    }

    pub fn propose(
        &mut self,
        feature: &str,
        proposer: &str,
        value: Choice,
        rationale: impl Into<String>,
    ) -> Result<String, Error> {
        let proposer = self.member(proposer)?.clone();
        let feature = open_conflict(self, feature)?.feature.clone();
        let id = format!("p{}", self.next_proposal);
        self.next_proposal += 1;
        self.proposals.push(Proposal {
            id: id.clone(),
            feature,
            value,
            proposer,
            rationale: rationale.into(),
            acceptances: BTreeSet::new(),
        });
        self.touch();
        Ok(id)
    }

    /// Records `member`'s consent. With every member on board the conflict
    /// is resolved and the agreed value becomes everyone's stated
    /// preference.
    pub fn accept(&mut self, proposal_id: &str, member: &str) -> Result<(), Error> {
        let member = self.member(member)?.clone();
        let idx = self
            .proposals
            .iter()
            .position(|p| p.id == proposal_id)
            .ok_or_else(|| Error::UnknownProposal(proposal_id.to_string()))?;
        let feature = self.proposals[idx].feature.clone();
        if self.proposals[idx].acceptances.contains(&member) {
            return Ok(());
        }
        open_conflict(self, feature.as_str())?;

        self.proposals[idx].acceptances.insert(member);
        let proposal = &self.proposals[idx];
        if proposal.acceptances.len() == self.members.len() {
            let value = proposal.value;
            let id = proposal.id.clone();
            for m in self.members.clone() {
                self.write_stated(&m, feature.clone(), Pref::from(value));
            }
            if let Some(c) = self.conflicts.iter_mut().find(|c| c.feature == feature) {
                c.status = ConflictStatus::Resolved(value);
            }
            self.proposals.retain(|p| p.feature != feature || p.id == id);
            if self.phase == SessionPhase::Negotiation && !self.has_open_conflicts() {
                self.enter(SessionPhase::Aggregation);
            }
        }
        self.touch();
        Ok(())
    }

    /// Applies preference edits and model extensions in one step.
    ///
    /// Nothing changes if any edit is invalid. Afterwards the session is
    /// re-aggregated; if the decisions no longer fit the model (and no
    /// member conflicts are pending) a fresh diagnosis report is attached.
    pub fn reconfigure(&mut self, changes: &[Change]) -> Result<(), Error> {
        let mut next = self.clone();
        for change in changes {
            match change {
                Change::SetPreference { member, feature, value } => {
                    let member = next.member(member)?.clone();
                    let feature = next.feature(feature)?;
                    next.invalidate_feature(feature.as_str());
                    next.write_stated(&member, feature, *value);
                }
                Change::AddFeature { name, parent, relation } => {
                    next.model.add_child(parent, FeatureId::new(name.as_str())?, *relation)?;
                }
                Change::AddConstraint { expr } => {
                    let expr = parse_expr(expr).map_err(|kind| match kind {
                        ParseErrorKind::Model(e) => Error::Model(e),
                        kind => Error::Parse(crate::error::ParseError { line: 1, kind }),
                    })?;
                    next.model.add_constraint(expr)?;
                }
            }
        }
        if !crate::fm::is_consistent(&next.model, &[])? {
            return Err(Error::ModelInconsistent);
        }
        next.predict_preferences()?;
        next.diagnoses = None;
        next.enter(SessionPhase::Aggregation);
        next.run_aggregation();
        if !next.has_open_conflicts() && !next.decisions_consistent()? {
            next.enter(SessionPhase::DiagnosisPhase);
            next.diagnose()?;
        } else {
            next.touch();
        }
        *self = next;
        Ok(())
    }
}
