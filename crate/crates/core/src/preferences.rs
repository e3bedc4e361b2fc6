//! Stakeholder preferences, historical interaction data and the session
//! state shared by the recommendation, diagnosis and negotiation layers.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnosis::RankedReport;
use crate::error::Error;
use crate::fm::{Choice, ConstraintId, Decision, FeatureId, FeatureModel};
use crate::grouprec::AggregationStrategy;
use crate::negotiation::{Proposal, SessionPhase};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MemberId(String);

impl MemberId {
    pub fn new(name: impl Into<String>) -> Result<Self, Error> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidMember(name));
        }
        Ok(MemberId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for MemberId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        MemberId::new(value)
    }
}

impl From<MemberId> for String {
    fn from(value: MemberId) -> Self {
        value.0
    }
}

impl Borrow<str> for MemberId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A stated preference. `Unstated` clears an earlier statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pref {
    Include,
    Exclude,
    Unstated,
}

impl Pref {
    pub fn choice(self) -> Option<Choice> {
        match self {
            Pref::Include => Some(Choice::Include),
            Pref::Exclude => Some(Choice::Exclude),
            Pref::Unstated => None,
        }
    }
}

impl From<Choice> for Pref {
    fn from(c: Choice) -> Self {
        match c {
            Choice::Include => Pref::Include,
            Choice::Exclude => Pref::Exclude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Stated,
    Predicted,
}

/// A member's effective position on one feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub value: Choice,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    /// Constraint visit ranks, lower is earlier.
    ConstraintOrder,
    /// Feature inclusion decisions, 0 or 1.
    FeatureChoice,
}

impl FromStr for ItemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "order" | "constraint_order" => Ok(ItemKind::ConstraintOrder),
            "choice" | "feature_choice" => Ok(ItemKind::FeatureChoice),
            other => Err(format!("unknown interaction kind `{other}` (expected order or choice)")),
        }
    }
}

/// Sparse member × item rating table.
///
/// Ratings are kept in name order, so every computation over a matrix is
/// independent of the order in which members and items were declared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    kind: ItemKind,
    members: Vec<MemberId>,
    items: Vec<String>,
    ratings: BTreeMap<MemberId, BTreeMap<String, f64>>,
}

impl InteractionMatrix {
    pub fn new(kind: ItemKind) -> Self {
        InteractionMatrix { kind, members: Vec::new(), items: Vec::new(), ratings: BTreeMap::new() }
    }

    pub fn kind(&self) -> ItemKind {
        self.kind
    }

    pub fn members(&self) -> &[MemberId] {
        &self.members
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn has_member(&self, member: &str) -> bool {
        self.members.iter().any(|m| m.as_str() == member)
    }

    pub fn has_item(&self, item: &str) -> bool {
        self.items.iter().any(|i| i == item)
    }

    pub fn rating(&self, member: &str, item: &str) -> Option<f64> {
        self.ratings.get(member)?.get(item).copied()
    }

    /// A member's ratings keyed by item, in item-name order.
    pub fn ratings_of(&self, member: &str) -> Option<&BTreeMap<String, f64>> {
        self.ratings.get(member)
    }

    pub fn rating_count(&self) -> usize {
        self.ratings.values().map(BTreeMap::len).sum()
    }

    /// All rated cells in (member, item) name order.
    pub fn cells(&self) -> impl Iterator<Item = (&MemberId, &str, f64)> {
        self.ratings
            .iter()
            .flat_map(|(m, row)| row.iter().map(move |(i, &r)| (m, i.as_str(), r)))
    }

    pub fn mean(&self, member: &str) -> Option<f64> {
        let row = self.ratings.get(member)?;
        if row.is_empty() {
            return None;
        }
        Some(row.values().sum::<f64>() / row.len() as f64)
    }

    pub fn add_member(&mut self, member: MemberId) {
        if !self.has_member(member.as_str()) {
            self.ratings.entry(member.clone()).or_default();
            self.members.push(member);
        }
    }

    pub fn add_item(&mut self, item: &str) {
        if !self.has_item(item) {
            self.items.push(item.to_string());
        }
    }

    fn check(&self, member: &str, item: &str, value: f64) -> Result<(), String> {
        if self.rating(member, item).is_some() {
            return Err(format!("duplicate rating for ({member}, {item})"));
        }
        match self.kind {
            ItemKind::ConstraintOrder => {
                if value < 1.0 || value.fract() != 0.0 || !value.is_finite() {
                    return Err(format!("rank {value} is not a positive integer"));
                }
                let row = self.ratings.get(member);
                if row.is_some_and(|r| r.values().any(|&v| v == value)) {
                    return Err(format!("rank {value} used twice by {member}"));
                }
            }
            ItemKind::FeatureChoice => {
                if value != 0.0 && value != 1.0 {
                    return Err(format!("choice {value} is not 0 or 1"));
                }
            }
        }
        Ok(())
    }

    pub fn rate(&mut self, member: &MemberId, item: &str, value: f64) -> Result<(), Error> {
        self.check(member.as_str(), item, value).map_err(Error::InvalidRating)?;
        self.insert_unchecked(member, item, value);
        Ok(())
    }

    fn insert_unchecked(&mut self, member: &MemberId, item: &str, value: f64) {
        self.add_member(member.clone());
        self.add_item(item);
        self.ratings.entry(member.clone()).or_default().insert(item.to_string(), value);
    }

    /// Copy with one cell removed; members and items stay declared.
    pub fn without(&self, member: &str, item: &str) -> Self {
        let mut copy = self.clone();
        if let Some(row) = copy.ratings.get_mut(member) {
            row.remove(item);
        }
        copy
    }

    /// Copy where `member`'s row is exactly `row` (added if absent).
    pub fn with_row(&self, member: &MemberId, row: &[(String, f64)]) -> Self {
        let mut copy = self.clone();
        copy.add_member(member.clone());
        let entry = copy.ratings.entry(member.clone()).or_default();
        entry.clear();
        for (item, value) in row {
            entry.insert(item.clone(), *value);
        }
        for (item, _) in row {
            copy.add_item(item);
        }
        copy
    }
}

/// Parses `member,item,rating` CSV.
pub fn load_interactions(text: &str, kind: ItemKind) -> Result<InteractionMatrix, Error> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Interactions { line: 1, reason: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["member", "item", "rating"] {
        return Err(Error::Interactions {
            line: 1,
            reason: "expected header `member,item,rating`".to_string(),
        });
    }
    let mut matrix = InteractionMatrix::new(kind);
    for record in reader.records() {
        let record = record.map_err(|e| Error::Interactions {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: "malformed row".to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::Interactions { line, reason };
        let [member, item, rating] = [&record[0], &record[1], &record[2]];
        let member = MemberId::new(member).map_err(|_| bad(format!("invalid member `{member}`")))?;
        if item.is_empty() {
            return Err(bad("empty item".to_string()));
        }
        let value = match kind {
            ItemKind::ConstraintOrder => rating
                .parse::<u32>()
                .map(f64::from)
                .map_err(|_| bad(format!("rank `{rating}` is not a decimal integer")))?,
            ItemKind::FeatureChoice => match rating {
                "0" => 0.0,
                "1" => 1.0,
                other => return Err(bad(format!("choice `{other}` is not 0 or 1"))),
            },
        };
        matrix.check(member.as_str(), item, value).map_err(bad)?;
        matrix.insert_unchecked(&member, item, value);
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictStatus {
    Open,
    Resolved(Choice),
}

/// Why a feature is held out of the group decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictOrigin {
    /// Members hold different positions.
    Disagreement,
    /// The group decision was retracted by an applied diagnosis.
    Retracted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub feature: FeatureId,
    pub positions: BTreeMap<MemberId, Choice>,
    pub provenance: BTreeMap<MemberId, Provenance>,
    pub status: ConflictStatus,
    pub origin: ConflictOrigin,
}

impl ConflictRecord {
    pub fn is_open(&self) -> bool {
        self.status == ConflictStatus::Open
    }
}

/// Tunables of a session's pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    /// Predicted probabilities at or above this count as Include.
    pub threshold: f64,
    /// Neighborhood size for collaborative filtering.
    pub k: usize,
    pub strategy: AggregationStrategy,
    pub max_diagnoses: usize,
    pub max_card: usize,
}

impl Default for SessionSettings {
    fn default() -> Self {
        SessionSettings {
            threshold: 0.5,
            k: 3,
            strategy: AggregationStrategy::UnanimityMerge,
            max_diagnoses: crate::diagnosis::DEFAULT_MAX_DIAGNOSES,
            max_card: crate::diagnosis::DEFAULT_MAX_CARD,
        }
    }
}

/// State of one group configuration session.
///
/// Mutations go through methods on this type (here and in the grouprec,
/// diagnosis and negotiation modules); each successful one bumps
/// `revision`, which is how diagnosis reports detect staleness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub(crate) id: String,
    pub(crate) model_id: String,
    pub(crate) model: FeatureModel,
    pub(crate) members: Vec<MemberId>,
    pub(crate) stated: BTreeMap<MemberId, BTreeMap<FeatureId, Choice>>,
    pub(crate) predicted: BTreeMap<MemberId, BTreeMap<FeatureId, f64>>,
    pub(crate) visited: BTreeMap<MemberId, Vec<ConstraintId>>,
    pub(crate) group_decisions: BTreeMap<FeatureId, Choice>,
    pub(crate) conflicts: Vec<ConflictRecord>,
    pub(crate) proposals: Vec<Proposal>,
    pub(crate) next_proposal: u64,
    pub(crate) diagnoses: Option<RankedReport>,
    pub(crate) phase: SessionPhase,
    pub(crate) revision: u64,
    pub(crate) settings: SessionSettings,
    pub(crate) order_data: Option<InteractionMatrix>,
    pub(crate) choice_data: Option<InteractionMatrix>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        model_id: impl Into<String>,
        model: FeatureModel,
        members: Vec<MemberId>,
    ) -> Result<Self, Error> {
        if members.is_empty() {
            return Err(Error::NoMembers);
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if !seen.insert(m) {
                return Err(Error::DuplicateMember(m.to_string()));
            }
        }
        Ok(Session {
            id: id.into(),
            model_id: model_id.into(),
            model,
            stated: members.iter().map(|m| (m.clone(), BTreeMap::new())).collect(),
            predicted: members.iter().map(|m| (m.clone(), BTreeMap::new())).collect(),
            visited: members.iter().map(|m| (m.clone(), Vec::new())).collect(),
            members,
            group_decisions: BTreeMap::new(),
            conflicts: Vec::new(),
            proposals: Vec::new(),
            next_proposal: 1,
            diagnoses: None,
            phase: SessionPhase::Elicitation,
            revision: 0,
            settings: SessionSettings::default(),
            order_data: None,
            choice_data: None,
        })
    }

    pub fn with_settings(mut self, settings: SessionSettings) -> Self {
        self.settings = settings;
        self
    }

    /// Attaches historical interaction data used for predictions.
    pub fn with_interactions(mut self, matrix: InteractionMatrix) -> Self {
        match matrix.kind() {
            ItemKind::ConstraintOrder => self.order_data = Some(matrix),
            ItemKind::FeatureChoice => self.choice_data = Some(matrix),
        }
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn model(&self) -> &FeatureModel {
        &self.model
    }

    pub fn members(&self) -> &[MemberId] {
        &self.members
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn order_data(&self) -> Option<&InteractionMatrix> {
        self.order_data.as_ref()
    }

    pub fn choice_data(&self) -> Option<&InteractionMatrix> {
        self.choice_data.as_ref()
    }

    pub fn group_decisions(&self) -> &BTreeMap<FeatureId, Choice> {
        &self.group_decisions
    }

    pub fn decision_list(&self) -> Vec<Decision> {
        self.group_decisions.iter().map(|(f, &v)| Decision::new(f.clone(), v)).collect()
    }

    pub fn conflicts(&self) -> &[ConflictRecord] {
        &self.conflicts
    }

    pub fn conflict(&self, feature: &str) -> Option<&ConflictRecord> {
        self.conflicts.iter().find(|c| c.feature.as_str() == feature)
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn diagnosis_report(&self) -> Option<&RankedReport> {
        self.diagnoses.as_ref()
    }

    pub fn visited(&self, member: &str) -> Option<&[ConstraintId]> {
        self.visited.get(member).map(Vec::as_slice)
    }

    pub fn stated(&self, member: &str, feature: &str) -> Option<Choice> {
        self.stated.get(member)?.get(feature).copied()
    }

    pub fn predicted(&self, member: &str, feature: &str) -> Option<f64> {
        self.predicted.get(member)?.get(feature).copied()
    }

    pub(crate) fn member(&self, name: &str) -> Result<&MemberId, Error> {
        self.members
            .iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| Error::UnknownMember(name.to_string()))
    }

    pub(crate) fn feature(&self, name: &str) -> Result<FeatureId, Error> {
        self.model.feature(name).cloned().ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub(crate) fn touch(&mut self) {
        self.revision += 1;
    }

    /// Drops everything derived from `feature`: its group decision, its
    /// conflict record and proposals on it.
    pub(crate) fn invalidate_feature(&mut self, feature: &str) {
        self.group_decisions.remove(feature);
        self.conflicts.retain(|c| c.feature.as_str() != feature);
        self.proposals.retain(|p| p.feature.as_str() != feature);
    }

    pub(crate) fn write_stated(&mut self, member: &MemberId, feature: FeatureId, pref: Pref) {
        let row = self.stated.entry(member.clone()).or_default();
        match pref.choice() {
            Some(c) => {
                row.insert(feature, c);
            }
            None => {
                row.remove(&feature);
            }
        }
    }

    pub fn set_preference(&mut self, member: &str, feature: &str, pref: Pref) -> Result<(), Error> {
        if self.phase == SessionPhase::DiagnosisPhase {
            return Err(Error::IllegalPhase(self.phase));
        }
        let member = self.member(member)?.clone();
        let feature = self.feature(feature)?;
        self.invalidate_feature(feature.as_str());
        self.write_stated(&member, feature, pref);
        if self.phase.is_past_aggregation() {
            self.enter(SessionPhase::Aggregation);
        }
        self.touch();
        Ok(())
    }

    /// Records a predicted inclusion probability (clamped to [0, 1]).
    pub fn set_prediction(&mut self, member: &str, feature: &str, probability: f64) -> Result<(), Error> {
        let member = self.member(member)?.clone();
        let feature = self.feature(feature)?;
        self.predicted.entry(member).or_default().insert(feature, probability.clamp(0.0, 1.0));
        self.touch();
        Ok(())
    }

    /// Appends a constraint to a member's visit order; repeat visits are ignored.
    pub fn record_visit(&mut self, member: &str, constraint: ConstraintId) -> Result<(), Error> {
        let member = self.member(member)?.clone();
        if self.model.constraint(constraint).is_none() {
            return Err(Error::UnknownConstraint(constraint));
        }
        let list = self.visited.entry(member).or_default();
        if !list.contains(&constraint) {
            list.push(constraint);
            self.touch();
        }
        Ok(())
    }

    pub fn effective_preference(&self, member: &str, feature: &str) -> Result<Option<Position>, Error> {
        self.member(member)?;
        self.feature(feature)?;
        Ok(self.position(member, feature))
    }

    pub(crate) fn position(&self, member: &str, feature: &str) -> Option<Position> {
        if let Some(value) = self.stated(member, feature) {
            return Some(Position { value, provenance: Provenance::Stated });
        }
        self.predicted(member, feature).map(|p| Position {
            value: Choice::from_bool(p >= self.settings.threshold),
            provenance: Provenance::Predicted,
        })
    }

    /// Effective position of `member` on every feature; `None` is Unknown.
    pub fn effective_preferences(&self, member: &str) -> Result<BTreeMap<FeatureId, Option<Position>>, Error> {
        self.member(member)?;
        Ok(self.model.features().map(|f| (f.clone(), self.position(member, f.as_str()))).collect())
    }
}
