//! Group recommendation: user-based collaborative filtering, preference
//! aggregation and next-constraint recommendation.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fm::{constraint_importance, Choice, ConstraintId, FeatureId};
use crate::preferences::{
    ConflictOrigin, ConflictRecord, ConflictStatus, InteractionMatrix, ItemKind, MemberId,
    Position, Session,
};

/// Default neighborhood size.
pub const DEFAULT_K: usize = 3;

/// Scores closer than this are treated as tied.
const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    /// Decide only on unanimous agreement; disagreements become conflicts.
    #[default]
    UnanimityMerge,
    Average,
    Majority,
    LeastMisery,
    MostPleasure,
}

/// Pearson correlation of two members over their co-rated items.
///
/// Zero when fewer than two items are co-rated or either side has no
/// variance on them.
pub fn similarity(u: &str, v: &str, m: &InteractionMatrix) -> Result<f64, Error> {
    let ru = m.ratings_of(u).ok_or_else(|| Error::UnknownMember(u.to_string()))?;
    let rv = m.ratings_of(v).ok_or_else(|| Error::UnknownMember(v.to_string()))?;
    let pairs: Vec<(f64, f64)> =
        ru.iter().filter_map(|(item, &a)| rv.get(item).map(|&b| (a, b))).collect();
    if pairs.len() < 2 {
        return Ok(0.0);
    }
    let n = pairs.len() as f64;
    let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (da, db) = (a - mean_a, b - mean_b);
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// Similarities equal up to [`SCORE_EPS`] rank as ties.
fn tie_key(similarity: f64) -> i64 {
    (similarity / SCORE_EPS).round() as i64
}

/// The `k` most similar members to `u` that rated `item` with nonzero
/// similarity, best first (ties by name).
fn neighbors<'m>(
    u: &str,
    item: &str,
    m: &'m InteractionMatrix,
    k: usize,
) -> Result<Vec<(&'m MemberId, f64)>, Error> {
    let mut found = Vec::new();
    for v in m.members() {
        if v.as_str() == u || m.rating(v.as_str(), item).is_none() {
            continue;
        }
        let s = similarity(u, v.as_str(), m)?;
        if s != 0.0 {
            found.push((v, s));
        }
    }
    found.sort_by(|a, b| tie_key(b.1).cmp(&tie_key(a.1)).then_with(|| a.0.cmp(b.0)));
    found.truncate(k);
    Ok(found)
}

/// Mean-centered weighted average over the `k` nearest neighbors who rated
/// `item`. `None` when no such neighbor exists.
pub fn predict_rating(
    u: &str,
    item: &str,
    m: &InteractionMatrix,
    k: usize,
) -> Result<Option<f64>, Error> {
    if !m.has_member(u) {
        return Err(Error::UnknownMember(u.to_string()));
    }
    if !m.has_item(item) {
        return Err(Error::UnknownItem(item.to_string()));
    }
    if m.rating(u, item).is_some() {
        return Err(Error::AlreadyRated { member: u.to_string(), item: item.to_string() });
    }
    let hood = neighbors(u, item, m, k)?;
    let Some(mean_u) = m.mean(u) else { return Ok(None) };
    if hood.is_empty() {
        return Ok(None);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (v, s) in hood {
        let r = m.rating(v.as_str(), item).expect("neighbor rated item");
        let mean_v = m.mean(v.as_str()).expect("neighbor has ratings");
        num += s * (r - mean_v);
        den += s.abs();
    }
    Ok(Some(mean_u + num / den))
}

fn expect_kind(m: &InteractionMatrix, expected: ItemKind) -> Result<(), Error> {
    if m.kind() == expected {
        Ok(())
    } else {
        Err(Error::KindMismatch { expected, actual: m.kind() })
    }
}

/// Historical order data with each session member's row replaced by their
/// visits in this session (rank = position in the visit list).
pub fn session_order_matrix(session: &Session, m: &InteractionMatrix) -> Result<InteractionMatrix, Error> {
    expect_kind(m, ItemKind::ConstraintOrder)?;
    let mut out = m.clone();
    for member in session.members() {
        let row: Vec<(String, f64)> = session
            .visited(member.as_str())
            .unwrap_or_default()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), (i + 1) as f64))
            .collect();
        out = out.with_row(member, &row);
    }
    Ok(out)
}

/// Predicted visit rank of every constraint `u` has not visited yet.
/// Constraints that cannot be predicted are omitted.
pub fn predict_constraint_order(
    u: &str,
    session: &Session,
    m: &InteractionMatrix,
    k: usize,
) -> Result<BTreeMap<ConstraintId, f64>, Error> {
    session.member(u)?;
    let data = session_order_matrix(session, m)?;
    predict_order_in(u, session, &data, k)
}

fn predict_order_in(
    u: &str,
    session: &Session,
    data: &InteractionMatrix,
    k: usize,
) -> Result<BTreeMap<ConstraintId, f64>, Error> {
    let visited = session.visited(u).unwrap_or_default();
    let mut out = BTreeMap::new();
    for c in session.model().constraints() {
        let item = c.id.to_string();
        if visited.contains(&c.id) || !data.has_item(&item) {
            continue;
        }
        if let Some(r) = predict_rating(u, &item, data, k)? {
            out.insert(c.id, r);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    None,
    Importance,
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationBasis {
    /// Mean of member ranks (visited or predicted).
    Aggregated,
    /// No usable data; most important open constraint.
    ColdStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextConstraintRecommendation {
    pub constraint: ConstraintId,
    /// Mean rank over members; absent for cold-start picks.
    pub group_score: Option<f64>,
    pub tie_break_used: TieBreak,
    pub basis: RecommendationBasis,
}

/// Picks the constraint the group should look at next.
///
/// Candidates are constraints some member has not visited yet and for which
/// every member has either a visit rank or a prediction. The lowest mean
/// rank wins; ties go to the constraint mentioning more features, then to
/// the lower id. Without candidates, falls back to the most important open
/// constraint. Returns `None` when the model has no open constraint.
pub fn recommend_next_constraint(
    session: &Session,
    m: Option<&InteractionMatrix>,
    k: usize,
) -> Result<Option<NextConstraintRecommendation>, Error> {
    let model = session.model();
    let open: Vec<ConstraintId> = model
        .constraints()
        .iter()
        .map(|c| c.id)
        .filter(|id| {
            session.members().iter().any(|u| !session.visited(u.as_str()).unwrap_or_default().contains(id))
        })
        .collect();
    if open.is_empty() {
        return Ok(None);
    }
    let importance = |id: ConstraintId| constraint_importance(model, id).expect("declared constraint");

    let mut scored: Vec<(ConstraintId, f64)> = Vec::new();
    if let Some(m) = m {
        let data = session_order_matrix(session, m)?;
        let mut per_member: Vec<(Vec<ConstraintId>, BTreeMap<ConstraintId, f64>)> = Vec::new();
        for u in session.members() {
            let visited = session.visited(u.as_str()).unwrap_or_default().to_vec();
            per_member.push((visited, predict_order_in(u.as_str(), session, &data, k)?));
        }
        for &id in &open {
            let values: Option<Vec<f64>> = per_member
                .iter()
                .map(|(visited, predicted)| match visited.iter().position(|c| *c == id) {
                    Some(pos) => Some((pos + 1) as f64),
                    None => predicted.get(&id).copied(),
                })
                .collect();
            if let Some(values) = values {
                scored.push((id, values.iter().sum::<f64>() / values.len() as f64));
            }
        }
    }

    if scored.is_empty() {
        let best = open
            .iter()
            .copied()
            .max_by(|&a, &b| importance(a).cmp(&importance(b)).then_with(|| b.cmp(&a)))
            .expect("open is non-empty");
        return Ok(Some(NextConstraintRecommendation {
            constraint: best,
            group_score: None,
            tie_break_used: TieBreak::None,
            basis: RecommendationBasis::ColdStart,
        }));
    }

    let min = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let tied: Vec<(ConstraintId, f64)> =
        scored.into_iter().filter(|s| s.1 - min <= SCORE_EPS).collect();
    let (winner, tie_break_used) = if tied.len() == 1 {
        (tied[0], TieBreak::None)
    } else {
        let top = tied.iter().map(|t| importance(t.0)).max().expect("non-empty");
        let best: Vec<_> = tied.iter().filter(|t| importance(t.0) == top).copied().collect();
        if best.len() == 1 {
            (best[0], TieBreak::Importance)
        } else {
            (*best.iter().min_by_key(|t| t.0).expect("non-empty"), TieBreak::Lexicographic)
        }
    };
    Ok(Some(NextConstraintRecommendation {
        constraint: winner.0,
        group_score: Some(winner.1),
        tie_break_used,
        basis: RecommendationBasis::Aggregated,
    }))
}

/// Single-member variant over raw order data: the unrated item with the
/// lowest predicted rank, ties by item name.
pub fn recommend_next_item(u: &str, m: &InteractionMatrix, k: usize) -> Result<Option<String>, Error> {
    expect_kind(m, ItemKind::ConstraintOrder)?;
    let mut best: Option<(f64, &str)> = None;
    for item in m.items() {
        if m.rating(u, item).is_some() {
            continue;
        }
        if let Some(r) = predict_rating(u, item, m, k)? {
            let better = match best {
                None => true,
                Some((b, name)) => r < b - SCORE_EPS || ((r - b).abs() <= SCORE_EPS && item.as_str() < name),
            };
            if better {
                best = Some((r, item));
            }
        }
    }
    Ok(best.map(|(_, i)| i.to_string()))
}

/// Predicted probability that `u` includes `feature`, clamped to [0, 1].
pub fn predict_feature_preference(
    u: &str,
    feature: &str,
    m: &InteractionMatrix,
    k: usize,
) -> Result<Option<f64>, Error> {
    expect_kind(m, ItemKind::FeatureChoice)?;
    Ok(predict_rating(u, feature, m, k)?.map(|r| r.clamp(0.0, 1.0)))
}

impl Session {
    /// Recomputes predictions for every feature a member has not stated,
    /// using the attached choice data augmented with the members' stated
    /// preferences. Without choice data this clears predictions.
    pub fn predict_preferences(&mut self) -> Result<(), Error> {
        let mut predicted: BTreeMap<MemberId, BTreeMap<FeatureId, f64>> =
            self.members.iter().map(|m| (m.clone(), BTreeMap::new())).collect();
        if let Some(base) = &self.choice_data {
            expect_kind(base, ItemKind::FeatureChoice)?;
            let mut data = base.clone();
            for member in &self.members {
                let row: Vec<(String, f64)> = self.stated[member]
                    .iter()
                    .map(|(f, c)| (f.to_string(), if c.as_bool() { 1.0 } else { 0.0 }))
                    .collect();
                data = data.with_row(member, &row);
            }
            for member in &self.members {
                for f in self.model.features() {
                    if self.stated[member].contains_key(f) || !data.has_item(f.as_str()) {
                        continue;
                    }
                    if let Some(p) = predict_feature_preference(member.as_str(), f.as_str(), &data, self.settings.k)? {
                        predicted.get_mut(member).expect("member row").insert(f.clone(), p);
                    }
                }
            }
        }
        if predicted != self.predicted {
            self.predicted = predicted;
            self.touch();
        }
        Ok(())
    }
}

/// Turns effective member positions into group decisions and conflicts.
///
/// Features nobody has a position on are skipped; every other feature ends
/// up in exactly one of the two outputs.
pub fn aggregate_preferences(
    session: &Session,
    strategy: AggregationStrategy,
) -> (BTreeMap<FeatureId, Choice>, Vec<ConflictRecord>) {
    let mut decisions = BTreeMap::new();
    let mut conflicts = Vec::new();
    for f in session.model().features() {
        let positions: Vec<(&MemberId, Position)> = session
            .members()
            .iter()
            .filter_map(|m| session.position(m.as_str(), f.as_str()).map(|p| (m, p)))
            .collect();
        if positions.is_empty() {
            continue;
        }
        let includes = positions.iter().filter(|(_, p)| p.value == Choice::Include).count();
        let excludes = positions.len() - includes;
        let outcome = match strategy {
            AggregationStrategy::UnanimityMerge => match (includes, excludes) {
                (_, 0) => Some(Choice::Include),
                (0, _) => Some(Choice::Exclude),
                _ => None,
            },
            AggregationStrategy::Majority => match includes.cmp(&excludes) {
                Ordering::Greater => Some(Choice::Include),
                Ordering::Less => Some(Choice::Exclude),
                Ordering::Equal => None,
            },
            AggregationStrategy::Average => {
                // Exactly half is a conflict.
                match (2 * includes).cmp(&positions.len()) {
                    Ordering::Greater => Some(Choice::Include),
                    Ordering::Less => Some(Choice::Exclude),
                    Ordering::Equal => None,
                }
            }
            AggregationStrategy::LeastMisery => {
                Some(if excludes > 0 { Choice::Exclude } else { Choice::Include })
            }
            AggregationStrategy::MostPleasure => {
                Some(if includes > 0 { Choice::Include } else { Choice::Exclude })
            }
        };
        match outcome {
            Some(value) => {
                decisions.insert(f.clone(), value);
            }
            None => conflicts.push(ConflictRecord {
                feature: f.clone(),
                positions: positions.iter().map(|(m, p)| ((*m).clone(), p.value)).collect(),
                provenance: positions.iter().map(|(m, p)| ((*m).clone(), p.provenance)).collect(),
                status: ConflictStatus::Open,
                origin: ConflictOrigin::Disagreement,
            }),
        }
    }
    conflicts.sort_by(|a, b| a.feature.cmp(&b.feature));
    (decisions, conflicts)
}
