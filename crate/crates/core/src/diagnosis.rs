//! Conflict detection and repair of inconsistent group decisions.
//!
//! Minimal conflicts come from QuickXPlain. Minimal diagnoses are the
//! minimal hitting sets of those conflicts, enumerated breadth-first with a
//! Reiter-style tree. Diagnoses are ranked by the largest number of
//! position changes any single member would have to accept.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fm::{ConsistencyChecker, Decision, FeatureModel, Lit};
use crate::preferences::{ConflictOrigin, ConflictRecord, ConflictStatus, MemberId, Session};
use crate::negotiation::SessionPhase;

pub const DEFAULT_MAX_DIAGNOSES: usize = 20;
pub const DEFAULT_MAX_CARD: usize = 4;

/// A subset-minimal set of decisions that is inconsistent with the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictSet {
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Decisions to retract, ordered by feature name.
    pub retract: Vec<Decision>,
    pub member_adaptations: BTreeMap<MemberId, usize>,
    pub group_score: usize,
}

impl Diagnosis {
    fn unranked(retract: Vec<Decision>) -> Self {
        Diagnosis { retract, member_adaptations: BTreeMap::new(), group_score: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub diagnoses: Vec<Diagnosis>,
    /// Whether every minimal diagnosis within the limits was found.
    pub complete: bool,
}

/// A ranked report tied to the session revision it was computed for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedReport {
    pub report: DiagnosisReport,
    pub revision: u64,
}

/// Consistency oracle over a fixed, name-ordered decision list.
struct Oracle<'m> {
    checker: ConsistencyChecker<'m>,
    decisions: Vec<Decision>,
    lits: Vec<Lit>,
}

impl<'m> Oracle<'m> {
    fn new(model: &'m FeatureModel, decisions: &[Decision]) -> Result<Self, Error> {
        let checker = ConsistencyChecker::new(model);
        let mut decisions = decisions.to_vec();
        decisions.sort();
        decisions.dedup();
        let lits = decisions.iter().map(|d| checker.literal(d)).collect::<Result<Vec<_>, _>>()?;
        if !checker.is_consistent(&[])? {
            return Err(Error::ModelInconsistent);
        }
        Ok(Oracle { checker, decisions, lits })
    }

    fn consistent(&self, subset: impl IntoIterator<Item = usize>) -> bool {
        let lits: Vec<Lit> = subset.into_iter().map(|i| self.lits[i]).collect();
        crate::fm::solve(self.checker.cnf(), &lits).expect("literals from this model").is_sat()
    }

    /// QuickXPlain over `candidates`; `None` if they are consistent.
    fn conflict(&self, candidates: &[usize]) -> Option<Vec<usize>> {
        if self.consistent(candidates.iter().copied()) {
            return None;
        }
        let mut found = self.qx(&[], false, candidates);
        found.sort_unstable();
        Some(found)
    }

    fn qx(&self, background: &[usize], has_delta: bool, candidates: &[usize]) -> Vec<usize> {
        if has_delta && !self.consistent(background.iter().copied()) {
            return Vec::new();
        }
        if candidates.len() == 1 {
            return candidates.to_vec();
        }
        let (first, second) = candidates.split_at(candidates.len() / 2);
        let with_first: Vec<usize> = background.iter().chain(first).copied().collect();
        let delta2 = self.qx(&with_first, !first.is_empty(), second);
        let with_delta2: Vec<usize> = background.iter().chain(&delta2).copied().collect();
        let mut delta1 = self.qx(&with_delta2, !delta2.is_empty(), first);
        delta1.extend(delta2);
        delta1
    }

    fn pick(&self, idx: impl IntoIterator<Item = usize>) -> Vec<Decision> {
        idx.into_iter().map(|i| self.decisions[i].clone()).collect()
    }
}

/// A minimal conflict among `decisions`, or `None` if they are consistent
/// with the model.
pub fn quickxplain(model: &FeatureModel, decisions: &[Decision]) -> Result<Option<ConflictSet>, Error> {
    let oracle = Oracle::new(model, decisions)?;
    let all: Vec<usize> = (0..oracle.decisions.len()).collect();
    Ok(oracle.conflict(&all).map(|c| ConflictSet { decisions: oracle.pick(c) }))
}

/// Minimal diagnoses of an inconsistent decision set, smallest first.
///
/// Stops after `max_diagnoses` results and never expands paths beyond
/// `max_card` decisions; `complete` reports whether either limit cut the
/// search short.
pub fn enumerate_diagnoses(
    model: &FeatureModel,
    decisions: &[Decision],
    max_diagnoses: usize,
    max_card: usize,
) -> Result<DiagnosisReport, Error> {
    let oracle = Oracle::new(model, decisions)?;
    let n = oracle.decisions.len();
    if oracle.consistent(0..n) {
        return Err(Error::NothingToDiagnose);
    }

    let mut conflicts: Vec<BTreeSet<usize>> = Vec::new();
    let mut found: Vec<BTreeSet<usize>> = Vec::new();
    let mut queue: VecDeque<BTreeSet<usize>> = VecDeque::from([BTreeSet::new()]);
    let mut seen: HashSet<BTreeSet<usize>> = HashSet::new();
    let mut complete = true;
    let pruned = |path: &BTreeSet<usize>, found: &[BTreeSet<usize>]| {
        found.iter().any(|d| d.is_subset(path))
    };

    while let Some(path) = queue.pop_front() {
        if pruned(&path, &found) {
            continue;
        }
        if found.len() >= max_diagnoses {
            complete = false;
            break;
        }
        let label = match conflicts.iter().find(|c| c.is_disjoint(&path)) {
            Some(c) => Some(c.clone()),
            None => {
                let rest: Vec<usize> = (0..n).filter(|i| !path.contains(i)).collect();
                oracle.conflict(&rest).map(|c| {
                    let c: BTreeSet<usize> = c.into_iter().collect();
                    conflicts.push(c.clone());
                    c
                })
            }
        };
        match label {
            None => found.push(path),
            Some(_) if path.len() >= max_card => complete = false,
            Some(conflict) => {
                for i in conflict {
                    let mut child = path.clone();
                    child.insert(i);
                    if seen.insert(child.clone()) {
                        queue.push_back(child);
                    }
                }
            }
        }
    }

    Ok(DiagnosisReport {
        diagnoses: found.into_iter().map(|d| Diagnosis::unranked(oracle.pick(d))).collect(),
        complete,
    })
}

fn sort_key(d: &Diagnosis) -> (usize, usize, Vec<&str>) {
    let names = d.retract.iter().map(|x| x.feature.as_str()).collect();
    (d.group_score, d.retract.len(), names)
}

/// Scores every diagnosis against the session's members and sorts the
/// report: lowest group score first, then fewer retractions, then feature
/// names.
///
/// A member's adaptation count is the number of retracted decisions that
/// match their own effective position; the group score is the maximum over
/// members.
pub fn rank_diagnoses(report: DiagnosisReport, session: &Session) -> Result<DiagnosisReport, Error> {
    let mut diagnoses = report.diagnoses;
    for d in &mut diagnoses {
        for r in &d.retract {
            if session.group_decisions().get(&r.feature) != Some(&r.value) {
                return Err(Error::NotAGroupDecision(r.to_string()));
            }
        }
        d.member_adaptations = session
            .members()
            .iter()
            .map(|m| {
                let count = d
                    .retract
                    .iter()
                    .filter(|r| {
                        session.position(m.as_str(), r.feature.as_str()).map(|p| p.value)
                            == Some(r.value)
                    })
                    .count();
                (m.clone(), count)
            })
            .collect();
        d.group_score = d.member_adaptations.values().copied().max().unwrap_or(0);
    }
    diagnoses.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    Ok(DiagnosisReport { diagnoses, complete: report.complete })
}

impl Session {
    /// Diagnoses the current group decisions and stores the ranked report.
    pub(crate) fn diagnose(&mut self) -> Result<(), Error> {
        let decisions = self.decision_list();
        let report = enumerate_diagnoses(
            &self.model,
            &decisions,
            self.settings.max_diagnoses,
            self.settings.max_card,
        )?;
        let ranked = rank_diagnoses(report, self)?;
        self.touch();
        self.diagnoses = Some(RankedReport { report: ranked, revision: self.revision });
        Ok(())
    }

    /// Retracts the decisions of the `index`-th ranked diagnosis and reopens
    /// those features so the members can restate them.
    pub fn apply_diagnosis(&mut self, index: usize) -> Result<(), Error> {
        if self.phase != SessionPhase::DiagnosisPhase {
            return Err(Error::IllegalPhase(self.phase));
        }
        let ranked = self.diagnoses.as_ref().ok_or(Error::NoDiagnosisReport)?;
        if ranked.revision != self.revision {
            return Err(Error::StaleDiagnosis);
        }
        let len = ranked.report.diagnoses.len();
        let diagnosis = ranked
            .report
            .diagnoses
            .get(index)
            .ok_or(Error::InvalidDiagnosisIndex { index, len })?
            .clone();
        for r in &diagnosis.retract {
            self.group_decisions.remove(&r.feature);
            self.conflicts.retain(|c| c.feature != r.feature);
            let mut positions = BTreeMap::new();
            let mut provenance = BTreeMap::new();
            for m in &self.members {
                if let Some(p) = self.position(m.as_str(), r.feature.as_str()) {
                    positions.insert(m.clone(), p.value);
                    provenance.insert(m.clone(), p.provenance);
                }
            }
            self.conflicts.push(ConflictRecord {
                feature: r.feature.clone(),
                positions,
                provenance,
                status: ConflictStatus::Open,
                origin: ConflictOrigin::Retracted,
            });
        }
        self.conflicts.sort_by(|a, b| a.feature.cmp(&b.feature));
        self.diagnoses = None;
        self.enter(SessionPhase::Aggregation);
        self.touch();
        Ok(())
    }
}
