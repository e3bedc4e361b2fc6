//! Random instance generators and brute-force oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use fmgc_core::fm::{Expr, GroupKind, Relation};
use fmgc_core::{
    detect_conflicts, InteractionMatrix, ItemKind, enumerate_configurations, is_consistent, Change, Choice, ConflictStatus,
    Decision, FeatureId, FeatureModel, MemberId, Pref, Session, SessionPhase,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum ExprSpec {
    Atom(usize),
    Not(Box<ExprSpec>),
    And(Vec<ExprSpec>),
    Or(Vec<ExprSpec>),
    Implies(Box<ExprSpec>, Box<ExprSpec>),
}

pub fn expr_spec() -> impl Strategy<Value = ExprSpec> {
    let leaf = any::<usize>().prop_map(ExprSpec::Atom);
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| ExprSpec::Not(Box::new(e))),
            prop::collection::vec(inner.clone(), 1..=3).prop_map(ExprSpec::And),
            prop::collection::vec(inner.clone(), 1..=3).prop_map(ExprSpec::Or),
            (inner.clone(), inner).prop_map(|(a, b)| ExprSpec::Implies(Box::new(a), Box::new(b))),
        ]
    })
}

pub fn name(i: usize) -> FeatureId {
    FeatureId::new(format!("F{i}")).unwrap()
}

fn build_expr(spec: &ExprSpec, n: usize) -> Expr {
    match spec {
        ExprSpec::Atom(i) => Expr::Atom(name(i % n)),
        ExprSpec::Not(e) => Expr::not(build_expr(e, n)),
        ExprSpec::And(es) => Expr::And(es.iter().map(|e| build_expr(e, n)).collect()),
        ExprSpec::Or(es) => Expr::Or(es.iter().map(|e| build_expr(e, n)).collect()),
        ExprSpec::Implies(a, b) => Expr::implies(build_expr(a, n), build_expr(b, n)),
    }
}

/// Feature `i > 0` hangs below `parents[i-1].0 % i`; the code selects
/// mandatory, optional, or-group or alternative-group membership. Groups
/// with a single member degrade to optional children.
pub fn build_model(n: usize, parents: &[(usize, u8)], constraints: &[ExprSpec]) -> FeatureModel {
    let mut parent_of = vec![0usize; n];
    let mut code = vec![0u8; n];
    for i in 1..n {
        parent_of[i] = parents[i - 1].0 % i;
        code[i] = parents[i - 1].1 % 4;
    }
    let mut groups: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for i in 1..n {
        if code[i] >= 2 {
            groups.entry((parent_of[i], code[i])).or_default().push(i);
        }
    }
    let mut model = FeatureModel::new("random", name(0));
    let mut declared = vec![false; n];
    declared[0] = true;
    for i in 1..n {
        if declared[i] {
            continue;
        }
        let parent = name(parent_of[i]);
        let members = groups.get(&(parent_of[i], code[i])).filter(|m| code[i] >= 2 && m.len() >= 2);
        match members {
            Some(members) => {
                let kind = if code[i] == 2 { GroupKind::Or } else { GroupKind::Alternative };
                model.add_group(parent.as_str(), kind, members.iter().map(|&m| name(m)).collect()).unwrap();
                for &m in members {
                    declared[m] = true;
                }
            }
            None => {
                let rel = if code[i] == 0 { Relation::Mandatory } else { Relation::Optional };
                model.add_child(parent.as_str(), name(i), rel).unwrap();
                declared[i] = true;
            }
        }
    }
    for c in constraints {
        model.add_constraint(build_expr(c, n)).unwrap();
    }
    model
}

pub fn arb_model(max_features: usize, max_constraints: usize) -> impl Strategy<Value = FeatureModel> {
    (1..=max_features)
        .prop_flat_map(move |n| {
            (
                Just(n),
                prop::collection::vec((any::<usize>(), any::<u8>()), n - 1),
                prop::collection::vec(expr_spec(), 0..=max_constraints),
            )
        })
        .prop_map(|(n, parents, constraints)| build_model(n, &parents, &constraints))
}

/// Up to `max` decisions on distinct features.
pub fn arb_decisions(model: &FeatureModel, max: usize) -> impl Strategy<Value = Vec<Decision>> {
    let features: Vec<FeatureId> = model.features().cloned().collect();
    let n = features.len();
    prop::collection::vec((0..n, any::<bool>()), 0..=max).prop_map(move |picks| {
        let mut seen = BTreeSet::new();
        picks
            .into_iter()
            .filter(|(i, _)| seen.insert(*i))
            .map(|(i, b)| Decision::new(features[i].clone(), Choice::from_bool(b)))
            .collect()
    })
}

/// A model whose own constraints are satisfiable, with a decision set.
pub fn arb_instance(
    max_features: usize,
    max_constraints: usize,
    max_decisions: usize,
) -> impl Strategy<Value = (FeatureModel, Vec<Decision>)> {
    arb_model(max_features, max_constraints)
        .prop_filter("model has a configuration", |m| !configurations(m).is_empty())
        .prop_flat_map(move |m| {
            let d = arb_decisions(&m, max_decisions);
            (Just(m), d)
        })
}

/// Every valid configuration by brute force over the model semantics.
pub fn configurations(model: &FeatureModel) -> Vec<BTreeSet<FeatureId>> {
    enumerate_configurations(model, usize::MAX).unwrap()
}

pub fn agrees(config: &BTreeSet<FeatureId>, decisions: &[&Decision]) -> bool {
    decisions.iter().all(|d| config.contains(&d.feature) == d.value.as_bool())
}

pub fn consistent_with(configs: &[BTreeSet<FeatureId>], decisions: &[&Decision]) -> bool {
    configs.iter().any(|c| agrees(c, decisions))
}

/// Subset-minimal retraction sets, by trying every subset.
pub fn brute_force_diagnoses(model: &FeatureModel, decisions: &[Decision]) -> BTreeSet<BTreeSet<Decision>> {
    let configs = configurations(model);
    let n = decisions.len();
    let mut repairing: Vec<BTreeSet<Decision>> = Vec::new();
    for mask in 0u32..(1 << n) {
        let kept: Vec<&Decision> = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| &decisions[i]).collect();
        if consistent_with(&configs, &kept) {
            repairing.push((0..n).filter(|i| mask & (1 << i) != 0).map(|i| decisions[i].clone()).collect());
        }
    }
    repairing
        .iter()
        .filter(|d| !repairing.iter().any(|o| o.len() < d.len() && o.is_subset(d)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub model: FeatureModel,
    pub members: usize,
    /// Per member and feature: 0 unstated, 1 include, 2 exclude.
    pub stated: Vec<Vec<u8>>,
    /// Per member and feature: optional prediction.
    pub predicted: Vec<Vec<Option<f64>>>,
}

impl SessionSpec {
    pub fn build(&self) -> Session {
        let members: Vec<MemberId> = (0..self.members).map(|i| MemberId::new(format!("u{i}")).unwrap()).collect();
        let mut s = Session::new("s", "m", self.model.clone(), members).unwrap();
        let features: Vec<FeatureId> = self.model.features().cloned().collect();
        for (u, row) in self.stated.iter().enumerate() {
            for (f, &code) in row.iter().enumerate() {
                let pref = match code {
                    1 => Pref::Include,
                    2 => Pref::Exclude,
                    _ => continue,
                };
                s.set_preference(&format!("u{u}"), features[f].as_str(), pref).unwrap();
            }
        }
        for (u, row) in self.predicted.iter().enumerate() {
            for (f, p) in row.iter().enumerate() {
                if let Some(p) = p {
                    s.set_prediction(&format!("u{u}"), features[f].as_str(), *p).unwrap();
                }
            }
        }
        s
    }
}

pub fn arb_session(max_features: usize, max_members: usize) -> impl Strategy<Value = SessionSpec> {
    (arb_model(max_features, 2), 1..=max_members).prop_flat_map(|(model, members)| {
        let n = model.feature_count();
        let stated = prop::collection::vec(prop::collection::vec(0u8..3, n), members);
        let predicted =
            prop::collection::vec(prop::collection::vec(prop::option::of(0.0f64..=1.0), n), members);
        (Just(model), Just(members), stated, predicted).prop_map(|(model, members, stated, predicted)| {
            SessionSpec { model, members, stated, predicted }
        })
    })
}

/// Members agree wherever they hold a position, so aggregation yields no
/// conflicts; only model inconsistencies remain.
pub fn agreeing_session() -> impl Strategy<Value = Session> {
    (arb_model(8, 3), 2usize..=4)
        .prop_filter("model has a configuration", |(m, _)| !configurations(m).is_empty())
        .prop_flat_map(|(model, members)| {
            let n = model.feature_count();
            let values = prop::collection::vec(0u8..3, n);
            let holds = prop::collection::vec(prop::collection::vec(any::<bool>(), n), members);
            (Just(model), values, holds)
        })
        .prop_map(|(model, values, holds)| {
            let ids: Vec<MemberId> = (0..holds.len()).map(|i| MemberId::new(format!("u{i}")).unwrap()).collect();
            let features: Vec<_> = model.features().cloned().collect();
            let mut s = Session::new("s", "m", model, ids).unwrap();
            for (u, row) in holds.iter().enumerate() {
                for (f, &held) in row.iter().enumerate() {
                    let pref = match values[f] {
                        1 => Pref::Include,
                        2 => Pref::Exclude,
                        _ => continue,
                    };
                    if held {
                        s.set_preference(&format!("u{u}"), features[f].as_str(), pref).unwrap();
                    }
                }
            }
            for _ in 0..3 {
                s.step().unwrap();
            }
            s
        })
}

// Session operation harness

#[derive(Debug, Clone)]
pub enum Op {
    Step,
    Set(usize, usize, u8),
    Resolve(bool),
    Apply(usize),
    Flip(usize, usize, u8),
    Constrain(ExprSpec),
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => Just(Op::Step),
        3 => (any::<usize>(), any::<usize>(), 0u8..3).prop_map(|(m, f, c)| Op::Set(m, f, c)),
        2 => any::<bool>().prop_map(Op::Resolve),
        2 => any::<usize>().prop_map(Op::Apply),
        1 => (any::<usize>(), any::<usize>(), 0u8..3).prop_map(|(m, f, c)| Op::Flip(m, f, c)),
        1 => expr_spec().prop_map(Op::Constrain),
    ]
}

pub fn pref(code: u8) -> Pref {
    match code {
        1 => Pref::Include,
        2 => Pref::Exclude,
        _ => Pref::Unstated,
    }
}

fn atom_text(spec: &ExprSpec, names: &[String]) -> String {
    match spec {
        ExprSpec::Atom(i) => names[i % names.len()].clone(),
        ExprSpec::Not(e) => format!("(not {})", atom_text(e, names)),
        ExprSpec::And(es) => format!("(and {})", es.iter().map(|e| atom_text(e, names)).collect::<Vec<_>>().join(" ")),
        ExprSpec::Or(es) => format!("(or {})", es.iter().map(|e| atom_text(e, names)).collect::<Vec<_>>().join(" ")),
        ExprSpec::Implies(a, b) => format!("(implies {} {})", atom_text(a, names), atom_text(b, names)),
    }
}

/// Applies one operation and returns whether it changed the phase
/// through an intermediate Aggregation (reconfiguration does).
pub fn apply_op(s: &mut Session, op: &Op) -> (Result<(), fmgc_core::Error>, bool) {
    let members: Vec<String> = s.members().iter().map(|m| m.to_string()).collect();
    let features: Vec<String> = s.model().features().map(|f| f.to_string()).collect();
    match op {
        Op::Step => (s.step(), false),
        Op::Set(m, f, c) => {
            (s.set_preference(&members[m % members.len()], &features[f % features.len()], pref(*c)), false)
        }
        Op::Resolve(include) => {
            let Some(conflict) = detect_conflicts(s).into_iter().next() else { return (Ok(()), false) };
            let value = Choice::from_bool(*include);
            let result = s.propose(conflict.feature.as_str(), &members[0], value, "").and_then(|pid| {
                members.iter().try_for_each(|m| s.accept(&pid, m))
            });
            (result, false)
        }
        Op::Apply(i) => {
            let len = s.diagnosis_report().map_or(1, |r| r.report.diagnoses.len().max(1));
            (s.apply_diagnosis(i % len), false)
        }
        Op::Flip(m, f, c) => {
            let change = Change::SetPreference {
                member: members[m % members.len()].clone(),
                feature: features[f % features.len()].clone(),
                value: pref(*c),
            };
            (s.reconfigure(&[change]), true)
        }
        Op::Constrain(spec) => {
            let change = Change::AddConstraint { expr: atom_text(spec, &features) };
            (s.reconfigure(&[change]), true)
        }
    }
}

pub fn check_invariants(s: &Session) -> Result<(), TestCaseError> {
    if s.phase() == SessionPhase::Complete {
        prop_assert!(is_consistent(s.model(), &s.decision_list()).unwrap());
        prop_assert!(detect_conflicts(s).is_empty());
    }
    for c in s.conflicts() {
        if let ConflictStatus::Resolved(v) = c.status {
            for m in s.members() {
                prop_assert_eq!(s.stated(m.as_str(), c.feature.as_str()), Some(v));
            }
        }
    }
    Ok(())
}

pub fn legal(from: SessionPhase, to: SessionPhase, via_aggregation: bool) -> bool {
    if from == to {
        return true;
    }
    if SessionPhase::can_transition(from, to) {
        return true;
    }
    via_aggregation
        && SessionPhase::can_transition(from, SessionPhase::Aggregation)
        && SessionPhase::can_transition(SessionPhase::Aggregation, to)
}


// Collaborative filtering oracle

/// Dense grid: `grid[u][i]` is member `u`'s rating of item `i`.
pub type Grid = Vec<Vec<Option<f64>>>;

pub fn arb_grid() -> impl Strategy<Value = Grid> {
    (2usize..=6, 2usize..=8).prop_flat_map(|(members, items)| {
        let row = (Just((1..=items as u32).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), items))
            .prop_map(|(ranks, keep)| {
                ranks.into_iter().zip(keep).map(|(r, k)| k.then_some(r as f64)).collect::<Vec<_>>()
            });
        prop::collection::vec(row, members)
    })
}

pub fn to_matrix(grid: &Grid) -> InteractionMatrix {
    let mut m = InteractionMatrix::new(ItemKind::ConstraintOrder);
    for i in 0..grid[0].len() {
        m.add_item(&format!("i{i}"));
    }
    for (u, row) in grid.iter().enumerate() {
        let id = MemberId::new(format!("u{u}")).unwrap();
        m.add_member(id.clone());
        for (i, r) in row.iter().enumerate() {
            if let Some(r) = r {
                m.rate(&id, &format!("i{i}"), *r).unwrap();
            }
        }
    }
    m
}

pub fn oracle_pearson(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let pairs: Vec<(f64, f64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (sx / n, sy / n);
    let cov: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = pairs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let vy: f64 = pairs.iter().map(|(_, y)| (y - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

pub fn oracle_mean(row: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = row.iter().flatten().copied().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Direct evaluation of the mean-centered kNN formula.
pub fn oracle_predict(grid: &Grid, u: usize, i: usize, k: usize) -> Option<f64> {
    let mut hood: Vec<(f64, usize)> = (0..grid.len())
        .filter(|&v| v != u && grid[v][i].is_some())
        .map(|v| (oracle_pearson(&grid[u], &grid[v]), v))
        .filter(|(s, _)| *s != 0.0)
        .collect();
    hood.sort_by_key(|&(s, v)| (-(s * 1e9).round() as i64, v));
    hood.truncate(k);
    if hood.is_empty() {
        return None;
    }
    let num: f64 = hood.iter().map(|&(s, v)| s * (grid[v][i].unwrap() - oracle_mean(&grid[v]).unwrap())).sum();
    let den: f64 = hood.iter().map(|(s, _)| s.abs()).sum();
    Some(oracle_mean(&grid[u])? + num / den)
}

pub fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    }
}

