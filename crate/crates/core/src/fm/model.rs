//! Feature-model data types.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Name of a feature. Matches `[A-Za-z][A-Za-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureId(String);

impl FeatureId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        let mut chars = name.chars();
        let valid = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if valid {
            Ok(FeatureId(name))
        } else {
            Err(ModelError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for FeatureId {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        FeatureId::new(value)
    }
}

impl From<FeatureId> for String {
    fn from(value: FeatureId) -> Self {
        value.0
    }
}

impl FromStr for FeatureId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureId::new(s)
    }
}

impl Borrow<str> for FeatureId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for FeatureId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 1-based ordinal of a cross-tree constraint in declaration order.
///
/// Rendered as `c<n>`. Ordering is numeric, so `c2 < c10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConstraintId(pub usize);

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl FromStr for ConstraintId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('c')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(ConstraintId)
            .ok_or_else(|| ModelError::InvalidConstraintId(s.to_string()))
    }
}

impl TryFrom<String> for ConstraintId {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ConstraintId> for String {
    fn from(value: ConstraintId) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Mandatory,
    Optional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Or,
    Alternative,
}

impl GroupKind {
    fn keyword(self) -> &'static str {
        match self {
            GroupKind::Or => "or",
            GroupKind::Alternative => "alt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub parent: FeatureId,
    pub kind: GroupKind,
    pub members: Vec<FeatureId>,
}

/// Propositional expression over feature atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Atom(FeatureId),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn atom(name: &str) -> Result<Expr, ModelError> {
        Ok(Expr::Atom(FeatureId::new(name)?))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn implies(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Implies(Box::new(lhs), Box::new(rhs))
    }

    /// Distinct features mentioned by the expression.
    pub fn atoms(&self) -> BTreeSet<&FeatureId> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut BTreeSet<&'a FeatureId>) {
        match self {
            Expr::Atom(f) => {
                out.insert(f);
            }
            Expr::Not(e) => e.collect_atoms(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.collect_atoms(out)),
            Expr::Implies(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn mentions(&self, feature: &str) -> bool {
        match self {
            Expr::Atom(f) => f.as_str() == feature,
            Expr::Not(e) => e.mentions(feature),
            Expr::And(es) | Expr::Or(es) => es.iter().any(|e| e.mentions(feature)),
            Expr::Implies(a, b) => a.mentions(feature) || b.mentions(feature),
        }
    }

    pub fn eval(&self, selected: &dyn Fn(&FeatureId) -> bool) -> bool {
        match self {
            Expr::Atom(f) => selected(f),
            Expr::Not(e) => !e.eval(selected),
            Expr::And(es) => es.iter().all(|e| e.eval(selected)),
            Expr::Or(es) => es.iter().any(|e| e.eval(selected)),
            Expr::Implies(a, b) => !a.eval(selected) || b.eval(selected),
        }
    }

    /// If the expression is literally `(not (and a b))`, returns the two atoms.
    pub fn as_excludes(&self) -> Option<(&FeatureId, &FeatureId)> {
        let Expr::Not(inner) = self else { return None };
        let Expr::And(args) = inner.as_ref() else { return None };
        match args.as_slice() {
            [Expr::Atom(a), Expr::Atom(b)] => Some((a, b)),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, op: &str, es: &[Expr]) -> fmt::Result {
            write!(f, "({op}")?;
            for e in es {
                write!(f, " {e}")?;
            }
            f.write_str(")")
        }
        match self {
            Expr::Atom(a) => write!(f, "{a}"),
            Expr::Not(e) => write!(f, "(not {e})"),
            Expr::And(es) => list(f, "and", es),
            Expr::Or(es) => list(f, "or", es),
            Expr::Implies(a, b) => write!(f, "(implies {a} {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub id: ConstraintId,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Placement {
    Root,
    Child { parent: usize, relation: Relation },
    Grouped { parent: usize, group: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    id: FeatureId,
    placement: Placement,
}

/// A feature tree with groups and cross-tree constraints.
///
/// Features keep their declaration order, which is also the variable order
/// used by the CNF translation. A model is only ever built through the
/// checked editing methods, so every value of this type is a valid tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureModel {
    name: String,
    nodes: Vec<Node>,
    index: BTreeMap<FeatureId, usize>,
    groups: Vec<Group>,
    constraints: Vec<Constraint>,
}

impl FeatureModel {
    pub fn new(name: impl Into<String>, root: FeatureId) -> Self {
        let mut index = BTreeMap::new();
        index.insert(root.clone(), 0);
        FeatureModel {
            name: name.into(),
            nodes: vec![Node { id: root, placement: Placement::Root }],
            index,
            groups: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &FeatureId {
        &self.nodes[0].id
    }

    pub fn feature_count(&self) -> usize {
        self.nodes.len()
    }

    /// Features in declaration order.
    pub fn features(&self) -> impl Iterator<Item = &FeatureId> {
        self.nodes.iter().map(|n| &n.id)
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.index.contains_key(feature)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureId> {
        self.index.get(name).map(|&i| &self.nodes[i].id)
    }

    /// Position of a feature in declaration order.
    pub fn position(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn parent(&self, feature: &str) -> Option<&FeatureId> {
        let node = &self.nodes[*self.index.get(feature)?];
        match node.placement {
            Placement::Root => None,
            Placement::Child { parent, .. } | Placement::Grouped { parent, .. } => {
                Some(&self.nodes[parent].id)
            }
        }
    }

    /// Plain (non-grouped) children of `parent` in declaration order.
    pub fn children(&self, parent: &str) -> Vec<(&FeatureId, Relation)> {
        let Some(&p) = self.index.get(parent) else { return Vec::new() };
        self.nodes
            .iter()
            .filter_map(|n| match n.placement {
                Placement::Child { parent, relation } if parent == p => Some((&n.id, relation)),
                _ => None,
            })
            .collect()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group_of(&self, feature: &str) -> Option<&Group> {
        match self.nodes[*self.index.get(feature)?].placement {
            Placement::Grouped { group, .. } => Some(&self.groups[group]),
            _ => None,
        }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: ConstraintId) -> Option<&Constraint> {
        id.0.checked_sub(1).and_then(|i| self.constraints.get(i))
    }

    fn declare(&mut self, parent: &str, child: &FeatureId) -> Result<usize, ModelError> {
        if parent == child.as_str() {
            return Err(ModelError::Cycle(child.clone()));
        }
        let p = *self
            .index
            .get(parent)
            .ok_or_else(|| ModelError::UnknownFeature(parent.to_string()))?;
        if self.index.contains_key(child.as_str()) {
            return Err(match self.group_of(child.as_str()) {
                Some(_) => ModelError::FeatureInTwoGroups(child.clone()),
                None => ModelError::DuplicateFeature(child.clone()),
            });
        }
        Ok(p)
    }

    pub fn add_child(
        &mut self,
        parent: &str,
        child: FeatureId,
        relation: Relation,
    ) -> Result<(), ModelError> {
        let p = self.declare(parent, &child)?;
        self.index.insert(child.clone(), self.nodes.len());
        self.nodes.push(Node { id: child, placement: Placement::Child { parent: p, relation } });
        Ok(())
    }

    pub fn add_group(
        &mut self,
        parent: &str,
        kind: GroupKind,
        members: Vec<FeatureId>,
    ) -> Result<(), ModelError> {
        if members.len() < 2 {
            return Err(ModelError::GroupTooSmall(parent.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut p = 0;
        for m in &members {
            p = self.declare(parent, m)?;
            if !seen.insert(m) {
                return Err(ModelError::DuplicateFeature(m.clone()));
            }
        }
        let group = self.groups.len();
        for m in &members {
            self.index.insert(m.clone(), self.nodes.len());
            self.nodes.push(Node { id: m.clone(), placement: Placement::Grouped { parent: p, group } });
        }
        self.groups.push(Group { parent: self.nodes[p].id.clone(), kind, members });
        Ok(())
    }

    pub fn add_constraint(&mut self, expr: Expr) -> Result<ConstraintId, ModelError> {
        if let Some(unknown) = expr.atoms().into_iter().find(|a| !self.contains(a.as_str())) {
            return Err(ModelError::UnknownFeature(unknown.to_string()));
        }
        let id = ConstraintId(self.constraints.len() + 1);
        self.constraints.push(Constraint { id, expr });
        Ok(id)
    }

    /// Direct semantic check of a full assignment (features in `selected`
    /// included, all others excluded). Independent of the CNF route.
    pub fn satisfied_by(&self, selected: &BTreeSet<&str>) -> bool {
        let on = |i: usize| selected.contains(self.nodes[i].id.as_str());
        if !on(0) || selected.iter().any(|s| !self.contains(s)) {
            return false;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node.placement {
                Placement::Root => {}
                Placement::Child { parent, relation } => {
                    if on(i) && !on(parent) {
                        return false;
                    }
                    if relation == Relation::Mandatory && on(parent) && !on(i) {
                        return false;
                    }
                }
                Placement::Grouped { parent, .. } => {
                    if on(i) && !on(parent) {
                        return false;
                    }
                }
            }
        }
        for g in &self.groups {
            if !selected.contains(g.parent.as_str()) {
                continue;
            }
            let count = g.members.iter().filter(|m| selected.contains(m.as_str())).count();
            let ok = match g.kind {
                GroupKind::Or => count >= 1,
                GroupKind::Alternative => count == 1,
            };
            if !ok {
                return false;
            }
        }
        let sel = |f: &FeatureId| selected.contains(f.as_str());
        self.constraints.iter().all(|c| c.expr.eval(&sel))
    }

    /// Canonical text form; parsing it yields an equal model.
    pub fn to_text(&self) -> String {
        let mut out = format!("model {}\nroot {}\n", self.name, self.root());
        let mut emitted = vec![false; self.groups.len()];
        for node in &self.nodes[1..] {
            match node.placement {
                Placement::Root => {}
                Placement::Child { parent, relation } => {
                    let kw = match relation {
                        Relation::Mandatory => "mandatory",
                        Relation::Optional => "optional",
                    };
                    out.push_str(&format!("{kw} {} {}\n", self.nodes[parent].id, node.id));
                }
                Placement::Grouped { group, .. } => {
                    if !std::mem::replace(&mut emitted[group], true) {
                        let g = &self.groups[group];
                        out.push_str(g.kind.keyword());
                        out.push(' ');
                        out.push_str(g.parent.as_str());
                        for m in &g.members {
                            out.push(' ');
                            out.push_str(m.as_str());
                        }
                        out.push('\n');
                    }
                }
            }
        }
        for c in &self.constraints {
            out.push_str(&format!("constraint {}\n", c.expr));
        }
        out
    }
}

impl fmt::Display for FeatureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Serialize for FeatureModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for FeatureModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        crate::fm::parse_model(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Include,
    Exclude,
}

impl Choice {
    pub fn as_bool(self) -> bool {
        self == Choice::Include
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Choice::Include
        } else {
            Choice::Exclude
        }
    }

    pub fn flipped(self) -> Self {
        Choice::from_bool(!self.as_bool())
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::Include => "Include",
            Choice::Exclude => "Exclude",
        })
    }
}

/// A single include/exclude commitment on a feature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub feature: FeatureId,
    pub value: Choice,
}

impl Decision {
    pub fn new(feature: FeatureId, value: Choice) -> Self {
        Decision { feature, value }
    }

    pub fn include(feature: &str) -> Result<Self, ModelError> {
        Ok(Decision::new(FeatureId::new(feature)?, Choice::Include))
    }

    pub fn exclude(feature: &str) -> Result<Self, ModelError> {
        Ok(Decision::new(FeatureId::new(feature)?, Choice::Exclude))
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.feature, self.value)
    }
}
