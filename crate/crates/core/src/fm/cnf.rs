//! Clause form of a feature model.

use std::fmt;
use std::ops::Not;

use crate::fm::model::{Expr, FeatureModel, GroupKind, Relation};

/// Variable index, 0-based. Feature variables come first, in model
/// declaration order; Tseitin auxiliaries follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

/// A literal, encoded as `2 * var + negated`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(usize);

impl Lit {
    pub fn new(var: Var, positive: bool) -> Self {
        Lit(2 * var.0 + usize::from(!positive))
    }

    pub fn pos(var: Var) -> Self {
        Lit::new(var, true)
    }

    pub fn neg(var: Var) -> Self {
        Lit::new(var, false)
    }

    pub fn var(self) -> Var {
        Var(self.0 / 2)
    }

    pub fn is_positive(self) -> bool {
        self.0 % 2 == 0
    }

    pub(crate) fn code(self) -> usize {
        self.0
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.var().0 as i64 + 1;
        write!(f, "{}", if self.is_positive() { v } else { -v })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub is_feature: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfFormula {
    variables: Vec<VarInfo>,
    clauses: Vec<Vec<Lit>>,
}

impl CnfFormula {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &[VarInfo] {
        &self.variables
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn feature_vars(&self) -> impl Iterator<Item = (Var, &str)> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_feature)
            .map(|(i, v)| (Var(i), v.name.as_str()))
    }

    pub fn add_var(&mut self, name: impl Into<String>, is_feature: bool) -> Var {
        self.variables.push(VarInfo { name: name.into(), is_feature });
        Var(self.variables.len() - 1)
    }

    /// Adds a clause after removing duplicate literals. Tautologies are
    /// dropped. Returns whether a clause was stored.
    ///
    /// # Panics
    /// If the clause is empty or mentions an undeclared variable.
    pub fn add_clause(&mut self, lits: impl IntoIterator<Item = Lit>) -> bool {
        let mut clause: Vec<Lit> = Vec::new();
        for lit in lits {
            assert!(lit.var().0 < self.variables.len(), "undeclared variable in clause");
            if clause.contains(&!lit) {
                return false;
            }
            if !clause.contains(&lit) {
                clause.push(lit);
            }
        }
        assert!(!clause.is_empty(), "empty clause");
        self.clauses.push(clause);
        true
    }
}

/// Translates a model to CNF.
///
/// Tree edges and groups use the usual clause patterns; alternative groups
/// are encoded pairwise. Cross-tree constraints go through a Tseitin
/// transformation, so the clause count stays linear in the expression size.
pub fn to_cnf(model: &FeatureModel) -> CnfFormula {
    let mut cnf = CnfFormula::new();
    for f in model.features() {
        cnf.add_var(f.as_str(), true);
    }
    let var = |name: &str| Var(model.position(name).expect("feature of this model"));

    cnf.add_clause([Lit::pos(Var(0))]);
    for parent in model.features() {
        let p = var(parent.as_str());
        for (child, relation) in model.children(parent.as_str()) {
            let c = var(child.as_str());
            cnf.add_clause([Lit::neg(c), Lit::pos(p)]);
            if relation == Relation::Mandatory {
                cnf.add_clause([Lit::neg(p), Lit::pos(c)]);
            }
        }
    }
    for group in model.groups() {
        let p = var(group.parent.as_str());
        let members: Vec<Var> = group.members.iter().map(|m| var(m.as_str())).collect();
        for &c in &members {
            cnf.add_clause([Lit::neg(c), Lit::pos(p)]);
        }
        cnf.add_clause(std::iter::once(Lit::neg(p)).chain(members.iter().map(|&c| Lit::pos(c))));
        if group.kind == GroupKind::Alternative {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    cnf.add_clause([Lit::neg(a), Lit::neg(b)]);
                }
            }
        }
    }
    for c in model.constraints() {
        let top = tseitin(&mut cnf, &c.expr, &var);
        cnf.add_clause([top]);
    }
    cnf
}

/// Returns a literal equivalent to `expr`, adding definitional clauses for
/// every AND/OR/IMPLIES node.
fn tseitin(cnf: &mut CnfFormula, expr: &Expr, var: &dyn Fn(&str) -> Var) -> Lit {
    match expr {
        Expr::Atom(f) => Lit::pos(var(f.as_str())),
        Expr::Not(e) => !tseitin(cnf, e, var),
        Expr::And(es) => {
            let args: Vec<Lit> = es.iter().map(|e| tseitin(cnf, e, var)).collect();
            if let [single] = args.as_slice() {
                return *single;
            }
            let aux = Lit::pos(cnf.add_var(format!("_t{}", cnf.num_vars()), false));
            for &a in &args {
                cnf.add_clause([!aux, a]);
            }
            cnf.add_clause(std::iter::once(aux).chain(args.iter().map(|&a| !a)));
            aux
        }
        Expr::Or(es) => {
            let args: Vec<Lit> = es.iter().map(|e| tseitin(cnf, e, var)).collect();
            if let [single] = args.as_slice() {
                return *single;
            }
            let aux = Lit::pos(cnf.add_var(format!("_t{}", cnf.num_vars()), false));
            for &a in &args {
                cnf.add_clause([aux, !a]);
            }
            cnf.add_clause(std::iter::once(!aux).chain(args.iter().copied()));
            aux
        }
        Expr::Implies(a, b) => {
            let a = tseitin(cnf, a, var);
            let b = tseitin(cnf, b, var);
            let aux = Lit::pos(cnf.add_var(format!("_t{}", cnf.num_vars()), false));
            cnf.add_clause([!aux, !a, b]);
            cnf.add_clause([aux, a]);
            cnf.add_clause([aux, !b]);
            aux
        }
    }
}
