//! A small DPLL solver with two-watched-literal propagation.
//!
//! Branching follows variable order with the positive phase first and
//! backtracking is chronological, so results are fully deterministic.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::fm::cnf::{CnfFormula, Lit, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn value(&self, var: Var) -> bool {
        self.0[var.0]
    }

    pub fn satisfies(&self, lit: Lit) -> bool {
        self.value(lit.var()) == lit.is_positive()
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Assignment),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

pub fn solve(cnf: &CnfFormula, assumptions: &[Lit]) -> Result<SatResult, Error> {
    if let Some(bad) = assumptions.iter().find(|l| l.var().0 >= cnf.num_vars()) {
        return Err(Error::UnknownVariable(bad.var().0));
    }
    Ok(Solver::new(cnf).run(assumptions))
}

struct Level {
    trail_start: usize,
    flipped: bool,
}

struct Solver {
    clauses: Vec<Vec<Lit>>,
    units: Vec<Lit>,
    watches: Vec<Vec<usize>>,
    values: Vec<Option<bool>>,
    trail: Vec<Lit>,
    levels: Vec<Level>,
    qhead: usize,
}

impl Solver {
    fn new(cnf: &CnfFormula) -> Self {
        let n = cnf.num_vars();
        let mut watches = vec![Vec::new(); 2 * n];
        let mut clauses = Vec::new();
        let mut units = Vec::new();
        for c in cnf.clauses() {
            if c.len() == 1 {
                units.push(c[0]);
            } else {
                watches[c[0].code()].push(clauses.len());
                watches[c[1].code()].push(clauses.len());
                clauses.push(c.clone());
            }
        }
        Solver {
            clauses,
            units,
            watches,
            values: vec![None; n],
            trail: Vec::new(),
            levels: Vec::new(),
            qhead: 0,
        }
    }

    fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.values[lit.var().0].map(|v| v == lit.is_positive())
    }

    /// Returns false if `lit` is already false.
    fn enqueue(&mut self, lit: Lit) -> bool {
        match self.lit_value(lit) {
            Some(v) => v,
            None => {
                self.values[lit.var().0] = Some(lit.is_positive());
                self.trail.push(lit);
                true
            }
        }
    }

    /// Unit propagation; returns false on conflict.
    fn propagate(&mut self) -> bool {
        while self.qhead < self.trail.len() {
            let falsified = !self.trail[self.qhead];
            self.qhead += 1;
            let mut watchers = std::mem::take(&mut self.watches[falsified.code()]);
            let mut keep = 0;
            let mut ok = true;
            let mut i = 0;
            while i < watchers.len() {
                let ci = watchers[i];
                i += 1;
                if !ok {
                    watchers[keep] = ci;
                    keep += 1;
                    continue;
                }
                let clause = &mut self.clauses[ci];
                if clause[0] == falsified {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                if self.values[first.var().0] == Some(first.is_positive()) {
                    watchers[keep] = ci;
                    keep += 1;
                    continue;
                }
                let replacement = (2..clause.len()).find(|&k| {
                    let l = clause[k];
                    self.values[l.var().0] != Some(!l.is_positive())
                });
                if let Some(k) = replacement {
                    clause.swap(1, k);
                    let new_watch = clause[1];
                    self.watches[new_watch.code()].push(ci);
                    continue;
                }
                watchers[keep] = ci;
                keep += 1;
                if !self.enqueue(first) {
                    ok = false;
                }
            }
            watchers.truncate(keep);
            self.watches[falsified.code()] = watchers;
            if !ok {
                return false;
            }
        }
        true
    }

    fn undo_to(&mut self, trail_len: usize) {
        for lit in self.trail.drain(trail_len..) {
            self.values[lit.var().0] = None;
        }
        self.qhead = trail_len;
    }

    fn run(mut self, assumptions: &[Lit]) -> SatResult {
        let roots: Vec<Lit> = self.units.iter().chain(assumptions).copied().collect();
        for lit in roots {
            if !self.enqueue(lit) {
                return SatResult::Unsat;
            }
        }
        let mut next_var = 0;
        loop {
            if !self.propagate() {
                // Chronological backtracking: flip the most recent unflipped decision.
                loop {
                    let Some(level) = self.levels.pop() else {
                        return SatResult::Unsat;
                    };
                    let decision = self.trail[level.trail_start];
                    self.undo_to(level.trail_start);
                    if !level.flipped {
                        self.levels.push(Level { trail_start: self.trail.len(), flipped: true });
                        self.enqueue(!decision);
                        next_var = 0;
                        break;
                    }
                }
                continue;
            }
            while next_var < self.values.len() && self.values[next_var].is_some() {
                next_var += 1;
            }
            if next_var == self.values.len() {
                let values = self.values.iter().map(|v| v.unwrap_or(false)).collect();
                return SatResult::Sat(Assignment(values));
            }
            self.levels.push(Level { trail_start: self.trail.len(), flipped: false });
            self.enqueue(Lit::pos(Var(next_var)));
        }
    }
}

/// All solutions of `cnf` projected onto its feature variables, as sets of
/// feature names. Enumerates with blocking clauses; only meant for small
/// formulas.
pub fn feature_projections(cnf: &CnfFormula) -> BTreeSet<BTreeSet<String>> {
    let mut work = cnf.clone();
    let features: Vec<(Var, String)> =
        cnf.feature_vars().map(|(v, n)| (v, n.to_string())).collect();
    let mut out = BTreeSet::new();
    while let SatResult::Sat(a) = Solver::new(&work).run(&[]) {
        out.insert(
            features.iter().filter(|(v, _)| a.value(*v)).map(|(_, n)| n.clone()).collect(),
        );
        if features.is_empty() {
            break;
        }
        work.add_clause(features.iter().map(|&(v, _)| Lit::new(v, !a.value(v))));
    }
    out
}
