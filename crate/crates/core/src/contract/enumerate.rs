//! Implication and satisfiability by exhaustive enumeration.
//!
//! Finite-domain variables (edges, colours, ejectors, speeds) range over their whole
//! domain. Every step-count comparison is an opaque Boolean atom.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::predicate::{eval_with, Predicate, Term};
use super::types::{Domain, Value, Var};
use super::EvalError;

/// A step-count equality, stored with its operands in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountAtom(pub Term, pub Term);

impl CountAtom {
    fn new(a: &Term, b: &Term) -> Self {
        if a <= b {
            CountAtom(a.clone(), b.clone())
        } else {
            CountAtom(b.clone(), a.clone())
        }
    }
}

/// One point of the finite environment space.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolicEnv {
    pub vars: BTreeMap<Var, Value>,
    pub atoms: BTreeMap<CountAtom, bool>,
}

impl fmt::Display for SymbolicEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        f.write_str("{")?;
        for (k, v) in &self.vars {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        for (CountAtom(a, b), v) in &self.atoms {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "[{a} == {b}]={v}")?;
        }
        f.write_str("}")
    }
}

pub fn eval_symbolic(pred: &Predicate, env: &SymbolicEnv) -> Result<bool, EvalError> {
    let lookup = |t: &Term| -> Result<Value, EvalError> {
        match t {
            Term::Lit(v) => Ok(*v),
            Term::Var(var) => env.vars.get(var).copied().ok_or(EvalError::Unbound(*var)),
            Term::Shifted { base, .. } => Err(EvalError::Unbound(Var::Signal(*base))),
        }
    };
    eval_with(
        pred,
        &mut |a, b| {
            if a.domain() == Domain::StepCount || b.domain() == Domain::StepCount {
                let atom = CountAtom::new(a, b);
                return env
                    .atoms
                    .get(&atom)
                    .copied()
                    .ok_or_else(|| EvalError::UnknownAtom(format!("{} == {}", atom.0, atom.1)));
            }
            Ok(lookup(a)? == lookup(b)?)
        },
        &mut |s| match env.vars.get(&Var::Signal(s)) {
            Some(Value::Edge(b)) => Ok(*b),
            Some(v) => Err(EvalError::WrongDomain {
                var: Var::Signal(s),
                value: *v,
            }),
            None => Err(EvalError::Unbound(Var::Signal(s))),
        },
    )
}

/// The environment space spanned by a set of predicates.
#[derive(Debug, Clone)]
pub struct Space {
    vars: Vec<(Var, Vec<Value>)>,
    atoms: Vec<CountAtom>,
}

impl Space {
    pub fn of(preds: &[&Predicate]) -> Space {
        let mut vars = BTreeSet::new();
        let mut atoms = BTreeSet::new();
        for p in preds {
            collect(p, &mut vars, &mut atoms);
        }
        Space {
            vars: vars
                .into_iter()
                .filter_map(|v: Var| v.domain().values().map(|vals| (v, vals)))
                .collect(),
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn size(&self) -> usize {
        let vars: usize = self.vars.iter().map(|(_, vals)| vals.len()).product();
        vars << self.atoms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = SymbolicEnv> + '_ {
        (0..self.size()).map(move |mut index| {
            let mut env = SymbolicEnv::default();
            for (var, vals) in &self.vars {
                env.vars.insert(*var, vals[index % vals.len()]);
                index /= vals.len();
            }
            for atom in &self.atoms {
                env.atoms.insert(atom.clone(), index & 1 == 1);
                index >>= 1;
            }
            env
        })
    }
}

fn collect(p: &Predicate, vars: &mut BTreeSet<Var>, atoms: &mut BTreeSet<CountAtom>) {
    match p {
        Predicate::True => {}
        Predicate::RisingEdge(s) => {
            vars.insert(Var::Signal(*s));
        }
        Predicate::Eq(a, b) | Predicate::Neq(a, b) => {
            if a.domain() == Domain::StepCount || b.domain() == Domain::StepCount {
                atoms.insert(CountAtom::new(a, b));
            } else {
                for t in [a, b] {
                    if let Term::Var(v) = t {
                        vars.insert(*v);
                    }
                }
            }
        }
        Predicate::And(items) | Predicate::Or(items) => items.iter().for_each(|q| collect(q, vars, atoms)),
        Predicate::Not(q) => collect(q, vars, atoms),
        Predicate::Implies(a, b) | Predicate::Iff(a, b) => {
            collect(a, vars, atoms);
            collect(b, vars, atoms);
        }
    }
}

/// Environments where `premise` holds but `conclusion` does not, at most `limit` of them.
pub fn implication_counterexamples(
    premise: &Predicate,
    conclusion: &Predicate,
    limit: usize,
) -> Result<Vec<SymbolicEnv>, EvalError> {
    let space = Space::of(&[premise, conclusion]);
    let mut out = Vec::new();
    for env in space.iter() {
        if eval_symbolic(premise, &env)? && !eval_symbolic(conclusion, &env)? {
            out.push(env);
            if out.len() >= limit {
                break;
            }
        }
    }
    Ok(out)
}

pub fn implies(premise: &Predicate, conclusion: &Predicate) -> Result<bool, EvalError> {
    Ok(implication_counterexamples(premise, conclusion, 1)?.is_empty())
}

pub fn equivalent(a: &Predicate, b: &Predicate) -> Result<bool, EvalError> {
    Ok(implies(a, b)? && implies(b, a)?)
}

pub fn satisfiable(p: &Predicate) -> Result<bool, EvalError> {
    let space = Space::of(&[p]);
    for env in space.iter() {
        if eval_symbolic(p, &env)? {
            return Ok(true);
        }
    }
    Ok(false)
}
