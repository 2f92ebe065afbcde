//! Boolean predicates over plant signals and contract parameters.
//!
//! Atoms are rising edges and (in)equalities between terms. A term is a variable, a
//! literal, or a step count shifted by a constant offset (`SC_CP + Offset`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::types::{Domain, ParamId, SignalId, Value, Var};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    Lit(Value),
    /// `base + offset` over a step-count signal. Undefined while `base` is uninitialised (zero).
    Shifted {
        base: SignalId,
        offset: u64,
    },
}

impl Term {
    pub fn signal(s: SignalId) -> Term {
        Term::Var(Var::Signal(s))
    }

    pub fn param(p: ParamId) -> Term {
        Term::Var(Var::Param(p))
    }

    pub fn domain(&self) -> Domain {
        match self {
            Term::Var(v) => v.domain(),
            Term::Lit(v) => v.domain(),
            Term::Shifted { .. } => Domain::StepCount,
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(*v);
            }
            Term::Shifted { base, .. } => {
                out.insert(Var::Signal(*base));
            }
            Term::Lit(_) => {}
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => v.fmt(f),
            Term::Lit(v) => v.fmt(f),
            Term::Shifted { base, offset } => write!(f, "{base} + {offset}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    True,
    RisingEdge(SignalId),
    Eq(Term, Term),
    Neq(Term, Term),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
    Implies(Box<Predicate>, Box<Predicate>),
    Iff(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn eq(a: Term, b: Term) -> Predicate {
        Predicate::Eq(a, b)
    }

    pub fn neq(a: Term, b: Term) -> Predicate {
        Predicate::Neq(a, b)
    }

    pub fn and(items: Vec<Predicate>) -> Predicate {
        Predicate::And(items)
    }

    pub fn or(items: Vec<Predicate>) -> Predicate {
        Predicate::Or(items)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(p: Predicate) -> Predicate {
        Predicate::Not(Box::new(p))
    }

    pub fn implies(a: Predicate, b: Predicate) -> Predicate {
        Predicate::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Predicate, b: Predicate) -> Predicate {
        Predicate::Iff(Box::new(a), Box::new(b))
    }

    /// `(M_S == S1) ∨ (M_S == S2) ∨ (M_S == S3)`
    pub fn speed_domain() -> Predicate {
        Predicate::Or(
            super::SpeedLevel::ALL
                .iter()
                .map(|s| Predicate::eq(Term::param(ParamId::MotorSpeed), Term::Lit(Value::Speed(*s))))
                .collect(),
        )
    }

    /// Conjunction that drops `True` operands and duplicates.
    pub fn conjoin(a: &Predicate, b: &Predicate) -> Predicate {
        match (a, b) {
            (Predicate::True, p) | (p, Predicate::True) => p.clone(),
            (p, q) if p == q => p.clone(),
            (p, q) => Predicate::And(vec![p.clone(), q.clone()]),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn signals(&self) -> BTreeSet<SignalId> {
        self.vars()
            .into_iter()
            .filter_map(|v| match v {
                Var::Signal(s) => Some(s),
                Var::Param(_) => None,
            })
            .collect()
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Predicate::True => {}
            Predicate::RisingEdge(s) => {
                out.insert(Var::Signal(*s));
            }
            Predicate::Eq(a, b) | Predicate::Neq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Predicate::And(items) | Predicate::Or(items) => {
                items.iter().for_each(|p| p.collect_vars(out));
            }
            Predicate::Not(p) => p.collect_vars(out),
            Predicate::Implies(a, b) | Predicate::Iff(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Checks that edge atoms name edge signals and that compared terms share a domain.
    pub fn type_check(&self) -> Result<(), EvalError> {
        match self {
            Predicate::True => Ok(()),
            Predicate::RisingEdge(s) => {
                if s.domain() == Domain::Edge {
                    Ok(())
                } else {
                    Err(EvalError::NotAnEdge(*s))
                }
            }
            Predicate::Eq(a, b) | Predicate::Neq(a, b) => {
                if a.domain() == b.domain() {
                    Ok(())
                } else {
                    Err(EvalError::DomainMismatch {
                        left: a.to_string(),
                        right: b.to_string(),
                    })
                }
            }
            Predicate::And(items) | Predicate::Or(items) => items.iter().try_for_each(|p| p.type_check()),
            Predicate::Not(p) => p.type_check(),
            Predicate::Implies(a, b) | Predicate::Iff(a, b) => {
                a.type_check()?;
                b.type_check()
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, items: &[Predicate], op: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, p) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        }
        match self {
            Predicate::True => f.write_str("True"),
            Predicate::RisingEdge(s) => write!(f, "↑{s}"),
            Predicate::Eq(a, b) => write!(f, "({a} == {b})"),
            Predicate::Neq(a, b) => write!(f, "({a} != {b})"),
            Predicate::And(items) => join(f, items, "∧"),
            Predicate::Or(items) => join(f, items, "∨"),
            Predicate::Not(p) => write!(f, "¬{p}"),
            Predicate::Implies(a, b) => write!(f, "({a} ⇒ {b})"),
            Predicate::Iff(a, b) => write!(f, "({a} ⇔ {b})"),
        }
    }
}

/// A concrete assignment of values to signals and parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Env {
    values: BTreeMap<Var, Value>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, var: Var, value: Value) -> &mut Self {
        self.values.insert(var, value);
        self
    }

    pub fn with(mut self, var: Var, value: Value) -> Self {
        self.values.insert(var, value);
        self
    }

    pub fn with_signal(self, s: SignalId, value: Value) -> Self {
        self.with(Var::Signal(s), value)
    }

    pub fn get(&self, var: Var) -> Option<Value> {
        self.values.get(&var).copied()
    }
}

/// Evaluates `pred` under `env`.
pub fn eval_predicate(pred: &Predicate, env: &Env) -> Result<bool, EvalError> {
    eval_with(
        pred,
        &mut |a, b| concrete_eq(a, b, env),
        &mut |s| match env.get(Var::Signal(s)) {
            Some(Value::Edge(b)) => Ok(b),
            Some(other) => Err(EvalError::WrongDomain {
                var: Var::Signal(s),
                value: other,
            }),
            None => Err(EvalError::Unbound(Var::Signal(s))),
        },
    )
}

/// Shared Boolean structure; atoms are delegated to the two callbacks.
pub(crate) fn eval_with(
    pred: &Predicate,
    eq: &mut dyn FnMut(&Term, &Term) -> Result<bool, EvalError>,
    edge: &mut dyn FnMut(SignalId) -> Result<bool, EvalError>,
) -> Result<bool, EvalError> {
    Ok(match pred {
        Predicate::True => true,
        Predicate::RisingEdge(s) => edge(*s)?,
        Predicate::Eq(a, b) => eq(a, b)?,
        Predicate::Neq(a, b) => !eq(a, b)?,
        Predicate::And(items) => {
            for p in items {
                if !eval_with(p, eq, edge)? {
                    return Ok(false);
                }
            }
            true
        }
        Predicate::Or(items) => {
            for p in items {
                if eval_with(p, eq, edge)? {
                    return Ok(true);
                }
            }
            false
        }
        Predicate::Not(p) => !eval_with(p, eq, edge)?,
        Predicate::Implies(a, b) => !eval_with(a, eq, edge)? || eval_with(b, eq, edge)?,
        Predicate::Iff(a, b) => eval_with(a, eq, edge)? == eval_with(b, eq, edge)?,
    })
}

fn resolve(term: &Term, env: &Env) -> Result<Option<Value>, EvalError> {
    match term {
        Term::Lit(v) => Ok(Some(*v)),
        Term::Var(var) => env.get(*var).map(Some).ok_or(EvalError::Unbound(*var)),
        Term::Shifted { base, offset } => match env.get(Var::Signal(*base)) {
            Some(Value::Count(0)) => Ok(None),
            Some(Value::Count(n)) => Ok(Some(Value::Count(n + offset))),
            Some(other) => Err(EvalError::WrongDomain {
                var: Var::Signal(*base),
                value: other,
            }),
            None => Err(EvalError::Unbound(Var::Signal(*base))),
        },
    }
}

fn concrete_eq(a: &Term, b: &Term, env: &Env) -> Result<bool, EvalError> {
    let (va, vb) = (resolve(a, env)?, resolve(b, env)?);
    match (va, vb) {
        (Some(x), Some(y)) => {
            if x.domain() != y.domain() {
                return Err(EvalError::DomainMismatch {
                    left: a.to_string(),
                    right: b.to_string(),
                });
            }
            Ok(x == y)
        }
        // an undefined shifted count equals nothing
        _ => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::types::{Colour, SpeedLevel};

    fn speed_env(s: SpeedLevel) -> Env {
        Env::new().with(Var::Param(ParamId::MotorSpeed), Value::Speed(s))
    }

    #[test]
    fn true_holds_everywhere() {
        assert!(eval_predicate(&Predicate::True, &Env::new()).unwrap());
    }

    #[test]
    fn speed_domain_holds_at_s2() {
        assert!(eval_predicate(&Predicate::speed_domain(), &speed_env(SpeedLevel::S2)).unwrap());
    }

    #[test]
    fn conjunction_with_null_colour_is_false() {
        let p = Predicate::and(vec![
            Predicate::neq(Term::signal(SignalId::CvCp), Term::Lit(Value::Colour(None))),
            Predicate::neq(Term::signal(SignalId::ScCp), Term::Lit(Value::Count(0))),
        ]);
        let env = Env::new()
            .with_signal(SignalId::CvCp, Value::Colour(None))
            .with_signal(SignalId::ScCp, Value::Count(7));
        assert!(!eval_predicate(&p, &env).unwrap());
        let env = env.with_signal(SignalId::CvCp, Value::Colour(Some(Colour::W)));
        assert!(eval_predicate(&p, &env).unwrap());
    }

    #[test]
    fn unbound_variable_is_named() {
        let p = Predicate::RisingEdge(SignalId::Ls1);
        match eval_predicate(&p, &Env::new()) {
            Err(EvalError::Unbound(v)) => assert_eq!(v, Var::Signal(SignalId::Ls1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn iff_is_bidirectional() {
        let p = Predicate::iff(Predicate::RisingEdge(SignalId::Ls2), Predicate::True);
        let on = Env::new().with_signal(SignalId::Ls2, Value::Edge(true));
        let off = Env::new().with_signal(SignalId::Ls2, Value::Edge(false));
        assert!(eval_predicate(&p, &on).unwrap());
        assert!(!eval_predicate(&p, &off).unwrap());
    }

    #[test]
    fn shifted_count_is_undefined_when_uninitialised() {
        let p = Predicate::eq(
            Term::signal(SignalId::Sc),
            Term::Shifted {
                base: SignalId::ScCp,
                offset: 20,
            },
        );
        let env = Env::new()
            .with_signal(SignalId::Sc, Value::Count(20))
            .with_signal(SignalId::ScCp, Value::Count(0));
        assert!(!eval_predicate(&p, &env).unwrap());
        let env = env
            .with_signal(SignalId::ScCp, Value::Count(5))
            .with_signal(SignalId::Sc, Value::Count(25));
        assert!(eval_predicate(&p, &env).unwrap());
    }

    #[test]
    fn mismatched_domains_fail_type_check() {
        let p = Predicate::eq(Term::signal(SignalId::CvCp), Term::Lit(Value::Speed(SpeedLevel::S1)));
        assert!(p.type_check().is_err());
    }
}
