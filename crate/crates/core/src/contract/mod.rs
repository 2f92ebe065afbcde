//! Parametric assume-guarantee contracts: data model, refinement, composition and
//! hierarchy validation.

mod algebra;
pub mod enumerate;
mod hierarchy;
pub mod predicate;
mod registry;
mod types;

use std::collections::BTreeSet;

use thiserror::Error;

pub use algebra::{check_refinement, compose, GapReason, GuaranteeGap, RefinementReport};
pub use hierarchy::{validate_hierarchy, HierarchyReport, HierarchySpec, NodeReport, TimingInputs, TimingRow};
pub use predicate::{eval_predicate, Env, Predicate, Term};
pub use registry::{ContractRegistry, LatencyTables};
pub use types::{latency_bound, Colour, Domain, Ejector, LatencyFn, Millis, ParamId, SignalId, SpeedLevel, Value, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("variable {0} is not bound in the environment")]
    Unbound(Var),
    #[error("variable {var} holds {value}, outside its domain")]
    WrongDomain { var: Var, value: Value },
    #[error("cannot compare {left} with {right}: different domains")]
    DomainMismatch { left: String, right: String },
    #[error("{0} is not an edge signal")]
    NotAnEdge(SignalId),
    #[error("step-count atom {0} missing from the enumeration space")]
    UnknownAtom(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error("latency function {name} must not shrink as the belt slows: {bounds:?}")]
    NonMonotonicLatency { name: String, bounds: [Millis; 3] },
    #[error("contract {contract}: {signal} is both an input and an output")]
    InputOutputOverlap { contract: String, signal: SignalId },
    #[error("contract {contract}: {var} is referenced but not declared")]
    UndeclaredVar { contract: String, var: Var },
    #[error("contract {contract}: clause {clause} {problem}")]
    MalformedClause {
        contract: String,
        clause: usize,
        problem: &'static str,
    },
    #[error("contract {contract}: {source}")]
    Predicate {
        contract: String,
        #[source]
        source: EvalError,
    },
    #[error("cannot compose {left} and {right}: both drive {signals:?}")]
    OverlappingOutputs {
        left: String,
        right: String,
        signals: Vec<SignalId>,
    },
    #[error("cannot compose {left} and {right}: combined assumptions are unsatisfiable")]
    UnsatisfiableAssumptions { left: String, right: String },
    #[error("hierarchy: {0}")]
    Hierarchy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseMode {
    /// Whenever the trigger becomes true, the obligation must hold by the deadline.
    BoundedResponse,
    /// The trigger holds exactly when the obligation holds.
    Biconditional,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GuaranteeClause {
    pub trigger: Predicate,
    pub obligation: Predicate,
    pub deadline: Option<LatencyFn>,
    pub mode: ClauseMode,
}

impl GuaranteeClause {
    pub fn bounded(trigger: Predicate, obligation: Predicate, deadline: LatencyFn) -> Self {
        GuaranteeClause {
            trigger,
            obligation,
            deadline: Some(deadline),
            mode: ClauseMode::BoundedResponse,
        }
    }

    pub fn biconditional(trigger: Predicate, obligation: Predicate) -> Self {
        GuaranteeClause {
            trigger,
            obligation,
            deadline: None,
            mode: ClauseMode::Biconditional,
        }
    }

    /// Untimed propositional reading of the clause.
    pub fn as_predicate(&self) -> Predicate {
        match self.mode {
            ClauseMode::BoundedResponse => Predicate::implies(self.trigger.clone(), self.obligation.clone()),
            ClauseMode::Biconditional => Predicate::iff(self.trigger.clone(), self.obligation.clone()),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut v = self.trigger.vars();
        v.extend(self.obligation.vars());
        v
    }
}

impl std::fmt::Display for GuaranteeClause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.mode, &self.deadline) {
            (ClauseMode::BoundedResponse, Some(d)) => {
                write!(f, "{} ⇒ {} within {}(M_S)", self.trigger, self.obligation, d.name())
            }
            _ => write!(f, "{} ⇔ {}", self.trigger, self.obligation),
        }
    }
}

/// A named parametric assume-guarantee contract.
///
/// `internal` lists signals hidden by composition that predicates may still mention.
#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub name: String,
    pub inputs: BTreeSet<SignalId>,
    pub outputs: BTreeSet<SignalId>,
    pub params: BTreeSet<ParamId>,
    pub internal: BTreeSet<SignalId>,
    pub assumptions: Predicate,
    pub guarantees: Vec<GuaranteeClause>,
}

impl Contract {
    pub fn new(
        name: impl Into<String>,
        inputs: impl IntoIterator<Item = SignalId>,
        outputs: impl IntoIterator<Item = SignalId>,
        params: impl IntoIterator<Item = ParamId>,
        assumptions: Predicate,
        guarantees: Vec<GuaranteeClause>,
    ) -> Result<Contract, ContractError> {
        let c = Contract {
            name: name.into(),
            inputs: inputs.into_iter().collect(),
            outputs: outputs.into_iter().collect(),
            params: params.into_iter().collect(),
            internal: BTreeSet::new(),
            assumptions,
            guarantees,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if let Some(s) = self.inputs.intersection(&self.outputs).next() {
            return Err(ContractError::InputOutputOverlap {
                contract: self.name.clone(),
                signal: *s,
            });
        }
        let wrap = |source| ContractError::Predicate {
            contract: self.name.clone(),
            source,
        };
        self.assumptions.type_check().map_err(wrap)?;
        let mut referenced = self.assumptions.vars();
        for (i, clause) in self.guarantees.iter().enumerate() {
            clause.trigger.type_check().map_err(wrap)?;
            clause.obligation.type_check().map_err(wrap)?;
            let problem = match (clause.mode, &clause.deadline) {
                (ClauseMode::BoundedResponse, None) => Some("is a bounded response without a deadline"),
                (ClauseMode::Biconditional, Some(_)) => Some("is a biconditional with a deadline"),
                _ => None,
            };
            if let Some(problem) = problem {
                return Err(ContractError::MalformedClause {
                    contract: self.name.clone(),
                    clause: i,
                    problem,
                });
            }
            referenced.extend(clause.vars());
        }
        for var in referenced {
            let declared = match var {
                Var::Signal(s) => self.inputs.contains(&s) || self.outputs.contains(&s) || self.internal.contains(&s),
                Var::Param(p) => self.params.contains(&p),
            };
            if !declared {
                return Err(ContractError::UndeclaredVar {
                    contract: self.name.clone(),
                    var,
                });
            }
        }
        Ok(())
    }

    /// Conjunction of the untimed readings of all clauses.
    pub fn guarantee_predicate(&self) -> Predicate {
        match self.guarantees.len() {
            0 => Predicate::True,
            1 => self.guarantees[0].as_predicate(),
            _ => Predicate::And(self.guarantees.iter().map(GuaranteeClause::as_predicate).collect()),
        }
    }

    pub fn guarantee_vars(&self) -> BTreeSet<Var> {
        self.guarantees.iter().flat_map(GuaranteeClause::vars).collect()
    }

    /// Copy of the contract with every deadline multiplied by `factor`.
    pub fn with_scaled_deadlines(&self, factor: Millis) -> Contract {
        let mut c = self.clone();
        for clause in &mut c.guarantees {
            clause.deadline = clause.deadline.as_ref().map(|d| d.scaled(factor));
        }
        c
    }
}
