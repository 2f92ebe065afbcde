use std::collections::BTreeSet;

use super::enumerate::{equivalent, implication_counterexamples, implies, satisfiable, SymbolicEnv};
use super::predicate::Predicate;
use super::types::{Millis, SignalId, SpeedLevel, Var};
use super::{ClauseMode, Contract, ContractError, GuaranteeClause};

const COUNTEREXAMPLE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum GapReason {
    /// No clause of the refining contract has an equivalent trigger and a strong enough obligation.
    Unmatched,
    /// Propositionally matched, but the refining clause is slower at `speed`.
    DeadlineExceeded {
        speed: SpeedLevel,
        sub: Millis,
        sup: Millis,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeGap {
    pub super_clause: usize,
    pub sub_clause: Option<usize>,
    pub reason: GapReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub holds: bool,
    pub assumption_counterexamples: Vec<SymbolicEnv>,
    pub guarantee_counterexamples: Vec<GuaranteeGap>,
}

fn eval_err(contract: &str) -> impl Fn(super::EvalError) -> ContractError + '_ {
    move |source| ContractError::Predicate {
        contract: contract.to_string(),
        source,
    }
}

/// Checks whether `sub` refines `sup`: `sub` assumes no more and guarantees no less.
///
/// Clauses are matched pairwise: a `sup` clause is covered by a `sub` clause of the same
/// mode whose trigger is equivalent, whose obligation implies (for biconditionals: is
/// equivalent to) the `sup` obligation, and whose deadline is no larger at every speed.
pub fn check_refinement(sub: &Contract, sup: &Contract) -> Result<RefinementReport, ContractError> {
    sub.validate()?;
    sup.validate()?;
    let assumption_counterexamples =
        implication_counterexamples(&sup.assumptions, &sub.assumptions, COUNTEREXAMPLE_LIMIT)
            .map_err(eval_err(&sub.name))?;

    let mut gaps = Vec::new();
    for (si, sup_clause) in sup.guarantees.iter().enumerate() {
        let mut deadline_gaps = Vec::new();
        let mut matched = false;
        for (bi, sub_clause) in sub.guarantees.iter().enumerate() {
            if sub_clause.mode != sup_clause.mode {
                continue;
            }
            if !equivalent(&sub_clause.trigger, &sup_clause.trigger).map_err(eval_err(&sub.name))? {
                continue;
            }
            let obligation_ok = match sup_clause.mode {
                ClauseMode::BoundedResponse => implies(&sub_clause.obligation, &sup_clause.obligation),
                ClauseMode::Biconditional => equivalent(&sub_clause.obligation, &sup_clause.obligation),
            }
            .map_err(eval_err(&sub.name))?;
            if !obligation_ok {
                continue;
            }
            let late: Vec<GuaranteeGap> = match (&sub_clause.deadline, &sup_clause.deadline) {
                (Some(d_sub), Some(d_sup)) => SpeedLevel::ALL
                    .iter()
                    .filter(|s| d_sub.bound(**s) > d_sup.bound(**s))
                    .map(|s| GuaranteeGap {
                        super_clause: si,
                        sub_clause: Some(bi),
                        reason: GapReason::DeadlineExceeded {
                            speed: *s,
                            sub: d_sub.bound(*s),
                            sup: d_sup.bound(*s),
                        },
                    })
                    .collect(),
                _ => Vec::new(),
            };
            if late.is_empty() {
                matched = true;
                break;
            }
            deadline_gaps.extend(late);
        }
        if !matched {
            if deadline_gaps.is_empty() {
                gaps.push(GuaranteeGap {
                    super_clause: si,
                    sub_clause: None,
                    reason: GapReason::Unmatched,
                });
            } else {
                gaps.extend(deadline_gaps);
            }
        }
    }

    Ok(RefinementReport {
        holds: assumption_counterexamples.is_empty() && gaps.is_empty(),
        assumption_counterexamples,
        guarantee_counterexamples: gaps,
    })
}

/// Fuses `first` into `second` when `first`'s obligation produces exactly the signals that
/// trigger `second`, all of them hidden by the composition.
fn fuse(
    first: &GuaranteeClause,
    second: &GuaranteeClause,
    hidden: &BTreeSet<SignalId>,
) -> Result<Option<GuaranteeClause>, super::EvalError> {
    if first.mode != ClauseMode::BoundedResponse || second.mode != ClauseMode::BoundedResponse {
        return Ok(None);
    }
    let produced = first.obligation.signals();
    if produced.is_empty() || produced != second.trigger.signals() || !produced.is_subset(hidden) {
        return Ok(None);
    }
    if !implies(&first.obligation, &second.trigger)? {
        return Ok(None);
    }
    let (Some(d1), Some(d2)) = (&first.deadline, &second.deadline) else {
        return Ok(None);
    };
    Ok(Some(GuaranteeClause::bounded(
        first.trigger.clone(),
        second.obligation.clone(),
        d1.chain(d2),
    )))
}

/// Composes two contracts into a subsystem contract.
///
/// Signals one side produces and the other consumes are hidden from the interface.
/// Clauses forming a cause-effect chain over hidden signals fuse into one clause whose
/// deadline is the pointwise sum. Assumptions are conjoined when neither guarantee reads
/// the other's assumption variables; otherwise the result assumes the weakest predicate
/// that, with each side's guarantee, implies the other side's assumption.
pub fn compose(c1: &Contract, c2: &Contract) -> Result<Contract, ContractError> {
    c1.validate()?;
    c2.validate()?;
    let shared: Vec<SignalId> = c1.outputs.intersection(&c2.outputs).copied().collect();
    if !shared.is_empty() {
        return Err(ContractError::OverlappingOutputs {
            left: c1.name.clone(),
            right: c2.name.clone(),
            signals: shared,
        });
    }

    let hidden: BTreeSet<SignalId> = c1
        .outputs
        .intersection(&c2.inputs)
        .chain(c2.outputs.intersection(&c1.inputs))
        .copied()
        .collect();
    let inputs: BTreeSet<SignalId> = c1
        .inputs
        .union(&c2.inputs)
        .filter(|s| !hidden.contains(s))
        .copied()
        .collect();
    let outputs: BTreeSet<SignalId> = c1
        .outputs
        .union(&c2.outputs)
        .filter(|s| !hidden.contains(s))
        .copied()
        .collect();
    let params = c1.params.union(&c2.params).copied().collect();
    let mut internal: BTreeSet<SignalId> = c1.internal.union(&c2.internal).copied().collect();
    internal.extend(hidden.iter().copied());

    let name = format!("{}⊗{}", c1.name, c2.name);
    let label = name.clone();
    let err = eval_err(&label);

    // clause fusion
    let mut used1 = vec![false; c1.guarantees.len()];
    let mut used2 = vec![false; c2.guarantees.len()];
    let mut fused: Vec<(usize, GuaranteeClause)> = Vec::new();
    for (i, a) in c1.guarantees.iter().enumerate() {
        for (j, b) in c2.guarantees.iter().enumerate() {
            if used1[i] || used2[j] {
                continue;
            }
            let chained = match fuse(a, b, &hidden).map_err(&err)? {
                Some(c) => Some(c),
                None => fuse(b, a, &hidden).map_err(&err)?,
            };
            if let Some(c) = chained {
                used1[i] = true;
                used2[j] = true;
                fused.push((i, c));
            }
        }
    }
    let mut guarantees = Vec::new();
    for (i, a) in c1.guarantees.iter().enumerate() {
        if let Some((_, c)) = fused.iter().find(|(fi, _)| *fi == i) {
            guarantees.push(c.clone());
        } else if !used1[i] {
            guarantees.push(a.clone());
        }
    }
    for (j, b) in c2.guarantees.iter().enumerate() {
        if !used2[j] {
            guarantees.push(b.clone());
        }
    }

    let independent = |g: BTreeSet<Var>, a: BTreeSet<Var>| g.is_disjoint(&a);
    let assumptions = if independent(c1.guarantee_vars(), c2.assumptions.vars())
        && independent(c2.guarantee_vars(), c1.assumptions.vars())
    {
        Predicate::conjoin(&c1.assumptions, &c2.assumptions)
    } else {
        Predicate::and(vec![
            Predicate::implies(c1.guarantee_predicate(), c2.assumptions.clone()),
            Predicate::implies(c2.guarantee_predicate(), c1.assumptions.clone()),
        ])
    };
    if !satisfiable(&assumptions).map_err(&err)? {
        return Err(ContractError::UnsatisfiableAssumptions {
            left: c1.name.clone(),
            right: c2.name.clone(),
        });
    }

    let composed = Contract {
        name,
        inputs,
        outputs,
        params,
        internal,
        assumptions,
        guarantees,
    };
    composed.validate()?;
    Ok(composed)
}
