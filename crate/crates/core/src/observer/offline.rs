//! Whole-trace checker used as an oracle for the incremental observers.
//!
//! Instead of carrying state from event to event, it rebuilds each token's environment
//! from the trace prefix and then finds activations, resolutions and windows by scanning.

use std::collections::{BTreeMap, BTreeSet};

use crate::contract::{eval_predicate, ClauseMode, Contract, Domain, Millis, SignalId, SpeedLevel, Value};

use super::{
    bicond_outcome, response_outcome, token_env, Event, EventKind, ObserverError, ObserverOutcome, ParamHistory,
    TokenId, ViolationKind,
};

/// Environment of `token` at trace index `i`, folded from scratch over the prefix.
fn env_at(trace: &[Event], token: TokenId, i: usize, params: &ParamHistory) -> crate::contract::Env {
    let mut values = BTreeMap::new();
    let mut sc = 0;
    for e in &trace[..=i] {
        if let EventKind::Signal { signal, value } = &e.kind {
            if signal.is_global() {
                if let Value::Count(n) = value {
                    sc = *n;
                }
            } else if e.token == Some(token) && signal.domain() != Domain::Edge {
                values.insert(*signal, *value);
            }
        }
    }
    let current = &trace[i];
    let edge: Option<SignalId> = if current.token == Some(token) {
        current.edge_signal()
    } else {
        None
    };
    token_env(&values, sc, edge, params.at(current.t))
}

/// Checks a complete trace against `contract`, returning the same outcomes, in the same
/// order, as feeding it event by event to a fresh observer and ending at the last event.
pub fn offline_check(
    contract: &Contract,
    trace: &[Event],
    params: &[(Millis, SpeedLevel)],
) -> Result<Vec<ObserverOutcome>, ObserverError> {
    contract.validate()?;
    for w in trace.windows(2) {
        if (w[1].t, w[1].seq) <= (w[0].t, w[0].seq) {
            return Err(ObserverError::OutOfOrder {
                t: w[1].t,
                seq: w[1].seq,
                last_t: w[0].t,
                last_seq: w[0].seq,
            });
        }
    }
    for e in trace {
        if let EventKind::Signal { signal, .. } = &e.kind {
            if !signal.is_global() && e.token.is_none() {
                return Err(ObserverError::MissingToken(*signal));
            }
        }
    }
    let history = ParamHistory::from_entries(params);
    let name = &contract.name;
    let end_t = trace.last().map_or(0, |e| e.t);
    let end_index = trace.len();

    let tokens: BTreeSet<TokenId> = trace
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Signal { .. } | EventKind::Departed { .. }))
        .filter(|e| !matches!(&e.kind, EventKind::Signal { signal, .. } if signal.is_global()))
        .filter_map(|e| e.token)
        .collect();

    // (event index, token, clause, order within the step)
    let mut keyed: Vec<((usize, TokenId, usize, u8), ObserverOutcome)> = Vec::new();

    for &token in &tokens {
        let first = trace
            .iter()
            .position(|e| {
                e.token == Some(token) && !matches!(&e.kind, EventKind::Signal { signal, .. } if signal.is_global())
            })
            .expect("token appears");
        let departure = (first..trace.len())
            .find(|&i| trace[i].token == Some(token) && matches!(trace[i].kind, EventKind::Departed { .. }));
        let stop = departure.unwrap_or(trace.len());
        let steps: Vec<usize> = (first..stop)
            .filter(|&i| match &trace[i].kind {
                EventKind::Signal { signal, .. } => signal.is_global() || trace[i].token == Some(token),
                _ => false,
            })
            .collect();
        let (close_index, close_t) = match departure {
            Some(d) => (d, trace[d].t),
            None => (end_index, end_t),
        };

        for (ci, clause) in contract.guarantees.iter().enumerate() {
            let mut trig = Vec::with_capacity(steps.len());
            let mut obl = Vec::with_capacity(steps.len());
            for &i in &steps {
                let env = env_at(trace, token, i, &history);
                trig.push(eval_predicate(&clause.trigger, &env)?);
                obl.push(eval_predicate(&clause.obligation, &env)?);
            }
            match clause.mode {
                ClauseMode::BoundedResponse => {
                    let mut p = 0;
                    while p < steps.len() {
                        let rising = trig[p] && (p == 0 || !trig[p - 1]);
                        if !rising {
                            p += 1;
                            continue;
                        }
                        let armed_at = trace[steps[p]].t;
                        let speed = history.at(armed_at);
                        let deadline = clause.deadline.as_ref().map_or(0, |d| d.bound(speed));
                        match (p..steps.len()).find(|&q| obl[q]) {
                            Some(q) => {
                                let t = trace[steps[q]].t;
                                keyed.push((
                                    (steps[q], token, ci, 1),
                                    response_outcome(name, ci, token, t, armed_at, deadline, Some(t - armed_at)),
                                ));
                                p = q + 1;
                            }
                            None => {
                                keyed.push((
                                    (close_index, token, ci, 1),
                                    response_outcome(name, ci, token, close_t, armed_at, deadline, None),
                                ));
                                break;
                            }
                        }
                    }
                }
                ClauseMode::Biconditional => {
                    let mut a = 0;
                    while a < steps.len() {
                        if !obl[a] {
                            a += 1;
                            continue;
                        }
                        let b = (a..steps.len()).take_while(|&q| obl[q]).last().expect("non-empty run");
                        let triggered = (a..=b).any(|q| trig[q]);
                        if !triggered {
                            if b + 1 < steps.len() {
                                let c = steps[b + 1];
                                keyed.push((
                                    (c, token, ci, 0),
                                    bicond_outcome(name, ci, token, trace[c].t, Some(ViolationKind::MissingTrigger)),
                                ));
                            } else if departure.is_some() {
                                keyed.push((
                                    (close_index, token, ci, 0),
                                    bicond_outcome(name, ci, token, close_t, Some(ViolationKind::MissingTrigger)),
                                ));
                            }
                        }
                        a = b + 1;
                    }
                    for (p, &i) in steps.iter().enumerate() {
                        if trig[p] {
                            let kind = (!obl[p]).then_some(ViolationKind::UnexpectedTrigger);
                            keyed.push(((i, token, ci, 1), bicond_outcome(name, ci, token, trace[i].t, kind)));
                        }
                    }
                }
            }
        }
    }

    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, o)| o).collect())
}
