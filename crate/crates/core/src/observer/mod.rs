//! Runtime observers: one timed state machine per guarantee clause, keyed by token.
//!
//! Bounded-response clauses arm when their trigger rises and resolve when the obligation
//! holds. A late obligation is reported when it finally arrives, carrying the true
//! latency; one that never arrives is reported when the token leaves the belt or the
//! trace ends. Biconditional clauses are checked at every event: a trigger outside an
//! obligation window is unexpected, and a window that closes without a trigger is a
//! missing trigger.

mod offline;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{
    eval_predicate, ClauseMode, Contract, ContractError, Domain, Env, EvalError, Millis, ParamId, SignalId, SpeedLevel,
    Value, Var,
};

pub use offline::offline_check;

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Departure {
    Binned { bin: u8 },
    RanOff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Signal {
        signal: SignalId,
        value: Value,
    },
    /// The motor speed took effect at a step boundary.
    SpeedChanged {
        speed: SpeedLevel,
    },
    /// The token reached the colour processor, which started working on it.
    CpActivated,
    /// The token left the belt.
    Departed {
        departure: Departure,
    },
}

/// One entry of the plant trace. Traces are ordered by `(t, seq)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub t: Millis,
    pub seq: u64,
    pub token: Option<TokenId>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn signal(t: Millis, seq: u64, token: Option<TokenId>, signal: SignalId, value: Value) -> Event {
        Event {
            t,
            seq,
            token,
            kind: EventKind::Signal { signal, value },
        }
    }

    pub fn edge(t: Millis, seq: u64, token: TokenId, signal: SignalId) -> Event {
        Event::signal(t, seq, Some(token), signal, Value::Edge(true))
    }

    /// The edge signal this event raises for its token, if any.
    pub(crate) fn edge_signal(&self) -> Option<SignalId> {
        match &self.kind {
            EventKind::Signal { signal, .. } if signal.domain() == Domain::Edge => Some(*signal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DeadlineExceeded,
    MissingTrigger,
    UnexpectedTrigger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverOutcome {
    pub contract: String,
    pub clause: usize,
    pub verdict: Verdict,
    /// Measured latency `C_L` of a bounded-response activation.
    pub observed_latency: Option<Millis>,
    pub violation_kind: Option<ViolationKind>,
    pub excess: Option<Millis>,
    pub token: Option<TokenId>,
    pub t: Millis,
    pub armed_at: Option<Millis>,
}

impl ObserverOutcome {
    pub fn is_violation(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("event at t={t} seq={seq} arrives after t={last_t} seq={last_seq}")]
    OutOfOrder {
        t: Millis,
        seq: u64,
        last_t: Millis,
        last_seq: u64,
    },
    #[error("signal {0} belongs to a token but the event carries none")]
    MissingToken(SignalId),
    #[error("parameter update at t={t} would apply retroactively (last event at t={last_t})")]
    RetroactiveParam { t: Millis, last_t: Millis },
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObserverInput {
    Event(Event),
    /// Clock advance without a plant event.
    Advance(Millis),
    /// End of trace: still-armed activations are declared violated.
    End(Millis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseState {
    Idle,
    Armed { armed_at: Millis, deadline: Millis },
}

#[derive(Debug, Clone)]
enum Monitor {
    Response { trigger_was: bool, state: ClauseState },
    Bicond { window_open: bool, triggered: bool },
}

#[derive(Debug, Clone)]
struct TokenTrack {
    values: BTreeMap<SignalId, Value>,
    monitors: Vec<Monitor>,
    departed: bool,
}

/// Time-ordered parameter values; the entry in force at `t` is the last one at or before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamHistory(Vec<(Millis, SpeedLevel)>);

impl ParamHistory {
    pub fn new(initial: SpeedLevel) -> Self {
        ParamHistory(vec![(0, initial)])
    }

    pub fn from_entries(entries: &[(Millis, SpeedLevel)]) -> Self {
        let mut v = vec![(0, SpeedLevel::S1)];
        v.extend_from_slice(entries);
        v.sort_by_key(|(t, _)| *t);
        ParamHistory(v)
    }

    pub fn push(&mut self, t: Millis, speed: SpeedLevel) {
        self.0.push((t, speed));
    }

    pub fn at(&self, t: Millis) -> SpeedLevel {
        self.0
            .iter()
            .rev()
            .find(|(at, _)| *at <= t)
            .map(|(_, s)| *s)
            .unwrap_or(SpeedLevel::S1)
    }

    pub fn current(&self) -> SpeedLevel {
        self.0.last().map(|(_, s)| *s).unwrap_or(SpeedLevel::S1)
    }
}

/// Environment a token's clauses are evaluated in.
pub(crate) fn token_env(values: &BTreeMap<SignalId, Value>, sc: u64, edge: Option<SignalId>, speed: SpeedLevel) -> Env {
    let mut env = Env::new();
    for s in SignalId::ALL {
        let v = match s.domain() {
            Domain::Edge => Value::Edge(edge == Some(s)),
            _ if s == SignalId::Sc => Value::Count(sc),
            d => values.get(&s).copied().unwrap_or(Value::unset(d)),
        };
        env.bind(Var::Signal(s), v);
    }
    env.bind(Var::Param(ParamId::MotorSpeed), Value::Speed(speed));
    env
}

pub(crate) fn response_outcome(
    contract: &str,
    clause: usize,
    token: TokenId,
    t: Millis,
    armed_at: Millis,
    deadline: Millis,
    latency: Option<Millis>,
) -> ObserverOutcome {
    let late = latency.is_none_or(|l| l > deadline);
    ObserverOutcome {
        contract: contract.to_string(),
        clause,
        verdict: if late { Verdict::Violated } else { Verdict::Satisfied },
        observed_latency: latency,
        violation_kind: late.then_some(ViolationKind::DeadlineExceeded),
        excess: if late { latency.map(|l| l - deadline) } else { None },
        token: Some(token),
        t,
        armed_at: Some(armed_at),
    }
}

pub(crate) fn bicond_outcome(
    contract: &str,
    clause: usize,
    token: TokenId,
    t: Millis,
    kind: Option<ViolationKind>,
) -> ObserverOutcome {
    ObserverOutcome {
        contract: contract.to_string(),
        clause,
        verdict: if kind.is_some() {
            Verdict::Violated
        } else {
            Verdict::Satisfied
        },
        observed_latency: None,
        violation_kind: kind,
        excess: None,
        token: Some(token),
        t,
        armed_at: None,
    }
}

/// Incremental monitor for one contract.
#[derive(Debug, Clone)]
pub struct Observer {
    contract: Contract,
    params: ParamHistory,
    sc: u64,
    tokens: BTreeMap<TokenId, TokenTrack>,
    last: Option<(Millis, u64)>,
}

/// Builds an observer with one state machine per guarantee clause.
pub fn compile_observer(contract: &Contract) -> Result<Observer, ObserverError> {
    contract.validate()?;
    Ok(Observer {
        contract: contract.clone(),
        params: ParamHistory::new(SpeedLevel::S1),
        sc: 0,
        tokens: BTreeMap::new(),
        last: None,
    })
}

impl Observer {
    pub fn contract(&self) -> &Contract {
        &self.contract
    }

    pub fn speed(&self) -> SpeedLevel {
        self.params.current()
    }

    /// Sets the motor-speed parameter for activations at or after `t`.
    pub fn set_param(&mut self, t: Millis, speed: SpeedLevel) -> Result<(), ObserverError> {
        if let Some((last_t, _)) = self.last {
            if t < last_t {
                return Err(ObserverError::RetroactiveParam { t, last_t });
            }
        }
        self.params.push(t, speed);
        Ok(())
    }

    /// State of clause `clause` for `token`; `None` for unknown tokens or biconditionals.
    pub fn clause_state(&self, token: TokenId, clause: usize) -> Option<ClauseState> {
        match self.tokens.get(&token)?.monitors.get(clause)? {
            Monitor::Response { state, .. } => Some(*state),
            Monitor::Bicond { .. } => None,
        }
    }

    /// Activations that are armed but unresolved, as `Pending` outcomes.
    pub fn pending(&self, t: Millis) -> Vec<ObserverOutcome> {
        let mut out = Vec::new();
        for (&token, track) in &self.tokens {
            for (i, m) in track.monitors.iter().enumerate() {
                if let Monitor::Response {
                    state: ClauseState::Armed { armed_at, .. },
                    ..
                } = m
                {
                    out.push(ObserverOutcome {
                        contract: self.contract.name.clone(),
                        clause: i,
                        verdict: Verdict::Pending,
                        observed_latency: None,
                        violation_kind: None,
                        excess: None,
                        token: Some(token),
                        t,
                        armed_at: Some(*armed_at),
                    });
                }
            }
        }
        out
    }

    pub fn observe(&mut self, input: ObserverInput) -> Result<Vec<ObserverOutcome>, ObserverError> {
        match input {
            ObserverInput::Event(e) => self.on_event(&e),
            ObserverInput::Advance(t) => {
                self.check_time(t, None)?;
                Ok(Vec::new())
            }
            ObserverInput::End(t) => {
                self.check_time(t, None)?;
                let mut out = Vec::new();
                let ids: Vec<TokenId> = self.tokens.keys().copied().collect();
                for id in ids {
                    if !self.tokens[&id].departed {
                        self.close_token(id, t, false, &mut out);
                    }
                }
                Ok(out)
            }
        }
    }

    fn check_time(&mut self, t: Millis, seq: Option<u64>) -> Result<(), ObserverError> {
        if let Some((last_t, last_seq)) = self.last {
            let bad = match seq {
                Some(seq) => (t, seq) <= (last_t, last_seq),
                None => t < last_t,
            };
            if bad {
                return Err(ObserverError::OutOfOrder {
                    t,
                    seq: seq.unwrap_or(last_seq),
                    last_t,
                    last_seq,
                });
            }
        }
        self.last = Some((t, seq.unwrap_or_else(|| self.last.map_or(0, |l| l.1))));
        Ok(())
    }

    fn new_track(&self) -> TokenTrack {
        TokenTrack {
            values: BTreeMap::new(),
            monitors: self
                .contract
                .guarantees
                .iter()
                .map(|c| match c.mode {
                    ClauseMode::BoundedResponse => Monitor::Response {
                        trigger_was: false,
                        state: ClauseState::Idle,
                    },
                    ClauseMode::Biconditional => Monitor::Bicond {
                        window_open: false,
                        triggered: false,
                    },
                })
                .collect(),
            departed: false,
        }
    }

    fn on_event(&mut self, e: &Event) -> Result<Vec<ObserverOutcome>, ObserverError> {
        self.check_time(e.t, Some(e.seq))?;
        let mut out = Vec::new();
        match &e.kind {
            EventKind::Signal { signal, value } if signal.is_global() => {
                if let Value::Count(n) = value {
                    self.sc = *n;
                }
                let live: Vec<TokenId> = self
                    .tokens
                    .iter()
                    .filter(|(_, tr)| !tr.departed)
                    .map(|(id, _)| *id)
                    .collect();
                for id in live {
                    self.step_token(id, None, e.t, &mut out)?;
                }
            }
            EventKind::Signal { signal, value } => {
                let Some(id) = e.token else {
                    return Err(ObserverError::MissingToken(*signal));
                };
                if !self.tokens.contains_key(&id) {
                    let track = self.new_track();
                    self.tokens.insert(id, track);
                }
                let track = self.tokens.get_mut(&id).expect("inserted");
                if track.departed {
                    return Ok(out);
                }
                if signal.domain() != Domain::Edge {
                    track.values.insert(*signal, *value);
                }
                self.step_token(id, e.edge_signal(), e.t, &mut out)?;
            }
            EventKind::Departed { .. } => {
                if let Some(id) = e.token {
                    if !self.tokens.contains_key(&id) {
                        let track = self.new_track();
                        self.tokens.insert(id, track);
                    }
                    if !self.tokens[&id].departed {
                        self.close_token(id, e.t, true, &mut out);
                    }
                }
            }
            EventKind::SpeedChanged { .. } | EventKind::CpActivated => {}
        }
        Ok(out)
    }

    fn step_token(
        &mut self,
        id: TokenId,
        edge: Option<SignalId>,
        t: Millis,
        out: &mut Vec<ObserverOutcome>,
    ) -> Result<(), ObserverError> {
        let speed = self.params.at(t);
        let track = self.tokens.get_mut(&id).expect("tracked token");
        let env = token_env(&track.values, self.sc, edge, speed);
        let name = &self.contract.name;
        for (i, (clause, monitor)) in self
            .contract
            .guarantees
            .iter()
            .zip(track.monitors.iter_mut())
            .enumerate()
        {
            let trig = eval_predicate(&clause.trigger, &env)?;
            match monitor {
                Monitor::Response { trigger_was, state } => {
                    let rising = trig && !*trigger_was;
                    *trigger_was = trig;
                    if rising && *state == ClauseState::Idle {
                        let deadline = clause.deadline.as_ref().map_or(0, |d| d.bound(speed));
                        *state = ClauseState::Armed { armed_at: t, deadline };
                    }
                    if let ClauseState::Armed { armed_at, deadline } = *state {
                        if eval_predicate(&clause.obligation, &env)? {
                            out.push(response_outcome(name, i, id, t, armed_at, deadline, Some(t - armed_at)));
                            *state = ClauseState::Idle;
                        }
                    }
                }
                Monitor::Bicond { window_open, triggered } => {
                    let obl = eval_predicate(&clause.obligation, &env)?;
                    if obl && !*window_open {
                        *window_open = true;
                        *triggered = false;
                    } else if !obl && *window_open {
                        *window_open = false;
                        if !*triggered {
                            out.push(bicond_outcome(name, i, id, t, Some(ViolationKind::MissingTrigger)));
                        }
                    }
                    if trig {
                        if obl {
                            *triggered = true;
                            out.push(bicond_outcome(name, i, id, t, None));
                        } else {
                            out.push(bicond_outcome(name, i, id, t, Some(ViolationKind::UnexpectedTrigger)));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves a token's open activations at departure (`departed`) or trace end.
    fn close_token(&mut self, id: TokenId, t: Millis, departed: bool, out: &mut Vec<ObserverOutcome>) {
        let name = self.contract.name.clone();
        let track = self.tokens.get_mut(&id).expect("tracked token");
        for (i, monitor) in track.monitors.iter_mut().enumerate() {
            match monitor {
                Monitor::Response { state, .. } => {
                    if let ClauseState::Armed { armed_at, deadline } = *state {
                        out.push(response_outcome(&name, i, id, t, armed_at, deadline, None));
                        *state = ClauseState::Idle;
                    }
                }
                Monitor::Bicond { window_open, triggered } => {
                    if departed && *window_open && !*triggered {
                        out.push(bicond_outcome(&name, i, id, t, Some(ViolationKind::MissingTrigger)));
                    }
                    *window_open = false;
                }
            }
        }
        if departed {
            track.departed = true;
        }
    }
}

/// Feeds a whole trace through a fresh observer, then ends it at the last event time.
pub fn observe_trace(
    contract: &Contract,
    trace: &[Event],
    params: &[(Millis, SpeedLevel)],
) -> Result<Vec<ObserverOutcome>, ObserverError> {
    let mut obs = compile_observer(contract)?;
    let mut pending: Vec<(Millis, SpeedLevel)> = params.to_vec();
    pending.sort_by_key(|(t, _)| *t);
    let mut pending = pending.into_iter().peekable();
    let mut out = Vec::new();
    for e in trace {
        while let Some((t, s)) = pending.next_if(|(t, _)| *t <= e.t) {
            obs.set_param(t, s)?;
        }
        out.extend(obs.observe(ObserverInput::Event(e.clone()))?);
    }
    let end = trace.last().map_or(0, |e| e.t);
    out.extend(obs.observe(ObserverInput::End(end))?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{Colour, ContractRegistry, LatencyTables};

    fn registry() -> ContractRegistry {
        ContractRegistry::sorting_line(&LatencyTables::default(), 20).unwrap()
    }

    fn cp_trace(output_at: Millis) -> Vec<Event> {
        vec![
            Event::edge(0, 0, 1, SignalId::Ls1),
            Event::signal(output_at, 1, Some(1), SignalId::ScCp, Value::Count(5)),
            Event::signal(output_at, 2, Some(1), SignalId::CvCp, Value::Colour(Some(Colour::W))),
        ]
    }

    #[test]
    fn cp_output_in_time_is_satisfied() {
        let reg = registry();
        let out = observe_trace(reg.get("C_CP").unwrap(), &cp_trace(150), &[]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].verdict, Verdict::Satisfied);
        assert_eq!(out[0].observed_latency, Some(150));
    }

    #[test]
    fn late_cp_output_reports_latency_and_excess() {
        let reg = registry();
        let out = observe_trace(reg.get("C_CP").unwrap(), &cp_trace(250), &[]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].verdict, Verdict::Violated);
        assert_eq!(out[0].violation_kind, Some(ViolationKind::DeadlineExceeded));
        assert_eq!(out[0].observed_latency, Some(250));
        assert_eq!(out[0].excess, Some(50));
    }

    #[test]
    fn no_trigger_no_outcomes() {
        let reg = registry();
        let trace = vec![Event::signal(10, 0, Some(1), SignalId::ScCp, Value::Count(5))];
        let out = observe_trace(reg.get("C_CP").unwrap(), &trace, &[]).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn missing_output_is_violated_at_departure() {
        let reg = registry();
        let trace = vec![
            Event::edge(0, 0, 1, SignalId::Ls1),
            Event {
                t: 900,
                seq: 1,
                token: Some(1),
                kind: EventKind::Departed {
                    departure: Departure::RanOff,
                },
            },
        ];
        let out = observe_trace(reg.get("C_CP").unwrap(), &trace, &[]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].violation_kind, Some(ViolationKind::DeadlineExceeded));
        assert_eq!(out[0].observed_latency, None);
        assert_eq!(out[0].t, 900);
    }

    #[test]
    fn deadline_uses_speed_at_arming() {
        let reg = registry();
        let mut obs = compile_observer(reg.get("C_CP").unwrap()).unwrap();
        let trace = cp_trace(250);
        obs.observe(ObserverInput::Event(trace[0].clone())).unwrap();
        // loosening after arming must not rescue this activation
        obs.set_param(10, SpeedLevel::S3).unwrap();
        obs.observe(ObserverInput::Event(trace[1].clone())).unwrap();
        let out = obs.observe(ObserverInput::Event(trace[2].clone())).unwrap();
        assert_eq!(out[0].verdict, Verdict::Violated);
        assert!(obs.set_param(5, SpeedLevel::S1).is_err());
    }

    fn ec_trace(ls2_at_step: u64) -> Vec<Event> {
        let mut trace = vec![Event::signal(0, 0, Some(1), SignalId::ScCp, Value::Count(5))];
        let mut seq = 1;
        for step in 1..=ls2_at_step + 1 {
            trace.push(Event::signal(step * 50, seq, None, SignalId::Sc, Value::Count(step)));
            seq += 1;
            if step == ls2_at_step {
                trace.push(Event::edge(step * 50, seq, 1, SignalId::Ls2));
                seq += 1;
            }
        }
        trace
    }

    #[test]
    fn ls2_on_the_offset_step_is_satisfied() {
        let reg = registry();
        let out = observe_trace(reg.get("C_EC").unwrap(), &ec_trace(25), &[]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].verdict, Verdict::Satisfied);
    }

    #[test]
    fn slipped_ls2_is_missing_then_unexpected() {
        let reg = registry();
        let out = observe_trace(reg.get("C_EC").unwrap(), &ec_trace(28), &[]).unwrap();
        let kinds: Vec<_> = out.iter().map(|o| o.violation_kind).collect();
        assert_eq!(
            kinds,
            vec![
                Some(ViolationKind::MissingTrigger),
                Some(ViolationKind::UnexpectedTrigger)
            ]
        );
        assert_eq!(out[0].t, 26 * 50);
        assert_eq!(out[1].t, 28 * 50);
    }

    #[test]
    fn vacuous_guarantee_never_violates() {
        let c = Contract::new(
            "C_TRUE",
            [SignalId::Ls1],
            [],
            [],
            Predicate::True,
            vec![crate::contract::GuaranteeClause::bounded(
                Predicate::True,
                Predicate::True,
                crate::contract::LatencyFn::new("f", [1, 1, 1]).unwrap(),
            )],
        )
        .unwrap();
        let out = observe_trace(&c, &cp_trace(999), &[]).unwrap();
        assert!(out.iter().all(|o| o.verdict == Verdict::Satisfied));
    }

    #[test]
    fn out_of_order_events_are_rejected() {
        let reg = registry();
        let mut obs = compile_observer(reg.get("C_CP").unwrap()).unwrap();
        obs.observe(ObserverInput::Event(Event::edge(10, 5, 1, SignalId::Ls1)))
            .unwrap();
        let err = obs.observe(ObserverInput::Event(Event::edge(5, 6, 2, SignalId::Ls1)));
        assert!(matches!(err, Err(ObserverError::OutOfOrder { .. })));
    }

    #[test]
    fn pending_lists_armed_activations() {
        let reg = registry();
        let mut obs = compile_observer(reg.get("C_CP").unwrap()).unwrap();
        obs.observe(ObserverInput::Event(Event::edge(0, 0, 1, SignalId::Ls1)))
            .unwrap();
        assert_eq!(
            obs.clause_state(1, 0),
            Some(ClauseState::Armed {
                armed_at: 0,
                deadline: 200
            })
        );
        let pending = obs.pending(100);
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].verdict, Verdict::Pending);
    }

    use crate::contract::Predicate;
}
