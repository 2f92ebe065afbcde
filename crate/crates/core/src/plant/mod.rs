//! Discrete-event simulation of the sorting line: belt, light sensors, pulse counter,
//! colour processor, bin selector, ejectors and bins, with fault injection.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{Colour, Ejector, Millis, SignalId, SpeedLevel, Value};
use crate::observer::{Departure, Event, EventKind, TokenId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlantError {
    #[error("plant config: {0}")]
    Config(String),
    #[error("cannot schedule at t={t}, the clock is already at {clock}")]
    PastTime { t: Millis, clock: Millis },
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
}

/// Belt geometry and timing. Positions count steps after LS1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// Milliseconds per step at `[S1, S2, S3]`.
    pub step_period_ms: [Millis; 3],
    pub cp_pos: u64,
    pub ls2_pos: u64,
    pub ejector_pos: [u64; 3],
    /// Tokens still on the belt at this position fall off the end.
    pub belt_end: u64,
    pub cp_latency_ms: Millis,
    pub bs_latency_ms: Millis,
    pub initial_speed: SpeedLevel,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            step_period_ms: [50, 100, 200],
            cp_pos: 5,
            ls2_pos: 25,
            ejector_pos: [35, 40, 45],
            belt_end: 60,
            cp_latency_ms: 150,
            bs_latency_ms: 150,
            initial_speed: SpeedLevel::S1,
        }
    }
}

impl PlantConfig {
    pub fn offset(&self) -> u64 {
        self.ls2_pos - self.cp_pos
    }

    pub fn step_period(&self, speed: SpeedLevel) -> Millis {
        self.step_period_ms[speed.index()]
    }

    pub fn ejector_pos(&self, e: Ejector) -> u64 {
        self.ejector_pos[usize::from(e.bin() - 1)]
    }

    /// Where a positive slip takes hold: halfway between CP and LS2.
    pub fn slip_pos(&self) -> u64 {
        (self.cp_pos + self.ls2_pos) / 2
    }

    /// Where a negative slip takes hold: halfway between LS2 and the first ejector.
    pub fn catch_up_pos(&self) -> u64 {
        (self.ls2_pos + self.ejector_pos[0]) / 2
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let e = self.ejector_pos;
        if !(self.cp_pos < self.ls2_pos && self.ls2_pos < e[0] && e[0] < e[1] && e[1] < e[2]) {
            return Err(PlantError::Config(format!(
                "positions must satisfy cp_pos < ls2_pos < ejector_pos[1] < ejector_pos[2] < ejector_pos[3], got {} {} {:?}",
                self.cp_pos, self.ls2_pos, e
            )));
        }
        if self.belt_end <= e[2] {
            return Err(PlantError::Config(format!(
                "belt_end {} must lie past the last ejector at {}",
                self.belt_end, e[2]
            )));
        }
        let p = self.step_period_ms;
        if !(0 < p[0] && p[0] < p[1] && p[1] < p[2]) {
            return Err(PlantError::Config(format!(
                "step periods must be positive and strictly increasing from S1 to S3, got {p:?}"
            )));
        }
        Ok(())
    }
}

/// How an injection changes a component's processing time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyChange {
    Extra(Millis),
    Absolute(Millis),
}

impl LatencyChange {
    fn apply(self, nominal: Millis) -> Millis {
        match self {
            LatencyChange::Extra(ms) => nominal + ms,
            LatencyChange::Absolute(ms) => ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "CP")]
    Cp,
    #[serde(rename = "BS")]
    Bs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    LatencyInflation {
        component: Component,
        change: LatencyChange,
    },
    /// Positive values make the token lag the belt; negative values let it catch up.
    Slip { steps: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionTarget {
    Token(TokenId),
    NextToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: InjectionKind,
    pub target: InjectionTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BinOutcome {
    Pending,
    Binned { bin: u8 },
    RanOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Scheduled,
    OnBelt,
    Done(BinOutcome),
}

#[derive(Debug, Clone)]
struct Token {
    colour: Colour,
    placed_sc: u64,
    position: u64,
    status: Status,
    stall: u64,
    slip: i64,
    pending_lag: u64,
    pending_catch_up: u64,
    sc_cp: Option<u64>,
    cp_change: Vec<LatencyChange>,
    bs_change: Vec<LatencyChange>,
}

impl Token {
    fn new(colour: Colour) -> Token {
        Token {
            colour,
            placed_sc: 0,
            position: 0,
            status: Status::Scheduled,
            stall: 0,
            slip: 0,
            pending_lag: 0,
            pending_catch_up: 0,
            sc_cp: None,
            cp_change: Vec::new(),
            bs_change: Vec::new(),
        }
    }

    fn apply_slip(&mut self, steps: i32) {
        if steps >= 0 {
            self.pending_lag += steps.unsigned_abs() as u64;
        } else {
            self.pending_catch_up += steps.unsigned_abs() as u64;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Job {
    CpDone(TokenId),
    BsDone(TokenId),
}

/// Work due at an instant. Variant order breaks ties: jobs finish before the belt steps,
/// and the belt steps before a token is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Due {
    Job(Job),
    Step,
    Place(TokenId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct EjectCommand {
    token: TokenId,
    ejector: Ejector,
    at_step: u64,
}

/// Live simulation state. Every mutation appends to the event log.
#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    clock: Millis,
    sc: u64,
    speed: SpeedLevel,
    pending_speed: Option<SpeedLevel>,
    next_step_at: Millis,
    tokens: BTreeMap<TokenId, Token>,
    next_token: TokenId,
    next_token_injections: Vec<InjectionKind>,
    queue: BinaryHeap<Reverse<(Millis, Due, u64)>>,
    queued: u64,
    commands: Vec<EjectCommand>,
    seq: u64,
    log: Vec<Event>,
}

pub fn init_plant(config: PlantConfig) -> Result<Plant, PlantError> {
    config.validate()?;
    Ok(Plant {
        speed: config.initial_speed,
        next_step_at: config.step_period(config.initial_speed),
        config,
        clock: 0,
        sc: 0,
        pending_speed: None,
        tokens: BTreeMap::new(),
        next_token: 1,
        next_token_injections: Vec::new(),
        queue: BinaryHeap::new(),
        queued: 0,
        commands: Vec::new(),
        seq: 0,
        log: Vec::new(),
    })
}

impl Plant {
    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn sc(&self) -> u64 {
        self.sc
    }

    pub fn speed(&self) -> SpeedLevel {
        self.speed
    }

    /// Speed that will be in force after the next step boundary.
    pub fn target_speed(&self) -> SpeedLevel {
        self.pending_speed.unwrap_or(self.speed)
    }

    pub fn next_step_at(&self) -> Millis {
        self.next_step_at
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    /// Tokens placed so far with their terminal or pending outcome.
    pub fn outcomes(&self) -> Vec<(TokenId, BinOutcome)> {
        self.tokens
            .iter()
            .map(|(&id, tok)| {
                let o = match tok.status {
                    Status::Done(o) => o,
                    _ => BinOutcome::Pending,
                };
                (id, o)
            })
            .collect()
    }

    /// Schedules a token to be placed at LS1 at time `t`.
    pub fn place_token(&mut self, colour: Colour, t: Millis) -> Result<TokenId, PlantError> {
        if t < self.clock {
            return Err(PlantError::PastTime { t, clock: self.clock });
        }
        let id = self.next_token;
        self.next_token += 1;
        let mut token = Token::new(colour);
        for kind in std::mem::take(&mut self.next_token_injections) {
            Self::apply_injection(&mut token, kind);
        }
        self.tokens.insert(id, token);
        self.schedule(t, Due::Place(id));
        Ok(id)
    }

    pub fn inject(&mut self, injection: Injection) -> Result<(), PlantError> {
        match injection.target {
            InjectionTarget::NextToken => self.next_token_injections.push(injection.kind),
            InjectionTarget::Token(id) => {
                let token = self.tokens.get_mut(&id).ok_or(PlantError::UnknownToken(id))?;
                Self::apply_injection(token, injection.kind);
            }
        }
        Ok(())
    }

    fn apply_injection(token: &mut Token, kind: InjectionKind) {
        match kind {
            InjectionKind::LatencyInflation { component, change } => match component {
                Component::Cp => token.cp_change.push(change),
                Component::Bs => token.bs_change.push(change),
            },
            InjectionKind::Slip { steps } => token.apply_slip(steps),
        }
    }

    /// Requests a motor speed; it takes effect at the next step boundary. The last
    /// request before the boundary wins.
    pub fn set_speed(&mut self, speed: SpeedLevel) {
        self.pending_speed = Some(speed);
    }

    /// Commands ejector `ejector` to fire at step `at_step`. The command is dropped if the
    /// step has already passed or the token is not in front of the ejector at that step.
    pub fn command_ejection(&mut self, token: TokenId, ejector: Ejector, at_step: u64) -> Result<(), PlantError> {
        if !self.tokens.contains_key(&token) {
            return Err(PlantError::UnknownToken(token));
        }
        if at_step > self.sc {
            self.commands.push(EjectCommand {
                token,
                ejector,
                at_step,
            });
        }
        Ok(())
    }

    pub fn bin_outcome(&self, token: TokenId) -> Result<BinOutcome, PlantError> {
        let tok = self.tokens.get(&token).ok_or(PlantError::UnknownToken(token))?;
        Ok(match tok.status {
            Status::Done(o) => o,
            _ => BinOutcome::Pending,
        })
    }

    /// Step count recorded by the colour processor for `token`, once activated.
    pub fn sc_cp(&self, token: TokenId) -> Option<u64> {
        self.tokens.get(&token).and_then(|t| t.sc_cp)
    }

    /// Current lag of the token behind the belt, in steps.
    pub fn slip(&self, token: TokenId) -> Option<i64> {
        self.tokens.get(&token).map(|t| t.slip)
    }

    /// Runs everything due up to and including `until`.
    pub fn advance(&mut self, until: Millis) -> Result<Vec<Event>, PlantError> {
        if until < self.clock {
            return Err(PlantError::PastTime {
                t: until,
                clock: self.clock,
            });
        }
        let start = self.log.len();
        while self.next_due_at() <= until {
            self.process_next();
        }
        self.clock = until;
        Ok(self.log[start..].to_vec())
    }

    /// Runs the next due item and returns the events it produced.
    pub fn advance_next(&mut self) -> Vec<Event> {
        let start = self.log.len();
        self.process_next();
        self.log[start..].to_vec()
    }

    fn next_due_at(&self) -> Millis {
        let job = self.queue.peek().map_or(Millis::MAX, |Reverse((t, _, _))| *t);
        job.min(self.next_step_at)
    }

    fn schedule(&mut self, t: Millis, due: Due) {
        self.queued += 1;
        self.queue.push(Reverse((t, due, self.queued)));
    }

    fn process_next(&mut self) {
        let step_first = match self.queue.peek() {
            Some(Reverse((t, due, _))) => (self.next_step_at, Due::Step) < (*t, *due),
            None => true,
        };
        if step_first {
            let t = self.next_step_at;
            self.clock = t;
            self.step(t);
            return;
        }
        let Reverse((t, due, _)) = self.queue.pop().expect("peeked");
        self.clock = t;
        match due {
            Due::Job(Job::CpDone(id)) => self.cp_done(t, id),
            Due::Job(Job::BsDone(id)) => self.bs_done(t, id),
            Due::Place(id) => self.place(t, id),
            Due::Step => unreachable!("steps are not queued"),
        }
    }

    fn emit(&mut self, t: Millis, token: Option<TokenId>, kind: EventKind) {
        self.log.push(Event {
            t,
            seq: self.seq,
            token,
            kind,
        });
        self.seq += 1;
    }

    fn emit_signal(&mut self, t: Millis, token: Option<TokenId>, signal: SignalId, value: Value) {
        self.emit(t, token, EventKind::Signal { signal, value });
    }

    fn place(&mut self, t: Millis, id: TokenId) {
        let sc = self.sc;
        let tok = self.tokens.get_mut(&id).expect("scheduled token");
        tok.status = Status::OnBelt;
        tok.placed_sc = sc;
        self.emit_signal(t, Some(id), SignalId::Ls1, Value::Edge(true));
    }

    fn cp_done(&mut self, t: Millis, id: TokenId) {
        let (sc_cp, colour, latency) = {
            let tok = &self.tokens[&id];
            let latency = tok.bs_change.iter().fold(self.config.bs_latency_ms, |l, c| c.apply(l));
            (tok.sc_cp.expect("activated"), tok.colour, latency)
        };
        self.emit_signal(t, Some(id), SignalId::ScCp, Value::Count(sc_cp));
        self.emit_signal(t, Some(id), SignalId::CvCp, Value::Colour(Some(colour)));
        self.schedule(t + latency, Due::Job(Job::BsDone(id)));
    }

    fn bs_done(&mut self, t: Millis, id: TokenId) {
        let (sc_cp, colour) = {
            let tok = &self.tokens[&id];
            (tok.sc_cp.expect("activated"), tok.colour)
        };
        let ejector = match colour {
            Colour::W => Ejector::E1,
            Colour::N => Ejector::E2,
        };
        let sc_bs = sc_cp + (self.config.ejector_pos(ejector) - self.config.cp_pos);
        self.emit_signal(t, Some(id), SignalId::EBs, Value::Ejector(Some(ejector)));
        self.emit_signal(t, Some(id), SignalId::ScBs, Value::Count(sc_bs));
        self.command_ejection(id, ejector, sc_bs).expect("known token");
    }

    fn step(&mut self, t: Millis) {
        self.sc += 1;
        let sc = self.sc;
        self.emit_signal(t, None, SignalId::Sc, Value::Count(sc));
        if let Some(speed) = self.pending_speed.take() {
            self.speed = speed;
            self.emit(t, None, EventKind::SpeedChanged { speed });
        }
        self.next_step_at = t + self.config.step_period(self.speed);

        let cfg = self.config.clone();
        let ids: Vec<TokenId> = self
            .tokens
            .iter()
            .filter(|(_, tok)| tok.status == Status::OnBelt)
            .map(|(id, _)| *id)
            .collect();
        for id in &ids {
            let reached = self.move_token(*id, &cfg);
            for pos in reached {
                if pos == cfg.cp_pos {
                    let tok = self.tokens.get_mut(id).expect("on belt");
                    tok.sc_cp = Some(sc);
                    let latency = tok.cp_change.iter().fold(cfg.cp_latency_ms, |l, c| c.apply(l));
                    self.emit(t, Some(*id), EventKind::CpActivated);
                    self.schedule(t + latency, Due::Job(Job::CpDone(*id)));
                }
                if pos == cfg.ls2_pos {
                    self.emit_signal(t, Some(*id), SignalId::Ls2, Value::Edge(true));
                }
            }
        }

        let due: Vec<EjectCommand> = self.commands.iter().copied().filter(|c| c.at_step == sc).collect();
        self.commands.retain(|c| c.at_step > sc);
        for cmd in due {
            let tok = &self.tokens[&cmd.token];
            if tok.status == Status::OnBelt && tok.position == cfg.ejector_pos(cmd.ejector) {
                let bin = cmd.ejector.bin();
                match bin {
                    1 => self.emit_signal(t, Some(cmd.token), SignalId::B1, Value::Edge(true)),
                    2 => self.emit_signal(t, Some(cmd.token), SignalId::B2, Value::Edge(true)),
                    _ => {}
                }
                self.finish(t, cmd.token, BinOutcome::Binned { bin });
            }
        }

        for id in ids {
            let tok = &self.tokens[&id];
            if tok.status == Status::OnBelt && tok.position >= cfg.belt_end {
                self.finish(t, id, BinOutcome::RanOff);
            }
        }
    }

    /// Moves a token by one step of belt travel and returns the positions it reached.
    /// A catch-up jumps the token forward at once, never past the belt's own travel.
    fn move_token(&mut self, id: TokenId, cfg: &PlantConfig) -> Vec<u64> {
        let sc = self.sc;
        let tok = self.tokens.get_mut(&id).expect("on belt");
        let mut reached = Vec::new();
        if tok.stall > 0 {
            tok.stall -= 1;
        } else {
            tok.position += 1;
            reached.push(tok.position);
        }
        if tok.position >= cfg.slip_pos() && tok.pending_lag > 0 {
            tok.stall += tok.pending_lag;
            tok.slip += tok.pending_lag as i64;
            tok.pending_lag = 0;
        }
        if tok.position >= cfg.catch_up_pos() && tok.pending_catch_up > 0 {
            let lag = (sc - tok.placed_sc).saturating_sub(tok.position);
            let jump = tok.pending_catch_up.min(lag);
            let skipped = jump.min(tok.stall);
            tok.stall -= skipped;
            for _ in skipped..jump {
                tok.position += 1;
                reached.push(tok.position);
            }
            tok.slip -= jump as i64;
            tok.pending_catch_up = 0;
        }
        reached
    }

    fn finish(&mut self, t: Millis, id: TokenId, outcome: BinOutcome) {
        self.tokens.get_mut(&id).expect("known").status = Status::Done(outcome);
        let departure = match outcome {
            BinOutcome::Binned { bin } => Departure::Binned { bin },
            _ => Departure::RanOff,
        };
        self.emit(t, Some(id), EventKind::Departed { departure });
    }
}
