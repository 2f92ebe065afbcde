use std::fmt;

use serde::{Deserialize, Serialize};

use super::ContractError;

/// Simulated time and durations, in milliseconds.
pub type Millis = u64;

/// Motor speed of the conveyor belt. `S1` is the fastest, `S3` the slowest.
///
/// Ordering follows belt speed, so `S1 > S2 > S3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpeedLevel {
    S1,
    S2,
    S3,
}

impl SpeedLevel {
    pub const ALL: [SpeedLevel; 3] = [SpeedLevel::S1, SpeedLevel::S2, SpeedLevel::S3];

    /// Position in the fastest-to-slowest table order.
    pub fn index(self) -> usize {
        match self {
            SpeedLevel::S1 => 0,
            SpeedLevel::S2 => 1,
            SpeedLevel::S3 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpeedLevel::S1 => "S1",
            SpeedLevel::S2 => "S2",
            SpeedLevel::S3 => "S3",
        }
    }

    /// Speeds strictly slower than `self`, least degraded first.
    pub fn slower(self) -> impl Iterator<Item = SpeedLevel> {
        SpeedLevel::ALL.into_iter().skip(self.index() + 1)
    }
}

impl Ord for SpeedLevel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // a smaller table index is a faster belt
        other.index().cmp(&self.index())
    }
}

impl PartialOrd for SpeedLevel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SpeedLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A per-speed latency bound, e.g. the time budget of the colour processor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatencyFn {
    name: String,
    bounds: [Millis; 3],
}

impl LatencyFn {
    /// Builds a bound table indexed `[S1, S2, S3]`. Bounds may not shrink as the belt slows.
    pub fn new(name: impl Into<String>, bounds: [Millis; 3]) -> Result<Self, ContractError> {
        let name = name.into();
        if bounds[0] > bounds[1] || bounds[1] > bounds[2] {
            return Err(ContractError::NonMonotonicLatency { name, bounds });
        }
        Ok(LatencyFn { name, bounds })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> [Millis; 3] {
        self.bounds
    }

    pub fn bound(&self, speed: SpeedLevel) -> Millis {
        self.bounds[speed.index()]
    }

    /// Pointwise sum, used when two response clauses are chained.
    pub fn chain(&self, next: &LatencyFn) -> LatencyFn {
        LatencyFn {
            name: format!("{}+{}", self.name, next.name),
            bounds: [
                self.bounds[0] + next.bounds[0],
                self.bounds[1] + next.bounds[1],
                self.bounds[2] + next.bounds[2],
            ],
        }
    }

    /// Multiplies every bound by `factor`; monotonicity is preserved.
    pub fn scaled(&self, factor: Millis) -> LatencyFn {
        LatencyFn {
            name: self.name.clone(),
            bounds: self.bounds.map(|b| b * factor),
        }
    }

    pub fn with_bound(&self, speed: SpeedLevel, value: Millis) -> Result<LatencyFn, ContractError> {
        let mut bounds = self.bounds;
        bounds[speed.index()] = value;
        LatencyFn::new(self.name.clone(), bounds)
    }
}

/// Latency bound lookup for one speed.
pub fn latency_bound(f: &LatencyFn, speed: SpeedLevel) -> Millis {
    f.bound(speed)
}

/// Token colour as reported by the colour processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Colour {
    W,
    N,
}

/// Ejector selected by the bin selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ejector {
    E1,
    E2,
    E3,
}

impl Ejector {
    pub fn from_bin(bin: u8) -> Option<Ejector> {
        match bin {
            1 => Some(Ejector::E1),
            2 => Some(Ejector::E2),
            3 => Some(Ejector::E3),
            _ => None,
        }
    }

    pub fn bin(self) -> u8 {
        match self {
            Ejector::E1 => 1,
            Ejector::E2 => 2,
            Ejector::E3 => 3,
        }
    }
}

/// Plant signal registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignalId {
    #[serde(rename = "LS1")]
    Ls1,
    #[serde(rename = "LS2")]
    Ls2,
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "SC_CP")]
    ScCp,
    #[serde(rename = "CV_CP")]
    CvCp,
    #[serde(rename = "SC_BS")]
    ScBs,
    #[serde(rename = "E_BS")]
    EBs,
    B1,
    B2,
}

impl SignalId {
    pub const ALL: [SignalId; 9] = [
        SignalId::Ls1,
        SignalId::Ls2,
        SignalId::Sc,
        SignalId::ScCp,
        SignalId::CvCp,
        SignalId::ScBs,
        SignalId::EBs,
        SignalId::B1,
        SignalId::B2,
    ];

    pub fn domain(self) -> Domain {
        match self {
            SignalId::Ls1 | SignalId::Ls2 | SignalId::B1 | SignalId::B2 => Domain::Edge,
            SignalId::Sc | SignalId::ScCp | SignalId::ScBs => Domain::StepCount,
            SignalId::CvCp => Domain::Colour,
            SignalId::EBs => Domain::Ejector,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalId::Ls1 => "LS1",
            SignalId::Ls2 => "LS2",
            SignalId::Sc => "SC",
            SignalId::ScCp => "SC_CP",
            SignalId::CvCp => "CV_CP",
            SignalId::ScBs => "SC_BS",
            SignalId::EBs => "E_BS",
            SignalId::B1 => "B1",
            SignalId::B2 => "B2",
        }
    }

    /// The global pulse count is shared by all tokens; every other signal belongs to one token.
    pub fn is_global(self) -> bool {
        self == SignalId::Sc
    }
}

impl fmt::Display for SignalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Contract parameters. The motor speed is the only one the sorting line uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamId {
    #[serde(rename = "M_S")]
    MotorSpeed,
}

impl ParamId {
    pub fn domain(self) -> Domain {
        Domain::Speed
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("M_S")
    }
}

/// Value domains of signals and parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Edge,
    StepCount,
    Colour,
    Ejector,
    Speed,
}

impl Domain {
    /// Every value of a finite domain. Step counts are unbounded and return `None`.
    pub fn values(self) -> Option<Vec<Value>> {
        match self {
            Domain::Edge => Some(vec![Value::Edge(false), Value::Edge(true)]),
            Domain::StepCount => None,
            Domain::Colour => Some(vec![
                Value::Colour(None),
                Value::Colour(Some(Colour::W)),
                Value::Colour(Some(Colour::N)),
            ]),
            Domain::Ejector => Some(vec![
                Value::Ejector(None),
                Value::Ejector(Some(Ejector::E1)),
                Value::Ejector(Some(Ejector::E2)),
                Value::Ejector(Some(Ejector::E3)),
            ]),
            Domain::Speed => Some(SpeedLevel::ALL.iter().map(|s| Value::Speed(*s)).collect()),
        }
    }
}

/// A variable a predicate may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Signal(SignalId),
    Param(ParamId),
}

impl Var {
    pub fn domain(self) -> Domain {
        match self {
            Var::Signal(s) => s.domain(),
            Var::Param(p) => p.domain(),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Signal(s) => s.fmt(f),
            Var::Param(p) => p.fmt(f),
        }
    }
}

/// A domain value. `None` colours and ejectors are the `null` literal; a step count of
/// zero means the count has not been initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Edge(bool),
    Count(u64),
    Colour(Option<Colour>),
    Ejector(Option<Ejector>),
    Speed(SpeedLevel),
}

impl Value {
    pub fn domain(self) -> Domain {
        match self {
            Value::Edge(_) => Domain::Edge,
            Value::Count(_) => Domain::StepCount,
            Value::Colour(_) => Domain::Colour,
            Value::Ejector(_) => Domain::Ejector,
            Value::Speed(_) => Domain::Speed,
        }
    }

    /// The default a signal holds before the plant has produced it.
    pub fn unset(domain: Domain) -> Value {
        match domain {
            Domain::Edge => Value::Edge(false),
            Domain::StepCount => Value::Count(0),
            Domain::Colour => Value::Colour(None),
            Domain::Ejector => Value::Ejector(None),
            Domain::Speed => Value::Speed(SpeedLevel::S1),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Edge(b) => write!(f, "{b}"),
            Value::Count(n) => write!(f, "{n}"),
            Value::Colour(None) | Value::Ejector(None) => f.write_str("null"),
            Value::Colour(Some(c)) => write!(f, "{c:?}"),
            Value::Ejector(Some(e)) => write!(f, "{e:?}"),
            Value::Speed(s) => s.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_order_is_by_belt_speed() {
        assert!(SpeedLevel::S1 > SpeedLevel::S2);
        assert!(SpeedLevel::S2 > SpeedLevel::S3);
        let slower: Vec<_> = SpeedLevel::S1.slower().collect();
        assert_eq!(slower, vec![SpeedLevel::S2, SpeedLevel::S3]);
        assert_eq!(SpeedLevel::S3.slower().count(), 0);
    }

    #[test]
    fn latency_fn_rejects_shrinking_bounds() {
        assert!(LatencyFn::new("f", [200, 100, 800]).is_err());
        let f = LatencyFn::new("f_CP", [200, 400, 800]).unwrap();
        assert_eq!(latency_bound(&f, SpeedLevel::S1), 200);
        assert!(f.bound(SpeedLevel::S1) <= f.bound(SpeedLevel::S3));
    }

    #[test]
    fn chained_bounds_add_pointwise() {
        let cp = LatencyFn::new("f_CP", [200, 400, 800]).unwrap();
        let bs = LatencyFn::new("f_BS", [200, 400, 800]).unwrap();
        let sum = cp.chain(&bs);
        assert_eq!(sum.bounds(), [400, 800, 1600]);
        assert_eq!(sum.name(), "f_CP+f_BS");
    }
}
