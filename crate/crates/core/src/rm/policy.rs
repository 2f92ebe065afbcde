//! Recovery decisions of the latency manager and the root.

use crate::contract::{LatencyFn, Millis, SpeedLevel};
use crate::plant::BinOutcome;

use super::{Action, FaultClass, FaultReport, RmError};

/// The least-degraded speed slower than `current` whose budget covers the violation, or
/// `None` when even the slowest speed falls short.
pub fn select_degraded_speed(violation_ms: Millis, current: SpeedLevel, f_lm: &LatencyFn) -> Option<SpeedLevel> {
    let needed = f_lm.bound(current) + violation_ms;
    current.slower().find(|&s| f_lm.bound(s) >= needed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1Verdict {
    pub total: Millis,
    pub budget: Millis,
    pub action: Action,
    pub violation: Option<Millis>,
}

/// Latency-manager slack check. `parts` holds, per child component, the reported latency
/// if it has reported and its own bound otherwise.
pub fn l1_evaluate(parts: &[(Option<Millis>, Millis)], budget: Millis) -> L1Verdict {
    let total: Millis = parts.iter().map(|(actual, bound)| actual.unwrap_or(*bound)).sum();
    if total <= budget {
        L1Verdict {
            total,
            budget,
            action: Action::Absorb,
            violation: None,
        }
    } else {
        L1Verdict {
            total,
            budget,
            action: Action::Escalate,
            violation: Some(total - budget),
        }
    }
}

/// Root decision for one token's batch of reports, taken once the token's fate is known.
///
/// A token in the correct bin needs nothing; otherwise jitter forces the slowest speed,
/// and a latency violation picks the least-degraded speed that absorbs it.
pub fn l2_decide(
    batch: &[FaultReport],
    outcome: BinOutcome,
    expected_bin: Option<u8>,
    current: SpeedLevel,
    f_lm: &LatencyFn,
) -> Result<Action, RmError> {
    if outcome == BinOutcome::Pending {
        return Err(RmError::Sequencing(
            "root decision requested before the token left the belt".into(),
        ));
    }
    if batch.is_empty() {
        return Err(RmError::Sequencing("root decision requested without reports".into()));
    }
    if let (BinOutcome::Binned { bin }, Some(expected)) = (outcome, expected_bin) {
        if bin == expected {
            return Ok(Action::NoAction);
        }
    }
    if batch.iter().any(|r| r.fault_class == FaultClass::Jitter) {
        return Ok(Action::SetSpeed(SpeedLevel::S3));
    }
    let violation = batch.iter().filter_map(|r| r.violation_amount).max().unwrap_or(0);
    Ok(match select_degraded_speed(violation, current, f_lm) {
        Some(s) => Action::SetSpeed(s),
        None => Action::HandOverToSystemControl,
    })
}
