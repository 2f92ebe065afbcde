use serde::{Deserialize, Serialize};

use crate::baseline::{Architecture, DecisionModel};
use crate::rm::Accounting;

use super::report::{RunReport, FORMAT_VERSION};
use super::HarnessError;

pub const COMPARE_FORMAT: &str = "hrm-compare";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saving {
    pub reference: Architecture,
    pub reference_accounting: Accounting,
    pub against: Architecture,
    pub against_decision_model: Option<DecisionModel>,
    pub reference_messages: u64,
    pub against_messages: u64,
    pub message_saving_pct: i64,
    pub reference_time_ms: f64,
    pub against_time_ms: f64,
    pub time_saving_pct: i64,
}

/// `round((1 - ours / theirs) * 100)`; zero when the other side is zero.
pub fn saving_pct(ours: f64, theirs: f64) -> i64 {
    if theirs == 0.0 {
        return 0;
    }
    ((1.0 - ours / theirs) * 100.0).round() as i64
}

/// Savings of the first hierarchical report (or the first report if there is none)
/// against every other report. All reports must come from the same config and script.
pub fn compare(reports: &[RunReport]) -> Result<Vec<Saving>, HarnessError> {
    let Some(first) = reports.first() else {
        return Err(HarnessError::Format("nothing to compare".into()));
    };
    for r in reports {
        if r.config_digest != first.config_digest || r.script_digest != first.script_digest {
            return Err(HarnessError::DigestMismatch(format!(
                "{} report ran config {} script {}, {} report ran config {} script {}",
                first.architecture.name(),
                first.config_digest,
                first.script_digest,
                r.architecture.name(),
                r.config_digest,
                r.script_digest
            )));
        }
    }
    let ref_index = reports
        .iter()
        .position(|r| r.architecture == Architecture::Hierarchical)
        .unwrap_or(0);
    let reference = &reports[ref_index];
    Ok(reports
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ref_index)
        .map(|(_, r)| Saving {
            reference: reference.architecture,
            reference_accounting: reference.accounting,
            against: r.architecture,
            against_decision_model: r.decision_model,
            reference_messages: reference.messages,
            against_messages: r.messages,
            message_saving_pct: saving_pct(reference.messages as f64, r.messages as f64),
            reference_time_ms: reference.recovery_time_ms,
            against_time_ms: r.recovery_time_ms,
            time_saving_pct: saving_pct(reference.recovery_time_ms, r.recovery_time_ms),
        })
        .collect())
}

pub fn write_comparison(savings: &[Saving]) -> String {
    let mut out = serde_json::json!({ "format": COMPARE_FORMAT, "version": FORMAT_VERSION }).to_string();
    out.push('\n');
    for s in savings {
        out.push_str(&serde_json::to_string(s).expect("savings serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saving_examples() {
        assert_eq!(saving_pct(21.0, 48.0), 56);
        assert_eq!(saving_pct(21.0, 108.0), 81);
        assert_eq!(saving_pct(21.0, 21.0), 0);
        assert_eq!(saving_pct(0.0, 0.0), 0);
    }
}
