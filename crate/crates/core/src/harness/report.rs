use serde::{Deserialize, Serialize};

use crate::baseline::{run_centralized, run_decentralized, Architecture, DecisionModel};
use crate::contract::SpeedLevel;
use crate::observer::TokenId;
use crate::plant::BinOutcome;
use crate::rm::{Accounting, Action};

use super::config::{Config, CostModel};
use super::runner::{execute, Execution};
use super::script::ScenarioScript;
use super::HarnessError;

pub const REPORT_FORMAT: &str = "hrm-report";
pub const TRACE_FORMAT: &str = "hrm-trace";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub index: usize,
    pub scenario_type: Option<u8>,
    pub token: TokenId,
    pub faults: u64,
    pub messages: u64,
    pub decisions: u64,
    pub recovery_time_ms: f64,
    pub bin: BinOutcome,
    pub speed_after: Option<SpeedLevel>,
    pub handover: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinTally {
    pub bin1: u64,
    pub bin2: u64,
    pub bin3: u64,
    pub ran_off: u64,
}

/// The decision model not selected for a decentralized run, reported alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub decision_model: DecisionModel,
    pub decisions: u64,
    pub recovery_time_ms: f64,
    pub diverges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub architecture: Architecture,
    pub accounting: Accounting,
    pub decision_model: Option<DecisionModel>,
    pub fault_count: u64,
    pub messages: u64,
    pub decisions: u64,
    pub recovery_time_ms: f64,
    pub cost: CostModel,
    pub bins: BinTally,
    pub handovers: u64,
    /// Scenario-origin message count of the same run, given for physical accounting.
    pub reference_messages: Option<u64>,
    pub message_delta: Option<i64>,
    pub alternative: Option<Alternative>,
    pub config_digest: String,
    pub script_digest: String,
    #[serde(skip_serializing, default)]
    pub scenarios: Vec<ScenarioRecord>,
}

fn counted(exec: &Execution, range: std::ops::Range<usize>, accounting: Accounting) -> u64 {
    exec.messages[range].iter().filter(|m| accounting.counts(m)).count() as u64
}

/// Builds the report of one architecture from a hierarchical execution. Baselines reuse
/// the execution's fault list and plant outcomes.
pub fn build_report(
    exec: &Execution,
    cost: CostModel,
    decision_model: DecisionModel,
    arch: Architecture,
    accounting: Accounting,
) -> RunReport {
    let mut scenarios = Vec::new();
    for (index, e) in exec.entries.iter().enumerate() {
        let faults = &exec.faults[e.faults.clone()];
        let hier_decisions = e.decisions.len() as u64;
        let (messages, decisions) = match arch {
            Architecture::Hierarchical => (counted(exec, e.messages.clone(), accounting), hier_decisions),
            Architecture::Centralized => {
                let m = run_centralized(faults);
                (m.messages, m.decisions)
            }
            Architecture::Decentralized => {
                let m = run_decentralized(faults, decision_model, hier_decisions);
                (m.messages, m.decisions)
            }
        };
        let handover = exec.decisions[e.decisions.clone()]
            .iter()
            .any(|d| d.action == Action::HandOverToSystemControl);
        scenarios.push(ScenarioRecord {
            index,
            scenario_type: e.scenario_type,
            token: e.token,
            faults: faults.len() as u64,
            messages,
            decisions,
            recovery_time_ms: cost.recovery_time(messages, decisions),
            bin: e.outcome,
            speed_after: (arch == Architecture::Hierarchical).then_some(e.speed_after),
            handover: handover && arch == Architecture::Hierarchical,
        });
    }

    let mut bins = BinTally::default();
    for e in &exec.entries {
        match e.outcome {
            BinOutcome::Binned { bin: 1 } => bins.bin1 += 1,
            BinOutcome::Binned { bin: 2 } => bins.bin2 += 1,
            BinOutcome::Binned { .. } => bins.bin3 += 1,
            BinOutcome::RanOff => bins.ran_off += 1,
            BinOutcome::Pending => {}
        }
    }

    let fault_count = exec.faults.len() as u64;
    let messages: u64 = scenarios.iter().map(|s| s.messages).sum();
    let decisions: u64 = scenarios.iter().map(|s| s.decisions).sum();
    let (reference_messages, message_delta) = match (arch, accounting) {
        (Architecture::Hierarchical, Accounting::Physical) => {
            let reference = counted(exec, 0..exec.messages.len(), Accounting::ScenarioOrigin);
            (Some(reference), Some(messages as i64 - reference as i64))
        }
        _ => (None, None),
    };
    let alternative = (arch == Architecture::Decentralized).then(|| {
        let other = match decision_model {
            DecisionModel::MirrorHierarchical => DecisionModel::TwoPerFault,
            DecisionModel::TwoPerFault => DecisionModel::MirrorHierarchical,
        };
        let m = run_decentralized(&exec.faults, other, exec.decisions.len() as u64);
        Alternative {
            decision_model: other,
            decisions: m.decisions,
            recovery_time_ms: cost.recovery_time(m.messages, m.decisions),
            diverges: m.decisions != decisions,
        }
    });

    RunReport {
        architecture: arch,
        accounting,
        decision_model: (arch == Architecture::Decentralized).then_some(decision_model),
        fault_count,
        messages,
        decisions,
        recovery_time_ms: cost.recovery_time(messages, decisions),
        cost,
        bins,
        handovers: if arch == Architecture::Hierarchical {
            exec.handovers() as u64
        } else {
            0
        },
        reference_messages,
        message_delta,
        alternative,
        config_digest: exec.config_digest.clone(),
        script_digest: exec.script_digest.clone(),
        scenarios,
    }
}

/// Executes the script and reports it under one architecture and accounting mode.
pub fn run_experiment(
    config: &Config,
    script: &ScenarioScript,
    arch: Architecture,
    accounting: Accounting,
) -> Result<RunReport, HarnessError> {
    let exec = execute(config, script)?;
    Ok(build_report(
        &exec,
        config.cost,
        config.decentralized.decision_model,
        arch,
        accounting,
    ))
}

#[derive(Serialize)]
struct Header {
    format: &'static str,
    version: u32,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    record: &'static str,
    #[serde(flatten)]
    inner: &'a T,
}

fn line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("records serialize"));
    out.push('\n');
}

/// Line-delimited JSON: a versioned header, the run summary, then one line per entry.
pub fn write_structured(report: &RunReport) -> String {
    let mut out = String::new();
    line(
        &mut out,
        &Header {
            format: REPORT_FORMAT,
            version: FORMAT_VERSION,
        },
    );
    line(
        &mut out,
        &Tagged {
            record: "run",
            inner: report,
        },
    );
    for s in &report.scenarios {
        line(
            &mut out,
            &Tagged {
                record: "scenario",
                inner: s,
            },
        );
    }
    out
}

pub fn read_structured(text: &str) -> Result<RunReport, HarnessError> {
    let bad = |m: String| HarnessError::Format(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: serde_json::Value = serde_json::from_str(lines.next().ok_or_else(|| bad("empty report".into()))?)
        .map_err(|e| bad(e.to_string()))?;
    if header["format"] != REPORT_FORMAT || header["version"] != FORMAT_VERSION {
        return Err(bad(format!("unsupported report header {header}")));
    }
    let mut report: Option<RunReport> = None;
    for l in lines {
        let v: serde_json::Value = serde_json::from_str(l).map_err(|e| bad(e.to_string()))?;
        match v["record"].as_str() {
            Some("run") => report = Some(serde_json::from_value(v).map_err(|e| bad(e.to_string()))?),
            Some("scenario") => {
                let s: ScenarioRecord = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
                report
                    .as_mut()
                    .ok_or_else(|| bad("scenario record before run record".into()))?
                    .scenarios
                    .push(s);
            }
            other => return Err(bad(format!("unknown record type {other:?}"))),
        }
    }
    report.ok_or_else(|| bad("no run record".into()))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    architecture: &'a str,
    accounting: &'a str,
    scenario: String,
    scenario_type: Option<u8>,
    token: Option<TokenId>,
    faults: u64,
    messages: u64,
    decisions: u64,
    recovery_time_ms: f64,
    bin: String,
    speed_after: String,
    handover: bool,
}

fn bin_label(b: BinOutcome) -> String {
    match b {
        BinOutcome::Pending => "pending".into(),
        BinOutcome::Binned { bin } => format!("bin{bin}"),
        BinOutcome::RanOff => "ran_off".into(),
    }
}

/// One row per entry followed by a `total` row.
pub fn write_csv(report: &RunReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let arch = report.architecture.name();
    let acc = report.accounting.name();
    let io = |e: csv::Error| HarnessError::Io(e.to_string());
    for s in &report.scenarios {
        w.serialize(CsvRow {
            architecture: arch,
            accounting: acc,
            scenario: s.index.to_string(),
            scenario_type: s.scenario_type,
            token: Some(s.token),
            faults: s.faults,
            messages: s.messages,
            decisions: s.decisions,
            recovery_time_ms: s.recovery_time_ms,
            bin: bin_label(s.bin),
            speed_after: s.speed_after.map(|v| v.name().to_string()).unwrap_or_default(),
            handover: s.handover,
        })
        .map_err(io)?;
    }
    w.serialize(CsvRow {
        architecture: arch,
        accounting: acc,
        scenario: "total".into(),
        scenario_type: None,
        token: None,
        faults: report.fault_count,
        messages: report.messages,
        decisions: report.decisions,
        recovery_time_ms: report.recovery_time_ms,
        bin: String::new(),
        speed_after: String::new(),
        handover: report.handovers > 0,
    })
    .map_err(io)?;
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Plant events, manager messages and decisions of one execution as JSON lines.
pub fn write_trace(exec: &Execution) -> String {
    let mut out = String::new();
    line(
        &mut out,
        &Header {
            format: TRACE_FORMAT,
            version: FORMAT_VERSION,
        },
    );
    for e in &exec.events {
        line(
            &mut out,
            &Tagged {
                record: "event",
                inner: e,
            },
        );
    }
    for m in &exec.messages {
        line(
            &mut out,
            &Tagged {
                record: "message",
                inner: m,
            },
        );
    }
    for d in &exec.decisions {
        line(
            &mut out,
            &Tagged {
                record: "decision",
                inner: d,
            },
        );
    }
    for f in &exec.faults {
        line(
            &mut out,
            &Tagged {
                record: "fault",
                inner: f,
            },
        );
    }
    out
}
