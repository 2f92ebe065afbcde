use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::DecisionModel;
use crate::contract::{
    validate_hierarchy, ContractRegistry, GapReason, HierarchySpec, LatencyFn, LatencyTables, Millis, TimingInputs,
};
use crate::plant::PlantConfig;
use crate::rm::{RmNodeSpec, RmTopology};

use super::HarnessError;

/// Per-speed bounds `[S1, S2, S3]` in milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub cp: [Millis; 3],
    pub bs: [Millis; 3],
    pub lm: [Millis; 3],
}

impl Default for LatencyConfig {
    fn default() -> Self {
        let t = LatencyTables::default();
        LatencyConfig {
            cp: t.cp.bounds(),
            bs: t.bs.bounds(),
            lm: t.lm.bounds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub message_ms: f64,
    pub decision_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            message_ms: 1.0,
            decision_ms: 0.5,
        }
    }
}

impl CostModel {
    pub fn recovery_time(&self, messages: u64, decisions: u64) -> f64 {
        messages as f64 * self.message_ms + decisions as f64 * self.decision_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecentralizedConfig {
    pub decision_model: DecisionModel,
}

impl Default for DecentralizedConfig {
    fn default() -> Self {
        DecentralizedConfig {
            decision_model: DecisionModel::MirrorHierarchical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plant: PlantConfig,
    pub latency: LatencyConfig,
    pub hierarchy: HierarchySpec,
    pub managers: Vec<RmNodeSpec>,
    pub cost: CostModel,
    pub decentralized: DecentralizedConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            plant: PlantConfig::default(),
            latency: LatencyConfig::default(),
            hierarchy: HierarchySpec::sorting_line(),
            managers: RmTopology::sorting_line().nodes,
            cost: CostModel::default(),
            decentralized: DecentralizedConfig::default(),
        }
    }
}

/// Outcome of the startup checks, one line per check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub lines: Vec<String>,
    pub passed: bool,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn tables(&self) -> Result<LatencyTables, HarnessError> {
        let f = |name: &str, b| LatencyFn::new(name, b).map_err(|e| HarnessError::Validation(e.to_string()));
        Ok(LatencyTables {
            cp: f("f_CP", self.latency.cp)?,
            bs: f("f_BS", self.latency.bs)?,
            lm: f("f_LM", self.latency.lm)?,
        })
    }

    pub fn registry(&self) -> Result<ContractRegistry, HarnessError> {
        ContractRegistry::sorting_line(&self.tables()?, self.plant.offset())
            .map_err(|e| HarnessError::Validation(e.to_string()))
    }

    pub fn topology(&self) -> RmTopology {
        RmTopology {
            nodes: self.managers.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Plant geometry, latency tables, contract refinement along the hierarchy, the
    /// latency ordering per speed, and the manager tree.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport {
            lines: Vec::new(),
            passed: true,
        };
        match self.plant.validate() {
            Ok(()) => r.check(true, format!("plant geometry: ok (Offset = {})", self.plant.offset())),
            Err(e) => r.check(false, format!("plant geometry: FAIL: {e}")),
        }
        let tables = match self.tables() {
            Ok(t) => t,
            Err(e) => {
                r.check(false, format!("latency tables: FAIL: {e}"));
                return r;
            }
        };
        r.check(true, "latency tables: ok".into());
        if !r.passed {
            return r;
        }
        let registry = match ContractRegistry::sorting_line(&tables, self.plant.offset()) {
            Ok(reg) => reg,
            Err(e) => {
                r.check(false, format!("contracts: FAIL: {e}"));
                return r;
            }
        };
        let timing = TimingInputs {
            tables: &tables,
            offset: self.plant.offset(),
            step_period: self.plant.step_period_ms,
        };
        match validate_hierarchy(&self.hierarchy, &registry, Some(timing)) {
            Ok(report) => {
                for node in &report.nodes {
                    let Some(refinement) = &node.refinement else {
                        continue;
                    };
                    let verdict = if node.passed { "refines" } else { "FAIL" };
                    r.check(
                        node.passed,
                        format!("contract {} <- {}: {verdict}", node.contract, node.children.join(" x ")),
                    );
                    for gap in &refinement.guarantee_counterexamples {
                        let mut s = format!("  clause {}: ", gap.super_clause);
                        match &gap.reason {
                            GapReason::Unmatched => s.push_str("no matching clause"),
                            GapReason::DeadlineExceeded { speed, sub, sup } => {
                                let _ = write!(s, "counterexample at {speed}: composed deadline {sub} > {sup}");
                            }
                        }
                        r.lines.push(s);
                    }
                    for env in &refinement.assumption_counterexamples {
                        r.lines.push(format!("  assumption counterexample: {env}"));
                    }
                }
                for row in &report.timing {
                    r.check(
                        row.ok,
                        format!(
                            "timing {}: f_CP+f_BS = {} < f_LM = {} < Offset x step = {}: {}",
                            row.speed,
                            row.chain,
                            row.lm,
                            row.travel,
                            if row.ok { "ok" } else { "FAIL" }
                        ),
                    );
                }
            }
            Err(e) => r.check(false, format!("contract hierarchy: FAIL: {e}")),
        }
        match self.topology().validate(&registry) {
            Ok(()) => r.check(true, "manager topology: ok".into()),
            Err(e) => r.check(false, format!("manager topology: FAIL: {e}")),
        }
        r
    }
}

impl ValidationReport {
    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(line);
    }
}
