//! Centralized and decentralized resilience architectures, evaluated over the fault list
//! of a plant run.

use serde::{Deserialize, Serialize};

use crate::rm::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Hierarchical,
    Centralized,
    Decentralized,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Hierarchical => "hierarchical",
            Architecture::Centralized => "centralized",
            Architecture::Decentralized => "decentralized",
        }
    }
}

/// How many decisions a decentralized run takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionModel {
    /// As many decisions as the hierarchical run over the same faults.
    MirrorHierarchical,
    /// Two decisions per fault.
    TwoPerFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchMetrics {
    pub messages: u64,
    pub decisions: u64,
}

pub const CENTRALIZED_MESSAGES_PER_FAULT: u64 = 4;
pub const DECENTRALIZED_MESSAGES_PER_FAULT: u64 = 9;

/// One report to the central manager and one response to each of three components.
pub fn run_centralized(faults: &[Fault]) -> ArchMetrics {
    let n = faults.len() as u64;
    ArchMetrics {
        messages: CENTRALIZED_MESSAGES_PER_FAULT * n,
        decisions: n,
    }
}

/// Three rounds of three messages per fault: report, proposals, chosen solution.
/// `hierarchical_decisions` is the decision count of the hierarchical run over `faults`.
pub fn run_decentralized(faults: &[Fault], model: DecisionModel, hierarchical_decisions: u64) -> ArchMetrics {
    let n = faults.len() as u64;
    ArchMetrics {
        messages: DECENTRALIZED_MESSAGES_PER_FAULT * n,
        decisions: match model {
            DecisionModel::MirrorHierarchical => hierarchical_decisions,
            DecisionModel::TwoPerFault => 2 * n,
        },
    }
}
