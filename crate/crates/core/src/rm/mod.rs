//! The resilience-manager hierarchy: leaf managers watching component contracts, a
//! latency manager with slack, and a root that degrades motor speed.

mod policy;
mod runtime;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ContractRegistry, Millis, ParamId, SpeedLevel};
use crate::observer::{ObserverError, TokenId, ViolationKind};
use crate::plant::PlantError;

pub use policy::{l1_evaluate, l2_decide, select_degraded_speed, L1Verdict};
pub use runtime::RmRuntime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("routing: {0}")]
    Routing(String),
    #[error("sequencing: {0}")]
    Sequencing(String),
    #[error("authority: {0}")]
    Authority(String),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Leaf,
    L1,
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Reports latency violations with the measured latency; no local recovery.
    LatencyLeaf,
    /// Reports timing jitter and diverts the token to the second bin.
    JitterLeaf,
    /// Absorbs latency violations within its own budget or escalates the excess.
    LatencyManager,
    Root,
}

impl Role {
    pub fn level(self) -> Level {
        match self {
            Role::LatencyLeaf | Role::JitterLeaf => Level::Leaf,
            Role::LatencyManager => Level::L1,
            Role::Root => Level::Root,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmNodeSpec {
    pub id: String,
    pub role: Role,
    #[serde(default)]
    pub parent: Option<String>,
    pub contracts: Vec<String>,
    pub host: String,
    /// The component starts work when the token reaches it rather than at LS1, so its
    /// LS1 trigger is taken from the activation instant.
    #[serde(default)]
    pub ls1_at_activation: bool,
}

/// The manager tree, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RmTopology {
    pub nodes: Vec<RmNodeSpec>,
}

impl RmTopology {
    /// Leaves on CP, BS and EC; the latency manager over CP and BS; the root on MC.
    pub fn sorting_line() -> Self {
        let node = |id: &str, role, parent: Option<&str>, contract: &str, host: &str| RmNodeSpec {
            id: id.into(),
            role,
            parent: parent.map(Into::into),
            contracts: vec![contract.into()],
            host: host.into(),
            ls1_at_activation: id == "CP",
        };
        RmTopology {
            nodes: vec![
                node("CP", Role::LatencyLeaf, Some("LM"), "C_CP", "CP"),
                node("BS", Role::LatencyLeaf, Some("LM"), "C_BS", "BS"),
                node("EC", Role::JitterLeaf, Some("MC"), "C_EC", "EC"),
                node("LM", Role::LatencyManager, Some("MC"), "C_LM", "BS"),
                node("MC", Role::Root, None, "C_MC", "MC"),
            ],
        }
    }

    pub fn node(&self, id: &str) -> Option<&RmNodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn root(&self) -> Option<&RmNodeSpec> {
        self.nodes.iter().find(|n| n.role == Role::Root)
    }

    pub fn children(&self, id: &str) -> Vec<&RmNodeSpec> {
        self.nodes.iter().filter(|n| n.parent.as_deref() == Some(id)).collect()
    }

    /// A node is parameterized when any of its contracts mentions the motor speed.
    pub fn is_parameterized(&self, id: &str, registry: &ContractRegistry) -> bool {
        self.node(id).is_some_and(|n| {
            n.contracts
                .iter()
                .filter_map(|c| registry.get(c))
                .any(|c| c.params.contains(&ParamId::MotorSpeed))
        })
    }

    pub fn validate(&self, registry: &ContractRegistry) -> Result<(), RmError> {
        let err = |m: String| Err(RmError::Topology(m));
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return err(format!("duplicate manager {}", n.id));
            }
        }
        let roots: Vec<_> = self.nodes.iter().filter(|n| n.role == Role::Root).collect();
        if roots.len() != 1 {
            return err(format!("expected exactly one root, found {}", roots.len()));
        }
        for n in &self.nodes {
            match (&n.parent, n.role) {
                (Some(_), Role::Root) => return err(format!("root {} has a parent", n.id)),
                (None, r) if r != Role::Root => return err(format!("{} has no parent", n.id)),
                (Some(p), _) => match self.node(p) {
                    None => return err(format!("{} names unknown parent {p}", n.id)),
                    Some(pn) if pn.role.level() <= n.role.level() => {
                        return err(format!("{} must sit below its parent {p}", n.id))
                    }
                    Some(pn) if n.role == Role::LatencyLeaf && pn.role != Role::LatencyManager => {
                        return err(format!("latency leaf {} must report to a latency manager", n.id))
                    }
                    _ => {}
                },
                _ => {}
            }
            if n.contracts.is_empty() {
                return err(format!("{} watches no contract", n.id));
            }
            for c in &n.contracts {
                if registry.get(c).is_none() {
                    return err(format!("{} watches undefined contract {c}", n.id));
                }
            }
            if n.role == Role::LatencyManager && self.children(&n.id).is_empty() {
                return err(format!("latency manager {} has no children", n.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    Latency,
    Jitter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultReport {
    pub from: String,
    pub contract: String,
    pub fault_class: FaultClass,
    pub observed_latency: Option<Millis>,
    pub violation_amount: Option<Millis>,
    pub token: TokenId,
    pub t: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterUpdate {
    pub param: ParamId,
    pub value: SpeedLevel,
    pub t: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    Report(FaultReport),
    Update(ParameterUpdate),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub t: Millis,
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub payload: Payload,
    /// A leaf report that the latency manager escalated; the escalation stands in for it
    /// under scenario-origin accounting.
    pub subsumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "speed", rename_all = "snake_case")]
pub enum Action {
    NoAction,
    Absorb,
    Escalate,
    SetSpeed(SpeedLevel),
    HandOverToSystemControl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub maker: String,
    pub t: Millis,
    pub token: Option<TokenId>,
    #[serde(flatten)]
    pub action: Action,
}

/// Which inter-manager messages are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accounting {
    /// Each fault is counted from the manager that reports it in the scenario taxonomy.
    ScenarioOrigin,
    /// Every hop is counted.
    Physical,
}

impl Accounting {
    pub fn counts(self, m: &Message) -> bool {
        match self {
            Accounting::ScenarioOrigin => !m.subsumed,
            Accounting::Physical => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Accounting::ScenarioOrigin => "scenario-origin",
            Accounting::Physical => "physical",
        }
    }
}

/// A component-level contract violation, as a baseline architecture would see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub token: TokenId,
    pub node: String,
    pub contract: String,
    pub kind: ViolationKind,
    pub t: Millis,
}
