use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::algebra::{check_refinement, compose, RefinementReport};
use super::registry::{ContractRegistry, LatencyTables};
use super::types::{Millis, SpeedLevel};
use super::ContractError;

/// A contract tree: each parent contract lists the contracts whose composition must refine it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub root: String,
    pub children: BTreeMap<String, Vec<String>>,
}

impl HierarchySpec {
    /// `C_MC ← {C_LM ← {C_CP, C_BS}, C_EC}`
    pub fn sorting_line() -> Self {
        HierarchySpec {
            root: "C_MC".into(),
            children: BTreeMap::from([
                ("C_MC".to_string(), vec!["C_LM".to_string(), "C_EC".to_string()]),
                ("C_LM".to_string(), vec!["C_CP".to_string(), "C_BS".to_string()]),
            ]),
        }
    }

    pub fn single(root: impl Into<String>) -> Self {
        HierarchySpec {
            root: root.into(),
            children: BTreeMap::new(),
        }
    }

    /// Nodes in depth-first pre-order; fails unless the hierarchy is a tree rooted at `root`.
    pub fn nodes(&self) -> Result<Vec<String>, ContractError> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                return Err(ContractError::Hierarchy(format!(
                    "{n} is reachable twice (cycle or shared child)"
                )));
            }
            if let Some(kids) = self.children.get(&n) {
                stack.extend(kids.iter().rev().cloned());
            }
            order.push(n);
        }
        if let Some(orphan) = self.children.keys().find(|k| !seen.contains(*k)) {
            return Err(ContractError::Hierarchy(format!(
                "{orphan} is not reachable from {}",
                self.root
            )));
        }
        Ok(order)
    }
}

/// Plant figures needed for the latency ordering check.
#[derive(Debug, Clone, Copy)]
pub struct TimingInputs<'a> {
    pub tables: &'a LatencyTables,
    pub offset: u64,
    pub step_period: [Millis; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub speed: SpeedLevel,
    pub chain: Millis,
    pub lm: Millis,
    pub travel: Millis,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub contract: String,
    pub children: Vec<String>,
    pub refinement: Option<RefinementReport>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyReport {
    pub nodes: Vec<NodeReport>,
    pub timing: Vec<TimingRow>,
    pub passed: bool,
}

impl HierarchyReport {
    pub fn node(&self, name: &str) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.contract == name)
    }
}

/// Composes the children of every inner node and checks the result refines the parent.
/// With `timing`, also checks `f_CP(s) + f_BS(s) < f_LM(s) < Offset * step_period(s)`.
pub fn validate_hierarchy(
    spec: &HierarchySpec,
    registry: &ContractRegistry,
    timing: Option<TimingInputs<'_>>,
) -> Result<HierarchyReport, ContractError> {
    let order = spec.nodes()?;
    for name in &order {
        if registry.get(name).is_none() {
            return Err(ContractError::Hierarchy(format!("contract {name} is not defined")));
        }
    }

    let mut nodes = Vec::new();
    for name in &order {
        let children = spec.children.get(name).cloned().unwrap_or_default();
        if children.is_empty() {
            nodes.push(NodeReport {
                contract: name.clone(),
                children,
                refinement: None,
                passed: true,
            });
            continue;
        }
        let mut composed = registry.get(&children[0]).expect("checked").clone();
        for child in &children[1..] {
            composed = compose(&composed, registry.get(child).expect("checked"))?;
        }
        let report = check_refinement(&composed, registry.get(name).expect("checked"))?;
        nodes.push(NodeReport {
            contract: name.clone(),
            children,
            passed: report.holds,
            refinement: Some(report),
        });
    }

    let timing: Vec<TimingRow> = timing
        .map(|t| {
            SpeedLevel::ALL
                .iter()
                .map(|&s| {
                    let chain = t.tables.cp.bound(s) + t.tables.bs.bound(s);
                    let lm = t.tables.lm.bound(s);
                    let travel = t.offset * t.step_period[s.index()];
                    TimingRow {
                        speed: s,
                        chain,
                        lm,
                        travel,
                        ok: chain < lm && lm < travel,
                    }
                })
                .collect()
        })
        .unwrap_or_default();

    let passed = nodes.iter().all(|n| n.passed) && timing.iter().all(|r| r.ok);
    Ok(HierarchyReport { nodes, timing, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::LatencyFn;

    const PERIODS: [Millis; 3] = [50, 100, 200];

    #[test]
    fn default_hierarchy_passes() {
        let tables = LatencyTables::default();
        let reg = ContractRegistry::sorting_line(&tables, 20).unwrap();
        let timing = TimingInputs {
            tables: &tables,
            offset: 20,
            step_period: PERIODS,
        };
        let report = validate_hierarchy(&HierarchySpec::sorting_line(), &reg, Some(timing)).unwrap();
        assert!(report.passed, "{report:#?}");
        assert_eq!(report.nodes.len(), 5);
        assert!(report.timing.iter().all(|r| r.ok));
    }

    #[test]
    fn single_node_passes_trivially() {
        let reg = ContractRegistry::sorting_line(&LatencyTables::default(), 20).unwrap();
        let report = validate_hierarchy(&HierarchySpec::single("C_CP"), &reg, None).unwrap();
        assert!(report.passed);
        assert_eq!(report.nodes.len(), 1);
    }

    #[test]
    fn tight_lm_fails_at_lm_node() {
        let tables = LatencyTables {
            lm: LatencyFn::new("f_LM", [350, 1800, 3600]).unwrap(),
            ..LatencyTables::default()
        };
        let reg = ContractRegistry::sorting_line(&tables, 20).unwrap();
        let report = validate_hierarchy(&HierarchySpec::sorting_line(), &reg, None).unwrap();
        assert!(!report.passed);
        assert!(!report.node("C_LM").unwrap().passed);
        assert!(report.node("C_MC").unwrap().passed);
    }

    #[test]
    fn cycles_and_unknown_contracts_are_input_errors() {
        let reg = ContractRegistry::sorting_line(&LatencyTables::default(), 20).unwrap();
        let mut spec = HierarchySpec::sorting_line();
        spec.children.insert("C_CP".into(), vec!["C_LM".into()]);
        assert!(validate_hierarchy(&spec, &reg, None).is_err());

        let mut spec = HierarchySpec::sorting_line();
        spec.children.insert("C_XX".into(), vec!["C_CP".into()]);
        assert!(validate_hierarchy(&spec, &reg, None).is_err());

        let spec = HierarchySpec::single("C_NOPE");
        assert!(validate_hierarchy(&spec, &reg, None).is_err());
    }
}
