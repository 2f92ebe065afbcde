use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::predicate::{Predicate, Term};
use super::types::{LatencyFn, ParamId, SignalId, Value};
use super::{Contract, ContractError, GuaranteeClause};

/// Per-speed latency budgets of the colour processor, bin selector and latency manager.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTables {
    pub cp: LatencyFn,
    pub bs: LatencyFn,
    pub lm: LatencyFn,
}

impl Default for LatencyTables {
    fn default() -> Self {
        LatencyTables {
            cp: LatencyFn::new("f_CP", [200, 400, 800]).expect("monotone"),
            bs: LatencyFn::new("f_BS", [200, 400, 800]).expect("monotone"),
            lm: LatencyFn::new("f_LM", [600, 1800, 3600]).expect("monotone"),
        }
    }
}

/// Named contracts, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractRegistry {
    contracts: BTreeMap<String, Contract>,
}

/// `s != null`, with zero standing for an uninitialised step count.
fn set(s: SignalId) -> Predicate {
    Predicate::neq(Term::signal(s), Term::Lit(Value::unset(s.domain())))
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, c: Contract) {
        self.contracts.insert(c.name.clone(), c);
    }

    pub fn get(&self, name: &str) -> Option<&Contract> {
        self.contracts.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.contracts.keys().map(String::as_str)
    }

    /// The five contracts of the sorting line: colour processor, bin selector, latency
    /// manager, ejector controller and motor controller.
    pub fn sorting_line(tables: &LatencyTables, offset: u64) -> Result<ContractRegistry, ContractError> {
        let speed = [ParamId::MotorSpeed];
        let cp_done = Predicate::and(vec![set(SignalId::ScCp), set(SignalId::CvCp)]);
        let bs_trigger = Predicate::and(vec![set(SignalId::CvCp), set(SignalId::ScCp)]);
        let bs_done = Predicate::and(vec![set(SignalId::ScBs), set(SignalId::EBs)]);
        let lm_clause =
            GuaranteeClause::bounded(Predicate::RisingEdge(SignalId::Ls1), bs_done.clone(), tables.lm.clone());
        let ec_clause = GuaranteeClause::biconditional(
            Predicate::RisingEdge(SignalId::Ls2),
            Predicate::eq(
                Term::signal(SignalId::Sc),
                Term::Shifted {
                    base: SignalId::ScCp,
                    offset,
                },
            ),
        );

        let mut reg = ContractRegistry::new();
        reg.insert(Contract::new(
            "C_CP",
            [SignalId::Ls1],
            [SignalId::ScCp, SignalId::CvCp],
            speed,
            Predicate::speed_domain(),
            vec![GuaranteeClause::bounded(
                Predicate::RisingEdge(SignalId::Ls1),
                cp_done,
                tables.cp.clone(),
            )],
        )?);
        reg.insert(Contract::new(
            "C_BS",
            [SignalId::ScCp, SignalId::CvCp],
            [SignalId::EBs, SignalId::ScBs],
            speed,
            Predicate::speed_domain(),
            vec![GuaranteeClause::bounded(bs_trigger, bs_done, tables.bs.clone())],
        )?);
        reg.insert(Contract::new(
            "C_LM",
            [SignalId::Ls1],
            [SignalId::EBs, SignalId::ScBs],
            speed,
            Predicate::speed_domain(),
            vec![lm_clause.clone()],
        )?);
        reg.insert(Contract::new(
            "C_EC",
            [SignalId::Sc, SignalId::ScCp, SignalId::Ls2],
            [],
            [],
            Predicate::True,
            vec![ec_clause.clone()],
        )?);
        reg.insert(Contract::new(
            "C_MC",
            [SignalId::Sc, SignalId::ScCp, SignalId::Ls1, SignalId::Ls2],
            [SignalId::EBs, SignalId::ScBs],
            speed,
            Predicate::speed_domain(),
            vec![lm_clause, ec_clause],
        )?);
        Ok(reg)
    }
}
