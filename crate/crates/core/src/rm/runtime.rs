use std::collections::{BTreeMap, BTreeSet};

use crate::contract::{
    ClauseMode, Contract, ContractRegistry, Ejector, LatencyFn, Millis, ParamId, SignalId, SpeedLevel, Value,
};
use crate::observer::{
    compile_observer, Departure, Event, EventKind, Observer, ObserverInput, ObserverOutcome, TokenId, ViolationKind,
};
use crate::plant::{BinOutcome, Plant};

use super::policy::{l1_evaluate, l2_decide};
use super::{
    Action, Decision, Fault, FaultClass, FaultReport, Message, ParameterUpdate, Payload, RmError, RmTopology, Role,
};

/// Deadline of the first bounded-response clause of a contract.
fn response_budget(c: &Contract) -> Option<&LatencyFn> {
    c.guarantees
        .iter()
        .find(|g| g.mode == ClauseMode::BoundedResponse)
        .and_then(|g| g.deadline.as_ref())
}

/// Event as seen by a component that starts work when the token reaches it.
fn activation_view(e: &Event) -> Option<Event> {
    match (&e.kind, e.edge_signal()) {
        (_, Some(SignalId::Ls1)) => None,
        (EventKind::CpActivated, _) => Some(Event {
            kind: EventKind::Signal {
                signal: SignalId::Ls1,
                value: Value::Edge(true),
            },
            ..e.clone()
        }),
        _ => Some(e.clone()),
    }
}

/// All managers of one simulation, driven in lockstep with the plant.
#[derive(Debug, Clone)]
pub struct RmRuntime {
    topology: RmTopology,
    registry: ContractRegistry,
    observers: BTreeMap<String, Vec<Observer>>,
    speeds: BTreeMap<String, SpeedLevel>,
    reported: BTreeSet<(String, TokenId)>,
    diverted: BTreeSet<TokenId>,
    actuals: BTreeMap<(String, TokenId), BTreeMap<String, Millis>>,
    batches: BTreeMap<TokenId, Vec<FaultReport>>,
    expected_bin: BTreeMap<TokenId, u8>,
    violations: Vec<(String, ObserverOutcome)>,
    messages: Vec<Message>,
    decisions: Vec<Decision>,
    faults: Vec<Fault>,
}

impl RmRuntime {
    pub fn new(topology: RmTopology, registry: ContractRegistry, speed: SpeedLevel) -> Result<Self, RmError> {
        topology.validate(&registry)?;
        let mut observers = BTreeMap::new();
        let mut speeds = BTreeMap::new();
        for n in &topology.nodes {
            speeds.insert(n.id.clone(), speed);
            if n.role.level() == super::Level::Leaf {
                let mut obs = Vec::new();
                for c in &n.contracts {
                    let mut o = compile_observer(registry.get(c).expect("validated"))?;
                    o.set_param(0, speed)?;
                    obs.push(o);
                }
                observers.insert(n.id.clone(), obs);
            }
        }
        Ok(RmRuntime {
            topology,
            registry,
            observers,
            speeds,
            reported: BTreeSet::new(),
            diverted: BTreeSet::new(),
            actuals: BTreeMap::new(),
            batches: BTreeMap::new(),
            expected_bin: BTreeMap::new(),
            violations: Vec::new(),
            messages: Vec::new(),
            decisions: Vec::new(),
            faults: Vec::new(),
        })
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    /// First violation of each leaf for each token.
    pub fn faults(&self) -> &[Fault] {
        &self.faults
    }

    /// Every violated observer outcome, with the leaf that observed it.
    pub fn violations(&self) -> &[(String, ObserverOutcome)] {
        &self.violations
    }

    pub fn speed(&self, node: &str) -> Option<SpeedLevel> {
        self.speeds.get(node).copied()
    }

    fn root_id(&self) -> String {
        self.topology.root().expect("validated").id.clone()
    }

    /// Feeds one plant event to every leaf observer and runs the resulting protocol.
    pub fn on_event(&mut self, e: &Event, plant: &mut Plant) -> Result<(), RmError> {
        if let (
            EventKind::Signal {
                signal: SignalId::EBs,
                value: Value::Ejector(Some(ej)),
            },
            Some(token),
        ) = (&e.kind, e.token)
        {
            self.expected_bin.insert(token, ej.bin());
        }

        let leaves: Vec<(String, bool)> = self
            .topology
            .nodes
            .iter()
            .filter(|n| self.observers.contains_key(&n.id))
            .map(|n| (n.id.clone(), n.ls1_at_activation))
            .collect();
        for (leaf, retime) in leaves {
            let view = if retime { activation_view(e) } else { Some(e.clone()) };
            let Some(view) = view else { continue };
            let mut outcomes = Vec::new();
            for obs in self.observers.get_mut(&leaf).expect("leaf") {
                outcomes.extend(obs.observe(ObserverInput::Event(view.clone()))?);
            }
            for o in outcomes.iter().filter(|o| o.is_violation()) {
                self.leaf_on_violation(&leaf, o, plant)?;
            }
        }

        if let (EventKind::Departed { departure }, Some(token)) = (&e.kind, e.token) {
            let outcome = match departure {
                Departure::Binned { bin } => BinOutcome::Binned { bin: *bin },
                Departure::RanOff => BinOutcome::RanOff,
            };
            self.root_decide(token, outcome, e.t, plant)?;
        }
        Ok(())
    }

    /// Closes all observers at the end of a run. Open activations become violations and
    /// are reported; the root no longer decides for tokens still on the belt.
    pub fn finish(&mut self, t: Millis, plant: &mut Plant) -> Result<(), RmError> {
        let leaves: Vec<String> = self.observers.keys().cloned().collect();
        for leaf in leaves {
            let mut outcomes = Vec::new();
            for obs in self.observers.get_mut(&leaf).expect("leaf") {
                outcomes.extend(obs.observe(ObserverInput::End(t))?);
            }
            for o in outcomes.iter().filter(|o| o.is_violation()) {
                self.leaf_on_violation(&leaf, o, plant)?;
            }
        }
        Ok(())
    }

    /// Leaf reaction to a violated contract: one report per token to the parent, and for
    /// the jitter leaf a diversion of the token to the second bin once LS2 is seen.
    pub fn leaf_on_violation(
        &mut self,
        leaf: &str,
        outcome: &ObserverOutcome,
        plant: &mut Plant,
    ) -> Result<(), RmError> {
        let node = self
            .topology
            .node(leaf)
            .ok_or_else(|| RmError::Routing(format!("unknown manager {leaf}")))?
            .clone();
        if node.role.level() != super::Level::Leaf || !node.contracts.contains(&outcome.contract) {
            return Err(RmError::Routing(format!(
                "{} is not watched by {leaf}",
                outcome.contract
            )));
        }
        if !outcome.is_violation() {
            return Ok(());
        }
        let token = outcome
            .token
            .ok_or_else(|| RmError::Routing(format!("violation of {} without a token", outcome.contract)))?;
        self.violations.push((leaf.to_string(), outcome.clone()));

        if node.role == Role::JitterLeaf
            && outcome.violation_kind == Some(ViolationKind::UnexpectedTrigger)
            && self.diverted.insert(token)
        {
            let cfg = plant.config();
            let at = plant.sc() + (cfg.ejector_pos(Ejector::E2) - cfg.ls2_pos);
            plant.command_ejection(token, Ejector::E2, at)?;
        }

        if !self.reported.insert((leaf.to_string(), token)) {
            return Ok(());
        }
        self.faults.push(Fault {
            token,
            node: leaf.to_string(),
            contract: outcome.contract.clone(),
            kind: outcome.violation_kind.unwrap_or(ViolationKind::DeadlineExceeded),
            t: outcome.t,
        });
        let report = match node.role {
            Role::JitterLeaf => FaultReport {
                from: leaf.to_string(),
                contract: outcome.contract.clone(),
                fault_class: FaultClass::Jitter,
                observed_latency: None,
                violation_amount: None,
                token,
                t: outcome.t,
            },
            _ => FaultReport {
                from: leaf.to_string(),
                contract: outcome.contract.clone(),
                fault_class: FaultClass::Latency,
                // a result that never arrived has taken at least this long
                observed_latency: outcome
                    .observed_latency
                    .or_else(|| outcome.armed_at.map(|a| outcome.t - a)),
                violation_amount: None,
                token,
                t: outcome.t,
            },
        };
        let parent = node.parent.clone().expect("leaves have parents");
        self.deliver(leaf, &parent, report, plant)
    }

    fn deliver(&mut self, from: &str, to: &str, report: FaultReport, plant: &mut Plant) -> Result<(), RmError> {
        let index = self.messages.len();
        self.messages.push(Message {
            t: report.t,
            from: from.to_string(),
            to: to.to_string(),
            payload: Payload::Report(report.clone()),
            subsumed: false,
        });
        let recipient = self
            .topology
            .node(to)
            .ok_or_else(|| RmError::Routing(format!("unknown manager {to}")))?
            .clone();
        match recipient.role {
            Role::LatencyManager => self.l1_receive(&recipient.id, index, report, plant),
            Role::Root => {
                self.batches.entry(report.token).or_default().push(report);
                Ok(())
            }
            _ => Err(RmError::Routing(format!("{to} does not accept reports"))),
        }
    }

    fn l1_receive(&mut self, l1: &str, index: usize, report: FaultReport, plant: &mut Plant) -> Result<(), RmError> {
        let children: Vec<String> = self.topology.children(l1).iter().map(|n| n.id.clone()).collect();
        if !children.contains(&report.from) {
            return Err(RmError::Routing(format!(
                "{l1} received a report from non-child {}",
                report.from
            )));
        }
        let latency = report
            .observed_latency
            .ok_or_else(|| RmError::Routing(format!("latency report from {} lacks C_L", report.from)))?;
        let actuals = self.actuals.entry((l1.to_string(), report.token)).or_default();
        actuals.insert(report.from.clone(), latency);
        let actuals = actuals.clone();

        let speed = self.speeds[l1];
        let node = self.topology.node(l1).expect("known").clone();
        let budget_of = |contracts: &[String]| {
            contracts
                .iter()
                .filter_map(|c| self.registry.get(c))
                .find_map(response_budget)
                .cloned()
        };
        let own = budget_of(&node.contracts)
            .ok_or_else(|| RmError::Topology(format!("{l1} watches no bounded-response contract")))?;
        let mut parts = Vec::new();
        for child in &children {
            let spec = self.topology.node(child).expect("known");
            let bound = budget_of(&spec.contracts).map_or(0, |f| f.bound(speed));
            parts.push((actuals.get(child).copied(), bound));
        }
        let verdict = l1_evaluate(&parts, own.bound(speed));
        self.decisions.push(Decision {
            maker: l1.to_string(),
            t: report.t,
            token: Some(report.token),
            action: verdict.action,
        });
        if verdict.action == Action::Escalate {
            self.messages[index].subsumed = true;
            let escalation = FaultReport {
                from: l1.to_string(),
                contract: node.contracts[0].clone(),
                fault_class: FaultClass::Latency,
                observed_latency: Some(verdict.total),
                violation_amount: verdict.violation,
                token: report.token,
                t: report.t,
            };
            let parent = node.parent.clone().expect("L1 has a parent");
            self.deliver(l1, &parent, escalation, plant)?;
        }
        Ok(())
    }

    fn root_decide(
        &mut self,
        token: TokenId,
        outcome: BinOutcome,
        t: Millis,
        plant: &mut Plant,
    ) -> Result<(), RmError> {
        let Some(batch) = self.batches.remove(&token) else {
            return Ok(());
        };
        let root = self.root_id();
        let current = self.speeds[&root];
        let f_lm = batch
            .iter()
            .filter(|r| r.violation_amount.is_some())
            .filter_map(|r| self.registry.get(&r.contract))
            .find_map(response_budget)
            .or_else(|| {
                self.topology
                    .nodes
                    .iter()
                    .filter(|n| n.role == Role::LatencyManager)
                    .flat_map(|n| n.contracts.iter())
                    .filter_map(|c| self.registry.get(c))
                    .find_map(response_budget)
            })
            .cloned()
            .unwrap_or_else(|| LatencyFn::new("none", [0, 0, 0]).expect("monotone"));
        let action = l2_decide(&batch, outcome, self.expected_bin.get(&token).copied(), current, &f_lm)?;
        self.decisions.push(Decision {
            maker: root.clone(),
            t,
            token: Some(token),
            action,
        });
        if let Action::SetSpeed(speed) = action {
            plant.set_speed(speed);
            self.speeds.insert(root.clone(), speed);
            self.propagate_update(
                &root,
                ParameterUpdate {
                    param: ParamId::MotorSpeed,
                    value: speed,
                    t,
                },
            )?;
        }
        Ok(())
    }

    /// Sends a speed update to every parameterized manager below the root; the root
    /// applies it locally.
    pub fn propagate_update(&mut self, issuer: &str, update: ParameterUpdate) -> Result<usize, RmError> {
        let root = self.root_id();
        if issuer != root {
            return Err(RmError::Authority(format!("{issuer} may not issue parameter updates")));
        }
        let recipients: Vec<String> = self
            .topology
            .nodes
            .iter()
            .filter(|n| n.id != root && self.topology.is_parameterized(&n.id, &self.registry))
            .map(|n| n.id.clone())
            .collect();
        for to in &recipients {
            self.messages.push(Message {
                t: update.t,
                from: root.clone(),
                to: to.clone(),
                payload: Payload::Update(update),
                subsumed: false,
            });
            self.apply_speed(to, update.t, update.value)?;
        }
        Ok(recipients.len())
    }

    fn apply_speed(&mut self, node: &str, t: Millis, speed: SpeedLevel) -> Result<(), RmError> {
        self.speeds.insert(node.to_string(), speed);
        if let Some(obs) = self.observers.get_mut(node) {
            for o in obs {
                o.set_param(t, speed)?;
            }
        }
        Ok(())
    }

    /// Puts every manager back to `speed` outside the protocol (no messages).
    pub fn reset_speed(&mut self, t: Millis, speed: SpeedLevel) -> Result<(), RmError> {
        let ids: Vec<String> = self.topology.nodes.iter().map(|n| n.id.clone()).collect();
        for id in ids {
            self.apply_speed(&id, t, speed)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{Colour, LatencyTables};
    use crate::observer::Verdict;
    use crate::plant::{init_plant, Component, Injection, InjectionKind, InjectionTarget, LatencyChange, PlantConfig};

    fn runtime() -> RmRuntime {
        let reg = ContractRegistry::sorting_line(&LatencyTables::default(), 20).unwrap();
        RmRuntime::new(RmTopology::sorting_line(), reg, SpeedLevel::S1).unwrap()
    }

    /// Places one white token with `injections` and runs it to its decision.
    fn run(injections: &[InjectionKind]) -> (RmRuntime, Plant, TokenId) {
        let mut rm = runtime();
        let mut plant = init_plant(PlantConfig::default()).unwrap();
        let at = plant.next_step_at();
        let id = plant.place_token(Colour::W, at).unwrap();
        for &kind in injections {
            plant
                .inject(Injection {
                    kind,
                    target: InjectionTarget::Token(id),
                })
                .unwrap();
        }
        while plant.bin_outcome(id).unwrap() == BinOutcome::Pending {
            for e in plant.advance_next() {
                rm.on_event(&e, &mut plant).unwrap();
            }
        }
        (rm, plant, id)
    }

    fn latency(component: Component, ms: Millis) -> InjectionKind {
        InjectionKind::LatencyInflation {
            component,
            change: LatencyChange::Absolute(ms),
        }
    }

    fn actions(rm: &RmRuntime) -> Vec<(String, Action)> {
        rm.decisions().iter().map(|d| (d.maker.clone(), d.action)).collect()
    }

    #[test]
    fn fault_free_token_is_silent() {
        let (rm, plant, id) = run(&[]);
        assert!(rm.messages().is_empty());
        assert!(rm.decisions().is_empty());
        assert_eq!(plant.bin_outcome(id).unwrap(), BinOutcome::Binned { bin: 1 });
    }

    #[test]
    fn cp_fault_is_absorbed() {
        let (rm, _, _) = run(&[latency(Component::Cp, 250)]);
        assert_eq!(rm.messages().len(), 1);
        let Payload::Report(r) = &rm.messages()[0].payload else {
            panic!()
        };
        assert_eq!((r.from.as_str(), r.observed_latency), ("CP", Some(250)));
        assert_eq!(actions(&rm), vec![("LM".to_string(), Action::Absorb)]);
    }

    #[test]
    fn two_faults_two_absorbs() {
        let (rm, _, _) = run(&[latency(Component::Cp, 250), latency(Component::Bs, 250)]);
        assert_eq!(rm.messages().len(), 2);
        assert_eq!(
            actions(&rm),
            vec![("LM".into(), Action::Absorb), ("LM".into(), Action::Absorb)]
        );
    }

    #[test]
    fn large_bs_fault_degrades_to_s2() {
        let (rm, plant, id) = run(&[latency(Component::Bs, 1550)]);
        assert_eq!(plant.bin_outcome(id).unwrap(), BinOutcome::RanOff);
        assert_eq!(
            actions(&rm),
            vec![
                ("LM".into(), Action::Escalate),
                ("MC".into(), Action::SetSpeed(SpeedLevel::S2))
            ]
        );
        let Payload::Report(esc) = &rm.messages()[1].payload else {
            panic!()
        };
        assert_eq!(esc.violation_amount, Some(1550 + 200 - 600));
        assert!(rm.messages()[0].subsumed);
        assert_eq!(rm.messages().len(), 1 + 1 + 3);
        assert_eq!(plant.target_speed(), SpeedLevel::S2);
        assert_eq!(rm.speed("CP"), Some(SpeedLevel::S2));
        assert_eq!(rm.speed("EC"), Some(SpeedLevel::S1));
    }

    #[test]
    fn slipped_token_is_diverted_and_slows_the_belt() {
        let (rm, plant, id) = run(&[InjectionKind::Slip { steps: 3 }]);
        assert_eq!(plant.bin_outcome(id).unwrap(), BinOutcome::Binned { bin: 2 });
        assert_eq!(actions(&rm), vec![("MC".into(), Action::SetSpeed(SpeedLevel::S3))]);
        let to: Vec<_> = rm.messages().iter().map(|m| (m.from.as_str(), m.to.as_str())).collect();
        assert_eq!(to, vec![("EC", "MC"), ("MC", "CP"), ("MC", "BS"), ("MC", "LM")]);
        assert_eq!(rm.faults().len(), 1);
    }

    #[test]
    fn combined_fault_is_one_root_decision() {
        let (rm, plant, id) = run(&[latency(Component::Bs, 1550), InjectionKind::Slip { steps: 3 }]);
        assert_eq!(plant.bin_outcome(id).unwrap(), BinOutcome::Binned { bin: 2 });
        assert_eq!(
            actions(&rm),
            vec![
                ("LM".into(), Action::Escalate),
                ("MC".into(), Action::SetSpeed(SpeedLevel::S3))
            ]
        );
        assert_eq!(rm.faults().len(), 2);
        let counted = rm.messages().iter().filter(|m| !m.subsumed).count();
        assert_eq!(counted, 5);
    }

    #[test]
    fn compensated_slip_needs_no_action() {
        let (rm, plant, id) = run(&[InjectionKind::Slip { steps: 3 }, InjectionKind::Slip { steps: -3 }]);
        assert_eq!(plant.bin_outcome(id).unwrap(), BinOutcome::Binned { bin: 1 });
        assert_eq!(actions(&rm), vec![("MC".into(), Action::NoAction)]);
    }

    #[test]
    fn foreign_contract_is_a_routing_error() {
        let mut rm = runtime();
        let mut plant = init_plant(PlantConfig::default()).unwrap();
        let o = ObserverOutcome {
            contract: "C_EC".into(),
            clause: 0,
            verdict: Verdict::Violated,
            observed_latency: None,
            violation_kind: Some(ViolationKind::MissingTrigger),
            excess: None,
            token: Some(1),
            t: 0,
            armed_at: None,
        };
        assert!(matches!(
            rm.leaf_on_violation("CP", &o, &mut plant),
            Err(RmError::Routing(_))
        ));
        let ok = ObserverOutcome {
            verdict: Verdict::Satisfied,
            contract: "C_CP".into(),
            ..o
        };
        rm.leaf_on_violation("CP", &ok, &mut plant).unwrap();
        assert!(rm.messages().is_empty());
    }

    #[test]
    fn only_the_root_may_update() {
        let mut rm = runtime();
        let u = ParameterUpdate {
            param: ParamId::MotorSpeed,
            value: SpeedLevel::S1,
            t: 0,
        };
        assert!(matches!(rm.propagate_update("LM", u), Err(RmError::Authority(_))));
        assert_eq!(rm.propagate_update("MC", u).unwrap(), 3);
        assert_eq!(rm.messages().len(), 3);
    }
}
