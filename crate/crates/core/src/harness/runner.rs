use std::ops::Range;

use crate::contract::SpeedLevel;
use crate::observer::{Event, EventKind, ObserverOutcome, TokenId};
use crate::plant::{init_plant, BinOutcome, Injection, InjectionTarget, Plant};
use crate::rm::{Action, Decision, Fault, Message, RmRuntime};

use super::config::Config;
use super::script::ScenarioScript;
use super::HarnessError;

/// What happened to one script entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryRun {
    pub scenario_type: Option<u8>,
    pub token: TokenId,
    pub outcome: BinOutcome,
    /// Root speed once the entry's recovery finished, before the reset.
    pub speed_after: SpeedLevel,
    pub messages: Range<usize>,
    pub decisions: Range<usize>,
    pub faults: Range<usize>,
}

/// A complete hierarchical run over one script: the plant trace and the protocol logs.
#[derive(Debug, Clone)]
pub struct Execution {
    pub config_digest: String,
    pub script_digest: String,
    pub entries: Vec<EntryRun>,
    pub events: Vec<Event>,
    pub messages: Vec<Message>,
    pub decisions: Vec<Decision>,
    pub faults: Vec<Fault>,
    pub violations: Vec<(String, ObserverOutcome)>,
}

impl Execution {
    pub fn handovers(&self) -> usize {
        self.decisions
            .iter()
            .filter(|d| d.action == Action::HandOverToSystemControl)
            .count()
    }
}

fn pump(plant: &mut Plant, rm: &mut RmRuntime) -> Result<Vec<Event>, HarnessError> {
    let events = plant.advance_next();
    for e in &events {
        rm.on_event(e, plant)?;
    }
    Ok(events)
}

/// Runs every entry on one continuous plant. Before each entry the speed is reset outside
/// the protocol and the belt runs to the next step boundary so the reset is in force;
/// the entry ends when its token has left the belt and the root has decided.
pub fn execute(config: &Config, script: &ScenarioScript) -> Result<Execution, HarnessError> {
    let validation = config.validate();
    if !validation.passed {
        return Err(HarnessError::Validation(validation.lines.join("\n")));
    }
    let mut plant = init_plant(config.plant.clone())?;
    let mut rm = RmRuntime::new(config.topology(), config.registry()?, config.plant.initial_speed)?;
    let root = config.topology().root().expect("validated").id.clone();

    let mut entries = Vec::new();
    for entry in &script.entries {
        let injections = entry.expand()?;
        let start = entry.start_speed.unwrap_or(SpeedLevel::S1);
        plant.set_speed(start);
        rm.reset_speed(plant.clock(), start)?;
        loop {
            let events = pump(&mut plant, &mut rm)?;
            if events.iter().any(|e| matches!(e.kind, EventKind::SpeedChanged { .. })) {
                break;
            }
        }

        let (m0, d0, f0) = (rm.messages().len(), rm.decisions().len(), rm.faults().len());
        let token = plant.place_token(entry.colour, plant.next_step_at())?;
        for kind in injections {
            plant.inject(Injection {
                kind,
                target: InjectionTarget::Token(token),
            })?;
        }
        while plant.bin_outcome(token)? == BinOutcome::Pending {
            pump(&mut plant, &mut rm)?;
        }
        entries.push(EntryRun {
            scenario_type: entry.scenario_type,
            token,
            outcome: plant.bin_outcome(token)?,
            speed_after: rm.speed(&root).expect("root"),
            messages: m0..rm.messages().len(),
            decisions: d0..rm.decisions().len(),
            faults: f0..rm.faults().len(),
        });
    }
    rm.finish(plant.clock(), &mut plant)?;

    Ok(Execution {
        config_digest: config.digest(),
        script_digest: script.digest(),
        entries,
        events: plant.events().to_vec(),
        messages: rm.messages().to_vec(),
        decisions: rm.decisions().to_vec(),
        faults: rm.faults().to_vec(),
        violations: rm.violations().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::script::{canonical_script, ScriptEntry};

    #[test]
    fn canonical_bin_outcomes() {
        let exec = execute(&Config::default(), &canonical_script()).unwrap();
        let outcomes: Vec<_> = exec
            .entries
            .iter()
            .map(|e| (e.scenario_type.unwrap(), e.outcome))
            .collect();
        for (ty, o) in outcomes {
            let expected = match ty {
                1..=3 => BinOutcome::Binned { bin: 1 },
                4 => BinOutcome::RanOff,
                _ => BinOutcome::Binned { bin: 2 },
            };
            assert_eq!(o, expected, "type {ty}");
        }
        assert_eq!(exec.faults.len(), 12);
        assert_eq!(exec.handovers(), 0);
    }

    #[test]
    fn entries_start_from_their_own_speed() {
        let mut entry = ScriptEntry::canonical(2);
        entry.start_speed = Some(SpeedLevel::S2);
        let script = ScenarioScript {
            entries: vec![entry, ScriptEntry::canonical(5)],
        };
        let exec = execute(&Config::default(), &script).unwrap();
        assert_eq!(exec.entries[0].speed_after, SpeedLevel::S2);
        assert_eq!(exec.entries[1].speed_after, SpeedLevel::S3);
    }

    #[test]
    fn invalid_config_is_a_validation_error() {
        let mut c = Config::default();
        c.latency.lm[0] = 350;
        assert!(matches!(
            execute(&c, &canonical_script()),
            Err(HarnessError::Validation(_))
        ));
    }
}
