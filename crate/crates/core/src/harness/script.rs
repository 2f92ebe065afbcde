use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contract::{Colour, SpeedLevel};
use crate::plant::{Component, InjectionKind, LatencyChange};

use super::HarnessError;

/// One token run: a numbered fault scenario or an explicit list of injections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default)]
    pub scenario_type: Option<u8>,
    #[serde(default)]
    pub injections: Vec<InjectionKind>,
    #[serde(default = "white")]
    pub colour: Colour,
    /// Motor speed the entry starts from; the default is S1.
    #[serde(default)]
    pub start_speed: Option<SpeedLevel>,
}

fn white() -> Colour {
    Colour::W
}

impl ScriptEntry {
    pub fn canonical(scenario_type: u8) -> ScriptEntry {
        ScriptEntry {
            scenario_type: Some(scenario_type),
            injections: Vec::new(),
            colour: Colour::W,
            start_speed: None,
        }
    }

    pub fn raw(injections: Vec<InjectionKind>) -> ScriptEntry {
        ScriptEntry {
            scenario_type: None,
            injections,
            colour: Colour::W,
            start_speed: None,
        }
    }

    /// Injections applied to this entry's token.
    pub fn expand(&self) -> Result<Vec<InjectionKind>, HarnessError> {
        match self.scenario_type {
            Some(n) => {
                if !self.injections.is_empty() {
                    return Err(HarnessError::Parse(format!(
                        "scenario type {n} entry must not list injections as well"
                    )));
                }
                canonical_injections(n)
            }
            None => Ok(self.injections.clone()),
        }
    }
}

fn latency(component: Component, ms: u64) -> InjectionKind {
    InjectionKind::LatencyInflation {
        component,
        change: LatencyChange::Absolute(ms),
    }
}

/// The injections that produce fault scenario `n` under the default configuration.
pub fn canonical_injections(n: u8) -> Result<Vec<InjectionKind>, HarnessError> {
    let slip = InjectionKind::Slip { steps: 3 };
    Ok(match n {
        1 => vec![latency(Component::Cp, 250)],
        2 => vec![latency(Component::Bs, 250)],
        3 => vec![latency(Component::Cp, 250), latency(Component::Bs, 250)],
        4 => vec![latency(Component::Bs, 1550)],
        5 => vec![slip],
        6 => vec![latency(Component::Bs, 1550), slip],
        _ => {
            return Err(HarnessError::Parse(format!(
                "unknown scenario type {n}, expected 1 to 6"
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub entries: Vec<ScriptEntry>,
}

/// Types 1, 2 and 3 twice, then 4, 5 and 6 once, one white token each.
pub fn canonical_script() -> ScenarioScript {
    ScenarioScript {
        entries: [1, 2, 3, 1, 2, 3, 4, 5, 6]
            .into_iter()
            .map(ScriptEntry::canonical)
            .collect(),
    }
}

impl ScenarioScript {
    pub fn load(path: &Path) -> Result<ScenarioScript, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        ScenarioScript::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ScenarioScript, HarnessError> {
        let script: ScenarioScript = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        for e in &script.entries {
            e.expand()?;
        }
        Ok(script)
    }

    /// `canonical` or a path to a script file.
    pub fn resolve(arg: &str) -> Result<ScenarioScript, HarnessError> {
        if arg == "canonical" {
            Ok(canonical_script())
        } else {
            ScenarioScript::load(Path::new(arg))
        }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("script serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::LatencyTables;

    #[test]
    fn canonical_order() {
        let types: Vec<_> = canonical_script()
            .entries
            .iter()
            .map(|e| e.scenario_type.unwrap())
            .collect();
        assert_eq!(types, vec![1, 2, 3, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn type_one_exceeds_cp_but_fits_the_slack() {
        let t = LatencyTables::default();
        let s1 = SpeedLevel::S1;
        let InjectionKind::LatencyInflation {
            change: LatencyChange::Absolute(cl),
            ..
        } = canonical_injections(1).unwrap()[0]
        else {
            panic!()
        };
        assert!(cl > t.cp.bound(s1));
        assert!(cl + t.bs.bound(s1) <= t.lm.bound(s1));
    }

    #[test]
    fn script_files_parse() {
        let text = r#"
            [[entries]]
            scenario_type = 5

            [[entries]]
            start_speed = "S3"
            injections = [{ latency_inflation = { component = "BS", change = { absolute = 6000 } } }]
        "#;
        let s = ScenarioScript::parse(text).unwrap();
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.entries[1].start_speed, Some(SpeedLevel::S3));
        assert!(ScenarioScript::parse("[[entries]]\nscenario_type = 9\n").is_err());
        let round = toml::to_string(&canonical_script()).unwrap();
        assert_eq!(ScenarioScript::parse(&round).unwrap(), canonical_script());
    }
}
