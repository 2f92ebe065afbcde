mod common;

use std::collections::BTreeMap;

use common::{plant_trace, random_speed};
use hrm_core::contract::{
    Colour, Contract, ContractRegistry, Ejector, LatencyTables, Millis, SignalId, SpeedLevel, Value,
};
use hrm_core::observer::{
    observe_trace, offline_check, Departure, Event, EventKind, ObserverOutcome, ParamHistory, Verdict, ViolationKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn registry() -> ContractRegistry {
    ContractRegistry::sorting_line(&LatencyTables::default(), 20).unwrap()
}

/// Arbitrary well-formed traces that the plant would never produce.
fn synthetic_trace(rng: &mut ChaCha8Rng) -> (Vec<Event>, Vec<(Millis, SpeedLevel)>) {
    let mut events = Vec::new();
    let mut t = 0;
    let mut sc = 0;
    let len = rng.gen_range(1..60);
    for seq in 0..len {
        t += rng.gen_range(0..120);
        let token = rng.gen_range(1..=3);
        let kind = match rng.gen_range(0..10) {
            0 | 1 => {
                sc += 1;
                events.push(Event::signal(t, seq, None, SignalId::Sc, Value::Count(sc)));
                continue;
            }
            2 => EventKind::Signal {
                signal: SignalId::Ls1,
                value: Value::Edge(true),
            },
            3 => EventKind::Signal {
                signal: SignalId::Ls2,
                value: Value::Edge(true),
            },
            4 => EventKind::Signal {
                signal: SignalId::ScCp,
                value: Value::Count(rng.gen_range(0..=sc.max(1))),
            },
            5 => EventKind::Signal {
                signal: SignalId::CvCp,
                value: Value::Colour([None, Some(Colour::W), Some(Colour::N)][rng.gen_range(0..3)]),
            },
            6 => EventKind::Signal {
                signal: SignalId::EBs,
                value: Value::Ejector([None, Some(Ejector::E1), Some(Ejector::E2)][rng.gen_range(0..3)]),
            },
            7 => EventKind::Signal {
                signal: SignalId::ScBs,
                value: Value::Count(sc + rng.gen_range(0..40)),
            },
            8 => EventKind::CpActivated,
            _ => EventKind::Departed {
                departure: Departure::Binned {
                    bin: rng.gen_range(1..=3),
                },
            },
        };
        events.push(Event {
            t,
            seq,
            token: Some(token),
            kind,
        });
    }
    let mut params = Vec::new();
    let mut pt = 0;
    for _ in 0..rng.gen_range(0..4) {
        pt += rng.gen_range(1..400);
        params.push((pt, random_speed(rng)));
    }
    (events, params)
}

/// Random speed history with strictly increasing times.
fn random_history(rng: &mut ChaCha8Rng, horizon: Millis) -> Vec<(Millis, SpeedLevel)> {
    let mut times: Vec<Millis> = (0..rng.gen_range(0..4))
        .map(|_| rng.gen_range(1..horizon.max(2)))
        .collect();
    times.sort_unstable();
    times.dedup();
    times.into_iter().map(|t| (t, random_speed(rng))).collect()
}

fn agree(contracts: &[Contract], trace: &[Event], params: &[(Millis, SpeedLevel)]) -> bool {
    contracts.iter().all(|c| {
        let online = observe_trace(c, trace, params).unwrap();
        let offline = offline_check(c, trace, params).unwrap();
        if online != offline {
            eprintln!("{}: online {online:?}\noffline {offline:?}", c.name);
        }
        online == offline
    })
}

#[test]
fn online_and_offline_agree_on_plant_traces() {
    let contracts: Vec<Contract> = registry().iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut agreed = 0;
    let runs = 1000;
    for _ in 0..runs {
        let (trace, speeds) = plant_trace(&mut rng);
        let params = if rng.gen_bool(0.5) {
            speeds
        } else {
            random_history(&mut rng, trace.last().map_or(1, |e| e.t))
        };
        if agree(&contracts, &trace, &params) {
            agreed += 1;
        }
    }
    assert_eq!(agreed, runs);
}

#[test]
fn online_and_offline_agree_on_synthetic_traces() {
    let contracts: Vec<Contract> = registry().iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let (trace, params) = synthetic_trace(&mut rng);
        assert!(agree(&contracts, &trace, &params));
    }
}

#[test]
fn latency_bookkeeping_matches_the_deadline_in_force_at_arming() {
    let reg = registry();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let (trace, speeds) = plant_trace(&mut rng);
        let history = ParamHistory::from_entries(&speeds);
        for c in reg.iter() {
            for o in observe_trace(c, &trace, &speeds).unwrap() {
                let Some(deadline) = &c.guarantees[o.clause].deadline else {
                    continue;
                };
                let armed_at = o.armed_at.expect("response outcomes carry their arming time");
                let bound = deadline.bound(history.at(armed_at));
                match o.observed_latency {
                    Some(l) => {
                        assert_eq!(l, o.t - armed_at);
                        let late = l > bound;
                        assert_eq!(o.verdict == Verdict::Violated, late, "{o:?}");
                        assert_eq!(o.excess, late.then(|| l - bound));
                    }
                    None => assert_eq!(o.verdict, Verdict::Violated),
                }
            }
        }
    }
}

fn deadline_misses(outcomes: &[ObserverOutcome]) -> usize {
    outcomes
        .iter()
        .filter(|o| o.violation_kind == Some(ViolationKind::DeadlineExceeded) && o.observed_latency.is_some())
        .count()
}

#[test]
fn loosening_deadlines_never_adds_violations() {
    let reg = registry();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let (trace, speeds) = plant_trace(&mut rng);
        let k = rng.gen_range(1..5);
        for c in reg.iter() {
            let tight = observe_trace(c, &trace, &speeds).unwrap();
            let loose = observe_trace(&c.with_scaled_deadlines(k), &trace, &speeds).unwrap();
            assert!(deadline_misses(&loose) <= deadline_misses(&tight), "{} k={k}", c.name);
            assert_eq!(loose.len(), tight.len());
        }
    }
}

#[test]
fn every_activation_resolves_exactly_once() {
    let reg = registry();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let (trace, speeds) = plant_trace(&mut rng);
        for c in reg.iter() {
            let outcomes = observe_trace(c, &trace, &speeds).unwrap();
            let mut seen: BTreeMap<(u32, usize, Millis), usize> = BTreeMap::new();
            for o in outcomes.iter().filter(|o| o.armed_at.is_some()) {
                *seen
                    .entry((o.token.unwrap(), o.clause, o.armed_at.unwrap()))
                    .or_default() += 1;
                assert_ne!(o.verdict, Verdict::Pending);
            }
            assert!(seen.values().all(|&n| n == 1), "{}: {seen:?}", c.name);
        }
    }
}
