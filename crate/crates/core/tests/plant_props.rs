use std::collections::BTreeMap;

use hrm_core::contract::{Colour, Millis, SignalId, SpeedLevel, Value};
use hrm_core::observer::{Departure, Event, EventKind, TokenId};
use hrm_core::plant::{
    init_plant, BinOutcome, Component, Injection, InjectionKind, InjectionTarget, LatencyChange, Plant, PlantConfig,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Placement {
    gap: Millis,
    colour: Colour,
    speed: Option<SpeedLevel>,
    faults: Vec<InjectionKind>,
}

fn speed() -> impl Strategy<Value = SpeedLevel> {
    prop_oneof![Just(SpeedLevel::S1), Just(SpeedLevel::S2), Just(SpeedLevel::S3)]
}

fn fault() -> impl Strategy<Value = InjectionKind> {
    prop_oneof![
        (0u64..2000).prop_map(|ms| InjectionKind::LatencyInflation {
            component: Component::Cp,
            change: LatencyChange::Extra(ms),
        }),
        (50u64..3000).prop_map(|ms| InjectionKind::LatencyInflation {
            component: Component::Bs,
            change: LatencyChange::Absolute(ms),
        }),
        (-5i32..=8).prop_map(|steps| InjectionKind::Slip { steps }),
    ]
}

fn placement(with_faults: bool) -> impl Strategy<Value = Placement> {
    let faults = if with_faults {
        prop::collection::vec(fault(), 0..3).boxed()
    } else {
        Just(Vec::new()).boxed()
    };
    (
        0u64..3000,
        prop_oneof![Just(Colour::W), Just(Colour::N)],
        prop::option::of(speed()),
        faults,
    )
        .prop_map(|(gap, colour, speed, faults)| Placement {
            gap,
            colour,
            speed,
            faults,
        })
}

fn run(placements: &[Placement]) -> (Plant, Vec<TokenId>) {
    let mut plant = init_plant(PlantConfig::default()).unwrap();
    let mut t = 0;
    let mut ids = Vec::new();
    for p in placements {
        t += p.gap;
        plant.advance(t).unwrap();
        if let Some(s) = p.speed {
            plant.set_speed(s);
        }
        let id = plant.place_token(p.colour, t).unwrap();
        for kind in &p.faults {
            plant
                .inject(Injection {
                    kind: *kind,
                    target: InjectionTarget::Token(id),
                })
                .unwrap();
        }
        ids.push(id);
    }
    // Longest possible stay: slowest belt over the whole belt plus the worst stall.
    plant.advance(t + 200 * 80 + 5000).unwrap();
    (plant, ids)
}

/// Step count in force when each event happened.
fn with_sc(events: &[Event]) -> Vec<(u64, &Event)> {
    let mut sc = 0;
    events
        .iter()
        .map(|e| {
            if let EventKind::Signal {
                signal: SignalId::Sc,
                value: Value::Count(n),
            } = e.kind
            {
                sc = n;
            }
            (sc, e)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn runs_are_deterministic(ps in prop::collection::vec(placement(true), 1..5)) {
        let (a, _) = run(&ps);
        let (b, _) = run(&ps);
        prop_assert_eq!(a.events(), b.events());
        prop_assert_eq!(a.outcomes(), b.outcomes());
    }

    #[test]
    fn every_token_leaves_exactly_once(ps in prop::collection::vec(placement(true), 1..5)) {
        let (plant, ids) = run(&ps);
        let mut departures: BTreeMap<TokenId, usize> = BTreeMap::new();
        for e in plant.events() {
            if let EventKind::Departed { .. } = e.kind {
                *departures.entry(e.token.unwrap()).or_default() += 1;
            }
        }
        for id in ids {
            prop_assert_eq!(departures.get(&id), Some(&1));
            prop_assert_ne!(plant.bin_outcome(id).unwrap(), BinOutcome::Pending);
        }
    }

    #[test]
    fn clock_and_step_count_only_move_forward(ps in prop::collection::vec(placement(true), 1..5)) {
        let (plant, _) = run(&ps);
        for w in plant.events().windows(2) {
            prop_assert!((w[0].t, w[0].seq) < (w[1].t, w[1].seq));
        }
        let counts: Vec<u64> = plant
            .events()
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Signal { signal: SignalId::Sc, value: Value::Count(n) } => Some(n),
                _ => None,
            })
            .collect();
        for w in counts.windows(2) {
            prop_assert_eq!(w[1], w[0] + 1);
        }
    }

    #[test]
    fn unslipped_tokens_reach_ls2_twenty_steps_after_cp(ps in prop::collection::vec(placement(true), 1..5)) {
        let (plant, ids) = run(&ps);
        let cfg = plant.config().clone();
        for (p, id) in ps.iter().zip(ids) {
            if p.faults.iter().any(|f| matches!(f, InjectionKind::Slip { .. })) {
                continue;
            }
            let sc_cp = plant.sc_cp(id).unwrap();
            let ls2 = with_sc(plant.events())
                .into_iter()
                .find(|(_, e)| e.token == Some(id) && e.kind == (EventKind::Signal { signal: SignalId::Ls2, value: Value::Edge(true) }))
                .map(|(sc, _)| sc);
            prop_assert_eq!(ls2, Some(sc_cp + cfg.ls2_pos - cfg.cp_pos));
        }
    }

    #[test]
    fn fault_free_tokens_land_in_their_colour_bin(ps in prop::collection::vec(placement(false), 1..6)) {
        let (plant, ids) = run(&ps);
        for (p, id) in ps.iter().zip(ids) {
            let bin = if p.colour == Colour::W { 1 } else { 2 };
            prop_assert_eq!(plant.bin_outcome(id).unwrap(), BinOutcome::Binned { bin });
            let departed = plant.events().iter().any(|e| {
                e.token == Some(id) && e.kind == (EventKind::Departed { departure: Departure::Binned { bin } })
            });
            prop_assert!(departed);
        }
    }
}
