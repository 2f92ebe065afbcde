#![allow(dead_code)]

use hrm_core::contract::{Colour, Millis, SpeedLevel};
use hrm_core::observer::{Event, EventKind};
use hrm_core::plant::{init_plant, Component, Injection, InjectionKind, InjectionTarget, LatencyChange, PlantConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_speed(rng: &mut ChaCha8Rng) -> SpeedLevel {
    SpeedLevel::ALL[rng.gen_range(0..3)]
}

fn random_injection(rng: &mut ChaCha8Rng) -> InjectionKind {
    match rng.gen_range(0..4) {
        0 => InjectionKind::LatencyInflation {
            component: Component::Cp,
            change: LatencyChange::Extra(rng.gen_range(0..400)),
        },
        1 => InjectionKind::LatencyInflation {
            component: Component::Bs,
            change: LatencyChange::Absolute(rng.gen_range(50..3000)),
        },
        2 => InjectionKind::Slip {
            steps: rng.gen_range(-4..=6),
        },
        _ => InjectionKind::LatencyInflation {
            component: Component::Bs,
            change: LatencyChange::Extra(rng.gen_range(0..1500)),
        },
    }
}

/// Runs the plant with random tokens, faults and speed changes; returns the event log and
/// the speed history seen on the belt.
pub fn plant_trace(rng: &mut ChaCha8Rng) -> (Vec<Event>, Vec<(Millis, SpeedLevel)>) {
    let mut plant = init_plant(PlantConfig::default()).unwrap();
    let tokens = rng.gen_range(1..=4);
    let mut t = 0;
    for _ in 0..tokens {
        t += rng.gen_range(0..2500);
        plant.advance(t).unwrap();
        if rng.gen_bool(0.3) {
            plant.set_speed(random_speed(rng));
        }
        let colour = if rng.gen_bool(0.5) { Colour::W } else { Colour::N };
        plant.place_token(colour, t).unwrap();
        for _ in 0..rng.gen_range(0..3) {
            let kind = random_injection(rng);
            plant
                .inject(Injection {
                    kind,
                    target: InjectionTarget::NextToken,
                })
                .unwrap();
        }
    }
    plant.advance(t + 20_000).unwrap();
    let events = plant.events().to_vec();
    let speeds = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::SpeedChanged { speed } => Some((e.t, speed)),
            _ => None,
        })
        .collect();
    (events, speeds)
}
