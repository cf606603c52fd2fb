//! Draw episode instances from the two scenario generators.
//!
//! Random scatters starts on a noisy circle and draws goals the same way
//! until they are pairwise separated; Crossing reflects each start through
//! the center, forcing everyone through the middle.
//!
//!     cargo run --example sample_instances [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use winding_nav::environment::{generate_instance, ScenarioConfig, ScenarioMode};
use winding_nav::error::Error;

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(12);

    for mode in [ScenarioMode::Random, ScenarioMode::Crossing] {
        let cfg = ScenarioConfig {
            n_agents: 4,
            mode,
            ..ScenarioConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = generate_instance(&cfg, &mut rng).unwrap();
        println!("{mode:?} (seed {seed}):");
        for (i, (s, g)) in inst.starts.iter().zip(inst.goals.iter()).enumerate() {
            println!(
                "  agent {i}: start ({:>7.3}, {:>7.3})  goal ({:>7.3}, {:>7.3})  trip {:.3} m",
                s.x,
                s.y,
                g.x,
                g.y,
                (*g - *s).norm()
            );
        }
        let min_sep = (0..inst.starts.len())
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (inst.starts[i] - inst.starts[j]).norm())
            .fold(f64::INFINITY, f64::min);
        println!("  smallest start separation: {min_sep:.3} m\n");
    }

    // cramming 40 agents onto a tiny circle cannot satisfy the separation
    // constraint; the generator gives up instead of looping forever
    let impossible = ScenarioConfig {
        n_agents: 40,
        circle_radius: 0.5,
        noise_half_width: 0.0,
        ..ScenarioConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match generate_instance(&impossible, &mut rng) {
        Err(Error::InfeasibleScenario(attempts)) => {
            println!("40 agents on a 0.5 m circle: infeasible after {attempts} attempts");
        }
        other => println!("unexpected: {other:?}"),
    }
}
