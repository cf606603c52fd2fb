//! Compare the baselines on seeded Crossing instances.
//!
//! Vanilla MPC ignores topology entirely; T-MPC rewards any large |winding|
//! with a negative constant weight. Both see the same instance set, so the
//! numbers are directly comparable. Pass a policy file to include the
//! learned planner.
//!
//!     cargo run --release --example evaluate_baselines [episodes] [policy.json]

use std::path::PathBuf;
use winding_nav::controller::ControllerConfig;
use winding_nav::dynamics::DynamicsConfig;
use winding_nav::environment::{EpisodeLimits, RefreshConfig, ScenarioConfig, ScenarioMode};
use winding_nav::experiments::{evaluate, EvalSetup};
use winding_nav::planner::{PlanSource, PolicyParams};

fn main() {
    let episodes: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("episodes must be an integer"))
        .unwrap_or(20);
    let policy = std::env::args().nth(2).map(|p| {
        PolicyParams::load(&PathBuf::from(p)).expect("failed to load the policy file")
    });

    let scenario = ScenarioConfig {
        n_agents: 4,
        mode: ScenarioMode::Crossing,
        ..ScenarioConfig::default()
    };

    let mut methods: Vec<(&str, ControllerConfig, PlanSource)> = vec![
        (
            "vanilla",
            ControllerConfig {
                winding_term: false,
                ..ControllerConfig::default()
            },
            PlanSource::vanilla(),
        ),
        ("tmpc", ControllerConfig::default(), PlanSource::t_mpc()),
    ];
    if let Some(params) = policy.as_ref() {
        methods.push((
            "wnummpc",
            ControllerConfig::default(),
            PlanSource::Learned {
                params,
                stochastic: false,
            },
        ));
    }

    println!(
        "{:<9} {:>8} {:>10} {:>8} {:>11} {:>9}",
        "method", "success", "collision", "timeout", "extra time", "mean |w|"
    );
    for (name, controller, source) in methods {
        let setup = EvalSetup {
            scenario: scenario.clone(),
            controller,
            dynamics: DynamicsConfig::holonomic(),
            limits: EpisodeLimits::default(),
            refresh: RefreshConfig::default(),
            source,
            n_episodes: episodes,
            master_seed: 2024,
        };
        let r = evaluate(&setup).unwrap();
        println!(
            "{:<9} {:>8.3} {:>10.3} {:>8.3} {:>11} {:>9.4}",
            name,
            r.success_rate,
            r.collision_rate,
            r.timeout_rate,
            r.mean_extra_time
                .map(|x| format!("{x:.3}"))
                .unwrap_or_else(|| "n/a".into()),
            r.mean_abs_winding
        );
    }
}
