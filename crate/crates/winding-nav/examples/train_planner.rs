//! Short PPO training run for the winding planner.
//!
//! Trains on 3-agent Random instances with the standard hyperparameters and
//! prints one metrics row per iteration. The default budget is a quick
//! desk-scale smoke run; real training wants a few hundred thousand steps
//! (see the `train` subcommand of the binary for checkpointing and resume).
//!
//!     cargo run --release --example train_planner [env_steps] [out.json]

use winding_nav::controller::ControllerConfig;
use winding_nav::dynamics::DynamicsConfig;
use winding_nav::environment::{EpisodeLimits, RefreshConfig, ScenarioConfig, ScenarioMode};
use winding_nav::learning::{train, PpoConfig, TrainConfig};

fn main() {
    let env_steps: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("env_steps must be an integer"))
        .unwrap_or(8_000);
    let out = std::env::args().nth(2);

    let cfg = TrainConfig {
        scenario: ScenarioConfig {
            n_agents: 3,
            mode: ScenarioMode::Random,
            ..ScenarioConfig::default()
        },
        controller: ControllerConfig::default(),
        dynamics: DynamicsConfig::holonomic(),
        limits: EpisodeLimits::default(),
        refresh: RefreshConfig::default(),
        ppo: PpoConfig {
            total_env_steps: env_steps,
            ..PpoConfig::for_agents(3)
        },
        n_max: 8,
        seed: 0,
    };

    println!(
        "{:>4} {:>9} {:>8} {:>8} {:>8} {:>8} {:>7} {:>8} {:>9}",
        "iter", "steps", "return", "success", "collide", "timeout", "ep len", "entropy", "kl"
    );
    let (params, history) = train(&cfg, None, |m, _, _| {
        println!(
            "{:>4} {:>9} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>7.1} {:>8.3} {:>9.5}",
            m.iteration,
            m.env_steps,
            m.mean_return,
            m.success_rate,
            m.collision_rate,
            m.timeout_rate,
            m.mean_episode_len,
            m.entropy,
            m.approx_kl
        );
        Ok(())
    })
    .unwrap();

    let first = history.first().unwrap();
    let last = history.last().unwrap();
    println!(
        "\nreturn {:.3} -> {:.3} over {} iterations",
        first.mean_return,
        last.mean_return,
        history.len()
    );
    if let Some(path) = out {
        params.save(std::path::Path::new(&path)).unwrap();
        println!("saved policy to {path}");
    }
}
