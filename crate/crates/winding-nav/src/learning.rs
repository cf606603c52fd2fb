//! PPO training of the shared planner.
//!
//! Decisions happen at plan-refresh instants, so one transition covers the
//! whole held interval: its reward is the per-step-discounted sum over the
//! interval and its effective discount is gamma raised to the interval
//! length. Gradients are computed analytically against the planner's forward
//! cache; a public loss/gradient pair exists so finite-difference checks can
//! audit the math end to end.

use crate::controller::Controller;
use crate::environment::{
    generate_instance, EpisodeLimits, Outcome, RefreshConfig, ScenarioConfig, Sim,
};
use crate::error::{Error, Result};
use crate::planner::{
    action_entropy, action_log_prob, backward, encode_observation, forward_cached, Architecture,
    Observation, PlanSource, PolicyParams,
};
use crate::seeds;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-step reward on the post-step state. `d_min` is the signed surface
/// clearance to the nearest other agent; precedence is collision, then goal,
/// then proximity shaping, then zero.
pub fn reward(d_min: f64, at_goal: bool) -> f64 {
    if d_min < 0.0 {
        -1.0
    } else if at_goal {
        1.0
    } else if d_min < 0.25 {
        1.5 * (d_min - 0.25) / 2.0
    } else {
        0.0
    }
}

/// Standard GAE over one flattened sequence. `dones[k]` marks that step k
/// ends its episode (bootstrap 0 there); a truncated tail bootstraps with
/// `tail_bootstrap` when the last step is not done.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
    tail_bootstrap: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(Error::LengthMismatch("gae inputs"));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for k in (0..n).rev() {
        let next_value = if dones[k] {
            0.0
        } else if k + 1 == n {
            tail_bootstrap
        } else {
            values[k + 1]
        };
        let delta = rewards[k] + gamma * next_value - values[k];
        carry = delta + gamma * lambda * if dones[k] { 0.0 } else { carry };
        advantages[k] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values.iter())
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Environment steps collected per update batch.
    pub batch_size: usize,
    pub entropy_coef: f64,
    pub total_env_steps: usize,
    /// Decision records per gradient step.
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub grad_clip: f64,
}

impl Default for PpoConfig {
    /// The small-team regime.
    fn default() -> Self {
        PpoConfig::for_agents(3)
    }
}

impl PpoConfig {
    /// Regime defaults: the small-team and large-team hyperparameter sets.
    pub fn for_agents(n_agents: usize) -> Self {
        let (learning_rate, batch_size, entropy_coef) = if n_agents <= 5 {
            (4.0e-4, 1024, 1.0e-3)
        } else {
            (2.0e-4, 4096, 3.0e-3)
        };
        PpoConfig {
            gamma: 0.95,
            gae_lambda: 0.9,
            clip: 0.1,
            epochs: 4,
            learning_rate,
            batch_size,
            entropy_coef,
            total_env_steps: 200_000,
            minibatch_size: 256,
            value_coef: 0.5,
            grad_clip: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma out of (0,1]: {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!(
                "gae_lambda out of [0,1]: {}",
                self.gae_lambda
            )));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("clip must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.minibatch_size == 0 {
            return Err(Error::Config(
                "epochs, batch_size, minibatch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.total_env_steps == 0 {
            return Err(Error::Config("total_env_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One planner decision and everything needed to replay it under new
/// parameters.
#[derive(Debug, Clone)]
pub struct TransitionRecord {
    pub obs: Observation,
    /// Pre-squash sampled action, two entries per valid slot.
    pub raw: Vec<f64>,
    pub log_prob: f64,
    /// Discount-weighted reward sum over the held interval.
    pub reward: f64,
    pub value: f64,
    /// True when this record closes its agent's stream.
    pub done: bool,
    pub agent: usize,
    pub episode: u64,
    /// gamma^interval_length.
    pub gamma_eff: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RolloutStats {
    pub episodes: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub mean_episode_len: f64,
}

struct OpenDecision {
    obs: Observation,
    raw: Vec<f64>,
    log_prob: f64,
    value: f64,
    acc_reward: f64,
    len: usize,
}

/// Per-stream semi-MDP GAE: records of one agent within one episode, in
/// order; the last record's `done`/bootstrap pair seals the recursion.
fn fill_stream_advantages(records: &mut [TransitionRecord], final_bootstrap: f64, lambda: f64) {
    let m = records.len();
    let mut carry = 0.0;
    for k in (0..m).rev() {
        let next_value = if k + 1 == m {
            final_bootstrap
        } else {
            records[k + 1].value
        };
        let r = &mut records[k];
        let delta = r.reward + r.gamma_eff * next_value - r.value;
        carry = delta + r.gamma_eff * lambda * carry;
        r.advantage = carry;
        r.ret = carry + r.value;
    }
}

/// Roll episodes with the stochastic planner until at least `min_env_steps`
/// world steps have been taken, converting refresh decisions into records
/// with advantages already filled. `episode_start` numbers the episodes so
/// seed streams continue across batches; the next index is returned.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    scenario: &ScenarioConfig,
    controller: &Controller,
    limits: EpisodeLimits,
    refresh: RefreshConfig,
    params: &PolicyParams,
    ppo: &PpoConfig,
    min_env_steps: usize,
    master_seed: u64,
    episode_start: u64,
) -> Result<(Vec<TransitionRecord>, RolloutStats, u64)> {
    let n = scenario.n_agents;
    let mut all_records = Vec::new();
    let mut stats = RolloutStats::default();
    let mut return_sum = 0.0;
    let mut episode = episode_start;
    let (mut successes, mut collisions, mut timeouts) = (0usize, 0usize, 0usize);
    let mut len_sum = 0usize;

    while stats.env_steps < min_env_steps {
        let mut scen_rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            master_seed,
            seeds::STREAM_SCENARIO,
            episode,
        ));
        let instance = generate_instance(scenario, &mut scen_rng)?;
        let sim_seed = seeds::derive(master_seed, seeds::STREAM_ROLLOUT, episode);
        let mut planner_rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            master_seed,
            seeds::STREAM_PLANNER,
            episode,
        ));
        let mut sim = Sim::new(&instance, controller, limits, refresh, sim_seed, false)?;
        let source = PlanSource::Learned {
            params,
            stochastic: true,
        };

        let mut open: Vec<Option<OpenDecision>> = (0..n).map(|_| None).collect();
        let mut streams: Vec<Vec<TransitionRecord>> = vec![Vec::new(); n];
        let mut bootstraps = vec![0.0; n];
        let mut ep_returns = vec![0.0; n];

        while !sim.finished() {
            let report = sim.step(&source, &mut planner_rng)?;
            stats.env_steps += 1;

            // a refresh closes the previous decision and opens the next
            for ev in report.refreshed {
                if let Some(d) = open[ev.agent].take() {
                    streams[ev.agent].push(TransitionRecord {
                        obs: d.obs,
                        raw: d.raw,
                        log_prob: d.log_prob,
                        reward: d.acc_reward,
                        value: d.value,
                        done: false,
                        agent: ev.agent,
                        episode,
                        gamma_eff: ppo.gamma.powi(d.len as i32),
                        advantage: 0.0,
                        ret: 0.0,
                    });
                }
                open[ev.agent] = Some(OpenDecision {
                    obs: ev.obs,
                    raw: ev.output.raw,
                    log_prob: ev.output.log_prob,
                    value: ev.output.value,
                    acc_reward: 0.0,
                    len: 0,
                });
            }

            for (i, r) in report.rewards.iter().enumerate() {
                ep_returns[i] += r;
                if let Some(d) = open[i].as_mut() {
                    d.acc_reward += ppo.gamma.powi(d.len as i32) * r;
                    d.len += 1;
                }
            }

            // arrivals close their stream with a true termination
            let mut close = |i: usize, done_bootstrap: f64, open: &mut Vec<Option<OpenDecision>>| {
                if let Some(d) = open[i].take() {
                    streams[i].push(TransitionRecord {
                        obs: d.obs,
                        raw: d.raw,
                        log_prob: d.log_prob,
                        reward: d.acc_reward,
                        value: d.value,
                        done: true,
                        agent: i,
                        episode,
                        gamma_eff: ppo.gamma.powi(d.len as i32),
                        advantage: 0.0,
                        ret: 0.0,
                    });
                    bootstraps[i] = done_bootstrap;
                }
            };
            for &i in &report.newly_frozen {
                close(i, 0.0, &mut open);
            }
            match &report.terminal {
                None => {}
                Some(Outcome::Success { .. }) => {
                    // last arrival already closed every stream
                }
                Some(Outcome::Collision { .. }) => {
                    for i in 0..n {
                        close(i, 0.0, &mut open);
                    }
                }
                Some(Outcome::Timeout) => {
                    // truncation: bootstrap each open stream with the value
                    // of its terminal observation
                    for i in 0..n {
                        if open[i].is_none() {
                            continue;
                        }
                        let obs = encode_observation(
                            &sim.world.agents[i],
                            &sim.world.neighbors_of(i),
                            params.arch.n_max,
                            controller.dynamics.v_max,
                        )?;
                        let v = forward_cached(params, &obs)?.value;
                        close(i, v, &mut open);
                    }
                }
            }
        }

        match sim.outcome.as_ref().unwrap() {
            Outcome::Success { .. } => successes += 1,
            Outcome::Collision { .. } => collisions += 1,
            Outcome::Timeout => timeouts += 1,
        }
        len_sum += sim.world.step;
        stats.episodes += 1;
        return_sum += ep_returns.iter().sum::<f64>() / n as f64;

        for (i, mut stream) in streams.into_iter().enumerate() {
            fill_stream_advantages(&mut stream, bootstraps[i], ppo.gae_lambda);
            all_records.extend(stream);
        }
        episode += 1;
    }

    stats.mean_return = return_sum / stats.episodes as f64;
    stats.success_rate = successes as f64 / stats.episodes as f64;
    stats.collision_rate = collisions as f64 / stats.episodes as f64;
    stats.timeout_rate = timeouts as f64 / stats.episodes as f64;
    stats.mean_episode_len = len_sum as f64 / stats.episodes as f64;
    Ok((all_records, stats, episode))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub loss: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped-surrogate loss and statistics over `idx`, accumulating analytic
/// gradients into `grad` when given. `advantages` is indexed like `records`
/// and is treated as a constant (normalize before calling).
fn eval_batch(
    params: &PolicyParams,
    records: &[TransitionRecord],
    advantages: &[f64],
    idx: &[usize],
    cfg: &PpoConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossStats> {
    debug_assert_eq!(records.len(), advantages.len());
    let b = idx.len() as f64;
    let arch = &params.arch;
    let layout_log_std = arch.layout().log_std;
    let mut stats = LossStats::default();
    let mut clipped_count = 0usize;

    for &k in idx {
        let rec = &records[k];
        let a = advantages[k];
        let cache = forward_cached(params, &rec.obs)?;
        let log_stds = params.log_std();
        let lp_new = action_log_prob(arch, &cache.means, log_stds, &rec.obs.mask, &rec.raw);
        let ratio = (lp_new - rec.log_prob).exp();
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        let surr = unclipped.min(clipped);
        let v_err = cache.value - rec.ret;
        let ent = action_entropy(log_stds, &rec.obs.mask);

        stats.surrogate += surr / b;
        stats.value_loss += v_err * v_err / b;
        stats.entropy += ent / b;
        stats.approx_kl += (rec.log_prob - lp_new) / b;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped_count += 1;
        }

        if let Some(g) = grad.as_deref_mut() {
            // the min picks the unclipped branch: only then does the ratio
            // carry gradient
            let g_lp = if unclipped <= clipped {
                -(ratio * a) / b
            } else {
                0.0
            };
            let d_value = 2.0 * cfg.value_coef * v_err / b;
            let mut d_means = vec![0.0; arch.policy_dim()];
            let mut r = 0;
            for (slot, valid) in rec.obs.mask.iter().enumerate() {
                if !*valid {
                    continue;
                }
                for ch in 0..2 {
                    let o = 2 * slot + ch;
                    let sigma = log_stds[o].exp();
                    let z = (rec.raw[r + ch] - cache.means[o]) / sigma;
                    d_means[o] = g_lp * z / sigma;
                    g[layout_log_std.start + o] +=
                        g_lp * (z * z - 1.0) - cfg.entropy_coef / b;
                }
                r += 2;
            }
            backward(params, &cache, &d_means, d_value, g);
        }
    }
    stats.clip_fraction = clipped_count as f64 / b;
    stats.loss =
        -stats.surrogate + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    Ok(stats)
}

/// Scalar PPO objective (minimized form) over a record batch with fixed
/// advantages. Public so gradient checks can difference it directly.
pub fn ppo_loss(
    params: &PolicyParams,
    records: &[TransitionRecord],
    advantages: &[f64],
    cfg: &PpoConfig,
) -> Result<f64> {
    let idx: Vec<usize> = (0..records.len()).collect();
    Ok(eval_batch(params, records, advantages, &idx, cfg, None)?.loss)
}

/// Analytic gradient of [`ppo_loss`] in flat parameter order.
pub fn ppo_grad(
    params: &PolicyParams,
    records: &[TransitionRecord],
    advantages: &[f64],
    cfg: &PpoConfig,
) -> Result<(Vec<f64>, LossStats)> {
    let idx: Vec<usize> = (0..records.len()).collect();
    let mut grad = vec![0.0; params.flat.len()];
    let stats = eval_batch(params, records, advantages, &idx, cfg, Some(&mut grad))?;
    Ok((grad, stats))
}

/// First/second-moment adaptive gradient descent.
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Normalize advantages to zero mean and unit deviation over the batch.
fn normalized_advantages(records: &[TransitionRecord]) -> Vec<f64> {
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.advantage).sum::<f64>() / n;
    let var = records
        .iter()
        .map(|r| (r.advantage - mean).powi(2))
        .sum::<f64>()
        / n;
    let denom = var.sqrt() + 1e-8;
    records.iter().map(|r| (r.advantage - mean) / denom).collect()
}

/// One PPO update: `epochs` passes of shuffled minibatches with gradient-norm
/// clipping. Fails on a non-finite gradient or parameter, leaving `params`
/// untouched in the gradient case.
pub fn ppo_update(
    params: &mut PolicyParams,
    records: &[TransitionRecord],
    cfg: &PpoConfig,
    adam: &mut Adam,
    shuffle_seed: u64,
) -> Result<LossStats> {
    if records.is_empty() {
        return Err(Error::Config("empty update batch".into()));
    }
    cfg.validate()?;
    let advantages = normalized_advantages(records);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut idx: Vec<usize> = (0..records.len()).collect();
    let mut grad = vec![0.0; params.flat.len()];
    let mut agg = LossStats::default();
    let mut batches = 0usize;

    for _ in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(cfg.minibatch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let stats = eval_batch(params, records, &advantages, chunk, cfg, Some(&mut grad))?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(
                    "non-finite gradient in PPO update".into(),
                ));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.grad_clip {
                let scale = cfg.grad_clip / norm;
                grad.iter_mut().for_each(|g| *g *= scale);
            }
            adam.step(&mut params.flat, &grad);
            agg.loss += stats.loss;
            agg.surrogate += stats.surrogate;
            agg.value_loss += stats.value_loss;
            agg.entropy += stats.entropy;
            agg.clip_fraction += stats.clip_fraction;
            agg.approx_kl += stats.approx_kl;
            batches += 1;
        }
    }
    if params.flat.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("non-finite parameter after update".into()));
    }
    let b = batches as f64;
    agg.loss /= b;
    agg.surrogate /= b;
    agg.value_loss /= b;
    agg.entropy /= b;
    agg.clip_fraction /= b;
    agg.approx_kl /= b;
    Ok(agg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: ScenarioConfig,
    pub controller: crate::controller::ControllerConfig,
    pub dynamics: crate::dynamics::DynamicsConfig,
    pub limits: EpisodeLimits,
    pub refresh: RefreshConfig,
    pub ppo: PpoConfig,
    pub n_max: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.controller.validate()?;
        self.dynamics.validate()?;
        self.ppo.validate()?;
        if self.n_max < 2 {
            return Err(Error::Config("n_max must be at least 2".into()));
        }
        if self.scenario.n_agents > self.n_max {
            return Err(Error::Config(format!(
                "n_agents {} exceeds the planner capacity n_max {}",
                self.scenario.n_agents, self.n_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub mean_episode_len: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

/// Counters needed to continue a run as if it had never stopped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCounters {
    pub iteration: usize,
    pub env_steps: usize,
    pub episode_counter: u64,
    pub update_counter: u64,
}

pub struct ResumeState {
    pub params: PolicyParams,
    pub counters: TrainCounters,
}

/// Alternate collect/update until the step budget is reached. `sink` sees
/// every iteration's metrics, the current parameters, and the counters (for
/// checkpointing). Optimizer moments restart on resume.
pub fn train(
    cfg: &TrainConfig,
    resume: Option<ResumeState>,
    mut sink: impl FnMut(&IterationMetrics, &PolicyParams, &TrainCounters) -> Result<()>,
) -> Result<(PolicyParams, Vec<IterationMetrics>)> {
    cfg.validate()?;
    let controller = Controller::new(cfg.controller.clone(), cfg.dynamics.clone())?;
    let (mut params, mut counters) = match resume {
        Some(r) => {
            r.params.validate()?;
            (r.params, r.counters)
        }
        None => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, seeds::STREAM_INIT, 0));
            (
                PolicyParams::init_random(Architecture::standard(cfg.n_max), &mut rng)?,
                TrainCounters {
                    iteration: 0,
                    env_steps: 0,
                    episode_counter: 0,
                    update_counter: 0,
                },
            )
        }
    };
    let mut adam = Adam::new(params.flat.len(), cfg.ppo.learning_rate);
    let mut history = Vec::new();

    while counters.env_steps < cfg.ppo.total_env_steps {
        let (records, stats, next_episode) = collect_rollouts(
            &cfg.scenario,
            &controller,
            cfg.limits,
            cfg.refresh,
            &params,
            &cfg.ppo,
            cfg.ppo.batch_size,
            cfg.seed,
            counters.episode_counter,
        )?;
        counters.episode_counter = next_episode;
        counters.env_steps += stats.env_steps;

        let shuffle_seed = seeds::derive(cfg.seed, seeds::STREAM_SHUFFLE, counters.update_counter);
        let update = match ppo_update(&mut params, &records, &cfg.ppo, &mut adam, shuffle_seed) {
            Ok(u) => u,
            Err(e) => {
                return Err(Error::Numerical(format!(
                    "update {} failed ({e}); last good checkpoint is iteration {}",
                    counters.update_counter, counters.iteration
                )))
            }
        };
        counters.update_counter += 1;
        counters.iteration += 1;

        let metrics = IterationMetrics {
            iteration: counters.iteration,
            env_steps: counters.env_steps,
            mean_return: stats.mean_return,
            success_rate: stats.success_rate,
            collision_rate: stats.collision_rate,
            timeout_rate: stats.timeout_rate,
            mean_episode_len: stats.mean_episode_len,
            entropy: update.entropy,
            approx_kl: update.approx_kl,
        };
        sink(&metrics, &params, &counters)?;
        history.push(metrics);
    }
    Ok((params, history))
}
