//! Experiment configuration and the CLI commands built on it.
//!
//! A single TOML file describes an experiment; every hyperparameter has a
//! default, so a minimal file (or none at all for `eval`) runs the standard
//! setup. Sections may be given partially — missing keys fall back to the
//! defaults for that section. Exit codes: 0 success, 2 configuration error,
//! 3 data error, 4 numerical failure.

use crate::controller::{Controller, ControllerConfig};
use crate::dynamics::{DynamicsConfig, DynamicsModel};
use crate::environment::{
    export_episode, generate_instance, import_sidecar, import_trajectory_csv, realized_windings,
    run_episode, AgentTrack, EpisodeLimits, Outcome, RefreshConfig, ScenarioConfig, ScenarioMode,
    SidecarSeeds,
};
use crate::error::{Error, Result};
use crate::learning::{train, PpoConfig, ResumeState, TrainConfig, TrainCounters};
use crate::planner::{PlanSource, PolicyParams};
use crate::seeds;
use crate::topology::{winding_profile, PlanarPath};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "wnummpc")]
    WNumMpc,
    #[serde(rename = "tmpc")]
    TMpc,
    Vanilla,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wnummpc" => Ok(Method::WNumMpc),
            "tmpc" => Ok(Method::TMpc),
            "vanilla" => Ok(Method::Vanilla),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected wnummpc, tmpc, or vanilla"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::WNumMpc => "wnummpc",
            Method::TMpc => "tmpc",
            Method::Vanilla => "vanilla",
        }
    }
}

fn parse_mode(s: &str) -> Result<ScenarioMode> {
    match s {
        "random" => Ok(ScenarioMode::Random),
        "crossing" => Ok(ScenarioMode::Crossing),
        other => Err(Error::Config(format!(
            "unknown mode {other:?}; expected random or crossing"
        ))),
    }
}

/// Dynamics section: the model picks its default parameter set, individual
/// keys override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub model: DynamicsModel,
    pub dt: Option<f64>,
    pub v_max: Option<f64>,
    pub wheel_coef: Option<f64>,
    pub collision_radius: Option<f64>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            model: DynamicsModel::Holonomic,
            dt: None,
            v_max: None,
            wheel_coef: None,
            collision_radius: None,
        }
    }
}

impl DynamicsSection {
    pub fn resolve(&self) -> DynamicsConfig {
        let mut d = match self.model {
            DynamicsModel::Holonomic => DynamicsConfig::holonomic(),
            DynamicsModel::DiffDrive => DynamicsConfig::diffdrive(),
        };
        if let Some(x) = self.dt {
            d.dt = x;
        }
        if let Some(x) = self.v_max {
            d.v_max = x;
        }
        if let Some(x) = self.wheel_coef {
            d.wheel_coef = x;
        }
        if let Some(x) = self.collision_radius {
            d.collision_radius = x;
        }
        d
    }
}

/// PPO section: unset keys take the regime defaults for the configured team
/// size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoSection {
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub clip: Option<f64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub entropy_coef: Option<f64>,
    pub total_env_steps: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub value_coef: Option<f64>,
    pub grad_clip: Option<f64>,
}

impl PpoSection {
    pub fn resolve(&self, n_agents: usize) -> PpoConfig {
        let mut p = PpoConfig::for_agents(n_agents);
        if let Some(x) = self.gamma {
            p.gamma = x;
        }
        if let Some(x) = self.gae_lambda {
            p.gae_lambda = x;
        }
        if let Some(x) = self.clip {
            p.clip = x;
        }
        if let Some(x) = self.epochs {
            p.epochs = x;
        }
        if let Some(x) = self.learning_rate {
            p.learning_rate = x;
        }
        if let Some(x) = self.batch_size {
            p.batch_size = x;
        }
        if let Some(x) = self.entropy_coef {
            p.entropy_coef = x;
        }
        if let Some(x) = self.total_env_steps {
            p.total_env_steps = x;
        }
        if let Some(x) = self.minibatch_size {
            p.minibatch_size = x;
        }
        if let Some(x) = self.value_coef {
            p.value_coef = x;
        }
        if let Some(x) = self.grad_clip {
            p.grad_clip = x;
        }
        p
    }
}

/// Constant plan used by the topology-seeking baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmpcSection {
    pub target: f64,
    pub weight: f64,
}

impl Default for TmpcSection {
    fn default() -> Self {
        TmpcSection {
            target: 0.0,
            weight: -3.0,
        }
    }
}

/// Grid for `sweep`: the cross product of the listed gains, optionally
/// crossed with constant winding weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alpha_g: Vec<f64>,
    pub alpha_o: Vec<f64>,
    pub alpha_w: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Planner parameter file; required by wnummpc, forbidden otherwise.
    pub policy: Option<PathBuf>,
    pub n_episodes: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
    /// Planner capacity (largest team the policy accepts).
    pub n_max: usize,
    pub out_dir: PathBuf,
    pub checkpoint_every: usize,
    pub scenario: ScenarioConfig,
    pub dynamics: DynamicsSection,
    pub controller: ControllerConfig,
    pub limits: EpisodeLimits,
    pub refresh: RefreshConfig,
    pub ppo: PpoSection,
    pub tmpc: TmpcSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Vanilla,
            policy: None,
            n_episodes: 100,
            train_seed: 0,
            eval_seed: 10_000,
            n_max: 8,
            out_dir: PathBuf::from("out"),
            checkpoint_every: 25,
            scenario: ScenarioConfig::default(),
            dynamics: DynamicsSection::default(),
            controller: ControllerConfig::default(),
            limits: EpisodeLimits::default(),
            refresh: RefreshConfig::default(),
            ppo: PpoSection::default(),
            tmpc: TmpcSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.controller.validate()?;
        self.dynamics.resolve().validate()?;
        self.ppo.resolve(self.scenario.n_agents).validate()?;
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be positive".into()));
        }
        if self.n_max < 2 {
            return Err(Error::Config("n_max must be at least 2".into()));
        }
        match self.method {
            Method::WNumMpc => {
                if self.policy.is_none() {
                    return Err(Error::Config(
                        "method wnummpc requires a policy file (--policy or policy key)".into(),
                    ));
                }
            }
            Method::TMpc | Method::Vanilla => {
                if self.policy.is_some() {
                    return Err(Error::Config(format!(
                        "method {} does not take a policy file",
                        self.method.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub seed: u64,
    pub outcome: Outcome,
    /// Mean per-agent extra time to goal; absent unless successful.
    pub extra_time: Option<f64>,
    /// Mean |winding| over agent pairs.
    pub mean_abs_winding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Averaged over successful episodes only; absent when none succeeded.
    pub mean_extra_time: Option<f64>,
    pub mean_abs_winding: f64,
    pub episodes: Vec<EpisodeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub method: Method,
    pub mode: ScenarioMode,
    pub n_agents: usize,
    pub n_episodes: usize,
    pub seed: u64,
    pub deterministic_planner: bool,
    /// Set when the evaluation seed collides with the training seed.
    pub seed_overlap: bool,
    pub report: AggregateReport,
}

/// Everything needed to evaluate one method on one instance distribution.
pub struct EvalSetup<'a> {
    pub scenario: ScenarioConfig,
    pub controller: ControllerConfig,
    pub dynamics: DynamicsConfig,
    pub limits: EpisodeLimits,
    pub refresh: RefreshConfig,
    pub source: PlanSource<'a>,
    pub n_episodes: usize,
    pub master_seed: u64,
}

/// Run `n_episodes` fresh instances and aggregate. Episode i draws its
/// scenario and rollout streams from `derive(master_seed, ·, i)`, so the
/// instance set depends only on the seed and scenario — different methods
/// evaluated with the same seed see identical instances.
pub fn evaluate(setup: &EvalSetup) -> Result<AggregateReport> {
    let controller = Controller::new(setup.controller, setup.dynamics)?;
    let mut rows = Vec::with_capacity(setup.n_episodes);
    let (mut successes, mut collisions, mut timeouts) = (0usize, 0usize, 0usize);
    let (mut extra_sum, mut winding_sum) = (0.0, 0.0);

    for ep in 0..setup.n_episodes as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            setup.master_seed,
            seeds::STREAM_SCENARIO,
            ep,
        ));
        let instance = generate_instance(&setup.scenario, &mut rng)?;
        let ep_seed = seeds::derive(setup.master_seed, seeds::STREAM_ROLLOUT, ep);
        let result = run_episode(
            &instance,
            &controller,
            setup.limits,
            setup.refresh,
            &setup.source,
            ep_seed,
        )?;
        match result.outcome {
            Outcome::Success { .. } => successes += 1,
            Outcome::Collision { .. } => collisions += 1,
            Outcome::Timeout => timeouts += 1,
        }
        if let Some(x) = result.extra_time {
            extra_sum += x;
        }
        let mean_abs = if result.windings.is_empty() {
            0.0
        } else {
            result.windings.iter().map(|p| p.w.abs()).sum::<f64>() / result.windings.len() as f64
        };
        winding_sum += mean_abs;
        rows.push(EpisodeRow {
            episode: ep,
            seed: ep_seed,
            outcome: result.outcome,
            extra_time: result.extra_time,
            mean_abs_winding: mean_abs,
        });
    }

    let n = setup.n_episodes as f64;
    Ok(AggregateReport {
        success_rate: successes as f64 / n,
        collision_rate: collisions as f64 / n,
        timeout_rate: timeouts as f64 / n,
        mean_extra_time: (successes > 0).then(|| extra_sum / successes as f64),
        mean_abs_winding: winding_sum / n,
        episodes: rows,
    })
}

fn outcome_name(o: &Outcome) -> &'static str {
    match o {
        Outcome::Success { .. } => "success",
        Outcome::Collision { .. } => "collision",
        Outcome::Timeout => "timeout",
    }
}

fn episodes_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from("episode,seed,outcome,extra_time,mean_abs_winding\n");
    for r in rows {
        let extra = r.extra_time.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.episode,
            r.seed,
            outcome_name(&r.outcome),
            extra,
            r.mean_abs_winding
        )
        .unwrap();
    }
    out
}

#[derive(Parser, Debug)]
#[command(
    name = "winding-nav",
    version,
    about = "Decentralized multi-agent navigation with winding-number plans"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the planner with PPO and write checkpoints plus a metrics log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the state saved in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a method on fresh instances and write a report.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Planner parameters (wnummpc only).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Override the evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Scenario kind: random or crossing.
        #[arg(long)]
        mode: Option<String>,
        /// Team size.
        #[arg(long)]
        agents: Option<usize>,
        /// wnummpc, tmpc, or vanilla.
        #[arg(long)]
        method: Option<String>,
        /// Use the policy mean instead of sampling (the evaluation protocol).
        #[arg(
            long,
            default_value_t = true,
            action = clap::ArgAction::Set,
            num_args = 0..=1,
            default_missing_value = "true"
        )]
        deterministic_planner: bool,
    },
    /// Grid-search cost gains on a fixed instance set and rank the cells.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Convert an exported episode into plot-ready path and winding series.
    Replay {
        /// Episode sidecar JSON.
        #[arg(long)]
        episode: PathBuf,
        /// Trajectory CSV exported with the sidecar.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            resume,
        } => cmd_train(&config, seed, out, resume),
        Command::Eval {
            config,
            policy,
            seed,
            out,
            episodes,
            mode,
            agents,
            method,
            deterministic_planner,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(p) = policy {
                cfg.policy = Some(p);
            }
            if let Some(s) = seed {
                cfg.eval_seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(e) = episodes {
                cfg.n_episodes = e;
            }
            if let Some(m) = mode.as_deref() {
                cfg.scenario.mode = parse_mode(m)?;
            }
            if let Some(a) = agents {
                cfg.scenario.n_agents = a;
            }
            if let Some(m) = method.as_deref() {
                cfg.method = Method::parse(m)?;
            }
            cmd_eval(&cfg, deterministic_planner)
        }
        Command::Sweep {
            config,
            out,
            episodes,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(e) = episodes {
                cfg.n_episodes = e;
            }
            cmd_sweep(&cfg)
        }
        Command::Replay {
            episode,
            trajectory,
            out,
        } => cmd_replay(&episode, &trajectory, &out),
    }
}

const METRICS_HEADER: &str =
    "iteration,env_steps,mean_return,success_rate,collision_rate,timeout_rate,mean_episode_len,entropy,kl\n";

#[derive(Debug, Serialize, Deserialize)]
struct TrainState {
    format_version: u32,
    counters: TrainCounters,
}

pub fn cmd_train(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    resume: bool,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.train_seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    cfg.scenario.validate()?;
    cfg.controller.validate()?;
    if cfg.scenario.mode == ScenarioMode::Crossing {
        eprintln!("warning: training on crossing instances; the standard protocol trains on random instances");
    }

    let train_cfg = TrainConfig {
        scenario: cfg.scenario.clone(),
        controller: cfg.controller,
        dynamics: cfg.dynamics.resolve(),
        limits: cfg.limits,
        refresh: cfg.refresh,
        ppo: cfg.ppo.resolve(cfg.scenario.n_agents),
        n_max: cfg.n_max,
        seed: cfg.train_seed,
    };
    train_cfg.validate()?;

    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let metrics_path = out_dir.join("metrics.csv");
    let state_path = out_dir.join("train_state.json");
    let latest_path = out_dir.join("policy_latest.json");

    let resume_state = if resume {
        let state: TrainState = serde_json::from_str(&fs::read_to_string(&state_path)?)
            .map_err(|e| Error::Data(format!("train state: {e}")))?;
        if state.format_version != 1 {
            return Err(Error::Data(format!(
                "unsupported train state version {}",
                state.format_version
            )));
        }
        Some(ResumeState {
            params: PolicyParams::load(&latest_path)?,
            counters: state.counters,
        })
    } else {
        None
    };
    if !resume || !metrics_path.exists() {
        fs::write(&metrics_path, METRICS_HEADER)?;
    }
    let mut metrics_file = fs::OpenOptions::new().append(true).open(&metrics_path)?;

    let checkpoint_every = cfg.checkpoint_every.max(1);
    let (params, history) = train(&train_cfg, resume_state, |m, p, counters| {
        writeln!(
            metrics_file,
            "{},{},{},{},{},{},{},{},{}",
            m.iteration,
            m.env_steps,
            m.mean_return,
            m.success_rate,
            m.collision_rate,
            m.timeout_rate,
            m.mean_episode_len,
            m.entropy,
            m.approx_kl
        )?;
        metrics_file.flush()?;
        p.save(&latest_path)?;
        let state = TrainState {
            format_version: 1,
            counters: counters.clone(),
        };
        fs::write(
            &state_path,
            serde_json::to_string_pretty(&state).map_err(|e| Error::Data(e.to_string()))? + "\n",
        )?;
        if m.iteration % checkpoint_every == 0 {
            p.save(&out_dir.join(format!("policy_iter_{:05}.json", m.iteration)))?;
        }
        Ok(())
    })?;
    params.save(&out_dir.join("policy_final.json"))?;
    println!(
        "trained {} iterations ({} env steps); final policy in {}",
        history.len(),
        history.last().map(|m| m.env_steps).unwrap_or(0),
        out_dir.display()
    );
    Ok(())
}

/// Build the plan source for a method. `params` must outlive the source.
fn plan_source<'a>(
    method: Method,
    tmpc: TmpcSection,
    params: Option<&'a PolicyParams>,
    stochastic: bool,
) -> PlanSource<'a> {
    match method {
        Method::Vanilla => PlanSource::vanilla(),
        Method::TMpc => PlanSource::Constant {
            target: tmpc.target,
            weight: tmpc.weight,
        },
        Method::WNumMpc => PlanSource::Learned {
            params: params.expect("validated: wnummpc has a policy"),
            stochastic,
        },
    }
}

pub fn cmd_eval(cfg: &ExperimentConfig, deterministic_planner: bool) -> Result<()> {
    cfg.validate()?;
    let params = match &cfg.policy {
        Some(p) => Some(PolicyParams::load(p)?),
        None => None,
    };
    let seed_overlap = cfg.eval_seed == cfg.train_seed;
    if seed_overlap {
        eprintln!(
            "warning: eval seed {} overlaps the training seed; held-out evaluation requires disjoint seeds",
            cfg.eval_seed
        );
    }

    let mut controller_cfg = cfg.controller;
    if cfg.method == Method::Vanilla {
        controller_cfg.winding_term = false;
    }
    let setup = EvalSetup {
        scenario: cfg.scenario.clone(),
        controller: controller_cfg,
        dynamics: cfg.dynamics.resolve(),
        limits: cfg.limits,
        refresh: cfg.refresh,
        source: plan_source(cfg.method, cfg.tmpc, params.as_ref(), !deterministic_planner),
        n_episodes: cfg.n_episodes,
        master_seed: cfg.eval_seed,
    };
    let report = evaluate(&setup)?;

    let full = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        method: cfg.method,
        mode: cfg.scenario.mode,
        n_agents: cfg.scenario.n_agents,
        n_episodes: cfg.n_episodes,
        seed: cfg.eval_seed,
        deterministic_planner,
        seed_overlap,
        report,
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let json =
        serde_json::to_string_pretty(&full).map_err(|e| Error::Data(e.to_string()))? + "\n";
    fs::write(cfg.out_dir.join("report.json"), json)?;
    fs::write(
        cfg.out_dir.join("episodes.csv"),
        episodes_csv(&full.report.episodes),
    )?;
    println!(
        "{} {} n={}: success {:.3} collision {:.3} timeout {:.3} extra_time {}",
        full.method.name(),
        match full.mode {
            ScenarioMode::Random => "random",
            ScenarioMode::Crossing => "crossing",
        },
        full.n_agents,
        full.report.success_rate,
        full.report.collision_rate,
        full.report.timeout_rate,
        full.report
            .mean_extra_time
            .map(|x| format!("{x:.3}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub alpha_g: f64,
    pub alpha_o: f64,
    pub alpha_w: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepBest {
    format_version: u32,
    cell: SweepCell,
    success_rate: f64,
    collision_rate: f64,
    timeout_rate: f64,
    mean_extra_time: Option<f64>,
    mean_abs_winding: f64,
}

/// Rank: success rate descending, then mean extra time ascending (missing
/// last), then the cell itself lexicographically so ties are stable.
fn rank_key(cell: &SweepCell, report: &AggregateReport) -> (f64, f64, f64, f64, f64) {
    (
        -report.success_rate,
        report.mean_extra_time.unwrap_or(f64::INFINITY),
        cell.alpha_g,
        cell.alpha_o,
        cell.alpha_w.unwrap_or(f64::NEG_INFINITY),
    )
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let grid = &cfg.sweep;
    if grid.alpha_g.is_empty() || grid.alpha_o.is_empty() {
        return Err(Error::Config(
            "sweep grid is empty: [sweep] needs non-empty alpha_g and alpha_o lists".into(),
        ));
    }
    if let Some(ws) = &grid.alpha_w {
        if ws.is_empty() {
            return Err(Error::Config("sweep alpha_w list is empty".into()));
        }
    }
    let params = match &cfg.policy {
        Some(p) => Some(PolicyParams::load(p)?),
        None => None,
    };
    if cfg.method == Method::WNumMpc && params.is_none() {
        return Err(Error::Config("method wnummpc requires a policy file".into()));
    }

    // brute-force cells in sorted order so rankings cannot depend on how the
    // grid lists were written
    let mut cells = Vec::new();
    for &g in &grid.alpha_g {
        for &o in &grid.alpha_o {
            match &grid.alpha_w {
                None => cells.push(SweepCell {
                    alpha_g: g,
                    alpha_o: o,
                    alpha_w: None,
                }),
                Some(ws) => {
                    for &w in ws {
                        cells.push(SweepCell {
                            alpha_g: g,
                            alpha_o: o,
                            alpha_w: Some(w),
                        });
                    }
                }
            }
        }
    }
    for c in &cells {
        for (name, v) in [("alpha_g", c.alpha_g), ("alpha_o", c.alpha_o)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("sweep {name} contains {v}")));
            }
        }
        if let Some(w) = c.alpha_w {
            if !w.is_finite() {
                return Err(Error::Config(format!("sweep alpha_w contains {w}")));
            }
        }
    }
    cells.sort_by(|a, b| {
        (a.alpha_g, a.alpha_o, a.alpha_w.unwrap_or(f64::NEG_INFINITY))
            .partial_cmp(&(b.alpha_g, b.alpha_o, b.alpha_w.unwrap_or(f64::NEG_INFINITY)))
            .unwrap()
    });
    cells.dedup();

    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut controller_cfg = cfg.controller;
        controller_cfg.alpha_g = cell.alpha_g;
        controller_cfg.alpha_o = cell.alpha_o;
        if cfg.method == Method::Vanilla && cell.alpha_w.is_none() {
            controller_cfg.winding_term = false;
        }
        let source = match cell.alpha_w {
            Some(w) => PlanSource::Constant {
                target: cfg.tmpc.target,
                weight: w,
            },
            None => plan_source(cfg.method, cfg.tmpc, params.as_ref(), false),
        };
        let setup = EvalSetup {
            scenario: cfg.scenario.clone(),
            controller: controller_cfg,
            dynamics: cfg.dynamics.resolve(),
            limits: cfg.limits,
            refresh: cfg.refresh,
            source,
            n_episodes: cfg.n_episodes,
            master_seed: cfg.eval_seed,
        };
        let report = evaluate(&setup)?;
        results.push((cell, report));
    }

    results.sort_by(|a, b| {
        rank_key(&a.0, &a.1)
            .partial_cmp(&rank_key(&b.0, &b.1))
            .unwrap()
    });

    let mut csv = String::from(
        "rank,alpha_g,alpha_o,alpha_w,success_rate,collision_rate,timeout_rate,mean_extra_time,mean_abs_winding\n",
    );
    for (rank, (cell, report)) in results.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            rank + 1,
            cell.alpha_g,
            cell.alpha_o,
            cell.alpha_w.map(|w| w.to_string()).unwrap_or_default(),
            report.success_rate,
            report.collision_rate,
            report.timeout_rate,
            report
                .mean_extra_time
                .map(|x| x.to_string())
                .unwrap_or_default(),
            report.mean_abs_winding
        )
        .unwrap();
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("sweep.csv"), csv)?;

    let (best_cell, best_report) = &results[0];
    let best = SweepBest {
        format_version: REPORT_FORMAT_VERSION,
        cell: *best_cell,
        success_rate: best_report.success_rate,
        collision_rate: best_report.collision_rate,
        timeout_rate: best_report.timeout_rate,
        mean_extra_time: best_report.mean_extra_time,
        mean_abs_winding: best_report.mean_abs_winding,
    };
    fs::write(
        cfg.out_dir.join("best.json"),
        serde_json::to_string_pretty(&best).map_err(|e| Error::Data(e.to_string()))? + "\n",
    )?;
    println!(
        "swept {} cells; best alpha_g={} alpha_o={}{} success {:.3}",
        results.len(),
        best.cell.alpha_g,
        best.cell.alpha_o,
        best.cell
            .alpha_w
            .map(|w| format!(" alpha_w={w}"))
            .unwrap_or_default(),
        best.success_rate
    );
    Ok(())
}

pub fn cmd_replay(episode_path: &Path, trajectory_path: &Path, out: &Path) -> Result<()> {
    let sidecar = import_sidecar(&fs::read_to_string(episode_path)?)?;
    let tracks = import_trajectory_csv(&fs::read_to_string(trajectory_path)?)?;
    if tracks.len() != sidecar.instance.starts.len() {
        return Err(Error::Data(format!(
            "trajectory has {} agents, sidecar instance has {}",
            tracks.len(),
            sidecar.instance.starts.len()
        )));
    }
    if sidecar.outcome.is_success() {
        let all_frozen = tracks.iter().all(|t| *t.frozen.last().unwrap());
        if !all_frozen {
            return Err(Error::Data(
                "sidecar reports success but the trajectory ends with moving agents".into(),
            ));
        }
    }

    // per-pair cumulative winding series, re-derived from the raw paths and
    // cross-checked against the stored realized values
    let mut winding_csv = String::from("i,j,step,w\n");
    for pw in &sidecar.windings {
        let pi = PlanarPath::new(tracks[pw.i].positions.clone())?;
        let pj = PlanarPath::new(tracks[pw.j].positions.clone())?;
        let profile = winding_profile(&pi, &pj)?;
        let final_w = *profile.last().unwrap();
        if (final_w - pw.w).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "winding mismatch for pair ({}, {}): stored {} recomputed {}",
                pw.i, pw.j, pw.w, final_w
            )));
        }
        for (step, w) in profile.iter().enumerate() {
            writeln!(winding_csv, "{},{},{},{}", pw.i, pw.j, step, w).unwrap();
        }
    }

    let mut paths_csv = String::from("agent,step,px,py\n");
    for (id, t) in tracks.iter().enumerate() {
        for (step, p) in t.positions.iter().enumerate() {
            writeln!(paths_csv, "{},{},{},{}", id, step, p.x, p.y).unwrap();
        }
    }

    fs::create_dir_all(out)?;
    fs::write(out.join("paths.csv"), paths_csv)?;
    fs::write(out.join("winding.csv"), winding_csv)?;
    println!(
        "replayed {} agents, {} samples, outcome {}; wrote paths.csv and winding.csv",
        tracks.len(),
        tracks.first().map(|t| t.positions.len()).unwrap_or(0),
        outcome_name(&sidecar.outcome)
    );
    Ok(())
}

/// Convenience used by examples and tests: run one episode and export it.
pub fn export_one_episode(
    setup: &EvalSetup,
    episode: u64,
    csv_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    let controller = Controller::new(setup.controller, setup.dynamics)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
        setup.master_seed,
        seeds::STREAM_SCENARIO,
        episode,
    ));
    let instance = generate_instance(&setup.scenario, &mut rng)?;
    let ep_seed = seeds::derive(setup.master_seed, seeds::STREAM_ROLLOUT, episode);
    let result = run_episode(
        &instance,
        &controller,
        setup.limits,
        setup.refresh,
        &setup.source,
        ep_seed,
    )?;
    export_episode(
        &result,
        SidecarSeeds {
            master_seed: setup.master_seed,
            episode_index: episode,
            episode_seed: ep_seed,
        },
        csv_path,
        sidecar_path,
    )
}

/// Re-derive the winding series a replay would produce (used by tests).
pub fn winding_series(tracks: &[AgentTrack]) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let pairs = realized_windings(tracks)?;
    pairs
        .into_iter()
        .map(|pw| {
            let pi = PlanarPath::new(tracks[pw.i].positions.clone())?;
            let pj = PlanarPath::new(tracks[pw.j].positions.clone())?;
            Ok((pw.i, pw.j, winding_profile(&pi, &pj)?))
        })
        .collect()
}
