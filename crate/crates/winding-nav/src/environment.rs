//! Episode engine: scenario generation on a noisy circle, synchronous world
//! stepping, collision/goal/timeout bookkeeping, and the trajectory export
//! format (CSV tracks plus a JSON sidecar).
//!
//! All agents compute their actions from the same world snapshot, then the
//! world advances once. Decentralization is informational — each controller
//! sees only the observable slice of the others — not temporal.

use crate::controller::{Controller, ObservedNeighbor, WindingPlan};
use crate::dynamics::{Action, AgentState, DynamicsConfig};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::learning::reward;
use crate::planner::{
    encode_observation, plan_constant, refresh_schedule, sample_plan, Observation, PlanSource,
    PlannerOutput,
};
use crate::seeds;
use crate::topology::{winding_profile, PlanarPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

pub const MAX_SCENARIO_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    Random,
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub circle_radius: f64,
    pub noise_half_width: f64,
    pub mode: ScenarioMode,
    pub min_start_separation: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_agents: 3,
            circle_radius: 2.0,
            noise_half_width: 0.4,
            mode: ScenarioMode::Random,
            // twice the combined radius of a standard pair
            min_start_separation: 0.6,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 1 {
            return Err(Error::Config("n_agents must be at least 1".into()));
        }
        if !(self.circle_radius > 0.0) {
            return Err(Error::Config("circle_radius must be positive".into()));
        }
        if self.noise_half_width < 0.0 || !self.noise_half_width.is_finite() {
            return Err(Error::Config("noise_half_width must be nonnegative".into()));
        }
        if self.min_start_separation < 0.0 {
            return Err(Error::Config(
                "min_start_separation must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One concrete episode setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub starts: Vec<Vec2>,
    pub goals: Vec<Vec2>,
}

fn min_pairwise(points: &[Vec2]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            min = min.min((points[i] - points[j]).norm());
        }
    }
    min
}

fn draw_ring(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    (0..cfg.n_agents)
        .map(|_| {
            let ang = rng.gen::<f64>() * TAU;
            let nx = rng.gen_range(-cfg.noise_half_width..=cfg.noise_half_width);
            let ny = rng.gen_range(-cfg.noise_half_width..=cfg.noise_half_width);
            Vec2::new(
                cfg.circle_radius * ang.cos() + nx,
                cfg.circle_radius * ang.sin() + ny,
            )
        })
        .collect()
}

/// Draw starts (and, in Random mode, goals) on the noisy circle until the
/// separation constraints hold. Each attempt redraws the whole set; more
/// than [`MAX_SCENARIO_ATTEMPTS`] rejections is an infeasibility error.
pub fn generate_instance(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Instance> {
    cfg.validate()?;
    for _ in 0..MAX_SCENARIO_ATTEMPTS {
        let starts = draw_ring(cfg, rng);
        if min_pairwise(&starts) < cfg.min_start_separation {
            continue;
        }
        match cfg.mode {
            ScenarioMode::Crossing => {
                // goal diametrically opposite the noisy start
                let goals = starts.iter().map(|s| -*s).collect();
                return Ok(Instance { starts, goals });
            }
            ScenarioMode::Random => {
                let goals = draw_ring(cfg, rng);
                if min_pairwise(&goals) < cfg.min_start_separation {
                    continue;
                }
                let clear_of_starts = goals.iter().all(|g| {
                    starts
                        .iter()
                        .all(|s| (*g - *s).norm() >= cfg.min_start_separation)
                });
                if !clear_of_starts {
                    continue;
                }
                return Ok(Instance { starts, goals });
            }
        }
    }
    Err(Error::InfeasibleScenario(MAX_SCENARIO_ATTEMPTS))
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub step: usize,
    pub frozen: Vec<bool>,
}

impl WorldState {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn all_frozen(&self) -> bool {
        self.frozen.iter().all(|f| *f)
    }

    /// Observable slice of everyone except `i`, in id order.
    pub fn neighbors_of(&self, i: usize) -> Vec<ObservedNeighbor> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, a)| ObservedNeighbor {
                id: j,
                state: a.observe(),
            })
            .collect()
    }

    /// Smallest signed surface clearance between `i` and any other agent;
    /// infinite when alone.
    pub fn signed_clearance(&self, i: usize) -> f64 {
        let a = &self.agents[i];
        let mut min = f64::INFINITY;
        for (j, b) in self.agents.iter().enumerate() {
            if j == i {
                continue;
            }
            min = min.min((a.position - b.position).norm() - (a.radius + b.radius));
        }
        min
    }
}

/// World at step 0: agents at their starts, zero velocity, heading toward
/// their goals (a degenerate offset keeps heading 0).
pub fn initial_world(instance: &Instance, dynamics: &DynamicsConfig) -> Result<WorldState> {
    if instance.starts.len() != instance.goals.len() || instance.starts.is_empty() {
        return Err(Error::Config("instance start/goal lists mismatch".into()));
    }
    if instance
        .starts
        .iter()
        .chain(instance.goals.iter())
        .any(|p| !p.is_finite())
    {
        return Err(Error::NonFinite("instance"));
    }
    let agents = instance
        .starts
        .iter()
        .zip(instance.goals.iter())
        .map(|(s, g)| {
            let d = *g - *s;
            let heading = if d.x == 0.0 && d.y == 0.0 {
                0.0
            } else {
                d.y.atan2(d.x)
            };
            AgentState {
                position: *s,
                velocity: Vec2::ZERO,
                heading,
                radius: dynamics.collision_radius,
                goal: *g,
            }
        })
        .collect::<Vec<_>>();
    let n = agents.len();
    Ok(WorldState {
        agents,
        step: 0,
        frozen: vec![false; n],
    })
}

/// Advance every agent synchronously. Frozen agents ignore their action and
/// keep zero velocity; agents ending the step within `goal_tolerance` of
/// their goal freeze there. Returns the indices that froze this step.
pub fn step_world(
    world: &mut WorldState,
    actions: &[Action],
    dynamics: &DynamicsConfig,
    goal_tolerance: f64,
) -> Vec<usize> {
    assert_eq!(actions.len(), world.agents.len());
    let mut newly_frozen = Vec::new();
    let next: Vec<AgentState> = world
        .agents
        .iter()
        .zip(actions.iter())
        .zip(world.frozen.iter())
        .map(|((a, u), frozen)| {
            if *frozen {
                *a
            } else {
                dynamics.step(a, u)
            }
        })
        .collect();
    world.agents = next;
    for (i, a) in world.agents.iter_mut().enumerate() {
        if !world.frozen[i] && (a.position - a.goal).norm() <= goal_tolerance {
            world.frozen[i] = true;
            a.velocity = Vec2::ZERO;
            newly_frozen.push(i);
        }
    }
    world.step += 1;
    newly_frozen
}

/// First pair (lexicographic) whose centers are within the radii sum.
/// Frozen agents remain collidable.
pub fn detect_collision(world: &WorldState) -> Option<(usize, usize)> {
    for i in 0..world.agents.len() {
        for j in i + 1..world.agents.len() {
            let a = &world.agents[i];
            let b = &world.agents[j];
            if (a.position - b.position).norm() <= a.radius + b.radius {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success { steps: usize },
    Collision { step: usize, pair: (usize, usize) },
    Timeout,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    pub max_steps: usize,
    pub goal_tolerance: f64,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        // 20 time units at dt = 0.1
        EpisodeLimits {
            max_steps: 200,
            goal_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefreshConfig {
    pub period: usize,
    /// Per-agent random phase offsets (training default). Disabled, every
    /// agent refreshes on the same instants.
    pub randomize_offsets: bool,
}

impl Default for RefreshConfig {
    fn default() -> Self {
        RefreshConfig {
            period: 5,
            randomize_offsets: true,
        }
    }
}

/// Per-agent recorded motion, one sample per world step including step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub headings: Vec<f64>,
    pub frozen: Vec<bool>,
}

impl AgentTrack {
    fn push(&mut self, a: &AgentState, frozen: bool) {
        self.positions.push(a.position);
        self.velocities.push(a.velocity);
        self.headings.push(a.heading);
        self.frozen.push(frozen);
    }
}

/// A plan refresh taken by the learned planner this step; what PPO stores.
#[derive(Debug, Clone)]
pub struct RefreshEvent {
    pub agent: usize,
    pub obs: Observation,
    pub output: PlannerOutput,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub refreshed: Vec<RefreshEvent>,
    /// Per-agent reward earned by this step (zero for closed streams).
    pub rewards: Vec<f64>,
    pub newly_frozen: Vec<usize>,
    pub terminal: Option<Outcome>,
}

/// Synchronous multi-agent rollout engine shared by evaluation and training.
pub struct Sim<'a> {
    pub world: WorldState,
    controller: &'a Controller,
    limits: EpisodeLimits,
    refresh: RefreshConfig,
    offsets: Vec<usize>,
    plans: Vec<WindingPlan>,
    warms: Vec<Option<Vec<Action>>>,
    pub arrival_steps: Vec<Option<usize>>,
    pub outcome: Option<Outcome>,
    record_tracks: bool,
    pub tracks: Vec<AgentTrack>,
    actions_buf: Vec<Action>,
}

impl<'a> Sim<'a> {
    /// `seed` drives only the refresh-offset draw; planner sampling takes its
    /// own stream via [`Sim::step`].
    pub fn new(
        instance: &Instance,
        controller: &'a Controller,
        limits: EpisodeLimits,
        refresh: RefreshConfig,
        seed: u64,
        record_tracks: bool,
    ) -> Result<Self> {
        if refresh.period < 1 {
            return Err(Error::Config("refresh period must be at least 1".into()));
        }
        let world = initial_world(instance, &controller.dynamics)?;
        let n = world.n_agents();
        let offsets = if refresh.randomize_offsets {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::STREAM_ROLLOUT, 0));
            (0..n).map(|_| rng.gen_range(0..refresh.period)).collect()
        } else {
            vec![0; n]
        };
        let mut tracks = vec![
            AgentTrack {
                positions: Vec::new(),
                velocities: Vec::new(),
                headings: Vec::new(),
                frozen: Vec::new(),
            };
            if record_tracks { n } else { 0 }
        ];
        if record_tracks {
            for (i, t) in tracks.iter_mut().enumerate() {
                t.push(&world.agents[i], false);
            }
        }
        Ok(Sim {
            world,
            controller,
            limits,
            refresh,
            offsets,
            plans: vec![WindingPlan::new(); n],
            warms: vec![None; n],
            arrival_steps: vec![None; n],
            outcome: None,
            record_tracks,
            tracks,
            actions_buf: Vec::with_capacity(n),
        })
    }

    pub fn finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// One synchronous world step: refresh due plans, solve every unfrozen
    /// agent against the shared snapshot, advance, then settle rewards and
    /// the terminal outcome.
    pub fn step(&mut self, source: &PlanSource<'_>, rng: &mut ChaCha8Rng) -> Result<StepReport> {
        assert!(self.outcome.is_none(), "episode already finished");
        let n = self.world.n_agents();
        let step = self.world.step;
        let mut refreshed = Vec::new();

        for i in 0..n {
            if self.world.frozen[i] {
                continue;
            }
            if !refresh_schedule(step, self.offsets[i], self.refresh.period) {
                continue;
            }
            let neighbors = self.world.neighbors_of(i);
            match source {
                PlanSource::Constant { target, weight } => {
                    self.plans[i] = plan_constant(&neighbors, *target, *weight);
                }
                PlanSource::Learned { params, stochastic } => {
                    let obs = encode_observation(
                        &self.world.agents[i],
                        &neighbors,
                        params.arch.n_max,
                        self.controller.dynamics.v_max,
                    )?;
                    let out = sample_plan(params, &obs, rng, *stochastic)?;
                    self.plans[i] = out.plan.clone();
                    refreshed.push(RefreshEvent {
                        agent: i,
                        obs,
                        output: out,
                    });
                }
            }
        }

        self.actions_buf.clear();
        let mut sequences: Vec<Option<Vec<Action>>> = vec![None; n];
        for i in 0..n {
            if self.world.frozen[i] {
                self.actions_buf
                    .push(Action::zero(self.controller.dynamics.model));
                continue;
            }
            let neighbors = self.world.neighbors_of(i);
            let sol = self.controller.solve(
                &self.world.agents[i],
                &neighbors,
                &self.plans[i],
                self.warms[i].as_deref(),
                step as u64,
            )?;
            self.actions_buf.push(sol.action);
            sequences[i] = Some(sol.sequence);
        }
        for (w, s) in self.warms.iter_mut().zip(sequences.into_iter()) {
            if s.is_some() {
                *w = s;
            }
        }

        let frozen_before = self.world.frozen.clone();
        let actions = std::mem::take(&mut self.actions_buf);
        let newly_frozen = step_world(
            &mut self.world,
            &actions,
            &self.controller.dynamics,
            self.limits.goal_tolerance,
        );
        self.actions_buf = actions;
        for &i in &newly_frozen {
            self.arrival_steps[i] = Some(self.world.step);
        }

        let mut rewards = vec![0.0; n];
        for i in 0..n {
            if frozen_before[i] {
                continue; // closed stream
            }
            let d_min = self.world.signed_clearance(i);
            rewards[i] = reward(d_min, newly_frozen.contains(&i));
        }

        if let Some(pair) = detect_collision(&self.world) {
            self.outcome = Some(Outcome::Collision {
                step: self.world.step,
                pair,
            });
        } else if self.world.all_frozen() {
            self.outcome = Some(Outcome::Success {
                steps: self.world.step,
            });
        } else if self.world.step >= self.limits.max_steps {
            self.outcome = Some(Outcome::Timeout);
        }

        if self.record_tracks {
            for (i, t) in self.tracks.iter_mut().enumerate() {
                t.push(&self.world.agents[i], self.world.frozen[i]);
            }
        }

        Ok(StepReport {
            refreshed,
            rewards,
            newly_frozen,
            terminal: self.outcome.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWinding {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub instance: Instance,
    pub outcome: Outcome,
    pub tracks: Vec<AgentTrack>,
    pub arrival_steps: Vec<Option<usize>>,
    pub windings: Vec<PairWinding>,
    pub extra_time: Option<f64>,
    pub dt: f64,
    pub v_max: f64,
}

/// Realized winding number of every pair over full recorded tracks.
pub fn realized_windings(tracks: &[AgentTrack]) -> Result<Vec<PairWinding>> {
    let mut out = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            let pi = PlanarPath::new(tracks[i].positions.clone())?;
            let pj = PlanarPath::new(tracks[j].positions.clone())?;
            let profile = winding_profile(&pi, &pj)?;
            out.push(PairWinding {
                i,
                j,
                w: *profile.last().unwrap(),
            });
        }
    }
    Ok(out)
}

/// Mean over agents of arrival time minus the straight-line lower bound.
/// Defined only for successful episodes.
pub fn extra_time_to_goal(result: &EpisodeResult, v_max: f64) -> Result<f64> {
    if !result.outcome.is_success() {
        return Err(Error::MetricUndefined(
            "extra_time_to_goal requires a successful episode",
        ));
    }
    let n = result.instance.starts.len();
    let mut total = 0.0;
    for i in 0..n {
        let steps = result.arrival_steps[i].ok_or(Error::MetricUndefined(
            "successful episode missing an arrival step",
        ))?;
        let t_goal = steps as f64 * result.dt;
        let straight = (result.instance.goals[i] - result.instance.starts[i]).norm() / v_max;
        total += t_goal - straight;
    }
    Ok(total / n as f64)
}

/// Run one full episode and collect everything the reports need.
///
/// `seed` feeds the refresh offsets and (for a stochastic learned planner)
/// the sampling stream; equal seeds and inputs give identical episodes.
pub fn run_episode(
    instance: &Instance,
    controller: &Controller,
    limits: EpisodeLimits,
    refresh: RefreshConfig,
    source: &PlanSource<'_>,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut sim = Sim::new(instance, controller, limits, refresh, seed, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::STREAM_PLANNER, 0));
    if detect_collision(&sim.world).is_some() {
        return Err(Error::Config(
            "instance starts inside a collision".into(),
        ));
    }
    while !sim.finished() {
        sim.step(source, &mut rng)?;
    }
    let outcome = sim.outcome.clone().unwrap();
    let windings = realized_windings(&sim.tracks)?;
    let mut result = EpisodeResult {
        instance: instance.clone(),
        outcome,
        tracks: sim.tracks,
        arrival_steps: sim.arrival_steps,
        windings,
        extra_time: None,
        dt: controller.dynamics.dt,
        v_max: controller.dynamics.v_max,
    };
    if result.outcome.is_success() {
        result.extra_time = Some(extra_time_to_goal(&result, result.v_max)?);
    }
    Ok(result)
}

/// Identifies where an exported episode sits in a seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidecarSeeds {
    pub master_seed: u64,
    pub episode_index: u64,
    pub episode_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSidecar {
    pub format_version: u32,
    pub instance: Instance,
    pub seeds: SidecarSeeds,
    pub outcome: Outcome,
    pub arrival_steps: Vec<Option<usize>>,
    pub extra_time: Option<f64>,
    pub windings: Vec<PairWinding>,
    pub dt: f64,
    pub v_max: f64,
}

pub const EPISODE_FORMAT_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: &str = "step,agent_id,px,py,vx,vy,heading,frozen";

/// CSV of all tracks, one row per (step, agent). Floats use Rust's shortest
/// round-trip formatting, so equal runs produce byte-identical files.
pub fn trajectory_csv(tracks: &[AgentTrack]) -> String {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let steps = tracks.first().map(|t| t.positions.len()).unwrap_or(0);
    for k in 0..steps {
        for (id, t) in tracks.iter().enumerate() {
            let p = t.positions[k];
            let v = t.velocities[k];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                k,
                id,
                p.x,
                p.y,
                v.x,
                v.y,
                t.headings[k],
                u8::from(t.frozen[k])
            )
            .expect("string write");
        }
    }
    out
}

pub fn export_episode(
    result: &EpisodeResult,
    seeds: SidecarSeeds,
    csv_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    std::fs::write(csv_path, trajectory_csv(&result.tracks))?;
    let sidecar = EpisodeSidecar {
        format_version: EPISODE_FORMAT_VERSION,
        instance: result.instance.clone(),
        seeds,
        outcome: result.outcome.clone(),
        arrival_steps: result.arrival_steps.clone(),
        extra_time: result.extra_time,
        windings: result.windings.clone(),
        dt: result.dt,
        v_max: result.v_max,
    };
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(sidecar_path, json)?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| {
        Error::Data(format!("trajectory line {line}: unparseable {what} '{s}'"))
    })
}

/// Parse a trajectory CSV back into per-agent tracks. Rows must be dense in
/// (step, agent) with agents 0..n and steps 0..T.
pub fn import_trajectory_csv(text: &str) -> Result<Vec<AgentTrack>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRAJECTORY_HEADER => {}
        _ => return Err(Error::Data("bad or missing trajectory header".into())),
    }
    struct Row {
        step: usize,
        agent: usize,
        p: Vec2,
        v: Vec2,
        heading: f64,
        frozen: bool,
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Data(format!(
                "trajectory line {lineno}: expected 8 fields, got {}",
                fields.len()
            )));
        }
        let row = Row {
            step: parse_field(fields[0], lineno, "step")?,
            agent: parse_field(fields[1], lineno, "agent_id")?,
            p: Vec2::new(
                parse_field(fields[2], lineno, "px")?,
                parse_field(fields[3], lineno, "py")?,
            ),
            v: Vec2::new(
                parse_field(fields[4], lineno, "vx")?,
                parse_field(fields[5], lineno, "vy")?,
            ),
            heading: parse_field(fields[6], lineno, "heading")?,
            frozen: parse_field::<u8>(fields[7], lineno, "frozen")? != 0,
        };
        if !row.p.is_finite() || !row.v.is_finite() || !row.heading.is_finite() {
            return Err(Error::Data(format!(
                "trajectory line {lineno}: non-finite value"
            )));
        }
        rows.push(row);
    }
    // agent count = rows before the step counter first advances
    let n = rows.iter().take_while(|r| r.step == 0).count();
    if n == 0 {
        return Err(Error::Data("empty trajectory".into()));
    }
    if rows.len() % n != 0 {
        return Err(Error::Data(
            "ragged trajectory (incomplete final step)".into(),
        ));
    }
    let mut tracks = vec![
        AgentTrack {
            positions: Vec::new(),
            velocities: Vec::new(),
            headings: Vec::new(),
            frozen: Vec::new(),
        };
        n
    ];
    for (r, row) in rows.iter().enumerate() {
        let (want_step, want_agent) = (r / n, r % n);
        if row.step != want_step || row.agent != want_agent {
            return Err(Error::Data(format!(
                "trajectory row {r}: expected (step {want_step}, agent {want_agent}), got ({}, {})",
                row.step, row.agent
            )));
        }
        let t = &mut tracks[row.agent];
        t.positions.push(row.p);
        t.velocities.push(row.v);
        t.headings.push(row.heading);
        t.frozen.push(row.frozen);
    }
    Ok(tracks)
}

pub fn import_sidecar(text: &str) -> Result<EpisodeSidecar> {
    let sc: EpisodeSidecar =
        serde_json::from_str(text).map_err(|e| Error::Data(format!("sidecar: {e}")))?;
    if sc.format_version != EPISODE_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported episode format version {}",
            sc.format_version
        )));
    }
    Ok(sc)
}
