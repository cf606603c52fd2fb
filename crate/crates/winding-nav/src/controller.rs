//! Sampling-based MPC. Each solve rolls candidate action sequences through
//! the own-agent dynamics against constant-velocity neighbor predictions and
//! scores them with three terms: quadratic goal distance, squared asymmetric
//! Gaussian collision fields, and squared deviation of the predicted pairwise
//! winding numbers from the planned targets. The first action of the cheapest
//! candidate is applied; ties go to the lowest candidate index.
//!
//! Candidates are drawn in a goal-aligned local frame from a seeded stream
//! shared by all agents, which keeps the solver deterministic and exactly
//! equivariant under rotations of the whole scene. Two shaped candidates
//! (all-zero and greedy-to-goal) plus the shifted previous solution are always
//! in the set.

use crate::dynamics::{
    is_feasible, Action, AgentState, DynamicsConfig, DynamicsModel, ObservedState,
};
use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};
use crate::seeds;
use crate::topology::{winding_core, wrap_angle, PlanarPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Rollout horizon K; paths have K+1 states.
    pub horizon: usize,
    pub alpha_g: f64,
    pub alpha_o: f64,
    pub q_g: Mat2,
    /// Gaussian spread ahead of a neighbor's heading.
    pub sigma_h: f64,
    /// Spread behind.
    pub sigma_r: f64,
    /// Spread to the sides.
    pub sigma_s: f64,
    /// Random candidates per solve, in addition to the shaped ones.
    pub num_candidates: usize,
    pub rng_seed: u64,
    /// When false the winding term is skipped entirely (vanilla fast path).
    pub winding_term: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            horizon: 10,
            alpha_g: 1.0,
            alpha_o: 10.0,
            q_g: Mat2::identity(),
            sigma_h: 0.5,
            sigma_r: 0.3,
            sigma_s: 0.35,
            num_candidates: 256,
            rng_seed: 0,
            winding_term: true,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.num_candidates == 0 {
            return Err(Error::Config("num_candidates must be at least 1".into()));
        }
        for (name, v) in [
            ("sigma_h", self.sigma_h),
            ("sigma_r", self.sigma_r),
            ("sigma_s", self.sigma_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.alpha_g.is_finite() || !self.alpha_o.is_finite() {
            return Err(Error::Config("cost weights must be finite".into()));
        }
        if !self.q_g.is_symmetric_positive_definite() {
            return Err(Error::Config(
                "q_g must be symmetric positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Per-neighbor winding target and weight, keyed by agent id. Every key holds
/// both values, so targets and weights cannot drift apart.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WindingPlan {
    entries: BTreeMap<usize, PlanEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub target: f64,
    pub weight: f64,
}

impl WindingPlan {
    pub fn new() -> Self {
        WindingPlan::default()
    }

    pub fn insert(&mut self, neighbor_id: usize, target: f64, weight: f64) -> Result<()> {
        if !target.is_finite() || !weight.is_finite() {
            return Err(Error::NonFinite("WindingPlan entry"));
        }
        self.entries.insert(neighbor_id, PlanEntry { target, weight });
        Ok(())
    }

    pub fn entry(&self, neighbor_id: usize) -> Option<PlanEntry> {
        self.entries.get(&neighbor_id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, PlanEntry)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact key match against a neighbor id set.
    pub fn matches<I: IntoIterator<Item = usize>>(&self, neighbor_ids: I) -> bool {
        let mut ids: Vec<usize> = neighbor_ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len() == self.entries.len() && ids.into_iter().eq(self.ids())
    }
}

/// A neighbor as the controller sees it: observable slice plus identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedNeighbor {
    pub id: usize,
    pub state: ObservedState,
}

/// Constant-velocity prediction for one neighbor over the horizon.
#[derive(Debug, Clone)]
pub struct NeighborPrediction {
    pub id: usize,
    pub radius: f64,
    pub path: PlanarPath,
}

/// Constant-velocity extrapolation; each path has `horizon + 1` points.
pub fn predict_others(neighbors: &[ObservedState], horizon: usize, dt: f64) -> Vec<PlanarPath> {
    neighbors
        .iter()
        .map(|n| {
            let pts = (0..=horizon)
                .map(|k| n.position + n.velocity * (k as f64 * dt))
                .collect();
            PlanarPath::new(pts).expect("finite observed state")
        })
        .collect()
}

pub fn predict_neighbors(
    neighbors: &[ObservedNeighbor],
    horizon: usize,
    dt: f64,
) -> Vec<NeighborPrediction> {
    neighbors
        .iter()
        .map(|n| {
            let pts = (0..=horizon)
                .map(|k| n.state.position + n.state.velocity * (k as f64 * dt))
                .collect();
            NeighborPrediction {
                id: n.id,
                radius: n.state.radius,
                path: PlanarPath::new(pts).expect("finite observed state"),
            }
        })
        .collect()
}

/// Sum of (p - goal)' Q (p - goal) over every state of the rollout.
pub fn goal_cost(path: &[AgentState], q_g: &Mat2) -> f64 {
    let mut total = 0.0;
    for s in path {
        total += q_g.quad_form(s.position - s.goal);
    }
    total
}

/// Collision field of one neighbor at a relative offset expressed in the own
/// heading frame (+x forward, +y left). The center-to-center offset is
/// shortened by the radii sum, clamped so contact or overlap scores 1, and
/// the forward/backward spread differs while the lateral spread is shared.
pub fn asymmetric_gaussian(
    rel: Vec2,
    sigma_h: f64,
    sigma_r: f64,
    sigma_s: f64,
    radii_sum: f64,
) -> f64 {
    let n = rel.norm();
    if n <= radii_sum {
        return 1.0;
    }
    let eff = rel * (1.0 - radii_sum / n);
    let sigma_x = if eff.x >= 0.0 { sigma_h } else { sigma_r };
    (-0.5 * (eff.x * eff.x / (sigma_x * sigma_x) + eff.y * eff.y / (sigma_s * sigma_s))).exp()
}

/// Frame the collision field is evaluated in. Holonomic motion keeps heading
/// aligned with velocity, so the unit velocity is used directly when moving;
/// diff-drive bodies keep the stored heading (reversing must not flip the
/// front of the field).
#[inline]
fn heading_axis(state: &AgentState, model: DynamicsModel) -> Vec2 {
    match model {
        DynamicsModel::Holonomic => state
            .velocity
            .normalized()
            .unwrap_or_else(|| Vec2::new(state.heading.cos(), state.heading.sin())),
        DynamicsModel::DiffDrive => Vec2::new(state.heading.cos(), state.heading.sin()),
    }
}

/// Sum of squared collision-field values over every neighbor and rollout step.
pub fn collision_cost(
    path: &[AgentState],
    others: &[NeighborPrediction],
    cfg: &ControllerConfig,
    model: DynamicsModel,
) -> f64 {
    let mut total = 0.0;
    for (k, s) in path.iter().enumerate() {
        let axis = heading_axis(s, model);
        for other in others {
            let rel_world = other.path.points()[k] - s.position;
            let rel = Vec2::new(axis.dot(rel_world), axis.cross(rel_world));
            let a = asymmetric_gaussian(
                rel,
                cfg.sigma_h,
                cfg.sigma_r,
                cfg.sigma_s,
                s.radius + other.radius,
            );
            total += a * a;
        }
    }
    total
}

/// Weighted squared deviation of predicted winding numbers from their
/// targets, averaged over the other agents: entries are (target, weight)
/// aligned with `others`.
pub(crate) fn winding_cost_over_positions(
    own_positions: &[Vec2],
    others: &[NeighborPrediction],
    entries: &[(f64, f64)],
    n_agents: usize,
) -> f64 {
    if others.is_empty() {
        return 0.0;
    }
    debug_assert_eq!(others.len(), entries.len());
    debug_assert!(n_agents >= 2);
    let inv = 1.0 / (n_agents as f64 - 1.0);
    let mut total = 0.0;
    for (other, (target, weight)) in others.iter().zip(entries.iter()) {
        let w = winding_core(own_positions, other.path.points());
        let dev = w - target;
        total += inv * weight * dev * dev;
    }
    total
}

/// Winding deviation cost of a rollout. The plan keys must match the
/// predicted neighbor ids exactly.
pub fn winding_cost(
    path: &[AgentState],
    others: &[NeighborPrediction],
    plan: &WindingPlan,
    n_agents: usize,
) -> Result<f64> {
    if !plan.matches(others.iter().map(|o| o.id)) {
        return Err(Error::PlanMismatch);
    }
    if others.is_empty() {
        return Ok(0.0);
    }
    let positions: Vec<Vec2> = path.iter().map(|s| s.position).collect();
    let entries: Vec<(f64, f64)> = others
        .iter()
        .map(|o| {
            let e = plan.entry(o.id).expect("validated above");
            (e.target, e.weight)
        })
        .collect();
    Ok(winding_cost_over_positions(
        &positions, others, &entries, n_agents,
    ))
}

/// Full rollout cost: alpha_g * goal + alpha_o * collision + winding.
pub fn total_cost(
    path: &[AgentState],
    others: &[NeighborPrediction],
    plan: &WindingPlan,
    cfg: &ControllerConfig,
    model: DynamicsModel,
    n_agents: usize,
) -> Result<f64> {
    let winding = if cfg.winding_term {
        winding_cost(path, others, plan, n_agents)?
    } else {
        if !plan.matches(others.iter().map(|o| o.id)) {
            return Err(Error::PlanMismatch);
        }
        0.0
    };
    Ok(cfg.alpha_g * goal_cost(path, &cfg.q_g)
        + cfg.alpha_o * collision_cost(path, others, cfg, model)
        + winding)
}

/// Result of one solve: the action to apply now, plus the full sequence that
/// won, which callers keep as the next warm start.
#[derive(Debug, Clone)]
pub struct Solution {
    pub action: Action,
    pub sequence: Vec<Action>,
    pub cost: f64,
    pub candidate_index: usize,
}

pub struct Controller {
    pub cfg: ControllerConfig,
    pub dynamics: DynamicsConfig,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, dynamics: DynamicsConfig) -> Result<Self> {
        cfg.validate()?;
        dynamics.validate()?;
        Ok(Controller { cfg, dynamics })
    }

    /// Greedy one-step action toward the goal, recomputed along the rollout.
    fn greedy_goal_action(&self, state: &AgentState) -> Action {
        let dt = self.dynamics.dt;
        match self.dynamics.model {
            DynamicsModel::Holonomic => Action::Holonomic(crate::dynamics::clamp_holonomic(
                (state.goal - state.position) / dt,
                self.dynamics.v_max,
            )),
            DynamicsModel::DiffDrive => {
                let to_goal = state.goal - state.position;
                let dist = to_goal.norm();
                if dist < 1e-9 {
                    return Action::zero(DynamicsModel::DiffDrive);
                }
                let desired = wrap_angle(to_goal.y.atan2(to_goal.x) - state.heading);
                let angular = desired / dt;
                let linear = dist / dt * desired.cos().max(0.0);
                Action::DiffDrive(crate::dynamics::clamp_diffdrive(
                    linear,
                    angular,
                    self.dynamics.v_max,
                    self.dynamics.wheel_coef,
                ))
            }
        }
    }

    /// Draw one feasible action in the goal-aligned frame and map it to the
    /// world. Diff-drive commands are body-frame already and sample the wheel
    /// constraint diamond directly.
    fn sample_action(&self, rng: &mut ChaCha8Rng, goal_axis: Vec2) -> Action {
        match self.dynamics.model {
            DynamicsModel::Holonomic => {
                let r = self.dynamics.v_max * rng.gen::<f64>().sqrt();
                let ang = rng.gen::<f64>() * TAU;
                let local = Vec2::new(r * ang.cos(), r * ang.sin());
                Action::Holonomic(crate::dynamics::HolonomicAction {
                    velocity: local.rotated(goal_axis.x, goal_axis.y),
                })
            }
            DynamicsModel::DiffDrive => {
                let b = self.dynamics.v_max;
                let c1 = (rng.gen::<f64>() * 2.0 - 1.0) * b;
                let c2 = (rng.gen::<f64>() * 2.0 - 1.0) * b;
                Action::DiffDrive(crate::dynamics::DiffDriveAction {
                    linear: (c1 + c2) / 2.0,
                    angular: (c1 - c2) / 2.0 * self.dynamics.wheel_coef,
                })
            }
        }
    }

    /// Pick the cheapest feasible action sequence for the current state.
    ///
    /// `warm` is the caller-owned previous solution (it is shifted one step
    /// and re-entered as a candidate); `salt` folds the caller's step counter
    /// into the sampling stream so repeated solves with equal inputs and salt
    /// are bit-identical.
    pub fn solve(
        &self,
        state: &AgentState,
        neighbors: &[ObservedNeighbor],
        plan: &WindingPlan,
        warm: Option<&[Action]>,
        salt: u64,
    ) -> Result<Solution> {
        self.cfg.validate()?;
        if !state.position.is_finite() || !state.velocity.is_finite() || !state.heading.is_finite()
        {
            return Err(Error::NonFinite("solve state"));
        }
        if !plan.matches(neighbors.iter().map(|n| n.id)) {
            return Err(Error::PlanMismatch);
        }
        let k = self.cfg.horizon;
        let preds = predict_neighbors(neighbors, k, self.dynamics.dt);
        let entries: Vec<(f64, f64)> = preds
            .iter()
            .map(|p| {
                let e = plan.entry(p.id).expect("plan validated");
                (e.target, e.weight)
            })
            .collect();
        let n_agents = neighbors.len() + 1;

        let goal_axis = (state.goal - state.position)
            .normalized()
            .filter(|_| (state.goal - state.position).norm() >= 1e-9)
            .unwrap_or(Vec2::new(1.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            self.cfg.rng_seed,
            seeds::STREAM_SOLVE,
            salt,
        ));

        let mut actions: Vec<Action> = Vec::with_capacity(k);
        let mut states: Vec<AgentState> = Vec::with_capacity(k + 1);
        let mut positions: Vec<Vec2> = Vec::with_capacity(k + 1);
        let mut best: Option<(f64, usize, Vec<Action>, Action)> = None;

        let seg1 = k / 2;
        let total_candidates = self.cfg.num_candidates + 2 + usize::from(warm.is_some());

        for idx in 0..total_candidates {
            actions.clear();
            states.clear();
            states.push(*state);
            match idx {
                0 => {
                    for _ in 0..k {
                        let a = Action::zero(self.dynamics.model);
                        states.push(self.dynamics.step(states.last().unwrap(), &a));
                        actions.push(a);
                    }
                }
                1 => {
                    for _ in 0..k {
                        let a = self.greedy_goal_action(states.last().unwrap());
                        states.push(self.dynamics.step(states.last().unwrap(), &a));
                        actions.push(a);
                    }
                }
                2 if warm.is_some() => {
                    let w = warm.unwrap();
                    for i in 0..k {
                        // shift one step, repeating the final action
                        let a = if i + 1 < w.len() {
                            w[i + 1]
                        } else if let Some(last) = w.last() {
                            *last
                        } else {
                            Action::zero(self.dynamics.model)
                        };
                        states.push(self.dynamics.step(states.last().unwrap(), &a));
                        actions.push(a);
                    }
                }
                _ => {
                    let a1 = self.sample_action(&mut rng, goal_axis);
                    let a2 = self.sample_action(&mut rng, goal_axis);
                    for i in 0..k {
                        let a = if i < seg1 { a1 } else { a2 };
                        states.push(self.dynamics.step(states.last().unwrap(), &a));
                        actions.push(a);
                    }
                }
            }

            let mut cost = self.cfg.alpha_g * goal_cost(&states, &self.cfg.q_g)
                + self.cfg.alpha_o
                    * collision_cost(&states, &preds, &self.cfg, self.dynamics.model);
            if self.cfg.winding_term && !preds.is_empty() {
                positions.clear();
                positions.extend(states.iter().map(|s| s.position));
                cost += winding_cost_over_positions(&positions, &preds, &entries, n_agents);
            }

            if cost.is_nan() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((best_cost, _, _, _)) => cost < *best_cost,
            };
            if better {
                best = Some((cost, idx, actions.clone(), actions[0]));
            }
        }

        let (cost, candidate_index, sequence, action) = best.ok_or_else(|| {
            Error::Numerical("every candidate rollout produced a NaN cost".into())
        })?;
        debug_assert!(is_feasible(&action, &self.dynamics));
        Ok(Solution {
            action,
            sequence,
            cost,
            candidate_index,
        })
    }
}
