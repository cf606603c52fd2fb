//! The high-level planner that hands each agent a `WindingPlan`.
//!
//! Three implementations share one interface: a constant planner (zero
//! weights reduce the controller to a plain goal/collision MPC; a negative
//! constant weight rewards winding magnitude), and a learned Gaussian policy
//! over per-neighbor (target, weight) pairs, from a small MLP evaluated on a
//! rotation-invariant observation. Targets are squashed with tanh, weights
//! with a scaled softplus, and log-probabilities carry the matching
//! change-of-variables corrections.

use crate::controller::{ObservedNeighbor, WindingPlan};
use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::ops::Range;
use std::path::Path;

pub const SELF_FEATURES: usize = 5;
pub const NEIGHBOR_FEATURES: usize = 7;
/// ln(2πe)/2, the per-channel entropy of a unit Gaussian.
const HALF_LN_TWO_PI_E: f64 = 1.4189385332046727;

/// Where an agent's plan comes from during an episode.
#[derive(Debug, Clone, Copy)]
pub enum PlanSource<'a> {
    Constant { target: f64, weight: f64 },
    Learned { params: &'a PolicyParams, stochastic: bool },
}

impl<'a> PlanSource<'a> {
    /// Plain goal/collision MPC: the winding term contributes exactly zero.
    pub fn vanilla() -> Self {
        PlanSource::Constant {
            target: 0.0,
            weight: 0.0,
        }
    }

    /// Topology-seeking baseline: a negative constant weight turns the
    /// deviation term into a reward for large winding magnitude.
    pub fn t_mpc() -> Self {
        PlanSource::Constant {
            target: 0.0,
            weight: -3.0,
        }
    }
}

/// Every neighbor gets the same (target, weight) pair.
pub fn plan_constant(neighbors: &[ObservedNeighbor], target: f64, weight: f64) -> WindingPlan {
    let mut plan = WindingPlan::new();
    for n in neighbors {
        plan.insert(n.id, target, weight)
            .expect("constant plan entries are finite");
    }
    plan
}

/// True when a new plan is drawn at `step`. Step 0 always refreshes; after
/// that the per-agent `offset` staggers the refresh instants.
pub fn refresh_schedule(step: usize, offset: usize, period: usize) -> bool {
    assert!(period >= 1, "refresh period must be at least 1");
    step == 0 || (step + offset) % period == 0
}

/// Fixed-capacity, rotation-invariant encoding of one agent's surroundings.
///
/// The frame puts +x along the agent's goal direction (falling back to the
/// heading axis within `1e-6` of the goal). Neighbors are sorted by distance
/// (ties by id) into `n_max - 1` slots; empty slots are zero with
/// `mask = false`. `slot_ids` lists the ids behind the valid prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub self_features: Vec<f64>,
    /// `slots × NEIGHBOR_FEATURES`, row per slot.
    pub neighbor_features: Vec<f64>,
    pub mask: Vec<bool>,
    pub slot_ids: Vec<usize>,
}

impl Observation {
    pub fn slots(&self) -> usize {
        self.mask.len()
    }

    /// Per-slot row width (7 for the standard encoding, but observations
    /// carry whatever the architecture was built with).
    pub fn row_width(&self) -> usize {
        match self.slots() {
            0 => 0,
            s => self.neighbor_features.len() / s,
        }
    }

    /// Network input: self features then neighbor rows, masked rows forced
    /// to zero no matter what the stored features say.
    pub fn to_input(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.self_features);
        let width = self.row_width();
        for (slot, valid) in self.mask.iter().enumerate() {
            let row = &self.neighbor_features[slot * width..][..width];
            if *valid {
                out.extend_from_slice(row);
            } else {
                out.extend(std::iter::repeat(0.0).take(width));
            }
        }
    }
}

pub fn encode_observation(
    state: &AgentState,
    neighbors: &[ObservedNeighbor],
    n_max: usize,
    v_max: f64,
) -> Result<Observation> {
    let slots = n_max.checked_sub(1).filter(|s| *s >= 1).ok_or_else(|| {
        Error::Config(format!("n_max must be at least 2, got {n_max}"))
    })?;
    if neighbors.len() > slots {
        return Err(Error::NeighborCapacity {
            got: neighbors.len(),
            capacity: slots,
        });
    }
    let to_goal = state.goal - state.position;
    let axis = if to_goal.norm() < 1e-6 {
        Vec2::new(state.heading.cos(), state.heading.sin())
    } else {
        to_goal.normalized().expect("non-degenerate goal offset")
    };
    let heading_vec = Vec2::new(state.heading.cos(), state.heading.sin());
    let self_features = vec![
        to_goal.norm(),
        v_max,
        axis.dot(heading_vec),
        axis.cross(heading_vec),
        state.radius,
    ];

    let mut order: Vec<(f64, usize, usize)> = neighbors
        .iter()
        .enumerate()
        .map(|(i, n)| ((n.state.position - state.position).norm(), n.id, i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut neighbor_features = vec![0.0; slots * NEIGHBOR_FEATURES];
    let mut mask = vec![false; slots];
    let mut slot_ids = Vec::with_capacity(order.len());
    for (slot, (dist, id, i)) in order.into_iter().enumerate() {
        let n = &neighbors[i];
        let rel_p = n.state.position - state.position;
        let rel_v = n.state.velocity - state.velocity;
        let rel_p = Vec2::new(axis.dot(rel_p), axis.cross(rel_p));
        let rel_v = Vec2::new(axis.dot(rel_v), axis.cross(rel_v));
        let row = &mut neighbor_features[slot * NEIGHBOR_FEATURES..][..NEIGHBOR_FEATURES];
        row.copy_from_slice(&[
            rel_p.x,
            rel_p.y,
            rel_v.x,
            rel_v.y,
            n.state.radius,
            state.radius + n.state.radius,
            dist,
        ]);
        mask[slot] = true;
        slot_ids.push(id);
    }
    let obs = Observation {
        self_features,
        neighbor_features,
        mask,
        slot_ids,
    };
    if obs
        .self_features
        .iter()
        .chain(obs.neighbor_features.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("observation features"));
    }
    Ok(obs)
}

/// Self-describing network shape. Stored with the parameters so a file can
/// be validated before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_max: usize,
    pub self_features: usize,
    pub neighbor_features: usize,
    pub hidden: Vec<usize>,
    pub activation: String,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
}

fn default_w_max() -> f64 {
    1.0
}

fn default_weight_scale() -> f64 {
    10.0
}

impl Architecture {
    pub fn standard(n_max: usize) -> Self {
        Architecture {
            n_max,
            self_features: SELF_FEATURES,
            neighbor_features: NEIGHBOR_FEATURES,
            hidden: vec![64, 64],
            activation: "tanh".into(),
            w_max: default_w_max(),
            weight_scale: default_weight_scale(),
        }
    }

    pub fn slots(&self) -> usize {
        self.n_max - 1
    }

    pub fn input_dim(&self) -> usize {
        self.self_features + self.neighbor_features * self.slots()
    }

    /// Two policy outputs per slot: raw target then raw weight.
    pub fn policy_dim(&self) -> usize {
        2 * self.slots()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::Config(format!(
                "n_max must be at least 2, got {}",
                self.n_max
            )));
        }
        if self.activation != "tanh" {
            return Err(Error::Config(format!(
                "unsupported activation '{}'",
                self.activation
            )));
        }
        if self.self_features == 0 || self.neighbor_features == 0 {
            return Err(Error::Config("feature dims must be positive".into()));
        }
        if !(self.w_max > 0.0) || !(self.weight_scale > 0.0) {
            return Err(Error::Config("squash scales must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut trunk = Vec::with_capacity(self.hidden.len());
        let mut prev = self.input_dim();
        let mut at = 0;
        for &h in &self.hidden {
            let w = at..at + h * prev;
            at = w.end;
            let b = at..at + h;
            at = b.end;
            trunk.push((w, b));
            prev = h;
        }
        let p = self.policy_dim();
        let w_pi = at..at + p * prev;
        at = w_pi.end;
        let b_pi = at..at + p;
        at = b_pi.end;
        let w_v = at..at + prev;
        at = w_v.end;
        let b_v = at..at + 1;
        at = b_v.end;
        let log_std = at..at + p;
        Layout {
            trunk,
            w_pi,
            b_pi,
            w_v,
            b_v,
            log_std,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().log_std.end
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub trunk: Vec<(Range<usize>, Range<usize>)>,
    pub w_pi: Range<usize>,
    pub b_pi: Range<usize>,
    pub w_v: Range<usize>,
    pub b_v: Range<usize>,
    pub log_std: Range<usize>,
}

/// Network parameters as one flat vector (log-stds at the tail, so one
/// optimizer state covers everything). The file form splits the log-std
/// vector out, which `save`/`load` handle.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub flat: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyParamsFile {
    format_version: u32,
    architecture: Architecture,
    params: Vec<f64>,
    log_std: Vec<f64>,
}

pub const POLICY_FORMAT_VERSION: u32 = 1;

impl PolicyParams {
    /// Fresh parameters: unit-fan-in Gaussian trunk, heads scaled by 0.01 so
    /// early plans stay near the squash midpoints (targets near 0, weights
    /// around softplus(0)·scale), log-std ln(0.5).
    pub fn init_random(arch: Architecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut flat = vec![0.0; arch.param_count()];
        let mut prev = arch.input_dim();
        for (i, (w, _)) in layout.trunk.iter().enumerate() {
            let scale = 1.0 / (prev as f64).sqrt();
            for v in &mut flat[w.clone()] {
                *v = rng.sample::<f64, _>(StandardNormal) * scale;
            }
            prev = arch.hidden[i];
        }
        let head_scale = 0.01 / (prev as f64).sqrt();
        for v in &mut flat[layout.w_pi.clone()] {
            *v = rng.sample::<f64, _>(StandardNormal) * head_scale;
        }
        for v in &mut flat[layout.w_v.clone()] {
            *v = rng.sample::<f64, _>(StandardNormal) * head_scale;
        }
        for v in &mut flat[layout.log_std.clone()] {
            *v = 0.5f64.ln();
        }
        Ok(PolicyParams { arch, flat })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let flat = vec![0.0; arch.param_count()];
        Ok(PolicyParams { arch, flat })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.flat.len() != self.arch.param_count() {
            return Err(Error::ParamShape {
                got: self.flat.len(),
                expected: self.arch.param_count(),
            });
        }
        let layout = self.arch.layout();
        if self.flat[layout.log_std].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log_std"));
        }
        Ok(())
    }

    pub fn log_std(&self) -> &[f64] {
        &self.flat[self.arch.layout().log_std]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let split = self.arch.layout().log_std.start;
        let file = PolicyParamsFile {
            format_version: POLICY_FORMAT_VERSION,
            architecture: self.arch.clone(),
            params: self.flat[..split].to_vec(),
            log_std: self.flat[split..].to_vec(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PolicyParamsFile =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if file.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported policy format version {}",
                file.format_version
            )));
        }
        let mut flat = file.params;
        flat.extend_from_slice(&file.log_std);
        let params = PolicyParams {
            arch: file.architecture,
            flat,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub input: Vec<f64>,
    /// Post-tanh activations, one vector per hidden layer.
    pub acts: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub value: f64,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n_in = x.len();
    for (o, bo) in b.iter().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = *bo;
        for (wi, xi) in row.iter().zip(x.iter()) {
            acc += wi * xi;
        }
        out.push(acc);
    }
}

pub(crate) fn forward_cached(params: &PolicyParams, obs: &Observation) -> Result<ForwardCache> {
    params.validate()?;
    let arch = &params.arch;
    if obs.slots() != arch.slots()
        || obs.self_features.len() != arch.self_features
        || obs.neighbor_features.len() != arch.slots() * arch.neighbor_features
    {
        return Err(Error::ParamShape {
            got: obs.self_features.len() + obs.neighbor_features.len(),
            expected: arch.self_features + arch.slots() * arch.neighbor_features,
        });
    }
    let layout = arch.layout();
    let mut input = Vec::with_capacity(arch.input_dim());
    obs.to_input(&mut input);
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(arch.hidden.len());
    {
        let mut x: &[f64] = &input;
        for (w, b) in &layout.trunk {
            let mut z = Vec::new();
            affine(&params.flat[w.clone()], &params.flat[b.clone()], x, &mut z);
            for v in &mut z {
                *v = v.tanh();
            }
            acts.push(z);
            x = acts.last().unwrap();
        }
    }
    let last: &[f64] = acts.last().map(|v| v.as_slice()).unwrap_or(&input);
    let mut means = Vec::new();
    affine(
        &params.flat[layout.w_pi.clone()],
        &params.flat[layout.b_pi.clone()],
        last,
        &mut means,
    );
    let mut value_out = Vec::new();
    affine(
        &params.flat[layout.w_v.clone()],
        &params.flat[layout.b_v.clone()],
        last,
        &mut value_out,
    );
    Ok(ForwardCache {
        input,
        acts,
        means,
        value: value_out[0],
    })
}

/// Deterministic forward pass: per-slot raw means, the state-independent
/// log-std vector, and the value estimate.
pub fn forward(params: &PolicyParams, obs: &Observation) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let cache = forward_cached(params, obs)?;
    Ok((cache.means, params.log_std().to_vec(), cache.value))
}

/// Accumulate dL/dparams into `grad` given upstream gradients on the means
/// and the value. Gradients on the log-std tail are the caller's (they are
/// direct parameters).
pub(crate) fn backward(
    params: &PolicyParams,
    cache: &ForwardCache,
    d_means: &[f64],
    d_value: f64,
    grad: &mut [f64],
) {
    let arch = &params.arch;
    let layout = arch.layout();
    debug_assert_eq!(grad.len(), params.flat.len());
    debug_assert_eq!(d_means.len(), arch.policy_dim());

    let last: &[f64] = cache
        .acts
        .last()
        .map(|v| v.as_slice())
        .unwrap_or(&cache.input);
    let mut d_last = vec![0.0; last.len()];

    // policy head
    {
        let w = &params.flat[layout.w_pi.clone()];
        let gw = &mut grad[layout.w_pi.clone()];
        for (o, dm) in d_means.iter().enumerate() {
            if *dm == 0.0 {
                continue;
            }
            let row = o * last.len();
            for i in 0..last.len() {
                gw[row + i] += dm * last[i];
                d_last[i] += dm * w[row + i];
            }
        }
        for (g, dm) in grad[layout.b_pi.clone()].iter_mut().zip(d_means) {
            *g += dm;
        }
    }
    // value head
    if d_value != 0.0 {
        let w = &params.flat[layout.w_v.clone()];
        let gw = &mut grad[layout.w_v.clone()];
        for i in 0..last.len() {
            gw[i] += d_value * last[i];
            d_last[i] += d_value * w[i];
        }
        grad[layout.b_v.clone()][0] += d_value;
    }
    // trunk, last layer first
    let mut d_out = d_last;
    for l in (0..layout.trunk.len()).rev() {
        let z = &cache.acts[l];
        let prev: &[f64] = if l == 0 { &cache.input } else { &cache.acts[l - 1] };
        let (w_range, b_range) = &layout.trunk[l];
        let w = &params.flat[w_range.clone()];
        let mut d_prev = vec![0.0; prev.len()];
        let dpre: Vec<f64> = z
            .iter()
            .zip(&d_out)
            .map(|(z, d)| d * (1.0 - z * z))
            .collect();
        for (g, d) in grad[b_range.clone()].iter_mut().zip(&dpre) {
            *g += d;
        }
        let gw = &mut grad[w_range.clone()];
        for (o, dp) in dpre.iter().enumerate() {
            if *dp == 0.0 {
                continue;
            }
            let row = o * prev.len();
            for i in 0..prev.len() {
                gw[row + i] += dp * prev[i];
                d_prev[i] += dp * w[row + i];
            }
        }
        d_out = d_prev;
    }
}

/// max(x,0) + ln(1 + exp(-|x|)); overflow-free for any argument.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// ln sigmoid(x) without catastrophic cancellation.
fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// ln(1 - tanh(x)^2) in a form that stays finite for large |x|.
fn log_one_minus_tanh_sq(x: f64) -> f64 {
    2.0 * (LN_2 - x - softplus(-2.0 * x))
}

fn gaussian_log_pdf(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

/// Log-density of the squashed plan at the raw (pre-squash) action values,
/// summed over valid slots. `raw` holds two entries per valid slot.
pub fn action_log_prob(
    arch: &Architecture,
    means: &[f64],
    log_stds: &[f64],
    mask: &[bool],
    raw: &[f64],
) -> f64 {
    let n_valid = mask.iter().filter(|m| **m).count();
    debug_assert_eq!(raw.len(), 2 * n_valid);
    let mut lp = 0.0;
    let mut r = 0;
    for (slot, valid) in mask.iter().enumerate() {
        if !*valid {
            continue;
        }
        let (it, iw) = (2 * slot, 2 * slot + 1);
        let (xt, xw) = (raw[r], raw[r + 1]);
        r += 2;
        lp += gaussian_log_pdf(xt, means[it], log_stds[it]);
        lp -= arch.w_max.ln() + log_one_minus_tanh_sq(xt);
        lp += gaussian_log_pdf(xw, means[iw], log_stds[iw]);
        lp -= arch.weight_scale.ln() + log_sigmoid(xw);
    }
    lp
}

/// Entropy of the pre-squash Gaussian over the valid slots (the PPO bonus
/// uses the base distribution, not the squashed one).
pub fn action_entropy(log_stds: &[f64], mask: &[bool]) -> f64 {
    let mut h = 0.0;
    for (slot, valid) in mask.iter().enumerate() {
        if !*valid {
            continue;
        }
        h += 2.0 * HALF_LN_TWO_PI_E + log_stds[2 * slot] + log_stds[2 * slot + 1];
    }
    h
}

/// One planner decision: the plan handed to the controller plus everything
/// PPO stores about how it was drawn.
#[derive(Debug, Clone)]
pub struct PlannerOutput {
    pub plan: WindingPlan,
    /// Pre-squash action values, two per valid slot in slot order.
    pub raw: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

pub fn squash_target(arch: &Architecture, x: f64) -> f64 {
    arch.w_max * x.tanh()
}

pub fn squash_weight(arch: &Architecture, x: f64) -> f64 {
    softplus(x) * arch.weight_scale
}

/// Draw a plan from the learned policy. `stochastic` samples the Gaussian
/// head; otherwise the means are squashed directly (the log-prob is then the
/// density at the mean).
pub fn sample_plan(
    params: &PolicyParams,
    obs: &Observation,
    rng: &mut ChaCha8Rng,
    stochastic: bool,
) -> Result<PlannerOutput> {
    let cache = forward_cached(params, obs)?;
    let arch = &params.arch;
    let log_stds = params.log_std();
    let mut raw = Vec::with_capacity(2 * obs.slot_ids.len());
    let mut plan = WindingPlan::new();
    let mut valid_idx = 0;
    for (slot, m) in obs.mask.iter().enumerate() {
        if !*m {
            continue;
        }
        let (it, iw) = (2 * slot, 2 * slot + 1);
        let xt = if stochastic {
            cache.means[it] + log_stds[it].exp() * rng.sample::<f64, _>(StandardNormal)
        } else {
            cache.means[it]
        };
        let xw = if stochastic {
            cache.means[iw] + log_stds[iw].exp() * rng.sample::<f64, _>(StandardNormal)
        } else {
            cache.means[iw]
        };
        raw.push(xt);
        raw.push(xw);
        plan.insert(
            obs.slot_ids[valid_idx],
            squash_target(arch, xt),
            squash_weight(arch, xw),
        )?;
        valid_idx += 1;
    }
    let log_prob = action_log_prob(arch, &cache.means, log_stds, &obs.mask, &raw);
    Ok(PlannerOutput {
        plan,
        raw,
        log_prob,
        value: cache.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ObservedState;
    use rand::{Rng, SeedableRng};

    fn agent(p: Vec2, goal: Vec2, heading: f64) -> AgentState {
        AgentState {
            position: p,
            velocity: Vec2::ZERO,
            heading,
            radius: 0.15,
            goal,
        }
    }

    fn neighbor(id: usize, p: Vec2, v: Vec2) -> ObservedNeighbor {
        ObservedNeighbor {
            id,
            state: ObservedState {
                position: p,
                velocity: v,
                radius: 0.15,
            },
        }
    }

    #[test]
    fn encode_rotates_goal_to_plus_x() {
        // goal straight up: a neighbor dead ahead lands on the local +x axis
        let s = agent(Vec2::ZERO, Vec2::new(0.0, 5.0), PI / 2.0);
        let nb = [neighbor(1, Vec2::new(0.0, 1.0), Vec2::ZERO)];
        let obs = encode_observation(&s, &nb, 8, 0.8).unwrap();
        let row = &obs.neighbor_features[..NEIGHBOR_FEATURES];
        assert!((row[0] - 1.0).abs() < 1e-12);
        assert!(row[1].abs() < 1e-12);
        assert!((row[6] - 1.0).abs() < 1e-12);
        assert_eq!(obs.slot_ids, vec![1]);
        assert_eq!(obs.mask[0], true);
        assert!(obs.mask[1..].iter().all(|m| !m));
        // heading along the goal: relative heading features are (1, 0)
        assert!((obs.self_features[2] - 1.0).abs() < 1e-12);
        assert!(obs.self_features[3].abs() < 1e-12);
    }

    #[test]
    fn encode_sorts_by_distance_then_id() {
        let s = agent(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.0);
        let nb = [
            neighbor(7, Vec2::new(2.0, 0.0), Vec2::ZERO),
            neighbor(3, Vec2::new(0.5, 0.0), Vec2::ZERO),
            neighbor(1, Vec2::new(0.0, 2.0), Vec2::ZERO),
        ];
        let obs = encode_observation(&s, &nb, 8, 0.8).unwrap();
        assert_eq!(obs.slot_ids, vec![3, 1, 7]);
    }

    #[test]
    fn encode_at_goal_falls_back_to_heading() {
        let s = agent(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0), 0.7);
        let nb = [neighbor(2, Vec2::new(2.0, 1.0), Vec2::ZERO)];
        let obs = encode_observation(&s, &nb, 4, 0.8).unwrap();
        assert!(obs
            .self_features
            .iter()
            .chain(obs.neighbor_features.iter())
            .all(|v| v.is_finite()));
        // heading-aligned frame: relative heading is exactly (1, 0)
        assert!((obs.self_features[2] - 1.0).abs() < 1e-12);
        assert!(obs.self_features[3].abs() < 1e-12);
    }

    #[test]
    fn encode_rejects_overflow() {
        let s = agent(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.0);
        let nb: Vec<ObservedNeighbor> = (0..4)
            .map(|i| neighbor(i, Vec2::new(1.0 + i as f64, 0.0), Vec2::ZERO))
            .collect();
        match encode_observation(&s, &nb, 4, 0.8) {
            Err(Error::NeighborCapacity { got: 4, capacity: 3 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn observation_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let g = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let h: f64 = rng.gen_range(-3.0..3.0);
            let mut s = agent(p, g, h);
            s.velocity = Vec2::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
            let nb = [
                neighbor(
                    1,
                    Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                    Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
                ),
                neighbor(
                    2,
                    Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                    Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
                ),
            ];
            let base = encode_observation(&s, &nb, 8, 0.8).unwrap();

            let ang: f64 = rng.gen_range(-3.0..3.0);
            let (c, sn) = (ang.cos(), ang.sin());
            let rot = |v: Vec2| v.rotated(c, sn);
            let s2 = AgentState {
                position: rot(s.position),
                velocity: rot(s.velocity),
                heading: s.heading + ang,
                radius: s.radius,
                goal: rot(s.goal),
            };
            let nb2: Vec<ObservedNeighbor> = nb
                .iter()
                .map(|n| ObservedNeighbor {
                    id: n.id,
                    state: ObservedState {
                        position: rot(n.state.position),
                        velocity: rot(n.state.velocity),
                        radius: n.state.radius,
                    },
                })
                .collect();
            let turned = encode_observation(&s2, &nb2, 8, 0.8).unwrap();
            assert_eq!(base.slot_ids, turned.slot_ids);
            for (a, b) in base
                .self_features
                .iter()
                .chain(base.neighbor_features.iter())
                .zip(turned.self_features.iter().chain(turned.neighbor_features.iter()))
            {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let arch = Architecture::standard(4);
        let params = PolicyParams::zeros(arch).unwrap();
        let s = agent(Vec2::ZERO, Vec2::new(2.0, 1.0), 0.3);
        let nb = [neighbor(1, Vec2::new(1.0, 0.0), Vec2::ZERO)];
        let obs = encode_observation(&s, &nb, 4, 0.8).unwrap();
        let (means, log_stds, value) = forward(&params, &obs).unwrap();
        assert!(means.iter().all(|m| *m == 0.0));
        assert!(log_stds.iter().all(|l| *l == 0.0));
        assert_eq!(value, 0.0);
    }

    #[test]
    fn masked_slots_never_touch_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let arch = Architecture::standard(8);
        let params = PolicyParams::init_random(arch, &mut rng).unwrap();
        let s = agent(Vec2::ZERO, Vec2::new(2.0, 1.0), 0.3);
        let nb = [
            neighbor(1, Vec2::new(1.0, 0.0), Vec2::ZERO),
            neighbor(2, Vec2::new(-1.0, 0.5), Vec2::new(0.2, 0.0)),
        ];
        let obs = encode_observation(&s, &nb, 8, 0.8).unwrap();
        let (means, _, value) = forward(&params, &obs).unwrap();
        let mut scribbled = obs.clone();
        for slot in 2..scribbled.slots() {
            for f in &mut scribbled.neighbor_features
                [slot * NEIGHBOR_FEATURES..(slot + 1) * NEIGHBOR_FEATURES]
            {
                *f = rng.gen_range(-100.0..100.0);
            }
        }
        let (means2, _, value2) = forward(&params, &scribbled).unwrap();
        assert_eq!(means, means2);
        assert_eq!(value, value2);
    }

    #[test]
    fn sample_plan_respects_squash_ranges_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let arch = Architecture::standard(8);
        let params = PolicyParams::init_random(arch, &mut rng).unwrap();
        let s = agent(Vec2::ZERO, Vec2::new(2.0, 1.0), 0.3);
        let nb = [
            neighbor(1, Vec2::new(1.0, 0.0), Vec2::ZERO),
            neighbor(5, Vec2::new(0.0, -1.0), Vec2::new(0.1, 0.1)),
        ];
        let obs = encode_observation(&s, &nb, 8, 0.8).unwrap();

        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let a = sample_plan(&params, &obs, &mut r1, true).unwrap();
        let b = sample_plan(&params, &obs, &mut r2, true).unwrap();
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());

        let mut r3 = ChaCha8Rng::seed_from_u64(1);
        let det1 = sample_plan(&params, &obs, &mut r3, false).unwrap();
        let det2 = sample_plan(&params, &obs, &mut r3, false).unwrap();
        assert_eq!(det1.plan, det2.plan);

        for out in [&a, &det1] {
            assert_eq!(out.plan.len(), 2);
            for (_, e) in out.plan.iter() {
                assert!(e.target > -1.0 && e.target < 1.0);
                assert!(e.weight >= 0.0);
            }
        }
    }

    #[test]
    fn log_prob_integrates_to_one_for_one_slot() {
        // 1 valid slot => a 2-D squashed density; a dense grid in squashed
        // space must carry unit mass.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let arch = Architecture::standard(2);
        let params = PolicyParams::init_random(arch.clone(), &mut rng).unwrap();
        let s = agent(Vec2::ZERO, Vec2::new(2.0, 0.0), 0.0);
        let nb = [neighbor(1, Vec2::new(1.0, 0.3), Vec2::new(-0.2, 0.0))];
        let obs = encode_observation(&s, &nb, 2, 0.8).unwrap();
        let (means, log_stds, _) = forward(&params, &obs).unwrap();

        let nt = 801;
        let nw = 1501;
        let (t_lo, t_hi) = (-0.9995, 0.9995);
        let (w_lo, w_hi) = (1e-4, 30.0);
        let dt = (t_hi - t_lo) / (nt - 1) as f64;
        let dw = (w_hi - w_lo) / (nw - 1) as f64;
        let mut mass = 0.0;
        for i in 0..nt {
            let y_t: f64 = t_lo + dt * i as f64;
            let x_t = ((1.0 + y_t) / (1.0 - y_t)).ln() / 2.0; // atanh
            for j in 0..nw {
                let y_w = w_lo + dw * j as f64;
                let x_w = (y_w / arch.weight_scale).exp_m1().ln(); // softplus inverse
                let lp = action_log_prob(&arch, &means, &log_stds, &obs.mask, &[x_t, x_w]);
                mass += lp.exp() * dt * dw;
            }
        }
        assert!((mass - 1.0).abs() < 1e-2, "mass {mass}");
    }

    #[test]
    fn refresh_schedule_examples_and_density() {
        assert!(refresh_schedule(0, 3, 5));
        assert!(refresh_schedule(5, 0, 5));
        assert!(refresh_schedule(10, 0, 5));
        assert!(!refresh_schedule(3, 0, 5));
        assert!(refresh_schedule(3, 2, 5));
        for offset in 0..5 {
            let l = 1000;
            let n = (0..l).filter(|s| refresh_schedule(*s, offset, 5)).count() as i64;
            assert!((n - (l as i64) / 5).abs() <= 1, "offset {offset}: {n}");
        }
    }

    #[test]
    fn params_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = PolicyParams::init_random(Architecture::standard(8), &mut rng).unwrap();
        let path = dir.path().join("policy.json");
        params.save(&path).unwrap();
        let back = PolicyParams::load(&path).unwrap();
        assert_eq!(params, back);

        // truncated parameter vector must be rejected
        let text = std::fs::read_to_string(&path).unwrap();
        let mut file: serde_json::Value = serde_json::from_str(&text).unwrap();
        file["params"].as_array_mut().unwrap().pop();
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(
            PolicyParams::load(&bad),
            Err(Error::ParamShape { .. })
        ));

        // wrong version
        file["params"] = serde_json::to_value(&params.flat[..params.flat.len() - params.arch.policy_dim()]).unwrap();
        file["format_version"] = 99.into();
        std::fs::write(&bad, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(PolicyParams::load(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn plan_constant_covers_all_neighbors() {
        let nb = [
            neighbor(4, Vec2::new(1.0, 0.0), Vec2::ZERO),
            neighbor(2, Vec2::new(0.0, 1.0), Vec2::ZERO),
        ];
        let plan = plan_constant(&nb, 0.0, -3.0);
        assert_eq!(plan.len(), 2);
        for (_, e) in plan.iter() {
            assert_eq!(e.target, 0.0);
            assert_eq!(e.weight, -3.0);
        }
        assert!(plan_constant(&[], 1.0, 1.0).is_empty());
    }

    #[test]
    fn stable_softplus_and_tanh_logs() {
        assert!((softplus(0.0) - LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-50.0) > 0.0);
        assert!(softplus(-50.0) < 1e-20);
        for x in [-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            let direct: f64 = 1.0 - f64::tanh(x) * f64::tanh(x);
            if direct > 0.0 {
                assert!(
                    (log_one_minus_tanh_sq(x) - direct.ln()).abs() < 1e-9,
                    "x={x}"
                );
            } else {
                assert!(log_one_minus_tanh_sq(x).is_finite());
            }
        }
    }

    #[test]
    fn golden_forward_vector() {
        // frozen from the first verified run; guards refactors of the net
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let arch = Architecture::standard(4);
        let params = PolicyParams::init_random(arch, &mut rng).unwrap();
        let s = agent(Vec2::new(-1.0, 0.5), Vec2::new(2.0, -0.5), -0.3);
        let nb = [
            neighbor(1, Vec2::new(0.5, 0.0), Vec2::new(-0.2, 0.1)),
            neighbor(2, Vec2::new(0.0, 1.0), Vec2::new(0.3, -0.3)),
        ];
        let obs = encode_observation(&s, &nb, 4, 0.8).unwrap();
        let (means, log_stds, value) = forward(&params, &obs).unwrap();
        let expect_means = [
            GOLDEN_M0, GOLDEN_M1, GOLDEN_M2, GOLDEN_M3, GOLDEN_M4, GOLDEN_M5,
        ];
        for (m, e) in means.iter().zip(expect_means.iter()) {
            assert!((m - e).abs() < 1e-12, "{m} vs {e}");
        }
        assert!((value - GOLDEN_V).abs() < 1e-12);
        for l in log_stds {
            assert_eq!(l, 0.5f64.ln());
        }
    }

    const GOLDEN_M0: f64 = 0.0007604152905618356;
    const GOLDEN_M1: f64 = 0.001514835714014329;
    const GOLDEN_M2: f64 = 0.0020454349886125404;
    const GOLDEN_M3: f64 = -0.0063605443541320545;
    const GOLDEN_M4: f64 = 0.007104262683580313;
    const GOLDEN_M5: f64 = -0.0001976056933177002;
    const GOLDEN_V: f64 = 0.004919102723576973;
}
