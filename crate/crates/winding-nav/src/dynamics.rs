//! Agent state and the two transition models: a holonomic point that follows
//! velocity commands directly, and a differential-drive body integrated with
//! a midpoint heading. The simulator and the controller rollouts share these
//! functions, so predicted and executed motion can only drift apart through
//! the neighbor predictions, never the own-model step.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// Shared tolerance for feasibility checks and idempotent clamping.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsModel {
    Holonomic,
    DiffDrive,
}

/// Full state of one agent, including its fixed goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Radians, world frame.
    pub heading: f64,
    pub radius: f64,
    pub goal: Vec2,
}

impl AgentState {
    pub fn observe(&self) -> ObservedState {
        ObservedState {
            position: self.position,
            velocity: self.velocity,
            radius: self.radius,
        }
    }
}

/// What one agent can see of another: pose, velocity, and size. No goal, no
/// heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolonomicAction {
    pub velocity: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffDriveAction {
    /// Forward speed.
    pub linear: f64,
    /// Turn rate, radians per time unit.
    pub angular: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Holonomic(HolonomicAction),
    DiffDrive(DiffDriveAction),
}

impl Action {
    pub fn zero(model: DynamicsModel) -> Action {
        match model {
            DynamicsModel::Holonomic => Action::Holonomic(HolonomicAction {
                velocity: Vec2::ZERO,
            }),
            DynamicsModel::DiffDrive => Action::DiffDrive(DiffDriveAction {
                linear: 0.0,
                angular: 0.0,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub model: DynamicsModel,
    /// Step duration.
    pub dt: f64,
    /// Speed limit; also the per-wheel bound of the diff-drive constraints.
    pub v_max: f64,
    /// Couples turn rate to wheel speed: |linear +- angular/wheel_coef| <= v_max.
    pub wheel_coef: f64,
    /// Default body radius for generated agents.
    pub collision_radius: f64,
}

impl DynamicsConfig {
    pub fn holonomic() -> Self {
        DynamicsConfig {
            model: DynamicsModel::Holonomic,
            dt: 0.1,
            v_max: 0.8,
            wheel_coef: 7.5,
            collision_radius: 0.15,
        }
    }

    pub fn diffdrive() -> Self {
        DynamicsConfig {
            model: DynamicsModel::DiffDrive,
            dt: 0.1,
            v_max: 0.6,
            wheel_coef: 7.5,
            collision_radius: 0.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return Err(Error::Config(format!(
                "v_max must be positive, got {}",
                self.v_max
            )));
        }
        if !(self.wheel_coef > 0.0) || !self.wheel_coef.is_finite() {
            return Err(Error::Config(format!(
                "wheel_coef must be positive, got {}",
                self.wheel_coef
            )));
        }
        if !(self.collision_radius > 0.0) || !self.collision_radius.is_finite() {
            return Err(Error::Config(format!(
                "collision_radius must be positive, got {}",
                self.collision_radius
            )));
        }
        Ok(())
    }

    pub fn step(&self, state: &AgentState, action: &Action) -> AgentState {
        match (self.model, action) {
            (DynamicsModel::Holonomic, Action::Holonomic(u)) => {
                step_holonomic(state, u, self.dt)
            }
            (DynamicsModel::DiffDrive, Action::DiffDrive(a)) => {
                step_diffdrive(state, a, self.dt)
            }
            _ => panic!("action variant does not match the dynamics model"),
        }
    }

    /// Project a raw 2D command onto the feasible set. For the holonomic model
    /// the components are a velocity; for diff-drive they are (linear, angular).
    pub fn clamp_raw(&self, raw: Vec2) -> Action {
        match self.model {
            DynamicsModel::Holonomic => Action::Holonomic(clamp_holonomic(raw, self.v_max)),
            DynamicsModel::DiffDrive => Action::DiffDrive(clamp_diffdrive(
                raw.x,
                raw.y,
                self.v_max,
                self.wheel_coef,
            )),
        }
    }
}

/// Position integrates the commanded velocity; the velocity is adopted
/// directly, and the heading follows the motion direction. A zero command
/// leaves the heading unchanged.
pub fn step_holonomic(state: &AgentState, action: &HolonomicAction, dt: f64) -> AgentState {
    let u = action.velocity;
    let heading = if u.x == 0.0 && u.y == 0.0 {
        state.heading
    } else {
        u.y.atan2(u.x)
    };
    AgentState {
        position: state.position + u * dt,
        velocity: u,
        heading,
        radius: state.radius,
        goal: state.goal,
    }
}

/// Midpoint integration: the displacement uses the heading at half the turn,
/// the stored velocity is the new forward velocity vector.
pub fn step_diffdrive(state: &AgentState, action: &DiffDriveAction, dt: f64) -> AgentState {
    let mid = state.heading + action.angular * dt / 2.0;
    let heading = state.heading + action.angular * dt;
    AgentState {
        position: state.position + Vec2::new(mid.cos(), mid.sin()) * (action.linear * dt),
        velocity: Vec2::new(heading.cos(), heading.sin()) * action.linear,
        heading,
        radius: state.radius,
        goal: state.goal,
    }
}

/// Scale the command into the speed ball. Commands already inside (up to the
/// feasibility tolerance) pass through unchanged, which makes the projection
/// idempotent.
pub fn clamp_holonomic(u_raw: Vec2, v_max: f64) -> HolonomicAction {
    let n = u_raw.norm();
    if n <= v_max * (1.0 + FEASIBILITY_TOL) {
        HolonomicAction { velocity: u_raw }
    } else {
        HolonomicAction {
            velocity: u_raw * (v_max / n),
        }
    }
}

/// Radially scale (linear, angular) until both wheel constraints
/// |linear +- angular/wheel_coef| <= v_max hold, preserving their ratio.
pub fn clamp_diffdrive(linear: f64, angular: f64, v_max: f64, wheel_coef: f64) -> DiffDriveAction {
    let c1 = (linear + angular / wheel_coef).abs();
    let c2 = (linear - angular / wheel_coef).abs();
    let worst = c1.max(c2);
    if worst <= v_max * (1.0 + FEASIBILITY_TOL) {
        DiffDriveAction { linear, angular }
    } else {
        let t = v_max / worst;
        DiffDriveAction {
            linear: linear * t,
            angular: angular * t,
        }
    }
}

/// Whether the action satisfies the model's input constraints within
/// [`FEASIBILITY_TOL`]. An action of the wrong variant is infeasible.
pub fn is_feasible(action: &Action, cfg: &DynamicsConfig) -> bool {
    match (cfg.model, action) {
        (DynamicsModel::Holonomic, Action::Holonomic(u)) => {
            u.velocity.is_finite() && u.velocity.norm() <= cfg.v_max + FEASIBILITY_TOL
        }
        (DynamicsModel::DiffDrive, Action::DiffDrive(a)) => {
            a.linear.is_finite()
                && a.angular.is_finite()
                && (a.linear + a.angular / cfg.wheel_coef).abs() <= cfg.v_max + FEASIBILITY_TOL
                && (a.linear - a.angular / cfg.wheel_coef).abs() <= cfg.v_max + FEASIBILITY_TOL
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_at(p: Vec2, heading: f64) -> AgentState {
        AgentState {
            position: p,
            velocity: Vec2::ZERO,
            heading,
            radius: 0.15,
            goal: Vec2::ZERO,
        }
    }

    #[test]
    fn holonomic_step_moves_and_reorients() {
        let s = state_at(Vec2::new(1.0, 1.0), 0.0);
        let u = HolonomicAction {
            velocity: Vec2::new(0.8, 0.0),
        };
        let next = step_holonomic(&s, &u, 0.1);
        assert!((next.position.x - 1.08).abs() < 1e-15);
        assert_eq!(next.position.y, 1.0);
        assert_eq!(next.velocity, u.velocity);
        assert_eq!(next.heading, 0.0);
        // heading follows the command direction
        let up = step_holonomic(
            &s,
            &HolonomicAction {
                velocity: Vec2::new(0.0, 0.5),
            },
            0.1,
        );
        assert!((up.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn holonomic_zero_command_keeps_heading() {
        let s = state_at(Vec2::ZERO, 1.23);
        let next = step_holonomic(
            &s,
            &HolonomicAction {
                velocity: Vec2::ZERO,
            },
            0.1,
        );
        assert_eq!(next.position, s.position);
        assert_eq!(next.heading, 1.23);
        assert_eq!(next.velocity, Vec2::ZERO);
    }

    #[test]
    fn diffdrive_midpoint_displacement() {
        // Frozen from evaluating the midpoint formula numerically.
        let s = state_at(Vec2::ZERO, 0.0);
        let a = DiffDriveAction {
            linear: 0.5,
            angular: 1.0,
        };
        let next = step_diffdrive(&s, &a, 0.1);
        assert!((next.position.x - 0.04993751301974832).abs() < 1e-12);
        assert!((next.position.y - 0.002498958463533917).abs() < 1e-12);
        assert!((next.heading - 0.1).abs() < 1e-15);
        // velocity aligns with the new heading at the commanded speed
        let v_expected = Vec2::new(0.1f64.cos(), 0.1f64.sin()) * 0.5;
        assert!((next.velocity - v_expected).norm() < 1e-15);
    }

    #[test]
    fn diffdrive_zero_input_is_a_fixpoint() {
        let s = AgentState {
            position: Vec2::new(2.0, -1.0),
            velocity: Vec2::new(0.3, 0.1),
            heading: 0.7,
            radius: 0.15,
            goal: Vec2::ZERO,
        };
        let next = step_diffdrive(
            &s,
            &DiffDriveAction {
                linear: 0.0,
                angular: 0.0,
            },
            0.1,
        );
        assert_eq!(next.position, s.position);
        assert_eq!(next.heading, s.heading);
        assert_eq!(next.velocity.norm(), 0.0);
    }

    #[test]
    fn clamp_diffdrive_scales_radially() {
        let a = clamp_diffdrive(0.6, 4.5, 0.6, 7.5);
        assert!((a.linear - 0.3).abs() < 1e-12);
        assert!((a.angular - 2.25).abs() < 1e-12);
        // ratio preserved
        assert!((a.angular / a.linear - 7.5).abs() < 1e-9);
    }

    #[test]
    fn clamp_holonomic_projects_onto_ball() {
        let inside = clamp_holonomic(Vec2::new(0.3, -0.2), 0.8);
        assert_eq!(inside.velocity, Vec2::new(0.3, -0.2));
        let out = clamp_holonomic(Vec2::new(3.0, 4.0), 0.8);
        assert!((out.velocity.norm() - 0.8).abs() < 1e-12);
        assert!((out.velocity.y / out.velocity.x - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn steps_are_bit_deterministic() {
        let s = state_at(Vec2::new(0.2, 0.4), 0.3);
        let u = HolonomicAction {
            velocity: Vec2::new(0.11, -0.57),
        };
        let a = step_holonomic(&s, &u, 0.1);
        let b = step_holonomic(&s, &u, 0.1);
        assert_eq!(a, b);
        let d = DiffDriveAction {
            linear: 0.44,
            angular: -2.1,
        };
        assert_eq!(step_diffdrive(&s, &d, 0.1), step_diffdrive(&s, &d, 0.1));
    }

    #[test]
    fn displacement_bounded_by_speed_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hol = DynamicsConfig::holonomic();
        let dif = DynamicsConfig::diffdrive();
        for _ in 0..500 {
            let s = state_at(
                Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                rng.gen_range(-3.0..3.0),
            );
            let raw = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-9.0..9.0));
            let a = hol.clamp_raw(raw);
            let next = hol.step(&s, &a);
            assert!((next.position - s.position).norm() <= hol.v_max * hol.dt * (1.0 + 1e-9));
            assert!(is_feasible(&a, &hol));
            let a = dif.clamp_raw(raw);
            let next = dif.step(&s, &a);
            // both wheel constraints bound |linear| by v_max
            assert!((next.position - s.position).norm() <= dif.v_max * dif.dt * (1.0 + 1e-9));
            assert!(is_feasible(&a, &dif));
        }
    }

    #[test]
    fn feasibility_rejects_wrong_variant_and_violations() {
        let hol = DynamicsConfig::holonomic();
        let dif = DynamicsConfig::diffdrive();
        assert!(!is_feasible(&Action::zero(DynamicsModel::DiffDrive), &hol));
        assert!(!is_feasible(&Action::zero(DynamicsModel::Holonomic), &dif));
        assert!(!is_feasible(
            &Action::Holonomic(HolonomicAction {
                velocity: Vec2::new(0.9, 0.0)
            }),
            &hol
        ));
        assert!(!is_feasible(
            &Action::DiffDrive(DiffDriveAction {
                linear: 0.5,
                angular: 2.0
            }),
            &dif
        ));
        assert!(is_feasible(
            &Action::DiffDrive(DiffDriveAction {
                linear: 0.5,
                angular: 0.5
            }),
            &dif
        ));
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = DynamicsConfig::holonomic();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = DynamicsConfig::holonomic();
        cfg.v_max = -1.0;
        assert!(cfg.validate().is_err());
        assert!(DynamicsConfig::diffdrive().validate().is_ok());
    }

    proptest! {
        #[test]
        fn clamp_holonomic_is_idempotent(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let once = clamp_holonomic(Vec2::new(x, y), 0.8);
            let twice = clamp_holonomic(once.velocity, 0.8);
            prop_assert_eq!(once.velocity, twice.velocity);
            prop_assert!(once.velocity.norm() <= 0.8 + FEASIBILITY_TOL);
        }

        #[test]
        fn clamp_diffdrive_is_idempotent(lin in -3.0f64..3.0, ang in -20.0f64..20.0) {
            let once = clamp_diffdrive(lin, ang, 0.6, 7.5);
            let twice = clamp_diffdrive(once.linear, once.angular, 0.6, 7.5);
            prop_assert_eq!((once.linear, once.angular), (twice.linear, twice.angular));
            prop_assert!(is_feasible(
                &Action::DiffDrive(once),
                &DynamicsConfig::diffdrive()
            ));
        }
    }
}
