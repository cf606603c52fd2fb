//! Pairwise winding numbers over sampled planar trajectories.
//!
//! The winding number of a trajectory pair accumulates the signed change of
//! the bearing from one agent to the other, in turns: each increment is the
//! angle difference wrapped into (-pi, pi], and the sum is divided by 2*pi.
//! Counter-clockwise rotation of the relative position counts positive, so
//! the sign encodes which side the agents pass each other on.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use std::f64::consts::{PI, TAU};

/// Positions of one agent at uniformly spaced instants.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPath {
    points: Vec<Vec2>,
}

impl PlanarPath {
    /// Requires at least one point and finite coordinates.
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPath);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("PlanarPath"));
        }
        Ok(PlanarPath { points })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Wrap any angle into (-pi, pi].
#[inline]
pub(crate) fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Shortest signed rotation from `theta_from` to `theta_to`, in (-pi, pi].
/// An exact half-turn resolves to +pi. Inputs may be any finite angles.
pub fn signed_angle_diff(theta_from: f64, theta_to: f64) -> Result<f64> {
    if !theta_from.is_finite() || !theta_to.is_finite() {
        return Err(Error::NonFinite("signed_angle_diff"));
    }
    Ok(wrap_angle(theta_to - theta_from))
}

/// Angle of `p_other` as seen from `p_self`, full-quadrant. Coincident points
/// have no bearing and are rejected.
pub fn bearing(p_self: Vec2, p_other: Vec2) -> Result<f64> {
    if !p_self.is_finite() || !p_other.is_finite() {
        return Err(Error::NonFinite("bearing"));
    }
    let d = p_other - p_self;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(Error::DegenerateBearing);
    }
    Ok(d.y.atan2(d.x))
}

/// Core accumulation over equal-length position slices. Indices where the two
/// positions coincide inherit the previous valid bearing (zero increment);
/// leading coincidences contribute nothing.
pub(crate) fn winding_core(path_i: &[Vec2], path_j: &[Vec2]) -> f64 {
    debug_assert_eq!(path_i.len(), path_j.len());
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for (pi, pj) in path_i.iter().zip(path_j.iter()) {
        let d = *pj - *pi;
        if d.x == 0.0 && d.y == 0.0 {
            continue; // inherit previous bearing: increment is zero
        }
        let cur = d.y.atan2(d.x);
        if let Some(p) = prev {
            total += wrap_angle(cur - p);
        }
        prev = Some(cur);
    }
    total / TAU
}

/// Winding number of two trajectories sampled at the same instants, in turns.
/// Paths must have equal length; fewer than two samples give zero.
pub fn winding_number(path_i: &PlanarPath, path_j: &PlanarPath) -> Result<f64> {
    if path_i.len() != path_j.len() {
        return Err(Error::PathLengthMismatch {
            left: path_i.len(),
            right: path_j.len(),
        });
    }
    if path_i.len() < 2 {
        return Ok(0.0);
    }
    Ok(winding_core(path_i.points(), path_j.points()))
}

/// Winding number of a predicted rollout pair. Identical to
/// [`winding_number`]; a zero-length horizon (single state) gives zero.
pub fn predicted_winding_number(own: &PlanarPath, other: &PlanarPath) -> Result<f64> {
    winding_number(own, other)
}

/// Cumulative winding over time: entry k is the winding of the first k+1
/// samples, so the profile starts at 0 and ends at the full winding number.
pub fn winding_profile(path_i: &PlanarPath, path_j: &PlanarPath) -> Result<Vec<f64>> {
    if path_i.len() != path_j.len() {
        return Err(Error::PathLengthMismatch {
            left: path_i.len(),
            right: path_j.len(),
        });
    }
    let mut profile = Vec::with_capacity(path_i.len());
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for (pi, pj) in path_i.points().iter().zip(path_j.points().iter()) {
        let d = *pj - *pi;
        if d.x != 0.0 || d.y != 0.0 {
            let cur = d.y.atan2(d.x);
            if let Some(p) = prev {
                total += wrap_angle(cur - p);
            }
            prev = Some(cur);
        }
        profile.push(total / TAU);
    }
    Ok(profile)
}
