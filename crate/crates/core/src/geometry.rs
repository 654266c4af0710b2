//! Positions, velocity commands, and the action-cube mapping.
//!
//! Velocities are spherical: `elevation` is measured from the +z axis, so
//! 0 is a straight climb, `π/2` is level flight and `π` is a straight
//! descent. `azimuth` is the usual angle in the x–y plane.

use crate::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("action component {index} = {value} outside [-1, 1]")]
    ActionOutOfRange { index: usize, value: f64 },
    #[error("motion config violates stationarity bound: v_max*delta_t = {step} > delta = {delta}")]
    StationarityViolated { step: f64, delta: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Position3<R> {
    pub fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Self) -> R {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance between the x–y projections of the two points.
    pub fn horizontal_distance(&self, other: &Self) -> R {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityVector<R> {
    /// Speed in m/s, always nonnegative.
    pub speed: R,
    /// Angle from the +z axis in radians, in `[0, π]`.
    pub elevation: R,
    /// Angle in the x–y plane in radians, in `(-π, π]`.
    pub azimuth: R,
}

impl<R: Real> VelocityVector<R> {
    pub fn new(speed: R, elevation: R, azimuth: R) -> Self {
        Self { speed, elevation, azimuth }
    }

    /// A zero-speed command (hover). Angles are irrelevant and set to level.
    pub fn hover() -> Self {
        Self { speed: R::zero(), elevation: R::of(std::f64::consts::FRAC_PI_2), azimuth: R::zero() }
    }

    /// Cartesian displacement accumulated over `delta_t` seconds.
    pub fn displacement(&self, delta_t: R) -> [R; 3] {
        let h = self.speed * self.elevation.sin();
        [
            delta_t * h * self.azimuth.cos(),
            delta_t * h * self.azimuth.sin(),
            delta_t * self.speed * self.elevation.cos(),
        ]
    }
}

/// Kinematic limits and slotting for the flight dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig<R> {
    /// Hard speed limit in m/s.
    pub v_max: R,
    /// Slot duration in seconds.
    pub delta_t: R,
    /// Altitude floor in metres.
    pub z_min: R,
    /// Altitude ceiling in metres.
    pub z_max: R,
    /// Optional channel-stationarity distance: when set, configurations with
    /// `v_max * delta_t > delta` are rejected by [`MotionConfig::validate`].
    pub stationarity_delta: Option<R>,
}

impl<R: Real> MotionConfig<R> {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Some(delta) = self.stationarity_delta {
            let step = self.v_max * self.delta_t;
            if step > delta {
                return Err(GeometryError::StationarityViolated {
                    step: step.to64(),
                    delta: delta.to64(),
                });
            }
        }
        Ok(())
    }
}

/// Map a control cube point `(cx, cy, cz) ∈ [-1, 1]^3` to a velocity command.
///
/// Speed is `|c| * v_max / 3` (so the largest reachable speed is
/// `v_max / √3`), elevation comes from the signed two-argument arctangent of
/// the horizontal magnitude against `cz` (descent commands with `cz < 0` land
/// in `(π/2, π]`), and azimuth is `atan2(cy, cx)`.
pub fn action_to_velocity<R: Real>(
    action: &[R; 3],
    v_max: R,
) -> Result<VelocityVector<R>, GeometryError> {
    let one = R::one();
    for (index, &value) in action.iter().enumerate() {
        if !(value >= -one && value <= one) {
            return Err(GeometryError::ActionOutOfRange { index, value: value.to64() });
        }
    }
    let [cx, cy, cz] = *action;
    let horiz = (cx * cx + cy * cy).sqrt();
    let speed = (cx * cx + cy * cy + cz * cz).sqrt() * v_max / R::of(3.0);
    let elevation = horiz.atan2(cz);
    let azimuth = cy.atan2(cx);
    Ok(VelocityVector { speed, elevation, azimuth })
}

/// Advance `position` by one slot of `velocity`, clamping altitude to the
/// configured band. Clamping consumes the commanded vertical displacement:
/// callers still charge the full commanded velocity to the power model.
pub fn apply_motion<R: Real>(
    position: &Position3<R>,
    velocity: &VelocityVector<R>,
    cfg: &MotionConfig<R>,
) -> Position3<R> {
    let [dx, dy, dz] = velocity.displacement(cfg.delta_t);
    Position3 {
        x: position.x + dx,
        y: position.y + dy,
        z: (position.z + dz).max(cfg.z_min).min(cfg.z_max),
    }
}

/// Shortest time to reach `dest` flying the straight line at `v_max`.
pub fn min_return_time<R: Real>(position: &Position3<R>, dest: &Position3<R>, v_max: R) -> R {
    position.distance(dest) / v_max
}

/// One-slot velocity command along the straight line `from → to` at
/// `cruise_speed`, slowed down on the final slot so the slot does not
/// overshoot. `None` once `from == to`.
pub fn velocity_towards<R: Real>(
    from: &Position3<R>,
    to: &Position3<R>,
    cruise_speed: R,
    delta_t: R,
) -> Option<VelocityVector<R>> {
    let dist = from.distance(to);
    if dist == R::zero() {
        return None;
    }
    let speed = cruise_speed.min(dist / delta_t);
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let dz = to.z - from.z;
    let dh = (dx * dx + dy * dy).sqrt();
    Some(VelocityVector { speed, elevation: dh.atan2(dz), azimuth: dy.atan2(dx) })
}
