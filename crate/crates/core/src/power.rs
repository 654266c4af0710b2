//! Rotary-wing propulsion power in forward, hover, and axial flight.
//!
//! Three closed-form regimes share the blade-profile term `N_r · P_b` with
//! `P_b = (Δ_p/8) ρ s A_r v_tip³`:
//!
//! * forward flight — blade profile with the `(1 + 3v²/v_tip²)` correction,
//!   fuselage drag `½ C_D A_f ρ v³`, and momentum-theory induced power tilted
//!   by the climb angle through a `W cos ε` term;
//! * hover — blade profile plus `W^{3/2} / √(4 N_r ρ A_r)`;
//! * axial (straight up or down) — `(W/2)(v + √(v² + 2W/(N_r ρ A_r)))` plus
//!   blade profile, evaluated with the speed magnitude for descent as a
//!   conservative bound.
//!
//! The regimes are intentionally kept exactly as written: the forward-flight
//! expression does **not** converge to the hover expression as `v → 0`
//! (the induced terms differ by a factor √2 in the limit), and no continuity
//! correction is applied. Dispatch between regimes is therefore by explicit
//! tolerance on speed and elevation, see [`total_power`].
//!
//! Air density falls off with altitude as `ρ(z) = ρ0 (1 - 2.2558e-5 z)^4.2577`
//! with `ρ0 = 1.225 kg/m³` at sea level.

use crate::geometry::VelocityVector;
use crate::Real;
use serde::{Deserialize, Serialize};

/// Airframe constants of the PAP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavParams<R> {
    /// Total weight in newtons.
    pub weight_n: R,
    /// Number of rotors.
    pub rotor_count: R,
    /// Blade tip speed, m/s.
    pub tip_speed: R,
    /// Fuselage frontal area, m².
    pub fuselage_area: R,
    /// Fuselage drag coefficient.
    pub drag_coefficient: R,
    /// Rotor disc area, m².
    pub rotor_area: R,
    /// Blade profile drag coefficient.
    pub profile_drag: R,
    /// Rotor solidity.
    pub solidity: R,
}

impl<R: Real> Default for UavParams<R> {
    fn default() -> Self {
        Self {
            weight_n: R::of(24.5),
            rotor_count: R::of(4.0),
            tip_speed: R::of(102.0),
            fuselage_area: R::of(0.038),
            drag_coefficient: R::of(0.9),
            rotor_area: R::of(0.06),
            profile_drag: R::of(0.002),
            solidity: R::of(0.05),
        }
    }
}

/// Sea-level air density, kg/m³.
pub const RHO_SEA_LEVEL: f64 = 1.225;

/// Speeds below this dispatch to the hover regime; elevations within this of
/// 0 or π dispatch to the axial regime.
pub const DISPATCH_TOL: f64 = 1e-9;

/// Air density at altitude `z` metres.
pub fn air_density<R: Real>(z: R) -> R {
    R::of(RHO_SEA_LEVEL) * (R::one() - R::of(2.2558e-5) * z).powf(R::of(4.2577))
}

/// Blade-profile power of all rotors at altitude `z`.
pub fn blade_profile_power<R: Real>(z: R, p: &UavParams<R>) -> R {
    let rho = air_density(z);
    p.rotor_count * (p.profile_drag / R::of(8.0)) * rho * p.solidity * p.rotor_area
        * p.tip_speed.powi(3)
}

/// Forward-flight power at speed `v` (> 0) and elevation `elevation`
/// (angle from +z; π/2 is level flight), at altitude `z`.
pub fn forward_power<R: Real>(v: R, elevation: R, z: R, p: &UavParams<R>) -> R {
    let rho = air_density(z);
    let half = R::of(0.5);
    let blade = blade_profile_power(z, p)
        * (R::one() + R::of(3.0) * v * v / (p.tip_speed * p.tip_speed));
    let fuselage = half * p.drag_coefficient * p.fuselage_area * rho * v.powi(3);
    let w = p.weight_n;
    let denom = R::of(4.0) * p.rotor_count * p.rotor_count * rho * rho * p.rotor_area * p.rotor_area;
    let inner = (w * w / denom + v.powi(4) / R::of(4.0)).sqrt() - v * v / R::of(2.0);
    let induced = w * (inner.max(R::zero()).sqrt() + elevation.cos());
    blade + fuselage + induced
}

/// Hover power at altitude `z`.
pub fn hover_power<R: Real>(z: R, p: &UavParams<R>) -> R {
    let rho = air_density(z);
    blade_profile_power(z, p)
        + p.weight_n.powf(R::of(1.5)) / (R::of(4.0) * p.rotor_count * rho * p.rotor_area).sqrt()
}

/// Axial (straight up/down) flight power at speed magnitude `v`, altitude `z`.
pub fn vertical_power<R: Real>(v: R, z: R, p: &UavParams<R>) -> R {
    let rho = air_density(z);
    let w = p.weight_n;
    let two = R::of(2.0);
    (w / two) * (v + (v * v + two * w / (p.rotor_count * rho * p.rotor_area)).sqrt())
        + blade_profile_power(z, p)
}

/// Propulsion power for an arbitrary velocity command at altitude `z`.
///
/// Dispatch: speeds within [`DISPATCH_TOL`] of zero hover; elevations within
/// [`DISPATCH_TOL`] of 0 or π fly axially (descent uses the speed magnitude
/// as a conservative bound); everything else is forward flight.
pub fn total_power<R: Real>(v: &VelocityVector<R>, z: R, p: &UavParams<R>) -> R {
    let tol = R::of(DISPATCH_TOL);
    if v.speed.abs() < tol {
        hover_power(z, p)
    } else if v.elevation.abs() < tol || (v.elevation - R::of(std::f64::consts::PI)).abs() < tol {
        vertical_power(v.speed.abs(), z, p)
    } else {
        forward_power(v.speed, v.elevation, z, p)
    }
}
