//! Air-to-ground channel: LoS probability, log-distance path loss, and the
//! LoS/NLoS-blended expected spectral efficiency seen by a ground node.
//!
//! The link model is the classic sigmoid line-of-sight probability
//!
//! ```text
//! P_los(β) = 1 / (1 + a · exp(-b (β - a)))      β in degrees
//! ```
//!
//! combined with free-space path loss plus an environment-dependent excess
//! term `η` (dB) per link state:
//!
//! ```text
//! L_x(d) = 20 log10(d) + 20 log10(f_c) + 20 log10(4π/c) + η_x
//! ```
//!
//! The expected spectral efficiency blends the two link states:
//! `R̄ = P_los · R_los + (1 - P_los) · R_nlos` with
//! `R_x = log2(1 + P_t / (σ² · 10^{L_x/10}))`.

use crate::geometry::Position3;
use crate::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("3D distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

/// Sigmoid/excess-loss parameters for one deployment environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentProfile<R> {
    /// Sigmoid offset `a` (also the β at which `P_los = 1/(1+a)`).
    pub a: R,
    /// Sigmoid steepness `b` per degree.
    pub b: R,
    /// Excess path loss under line of sight, dB.
    pub eta_los_db: R,
    /// Excess path loss without line of sight, dB.
    pub eta_nlos_db: R,
}

impl<R: Real> EnvironmentProfile<R> {
    pub fn suburban() -> Self {
        Self { a: R::of(4.88), b: R::of(0.43), eta_los_db: R::of(0.2), eta_nlos_db: R::of(24.0) }
    }

    pub fn urban() -> Self {
        Self { a: R::of(9.61), b: R::of(0.16), eta_los_db: R::of(1.2), eta_nlos_db: R::of(23.0) }
    }

    pub fn dense_urban() -> Self {
        Self { a: R::of(12.08), b: R::of(0.11), eta_los_db: R::of(1.8), eta_nlos_db: R::of(26.0) }
    }
}

/// Carrier, bandwidth, and transmit-power parameters of the downlink.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig<R> {
    /// Carrier frequency in Hz.
    pub carrier_hz: R,
    /// Bandwidth allocated to each ground node, Hz.
    pub bandwidth_hz: R,
    /// Transmit power in dBm.
    pub tx_power_dbm: R,
    /// Noise power spectral density in dBm/Hz.
    pub noise_dbm_per_hz: R,
}

impl<R: Real> RadioConfig<R> {
    /// Transmit power in watts.
    pub fn tx_power_w(&self) -> R {
        let ten = R::of(10.0);
        ten.powf((self.tx_power_dbm - R::of(30.0)) / ten)
    }

    /// Total noise power over the per-node bandwidth, watts.
    pub fn noise_power_w(&self) -> R {
        let ten = R::of(10.0);
        let dbm = self.noise_dbm_per_hz + ten * self.bandwidth_hz.log10();
        ten.powf((dbm - R::of(30.0)) / ten)
    }
}

impl<R: Real> Default for RadioConfig<R> {
    fn default() -> Self {
        Self {
            carrier_hz: R::of(5.8e9),
            bandwidth_hz: R::of(40e6),
            tx_power_dbm: R::of(23.0),
            noise_dbm_per_hz: R::of(-174.0),
        }
    }
}

const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Path loss in dB over a 3D distance `d3` metres with excess loss `eta_db`.
pub fn path_loss_db<R: Real>(
    d3: R,
    radio: &RadioConfig<R>,
    eta_db: R,
) -> Result<R, ChannelError> {
    if d3 <= R::zero() {
        return Err(ChannelError::NonPositiveDistance(d3.to64()));
    }
    let twenty = R::of(20.0);
    Ok(twenty * d3.log10()
        + twenty * radio.carrier_hz.log10()
        + twenty * R::of(4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10()
        + eta_db)
}

/// Line-of-sight probability at elevation angle `beta_deg` (degrees).
pub fn los_probability<R: Real>(beta_deg: R, profile: &EnvironmentProfile<R>) -> R {
    R::one() / (R::one() + profile.a * (-profile.b * (beta_deg - profile.a)).exp())
}

/// Elevation angle in degrees from a ground node to the PAP.
///
/// A node exactly underneath the PAP sees `β = 90°`.
pub fn elevation_deg<R: Real>(pap: &Position3<R>, node_xy: &Position3<R>) -> R {
    let d2 = pap.horizontal_distance(node_xy);
    if d2 == R::zero() {
        R::of(90.0)
    } else {
        (pap.z / d2).atan().to_degrees()
    }
}

/// Expected spectral efficiency (bit/s/Hz) of the PAP → node link.
///
/// `pap.z` must be positive; `node_xy.z` is ignored (nodes sit on the ground).
pub fn expected_spectral_efficiency<R: Real>(
    pap: &Position3<R>,
    node_xy: &Position3<R>,
    radio: &RadioConfig<R>,
    profile: &EnvironmentProfile<R>,
) -> Result<R, ChannelError> {
    let d2 = pap.horizontal_distance(node_xy);
    let d3 = (d2 * d2 + pap.z * pap.z).sqrt();
    let p_los = los_probability(elevation_deg(pap, node_xy), profile);
    let r_los = snr_capacity(d3, radio, profile.eta_los_db)?;
    let r_nlos = snr_capacity(d3, radio, profile.eta_nlos_db)?;
    Ok(p_los * r_los + (R::one() - p_los) * r_nlos)
}

fn snr_capacity<R: Real>(d3: R, radio: &RadioConfig<R>, eta_db: R) -> Result<R, ChannelError> {
    let loss_db = path_loss_db(d3, radio, eta_db)?;
    let ten = R::of(10.0);
    let snr = radio.tx_power_w() / (radio.noise_power_w() * ten.powf(loss_db / ten));
    Ok((R::one() + snr).log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio() -> RadioConfig<f64> {
        RadioConfig::default()
    }

    #[test]
    fn free_space_loss_at_100m_matches_reference() {
        let l = path_loss_db(100.0, &radio(), 0.2).unwrap();
        assert!((l - 87.91033205730743).abs() < 1e-9, "loss {l}");
    }

    #[test]
    fn nlos_excess_dominates_los_excess() {
        let p = EnvironmentProfile::<f64>::suburban();
        let l_los = path_loss_db(250.0, &radio(), p.eta_los_db).unwrap();
        let l_nlos = path_loss_db(250.0, &radio(), p.eta_nlos_db).unwrap();
        assert!((l_nlos - l_los - 23.8).abs() < 1e-12);
    }

    #[test]
    fn distance_must_be_positive() {
        assert!(path_loss_db(0.0, &radio(), 0.0).is_err());
        assert!(path_loss_db(-5.0, &radio(), 0.0).is_err());
    }

    #[test]
    fn los_probability_at_sigmoid_offset() {
        let p = EnvironmentProfile::<f64>::suburban();
        let v = los_probability(4.88, &p);
        assert!((v - 1.0 / 5.88).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn los_probability_monotone_and_saturating() {
        let p = EnvironmentProfile::<f64>::dense_urban();
        let mut prev = los_probability(0.0, &p);
        for k in 1..=90 {
            let cur = los_probability(k as f64, &p);
            assert!(cur >= prev, "not monotone at {k}");
            prev = cur;
        }
        assert!(los_probability(90.0, &EnvironmentProfile::suburban()) > 1.0 - 1e-9);
    }

    #[test]
    fn overhead_snr_matches_reference() {
        let r = radio();
        let loss = path_loss_db(100.0, &r, 0.2).unwrap();
        let snr_db = 10.0 * (r.tx_power_w() / (r.noise_power_w() * 10f64.powf(loss / 10.0))).log10();
        assert!((snr_db - 33.069068029412946).abs() < 1e-9, "snr {snr_db}");
    }

    #[test]
    fn overhead_spectral_efficiency_suburban() {
        let pap = Position3::new(0.0, 0.0, 100.0);
        let node = Position3::new(0.0, 0.0, 0.0);
        let se =
            expected_spectral_efficiency(&pap, &node, &radio(), &EnvironmentProfile::suburban())
                .unwrap();
        assert!((se - 10.98601809250204).abs() < 1e-9, "se {se}");
    }

    #[test]
    fn spectral_efficiency_between_link_state_extremes() {
        let r = radio();
        let p = EnvironmentProfile::<f64>::urban();
        for (x, z) in [(30.0, 20.0), (200.0, 60.0), (900.0, 100.0), (5.0, 95.0)] {
            let pap = Position3::new(0.0, 0.0, z);
            let node = Position3::new(x, 0.0, 0.0);
            let d3 = (x as f64).hypot(z);
            let lo = snr_capacity(d3, &r, p.eta_nlos_db).unwrap();
            let hi = snr_capacity(d3, &r, p.eta_los_db).unwrap();
            let se = expected_spectral_efficiency(&pap, &node, &r, &p).unwrap();
            assert!(se >= lo && se <= hi, "se {se} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn node_directly_underneath_sees_zenith_angle() {
        let pap = Position3::new(12.0, -7.0, 80.0);
        let node = Position3::new(12.0, -7.0, 0.0);
        assert_eq!(elevation_deg(&pap, &node), 90.0);
    }
}
