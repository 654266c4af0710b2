//! Peukert-style battery discharge model and air-time estimation.
//!
//! The pack is `cell_count` identical cells in series. Per slot the model
//! tracks terminal voltage `V`, remaining discharge time `t` (hours),
//! remaining capacity `c` (Ah) and the drawn current `i` (A):
//!
//! ```text
//! i_m     = P_m / (cell_count · V_m)
//! V_{m+1} = V_m - s(i_m) · i_m · δt_h          s(i) = f1 · i^f2   (V per Ah)
//! t_m     = t_{m-1} · ((c_{m-1} - i_{m-1} δt_h) / (i_m t_{m-1}))^p
//! c_m     = t_m · i_m
//! ```
//!
//! The recursion is seeded with the rated point `(t_0, c_0) = (t_o, c_o)` and
//! `i_0 = 0`, which makes the first drawing slot collapse to the Peukert law
//! `t_1 = t_o (c_o / (i_1 t_o))^p`. After every update the capacity equals
//! `t · i`; the rated capacity enters the recursion only through that seed.
//! Zero-power slots coast: nothing changes and the seed survives them.
//!
//! The battery is dead once the projected discharge time falls to the
//! configured floor (the slot is then *not* flown) or once the post-slot
//! voltage drops below the cutoff (the slot *was* flown). Air-time counts
//! flown slots.

use crate::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatteryError {
    #[error("current draw requires positive voltage, got {0}")]
    NonPositiveVoltage(f64),
    #[error("initial discharge current must be positive, got {0}")]
    NonPositiveCurrent(f64),
    #[error("slot power must be nonnegative and finite, got {0}")]
    InvalidPower(f64),
    #[error("slope fit needs at least two distinct positive currents")]
    DegenerateSlopeFit,
    #[error("slope fit points must have positive current and slope, got ({0}, {1})")]
    InvalidSlopePoint(f64, f64),
    #[error("could not parse slope table line {line}: {text:?}")]
    MalformedSlopeLine { line: usize, text: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig<R> {
    /// Rated capacity `c_o`, Ah.
    pub capacity_ah: R,
    /// Rated discharge time `t_o`, hours.
    pub rated_time_h: R,
    /// Nominal (full) cell voltage `V_o`.
    pub cell_voltage_v: R,
    /// Per-cell cutoff voltage.
    pub cutoff_voltage_v: R,
    /// Series cell count.
    pub cell_count: R,
    /// Peukert exponent `p`.
    pub peukert_exponent: R,
    /// Discharge-slope coefficient `f1` (V per Ah at 1 A).
    pub slope_f1: R,
    /// Discharge-slope exponent `f2`.
    pub slope_f2: R,
    /// Remaining-time floor in seconds; the battery is declared dead once the
    /// projected discharge time falls to this value.
    pub min_time_s: R,
}

impl<R: Real> Default for BatteryConfig<R> {
    fn default() -> Self {
        Self {
            capacity_ah: R::of(4.5),
            rated_time_h: R::of(3.0),
            cell_voltage_v: R::of(3.7),
            cutoff_voltage_v: R::of(2.5),
            cell_count: R::of(6.0),
            peukert_exponent: R::of(1.05),
            slope_f1: R::of(0.2941),
            slope_f2: R::of(0.06888),
            min_time_s: R::zero(),
        }
    }
}

impl<R: Real> BatteryConfig<R> {
    /// Energy of a full pack at nominal voltage, joules. Used for
    /// observation normalisation, not by the discharge dynamics.
    pub fn nominal_energy_j(&self) -> R {
        self.cell_count * self.cell_voltage_v * self.capacity_ah * R::of(3600.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryState<R> {
    /// Per-cell terminal voltage, V.
    pub voltage_v: R,
    /// Remaining discharge time at the last drawn current, hours.
    pub remaining_time_h: R,
    /// Remaining capacity, Ah.
    pub capacity_ah: R,
    /// Current drawn during the last flown slot, A (0 before the first draw).
    pub last_current_a: R,
}

impl<R: Real> BatteryState<R> {
    /// Fully charged pack that has not yet drawn current.
    pub fn fresh(cfg: &BatteryConfig<R>) -> Self {
        Self {
            voltage_v: cfg.cell_voltage_v,
            remaining_time_h: cfg.rated_time_h,
            capacity_ah: cfg.capacity_ah,
            last_current_a: R::zero(),
        }
    }

    pub fn remaining_time_s(&self) -> R {
        self.remaining_time_h * R::of(3600.0)
    }
}

/// Why a slot could not be (or only barely was) flown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatteryStatus {
    Alive,
    /// Projected discharge time hit the floor; the slot was not flown and the
    /// state is unchanged.
    TimeExhausted,
    /// The slot was flown but the post-slot voltage fell below the cutoff.
    VoltageCutoff,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryStep<R> {
    pub state: BatteryState<R>,
    pub status: BatteryStatus,
}

impl<R> BatteryStep<R> {
    pub fn is_alive(&self) -> bool {
        matches!(self.status, BatteryStatus::Alive)
    }
}

/// Voltage-per-amp-hour discharge slope `s(i) = f1 · i^f2`.
pub fn discharge_slope<R: Real>(current_a: R, cfg: &BatteryConfig<R>) -> R {
    cfg.slope_f1 * current_a.powf(cfg.slope_f2)
}

/// Pack current drawn at `power_w` given per-cell voltage `voltage_v`.
pub fn current_draw<R: Real>(
    power_w: R,
    voltage_v: R,
    cfg: &BatteryConfig<R>,
) -> Result<R, BatteryError> {
    if voltage_v <= R::zero() {
        return Err(BatteryError::NonPositiveVoltage(voltage_v.to64()));
    }
    Ok(power_w / (cfg.cell_count * voltage_v))
}

/// Peukert discharge time for the first drawn current `i1`.
pub fn init_discharge_time<R: Real>(i1: R, cfg: &BatteryConfig<R>) -> Result<R, BatteryError> {
    if i1 <= R::zero() {
        return Err(BatteryError::NonPositiveCurrent(i1.to64()));
    }
    Ok(cfg.rated_time_h
        * (cfg.capacity_ah / (i1 * cfg.rated_time_h)).powf(cfg.peukert_exponent))
}

/// Advance the battery through one slot drawing `power_w` for `delta_t_s`
/// seconds. Zero power coasts. See the module docs for the dead conditions.
pub fn step<R: Real>(
    state: &BatteryState<R>,
    power_w: R,
    delta_t_s: R,
    cfg: &BatteryConfig<R>,
) -> Result<BatteryStep<R>, BatteryError> {
    if !(power_w >= R::zero()) || !power_w.is_finite() {
        return Err(BatteryError::InvalidPower(power_w.to64()));
    }
    let dt_h = delta_t_s / R::of(3600.0);
    let current = current_draw(power_w, state.voltage_v, cfg)?;
    if current == R::zero() {
        return Ok(BatteryStep { state: *state, status: BatteryStatus::Alive });
    }

    let dead = BatteryStep { state: *state, status: BatteryStatus::TimeExhausted };
    let available_ah = state.capacity_ah - state.last_current_a * dt_h;
    if available_ah <= R::zero() {
        return Ok(dead);
    }
    let time_h = state.remaining_time_h
        * (available_ah / (current * state.remaining_time_h)).powf(cfg.peukert_exponent);
    if time_h <= cfg.min_time_s / R::of(3600.0) {
        return Ok(dead);
    }

    let voltage = state.voltage_v - discharge_slope(current, cfg) * current * dt_h;
    let next = BatteryState {
        voltage_v: voltage,
        remaining_time_h: time_h,
        capacity_ah: time_h * current,
        last_current_a: current,
    };
    let status = if voltage < cfg.cutoff_voltage_v {
        BatteryStatus::VoltageCutoff
    } else {
        BatteryStatus::Alive
    };
    Ok(BatteryStep { state: next, status })
}

/// Upper bound on slots simulated by the air-time loops, guarding against
/// power profiles that never drain the pack (for example all-zero power).
pub const AIRTIME_SLOT_CAP: usize = 10_000_000;

/// Air time in seconds of a battery starting from `state` under the per-slot
/// power profile `power_w(slot)`. Counts flown slots.
pub fn remaining_airtime<R: Real>(
    state: &BatteryState<R>,
    mut power_w: impl FnMut(usize) -> R,
    delta_t_s: R,
    cfg: &BatteryConfig<R>,
) -> Result<R, BatteryError> {
    let mut current = *state;
    let mut flown = 0usize;
    while flown < AIRTIME_SLOT_CAP {
        let outcome = step(&current, power_w(flown), delta_t_s, cfg)?;
        match outcome.status {
            BatteryStatus::TimeExhausted => break,
            BatteryStatus::VoltageCutoff => {
                flown += 1;
                break;
            }
            BatteryStatus::Alive => {
                current = outcome.state;
                flown += 1;
            }
        }
    }
    Ok(R::of(flown as f64) * delta_t_s)
}

/// Air time of a fresh pack under `power_w`, seconds.
pub fn estimate_airtime<R: Real>(
    power_w: impl FnMut(usize) -> R,
    delta_t_s: R,
    cfg: &BatteryConfig<R>,
) -> Result<R, BatteryError> {
    remaining_airtime(&BatteryState::fresh(cfg), power_w, delta_t_s, cfg)
}

/// Fit `(f1, f2)` of the discharge slope `s(i) = f1 · i^f2` to datasheet
/// points `(current A, slope V/Ah)` by least squares in log–log space.
pub fn fit_slope_coefficients<R: Real>(points: &[(R, R)]) -> Result<(R, R), BatteryError> {
    for &(i, s) in points {
        if i <= R::zero() || s <= R::zero() {
            return Err(BatteryError::InvalidSlopePoint(i.to64(), s.to64()));
        }
    }
    if points.len() < 2 {
        return Err(BatteryError::DegenerateSlopeFit);
    }
    let n = R::of(points.len() as f64);
    let mean_x = points.iter().map(|&(i, _)| i.ln()).sum::<R>() / n;
    let mean_y = points.iter().map(|&(_, s)| s.ln()).sum::<R>() / n;
    let mut sxx = R::zero();
    let mut sxy = R::zero();
    for &(i, s) in points {
        let dx = i.ln() - mean_x;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (s.ln() - mean_y);
    }
    if sxx == R::zero() {
        return Err(BatteryError::DegenerateSlopeFit);
    }
    let f2 = sxy / sxx;
    let f1 = (mean_y - f2 * mean_x).exp();
    Ok((f1, f2))
}

/// Parse a two-column whitespace-separated slope table (current A, slope
/// V/Ah). Blank lines and lines starting with `#` are skipped.
pub fn parse_slope_table<R: Real>(text: &str) -> Result<Vec<(R, R)>, BatteryError> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parsed = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((i, s)) => points.push((R::of(i), R::of(s))),
            None => {
                return Err(BatteryError::MalformedSlopeLine { line: idx + 1, text: raw.into() })
            }
        }
    }
    Ok(points)
}
