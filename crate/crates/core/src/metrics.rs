//! Per-slot TDMA scheduling, Jain fairness, and the fair energy-efficiency
//! (FEE) objective.
//!
//! Within a slot of length `δt` every ground node gets air time proportional
//! to its expected spectral efficiency, `T_n = δt · R̄_n / Σ R̄`, and receives
//! `D_n = B · T_n · R̄_n` bits. Over an episode of `M` slots the objective is
//!
//! ```text
//! FEE = FI(D̄_1 … D̄_N) · (Σ bits) / (Σ δt · P_m)        D̄_n = Σ_m D_{m,n} / M
//! ```
//!
//! with `FI` the Jain index `(Σ x)² / (N Σ x²)`. FEE carries units of
//! bits per joule.

use crate::battery::BatteryState;
use crate::geometry::{Position3, VelocityVector};
use crate::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("expected spectral efficiencies must be nonnegative, got {0}")]
    NegativeRate(f64),
    #[error("slot times and rates differ in length: {times} vs {rates}")]
    LengthMismatch { times: usize, rates: usize },
    #[error("episode record is empty")]
    EmptyEpisode,
    #[error("episode consumed no energy")]
    ZeroEnergy,
    #[error("episode record is internally inconsistent: {0}")]
    InconsistentRecord(String),
}

/// One flown slot: the commanded velocity, the propulsion power drawn, and
/// the TDMA outcome per ground node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord<R> {
    pub velocity: VelocityVector<R>,
    pub power_w: R,
    pub per_node_time_s: Vec<R>,
    pub per_node_bits: Vec<R>,
}

/// Full trace of one episode. `positions` and `battery` have one more entry
/// than `slots` (initial state plus one per flown slot).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord<R> {
    pub delta_t_s: R,
    pub positions: Vec<Position3<R>>,
    pub battery: Vec<BatteryState<R>>,
    pub slots: Vec<SlotRecord<R>>,
}

impl<R: Real> EpisodeRecord<R> {
    pub fn new(delta_t_s: R, start: Position3<R>, battery: BatteryState<R>) -> Self {
        Self { delta_t_s, positions: vec![start], battery: vec![battery], slots: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.slots.first().map_or(0, |s| s.per_node_bits.len())
    }

    pub fn airtime_s(&self) -> R {
        R::of(self.slots.len() as f64) * self.delta_t_s
    }

    pub fn total_energy_j(&self) -> R {
        self.slots.iter().map(|s| s.power_w * self.delta_t_s).sum()
    }

    pub fn total_bits_per_node(&self) -> Vec<R> {
        let n = self.node_count();
        let mut acc = vec![R::zero(); n];
        for slot in &self.slots {
            for (a, &b) in acc.iter_mut().zip(&slot.per_node_bits) {
                *a = *a + b;
            }
        }
        acc
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.slots.is_empty() {
            return Err(MetricsError::EmptyEpisode);
        }
        if self.positions.len() != self.slots.len() + 1 {
            return Err(MetricsError::InconsistentRecord(format!(
                "{} positions for {} slots",
                self.positions.len(),
                self.slots.len()
            )));
        }
        if self.battery.len() != self.slots.len() + 1 {
            return Err(MetricsError::InconsistentRecord(format!(
                "{} battery states for {} slots",
                self.battery.len(),
                self.slots.len()
            )));
        }
        let n = self.node_count();
        for slot in &self.slots {
            if slot.per_node_bits.len() != n || slot.per_node_time_s.len() != n {
                return Err(MetricsError::InconsistentRecord("per-node lengths vary".into()));
            }
        }
        Ok(())
    }
}

/// Proportional-rate TDMA split of one slot. The returned times sum to
/// `delta_t_s` exactly (the last entry absorbs rounding); an all-zero rate
/// vector falls back to an equal split.
///
/// Exactness is by construction rather than by iterative repair: every share
/// except the last is rounded down onto the grid of representable values just
/// above `delta_t_s` (whose spacing is a power of two), so shares, partial
/// sums and the closing remainder are all exact multiples of that spacing and
/// no floating-point rounding occurs in the summation. Repairing only the
/// last entry after the fact cannot give the same guarantee: when the prefix
/// sum lands exactly half a spacing off the grid, every candidate total is a
/// round-to-nearest-even tie and the target value is unreachable.
pub fn tdma_allocation<R: Real>(rates: &[R], delta_t_s: R) -> Result<Vec<R>, MetricsError> {
    for &r in rates {
        if !(r >= R::zero()) {
            return Err(MetricsError::NegativeRate(r.to64()));
        }
    }
    if rates.is_empty() {
        return Ok(Vec::new());
    }
    let n = rates.len();
    let total: R = rates.iter().copied().sum();
    let grid = delta_t_s.next_toward(R::infinity()) - delta_t_s;
    // `weight <= 1`, so the raw share never exceeds delta_t and the grid
    // quotient stays below 2^53; division and multiplication by the
    // power-of-two spacing are exact, as is the floor.
    let share = |weight: R| (delta_t_s * weight / grid).floor() * grid;
    let mut times: Vec<R> = if total > R::zero() {
        rates.iter().map(|&r| share(r / total)).collect()
    } else {
        vec![share(R::one() / R::of(n as f64)); n]
    };
    // The rounded-up quotients can overshoot the slot by a few grid steps
    // when the final node's rate is a vanishing fraction of the total; shave
    // the excess off the largest share (exact: all values share the grid).
    let mut head: R = times.iter().take(n - 1).copied().sum();
    while n > 1 && head > delta_t_s {
        let excess = head - delta_t_s;
        let j = (0..n - 1)
            .max_by(|&a, &b| times[a].partial_cmp(&times[b]).expect("finite share"))
            .expect("nonempty prefix");
        times[j] = times[j] - excess;
        head = times.iter().take(n - 1).copied().sum();
    }
    times[n - 1] = delta_t_s - head;
    Ok(times)
}

/// Bits delivered to each node: `B · T_n · R̄_n`.
pub fn slot_bits<R: Real>(
    bandwidth_hz: R,
    times_s: &[R],
    rates: &[R],
) -> Result<Vec<R>, MetricsError> {
    if times_s.len() != rates.len() {
        return Err(MetricsError::LengthMismatch { times: times_s.len(), rates: rates.len() });
    }
    Ok(times_s.iter().zip(rates).map(|(&t, &r)| bandwidth_hz * t * r).collect())
}

/// Jain fairness index `(Σx)²/(N Σx²)` over nonnegative values; 0 for an
/// all-zero (or empty) input. Values are normalised by their maximum first,
/// which keeps the index exactly 1 for equal inputs and makes it invariant
/// under power-of-two rescaling.
pub fn fairness_index<R: Real>(values: &[R]) -> R {
    let max = values.iter().copied().fold(R::zero(), R::max);
    if !(max > R::zero()) {
        return R::zero();
    }
    let mut s1 = R::zero();
    let mut s2 = R::zero();
    for &v in values {
        let x = v / max;
        s1 = s1 + x;
        s2 = s2 + x * x;
    }
    (s1 * s1) / (R::of(values.len() as f64) * s2)
}

/// Scalar episode summary used by training curves and reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary<R> {
    /// Fair energy efficiency, bits per joule.
    pub fee: R,
    /// Jain fairness over per-node average bits.
    pub fi: R,
    /// Energy efficiency (total bits per joule, no fairness weight).
    pub ee: R,
    pub total_bits: R,
    pub total_energy_j: R,
    pub airtime_s: R,
}

/// Fair energy efficiency of a full episode, bits per joule.
pub fn fee<R: Real>(record: &EpisodeRecord<R>) -> Result<R, MetricsError> {
    summarize(record).map(|s| s.fee)
}

pub fn summarize<R: Real>(record: &EpisodeRecord<R>) -> Result<EpisodeSummary<R>, MetricsError> {
    record.validate()?;
    let energy = record.total_energy_j();
    if !(energy > R::zero()) {
        return Err(MetricsError::ZeroEnergy);
    }
    let per_node = record.total_bits_per_node();
    let slots = R::of(record.slots.len() as f64);
    let averages: Vec<R> = per_node.iter().map(|&b| b / slots).collect();
    let fi = fairness_index(&averages);
    let total_bits: R = per_node.iter().copied().sum();
    let ee = total_bits / energy;
    Ok(EpisodeSummary { fee: fi * ee, fi, ee, total_bits, total_energy_j: energy, airtime_s: record.airtime_s() })
}
