//! The episodic decision process: a PAP launches at `start`, serves ground
//! nodes every slot over TDMA, and must land on `destination` before its
//! battery gives out.
//!
//! # Slot mechanics
//!
//! Each [`Env::step`] maps the control-cube action to a velocity, then runs
//! the safety rule: the slot is flown only if, *after* flying it, the
//! remaining battery air time under a constant return profile (forward flight
//! at `v_max` towards the destination) still covers the straight-line return
//! time from the tentative position. Otherwise the action is discarded — the
//! battery is left untouched by the discarded slot — and the PAP flies the
//! forced return from its current position at `v_max`, which ends the
//! episode. Committed slots serve the ground nodes from the slot-start
//! position (the channel is treated as stationary within a slot); forced
//! return slots serve nobody unless [`Scenario::serve_during_return`] is set.
//!
//! The return-profile power is evaluated at both the tentative altitude and
//! the destination altitude and the larger value is used, which keeps the
//! constant-profile estimate conservative along the descending return path.
//!
//! # Reward
//!
//! Non-terminal slots earn the running prefix FEE whenever it improves (the
//! new value, not the increment), otherwise zero. The terminal step earns
//! `kappa_f` times the final episode FEE. Both are scaled by
//! [`Scenario::reward_fee_scale`] to keep network targets well conditioned;
//! the default expresses FEE rewards in megabits per joule.

use crate::battery::{self, BatteryConfig, BatteryState, BatteryStatus};
use crate::channel::{self, ChannelError, EnvironmentProfile, RadioConfig};
use crate::geometry::{
    action_to_velocity, apply_motion, velocity_towards, GeometryError, MotionConfig, Position3,
    VelocityVector,
};
use crate::metrics::{self, EpisodeRecord, MetricsError, SlotRecord};
use crate::power::{forward_power, total_power, UavParams};
use crate::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode is over; reset the environment before stepping")]
    EpisodeOver,
    #[error(transparent)]
    InvalidAction(#[from] GeometryError),
    #[error(transparent)]
    Battery(#[from] battery::BatteryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Everything that defines one deployment: geometry, ground nodes, radio,
/// airframe, battery, and reward shaping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario<R> {
    /// Ground-node positions; `z` is forced to 0 by [`Scenario::validate`].
    pub gn_positions: Vec<Position3<R>>,
    /// Side of the square service area, metres. Used for normalisation only.
    pub area_side_m: R,
    pub start: Position3<R>,
    pub destination: Position3<R>,
    pub motion: MotionConfig<R>,
    pub radio: RadioConfig<R>,
    pub profile: EnvironmentProfile<R>,
    pub uav: UavParams<R>,
    pub battery: BatteryConfig<R>,
    /// Terminal-reward weight on the final episode FEE.
    pub kappa_f: R,
    /// Multiplier applied to FEE values when they enter rewards.
    pub reward_fee_scale: R,
    /// Serve ground nodes during the forced return (off by default).
    pub serve_during_return: bool,
}

impl<R: Real> Scenario<R> {
    pub fn node_count(&self) -> usize {
        self.gn_positions.len()
    }

    /// Observation length: relative position (3), voltage (1), energy (1),
    /// per-node horizontal offsets (2N), per-node delivered bits (N).
    pub fn observation_dim(&self) -> usize {
        5 + 3 * self.node_count()
    }

    pub fn validate(&mut self) -> Result<(), EnvError> {
        if self.gn_positions.is_empty() {
            return Err(EnvError::InvalidScenario("no ground nodes".into()));
        }
        for gn in &mut self.gn_positions {
            gn.z = R::zero();
        }
        if !(self.area_side_m > R::zero()) {
            return Err(EnvError::InvalidScenario("area side must be positive".into()));
        }
        for gn in &self.gn_positions {
            let inside = gn.x >= R::zero()
                && gn.x <= self.area_side_m
                && gn.y >= R::zero()
                && gn.y <= self.area_side_m;
            if !inside {
                return Err(EnvError::InvalidScenario(format!(
                    "ground node ({}, {}) outside the service square",
                    gn.x, gn.y
                )));
            }
        }
        if !(self.motion.v_max > R::zero()) || !(self.motion.delta_t > R::zero()) {
            return Err(EnvError::InvalidScenario("v_max and delta_t must be positive".into()));
        }
        self.motion.validate().map_err(|e| EnvError::InvalidScenario(e.to_string()))?;
        for (name, p) in [("start", &self.start), ("destination", &self.destination)] {
            if p.z < self.motion.z_min || p.z > self.motion.z_max {
                return Err(EnvError::InvalidScenario(format!(
                    "{name} altitude {} outside [{}, {}]",
                    p.z, self.motion.z_min, self.motion.z_max
                )));
            }
        }
        if !(self.reward_fee_scale > R::zero()) {
            return Err(EnvError::InvalidScenario("reward_fee_scale must be positive".into()));
        }
        if !(self.kappa_f >= R::zero()) {
            return Err(EnvError::InvalidScenario("kappa_f must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Raw (unnormalised) snapshot of the decision state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState<R> {
    /// PAP position relative to the destination.
    pub rel_position: [R; 3],
    pub voltage_v: R,
    pub energy_used_j: R,
    /// Horizontal ground-node offsets relative to the PAP.
    pub rel_gn: Vec<[R; 2]>,
    /// Cumulative bits delivered per node.
    pub bits_sum: Vec<R>,
}

impl<R: Real> EnvState<R> {
    pub fn dim(&self) -> usize {
        5 + 3 * self.rel_gn.len()
    }
}

/// Diagnostics attached to every step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo<R> {
    /// Propulsion power of the commanded slot (0 if the action was discarded).
    pub power_w: R,
    /// Bits delivered across all nodes by this step's committed slots.
    pub bits_delivered: R,
    /// Prefix FEE after this step, bits per joule.
    pub prefix_fee: R,
    /// The action was discarded and the episode ended with a forced return.
    pub forced_return: bool,
    /// Slots flown by this step (1 for a committed slot, the whole return
    /// path for a forced return, 0 for a terminal no-op at the destination).
    pub slots_flown: usize,
    /// Battery gave out before the destination was reached (unreachable under
    /// the safety rule; kept as a diagnostic for degenerate scenarios).
    pub stranded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<R> {
    pub state: EnvState<R>,
    pub reward: R,
    pub done: bool,
    pub info: StepInfo<R>,
}

/// Reward for one step: non-terminal steps earn the improved prefix FEE (or
/// zero), the terminal step earns `kappa_f · final_fee` and nothing else.
pub fn reward_of<R: Real>(
    prefix_fee_before: R,
    prefix_fee_after: R,
    is_terminal: bool,
    final_fee: R,
    kappa_f: R,
) -> R {
    if is_terminal {
        kappa_f * final_fee
    } else if prefix_fee_after > prefix_fee_before {
        prefix_fee_after
    } else {
        R::zero()
    }
}

/// Outcome of [`FlightSim::fly_slot`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotResult {
    /// Projected discharge time hit the floor; nothing changed.
    NotFlown,
    Flown(BatteryStatus),
}

/// Outcome of a forced-return flight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReturnOutcome {
    pub slots: usize,
    pub stranded: bool,
}

/// Slot-level physics shared by the learning environment and the scripted
/// baselines: position, battery, energy and bits bookkeeping, plus the
/// feasible-return predicate.
#[derive(Clone, Debug)]
pub struct FlightSim<R: Real> {
    scenario: Scenario<R>,
    position: Position3<R>,
    battery: BatteryState<R>,
    energy_j: R,
    bits_sum: Vec<R>,
    record: EpisodeRecord<R>,
}

impl<R: Real> FlightSim<R> {
    pub fn new(mut scenario: Scenario<R>) -> Result<Self, EnvError> {
        scenario.validate()?;
        let battery = BatteryState::fresh(&scenario.battery);
        let record = EpisodeRecord::new(scenario.motion.delta_t, scenario.start, battery);
        let n = scenario.node_count();
        Ok(Self {
            position: scenario.start,
            battery,
            energy_j: R::zero(),
            bits_sum: vec![R::zero(); n],
            record,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario<R> {
        &self.scenario
    }

    pub fn position(&self) -> &Position3<R> {
        &self.position
    }

    pub fn battery(&self) -> &BatteryState<R> {
        &self.battery
    }

    pub fn energy_j(&self) -> R {
        self.energy_j
    }

    pub fn bits_sum(&self) -> &[R] {
        &self.bits_sum
    }

    pub fn record(&self) -> &EpisodeRecord<R> {
        &self.record
    }

    pub fn into_record(self) -> EpisodeRecord<R> {
        self.record
    }

    /// Expected spectral efficiency of every ground node from the current
    /// PAP position.
    pub fn node_rates(&self) -> Result<Vec<R>, EnvError> {
        self.scenario
            .gn_positions
            .iter()
            .map(|gn| {
                channel::expected_spectral_efficiency(
                    &self.position,
                    gn,
                    &self.scenario.radio,
                    &self.scenario.profile,
                )
                .map_err(EnvError::from)
            })
            .collect()
    }

    /// Propulsion power of flying `v` for one slot from the current position.
    pub fn slot_power(&self, v: &VelocityVector<R>) -> R {
        total_power(v, self.position.z, &self.scenario.uav)
    }

    /// Running FEE over the committed slots, bits per joule. Zero until the
    /// first slot that consumed energy.
    pub fn prefix_fee(&self) -> R {
        if !(self.energy_j > R::zero()) {
            return R::zero();
        }
        let total: R = self.bits_sum.iter().copied().sum();
        metrics::fairness_index(&self.bits_sum) * total / self.energy_j
    }

    /// Would a feasible return still exist after flying one slot of `v`?
    ///
    /// False also covers "the battery cannot even fly that slot".
    pub fn return_feasible_after(&self, v: &VelocityVector<R>) -> Result<bool, EnvError> {
        let power = self.slot_power(v);
        let tentative =
            battery::step(&self.battery, power, self.scenario.motion.delta_t, &self.scenario.battery)?;
        if !tentative.is_alive() {
            return Ok(false);
        }
        let tentative_pos = apply_motion(&self.position, v, &self.scenario.motion);
        let dist = tentative_pos.distance(&self.scenario.destination);
        if dist == R::zero() {
            return Ok(true);
        }
        let return_time = dist / self.scenario.motion.v_max;
        let remaining = battery::remaining_airtime(
            &tentative.state,
            |_| self.return_power_from(&tentative_pos),
            self.scenario.motion.delta_t,
            &self.scenario.battery,
        )?;
        Ok(remaining >= return_time)
    }

    /// Constant power used by the return-feasibility estimate: forward flight
    /// at `v_max` along the geometric line to the destination, evaluated at
    /// whichever endpoint altitude is more expensive.
    fn return_power_from(&self, from: &Position3<R>) -> R {
        let dest = self.scenario.destination;
        let dh = from.horizontal_distance(&dest);
        let elevation = dh.atan2(dest.z - from.z);
        let v = self.scenario.motion.v_max;
        let at_from = forward_power(v, elevation, from.z, &self.scenario.uav);
        let at_dest = forward_power(v, elevation, dest.z, &self.scenario.uav);
        at_from.max(at_dest)
    }

    /// Fly one slot of `v`, serving the ground nodes from the slot-start
    /// position when `serve` is set. `snap_to` overrides the post-slot
    /// position (used by final legs to land exactly).
    pub fn fly_slot(
        &mut self,
        v: &VelocityVector<R>,
        serve: bool,
        snap_to: Option<Position3<R>>,
    ) -> Result<SlotResult, EnvError> {
        let delta_t = self.scenario.motion.delta_t;
        let power = self.slot_power(v);
        let outcome = battery::step(&self.battery, power, delta_t, &self.scenario.battery)?;
        if outcome.status == BatteryStatus::TimeExhausted {
            return Ok(SlotResult::NotFlown);
        }

        let n = self.scenario.node_count();
        let (times, bits) = if serve {
            let rates = self.node_rates()?;
            let times = metrics::tdma_allocation(&rates, delta_t)?;
            let bits = metrics::slot_bits(self.scenario.radio.bandwidth_hz, &times, &rates)?;
            (times, bits)
        } else {
            (vec![R::zero(); n], vec![R::zero(); n])
        };
        for (acc, &b) in self.bits_sum.iter_mut().zip(&bits) {
            *acc = *acc + b;
        }

        self.position = snap_to.unwrap_or_else(|| apply_motion(&self.position, v, &self.scenario.motion));
        self.battery = outcome.state;
        self.energy_j = self.energy_j + power * delta_t;
        self.record.positions.push(self.position);
        self.record.battery.push(self.battery);
        self.record.slots.push(SlotRecord {
            velocity: *v,
            power_w: power,
            per_node_time_s: times,
            per_node_bits: bits,
        });
        Ok(SlotResult::Flown(outcome.status))
    }

    /// Fly the straight line to the destination at `v_max`, snapping the
    /// final (possibly partial) slot onto it exactly.
    pub fn fly_return(&mut self, serve: bool) -> Result<ReturnOutcome, EnvError> {
        let v_max = self.scenario.motion.v_max;
        let delta_t = self.scenario.motion.delta_t;
        let dest = self.scenario.destination;
        let mut slots = 0usize;
        let mut stranded = false;
        while let Some(v) = velocity_towards(&self.position, &dest, v_max, delta_t) {
            let dist = self.position.distance(&dest);
            let snap = if dist <= v_max * delta_t { Some(dest) } else { None };
            match self.fly_slot(&v, serve, snap)? {
                SlotResult::NotFlown => {
                    stranded = true;
                    break;
                }
                SlotResult::Flown(BatteryStatus::VoltageCutoff) => {
                    slots += 1;
                    if self.position != dest {
                        stranded = true;
                    }
                    break;
                }
                SlotResult::Flown(_) => slots += 1,
            }
        }
        Ok(ReturnOutcome { slots, stranded })
    }
}

/// The learning environment: [`FlightSim`] plus observation building, the
/// safety rule, and reward bookkeeping. Dynamics are fully deterministic.
#[derive(Clone, Debug)]
pub struct Env<R: Real> {
    sim: FlightSim<R>,
    prefix_fee: R,
    done: bool,
    steps: usize,
}

impl<R: Real> Env<R> {
    pub fn new(scenario: Scenario<R>) -> Result<Self, EnvError> {
        Ok(Self { sim: FlightSim::new(scenario)?, prefix_fee: R::zero(), done: false, steps: 0 })
    }

    /// Restart the episode from the initial position with a fresh battery.
    pub fn reset(&mut self) -> EnvState<R> {
        let scenario = self.sim.scenario().clone();
        self.sim = FlightSim::new(scenario).expect("scenario was already validated");
        self.prefix_fee = R::zero();
        self.done = false;
        self.steps = 0;
        self.state()
    }

    pub fn scenario(&self) -> &Scenario<R> {
        self.sim.scenario()
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// Policy decisions taken so far (slots flown can be larger: the forced
    /// return flies many slots in a single step).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn record(&self) -> &EpisodeRecord<R> {
        self.sim.record()
    }

    pub fn into_record(self) -> EpisodeRecord<R> {
        self.sim.into_record()
    }

    pub fn state(&self) -> EnvState<R> {
        let p = self.sim.position();
        let dest = &self.sim.scenario().destination;
        EnvState {
            rel_position: [p.x - dest.x, p.y - dest.y, p.z - dest.z],
            voltage_v: self.sim.battery().voltage_v,
            energy_used_j: self.sim.energy_j(),
            rel_gn: self
                .sim
                .scenario()
                .gn_positions
                .iter()
                .map(|g| [g.x - p.x, g.y - p.y])
                .collect(),
            bits_sum: self.sim.bits_sum().to_vec(),
        }
    }

    /// Normalised observation vector of length `5 + 3N`: positions are in
    /// area-side units, voltage in units of the nominal cell voltage, energy
    /// in units of the nominal pack energy, delivered bits as each node's
    /// share of all bits delivered so far (zeros before any service).
    pub fn observation(&self) -> Vec<R> {
        let s = self.sim.scenario();
        let side = s.area_side_m;
        let state = self.state();
        let mut obs = Vec::with_capacity(state.dim());
        obs.extend(state.rel_position.iter().map(|&x| x / side));
        obs.push(state.voltage_v / s.battery.cell_voltage_v);
        obs.push(state.energy_used_j / s.battery.nominal_energy_j());
        for gn in &state.rel_gn {
            obs.push(gn[0] / side);
            obs.push(gn[1] / side);
        }
        let total_bits: R = state.bits_sum.iter().copied().sum();
        for &b in &state.bits_sum {
            obs.push(if total_bits > R::zero() { b / total_bits } else { R::zero() });
        }
        obs
    }

    pub fn observation_dim(&self) -> usize {
        self.sim.scenario().observation_dim()
    }

    pub fn step(&mut self, action: &[R; 3]) -> Result<StepOutcome<R>, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let scenario = self.sim.scenario();
        let v = action_to_velocity(action, scenario.motion.v_max)?;
        let kappa = scenario.kappa_f;
        let scale = scenario.reward_fee_scale;
        let serve_return = scenario.serve_during_return;
        self.steps += 1;

        if self.sim.return_feasible_after(&v)? {
            let power = self.sim.slot_power(&v);
            let bits_before: R = self.sim.bits_sum().iter().copied().sum();
            let flown = self.sim.fly_slot(&v, true, None)?;
            debug_assert_eq!(flown, SlotResult::Flown(BatteryStatus::Alive));
            let bits_after: R = self.sim.bits_sum().iter().copied().sum();
            let before = self.prefix_fee;
            let after = self.sim.prefix_fee();
            self.prefix_fee = after;
            let reward = reward_of(before * scale, after * scale, false, R::zero(), kappa);
            Ok(StepOutcome {
                state: self.state(),
                reward,
                done: false,
                info: StepInfo {
                    power_w: power,
                    bits_delivered: bits_after - bits_before,
                    prefix_fee: after,
                    forced_return: false,
                    slots_flown: 1,
                    stranded: false,
                },
            })
        } else {
            let ret = self.sim.fly_return(serve_return)?;
            self.done = true;
            let final_fee = if self.sim.record().slots.is_empty() {
                R::zero()
            } else {
                metrics::fee(self.sim.record())?
            };
            self.prefix_fee = final_fee;
            let reward = reward_of(R::zero(), R::zero(), true, final_fee * scale, kappa);
            Ok(StepOutcome {
                state: self.state(),
                reward,
                done: true,
                info: StepInfo {
                    power_w: R::zero(),
                    bits_delivered: R::zero(),
                    prefix_fee: final_fee,
                    forced_return: true,
                    slots_flown: ret.slots,
                    stranded: ret.stranded,
                },
            })
        }
    }
}
