//! Deterministic simulator for a rotary-wing portable access point (PAP)
//! that serves ground nodes over an air-to-ground radio link, together with
//! a from-scratch TD3 agent that learns fair-energy-efficient trajectories.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] — positions, velocity commands, action-cube mapping
//! * [`channel`] — LoS-probability path-loss model and expected spectral efficiency
//! * [`power`] — rotary-wing propulsion power in forward/hover/vertical flight
//! * [`battery`] — Peukert-style discharge model and air-time estimation
//! * [`metrics`] — TDMA scheduling, Jain fairness, fair energy efficiency (FEE)
//! * [`env`] — the episodic decision process tying the above together
//! * [`neuralnet`] — minimal dense networks, backprop, Adam, checkpointing
//! * [`td3`] — twin-delayed deterministic policy-gradient training
//! * [`baselines`] — scripted hover and cyclic-tour reference policies
//! * [`harness`] — run configuration, training/eval protocols, file outputs
//!
//! All numeric kernels are generic over the [`Real`] scalar so they can be
//! instantiated at `f32` or `f64`; the type aliases at the crate root fix the
//! default double-precision instantiation used by the CLI and tests.

pub mod battery;
pub mod baselines;
pub mod channel;
pub mod env;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod neuralnet;
pub mod power;
pub mod td3;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar abstraction for every numeric kernel in this crate.
///
/// The two blanket implementations cover `f32` and `f64`. The helper
/// methods exist because model constants are written down as `f64`
/// literals and have to be narrowed (or passed through) explicitly.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    /// Widen to `f64` for reporting and file export.
    #[inline]
    fn to64(self) -> f64 {
        self.to_f64().expect("finite value")
    }

    /// Adjacent representable value one step toward `target`; `self` when
    /// already equal. Used where a sum must be pinned to a constant exactly.
    fn next_toward(self, target: Self) -> Self;
}

impl Real for f32 {
    #[inline]
    fn next_toward(self, target: Self) -> Self {
        match self.partial_cmp(&target) {
            Some(std::cmp::Ordering::Less) => self.next_up(),
            Some(std::cmp::Ordering::Greater) => self.next_down(),
            _ => self,
        }
    }
}

impl Real for f64 {
    #[inline]
    fn next_toward(self, target: Self) -> Self {
        match self.partial_cmp(&target) {
            Some(std::cmp::Ordering::Less) => self.next_up(),
            Some(std::cmp::Ordering::Greater) => self.next_down(),
            _ => self,
        }
    }
}

/// Default scalar used by the CLI, the acceptance tests, and the aliases below.
pub type Scalar = f64;

pub type Position3 = geometry::Position3<Scalar>;
pub type VelocityVector = geometry::VelocityVector<Scalar>;
pub type MotionConfig = geometry::MotionConfig<Scalar>;

pub type RadioConfig = channel::RadioConfig<Scalar>;
pub type EnvironmentProfile = channel::EnvironmentProfile<Scalar>;

pub type UavParams = power::UavParams<Scalar>;

pub type BatteryConfig = battery::BatteryConfig<Scalar>;
pub type BatteryState = battery::BatteryState<Scalar>;

pub type SlotRecord = metrics::SlotRecord<Scalar>;
pub type EpisodeRecord = metrics::EpisodeRecord<Scalar>;

pub type Scenario = env::Scenario<Scalar>;
pub type Env = env::Env<Scalar>;
pub type EnvState = env::EnvState<Scalar>;
pub type StepOutcome = env::StepOutcome<Scalar>;

pub type Mlp = neuralnet::Mlp<Scalar>;
pub type Adam = neuralnet::Adam<Scalar>;
pub type Td3Config = td3::Td3Config<Scalar>;
pub type Td3Trainer = td3::Td3Trainer<Scalar>;
pub type ReplayBuffer = td3::ReplayBuffer<Scalar>;
pub type ScriptedTrajectory = baselines::ScriptedTrajectory<Scalar>;
pub type TrajectoryMetrics = baselines::TrajectoryMetrics<Scalar>;
