//! Run orchestration: configuration files, the offline/online training
//! protocols, evaluation, baselines, and file artifacts.
//!
//! # Configuration
//!
//! A run is described by a [`RunConfig`]: a scale preset (`paper` or `desk`)
//! provides every default, an optional TOML file overrides individual keys,
//! and command-line flags override the file. The resolved config is written
//! next to the outputs as `config.toml`, so a run can be reproduced from its
//! artifacts alone.
//!
//! # Randomness
//!
//! All randomness derives from one `u64` seed expanded into independent
//! ChaCha streams per purpose (network init, exploration, learning, and the
//! three layout streams). Ground-node layouts never share a stream with agent
//! noise, and test layouts never share a stream with training layouts.
//!
//! # Artifacts
//!
//! * `config.toml` — resolved configuration snapshot
//! * `metrics.jsonl` — one structured record per episode and phase
//! * `actor.mlp` — final (offline) or best-by-mean-eval-FEE (online) actor
//! * `trajectory_*.csv` — slot-by-slot flight logs, one row per slot
//! * `baselines.csv` — baseline comparison rows across environment profiles
//!
//! FEE and EE values in metrics files are reported in Mbit/J; the library
//! itself computes bits/J throughout.

use crate::baselines::{self, BaselineError, BaselineRun};
use crate::battery::BatteryConfig;
use crate::channel::{EnvironmentProfile, RadioConfig};
use crate::env::{Env, EnvError, Scenario};
use crate::geometry::{MotionConfig, Position3};
use crate::metrics::EpisodeRecord;
use crate::neuralnet::{Mlp, NetError};
use crate::power::UavParams;
use crate::td3::{ReplayBuffer, Td3Config, Td3Trainer, Transition};
use crate::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("{path}:{line}: {message}")]
    BadCsv { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// What the invocation does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    TrainOffline,
    TrainOnline,
    Eval,
    Baseline,
}

impl FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train-offline" => Ok(Self::TrainOffline),
            "train-online" => Ok(Self::TrainOnline),
            "eval" => Ok(Self::Eval),
            "baseline" => Ok(Self::Baseline),
            other => Err(format!(
                "unknown mode {other:?} (expected train-offline, train-online, eval, or baseline)"
            )),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TrainOffline => "train-offline",
            Self::TrainOnline => "train-online",
            Self::Eval => "eval",
            Self::Baseline => "baseline",
        })
    }
}

/// Problem size preset supplying every config default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 1000 m square, 16 ground nodes, full-size battery and networks.
    Paper,
    /// 200 m square, 4 clustered nodes, small battery and networks; episodes
    /// run in the low hundreds of slots so training finishes in minutes.
    Desk,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(format!("unknown scale {other:?} (expected paper or desk)")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Desk => "desk",
        })
    }
}

/// Named propagation environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    Suburban,
    Urban,
    DenseUrban,
}

impl ProfileName {
    pub const ALL: [ProfileName; 3] = [Self::Suburban, Self::Urban, Self::DenseUrban];

    pub fn profile(self) -> EnvironmentProfile<Scalar> {
        match self {
            Self::Suburban => EnvironmentProfile::suburban(),
            Self::Urban => EnvironmentProfile::urban(),
            Self::DenseUrban => EnvironmentProfile::dense_urban(),
        }
    }
}

impl FromStr for ProfileName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "suburban" => Ok(Self::Suburban),
            "urban" => Ok(Self::Urban),
            "dense-urban" => Ok(Self::DenseUrban),
            other => Err(format!(
                "unknown profile {other:?} (expected suburban, urban, or dense-urban)"
            )),
        }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Suburban => "suburban",
            Self::Urban => "urban",
            Self::DenseUrban => "dense-urban",
        })
    }
}

/// `[run]` section: protocol counts, seed, output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub mode: RunMode,
    pub scale: Scale,
    pub profile: ProfileName,
    pub seed: u64,
    /// Training episodes per repetition.
    pub episodes: usize,
    /// Evaluate every this many training episodes.
    pub eval_every: usize,
    /// Frozen-policy episodes per evaluation phase (online mode).
    pub n_eval: usize,
    /// Independent training repetitions (online mode).
    pub n_seed: usize,
    /// Final test episodes on unseen layouts (online mode).
    pub n_test: usize,
    pub out_dir: PathBuf,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            mode: RunMode::TrainOffline,
            scale: Scale::Paper,
            profile: ProfileName::Suburban,
            seed: 1,
            episodes: 1000,
            eval_every: 10,
            n_eval: 16,
            n_seed: 8,
            n_test: 512,
            out_dir: PathBuf::from("papsim-out"),
        }
    }
}

/// `[scenario]` section: geometry and reward shaping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSettings {
    pub area_side_m: Scalar,
    pub node_count: usize,
    pub z_min_m: Scalar,
    pub z_max_m: Scalar,
    pub v_max_mps: Scalar,
    pub delta_t_s: Scalar,
    pub start: [Scalar; 3],
    pub destination: [Scalar; 3],
    pub kappa_f: Scalar,
    pub reward_fee_scale: Scalar,
    pub serve_during_return: bool,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            area_side_m: 1000.0,
            node_count: 16,
            z_min_m: 20.0,
            z_max_m: 100.0,
            v_max_mps: 24.0,
            delta_t_s: 1.0,
            start: [0.0, 0.0, 20.0],
            destination: [1000.0, 1000.0, 20.0],
            kappa_f: 1000.0,
            reward_fee_scale: 1e-6,
            serve_during_return: false,
        }
    }
}

/// Full run description; see the module docs for the resolution order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSettings,
    pub scenario: ScenarioSettings,
    pub radio: RadioConfig<Scalar>,
    pub uav: UavParams<Scalar>,
    pub battery: BatteryConfig<Scalar>,
    pub td3: Td3Config<Scalar>,
}

impl RunConfig {
    /// All defaults for one scale.
    pub fn preset(scale: Scale) -> Self {
        let mut cfg = Self::default();
        cfg.run.scale = scale;
        if scale == Scale::Desk {
            cfg.run.episodes = 400;
            cfg.run.n_eval = 4;
            cfg.run.n_seed = 3;
            cfg.run.n_test = 16;
            cfg.scenario.area_side_m = 200.0;
            cfg.scenario.node_count = 4;
            cfg.scenario.destination = [200.0, 200.0, 20.0];
            // Episode horizon and reward magnitudes are rescaled together so
            // value estimates stay in a range the small networks can fit
            // within a few-minute training budget: terminal and cumulative
            // shaping rewards end up the same order of magnitude.
            cfg.scenario.kappa_f = 50.0;
            cfg.scenario.reward_fee_scale = 1e-8;
            cfg.battery.capacity_ah = 0.15;
            cfg.battery.rated_time_h = 0.1;
            cfg.td3.hidden_dims = vec![64, 64];
        }
        cfg
    }

    /// Scenario for a concrete ground-node layout, validated.
    pub fn scenario_with(&self, gn_positions: Vec<Position3<Scalar>>) -> Result<Scenario<Scalar>, HarnessError> {
        let s = &self.scenario;
        let mut scenario = Scenario {
            gn_positions,
            area_side_m: s.area_side_m,
            start: Position3::new(s.start[0], s.start[1], s.start[2]),
            destination: Position3::new(s.destination[0], s.destination[1], s.destination[2]),
            motion: MotionConfig {
                v_max: s.v_max_mps,
                delta_t: s.delta_t_s,
                z_min: s.z_min_m,
                z_max: s.z_max_m,
                stationarity_delta: None,
            },
            radio: self.radio,
            profile: self.run.profile.profile(),
            uav: self.uav,
            battery: self.battery,
            kappa_f: s.kappa_f,
            reward_fee_scale: s.reward_fee_scale,
            serve_during_return: s.serve_during_return,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Command-line values that take precedence over file and preset values.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub mode: Option<RunMode>,
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub profile: Option<ProfileName>,
    pub scale: Option<Scale>,
}

fn merge_toml(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge_toml(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// Resolve the effective configuration: scale preset ← config file ← flags.
///
/// The scale is decided first (flag wins over the file's `run.scale`), every
/// other file key then overrides that preset's defaults, and the remaining
/// flags override the file. Unknown keys in the file are errors.
pub fn load_config(file: Option<&Path>, cli: &CliOverrides) -> Result<RunConfig, HarnessError> {
    let file_value: Option<toml::Value> = match file {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_at(path))?;
            Some(
                text.parse::<toml::Value>()
                    .map_err(|e| HarnessError::BadConfig(format!("{}: {e}", path.display())))?,
            )
        }
    };

    let scale = cli.scale.or_else(|| {
        file_value
            .as_ref()
            .and_then(|v| v.get("run"))
            .and_then(|r| r.get("scale"))
            .and_then(|s| s.as_str())
            .and_then(|s| s.parse().ok())
    });
    let preset = RunConfig::preset(scale.unwrap_or(Scale::Paper));

    let mut config = match file_value {
        None => preset,
        Some(overlay) => {
            let mut merged = toml::Value::try_from(&preset)
                .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
            merge_toml(&mut merged, overlay);
            merged
                .try_into()
                .map_err(|e: toml::de::Error| HarnessError::BadConfig(e.to_string()))?
        }
    };

    if let Some(scale) = cli.scale {
        config.run.scale = scale;
    }
    if let Some(mode) = cli.mode {
        config.run.mode = mode;
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(episodes) = cli.episodes {
        config.run.episodes = episodes;
    }
    if let Some(out) = &cli.out_dir {
        config.run.out_dir = out.clone();
    }
    if let Some(profile) = cli.profile {
        config.run.profile = profile;
    }
    validate_config(&config)?;
    Ok(config)
}

fn validate_config(cfg: &RunConfig) -> Result<(), HarnessError> {
    let r = &cfg.run;
    if r.eval_every == 0 || r.n_eval == 0 || r.n_seed == 0 || r.n_test == 0 {
        return Err(HarnessError::BadConfig(
            "eval_every, n_eval, n_seed, and n_test must be positive".into(),
        ));
    }
    if cfg.scenario.node_count == 0 {
        return Err(HarnessError::BadConfig("node_count must be positive".into()));
    }
    if cfg.td3.batch_size == 0 || cfg.td3.buffer_capacity == 0 {
        return Err(HarnessError::BadConfig("batch_size and buffer_capacity must be positive".into()));
    }
    Ok(())
}

// RNG stream identifiers; every consumer of randomness gets its own stream of
// the run seed so protocols stay decoupled (e.g. layouts never depend on how
// much exploration noise was drawn).
const STREAM_NET_INIT: u64 = 0;
const STREAM_EXPLORE: u64 = 1;
const STREAM_LEARN: u64 = 2;
const STREAM_TRAIN_LAYOUT: u64 = 3;
const STREAM_EVAL_LAYOUT: u64 = 4;
const STREAM_TEST_LAYOUT: u64 = 5;

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Evenly spaced grid layout (cell centres) for perfect-square counts.
pub fn grid_layout(side: Scalar, count: usize) -> Option<Vec<Position3<Scalar>>> {
    let k = (count as f64).sqrt().round() as usize;
    if k * k != count || count == 0 {
        return None;
    }
    let cell = side / k as Scalar;
    let mut nodes = Vec::with_capacity(count);
    for j in 0..k {
        for i in 0..k {
            nodes.push(Position3::new(
                (i as Scalar + 0.5) * cell,
                (j as Scalar + 0.5) * cell,
                0.0,
            ));
        }
    }
    Some(nodes)
}

/// Fixed off-centre cluster used by the desk preset: tight enough that
/// loitering overhead serves every node well, far enough from the area
/// centre that the hover baseline is clearly suboptimal.
pub fn desk_cluster(side: Scalar) -> Vec<Position3<Scalar>> {
    [(0.80, 0.80), (0.88, 0.74), (0.74, 0.88), (0.70, 0.70)]
        .map(|(x, y)| Position3::new(x * side, y * side, 0.0))
        .to_vec()
}

/// The fixed layout used by offline training and the baseline comparisons.
pub fn offline_layout(cfg: &RunConfig) -> Result<Vec<Position3<Scalar>>, HarnessError> {
    let side = cfg.scenario.area_side_m;
    match cfg.run.scale {
        Scale::Paper => grid_layout(side, cfg.scenario.node_count).ok_or_else(|| {
            HarnessError::BadConfig(format!(
                "offline grid layout needs a square node count, got {}",
                cfg.scenario.node_count
            ))
        }),
        Scale::Desk => {
            if cfg.scenario.node_count != 4 {
                return Err(HarnessError::BadConfig(format!(
                    "desk layout is defined for 4 nodes, got {}",
                    cfg.scenario.node_count
                )));
            }
            Ok(desk_cluster(side))
        }
    }
}

/// Uniform random layout over the service square.
pub fn random_layout(rng: &mut impl Rng, side: Scalar, count: usize) -> Vec<Position3<Scalar>> {
    (0..count)
        .map(|_| Position3::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side), 0.0))
        .collect()
}

/// FNV-1a hash over the scenario's defining numbers; identifies a layout and
/// parameter set in metrics records.
pub fn scenario_hash(s: &Scenario<Scalar>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |value: f64| {
        for byte in value.to_bits().to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(PRIME);
        }
    };
    for gn in &s.gn_positions {
        eat(gn.x);
        eat(gn.y);
    }
    eat(s.area_side_m);
    for p in [&s.start, &s.destination] {
        eat(p.x);
        eat(p.y);
        eat(p.z);
    }
    for v in [
        s.motion.v_max,
        s.motion.delta_t,
        s.motion.z_min,
        s.motion.z_max,
        s.radio.carrier_hz,
        s.radio.bandwidth_hz,
        s.radio.tx_power_dbm,
        s.radio.noise_dbm_per_hz,
        s.profile.a,
        s.profile.b,
        s.profile.eta_los_db,
        s.profile.eta_nlos_db,
        s.uav.weight_n,
        s.uav.rotor_count,
        s.uav.tip_speed,
        s.uav.fuselage_area,
        s.uav.drag_coefficient,
        s.uav.rotor_area,
        s.uav.profile_drag,
        s.uav.solidity,
        s.battery.capacity_ah,
        s.battery.rated_time_h,
        s.battery.cell_voltage_v,
        s.battery.cutoff_voltage_v,
        s.battery.cell_count,
        s.battery.peukert_exponent,
        s.battery.slope_f1,
        s.battery.slope_f2,
        s.battery.min_time_s,
        s.kappa_f,
        s.reward_fee_scale,
    ] {
        eat(v);
    }
    eat(if s.serve_during_return { 1.0 } else { 0.0 });
    hash
}

/// Episode/phase row of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    pub phase: Phase,
    pub fee_mbit_per_j: f64,
    pub fi: f64,
    pub ee_mbit_per_j: f64,
    pub airtime_s: f64,
    /// Policy decisions taken (the forced return counts as one).
    pub steps: usize,
    pub seed: u64,
    /// Hex [`scenario_hash`] of the episode's scenario.
    pub scenario_hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
    Test,
}

/// Write metrics as JSON lines.
pub fn export_metrics(records: &[MetricsRecord], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("plain struct serialises"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_at(path))
}

/// Read back a metrics file written by [`export_metrics`].
pub fn parse_metrics(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_at(path))?;
    let mut records = Vec::new();
    for (index, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| HarnessError::BadCsv {
            path: path.to_path_buf(),
            line: index + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// One parsed line of a trajectory file. Positions and battery fields are the
/// end-of-slot values; bits are cumulative per node.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub slot: usize,
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub speed_mps: f64,
    pub elevation_rad: f64,
    pub azimuth_rad: f64,
    pub power_w: f64,
    pub voltage_v: f64,
    pub remaining_time_s: f64,
    pub capacity_ah: f64,
    pub bits: Vec<f64>,
}

const TRAJECTORY_FIXED_COLUMNS: usize = 12;

fn trajectory_header(node_count: usize) -> String {
    let mut header = String::from(
        "slot,t_s,x_m,y_m,z_m,speed_mps,elevation_rad,azimuth_rad,power_w,voltage_v,remaining_time_s,capacity_ah",
    );
    for n in 1..=node_count {
        header.push_str(&format!(",bits_gn{n}"));
    }
    header
}

/// Flatten a record into export rows (one per flown slot).
pub fn trajectory_rows(record: &EpisodeRecord<Scalar>) -> Vec<TrajectoryRow> {
    let n = record.node_count();
    let mut cumulative = vec![0.0; n];
    record
        .slots
        .iter()
        .enumerate()
        .map(|(k, slot)| {
            for (acc, &b) in cumulative.iter_mut().zip(&slot.per_node_bits) {
                *acc += b;
            }
            let position = &record.positions[k + 1];
            let battery = &record.battery[k + 1];
            TrajectoryRow {
                slot: k + 1,
                t_s: (k + 1) as f64 * record.delta_t_s,
                x_m: position.x,
                y_m: position.y,
                z_m: position.z,
                speed_mps: slot.velocity.speed,
                elevation_rad: slot.velocity.elevation,
                azimuth_rad: slot.velocity.azimuth,
                power_w: slot.power_w,
                voltage_v: battery.voltage_v,
                remaining_time_s: battery.remaining_time_s(),
                capacity_ah: battery.capacity_ah,
                bits: cumulative.clone(),
            }
        })
        .collect()
}

/// Write the slot-by-slot flight log: a header plus `12 + N` comma-separated
/// columns per slot, floats in shortest round-trip form.
pub fn export_trajectory(record: &EpisodeRecord<Scalar>, path: &Path) -> Result<(), HarnessError> {
    let mut out = trajectory_header(record.node_count());
    out.push('\n');
    for row in trajectory_rows(record) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.slot,
            row.t_s,
            row.x_m,
            row.y_m,
            row.z_m,
            row.speed_mps,
            row.elevation_rad,
            row.azimuth_rad,
            row.power_w,
            row.voltage_v,
            row.remaining_time_s,
            row.capacity_ah
        ));
        for b in &row.bits {
            out.push_str(&format!(",{b}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_at(path))
}

/// Parse a file written by [`export_trajectory`] back into rows, exactly.
pub fn parse_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, HarnessError> {
    let bad = |line: usize, message: String| HarnessError::BadCsv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(0, "empty file (missing header)".into()))?;
    let columns = header.split(',').count();
    if columns < TRAJECTORY_FIXED_COLUMNS {
        return Err(bad(1, format!("header has {columns} columns, expected at least 12")));
    }
    let node_count = columns - TRAJECTORY_FIXED_COLUMNS;
    let mut rows = Vec::new();
    for (index, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(bad(index + 1, format!("{} columns, expected {columns}", fields.len())));
        }
        let parse_f64 = |k: usize| -> Result<f64, HarnessError> {
            fields[k]
                .parse::<f64>()
                .map_err(|e| bad(index + 1, format!("column {}: {e}", k + 1)))
        };
        let row = TrajectoryRow {
            slot: fields[0]
                .parse::<usize>()
                .map_err(|e| bad(index + 1, format!("column 1: {e}")))?,
            t_s: parse_f64(1)?,
            x_m: parse_f64(2)?,
            y_m: parse_f64(3)?,
            z_m: parse_f64(4)?,
            speed_mps: parse_f64(5)?,
            elevation_rad: parse_f64(6)?,
            azimuth_rad: parse_f64(7)?,
            power_w: parse_f64(8)?,
            voltage_v: parse_f64(9)?,
            remaining_time_s: parse_f64(10)?,
            capacity_ah: parse_f64(11)?,
            bits: (0..node_count)
                .map(|n| parse_f64(TRAJECTORY_FIXED_COLUMNS + n))
                .collect::<Result<_, _>>()?,
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Everything a run leaves behind.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub metrics: Vec<MetricsRecord>,
    pub checkpoint: Option<PathBuf>,
    /// Online mode: the selection score of the retained checkpoint.
    pub best_mean_eval_fee_mbit_per_j: Option<f64>,
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<PathBuf, HarnessError> {
    let dir = cfg.run.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let snapshot = dir.join("config.toml");
    let text = toml::to_string_pretty(cfg).map_err(|e| HarnessError::BadConfig(e.to_string()))?;
    std::fs::write(&snapshot, text).map_err(io_at(&snapshot))?;
    Ok(dir)
}

/// Flight summary of a finished episode in metrics-file units.
fn episode_record_metrics(record: &EpisodeRecord<Scalar>) -> Result<(f64, f64, f64, f64), HarnessError> {
    let completed = true; // callers only pass records produced by Env, which lands or errors
    let m = baselines::flight_metrics(record, completed)?;
    Ok((m.fee * 1e-6, m.fi, m.ee * 1e-6, m.airtime_s))
}

fn metrics_record(
    episode: usize,
    phase: Phase,
    record: &EpisodeRecord<Scalar>,
    steps: usize,
    seed: u64,
    hash: u64,
) -> Result<MetricsRecord, HarnessError> {
    let (fee, fi, ee, airtime) = episode_record_metrics(record)?;
    Ok(MetricsRecord {
        episode,
        phase,
        fee_mbit_per_j: fee,
        fi,
        ee_mbit_per_j: ee,
        airtime_s: airtime,
        steps,
        seed,
        scenario_hash: format!("{hash:016x}"),
    })
}

/// Upper bound on policy decisions per episode; physics terminates every
/// episode far earlier, this only guards degenerate configurations.
const MAX_EPISODE_STEPS: usize = 10_000_000;

fn uniform_cube_action(rng: &mut impl Rng) -> [Scalar; 3] {
    [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
}

struct TrainedEpisode {
    record: EpisodeRecord<Scalar>,
    steps: usize,
}

/// One exploration episode feeding the buffer, with one trainer update per
/// environment step once the buffer holds a full batch.
fn train_episode(
    env: &mut Env<Scalar>,
    trainer: &mut Td3Trainer<Scalar>,
    buffer: &mut ReplayBuffer<Scalar>,
    explore_rng: &mut ChaCha8Rng,
    learn_rng: &mut ChaCha8Rng,
    env_steps: &mut usize,
) -> Result<TrainedEpisode, HarnessError> {
    env.reset();
    let warmup = trainer.config().warmup_steps;
    let mut steps = 0usize;
    loop {
        let observation = env.observation();
        let action = if *env_steps < warmup {
            uniform_cube_action(explore_rng)
        } else {
            let a = trainer.explore_action(&observation, explore_rng);
            [a[0], a[1], a[2]]
        };
        let outcome = env.step(&action)?;
        buffer.push(Transition {
            state: observation,
            action: action.to_vec(),
            reward: outcome.reward,
            next_state: env.observation(),
            done: outcome.done,
        });
        *env_steps += 1;
        steps += 1;
        trainer.train_step(buffer, learn_rng);
        if outcome.done {
            break;
        }
        if steps >= MAX_EPISODE_STEPS {
            return Err(HarnessError::BadConfig("episode exceeded the step guard".into()));
        }
    }
    Ok(TrainedEpisode { record: env.record().clone(), steps })
}

/// One frozen-policy episode (no noise, no learning).
pub fn greedy_episode(
    scenario: &Scenario<Scalar>,
    actor: &Mlp<Scalar>,
) -> Result<(EpisodeRecord<Scalar>, usize), HarnessError> {
    let mut env = Env::new(scenario.clone())?;
    let mut steps = 0usize;
    while !env.done() {
        let observation = env.observation();
        let action = actor.forward(&observation);
        env.step(&[action[0], action[1], action[2]])?;
        steps += 1;
        if steps >= MAX_EPISODE_STEPS {
            return Err(HarnessError::BadConfig("episode exceeded the step guard".into()));
        }
    }
    Ok((env.into_record(), steps))
}

/// Dispatch on the configured mode. `checkpoint` is required by [`RunMode::Eval`].
pub fn execute(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<RunArtifacts, HarnessError> {
    match cfg.run.mode {
        RunMode::TrainOffline => run_offline(cfg),
        RunMode::TrainOnline => run_online(cfg),
        RunMode::Baseline => run_baselines(cfg),
        RunMode::Eval => {
            let path = checkpoint.ok_or_else(|| {
                HarnessError::BadConfig("eval mode needs --checkpoint".into())
            })?;
            run_eval(cfg, path)
        }
    }
}

/// Train on the fixed offline layout; evaluate the frozen policy on that same
/// layout every `eval_every` episodes (plus once before training).
pub fn run_offline(cfg: &RunConfig) -> Result<RunArtifacts, HarnessError> {
    let dir = prepare_out_dir(cfg)?;
    let scenario = cfg.scenario_with(offline_layout(cfg)?)?;
    let hash = scenario_hash(&scenario);
    let seed = cfg.run.seed;

    let mut trainer = Td3Trainer::new(
        scenario.observation_dim(),
        3,
        cfg.td3.clone(),
        &mut rng_stream(seed, STREAM_NET_INIT),
    );
    let mut buffer = ReplayBuffer::new(cfg.td3.buffer_capacity);
    let mut explore_rng = rng_stream(seed, STREAM_EXPLORE);
    let mut learn_rng = rng_stream(seed, STREAM_LEARN);
    let mut env = Env::new(scenario.clone())?;
    let mut env_steps = 0usize;
    let mut metrics = Vec::new();

    let evaluate = |trainer: &Td3Trainer<Scalar>, episode: usize| -> Result<MetricsRecord, HarnessError> {
        let (record, steps) = greedy_episode(&scenario, trainer.actor())?;
        metrics_record(episode, Phase::Eval, &record, steps, seed, hash)
    };

    metrics.push(evaluate(&trainer, 0)?);
    for episode in 1..=cfg.run.episodes {
        let outcome = train_episode(
            &mut env,
            &mut trainer,
            &mut buffer,
            &mut explore_rng,
            &mut learn_rng,
            &mut env_steps,
        )?;
        metrics.push(metrics_record(episode, Phase::Train, &outcome.record, outcome.steps, seed, hash)?);
        if episode % cfg.run.eval_every == 0 {
            metrics.push(evaluate(&trainer, episode)?);
        }
    }

    let checkpoint = dir.join("actor.mlp");
    trainer.actor().save(&checkpoint)?;
    let (final_record, _) = greedy_episode(&scenario, trainer.actor())?;
    export_trajectory(&final_record, &dir.join("trajectory_final.csv"))?;
    export_metrics(&metrics, &dir.join("metrics.jsonl"))?;
    Ok(RunArtifacts {
        out_dir: dir,
        metrics,
        checkpoint: Some(checkpoint),
        best_mean_eval_fee_mbit_per_j: None,
    })
}

/// Train `n_seed` independent agents on per-episode random layouts, keep the
/// actor with the best mean evaluation FEE, and test it on `n_test` unseen
/// layouts.
pub fn run_online(cfg: &RunConfig) -> Result<RunArtifacts, HarnessError> {
    let dir = prepare_out_dir(cfg)?;
    let side = cfg.scenario.area_side_m;
    let n = cfg.scenario.node_count;
    let mut metrics = Vec::new();
    let mut best: Option<(f64, Mlp<Scalar>)> = None;

    for repetition in 0..cfg.run.n_seed {
        let seed = cfg.run.seed + repetition as u64;
        let mut layout_rng = rng_stream(seed, STREAM_TRAIN_LAYOUT);
        let mut eval_layout_rng = rng_stream(seed, STREAM_EVAL_LAYOUT);
        let mut explore_rng = rng_stream(seed, STREAM_EXPLORE);
        let mut learn_rng = rng_stream(seed, STREAM_LEARN);
        let mut trainer = Td3Trainer::new(
            5 + 3 * n,
            3,
            cfg.td3.clone(),
            &mut rng_stream(seed, STREAM_NET_INIT),
        );
        let mut buffer = ReplayBuffer::new(cfg.td3.buffer_capacity);
        let mut env_steps = 0usize;

        for episode in 1..=cfg.run.episodes {
            let scenario = cfg.scenario_with(random_layout(&mut layout_rng, side, n))?;
            let hash = scenario_hash(&scenario);
            let mut env = Env::new(scenario)?;
            let outcome = train_episode(
                &mut env,
                &mut trainer,
                &mut buffer,
                &mut explore_rng,
                &mut learn_rng,
                &mut env_steps,
            )?;
            metrics.push(metrics_record(episode, Phase::Train, &outcome.record, outcome.steps, seed, hash)?);

            if episode % cfg.run.eval_every == 0 {
                let mut fee_sum = 0.0;
                for _ in 0..cfg.run.n_eval {
                    let scenario = cfg.scenario_with(random_layout(&mut eval_layout_rng, side, n))?;
                    let hash = scenario_hash(&scenario);
                    let (record, steps) = greedy_episode(&scenario, trainer.actor())?;
                    let row = metrics_record(episode, Phase::Eval, &record, steps, seed, hash)?;
                    fee_sum += row.fee_mbit_per_j;
                    metrics.push(row);
                }
                let mean_fee = fee_sum / cfg.run.n_eval as f64;
                if best.as_ref().is_none_or(|(score, _)| mean_fee > *score) {
                    best = Some((mean_fee, trainer.actor().clone()));
                }
            }
        }
    }

    let (best_fee, best_actor) = best.ok_or_else(|| {
        HarnessError::BadConfig("no evaluation phase ran; increase episodes or lower eval_every".into())
    })?;
    let checkpoint = dir.join("actor.mlp");
    best_actor.save(&checkpoint)?;

    let mut test_layout_rng = rng_stream(cfg.run.seed, STREAM_TEST_LAYOUT);
    let mut first_test_record = None;
    for index in 0..cfg.run.n_test {
        let scenario = cfg.scenario_with(random_layout(&mut test_layout_rng, side, n))?;
        let hash = scenario_hash(&scenario);
        let (record, steps) = greedy_episode(&scenario, &best_actor)?;
        metrics.push(metrics_record(index, Phase::Test, &record, steps, cfg.run.seed, hash)?);
        if first_test_record.is_none() {
            first_test_record = Some(record);
        }
    }
    if let Some(record) = first_test_record {
        export_trajectory(&record, &dir.join("trajectory_test.csv"))?;
    }
    export_metrics(&metrics, &dir.join("metrics.jsonl"))?;
    Ok(RunArtifacts {
        out_dir: dir,
        metrics,
        checkpoint: Some(checkpoint),
        best_mean_eval_fee_mbit_per_j: Some(best_fee),
    })
}

/// Evaluate a saved actor on `n_eval` fresh layouts.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<RunArtifacts, HarnessError> {
    let dir = prepare_out_dir(cfg)?;
    let actor: Mlp<Scalar> = Mlp::load(checkpoint)?;
    let expected = 5 + 3 * cfg.scenario.node_count;
    if actor.input_dim() != expected {
        return Err(HarnessError::BadConfig(format!(
            "checkpoint expects observation dim {}, config produces {expected}",
            actor.input_dim()
        )));
    }
    let side = cfg.scenario.area_side_m;
    let mut layout_rng = rng_stream(cfg.run.seed, STREAM_EVAL_LAYOUT);
    let mut metrics = Vec::new();
    let mut first_record = None;
    for index in 0..cfg.run.n_eval {
        let scenario = cfg.scenario_with(random_layout(&mut layout_rng, side, cfg.scenario.node_count))?;
        let hash = scenario_hash(&scenario);
        let (record, steps) = greedy_episode(&scenario, &actor)?;
        metrics.push(metrics_record(index, Phase::Eval, &record, steps, cfg.run.seed, hash)?);
        if first_record.is_none() {
            first_record = Some(record);
        }
    }
    if let Some(record) = first_record {
        export_trajectory(&record, &dir.join("trajectory_eval.csv"))?;
    }
    export_metrics(&metrics, &dir.join("metrics.jsonl"))?;
    Ok(RunArtifacts {
        out_dir: dir,
        metrics,
        checkpoint: Some(checkpoint.to_path_buf()),
        best_mean_eval_fee_mbit_per_j: None,
    })
}

/// Evaluate both baselines on the offline layout across the three
/// environment profiles and write the comparison table.
pub fn run_baselines(cfg: &RunConfig) -> Result<RunArtifacts, HarnessError> {
    let dir = prepare_out_dir(cfg)?;
    let layout = offline_layout(cfg)?;
    let mut table = String::from(
        "profile,baseline,a,b,eta_los_db,eta_nlos_db,fee_mbit_per_j,fi,ee_mbit_per_j,airtime_s,total_bits,total_energy_j,completed\n",
    );
    for profile in ProfileName::ALL {
        let mut run_cfg = cfg.clone();
        run_cfg.run.profile = profile;
        let scenario = run_cfg.scenario_with(layout.clone())?;
        let runs: [BaselineRun<Scalar>; 2] = [
            baselines::hover_baseline(&scenario)?,
            baselines::tsp_baseline(&scenario)?,
        ];
        for run in &runs {
            let p = profile.profile();
            let m = &run.metrics;
            table.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                profile,
                run.plan.label,
                p.a,
                p.b,
                p.eta_los_db,
                p.eta_nlos_db,
                m.fee * 1e-6,
                m.fi,
                m.ee * 1e-6,
                m.airtime_s,
                m.total_bits,
                m.total_energy_j,
                m.completed
            ));
            export_trajectory(
                &run.record,
                &dir.join(format!("trajectory_{}_{}.csv", run.plan.label, profile)),
            )?;
        }
    }
    let table_path = dir.join("baselines.csv");
    std::fs::write(&table_path, table).map_err(io_at(&table_path))?;
    Ok(RunArtifacts {
        out_dir: dir,
        metrics: Vec::new(),
        checkpoint: None,
        best_mean_eval_fee_mbit_per_j: None,
    })
}
