//! Scenario configuration, the `key = value` config codec, unit conversions
//! and the seeded scenario sampler.
//!
//! Everything inside the crate is SI (W, Hz, bits, s, m). dB, dBm and KB only
//! appear in config files; [`ScenarioConfig`] keeps the dB-valued fields in
//! dB so a config round-trips exactly, and converts on use.

use crate::channel::{ChannelError, LinkBudget, PlanarPosition, UserChannelSpec, DEFAULT_RCOND_THRESHOLD};
use crate::ippso::{IppsoConfig, RoundingMode};
use crate::latency::{local_latency, upload_latency, ServerProfile, UserProfile};
use crate::pso::SwarmConfig;
use crate::scalar::Scalar;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const BITS_PER_KB: f64 = 8192.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("reference antenna array: {0}")]
    Channel(#[from] ChannelError),
    #[error("{antennas} antennas at spacing {spacing} m do not fit in a region of half width {half_width} m")]
    ArrayDoesNotFit { antennas: usize, spacing: f64, half_width: f64 },
}

pub fn dbm_to_watts(value_dbm: f64) -> f64 {
    10f64.powf((value_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(value_db: f64) -> f64 {
    10f64.powf(value_db / 10.0)
}

pub fn kb_to_bits(kb: f64) -> f64 {
    kb * BITS_PER_KB
}

pub fn bits_to_kb(bits: f64) -> f64 {
    bits / BITS_PER_KB
}

/// Physical, system and solver parameters of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub antenna_count: usize,
    pub user_count: usize,
    pub paths_per_user: usize,
    /// Meters.
    pub wavelength: f64,
    /// Half side of the square antenna region, meters.
    pub region_half_width: f64,
    /// Meters.
    pub min_spacing: f64,
    /// Bits.
    pub data_size_range: (f64, f64),
    /// Hz.
    pub local_cpu_range: (f64, f64),
    /// Radians, shared by elevation and azimuth.
    pub aoa_range: (f64, f64),
    /// Meters.
    pub user_distance_range: (f64, f64),
    /// Channel gain at 1 m, dB.
    pub reference_gain_db: f64,
    pub path_loss_exponent: f64,
    /// Hz.
    pub server_max_frequency: f64,
    /// One value for all users, or one per user.
    pub transmit_power_dbm: Vec<f64>,
    pub noise_psd_dbm_per_hz: f64,
    /// Hz.
    pub bandwidth: f64,
    pub model_size_factor: f64,
    pub user_cycles_per_bit: f64,
    pub server_cycles_per_bit: f64,
    pub user_minibatch_ratio: f64,
    pub server_minibatch_ratio: f64,
    pub user_local_iterations: u32,
    pub server_iterations: u32,
    pub rcond_threshold: f64,
    pub particle_count: usize,
    pub pso_iterations: usize,
    pub cognitive_factor: f64,
    pub social_factor: f64,
    pub inertia_max: f64,
    pub inertia_min: f64,
    pub penalty_latency: f64,
    pub penalty_distance: f64,
    /// Meters per iteration; `None` means half the region half width.
    pub velocity_clamp: Option<f64>,
    pub per_coordinate_random: bool,
    pub outer_iterations: usize,
    pub allocation_tolerance: f64,
    /// `None` keeps the continuous offload ratios.
    pub rounding_threshold: Option<f64>,
    pub rng_seed: u64,
    pub parallel: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let wavelength = 0.1;
        Self {
            antenna_count: 4,
            user_count: 3,
            paths_per_user: 3,
            wavelength,
            region_half_width: 1.5 * wavelength,
            min_spacing: wavelength,
            data_size_range: (kb_to_bits(0.5), kb_to_bits(2.0)),
            local_cpu_range: (0.8e9, 1e9),
            aoa_range: (-FRAC_PI_2, FRAC_PI_2),
            user_distance_range: (20.0, 100.0),
            reference_gain_db: -40.0,
            path_loss_exponent: 2.8,
            server_max_frequency: 10e9,
            transmit_power_dbm: vec![30.0],
            noise_psd_dbm_per_hz: -174.0,
            bandwidth: 1e6,
            model_size_factor: 0.1,
            user_cycles_per_bit: 1000.0,
            server_cycles_per_bit: 1000.0,
            user_minibatch_ratio: 0.5,
            server_minibatch_ratio: 0.5,
            user_local_iterations: 10,
            server_iterations: 10,
            rcond_threshold: DEFAULT_RCOND_THRESHOLD,
            particle_count: 50,
            pso_iterations: 50,
            cognitive_factor: 2.0,
            social_factor: 2.0,
            inertia_max: 0.9,
            inertia_min: 0.4,
            penalty_latency: 1e3,
            penalty_distance: 1e3,
            velocity_clamp: None,
            per_coordinate_random: false,
            outer_iterations: 5,
            allocation_tolerance: 1e-9,
            rounding_threshold: None,
            rng_seed: 0,
            parallel: true,
        }
    }
}

/// Config keys in file order.
pub const CONFIG_KEYS: &[&str] = &[
    "antenna_count",
    "user_count",
    "paths_per_user",
    "wavelength_m",
    "region_half_width_m",
    "min_spacing_m",
    "data_size_kb",
    "local_cpu_hz",
    "aoa_range_rad",
    "user_distance_m",
    "reference_gain_db",
    "path_loss_exponent",
    "server_max_frequency_hz",
    "transmit_power_dbm",
    "noise_psd_dbm_per_hz",
    "bandwidth_hz",
    "model_size_factor",
    "user_cycles_per_bit",
    "server_cycles_per_bit",
    "user_minibatch_ratio",
    "server_minibatch_ratio",
    "user_local_iterations",
    "server_iterations",
    "rcond_threshold",
    "particle_count",
    "pso_iterations",
    "cognitive_factor",
    "social_factor",
    "inertia_max",
    "inertia_min",
    "penalty_latency",
    "penalty_distance",
    "velocity_clamp_m",
    "per_coordinate_random",
    "outer_iterations",
    "allocation_tolerance",
    "rounding",
    "rng_seed",
    "parallel",
];

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("expected a number, got `{}`", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got `{}`", s.trim()))
    }
}

fn parse_int<I: std::str::FromStr>(s: &str) -> Result<I, String> {
    s.trim().parse().map_err(|_| format!("expected a non-negative integer, got `{}`", s.trim()))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got `{other}`")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_f64).collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_list(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(format!("expected two comma-separated numbers, got {}", other.len())),
    }
}

impl ScenarioConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "antenna_count" => self.antenna_count = parse_int(value)?,
            "user_count" => self.user_count = parse_int(value)?,
            "paths_per_user" => self.paths_per_user = parse_int(value)?,
            "wavelength_m" => self.wavelength = parse_f64(value)?,
            "region_half_width_m" => self.region_half_width = parse_f64(value)?,
            "min_spacing_m" => self.min_spacing = parse_f64(value)?,
            "data_size_kb" => {
                let (a, b) = parse_pair(value)?;
                self.data_size_range = (kb_to_bits(a), kb_to_bits(b));
            }
            "local_cpu_hz" => self.local_cpu_range = parse_pair(value)?,
            "aoa_range_rad" => self.aoa_range = parse_pair(value)?,
            "user_distance_m" => self.user_distance_range = parse_pair(value)?,
            "reference_gain_db" => self.reference_gain_db = parse_f64(value)?,
            "path_loss_exponent" => self.path_loss_exponent = parse_f64(value)?,
            "server_max_frequency_hz" => self.server_max_frequency = parse_f64(value)?,
            "transmit_power_dbm" => self.transmit_power_dbm = parse_list(value)?,
            "noise_psd_dbm_per_hz" => self.noise_psd_dbm_per_hz = parse_f64(value)?,
            "bandwidth_hz" => self.bandwidth = parse_f64(value)?,
            "model_size_factor" => self.model_size_factor = parse_f64(value)?,
            "user_cycles_per_bit" => self.user_cycles_per_bit = parse_f64(value)?,
            "server_cycles_per_bit" => self.server_cycles_per_bit = parse_f64(value)?,
            "user_minibatch_ratio" => self.user_minibatch_ratio = parse_f64(value)?,
            "server_minibatch_ratio" => self.server_minibatch_ratio = parse_f64(value)?,
            "user_local_iterations" => self.user_local_iterations = parse_int(value)?,
            "server_iterations" => self.server_iterations = parse_int(value)?,
            "rcond_threshold" => self.rcond_threshold = parse_f64(value)?,
            "particle_count" => self.particle_count = parse_int(value)?,
            "pso_iterations" => self.pso_iterations = parse_int(value)?,
            "cognitive_factor" => self.cognitive_factor = parse_f64(value)?,
            "social_factor" => self.social_factor = parse_f64(value)?,
            "inertia_max" => self.inertia_max = parse_f64(value)?,
            "inertia_min" => self.inertia_min = parse_f64(value)?,
            "penalty_latency" => self.penalty_latency = parse_f64(value)?,
            "penalty_distance" => self.penalty_distance = parse_f64(value)?,
            "velocity_clamp_m" => {
                self.velocity_clamp = match value.trim() {
                    "auto" => None,
                    v => Some(parse_f64(v)?),
                }
            }
            "per_coordinate_random" => self.per_coordinate_random = parse_bool(value)?,
            "outer_iterations" => self.outer_iterations = parse_int(value)?,
            "allocation_tolerance" => self.allocation_tolerance = parse_f64(value)?,
            "rounding" => {
                let v = value.trim();
                self.rounding_threshold = if v == "continuous" {
                    None
                } else if let Some(t) = v.strip_prefix("threshold:") {
                    Some(parse_f64(t)?)
                } else {
                    return Err(format!("expected `continuous` or `threshold:<value>`, got `{v}`"));
                }
            }
            "rng_seed" => self.rng_seed = parse_int(value)?,
            "parallel" => self.parallel = parse_bool(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Textual value of one key, in config-file units.
    pub fn get(&self, key: &str) -> Option<String> {
        let pair = |(a, b): (f64, f64)| format!("{a}, {b}");
        Some(match key {
            "antenna_count" => self.antenna_count.to_string(),
            "user_count" => self.user_count.to_string(),
            "paths_per_user" => self.paths_per_user.to_string(),
            "wavelength_m" => self.wavelength.to_string(),
            "region_half_width_m" => self.region_half_width.to_string(),
            "min_spacing_m" => self.min_spacing.to_string(),
            "data_size_kb" => pair((bits_to_kb(self.data_size_range.0), bits_to_kb(self.data_size_range.1))),
            "local_cpu_hz" => pair(self.local_cpu_range),
            "aoa_range_rad" => pair(self.aoa_range),
            "user_distance_m" => pair(self.user_distance_range),
            "reference_gain_db" => self.reference_gain_db.to_string(),
            "path_loss_exponent" => self.path_loss_exponent.to_string(),
            "server_max_frequency_hz" => self.server_max_frequency.to_string(),
            "transmit_power_dbm" => self
                .transmit_power_dbm
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(", "),
            "noise_psd_dbm_per_hz" => self.noise_psd_dbm_per_hz.to_string(),
            "bandwidth_hz" => self.bandwidth.to_string(),
            "model_size_factor" => self.model_size_factor.to_string(),
            "user_cycles_per_bit" => self.user_cycles_per_bit.to_string(),
            "server_cycles_per_bit" => self.server_cycles_per_bit.to_string(),
            "user_minibatch_ratio" => self.user_minibatch_ratio.to_string(),
            "server_minibatch_ratio" => self.server_minibatch_ratio.to_string(),
            "user_local_iterations" => self.user_local_iterations.to_string(),
            "server_iterations" => self.server_iterations.to_string(),
            "rcond_threshold" => self.rcond_threshold.to_string(),
            "particle_count" => self.particle_count.to_string(),
            "pso_iterations" => self.pso_iterations.to_string(),
            "cognitive_factor" => self.cognitive_factor.to_string(),
            "social_factor" => self.social_factor.to_string(),
            "inertia_max" => self.inertia_max.to_string(),
            "inertia_min" => self.inertia_min.to_string(),
            "penalty_latency" => self.penalty_latency.to_string(),
            "penalty_distance" => self.penalty_distance.to_string(),
            "velocity_clamp_m" => self.velocity_clamp.map_or_else(|| "auto".to_string(), |v| v.to_string()),
            "per_coordinate_random" => self.per_coordinate_random.to_string(),
            "outer_iterations" => self.outer_iterations.to_string(),
            "allocation_tolerance" => self.allocation_tolerance.to_string(),
            "rounding" => self
                .rounding_threshold
                .map_or_else(|| "continuous".to_string(), |t| format!("threshold:{t}")),
            "rng_seed" => self.rng_seed.to_string(),
            "parallel" => self.parallel.to_string(),
            _ => return None,
        })
    }

    /// Parses config text; keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
            cfg.set(key, value).map_err(|message| ConfigError::Parse {
                line,
                message: format!("{key}: {message}"),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("every listed key has a value"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Validation(msg));
        if self.user_count == 0 {
            return fail("user_count >= 1".into());
        }
        if self.user_count > self.antenna_count {
            return fail(format!(
                "N <= M violated: user_count {} exceeds antenna_count {}",
                self.user_count, self.antenna_count
            ));
        }
        if self.paths_per_user == 0 {
            return fail("paths_per_user >= 1".into());
        }
        for (name, v) in [
            ("wavelength_m", self.wavelength),
            ("region_half_width_m", self.region_half_width),
            ("min_spacing_m", self.min_spacing),
            ("path_loss_exponent", self.path_loss_exponent),
            ("server_max_frequency_hz", self.server_max_frequency),
            ("bandwidth_hz", self.bandwidth),
            ("model_size_factor", self.model_size_factor),
            ("user_cycles_per_bit", self.user_cycles_per_bit),
            ("server_cycles_per_bit", self.server_cycles_per_bit),
            ("rcond_threshold", self.rcond_threshold),
            ("allocation_tolerance", self.allocation_tolerance),
            ("penalty_latency", self.penalty_latency),
            ("penalty_distance", self.penalty_distance),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.min_spacing > 2.0 * self.region_half_width {
            return fail("d0 <= 2A violated: min_spacing_m exceeds the region width".into());
        }
        for (name, (lo, hi)) in [
            ("data_size_kb", self.data_size_range),
            ("local_cpu_hz", self.local_cpu_range),
            ("user_distance_m", self.user_distance_range),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                return fail(format!("{name} must satisfy 0 < low <= high, got ({lo}, {hi})"));
            }
        }
        if !(self.aoa_range.0 <= self.aoa_range.1) {
            return fail("aoa_range_rad must satisfy low <= high".into());
        }
        for (name, v) in [
            ("user_minibatch_ratio", self.user_minibatch_ratio),
            ("server_minibatch_ratio", self.server_minibatch_ratio),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if self.user_local_iterations == 0 || self.server_iterations == 0 {
            return fail("training iteration counts must be >= 1".into());
        }
        let powers = self.transmit_power_dbm.len();
        if powers != 1 && powers != self.user_count {
            return fail(format!(
                "transmit_power_dbm needs 1 or {} values, got {powers}",
                self.user_count
            ));
        }
        if self.particle_count < 2 {
            return fail("particle_count >= 2".into());
        }
        if self.outer_iterations == 0 {
            return fail("outer_iterations >= 1".into());
        }
        if !(self.cognitive_factor >= 0.0 && self.social_factor >= 0.0) {
            return fail("learning factors must be >= 0".into());
        }
        if !(self.inertia_min > 0.0 && self.inertia_max >= self.inertia_min) {
            return fail("inertia_max >= inertia_min > 0 violated".into());
        }
        if let Some(v) = self.velocity_clamp {
            if !(v > 0.0) {
                return fail("velocity_clamp_m must be positive".into());
            }
        }
        if let Some(t) = self.rounding_threshold {
            if !(t > 0.0 && t < 1.0) {
                return fail(format!("rounding threshold must lie in (0, 1), got {t}"));
            }
        }
        Ok(())
    }

    pub fn transmit_power_watts(&self, user: usize) -> f64 {
        let dbm = if self.transmit_power_dbm.len() == 1 {
            self.transmit_power_dbm[0]
        } else {
            self.transmit_power_dbm[user]
        };
        dbm_to_watts(dbm)
    }

    /// Noise power over the configured bandwidth, watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_per_hz) * self.bandwidth
    }

    pub fn reference_gain(&self) -> f64 {
        db_to_linear(self.reference_gain_db)
    }

    pub fn swarm_config<T: Scalar>(&self) -> SwarmConfig<T> {
        let a = T::of(self.region_half_width);
        SwarmConfig {
            particle_count: self.particle_count,
            max_iterations: self.pso_iterations,
            cognitive_factor: T::of(self.cognitive_factor),
            social_factor: T::of(self.social_factor),
            inertia_max: T::of(self.inertia_max),
            inertia_min: T::of(self.inertia_min),
            penalty_latency: T::of(self.penalty_latency),
            penalty_distance: T::of(self.penalty_distance),
            region_half_width: a,
            min_spacing: T::of(self.min_spacing),
            velocity_clamp: self.velocity_clamp.map_or(a / T::of(2.0), T::of),
            per_coordinate_random: self.per_coordinate_random,
            parallel: self.parallel,
        }
    }

    pub fn ippso_config<T: Scalar>(&self) -> IppsoConfig<T> {
        IppsoConfig {
            outer_iterations: self.outer_iterations,
            swarm: self.swarm_config(),
            allocation_tolerance: T::of(self.allocation_tolerance),
            rounding_mode: self
                .rounding_threshold
                .map_or(RoundingMode::Continuous, |t| RoundingMode::Threshold(T::of(t))),
            rng_seed: self.rng_seed,
        }
    }
}

/// Loads a config file. The literal path `default` yields the built-in
/// defaults without touching the filesystem.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    if path.as_os_str() == "default" && !path.exists() {
        return Ok(ScenarioConfig::default());
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::parse(&text)
}

/// One sampled problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInstance<T> {
    pub antenna_count: usize,
    pub users: Vec<UserProfile<T>>,
    pub channel_specs: Vec<UserChannelSpec<T>>,
    pub server: ServerProfile<T>,
    pub link: LinkBudget<T>,
    pub region_half_width: T,
    pub min_spacing: T,
    /// Per-user caps, the local-only latency at the reference array.
    pub latency_caps: Vec<T>,
}

impl<T: Scalar> ScenarioInstance<T> {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn noise_power(&self) -> T {
        self.link.noise_power
    }

    pub fn reference_array(&self) -> Result<Vec<PlanarPosition<T>>, ScenarioError> {
        reference_array(self.antenna_count, self.min_spacing, self.region_half_width)
    }

    /// Local-only latency of every user with antennas at the reference array.
    pub fn reference_local_latencies(&self) -> Result<Vec<T>, ScenarioError> {
        let rates = self.link.rates(&self.reference_array()?, &self.channel_specs)?;
        Ok(self
            .users
            .iter()
            .zip(&rates)
            .map(|(u, r)| local_latency(u) + upload_latency(u, *r).expect("ZF rates are positive"))
            .collect())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.user_count() > self.antenna_count {
            return Err(ConfigError::Validation(format!(
                "N <= M violated: {} users, {} antennas",
                self.user_count(),
                self.antenna_count
            )));
        }
        if self.channel_specs.len() != self.user_count() || self.latency_caps.len() != self.user_count() {
            return Err(ConfigError::Validation("per-user vectors disagree in length".into()));
        }
        Ok(())
    }
}

/// Fixed antenna array used by the baselines: a uniform grid centred at the
/// origin with pitch `spacing`. Exact factorisations `rows x cols = M` are
/// preferred, most square first; otherwise the smallest square-ish grid
/// holding `M` is filled row by row.
pub fn reference_array<T: Scalar>(
    antennas: usize,
    spacing: T,
    half_width: T,
) -> Result<Vec<PlanarPosition<T>>, ScenarioError> {
    let fits = |rows: usize, cols: usize| {
        let span = |k: usize| spacing * T::of((k.saturating_sub(1)) as f64) / T::of(2.0);
        span(cols) <= half_width && span(rows) <= half_width
    };
    let mut shape = None;
    for rows in (1..=antennas).rev() {
        if antennas.is_multiple_of(rows) {
            let cols = antennas / rows;
            if rows <= cols && fits(rows, cols) {
                shape = Some((rows, cols));
                break;
            }
        }
    }
    if shape.is_none() {
        let cols = (antennas as f64).sqrt().ceil() as usize;
        let rows = antennas.div_ceil(cols.max(1));
        if fits(rows, cols) {
            shape = Some((rows, cols));
        }
    }
    let (rows, cols) = shape.ok_or(ScenarioError::ArrayDoesNotFit {
        antennas,
        spacing: spacing.as_f64(),
        half_width: half_width.as_f64(),
    })?;
    let offset = |k: usize, n: usize| spacing * (T::of(k as f64) - T::of((n - 1) as f64) / T::of(2.0));
    Ok((0..antennas)
        .map(|i| PlanarPosition::new(offset(i % cols, cols), offset(i / cols, rows)))
        .collect())
}

/// Circularly symmetric complex Gaussian draw with total variance `variance`.
pub fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex<f64> {
    let normal = Normal::new(0.0, (variance / 2.0).sqrt()).expect("finite non-negative variance");
    Complex::new(normal.sample(rng), normal.sample(rng))
}

/// Draws users and channels for `config` deterministically from `seed`.
///
/// Draws are made user by user, so instances with the same seed and user
/// count share users regardless of the antenna count.
pub fn sample_scenario<T: Scalar>(config: &ScenarioConfig, seed: u64) -> Result<ScenarioInstance<T>, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = config.paths_per_user;
    let rho = config.reference_gain();
    let mut users = Vec::with_capacity(config.user_count);
    let mut specs = Vec::with_capacity(config.user_count);
    for n in 0..config.user_count {
        let data = rng.random_range(config.data_size_range.0..=config.data_size_range.1);
        let f_loc = rng.random_range(config.local_cpu_range.0..=config.local_cpu_range.1);
        let distance = rng.random_range(config.user_distance_range.0..=config.user_distance_range.1);
        let mut el = Vec::with_capacity(l);
        let mut az = Vec::with_capacity(l);
        let mut gains = Vec::with_capacity(l);
        let variance = rho * distance.powf(-config.path_loss_exponent) / l as f64;
        for _ in 0..l {
            el.push(T::of(rng.random_range(config.aoa_range.0..=config.aoa_range.1)));
            az.push(T::of(rng.random_range(config.aoa_range.0..=config.aoa_range.1)));
            let g = complex_gaussian(&mut rng, variance);
            gains.push(Complex::new(T::of(g.re), T::of(g.im)));
        }
        users.push(UserProfile {
            cycles_per_bit: T::of(config.user_cycles_per_bit),
            data_size: T::of(data),
            minibatch_ratio: T::of(config.user_minibatch_ratio),
            local_iterations: config.user_local_iterations,
            local_cpu_frequency: T::of(f_loc),
            model_size_factor: T::of(config.model_size_factor),
        });
        specs.push(UserChannelSpec::new(
            el,
            az,
            gains,
            T::of(config.transmit_power_watts(n)),
            T::of(distance),
        )?);
    }
    let mut instance = ScenarioInstance {
        antenna_count: config.antenna_count,
        users,
        channel_specs: specs,
        server: ServerProfile {
            cycles_per_bit: T::of(config.server_cycles_per_bit),
            minibatch_ratio: T::of(config.server_minibatch_ratio),
            server_iterations: config.server_iterations,
            max_total_frequency: T::of(config.server_max_frequency),
        },
        link: LinkBudget {
            wavelength: T::of(config.wavelength),
            noise_power: T::of(config.noise_power()),
            bandwidth: T::of(config.bandwidth),
            rcond_threshold: T::of(config.rcond_threshold),
        },
        region_half_width: T::of(config.region_half_width),
        min_spacing: T::of(config.min_spacing),
        latency_caps: Vec::new(),
    };
    instance.latency_caps = instance.reference_local_latencies()?;
    Ok(instance)
}
