//! Experiment configuration: the flat `key = value` text format, defaults,
//! overrides, and validation.

use std::collections::HashSet;

use crate::channel::{ChannelStatistics, PathLossParams};
use crate::error::{Error, Result};

/// Which experiment family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    SingleIrsSweepDistance,
    SingleIrsSweepM,
    MultiIrsSweepDistance,
    MultiIrsSweepM,
    BlockageSweep,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "single_irs_sweep_distance" => Some(Scenario::SingleIrsSweepDistance),
            "single_irs_sweep_m" => Some(Scenario::SingleIrsSweepM),
            "multi_irs_sweep_distance" => Some(Scenario::MultiIrsSweepDistance),
            "multi_irs_sweep_m" => Some(Scenario::MultiIrsSweepM),
            "blockage_sweep" => Some(Scenario::BlockageSweep),
        _ => None,
        }
    }

    pub fn sweeps_elements(&self) -> bool {
        matches!(self, Scenario::SingleIrsSweepM | Scenario::MultiIrsSweepM)
    }
}

/// Channel generation mode.
///
/// `Geometric` draws the full sparse-scattering channels of the deployment
/// geometry. `Statistical` draws the Rayleigh/rank-one model behind the
/// closed-form power laws: `h_d ~ CN(0, sigma_d^2 I)`,
/// `h_rk ~ CN(0, sigma_rk^2 I)`, `G_k = sqrt(N M) rho_k a_k b_k^T` with
/// `|rho_k|` fixed. The two must not be conflated: the scaling-law
/// verification is only falsifiable against the statistical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    Geometric,
    Statistical,
}

/// Beamforming scheme selected in a config `solvers` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverSelection {
    /// MRT on the direct link, ignoring all IRSs.
    NoIrs,
    /// Closed-form single-IRS solution (requires `K = 1`).
    SingleClosedForm,
    /// Near-optimal analytical multi-IRS solution.
    Analytical,
    /// SDR baseline with Gaussian randomization.
    Sdr,
    /// Received-power upper bound from the relaxed SDP (not a physical
    /// design; reported as its own curve).
    SdrBound,
}

/// One entry of the `solvers` list: a scheme plus an optional phase-shifter
/// resolution, e.g. `analytical:b=2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverChoice {
    pub tag: String,
    pub selection: SolverSelection,
    pub bits: Option<u32>,
}

impl SolverChoice {
    pub fn parse(tag: &str) -> Result<SolverChoice> {
        let (base, bits) = match tag.split_once(":b=") {
            Some((base, bits)) => {
                let b: u32 = bits.parse().map_err(|_| {
                    Error::config("solvers", format!("invalid bit count in `{tag}`"))
                })?;
                if b == 0 || b > 62 {
                    return Err(Error::config(
                        "solvers",
                        format!("bit count must be in 1..=62 in `{tag}`"),
                    ));
                }
                (base, Some(b))
            }
            None => (tag, None),
        };
        let selection = match base {
            "no-irs" => SolverSelection::NoIrs,
            "single" => SolverSelection::SingleClosedForm,
            "analytical" => SolverSelection::Analytical,
            "sdr" => SolverSelection::Sdr,
            "sdr-bound" => SolverSelection::SdrBound,
            other => {
                return Err(Error::config(
                    "solvers",
                    format!("unknown solver `{other}` (expected no-irs, single, analytical, sdr or sdr-bound)"),
                ))
            }
        };
        if selection == SolverSelection::SdrBound && bits.is_some() {
            return Err(Error::config(
                "solvers",
                "sdr-bound is not a phase design; a bit resolution does not apply",
            ));
        }
        if selection == SolverSelection::NoIrs && bits.is_some() {
            return Err(Error::config(
                "solvers",
                "no-irs uses no phase shifters; a bit resolution does not apply",
            ));
        }
        Ok(SolverChoice {
            tag: tag.to_string(),
            selection,
            bits,
        })
    }
}

/// Full description of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub channel_model: ChannelModel,
    /// Number of IRSs `K`. Blockage sweeps run every `K` from 1 to this.
    pub num_irs: usize,
    /// Horizontal BS-to-(first-)IRS distance `d_1` in meters.
    pub bs_irs_horizontal_m: f64,
    /// Horizontal distance between nearest and farthest IRS, multi-IRS only.
    pub irs_span_m: f64,
    /// Vertical offset between the IRS line and the BS-user axis.
    pub vertical_offset_m: f64,
    /// Horizontal BS-user distance `d` (fixed value for element sweeps).
    pub bs_user_horizontal_m: f64,
    pub num_bs_antennas: usize,
    /// IRS panel rows `M_z` (fixed value for distance sweeps).
    pub ura_rows: usize,
    /// IRS panel columns `M_y`.
    pub ura_cols: usize,
    /// Element spacing over wavelength for both arrays.
    pub element_spacing: f64,
    pub channel_stats: ChannelStatistics,
    pub transmit_power_dbm: f64,
    pub noise_power_dbm: f64,
    /// Throughput threshold `tau` for outage counting, bits/s/Hz.
    pub outage_threshold: f64,
    pub solvers: Vec<SolverChoice>,
    /// Sweep values: meters, panel rows, or blockage probabilities
    /// depending on the scenario. Must be strictly monotone.
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Constant link blockage probability applied in non-blockage
    /// scenarios (0 disables blockage entirely).
    pub blockage_prob: f64,
    pub sdr_randomizations: usize,
    /// Statistical model: per-IRS entry deviation of `h_rk` (length K).
    pub stat_sigma_r: Vec<f64>,
    /// Statistical model: per-entry deviation of `h_d`.
    pub stat_sigma_d: f64,
    /// Statistical model: fixed `|rho_k|` of the BS-IRS LOS gains.
    pub stat_rho_abs: Vec<f64>,
}

impl Default for ExperimentConfig {
    /// Paper-style single-IRS deployment: N = 64 ULA, 10 x 20 panel,
    /// IRS 119 m from the BS with 0.6 m vertical offset, 30 dBm transmit
    /// power over -90 dBm noise.
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::SingleIrsSweepDistance,
            channel_model: ChannelModel::Geometric,
            num_irs: 1,
            bs_irs_horizontal_m: 119.0,
            irs_span_m: 30.0,
            vertical_offset_m: 0.6,
            bs_user_horizontal_m: 119.0,
            num_bs_antennas: 64,
            ura_rows: 20,
            ura_cols: 10,
            element_spacing: 0.5,
            channel_stats: ChannelStatistics::mmwave_28ghz(),
            transmit_power_dbm: 30.0,
            noise_power_dbm: -90.0,
            outage_threshold: 0.5,
            solvers: vec![SolverChoice::parse("analytical").expect("valid tag")],
            sweep_values: vec![119.0],
            trials: 1000,
            seed: 1,
            blockage_prob: 0.0,
            sdr_randomizations: 1000,
            stat_sigma_r: Vec::new(),
            stat_sigma_d: 1.0,
            stat_rho_abs: Vec::new(),
        }
    }
}

/// dBm to linear watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ExperimentConfig {
    /// Parses the flat `key = value` config format. `#` starts a comment,
    /// blank lines are ignored, keys may appear once. Unknown keys are
    /// errors.
    pub fn from_str(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, "duplicate key"));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override (later wins), as from the CLI.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (key, value) = kv.split_once('=').ok_or_else(|| {
            Error::config("override", format!("expected `key=value`, got `{kv}`"))
        })?;
        self.set(key.trim(), value.trim())
    }

    /// Sets a single configuration key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
        }
        fn list(key: &str, value: &str) -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|v| num::<f64>(key, v.trim()))
                .collect()
        }
        match key {
            "scenario" => {
                self.scenario = Scenario::parse(value)
                    .ok_or_else(|| Error::config(key, format!("unknown scenario `{value}`")))?;
            }
            "channel_model" => {
                self.channel_model = match value {
                    "geometric" => ChannelModel::Geometric,
                    "statistical" => ChannelModel::Statistical,
                    _ => {
                        return Err(Error::config(
                            key,
                            format!("expected geometric or statistical, got `{value}`"),
                        ))
                    }
                };
            }
            "num_irs" => self.num_irs = num(key, value)?,
            "bs_irs_horizontal_m" => self.bs_irs_horizontal_m = num(key, value)?,
            "irs_span_m" => self.irs_span_m = num(key, value)?,
            "vertical_offset_m" => self.vertical_offset_m = num(key, value)?,
            "bs_user_horizontal_m" => self.bs_user_horizontal_m = num(key, value)?,
            "num_bs_antennas" => self.num_bs_antennas = num(key, value)?,
            "ura_rows" => self.ura_rows = num(key, value)?,
            "ura_cols" => self.ura_cols = num(key, value)?,
            "element_spacing" => self.element_spacing = num(key, value)?,
            "num_paths_bs_user" => self.channel_stats.num_paths_bs_user = num(key, value)?,
            "num_paths_irs_user" => self.channel_stats.num_paths_irs_user = num(key, value)?,
            "num_paths_bs_irs" => self.channel_stats.num_paths_bs_irs = num(key, value)?,
            "rician_factor_db" => self.channel_stats.rician_factor_db = num(key, value)?,
            "los_intercept_db" => self.channel_stats.los_pathloss.intercept_db = num(key, value)?,
            "los_exponent" => self.channel_stats.los_pathloss.exponent = num(key, value)?,
            "los_shadow_sigma_db" => {
                self.channel_stats.los_pathloss.shadow_sigma_db = num(key, value)?
            }
            "nlos_intercept_db" => {
                self.channel_stats.nlos_pathloss.intercept_db = num(key, value)?
            }
            "nlos_exponent" => self.channel_stats.nlos_pathloss.exponent = num(key, value)?,
            "nlos_shadow_sigma_db" => {
                self.channel_stats.nlos_pathloss.shadow_sigma_db = num(key, value)?
            }
            "transmit_power_dbm" => self.transmit_power_dbm = num(key, value)?,
            "noise_power_dbm" => self.noise_power_dbm = num(key, value)?,
            "outage_threshold" => self.outage_threshold = num(key, value)?,
            "solvers" => {
                self.solvers = value
                    .split(',')
                    .map(|t| SolverChoice::parse(t.trim()))
                    .collect::<Result<_>>()?;
            }
            "sweep_values" => self.sweep_values = list(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "blockage_prob" => self.blockage_prob = num(key, value)?,
            "sdr_randomizations" => self.sdr_randomizations = num(key, value)?,
            "stat_sigma_r" => self.stat_sigma_r = list(key, value)?,
            "stat_sigma_d" => self.stat_sigma_d = num(key, value)?,
            "stat_rho_abs" => self.stat_rho_abs = list(key, value)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Linear transmit power in watts.
    pub fn transmit_power_watts(&self) -> f64 {
        dbm_to_watts(self.transmit_power_dbm)
    }

    /// Linear noise power in watts.
    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::config("sweep_values", "must be nonempty"));
        }
        if self.sweep_values.len() > 1 {
            let increasing = self.sweep_values.windows(2).all(|w| w[0] < w[1]);
            let decreasing = self.sweep_values.windows(2).all(|w| w[0] > w[1]);
            if !increasing && !decreasing {
                return Err(Error::config("sweep_values", "must be strictly monotone"));
            }
        }
        if self.solvers.is_empty() {
            return Err(Error::config("solvers", "must name at least one solver"));
        }
        if self.num_irs == 0 {
            return Err(Error::config("num_irs", "must be at least 1"));
        }
        if self.num_bs_antennas == 0 {
            return Err(Error::config("num_bs_antennas", "must be at least 1"));
        }
        if self.ura_rows == 0 || self.ura_cols == 0 {
            return Err(Error::config("ura_rows/ura_cols", "must be at least 1"));
        }
        if !(self.element_spacing > 0.0) {
            return Err(Error::config("element_spacing", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.blockage_prob) {
            return Err(Error::config("blockage_prob", "must lie in [0, 1]"));
        }
        if self.sdr_randomizations == 0 {
            return Err(Error::config("sdr_randomizations", "must be at least 1"));
        }
        if !(self.outage_threshold >= 0.0) {
            return Err(Error::config("outage_threshold", "must be nonnegative"));
        }
        self.channel_stats
            .validate()
            .map_err(|e| Error::config("channel statistics", e.to_string()))?;
        match self.scenario {
            Scenario::SingleIrsSweepDistance | Scenario::SingleIrsSweepM => {
                if self.num_irs != 1 {
                    return Err(Error::config("num_irs", "single-IRS scenarios require num_irs = 1"));
                }
            }
            _ => {}
        }
        match self.scenario {
            Scenario::SingleIrsSweepDistance | Scenario::MultiIrsSweepDistance => {
                if self.sweep_values.iter().any(|&d| !(d > 0.0)) {
                    return Err(Error::config("sweep_values", "distances must be positive"));
                }
            }
            Scenario::SingleIrsSweepM | Scenario::MultiIrsSweepM => {
                if self
                    .sweep_values
                    .iter()
                    .any(|&m| !(m >= 1.0) || m.fract() != 0.0)
                {
                    return Err(Error::config(
                        "sweep_values",
                        "panel row counts must be positive integers",
                    ));
                }
            }
            Scenario::BlockageSweep => {
                if self.sweep_values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::config(
                        "sweep_values",
                        "blockage probabilities must lie in [0, 1]",
                    ));
                }
            }
        }
        if !(self.bs_irs_horizontal_m > 0.0
            && self.vertical_offset_m > 0.0
            && self.bs_user_horizontal_m > 0.0)
        {
            return Err(Error::config("geometry", "distances must be positive"));
        }
        if self.num_irs > 1 && !(self.irs_span_m > 0.0) {
            return Err(Error::config("irs_span_m", "must be positive for num_irs > 1"));
        }
        if self.channel_model == ChannelModel::Statistical {
            if self.stat_sigma_r.len() != self.num_irs
                || self.stat_rho_abs.len() != self.num_irs
            {
                return Err(Error::config(
                    "stat_sigma_r/stat_rho_abs",
                    format!("statistical model needs exactly {} entries", self.num_irs),
                ));
            }
            if self.stat_sigma_r.iter().any(|s| !(*s > 0.0))
                || self.stat_rho_abs.iter().any(|r| !(*r > 0.0))
                || !(self.stat_sigma_d > 0.0)
            {
                return Err(Error::config(
                    "stat_sigma_r/stat_sigma_d/stat_rho_abs",
                    "statistical scales must be positive",
                ));
            }
            for c in &self.solvers {
                if c.selection == SolverSelection::NoIrs && self.stat_sigma_d <= 0.0 {
                    return Err(Error::config("stat_sigma_d", "must be positive"));
                }
            }
        }
        for c in &self.solvers {
            if c.selection == SolverSelection::SingleClosedForm && self.num_irs != 1 {
                return Err(Error::config(
                    "solvers",
                    "the `single` solver requires num_irs = 1",
                ));
            }
        }
        Ok(())
    }

    /// Statistical-model scales derived from the deployment geometry with
    /// shadowing at its mean: `sigma_r` and `|rho|` from the LOS path loss
    /// at the IRS-user/BS-IRS ranges, `sigma_d` from the NLOS path loss at
    /// the BS-user range.
    pub fn derive_statistical_scales(&mut self) {
        let (d2s, d3s): (Vec<f64>, Vec<f64>) = if self.num_irs == 1 {
            let g = crate::channel::SingleIrsGeometry {
                bs_irs_horizontal_m: self.bs_irs_horizontal_m,
                vertical_offset_m: self.vertical_offset_m,
                bs_user_horizontal_m: self.bs_user_horizontal_m,
            };
            let (d2, d3) = g.link_distances();
            (vec![d2], vec![d3])
        } else {
            let g = crate::channel::MultiIrsGeometry {
                num_irs: self.num_irs,
                bs_first_irs_horizontal_m: self.bs_irs_horizontal_m,
                irs_span_m: self.irs_span_m,
                vertical_offset_m: self.vertical_offset_m,
                bs_user_horizontal_m: self.bs_user_horizontal_m,
            };
            g.link_distances().into_iter().unzip()
        };
        let los: &PathLossParams = &self.channel_stats.los_pathloss;
        let nlos: &PathLossParams = &self.channel_stats.nlos_pathloss;
        self.stat_rho_abs = d2s.iter().map(|&d| los.variance(d, 0.0).sqrt()).collect();
        self.stat_sigma_r = d3s
            .iter()
            .map(|&d| {
                los.variance(d.max(crate::channel::MIN_PATHLOSS_DISTANCE_M), 0.0)
                    .sqrt()
            })
            .collect();
        self.stat_sigma_d = nlos.variance(self.bs_user_horizontal_m, 0.0).sqrt();
    }
}
