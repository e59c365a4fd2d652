//! Flat INI-style run configuration: `[section]` headers and `key = value`
//! lines, `#`/`;` comments, every key defaulting to the fitted values the
//! library ships with. Environment variables `PROXCLASS_<SECTION>_<KEY>`
//! override file values; command-line flags override both.

use proxclass_core::audio::AudioRangingConfig;
use proxclass_core::propagation::{LognormalFading, PropagationConfig, RiceFading};
use proxclass_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub propagation: PropagationConfig,
    pub rice: RiceFading,
    pub lognormal_near: LognormalFading,
    pub lognormal_far: LognormalFading,
    pub audio: AudioRangingConfig,

    /// Diversity-table aggregation counts.
    pub table4_n_values: Vec<u32>,
    /// Performance-table grid.
    pub table_n_values: Vec<u32>,
    pub table_x0_values: Vec<u32>,
    /// Train-scenario solver inputs.
    pub k_y: f64,
    pub target_quarantines: f64,
    pub train_ratios: Vec<u32>,
    pub solver_x0_values: Vec<u32>,

    /// Monte Carlo trials and the mandatory seed for stochastic commands.
    pub trials: u64,
    pub seed: u64,

    /// Baseband experiment settings.
    pub dsp_esn0_db: f64,
    pub dsp_trials: u32,
    pub echo_offset_chips: f64,
    pub echo_amplitude: f64,

    /// Networked-protocol demo: device positions on a line and per-device
    /// chain delays / clock offsets.
    pub protocol_positions_m: Vec<f64>,
    pub protocol_tx_delay_ms: Vec<f64>,
    pub protocol_rx_delay_ms: Vec<f64>,
    pub protocol_clock_offset_s: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            propagation: PropagationConfig::default(),
            rice: RiceFading::measured_2m(),
            lognormal_near: LognormalFading::measured_2m(),
            lognormal_far: LognormalFading::measured_4m(),
            audio: AudioRangingConfig::default(),
            table4_n_values: vec![1, 6, 15, 30, 60, 120, 240, 480],
            table_n_values: vec![6, 15, 60],
            table_x0_values: vec![3, 5],
            k_y: 16.0,
            target_quarantines: 2.0,
            train_ratios: vec![1, 2, 4, 8, 12],
            solver_x0_values: vec![3, 5, 30],
            trials: 1_000_000,
            seed: 20_260_809,
            dsp_esn0_db: 6.0,
            dsp_trials: 500,
            echo_offset_chips: 6.0,
            echo_amplitude: 0.8,
            protocol_positions_m: vec![0.0, 1.5, 3.0],
            protocol_tx_delay_ms: vec![31.0, 11.0, 0.0],
            protocol_rx_delay_ms: vec![7.0, 1.0, 0.0],
            protocol_clock_offset_s: vec![1.3, -0.4, 0.0],
        }
    }
}

/// Raw `section.key -> value` map from file plus environment overrides.
#[derive(Debug, Default)]
struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(format!("line {}: unterminated section", lineno + 1)))?;
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            if section.is_empty() {
                return Err(Error::config(format!("line {}: key outside a section", lineno + 1)));
            }
            values.insert(format!("{section}.{key}"), value.trim().to_string());
        }
        Ok(Self { values })
    }

    fn apply_env(&mut self) {
        for (key, value) in std::env::vars() {
            if let Some(rest) = key.strip_prefix("PROXCLASS_") {
                if let Some((section, k)) = rest.split_once('_') {
                    self.values.insert(
                        format!("{}.{}", section.to_ascii_lowercase(), k.to_ascii_lowercase()),
                        value,
                    );
                }
            }
        }
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.values.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("{key}: expected a number, got '{v}'"))),
        }
    }

    fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.values.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("{key}: expected an integer, got '{v}'"))),
        }
    }

    fn take_u32_list(&mut self, key: &str, default: &[u32]) -> Result<Vec<u32>> {
        match self.values.remove(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::config(format!("{key}: bad integer '{s}'")))
                })
                .collect(),
        }
    }

    fn take_f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.values.remove(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::config(format!("{key}: bad number '{s}'")))
                })
                .collect(),
        }
    }
}

impl RunConfig {
    /// Load a configuration file (or the defaults when `path` is `None`),
    /// apply environment overrides, and validate every invariant.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut raw = match path {
            Some(p) => RawConfig::parse(&std::fs::read_to_string(p)?)?,
            None => RawConfig::default(),
        };
        raw.apply_env();
        let d = RunConfig::default();

        let propagation = PropagationConfig::new(
            raw.take_f64("propagation.tx_power_dbm", d.propagation.tx_power_dbm)?,
            raw.take_f64("propagation.path_loss_exponent", d.propagation.path_loss_exponent)?,
            raw.take_f64("propagation.critical_distance_m", d.propagation.critical_distance_m)?,
        )?;
        let rice = RiceFading::new(
            raw.take_f64("rice.gamma_r_pw", d.rice.gamma_r)?,
            raw.take_f64("rice.sigma_r_sq_pw", d.rice.sigma_r_sq)?,
        )?;
        let mean_eta = raw.take_f64("lognormal.mean_eta_db", 0.0)?;
        let lognormal_near = LognormalFading::new(
            raw.take_f64("lognormal.sigma_near_db", d.lognormal_near.sigma_db)?,
            mean_eta,
        )?;
        let lognormal_far = LognormalFading::new(
            raw.take_f64("lognormal.sigma_far_db", d.lognormal_far.sigma_db)?,
            mean_eta,
        )?;
        let audio = AudioRangingConfig {
            chip_duration_s: raw.take_f64("audio.chip_duration_s", d.audio.chip_duration_s)?,
            correlator_spacing_chips: raw
                .take_f64("audio.correlator_spacing_chips", d.audio.correlator_spacing_chips)?,
            sound_speed_mps: raw.take_f64("audio.sound_speed_mps", d.audio.sound_speed_mps)?,
            carrier_hz: raw.take_f64("audio.carrier_hz", d.audio.carrier_hz)?,
            code_length_chips: raw.take_u64("audio.code_length_chips", d.audio.code_length_chips as u64)?
                as u32,
            calibration_esn0_db: raw
                .take_f64("audio.calibration_esn0_db", d.audio.calibration_esn0_db)?,
            ranging_sigma_m: raw.take_f64("audio.ranging_sigma_m", d.audio.ranging_sigma_m)?,
            sample_rate_hz: raw.take_f64("audio.sample_rate_hz", d.audio.sample_rate_hz)?,
        }
        .validated()?;

        let cfg = Self {
            propagation,
            rice,
            lognormal_near,
            lognormal_far,
            audio,
            table4_n_values: raw.take_u32_list("episode.table4_n_values", &d.table4_n_values)?,
            table_n_values: raw.take_u32_list("episode.n_values", &d.table_n_values)?,
            table_x0_values: raw.take_u32_list("episode.x0_values", &d.table_x0_values)?,
            k_y: raw.take_f64("episode.k_y", d.k_y)?,
            target_quarantines: raw.take_f64("episode.target_quarantines", d.target_quarantines)?,
            train_ratios: raw.take_u32_list("episode.train_ratios", &d.train_ratios)?,
            solver_x0_values: raw.take_u32_list("episode.solver_x0_values", &d.solver_x0_values)?,
            trials: raw.take_u64("simulation.trials", d.trials)?,
            seed: raw.take_u64("simulation.seed", d.seed)?,
            dsp_esn0_db: raw.take_f64("dsp.esn0_db", d.dsp_esn0_db)?,
            dsp_trials: raw.take_u64("dsp.trials", d.dsp_trials as u64)? as u32,
            echo_offset_chips: raw.take_f64("dsp.echo_offset_chips", d.echo_offset_chips)?,
            echo_amplitude: raw.take_f64("dsp.echo_amplitude", d.echo_amplitude)?,
            protocol_positions_m: raw
                .take_f64_list("protocol.positions_m", &d.protocol_positions_m)?,
            protocol_tx_delay_ms: raw
                .take_f64_list("protocol.tx_delay_ms", &d.protocol_tx_delay_ms)?,
            protocol_rx_delay_ms: raw
                .take_f64_list("protocol.rx_delay_ms", &d.protocol_rx_delay_ms)?,
            protocol_clock_offset_s: raw
                .take_f64_list("protocol.clock_offset_s", &d.protocol_clock_offset_s)?,
        };

        if let Some((key, _)) = raw.values.into_iter().next() {
            return Err(Error::config(format!("unknown configuration key '{key}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.table4_n_values.is_empty() || self.table_n_values.is_empty() {
            return Err(Error::config("n value lists must not be empty"));
        }
        if self.table_x0_values.contains(&0) {
            return Err(Error::config("x0 values must be >= 1"));
        }
        if !(self.k_y > 0.0) || !(self.target_quarantines > 0.0) {
            return Err(Error::config("k_y and target_quarantines must be > 0"));
        }
        if self.protocol_positions_m.len() < 2 {
            return Err(Error::config("protocol needs at least 2 device positions"));
        }
        let k = self.protocol_positions_m.len();
        if self.protocol_tx_delay_ms.len() != k
            || self.protocol_rx_delay_ms.len() != k
            || self.protocol_clock_offset_s.len() != k
        {
            return Err(Error::config("protocol delay lists must match the number of positions"));
        }
        if self.dsp_trials == 0 {
            return Err(Error::config("dsp.trials must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_without_a_file() {
        let cfg = RunConfig::load(None).unwrap();
        assert_eq!(cfg.propagation.critical_distance_m, 2.0);
        assert_eq!(cfg.rice.gamma_r, 247.0);
        assert_eq!(cfg.table4_n_values.len(), 8);
    }

    #[test]
    fn file_values_override_defaults() {
        let dir = std::env::temp_dir().join("proxclass_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.ini");
        std::fs::write(
            &path,
            "# test config\n[lognormal]\nsigma_near_db = 2.5\n[simulation]\nseed = 7\n",
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.lognormal_near.sigma_db, 2.5);
        assert_eq!(cfg.seed, 7);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let dir = std::env::temp_dir().join("proxclass_cfg_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ini");
        std::fs::write(&path, "[lognormal]\nsigma_near_db = -1.0\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
        std::fs::write(&path, "[lognormal]\nno_such_key = 1\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
