//! Audio ranging statistics and protocol arithmetic.
//!
//! Ranging errors are Gaussian with the standard deviation of the
//! delay-locked-loop estimate, so the classification probabilities are plain
//! Gaussian tails and decay fast enough that audio false alarms are
//! negligible one personal radius outside the zone.
//!
//! The two-way exchange is self-calibrating: each device observes its own
//! transmission, so unknown transmit/receive chain delays and clock offsets
//! cancel in `tau = (dt_A + dt_B) / 2`.

use crate::error::{Error, Result};
use crate::numerics;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Signal design and protocol constants for audio ranging.
#[derive(Debug, Clone, Copy)]
pub struct AudioRangingConfig {
    /// Chip duration `T_c` in seconds.
    pub chip_duration_s: f64,
    /// Early-late correlator spacing in chips; early and late taps sit at
    /// `+/- spacing/2` chips around the prompt. The delay-variance formula
    /// has a pole at spacing 2, where the taps leave the correlation peak.
    pub correlator_spacing_chips: f64,
    /// Speed of sound in air (m/s).
    pub sound_speed_mps: f64,
    /// Carrier frequency (Hz).
    pub carrier_hz: f64,
    /// Spreading-code length in chips.
    pub code_length_chips: u32,
    /// Volume calibration target: `E_i / N_0` at 4 m (dB).
    pub calibration_esn0_db: f64,
    /// Conservative ranging resolution used for the classification curves (m).
    pub ranging_sigma_m: f64,
    /// Sample rate of the baseband simulation (Hz).
    pub sample_rate_hz: f64,
}

impl AudioRangingConfig {
    pub fn validated(self) -> Result<Self> {
        if !(self.chip_duration_s > 0.0) {
            return Err(Error::config("chip_duration_s must be > 0"));
        }
        if !(self.correlator_spacing_chips > 0.0 && self.correlator_spacing_chips < 2.0) {
            return Err(Error::config(
                "correlator_spacing_chips must lie in (0, 2); the variance formula has a pole at 2",
            ));
        }
        if !(self.sound_speed_mps > 0.0) {
            return Err(Error::config("sound_speed_mps must be > 0"));
        }
        if self.code_length_chips == 0 {
            return Err(Error::config("code_length_chips must be >= 1"));
        }
        if !(self.ranging_sigma_m > 0.0) {
            return Err(Error::config("ranging_sigma_m must be > 0"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample_rate_hz must be > 0"));
        }
        Ok(self)
    }

    /// Duration of the ranging signal in seconds.
    pub fn signal_duration_s(&self) -> f64 {
        self.code_length_chips as f64 * self.chip_duration_s
    }
}

impl Default for AudioRangingConfig {
    /// 18 kHz carrier at 1 kbaud, 350-chip code, 48 kHz sampling, volume set
    /// for 6 dB at 4 m, 5 cm conservative ranging resolution.
    fn default() -> Self {
        Self {
            chip_duration_s: 1e-3,
            correlator_spacing_chips: 1.0,
            sound_speed_mps: 343.0,
            carrier_hz: 18_000.0,
            code_length_chips: 350,
            calibration_esn0_db: 6.0,
            ranging_sigma_m: 0.05,
            sample_rate_hz: 48_000.0,
        }
    }
}

/// Networked slot arithmetic: 350 ms signal + 10 ms propagation margin
/// (4 m of sound) + 40 ms internal delay per slot.
pub const SLOT_SIGNAL_S: f64 = 0.350;
pub const SLOT_PROPAGATION_S: f64 = 0.010;
pub const SLOT_INTERNAL_S: f64 = 0.040;
pub const SLOT_DURATION_S: f64 = SLOT_SIGNAL_S + SLOT_PROPAGATION_S + SLOT_INTERNAL_S;

/// Per-device chain delays and clock state.
#[derive(Debug, Clone, Copy)]
pub struct DeviceTimingProfile {
    /// Delay from the transmit command to sound leaving the speaker (s).
    pub tx_delay_s: f64,
    /// Delay from sound at the microphone to the timestamp (s).
    pub rx_delay_s: f64,
    /// Acoustic path from own speaker to own microphone (s); 14 cm of sound
    /// by default, stored in device memory for the calibration.
    pub local_path_s: f64,
    /// Constant offset of the device clock against true time (s). Constant
    /// offsets cancel in the exchange; drift over the sub-second exchange is
    /// second order and not modelled.
    pub clock_offset_s: f64,
    /// Fixed ranging bias from speaker/microphone geometry (m).
    pub range_bias_m: f64,
}

impl DeviceTimingProfile {
    pub fn ideal() -> Self {
        Self {
            tx_delay_s: 0.0,
            rx_delay_s: 0.0,
            local_path_s: 0.14 / 343.0,
            clock_offset_s: 0.0,
            range_bias_m: 0.0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        if self.tx_delay_s < 0.0 || self.rx_delay_s < 0.0 || self.local_path_s < 0.0 {
            return Err(Error::config("device delays must be non-negative"));
        }
        Ok(self)
    }
}

/// Timestamps of one two-way exchange, each on the observing device's clock.
#[derive(Debug, Clone, Copy)]
pub struct RangingExchange {
    pub t_tx_a: f64,
    pub t_self_rx_a: f64,
    pub t_rx_a: f64,
    pub t_tx_b: f64,
    pub t_self_rx_b: f64,
    pub t_rx_b: f64,
    /// `dt_A = t_rx_A - t_self_rx_A + local_path_A`.
    pub delta_a: f64,
    /// `dt_B = t_rx_B - t_self_rx_B + local_path_B`.
    pub delta_b: f64,
}

impl RangingExchange {
    /// Propagation time recovered from the exchanged time differences.
    pub fn propagation_time_s(&self) -> f64 {
        0.5 * (self.delta_a + self.delta_b)
    }
}

/// Standard deviation of the delay-locked-loop delay estimate:
/// `sigma = T_c sqrt( D/(4 E/N0) * (1 + 3/((2 - D) E/N0)) )`
/// with `D` the correlator spacing in chips.
pub fn delay_std(cfg: &AudioRangingConfig, esn0_db: f64) -> Result<f64> {
    let spacing = cfg.correlator_spacing_chips;
    if !(spacing > 0.0 && spacing < 2.0) {
        return Err(Error::domain("delay_std: spacing must lie in (0, 2)"));
    }
    let esn0 = 10f64.powf(esn0_db / 10.0);
    if !(esn0 > 0.0) {
        return Err(Error::domain("delay_std: E/N0 must be positive"));
    }
    let var = spacing / (4.0 * esn0) * (1.0 + 3.0 / ((2.0 - spacing) * esn0));
    Ok(cfg.chip_duration_s * var.sqrt())
}

/// Missed-detection probability of audio ranging at `d <= d_c`:
/// `Q((d_c - d) / sigma)`.
pub fn pi_md_audio(sigma_m: f64, d_c_m: f64, d_m: f64) -> Result<f64> {
    if !(sigma_m > 0.0) {
        return Err(Error::domain("pi_md_audio: sigma must be > 0"));
    }
    if !(d_m > 0.0) || d_m > d_c_m {
        return Err(Error::domain(format!(
            "pi_md_audio: d = {d_m} outside (0, {d_c_m}]"
        )));
    }
    numerics::gaussian_q((d_c_m - d_m) / sigma_m)
}

/// False-alarm probability of audio ranging at `d > d_c`:
/// `Q((d - d_c) / sigma)`.
pub fn pi_fa_audio(sigma_m: f64, d_c_m: f64, d_m: f64) -> Result<f64> {
    if !(sigma_m > 0.0) {
        return Err(Error::domain("pi_fa_audio: sigma must be > 0"));
    }
    if d_m <= d_c_m {
        return Err(Error::domain(format!(
            "pi_fa_audio: d = {d_m} must exceed d_c = {d_c_m}"
        )));
    }
    numerics::gaussian_q((d_m - d_c_m) / sigma_m)
}

/// Noiseless two-way exchange between A and B at the given distance.
///
/// Returns the timestamp record and the recovered distance
/// `c_s (dt_A + dt_B) / 2 + biases`; in the noiseless case this equals the
/// true distance for every combination of chain delays and clock offsets.
pub fn two_way_exchange(
    profile_a: &DeviceTimingProfile,
    profile_b: &DeviceTimingProfile,
    distance_m: f64,
    cfg: &AudioRangingConfig,
) -> Result<(RangingExchange, f64)> {
    two_way_exchange_with_noise(profile_a, profile_b, distance_m, cfg, 0.0, &mut NoNoise)
}

/// Two-way exchange with independent Gaussian timestamp noise of standard
/// deviation `timestamp_noise_s` on each of the four receive events.
pub fn two_way_exchange_noisy<R: Rng>(
    profile_a: &DeviceTimingProfile,
    profile_b: &DeviceTimingProfile,
    distance_m: f64,
    cfg: &AudioRangingConfig,
    timestamp_noise_s: f64,
    rng: &mut R,
) -> Result<(RangingExchange, f64)> {
    let normal = Normal::new(0.0, timestamp_noise_s)
        .map_err(|e| Error::config(format!("timestamp noise: {e}")))?;
    let mut sampler = NormalNoise { normal, rng };
    two_way_exchange_with_noise(profile_a, profile_b, distance_m, cfg, timestamp_noise_s, &mut sampler)
}

trait RxNoise {
    fn sample(&mut self) -> f64;
}

struct NoNoise;

impl RxNoise for NoNoise {
    fn sample(&mut self) -> f64 {
        0.0
    }
}

struct NormalNoise<'a, R: Rng> {
    normal: Normal<f64>,
    rng: &'a mut R,
}

impl<R: Rng> RxNoise for NormalNoise<'_, R> {
    fn sample(&mut self) -> f64 {
        self.normal.sample(self.rng)
    }
}

fn two_way_exchange_with_noise(
    profile_a: &DeviceTimingProfile,
    profile_b: &DeviceTimingProfile,
    distance_m: f64,
    cfg: &AudioRangingConfig,
    _noise_s: f64,
    noise: &mut dyn RxNoise,
) -> Result<(RangingExchange, f64)> {
    if !(distance_m > 0.0) {
        return Err(Error::domain("two_way_exchange: distance must be > 0"));
    }
    let tau = distance_m / cfg.sound_speed_mps;
    // True-time event chain. A issues its transmit command at an arbitrary
    // epoch; B replies one slot later.
    let t_cmd_a = 0.100;
    let sound_a = t_cmd_a + profile_a.tx_delay_s;
    let t_cmd_b = sound_a + tau + profile_b.rx_delay_s + SLOT_DURATION_S;
    let sound_b = t_cmd_b + profile_b.tx_delay_s;

    let clock = |true_time: f64, offset: f64| true_time + offset;

    let t_tx_a = clock(t_cmd_a, profile_a.clock_offset_s);
    let t_self_rx_a = clock(
        sound_a + profile_a.local_path_s + profile_a.rx_delay_s,
        profile_a.clock_offset_s,
    ) + noise.sample();
    let t_rx_b = clock(sound_a + tau + profile_b.rx_delay_s, profile_b.clock_offset_s)
        + noise.sample();
    let t_tx_b = clock(t_cmd_b, profile_b.clock_offset_s);
    let t_self_rx_b = clock(
        sound_b + profile_b.local_path_s + profile_b.rx_delay_s,
        profile_b.clock_offset_s,
    ) + noise.sample();
    let t_rx_a = clock(sound_b + tau + profile_a.rx_delay_s, profile_a.clock_offset_s)
        + noise.sample();

    // The true-time event chain must be causal; clock readings themselves
    // may be negative under an arbitrary offset.
    for (name, t) in [("transmission A", sound_a), ("transmission B", sound_b)] {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("two_way_exchange: negative event time for {name}")));
        }
    }
    for (name, t) in [
        ("t_tx_a", t_tx_a),
        ("t_self_rx_a", t_self_rx_a),
        ("t_rx_a", t_rx_a),
        ("t_tx_b", t_tx_b),
        ("t_self_rx_b", t_self_rx_b),
        ("t_rx_b", t_rx_b),
    ] {
        if !t.is_finite() {
            return Err(Error::domain(format!("two_way_exchange: non-finite timestamp {name}")));
        }
    }

    let delta_a = t_rx_a - t_self_rx_a + profile_a.local_path_s;
    let delta_b = t_rx_b - t_self_rx_b + profile_b.local_path_s;
    let exchange = RangingExchange {
        t_tx_a,
        t_self_rx_a,
        t_rx_a,
        t_tx_b,
        t_self_rx_b,
        t_rx_b,
        delta_a,
        delta_b,
    };
    let distance = exchange.propagation_time_s() * cfg.sound_speed_mps
        + profile_a.range_bias_m
        + profile_b.range_bias_m;
    Ok((exchange, distance))
}

/// Slot plan of the networked protocol for `k` devices.
#[derive(Debug, Clone)]
pub struct NetworkSchedule {
    /// Transmit-slot start times in seconds, one per device in identifier
    /// order (the ordering is prearranged).
    pub slot_start_s: Vec<f64>,
    pub slot_duration_s: f64,
    pub cycle_duration_s: f64,
    /// Number of time differences published after the cycle: `k (k - 1)`.
    pub exchanged_values: u32,
}

/// Prearranged transmission schedule: one 400 ms slot per device.
pub fn networked_schedule(k: u32, _cfg: &AudioRangingConfig) -> Result<NetworkSchedule> {
    if k < 2 {
        return Err(Error::domain("networked_schedule: need at least 2 devices"));
    }
    let slot_start_s = (0..k).map(|i| i as f64 * SLOT_DURATION_S).collect();
    Ok(NetworkSchedule {
        slot_start_s,
        slot_duration_s: SLOT_DURATION_S,
        cycle_duration_s: k as f64 * SLOT_DURATION_S,
        exchanged_values: k * (k - 1),
    })
}

/// One timestamped event of a networked exchange, for transcript export.
#[derive(Debug, Clone)]
pub struct TranscriptEvent {
    /// True time of the event (s).
    pub time_s: f64,
    /// Device index observing or causing the event.
    pub device: usize,
    pub kind: TranscriptEventKind,
    /// Event value: a local-clock timestamp or a published time difference (s).
    pub value_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranscriptEventKind {
    /// Transmit command issued (value: local transmit timestamp).
    TxCommand,
    /// Own-beacon reception (value: local self-receive timestamp).
    SelfRx,
    /// Reception of another device's beacon (value: local timestamp).
    Rx { from: usize },
    /// Published time difference `dt_{device,to}` (value: the difference).
    PublishDelta { to: usize },
}

/// Result of one full networked ranging cycle.
#[derive(Debug, Clone)]
pub struct NetworkExchange {
    pub schedule: NetworkSchedule,
    pub events: Vec<TranscriptEvent>,
    /// `delta[i][j] = dt_{i,j}` for `i != j` (s).
    pub delta_s: Vec<Vec<f64>>,
    /// Pairwise distances recovered from
    /// `c_s (dt_{i,j} + dt_{j,i}) / 2` (m).
    pub recovered_distance_m: Vec<Vec<f64>>,
}

/// Simulate one noiseless cycle of the networked protocol for devices at the
/// given plane positions.
pub fn run_networked_exchange(
    positions_m: &[(f64, f64)],
    profiles: &[DeviceTimingProfile],
    cfg: &AudioRangingConfig,
) -> Result<NetworkExchange> {
    let k = positions_m.len();
    if k < 2 {
        return Err(Error::domain("run_networked_exchange: need at least 2 devices"));
    }
    if profiles.len() != k {
        return Err(Error::config("one timing profile per device required"));
    }
    let schedule = networked_schedule(k as u32, cfg)?;

    let dist = |i: usize, j: usize| -> f64 {
        let (xi, yi) = positions_m[i];
        let (xj, yj) = positions_m[j];
        ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt()
    };

    let mut events = Vec::new();
    // local reception timestamps: rx[i][j] = time at which i hears j's beacon
    let mut rx = vec![vec![0.0f64; k]; k];
    for (j, &slot) in schedule.slot_start_s.iter().enumerate() {
        let sound = slot + profiles[j].tx_delay_s;
        events.push(TranscriptEvent {
            time_s: slot,
            device: j,
            kind: TranscriptEventKind::TxCommand,
            value_s: slot + profiles[j].clock_offset_s,
        });
        for i in 0..k {
            if i == j {
                let t_true = sound + profiles[j].local_path_s + profiles[j].rx_delay_s;
                rx[j][j] = t_true + profiles[j].clock_offset_s;
                events.push(TranscriptEvent {
                    time_s: t_true,
                    device: j,
                    kind: TranscriptEventKind::SelfRx,
                    value_s: rx[j][j],
                });
            } else {
                let tau = dist(i, j) / cfg.sound_speed_mps;
                let t_true = sound + tau + profiles[i].rx_delay_s;
                rx[i][j] = t_true + profiles[i].clock_offset_s;
                events.push(TranscriptEvent {
                    time_s: t_true,
                    device: i,
                    kind: TranscriptEventKind::Rx { from: j },
                    value_s: rx[i][j],
                });
            }
        }
    }

    let publish_time = schedule.cycle_duration_s;
    let mut delta = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            delta[i][j] = rx[i][j] - rx[i][i] + profiles[i].local_path_s;
            events.push(TranscriptEvent {
                time_s: publish_time,
                device: i,
                kind: TranscriptEventKind::PublishDelta { to: j },
                value_s: delta[i][j],
            });
        }
    }

    let mut recovered = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                recovered[i][j] = 0.5 * (delta[i][j] + delta[j][i]) * cfg.sound_speed_mps
                    + profiles[i].range_bias_m
                    + profiles[j].range_bias_m;
            }
        }
    }

    Ok(NetworkExchange { schedule, events, delta_s: delta, recovered_distance_m: recovered })
}

/// Shell-product total false alarm for audio ranging; every factor is so
/// close to 1 that the total is negligible.
pub fn audio_total_pfa_shells(sigma_m: f64, d_c_m: f64, max_shells: u32) -> Result<f64> {
    crate::propagation::total_pfa_shells_with(
        |d| pi_fa_audio(sigma_m, d_c_m, d),
        d_c_m,
        max_shells,
    )
}
