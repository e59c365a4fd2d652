//! Bluetooth RSSI propagation and fading statistics.
//!
//! Received power follows `P_RX = gamma / d^nu * P_TX`, so on the decibel
//! scale `RSSI = tx_dbm - nu * 10 log10(d) + eta` with `eta = 10 log10(gamma)`.
//! A contact decision compares the RSSI (or a sum of them) against the
//! threshold set at the critical distance. Two fading laws are modelled:
//!
//! - Rice: received power is non-central chi-squared with 2 degrees of
//!   freedom; sums of `n` powers have `2n` degrees of freedom and their
//!   exceedance probability is a Marcum Q-function.
//! - Lognormal: `eta` is Gaussian, so sums of `n` RSSI values stay Gaussian
//!   and both error probabilities are Gaussian tails.
//!
//! The per-decision probabilities depend on distance only through `d / d_c`;
//! the explicit threshold cancels.

use crate::error::{Error, Result};
use crate::numerics::{self, clamp_probability};

/// Path-loss model and decision geometry.
#[derive(Debug, Clone, Copy)]
pub struct PropagationConfig {
    /// Transmit power on the decibel scale, `10 log10(P_TX)` (dBm).
    pub tx_power_dbm: f64,
    /// Path-loss exponent `nu`; 2 for free space.
    pub path_loss_exponent: f64,
    /// Critical distance `d_c` separating contact from non-contact (m).
    pub critical_distance_m: f64,
}

impl PropagationConfig {
    pub fn new(tx_power_dbm: f64, path_loss_exponent: f64, critical_distance_m: f64) -> Result<Self> {
        if !(path_loss_exponent >= 1.0) {
            return Err(Error::config("path_loss_exponent must be >= 1"));
        }
        if !(critical_distance_m > 0.0) {
            return Err(Error::config("critical_distance_m must be > 0"));
        }
        Ok(Self { tx_power_dbm, path_loss_exponent, critical_distance_m })
    }
}

impl Default for PropagationConfig {
    /// Free-space decay with the 2 m critical distance.
    fn default() -> Self {
        Self { tx_power_dbm: 0.0, path_loss_exponent: 2.0, critical_distance_m: 2.0 }
    }
}

/// Rice (line-of-sight) fading of the received power.
///
/// `gamma_r` is the mean-square line-of-sight power and `sigma_r_sq` the
/// per-axis scatter variance, both in the same power units (picowatts in the
/// fitted values). The single-measurement mean power is
/// `gamma_r + 2 sigma_r_sq`.
#[derive(Debug, Clone, Copy)]
pub struct RiceFading {
    pub gamma_r: f64,
    pub sigma_r_sq: f64,
}

impl RiceFading {
    pub fn new(gamma_r: f64, sigma_r_sq: f64) -> Result<Self> {
        if !(gamma_r > 0.0) || !(sigma_r_sq > 0.0) {
            return Err(Error::config("Rice parameters must be positive"));
        }
        Ok(Self { gamma_r, sigma_r_sq })
    }

    /// Parameters fitted to chest-worn BLE measurements at 2 m.
    pub fn measured_2m() -> Self {
        Self { gamma_r: 247.0, sigma_r_sq: 9.15 }
    }

    /// First moment of a single received power draw.
    pub fn mean_power(&self) -> f64 {
        self.gamma_r + 2.0 * self.sigma_r_sq
    }
}

/// Lognormal shadowing: the decibel attenuation `eta` is Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct LognormalFading {
    /// Shadowing standard deviation of `eta` (dB).
    pub sigma_db: f64,
    /// Mean of `eta` (dB). The error probabilities do not depend on it; it
    /// only enters RSSI synthesis.
    pub mean_eta_db: f64,
}

impl LognormalFading {
    pub fn new(sigma_db: f64, mean_eta_db: f64) -> Result<Self> {
        if !(sigma_db > 0.0) {
            return Err(Error::config("sigma_db must be > 0"));
        }
        Ok(Self { sigma_db, mean_eta_db })
    }

    /// Shadowing spread fitted at 2 m (used for missed detection).
    pub fn measured_2m() -> Self {
        Self { sigma_db: 1.60, mean_eta_db: 0.0 }
    }

    /// Shadowing spread fitted at 4 m (used for false alarm).
    pub fn measured_4m() -> Self {
        Self { sigma_db: 1.97, mean_eta_db: 0.0 }
    }
}

/// Either fading law, for code that switches on the model.
#[derive(Debug, Clone, Copy)]
pub enum FadingModel {
    Rice(RiceFading),
    Lognormal(LognormalFading),
}

/// Personal radius of someone occupying one square meter.
pub const PERSONAL_RADIUS_M: f64 = 0.564_189_583_547_756_3; // 1 / sqrt(pi)

/// Discrete crowd of one person per square meter: fellow `m` stands at
/// radius `sqrt(m / pi)`, out to the last radius inside the critical zone.
#[derive(Debug, Clone)]
pub struct CrowdLayout {
    pub radii_m: Vec<f64>,
    pub critical_distance_m: f64,
}

impl CrowdLayout {
    /// Densest packing at one person per square meter.
    pub fn densest_packing(critical_distance_m: f64) -> Result<Self> {
        Self::with_density(critical_distance_m, 1.0)
    }

    /// Densest packing at `density` persons per square meter; radii scale by
    /// `1/sqrt(density)`.
    pub fn with_density(critical_distance_m: f64, density: f64) -> Result<Self> {
        if !(critical_distance_m > 0.0) || !(density > 0.0) {
            return Err(Error::config("critical distance and density must be > 0"));
        }
        let scale = density.sqrt();
        let mut radii = Vec::new();
        let mut m = 1u32;
        loop {
            let r = (m as f64 / std::f64::consts::PI).sqrt() / scale;
            if r > critical_distance_m {
                break;
            }
            radii.push(r);
            m += 1;
        }
        if radii.is_empty() {
            return Err(Error::config(
                "no packing radius fits inside the critical distance",
            ));
        }
        Ok(Self { radii_m: radii, critical_distance_m })
    }

    pub fn len(&self) -> usize {
        self.radii_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii_m.is_empty()
    }
}

/// Expected RSSI at distance `d`: `tx - nu * 10 log10(d) + mean_eta`.
pub fn expected_rssi(cfg: &PropagationConfig, d_m: f64, mean_eta_db: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::domain(format!("expected_rssi: distance {d_m} must be > 0")));
    }
    Ok(cfg.tx_power_dbm - cfg.path_loss_exponent * 10.0 * d_m.log10() + mean_eta_db)
}

/// Decision threshold: the expected RSSI at the critical distance.
pub fn decision_threshold(cfg: &PropagationConfig, mean_eta_db: f64) -> f64 {
    cfg.tx_power_dbm - cfg.path_loss_exponent * 10.0 * cfg.critical_distance_m.log10()
        + mean_eta_db
}

/// Probability that the sum of `n` Rice power draws at distance `d` exceeds
/// the decision threshold `gamma_c (d/d_c)^nu` with
/// `gamma_c = n (gamma_r + 2 sigma_r_sq)`:
/// `Q_n( sqrt(n gamma_r)/sigma_r, sqrt(gamma_c) (d/d_c)^{nu/2}/sigma_r )`.
///
/// Below the critical distance this is the detection probability; above it,
/// the false-alarm probability.
pub fn rice_exceedance(
    fading: &RiceFading,
    cfg: &PropagationConfig,
    n: u32,
    d_m: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("rice_exceedance: n must be >= 1"));
    }
    if !(d_m > 0.0) {
        return Err(Error::domain("rice_exceedance: distance must be > 0"));
    }
    let sigma = fading.sigma_r_sq.sqrt();
    let gamma_c = n as f64 * fading.mean_power();
    let a = (n as f64 * fading.gamma_r).sqrt() / sigma;
    let b = gamma_c.sqrt() * (d_m / cfg.critical_distance_m).powf(cfg.path_loss_exponent / 2.0)
        / sigma;
    numerics::marcum_q(n, a, b)
}

/// Per-decision missed detection under Rice fading, `d <= d_c`.
pub fn pi_md_rice(fading: &RiceFading, cfg: &PropagationConfig, n: u32, d_m: f64) -> Result<f64> {
    if d_m > cfg.critical_distance_m {
        return Err(Error::domain(format!(
            "pi_md_rice: d = {d_m} outside the contact zone (d_c = {})",
            cfg.critical_distance_m
        )));
    }
    Ok(clamp_probability(1.0 - rice_exceedance(fading, cfg, n, d_m)?))
}

/// Probability that the sum of `n` RSSI values at distance `d` exceeds
/// `n * Theta` under lognormal shadowing:
/// `Q( sqrt(n) nu 10 log10(d/d_c) / sigma )`.
pub fn lognormal_exceedance(
    fading: &LognormalFading,
    cfg: &PropagationConfig,
    n: u32,
    d_m: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("lognormal_exceedance: n must be >= 1"));
    }
    if !(d_m > 0.0) {
        return Err(Error::domain("lognormal_exceedance: distance must be > 0"));
    }
    let arg = (n as f64).sqrt() * cfg.path_loss_exponent * 10.0
        * (d_m / cfg.critical_distance_m).log10()
        / fading.sigma_db;
    numerics::gaussian_q(arg)
}

/// Per-decision false alarm under lognormal shadowing, `d >= d_c`.
/// Equals 1/2 exactly at the critical distance.
pub fn pi_fa_lognormal(
    fading: &LognormalFading,
    cfg: &PropagationConfig,
    n: u32,
    d_m: f64,
) -> Result<f64> {
    if d_m < cfg.critical_distance_m {
        return Err(Error::domain(format!(
            "pi_fa_lognormal: d = {d_m} inside the contact zone (d_c = {})",
            cfg.critical_distance_m
        )));
    }
    lognormal_exceedance(fading, cfg, n, d_m)
}

/// Per-decision missed detection under lognormal shadowing, `0 < d <= d_c`.
///
/// Mirrors the false alarm through `pi_md(d) = pi_fa(d_c^2 / d)`.
pub fn pi_md_lognormal(
    fading: &LognormalFading,
    cfg: &PropagationConfig,
    n: u32,
    d_m: f64,
) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::domain("pi_md_lognormal: distance must be > 0"));
    }
    if d_m > cfg.critical_distance_m {
        return Err(Error::domain(format!(
            "pi_md_lognormal: d = {d_m} outside the contact zone (d_c = {})",
            cfg.critical_distance_m
        )));
    }
    let arg = (n as f64).sqrt() * cfg.path_loss_exponent * 10.0
        * (cfg.critical_distance_m / d_m).log10()
        / fading.sigma_db;
    numerics::gaussian_q(arg)
}

/// Average a per-distance probability curve over the discrete crowd:
/// `(1/m_c) * sum_m curve(r_m)`.
pub fn crowd_average_pi_md<F>(curve: F, layout: &CrowdLayout) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if layout.is_empty() {
        return Err(Error::domain("crowd_average_pi_md: empty layout"));
    }
    let mut sum = 0.0;
    for &r in &layout.radii_m {
        sum += curve(r)?;
    }
    Ok(clamp_probability(sum / layout.len() as f64))
}

/// Total false-alarm probability against a plane packed with people outside
/// the contact zone: `1 - prod_k (1 - pi_fa_n(d_k))^{occupancy(k)}`.
///
/// Shell `k` spans `[d_c + 2 delta k, d_c + 2 delta (k+1)]` with
/// `delta = 1/sqrt(pi)`; its occupancy is the annulus area and the curve is
/// evaluated at the shell midpoint `d_c + delta (2k + 1)`.
pub fn total_pfa_shells(
    fading: &LognormalFading,
    cfg: &PropagationConfig,
    n: u32,
    max_shells: u32,
) -> Result<f64> {
    total_pfa_shells_with(
        |d| pi_fa_lognormal(fading, cfg, n, d),
        cfg.critical_distance_m,
        max_shells,
    )
}

/// Shell product over an arbitrary per-person false-alarm curve; used for
/// both the RSSI and the audio-ranging totals.
pub fn total_pfa_shells_with<F>(pi_fa: F, critical_distance_m: f64, max_shells: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if max_shells == 0 {
        return Err(Error::domain("total_pfa_shells: max_shells must be >= 1"));
    }
    let dc = critical_distance_m;
    let delta = PERSONAL_RADIUS_M;
    let mut ln_ok = 0.0f64; // log of the no-alarm probability
    for k in 0..max_shells {
        let kf = k as f64;
        let mid = dc + delta * (2.0 * kf + 1.0);
        let p = pi_fa(mid)?;
        let outer = dc + 2.0 * delta * (kf + 1.0);
        let inner = dc + 2.0 * delta * kf;
        let occupancy = std::f64::consts::PI * (outer * outer - inner * inner);
        let contribution = if p >= 1.0 {
            return Ok(1.0);
        } else {
            occupancy * (-p).ln_1p()
        };
        ln_ok += contribution;
        if contribution.abs() < 1e-12 {
            break;
        }
    }
    Ok(clamp_probability(-ln_ok.exp_m1()))
}

/// Density of the sum of `n` Rice power draws, for quadrature oracles.
///
/// The sum scaled by `sigma_r_sq` is non-central chi-squared with `2n`
/// degrees of freedom and non-centrality `n gamma_r / sigma_r_sq`.
pub fn rice_power_sum_pdf(fading: &RiceFading, n: u32, power: f64) -> Result<f64> {
    let s2 = fading.sigma_r_sq;
    let lambda = n as f64 * fading.gamma_r / s2;
    Ok(numerics::noncentral_chi2_pdf(n, lambda, power / s2)? / s2)
}
