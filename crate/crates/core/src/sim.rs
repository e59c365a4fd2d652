//! Seeded Monte Carlo oracle and classifier state machines.
//!
//! Everything here is reproducible: a base seed plus a trial index select an
//! independent ChaCha stream (same key, stream = trial index), so trials can
//! run in any order or in parallel without changing a single draw.
//!
//! The empirical estimators mirror the aggregation domain of the closed form
//! they validate: sums of linear power for the Rice / non-central
//! chi-squared route, sums of decibel RSSI for the lognormal route.

use crate::episode::{DecisionPolicy, Model};
use crate::error::{Error, Result};
use crate::propagation::{
    decision_threshold, CrowdLayout, FadingModel, LognormalFading, PropagationConfig, RiceFading,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Deterministic per-trial generator: one ChaCha8 key per experiment seed,
/// one stream per trial index.
pub fn trial_rng(base_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trial);
    rng
}

/// One scripted sample of a contact episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSample {
    pub time_s: f64,
    pub distance_m: f64,
    /// Relative heading carried along for the pose rules (degrees).
    pub heading_deg: f64,
}

/// A scripted relative-motion episode. Distance is piecewise constant: each
/// sample holds from its time until the next.
#[derive(Debug, Clone)]
pub struct Episode {
    pub schedule: Vec<EpisodeSample>,
    /// Duration of the episode (s); the last sample holds until this time.
    pub duration_s: f64,
    /// Cadence at which the script was sampled, kept for trace export (s).
    pub measurement_period_s: f64,
}

impl Episode {
    pub fn new(
        schedule: Vec<EpisodeSample>,
        duration_s: f64,
        measurement_period_s: f64,
    ) -> Result<Self> {
        if schedule.is_empty() {
            return Err(Error::domain("episode: empty schedule"));
        }
        for pair in schedule.windows(2) {
            if pair[1].time_s <= pair[0].time_s {
                return Err(Error::config("episode: times must be strictly increasing"));
            }
        }
        if schedule.iter().any(|s| !(s.distance_m > 0.0)) {
            return Err(Error::config("episode: distances must be positive"));
        }
        if !(duration_s > schedule[0].time_s) {
            return Err(Error::config("episode: duration must exceed the first sample time"));
        }
        Ok(Self { schedule, duration_s, measurement_period_s })
    }

    /// Two people standing still at a fixed distance.
    pub fn constant_distance(distance_m: f64, duration_s: f64, period_s: f64) -> Result<Self> {
        Self::new(
            vec![EpisodeSample { time_s: 0.0, distance_m, heading_deg: 0.0 }],
            duration_s,
            period_s,
        )
    }

    /// Distance at time `t` (step interpolation of the script).
    pub fn distance_at(&self, t: f64) -> f64 {
        let mut d = self.schedule[0].distance_m;
        for s in &self.schedule {
            if s.time_s <= t {
                d = s.distance_m;
            } else {
                break;
            }
        }
        d
    }
}

/// Draw one RSSI value at distance `d` under the given fading law.
pub fn sample_rssi<R: Rng + ?Sized>(
    fading: &FadingModel,
    cfg: &PropagationConfig,
    d_m: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::domain("sample_rssi: distance must be > 0"));
    }
    let path = cfg.tx_power_dbm - cfg.path_loss_exponent * 10.0 * d_m.log10();
    match fading {
        FadingModel::Rice(rice) => {
            let gamma = sample_rice_power(rice, rng);
            Ok(path + 10.0 * gamma.log10())
        }
        FadingModel::Lognormal(logn) => {
            let eta = sample_eta(logn, rng);
            Ok(path + eta)
        }
    }
}

/// One draw of the Rice fading power: `(X + sqrt(gamma_r))^2 + Y^2` with
/// `X, Y ~ N(0, sigma_r_sq)`, a non-central chi-squared with 2 degrees of
/// freedom and first moment `gamma_r + 2 sigma_r_sq`.
pub fn sample_rice_power<R: Rng + ?Sized>(rice: &RiceFading, rng: &mut R) -> f64 {
    let sd = rice.sigma_r_sq.sqrt();
    let normal = Normal::new(0.0, sd).expect("validated sigma");
    let x = normal.sample(rng) + rice.gamma_r.sqrt();
    let y = normal.sample(rng);
    x * x + y * y
}

fn sample_eta<R: Rng + ?Sized>(logn: &LognormalFading, rng: &mut R) -> f64 {
    Normal::new(logn.mean_eta_db, logn.sigma_db)
        .expect("validated sigma")
        .sample(rng)
}

/// Mean linear fading gain, used for power-domain thresholds.
fn mean_linear_gain(fading: &FadingModel) -> f64 {
    match fading {
        FadingModel::Rice(r) => r.mean_power(),
        FadingModel::Lognormal(l) => {
            let ln_scale = l.sigma_db * std::f64::consts::LN_10 / 10.0;
            10f64.powf(l.mean_eta_db / 10.0) * (0.5 * ln_scale * ln_scale).exp()
        }
    }
}

/// Empirical proportion with its Wilson 95% confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalProbability {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub trials: u64,
}

impl EmpiricalProbability {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = 1.959_963_984_540_054; // 97.5% normal quantile
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self { p_hat: p, lo: (center - half).max(0.0), hi: (center + half).min(1.0), trials }
    }

    /// Binomial standard error of the estimate at its own `p_hat`.
    pub fn standard_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

/// Empirical probability that the `n`-measurement aggregate at distance `d`
/// falls on the contact side of the threshold.
///
/// Rice aggregates linear power against `gamma_c (d/d_c)^nu`; lognormal
/// aggregates decibel RSSI against `n * Theta`. This is the Monte Carlo
/// counterpart of [`crate::propagation::rice_exceedance`] and
/// [`crate::propagation::lognormal_exceedance`].
pub fn estimate_pi_empirical(
    fading: &FadingModel,
    cfg: &PropagationConfig,
    n: u32,
    d_m: f64,
    trials: u64,
    seed: u64,
) -> Result<EmpiricalProbability> {
    if trials < 1000 {
        return Err(Error::domain("estimate_pi_empirical: need at least 1000 trials"));
    }
    if n == 0 || !(d_m > 0.0) {
        return Err(Error::domain("estimate_pi_empirical: need n >= 1 and d > 0"));
    }
    let ratio = d_m / cfg.critical_distance_m;
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let exceeds = match fading {
                FadingModel::Rice(rice) => {
                    let mut sum = 0.0;
                    for _ in 0..n {
                        sum += sample_rice_power(rice, &mut rng);
                    }
                    let gamma_c = n as f64 * rice.mean_power();
                    sum >= gamma_c * ratio.powf(cfg.path_loss_exponent)
                }
                FadingModel::Lognormal(logn) => {
                    let mut sum = 0.0;
                    for _ in 0..n {
                        sum += sample_eta(logn, &mut rng) - logn.mean_eta_db;
                    }
                    sum >= n as f64 * cfg.path_loss_exponent * 10.0 * ratio.log10()
                }
            };
            exceeds as u64
        })
        .sum();
    Ok(EmpiricalProbability::from_counts(successes, trials))
}

/// Episode-level verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pending,
    C1,
    NotC1,
}

/// One elementary decision in a classifier trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceEntry {
    pub time_s: f64,
    pub distance_m: f64,
    /// Aggregated statistic for this decision (dB sum, or dB-scaled power
    /// sum for Model A).
    pub statistic: f64,
    pub threshold: f64,
    pub decided_c1: bool,
}

/// Classifier accumulator state.
#[derive(Debug, Clone)]
pub struct ClassifierState {
    pub policy: DecisionPolicy,
    pub accumulated_rssi: f64,
    pub interval_count: u32,
    pub c1_hits: u32,
    pub verdict: Verdict,
}

/// Outcome of running a classifier over an episode.
#[derive(Debug, Clone)]
pub struct ClassifierOutcome {
    pub verdict: Verdict,
    pub c1_hits: u32,
    pub intervals: u32,
    /// Model B compatible-time accumulator (s).
    pub compatible_time_s: f64,
    pub trace: Vec<TraceEntry>,
}

/// Run one classifier over a scripted episode with fresh fading draws.
///
/// - Model A: an elementary decision every 15 s from `n` power measurements;
///   the verdict is `C1` once `x0` decisions succeeded.
/// - Model B: a timer starts at the first positive decision; positive
///   decision periods accumulate and the verdict is `C1` iff at least 15
///   minutes accumulated by episode end.
/// - Model C: `n` RSSI values are summed per interval and compared against
///   `n * Theta`; the verdict is `C1` at the `x0`-th interval hit.
pub fn run_classifier(
    episode: &Episode,
    policy: &DecisionPolicy,
    fading: &FadingModel,
    cfg: &PropagationConfig,
    seed: u64,
) -> Result<ClassifierOutcome> {
    if episode.duration_s < policy.interval_seconds {
        return Err(Error::domain("run_classifier: episode shorter than one interval"));
    }
    let mut rng = trial_rng(seed, 0);
    let mean_eta = match fading {
        FadingModel::Rice(_) => 0.0,
        FadingModel::Lognormal(l) => l.mean_eta_db,
    };
    let theta = decision_threshold(cfg, mean_eta);
    let n = policy.n;
    let measurement_period = policy.interval_seconds / n as f64;

    let mut state = ClassifierState {
        policy: *policy,
        accumulated_rssi: 0.0,
        interval_count: 0,
        c1_hits: 0,
        verdict: Verdict::Pending,
    };
    let mut trace = Vec::new();
    let mut compatible_time = 0.0;

    let intervals = (episode.duration_s / policy.interval_seconds).floor() as u32;
    for interval in 0..intervals {
        let t0 = interval as f64 * policy.interval_seconds;
        state.accumulated_rssi = 0.0;
        let mut power_sum = 0.0;
        let mut mid_distance = episode.distance_at(t0);
        for i in 0..n {
            let t = t0 + i as f64 * measurement_period;
            let d = episode.distance_at(t);
            if i == n / 2 {
                mid_distance = d;
            }
            let rssi = sample_rssi(fading, cfg, d, &mut rng)?;
            state.accumulated_rssi += rssi;
            power_sum += 10f64.powf(rssi / 10.0);
        }
        let (statistic, threshold, hit) = match policy.model {
            Model::A => {
                // power-domain aggregation; threshold is n times the mean
                // received power at the critical distance
                let dc = cfg.critical_distance_m;
                let mean_rx = 10f64.powf(cfg.tx_power_dbm / 10.0) * mean_linear_gain(fading)
                    / dc.powf(cfg.path_loss_exponent);
                let thr = n as f64 * mean_rx;
                (10.0 * power_sum.log10(), 10.0 * thr.log10(), power_sum >= thr)
            }
            Model::B | Model::C => {
                let thr = n as f64 * theta;
                (state.accumulated_rssi, thr, state.accumulated_rssi >= thr)
            }
        };
        state.interval_count += 1;
        trace.push(TraceEntry {
            time_s: t0 + policy.interval_seconds,
            distance_m: mid_distance,
            statistic,
            threshold,
            decided_c1: hit,
        });
        if hit {
            state.c1_hits += 1;
            // Model B: compatible time accrues per positive decision period
            compatible_time += policy.interval_seconds;
        }
        if matches!(policy.model, Model::A | Model::C)
            && state.c1_hits >= policy.x0
            && state.verdict == Verdict::Pending
        {
            state.verdict = Verdict::C1;
        }
    }

    let verdict = match policy.model {
        Model::A | Model::C => {
            if state.verdict == Verdict::C1 {
                Verdict::C1
            } else {
                Verdict::NotC1
            }
        }
        // Model B: compatible time accumulated since the first crossing
        Model::B => {
            if compatible_time >= 15.0 * 60.0 {
                Verdict::C1
            } else {
                Verdict::NotC1
            }
        }
    };
    Ok(ClassifierOutcome {
        verdict,
        c1_hits: state.c1_hits,
        intervals,
        compatible_time_s: compatible_time,
        trace,
    })
}

impl ClassifierOutcome {
    /// Export the decision trace as CSV: one row per elementary decision
    /// with the episode verdict repeated in the last column.
    pub fn write_trace_csv(&self, n: u32, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let verdict = match self.verdict {
            Verdict::C1 => "C1",
            Verdict::NotC1 => "notC1",
            Verdict::Pending => "pending",
        };
        let mut out = String::from(
            "time_s,distance_m,mean_rssi_dbm,interval_sum_db,threshold_db,decided_c1,verdict\n",
        );
        for t in &self.trace {
            out.push_str(&format!(
                "{:.3},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                t.time_s,
                t.distance_m,
                t.statistic / n as f64,
                t.statistic,
                t.threshold,
                t.decided_c1 as u8,
                verdict
            ));
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Empirical crowd-averaged missed detection: for each packing radius the
/// fraction of trials whose aggregate lands on the non-contact side, then
/// the plain average over fellows.
pub fn estimate_crowd_pi_md_empirical(
    fading: &FadingModel,
    cfg: &PropagationConfig,
    n: u32,
    layout: &CrowdLayout,
    trials_per_fellow: u64,
    seed: u64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (idx, &r) in layout.radii_m.iter().enumerate() {
        let est =
            estimate_pi_empirical(fading, cfg, n, r, trials_per_fellow, seed ^ ((idx as u64) << 32))?;
        // missed detection is the complement of exceedance inside the zone
        sum += 1.0 - est.p_hat;
    }
    Ok(sum / layout.len() as f64)
}

/// Pose labels of two nearby people, in the frame whose zero direction
/// points from A to B: `heading_a = 0` means A faces B, `heading_b = 180`
/// means B faces A.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseLabel {
    /// Face to face.
    A,
    /// B behind A, facing A's back.
    B,
    /// A behind B, facing B's back.
    C,
    /// Side by side.
    D,
    /// One faces the other's side.
    E,
    /// Facing apart.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Orientation {
    Toward,
    Away,
    Side,
}

/// Pose assessment with the applied criticality rule.
#[derive(Debug, Clone, Copy)]
pub struct PoseAssessment {
    pub pose: PoseLabel,
    pub critical: bool,
    /// Distance threshold that applied to this pose (m); zero for poses that
    /// are never critical.
    pub applied_threshold_m: f64,
}

const POSE_SECTOR_HALF_WIDTH_DEG: f64 = 45.0;

fn orientation(heading_deg: f64, toward_deg: f64) -> Orientation {
    let diff = (heading_deg - toward_deg).rem_euclid(360.0);
    let diff = if diff > 180.0 { 360.0 - diff } else { diff };
    if diff <= POSE_SECTOR_HALF_WIDTH_DEG {
        Orientation::Toward
    } else if diff >= 180.0 - POSE_SECTOR_HALF_WIDTH_DEG {
        Orientation::Away
    } else {
        Orientation::Side
    }
}

/// Map a heading pair to a pose and apply the criticality rules: poses a, d
/// and e are critical inside the critical distance, pose b only inside the
/// reduced `pose_b_distance`, poses c and f never.
///
/// The sector boundaries (45 degrees to either side of the cardinal
/// directions) are a configurable default of this implementation, not a
/// measured quantity.
pub fn classify_pose(
    distance_m: f64,
    heading_a_deg: f64,
    heading_b_deg: f64,
    d_c_m: f64,
    pose_b_distance_m: f64,
) -> Result<PoseAssessment> {
    if !(distance_m > 0.0) {
        return Err(Error::domain("classify_pose: distance must be > 0"));
    }
    if !(0.0..360.0).contains(&heading_a_deg) || !(0.0..360.0).contains(&heading_b_deg) {
        return Err(Error::domain("classify_pose: headings must lie in [0, 360)"));
    }
    // A faces B along 0 degrees; B faces A along 180 degrees.
    let a = orientation(heading_a_deg, 0.0);
    let b = orientation(heading_b_deg, 180.0);
    use Orientation::*;
    let pose = match (a, b) {
        (Toward, Toward) => PoseLabel::A,
        (Away, Toward) => PoseLabel::B,
        (Toward, Away) => PoseLabel::C,
        (Side, Side) => PoseLabel::D,
        (Toward, Side) | (Side, Toward) => PoseLabel::E,
        (Away, Away) | (Away, Side) | (Side, Away) => PoseLabel::F,
    };
    let (critical, threshold) = match pose {
        PoseLabel::A | PoseLabel::D | PoseLabel::E => (distance_m < d_c_m, d_c_m),
        PoseLabel::B => (distance_m < pose_b_distance_m, pose_b_distance_m),
        PoseLabel::C | PoseLabel::F => (false, 0.0),
    };
    Ok(PoseAssessment { pose, critical, applied_threshold_m: threshold })
}
