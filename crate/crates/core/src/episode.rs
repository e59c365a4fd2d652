//! Decision-accumulation statistics over a contact episode.
//!
//! An elementary decision `c1` aggregates `n` measurements; the episode
//! verdict `C1` requires `x0` positive elementary decisions. This module
//! carries the closed forms that connect the per-decision error rates
//! `pi_md` / `pi_fa` to episode-level quantities: the combined missed
//! detection `p_md(x)`, the spreading probability `p_S`, the false-alarm
//! accumulation `p_fa(y)`, the expected number of undue quarantines `n_Q`,
//! the crowded-train false-alarm target solver and the performance tables.

use crate::error::{Error, Result};
use crate::numerics::{self, clamp_probability, ln_choose, Tolerance};
use crate::propagation::{
    crowd_average_pi_md, pi_md_lognormal, total_pfa_shells, CrowdLayout, LognormalFading,
    PropagationConfig,
};

/// Measurement-accumulation model.
///
/// - `A`: a decision every 15 s, `x0 = 60` of them for a verdict.
/// - `B`: a single test (`x0 = 1`) with a compatible-time accumulator.
/// - `C`: RSSI accumulated over 3- or 5-minute intervals, `x0 = 5` or `3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    A,
    B,
    C,
}

/// How elementary decisions are taken and combined for a verdict.
#[derive(Debug, Clone, Copy)]
pub struct DecisionPolicy {
    pub model: Model,
    /// Measurements aggregated into one elementary decision.
    pub n: u32,
    /// Elementary decisions required to declare a contact.
    pub x0: u32,
    /// Seconds between elementary decisions.
    pub interval_seconds: f64,
    /// Daily horizon of elementary decisions (default `24 * 4 * x0`).
    pub x_max: u32,
}

impl DecisionPolicy {
    /// Model A: one decision every 15 s, sixty of them per quarter hour.
    pub fn model_a(n: u32) -> Result<Self> {
        Self::validated(Model::A, n, 60, 15.0, None)
    }

    /// Model B: a single test (`x0 = 1`) over compatible time accumulated in
    /// 15 s decision periods.
    pub fn model_b(n: u32) -> Result<Self> {
        Self::validated(Model::B, n, 1, 15.0, None)
    }

    /// Model C: interval accumulation; `x0` must be 3 (5-minute intervals)
    /// or 5 (3-minute intervals).
    pub fn model_c(x0: u32, n: u32) -> Result<Self> {
        let interval = match x0 {
            3 => 300.0,
            5 => 180.0,
            _ => return Err(Error::config("Model C requires x0 of 3 or 5")),
        };
        Self::validated(Model::C, n, x0, interval, None)
    }

    pub fn with_x_max(mut self, x_max: u32) -> Self {
        self.x_max = x_max;
        self
    }

    fn validated(
        model: Model,
        n: u32,
        x0: u32,
        interval_seconds: f64,
        x_max: Option<u32>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n must be >= 1"));
        }
        let x_max = x_max.unwrap_or(24 * 4 * x0);
        Ok(Self { model, n, x0, interval_seconds, x_max })
    }

    /// Measurement rate `x0 * n / 900` per second.
    pub fn measurement_rate_per_s(&self) -> f64 {
        self.x0 as f64 * self.n as f64 / 900.0
    }

    /// The same rate as an exact reduced fraction of measurements per second.
    pub fn measurement_rate_fraction(&self) -> (u64, u64) {
        reduce_fraction(self.x0 as u64 * self.n as u64, 900)
    }
}

fn reduce_fraction(num: u64, den: u64) -> (u64, u64) {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let g = gcd(num, den).max(1);
    (num / g, den / g)
}

/// Distribution of the number of in-zone decision slots during a day.
#[derive(Debug, Clone)]
pub struct ContactTimeDistribution {
    /// Sorted `(count, probability)` support.
    pmf: Vec<(u32, f64)>,
}

impl ContactTimeDistribution {
    pub fn from_pmf(mut pmf: Vec<(u32, f64)>) -> Result<Self> {
        pmf.retain(|&(_, p)| p != 0.0);
        pmf.sort_by_key(|&(x, _)| x);
        if pmf.iter().any(|&(_, p)| !(p >= 0.0)) {
            return Err(Error::config("probabilities must be non-negative"));
        }
        if pmf.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::config("duplicate support point"));
        }
        let total: f64 = pmf.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self { pmf })
    }

    /// All mass on a single count.
    pub fn point_mass(x: u32) -> Self {
        Self { pmf: vec![(x, 1.0)] }
    }

    /// Uniform over `lo..=hi`.
    pub fn uniform_range(lo: u32, hi: u32) -> Result<Self> {
        if hi < lo {
            return Err(Error::config("uniform_range: hi < lo"));
        }
        let w = 1.0 / (hi - lo + 1) as f64;
        Ok(Self { pmf: (lo..=hi).map(|x| (x, w)).collect() })
    }

    /// Geometric with success probability `p`, truncated and renormalized on
    /// `0..=x_max`.
    pub fn truncated_geometric(p: f64, x_max: u32) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config("truncated_geometric: p must be in (0,1)"));
        }
        let mut pmf: Vec<(u32, f64)> =
            (0..=x_max).map(|x| (x, p * (1.0 - p).powi(x as i32))).collect();
        let total: f64 = pmf.iter().map(|&(_, q)| q).sum();
        for entry in &mut pmf {
            entry.1 /= total;
        }
        Ok(Self { pmf })
    }

    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.pmf.iter().copied()
    }

    pub fn max_support(&self) -> u32 {
        self.pmf.last().map(|&(x, _)| x).unwrap_or(0)
    }
}

/// Distribution of the number of radio-contact slots, together with the
/// average number of radio-range contacts `K_Y`.
#[derive(Debug, Clone)]
pub struct ExposureDistribution {
    pmf: Vec<(u32, f64)>,
    pub k_y: f64,
}

impl ExposureDistribution {
    pub fn from_pmf(pmf: Vec<(u32, f64)>, k_y: f64) -> Result<Self> {
        if !(k_y >= 0.0) {
            return Err(Error::config("k_y must be non-negative"));
        }
        let inner = ContactTimeDistribution::from_pmf(pmf)?;
        Ok(Self { pmf: inner.pmf, k_y })
    }

    pub fn point_mass(y: u32, k_y: f64) -> Self {
        Self { pmf: vec![(y, 1.0)], k_y }
    }

    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.pmf.iter().copied()
    }
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Combined missed detection after `x` in-zone decision slots:
/// the verdict is missed whenever fewer than `x0` detections succeed,
/// `p_md(x) = sum_{m=0}^{x0-1} C(x,m) (1-pi_md)^m pi_md^{x-m}`,
/// and equals 1 for `x < x0`.
pub fn combined_pmd(x: u32, x0: u32, pi_md: f64) -> Result<f64> {
    check_probability(pi_md, "pi_md")?;
    if x < x0 {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for m in 0..x0 {
        sum += binomial_success_term(x, m, pi_md);
    }
    Ok(clamp_probability(sum))
}

/// `C(x, m) (1 - pi)^m pi^{x - m}` in log space (binomials past x = 60 would
/// otherwise overflow; the daily horizon reaches 5760).
fn binomial_success_term(x: u32, m: u32, pi: f64) -> f64 {
    if pi == 0.0 {
        return if m == x { 1.0 } else { 0.0 };
    }
    if pi == 1.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let ln = ln_choose(x as u64, m as u64)
        + m as f64 * (-pi).ln_1p()
        + (x - m) as f64 * pi.ln();
    ln.exp()
}

/// Episode-level spreading probability and its dominant-term bound.
#[derive(Debug, Clone, Copy)]
pub struct SpreadingProbability {
    /// `K p_i sum_x p_X(x) p_md(x)`.
    pub value: f64,
    /// Factorial bound `K p_i (1-pi)^{x0-1} sum_{x'} p_X(x'+x0-1) (x0 pi)^{x'} / x'!`
    /// on the dominant `m = x0 - 1` contribution; for `pi_md << 1/x0` it
    /// bounds the full value and shows how `x0 * pi_md` drives the result.
    pub dominant_bound: f64,
}

/// Probability that a carrier keeps spreading despite tracing:
/// `p_S = K p_i sum_{x=x0}^{x_max} p_X(x) p_md(x)`.
pub fn spreading_probability(
    k_contacts: f64,
    p_i: f64,
    px: &ContactTimeDistribution,
    policy: &DecisionPolicy,
    pi_md: f64,
) -> Result<SpreadingProbability> {
    if !(k_contacts >= 0.0) {
        return Err(Error::domain("K must be non-negative"));
    }
    check_probability(p_i, "p_i")?;
    check_probability(pi_md, "pi_md")?;
    let x0 = policy.x0;
    let mut value = 0.0;
    for (x, p) in px.support() {
        if x < x0 || x > policy.x_max {
            continue;
        }
        value += p * combined_pmd(x, x0, pi_md)?;
    }
    value *= k_contacts * p_i;

    // bound: K p_i (1-pi)^{x0-1} sum_{x'>=1} p_X(x'+x0-1) (x0 pi)^{x'} / x'!
    let pi_d = 1.0 - pi_md;
    let mut bound = 0.0;
    for (x, p) in px.support() {
        if x < x0 || x > policy.x_max {
            continue;
        }
        let xp = (x - x0 + 1) as f64; // shifted index x'
        let ln_term = xp * (policy.x0 as f64 * pi_md).max(f64::MIN_POSITIVE).ln()
            - statrs::function::gamma::ln_gamma(xp + 1.0);
        bound += p * ln_term.exp();
    }
    bound *= k_contacts * p_i * pi_d.powi(x0.saturating_sub(1) as i32);
    Ok(SpreadingProbability { value, dominant_bound: bound })
}

/// `x0 * pi_md_av`, the reduction in spreading achieved by tracing.
pub fn reduction_factor(policy: &DecisionPolicy, pi_md_av: f64) -> f64 {
    policy.x0 as f64 * pi_md_av
}

/// Probability that `y` radio-contact slots produce a false verdict:
/// `m` correct detections (fewer than `x0`) plus `q` erroneous decisions
/// with `m + q >= x0`. Zero for `y < x0`. Contact-time support above `y`
/// is skipped (those slots cannot all be radio contacts).
pub fn false_alarm_given_exposure(
    y: u32,
    x0: u32,
    px: &ContactTimeDistribution,
    pi_md: f64,
    pi_fa: f64,
) -> Result<f64> {
    check_probability(pi_md, "pi_md")?;
    check_probability(pi_fa, "pi_fa")?;
    if y < x0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, px_prob) in px.support() {
        if x > y {
            continue; // inconsistent support: more contact slots than radio slots
        }
        let m_top = x.min(x0.saturating_sub(1));
        let mut inner = 0.0;
        for m in 0..=m_top {
            if x0 == 0 {
                break;
            }
            let detect = binomial_success_term(x, m, pi_md);
            if detect == 0.0 {
                continue;
            }
            let trials = y - x;
            let q_lo = x0 - m; // m <= x0 - 1, so q_lo >= 1
            if q_lo > trials {
                continue;
            }
            let mut tail = 0.0;
            for q in q_lo..=trials {
                tail += numerics::binomial_pmf(trials as u64, q as u64, pi_fa);
            }
            inner += detect * tail;
        }
        total += px_prob * inner;
    }
    Ok(clamp_probability(total))
}

/// Expected number of people unduly quarantined:
/// `n_Q = K_Y p_i sum_y p_Y(y) p_fa(y)`.
pub fn expected_quarantines(
    py: &ExposureDistribution,
    px: &ContactTimeDistribution,
    p_i: f64,
    policy: &DecisionPolicy,
    pi_md: f64,
    pi_fa: f64,
) -> Result<f64> {
    check_probability(p_i, "p_i")?;
    let mut sum = 0.0;
    for (y, p) in py.support() {
        sum += p * false_alarm_given_exposure(y, policy.x0, px, pi_md, pi_fa)?;
    }
    Ok(py.k_y * p_i * sum)
}

/// Solve `K_Y C(y, x0) pi_fa^{x0} = target` for the tolerable per-decision
/// false-alarm rate. Returns 1 when even certainty cannot reach the target.
pub fn solve_pfa_target(k_y: f64, y: u32, x0: u32, target: f64) -> Result<f64> {
    if x0 == 0 || y < x0 {
        return Err(Error::domain("solve_pfa_target: need y >= x0 >= 1"));
    }
    if !(target > 0.0) || !(k_y > 0.0) {
        return Err(Error::domain("solve_pfa_target: target and K_Y must be > 0"));
    }
    let ln_coeff = k_y.ln() + ln_choose(y as u64, x0 as u64);
    let f = |pi: f64| ln_coeff + x0 as f64 * pi.ln() - target.ln();
    if f(1.0) < 0.0 {
        return Ok(1.0); // no root in (0, 1): cap at certainty
    }
    let tol = Tolerance { abs_tol: 1e-12, rel_tol: 1e-12, max_iter: 200 };
    let root = numerics::find_root(f, 1e-12, 1.0, tol)?;
    Ok(clamp_probability(root))
}

/// Limit of the solved false-alarm target as `x0` grows with the ratio
/// `r = y / x0` held fixed: `(r-1)^{r-1} / r^r`.
pub fn pfa_target_large_x0_limit(ratio: f64) -> Result<f64> {
    if !(ratio >= 1.0) {
        return Err(Error::domain("ratio must be >= 1"));
    }
    if ratio == 1.0 {
        return Ok(1.0);
    }
    let r = ratio;
    Ok(((r - 1.0) * (r - 1.0).ln() - r * r.ln()).exp())
}

/// One row of the key-performance table.
#[derive(Debug, Clone, Copy)]
pub struct PerformanceRow {
    pub n: u32,
    pub x0: u32,
    /// `x0 * pi_md_av_n` under lognormal shadowing.
    pub reduction: f64,
    /// Shell-product total false-alarm probability for this `n`.
    pub p_fa_total: f64,
    /// Measurement rate `x0 n / 900` as an exact reduced fraction per second.
    pub rate_num: u64,
    pub rate_den: u64,
}

/// Key performance parameters over a grid of `n` and `x0` choices.
///
/// The reduction factor averages the missed-detection curve (near fit) over
/// the crowd; the total false alarm uses the far fit in the shell product.
pub fn performance_table(
    md_fading: &LognormalFading,
    fa_fading: &LognormalFading,
    cfg: &PropagationConfig,
    layout: &CrowdLayout,
    n_values: &[u32],
    x0_values: &[u32],
) -> Result<Vec<PerformanceRow>> {
    let mut rows = Vec::new();
    for &n in n_values {
        let pi_av = crowd_average_pi_md(|r| pi_md_lognormal(md_fading, cfg, n, r), layout)?;
        let p_fa_total = total_pfa_shells(fa_fading, cfg, n, 64)?;
        for &x0 in x0_values {
            let (rate_num, rate_den) = reduce_fraction(x0 as u64 * n as u64, 900);
            rows.push(PerformanceRow {
                n,
                x0,
                reduction: x0 as f64 * pi_av,
                p_fa_total,
                rate_num,
                rate_den,
            });
        }
    }
    Ok(rows)
}

/// Crowd-averaged missed detection per `n` (the diversity table).
pub fn diversity_table(
    fading: &LognormalFading,
    cfg: &PropagationConfig,
    layout: &CrowdLayout,
    n_values: &[u32],
) -> Result<Vec<(u32, f64)>> {
    n_values
        .iter()
        .map(|&n| {
            crowd_average_pi_md(|r| pi_md_lognormal(fading, cfg, n, r), layout).map(|v| (n, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
        assert!(
            (got - want).abs() <= tol,
            "{what}: got {got}, want {want} (tol {tol})"
        );
    }

    fn choose(n: u64, k: u64) -> f64 {
        if k > n {
            return 0.0;
        }
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c
    }

    #[test]
    fn policy_invariants() {
        let a = DecisionPolicy::model_a(1).unwrap();
        assert_eq!((a.x0, a.interval_seconds as u32), (60, 15));
        assert_eq!(a.x_max, 24 * 4 * 60);
        let b = DecisionPolicy::model_b(60).unwrap();
        assert_eq!(b.x0, 1);
        let c3 = DecisionPolicy::model_c(3, 60).unwrap();
        assert_eq!(c3.interval_seconds, 300.0);
        let c5 = DecisionPolicy::model_c(5, 60).unwrap();
        assert_eq!(c5.interval_seconds, 180.0);
        assert!(DecisionPolicy::model_c(4, 60).is_err());
        assert_eq!(c5.measurement_rate_fraction(), (1, 3));
        assert_close(c5.measurement_rate_per_s(), 1.0 / 3.0, 1e-15, "rate");
    }

    #[test]
    fn combined_pmd_edge_cases() {
        assert_close(combined_pmd(5, 5, 0.0).unwrap(), 0.0, 0.0, "all detections succeed");
        assert_close(combined_pmd(7, 5, 1.0).unwrap(), 1.0, 0.0, "nothing detected");
        assert_close(combined_pmd(2, 1, 0.1).unwrap(), 0.01, 1e-15, "single term");
        assert_close(combined_pmd(3, 5, 0.2).unwrap(), 1.0, 0.0, "x below x0");
    }

    #[test]
    fn combined_pmd_matches_exhaustive_enumeration() {
        // every detection-outcome sequence enumerated for x <= 12
        for x in 0u32..=12 {
            for x0 in 1u32..=6 {
                for &pi in &[0.07f64, 0.3, 0.9] {
                    let mut direct = 0.0;
                    for pattern in 0u32..(1 << x) {
                        let successes = pattern.count_ones();
                        if successes < x0 {
                            let fails = x - successes;
                            direct += (1.0 - pi).powi(successes as i32) * pi.powi(fails as i32);
                        }
                    }
                    let got = combined_pmd(x, x0, pi).unwrap();
                    assert!(
                        (got - direct).abs() < 1e-12,
                        "x={x} x0={x0} pi={pi}: {got} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn combined_pmd_large_horizon_stays_finite() {
        let p = combined_pmd(5760, 60, 0.05).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn spreading_probability_reductions() {
        let policy = DecisionPolicy::model_c(5, 60).unwrap();
        let px = ContactTimeDistribution::point_mass(5);
        let s = spreading_probability(1.0, 1.0, &px, &policy, 0.1).unwrap();
        assert_close(s.value, 1.0 - 0.9f64.powi(5), 1e-12, "point-mass reduction");
        let s = spreading_probability(10.0, 0.01, &px, &policy, 0.0).unwrap();
        assert_close(s.value, 0.0, 0.0, "perfect detection");
    }

    #[test]
    fn spreading_probability_against_direct_summation() {
        // independent oracle: direct triple-loop summation with plain floats
        let policy = DecisionPolicy::model_c(5, 60).unwrap();
        let px = ContactTimeDistribution::uniform_range(5, 10).unwrap();
        let (k, p_i, pi): (f64, f64, f64) = (10.0, 1.0 / 5100.0, 0.07);
        let mut direct = 0.0;
        for x in 5u64..=10 {
            let mut pmd = 0.0;
            for m in 0..5u64 {
                pmd += choose(x, m) * (1.0 - pi).powi(m as i32) * pi.powi((x - m) as i32);
            }
            direct += (1.0 / 6.0) * pmd;
        }
        direct *= k * p_i;
        let got = spreading_probability(k, p_i, &px, &policy, pi).unwrap();
        assert_close(got.value, direct, 1e-9, "uniform p_X oracle");

        // the diagnostic matches its defining factorial expression
        let mut expr = 0.0;
        for x in 5u64..=10 {
            let xp = (x - 4) as f64;
            let fact: f64 = (1..=(x - 4)).map(|i| i as f64).product();
            expr += (1.0 / 6.0) * (5.0 * pi).powf(xp) / fact;
        }
        expr *= k * p_i * (1.0 - pi).powi(4);
        assert_close(got.dominant_bound, expr, 1e-12, "factorial diagnostic");

        // for pi_md << 1/x0 the diagnostic converges onto the full value
        let small = spreading_probability(k, p_i, &px, &policy, 1e-3).unwrap();
        assert!(
            (small.dominant_bound / small.value - 1.0).abs() < 0.01,
            "diagnostic {} vs value {}",
            small.dominant_bound,
            small.value
        );
    }

    #[test]
    fn spreading_probability_limit_is_no_tracing_probability() {
        let policy = DecisionPolicy::model_c(5, 60).unwrap();
        let px = ContactTimeDistribution::uniform_range(3, 12).unwrap();
        let s = spreading_probability(7.0, 0.02, &px, &policy, 1.0).unwrap();
        let p_c1: f64 = px
            .support()
            .filter(|&(x, _)| x >= 5)
            .map(|(_, p)| p)
            .sum::<f64>()
            * 7.0
            * 0.02;
        assert_close(s.value, p_c1, 1e-12, "pi_md -> 1 recovers p_C1");
    }

    #[test]
    fn reduction_factor_examples() {
        let c5 = DecisionPolicy::model_c(5, 60).unwrap();
        let c3 = DecisionPolicy::model_c(3, 60).unwrap();
        assert_close(reduction_factor(&c3, 0.054), 0.162, 1e-12, "x0=3");
        assert_close(reduction_factor(&c5, 0.014), 0.07, 1e-12, "x0=5");
    }

    #[test]
    fn false_alarm_below_x0_is_zero() {
        let px = ContactTimeDistribution::point_mass(0);
        assert_eq!(false_alarm_given_exposure(4, 5, &px, 0.1, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn false_alarm_reduces_to_binomial_tail() {
        // with no true contact slots, only erroneous decisions can accumulate
        let px = ContactTimeDistribution::point_mass(0);
        let (y, x0, pi_fa) = (10u32, 5u32, 0.1f64);
        let mut tail = 0.0;
        for x in x0..=y {
            tail += choose(y as u64, x as u64)
                * pi_fa.powi(x as i32)
                * (1.0 - pi_fa).powi((y - x) as i32);
        }
        let got = false_alarm_given_exposure(y, x0, &px, 0.3, pi_fa).unwrap();
        assert_close(got, tail, 1e-12, "binomial tail reduction");
    }

    #[test]
    fn false_alarm_matches_exhaustive_enumeration() {
        // enumerate every (detection, false-decision) outcome for y <= 12
        let (pi_md, pi_fa) = (0.25f64, 0.15f64);
        for y in 0u32..=12 {
            for x0 in 1u32..=5 {
                for x in 0..=y {
                    let px = ContactTimeDistribution::point_mass(x);
                    let mut direct = 0.0;
                    for det in 0u32..(1 << x) {
                        let m = det.count_ones();
                        if m >= x0 {
                            continue; // properly detected, not a false alarm
                        }
                        let w_det =
                            (1.0 - pi_md).powi(m as i32) * pi_md.powi((x - m) as i32);
                        for err in 0u32..(1 << (y - x)) {
                            let q = err.count_ones();
                            if m + q < x0 {
                                continue;
                            }
                            let w_err =
                                pi_fa.powi(q as i32) * (1.0 - pi_fa).powi((y - x - q) as i32);
                            direct += w_det * w_err;
                        }
                    }
                    let got = false_alarm_given_exposure(y, x0, &px, pi_md, pi_fa).unwrap();
                    assert!(
                        (got - direct).abs() < 1e-12,
                        "y={y} x0={x0} x={x}: {got} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn false_alarm_non_decreasing_in_y() {
        let px = ContactTimeDistribution::point_mass(0);
        let mut prev = 0.0;
        for y in 0..200 {
            let p = false_alarm_given_exposure(y, 5, &px, 0.2, 0.05).unwrap();
            assert!(p >= prev - 1e-15, "p_fa(y) decreased at y={y}");
            prev = p;
        }
    }

    #[test]
    fn expected_quarantines_degenerate_cases() {
        let policy = DecisionPolicy::model_c(5, 60).unwrap();
        let px = ContactTimeDistribution::point_mass(0);
        let py = ExposureDistribution::point_mass(20, 16.0);
        let zero = expected_quarantines(&py, &px, 1.0, &policy, 0.2, 0.0).unwrap();
        assert_eq!(zero, 0.0);
        let single = expected_quarantines(&py, &px, 1.0, &policy, 0.2, 0.3).unwrap();
        let direct = 16.0 * false_alarm_given_exposure(20, 5, &px, 0.2, 0.3).unwrap();
        assert_close(single, direct, 1e-12, "degenerate p_Y");
    }

    #[test]
    fn solved_target_satisfies_its_defining_product() {
        // the tolerable pi_fa satisfies K_Y C(y, x0) pi^x0 = target exactly;
        // the full binomial-tail expectation is smaller because the solve
        // keeps only the leading term of the tail.
        let pi = solve_pfa_target(16.0, 20, 5, 2.0).unwrap();
        assert_close(pi, 0.0958, 1e-3, "solved pi_fa, ratio 4");
        let product = 16.0 * choose(20, 5) * pi.powi(5);
        assert_close(product, 2.0, 1e-9, "defining product");

        let policy = DecisionPolicy::model_c(5, 60).unwrap();
        let px = ContactTimeDistribution::point_mass(0);
        let py = ExposureDistribution::point_mass(20, 16.0);
        let n_q = expected_quarantines(&py, &px, 1.0, &policy, 0.0, pi).unwrap();
        let mut tail = 0.0;
        for x in 5u64..=20 {
            tail += choose(20, x) * pi.powi(x as i32) * (1.0 - pi).powi((20 - x) as i32);
        }
        assert_close(n_q, 16.0 * tail, 1e-12, "full-tail expectation");
        assert!(n_q < 2.0, "the leading-term solve overstates the full tail");
    }

    #[test]
    fn solve_pfa_target_values() {
        assert_close(solve_pfa_target(16.0, 20, 5, 2.0).unwrap(), 0.0958, 1e-3, "ratio 4");
        assert_close(solve_pfa_target(16.0, 60, 5, 2.0).unwrap(), 0.0296, 1e-3, "ratio 12");
        assert_close(solve_pfa_target(16.0, 30, 30, 2.0).unwrap(), 0.933, 5e-4, "ratio 1, x0=30");
        // unreachable target caps at certainty
        assert_eq!(solve_pfa_target(1.0, 5, 5, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn large_x0_limits() {
        assert_close(pfa_target_large_x0_limit(2.0).unwrap(), 0.25, 1e-12, "r=2");
        assert_close(pfa_target_large_x0_limit(4.0).unwrap(), 0.11, 0.01, "r=4");
        assert_close(pfa_target_large_x0_limit(8.0).unwrap(), 0.05, 0.01, "r=8");
        assert_close(pfa_target_large_x0_limit(12.0).unwrap(), 0.03, 0.01, "r=12");
    }

    #[test]
    fn performance_table_selected_cells() {
        let md = LognormalFading::measured_2m();
        let fa = LognormalFading::measured_4m();
        let cfg = PropagationConfig::default();
        let layout = CrowdLayout::densest_packing(2.0).unwrap();
        let rows = performance_table(&md, &fa, &cfg, &layout, &[6, 15, 60], &[3, 5]).unwrap();
        assert_eq!(rows.len(), 6);
        let cell = |n: u32, x0: u32| rows.iter().find(|r| r.n == n && r.x0 == x0).unwrap();
        assert_close(cell(60, 3).reduction, 0.04, 0.02, "n=60 x0=3");
        assert_eq!((cell(60, 3).rate_num, cell(60, 3).rate_den), (1, 5));
        let r = cell(6, 5);
        assert_close(r.reduction, 0.27, 0.02, "n=6 x0=5");
        assert_close(r.p_fa_total, 0.064, 0.005, "n=6 p_fa");
        assert_eq!((r.rate_num, r.rate_den), (1, 30));
        let r = cell(15, 5);
        assert_close(r.reduction, 0.17, 0.02, "n=15 x0=5");
        assert_eq!((r.rate_num, r.rate_den), (1, 12));
    }
}
