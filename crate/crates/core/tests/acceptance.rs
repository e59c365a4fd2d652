//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line with the measured values (run with
//! `cargo test --test acceptance -- --nocapture` to see them all).

use proxclass_core::audio::{
    self, two_way_exchange, AudioRangingConfig, DeviceTimingProfile,
};
use proxclass_core::dsp;
use proxclass_core::episode::{
    performance_table, pfa_target_large_x0_limit, solve_pfa_target,
};
use proxclass_core::numerics::gaussian_q;
use proxclass_core::audio::pi_md_audio;
use proxclass_core::propagation::{
    crowd_average_pi_md, lognormal_exceedance, pi_fa_lognormal, pi_md_lognormal,
    rice_exceedance, total_pfa_shells, CrowdLayout, FadingModel, LognormalFading,
    PropagationConfig, RiceFading, PERSONAL_RADIUS_M,
};
use proxclass_core::sim::{estimate_pi_empirical, trial_rng};
use rand::Rng;

fn cfg() -> PropagationConfig {
    PropagationConfig::default()
}

fn check(name: &str, got: f64, want: f64, tol: f64) {
    let ok = (got - want).abs() <= tol;
    println!(
        "[{}] {name}: got {got:.6}, expected {want:.6} +/- {tol:.6}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{name}: got {got}, expected {want} +/- {tol}");
}

#[test]
fn acceptance_01_diversity_table() {
    let start = std::time::Instant::now();
    let fading = LognormalFading::measured_2m();
    let layout = CrowdLayout::densest_packing(2.0).unwrap();
    let expected = [
        (1u32, 0.12, 0.005),
        (6, 0.054, 0.005),
        (15, 0.034, 0.005),
        (30, 0.023, 0.005),
        (60, 0.014, 0.005),
        (120, 0.007, 0.005),
        (240, 0.002, 0.005),
        (480, 0.0003, 0.0005),
    ];
    for (n, want, tol) in expected {
        let got =
            crowd_average_pi_md(|r| pi_md_lognormal(&fading, &cfg(), n, r), &layout).unwrap();
        check(&format!("criterion 1, crowd-averaged pi_md at n={n}"), got, want, tol);
    }
    let elapsed = start.elapsed();
    println!("[PASS] criterion 1 runtime: {elapsed:?} (budget 1 s)");
    assert!(elapsed.as_secs_f64() < 1.0);
}

#[test]
fn acceptance_02_spot_false_alarms() {
    let fading = LognormalFading::measured_4m();
    let d = 2.5642;
    check(
        "criterion 2, pi_fa n=1 one personal radius out",
        pi_fa_lognormal(&fading, &cfg(), 1, d).unwrap(),
        0.137,
        0.002,
    );
    check(
        "criterion 2, pi_fa n=3 one personal radius out",
        pi_fa_lognormal(&fading, &cfg(), 3, d).unwrap(),
        0.029,
        0.001,
    );
}

#[test]
fn acceptance_03_shell_product_totals() {
    let start = std::time::Instant::now();
    let fading = LognormalFading::measured_4m();
    check(
        "criterion 3, total p_fa at n=3",
        total_pfa_shells(&fading, &cfg(), 3, 64).unwrap(),
        0.413,
        0.01,
    );
    check(
        "criterion 3, total p_fa at n=9",
        total_pfa_shells(&fading, &cfg(), 9, 64).unwrap(),
        0.009,
        0.002,
    );
    check(
        "criterion 3, total p_fa at n=6",
        total_pfa_shells(&fading, &cfg(), 6, 64).unwrap(),
        0.064,
        0.005,
    );
    check(
        "criterion 3, total p_fa at n=15",
        total_pfa_shells(&fading, &cfg(), 15, 64).unwrap(),
        0.0002,
        0.0005,
    );
    let p60 = total_pfa_shells(&fading, &cfg(), 60, 64).unwrap();
    println!("[{}] criterion 3, total p_fa at n=60: got {p60:.3e}, expected < 1e-4", if p60 < 1e-4 { "PASS" } else { "FAIL" });
    assert!(p60 < 1e-4);
    let elapsed = start.elapsed();
    println!("[PASS] criterion 3 runtime: {elapsed:?} (budget 1 s)");
    assert!(elapsed.as_secs_f64() < 1.0);
}

#[test]
fn acceptance_04_reduction_factors_and_rates() {
    let start = std::time::Instant::now();
    let md = LognormalFading::measured_2m();
    let fa = LognormalFading::measured_4m();
    let layout = CrowdLayout::densest_packing(2.0).unwrap();
    let rows = performance_table(&md, &fa, &cfg(), &layout, &[6, 15, 60], &[3, 5]).unwrap();
    let cell = |n: u32, x0: u32| rows.iter().find(|r| r.n == n && r.x0 == x0).unwrap();
    let expected = [
        (6u32, 3u32, 0.16, (1u64, 50u64)),
        (6, 5, 0.27, (1, 30)),
        (15, 3, 0.12, (1, 20)),
        (15, 5, 0.17, (1, 12)),
        (60, 3, 0.04, (1, 5)),
        (60, 5, 0.07, (1, 3)),
    ];
    for (n, x0, reduction, rate) in expected {
        let row = cell(n, x0);
        check(
            &format!("criterion 4, reduction factor n={n} x0={x0}"),
            row.reduction,
            reduction,
            0.02,
        );
        let ok = (row.rate_num, row.rate_den) == rate;
        println!(
            "[{}] criterion 4, measurement rate n={n} x0={x0}: got {}/{}, expected {}/{}",
            if ok { "PASS" } else { "FAIL" },
            row.rate_num,
            row.rate_den,
            rate.0,
            rate.1
        );
        assert!(ok);
    }
    let elapsed = start.elapsed();
    println!("[PASS] criterion 4 runtime: {elapsed:?} (budget 1 s)");
    assert!(elapsed.as_secs_f64() < 1.0);
}

#[test]
fn acceptance_05_train_scenario_targets() {
    for (ratio, want) in [(2.0, 0.25), (4.0, 0.11), (8.0, 0.05), (12.0, 0.03)] {
        check(
            &format!("criterion 5, large-x0 limit at ratio {ratio}"),
            pfa_target_large_x0_limit(ratio).unwrap(),
            want,
            0.01,
        );
    }
    // informational: the ratio-1 entry 0.93 depends on the solving x0 and is
    // matched by the exact solve at x0 = 30
    let solved = solve_pfa_target(16.0, 30, 30, 2.0).unwrap();
    println!(
        "[INFO] criterion 5, ratio-1 entry: exact solve at x0=30 gives {solved:.4} (tabulated 0.93)"
    );
    assert!((solved - 0.93).abs() < 0.005);
}

#[test]
fn acceptance_06_audio_averages() {
    let layout = CrowdLayout::densest_packing(2.0).unwrap();
    let avg = crowd_average_pi_md(|r| pi_md_audio(0.05, 2.0, r), &layout).unwrap();
    check("criterion 6, audio crowd-averaged pi_md", avg, 0.016, 0.002);
    let acfg = AudioRangingConfig::default();
    let ratio = audio::delay_std(&acfg, 12.0).unwrap() / audio::delay_std(&acfg, 6.0).unwrap();
    let ok = (0.40..=0.45).contains(&ratio);
    println!(
        "[{}] criterion 6, delay-std ratio 12 dB / 6 dB: got {ratio:.4}, expected in [0.40, 0.45]",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn acceptance_07_monte_carlo_oracle_grid() {
    let start = std::time::Instant::now();
    let trials = 1_000_000u64;
    let seed = 0x5eed_2026u64;
    let rice = RiceFading::measured_2m();
    let near = LognormalFading::measured_2m();
    let far = LognormalFading::measured_4m();
    let distances = [1.5f64, 2.5642];
    let mut point = 0u64;
    for n in [1u32, 3, 60] {
        for &d in &distances {
            point += 1;
            let closed = rice_exceedance(&rice, &cfg(), n, d).unwrap();
            let est = estimate_pi_empirical(
                &FadingModel::Rice(rice),
                &cfg(),
                n,
                d,
                trials,
                seed + point,
            )
            .unwrap();
            let se = (closed * (1.0 - closed) / trials as f64).sqrt();
            check(
                &format!("criterion 7, Rice n={n} d={d}"),
                est.p_hat,
                closed,
                3.0 * se + 1e-9,
            );

            point += 1;
            // the lognormal fit matches the side of the zone being tested
            let logn = if d <= 2.0 { near } else { far };
            let closed = lognormal_exceedance(&logn, &cfg(), n, d).unwrap();
            let est = estimate_pi_empirical(
                &FadingModel::Lognormal(logn),
                &cfg(),
                n,
                d,
                trials,
                seed + point,
            )
            .unwrap();
            let se = (closed * (1.0 - closed) / trials as f64).sqrt();
            check(
                &format!("criterion 7, lognormal n={n} d={d}"),
                est.p_hat,
                closed,
                3.0 * se + 1e-9,
            );
        }
    }
    let elapsed = start.elapsed();
    println!("[PASS] criterion 7 runtime: {elapsed:?} (budget 120 s)");
    assert!(elapsed.as_secs_f64() < 120.0);
}

#[test]
fn acceptance_08_two_way_cancellation() {
    let start = std::time::Instant::now();
    let acfg = AudioRangingConfig::default();
    let mut rng = trial_rng(0xABCD, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let profile = |rng: &mut rand_chacha::ChaCha8Rng| DeviceTimingProfile {
            tx_delay_s: rng.gen::<f64>() * 0.2,
            rx_delay_s: rng.gen::<f64>() * 0.2,
            local_path_s: 0.14 / 343.0,
            clock_offset_s: rng.gen::<f64>() * 20.0 - 10.0,
            range_bias_m: 0.0,
        };
        let a = profile(&mut rng);
        let b = profile(&mut rng);
        let d = 0.5 + rng.gen::<f64>() * 4.5;
        let (_, recovered) = two_way_exchange(&a, &b, d, &acfg).unwrap();
        worst = worst.max((recovered - d).abs());
    }
    let ok = worst < 1e-9;
    println!(
        "[{}] criterion 8, two-way cancellation: worst error {worst:.3e} m over 1000 profiles (bound 1e-9)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
    let elapsed = start.elapsed();
    println!("[PASS] criterion 8 runtime: {elapsed:?} (budget 1 s)");
    assert!(elapsed.as_secs_f64() < 1.0);
}

#[test]
fn acceptance_09a_dsp_delay_variance() {
    let start = std::time::Instant::now();
    let acfg = AudioRangingConfig::default();
    let report = dsp::run_variance_experiment(&acfg, 6.0, 500, 20260809).unwrap();
    let ratio = report.empirical_std_s / report.predicted_std_s;
    let ok = (0.85..=1.15).contains(&ratio);
    println!(
        "[{}] criterion 9, delay-error std at 6 dB: got {:.4} ms vs predicted {:.4} ms (ratio {ratio:.3}, gate +/-15%)",
        if ok { "PASS" } else { "FAIL" },
        report.empirical_std_s * 1e3,
        report.predicted_std_s * 1e3,
    );
    assert!(ok, "std ratio {ratio} outside [0.85, 1.15]");
    // estimator unbiased within two standard errors of the mean
    let two_se = 2.0 * report.empirical_std_s / (report.trials as f64).sqrt();
    let ok = report.bias_s.abs() <= two_se;
    println!(
        "[{}] criterion 9, tracking bias at 6 dB: {:+.4} ms (two standard errors: {:.4} ms)",
        if ok { "PASS" } else { "FAIL" },
        report.bias_s * 1e3,
        two_se * 1e3
    );
    assert!(ok);
    println!("[PASS] criterion 9a runtime: {:?} (budget 300 s)", start.elapsed());
    assert!(start.elapsed().as_secs_f64() < 300.0);
}

#[test]
fn acceptance_09b_dsp_acquisition_rate() {
    // Detection bound at this operating point: the correlation peak exceeds
    // the noise floor by E/N0 itself, so at 6 dB the peak power is ~5x an
    // exponentially distributed floor and no statistic reaches 95%
    // acceptance together with a small false-acquisition rate. The measured
    // rate documents the honest behavior of the 6 dB threshold.
    let acfg = AudioRangingConfig::default();
    let report = dsp::run_variance_experiment(&acfg, 6.0, 500, 20260809).unwrap();
    let ok = report.acquisition_rate > 0.95;
    println!(
        "[{}] criterion 9, acquisition rate at 6 dB: got {:.3}, required > 0.95",
        if ok { "PASS" } else { "FAIL" },
        report.acquisition_rate
    );
    assert!(
        ok,
        "acquisition rate {:.3} at E/N0 = 6 dB with the 6 dB threshold; \
         the single-shot envelope statistic at this SNR cannot reach 0.95 \
         (see the validate report for the rate/threshold trade)",
        report.acquisition_rate
    );
}

#[test]
fn acceptance_09c_dsp_echo_rejection() {
    let acfg = AudioRangingConfig::default();
    let report = dsp::run_echo_experiment(&acfg, 6.0, 0.8, 3).unwrap();
    let ok = report.locked_direct_path;
    println!(
        "[{}] criterion 9, multipath echo at +6 chips: direct-path error {:.4} chips",
        if ok { "PASS" } else { "FAIL" },
        report.error_chips
    );
    assert!(ok, "echo captured the lock (error {} chips)", report.error_chips);
}

#[test]
fn acceptance_10_enumeration_equivalence() {
    let start = std::time::Instant::now();
    // combined missed detection vs all 2^x outcome sequences
    for x in 0u32..=12 {
        for x0 in 1u32..=6 {
            for &pi in &[0.05f64, 0.25, 0.6] {
                let mut direct = 0.0;
                for pattern in 0u32..(1 << x) {
                    let good = pattern.count_ones();
                    if good < x0 {
                        direct += (1.0 - pi).powi(good as i32) * pi.powi((x - good) as i32);
                    }
                }
                let got = proxclass_core::episode::combined_pmd(x, x0, pi).unwrap();
                assert!(
                    (got - direct).abs() < 1e-12,
                    "combined_pmd x={x} x0={x0} pi={pi}: {got} vs {direct}"
                );
            }
        }
    }
    println!("[PASS] criterion 10, combined_pmd matches exhaustive enumeration (x <= 12)");

    // false alarm vs all (detection, error) outcome sequences
    let (pi_md, pi_fa) = (0.3f64, 0.12f64);
    for y in 0u32..=12 {
        for x0 in 1u32..=4 {
            for x in 0..=y {
                let px = proxclass_core::episode::ContactTimeDistribution::point_mass(x);
                let mut direct = 0.0;
                for det in 0u32..(1 << x) {
                    let m = det.count_ones();
                    if m >= x0 {
                        continue;
                    }
                    let w_det = (1.0 - pi_md).powi(m as i32) * pi_md.powi((x - m) as i32);
                    for err in 0u32..(1 << (y - x)) {
                        let q = err.count_ones();
                        if m + q < x0 {
                            continue;
                        }
                        direct += w_det
                            * pi_fa.powi(q as i32)
                            * (1.0 - pi_fa).powi((y - x - q) as i32);
                    }
                }
                let got = proxclass_core::episode::false_alarm_given_exposure(
                    y, x0, &px, pi_md, pi_fa,
                )
                .unwrap();
                assert!(
                    (got - direct).abs() < 1e-12,
                    "false_alarm y={y} x0={x0} x={x}: {got} vs {direct}"
                );
            }
        }
    }
    println!("[PASS] criterion 10, false_alarm_given_exposure matches exhaustive enumeration (y <= 12)");
    let elapsed = start.elapsed();
    println!("[PASS] criterion 10 runtime: {elapsed:?} (budget 10 s)");
    assert!(elapsed.as_secs_f64() < 10.0);
}

/// Gaussian tail spot used by the audio classification curves; anchors the
/// audio criterion to an independently computed value.
#[test]
fn acceptance_06b_audio_tail_spot() {
    let q4 = gaussian_q((2.0 - 1.8) / 0.05).unwrap();
    check("criterion 6, audio pi_md at 1.8 m (Q(4))", q4, 3.17e-5, 2e-6);
    let fa = proxclass_core::audio::pi_fa_audio(0.05, 2.0, 2.0 + PERSONAL_RADIUS_M).unwrap();
    let ok = fa < 1e-28;
    println!(
        "[{}] criterion 6, audio pi_fa one personal radius out: {fa:.3e} (expected < 1e-28)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}
