//! Acceptance suite: every release criterion of the simulator, each as one
//! test printing a PASS line (visible with `cargo test --test acceptance --
//! --nocapture`). Tolerances are pinned in the assertions.

use entmux::detection::{
    accidental_rate, expected_coincidences, expected_counts, expected_singles, simulate_counts,
    DetectionChain, DetectorConfig,
};
use entmux::phase_lock::{simulate_lock, ControllerGains, DriftModel};
use entmux::quantum::{
    apply_local_unitary, bell_state, phi_plus, werner_state, Polarization, PolarizationSetting,
};
use entmux::scenario::{run_scenario, ScenarioConfig};
use entmux::source::{brightness_from_counts, intrinsic_conversion_efficiency};
use entmux::switch::{clos_fabric, fabric_stats, paper_fabric_4user, realizable_permutations};
use entmux::tomography::{expected_record, linear_inversion, mle_reconstruct, simulate_tomography};
use entmux::wdm::{
    channel_capacity, channel_wavelength, chromatic_spread, coherence_time, cwdm_visibility,
    pair_channels, pmd_delay,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[test]
fn criterion_01_brightness_arithmetic() {
    let b = brightness_from_counts(75.0, 0.10, 0.15, 0.01, 0.018, 62.0).unwrap();
    assert!((b - 4.48e5).abs() / 4.48e5 < 1e-3, "{b}");
    assert!((b - 4.5e5).abs() / 4.5e5 < 0.01, "{b}");
    println!("PASS criterion 1: brightness 75 c/s -> {b:.4e} pairs/s/mW/GHz (4.5e5 within 1%)");
}

#[test]
fn criterion_02_conversion_efficiency() {
    let measured = intrinsic_conversion_efficiency(1.7e-9, 0.62e-3, 1.0).unwrap();
    assert!((measured - 2.74e-6).abs() < 0.01e-6, "{measured}");
    let intrinsic = intrinsic_conversion_efficiency(1.7e-9, 0.62e-3, 0.5).unwrap();
    assert!((intrinsic - 1.10e-5).abs() <= 0.01e-5, "{intrinsic}");
    println!(
        "PASS criterion 2: conversion efficiency {measured:.3e} measured, {intrinsic:.3e} intrinsic"
    );
}

#[test]
fn criterion_03_channel_pairing_and_wavelengths() {
    let config = ScenarioConfig::default();
    let result = pair_channels(&config.plan, 386.8, 10.0);
    let numbers: Vec<(i32, i32)> = result
        .pairs
        .iter()
        .map(|p| (p.low.number, p.high.number))
        .collect();
    assert_eq!(numbers, [(27, 41), (29, 39), (31, 37), (33, 35)]);
    let table = [
        (27, 1555.75),
        (29, 1554.13),
        (31, 1552.52),
        (33, 1550.92),
        (35, 1549.32),
        (37, 1547.72),
        (39, 1546.12),
        (41, 1544.53),
    ];
    for (n, expected) in table {
        assert!(
            (channel_wavelength(n) - expected).abs() < 0.01,
            "channel {n}"
        );
    }
    println!("PASS criterion 3: four energy-conserving pairs, all eight wavelengths to 0.01 nm");
}

#[test]
fn criterion_04_tomography_table_reproduction() {
    let config = ScenarioConfig::default();
    let report = run_scenario("table1", &config).unwrap();
    assert_eq!(report.rows.len(), 4);
    for row in &report.rows {
        let rate: f64 = row[4].parse().unwrap();
        let fidelity_raw: f64 = row[5].parse().unwrap();
        let fidelity_sub: f64 = row[6].parse().unwrap();
        let purity_raw: f64 = row[7].parse().unwrap();
        assert!((405.0..=505.0).contains(&rate), "rate {rate}");
        assert!(
            (0.91..=0.95).contains(&fidelity_raw),
            "raw fidelity {fidelity_raw}"
        );
        assert!(
            (0.85..=0.92).contains(&purity_raw),
            "raw purity {purity_raw}"
        );
        assert!(fidelity_sub >= 0.97, "subtracted fidelity {fidelity_sub}");
    }
    println!(
        "PASS criterion 4: four channel pairs at ~450 c/s give raw F in [0.91,0.95], raw P in [0.85,0.92], subtracted F >= 0.97"
    );
}

#[test]
fn criterion_05_switch_settings_reproduction() {
    let config = ScenarioConfig::default();
    let report = run_scenario("table2", &config).unwrap();
    assert_eq!(report.rows.len(), 6);
    let expected_pairings = [
        ("I", "A", "D"),
        ("I", "B", "C"),
        ("II", "A", "C"),
        ("II", "B", "D"),
        ("III", "A", "B"),
        ("III", "C", "D"),
    ];
    for (row, (setting, ua, ub)) in report.rows.iter().zip(expected_pairings) {
        assert_eq!(row[0], setting);
        assert_eq!(row[2], ua);
        assert_eq!(row[3], ub);
        let delta: f64 = row[7].parse().unwrap();
        assert!(delta.abs() < 5.0, "rate change {delta}%");
        let fidelity_raw: f64 = row[8].parse().unwrap();
        let fidelity_sub: f64 = row[9].parse().unwrap();
        let purity_raw: f64 = row[10].parse().unwrap();
        assert!((0.91..=0.95).contains(&fidelity_raw), "{fidelity_raw}");
        assert!((0.85..=0.92).contains(&purity_raw), "{purity_raw}");
        assert!(fidelity_sub >= 0.97, "{fidelity_sub}");
    }
    println!(
        "PASS criterion 5: settings I/II/III share A-D/B-C, A-C/B-D, A-B/C-D with static-quality metrics at 0 dB switch loss"
    );
}

#[test]
fn criterion_06_detection_chain_consistency() {
    let config = ScenarioConfig::default();
    let pair = config
        .channel_pairs()
        .into_iter()
        .find(|p| p.low.number == 31)
        .unwrap();
    let misc = config.misc_transmission();
    let eta = (
        pair.high.transmission() * misc,
        pair.low.transmission() * misc,
    );
    let flux = config.pair_flux(&pair).unwrap() * 0.5;

    // Analytic ratio with afterpulsing and darks off.
    let mut det1 = config.detectors.det1_low_duty.clone();
    det1.afterpulse_prob = 0.0;
    det1.dark_count_prob_per_gate = 0.0;
    let singles = expected_singles(flux, eta.0, &det1).unwrap();
    let coinc = expected_coincidences(flux, eta, &det1, &config.detectors.det2).unwrap();
    let ratio = coinc / singles.total_cps;
    let expected_ratio = eta.1 * config.detectors.det2.efficiency;
    assert!((ratio - expected_ratio).abs() < 1e-12);
    assert!((ratio - 0.030).abs() <= 0.001, "ratio {ratio}");

    // Monte Carlo confirmation within 3 sigma.
    let chain = DetectionChain {
        pair_rate_cps: flux,
        eta_opt: eta,
        det1,
        det2: DetectorConfig {
            dark_count_prob_per_gate: 0.0,
            ..config.detectors.det2.clone()
        },
        coincidence_gate_ns: config.detectors.coincidence_gate_ns,
        uncorrelated_flux_det2_cps: 0.0,
    };
    let setting = PolarizationSetting::new(Polarization::H, Polarization::H);
    let duration = 300.0;
    let rec = simulate_counts(&chain, &phi_plus(), setting, duration, 606).unwrap();
    let mc_ratio = rec.coincidences_cps / rec.singles_det1_cps;
    let sigma = (rec.coincidences_cps / duration).sqrt() / rec.singles_det1_cps;
    assert!(
        (mc_ratio - expected_ratio).abs() <= 3.0 * sigma,
        "mc ratio {mc_ratio} vs {expected_ratio} (sigma {sigma})"
    );

    // Saturation at the 10% duty point: effective gate rate and gain.
    let singles_high = expected_singles(flux, eta.0, &config.detectors.det1_high_duty).unwrap();
    let f_eff = singles_high.effective_gate_rate_hz;
    assert!((f_eff - 620e3).abs() / 620e3 <= 0.10, "f_eff {f_eff}");
    let rc_low = expected_coincidences(
        flux,
        eta,
        &config.detectors.det1_low_duty,
        &config.detectors.det2,
    )
    .unwrap();
    let rc_high = expected_coincidences(
        flux,
        eta,
        &config.detectors.det1_high_duty,
        &config.detectors.det2,
    )
    .unwrap();
    let gain = rc_high / rc_low;
    assert!((gain - 6.0).abs() / 6.0 <= 0.20, "gain {gain}");

    // Accidental background at the tomography operating point.
    let bg = accidental_rate(
        singles_high.total_cps,
        config.detectors.uncorrelated_flux_det2_cps,
        config.detectors.coincidence_gate_ns,
        config.detectors.det2.dark_count_prob_per_gate,
    );
    assert!((bg - 15.0).abs() < 2.0, "background {bg}");

    println!(
        "PASS criterion 6: ratio {:.2}% (= eta_opt2*eta2), f_eff {:.0} kHz, duty gain {gain:.2}",
        ratio * 100.0,
        f_eff / 1e3
    );
}

#[test]
fn criterion_07_cwdm_degradation() {
    let config = ScenarioConfig::default();
    let slope = config.cwdm.rotation_slope_rad_per_nm;
    let coarse = cwdm_visibility(13.0, slope).unwrap();
    assert!((coarse - 0.87).abs() <= 0.01, "coarse visibility {coarse}");
    let narrow = cwdm_visibility(0.5, slope).unwrap();
    assert!(narrow >= 0.99, "narrow visibility {narrow}");
    println!(
        "PASS criterion 7: one slope gives visibility {coarse:.3} at 13 nm and {narrow:.4} at 0.5 nm"
    );
}

#[test]
fn criterion_08_dispersion_calculators() {
    assert!((coherence_time(62.0) - 16.1).abs() < 0.05);
    assert!((chromatic_spread(17.0, 100.0, 0.5) - 850.0).abs() < 1e-9);
    let lo = chromatic_spread(5.5, 100.0, 0.5);
    let hi = chromatic_spread(10.0, 100.0, 0.5);
    assert!((lo - 275.0).abs() < 1e-9 && (hi - 500.0).abs() < 1e-9);
    assert!(hi < 500.0 + 1e-9, "below half a nanosecond");
    assert!((pmd_delay(0.04, 100.0) - 0.4).abs() < 1e-12);
    println!(
        "PASS criterion 8: coherence 16.1 ps at 62 GHz, spread 850 ps (standard fibre) and 275-500 ps (NZDSF), PMD 0.4 ps"
    );
}

#[test]
fn criterion_09_channel_capacity() {
    let (n, pairs) = channel_capacity(70.0, 1550.0, 100.0);
    assert_eq!((n, pairs), (87, 43));
    // Within 5% of the published 90-channel / 45-pair estimate.
    assert!((n as f64 - 90.0).abs() / 90.0 <= 0.05);
    assert!((pairs as f64 - 45.0).abs() / 45.0 <= 0.05);
    println!(
        "PASS criterion 9: 70 nm / 100 GHz -> {n} channels, {pairs} pairs (within 5% of 90/45; delta logged)"
    );
}

#[test]
fn criterion_10_clos_comparison() {
    let clos = clos_fabric(4).unwrap();
    let clos_stats = fabric_stats(&clos, 1.0).unwrap();
    assert_eq!(clos_stats.switch_count, 6);
    assert_eq!(clos_stats.max_depth, 3);
    for setting in clos.all_settings() {
        for input in &clos.inputs {
            assert_eq!(
                entmux::switch::path_depth(&clos, input, &setting).unwrap(),
                3
            );
        }
    }
    assert_eq!(realizable_permutations(&clos).unwrap().len(), 24);

    let two_switch = fabric_stats(&paper_fabric_4user(1.0), 1.0).unwrap();
    assert_eq!(two_switch.switch_count, 2);
    assert_eq!(two_switch.max_depth, 2);
    assert!(two_switch.switch_count < clos_stats.switch_count);
    assert!(two_switch.max_depth < clos_stats.max_depth);
    println!(
        "PASS criterion 10: Clos needs 6 switches at uniform depth 3 (all 24 permutations); the two-switch fabric needs 2 at depth 2"
    );
}

#[test]
fn criterion_11_property_suites() {
    // Tomography roundtrip on 100 random states.
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    for _ in 0..100 {
        let rho = random_state(&mut rng);
        let record = expected_record(&rho, 1000.0, 1.0, 0.0).unwrap();
        let rec = linear_inversion(&record).unwrap();
        assert!(rec.rho.trace_distance(&rho) < 1e-9);
    }

    // MLE consistency: trace distance scales as 1/sqrt(N) within factor 3.
    let truth = werner_state(0.9).unwrap();
    let mut scaled = Vec::new();
    for (i, total) in [1e3, 1e4, 1e5, 1e6].into_iter().enumerate() {
        let rate = total / (8.45 * 20.0);
        let mut dist = 0.0;
        let seeds = 3;
        for s in 0..seeds {
            let record =
                simulate_tomography(&truth, rate, 20.0, 0.0, 900 + i as u64 * 10 + s).unwrap();
            dist += mle_reconstruct(&record, None)
                .unwrap()
                .rho
                .trace_distance(&truth);
        }
        scaled.push(dist / seeds as f64 * total.sqrt());
    }
    for pair in scaled.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "{scaled:?}");
    }

    // Bell-phase fidelity law.
    for _ in 0..100 {
        let theta = (rng.random::<f64>() - 0.5) * 20.0;
        let f = bell_state(theta).fidelity_phi_plus();
        assert!((f - (theta / 2.0).cos().powi(2)).abs() < 1e-10);
    }

    // Purity invariance under local unitaries.
    for _ in 0..100 {
        let rho = random_state(&mut rng);
        let u = random_unitary(&mut rng);
        let v = random_unitary(&mut rng);
        let rotated = apply_local_unitary(&rho, &u, &v).unwrap();
        assert!((rotated.purity() - rho.purity()).abs() < 1e-10);
    }

    // Monte Carlo determinism per seed.
    let config = ScenarioConfig::default();
    let pair = config.channel_pairs()[2];
    let misc = config.misc_transmission();
    let chain = DetectionChain {
        pair_rate_cps: config.pair_flux(&pair).unwrap(),
        eta_opt: (
            pair.high.transmission() * misc,
            pair.low.transmission() * misc,
        ),
        det1: config.detectors.det1_high_duty.clone(),
        det2: config.detectors.det2.clone(),
        coincidence_gate_ns: config.detectors.coincidence_gate_ns,
        uncorrelated_flux_det2_cps: config.detectors.uncorrelated_flux_det2_cps,
    };
    let setting = PolarizationSetting::new(Polarization::P, Polarization::P);
    let a = simulate_counts(&chain, &phi_plus(), setting, 10.0, 77).unwrap();
    let b = simulate_counts(&chain, &phi_plus(), setting, 10.0, 77).unwrap();
    assert_eq!(a, b);

    println!(
        "PASS criterion 11: tomography roundtrip 1e-9, MLE 1/sqrt(N) scaling, Bell-phase law, purity invariance, MC determinism"
    );
}

#[test]
fn criterion_12_phase_lock() {
    let drift = DriftModel::default();
    let gains = ControllerGains::default();
    let closed = simulate_lock(&drift, &gains, 20.0, 0.0, 314).unwrap();
    assert!(
        closed.residual_rms_rad <= 0.1,
        "{}",
        closed.residual_rms_rad
    );
    assert!(
        closed.mean_fidelity_factor >= 0.9975,
        "{}",
        closed.mean_fidelity_factor
    );
    let open = simulate_lock(
        &drift,
        &ControllerGains { kp: 0.0, ki: 0.0 },
        20.0,
        0.0,
        314,
    )
    .unwrap();
    assert!(
        open.mean_fidelity_factor <= 0.6,
        "{}",
        open.mean_fidelity_factor
    );
    println!(
        "PASS criterion 12: closed-loop residual {:.3} rad RMS, fidelity factor {:.5}; open loop degrades to {:.3}",
        closed.residual_rms_rad, closed.mean_fidelity_factor, open.mean_fidelity_factor
    );
}

// Shared helpers for the property checks.

fn random_state(rng: &mut ChaCha12Rng) -> entmux::quantum::TwoQubitState {
    use entmux::quantum::{Matrix4c, TwoQubitState, C64};
    let mut g = Matrix4c::zeros();
    for i in 0..4 {
        for j in 0..4 {
            g[(i, j)] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    let m = g * g.adjoint() + Matrix4c::identity().scale(1e-6);
    let tr = m.trace().re;
    TwoQubitState::from_matrix(m.unscale(tr)).unwrap()
}

fn random_unitary(rng: &mut ChaCha12Rng) -> entmux::quantum::Matrix2c {
    use entmux::quantum::{rotation_circular, rotation_z};
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    let b = rng.random::<f64>() * std::f64::consts::PI;
    let g = rng.random::<f64>() * std::f64::consts::TAU;
    rotation_z(a) * rotation_circular(b) * rotation_z(g)
}

// A Monte Carlo / analytic agreement sweep across all 16 settings backs the
// detection-model invariants; it lives here because it is the slowest check.
#[test]
fn detection_model_agreement_all_settings() {
    let config = ScenarioConfig::default();
    let pair = config.channel_pairs()[2];
    let misc = config.misc_transmission();
    let chain = DetectionChain {
        pair_rate_cps: config.pair_flux(&pair).unwrap(),
        eta_opt: (
            pair.high.transmission() * misc,
            pair.low.transmission() * misc,
        ),
        det1: config.detectors.det1_high_duty.clone(),
        det2: config.detectors.det2.clone(),
        coincidence_gate_ns: config.detectors.coincidence_gate_ns,
        uncorrelated_flux_det2_cps: config.detectors.uncorrelated_flux_det2_cps,
    };
    let rho = werner_state(config.link_werner_v).unwrap();
    let duration = 200.0;
    for (i, setting) in PolarizationSetting::all().into_iter().enumerate() {
        let analytic = expected_counts(&chain, &rho, setting).unwrap();
        let mc = simulate_counts(&chain, &rho, setting, duration, 7000 + i as u64).unwrap();
        let tol = 4.0 * (analytic.coincidences_cps.max(1.0) / duration).sqrt();
        assert!(
            (mc.coincidences_cps - analytic.coincidences_cps).abs() <= tol,
            "{setting}: mc {} vs analytic {} (tol {tol})",
            mc.coincidences_cps,
            analytic.coincidences_cps
        );
    }
    println!("PASS detection-model agreement: 16 settings within 4 sigma over 200 s");
}
