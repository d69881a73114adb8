//! Gated-APD detection chain: a master detector (DET1) internally triggered
//! at a nominal gate rate whose detections open a short conditional gate on
//! the slave detector (DET2). Provides analytic rate predictions and a
//! gate-by-gate Monte Carlo simulator with dark counts, afterpulsing,
//! deadtime saturation and accidental coincidences.

use crate::error::{Error, Result};
use crate::quantum::{measurement_probability, PolarizationSetting, TwoQubitState};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Parameters of one gated single-photon detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Detection efficiency per photon inside an open gate.
    pub efficiency: f64,
    /// Gate width in ns.
    pub gate_width_ns: f64,
    /// Nominal internal trigger rate in Hz (master detector only; the slave
    /// is gated conditionally).
    pub gate_rate_hz: f64,
    /// Deadtime after a registered avalanche, in us.
    pub deadtime_us: f64,
    /// Dark-count probability per open gate.
    pub dark_count_prob_per_gate: f64,
    /// Probability that a registered avalanche schedules one afterpulse in a
    /// later gate. Cascades geometrically: the shipped calibration treats it
    /// as an operating-point constant (trap occupancy grows with gate rate).
    pub afterpulse_prob: f64,
    /// Mean offset, in nominal gate slots, of the scheduled afterpulse.
    pub afterpulse_decay_gates: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 0.10,
            gate_width_ns: 100.0,
            gate_rate_hz: 1.0e5,
            deadtime_us: 10.0,
            dark_count_prob_per_gate: 5.0e-4,
            afterpulse_prob: 0.02,
            afterpulse_decay_gates: 20.0,
        }
    }
}

impl DetectorConfig {
    /// Nominal duty cycle gate_rate * gate_width.
    pub fn duty_cycle(&self) -> f64 {
        self.gate_rate_hz * self.gate_width_ns * 1e-9
    }

    pub fn validate(&self) -> Result<()> {
        if self.duty_cycle() > 1.0 {
            return Err(Error::invalid(
                "gate_rate_hz",
                format!("duty cycle {} exceeds 1", self.duty_cycle()),
            ));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("efficiency", "outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dark_count_prob_per_gate) {
            return Err(Error::invalid("dark_count_prob_per_gate", "outside [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.afterpulse_prob) {
            return Err(Error::invalid("afterpulse_prob", "outside [0, 1)"));
        }
        if self.afterpulse_decay_gates < 1.0 {
            return Err(Error::invalid("afterpulse_decay_gates", "must be >= 1"));
        }
        if self.deadtime_us < 0.0 || self.gate_rate_hz <= 0.0 || self.gate_width_ns <= 0.0 {
            return Err(Error::invalid("detector", "timing parameters out of range"));
        }
        Ok(())
    }

    /// Whole gate slots blocked after a registered event. A detection in
    /// slot s leaves slots s+1 .. s+blocked dead; the slot at exactly the
    /// deadtime boundary is live again.
    pub fn blocked_slots(&self) -> u64 {
        let slots = self.deadtime_us * 1e-6 * self.gate_rate_hz;
        (slots.ceil() as u64).saturating_sub(1)
    }

    /// Cascade multiplication of the geometric afterpulse model:
    /// 1 / (1 - afterpulse_prob).
    pub fn afterpulse_multiplication(&self) -> f64 {
        1.0 / (1.0 - self.afterpulse_prob)
    }
}

/// Saturated gate rate under the non-paralyzable model:
/// f_eff = nominal / (1 + detection_rate * deadtime).
pub fn effective_gate_rate(nominal_hz: f64, detection_rate_cps: f64, deadtime_us: f64) -> f64 {
    assert!(
        nominal_hz >= 0.0 && detection_rate_cps >= 0.0 && deadtime_us >= 0.0,
        "gate-rate arguments must be >= 0"
    );
    nominal_hz / (1.0 + detection_rate_cps * deadtime_us * 1e-6)
}

/// Slot-exact saturated trial rate of the master detector. `q` is the
/// per-gate avalanche probability from photons and darks combined. Every
/// registered event (photon, dark or afterpulse) removes its blocked slots
/// from the trial budget, giving f_eff = f_nominal / (1 + m*q*blocked).
fn slot_effective_gate_rate(det: &DetectorConfig, q: f64) -> f64 {
    let m = det.afterpulse_multiplication();
    let denom = 1.0 + m * q * det.blocked_slots() as f64;
    det.gate_rate_hz / denom
}

/// Analytic singles prediction of the master detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglesPrediction {
    /// All registered counts: photons, darks and afterpulses.
    pub total_cps: f64,
    /// Photon-caused counts only.
    pub signal_cps: f64,
    /// Dark-caused primary counts.
    pub dark_cps: f64,
    /// Saturated trial rate of the gate clock.
    pub effective_gate_rate_hz: f64,
    /// effective_gate_rate * gate_width.
    pub effective_duty: f64,
}

/// Expected singles of the master detector behind `optical_transmission`,
/// fed by `pair_rate_cps` photons per second on its arm.
pub fn expected_singles(
    pair_rate_cps: f64,
    optical_transmission: f64,
    det: &DetectorConfig,
) -> Result<SinglesPrediction> {
    det.validate()?;
    if !(0.0..=1.0).contains(&optical_transmission) {
        return Err(Error::invalid("optical_transmission", "outside [0, 1]"));
    }
    if pair_rate_cps < 0.0 {
        return Err(Error::invalid("pair_rate_cps", "must be >= 0"));
    }
    let p_signal = pair_rate_cps * optical_transmission * det.efficiency * det.gate_width_ns * 1e-9;
    let p_dark = det.dark_count_prob_per_gate;
    let q = p_signal + p_dark - p_signal * p_dark;
    let f_eff = slot_effective_gate_rate(det, q);
    let m = det.afterpulse_multiplication();
    Ok(SinglesPrediction {
        total_cps: f_eff * q * m,
        signal_cps: f_eff * p_signal,
        dark_cps: f_eff * p_dark,
        effective_gate_rate_hz: f_eff,
        effective_duty: f_eff * det.gate_width_ns * 1e-9,
    })
}

/// Expected coincidence rate of the master/slave scheme:
/// R_c = pair_rate * eta_opt1 * eta1 * duty_eff * eta_opt2 * eta2.
/// The slave gate opens conditionally on a master detection, so no second
/// duty factor appears; the coincidence/singles ratio is eta_opt2 * eta2.
pub fn expected_coincidences(
    pair_rate_cps: f64,
    eta_opt: (f64, f64),
    det1: &DetectorConfig,
    det2: &DetectorConfig,
) -> Result<f64> {
    let singles = expected_singles(pair_rate_cps, eta_opt.0, det1)?;
    det2.validate()?;
    if !(0.0..=1.0).contains(&eta_opt.1) {
        return Err(Error::invalid("eta_opt.1", "outside [0, 1]"));
    }
    Ok(singles.signal_cps * eta_opt.1 * det2.efficiency)
}

/// Accidental coincidence rate from uncorrelated flux and slave dark counts:
/// singles1 * (flux * gate_width + dark_prob).
pub fn accidental_rate(
    singles_det1_cps: f64,
    uncorrelated_flux_det2_cps: f64,
    gate2_ns: f64,
    dark2_prob_per_gate: f64,
) -> f64 {
    assert!(
        singles_det1_cps >= 0.0
            && uncorrelated_flux_det2_cps >= 0.0
            && gate2_ns >= 0.0
            && dark2_prob_per_gate >= 0.0,
        "accidental-rate arguments must be >= 0"
    );
    singles_det1_cps * (uncorrelated_flux_det2_cps * gate2_ns * 1e-9 + dark2_prob_per_gate)
}

/// Full master/slave detection chain serving one entangled channel pair.
///
/// `pair_rate_cps` is the total pair flux entering the two analysis arms;
/// `eta_opt` carries each arm's optical transmission excluding the
/// polarization projection, which is drawn from the quantum state per
/// setting. The uncorrelated DET2 flux is referenced after its detection
/// efficiency (a detection-rate-equivalent calibration constant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub pair_rate_cps: f64,
    pub eta_opt: (f64, f64),
    pub det1: DetectorConfig,
    pub det2: DetectorConfig,
    /// Conditional gate width of the slave detector, ns.
    pub coincidence_gate_ns: f64,
    /// Residual uncorrelated detection-equivalent flux at DET2.
    pub uncorrelated_flux_det2_cps: f64,
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        self.det1.validate()?;
        self.det2.validate()?;
        if self.pair_rate_cps < 0.0 {
            return Err(Error::invalid("pair_rate_cps", "must be >= 0"));
        }
        for (name, t) in [("eta_opt.0", self.eta_opt.0), ("eta_opt.1", self.eta_opt.1)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(name, "outside [0, 1]"));
            }
        }
        if self.coincidence_gate_ns <= 0.0 {
            return Err(Error::invalid("coincidence_gate_ns", "must be > 0"));
        }
        if self.uncorrelated_flux_det2_cps < 0.0 {
            return Err(Error::invalid("uncorrelated_flux_det2_cps", "must be >= 0"));
        }
        // The slave is always live again by the next master trigger when its
        // deadtime does not exceed the master's; the analytic oracle relies
        // on that.
        if self.det2.deadtime_us > self.det1.deadtime_us {
            return Err(Error::invalid(
                "det2.deadtime_us",
                "must not exceed det1.deadtime_us",
            ));
        }
        Ok(())
    }

    fn probabilities(
        &self,
        rho: &TwoQubitState,
        setting: PolarizationSetting,
    ) -> Result<ChainProbabilities> {
        let p_joint = measurement_probability(rho, setting)?;
        // Marginal on Alice's side: trace over Bob.
        let pa = crate::quantum::projector(setting.alice)
            .kronecker(&crate::quantum::Matrix2c::identity());
        let p_alice = (rho.matrix() * pa).trace().re;
        let p_signal = self.pair_rate_cps
            * p_alice
            * self.eta_opt.0
            * self.det1.efficiency
            * self.det1.gate_width_ns
            * 1e-9;
        let p_dark = self.det1.dark_count_prob_per_gate;
        let p_partner_given_signal = if p_alice > 0.0 {
            (p_joint / p_alice).min(1.0) * self.eta_opt.1 * self.det2.efficiency
        } else {
            0.0
        };
        let p_accidental = 1.0
            - (1.0 - self.uncorrelated_flux_det2_cps * self.coincidence_gate_ns * 1e-9)
                * (1.0 - self.det2.dark_count_prob_per_gate);
        Ok(ChainProbabilities {
            p_signal,
            q: p_signal + p_dark - p_signal * p_dark,
            p_partner_given_signal,
            p_accidental,
        })
    }
}

struct ChainProbabilities {
    p_signal: f64,
    q: f64,
    p_partner_given_signal: f64,
    p_accidental: f64,
}

/// One simulated acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub singles_det1_cps: f64,
    pub singles_det2_triggered_cps: f64,
    pub coincidences_cps: f64,
    pub duration_s: f64,
    pub seed: u64,
}

/// Exact expectation of the Monte Carlo model; the analytic side of the
/// MC/analytic agreement checks.
pub fn expected_counts(
    chain: &DetectionChain,
    rho: &TwoQubitState,
    setting: PolarizationSetting,
) -> Result<CountRecord> {
    chain.validate()?;
    let p = chain.probabilities(rho, setting)?;
    let f_eff = slot_effective_gate_rate(&chain.det1, p.q);
    let m = chain.det1.afterpulse_multiplication();
    let singles1 = f_eff * p.q * m;
    let signal1 = f_eff * p.p_signal;
    let coincidences = signal1 * (1.0 - (1.0 - p.p_partner_given_signal) * (1.0 - p.p_accidental))
        + (singles1 - signal1) * p.p_accidental;
    Ok(CountRecord {
        singles_det1_cps: singles1,
        singles_det2_triggered_cps: coincidences,
        coincidences_cps: coincidences,
        duration_s: 0.0,
        seed: 0,
    })
}

/// Header of the count-record CSV layout.
pub const COUNT_RECORD_CSV_HEADER: &str =
    "setting_alice,setting_bob,singles1_cps,singles2_cps,coinc_cps,duration_s,seed";

/// One CSV row for an acquired record, matching
/// [`COUNT_RECORD_CSV_HEADER`]; append rows to build a measurement log.
pub fn count_record_csv_row(setting: PolarizationSetting, record: &CountRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        setting.alice,
        setting.bob,
        record.singles_det1_cps,
        record.singles_det2_triggered_cps,
        record.coincidences_cps,
        record.duration_s,
        record.seed
    )
}

fn geometric_failures(rng: &mut ChaCha12Rng, p: f64) -> u64 {
    // Failures before the first success of a per-slot Bernoulli(p).
    if p >= 1.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let g = ((1.0 - u).ln() / (1.0 - p).ln()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Gate-by-gate stochastic simulation of the detection chain.
///
/// Per live master gate: pair presence and the polarization projection are
/// drawn jointly from the state, photons survive per-arm optical loss, a
/// master avalanche opens the slave's short conditional gate, darks and
/// scheduled afterpulses fire avalanches of their own, and every avalanche
/// blocks the master for its deadtime. Identical (seed, config) inputs give
/// bit-identical records.
pub fn simulate_counts(
    chain: &DetectionChain,
    rho: &TwoQubitState,
    setting: PolarizationSetting,
    duration_s: f64,
    seed: u64,
) -> Result<CountRecord> {
    chain.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::invalid("duration_s", "must be > 0"));
    }
    let p = chain.probabilities(rho, setting)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let f_n = chain.det1.gate_rate_hz;
    let slot_s = 1.0 / f_n;
    let n_slots = (duration_s * f_n).round() as u64;
    let blocked = chain.det1.blocked_slots();
    let decay = chain.det1.afterpulse_decay_gates;
    let dead2_slots = (chain.det2.deadtime_us * 1e-6 / slot_s).ceil() as u64;

    let mut pending: BinaryHeap<Reverse<u64>> = BinaryHeap::new();
    let mut cursor: u64 = 0;
    let mut det2_live_at: u64 = 0;
    let mut singles1: u64 = 0;
    let mut singles2: u64 = 0;

    loop {
        let thermal = if p.q > 0.0 {
            cursor.saturating_add(geometric_failures(&mut rng, p.q))
        } else {
            u64::MAX
        };
        // Afterpulses scheduled inside a dead window defer to the next live
        // slot; ties with a thermal avalanche defer further (one avalanche
        // per gate).
        let next_pending = pending.peek().map(|Reverse(s)| (*s).max(cursor));
        let (slot, is_afterpulse) = match next_pending {
            Some(ap) if ap < thermal => (ap, true),
            _ => (thermal, false),
        };
        if slot >= n_slots {
            break;
        }
        if is_afterpulse {
            pending.pop();
        }
        singles1 += 1;

        // Partner photon only accompanies photon-caused avalanches.
        let partner_present = !is_afterpulse && rng.random::<f64>() < p.p_signal / p.q;

        if slot >= det2_live_at {
            let hit_partner = partner_present && rng.random::<f64>() < p.p_partner_given_signal;
            let hit_accidental = rng.random::<f64>() < p.p_accidental;
            if hit_partner || hit_accidental {
                singles2 += 1;
                det2_live_at = slot + dead2_slots;
            }
        }

        if rng.random::<f64>() < chain.det1.afterpulse_prob {
            let offset = 1 + geometric_failures(&mut rng, 1.0 / decay);
            pending.push(Reverse(slot.saturating_add(offset)));
        }
        cursor = slot + 1 + blocked;
    }

    Ok(CountRecord {
        singles_det1_cps: singles1 as f64 / duration_s,
        singles_det2_triggered_cps: singles2 as f64 / duration_s,
        coincidences_cps: singles2 as f64 / duration_s,
        duration_s,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{phi_plus, Polarization};

    // Chain constants reproducing the published 100 kHz / 1 MHz operating
    // points; the scenario module ships the same numbers as defaults.
    fn det1(gate_rate_hz: f64, afterpulse_prob: f64) -> DetectorConfig {
        DetectorConfig {
            efficiency: 0.10,
            gate_width_ns: 100.0,
            gate_rate_hz,
            deadtime_us: 10.0,
            dark_count_prob_per_gate: 5.0e-4,
            afterpulse_prob,
            afterpulse_decay_gates: 20.0,
        }
    }

    fn det2() -> DetectorConfig {
        DetectorConfig {
            efficiency: 0.15,
            gate_width_ns: 2.0,
            gate_rate_hz: 1.0,
            deadtime_us: 10.0,
            dark_count_prob_per_gate: 1.6e-4,
            afterpulse_prob: 0.0,
            afterpulse_decay_gates: 20.0,
        }
    }

    // Single-crystal-equivalent co-polarized flux and arm transmissions of
    // the 31-37 channel pair.
    const PAIR_RATE: f64 = 2.477e7;
    const ETA1: f64 = 0.55024 * 0.3375; // high-channel arm into DET1
    const ETA2: f64 = 0.6 * 0.3375; // low-channel arm into DET2

    fn chain(gate_rate_hz: f64, afterpulse_prob: f64) -> DetectionChain {
        DetectionChain {
            pair_rate_cps: PAIR_RATE,
            eta_opt: (ETA1, ETA2),
            det1: det1(gate_rate_hz, afterpulse_prob),
            det2: det2(),
            coincidence_gate_ns: 2.0,
            uncorrelated_flux_det2_cps: 1.1e5,
        }
    }

    #[test]
    fn effective_gate_rate_reference_points() {
        assert_eq!(effective_gate_rate(1e6, 0.0, 10.0), 1e6);
        assert!(effective_gate_rate(1e5, 3000.0, 10.0) >= 0.97e5);
        let saturated = effective_gate_rate(1e6, 61290.0, 10.0);
        assert!((saturated - 620e3).abs() / 620e3 < 0.01, "{saturated}");
    }

    #[test]
    fn duty_cycle_check() {
        let mut d = det1(1e6, 0.0);
        assert!((d.duty_cycle() - 0.1).abs() < 1e-12);
        d.gate_rate_hz = 2e7;
        assert!(d.validate().is_err());
    }

    #[test]
    fn singles_vanish_without_input() {
        let mut d = det1(1e5, 0.0);
        d.dark_count_prob_per_gate = 0.0;
        let s = expected_singles(0.0, 0.2, &d).unwrap();
        assert_eq!(s.total_cps, 0.0);
    }

    #[test]
    fn singles_at_both_operating_points() {
        // Co-polarized single-crystal flux on the DET1 arm.
        let low = expected_singles(PAIR_RATE * 0.5, ETA1, &det1(1e5, 0.02)).unwrap();
        assert!(
            (low.total_cps - 2600.0).abs() / 2600.0 < 0.10,
            "{}",
            low.total_cps
        );

        let high = expected_singles(PAIR_RATE * 0.5, ETA1, &det1(1e6, 0.6173)).unwrap();
        assert!(
            (high.total_cps - 38000.0).abs() / 38000.0 < 0.15,
            "{}",
            high.total_cps
        );
        assert!(
            (high.effective_gate_rate_hz - 620e3).abs() / 620e3 < 0.10,
            "{}",
            high.effective_gate_rate_hz
        );
    }

    #[test]
    fn coincidences_at_both_operating_points() {
        let low = expected_coincidences(PAIR_RATE * 0.5, (ETA1, ETA2), &det1(1e5, 0.02), &det2())
            .unwrap();
        assert!((low - 75.0).abs() / 75.0 < 0.10, "{low}");

        let high =
            expected_coincidences(PAIR_RATE * 0.5, (ETA1, ETA2), &det1(1e6, 0.6173), &det2())
                .unwrap();
        assert!((high - 450.0).abs() / 450.0 < 0.10, "{high}");

        let gain = high / low;
        assert!((gain - 6.0).abs() / 6.0 < 0.20, "{gain}");

        let mut dead2 = det2();
        dead2.efficiency = 0.0;
        let off =
            expected_coincidences(PAIR_RATE * 0.5, (ETA1, ETA2), &det1(1e5, 0.02), &dead2).unwrap();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn ratio_is_eta_opt2_times_eta_det2() {
        // With afterpulsing and darks off, coincidences / singles reduces to
        // the slave arm's transmission times its efficiency.
        let mut d1 = det1(1e5, 0.0);
        d1.dark_count_prob_per_gate = 0.0;
        let singles = expected_singles(PAIR_RATE * 0.5, ETA1, &d1).unwrap();
        let coinc = expected_coincidences(PAIR_RATE * 0.5, (ETA1, ETA2), &d1, &det2()).unwrap();
        let ratio = coinc / singles.total_cps;
        assert!((ratio - ETA2 * 0.15).abs() < 1e-12);
        assert!((ratio - 0.030).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn accidental_rate_reference_points() {
        assert_eq!(accidental_rate(38000.0, 0.0, 2.0, 0.0), 0.0);
        let bg = accidental_rate(39500.0, 1.1e5, 2.0, 1.6e-4);
        assert!((bg - 15.0).abs() < 1.5, "{bg}");
        let doubled = accidental_rate(2.0 * 39500.0, 1.1e5, 2.0, 1.6e-4);
        assert!((doubled - 2.0 * bg).abs() < 1e-9);
    }

    #[test]
    fn simulation_is_deterministic() {
        let chain = chain(1e6, 0.6173);
        let rho = phi_plus();
        let setting = PolarizationSetting::new(Polarization::H, Polarization::H);
        let a = simulate_counts(&chain, &rho, setting, 5.0, 42).unwrap();
        let b = simulate_counts(&chain, &rho, setting, 5.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(&chain, &rho, setting, 5.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forbidden_setting_yields_zero_coincidences() {
        let mut chain = chain(1e6, 0.0);
        chain.uncorrelated_flux_det2_cps = 0.0;
        chain.det1.dark_count_prob_per_gate = 0.0;
        chain.det2.dark_count_prob_per_gate = 0.0;
        let rho = phi_plus();
        let setting = PolarizationSetting::new(Polarization::H, Polarization::V);
        let rec = simulate_counts(&chain, &rho, setting, 20.0, 7).unwrap();
        assert_eq!(rec.coincidences_cps, 0.0);
        assert!(rec.singles_det1_cps > 0.0);
    }

    #[test]
    fn monte_carlo_matches_analytic_oracle() {
        let chain = chain(1e6, 0.6173);
        let rho = phi_plus();
        let duration = 200.0;
        for (a, b) in [
            (Polarization::H, Polarization::H),
            (Polarization::H, Polarization::V),
            (Polarization::P, Polarization::R),
        ] {
            let setting = PolarizationSetting::new(a, b);
            let analytic = expected_counts(&chain, &rho, setting).unwrap();
            let mc = simulate_counts(&chain, &rho, setting, duration, 11).unwrap();
            let tol_c = 4.0 * (analytic.coincidences_cps.max(1.0) / duration).sqrt();
            assert!(
                (mc.coincidences_cps - analytic.coincidences_cps).abs() <= tol_c,
                "{setting}: mc {} vs analytic {} (tol {tol_c})",
                mc.coincidences_cps,
                analytic.coincidences_cps
            );
            let tol_s = 4.0 * (analytic.singles_det1_cps / duration).sqrt();
            assert!(
                (mc.singles_det1_cps - analytic.singles_det1_cps).abs() <= tol_s,
                "{setting}: singles mc {} vs analytic {} (tol {tol_s})",
                mc.singles_det1_cps,
                analytic.singles_det1_cps
            );
        }
    }

    #[test]
    fn clean_chain_recovers_exact_duty_scaling() {
        // No afterpulsing, no darks, no deadtime: the 1 MHz prediction is
        // exactly ten times the 100 kHz one.
        let clean = |rate| {
            let mut c = chain(rate, 0.0);
            c.det1.dark_count_prob_per_gate = 0.0;
            c.det1.deadtime_us = 0.0;
            c.det2.deadtime_us = 0.0;
            c.uncorrelated_flux_det2_cps = 0.0;
            c.det2.dark_count_prob_per_gate = 0.0;
            c
        };
        let rho = phi_plus();
        let setting = PolarizationSetting::new(Polarization::H, Polarization::H);
        let low = expected_counts(&clean(1e5), &rho, setting).unwrap();
        let high = expected_counts(&clean(1e6), &rho, setting).unwrap();
        let gain = high.coincidences_cps / low.coincidences_cps;
        assert!((gain - 10.0).abs() < 1e-9, "{gain}");

        // With saturation and afterpulsing back on, the gain drops to ~6.
        let low = expected_counts(&chain(1e5, 0.02), &rho, setting).unwrap();
        let high = expected_counts(&chain(1e6, 0.6173), &rho, setting).unwrap();
        let gain = high.coincidences_cps / low.coincidences_cps;
        assert!(gain < 10.0);
        assert!((gain - 6.0).abs() / 6.0 < 0.20, "{gain}");
    }

    #[test]
    fn mc_ratio_matches_analytic_without_afterpulsing() {
        let mut c = chain(1e5, 0.0);
        c.det1.dark_count_prob_per_gate = 0.0;
        c.uncorrelated_flux_det2_cps = 0.0;
        c.det2.dark_count_prob_per_gate = 0.0;
        let rho = phi_plus();
        let setting = PolarizationSetting::new(Polarization::H, Polarization::H);
        let duration = 400.0;
        let rec = simulate_counts(&c, &rho, setting, duration, 3).unwrap();
        let ratio = rec.coincidences_cps / rec.singles_det1_cps;
        // P(b|a) = 1 for Phi+ in HH, so the ratio is eta_opt2 * eta2.
        let expected = ETA2 * 0.15;
        let sigma = (rec.coincidences_cps / duration).sqrt() / rec.singles_det1_cps;
        assert!(
            (ratio - expected).abs() <= 3.0 * sigma,
            "{ratio} vs {expected} (sigma {sigma})"
        );
    }

    #[test]
    fn count_record_csv_layout() {
        let chain = chain(1e5, 0.02);
        let setting = PolarizationSetting::new(Polarization::P, Polarization::R);
        let rec = simulate_counts(&chain, &phi_plus(), setting, 2.0, 9).unwrap();
        let row = count_record_csv_row(setting, &rec);
        assert_eq!(
            COUNT_RECORD_CSV_HEADER.split(',').count(),
            row.split(',').count()
        );
        assert!(row.starts_with("P,R,"));
        assert!(row.ends_with(",2,9"));
    }

    #[test]
    fn record_invariants_hold() {
        let chain = chain(1e6, 0.6173);
        let rho = phi_plus();
        let rec = simulate_counts(
            &chain,
            &rho,
            PolarizationSetting::new(Polarization::P, Polarization::P),
            30.0,
            5,
        )
        .unwrap();
        assert!(rec.coincidences_cps <= rec.singles_det1_cps);
        assert!(rec.coincidences_cps >= 0.0);
        assert_eq!(rec.coincidences_cps, rec.singles_det2_triggered_cps);
    }
}
