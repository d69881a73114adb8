//! Interferometer phase drift and the active stabilization loop: a
//! photodiode watches the pump interference fringe, a PI controller drives a
//! fibre stretcher, and the residual phase error maps directly onto a
//! fidelity penalty of the emitted Bell state.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Random-walk model of the free-running interferometer phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModel {
    /// Random-walk scale in rad per sqrt(second); pi reproduces the observed
    /// phase excursions of about pi per second.
    pub rate_rad_per_s: f64,
    /// Simulation and control-loop step, seconds.
    pub time_step_s: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            rate_rad_per_s: std::f64::consts::PI,
            time_step_s: 1e-3,
        }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if self.rate_rad_per_s < 0.0 {
            return Err(Error::invalid("rate_rad_per_s", "must be >= 0"));
        }
        if !(self.time_step_s > 0.0) {
            return Err(Error::invalid("time_step_s", "must be > 0"));
        }
        Ok(())
    }
}

/// PI gains, dimensionless per loop step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub kp: f64,
    pub ki: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { kp: 0.9, ki: 0.2 }
    }
}

/// State of the stabilization loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockState {
    /// Free-running interferometer phase (drifts).
    pub theta: f64,
    /// Correction applied by the fibre stretcher.
    pub stretcher_offset: f64,
    /// Photodiode lock point as a normalized intensity; 0.5 is quadrature.
    pub setpoint: f64,
    /// Accumulated integral error.
    pub integrator: f64,
    /// Requested phase of the emitted state.
    pub target_phase: f64,
}

impl LockState {
    pub fn new(target_phase: f64) -> Self {
        Self {
            theta: 0.0,
            stretcher_offset: 0.0,
            setpoint: 0.5,
            integrator: 0.0,
            target_phase,
        }
    }

    /// Phase currently imprinted on the emitted state.
    pub fn applied(&self) -> f64 {
        self.theta + self.stretcher_offset
    }

    /// Lock error: applied phase minus target, wrapped to (-pi, pi].
    pub fn residual(&self) -> f64 {
        wrap_angle(self.applied() - self.target_phase)
    }
}

/// Normalized photodiode intensity behind the phase analyzer: (1 + cos theta)/2.
pub fn photodiode_signal(theta: f64) -> f64 {
    (1.0 + theta.cos()) / 2.0
}

fn wrap_angle(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut y = x % tau;
    if y > std::f64::consts::PI {
        y -= tau;
    } else if y <= -std::f64::consts::PI {
        y += tau;
    }
    y
}

/// Advance the free-running phase by one Wiener step:
/// theta += N(0, rate * sqrt(dt)).
pub fn drift_step(model: &DriftModel, state: &mut LockState, rng: &mut ChaCha12Rng) {
    let sigma = model.rate_rad_per_s * model.time_step_s.sqrt();
    if sigma > 0.0 {
        let draw = Normal::new(0.0, sigma).expect("sigma > 0").sample(rng);
        state.theta += draw;
    }
}

/// One PI controller update.
///
/// The analyzer is arranged (polarizer angle plus a software offset on the
/// stretcher) so that the fringe sits at the quadrature point, signal 0.5
/// with slope -1/2, exactly when the applied phase equals the target. The
/// measured deviation -2*(signal - setpoint) = sin(residual) then estimates
/// the lock error with its sign intact.
pub fn controller_step(state: &mut LockState, gains: &ControllerGains) {
    assert!(gains.kp >= 0.0 && gains.ki >= 0.0, "gains must be >= 0");
    let signal = photodiode_signal(state.residual() + std::f64::consts::FRAC_PI_2);
    let error = -2.0 * (signal - state.setpoint);
    state.integrator += error;
    state.stretcher_offset -= gains.kp * error + gains.ki * state.integrator;
}

/// Summary statistics of a closed- (or open-) loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockSummary {
    /// RMS of the residual phase error over the run, rad.
    pub residual_rms_rad: f64,
    /// Time average of cos^2(residual/2), the Bell-state fidelity factor.
    pub mean_fidelity_factor: f64,
    pub steps: usize,
}

/// One recorded loop sample for time-series output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockSample {
    pub time_s: f64,
    pub theta: f64,
    pub applied: f64,
    pub signal: f64,
}

/// Run the stabilization loop for `duration_s` and report residual
/// statistics. Residuals are sampled after each controller update, the
/// phase the lock leaves on the state for the following step.
pub fn simulate_lock(
    model: &DriftModel,
    gains: &ControllerGains,
    duration_s: f64,
    target_phase: f64,
    seed: u64,
) -> Result<LockSummary> {
    Ok(run_lock(model, gains, duration_s, target_phase, seed, &mut |_| {})?.0)
}

/// As [`simulate_lock`], additionally returning the full time series.
pub fn simulate_lock_trace(
    model: &DriftModel,
    gains: &ControllerGains,
    duration_s: f64,
    target_phase: f64,
    seed: u64,
) -> Result<(LockSummary, Vec<LockSample>)> {
    let mut samples = Vec::new();
    let (summary, _) = run_lock(model, gains, duration_s, target_phase, seed, &mut |s| {
        samples.push(s)
    })?;
    Ok((summary, samples))
}

fn run_lock(
    model: &DriftModel,
    gains: &ControllerGains,
    duration_s: f64,
    target_phase: f64,
    seed: u64,
    sink: &mut dyn FnMut(LockSample),
) -> Result<(LockSummary, LockState)> {
    model.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::invalid("duration_s", "must be > 0"));
    }
    let steps = (duration_s / model.time_step_s).round().max(1.0) as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut state = LockState::new(target_phase);
    let mut sum_sq = 0.0;
    let mut sum_fidelity = 0.0;
    for k in 0..steps {
        drift_step(model, &mut state, &mut rng);
        controller_step(&mut state, gains);
        let residual = state.residual();
        sum_sq += residual * residual;
        sum_fidelity += (residual / 2.0).cos().powi(2);
        sink(LockSample {
            time_s: (k + 1) as f64 * model.time_step_s,
            theta: state.theta,
            applied: state.applied(),
            signal: photodiode_signal(state.residual() + std::f64::consts::FRAC_PI_2),
        });
    }
    Ok((
        LockSummary {
            residual_rms_rad: (sum_sq / steps as f64).sqrt(),
            mean_fidelity_factor: sum_fidelity / steps as f64,
            steps,
        },
        state,
    ))
}
