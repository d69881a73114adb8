//! ITU frequency-grid arithmetic, demultiplexer channel slicing,
//! energy-conservation channel pairing, dispersion and coherence calculators,
//! and the coarse-WDM depolarization model.

use crate::error::{Error, Result};
use crate::quantum::{self, TwoQubitState};
use crate::source::{spectral_density, SourceConfig};
use serde::{Deserialize, Serialize};

/// Speed of light in nm*THz (equivalently m/s * 1e-3).
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;
/// Frequency of ITU channel 0 on the 100 GHz grid, THz.
pub const ITU_ANCHOR_THZ: f64 = 190.0;
/// Step between consecutive ITU channel numbers, THz.
pub const ITU_STEP_THZ: f64 = 0.1;
/// Valid ITU channel number range handled by the grid arithmetic.
pub const ITU_CHANNEL_RANGE: (i32, i32) = (-60, 120);

/// Center frequency of an ITU channel number, THz.
pub fn channel_frequency_thz(number: i32) -> f64 {
    ITU_ANCHOR_THZ + ITU_STEP_THZ * number as f64
}

/// Center wavelength of an ITU channel number, nm.
pub fn channel_wavelength(number: i32) -> f64 {
    assert!(
        (ITU_CHANNEL_RANGE.0..=ITU_CHANNEL_RANGE.1).contains(&number),
        "ITU channel {number} outside supported range {ITU_CHANNEL_RANGE:?}"
    );
    SPEED_OF_LIGHT_NM_THZ / channel_frequency_thz(number)
}

/// One demultiplexer output channel on the ITU grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItuChannel {
    pub number: i32,
    pub center_frequency_thz: f64,
    pub width_ghz: f64,
    pub insertion_loss_db: f64,
}

impl ItuChannel {
    /// Channel at the grid position for `number`.
    pub fn from_number(number: i32, width_ghz: f64, insertion_loss_db: f64) -> Self {
        Self {
            number,
            center_frequency_thz: channel_frequency_thz(number),
            width_ghz,
            insertion_loss_db,
        }
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        SPEED_OF_LIGHT_NM_THZ / self.center_frequency_thz
    }

    /// Passband edges in THz, (low, high).
    pub fn passband_thz(&self) -> (f64, f64) {
        let half = self.width_ghz * 1e-3 / 2.0;
        (
            self.center_frequency_thz - half,
            self.center_frequency_thz + half,
        )
    }

    /// Power transmission factor 10^(-IL/10).
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.insertion_loss_db / 10.0)
    }

    fn validate(&self) -> Result<()> {
        let expected = channel_frequency_thz(self.number);
        if (self.center_frequency_thz - expected).abs() > 1e-6 {
            return Err(Error::invalid(
                "center_frequency_thz",
                format!(
                    "channel {} at {} THz is off-grid (expected {expected} THz)",
                    self.number, self.center_frequency_thz
                ),
            ));
        }
        if !(self.width_ghz > 0.0) {
            return Err(Error::invalid(
                "width_ghz",
                format!("{} must be > 0", self.width_ghz),
            ));
        }
        Ok(())
    }
}

/// Ordered set of demultiplexer channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub channels: Vec<ItuChannel>,
    pub grid_spacing_ghz: f64,
    pub passband_width_ghz: f64,
}

impl ChannelPlan {
    pub fn new(
        channels: Vec<ItuChannel>,
        grid_spacing_ghz: f64,
        passband_width_ghz: f64,
    ) -> Result<Self> {
        let plan = Self {
            channels,
            grid_spacing_ghz,
            passband_width_ghz,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for ch in &self.channels {
            ch.validate()?;
        }
        for pair in self.channels.windows(2) {
            let gap_ghz = (pair[1].center_frequency_thz - pair[0].center_frequency_thz) * 1e3;
            if gap_ghz <= 0.0 {
                return Err(Error::invalid(
                    "channels",
                    "channel centers must be strictly increasing",
                ));
            }
            if (gap_ghz - self.grid_spacing_ghz).abs() > 1e-6 {
                return Err(Error::invalid(
                    "grid_spacing_ghz",
                    format!(
                        "channels {} and {} are {gap_ghz} GHz apart, expected {}",
                        pair[0].number, pair[1].number, self.grid_spacing_ghz
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn channel(&self, number: i32) -> Option<&ItuChannel> {
        self.channels.iter().find(|c| c.number == number)
    }
}

/// A pair of demux channels symmetric about half the pump frequency, so that
/// the two photons of a down-converted pair land in them together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntangledChannelPair {
    pub low: ItuChannel,
    pub high: ItuChannel,
}

impl EntangledChannelPair {
    pub fn label(&self) -> String {
        format!("{}-{}", self.low.number, self.high.number)
    }
}

/// Output of [`pair_channels`]: matched pairs plus any channels left over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub pairs: Vec<EntangledChannelPair>,
    pub unpaired: Vec<ItuChannel>,
}

/// Match channels whose center frequencies sum to the pump frequency within
/// `tolerance_ghz`. Each channel is used at most once.
pub fn pair_channels(
    plan: &ChannelPlan,
    pump_frequency_thz: f64,
    tolerance_ghz: f64,
) -> PairingResult {
    assert!(
        tolerance_ghz < plan.grid_spacing_ghz / 2.0,
        "pairing tolerance {tolerance_ghz} GHz must stay under half the grid spacing"
    );
    let tol_thz = tolerance_ghz * 1e-3;
    let mut used = vec![false; plan.channels.len()];
    let mut pairs = Vec::new();
    for i in 0..plan.channels.len() {
        if used[i] {
            continue;
        }
        for j in (i + 1)..plan.channels.len() {
            if used[j] {
                continue;
            }
            let sum = plan.channels[i].center_frequency_thz + plan.channels[j].center_frequency_thz;
            if (sum - pump_frequency_thz).abs() <= tol_thz {
                used[i] = true;
                used[j] = true;
                let (a, b) = (plan.channels[i], plan.channels[j]);
                let (low, high) = if a.number <= b.number { (a, b) } else { (b, a) };
                pairs.push(EntangledChannelPair { low, high });
                break;
            }
        }
    }
    let unpaired = plan
        .channels
        .iter()
        .enumerate()
        .filter(|(i, _)| !used[*i])
        .map(|(_, c)| *c)
        .collect();
    pairs.sort_by_key(|p| p.low.number);
    PairingResult { pairs, unpaired }
}

/// Pair rate delivered through one matched channel pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRate {
    pub pair: EntangledChannelPair,
    pub rate_cps: f64,
}

/// Slice the source spectrum into per-pair rates.
///
/// The pair flux through a matched pair is the source density integrated over
/// the frequencies of the low channel whose energy-conservation partner also
/// falls inside the high channel, degraded by both insertion losses.
pub fn demux_rates(
    total_rate: f64,
    cfg: &SourceConfig,
    pairs: &[EntangledChannelPair],
    pump_frequency_thz: f64,
) -> Vec<PairRate> {
    pairs
        .iter()
        .map(|pair| {
            let fraction = pair_spectral_fraction(cfg, pair, pump_frequency_thz);
            let rate = total_rate * fraction * pair.low.transmission() * pair.high.transmission();
            PairRate {
                pair: *pair,
                rate_cps: rate,
            }
        })
        .collect()
}

/// Fraction of the pair spectrum captured by a matched channel pair.
pub fn pair_spectral_fraction(
    cfg: &SourceConfig,
    pair: &EntangledChannelPair,
    pump_frequency_thz: f64,
) -> f64 {
    // Frequencies in the low channel whose partner (pump - f) lies in the
    // high channel.
    let (lo_a, lo_b) = pair.low.passband_thz();
    let (hi_a, hi_b) = pair.high.passband_thz();
    let (mirror_a, mirror_b) = (pump_frequency_thz - hi_b, pump_frequency_thz - hi_a);
    let band = (lo_a.max(mirror_a), lo_b.min(mirror_b));
    if band.1 <= band.0 {
        return 0.0;
    }
    // Integrate the wavelength-domain density over the equivalent band.
    let lambda_hi = SPEED_OF_LIGHT_NM_THZ / band.0;
    let lambda_lo = SPEED_OF_LIGHT_NM_THZ / band.1;
    integrate_density(cfg, lambda_lo, lambda_hi)
}

fn integrate_density(cfg: &SourceConfig, lambda_lo: f64, lambda_hi: f64) -> f64 {
    // Simpson's rule; the density is smooth on channel-width scales.
    let n = 200;
    let h = (lambda_hi - lambda_lo) / n as f64;
    let mut acc = spectral_density(cfg, lambda_lo) + spectral_density(cfg, lambda_hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * spectral_density(cfg, lambda_lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Single-photon coherence time 1/delta_nu, in ps for a bandwidth in GHz.
pub fn coherence_time(bandwidth_ghz: f64) -> f64 {
    assert!(bandwidth_ghz > 0.0, "bandwidth must be > 0");
    1000.0 / bandwidth_ghz
}

/// Chromatic temporal spread D * L * delta_lambda, ps.
pub fn chromatic_spread(dispersion_ps_nm_km: f64, length_km: f64, channel_width_nm: f64) -> f64 {
    assert!(
        dispersion_ps_nm_km >= 0.0 && length_km >= 0.0 && channel_width_nm >= 0.0,
        "dispersion arguments must be >= 0"
    );
    dispersion_ps_nm_km * length_km * channel_width_nm
}

/// Polarization-mode-dispersion delay coeff * sqrt(L), ps.
pub fn pmd_delay(pmd_coefficient_ps_sqrt_km: f64, length_km: f64) -> f64 {
    assert!(
        pmd_coefficient_ps_sqrt_km >= 0.0 && length_km >= 0.0,
        "pmd arguments must be >= 0"
    );
    pmd_coefficient_ps_sqrt_km * length_km.sqrt()
}

/// Number of wavelength-dependent rotation samples averaged by
/// [`cwdm_depolarize`].
pub const CWDM_INTEGRATION_SAMPLES: usize = 201;

/// Depolarization from wavelength-dependent birefringence across a passband.
///
/// Each spectral slice sees a rotation about the circular axis on Alice's
/// side by `rotation_slope * (lambda - center)`; the output is the uniform
/// average over the passband, evaluated with a 201-point midpoint rule.
pub fn cwdm_depolarize(
    rho: &TwoQubitState,
    passband_nm: f64,
    rotation_slope_rad_per_nm: f64,
) -> Result<TwoQubitState> {
    if !(passband_nm > 0.0) {
        return Err(Error::invalid(
            "passband_nm",
            format!("{passband_nm} must be > 0"),
        ));
    }
    if rotation_slope_rad_per_nm < 0.0 {
        return Err(Error::invalid(
            "rotation_slope_rad_per_nm",
            format!("{rotation_slope_rad_per_nm} must be >= 0"),
        ));
    }
    if rotation_slope_rad_per_nm == 0.0 {
        return Ok(rho.clone());
    }
    let identity = quantum::Matrix2c::identity();
    let n = CWDM_INTEGRATION_SAMPLES;
    let mut acc = nalgebra::Matrix4::<quantum::C64>::zeros();
    for k in 0..n {
        // Midpoint offsets spanning [-passband/2, passband/2].
        let offset = passband_nm * ((k as f64 + 0.5) / n as f64 - 0.5);
        let u = quantum::rotation_circular(rotation_slope_rad_per_nm * offset);
        let rotated = quantum::apply_local_unitary(rho, &u, &identity)?;
        acc += rotated.matrix();
    }
    TwoQubitState::from_matrix(acc.unscale(n as f64))
}

/// Correlation visibility of Phi+ after [`cwdm_depolarize`] over a passband.
pub fn cwdm_visibility(passband_nm: f64, rotation_slope_rad_per_nm: f64) -> Result<f64> {
    let rho = cwdm_depolarize(&quantum::phi_plus(), passband_nm, rotation_slope_rad_per_nm)?;
    Ok(quantum::correlation_visibility(&rho))
}

/// Find the rotation slope at which a passband shows the target visibility.
/// Bisection over the monotone branch of the visibility curve.
pub fn calibrate_cwdm_slope(passband_nm: f64, target_visibility: f64) -> Result<f64> {
    if !(0.0 < target_visibility && target_visibility < 1.0) {
        return Err(Error::invalid(
            "target_visibility",
            format!("{target_visibility} outside (0, 1)"),
        ));
    }
    // Visibility falls from 1 to ~0 as slope * passband/2 sweeps 0..pi.
    let mut lo = 0.0;
    let mut hi = 2.0 * std::f64::consts::PI / passband_nm;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cwdm_visibility(passband_nm, mid)? > target_visibility {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Channel and pair capacity of a total bandwidth sliced on a fixed grid:
/// N = floor(c * delta_lambda / lambda^2 / spacing), pairs = floor(N/2).
pub fn channel_capacity(total_bandwidth_nm: f64, center_nm: f64, spacing_ghz: f64) -> (u32, u32) {
    assert!(
        total_bandwidth_nm > 0.0 && center_nm > 0.0 && spacing_ghz > 0.0,
        "capacity arguments must be > 0"
    );
    let bandwidth_ghz = SPEED_OF_LIGHT_NM_THZ * total_bandwidth_nm / (center_nm * center_nm) * 1e3;
    let n = (bandwidth_ghz / spacing_ghz).floor() as u32;
    (n, n / 2)
}

/// The 8-channel, 200 GHz plan with 62 GHz passbands covering ITU channels
/// 27 through 41, with per-channel insertion losses from the default
/// calibration.
pub fn default_8_channel_plan() -> ChannelPlan {
    let channels = DEFAULT_CHANNEL_LOSSES_DB
        .iter()
        .map(|&(number, il)| ItuChannel::from_number(number, 62.0, il))
        .collect();
    ChannelPlan::new(channels, 200.0, 62.0).expect("static plan is valid")
}

/// Default per-channel insertion losses (dB) of the demultiplexer path.
/// Channel 31 sits at 2.218 dB (60% transmission); lower-numbered channels
/// transmit better, higher-numbered ones worse, and the exact values are
/// tuned so the per-pair coincidence rates land on their reference values
/// (430-480 c/s across the four pairs).
pub const DEFAULT_CHANNEL_LOSSES_DB: [(i32, f64); 8] = [
    (27, 1.805),
    (29, 1.905),
    (31, 2.218),
    (33, 2.240),
    (35, 2.4182),
    (37, 2.596),
    (39, 2.6297),
    (41, 3.4548),
];

/// Pump frequency that centers the default plan: channels 27+41 sum to it.
pub const DEFAULT_PUMP_FREQUENCY_THZ: f64 = 386.8;
