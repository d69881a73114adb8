//! Analytic model of the waveguide SPDC source: emission spectrum, emitted
//! polarization state, pair rate, and the brightness / conversion-efficiency
//! arithmetic used to characterize it.

use crate::error::{Error, Result};
use crate::quantum::{TwoQubitState, C64};
use crate::wdm::SPEED_OF_LIGHT_NM_THZ;
use serde::{Deserialize, Serialize};

/// Wavelength band (nm) outside which the source emits nothing.
pub const EMISSION_BAND_NM: (f64, f64) = (1300.0, 1800.0);

/// Second-harmonic-generation efficiencies of the two crystals in %/W,
/// kept as source metadata only (the reverse process is not simulated).
pub const SHG_EFFICIENCY_PERCENT_PER_W: (f64, f64) = (186.0, 218.0);

/// Static description of the photon-pair source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Center of the emission spectrum in nm.
    pub center_wavelength_nm: f64,
    /// Full width at half maximum of the emission spectrum in nm.
    pub spectral_fwhm_nm: f64,
    /// Pump power in mW.
    pub pump_power_mw: f64,
    /// Interferometer phase theta of the emitted state, radians.
    pub phase_theta_rad: f64,
    /// Amplitude-mixing angle alpha between the two crystals' contributions;
    /// pi/4 is balanced.
    pub crystal_balance_rad: f64,
    /// Pair-creation probability per pump photon inside the waveguide.
    pub intrinsic_efficiency: f64,
    /// Waveguide-to-fibre coupling efficiency per facet.
    pub coupling_efficiency_per_facet: f64,
    /// Spectral brightness in pairs/s/mW/GHz. The reference plane (waveguide
    /// output vs. detector input) is a convention of the surrounding scenario;
    /// `pair_rate` is plain arithmetic on whatever is configured here.
    pub brightness: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            center_wavelength_nm: 1550.0,
            spectral_fwhm_nm: 70.0,
            pump_power_mw: 0.018,
            phase_theta_rad: 0.0,
            crystal_balance_rad: std::f64::consts::FRAC_PI_4,
            intrinsic_efficiency: 1.1e-5,
            coupling_efficiency_per_facet: 0.5,
            brightness: 4.5e5,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spectral_fwhm_nm > 0.0) {
            return Err(Error::invalid(
                "spectral_fwhm_nm",
                format!("{} must be > 0", self.spectral_fwhm_nm),
            ));
        }
        if !(self.pump_power_mw >= 0.0) {
            return Err(Error::invalid(
                "pump_power_mw",
                format!("{} must be >= 0", self.pump_power_mw),
            ));
        }
        if !(0.0..=1.0).contains(&self.coupling_efficiency_per_facet) {
            return Err(Error::invalid(
                "coupling_efficiency_per_facet",
                format!("{} outside [0, 1]", self.coupling_efficiency_per_facet),
            ));
        }
        Ok(())
    }

    /// Total emission bandwidth expressed in GHz at the spectrum center.
    pub fn span_ghz(&self) -> f64 {
        let lambda = self.center_wavelength_nm;
        SPEED_OF_LIGHT_NM_THZ * self.spectral_fwhm_nm / (lambda * lambda) * 1e3
    }
}

/// Emitted state plus the total pair rate across the full spectrum.
#[derive(Debug, Clone)]
pub struct EmissionModel {
    pub state: TwoQubitState,
    pub pair_rate_total: f64,
}

/// Normalized spectral density (1/nm) at `wavelength_nm`.
///
/// The shape is a Gaussian with the configured FWHM; only in-channel
/// integrals matter downstream, so the physical sinc^2 shape is not needed.
/// Returns 0 outside the emission band.
pub fn spectral_density(cfg: &SourceConfig, wavelength_nm: f64) -> f64 {
    if wavelength_nm <= EMISSION_BAND_NM.0 || wavelength_nm >= EMISSION_BAND_NM.1 {
        return 0.0;
    }
    let sigma = cfg.spectral_fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
    let x = (wavelength_nm - cfg.center_wavelength_nm) / sigma;
    (-0.5 * x * x).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Pure emitted state cos(alpha)|HH> + e^{i theta} sin(alpha)|VV>.
pub fn emitted_state(cfg: &SourceConfig) -> TwoQubitState {
    let alpha = cfg.crystal_balance_rad;
    let amp_hh = C64::new(alpha.cos(), 0.0);
    let amp_vv = C64::from_polar(alpha.sin(), cfg.phase_theta_rad);
    TwoQubitState::from_pure(nalgebra::Vector4::new(
        amp_hh,
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        amp_vv,
    ))
}

/// Emitted state together with the full-spectrum pair rate B * P * span.
pub fn emission(cfg: &SourceConfig) -> Result<EmissionModel> {
    cfg.validate()?;
    Ok(EmissionModel {
        state: emitted_state(cfg),
        pair_rate_total: cfg.brightness * cfg.pump_power_mw * cfg.span_ghz(),
    })
}

/// Pair rate B * P * delta_nu within a slice of the spectrum.
pub fn pair_rate(cfg: &SourceConfig, bandwidth_ghz: f64) -> Result<f64> {
    if bandwidth_ghz < 0.0 {
        return Err(Error::invalid(
            "bandwidth_ghz",
            format!("{bandwidth_ghz} must be >= 0"),
        ));
    }
    if cfg.pump_power_mw < 0.0 {
        return Err(Error::invalid(
            "pump_power_mw",
            format!("{} must be >= 0", cfg.pump_power_mw),
        ));
    }
    if bandwidth_ghz > cfg.span_ghz() {
        return Err(Error::invalid(
            "bandwidth_ghz",
            format!(
                "{bandwidth_ghz} GHz exceeds the source bandwidth of {:.1} GHz",
                cfg.span_ghz()
            ),
        ));
    }
    Ok(cfg.brightness * cfg.pump_power_mw * bandwidth_ghz)
}

/// Spectral brightness inferred from a measured coincidence rate:
/// B = Rc / (eta_det1 * eta_det2 * eta_duty) / P / delta_nu.
pub fn brightness_from_counts(
    coincidence_rate_cps: f64,
    eta_det1: f64,
    eta_det2: f64,
    eta_duty: f64,
    pump_power_mw: f64,
    bandwidth_ghz: f64,
) -> Result<f64> {
    for (name, value) in [
        ("eta_det1", eta_det1),
        ("eta_det2", eta_det2),
        ("eta_duty", eta_duty),
    ] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::invalid(name, format!("{value} outside (0, 1]")));
        }
    }
    if !(pump_power_mw > 0.0) {
        return Err(Error::invalid(
            "pump_power_mw",
            format!("{pump_power_mw} must be > 0"),
        ));
    }
    if !(bandwidth_ghz > 0.0) {
        return Err(Error::invalid(
            "bandwidth_ghz",
            format!("{bandwidth_ghz} must be > 0"),
        ));
    }
    Ok(coincidence_rate_cps / (eta_det1 * eta_det2 * eta_duty) / pump_power_mw / bandwidth_ghz)
}

/// Pair-creation probability per pump photon inside the waveguide, from a
/// power-ratio measurement corrected for the two fibre-coupling facets
/// (pump in, pairs out): (p_out / p_in) / coupling^2.
pub fn intrinsic_conversion_efficiency(
    p_out_w: f64,
    p_in_w: f64,
    coupling_per_facet: f64,
) -> Result<f64> {
    if !(p_in_w > 0.0) {
        return Err(Error::invalid("p_in_w", format!("{p_in_w} must be > 0")));
    }
    if !(coupling_per_facet > 0.0 && coupling_per_facet <= 1.0) {
        return Err(Error::invalid(
            "coupling_per_facet",
            format!("{coupling_per_facet} outside (0, 1]"),
        ));
    }
    Ok((p_out_w / p_in_w) / (coupling_per_facet * coupling_per_facet))
}
