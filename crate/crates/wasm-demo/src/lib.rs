//! Browser bindings for three interactive views of the simulator: a
//! tomography run with live density matrices, the visibility cost of coarse
//! wavelength slicing, and switch-fabric routing. Every export returns a
//! JSON string so the page needs no extra glue types.

use entmux::quantum::{metrics, werner_state, TwoQubitState};
use entmux::scenario::ScenarioConfig;
use entmux::switch::route_request;
use entmux::tomography::{mle_reconstruct, simulate_tomography, subtract_background};
use entmux::wdm::{calibrate_cwdm_slope, cwdm_depolarize, cwdm_visibility};
use wasm_bindgen::prelude::wasm_bindgen;

fn matrix_parts(rho: &TwoQubitState) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = rho.matrix();
    let re = (0..4)
        .map(|i| (0..4).map(|j| m[(i, j)].re).collect())
        .collect();
    let im = (0..4)
        .map(|i| (0..4).map(|j| m[(i, j)].im).collect())
        .collect();
    (re, im)
}

fn error_json(message: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": message.to_string() }).to_string()
}

fn state_json(rho: &TwoQubitState) -> Result<serde_json::Value, entmux::Error> {
    let m = metrics(rho)?;
    let (re, im) = matrix_parts(rho);
    Ok(serde_json::json!({
        "fidelity": m.fidelity,
        "purity": m.purity,
        "qber_mean": m.qber_mean,
        "rho_re": re,
        "rho_im": im,
    }))
}

/// Simulate a 16-setting acquisition of a Werner-noise link state and
/// reconstruct it with and without background subtraction.
#[wasm_bindgen]
pub fn run_tomography(
    rate_cps: f64,
    time_per_setting_s: f64,
    background_cps: f64,
    link_werner_v: f64,
    seed: u64,
) -> String {
    let result = (|| -> Result<String, entmux::Error> {
        let truth = werner_state(link_werner_v)?;
        let record =
            simulate_tomography(&truth, rate_cps, time_per_setting_s, background_cps, seed)?;
        let raw = mle_reconstruct(&record, None)?;
        let clean = mle_reconstruct(&subtract_background(&record), None)?;
        let settings: Vec<String> = entmux::quantum::PolarizationSetting::all()
            .iter()
            .map(|s| s.label())
            .collect();
        Ok(serde_json::json!({
            "settings": settings,
            "counts": record.counts,
            "raw": state_json(&raw.rho)?,
            "no_background": state_json(&clean.rho)?,
            "iterations": [raw.iterations, clean.iterations],
        })
        .to_string())
    })();
    result.unwrap_or_else(error_json)
}

/// Visibility of the distributed Bell state versus demultiplexer passband
/// at a fixed birefringence slope (rad/nm).
#[wasm_bindgen]
pub fn visibility_curve(
    rotation_slope_rad_per_nm: f64,
    min_passband_nm: f64,
    max_passband_nm: f64,
    points: usize,
) -> String {
    let result = (|| -> Result<String, entmux::Error> {
        let n = points.clamp(2, 400);
        let mut rows = Vec::with_capacity(n);
        for k in 0..n {
            let passband =
                min_passband_nm + (max_passband_nm - min_passband_nm) * k as f64 / (n - 1) as f64;
            let rho = cwdm_depolarize(
                &entmux::quantum::phi_plus(),
                passband,
                rotation_slope_rad_per_nm,
            )?;
            rows.push(serde_json::json!({
                "passband_nm": passband,
                "visibility": entmux::quantum::correlation_visibility(&rho),
                "purity": rho.purity(),
            }));
        }
        Ok(serde_json::json!({
            "slope_rad_per_nm": rotation_slope_rad_per_nm,
            "coarse_13nm": cwdm_visibility(13.0, rotation_slope_rad_per_nm)?,
            "dense_0p5nm": cwdm_visibility(0.5, rotation_slope_rad_per_nm)?,
            "curve": rows,
        })
        .to_string())
    })();
    result.unwrap_or_else(error_json)
}

/// Solve the birefringence slope that yields `target_visibility` over
/// `passband_nm`. Returns NaN on invalid input.
#[wasm_bindgen]
pub fn calibrate_slope(passband_nm: f64, target_visibility: f64) -> f64 {
    calibrate_cwdm_slope(passband_nm, target_visibility).unwrap_or(f64::NAN)
}

/// The shipped default slope, calibrated for 0.87 visibility at 13 nm.
#[wasm_bindgen]
pub fn default_slope() -> f64 {
    ScenarioConfig::default().cwdm.rotation_slope_rad_per_nm
}

/// Route an entangled pair to two users through the two-switch fabric.
#[wasm_bindgen]
pub fn route_users(user_a: String, user_b: String) -> String {
    let result = (|| -> Result<String, entmux::Error> {
        let config = ScenarioConfig::default();
        let fabric = entmux::switch::paper_fabric_4user(config.fabric.switch_loss_db);
        let feeds: Vec<entmux::switch::PairAssignment> = config
            .fabric
            .feeds
            .iter()
            .map(|feed| entmux::switch::PairAssignment {
                pair: entmux::wdm::EntangledChannelPair {
                    low: *config.plan.channel(feed.channel_low).unwrap(),
                    high: *config.plan.channel(feed.channel_high).unwrap(),
                },
                port_low: feed.port_low.clone(),
                port_high: feed.port_high.clone(),
            })
            .collect();
        let routed = route_request(&fabric, &feeds, &user_a, &user_b)?;
        let setting: Vec<(String, String)> = routed
            .setting
            .iter()
            .map(|(id, s)| (id.clone(), format!("{s:?}")))
            .collect();
        let map = entmux::switch::apply_setting(&fabric, &routed.setting)?;
        Ok(serde_json::json!({
            "users": [user_a, user_b],
            "setting": setting,
            "channels": routed.channel_pair.label(),
            "depth": [routed.per_photon_depth.0, routed.per_photon_depth.1],
            "port_map": map,
        })
        .to_string())
    })();
    result.unwrap_or_else(error_json)
}
