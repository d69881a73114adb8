//! 16-setting coincidence acquisition, density-matrix reconstruction by
//! linear inversion and maximum-likelihood estimation, and background
//! subtraction.

use crate::error::{Error, Result};
use crate::quantum::{
    born_probability, maximally_mixed, Matrix4c, PolarizationSetting, TwoQubitState, C64,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Coincidence counts of one 16-setting acquisition.
///
/// `counts[i]` belongs to `PolarizationSetting::all()[i]`. Counts are stored
/// as reals: the simulator produces integers, background subtraction leaves
/// fractional values behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub counts: Vec<f64>,
    pub acquisition_time_per_setting_s: f64,
    pub background_rate_cps: f64,
}

impl TomographyRecord {
    pub fn new(
        counts: Vec<f64>,
        acquisition_time_per_setting_s: f64,
        background_rate_cps: f64,
    ) -> Result<Self> {
        if counts.len() != 16 {
            return Err(Error::invalid(
                "counts",
                format!("{} entries, expected 16", counts.len()),
            ));
        }
        if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::invalid("counts", "must be finite and >= 0"));
        }
        if !(acquisition_time_per_setting_s > 0.0) {
            return Err(Error::invalid(
                "acquisition_time_per_setting_s",
                "must be > 0",
            ));
        }
        Ok(Self {
            counts,
            acquisition_time_per_setting_s,
            background_rate_cps,
        })
    }

    pub fn count(&self, setting: PolarizationSetting) -> f64 {
        let idx = PolarizationSetting::all()
            .iter()
            .position(|s| *s == setting)
            .expect("setting set is closed");
        self.counts[idx]
    }

    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Simulate a tomography acquisition: for each of the 16 settings a Poisson
/// draw with mean (rate_at_max * p_s / 0.5 + background) * time. The 0.5
/// normalization defines `coincidence_rate_at_max` as the rate observed in a
/// maximal setting of a Bell state, the convention used to report rates.
pub fn simulate_tomography(
    rho: &TwoQubitState,
    coincidence_rate_at_max_cps: f64,
    time_per_setting_s: f64,
    background_cps: f64,
    seed: u64,
) -> Result<TomographyRecord> {
    if !(coincidence_rate_at_max_cps > 0.0) {
        return Err(Error::invalid("coincidence_rate_at_max_cps", "must be > 0"));
    }
    if !(time_per_setting_s > 0.0) {
        return Err(Error::invalid("time_per_setting_s", "must be > 0"));
    }
    if background_cps < 0.0 {
        return Err(Error::invalid("background_cps", "must be >= 0"));
    }
    if !rho.is_physical() {
        return Err(Error::NonPhysicalState {
            min_eigenvalue: rho.eigenvalues()[0],
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let counts = PolarizationSetting::all()
        .iter()
        .map(|&setting| {
            let p = born_probability(rho, setting);
            let mean =
                (coincidence_rate_at_max_cps * p / 0.5 + background_cps) * time_per_setting_s;
            if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    TomographyRecord::new(counts, time_per_setting_s, background_cps)
}

/// Subtract the flat accidental background: each count drops by
/// background_rate * time, clamped at zero; the record's background field
/// resets to zero.
pub fn subtract_background(record: &TomographyRecord) -> TomographyRecord {
    let pedestal = record.background_rate_cps * record.acquisition_time_per_setting_s;
    TomographyRecord {
        counts: record
            .counts
            .iter()
            .map(|c| (c - pedestal).max(0.0))
            .collect(),
        acquisition_time_per_setting_s: record.acquisition_time_per_setting_s,
        background_rate_cps: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReconstructionMethod {
    Linear,
    Mle,
}

/// A reconstructed density matrix with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub rho: TwoQubitState,
    pub method: ReconstructionMethod,
    /// False when linear inversion produced negative eigenvalues. MLE
    /// results are physical by construction.
    pub physical: bool,
    /// Poisson log-likelihood at the returned state (MLE only).
    pub log_likelihood: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

// Hermitian parameterization used by the linear solve: 4 diagonal entries,
// then Re/Im of the 6 upper-triangle entries.
const OFF_DIAG: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn basis_matrix(k: usize) -> Matrix4c {
    let mut m = Matrix4c::zeros();
    if k < 4 {
        m[(k, k)] = C64::new(1.0, 0.0);
    } else if k < 10 {
        let (i, j) = OFF_DIAG[k - 4];
        m[(i, j)] = C64::new(1.0, 0.0);
        m[(j, i)] = C64::new(1.0, 0.0);
    } else {
        let (i, j) = OFF_DIAG[k - 10];
        m[(i, j)] = C64::new(0.0, 1.0);
        m[(j, i)] = C64::new(0.0, -1.0);
    }
    m
}

fn params_to_matrix(x: &DVector<f64>) -> Matrix4c {
    let mut m = Matrix4c::zeros();
    for k in 0..16 {
        m += basis_matrix(k).scale(x[k]);
    }
    m
}

/// Design matrix D[s][k] = Tr(e_k Pi_s) of the fixed 16-setting scheme.
fn design_matrix() -> DMatrix<f64> {
    let settings = PolarizationSetting::all();
    DMatrix::from_fn(16, 16, |s, k| {
        (settings[s].joint_projector() * basis_matrix(k)).trace().re
    })
}

/// Reconstruct by solving the linear system relating the 16 expected counts
/// to Tr(rho Pi_a (x) Pi_b). The overall scale comes from the complete
/// H/V x H/V subset, whose probabilities sum to one, which also pins the
/// trace to one exactly. The result may be unphysical and is flagged.
pub fn linear_inversion(record: &TomographyRecord) -> Result<ReconstructionResult> {
    // HH, HV, VH, VV sit at indices 0, 1, 4, 5 of the acquisition order.
    let scale: f64 = [0usize, 1, 4, 5].iter().map(|&i| record.counts[i]).sum();
    if !(scale > 0.0) {
        return Err(Error::invalid(
            "counts",
            "H/V-basis counts are all zero; no scale information",
        ));
    }
    let probs = DVector::from_iterator(16, record.counts.iter().map(|c| c / scale));
    let design = design_matrix();
    let solved = design
        .lu()
        .solve(&probs)
        .expect("the fixed 16-setting design matrix is invertible");
    let rho = TwoQubitState::from_matrix(params_to_matrix(&solved))?;
    let physical = rho.is_physical();
    Ok(ReconstructionResult {
        physical,
        rho,
        method: ReconstructionMethod::Linear,
        log_likelihood: None,
        converged: true,
        iterations: 0,
    })
}

// --- Maximum likelihood -----------------------------------------------------

/// Lower-triangular factor T with rho = T^dag T / Tr(T^dag T); 16 real
/// parameters: 4 real diagonals and Re/Im of the 6 sub-diagonal entries.
#[derive(Clone)]
struct Factor {
    t: Matrix4c,
}

impl Factor {
    /// Build from a physical density matrix: a Cholesky-style recursion run
    /// from the bottom-right corner, since (T^dag T)_{ij} sums over rows
    /// k >= max(i, j) of the lower-triangular T.
    fn from_state(rho: &TwoQubitState) -> Factor {
        // Blend in a little of the maximally mixed state so the factor has
        // full rank even for (near-)pure inputs.
        let eps = 1e-6;
        let g = rho.matrix().scale(1.0 - eps) + maximally_mixed().matrix().scale(eps);
        let mut t = Matrix4c::zeros();
        for i in (0..4).rev() {
            let mut diag = g[(i, i)].re;
            for k in (i + 1)..4 {
                diag -= t[(k, i)].norm_sqr();
            }
            let tii = diag.max(1e-18).sqrt();
            t[(i, i)] = C64::new(tii, 0.0);
            // G_{ij} = conj(T_ii) T_ij + sum_{k>i} conj(T_ki) T_kj for i > j.
            for j in (0..i).rev() {
                let mut acc = g[(i, j)];
                for k in (i + 1)..4 {
                    acc -= t[(k, i)].conj() * t[(k, j)];
                }
                t[(i, j)] = acc / tii;
            }
        }
        Factor { t }
    }

    fn gram(&self) -> Matrix4c {
        self.t.adjoint() * self.t
    }

    fn state_matrix(&self) -> Matrix4c {
        let g = self.gram();
        g.unscale(g.trace().re)
    }

    fn params(&self) -> DVector<f64> {
        let mut x = DVector::zeros(16);
        for i in 0..4 {
            x[i] = self.t[(i, i)].re;
        }
        for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
            // Lower triangle: entry (j, i) with j > i.
            x[4 + k] = self.t[(j, i)].re;
            x[10 + k] = self.t[(j, i)].im;
        }
        x
    }

    fn from_params(x: &DVector<f64>) -> Factor {
        let mut t = Matrix4c::zeros();
        for i in 0..4 {
            t[(i, i)] = C64::new(x[i], 0.0);
        }
        for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
            t[(j, i)] = C64::new(x[4 + k], x[10 + k]);
        }
        Factor { t }
    }

    fn normalized(&self) -> Factor {
        let norm = self.gram().trace().re.sqrt();
        Factor {
            t: self.t.unscale(norm),
        }
    }
}

struct Objective<'a> {
    counts: &'a [f64],
    projectors: Vec<Matrix4c>,
    total_counts: f64,
}

impl<'a> Objective<'a> {
    fn new(counts: &'a [f64]) -> Self {
        Self {
            counts,
            projectors: PolarizationSetting::all()
                .iter()
                .map(|s| s.joint_projector())
                .collect(),
            total_counts: counts.iter().sum(),
        }
    }

    fn probabilities(&self, rho: &Matrix4c) -> Vec<f64> {
        self.projectors
            .iter()
            .map(|m| (rho * m).trace().re.max(1e-300))
            .collect()
    }

    /// Poisson log-likelihood with the flux scale profiled out:
    /// lambda_s = A p_s with A = sum(n) / sum(p), the exact maximizer.
    fn log_likelihood(&self, factor: &Factor) -> f64 {
        let rho = factor.state_matrix();
        let probs = self.probabilities(&rho);
        let sum_p: f64 = probs.iter().sum();
        let a = self.total_counts / sum_p;
        self.counts
            .iter()
            .zip(&probs)
            .map(|(n, p)| {
                let lambda = a * p;
                if *n > 0.0 {
                    n * lambda.ln() - lambda
                } else {
                    -lambda
                }
            })
            .sum()
    }

    /// Analytic gradient with respect to the 16 factor parameters.
    fn gradient(&self, factor: &Factor) -> DVector<f64> {
        let g = factor.gram();
        let trace = g.trace().re;
        let rho = g.unscale(trace);
        let probs = self.probabilities(&rho);
        let sum_p: f64 = probs.iter().sum();
        let a = self.total_counts / sum_p;
        // dL/dG = sum_s w_s (Pi_s - p_s I) / tr(G), Hermitian.
        let mut w = Matrix4c::zeros();
        for ((n, p), proj) in self.counts.iter().zip(&probs).zip(&self.projectors) {
            let weight = a * (n / (a * p) - 1.0);
            w += (proj - Matrix4c::identity().scale(*p)).scale(weight / trace);
        }
        // dL for a perturbation dT is 2 Re tr(W T^dag dT).
        let c = w * factor.t.adjoint();
        let mut grad = DVector::zeros(16);
        for i in 0..4 {
            grad[i] = 2.0 * c[(i, i)].re;
        }
        for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
            grad[4 + k] = 2.0 * c[(i, j)].re;
            grad[10 + k] = -2.0 * c[(i, j)].im;
        }
        grad
    }
}

/// Convergence threshold on the per-count gradient norm.
pub const MLE_GRADIENT_TOLERANCE: f64 = 1e-8;
/// Iteration cap of the ascent.
pub const MLE_MAX_ITERATIONS: usize = 10_000;

/// Maximum-likelihood reconstruction over physical states via the factored
/// parameterization rho = T^dag T / Tr(T^dag T).
///
/// Monotone gradient ascent with backtracking line search; deterministic
/// given the initialization (default: the physicality-projected linear
/// inversion). Non-convergence is reported through the `converged` flag with
/// the best iterate retained.
pub fn mle_reconstruct(
    record: &TomographyRecord,
    init: Option<&TwoQubitState>,
) -> Result<ReconstructionResult> {
    if record.counts.len() != 16 {
        return Err(Error::invalid("counts", "expected 16 entries"));
    }
    if !(record.total_counts() > 0.0) {
        return Err(Error::invalid("counts", "all counts are zero"));
    }
    let start = match init {
        Some(rho) => rho.project_physical(),
        None => linear_inversion(record)?.rho.project_physical(),
    };
    let objective = Objective::new(&record.counts);
    let mut factor = Factor::from_state(&start).normalized();
    let mut value = objective.log_likelihood(&factor);
    let mut step = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    // Polak-Ribiere conjugate gradient with a backtracking line search; the
    // restarts keep every accepted move an ascent step, so the likelihood is
    // monotone throughout.
    let mut prev_grad: Option<DVector<f64>> = None;
    let mut direction = DVector::zeros(16);
    for iter in 0..MLE_MAX_ITERATIONS {
        iterations = iter + 1;
        let grad = objective.gradient(&factor);
        let grad_norm = grad.norm();
        if grad_norm / record.total_counts().max(1.0) < MLE_GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let beta = match &prev_grad {
            Some(prev) if iter % 16 != 0 => (grad.dot(&(&grad - prev)) / prev.dot(prev)).max(0.0),
            _ => 0.0,
        };
        direction = &grad + &direction * beta;
        let mut slope = direction.dot(&grad);
        if slope <= 0.0 {
            direction = grad.clone();
            slope = grad_norm * grad_norm;
        }
        prev_grad = Some(grad);

        let params = factor.params();
        let mut advanced = false;
        for _ in 0..80 {
            let candidate = Factor::from_params(&(&params + &direction * step)).normalized();
            let candidate_value = objective.log_likelihood(&candidate);
            if candidate_value > value + 1e-4 * step * slope {
                factor = candidate;
                value = candidate_value;
                step *= 1.8;
                advanced = true;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        if !advanced {
            // No ascent at floating-point resolution along this direction.
            converged = true;
            break;
        }
    }

    let rho = TwoQubitState::from_matrix(factor.state_matrix())?;
    Ok(ReconstructionResult {
        physical: true,
        log_likelihood: Some(value),
        rho,
        method: ReconstructionMethod::Mle,
        converged,
        iterations,
    })
}

/// Exact expected counts for a state under the acquisition model, mainly for
/// noiseless-roundtrip checks.
pub fn expected_record(
    rho: &TwoQubitState,
    coincidence_rate_at_max_cps: f64,
    time_per_setting_s: f64,
    background_cps: f64,
) -> Result<TomographyRecord> {
    let counts = PolarizationSetting::all()
        .iter()
        .map(|&s| {
            (coincidence_rate_at_max_cps * born_probability(rho, s) / 0.5 + background_cps)
                * time_per_setting_s
        })
        .collect();
    TomographyRecord::new(counts, time_per_setting_s, background_cps)
}

/// Eigenvalue floor check used by tests on MLE output.
pub fn min_eigenvalue(rho: &TwoQubitState) -> f64 {
    let eig = SymmetricEigen::new(*rho.matrix());
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Record as CSV: `setting,counts,time_s`, one row per setting in
/// acquisition order.
pub fn record_csv(record: &TomographyRecord) -> String {
    let mut out = String::from("setting,counts,time_s\n");
    for (setting, count) in PolarizationSetting::all().iter().zip(&record.counts) {
        out.push_str(&format!(
            "{},{},{}\n",
            setting.label(),
            count,
            record.acquisition_time_per_setting_s
        ));
    }
    out
}

/// Reconstruction as a JSON report: the full matrix, derived metrics and
/// the method that produced it.
pub fn reconstruction_report(result: &ReconstructionResult) -> crate::Result<serde_json::Value> {
    let metrics = crate::quantum::metrics(&result.rho.project_physical())?;
    Ok(serde_json::json!({
        "method": result.method,
        "physical": result.physical,
        "converged": result.converged,
        "iterations": result.iterations,
        "log_likelihood": result.log_likelihood,
        "rho": result.rho,
        "metrics": metrics,
    }))
}

/// Real and imaginary parts of a density matrix as an aligned plain-text
/// grid, for eyeballing against bar-chart style figures.
pub fn matrix_grid(rho: &TwoQubitState) -> String {
    let labels = ["HH", "HV", "VH", "VV"];
    let m = rho.matrix();
    let mut out = String::new();
    for (title, part) in [("Re(rho)", true), ("Im(rho)", false)] {
        out.push_str(title);
        out.push('\n');
        out.push_str("      ");
        for l in labels {
            out.push_str(&format!("{l:>8}"));
        }
        out.push('\n');
        for (i, l) in labels.iter().enumerate() {
            out.push_str(&format!("  {l:<4}"));
            for j in 0..4 {
                let v = if part { m[(i, j)].re } else { m[(i, j)].im };
                out.push_str(&format!("{v:>8.3}"));
            }
            out.push('\n');
        }
    }
    out
}
