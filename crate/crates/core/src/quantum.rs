//! Two-qubit polarization states, measurement probabilities and entanglement
//! metrics.
//!
//! All states are 4x4 complex density matrices over the H/V (x) H/V product
//! basis, indexed in the order HH, HV, VH, VV. The circular-polarization
//! convention is R = (|H> - i|V>)/sqrt(2); flipping that sign flips the
//! imaginary parts of every reconstructed matrix, so it is fixed here once.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

pub type C64 = Complex64;
pub type Matrix2c = Matrix2<C64>;
pub type Matrix4c = Matrix4<C64>;

/// Tolerance for the Hermiticity and unit-trace invariants.
pub const STATE_TOLERANCE: f64 = 1e-12;
/// Eigenvalues above this (slightly negative) floor count as physical.
pub const PHYSICALITY_TOLERANCE: f64 = -1e-10;
/// Tolerance for the unitarity check in [`apply_local_unitary`].
pub const UNITARITY_TOLERANCE: f64 = 1e-10;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-photon analyzer settings used in the 16-setting tomography scheme:
/// horizontal, vertical, +45 degrees and right circular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    P,
    R,
}

impl Polarization {
    pub const ALL: [Polarization; 4] = [
        Polarization::H,
        Polarization::V,
        Polarization::P,
        Polarization::R,
    ];

    /// Analyzer ket as a column vector in the H/V basis.
    pub fn ket(self) -> nalgebra::Vector2<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::H => nalgebra::Vector2::new(c(1.0, 0.0), c(0.0, 0.0)),
            Polarization::V => nalgebra::Vector2::new(c(0.0, 0.0), c(1.0, 0.0)),
            Polarization::P => nalgebra::Vector2::new(c(s, 0.0), c(s, 0.0)),
            Polarization::R => nalgebra::Vector2::new(c(s, 0.0), c(0.0, -s)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::P => "P",
            Polarization::R => "R",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Rank-1 projector onto the given analyzer setting.
pub fn projector(p: Polarization) -> Matrix2c {
    let k = p.ket();
    k * k.adjoint()
}

// Antidiagonal (-45 degree) ket, the partner of P; used internally for the
// x-basis correlation and never exposed as a tomography setting.
fn ket_m() -> nalgebra::Vector2<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    nalgebra::Vector2::new(c(s, 0.0), c(-s, 0.0))
}

/// Joint analyzer setting (Alice, Bob) for coincidence measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolarizationSetting {
    pub alice: Polarization,
    pub bob: Polarization,
}

impl PolarizationSetting {
    pub fn new(alice: Polarization, bob: Polarization) -> Self {
        Self { alice, bob }
    }

    /// The 16 distinct settings in acquisition order: HH, HV, HP, HR, VH, VV,
    /// VP, VR, PH, PV, PP, PR, RH, RV, RP, RR.
    pub fn all() -> [PolarizationSetting; 16] {
        let mut out = [PolarizationSetting::new(Polarization::H, Polarization::H); 16];
        let mut idx = 0;
        for a in Polarization::ALL {
            for b in Polarization::ALL {
                out[idx] = PolarizationSetting::new(a, b);
                idx += 1;
            }
        }
        out
    }

    /// Joint projector on the two-photon space.
    pub fn joint_projector(&self) -> Matrix4c {
        projector(self.alice).kronecker(&projector(self.bob))
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.alice, self.bob)
    }
}

impl fmt::Display for PolarizationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.alice, self.bob)
    }
}

/// Two-qubit polarization density matrix.
///
/// Construction enforces Hermiticity and unit trace; positivity is checked
/// separately so that linear-inversion tomography can still hold (and flag)
/// slightly unphysical matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    matrix: Matrix4c,
}

impl TwoQubitState {
    /// Build a state from a density matrix, enforcing Hermiticity and trace 1.
    pub fn from_matrix(matrix: Matrix4c) -> Result<Self> {
        let herm_dev = (matrix - matrix.adjoint()).camax();
        if herm_dev > STATE_TOLERANCE {
            return Err(Error::invalid(
                "matrix",
                format!("not Hermitian (deviation {herm_dev:.3e})"),
            ));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > STATE_TOLERANCE || trace.im.abs() > STATE_TOLERANCE {
            return Err(Error::invalid(
                "matrix",
                format!("trace is {trace}, expected 1"),
            ));
        }
        // Exact symmetrization removes rounding-level asymmetry.
        let matrix = (matrix + matrix.adjoint()).scale(0.5);
        Ok(Self { matrix })
    }

    /// Build directly from a pure state vector (normalized internally).
    pub fn from_pure(ket: nalgebra::Vector4<C64>) -> Self {
        let norm = ket.norm();
        let ket = ket.unscale(norm);
        Self {
            matrix: ket * ket.adjoint(),
        }
    }

    pub fn matrix(&self) -> &Matrix4c {
        &self.matrix
    }

    /// Eigenvalues in ascending order (real, since the matrix is Hermitian).
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.matrix);
        let mut vals = [0.0; 4];
        for (slot, v) in vals.iter_mut().zip(eig.eigenvalues.iter()) {
            *slot = *v;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    /// True if every eigenvalue is above the physicality floor.
    pub fn is_physical(&self) -> bool {
        self.eigenvalues()[0] >= PHYSICALITY_TOLERANCE
    }

    fn require_physical(&self) -> Result<()> {
        let min = self.eigenvalues()[0];
        if min < PHYSICALITY_TOLERANCE {
            Err(Error::NonPhysicalState {
                min_eigenvalue: min,
            })
        } else {
            Ok(())
        }
    }

    /// Tr(rho^2); 1 for pure states, 0.25 for the maximally mixed state.
    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    /// Overlap Tr(rho sigma); equals the fidelity when `other` is pure.
    pub fn overlap(&self, other: &TwoQubitState) -> f64 {
        (self.matrix * other.matrix).trace().re
    }

    /// Fidelity <Phi+|rho|Phi+> against the target Bell state.
    pub fn fidelity_phi_plus(&self) -> f64 {
        self.overlap(&phi_plus())
    }

    /// Trace distance 0.5 * ||rho - sigma||_1.
    pub fn trace_distance(&self, other: &TwoQubitState) -> f64 {
        let diff = self.matrix - other.matrix;
        let eig = SymmetricEigen::new(diff);
        0.5 * eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, valid for
    /// mixed states; coincides with [`Self::overlap`] when either is pure.
    pub fn uhlmann_fidelity(&self, other: &TwoQubitState) -> f64 {
        let sqrt_rho = hermitian_sqrt(&self.matrix);
        let inner = sqrt_rho * other.matrix * sqrt_rho;
        let eig = SymmetricEigen::new(inner);
        let root_sum: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
        (root_sum * root_sum).clamp(0.0, 1.0)
    }

    /// Clip negative eigenvalues to zero and renormalize. Used to project a
    /// linear-inversion result onto the physical set before MLE.
    pub fn project_physical(&self) -> TwoQubitState {
        let eig = SymmetricEigen::new(self.matrix);
        let mut m = Matrix4c::zeros();
        for (i, &val) in eig.eigenvalues.iter().enumerate() {
            let clipped = val.max(0.0);
            if clipped > 0.0 {
                let v = eig.eigenvectors.column(i);
                m += (v * v.adjoint()).scale(clipped);
            }
        }
        let trace = m.trace().re;
        if trace <= 0.0 {
            return maximally_mixed();
        }
        TwoQubitState {
            matrix: m.unscale(trace),
        }
    }
}

impl Serialize for TwoQubitState {
    /// Serialized as a 4x4 array of [re, im] pairs.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| {
                        let z = self.matrix[(i, j)];
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TwoQubitState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(deserializer)?;
        if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
            return Err(D::Error::custom("expected a 4x4 matrix of [re, im] pairs"));
        }
        let mut m = Matrix4c::zeros();
        for (i, row) in rows.iter().enumerate() {
            for (j, &[re, im]) in row.iter().enumerate() {
                m[(i, j)] = c(re, im);
            }
        }
        TwoQubitState::from_matrix(m).map_err(D::Error::custom)
    }
}

fn hermitian_sqrt(m: &Matrix4c) -> Matrix4c {
    let eig = SymmetricEigen::new(*m);
    let mut out = Matrix4c::zeros();
    for (i, &val) in eig.eigenvalues.iter().enumerate() {
        let root = val.max(0.0).sqrt();
        if root > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (v * v.adjoint()).scale(root);
        }
    }
    out
}

/// Pure Bell-type state (|HH> + e^{i theta}|VV>)/sqrt(2) as a density matrix.
pub fn bell_state(theta: f64) -> TwoQubitState {
    assert!(theta.is_finite(), "bell_state: theta must be finite");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let phase = C64::from_polar(s, theta);
    TwoQubitState::from_pure(nalgebra::Vector4::new(
        c(s, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        phase,
    ))
}

/// The target Bell state |Phi+> = (|HH> + |VV>)/sqrt(2).
pub fn phi_plus() -> TwoQubitState {
    bell_state(0.0)
}

/// The maximally mixed two-qubit state I/4.
pub fn maximally_mixed() -> TwoQubitState {
    TwoQubitState {
        matrix: Matrix4c::identity().scale(0.25),
    }
}

/// Werner state v|Phi+><Phi+| + (1-v) I/4; the isotropic white-noise model.
pub fn werner_state(v: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid("v", format!("{v} outside [0, 1]")));
    }
    let m = phi_plus().matrix.scale(v) + Matrix4c::identity().scale((1.0 - v) * 0.25);
    Ok(TwoQubitState { matrix: m })
}

/// Born-rule probability Tr(rho Pi_alice (x) Pi_bob) for one joint setting.
pub fn measurement_probability(rho: &TwoQubitState, setting: PolarizationSetting) -> Result<f64> {
    rho.require_physical()?;
    Ok(born_probability(rho, setting))
}

/// Born-rule probability without the physicality gate; tomography internals
/// evaluate expected counts for candidate (possibly unphysical) matrices.
pub(crate) fn born_probability(rho: &TwoQubitState, setting: PolarizationSetting) -> f64 {
    let p = (rho.matrix * setting.joint_projector()).trace().re;
    p.clamp(0.0, 1.0)
}

/// Conjugate by a product of local unitaries: (Ua (x) Ub) rho (Ua (x) Ub)^dag.
pub fn apply_local_unitary(
    rho: &TwoQubitState,
    u_alice: &Matrix2c,
    u_bob: &Matrix2c,
) -> Result<TwoQubitState> {
    for u in [u_alice, u_bob] {
        let dev = (u * u.adjoint() - Matrix2c::identity()).camax();
        if dev > UNITARITY_TOLERANCE {
            return Err(Error::NonUnitary { deviation: dev });
        }
    }
    let u = u_alice.kronecker(u_bob);
    let m = u * rho.matrix * u.adjoint();
    // Conjugation preserves Hermiticity and trace; symmetrize to keep
    // rounding noise below the construction tolerance.
    Ok(TwoQubitState {
        matrix: (m + m.adjoint()).scale(0.5),
    })
}

/// Correlation E = P(same) - P(different) for a joint measurement in the
/// basis spanned by the orthonormal kets `(k0, k1)` on both sides.
fn correlation_in_basis(
    rho: &TwoQubitState,
    k0: &nalgebra::Vector2<C64>,
    k1: &nalgebra::Vector2<C64>,
) -> f64 {
    let p0 = k0 * k0.adjoint();
    let p1 = k1 * k1.adjoint();
    let joint = |a: &Matrix2c, b: &Matrix2c| (rho.matrix * a.kronecker(b)).trace().re;
    joint(&p0, &p0) + joint(&p1, &p1) - joint(&p0, &p1) - joint(&p1, &p0)
}

/// Correlation in the H/V basis.
pub fn correlation_z(rho: &TwoQubitState) -> f64 {
    correlation_in_basis(rho, &Polarization::H.ket(), &Polarization::V.ket())
}

/// Correlation in the +45/-45 basis.
pub fn correlation_x(rho: &TwoQubitState) -> f64 {
    correlation_in_basis(rho, &Polarization::P.ket(), &ket_m())
}

/// Conservative two-basis visibility: min(|E_z|, |E_x|).
pub fn correlation_visibility(rho: &TwoQubitState) -> f64 {
    correlation_z(rho).abs().min(correlation_x(rho).abs())
}

/// Summary metrics of a reconstructed or modeled state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fidelity: f64,
    pub purity: f64,
    pub correlation_z: f64,
    pub correlation_x: f64,
    pub qber_z: f64,
    pub qber_x: f64,
    pub qber_mean: f64,
}

/// Fidelity, purity, correlations and QBER of a physical state.
pub fn metrics(rho: &TwoQubitState) -> Result<MetricsReport> {
    rho.require_physical()?;
    let ez = correlation_z(rho);
    let ex = correlation_x(rho);
    let qz = (1.0 - ez) / 2.0;
    let qx = (1.0 - ex) / 2.0;
    Ok(MetricsReport {
        fidelity: rho.fidelity_phi_plus(),
        purity: rho.purity(),
        correlation_z: ez,
        correlation_x: ex,
        qber_z: qz,
        qber_x: qx,
        qber_mean: 0.5 * (qz + qx),
    })
}

/// Pauli sigma_x in the H/V basis.
pub fn sigma_x() -> Matrix2c {
    Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

/// Pauli sigma_y in the H/V basis.
pub fn sigma_y() -> Matrix2c {
    Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

/// Rotation about the z axis: diag(e^{-i phi/2}, e^{i phi/2}).
pub fn rotation_z(phi: f64) -> Matrix2c {
    Matrix2::new(
        C64::from_polar(1.0, -phi / 2.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        C64::from_polar(1.0, phi / 2.0),
    )
}

/// Rotation about the circular (R/L) axis by `phi`; rotates linear
/// polarizations into each other, the signature of circular birefringence.
pub fn rotation_circular(phi: f64) -> Matrix2c {
    let (s, co) = (phi / 2.0).sin_cos();
    Matrix2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}
