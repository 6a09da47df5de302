//! Two-qubit polarization states and the small linear algebra behind them.
//!
//! The computational basis is fixed everywhere as `|HH⟩, |HV⟩, |VH⟩, |VV⟩`,
//! with the first slot belonging to the heralding arm A. `|H⟩` is the `+1`
//! eigenvector of `σ_z`.

mod matrix;

pub use matrix::{hermitian_eigen, CMat, HermitianEigen, Mat2, Mat4, C64};
pub(crate) use matrix::{real_rank, solve_real, I, ONE, ZERO};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

/// Default physicality tolerance.
pub const PHYSICAL_TOL: f64 = 1e-9;
const HERMITIAN_TOL: f64 = 1e-12;

/// Single-qubit polarization kets.
pub mod ket {
    use super::*;

    pub const H: [C64; 2] = [ONE, ZERO];
    pub const V: [C64; 2] = [ZERO, ONE];
    /// Diagonal, `(|H⟩ + |V⟩)/√2`.
    pub const D: [C64; 2] = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0)];
    /// Anti-diagonal, `(|H⟩ − |V⟩)/√2`.
    pub const A: [C64; 2] = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(-FRAC_1_SQRT_2, 0.0)];
    /// Right circular, `(|H⟩ − i|V⟩)/√2`.
    pub const R: [C64; 2] = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, -FRAC_1_SQRT_2)];
    /// Left circular, `(|H⟩ + i|V⟩)/√2`.
    pub const L: [C64; 2] = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2)];

    /// Linear polarization at `deg` degrees from horizontal.
    pub fn linear(deg: f64) -> [C64; 2] {
        let t = deg.to_radians();
        [C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)]
    }

    /// `|a⟩ ⊗ |b⟩`
    pub fn product(a: &[C64; 2], b: &[C64; 2]) -> [C64; 4] {
        [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    }
}

/// Pauli matrices `σ_0 = I, σ_1 = X, σ_2 = Y, σ_3 = Z`.
pub fn pauli(i: usize) -> Mat2 {
    match i {
        0 => Mat2::identity(),
        1 => CMat([[ZERO, ONE], [ONE, ZERO]]),
        2 => CMat([[ZERO, -I], [I, ZERO]]),
        3 => CMat([[ONE, ZERO], [ZERO, -ONE]]),
        _ => panic!("Pauli index {i} out of range"),
    }
}

fn pauli_pair(i: usize, j: usize) -> Mat4 {
    pauli(i).kron(&pauli(j))
}

/// Two-qubit density matrix (or a Hermitian unit-trace candidate that may not
/// be positive semi-definite, e.g. a least-squares estimate).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState {
    m: Mat4,
}

impl TwoQubitState {
    /// Wrap a matrix after checking it is Hermitian with unit trace.
    pub fn new(m: Mat4) -> Result<Self> {
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL.max(HERMITIAN_TOL * m.max_abs()) {
            return Err(Error::validation(format!("matrix is not Hermitian (defect {defect:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > PHYSICAL_TOL || tr.im.abs() > PHYSICAL_TOL {
            return Err(Error::validation(format!("trace {tr} is not 1")));
        }
        Ok(TwoQubitState { m })
    }

    /// Wrap a matrix without any checks. Operations that need Hermiticity or
    /// physicality validate on entry.
    pub fn from_matrix_unchecked(m: Mat4) -> Self {
        TwoQubitState { m }
    }

    /// Hermitian part of `m` divided by its trace.
    pub fn normalized(m: Mat4) -> Result<Self> {
        let h = m.hermitian_part();
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::validation(format!("cannot normalize matrix with trace {tr}")));
        }
        Ok(TwoQubitState { m: h.scale_re(1.0 / tr) })
    }

    pub fn pure(psi: &[C64; 4]) -> Result<Self> {
        let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::validation("zero state vector"));
        }
        Self::normalized(Mat4::outer(psi, psi))
    }

    /// `(|HV⟩ − |VH⟩)/√2`
    pub fn singlet() -> Self {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        Self::pure(&[ZERO, s, -s, ZERO]).expect("singlet is valid")
    }

    /// `I/4`
    pub fn maximally_mixed() -> Self {
        TwoQubitState { m: Mat4::identity().scale_re(0.25) }
    }

    /// `p·singlet + (1 − p)·I/4`
    pub fn werner(p: f64) -> Self {
        let m = Self::singlet().m.scale_re(p) + Mat4::identity().scale_re((1.0 - p) / 4.0);
        TwoQubitState { m }
    }

    pub fn product(a: &[C64; 2], b: &[C64; 2]) -> Self {
        Self::pure(&ket::product(a, b)).expect("product ket is valid")
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn into_matrix(self) -> Mat4 {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn eigen(&self) -> HermitianEigen<4> {
        hermitian_eigen(&self.m)
    }

    pub fn purity(&self) -> f64 {
        self.m.trace_product(&self.m).re
    }

    /// `U ρ U†`
    pub fn conjugate(&self, u: &Mat4) -> Self {
        TwoQubitState { m: *u * self.m * u.adjoint() }
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.m - other.m).max_abs()
    }

    fn require_hermitian(&self) -> Result<()> {
        let defect = self.m.hermiticity_defect();
        if defect > HERMITIAN_TOL.max(HERMITIAN_TOL * self.m.max_abs()) {
            Err(Error::validation(format!("state is not Hermitian (defect {defect:.3e})")))
        } else {
            Ok(())
        }
    }

    fn require_physical(&self) -> Result<()> {
        let report = is_physical(self, PHYSICAL_TOL);
        if report.physical {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "state is not physical (trace deviation {:.3e}, min eigenvalue {:.3e}, hermiticity defect {:.3e})",
                report.trace_deviation, report.min_eigenvalue, report.hermiticity_defect
            )))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl Serialize for TwoQubitState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateJson {
            re: std::array::from_fn(|i| std::array::from_fn(|j| self.m.0[i][j].re)),
            im: std::array::from_fn(|i| std::array::from_fn(|j| self.m.0[i][j].im)),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoQubitState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = StateJson::deserialize(d)?;
        Ok(TwoQubitState::from_matrix_unchecked(CMat::from_fn(|i, k| {
            C64::new(j.re[i][k], j.im[i][k])
        })))
    }
}

/// Coefficients `u[i1][i2] = Tr(ρ σ_i1 ⊗ σ_i2)` of the Pauli expansion
/// `ρ = ¼ Σ u σ_i1 ⊗ σ_i2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliCoefficients {
    pub u: [[f64; 4]; 4],
}

/// The 3×3 block `c[i][j] = Tr(ρ σ_i ⊗ σ_j)`, `i, j ∈ {x, y, z}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub c: [[f64; 3]; 3],
}

impl CorrelationMatrix {
    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let c = &self.c;
        let ctc = CMat::<3>::from_fn(|i, j| C64::new((0..3).map(|k| c[k][i] * c[k][j]).sum(), 0.0));
        let eig = hermitian_eigen(&ctc);
        let mut s = eig.values.map(|x| x.max(0.0).sqrt());
        s.reverse();
        s
    }
}

pub fn pauli_decompose(rho: &TwoQubitState) -> Result<PauliCoefficients> {
    rho.require_hermitian()?;
    let mut u = [[0.0; 4]; 4];
    for (i, row) in u.iter_mut().enumerate() {
        for (j, uij) in row.iter_mut().enumerate() {
            *uij = rho.m.trace_product(&pauli_pair(i, j)).re;
        }
    }
    Ok(PauliCoefficients { u })
}

/// Assemble `¼ Σ u σ⊗σ`. The result is Hermitian with trace `u[0][0]` but
/// not necessarily positive; check with [`is_physical`].
pub fn pauli_compose(coeffs: &PauliCoefficients) -> TwoQubitState {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let uij = coeffs.u[i][j];
            if uij != 0.0 {
                m = m + pauli_pair(i, j).scale_re(uij / 4.0);
            }
        }
    }
    TwoQubitState::from_matrix_unchecked(m)
}

pub fn correlation_matrix(rho: &TwoQubitState) -> Result<CorrelationMatrix> {
    rho.require_physical()?;
    Ok(correlation_matrix_unchecked(rho))
}

pub(crate) fn correlation_matrix_unchecked(rho: &TwoQubitState) -> CorrelationMatrix {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, cij) in row.iter_mut().enumerate() {
            *cij = rho.m.trace_product(&pauli_pair(i + 1, j + 1)).re;
        }
    }
    CorrelationMatrix { c }
}

/// Projective measurement operator with a human-readable label.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub label: String,
    matrix: Mat4,
}

impl Projector {
    /// Checks idempotency and Hermiticity within 1e-12.
    pub fn new(label: impl Into<String>, matrix: Mat4) -> Result<Self> {
        let p = Projector {
            label: label.into(),
            matrix,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn new_unchecked(label: impl Into<String>, matrix: Mat4) -> Self {
        Projector {
            label: label.into(),
            matrix,
        }
    }

    /// `|a⟩⟨a| ⊗ |b⟩⟨b|`
    pub fn product(label: impl Into<String>, a: &[C64; 2], b: &[C64; 2]) -> Self {
        Projector {
            label: label.into(),
            matrix: Mat2::outer(a, a).kron(&Mat2::outer(b, b)),
        }
    }

    /// `|a⟩⟨a| ⊗ I`, a measurement on arm A only.
    pub fn first(label: impl Into<String>, a: &[C64; 2]) -> Self {
        Projector {
            label: label.into(),
            matrix: Mat2::outer(a, a).kron(&Mat2::identity()),
        }
    }

    /// `I ⊗ |b⟩⟨b|`, a measurement on arm B only.
    pub fn second(label: impl Into<String>, b: &[C64; 2]) -> Self {
        Projector {
            label: label.into(),
            matrix: Mat2::identity().kron(&Mat2::outer(b, b)),
        }
    }

    pub fn identity() -> Self {
        Projector {
            label: "I".into(),
            matrix: Mat4::identity(),
        }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.matrix.max_abs().max(1.0);
        let idem = (self.matrix * self.matrix - self.matrix).max_abs();
        if idem > HERMITIAN_TOL * scale {
            return Err(Error::validation(format!(
                "projector {} is not idempotent (defect {idem:.3e})",
                self.label
            )));
        }
        let herm = self.matrix.hermiticity_defect();
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::validation(format!(
                "projector {} is not Hermitian (defect {herm:.3e})",
                self.label
            )));
        }
        Ok(())
    }
}

/// `p = Tr(P ρ)`.
pub fn born_probability(rho: &TwoQubitState, proj: &Projector) -> Result<f64> {
    proj.validate()?;
    rho.require_physical()?;
    Ok(born_unchecked(rho, proj.matrix()))
}

#[inline]
pub(crate) fn born_unchecked(rho: &TwoQubitState, p: &Mat4) -> f64 {
    p.trace_product(&rho.m).re
}

/// Outcome of [`is_physical`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    pub physical: bool,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub hermiticity_defect: f64,
}

/// Checks unit trace, Hermiticity and positive semi-definiteness within `tol`.
pub fn is_physical(rho: &TwoQubitState, tol: f64) -> PhysicalityReport {
    let tr = rho.m.trace();
    let trace_deviation = (tr - ONE).norm();
    let hermiticity_defect = rho.m.hermiticity_defect();
    let min_eigenvalue = hermitian_eigen(&rho.m).values[0];
    PhysicalityReport {
        physical: trace_deviation <= tol && hermiticity_defect <= tol && min_eigenvalue >= -tol,
        trace_deviation,
        min_eigenvalue,
        hermiticity_defect,
    }
}

fn psd_sqrt(m: &Mat4) -> Mat4 {
    hermitian_eigen(m).map_values(|x| x.max(0.0).sqrt())
}

/// Uhlmann fidelity `(Tr √(√a b √a))²`, clamped to `[0, 1]`.
pub fn fidelity(a: &TwoQubitState, b: &TwoQubitState) -> Result<f64> {
    a.require_physical()?;
    b.require_physical()?;
    Ok(fidelity_unchecked(a, b))
}

pub(crate) fn fidelity_unchecked(a: &TwoQubitState, b: &TwoQubitState) -> f64 {
    let sa = psd_sqrt(&a.m);
    let inner = sa * b.m * sa;
    let t: f64 = hermitian_eigen(&inner).values.iter().map(|x| x.max(0.0).sqrt()).sum();
    (t * t).clamp(0.0, 1.0)
}

/// Haar-random single-qubit unitary.
pub fn random_unitary2(rng: &mut impl rand::Rng) -> Mat2 {
    use rand_distr::{Distribution, StandardNormal};
    let mut g = || C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
    let a = [g(), g()];
    let b = [g(), g()];
    let na = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
    let e1 = [a[0] / na, a[1] / na];
    let proj = e1[0].conj() * b[0] + e1[1].conj() * b[1];
    let r = [b[0] - proj * e1[0], b[1] - proj * e1[1]];
    let nr = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
    let e2 = [r[0] / nr, r[1] / nr];
    CMat([[e1[0], e2[0]], [e1[1], e2[1]]])
}

/// Random mixed state: `G G† / Tr(G G†)` with a complex Ginibre `G`
/// (Hilbert–Schmidt measure).
pub fn random_state(rng: &mut impl rand::Rng) -> TwoQubitState {
    use rand_distr::{Distribution, StandardNormal};
    let g = Mat4::from_fn(|_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    TwoQubitState::normalized(g * g.adjoint()).expect("Ginibre product has positive trace")
}

/// Random pure two-qubit state.
pub fn random_pure_state(rng: &mut impl rand::Rng) -> TwoQubitState {
    use rand_distr::{Distribution, StandardNormal};
    let psi: [C64; 4] = std::array::from_fn(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    TwoQubitState::pure(&psi).expect("non-zero vector")
}
