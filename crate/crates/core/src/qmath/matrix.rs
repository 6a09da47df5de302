//! Fixed-size dense complex matrices and a cyclic Jacobi eigensolver for
//! Hermitian matrices.

use num_complex::Complex64;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Square `N×N` complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat<const N: usize>(pub [[C64; N]; N]);

pub type Mat2 = CMat<2>;
pub type Mat4 = CMat<4>;

impl<const N: usize> Default for CMat<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> CMat<N> {
    pub fn zeros() -> Self {
        CMat([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = f(i, j);
            }
        }
        m
    }

    /// `|u⟩⟨v|`
    pub fn outer(u: &[C64; N], v: &[C64; N]) -> Self {
        Self::from_fn(|i, j| u[i] * v[j].conj())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    /// Largest elementwise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest elementwise modulus of `self − self†`.
    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let mut acc = ZERO;
        for i in 0..N {
            for k in 0..N {
                acc += self.0[i][k] * other.0[k][i];
            }
        }
        acc
    }

    pub fn mul_vec(&self, v: &[C64; N]) -> [C64; N] {
        let mut out = [ZERO; N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..N).map(|k| self.0[i][k] * v[k]).sum();
        }
        out
    }

    pub fn column(&self, j: usize) -> [C64; N] {
        let mut c = [ZERO; N];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.0[i][j];
        }
        c
    }

    /// Hermitian part `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale_re(0.5)
    }
}

impl CMat<2> {
    /// Kronecker product `self ⊗ other`; the first factor indexes the
    /// high-order slot of the 4-dimensional basis.
    pub fn kron(&self, other: &Mat2) -> Mat4 {
        Mat4::from_fn(|i, j| self.0[i / 2][j / 2] * other.0[i % 2][j % 2])
    }
}

impl<const N: usize> Index<(usize, usize)> for CMat<N> {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for CMat<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl<const N: usize> Add for CMat<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }
}

impl<const N: usize> Sub for CMat<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - rhs.0[i][j])
    }
}

impl<const N: usize> Mul for CMat<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    out.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        out
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen<const N: usize> {
    /// Eigenvalues in ascending order.
    pub values: [f64; N],
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMat<N>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 60;

/// Cyclic complex Jacobi eigensolver.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary and then applies a real Givens rotation. Only the Hermitian part of
/// `a` is used.
pub fn hermitian_eigen<const N: usize>(a: &CMat<N>) -> HermitianEigen<N> {
    let mut m = a.hermitian_part();
    for i in 0..N {
        m.0[i][i] = C64::new(m.0[i][i].re, 0.0);
    }
    let mut v = CMat::<N>::identity();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        let off: f64 = (0..N)
            .flat_map(|p| ((p + 1)..N).map(move |q| (p, q)))
            .map(|(p, q)| m.0[p][q].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        sweeps += 1;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m.0[p][q];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r; // e^{iφ}
                let app = m.0[p][p].re;
                let aqq = m.0[q][q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = D·G restricted to (p,q): D = diag(1, e^{-iφ}),
                // G = [[c, s], [-s, c]].
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = -phase.conj() * s;
                let u_qq = phase.conj() * c;
                // m <- m U
                for k in 0..N {
                    let mkp = m.0[k][p];
                    let mkq = m.0[k][q];
                    m.0[k][p] = mkp * u_pp + mkq * u_qp;
                    m.0[k][q] = mkp * u_pq + mkq * u_qq;
                }
                // m <- U† m
                for k in 0..N {
                    let mpk = m.0[p][k];
                    let mqk = m.0[q][k];
                    m.0[p][k] = u_pp.conj() * mpk + u_qp.conj() * mqk;
                    m.0[q][k] = u_pq.conj() * mpk + u_qq.conj() * mqk;
                }
                m.0[p][q] = ZERO;
                m.0[q][p] = ZERO;
                m.0[p][p] = C64::new(m.0[p][p].re, 0.0);
                m.0[q][q] = C64::new(m.0[q][q].re, 0.0);
                // v <- v U
                for k in 0..N {
                    let vkp = v.0[k][p];
                    let vkq = v.0[k][q];
                    v.0[k][p] = vkp * u_pp + vkq * u_qp;
                    v.0[k][q] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| m.0[i][i].re.total_cmp(&m.0[j][j].re));
    let values = std::array::from_fn(|k| m.0[order[k]][order[k]].re);
    let vectors = CMat::from_fn(|i, k| v.0[i][order[k]]);
    HermitianEigen {
        values,
        vectors,
        sweeps,
    }
}

impl<const N: usize> HermitianEigen<N> {
    /// Rebuild `V f(Λ) V†`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CMat<N> {
        let mut out = CMat::<N>::zeros();
        for k in 0..N {
            let fk = f(self.values[k]);
            if fk == 0.0 {
                continue;
            }
            let col = self.vectors.column(k);
            out = out + CMat::outer(&col, &col).scale_re(fk);
        }
        out
    }
}

/// Solve the dense real system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `tol` relative to the
/// largest entry.
pub(crate) fn solve_real(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= tol * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Numerical rank of a real matrix via row echelon reduction.
pub(crate) fn real_rank(mut a: Vec<Vec<f64>>, tol: f64) -> usize {
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let piv = (rank..rows)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() <= tol * scale {
            continue;
        }
        a.swap(rank, piv);
        for row in (rank + 1)..rows {
            let f = a[row][col] / a[rank][col];
            for k in col..cols {
                a[row][k] -= f * a[rank][k];
            }
        }
        rank += 1;
    }
    rank
}
