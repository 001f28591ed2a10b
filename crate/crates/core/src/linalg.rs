//! Dense symmetric linear algebra: a cyclic Jacobi eigensolver, Householder
//! QR, and the two alignment distances used to compare Stiefel points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::manifold::StiefelPoint;

/// Off-diagonal Frobenius mass (relative to ‖M‖_F) at which Jacobi stops.
pub const JACOBI_TOL: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 30;
/// Largest r for which sign alignment enumerates all 2^r sign patterns.
pub const MAX_SIGN_ENUMERATION: usize = 20;

/// A square matrix that passed the symmetry check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Accepts `m` if `max |a_ij − a_ji| ≤ 1e−12 (1 + max |a_ij|)`. The stored
    /// matrix is the exact symmetric part so downstream code sees `a = aᵀ`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(shape_err((m.nrows(), m.nrows()), m.shape()));
        }
        let n = m.nrows();
        let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut asym = 0.0_f64;
        for j in 0..n {
            for i in 0..j {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > 1e-12 * (1.0 + scale) || !asym.is_finite() {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(Self::symmetrize(m))
    }

    /// `(m + mᵀ) / 2` for an arbitrary square matrix.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.n() {
            m[(i, i)] += c;
        }
        Self(m)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        Self(&self.0 - &other.0)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix rows must all have length n".into()));
        }
        SymMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        let n = m.n();
        (0..n).map(|i| (0..n).map(|j| m.0[(i, j)]).collect()).collect()
    }
}

/// Eigenvalues in non-increasing order with their orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_i` with 1-based `i`.
    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i - 1]
    }

    /// Eigenvector paired with `λ_i` (1-based).
    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i - 1).into_owned()
    }

    /// `λ_k − λ_{k+1}` (1-based).
    pub fn gap(&self, k: usize) -> f64 {
        self.lambda(k) - self.lambda(k + 1)
    }

    /// Minimal pairwise gap among the first `r + 1` eigenvalues. Since the
    /// eigenvalues are sorted this is the smallest consecutive gap. Refuses
    /// when any of those gaps is not strictly positive.
    pub fn d_min(&self, r: usize) -> Result<f64> {
        if r == 0 || r + 1 > self.n() {
            return Err(Error::InvalidArgument(format!(
                "d_min needs 1 ≤ r < n (r = {r}, n = {})",
                self.n()
            )));
        }
        let d = (1..=r).map(|k| self.gap(k)).fold(f64::INFINITY, f64::min);
        if !(d > 0.0) {
            let tied = (1..=r).find(|&k| self.gap(k) <= 0.0).unwrap_or(1);
            return Err(Error::DegenerateSpectrum(format!(
                "λ_{tied} = {} and λ_{} = {} are not strictly separated",
                self.lambda(tied),
                tied + 1,
                self.lambda(tied + 1)
            )));
        }
        Ok(d)
    }

    /// Columns `i_1, …, i_r` (1-based) of the eigenvector matrix.
    pub fn select(&self, omega: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, omega.len(), |i, j| self.eigenvectors[(i, omega[j] - 1)])
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues)
            * self.eigenvectors.transpose()
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Converged when the off-diagonal Frobenius mass is at most
/// `JACOBI_TOL · ‖M‖_F`. Eigenvalues are sorted descending (ties keep their
/// original diagonal order) and each eigenvector has its largest-magnitude
/// entry positive.
pub fn sym_eig(m: &SymMatrix) -> Result<Spectrum> {
    let n = m.n();
    let mut a = m.matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.frobenius_norm();
    let target = JACOBI_TOL * scale;

    let mut converged = false;
    let mut off = off_diagonal_norm(&a);
    for _ in 0..=JACOBI_MAX_SWEEPS {
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let kp = c * akp - s * akq;
                    let kq = s * akp + c * akq;
                    a[(k, p)] = kp;
                    a[(p, k)] = kp;
                    a[(k, q)] = kq;
                    a[(q, k)] = kq;
                }
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        off = off_diagonal_norm(&a);
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            residual: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their original index order
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    for mut col in eigenvectors.column_iter_mut() {
        let mut lead = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// `max_i |λ_i|`.
pub fn spectral_norm(m: &SymMatrix) -> Result<f64> {
    let s = sym_eig(m)?;
    Ok(s.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs())))
}

/// Householder QR: returns the full `n × n` orthogonal `Q` and the `n × k`
/// upper-triangular `R` with `a = Q R`.
pub fn householder_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, k) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    for j in 0..k.min(n.saturating_sub(1)) {
        let x = r.view((j, j), (n - j, 1)).into_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            continue;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut w = x;
        w[0] += sign * alpha;
        let wn = w.norm();
        if wn == 0.0 {
            continue;
        }
        w /= wn;
        // r ← (I − 2wwᵀ) r on rows j..
        let mut sub = r.view_mut((j, 0), (n - j, k));
        let proj = w.transpose() * &sub;
        sub -= &w * proj * 2.0;
        // q ← q (I − 2wwᵀ) on columns j..
        let mut qs = q.view_mut((0, j), (n, n - j));
        let qw = &qs * &w;
        qs -= qw * w.transpose() * 2.0;
    }
    for j in 0..k {
        for i in (j + 1)..n {
            r[(i, j)] = 0.0;
        }
    }
    (q, r)
}

/// Thin Q factor with a non-negative R diagonal (`qf` in retraction
/// terminology). Fails when a pivot is below `1e−12 ‖a‖_F`.
pub fn thin_q(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = a.shape();
    if k > n {
        return Err(shape_err((n, n), (n, k)));
    }
    let (q, r) = householder_qr(a);
    let tol = 1e-12 * a.norm().max(f64::MIN_POSITIVE);
    let mut out = q.columns(0, k).into_owned();
    for j in 0..k {
        let d = r[(j, j)];
        if d.abs() <= tol {
            return Err(Error::RankDeficient { pivot: d.abs() });
        }
        if d < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    Ok(out)
}

/// `n × (n − r)` orthonormal basis of the orthogonal complement of the
/// columns of `x` (assumed orthonormal).
pub fn orthonormal_complement(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = x.shape();
    let (q, _) = householder_qr(x);
    q.columns(r, n - r).into_owned()
}

/// `⟨a, b⟩_F = tr(aᵀ b)`.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn check_same_shape(x1: &StiefelPoint, x2: &StiefelPoint) -> Result<()> {
    if x1.shape() != x2.shape() {
        return Err(shape_err(x1.shape(), x2.shape()));
    }
    Ok(())
}

/// `min_D ‖x1 − x2 D‖_F` over diagonal `D` with ±1 entries.
///
/// The objective separates per column, so each column picks its own sign;
/// the result is identical to enumerating all 2^r patterns.
pub fn sign_aligned_distance(x1: &StiefelPoint, x2: &StiefelPoint) -> Result<f64> {
    check_same_shape(x1, x2)?;
    let r = x1.shape().1;
    if r > MAX_SIGN_ENUMERATION {
        return Err(Error::InvalidArgument(format!(
            "sign alignment supports r ≤ {MAX_SIGN_ENUMERATION}, got r = {r}"
        )));
    }
    let (a, b) = (x1.matrix(), x2.matrix());
    let mut total = 0.0;
    for j in 0..r {
        let plus = (a.column(j) - b.column(j)).norm_squared();
        let minus = (a.column(j) + b.column(j)).norm_squared();
        total += plus.min(minus);
    }
    Ok(total.sqrt())
}

/// `min_Q ‖x1 − x2 Q‖_F` over orthogonal `r × r` matrices `Q`.
///
/// Uses the optimal rotation `Q = U Vᵀ` from the SVD `x2ᵀ x1 = U Σ Vᵀ` and
/// evaluates the residual directly, which equals `√(2r − 2 Σ σ_i)` without the
/// cancellation that formula suffers for nearby points.
pub fn procrustes_distance(x1: &StiefelPoint, x2: &StiefelPoint) -> Result<f64> {
    check_same_shape(x1, x2)?;
    let (a, b) = (x1.matrix(), x2.matrix());
    let cross = b.transpose() * a;
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::InvalidArgument("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::InvalidArgument("SVD failed".into()))?;
    let q = u * v_t;
    Ok((a - b * q).norm())
}
