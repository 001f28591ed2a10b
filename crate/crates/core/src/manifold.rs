//! Geometry of the Stiefel manifold `St(N, r) = {X : XᵀX = I_r}` with the
//! embedded (Frobenius) metric. The unit sphere is the `r = 1` case.
//!
//! Tangent space at `X`: `{U : XᵀU + UᵀX = 0} = {XS + X_⊥K : Sᵀ = −S}`.

use nalgebra::DMatrix;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{orthonormal_complement, sym_eig, thin_q, SymMatrix};
use crate::rng::{gaussian_matrix, Rng};

pub const ORTHONORMAL_TOL: f64 = 1e-10;
pub const TANGENT_TOL: f64 = 1e-10;

/// An `N × r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let residual = orthonormality_residual(&x);
        if x.ncols() == 0 || x.ncols() > x.nrows() {
            return Err(shape_err((x.nrows(), x.nrows().max(1)), x.shape()));
        }
        if residual > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(Self(x))
    }

    /// Accepts `x` as is when it is orthonormal to `ORTHONORMAL_TOL`,
    /// otherwise replaces it with its polar factor.
    pub fn reorthonormalized(x: DMatrix<f64>) -> Result<Self> {
        if orthonormality_residual(&x) <= ORTHONORMAL_TOL {
            return Self::new(x);
        }
        Self::new(polar_factor(&x)?)
    }

    /// `e_{i_1}, …, e_{i_r}` (0-based indices) in `R^n`.
    pub fn from_unit_columns(n: usize, columns: &[usize]) -> Result<Self> {
        let mut x = DMatrix::zeros(n, columns.len());
        for (j, &i) in columns.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidArgument(format!("row index {i} out of range for n = {n}")));
            }
            x[(i, j)] = 1.0;
        }
        Self::new(x)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn r(&self) -> usize {
        self.0.ncols()
    }

    /// Column `j` multiplied by `sign`; used for sign-aligned comparisons.
    pub fn with_column_signs(&self, signs: &[f64]) -> Self {
        let mut x = self.0.clone();
        for (j, s) in signs.iter().enumerate() {
            x.column_mut(j).scale_mut(*s);
        }
        Self(x)
    }
}

pub fn orthonormality_residual(x: &DMatrix<f64>) -> f64 {
    let r = x.ncols();
    (x.transpose() * x - DMatrix::<f64>::identity(r, r)).norm()
}

/// A direction `U` in the tangent space at some base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(DMatrix<f64>);

impl TangentVector {
    pub fn new(x: &StiefelPoint, u: DMatrix<f64>) -> Result<Self> {
        if u.shape() != x.shape() {
            return Err(shape_err(x.shape(), u.shape()));
        }
        let residual = tangency_residual(x, &u);
        if residual > TANGENT_TOL * u.norm().max(1.0) {
            return Err(Error::NotTangent { residual });
        }
        Ok(Self(u))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn add(&self, other: &TangentVector) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &TangentVector) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn zeros_at(x: &StiefelPoint) -> Self {
        Self(DMatrix::zeros(x.n(), x.r()))
    }

    /// Wraps a matrix already known to be tangent (e.g. a projector output).
    pub(crate) fn from_tangent_matrix(u: DMatrix<f64>) -> Self {
        Self(u)
    }
}

/// `‖XᵀU + UᵀX‖_F`.
pub fn tangency_residual(x: &StiefelPoint, u: &DMatrix<f64>) -> f64 {
    let xu = x.matrix().transpose() * u;
    (&xu + xu.transpose()).norm()
}

/// Orthonormal basis of `T_X St(N, r)`.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub base: StiefelPoint,
    pub vectors: Vec<TangentVector>,
}

impl TangentBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// `Σ_a c_a b_a`.
    pub fn combine(&self, coefficients: &[f64]) -> TangentVector {
        assert_eq!(coefficients.len(), self.dim());
        let mut u = DMatrix::zeros(self.base.n(), self.base.r());
        for (c, b) in coefficients.iter().zip(&self.vectors) {
            u += b.matrix() * *c;
        }
        TangentVector(u)
    }
}

/// `Nr − r(r+1)/2`.
pub fn tangent_dimension(n: usize, r: usize) -> usize {
    n * r - r * (r + 1) / 2
}

/// `P_X(V) = V − ½ X (XᵀV + VᵀX)`.
pub fn project_tangent(x: &StiefelPoint, v: &DMatrix<f64>) -> Result<TangentVector> {
    if v.shape() != x.shape() {
        return Err(shape_err(x.shape(), v.shape()));
    }
    let xv = x.matrix().transpose() * v;
    let sym = (&xv + xv.transpose()) * 0.5;
    Ok(TangentVector(v - x.matrix() * sym))
}

/// `qf(X + tU)`.
pub fn retract_qr(x: &StiefelPoint, u: &TangentVector, t: f64) -> Result<StiefelPoint> {
    check_direction(x, u)?;
    if t == 0.0 {
        return Ok(x.clone());
    }
    let y = x.matrix() + u.matrix() * t;
    Ok(StiefelPoint(thin_q(&y)?))
}

/// Polar factor of `X + tU`, i.e. `(X + tU)(I + t² UᵀU)^{−1/2}` for tangent
/// `U`. Second-order: the curve has no tangential acceleration at `t = 0`.
pub fn retract_polar(x: &StiefelPoint, u: &TangentVector, t: f64) -> Result<StiefelPoint> {
    check_direction(x, u)?;
    if t == 0.0 {
        return Ok(x.clone());
    }
    let y = x.matrix() + u.matrix() * t;
    Ok(StiefelPoint(polar_factor(&y)?))
}

fn check_direction(x: &StiefelPoint, u: &TangentVector) -> Result<()> {
    if u.matrix().shape() != x.shape() {
        return Err(shape_err(x.shape(), u.matrix().shape()));
    }
    Ok(())
}

/// `Y (YᵀY)^{−1/2}`.
fn polar_factor(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = SymMatrix::symmetrize(y.transpose() * y);
    let spec = sym_eig(&gram)?;
    let lmin = spec.eigenvalues.min();
    let tol = 1e-24 * spec.eigenvalues.max().max(f64::MIN_POSITIVE);
    if !(lmin > tol) {
        return Err(Error::RankDeficient {
            pivot: lmin.max(0.0).sqrt(),
        });
    }
    let inv_sqrt = spec.eigenvalues.map(|l| 1.0 / l.sqrt());
    let v = &spec.eigenvectors;
    let w = v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose();
    Ok(y * w)
}

/// Basis `{X(e_s e_jᵀ − e_j e_sᵀ)/√2 : s < j} ∪ {X_⊥ e_a e_bᵀ}`.
pub fn tangent_basis(x: &StiefelPoint) -> TangentBasis {
    let (n, r) = x.shape();
    let complement = orthonormal_complement(x.matrix());
    let mut vectors = Vec::with_capacity(tangent_dimension(n, r));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for s in 0..r {
        for j in (s + 1)..r {
            let mut u = DMatrix::zeros(n, r);
            // X S with S = (e_s e_jᵀ − e_j e_sᵀ)/√2: column j gets x_s, column s gets −x_j
            u.column_mut(j).axpy(h, &x.matrix().column(s), 0.0);
            u.column_mut(s).axpy(-h, &x.matrix().column(j), 0.0);
            vectors.push(TangentVector(u));
        }
    }
    for a in 0..(n - r) {
        for b in 0..r {
            let mut u = DMatrix::zeros(n, r);
            u.column_mut(b).copy_from(&complement.column(a));
            vectors.push(TangentVector(u));
        }
    }
    TangentBasis {
        base: x.clone(),
        vectors,
    }
}

/// Haar-distributed point: QR of a Gaussian matrix with `diag(R) > 0`.
pub fn random_stiefel(rng: &mut Rng, n: usize, r: usize) -> Result<StiefelPoint> {
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("need 1 ≤ r ≤ n, got n = {n}, r = {r}")));
    }
    loop {
        let g = gaussian_matrix(rng, n, r, 1.0);
        match thin_q(&g) {
            Ok(q) => return Ok(StiefelPoint(q)),
            // probability zero; draw again
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Uniformly oriented tangent direction with Frobenius norm `norm`.
///
/// The orthogonal projection of an isotropic Gaussian onto the tangent
/// subspace is isotropic there, which matches Gaussian coefficients on any
/// orthonormal tangent basis.
pub fn random_tangent(rng: &mut Rng, x: &StiefelPoint, norm: f64) -> Result<TangentVector> {
    if !(norm >= 0.0) {
        return Err(Error::InvalidArgument(format!("norm must be ≥ 0, got {norm}")));
    }
    if tangent_dimension(x.n(), x.r()) == 0 {
        return Ok(TangentVector::zeros_at(x));
    }
    loop {
        let g = gaussian_matrix(rng, x.n(), x.r(), 1.0);
        let u = project_tangent(x, &g)?;
        let len = u.norm();
        if len > 1e-300 {
            return Ok(u.scaled(norm / len));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let x = StiefelPoint::from_unit_columns(3, &[0]).unwrap();
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let p = project_tangent(&x, &v).unwrap();
        assert_eq!(p.matrix().as_slice(), &[0.0, 1.0, 1.0]);
        let px = project_tangent(&x, x.matrix()).unwrap();
        assert!(px.norm() < 1e-15);
        let again = project_tangent(&x, p.matrix()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn projection_idempotent_on_random_input() {
        let mut rng = Rng::from_seed(4);
        let x = random_stiefel(&mut rng, 7, 3).unwrap();
        let v = gaussian_matrix(&mut rng, 7, 3, 1.0);
        let p = project_tangent(&x, &v).unwrap();
        let pp = project_tangent(&x, p.matrix()).unwrap();
        assert!((p.matrix() - pp.matrix()).norm() < 1e-12);
        assert!(tangency_residual(&x, p.matrix()) < 1e-12);
    }

    #[test]
    fn retractions_at_zero_are_identity() {
        let mut rng = Rng::from_seed(5);
        let x = random_stiefel(&mut rng, 5, 2).unwrap();
        let u = random_tangent(&mut rng, &x, 1.0).unwrap();
        assert_eq!(retract_qr(&x, &u, 0.0).unwrap(), x);
        assert_eq!(retract_polar(&x, &u, 0.0).unwrap(), x);
    }

    #[test]
    fn polar_on_sphere_closed_form() {
        let mut rng = Rng::from_seed(6);
        let x = random_stiefel(&mut rng, 4, 1).unwrap();
        let u = random_tangent(&mut rng, &x, 1.0).unwrap();
        for &t in &[0.1, 0.7, 2.5] {
            let r = retract_polar(&x, &u, t).unwrap();
            let expect = (x.matrix() + u.matrix() * t) / (1.0 + t * t).sqrt();
            assert!((r.matrix() - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn retractions_have_velocity_u() {
        let mut rng = Rng::from_seed(7);
        let x = random_stiefel(&mut rng, 6, 3).unwrap();
        let u = random_tangent(&mut rng, &x, 1.0).unwrap();
        let t = 1e-4;
        for retract in [retract_qr, retract_polar] {
            let fd = (retract(&x, &u, t).unwrap().matrix() - retract(&x, &u, -t).unwrap().matrix())
                / (2.0 * t);
            assert!((fd - u.matrix()).norm() <= 1e-6);
        }
    }

    #[test]
    fn polar_has_no_tangential_acceleration() {
        let mut rng = Rng::from_seed(8);
        let x = random_stiefel(&mut rng, 6, 2).unwrap();
        let u = random_tangent(&mut rng, &x, 1.0).unwrap();
        let t = 1e-3;
        let acc = (retract_polar(&x, &u, t).unwrap().matrix()
            + retract_polar(&x, &u, -t).unwrap().matrix()
            - x.matrix() * 2.0)
            / (t * t);
        // acceleration is −X UᵀU, purely normal
        let tangential = project_tangent(&x, &acc).unwrap();
        assert!(tangential.norm() < 1e-3);
        let expected = -(x.matrix() * (u.matrix().transpose() * u.matrix()));
        assert!((acc - expected).norm() < 1e-3);
    }

    #[test]
    fn basis_dimensions() {
        let mut rng = Rng::from_seed(9);
        for &(n, r, dim) in &[(3, 1, 2), (3, 2, 3), (5, 3, 9), (4, 4, 6)] {
            let x = random_stiefel(&mut rng, n, r).unwrap();
            let b = tangent_basis(&x);
            assert_eq!(b.dim(), dim);
            assert_eq!(tangent_dimension(n, r), dim);
            for (i, bi) in b.vectors.iter().enumerate() {
                assert!(tangency_residual(&x, bi.matrix()) < 1e-10);
                for (j, bj) in b.vectors.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((bi.inner(bj) - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn random_stiefel_square_is_orthogonal() {
        let mut rng = Rng::from_seed(10);
        let q = random_stiefel(&mut rng, 3, 3).unwrap();
        assert!(orthonormality_residual(q.matrix()) < 1e-12);
        for c in q.matrix().column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_sphere_mean_near_zero() {
        let mut rng = Rng::from_seed(11);
        let mut mean = [0.0; 3];
        let n = 10_000;
        for _ in 0..n {
            let x = random_stiefel(&mut rng, 3, 1).unwrap();
            for (m, v) in mean.iter_mut().zip(x.matrix().iter()) {
                *m += v / n as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.05), "{mean:?}");
    }

    #[test]
    fn random_tangent_has_requested_norm() {
        let mut rng = Rng::from_seed(12);
        let x = random_stiefel(&mut rng, 5, 2).unwrap();
        for &norm in &[0.0, 1e-3, 1.0, 7.5] {
            let u = random_tangent(&mut rng, &x, norm).unwrap();
            assert!((u.norm() - norm).abs() <= 1e-12 * norm.max(1.0));
            assert!(tangency_residual(&x, u.matrix()) < 1e-12);
        }
    }

    #[test]
    fn reorthonormalize_repairs_drift() {
        let mut rng = Rng::from_seed(13);
        let x = random_stiefel(&mut rng, 6, 2).unwrap();
        let drifted = x.matrix() * (1.0 + 1e-7);
        assert!(StiefelPoint::new(drifted.clone()).is_err());
        let fixed = StiefelPoint::reorthonormalized(drifted).unwrap();
        assert!(orthonormality_residual(fixed.matrix()) < 1e-13);
        assert!((fixed.matrix() - x.matrix()).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_tangent() {
        let x = StiefelPoint::from_unit_columns(3, &[0]).unwrap();
        let u = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(matches!(TangentVector::new(&x, u), Err(Error::NotTangent { .. })));
    }
}
