//! Brockett risks `−½ tr(Xᵀ A X N)` on `St(N, r)`.
//!
//! With `N = diag(μ)`, `μ_i = r − i + 1`:
//!
//! ```text
//! grad g(X)       = (XXᵀ − I) A X N − ½ X [XᵀAX, N]
//! hess g(X)[U, U] = ⟨XᵀAX, UᵀU N⟩ − ⟨A, U N Uᵀ⟩
//! ```
//!
//! Critical points are the `X_Ω` whose columns are eigenvectors of `A`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{spectral_norm, sym_eig, Spectrum, SymMatrix};
use crate::manifold::{tangent_basis, tangency_residual, StiefelPoint, TangentBasis, TangentVector};

/// Diagonal weight matrix `N = diag(μ_1, …, μ_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    mu: Vec<f64>,
}

impl Weights {
    /// `μ_i = r − i + 1`.
    pub fn standard(r: usize) -> Self {
        assert!(r >= 1, "rank must be at least 1");
        Self {
            mu: (1..=r).rev().map(|v| v as f64).collect(),
        }
    }

    /// Arbitrary strictly decreasing positive weights.
    pub fn custom(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|&m| !(m > 0.0)) || mu.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument(
                "weights must be strictly decreasing and positive".into(),
            ));
        }
        Ok(Self { mu })
    }

    pub fn r(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.mu))
    }

    pub fn trace(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// Spectral norm `‖N‖ = μ_1`.
    pub fn max(&self) -> f64 {
        self.mu[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Population,
    Empirical,
}

#[derive(Debug, Clone)]
pub struct Risk {
    a: SymMatrix,
    weights: Weights,
    kind: RiskKind,
}

impl Risk {
    pub fn new(a: SymMatrix, weights: Weights, kind: RiskKind) -> Result<Self> {
        if weights.r() > a.n() {
            return Err(Error::InvalidArgument(format!(
                "rank {} exceeds dimension {}",
                weights.r(),
                a.n()
            )));
        }
        Ok(Self { a, weights, kind })
    }

    pub fn population(m: SymMatrix, r: usize) -> Result<Self> {
        Self::new(m, Weights::standard(r), RiskKind::Population)
    }

    /// Empirical risk from a possibly non-symmetric surrogate; the surrogate
    /// is replaced by its symmetric part.
    pub fn empirical(y: DMatrix<f64>, r: usize) -> Result<Self> {
        if !y.is_square() {
            return Err(shape_err((y.nrows(), y.nrows()), y.shape()));
        }
        Self::new(SymMatrix::symmetrize(y), Weights::standard(r), RiskKind::Empirical)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn kind(&self) -> RiskKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn r(&self) -> usize {
        self.weights.r()
    }

    /// Same weights and kind, matrix `a + cI`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            a: self.a.shifted(c),
            weights: self.weights.clone(),
            kind: self.kind,
        }
    }

    fn check_point(&self, x: &StiefelPoint) -> Result<()> {
        if x.shape() != (self.n(), self.r()) {
            return Err(shape_err((self.n(), self.r()), x.shape()));
        }
        Ok(())
    }

    /// `−½ tr(Xᵀ A X N)`.
    pub fn cost(&self, x: &StiefelPoint) -> Result<f64> {
        self.check_point(x)?;
        let ax = self.a.matrix() * x.matrix();
        let mut total = 0.0;
        for (j, mu) in self.weights.mu().iter().enumerate() {
            total += mu * x.matrix().column(j).dot(&ax.column(j));
        }
        Ok(-0.5 * total)
    }

    /// `cost(y) − cost(x)` evaluated as `−½ Σ μ_j (y_j − x_j)ᵀ A (y_j + x_j)`,
    /// which keeps full relative accuracy when the points are close.
    pub fn cost_difference(&self, x: &StiefelPoint, y: &StiefelPoint) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let diff = y.matrix() - x.matrix();
        let sum = y.matrix() + x.matrix();
        let a_sum = self.a.matrix() * sum;
        let mut total = 0.0;
        for (j, mu) in self.weights.mu().iter().enumerate() {
            total += mu * diff.column(j).dot(&a_sum.column(j));
        }
        Ok(-0.5 * total)
    }

    /// Riemannian gradient; always tangent at `x`.
    pub fn gradient(&self, x: &StiefelPoint) -> Result<TangentVector> {
        self.check_point(x)?;
        Ok(TangentVector::from_tangent_matrix(gradient_matrix(
            self.a.matrix(),
            self.weights.mu(),
            x.matrix(),
        )))
    }

    /// `hess[U, U]`; rejects non-tangent `U`.
    pub fn hessian_form(&self, x: &StiefelPoint, u: &TangentVector) -> Result<f64> {
        self.check_point(x)?;
        self.check_tangent(x, u)?;
        Ok(self.bilinear_unchecked(x, u.matrix(), u.matrix()))
    }

    /// Polarized Hessian `hess[U, V] = ¼(hess[U+V] − hess[U−V])`.
    pub fn hessian_bilinear(&self, x: &StiefelPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        self.check_point(x)?;
        self.check_tangent(x, u)?;
        self.check_tangent(x, v)?;
        Ok(self.bilinear_unchecked(x, u.matrix(), v.matrix()))
    }

    fn check_tangent(&self, x: &StiefelPoint, u: &TangentVector) -> Result<()> {
        if u.matrix().shape() != x.shape() {
            return Err(shape_err(x.shape(), u.matrix().shape()));
        }
        let residual = tangency_residual(x, u.matrix());
        if residual > crate::manifold::TANGENT_TOL * u.norm().max(1.0) {
            return Err(Error::NotTangent { residual });
        }
        Ok(())
    }

    // ½⟨B, UᵀV N + VᵀU N⟩ − ⟨A, U N Vᵀ⟩ with B = XᵀAX
    fn bilinear_unchecked(&self, x: &StiefelPoint, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
        let a = self.a.matrix();
        let n = self.weights.matrix();
        let b = x.matrix().transpose() * a * x.matrix();
        let utv = u.transpose() * v;
        let sym = (&utv + utv.transpose()) * 0.5;
        let first = b.dot(&(sym * &n));
        let second = (a * u * &n).dot(v);
        first - second
    }

    /// Dense Hessian in `basis` and its spectrum.
    pub fn hessian_matrix(&self, x: &StiefelPoint, basis: &TangentBasis) -> Result<HessianMatrix> {
        self.check_point(x)?;
        if basis.base.shape() != x.shape() || (basis.base.matrix() - x.matrix()).norm() > 1e-12 {
            return Err(Error::InvalidArgument("tangent basis is attached to a different point".into()));
        }
        let dim = basis.dim();
        let a = self.a.matrix();
        let n = self.weights.matrix();
        let b = x.matrix().transpose() * a * x.matrix();
        let nb = &n * &b;
        // W_a = U_a N B, Z_a = A U_a N; H_ab = ½(⟨U_a, W_b⟩ + ⟨U_b, W_a⟩) − ⟨Z_a, U_b⟩
        let w: Vec<DMatrix<f64>> = basis.vectors.iter().map(|u| u.matrix() * &nb).collect();
        let z: Vec<DMatrix<f64>> = basis.vectors.iter().map(|u| a * u.matrix() * &n).collect();
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let ui = basis.vectors[i].matrix();
            for j in i..dim {
                let uj = basis.vectors[j].matrix();
                let val = 0.5 * (ui.dot(&w[j]) + uj.dot(&w[i])) - z[i].dot(uj);
                h[(i, j)] = val;
                h[(j, i)] = val;
            }
        }
        let matrix = SymMatrix::symmetrize(h);
        let spectrum = HessianSpectrum::of(&matrix)?;
        Ok(HessianMatrix { matrix, spectrum })
    }

    /// Hessian spectrum at `x` in the canonical tangent basis.
    pub fn hessian_spectrum(&self, x: &StiefelPoint) -> Result<HessianSpectrum> {
        let basis = tangent_basis(x);
        Ok(self.hessian_matrix(x, &basis)?.spectrum)
    }
}

fn gradient_matrix(a: &DMatrix<f64>, mu: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = DMatrix::from_diagonal(&DVector::from_column_slice(mu));
    let ax = a * x;
    let b = x.transpose() * &ax;
    let bn = &b * &n;
    let commutator = &bn - &n * &b;
    x * &bn - ax * &n - x * commutator * 0.5
}

/// Eigenvalues of a Hessian matrix, ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub min_eig: f64,
}

impl HessianSpectrum {
    fn of(h: &SymMatrix) -> Result<Self> {
        if h.n() == 0 {
            return Ok(Self {
                eigenvalues: Vec::new(),
                min_eig: f64::INFINITY,
            });
        }
        let spec = sym_eig(h)?;
        let mut eigenvalues: Vec<f64> = spec.eigenvalues.iter().copied().collect();
        eigenvalues.reverse();
        Ok(Self {
            min_eig: eigenvalues[0],
            eigenvalues,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct HessianMatrix {
    pub matrix: SymMatrix,
    pub spectrum: HessianSpectrum,
}

/// Curvature class of the critical point `X_Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalCase {
    /// `Ω = (1, …, r)` in order.
    GlobalMin,
    /// A non-identity ordering of `{1, …, r}`.
    PermSaddle,
    /// `Ω` contains some index beyond `r`.
    OtherSaddle,
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    /// 1-based eigenvalue indices `i_1, …, i_r`.
    pub omega: Vec<usize>,
    pub point: StiefelPoint,
    pub case: CriticalCase,
}

pub fn classify_omega(omega: &[usize]) -> CriticalCase {
    let r = omega.len();
    if omega.iter().enumerate().all(|(j, &i)| i == j + 1) {
        CriticalCase::GlobalMin
    } else if omega.iter().all(|&i| (1..=r).contains(&i)) {
        CriticalCase::PermSaddle
    } else {
        CriticalCase::OtherSaddle
    }
}

pub fn validate_omega(omega: &[usize], n: usize) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::InvalidIndexSet("Ω is empty".into()));
    }
    let mut seen = vec![false; n + 1];
    for &i in omega {
        if i == 0 || i > n {
            return Err(Error::InvalidIndexSet(format!("index {i} outside 1..={n}")));
        }
        if seen[i] {
            return Err(Error::InvalidIndexSet(format!("index {i} repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `X_Ω` assembled from eigenvector columns, with its classification.
/// Refuses when the first `r + 1` eigenvalues are not strictly separated.
pub fn critical_point(spectrum: &Spectrum, omega: &[usize], weights: &Weights) -> Result<CriticalPoint> {
    if omega.len() != weights.r() {
        return Err(Error::InvalidIndexSet(format!(
            "|Ω| = {} but r = {}",
            omega.len(),
            weights.r()
        )));
    }
    validate_omega(omega, spectrum.n())?;
    strict_gap(spectrum, weights.r())?;
    let point = StiefelPoint::new(spectrum.select(omega))?;
    Ok(CriticalPoint {
        omega: omega.to_vec(),
        point,
        case: classify_omega(omega),
    })
}

/// `d_min` over the first `min(r + 1, N)` eigenvalues.
pub fn strict_gap(spectrum: &Spectrum, r: usize) -> Result<f64> {
    let n = spectrum.n();
    if r < n {
        spectrum.d_min(r)
    } else if n >= 2 {
        spectrum.d_min(n - 1)
    } else {
        Err(Error::DegenerateSpectrum("no eigenvalue gaps in dimension 1".into()))
    }
}

/// All ordered `r`-tuples of distinct indices from `1..=n`.
pub fn ordered_index_sets(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, r: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in 1..=n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, r, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    if r <= n {
        rec(n, r, &mut Vec::with_capacity(r), &mut vec![false; n + 1], &mut out);
    }
    out
}

/// Number of ordered `r`-tuples, saturating.
pub fn ordered_index_count(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    (n - r + 1..=n).fold(1usize, |acc, k| acc.saturating_mul(k))
}

/// Sampled supremum of a deviation and its closed-form upper bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Deviation {
    pub sampled_sup: f64,
    pub analytic_bound: f64,
}

fn check_pair(f: &Risk, g: &Risk) -> Result<SymMatrix> {
    if f.n() != g.n() || f.weights() != g.weights() {
        return Err(Error::InvalidArgument("risks differ in shape or weights".into()));
    }
    Ok(f.matrix().sub(g.matrix()))
}

/// `sup ‖grad f − grad g‖_F` over `samples`, against `(3/2) r^{3/2} ‖A_f − A_g‖`.
pub fn deviation_gradient_norm(f: &Risk, g: &Risk, samples: &[StiefelPoint]) -> Result<Deviation> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let diff = check_pair(f, g)?;
    let r = f.r() as f64;
    let analytic_bound = 1.5 * r.powf(1.5) * spectral_norm(&diff)?;
    let mu = f.weights().mu().to_vec();
    let sampled_sup = samples
        .par_iter()
        .map(|x| {
            if x.shape() != (f.n(), f.r()) {
                return Err(shape_err((f.n(), f.r()), x.shape()));
            }
            Ok(gradient_matrix(diff.matrix(), &mu, x.matrix()).norm())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0_f64, f64::max);
    Ok(Deviation {
        sampled_sup,
        analytic_bound,
    })
}

/// `sup max|eig(hess f − hess g)|` over `samples` (each in its own tangent
/// basis), against `2 r^{3/2} ‖A_f − A_g‖`.
pub fn deviation_hessian_norm(f: &Risk, g: &Risk, samples: &[StiefelPoint]) -> Result<Deviation> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let diff = check_pair(f, g)?;
    let r = f.r() as f64;
    let analytic_bound = 2.0 * r.powf(1.5) * spectral_norm(&diff)?;
    // the Hessian form is linear in A, so the difference form is the form of A_f − A_g
    let diff_risk = Risk::new(diff, f.weights().clone(), RiskKind::Empirical)?;
    let sampled_sup = samples
        .par_iter()
        .map(|x| Ok(diff_risk.hessian_spectrum(x)?.max_abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0_f64, f64::max);
    Ok(Deviation {
        sampled_sup,
        analytic_bound,
    })
}
