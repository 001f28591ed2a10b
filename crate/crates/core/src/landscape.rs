//! Numerical checks of the landscape of the Brockett risk.
//!
//! The probes sample points with small Riemannian gradient and verify that
//! the Hessian there has an eigenvalue of magnitude at least `η`. The other
//! checks verify the eigenvalue and distance bounds satisfied by any point
//! with `‖grad‖ ≤ ε`, and [`corollary_correspondence`] compares the
//! empirical and population minimizers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brockett::{
    classify_omega, critical_point, ordered_index_count, ordered_index_sets, strict_gap, CriticalCase, Risk,
    RiskKind, Weights,
};
use crate::error::{Error, Result};
use crate::linalg::{procrustes_distance, sign_aligned_distance, spectral_norm, sym_eig, Spectrum, SymMatrix};
use crate::manifold::{random_stiefel, random_tangent, retract_polar, StiefelPoint};
use crate::optimize::oracle_from_spectrum;
use crate::rng::Rng;

pub const SCHEMA_VERSION: u32 = 1;

/// Neighborhood radii as multiples of [`ProbeConfig::neighborhood_radius`].
pub const RADIUS_FACTORS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

/// Default cap on the number of enumerated index sets.
pub const DEFAULT_OMEGA_BUDGET: usize = 10_000;

/// Absolute slack added to every bound: `1e-8·max(1, ‖M‖)`.
pub fn numerical_slack(spectrum: &Spectrum) -> f64 {
    let norm = spectrum.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    1e-8 * norm.max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    SphereR1,
    Stiefel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub mode: ProbeMode,
    pub epsilon: f64,
    pub eta: f64,
    pub samples_per_critical_point: usize,
    /// Base radius; samples are drawn at [`RADIUS_FACTORS`] times this.
    pub neighborhood_radius: f64,
    pub uniform_samples: usize,
    pub omega_budget: usize,
    pub seed: u64,
}

impl ProbeConfig {
    /// `ε = 0.2(λ1 − λ2)`, `η = 0.3(λ1 − λ2)`.
    pub fn sphere(spectrum: &Spectrum) -> Result<Self> {
        let gap = strict_gap(spectrum, 1)?;
        let epsilon = 0.2 * gap;
        Ok(Self {
            mode: ProbeMode::SphereR1,
            epsilon,
            eta: 0.3 * gap,
            samples_per_critical_point: 1000,
            neighborhood_radius: epsilon / gap,
            uniform_samples: 1000,
            omega_budget: DEFAULT_OMEGA_BUDGET,
            seed: 0,
        })
    }

    /// `ε = d_min / (72 r)`, `η = 0.11 d_min`.
    pub fn stiefel(spectrum: &Spectrum, r: usize) -> Result<Self> {
        let d = strict_gap(spectrum, r)?;
        let epsilon = d / (72.0 * r as f64);
        Ok(Self {
            mode: ProbeMode::Stiefel,
            epsilon,
            eta: 0.11 * d,
            samples_per_critical_point: 1000,
            neighborhood_radius: epsilon / d,
            uniform_samples: 1000,
            omega_budget: DEFAULT_OMEGA_BUDGET,
            seed: 0,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.eta > 0.0 && self.neighborhood_radius > 0.0) {
            return Err(Error::InvalidArgument(
                "probe needs positive epsilon, eta and neighborhood radius".into(),
            ));
        }
        if self.omega_budget == 0 {
            return Err(Error::InvalidArgument("omega budget must be positive".into()));
        }
        Ok(())
    }
}

/// Counts for one sampled neighborhood (or for the uniform samples).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeBreakdown {
    /// Empty for the uniform samples.
    pub omega: Vec<usize>,
    pub case: Option<CriticalCase>,
    pub examined: usize,
    pub in_region: usize,
    pub violations: usize,
    pub worst_margin: Option<f64>,
    /// `λ_min(hess)` at the critical point itself.
    pub center_min_eig: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema: u32,
    pub mode: ProbeMode,
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub d_min: f64,
    pub slack: f64,
    pub points_examined: usize,
    /// Points with `‖grad‖ ≤ ε`.
    pub points_in_region: usize,
    /// Region points with `|λ_min(hess)| < η − slack`.
    pub violations: usize,
    /// `min (|λ_min| − η + slack)` over the region; negative iff violated.
    pub worst_margin: Option<f64>,
    pub omega_total: usize,
    pub omega_examined: usize,
    /// The enumeration budget was smaller than the number of index sets.
    pub partial: bool,
    pub per_critical_point: Vec<ProbeBreakdown>,
    pub uniform: ProbeBreakdown,
}

/// `ε`/`η` probe on the sphere (`r = 1`).
pub fn probe_theorem1(spectrum: &Spectrum, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.mode != ProbeMode::SphereR1 {
        return Err(Error::InvalidArgument("probe_theorem1 needs a sphere_r1 config".into()));
    }
    probe(spectrum, &Weights::standard(1), cfg)
}

/// `ε`/`η` probe on `St(N, r)`.
pub fn probe_theorem3(spectrum: &Spectrum, weights: &Weights, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.mode != ProbeMode::Stiefel {
        return Err(Error::InvalidArgument("probe_theorem3 needs a stiefel config".into()));
    }
    probe(spectrum, weights, cfg)
}

/// Index sets to probe: all of them within budget, otherwise the seeded
/// subset that keeps the identity and every ordering of `{1, …, r}`.
pub fn probe_index_sets(n: usize, r: usize, budget: usize, rng: &mut Rng) -> (Vec<Vec<usize>>, usize) {
    let total = ordered_index_count(n, r);
    if total <= budget {
        return (ordered_index_sets(n, r), total);
    }
    let mut sets = ordered_index_sets(r, r);
    // identity first
    sets.sort();
    let mut seen: std::collections::HashSet<Vec<usize>> = sets.iter().cloned().collect();
    let mut attempts = 0usize;
    while sets.len() < budget && attempts < 100 * budget {
        attempts += 1;
        let mut pool: Vec<usize> = (1..=n).collect();
        let mut omega = Vec::with_capacity(r);
        for _ in 0..r {
            let k = rng.below(pool.len());
            omega.push(pool.swap_remove(k));
        }
        if seen.insert(omega.clone()) {
            sets.push(omega);
        }
    }
    (sets, total)
}

struct Evaluator<'a> {
    risk: &'a Risk,
    epsilon: f64,
    threshold: f64,
    eta: f64,
    slack: f64,
}

#[derive(Default)]
struct Tally {
    examined: usize,
    in_region: usize,
    violations: usize,
    worst_margin: Option<f64>,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.examined += other.examined;
        self.in_region += other.in_region;
        self.violations += other.violations;
        self.worst_margin = match (self.worst_margin, other.worst_margin) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

impl Evaluator<'_> {
    fn visit(&self, x: &StiefelPoint, tally: &mut Tally) -> Result<()> {
        tally.examined += 1;
        if self.risk.gradient(x)?.norm() > self.epsilon {
            return Ok(());
        }
        tally.in_region += 1;
        let lmin = self.risk.hessian_spectrum(x)?.min_eig;
        let margin = lmin.abs() - self.eta + self.slack;
        if lmin.abs() < self.threshold {
            tally.violations += 1;
        }
        tally.worst_margin = Some(tally.worst_margin.map_or(margin, |w| w.min(margin)));
        Ok(())
    }
}

fn probe(spectrum: &Spectrum, weights: &Weights, cfg: &ProbeConfig) -> Result<ProbeReport> {
    cfg.validate()?;
    let (n, r) = (spectrum.n(), weights.r());
    let d_min = strict_gap(spectrum, r)?;
    let slack = numerical_slack(spectrum);
    let m = SymMatrix::symmetrize(spectrum.reconstruct());
    let risk = Risk::new(m, weights.clone(), RiskKind::Population)?;
    let eval = Evaluator {
        risk: &risk,
        epsilon: cfg.epsilon,
        threshold: cfg.eta - slack,
        eta: cfg.eta,
        slack,
    };
    let root = Rng::from_seed(cfg.seed);
    let (sets, omega_total) = probe_index_sets(n, r, cfg.omega_budget, &mut root.derive(u64::MAX));

    let per_point = sets
        .par_iter()
        .enumerate()
        .map(|(k, omega)| {
            let cp = critical_point(spectrum, omega, weights)?;
            let center_min_eig = risk.hessian_spectrum(&cp.point)?.min_eig;
            let mut rng = root.derive(k as u64);
            let mut tally = Tally::default();
            for s in 0..cfg.samples_per_critical_point {
                let signs: Vec<f64> = (0..r).map(|_| if rng.below(2) == 0 { 1.0 } else { -1.0 }).collect();
                let base = cp.point.with_column_signs(&signs);
                let radius = RADIUS_FACTORS[s % RADIUS_FACTORS.len()] * cfg.neighborhood_radius;
                let u = random_tangent(&mut rng, &base, radius)?;
                let x = retract_polar(&base, &u, 1.0)?;
                eval.visit(&x, &mut tally)?;
            }
            Ok(ProbeBreakdown {
                omega: omega.clone(),
                case: Some(cp.case),
                examined: tally.examined,
                in_region: tally.in_region,
                violations: tally.violations,
                worst_margin: tally.worst_margin,
                center_min_eig: Some(center_min_eig),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut uniform_rng = root.derive(u64::MAX - 1);
    let mut uniform = Tally::default();
    for _ in 0..cfg.uniform_samples {
        let x = random_stiefel(&mut uniform_rng, n, r)?;
        eval.visit(&x, &mut uniform)?;
    }

    let mut total = Tally::default();
    for b in &per_point {
        total.merge(&Tally {
            examined: b.examined,
            in_region: b.in_region,
            violations: b.violations,
            worst_margin: b.worst_margin,
        });
    }
    total.merge(&uniform);

    Ok(ProbeReport {
        schema: SCHEMA_VERSION,
        mode: cfg.mode,
        n,
        r,
        epsilon: cfg.epsilon,
        eta: cfg.eta,
        d_min,
        slack,
        points_examined: total.examined,
        points_in_region: total.in_region,
        violations: total.violations,
        worst_margin: total.worst_margin,
        omega_total,
        omega_examined: sets.len(),
        partial: sets.len() < omega_total,
        per_critical_point: per_point,
        uniform: ProbeBreakdown {
            omega: Vec::new(),
            case: None,
            examined: uniform.examined,
            in_region: uniform.in_region,
            violations: uniform.violations,
            worst_margin: uniform.worst_margin,
            center_min_eig: None,
        },
    })
}

/// Hessian sign check at one exact critical point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifiedPoint {
    pub omega: Vec<usize>,
    pub case: CriticalCase,
    pub min_eig: f64,
    /// `½ d_min` (lower bound) for the minimizer, `−½ d_min` or `−d_min`
    /// (upper bounds) for the saddles.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema: u32,
    pub d_min: f64,
    pub slack: f64,
    pub points: Vec<ClassifiedPoint>,
    pub all_hold: bool,
}

/// Classifies every ordered index set and checks the Hessian sign bounds
/// at each exact critical point.
pub fn classify_critical_points(risk: &Risk) -> Result<ClassificationReport> {
    let spectrum = sym_eig(risk.matrix())?;
    let r = risk.r();
    let d_min = strict_gap(&spectrum, r)?;
    let slack = numerical_slack(&spectrum);
    let points = ordered_index_sets(spectrum.n(), r)
        .par_iter()
        .map(|omega| {
            let cp = critical_point(&spectrum, omega, risk.weights())?;
            let min_eig = risk.hessian_spectrum(&cp.point)?.min_eig;
            let (bound, holds) = match cp.case {
                CriticalCase::GlobalMin => (0.5 * d_min, min_eig >= 0.5 * d_min - slack),
                CriticalCase::PermSaddle => (-0.5 * d_min, min_eig <= -0.5 * d_min + slack),
                CriticalCase::OtherSaddle => (-d_min, min_eig <= -d_min + slack),
            };
            Ok(ClassifiedPoint {
                omega: omega.clone(),
                case: cp.case,
                min_eig,
                bound,
                holds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationReport {
        schema: SCHEMA_VERSION,
        d_min,
        slack,
        all_hold: points.iter().all(|p| p.holds),
        points,
    })
}

// Coordinates of x in the eigenbasis, C = Vᵀ x.
fn eigen_coordinates(spectrum: &Spectrum, x: &StiefelPoint) -> Result<DMatrix<f64>> {
    if x.n() != spectrum.n() {
        return Err(crate::error::shape_err((spectrum.n(), x.r()), x.shape()));
    }
    Ok(spectrum.eigenvectors.transpose() * x.matrix())
}

fn gradient_norm_in_eigenbasis(lambda: &DVector<f64>, c: &DMatrix<f64>, mu: &[f64]) -> f64 {
    let lam = DMatrix::from_diagonal(lambda);
    let n = DMatrix::from_diagonal(&DVector::from_column_slice(mu));
    let lc = &lam * c;
    let b = c.transpose() * &lc;
    let bn = &b * &n;
    let grad = c * &bn - lc * &n - c * (&bn - &n * &b) * 0.5;
    grad.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBound {
    /// `‖x − v1‖² ≤ 2ε / (λ1 − λ2)`.
    Upper,
    /// `‖x − v1‖² ≥ 2(1 − ε / (λ1 − λ_n − ε))`.
    Lower,
    /// `λ1 − λ_n − ε ≤ 0`, nothing to check.
    Vacuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma1Record {
    pub grad_norm: f64,
    /// 1-based index of the eigenvalue nearest to `xᵀMx`.
    pub n: usize,
    pub residual: f64,
    /// Sign-aligned `‖x − v1‖²`.
    pub distance_sq: f64,
    pub bound_kind: DistanceBound,
    pub bound: f64,
    pub residual_holds: bool,
    pub distance_holds: bool,
}

impl Lemma1Record {
    pub fn holds(&self) -> bool {
        self.residual_holds && self.distance_holds
    }
}

/// Eigenvalue and distance bounds for a sphere point with `‖grad‖ ≤ ε`.
pub fn check_lemma1(spectrum: &Spectrum, x: &StiefelPoint, epsilon: f64) -> Result<Lemma1Record> {
    if x.r() != 1 {
        return Err(Error::InvalidArgument("check_lemma1 needs a unit vector".into()));
    }
    strict_gap(spectrum, 1)?;
    let slack = numerical_slack(spectrum);
    let c = eigen_coordinates(spectrum, x)?;
    let lambda = &spectrum.eigenvalues;
    let grad_norm = gradient_norm_in_eigenbasis(lambda, &c, &[1.0]);
    if grad_norm > epsilon + slack {
        return Err(Error::Precondition(format!(
            "‖grad‖ = {grad_norm:.3e} exceeds ε = {epsilon:.3e}"
        )));
    }
    let q: f64 = (0..spectrum.n()).map(|i| lambda[i] * c[(i, 0)] * c[(i, 0)]).sum();
    let (idx, residual) = nearest_eigenvalue(lambda, q);
    let distance_sq = 2.0 * (1.0 - c[(0, 0)].abs());
    let (l1, l2) = (spectrum.lambda(1), spectrum.lambda(2));
    let (bound_kind, bound, distance_holds) = if idx == 1 {
        let b = 2.0 * epsilon / (l1 - l2);
        (DistanceBound::Upper, b, distance_sq <= b + slack)
    } else {
        let denom = l1 - spectrum.lambda(idx) - epsilon;
        if denom > 0.0 {
            let b = 2.0 * (1.0 - epsilon / denom);
            (DistanceBound::Lower, b, distance_sq >= b - slack)
        } else {
            (DistanceBound::Vacuous, 0.0, true)
        }
    };
    Ok(Lemma1Record {
        grad_norm,
        n: idx,
        residual,
        distance_sq,
        bound_kind,
        bound,
        residual_holds: residual <= epsilon + slack,
        distance_holds,
    })
}

fn nearest_eigenvalue(lambda: &DVector<f64>, q: f64) -> (usize, f64) {
    let mut best = (1, (q - lambda[0]).abs());
    for (i, l) in lambda.iter().enumerate().skip(1) {
        let d = (q - l).abs();
        if d < best.1 {
            best = (i + 1, d);
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma2Record {
    pub grad_norm: f64,
    /// Per-column nearest eigenvalue indices (1-based).
    pub omega: Vec<usize>,
    /// `‖XᵀMX − Λ_Ω‖_F`.
    pub residual: f64,
    /// `4ε`.
    pub residual_bound: f64,
    pub residual_holds: bool,
    /// Sign-aligned `‖X − X_Ω‖_F` when `Ω = (1, …, r)`.
    pub distance: Option<f64>,
    /// `12 ε / d_min`.
    pub distance_bound: Option<f64>,
    pub distance_holds: bool,
}

impl Lemma2Record {
    pub fn holds(&self) -> bool {
        self.residual_holds && self.distance_holds
    }
}

/// Eigenvalue and distance bounds for a Stiefel point with `‖grad‖_F ≤ ε`.
pub fn check_lemma2(spectrum: &Spectrum, weights: &Weights, x: &StiefelPoint, epsilon: f64) -> Result<Lemma2Record> {
    let r = weights.r();
    if x.r() != r {
        return Err(crate::error::shape_err((spectrum.n(), r), x.shape()));
    }
    let d_min = strict_gap(spectrum, r)?;
    let slack = numerical_slack(spectrum);
    let c = eigen_coordinates(spectrum, x)?;
    let lambda = &spectrum.eigenvalues;
    let grad_norm = gradient_norm_in_eigenbasis(lambda, &c, weights.mu());
    if grad_norm > epsilon + slack {
        return Err(Error::Precondition(format!(
            "‖grad‖_F = {grad_norm:.3e} exceeds ε = {epsilon:.3e}"
        )));
    }
    let b = c.transpose() * DMatrix::from_diagonal(lambda) * &c;
    let omega: Vec<usize> = (0..r).map(|j| nearest_eigenvalue(lambda, b[(j, j)]).0).collect();
    let mut diff = b.clone();
    for (j, &i) in omega.iter().enumerate() {
        diff[(j, j)] -= spectrum.lambda(i);
    }
    let residual = diff.norm();
    let residual_bound = 4.0 * epsilon;
    let (distance, distance_bound, distance_holds) = if classify_omega(&omega) == CriticalCase::GlobalMin {
        let xo = StiefelPoint::new(spectrum.select(&omega))?;
        let dist = sign_aligned_distance(x, &xo)?;
        let bound = 12.0 * epsilon / d_min;
        (Some(dist), Some(bound), dist <= bound + slack)
    } else {
        (None, None, true)
    };
    Ok(Lemma2Record {
        grad_norm,
        omega,
        residual,
        residual_bound,
        residual_holds: residual <= residual_bound + slack,
        distance,
        distance_bound,
        distance_holds,
    })
}

/// Thresholds for the deviation conditions; `None` takes the defaults of
/// the population spectrum (sphere constants for `r = 1`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceConfig {
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrespondenceRecord {
    pub schema: u32,
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub eta: f64,
    /// `‖A_f − A_g‖`.
    pub deviation: f64,
    /// `(3/2) r^{3/2} ‖A_f − A_g‖`.
    pub gradient_bound: f64,
    /// `2 r^{3/2} ‖A_f − A_g‖`.
    pub hessian_bound: f64,
    /// `gradient_bound ≤ ε/2`.
    pub gradient_condition: bool,
    /// `hessian_bound ≤ η/2`.
    pub hessian_condition: bool,
    /// Both conditions hold, so the minimizers correspond.
    pub correspondence_claimed: bool,
    pub sign_aligned_distance: f64,
    pub procrustes_distance: f64,
    /// `λ_r − λ_{r+1}` of the population matrix.
    pub eigengap: f64,
    /// `‖A_f − A_g‖ ≤ (1 − 1/√2)(λ_r − λ_{r+1})`.
    pub davis_kahan_applicable: bool,
    /// `2 ‖A_f − A_g‖ / (λ_r − λ_{r+1})`.
    pub davis_kahan_bound: f64,
    /// Procrustes distance within the bound (true when not applicable).
    pub davis_kahan_holds: bool,
}

pub fn corollary_correspondence(g: &Risk, f: &Risk, cfg: &CorrespondenceConfig) -> Result<CorrespondenceRecord> {
    if g.n() != f.n() || g.weights() != f.weights() {
        return Err(Error::InvalidArgument("risks differ in shape or weights".into()));
    }
    let (n, r) = (g.n(), g.r());
    if r >= n {
        return Err(Error::InvalidArgument("correspondence needs r < n".into()));
    }
    let gs = sym_eig(g.matrix())?;
    let fs = sym_eig(f.matrix())?;
    let (eps_default, eta_default) = if r == 1 {
        let c = ProbeConfig::sphere(&gs)?;
        (c.epsilon, c.eta)
    } else {
        let c = ProbeConfig::stiefel(&gs, r)?;
        (c.epsilon, c.eta)
    };
    let epsilon = cfg.epsilon.unwrap_or(eps_default);
    let eta = cfg.eta.unwrap_or(eta_default);
    let deviation = spectral_norm(&f.matrix().sub(g.matrix()))?;
    let scale = (r as f64).powf(1.5);
    let gradient_bound = 1.5 * scale * deviation;
    let hessian_bound = 2.0 * scale * deviation;
    let gradient_condition = gradient_bound <= epsilon / 2.0;
    let hessian_condition = hessian_bound <= eta / 2.0;
    let pop = oracle_from_spectrum(&gs, r)?;
    let emp = oracle_from_spectrum(&fs, r)?;
    let sad = sign_aligned_distance(&emp, &pop)?;
    let pro = procrustes_distance(&emp, &pop)?;
    let eigengap = gs.gap(r);
    let davis_kahan_applicable = deviation <= (1.0 - std::f64::consts::FRAC_1_SQRT_2) * eigengap;
    let davis_kahan_bound = 2.0 * deviation / eigengap;
    let slack = numerical_slack(&gs);
    Ok(CorrespondenceRecord {
        schema: SCHEMA_VERSION,
        n,
        r,
        epsilon,
        eta,
        deviation,
        gradient_bound,
        hessian_bound,
        gradient_condition,
        hessian_condition,
        correspondence_claimed: gradient_condition && hessian_condition,
        sign_aligned_distance: sad,
        procrustes_distance: pro,
        eigengap,
        davis_kahan_applicable,
        davis_kahan_bound,
        davis_kahan_holds: !davis_kahan_applicable || pro <= davis_kahan_bound + slack,
    })
}
