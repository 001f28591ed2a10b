//! Riemannian gradient descent with Armijo backtracking, and the
//! eigendecomposition oracle for global minimizers.

use serde::{Deserialize, Serialize};

use crate::brockett::{strict_gap, validate_omega, Risk};
use crate::error::{Error, Result};
use crate::linalg::{sign_aligned_distance, sym_eig, Spectrum};
use crate::manifold::{random_stiefel, retract_polar, retract_qr, StiefelPoint, TangentVector};
use crate::rng::Rng;

/// Smallest step tried before the line search gives up.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retraction {
    Qr,
    Polar,
}

impl Retraction {
    pub fn apply(self, x: &StiefelPoint, u: &TangentVector, t: f64) -> Result<StiefelPoint> {
        match self {
            Retraction::Qr => retract_qr(x, u, t),
            Retraction::Polar => retract_polar(x, u, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Largest trial step; the line search starts from the minimizer of the
    /// quadratic model along the gradient when that is smaller.
    pub initial_step: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub retraction: Retraction,
    /// Seed for [`random_init`].
    pub seed: u64,
    /// Compute the Hessian spectrum at the final point to flag saddles.
    pub check_saddle: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-9,
            initial_step: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            retraction: Retraction::Qr,
            seed: 0,
            check_saddle: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver config: {what}")));
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        Ok(())
    }
}

/// Which critical point an iterate is closest to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearestCritical {
    pub omega: Vec<usize>,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: StiefelPoint,
    pub final_grad_norm: f64,
    pub iterations: usize,
    /// Cost at the initial point followed by the cost after each accepted step.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    /// The line search hit [`MIN_STEP`] without satisfying the Armijo condition.
    pub line_search_failed: bool,
    /// Smallest Hessian eigenvalue at the final point, when computed.
    pub min_hessian_eig: Option<f64>,
    /// Finished with a negative Hessian eigenvalue.
    pub saddle_stagnation: bool,
    pub nearest: Option<NearestCritical>,
}

/// Cost differences below this are indistinguishable from rounding error
/// in the retraction.
pub fn rounding_floor(risk: &Risk) -> f64 {
    64.0 * f64::EPSILON * (1.0 + risk.matrix().frobenius_norm() * risk.weights().trace())
}

/// Uniform random starting point from `cfg.seed`.
pub fn random_init(risk: &Risk, cfg: &SolverConfig) -> Result<StiefelPoint> {
    random_stiefel(&mut Rng::from_seed(cfg.seed), risk.n(), risk.r())
}

pub fn solve_rgd(risk: &Risk, init: &StiefelPoint, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let mut x = StiefelPoint::new(init.matrix().clone())?;
    if x.shape() != (risk.n(), risk.r()) {
        return Err(crate::error::shape_err((risk.n(), risk.r()), x.shape()));
    }
    let floor = rounding_floor(risk);
    let mut cost = risk.cost(&x)?;
    let mut trace = vec![cost];
    let mut grad = risk.gradient(&x)?;
    let mut gnorm = grad.norm();
    let mut iterations = 0;
    let mut line_search_failed = false;
    while gnorm > cfg.grad_tol && iterations < cfg.max_iters {
        let dir = grad.scaled(-1.0);
        let decrease = cfg.armijo_c * gnorm * gnorm;
        // first trial: minimizer of the quadratic model along −grad, capped
        let curvature = risk.hessian_form(&x, &grad)?;
        let mut t = if curvature > 0.0 {
            (gnorm * gnorm / curvature).min(cfg.initial_step)
        } else {
            cfg.initial_step
        };
        let accepted = loop {
            let candidate = cfg.retraction.apply(&x, &dir, t)?;
            let delta = risk.cost_difference(&x, &candidate)?;
            if delta <= -t * decrease {
                break Some((candidate, None));
            }
            // When even the first-order decrease is below the rounding floor
            // the cost change cannot be resolved; accept the step if the
            // gradient shrinks instead.
            if t * gnorm * gnorm <= 16.0 * floor && delta <= floor {
                let g = risk.gradient(&candidate)?;
                if g.norm() < gnorm {
                    break Some((candidate, Some(g)));
                }
            }
            t *= cfg.backtrack_factor;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((next, next_grad)) = accepted else {
            line_search_failed = true;
            break;
        };
        x = next;
        cost = risk.cost(&x)?;
        trace.push(cost);
        grad = match next_grad {
            Some(g) => g,
            None => risk.gradient(&x)?,
        };
        gnorm = grad.norm();
        iterations += 1;
    }
    let converged = gnorm <= cfg.grad_tol;
    let min_hessian_eig = if cfg.check_saddle {
        Some(risk.hessian_spectrum(&x)?.min_eig)
    } else {
        None
    };
    let slack = 1e-10 * risk.matrix().frobenius_norm().max(1.0);
    let saddle_stagnation = min_hessian_eig.is_some_and(|l| l < -slack);
    let nearest = sym_eig(risk.matrix())
        .ok()
        .and_then(|s| nearest_critical_point(&s, &x).ok());
    Ok(SolveResult {
        point: x,
        final_grad_norm: gnorm,
        iterations,
        cost_trace: trace,
        converged,
        line_search_failed,
        min_hessian_eig,
        saddle_stagnation,
        nearest,
    })
}

/// Top-`r` eigenvectors of the risk matrix, column `j` paired with `λ_j`.
/// Refuses when `λ_1 > … > λ_{r+1}` fails.
pub fn solve_oracle(risk: &Risk) -> Result<StiefelPoint> {
    let spectrum = sym_eig(risk.matrix())?;
    oracle_from_spectrum(&spectrum, risk.r())
}

pub fn oracle_from_spectrum(spectrum: &Spectrum, r: usize) -> Result<StiefelPoint> {
    strict_gap(spectrum, r)?;
    let omega: Vec<usize> = (1..=r).collect();
    StiefelPoint::new(spectrum.select(&omega))
}

/// For each column of `x`, the eigenvector with the largest overlap; the
/// distance is sign-aligned to the resulting `X_Ω`.
pub fn nearest_critical_point(spectrum: &Spectrum, x: &StiefelPoint) -> Result<NearestCritical> {
    let overlaps = spectrum.eigenvectors.transpose() * x.matrix();
    let omega: Vec<usize> = (0..x.r())
        .map(|j| {
            let col = overlaps.column(j);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            best + 1
        })
        .collect();
    validate_omega(&omega, spectrum.n())?;
    let xo = StiefelPoint::new(spectrum.select(&omega))?;
    Ok(NearestCritical {
        distance: sign_aligned_distance(x, &xo)?,
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brockett::{critical_point, ordered_index_sets};
    use crate::linalg::SymMatrix;

    fn diag_risk(d: &[f64], r: usize) -> Risk {
        Risk::population(SymMatrix::from_diagonal(d), r).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig { backtrack_factor: 1.0, ..Default::default() },
            SolverConfig { armijo_c: 0.0, ..Default::default() },
            SolverConfig { grad_tol: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn starting_at_the_minimizer_is_a_fixed_point() {
        let risk = diag_risk(&[2.0, 1.0, 0.0], 2);
        let x = solve_oracle(&risk).unwrap();
        let res = solve_rgd(&risk, &x, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 1);
        assert!(sign_aligned_distance(&x, &res.point).unwrap() < 1e-12);
        assert!(!res.saddle_stagnation);
    }

    #[test]
    fn random_inits_reach_the_top_eigenvector() {
        let risk = diag_risk(&[2.0, 1.0, 0.0], 1);
        let oracle = solve_oracle(&risk).unwrap();
        let mut hits = 0;
        for seed in 0..100 {
            let cfg = SolverConfig { seed, ..Default::default() };
            let res = solve_rgd(&risk, &random_init(&risk, &cfg).unwrap(), &cfg).unwrap();
            if sign_aligned_distance(&res.point, &oracle).unwrap() <= 1e-6 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn cost_trace_is_nonincreasing_and_iterates_stay_feasible() {
        let risk = diag_risk(&[3.0, 2.5, 1.0, 0.2], 2);
        let cfg = SolverConfig { seed: 4, ..Default::default() };
        let res = solve_rgd(&risk, &random_init(&risk, &cfg).unwrap(), &cfg).unwrap();
        assert!(res.converged);
        assert!(res.final_grad_norm <= cfg.grad_tol);
        assert_eq!(res.cost_trace.len(), res.iterations + 1);
        let floor = rounding_floor(&risk);
        for w in res.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + floor);
        }
        assert!(crate::manifold::orthonormality_residual(res.point.matrix()) <= 1e-9);
        assert_eq!(res.nearest.unwrap().omega, vec![1, 2]);
    }

    #[test]
    fn polar_retraction_also_converges() {
        let risk = diag_risk(&[3.0, 2.0, 1.0], 2);
        let cfg = SolverConfig { retraction: Retraction::Polar, seed: 9, ..Default::default() };
        let res = solve_rgd(&risk, &random_init(&risk, &cfg).unwrap(), &cfg).unwrap();
        assert!(res.converged);
    }

    #[test]
    fn exact_saddle_is_flagged() {
        let risk = diag_risk(&[3.0, 2.0, 1.0], 1);
        let x = StiefelPoint::from_unit_columns(3, &[1]).unwrap();
        let res = solve_rgd(&risk, &x, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.saddle_stagnation);
        assert!(res.min_hessian_eig.unwrap() < 0.0);
        assert_eq!(res.nearest.unwrap().omega, vec![2]);
    }

    #[test]
    fn step_underflow_is_reported_not_raised() {
        let risk = diag_risk(&[3.0, 2.0, 1.0], 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = StiefelPoint::new(nalgebra::DMatrix::from_column_slice(3, 1, &[h, h, 0.0])).unwrap();
        // a first trial step below the floor leaves the point unchanged
        let cfg = SolverConfig { initial_step: 1e-17, ..Default::default() };
        let res = solve_rgd(&risk, &x, &cfg).unwrap();
        assert!(!res.converged);
        assert!(res.line_search_failed);
    }

    #[test]
    fn oracle_examples() {
        let risk = diag_risk(&[2.0, 1.0, 0.0], 2);
        let x = solve_oracle(&risk).unwrap();
        let e12 = StiefelPoint::from_unit_columns(3, &[0, 1]).unwrap();
        assert!(sign_aligned_distance(&x, &e12).unwrap() < 1e-14);

        let shuffled = diag_risk(&[0.0, 2.0, 1.0], 2);
        let x = solve_oracle(&shuffled).unwrap();
        let expect = StiefelPoint::from_unit_columns(3, &[1, 2]).unwrap();
        assert!(sign_aligned_distance(&x, &expect).unwrap() < 1e-14);

        let tied = diag_risk(&[2.0, 1.0, 1.0], 2);
        let err = solve_oracle(&tied).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum(ref s) if s.contains("λ_2")));
    }

    #[test]
    fn oracle_beats_every_saddle() {
        let risk = diag_risk(&[4.0, 3.0, 2.0, 1.0], 2);
        let best = risk.cost(&solve_oracle(&risk).unwrap()).unwrap();
        let spec = sym_eig(risk.matrix()).unwrap();
        let sets = ordered_index_sets(4, 2);
        assert_eq!(sets.len(), 12);
        for omega in sets.iter().filter(|o| o.as_slice() != [1, 2]) {
            let cp = critical_point(&spec, omega, risk.weights()).unwrap();
            assert!(best < risk.cost(&cp.point).unwrap());
        }
    }
}
