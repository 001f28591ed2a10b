//! Population and empirical risks on a `(θ, φ)` grid of the sphere `S²`.

use eigenscape::brockett::{critical_point, ordered_index_sets, CriticalCase};
use eigenscape::linalg::{sym_eig, Spectrum, SymMatrix};
use eigenscape::measurement::ModelKind;
use eigenscape::{Risk, Rng};
use serde::Serialize;

use crate::format::format_float;
use crate::spec::ExperimentSpec;
use crate::{to_json, CliError};

#[derive(Debug, Clone)]
pub struct ScanOutput {
    /// `theta,phi,g,f`; absent for `r > 1`.
    pub csv: Option<String>,
    pub critical_points: String,
}

#[derive(Debug, Clone, Serialize)]
struct CriticalEntry {
    omega: Vec<usize>,
    /// Per-column signs applied to the eigenvectors.
    signs: Vec<f64>,
    case: CriticalCase,
    /// Column-major entries of `X_Ω`.
    point: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    cost: f64,
}

#[derive(Debug, Clone, Serialize)]
struct CriticalPoints {
    schema: u32,
    kind: ModelKind,
    n: usize,
    r: usize,
    population_matrix: SymMatrix,
    empirical_matrix: SymMatrix,
    population: Option<Vec<CriticalEntry>>,
    empirical: Option<Vec<CriticalEntry>>,
    /// Why a listing is missing (tied eigenvalues).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

/// Unit vector at colatitude `theta` and longitude `phi`.
pub fn sphere_point(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn quadratic(a: &SymMatrix, x: &[f64; 3]) -> f64 {
    let m = a.matrix();
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += x[i] * m[(i, j)] * x[j];
        }
    }
    s
}

fn listing(risk: &Risk, spectrum: &Spectrum) -> Result<Vec<CriticalEntry>, CliError> {
    let r = risk.r();
    let mut out = Vec::new();
    for omega in ordered_index_sets(spectrum.n(), r) {
        let cp = critical_point(spectrum, &omega, risk.weights())?;
        // both signs on the sphere, the canonical sign otherwise
        let sign_sets: Vec<Vec<f64>> = if r == 1 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            vec![vec![1.0; r]]
        };
        for signs in sign_sets {
            let x = cp.point.with_column_signs(&signs);
            out.push(CriticalEntry {
                omega: omega.clone(),
                signs: signs.clone(),
                case: cp.case,
                point: x.matrix().column_iter().map(|c| c.iter().copied().collect()).collect(),
                eigenvalues: omega.iter().map(|&i| spectrum.lambda(i)).collect(),
                cost: risk.cost(&x)?,
            });
        }
    }
    Ok(out)
}

/// Grid values of the population risk (built on `E[Y]`) and the empirical
/// risk (built on `sym(Y)`), plus critical-point listings of both.
pub fn run_landscape_scan(spec: &ExperimentSpec) -> Result<ScanOutput, CliError> {
    let cfg = spec.model()?;
    let model = cfg.model()?;
    let r = cfg.r;
    let surrogate = model.sample(&mut Rng::from_seed(spec.master_seed()))?;
    let g = Risk::population(surrogate.expected_y.clone(), r)?;
    let f = Risk::empirical(surrogate.y.matrix().clone(), r)?;

    let mut notes = Vec::new();
    let mut list = |risk: &Risk, label: &str| -> Result<Option<Vec<CriticalEntry>>, CliError> {
        let spectrum = sym_eig(risk.matrix())?;
        match listing(risk, &spectrum) {
            Ok(v) => Ok(Some(v)),
            Err(CliError::Numerical(msg)) => {
                notes.push(format!("{label}: {msg}"));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let population = list(&g, "population")?;
    let empirical = list(&f, "empirical")?;
    let critical = CriticalPoints {
        schema: 1,
        kind: cfg.kind,
        n: cfg.n,
        r,
        population_matrix: surrogate.expected_y.clone(),
        empirical_matrix: surrogate.y.clone(),
        population,
        empirical,
        notes,
    };

    let csv = if r == 1 {
        let grid = spec.grid.unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["theta", "phi", "g", "f"]).map_err(csv_err)?;
        for i in 0..grid.theta {
            let theta = std::f64::consts::PI * i as f64 / (grid.theta - 1) as f64;
            for j in 0..grid.phi {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / grid.phi as f64;
                let x = sphere_point(theta, phi);
                // adding 0.0 turns -0.0 into +0.0
                let gv = -0.5 * quadratic(g.matrix(), &x) + 0.0;
                let fv = -0.5 * quadratic(f.matrix(), &x) + 0.0;
                w.write_record([theta, phi, gv, fv].map(format_float)).map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?;
        Some(String::from_utf8(bytes).expect("ascii csv"))
    } else {
        None
    };
    Ok(ScanOutput {
        csv,
        critical_points: to_json(&critical),
    })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Numerical(format!("csv: {e}"))
}
