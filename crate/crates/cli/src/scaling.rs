//! Distance between empirical and population minimizers versus sample size.

use eigenscape::linalg::{procrustes_distance, sign_aligned_distance, sym_eig};
use eigenscape::measurement::ModelKind;
use eigenscape::manifold::random_stiefel;
use eigenscape::optimize::{oracle_from_spectrum, solve_rgd};
use eigenscape::{Risk, Rng, StiefelPoint};
use rayon::prelude::*;
use serde::Serialize;

use crate::format::{fit_loglog, format_float, LogLogFit};
use crate::spec::{DistanceKind, ExperimentSpec};
use crate::CliError;

/// RGD agreement threshold against the eigendecomposition oracle.
pub const RGD_AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub sweep_value: f64,
    pub mean_distance: f64,
    pub std_distance: f64,
    /// Trials that entered the mean.
    pub trials: usize,
    /// Trials dropped because the empirical spectrum was degenerate.
    pub excluded: usize,
    /// Mean of the other distance.
    pub alternate_mean_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RgdSummary {
    pub runs: usize,
    /// Sign-aligned distance to the oracle within tolerance.
    pub agreed: usize,
    pub saddle_flagged: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSummary {
    pub schema: u32,
    pub command: &'static str,
    pub kind: ModelKind,
    /// `m` or `p`.
    pub sweep_parameter: &'static str,
    pub distance: DistanceKind,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub alternate_distance: DistanceKind,
    pub alternate_slope: Option<f64>,
    pub alternate_stderr: Option<f64>,
    pub excluded: usize,
    pub points: Vec<ScalingPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rgd: Option<RgdSummary>,
    pub config: ExperimentSpec,
}

#[derive(Debug, Clone)]
pub struct ScalingOutput {
    pub csv: String,
    pub summary: ScalingSummary,
}

struct Trial {
    primary: f64,
    alternate: f64,
    rgd: Option<(bool, bool)>,
}

fn distance(kind: DistanceKind, a: &StiefelPoint, b: &StiefelPoint) -> eigenscape::Result<f64> {
    match kind {
        DistanceKind::SignAligned => sign_aligned_distance(a, b),
        DistanceKind::Procrustes => procrustes_distance(a, b),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Trial `t` of sweep point `k` draws from stream `derive(k + 1).derive(t)`
/// of the master seed.
pub fn run_scaling(spec: &ExperimentSpec) -> Result<ScalingOutput, CliError> {
    let base = spec.model()?;
    let values = spec.sweep_values()?;
    let kind = spec.distance_kind();
    let r = base.r;
    let root = Rng::from_seed(spec.master_seed());
    let solver = spec.solver.clone().unwrap_or_default();

    let mut points = Vec::with_capacity(values.len());
    let mut rgd_runs = 0;
    let mut rgd_agreed = 0;
    let mut rgd_saddles = 0;
    for (k, &value) in values.iter().enumerate() {
        let model = spec.model_at(value)?.model()?;
        let pop_spec = sym_eig(&model.expected_y())?;
        let pop = oracle_from_spectrum(&pop_spec, r)?;
        let stream = root.derive(k as u64 + 1);
        let trials = (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<Option<Trial>, CliError> {
                let mut rng = stream.derive(t as u64);
                let surrogate = model.sample(&mut rng)?;
                let risk = Risk::empirical(surrogate.y.into_matrix(), r)?;
                let emp_spec = sym_eig(risk.matrix())?;
                let emp = match oracle_from_spectrum(&emp_spec, r) {
                    Ok(x) => x,
                    Err(eigenscape::Error::DegenerateSpectrum(_)) => return Ok(None),
                    Err(e) => return Err(e.into()),
                };
                let rgd = if spec.rgd {
                    // the trial stream continues past the measurements
                    let init = random_stiefel(&mut rng, risk.n(), r)?;
                    let res = solve_rgd(&risk, &init, &solver)?;
                    let agreed = sign_aligned_distance(&res.point, &emp)? <= RGD_AGREEMENT_TOL;
                    Some((agreed, res.saddle_stagnation))
                } else {
                    None
                };
                Ok(Some(Trial {
                    primary: distance(kind, &emp, &pop)?,
                    alternate: distance(kind.other(), &emp, &pop)?,
                    rgd,
                }))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let kept: Vec<&Trial> = trials.iter().flatten().collect();
        let primary: Vec<f64> = kept.iter().map(|t| t.primary).collect();
        let alternate: Vec<f64> = kept.iter().map(|t| t.alternate).collect();
        for t in &kept {
            if let Some((agreed, saddle)) = t.rgd {
                rgd_runs += 1;
                rgd_agreed += agreed as usize;
                rgd_saddles += saddle as usize;
            }
        }
        let (mean, std) = mean_std(&primary);
        points.push(ScalingPoint {
            sweep_value: value,
            mean_distance: mean,
            std_distance: std,
            trials: kept.len(),
            excluded: spec.trials - kept.len(),
            alternate_mean_distance: mean_std(&alternate).0,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.sweep_value).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_distance).collect();
    let alt: Vec<f64> = points.iter().map(|p| p.alternate_mean_distance).collect();
    let fit: LogLogFit = fit_loglog(&xs, &ys).ok_or_else(|| {
        CliError::Numerical("cannot fit a log-log slope: a mean distance is zero or undefined".into())
    })?;
    let alt_fit = fit_loglog(&xs, &alt);

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Numerical(format!("csv: {e}"));
    w.write_record(["sweep_value", "mean_distance", "std_distance", "trials"])
        .map_err(csv_err)?;
    for p in &points {
        w.write_record([
            format_float(p.sweep_value),
            format_float(p.mean_distance),
            format_float(p.std_distance),
            p.trials.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?)
        .expect("ascii csv");

    let summary = ScalingSummary {
        schema: 1,
        command: "scaling",
        kind: base.kind,
        sweep_parameter: if base.kind == ModelKind::MatrixCompletion { "p" } else { "m" },
        distance: kind,
        slope: fit.slope,
        stderr: fit.stderr,
        intercept: fit.intercept,
        alternate_distance: kind.other(),
        alternate_slope: alt_fit.map(|f| f.slope),
        alternate_stderr: alt_fit.map(|f| f.stderr),
        excluded: points.iter().map(|p| p.excluded).sum(),
        points,
        rgd: spec.rgd.then_some(RgdSummary {
            runs: rgd_runs,
            agreed: rgd_agreed,
            saddle_flagged: rgd_saddles,
            tolerance: RGD_AGREEMENT_TOL,
        }),
        config: spec.clone(),
    };
    Ok(ScalingOutput { csv, summary })
}
