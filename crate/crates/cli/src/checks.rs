//! Landscape probes, expectation checks and population/empirical correspondence.

use eigenscape::landscape::{
    corollary_correspondence, probe_theorem1, probe_theorem3, CorrespondenceConfig,
    CorrespondenceRecord, ProbeConfig, ProbeReport,
};
use eigenscape::linalg::sym_eig;
use eigenscape::measurement::{verify_expectation, ExpectationReport, GroundTruth, ModelKind};
use eigenscape::{Risk, Rng, Weights};
use rayon::prelude::*;
use serde::Serialize;

use crate::spec::ExperimentSpec;
use crate::CliError;

/// Rank 1 probes the sphere; larger ranks probe the Stiefel manifold with
/// standard weights.
pub fn run_probe(spec: &ExperimentSpec) -> Result<ProbeReport, CliError> {
    let p = spec
        .probe
        .as_ref()
        .ok_or_else(|| CliError::Spec("`probe` needs a probe section".into()))?;
    let matrix = GroundTruth::parse(&p.matrix, spec.master_seed())?.matrix();
    let spectrum = sym_eig(&matrix)?;
    if p.r >= spectrum.n() {
        return Err(CliError::Spec(format!(
            "probe rank {} must be below n = {}",
            p.r,
            spectrum.n()
        )));
    }
    let mut cfg = if p.r == 1 {
        ProbeConfig::sphere(&spectrum)?
    } else {
        ProbeConfig::stiefel(&spectrum, p.r)?
    };
    if let Some(v) = p.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = p.eta {
        cfg.eta = v;
    }
    if let Some(v) = p.samples_per_critical_point {
        cfg.samples_per_critical_point = v;
    }
    if let Some(v) = p.uniform_samples {
        cfg.uniform_samples = v;
    }
    if let Some(v) = p.neighborhood_radius {
        cfg.neighborhood_radius = v;
    }
    if let Some(v) = p.omega_budget {
        cfg.omega_budget = v;
    }
    cfg.seed = spec.master_seed();
    let report = if p.r == 1 {
        probe_theorem1(&spectrum, &cfg)?
    } else {
        probe_theorem3(&spectrum, &Weights::standard(p.r), &cfg)?
    };
    Ok(report)
}

pub fn run_verify_expectation(spec: &ExperimentSpec) -> Result<ExpectationReport, CliError> {
    Ok(verify_expectation(spec.model()?, spec.trials)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondSummary {
    pub schema: u32,
    pub kind: ModelKind,
    pub trials: usize,
    /// Trials where both deviation conditions held.
    pub claimed: usize,
    pub davis_kahan_applicable: usize,
    pub davis_kahan_violations: usize,
    pub records: Vec<CorrespondenceRecord>,
}

/// One surrogate per trial, trial `t` on stream `derive(t)` of the master
/// seed. The population risk is built on `E[Y]`, the empirical one on `Y`.
pub fn run_correspond(spec: &ExperimentSpec) -> Result<CorrespondSummary, CliError> {
    let cfg = spec.model()?;
    let model = cfg.model()?;
    let g = Risk::population(model.expected_y(), cfg.r)?;
    let root = Rng::from_seed(spec.master_seed());
    let ccfg = CorrespondenceConfig { epsilon: None, eta: None };
    let records = (0..spec.trials)
        .into_par_iter()
        .map(|t| -> Result<CorrespondenceRecord, CliError> {
            let surrogate = model.sample(&mut root.derive(t as u64))?;
            let f = Risk::empirical(surrogate.y.into_matrix(), cfg.r)?;
            Ok(corollary_correspondence(&g, &f, &ccfg)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorrespondSummary {
        schema: 1,
        kind: cfg.kind,
        trials: records.len(),
        claimed: records.iter().filter(|r| r.correspondence_claimed).count(),
        davis_kahan_applicable: records.iter().filter(|r| r.davis_kahan_applicable).count(),
        davis_kahan_violations: records.iter().filter(|r| !r.davis_kahan_holds).count(),
        records,
    })
}
