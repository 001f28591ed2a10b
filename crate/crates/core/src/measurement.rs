//! Random measurement models and their surrogate matrices.
//!
//! | model              | samples                         | surrogate `Y`                  | `E[Y]`              |
//! |--------------------|---------------------------------|--------------------------------|---------------------|
//! | matrix sensing     | `y_i = ⟨A_i, M⟩`, `A_i` Gaussian | `(1/m) Σ y_i A_i`              | `M`                 |
//! | matrix completion  | entries kept with prob. `p`     | `P_Ω(M) / p`                   | `M`                 |
//! | phase retrieval    | `y_i = (a_iᵀ x*)²`              | `(1/m) Σ y_i a_i a_iᵀ`         | `M + ½‖x*‖² I`      |
//! | quadratic sensing  | `y_i = ‖X*ᵀ a_i‖²`              | `(1/m) Σ y_i a_i a_iᵀ`         | `M + ½‖X*‖_F² I`    |
//!
//! The vectors `a_i` have i.i.d. entries of variance `1/√2`. Every surrogate
//! is symmetrized before use.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, thin_q, SymMatrix};
use crate::rng::{gaussian_matrix, Rng};

/// Standard deviation of the phase-retrieval/quadratic-sensing vectors, `2^{-1/4}`.
pub const QUADRATIC_STD: f64 = 0.840_896_415_253_714_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MatrixSensing,
    MatrixCompletion,
    PhaseRetrieval,
    QuadraticSensing,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MatrixSensing => "matrix_sensing",
            ModelKind::MatrixCompletion => "matrix_completion",
            ModelKind::PhaseRetrieval => "phase_retrieval",
            ModelKind::QuadraticSensing => "quadratic_sensing",
        }
    }
}

/// Serialized description of one measurement experiment.
///
/// `ground_truth` is one of
/// `diag:[…]`, `matrix:[[…],…]`, `factor:[[…],…]` (rows of `X*`),
/// `vector:[…]` or `random_psd:{"n":…,"r":…,"seed":…,"orthogonalize":false}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n: usize,
    /// Rank of the Brockett risk built on the surrogate.
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub seed: u64,
    pub ground_truth: String,
    /// Completion only: sample the upper triangle and mirror it.
    #[serde(default)]
    pub mirror_upper: bool,
    /// Keep the scalar measurements in the surrogate.
    #[serde(default)]
    pub keep_raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPsdSpec {
    pub n: usize,
    pub r: usize,
    /// Defaults to the seed of the enclosing config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub orthogonalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Matrix(SymMatrix),
    /// `M = X* X*ᵀ`.
    Factor(DMatrix<f64>),
}

impl GroundTruth {
    /// Parses a ground-truth string; a `random_psd` without its own seed
    /// uses `default_seed`.
    pub fn parse(text: &str, default_seed: u64) -> Result<Self> {
        let (tag, body) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("ground truth `{text}` has no `tag:` prefix")))?;
        let bad = |e: serde_json::Error| Error::InvalidArgument(format!("ground truth `{tag}`: {e}"));
        match tag.trim() {
            "diag" => {
                let d: Vec<f64> = serde_json::from_str(body).map_err(bad)?;
                nonempty(d.len())?;
                Ok(Self::Matrix(SymMatrix::from_diagonal(&d)))
            }
            "matrix" => {
                let rows: Vec<Vec<f64>> = serde_json::from_str(body).map_err(bad)?;
                let m = rows_to_matrix(&rows)?;
                Ok(Self::Matrix(SymMatrix::new(m)?))
            }
            "factor" => {
                let rows: Vec<Vec<f64>> = serde_json::from_str(body).map_err(bad)?;
                Ok(Self::Factor(rows_to_matrix(&rows)?))
            }
            "vector" => {
                let v: Vec<f64> = serde_json::from_str(body).map_err(bad)?;
                nonempty(v.len())?;
                Ok(Self::Factor(DMatrix::from_column_slice(v.len(), 1, &v)))
            }
            "random_psd" => {
                let mut spec: RandomPsdSpec = serde_json::from_str(body).map_err(bad)?;
                spec.seed.get_or_insert(default_seed);
                Ok(Self::Factor(random_factor(&spec)?))
            }
            other => Err(Error::InvalidArgument(format!("unknown ground truth kind `{other}`"))),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Matrix(m) => m.n(),
            Self::Factor(f) => f.nrows(),
        }
    }

    pub fn matrix(&self) -> SymMatrix {
        match self {
            Self::Matrix(m) => m.clone(),
            Self::Factor(f) => SymMatrix::symmetrize(f * f.transpose()),
        }
    }
}

fn nonempty(len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::InvalidArgument("ground truth is empty".into()));
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    nonempty(rows.len())?;
    let cols = rows[0].len();
    nonempty(cols)?;
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Stream label reserved for random ground truths, so they never share
/// draws with the measurements of the same seed.
pub const GROUND_TRUTH_STREAM: u64 = 0x6774;

/// Gaussian `n × r` factor with unit-norm columns, optionally orthogonalized.
pub fn random_factor(spec: &RandomPsdSpec) -> Result<DMatrix<f64>> {
    if spec.r == 0 || spec.r > spec.n {
        return Err(Error::InvalidArgument(format!(
            "random_psd needs 1 ≤ r ≤ n, got n = {}, r = {}",
            spec.n, spec.r
        )));
    }
    let mut rng = Rng::from_seed(spec.seed.unwrap_or(0)).derive(GROUND_TRUTH_STREAM);
    let mut u = gaussian_matrix(&mut rng, spec.n, spec.r, 1.0);
    if spec.orthogonalize {
        u = thin_q(&u)?;
    } else {
        for mut col in u.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
    }
    Ok(u)
}

/// A validated model: ground truth plus sampling parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    truth: SymMatrix,
    factor: Option<DMatrix<f64>>,
}

impl ModelConfig {
    pub fn model(&self) -> Result<Model> {
        Model::new(self.clone())
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let gt = GroundTruth::parse(&config.ground_truth, config.seed)?;
        if gt.n() != config.n {
            return Err(Error::InvalidArgument(format!(
                "ground truth is {}-dimensional but n = {}",
                gt.n(),
                config.n
            )));
        }
        if config.r == 0 || config.r > config.n {
            return Err(Error::InvalidArgument(format!("rank r = {} outside 1..={}", config.r, config.n)));
        }
        let truth = gt.matrix();
        let factor = match gt {
            GroundTruth::Factor(f) => Some(f),
            GroundTruth::Matrix(_) => None,
        };
        match config.kind {
            ModelKind::MatrixCompletion => {
                match config.p {
                    Some(p) if p > 0.0 && p <= 1.0 => {}
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "completion needs 0 < p ≤ 1, got {other:?}"
                        )))
                    }
                }
                let spec = sym_eig(&truth)?;
                let floor = -1e-10 * truth.frobenius_norm().max(1.0);
                if spec.lambda(truth.n()) < floor {
                    return Err(Error::InvalidArgument(
                        "completion ground truth must be positive semidefinite".into(),
                    ));
                }
            }
            kind => {
                if config.m.unwrap_or(0) == 0 {
                    return Err(Error::InvalidArgument(format!("{} needs m ≥ 1", kind.name())));
                }
                if kind != ModelKind::MatrixSensing {
                    let f = factor.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(format!("{} needs a vector or factor ground truth", kind.name()))
                    })?;
                    if kind == ModelKind::PhaseRetrieval && f.ncols() != 1 {
                        return Err(Error::InvalidArgument("phase retrieval needs a vector ground truth".into()));
                    }
                    if f.norm() == 0.0 {
                        return Err(Error::InvalidArgument(format!("{} ground truth is zero", kind.name())));
                    }
                }
            }
        }
        Ok(Self { config, truth, factor })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// The matrix `M`.
    pub fn truth(&self) -> &SymMatrix {
        &self.truth
    }

    /// `c` in `E[Y] = M + cI`.
    pub fn shift(&self) -> f64 {
        match (self.config.kind, &self.factor) {
            (ModelKind::PhaseRetrieval | ModelKind::QuadraticSensing, Some(f)) => 0.5 * f.norm_squared(),
            _ => 0.0,
        }
    }

    pub fn expected_y(&self) -> SymMatrix {
        let c = self.shift();
        if c == 0.0 {
            self.truth.clone()
        } else {
            self.truth.shifted(c)
        }
    }

    /// One surrogate drawn from `rng`.
    pub fn sample(&self, rng: &mut Rng) -> Result<Surrogate> {
        let (y, raw) = match self.config.kind {
            ModelKind::MatrixSensing => sensing(&self.truth, self.config.m.unwrap_or(0), rng),
            ModelKind::MatrixCompletion => {
                completion(&self.truth, self.config.p.unwrap_or(1.0), self.config.mirror_upper, rng)
            }
            ModelKind::PhaseRetrieval | ModelKind::QuadraticSensing => {
                let f = self.factor.as_ref().expect("validated factor");
                quadratic(f, self.config.m.unwrap_or(0), rng)
            }
        };
        Ok(Surrogate {
            y: SymMatrix::symmetrize(y),
            expected_y: self.expected_y(),
            truth: self.truth.clone(),
            raw_samples: if self.config.keep_raw { Some(raw) } else { None },
            config: self.config.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    pub y: SymMatrix,
    pub expected_y: SymMatrix,
    /// The matrix `M`.
    pub truth: SymMatrix,
    pub raw_samples: Option<Vec<f64>>,
    pub config: ModelConfig,
}

/// Surrogate drawn from stream 0 of `cfg.seed`.
pub fn generate(cfg: &ModelConfig) -> Result<Surrogate> {
    cfg.model()?.sample(&mut Rng::from_seed(cfg.seed))
}

fn generate_kind(cfg: &ModelConfig, kind: ModelKind) -> Result<Surrogate> {
    if cfg.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {} config, got {}",
            kind.name(),
            cfg.kind.name()
        )));
    }
    generate(cfg)
}

pub fn generate_matrix_sensing(cfg: &ModelConfig) -> Result<Surrogate> {
    generate_kind(cfg, ModelKind::MatrixSensing)
}

pub fn generate_matrix_completion(cfg: &ModelConfig) -> Result<Surrogate> {
    generate_kind(cfg, ModelKind::MatrixCompletion)
}

pub fn generate_phase_retrieval(cfg: &ModelConfig) -> Result<Surrogate> {
    generate_kind(cfg, ModelKind::PhaseRetrieval)
}

pub fn generate_quadratic_sensing(cfg: &ModelConfig) -> Result<Surrogate> {
    generate_kind(cfg, ModelKind::QuadraticSensing)
}

fn sensing(m_true: &SymMatrix, m: usize, rng: &mut Rng) -> (DMatrix<f64>, Vec<f64>) {
    let n = m_true.n();
    let mut y = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    let mut raw = Vec::with_capacity(if m <= 1 << 20 { m } else { 0 });
    for _ in 0..m {
        for v in a.iter_mut() {
            *v = rng.normal();
        }
        let yi = a.dot(m_true.matrix());
        for (acc, v) in y.iter_mut().zip(a.iter()) {
            *acc += yi * v;
        }
        raw.push(yi);
    }
    (y / m as f64, raw)
}

fn completion(m_true: &SymMatrix, p: f64, mirror_upper: bool, rng: &mut Rng) -> (DMatrix<f64>, Vec<f64>) {
    let n = m_true.n();
    let mut y = DMatrix::zeros(n, n);
    let mut raw = Vec::new();
    for i in 0..n {
        let start = if mirror_upper { i } else { 0 };
        for j in start..n {
            if rng.uniform() < p {
                let v = m_true.matrix()[(i, j)];
                raw.push(v);
                y[(i, j)] = v / p;
                if mirror_upper {
                    y[(j, i)] = v / p;
                }
            }
        }
    }
    (y, raw)
}

// Rows of `a` are the sample vectors; Y = (1/m) Aᵀ diag(y) A.
fn quadratic(factor: &DMatrix<f64>, m: usize, rng: &mut Rng) -> (DMatrix<f64>, Vec<f64>) {
    let (n, k) = factor.shape();
    let mut a = DMatrix::zeros(m, n);
    let mut raw = Vec::with_capacity(m);
    let mut row = vec![0.0; n];
    for i in 0..m {
        for v in row.iter_mut() {
            *v = QUADRATIC_STD * rng.normal();
        }
        let mut yi = 0.0;
        for c in 0..k {
            let mut s = 0.0;
            for (j, v) in row.iter().enumerate() {
                s += v * factor[(j, c)];
            }
            yi += s * s;
        }
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
        raw.push(yi);
    }
    let mut weighted = a.clone();
    for (i, yi) in raw.iter().enumerate() {
        weighted.row_mut(i).scale_mut(*yi);
    }
    (a.transpose() * weighted / m as f64, raw)
}

/// Entrywise Monte Carlo check of `E[Y]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub schema: u32,
    pub kind: ModelKind,
    pub trials: usize,
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub expected: Vec<Vec<f64>>,
    /// Largest `|mean − expected| / std_error` over entries with positive spread.
    pub max_z: f64,
    pub pass: bool,
}

pub const MIN_EXPECTATION_TRIALS: usize = 1000;
const CHUNK: usize = 1000;

/// Draws `trials` independent surrogates (trial `t` on stream `derive(t)` of
/// the config seed) and checks every entry of the mean against `E[Y]` at
/// four standard errors.
pub fn verify_expectation(cfg: &ModelConfig, trials: usize) -> Result<ExpectationReport> {
    if trials < MIN_EXPECTATION_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_EXPECTATION_TRIALS} trials, got {trials}"
        )));
    }
    let mut model_cfg = cfg.clone();
    model_cfg.keep_raw = false;
    let model = model_cfg.model()?;
    let n = model.truth().n();
    let base = Rng::from_seed(cfg.seed);
    let chunks: Vec<(usize, usize)> = (0..trials)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(trials)))
        .collect();
    // pairs of (Σ Y, Σ Y²) in a fixed chunk order, independent of thread count
    let partial = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut s = DMatrix::zeros(n, n);
            let mut s2 = DMatrix::zeros(n, n);
            for t in lo..hi {
                let y = model.sample(&mut base.derive(t as u64))?.y.into_matrix();
                s2 += y.component_mul(&y);
                s += y;
            }
            Ok((s, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum = DMatrix::zeros(n, n);
    let mut sum2 = DMatrix::zeros(n, n);
    for (s, s2) in partial {
        sum += s;
        sum2 += s2;
    }
    let t = trials as f64;
    let mean = &sum / t;
    let expected = model.expected_y().into_matrix();
    let mut se = DMatrix::zeros(n, n);
    let mut max_z = 0.0_f64;
    let mut pass = true;
    for i in 0..n {
        for j in 0..n {
            let var = ((sum2[(i, j)] - t * mean[(i, j)] * mean[(i, j)]) / (t - 1.0)).max(0.0);
            let e = (var / t).sqrt();
            se[(i, j)] = e;
            let dev = (mean[(i, j)] - expected[(i, j)]).abs();
            // zero-spread entries must be exact up to rounding
            let slack = 1e-12 * (1.0 + expected[(i, j)].abs());
            if dev > 4.0 * e + slack {
                pass = false;
            }
            if e > 0.0 {
                max_z = max_z.max(dev / e);
            }
        }
    }
    let rows = |m: &DMatrix<f64>| (0..n).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(ExpectationReport {
        schema: 1,
        kind: cfg.kind,
        trials,
        mean: rows(&mean),
        std_error: rows(&se),
        expected: rows(&expected),
        max_z,
        pass,
    })
}
