//! Losses, PRIAL/EPR metrics and the seeded Monte Carlo engine.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{oracle_coefficients, EstimatorInput, GroundTruth, Registry};
use crate::io::{split_train_test, standardize_arrays, Dataset};
use crate::model::{build_mean, generate_sample, stream_rng, Covariance, CovarianceSpec, ErrorDist, MeanSpec, ProblemInstance};
use crate::quadform::QuadraticForm;
use crate::ustats::CoefficientPolicy;

/// `n(δ−μ)'Q(δ−μ)/tr(QΣ)`.
pub fn loss_general(delta: &[f64], inst: &ProblemInstance, q: &QuadraticForm) -> Result<f64> {
    let trace = q.trace_product(inst.sigma())?;
    if !(trace > 0.0) {
        return Err(Error::invalid("tr(QΣ) must be positive"));
    }
    let diff = difference(delta, inst.mu.as_slice())?;
    Ok(inst.n as f64 * q.quad_form(&diff, &diff)? / trace)
}

/// `(n/p)(δ−μ)'[diag(Σ)]⁻¹(δ−μ)`.
pub fn loss_diag(delta: &[f64], inst: &ProblemInstance) -> Result<f64> {
    let diag = inst.covariance.diagonal();
    if let Some(j) = diag.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroVariance(j));
    }
    let diff = difference(delta, inst.mu.as_slice())?;
    let weighted: f64 = diff.iter().zip(&diag).map(|(d, s)| d * d / s).sum();
    Ok(inst.n as f64 / inst.p() as f64 * weighted)
}

fn difference(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Relative improvement of `candidate` over `baseline` average loss.
pub fn prial(baseline: f64, candidate: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::invalid(format!("PRIAL baseline must be positive, got {baseline}")));
    }
    Ok((baseline - candidate) / baseline)
}

/// `1 − ‖test − δ‖² / ‖test − train‖²`.
pub fn epr(train_mean: &[f64], test_mean: &[f64], delta: &[f64]) -> Result<f64> {
    let denom: f64 = difference(test_mean, train_mean)?.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::invalid("train and test means coincide"));
    }
    let num: f64 = difference(test_mean, delta)?.iter().map(|v| v * v).sum();
    Ok(1.0 - num / denom)
}

/// Weighting matrix the loss is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossQ {
    Identity,
    /// `[diag(Σ)]⁻¹`, giving the diagonal loss.
    #[default]
    InverseDiagSigma,
}

/// Weighting matrix handed to the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorQ {
    /// The loss matrix itself.
    True,
    /// `[diag(Sₙ)]⁻¹` from each replication's sample.
    #[default]
    EstimatedDiag,
    Identity,
}

fn default_true() -> bool {
    true
}

/// A simulation design: ground-truth recipe plus the `Q` rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub p: usize,
    pub n: usize,
    pub sigma: CovarianceSpec,
    pub mean: MeanSpec,
    #[serde(default = "normal")]
    pub errors: ErrorDist,
    #[serde(default)]
    pub loss_q: LossQ,
    #[serde(default)]
    pub estimator_q: EstimatorQ,
    /// Redraw a random mean on every replication instead of fixing one draw.
    #[serde(default = "default_true")]
    pub redraw_mean: bool,
    /// Seed for permuting the positions of the `Σ₁` eigenvalue blocks.
    #[serde(default)]
    pub shuffle_sigma: Option<u64>,
}

fn normal() -> ErrorDist {
    ErrorDist::Normal
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

impl Design {
    pub fn sigma_label(&self) -> String {
        match &self.sigma {
            CovarianceSpec::Identity => "identity".into(),
            CovarianceSpec::Sigma1 => "sigma1".into(),
            CovarianceSpec::Sigma2 { rho } => format!("sigma2({})", fmt_num(*rho)),
            CovarianceSpec::Sigma3 { rho } => format!("sigma3({})", fmt_num(*rho)),
            CovarianceSpec::Custom { .. } => "custom".into(),
        }
    }

    pub fn mean_label(&self) -> String {
        match &self.mean {
            MeanSpec::Mu1 { tau } => format!("mu1({})", fmt_num(*tau)),
            MeanSpec::Mu2 { tau } => format!("mu2({})", fmt_num(*tau)),
            MeanSpec::Constant { c } => format!("constant({})", fmt_num(*c)),
            MeanSpec::Custom { .. } => "custom".into(),
        }
    }

    pub fn errors_label(&self) -> String {
        match self.errors {
            ErrorDist::Normal => "normal".into(),
            ErrorDist::ScaledT { v } => format!("t({})", fmt_num(v)),
        }
    }

    pub fn loss_q_label(&self) -> &'static str {
        match self.loss_q {
            LossQ::Identity => "identity",
            LossQ::InverseDiagSigma => "inverse_diag_sigma",
        }
    }

    pub fn estimator_q_label(&self) -> &'static str {
        match self.estimator_q {
            EstimatorQ::True => "true",
            EstimatorQ::EstimatedDiag => "estimated_diag",
            EstimatorQ::Identity => "identity",
        }
    }

    pub fn validate(&self) -> Result<()> {
        PreparedDesign::new(self, 0).map(|_| ())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={} n={} sigma={} mean={} errors={} loss_q={} estimator_q={} redraw_mean={}",
            self.p,
            self.n,
            self.sigma_label(),
            self.mean_label(),
            self.errors_label(),
            self.loss_q_label(),
            self.estimator_q_label(),
            self.redraw_mean
        )
    }
}

/// Stream index reserved for a mean drawn once per run.
const FIXED_MEAN_STREAM: u64 = u64::MAX;

/// Design resolved into matrices once per run.
struct PreparedDesign {
    instance: ProblemInstance,
    loss_q: QuadraticForm,
    loss_trace: f64,
    redraw: bool,
}

impl PreparedDesign {
    fn new(design: &Design, seed: u64) -> Result<Self> {
        if design.n < 1 {
            return Err(Error::config("n", "sample size must be at least 1"));
        }
        if design.p < 1 {
            return Err(Error::config("p", "dimension must be at least 1"));
        }
        let covariance = Arc::new(
            Covariance::from_spec(&design.sigma, design.p, design.shuffle_sigma)
                .map_err(|e| Error::config("sigma", e.to_string()))?,
        );
        design.errors.validate().map_err(|e| Error::config("errors", e.to_string()))?;
        let mu = build_mean(&design.mean, design.p, &mut stream_rng(seed, FIXED_MEAN_STREAM))
            .map_err(|e| Error::config("mean", e.to_string()))?;
        let instance = ProblemInstance::new(mu, covariance, design.n, design.errors)?;
        let loss_q = match design.loss_q {
            LossQ::Identity => QuadraticForm::identity(design.p)?,
            LossQ::InverseDiagSigma => {
                QuadraticForm::diagonal(instance.covariance.diagonal().iter().map(|v| 1.0 / v).collect())?
            }
        };
        let loss_trace = loss_q.trace_product(instance.sigma())?;
        Ok(Self {
            instance,
            loss_q,
            loss_trace,
            redraw: design.redraw_mean && design.mean.is_random(),
        })
    }
}

/// Monte Carlo run settings shared by simulate, sweep and epr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub policy: CoefficientPolicy,
    pub keep_losses: bool,
}

impl McOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            workers: 1,
            policy: CoefficientPolicy::Raw,
            keep_losses: false,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn policy(mut self, policy: CoefficientPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn keep_losses(mut self, keep: bool) -> Self {
        self.keep_losses = keep;
        self
    }
}

/// Maps `f` over `0..count` in index order, optionally on a worker pool.
/// The output order never depends on `workers`.
pub(crate) fn map_indexed<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| (0..count).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..count).map(f).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRisk {
    pub name: String,
    /// Mean loss over successful replications.
    pub risk: f64,
    /// `sd(losses)/√ok`.
    pub se: f64,
    pub prial: Option<f64>,
    pub ok: usize,
    pub failed: usize,
    pub error: Option<String>,
}

/// Per-estimator empirical risks for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub design: Design,
    pub seed: u64,
    pub replications: usize,
    pub policy: CoefficientPolicy,
    pub rows: Vec<EstimatorRisk>,
    /// Per-replication losses by estimator (NaN where the estimator failed).
    #[serde(skip)]
    pub losses: Option<Vec<Vec<f64>>>,
}

impl RiskReport {
    pub fn get(&self, name: &str) -> Option<&EstimatorRisk> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn risk(&self, name: &str) -> Option<f64> {
        self.get(name).map(|r| r.risk)
    }

    pub fn losses_of(&self, name: &str) -> Option<&[f64]> {
        let idx = self.rows.iter().position(|r| r.name == name)?;
        self.losses.as_ref().map(|l| l[idx].as_slice())
    }
}

/// Mean and standard error of finite values; NaNs mark failed replications.
pub fn mean_and_se(values: &[f64]) -> (f64, f64, usize) {
    let ok: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let count = ok.len();
    if count == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = ok.iter().sum::<f64>() / count as f64;
    if count == 1 {
        return (mean, f64::NAN, 1);
    }
    let var = ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64;
    (mean, (var / count as f64).sqrt(), count)
}

/// Runs `replications` independent draws of `design`, evaluating each named
/// estimator with the design's loss.
///
/// Replication `r` uses random stream `r` of `seed`, so the report is a pure
/// function of `(design, estimators, replications, seed)`.
pub fn run_monte_carlo(
    design: &Design,
    estimators: &[String],
    registry: &Registry,
    opts: &McOptions,
) -> Result<RiskReport> {
    if opts.replications == 0 {
        return Err(Error::config("replications", "must be at least 1"));
    }
    let resolved = registry.resolve(estimators)?;
    let prepared = PreparedDesign::new(design, opts.seed)?;
    let n = design.n as f64;

    let per_rep = map_indexed(opts.replications, opts.workers, |r| {
        let mut rng = stream_rng(opts.seed, r as u64);
        let instance = if prepared.redraw {
            let mu = build_mean(&design.mean, design.p, &mut rng).expect("validated mean spec");
            prepared.instance.with_mean(mu).expect("validated instance")
        } else {
            prepared.instance.clone()
        };
        let data = generate_sample(&instance, &mut rng);
        let est_q = match design.estimator_q {
            EstimatorQ::True => Ok(prepared.loss_q.clone()),
            EstimatorQ::Identity => QuadraticForm::identity(design.p),
            EstimatorQ::EstimatedDiag => QuadraticForm::estimate_from_sample(&data),
        };
        let truth = GroundTruth {
            instance: &instance,
            loss_q: &prepared.loss_q,
        };
        resolved
            .iter()
            .map(|est| -> std::result::Result<f64, String> {
                let q = est_q.as_ref().map_err(|e| e.to_string())?;
                let input = EstimatorInput {
                    data: &data,
                    q,
                    policy: opts.policy,
                    truth: Some(truth),
                };
                let out = est.estimate(&input).map_err(|e| e.to_string())?;
                let diff: Vec<f64> = out
                    .estimate
                    .iter()
                    .zip(instance.mu.iter())
                    .map(|(a, b)| a - b)
                    .collect();
                let loss = n * prepared.loss_q.quad_form_unchecked(&diff, &diff) / prepared.loss_trace;
                if loss.is_finite() {
                    Ok(loss)
                } else {
                    Err("non-finite loss".into())
                }
            })
            .collect::<Vec<_>>()
    });

    let mut rows = Vec::with_capacity(resolved.len());
    let mut all_losses = Vec::with_capacity(resolved.len());
    for (idx, est) in resolved.iter().enumerate() {
        let mut failed = 0;
        let mut error = None;
        let losses: Vec<f64> = per_rep
            .iter()
            .map(|rep| match &rep[idx] {
                Ok(v) => *v,
                Err(e) => {
                    failed += 1;
                    error.get_or_insert_with(|| e.clone());
                    f64::NAN
                }
            })
            .collect();
        let (risk, se, ok) = mean_and_se(&losses);
        rows.push(EstimatorRisk {
            name: est.name().to_owned(),
            risk,
            se,
            prial: None,
            ok,
            failed,
            error,
        });
        all_losses.push(losses);
    }
    // E L(X̄) = 1 exactly, used when the sample mean was not simulated.
    let baseline = rows
        .iter()
        .find(|r| r.name == "mean" && r.risk.is_finite())
        .map_or(1.0, |r| r.risk);
    for row in &mut rows {
        row.prial = prial(baseline, row.risk).ok().filter(|v| v.is_finite());
    }

    Ok(RiskReport {
        design: design.clone(),
        seed: opts.seed,
        replications: opts.replications,
        policy: opts.policy,
        rows,
        losses: opts.keep_losses.then_some(all_losses),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    Sigma2,
    Sigma3,
}

impl SweepFamily {
    pub fn spec(&self, rho: f64) -> CovarianceSpec {
        match self {
            SweepFamily::Sigma2 => CovarianceSpec::Sigma2 { rho },
            SweepFamily::Sigma3 => CovarianceSpec::Sigma3 { rho },
        }
    }

    /// Grid range accepted for each correlation family.
    pub fn documented_range(&self) -> (f64, f64) {
        match self {
            SweepFamily::Sigma2 => (0.1, 0.9),
            SweepFamily::Sigma3 => (0.1, 0.5),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepFamily::Sigma2 => "sigma2",
            SweepFamily::Sigma3 => "sigma3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub family: SweepFamily,
    pub base: Design,
    pub seed: u64,
    pub replications: usize,
    pub points: Vec<(f64, RiskReport)>,
}

/// One Monte Carlo run per `ρ`, all sharing the base design and seed.
pub fn rho_sweep(
    base: &Design,
    family: SweepFamily,
    grid: &[f64],
    estimators: &[String],
    registry: &Registry,
    opts: &McOptions,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::config("sweep.grid", "grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("sweep.grid", "grid must be strictly increasing"));
    }
    if let Some(bad) = grid.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::config("sweep.grid", format!("rho {bad} outside [0, 1)")));
    }
    let points = grid
        .iter()
        .map(|&rho| {
            let design = Design {
                sigma: family.spec(rho),
                ..base.clone()
            };
            run_monte_carlo(&design, estimators, registry, opts).map(|r| (rho, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        family,
        base: base.clone(),
        seed: opts.seed,
        replications: opts.replications,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `s_n → 0`: PRIAL tends to one.
    I,
    /// `s_n` bounded away from 0 and ∞.
    II,
    /// `s_n → ∞`: PRIAL tends to zero.
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub pi1: f64,
    pub pi2: f64,
    /// `(n/p)·π₂`
    pub s_n: f64,
    pub regime: Regime,
}

/// Thresholds are a reporting convention: below 0.1 reads as regime I,
/// above 10 as regime III.
pub fn classify_regime(inst: &ProblemInstance, q: &QuadraticForm) -> Result<RiskSummary> {
    let c = oracle_coefficients(inst, q)?;
    let s_n = inst.n as f64 / inst.p() as f64 * c.pi2;
    let regime = if s_n < 0.1 {
        Regime::I
    } else if s_n > 10.0 {
        Regime::III
    } else {
        Regime::II
    };
    Ok(RiskSummary {
        pi1: c.pi1,
        pi2: c.pi2,
        s_n,
        regime,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprRow {
    pub n_train: usize,
    pub estimator: String,
    pub epr: f64,
    pub se: f64,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EprReport {
    pub source: String,
    pub genes: usize,
    pub seed: u64,
    pub replications: usize,
    pub rows: Vec<EprRow>,
}

impl EprReport {
    pub fn get(&self, n_train: usize, estimator: &str) -> Option<&EprRow> {
        self.rows
            .iter()
            .find(|r| r.n_train == n_train && r.estimator == estimator)
    }
}

/// Repeated random train/test splits of one dataset, scoring each estimator
/// fitted on the training rows by EPR against the test-row mean.
///
/// The first `genes` columns are kept and every row is scaled to unit
/// variance across them before splitting. Estimators see `Q = I`.
pub fn run_epr(
    dataset: &Dataset,
    train_sizes: &[usize],
    genes: usize,
    estimators: &[String],
    registry: &Registry,
    opts: &McOptions,
) -> Result<EprReport> {
    if opts.replications == 0 {
        return Err(Error::config("reps", "must be at least 1"));
    }
    if train_sizes.is_empty() {
        return Err(Error::config("train-sizes", "no training sizes given"));
    }
    let n = dataset.matrix.n();
    if let Some(bad) = train_sizes.iter().find(|&&s| s < 1 || s >= n) {
        return Err(Error::config(
            "train-sizes",
            format!("training size {bad} must lie in 1..{n}"),
        ));
    }
    if genes == 0 || genes > dataset.matrix.p() {
        return Err(Error::config(
            "genes",
            format!("gene count {genes} must lie in 1..={}", dataset.matrix.p()),
        ));
    }
    let resolved = registry.resolve(estimators)?;
    let subset = standardize_arrays(&dataset.leading_columns(genes)?)?;
    let q = QuadraticForm::identity(genes)?;
    let reps = opts.replications;

    let mut rows = Vec::new();
    for (gi, &n_train) in train_sizes.iter().enumerate() {
        let per_rep = map_indexed(reps, opts.workers, |r| {
            let stream = ((gi as u64) << 40) | r as u64;
            let mut rng = stream_rng(opts.seed, stream);
            let (train, test) = split_train_test(&subset, n_train, &mut rng).expect("validated sizes");
            let train_mean = train.matrix.column_means();
            let test_mean = test.matrix.column_means();
            resolved
                .iter()
                .map(|est| -> std::result::Result<f64, String> {
                    let input = EstimatorInput {
                        data: &train.matrix,
                        q: &q,
                        policy: opts.policy,
                        truth: None,
                    };
                    let out = est.estimate(&input).map_err(|e| e.to_string())?;
                    epr(train_mean.as_slice(), test_mean.as_slice(), out.estimate.as_slice())
                        .map_err(|e| e.to_string())
                })
                .collect::<Vec<_>>()
        });
        for (idx, est) in resolved.iter().enumerate() {
            let values: Vec<f64> = per_rep
                .iter()
                .map(|rep| rep[idx].as_ref().map_or(f64::NAN, |v| *v))
                .collect();
            let (mean, se, ok) = mean_and_se(&values);
            rows.push(EprRow {
                n_train,
                estimator: est.name().to_owned(),
                epr: mean,
                se,
                ok,
                failed: reps - ok,
            });
        }
    }
    Ok(EprReport {
        source: dataset.provenance.source.clone(),
        genes,
        seed: opts.seed,
        replications: reps,
        rows,
    })
}

/// Convenience for building an instance straight from a design and a mean.
pub fn instance_for(design: &Design, mu: DVector<f64>) -> Result<ProblemInstance> {
    let covariance = Arc::new(Covariance::from_spec(&design.sigma, design.p, design.shuffle_sigma)?);
    ProblemInstance::new(mu, covariance, design.n, design.errors)
}
