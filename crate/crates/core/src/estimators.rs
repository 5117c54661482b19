//! Mean estimators: the sample mean, the U-statistic plug-in shrinkage
//! estimator, its oracle counterpart, and the shrink-to-zero competitors.
//!
//! # Competitor forms
//!
//! * `js`: unknown-variance James–Stein,
//!   `(1 − (p−2)σ̂²/(n X̄'X̄)) X̄` with pooled
//!   `σ̂² = Σₖ‖Xₖ − X̄‖² / (p(n−1) + 2)`.
//! * `tong`: `(1 − (p−2)(n−1)/(n(n−3) X̄'Dₙ⁻¹X̄)) X̄`, `Dₙ = diag(Sₙ)`.
//! * `bb`: Berger–Bock combination of independent problems with unknown
//!   variances. Coordinate `i` has `X̄ᵢ ~ N(μᵢ, σᵢ²/n)` with
//!   `SSᵢ = Σₖ(Xₖᵢ − X̄ᵢ)² ~ σᵢ²χ²ₘ`, `m = n−1`. Estimating `Var(X̄ᵢ)` by
//!   `SSᵢ/(n(m+2))` and using the normalized loss gives the common factor
//!   `1 − (p−2)(n−1)/(n(n+1) X̄'Dₙ⁻¹X̄)`. With equal `SSᵢ = SS` this reduces
//!   to `1 − (p−2)·SS/(n(n+1) X̄'X̄)`.
//!
//! Every estimator degrades to a documented finite fallback instead of
//! dividing by a vanishing quantity.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataMatrix, ProblemInstance};
use crate::quadform::QuadraticForm;
use crate::ustats::{compute_y, shrinkage_coefficients, CoefficientPolicy, ShrinkageCoefficients, YStats};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub estimate: DVector<f64>,
    pub coefficients: Option<ShrinkageCoefficients>,
    pub y: Option<YStats>,
    pub diagnostics: Vec<(String, f64)>,
}

impl EstimatorOutput {
    fn plain(estimate: DVector<f64>) -> Self {
        Self {
            estimate,
            coefficients: None,
            y: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Theorem-level optimum over `δ = αX̄ + βe` given the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCoefficients {
    pub alpha_star: f64,
    pub beta_star: f64,
    /// Normalized risk `π₂/(π₁ + π₂)` of the oracle estimator.
    pub risk_star: f64,
    /// `tr(QΣ)/n`
    pub pi1: f64,
    /// `Q`-weighted squared deviation of `μ` from its `Q`-weighted grand mean.
    pub pi2: f64,
}

pub fn oracle_coefficients(inst: &ProblemInstance, q: &QuadraticForm) -> Result<OracleCoefficients> {
    let p = inst.p();
    if q.p() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: q.p(),
        });
    }
    let mu = inst.mu.as_slice();
    let grand = q.e_q_unchecked(mu) / q.e_q_e();
    let centered: Vec<f64> = mu.iter().map(|v| v - grand).collect();
    let pi2 = q.quad_form_unchecked(&centered, &centered).max(0.0);
    let pi1 = q.trace_product(inst.sigma())? / inst.n as f64;
    let alpha_star = pi2 / (pi1 + pi2);
    Ok(OracleCoefficients {
        alpha_star,
        beta_star: (1.0 - alpha_star) * grand,
        risk_star: alpha_star,
        pi1,
        pi2,
    })
}

fn require_rows(data: &DataMatrix, needed: usize) -> Result<()> {
    if data.n() < needed {
        return Err(Error::TooFewObservations {
            needed,
            got: data.n(),
        });
    }
    Ok(())
}

fn require_dim(data: &DataMatrix, needed: usize) -> Result<()> {
    if data.p() < needed {
        return Err(Error::DimensionTooSmall {
            needed,
            got: data.p(),
        });
    }
    Ok(())
}

/// Threshold below which a squared norm is treated as zero, relative to the
/// average squared entry of the data.
fn vanishing(value: f64, data: &DataMatrix) -> bool {
    let energy = data.values().norm_squared() / (data.n() * data.p()) as f64;
    value <= 1e-24 * energy || value == 0.0
}

fn scaled(xbar: DVector<f64>, factor: f64, degenerate: bool) -> EstimatorOutput {
    let mut out = EstimatorOutput::plain(if degenerate {
        DVector::zeros(xbar.len())
    } else {
        xbar * factor
    });
    out.diagnostics.push(("shrinkage_factor".into(), if degenerate { 0.0 } else { factor }));
    out.diagnostics.push(("degenerate".into(), if degenerate { 1.0 } else { 0.0 }));
    out
}

pub fn sample_mean(data: &DataMatrix) -> Result<EstimatorOutput> {
    require_rows(data, 1)?;
    Ok(EstimatorOutput::plain(data.column_means()))
}

/// `αX̄ + βe`.
pub fn apply_coefficients(xbar: &DVector<f64>, alpha: f64, beta: f64) -> DVector<f64> {
    xbar.map(|v| alpha * v + beta)
}

/// The plug-in estimator `α̂X̄ + β̂e`.
pub fn proposed(
    data: &DataMatrix,
    q: &QuadraticForm,
    policy: CoefficientPolicy,
) -> Result<EstimatorOutput> {
    let y = compute_y(data, q)?;
    let coefficients = shrinkage_coefficients(&y, policy, None)?;
    let estimate = apply_coefficients(&data.column_means(), coefficients.alpha, coefficients.beta);
    Ok(EstimatorOutput {
        estimate,
        coefficients: Some(coefficients),
        y: Some(y),
        diagnostics: vec![
            ("alpha".into(), coefficients.alpha),
            ("beta".into(), coefficients.beta),
        ],
    })
}

/// `α*X̄ + β*e` with coefficients computed from the truth.
pub fn oracle(data: &DataMatrix, inst: &ProblemInstance, q: &QuadraticForm) -> Result<EstimatorOutput> {
    require_rows(data, 1)?;
    let c = oracle_coefficients(inst, q)?;
    let mut out = EstimatorOutput::plain(apply_coefficients(&data.column_means(), c.alpha_star, c.beta_star));
    out.diagnostics = vec![
        ("alpha".into(), c.alpha_star),
        ("beta".into(), c.beta_star),
        ("risk_star".into(), c.risk_star),
    ];
    Ok(out)
}

pub fn james_stein(data: &DataMatrix) -> Result<EstimatorOutput> {
    james_stein_with_variance(data, None)
}

/// James–Stein with an optional fixed variance in place of the pooled
/// estimate; `Some(0.0)` disables shrinkage entirely.
pub fn james_stein_with_variance(data: &DataMatrix, sigma2: Option<f64>) -> Result<EstimatorOutput> {
    require_dim(data, 3)?;
    let (n, p) = (data.n(), data.p());
    let xbar = data.column_means();
    let sigma2 = match sigma2 {
        Some(v) => v,
        None => {
            require_rows(data, 2)?;
            let x = data.values();
            let ss: f64 = x
                .column_iter()
                .zip(xbar.iter())
                .map(|(col, m)| col.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
                .sum();
            ss / ((p * (n - 1)) as f64 + 2.0)
        }
    };
    let norm2 = xbar.norm_squared();
    if vanishing(norm2, data) {
        return Ok(scaled(xbar, 0.0, true));
    }
    let factor = 1.0 - (p as f64 - 2.0) * sigma2 / (n as f64 * norm2);
    Ok(scaled(xbar, factor, false))
}

/// `X̄'Dₙ⁻¹X̄` with `Dₙ = diag(Sₙ)`.
fn standardized_norm(data: &DataMatrix, xbar: &DVector<f64>) -> Result<f64> {
    let variances = data.column_variances()?;
    if let Some(j) = variances.iter().position(|v| *v <= 0.0) {
        return Err(Error::ZeroVariance(j));
    }
    Ok(xbar.iter().zip(&variances).map(|(m, v)| m * m / v).sum())
}

pub fn tong(data: &DataMatrix) -> Result<EstimatorOutput> {
    require_rows(data, 4)?;
    require_dim(data, 3)?;
    let (n, p) = (data.n() as f64, data.p() as f64);
    let xbar = data.column_means();
    let norm = standardized_norm(data, &xbar)?;
    if vanishing(xbar.norm_squared(), data) || norm == 0.0 {
        return Ok(scaled(xbar, 0.0, true));
    }
    let factor = 1.0 - (p - 2.0) * (n - 1.0) / (n * (n - 3.0) * norm);
    Ok(scaled(xbar, factor, false))
}

pub fn berger_bock(data: &DataMatrix) -> Result<EstimatorOutput> {
    require_rows(data, 2)?;
    require_dim(data, 3)?;
    let (n, p) = (data.n() as f64, data.p() as f64);
    let xbar = data.column_means();
    let norm = standardized_norm(data, &xbar)?;
    if vanishing(xbar.norm_squared(), data) || norm == 0.0 {
        return Ok(scaled(xbar, 0.0, true));
    }
    let factor = 1.0 - (p - 2.0) * (n - 1.0) / (n * (n + 1.0) * norm);
    Ok(scaled(xbar, factor, false))
}

/// Ground truth available to oracle-type estimators.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub instance: &'a ProblemInstance,
    /// The weighting matrix the loss is evaluated with.
    pub loss_q: &'a QuadraticForm,
}

/// Everything an estimator may look at.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorInput<'a> {
    pub data: &'a DataMatrix,
    pub q: &'a QuadraticForm,
    pub policy: CoefficientPolicy,
    pub truth: Option<GroundTruth<'a>>,
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, input: &EstimatorInput<'_>) -> Result<EstimatorOutput>;
}

struct FnEstimator {
    name: &'static str,
    run: fn(&EstimatorInput<'_>) -> Result<EstimatorOutput>,
}

impl Estimator for FnEstimator {
    fn name(&self) -> &str {
        self.name
    }

    fn estimate(&self, input: &EstimatorInput<'_>) -> Result<EstimatorOutput> {
        (self.run)(input)
    }
}

type EstimatorFn = fn(&EstimatorInput<'_>) -> Result<EstimatorOutput>;

/// Estimators keyed by name.
pub struct Registry {
    entries: BTreeMap<String, Box<dyn Estimator>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// `mean`, `js`, `bb`, `tong`, `proposed` and `oracle`.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        let builtin: [(&'static str, EstimatorFn); 6] = [
            ("mean", |i| sample_mean(i.data)),
            ("js", |i| james_stein(i.data)),
            ("bb", |i| berger_bock(i.data)),
            ("tong", |i| tong(i.data)),
            ("proposed", |i| proposed(i.data, i.q, i.policy)),
            ("oracle", |i| match i.truth {
                Some(t) => oracle(i.data, t.instance, t.loss_q),
                None => Err(Error::invalid("oracle estimator needs the ground truth")),
            }),
        ];
        for (name, run) in builtin {
            r.register(Box::new(FnEstimator { name, run }));
        }
        r
    }

    pub fn register(&mut self, estimator: Box<dyn Estimator>) {
        self.entries.insert(estimator.name().to_owned(), estimator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownEstimator(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Checks every name, returning the first unknown one as an error.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<&dyn Estimator>> {
        names.iter().map(|n| self.get(n)).collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::standard()
    }
}
