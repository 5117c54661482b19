//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no bundler or generated type definitions.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use shrinkmean::estimators::{oracle_coefficients, proposed};
use shrinkmean::model::{build_mean, generate_sample, stream_rng, Covariance};
use shrinkmean::risk::{classify_regime, run_monte_carlo, Design, EstimatorQ, LossQ, McOptions, Regime};
use shrinkmean::{CoefficientPolicy, CovarianceSpec, ErrorDist, MeanSpec, ProblemInstance, QuadraticForm, Registry};

const ESTIMATORS: [&str; 5] = ["mean", "js", "tong", "proposed", "oracle"];

fn mean_spec(kind: &str, tau: f64) -> Result<MeanSpec, String> {
    match kind {
        "mu1" => Ok(MeanSpec::Mu1 { tau }),
        "mu2" => Ok(MeanSpec::Mu2 { tau }),
        other => Err(format!("unknown mean kind {other:?}")),
    }
}

fn sigma_spec(kind: &str, rho: f64) -> Result<CovarianceSpec, String> {
    match kind {
        "identity" => Ok(CovarianceSpec::Identity),
        "sigma1" => Ok(CovarianceSpec::Sigma1),
        "sigma2" => Ok(CovarianceSpec::Sigma2 { rho }),
        "sigma3" => Ok(CovarianceSpec::Sigma3 { rho }),
        other => Err(format!("unknown covariance kind {other:?}")),
    }
}

fn inverse_diag(cov: &Covariance) -> QuadraticForm {
    QuadraticForm::diagonal(cov.diagonal().iter().map(|v| 1.0 / v).collect()).expect("covariance diagonal is positive")
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub risk: f64,
    pub s_n: f64,
    pub regime: Regime,
}

/// Oracle risk `π₂/(π₁+π₂)` as the mean heterogeneity `τ` grows, with `Σ₁`
/// and the diagonal loss. Random means use one fixed draw scaled by `τ`.
pub fn oracle_curve(p: usize, n: usize, mean_kind: &str, tau_max: f64, steps: usize) -> Result<Vec<CurvePoint>, String> {
    let cov = Arc::new(Covariance::from_spec(&CovarianceSpec::Sigma1, p, None).map_err(|e| e.to_string())?);
    let q = inverse_diag(&cov);
    let unit = build_mean(&mean_spec(mean_kind, 1.0)?, p, &mut stream_rng(0, 0)).map_err(|e| e.to_string())?;
    (0..=steps)
        .map(|i| {
            let tau = tau_max * i as f64 / steps.max(1) as f64;
            let inst = ProblemInstance::new(&unit * tau, cov.clone(), n, ErrorDist::Normal).map_err(|e| e.to_string())?;
            let oracle = oracle_coefficients(&inst, &q).map_err(|e| e.to_string())?;
            let summary = classify_regime(&inst, &q).map_err(|e| e.to_string())?;
            Ok(CurvePoint {
                tau,
                risk: oracle.risk_star,
                s_n: summary.s_n,
                regime: summary.regime,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct RiskRow {
    pub name: String,
    pub risk: f64,
    pub se: f64,
}

/// A small Monte Carlo risk table under the diagonal loss.
#[allow(clippy::too_many_arguments)]
pub fn risk_table(
    p: usize,
    n: usize,
    sigma_kind: &str,
    rho: f64,
    mean_kind: &str,
    tau: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<RiskRow>, String> {
    let design = Design {
        p,
        n,
        sigma: sigma_spec(sigma_kind, rho)?,
        mean: mean_spec(mean_kind, tau)?,
        errors: ErrorDist::Normal,
        loss_q: LossQ::InverseDiagSigma,
        estimator_q: EstimatorQ::EstimatedDiag,
        redraw_mean: true,
        shuffle_sigma: None,
    };
    let names: Vec<String> = ESTIMATORS.iter().map(|s| s.to_string()).collect();
    let report = run_monte_carlo(&design, &names, &Registry::standard(), &McOptions::new(reps, seed)).map_err(|e| e.to_string())?;
    Ok(report
        .rows
        .into_iter()
        .map(|r| RiskRow {
            name: r.name,
            risk: r.risk,
            se: r.se,
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct Snapshot {
    pub mu: Vec<f64>,
    pub xbar: Vec<f64>,
    pub estimate: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_star: f64,
    pub beta_star: f64,
}

/// One sample from `Σ₁` with its mean, sample mean and shrunken estimate.
pub fn snapshot(p: usize, n: usize, mean_kind: &str, tau: f64, seed: u64) -> Result<Snapshot, String> {
    let cov = Arc::new(Covariance::from_spec(&CovarianceSpec::Sigma1, p, None).map_err(|e| e.to_string())?);
    let q = inverse_diag(&cov);
    let mu = build_mean(&mean_spec(mean_kind, tau)?, p, &mut stream_rng(seed, 0)).map_err(|e| e.to_string())?;
    let inst = ProblemInstance::new(mu, cov, n, ErrorDist::Normal).map_err(|e| e.to_string())?;
    let data = generate_sample(&inst, &mut stream_rng(seed, 1));
    let out = proposed(&data, &q, CoefficientPolicy::Raw).map_err(|e| e.to_string())?;
    let coef = out.coefficients.expect("proposed reports coefficients");
    let oracle = oracle_coefficients(&inst, &q).map_err(|e| e.to_string())?;
    Ok(Snapshot {
        mu: inst.mu.iter().copied().collect(),
        xbar: data.column_means().iter().copied().collect(),
        estimate: out.estimate.iter().copied().collect(),
        alpha: coef.alpha,
        beta: coef.beta,
        alpha_star: oracle.alpha_star,
        beta_star: oracle.beta_star,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = oracleCurve)]
pub fn oracle_curve_js(p: usize, n: usize, mean_kind: &str, tau_max: f64, steps: usize) -> Result<String, JsError> {
    to_js(oracle_curve(p, n, mean_kind, tau_max, steps))
}

#[wasm_bindgen(js_name = riskTable)]
#[allow(clippy::too_many_arguments)]
pub fn risk_table_js(
    p: usize,
    n: usize,
    sigma_kind: &str,
    rho: f64,
    mean_kind: &str,
    tau: f64,
    reps: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(risk_table(p, n, sigma_kind, rho, mean_kind, tau, reps, seed as u64))
}

#[wasm_bindgen(js_name = snapshot)]
pub fn snapshot_js(p: usize, n: usize, mean_kind: &str, tau: f64, seed: u32) -> Result<String, JsError> {
    to_js(snapshot(p, n, mean_kind, tau, seed as u64))
}
