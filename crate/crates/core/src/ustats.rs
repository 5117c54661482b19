//! U-statistics `Y₁…Y₄` and the plug-in shrinkage coefficients built from them.
//!
//! All pairwise sums over `i ≠ j` use the sum-and-subtract identities
//!
//! ```text
//! Σ_{i≠j} Xᵢ'QXⱼ = (ΣXₖ)'Q(ΣXₖ) − Σ Xₖ'QXₖ
//! Σ_{i≠j} aᵢaⱼ   = (Σaₖ)² − Σaₖ²,   aₖ = e'QXₖ
//! ```
//!
//! so one evaluation costs O(np) for identity/diagonal `Q`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::quadform::{QKind, QuadraticForm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YStats {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientPolicy {
    /// Unconstrained plug-in coefficients.
    #[default]
    Raw,
    /// `α̂` projected onto `[0, 1]`, `β̂` recomputed as `(1 − α̂)·Y₄`.
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub policy: CoefficientPolicy,
    /// Set when `Y₁ + Y₂ − Y₃` fell below the tolerance floor.
    pub degenerate: bool,
}

pub fn compute_y(data: &DataMatrix, q: &QuadraticForm) -> Result<YStats> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    if q.p() != p {
        return Err(Error::DimensionMismatch {
            expected: q.p(),
            got: p,
        });
    }
    let x = data.values();
    let sums = data.column_sums();

    // Σₖ Xₖ'QXₖ
    let diag_total: f64 = match q.kind() {
        QKind::Identity => x.iter().map(|v| v * v).sum(),
        QKind::Diagonal(d) => x
            .column_iter()
            .zip(d)
            .map(|(col, w)| w * col.norm_squared())
            .sum(),
        QKind::Dense(m) => (x * m).component_mul(x).sum(),
    };
    let cross = q.quad_form_unchecked(sums.as_slice(), sums.as_slice()) - diag_total;

    let row_sums = DVector::from_column_slice(q.row_sums());
    let a = x * row_sums;
    let a_sum = a.sum();
    let a_cross = a_sum * a_sum - a.norm_squared();

    let (nf, pf) = (n as f64, p as f64);
    let eqe = q.e_q_e();
    Ok(YStats {
        y1: cross / (pf * (nf - 1.0)),
        y2: (diag_total - cross / (nf - 1.0)) / (nf * pf),
        y3: a_cross / (pf * (nf - 1.0) * eqe),
        y4: a_sum / (nf * eqe),
        n,
        p,
    })
}

/// Default denominator floor `1e-12 · max(|Y₁|, |Y₂|, |Y₃|, 1)`.
pub fn default_tolerance(y: &YStats) -> f64 {
    1e-12 * y.y1.abs().max(y.y2.abs()).max(y.y3.abs()).max(1.0)
}

/// `α̂ = (Y₁ − Y₃)/(Y₁ + Y₂ − Y₃)`, `β̂ = Y₂/(Y₁ + Y₂ − Y₃) · Y₄`.
///
/// A denominator within `tol` of zero yields the constant fallback
/// `α̂ = 0, β̂ = Y₄` with the degenerate flag set.
pub fn shrinkage_coefficients(
    y: &YStats,
    policy: CoefficientPolicy,
    tol: Option<f64>,
) -> Result<ShrinkageCoefficients> {
    if ![y.y1, y.y2, y.y3, y.y4].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite U-statistic"));
    }
    let tol = tol.unwrap_or_else(|| default_tolerance(y));
    let denom = y.y1 + y.y2 - y.y3;
    if denom.abs() <= tol {
        return Ok(ShrinkageCoefficients {
            alpha: 0.0,
            beta: y.y4,
            policy,
            degenerate: true,
        });
    }
    let alpha = (y.y1 - y.y3) / denom;
    let (alpha, beta) = match policy {
        CoefficientPolicy::Raw => (alpha, y.y2 / denom * y.y4),
        CoefficientPolicy::Clamped => {
            let a = alpha.clamp(0.0, 1.0);
            (a, (1.0 - a) * y.y4)
        }
    };
    Ok(ShrinkageCoefficients {
        alpha,
        beta,
        policy,
        degenerate: false,
    })
}
