//! The weighting matrix `Q` of the quadratic loss and the kernels built on it.
//!
//! Three representations are supported. Identity and diagonal forms get O(p)
//! kernels; dense forms are validated symmetric positive definite once, at
//! construction. The all-ones vector `e` is never materialized: every `e'Q·`
//! quantity goes through the cached row sums of `Q`.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DataMatrix;

/// Relative asymmetry accepted for a dense `Q`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// User-facing description of a weighting matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QSpec {
    Identity,
    Diagonal { d: Vec<f64> },
    Dense { m: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QKind {
    Identity,
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// A validated positive definite weighting matrix with cached `e'Q` row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    kind: QKind,
    p: usize,
    row_sums: Vec<f64>,
    e_q_e: f64,
}

impl QuadraticForm {
    pub fn identity(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("dimension p must be at least 1"));
        }
        Ok(Self {
            kind: QKind::Identity,
            p,
            row_sums: vec![1.0; p],
            e_q_e: p as f64,
        })
    }

    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::invalid("dimension p must be at least 1"));
        }
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!(
                "diagonal entry {i} must be positive and finite, got {v}"
            )));
        }
        let p = d.len();
        let e_q_e = d.iter().sum();
        Ok(Self {
            row_sums: d.clone(),
            kind: QKind::Diagonal(d),
            p,
            e_q_e,
        })
    }

    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if p == 0 {
            return Err(Error::invalid("dimension p must be at least 1"));
        }
        if m.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dense Q has non-finite entries"));
        }
        let asym = relative_asymmetry(&m);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let row_sums: Vec<f64> = m.row_iter().map(|r| r.sum()).collect();
        let e_q_e = row_sums.iter().sum();
        Ok(Self {
            kind: QKind::Dense(m),
            p,
            row_sums,
            e_q_e,
        })
    }

    /// Builds a form from its spec, checking it against dimension `p`.
    pub fn from_spec(spec: &QSpec, p: usize) -> Result<Self> {
        let q = match spec {
            QSpec::Identity => Self::identity(p)?,
            QSpec::Diagonal { d } => Self::diagonal(d.clone())?,
            QSpec::Dense { m } => {
                let rows = m.len();
                if m.iter().any(|r| r.len() != rows) {
                    return Err(Error::invalid("dense Q must be square"));
                }
                Self::dense(DMatrix::from_fn(rows, rows, |i, j| m[i][j]))?
            }
        };
        if q.p != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: q.p,
            });
        }
        Ok(q)
    }

    /// `Q̂ = [diag(Sₙ)]⁻¹`, with `Sₙ` the unbiased sample covariance.
    pub fn estimate_from_sample(data: &DataMatrix) -> Result<Self> {
        let variances = data.column_variances()?;
        if let Some(j) = variances.iter().position(|v| *v <= 0.0) {
            return Err(Error::ZeroVariance(j));
        }
        Self::diagonal(variances.iter().map(|v| 1.0 / v).collect())
    }

    pub fn kind(&self) -> &QKind {
        &self.kind
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `e'Qe`, the sum of all entries of `Q`.
    pub fn e_q_e(&self) -> f64 {
        self.e_q_e
    }

    /// Row sums of `Q`, i.e. the vector `Qe`.
    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: len,
            });
        }
        Ok(())
    }

    /// `x'Qy`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        self.check_len(y.len())?;
        Ok(self.quad_form_unchecked(x, y))
    }

    pub(crate) fn quad_form_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            QKind::Identity => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            QKind::Diagonal(d) => x
                .iter()
                .zip(y)
                .zip(d)
                .map(|((a, b), w)| w * (a * b))
                .sum(),
            QKind::Dense(m) => {
                let qy = m * DVectorView::from_slice(y, self.p);
                x.iter().zip(qy.iter()).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `e'Qx`.
    pub fn e_q(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self.e_q_unchecked(x))
    }

    pub(crate) fn e_q_unchecked(&self, x: &[f64]) -> f64 {
        self.row_sums.iter().zip(x).map(|(r, v)| r * v).sum()
    }

    /// `Qx`.
    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_len(x.len())?;
        Ok(match &self.kind {
            QKind::Identity => DVector::from_column_slice(x),
            QKind::Diagonal(d) => DVector::from_iterator(self.p, x.iter().zip(d).map(|(a, w)| a * w)),
            QKind::Dense(m) => m * DVectorView::from_slice(x, self.p),
        })
    }

    /// `tr(QS)` for a symmetric `S`.
    pub fn trace_product(&self, s: &DMatrix<f64>) -> Result<f64> {
        self.check_len(s.nrows())?;
        self.check_len(s.ncols())?;
        Ok(match &self.kind {
            QKind::Identity => s.trace(),
            QKind::Diagonal(d) => d.iter().enumerate().map(|(i, w)| w * s[(i, i)]).sum(),
            // tr(QS) = Σᵢⱼ Qᵢⱼ Sⱼᵢ
            QKind::Dense(m) => m.component_mul(&s.transpose()).sum(),
        })
    }

    /// Diagonal entries of `Q`.
    pub fn diagonal_entries(&self) -> Vec<f64> {
        match &self.kind {
            QKind::Identity => vec![1.0; self.p],
            QKind::Diagonal(d) => d.clone(),
            QKind::Dense(m) => m.diagonal().iter().copied().collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.kind {
            QKind::Identity => DMatrix::identity(self.p, self.p),
            QKind::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            QKind::Dense(m) => m.clone(),
        }
    }
}

pub(crate) fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}
