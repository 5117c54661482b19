//! Ground truth and data generation for `Xᵢ = Σ^{1/2} εᵢ + μ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadform::relative_asymmetry;

/// Derives the random stream for one replication from a master seed.
///
/// Every replication owns a distinct ChaCha stream, so results do not depend
/// on how replications are scheduled across workers.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// n observations of dimension p, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("data matrix must have at least one row and one column"));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (row, col) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::invalid(format!("non-finite entry at ({row}, {col})")));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.values.row(k).iter().copied().collect()
    }

    /// Coordinatewise sum of observations.
    pub fn column_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.values.column_iter().map(|c| c.sum()))
    }

    pub fn column_means(&self) -> DVector<f64> {
        self.column_sums() / self.n() as f64
    }

    /// Unbiased (divisor n−1) per-coordinate sample variances.
    pub fn column_variances(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n < 2 {
            return Err(Error::TooFewObservations { needed: 2, got: n });
        }
        Ok(self
            .values
            .column_iter()
            .map(|c| {
                let m = c.mean();
                c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
            })
            .collect())
    }

    /// `X → sX + c·e` applied to every observation.
    pub fn affine(&self, scale: f64, shift: f64) -> DataMatrix {
        DataMatrix {
            values: self.values.map(|v| scale * v + shift),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select_rows(rows),
        }
    }

    pub fn leading_columns(&self, count: usize) -> Result<DataMatrix> {
        if count == 0 || count > self.p() {
            return Err(Error::invalid(format!(
                "column count {count} outside 1..={}",
                self.p()
            )));
        }
        Ok(DataMatrix {
            values: self.values.columns(0, count).into_owned(),
        })
    }

    pub fn transpose(&self) -> DataMatrix {
        DataMatrix {
            values: self.values.transpose(),
        }
    }
}

/// Innovation distribution for the entries of `εᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorDist {
    Normal,
    /// Student t with `v` degrees of freedom rescaled to unit variance.
    ScaledT { v: f64 },
}

impl ErrorDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorDist::Normal => Ok(()),
            ErrorDist::ScaledT { v } if v.is_finite() && v > 4.0 => Ok(()),
            ErrorDist::ScaledT { v } => Err(Error::invalid(format!(
                "scaled-t needs v > 4 for a finite fourth moment, got {v}"
            ))),
        }
    }

    /// Excess kurtosis `E(ε⁴) − 3`.
    pub fn delta(&self) -> f64 {
        match *self {
            ErrorDist::Normal => 0.0,
            ErrorDist::ScaledT { v } => 6.0 / (v - 4.0),
        }
    }

    fn sampler(&self) -> Innovation {
        match *self {
            ErrorDist::Normal => Innovation::Normal,
            ErrorDist::ScaledT { v } => Innovation::ScaledT {
                t: StudentT::new(v).expect("validated degrees of freedom"),
                scale: ((v - 2.0) / v).sqrt(),
            },
        }
    }
}

enum Innovation {
    Normal,
    ScaledT { t: StudentT<f64>, scale: f64 },
}

impl Innovation {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Innovation::Normal => rng.sample(StandardNormal),
            Innovation::ScaledT { t, scale } => t.sample(rng) * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    Identity,
    /// Diagonal with 20% of entries 1, 40% 3 and 40% 10, in that order.
    Sigma1,
    /// `Σ₁^{1/2} Σ₀ Σ₁^{1/2}` with AR(1) correlation `ρ^|i−j|`.
    Sigma2 { rho: f64 },
    /// `Σ₁^{1/2} Σ₀₀ Σ₁^{1/2}` with equicorrelation `ρ`.
    Sigma3 { rho: f64 },
    Custom { matrix: Vec<Vec<f64>> },
}

/// Diagonal of `Σ₁`: blocks of 1, 3 and 10 covering 20/40/40 percent of coordinates.
pub fn sigma1_diagonal(p: usize) -> Result<Vec<f64>> {
    if p == 0 || !p.is_multiple_of(5) {
        return Err(Error::invalid(format!(
            "Σ₁ family needs p divisible by 5, got {p}"
        )));
    }
    let ones = p / 5;
    let threes = 2 * p / 5;
    Ok((0..p)
        .map(|i| {
            if i < ones {
                1.0
            } else if i < ones + threes {
                3.0
            } else {
                10.0
            }
        })
        .collect())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

/// Builds the population covariance for dimension `p`.
pub fn build_covariance(spec: &CovarianceSpec, p: usize) -> Result<DMatrix<f64>> {
    build_covariance_ordered(spec, p, None)
}

/// As [`build_covariance`], optionally permuting the positions of the `Σ₁`
/// eigenvalue blocks with a seeded shuffle.
pub fn build_covariance_ordered(
    spec: &CovarianceSpec,
    p: usize,
    shuffle_seed: Option<u64>,
) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::invalid("dimension p must be at least 1"));
    }
    let base = || -> Result<Vec<f64>> {
        let mut d = sigma1_diagonal(p)?;
        if let Some(seed) = shuffle_seed {
            d.shuffle(&mut stream_rng(seed, u64::MAX - 1));
        }
        Ok(d)
    };
    match spec {
        CovarianceSpec::Identity => Ok(DMatrix::identity(p, p)),
        CovarianceSpec::Sigma1 => Ok(DMatrix::from_diagonal(&DVector::from_vec(base()?))),
        CovarianceSpec::Sigma2 { rho } => {
            check_rho(*rho)?;
            let d = base()?;
            Ok(DMatrix::from_fn(p, p, |i, j| {
                (d[i] * d[j]).sqrt() * rho.powi(i.abs_diff(j) as i32)
            }))
        }
        CovarianceSpec::Sigma3 { rho } => {
            check_rho(*rho)?;
            let d = base()?;
            Ok(DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    d[i]
                } else {
                    (d[i] * d[j]).sqrt() * rho
                }
            }))
        }
        CovarianceSpec::Custom { matrix } => {
            if matrix.len() != p || matrix.iter().any(|r| r.len() != p) {
                return Err(Error::invalid(format!("custom covariance must be {p}×{p}")));
            }
            let m = DMatrix::from_fn(p, p, |i, j| matrix[i][j]);
            // validates symmetry and PD
            Covariance::new(m.clone())?;
            Ok(m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanSpec {
    /// i.i.d. `N(0, τ²)` coordinates.
    Mu1 { tau: f64 },
    /// `+τ` on the first half, `−τ` on the second.
    Mu2 { tau: f64 },
    Constant { c: f64 },
    Custom { values: Vec<f64> },
}

impl MeanSpec {
    /// Whether the spec draws from the random stream.
    pub fn is_random(&self) -> bool {
        matches!(self, MeanSpec::Mu1 { tau } if *tau > 0.0)
    }
}

pub fn build_mean<R: Rng + ?Sized>(spec: &MeanSpec, p: usize, rng: &mut R) -> Result<DVector<f64>> {
    if p == 0 {
        return Err(Error::invalid("dimension p must be at least 1"));
    }
    let check_tau = |tau: f64| {
        if tau.is_finite() && tau >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("tau must be non-negative, got {tau}")))
        }
    };
    match spec {
        MeanSpec::Mu1 { tau } => {
            check_tau(*tau)?;
            if *tau == 0.0 {
                return Ok(DVector::zeros(p));
            }
            let normal = Normal::new(0.0, *tau).expect("validated tau");
            Ok(DVector::from_iterator(p, (0..p).map(|_| normal.sample(rng))))
        }
        MeanSpec::Mu2 { tau } => {
            check_tau(*tau)?;
            if !p.is_multiple_of(2) {
                return Err(Error::invalid(format!("μ₂ needs even p, got {p}")));
            }
            Ok(DVector::from_fn(p, |i, _| if i < p / 2 { *tau } else { -*tau }))
        }
        MeanSpec::Constant { c } => Ok(DVector::from_element(p, *c)),
        MeanSpec::Custom { values } => {
            if values.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: values.len(),
                });
            }
            Ok(DVector::from_column_slice(values))
        }
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Symmetric PSD square root by spectral decomposition.
///
/// Eigenvalues down to `−1e-10·‖S‖` are clipped to zero; anything lower is
/// rejected.
pub fn psd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch {
            expected: s.nrows(),
            got: s.ncols(),
        });
    }
    let asym = relative_asymmetry(s);
    if asym > crate::quadform::SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let floor = -1e-10 * s.norm();
    if is_diagonal(s) {
        let mut out = DMatrix::zeros(s.nrows(), s.ncols());
        for i in 0..s.nrows() {
            let v = s[(i, i)];
            if v < floor {
                return Err(Error::NotPositiveDefinite);
            }
            out[(i, i)] = v.max(0.0).sqrt();
        }
        return Ok(out);
    }
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < floor) {
        return Err(Error::NotPositiveDefinite);
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * roots[j]);
    let root = &scaled * v.transpose();
    // symmetrize away rounding
    Ok((&root + root.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq)]
enum SqrtFactor {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// A validated positive definite covariance with its symmetric square root.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    sqrt: SqrtFactor,
}

impl Covariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("covariance must be a non-empty square matrix"));
        }
        let asym = relative_asymmetry(&matrix);
        if asym > crate::quadform::SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let sqrt = if is_diagonal(&matrix) {
            let d = matrix.diagonal();
            if d.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::NotPositiveDefinite);
            }
            SqrtFactor::Diagonal(d.iter().map(|v| v.sqrt()).collect())
        } else {
            let eig = matrix.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::NotPositiveDefinite);
            }
            SqrtFactor::Dense(psd_sqrt(&matrix)?)
        };
        Ok(Self { matrix, sqrt })
    }

    pub fn from_spec(spec: &CovarianceSpec, p: usize, shuffle_seed: Option<u64>) -> Result<Self> {
        Self::new(build_covariance_ordered(spec, p, shuffle_seed)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.sqrt, SqrtFactor::Diagonal(_))
    }

    pub fn sqrt_matrix(&self) -> DMatrix<f64> {
        match &self.sqrt {
            SqrtFactor::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            SqrtFactor::Dense(m) => m.clone(),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }
}

/// Ground truth for one simulated problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub mu: DVector<f64>,
    pub covariance: Arc<Covariance>,
    pub n: usize,
    pub errors: ErrorDist,
}

impl ProblemInstance {
    pub fn new(
        mu: DVector<f64>,
        covariance: Arc<Covariance>,
        n: usize,
        errors: ErrorDist,
    ) -> Result<Self> {
        if mu.len() != covariance.p() {
            return Err(Error::DimensionMismatch {
                expected: covariance.p(),
                got: mu.len(),
            });
        }
        if n == 0 {
            return Err(Error::invalid("sample size n must be at least 1"));
        }
        errors.validate()?;
        Ok(Self {
            mu,
            covariance,
            n,
            errors,
        })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        self.covariance.matrix()
    }

    pub fn with_mean(&self, mu: DVector<f64>) -> Result<Self> {
        Self::new(mu, Arc::clone(&self.covariance), self.n, self.errors)
    }
}

/// Draws `n` rows `Σ^{1/2}εᵢ + μ`.
///
/// Innovations are consumed row by row, so the output is a pure function of
/// the instance and the rng state.
pub fn generate_sample<R: Rng + ?Sized>(inst: &ProblemInstance, rng: &mut R) -> DataMatrix {
    let (n, p) = (inst.n, inst.p());
    let innovation = inst.errors.sampler();
    let mut eps = DMatrix::<f64>::zeros(n, p);
    for k in 0..n {
        for j in 0..p {
            eps[(k, j)] = innovation.draw(rng);
        }
    }
    let mut values = match &inst.covariance.sqrt {
        SqrtFactor::Diagonal(d) => {
            for (j, mut col) in eps.column_iter_mut().enumerate() {
                col *= d[j];
            }
            eps
        }
        // Σ^{1/2} is symmetric, so row k of E·Σ^{1/2} is (Σ^{1/2}εₖ)'.
        SqrtFactor::Dense(root) => &eps * root,
    };
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.add_scalar_mut(inst.mu[j]);
    }
    DataMatrix { values }
}
