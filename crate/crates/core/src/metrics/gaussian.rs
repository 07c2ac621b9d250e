use nalgebra::{DMatrix, DVector};

use super::{EmbeddingMatrix, MetricsError};

/// Added to the covariance diagonal after fitting.
pub const COVARIANCE_EPSILON: f64 = 1e-6;
/// Negative eigenvalues down to this magnitude are treated as round-off and clamped to zero.
pub const EIGEN_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Diagonal Gaussian from per-dimension means and variances.
    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Self {
        assert_eq!(mean.len(), variances.len());
        Self {
            mean: DVector::from_column_slice(mean),
            covariance: DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
            n: 0,
        }
    }
}

/// Column mean and unbiased sample covariance (plus `ε·I`).
pub fn fit_gaussian(e: &EmbeddingMatrix) -> Result<GaussianStats, MetricsError> {
    let (n, d) = (e.n(), e.d());
    if n < 2 {
        return Err(MetricsError::TooFewSamples { n });
    }
    if e.values().iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteInput);
    }
    let rows = DMatrix::from_row_slice(n, d, e.values());
    let mean = rows.row_mean().transpose();
    let mut centered = rows;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut covariance = centered.transpose() * &centered / (n as f64 - 1.0);
    covariance = (&covariance + covariance.transpose()) * 0.5;
    for i in 0..d {
        covariance[(i, i)] += COVARIANCE_EPSILON;
    }
    Ok(GaussianStats { mean, covariance, n })
}

/// Eigenvalues of a symmetric matrix with round-off negatives clamped to zero.
fn clamped_eigen(m: &DMatrix<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>), MetricsError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut values = eig.eigenvalues;
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(MetricsError::NonFiniteResult(format!("{what} has a non-finite eigenvalue")));
        }
        if *v < 0.0 {
            if *v < -EIGEN_CLAMP * scale {
                return Err(MetricsError::NonFiniteResult(format!(
                    "{what} is not positive semidefinite (eigenvalue {v:e})"
                )));
            }
            *v = 0.0;
        }
    }
    Ok((values, eig.eigenvectors))
}

fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, MetricsError> {
    let (values, vectors) = clamped_eigen(m, what)?;
    Ok(&vectors * DMatrix::from_diagonal(&values.map(f64::sqrt)) * vectors.transpose())
}

/// `‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2(Σ1Σ2)^{1/2})`.
///
/// `Tr((Σ1Σ2)^{1/2})` equals the trace of the root of the symmetric product
/// `Σ1^{1/2} Σ2 Σ1^{1/2}`, which is the sum of the singular values of
/// `Σ2^{1/2} Σ1^{1/2}`. Taking singular values instead of eigenvalues of the
/// product keeps small (ε-sized) directions accurate, because the product
/// squares them below the round-off floor of its largest eigenvalue.
pub fn frechet_distance(g1: &GaussianStats, g2: &GaussianStats) -> Result<f64, MetricsError> {
    if g1.dim() != g2.dim() {
        return Err(MetricsError::DimensionMismatch { left: g1.dim(), right: g2.dim() });
    }
    let sqrt1 = psd_sqrt(&g1.covariance, "first covariance")?;
    let sqrt2 = psd_sqrt(&g2.covariance, "second covariance")?;
    let trace_sqrt: f64 = (sqrt2 * sqrt1).singular_values().iter().sum();

    let diff = &g1.mean - &g2.mean;
    let distance = diff.dot(&diff) + g1.covariance.trace() + g2.covariance.trace() - 2.0 * trace_sqrt;
    if !distance.is_finite() {
        return Err(MetricsError::NonFiniteResult(format!("distance evaluated to {distance}")));
    }
    Ok(distance.max(0.0))
}

pub fn fad_score(reference: &EmbeddingMatrix, generated: &EmbeddingMatrix) -> Result<f64, MetricsError> {
    if reference.d() != generated.d() {
        return Err(MetricsError::DimensionMismatch { left: reference.d(), right: generated.d() });
    }
    frechet_distance(&fit_gaussian(reference)?, &fit_gaussian(generated)?)
}
