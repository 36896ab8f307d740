//! Multivariate confounder scores: collapse p pre-treatment covariates
//! into one scalar via a ridge-type Bayesian linear fit of the outcome on
//! (1, B(x⃗), 1(r ≥ r₀)), then drop the treatment term. The score
//! xᵢ = β̂₀ + β̂ₓ·B(x⃗ᵢ) is the part of the fitted predictor free of the
//! treatment effect.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfounderError {
    #[error("empty covariate input")]
    EmptyInput,
    #[error("covariate rows have inconsistent dimensions")]
    RaggedCovariates,
    #[error("non-finite covariate or outcome value")]
    NonFiniteValue,
    #[error("lengths of covariates, r, and y must agree")]
    LengthMismatch,
    #[error("ridge parameter v must be positive")]
    NonPositiveV,
    #[error("polynomial basis degree must be at least 1")]
    InvalidBasis,
    #[error("fit and basis dimensions disagree")]
    BasisMismatch,
    #[error("linear solve failed: {0}")]
    SolveFailure(&'static str),
}

/// Basis transformation B: ℝᵖ → ℝᵐ applied to each covariate vector.
/// `Linear` is the identity (m = p); `Polynomial { degree: d }` raises
/// each coordinate to the powers 1..=d (m = p·d).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Linear,
    Polynomial { degree: usize },
}

impl BasisSpec {
    pub fn validate(&self) -> Result<(), ConfounderError> {
        match self {
            BasisSpec::Polynomial { degree: 0 } => Err(ConfounderError::InvalidBasis),
            _ => Ok(()),
        }
    }

    pub fn output_dim(&self, p: usize) -> usize {
        match self {
            BasisSpec::Linear => p,
            BasisSpec::Polynomial { degree } => p * degree,
        }
    }

    fn expand_into(&self, x: &[f64], out: &mut Vec<f64>) {
        match self {
            BasisSpec::Linear => out.extend_from_slice(x),
            BasisSpec::Polynomial { degree } => {
                for &xi in x {
                    let mut pow = 1.0;
                    for _ in 0..*degree {
                        pow *= xi;
                        out.push(pow);
                    }
                }
            }
        }
    }
}

/// Coefficients of the ridge fit, laid out (β̂₀, β̂ₓ ∈ ℝᵐ, β̂_R), plus the
/// ridge parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFit {
    pub coefficients: Vec<f64>,
    pub ridge_v: f64,
}

impl ScoreFit {
    pub fn q(&self) -> usize {
        self.coefficients.len()
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn covariate_coefficients(&self) -> &[f64] {
        &self.coefficients[1..self.coefficients.len() - 1]
    }

    pub fn treatment_coefficient(&self) -> f64 {
        self.coefficients[self.coefficients.len() - 1]
    }
}

fn check_covariates(covariates: &[Vec<f64>]) -> Result<usize, ConfounderError> {
    let Some(first) = covariates.first() else {
        return Err(ConfounderError::EmptyInput);
    };
    let p = first.len();
    for row in covariates {
        if row.len() != p {
            return Err(ConfounderError::RaggedCovariates);
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ConfounderError::NonFiniteValue);
        }
    }
    Ok(p)
}

/// The n×q design matrix with rows (1, B(x⃗ᵢ), 1(rᵢ ≥ r₀)).
pub fn build_design(
    covariates: &[Vec<f64>],
    r: &[f64],
    r0: f64,
    basis: &BasisSpec,
) -> Result<DMatrix<f64>, ConfounderError> {
    basis.validate()?;
    let p = check_covariates(covariates)?;
    if r.len() != covariates.len() {
        return Err(ConfounderError::LengthMismatch);
    }
    if r.iter().any(|v| !v.is_finite()) || !r0.is_finite() {
        return Err(ConfounderError::NonFiniteValue);
    }
    let n = covariates.len();
    let q = basis.output_dim(p) + 2;
    let mut rows = Vec::with_capacity(n * q);
    let mut expanded = Vec::with_capacity(q - 2);
    for (row, &ri) in covariates.iter().zip(r) {
        expanded.clear();
        basis.expand_into(row, &mut expanded);
        rows.push(1.0);
        rows.extend_from_slice(&expanded);
        rows.push(f64::from(ri >= r0));
    }
    Ok(DMatrix::from_row_slice(n, q, &rows))
}

/// Ridge estimate β̂ = (v⁻¹I + B'B)⁻¹B'y via a Cholesky solve of the q×q
/// system; the matrix is SPD for any B whenever v > 0.
pub fn ridge_fit(design: &DMatrix<f64>, y: &[f64], v: f64) -> Result<ScoreFit, ConfounderError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(ConfounderError::NonPositiveV);
    }
    if y.len() != design.nrows() {
        return Err(ConfounderError::LengthMismatch);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ConfounderError::NonFiniteValue);
    }
    let q = design.ncols();
    let mut system = design.transpose() * design;
    for i in 0..q {
        system[(i, i)] += 1.0 / v;
    }
    let rhs = design.transpose() * DVector::from_column_slice(y);
    let chol = Cholesky::new(system.clone())
        .ok_or(ConfounderError::SolveFailure("Cholesky factorization failed"))?;
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(ConfounderError::SolveFailure("non-finite coefficients"));
    }
    // Residual check of the normal-equations solve.
    let residual = &system * &beta - &rhs;
    let res_inf = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rhs_inf = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if res_inf > 1e-8 * (1.0 + rhs_inf) {
        return Err(ConfounderError::SolveFailure("residual check failed"));
    }
    Ok(ScoreFit {
        coefficients: beta.iter().copied().collect(),
        ridge_v: v,
    })
}

/// Confounder scores xᵢ = β̂₀ + β̂ₓ·B(x⃗ᵢ); the treatment term β̂_R is
/// excluded, so scores depend on covariates only.
pub fn confounder_scores(
    fit: &ScoreFit,
    covariates: &[Vec<f64>],
    basis: &BasisSpec,
) -> Result<Vec<f64>, ConfounderError> {
    basis.validate()?;
    let p = check_covariates(covariates)?;
    if fit.q() != basis.output_dim(p) + 2 {
        return Err(ConfounderError::BasisMismatch);
    }
    let bx = fit.covariate_coefficients();
    let mut expanded = Vec::with_capacity(bx.len());
    let scores = covariates
        .iter()
        .map(|row| {
            expanded.clear();
            basis.expand_into(row, &mut expanded);
            fit.intercept() + expanded.iter().zip(bx).map(|(e, b)| e * b).sum::<f64>()
        })
        .collect();
    Ok(scores)
}

/// Column standardization to mean 0 / variance 1, dropping constant
/// columns. A shared ridge penalty across raw covariate scales would
/// otherwise be arbitrary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_dim: usize,
    /// Indices of retained (non-constant) columns.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(covariates: &[Vec<f64>]) -> Result<Self, ConfounderError> {
        let p = check_covariates(covariates)?;
        let n = covariates.len() as f64;
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for j in 0..p {
            let mean = covariates.iter().map(|row| row[j]).sum::<f64>() / n;
            let sd = if covariates.len() >= 2 {
                (covariates
                    .iter()
                    .map(|row| (row[j] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            if sd > 0.0 {
                kept.push(j);
                means.push(mean);
                sds.push(sd);
            }
        }
        Ok(Standardizer {
            input_dim: p,
            kept,
            means,
            sds,
        })
    }

    pub fn apply(&self, covariates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ConfounderError> {
        let p = check_covariates(covariates)?;
        if p != self.input_dim {
            return Err(ConfounderError::BasisMismatch);
        }
        Ok(covariates
            .iter()
            .map(|row| {
                self.kept
                    .iter()
                    .enumerate()
                    .map(|(slot, &j)| (row[j] - self.means[slot]) / self.sds[slot])
                    .collect()
            })
            .collect())
    }

    /// Indices of dropped (constant) columns.
    pub fn dropped(&self) -> Vec<usize> {
        (0..self.input_dim)
            .filter(|j| !self.kept.contains(j))
            .collect()
    }
}

/// Result of the full scoring pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResult {
    pub scores: Vec<f64>,
    pub fit: ScoreFit,
    pub standardizer: Standardizer,
}

/// Standardize covariates, build the design, fit the ridge regression of
/// y, and return the treatment-free scores.
pub fn score_covariates(
    covariates: &[Vec<f64>],
    y: &[f64],
    r: &[f64],
    r0: f64,
    basis: &BasisSpec,
    v: f64,
) -> Result<ScoreResult, ConfounderError> {
    if covariates.len() != y.len() || covariates.len() != r.len() {
        return Err(ConfounderError::LengthMismatch);
    }
    let standardizer = Standardizer::fit(covariates)?;
    let z = standardizer.apply(covariates)?;
    let design = build_design(&z, r, r0, basis)?;
    let fit = ridge_fit(&design, y, v)?;
    let scores = confounder_scores(&fit, &z, basis)?;
    Ok(ScoreResult {
        scores,
        fit,
        standardizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn design_rows_match_definition() {
        // p = 1, linear basis.
        let design = build_design(&[vec![3.0]], &[5.0], 0.0, &BasisSpec::Linear).unwrap();
        assert_eq!(design.nrows(), 1);
        assert_eq!(design.ncols(), 3);
        assert_eq!(design.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 1.0]);

        // p = 1, polynomial degree 2, control side.
        let design = build_design(
            &[vec![2.0]],
            &[-1.0],
            0.0,
            &BasisSpec::Polynomial { degree: 2 },
        )
        .unwrap();
        assert_eq!(design.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 4.0, 0.0]);

        // Boundary convention: r = r₀ is treated.
        let design = build_design(&[vec![1.0, -1.0]], &[0.0], 0.0, &BasisSpec::Linear).unwrap();
        assert_eq!(
            design.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0, -1.0, 1.0]
        );
    }

    #[test]
    fn design_rejects_bad_input() {
        assert_eq!(
            build_design(&[vec![1.0], vec![1.0, 2.0]], &[0.0, 1.0], 0.0, &BasisSpec::Linear),
            Err(ConfounderError::RaggedCovariates)
        );
        assert_eq!(
            build_design(&[vec![f64::NAN]], &[0.0], 0.0, &BasisSpec::Linear),
            Err(ConfounderError::NonFiniteValue)
        );
        assert_eq!(
            build_design(&[], &[], 0.0, &BasisSpec::Linear),
            Err(ConfounderError::EmptyInput)
        );
        assert_eq!(
            build_design(&[vec![1.0]], &[0.0], 0.0, &BasisSpec::Polynomial { degree: 0 }),
            Err(ConfounderError::InvalidBasis)
        );
    }

    #[test]
    fn ridge_scalar_and_zero_cases() {
        // Zero response gives zero coefficients.
        let design = build_design(
            &[vec![1.0], vec![2.0], vec![-0.5]],
            &[-1.0, 0.5, 1.0],
            0.0,
            &BasisSpec::Linear,
        )
        .unwrap();
        let fit = ridge_fit(&design, &[0.0, 0.0, 0.0], 1.0).unwrap();
        for b in &fit.coefficients {
            assert_abs_diff_eq!(*b, 0.0, epsilon = 1e-14);
        }

        // 1×1 scalar case: (v⁻¹ + B'B)⁻¹ B'y = (1 + 4)⁻¹·12 = 2.4.
        let design = DMatrix::from_row_slice(1, 1, &[2.0]);
        let fit = ridge_fit(&design, &[6.0], 1.0).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.4, epsilon = 1e-12);

        assert_eq!(
            ridge_fit(&design, &[6.0], 0.0),
            Err(ConfounderError::NonPositiveV)
        );
        assert_eq!(
            ridge_fit(&design, &[6.0, 1.0], 1.0),
            Err(ConfounderError::LengthMismatch)
        );
    }

    #[test]
    fn large_v_approaches_least_squares() {
        // Independent route: solve the unpenalized normal equations with LU.
        let mut state = 0xfeed5eedu64;
        let mut next = move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let design = DMatrix::from_fn(20, 4, |_, _| next());
        let y: Vec<f64> = (0..20).map(|_| next()).collect();
        let fit = ridge_fit(&design, &y, 1e6).unwrap();

        let normal = design.transpose() * &design;
        let rhs = design.transpose() * DVector::from_column_slice(&y);
        let ls = normal.lu().solve(&rhs).unwrap();
        for (b, l) in fit.coefficients.iter().zip(ls.iter()) {
            assert!(
                (b - l).abs() <= 1e-3 * l.abs().max(1e-6),
                "ridge {b} vs ls {l}"
            );
        }
    }

    #[test]
    fn ridge_is_linear_in_y() {
        let design = build_design(
            &[vec![1.0, 0.5], vec![2.0, -1.0], vec![0.0, 0.3], vec![1.5, 2.0]],
            &[-1.0, -0.5, 0.5, 1.0],
            0.0,
            &BasisSpec::Linear,
        )
        .unwrap();
        let y1 = [1.0, -2.0, 0.5, 3.0];
        let y2 = [0.3, 1.1, -0.7, 0.2];
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let f1 = ridge_fit(&design, &y1, 10.0).unwrap();
        let f2 = ridge_fit(&design, &y2, 10.0).unwrap();
        let fs = ridge_fit(&design, &sum, 10.0).unwrap();
        for ((a, b), s) in f1
            .coefficients
            .iter()
            .zip(&f2.coefficients)
            .zip(&fs.coefficients)
        {
            assert_abs_diff_eq!(a + b, *s, epsilon = 1e-10);
        }
    }

    #[test]
    fn scores_exclude_treatment_term() {
        // Only the treatment coefficient is nonzero: all scores are 0.
        let fit = ScoreFit {
            coefficients: vec![0.0, 0.0, 5.0],
            ridge_v: 1.0,
        };
        let scores =
            confounder_scores(&fit, &[vec![1.0], vec![-2.0]], &BasisSpec::Linear).unwrap();
        assert_eq!(scores, vec![0.0, 0.0]);

        // Affine evaluation, independent of β̂_R.
        for beta_r in [0.0, -7.0, 100.0] {
            let fit = ScoreFit {
                coefficients: vec![1.0, 2.0, beta_r],
                ridge_v: 1.0,
            };
            let scores = confounder_scores(&fit, &[vec![3.0]], &BasisSpec::Linear).unwrap();
            assert_abs_diff_eq!(scores[0], 7.0, epsilon = 1e-15);
        }

        // Same covariates, different treatment sides: equal scores.
        let result = score_covariates(
            &[vec![1.0], vec![1.0], vec![2.0], vec![0.0]],
            &[0.0, 1.0, 2.0, -1.0],
            &[-1.0, 1.0, 0.5, -0.5],
            0.0,
            &BasisSpec::Linear,
            1000.0,
        )
        .unwrap();
        assert_abs_diff_eq!(result.scores[0], result.scores[1], epsilon = 1e-12);

        let fit = ScoreFit {
            coefficients: vec![0.0, 0.0, 0.0],
            ridge_v: 1.0,
        };
        assert_eq!(
            confounder_scores(&fit, &[vec![1.0, 2.0]], &BasisSpec::Linear),
            Err(ConfounderError::BasisMismatch)
        );
    }

    #[test]
    fn standardizer_drops_constant_columns() {
        let cov = vec![
            vec![1.0, 5.0, 2.0],
            vec![2.0, 5.0, 4.0],
            vec![3.0, 5.0, 6.0],
        ];
        let st = Standardizer::fit(&cov).unwrap();
        assert_eq!(st.kept, vec![0, 2]);
        assert_eq!(st.dropped(), vec![1]);
        let z = st.apply(&cov).unwrap();
        assert_eq!(z[0].len(), 2);
        let mean0: f64 = z.iter().map(|row| row[0]).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(mean0, 0.0, epsilon = 1e-14);
        let var0: f64 = z.iter().map(|row| row[0] * row[0]).sum::<f64>() / 2.0;
        assert_abs_diff_eq!(var0, 1.0, epsilon = 1e-14);
    }
}
