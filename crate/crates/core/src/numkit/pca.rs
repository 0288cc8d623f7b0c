use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Dimensions whose population std falls below this are left unscaled.
pub const MIN_STD: f64 = 1e-12;

/// Standardisation followed by projection onto the leading principal
/// directions of the standardised data.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `k × dim`, one principal direction per row.
    pub components: Matrix,
    /// Variance of the standardised data along each direction, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Fits on row samples.
    pub fn fit(data: &Matrix, k: usize) -> Result<Self> {
        let (n, dim) = data.shape();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "PCA needs at least 2 samples, got {n}"
            )));
        }
        if k < 1 || k > dim {
            return Err(Error::InvalidArgument(format!(
                "PCA dimension k={k} must be within 1..={dim}"
            )));
        }
        if !data.is_finite() {
            return Err(Error::InvalidArgument(
                "PCA input contains non-finite values".into(),
            ));
        }
        let (mean, std) = column_stats(data);
        let standardized = standardize(data, &mean, &std);

        let cov = standardized.t_matmul(&standardized)?.scale(1.0 / n as f64);
        let sym = DMatrix::from_row_slice(dim, dim, cov.data());
        let eig = SymmetricEigen::new(sym);

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });

        let mut components = Matrix::zeros(k, dim);
        let mut explained_variance = Vec::with_capacity(k);
        for (row, &idx) in order.iter().take(k).enumerate() {
            let col = eig.eigenvectors.column(idx);
            let sign = sign_of_largest(col.iter().copied());
            for (j, v) in col.iter().enumerate() {
                components.set(row, j, sign * v);
            }
            explained_variance.push(eig.eigenvalues[idx].max(0.0));
        }
        // Clamping can break monotonicity only among eigenvalues that are
        // zero up to round-off.
        for i in 1..explained_variance.len() {
            if explained_variance[i] > explained_variance[i - 1] {
                explained_variance[i] = explained_variance[i - 1];
            }
        }

        Ok(Self {
            mean,
            std,
            components,
            explained_variance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// `P · ((v - mean) / std)`
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::shape("pca_project", self.input_dim(), v.len()));
        }
        let z: Vec<f64> = v
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        Ok(self
            .components
            .row_iter()
            .map(|p| p.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Projects every row of `data`.
    pub fn project_rows(&self, data: &Matrix) -> Result<Matrix> {
        if data.cols() != self.input_dim() {
            return Err(Error::shape("pca_project", self.input_dim(), data.cols()));
        }
        standardize(data, &self.mean, &self.std).matmul_t(&self.components)
    }

    /// Maps projected coordinates back to the standardised input space.
    pub fn reconstruct_standardized(&self, projected: &[f64]) -> Result<Vec<f64>> {
        if projected.len() != self.output_dim() {
            return Err(Error::shape(
                "pca_reconstruct",
                self.output_dim(),
                projected.len(),
            ));
        }
        Ok(Matrix::row_vector(projected.to_vec())
            .matmul(&self.components)?
            .into_data())
    }
}

/// Per-column mean and population standard deviation; near-constant
/// columns get std 1.
pub fn column_stats(data: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, dim) = data.shape();
    let nf = n.max(1) as f64;
    let mut mean = vec![0.0; dim];
    for row in data.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; dim];
    for row in data.row_iter() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / nf).sqrt();
            if sd < MIN_STD {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, std)
}

pub fn standardize(data: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    Matrix::from_fn(data.rows(), data.cols(), |r, c| {
        (data.get(r, c) - mean[c]) / std[c]
    })
}

/// +1 if the largest-magnitude entry (first on ties) is non-negative, else -1.
fn sign_of_largest(values: impl Iterator<Item = f64>) -> f64 {
    let mut best = 0.0_f64;
    for v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_samples_give_the_diagonal_direction() {
        let data = Matrix::from_rows(&[[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0]]).unwrap();
        let model = PcaModel::fit(&data, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((model.components.get(0, 0) - s).abs() < 1e-12);
        assert!((model.components.get(0, 1) - s).abs() < 1e-12);
        assert!(model.explained_variance[1].abs() < 1e-12);
        assert!((model.explained_variance[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mean_projects_to_origin() {
        let data = Matrix::from_fn(6, 3, |r, c| {
            ((r * 3 + c) as f64 * 1.3).sin() * (c + 1) as f64
        });
        let model = PcaModel::fit(&data, 2).unwrap();
        let p = model.project(&model.mean).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_dimension_gets_unit_std() {
        let data = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]]).unwrap();
        let model = PcaModel::fit(&data, 1).unwrap();
        assert_eq!(model.std[1], 1.0);
        assert!(model.components.is_finite());
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let data = Matrix::zeros(3, 2);
        assert!(PcaModel::fit(&data, 0).is_err());
        assert!(PcaModel::fit(&data, 3).is_err());
        assert!(PcaModel::fit(&Matrix::zeros(1, 2), 1).is_err());
        let model = PcaModel::fit(&Matrix::identity(3), 2).unwrap();
        assert!(model.project(&[1.0]).is_err());
    }

    #[test]
    fn identity_projection_is_passthrough() {
        let model = PcaModel {
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
            components: Matrix::identity(3),
            explained_variance: vec![1.0; 3],
        };
        assert_eq!(
            model.project(&[0.5, -2.0, 3.0]).unwrap(),
            vec![0.5, -2.0, 3.0]
        );
    }
}
