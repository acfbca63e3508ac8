//! Small statistics used by the evaluation reports.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Centres the points and rotates them onto their principal axes, largest
/// variance first. The map is a rigid motion, so pairwise distances are kept.
pub fn principal_axis_rotation(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if n == 0 || dim == 0 {
        return Err(Error::data("no points to rotate"));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::data("points differ in dimension"));
    }
    let mean: Vec<f64> = (0..dim)
        .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64)
        .collect();
    let centred = DMatrix::from_fn(n, dim, |i, k| points[i][k] - mean[k]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes = DMatrix::from_fn(dim, dim, |r, c| {
        let col = eig.eigenvectors.column(order[c]);
        // fix the sign so the largest-magnitude component is positive
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            -col[r]
        } else {
            col[r]
        }
    });
    let rotated = centred * axes;
    Ok((0..n).map(|i| rotated.row(i).iter().copied().collect()).collect())
}

/// Least-squares affine map from `inputs` to `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    /// `(in_dim + 1) x out_dim`, last row is the intercept.
    coefficients: DMatrix<f64>,
}

fn design(inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let dim = inputs[0].len();
    DMatrix::from_fn(inputs.len(), dim + 1, |i, k| if k < dim { inputs[i][k] } else { 1.0 })
}

impl AffineFit {
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::data("affine fit needs equally many inputs and targets"));
        }
        let x = design(inputs);
        let out_dim = targets[0].len();
        let y = DMatrix::from_fn(targets.len(), out_dim, |i, k| targets[i][k]);
        let coefficients = x
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::data(format!("least squares failed: {e}")))?;
        Ok(Self { coefficients })
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let y = design(inputs) * &self.coefficients;
        (0..y.nrows()).map(|i| y.row(i).iter().copied().collect()).collect()
    }
}

/// `1 − SS_res / SS_tot`, pooled over all target components.
pub fn r_squared(predicted: &[Vec<f64>], actual: &[Vec<f64>]) -> f64 {
    let n = actual.len();
    let dim = actual.first().map_or(0, Vec::len);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for k in 0..dim {
        let mean = actual.iter().map(|a| a[k]).sum::<f64>() / n as f64;
        for (p, a) in predicted.iter().zip(actual) {
            ss_res += (a[k] - p[k]).powi(2);
            ss_tot += (a[k] - mean).powi(2);
        }
    }
    1.0 - ss_res / ss_tot
}
