//! Ordinary least-squares baseline on standardized features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Ridge term added to the normal equations for numerical stability.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Weights on the standardized columns.
    pub weights: Vec<f64>,
    /// Intercept in original units.
    pub intercept: f64,
}

impl OlsModel {
    pub fn fit(x: &DenseMatrix, y: &[f64]) -> Result<OlsModel> {
        let n = x.n_rows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if y.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: y.len(),
            });
        }
        if !x.all_finite() {
            return Err(Error::NonFiniteInput("feature matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("target"));
        }
        let d = x.n_cols();
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let mut means = Vec::with_capacity(d);
        let mut scales = Vec::with_capacity(d);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(d);
        for c in 0..d {
            let col = x.column(c);
            let m = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
            let s = if var.sqrt() > 1e-12 * m.abs().max(1.0) { var.sqrt() } else { 1.0 };
            z.push(col.iter().map(|v| (v - m) / s).collect());
            means.push(m);
            scales.push(s);
        }
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for i in 0..d {
            for j in 0..=i {
                let v: f64 = z[i].iter().zip(&z[j]).map(|(p, q)| p * q).sum();
                a[i * d + j] = v;
                a[j * d + i] = v;
            }
            a[i * d + i] += RIDGE;
            b[i] = z[i].iter().zip(y).map(|(p, t)| p * (t - y_mean)).sum();
        }
        let weights = cholesky_solve(&mut a, &b, d)?;
        let intercept = y_mean - weights.iter().zip(&means).zip(&scales).map(|((w, m), s)| w * m / s).sum::<f64>();
        Ok(OlsModel {
            means,
            scales,
            weights,
            intercept,
        })
    }

    /// Coefficients on the original (unstandardized) columns.
    pub fn coefficients(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scales).map(|(w, s)| w / s).collect()
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.n_cols(),
            });
        }
        let y_mean = self.intercept
            + self
                .weights
                .iter()
                .zip(&self.means)
                .zip(&self.scales)
                .map(|((w, m), s)| w * m / s)
                .sum::<f64>();
        let mut out = vec![y_mean; x.n_rows()];
        for (c, ((w, m), s)) in self.weights.iter().zip(&self.means).zip(&self.scales).enumerate() {
            for (o, v) in out.iter_mut().zip(x.column(c)) {
                *o += w * (v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Solves `A w = b` for symmetric positive-definite `A` (row-major, `d×d`),
/// overwriting `A` with its Cholesky factor.
fn cholesky_solve(a: &mut [f64], b: &[f64], d: usize) -> Result<Vec<f64>> {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) {
            return Err(Error::InvalidParams("normal equations are not positive definite".into()));
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l;
        }
    }
    let mut w = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            w[i] -= a[i * d + k] * w[k];
        }
        w[i] /= a[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            w[i] -= a[k * d + i] * w[k];
        }
        w[i] /= a[i * d + i];
    }
    Ok(w)
}
