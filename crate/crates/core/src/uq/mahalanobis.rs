use serde::{Deserialize, Serialize};

use super::UqError;

/// Relative shrinkage: `λ = SHRINKAGE · trace(Σ) / d`, or `SHRINKAGE` itself
/// when every sample sits on its class mean and the trace is zero.
pub const SHRINKAGE: f64 = 1e-3;

/// Class-conditional Gaussians with one shared covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisParams {
    pub dim: usize,
    /// One mean per class.
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim × dim` inverse of the shrunk pooled covariance.
    pub precision: Vec<f64>,
    /// Trace of the pooled covariance before shrinkage.
    pub pooled_trace: f64,
    pub shrinkage: f64,
}

/// Lower-triangular `L` with `L Lᵀ = a` for a symmetric positive-definite
/// row-major matrix.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, UqError> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0 && d.is_finite()) {
                    return Err(UqError::Factorization { pivot: i });
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of `L Lᵀ` by forward and back substitution on each unit vector.
fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut y = vec![0.0; n];
    for col in 0..n {
        for i in 0..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (rhs - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * inv[k * n + col]).sum();
            inv[i * n + col] = (y[i] - s) / l[i * n + i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = m;
            inv[j * n + i] = m;
        }
    }
    inv
}

/// Fits class means and a shared precision from row-major `[n, dim]`
/// features. Needs at least two samples per class and `n ≥ dim`.
pub fn fit_mahalanobis(
    features: &[f64],
    labels: &[usize],
    classes: usize,
    dim: usize,
) -> Result<MahalanobisParams, UqError> {
    fit_mahalanobis_with(features, labels, classes, dim, SHRINKAGE)
}

/// [`fit_mahalanobis`] with a custom relative shrinkage.
pub fn fit_mahalanobis_with(
    features: &[f64],
    labels: &[usize],
    classes: usize,
    dim: usize,
    relative_shrinkage: f64,
) -> Result<MahalanobisParams, UqError> {
    if !(relative_shrinkage > 0.0 && relative_shrinkage.is_finite()) {
        return Err(UqError::Config(format!(
            "shrinkage {relative_shrinkage} must be positive"
        )));
    }
    let n = labels.len();
    if dim == 0 || features.len() != n * dim {
        return Err(UqError::Shape(format!(
            "{} feature values for {n} rows of width {dim}",
            features.len()
        )));
    }
    if n < dim {
        return Err(UqError::Shape(format!(
            "{n} samples cannot fit a {dim}-dimensional covariance"
        )));
    }
    let mut counts = vec![0usize; classes];
    for &y in labels {
        *counts
            .get_mut(y)
            .ok_or_else(|| UqError::Shape(format!("label {y} out of range for {classes} classes")))? += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c < 2) {
        return Err(UqError::TooFewSamples {
            class,
            count: counts[class],
        });
    }

    let mut means = vec![vec![0.0; dim]; classes];
    for (row, &y) in features.chunks(dim).zip(labels) {
        for (m, v) in means[y].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }

    let mut cov = vec![0.0; dim * dim];
    let mut centred = vec![0.0; dim];
    for (row, &y) in features.chunks(dim).zip(labels) {
        for k in 0..dim {
            centred[k] = row[k] - means[y][k];
        }
        for i in 0..dim {
            for j in 0..=i {
                cov[i * dim + j] += centred[i] * centred[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            cov[i * dim + j] /= n as f64;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
    let shrinkage = if trace > 0.0 {
        relative_shrinkage * trace / dim as f64
    } else {
        relative_shrinkage
    };
    for i in 0..dim {
        cov[i * dim + i] += shrinkage;
    }
    let l = cholesky(&cov, dim)?;
    Ok(MahalanobisParams {
        dim,
        means,
        precision: cholesky_inverse(&l, dim),
        pooled_trace: trace,
        shrinkage,
    })
}

/// `min_c (z − μ_c)ᵀ P (z − μ_c)`; higher means more out-of-distribution.
pub fn mahalanobis_distance(z: &[f64], params: &MahalanobisParams) -> Result<f64, UqError> {
    let d = params.dim;
    if z.len() != d {
        return Err(UqError::Shape(format!(
            "feature width {} but parameters fitted for {d}",
            z.len()
        )));
    }
    let mut diff = vec![0.0; d];
    let mut best = f64::INFINITY;
    for mu in &params.means {
        for k in 0..d {
            diff[k] = z[k] - mu[k];
        }
        let q: f64 = (0..d)
            .map(|i| {
                diff[i]
                    * params.precision[i * d..(i + 1) * d]
                        .iter()
                        .zip(&diff)
                        .map(|(p, x)| p * x)
                        .sum::<f64>()
            })
            .sum();
        best = best.min(q.max(0.0));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn points_at_their_means_have_zero_distance() {
        let features = [1.0, 2.0, 1.0, 2.0, -3.0, 0.5, -3.0, 0.5, 1.0, 2.0];
        let labels = [0, 0, 1, 1, 0];
        let p = fit_mahalanobis(&features, &labels, 2, 2).unwrap();
        assert_eq!(p.pooled_trace, 0.0);
        assert_eq!(p.shrinkage, SHRINKAGE);
        assert_eq!(mahalanobis_distance(&[1.0, 2.0], &p).unwrap(), 0.0);
        assert_eq!(mahalanobis_distance(&[-3.0, 0.5], &p).unwrap(), 0.0);
        let q = fit_mahalanobis(&[0.0, 0.0, 1.0, 1.0, 4.0, 4.0, 5.0, 6.0], &[0, 0, 1, 1], 2, 2).unwrap();
        assert!(mahalanobis_distance(&q.means[1], &q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn euclidean_case() {
        let params = MahalanobisParams {
            dim: 2,
            means: vec![vec![0.0, 0.0]],
            precision: vec![1.0, 0.0, 0.0, 1.0],
            pooled_trace: 2.0,
            shrinkage: 0.0,
        };
        assert_eq!(mahalanobis_distance(&[3.0, 4.0], &params).unwrap(), 25.0);
        assert!(mahalanobis_distance(&[3.0], &params).is_err());
    }

    #[test]
    fn isotropic_precision_is_recovered() {
        let mut rng = SeededRng::new(5);
        let (n, d, sigma) = (10_000, 4, 0.5);
        let features: Vec<f64> = (0..n * d).map(|_| sigma * rng.normal()).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let p = fit_mahalanobis(&features, &labels, 2, d).unwrap();
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 / (sigma * sigma) } else { 0.0 };
                assert!((p.precision[i * d + j] - target).abs() < 0.1 * 4.0, "{i},{j}");
            }
            assert!((p.precision[i * d + i] * sigma * sigma - 1.0).abs() < 0.1);
        }
        for i in 0..d {
            for j in 0..d {
                assert!((p.precision[i * d + j] - p.precision[j * d + i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_thin_classes() {
        let err = fit_mahalanobis(&[0.0, 1.0, 2.0], &[0, 0, 1], 2, 1).unwrap_err();
        assert!(matches!(err, UqError::TooFewSamples { class: 1, count: 1 }));
        assert!(fit_mahalanobis(&[0.0; 4], &[0, 0], 1, 3).is_err());
    }

    #[test]
    fn duplicate_means_and_relabeling_do_not_change_distances() {
        let mut rng = SeededRng::new(8);
        let features: Vec<f64> = (0..60 * 3).map(|_| rng.normal()).collect();
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let p = fit_mahalanobis(&features, &labels, 3, 3).unwrap();
        let mut q = p.clone();
        q.means.reverse();
        q.means.push(q.means[0].clone());
        let z = [0.3, -1.2, 2.0];
        assert_eq!(
            mahalanobis_distance(&z, &p).unwrap(),
            mahalanobis_distance(&z, &q).unwrap()
        );
    }
}
