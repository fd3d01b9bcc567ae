//! Small dense symmetric helpers (d ≤ 8 in practice).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = eigen_extremes(m);
    lo.abs().max(hi.abs())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `u · M u`
pub fn quad(m: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(m * u))
}

/// Factor `F` with `F Fᵀ = cov`. Eigenvalues in `[−tol·scale, 0)` are clipped to zero;
/// anything more negative is an error.
pub fn psd_factor(cov: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(cov));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    if min < 0.0 {
        log::debug!("clipping eigenvalue {min:e} of a block covariance to 0");
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Deterministic grid of unit directions in `ℝ^d`.
///
/// d = 1 gives `[1]`; d = 2 spaces `count` angles over the half circle; d = 3 uses a
/// Fibonacci sphere; higher d uses the coordinate axes followed by normalized Gaussian
/// draws from a fixed stream.
pub fn direction_grid(d: usize, count: usize) -> Vec<DVector<f64>> {
    let count = count.max(1);
    match d {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / count as f64;
                DVector::from_row_slice(&[a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let y = if count == 1 {
                        0.0
                    } else {
                        1.0 - 2.0 * k as f64 / (count - 1) as f64
                    };
                    let r = (1.0 - y * y).max(0.0).sqrt();
                    let t = golden * k as f64;
                    DVector::from_row_slice(&[r * t.cos(), y, r * t.sin()])
                })
                .collect()
        }
        _ => {
            let mut out: Vec<DVector<f64>> = (0..d.min(count))
                .map(|i| {
                    let mut e = DVector::zeros(d);
                    e[i] = 1.0;
                    e
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1e5);
            while out.len() < count {
                let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let n = v.norm();
                if n > 1e-8 {
                    out.push(v / n);
                }
            }
            out
        }
    }
}

/// Unit coordinate vector `e_i` in `ℝ^d`.
pub fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[i] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn extremes_of_diagonal() {
        let (lo, hi) = eigen_extremes(&dmatrix![1.0, 0.0; 0.0, 4.0]);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn factor_reproduces_matrix() {
        let c = dmatrix![2.0, 0.5; 0.5, 1.0];
        let f = psd_factor(&c, 1e-10).unwrap();
        assert!((&f * f.transpose() - c).abs().max() < 1e-12);
        assert!(psd_factor(&dmatrix![1.0, 0.0; 0.0, -0.1], 1e-10).is_err());
    }

    #[test]
    fn grids_are_unit() {
        for d in 1..=5 {
            for u in direction_grid(d, 64) {
                assert!((u.norm() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(direction_grid(2, 64).len(), 64);
    }
}
