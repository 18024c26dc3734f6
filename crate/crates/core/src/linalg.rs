//! Small dense symmetric eigenproblems.

use crate::error::{Error, Result};

/// Off-diagonal magnitude below which the Jacobi sweep stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs sorted by descending eigenvalue; `vectors[i]` pairs with `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations on a symmetric matrix given as rows.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Result<SymmetricEigen> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (matrix[i][j] - matrix[j][i]).abs() > 1e-12 * (1.0 + matrix[i][j].abs()) {
                return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    // v columns accumulate the rotations
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    for _ in 0..MAX_SWEEPS {
        let off = (0..n).flat_map(|p| ((p + 1)..n).map(move |q| (p, q))).map(|(p, q)| a[p][q].abs()).fold(0.0, f64::max);
        if off < JACOBI_TOLERANCE {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < JACOBI_TOLERANCE * 1e-3 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| a[i][i]).collect(),
        vectors: order.iter().map(|&c| v.iter().map(|row| row[c]).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let e = jacobi_eigen(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0]);
    }

    #[test]
    fn two_by_two() {
        let e = jacobi_eigen(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let v = &e.vectors[0];
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(jacobi_eigen(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(jacobi_eigen(&[vec![1.0, 2.0]]).is_err());
    }
}
