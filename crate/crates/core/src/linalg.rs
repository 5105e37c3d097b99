//! Small dense symmetric eigen-decomposition (cyclic Jacobi).
//!
//! Every solver here works on matrices of size 8 or smaller, where Jacobi
//! rotations are fast, deterministic and accurate to a few ulps relative to
//! the matrix norm.

use nalgebra::{SMatrix, SVector};

const MAX_SWEEPS: usize = 60;

/// Eigenvalues in ascending order with matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen<const N: usize> {
    pub values: SVector<f64, N>,
    pub vectors: SMatrix<f64, N, N>,
}

impl<const N: usize> SymEigen<N> {
    /// Decomposes the symmetric part of `m`.
    pub fn new(m: &SMatrix<f64, N, N>) -> Self {
        let mut a = (m + m.transpose()) * 0.5;
        let mut v = SMatrix::<f64, N, N>::identity();

        for _ in 0..MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..N {
                for q in (p + 1)..N {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off == 0.0 {
                break;
            }
            let mut rotated = false;
            for p in 0..N {
                for q in (p + 1)..N {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    // Negligible against both diagonal entries: drop it.
                    let g = 100.0 * apq.abs();
                    if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                        a[(p, q)] = 0.0;
                        a[(q, p)] = 0.0;
                        continue;
                    }
                    rotated = true;
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..N {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..N {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    for k in 0..N {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let mut order: [usize; N] = std::array::from_fn(|i| i);
        order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
        let values = SVector::<f64, N>::from_fn(|i, _| a[(order[i], order[i])]);
        let vectors = SMatrix::<f64, N, N>::from_fn(|r, c| v[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[N - 1]
    }

    pub fn min_vector(&self) -> SVector<f64, N> {
        self.vectors.column(0).into_owned()
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    SymEigen::new(m).min()
}

/// Smallest eigenvalue of a symmetric 2×2 matrix in closed form.
pub fn min_eigenvalue_2(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let half = 0.5 * (a - c);
    let r = half.hypot(b);
    // Cancellation-free: the smaller root via the product when mean > 0.
    if mean > 0.0 {
        let big = mean + r;
        if big == 0.0 {
            0.0
        } else {
            (a * c - b * b) / big
        }
    } else {
        mean - r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn sym8(entries: &[f64]) -> SMatrix<f64, 8, 8> {
        let m = SMatrix::<f64, 8, 8>::from_iterator(entries.iter().copied());
        (m + m.transpose()) * 0.5
    }

    #[test]
    fn diagonal_is_sorted() {
        let m = SMatrix::<f64, 4, 4>::from_diagonal(&SVector::from([3.0, -1.0, 2.0, 0.0]));
        let e = SymEigen::new(&m);
        assert_eq!(e.values.as_slice(), &[-1.0, 0.0, 2.0, 3.0]);
        assert_eq!(e.vectors.column(0).amax(), 1.0);
    }

    #[test]
    fn closed_form_2x2() {
        for (a, b, c) in [
            (1.0, 0.0, 2.0),
            (2.0, 1.0, 2.0),
            (1e-9, 1e-5, 1.0),
            (-3.0, 4.0, 1.0),
        ] {
            let m = SMatrix::<f64, 2, 2>::new(a, b, b, c);
            let reference = SymmetricEigen::new(m).eigenvalues.min();
            assert!((min_eigenvalue_2(a, b, c) - reference).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn matches_nalgebra_reference(entries in prop::collection::vec(-10.0f64..10.0, 64)) {
            let m = sym8(&entries);
            let ours = SymEigen::new(&m);
            let mut reference: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (a, b) in ours.values.iter().zip(&reference) {
                prop_assert!((a - b).abs() < 1e-11);
            }
            let recon = ours.vectors * SMatrix::<f64, 8, 8>::from_diagonal(&ours.values) * ours.vectors.transpose();
            prop_assert!((recon - m).amax() < 1e-11);
            let ortho = ours.vectors.transpose() * ours.vectors;
            prop_assert!((ortho - SMatrix::<f64, 8, 8>::identity()).amax() < 1e-13);
        }
    }

    #[test]
    fn rank_deficient_psd() {
        let b = SMatrix::<f64, 8, 3>::from_fn(|r, c| (((r + 1) * (c + 1)) as f64).sin());
        let m = b * b.transpose();
        let e = SymEigen::new(&m);
        for i in 0..5 {
            assert!(e.values[i].abs() < 1e-14 * e.max());
        }
        assert!(e.values[5] > 1e-3);
    }
}
