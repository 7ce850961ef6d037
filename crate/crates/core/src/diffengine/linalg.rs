//! Small dense linear algebra for `d ≤ 3` row-major square matrices.

use alloc::vec;
use alloc::vec::Vec;

use super::engine::Engine;

/// Determinant by cofactor expansion.
pub fn determinant<E: Engine>(e: &mut E, m: &[E::Scalar], dim: usize) -> E::Scalar {
    debug_assert_eq!(m.len(), dim * dim);
    match dim {
        1 => m[0],
        2 => det2(e, m[0], m[1], m[2], m[3]),
        3 => {
            let c0 = det2(e, m[4], m[5], m[7], m[8]);
            let c1 = det2(e, m[5], m[3], m[8], m[6]);
            let c2 = det2(e, m[3], m[4], m[6], m[7]);
            e.dot(&[m[0], m[1], m[2]], &[c0, c1, c2])
        }
        _ => panic!("determinant: unsupported dimension {dim}"),
    }
}

/// `a·d − b·c`
fn det2<E: Engine>(e: &mut E, a: E::Scalar, b: E::Scalar, c: E::Scalar, d: E::Scalar) -> E::Scalar {
    let bc = e.mul(b, c);
    let ad = e.mul(a, d);
    e.sub(ad, bc)
}

/// Closed-form inverse `adj(M)/det(M)`, recorded as elementary operations.
///
/// Returns the determinant alongside the inverse so callers can reject
/// near-singular matrices before using it.
pub fn cofactor_inverse<E: Engine>(
    e: &mut E,
    m: &[E::Scalar],
    dim: usize,
) -> (E::Scalar, Vec<E::Scalar>) {
    let det = determinant(e, m, dim);
    let adj: Vec<E::Scalar> = match dim {
        1 => vec![e.constant(1.0)],
        2 => {
            let nb = e.neg(m[1]);
            let nc = e.neg(m[2]);
            vec![m[3], nb, nc, m[0]]
        }
        3 => {
            let at = |r: usize, c: usize| m[r * 3 + c];
            // adj[i][j] = cofactor[j][i]
            let mut adj = Vec::with_capacity(9);
            for i in 0..3 {
                for j in 0..3 {
                    // cofactor (j, i): rows ≠ j, cols ≠ i, cyclic ordering folds in the sign
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    adj.push(det2(e, at(r0, c0), at(r0, c1), at(r1, c0), at(r1, c1)));
                }
            }
            adj
        }
        _ => panic!("cofactor_inverse: unsupported dimension {dim}"),
    };
    let inv = adj.into_iter().map(|a| e.div(a, det)).collect();
    (det, inv)
}

/// `M·v`
pub fn mat_vec<E: Engine>(e: &mut E, m: &[E::Scalar], v: &[E::Scalar]) -> Vec<E::Scalar> {
    let dim = v.len();
    (0..dim).map(|i| e.dot(&m[i * dim..(i + 1) * dim], v)).collect()
}

/// Determinant of a plain matrix.
pub fn det(m: &[f64], dim: usize) -> f64 {
    determinant(&mut super::Plain, m, dim)
}

/// Solves `M·x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot is exactly zero.
pub fn solve(m: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(m.len(), n * n);
    let mut a = m.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::super::Plain;
    use super::*;

    fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn cofactor_inverse_is_inverse() {
        let cases: [(usize, Vec<f64>); 3] = [
            (1, vec![4.0]),
            (2, vec![2.0, 1.0, -0.5, 3.0]),
            (3, vec![2.0, -1.0, 0.3, 0.4, 1.5, -0.2, 0.1, 0.7, 1.1]),
        ];
        for (n, m) in cases {
            let (d, inv) = cofactor_inverse(&mut Plain, &m, n);
            assert!((d - det(&m, n)).abs() < 1e-14);
            let id = matmul(&m, &inv, n);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((id[i * n + j] - want).abs() < 1e-14, "{n}: {id:?}");
                }
            }
        }
    }

    #[test]
    fn determinant_3x3() {
        let m = [1.0, 2.0, 3.0, 0.0, 1.0, 4.0, 5.0, 6.0, 0.0];
        assert_eq!(det(&m, 3), 1.0);
    }

    #[test]
    fn diagonal_solve() {
        assert_eq!(solve(&[2.0, 0.0, 0.0, 4.0], &[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn solve_needs_pivoting() {
        let x = solve(&[0.0, 1.0, 1.0, 0.0], &[3.0, 5.0]).unwrap();
        assert_eq!(x, vec![5.0, 3.0]);
        assert!(solve(&[0.0, 0.0, 1.0, 0.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn solve_agrees_with_cofactor_inverse() {
        let m = [2.0, -1.0, 0.3, 0.4, 1.5, -0.2, 0.1, 0.7, 1.1];
        let b = [0.5, -2.0, 1.0];
        let x = solve(&m, &b).unwrap();
        let (_, inv) = cofactor_inverse(&mut Plain, &m, 3);
        let y = mat_vec(&mut Plain, &inv, &b);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-14);
        }
    }
}
