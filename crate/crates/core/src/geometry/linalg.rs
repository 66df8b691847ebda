use crate::scalar::Scalar;

/// Systems whose determinant, relative to the Hadamard bound (product of the
/// row norms), falls at or below this are treated as singular.
pub(crate) const RELATIVE_DET_EPS: f64 = 1e-10;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when the system is singular under the relative-determinant
/// test.
pub(crate) fn solve<T: Scalar, const N: usize>(
    mut a: [[T; N]; N],
    mut b: [T; N],
) -> Option<[T; N]> {
    let bound = hadamard_bound(&a);
    if !(bound > T::zero()) || !bound.is_finite() {
        return None;
    }

    let mut det = T::one();
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col] == T::zero() {
            return None;
        }
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
            det = -det;
        }
        let p = a[col][col];
        det = det * p;
        for row in col + 1..N {
            let factor = a[row][col] / p;
            if factor == T::zero() {
                continue;
            }
            for k in col..N {
                let v = a[col][k];
                a[row][k] = a[row][k] - factor * v;
            }
            b[row] = b[row] - factor * b[col];
        }
    }

    if !(det.abs() / bound > T::lit(RELATIVE_DET_EPS)) {
        return None;
    }

    let mut x = [T::zero(); N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for k in row + 1..N {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub(crate) fn hadamard_bound<T: Scalar, const N: usize>(a: &[[T; N]; N]) -> T {
    a.iter().fold(T::one(), |acc, row| {
        acc * row.iter().fold(T::zero(), |s, &v| s + v * v).sqrt()
    })
}

pub(crate) fn mat3_mul<T: Scalar>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat3_det<T: Scalar>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse through the adjugate; `None` under the relative-determinant test.
pub(crate) fn mat3_inverse<T: Scalar>(m: &[[T; 3]; 3]) -> Option<[[T; 3]; 3]> {
    let det = mat3_det(m);
    let bound = hadamard_bound(m);
    if !(bound > T::zero()) || !(det.abs() / bound > T::lit(RELATIVE_DET_EPS)) {
        return None;
    }
    let inv_det = T::one() / det;
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    Some([
        [c(1, 1, 2, 2) * inv_det, -c(0, 1, 2, 2) * inv_det, c(0, 1, 1, 2) * inv_det],
        [-c(1, 0, 2, 2) * inv_det, c(0, 0, 2, 2) * inv_det, -c(0, 0, 1, 2) * inv_det],
        [c(1, 0, 2, 1) * inv_det, -c(0, 0, 2, 1) * inv_det, c(0, 0, 1, 1) * inv_det],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a: [[f64; 3]; 3] = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        let b = [8.0, -11.0, -3.0];
        let x = solve(a, b).unwrap();
        for (got, want) in x.iter().zip([2.0, 3.0, -1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = [[1.0, 2.0], [2.0, 4.0]];
        assert!(solve(a, [1.0, 2.0]).is_none());
        let z = [[0.0_f64; 3]; 3];
        assert!(solve(z, [0.0; 3]).is_none());
    }

    #[test]
    fn inverse_roundtrip() {
        let m: [[f64; 3]; 3] = [[2.0, 0.5, 3.0], [0.1, 1.5, -2.0], [0.001, 0.002, 1.0]];
        let inv = mat3_inverse(&m).unwrap();
        let id = mat3_mul(&m, &inv);
        for (i, row) in id.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }
}
