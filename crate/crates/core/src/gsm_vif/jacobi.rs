//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.

const MAX_SWEEPS: usize = 64;

/// Eigenpairs of a symmetric `N x N` matrix. `vectors[i][j]` is component `i`
/// of eigenvector `j`, so columns pair with `values`.
#[derive(Clone, Debug)]
pub struct SymEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[f64; N]; N],
    pub sweeps: usize,
}

fn off_diagonal_norm<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    let mut acc = 0.0;
    for p in 0..N {
        for q in p + 1..N {
            acc += 2.0 * a[p][q] * a[p][q];
        }
    }
    acc.sqrt()
}

/// Diagonalizes `a` (only the symmetric part is meaningful) by cyclic sweeps
/// of plane rotations until the off-diagonal Frobenius norm falls below
/// `rel_tol * |trace|`. Eigenvalues are returned sorted descending.
pub fn jacobi_eigen<const N: usize>(mut a: [[f64; N]; N], rel_tol: f64) -> SymEigen<N> {
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = (0..N).map(|i| a[i][i]).sum::<f64>().abs();
    let tol = rel_tol * scale;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off == 0.0 || off < tol {
            break;
        }
        sweeps += 1;
        for p in 0..N - 1 {
            for q in p + 1..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.map(|i| a[i][i]);
    let mut vectors = [[0.0; N]; N];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..N {
            vectors[k][dst] = v[k][src];
        }
    }
    SymEigen {
        values,
        vectors,
        sweeps,
    }
}
