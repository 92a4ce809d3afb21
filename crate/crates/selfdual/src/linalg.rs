//! Small dense linear-algebra helpers: SVD-based ranks and subspaces, and a
//! generic Gauss–Jordan inverse usable with dual numbers.

use nalgebra::DMatrix;

use crate::dual::Scalar;

/// Default relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

fn padded(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r >= c {
        m.clone()
    } else {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    }
}

fn cutoff(sv: &nalgebra::DVector<f64>, tol: f64) -> f64 {
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        f64::INFINITY
    } else {
        tol * smax
    }
}

pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let cut = cutoff(&sv, tol);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Orthonormal basis (columns) of `{v : m v = 0}`.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let c = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let svd = padded(m).svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let cut = cutoff(&svd.singular_values, tol);
    let null: Vec<usize> = (0..c)
        .filter(|&k| !(svd.singular_values[k] > cut))
        .collect();
    DMatrix::from_fn(c, null.len(), |r, k| vt[(null[k], r)])
}

/// Orthonormal basis (columns) of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let d = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let cut = cutoff(&svd.singular_values, tol);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cut)
        .collect();
    DMatrix::from_fn(d, keep.len(), |r, k| u[(r, keep[k])])
}

/// Orthonormal basis of the Euclidean orthogonal complement of `span(basis)`.
pub fn complement(basis: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    null_space(&basis.transpose(), tol)
}

/// Stack matrices side by side.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Stack matrices on top of each other.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Inverse of a row-major `n×n` matrix over any scalar type, by Gauss–Jordan
/// elimination with partial pivoting on primal values.
pub fn invert<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = T::one();
    }
    let scale = a
        .iter()
        .fold(0.0_f64, |s, v| s.max(v.value().abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| {
            m[r * n + col]
                .value()
                .abs()
                .total_cmp(&m[s * n + col].value().abs())
        })?;
        if m[piv * n + col].value().abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let p = T::one() / m[col * n + col];
        for k in 0..n {
            m[col * n + k] *= p;
            inv[col * n + k] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f.value() == 0.0 && f == T::zero() {
                continue;
            }
            for k in 0..n {
                let (mc, ic) = (m[col * n + k], inv[col * n + k]);
                m[r * n + k] -= f * mc;
                inv[r * n + k] -= f * ic;
            }
        }
    }
    Some(inv)
}

/// Row-major product of `a (n×m)` and `b (m×p)`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], n: usize, m: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * p];
    for i in 0..n {
        for k in 0..m {
            let aik = a[i * m + k];
            for j in 0..p {
                out[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = null_space(&m, RANK_TOL);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).amax() < 1e-14);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn rank_and_complement() {
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 2.0]);
        assert_eq!(rank(&b, RANK_TOL), 1);
        let c = complement(&b, RANK_TOL);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &b).amax() < 1e-14);
    }

    #[test]
    fn generic_inverse_matches_nalgebra() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert(&a, 3).unwrap();
        let prod = matmul(&a, &inv, 3, 3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - target).abs() < 1e-14);
            }
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }
}
