//! Small dense helpers on top of nalgebra: full right null spaces and
//! span comparisons.

use nalgebra::{DMatrix, DVector};

/// Singular values and the full `n x n` right singular basis of `a`.
/// Rows are zero-padded when `a` is wide so that every right singular
/// vector is returned. Pairs are sorted by descending singular value.
pub fn full_svd(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let (m, n) = a.shape();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut pairs: Vec<(f64, DVector<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, v_t.row(i).transpose()))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.into_iter().unzip()
}

/// Number of singular values above `tol * sigma_max`.
pub fn numeric_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Orthonormal basis of the null space of `a` (relative tolerance `tol`).
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return (0..n).map(|i| unit(n, i)).collect();
    }
    let (sv, vecs) = full_svd(a);
    let max = sv.first().copied().unwrap_or(0.0);
    sv.iter()
        .zip(vecs)
        .filter(|(&s, _)| s <= tol * max || max == 0.0)
        .map(|(_, v)| v)
        .collect()
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Orthonormalizes `vectors` (modified Gram-Schmidt with one
/// re-orthogonalization pass), dropping vectors already in the span.
pub fn orthonormalize(vectors: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        if let Some(q) = orthogonal_part(&basis, v, tol) {
            basis.push(q);
        }
    }
    basis
}

/// Normalized component of `v` orthogonal to the orthonormal `basis`, or
/// `None` when the remainder is below `tol` relative to `|v|`.
pub fn orthogonal_part(basis: &[DVector<f64>], v: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let norm = v.norm();
    if norm == 0.0 {
        return None;
    }
    let mut r = v / norm;
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
    }
    let rn = r.norm();
    (rn > tol).then(|| r / rn)
}

/// Largest residual of projecting each vector of `vs` onto the span of
/// the orthonormal basis `onto`, relative to the vector norm.
pub fn projection_residual(vs: &[DVector<f64>], onto: &[DVector<f64>]) -> f64 {
    vs.iter()
        .map(|v| {
            let mut r = v.clone();
            for q in onto {
                let c = q.dot(v);
                r.axpy(-c, q, 1.0);
            }
            r.norm() / v.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}
