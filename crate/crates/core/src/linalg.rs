//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Largest singular value. Zero for empty matrices.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Mininorm `m(A) = inf_{|v|=1} |Av|`, the smallest singular value over the
/// input space. Returns zero when `A` has fewer rows than columns.
pub fn mininorm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    m.singular_values().min()
}

pub fn unit(v: &DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n == 0.0 {
        v.clone()
    } else {
        v / n
    }
}

/// Modified Gram-Schmidt of `candidates` against the orthonormal set `against`.
/// Candidates whose residual falls below `drop_tol` (relative to their norm)
/// are skipped.
pub fn gram_schmidt(
    candidates: &[DVector<f64>],
    against: &[DVector<f64>],
    drop_tol: f64,
) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = against.to_vec();
    let start = basis.len();
    for c in candidates {
        let scale = c.norm();
        if scale == 0.0 {
            continue;
        }
        let mut r = c.clone();
        // two passes keep orthogonality at the 1e-15 level
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&r);
                r.axpy(-p, b, 1.0);
            }
        }
        let n = r.norm();
        if n > drop_tol * scale {
            basis.push(r / n);
        }
    }
    basis.split_off(start)
}

/// Deterministic orthonormal basis of the orthogonal complement of `dir`.
///
/// Standard basis vectors are tried in order of increasing overlap with
/// `dir`; ties keep their natural order.
pub fn orthonormal_complement(dir: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = dir.len();
    let e = unit(dir);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| e[a].abs().partial_cmp(&e[b].abs()).unwrap());
    let candidates: Vec<DVector<f64>> = order
        .into_iter()
        .map(|i| {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            v
        })
        .collect();
    let mut basis = gram_schmidt(&candidates, &[e], 1e-8);
    basis.truncate(d.saturating_sub(1));
    basis
}

/// Orthonormal basis (as columns) of the column span of `m`, with the sign of
/// each column fixed so that R has a non-negative diagonal.
pub fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    if k == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k.min(q.ncols()) {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q.columns(0, k).into_owned()
}

pub fn columns_to_matrix(cols: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

pub fn matrix_columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..m.ncols()).map(|j| m.column(j).into_owned()).collect()
}

/// Orthogonal projector onto the span of the orthonormal columns `q`.
pub fn projector(q: &DMatrix<f64>) -> DMatrix<f64> {
    q * q.transpose()
}

/// Matrix from row-major nested vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Largest principal-angle sine between two column spans (orthonormal columns
/// not required). Zero when the spans coincide.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_columns(a);
    let qb = orthonormal_columns(b);
    let resid = &qa - projector(&qb) * &qa;
    op_norm(&resid)
}

/// Serde adapters: vectors as plain arrays, matrices as row-major nested arrays.
pub mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}

pub mod serde_vecs {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let v = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(DVector::from_vec).collect())
    }
}

pub mod serde_mat {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }
}

pub mod serde_mats {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let all: Vec<Vec<Vec<f64>>> = m.iter().map(super::matrix_to_rows).collect();
        all.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| {
                super::matrix_from_rows(rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_of_axis_keeps_natural_order() {
        let e3 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let basis = orthonormal_complement(&e3);
        assert_eq!(basis.len(), 2);
        assert!((basis[0][0] - 1.0).abs() < 1e-15);
        assert!((basis[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn complement_is_orthonormal() {
        let dir = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.0]);
        let basis = orthonormal_complement(&dir);
        assert_eq!(basis.len(), 3);
        for (i, a) in basis.iter().enumerate() {
            assert!(a.dot(&dir).abs() < 1e-12);
            for (j, b) in basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a.dot(b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mininorm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.5]));
        assert!((mininorm(&m) - 0.5).abs() < 1e-14);
        assert!((op_norm(&m) - 3.0).abs() < 1e-14);
    }
}
