//! Dense real linear algebra primitives.
//!
//! Everything here is a pure function of its inputs. Singular values come
//! from `nalgebra`'s SVD; eigenvalues from its real Schur decomposition after
//! a diagonal balancing pass.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values `α_1 ≥ … ≥ α_d ≥ 0` of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularValueProfile {
    values: Vec<f64>,
}

impl SingularValueProfile {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn largest(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Natural logarithms of the singular values, same order.
    pub fn logs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.ln()).collect()
    }
}

/// A strictly increasing set of indices labelling a basis vector of the
/// exterior power. Indices are zero-based here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSubset(pub Vec<usize>);

/// All `k`-subsets of `0..d` in lexicographic order.
pub fn subsets(d: usize, k: usize) -> Vec<IndexSubset> {
    let mut out = Vec::new();
    if k > d {
        return out;
    }
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(IndexSubset(current.clone()));
        // advance the rightmost index that still has room
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < d - k + i {
                current[i] += 1;
                for j in i + 1..k {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Descending singular values of any matrix (length `min(rows, cols)`).
pub fn singular_values_rect(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = m.singular_values().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

pub fn singular_values(m: &Matrix) -> Result<SingularValueProfile> {
    check_square(m)?;
    check_finite(m)?;
    Ok(SingularValueProfile {
        values: singular_values_rect(m),
    })
}

/// Euclidean operator norm, i.e. the largest singular value.
pub fn operator_norm(m: &Matrix) -> Result<f64> {
    check_finite(m)?;
    Ok(singular_values_rect(m).first().copied().unwrap_or(0.0))
}

/// The `k`-th exterior power in the lexicographic basis of `k`-subsets.
///
/// Entry `(I, J)` is the minor of `m` with rows `I` and columns `J`.
pub fn exterior_power(m: &Matrix, k: usize) -> Result<Matrix> {
    check_square(m)?;
    check_finite(m)?;
    let d = m.nrows();
    if k > d {
        return Err(Error::DegreeOutOfRange { k, dim: d });
    }
    if k == 0 {
        return Ok(Matrix::identity(1, 1));
    }
    let labels = subsets(d, k);
    let size = labels.len();
    let mut out = Matrix::zeros(size, size);
    let mut sub = Matrix::zeros(k, k);
    for (a, rows) in labels.iter().enumerate() {
        for (b, cols) in labels.iter().enumerate() {
            for (i, &r) in rows.0.iter().enumerate() {
                for (j, &c) in cols.0.iter().enumerate() {
                    sub[(i, j)] = m[(r, c)];
                }
            }
            out[(a, b)] = sub.determinant();
        }
    }
    Ok(out)
}

/// Diagonal similarity balancing (Parlett–Reinsch, radix 2). Eigenvalues are
/// unchanged; only the conditioning of the eigenproblem improves.
fn balance(m: &mut Matrix) {
    let n = m.nrows();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut c_scaled = c;
            while c_scaled < r / radix {
                c_scaled *= radix;
                f *= radix;
            }
            while c_scaled >= r * radix {
                c_scaled /= radix;
                f /= radix;
            }
            if (c_scaled + r / f) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Eigenvalues as `(re, im)` pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    check_square(m)?;
    check_finite(m)?;
    let mut work = m.clone();
    balance(&mut work);
    let schur = nalgebra::linalg::Schur::try_new(work, f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure)?;
    let eig = schur.complex_eigenvalues();
    let out: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    if out.iter().any(|(re, im)| !re.is_finite() || !im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok(out)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|(re, im)| re.hypot(*im))
        .fold(0.0, f64::max))
}

/// Orthonormal basis of the span of `vectors`, by twice-iterated Gram–Schmidt.
///
/// A vector is dropped when its residual after projection is at most
/// `tol` times its own norm.
pub fn orthonormalize(vectors: &[Vector], tol: f64) -> Vec<Vector> {
    let mut basis: Vec<Vector> = Vec::new();
    for v in vectors {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let r = w.norm();
        if r > tol * norm {
            basis.push(w / r);
        }
    }
    basis
}

/// Orthonormal basis of the column span of `m`, returned as columns.
pub fn orthonormal_columns(m: &Matrix, tol: f64) -> Matrix {
    let cols: Vec<Vector> = m.column_iter().map(|c| c.into_owned()).collect();
    columns_to_matrix(m.nrows(), &orthonormalize(&cols, tol))
}

pub fn columns_to_matrix(rows: usize, cols: &[Vector]) -> Matrix {
    let mut out = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Orthonormal basis of the orthogonal complement of the (orthonormal)
/// columns of `q`.
pub fn orthogonal_complement(q: &Matrix, tol: f64) -> Matrix {
    let d = q.nrows();
    let mut vectors: Vec<Vector> = q.column_iter().map(|c| c.into_owned()).collect();
    let m = vectors.len();
    for i in 0..d {
        let mut e = Vector::zeros(d);
        e[i] = 1.0;
        vectors.push(e);
    }
    let basis = orthonormalize(&vectors, tol.max(1e-6));
    columns_to_matrix(d, &basis[m.min(basis.len())..])
}

/// Sine of the largest principal angle between two subspaces given by
/// orthonormal column bases. Returns 1 when the dimensions differ.
pub fn subspace_distance(q1: &Matrix, q2: &Matrix) -> f64 {
    if q1.ncols() != q2.ncols() || q1.nrows() != q2.nrows() {
        return 1.0;
    }
    if q1.ncols() == 0 {
        return 0.0;
    }
    let residual = q2 - q1 * (q1.transpose() * q2);
    let s = singular_values_rect(&residual).first().copied().unwrap_or(0.0);
    s.min(1.0)
}

/// Largest principal angle in radians.
pub fn largest_principal_angle(q1: &Matrix, q2: &Matrix) -> f64 {
    subspace_distance(q1, q2).asin()
}

/// Orthonormal basis of the numerical null space: right singular vectors
/// whose singular value is at most `tol * max(1, α_1)`.
pub fn null_space(m: &Matrix, tol: f64) -> Matrix {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = match svd.v_t {
        Some(v) => v,
        None => return Matrix::zeros(n, 0),
    };
    let scale = svd.singular_values.iter().copied().fold(1.0, f64::max);
    let mut cols = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol * scale {
            cols.push(v_t.row(i).transpose().into_owned());
        }
    }
    // rank-deficient wide matrices leave extra null directions unlisted
    if m.nrows() < n {
        let rowspace: Vec<Vector> = (0..v_t.nrows())
            .filter(|&i| svd.singular_values[i] > tol * scale)
            .map(|i| v_t.row(i).transpose().into_owned())
            .collect();
        let q = columns_to_matrix(n, &rowspace);
        return orthogonal_complement(&q, 1e-9);
    }
    columns_to_matrix(n, &cols)
}

/// Right singular vectors for the `count` smallest singular values.
pub fn smallest_singular_vectors(m: &Matrix, count: usize) -> Matrix {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let cols: Vec<Vector> = order
        .iter()
        .take(count)
        .map(|&i| v_t.row(i).transpose().into_owned())
        .collect();
    columns_to_matrix(n, &cols)
}

/// Row-major nested vectors, the serialization layout used by reports.
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Schema("ragged matrix rows".into()));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

/// Least-squares slope of `ys` against `xs`; zero for fewer than two points.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys).take(n) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 2.0 * x).collect();
        assert!((least_squares_slope(&xs, &ys) + 2.0).abs() < 1e-14);
        assert_eq!(least_squares_slope(&[1.0], &[3.0]), 0.0);
    }
    use crate::random::{gaussian_matrix, rng_from_seed};

    fn diag(values: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_vec(values.to_vec()))
    }

    #[test]
    fn singular_values_of_diagonal_and_identity() {
        let sv = singular_values(&diag(&[3.0, -2.0, 1.0])).unwrap();
        assert_eq!(sv.values().len(), 3);
        for (a, b) in sv.values().iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let sv = singular_values(&Matrix::identity(4, 4)).unwrap();
        assert!(sv.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn singular_values_reject_rectangular() {
        let m = Matrix::zeros(2, 3);
        assert_eq!(
            singular_values(&m),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        );
    }

    #[test]
    fn product_of_singular_values_is_abs_det() {
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let m = gaussian_matrix(&mut rng, 5, 5);
            let prod: f64 = singular_values(&m).unwrap().values().iter().product();
            let det = m.determinant().abs();
            assert!((prod - det).abs() <= 1e-9 * det);
        }
    }

    #[test]
    fn exterior_power_small_cases() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let e = exterior_power(&m, 2).unwrap();
        assert_eq!(e.shape(), (1, 1));
        assert!((e[(0, 0)] - (-2.0)).abs() < 1e-14);

        let e = exterior_power(&diag(&[3.0, 2.0, 1.0]), 2).unwrap();
        let expected = diag(&[6.0, 3.0, 2.0]);
        assert!((e - expected).norm() < 1e-13);

        let e0 = exterior_power(&m, 0).unwrap();
        assert_eq!(e0, Matrix::identity(1, 1));
        assert_eq!(
            exterior_power(&m, 3),
            Err(Error::DegreeOutOfRange { k: 3, dim: 2 })
        );
    }

    #[test]
    fn exterior_norm_is_product_of_top_singular_values() {
        let mut rng = rng_from_seed(2);
        for _ in 0..20 {
            let m = gaussian_matrix(&mut rng, 4, 4);
            let sv = singular_values(&m).unwrap();
            for k in 1..=4 {
                let norm = operator_norm(&exterior_power(&m, k).unwrap()).unwrap();
                let prod: f64 = sv.values()[..k].iter().product();
                assert!((norm - prod).abs() <= 1e-9 * prod);
            }
        }
    }

    #[test]
    fn operator_norm_cases() {
        assert_eq!(operator_norm(&diag(&[3.0, 2.0, 1.0])).unwrap(), 3.0);
        assert_eq!(operator_norm(&Matrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_cases() {
        let m = Matrix::from_row_slice(2, 2, &[16.0, 0.0, 0.0, 1.0]);
        assert!((spectral_radius(&m).unwrap() - 16.0).abs() < 1e-12);
        let m = Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 4.0]);
        assert!((spectral_radius(&m).unwrap() - 4.0).abs() < 1e-12);
        let t: f64 = 0.7;
        let r = Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!((spectral_radius(&r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_badly_scaled_matrix() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1e8, 1e-8, 0.0]);
        assert!((spectral_radius(&m).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthonormalize_cases() {
        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let basis = orthonormalize(&[e1.clone(), e1.clone() * 2.0, e2.clone()], 1e-9);
        assert_eq!(basis.len(), 2);
        assert!((basis[0].clone() - e1.clone()).norm() < 1e-15);
        assert!((basis[1].clone() - e2.clone()).norm() < 1e-15);

        assert!(orthonormalize(&[], 1e-9).is_empty());

        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let w = Vector::from_vec(vec![-3.0, 0.5, 1.0]);
        let near = &v + &w * 1e-15;
        assert_eq!(orthonormalize(&[v, near], 1e-9).len(), 1);
    }

    #[test]
    fn subsets_are_lexicographic() {
        let s = subsets(4, 2);
        let flat: Vec<Vec<usize>> = s.into_iter().map(|x| x.0).collect();
        assert_eq!(
            flat,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(subsets(3, 0), vec![IndexSubset(vec![])]);
        assert_eq!(binomial(6, 3), 20);
    }

    #[test]
    fn principal_angle_detects_equal_spans() {
        let q1 = Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let q2 = Matrix::from_row_slice(3, 1, &[-1.0, 0.0, 0.0]);
        assert!(largest_principal_angle(&q1, &q2) < 1e-15);
        let q3 = Matrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert!((largest_principal_angle(&q1, &q3) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
