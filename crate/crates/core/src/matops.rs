//! Dense real-matrix primitives at desk scale.
//!
//! Everything here is unblocked and allocation-happy; the largest matrices the
//! toolkit builds are `(N-1)n` square with `N*n` around 100.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Strict threshold for "spectral radius below one".
pub const STABILITY_MARGIN: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-9;
const MAX_EIG_ITERS: usize = 10_000;

/// `rho < 1 - 1e-12`; marginal cases are not stable.
pub fn is_stable(rho: f64) -> bool {
    rho < 1.0 - STABILITY_MARGIN
}

/// Builds a matrix from row-major nested rows, rejecting ragged or non-finite input.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::dim(format!("row {i}"), ncols, row.len()));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
        }
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major nested representation, the inverse of [`from_rows`].
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Kronecker product: block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = b.shape();
    let mut out = Matrix::zeros(a.nrows() * p, a.ncols() * q);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * p, j * q), (p, q));
            block.copy_from(&(b * aij));
        }
    }
    out
}

/// Induced 1-norm: the largest absolute column sum.
pub fn induced_one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Vector 1-norm.
pub fn l1(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(
            format!("{what} must be square"),
            format!("{0}x{0}", m.nrows()),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Largest eigenvalue modulus via a real Schur decomposition.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    spectral_radius_named(m, "matrix")
}

/// As [`spectral_radius`], naming the matrix in any diagnostic.
pub fn spectral_radius_named(m: &Matrix, name: &str) -> Result<f64> {
    require_square(m, name)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite entries")));
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, MAX_EIG_ITERS)
        .ok_or_else(|| Error::Numeric(format!("eigensolver did not converge on {name}")))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

fn require_symmetric(m: &Matrix) -> Result<()> {
    require_square(m, "symmetric matrix")?;
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * m.norm() {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (||M - M^T|| = {asym:e})"
        )));
    }
    Ok(())
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigvals(m: &Matrix) -> Result<Vec<f64>> {
    Ok(sym_eigen(m)?.0)
}

/// Ascending eigenvalues with matching orthonormal eigenvectors as columns.
pub fn sym_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    require_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, MAX_EIG_ITERS)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Numerical rank with singular-value threshold `1e-9 * sigma_max`.
pub fn rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Block-diagonal `diag(d)`.
pub fn diag(d: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(d))
}
