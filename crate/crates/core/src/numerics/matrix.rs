//! Dense row-major matrix with the small set of operations the estimation
//! stack needs: checked algebra, Cholesky factorization with a bounded SPD
//! repair, a cyclic Jacobi symmetric eigensolver, and the spectral matrix
//! exponential used by heat-kernel diffusion.
//!
//! Every shape-combining operation length-checks its operands and returns
//! [`Error::LengthMismatch`] instead of panicking; plain index access panics
//! on out-of-range indices like any slice.

use crate::error::{Error, Result};

/// Off-diagonal convergence tolerance of the Jacobi eigensolver, relative to
/// the Frobenius norm of the input (floored at 1.0 for tiny matrices).
const JACOBI_TOL: f64 = 1e-12;

/// Sweep cap of the Jacobi eigensolver; convergence is quadratic, so a
/// well-posed symmetric problem converges in far fewer sweeps.
const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative diagonal jitter applied once when a Cholesky factorization fails
/// on a matrix that is SPD up to roundoff.
const CHOLESKY_JITTER: f64 = 1e-12;

/// Dense row-major `f64` matrix. Dimensions are fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Square matrix with `d` on the diagonal.
    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::length("ragged rows in Matrix::from_rows"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    /// Build element-wise from a closure over `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols, "matrix index out of range");
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.rows && j < self.cols, "matrix index out of range");
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.rows, "matrix row out of range");
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Flat row-major view of the data.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Diagonal as a vector (square matrices).
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_check(other, "add")?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_check(other, "sub")?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::length(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let base = i * out.cols;
                for j in 0..other.cols {
                    out.data[base + j] += a * orow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::length(format!(
                "matvec {}x{} by len {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect())
    }

    /// `(A + Aᵀ)/2`; errors when not square.
    pub fn symmetrized(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::length("symmetrize of non-square matrix"));
        }
        let mut s = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                s.set(i, j, 0.5 * (self.get(i, j) + self.get(j, i)));
            }
        }
        Ok(s)
    }

    /// Largest absolute deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Sub-matrix picking the given row and column indices, in order.
    pub fn select(&self, row_idx: &[usize], col_idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(row_idx.len(), col_idx.len());
        for (i, &r) in row_idx.iter().enumerate() {
            for (j, &c) in col_idx.iter().enumerate() {
                out.set(i, j, self.get(r, c));
            }
        }
        out
    }

    /// Copy `block` into `self` with its upper-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) -> Result<()> {
        if r0 + block.rows > self.rows || c0 + block.cols > self.cols {
            return Err(Error::length("set_block exceeds matrix bounds"));
        }
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(r0 + i, c0 + j, block.get(i, j));
            }
        }
        Ok(())
    }

    /// Rank-one accumulation `self += w · a bᵀ`, used by sigma-point sums.
    pub fn add_scaled_outer(&mut self, w: f64, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != self.rows || b.len() != self.cols {
            return Err(Error::length("add_scaled_outer shape"));
        }
        for i in 0..self.rows {
            let wa = w * a[i];
            if wa == 0.0 {
                continue;
            }
            let base = i * self.cols;
            for j in 0..self.cols {
                self.data[base + j] += wa * b[j];
            }
        }
        Ok(())
    }

    fn zip_check(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::length(format!(
                "{op} {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = a`.
///
/// The input is symmetrized first. If the plain factorization hits a
/// non-positive pivot, a single diagonal jitter of `1e-12 · trace/n` is added
/// and the factorization retried once; a second failure reports
/// [`Error::NotSpd`]. The one bounded repair keeps genuinely indefinite
/// inputs diagnosable instead of silently regularizing them.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let s = a.symmetrized()?;
    if !s.is_finite() {
        return Err(Error::NonFinite {
            context: "cholesky input".into(),
        });
    }
    match try_cholesky(&s) {
        Some(l) => Ok(l),
        None => {
            let n = s.rows() as f64;
            let jitter = CHOLESKY_JITTER * s.trace().abs() / n.max(1.0);
            if jitter > 0.0 {
                let mut repaired = s.clone();
                for i in 0..s.rows() {
                    repaired.add_at(i, i, jitter);
                }
                if let Some(l) = try_cholesky(&repaired) {
                    return Ok(l);
                }
            }
            Err(Error::NotSpd {
                context: format!("cholesky of {}x{} matrix", s.rows(), s.cols()),
            })
        }
    }
}

/// [`cholesky`] without the diagonal repair: any non-positive pivot reports
/// [`Error::NotSpd`] immediately. Use this where a singular input is a
/// structural defect to surface (e.g. a rank-deficient normal matrix), not a
/// rounding artifact to absorb.
pub fn cholesky_strict(a: &Matrix) -> Result<Matrix> {
    let s = a.symmetrized()?;
    if !s.is_finite() {
        return Err(Error::NonFinite {
            context: "cholesky input".into(),
        });
    }
    try_cholesky(&s).ok_or_else(|| Error::NotSpd {
        context: format!("strict cholesky of {}x{} matrix", s.rows(), s.cols()),
    })
}

fn try_cholesky(s: &Matrix) -> Option<Matrix> {
    let n = s.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = s.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` given the Cholesky factor `L` of `A` (forward then
/// backward substitution).
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    if b.len() != n {
        return Err(Error::length("cholesky_solve rhs length"));
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Ok(x)
}

/// Solve `A X = B` column-wise given the Cholesky factor of `A`.
pub fn cholesky_solve_matrix(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != l.rows() {
        return Err(Error::length("cholesky_solve_matrix rhs rows"));
    }
    let mut out = Matrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let col: Vec<f64> = (0..b.rows()).map(|i| b.get(i, j)).collect();
        let x = cholesky_solve(l, &col)?;
        for i in 0..b.rows() {
            out.set(i, j, x[i]);
        }
    }
    Ok(out)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Convergence is declared when the off-diagonal
/// Frobenius norm drops below `1e-12 · max(1, ‖A‖_F)`; more than 100 sweeps
/// reports [`Error::NonConvergence`].
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let mut m = a.symmetrized()?;
    if !m.is_finite() {
        return Err(Error::NonFinite {
            context: "sym_eig input".into(),
        });
    }
    let n = m.rows();
    let mut v = Matrix::identity(n);
    if n <= 1 {
        return Ok((m.diagonal(), v));
    }
    let tol = JACOBI_TOL * m.frobenius_norm().max(1.0);

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&m) <= tol {
            return Ok(sorted_eig(m.diagonal(), v));
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let sign = if theta < 0.0 { -1.0 } else { 1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;

                m.add_at(p, p, -h);
                m.add_at(q, q, h);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = m.get(i, p);
                        let aiq = m.get(i, q);
                        let new_p = aip - s * (aiq + tau * aip);
                        let new_q = aiq + s * (aip - tau * aiq);
                        m.set(i, p, new_p);
                        m.set(p, i, new_p);
                        m.set(i, q, new_q);
                        m.set(q, i, new_q);
                    }
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, vip - s * (viq + tau * vip));
                    v.set(i, q, viq + s * (vip - tau * viq));
                }
            }
        }
    }
    if off_diagonal_norm(&m) <= tol {
        return Ok(sorted_eig(m.diagonal(), v));
    }
    Err(Error::NonConvergence {
        context: format!("jacobi eigensolver on {n}x{n} matrix"),
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            let v = m.get(p, q);
            sum += 2.0 * v * v;
        }
    }
    sum.sqrt()
}

fn sorted_eig(vals: Vec<f64>, vecs: Matrix) -> (Vec<f64>, Matrix) {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            sorted_vecs.set(r, new_col, vecs.get(r, old_col));
        }
    }
    (sorted_vals, sorted_vecs)
}

/// Spectral evaluation of `exp(−β A)` for symmetric `A` and `β ≥ 0`.
///
/// The result is explicitly symmetrized so downstream consumers (heat-kernel
/// scores) see an exactly symmetric operator.
pub fn matrix_exp_neg(a: &Matrix, beta: f64) -> Result<Matrix> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("matrix_exp_neg beta {beta} < 0")));
    }
    if a.asymmetry() > 1e-9 * (1.0 + a.max_abs()) {
        return Err(Error::invalid("matrix_exp_neg input not symmetric"));
    }
    let (vals, vecs) = sym_eig(a)?;
    let n = vals.len();
    let mut scaled = Matrix::zeros(n, n);
    for j in 0..n {
        let e = (-beta * vals[j]).exp();
        for i in 0..n {
            scaled.set(i, j, vecs.get(i, j) * e);
        }
    }
    scaled.matmul(&vecs.transpose())?.symmetrized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    #[test]
    fn cholesky_matches_hand_factorization() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert_close(l.get(0, 0), 2.0, 1e-15);
        assert_close(l.get(1, 0), 1.0, 1e-15);
        assert_close(l.get(0, 1), 0.0, 0.0);
        assert_close(l.get(1, 1), 2.0_f64.sqrt(), 1e-15);
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let l = cholesky(&Matrix::identity(5)).unwrap();
        assert_eq!(l, Matrix::identity(5));
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        // Eigenvalues 3 and -1: indefinite regardless of jitter.
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn cholesky_repairs_spd_up_to_roundoff() {
        // Symmetric with a zero eigenvalue: plain factorization fails on the
        // zero pivot, the single jitter makes it factorizable.
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let rec = l.matmul(&l.transpose()).unwrap();
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = Matrix::from_rows(&[
            vec![6.0, 2.0, 1.0],
            vec![2.0, 5.0, 2.0],
            vec![1.0, 2.0, 4.0],
        ])
        .unwrap();
        let l = cholesky(&a).unwrap();
        let x_true = vec![1.0, -2.0, 3.0];
        let b = a.matvec(&x_true).unwrap();
        let x = cholesky_solve(&l, &b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_close(*xi, *ti, 1e-12);
        }
    }

    #[test]
    fn sym_eig_path_graph_laplacian() {
        let l = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let (vals, vecs) = sym_eig(&l).unwrap();
        assert_close(vals[0], 0.0, 1e-12);
        assert_close(vals[1], 2.0, 1e-12);
        // Orthonormal columns.
        let vtv = vecs.transpose().matmul(&vecs).unwrap();
        assert!(vtv.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn sym_eig_reconstructs_input() {
        let a = Matrix::from_rows(&[
            vec![2.0, -0.3, 0.5],
            vec![-0.3, 1.0, 0.2],
            vec![0.5, 0.2, 3.0],
        ])
        .unwrap();
        let (vals, vecs) = sym_eig(&a).unwrap();
        let mut rec = Matrix::zeros(3, 3);
        for j in 0..3 {
            let col: Vec<f64> = (0..3).map(|i| vecs.get(i, j)).collect();
            rec.add_scaled_outer(vals[j], &col, &col).unwrap();
        }
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-9);
        assert_close(vals.iter().sum::<f64>(), a.trace(), 1e-9);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sym_eig_scalar_matrix() {
        let a = Matrix::from_rows(&[vec![7.5]]).unwrap();
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert_eq!(vals, vec![7.5]);
        assert_eq!(vecs.get(0, 0), 1.0);
    }

    #[test]
    fn matrix_exp_neg_beta_zero_is_identity() {
        let l = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let h = matrix_exp_neg(&l, 0.0).unwrap();
        assert!(h.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn matrix_exp_neg_scalar_zero_matrix() {
        let a = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let h = matrix_exp_neg(&a, 3.0).unwrap();
        assert_close(h.get(0, 0), 1.0, 1e-15);
    }

    #[test]
    fn matrix_exp_neg_long_time_limit_on_two_node_laplacian() {
        // exp(-β L) for the two-node path converges to the averaging
        // operator with every entry 1/2.
        let l = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let h = matrix_exp_neg(&l, 50.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_close(h.get(i, j), 0.5, 1e-12);
            }
        }
    }

    #[test]
    fn matrix_exp_neg_conserves_mass_for_laplacian() {
        // Rows of exp(-β L) sum to one because L annihilates constants.
        let l = Matrix::from_rows(&[
            vec![2.0, -1.5, -0.5],
            vec![-1.5, 2.5, -1.0],
            vec![-0.5, -1.0, 1.5],
        ])
        .unwrap();
        let h = matrix_exp_neg(&l, 0.9).unwrap();
        for i in 0..3 {
            let sum: f64 = (0..3).map(|j| h.get(i, j)).sum();
            assert_close(sum, 1.0, 1e-10);
        }
    }

    #[test]
    fn ops_reject_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(3, 2);
        assert!(matches!(a.add(&b), Err(Error::LengthMismatch { .. })));
        assert!(matches!(a.matvec(&[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(a.matmul(&b).is_ok());
        assert!(matches!(b.matmul(&b), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn select_extracts_blocks_in_order() {
        let a = Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let s = a.select(&[1, 3], &[0, 2]);
        assert_eq!(s.rows(), 2);
        assert_eq!(s.get(0, 0), 4.0);
        assert_eq!(s.get(0, 1), 6.0);
        assert_eq!(s.get(1, 0), 12.0);
        assert_eq!(s.get(1, 1), 14.0);
    }
}
