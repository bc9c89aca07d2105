//! Dense complex linear algebra helpers: gap-checked null spaces,
//! incremental QR reduction, Gram-Schmidt ranges and Hermitian spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Singular values below this count as zero.
pub const ZERO_TOL: f64 = 1e-7;
/// The first nonzero singular value must exceed this.
pub const GAP_TOL: f64 = 1e-3;

/// Thresholds for reading an integer rank off a singular spectrum.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankTolerances {
    pub zero: f64,
    pub gap: f64,
}

impl Default for RankTolerances {
    fn default() -> Self {
        RankTolerances { zero: ZERO_TOL, gap: GAP_TOL }
    }
}

impl RankTolerances {
    pub fn new(zero: f64, gap: f64) -> Result<Self> {
        if !(zero > 0.0 && gap > zero) {
            return Err(Error::Spec(format!("rank tolerances need 0 < zero < gap, got {zero} and {gap}")));
        }
        Ok(RankTolerances { zero, gap })
    }
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |U U^dagger - 1|`, or infinity for a non-square matrix.
pub fn unitarity_defect(u: &CMat) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    max_abs(&(u * u.adjoint() - CMat::identity(n, n)))
}

/// Null space of a linear map with a certified singular-value gap.
#[derive(Clone, Debug)]
pub struct NullSpace {
    pub dim: usize,
    /// Orthonormal basis vectors of the kernel.
    pub basis: Vec<CVec>,
    /// Largest singular value counted as zero (0 if the kernel is trivial).
    pub largest_null: f64,
    /// Smallest singular value counted as nonzero (infinity if none).
    pub smallest_nonnull: f64,
}

/// Accumulates rows of a tall matrix, keeping only a triangular factor
/// with the same kernel and singular values.
pub struct RowReducer {
    cols: usize,
    r: CMat,
    pending: Vec<C64>,
    pending_rows: usize,
}

impl RowReducer {
    const CHUNK: usize = 512;

    pub fn new(cols: usize) -> Self {
        RowReducer { cols, r: CMat::zeros(0, cols), pending: Vec::new(), pending_rows: 0 }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn push_row(&mut self, row: &[C64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.pending.extend_from_slice(row);
        self.pending_rows += 1;
        if self.pending_rows >= Self::CHUNK.max(2 * self.cols) {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.pending_rows == 0 {
            return;
        }
        let extra = CMat::from_row_slice(self.pending_rows, self.cols, &self.pending);
        let stacked = if self.r.nrows() == 0 {
            extra
        } else {
            let mut s = CMat::zeros(self.r.nrows() + extra.nrows(), self.cols);
            s.rows_mut(0, self.r.nrows()).copy_from(&self.r);
            s.rows_mut(self.r.nrows(), extra.nrows()).copy_from(&extra);
            s
        };
        self.pending.clear();
        self.pending_rows = 0;
        self.r = if stacked.nrows() > self.cols { stacked.qr().r() } else { stacked };
    }

    /// A matrix with the same kernel and singular values as all pushed rows.
    pub fn finish(mut self) -> CMat {
        self.flush();
        self.r
    }
}

/// Kernel of `a`, counting singular values below `zero_tol` and requiring the
/// next one to exceed `gap_tol`.
pub fn null_space(a: &CMat, zero_tol: f64, gap_tol: f64) -> Result<NullSpace> {
    let n = a.ncols();
    if n == 0 {
        return Ok(NullSpace { dim: 0, basis: vec![], largest_null: 0.0, smallest_nonnull: f64::INFINITY });
    }
    let square = if a.nrows() > n {
        a.clone().qr().r()
    } else if a.nrows() < n {
        let mut p = CMat::zeros(n, n);
        p.rows_mut(0, a.nrows()).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = square.svd(false, true);
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::numeric("SVD did not return right vectors", f64::NAN))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let dim = sv.iter().take_while(|s| **s < zero_tol).count();
    let largest_null = if dim > 0 { sv[dim - 1] } else { 0.0 };
    let smallest_nonnull = sv.get(dim).copied().unwrap_or(f64::INFINITY);
    if smallest_nonnull <= gap_tol {
        return Err(Error::GapViolation { value: smallest_nonnull, zero_tol, gap_tol });
    }
    let basis = order[..dim]
        .iter()
        .map(|&i| CVec::from_iterator(n, vt.row(i).iter().map(|z| z.conj())))
        .collect();
    Ok(NullSpace { dim, basis, largest_null, smallest_nonnull })
}

/// Orthonormal basis of the column span of `m`, taking columns in order and
/// keeping those whose residual norm exceeds `tol` (modified Gram-Schmidt,
/// applied twice).
pub fn range_basis(m: &CMat, tol: f64) -> Vec<CVec> {
    let mut basis: Vec<CVec> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: CVec = m.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&v);
                v.axpy(-p, b, c(1.0));
            }
        }
        let norm = v.norm();
        if norm > tol {
            basis.push(v / c(norm));
        }
    }
    basis
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and
/// matching orthonormal eigenvectors (as columns).
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    if n == 0 {
        return (vec![], CMat::zeros(0, 0));
    }
    let sym = (h + h.adjoint()) * c(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Rounds a float known to be an integer, failing if it is not within `tol`.
pub fn round_checked(x: f64, tol: f64) -> Result<i64> {
    let r = x.round();
    if (x - r).abs() > tol {
        return Err(Error::numeric(format!("{x} is not an integer"), (x - r).abs()));
    }
    Ok(r as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_must_be_ordered_and_positive() {
        assert!(RankTolerances::new(1e-8, 1e-3).is_ok());
        assert!(RankTolerances::new(1e-3, 1e-3).is_err());
        assert!(RankTolerances::new(0.0, 1e-3).is_err());
        assert!(RankTolerances::new(1e-2, 1e-4).is_err());
    }

    fn mat(rows: usize, cols: usize, v: &[f64]) -> CMat {
        CMat::from_row_slice(rows, cols, &v.iter().map(|x| c(*x)).collect::<Vec<_>>())
    }

    #[test]
    fn kernel_dimensions() {
        let a = mat(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let ns = null_space(&a, ZERO_TOL, GAP_TOL).unwrap();
        assert_eq!(ns.dim, 1);
        assert!((ns.basis[0][2].norm() - 1.0).abs() < 1e-12);
        let tall = mat(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, -1.0, -1.0]);
        assert_eq!(null_space(&tall, ZERO_TOL, GAP_TOL).unwrap().dim, 1);
        let full = CMat::identity(3, 3);
        assert_eq!(null_space(&full, ZERO_TOL, GAP_TOL).unwrap().dim, 0);
        assert_eq!(null_space(&CMat::zeros(0, 4), ZERO_TOL, GAP_TOL).unwrap().dim, 4);
    }

    #[test]
    fn gap_window_is_enforced() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1e-5]);
        assert!(matches!(null_space(&a, ZERO_TOL, GAP_TOL), Err(Error::GapViolation { .. })));
    }

    #[test]
    fn reducer_preserves_kernel() {
        let mut red = RowReducer::new(3);
        for i in 0..2000 {
            let t = i as f64 * 0.01;
            red.push_row(&[c(t.sin()), c(t.cos()), c(t.sin() + t.cos())]);
        }
        let r = red.finish();
        assert!(r.nrows() <= 3 + 2000);
        let ns = null_space(&r, ZERO_TOL, GAP_TOL).unwrap();
        assert_eq!(ns.dim, 1);
        let v = &ns.basis[0];
        assert!((v[0] + v[2]).norm() < 1e-10 && (v[1] + v[2]).norm() < 1e-10);
    }

    #[test]
    fn range_of_projector() {
        let p = mat(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        let b = range_basis(&p, 1e-8);
        assert_eq!(b.len(), 2);
        assert!(b[0].dotc(&b[1]).norm() < 1e-14);
    }

    #[test]
    fn eigen_sorted() {
        let h = mat(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = hermitian_eigen(&h);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        assert!((vecs.column(1)[0].norm() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_checked(2.0000001, 1e-4).unwrap(), 2);
        assert!(round_checked(2.4, 1e-4).is_err());
    }
}
