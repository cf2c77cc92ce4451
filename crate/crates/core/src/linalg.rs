//! Small dense linear-algebra helpers shared by the design and regression code.
//!
//! Everything here works on `nalgebra` dynamic matrices. The matrices involved are
//! tiny (dimension rarely above 20), so the routines favour robustness over speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used to decide the numerical rank of a set of vectors.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalues below this floor (relative to `max(1, largest eigenvalue)`) are
/// treated as zero when restricting a Gram matrix to its range.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Tolerance on the orthogonal residual when checking span membership.
pub const SPAN_TOL: f64 = 1e-8;

/// Orthonormal basis for the span of a set of vectors, together with the indices
/// of the vectors that were selected as pivots while building it.
#[derive(Debug, Clone)]
pub struct SpanBasis {
    /// `d x r` matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Indices of the pivot vectors, in selection order. `pivots.len() == rank()`.
    pub pivots: Vec<usize>,
}

impl SpanBasis {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Coordinates of `v` in the basis, `U^T v`.
    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(v)
    }
}

/// Rank-revealing Gram-Schmidt with column pivoting.
///
/// At every step the vector with the largest residual norm is added to the basis
/// (ties go to the lowest index). Stops once the largest residual drops below
/// `tol * max(1, largest initial norm)`.
pub fn span_basis(vectors: &[DVector<f64>], tol: f64) -> SpanBasis {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut residuals: Vec<DVector<f64>> = vectors.to_vec();
    let scale = vectors.iter().map(|v| v.norm()).fold(1.0_f64, f64::max);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut pivots = Vec::new();

    while cols.len() < dim {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in residuals.iter().enumerate() {
            let n = r.norm();
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((i, n));
            }
        }
        let Some((idx, norm)) = best else { break };
        if norm <= tol * scale {
            break;
        }
        // Re-orthogonalise the pivot against the basis once more for stability.
        let mut q = residuals[idx].clone();
        for c in &cols {
            let proj = c.dot(&q);
            q.axpy(-proj, c, 1.0);
        }
        let qn = q.norm();
        if qn <= tol * scale {
            break;
        }
        q /= qn;
        for r in residuals.iter_mut() {
            let proj = q.dot(r);
            r.axpy(-proj, &q, 1.0);
        }
        cols.push(q);
        pivots.push(idx);
    }

    let basis = if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    SpanBasis { basis, pivots }
}

/// Eigendecomposition of a symmetric positive-semidefinite matrix restricted to its
/// range. Directions with eigenvalue below the floor are dropped.
#[derive(Debug, Clone)]
pub struct RangeEigen {
    /// `d x r` orthonormal eigenvectors spanning the range.
    pub vectors: DMatrix<f64>,
    /// The `r` retained (strictly positive) eigenvalues.
    pub values: DVector<f64>,
}

impl RangeEigen {
    pub fn new(gram: &DMatrix<f64>) -> Self {
        let dim = gram.nrows();
        let sym = (gram + gram.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let floor = EIGEN_FLOOR * top.max(1.0);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > floor)
            .collect();
        let vectors = if kept.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(
                &kept
                    .iter()
                    .map(|&i| eig.eigenvectors.column(i).into_owned())
                    .collect::<Vec<_>>(),
            )
        };
        let values = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eig.eigenvalues[i]));
        RangeEigen { vectors, values }
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// Coordinates of `a` in the eigenbasis, after checking that `a` lies in the range.
    fn range_coords(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.vectors.tr_mul(a);
        let residual = (a - &self.vectors * &c).norm();
        if residual > SPAN_TOL * a.norm().max(1.0) {
            return Err(Error::OutOfSpan { residual });
        }
        Ok(c)
    }

    /// `<a, M^+ a>`.
    pub fn pinv_quad(&self, a: &DVector<f64>) -> Result<f64> {
        let c = self.range_coords(a)?;
        Ok(c.iter().zip(self.values.iter()).map(|(ci, l)| ci * ci / l).sum())
    }

    /// `M^+ a`.
    pub fn pinv_apply(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.range_coords(a)?;
        let scaled = c.component_div(&self.values);
        Ok(&self.vectors * scaled)
    }

    /// `(M^+)^{1/2} a`, the inverse square root on the range.
    pub fn inv_sqrt_apply(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.range_coords(a)?;
        let scaled = c.component_div(&self.values.map(f64::sqrt));
        Ok(&self.vectors * scaled)
    }

    /// `M^{1/2} w` for `w` in the range.
    pub fn sqrt_apply(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.range_coords(w)?;
        let scaled = c.component_mul(&self.values.map(f64::sqrt));
        Ok(&self.vectors * scaled)
    }
}

/// Sum of outer products `sum_i a_i a_i^T`.
pub fn gram(vectors: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for a in vectors {
        m.ger(1.0, a, a, 1.0);
    }
    m
}

/// Power-iteration convergence tolerance for [`top_eigenpair`].
pub const POWER_TOL: f64 = 1e-8;

/// Leading eigenpair of a symmetric positive-semidefinite matrix.
///
/// Runs power iteration for at most `10 * p` steps and falls back to a full
/// symmetric eigendecomposition when the residual has not dropped below tolerance.
pub fn top_eigenpair(sym: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let p = sym.nrows();
    if p == 0 {
        return (0.0, DVector::zeros(0));
    }
    let scale = sym.norm();
    if scale == 0.0 {
        let mut v = DVector::zeros(p);
        v[0] = 1.0;
        return (0.0, v);
    }

    // Start from the heaviest column, plus a small all-ones component so the start
    // vector is not orthogonal to the top eigenspace by accident.
    let mut start_col = 0;
    let mut start_norm = -1.0;
    for j in 0..p {
        let n = sym.column(j).norm();
        if n > start_norm {
            start_norm = n;
            start_col = j;
        }
    }
    let mut v: DVector<f64> = sym.column(start_col).into_owned() + DVector::from_element(p, 1e-3 * scale);
    v /= v.norm();

    for _ in 0..10 * p {
        let w = sym * &v;
        let mu = v.dot(&w);
        let residual = (&w - &v * mu).norm();
        if residual <= POWER_TOL * scale {
            return (mu.max(0.0), v);
        }
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
    }

    let eig = sym.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..p {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (
        eig.eigenvalues[best].max(0.0),
        eig.eigenvectors.column(best).into_owned(),
    )
}
