//! Sparse normal equations of a sliding window and their solution.
//!
//! Unknowns are ordered `[d varpi_1, d xi_2, d varpi_2, ..., d xi_K, d varpi_K,
//! d zeta_1, ..., d zeta_M]`. The first pose is held fixed.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, SMatrix, Vector3};

use crate::error::EstimationError;
use crate::estimator::prior::{Matrix12, Vector12};

pub type Matrix12x3 = SMatrix<f64, 12, 3>;

#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub n_knots: usize,
    pub n_landmarks: usize,
    /// Full 12x12 diagonal blocks per knot, gauge rows included.
    pub knot_diag: Vec<Matrix12>,
    /// `knot_off[k]` couples knot `k + 1` (rows) with knot `k` (columns).
    pub knot_off: Vec<Matrix12>,
    pub knot_rhs: Vec<Vector12>,
    pub landmark_diag: Vec<Matrix3<f64>>,
    pub landmark_rhs: Vec<Vector3<f64>>,
    /// Knot-landmark coupling keyed by `(knot, landmark)`.
    pub cross: BTreeMap<(usize, usize), Matrix12x3>,
}

impl NormalEquations {
    pub fn new(n_knots: usize, n_landmarks: usize) -> Self {
        Self {
            n_knots,
            n_landmarks,
            knot_diag: vec![Matrix12::zeros(); n_knots],
            knot_off: vec![Matrix12::zeros(); n_knots.saturating_sub(1)],
            knot_rhs: vec![Vector12::zeros(); n_knots],
            landmark_diag: vec![Matrix3::zeros(); n_landmarks],
            landmark_rhs: vec![Vector3::zeros(); n_landmarks],
            cross: BTreeMap::new(),
        }
    }

    pub fn knot_dim(&self) -> usize {
        (12 * self.n_knots).saturating_sub(6)
    }

    pub fn dim(&self) -> usize {
        self.knot_dim() + 3 * self.n_landmarks
    }

    fn knot_offset(k: usize) -> (usize, usize) {
        // (first kept row inside the 12-block, global offset of that row)
        if k == 0 {
            (6, 0)
        } else {
            (0, 12 * k - 6)
        }
    }

    fn block_size(k: usize) -> usize {
        if k == 0 {
            6
        } else {
            12
        }
    }

    /// Assembled dense system `A d = b` in the documented ordering.
    pub fn dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let nk = self.knot_dim();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for k in 0..self.n_knots {
            let (skip, off) = Self::knot_offset(k);
            let s = Self::block_size(k);
            a.view_mut((off, off), (s, s))
                .copy_from(&self.knot_diag[k].view((skip, skip), (s, s)));
            b.rows_mut(off, s).copy_from(&self.knot_rhs[k].rows(skip, s));
            if k + 1 < self.n_knots {
                let (_, off1) = Self::knot_offset(k + 1);
                let blk = self.knot_off[k].view((0, skip), (12, s));
                a.view_mut((off1, off), (12, s)).copy_from(&blk);
                a.view_mut((off, off1), (s, 12)).copy_from(&blk.transpose());
            }
        }
        for j in 0..self.n_landmarks {
            let o = nk + 3 * j;
            a.view_mut((o, o), (3, 3)).copy_from(&self.landmark_diag[j]);
            b.rows_mut(o, 3).copy_from(&self.landmark_rhs[j]);
        }
        for (&(k, j), c) in &self.cross {
            let (skip, off) = Self::knot_offset(k);
            let s = Self::block_size(k);
            let o = nk + 3 * j;
            let blk = c.view((skip, 0), (s, 3));
            a.view_mut((off, o), (s, 3)).copy_from(&blk);
            a.view_mut((o, off), (3, s)).copy_from(&blk.transpose());
        }
        (a, b)
    }

    /// Solves `A d = b` by a block-tridiagonal Cholesky on the knots and a
    /// Schur complement onto the landmarks. Falls back to a dense LU solve if
    /// the structured factorisation breaks down.
    pub fn solve(&self) -> Result<DVector<f64>, EstimationError> {
        if self.n_knots == 0 {
            return Err(EstimationError::InsufficientData("no knots".into()));
        }
        match self.solve_structured() {
            Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
            _ => {
                log::debug!("structured factorisation failed; using dense solve");
                self.solve_dense()
            }
        }
    }

    pub fn solve_dense(&self) -> Result<DVector<f64>, EstimationError> {
        let (a, b) = self.dense();
        let scale = a.amax();
        if let Some(ch) = Cholesky::new(a.clone()) {
            let x = ch.solve(&b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        let lu = a.lu();
        let x = lu.solve(&b).ok_or(EstimationError::SingularNormalMatrix { condition: f64::INFINITY })?;
        if !x.iter().all(|v| v.is_finite()) || scale == 0.0 {
            return Err(EstimationError::SingularNormalMatrix { condition: f64::INFINITY });
        }
        Ok(x)
    }

    fn solve_structured(&self) -> Option<DVector<f64>> {
        let kn = self.n_knots;
        let nk = self.knot_dim();
        let nl = 3 * self.n_landmarks;
        let diag = |k: usize| -> DMatrix<f64> {
            let (skip, _) = Self::knot_offset(k);
            let s = Self::block_size(k);
            DMatrix::from(self.knot_diag[k].view((skip, skip), (s, s)))
        };
        // Block Cholesky A_kk = L L^T with L block lower bidiagonal.
        let mut chol: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(kn);
        let mut w: Vec<DMatrix<f64>> = Vec::with_capacity(kn);
        chol.push(Cholesky::new(diag(0))?);
        w.push(DMatrix::zeros(0, 0));
        for k in 1..kn {
            let (skip, _) = Self::knot_offset(k - 1);
            let s = Self::block_size(k - 1);
            let b = DMatrix::from(self.knot_off[k - 1].view((0, skip), (12, s)));
            // W = B L_{k-1}^{-T}
            let wk = chol[k - 1].l().solve_lower_triangular(&b.transpose())?.transpose();
            let d = diag(k) - &wk * wk.transpose();
            chol.push(Cholesky::new(d)?);
            w.push(wk);
        }
        let offsets: Vec<usize> = (0..kn).map(|k| Self::knot_offset(k).1).collect();
        let solve_knots = |rhs: &DMatrix<f64>| -> Option<DMatrix<f64>> {
            let cols = rhs.ncols();
            let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(kn);
            for k in 0..kn {
                let s = Self::block_size(k);
                let mut r = rhs.view((offsets[k], 0), (s, cols)).into_owned();
                if k > 0 {
                    r -= &w[k] * &y[k - 1];
                }
                y.push(chol[k].l().solve_lower_triangular(&r)?);
            }
            let mut x = DMatrix::zeros(nk, cols);
            let mut next: Option<DMatrix<f64>> = None;
            for k in (0..kn).rev() {
                let mut r = y[k].clone();
                if let Some(xn) = &next {
                    r -= w[k + 1].transpose() * xn;
                }
                let xk = chol[k].l().transpose().solve_upper_triangular(&r)?;
                x.view_mut((offsets[k], 0), (xk.nrows(), cols)).copy_from(&xk);
                next = Some(xk);
            }
            Some(x)
        };

        let mut bx = DMatrix::zeros(nk, 1);
        for k in 0..kn {
            let (skip, off) = Self::knot_offset(k);
            let s = Self::block_size(k);
            bx.view_mut((off, 0), (s, 1)).copy_from(&self.knot_rhs[k].rows(skip, s));
        }
        let y = solve_knots(&bx)?;
        if nl == 0 {
            return Some(DVector::from_column_slice(y.as_slice()));
        }
        let mut akl = DMatrix::zeros(nk, nl);
        for (&(k, j), c) in &self.cross {
            let (skip, off) = Self::knot_offset(k);
            let s = Self::block_size(k);
            akl.view_mut((off, 3 * j), (s, 3)).copy_from(&c.view((skip, 0), (s, 3)));
        }
        let x = solve_knots(&akl)?;
        let mut s = DMatrix::zeros(nl, nl);
        let mut bl = DVector::zeros(nl);
        for j in 0..self.n_landmarks {
            s.view_mut((3 * j, 3 * j), (3, 3)).copy_from(&self.landmark_diag[j]);
            bl.rows_mut(3 * j, 3).copy_from(&self.landmark_rhs[j]);
        }
        s -= akl.transpose() * &x;
        let r = bl - akl.transpose() * &y;
        let dl = match Cholesky::new(s.clone()) {
            Some(c) => c.solve(&r),
            None => s.lu().solve(&r)?,
        };
        let dx = y - x * &dl;
        let mut out = DVector::zeros(nk + nl);
        out.rows_mut(0, nk).copy_from(&dx.column(0));
        out.rows_mut(nk, nl).copy_from(&dl);
        Some(out)
    }
}
