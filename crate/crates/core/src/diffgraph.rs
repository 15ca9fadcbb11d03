//! The directed difference operator `D` of a weight graph, solves with
//! `D^T D + c I`, and reading clusters and features off a fit.

use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{GeccoError, Result};
use crate::scalar::Scalar;
use crate::weights::{column_deviations, components, WeightGraph};

/// Above this many samples the shifted Laplacian is solved by conjugate
/// gradients instead of a dense Cholesky factor.
pub const DENSE_LIMIT: usize = 2000;

/// Lower-triangular Cholesky factor stored row-major.
#[derive(Debug)]
struct Cholesky<F> {
    n: usize,
    l: Vec<F>,
}

impl<F: Scalar> Cholesky<F> {
    fn factor(mut a: Vec<F>, n: usize) -> Result<Self> {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > F::zero()) {
                return Err(GeccoError::Numerical("matrix is not positive definite".into()));
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
            for k in j + 1..n {
                a[j * n + k] = F::zero();
            }
        }
        Ok(Cholesky { n, l: a })
    }

    fn solve_in_place(&self, b: &mut [F]) {
        let (n, l) = (self.n, &self.l);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

/// `D : R^{n x p} -> R^{|E| x p}` with row `l` equal to `U_{l1} - U_{l2}`.
///
/// Factorizations of `D^T D + c I` are cached per shift `c` and shared
/// between threads.
#[derive(Debug)]
pub struct DifferenceOperator<F> {
    n: usize,
    pairs: Vec<(usize, usize)>,
    degree: Vec<usize>,
    cache: RwLock<Vec<(F, Arc<Cholesky<F>>)>>,
}

impl<F: Scalar> Clone for DifferenceOperator<F> {
    fn clone(&self) -> Self {
        DifferenceOperator {
            n: self.n,
            pairs: self.pairs.clone(),
            degree: self.degree.clone(),
            cache: RwLock::new(self.cache.read().map(|c| c.clone()).unwrap_or_default()),
        }
    }
}

impl<F: Scalar> DifferenceOperator<F> {
    pub fn new(graph: &WeightGraph<F>) -> Self {
        Self::from_pairs(graph.n(), graph.edges().iter().map(|e| (e.i, e.j)).collect())
    }

    pub fn from_pairs(n: usize, pairs: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0; n];
        for &(a, b) in &pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        DifferenceOperator {
            n,
            pairs,
            degree,
            cache: RwLock::new(Vec::new()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Upper bound on the largest eigenvalue of `D^T D`: the maximum of
    /// `deg(i) + deg(j)` over edges.
    pub fn spectral_bound(&self) -> usize {
        self.pairs
            .iter()
            .map(|&(a, b)| self.degree[a] + self.degree[b])
            .max()
            .unwrap_or(0)
    }

    pub fn apply_d(&self, u: ArrayView2<F>) -> Result<Array2<F>> {
        if u.nrows() != self.n {
            return Err(GeccoError::Shape(format!(
                "operator has {} samples, matrix has {} rows",
                self.n,
                u.nrows()
            )));
        }
        let mut out = Array2::zeros((self.pairs.len(), u.ncols()));
        for (mut row, &(a, b)) in out.rows_mut().into_iter().zip(&self.pairs) {
            row.assign(&(&u.row(a) - &u.row(b)));
        }
        Ok(out)
    }

    pub fn apply_dt(&self, v: ArrayView2<F>) -> Result<Array2<F>> {
        if v.nrows() != self.pairs.len() {
            return Err(GeccoError::Shape(format!(
                "operator has {} edges, matrix has {} rows",
                self.pairs.len(),
                v.nrows()
            )));
        }
        let mut out = Array2::zeros((self.n, v.ncols()));
        for (row, &(a, b)) in v.rows().into_iter().zip(&self.pairs) {
            {
                let mut ra = out.row_mut(a);
                ra += &row;
            }
            let mut rb = out.row_mut(b);
            rb -= &row;
        }
        Ok(out)
    }

    /// `(D^T D + c I) x` without forming the matrix.
    fn apply_shifted(&self, c: F, x: &[F], out: &mut [F]) {
        for i in 0..self.n {
            out[i] = (F::from_usize_lossy(self.degree[i]) + c) * x[i];
        }
        for &(a, b) in &self.pairs {
            out[a] -= x[b];
            out[b] -= x[a];
        }
    }

    /// Dense `D^T D + c I`.
    pub fn shifted_laplacian(&self, c: F) -> Array2<F> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            m[[i, i]] = F::from_usize_lossy(self.degree[i]) + c;
        }
        for &(a, b) in &self.pairs {
            m[[a, b]] -= F::one();
            m[[b, a]] -= F::one();
        }
        m
    }

    fn factor(&self, c: F) -> Result<Arc<Cholesky<F>>> {
        if let Ok(cache) = self.cache.read() {
            if let Some((_, f)) = cache.iter().find(|(k, _)| *k == c) {
                return Ok(f.clone());
            }
        }
        let dense = self.shifted_laplacian(c);
        let f = Arc::new(Cholesky::factor(dense.into_raw_vec_and_offset().0, self.n)?);
        if let Ok(mut cache) = self.cache.write() {
            if !cache.iter().any(|(k, _)| *k == c) {
                cache.push((c, f.clone()));
            }
        }
        Ok(f)
    }

    fn cg_column(&self, c: F, b: &[F], x: &mut [F]) -> Result<()> {
        let n = self.n;
        let bnorm = b.iter().map(|v| *v * *v).sum::<F>().sqrt();
        if bnorm == F::zero() {
            x.iter_mut().for_each(|v| *v = F::zero());
            return Ok(());
        }
        let diag: Vec<F> = self
            .degree
            .iter()
            .map(|d| F::from_usize_lossy(*d) + c)
            .collect();
        for i in 0..n {
            x[i] = b[i] / diag[i];
        }
        let mut ax = vec![F::zero(); n];
        self.apply_shifted(c, x, &mut ax);
        let mut r: Vec<F> = (0..n).map(|i| b[i] - ax[i]).collect();
        let mut z: Vec<F> = (0..n).map(|i| r[i] / diag[i]).collect();
        let mut p = z.clone();
        let mut rz: F = r.iter().zip(&z).map(|(a, b)| *a * *b).sum();
        let tol = F::lit(1e-10).max(F::epsilon() * F::lit(8.0)) * bnorm;
        let mut ap = vec![F::zero(); n];
        for _ in 0..(10 * n).max(100) {
            let rnorm = r.iter().map(|v| *v * *v).sum::<F>().sqrt();
            if rnorm <= tol {
                return Ok(());
            }
            self.apply_shifted(c, &p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| *a * *b).sum::<F>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
                z[i] = r[i] / diag[i];
            }
            let rz_new: F = r.iter().zip(&z).map(|(a, b)| *a * *b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(GeccoError::Numerical("conjugate gradients did not converge".into()))
    }

    /// `(D^T D + c I)^{-1} B`, with a cached dense Cholesky factor for
    /// `n <= DENSE_LIMIT` and preconditioned conjugate gradients above.
    pub fn solve_shifted_laplacian(&self, c: F, b: ArrayView2<F>) -> Result<Array2<F>> {
        if !(c > F::zero()) {
            return Err(GeccoError::InvalidParameter(format!("shift must be > 0, got {c}")));
        }
        if b.nrows() != self.n {
            return Err(GeccoError::Shape(format!(
                "operator has {} samples, right-hand side has {} rows",
                self.n,
                b.nrows()
            )));
        }
        let n = self.n;
        if self.pairs.is_empty() {
            return Ok(b.mapv(|v| v / c));
        }
        // column-major work buffer so every column is a contiguous slice
        let mut cols: Vec<F> = b.t().iter().copied().collect();
        if n <= DENSE_LIMIT {
            let f = self.factor(c)?;
            cols.par_chunks_mut(n).for_each(|col| f.solve_in_place(col));
        } else {
            let results: Vec<Result<()>> = cols
                .par_chunks_mut(n)
                .map(|col| {
                    let rhs = col.to_vec();
                    self.cg_column(c, &rhs, col)
                })
                .collect();
            results.into_iter().collect::<Result<Vec<()>>>()?;
        }
        let t = Array2::from_shape_vec((b.ncols(), n), cols).expect("shape");
        Ok(t.reversed_axes().as_standard_layout().to_owned())
    }
}

/// Cluster labels from the fused differences: samples joined by an edge
/// whose row of `V` has norm at most `tol` share a cluster. Labels are
/// numbered by each cluster's smallest member.
pub fn extract_clusters<F: Scalar>(v: ArrayView2<F>, pairs: &[(usize, usize)], n: usize, tol: F) -> Result<Vec<usize>> {
    if v.nrows() != pairs.len() {
        return Err(GeccoError::Shape("one row of V per edge required".into()));
    }
    let norms = v.map_axis(Axis(1), |r| r.iter().map(|x| *x * *x).sum::<F>().sqrt());
    Ok(components(
        n,
        pairs
            .iter()
            .zip(norms.iter())
            .filter(|(_, nv)| **nv <= tol)
            .map(|(p, _)| *p),
    ))
}

/// Feature `j` of a view is selected when `||U_.j - x~_j 1||_2 > tol`.
pub fn selected_features<F: Scalar>(u: &[Array2<F>], centers: &[Array1<F>], tol: F) -> Result<Vec<Vec<bool>>> {
    if u.len() != centers.len() {
        return Err(GeccoError::Shape("one center vector per view required".into()));
    }
    u.iter()
        .zip(centers)
        .map(|(m, c)| {
            if m.ncols() != c.len() {
                return Err(GeccoError::Shape("center length differs from view width".into()));
            }
            Ok(column_deviations(m.view(), c).iter().map(|d| *d > tol).collect())
        })
        .collect()
}

pub fn num_clusters(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}
