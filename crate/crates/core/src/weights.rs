//! Fusion weights over sample pairs and feature weights for the group penalty.

use ndarray::{Array1, Array2, ArrayView2};

use crate::data::MultiViewDataset;
use crate::error::{GeccoError, Result};
use crate::loss::LossSpec;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<F> {
    pub i: usize,
    pub j: usize,
    pub w: F,
}

/// Sparse set of weighted sample pairs `(i, j)` with `i < j` and `w > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph<F> {
    n: usize,
    edges: Vec<Edge<F>>,
}

impl<F: Scalar> WeightGraph<F> {
    pub fn new(n: usize, edges: Vec<Edge<F>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(GeccoError::InvalidParameter(format!(
                    "edge ({}, {}) must satisfy i < j < n = {n}",
                    e.i, e.j
                )));
            }
            if !(e.w.is_finite() && e.w > F::zero()) {
                return Err(GeccoError::InvalidParameter(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.i, e.j, e.w
                )));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(GeccoError::InvalidParameter(format!(
                    "duplicate edge ({}, {})",
                    e.i, e.j
                )));
            }
        }
        Ok(WeightGraph { n, edges })
    }

    /// Builds a graph from triples, dropping pairs whose weight is zero.
    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = (usize, usize, F)>) -> Result<Self> {
        let edges = triples
            .into_iter()
            .filter(|(_, _, w)| *w != F::zero())
            .map(|(a, b, w)| Edge {
                i: a.min(b),
                j: a.max(b),
                w,
            })
            .collect();
        Self::new(n, edges)
    }

    /// All pairs with unit weight.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push(Edge { i, j, w: F::one() });
            }
        }
        WeightGraph { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge<F>] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weights(&self) -> Vec<F> {
        self.edges.iter().map(|e| e.w).collect()
    }

    pub fn min_weight(&self) -> Option<F> {
        self.edges.iter().map(|e| e.w).reduce(F::min)
    }

    /// Component label of every sample, canonicalized by smallest member.
    pub fn components(&self) -> Vec<usize> {
        components(self.n, self.edges.iter().map(|e| (e.i, e.j)))
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().iter().all(|c| *c == 0)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` when the two sets were distinct.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // keep the smaller index as root so labels are canonical
        if ra < rb {
            self.parent[rb] = ra;
        } else {
            self.parent[ra] = rb;
        }
        true
    }
}

/// Connected components labelled `0, 1, ...` in order of smallest member.
pub(crate) fn components(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut uf = UnionFind::new(n);
    for (a, b) in pairs {
        uf.union(a, b);
    }
    let mut id = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut next = 0;
    for i in 0..n {
        let r = uf.find(i);
        if id[r] == usize::MAX {
            id[r] = next;
            next += 1;
        }
        labels[i] = id[r];
    }
    labels
}

/// How sample dissimilarities are measured.
#[derive(Debug, Clone)]
pub enum DistanceMetric<F> {
    /// The distance matching the loss of a single view: Euclidean, `l1`,
    /// `l_q` or `l_inf` for the distance losses and `l1` for everything
    /// else (Hamming distance on binary data).
    PerLoss,
    Gower,
    /// Gower terms scaled per feature by `dev_j / max_j dev_j` within each
    /// view and by the view's null deviance `1 / pi_k`.
    WeightedGower {
        deviations: Vec<Array1<F>>,
        loss_weights: Vec<F>,
    },
}

/// `||U_.j - x~_j 1||_2` for every column.
pub fn column_deviations<F: Scalar>(u: ArrayView2<F>, centers: &Array1<F>) -> Array1<F> {
    Array1::from_shape_fn(u.ncols(), |j| {
        u.column(j)
            .iter()
            .map(|v| (*v - centers[j]) * (*v - centers[j]))
            .sum::<F>()
            .sqrt()
    })
}

fn per_loss_distance<F: Scalar>(spec: LossSpec<F>, x: ArrayView2<F>) -> Array2<F> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for k in i + 1..n {
            let (ri, rk) = (x.row(i), x.row(k));
            let diff = ri.iter().zip(rk.iter()).map(|(a, b)| (*a - *b).abs());
            let v = match spec {
                LossSpec::Euclidean => diff.map(|r| r * r).sum::<F>().sqrt(),
                LossSpec::Minkowski { q } => diff.map(|r| r.powf(q)).sum::<F>().powf(q.recip()),
                LossSpec::Chebychev => diff.fold(F::zero(), F::max),
                _ => diff.sum(),
            };
            d[[i, k]] = v;
            d[[k, i]] = v;
        }
    }
    d
}

fn feature_ranges<F: Scalar>(x: ArrayView2<F>) -> Array1<F> {
    Array1::from_shape_fn(x.ncols(), |j| {
        let c = x.column(j);
        let hi = c.fold(F::neg_infinity(), |m, v| m.max(*v));
        let lo = c.fold(F::infinity(), |m, v| m.min(*v));
        hi - lo
    })
}

/// Adds `scale_j * |x_ij - x_kj| / R_j` into `d` for every pair.
fn add_gower_terms<F: Scalar>(d: &mut Array2<F>, x: ArrayView2<F>, scale: &Array1<F>) {
    let ranges = feature_ranges(x);
    let n = x.nrows();
    let factors: Vec<F> = (0..x.ncols())
        .map(|j| {
            if ranges[j] > F::zero() {
                scale[j] / ranges[j]
            } else {
                F::zero()
            }
        })
        .collect();
    for i in 0..n {
        for k in i + 1..n {
            let mut s = F::zero();
            for (j, f) in factors.iter().enumerate() {
                if *f != F::zero() {
                    s += *f * (x[[i, j]] - x[[k, j]]).abs();
                }
            }
            d[[i, k]] += s;
            d[[k, i]] += s;
        }
    }
}

/// Symmetric `n x n` matrix of sample dissimilarities.
pub fn pairwise_distance<F: Scalar>(
    dataset: &MultiViewDataset<F>,
    metric: &DistanceMetric<F>,
) -> Result<Array2<F>> {
    let n = dataset.n();
    match metric {
        DistanceMetric::PerLoss => {
            if dataset.num_views() != 1 {
                return Err(GeccoError::InvalidParameter(
                    "per-loss distance needs exactly one view; use Gower for several".into(),
                ));
            }
            let v = dataset.view(0);
            Ok(per_loss_distance(v.loss, v.data.view()))
        }
        DistanceMetric::Gower => {
            let mut d = Array2::zeros((n, n));
            for v in dataset.views() {
                add_gower_terms(&mut d, v.data.view(), &Array1::from_elem(v.ncols(), F::one()));
            }
            let p = F::from_usize_lossy(dataset.total_features());
            d.mapv_inplace(|v| v / p);
            Ok(d)
        }
        DistanceMetric::WeightedGower {
            deviations,
            loss_weights,
        } => {
            if deviations.len() != dataset.num_views() || loss_weights.len() != dataset.num_views() {
                return Err(GeccoError::Shape("one deviation vector and loss weight per view".into()));
            }
            let mut d = Array2::zeros((n, n));
            for ((v, dev), pi) in dataset.views().iter().zip(deviations).zip(loss_weights) {
                if dev.len() != v.ncols() {
                    return Err(GeccoError::Shape("deviation length differs from view width".into()));
                }
                if !(*pi > F::zero()) {
                    return Err(GeccoError::InvalidParameter("loss weights must be positive".into()));
                }
                let max = dev.fold(F::zero(), |m, x| m.max(*x));
                if max <= F::zero() {
                    continue;
                }
                let scale = dev.mapv(|x| x / max / *pi);
                add_gower_terms(&mut d, v.data.view(), &scale);
            }
            Ok(d)
        }
    }
}

fn check_distances<F: Scalar>(d: ArrayView2<F>) -> Result<usize> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(GeccoError::Shape("distance matrix must be square".into()));
    }
    if n < 2 {
        return Err(GeccoError::InvalidData("need at least 2 samples".into()));
    }
    Ok(n)
}

/// Each sample's `k` nearest other samples, ties going to the smaller index.
fn knn_mask<F: Scalar>(d: ArrayView2<F>, k: usize) -> Vec<Vec<bool>> {
    let n = d.nrows();
    let mut mask = vec![vec![false; n]; n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            d[[i, a]]
                .partial_cmp(&d[[i, b]])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(k) {
            mask[i][j] = true;
            mask[j][i] = true;
        }
    }
    mask
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n - 1 {
        return Err(GeccoError::InvalidParameter(format!(
            "k = {k} outside [1, {}]",
            n - 1
        )));
    }
    Ok(())
}

/// `w_ij = 1{i, j kNN} exp(-phi d_ij)` with a symmetric OR neighbor rule.
pub fn knn_kernel_weights<F: Scalar>(d: ArrayView2<F>, k: usize, phi: F) -> Result<WeightGraph<F>> {
    let n = check_distances(d)?;
    check_k(k, n)?;
    if !(phi >= F::zero() && phi.is_finite()) {
        return Err(GeccoError::InvalidParameter(format!("phi must be >= 0, got {phi}")));
    }
    let mask = knn_mask(d, k);
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if mask[i][j] {
                triples.push((i, j, (-phi * d[[i, j]]).exp()));
            }
        }
    }
    WeightGraph::from_triples(n, triples)
}

/// Symmetrized stochastic-neighbor weights
/// `(p_{j|i} + p_{i|j}) / (2n)` restricted to the kNN mask.
pub fn sne_weights<F: Scalar>(d: ArrayView2<F>, k: usize, phi: F) -> Result<WeightGraph<F>> {
    let n = check_distances(d)?;
    check_k(k, n)?;
    if !(phi >= F::zero() && phi.is_finite()) {
        return Err(GeccoError::InvalidParameter(format!("phi must be >= 0, got {phi}")));
    }
    let mut cond = Array2::<F>::zeros((n, n));
    for i in 0..n {
        let dmin = (0..n)
            .filter(|&m| m != i)
            .map(|m| d[[i, m]])
            .fold(F::infinity(), F::min);
        if !dmin.is_finite() {
            return Err(GeccoError::InvalidData(format!(
                "sample {i} has no finite distance to any other sample"
            )));
        }
        let mut z = F::zero();
        for m in (0..n).filter(|&m| m != i) {
            let e = (-phi * (d[[i, m]] - dmin)).exp();
            cond[[i, m]] = e;
            z += e;
        }
        for m in 0..n {
            cond[[i, m]] /= z;
        }
    }
    let mask = knn_mask(d, k);
    let two_n = F::from_usize_lossy(2 * n);
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if mask[i][j] {
                triples.push((i, j, (cond[[i, j]] + cond[[j, i]]) / two_n));
            }
        }
    }
    WeightGraph::from_triples(n, triples)
}

/// `1 / median` of the off-diagonal distances, or `1` when that median is 0.
pub fn default_phi<F: Scalar>(d: ArrayView2<F>) -> F {
    let n = d.nrows();
    let mut v: Vec<F> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            v.push(d[[i, j]]);
        }
    }
    if v.is_empty() {
        return F::one();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = v.len();
    let med = if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) * F::lit(0.5)
    };
    if med > F::zero() && med.is_finite() {
        med.recip()
    } else {
        F::one()
    }
}

pub fn default_k(n: usize) -> usize {
    5.min(n.saturating_sub(1)).max(1)
}

/// Joins the components of a disconnected graph with minimum-spanning-tree
/// edges over `d`, each at the graph's smallest weight. Returns the number
/// of edges added.
pub fn connect_with_mst<F: Scalar>(graph: &mut WeightGraph<F>, d: ArrayView2<F>) -> Result<usize> {
    let n = graph.n;
    if d.dim() != (n, n) {
        return Err(GeccoError::Shape("distance matrix does not match graph".into()));
    }
    if graph.is_connected() {
        return Ok(0);
    }
    let w = graph.min_weight().unwrap_or_else(F::one);
    let mut uf = UnionFind::new(n);
    for e in &graph.edges {
        uf.union(e.i, e.j);
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|a, b| {
        d[[a.0, a.1]]
            .partial_cmp(&d[[b.0, b.1]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut added = 0;
    for (i, j) in pairs {
        if uf.union(i, j) {
            graph.edges.push(Edge { i, j, w });
            added += 1;
        }
    }
    graph.edges.sort_by_key(|e| (e.i, e.j));
    Ok(added)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Knn,
    Sne,
}

/// Weight construction settings; `None` selects the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightScheme<F> {
    pub kind: WeightKind,
    pub k: Option<usize>,
    pub phi: Option<F>,
}

impl<F> Default for WeightScheme<F> {
    fn default() -> Self {
        WeightScheme {
            kind: WeightKind::Sne,
            k: None,
            phi: None,
        }
    }
}

/// Builds a connected weight graph from a distance matrix, adding MST
/// edges (and logging a warning) when the kNN graph is disconnected.
pub fn build_weights<F: Scalar>(d: ArrayView2<F>, scheme: &WeightScheme<F>) -> Result<WeightGraph<F>> {
    let n = check_distances(d)?;
    let k = scheme.k.unwrap_or_else(|| default_k(n));
    let phi = scheme.phi.unwrap_or_else(|| default_phi(d));
    let mut g = match scheme.kind {
        WeightKind::Knn => knn_kernel_weights(d, k, phi)?,
        WeightKind::Sne => sne_weights(d, k, phi)?,
    };
    let added = connect_with_mst(&mut g, d)?;
    if added > 0 {
        log::warn!("weight graph was disconnected; added {added} spanning-tree edges");
    }
    Ok(g)
}

/// `zeta_j = 1 / (1 + ||U_.j - x~_j 1||_2)` per view.
pub fn adaptive_feature_weights<F: Scalar>(
    u_hat: &[Array2<F>],
    centers: &[Array1<F>],
) -> Result<Vec<Array1<F>>> {
    if u_hat.len() != centers.len() {
        return Err(GeccoError::Shape("one center vector per view required".into()));
    }
    u_hat
        .iter()
        .zip(centers)
        .map(|(u, c)| {
            if u.ncols() != c.len() {
                return Err(GeccoError::Shape("center length differs from view width".into()));
            }
            Ok(column_deviations(u.view(), c).mapv(|d| (F::one() + d).recip()))
        })
        .collect()
}
