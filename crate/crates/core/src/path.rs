//! Regularization paths, tuning-parameter selection and the adaptive
//! procedure.

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::MultiViewDataset;
use crate::error::{GeccoError, Result};
use crate::loss::{deviance, view_centers_masked, LossSpec};
use crate::scalar::Scalar;
use crate::solver::{self, Penalties, Solution, SolverOptions, SolverState};
use crate::weights::{
    adaptive_feature_weights, build_weights, column_deviations, pairwise_distance, DistanceMetric, WeightGraph,
    WeightScheme,
};

/// One grid point of a path.
#[derive(Debug, Clone)]
pub struct PathPoint<F> {
    pub gamma: F,
    pub alpha: F,
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub selected: Vec<Vec<bool>>,
    pub u: Vec<Array2<F>>,
    pub objective: F,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fit failed; the other fields are then empty or NaN.
    pub error: Option<String>,
}

impl<F: Scalar> PathPoint<F> {
    fn from_solution(gamma: F, alpha: F, s: &Solution<F>) -> Self {
        PathPoint {
            gamma,
            alpha,
            labels: s.labels.clone(),
            num_clusters: s.num_clusters,
            selected: s.selected.clone(),
            u: s.u.clone(),
            objective: s.objective,
            iterations: s.iterations,
            converged: s.converged,
            error: None,
        }
    }

    fn failed(gamma: F, alpha: F, e: &GeccoError) -> Self {
        PathPoint {
            gamma,
            alpha,
            labels: Vec::new(),
            num_clusters: 0,
            selected: Vec::new(),
            u: Vec::new(),
            objective: F::nan(),
            iterations: 0,
            converged: false,
            error: Some(e.to_string()),
        }
    }

    pub fn num_selected(&self) -> usize {
        self.selected.iter().flatten().filter(|s| **s).count()
    }
}

/// Solutions over a `(gamma, alpha)` grid, ordered by `alpha` and then
/// `gamma`, both ascending.
#[derive(Debug, Clone)]
pub struct ClusteringPath<F> {
    pub points: Vec<PathPoint<F>>,
}

impl<F: Scalar> ClusteringPath<F> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points sharing one `alpha`.
    pub fn sweep(&self, alpha: F) -> impl Iterator<Item = &PathPoint<F>> {
        self.points.iter().filter(move |p| p.alpha == alpha)
    }
}

fn sorted_grid<F: Scalar>(grid: &[F], name: &str) -> Result<Vec<F>> {
    if grid.is_empty() {
        return Err(GeccoError::Empty(format!("{name} grid")));
    }
    if let Some(g) = grid.iter().find(|g| !(g.is_finite() && **g >= F::zero())) {
        return Err(GeccoError::InvalidParameter(format!(
            "{name} grid values must be finite and nonnegative, got {g}"
        )));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    g.dedup();
    Ok(g)
}

/// Fits every grid point. Each `alpha` gets its own sweep over increasing
/// `gamma`, warm-started from the previous point; sweeps run in parallel.
/// A failed fit is recorded and the sweep continues from a cold start.
pub fn regularization_path<F: Scalar>(
    ds: &MultiViewDataset<F>,
    template: &Penalties<F>,
    gammas: &[F],
    alphas: &[F],
    opts: &SolverOptions<F>,
) -> Result<ClusteringPath<F>> {
    let gammas = sorted_grid(gammas, "gamma")?;
    let alphas = sorted_grid(alphas, "alpha")?;
    template.validate(ds)?;
    opts.validate()?;
    Ok(sweep_grid(template, &gammas, &alphas, |pen, warm| solver::fit(ds, pen, opts, warm)))
}

fn sweep_grid<F: Scalar>(
    template: &Penalties<F>,
    gammas: &[F],
    alphas: &[F],
    fit: impl Fn(&Penalties<F>, Option<&SolverState<F>>) -> Result<Solution<F>> + Sync,
) -> ClusteringPath<F> {
    let sweeps: Vec<Vec<PathPoint<F>>> = alphas
        .par_iter()
        .map(|&alpha| {
            let mut warm: Option<SolverState<F>> = None;
            let mut out = Vec::with_capacity(gammas.len());
            for &gamma in gammas {
                let pen = Penalties {
                    gamma,
                    alpha,
                    ..template.clone()
                };
                match fit(&pen, warm.as_ref()) {
                    Ok(s) => {
                        out.push(PathPoint::from_solution(gamma, alpha, &s));
                        warm = Some(s.state);
                    }
                    Err(e) => {
                        log::warn!("fit failed at gamma = {gamma}, alpha = {alpha}: {e}");
                        out.push(PathPoint::failed(gamma, alpha, &e));
                        warm = None;
                    }
                }
            }
            out
        })
        .collect();
    ClusteringPath {
        points: sweeps.into_iter().flatten().collect(),
    }
}

/// 50 log-spaced values from `1e-3 * gamma_max` to `gamma_max`, where
/// `gamma_max` is the full-fusion bound for `template`.
pub fn default_gamma_grid<F: Scalar>(ds: &MultiViewDataset<F>, template: &Penalties<F>) -> Result<Vec<F>> {
    let hi = solver::gamma_bound(ds, template)?;
    if !(hi.is_finite() && hi > F::zero()) {
        return Err(GeccoError::InvalidParameter(format!(
            "cannot build a gamma grid from the fusion bound {hi}"
        )));
    }
    Ok(log_grid(hi * F::lit(1e-3), hi, 50))
}

pub fn log_grid<F: Scalar>(lo: F, hi: F, len: usize) -> Vec<F> {
    if len == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..len)
        .map(|i| {
            let t = F::from_usize_lossy(i) / F::from_usize_lossy(len - 1);
            (a + (b - a) * t).exp()
        })
        .collect()
}

pub fn default_alpha_grid<F: Scalar>() -> Vec<F> {
    [0.25, 0.5, 1.0, 2.0, 4.0].map(F::lit).to_vec()
}

/// `sum_k pi_k sum_c dev_k(X_c, center(X_c))` over the clusters `c` of
/// `labels`, using observed entries only.
pub fn within_cluster_deviance<F: Scalar>(ds: &MultiViewDataset<F>, pi: &[F], labels: &[usize]) -> Result<F> {
    if labels.len() != ds.n() {
        return Err(GeccoError::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            ds.n()
        )));
    }
    if pi.len() != ds.num_views() {
        return Err(GeccoError::Shape("one loss weight per view required".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let mut total = F::zero();
    for (view, &w) in ds.views().iter().zip(pi) {
        for rows in members.iter().filter(|r| !r.is_empty()) {
            let x = view.data.select(Axis(0), rows);
            let mask = view.observed.as_ref().map(|m| m.select(Axis(0), rows));
            let mv = mask.as_ref().map(|m| m.view());
            let c = view_centers_masked(view.loss, x.view(), mv.as_ref())?;
            let u = crate::loss::center_matrix(c.view(), rows.len());
            total += w * deviance(view.loss, x.view(), u.view(), mv.as_ref())?;
        }
    }
    Ok(total)
}

/// Outcome of [`gamma_for_k`].
#[derive(Debug, Clone)]
pub struct GammaSearch<F> {
    pub gamma: F,
    pub num_clusters: usize,
    /// `false` when the target count was not hit exactly on the range.
    pub exact: bool,
    pub evaluations: usize,
    pub solution: Solution<F>,
}

pub const GAMMA_SEARCH_EVALS: usize = 40;

/// Bisection over `log gamma` for a fit with `k_target` clusters.
///
/// Evaluates the range ends first. Intermediate fits are warm-started from
/// the lower end of the bracket; a hit is confirmed by a cold refit. When
/// no grid point gives exactly `k_target`, returns the smallest `gamma`
/// seen whose fit has at most `k_target` clusters (or the lower end if
/// even that has fewer) with `exact = false`.
pub fn gamma_for_k<F: Scalar>(
    ds: &MultiViewDataset<F>,
    template: &Penalties<F>,
    k_target: usize,
    range: (F, F),
    opts: &SolverOptions<F>,
) -> Result<GammaSearch<F>> {
    let n = ds.n();
    if k_target == 0 || k_target > n {
        return Err(GeccoError::InvalidParameter(format!(
            "target cluster count must lie in [1, {n}], got {k_target}"
        )));
    }
    let (lo, hi) = range;
    if !(lo >= F::zero() && lo < hi && hi.is_finite()) {
        return Err(GeccoError::InvalidParameter(format!("bad gamma range ({lo}, {hi})")));
    }
    let run = |gamma: F, warm: Option<&SolverState<F>>| {
        let pen = Penalties {
            gamma,
            ..template.clone()
        };
        let s = solver::fit(ds, &pen, opts, warm)?;
        log::debug!(
            "gamma = {:.6e} (alpha = {}, warm = {}): {} clusters, {} iterations, converged = {}",
            gamma.as_f64(),
            template.alpha,
            warm.is_some(),
            s.num_clusters,
            s.iterations,
            s.converged
        );
        Ok::<_, GeccoError>(s)
    };
    let done = |gamma, s: Solution<F>, exact, evaluations| GammaSearch {
        gamma,
        num_clusters: s.num_clusters,
        exact,
        evaluations,
        solution: s,
    };

    let mut evals = 2;
    let s_hi = run(hi, None)?;
    if s_hi.num_clusters == k_target {
        return Ok(done(hi, s_hi, true, 1));
    }
    if s_hi.num_clusters > k_target {
        log::warn!("gamma = {hi} still gives {} clusters", s_hi.num_clusters);
        return Ok(done(hi, s_hi, false, 1));
    }
    let s_lo = run(lo, None)?;
    if s_lo.num_clusters == k_target {
        return Ok(done(lo, s_lo, true, evals));
    }
    if s_lo.num_clusters < k_target {
        log::warn!("gamma = {lo} already gives {} clusters", s_lo.num_clusters);
        return Ok(done(lo, s_lo, false, evals));
    }

    // invariant: count(lo) > k_target >= count(hi)
    let (mut lo, mut hi) = (lo, hi);
    let mut lo_state = s_lo.state;
    let mut best = (hi, s_hi);
    while evals < GAMMA_SEARCH_EVALS {
        let mid = if lo > F::zero() {
            (lo * hi).sqrt()
        } else {
            hi * F::lit(1e-3)
        };
        if mid <= lo || mid >= hi || hi / lo.max(F::min_positive_value()) < F::one() + F::lit(1e-9) {
            break;
        }
        evals += 1;
        let mut s = run(mid, Some(&lo_state))?;
        if s.num_clusters == k_target && evals < GAMMA_SEARCH_EVALS {
            evals += 1;
            s = run(mid, None)?;
            if s.num_clusters == k_target {
                return Ok(done(mid, s, true, evals));
            }
        }
        if s.num_clusters > k_target {
            lo = mid;
            lo_state = s.state;
        } else {
            hi = mid;
            best = (mid, s);
        }
    }
    let (gamma, s) = best;
    log::warn!(
        "no gamma in range gives {k_target} clusters; using gamma = {gamma} with {}",
        s.num_clusters
    );
    Ok(done(gamma, s, false, evals))
}

/// Hold-out error for every grid point.
#[derive(Debug, Clone)]
pub struct HoldoutResult<F> {
    pub gamma: F,
    pub alpha: F,
    /// `(gamma, alpha, error)` in path order; failed fits have error `inf`.
    pub table: Vec<(F, F, F)>,
    /// Per-view `true` where the entry was held out.
    pub held_out: Vec<Array2<bool>>,
}

const HOLDOUT_RESAMPLES: usize = 10;

/// Holds out `round(frac * n * p_k)` entries per view (whole class blocks
/// for multinomial views).
pub fn holdout_mask<F: Scalar>(ds: &MultiViewDataset<F>, frac: f64, seed: u64) -> Result<Vec<Array2<bool>>> {
    if !(frac > 0.0 && frac <= 0.5) {
        return Err(GeccoError::InvalidParameter(format!(
            "hold-out fraction must lie in (0, 0.5], got {frac}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ds.n();
    for _ in 0..HOLDOUT_RESAMPLES {
        let masks: Vec<Array2<bool>> = ds
            .views()
            .iter()
            .map(|v| {
                let (classes, p) = match v.loss {
                    LossSpec::MultinomialLl { classes } => (classes, v.ncols() / classes),
                    _ => (1, v.ncols()),
                };
                let cells = n * p;
                let m = (frac * cells as f64).round() as usize;
                let mut held = Array2::from_elem((n, v.ncols()), false);
                for idx in sample(&mut rng, cells, m) {
                    let (i, j) = (idx / p, idx % p);
                    for c in 0..classes {
                        held[[i, c * p + j]] = true;
                    }
                }
                held
            })
            .collect();
        let usable = ds.views().iter().zip(&masks).all(|(v, held)| {
            let obs = |i: usize, j: usize| !held[[i, j]] && v.observed.as_ref().is_none_or(|o| o[[i, j]]);
            (0..n).all(|i| (0..v.ncols()).any(|j| obs(i, j))) && (0..v.ncols()).all(|j| (0..n).any(|i| obs(i, j)))
        });
        if usable {
            return Ok(masks);
        }
    }
    Err(GeccoError::InvalidData(format!(
        "every hold-out mask in {HOLDOUT_RESAMPLES} draws left a row or column unobserved"
    )))
}

/// Fits the grid on the data with a random subset of entries hidden and
/// scores each fit by the weighted deviance on the hidden entries.
/// Returns the first grid point (in path order) with the smallest error.
pub fn holdout_validate<F: Scalar>(
    ds: &MultiViewDataset<F>,
    template: &Penalties<F>,
    gammas: &[F],
    alphas: &[F],
    frac: f64,
    seed: u64,
    opts: &SolverOptions<F>,
) -> Result<HoldoutResult<F>> {
    let held = holdout_mask(ds, frac, seed)?;
    let train_masks = ds
        .views()
        .iter()
        .zip(&held)
        .map(|(v, h)| {
            let base = v.observed.clone().unwrap_or_else(|| Array2::from_elem(h.dim(), true));
            Some(Array2::from_shape_fn(h.dim(), |ix| base[ix] && !h[ix]))
        })
        .collect();
    let train = ds.with_masks(train_masks)?;
    let path = regularization_path(&train, template, gammas, alphas, opts)?;
    let table: Vec<(F, F, F)> = path
        .points
        .iter()
        .map(|pt| {
            let err = if pt.error.is_some() {
                F::infinity()
            } else {
                heldout_error(ds, &template.pi, &pt.u, &held).unwrap_or_else(|_| F::infinity())
            };
            (pt.gamma, pt.alpha, err)
        })
        .collect();
    let best = table
        .iter()
        .enumerate()
        .fold(None::<(usize, F)>, |acc, (i, (_, _, e))| match acc {
            Some((_, b)) if !(*e < b) => acc,
            _ if e.is_nan() => acc,
            _ => Some((i, *e)),
        })
        .map_or(0, |(i, _)| i);
    Ok(HoldoutResult {
        gamma: table[best].0,
        alpha: table[best].1,
        table,
        held_out: held,
    })
}

fn heldout_error<F: Scalar>(ds: &MultiViewDataset<F>, pi: &[F], u: &[Array2<F>], held: &[Array2<bool>]) -> Result<F> {
    let mut total = F::zero();
    for ((view, &w), (u, h)) in ds.views().iter().zip(pi).zip(u.iter().zip(held)) {
        let scored = Array2::from_shape_fn(h.dim(), |ix| h[ix] && view.observed.as_ref().is_none_or(|o| o[ix]));
        if scored.iter().any(|b| *b) {
            total += w * deviance(view.loss, view.data.view(), u.view(), Some(&scored.view()))?;
        }
    }
    Ok(total)
}

/// How the adaptive procedure picks `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptiveTarget {
    /// Search for a fit with this many clusters; `alpha` is then the
    /// largest grid value minimizing within-cluster deviance.
    Clusters(usize),
    /// Pick `(gamma, alpha)` by hold-out error on the default grids.
    Holdout { frac: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct AdaptiveConfig<F> {
    pub target: AdaptiveTarget,
    pub scheme: WeightScheme<F>,
    /// Multiples of `alpha_scale`.
    pub alphas: Vec<F>,
    /// Unit for `alpha`; defaults to [`DEFAULT_ALPHA_FRACTION`] times the
    /// full-shrinkage bound with unit feature weights.
    pub alpha_scale: Option<F>,
    /// `gamma` search range; defaults to `(0, gamma_max)`.
    pub gamma_range: Option<(F, F)>,
}

impl<F: Scalar> AdaptiveConfig<F> {
    pub fn new(target: AdaptiveTarget) -> Self {
        AdaptiveConfig {
            target,
            scheme: WeightScheme::default(),
            alphas: default_alpha_grid(),
            alpha_scale: None,
            gamma_range: None,
        }
    }
}

/// Result of [`adaptive_fit`] with the intermediate quantities.
#[derive(Debug, Clone)]
pub struct AdaptiveFit<F> {
    pub solution: Solution<F>,
    pub gamma: F,
    pub alpha: F,
    /// Fit with `alpha = 1` and unit feature weights.
    pub initial: Solution<F>,
    pub initial_gamma: F,
    pub zeta: Vec<Array1<F>>,
    pub graph: WeightGraph<F>,
    /// `(alpha, gamma, within-cluster deviance, cluster count)` per
    /// candidate `alpha`; empty for hold-out selection.
    pub candidates: Vec<(F, F, F, usize)>,
}

fn search_range<F: Scalar>(ds: &MultiViewDataset<F>, pen: &Penalties<F>, cfg: &AdaptiveConfig<F>) -> Result<(F, F)> {
    if let Some(r) = cfg.gamma_range {
        return Ok(r);
    }
    let hi = solver::gamma_bound(ds, pen)?;
    if !hi.is_finite() {
        return Err(GeccoError::InvalidParameter("fusion bound is infinite; give a gamma range".into()));
    }
    // just above the bound so full fusion is reachable
    Ok((F::zero(), hi * F::lit(1.01)))
}

pub const DEFAULT_ALPHA_FRACTION: f64 = 0.25;

/// Adaptive feature and fusion weighting:
///
/// 1. fit with `alpha = alpha_scale` and unit feature weights,
/// 2. choose `gamma` for the target,
/// 3. set `zeta_j = 1 / (1 + ||U_.j - x~_j||)` and rebuild the fusion
///    weights from the weighted Gower distance of the data,
/// 4. refit over the `alpha` grid and keep the selected fit.
pub fn adaptive_fit<F: Scalar>(
    ds: &MultiViewDataset<F>,
    graph: WeightGraph<F>,
    cfg: &AdaptiveConfig<F>,
    opts: &SolverOptions<F>,
) -> Result<AdaptiveFit<F>> {
    let mut base = Penalties::new(ds, F::zero(), F::one(), graph)?;
    let scale = match cfg.alpha_scale {
        Some(a) => a,
        None => F::lit(DEFAULT_ALPHA_FRACTION) * solver::alpha_bound(ds, &base)?,
    };
    if !(scale.is_finite() && scale > F::zero()) {
        return Err(GeccoError::InvalidParameter(format!("alpha scale must be positive, got {scale}")));
    }
    base.alpha = scale;
    let alphas: Vec<F> = sorted_grid(&cfg.alphas, "alpha")?.into_iter().map(|a| a * scale).collect();

    let (initial_gamma, initial) = match cfg.target {
        AdaptiveTarget::Clusters(k) => {
            let r = gamma_for_k(ds, &base, k, search_range(ds, &base, cfg)?, opts)?;
            (r.gamma, r.solution)
        }
        AdaptiveTarget::Holdout { frac, seed } => {
            let grid = default_gamma_grid(ds, &base)?;
            let h = holdout_validate(ds, &base, &grid, &[scale], frac, seed, opts)?;
            let pen = Penalties { gamma: h.gamma, ..base.clone() };
            (h.gamma, solver::fit(ds, &pen, opts, None)?)
        }
    };

    let zeta = adaptive_feature_weights(&initial.u, &initial.centers)?;
    let deviations = initial
        .u
        .iter()
        .zip(&initial.centers)
        .map(|(u, c)| column_deviations(u.view(), c))
        .collect();
    let metric = DistanceMetric::WeightedGower {
        deviations,
        loss_weights: base.pi.clone(),
    };
    let d = pairwise_distance(ds, &metric)?;
    let graph = build_weights(d.view(), &cfg.scheme)?;
    let adapted = Penalties {
        graph: graph.clone(),
        ..base.clone()
    }
    .with_zeta(zeta.clone());
    adapted.validate(ds)?;

    let (gamma, alpha, solution, candidates) = match cfg.target {
        AdaptiveTarget::Clusters(k) => {
            let range = search_range(ds, &adapted, cfg)?;
            let fits: Vec<Result<(F, GammaSearch<F>)>> = alphas
                .par_iter()
                .map(|&alpha| {
                    let pen = Penalties {
                        alpha,
                        ..adapted.clone()
                    };
                    Ok((alpha, gamma_for_k(ds, &pen, k, range, opts)?))
                })
                .collect();
            let mut scored = Vec::with_capacity(fits.len());
            for f in fits {
                let (alpha, r) = f?;
                let wcd = within_cluster_deviance(ds, &adapted.pi, &r.solution.labels)?;
                scored.push((alpha, r, wcd));
            }
            let candidates = scored
                .iter()
                .map(|(a, r, w)| (*a, r.gamma, *w, r.num_clusters))
                .collect();
            // prefer exact hits, then the smallest deviance, then the largest alpha
            let pick = scored
                .into_iter()
                .reduce(|best, cur| {
                    let better = (cur.1.exact && !best.1.exact)
                        || (cur.1.exact == best.1.exact && cur.2 <= best.2 * (F::one() + F::lit(1e-10)));
                    if better {
                        cur
                    } else {
                        best
                    }
                })
                .expect("nonempty alpha grid");
            (pick.1.gamma, pick.0, pick.1.solution, candidates)
        }
        AdaptiveTarget::Holdout { frac, seed } => {
            let grid = default_gamma_grid(ds, &adapted)?;
            let h = holdout_validate(ds, &adapted, &grid, &alphas, frac, seed, opts)?;
            let pen = Penalties {
                gamma: h.gamma,
                alpha: h.alpha,
                ..adapted.clone()
            };
            (h.gamma, h.alpha, solver::fit(ds, &pen, opts, None)?, Vec::new())
        }
    };

    Ok(AdaptiveFit {
        solution,
        gamma,
        alpha,
        initial,
        initial_gamma,
        zeta,
        graph,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::View;
    use crate::loss::LossSpec;
    use crate::sim::simulate_spherical;
    use crate::weights::{knn_kernel_weights, DistanceMetric};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    type Ds = MultiViewDataset<f64>;

    fn blobs() -> Ds {
        let x = array![[0.0, 0.1], [0.2, 0.0], [0.1, 0.3], [5.0, 5.1], [5.2, 4.9], [4.8, 5.0]];
        MultiViewDataset::single(x, LossSpec::Euclidean).unwrap()
    }

    fn knn_graph(ds: &Ds, k: usize) -> WeightGraph<f64> {
        let d = pairwise_distance(ds, &DistanceMetric::Gower).unwrap();
        let mut g = knn_kernel_weights(d.view(), k, 0.5).unwrap();
        crate::weights::connect_with_mst(&mut g, d.view()).unwrap();
        g
    }

    fn template(ds: &Ds) -> Penalties<f64> {
        Penalties::new(ds, 0.0, 0.0, WeightGraph::complete(ds.n())).unwrap()
    }

    fn opts() -> SolverOptions<f64> {
        SolverOptions {
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            max_iter: 50_000,
            ..Default::default()
        }
    }

    #[test]
    fn path_extremes() {
        let ds = blobs();
        let pen = template(&ds);
        let big = solver::gamma_bound(&ds, &pen).unwrap() * 2.0;
        let path = regularization_path(&ds, &pen, &[big], &[0.5], &opts()).unwrap();
        assert_eq!(path.len(), 1);
        let pt = &path.points[0];
        assert_eq!(pt.num_clusters, 1);
        let means = ds.view(0).data.mean_axis(Axis(0)).unwrap();
        for row in pt.u[0].rows() {
            for (a, b) in row.iter().zip(&means) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-4);
            }
        }
        let path = regularization_path(&ds, &pen, &[0.0], &[0.0], &opts()).unwrap();
        assert_eq!(path.points[0].num_clusters, ds.n());
        assert!(regularization_path(&ds, &pen, &[], &[0.0], &opts()).is_err());
        assert!(regularization_path(&ds, &pen, &[-1.0], &[0.0], &opts()).is_err());
    }

    #[test]
    fn path_order_and_determinism() {
        let ds = blobs();
        let pen = template(&ds);
        let path = regularization_path(&ds, &pen, &[0.3, 0.01, 0.1], &[1.0, 0.0], &opts()).unwrap();
        let grid: Vec<(f64, f64)> = path.points.iter().map(|p| (p.alpha, p.gamma)).collect();
        assert_eq!(
            grid,
            vec![(0.0, 0.01), (0.0, 0.1), (0.0, 0.3), (1.0, 0.01), (1.0, 0.1), (1.0, 0.3)]
        );
        assert_eq!(path.sweep(1.0).count(), 3);
        let again = regularization_path(&ds, &pen, &[0.1, 0.3, 0.01], &[0.0, 1.0], &opts()).unwrap();
        for (a, b) in path.points.iter().zip(&again.points) {
            assert_eq!(a.u, b.u);
            assert_eq!(a.labels, b.labels);
        }
        // fusion only grows along a sweep for this well-separated data
        let ks: Vec<usize> = path.sweep(0.0).map(|p| p.num_clusters).collect();
        assert!(ks.windows(2).all(|w| w[0] >= w[1]), "{ks:?}");
    }

    #[test]
    fn warm_start_saves_iterations() {
        let sim = simulate_spherical(30, 5, 0.0, 1.0, 2).unwrap();
        let ds = MultiViewDataset::single(sim.data, LossSpec::Euclidean).unwrap();
        let pen = Penalties::new(&ds, 0.0, 0.5, knn_graph(&ds, 5)).unwrap();
        let g = solver::gamma_bound(&ds, &pen).unwrap();
        let (g1, g2) = (0.02 * g, 0.025 * g);
        let path = regularization_path(&ds, &pen, &[g1, g2], &[0.5], &opts()).unwrap();
        let cold = solver::fit(&ds, &Penalties { gamma: g2, ..pen.clone() }, &opts(), None).unwrap();
        assert!(path.points[1].iterations <= cold.iterations);
        assert!(path.points[1].converged);
    }

    #[test]
    fn failures_are_recorded() {
        let ds = blobs();
        let pen = template(&ds);
        let warm_seen = std::sync::Mutex::new(Vec::new());
        let path = sweep_grid(&pen, &[0.1, 0.2, 0.3], &[0.0], |p, warm| {
            warm_seen.lock().unwrap().push(warm.is_some());
            if p.gamma == 0.2 {
                Err(GeccoError::Numerical("boom".into()))
            } else {
                solver::fit(&ds, p, &opts(), warm)
            }
        });
        assert_eq!(path.len(), 3);
        assert!(path.points[1].error.as_deref().unwrap().contains("boom"));
        assert!(path.points[1].objective.is_nan());
        assert!(path.points[0].error.is_none() && path.points[2].error.is_none());
        // the point after a failure starts cold
        assert_eq!(*warm_seen.lock().unwrap(), vec![false, true, false]);
    }

    #[test]
    fn wcd_examples() {
        let x = array![[0.0, 1.0], [2.0, 1.0], [10.0, 4.0], [12.0, 8.0]];
        let y = array![[1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let ds = MultiViewDataset::new(vec![
            View::new(x, LossSpec::Euclidean),
            View::new(y, LossSpec::Manhattan),
        ])
        .unwrap();
        let pi = solver::default_loss_weights(&ds).unwrap();
        assert_abs_diff_eq!(within_cluster_deviance(&ds, &pi, &[0, 0, 0, 0]).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(within_cluster_deviance(&ds, &pi, &[0, 1, 2, 3]).unwrap(), 0.0);
        // clusters {0, 1} and {2, 3}:
        // euclidean 0.5 * (1 + 1 + 1 + 4 + 1 + 4) = 6; manhattan medians (0, 0) and (0, 1) give 1 + 1
        let expect = pi[0] * 6.0 + pi[1] * 2.0;
        assert_abs_diff_eq!(within_cluster_deviance(&ds, &pi, &[0, 0, 1, 1]).unwrap(), expect, epsilon = 1e-12);
        // euclidean null deviance 0.5 * (36 + 16 + 16 + 36 + 6.25 + 6.25 + 0.25 + 20.25)
        assert_abs_diff_eq!(pi[0], 1.0 / 68.5, epsilon = 1e-15);
        assert!(within_cluster_deviance(&ds, &pi, &[0, 0]).is_err());
    }

    #[test]
    fn gamma_search() {
        let sim = simulate_spherical(30, 0, 0.0, 1.0, 5).unwrap();
        let ds = MultiViewDataset::single(sim.data, LossSpec::Euclidean).unwrap();
        let pen = Penalties::new(&ds, 0.0, 0.0, knn_graph(&ds, 5)).unwrap();
        let hi = solver::gamma_bound(&ds, &pen).unwrap() * 1.01;
        let r = gamma_for_k(&ds, &pen, 3, (0.0, hi), &opts()).unwrap();
        assert!(r.exact);
        assert_eq!(r.num_clusters, 3);
        assert!(r.evaluations <= GAMMA_SEARCH_EVALS);
        let cold = solver::fit(&ds, &Penalties { gamma: r.gamma, ..pen.clone() }, &opts(), None).unwrap();
        assert_eq!(cold.num_clusters, 3);

        let one = gamma_for_k(&ds, &pen, 1, (0.0, hi), &opts()).unwrap();
        assert_eq!((one.gamma, one.num_clusters, one.exact), (hi, 1, true));
        let all = gamma_for_k(&ds, &pen, 30, (0.0, hi), &opts()).unwrap();
        assert_eq!((all.gamma, all.num_clusters, all.exact), (0.0, 30, true));
        // range too narrow to reach one cluster
        let short = gamma_for_k(&ds, &pen, 1, (0.0, hi * 1e-4), &opts()).unwrap();
        assert!(!short.exact && short.num_clusters > 1 && short.gamma == hi * 1e-4);
        assert!(gamma_for_k(&ds, &pen, 0, (0.0, hi), &opts()).is_err());
        assert!(gamma_for_k(&ds, &pen, 3, (hi, 0.0), &opts()).is_err());
    }

    #[test]
    fn holdout_masks() {
        let ds = MultiViewDataset::new(vec![
            View::new(Array2::from_shape_fn((10, 4), |(i, j)| (i * j) as f64), LossSpec::Euclidean),
            View::new(
                Array2::from_shape_fn((10, 6), |(i, j)| ((i + j) % 3 == j / 2) as u8 as f64),
                LossSpec::MultinomialLl { classes: 3 },
            ),
        ])
        .unwrap();
        let m = holdout_mask(&ds, 0.2, 4).unwrap();
        assert_eq!(m[0].iter().filter(|b| **b).count(), 8);
        assert_eq!(m[1].iter().filter(|b| **b).count(), 4 * 3);
        for i in 0..10 {
            for j in 0..2 {
                assert!(m[1][[i, j]] == m[1][[i, j + 2]] && m[1][[i, j]] == m[1][[i, j + 4]]);
            }
        }
        assert_eq!(m, holdout_mask(&ds, 0.2, 4).unwrap());
        assert!(holdout_mask(&ds, 0.0, 4).is_err());
        assert!(holdout_mask(&ds, 0.6, 4).is_err());
        // one column: a held-out entry always empties its row
        let tiny = MultiViewDataset::single(array![[1.0], [2.0]], LossSpec::Euclidean).unwrap();
        assert!(holdout_mask(&tiny, 0.5, 1).is_err());
    }

    #[test]
    fn holdout_nothing_masked_ties_to_first() {
        let ds = blobs();
        let pen = template(&ds);
        // round(0.01 * 12) = 0 entries held out
        let h = holdout_validate(&ds, &pen, &[0.01, 0.1, 1.0], &[0.0, 1.0], 0.01, 3, &opts()).unwrap();
        assert!(h.table.iter().all(|t| t.2 == 0.0));
        assert_eq!((h.gamma, h.alpha), (0.01, 0.0));
    }

    #[test]
    fn holdout_ignores_hidden_values() {
        let ds = blobs();
        let pen = template(&ds);
        let held = holdout_mask(&ds, 0.2, 8).unwrap();
        let train = |x: Array2<f64>| {
            let obs = held[0].mapv(|h| !h);
            MultiViewDataset::new(vec![View::new(x, LossSpec::Euclidean).with_observed(obs)]).unwrap()
        };
        let mut poisoned = ds.view(0).data.clone();
        poisoned.zip_mut_with(&held[0], |v, h| {
            if *h {
                *v = 1e3;
            }
        });
        let p = Penalties { gamma: 0.2, alpha: 0.1, ..pen };
        let a = solver::fit(&train(ds.view(0).data.clone()), &p, &opts(), None).unwrap();
        let b = solver::fit(&train(poisoned), &p, &opts(), None).unwrap();
        assert_eq!(a.u, b.u);

        let grid = [0.01, 0.1, 1.0];
        let h = holdout_validate(&ds, &p, &grid, &[0.1], 0.2, 8, &opts()).unwrap();
        let h2 = holdout_validate(&ds, &p, &[1.0, 0.01, 0.1], &[0.1], 0.2, 8, &opts()).unwrap();
        assert_eq!(h.table, h2.table);
        assert_eq!(h.held_out, held);
        // error at each point recomputed directly
        let path = regularization_path(&train(ds.view(0).data.clone()), &p, &grid, &[0.1], &opts()).unwrap();
        for (pt, row) in path.points.iter().zip(&h.table) {
            let e = p.pi[0] * deviance(LossSpec::Euclidean, ds.view(0).data.view(), pt.u[0].view(), Some(&held[0].view())).unwrap();
            assert_abs_diff_eq!(row.2, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptive_without_noise_keeps_labels() {
        for seed in 0..3 {
            let sim = simulate_spherical(30, 0, 0.0, 1.0, seed).unwrap();
            let ds = MultiViewDataset::single(sim.data, LossSpec::Euclidean).unwrap();
            let mut cfg = AdaptiveConfig::new(AdaptiveTarget::Clusters(3));
            cfg.alphas = vec![0.5, 1.0];
            let fit = adaptive_fit(&ds, knn_graph(&ds, 5), &cfg, &opts()).unwrap();
            assert_eq!(fit.initial.num_clusters, 3);
            assert_eq!(fit.solution.num_clusters, 3);
            let ari = crate::eval::adjusted_rand_index(&fit.initial.labels, &fit.solution.labels).unwrap();
            assert_eq!(ari, 1.0, "seed {seed}");
            assert_eq!(fit.candidates.len(), 2);
            assert_eq!(fit.zeta[0].len(), 10);
            assert!(fit.graph.is_connected());
        }
    }

    #[test]
    fn shrunk_feature_gets_unit_zeta() {
        let u = vec![array![[1.0, 2.0], [1.0, 4.0]]];
        let c = vec![array![1.0, 3.0]];
        let z = adaptive_feature_weights(&u, &c).unwrap();
        assert_eq!(z[0][0], 1.0);
        assert!(z[0][1] < 1.0);
        assert_eq!(column_deviations(u[0].view(), &c[0])[0], 0.0);
    }

    #[test]
    fn grids() {
        let g = log_grid(1e-3, 1.0, 4);
        for (a, b) in g.iter().zip([1e-3, 1e-2, 1e-1, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let ds = blobs();
        let pen = template(&ds);
        let g = default_gamma_grid(&ds, &pen).unwrap();
        assert_eq!(g.len(), 50);
        assert_abs_diff_eq!(g[49], solver::gamma_bound(&ds, &pen).unwrap(), epsilon = 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(default_alpha_grid::<f64>(), vec![0.25, 0.5, 1.0, 2.0, 4.0]);
    }
}
