//! Multi-block ADMM for the (multi-view) Gecco+ objective.
//!
//! The default engine takes one inexact U-step per view and iteration, then
//! updates the fused differences `V` and their scaled dual `Lambda`.
//! [`fit_fullsolve`] runs every U-subproblem to convergence instead and is
//! kept as a reference.

mod steps;

use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use rayon::prelude::*;

use crate::data::MultiViewDataset;
use crate::diffgraph::{extract_clusters, num_clusters, selected_features, DifferenceOperator};
use crate::error::{GeccoError, Result};
use crate::loss::{
    center_matrix, column_norms, deviance, loss_subgradient, view_centers_masked, LossSpec,
};
use crate::prox::prox_fusion_rows_inplace;
use crate::scalar::Scalar;
use crate::weights::WeightGraph;

pub use steps::{
    initial_view_state, prox_distance, prox_gradient_column, u_step_bernoulli, u_step_differentiable,
    u_step_euclidean, u_step_hinge, u_step_nondiff, Backtracking, ColumnStep, Inner, StepKind,
    ViewContext, ViewState,
};

/// Penalty parameters of the objective.
#[derive(Debug, Clone)]
pub struct Penalties<F> {
    /// Fusion strength.
    pub gamma: F,
    /// Feature-selection strength.
    pub alpha: F,
    pub graph: WeightGraph<F>,
    /// Per-view feature weights.
    pub zeta: Vec<Array1<F>>,
    /// Per-view loss weights.
    pub pi: Vec<F>,
}

impl<F: Scalar> Penalties<F> {
    /// Unit feature weights and loss weights `1 / null deviance`.
    pub fn new(ds: &MultiViewDataset<F>, gamma: F, alpha: F, graph: WeightGraph<F>) -> Result<Self> {
        let pen = Penalties {
            gamma,
            alpha,
            graph,
            zeta: ds
                .feature_counts()
                .iter()
                .map(|&p| Array1::from_elem(p, F::one()))
                .collect(),
            pi: default_loss_weights(ds)?,
        };
        pen.validate(ds)?;
        Ok(pen)
    }

    pub fn with_zeta(mut self, zeta: Vec<Array1<F>>) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn with_pi(mut self, pi: Vec<F>) -> Self {
        self.pi = pi;
        self
    }

    pub fn validate(&self, ds: &MultiViewDataset<F>) -> Result<()> {
        let bad = |what: &str| Err(GeccoError::InvalidParameter(what.into()));
        if !(self.gamma >= F::zero() && self.gamma.is_finite()) {
            return bad("gamma must be finite and nonnegative");
        }
        if !(self.alpha >= F::zero() && self.alpha.is_finite()) {
            return bad("alpha must be finite and nonnegative");
        }
        if self.graph.n() != ds.n() {
            return Err(GeccoError::Shape(format!(
                "weight graph has {} nodes, data has {} rows",
                self.graph.n(),
                ds.n()
            )));
        }
        if self.zeta.len() != ds.num_views() || self.pi.len() != ds.num_views() {
            return Err(GeccoError::Shape("one zeta vector and one pi per view".into()));
        }
        for (z, p) in self.zeta.iter().zip(ds.feature_counts()) {
            if z.len() != p {
                return Err(GeccoError::Shape("zeta length differs from view width".into()));
            }
            if z.iter().any(|v| !(*v >= F::zero() && v.is_finite())) {
                return bad("feature weights must be finite and nonnegative");
            }
        }
        if self.pi.iter().any(|v| !(*v > F::zero() && v.is_finite())) {
            return bad("loss weights must be finite and positive");
        }
        Ok(())
    }
}

/// `1 / null deviance` per view, computed on the observed entries.
pub fn default_loss_weights<F: Scalar>(ds: &MultiViewDataset<F>) -> Result<Vec<F>> {
    let eps = F::domain_eps();
    ds.views()
        .iter()
        .map(|v| {
            let mask = v.mask();
            let c = view_centers_masked(v.loss, v.data.view(), mask.as_ref())?;
            let xt = center_matrix(c.view(), v.nrows());
            let dev = deviance(v.loss, v.data.view(), xt.view(), mask.as_ref())?;
            Ok(if dev < eps { eps.recip() } else { dev.recip() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMode {
    #[default]
    OneStep,
    FullSolve,
}

#[derive(Debug, Clone)]
pub struct SolverOptions<F> {
    pub rho: F,
    pub max_iter: usize,
    pub tol_primal: F,
    pub tol_dual: F,
    /// Backtracking shrink factor in `(0, 1)`.
    pub backtrack_shrink: F,
    pub initial_step: F,
    /// Threshold on `||V_l||` for fusing an edge; defaults to
    /// `1e-6 (1 + max |X|)`.
    pub fusion_tol: Option<F>,
    pub mode: SolverMode,
    pub inner_tol: F,
    pub inner_max_iter: usize,
    /// Re-verify the majorization inequality for every accepted step.
    pub check_majorization: bool,
    /// Use the closed-form euclidean and bounded-hessian Bernoulli steps in
    /// one-step mode.
    pub use_special_paths: bool,
    /// Rebalance `rho` from the fusion residuals during the first
    /// [`RHO_ADAPT_ITERS`] iterations. `rho` is then only the starting value.
    pub adaptive_rho: bool,
}

pub const RHO_ADAPT_ITERS: usize = 2000;
const RHO_ADAPT_EVERY: usize = 10;
const RHO_BALANCE: f64 = 10.0;
const RHO_FACTOR: f64 = 2.0;
const RHO_RANGE: f64 = 1e8;

impl<F: Scalar> Default for SolverOptions<F> {
    fn default() -> Self {
        SolverOptions {
            rho: F::one(),
            max_iter: 10_000,
            tol_primal: F::lit(1e-5),
            tol_dual: F::lit(1e-5),
            backtrack_shrink: F::lit(0.5),
            initial_step: F::one(),
            fusion_tol: None,
            mode: SolverMode::OneStep,
            inner_tol: F::lit(1e-8),
            inner_max_iter: 1000,
            check_majorization: cfg!(debug_assertions),
            use_special_paths: true,
            adaptive_rho: true,
        }
    }
}

impl<F: Scalar> SolverOptions<F> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(GeccoError::InvalidParameter(what.into()));
        if !(self.rho > F::zero() && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.backtrack_shrink > F::zero() && self.backtrack_shrink < F::one()) {
            return bad("backtracking shrink must lie in (0, 1)");
        }
        if !(self.initial_step > F::zero()) {
            return bad("initial step must be positive");
        }
        if !(self.tol_primal > F::zero() && self.tol_dual > F::zero() && self.inner_tol > F::zero()) {
            return bad("tolerances must be positive");
        }
        if self.fusion_tol.is_some_and(|t| !(t >= F::zero())) {
            return bad("fusion tolerance must be nonnegative");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        Ok(())
    }
}

/// All primal and dual blocks; a warm start copies every one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<F> {
    pub views: Vec<ViewState<F>>,
    /// Fused differences, `|E| x sum p_k`.
    pub v: Array2<F>,
    /// Scaled dual of `D U = V`.
    pub lambda: Array2<F>,
    pub rho: F,
    pub iteration: usize,
}

impl<F: Scalar> SolverState<F> {
    /// Changes `rho`, rescaling every scaled dual so the unscaled duals
    /// stay put.
    pub fn rescale_rho(&mut self, rho: F) {
        let f = self.rho / rho;
        self.lambda *= f;
        for v in &mut self.views {
            for d in [&mut v.psi, &mut v.nu].into_iter().flatten() {
                *d *= f;
            }
        }
        self.rho = rho;
    }

    pub fn u(&self) -> Vec<Array2<F>> {
        self.views.iter().map(|v| v.u.clone()).collect()
    }
}

/// Scaled residuals of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals<F> {
    pub primal: F,
    pub dual: F,
}

#[derive(Debug, Clone)]
pub struct Solution<F> {
    pub u: Vec<Array2<F>>,
    pub v: Array2<F>,
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub selected: Vec<Vec<bool>>,
    pub centers: Vec<Array1<F>>,
    pub objective: F,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<Residuals<F>>,
    pub wall_time: Duration,
    pub state: SolverState<F>,
}

/// Per-fit quantities that do not change across iterations.
struct Problem<'a, F> {
    ds: &'a MultiViewDataset<F>,
    pen: &'a Penalties<F>,
    op: DifferenceOperator<F>,
    weights: Vec<F>,
    centers: Vec<Array1<F>>,
    /// Data with unobserved entries replaced by centers.
    x: Vec<Array2<F>>,
    offsets: Vec<usize>,
    kinds: Vec<StepKind>,
}

fn step_kind<F: Scalar>(loss: LossSpec<F>, masked: bool, opts: &SolverOptions<F>) -> StepKind {
    match loss {
        l if l.is_distance() => StepKind::Distance,
        LossSpec::Hinge => StepKind::Hinge,
        _ if opts.mode == SolverMode::FullSolve || !opts.use_special_paths => StepKind::ProxGradient,
        LossSpec::Euclidean if !masked => StepKind::Euclidean,
        LossSpec::BernoulliLl => StepKind::Bernoulli,
        _ => StepKind::ProxGradient,
    }
}

impl<'a, F: Scalar> Problem<'a, F> {
    fn new(ds: &'a MultiViewDataset<F>, pen: &'a Penalties<F>, opts: &SolverOptions<F>) -> Result<Self> {
        pen.validate(ds)?;
        opts.validate()?;
        if !pen.graph.is_connected() {
            log::warn!("fusion weight graph is disconnected; components can never fuse");
        }
        let mut centers = Vec::with_capacity(ds.num_views());
        let mut x = Vec::with_capacity(ds.num_views());
        let mut offsets = vec![0];
        let mut kinds = Vec::with_capacity(ds.num_views());
        for v in ds.views() {
            let mask = v.mask();
            let c = view_centers_masked(v.loss, v.data.view(), mask.as_ref())?;
            let mut xe = v.data.clone();
            if let Some(m) = mask.as_ref() {
                Zip::indexed(&mut xe).for_each(|(i, j), e| {
                    if !m[[i, j]] {
                        *e = c[j];
                    }
                });
            }
            kinds.push(step_kind(v.loss, mask.is_some(), opts));
            offsets.push(offsets.last().unwrap() + v.ncols());
            centers.push(c);
            x.push(xe);
        }
        Ok(Problem {
            ds,
            pen,
            op: DifferenceOperator::new(&pen.graph),
            weights: pen.graph.weights(),
            centers,
            x,
            offsets,
            kinds,
        })
    }

    fn context<'s>(&'s self, k: usize, state: &'s SolverState<F>) -> ViewContext<'s, F> {
        let cols = s![.., self.offsets[k]..self.offsets[k + 1]];
        ViewContext {
            loss: self.ds.view(k).loss,
            x: self.x[k].view(),
            mask: self.ds.view(k).mask(),
            centers: self.centers[k].view(),
            pi: self.pen.pi[k],
            alpha: self.pen.alpha,
            zeta: self.pen.zeta[k].view(),
            rho: state.rho,
            op: &self.op,
            v: state.v.slice(cols),
            lambda: state.lambda.slice(cols),
        }
    }

    fn stacked_du(&self, views: &[ViewState<F>]) -> Result<Array2<F>> {
        let mut out = Array2::zeros((self.op.num_edges(), *self.offsets.last().unwrap()));
        for (k, vs) in views.iter().enumerate() {
            out.slice_mut(s![.., self.offsets[k]..self.offsets[k + 1]])
                .assign(&self.op.apply_d(vs.u.view())?);
        }
        Ok(out)
    }

    fn initial_state(&self, rho: F) -> Result<SolverState<F>> {
        let empty = SolverState {
            views: Vec::new(),
            v: Array2::zeros((self.op.num_edges(), *self.offsets.last().unwrap())),
            lambda: Array2::zeros((self.op.num_edges(), *self.offsets.last().unwrap())),
            rho,
            iteration: 0,
        };
        let views: Vec<ViewState<F>> = (0..self.ds.num_views())
            .map(|k| initial_view_state(&self.context(k, &empty), self.kinds[k]))
            .collect();
        let v = self.stacked_du(&views)?;
        Ok(SolverState { views, v, ..empty })
    }

    /// Checks a warm start's shapes and fills any split blocks it lacks.
    fn adopt(&self, warm: &SolverState<F>, rho: F) -> Result<SolverState<F>> {
        let fresh = self.initial_state(rho)?;
        if warm.views.len() != fresh.views.len() || warm.v.dim() != fresh.v.dim() {
            return Err(GeccoError::Shape("warm start does not match the problem".into()));
        }
        let mut state = warm.clone();
        if warm.rho != rho {
            state.rescale_rho(rho);
        }
        state.iteration = 0;
        let template = fresh_like(&state);
        for (k, (w, f)) in state.views.iter_mut().zip(fresh.views).enumerate() {
            if w.u.dim() != f.u.dim() {
                return Err(GeccoError::Shape(format!("warm start view {k} has the wrong shape")));
            }
            let kind = self.kinds[k];
            if kind.has_loss_split() != w.z.is_some() || kind.has_feature_split() != w.r.is_some() {
                // different step family: rebuild the split blocks around the warm U
                let ctx = self.context(k, &template);
                let mut rebuilt = initial_view_state(&ctx, kind);
                rebuilt.u = w.u.clone();
                if let Some(r) = rebuilt.r.as_mut() {
                    *r = &w.u - &center_matrix(self.centers[k].view(), w.u.nrows());
                }
                if let Some(z) = rebuilt.z.as_mut() {
                    *z = match kind {
                        StepKind::Hinge => Zip::from(&w.u)
                            .and(&self.x[k])
                            .map_collect(|u, x| F::one() - *u * *x),
                        _ => &self.x[k] - &w.u,
                    };
                }
                *w = rebuilt;
            }
            if w.steps.len() != f.steps.len() {
                w.steps = f.steps;
            }
        }
        Ok(state)
    }

    fn fusion_tol(&self, opts: &SolverOptions<F>) -> F {
        opts.fusion_tol.unwrap_or_else(|| {
            let xmax = self
                .x
                .iter()
                .flat_map(|m| m.iter())
                .fold(F::zero(), |a, v| a.max(v.abs()));
            F::lit(1e-6) * (F::one() + xmax)
        })
    }
}

fn fresh_like<F: Scalar>(s: &SolverState<F>) -> SolverState<F> {
    SolverState {
        views: Vec::new(),
        v: s.v.clone(),
        lambda: s.lambda.clone(),
        rho: s.rho,
        iteration: 0,
    }
}

fn fro<F: Scalar>(m: ArrayView2<F>) -> F {
    m.iter().map(|v| *v * *v).sum::<F>().sqrt()
}

fn fro_diff<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>) -> F {
    Zip::from(a)
        .and(b)
        .fold(F::zero(), |acc, x, y| acc + (*x - *y) * (*x - *y))
        .sqrt()
}

fn opt_fro_diff<F: Scalar>(a: &Option<Array2<F>>, b: &Option<Array2<F>>) -> F {
    match (a, b) {
        (Some(a), Some(b)) => fro_diff(a.view(), b.view()),
        _ => F::zero(),
    }
}

fn opt_fro<F: Scalar>(a: &Option<Array2<F>>) -> F {
    a.as_ref().map_or(F::zero(), |m| fro(m.view()))
}

/// The state a cold start begins from.
pub fn initial_state<F: Scalar>(
    ds: &MultiViewDataset<F>,
    pen: &Penalties<F>,
    opts: &SolverOptions<F>,
) -> Result<SolverState<F>> {
    Problem::new(ds, pen, opts)?.initial_state(opts.rho)
}

/// Fits the model. Uses the one-step engine unless `opts.mode` asks for
/// full subproblem solves.
pub fn fit<F: Scalar>(
    ds: &MultiViewDataset<F>,
    pen: &Penalties<F>,
    opts: &SolverOptions<F>,
    warm: Option<&SolverState<F>>,
) -> Result<Solution<F>> {
    let start = Instant::now();
    let prob = Problem::new(ds, pen, opts)?;
    let mut state = match warm {
        // an adapted rho carries over along a path
        Some(w) => prob.adopt(w, if opts.adaptive_rho { w.rho } else { opts.rho })?,
        None => prob.initial_state(opts.rho)?,
    };
    let lmax = F::from_usize_lossy(prob.op.spectral_bound());
    let backtracking = |rho: F| Backtracking {
        // steps longer than 1 / (rho ||D||^2) let the linearized coupling
        // term overshoot and the iteration cycles
        t0: if lmax > F::zero() {
            opts.initial_step.min((rho * lmax).recip())
        } else {
            opts.initial_step
        },
        beta: opts.backtrack_shrink,
        check: opts.check_majorization,
    };
    let inner = (opts.mode == SolverMode::FullSolve).then_some(Inner {
        tol: opts.inner_tol,
        max_iter: opts.inner_max_iter,
    });
    let mut history = Vec::new();
    let mut converged = false;

    for it in 1..=opts.max_iter {
        let prev = state.clone();
        let rho = state.rho;
        let bt = backtracking(rho);
        let updated: Vec<Result<ViewState<F>>> = (0..ds.num_views())
            .into_par_iter()
            .map(|k| {
                let ctx = prob.context(k, &prev);
                let mut vs = prev.views[k].clone();
                match prob.kinds[k] {
                    StepKind::ProxGradient => u_step_differentiable(&ctx, &mut vs, &bt, inner),
                    StepKind::Distance => u_step_nondiff(&ctx, &mut vs, inner),
                    StepKind::Euclidean => u_step_euclidean(&ctx, &mut vs, inner),
                    StepKind::Bernoulli => u_step_bernoulli(&ctx, &mut vs, inner),
                    StepKind::Hinge => u_step_hinge(&ctx, &mut vs, inner),
                }?;
                Ok(vs)
            })
            .collect();
        state.views = updated.into_iter().collect::<Result<_>>()?;

        let du = prob.stacked_du(&state.views)?;
        let mut v_new = &du + &state.lambda;
        prox_fusion_rows_inplace(&mut v_new, pen.gamma / rho, &prob.weights)?;
        state.lambda += &(&du - &v_new);
        state.v = v_new;
        state.iteration = it;

        let one = F::one();
        let mut primal = fro_diff(du.view(), state.v.view()) / fro(du.view()).max(fro(state.v.view())).max(one);
        let dv = &state.v - &prev.v;
        let dt_dv = fro(prob.op.apply_dt(dv.view())?.view());
        // scaled duals and primal blocks share units, so neither residual depends on rho
        let fusion_dual = dt_dv / fro(prob.op.apply_dt(state.lambda.view())?.view()).max(one);
        let mut dual = fusion_dual;
        // (primal, dual) per split block, for rebalancing rho
        let mut blocks = vec![(primal, fusion_dual)];
        for (k, (vs, old)) in state.views.iter().zip(&prev.views).enumerate() {
            let xt = center_matrix(prob.centers[k].view(), vs.u.nrows());
            let ushift = &vs.u - &xt;
            if let Some(r) = &vs.r {
                let p = fro_diff(ushift.view(), r.view()) / fro(ushift.view()).max(fro(r.view())).max(one);
                let d = opt_fro_diff(&vs.r, &old.r) / opt_fro(&vs.nu).max(one);
                primal = primal.max(p);
                dual = dual.max(d);
                blocks.push((p, d));
            }
            if let Some(z) = &vs.z {
                let lhs = match prob.kinds[k] {
                    StepKind::Hinge => Zip::from(&vs.u)
                        .and(&prob.x[k])
                        .map_collect(|u, x| one - *u * *x),
                    _ => &prob.x[k] - &vs.u,
                };
                let p = fro_diff(lhs.view(), z.view()) / fro(lhs.view()).max(fro(z.view())).max(one);
                let d = opt_fro_diff(&vs.z, &old.z) / opt_fro(&vs.psi).max(one);
                primal = primal.max(p);
                dual = dual.max(d);
                blocks.push((p, d));
            }
            let du_rel = fro_diff(vs.u.view(), old.u.view()) / fro(vs.u.view()).max(one);
            dual = dual.max(du_rel);
        }
        history.push(Residuals { primal, dual });

        let finite = primal.is_finite()
            && dual.is_finite()
            && state.views.iter().all(|v| v.u.iter().all(|x| x.is_finite()))
            && state.lambda.iter().all(|x| x.is_finite());
        if !finite {
            return Err(GeccoError::Diverged {
                iteration: it,
                primal: primal.as_f64(),
                dual: dual.as_f64(),
            });
        }
        if primal <= opts.tol_primal && dual <= opts.tol_dual {
            converged = true;
            break;
        }
        if opts.adaptive_rho && it % RHO_ADAPT_EVERY == 0 && it <= RHO_ADAPT_ITERS {
            // A block with an exactly zero residual is inactive (V = D U when
            // gamma = 0) or pinned (V = 0 under full fusion); neither says
            // anything about rho.
            let zero = F::zero();
            let (p, d) = blocks
                .iter()
                .filter(|(p, d)| *p > zero && *d > zero)
                .fold((zero, zero), |(a, b), (p, d)| (a.max(*p), b.max(*d)));
            let (mu, tau) = (F::lit(RHO_BALANCE), F::lit(RHO_FACTOR));
            let (lo, hi) = (opts.rho * F::lit(RHO_RANGE).recip(), opts.rho * F::lit(RHO_RANGE));
            if d > zero && p > mu * d && rho * tau <= hi {
                state.rescale_rho(rho * tau);
            } else if p > zero && d > mu * p && rho / tau >= lo {
                state.rescale_rho(rho / tau);
            }
        }
    }
    if !converged {
        log::warn!(
            "solver stopped at max_iter = {} without meeting the tolerances",
            opts.max_iter
        );
    }

    let u = state.u();
    let tol = prob.fusion_tol(opts);
    let labels = extract_clusters(state.v.view(), prob.op.pairs(), ds.n(), tol)?;
    let selected = selected_features(&u, &prob.centers, tol)?;
    let objective = objective_with_centers(ds, pen, &u, &prob.centers)?;
    Ok(Solution {
        num_clusters: num_clusters(&labels),
        labels,
        selected,
        v: state.v.clone(),
        centers: prob.centers,
        objective,
        iterations: state.iteration,
        converged,
        residuals: history,
        wall_time: start.elapsed(),
        u,
        state,
    })
}

/// Reference solver: every outer iteration solves each U-subproblem to
/// `inner_tol` (prox-gradient for smooth losses, split ADMM for distance
/// losses) before updating `V` and `Lambda`.
pub fn fit_fullsolve<F: Scalar>(
    ds: &MultiViewDataset<F>,
    pen: &Penalties<F>,
    opts: &SolverOptions<F>,
) -> Result<Solution<F>> {
    let opts = SolverOptions {
        mode: SolverMode::FullSolve,
        ..opts.clone()
    };
    fit(ds, pen, &opts, None)
}

/// Objective value at `u`: weighted deviances plus fusion and feature
/// penalties.
pub fn objective<F: Scalar>(ds: &MultiViewDataset<F>, pen: &Penalties<F>, u: &[Array2<F>]) -> Result<F> {
    let centers = ds
        .views()
        .iter()
        .map(|v| view_centers_masked(v.loss, v.data.view(), v.mask().as_ref()))
        .collect::<Result<Vec<_>>>()?;
    objective_with_centers(ds, pen, u, &centers)
}

pub fn objective_with_centers<F: Scalar>(
    ds: &MultiViewDataset<F>,
    pen: &Penalties<F>,
    u: &[Array2<F>],
    centers: &[Array1<F>],
) -> Result<F> {
    if u.len() != ds.num_views() || centers.len() != ds.num_views() {
        return Err(GeccoError::Shape("one U and one center vector per view".into()));
    }
    let mut total = F::zero();
    for (k, view) in ds.views().iter().enumerate() {
        if u[k].dim() != view.data.dim() {
            return Err(GeccoError::Shape(format!("U for view {k} has the wrong shape")));
        }
        total += pen.pi[k] * deviance(view.loss, view.data.view(), u[k].view(), view.mask().as_ref())?;
        if pen.alpha > F::zero() {
            let xt = center_matrix(centers[k].view(), view.nrows());
            let norms = column_norms((&u[k] - &xt).view());
            total += pen.alpha * norms.dot(&pen.zeta[k]);
        }
    }
    if pen.gamma > F::zero() {
        let mut fusion = F::zero();
        for e in pen.graph.edges() {
            let sq: F = u
                .iter()
                .map(|m| {
                    let d = &m.row(e.i) - &m.row(e.j);
                    d.dot(&d)
                })
                .sum();
            fusion += e.w * sq.sqrt();
        }
        total += pen.gamma * fusion;
    }
    Ok(total)
}

/// Subgradient of each view's loss at its center, zero on unobserved
/// entries.
fn center_subgradients<F: Scalar>(ds: &MultiViewDataset<F>) -> Result<Vec<Array2<F>>> {
    ds.views()
        .iter()
        .map(|v| {
            let mask = v.mask();
            let c = view_centers_masked(v.loss, v.data.view(), mask.as_ref())?;
            let xt = center_matrix(c.view(), v.nrows());
            let mut g = loss_subgradient(v.loss, v.data.view(), xt.view())?;
            if let Some(m) = mask {
                Zip::from(&mut g).and(&m).for_each(|g, o| {
                    if !*o {
                        *g = F::zero();
                    }
                });
            }
            Ok(g)
        })
        .collect()
}

/// A fusion strength above which every row of the solution equals the
/// centers: `C(n,2) * 2K / (n min w) * max_{i,k} pi_k ||g_k[i, .]||` with
/// `g_k` a subgradient of view `k`'s loss at its center.
pub fn gamma_bound<F: Scalar>(ds: &MultiViewDataset<F>, pen: &Penalties<F>) -> Result<F> {
    let Some(wmin) = pen.graph.min_weight() else {
        return Ok(F::infinity());
    };
    let n = F::from_usize_lossy(ds.n());
    let kk = F::from_usize_lossy(ds.num_views());
    let mut gmax = F::zero();
    for (g, pi) in center_subgradients(ds)?.iter().zip(&pen.pi) {
        for row in g.rows() {
            gmax = gmax.max(*pi * row.dot(&row).sqrt());
        }
    }
    let pairs = n * (n - F::one()) / F::lit(2.0);
    Ok(pairs * F::lit(2.0) * kk / (n * wmin) * gmax)
}

/// A feature-penalty strength above which every column equals its center:
/// `max_{j,k} pi_k ||g_k[., j]|| / min zeta`.
pub fn alpha_bound<F: Scalar>(ds: &MultiViewDataset<F>, pen: &Penalties<F>) -> Result<F> {
    let zmin = pen
        .zeta
        .iter()
        .flat_map(|z| z.iter().copied())
        .fold(F::infinity(), F::min);
    if zmin <= F::zero() {
        return Ok(F::infinity());
    }
    let mut gmax = F::zero();
    for (g, pi) in center_subgradients(ds)?.iter().zip(&pen.pi) {
        for c in column_norms(g.view()).iter() {
            gmax = gmax.max(*pi * *c);
        }
    }
    Ok(gmax / zmin)
}

#[cfg(test)]
mod tests;
