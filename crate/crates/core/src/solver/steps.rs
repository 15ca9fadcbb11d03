//! Per-view U-subproblem updates.
//!
//! Each function performs one update of a view's blocks given the current
//! fusion variables `V` and scaled duals `Lambda` for that view. With
//! `inner = Some(..)` the update is repeated until the subproblem itself
//! converges, which is what the full-solve reference algorithm uses.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rayon::prelude::*;

use crate::diffgraph::DifferenceOperator;
use crate::error::{GeccoError, Result};
use crate::loss::{center_matrix, mean_domain, sigmoid, LossSpec};
use crate::prox;
use crate::scalar::Scalar;

/// Everything a U-step needs to know about one view.
#[derive(Debug, Clone, Copy)]
pub struct ViewContext<'a, F> {
    pub loss: LossSpec<F>,
    /// Data with unobserved entries replaced by their column center.
    pub x: ArrayView2<'a, F>,
    pub mask: Option<ArrayView2<'a, bool>>,
    pub centers: ArrayView1<'a, F>,
    pub pi: F,
    pub alpha: F,
    pub zeta: ArrayView1<'a, F>,
    pub rho: F,
    pub op: &'a DifferenceOperator<F>,
    /// This view's columns of `V`.
    pub v: ArrayView2<'a, F>,
    /// This view's columns of `Lambda`.
    pub lambda: ArrayView2<'a, F>,
}

impl<F: Scalar> ViewContext<'_, F> {
    fn observed(&self, i: usize, j: usize) -> bool {
        self.mask.is_none_or(|m| m[[i, j]])
    }

    fn xt(&self) -> Array2<F> {
        center_matrix(self.centers, self.x.nrows())
    }
}

/// Primal and dual blocks of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState<F> {
    pub u: Array2<F>,
    /// Loss splitting variable and its dual (distance and hinge views).
    pub z: Option<Array2<F>>,
    pub psi: Option<Array2<F>>,
    /// Feature-penalty splitting variable and its dual.
    pub r: Option<Array2<F>>,
    pub nu: Option<Array2<F>>,
    /// Last accepted step size per column (prox-gradient views).
    pub steps: Array1<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// One backtracked prox-gradient step per column.
    ProxGradient,
    /// Loss split `X - U = Z` and feature split `U - X~ = R`.
    Distance,
    /// Bounded-hessian step for the Bernoulli log-likelihood.
    Bernoulli,
    /// Closed-form least-squares step.
    Euclidean,
    /// Split `1 - U o X = Z` for the hinge loss.
    Hinge,
}

impl StepKind {
    pub fn has_loss_split(self) -> bool {
        matches!(self, StepKind::Distance | StepKind::Hinge)
    }

    pub fn has_feature_split(self) -> bool {
        !matches!(self, StepKind::ProxGradient)
    }
}

/// Inner-loop settings for full subproblem solves.
#[derive(Debug, Clone, Copy)]
pub struct Inner<F> {
    pub tol: F,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Backtracking<F> {
    pub t0: F,
    pub beta: F,
    pub check: bool,
}

/// Starting blocks for a view: `U` at the data (or at the centers for
/// log-scale losses), every split constraint satisfied, zero duals.
pub fn initial_view_state<F: Scalar>(ctx: &ViewContext<'_, F>, kind: StepKind) -> ViewState<F> {
    let eps = F::domain_eps();
    let u = match ctx.loss {
        LossSpec::PoissonLl
        | LossSpec::NegbinLl { .. }
        | LossSpec::BernoulliLl
        | LossSpec::MultinomialLl { .. } => ctx.xt(),
        LossSpec::PoissonDev | LossSpec::NegbinDev { .. } => ctx.x.mapv(|v| v.max(eps)),
        LossSpec::BinomialDev => ctx.x.mapv(|v| v.max(eps).min(F::one() - eps)),
        _ => ctx.x.to_owned(),
    };
    let (n, p) = u.dim();
    let z = match kind {
        StepKind::Distance => Some(&ctx.x - &u),
        StepKind::Hinge => Some(Zip::from(&u).and(&ctx.x).map_collect(|a, b| F::one() - *a * *b)),
        _ => None,
    };
    let psi = z.as_ref().map(|_| Array2::zeros((n, p)));
    let (r, nu) = if kind.has_feature_split() {
        (Some(&u - &ctx.xt()), Some(Array2::zeros((n, p))))
    } else {
        (None, None)
    };
    ViewState {
        u,
        z,
        psi,
        r,
        nu,
        steps: Array1::from_elem(p, F::one()),
    }
}

fn fro<F: Scalar>(m: &Array2<F>) -> F {
    m.iter().map(|v| *v * *v).sum::<F>().sqrt()
}

fn rel_change<F: Scalar>(new: &Array2<F>, old: &Array2<F>) -> F {
    let d = Zip::from(new)
        .and(old)
        .fold(F::zero(), |acc, a, b| acc + (*a - *b) * (*a - *b))
        .sqrt();
    d / fro(new).max(F::one())
}

// ---------------------------------------------------------------------------
// Prox-gradient columns

/// Loss of column `j` when it takes the values `col`, other columns fixed.
fn column_loss<F: Scalar>(ctx: &ViewContext<'_, F>, u: ArrayView2<F>, j: usize, col: ArrayView1<F>) -> F {
    match ctx.loss {
        LossSpec::MultinomialLl { classes } => {
            let p = u.ncols() / classes;
            let jj = j % p;
            let mut total = F::zero();
            for i in 0..u.nrows() {
                if !(0..classes).all(|c| ctx.observed(i, c * p + jj)) {
                    continue;
                }
                let val = |c: usize| {
                    let k = c * p + jj;
                    if k == j {
                        col[i]
                    } else {
                        u[[i, k]]
                    }
                };
                let m = (0..classes).map(val).fold(F::neg_infinity(), F::max);
                let lse = m + (0..classes).map(|c| (val(c) - m).exp()).sum::<F>().ln();
                total += lse;
                for c in 0..classes {
                    total -= ctx.x[[i, c * p + jj]] * val(c);
                }
            }
            total
        }
        spec => {
            let xj = ctx.x.column(j);
            let mut total = F::zero();
            for i in 0..col.len() {
                if ctx.observed(i, j) {
                    match crate::loss::elem_value(spec, xj[i], col[i]) {
                        Some(v) => total += v,
                        None => return F::infinity(),
                    }
                }
            }
            total
        }
    }
}

fn column_loss_grad<F: Scalar>(ctx: &ViewContext<'_, F>, u: ArrayView2<F>, j: usize, col: ArrayView1<F>) -> Array1<F> {
    match ctx.loss {
        LossSpec::MultinomialLl { classes } => {
            let p = u.ncols() / classes;
            let jj = j % p;
            Array1::from_shape_fn(col.len(), |i| {
                if !(0..classes).all(|c| ctx.observed(i, c * p + jj)) {
                    return F::zero();
                }
                let val = |c: usize| {
                    let k = c * p + jj;
                    if k == j {
                        col[i]
                    } else {
                        u[[i, k]]
                    }
                };
                let m = (0..classes).map(val).fold(F::neg_infinity(), F::max);
                let z: F = (0..classes).map(|c| (val(c) - m).exp()).sum();
                (col[i] - m).exp() / z - ctx.x[[i, j]]
            })
        }
        spec => {
            let xj = ctx.x.column(j);
            Array1::from_shape_fn(col.len(), |i| {
                if ctx.observed(i, j) {
                    crate::loss::elem_grad(spec, xj[i], col[i])
                } else {
                    F::zero()
                }
            })
        }
    }
}

/// `D u - c` for one column.
fn column_residual<F: Scalar>(op: &DifferenceOperator<F>, u: ArrayView1<F>, c: ArrayView1<F>) -> Array1<F> {
    Array1::from_shape_fn(op.num_edges(), |l| {
        let (a, b) = op.pairs()[l];
        u[a] - u[b] - c[l]
    })
}

fn column_dt<F: Scalar>(op: &DifferenceOperator<F>, r: &Array1<F>) -> Array1<F> {
    let mut out = Array1::zeros(op.n());
    for (l, &(a, b)) in op.pairs().iter().enumerate() {
        out[a] += r[l];
        out[b] -= r[l];
    }
    out
}

/// Result of one backtracked prox-gradient step on a column, in the
/// shifted coordinates `u~ = U_.j - x~_j`.
#[derive(Debug, Clone)]
pub struct ColumnStep<F> {
    pub start: Array1<F>,
    pub next: Array1<F>,
    pub step: F,
    pub g_start: F,
    pub g_next: F,
    pub grad: Array1<F>,
}

impl<F: Scalar> ColumnStep<F> {
    /// `g(z) <= g(u) - grad^T (u - z) + ||z - u||^2 / (2t)`.
    pub fn satisfies_majorization(&self, slack: F) -> bool {
        let diff = &self.start - &self.next;
        let bound = self.g_start - self.grad.dot(&diff) + diff.dot(&diff) / (F::lit(2.0) * self.step);
        self.g_next <= bound + slack * (F::one() + bound.abs())
    }
}

/// One backtracked prox-gradient step on column `j` of a differentiable view.
pub fn prox_gradient_column<F: Scalar>(
    ctx: &ViewContext<'_, F>,
    u: ArrayView2<F>,
    j: usize,
    bt: &Backtracking<F>,
) -> Result<ColumnStep<F>> {
    let xt = ctx.centers[j];
    let c = &ctx.v.column(j) - &ctx.lambda.column(j);
    let half_rho = ctx.rho * F::lit(0.5);
    let g = |ut: &Array1<F>| -> (F, Array1<F>) {
        let col = ut.mapv(|v| v + xt);
        let res = column_residual(ctx.op, ut.view(), c.view());
        (
            ctx.pi * column_loss(ctx, u, j, col.view()) + half_rho * res.dot(&res),
            res,
        )
    };
    let start = u.column(j).mapv(|v| v - xt);
    let (g_start, res) = g(&start);
    if !g_start.is_finite() {
        return Err(GeccoError::Numerical(format!(
            "column {j}: smooth part is not finite at the current iterate"
        )));
    }
    let col = start.mapv(|v| v + xt);
    let grad = column_loss_grad(ctx, u, j, col.view()) * ctx.pi + column_dt(ctx.op, &res) * ctx.rho;
    let thresh = ctx.alpha * ctx.zeta[j];
    let domain = mean_domain(ctx.loss);
    let mut t = bt.t0;
    let min_step = F::lit(1e-14);
    loop {
        let mut next = prox::prox_group_l2(
            Zip::from(&start).and(&grad).map_collect(|a, b| *a - t * *b).view(),
            t * thresh,
        );
        // entries whose loss infimum sits on the domain boundary (a zero count
        // under a deviance) would otherwise need ever smaller steps
        if let Some((lo, hi)) = domain {
            next.mapv_inplace(|v| (v + xt).max(lo).min(hi) - xt);
        }
        let (g_next, _) = g(&next);
        let diff = &start - &next;
        let bound = g_start - grad.dot(&diff) + diff.dot(&diff) / (F::lit(2.0) * t);
        // rounding slack so that a converged column does not trigger endless halving
        let slack = F::epsilon() * F::lit(64.0) * (F::one() + g_start.abs());
        if g_next <= bound + slack {
            let step = ColumnStep {
                start,
                next,
                step: t,
                g_start,
                g_next,
                grad,
            };
            if bt.check && !step.satisfies_majorization(F::epsilon() * F::lit(128.0)) {
                return Err(GeccoError::Numerical(format!(
                    "column {j}: accepted step violates the majorization bound"
                )));
            }
            return Ok(step);
        }
        t *= bt.beta;
        if t < min_step {
            return Err(GeccoError::Numerical(format!(
                "column {j}: backtracking step fell below {}",
                min_step
            )));
        }
    }
}

/// Prox-gradient update of every column of a differentiable view.
pub fn u_step_differentiable<F: Scalar>(
    ctx: &ViewContext<'_, F>,
    state: &mut ViewState<F>,
    bt: &Backtracking<F>,
    inner: Option<Inner<F>>,
) -> Result<usize> {
    if !ctx.loss.is_differentiable() {
        return Err(GeccoError::NotDifferentiable(ctx.loss.name()));
    }
    let p = state.u.ncols();
    let (tol, max_iter) = inner.map_or((F::zero(), 1), |i| (i.tol, i.max_iter.max(1)));
    if ctx.loss.is_elementwise() {
        // columns are independent: each runs its own loop
        let snapshot = state.u.clone();
        let results: Vec<Result<(Array1<F>, F, usize)>> = (0..p)
            .into_par_iter()
            .map(|j| {
                let mut work = snapshot.clone();
                let mut last_t = F::one();
                for it in 0..max_iter {
                    let s = prox_gradient_column(ctx, work.view(), j, bt)?;
                    let delta = (&s.next - &s.start).mapv(|v| v * v).sum().sqrt();
                    let scale = s.next.mapv(|v| (v + ctx.centers[j]) * (v + ctx.centers[j])).sum().sqrt();
                    work.column_mut(j).assign(&s.next.mapv(|v| v + ctx.centers[j]));
                    last_t = s.step;
                    if inner.is_none() || delta <= tol * scale.max(F::one()) {
                        return Ok((work.column(j).to_owned(), last_t, it + 1));
                    }
                }
                Ok((work.column(j).to_owned(), last_t, max_iter))
            })
            .collect();
        let mut iters = 0;
        for (j, r) in results.into_iter().enumerate() {
            let (col, t, it) = r?;
            state.u.column_mut(j).assign(&col);
            state.steps[j] = t;
            iters = iters.max(it);
        }
        Ok(iters)
    } else {
        for it in 0..max_iter {
            let prev = state.u.clone();
            for j in 0..p {
                let s = prox_gradient_column(ctx, state.u.view(), j, bt)?;
                state.u.column_mut(j).assign(&s.next.mapv(|v| v + ctx.centers[j]));
                state.steps[j] = s.step;
            }
            if inner.is_none() || rel_change(&state.u, &prev) <= tol {
                return Ok(it + 1);
            }
        }
        Ok(max_iter)
    }
}

// ---------------------------------------------------------------------------
// Split blocks shared by the distance, Bernoulli, Euclidean and hinge steps

fn take<'s, F>(b: &'s mut Option<Array2<F>>, what: &str) -> Result<&'s mut Array2<F>> {
    b.as_mut()
        .ok_or_else(|| GeccoError::InvalidParameter(format!("view state is missing block {what}")))
}

/// `R = prox(U - X~ + N)` column-wise with thresholds `alpha zeta_j / rho`,
/// then `N += U - X~ - R`.
fn update_feature_split<F: Scalar>(ctx: &ViewContext<'_, F>, state: &mut ViewState<F>) -> Result<()> {
    let centers = ctx.centers;
    let u = &state.u;
    let r = state.r.as_mut().ok_or_else(|| GeccoError::InvalidParameter("missing R".into()))?;
    let nu = state.nu.as_mut().ok_or_else(|| GeccoError::InvalidParameter("missing N".into()))?;
    for j in 0..u.ncols() {
        let shifted = u.column(j).mapv(|v| v - centers[j]);
        let target = &shifted + &nu.column(j);
        let rj = prox::prox_group_l2(target.view(), ctx.alpha * ctx.zeta[j] / ctx.rho);
        let mut nj = nu.column_mut(j);
        nj += &(&shifted - &rj);
        r.column_mut(j).assign(&rj);
    }
    Ok(())
}

/// `D^T (V - Lambda) + X~ + R - N`.
fn fusion_and_feature_rhs<F: Scalar>(ctx: &ViewContext<'_, F>, state: &ViewState<F>) -> Result<Array2<F>> {
    let r = state.r.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing R".into()))?;
    let nu = state.nu.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing N".into()))?;
    let mut rhs = ctx.op.apply_dt((&ctx.v - &ctx.lambda).view())?;
    rhs += &ctx.xt();
    rhs += r;
    rhs -= nu;
    Ok(rhs)
}

fn run_inner<F: Scalar>(
    inner: Option<Inner<F>>,
    state: &mut ViewState<F>,
    mut sweep: impl FnMut(&mut ViewState<F>) -> Result<F>,
) -> Result<usize> {
    let Some(inner) = inner else {
        sweep(state)?;
        return Ok(1);
    };
    for it in 0..inner.max_iter.max(1) {
        let prev = state.u.clone();
        let aux = sweep(state)?;
        if rel_change(&state.u, &prev).max(aux) <= inner.tol {
            return Ok(it + 1);
        }
    }
    Ok(inner.max_iter)
}

fn split_residual<F: Scalar>(lhs: &Array2<F>, rhs: &Array2<F>) -> F {
    let d = Zip::from(lhs)
        .and(rhs)
        .fold(F::zero(), |acc, a, b| acc + (*a - *b) * (*a - *b))
        .sqrt();
    d / fro(lhs).max(fro(rhs)).max(F::one())
}

fn feature_split_residual<F: Scalar>(ctx: &ViewContext<'_, F>, state: &ViewState<F>) -> F {
    match &state.r {
        Some(r) => split_residual(&(&state.u - &ctx.xt()), r),
        None => F::zero(),
    }
}

/// Prox of `t f` for a distance loss `f`, skipping unobserved entries.
pub fn prox_distance<F: Scalar>(
    loss: LossSpec<F>,
    w: ArrayView2<F>,
    t: F,
    mask: Option<ArrayView2<bool>>,
) -> Result<Array2<F>> {
    match loss {
        LossSpec::Manhattan => Ok(Array2::from_shape_fn(w.dim(), |(i, j)| {
            if mask.is_none_or(|m| m[[i, j]]) {
                prox::soft_threshold(w[[i, j]], t)
            } else {
                w[[i, j]]
            }
        })),
        LossSpec::Minkowski { q } => {
            let rows: Vec<Result<Array1<F>>> = (0..w.nrows())
                .into_par_iter()
                .map(|i| prox::prox_lq_row_masked(w.row(i), t, q, mask.as_ref().map(|m| m.row(i))))
                .collect();
            let mut out = Array2::zeros(w.dim());
            for (i, r) in rows.into_iter().enumerate() {
                out.row_mut(i).assign(&r?);
            }
            Ok(out)
        }
        LossSpec::Chebychev => {
            let mut out = Array2::zeros(w.dim());
            for i in 0..w.nrows() {
                out.row_mut(i)
                    .assign(&prox::prox_linf_row_masked(w.row(i), t, mask.as_ref().map(|m| m.row(i))));
            }
            Ok(out)
        }
        other => Err(GeccoError::InvalidParameter(format!(
            "`{}` is not a distance loss",
            other.name()
        ))),
    }
}

/// One sweep (or a full inner solve) of the split updates for a distance
/// loss: `U`, then `Z`, `R`, `Psi`, `N`.
pub fn u_step_nondiff<F: Scalar>(
    ctx: &ViewContext<'_, F>,
    state: &mut ViewState<F>,
    inner: Option<Inner<F>>,
) -> Result<usize> {
    if !ctx.loss.is_distance() {
        return Err(GeccoError::InvalidParameter(format!(
            "`{}` is not a distance loss",
            ctx.loss.name()
        )));
    }
    let t = ctx.pi / ctx.rho;
    run_inner(inner, state, |st| {
        let mut rhs = fusion_and_feature_rhs(ctx, st)?;
        {
            let z = take(&mut st.z, "Z")?;
            rhs += &ctx.x;
            rhs -= &*z;
        }
        rhs += &*take(&mut st.psi, "Psi")?;
        st.u = ctx.op.solve_shifted_laplacian(F::lit(2.0), rhs.view())?;
        let target = &(&ctx.x - &st.u) + &*take(&mut st.psi, "Psi")?;
        let z_new = prox_distance(ctx.loss, target.view(), t, ctx.mask)?;
        update_feature_split(ctx, st)?;
        let loss_gap = &ctx.x - &st.u;
        {
            let psi = take(&mut st.psi, "Psi")?;
            *psi += &(&loss_gap - &z_new);
        }
        let aux = split_residual(&loss_gap, &z_new).max(feature_split_residual(ctx, st));
        st.z = Some(z_new);
        Ok(aux)
    })
}

/// Closed-form least-squares step:
/// `(D^T D + (1 + pi/rho) I) U = (pi/rho) X + D^T (V - Lambda) + X~ + R - N`.
pub fn u_step_euclidean<F: Scalar>(
    ctx: &ViewContext<'_, F>,
    state: &mut ViewState<F>,
    inner: Option<Inner<F>>,
) -> Result<usize> {
    if ctx.loss != LossSpec::Euclidean || ctx.mask.is_some() {
        return Err(GeccoError::InvalidParameter(
            "closed-form step needs a fully observed euclidean view".into(),
        ));
    }
    let ratio = ctx.pi / ctx.rho;
    run_inner(inner, state, |st| {
        let mut rhs = fusion_and_feature_rhs(ctx, st)?;
        rhs.scaled_add(ratio, &ctx.x);
        st.u = ctx.op.solve_shifted_laplacian(F::one() + ratio, rhs.view())?;
        update_feature_split(ctx, st)?;
        Ok(feature_split_residual(ctx, st))
    })
}

/// Bounded-hessian step for the Bernoulli log-likelihood, whose hessian is
/// at most `pi / 4`:
/// `U -= (pi/4 I + rho D^T D + rho I)^{-1} [grad of the augmented U terms]`.
pub fn u_step_bernoulli<F: Scalar>(
    ctx: &ViewContext<'_, F>,
    state: &mut ViewState<F>,
    inner: Option<Inner<F>>,
) -> Result<usize> {
    if ctx.loss != LossSpec::BernoulliLl {
        return Err(GeccoError::InvalidParameter("bounded-hessian step needs bernoulli_ll".into()));
    }
    let shift = F::one() + ctx.pi / (F::lit(4.0) * ctx.rho);
    run_inner(inner, state, |st| {
        let mut g = Array2::from_shape_fn(st.u.dim(), |(i, j)| {
            if ctx.observed(i, j) {
                sigmoid(st.u[[i, j]]) - ctx.x[[i, j]]
            } else {
                F::zero()
            }
        });
        g.mapv_inplace(|v| v * ctx.pi / ctx.rho);
        let du = ctx.op.apply_d(st.u.view())?;
        g += &ctx.op.apply_dt((&(&du - &ctx.v) + &ctx.lambda).view())?;
        let r = st.r.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing R".into()))?;
        let nu = st.nu.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing N".into()))?;
        g += &(&(&(&st.u - &ctx.xt()) - r) + nu);
        let step = ctx.op.solve_shifted_laplacian(shift, g.view())?;
        st.u -= &step;
        update_feature_split(ctx, st)?;
        Ok(feature_split_residual(ctx, st))
    })
}

/// Split update for the hinge loss with constraint `1 - U o X = Z`:
/// `(D^T D + 2I) U = D^T (V - Lambda) + X~ + R - N - X o (Z - 1 - Psi)
/// + (1 - X o X) o U_prev`, then `Z`, `Psi`, `R`, `N`.
pub fn u_step_hinge<F: Scalar>(
    ctx: &ViewContext<'_, F>,
    state: &mut ViewState<F>,
    inner: Option<Inner<F>>,
) -> Result<usize> {
    if ctx.loss != LossSpec::Hinge {
        return Err(GeccoError::InvalidParameter("hinge step needs a hinge view".into()));
    }
    if ctx.x.iter().any(|v| v.abs() != F::one()) {
        return Err(GeccoError::InvalidData("hinge data must be -1 or +1".into()));
    }
    let one = F::one();
    run_inner(inner, state, |st| {
        let mut rhs = fusion_and_feature_rhs(ctx, st)?;
        {
            let z = st.z.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing Z".into()))?;
            let psi = st.psi.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing Psi".into()))?;
            Zip::from(&mut rhs)
                .and(&ctx.x)
                .and(z)
                .and(psi)
                .and(&st.u)
                .for_each(|r, x, z, psi, u| {
                    *r += -*x * (*z - one - *psi) + (one - *x * *x) * *u;
                });
        }
        st.u = ctx.op.solve_shifted_laplacian(F::lit(2.0), rhs.view())?;
        let margin = Zip::from(&st.u).and(&ctx.x).map_collect(|u, x| one - *u * *x);
        let t = ctx.pi / ctx.rho;
        let z_new = {
            let psi = st.psi.as_ref().ok_or_else(|| GeccoError::InvalidParameter("missing Psi".into()))?;
            Array2::from_shape_fn(margin.dim(), |(i, j)| {
                let tt = if ctx.observed(i, j) { t } else { F::zero() };
                prox::prox_hinge_scalar(margin[[i, j]] + psi[[i, j]], tt)
            })
        };
        {
            let psi = take(&mut st.psi, "Psi")?;
            *psi += &(&margin - &z_new);
        }
        update_feature_split(ctx, st)?;
        let aux = split_residual(&margin, &z_new).max(feature_split_residual(ctx, st));
        st.z = Some(z_new);
        Ok(aux)
    })
}

