//! Convex clustering losses, their gradients, and loss-specific centers.
//!
//! Every loss is evaluated on an `n x p` data matrix `X` against a centroid
//! matrix `U` of the same shape. Most losses are elementwise sums; Minkowski
//! and Chebychev are sums of row norms; the multinomial log-likelihood works
//! on the expanded indicator layout `[X^(1) ... X^(K)]`, where column
//! `c * p + j` holds the indicator of class `c` for original feature `j`.
//!
//! [`loss_value`] reproduces the textbook form of each loss. The solver's
//! objective uses [`deviance`] instead, which subtracts the loss at its
//! unconstrained per-entry minimum so that every view contributes a
//! nonnegative amount and the null deviance of a view is positive.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{GeccoError, Result};
use crate::prox;
use crate::scalar::Scalar;

/// Loss attached to a data view, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec<F> {
    Euclidean,
    Manhattan,
    /// Row-wise `l_q` distance, `q > 1`.
    Minkowski { q: F },
    Chebychev,
    PoissonLl,
    PoissonDev,
    /// Negative binomial log-likelihood with dispersion `theta = 1 / alpha`.
    NegbinLl { dispersion: F },
    NegbinDev { dispersion: F },
    BernoulliLl,
    BinomialDev,
    MultinomialLl { classes: usize },
    Hinge,
}

impl<F: Scalar> fmt::Display for LossSpec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl<F: Scalar> LossSpec<F> {
    pub const NAMES: [&'static str; 12] = [
        "euclidean",
        "manhattan",
        "minkowski",
        "chebychev",
        "poisson_ll",
        "poisson_dev",
        "negbin_ll",
        "negbin_dev",
        "bernoulli_ll",
        "binomial_dev",
        "multinomial_ll",
        "hinge",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Euclidean => "euclidean",
            LossSpec::Manhattan => "manhattan",
            LossSpec::Minkowski { .. } => "minkowski",
            LossSpec::Chebychev => "chebychev",
            LossSpec::PoissonLl => "poisson_ll",
            LossSpec::PoissonDev => "poisson_dev",
            LossSpec::NegbinLl { .. } => "negbin_ll",
            LossSpec::NegbinDev { .. } => "negbin_dev",
            LossSpec::BernoulliLl => "bernoulli_ll",
            LossSpec::BinomialDev => "binomial_dev",
            LossSpec::MultinomialLl { .. } => "multinomial_ll",
            LossSpec::Hinge => "hinge",
        }
    }

    /// Builds a spec from its name and optional parameters, rejecting
    /// parameters that the kind does not take.
    pub fn from_parts(
        name: &str,
        q: Option<F>,
        dispersion: Option<F>,
        classes: Option<usize>,
    ) -> Result<Self> {
        let spec = match name {
            "euclidean" => LossSpec::Euclidean,
            "manhattan" => LossSpec::Manhattan,
            "minkowski" => LossSpec::Minkowski {
                q: q.ok_or_else(|| missing("minkowski", "q"))?,
            },
            "chebychev" => LossSpec::Chebychev,
            "poisson_ll" => LossSpec::PoissonLl,
            "poisson_dev" => LossSpec::PoissonDev,
            "negbin_ll" => LossSpec::NegbinLl {
                dispersion: dispersion.ok_or_else(|| missing("negbin_ll", "dispersion"))?,
            },
            "negbin_dev" => LossSpec::NegbinDev {
                dispersion: dispersion.ok_or_else(|| missing("negbin_dev", "dispersion"))?,
            },
            "bernoulli_ll" => LossSpec::BernoulliLl,
            "binomial_dev" => LossSpec::BinomialDev,
            "multinomial_ll" => LossSpec::MultinomialLl {
                classes: classes.ok_or_else(|| missing("multinomial_ll", "classes"))?,
            },
            "hinge" => LossSpec::Hinge,
            other => {
                return Err(GeccoError::InvalidParameter(format!(
                    "unknown loss `{other}`"
                )))
            }
        };
        let takes_q = matches!(spec, LossSpec::Minkowski { .. });
        let takes_disp = matches!(spec, LossSpec::NegbinLl { .. } | LossSpec::NegbinDev { .. });
        let takes_classes = matches!(spec, LossSpec::MultinomialLl { .. });
        if (q.is_some() && !takes_q)
            || (dispersion.is_some() && !takes_disp)
            || (classes.is_some() && !takes_classes)
        {
            return Err(GeccoError::InvalidParameter(format!(
                "loss `{name}` given a parameter it does not take"
            )));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Minkowski { q } if !(q.is_finite() && q > F::one()) => Err(
                GeccoError::InvalidParameter(format!("minkowski exponent must be > 1, got {q}")),
            ),
            LossSpec::NegbinLl { dispersion } | LossSpec::NegbinDev { dispersion }
                if !(dispersion.is_finite() && dispersion > F::zero()) =>
            {
                Err(GeccoError::InvalidParameter(format!(
                    "negative binomial dispersion must be > 0, got {dispersion}"
                )))
            }
            LossSpec::MultinomialLl { classes } if classes < 2 => Err(
                GeccoError::InvalidParameter("multinomial needs at least 2 classes".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(
            self,
            LossSpec::Manhattan | LossSpec::Minkowski { .. } | LossSpec::Chebychev | LossSpec::Hinge
        )
    }

    /// Losses written as `f(X - U)` for a convex, non-smooth `f`.
    pub fn is_distance(&self) -> bool {
        matches!(
            self,
            LossSpec::Manhattan | LossSpec::Minkowski { .. } | LossSpec::Chebychev
        )
    }

    /// Losses that are a sum of per-row norms rather than per-entry terms.
    pub fn is_rowwise(&self) -> bool {
        matches!(self, LossSpec::Minkowski { .. } | LossSpec::Chebychev)
    }

    /// Whether every entry contributes an independent term.
    pub fn is_elementwise(&self) -> bool {
        !self.is_rowwise() && !matches!(self, LossSpec::MultinomialLl { .. })
    }

    /// Checks that a data matrix lies in the domain this loss expects.
    pub fn check_data(&self, x: ArrayView2<F>) -> Result<()> {
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(GeccoError::InvalidData(format!(
                "non-finite entry at ({i}, {j})"
            )));
        }
        fn bad<F: Scalar>(what: &str) -> impl Fn(((usize, usize), &F)) -> GeccoError + '_ {
            move |((i, j), v)| GeccoError::InvalidData(format!("{what}: entry ({i}, {j}) = {v}"))
        }
        match *self {
            LossSpec::BernoulliLl | LossSpec::BinomialDev => {
                if let Some(e) = x
                    .indexed_iter()
                    .find(|(_, v)| **v < F::zero() || **v > F::one())
                {
                    return Err(bad("expected values in [0, 1]")(e));
                }
            }
            LossSpec::Hinge => {
                if let Some(e) = x
                    .indexed_iter()
                    .find(|(_, v)| **v != F::one() && **v != -F::one())
                {
                    return Err(bad("hinge data must be -1 or +1")(e));
                }
            }
            LossSpec::PoissonLl
            | LossSpec::PoissonDev
            | LossSpec::NegbinLl { .. }
            | LossSpec::NegbinDev { .. } => {
                if let Some(e) = x.indexed_iter().find(|(_, v)| **v < F::zero()) {
                    return Err(bad("count data must be nonnegative")(e));
                }
            }
            LossSpec::MultinomialLl { classes } => {
                let p = multinomial_features(x.ncols(), classes)?;
                let tol = F::lit(1e-8).max(F::epsilon() * F::lit(16.0));
                for i in 0..x.nrows() {
                    for j in 0..p {
                        let mut s = F::zero();
                        for c in 0..classes {
                            let v = x[[i, c * p + j]];
                            if v < F::zero() || v > F::one() {
                                return Err(bad("multinomial indicators must be in [0, 1]")((
                                    (i, c * p + j),
                                    &v,
                                )));
                            }
                            s += v;
                        }
                        if (s - F::one()).abs() > tol {
                            return Err(GeccoError::InvalidData(format!(
                                "multinomial block (row {i}, feature {j}) sums to {s}, not 1"
                            )));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn missing(kind: &str, param: &str) -> GeccoError {
    GeccoError::InvalidParameter(format!("loss `{kind}` requires parameter `{param}`"))
}

/// Number of original features behind an expanded multinomial matrix.
pub fn multinomial_features(ncols: usize, classes: usize) -> Result<usize> {
    if classes < 2 || ncols % classes != 0 {
        return Err(GeccoError::Shape(format!(
            "{ncols} columns is not a multiple of {classes} classes"
        )));
    }
    Ok(ncols / classes)
}

fn check_same_shape<F>(x: ArrayView2<F>, u: ArrayView2<F>) -> Result<()> {
    if x.dim() != u.dim() {
        return Err(GeccoError::Shape(format!(
            "data is {:?} but centroids are {:?}",
            x.dim(),
            u.dim()
        )));
    }
    Ok(())
}

#[inline]
fn xlogy<F: Scalar>(x: F, y: F) -> F {
    if x == F::zero() {
        F::zero()
    } else {
        x * y.ln()
    }
}

/// `log(1 + e^u)` without overflow.
#[inline]
pub(crate) fn softplus<F: Scalar>(u: F) -> F {
    if u > F::zero() {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid<F: Scalar>(u: F) -> F {
    if u >= F::zero() {
        F::one() / (F::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (F::one() + e)
    }
}

/// `log(a + e^b)` for `a > 0`, computed as a log-sum-exp.
#[inline]
fn log_add_exp<F: Scalar>(log_a: F, b: F) -> F {
    let m = log_a.max(b);
    m + ((log_a - m).exp() + (b - m).exp()).ln()
}

/// Clamps a mean-scale argument into `[eps, inf)`, or reports a domain
/// violation when it is negative.
#[inline]
fn clamp_positive<F: Scalar>(u: F) -> Option<F> {
    if u < F::zero() || u.is_nan() {
        None
    } else {
        Some(u.max(F::domain_eps()))
    }
}

#[inline]
fn clamp_unit<F: Scalar>(u: F) -> Option<F> {
    if u < F::zero() || u > F::one() || u.is_nan() {
        None
    } else {
        let e = F::domain_eps();
        Some(u.max(e).min(F::one() - e))
    }
}

/// Closed range the solver keeps mean-scale centroids in, for losses
/// whose domain is bounded.
pub(crate) fn mean_domain<F: Scalar>(spec: LossSpec<F>) -> Option<(F, F)> {
    let e = F::domain_eps();
    match spec {
        LossSpec::PoissonDev | LossSpec::NegbinDev { .. } => Some((e, F::infinity())),
        LossSpec::BinomialDev => Some((e, F::one() - e)),
        _ => None,
    }
}

/// Per-entry loss for elementwise kinds; `None` outside the domain.
pub(crate) fn elem_value<F: Scalar>(spec: LossSpec<F>, x: F, u: F) -> Option<F> {
    let half = F::lit(0.5);
    Some(match spec {
        LossSpec::Euclidean => half * (x - u) * (x - u),
        LossSpec::Manhattan => (x - u).abs(),
        LossSpec::PoissonLl => -x * u + u.exp(),
        LossSpec::PoissonDev => {
            let u = clamp_positive(u)?;
            -x * u.ln() + u
        }
        LossSpec::NegbinLl { dispersion: th } => -x * u + (x + th) * log_add_exp(th.ln(), u),
        LossSpec::NegbinDev { dispersion: th } => {
            let u = clamp_positive(u)?;
            xlogy(x, x) - x * u.ln() - (x + th) * ((th + x).ln() - (th + u).ln())
        }
        LossSpec::BernoulliLl => -x * u + softplus(u),
        LossSpec::BinomialDev => {
            let u = clamp_unit(u)?;
            -x * u.ln() - (F::one() - x) * (F::one() - u).ln()
        }
        LossSpec::Hinge => (F::one() - u * x).max(F::zero()),
        LossSpec::Minkowski { .. } | LossSpec::Chebychev | LossSpec::MultinomialLl { .. } => {
            unreachable!("not an elementwise loss")
        }
    })
}

/// Infimum of the per-entry loss over `u`.
fn elem_saturated<F: Scalar>(spec: LossSpec<F>, x: F) -> F {
    let one = F::one();
    match spec {
        LossSpec::PoissonLl | LossSpec::PoissonDev => x - xlogy(x, x),
        LossSpec::NegbinLl { dispersion: th } => (x + th) * (x + th).ln() - xlogy(x, x),
        LossSpec::BernoulliLl | LossSpec::BinomialDev => -xlogy(x, x) - xlogy(one - x, one - x),
        _ => F::zero(),
    }
}

/// Derivative of the per-entry loss for differentiable elementwise kinds.
pub(crate) fn elem_grad<F: Scalar>(spec: LossSpec<F>, x: F, u: F) -> F {
    let one = F::one();
    match spec {
        LossSpec::Euclidean => u - x,
        LossSpec::PoissonLl => -x + u.exp(),
        LossSpec::PoissonDev => {
            let u = u.max(F::domain_eps());
            -x / u + one
        }
        LossSpec::NegbinLl { dispersion: th } => {
            // (x + th) e^u / (th + e^u) = (x + th) * sigmoid(u - ln th)
            -x + (x + th) * sigmoid(u - th.ln())
        }
        LossSpec::NegbinDev { dispersion: th } => {
            let u = u.max(F::domain_eps());
            -x / u + (x + th) / (th + u)
        }
        LossSpec::BernoulliLl => -x + sigmoid(u),
        LossSpec::BinomialDev => {
            let e = F::domain_eps();
            let u = u.max(e).min(one - e);
            -x / u + (one - x) / (one - u)
        }
        _ => unreachable!("no elementwise gradient"),
    }
}

/// Subgradient of the per-entry loss, choosing `0` at kinks.
pub(crate) fn elem_subgrad<F: Scalar>(spec: LossSpec<F>, x: F, u: F) -> F {
    match spec {
        LossSpec::Manhattan => {
            let r = u - x;
            if r > F::zero() {
                F::one()
            } else if r < F::zero() {
                -F::one()
            } else {
                F::zero()
            }
        }
        LossSpec::Hinge => {
            if F::one() - u * x > F::zero() {
                -x
            } else {
                F::zero()
            }
        }
        _ => elem_grad(spec, x, u),
    }
}

fn row_norm<F: Scalar>(spec: LossSpec<F>, r: impl Iterator<Item = F>) -> F {
    match spec {
        LossSpec::Minkowski { q } => r.map(|v| v.abs().powf(q)).sum::<F>().powf(q.recip()),
        LossSpec::Chebychev => r.fold(F::zero(), |m, v| m.max(v.abs())),
        _ => unreachable!("not a row-wise loss"),
    }
}

#[inline]
fn observed(mask: Option<&ArrayView2<bool>>, i: usize, j: usize) -> bool {
    mask.is_none_or(|m| m[[i, j]])
}

fn multinomial_value<F: Scalar>(
    classes: usize,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
    saturated: bool,
) -> Result<F> {
    let p = multinomial_features(x.ncols(), classes)?;
    let mut total = F::zero();
    for i in 0..x.nrows() {
        for j in 0..p {
            if !(0..classes).all(|c| observed(mask, i, c * p + j)) {
                continue;
            }
            if saturated {
                for c in 0..classes {
                    let v = x[[i, c * p + j]];
                    total -= xlogy(v, v);
                }
                continue;
            }
            let m = (0..classes)
                .map(|c| u[[i, c * p + j]])
                .fold(F::neg_infinity(), F::max);
            let lse = m + (0..classes)
                .map(|c| (u[[i, c * p + j]] - m).exp())
                .sum::<F>()
                .ln();
            for c in 0..classes {
                total -= x[[i, c * p + j]] * u[[i, c * p + j]];
            }
            total += lse;
        }
    }
    Ok(total)
}

fn value_impl<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Option<F> {
    match spec {
        LossSpec::MultinomialLl { classes } => multinomial_value(classes, x, u, mask, false).ok(),
        LossSpec::Minkowski { .. } | LossSpec::Chebychev => {
            let mut total = F::zero();
            for i in 0..x.nrows() {
                let r = (0..x.ncols())
                    .filter(|&j| observed(mask, i, j))
                    .map(|j| x[[i, j]] - u[[i, j]]);
                total += row_norm(spec, r);
            }
            Some(total)
        }
        _ => {
            let mut total = F::zero();
            for ((i, j), &xv) in x.indexed_iter() {
                if observed(mask, i, j) {
                    total += elem_value(spec, xv, u[[i, j]])?;
                }
            }
            Some(total)
        }
    }
}

/// Loss `l(X, U)` in its textbook form.
///
/// Mean-scale arguments of the deviance losses are clamped below at
/// `Scalar::domain_eps()`; a negative mean (or a binomial probability above
/// one) is reported as a domain error.
pub fn loss_value<F: Scalar>(spec: LossSpec<F>, x: ArrayView2<F>, u: ArrayView2<F>) -> Result<F> {
    loss_value_masked(spec, x, u, None)
}

/// [`loss_value`] restricted to the entries where `mask` is `true`.
pub fn loss_value_masked<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Result<F> {
    check_same_shape(x, u)?;
    if let Some(m) = mask {
        if m.dim() != x.dim() {
            return Err(GeccoError::Shape("mask shape differs from data".into()));
        }
    }
    if let LossSpec::MultinomialLl { classes } = spec {
        multinomial_features(x.ncols(), classes)?;
    }
    value_impl(spec, x, u, mask).ok_or_else(|| {
        GeccoError::Domain(format!("centroid outside the domain of `{}`", spec.name()))
    })
}

/// `inf_U l(X, U)`, the loss of the saturated model.
pub fn saturated_value<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Result<F> {
    if let LossSpec::MultinomialLl { classes } = spec {
        return multinomial_value(classes, x, x, mask, true);
    }
    let mut total = F::zero();
    for ((i, j), &xv) in x.indexed_iter() {
        if observed(mask, i, j) {
            total += elem_saturated(spec, xv);
        }
    }
    Ok(total)
}

/// Deviance `l(X, U) - inf_V l(X, V)`: nonnegative, zero at the saturated fit.
pub fn deviance<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Result<F> {
    Ok(loss_value_masked(spec, x, u, mask)? - saturated_value(spec, x, mask)?)
}

/// Gradient of [`loss_value`] with respect to `U`.
pub fn loss_gradient<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
) -> Result<Array2<F>> {
    loss_gradient_masked(spec, x, u, None)
}

pub fn loss_gradient_masked<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Result<Array2<F>> {
    check_same_shape(x, u)?;
    if !spec.is_differentiable() {
        return Err(GeccoError::NotDifferentiable(spec.name()));
    }
    let mut g = Array2::zeros(x.dim());
    if let LossSpec::MultinomialLl { classes } = spec {
        let p = multinomial_features(x.ncols(), classes)?;
        for i in 0..x.nrows() {
            for j in 0..p {
                if !(0..classes).all(|c| observed(mask, i, c * p + j)) {
                    continue;
                }
                let m = (0..classes)
                    .map(|c| u[[i, c * p + j]])
                    .fold(F::neg_infinity(), F::max);
                let z: F = (0..classes).map(|c| (u[[i, c * p + j]] - m).exp()).sum();
                for c in 0..classes {
                    let k = c * p + j;
                    g[[i, k]] = (u[[i, k]] - m).exp() / z - x[[i, k]];
                }
            }
        }
        return Ok(g);
    }
    for ((i, j), gv) in g.indexed_iter_mut() {
        if observed(mask, i, j) {
            *gv = elem_grad(spec, x[[i, j]], u[[i, j]]);
        }
    }
    Ok(g)
}

/// A subgradient of the loss with respect to `U`, taking `0` at kinks.
///
/// Used for the full-fusion bounds; equals [`loss_gradient`] where the loss
/// is differentiable.
pub fn loss_subgradient<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    u: ArrayView2<F>,
) -> Result<Array2<F>> {
    check_same_shape(x, u)?;
    match spec {
        LossSpec::Minkowski { q } => {
            let mut g = Array2::zeros(x.dim());
            for i in 0..x.nrows() {
                let norm = row_norm(spec, (0..x.ncols()).map(|j| x[[i, j]] - u[[i, j]]));
                if norm > F::zero() {
                    for j in 0..x.ncols() {
                        let r = u[[i, j]] - x[[i, j]];
                        g[[i, j]] = r.signum() * (r.abs() / norm).powf(q - F::one());
                    }
                }
            }
            Ok(g)
        }
        LossSpec::Chebychev => {
            let mut g = Array2::zeros(x.dim());
            for i in 0..x.nrows() {
                let mut best = (0, F::zero());
                for j in 0..x.ncols() {
                    let r = (u[[i, j]] - x[[i, j]]).abs();
                    if r > best.1 {
                        best = (j, r);
                    }
                }
                if best.1 > F::zero() {
                    let j = best.0;
                    g[[i, j]] = (u[[i, j]] - x[[i, j]]).signum();
                }
            }
            Ok(g)
        }
        LossSpec::Manhattan | LossSpec::Hinge => {
            let mut g = Array2::zeros(x.dim());
            for ((i, j), gv) in g.indexed_iter_mut() {
                *gv = elem_subgrad(spec, x[[i, j]], u[[i, j]]);
            }
            Ok(g)
        }
        _ => loss_gradient(spec, x, u),
    }
}

fn mean<F: Scalar>(col: ArrayView1<F>) -> F {
    col.sum() / F::from_usize_lossy(col.len())
}

/// Lower median: the `ceil(n/2)`-th order statistic, a true minimizer of
/// `sum |x_i - c|`.
pub fn lower_median<F: Scalar>(col: ArrayView1<F>) -> F {
    let mut v: Vec<F> = col.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite data"));
    v[(v.len() - 1) / 2]
}

/// Golden-section minimization of a convex function on `[lo, hi]`.
pub(crate) fn golden_section<F: Scalar>(
    mut lo: F,
    mut hi: F,
    tol: F,
    mut f: impl FnMut(F) -> F,
) -> F {
    let inv_phi = F::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..500 {
        if hi - lo <= tol {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let mid = (lo + hi) * F::lit(0.5);
    // the bracket ends can beat the midpoint on piecewise-linear objectives
    let mut best = (f(mid), mid);
    for c in [lo, hi] {
        let v = f(c);
        if v < best.0 {
            best = (v, c);
        }
    }
    best.1
}

/// Loss-specific center of a single column: the minimizer of
/// `sum_i l(x_i, c)` over a scalar `c`.
///
/// For the multinomial log-likelihood the column is one class indicator of
/// a valid block, whose multinomial-logit center reduces to `log(mean)`.
pub fn loss_center<F: Scalar>(spec: LossSpec<F>, column: ArrayView1<F>) -> Result<F> {
    if column.is_empty() {
        return Err(GeccoError::Empty("loss center of an empty column".into()));
    }
    let eps = F::domain_eps();
    let one = F::one();
    Ok(match spec {
        LossSpec::Euclidean => mean(column),
        LossSpec::PoissonDev | LossSpec::NegbinDev { .. } => mean(column).max(eps),
        LossSpec::BinomialDev => mean(column).max(eps).min(one - eps),
        LossSpec::Manhattan => lower_median(column),
        LossSpec::PoissonLl | LossSpec::NegbinLl { .. } | LossSpec::MultinomialLl { .. } => {
            mean(column).max(eps).ln()
        }
        LossSpec::BernoulliLl => {
            let m = mean(column).max(eps).min(one - eps);
            (m / (one - m)).ln()
        }
        LossSpec::Hinge => {
            let pos = column.iter().filter(|v| **v > F::zero()).count();
            if 2 * pos >= column.len() {
                one
            } else {
                -one
            }
        }
        LossSpec::Minkowski { .. } | LossSpec::Chebychev => {
            // a one-dimensional row norm is |x - c|
            let lo = column.fold(F::infinity(), |m, v| m.min(*v));
            let hi = column.fold(F::neg_infinity(), |m, v| m.max(*v));
            if lo == hi {
                lo
            } else {
                golden_section(lo, hi, F::lit(1e-8).max(F::epsilon() * (hi - lo)), |c| {
                    column.iter().map(|x| (*x - c).abs()).sum()
                })
            }
        }
    })
}

/// Loss-specific centers `x~_j` for every column of a view.
///
/// Row-wise norms couple the columns, so Minkowski and Chebychev views get
/// the joint minimizer of `sum_i ||x_i - c||_q`, computed by a consensus
/// splitting on the row norms. For a single column this agrees with
/// [`loss_center`].
pub fn view_centers<F: Scalar>(spec: LossSpec<F>, x: ArrayView2<F>) -> Result<Array1<F>> {
    view_centers_masked(spec, x, None)
}

pub fn view_centers_masked<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Result<Array1<F>> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(GeccoError::Empty("view has no entries".into()));
    }
    let observed_column = |j: usize| -> Result<Array1<F>> {
        let vals: Vec<F> = (0..x.nrows())
            .filter(|&i| observed(mask, i, j))
            .map(|i| x[[i, j]])
            .collect();
        if vals.is_empty() {
            return Err(GeccoError::Empty(format!("column {j} has no observed entries")));
        }
        Ok(Array1::from(vals))
    };
    match spec {
        LossSpec::Minkowski { .. } | LossSpec::Chebychev if x.ncols() > 1 => {
            rowwise_joint_center(spec, x, mask)
        }
        LossSpec::MultinomialLl { classes } => {
            let p = multinomial_features(x.ncols(), classes)?;
            let eps = F::domain_eps();
            let mut means = Array1::zeros(x.ncols());
            for k in 0..x.ncols() {
                means[k] = mean(observed_column(k)?.view()).max(eps);
            }
            let mut out = Array1::zeros(x.ncols());
            for j in 0..p {
                let total: F = (0..classes).map(|c| means[c * p + j]).sum();
                for c in 0..classes {
                    out[c * p + j] = (means[c * p + j] / total).ln();
                }
            }
            Ok(out)
        }
        _ => {
            let mut out = Array1::zeros(x.ncols());
            for j in 0..x.ncols() {
                out[j] = loss_center(spec, observed_column(j)?.view())?;
            }
            Ok(out)
        }
    }
}

/// Minimizes `sum_i ||x_i - c||` for a row norm by consensus ADMM on
/// `z_i = x_i - c`, starting from the column medians.
fn rowwise_joint_center<F: Scalar>(
    spec: LossSpec<F>,
    x: ArrayView2<F>,
    mask: Option<&ArrayView2<bool>>,
) -> Result<Array1<F>> {
    let (n, p) = x.dim();
    let mut c = Array1::zeros(p);
    for j in 0..p {
        let vals: Vec<F> = (0..n).filter(|&i| observed(mask, i, j)).map(|i| x[[i, j]]).collect();
        if vals.is_empty() {
            return Err(GeccoError::Empty(format!("column {j} has no observed entries")));
        }
        c[j] = lower_median(Array1::from(vals).view());
    }
    let objective = |c: &Array1<F>| -> F {
        (0..n)
            .map(|i| {
                row_norm(
                    spec,
                    (0..p).filter(|&j| observed(mask, i, j)).map(|j| x[[i, j]] - c[j]),
                )
            })
            .sum()
    };
    let scale = x.iter().fold(F::zero(), |m, v| m.max(v.abs())).max(F::one());
    let rho = F::from_usize_lossy(n).sqrt() / scale;
    let mut z = Array2::zeros((n, p));
    let mut psi = Array2::<F>::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            z[[i, j]] = x[[i, j]] - c[j];
        }
    }
    let mut best = (objective(&c), c.clone());
    let tol = F::lit(1e-12).max(F::epsilon() * F::lit(4.0));
    let mut row = Array1::zeros(p);
    for it in 0..20_000 {
        // c-update: per column, average over rows where the entry is observed
        let prev = c.clone();
        for j in 0..p {
            let mut s = F::zero();
            let mut cnt = 0usize;
            for i in 0..n {
                if observed(mask, i, j) {
                    s += x[[i, j]] - z[[i, j]] + psi[[i, j]];
                    cnt += 1;
                }
            }
            c[j] = s / F::from_usize_lossy(cnt);
        }
        for i in 0..n {
            for j in 0..p {
                row[j] = x[[i, j]] - c[j] + psi[[i, j]];
            }
            let t = rho.recip();
            let zi = match spec {
                LossSpec::Minkowski { q } => prox::prox_lq_row_masked(row.view(), t, q, mask.map(|m| m.row(i)))?,
                _ => prox::prox_linf_row_masked(row.view(), t, mask.map(|m| m.row(i))),
            };
            for j in 0..p {
                z[[i, j]] = zi[j];
                psi[[i, j]] += x[[i, j]] - c[j] - zi[j];
            }
        }
        if it % 16 == 0 {
            let f = objective(&c);
            if f < best.0 {
                best = (f, c.clone());
            }
        }
        let moved = (&c - &prev).iter().fold(F::zero(), |m, v| m.max(v.abs()));
        if it > 10 && moved <= tol * scale {
            break;
        }
    }
    let f = objective(&c);
    if f < best.0 {
        best = (f, c);
    }
    // coordinate polish with 1-D searches
    let mut c = best.1;
    for _ in 0..3 {
        for j in 0..p {
            let lo = x.column(j).fold(F::infinity(), |m, v| m.min(*v));
            let hi = x.column(j).fold(F::neg_infinity(), |m, v| m.max(*v));
            if lo == hi {
                continue;
            }
            let mut trial = c.clone();
            let cj = golden_section(lo, hi, F::lit(1e-10) * scale, |v| {
                trial[j] = v;
                objective(&trial)
            });
            let mut cand = c.clone();
            cand[j] = cj;
            if objective(&cand) < objective(&c) {
                c = cand;
            }
        }
    }
    Ok(c)
}

/// Broadcasts per-column centers into an `n x p` matrix.
pub fn center_matrix<F: Scalar>(centers: ArrayView1<F>, n: usize) -> Array2<F> {
    centers.broadcast((n, centers.len())).expect("broadcast").to_owned()
}

/// Loss weight `pi = 1 / null deviance`, the deviance of the view at its
/// loss-specific center. A degenerate (constant) view gets `1 / eps`.
pub fn null_deviance_weight<F: Scalar>(spec: LossSpec<F>, x: ArrayView2<F>) -> Result<F> {
    let centers = view_centers(spec, x)?;
    let xt = center_matrix(centers.view(), x.nrows());
    let dev = deviance(spec, x, xt.view(), None)?;
    let eps = F::domain_eps();
    Ok(if dev < eps { eps.recip() } else { dev.recip() })
}

/// Expands an `n x p` matrix of class labels in `1..=classes` into the
/// indicator layout `[X^(1) ... X^(classes)]`.
pub fn expand_multinomial<F: Scalar>(labels: ArrayView2<usize>, classes: usize) -> Result<Array2<F>> {
    if classes < 2 {
        return Err(GeccoError::InvalidParameter("need at least 2 classes".into()));
    }
    let (n, p) = labels.dim();
    let mut out = Array2::zeros((n, p * classes));
    for ((i, j), &l) in labels.indexed_iter() {
        if l == 0 || l > classes {
            return Err(GeccoError::InvalidData(format!(
                "label {l} at ({i}, {j}) outside 1..={classes}"
            )));
        }
        out[[i, (l - 1) * p + j]] = F::one();
    }
    Ok(out)
}

/// Inverse of [`expand_multinomial`]: the arg-max class of every block.
pub fn collapse_multinomial<F: Scalar>(x: ArrayView2<F>, classes: usize) -> Result<Array2<usize>> {
    let p = multinomial_features(x.ncols(), classes)?;
    let mut out = Array2::zeros((x.nrows(), p));
    for i in 0..x.nrows() {
        for j in 0..p {
            let mut best = 0;
            for c in 1..classes {
                if x[[i, c * p + j]] > x[[i, best * p + j]] {
                    best = c;
                }
            }
            out[[i, j]] = best + 1;
        }
    }
    Ok(out)
}

/// Column sums of squares, used for per-column norms.
pub fn column_norms<F: Scalar>(m: ArrayView2<F>) -> Array1<F> {
    m.map_axis(Axis(0), |c| c.iter().map(|v| *v * *v).sum::<F>().sqrt())
}
