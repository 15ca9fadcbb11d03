use super::*;
use crate::data::View;
use crate::loss::{loss_value, view_centers};
use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

fn dense_solve(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.clone();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs())).unwrap();
        for k in 0..n {
            m.swap([c, k], [piv, k]);
        }
        for k in 0..x.ncols() {
            x.swap([c, k], [piv, k]);
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]] / m[[c, c]];
                for k in 0..n {
                    m[[r, k]] -= f * m[[c, k]];
                }
                for k in 0..x.ncols() {
                    x[[r, k]] -= f * x[[c, k]];
                }
            }
        }
    }
    for r in 0..n {
        let d = m[[r, r]];
        x.row_mut(r).mapv_inplace(|v| v / d);
    }
    x
}

struct Fixture {
    x: Array2<f64>,
    centers: Array1<f64>,
    zeta: Array1<f64>,
    op: DifferenceOperator<f64>,
    v: Array2<f64>,
    lambda: Array2<f64>,
    mask: Option<Array2<bool>>,
}

impl Fixture {
    fn new(x: Array2<f64>, loss: LossSpec<f64>, pairs: Vec<(usize, usize)>) -> Self {
        let centers = view_centers(loss, x.view()).unwrap();
        let p = x.ncols();
        let e = pairs.len();
        Fixture {
            op: DifferenceOperator::from_pairs(x.nrows(), pairs),
            zeta: Array1::ones(p),
            v: Array2::zeros((e, p)),
            lambda: Array2::zeros((e, p)),
            centers,
            x,
            mask: None,
        }
    }

    fn ctx(&self, loss: LossSpec<f64>, alpha: f64) -> ViewContext<'_, f64> {
        ViewContext {
            loss,
            x: self.x.view(),
            mask: self.mask.as_ref().map(|m| m.view()),
            centers: self.centers.view(),
            pi: 1.0,
            alpha,
            zeta: self.zeta.view(),
            rho: 1.0,
            op: &self.op,
            v: self.v.view(),
            lambda: self.lambda.view(),
        }
    }
}

fn bt() -> Backtracking<f64> {
    Backtracking {
        t0: 1.0,
        beta: 0.5,
        check: true,
    }
}

fn tight() -> SolverOptions<f64> {
    SolverOptions {
        tol_primal: 1e-8,
        tol_dual: 1e-8,
        max_iter: 50_000,
        ..Default::default()
    }
}

fn three_groups() -> Array2<f64> {
    array![
        [0.0, 0.1],
        [0.2, -0.1],
        [0.1, 0.0],
        [3.0, 3.1],
        [3.2, 2.9],
        [6.0, 0.0],
        [6.1, 0.3]
    ]
}

#[test]
fn prox_gradient_hand_step() {
    // X = [0, 2], U = [0.5, 1.5], one edge, V = Lambda = 0: the step halves
    // twice, to t = 1/4, and lands on U = [0.625, 1.375].
    let mut f = Fixture::new(array![[0.0], [2.0]], LossSpec::Euclidean, vec![(0, 1)]);
    f.centers = array![1.0];
    let ctx = f.ctx(LossSpec::Euclidean, 0.0);
    let u = array![[0.5], [1.5]];
    let step = prox_gradient_column(&ctx, u.view(), 0, &bt()).unwrap();
    assert_abs_diff_eq!(step.step, 0.25);
    assert_abs_diff_eq!(step.grad, array![-0.5, 0.5], epsilon = 1e-15);
    assert_abs_diff_eq!(step.g_start, 0.75, epsilon = 1e-15);
    assert_abs_diff_eq!(step.next, array![-0.375, 0.375], epsilon = 1e-15);
    let mut st = initial_view_state(&ctx, StepKind::ProxGradient);
    st.u = u;
    u_step_differentiable(&ctx, &mut st, &bt(), None).unwrap();
    assert_abs_diff_eq!(st.u, array![[0.625], [1.375]], epsilon = 1e-15);
}

#[test]
fn prox_gradient_fixed_point() {
    let f = Fixture::new(array![[2.0], [2.0], [2.0]], LossSpec::PoissonLl, vec![(0, 1), (1, 2)]);
    let ctx = f.ctx(LossSpec::PoissonLl, 0.7);
    let mut st = initial_view_state(&ctx, StepKind::ProxGradient);
    let before = st.clone();
    u_step_differentiable(&ctx, &mut st, &bt(), None).unwrap();
    assert_abs_diff_eq!(st.u, before.u, epsilon = 1e-14);
}

#[test]
fn nondiff_rejects_smooth_loss() {
    let f = Fixture::new(array![[1.0], [2.0]], LossSpec::Euclidean, vec![(0, 1)]);
    let ctx = f.ctx(LossSpec::Euclidean, 0.0);
    let mut st = initial_view_state(&ctx, StepKind::Distance);
    assert!(u_step_nondiff(&ctx, &mut st, None).is_err());
    let ctx = f.ctx(LossSpec::Manhattan, 0.0);
    assert!(matches!(
        u_step_differentiable(&ctx, &mut st, &bt(), None),
        Err(GeccoError::NotDifferentiable(_))
    ));
}

#[test]
fn nondiff_manhattan_hand_trace() {
    // path graph 0-1-2, (D^T D + 2I)^{-1} = [[11,3,1],[3,9,3],[1,3,11]] / 30
    let mut f = Fixture::new(array![[0.0], [1.0], [5.0]], LossSpec::Manhattan, vec![(0, 1), (1, 2)]);
    f.v = array![[0.5], [-1.0]];
    f.lambda = array![[0.1], [0.2]];
    let ctx = f.ctx(LossSpec::Manhattan, 0.5);
    assert_eq!(f.centers[0], 1.0);
    let mut st = initial_view_state(&ctx, StepKind::Distance);
    assert_eq!(st.r.as_ref().unwrap(), &array![[-1.0], [0.0], [4.0]]);
    u_step_nondiff(&ctx, &mut st, None).unwrap();

    let rhs = [0.4, 0.4, 11.2];
    let minv = [[11.0, 3.0, 1.0], [3.0, 9.0, 3.0], [1.0, 3.0, 11.0]];
    let u: Vec<f64> = (0..3).map(|i| (0..3).map(|k| minv[i][k] * rhs[k]).sum::<f64>() / 30.0).collect();
    assert_abs_diff_eq!(u[0], 0.56, epsilon = 1e-12);
    assert_abs_diff_eq!(st.u.column(0).to_vec().as_slice(), u.as_slice(), epsilon = 1e-12);
    // |X - U| < 1 everywhere, so Z is zeroed
    assert_abs_diff_eq!(st.z.as_ref().unwrap(), &Array2::zeros((3, 1)), epsilon = 1e-12);
    let w: Vec<f64> = u.iter().map(|v| v - 1.0).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r: Vec<f64> = w.iter().map(|v| v * (1.0 - 0.5 / norm)).collect();
    let r_got = st.r.as_ref().unwrap().column(0).to_vec();
    assert_abs_diff_eq!(r_got.as_slice(), r.as_slice(), epsilon = 1e-12);
    let psi: Vec<f64> = [0.0, 1.0, 5.0].iter().zip(&u).map(|(x, u)| x - u).collect();
    assert_abs_diff_eq!(st.psi.as_ref().unwrap().column(0).to_vec().as_slice(), psi.as_slice(), epsilon = 1e-12);
    let nu: Vec<f64> = w.iter().zip(&r).map(|(w, r)| w - r).collect();
    assert_abs_diff_eq!(st.nu.as_ref().unwrap().column(0).to_vec().as_slice(), nu.as_slice(), epsilon = 1e-12);
}

#[test]
fn nondiff_constant_data_is_fixed() {
    let f = Fixture::new(Array2::from_elem((4, 3), 2.5), LossSpec::Minkowski { q: 3.0 }, vec![(0, 1), (1, 2), (2, 3)]);
    let ctx = f.ctx(LossSpec::Minkowski { q: 3.0 }, 1.0);
    let mut st = initial_view_state(&ctx, StepKind::Distance);
    u_step_nondiff(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, Array2::from_elem((4, 3), 2.5), epsilon = 1e-8);
}

#[test]
fn nondiff_without_edges() {
    let f = Fixture::new(array![[1.0, 4.0], [3.0, -2.0]], LossSpec::Chebychev, vec![]);
    let ctx = f.ctx(LossSpec::Chebychev, 0.3);
    let mut st = initial_view_state(&ctx, StepKind::Distance);
    st.z = Some(array![[0.1, 0.2], [0.3, 0.4]]);
    st.psi = Some(array![[-0.1, 0.0], [0.5, 0.1]]);
    st.nu = Some(array![[0.2, 0.2], [0.0, -0.3]]);
    let xt = center_matrix(f.centers.view(), 2);
    let expect = (&xt + st.r.as_ref().unwrap() - st.nu.as_ref().unwrap() + &f.x - st.z.as_ref().unwrap()
        + st.psi.as_ref().unwrap())
        / 2.0;
    u_step_nondiff(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, expect, epsilon = 1e-14);
}

#[test]
fn bernoulli_steps() {
    // no edges, rho = pi = 1: the preconditioner is a multiply by 1 / (1/4 + 1)
    let f = Fixture::new(array![[1.0], [0.0]], LossSpec::BernoulliLl, vec![]);
    let ctx = f.ctx(LossSpec::BernoulliLl, 0.0);
    assert_abs_diff_eq!(f.centers[0], 0.0, epsilon = 1e-15);
    let mut st = initial_view_state(&ctx, StepKind::Bernoulli);
    u_step_bernoulli(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, array![[0.4], [-0.4]], epsilon = 1e-14);
    assert_abs_diff_eq!(st.r.as_ref().unwrap(), &st.u, epsilon = 1e-14);

    // fixed point: mean-zero gradient at U = X~ with R = U - X~, N = 0
    let f = Fixture::new(array![[1.0], [0.0], [1.0], [0.0]], LossSpec::BernoulliLl, vec![(0, 1), (2, 3)]);
    let ctx = f.ctx(LossSpec::BernoulliLl, 0.0);
    let mut st = initial_view_state(&ctx, StepKind::Bernoulli);
    st.u.fill(0.0);
    st.r = Some(Array2::zeros((4, 1)));
    // gradient zero needs sigmoid(u) = x, impossible for binary data; use the
    // two-sample toy with a matching V instead
    let g = [0.5 - 1.0, 0.5, 0.5 - 1.0, 0.5];
    let mut expect = st.u.clone();
    // D^T (D U - V + Lambda) = 0 at U = 0; solve (D^T D + 1.25 I) s = g per pair
    for (a, b) in [(0, 1), (2, 3)] {
        // [[2.25, -1], [-1, 2.25]]^{-1}
        let det = 2.25 * 2.25 - 1.0;
        let sa = (2.25 * g[a] + g[b]) / det;
        let sb = (g[a] + 2.25 * g[b]) / det;
        expect[[a, 0]] -= sa;
        expect[[b, 0]] -= sb;
    }
    u_step_bernoulli(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, expect, epsilon = 1e-14);
}

#[test]
fn euclidean_closed_form() {
    let f = Fixture::new(array![[1.0, 2.0], [3.0, -1.0]], LossSpec::Euclidean, vec![]);
    let ctx = f.ctx(LossSpec::Euclidean, 0.0);
    let mut st = initial_view_state(&ctx, StepKind::Euclidean);
    st.r = Some(array![[0.5, 0.1], [0.0, 0.2]]);
    st.nu = Some(array![[0.3, 0.0], [-0.2, 0.1]]);
    let xt = center_matrix(f.centers.view(), 2);
    let expect = (&f.x + &xt + st.r.as_ref().unwrap() - st.nu.as_ref().unwrap()) / 2.0;
    u_step_euclidean(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, expect, epsilon = 1e-14);

    // 3 x 2 toy against a dense solve
    let mut f = Fixture::new(array![[1.0, 0.0], [2.0, 1.0], [-1.0, 4.0]], LossSpec::Euclidean, vec![(0, 1), (0, 2), (1, 2)]);
    f.v = array![[0.2, -0.1], [0.5, 0.0], [0.1, 0.3]];
    f.lambda = array![[0.0, 0.1], [-0.2, 0.0], [0.05, 0.05]];
    let ctx = f.ctx(LossSpec::Euclidean, 0.4);
    let mut st = initial_view_state(&ctx, StepKind::Euclidean);
    st.nu = Some(array![[0.1, 0.0], [0.0, 0.2], [0.3, -0.1]]);
    let xt = center_matrix(f.centers.view(), 3);
    let rhs = &f.x + &f.op.apply_dt((&f.v - &f.lambda).view()).unwrap() + &xt + st.r.as_ref().unwrap()
        - st.nu.as_ref().unwrap();
    let expect = dense_solve(&f.op.shifted_laplacian(2.0), &rhs);
    u_step_euclidean(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, expect, epsilon = 1e-12);
}

#[test]
fn euclidean_step_is_idempotent_at_consistent_point() {
    let f = Fixture::new(three_groups(), LossSpec::Euclidean, vec![(0, 1), (1, 2), (3, 4), (5, 6)]);
    let ctx = f.ctx(LossSpec::Euclidean, 0.0);
    let mut st = initial_view_state(&ctx, StepKind::Euclidean);
    // U = X, V = D X, R = X - X~, N = 0 and alpha = 0
    let v = f.op.apply_d(f.x.view()).unwrap();
    let ctx = ViewContext { v: v.view(), ..ctx };
    u_step_euclidean(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, f.x, epsilon = 1e-12);
}

#[test]
fn hinge_steps() {
    // all labels +1 at the center with zero duals is a fixed point
    let f = Fixture::new(Array2::ones((3, 2)), LossSpec::Hinge, vec![(0, 1), (1, 2)]);
    let ctx = f.ctx(LossSpec::Hinge, 0.5);
    let mut st = initial_view_state(&ctx, StepKind::Hinge);
    u_step_hinge(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, Array2::ones((3, 2)), epsilon = 1e-14);

    // no edges: U = (X~ + R - N - X o (Z - 1 - Psi)) / 2
    let f = Fixture::new(array![[1.0], [-1.0]], LossSpec::Hinge, vec![]);
    let ctx = f.ctx(LossSpec::Hinge, 0.0);
    let mut st = initial_view_state(&ctx, StepKind::Hinge);
    st.z = Some(array![[0.5], [0.2]]);
    st.psi = Some(array![[0.1], [-0.3]]);
    st.nu = Some(array![[0.05], [0.0]]);
    let c = f.centers[0];
    let r = st.r.clone().unwrap();
    let expect = array![
        [(c + r[[0, 0]] - 0.05 - 1.0 * (0.5 - 1.0 - 0.1)) / 2.0],
        [(c + r[[1, 0]] - 0.0 + 1.0 * (0.2 - 1.0 + 0.3)) / 2.0]
    ];
    u_step_hinge(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, expect, epsilon = 1e-14);

    // 2 x 1 hand trace with one edge: (D^T D + 2I)^{-1} = [[3, 1], [1, 3]] / 8
    let mut f = Fixture::new(array![[1.0], [-1.0]], LossSpec::Hinge, vec![(0, 1)]);
    f.v = array![[0.4]];
    let ctx = f.ctx(LossSpec::Hinge, 0.0);
    let mut st = initial_view_state(&ctx, StepKind::Hinge);
    let c = f.centers[0];
    let u0 = st.u.clone();
    let z0 = st.z.clone().unwrap();
    let r0 = st.r.clone().unwrap();
    let b0 = 0.4 + c + r0[[0, 0]] - (z0[[0, 0]] - 1.0);
    let b1 = -0.4 + c + r0[[1, 0]] + (z0[[1, 0]] - 1.0);
    let u = [(3.0 * b0 + b1) / 8.0, (b0 + 3.0 * b1) / 8.0];
    u_step_hinge(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u[[0, 0]], u[0], epsilon = 1e-14);
    assert_abs_diff_eq!(st.u[[1, 0]], u[1], epsilon = 1e-14);
    let m = [1.0 - u[0], 1.0 + u[1]];
    let z = [prox::prox_hinge_scalar(m[0], 1.0), prox::prox_hinge_scalar(m[1], 1.0)];
    assert_abs_diff_eq!(st.z.as_ref().unwrap()[[0, 0]], z[0], epsilon = 1e-14);
    assert_abs_diff_eq!(st.psi.as_ref().unwrap()[[1, 0]], m[1] - z[1], epsilon = 1e-14);
    assert!(u0 != st.u);
}

use crate::prox;

#[test]
fn hinge_reduced_matches_unreduced_system() {
    let x = array![[1.0, -1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mut f = Fixture::new(x.clone(), LossSpec::Hinge, vec![(0, 1), (1, 2), (0, 3), (2, 3)]);
    f.v = array![[0.1, 0.0], [0.2, -0.3], [0.0, 0.5], [-0.1, 0.1]];
    f.lambda = array![[0.0, 0.1], [0.05, 0.0], [0.2, 0.0], [0.0, -0.1]];
    let ctx = f.ctx(LossSpec::Hinge, 0.3);
    let mut st = initial_view_state(&ctx, StepKind::Hinge);
    st.z = Some(array![[0.3, 0.0], [1.2, 0.1], [0.0, 0.4], [0.5, 0.5]]);
    st.psi = Some(array![[0.1, -0.1], [0.0, 0.2], [0.3, 0.0], [-0.2, 0.1]]);
    st.nu = Some(array![[0.0, 0.1], [0.1, 0.0], [0.0, 0.0], [0.2, 0.3]]);
    let xt = center_matrix(f.centers.view(), 4);
    let base = f.op.apply_dt((&f.v - &f.lambda).view()).unwrap() + &xt + st.r.as_ref().unwrap()
        - st.nu.as_ref().unwrap();
    // unreduced: (D^T D + I + diag(x_j^2)) u_j = base_j - x_j o (z_j - 1 - psi_j)
    let lap = f.op.shifted_laplacian(0.0);
    let mut expect = Array2::zeros((4, 2));
    for j in 0..2 {
        let mut a = lap.clone();
        for i in 0..4 {
            a[[i, i]] += 1.0 + x[[i, j]] * x[[i, j]];
        }
        let b = Array2::from_shape_fn((4, 1), |(i, _)| {
            base[[i, j]] - x[[i, j]] * (st.z.as_ref().unwrap()[[i, j]] - 1.0 - st.psi.as_ref().unwrap()[[i, j]])
        });
        expect.column_mut(j).assign(&dense_solve(&a, &b).column(0));
    }
    u_step_hinge(&ctx, &mut st, None).unwrap();
    assert_abs_diff_eq!(st.u, expect, epsilon = 1e-12);
}

#[test]
fn hinge_rejects_non_sign_data() {
    let f = Fixture::new(array![[1.0], [-1.0]], LossSpec::Hinge, vec![(0, 1)]);
    let mut bad = f.x.clone();
    bad[[0, 0]] = 0.5;
    let ctx = ViewContext { x: bad.view(), ..f.ctx(LossSpec::Hinge, 0.0) };
    let mut st = initial_view_state(&f.ctx(LossSpec::Hinge, 0.0), StepKind::Hinge);
    assert!(matches!(u_step_hinge(&ctx, &mut st, None), Err(GeccoError::InvalidData(_))));
}

fn euclid_ds(x: Array2<f64>) -> MultiViewDataset<f64> {
    MultiViewDataset::single(x, LossSpec::Euclidean).unwrap()
}

#[test]
fn unpenalized_euclidean_recovers_data() {
    let ds = euclid_ds(three_groups());
    let pen = Penalties::new(&ds, 0.0, 0.0, WeightGraph::complete(7)).unwrap();
    for mode in [SolverMode::OneStep, SolverMode::FullSolve] {
        let opts = SolverOptions { mode, ..tight() };
        let sol = fit(&ds, &pen, &opts, None).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.u[0], three_groups(), epsilon = 1e-6);
        assert_eq!(sol.num_clusters, 7);
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-9);
    }
}

#[test]
fn zero_counts_settle_on_the_domain_floor() {
    // a zero count under the deviance pulls its centroid to the boundary
    let x = array![[0.0, 3.0], [0.0, 4.0], [5.0, 0.0], [6.0, 1.0]];
    for spec in [LossSpec::PoissonDev, LossSpec::NegbinDev { dispersion: 2.0 }] {
        let ds = MultiViewDataset::single(x.clone(), spec).unwrap();
        let base = Penalties::new(&ds, 0.0, 0.0, WeightGraph::complete(4)).unwrap();
        let pen = Penalties {
            gamma: 1e-4 * gamma_bound(&ds, &base).unwrap(),
            ..base
        };
        for mode in [SolverMode::OneStep, SolverMode::FullSolve] {
            let sol = fit(&ds, &pen, &SolverOptions { mode, ..tight() }, None).unwrap();
            assert!(sol.converged);
            assert!(sol.u[0].iter().all(|u| *u >= 1e-10));
            assert!(sol.u[0][[0, 0]] < 1e-3);
        }
    }
}

#[test]
fn objective_terms() {
    let ds = euclid_ds(three_groups());
    let pen = Penalties::new(&ds, 0.0, 0.0, WeightGraph::complete(7)).unwrap();
    assert_abs_diff_eq!(objective(&ds, &pen, &[three_groups()]).unwrap(), 0.0);

    // U = X~: only the loss term remains and it equals the number of views
    let x2 = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [1.0, 1.0]];
    let counts = array![[3.0], [0.0], [1.0], [7.0], [2.0], [2.0], [4.0]];
    let ds = MultiViewDataset::new(vec![
        View::new(three_groups(), LossSpec::Euclidean),
        View::new(x2, LossSpec::BernoulliLl),
        View::new(counts, LossSpec::PoissonLl),
    ])
    .unwrap();
    let pen = Penalties::new(&ds, 2.0, 3.0, WeightGraph::complete(7)).unwrap();
    let centers: Vec<Array2<f64>> = ds
        .views()
        .iter()
        .map(|v| center_matrix(view_centers(v.loss, v.data.view()).unwrap().view(), 7))
        .collect();
    assert_abs_diff_eq!(objective(&ds, &pen, &centers).unwrap(), 3.0, epsilon = 1e-10);

    // random U against term-by-term recomputation
    let u: Vec<Array2<f64>> = centers
        .iter()
        .enumerate()
        .map(|(k, c)| c + &Array2::from_shape_fn(c.dim(), |(i, j)| ((i * 7 + j * 3 + k) as f64).sin() * 0.3))
        .collect();
    let mut expect = 0.0;
    for (k, v) in ds.views().iter().enumerate() {
        let sat = loss_value(v.loss, v.data.view(), v.data.view().mapv(|x| match v.loss {
            LossSpec::Euclidean => x,
            _ => f64::NAN,
        }).view());
        let sat = match v.loss {
            LossSpec::Euclidean => sat.unwrap(),
            _ => crate::loss::saturated_value(v.loss, v.data.view(), None).unwrap(),
        };
        expect += pen.pi[k] * (loss_value(v.loss, v.data.view(), u[k].view()).unwrap() - sat);
        for j in 0..v.ncols() {
            let d = &u[k].column(j) - &centers[k].column(j);
            expect += 3.0 * d.dot(&d).sqrt();
        }
    }
    for a in 0..7 {
        for b in a + 1..7 {
            let sq: f64 = u.iter().map(|m| (&m.row(a) - &m.row(b)).mapv(|v| v * v).sum()).sum();
            expect += 2.0 * sq.sqrt();
        }
    }
    assert_abs_diff_eq!(objective(&ds, &pen, &u).unwrap(), expect, epsilon = 1e-9);
}

fn check_full_fusion(ds: &MultiViewDataset<f64>, graph: WeightGraph<f64>) {
    let opts = tight();
    let pen = Penalties::new(ds, 0.0, 0.0, graph).unwrap();
    let gamma = gamma_bound(ds, &pen).unwrap() * 1.01;
    assert!(gamma.is_finite() && gamma > 0.0);
    let pen = Penalties { gamma, ..pen };
    let sol = fit(ds, &pen, &opts, None).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.num_clusters, 1);
    for (u, c) in sol.u.iter().zip(&sol.centers) {
        let xt = center_matrix(c.view(), u.nrows());
        assert_abs_diff_eq!(*u, xt, epsilon = 1e-4);
    }

    let pen = Penalties { gamma: 0.0, ..pen };
    let alpha = alpha_bound(ds, &pen).unwrap() * 1.01;
    let pen = Penalties { alpha, ..pen };
    let sol = fit(ds, &pen, &opts, None).unwrap();
    assert!(sol.selected.iter().flatten().all(|s| !s));
    for (u, c) in sol.u.iter().zip(&sol.centers) {
        assert_abs_diff_eq!(*u, center_matrix(c.view(), u.nrows()), epsilon = 1e-4);
    }
}

#[test]
fn full_fusion_above_bounds() {
    check_full_fusion(&euclid_ds(three_groups()), WeightGraph::complete(7));
    let g = WeightGraph::from_triples(7, vec![(0, 1, 0.5), (1, 2, 1.0), (2, 3, 0.2), (3, 4, 1.0), (4, 5, 0.7), (5, 6, 0.3)]).unwrap();
    check_full_fusion(&euclid_ds(three_groups()), g.clone());
    check_full_fusion(&MultiViewDataset::single(three_groups(), LossSpec::Manhattan).unwrap(), g.clone());
    let counts = array![[3.0, 1.0], [0.0, 2.0], [1.0, 0.0], [7.0, 5.0], [2.0, 2.0], [2.0, 9.0], [4.0, 1.0]];
    check_full_fusion(&MultiViewDataset::single(counts.clone(), LossSpec::PoissonLl).unwrap(), g.clone());
    let multi = MultiViewDataset::new(vec![
        View::new(three_groups(), LossSpec::Euclidean),
        View::new(counts, LossSpec::PoissonDev),
    ])
    .unwrap();
    check_full_fusion(&multi, g);
}

#[test]
fn onestep_matches_fullsolve() {
    let g = WeightGraph::complete(7);
    let counts = array![[3.0, 1.0], [0.0, 2.0], [1.0, 0.0], [7.0, 5.0], [2.0, 2.0], [2.0, 9.0], [4.0, 1.0]];
    let binary = counts.mapv(|v| if v > 1.5 { 1.0 } else { 0.0 });
    let cases = vec![
        euclid_ds(three_groups()),
        MultiViewDataset::single(three_groups(), LossSpec::Manhattan).unwrap(),
        MultiViewDataset::single(three_groups(), LossSpec::Chebychev).unwrap(),
        MultiViewDataset::single(counts.clone(), LossSpec::PoissonLl).unwrap(),
        MultiViewDataset::single(binary.clone(), LossSpec::BernoulliLl).unwrap(),
        MultiViewDataset::single(binary.mapv(|v| 2.0 * v - 1.0), LossSpec::Hinge).unwrap(),
        MultiViewDataset::new(vec![
            View::new(three_groups(), LossSpec::Minkowski { q: 1.5 }),
            View::new(counts, LossSpec::NegbinLl { dispersion: 2.0 }),
            View::new(binary, LossSpec::BinomialDev),
        ])
        .unwrap(),
    ];
    for ds in cases {
        let pen = Penalties::new(&ds, 0.02, 0.05, g.clone()).unwrap();
        let a = fit(&ds, &pen, &tight(), None).unwrap();
        let b = fit_fullsolve(&ds, &pen, &SolverOptions { inner_tol: 1e-6, ..tight() }).unwrap();
        assert!(a.converged && b.converged, "{:?}", ds.view(0).loss);
        let rel = (a.objective - b.objective).abs() / b.objective.abs().max(1e-12);
        assert!(rel <= 1e-4, "{:?}: {} vs {}", ds.view(0).loss, a.objective, b.objective);
        // fullsolve never ends above its starting objective
        let start = initial_state(&ds, &pen, &tight()).unwrap();
        assert!(b.objective <= objective(&ds, &pen, &start.u()).unwrap() + 1e-12);
    }
}

#[test]
fn special_paths_agree_with_prox_gradient() {
    let g = WeightGraph::complete(7);
    let binary = array![[1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0]];
    for ds in [
        euclid_ds(three_groups()),
        MultiViewDataset::single(binary, LossSpec::BernoulliLl).unwrap(),
    ] {
        let pen = Penalties::new(&ds, 0.05, 0.1, g.clone()).unwrap();
        let a = fit(&ds, &pen, &tight(), None).unwrap();
        let b = fit(&ds, &pen, &SolverOptions { use_special_paths: false, ..tight() }, None).unwrap();
        assert_abs_diff_eq!(a.objective, b.objective, epsilon = 1e-6 * a.objective.abs());
    }
}

#[test]
fn warm_start_reuses_state() {
    let ds = MultiViewDataset::single(three_groups(), LossSpec::Manhattan).unwrap();
    let pen = Penalties::new(&ds, 0.05, 0.0, WeightGraph::complete(7)).unwrap();
    let cold = fit(&ds, &pen, &tight(), None).unwrap();
    let warm = fit(&ds, &pen, &tight(), Some(&cold.state)).unwrap();
    assert!(warm.iterations <= cold.iterations);
    assert!(warm.iterations < 5);
    // a warm start from a different step family rebuilds the split blocks
    let euc = euclid_ds(three_groups());
    let pen2 = Penalties::new(&euc, 0.05, 0.0, WeightGraph::complete(7)).unwrap();
    let opts = SolverOptions { use_special_paths: false, ..tight() };
    let first = fit(&euc, &pen2, &opts, None).unwrap();
    assert!(first.state.views[0].r.is_none());
    let again = fit(&euc, &pen2, &tight(), Some(&first.state)).unwrap();
    assert!(again.converged);
    assert_abs_diff_eq!(again.objective, first.objective, epsilon = 1e-6);
    // shape mismatch
    let small = euclid_ds(three_groups().slice(s![..6, ..]).to_owned());
    let pen3 = Penalties::new(&small, 0.05, 0.0, WeightGraph::complete(6)).unwrap();
    assert!(matches!(fit(&small, &pen3, &tight(), Some(&cold.state)), Err(GeccoError::Shape(_))));
}

#[test]
fn max_iter_flags_non_convergence() {
    let ds = euclid_ds(three_groups());
    let pen = Penalties::new(&ds, 0.1, 0.0, WeightGraph::complete(7)).unwrap();
    let sol = fit(&ds, &pen, &SolverOptions { max_iter: 2, ..tight() }, None).unwrap();
    assert!(!sol.converged);
    assert_eq!(sol.iterations, 2);
    assert_eq!(sol.residuals.len(), 2);
    assert!(sol.objective.is_finite());
}

#[test]
fn invalid_options_rejected() {
    let ds = euclid_ds(three_groups());
    let pen = Penalties::new(&ds, 0.1, 0.0, WeightGraph::complete(7)).unwrap();
    for opts in [
        SolverOptions { rho: 0.0, ..tight() },
        SolverOptions { backtrack_shrink: 1.0, ..tight() },
        SolverOptions { tol_dual: 0.0, ..tight() },
    ] {
        assert!(matches!(fit(&ds, &pen, &opts, None), Err(GeccoError::InvalidParameter(_))));
    }
    let bad = Penalties { gamma: -1.0, ..pen.clone() };
    assert!(fit(&ds, &bad, &tight(), None).is_err());
    let bad = Penalties { graph: WeightGraph::complete(6), ..pen };
    assert!(matches!(fit(&ds, &bad, &tight(), None), Err(GeccoError::Shape(_))));
}

#[test]
fn masked_entries_do_not_enter_the_loss() {
    let mut x = three_groups();
    let mut mask = Array2::from_elem((7, 2), true);
    mask[[1, 0]] = false;
    mask[[5, 1]] = false;
    let ds = euclid_ds(x.clone()).with_masks(vec![Some(mask.clone())]).unwrap();
    let pen = Penalties::new(&ds, 0.05, 0.0, WeightGraph::complete(7)).unwrap();
    let a = fit(&ds, &pen, &tight(), None).unwrap();
    // changing the hidden values changes nothing
    x[[1, 0]] = 100.0;
    x[[5, 1]] = -40.0;
    let ds2 = euclid_ds(x).with_masks(vec![Some(mask)]).unwrap();
    let pen2 = Penalties { pi: pen.pi.clone(), ..pen };
    let b = fit(&ds2, &pen2, &tight(), None).unwrap();
    assert_abs_diff_eq!(a.u[0], b.u[0], epsilon = 1e-9);
    assert_abs_diff_eq!(a.objective, b.objective, epsilon = 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backtracking_certificate(
        xs in prop::collection::vec(0u32..8, 5),
        us in prop::collection::vec(-2.0f64..2.0, 5),
        vs in prop::collection::vec(-1.0f64..1.0, 4),
        alpha in 0.0f64..2.0,
    ) {
        let x = Array2::from_shape_fn((5, 1), |(i, _)| xs[i] as f64 + if i == 0 { 1.0 } else { 0.0 });
        let mut f = Fixture::new(x, LossSpec::PoissonLl, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        f.v = Array2::from_shape_fn((4, 1), |(l, _)| vs[l]);
        let ctx = f.ctx(LossSpec::PoissonLl, alpha);
        let u = Array2::from_shape_fn((5, 1), |(i, _)| us[i]);
        let s = prox_gradient_column(&ctx, u.view(), 0, &bt()).unwrap();
        prop_assert!(s.satisfies_majorization(1e-12));
        // recompute g(z) independently
        let c = f.centers[0];
        let znat = s.next.mapv(|v| v + c).insert_axis(ndarray::Axis(1));
        let res = f.op.apply_d(znat.view()).unwrap() - &f.v + &f.lambda;
        let g = loss_value(LossSpec::PoissonLl, f.x.view(), znat.view()).unwrap() + 0.5 * res.mapv(|v| v * v).sum();
        prop_assert!((g - s.g_next).abs() <= 1e-9 * (1.0 + g.abs()));
    }

    #[test]
    fn continuity_in_the_data(delta in prop::collection::vec(-1.0f64..1.0, 14)) {
        let x = three_groups();
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let dx = Array2::from_shape_fn((7, 2), |(i, j)| delta[i * 2 + j] / norm * 1e-6);
        let a = euclid_ds(x.clone());
        let b = euclid_ds(&x + &dx);
        let pen = Penalties::new(&a, 0.05, 0.1, WeightGraph::complete(7)).unwrap();
        let pen_b = Penalties { pi: pen.pi.clone(), ..pen.clone() };
        let fa = fit(&a, &pen, &tight(), None).unwrap();
        let fb = fit(&b, &pen_b, &tight(), None).unwrap();
        prop_assert!((fa.objective - fb.objective).abs() <= 1e-3);
    }
}
