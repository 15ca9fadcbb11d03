//! Proximal operators `prox_h(v) = argmin_x 0.5 ||x - v||^2 + h(x)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Zip};

use crate::error::{GeccoError, Result};
use crate::scalar::Scalar;

fn l2<F: Scalar>(v: ArrayView1<F>) -> F {
    v.iter().map(|x| *x * *x).sum::<F>().sqrt()
}

/// Block soft-threshold, the prox of `t ||.||_2`.
pub fn prox_group_l2<F: Scalar>(v: ArrayView1<F>, t: F) -> Array1<F> {
    let mut out = v.to_owned();
    prox_group_l2_inplace(out.view_mut(), t);
    out
}

pub fn prox_group_l2_inplace<F: Scalar>(mut v: ArrayViewMut1<F>, t: F) {
    let norm = l2(v.view());
    if norm <= t {
        v.fill(F::zero());
    } else if t > F::zero() {
        let scale = F::one() - t / norm;
        v.mapv_inplace(|x| x * scale);
    }
}

#[inline]
pub fn soft_threshold<F: Scalar>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        F::zero()
    }
}

/// Elementwise soft-threshold, the prox of `t ||.||_1`.
pub fn prox_l1<F: Scalar>(z: ArrayView2<F>, t: F) -> Array2<F> {
    z.mapv(|v| soft_threshold(v, t))
}

/// Euclidean projection onto the unit `l1` ball by sort-and-threshold.
pub fn project_l1_ball<F: Scalar>(w: ArrayView1<F>) -> Array1<F> {
    let total: F = w.iter().map(|x| x.abs()).sum();
    if total <= F::one() {
        return w.to_owned();
    }
    let mut mags: Vec<F> = w.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cum = F::zero();
    let mut theta = F::zero();
    for (k, m) in mags.iter().enumerate() {
        cum += *m;
        let cand = (cum - F::one()) / F::from_usize_lossy(k + 1);
        if *m > cand {
            theta = cand;
        } else {
            break;
        }
    }
    w.mapv(|x| soft_threshold(x, theta))
}

/// Prox of `t ||.||_inf` through the Moreau decomposition
/// `v - t * P_{l1 ball}(v / t)`.
pub fn prox_linf_row<F: Scalar>(v: ArrayView1<F>, t: F) -> Array1<F> {
    if t <= F::zero() {
        return v.to_owned();
    }
    let proj = project_l1_ball(v.mapv(|x| x / t).view());
    Zip::from(&v).and(&proj).map_collect(|a, p| *a - t * *p)
}

/// [`prox_linf_row`] where the norm only covers observed coordinates;
/// unobserved coordinates are returned unchanged.
pub fn prox_linf_row_masked<F: Scalar>(
    v: ArrayView1<F>,
    t: F,
    mask: Option<ArrayView1<bool>>,
) -> Array1<F> {
    match mask {
        None => prox_linf_row(v, t),
        Some(m) => {
            let idx: Vec<usize> = (0..v.len()).filter(|&j| m[j]).collect();
            let sub: Array1<F> = idx.iter().map(|&j| v[j]).collect();
            let p = prox_linf_row(sub.view(), t);
            let mut out = v.to_owned();
            for (k, &j) in idx.iter().enumerate() {
                out[j] = p[k];
            }
            out
        }
    }
}

/// Solves `y + lam * y^(q-1) = a` for `y` in `[0, a]`.
fn lq_coordinate<F: Scalar>(a: F, lam: F, qm1: F) -> F {
    if a <= F::zero() {
        return F::zero();
    }
    let h = |y: F| y + lam * y.powf(qm1) - a;
    let (mut lo, mut hi) = (F::zero(), a);
    let mut y = if qm1 >= F::one() {
        // the root is below both a and (a / lam)^(1 / (q - 1))
        a.min((a / lam).powf(qm1.recip()))
    } else {
        a * F::lit(0.5)
    };
    let tiny = F::epsilon() * a;
    for _ in 0..200 {
        let hy = h(y);
        if hy.abs() <= tiny {
            break;
        }
        if hy > F::zero() {
            hi = y;
        } else {
            lo = y;
        }
        if hi - lo <= tiny {
            break;
        }
        let d = F::one() + lam * qm1 * y.powf(qm1 - F::one());
        let newton = y - hy / d;
        y = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            (lo + hi) * F::lit(0.5)
        };
    }
    y
}

/// Prox of `t ||.||_q` for `q > 1`.
///
/// Each output magnitude solves `y + lam * y^(q-1) = |v_i|`, and the scalar
/// `lam` is found by bisection on `log lam` so that
/// `lam * ||y||_q^(q-1) = t`. Returns zero when `||v||_{q*} <= t`.
pub fn prox_lq_row<F: Scalar>(v: ArrayView1<F>, t: F, q: F) -> Result<Array1<F>> {
    if !(q > F::one()) {
        return Err(GeccoError::InvalidParameter(format!("q must exceed 1, got {q}")));
    }
    if t <= F::zero() {
        return Ok(v.to_owned());
    }
    let qm1 = q - F::one();
    let qstar = q / qm1;
    let dual = v.iter().map(|x| x.abs().powf(qstar)).sum::<F>().powf(qstar.recip());
    if dual <= t {
        return Ok(Array1::zeros(v.len()));
    }
    let mags: Vec<F> = v.iter().map(|x| x.abs()).collect();
    let phi = |lam: F| -> (F, Vec<F>) {
        let y: Vec<F> = mags.iter().map(|a| lq_coordinate(*a, lam, qm1)).collect();
        let norm = y.iter().map(|v| v.powf(q)).sum::<F>().powf(q.recip());
        (lam * norm.powf(qm1) - t, y)
    };
    // bracket lam on a log scale; phi is increasing in lam
    let step = F::lit(2.0);
    let start = t.ln();
    let (mut lo, mut hi) = (start, start);
    let mut bracketed = false;
    if phi(start.exp()).0 < F::zero() {
        for _ in 0..400 {
            hi += step;
            if phi(hi.exp()).0 >= F::zero() {
                bracketed = true;
                break;
            }
            lo = hi;
        }
    } else {
        for _ in 0..400 {
            lo -= step;
            if phi(lo.exp()).0 < F::zero() {
                bracketed = true;
                break;
            }
            hi = lo;
        }
    }
    if !bracketed {
        return Err(GeccoError::Numerical("lq prox: failed to bracket".into()));
    }
    // Illinois false position on log lam, falling back to bisection
    let tol = F::lit(1e-8).min(F::epsilon().sqrt());
    let (mut flo, _) = phi(lo.exp());
    let (mut fhi, mut best) = phi(hi.exp());
    let mut side = 0i8;
    let mut converged = false;
    for _ in 0..200 {
        let mut mid = hi - fhi * (hi - lo) / (fhi - flo);
        if !(mid > lo && mid < hi) {
            mid = (lo + hi) * F::lit(0.5);
        }
        let (f, y) = phi(mid.exp());
        best = y;
        if f.abs() <= tol * tol * t || hi - lo <= F::epsilon() * F::lit(4.0) * (F::one() + mid.abs()) {
            converged = true;
            break;
        }
        if f < F::zero() {
            lo = mid;
            flo = f;
            if side == -1 {
                fhi = fhi * F::lit(0.5);
            }
            side = -1;
        } else {
            hi = mid;
            fhi = f;
            if side == 1 {
                flo = flo * F::lit(0.5);
            }
            side = 1;
        }
    }
    if !converged && (hi - lo) > tol {
        return Err(GeccoError::Numerical(
            "lq prox: dual search hit its iteration cap".into(),
        ));
    }
    Ok(v.iter()
        .zip(best)
        .map(|(s, y)| if *s < F::zero() { -y } else { y })
        .collect())
}

pub fn prox_lq_row_masked<F: Scalar>(
    v: ArrayView1<F>,
    t: F,
    q: F,
    mask: Option<ArrayView1<bool>>,
) -> Result<Array1<F>> {
    match mask {
        None => prox_lq_row(v, t, q),
        Some(m) => {
            let idx: Vec<usize> = (0..v.len()).filter(|&j| m[j]).collect();
            let sub: Array1<F> = idx.iter().map(|&j| v[j]).collect();
            let p = prox_lq_row(sub.view(), t, q)?;
            let mut out = v.to_owned();
            for (k, &j) in idx.iter().enumerate() {
                out[j] = p[k];
            }
            Ok(out)
        }
    }
}

#[inline]
pub fn prox_hinge_scalar<F: Scalar>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z >= F::zero() {
        F::zero()
    } else {
        z
    }
}

/// Elementwise prox of `t max(0, .)`.
pub fn prox_hinge<F: Scalar>(z: ArrayView2<F>, t: F) -> Array2<F> {
    z.mapv(|v| prox_hinge_scalar(v, t))
}

/// Row-wise block soft-threshold with threshold `t * w[l]` on row `l`.
pub fn prox_fusion_rows<F: Scalar>(m: ArrayView2<F>, t: F, w: &[F]) -> Result<Array2<F>> {
    let mut out = m.to_owned();
    prox_fusion_rows_inplace(&mut out, t, w)?;
    Ok(out)
}

pub fn prox_fusion_rows_inplace<F: Scalar>(m: &mut Array2<F>, t: F, w: &[F]) -> Result<()> {
    if m.nrows() != w.len() {
        return Err(GeccoError::Shape(format!(
            "{} rows but {} edge weights",
            m.nrows(),
            w.len()
        )));
    }
    for (row, wl) in m.rows_mut().into_iter().zip(w) {
        prox_group_l2_inplace(row, t * *wl);
    }
    Ok(())
}
