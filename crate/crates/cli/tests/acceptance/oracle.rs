//! Brute-force minimizers used as references.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` for a unimodal `f`; returns the
/// smallest value seen, including both ends.
pub fn golden(mut lo: f64, mut hi: f64, iters: usize, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    let (f_lo, f_hi) = (f(lo), f(hi));
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    [f_lo, f_hi, fa, fb, f(0.5 * (lo + hi))].into_iter().fold(f64::INFINITY, f64::min)
}

/// Minimum of a convex `f` over the box `[lo, hi]` (at most 3 dimensions)
/// by nested golden-section searches: partial minima of a convex function
/// are convex, so every level stays unimodal.
pub fn nested_min(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], iters: usize) -> f64 {
    fn level(f: &dyn Fn(&[f64]) -> f64, x: [f64; 3], d: usize, lo: &[f64], hi: &[f64], iters: usize) -> f64 {
        if d == lo.len() {
            return f(&x[..d]);
        }
        golden(lo[d], hi[d], iters, &mut |t| {
            let mut y = x;
            y[d] = t;
            level(f, y, d + 1, lo, hi, iters)
        })
    }
    assert!(lo.len() <= 3 && lo.len() == hi.len());
    level(f, [0.0; 3], 0, lo, hi, iters)
}

/// Zooming grid search for a convex `f` on a 1- or 2-dimensional box.
/// Returns the best point and value.
pub fn zoom_grid(f: &dyn Fn(&[f64]) -> f64, mut lo: Vec<f64>, mut hi: Vec<f64>, cell: f64) -> (Vec<f64>, f64) {
    const K: usize = 40;
    let d = lo.len();
    let mut best = (lo.clone(), f64::INFINITY);
    loop {
        let steps: Vec<f64> = (0..d).map(|k| (hi[k] - lo[k]) / K as f64).collect();
        let total = (K + 1).pow(d as u32);
        for idx in 0..total {
            let mut x = vec![0.0; d];
            let mut r = idx;
            for k in 0..d {
                x[k] = lo[k] + (r % (K + 1)) as f64 * steps[k];
                r /= K + 1;
            }
            let v = f(&x);
            if v < best.1 {
                best = (x, v);
            }
        }
        if steps.iter().all(|s| *s <= cell) {
            return best;
        }
        for k in 0..d {
            lo[k] = best.0[k] - 3.0 * steps[k];
            hi[k] = best.0[k] + 3.0 * steps[k];
        }
    }
}

/// Accelerated gradient with function-value restarts on a smooth convex
/// function. Returns the final iterate.
pub fn fista(
    x0: &[f64],
    lipschitz: f64,
    iters: usize,
    value: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64], &mut [f64]),
    mut watch: impl FnMut(&[f64]),
) -> Vec<f64> {
    let n = x0.len();
    let step = 1.0 / lipschitz;
    let mut x = x0.to_vec();
    let mut y = x.clone();
    let mut g = vec![0.0; n];
    let mut t = 1.0f64;
    let mut fx = value(&x);
    for _ in 0..iters {
        grad(&y, &mut g);
        let x_new: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let f_new = value(&x_new);
        if f_new > fx {
            // restart momentum from the last accepted point
            y.copy_from_slice(&x);
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        for i in 0..n {
            y[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        x = x_new;
        fx = f_new;
        t = t_new;
        watch(&x);
    }
    x
}
