//! Simulated data with three equal-sized clusters and ten informative
//! features per view.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, Uniform};

use crate::data::{MultiViewDataset, View};
use crate::error::{GeccoError, Result};
use crate::loss::LossSpec;

pub const INFORMATIVE: usize = 10;

/// Simulated single-view data with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub data: Array2<f64>,
    pub labels: Vec<usize>,
    /// `true` for informative features.
    pub informative: Vec<bool>,
    pub outliers: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct MultiViewSim {
    pub dataset: MultiViewDataset<f64>,
    pub labels: Vec<usize>,
    pub informative: Vec<Vec<bool>>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn group_labels(n: usize) -> Result<Vec<usize>> {
    if n < 3 || n % 3 != 0 {
        return Err(GeccoError::InvalidParameter(format!(
            "n must be a positive multiple of 3, got {n}"
        )));
    }
    Ok((0..n).map(|i| i / (n / 3)).collect())
}

fn informative_mask(p: usize) -> Vec<bool> {
    (0..p).map(|j| j < INFORMATIVE).collect()
}

/// Picks `round(frac * n / 3)` rows of every group.
fn pick_outliers(n: usize, frac: f64, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(GeccoError::InvalidParameter(format!(
            "outlier fraction must lie in [0, 1], got {frac}"
        )));
    }
    let g = n / 3;
    let m = (frac * g as f64).round() as usize;
    let mut out = vec![false; n];
    for k in 0..3 {
        for i in sample(rng, g, m) {
            out[k * g + i] = true;
        }
    }
    Ok(out)
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite normal parameters")
}

/// Spherical mean of feature `j` in group `k`: `-2.5` on the first five
/// features for group 0, `+2.5` on the last five for group 1, `+2.5` on
/// the first five for group 2.
fn spherical_mean(k: usize, j: usize) -> f64 {
    match (k, j < 5) {
        (0, true) => -2.5,
        (1, false) => 2.5,
        (2, true) => 2.5,
        _ => 0.0,
    }
}

/// Gaussian clusters on the first ten features plus `p_noise` noise
/// features `N(0, noise_sd^2)`. Outlier rows draw their informative
/// features with variance 5.
pub fn simulate_spherical(n: usize, p_noise: usize, outlier_frac: f64, noise_sd: f64, seed: u64) -> Result<SimData> {
    let labels = group_labels(n)?;
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(GeccoError::InvalidParameter("noise sd must be nonnegative".into()));
    }
    let mut rng = rng(seed);
    let outliers = pick_outliers(n, outlier_frac, &mut rng)?;
    let p = INFORMATIVE + p_noise;
    let mut data = Array2::zeros((n, p));
    let (unit, wide, noise) = (normal(0.0, 1.0), normal(0.0, 5f64.sqrt()), normal(0.0, noise_sd));
    for i in 0..n {
        for j in 0..p {
            data[[i, j]] = if j < INFORMATIVE {
                let z = if outliers[i] { wide.sample(&mut rng) } else { unit.sample(&mut rng) };
                spherical_mean(labels[i], j) + z
            } else {
                noise.sample(&mut rng)
            };
        }
    }
    Ok(SimData {
        data,
        labels,
        informative: informative_mask(p),
        outliers,
    })
}

/// A point on moon `k` before noise. Moons have radius 1 and centers
/// (0, 0), (1, 0.5) (opening upwards) and (2, 0).
fn moon_point(k: usize, theta: f64) -> (f64, f64) {
    let (c, s) = (theta.cos(), theta.sin());
    match k {
        0 => (c, s),
        1 => (1.0 + c, 0.5 - s),
        _ => (2.0 + c, s),
    }
}

fn moon_block(labels: &[usize], pairs: usize, sd: f64, outliers: &[bool], outlier_sd: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let angle = Uniform::new(0.0, PI).expect("valid range");
    let mut out = Array2::zeros((labels.len(), 2 * pairs));
    for (i, &k) in labels.iter().enumerate() {
        let noise = normal(0.0, if outliers[i] { outlier_sd } else { sd });
        for q in 0..pairs {
            let (x, y) = moon_point(k, angle.sample(rng));
            out[[i, 2 * q]] = x + noise.sample(rng);
            out[[i, 2 * q + 1]] = y + noise.sample(rng);
        }
    }
    out
}

const MOON_SD: f64 = 0.1;
const MOON_OUTLIER_SD: f64 = 0.5;

/// Five independent pairs of three interlocking half moons (noise sd 0.1)
/// plus `p_noise` standard normal features. Outlier rows get noise sd 0.5.
pub fn simulate_halfmoons(n: usize, p_noise: usize, outlier_frac: f64, seed: u64) -> Result<SimData> {
    let labels = group_labels(n)?;
    let mut rng = rng(seed);
    let outliers = pick_outliers(n, outlier_frac, &mut rng)?;
    let p = INFORMATIVE + p_noise;
    let mut data = Array2::zeros((n, p));
    let moons = moon_block(&labels, INFORMATIVE / 2, MOON_SD, &outliers, MOON_OUTLIER_SD, &mut rng);
    data.slice_mut(s![.., ..INFORMATIVE]).assign(&moons);
    let unit = normal(0.0, 1.0);
    for v in data.slice_mut(s![.., INFORMATIVE..]).iter_mut() {
        *v = unit.sample(&mut rng);
    }
    Ok(SimData {
        data,
        labels,
        informative: informative_mask(p),
        outliers,
    })
}

fn poisson(lambda: f64) -> Poisson<f64> {
    Poisson::new(lambda).expect("positive rate")
}

/// Counts with group means 1, 4 and 7 on the first ten features; each noise
/// feature is Poisson with its own rate drawn from `1..=10`.
pub fn simulate_poisson(n: usize, p_noise: usize, seed: u64) -> Result<SimData> {
    let labels = group_labels(n)?;
    let mut rng = rng(seed);
    let p = INFORMATIVE + p_noise;
    let rates: Vec<f64> = (0..p_noise).map(|_| rng.random_range(1..=10) as f64).collect();
    let groups = [poisson(1.0), poisson(4.0), poisson(7.0)];
    let noise: Vec<Poisson<f64>> = rates.iter().map(|r| poisson(*r)).collect();
    let mut data = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            data[[i, j]] = if j < INFORMATIVE {
                groups[labels[i]].sample(&mut rng)
            } else {
                noise[j - INFORMATIVE].sample(&mut rng)
            };
        }
    }
    Ok(SimData {
        data,
        labels,
        informative: informative_mask(p),
        outliers: vec![false; n],
    })
}

/// Multi-view scenarios: continuous, count and binary (or proportion)
/// views for 120 samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::S1,
        Scenario::S2,
        Scenario::S3,
        Scenario::S4,
        Scenario::S5,
        Scenario::S6,
    ];

    pub fn dims(self) -> [usize; 3] {
        match self {
            Scenario::S1 | Scenario::S2 => [10, 10, 10],
            Scenario::S3 | Scenario::S4 => [200, 100, 50],
            Scenario::S5 | Scenario::S6 => [50, 200, 100],
        }
    }

    pub fn halfmoons(self) -> bool {
        matches!(self, Scenario::S2 | Scenario::S4 | Scenario::S6)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
            Scenario::S5 => "S5",
            Scenario::S6 => "S6",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = GeccoError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GeccoError::InvalidParameter(format!("unknown scenario `{s}`")))
    }
}

pub const MULTIVIEW_N: usize = 120;

/// Losses used for the three simulated views.
pub fn multiview_losses() -> [LossSpec<f64>; 3] {
    [LossSpec::Euclidean, LossSpec::Manhattan, LossSpec::BernoulliLl]
}

pub fn simulate_multiview(scenario: Scenario, seed: u64) -> Result<MultiViewSim> {
    simulate_multiview_dims(scenario.halfmoons(), scenario.dims(), seed)
}

/// Multi-view data with arbitrary view widths (each at least 10).
///
/// Spherical: `N(mu_k, 3 I)` on the spherical means, Poisson with means
/// 2, 4, 6 and Bernoulli with means 0.5, 0.2, 0.8. Half moons: moon pairs
/// with noise sd 0.2 for the continuous view; the count and proportion
/// views push independent moon draws through a rank copula into
/// Poisson(3) and Beta(2, 2) marginals. Noise features are `N(0, 1)`,
/// Poisson with a rate from `1..=10`, and Bernoulli(0.5) or Beta(2, 2).
pub fn simulate_multiview_dims(halfmoons: bool, dims: [usize; 3], seed: u64) -> Result<MultiViewSim> {
    if dims.iter().any(|&p| p < INFORMATIVE) {
        return Err(GeccoError::InvalidParameter(format!(
            "every view needs at least {INFORMATIVE} features"
        )));
    }
    let n = MULTIVIEW_N;
    let labels = group_labels(n)?;
    let mut rng = rng(seed);
    let none = vec![false; n];
    let [p1, p2, p3] = dims;
    let unit = normal(0.0, 1.0);

    let mut cont = Array2::zeros((n, p1));
    let mut count = Array2::zeros((n, p2));
    let mut binary = Array2::zeros((n, p3));
    if halfmoons {
        cont.slice_mut(s![.., ..INFORMATIVE])
            .assign(&moon_block(&labels, INFORMATIVE / 2, 0.2, &none, 0.2, &mut rng));
        let raw = moon_block(&labels, INFORMATIVE / 2, MOON_SD, &none, MOON_SD, &mut rng);
        let u = rank_uniforms(&raw);
        count
            .slice_mut(s![.., ..INFORMATIVE])
            .assign(&u.mapv(|v| poisson_quantile(3.0, v)));
        let raw = moon_block(&labels, INFORMATIVE / 2, MOON_SD, &none, MOON_SD, &mut rng);
        let u = rank_uniforms(&raw);
        binary.slice_mut(s![.., ..INFORMATIVE]).assign(&u.mapv(beta22_quantile));
    } else {
        let sd3 = normal(0.0, 3f64.sqrt());
        let pois = [poisson(2.0), poisson(4.0), poisson(6.0)];
        let bern = [0.5, 0.2, 0.8].map(|p| Bernoulli::new(p).expect("probability"));
        for i in 0..n {
            let k = labels[i];
            for j in 0..INFORMATIVE {
                cont[[i, j]] = spherical_mean(k, j) + sd3.sample(&mut rng);
                count[[i, j]] = pois[k].sample(&mut rng);
                binary[[i, j]] = if bern[k].sample(&mut rng) { 1.0 } else { 0.0 };
            }
        }
    }
    for v in cont.slice_mut(s![.., INFORMATIVE..]).iter_mut() {
        *v = unit.sample(&mut rng);
    }
    for j in INFORMATIVE..p2 {
        let d = poisson(rng.random_range(1..=10) as f64);
        for i in 0..n {
            count[[i, j]] = d.sample(&mut rng);
        }
    }
    let half = Bernoulli::new(0.5).expect("probability");
    let unif = Uniform::new(0.0, 1.0).expect("valid range");
    for v in binary.slice_mut(s![.., INFORMATIVE..]).iter_mut() {
        *v = if halfmoons {
            beta22_quantile(unif.sample(&mut rng))
        } else if half.sample(&mut rng) {
            1.0
        } else {
            0.0
        };
    }
    let [l1, l2, l3] = multiview_losses();
    let dataset = MultiViewDataset::new(vec![
        View::new(cont, l1),
        View::new(count, l2),
        View::new(binary, l3),
    ])?;
    Ok(MultiViewSim {
        dataset,
        labels,
        informative: dims.iter().map(|&p| informative_mask(p)).collect(),
    })
}

/// Column-wise `rank / (n + 1)`, ties broken by row order.
fn rank_uniforms(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros(x.dim());
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        for (r, &i) in idx.iter().enumerate() {
            out[[i, j]] = (r + 1) as f64 / (n + 1) as f64;
        }
    }
    out
}

/// Smallest `k` with `P(Poisson(lambda) <= k) >= u`.
pub fn poisson_quantile(lambda: f64, u: f64) -> f64 {
    let mut k = 0u32;
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    while cdf < u && k < 10_000 {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k as f64
}

/// Inverse of the Beta(2, 2) distribution function `3u^2 - 2u^3`.
pub fn beta22_quantile(u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if 3.0 * mid * mid - 2.0 * mid * mid * mid < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
