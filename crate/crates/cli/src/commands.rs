use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use gecco::path::{self as gpath, AdaptiveTarget};
use gecco::sim::{self, Scenario};
use gecco::solver::{self, alpha_bound, gamma_bound};
use gecco::weights::{build_weights, pairwise_distance, DistanceMetric, WeightKind, WeightScheme};
use gecco::{Dataset, Fit, Graph, Loss, MultiViewDataset, Penalty, View};
use ndarray::Array2;

use crate::config::{solver_options, Config, LossParams, Strength, ViewConfig, WeightsConfig};
use crate::io::{num, parse_bool, read_column, read_view, Table};
use crate::CliError;

/// Whether every fit reached its tolerance.
pub type Converged = bool;

pub struct Run {
    pub cfg: Config,
    base: PathBuf,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: &Path, seed: Option<u64>, out: &Path) -> Result<Run, CliError> {
        let (mut cfg, base) = Config::load(config)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            cfg,
            base,
            out: out.to_path_buf(),
        })
    }

    fn header(&self, command: &str, resolved: &[(&str, String)]) -> String {
        let mut h = format!("# gecco {command}\n# seed = {}\n", self.cfg.seed);
        for (k, v) in resolved {
            h += &format!("# resolved {k} = {v}\n");
        }
        for line in self.cfg.to_toml().lines() {
            h += &format!("# {line}\n");
        }
        h
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        let views = self
            .cfg
            .views
            .iter()
            .map(|v| {
                let loss = Loss::from_parts(&v.loss, v.params.q, v.params.dispersion, v.params.classes)
                    .and_then(|l| l.validate().map(|_| l))
                    .map_err(|e| CliError::Config(e.to_string()))?;
                read_view(&self.base.join(&v.path), loss)
            })
            .collect::<Result<Vec<_>, _>>()?;
        MultiViewDataset::new(views).map_err(|e| CliError::Data(e.to_string()))
    }

    fn scheme(&self) -> Result<WeightScheme<f64>, CliError> {
        let w = &self.cfg.weights;
        let kind = match w.kind.as_deref() {
            None | Some("sne") => WeightKind::Sne,
            Some("knn") => WeightKind::Knn,
            Some(o) => return Err(CliError::Config(format!("weights.kind must be `sne` or `knn`, got `{o}`"))),
        };
        Ok(WeightScheme { kind, k: w.k, phi: w.phi })
    }

    fn graph(&self, ds: &Dataset) -> Result<Graph, CliError> {
        let metric = match self.cfg.weights.metric.as_deref() {
            None if ds.num_views() == 1 => DistanceMetric::PerLoss,
            None | Some("gower") => DistanceMetric::Gower,
            Some("per_loss") => DistanceMetric::PerLoss,
            Some(o) => {
                return Err(CliError::Config(format!(
                    "weights.metric must be `per_loss` or `gower`, got `{o}`"
                )))
            }
        };
        let d = pairwise_distance(ds, &metric).map_err(CliError::from_fit)?;
        build_weights(d.view(), &self.scheme()?).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Dataset, weights, penalties with `auto-max` resolved, and options.
    fn problem(&self) -> Result<(Dataset, Penalty, gecco::Options), CliError> {
        let opts = solver_options(&self.cfg.solver)?;
        let ds = self.dataset()?;
        let graph = self.graph(&ds)?;
        let mut pen = Penalty::new(&ds, 0.0, 0.0, graph).map_err(CliError::from_fit)?;
        pen.gamma = match self.cfg.penalty.gamma {
            Strength::Value(g) => g,
            Strength::Named(_) => gamma_bound(&ds, &pen).map_err(CliError::from_fit)?,
        };
        pen.alpha = match self.cfg.penalty.alpha {
            Strength::Value(a) => a,
            Strength::Named(_) => alpha_bound(&ds, &pen).map_err(CliError::from_fit)?,
        };
        pen.validate(&ds).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((ds, pen, opts))
    }

    fn write_solution(&self, ds: &Dataset, header: &str, sol: &Fit, zeta: Option<&[ndarray::Array1<f64>]>) -> Result<(), CliError> {
        let mut labels = Table::new(header, &["sample", "cluster"]);
        for (i, l) in sol.labels.iter().enumerate() {
            labels.row([i.to_string(), l.to_string()]);
        }
        labels.save(&self.out.join("labels.csv"))?;

        let mut cols = vec!["view", "feature", "name", "selected", "deviation"];
        if zeta.is_some() {
            cols.push("zeta");
        }
        let mut selected = Table::new(header, &cols);
        for (k, view) in ds.views().iter().enumerate() {
            let dev = gecco::weights::column_deviations(sol.u[k].view(), &sol.centers[k]);
            for j in 0..view.ncols() {
                let mut row = vec![
                    k.to_string(),
                    j.to_string(),
                    feature_name(view, j),
                    u8::from(sol.selected[k][j]).to_string(),
                    num(dev[j]),
                ];
                if let Some(z) = zeta {
                    row.push(num(z[k][j]));
                }
                selected.row(row);
            }
        }
        selected.save(&self.out.join("selected.csv"))?;

        for (k, view) in ds.views().iter().enumerate() {
            let names: Vec<String> = (0..view.ncols()).map(|j| feature_name(view, j)).collect();
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let mut t = Table::new(header, &names);
            for row in sol.u[k].rows() {
                t.row(row.iter().map(|x| num(*x)));
            }
            t.save(&self.out.join(format!("centroids_view{k}.csv")))?;
        }
        Ok(())
    }

    fn summary(&self, header: &str, rows: &[(&str, String)]) -> Result<(), CliError> {
        let mut t = Table::new(header, &["key", "value"]);
        for (k, v) in rows {
            t.row([*k, v.as_str()]);
        }
        t.save(&self.out.join("summary.csv"))
    }
}

fn feature_name(view: &View<f64>, j: usize) -> String {
    view.names.as_ref().map_or_else(|| format!("x{}", j + 1), |n| n[j].clone())
}

fn solution_rows(sol: &Fit) -> Vec<(&'static str, String)> {
    let last = sol.residuals.last();
    vec![
        ("clusters", sol.num_clusters.to_string()),
        ("selected", sol.selected.iter().flatten().filter(|s| **s).count().to_string()),
        ("objective", num(sol.objective)),
        ("iterations", sol.iterations.to_string()),
        ("converged", sol.converged.to_string()),
        ("primal_residual", num(last.map_or(f64::NAN, |r| r.primal))),
        ("dual_residual", num(last.map_or(f64::NAN, |r| r.dual))),
    ]
}

pub fn fit(run: &Run) -> Result<Converged, CliError> {
    let start = Instant::now();
    let (ds, pen, opts) = run.problem()?;
    let sol = solver::fit(&ds, &pen, &opts, None).map_err(CliError::from_fit)?;
    let header = run.header("fit", &[("gamma", num(pen.gamma)), ("alpha", num(pen.alpha))]);
    run.write_solution(&ds, &header, &sol, None)?;
    let mut rows = vec![("gamma", num(pen.gamma)), ("alpha", num(pen.alpha))];
    rows.extend(solution_rows(&sol));
    run.summary(&header, &rows)?;
    log::info!("fit: {} clusters, {} iterations in {:.2?}", sol.num_clusters, sol.iterations, start.elapsed());
    Ok(sol.converged)
}

pub fn path(run: &Run) -> Result<Converged, CliError> {
    let start = Instant::now();
    let (ds, pen, opts) = run.problem()?;
    let gammas = match (&run.cfg.path.gammas, run.cfg.path.gamma_count) {
        (Some(g), _) => g.clone(),
        (None, None) => gpath::default_gamma_grid(&ds, &pen).map_err(CliError::from_fit)?,
        (None, Some(c)) => {
            let hi = gamma_bound(&ds, &pen).map_err(CliError::from_fit)?;
            gpath::log_grid(1e-3 * hi, hi, c)
        }
    };
    let alphas = run.cfg.path.alphas.clone().unwrap_or_else(|| vec![pen.alpha]);
    let path = gpath::regularization_path(&ds, &pen, &gammas, &alphas, &opts).map_err(|e| match e {
        gecco::GeccoError::Empty(_) | gecco::GeccoError::InvalidParameter(_) => CliError::Config(e.to_string()),
        e => CliError::from_fit(e),
    })?;
    let mut points: Vec<_> = path.points.iter().collect();
    points.sort_by(|a, b| (a.alpha, a.gamma).partial_cmp(&(b.alpha, b.gamma)).expect("finite grid"));
    let header = run.header("path", &[]);
    let mut t = Table::new(
        &header,
        &["alpha", "gamma", "clusters", "objective", "converged", "selected", "iterations", "error"],
    );
    for p in &points {
        t.row([
            num(p.alpha),
            num(p.gamma),
            p.num_clusters.to_string(),
            num(p.objective),
            p.converged.to_string(),
            p.num_selected().to_string(),
            p.iterations.to_string(),
            p.error.clone().unwrap_or_default(),
        ]);
    }
    t.save(&run.out.join("path.csv"))?;
    log::info!("path: {} grid points in {:.2?}", points.len(), start.elapsed());
    Ok(points.iter().all(|p| p.converged))
}

pub fn adaptive(run: &Run) -> Result<Converged, CliError> {
    let start = Instant::now();
    let (ds, pen, opts) = run.problem()?;
    let a = &run.cfg.adaptive;
    let target = match (a.clusters, a.holdout_frac) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("set adaptive.clusters or adaptive.holdout_frac, not both".into()))
        }
        (Some(k), None) => AdaptiveTarget::Clusters(k),
        (None, frac) => AdaptiveTarget::Holdout {
            frac: frac.unwrap_or(0.1),
            seed: run.cfg.seed,
        },
    };
    let mut acfg = gpath::AdaptiveConfig::new(target);
    acfg.scheme = run.scheme()?;
    if let Some(al) = &a.alphas {
        acfg.alphas = al.clone();
    }
    acfg.alpha_scale = a.alpha_scale;
    acfg.gamma_range = a.gamma_range.map(|[lo, hi]| (lo, hi));
    let fit = gpath::adaptive_fit(&ds, pen.graph.clone(), &acfg, &opts).map_err(|e| match e {
        gecco::GeccoError::InvalidParameter(_) | gecco::GeccoError::Empty(_) => CliError::Config(e.to_string()),
        e => CliError::from_fit(e),
    })?;
    let header = run.header(
        "adaptive",
        &[("gamma", num(fit.gamma)), ("alpha", num(fit.alpha))],
    );
    run.write_solution(&ds, &header, &fit.solution, Some(&fit.zeta))?;
    let mut rows = vec![
        ("gamma", num(fit.gamma)),
        ("alpha", num(fit.alpha)),
        ("initial_gamma", num(fit.initial_gamma)),
        ("initial_clusters", fit.initial.num_clusters.to_string()),
    ];
    rows.extend(solution_rows(&fit.solution));
    run.summary(&header, &rows)?;
    if !fit.candidates.is_empty() {
        let mut t = Table::new(&header, &["alpha", "gamma", "within_deviance", "clusters"]);
        for (al, g, w, k) in &fit.candidates {
            t.row([num(*al), num(*g), num(*w), k.to_string()]);
        }
        t.save(&run.out.join("candidates.csv"))?;
    }
    log::info!("adaptive: gamma {} alpha {} in {:.2?}", fit.gamma, fit.alpha, start.elapsed());
    Ok(fit.solution.converged && fit.initial.converged)
}

pub struct SimulateArgs {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub noise_features: usize,
    pub outliers: f64,
    pub dims: Option<[usize; 3]>,
}

pub fn simulate(args: &SimulateArgs, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let bad = |e: gecco::GeccoError| CliError::Config(e.to_string());
    let (views, labels, masks): (Vec<(Array2<f64>, Loss)>, Vec<usize>, Vec<Vec<bool>>) = match args.scenario.as_str() {
        "spherical" | "halfmoons" | "poisson" => {
            let s = match args.scenario.as_str() {
                "spherical" => sim::simulate_spherical(args.n, args.noise_features, args.outliers, 1.0, args.seed),
                "halfmoons" => sim::simulate_halfmoons(args.n, args.noise_features, args.outliers, args.seed),
                _ => sim::simulate_poisson(args.n, args.noise_features, args.seed),
            }
            .map_err(bad)?;
            let loss = if args.scenario == "poisson" { Loss::PoissonDev } else { Loss::Manhattan };
            (vec![(s.data, loss)], s.labels, vec![s.informative])
        }
        name => {
            let sc = Scenario::from_str(name).map_err(|_| {
                CliError::Config(format!(
                    "unknown scenario `{name}`; use spherical, halfmoons, poisson or S1..S6"
                ))
            })?;
            let s = match args.dims {
                Some(d) => sim::simulate_multiview_dims(sc.halfmoons(), d, args.seed),
                None => sim::simulate_multiview(sc, args.seed),
            }
            .map_err(bad)?;
            let views = s.dataset.views().iter().map(|v| (v.data.clone(), v.loss)).collect();
            (views, s.labels, s.informative)
        }
    };

    let mut header = format!(
        "# gecco simulate\n# seed = {}\n# scenario = {}\n# n = {}\n# noise_features = {}\n# outliers = {}\n",
        args.seed, args.scenario, args.n, args.noise_features, args.outliers
    );
    if let Some([a, b, c]) = args.dims {
        header += &format!("# dims = {a},{b},{c}\n");
    }
    let mut view_cfgs = Vec::new();
    for (k, (data, loss)) in views.iter().enumerate() {
        let names: Vec<String> = (1..=data.ncols()).map(|j| format!("x{j}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut t = Table::new(&header, &names);
        for row in data.rows() {
            t.row(row.iter().map(|x| num(*x)));
        }
        let file = format!("view{k}.csv");
        t.save(&out.join(&file))?;
        view_cfgs.push(ViewConfig {
            path: file.into(),
            loss: loss.name().into(),
            params: LossParams::default(),
        });
    }
    let mut t = Table::new(&header, &["sample", "label"]);
    for (i, l) in labels.iter().enumerate() {
        t.row([i.to_string(), l.to_string()]);
    }
    t.save(&out.join("labels.csv"))?;
    let mut t = Table::new(&header, &["view", "feature", "informative"]);
    for (k, m) in masks.iter().enumerate() {
        for (j, b) in m.iter().enumerate() {
            t.row([k.to_string(), j.to_string(), u8::from(*b).to_string()]);
        }
    }
    t.save(&out.join("masks.csv"))?;

    let groups = labels.iter().max().map_or(0, |m| m + 1);
    let cfg = Config {
        seed: args.seed,
        views: view_cfgs,
        weights: WeightsConfig {
            metric: Some(if views.len() == 1 { "per_loss" } else { "gower" }.into()),
            ..Default::default()
        },
        penalty: Default::default(),
        path: crate::config::PathConfig {
            gamma_count: Some(20),
            ..Default::default()
        },
        adaptive: crate::config::AdaptiveConfig {
            clusters: Some(groups),
            ..Default::default()
        },
        solver: Default::default(),
    };
    let text = format!("{}{}", header, cfg.to_toml());
    fs::write(out.join("config.toml"), text).map_err(|e| CliError::Io(e.to_string()))
}

pub struct EvaluateArgs {
    pub labels: PathBuf,
    pub truth: PathBuf,
    pub selected: Option<PathBuf>,
    pub masks: Option<PathBuf>,
}

fn read_masks(path: &Path, column: &str) -> Result<Vec<Vec<bool>>, CliError> {
    let views = read_column(path, "view")?;
    let flags = read_column(path, column)?;
    let mut out: Vec<Vec<bool>> = Vec::new();
    for (r, (v, f)) in views.iter().zip(&flags).enumerate() {
        let bad = || CliError::Data(format!("{}: row {}: bad view or flag", path.display(), r + 1));
        let k: usize = v.parse().map_err(|_| bad())?;
        let b = parse_bool(f).ok_or_else(bad)?;
        if k >= out.len() {
            out.resize(k + 1, Vec::new());
        }
        out[k].push(b);
    }
    Ok(out)
}

pub fn evaluate(args: &EvaluateArgs, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let labels = read_column(&args.labels, "cluster")?;
    let truth = read_column(&args.truth, "label")?;
    let ari = gecco::adjusted_rand_index(&labels, &truth).map_err(|e| CliError::Data(e.to_string()))?;
    let mut rows = vec![("ari".to_string(), num(ari))];
    match (&args.selected, &args.masks) {
        (Some(s), Some(m)) => {
            let sel = read_masks(s, "selected")?;
            let truth = read_masks(m, "informative")?;
            if sel.len() != truth.len() {
                return Err(CliError::Data(format!("{} views selected, {} in the masks", sel.len(), truth.len())));
            }
            let all = |m: &Vec<Vec<bool>>| m.iter().flatten().copied().collect::<Vec<_>>();
            let f1 = gecco::f1_selection(&all(&sel), &all(&truth)).map_err(|e| CliError::Data(e.to_string()))?;
            rows.push(("f1".into(), num(f1)));
            for (k, (s, t)) in sel.iter().zip(&truth).enumerate() {
                let f = gecco::f1_selection(s, t).map_err(|e| CliError::Data(format!("view {k}: {e}")))?;
                rows.push((format!("f1_view{k}"), num(f)));
            }
        }
        (None, None) => {}
        _ => return Err(CliError::Config("--selected and --masks go together".into())),
    }
    let header = format!(
        "# gecco evaluate\n# labels = {}\n# truth = {}\n",
        args.labels.display(),
        args.truth.display()
    );
    let mut t = Table::new(&header, &["key", "value"]);
    for (k, v) in &rows {
        t.row([k, v]);
    }
    t.save(&out.join("metrics.csv"))
}
