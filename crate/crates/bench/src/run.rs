//! End-to-end experiment: load, split, fit every configured method, score
//! and write the report directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prophecy::diagnostics::{
    convergence_scan, diagnose, elbo_plateau, ess_per_second, scale_unit, smooth_elbo, DiagnosticsReport,
};
use prophecy::forecast::{metrics, ForecastResult, ForecastSettings};
use prophecy::map::{map_fit, MapResult};
use prophecy::mcmc::{dmz_sample, mh_sample, nuts_sample, ChainSet};
use prophecy::model::{prior_to_regularization, CompiledModel, Posterior};
use prophecy::series::{fit_scaling, load_csv, split_train_test, ScalingParams, TimeSeries};
use prophecy::vi::{advi_fit, draw_from_approx, fullrank_fit, Approximation, ElboTrace};

use crate::config::{ExperimentConfig, Method};
use crate::plot::{plot_histogram, plot_line, Axes, Series};
use crate::report::{compare, BlockRow, MethodReport, MetricsRow, RunReport};
use crate::BenchError;

/// Data and model shared by every method of one run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub train: TimeSeries,
    pub test: TimeSeries,
    pub scaling: ScalingParams,
    pub model: CompiledModel,
    pub posterior: Posterior,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, BenchError> {
        config.validate()?;
        let series = load_csv(&config.data)?;
        let (train, test) = split_train_test(&series, config.train_days, config.horizon_days, config.train_end)?;
        let scaling = fit_scaling(&train)?;
        let scaled = scaling.apply(&train);
        let model = CompiledModel::compile(&config.model.build(), &scaled.times)?;
        let posterior = Posterior::new(model.clone(), &scaled.times, scaled.y, config.priors.clone())?;
        Ok(Experiment {
            config,
            train,
            test,
            scaling,
            model,
            posterior,
        })
    }
}

/// What a method produced, before scoring.
enum Fit {
    Chains(ChainSet),
    Variational {
        mean: Vec<f64>,
        sd: Vec<f64>,
        draws: Vec<f64>,
        trace: ElboTrace,
    },
    Map(MapResult),
}

/// Posterior draws of the plotted parameters, kept for the overlay plots.
struct PlotDraws {
    method: Method,
    values: Vec<Vec<f64>>,
}

/// Per-method RNG stream so adding or removing methods leaves the others unchanged.
fn method_rng(seed: u64, method: Method, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose * 16 + method as u64);
    rng
}

struct Writer {
    out: PathBuf,
}

impl Writer {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn text(&self, rel: &str, text: &str) -> Result<PathBuf, BenchError> {
        let path = self.path(rel);
        std::fs::write(&path, text).map_err(|e| BenchError::io(path.clone(), e))?;
        Ok(path)
    }
}

/// Runs every configured method, writes the report directory and returns
/// the report. A failing method is recorded and the remaining ones still run.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, BenchError> {
    let mut config = config.clone();
    config.resolve();
    let exp = Experiment::prepare(config)?;
    let cfg = &exp.config;
    let w = Writer { out: cfg.out_dir() };
    for sub in ["", "tables", "plots", "chains", "traces"] {
        let dir = w.path(sub);
        std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(dir.clone(), e))?;
    }
    w.text("config_resolved.toml", &cfg.to_toml()?)?;

    let names = exp.model.layout().coordinate_names();
    let mut reports = Vec::new();
    let mut tables = Tables::new();
    let mut plot_draws = Vec::new();
    let mut traces: Vec<(Method, Vec<f64>)> = Vec::new();

    for &method in &cfg.methods {
        eprintln!("[bench] {method}: fitting");
        let mut report = MethodReport {
            method: Some(method),
            ..Default::default()
        };
        let result = fit(&exp, method).and_then(|fit| {
            score(&exp, method, &fit, &w, &names, &mut report, &mut tables, &mut plot_draws, &mut traces)
        });
        if let Err(e) = result {
            eprintln!("[bench] {method}: failed: {e}");
            report.error = Some(e.to_string());
        } else if let Some(m) = &report.metrics {
            eprintln!("[bench] {method}: MAPE {:.4} in {:.2} s", m.mape, report.seconds.unwrap_or(f64::NAN));
        }
        reports.push(report);
    }

    tables.write(&w)?;
    write_regularization(&exp, &w)?;
    let plot_errors = shared_plots(&exp, &w, &plot_draws, &traces);
    let report = RunReport {
        out_dir: w.out.clone(),
        train_start: exp.train.first_date().to_string(),
        train_end: exp.train.last_date().to_string(),
        horizon_end: exp.test.last_date().to_string(),
        methods: reports,
        errors: plot_errors.iter().map(ToString::to_string).collect(),
    };
    w.text("tables/summary.csv", &compare(&report, None))?;
    report.save(&w.path("report.json"))?;
    Ok(report)
}

fn fit(exp: &Experiment, method: Method) -> Result<Fit, BenchError> {
    let cfg = &exp.config;
    let post = &exp.posterior;
    let names = Some(exp.model.layout().coordinate_names());
    let par = cfg.parallel_chains;
    Ok(match method {
        Method::Mh => Fit::Chains(mh_sample(
            post,
            None,
            &cfg.mh.chain_config(cfg.seed, par),
            &cfg.mh.settings,
            names,
        )?),
        Method::Dmz => Fit::Chains(dmz_sample(
            post,
            None,
            &cfg.dmz.chain_config(cfg.seed, par),
            &cfg.dmz.settings,
            names,
        )?),
        Method::Nuts => Fit::Chains(nuts_sample(
            post,
            None,
            &cfg.nuts.chain_config(cfg.seed, par),
            &cfg.nuts.settings,
            names,
        )?),
        Method::Advi => {
            let (q, trace) = advi_fit(post, &cfg.advi.settings)?;
            variational(&q, trace, cfg, method)
        }
        Method::FullrankAdvi => {
            let (q, trace) = fullrank_fit(post, &cfg.fullrank_advi.settings, &cfg.fullrank_advi.fullrank())?;
            variational(&q, trace, cfg, method)
        }
        Method::Map => Fit::Map(map_fit(post, &cfg.map)?),
    })
}

fn variational<A: Approximation>(q: &A, trace: ElboTrace, cfg: &ExperimentConfig, method: Method) -> Fit {
    let mut rng = method_rng(cfg.seed, method, 1);
    Fit::Variational {
        mean: q.mean().to_vec(),
        sd: q.std_devs(),
        draws: draw_from_approx(q, cfg.forecast.vi_draws, &mut rng),
        trace,
    }
}

/// Accumulated long-format tables.
struct Tables {
    rhat: String,
    ess: String,
    metrics: String,
    posterior: String,
    blocks: String,
}

impl Tables {
    fn new() -> Self {
        Tables {
            rhat: "method,parameter,r_hat\n".into(),
            ess: "method,parameter,ess\n".into(),
            metrics: "method,mse,rmse,mae,mape,mape_excluded\n".into(),
            posterior: "method,parameter,mean,sd\n".into(),
            blocks: "method,block,max_r_hat,min_ess\n".into(),
        }
    }

    fn write(&self, w: &Writer) -> Result<(), BenchError> {
        w.text("tables/rhat.csv", &self.rhat)?;
        w.text("tables/ess.csv", &self.ess)?;
        w.text("tables/metrics.csv", &self.metrics)?;
        w.text("tables/posterior.csv", &self.posterior)?;
        w.text("tables/blocks.csv", &self.blocks)?;
        Ok(())
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

#[allow(clippy::too_many_arguments)]
fn score(
    exp: &Experiment,
    method: Method,
    fit: &Fit,
    w: &Writer,
    names: &[String],
    report: &mut MethodReport,
    tables: &mut Tables,
    plot_draws: &mut Vec<PlotDraws>,
    traces: &mut Vec<(Method, Vec<f64>)>,
) -> Result<(), BenchError> {
    let cfg = &exp.config;
    let d = names.len();
    let dates = exp.test.dates();
    let fc_settings = ForecastSettings {
        level: cfg.forecast.level,
        include_noise: cfg.forecast.include_noise,
        retain_curves: false,
    };
    let mut rng = method_rng(cfg.seed, method, 2);
    let plot_idx: Vec<usize> = cfg
        .diagnostics
        .plot_params
        .iter()
        .filter_map(|p| names.iter().position(|n| n == p))
        .collect();

    let forecast = match fit {
        Fit::Chains(chains) => {
            let diag = diagnose(chains, cfg.diagnostics.max_lag);
            record_chains(exp, method, chains, &diag, w, names, report, tables, &plot_idx)?;
            plot_draws.push(PlotDraws {
                method,
                values: plot_idx.iter().map(|&p| chains.param(p).concat()).collect(),
            });
            let all: Vec<&[f64]> = chains.iter_draws().collect();
            let stride = all.len().div_ceil(cfg.forecast.max_curves).max(1);
            let thinned: Vec<f64> = all.iter().step_by(stride).flat_map(|r| r.iter().copied()).collect();
            ForecastResult::from_draws(&thinned, &exp.model, &exp.scaling, dates, &fc_settings, &mut rng)?
        }
        Fit::Variational { mean, sd, draws, trace } => {
            let smoothing = match method {
                Method::FullrankAdvi => cfg.fullrank_advi.smoothing,
                _ => cfg.advi.smoothing,
            };
            let smoothed = smooth_elbo(&trace.negative_elbo, smoothing)?;
            let plateau = elbo_plateau(&smoothed, cfg.diagnostics.plateau_window, cfg.diagnostics.plateau_tolerance);
            let n = trace.len();
            report.draws = Some(n);
            report.draws_to_convergence = plateau;
            report.seconds = Some(trace.seconds);
            // the trace only stores total time, so time to plateau is prorated
            report.seconds_to_convergence = plateau.map(|i| trace.seconds * i as f64 / n as f64);
            let path = w.path(&format!("traces/elbo_{method}.csv"));
            trace.write_csv(&path)?;
            report.artifacts.push(path);
            traces.push((method, smoothed));
            for (i, name) in names.iter().enumerate() {
                let _ = writeln!(tables.posterior, "{method},{name},{},{}", mean[i], sd[i]);
            }
            plot_draws.push(PlotDraws {
                method,
                values: plot_idx
                    .iter()
                    .map(|&p| draws.chunks_exact(d).map(|r| r[p]).collect())
                    .collect(),
            });
            ForecastResult::from_draws(draws, &exp.model, &exp.scaling, dates, &fc_settings, &mut rng)?
        }
        Fit::Map(m) => {
            report.draws = Some(m.iterations);
            report.draws_to_convergence = m.converged.then_some(m.iterations);
            report.seconds = Some(m.seconds);
            report.seconds_to_convergence = m.converged.then_some(m.seconds);
            report.log_posterior = Some(m.log_posterior);
            report.termination = Some(format!("{:?}", m.termination));
            report.converged = Some(m.converged);
            for (i, name) in names.iter().enumerate() {
                let _ = writeln!(tables.posterior, "{method},{name},{},", m.point[i]);
            }
            let path = w.path("map.csv");
            m.write_csv(exp.model.layout(), &path)?;
            report.artifacts.push(path);
            ForecastResult::plug_in(&m.point, &exp.model, &exp.scaling, dates, cfg.forecast.level)?
        }
    };

    let path = w.path(&format!("forecast_{method}.csv"));
    forecast.write_csv(&path)?;
    report.artifacts.push(path);
    let m = metrics(exp.test.values(), &forecast.point)?;
    if m.mape_excluded > 0 {
        eprintln!("[bench] {method}: {} zero observations left out of MAPE", m.mape_excluded);
    }
    let _ = writeln!(
        tables.metrics,
        "{method},{},{},{},{},{}",
        m.mse, m.rmse, m.mae, m.mape, m.mape_excluded
    );
    report.metrics = Some(MetricsRow {
        mse: m.mse,
        rmse: m.rmse,
        mae: m.mae,
        mape: m.mape,
        mape_excluded: m.mape_excluded,
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn record_chains(
    exp: &Experiment,
    method: Method,
    chains: &ChainSet,
    diag: &DiagnosticsReport,
    w: &Writer,
    names: &[String],
    report: &mut MethodReport,
    tables: &mut Tables,
    plot_idx: &[usize],
) -> Result<(), BenchError> {
    let cfg = &exp.config;
    let seconds = chains.wall_seconds();
    let conv = convergence_scan(chains, cfg.diagnostics.grid_step);
    report.draws = Some(chains.n_draws());
    report.draws_to_convergence = conv;
    report.seconds = Some(seconds);
    report.seconds_to_convergence = conv.map(|n| chains.seconds_until(n));
    report.max_r_hat = Some(diag.max_r_hat());
    report.min_ess = Some(diag.min_ess());
    report.min_ess_per_second = Some(ess_per_second(&diag.ess, seconds));
    report.acceptance = Some(chains.mean_acceptance());
    report.divergences = Some(chains.divergences());
    report.step_size = chains.chains().first().and_then(|c| c.stats.step_size);
    for b in diag.by_block(exp.model.layout()) {
        let _ = writeln!(tables.blocks, "{method},{},{},{}", b.block, b.max_r_hat, b.min_ess);
        report.blocks.push(BlockRow {
            block: b.block,
            max_r_hat: b.max_r_hat,
            min_ess: b.min_ess,
        });
    }
    for (p, name) in names.iter().enumerate() {
        let _ = writeln!(tables.rhat, "{method},{name},{}", diag.r_hat[p]);
        let _ = writeln!(tables.ess, "{method},{name},{}", diag.ess[p]);
        let (mean, sd) = mean_sd(&chains.param(p).concat());
        let _ = writeln!(tables.posterior, "{method},{name},{mean},{sd}");
    }
    report
        .artifacts
        .extend(chains.write_block_csvs(exp.model.layout(), &w.path("chains"), method.name())?);
    for &p in plot_idx {
        let Some(acf) = &diag.autocorrelation[p] else {
            continue;
        };
        let path = w.path(&format!("plots/autocorr_{method}_{}.svg", names[p]));
        let axes = Axes {
            title: &format!("Autocorrelation of {} ({method})", names[p]),
            x_label: "lag",
            y_label: "autocorrelation",
        };
        plot_line(&[Series::new(method.name(), acf.clone())], &axes, &path)?;
        report.artifacts.push(path);
    }
    Ok(())
}

fn write_regularization(exp: &Experiment, w: &Writer) -> Result<(), BenchError> {
    let mut text = String::from("block,penalty,lambda\n");
    for r in prior_to_regularization(&exp.config.priors, exp.model.layout())? {
        let _ = writeln!(text, "{},{:?},{}", r.block, r.penalty, r.lambda);
    }
    w.text("tables/regularization.csv", &text)?;
    Ok(())
}

/// ELBO curves and posterior overlays; errors are collected so every plot
/// is attempted.
fn shared_plots(
    exp: &Experiment,
    w: &Writer,
    draws: &[PlotDraws],
    traces: &[(Method, Vec<f64>)],
) -> Vec<BenchError> {
    let mut errors = Vec::new();
    if !traces.is_empty() {
        let series: Vec<Series> = traces
            .iter()
            .map(|(m, curve)| Series {
                label: m.name().into(),
                x: Some((1..=curve.len()).map(|i| i as f64).collect()),
                y: scale_unit(curve).0,
            })
            .collect();
        let axes = Axes {
            title: "Smoothed negative ELBO (scaled)",
            x_label: "iteration",
            y_label: "scaled negative ELBO",
        };
        if let Err(e) = plot_line(&series, &axes, &w.path("plots/elbo.svg")) {
            errors.push(e);
        }
    }
    let cfg = &exp.config;
    let groups: [(&str, &[Method]); 3] = [
        ("", &Method::ALL),
        ("_vi", &[Method::Nuts, Method::Advi, Method::FullrankAdvi]),
        ("_mcmc", &[Method::Nuts, Method::Mh, Method::Dmz]),
    ];
    for (i, param) in cfg
        .diagnostics
        .plot_params
        .iter()
        .filter(|p| exp.model.layout().coordinate_names().contains(p))
        .enumerate()
    {
        for (suffix, members) in groups {
            let sets: Vec<(String, Vec<f64>)> = members
                .iter()
                .filter_map(|m| draws.iter().find(|d| d.method == *m))
                .map(|d| (d.method.name().to_string(), d.values[i].clone()))
                .collect();
            // the grouped variants only make sense when they compare something
            if sets.is_empty() || (!suffix.is_empty() && sets.len() < 2) {
                continue;
            }
            let path = w.path(&format!("plots/posterior_{param}{suffix}.svg"));
            let axes = Axes {
                title: &format!("Posterior of {param}"),
                x_label: param,
                y_label: "density",
            };
            if let Err(e) = plot_histogram(&sets, cfg.diagnostics.histogram_bins, &axes, &path) {
                errors.push(e);
            }
        }
    }
    errors
}

/// Re-renders the ELBO plot and the MCMC posterior histograms of a finished
/// run from its CSV artifacts and resolved config.
pub fn replot(out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let cfg = ExperimentConfig::load(&out_dir.join("config_resolved.toml"))?;
    let read_column = |path: &Path, col: usize| -> Result<Option<Vec<f64>>, BenchError> {
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path.to_path_buf(), e))?;
        Ok(Some(
            text.lines()
                .skip(1)
                .filter_map(|l| l.split(',').nth(col)?.parse().ok())
                .collect(),
        ))
    };
    let mut written = Vec::new();
    let mut series = Vec::new();
    for (m, alpha) in [
        (Method::Advi, cfg.advi.smoothing),
        (Method::FullrankAdvi, cfg.fullrank_advi.smoothing),
    ] {
        let path = out_dir.join("traces").join(format!("elbo_{m}.csv"));
        if let Some(values) = read_column(&path, 1)?.filter(|v| !v.is_empty()) {
            series.push(Series::new(m.name(), scale_unit(&smooth_elbo(&values, alpha)?).0));
        }
    }
    if !series.is_empty() {
        let path = out_dir.join("plots").join("elbo.svg");
        let axes = Axes {
            title: "Smoothed negative ELBO (scaled)",
            x_label: "iteration",
            y_label: "scaled negative ELBO",
        };
        plot_line(&series, &axes, &path)?;
        written.push(path);
    }
    // scalar blocks store one column per chain after the draw index
    for param in &cfg.diagnostics.plot_params {
        let mut sets = Vec::new();
        for m in [Method::Nuts, Method::Mh, Method::Dmz] {
            let path = out_dir.join("chains").join(format!("{m}_{param}.csv"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| BenchError::io(path.clone(), e))?;
            let values: Vec<f64> = text
                .lines()
                .skip(1)
                .flat_map(|l| l.split(',').skip(1).filter_map(|v| v.parse().ok()).collect::<Vec<f64>>())
                .collect();
            if !values.is_empty() {
                sets.push((m.name().to_string(), values));
            }
        }
        if sets.is_empty() {
            continue;
        }
        let path = out_dir.join("plots").join(format!("posterior_{param}_chains.svg"));
        let axes = Axes {
            title: &format!("Posterior of {param}"),
            x_label: param,
            y_label: "density",
        };
        plot_histogram(&sets, cfg.diagnostics.histogram_bins, &axes, &path)?;
        written.push(path);
    }
    Ok(written)
}
