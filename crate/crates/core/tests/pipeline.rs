//! End-to-end use of the public API on synthetic series with known structure.

use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use prophecy::diagnostics::{diagnose, split_rhat};
use prophecy::forecast::{metrics, ForecastResult, ForecastSettings};
use prophecy::map::map_fit;
use prophecy::mcmc::{nuts_sample, ChainConfig, NutsSettings};
use prophecy::model::{build_default_model, CompiledModel, ModelExpr, Posterior, PriorSpec};
use prophecy::optim::LbfgsbConfig;
use prophecy::series::{fit_scaling, read_csv, split_train_test, TimeSeries};
use prophecy::vi::{advi_fit, AdviSettings, Approximation};

fn synthetic_csv(days: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let start = NaiveDate::from_ymd_opt(2012, 3, 1).unwrap();
    let mut out = String::from("ds,y\n");
    for i in 0..days {
        let t = i as f64;
        let y = 8.0 + 0.001 * t + 0.4 * (2.0 * PI * t / 365.25).sin() + 0.15 * (2.0 * PI * t / 7.0).cos()
            + noise.sample(&mut rng);
        out.push_str(&format!("{},{y}\n", start + chrono::Duration::days(i as i64)));
    }
    out
}

struct Setup {
    train: TimeSeries,
    test: TimeSeries,
    scaling: prophecy::series::ScalingParams,
    model: CompiledModel,
    posterior: Posterior,
}

fn setup(expr: &ModelExpr, csv: &str, train_days: u32, horizon_days: u32) -> Setup {
    let series = read_csv(csv.as_bytes(), "synthetic").unwrap();
    let (train, test) = split_train_test(&series, train_days, horizon_days, None).unwrap();
    let scaling = fit_scaling(&train).unwrap();
    let scaled = scaling.apply(&train);
    let model = CompiledModel::compile(expr, &scaled.times).unwrap();
    let posterior = Posterior::new(model.clone(), &scaled.times, scaled.y, PriorSpec::default()).unwrap();
    Setup {
        train,
        test,
        scaling,
        model,
        posterior,
    }
}

#[test]
fn map_forecast_tracks_a_clean_seasonal_series() {
    let s = setup(&build_default_model(), &synthetic_csv(1095, 1), 730, 365);
    assert_eq!(s.train.len(), 730);
    assert_eq!(s.test.len(), 365);
    let fit = map_fit(&s.posterior, &LbfgsbConfig::default()).unwrap();
    assert!(fit.log_posterior.is_finite());
    let fc = ForecastResult::plug_in(&fit.point, &s.model, &s.scaling, s.test.dates(), 0.8).unwrap();
    let m = metrics(s.test.values(), &fc.point).unwrap();
    // noise is 0.05 on a level near 8, so a good fit is well under 2 %
    assert!(m.mape < 0.02, "{m:?}");
    assert!(fc.coverage(s.test.values()) > 0.5);
}

#[test]
fn nuts_advi_and_map_agree_on_a_small_model() {
    let expr = ModelExpr::linear_trend(3) + ModelExpr::fourier("weekly", 7.0, 2);
    let s = setup(&expr, &synthetic_csv(260, 2), 200, 60);
    let post = &s.posterior;

    let chains = nuts_sample(
        post,
        None,
        &ChainConfig {
            n_chains: 2,
            n_draws: 600,
            n_warmup: 400,
            seed: 5,
            parallel: false,
        },
        &NutsSettings::default(),
        None,
    )
    .unwrap();
    let report = diagnose(&chains, 50);
    assert!(report.max_r_hat() < 1.05, "{}", report.max_r_hat());

    let k = chains.param(0).concat();
    let n = k.len() as f64;
    let k_mean = k.iter().sum::<f64>() / n;
    let k_sd = (k.iter().map(|v| (v - k_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(split_rhat(&chains.param(0)).unwrap() < 1.05);

    let map = map_fit(post, &LbfgsbConfig::default()).unwrap();
    let (q, _) = advi_fit(
        post,
        &AdviSettings {
            n_iters: 20_000,
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    assert!((map.point[0] - k_mean).abs() < 4.0 * k_sd, "map {} nuts {k_mean} +- {k_sd}", map.point[0]);
    assert!((q.mean()[0] - k_mean).abs() < 4.0 * k_sd, "advi {} nuts {k_mean} +- {k_sd}", q.mean()[0]);

    let draws: Vec<f64> = chains.iter_draws().step_by(4).flat_map(|r| r.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let fc = ForecastResult::from_draws(
        &draws,
        &s.model,
        &s.scaling,
        s.test.dates(),
        &ForecastSettings::default(),
        &mut rng,
    )
    .unwrap();
    let m = metrics(s.test.values(), &fc.point).unwrap();
    assert!(m.mape < 0.05, "{m:?}");
    assert!(fc.lower.iter().zip(&fc.upper).all(|(l, u)| l <= u));
}

#[test]
fn malformed_input_is_rejected_with_context() {
    let err = read_csv("ds,y\n2020-01-01,1.0\n2020-01-01,2.0\n".as_bytes(), "dupes").unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
    assert!(read_csv("ds,y\n2020-01-01,abc\n".as_bytes(), "bad").is_err());
    let short = read_csv(synthetic_csv(30, 3).as_bytes(), "short").unwrap();
    assert!(split_train_test(&short, 730, 365, None).is_err());
}
