//! Experiment configuration: a TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use prophecy::mcmc::{ChainConfig, DmzSettings, MhSettings, NutsSettings};
use prophecy::model::{ModelExpr, PriorSpec, DEFAULT_CHANGEPOINTS};
use prophecy::optim::LbfgsbConfig;
use prophecy::vi::{AdviSettings, FullRankSettings};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "BENCH_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mh,
    Dmz,
    Nuts,
    Advi,
    FullrankAdvi,
    Map,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mh,
        Method::Dmz,
        Method::Nuts,
        Method::Advi,
        Method::FullrankAdvi,
        Method::Map,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mh => "mh",
            Method::Dmz => "dmz",
            Method::Nuts => "nuts",
            Method::Advi => "advi",
            Method::FullrankAdvi => "fullrank_advi",
            Method::Map => "map",
        }
    }

    pub fn is_mcmc(self) -> bool {
        matches!(self, Method::Mh | Method::Dmz | Method::Nuts)
    }

    pub fn is_vi(self) -> bool {
        matches!(self, Method::Advi | Method::FullrankAdvi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key || (key == "fr_advi" && *m == Method::FullrankAdvi))
            .ok_or_else(|| format!("unknown method `{s}` (expected one of mh, dmz, nuts, advi, fullrank_advi, map)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    Linear,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalityMode {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seasonality {
    pub name: String,
    pub period_days: f64,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub trend: TrendKind,
    pub n_changepoints: usize,
    pub mode: SeasonalityMode,
    pub seasonalities: Vec<Seasonality>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            trend: TrendKind::Linear,
            n_changepoints: DEFAULT_CHANGEPOINTS,
            mode: SeasonalityMode::Additive,
            seasonalities: vec![
                Seasonality {
                    name: "yearly".into(),
                    period_days: 365.25,
                    order: 10,
                },
                Seasonality {
                    name: "weekly".into(),
                    period_days: 7.0,
                    order: 3,
                },
            ],
        }
    }
}

impl ModelSpec {
    /// `trend + S` or `trend * (1 + S)`, where `S` sums the seasonalities.
    pub fn build(&self) -> ModelExpr {
        let trend = match self.trend {
            TrendKind::Linear => ModelExpr::linear_trend(self.n_changepoints),
            TrendKind::Flat => ModelExpr::flat_trend(),
        };
        let seasonal: Vec<ModelExpr> = self
            .seasonalities
            .iter()
            .map(|s| ModelExpr::fourier(s.name.clone(), s.period_days, s.order))
            .collect();
        if seasonal.is_empty() {
            return trend;
        }
        match self.mode {
            SeasonalityMode::Additive => seasonal.into_iter().fold(trend, |acc, s| acc + s),
            SeasonalityMode::Multiplicative => {
                let one_plus = seasonal.into_iter().fold(ModelExpr::constant(1.0), |acc, s| acc + s);
                trend * one_plus
            }
        }
    }
}

/// Chain counts for one sampler plus its own settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSection<S> {
    pub chains: usize,
    pub draws: usize,
    pub warmup: usize,
    #[serde(flatten)]
    pub settings: S,
}

impl<S> SamplerSection<S> {
    pub fn chain_config(&self, seed: u64, parallel: bool) -> ChainConfig {
        ChainConfig {
            n_chains: self.chains,
            n_draws: self.draws,
            n_warmup: self.warmup,
            seed,
            parallel,
        }
    }
}

fn nuts_section() -> SamplerSection<NutsSettings> {
    SamplerSection {
        chains: 4,
        draws: 2000,
        warmup: 1000,
        settings: NutsSettings::default(),
    }
}

fn mh_section() -> SamplerSection<MhSettings> {
    SamplerSection {
        chains: 4,
        draws: 50_000,
        warmup: 10_000,
        settings: MhSettings::default(),
    }
}

fn dmz_section() -> SamplerSection<DmzSettings> {
    SamplerSection {
        chains: 4,
        draws: 50_000,
        warmup: 10_000,
        settings: DmzSettings::default(),
    }
}

/// Variational settings plus the curve used for plateau detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViSection {
    /// Exponential smoothing coefficient for the negative-ELBO trace.
    pub smoothing: f64,
    #[serde(flatten)]
    pub settings: AdviSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRankSection {
    pub smoothing: f64,
    pub init_scale: f64,
    pub diagonal_only: bool,
    #[serde(flatten)]
    pub settings: AdviSettings,
}

impl FullRankSection {
    pub fn fullrank(&self) -> FullRankSettings {
        FullRankSettings {
            init_scale: self.init_scale,
            diagonal_only: self.diagonal_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub level: f64,
    pub include_noise: bool,
    /// Draws taken from a variational approximation to form its forecast.
    pub vi_draws: usize,
    /// MCMC draws are thinned evenly to at most this many curves.
    pub max_curves: usize,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            level: prophecy::forecast::DEFAULT_LEVEL,
            include_noise: true,
            vi_draws: 1000,
            max_curves: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub max_lag: usize,
    /// Prefix spacing for the convergence scan.
    pub grid_step: usize,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    /// Parameters that get autocorrelation and histogram plots.
    pub plot_params: Vec<String>,
    pub histogram_bins: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            max_lag: 100,
            grid_step: 50,
            plateau_window: prophecy::diagnostics::PLATEAU_WINDOW,
            plateau_tolerance: prophecy::diagnostics::PLATEAU_TOLERANCE,
            plot_params: vec!["k".into()],
            histogram_bins: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    /// Last training date; defaults to `horizon_days` before the last observation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_end: Option<NaiveDate>,
    pub train_days: u32,
    pub horizon_days: u32,
    /// Seeds every engine and the forecast draws.
    pub seed: u64,
    /// Output directory; defaults to `$BENCH_OUT_DIR` or `bench-out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub methods: Vec<Method>,
    /// Run the chains of each sampler concurrently.
    pub parallel_chains: bool,
    pub model: ModelSpec,
    pub priors: PriorSpec,
    pub forecast: ForecastSection,
    pub diagnostics: DiagnosticsSection,
    #[serde(default = "mh_section")]
    pub mh: SamplerSection<MhSettings>,
    #[serde(default = "dmz_section")]
    pub dmz: SamplerSection<DmzSettings>,
    #[serde(default = "nuts_section")]
    pub nuts: SamplerSection<NutsSettings>,
    pub advi: ViSection,
    pub fullrank_advi: FullRankSection,
    pub map: LbfgsbConfig,
}

impl Default for ExperimentConfig {
    /// The reproduction setup: the Peyton Manning series, two years of
    /// training, one year of holdout, all six methods.
    fn default() -> Self {
        ExperimentConfig {
            data: PathBuf::from("data/example_wp_log_peyton_manning.csv"),
            train_end: None,
            train_days: 730,
            horizon_days: 365,
            seed: 0,
            out: None,
            methods: Method::ALL.to_vec(),
            parallel_chains: false,
            model: ModelSpec::default(),
            priors: PriorSpec::default(),
            forecast: ForecastSection::default(),
            diagnostics: DiagnosticsSection::default(),
            mh: mh_section(),
            dmz: dmz_section(),
            nuts: nuts_section(),
            advi: ViSection {
                smoothing: 1e-3,
                settings: AdviSettings::default(),
            },
            fullrank_advi: FullRankSection {
                smoothing: 1e-4,
                init_scale: FullRankSettings::default().init_scale,
                diagonal_only: false,
                settings: AdviSettings::default(),
            },
            map: LbfgsbConfig::default(),
        }
    }
}

/// Recursively replaces entries of `base` with those of `over`. A prior
/// table that names its distribution replaces the default one outright.
fn overlay(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("dist") => overlay(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn unknown_keys(user: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in user {
        let path = format!("{prefix}{key}");
        match (known.get(key), value) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(k)), toml::Value::Table(u)) => unknown_keys(u, k, &format!("{path}."), out),
            _ => {}
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub methods: Option<Vec<Method>>,
    /// Post-warm-up draws per chain, for every sampler.
    pub draws: Option<usize>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    /// Iterations for both variational methods.
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub train_end: Option<NaiveDate>,
    pub train_days: Option<u32>,
    pub horizon_days: Option<u32>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub parallel_chains: bool,
}

impl ExperimentConfig {
    /// Parses a possibly partial configuration. Keys missing from the file,
    /// including fields of a section that is only partly given, keep their
    /// defaults; unknown keys are an error.
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let err = |e: &dyn std::fmt::Display| BenchError::Config(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| err(&e))?;
        let mut merged = toml::Table::try_from(ExperimentConfig::default()).map_err(|e| err(&e))?;
        overlay(&mut merged, user.clone());
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e| err(&e))?;
        // flattened engine settings swallow unknown keys, so check them here
        let canonical = toml::Table::try_from(&cfg).map_err(|e| err(&e))?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &canonical, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(BenchError::Config(format!("unknown key(s): {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path.to_path_buf(), e))?;
        Self::from_toml(&text).map_err(|e| match e {
            BenchError::Config(msg) => BenchError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, BenchError> {
        toml::to_string(self).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        for (chains, draws, warmup) in [
            (&mut self.mh.chains, &mut self.mh.draws, &mut self.mh.warmup),
            (&mut self.dmz.chains, &mut self.dmz.draws, &mut self.dmz.warmup),
            (&mut self.nuts.chains, &mut self.nuts.draws, &mut self.nuts.warmup),
        ] {
            if let Some(v) = o.chains {
                *chains = v;
            }
            if let Some(v) = o.draws {
                *draws = v;
            }
            if let Some(v) = o.warmup {
                *warmup = v;
            }
        }
        if let Some(v) = o.iters {
            self.advi.settings.n_iters = v;
            self.fullrank_advi.settings.n_iters = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if o.train_end.is_some() {
            self.train_end = o.train_end;
        }
        if let Some(v) = o.train_days {
            self.train_days = v;
        }
        if let Some(v) = o.horizon_days {
            self.horizon_days = v;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if let Some(v) = &o.data {
            self.data = v.clone();
        }
        self.parallel_chains |= o.parallel_chains;
    }

    /// Fills defaults that depend on the environment and propagates the
    /// global seed into the engine settings, so the persisted file is
    /// self-contained.
    pub fn resolve(&mut self) {
        if self.out.is_none() {
            let root = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
            self.out = Some(root.unwrap_or_else(|| PathBuf::from("bench-out")));
        }
        self.advi.settings.seed = self.seed;
        self.fullrank_advi.settings.seed = self.seed;
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("bench-out"))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad(format!("method `{m}` listed twice"));
            }
        }
        if self.train_days == 0 || self.horizon_days == 0 {
            return bad("train_days and horizon_days must be positive".into());
        }
        for (name, s) in [
            ("mh", (self.mh.chains, self.mh.draws)),
            ("dmz", (self.dmz.chains, self.dmz.draws)),
            ("nuts", (self.nuts.chains, self.nuts.draws)),
        ] {
            if s.0 == 0 || s.1 == 0 {
                return bad(format!("[{name}] chains and draws must be positive"));
            }
        }
        if self.advi.settings.n_iters == 0 || self.fullrank_advi.settings.n_iters == 0 {
            return bad("variational iteration counts must be positive".into());
        }
        let f = &self.forecast;
        if !(f.level > 0.0 && f.level < 1.0) || f.vi_draws < 2 || f.max_curves < 2 {
            return bad("forecast level must lie in (0, 1) and draw counts be at least 2".into());
        }
        let d = &self.diagnostics;
        if d.grid_step == 0 || d.histogram_bins == 0 {
            return bad("grid_step and histogram_bins must be positive".into());
        }
        for s in [self.advi.smoothing, self.fullrank_advi.smoothing] {
            if !(s > 0.0 && s <= 1.0) {
                return bad(format!("smoothing coefficient {s} outside (0, 1]"));
            }
        }
        if self.model.seasonalities.iter().any(|s| s.order == 0 || !(s.period_days > 0.0)) {
            return bad("seasonalities need a positive order and period".into());
        }
        self.priors.validate().map_err(|e| BenchError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.resolve();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "methods = [\"map\", \"nuts\"]\nseed = 7\n[nuts]\nchains = 2\ndraws = 10\nwarmup = 5\nmax_depth = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.methods, vec![Method::Map, Method::Nuts]);
        assert_eq!(cfg.nuts.settings.max_depth, 6);
        assert_eq!(cfg.nuts.settings.target_accept, 0.8);
        assert_eq!(cfg.mh.draws, 50_000);
        assert_eq!(cfg.advi.settings.n_iters, 100_000);

        let cfg = ExperimentConfig::from_toml("[dmz]\ndraws = 7\n[priors.changepoints]\ndist = \"normal\"\nmu = 0.0\nsigma = 1.0\n").unwrap();
        assert_eq!((cfg.dmz.chains, cfg.dmz.draws, cfg.dmz.warmup), (4, 7, 10_000));
        assert_eq!(cfg.priors.changepoints, prophecy::model::Prior::Normal { mu: 0.0, sigma: 1.0 });
        assert_eq!(cfg.priors.slope, PriorSpec::default().slope);
    }

    #[test]
    fn flags_win_over_file() {
        let mut cfg = ExperimentConfig::from_toml("seed = 1\ntrain_days = 100\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            draws: Some(30),
            iters: Some(40),
            methods: Some(vec![Method::Advi]),
            ..Default::default()
        });
        cfg.resolve();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train_days, 100);
        assert_eq!((cfg.mh.draws, cfg.dmz.draws, cfg.nuts.draws), (30, 30, 30));
        assert_eq!(cfg.fullrank_advi.settings.n_iters, 40);
        assert_eq!(cfg.advi.settings.seed, 9);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("typo_field = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("methods = [\"hmc\"]\n").is_err());
        let nested = ExperimentConfig::from_toml("[nuts]\nmax_detph = 3\n").unwrap_err();
        assert!(nested.to_string().contains("nuts.max_detph"), "{nested}");
        let mut cfg = ExperimentConfig {
            methods: vec![Method::Map, Method::Map],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Map];
        assert!(cfg.validate().is_ok());
        cfg.nuts.draws = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("FR-ADVI".parse::<Method>().unwrap(), Method::FullrankAdvi);
        assert!("gibbs".parse::<Method>().is_err());
    }

    #[test]
    fn multiplicative_model_shape() {
        let spec = ModelSpec {
            mode: SeasonalityMode::Multiplicative,
            ..Default::default()
        };
        match spec.build() {
            ModelExpr::Product(children) => {
                assert_eq!(children.len(), 2);
                assert!(matches!(&children[1], ModelExpr::Sum(s) if s.len() == 3));
            }
            other => panic!("{other:?}"),
        }
    }
}
