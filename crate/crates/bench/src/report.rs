//! Run reports and the cross-method summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::BenchError;

/// Column value meaning "never reached".
pub const NEVER: &str = "/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mape_excluded: usize,
}

/// Worst case over one parameter block (max R-hat, min ESS).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub block: String,
    pub max_r_hat: f64,
    pub min_ess: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Option<Method>,
    /// `None` when the method completed.
    pub error: Option<String>,
    /// Draws per chain (MCMC) or iterations (VI, MAP).
    pub draws: Option<usize>,
    /// Shortest converged prefix (MCMC) or plateau iteration (VI).
    pub draws_to_convergence: Option<usize>,
    pub seconds: Option<f64>,
    pub seconds_to_convergence: Option<f64>,
    pub metrics: Option<MetricsRow>,
    pub max_r_hat: Option<f64>,
    pub min_ess: Option<f64>,
    pub min_ess_per_second: Option<f64>,
    pub blocks: Vec<BlockRow>,
    pub acceptance: Option<f64>,
    pub divergences: Option<usize>,
    pub step_size: Option<f64>,
    pub log_posterior: Option<f64>,
    pub termination: Option<String>,
    pub converged: Option<bool>,
    pub artifacts: Vec<PathBuf>,
}

impl MethodReport {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub train_start: String,
    pub train_end: String,
    pub horizon_end: String,
    pub methods: Vec<MethodReport>,
    /// Failures outside any single method, such as shared plots.
    #[serde(default)]
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.errors.is_empty() && self.methods.iter().all(MethodReport::succeeded)
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == Some(m))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Report(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| BenchError::Report(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| BenchError::io(path.to_path_buf(), e))
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NEVER.to_string(), |v| v.to_string())
}

fn opt_f(v: Option<f64>, digits: usize) -> String {
    v.filter(|v| v.is_finite())
        .map_or_else(|| NEVER.to_string(), |v| format!("{v:.digits$}"))
}

const SUMMARY_HEADER: [&str; 7] = [
    "method",
    "status",
    "draws",
    "draws_to_convergence",
    "seconds",
    "seconds_to_convergence",
    "min_ess_per_second",
];

/// Summary rows per method, with `/` where a quantity was never reached.
///
/// Returns the CSV text; the same rows are printed as an aligned table when
/// `console` is given.
pub fn compare(report: &RunReport, console: Option<&mut dyn std::io::Write>) -> String {
    let rows: Vec<[String; 7]> = report
        .methods
        .iter()
        .map(|m| {
            [
                opt(m.method),
                if m.succeeded() { "ok".into() } else { "failed".into() },
                opt(m.draws),
                opt(m.draws_to_convergence),
                opt_f(m.seconds, 3),
                opt_f(m.seconds_to_convergence, 3),
                opt_f(m.min_ess_per_second, 2),
            ]
        })
        .collect();
    let mut csv = SUMMARY_HEADER.join(",") + "\n";
    for r in &rows {
        csv.push_str(&r.join(","));
        csv.push('\n');
    }
    if let Some(out) = console {
        let mut widths: Vec<usize> = SUMMARY_HEADER.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut text = String::new();
        let line = |cells: Vec<&str>, text: &mut String| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(text, "{}", padded.join("  "));
        };
        line(SUMMARY_HEADER.to_vec(), &mut text);
        for r in &rows {
            line(r.iter().map(String::as_str).collect(), &mut text);
        }
        for m in report.methods.iter().filter(|m| !m.succeeded()) {
            let _ = writeln!(text, "{}: {}", opt(m.method), m.error.as_deref().unwrap_or_default());
        }
        for e in &report.errors {
            let _ = writeln!(text, "error: {e}");
        }
        let _ = out.write_all(text.as_bytes());
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let csv = compare(&RunReport::default(), None);
        assert_eq!(csv, SUMMARY_HEADER.join(",") + "\n");
    }

    #[test]
    fn unconverged_method_shows_slash() {
        let report = RunReport {
            methods: vec![
                MethodReport {
                    method: Some(Method::Mh),
                    draws: Some(50_000),
                    seconds: Some(12.5),
                    min_ess_per_second: Some(0.25),
                    ..Default::default()
                },
                MethodReport {
                    method: Some(Method::Nuts),
                    draws: Some(2000),
                    draws_to_convergence: Some(550),
                    seconds: Some(190.0),
                    seconds_to_convergence: Some(60.0),
                    min_ess_per_second: Some(11.0),
                    ..Default::default()
                },
            ],
            ..Default::default()
        };
        let mut console = Vec::new();
        let csv = compare(&report, Some(&mut console));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "mh,ok,50000,/,12.500,/,0.25");
        assert_eq!(lines[2], "nuts,ok,2000,550,190.000,60.000,11.00");
        let text = String::from_utf8(console).unwrap();
        assert!(text.contains("min_ess_per_second") && text.contains("11.00"));
    }

    #[test]
    fn report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let report = RunReport {
            methods: vec![MethodReport {
                method: Some(Method::Map),
                error: Some("boom".into()),
                ..Default::default()
            }],
            ..Default::default()
        };
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        let back = RunReport::load(&path).unwrap();
        assert_eq!(back, report);
        assert!(!back.succeeded());
    }
}
