//! Scalar metrics per run and side-by-side comparison of runs.

use std::path::Path;

use super::config::Mode;
use super::run::{fmt17, CsvTable};
use super::ScenarioError;

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMetrics {
    pub mean_delta_bar: f64,
    pub rms_delta_bar: f64,
    pub final_delta_bar: f64,
    pub normalized_limit: f64,
    pub bound_violations: usize,
    pub envelope_violations: usize,
    pub radius: f64,
    pub coupling: f64,
    pub c0: f64,
    pub r0: f64,
    pub spectral_radius: f64,
    pub alpha: f64,
    pub mu: f64,
    pub mu_bar: f64,
    pub b_c_norm: f64,
    pub riccati_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub name: String,
    pub mode: Mode,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub agents: usize,
    /// Mean of `|x − x̂_{k|k}|` over all samples and agents.
    pub mean_abs_error: f64,
    pub mse_per_axis: Vec<f64>,
    pub final_trace_pred: Vec<f64>,
    pub final_trace_corr: Vec<f64>,
    pub containment_violations: usize,
    pub max_quad_form: f64,
    pub sync: Option<SyncMetrics>,
}

fn indexed(prefix: &str, v: &[f64], rows: &mut Vec<(String, String)>) {
    for (i, x) in v.iter().enumerate() {
        rows.push((format!("{prefix}_{}", i + 1), fmt17(*x)));
    }
}

impl MetricsReport {
    /// `(metric, value)` pairs in a fixed order.
    pub fn to_rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("name".to_string(), self.name.clone()),
            ("mode".to_string(), self.mode.as_str().to_string()),
            ("horizon".to_string(), self.horizon.to_string()),
            ("samples".to_string(), self.samples.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("agents".to_string(), self.agents.to_string()),
            ("mean_abs_error".to_string(), fmt17(self.mean_abs_error)),
        ];
        indexed("mse", &self.mse_per_axis, &mut rows);
        indexed("final_trace_pred", &self.final_trace_pred, &mut rows);
        indexed("final_trace_corr", &self.final_trace_corr, &mut rows);
        rows.push(("containment_violations".into(), self.containment_violations.to_string()));
        rows.push(("max_quad_form".into(), fmt17(self.max_quad_form)));
        if let Some(s) = &self.sync {
            for (k, v) in [
                ("mean_delta_bar", s.mean_delta_bar),
                ("rms_delta_bar", s.rms_delta_bar),
                ("final_delta_bar", s.final_delta_bar),
                ("normalized_limit", s.normalized_limit),
            ] {
                rows.push((k.into(), fmt17(v)));
            }
            rows.push(("bound_violations".into(), s.bound_violations.to_string()));
            rows.push(("envelope_violations".into(), s.envelope_violations.to_string()));
            for (k, v) in [
                ("radius", s.radius),
                ("coupling", s.coupling),
                ("c0", s.c0),
                ("r0", s.r0),
                ("spectral_radius", s.spectral_radius),
                ("alpha", s.alpha),
                ("mu", s.mu),
                ("mu_bar", s.mu_bar),
                ("b_c_norm", s.b_c_norm),
                ("riccati_residual", s.riccati_residual),
            ] {
                rows.push((k.into(), fmt17(v)));
            }
        }
        rows
    }

    pub fn to_table(&self) -> CsvTable {
        CsvTable {
            file: "metrics.csv".into(),
            header: vec!["metric".into(), "value".into()],
            rows: self.to_rows().into_iter().map(|(k, v)| vec![k, v]).collect(),
        }
    }

    pub fn from_rows(rows: &[(String, String)]) -> Result<Self, ScenarioError> {
        let get = |key: &str| rows.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let bad = |key: &str, msg: String| ScenarioError::Report(format!("metric `{key}`: {msg}"));
        let req = |key: &str| get(key).ok_or_else(|| bad(key, "missing".into()));
        let f = |key: &str| -> Result<f64, ScenarioError> { req(key)?.parse().map_err(|e| bad(key, format!("{e}"))) };
        let u = |key: &str| -> Result<usize, ScenarioError> { req(key)?.parse().map_err(|e| bad(key, format!("{e}"))) };
        let series = |prefix: &str| -> Result<Vec<f64>, ScenarioError> {
            let mut out = Vec::new();
            while let Some(v) = get(&format!("{prefix}_{}", out.len() + 1)) {
                out.push(v.parse().map_err(|e| bad(prefix, format!("{e}")))?);
            }
            Ok(out)
        };
        let mode = Mode::parse(req("mode")?).ok_or_else(|| bad("mode", "unknown mode".into()))?;
        let sync = if get("mu_bar").is_some() {
            Some(SyncMetrics {
                mean_delta_bar: f("mean_delta_bar")?,
                rms_delta_bar: f("rms_delta_bar")?,
                final_delta_bar: f("final_delta_bar")?,
                normalized_limit: f("normalized_limit")?,
                bound_violations: u("bound_violations")?,
                envelope_violations: u("envelope_violations")?,
                radius: f("radius")?,
                coupling: f("coupling")?,
                c0: f("c0")?,
                r0: f("r0")?,
                spectral_radius: f("spectral_radius")?,
                alpha: f("alpha")?,
                mu: f("mu")?,
                mu_bar: f("mu_bar")?,
                b_c_norm: f("b_c_norm")?,
                riccati_residual: f("riccati_residual")?,
            })
        } else {
            None
        };
        Ok(Self {
            name: req("name")?.to_string(),
            mode,
            horizon: u("horizon")?,
            samples: u("samples")?,
            seed: req("seed")?.parse().map_err(|e| bad("seed", format!("{e}")))?,
            agents: u("agents")?,
            mean_abs_error: f("mean_abs_error")?,
            mse_per_axis: series("mse")?,
            final_trace_pred: series("final_trace_pred")?,
            final_trace_corr: series("final_trace_corr")?,
            containment_violations: u("containment_violations")?,
            max_quad_form: f("max_quad_form")?,
            sync,
        })
    }

    pub fn from_csv(path: &Path) -> Result<Self, ScenarioError> {
        let io = |e: csv::Error| ScenarioError::Io { path: path.to_path_buf(), message: e.to_string() };
        let mut rd = csv::Reader::from_path(path).map_err(io)?;
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(io)?;
            if rec.len() != 2 {
                return Err(ScenarioError::Report(format!("{}: expected 2 columns", path.display())));
            }
            rows.push((rec[0].to_string(), rec[1].to_string()));
        }
        Self::from_rows(&rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub table: CsvTable,
    pub text: String,
}

/// Lines up the metrics of several runs sharing one horizon.
pub fn compare_runs(reports: &[MetricsReport]) -> Result<Comparison, ScenarioError> {
    if reports.len() < 2 {
        return Err(ScenarioError::NotEnoughRuns(reports.len()));
    }
    let horizon = reports[0].horizon;
    if let Some(r) = reports.iter().find(|r| r.horizon != horizon) {
        return Err(ScenarioError::HorizonMismatch { first: horizon, name: r.name.clone(), other: r.horizon });
    }
    let per_run: Vec<Vec<(String, String)>> = reports.iter().map(MetricsReport::to_rows).collect();
    let mut keys: Vec<String> = Vec::new();
    for rows in &per_run {
        for (k, _) in rows {
            if k != "name" && !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    let mut header = vec!["metric".to_string()];
    header.extend(reports.iter().map(|r| r.name.clone()));
    let rows: Vec<Vec<String>> = keys
        .iter()
        .map(|k| {
            let mut row = vec![k.clone()];
            for rows in &per_run {
                row.push(rows.iter().find(|(rk, _)| rk == k).map(|(_, v)| v.clone()).unwrap_or_default());
            }
            row
        })
        .collect();

    let widths: Vec<usize> =
        (0..header.len()).map(|c| header[c].len().max(rows.iter().map(|r| short(&r[c]).len()).max().unwrap_or(0))).collect();
    let line = |cells: Vec<String>| -> String {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut text = line(header.clone());
    text.push('\n');
    for r in &rows {
        text.push_str(&line(r.iter().map(|c| short(c)).collect()));
        text.push('\n');
    }
    Ok(Comparison { table: CsvTable { file: "comparison.csv".into(), header, rows }, text })
}

/// Compact console form of a 17-digit value.
fn short(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('e') => format!("{x:.6e}"),
        _ => v.to_string(),
    }
}
