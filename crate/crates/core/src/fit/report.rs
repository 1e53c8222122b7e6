//! Plain-text fit report in TOML syntax.

use std::fmt::Write as _;
use std::time::Duration;

use thiserror::Error;

use super::{FitResult, FitStatus, MinimizerKind, ParameterResult};
use crate::engine::MetricKind;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is not valid TOML: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("report field `{0}` is missing or has the wrong type")]
    Field(String),
}

fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:?}")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl FitResult {
    /// Renders the result as TOML. Unavailable errors are written as `nan`.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status = {}", quote(self.status.label()));
        let _ = writeln!(s, "minimizer = {}", quote(self.minimizer.label()));
        if let Some(m) = self.metric {
            let _ = writeln!(s, "metric = {}", quote(m.label()));
        }
        let _ = writeln!(s, "metric_value = {}", float(self.metric_value));
        let _ = writeln!(s, "n_metric_calls = {}", self.n_metric_calls);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "gradient_max_norm = {}", float(self.gradient_max_norm));
        let _ = writeln!(s, "wall_time_s = {}", float(self.wall_time.as_secs_f64()));
        if let Some(m) = &self.message {
            let _ = writeln!(s, "message = {}", quote(m));
        }
        for p in &self.parameters {
            let _ = writeln!(s, "\n[[parameter]]");
            let _ = writeln!(s, "name = {}", quote(&p.name));
            let _ = writeln!(s, "value = {}", float(p.value));
            let _ = writeln!(s, "error = {}", float(p.error.unwrap_or(f64::NAN)));
            let _ = writeln!(s, "fixed = {}", p.fixed);
        }
        s
    }

    /// Reads back a report written by [`FitResult::to_report`]. Covariance
    /// and internal coordinates are not part of the report.
    pub fn from_report(text: &str) -> Result<FitResult, ReportError> {
        let table: toml::Table = text.parse()?;
        let field = |k: &str| ReportError::Field(k.to_string());
        let get_str = |t: &toml::Table, k: &str| t.get(k).and_then(|v| v.as_str()).map(str::to_string).ok_or_else(|| field(k));
        let get_f64 = |t: &toml::Table, k: &str| {
            t.get(k)
                .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                .ok_or_else(|| field(k))
        };
        let get_usize = |t: &toml::Table, k: &str| {
            t.get(k)
                .and_then(|v| v.as_integer())
                .and_then(|i| usize::try_from(i).ok())
                .ok_or_else(|| field(k))
        };

        let status = FitStatus::from_label(&get_str(&table, "status")?).ok_or_else(|| field("status"))?;
        let minimizer = MinimizerKind::from_label(&get_str(&table, "minimizer")?).ok_or_else(|| field("minimizer"))?;
        let metric = match table.get("metric") {
            None => None,
            Some(v) => Some(match v.as_str() {
                Some("nll") => MetricKind::NegativeLogLikelihood,
                Some("chi2") => MetricKind::ChiSquared,
                _ => return Err(field("metric")),
            }),
        };
        let mut parameters = Vec::new();
        if let Some(list) = table.get("parameter") {
            let list = list.as_array().ok_or_else(|| field("parameter"))?;
            for item in list {
                let t = item.as_table().ok_or_else(|| field("parameter"))?;
                let error = get_f64(t, "error")?;
                parameters.push(ParameterResult {
                    name: get_str(t, "name")?,
                    value: get_f64(t, "value")?,
                    error: (!error.is_nan()).then_some(error),
                    fixed: t.get("fixed").and_then(|v| v.as_bool()).ok_or_else(|| field("fixed"))?,
                });
            }
        }
        let wall = get_f64(&table, "wall_time_s")?;
        Ok(FitResult {
            status,
            minimizer,
            metric,
            parameters,
            metric_value: get_f64(&table, "metric_value")?,
            n_metric_calls: get_usize(&table, "n_metric_calls")?,
            iterations: get_usize(&table, "iterations")?,
            gradient_max_norm: get_f64(&table, "gradient_max_norm")?,
            covariance_status: None,
            covariance: None,
            internal: Vec::new(),
            wall_time: Duration::try_from_secs_f64(wall).map_err(|_| field("wall_time_s"))?,
            message: table.get("message").and_then(|v| v.as_str()).map(str::to_string),
        })
    }
}
