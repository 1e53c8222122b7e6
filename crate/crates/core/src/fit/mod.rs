//! Bounded minimization of a bound model's metric.
//!
//! Free parameters are mapped to an unbounded internal space
//! ([`space`]), minimized there by BFGS or Nelder-Mead, and their
//! uncertainties are taken from the inverse finite-difference Hessian at the
//! optimum, carried back to external space through the transform's Jacobian.

pub mod numeric;
mod quasi_newton;
mod report;
mod simplex;
pub mod space;

use std::cell::Cell;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::engine::{Backend, BoundModel, MetricKind};
use crate::variable::Variable;

pub use numeric::{covariance, numeric_gradient, Covariance, CovarianceStatus, NumericGradient};
pub use report::ReportError;
pub use space::{define_parameters, ParameterSpace};

/// Metric value returned for parameter points outside a PDF's domain, so
/// that a line search can retreat instead of aborting.
pub const DOMAIN_PENALTY: f64 = 1e300;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no free parameters to fit")]
    NoFreeParameters,
    #[error("invalid fit configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MinimizerKind {
    QuasiNewton,
    NelderMead,
}

impl MinimizerKind {
    pub fn label(&self) -> &'static str {
        match self {
            MinimizerKind::QuasiNewton => "quasi-newton",
            MinimizerKind::NelderMead => "nelder-mead",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "quasi-newton" => Some(MinimizerKind::QuasiNewton),
            "nelder-mead" => Some(MinimizerKind::NelderMead),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub minimizer: MinimizerKind,
    pub max_iterations: usize,
    /// Bound on the max-norm of the internal-space gradient.
    pub gradient_tolerance: f64,
    /// Bound on the simplex spread relative to `max(1, |f|)`.
    pub simplex_tolerance: f64,
    pub metric: MetricKind,
    pub backend: Backend,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            minimizer: MinimizerKind::QuasiNewton,
            max_iterations: 10_000,
            gradient_tolerance: 1e-6,
            simplex_tolerance: 1e-8,
            metric: MetricKind::NegativeLogLikelihood,
            backend: Backend::serial(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iterations == 0 {
            return Err(FitError::Config("max_iterations must be positive".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(FitError::Config("gradient_tolerance must be positive".into()));
        }
        if !(self.simplex_tolerance > 0.0) {
            return Err(FitError::Config("simplex_tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    Failed,
}

impl FitStatus {
    pub fn label(&self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIterations => "max-iterations",
            FitStatus::Failed => "failed",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "converged" => Some(FitStatus::Converged),
            "max-iterations" => Some(FitStatus::MaxIterations),
            "failed" => Some(FitStatus::Failed),
            _ => None,
        }
    }
}

/// Raw output of a minimizer in internal space.
#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub status: FitStatus,
    pub u: Vec<f64>,
    pub fval: f64,
    pub iterations: usize,
    pub gradient: Option<NumericGradient>,
    pub message: Option<String>,
}

impl MinimizeOutcome {
    fn failed(u: Vec<f64>, fval: f64, iterations: usize, message: &str) -> Self {
        MinimizeOutcome {
            status: FitStatus::Failed,
            u,
            fval,
            iterations,
            gradient: None,
            message: Some(message.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterResult {
    pub name: String,
    pub value: f64,
    /// `None` for fixed parameters or when the Hessian was unusable.
    pub error: Option<f64>,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub status: FitStatus,
    pub minimizer: MinimizerKind,
    pub metric: Option<MetricKind>,
    pub parameters: Vec<ParameterResult>,
    pub metric_value: f64,
    pub n_metric_calls: usize,
    pub iterations: usize,
    /// Max-norm of the internal gradient at the final point.
    pub gradient_max_norm: f64,
    pub covariance_status: Option<CovarianceStatus>,
    /// External-space covariance of the free parameters.
    pub covariance: Option<DMatrix<f64>>,
    /// Final internal coordinates of the free parameters.
    pub internal: Vec<f64>,
    pub wall_time: Duration,
    pub message: Option<String>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&ParameterResult> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.value)
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.parameter(name).and_then(|p| p.error)
    }

    pub fn is_converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

/// Minimizes `objective` (a function of the external values of `vars`) inside
/// the variables' limits, starting from their current values.
///
/// `error_def` scales the covariance: 0.5 for likelihoods, 1 for chi-squared.
pub fn minimize<F>(objective: F, vars: &[Variable], cfg: &FitConfig, error_def: f64) -> Result<FitResult, FitError>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    if vars.is_empty() {
        return Err(FitError::NoFreeParameters);
    }
    let start = Instant::now();
    let (space, u0) = define_parameters(vars);
    let calls = Cell::new(0usize);
    let mut objective = objective;
    let mut internal = |u: &[f64]| {
        calls.set(calls.get() + 1);
        objective(&space.to_external(u))
    };

    let outcome = match cfg.minimizer {
        MinimizerKind::QuasiNewton => quasi_newton::minimize(
            &mut internal,
            &space,
            u0,
            cfg.max_iterations,
            cfg.gradient_tolerance,
        ),
        MinimizerKind::NelderMead => simplex::minimize(
            &mut internal,
            &space,
            u0,
            cfg.max_iterations,
            cfg.simplex_tolerance,
        ),
    };

    let external = space.to_external(&outcome.u);
    let mut gradient_max_norm = f64::NAN;
    let mut errors = vec![None; vars.len()];
    let mut covariance_status = None;
    let mut covariance_ext = None;
    if outcome.status != FitStatus::Failed {
        let grad = match outcome.gradient {
            Some(g) => g,
            None => numeric_gradient(
                &mut internal,
                &outcome.u,
                outcome.fval,
                &space.gradient_steps(&outcome.u),
            ),
        };
        gradient_max_norm = grad.max_norm();
        let cov = covariance(
            &mut internal,
            &outcome.u,
            outcome.fval,
            &space.hessian_steps(&outcome.u),
            error_def,
        );
        covariance_status = Some(cov.status);
        if let Some(c) = cov.matrix {
            let jac = space.jacobian(&outcome.u);
            let ext = DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| jac[i] * c[(i, j)] * jac[j]);
            for (i, e) in errors.iter_mut().enumerate() {
                *e = Some(ext[(i, i)].max(0.0).sqrt());
            }
            covariance_ext = Some(ext);
        }
    } else if let Some(g) = &outcome.gradient {
        gradient_max_norm = g.max_norm();
    }

    let parameters = vars
        .iter()
        .zip(&external)
        .zip(errors)
        .map(|((v, &value), error)| ParameterResult {
            name: v.name().to_string(),
            value,
            error,
            fixed: false,
        })
        .collect();

    Ok(FitResult {
        status: outcome.status,
        minimizer: cfg.minimizer,
        metric: None,
        parameters,
        metric_value: outcome.fval,
        n_metric_calls: calls.get(),
        iterations: outcome.iterations,
        gradient_max_norm,
        covariance_status,
        covariance: covariance_ext,
        internal: outcome.u,
        wall_time: start.elapsed(),
        message: outcome.message,
    })
}

/// The metric of `bm` as a function of the free parameters' external values.
/// Domain violations map to [`DOMAIN_PENALTY`].
pub fn objective<'a>(
    bm: &'a BoundModel,
    metric: MetricKind,
    backend: Backend,
) -> (Vec<Variable>, impl FnMut(&[f64]) -> f64 + 'a) {
    let all = bm.parameters().to_vec();
    let free: Vec<usize> = (0..all.len()).filter(|&i| !all[i].is_fixed()).collect();
    let free_vars = free.iter().map(|&i| all[i].clone()).collect();
    let mut full = bm.model().parameter_values();
    let f = move |x: &[f64]| {
        for (&i, &v) in free.iter().zip(x) {
            full[i] = v;
        }
        match bm.eval_metric(&full, metric, &backend) {
            Ok(v) => v,
            Err(_) => DOMAIN_PENALTY,
        }
    };
    (free_vars, f)
}

/// Fits the free parameters of `bm`. On convergence the fitted values are
/// written back into the parameter variables.
pub fn fit(bm: &BoundModel, cfg: &FitConfig) -> Result<FitResult, FitError> {
    cfg.validate()?;
    let start = Instant::now();
    let all = bm.parameters().to_vec();
    let (free_vars, mut f) = objective(bm, cfg.metric, cfg.backend);
    if free_vars.is_empty() {
        return Err(FitError::NoFreeParameters);
    }

    let initial = bm.model().parameter_values();
    let mut result = match bm.eval_metric(&initial, cfg.metric, &cfg.backend) {
        Err(e) => FitResult {
            status: FitStatus::Failed,
            minimizer: cfg.minimizer,
            metric: None,
            parameters: free_vars
                .iter()
                .map(|v| ParameterResult {
                    name: v.name().to_string(),
                    value: v.value(),
                    error: None,
                    fixed: false,
                })
                .collect(),
            metric_value: f64::NAN,
            n_metric_calls: 1,
            iterations: 0,
            gradient_max_norm: f64::NAN,
            covariance_status: None,
            covariance: None,
            internal: Vec::new(),
            wall_time: Duration::ZERO,
            message: Some(format!("metric failed at the starting point: {e}")),
        },
        Ok(_) => minimize(&mut f, &free_vars, cfg, cfg.metric.error_def())?,
    };
    result.metric = Some(cfg.metric);

    let mut free_results = result.parameters.into_iter();
    result.parameters = all
        .iter()
        .map(|v| {
            if v.is_fixed() {
                ParameterResult {
                    name: v.name().to_string(),
                    value: v.value(),
                    error: None,
                    fixed: true,
                }
            } else {
                free_results.next().expect("one result per free parameter")
            }
        })
        .collect();

    if result.status == FitStatus::Converged {
        for (v, p) in all.iter().zip(&result.parameters) {
            if !p.fixed {
                v.set_value(p.value);
            }
        }
    }
    result.wall_time = start.elapsed();
    Ok(result)
}
