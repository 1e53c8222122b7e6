//! Declarative model description.
//!
//! ```toml
//! metric = "nll"
//!
//! [fit]
//! minimizer = "quasi-newton"
//!
//! [[observables]]
//! name = "x"
//! lower = 0.0
//! upper = 21.49
//!
//! [[parameters]]
//! name = "alpha"
//! init = -1.0
//! step = 0.01
//! lower = -10.0
//! upper = 10.0
//!
//! [pdf]
//! type = "exponential"
//! name = "exppdf"
//! observable = "x"
//! alpha = "alpha"
//! ```

use std::collections::HashMap;

use parfit_core::pdf::{self, Edge};
use parfit_core::{FitConfig, GridSpec, MetricKind, MinimizerKind, PdfNode, Variable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration problem located by the dotted path of the offending key.
#[derive(Debug, Error, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Metric {
    #[default]
    #[serde(rename = "nll")]
    Nll,
    #[serde(rename = "chi2")]
    Chi2,
}

impl From<Metric> for MetricKind {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Nll => MetricKind::NegativeLogLikelihood,
            Metric::Chi2 => MetricKind::ChiSquared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Minimizer {
    #[default]
    QuasiNewton,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    #[serde(default)]
    pub minimizer: Minimizer,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_simplex_tolerance")]
    pub simplex_tolerance: f64,
}

fn default_max_iterations() -> usize {
    10_000
}

fn default_gradient_tolerance() -> f64 {
    1e-6
}

fn default_simplex_tolerance() -> f64 {
    1e-8
}

fn default_grid_points() -> usize {
    GridSpec::DEFAULT_POINTS
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            minimizer: Minimizer::default(),
            max_iterations: default_max_iterations(),
            gradient_tolerance: default_gradient_tolerance(),
            simplex_tolerance: default_simplex_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Histogram bins; when every observable has them the fit is binned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub init: f64,
    pub step: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fixed: bool,
}

/// A region boundary: a number or the name of a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundarySpec {
    Fixed(f64),
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeSpec {
    Exponential {
        name: String,
        observable: String,
        alpha: String,
    },
    Gaussian {
        name: String,
        observable: String,
        mean: String,
        sigma: String,
    },
    BreitWigner {
        name: String,
        observable: String,
        mass: String,
        width: String,
    },
    Polynomial {
        name: String,
        observable: String,
        coefficients: Vec<String>,
    },
    Product {
        name: String,
        children: Vec<NodeSpec>,
    },
    Sum {
        name: String,
        fractions: Vec<String>,
        children: Vec<NodeSpec>,
    },
    Composite {
        name: String,
        outer: Box<NodeSpec>,
        inner: Box<NodeSpec>,
    },
    Mapped {
        name: String,
        boundaries: Vec<BoundarySpec>,
        targets: Vec<NodeSpec>,
    },
    Convolution {
        name: String,
        model: Box<NodeSpec>,
        resolution: Box<NodeSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub fit: FitSettings,
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    pub pdf: NodeSpec,
}

/// Variables and settings built from a [`ModelConfig`]; the PDF graph is
/// returned next to it by [`ModelConfig::build`].
#[derive(Debug)]
pub struct Built {
    pub observables: Vec<Variable>,
    pub parameters: Vec<Variable>,
    pub grid: GridSpec,
    pub metric: MetricKind,
    pub fit: FitConfig,
    /// Bin counts when every observable is binned.
    pub bins: Option<Vec<usize>>,
}

impl Built {
    /// Restores every parameter to its configured initial value.
    pub fn reset(&self, config: &ModelConfig) {
        for (v, spec) in self.parameters.iter().zip(&config.parameters) {
            v.set_value(spec.init);
        }
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<document>", e.to_string()))?;
        let config: ModelConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<document>".to_string() } else { path };
            ConfigError::new(path, e.into_inner().to_string().trim_end())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model configuration always serializes")
    }

    /// Checks names, ranges and references without building anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid_points < 2 {
            return Err(ConfigError::new("grid_points", "must be at least 2"));
        }
        let f = &self.fit;
        if f.max_iterations == 0 {
            return Err(ConfigError::new("fit.max_iterations", "must be positive"));
        }
        if !(f.gradient_tolerance > 0.0) {
            return Err(ConfigError::new("fit.gradient_tolerance", "must be positive"));
        }
        if !(f.simplex_tolerance > 0.0) {
            return Err(ConfigError::new("fit.simplex_tolerance", "must be positive"));
        }
        if self.observables.is_empty() {
            return Err(ConfigError::new("observables", "at least one observable is required"));
        }
        let mut names: HashMap<&str, String> = HashMap::new();
        for (i, o) in self.observables.iter().enumerate() {
            let path = format!("observables[{i}]");
            if let Some(prev) = names.insert(&o.name, path.clone()) {
                return Err(ConfigError::new(format!("{path}.name"), format!("`{}` already defined at {prev}", o.name)));
            }
            if !(o.lower < o.upper) || !o.lower.is_finite() || !o.upper.is_finite() {
                return Err(ConfigError::new(path, "lower must be below upper"));
            }
            if o.bins == Some(0) {
                return Err(ConfigError::new(format!("{path}.bins"), "must be positive"));
            }
        }
        let binned = self.observables.iter().filter(|o| o.bins.is_some()).count();
        if binned != 0 && binned != self.observables.len() {
            return Err(ConfigError::new("observables", "either every observable has `bins` or none does"));
        }
        if self.metric == Metric::Chi2 && binned == 0 {
            return Err(ConfigError::new("metric", "chi2 needs `bins` on every observable"));
        }
        for (i, p) in self.parameters.iter().enumerate() {
            let path = format!("parameters[{i}]");
            if let Some(prev) = names.insert(&p.name, path.clone()) {
                return Err(ConfigError::new(format!("{path}.name"), format!("`{}` already defined at {prev}", p.name)));
            }
            if !(p.lower < p.upper) {
                return Err(ConfigError::new(path, "lower must be below upper"));
            }
            if !(p.step > 0.0) {
                return Err(ConfigError::new(format!("{path}.step"), "must be positive"));
            }
            if !(p.lower <= p.init && p.init <= p.upper) {
                return Err(ConfigError::new(format!("{path}.init"), "outside [lower, upper]"));
            }
        }
        let mut node_names = HashMap::new();
        self.check_node(&self.pdf, "pdf", &mut node_names)
    }

    fn check_node<'a>(
        &self,
        node: &'a NodeSpec,
        path: &str,
        seen: &mut HashMap<&'a str, String>,
    ) -> Result<(), ConfigError> {
        let obs = |key: &str, name: &str| {
            if self.observables.iter().any(|o| o.name == name) {
                Ok(())
            } else {
                Err(ConfigError::new(format!("{path}.{key}"), format!("unknown observable `{name}`")))
            }
        };
        let param = |key: String, name: &str| {
            if self.parameters.iter().any(|p| p.name == name) {
                Ok(())
            } else {
                Err(ConfigError::new(format!("{path}.{key}"), format!("unknown parameter `{name}`")))
            }
        };
        let name = node.name();
        if let Some(prev) = seen.insert(name, path.to_string()) {
            return Err(ConfigError::new(format!("{path}.name"), format!("node `{name}` already defined at {prev}")));
        }
        match node {
            NodeSpec::Exponential { observable, alpha, .. } => {
                obs("observable", observable)?;
                param("alpha".into(), alpha)?;
            }
            NodeSpec::Gaussian { observable, mean, sigma, .. } => {
                obs("observable", observable)?;
                param("mean".into(), mean)?;
                param("sigma".into(), sigma)?;
            }
            NodeSpec::BreitWigner { observable, mass, width, .. } => {
                obs("observable", observable)?;
                param("mass".into(), mass)?;
                param("width".into(), width)?;
            }
            NodeSpec::Polynomial { observable, coefficients, .. } => {
                obs("observable", observable)?;
                if coefficients.is_empty() {
                    return Err(ConfigError::new(format!("{path}.coefficients"), "at least one coefficient is required"));
                }
                for (i, c) in coefficients.iter().enumerate() {
                    param(format!("coefficients[{i}]"), c)?;
                }
            }
            NodeSpec::Product { children, .. } => {
                if children.len() < 2 {
                    return Err(ConfigError::new(format!("{path}.children"), "a product needs at least two children"));
                }
                for (i, c) in children.iter().enumerate() {
                    self.check_node(c, &format!("{path}.children[{i}]"), seen)?;
                }
            }
            NodeSpec::Sum { fractions, children, .. } => {
                if children.len() < 2 {
                    return Err(ConfigError::new(format!("{path}.children"), "a sum needs at least two children"));
                }
                if fractions.len() + 1 != children.len() {
                    return Err(ConfigError::new(
                        format!("{path}.fractions"),
                        format!("{} children need {} fractions", children.len(), children.len() - 1),
                    ));
                }
                for (i, f) in fractions.iter().enumerate() {
                    param(format!("fractions[{i}]"), f)?;
                }
                for (i, c) in children.iter().enumerate() {
                    self.check_node(c, &format!("{path}.children[{i}]"), seen)?;
                }
            }
            NodeSpec::Composite { outer, inner, .. } => {
                self.check_node(outer, &format!("{path}.outer"), seen)?;
                self.check_node(inner, &format!("{path}.inner"), seen)?;
            }
            NodeSpec::Mapped { boundaries, targets, .. } => {
                if targets.is_empty() {
                    return Err(ConfigError::new(format!("{path}.targets"), "at least one target is required"));
                }
                if boundaries.len() != targets.len() + 1 {
                    return Err(ConfigError::new(
                        format!("{path}.boundaries"),
                        format!("{} targets need {} boundaries", targets.len(), targets.len() + 1),
                    ));
                }
                for (i, b) in boundaries.iter().enumerate() {
                    if let BoundarySpec::Param(p) = b {
                        param(format!("boundaries[{i}]"), p)?;
                    }
                }
                for (i, t) in targets.iter().enumerate() {
                    self.check_node(t, &format!("{path}.targets[{i}]"), seen)?;
                }
            }
            NodeSpec::Convolution { model, resolution, .. } => {
                self.check_node(model, &format!("{path}.model"), seen)?;
                self.check_node(resolution, &format!("{path}.resolution"), seen)?;
            }
        }
        Ok(())
    }

    /// Creates fresh variables and the PDF graph over them.
    pub fn build(&self) -> Result<(Built, PdfNode), ConfigError> {
        self.validate()?;
        let observables: Vec<Variable> = self
            .observables
            .iter()
            .enumerate()
            .map(|(i, o)| {
                Variable::observable(&o.name, o.lower, o.upper)
                    .map_err(|e| ConfigError::new(format!("observables[{i}]"), e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let parameters: Vec<Variable> = self
            .parameters
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let v = Variable::parameter(&p.name, p.init, p.step, p.lower, p.upper)
                    .map_err(|e| ConfigError::new(format!("parameters[{i}]"), e.to_string()))?;
                v.set_fixed(p.fixed);
                Ok(v)
            })
            .collect::<Result<_, ConfigError>>()?;
        let vars = Vars {
            observables: &observables,
            parameters: &parameters,
        };
        let pdf = vars.node(&self.pdf, "pdf")?;
        let bins = self
            .observables
            .iter()
            .map(|o| o.bins)
            .collect::<Option<Vec<usize>>>();
        let fit = FitConfig {
            minimizer: match self.fit.minimizer {
                Minimizer::QuasiNewton => MinimizerKind::QuasiNewton,
                Minimizer::NelderMead => MinimizerKind::NelderMead,
            },
            max_iterations: self.fit.max_iterations,
            gradient_tolerance: self.fit.gradient_tolerance,
            simplex_tolerance: self.fit.simplex_tolerance,
            metric: self.metric.into(),
            ..FitConfig::default()
        };
        let built = Built {
            observables,
            parameters,
            grid: GridSpec::new(self.grid_points).map_err(|e| ConfigError::new("grid_points", e.to_string()))?,
            metric: self.metric.into(),
            fit,
            bins,
        };
        Ok((built, pdf))
    }
}

impl NodeSpec {
    pub fn name(&self) -> &str {
        match self {
            NodeSpec::Exponential { name, .. }
            | NodeSpec::Gaussian { name, .. }
            | NodeSpec::BreitWigner { name, .. }
            | NodeSpec::Polynomial { name, .. }
            | NodeSpec::Product { name, .. }
            | NodeSpec::Sum { name, .. }
            | NodeSpec::Composite { name, .. }
            | NodeSpec::Mapped { name, .. }
            | NodeSpec::Convolution { name, .. } => name,
        }
    }
}

struct Vars<'a> {
    observables: &'a [Variable],
    parameters: &'a [Variable],
}

impl Vars<'_> {
    fn obs(&self, name: &str) -> &Variable {
        self.observables
            .iter()
            .find(|v| v.name() == name)
            .expect("validated reference")
    }

    fn par(&self, name: &str) -> &Variable {
        self.parameters
            .iter()
            .find(|v| v.name() == name)
            .expect("validated reference")
    }

    fn node(&self, spec: &NodeSpec, path: &str) -> Result<PdfNode, ConfigError> {
        let built = match spec {
            NodeSpec::Exponential { name, observable, alpha } => {
                pdf::exponential(name, self.obs(observable), self.par(alpha))
            }
            NodeSpec::Gaussian { name, observable, mean, sigma } => {
                pdf::gaussian(name, self.obs(observable), self.par(mean), self.par(sigma))
            }
            NodeSpec::BreitWigner { name, observable, mass, width } => {
                pdf::breit_wigner(name, self.obs(observable), self.par(mass), self.par(width))
            }
            NodeSpec::Polynomial { name, observable, coefficients } => {
                let coeffs: Vec<Variable> = coefficients.iter().map(|c| self.par(c).clone()).collect();
                pdf::polynomial(name, self.obs(observable), &coeffs)
            }
            NodeSpec::Product { name, children } => {
                let kids = self.children(children, &format!("{path}.children"))?;
                pdf::product(name, kids)
            }
            NodeSpec::Sum { name, fractions, children } => {
                let kids = self.children(children, &format!("{path}.children"))?;
                let fr: Vec<Variable> = fractions.iter().map(|f| self.par(f).clone()).collect();
                pdf::sum(name, kids, &fr)
            }
            NodeSpec::Composite { name, outer, inner } => {
                let o = self.node(outer, &format!("{path}.outer"))?;
                let i = self.node(inner, &format!("{path}.inner"))?;
                pdf::composite(name, o, i)
            }
            NodeSpec::Mapped { name, boundaries, targets } => {
                let kids = self.children(targets, &format!("{path}.targets"))?;
                let edges: Vec<Edge> = boundaries
                    .iter()
                    .map(|b| match b {
                        BoundarySpec::Fixed(v) => Edge::Fixed(*v),
                        BoundarySpec::Param(p) => Edge::Param(self.par(p).clone()),
                    })
                    .collect();
                pdf::mapped(name, &edges, kids)
            }
            NodeSpec::Convolution { name, model, resolution } => {
                let m = self.node(model, &format!("{path}.model"))?;
                let r = self.node(resolution, &format!("{path}.resolution"))?;
                pdf::convolution(name, m, r)
            }
        };
        built.map_err(|e| ConfigError::new(path, e.to_string()))
    }

    fn children(&self, specs: &[NodeSpec], path: &str) -> Result<Vec<PdfNode>, ConfigError> {
        specs
            .iter()
            .enumerate()
            .map(|(i, s)| self.node(s, &format!("{path}[{i}]")))
            .collect()
    }
}
