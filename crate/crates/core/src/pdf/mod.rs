//! Composable probability density functions.
//!
//! A [`PdfNode`] is either a primitive shape (exponential, Gaussian,
//! Breit-Wigner, polynomial) or a combinator over child nodes (product, sum,
//! composition, piecewise mapping, convolution). Nodes own their children, so
//! a graph is always a tree; nesting depth is unbounded.
//!
//! Nodes only declare structure. Evaluation goes through a [`Model`], which
//! registers the parameters, builds the index table and caches
//! normalizations.

mod kernel;
mod model;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use kernel::{EvalError, EvalErrorKind, Tally};
pub use model::{Evaluator, Model};

use crate::index::ModelError;
use crate::variable::Variable;

/// Stable identity of a node, assigned at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u64);

impl NodeId {
    fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(0);
        NodeId(NEXT.fetch_add(1, Ordering::Relaxed))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

/// Region boundary of a piecewise PDF, as given by the caller.
#[derive(Debug, Clone)]
pub enum Edge {
    Fixed(f64),
    Param(Variable),
}

/// Region boundary as stored in the node: a constant or a local parameter slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Fixed(f64),
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Exponential,
    Gaussian,
    BreitWigner,
    Polynomial,
    Product,
    /// Children `[0..n]`, parameters are the `n - 1` fractions.
    Sum,
    /// Children `[outer, inner]`.
    Composite,
    /// Children are the region targets; `boundaries.len() == targets + 1`.
    Mapped(Vec<Boundary>),
    /// Children `[model, resolution]`.
    Convolution,
}

impl Kind {
    pub fn label(&self) -> &'static str {
        match self {
            Kind::Exponential => "exponential",
            Kind::Gaussian => "gaussian",
            Kind::BreitWigner => "breit_wigner",
            Kind::Polynomial => "polynomial",
            Kind::Product => "product",
            Kind::Sum => "sum",
            Kind::Composite => "composite",
            Kind::Mapped(_) => "mapped",
            Kind::Convolution => "convolution",
        }
    }
}

#[derive(Debug, Error)]
pub enum PdfError {
    #[error("`{name}` must be {expected}")]
    Role { name: String, expected: &'static str },
    #[error("lower limit of `{name}` must be positive, got {lower}")]
    NonPositiveLimit { name: String, lower: f64 },
    #[error("limits of fraction `{name}` must lie within [0, 1]")]
    FractionLimits { name: String },
    #[error("`{node}`: {message}")]
    Structure { node: String, message: String },
    #[error("grid needs at least 2 points per observable, got {0}")]
    GridPoints(usize),
    #[error("normalization integral of `{node}` is {value}")]
    ZeroIntegral { node: String, value: f64 },
    #[error("expected {expected} values per row, got {actual}")]
    RowLength { expected: usize, actual: usize },
    #[error("evaluation of `{node}` failed: {kind}")]
    Eval { node: String, kind: EvalErrorKind },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn structure(node: &str, message: impl Into<String>) -> PdfError {
    PdfError::Structure {
        node: node.to_string(),
        message: message.into(),
    }
}

/// Midpoint grid used for normalization integrals and convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    points: usize,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 1024;

    pub fn new(points: usize) -> Result<Self, PdfError> {
        if points < 2 {
            return Err(PdfError::GridPoints(points));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> usize {
        self.points
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: Self::DEFAULT_POINTS,
        }
    }
}

pub struct PdfNode {
    id: NodeId,
    name: String,
    kind: Kind,
    children: Vec<PdfNode>,
    parameters: Vec<Variable>,
    observables: Vec<Variable>,
}

impl fmt::Debug for PdfNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdfNode")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("parameters", &self.parameters.iter().map(Variable::name).collect::<Vec<_>>())
            .field("observables", &self.observables.iter().map(Variable::name).collect::<Vec<_>>())
            .field("children", &self.children)
            .finish()
    }
}

impl PdfNode {
    fn new(
        name: &str,
        kind: Kind,
        children: Vec<PdfNode>,
        parameters: Vec<Variable>,
        observables: Vec<Variable>,
    ) -> Self {
        PdfNode {
            id: NodeId::fresh(),
            name: name.to_string(),
            kind,
            children,
            parameters,
            observables,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn children(&self) -> &[PdfNode] {
        &self.children
    }

    /// Parameters declared by this node itself, in local slot order.
    pub fn parameters(&self) -> &[Variable] {
        &self.parameters
    }

    /// Observables spanning this node's normalization box.
    pub fn observables(&self) -> &[Variable] {
        &self.observables
    }

    /// Number of nodes in this subtree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(PdfNode::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(PdfNode::depth).max().unwrap_or(0)
    }

    pub fn find(&self, id: NodeId) -> Option<&PdfNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }
}

fn require_observable(v: &Variable) -> Result<(), PdfError> {
    if !v.is_observable() {
        return Err(PdfError::Role {
            name: v.name().to_string(),
            expected: "an observable",
        });
    }
    Ok(())
}

fn require_parameter(v: &Variable) -> Result<(), PdfError> {
    if !v.is_parameter() {
        return Err(PdfError::Role {
            name: v.name().to_string(),
            expected: "a parameter",
        });
    }
    Ok(())
}

fn require_positive_limit(v: &Variable) -> Result<(), PdfError> {
    if !(v.lower() > 0.0) {
        return Err(PdfError::NonPositiveLimit {
            name: v.name().to_string(),
            lower: v.lower(),
        });
    }
    Ok(())
}

fn union_observables(children: &[PdfNode]) -> Vec<Variable> {
    let mut out: Vec<Variable> = Vec::new();
    for o in children.iter().flat_map(|c| c.observables.iter()) {
        if !out.iter().any(|p| p.same(o)) {
            out.push(o.clone());
        }
    }
    out
}

fn same_set(a: &[Variable], b: &[Variable]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| y.same(x)))
}

/// `exp(alpha * x)`.
pub fn exponential(name: &str, x: &Variable, alpha: &Variable) -> Result<PdfNode, PdfError> {
    require_observable(x)?;
    require_parameter(alpha)?;
    Ok(PdfNode::new(
        name,
        Kind::Exponential,
        Vec::new(),
        vec![alpha.clone()],
        vec![x.clone()],
    ))
}

/// `exp(-0.5 (x - mean)^2 / sigma^2)`, peak value 1.
pub fn gaussian(
    name: &str,
    x: &Variable,
    mean: &Variable,
    sigma: &Variable,
) -> Result<PdfNode, PdfError> {
    require_observable(x)?;
    require_parameter(mean)?;
    require_parameter(sigma)?;
    require_positive_limit(sigma)?;
    Ok(PdfNode::new(
        name,
        Kind::Gaussian,
        Vec::new(),
        vec![mean.clone(), sigma.clone()],
        vec![x.clone()],
    ))
}

/// Relativistic Breit-Wigner shape `1 / ((x^2 - m^2)^2 + m^2 width^2)`.
pub fn breit_wigner(
    name: &str,
    x: &Variable,
    mass: &Variable,
    width: &Variable,
) -> Result<PdfNode, PdfError> {
    require_observable(x)?;
    require_parameter(mass)?;
    require_parameter(width)?;
    require_positive_limit(width)?;
    Ok(PdfNode::new(
        name,
        Kind::BreitWigner,
        Vec::new(),
        vec![mass.clone(), width.clone()],
        vec![x.clone()],
    ))
}

/// `max(0, sum_i c_i x^i)`; clamped evaluations are counted.
pub fn polynomial(name: &str, x: &Variable, coeffs: &[Variable]) -> Result<PdfNode, PdfError> {
    require_observable(x)?;
    if coeffs.is_empty() {
        return Err(structure(name, "polynomial needs at least one coefficient"));
    }
    for c in coeffs {
        require_parameter(c)?;
    }
    Ok(PdfNode::new(
        name,
        Kind::Polynomial,
        Vec::new(),
        coeffs.to_vec(),
        vec![x.clone()],
    ))
}

/// Product of the children's raw kernels over the union of their observables.
pub fn product(name: &str, children: Vec<PdfNode>) -> Result<PdfNode, PdfError> {
    if children.len() < 2 {
        return Err(structure(
            name,
            format!("product needs at least 2 children, got {}", children.len()),
        ));
    }
    let observables = union_observables(&children);
    Ok(PdfNode::new(name, Kind::Product, children, Vec::new(), observables))
}

/// Weighted sum of normalized children with `n - 1` fractions; the last child
/// receives `1 - sum(fractions)`.
pub fn sum(name: &str, children: Vec<PdfNode>, fractions: &[Variable]) -> Result<PdfNode, PdfError> {
    if children.len() < 2 {
        return Err(structure(
            name,
            format!("sum needs at least 2 children, got {}", children.len()),
        ));
    }
    if fractions.len() + 1 != children.len() {
        return Err(structure(
            name,
            format!(
                "{} children need {} fractions, got {}",
                children.len(),
                children.len() - 1,
                fractions.len()
            ),
        ));
    }
    for f in fractions {
        require_parameter(f)?;
        if f.lower() < 0.0 || f.upper() > 1.0 {
            return Err(PdfError::FractionLimits {
                name: f.name().to_string(),
            });
        }
    }
    let observables = children[0].observables.clone();
    if children.iter().any(|c| !same_set(&c.observables, &observables)) {
        return Err(structure(name, "all sum children must share the same observables"));
    }
    Ok(PdfNode::new(name, Kind::Sum, children, fractions.to_vec(), observables))
}

/// `outer(inner(x))`. The outer node's single observable receives the inner
/// raw value.
pub fn composite(name: &str, outer: PdfNode, inner: PdfNode) -> Result<PdfNode, PdfError> {
    if outer.observables.len() != 1 {
        return Err(structure(
            name,
            format!(
                "outer function must have one observable, `{}` has {}",
                outer.name,
                outer.observables.len()
            ),
        ));
    }
    if inner.observables.is_empty() {
        return Err(structure(name, "inner function has no observables"));
    }
    let observables = inner.observables.clone();
    Ok(PdfNode::new(
        name,
        Kind::Composite,
        vec![outer, inner],
        Vec::new(),
        observables,
    ))
}

/// Piecewise PDF: target `i` on `[b_i, b_{i+1})`, the last region closed.
pub fn mapped(name: &str, boundaries: &[Edge], targets: Vec<PdfNode>) -> Result<PdfNode, PdfError> {
    if targets.is_empty() {
        return Err(structure(name, "mapped PDF needs at least one target"));
    }
    if boundaries.len() != targets.len() + 1 {
        return Err(structure(
            name,
            format!(
                "{} targets need {} boundaries, got {}",
                targets.len(),
                targets.len() + 1,
                boundaries.len()
            ),
        ));
    }
    let observables = targets[0].observables.clone();
    if observables.len() != 1 || targets.iter().any(|t| !same_set(&t.observables, &observables)) {
        return Err(structure(
            name,
            "all targets must be one-dimensional in the same observable",
        ));
    }
    let mut params = Vec::new();
    let mut stored = Vec::with_capacity(boundaries.len());
    for b in boundaries {
        match b {
            Edge::Fixed(v) => stored.push(Boundary::Fixed(*v)),
            Edge::Param(p) => {
                require_parameter(p)?;
                let slot = match params.iter().position(|q: &Variable| q.same(p)) {
                    Some(s) => s,
                    None => {
                        params.push(p.clone());
                        params.len() - 1
                    }
                };
                stored.push(Boundary::Param(slot));
            }
        }
    }
    let current: Vec<f64> = boundaries
        .iter()
        .map(|b| match b {
            Edge::Fixed(v) => *v,
            Edge::Param(p) => p.value(),
        })
        .collect();
    if current.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(structure(name, "boundaries must be strictly increasing"));
    }
    Ok(PdfNode::new(
        name,
        Kind::Mapped(stored),
        targets,
        params,
        observables,
    ))
}

/// `(model * resolution)(x) = integral model(t) resolution(x - t) dt` over the
/// model observable's range.
pub fn convolution(name: &str, model: PdfNode, resolution: PdfNode) -> Result<PdfNode, PdfError> {
    if model.observables.len() != 1 || resolution.observables.len() != 1 {
        return Err(structure(
            name,
            "convolution needs a one-dimensional model and resolution",
        ));
    }
    let observables = model.observables.clone();
    Ok(PdfNode::new(
        name,
        Kind::Convolution,
        vec![model, resolution],
        Vec::new(),
        observables,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Variable {
        Variable::observable("x", 0.0, 10.0).unwrap()
    }

    fn p(name: &str, v: f64) -> Variable {
        Variable::parameter(name, v, 0.1, -10.0, 10.0).unwrap()
    }

    #[test]
    fn role_mismatch() {
        let xv = x();
        assert!(matches!(
            exponential("e", &p("a", 0.0), &p("b", 0.0)),
            Err(PdfError::Role { .. })
        ));
        assert!(matches!(
            exponential("e", &xv, &xv),
            Err(PdfError::Role { .. })
        ));
    }

    #[test]
    fn sigma_limits_must_exclude_zero() {
        let xv = x();
        let sigma = Variable::parameter("s", 1.0, 0.1, 0.0, 2.0).unwrap();
        assert!(matches!(
            gaussian("g", &xv, &p("m", 0.0), &sigma),
            Err(PdfError::NonPositiveLimit { .. })
        ));
        let width = Variable::parameter("w", 1.0, 0.1, -1.0, 2.0).unwrap();
        assert!(breit_wigner("bw", &xv, &p("m", 1.0), &width).is_err());
    }

    #[test]
    fn combinator_arity() {
        let xv = x();
        let e = || exponential("e", &xv, &p("a", -1.0)).unwrap();
        assert!(matches!(product("p", vec![e()]), Err(PdfError::Structure { .. })));
        assert!(matches!(product("p", vec![]), Err(PdfError::Structure { .. })));
        let f = Variable::parameter("f", 0.5, 0.1, 0.0, 1.0).unwrap();
        assert!(sum("s", vec![e(), e()], &[]).is_err());
        assert!(sum("s", vec![e(), e()], &[f.clone(), f.clone()]).is_err());
        let wide = Variable::parameter("fw", 0.5, 0.1, -1.0, 1.0).unwrap();
        assert!(matches!(
            sum("s", vec![e(), e()], &[wide]),
            Err(PdfError::FractionLimits { .. })
        ));
        assert!(sum("s", vec![e(), e()], &[f]).is_ok());
    }

    #[test]
    fn composite_outer_must_be_one_dimensional() {
        let xv = x();
        let yv = Variable::observable("y", 0.0, 1.0).unwrap();
        let outer = product(
            "o",
            vec![
                exponential("ex", &xv, &p("a", 0.0)).unwrap(),
                exponential("ey", &yv, &p("b", 0.0)).unwrap(),
            ],
        )
        .unwrap();
        let inner = exponential("i", &xv, &p("c", 0.0)).unwrap();
        assert!(composite("c", outer, inner).is_err());
    }

    #[test]
    fn mapped_boundaries_checked() {
        let xv = x();
        let t = |n: &str| polynomial(n, &xv, &[p(&format!("{n}c"), 1.0)]).unwrap();
        assert!(mapped("m", &[Edge::Fixed(0.0), Edge::Fixed(10.0)], vec![t("a")]).is_ok());
        assert!(mapped(
            "m",
            &[Edge::Fixed(0.0), Edge::Fixed(5.0), Edge::Fixed(5.0)],
            vec![t("b"), t("c")]
        )
        .is_err());
        assert!(mapped("m", &[Edge::Fixed(0.0)], vec![t("d")]).is_err());
        let mid = p("mid", 4.0);
        let node = mapped(
            "m",
            &[Edge::Fixed(0.0), Edge::Param(mid.clone()), Edge::Fixed(10.0)],
            vec![t("e"), t("f")],
        )
        .unwrap();
        assert_eq!(node.parameters().len(), 1);
        assert_eq!(
            node.kind(),
            &Kind::Mapped(vec![
                Boundary::Fixed(0.0),
                Boundary::Param(0),
                Boundary::Fixed(10.0)
            ])
        );
    }

    #[test]
    fn arbitrary_nesting_depth() {
        let xv = x();
        let mut node = exponential("e0", &xv, &p("a0", -0.1)).unwrap();
        for i in 1..40 {
            let other = exponential(&format!("e{i}"), &xv, &p(&format!("a{i}"), -0.1)).unwrap();
            node = product(&format!("p{i}"), vec![node, other]).unwrap();
        }
        assert_eq!(node.depth(), 40);
        assert_eq!(node.size(), 79);
    }

    #[test]
    fn node_ids_are_unique() {
        let xv = x();
        let a = exponential("a", &xv, &p("a", 0.0)).unwrap();
        let b = exponential("b", &xv, &p("b", 0.0)).unwrap();
        assert_ne!(a.id(), b.id());
    }
}
