//! Global parameter registry and the flattened index table.
//!
//! Every PDF node reads its parameters and observables through a per-node
//! slot array with the layout
//!
//! ```text
//! [n_params, param_index_0, .., param_index_{n-1}, n_obs, column_0, .., column_{m-1}]
//! ```
//!
//! A parameter value is `params[slots[node][1 + local]]` and an observable is
//! `row[slots[node][2 + n_params + local]]`. One flat parameter vector thus
//! serves every node of the graph, and a parameter shared between nodes
//! resolves to the same global index in each.

use std::collections::HashMap;

use thiserror::Error;

use crate::pdf::{Kind, NodeId, PdfNode};
use crate::variable::{Role, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("`{name}` has role {actual:?}, expected {expected:?}")]
    WrongRole {
        name: String,
        expected: Role,
        actual: Role,
    },
    #[error("two distinct variables share the name `{name}`")]
    NameCollision { name: String },
    #[error("observable `{name}` is not bound to any data column")]
    UnboundObservable { name: String },
    #[error("node {0:?} is not part of this index table")]
    UnknownNode(NodeId),
    #[error("slot {slot} out of bounds for node {node:?} with {len} entries")]
    SlotOutOfBounds { node: NodeId, slot: usize, len: usize },
    #[error("parameter vector has length {actual}, registry holds {expected}")]
    ParameterLength { expected: usize, actual: usize },
}

/// Ordered, deduplicated parameters and observables.
#[derive(Debug, Clone, Default)]
pub struct ParameterRegistry {
    parameters: Vec<Variable>,
    observables: Vec<Variable>,
}

impl ParameterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the global index of `v`, registering it on first sight.
    pub fn register_parameter(&mut self, v: &Variable) -> Result<usize, ModelError> {
        if !v.is_parameter() {
            return Err(ModelError::WrongRole {
                name: v.name().to_string(),
                expected: Role::Parameter,
                actual: v.role(),
            });
        }
        if let Some(i) = self.parameters.iter().position(|p| p.same(v)) {
            return Ok(i);
        }
        self.check_name(v)?;
        self.parameters.push(v.clone());
        Ok(self.parameters.len() - 1)
    }

    pub fn register_observable(&mut self, v: &Variable) -> Result<usize, ModelError> {
        if !v.is_observable() {
            return Err(ModelError::WrongRole {
                name: v.name().to_string(),
                expected: Role::Observable,
                actual: v.role(),
            });
        }
        if let Some(i) = self.observables.iter().position(|o| o.same(v)) {
            return Ok(i);
        }
        self.check_name(v)?;
        self.observables.push(v.clone());
        Ok(self.observables.len() - 1)
    }

    fn check_name(&self, v: &Variable) -> Result<(), ModelError> {
        let clash = self
            .parameters
            .iter()
            .chain(&self.observables)
            .any(|o| o.name() == v.name());
        if clash {
            return Err(ModelError::NameCollision {
                name: v.name().to_string(),
            });
        }
        Ok(())
    }

    pub fn parameters(&self) -> &[Variable] {
        &self.parameters
    }

    pub fn observables(&self) -> &[Variable] {
        &self.observables
    }

    pub fn index_of(&self, v: &Variable) -> Option<usize> {
        self.parameters.iter().position(|p| p.same(v))
    }

    pub fn parameter_by_name(&self, name: &str) -> Option<&Variable> {
        self.parameters.iter().find(|p| p.name() == name)
    }

    /// Current values of all registered parameters, in registry order.
    pub fn values(&self) -> Vec<f64> {
        self.parameters.iter().map(Variable::value).collect()
    }
}

/// Per-node slot arrays in pre-order, plus the tree topology in dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexTable {
    node_ids: Vec<NodeId>,
    slots: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    n_params: usize,
    n_data_columns: usize,
    n_columns: usize,
}

impl IndexTable {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self, dense: usize) -> &[usize] {
        &self.slots[dense]
    }

    pub fn node_slots(&self, id: NodeId) -> Result<&[usize], ModelError> {
        Ok(&self.slots[self.dense_index(id)?])
    }

    pub fn dense_index(&self, id: NodeId) -> Result<usize, ModelError> {
        self.node_ids
            .iter()
            .position(|&n| n == id)
            .ok_or(ModelError::UnknownNode(id))
    }

    pub fn node_id(&self, dense: usize) -> NodeId {
        self.node_ids[dense]
    }

    pub fn children(&self, dense: usize) -> &[usize] {
        &self.children[dense]
    }

    /// Length of the exported parameter vector.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Columns supplied by the bound data set.
    pub fn n_data_columns(&self) -> usize {
        self.n_data_columns
    }

    /// Data columns plus scratch columns for observables internal to a
    /// composition or a convolution resolution.
    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn node_param_count(&self, dense: usize) -> usize {
        self.slots[dense][0]
    }

    pub fn node_obs_count(&self, dense: usize) -> usize {
        let s = &self.slots[dense];
        s[1 + s[0]]
    }

    #[inline]
    pub(crate) fn param(&self, dense: usize, local: usize, params: &[f64]) -> f64 {
        params[self.slots[dense][1 + local]]
    }

    #[inline]
    pub(crate) fn column(&self, dense: usize, local: usize) -> usize {
        let s = &self.slots[dense];
        s[2 + s[0] + local]
    }

    pub fn param_index(&self, dense: usize, local: usize) -> Result<usize, ModelError> {
        let s = &self.slots[dense];
        if local >= s[0] {
            return Err(ModelError::SlotOutOfBounds {
                node: self.node_ids[dense],
                slot: local,
                len: s[0],
            });
        }
        Ok(s[1 + local])
    }

    pub fn obs_column(&self, dense: usize, local: usize) -> Result<usize, ModelError> {
        let n = self.node_obs_count(dense);
        if local >= n {
            return Err(ModelError::SlotOutOfBounds {
                node: self.node_ids[dense],
                slot: local,
                len: n,
            });
        }
        Ok(self.column(dense, local))
    }
}

/// Value of parameter `local` of node `node`: `params[table[node][1 + local]]`.
pub fn lookup_param(
    table: &IndexTable,
    node: NodeId,
    local: usize,
    params: &[f64],
) -> Result<f64, ModelError> {
    if params.len() != table.n_params {
        return Err(ModelError::ParameterLength {
            expected: table.n_params,
            actual: params.len(),
        });
    }
    let dense = table.dense_index(node)?;
    Ok(params[table.param_index(dense, local)?])
}

/// Registers every parameter and observable of `graph` (pre-order) and builds
/// the index table against the data `columns`.
///
/// Observables that only appear inside the outer function of a composition or
/// inside a convolution resolution are internal coordinates; they receive
/// scratch columns after the data columns. Any other observable missing from
/// `columns` is unbound.
pub fn finalize(
    registry: &mut ParameterRegistry,
    graph: Option<&PdfNode>,
    columns: &[Variable],
) -> Result<IndexTable, ModelError> {
    for c in columns {
        registry.register_observable(c)?;
    }
    let mut builder = Builder {
        registry,
        columns,
        scratch: Vec::new(),
        table: IndexTable {
            node_ids: Vec::new(),
            slots: Vec::new(),
            children: Vec::new(),
            n_params: 0,
            n_data_columns: columns.len(),
            n_columns: columns.len(),
        },
        seen: HashMap::new(),
    };
    if let Some(root) = graph {
        builder.visit(root, false)?;
    }
    let n_scratch = builder.scratch.len();
    let mut table = builder.table;
    table.n_params = registry.parameters().len();
    table.n_columns = columns.len() + n_scratch;
    Ok(table)
}

struct Builder<'a> {
    registry: &'a mut ParameterRegistry,
    columns: &'a [Variable],
    scratch: Vec<Variable>,
    table: IndexTable,
    seen: HashMap<NodeId, usize>,
}

impl Builder<'_> {
    fn visit(&mut self, node: &PdfNode, internal: bool) -> Result<usize, ModelError> {
        let dense = self.table.slots.len();
        self.seen.insert(node.id(), dense);
        self.table.node_ids.push(node.id());
        self.table.slots.push(Vec::new());
        self.table.children.push(Vec::new());

        let mut slots = Vec::with_capacity(2 + node.parameters().len() + node.observables().len());
        slots.push(node.parameters().len());
        for p in node.parameters() {
            slots.push(self.registry.register_parameter(p)?);
        }
        slots.push(node.observables().len());
        for o in node.observables() {
            slots.push(self.column_of(o, internal)?);
        }
        self.table.slots[dense] = slots;

        for (j, child) in node.children().iter().enumerate() {
            let child_internal = internal
                || matches!(
                    (node.kind(), j),
                    (Kind::Composite, 0) | (Kind::Convolution, 1)
                );
            let c = self.visit(child, child_internal)?;
            self.table.children[dense].push(c);
        }
        Ok(dense)
    }

    fn column_of(&mut self, o: &Variable, internal: bool) -> Result<usize, ModelError> {
        if let Some(c) = self.columns.iter().position(|c| c.same(o)) {
            return Ok(c);
        }
        if let Some(s) = self.scratch.iter().position(|c| c.same(o)) {
            return Ok(self.columns.len() + s);
        }
        if !internal {
            return Err(ModelError::UnboundObservable {
                name: o.name().to_string(),
            });
        }
        self.registry.register_observable(o)?;
        self.scratch.push(o.clone());
        Ok(self.columns.len() + self.scratch.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdf;

    fn x() -> Variable {
        Variable::observable("x", -5.0, 5.0).unwrap()
    }

    fn param(name: &str, init: f64) -> Variable {
        Variable::parameter(name, init, 0.1, -10.0, 10.0).unwrap()
    }

    #[test]
    fn registration_order_and_idempotence() {
        let mut reg = ParameterRegistry::new();
        let mean = param("mean", 0.0);
        let sigma = Variable::parameter("sigma", 1.0, 0.1, 0.1, 5.0).unwrap();
        assert_eq!(reg.register_parameter(&mean).unwrap(), 0);
        assert_eq!(reg.register_parameter(&sigma).unwrap(), 1);
        assert_eq!(reg.register_parameter(&mean).unwrap(), 0);
        assert_eq!(reg.register_parameter(&mean.clone()).unwrap(), 0);
        assert_eq!(reg.parameters().len(), 2);
        assert_eq!(reg.values(), vec![0.0, 1.0]);
    }

    #[test]
    fn observable_cannot_be_registered_as_parameter() {
        let mut reg = ParameterRegistry::new();
        assert!(matches!(
            reg.register_parameter(&x()),
            Err(ModelError::WrongRole { .. })
        ));
    }

    #[test]
    fn distinct_variables_with_same_name_collide() {
        let mut reg = ParameterRegistry::new();
        reg.register_parameter(&param("a", 0.0)).unwrap();
        assert!(matches!(
            reg.register_parameter(&param("a", 1.0)),
            Err(ModelError::NameCollision { .. })
        ));
    }

    #[test]
    fn gaussian_slot_layout() {
        let x = x();
        let mean = param("mean", 0.0);
        let sigma = Variable::parameter("sigma", 1.0, 0.1, 0.1, 5.0).unwrap();
        let g = pdf::gaussian("g", &x, &mean, &sigma).unwrap();
        let mut reg = ParameterRegistry::new();
        let table = finalize(&mut reg, Some(&g), &[x]).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.slots(0), &[2, 0, 1, 1, 0]);
        assert_eq!(table.node_slots(g.id()).unwrap(), &[2, 0, 1, 1, 0]);
    }

    #[test]
    fn empty_graph_gives_empty_table() {
        let mut reg = ParameterRegistry::new();
        let table = finalize(&mut reg, None, &[]).unwrap();
        assert!(table.is_empty());
        assert_eq!(table.n_params(), 0);
    }

    #[test]
    fn product_of_independent_exponentials() {
        let xv = Variable::observable("x", 0.0, 10.0).unwrap();
        let yv = Variable::observable("y", 0.0, 10.0).unwrap();
        let ax = param("alpha_x", -2.4);
        let ay = param("alpha_y", -1.1);
        let prod = pdf::product(
            "product",
            vec![
                pdf::exponential("exp_x", &xv, &ax).unwrap(),
                pdf::exponential("exp_y", &yv, &ay).unwrap(),
            ],
        )
        .unwrap();
        let mut reg = ParameterRegistry::new();
        let table = finalize(&mut reg, Some(&prod), &[xv, yv]).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.children(0), &[1, 2]);
        assert_eq!(table.param_index(1, 0).unwrap(), 0);
        assert_eq!(table.param_index(2, 0).unwrap(), 1);
        assert_eq!(table.obs_column(1, 0).unwrap(), 0);
        assert_eq!(table.obs_column(2, 0).unwrap(), 1);
        assert_eq!(table.slots(0), &[0, 2, 0, 1]);
    }

    #[test]
    fn shared_parameter_resolves_to_one_slot() {
        let xv = Variable::observable("x", 0.0, 10.0).unwrap();
        let shared = param("alpha", -1.0);
        let a = pdf::exponential("a", &xv, &shared).unwrap();
        let b = pdf::exponential("b", &xv, &shared).unwrap();
        let (ida, idb) = (a.id(), b.id());
        let prod = pdf::product("p", vec![a, b]).unwrap();
        let mut reg = ParameterRegistry::new();
        let table = finalize(&mut reg, Some(&prod), &[xv]).unwrap();
        assert_eq!(table.n_params(), 1);
        let sa = table.node_slots(ida).unwrap().to_vec();
        let sb = table.node_slots(idb).unwrap().to_vec();
        assert_eq!(sa, sb);
        let params = [-1.5];
        assert_eq!(lookup_param(&table, ida, 0, &params).unwrap(), -1.5);
        assert_eq!(lookup_param(&table, idb, 0, &params).unwrap(), -1.5);
    }

    #[test]
    fn lookup_single_exponential() {
        let xv = Variable::observable("x", 0.0, 10.0).unwrap();
        let alpha = param("alpha", -2.0);
        let e = pdf::exponential("e", &xv, &alpha).unwrap();
        let mut reg = ParameterRegistry::new();
        let table = finalize(&mut reg, Some(&e), &[xv]).unwrap();
        let params = reg.values();
        assert_eq!(lookup_param(&table, e.id(), 0, &params).unwrap(), -2.0);
        assert!(matches!(
            lookup_param(&table, e.id(), 1, &params),
            Err(ModelError::SlotOutOfBounds { slot: 1, len: 1, .. })
        ));
        assert!(matches!(
            lookup_param(&table, e.id(), 0, &[]),
            Err(ModelError::ParameterLength { .. })
        ));
    }

    #[test]
    fn unbound_observable_detected() {
        let xv = Variable::observable("x", 0.0, 10.0).unwrap();
        let yv = Variable::observable("y", 0.0, 10.0).unwrap();
        let e = pdf::exponential("e", &yv, &param("alpha", -1.0)).unwrap();
        let mut reg = ParameterRegistry::new();
        assert!(matches!(
            finalize(&mut reg, Some(&e), &[xv]),
            Err(ModelError::UnboundObservable { name }) if name == "y"
        ));
    }

    #[test]
    fn internal_observables_get_scratch_columns() {
        let xv = Variable::observable("x", 0.0, 1.0).unwrap();
        let u = Variable::observable("u", 0.0, 2.0).unwrap();
        let c0 = Variable::parameter("c0", 0.0, 0.1, -1.0, 1.0).unwrap();
        let c1 = Variable::parameter("c1", 1.0, 0.1, 0.0, 2.0).unwrap();
        let outer = pdf::polynomial("outer", &u, &[c0, c1]).unwrap();
        let inner = pdf::exponential("inner", &xv, &param("alpha", -1.0)).unwrap();
        let comp = pdf::composite("comp", outer, inner).unwrap();
        let mut reg = ParameterRegistry::new();
        let table = finalize(&mut reg, Some(&comp), &[xv]).unwrap();
        assert_eq!(table.n_data_columns(), 1);
        assert_eq!(table.n_columns(), 2);
        assert_eq!(table.obs_column(1, 0).unwrap(), 1);
        assert_eq!(table.obs_column(2, 0).unwrap(), 0);
    }

    #[test]
    fn finalize_is_deterministic() {
        let xv = Variable::observable("x", 0.0, 10.0).unwrap();
        let a = param("a", -1.0);
        let b = param("b", -2.0);
        let f = Variable::parameter("f", 0.5, 0.1, 0.0, 1.0).unwrap();
        let sum = pdf::sum(
            "s",
            vec![
                pdf::exponential("e1", &xv, &a).unwrap(),
                pdf::exponential("e2", &xv, &b).unwrap(),
            ],
            &[f],
        )
        .unwrap();
        let mut r1 = ParameterRegistry::new();
        let mut r2 = ParameterRegistry::new();
        let t1 = finalize(&mut r1, Some(&sum), &[xv.clone()]).unwrap();
        let t2 = finalize(&mut r2, Some(&sum), &[xv]).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(r1.values(), r2.values());
        assert_eq!(r1.values(), vec![0.5, -1.0, -2.0]);
    }
}
