use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::kernel::{EvalError, Kernel, Tally};
use super::{GridSpec, Kind, PdfError, PdfNode};
use crate::index::{finalize, IndexTable, ModelError, ParameterRegistry};
use crate::variable::Variable;

#[derive(Debug, Clone)]
struct NormCache {
    fingerprint: Vec<u64>,
    value: f64,
}

/// A finalized PDF graph: parameters registered, index table built against a
/// list of data columns, normalizations cached per node.
#[derive(Debug)]
pub struct Model {
    root: PdfNode,
    registry: ParameterRegistry,
    table: IndexTable,
    grid: GridSpec,
    /// Nodes whose normalization is consumed during evaluation.
    needs_norm: Vec<bool>,
    /// Products whose children have pairwise disjoint observables.
    factorizes: Vec<bool>,
    cache: Mutex<Vec<Option<NormCache>>>,
    clamps: AtomicU64,
}

impl Model {
    /// Finalizes `root` with its own observables as the data columns.
    pub fn new(root: PdfNode) -> Result<Self, PdfError> {
        let columns = root.observables().to_vec();
        Self::with_columns(root, &columns)
    }

    pub fn with_columns(root: PdfNode, columns: &[Variable]) -> Result<Self, PdfError> {
        let mut registry = ParameterRegistry::new();
        let table = finalize(&mut registry, Some(&root), columns)?;
        let n = table.len();
        let mut needs_norm = vec![false; n];
        let mut factorizes = vec![false; n];
        needs_norm[0] = true;
        let mut stack = vec![(&root, 0usize)];
        while let Some((node, k)) = stack.pop() {
            match node.kind() {
                Kind::Sum => {
                    for &c in table.children(k) {
                        needs_norm[c] = true;
                    }
                }
                Kind::Product => {
                    let obs: Vec<&Variable> =
                        node.children().iter().flat_map(|c| c.observables()).collect();
                    factorizes[k] = obs
                        .iter()
                        .enumerate()
                        .all(|(i, a)| obs[..i].iter().all(|b| !b.same(a)));
                }
                _ => {}
            }
            for (child, &c) in node.children().iter().zip(table.children(k)) {
                stack.push((child, c));
            }
        }
        Ok(Model {
            root,
            registry,
            table,
            grid: GridSpec::default(),
            needs_norm,
            factorizes,
            cache: Mutex::new(vec![None; n]),
            clamps: AtomicU64::new(0),
        })
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Self {
        self.set_grid(grid);
        self
    }

    pub fn set_grid(&mut self, grid: GridSpec) {
        self.grid = grid;
        self.cache
            .get_mut()
            .expect("normalization cache poisoned")
            .iter_mut()
            .for_each(|c| *c = None);
    }

    pub fn root(&self) -> &PdfNode {
        &self.root
    }

    pub fn registry(&self) -> &ParameterRegistry {
        &self.registry
    }

    pub fn table(&self) -> &IndexTable {
        &self.table
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn parameters(&self) -> &[Variable] {
        self.registry.parameters()
    }

    /// Current values of the registered parameters.
    pub fn parameter_values(&self) -> Vec<f64> {
        self.registry.values()
    }

    /// Total polynomial clamps seen by evaluations made through this model.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    pub(crate) fn record(&self, tally: Tally) {
        if tally.clamps > 0 {
            self.clamps.fetch_add(tally.clamps, Ordering::Relaxed);
        }
    }

    /// Structural fingerprint of the graph and its index table.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.table.hash(&mut h);
        self.grid.points().hash(&mut h);
        h.finish()
    }

    fn node_at(&self, dense: usize) -> &PdfNode {
        self.root
            .find(self.table.node_id(dense))
            .expect("index table out of sync with graph")
    }

    pub(crate) fn eval_error(&self, e: EvalError) -> PdfError {
        PdfError::Eval {
            node: self.node_at(e.node).name().to_string(),
            kind: e.kind,
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<(), PdfError> {
        if params.len() != self.table.n_params() {
            return Err(ModelError::ParameterLength {
                expected: self.table.n_params(),
                actual: params.len(),
            }
            .into());
        }
        Ok(())
    }

    /// Computes every normalization evaluation depends on, children first.
    /// The root's own normalization is skipped unless `with_root`.
    fn prepare(&self, params: &[f64], with_root: bool) -> Result<Vec<f64>, PdfError> {
        self.check_params(params)?;
        let fingerprint: Vec<u64> = params.iter().map(|p| p.to_bits()).collect();
        let mut norms = vec![f64::NAN; self.table.len()];
        let mut cache = self.cache.lock().expect("normalization cache poisoned");
        for k in (0..self.table.len()).rev() {
            if self.needs_norm[k] && (k > 0 || with_root) {
                self.normalize_dense(k, params, &fingerprint, &mut norms, &mut cache)?;
            }
        }
        Ok(norms)
    }

    fn normalize_dense(
        &self,
        k: usize,
        params: &[f64],
        fingerprint: &[u64],
        norms: &mut [f64],
        cache: &mut [Option<NormCache>],
    ) -> Result<f64, PdfError> {
        if !norms[k].is_nan() {
            return Ok(norms[k]);
        }
        if let Some(c) = &cache[k] {
            if c.fingerprint == fingerprint {
                norms[k] = c.value;
                return Ok(c.value);
            }
        }
        let node = self.node_at(k);
        let value = match node.kind() {
            // Children are normalized and the weights sum to one.
            Kind::Sum => 1.0,
            Kind::Product if self.factorizes[k] => {
                let mut prod = 1.0;
                for &c in self.table.children(k) {
                    prod *= self.normalize_dense(c, params, fingerprint, norms, cache)?;
                }
                prod
            }
            _ => {
                let kernel = Kernel {
                    table: &self.table,
                    params,
                    norms,
                    points: self.grid.points(),
                };
                let mut row = vec![0.0; self.table.n_columns()];
                let mut tally = Tally::default();
                let v = kernel
                    .integrate(node, k, &mut row, &mut tally)
                    .map_err(|e| self.eval_error(e))?;
                self.record(tally);
                v
            }
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(PdfError::ZeroIntegral {
                node: node.name().to_string(),
                value,
            });
        }
        cache[k] = Some(NormCache {
            fingerprint: fingerprint.to_vec(),
            value,
        });
        norms[k] = value;
        Ok(value)
    }

    /// Normalization integral of the root over its observable box.
    pub fn normalize(&self, params: &[f64]) -> Result<f64, PdfError> {
        Ok(self.prepare(params, true)?[0])
    }

    /// Normalization integral of any node of the graph.
    pub fn normalize_node(&self, node: super::NodeId, params: &[f64]) -> Result<f64, PdfError> {
        let k = self.table.dense_index(node)?;
        let mut norms = self.prepare(params, false)?;
        let fingerprint: Vec<u64> = params.iter().map(|p| p.to_bits()).collect();
        let mut cache = self.cache.lock().expect("normalization cache poisoned");
        self.normalize_dense(k, params, &fingerprint, &mut norms, &mut cache)
    }

    /// Frozen evaluation state for one parameter vector.
    pub fn evaluator(&self, params: &[f64]) -> Result<Evaluator<'_>, PdfError> {
        self.evaluator_with(params, true)
    }

    fn evaluator_with(&self, params: &[f64], with_root: bool) -> Result<Evaluator<'_>, PdfError> {
        let norms = self.prepare(params, with_root)?;
        Ok(Evaluator {
            model: self,
            params: params.to_vec(),
            norms,
        })
    }

    /// Unnormalized root value at `row`.
    pub fn raw_eval(&self, row: &[f64], params: &[f64]) -> Result<f64, PdfError> {
        self.evaluator_with(params, false)?.raw(row)
    }

    pub fn raw_eval_node(
        &self,
        node: super::NodeId,
        row: &[f64],
        params: &[f64],
    ) -> Result<f64, PdfError> {
        let k = self.table.dense_index(node)?;
        self.evaluator_with(params, false)?.raw_at(k, row)
    }

    /// Normalized density of the root at `row`.
    pub fn density(&self, row: &[f64], params: &[f64]) -> Result<f64, PdfError> {
        self.evaluator(params)?.density(row)
    }
}

/// Parameters and normalizations frozen for repeated evaluation; shareable
/// across worker threads.
#[derive(Debug)]
pub struct Evaluator<'m> {
    model: &'m Model,
    params: Vec<f64>,
    norms: Vec<f64>,
}

impl Evaluator<'_> {
    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Root normalization.
    pub fn norm(&self) -> f64 {
        self.norms[0]
    }

    fn kernel(&self) -> Kernel<'_> {
        Kernel {
            table: &self.model.table,
            params: &self.params,
            norms: &self.norms,
            points: self.model.grid.points(),
        }
    }

    /// Allocates a row buffer wide enough for data and scratch columns.
    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.model.table.n_columns()]
    }

    /// Root raw value; the data columns of `scratch` must already be filled.
    #[inline]
    pub(crate) fn raw_in_place(&self, scratch: &mut [f64], tally: &mut Tally) -> Result<f64, EvalError> {
        self.kernel().raw(&self.model.root, 0, scratch, tally)
    }

    fn raw_at(&self, k: usize, row: &[f64]) -> Result<f64, PdfError> {
        let n = self.model.table.n_data_columns();
        if row.len() != n {
            return Err(PdfError::RowLength {
                expected: n,
                actual: row.len(),
            });
        }
        let mut scratch = self.scratch();
        scratch[..n].copy_from_slice(row);
        let mut tally = Tally::default();
        let node = self.model.node_at(k);
        let v = self
            .kernel()
            .raw(node, k, &mut scratch, &mut tally)
            .map_err(|e| self.model.eval_error(e));
        self.model.record(tally);
        v
    }

    pub fn raw(&self, row: &[f64]) -> Result<f64, PdfError> {
        self.raw_at(0, row)
    }

    pub fn density(&self, row: &[f64]) -> Result<f64, PdfError> {
        Ok(self.raw(row)? / self.norm())
    }

    /// Plain midpoint sum of the root raw kernel with `points` per axis.
    pub fn midpoint_integral(&self, points: usize) -> Result<f64, PdfError> {
        let mut scratch = self.scratch();
        let mut tally = Tally::default();
        let v = self
            .kernel()
            .midpoint(&self.model.root, 0, &mut scratch, &mut tally, points)
            .map_err(|e| self.model.eval_error(e));
        self.model.record(tally);
        v
    }
}
