//! Data-parallel metric evaluation.
//!
//! Events are cut into fixed-size chunks. Each chunk is evaluated by one
//! worker into a private double-double partial, and the partials are combined
//! by a pairwise tree whose shape depends only on the number of chunks. The
//! result is therefore bit-identical for every backend and thread count.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{BinnedDataSet, EventTable, UnbinnedDataSet};
use crate::pdf::{Evaluator, Model, PdfError, PdfNode, Tally};
use crate::sum::{pairwise, pairwise_partials, DoubleDouble};
use crate::variable::Variable;

/// Environment variable overriding the default worker count.
pub const THREADS_ENV: &str = "PARFIT_THREADS";

/// Densities below this value are floored before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-300;

/// Lower bound on the expected count in the chi-squared denominator.
pub const CHI2_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Pdf(#[from] PdfError),
    #[error("event {event}: {source}")]
    Event { event: usize, source: PdfError },
    #[error("non-finite metric contribution at event {event}")]
    NonFinite { event: usize },
    #[error("chi-squared needs binned data")]
    ChiSquaredNeedsBins,
    #[error("thread count must be positive")]
    ZeroThreads,
    #[error("chunk size must be positive")]
    ZeroChunk,
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("invalid {THREADS_ENV} value `{0}`")]
    BadEnv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    Serial,
    Threads(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Backend {
    kind: BackendKind,
    chunk_size: usize,
}

impl Backend {
    pub const DEFAULT_CHUNK: usize = 4096;

    pub fn serial() -> Self {
        Backend {
            kind: BackendKind::Serial,
            chunk_size: Self::DEFAULT_CHUNK,
        }
    }

    pub fn threads(n: usize) -> Result<Self, EngineError> {
        if n == 0 {
            return Err(EngineError::ZeroThreads);
        }
        Ok(Backend {
            kind: BackendKind::Threads(n),
            chunk_size: Self::DEFAULT_CHUNK,
        })
    }

    /// Worker pool sized by `PARFIT_THREADS`, or by the available parallelism.
    pub fn from_env() -> Result<Self, EngineError> {
        Self::threads(default_threads()?)
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Result<Self, EngineError> {
        if chunk_size == 0 {
            return Err(EngineError::ZeroChunk);
        }
        self.chunk_size = chunk_size;
        Ok(self)
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn workers(&self) -> usize {
        match self.kind {
            BackendKind::Serial => 1,
            BackendKind::Threads(n) => n,
        }
    }

    /// Evaluates `f` on chunks `0..n_chunks`, returning results in chunk order.
    pub fn map_chunks<T, F>(&self, n_chunks: usize, f: F) -> Result<Vec<T>, EngineError>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self.kind {
            BackendKind::Serial => Ok((0..n_chunks).map(f).collect()),
            BackendKind::Threads(n) => {
                let pool = pool(n)?;
                Ok(pool.install(|| (0..n_chunks).into_par_iter().map(f).collect()))
            }
        }
    }
}

impl Default for Backend {
    fn default() -> Self {
        Self::serial()
    }
}

/// Worker count from `PARFIT_THREADS`, falling back to available parallelism.
pub fn default_threads() -> Result<usize, EngineError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(EngineError::BadEnv(v)),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn pool(n: usize) -> Result<Arc<rayon::ThreadPool>, EngineError> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(Default::default)
        .lock()
        .expect("pool registry poisoned");
    if let Some(p) = pools.get(&n) {
        return Ok(p.clone());
    }
    let p = Arc::new(
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .thread_name(move |i| format!("parfit-{n}-{i}"))
            .build()
            .map_err(|e| EngineError::Pool(e.to_string()))?,
    );
    pools.insert(n, p.clone());
    Ok(p)
}

/// Sum of `terms` with the same chunking and tree as metric evaluation.
pub fn reduce_with(backend: &Backend, terms: &[f64]) -> Result<f64, EngineError> {
    let chunk = backend.chunk_size;
    let n_chunks = terms.len().div_ceil(chunk);
    let partials = backend.map_chunks(n_chunks, |c| {
        pairwise(&terms[c * chunk..((c + 1) * chunk).min(terms.len())])
    })?;
    Ok(pairwise_partials(&partials).value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    NegativeLogLikelihood,
    ChiSquared,
}

impl MetricKind {
    /// Metric change corresponding to one standard deviation.
    pub fn error_def(&self) -> f64 {
        match self {
            MetricKind::NegativeLogLikelihood => 0.5,
            MetricKind::ChiSquared => 1.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MetricKind::NegativeLogLikelihood => "nll",
            MetricKind::ChiSquared => "chi2",
        }
    }
}

/// Source data for [`set_data`].
#[derive(Debug, Clone, Copy)]
pub enum DataRef<'a> {
    Unbinned(&'a UnbinnedDataSet),
    Binned(&'a BinnedDataSet),
}

impl<'a> From<&'a UnbinnedDataSet> for DataRef<'a> {
    fn from(d: &'a UnbinnedDataSet) -> Self {
        DataRef::Unbinned(d)
    }
}

impl<'a> From<&'a BinnedDataSet> for DataRef<'a> {
    fn from(d: &'a BinnedDataSet) -> Self {
        DataRef::Binned(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    /// Events whose density was floored at [`LOG_FLOOR`].
    pub floors: u64,
    /// Polynomial evaluations clamped to zero.
    pub clamps: u64,
}

/// Model finalized against a data set and holding its flat event table.
#[derive(Debug)]
pub struct BoundModel {
    model: Model,
    events: EventTable,
    observables: Vec<Variable>,
    binned: bool,
    total: f64,
}

/// Binds `pdf` to a data set: builds the event table, finalizes the index
/// table and resolves every observable to its column.
pub fn set_data<'a>(pdf: PdfNode, data: impl Into<DataRef<'a>>) -> Result<BoundModel, EngineError> {
    let (observables, events, binned) = match data.into() {
        DataRef::Unbinned(d) => (d.observables().to_vec(), d.to_event_table(), false),
        DataRef::Binned(d) => (d.observables().to_vec(), d.to_event_table(), true),
    };
    let model = Model::with_columns(pdf, &observables)?;
    let total = if binned {
        crate::sum::reduce(events.column(observables.len()))
    } else {
        events.n_events() as f64
    };
    Ok(BoundModel {
        model,
        events,
        observables,
        binned,
        total,
    })
}

struct Partial {
    sum: DoubleDouble,
    floors: u64,
    tally: Tally,
    error: Option<EngineError>,
}

impl BoundModel {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn events(&self) -> &EventTable {
        &self.events
    }

    pub fn observables(&self) -> &[Variable] {
        &self.observables
    }

    pub fn n_events(&self) -> usize {
        self.events.n_events()
    }

    pub fn is_binned(&self) -> bool {
        self.binned
    }

    /// Number of events (unbinned) or total bin content (binned).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn parameters(&self) -> &[Variable] {
        self.model.parameters()
    }

    pub fn eval_metric(
        &self,
        params: &[f64],
        metric: MetricKind,
        backend: &Backend,
    ) -> Result<f64, EngineError> {
        Ok(self.eval_metric_detailed(params, metric, backend)?.value)
    }

    /// Negative log-likelihood or Pearson chi-squared at `params`.
    ///
    /// For binned data the likelihood weights each bin center by its content.
    pub fn eval_metric_detailed(
        &self,
        params: &[f64],
        metric: MetricKind,
        backend: &Backend,
    ) -> Result<MetricValue, EngineError> {
        if metric == MetricKind::ChiSquared && !self.binned {
            return Err(EngineError::ChiSquaredNeedsBins);
        }
        let eval = self.model.evaluator(params)?;
        let n = self.events.n_events();
        let chunk = backend.chunk_size;
        let n_chunks = n.div_ceil(chunk);
        let partials = backend.map_chunks(n_chunks, |c| {
            self.chunk(&eval, metric, c * chunk, ((c + 1) * chunk).min(n))
        })?;

        let mut floors = 0;
        let mut tally = Tally::default();
        let mut sums = Vec::with_capacity(partials.len());
        for p in partials {
            if let Some(e) = p.error {
                return Err(e);
            }
            floors += p.floors;
            tally.merge(p.tally);
            sums.push(p.sum);
        }
        self.model.record(tally);
        let value = pairwise_partials(&sums).value();
        if !value.is_finite() {
            return Err(EngineError::NonFinite { event: n.saturating_sub(1) });
        }
        Ok(MetricValue {
            value,
            floors,
            clamps: tally.clamps,
        })
    }

    fn chunk(&self, eval: &Evaluator<'_>, metric: MetricKind, start: usize, end: usize) -> Partial {
        let d = self.observables.len();
        let norm = eval.norm();
        let mut scratch = eval.scratch();
        let mut terms = Vec::with_capacity(end - start);
        let mut floors = 0;
        let mut tally = Tally::default();
        for e in start..end {
            for (c, slot) in scratch[..d].iter_mut().enumerate() {
                *slot = self.events.get(e, c);
            }
            let raw = match eval.raw_in_place(&mut scratch, &mut tally) {
                Ok(v) => v,
                Err(err) => {
                    return Partial {
                        sum: DoubleDouble::ZERO,
                        floors,
                        tally,
                        error: Some(EngineError::Event {
                            event: e,
                            source: self.model.eval_error(err),
                        }),
                    }
                }
            };
            let term = match metric {
                MetricKind::NegativeLogLikelihood => {
                    let mut density = raw / norm;
                    if density < LOG_FLOOR {
                        density = LOG_FLOOR;
                        floors += 1;
                    }
                    let nll = -density.ln();
                    if self.binned {
                        self.events.get(e, d) * nll
                    } else {
                        nll
                    }
                }
                MetricKind::ChiSquared => {
                    let content = self.events.get(e, d);
                    let volume = self.events.get(e, d + 1);
                    let expected = self.total * (raw / norm) * volume;
                    let diff = content - expected;
                    diff * diff / expected.max(CHI2_EPSILON)
                }
            };
            if !term.is_finite() {
                return Partial {
                    sum: DoubleDouble::ZERO,
                    floors,
                    tally,
                    error: Some(EngineError::NonFinite { event: e }),
                };
            }
            terms.push(term);
        }
        Partial {
            sum: pairwise(&terms),
            floors,
            tally,
            error: None,
        }
    }
}
