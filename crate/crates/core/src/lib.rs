//! Composable probability densities with parallel likelihood evaluation and
//! bounded minimization.

pub mod data;
pub mod engine;
pub mod fit;
pub mod index;
pub mod pdf;
pub mod sum;
pub mod variable;

pub use data::{BinnedDataSet, DataError, EventTable, UnbinnedDataSet};
pub use engine::{set_data, Backend, BackendKind, BoundModel, DataRef, EngineError, MetricKind, MetricValue};
pub use fit::{fit, FitConfig, FitError, FitResult, FitStatus, MinimizerKind, ParameterResult};
pub use index::{IndexTable, ModelError, ParameterRegistry};
pub use pdf::{Edge, GridSpec, Model, NodeId, PdfError, PdfNode};
pub use variable::{Role, Variable, VariableError};
