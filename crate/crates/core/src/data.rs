//! Host-side data containers and the flat evaluation layout.
//!
//! Unbinned data sets are filled by snapshotting the current values of their
//! observables ([`UnbinnedDataSet::add_event`]). Binned data sets hold a
//! uniform grid of contents. Both are turned into an [`EventTable`], a single
//! column-major array of doubles, before evaluation.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::variable::Variable;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("a data set needs at least one observable")]
    NoObservables,
    #[error("observable `{0}` listed twice")]
    DuplicateObservable(String),
    #[error("`{0}` is not an observable")]
    NotObservable(String),
    #[error("expected {expected} values per event, got {actual}")]
    RowLength { expected: usize, actual: usize },
    #[error("{observables} observables but {bins} bin counts")]
    DimensionMismatch { observables: usize, bins: usize },
    #[error("bin count for `{0}` must be at least 1")]
    ZeroBins(String),
    #[error("point {value} outside the range of `{name}` [{lower}, {upper}]")]
    OutOfRange {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("negative or non-finite weight {0}")]
    BadWeight(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_observables(observables: &[Variable]) -> Result<(), DataError> {
    if observables.is_empty() {
        return Err(DataError::NoObservables);
    }
    for (i, o) in observables.iter().enumerate() {
        if !o.is_observable() {
            return Err(DataError::NotObservable(o.name().to_string()));
        }
        if observables[..i]
            .iter()
            .any(|p| p.same(o) || p.name() == o.name())
        {
            return Err(DataError::DuplicateObservable(o.name().to_string()));
        }
    }
    Ok(())
}

/// Events stored row by row in host memory.
#[derive(Debug, Clone)]
pub struct UnbinnedDataSet {
    observables: Vec<Variable>,
    values: Vec<f64>,
}

impl UnbinnedDataSet {
    pub fn new(observables: Vec<Variable>) -> Result<Self, DataError> {
        check_observables(&observables)?;
        Ok(Self {
            observables,
            values: Vec::new(),
        })
    }

    /// Appends one event holding the current value of every observable.
    pub fn add_event(&mut self) {
        self.values
            .extend(self.observables.iter().map(Variable::value));
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), DataError> {
        if row.len() != self.observables.len() {
            return Err(DataError::RowLength {
                expected: self.observables.len(),
                actual: row.len(),
            });
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn observables(&self) -> &[Variable] {
        &self.observables
    }

    pub fn n_events(&self) -> usize {
        self.values.len() / self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, event: usize) -> &[f64] {
        let n = self.observables.len();
        &self.values[event * n..(event + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.observables.len())
    }

    pub fn to_event_table(&self) -> EventTable {
        let n_events = self.n_events();
        let n_columns = self.observables.len();
        let mut values = vec![0.0; n_events * n_columns];
        for (e, row) in self.rows().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                values[c * n_events + e] = v;
            }
        }
        EventTable {
            n_events,
            n_columns,
            values,
        }
    }

    /// Writes the delimited text format: a `#` header naming the observables,
    /// then one comma-separated event per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        let names: Vec<&str> = self.observables.iter().map(Variable::name).collect();
        writeln!(out, "# {}", names.join(","))?;
        let mut line = String::new();
        for row in self.rows() {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                // Display prints the shortest string that parses back to the same bits.
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the delimited text format. Columns are matched to `observables`
    /// by the names in the header, so their order in the file is free.
    pub fn read_text<R: BufRead>(observables: Vec<Variable>, input: R) -> Result<Self, DataError> {
        let mut ds = Self::new(observables)?;
        let mut order: Option<Vec<usize>> = None;
        let mut row = vec![0.0; ds.observables.len()];
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                if order.is_none() {
                    order = Some(ds.header_order(header, lineno)?);
                }
                continue;
            }
            let order = order.as_ref().ok_or_else(|| DataError::Parse {
                line: lineno,
                message: "data before the `#` header".into(),
            })?;
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != order.len() {
                return Err(DataError::Parse {
                    line: lineno,
                    message: format!("expected {} fields, got {}", order.len(), fields.len()),
                });
            }
            for (field, &target) in fields.iter().zip(order) {
                row[target] = field.parse().map_err(|e| DataError::Parse {
                    line: lineno,
                    message: format!("`{field}`: {e}"),
                })?;
            }
            ds.push_row(&row)?;
        }
        Ok(ds)
    }

    fn header_order(&self, header: &str, line: usize) -> Result<Vec<usize>, DataError> {
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        if names.len() != self.observables.len() {
            return Err(DataError::Parse {
                line,
                message: format!(
                    "header names {} columns, expected {}",
                    names.len(),
                    self.observables.len()
                ),
            });
        }
        let mut order = Vec::with_capacity(names.len());
        for name in &names {
            let idx = self
                .observables
                .iter()
                .position(|o| o.name() == *name)
                .ok_or_else(|| DataError::Parse {
                    line,
                    message: format!("unknown observable `{name}` in header"),
                })?;
            if order.contains(&idx) {
                return Err(DataError::DuplicateObservable(name.to_string()));
            }
            order.push(idx);
        }
        Ok(order)
    }
}

/// Uniformly binned contents over the observables' ranges.
///
/// Flattened bin index: observable 0 varies fastest. Bin `b` of observable
/// `i` spans `[lower + b*w, lower + (b+1)*w)`, and the last bin also includes
/// the upper edge.
#[derive(Debug, Clone)]
pub struct BinnedDataSet {
    observables: Vec<Variable>,
    bins: Vec<usize>,
    contents: Vec<f64>,
}

impl BinnedDataSet {
    pub fn new(observables: Vec<Variable>, bins: Vec<usize>) -> Result<Self, DataError> {
        check_observables(&observables)?;
        if observables.len() != bins.len() {
            return Err(DataError::DimensionMismatch {
                observables: observables.len(),
                bins: bins.len(),
            });
        }
        if let Some(i) = bins.iter().position(|&b| b == 0) {
            return Err(DataError::ZeroBins(observables[i].name().to_string()));
        }
        let total = bins.iter().product();
        Ok(Self {
            observables,
            bins,
            contents: vec![0.0; total],
        })
    }

    pub fn observables(&self) -> &[Variable] {
        &self.observables
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn contents(&self) -> &[f64] {
        &self.contents
    }

    pub fn n_bins(&self) -> usize {
        self.contents.len()
    }

    pub fn bin_width(&self, obs: usize) -> f64 {
        self.observables[obs].width() / self.bins[obs] as f64
    }

    pub fn bin_volume(&self) -> f64 {
        (0..self.observables.len()).map(|i| self.bin_width(i)).product()
    }

    pub fn total(&self) -> f64 {
        self.contents.iter().sum()
    }

    /// Index of the bin enclosing `value` along observable `obs`.
    pub fn locate(&self, obs: usize, value: f64) -> Result<usize, DataError> {
        let o = &self.observables[obs];
        if !(value >= o.lower() && value <= o.upper()) {
            return Err(DataError::OutOfRange {
                name: o.name().to_string(),
                value,
                lower: o.lower(),
                upper: o.upper(),
            });
        }
        let n = self.bins[obs];
        let b = ((value - o.lower()) / self.bin_width(obs)).floor() as usize;
        Ok(b.min(n - 1))
    }

    pub fn flat_index(&self, point: &[f64]) -> Result<usize, DataError> {
        if point.len() != self.observables.len() {
            return Err(DataError::RowLength {
                expected: self.observables.len(),
                actual: point.len(),
            });
        }
        let mut idx = 0;
        let mut stride = 1;
        for (i, &v) in point.iter().enumerate() {
            idx += self.locate(i, v)? * stride;
            stride *= self.bins[i];
        }
        Ok(idx)
    }

    pub fn fill(&mut self, point: &[f64]) -> Result<(), DataError> {
        self.fill_weighted(point, 1.0)
    }

    pub fn fill_weighted(&mut self, point: &[f64], weight: f64) -> Result<(), DataError> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(DataError::BadWeight(weight));
        }
        let idx = self.flat_index(point)?;
        self.contents[idx] += weight;
        Ok(())
    }

    pub fn set_content(&mut self, flat: usize, value: f64) -> Result<(), DataError> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(DataError::BadWeight(value));
        }
        self.contents[flat] = value;
        Ok(())
    }

    /// Center coordinates of a flattened bin.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut rest = flat;
        self.observables
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let b = rest % self.bins[i];
                rest /= self.bins[i];
                o.lower() + (b as f64 + 0.5) * self.bin_width(i)
            })
            .collect()
    }

    /// One pseudo-event per bin: center coordinates, then content, then volume.
    pub fn to_event_table(&self) -> EventTable {
        let n_events = self.n_bins();
        let d = self.observables.len();
        let n_columns = d + 2;
        let mut values = vec![0.0; n_events * n_columns];
        let volume = self.bin_volume();
        for e in 0..n_events {
            for (c, x) in self.center(e).into_iter().enumerate() {
                values[c * n_events + e] = x;
            }
            values[d * n_events + e] = self.contents[e];
            values[(d + 1) * n_events + e] = volume;
        }
        EventTable {
            n_events,
            n_columns,
            values,
        }
    }
}

/// Contiguous column-major event store: all events of column 0, then column 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    n_events: usize,
    n_columns: usize,
    values: Vec<f64>,
}

impl EventTable {
    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_events..(c + 1) * self.n_events]
    }

    #[inline]
    pub fn get(&self, event: usize, column: usize) -> f64 {
        self.values[column * self.n_events + event]
    }
}
