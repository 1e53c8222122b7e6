use std::fmt;

use super::{Boundary, Kind, PdfNode};
use crate::index::IndexTable;
use crate::sum::DoubleDouble;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalErrorKind {
    NonPositiveSigma(f64),
    NonPositiveWidth(f64),
    FractionSum(f64),
    NegativeFraction(f64),
    NonMonotoneBoundaries,
    OutsideRegions(f64),
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalErrorKind::NonPositiveSigma(s) => write!(f, "sigma {s} is not positive"),
            EvalErrorKind::NonPositiveWidth(w) => write!(f, "width {w} is not positive"),
            EvalErrorKind::FractionSum(s) => write!(f, "fractions sum to {s} > 1"),
            EvalErrorKind::NegativeFraction(v) => write!(f, "fraction {v} is negative"),
            EvalErrorKind::NonMonotoneBoundaries => write!(f, "region boundaries not increasing"),
            EvalErrorKind::OutsideRegions(x) => write!(f, "x = {x} lies outside all regions"),
        }
    }
}

/// Evaluation failure inside node `node` (dense index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalError {
    pub node: usize,
    pub kind: EvalErrorKind,
}

/// Per-worker diagnostic counters.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    /// Polynomial evaluations clamped to zero.
    pub clamps: u64,
}

impl Tally {
    pub fn merge(&mut self, other: Tally) {
        self.clamps += other.clamps;
    }
}

/// Read-only evaluation context: index table, parameter vector and the
/// normalizations needed by sum nodes (indexed by dense node index).
pub(crate) struct Kernel<'a> {
    pub table: &'a IndexTable,
    pub params: &'a [f64],
    pub norms: &'a [f64],
    pub points: usize,
}

impl Kernel<'_> {
    #[inline]
    fn fail(node: usize, kind: EvalErrorKind) -> EvalError {
        EvalError { node, kind }
    }

    /// Raw kernel of `node` (dense index `k`) at `row`. Combinators may
    /// overwrite columns of `row` while recursing; they restore them before
    /// returning successfully.
    pub fn raw(
        &self,
        node: &PdfNode,
        k: usize,
        row: &mut [f64],
        tally: &mut Tally,
    ) -> Result<f64, EvalError> {
        let t = self.table;
        let p = self.params;
        match node.kind() {
            Kind::Exponential => {
                let x = row[t.column(k, 0)];
                let alpha = t.param(k, 0, p);
                Ok((alpha * x).exp())
            }
            Kind::Gaussian => {
                let x = row[t.column(k, 0)];
                let mean = t.param(k, 0, p);
                let sigma = t.param(k, 1, p);
                if !(sigma > 0.0) {
                    return Err(Self::fail(k, EvalErrorKind::NonPositiveSigma(sigma)));
                }
                Ok((-0.5 * (x - mean) * (x - mean) / (sigma * sigma)).exp())
            }
            Kind::BreitWigner => {
                let x = row[t.column(k, 0)];
                let m = t.param(k, 0, p);
                let w = t.param(k, 1, p);
                if !(w > 0.0) {
                    return Err(Self::fail(k, EvalErrorKind::NonPositiveWidth(w)));
                }
                let d = x * x - m * m;
                Ok(1.0 / (d * d + m * m * w * w))
            }
            Kind::Polynomial => {
                let x = row[t.column(k, 0)];
                let n = t.node_param_count(k);
                let mut acc = t.param(k, n - 1, p);
                for i in (0..n - 1).rev() {
                    acc = acc * x + t.param(k, i, p);
                }
                if acc < 0.0 {
                    tally.clamps += 1;
                    return Ok(0.0);
                }
                Ok(acc)
            }
            Kind::Product => {
                let mut prod = 1.0;
                for (child, &ck) in node.children().iter().zip(t.children(k)) {
                    prod *= self.raw(child, ck, row, tally)?;
                }
                Ok(prod)
            }
            Kind::Sum => {
                let n = node.children().len();
                let mut fsum = 0.0;
                for i in 0..n - 1 {
                    let f = t.param(k, i, p);
                    if f < 0.0 {
                        return Err(Self::fail(k, EvalErrorKind::NegativeFraction(f)));
                    }
                    fsum += f;
                }
                if fsum > 1.0 {
                    return Err(Self::fail(k, EvalErrorKind::FractionSum(fsum)));
                }
                let mut acc = 0.0;
                for (i, (child, &ck)) in node.children().iter().zip(t.children(k)).enumerate() {
                    let w = if i + 1 < n { t.param(k, i, p) } else { 1.0 - fsum };
                    acc += w * self.raw(child, ck, row, tally)? / self.norms[ck];
                }
                Ok(acc)
            }
            Kind::Composite => {
                let (outer, inner) = (&node.children()[0], &node.children()[1]);
                let (ko, ki) = (t.children(k)[0], t.children(k)[1]);
                let g = self.raw(inner, ki, row, tally)?;
                let c = t.column(ko, 0);
                let saved = row[c];
                row[c] = g;
                let v = self.raw(outer, ko, row, tally);
                row[c] = saved;
                v
            }
            Kind::Mapped(bounds) => {
                let x = row[t.column(k, 0)];
                let edge = |i: usize| match bounds[i] {
                    Boundary::Fixed(v) => v,
                    Boundary::Param(s) => t.param(k, s, p),
                };
                let n = bounds.len() - 1;
                for i in 0..n {
                    if !(edge(i) < edge(i + 1)) {
                        return Err(Self::fail(k, EvalErrorKind::NonMonotoneBoundaries));
                    }
                }
                if !(x >= edge(0) && x <= edge(n)) {
                    return Err(Self::fail(k, EvalErrorKind::OutsideRegions(x)));
                }
                let region = (0..n).find(|&i| x < edge(i + 1)).unwrap_or(n - 1);
                self.raw(&node.children()[region], t.children(k)[region], row, tally)
            }
            Kind::Convolution => {
                let (model, res) = (&node.children()[0], &node.children()[1]);
                let (km, kr) = (t.children(k)[0], t.children(k)[1]);
                let cm = t.column(km, 0);
                let cr = t.column(kr, 0);
                let range = &node.observables()[0];
                let x = row[cm];
                let saved = row[cr];
                let n = self.points;
                let h = range.width() / n as f64;
                let mut acc = DoubleDouble::ZERO;
                let mut status = Ok(());
                for j in 0..n {
                    let tau = range.lower() + (j as f64 + 0.5) * h;
                    row[cm] = tau;
                    let mv = match self.raw(model, km, row, tally) {
                        Ok(v) => v,
                        Err(e) => {
                            status = Err(e);
                            break;
                        }
                    };
                    if mv == 0.0 {
                        continue;
                    }
                    row[cr] = x - tau;
                    match self.raw(res, kr, row, tally) {
                        Ok(rv) => acc = acc.add_f64(mv * rv),
                        Err(e) => {
                            status = Err(e);
                            break;
                        }
                    }
                }
                row[cr] = saved;
                row[cm] = x;
                status.map(|()| acc.value() * h)
            }
        }
    }

    /// Normalization integral of the raw kernel over the node's observable
    /// box: midpoint sums at `n` and `n/2` points per axis combined by
    /// Richardson extrapolation (plain midpoint for odd `n`). Piecewise nodes
    /// are integrated region by region so no grid cell straddles a jump.
    pub fn integrate(
        &self,
        node: &PdfNode,
        k: usize,
        row: &mut [f64],
        tally: &mut Tally,
    ) -> Result<f64, EvalError> {
        let boxes: Vec<Vec<(f64, f64)>> = match node.kind() {
            Kind::Mapped(bounds) => {
                let edges = self.edges(k, bounds)?;
                let range = &node.observables()[0];
                edges
                    .windows(2)
                    .map(|w| (w[0].max(range.lower()), w[1].min(range.upper())))
                    .filter(|(a, b)| a < b)
                    .map(|r| vec![r])
                    .collect()
            }
            _ => vec![node
                .observables()
                .iter()
                .map(|o| (o.lower(), o.upper()))
                .collect()],
        };
        let n = self.points;
        let mut total = DoubleDouble::ZERO;
        for b in &boxes {
            let fine = self.midpoint_in(node, k, row, tally, n, b)?;
            let v = if n % 2 == 0 {
                let coarse = self.midpoint_in(node, k, row, tally, n / 2, b)?;
                (4.0 * fine - coarse) / 3.0
            } else {
                fine
            };
            total = total.add_f64(v);
        }
        Ok(total.value())
    }

    fn edges(&self, k: usize, bounds: &[Boundary]) -> Result<Vec<f64>, EvalError> {
        let edges: Vec<f64> = bounds
            .iter()
            .map(|b| match *b {
                Boundary::Fixed(v) => v,
                Boundary::Param(s) => self.table.param(k, s, self.params),
            })
            .collect();
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Self::fail(k, EvalErrorKind::NonMonotoneBoundaries));
        }
        Ok(edges)
    }

    /// Tensor-product midpoint sum with `n` points per observable.
    pub fn midpoint(
        &self,
        node: &PdfNode,
        k: usize,
        row: &mut [f64],
        tally: &mut Tally,
        n: usize,
    ) -> Result<f64, EvalError> {
        let b: Vec<(f64, f64)> = node
            .observables()
            .iter()
            .map(|o| (o.lower(), o.upper()))
            .collect();
        self.midpoint_in(node, k, row, tally, n, &b)
    }

    fn midpoint_in(
        &self,
        node: &PdfNode,
        k: usize,
        row: &mut [f64],
        tally: &mut Tally,
        n: usize,
        bounds: &[(f64, f64)],
    ) -> Result<f64, EvalError> {
        let cols: Vec<usize> = (0..bounds.len()).map(|i| self.table.column(k, i)).collect();
        let steps: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / n as f64).collect();
        let cell: f64 = steps.iter().product();
        let mut idx = vec![0usize; bounds.len()];
        let mut acc = DoubleDouble::ZERO;
        'grid: loop {
            for (i, (lo, _)) in bounds.iter().enumerate() {
                row[cols[i]] = lo + (idx[i] as f64 + 0.5) * steps[i];
            }
            acc = acc.add_f64(self.raw(node, k, row, tally)?);
            for i in 0..idx.len() {
                idx[i] += 1;
                if idx[i] < n {
                    continue 'grid;
                }
                idx[i] = 0;
            }
            break;
        }
        Ok(acc.value() * cell)
    }
}
