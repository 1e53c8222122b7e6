//! Fixed-shape summation.
//!
//! Partial sums are carried as unevaluated pairs `hi + lo` (double-double) and
//! combined with error-free transformations. The tree shape depends only on
//! the number of terms, so a sum is reproducible bit for bit regardless of how
//! the terms were produced.

/// Leaf width of the pairwise tree.
const LEAF: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn add_f64(self, x: f64) -> Self {
        let (s, e) = two_sum(self.hi, x);
        if !s.is_finite() {
            return DoubleDouble { hi: s, lo: 0.0 };
        }
        let lo = self.lo + e;
        let (hi, lo) = two_sum(s, lo);
        DoubleDouble { hi, lo }
    }

    #[inline]
    pub fn add(self, other: DoubleDouble) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        if !s.is_finite() {
            return DoubleDouble { hi: s, lo: 0.0 };
        }
        let lo = e + self.lo + other.lo;
        let (hi, lo) = two_sum(s, lo);
        DoubleDouble { hi, lo }
    }

    pub fn value(self) -> f64 {
        if self.hi.is_finite() {
            self.hi + self.lo
        } else {
            self.hi
        }
    }
}

/// Pairwise sum of plain terms.
pub fn pairwise(terms: &[f64]) -> DoubleDouble {
    if terms.len() <= LEAF {
        return terms
            .iter()
            .fold(DoubleDouble::ZERO, |acc, &t| acc.add_f64(t));
    }
    let mid = terms.len() / 2;
    pairwise(&terms[..mid]).add(pairwise(&terms[mid..]))
}

/// Pairwise sum of partial sums.
pub fn pairwise_partials(partials: &[DoubleDouble]) -> DoubleDouble {
    match partials.len() {
        0 => DoubleDouble::ZERO,
        1 => partials[0],
        n => {
            let mid = n / 2;
            pairwise_partials(&partials[..mid]).add(pairwise_partials(&partials[mid..]))
        }
    }
}

/// Fixed-shape pairwise sum of `terms`.
pub fn reduce(terms: &[f64]) -> f64 {
    match terms {
        [] => 0.0,
        [a] => *a,
        _ => pairwise(terms).value(),
    }
}
