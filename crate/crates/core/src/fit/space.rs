//! Mapping between bounded external parameters and unbounded internal ones.
//!
//! `p = a + (b - a) (sin u + 1) / 2`, so every internal vector maps to a point
//! inside the limits.

use crate::variable::Variable;

/// Largest internal step used for finite differences, in radians.
const MAX_INTERNAL_STEP: f64 = 1.0;

pub fn to_internal(p: f64, lower: f64, upper: f64) -> f64 {
    let s = 2.0 * (p - lower) / (upper - lower) - 1.0;
    s.clamp(-1.0, 1.0).asin()
}

pub fn to_external(u: f64, lower: f64, upper: f64) -> f64 {
    let p = lower + (upper - lower) * (u.sin() + 1.0) / 2.0;
    p.clamp(lower, upper)
}

/// `dp/du` at `u`.
pub fn jacobian(u: f64, lower: f64, upper: f64) -> f64 {
    (upper - lower) / 2.0 * u.cos()
}

#[derive(Debug, Clone, PartialEq)]
struct Dim {
    lower: f64,
    upper: f64,
    step: f64,
}

/// The free parameters of a fit as seen by the minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    dims: Vec<Dim>,
}

impl ParameterSpace {
    pub fn new(limits: &[(f64, f64, f64)]) -> Self {
        ParameterSpace {
            dims: limits
                .iter()
                .map(|&(lower, upper, step)| Dim { lower, upper, step })
                .collect(),
        }
    }

    pub fn from_variables(vars: &[Variable]) -> Self {
        ParameterSpace {
            dims: vars
                .iter()
                .map(|v| Dim {
                    lower: v.lower(),
                    upper: v.upper(),
                    step: v.step(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn limits(&self, i: usize) -> (f64, f64) {
        (self.dims[i].lower, self.dims[i].upper)
    }

    pub fn to_internal(&self, external: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(external)
            .map(|(d, &p)| to_internal(p, d.lower, d.upper))
            .collect()
    }

    pub fn to_external(&self, internal: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(internal)
            .map(|(d, &u)| to_external(u, d.lower, d.upper))
            .collect()
    }

    pub fn jacobian(&self, internal: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(internal)
            .map(|(d, &u)| jacobian(u, d.lower, d.upper))
            .collect()
    }

    /// External step sizes carried to internal space at `u`.
    pub fn internal_steps(&self, internal: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(internal)
            .map(|(d, &u)| {
                let slope = jacobian(u, d.lower, d.upper).abs();
                if slope * MAX_INTERNAL_STEP <= d.step {
                    MAX_INTERNAL_STEP
                } else {
                    d.step / slope
                }
            })
            .collect()
    }

    /// Central-difference steps: `max(1e-7, 1e-4 * internal step)`.
    pub fn gradient_steps(&self, internal: &[f64]) -> Vec<f64> {
        self.internal_steps(internal)
            .into_iter()
            .map(|s| (1e-4 * s).max(1e-7))
            .collect()
    }

    /// Steps for the second-derivative matrix: `max(1e-6, 1e-2 * internal step)`.
    pub fn hessian_steps(&self, internal: &[f64]) -> Vec<f64> {
        self.internal_steps(internal)
            .into_iter()
            .map(|s| (1e-2 * s).max(1e-6))
            .collect()
    }
}

/// Internal starting vector for `vars` from their current values.
pub fn define_parameters(vars: &[Variable]) -> (ParameterSpace, Vec<f64>) {
    let space = ParameterSpace::from_variables(vars);
    let values: Vec<f64> = vars.iter().map(Variable::value).collect();
    let internal = space.to_internal(&values);
    (space, internal)
}
