//! Named scalars used both as observables (columns of a data set) and as fit
//! parameters.
//!
//! A [`Variable`] is a cheap shared handle. Cloning it yields the same
//! variable, which is how one parameter is shared between several PDF nodes.
//! The current value lives behind the handle so that the snapshot-on-add
//! protocol of the data sets and the write-back after a fit both work through
//! any clone.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariableError {
    #[error("invalid range for `{name}`: lower {lower} must be below upper {upper}")]
    InvalidRange { name: String, lower: f64, upper: f64 },
    #[error("initial value {value} of `{name}` lies outside [{lower}, {upper}]")]
    InitOutOfRange {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid step {step} for `{name}`: must be positive")]
    InvalidStep { name: String, step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Observable,
    Parameter,
}

struct Inner {
    name: String,
    lower: f64,
    upper: f64,
    step: f64,
    role: Role,
    value: AtomicU64,
    fixed: AtomicBool,
}

#[derive(Clone)]
pub struct Variable(Arc<Inner>);

impl Variable {
    /// Observable on `[lower, upper]`, starting at `lower`.
    pub fn observable(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self, VariableError> {
        let name = name.into();
        check_range(&name, lower, upper)?;
        Ok(Self::build(name, lower, lower, upper, 0.0, Role::Observable))
    }

    pub fn parameter(
        name: impl Into<String>,
        init: f64,
        step: f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self, VariableError> {
        let name = name.into();
        check_range(&name, lower, upper)?;
        if !(lower..=upper).contains(&init) {
            return Err(VariableError::InitOutOfRange {
                name,
                value: init,
                lower,
                upper,
            });
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(VariableError::InvalidStep { name, step });
        }
        Ok(Self::build(name, init, lower, upper, step, Role::Parameter))
    }

    fn build(name: String, value: f64, lower: f64, upper: f64, step: f64, role: Role) -> Self {
        Variable(Arc::new(Inner {
            name,
            lower,
            upper,
            step,
            role,
            value: AtomicU64::new(value.to_bits()),
            fixed: AtomicBool::new(false),
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn lower(&self) -> f64 {
        self.0.lower
    }

    pub fn upper(&self) -> f64 {
        self.0.upper
    }

    /// Step size hint for the minimizer; zero for observables.
    pub fn step(&self) -> f64 {
        self.0.step
    }

    pub fn role(&self) -> Role {
        self.0.role
    }

    pub fn is_parameter(&self) -> bool {
        self.0.role == Role::Parameter
    }

    pub fn is_observable(&self) -> bool {
        self.0.role == Role::Observable
    }

    pub fn value(&self) -> f64 {
        f64::from_bits(self.0.value.load(Ordering::Relaxed))
    }

    pub fn set_value(&self, value: f64) {
        self.0.value.store(value.to_bits(), Ordering::Relaxed);
    }

    /// Fixed parameters keep their slot in the parameter vector but are not
    /// varied by the minimizer.
    pub fn is_fixed(&self) -> bool {
        self.0.fixed.load(Ordering::Relaxed)
    }

    pub fn set_fixed(&self, fixed: bool) {
        self.0.fixed.store(fixed, Ordering::Relaxed);
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.0.lower && x <= self.0.upper
    }

    pub fn width(&self) -> f64 {
        self.0.upper - self.0.lower
    }

    /// True when both handles refer to the same variable.
    pub fn same(&self, other: &Variable) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

fn check_range(name: &str, lower: f64, upper: f64) -> Result<(), VariableError> {
    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(VariableError::InvalidRange {
            name: name.to_string(),
            lower,
            upper,
        });
    }
    Ok(())
}

impl fmt::Debug for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Variable")
            .field("name", &self.0.name)
            .field("role", &self.0.role)
            .field("value", &self.value())
            .field("lower", &self.0.lower)
            .field("upper", &self.0.upper)
            .field("step", &self.0.step)
            .field("fixed", &self.is_fixed())
            .finish()
    }
}
