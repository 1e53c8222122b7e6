//! BFGS in internal space with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};

use super::numeric::{numeric_gradient, NumericGradient};
use super::space::ParameterSpace;
use super::{FitStatus, MinimizeOutcome};

pub const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Largest internal coordinate change proposed by a full step.
const MAX_STEP: f64 = 1.0;

fn seed_inverse(g: &NumericGradient, space: &ParameterSpace, u: &[f64]) -> DMatrix<f64> {
    let steps = space.internal_steps(u);
    DMatrix::from_diagonal(&DVector::from_iterator(
        u.len(),
        g.second.iter().zip(&steps).map(|(&g2, &s)| {
            if g2.is_finite() && g2 > 0.0 {
                1.0 / g2
            } else {
                s * s
            }
        }),
    ))
}

fn direction(hinv: &DMatrix<f64>, g: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let mut d = -(hinv * g);
    let biggest = d.amax();
    if !biggest.is_finite() {
        return None;
    }
    if biggest > MAX_STEP {
        d *= MAX_STEP / biggest;
    }
    let slope = g.dot(&d);
    (slope < 0.0).then_some((d, slope))
}

pub fn minimize<F>(
    f: &mut F,
    space: &ParameterSpace,
    u0: Vec<f64>,
    max_iterations: usize,
    tolerance: f64,
) -> MinimizeOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let mut u = u0;
    let mut fu = f(&u);
    if !fu.is_finite() {
        return MinimizeOutcome::failed(u, fu, 0, "objective not finite at the starting point");
    }
    let mut g = numeric_gradient(f, &u, fu, &space.gradient_steps(&u));
    let mut hinv = seed_inverse(&g, space, &u);
    let mut just_reset = false;

    for iter in 0..max_iterations {
        if g.max_norm() <= tolerance {
            return MinimizeOutcome {
                status: FitStatus::Converged,
                u,
                fval: fu,
                iterations: iter,
                gradient: Some(g),
                message: None,
            };
        }
        let gv = DVector::from_column_slice(&g.grad);
        let (d, slope) = match direction(&hinv, &gv) {
            Some(ds) => ds,
            None => {
                hinv = seed_inverse(&g, space, &u);
                match direction(&hinv, &gv) {
                    Some(ds) => ds,
                    None => {
                        return MinimizeOutcome::failed(u, fu, iter, "no descent direction")
                    }
                }
            }
        };

        // Rounding-level increases are accepted so that steps near the
        // optimum, where the metric is flat to machine precision, still land.
        let slack = 4.0 * f64::EPSILON * fu.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fu + ARMIJO_C * t * slope + slack {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }

        let Some((next, fnext)) = accepted else {
            if just_reset {
                return MinimizeOutcome {
                    status: FitStatus::Failed,
                    u,
                    fval: fu,
                    iterations: iter,
                    gradient: Some(g),
                    message: Some("line search failed after resetting the curvature estimate".into()),
                };
            }
            hinv = seed_inverse(&g, space, &u);
            just_reset = true;
            continue;
        };
        just_reset = false;

        let gnext = numeric_gradient(f, &next, fnext, &space.gradient_steps(&next));
        let s = DVector::from_iterator(u.len(), next.iter().zip(&u).map(|(a, b)| a - b));
        let y = DVector::from_iterator(u.len(), gnext.grad.iter().zip(&g.grad).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy.is_finite() && sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let n = u.len();
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            hinv = left * hinv * right + rho * &s * s.transpose();
        }
        u = next;
        fu = fnext;
        g = gnext;
    }

    let status = if g.max_norm() <= tolerance {
        FitStatus::Converged
    } else {
        FitStatus::MaxIterations
    };
    MinimizeOutcome {
        status,
        u,
        fval: fu,
        iterations: max_iterations,
        gradient: Some(g),
        message: None,
    }
}
