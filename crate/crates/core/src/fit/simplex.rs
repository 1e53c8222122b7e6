//! Nelder-Mead downhill simplex in internal space.
//!
//! Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
//! After the simplex collapses it is rebuilt around the best vertex until a
//! restart no longer improves the minimum.

use super::space::ParameterSpace;
use super::{FitStatus, MinimizeOutcome};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MAX_RESTARTS: usize = 10;

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn combine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

struct Run {
    best: Vec<f64>,
    fbest: f64,
    iterations: usize,
    converged: bool,
}

fn run<F>(f: &mut F, start: &[f64], steps: &[f64], budget: usize, tolerance: f64) -> Run
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += steps[i];
        verts.push(v);
    }
    let mut fv: Vec<f64> = verts.iter().map(|v| finite_or_inf(f(v))).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        let (lo, hi, second) = (order[0], order[n], order[n.saturating_sub(1)]);
        if fv[hi] - fv[lo] <= tolerance * fv[lo].abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&verts[i]) {
                *c += x / n as f64;
            }
        }
        let xr = combine(&centroid, &verts[hi], -REFLECT);
        let fr = finite_or_inf(f(&xr));
        if fr < fv[lo] {
            let xe = combine(&centroid, &xr, EXPAND);
            let fe = finite_or_inf(f(&xe));
            if fe < fr {
                verts[hi] = xe;
                fv[hi] = fe;
            } else {
                verts[hi] = xr;
                fv[hi] = fr;
            }
            continue;
        }
        if fr < fv[second] {
            verts[hi] = xr;
            fv[hi] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < fv[hi] {
            let xc = combine(&centroid, &xr, CONTRACT);
            let fc = finite_or_inf(f(&xc));
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = combine(&centroid, &verts[hi], CONTRACT);
            let fc = finite_or_inf(f(&xc));
            let ok = fc < fv[hi];
            (xc, fc, ok)
        };
        if accept {
            verts[hi] = xc;
            fv[hi] = fc;
            continue;
        }
        let best = verts[lo].clone();
        for i in 0..=n {
            if i != lo {
                verts[i] = combine(&best, &verts[i], SHRINK);
                fv[i] = finite_or_inf(f(&verts[i]));
            }
        }
    }
    let lo = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap_or(0);
    Run {
        best: verts[lo].clone(),
        fbest: fv[lo],
        iterations,
        converged,
    }
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
    let f0 = f(&u0);
    if !f0.is_finite() {
        return MinimizeOutcome::failed(u0, f0, 0, "objective not finite at the starting point");
    }
    let mut best = u0;
    let mut fbest = f0;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..=MAX_RESTARTS {
        let steps = space.internal_steps(&best);
        let r = run(f, &best, &steps, max_iterations - iterations, tolerance);
        iterations += r.iterations;
        let improvement = fbest - r.fbest;
        if r.fbest <= fbest {
            best = r.best;
            fbest = r.fbest;
        }
        converged = r.converged;
        if !converged || improvement <= tolerance * fbest.abs().max(1.0) {
            break;
        }
    }
    let status = if converged {
        FitStatus::Converged
    } else {
        FitStatus::MaxIterations
    };
    MinimizeOutcome {
        status,
        u: best,
        fval: fbest,
        iterations,
        gradient: None,
        message: None,
    }
}
