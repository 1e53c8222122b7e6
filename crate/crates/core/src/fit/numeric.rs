//! Finite-difference derivatives of an objective in internal space.

use nalgebra::DMatrix;

/// Central-difference gradient with the diagonal second derivatives that
/// fall out of the same probes.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericGradient {
    pub grad: Vec<f64>,
    /// `(f(u+h) - 2 f(u) + f(u-h)) / h^2`, NaN when a probe was not finite.
    pub second: Vec<f64>,
    /// Coordinates where a non-finite probe forced a one-sided difference.
    pub one_sided: Vec<bool>,
    pub calls: usize,
}

impl NumericGradient {
    pub fn max_norm(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn any_one_sided(&self) -> bool {
        self.one_sided.iter().any(|&b| b)
    }
}

/// Central differences of `f` at `u` with per-coordinate steps `h`; `f0` is
/// `f(u)`.
pub fn numeric_gradient<F>(f: &mut F, u: &[f64], f0: f64, h: &[f64]) -> NumericGradient
where
    F: FnMut(&[f64]) -> f64,
{
    let n = u.len();
    let mut grad = vec![0.0; n];
    let mut second = vec![f64::NAN; n];
    let mut one_sided = vec![false; n];
    let mut probe = u.to_vec();
    let mut calls = 0;
    for i in 0..n {
        probe[i] = u[i] + h[i];
        let up = f(&probe);
        probe[i] = u[i] - h[i];
        let down = f(&probe);
        probe[i] = u[i];
        calls += 2;
        match (up.is_finite(), down.is_finite()) {
            (true, true) => {
                grad[i] = (up - down) / (2.0 * h[i]);
                second[i] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
            }
            (true, false) => {
                grad[i] = (up - f0) / h[i];
                one_sided[i] = true;
            }
            (false, true) => {
                grad[i] = (f0 - down) / h[i];
                one_sided[i] = true;
            }
            (false, false) => one_sided[i] = true,
        }
    }
    NumericGradient {
        grad,
        second,
        one_sided,
        calls,
    }
}

/// Finite-difference matrix of second derivatives at `u`.
pub fn hessian<F>(f: &mut F, u: &[f64], f0: f64, h: &[f64]) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = u.len();
    let mut m = DMatrix::zeros(n, n);
    let mut probe = u.to_vec();
    for i in 0..n {
        probe[i] = u[i] + h[i];
        let up = f(&probe);
        probe[i] = u[i] - h[i];
        let down = f(&probe);
        probe[i] = u[i];
        m[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = u[i] + si * h[i];
                probe[j] = u[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = u[i];
                probe[j] = u[j];
                v
            };
            let pp = corner(1.0, 1.0);
            let pm = corner(1.0, -1.0);
            let mp = corner(-1.0, 1.0);
            let mm = corner(-1.0, -1.0);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceStatus {
    Available,
    NotPositiveDefinite,
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub status: CovarianceStatus,
    /// `2 * error_def * H^-1` in internal space when available.
    pub matrix: Option<DMatrix<f64>>,
    pub hessian: DMatrix<f64>,
}

/// Covariance from the inverse finite-difference Hessian at a minimum.
///
/// `error_def` is the objective change for one standard deviation: 0.5 for a
/// negative log-likelihood, 1 for a chi-squared.
pub fn covariance<F>(f: &mut F, u: &[f64], f0: f64, h: &[f64], error_def: f64) -> Covariance
where
    F: FnMut(&[f64]) -> f64,
{
    let hess = hessian(f, u, f0, h);
    covariance_from_hessian(hess, error_def)
}

pub fn covariance_from_hessian(hess: DMatrix<f64>, error_def: f64) -> Covariance {
    let unavailable = |status, hessian| Covariance {
        status,
        matrix: None,
        hessian,
    };
    if hess.iter().any(|v| !v.is_finite()) {
        return unavailable(CovarianceStatus::Singular, hess);
    }
    let eigen = hess.clone().symmetric_eigen().eigenvalues;
    let max = eigen.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eigen.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max == 0.0 || min.abs() <= 1e-14 * max {
        return unavailable(CovarianceStatus::Singular, hess);
    }
    if min < 0.0 {
        return unavailable(CovarianceStatus::NotPositiveDefinite, hess);
    }
    match hess.clone().cholesky() {
        Some(chol) => Covariance {
            status: CovarianceStatus::Available,
            matrix: Some(chol.inverse() * (2.0 * error_def)),
            hessian: hess,
        },
        None => unavailable(CovarianceStatus::NotPositiveDefinite, hess),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut f = |u: &[f64]| 3.0 * u[0] * u[0] - 2.0 * u[0] * u[1] + 0.5 * u[1] * u[1] + u[1];
        let u = [0.7, -1.3];
        let f0 = f(&u);
        let g = numeric_gradient(&mut f, &u, f0, &[1e-4, 1e-4]);
        let exact = [6.0 * u[0] - 2.0 * u[1], -2.0 * u[0] + u[1] + 1.0];
        for i in 0..2 {
            assert!((g.grad[i] - exact[i]).abs() < 1e-6, "{:?}", g.grad);
        }
        assert!((g.second[0] - 6.0).abs() < 1e-3);
        assert!((g.second[1] - 1.0).abs() < 1e-3);
        assert_eq!(g.calls, 4);
        assert!(!g.any_one_sided());
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let mut f = |_: &[f64]| 4.2;
        let g = numeric_gradient(&mut f, &[1.0, 2.0, 3.0], 4.2, &[1e-3; 3]);
        assert_eq!(g.grad, vec![0.0; 3]);
    }

    #[test]
    fn non_finite_probe_falls_back_to_one_side() {
        let mut f = |u: &[f64]| if u[0] > 1.0 { f64::NAN } else { u[0] * u[0] };
        let g = numeric_gradient(&mut f, &[1.0], 1.0, &[1e-6]);
        assert!(g.one_sided[0]);
        assert!((g.grad[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn one_dimensional_quadratic_variance() {
        let k = 7.5;
        let u0 = 0.3;
        let mut f = |u: &[f64]| 0.5 * k * (u[0] - u0) * (u[0] - u0);
        let cov = covariance(&mut f, &[u0], 0.0, &[1e-3], 0.5);
        assert_eq!(cov.status, CovarianceStatus::Available);
        let var = cov.matrix.unwrap()[(0, 0)];
        assert!((var - 1.0 / k).abs() < 1e-6, "{var}");
    }

    #[test]
    fn separable_objective_has_no_correlation() {
        let mut f = |u: &[f64]| 2.0 * (u[0] - 1.0).powi(2) + 0.5 * (u[1] + 2.0).powi(2) + 0.1 * (u[1] + 2.0).powi(4);
        let u = [1.0, -2.0];
        let f0 = f(&u);
        let cov = covariance(&mut f, &u, f0, &[1e-3, 1e-3], 0.5);
        let m = cov.matrix.unwrap();
        let scale = m[(0, 0)].min(m[(1, 1)]);
        assert!(m[(0, 1)].abs() < 1e-3 * scale, "{m}");
        assert!((m[(0, 0)] - 0.25).abs() < 1e-6);
        assert!((m[(1, 1)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn saddle_is_flagged() {
        let mut f = |u: &[f64]| u[0] * u[0] - u[1] * u[1];
        let cov = covariance(&mut f, &[0.0, 0.0], 0.0, &[1e-3, 1e-3], 0.5);
        assert_eq!(cov.status, CovarianceStatus::NotPositiveDefinite);
        assert!(cov.matrix.is_none());
    }

    #[test]
    fn flat_direction_is_singular() {
        let mut f = |u: &[f64]| (u[0] + u[1]).powi(2);
        let cov = covariance(&mut f, &[0.0, 0.0], 0.0, &[1e-3, 1e-3], 0.5);
        assert_ne!(cov.status, CovarianceStatus::Available);
    }
}
