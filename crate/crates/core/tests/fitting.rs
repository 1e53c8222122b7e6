use parfit_core::fit::{objective, numeric_gradient, ParameterSpace};
use parfit_core::pdf::{exponential, gaussian, product, sum, polynomial};
use parfit_core::{
    fit, set_data, Backend, BoundModel, FitConfig, FitError, FitStatus, MetricKind, MinimizerKind,
    UnbinnedDataSet, Variable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distributions::{Distribution, Standard};

fn obs(name: &str, lo: f64, hi: f64) -> Variable {
    Variable::observable(name, lo, hi).unwrap()
}

fn par(name: &str, v: f64, lo: f64, hi: f64) -> Variable {
    Variable::parameter(name, v, 0.01, lo, hi).unwrap()
}

/// Inverse-transform sample of `exp(alpha x)` truncated to `[0, upper]`.
fn truncated_exp(rng: &mut ChaCha8Rng, alpha: f64, upper: f64) -> f64 {
    let u: f64 = Standard.sample(rng);
    (1.0 - u * (1.0 - (alpha * upper).exp())).ln() / alpha
}

fn exp_problem(n: usize, seed: u64, start: f64) -> (Variable, BoundModel) {
    let upper = 21.49;
    let x = obs("x", 0.0, upper);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = UnbinnedDataSet::new(vec![x.clone()]).unwrap();
    for _ in 0..n {
        x.set_value(truncated_exp(&mut rng, -2.0, upper));
        ds.add_event();
    }
    let alpha = par("alpha", start, -10.0, 10.0);
    let bm = set_data(exponential("e", &x, &alpha).unwrap(), &ds).unwrap();
    (alpha, bm)
}

fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

#[test]
fn exponential_fit_recovers_truth() {
    let n = 20_000;
    let (alpha, bm) = exp_problem(n, 11, -1.0);
    let r = fit(&bm, &FitConfig::default()).unwrap();
    assert_eq!(r.status, FitStatus::Converged, "{r:?}");
    assert!(r.gradient_max_norm <= 1e-6);
    let a = r.value("alpha").unwrap();
    let err = r.error("alpha").unwrap();
    assert!((a + 2.0).abs() < 5.0 * err, "{a} +- {err}");
    let expected = 2.0 / (n as f64).sqrt();
    assert!((err - expected).abs() < 0.1 * expected, "{err} vs {expected}");
    assert_eq!(alpha.value(), a);

    let scan = golden_section(
        |v| bm.eval_metric(&[v], MetricKind::NegativeLogLikelihood, &Backend::serial()).unwrap(),
        -3.0,
        -1.0,
        1e-9,
    );
    assert!((a - scan).abs() < 1e-3, "{a} vs {scan}");
}

#[test]
fn minimizers_agree_on_exponential_problem() {
    let (_, bm) = exp_problem(20_000, 12, -1.0);
    let qn = fit(&bm, &FitConfig::default()).unwrap();
    bm.parameters()[0].set_value(-1.0);
    let nm = fit(
        &bm,
        &FitConfig {
            minimizer: MinimizerKind::NelderMead,
            ..FitConfig::default()
        },
    )
    .unwrap();
    assert_eq!(nm.status, FitStatus::Converged);
    assert!((qn.metric_value - nm.metric_value).abs() < 1e-4, "{} vs {}", qn.metric_value, nm.metric_value);
}

#[test]
fn gaussian_mean_error_is_sigma_over_root_n() {
    let n = 5_000;
    let sigma = 1.5;
    let x = obs("x", -20.0, 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ds = UnbinnedDataSet::new(vec![x.clone()]).unwrap();
    for _ in 0..n {
        // Box-Muller
        let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
        let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        ds.push_row(&[0.7 + sigma * z]).unwrap();
    }
    let s = par("s", sigma, 0.1, 5.0);
    s.set_fixed(true);
    let bm = set_data(gaussian("g", &x, &par("mu", 0.0, -5.0, 5.0), &s).unwrap(), &ds).unwrap();
    let r = fit(&bm, &FitConfig::default()).unwrap();
    assert_eq!(r.status, FitStatus::Converged);
    let err = r.error("mu").unwrap();
    let expected = sigma / (n as f64).sqrt();
    assert!((err - expected).abs() < 0.2 * expected, "{err} vs {expected}");
    assert!((r.value("mu").unwrap() - 0.7).abs() < 5.0 * err);
    let fixed = r.parameter("s").unwrap();
    assert!(fixed.fixed && fixed.error.is_none() && fixed.value == sigma);
    assert_eq!(s.value(), sigma);
}

#[test]
fn product_fit_recovers_both_slopes() {
    let (ax, ay) = (-2.4, -1.1);
    let x = obs("x", 0.0, 5.0);
    let y = obs("y", 0.0, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ds = UnbinnedDataSet::new(vec![x.clone(), y.clone()]).unwrap();
    for _ in 0..20_000 {
        ds.push_row(&[truncated_exp(&mut rng, ax, 5.0), truncated_exp(&mut rng, ay, 5.0)]).unwrap();
    }
    let root = product(
        "xy",
        vec![
            exponential("ex", &x, &par("ax", -1.0, -10.0, 10.0)).unwrap(),
            exponential("ey", &y, &par("ay", -2.0, -10.0, 10.0)).unwrap(),
        ],
    )
    .unwrap();
    let bm = set_data(root, &ds).unwrap();
    let r = fit(&bm, &FitConfig::default()).unwrap();
    assert_eq!(r.status, FitStatus::Converged);
    for (name, truth) in [("ax", ax), ("ay", ay)] {
        let (v, e) = (r.value(name).unwrap(), r.error(name).unwrap());
        assert!((v - truth).abs() < 5.0 * e, "{name}: {v} +- {e}");
    }
    let cov = r.covariance.as_ref().unwrap();
    assert!(cov[(0, 1)].abs() < 0.1 * (cov[(0, 0)] * cov[(1, 1)]).sqrt());
}

#[test]
fn fit_is_reproducible_across_thread_counts() {
    let run = |backend: Backend| {
        let (_, bm) = exp_problem(10_000, 21, -1.0);
        let cfg = FitConfig {
            backend: backend.with_chunk_size(512).unwrap(),
            ..FitConfig::default()
        };
        fit(&bm, &cfg).unwrap()
    };
    let serial = run(Backend::serial());
    for b in [Backend::threads(1).unwrap(), Backend::threads(3).unwrap()] {
        let r = run(b);
        assert_eq!(r.value("alpha").unwrap().to_bits(), serial.value("alpha").unwrap().to_bits());
        assert_eq!(r.metric_value.to_bits(), serial.metric_value.to_bits());
        assert_eq!(r.n_metric_calls, serial.n_metric_calls);
    }
}

#[test]
fn all_fixed_is_an_error() {
    let (alpha, bm) = exp_problem(100, 1, -1.0);
    alpha.set_fixed(true);
    assert!(matches!(fit(&bm, &FitConfig::default()), Err(FitError::NoFreeParameters)));
}

#[test]
fn domain_violation_at_start_fails() {
    let x = obs("x", 0.0, 1.0);
    let one = |n: &str| polynomial(n, &x, &[par(&format!("{n}c"), 1.0, 0.5, 2.0)]).unwrap();
    let root = sum(
        "s",
        vec![one("a"), one("b"), one("c")],
        &[par("f1", 0.7, 0.0, 1.0), par("f2", 0.7, 0.0, 1.0)],
    )
    .unwrap();
    let mut ds = UnbinnedDataSet::new(vec![x.clone()]).unwrap();
    ds.push_row(&[0.5]).unwrap();
    let bm = set_data(root, &ds).unwrap();
    let r = fit(&bm, &FitConfig::default()).unwrap();
    assert_eq!(r.status, FitStatus::Failed);
    assert!(r.message.is_some());
}

#[test]
fn converged_values_stay_inside_limits() {
    // the likelihood prefers alpha = -2 but the limits stop at -1.5
    let upper = 21.49;
    let x = obs("x", 0.0, upper);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ds = UnbinnedDataSet::new(vec![x.clone()]).unwrap();
    for _ in 0..2000 {
        ds.push_row(&[truncated_exp(&mut rng, -2.0, upper)]).unwrap();
    }
    let bm = set_data(exponential("e", &x, &par("alpha", -1.0, -1.5, 0.0)).unwrap(), &ds).unwrap();
    let r = fit(&bm, &FitConfig::default()).unwrap();
    let a = r.value("alpha").unwrap();
    assert!((-1.5..=0.0).contains(&a));
    assert!((a + 1.5).abs() < 1e-3, "{a}");
}

#[test]
fn gradient_is_richardson_consistent() {
    let (alpha, bm) = exp_problem(20_000, 4, -2.0);
    let (free, mut f) = objective(&bm, MetricKind::NegativeLogLikelihood, Backend::serial());
    let space = ParameterSpace::from_variables(&free);
    let u = space.to_internal(&[alpha.value()]);
    let mut g = |u: &[f64]| f(&space.to_external(u));
    let f0 = g(&u);
    let h = space.gradient_steps(&u);
    let h2: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
    let d1 = numeric_gradient(&mut g, &u, f0, &h).grad[0];
    let d2 = numeric_gradient(&mut g, &u, f0, &h2).grad[0];
    // central differences: error(h) ~ 4 error(h/2), so |d1 - d2| ~ 3/4 error(h)
    let third = {
        let h4: Vec<f64> = h.iter().map(|v| v / 4.0).collect();
        numeric_gradient(&mut g, &u, f0, &h4).grad[0]
    };
    let truncation = (d2 - third).abs() * 4.0 / 3.0 + 1e-9 * d1.abs().max(1.0);
    assert!((d1 - d2).abs() <= 10.0 * truncation, "{d1} {d2} {third}");
}
