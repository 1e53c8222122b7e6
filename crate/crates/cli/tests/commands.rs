mod common;

use std::path::Path;
use std::process::Command;

use parfit_cli::commands::{cmd_bench, cmd_fit, cmd_generate, cmd_plotdata, plot_text, BenchReport, PLOT_HEADER};
use parfit_core::{Backend, FitResult, FitStatus, UnbinnedDataSet};

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parfit"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn data_text(ds: &UnbinnedDataSet) -> String {
    let mut buf = Vec::new();
    ds.write_text(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn fit_recovers_generated_slope() {
    let mut c = common::exponential(-2.0, 21.49);
    let data = cmd_generate(&c, 20_000, 8, &Backend::serial()).unwrap();
    common::set_init(&mut c, "alpha", -1.0);
    let r = cmd_fit(&c, &data, &Backend::serial()).unwrap();
    assert!(r.is_converged());
    let (a, e) = (r.value("alpha").unwrap(), r.error("alpha").unwrap());
    assert!((a + 2.0).abs() < 5.0 * e, "{a} +- {e}");
}

#[test]
fn binned_chi2_fit_of_gaussian() {
    let mut c = common::gaussian(0.4, 1.2);
    let data = cmd_generate(&c, 50_000, 9, &Backend::serial()).unwrap();
    c.metric = parfit_cli::config::Metric::Chi2;
    c.observables[0].bins = Some(100);
    common::set_init(&mut c, "mu", 0.0);
    common::set_init(&mut c, "sigma", 1.0);
    let r = cmd_fit(&c, &data, &Backend::serial()).unwrap();
    assert!(r.is_converged(), "{r:?}");
    for (name, truth) in [("mu", 0.4), ("sigma", 1.2)] {
        let (v, e) = (r.value(name).unwrap(), r.error(name).unwrap());
        assert!((v - truth).abs() < 5.0 * e, "{name}: {v} +- {e}");
    }
}

#[test]
fn bench_rejects_bad_thread_lists() {
    let c = common::exponential(-1.0, 21.49);
    let data = cmd_generate(&c, 1_000, 1, &Backend::serial()).unwrap();
    assert!(cmd_bench(&c, &data, &[1], 3).is_err());
    assert!(cmd_bench(&c, &data, &[2, 4], 3).is_err());
    assert!(cmd_bench(&c, &data, &[1, 0], 3).is_err());
    assert!(cmd_bench(&c, &data, &[1, 2], 2).is_err());
}

#[test]
fn bench_reports_medians_and_unit_baseline() {
    let mut c = common::exponential(-2.0, 21.49);
    let data = cmd_generate(&c, 5_000, 1, &Backend::serial()).unwrap();
    common::set_init(&mut c, "alpha", -1.0);
    let report = cmd_bench(&c, &data, &[2, 1, 3], 3).unwrap();
    assert_eq!(report.rows.iter().map(|r| r.threads).collect::<Vec<_>>(), [2, 1, 3]);
    assert_eq!(report.rows[1].speedup, 1.0);
    assert!(report.samples.iter().all(|s| s.len() == 3));
    let calls = report.rows[0].metric_calls;
    assert!(calls > 0 && report.rows.iter().all(|r| r.metric_calls == calls));
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(BenchReport::HEADER));
    assert_eq!(lines.count(), 3);
    let fit = cmd_fit(&c, &data, &Backend::serial()).unwrap();
    assert_eq!(fit.metric_value.to_bits(), report.metric_value.to_bits());
}

#[test]
fn plotdata_flat_model_is_flat() {
    let c = common::uniform(0.0, 2.0);
    let data = cmd_generate(&c, 10_000, 3, &Backend::serial()).unwrap();
    let rows = cmd_plotdata(&c, &data, None, 20, None).unwrap();
    assert_eq!(rows.len(), 20);
    for r in &rows {
        assert!((r[1] - 0.5).abs() < 1e-12, "{r:?}");
        assert!((r[2] - 0.5).abs() < 5.0 * r[3]);
    }
    let text = plot_text(&rows);
    assert!(text.starts_with(PLOT_HEADER));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 4));
}

#[test]
fn plotdata_gaussian_peaks_at_mean() {
    let c = common::gaussian(0.73, 0.5);
    let data = cmd_generate(&c, 2_000, 3, &Backend::serial()).unwrap();
    let points = 200;
    let rows = cmd_plotdata(&c, &data, None, points, None).unwrap();
    let best = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((best[0] - 0.73).abs() <= 10.0 / points as f64, "{best:?}");
}

#[test]
fn plotdata_uses_fit_result_values() {
    let c = common::gaussian(0.0, 1.0);
    let data = cmd_generate(&c, 1_000, 3, &Backend::serial()).unwrap();
    let mut result = cmd_fit(&c, &data, &Backend::serial()).unwrap();
    result.parameters[0].value = 2.0;
    let rows = cmd_plotdata(&c, &data, Some(&result), 100, None).unwrap();
    let best = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((best[0] - 2.0).abs() <= 0.1, "{best:?}");
}

#[test]
fn plotdata_marginalizes_other_axes() {
    let c = common::product(-1.0, -0.5);
    let data = cmd_generate(&c, 1_000, 3, &Backend::serial()).unwrap();
    let err = cmd_plotdata(&c, &data, None, 50, None).unwrap_err();
    assert!(err.to_string().contains("--project"), "{err}");
    let rows = cmd_plotdata(&c, &data, None, 50, Some("x")).unwrap();
    let norm = (1.0 - (-5.0f64).exp()) / 1.0;
    for r in &rows {
        let want = (-r[0]).exp() / norm;
        assert!((r[1] - want).abs() < 1e-4 * want, "{r:?} vs {want}");
    }
    assert!(cmd_plotdata(&c, &data, None, 50, Some("z")).is_err());
}

#[test]
fn binary_generate_fit_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = common::exponential(-2.0, 21.49);
    let cfg = write(dir.path(), "truth.toml", &truth.to_toml());
    let data = dir.path().join("toy.csv");
    let st = exe()
        .args(["generate", "--events", "5000", "--seed", "11", "--backend", "serial"])
        .arg("--config").arg(&cfg)
        .arg("--out").arg(&data)
        .status()
        .unwrap();
    assert!(st.success());

    let again = exe()
        .args(["generate", "--events", "5000", "--seed", "11", "--threads", "3"])
        .arg("--config").arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(again.stdout, std::fs::read(&data).unwrap());

    let mut start = truth.clone();
    common::set_init(&mut start, "alpha", -1.0);
    let cfg = write(dir.path(), "start.toml", &start.to_toml());
    let report = dir.path().join("fit.toml");
    let st = exe()
        .arg("fit").arg("--config").arg(&cfg).arg("--data").arg(&data).arg("--out").arg(&report)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let r = FitResult::from_report(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.status, FitStatus::Converged);
    assert!((r.value("alpha").unwrap() + 2.0).abs() < 5.0 * r.error("alpha").unwrap());

    let out = exe()
        .args(["plotdata", "--points", "30"])
        .arg("--config").arg(&cfg).arg("--data").arg(&data).arg("--result").arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn binary_reports_non_convergence_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = common::exponential(-2.0, 21.49);
    let data = write(dir.path(), "d.csv", &data_text(&cmd_generate(&c, 2_000, 1, &Backend::serial()).unwrap()));
    common::set_init(&mut c, "alpha", -1.0);
    c.fit.max_iterations = 1;
    let cfg = write(dir.path(), "c.toml", &c.to_toml());
    let out = exe().arg("fit").arg("--config").arg(&cfg).arg("--data").arg(&data).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let r = FitResult::from_report(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(r.status, FitStatus::MaxIterations);
}

#[test]
fn binary_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let c = common::exponential(-2.0, 21.49);
    let cfg = write(dir.path(), "c.toml", &c.to_toml().replace("observable = \"x\"", "observable = \"q\""));
    let out = exe().args(["generate", "--events", "10"]).arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("pdf.observable"), "{err}");

    let cfg = write(dir.path(), "ok.toml", &c.to_toml());
    let data = write(dir.path(), "wrong.csv", "# y\n1.0\n");
    let out = exe().arg("fit").arg("--config").arg(&cfg).arg("--data").arg(&data).output().unwrap();
    assert!(!out.status.success());

    let out = exe()
        .args(["generate", "--events", "10", "--backend", "serial", "--threads", "2"])
        .arg("--config").arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());

    let data = write(dir.path(), "d.csv", &data_text(&cmd_generate(&c, 100, 1, &Backend::serial()).unwrap()));
    let out = exe()
        .args(["bench", "--threads", "1", "--repetitions", "3"])
        .arg("--config").arg(&cfg).arg("--data").arg(&data)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let c = common::exponential(-1.5, 21.49);
    let cfg = write(dir.path(), "c.toml", &c.to_toml());
    let data = write(dir.path(), "d.csv", &data_text(&cmd_generate(&c, 2_000, 1, &Backend::serial()).unwrap()));
    let out = exe()
        .args(["bench", "--threads", "1,2", "--repetitions", "3"])
        .arg("--config").arg(&cfg).arg("--data").arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], BenchReport::HEADER);
    assert!(lines[1].starts_with("threads,1,") && lines[1].contains(",1.0,"), "{}", lines[1]);
}
