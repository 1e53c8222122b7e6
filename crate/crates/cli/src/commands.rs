use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use parfit_core::{
    fit, set_data, Backend, BinnedDataSet, BoundModel, FitResult, Model, PdfNode, UnbinnedDataSet,
    Variable,
};

use crate::config::{Built, ModelConfig};
use crate::generate::generate;

pub fn load_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelConfig::from_toml(&text).with_context(|| format!("invalid configuration {}", path.display()))
}

pub fn load_data(path: &Path, built: &Built) -> Result<UnbinnedDataSet> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    UnbinnedDataSet::read_text(built.observables.clone(), BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
}

/// Copies `data` onto `observables`, matching columns by name. Data read or
/// generated against another build of the same configuration carries
/// different variables.
fn rekey(data: &UnbinnedDataSet, observables: &[Variable]) -> Result<UnbinnedDataSet> {
    let source = data.observables();
    let order = observables
        .iter()
        .map(|o| {
            source
                .iter()
                .position(|s| s.name() == o.name())
                .with_context(|| format!("data has no column for observable `{}`", o.name()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut out = UnbinnedDataSet::new(observables.to_vec())?;
    let mut row = vec![0.0; order.len()];
    for (i, r) in data.rows().enumerate() {
        for (dst, &src) in row.iter_mut().zip(&order) {
            *dst = r[src];
        }
        out.push_row(&row).with_context(|| format!("event {i}"))?;
    }
    Ok(out)
}

/// Binds `pdf` to `data`, histogramming it when the configuration declares
/// bins.
pub fn bind(built: &Built, pdf: PdfNode, data: &UnbinnedDataSet) -> Result<BoundModel> {
    let same = data.observables().len() == built.observables.len()
        && data.observables().iter().zip(&built.observables).all(|(a, b)| a.same(b));
    let owned;
    let data = if same {
        data
    } else {
        owned = rekey(data, &built.observables)?;
        &owned
    };
    let mut bm = match &built.bins {
        Some(b) => {
            let mut h = BinnedDataSet::new(built.observables.clone(), b.clone())?;
            for (i, row) in data.rows().enumerate() {
                h.fill(row).with_context(|| format!("event {i}"))?;
            }
            set_data(pdf, &h)?
        }
        None => set_data(pdf, data)?,
    };
    bm.model_mut().set_grid(built.grid);
    Ok(bm)
}

pub fn cmd_generate(config: &ModelConfig, events: usize, seed: u64, backend: &Backend) -> Result<UnbinnedDataSet> {
    let (built, pdf) = config.build()?;
    let model = Model::with_columns(pdf, &built.observables)?.with_grid(built.grid);
    let params = model.parameter_values();
    Ok(generate(&model, &params, events, seed, backend)?)
}

pub fn cmd_fit(config: &ModelConfig, data: &UnbinnedDataSet, backend: &Backend) -> Result<FitResult> {
    let (built, pdf) = config.build()?;
    let bm = bind(&built, pdf, data)?;
    let cfg = parfit_core::FitConfig {
        backend: *backend,
        ..built.fit.clone()
    };
    Ok(fit(&bm, &cfg)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub backend: String,
    pub threads: usize,
    /// Median over repetitions.
    pub wall_time_s: f64,
    pub speedup: f64,
    pub metric_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Final metric value shared by every run.
    pub metric_value: f64,
    /// All measured wall times per row, in repetition order.
    pub samples: Vec<Vec<f64>>,
}

impl BenchReport {
    pub const HEADER: &'static str = "backend,threads,wall_time_s,speedup,metric_calls";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{}",
                r.backend, r.threads, r.wall_time_s, r.speedup, r.metric_calls
            );
        }
        s
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Runs the same fit for every thread count, `repetitions` times each, and
/// aborts if any run ends on a different metric value.
pub fn cmd_bench(
    config: &ModelConfig,
    data: &UnbinnedDataSet,
    threads: &[usize],
    repetitions: usize,
) -> Result<BenchReport> {
    ensure!(threads.len() >= 2, "bench needs at least two thread counts, got {}", threads.len());
    ensure!(threads.contains(&1), "bench thread counts must include 1");
    ensure!(threads.iter().all(|&t| t > 0), "thread counts must be positive");
    ensure!(repetitions >= 3, "bench needs at least 3 repetitions, got {repetitions}");

    let (built, pdf) = config.build()?;
    let bm = bind(&built, pdf, data)?;
    let mut samples = vec![Vec::with_capacity(repetitions); threads.len()];
    let mut calls = vec![0; threads.len()];
    let mut reference: Option<(f64, usize)> = None;
    for _ in 0..repetitions {
        for (i, &t) in threads.iter().enumerate() {
            built.reset(config);
            let cfg = parfit_core::FitConfig {
                backend: Backend::threads(t)?,
                ..built.fit.clone()
            };
            let r = fit(&bm, &cfg)?;
            match reference {
                None => reference = Some((r.metric_value, t)),
                Some((v, t0)) if v.to_bits() != r.metric_value.to_bits() => bail!(
                    "metric mismatch: {v:?} with {t0} threads but {:?} with {t} threads",
                    r.metric_value
                ),
                Some(_) => {}
            }
            samples[i].push(r.wall_time.as_secs_f64());
            calls[i] = r.n_metric_calls;
        }
    }
    built.reset(config);
    let medians: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    let base = medians[threads.iter().position(|&t| t == 1).expect("checked above")];
    let rows = threads
        .iter()
        .zip(&medians)
        .zip(&calls)
        .map(|((&t, &m), &c)| BenchRow {
            backend: "threads".into(),
            threads: t,
            wall_time_s: m,
            speedup: if t == 1 { 1.0 } else { base / m },
            metric_calls: c,
        })
        .collect();
    Ok(BenchReport {
        rows,
        metric_value: reference.expect("at least one run").0,
        samples,
    })
}

/// One plot row: bin center, model density, data density and its error.
pub type PlotRow = [f64; 4];

pub const PLOT_HEADER: &str = "# x,model,data,data_error";

/// Model density and data histogram along one observable. Other observables
/// are integrated out of the model with a midpoint grid.
pub fn cmd_plotdata(
    config: &ModelConfig,
    data: &UnbinnedDataSet,
    result: Option<&FitResult>,
    points: usize,
    project: Option<&str>,
) -> Result<Vec<PlotRow>> {
    ensure!(points >= 1, "points must be positive");
    let (built, pdf) = config.build()?;
    let axis = match project {
        Some(name) => built
            .observables
            .iter()
            .position(|o| o.name() == name)
            .with_context(|| format!("--project: unknown observable `{name}`"))?,
        None if built.observables.len() == 1 => 0,
        None => bail!(
            "model has {} observables; choose one with --project",
            built.observables.len()
        ),
    };
    if let Some(r) = result {
        for p in &r.parameters {
            let v = built
                .parameters
                .iter()
                .find(|v| v.name() == p.name)
                .with_context(|| format!("result parameter `{}` is not in the configuration", p.name))?;
            v.set_value(p.value);
        }
    }
    let observables = built.observables.clone();
    let model = Model::with_columns(pdf, &observables)?.with_grid(built.grid);
    let ev = model.evaluator(&model.parameter_values())?;

    let target = &observables[axis];
    let w = target.width() / points as f64;
    let mut counts = vec![0.0; points];
    let mut n = 0.0;
    for row in data.rows() {
        n += 1.0;
        let x = row[axis];
        if x >= target.lower() && x <= target.upper() {
            let b = (((x - target.lower()) / w) as usize).min(points - 1);
            counts[b] += 1.0;
        }
    }

    let others: Vec<usize> = (0..observables.len()).filter(|&i| i != axis).collect();
    let per_axis = if others.is_empty() {
        1
    } else {
        let budget = (1u64 << 16) as f64;
        (budget.powf(1.0 / others.len() as f64) as usize).clamp(2, model.grid().points())
    };
    let inner_total = per_axis.pow(others.len() as u32);
    let cell: f64 = others
        .iter()
        .map(|&i| observables[i].width() / per_axis as f64)
        .product();

    let mut rows = Vec::with_capacity(points);
    let mut point = vec![0.0; observables.len()];
    for (b, &count) in counts.iter().enumerate() {
        let x = target.lower() + (b as f64 + 0.5) * w;
        point[axis] = x;
        let mut density = 0.0;
        for flat in 0..inner_total {
            let mut rest = flat;
            for &i in &others {
                let j = rest % per_axis;
                rest /= per_axis;
                let o = &observables[i];
                point[i] = o.lower() + (j as f64 + 0.5) * o.width() / per_axis as f64;
            }
            density += ev.density(&point)?;
        }
        let model_density = density * cell;
        let scale = if n > 0.0 { 1.0 / (n * w) } else { 0.0 };
        rows.push([x, model_density, count * scale, count.sqrt() * scale]);
    }
    Ok(rows)
}

pub fn plot_text(rows: &[PlotRow]) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r[0], r[1], r[2], r[3]);
    }
    s
}
