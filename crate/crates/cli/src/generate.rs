//! Accept-reject toy generation.
//!
//! Candidates are drawn uniformly in the observable box in fixed-size blocks.
//! The random stream is consumed serially and only density evaluation is
//! parallel, so the output depends on the seed alone.

use parfit_core::{Backend, EngineError, Model, PdfError, UnbinnedDataSet, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Safety factor applied to the grid maximum.
pub const ENVELOPE_MARGIN: f64 = 1.1;

const BLOCK: usize = 16_384;

/// Upper bound on envelope-scan grid points across all dimensions.
const MAX_SCAN_POINTS: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("number of events must be positive")]
    NoEvents,
    #[error(transparent)]
    Pdf(#[from] PdfError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("density {density} at {point:?} exceeds the envelope {envelope}; the grid maximum underestimates the peak")]
    EnvelopeExceeded {
        point: Vec<f64>,
        density: f64,
        envelope: f64,
    },
    #[error("density is zero everywhere on the scan grid")]
    ZeroEnvelope,
    #[error("gave up after {candidates} candidates with {accepted} accepted")]
    TooManyCandidates { candidates: usize, accepted: usize },
}

/// Maximum density on a midpoint grid with `points` per observable, reduced
/// so the whole grid stays below a fixed budget.
pub fn envelope(model: &Model, params: &[f64], backend: &Backend) -> Result<f64, GenerateError> {
    let ev = model.evaluator(params)?;
    let obs = model.registry().observables();
    let d = obs.len();
    let mut per_axis = model.grid().points();
    while per_axis.saturating_pow(d as u32) > MAX_SCAN_POINTS {
        per_axis /= 2;
    }
    let total = per_axis.pow(d as u32);
    let chunk = 4096;
    let maxima = backend.map_chunks(total.div_ceil(chunk), |c| -> Result<f64, PdfError> {
        let mut row = vec![0.0; d];
        let mut best = 0.0f64;
        for flat in c * chunk..((c + 1) * chunk).min(total) {
            let mut rest = flat;
            for (i, o) in obs.iter().enumerate() {
                let j = rest % per_axis;
                rest /= per_axis;
                row[i] = o.lower() + (j as f64 + 0.5) * o.width() / per_axis as f64;
            }
            best = best.max(ev.density(&row)?);
        }
        Ok(best)
    })?;
    let mut max = 0.0f64;
    for m in maxima {
        max = max.max(m?);
    }
    if !(max > 0.0) {
        return Err(GenerateError::ZeroEnvelope);
    }
    Ok(max * ENVELOPE_MARGIN)
}

/// Draws `n` events from `model` at `params`.
pub fn generate(
    model: &Model,
    params: &[f64],
    n: usize,
    seed: u64,
    backend: &Backend,
) -> Result<UnbinnedDataSet, GenerateError> {
    if n == 0 {
        return Err(GenerateError::NoEvents);
    }
    let env = envelope(model, params, backend)?;
    let ev = model.evaluator(params)?;
    let obs: Vec<Variable> = model.registry().observables().to_vec();
    let d = obs.len();
    let mut data = UnbinnedDataSet::new(obs.clone()).expect("model observables are distinct");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_candidates = n.saturating_mul(10_000).max(1 << 24);
    let mut candidates = 0;
    let mut points = vec![0.0; BLOCK * d];
    let mut thresholds = vec![0.0; BLOCK];

    while data.n_events() < n {
        if candidates >= max_candidates {
            return Err(GenerateError::TooManyCandidates {
                candidates,
                accepted: data.n_events(),
            });
        }
        for i in 0..BLOCK {
            for (j, o) in obs.iter().enumerate() {
                points[i * d + j] = rng.gen_range(o.lower()..o.upper());
            }
            thresholds[i] = rng.gen::<f64>() * env;
        }
        candidates += BLOCK;
        let chunk = 1024;
        let densities = backend.map_chunks(BLOCK / chunk, |c| -> Result<Vec<f64>, PdfError> {
            (c * chunk..(c + 1) * chunk)
                .map(|i| ev.density(&points[i * d..(i + 1) * d]))
                .collect()
        })?;
        for (c, block) in densities.into_iter().enumerate() {
            for (k, density) in block?.into_iter().enumerate() {
                let i = c * chunk + k;
                let point = &points[i * d..(i + 1) * d];
                if density > env {
                    return Err(GenerateError::EnvelopeExceeded {
                        point: point.to_vec(),
                        density,
                        envelope: env,
                    });
                }
                if thresholds[i] < density && data.n_events() < n {
                    data.push_row(point).expect("row width matches");
                }
            }
        }
    }
    Ok(data)
}
