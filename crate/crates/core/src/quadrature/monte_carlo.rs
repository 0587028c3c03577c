use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{IntegralResult, QuadValue, QuadratureError};

/// Samples per independent RNG stream. Fixed so that the result depends
/// only on the seed and sample count, never on the thread count.
pub const MC_CHUNK: usize = 4096;

/// Plain Monte Carlo over the box `[lower, upper]` (dimension 1..=7).
///
/// Chunk `c` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `c`;
/// chunk sums are reduced in chunk order. The error estimate is one
/// standard error. The result is marked converged whenever it is finite:
/// Monte Carlo has no internal stopping rule, so the caller judges the
/// reported standard error.
pub fn mc_integrate<V, F>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    samples: usize,
    seed: u64,
) -> Result<IntegralResult<V>, QuadratureError>
where
    V: QuadValue,
    F: Fn(&[f64]) -> V + Sync + ?Sized,
{
    let dim = lower.len();
    if dim == 0 || dim > 7 || upper.len() != dim {
        return Err(QuadratureError::BadDimension(dim));
    }
    if samples == 0 {
        return Err(QuadratureError::InvalidConfig(
            "mc_samples must be >= 1".into(),
        ));
    }
    let volume: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
    let chunks = samples.div_ceil(MC_CHUNK);

    let partial: Vec<(V, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut x = [0.0; 7];
            let mut sum = V::zero();
            let mut sum_sq = 0.0;
            for _ in 0..n {
                for d in 0..dim {
                    x[d] = lower[d] + (upper[d] - lower[d]) * rng.gen::<f64>();
                }
                let v = f(&x[..dim]);
                let m = v.norm();
                sum = sum + v;
                sum_sq += m * m;
            }
            (sum, sum_sq)
        })
        .collect();

    let (sum, sum_sq) = partial
        .into_iter()
        .fold((V::zero(), 0.0), |(s, q), (s2, q2)| (s + s2, q + q2));
    let n = samples as f64;
    let mean = sum * (1.0 / n);
    let var = (sum_sq / n - mean.norm().powi(2)).max(0.0);
    let stderr = if samples > 1 {
        (var / (n - 1.0)).sqrt()
    } else {
        f64::INFINITY
    };
    let value = mean * volume;
    let error_estimate = stderr * volume.abs();
    Ok(IntegralResult {
        value,
        error_estimate,
        converged: value.norm().is_finite() && error_estimate.is_finite(),
        evaluations: samples,
    })
}
