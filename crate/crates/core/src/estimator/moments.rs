//! Streaming first and second moments of grid-valued samples.

use crate::error::Result;
use crate::exec::{blocks, tree_reduce, Executor};
use crate::prelude::*;
use crate::rng::{seek, substream, Purpose, StreamRng};

/// Welford accumulator over vectors of length `len`. The co-moment matrix is
/// optional and stored row-major; only the upper triangle is updated until
/// [`Moments::covariance`] mirrors it.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub co: Option<Vec<f64>>,
    delta: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize, track_cov: bool) -> Self {
        Moments {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            co: track_cov.then(|| vec![0.0; len * len]),
            delta: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for j in 0..x.len() {
            let d = x[j] - self.mean[j];
            self.mean[j] += d * inv;
            self.delta[j] = d;
            self.m2[j] += d * (x[j] - self.mean[j]);
        }
        if let Some(co) = self.co.as_mut() {
            let g = x.len();
            for j in 0..g {
                let dj = self.delta[j];
                if dj == 0.0 {
                    continue;
                }
                let row = &mut co[j * g..(j + 1) * g];
                for k in j..g {
                    row[k] += dj * (x[k] - self.mean[k]);
                }
            }
        }
    }

    pub fn merge(mut a: Self, b: Self) -> Self {
        if b.n == 0 {
            return a;
        }
        if a.n == 0 {
            return b;
        }
        let n = a.n + b.n;
        let (na, nb) = (a.n as f64, b.n as f64);
        let w = na * nb / n as f64;
        let g = a.len();
        for j in 0..g {
            let d = b.mean[j] - a.mean[j];
            a.delta[j] = d;
            a.mean[j] += d * nb / n as f64;
            a.m2[j] += b.m2[j] + d * d * w;
        }
        if let (Some(ca), Some(cb)) = (a.co.as_mut(), b.co.as_ref()) {
            for j in 0..g {
                let dj = a.delta[j];
                for k in j..g {
                    ca[j * g + k] += cb[j * g + k] + dj * a.delta[k] * w;
                }
            }
        }
        a.n = n;
        a
    }

    /// Unbiased sample variances.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.n.saturating_sub(1)).max(1) as f64;
        self.m2.iter().map(|v| (v / d).max(0.0)).collect()
    }

    /// Unbiased sample covariance, symmetric by construction.
    pub fn covariance(&self) -> Option<Vec<f64>> {
        let co = self.co.as_ref()?;
        let g = self.len();
        let d = (self.n.saturating_sub(1)).max(1) as f64;
        let mut out = vec![0.0; g * g];
        for j in 0..g {
            for k in j..g {
                let v = co[j * g + k] / d;
                out[j * g + k] = v;
                out[k * g + j] = v;
            }
        }
        Some(out)
    }
}

/// Where the replicates of one Monte-Carlo term come from.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub index: u64,
    /// Scalar uniforms consumed per replicate.
    pub draws_per_replicate: u64,
}

/// Runs `replicates` draws of `sample` in fixed blocks and merges the block
/// moments pairwise, so the result does not depend on the executor. Every
/// replicate starts at its own stream offset.
pub(crate) fn accumulate<E, F>(
    exec: &E,
    key: StreamKey,
    replicates: u64,
    len: usize,
    track_cov: bool,
    sample: F,
) -> Result<Moments>
where
    E: Executor + ?Sized,
    F: Fn(&mut StreamRng, &mut [f64]) -> Result<()> + Sync + Send,
{
    let parts = blocks(replicates);
    let results = exec.run(parts.len(), |b| {
        let (lo, hi) = parts[b];
        let mut rng = substream(key.seed, key.purpose, key.index, lo, key.draws_per_replicate);
        let mut acc = Moments::new(len, track_cov);
        let mut buf = vec![0.0; len];
        for l in lo..hi {
            seek(&mut rng, l, key.draws_per_replicate);
            sample(&mut rng, &mut buf)?;
            acc.push(&buf);
        }
        Ok(acc)
    });
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        ok.push(r?);
    }
    Ok(tree_reduce(ok, Moments::merge).unwrap_or_else(|| Moments::new(len, track_cov)))
}
