//! Box domains, parameter grids and the sampler of the base measure.

use crate::error::{Error, Result};
use crate::prelude::*;
use crate::rng::{self, StreamRng};

/// Axis-aligned box `Π [lo_k, hi_k]` with a regular output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    bounds: Vec<(f64, f64)>,
    grid_points_per_dim: usize,
}

impl DomainSpec {
    pub fn new(bounds: Vec<(f64, f64)>, grid_points_per_dim: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("domain needs at least one coordinate"));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("coordinate {k}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        let total = (grid_points_per_dim as f64).powi(bounds.len() as i32);
        if grid_points_per_dim == 0 || total < 2.0 {
            return Err(Error::invalid("grid must contain at least 2 points"));
        }
        Ok(Self { bounds, grid_points_per_dim })
    }

    /// The unit interval with `grid` output points.
    pub fn unit_interval(grid: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0)], grid)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn grid_points_per_dim(&self) -> usize {
        self.grid_points_per_dim
    }

    /// Same box with a different grid resolution.
    pub fn with_grid(&self, grid_points_per_dim: usize) -> Result<Self> {
        Self::new(self.bounds.clone(), grid_points_per_dim)
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
    }

    /// Lengths of the sides.
    pub fn side_lengths(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| hi - lo).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.bounds).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Regular grid including the box corners.
    pub fn grid(&self) -> Grid {
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                let g = self.grid_points_per_dim;
                if g == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect()
                }
            })
            .collect();
        Grid::tensor(&axes)
    }
}

/// A finite set of points of a `dim`-dimensional box, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    coords: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::invalid("grid coordinates must be a multiple of the dimension"));
        }
        Ok(Self { dim, coords })
    }

    /// One-dimensional grid from a list of points.
    pub fn from_points_1d(points: &[f64]) -> Self {
        Self { dim: 1, coords: points.to_vec() }
    }

    /// Tensor product of per-axis point lists; the last axis varies fastest.
    pub fn tensor(axes: &[Vec<f64>]) -> Self {
        let dim = axes.len();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut coords = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for (k, &i) in idx.iter().enumerate() {
                coords.push(axes[k][i]);
            }
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Inverse CDF of one coordinate, mapping `[0, 1]` onto the coordinate range.
pub type InverseCdf = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SamplerKind {
    UniformOnBox,
    ProductInverseCdf(Vec<InverseCdf>),
}

impl core::fmt::Debug for SamplerKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SamplerKind::UniformOnBox => f.write_str("UniformOnBox"),
            SamplerKind::ProductInverseCdf(v) => write!(f, "ProductInverseCdf({} coordinates)", v.len()),
        }
    }
}

/// Draws points of the base measure `μ`; exactly one 64-bit draw per coordinate.
#[derive(Debug, Clone)]
pub struct MeasureSampler {
    bounds: Vec<(f64, f64)>,
    kind: SamplerKind,
    seed_stream_id: u64,
}

impl MeasureSampler {
    /// Normalised Lebesgue measure on the domain box.
    pub fn uniform(domain: &DomainSpec) -> Self {
        Self { bounds: domain.bounds().to_vec(), kind: SamplerKind::UniformOnBox, seed_stream_id: 0 }
    }

    /// Product measure given by per-coordinate inverse CDFs.
    pub fn product_inverse_cdf(domain: &DomainSpec, inverse_cdfs: Vec<InverseCdf>) -> Result<Self> {
        if inverse_cdfs.len() != domain.dim() {
            return Err(Error::invalid("one inverse CDF per coordinate is required"));
        }
        Ok(Self {
            bounds: domain.bounds().to_vec(),
            kind: SamplerKind::ProductInverseCdf(inverse_cdfs),
            seed_stream_id: 0,
        })
    }

    pub fn with_stream_id(mut self, id: u64) -> Self {
        self.seed_stream_id = id;
        self
    }

    pub fn seed_stream_id(&self) -> u64 {
        self.seed_stream_id
    }

    pub fn kind(&self) -> &SamplerKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, SamplerKind::UniformOnBox)
    }

    /// Midpoint-rule nodes of `μ` with `per_dim` nodes per coordinate and their
    /// common weight. For inverse-CDF measures the midpoints are taken in
    /// quantile space, so `Σ w·g(x_i)` approximates `∫ g dμ` in both cases.
    pub fn quadrature_nodes(&self, per_dim: usize) -> (Grid, f64) {
        let unit = crate::math::midpoints(0.0, 1.0, per_dim);
        let axes: Vec<Vec<f64>> = match &self.kind {
            SamplerKind::UniformOnBox => {
                self.bounds.iter().map(|&(lo, hi)| unit.iter().map(|u| lo + (hi - lo) * u).collect()).collect()
            }
            SamplerKind::ProductInverseCdf(inv) => inv
                .iter()
                .zip(&self.bounds)
                .map(|(q, &(lo, hi))| unit.iter().map(|&u| q(u).clamp(lo, hi)).collect())
                .collect(),
        };
        let grid = Grid::tensor(&axes);
        let w = 1.0 / grid.len() as f64;
        (grid, w)
    }

    /// Fills `out` (length `dim`) with one draw.
    #[inline]
    pub fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        match &self.kind {
            SamplerKind::UniformOnBox => {
                for (x, &(lo, hi)) in out.iter_mut().zip(&self.bounds) {
                    *x = lo + (hi - lo) * rng::uniform(rng);
                }
            }
            SamplerKind::ProductInverseCdf(inv) => {
                for ((x, q), &(lo, hi)) in out.iter_mut().zip(inv).zip(&self.bounds) {
                    *x = q(rng::uniform(rng)).clamp(lo, hi);
                }
            }
        }
    }
}
