//! The limit Gaussian process: covariance kernel evaluation and two
//! independent samplers.
//!
//! The kernel is `C(u, s) = u^{1-beta} - (u - s)^{1-beta}` for `s <= u`,
//! which is Brownian covariance `min(u, s)` at `beta = 0`. Sampling routes:
//!
//! * Cholesky factorization of the kernel matrix on a grid;
//! * discretization of the white-noise integral over the plane region
//!   `{ 0 <= x <= u, z < (u - x)^{-beta} }`, where each cell of an
//!   (x, z)-tiling carries an independent Gaussian mass with variance equal
//!   to the cell area, a grid value picks up `sqrt` of the exact in-region
//!   area of every cell, and the unbounded strip above the tiling enters as
//!   an analytic per-point variance top-up.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Covariance kernel of the limit process, indexed by the tail exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovKernel {
    beta: f64,
}

impl CovKernel {
    pub fn new(beta: f64) -> Result<Self> {
        if (0.0..1.0).contains(&beta) {
            Ok(CovKernel { beta })
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel index must lie in [0, 1), got {beta}"
            )))
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Kernel value, symmetric in its arguments.
    pub fn cov(&self, u: f64, s: f64) -> f64 {
        debug_assert!(u >= 0.0 && s >= 0.0);
        let (hi, lo) = if u >= s { (u, s) } else { (s, u) };
        hi.powf(1.0 - self.beta) - (hi - lo).powf(1.0 - self.beta)
    }

    /// Kernel matrix on a grid.
    pub fn matrix(&self, grid: &[f64]) -> DMatrix<f64> {
        let n = grid.len();
        DMatrix::from_fn(n, n, |i, j| self.cov(grid[i], grid[j]))
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "grid must be nonempty, strictly increasing, nonnegative".into(),
        ));
    }
    Ok(())
}

/// Draw `n_samples` i.i.d. Gaussian vectors with the kernel covariance on
/// `grid` via Cholesky factorization. Entries at `u = 0` are exactly zero.
pub fn sample_cholesky(
    kernel: &CovKernel,
    grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    validate_grid(grid)?;
    let positive: Vec<f64> = grid.iter().copied().filter(|&u| u > 0.0).collect();
    let offset = grid.len() - positive.len();
    let factor = if positive.is_empty() {
        None
    } else {
        Some(cholesky_with_jitter(&kernel.matrix(&positive))?)
    };
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut row = vec![0.0; grid.len()];
            if let Some(l) = &factor {
                let z = DVector::from_fn(positive.len(), |_, _| rng.sample(StandardNormal));
                let v = l * z;
                row[offset..].copy_from_slice(v.as_slice());
            }
            row
        })
        .collect();
    Ok(samples)
}

/// Lower-triangular Cholesky factor, escalating a diagonal jitter through
/// 0, 1e-14, 1e-12, 1e-10 before giving up.
fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for jitter in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol.l());
        }
    }
    Err(Error::FactorizationFailed)
}

fn sample_rng(seed: u64, sample_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index as u64);
    rng
}

/// Exact area of the intersection of the cell
/// `[x_lo, x_hi] x [z_lo, z_hi]` with the region
/// `{ 0 <= x <= u, z < (u - x)^{-beta} }`.
///
/// The boundary curve `z = (u - x)^{-beta}` is increasing in `x` on `[0, u)`,
/// so the intersection splits into a full-height segment and a segment under
/// the curve, both with closed-form areas. `z_hi` may be infinite.
pub fn region_area(beta: f64, u: f64, x_lo: f64, x_hi: f64, z_lo: f64, z_hi: f64) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0);
    debug_assert!(z_lo >= 0.0 && z_hi >= z_lo && x_hi >= x_lo);
    let a = x_lo.max(0.0);
    let b = x_hi.min(u);
    if a >= b || z_hi <= z_lo {
        return 0.0;
    }
    // x beyond which the cell's full height lies under the curve
    let x_full = if z_hi.is_finite() {
        u - z_hi.powf(-1.0 / beta)
    } else {
        u
    };
    // x below which the curve stays under the cell floor
    let x_none = if z_lo > 0.0 {
        u - z_lo.powf(-1.0 / beta)
    } else {
        f64::NEG_INFINITY
    };
    let mut area = 0.0;
    if z_hi.is_finite() {
        let fa = x_full.max(a);
        if fa < b {
            area += (z_hi - z_lo) * (b - fa);
        }
    }
    let pa = x_none.max(a);
    let pb = x_full.min(b);
    if pa < pb {
        // antiderivative of (u - x)^{-beta}
        let prim = |x: f64| -(u - x).powf(1.0 - beta) / (1.0 - beta);
        area += (prim(pb) - prim(pa)) - z_lo * (pb - pa);
    }
    area.max(0.0)
}

/// Tiling parameters for the white-noise integral sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheetDiscretization {
    /// Uniform x-columns over `[0, u_max]` (grid points are always inserted
    /// as column boundaries).
    pub x_cells: usize,
    /// Uniform z-bands below `z_split`.
    pub z_cells: usize,
    /// Boundary between uniform z-bands and geometric bands above; below it
    /// the indicator is 1 for every x in `[0, u]` at the smallest grid point.
    /// `None` picks the default `max_u u^{-beta}` over the grid.
    pub z_split: Option<f64>,
    /// Growth factor of the geometric z-bands.
    pub geometric_ratio: f64,
    /// Relative variance allowed to the analytic top-up strip; sets `z_max`.
    pub remainder_rel: f64,
    /// Relative deviation of the reconstructed variance from `u^{1-beta}`
    /// beyond which the tiling is rejected as too coarse.
    pub variance_tol: f64,
}

impl Default for SheetDiscretization {
    fn default() -> Self {
        SheetDiscretization {
            x_cells: 192,
            z_cells: 192,
            z_split: None,
            geometric_ratio: 1.2,
            remainder_rel: 1e-3,
            variance_tol: 1e-3,
        }
    }
}

/// Prebuilt per-grid-point cell weights for the sheet sampler.
pub struct SheetSampler {
    grid: Vec<f64>,
    /// Per active cell, one weight per grid point: `sqrt((1-beta) * area)` of
    /// the cell's in-region part. Flat, cell-major.
    weights: Vec<f64>,
    /// Standard deviation of the analytic top-up per grid point.
    remainder_sd: Vec<f64>,
    n_cells: usize,
}

impl SheetSampler {
    pub fn build(kernel: &CovKernel, grid: &[f64], disc: &SheetDiscretization) -> Result<Self> {
        let beta = kernel.beta();
        if beta == 0.0 {
            return Err(Error::SheetBetaZero);
        }
        validate_grid(grid)?;
        if disc.x_cells == 0 || disc.z_cells == 0 || disc.geometric_ratio <= 1.0 {
            return Err(Error::InvalidParameter("degenerate sheet tiling".into()));
        }
        let u_max = *grid.last().unwrap();
        let u_min_pos = grid
            .iter()
            .copied()
            .find(|&u| u > 0.0)
            .ok_or_else(|| Error::InvalidParameter("grid has no positive point".into()))?;
        let z_split = disc.z_split.unwrap_or_else(|| u_min_pos.powf(-beta));
        // z_max caps the tiled strip: above it the region variance is at most
        // remainder_rel of the smallest grid variance
        let z_max = ((beta / (1.0 - beta)) / (disc.remainder_rel * u_min_pos.powf(1.0 - beta)))
            .powf(beta / (1.0 - beta))
            .max(z_split * disc.geometric_ratio);

        let mut x_bounds: Vec<f64> = (0..=disc.x_cells)
            .map(|i| u_max * i as f64 / disc.x_cells as f64)
            .chain(grid.iter().copied().filter(|&u| u > 0.0 && u < u_max))
            .collect();
        x_bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        x_bounds.dedup();

        let mut z_bounds: Vec<f64> = (0..=disc.z_cells)
            .map(|i| z_split * i as f64 / disc.z_cells as f64)
            .collect();
        let mut z = z_split;
        while z < z_max {
            z *= disc.geometric_ratio;
            z_bounds.push(z.min(z_max));
        }

        let k = grid.len();
        let mut weights = Vec::new();
        let mut n_cells = 0usize;
        let scale = 1.0 - beta;
        for xs in x_bounds.windows(2) {
            let (x_lo, x_hi) = (xs[0], xs[1]);
            for zs in z_bounds.windows(2) {
                let (z_lo, z_hi) = (zs[0], zs[1]);
                let mut cell = vec![0.0; k];
                let mut any = false;
                for (i, &u) in grid.iter().enumerate() {
                    // columns are snapped to grid points, so x_hi <= u or the
                    // cell lies wholly outside the region for this u
                    let a = if u >= x_hi - 1e-12 {
                        region_area(beta, u, x_lo, x_hi, z_lo, z_hi)
                    } else {
                        0.0
                    };
                    if a > 0.0 {
                        any = true;
                    }
                    cell[i] = (scale * a).sqrt();
                }
                if any {
                    weights.extend_from_slice(&cell);
                    n_cells += 1;
                }
            }
        }

        // variance of the strip above z_max, in closed form
        let mut remainder_sd = Vec::with_capacity(k);
        for &u in grid {
            let rem = if u == 0.0 {
                0.0
            } else {
                let w = u.min(z_max.powf(-1.0 / beta));
                (w.powf(1.0 - beta) / (1.0 - beta) - z_max * w).max(0.0)
            };
            remainder_sd.push((scale * rem).sqrt());
        }

        let sampler = SheetSampler {
            grid: grid.to_vec(),
            weights,
            remainder_sd,
            n_cells,
        };
        sampler.check_variance(kernel, disc.variance_tol)?;
        Ok(sampler)
    }

    /// Reconstructed variance at each grid point: sum of squared cell weights
    /// plus the top-up variance.
    pub fn discrete_variance(&self) -> Vec<f64> {
        let k = self.grid.len();
        let mut var = vec![0.0; k];
        for c in 0..self.n_cells {
            for i in 0..k {
                let w = self.weights[c * k + i];
                var[i] += w * w;
            }
        }
        for i in 0..k {
            var[i] += self.remainder_sd[i] * self.remainder_sd[i];
        }
        var
    }

    fn check_variance(&self, kernel: &CovKernel, tol: f64) -> Result<()> {
        let var = self.discrete_variance();
        for (i, &u) in self.grid.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let target = u.powf(1.0 - kernel.beta());
            let rel_err = (var[i] - target).abs() / target;
            if rel_err > tol {
                return Err(Error::DiscretizationTooCoarse { u, rel_err });
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Draw `n_samples` realizations; each shares one set of cell masses
    /// across all grid points.
    pub fn sample(&self, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
        let k = self.grid.len();
        (0..n_samples)
            .into_par_iter()
            .map(|idx| {
                let mut rng = sample_rng(seed, idx);
                let mut vals = vec![0.0; k];
                for c in 0..self.n_cells {
                    let g: f64 = rng.sample(StandardNormal);
                    let row = &self.weights[c * k..(c + 1) * k];
                    for i in 0..k {
                        vals[i] += row[i] * g;
                    }
                }
                for i in 0..k {
                    if self.remainder_sd[i] > 0.0 {
                        let g: f64 = rng.sample(StandardNormal);
                        vals[i] += self.remainder_sd[i] * g;
                    }
                }
                vals
            })
            .collect()
    }
}

/// Sample the limit process through the white-noise integral discretization.
/// The parametrization degenerates at `beta = 0`; that case is served by
/// [`sample_cholesky`].
pub fn sample_sheet(
    kernel: &CovKernel,
    grid: &[f64],
    disc: &SheetDiscretization,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let sampler = SheetSampler::build(kernel, grid, disc)?;
    Ok(sampler.sample(n_samples, seed))
}
