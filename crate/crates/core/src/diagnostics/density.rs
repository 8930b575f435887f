use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{Allocation, GaussComponent};

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// A finite mixture of Gaussians given by weights, means and standard
/// deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let mix = GaussianMixture {
            weights,
            means,
            sds,
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.sds.len() != k {
            return Err(Error::InvalidParameter(
                "mixture needs equally many weights, means and sds".into(),
            ));
        }
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "mixture weights must be nonnegative".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        if self.sds.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.means.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidParameter(
                "mixture needs finite means and positive sds".into(),
            ));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| {
                let z = (x - m) / s;
                w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * normal_cdf(x, *m, *s))
            .sum()
    }

    /// Quantile by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let spread = self
            .means
            .iter()
            .zip(&self.sds)
            .map(|(m, s)| m.abs() + 40.0 * s)
            .fold(1.0, f64::max);
        let (mut lo, mut hi) = (-spread, spread);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u = dist::uniform(rng);
        let mut j = self.weights.len() - 1;
        for (idx, &w) in self.weights.iter().enumerate() {
            if u < w {
                j = idx;
                break;
            }
            u -= w;
        }
        self.means[j] + self.sds[j] * dist::standard_normal(rng)
    }
}

/// Equally spaced evaluation points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi || points < 2 {
            return Err(Error::InvalidParameter(
                "grid needs lo < hi and at least two points".into(),
            ));
        }
        Ok(Grid { lo, hi, points })
    }

    /// 1024 points between the `5e-7` and `1 - 5e-7` quantiles of `mix`, so
    /// that the grid holds `1 - 1e-6` of its mass.
    pub fn covering(mix: &GaussianMixture) -> Self {
        Grid {
            lo: mix.quantile(5e-7),
            hi: mix.quantile(1.0 - 5e-7),
            points: 1024,
        }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    fn trapezoid(&self, values: impl Iterator<Item = f64>) -> f64 {
        let mut total = 0.0;
        let mut first = None;
        let mut last = 0.0;
        for v in values {
            first.get_or_insert(v);
            total += v;
            last = v;
        }
        (total - 0.5 * (first.unwrap_or(0.0) + last)) * self.step()
    }
}

/// A density on a grid together with the mass it puts outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub off_grid_mass: f64,
}

impl DensityEstimate {
    pub fn from_mixture(grid: Grid, mix: &GaussianMixture) -> Self {
        DensityEstimate {
            grid,
            values: grid.xs().iter().map(|&x| mix.pdf(x)).collect(),
            off_grid_mass: mix.cdf(grid.lo) + (1.0 - mix.cdf(grid.hi)),
        }
    }
}

/// Running average of per-iteration mixture densities
/// `sum_j (n_j / n) g(. | x_j)`.
#[derive(Debug, Clone)]
pub struct DensityAccumulator {
    grid: Grid,
    xs: Vec<f64>,
    sums: Vec<f64>,
    off: f64,
    iterations: usize,
}

impl DensityAccumulator {
    pub fn new(grid: Grid) -> Self {
        DensityAccumulator {
            grid,
            xs: grid.xs(),
            sums: vec![0.0; grid.points],
            off: 0.0,
            iterations: 0,
        }
    }

    pub fn add(&mut self, alloc: &Allocation, components: &[GaussComponent]) {
        let n = alloc.n() as f64;
        for (&c, x) in alloc.counts().iter().zip(components) {
            let w = c as f64 / n;
            for (s, &g) in self.sums.iter_mut().zip(&self.xs) {
                *s += w * x.density(g);
            }
            let sd = 1.0 / x.tau().sqrt();
            self.off += w
                * (normal_cdf(self.grid.lo, x.mu(), sd) + 1.0
                    - normal_cdf(self.grid.hi, x.mu(), sd));
        }
        self.iterations += 1;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn finish(&self) -> Result<DensityEstimate> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "density estimate needs at least one iteration".into(),
            ));
        }
        let m = self.iterations as f64;
        Ok(DensityEstimate {
            grid: self.grid,
            values: self.sums.iter().map(|s| s / m).collect(),
            off_grid_mass: self.off / m,
        })
    }
}

/// `1/2 int |f - f_hat|`: trapezoid on the estimate's grid plus the mass
/// either density places off the grid.
pub fn total_variation(f: &GaussianMixture, estimate: &DensityEstimate) -> Result<f64> {
    let grid = estimate.grid;
    let covered = f.cdf(grid.hi) - f.cdf(grid.lo);
    if covered < 1.0 - 1e-6 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "grid [{}, {}] holds only {covered} of the true mass",
            grid.lo, grid.hi
        )));
    }
    let diffs = grid
        .xs()
        .into_iter()
        .zip(&estimate.values)
        .map(|(x, &v)| (f.pdf(x) - v).abs());
    let inside = grid.trapezoid(diffs);
    Ok(0.5 * (inside + estimate.off_grid_mass + (1.0 - covered)))
}
