//! Sampling initial conditions from grid densities and Kolmogorov–Smirnov
//! comparisons of ensembles against them.
//!
//! A grid density is read as piecewise constant over cells of width `h`
//! centred on the grid points. One-dimensional densities are sampled by
//! inverse CDF, two-dimensional ones by the alias method over cells with a
//! uniform jitter inside the chosen cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::{Coord, Representation, MAX_DOF};

/// Allowed deviation of the total sampled mass from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Kolmogorov 99% critical value coefficient, `D_crit ≈ 1.63/√N`.
pub const KS_99_COEFFICIENT: f64 = 1.63;

pub fn ks_critical_99(n: usize) -> f64 {
    KS_99_COEFFICIENT / (n as f64).sqrt()
}

/// The deterministic RNG stream used for every sample in the engine.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_normalized(density: &RealField) -> Result<f64> {
    if density.values().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Config("density has negative or non-finite entries".into()));
    }
    let total = density.integral();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized {
            norm: total,
            tolerance: NORMALIZATION_TOLERANCE,
        });
    }
    Ok(total)
}

/// Draws `n` points distributed as the piecewise-constant `density`.
pub fn sample_density(density: &RealField, n: usize, seed: u64) -> Result<Vec<Coord>> {
    check_normalized(density)?;
    let grid = density.grid();
    let repr = density.representation();
    let mut rng = rng(seed);
    let steps: Vec<f64> = (0..grid.dof()).map(|k| grid.step(repr, k)).collect();
    let cell_lower = |index: usize| {
        let c = grid.point(repr, index);
        let mut out = [0.0; MAX_DOF];
        for k in 0..grid.dof() {
            out[k] = c[k] - 0.5 * steps[k];
        }
        out
    };

    if grid.dof() == 1 {
        let cdf = cumulative(density.values());
        let total = *cdf.last().expect("non-empty grid");
        Ok((0..n)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                // first cell whose cumulative mass exceeds u
                let cell = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                let below = if cell == 0 { 0.0 } else { cdf[cell - 1] };
                let width = cdf[cell] - below;
                let frac = if width > 0.0 { (u - below) / width } else { 0.5 };
                let mut p = cell_lower(cell);
                p[0] += frac * steps[0];
                p
            })
            .collect())
    } else {
        let alias = WeightedAliasIndex::new(density.values().to_vec())
            .map_err(|e| Error::Config(format!("cannot sample density: {e}")))?;
        Ok((0..n)
            .map(|_| {
                let cell = alias.sample(&mut rng);
                let mut p = cell_lower(cell);
                for k in 0..grid.dof() {
                    p[k] += rng.random::<f64>() * steps[k];
                }
                p
            })
            .collect())
    }
}

/// Initial momenta `p ~ |ψ̃|²`.
pub fn sample_momenta(psi_p: &ComplexField, n: usize, seed: u64) -> Result<Vec<Coord>> {
    psi_p.expect(Representation::Momentum)?;
    sample_density(&psi_p.density(), n, seed)
}

/// Initial positions `x ~ |ψ|²` for the de Broglie–Bohm reference model.
pub fn sample_positions(psi_x: &ComplexField, n: usize, seed: u64) -> Result<Vec<Coord>> {
    psi_x.expect(Representation::Position)?;
    sample_density(&psi_x.density(), n, seed)
}

fn cumulative(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// CDF of a one-dimensional piecewise-constant density.
#[derive(Clone, Debug)]
pub struct PiecewiseCdf {
    lower: f64,
    step: f64,
    cell_mass: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PiecewiseCdf {
    /// `weights[i]` is the (unnormalized) mass of cell `i`, the cells being
    /// `[lower + i·step, lower + (i+1)·step)`.
    pub fn new(lower: f64, step: f64, weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let cell_mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let cumulative = cumulative(&cell_mass);
        PiecewiseCdf {
            lower,
            step,
            cell_mass,
            cumulative,
        }
    }

    /// Marginal CDF of `density` along axis `k`.
    pub fn marginal(density: &RealField, k: usize) -> Self {
        let grid = density.grid();
        let repr = density.representation();
        let n = grid.axis(k).points;
        let mut weights = vec![0.0; n];
        for (i, v) in density.values().iter().enumerate() {
            weights[grid.unravel(i)[k]] += v;
        }
        let step = grid.step(repr, k);
        PiecewiseCdf::new(grid.coordinate(repr, k, 0) - 0.5 * step, step, &weights)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let f = (x - self.lower) / self.step;
        if f <= 0.0 {
            return 0.0;
        }
        let cell = f.floor() as usize;
        if cell >= self.cell_mass.len() {
            return 1.0;
        }
        let below = if cell == 0 { 0.0 } else { self.cumulative[cell - 1] };
        below + self.cell_mass[cell] * (f - cell as f64)
    }
}

/// Two-sided KS statistic `sup |F_N − F|` of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Radial CDF of a 2-D piecewise-constant density about `center`, built by
/// splitting every cell into `sub × sub` sub-cells.
#[derive(Clone, Debug)]
pub struct RadialCdf {
    center: Coord,
    radii: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RadialCdf {
    pub fn new(density: &RealField, center: Coord, sub: usize) -> Self {
        let grid = density.grid();
        let repr = density.representation();
        let (h0, h1) = (grid.step(repr, 0), grid.step(repr, 1));
        let mut entries: Vec<(f64, f64)> = Vec::with_capacity(grid.len() * sub * sub);
        let total: f64 = density.values().iter().sum();
        for (i, v) in density.values().iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let c = grid.point(repr, i);
            let mass = v / total / (sub * sub) as f64;
            for a in 0..sub {
                for b in 0..sub {
                    let x = c[0] - 0.5 * h0 + (a as f64 + 0.5) * h0 / sub as f64 - center[0];
                    let y = c[1] - 0.5 * h1 + (b as f64 + 0.5) * h1 / sub as f64 - center[1];
                    entries.push(((x * x + y * y).sqrt(), mass));
                }
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let radii = entries.iter().map(|e| e.0).collect();
        let cumulative = cumulative(&entries.iter().map(|e| e.1).collect::<Vec<_>>());
        RadialCdf {
            center,
            radii,
            cumulative,
        }
    }

    pub fn radius(&self, p: &Coord) -> f64 {
        ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)).sqrt()
    }

    pub fn eval(&self, r: f64) -> f64 {
        let i = self.radii.partition_point(|x| *x <= r);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }
}

/// KS comparison of an ensemble with a grid density.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct KsReport {
    /// Worst statistic over all tested marginals.
    pub statistic: f64,
    pub critical: f64,
    pub passed: bool,
    /// Per-axis marginal statistics, then the radial one for 2-D.
    pub components: Vec<f64>,
}

/// Equivariance check: KS of the propagated points against the current
/// density. Two-dimensional ensembles are tested per marginal and on the
/// radial CDF about the density mean.
pub fn equivariance_check(points: &[Coord], density: &RealField) -> KsReport {
    let dof = density.grid().dof();
    let mut components: Vec<f64> = (0..dof)
        .map(|k| {
            let cdf = PiecewiseCdf::marginal(density, k);
            let xs: Vec<f64> = points.iter().map(|p| p[k]).collect();
            ks_statistic(&xs, |x| cdf.eval(x))
        })
        .collect();
    if dof == 2 {
        let mean = density_mean(density);
        let radial = RadialCdf::new(density, mean, 4);
        let rs: Vec<f64> = points.iter().map(|p| radial.radius(p)).collect();
        components.push(ks_statistic(&rs, |r| radial.eval(r)));
    }
    let statistic = components.iter().copied().fold(0.0, f64::max);
    let critical = ks_critical_99(points.len());
    KsReport {
        statistic,
        critical,
        passed: statistic <= critical,
        components,
    }
}

/// Quadrature mean coordinate of a density.
pub fn density_mean(density: &RealField) -> Coord {
    let grid = density.grid();
    let total: f64 = density.values().iter().sum();
    let mut mean = [0.0; MAX_DOF];
    for (i, v) in density.values().iter().enumerate() {
        let c = grid.point(density.representation(), i);
        for k in 0..grid.dof() {
            mean[k] += v * c[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, GridSpec};
    use crate::Complex64;
    use std::f64::consts::PI;

    fn gaussian_p(grid: GridSpec) -> ComplexField {
        ComplexField::from_fn(Representation::Momentum, grid, 0.0, |c| {
            Complex64::new(PI.powf(-0.25) * (-c[0] * c[0] / 2.0).exp(), 0.0)
        })
    }

    #[test]
    fn sampling_is_reproducible() {
        let psi = gaussian_p(GridSpec::one_dim(256, 0.0, 40.0).unwrap());
        let a = sample_momenta(&psi, 1000, 7).unwrap();
        let b = sample_momenta(&psi, 1000, 7).unwrap();
        let c = sample_momenta(&psi, 1000, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_sample_mean_within_standard_error() {
        // |ψ̃|² = e^{-p²}/√π has σ = 1/√2.
        let psi = gaussian_p(GridSpec::one_dim(256, 0.0, 40.0).unwrap());
        let n = 10_000;
        let ps = sample_momenta(&psi, n, 42).unwrap();
        let mean = ps.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 * (0.5f64).sqrt() / (n as f64).sqrt(), "{mean}");
        let ks = equivariance_check(&ps, &psi.density());
        assert!(ks.passed, "{ks:?}");
    }

    #[test]
    fn one_hot_cell() {
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let dp = grid.dual_spacing(0);
        let mut values = vec![0.0; 64];
        values[40] = 1.0 / dp;
        let density = RealField::new(Representation::Momentum, grid.clone(), values).unwrap();
        let p40 = grid.momentum(0, 40);
        for p in sample_density(&density, 500, 1).unwrap() {
            assert!((p[0] - p40).abs() <= 0.5 * dp);
        }
    }

    #[test]
    fn unnormalized_density_rejected() {
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let density = RealField::from_fn(Representation::Momentum, grid, |_| 1.0);
        assert!(matches!(sample_density(&density, 10, 0), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn two_dimensional_alias_sampling() {
        let grid = GridSpec::new(vec![Axis::new(64, 0.0, 16.0), Axis::new(64, 0.0, 12.0)], 1.0).unwrap();
        let psi = ComplexField::from_fn(Representation::Momentum, grid, 0.0, |c| {
            let (a, b) = (c[0] - 1.0, c[1] + 0.5);
            Complex64::new((-(a * a + 2.0 * b * b) / 2.0).exp(), 0.0)
        });
        let mut psi = psi;
        psi.normalize();
        let ps = sample_momenta(&psi, 10_000, 3).unwrap();
        let ks = equivariance_check(&ps, &psi.density());
        assert_eq!(ks.components.len(), 3);
        assert!(ks.passed, "{ks:?}");
        // A shifted ensemble must fail.
        let shifted: Vec<Coord> = ps.iter().map(|p| [p[0] + 0.3, p[1]]).collect();
        assert!(!equivariance_check(&shifted, &psi.density()).passed);
    }

    #[test]
    fn piecewise_cdf_is_linear_inside_cells() {
        let cdf = PiecewiseCdf::new(0.0, 1.0, &[1.0, 3.0]);
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert_eq!(cdf.eval(0.5), 0.125);
        assert_eq!(cdf.eval(1.5), 0.625);
        assert_eq!(cdf.eval(5.0), 1.0);
    }
}
