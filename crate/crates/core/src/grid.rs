//! Uniform periodic grids and their Fourier-dual momentum grids.
//!
//! A position axis with `n` points, centre `c` and full width `L` samples
//! `x_j = c - L/2 + j Δ` with `Δ = L/n`. Its dual momentum axis is always
//! centred on zero: `p_k = (k - n/2) Δp` with `Δp = 2πħ / (n Δ)`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest number of scalar degrees of freedom the engine supports.
pub const MAX_DOF: usize = 2;

/// Smallest accepted point count per axis.
pub const MIN_POINTS: usize = 64;

/// A coordinate tuple; entries past `dof` are zero.
pub type Coord = [f64; MAX_DOF];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Position,
    Momentum,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Position => "position",
            Representation::Momentum => "momentum",
        }
    }

    pub fn dual(self) -> Self {
        match self {
            Representation::Position => Representation::Momentum,
            Representation::Momentum => Representation::Position,
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One axis of a position grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub points: usize,
    pub center: f64,
    pub extent: f64,
}

impl Axis {
    pub fn new(points: usize, center: f64, extent: f64) -> Self {
        Axis {
            points,
            center,
            extent,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !self.points.is_power_of_two() || self.points < MIN_POINTS {
            return Err(Error::Config(format!(
                "axis {index}: point count {} must be a power of two >= {MIN_POINTS}",
                self.points
            )));
        }
        if !(self.extent > 0.0) || !self.extent.is_finite() {
            return Err(Error::Config(format!(
                "axis {index}: extent {} must be positive and finite",
                self.extent
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::Config(format!("axis {index}: centre must be finite")));
        }
        Ok(())
    }
}

/// Precomputed FFT plans and phase factors for one axis.
struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{-i x_0 p_k / ħ} Δ / sqrt(2πħ)`, applied after the forward FFT.
    forward_phase: Vec<Complex64>,
    /// `e^{+i x_0 p_k / ħ}`, applied before the inverse FFT.
    inverse_phase: Vec<Complex64>,
    /// `Δp / sqrt(2πħ)`, applied after the inverse FFT.
    inverse_scale: f64,
}

/// Direction of a transform between the two representations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Direction {
    ToMomentum,
    ToPosition,
}

/// Grid specification shared by every field of a run.
///
/// Cloning is cheap: the FFT plans live behind an `Arc` and are safe to use
/// from many threads at once (each call allocates its own scratch buffer).
#[derive(Clone)]
pub struct GridSpec {
    axes: Vec<Axis>,
    hbar: f64,
    plans: Arc<Vec<AxisPlan>>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("axes", &self.axes)
            .field("hbar", &self.hbar)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes && self.hbar == other.hbar
    }
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, hbar: f64) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DOF {
            return Err(Error::Config(format!(
                "grids support 1..={MAX_DOF} degrees of freedom, got {}",
                axes.len()
            )));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::Config(format!("hbar = {hbar} must be positive")));
        }
        for (i, axis) in axes.iter().enumerate() {
            axis.validate(i)?;
        }

        let mut planner = FftPlanner::new();
        let norm = (2.0 * std::f64::consts::PI * hbar).sqrt();
        let plans = axes
            .iter()
            .map(|axis| {
                let n = axis.points;
                let dx = axis.spacing();
                let dp = 2.0 * std::f64::consts::PI * hbar / axis.extent;
                let x0 = axis.center - 0.5 * axis.extent;
                let (forward_phase, inverse_phase) = (0..n)
                    .map(|k| {
                        let p = (k as f64 - (n / 2) as f64) * dp;
                        let phase = Complex64::from_polar(1.0, -x0 * p / hbar);
                        (phase * (dx / norm), phase.conj())
                    })
                    .unzip();
                AxisPlan {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                    forward_phase,
                    inverse_phase,
                    inverse_scale: dp / norm,
                }
            })
            .collect();

        Ok(GridSpec {
            axes,
            hbar,
            plans: Arc::new(plans),
        })
    }

    /// One-dimensional grid with ħ = 1.
    pub fn one_dim(points: usize, center: f64, extent: f64) -> Result<Self> {
        GridSpec::new(vec![Axis::new(points, center, extent)], 1.0)
    }

    pub fn dof(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major stride of axis `k` in the flat value array.
    pub fn stride(&self, k: usize) -> usize {
        self.axes[k + 1..].iter().map(|a| a.points).product()
    }

    /// Position spacing Δ of axis `k`.
    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    /// Momentum spacing `2πħ / (n Δ)` of axis `k`.
    pub fn dual_spacing(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar / (self.axes[k].points as f64 * self.spacing(k))
    }

    pub fn step(&self, repr: Representation, k: usize) -> f64 {
        match repr {
            Representation::Position => self.spacing(k),
            Representation::Momentum => self.dual_spacing(k),
        }
    }

    /// Quadrature weight of one grid cell.
    pub fn cell_volume(&self, repr: Representation) -> f64 {
        (0..self.dof()).map(|k| self.step(repr, k)).product()
    }

    pub fn position(&self, k: usize, j: usize) -> f64 {
        let axis = &self.axes[k];
        axis.center - 0.5 * axis.extent + j as f64 * axis.spacing()
    }

    pub fn momentum(&self, k: usize, j: usize) -> f64 {
        (j as f64 - (self.axes[k].points / 2) as f64) * self.dual_spacing(k)
    }

    pub fn coordinate(&self, repr: Representation, k: usize, j: usize) -> f64 {
        match repr {
            Representation::Position => self.position(k, j),
            Representation::Momentum => self.momentum(k, j),
        }
    }

    /// All coordinates of axis `k` in the given representation.
    pub fn coordinates(&self, repr: Representation, k: usize) -> Vec<f64> {
        (0..self.axes[k].points)
            .map(|j| self.coordinate(repr, k, j))
            .collect()
    }

    /// Lowest and highest grid coordinate of axis `k`.
    pub fn bounds(&self, repr: Representation, k: usize) -> (f64, f64) {
        let n = self.axes[k].points;
        (self.coordinate(repr, k, 0), self.coordinate(repr, k, n - 1))
    }

    /// Per-axis indices of a flat index.
    pub fn unravel(&self, mut index: usize) -> [usize; MAX_DOF] {
        let mut out = [0; MAX_DOF];
        for k in (0..self.dof()).rev() {
            let n = self.axes[k].points;
            out[k] = index % n;
            index /= n;
        }
        out
    }

    pub fn ravel(&self, indices: &[usize]) -> usize {
        indices
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.points + i)
    }

    /// Coordinates of a flat grid index.
    pub fn point(&self, repr: Representation, index: usize) -> Coord {
        let idx = self.unravel(index);
        let mut out = [0.0; MAX_DOF];
        for k in 0..self.dof() {
            out[k] = self.coordinate(repr, k, idx[k]);
        }
        out
    }

    /// Applies `f` to every one-dimensional line of `data` along `axis`.
    pub(crate) fn for_each_line<T: Copy + Default>(
        &self,
        data: &mut [T],
        axis: usize,
        mut f: impl FnMut(&mut [T]),
    ) {
        let n = self.axes[axis].points;
        let stride = self.stride(axis);
        if stride == 1 {
            data.chunks_exact_mut(n).for_each(f);
            return;
        }
        let block = n * stride;
        let mut line = vec![T::default(); n];
        for outer in data.chunks_exact_mut(block) {
            for inner in 0..stride {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = outer[inner + j * stride];
                }
                f(&mut line);
                for (j, value) in line.iter().enumerate() {
                    outer[inner + j * stride] = *value;
                }
            }
        }
    }

    /// Continuum-normalized transform of `data` along every axis.
    pub(crate) fn transform(&self, data: &mut [Complex64], direction: Direction) {
        for axis in 0..self.dof() {
            let plan = &self.plans[axis];
            let fft = match direction {
                Direction::ToMomentum => &plan.forward,
                Direction::ToPosition => &plan.inverse,
            };
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            self.for_each_line(data, axis, |line| match direction {
                Direction::ToMomentum => {
                    for v in line.iter_mut().skip(1).step_by(2) {
                        *v = -*v;
                    }
                    fft.process_with_scratch(line, &mut scratch);
                    for (v, w) in line.iter_mut().zip(&plan.forward_phase) {
                        *v *= w;
                    }
                }
                Direction::ToPosition => {
                    for (v, w) in line.iter_mut().zip(&plan.inverse_phase) {
                        *v *= w;
                    }
                    fft.process_with_scratch(line, &mut scratch);
                    for (j, v) in line.iter_mut().enumerate() {
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        *v *= sign * plan.inverse_scale;
                    }
                }
            });
        }
    }

    /// Plain (unnormalized, unshifted) FFT along one axis, used for spectral
    /// calculus on real fields.
    pub(crate) fn raw_fft(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let plan = &self.plans[axis];
        let fft = if inverse { &plan.inverse } else { &plan.forward };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        self.for_each_line(data, axis, |line| fft.process_with_scratch(line, &mut scratch));
    }

    /// Angular wavenumbers conjugate to the `repr` coordinate of axis `k`
    /// in FFT order, with the Nyquist entry reported separately.
    pub(crate) fn wavenumbers(&self, repr: Representation, k: usize) -> Vec<f64> {
        let n = self.axes[k].points;
        let period = n as f64 * self.step(repr, k);
        (0..n)
            .map(|m| {
                let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * std::f64::consts::PI * signed / period
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_axes() {
        assert!(GridSpec::one_dim(100, 0.0, 10.0).is_err());
        assert!(GridSpec::one_dim(32, 0.0, 10.0).is_err());
        assert!(GridSpec::one_dim(64, 0.0, 0.0).is_err());
        assert!(GridSpec::one_dim(64, 0.0, -1.0).is_err());
        assert!(GridSpec::new(vec![Axis::new(64, 0.0, 1.0); 3], 1.0).is_err());
        assert!(GridSpec::new(vec![Axis::new(64, 0.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn dual_spacing_relation() {
        for &(n, extent, hbar) in &[(64, 10.0, 1.0), (512, 40.0, 1.0), (256, 7.3, 0.5)] {
            let grid = GridSpec::new(vec![Axis::new(n, 0.3, extent)], hbar).unwrap();
            let lhs = grid.dual_spacing(0) * n as f64;
            let rhs = 2.0 * std::f64::consts::PI * hbar / grid.spacing(0);
            assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs);
        }
    }

    #[test]
    fn momentum_grid_is_centred() {
        let grid = GridSpec::one_dim(64, 5.0, 20.0).unwrap();
        assert_eq!(grid.momentum(0, 32), 0.0);
        assert!((grid.position(0, 0) + 5.0).abs() < 1e-15);
        assert!((grid.position(0, 32) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn ravel_roundtrip() {
        let grid = GridSpec::new(vec![Axis::new(64, 0.0, 1.0), Axis::new(128, 0.0, 1.0)], 1.0)
            .unwrap();
        for idx in [0, 1, 127, 128, 5000, grid.len() - 1] {
            let parts = grid.unravel(idx);
            assert_eq!(grid.ravel(&parts[..2]), idx);
        }
        assert_eq!(grid.stride(0), 128);
        assert_eq!(grid.stride(1), 1);
    }
}
