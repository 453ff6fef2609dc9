//! Complex wavefunction samples and real scalar fields on a grid.

use std::io::Write;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Coord, Direction, GridSpec, Representation};

/// A wavefunction sampled on the position or the momentum grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    repr: Representation,
    grid: GridSpec,
    values: Vec<Complex64>,
    time: f64,
}

impl ComplexField {
    pub fn new(
        repr: Representation,
        grid: GridSpec,
        values: Vec<Complex64>,
        time: f64,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField {
            repr,
            grid,
            values,
            time,
        })
    }

    pub fn zeros(repr: Representation, grid: GridSpec, time: f64) -> Self {
        let values = vec![Complex64::default(); grid.len()];
        ComplexField {
            repr,
            grid,
            values,
            time,
        }
    }

    /// Samples `f` at every grid point of the given representation.
    pub fn from_fn(
        repr: Representation,
        grid: GridSpec,
        time: f64,
        f: impl Fn(&Coord) -> Complex64,
    ) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(repr, i))).collect();
        ComplexField {
            repr,
            grid,
            values,
            time,
        }
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume(self.repr)
    }

    pub fn point(&self, index: usize) -> Coord {
        self.grid.point(self.repr, index)
    }

    /// Quadrature norm `Σ |ψ|² dV`.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_volume()
    }

    /// Rescales to unit quadrature norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.values.iter_mut().for_each(|v| *v *= inv);
        }
        norm
    }

    /// Quadrature inner product `<self|other>`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        self.check_compatible(other)?;
        let sum: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(sum * self.cell_volume())
    }

    /// `|ψ|²` on the same grid.
    pub fn density(&self) -> RealField {
        RealField {
            repr: self.repr,
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn max_density(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }

    pub(crate) fn check_compatible(&self, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        self.expect(other.repr)
    }

    pub(crate) fn expect(&self, repr: Representation) -> Result<()> {
        if self.repr != repr {
            return Err(Error::Representation {
                expected: repr.name(),
                found: self.repr.name(),
            });
        }
        Ok(())
    }

    /// Fourier transform into the momentum representation,
    /// `ψ̃(p) = (2πħ)^{-d/2} ∫ e^{-i x·p/ħ} ψ(x) dx`.
    pub fn to_momentum(&self) -> Result<ComplexField> {
        self.expect(Representation::Position)?;
        let mut values = self.values.clone();
        self.grid.transform(&mut values, Direction::ToMomentum);
        Ok(ComplexField {
            repr: Representation::Momentum,
            grid: self.grid.clone(),
            values,
            time: self.time,
        })
    }

    /// Inverse of [`ComplexField::to_momentum`].
    pub fn to_position(&self) -> Result<ComplexField> {
        self.expect(Representation::Momentum)?;
        let mut values = self.values.clone();
        self.grid.transform(&mut values, Direction::ToPosition);
        Ok(ComplexField {
            repr: Representation::Position,
            grid: self.grid.clone(),
            values,
            time: self.time,
        })
    }

    /// The same state in the requested representation.
    pub fn in_representation(&self, repr: Representation) -> Result<ComplexField> {
        match (self.repr, repr) {
            (a, b) if a == b => Ok(self.clone()),
            (Representation::Position, _) => self.to_momentum(),
            (Representation::Momentum, _) => self.to_position(),
        }
    }

    /// Multiplies every sample by `f(coordinate)`.
    pub fn multiply_by(&mut self, f: impl Fn(&Coord) -> Complex64) {
        for (i, v) in self.values.iter_mut().enumerate() {
            *v *= f(&self.grid.point(self.repr, i));
        }
    }

    /// Writes `axis0[,axis1],re,im` rows in row-major order.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let dof = self.grid.dof();
        writeln!(out, "{}re,im", axis_header("axis", dof))?;
        for (i, v) in self.values.iter().enumerate() {
            let c = self.point(i);
            for x in &c[..dof] {
                write!(out, "{x},")?;
            }
            writeln!(out, "{},{}", v.re, v.im)?;
        }
        Ok(())
    }
}

pub(crate) fn axis_header(prefix: &str, dof: usize) -> String {
    (0..dof).map(|k| format!("{prefix}{k},")).collect()
}

/// A real scalar field on one of the two grids.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    repr: Representation,
    grid: GridSpec,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(repr: Representation, grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(RealField { repr, grid, values })
    }

    pub fn zeros(repr: Representation, grid: GridSpec) -> Self {
        let values = vec![0.0; grid.len()];
        RealField { repr, grid, values }
    }

    pub fn from_fn(repr: Representation, grid: GridSpec, f: impl Fn(&Coord) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(repr, i))).collect();
        RealField { repr, grid, values }
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume(self.repr)
    }

    /// Quadrature integral `Σ f dV`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Quadrature L1 norm.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume()
    }

    /// Quadrature L2 norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub(crate) fn check_compatible(&self, other: &RealField) -> Result<()> {
        if self.grid != other.grid || self.repr != other.repr {
            return Err(Error::GridMismatch(
                "real fields live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Quadrature L2 norm of `self - other`.
    pub fn l2_distance(&self, other: &RealField) -> Result<f64> {
        self.check_compatible(other)?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sum * self.cell_volume()).sqrt())
    }

    /// Writes `axis0[,axis1],<name>` rows.
    pub fn write_csv(&self, mut out: impl Write, prefix: &str, name: &str) -> Result<()> {
        let dof = self.grid.dof();
        writeln!(out, "{}{name}", axis_header(prefix, dof))?;
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.point(self.repr, i);
            for x in &c[..dof] {
                write!(out, "{x},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}
