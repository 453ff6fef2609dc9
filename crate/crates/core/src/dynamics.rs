//! Unitary split-step propagation of the Schrödinger equation.
//!
//! Strang splitting: half kinetic step in the momentum representation, full
//! potential step in the position representation, half kinetic step. The
//! state is carried in the momentum representation between steps. For the
//! free potential the potential step is skipped and the evolution is the
//! exact phase `e^{-i T(p) δt/ħ}`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{GridSpec, Representation};
use crate::potential::Potential;

/// Cells at each grid edge inspected by [`check_boundary_mass`].
pub const BOUNDARY_CELLS: usize = 3;
/// Largest probability allowed inside the boundary cells.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub steps_per_frame: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            dt: 1e-3,
            steps_per_frame: 10,
        }
    }
}

/// Precomputed phase factors for one time step.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: GridSpec,
    potential: Potential,
    masses: Vec<f64>,
    dt: f64,
    kinetic: Vec<f64>,
    kinetic_half: Vec<Complex64>,
    kinetic_full: Vec<Complex64>,
    potential_phase: Option<Vec<Complex64>>,
}

impl Propagator {
    pub fn new(grid: &GridSpec, potential: &Potential, masses: &[f64], dt: f64) -> Result<Self> {
        potential.validate(grid)?;
        if masses.len() != grid.dof() || masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config(format!(
                "need one positive mass per degree of freedom, got {masses:?}"
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step {dt} must be positive")));
        }
        let hbar = grid.hbar();
        let kinetic: Vec<f64> = (0..grid.len())
            .map(|i| {
                let p = grid.point(Representation::Momentum, i);
                (0..grid.dof()).map(|k| p[k] * p[k] / (2.0 * masses[k])).sum()
            })
            .collect();
        let max_phase = kinetic.iter().fold(0.0f64, |m, t| m.max(*t)) * dt / hbar;
        if max_phase >= std::f64::consts::PI {
            return Err(Error::Config(format!(
                "time step {dt} too large: kinetic phase per step reaches {max_phase:.3} ≥ π"
            )));
        }
        let kinetic_half = kinetic
            .iter()
            .map(|t| Complex64::from_polar(1.0, -t * dt / (2.0 * hbar)))
            .collect();
        let kinetic_full = kinetic
            .iter()
            .map(|t| Complex64::from_polar(1.0, -t * dt / hbar))
            .collect();
        let potential_phase = if potential.is_free() {
            None
        } else {
            let v = potential.sample(grid)?;
            Some(
                v.values()
                    .iter()
                    .map(|v| Complex64::from_polar(1.0, -v * dt / hbar))
                    .collect(),
            )
        };
        Ok(Propagator {
            grid: grid.clone(),
            potential: potential.clone(),
            masses: masses.to_vec(),
            dt,
            kinetic,
            kinetic_half,
            kinetic_full,
            potential_phase,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Advances a momentum-representation state by one step (time is not
    /// touched; callers own the clock).
    pub fn step(&self, psi_p: &mut ComplexField) -> Result<()> {
        psi_p.expect(Representation::Momentum)?;
        if psi_p.grid() != &self.grid {
            return Err(Error::GridMismatch("propagator built for another grid".into()));
        }
        match &self.potential_phase {
            None => mul(psi_p.values_mut(), &self.kinetic_full),
            Some(phase) => {
                mul(psi_p.values_mut(), &self.kinetic_half);
                let mut psi_x = psi_p.to_position()?;
                mul(psi_x.values_mut(), phase);
                *psi_p = psi_x.to_momentum()?;
                mul(psi_p.values_mut(), &self.kinetic_half);
            }
        }
        Ok(())
    }

    /// `<T>` for a momentum-representation state.
    pub fn kinetic_energy(&self, psi_p: &ComplexField) -> f64 {
        psi_p
            .values()
            .iter()
            .zip(&self.kinetic)
            .map(|(v, t)| v.norm_sqr() * t)
            .sum::<f64>()
            * psi_p.cell_volume()
    }

    /// `<H> = <T> + <V>`.
    pub fn energy(&self, psi_x: &ComplexField, psi_p: &ComplexField) -> Result<f64> {
        Ok(self.kinetic_energy(psi_p) + self.potential.expectation(psi_x)?)
    }
}

fn mul(values: &mut [Complex64], factors: &[Complex64]) {
    for (v, f) in values.iter_mut().zip(factors) {
        *v *= f;
    }
}

/// Probability inside the outermost [`BOUNDARY_CELLS`] cells of each axis,
/// both edges combined; returns the worst axis.
pub fn boundary_mass(field: &ComplexField) -> (usize, f64) {
    let grid = field.grid();
    let dv = field.cell_volume();
    (0..grid.dof())
        .map(|k| {
            let n = grid.axis(k).points;
            let mass: f64 = field
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let j = grid.unravel(*i)[k];
                    j < BOUNDARY_CELLS || j >= n - BOUNDARY_CELLS
                })
                .map(|(_, v)| v.norm_sqr())
                .sum::<f64>()
                * dv;
            (k, mass)
        })
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Fails when the state carries more than [`BOUNDARY_MASS_LIMIT`] of its
/// probability next to the edges of the (periodic) grid.
pub fn check_boundary_mass(field: &ComplexField) -> Result<()> {
    let (axis, mass) = boundary_mass(field);
    if mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::BoundaryMass {
            time: field.time(),
            representation: field.representation().name(),
            axis,
            cells: BOUNDARY_CELLS,
            mass,
            limit: BOUNDARY_MASS_LIMIT,
        });
    }
    Ok(())
}

/// Snapshot handed to frame observers.
pub struct Frame<'a> {
    pub index: usize,
    pub time: f64,
    pub psi_x: &'a ComplexField,
    pub psi_p: &'a ComplexField,
}

/// Propagates `psi` for `frames × steps_per_frame` steps, calling `observer`
/// on the initial state and after every frame. Returns the final state in
/// the momentum representation.
pub fn propagate(
    psi: &ComplexField,
    potential: &Potential,
    masses: &[f64],
    config: PropagatorConfig,
    frames: usize,
    mut observer: impl FnMut(&Frame<'_>) -> Result<()>,
) -> Result<ComplexField> {
    if config.steps_per_frame == 0 {
        return Err(Error::Config("steps_per_frame must be at least 1".into()));
    }
    let propagator = Propagator::new(psi.grid(), potential, masses, config.dt)?;
    let mut psi_p = psi.in_representation(Representation::Momentum)?;
    let norm = psi_p.norm_sqr();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized {
            norm,
            tolerance: 1e-6,
        });
    }
    let t0 = psi_p.time();
    let mut psi_x = psi_p.to_position()?;
    check_boundary_mass(&psi_x)?;
    check_boundary_mass(&psi_p)?;
    observer(&Frame {
        index: 0,
        time: t0,
        psi_x: &psi_x,
        psi_p: &psi_p,
    })?;
    for frame in 1..=frames {
        for _ in 0..config.steps_per_frame {
            propagator.step(&mut psi_p)?;
        }
        let time = t0 + (frame * config.steps_per_frame) as f64 * config.dt;
        psi_p.set_time(time);
        psi_x = psi_p.to_position()?;
        check_boundary_mass(&psi_x)?;
        check_boundary_mass(&psi_p)?;
        observer(&Frame {
            index: frame,
            time,
            psi_x: &psi_x,
            psi_p: &psi_p,
        })?;
    }
    Ok(psi_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_phase_wrap() {
        let grid = GridSpec::one_dim(512, 0.0, 10.0).unwrap();
        // p_max ≈ 160: T ≈ 1.3e4, so δt = 1e-3 wraps.
        assert!(Propagator::new(&grid, &Potential::Free, &[1.0], 1e-3).is_err());
        assert!(Propagator::new(&grid, &Potential::Free, &[1.0], 1e-4).is_ok());
        assert!(Propagator::new(&grid, &Potential::Free, &[0.0], 1e-4).is_err());
    }

    #[test]
    fn boundary_mass_detects_edge_probability() {
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let mut psi = ComplexField::from_fn(Representation::Position, grid, 0.0, |c| {
            Complex64::new((-(c[0] - 4.5).powi(2)).exp(), 0.0)
        });
        psi.normalize();
        assert!(matches!(check_boundary_mass(&psi), Err(Error::BoundaryMass { .. })));
    }

    #[test]
    fn free_modulus_is_stable() {
        let grid = GridSpec::one_dim(256, 0.0, 40.0).unwrap();
        let mut psi = ComplexField::from_fn(Representation::Momentum, grid.clone(), 0.0, |c| {
            Complex64::new(PI.powf(-0.25) * (-c[0] * c[0] / 2.0).exp(), 0.0)
        });
        let start = psi.density();
        let prop = Propagator::new(&grid, &Potential::Free, &[1.0], 1e-3).unwrap();
        for _ in 0..1000 {
            prop.step(&mut psi).unwrap();
        }
        let drift = psi
            .density()
            .values()
            .iter()
            .zip(start.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // one rounding per step on a unit-modulus phase product
        assert!(drift <= 1000.0 * f64::EPSILON * start.max_abs(), "{drift}");
    }
}
