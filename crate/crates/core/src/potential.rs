//! External potentials `V(x)` and the interaction source they induce in the
//! momentum-space continuity equation.

use std::io::BufRead;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::{Coord, GridSpec, Representation};
use crate::spectral;

/// A time-independent potential.
///
/// `Free`, `Linear` and `Harmonic` are polynomials of degree at most two and
/// therefore act as differential operators in momentum space
/// (`x_k ↔ iħ ∂/∂p_k`). `Tabulated` holds arbitrary samples on the position
/// grid; it must be smooth at the grid scale or its transform aliases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    Free,
    /// `V = Σ_k c_k x_k`.
    Linear { slope: Vec<f64> },
    /// `V = Σ_k ½ m_k ω_k² x_k²`.
    Harmonic { mass: Vec<f64>, omega: Vec<f64> },
    /// Samples on the position grid, row-major.
    Tabulated { values: Vec<f64> },
}

impl Potential {
    pub fn name(&self) -> &'static str {
        match self {
            Potential::Free => "free",
            Potential::Linear { .. } => "linear",
            Potential::Harmonic { .. } => "harmonic",
            Potential::Tabulated { .. } => "tabulated",
        }
    }

    pub fn has_operator_form(&self) -> bool {
        !matches!(self, Potential::Tabulated { .. })
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Potential::Free)
    }

    /// Checks parameters against the grid the potential will be used on.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let dof = grid.dof();
        let per_axis = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != dof {
                return Err(Error::Config(format!(
                    "{} potential: `{name}` has {} entries for {dof} degrees of freedom",
                    self.name(),
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{} potential: non-finite `{name}`", self.name())));
            }
            Ok(())
        };
        match self {
            Potential::Free => Ok(()),
            Potential::Linear { slope } => per_axis("slope", slope),
            Potential::Harmonic { mass, omega } => {
                per_axis("mass", mass)?;
                per_axis("omega", omega)?;
                if mass.iter().chain(omega).any(|v| *v <= 0.0) {
                    return Err(Error::Config(
                        "harmonic potential needs mass > 0 and omega > 0".into(),
                    ));
                }
                Ok(())
            }
            Potential::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "tabulated potential has {} values for {} grid points",
                        values.len(),
                        grid.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("tabulated potential has non-finite values".into()));
                }
                Ok(())
            }
        }
    }

    /// Value at a position coordinate. Tabulated potentials need the grid
    /// index instead; see [`Potential::sample`].
    fn analytic(&self, x: &Coord, dof: usize) -> f64 {
        match self {
            Potential::Free | Potential::Tabulated { .. } => 0.0,
            Potential::Linear { slope } => (0..dof).map(|k| slope[k] * x[k]).sum(),
            Potential::Harmonic { mass, omega } => (0..dof)
                .map(|k| 0.5 * mass[k] * omega[k] * omega[k] * x[k] * x[k])
                .sum(),
        }
    }

    /// `V` sampled on the position grid.
    pub fn sample(&self, grid: &GridSpec) -> Result<RealField> {
        self.validate(grid)?;
        match self {
            Potential::Tabulated { values } => {
                RealField::new(Representation::Position, grid.clone(), values.clone())
            }
            _ => {
                let dof = grid.dof();
                Ok(RealField::from_fn(Representation::Position, grid.clone(), |x| {
                    self.analytic(x, dof)
                }))
            }
        }
    }

    /// Pointwise product `V(x) ψ(x)`.
    pub fn apply(&self, psi: &ComplexField) -> Result<ComplexField> {
        psi.expect(Representation::Position)?;
        let v = self.sample(psi.grid())?;
        let values = psi
            .values()
            .iter()
            .zip(v.values())
            .map(|(p, v)| p * v)
            .collect();
        ComplexField::new(Representation::Position, psi.grid().clone(), values, psi.time())
    }

    /// `F_p[V ψ]` evaluated through the momentum-space differential operator,
    /// independently of the position-space product.
    pub fn apply_operator_form(&self, psi_p: &ComplexField) -> Result<ComplexField> {
        psi_p.expect(Representation::Momentum)?;
        self.validate(psi_p.grid())?;
        let hbar = psi_p.grid().hbar();
        let mut out = ComplexField::zeros(Representation::Momentum, psi_p.grid().clone(), psi_p.time());
        match self {
            Potential::Free => {}
            Potential::Linear { slope } => {
                for (k, c) in slope.iter().enumerate() {
                    let d = spectral::symmetric_derivative(psi_p, k, 1);
                    let factor = Complex64::new(0.0, c * hbar);
                    for (o, v) in out.values_mut().iter_mut().zip(d) {
                        *o += factor * v;
                    }
                }
            }
            Potential::Harmonic { mass, omega } => {
                for k in 0..mass.len() {
                    let d2 = spectral::symmetric_derivative(psi_p, k, 2);
                    let factor = -0.5 * mass[k] * omega[k] * omega[k] * hbar * hbar;
                    for (o, v) in out.values_mut().iter_mut().zip(d2) {
                        *o += factor * v;
                    }
                }
            }
            Potential::Tabulated { .. } => return Err(Error::UnsupportedPotential("tabulated")),
        }
        Ok(out)
    }

    /// Interaction source `I = (2/ħ) Re(i ψ̃* F_p[V ψ])` on the momentum grid.
    ///
    /// `psi_x` and `psi_p` must describe the same state at the same time.
    pub fn interaction_source(&self, psi_x: &ComplexField, psi_p: &ComplexField) -> Result<RealField> {
        psi_p.expect(Representation::Momentum)?;
        if psi_x.grid() != psi_p.grid() {
            return Err(Error::GridMismatch("position and momentum fields differ".into()));
        }
        if self.is_free() {
            return Ok(RealField::zeros(Representation::Momentum, psi_p.grid().clone()));
        }
        let transformed = self.apply(psi_x)?.to_momentum()?;
        Ok(source_from(psi_p, &transformed))
    }

    /// The interaction source together with its magnitude
    /// `(2/ħ)|ψ̃||F_p[Vψ]|`, the size of the terms whose imaginary part it
    /// is. `|I| ≤` magnitude pointwise; a source far below its magnitude is
    /// dominated by rounding.
    pub fn interaction_source_parts(&self, psi_x: &ComplexField, psi_p: &ComplexField) -> Result<(RealField, RealField)> {
        let source = self.interaction_source(psi_x, psi_p)?;
        if self.is_free() {
            return Ok((source.clone(), source));
        }
        let transformed = self.apply(psi_x)?.to_momentum()?;
        let hbar = psi_p.grid().hbar();
        let values = psi_p
            .values()
            .iter()
            .zip(transformed.values())
            .map(|(a, b)| (2.0 / hbar) * a.norm() * b.norm())
            .collect();
        let magnitude = RealField::new(Representation::Momentum, psi_p.grid().clone(), values)?;
        Ok((source, magnitude))
    }

    /// Interaction source computed from [`Potential::apply_operator_form`].
    pub fn interaction_source_operator_form(&self, psi_p: &ComplexField) -> Result<RealField> {
        let transformed = self.apply_operator_form(psi_p)?;
        Ok(source_from(psi_p, &transformed))
    }

    /// Quadrature expectation value `<V>` for a position-space state.
    pub fn expectation(&self, psi_x: &ComplexField) -> Result<f64> {
        psi_x.expect(Representation::Position)?;
        let v = self.sample(psi_x.grid())?;
        Ok(psi_x
            .values()
            .iter()
            .zip(v.values())
            .map(|(p, v)| p.norm_sqr() * v)
            .sum::<f64>()
            * psi_x.cell_volume())
    }

    /// Reads `axis0[,axis1],value` rows (one header line) and matches them to
    /// the position grid.
    pub fn tabulated_from_csv(reader: impl BufRead, grid: &GridSpec, source: &str) -> Result<Self> {
        let dof = grid.dof();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            message: format!("line {line}: {message}"),
        };
        let mut values = vec![f64::NAN; grid.len()];
        let tolerance: Vec<f64> = (0..dof).map(|k| 1e-6 * grid.spacing(k)).collect();
        for (n, line) in reader.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(n + 1, e.to_string()))?;
            if cols.len() != dof + 1 {
                return Err(parse_err(n + 1, format!("expected {} columns", dof + 1)));
            }
            let mut idx = [0usize; crate::grid::MAX_DOF];
            for k in 0..dof {
                let x0 = grid.position(k, 0);
                let j = ((cols[k] - x0) / grid.spacing(k)).round();
                if j < 0.0
                    || j as usize >= grid.axis(k).points
                    || (grid.position(k, j as usize) - cols[k]).abs() > tolerance[k]
                {
                    return Err(parse_err(n + 1, format!("coordinate {} is not a grid point", cols[k])));
                }
                idx[k] = j as usize;
            }
            values[grid.ravel(&idx[..dof])] = cols[dof];
        }
        if let Some(missing) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse {
                path: source.to_string(),
                message: format!("no value for grid point {:?}", &grid.point(Representation::Position, missing)[..dof]),
            });
        }
        Ok(Potential::Tabulated { values })
    }
}

fn source_from(psi_p: &ComplexField, transformed: &ComplexField) -> RealField {
    let hbar = psi_p.grid().hbar();
    let values = psi_p
        .values()
        .iter()
        .zip(transformed.values())
        .map(|(psi, vpsi)| -(2.0 / hbar) * (psi.conj() * vpsi).im)
        .collect();
    RealField::new(Representation::Momentum, psi_p.grid().clone(), values).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectral_derivative;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::one_dim(512, 0.0, 40.0).unwrap()
    }

    fn packet(x0: f64, p0: f64) -> ComplexField {
        let mut psi = ComplexField::from_fn(Representation::Position, grid(), 0.0, |c| {
            let x = c[0] - x0;
            Complex64::from_polar((-x * x / 2.0).exp(), p0 * c[0] + 0.1 * c[0] * c[0])
        });
        psi.normalize();
        psi
    }

    #[test]
    fn free_potential_is_zero() {
        let psi = packet(1.0, 0.5);
        let v = Potential::Free.apply(&psi).unwrap();
        assert!(v.values().iter().all(|z| *z == Complex64::default()));
        let source = Potential::Free.interaction_source(&psi, &psi.to_momentum().unwrap()).unwrap();
        assert_eq!(source.max_abs(), 0.0);
    }

    #[test]
    fn linear_multiplies_by_cx() {
        let psi = packet(0.0, 0.0);
        let v = Potential::Linear { slope: vec![2.0] }.apply(&psi).unwrap();
        for (i, z) in v.values().iter().enumerate() {
            let x = psi.point(i)[0];
            assert_eq!(*z, psi.values()[i] * (2.0 * x));
        }
    }

    #[test]
    fn harmonic_ground_state_energy() {
        // Hψ₀ = ħω/2 ψ₀ with the kinetic term applied spectrally.
        let psi = ComplexField::from_fn(Representation::Position, grid(), 0.0, |c| {
            Complex64::new(PI.powf(-0.25) * (-c[0] * c[0] / 2.0).exp(), 0.0)
        });
        let harmonic = Potential::Harmonic { mass: vec![1.0], omega: vec![1.0] };
        let vpsi = harmonic.apply(&psi).unwrap();
        let mut kinetic = psi.to_momentum().unwrap();
        kinetic.multiply_by(|p| Complex64::new(0.5 * p[0] * p[0], 0.0));
        let kpsi = kinetic.to_position().unwrap();
        for i in 0..psi.values().len() {
            let h = kpsi.values()[i] + vpsi.values()[i];
            assert!((h - 0.5 * psi.values()[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn linear_source_is_minus_c_density_gradient() {
        let psi = packet(0.5, -0.3);
        let psi_p = psi.to_momentum().unwrap();
        let c = 2.0;
        let source = Potential::Linear { slope: vec![c] }.interaction_source(&psi, &psi_p).unwrap();
        let grad = spectral_derivative(&psi_p.density(), 0);
        let scale = source.max_abs();
        for (s, g) in source.values().iter().zip(grad.values()) {
            assert!((s + c * g).abs() <= 1e-9 * scale, "{s} vs {}", -c * g);
        }
    }

    #[test]
    fn source_is_conservative_and_matches_operator_form() {
        let psi = packet(0.7, 0.4);
        let psi_p = psi.to_momentum().unwrap();
        for v in [
            Potential::Linear { slope: vec![-1.3] },
            Potential::Harmonic { mass: vec![2.0], omega: vec![0.7] },
        ] {
            let a = v.interaction_source(&psi, &psi_p).unwrap();
            let b = v.interaction_source_operator_form(&psi_p).unwrap();
            assert!(a.integral().abs() <= 1e-8 * a.l1_norm());
            let rel = a.l2_distance(&b).unwrap() / a.l2_norm();
            assert!(rel < 1e-8, "{}: {rel}", v.name());
        }
    }

    #[test]
    fn harmonic_parameters_validated() {
        let g = grid();
        assert!(Potential::Harmonic { mass: vec![0.0], omega: vec![1.0] }.validate(&g).is_err());
        assert!(Potential::Harmonic { mass: vec![1.0], omega: vec![-1.0] }.validate(&g).is_err());
        assert!(Potential::Linear { slope: vec![1.0, 2.0] }.validate(&g).is_err());
        assert!(Potential::Tabulated { values: vec![0.0; 3] }.validate(&g).is_err());
    }

    #[test]
    fn tabulated_operator_form_is_unsupported() {
        let g = grid();
        let v = Potential::Tabulated { values: vec![0.0; g.len()] };
        let psi_p = packet(0.0, 0.0).to_momentum().unwrap();
        assert!(matches!(v.apply_operator_form(&psi_p), Err(Error::UnsupportedPotential(_))));
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let g = GridSpec::one_dim(64, 0.0, 8.0).unwrap();
        let harmonic = Potential::Harmonic { mass: vec![1.0], omega: vec![1.0] };
        let field = harmonic.sample(&g).unwrap();
        let mut csv = Vec::new();
        field.write_csv(&mut csv, "axis", "value").unwrap();
        let loaded = Potential::tabulated_from_csv(csv.as_slice(), &g, "mem").unwrap();
        assert_eq!(loaded, Potential::Tabulated { values: field.values().to_vec() });

        let short = b"axis0,value\n0,1\n";
        assert!(Potential::tabulated_from_csv(&short[..], &g, "mem").is_err());
        let off_grid = b"axis0,value\n0.01,1\n";
        assert!(Potential::tabulated_from_csv(&off_grid[..], &g, "mem").is_err());
    }
}
