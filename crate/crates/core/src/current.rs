//! Momentum-space probability currents `j_k` with `Σ_k ∂j_k/∂p_k = I`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{axis_header, ComplexField, RealField};
use crate::grid::Representation;
use crate::potential::Potential;
use crate::Complex64;
use crate::spectral;

/// Poisson sources with `‖I‖₁` below this fraction of their building
/// products are treated as zero.
pub const NOISE_SOURCE: f64 = 1e-12;

/// How the current is constructed from the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurrentMethod {
    /// Bilinear in `ψ̃` and its derivatives; degree ≤ 2 potentials only.
    #[serde(rename = "closed")]
    ClosedForm,
    /// Curl-free `∇̃ ∇̃⁻² I`; any potential.
    #[serde(rename = "poisson")]
    Poisson,
}

impl CurrentMethod {
    pub fn name(self) -> &'static str {
        match self {
            CurrentMethod::ClosedForm => "closed",
            CurrentMethod::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for CurrentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" | "closed-form" => Ok(CurrentMethod::ClosedForm),
            "poisson" => Ok(CurrentMethod::Poisson),
            other => Err(Error::Config(format!("unknown current method `{other}`"))),
        }
    }
}

/// One real component per degree of freedom on the momentum grid.
#[derive(Clone, Debug)]
pub struct CurrentField {
    pub components: Vec<RealField>,
    pub method: CurrentMethod,
    pub time: f64,
}

impl CurrentField {
    pub fn divergence(&self) -> Result<RealField> {
        spectral::spectral_divergence(&self.components)
    }

    /// Quadrature L2 norm summed over components.
    pub fn l2_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖self − other‖₂ / ‖other‖₂`.
    pub fn relative_distance(&self, other: &CurrentField) -> Result<f64> {
        self.relative_distance_scaled(other, 0.0)
    }

    /// `‖self − other‖₂ / max(‖other‖₂, scale)`.
    pub fn relative_distance_scaled(&self, other: &CurrentField, scale: f64) -> Result<f64> {
        let mut num = 0.0;
        for (a, b) in self.components.iter().zip(&other.components) {
            num += a.l2_distance(b)?.powi(2);
        }
        Ok(num.sqrt() / other.l2_norm().max(scale).max(f64::MIN_POSITIVE))
    }

    pub fn is_identically_zero(&self) -> bool {
        self.components.iter().all(|c| c.values().iter().all(|v| *v == 0.0))
    }

    /// Writes `p0[,p1],j0[,j1]`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let first = &self.components[0];
        let grid = first.grid();
        let dof = grid.dof();
        let header: String = (0..dof).map(|k| format!(",j{k}")).collect();
        writeln!(out, "{}{}", axis_header("p", dof).trim_end_matches(','), header)?;
        for i in 0..grid.len() {
            let p = grid.point(Representation::Momentum, i);
            for x in &p[..dof] {
                write!(out, "{x},")?;
            }
            let row: Vec<String> = self
                .components
                .iter()
                .map(|c| c.values()[i].to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Closed-form current for the degree ≤ 2 potentials:
/// free `j = 0`, linear `j_k = -c_k |ψ̃|²`,
/// harmonic `j_k = m_k ω_k² ħ Im(ψ̃* ∂_k ψ̃)`.
pub fn current_closed_form(potential: &Potential, psi_p: &ComplexField) -> Result<CurrentField> {
    closed_form_terms(potential, psi_p, |z| z.im)
}

/// Pointwise magnitude of the closed-form terms, `|c_k| |ψ̃|²` or
/// `m_k ω_k² ħ |ψ̃| |∂_k ψ̃|`. Bounds `|j_k|` from above and stays nonzero
/// for stationary states, so it serves as the scale of relative current
/// comparisons.
pub fn closed_form_magnitude(potential: &Potential, psi_p: &ComplexField) -> Result<CurrentField> {
    closed_form_terms(potential, psi_p, |z| z.norm())
}

fn closed_form_terms(potential: &Potential, psi_p: &ComplexField, reduce: impl Fn(Complex64) -> f64) -> Result<CurrentField> {
    psi_p.expect(Representation::Momentum)?;
    potential.validate(psi_p.grid())?;
    let grid = psi_p.grid();
    let dof = grid.dof();
    let components = match potential {
        Potential::Free => vec![RealField::zeros(Representation::Momentum, grid.clone()); dof],
        Potential::Linear { slope } => {
            let density = psi_p.density();
            slope
                .iter()
                .map(|c| {
                    let mut j = density.clone();
                    j.values_mut().iter_mut().for_each(|v| *v = reduce(Complex64::new(0.0, -c * *v)));
                    j
                })
                .collect()
        }
        Potential::Harmonic { mass, omega } => {
            let hbar = grid.hbar();
            (0..dof)
                .map(|k| {
                    let d = spectral::wavefunction_derivative(psi_p, k)?;
                    let prefactor = mass[k] * omega[k] * omega[k] * hbar;
                    let values = psi_p
                        .values()
                        .iter()
                        .zip(d.values())
                        .map(|(psi, dpsi)| reduce(prefactor * psi.conj() * dpsi))
                        .collect();
                    RealField::new(Representation::Momentum, grid.clone(), values)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Potential::Tabulated { .. } => return Err(Error::UnsupportedPotential("tabulated")),
    };
    Ok(CurrentField {
        components,
        method: CurrentMethod::ClosedForm,
        time: psi_p.time(),
    })
}

/// Curl-free current `j = ∇̃ ∇̃⁻² I`.
///
/// The periodic solve fixes each component only up to a constant. The
/// constant is chosen so the component averages to zero over the grid face
/// where its own axis starts, which is the discrete form of "no flux through
/// the far boundary". In one dimension this makes `j(p) = ∫_{p_min}^p I`.
pub fn current_poisson(source: &RealField, time: f64) -> Result<CurrentField> {
    if source.representation() != Representation::Momentum {
        return Err(Error::Representation {
            expected: "momentum",
            found: source.representation().name(),
        });
    }
    let mut components = spectral::spectral_gradient_inverse_laplacian(source)?;
    let grid = source.grid().clone();
    for (k, c) in components.iter_mut().enumerate() {
        let (sum, count) = (0..grid.len())
            .filter(|&i| grid.unravel(i)[k] == 0)
            .fold((0.0, 0usize), |(s, n), i| (s + c.values()[i], n + 1));
        let offset = sum / count as f64;
        c.values_mut().iter_mut().for_each(|v| *v -= offset);
    }
    Ok(CurrentField {
        components,
        method: CurrentMethod::Poisson,
        time,
    })
}

/// Current for a state by the requested method.
pub fn current(
    potential: &Potential,
    method: CurrentMethod,
    psi_x: &ComplexField,
    psi_p: &ComplexField,
) -> Result<CurrentField> {
    match method {
        CurrentMethod::ClosedForm => current_closed_form(potential, psi_p),
        CurrentMethod::Poisson => {
            if potential.is_free() {
                let dof = psi_p.grid().dof();
                return Ok(CurrentField {
                    components: vec![RealField::zeros(Representation::Momentum, psi_p.grid().clone()); dof],
                    method,
                    time: psi_p.time(),
                });
            }
            let (source, magnitude) = potential.interaction_source_parts(psi_x, psi_p)?;
            if source.l1_norm() <= NOISE_SOURCE * magnitude.l1_norm() {
                let dof = psi_p.grid().dof();
                return Ok(CurrentField {
                    components: vec![RealField::zeros(Representation::Momentum, psi_p.grid().clone()); dof],
                    method,
                    time: psi_p.time(),
                });
            }
            current_poisson(&source, psi_p.time())
        }
    }
}

/// `‖∇̃·j − I‖₂ / max(‖I‖₂, scale)`, or the absolute norm when both vanish.
///
/// `scale` is the norm of the source magnitude (see
/// [`Potential::interaction_source_parts`]); it keeps the ratio meaningful
/// for states whose source vanishes, such as stationary states.
pub fn divergence_mismatch(current: &CurrentField, source: &RealField, scale: f64) -> Result<f64> {
    let div = current.divergence()?;
    let dist = div.l2_distance(source)?;
    let scale = source.l2_norm().max(scale);
    Ok(if scale < 1e-14 { dist } else { dist / scale })
}

/// Finite-difference continuity residual
/// `‖(|ψ̃_after|² − |ψ̃_before|²)/δt + ∇̃·j‖₂ / max(‖∇̃·j‖₂, scale)`
/// (absolute when both are below 1e-14). `scale` plays the same role as in
/// [`divergence_mismatch`].
pub fn continuity_residual(
    before: &ComplexField,
    after: &ComplexField,
    current_mid: &CurrentField,
    dt: f64,
    scale: f64,
) -> Result<f64> {
    before.check_compatible(after)?;
    before.expect(Representation::Momentum)?;
    let div = current_mid.divergence()?;
    let mut residual = div.clone();
    for ((r, a), b) in residual
        .values_mut()
        .iter_mut()
        .zip(after.values())
        .zip(before.values())
    {
        *r += (a.norm_sqr() - b.norm_sqr()) / dt;
    }
    let scale = div.l2_norm().max(scale);
    let norm = residual.l2_norm();
    Ok(if scale < 1e-14 { norm } else { norm / scale })
}

/// Pointwise average of two currents (used for midpoint currents).
pub fn midpoint(a: &CurrentField, b: &CurrentField) -> CurrentField {
    let components = a
        .components
        .iter()
        .zip(&b.components)
        .map(|(x, y)| {
            let mut out = x.clone();
            for (o, v) in out.values_mut().iter_mut().zip(y.values()) {
                *o = 0.5 * (*o + v);
            }
            out
        })
        .collect();
    CurrentField {
        components,
        method: a.method,
        time: 0.5 * (a.time + b.time),
    }
}
