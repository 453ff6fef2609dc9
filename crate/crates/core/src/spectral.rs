//! Spectral calculus on the periodic grids.
//!
//! Real fields (densities, sources, currents) are differentiated with the
//! usual symmetric-wavenumber FFT derivative. Wavefunctions are differentiated
//! through their dual representation instead, `iħ ∂ψ̃/∂p_k = F[x_k ψ]`, which
//! is exact with respect to the transform pair regardless of where the
//! position grid is centred.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::{GridSpec, Representation};

/// Relative tolerance on `|∫ f| / ‖f‖₁` for the inverse Laplacian.
pub const POISSON_SOURCE_TOLERANCE: f64 = 1e-6;

/// Relative node threshold: points with `|ψ|² < NODE_EPSILON · max |ψ|²` are
/// treated as nodes.
pub const NODE_EPSILON: f64 = 1e-12;

fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// First-derivative multipliers for axis `k` (Nyquist zeroed).
fn derivative_multipliers(grid: &GridSpec, repr: Representation, k: usize) -> Vec<f64> {
    let n = grid.axis(k).points;
    let mut kappa = grid.wavenumbers(repr, k);
    kappa[n / 2] = 0.0;
    kappa
}

fn real_part(grid: &GridSpec, repr: Representation, data: Vec<Complex64>) -> RealField {
    let scale = 1.0 / grid.len() as f64;
    let values = data.into_iter().map(|v| v.re * scale).collect();
    RealField::new(repr, grid.clone(), values).expect("length preserved")
}

fn forward_all(grid: &GridSpec, data: &mut [Complex64]) {
    for k in 0..grid.dof() {
        grid.raw_fft(data, k, false);
    }
}

fn inverse_all(grid: &GridSpec, data: &mut [Complex64]) {
    for k in 0..grid.dof() {
        grid.raw_fft(data, k, true);
    }
}

/// Partial derivative of a real field along axis `k`.
pub fn spectral_derivative(field: &RealField, k: usize) -> RealField {
    let grid = field.grid();
    let repr = field.representation();
    let kappa = derivative_multipliers(grid, repr, k);
    let mut data = to_complex(field.values());
    grid.raw_fft(&mut data, k, false);
    grid.for_each_line(&mut data, k, |line| {
        for (v, &w) in line.iter_mut().zip(&kappa) {
            *v *= Complex64::new(0.0, w);
        }
    });
    grid.raw_fft(&mut data, k, true);
    let scale = 1.0 / grid.axis(k).points as f64;
    let values = data.into_iter().map(|v| v.re * scale).collect();
    RealField::new(repr, grid.clone(), values).expect("length preserved")
}

/// Gradient of a real field, one component per axis.
pub fn spectral_gradient(field: &RealField) -> Vec<RealField> {
    (0..field.grid().dof())
        .map(|k| spectral_derivative(field, k))
        .collect()
}

/// Divergence `Σ_k ∂_k f_k` of a vector field.
pub fn spectral_divergence(components: &[RealField]) -> Result<RealField> {
    let first = components
        .first()
        .ok_or_else(|| Error::Config("divergence of an empty vector field".into()))?;
    if components.len() != first.grid().dof() {
        return Err(Error::GridMismatch(format!(
            "{} components for a {}-dimensional grid",
            components.len(),
            first.grid().dof()
        )));
    }
    let mut out = RealField::zeros(first.representation(), first.grid().clone());
    for (k, c) in components.iter().enumerate() {
        c.check_compatible(first)?;
        let d = spectral_derivative(c, k);
        for (o, v) in out.values_mut().iter_mut().zip(d.values()) {
            *o += v;
        }
    }
    Ok(out)
}

/// Spectral Laplacian (the Nyquist modes keep their `-κ²` weight).
pub fn spectral_laplacian(field: &RealField) -> RealField {
    let grid = field.grid();
    let symbol = laplacian_symbol(grid, field.representation());
    let mut data = to_complex(field.values());
    forward_all(grid, &mut data);
    for (v, s) in data.iter_mut().zip(&symbol) {
        *v *= *s;
    }
    inverse_all(grid, &mut data);
    real_part(grid, field.representation(), data)
}

/// `-|κ|²` on the full grid in FFT order.
fn laplacian_symbol(grid: &GridSpec, repr: Representation) -> Vec<f64> {
    let kappas: Vec<Vec<f64>> = (0..grid.dof())
        .map(|k| grid.wavenumbers(repr, k))
        .collect();
    (0..grid.len())
        .map(|i| {
            let idx = grid.unravel(i);
            -(0..grid.dof()).map(|k| kappas[k][idx[k]].powi(2)).sum::<f64>()
        })
        .collect()
}

/// Checks the solvability condition `∫ f ≈ 0` of the periodic Poisson problem.
pub fn check_poisson_source(field: &RealField) -> Result<()> {
    let integral = field.integral();
    let tolerance = POISSON_SOURCE_TOLERANCE * field.l1_norm();
    if integral.abs() > tolerance {
        return Err(Error::IllPosedSource {
            integral,
            tolerance,
        });
    }
    Ok(())
}

/// Solves `∇² F = f` on the periodic grid with the zero mode of `F` set to 0.
pub fn spectral_inverse_laplacian(field: &RealField) -> Result<RealField> {
    check_poisson_source(field)?;
    let grid = field.grid();
    let symbol = laplacian_symbol(grid, field.representation());
    let mut data = to_complex(field.values());
    forward_all(grid, &mut data);
    for (v, s) in data.iter_mut().zip(&symbol) {
        *v = if *s == 0.0 { Complex64::default() } else { *v / *s };
    }
    inverse_all(grid, &mut data);
    Ok(real_part(grid, field.representation(), data))
}

/// `∇ ∇^{-2} f`, computed in one pass in Fourier space. Same solvability
/// condition as [`spectral_inverse_laplacian`].
pub fn spectral_gradient_inverse_laplacian(field: &RealField) -> Result<Vec<RealField>> {
    check_poisson_source(field)?;
    let grid = field.grid();
    let repr = field.representation();
    let symbol = laplacian_symbol(grid, repr);
    let mut data = to_complex(field.values());
    forward_all(grid, &mut data);
    for (v, s) in data.iter_mut().zip(&symbol) {
        *v = if *s == 0.0 { Complex64::default() } else { *v / *s };
    }
    Ok((0..grid.dof())
        .map(|k| {
            let kappa = derivative_multipliers(grid, repr, k);
            let mut component = data.clone();
            for (i, v) in component.iter_mut().enumerate() {
                *v *= Complex64::new(0.0, kappa[grid.unravel(i)[k]]);
            }
            inverse_all(grid, &mut component);
            real_part(grid, repr, component)
        })
        .collect())
}

/// Symmetric-wavenumber derivative of order 1 or 2 of a complex field along
/// axis `k`, treating the field as a periodic function of its own
/// coordinate. Assumes the conjugate content is centred on zero.
pub(crate) fn symmetric_derivative(field: &ComplexField, k: usize, order: u32) -> Vec<Complex64> {
    let grid = field.grid();
    let repr = field.representation();
    let kappa = match order {
        1 => derivative_multipliers(grid, repr, k),
        _ => grid.wavenumbers(repr, k),
    };
    let mut data = field.values().to_vec();
    grid.raw_fft(&mut data, k, false);
    grid.for_each_line(&mut data, k, |line| {
        for (v, &w) in line.iter_mut().zip(&kappa) {
            *v *= Complex64::new(0.0, w).powu(order);
        }
    });
    grid.raw_fft(&mut data, k, true);
    let scale = 1.0 / grid.axis(k).points as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    data
}

/// Applies the conjugate coordinate operator of axis `k`:
/// `F[x_k ψ] = iħ ∂ψ̃/∂p_k` for a momentum field, and
/// `F⁻¹[p_k ψ̃] = -iħ ∂ψ/∂x_k` for a position field.
pub fn conjugate_operator(field: &ComplexField, k: usize) -> Result<ComplexField> {
    let grid = field.grid();
    let dual = field.representation().dual();
    let mut other = field.in_representation(dual)?;
    let coords = grid.coordinates(dual, k);
    let stride = grid.stride(k);
    let n = grid.axis(k).points;
    for (i, v) in other.values_mut().iter_mut().enumerate() {
        *v *= coords[(i / stride) % n];
    }
    other.in_representation(field.representation())
}

/// Derivative `∂ψ/∂q_k` of a wavefunction with respect to its own coordinate.
pub fn wavefunction_derivative(field: &ComplexField, k: usize) -> Result<ComplexField> {
    let hbar = field.grid().hbar();
    let mut out = conjugate_operator(field, k)?;
    // F[x ψ] = iħ ∂_p ψ̃  and  F⁻¹[p ψ̃] = -iħ ∂_x ψ
    let factor = match field.representation() {
        Representation::Momentum => Complex64::new(0.0, -1.0 / hbar),
        Representation::Position => Complex64::new(0.0, 1.0 / hbar),
    };
    out.values_mut().iter_mut().for_each(|v| *v *= factor);
    Ok(out)
}

/// A vector field sampled on a grid with per-point validity flags.
#[derive(Clone, Debug)]
pub struct FlaggedField {
    pub repr: Representation,
    pub grid: GridSpec,
    pub components: Vec<Vec<f64>>,
    pub valid: Vec<bool>,
}

impl FlaggedField {
    pub fn dof(&self) -> usize {
        self.components.len()
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// True if every valid component value is exactly zero.
    pub fn is_identically_zero(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.iter().all(|v| *v == 0.0))
    }

    pub fn component_field(&self, k: usize) -> RealField {
        RealField::new(self.repr, self.grid.clone(), self.components[k].clone())
            .expect("length matches grid")
    }
}

/// Node mask `|ψ|² ≥ ε_node` for a wavefunction.
pub fn node_mask(field: &ComplexField) -> Vec<bool> {
    let floor = NODE_EPSILON * field.max_density();
    field.values().iter().map(|v| v.norm_sqr() >= floor && v.norm_sqr() > 0.0).collect()
}

/// Local expectation value of the conjugate coordinate,
/// `Re(ψ* Ô_k ψ) / |ψ|²` with `Ô_k` from [`conjugate_operator`].
fn local_expectation(field: &ComplexField) -> Result<FlaggedField> {
    let valid = node_mask(field);
    let components = (0..field.grid().dof())
        .map(|k| {
            let op = conjugate_operator(field, k)?;
            Ok(field
                .values()
                .iter()
                .zip(op.values())
                .zip(&valid)
                .map(|((psi, o), &ok)| {
                    if ok {
                        (psi.conj() * o).re / psi.norm_sqr()
                    } else {
                        0.0
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(FlaggedField {
        repr: field.representation(),
        grid: field.grid().clone(),
        components,
        valid,
    })
}

/// Position field `x(p) = Re(ψ̃* iħ∇̃ψ̃)/|ψ̃|² = -∇̃S̃(p)` on the momentum grid.
///
/// Evaluated in ratio form, so a global phase cancels exactly. Node points
/// are flagged invalid.
pub fn local_position_field(field: &ComplexField) -> Result<FlaggedField> {
    field.expect(Representation::Momentum)?;
    local_expectation(field)
}

/// Local momentum field `Re(ψ* (-iħ∇)ψ)/|ψ|² = ∇S(x)` on the position grid.
pub fn local_momentum_field(field: &ComplexField) -> Result<FlaggedField> {
    field.expect(Representation::Position)?;
    local_expectation(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, Coord};
    use std::f64::consts::PI;

    fn momentum_grid() -> GridSpec {
        GridSpec::one_dim(256, 0.0, 2.0 * PI * 256.0 / 40.0).unwrap()
    }

    fn gaussian_p(c: &Coord) -> Complex64 {
        Complex64::new(PI.powf(-0.25) * (-c[0] * c[0] / 2.0).exp(), 0.0)
    }

    #[test]
    fn inverse_laplacian_of_sine() {
        // Momentum period 40 → commensurate wavenumber κ = 2π·3/40.
        let grid = momentum_grid();
        let period = grid.dual_spacing(0) * 256.0;
        assert!((period - 40.0).abs() < 1e-12);
        let kappa = 2.0 * PI * 3.0 / period;
        let f = RealField::from_fn(Representation::Momentum, grid.clone(), |c| (kappa * c[0]).sin());
        let inv = spectral_inverse_laplacian(&f).unwrap();
        let err = inv
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v + (kappa * grid.momentum(0, i)).sin() / (kappa * kappa)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn inverse_laplacian_zero_and_ill_posed() {
        let grid = momentum_grid();
        let zero = RealField::zeros(Representation::Momentum, grid.clone());
        assert_eq!(spectral_inverse_laplacian(&zero).unwrap().max_abs(), 0.0);
        let bump = RealField::from_fn(Representation::Momentum, grid, |c| (-c[0] * c[0]).exp());
        assert!(matches!(
            spectral_inverse_laplacian(&bump),
            Err(Error::IllPosedSource { .. })
        ));
    }

    #[test]
    fn laplacian_inverts_on_band_limited_2d() {
        let grid = GridSpec::new(vec![Axis::new(64, 0.0, 30.0), Axis::new(128, 0.0, 20.0)], 1.0)
            .unwrap();
        let f = RealField::from_fn(Representation::Momentum, grid, |c| {
            let r2 = c[0] * c[0] + c[1] * c[1];
            (1.0 - r2) * (-r2).exp() * (c[0] + 0.3)
        });
        let mut centered = f.clone();
        let mean = f.mean();
        centered.values_mut().iter_mut().for_each(|v| *v -= mean);
        let back = spectral_laplacian(&spectral_inverse_laplacian(&centered).unwrap());
        let err = back.l2_distance(&centered).unwrap() / centered.l2_norm();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let grid = momentum_grid();
        let f = RealField::from_fn(Representation::Momentum, grid, |_| 3.5);
        assert!(spectral_gradient(&f)[0].max_abs() < 1e-14);
    }

    #[test]
    fn density_gradient_integrates_to_zero() {
        let grid = momentum_grid();
        let psi = ComplexField::from_fn(Representation::Momentum, grid, 0.0, |c| {
            gaussian_p(c) * Complex64::from_polar(1.0, 0.7 * c[0] * c[0])
        });
        let g = &spectral_gradient(&psi.density())[0];
        assert!(g.integral().abs() < 1e-10);
    }

    #[test]
    fn position_field_of_real_profile_is_zero() {
        let psi = ComplexField::from_fn(Representation::Momentum, momentum_grid(), 0.0, gaussian_p);
        let x = local_position_field(&psi).unwrap();
        // Roundoff in the ratio grows like 1/|ψ̃| in the far tails.
        let worst = x.components[0]
            .iter()
            .zip(psi.values())
            .filter(|(_, v)| v.norm_sqr() > 1e-8)
            .fold(0.0f64, |m, (x, _)| m.max(x.abs()));
        assert!(worst < 1e-10, "{worst}");
        assert_eq!(x.invalid_count(), x.valid.iter().zip(psi.values()).filter(|(_, v)| v.norm_sqr() < 1e-12 / PI.sqrt()).count());
    }

    #[test]
    fn position_field_of_shifted_packet() {
        // ψ̃ e^{-i p x₀/ħ} is the same packet moved to x₀: x(p) = x₀.
        let x0 = 2.75;
        let psi = ComplexField::from_fn(Representation::Momentum, momentum_grid(), 0.0, |c| {
            gaussian_p(c) * Complex64::from_polar(1.0, -c[0] * x0)
        });
        let x = local_position_field(&psi).unwrap();
        for (i, (v, ok)) in x.components[0].iter().zip(&x.valid).enumerate() {
            if *ok && psi.values()[i].norm_sqr() > 1e-8 {
                assert!((v - x0).abs() < 1e-9, "p index {i}: {v}");
            }
        }
    }

    #[test]
    fn position_field_ignores_global_phase() {
        let psi = ComplexField::from_fn(Representation::Momentum, momentum_grid(), 0.0, |c| {
            gaussian_p(c) * Complex64::from_polar(1.0, -0.4 * c[0] + 0.2 * c[0] * c[0])
        });
        let mut rotated = psi.clone();
        let phase = Complex64::from_polar(1.0, 1.234);
        rotated.values_mut().iter_mut().for_each(|v| *v *= phase);
        let a = local_position_field(&psi).unwrap();
        let b = local_position_field(&rotated).unwrap();
        for (u, v) in a.components[0].iter().zip(&b.components[0]) {
            assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn nodes_are_flagged() {
        let psi = ComplexField::from_fn(Representation::Momentum, momentum_grid(), 0.0, |c| {
            gaussian_p(c) * c[0]
        });
        let x = local_position_field(&psi).unwrap();
        assert!(!x.valid[128], "p = 0 is an exact node");
        assert!(x.invalid_count() >= 1);
    }

    #[test]
    fn wavefunction_derivative_matches_analytic() {
        let psi = ComplexField::from_fn(Representation::Momentum, momentum_grid(), 0.0, gaussian_p);
        let d = wavefunction_derivative(&psi, 0).unwrap();
        for (i, v) in d.values().iter().enumerate() {
            let p = psi.point(i)[0];
            let exact = -p * gaussian_p(&[p, 0.0]).re;
            assert!((v - exact).norm() < 1e-10);
        }
    }
}
