use std::f64::consts::PI;

use epstein::dynamics::{propagate, Propagator, PropagatorConfig};
use epstein::{Complex64, ComplexField, GridSpec, Potential, Representation};

fn gaussian(grid: &GridSpec, x0: f64, p0: f64, sigma: f64) -> ComplexField {
    ComplexField::from_fn(Representation::Position, grid.clone(), 0.0, |x| {
        let d = x[0] - x0;
        let amp = (PI * sigma * sigma).powf(-0.25) * (-d * d / (2.0 * sigma * sigma)).exp();
        Complex64::from_polar(amp, p0 * d)
    })
}

fn free_exact(x: f64, t: f64, x0: f64, p0: f64, sigma: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let w = Complex64::new(1.0, t / (sigma * sigma));
    let d = x - x0 - p0 * t;
    (PI * sigma * sigma).powf(-0.25) / w.sqrt()
        * (-(d * d) / (2.0 * sigma * sigma * w) + i * (p0 * (x - x0) - 0.5 * p0 * p0 * t)).exp()
}

fn coherent_exact(x: f64, t: f64, x0: f64) -> Complex64 {
    let phase = -(0.5 * t + x * x0 * t.sin() - 0.25 * x0 * x0 * (2.0 * t).sin());
    Complex64::from_polar(PI.powf(-0.25) * (-(x - x0 * t.cos()).powi(2) / 2.0).exp(), phase)
}

fn harmonic() -> Potential {
    Potential::Harmonic {
        mass: vec![1.0],
        omega: vec![1.0],
    }
}

fn evolve(psi: &ComplexField, potential: &Potential, dt: f64, steps: usize) -> ComplexField {
    let config = PropagatorConfig {
        dt,
        steps_per_frame: steps,
    };
    propagate(psi, potential, &[1.0], config, 1, |_| Ok(()))
        .unwrap()
        .to_position()
        .unwrap()
}

fn max_error(psi: &ComplexField, exact: impl Fn(f64) -> Complex64) -> f64 {
    psi.values()
        .iter()
        .enumerate()
        .map(|(j, v)| (v - exact(psi.point(j)[0])).norm())
        .fold(0.0, f64::max)
}

#[test]
fn free_gaussian_matches_spreading_solution() {
    let grid = GridSpec::one_dim(512, 0.0, 80.0).unwrap();
    for (x0, p0) in [(0.0, 0.0), (-3.0, 1.5)] {
        let psi = gaussian(&grid, x0, p0, 1.0);
        let out = evolve(&psi, &Potential::Free, 1e-3, 5000);
        let err = max_error(&out, |x| free_exact(x, 5.0, x0, p0, 1.0));
        assert!(err <= 1e-9, "x0 = {x0}, p0 = {p0}: {err:e}");
    }
}

#[test]
fn free_density_in_momentum_is_static_to_rounding() {
    let grid = GridSpec::one_dim(256, 0.0, 40.0).unwrap();
    let psi_p = gaussian(&grid, 1.0, 0.5, 1.2).to_momentum().unwrap();
    let prop = Propagator::new(&grid, &Potential::Free, &[1.0], 1e-3).unwrap();
    let mut evolved = psi_p.clone();
    for _ in 0..1000 {
        prop.step(&mut evolved).unwrap();
    }
    let drift = psi_p
        .values()
        .iter()
        .zip(evolved.values())
        .map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-12 * psi_p.max_density(), "{drift:e}");
}

#[test]
fn coherent_state_returns_after_one_period() {
    let grid = GridSpec::one_dim(512, 0.0, 40.0).unwrap();
    let psi = gaussian(&grid, 2.0, 0.0, 1.0);
    let steps = 6283;
    let out = evolve(&psi, &harmonic(), 2.0 * PI / steps as f64, steps);
    let fidelity = psi.inner(&out).unwrap().norm_sqr();
    assert!(fidelity >= 1.0 - 1e-6, "{fidelity}");
}

#[test]
fn strang_splitting_is_second_order() {
    // coarse enough in p for the largest step to pass the phase-wrap check
    let grid = GridSpec::one_dim(128, 0.0, 40.0).unwrap();
    let psi = gaussian(&grid, 2.0, 0.0, 1.0);
    let errors: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|dt| {
            let steps = (1.0 / dt) as usize;
            let out = evolve(&psi, &harmonic(), *dt, steps);
            max_error(&out, |x| coherent_exact(x, 1.0, 2.0))
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() <= 0.2, "order {order} from {errors:?}");
    }
}

#[test]
fn norm_drift_stays_below_bound_over_ten_thousand_steps() {
    let grid = GridSpec::one_dim(512, 0.0, 40.0).unwrap();
    let psi = gaussian(&grid, 2.0, 0.5, 1.0);
    let out = evolve(&psi, &harmonic(), 1e-3, 10_000);
    let drift = (out.norm_sqr() - psi.norm_sqr()).abs();
    assert!(drift <= 1e-10, "{drift:e}");
}

fn max_energy_drift(dt: f64, steps: usize) -> f64 {
    let grid = GridSpec::one_dim(512, 0.0, 40.0).unwrap();
    let psi = gaussian(&grid, 2.0, 0.0, 1.0);
    let prop = Propagator::new(&grid, &harmonic(), &[1.0], dt).unwrap();
    let mut psi_p = psi.to_momentum().unwrap();
    let e0 = prop.energy(&psi, &psi_p).unwrap();
    let mut worst: f64 = 0.0;
    for s in 1..=steps {
        prop.step(&mut psi_p).unwrap();
        if s % 10 == 0 {
            let e = prop.energy(&psi_p.to_position().unwrap(), &psi_p).unwrap();
            worst = worst.max(((e - e0) / e0).abs());
        }
    }
    worst
}

#[test]
fn energy_oscillation_is_second_order_in_the_step() {
    let coarse = max_energy_drift(PI / 1570.0, 1570);
    let fine = max_energy_drift(PI / 3140.0, 3140);
    let order = (coarse / fine).log2();
    assert!((order - 2.0).abs() <= 0.2, "{coarse:e} {fine:e}");
}

#[test]
fn energy_drift_below_bound_at_scenario_step() {
    let drift = max_energy_drift(PI / 15700.0, 31400);
    assert!(drift <= 1e-8, "{drift:e}");
}

#[test]
fn ground_state_energy_is_half_quantum() {
    let grid = GridSpec::one_dim(256, 0.0, 30.0).unwrap();
    let psi = gaussian(&grid, 0.0, 0.0, 1.0);
    let prop = Propagator::new(&grid, &harmonic(), &[1.0], 1e-3).unwrap();
    let e = prop.energy(&psi, &psi.to_momentum().unwrap()).unwrap();
    assert!((e - 0.5).abs() <= 1e-8, "{e}");
}
