//! Trajectory integration for both models.
//!
//! Epstein trajectories carry a momentum variable `p` driven by
//! `dp/dt = j/|ψ̃|²` and read their position off the local position field
//! `x = -∇̃S̃(p)`. De Broglie–Bohm trajectories integrate `dx/dt = ∇S/m`
//! directly. Both use fixed-step RK4 with multilinear interpolation of
//! velocity fields precomputed on the grid; a stencil that touches a node
//! freezes the trajectory, and leaving the grid retires it.

use serde::{Deserialize, Serialize};

use crate::current::{self, CurrentField, CurrentMethod};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Coord, Representation, MAX_DOF};
use crate::potential::Potential;
use crate::spectral::{self, FlaggedField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Active,
    FrozenAtNode,
    LeftGrid,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Active => "active",
            Status::FrozenAtNode => "frozen",
            Status::LeftGrid => "left",
        }
    }
}

/// One recorded instant of an Epstein trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PRecord {
    pub t: f64,
    pub p: Coord,
    pub x: Coord,
    pub status: Status,
}

/// Epstein trajectory: momentum variable plus derived position.
#[derive(Clone, Debug)]
pub struct PTrajectory {
    pub id: usize,
    pub p: Coord,
    pub x: Coord,
    pub status: Status,
    pub history: Option<Vec<PRecord>>,
}

impl PTrajectory {
    pub fn new(id: usize, p: Coord, record: bool) -> Self {
        PTrajectory {
            id,
            p,
            x: [0.0; MAX_DOF],
            status: Status::Active,
            history: record.then(Vec::new),
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    pub fn record(&mut self, t: f64) {
        let rec = PRecord {
            t,
            p: self.p,
            x: self.x,
            status: self.status,
        };
        if let Some(h) = self.history.as_mut() {
            h.push(rec);
        }
    }
}

/// One recorded instant of a de Broglie–Bohm trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XRecord {
    pub t: f64,
    pub x: Coord,
    pub status: Status,
}

/// De Broglie–Bohm trajectory.
#[derive(Clone, Debug)]
pub struct XTrajectory {
    pub id: usize,
    pub x: Coord,
    pub status: Status,
    pub history: Option<Vec<XRecord>>,
}

impl XTrajectory {
    pub fn new(id: usize, x: Coord, record: bool) -> Self {
        XTrajectory {
            id,
            x,
            status: Status::Active,
            history: record.then(Vec::new),
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    pub fn record(&mut self, t: f64) {
        let rec = XRecord {
            t,
            x: self.x,
            status: self.status,
        };
        if let Some(h) = self.history.as_mut() {
            h.push(rec);
        }
    }
}

/// Result of sampling a flagged field at an arbitrary point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sample {
    Value(Coord),
    Node,
    Outside,
}

/// Multilinear interpolation of a [`FlaggedField`].
pub fn interpolate(field: &FlaggedField, q: &Coord) -> Sample {
    let grid = &field.grid;
    let dof = grid.dof();
    let mut base = [0usize; MAX_DOF];
    let mut frac = [0.0; MAX_DOF];
    for k in 0..dof {
        let n = grid.axis(k).points;
        let origin = grid.coordinate(field.repr, k, 0);
        let f = (q[k] - origin) / grid.step(field.repr, k);
        if !(f >= 0.0 && f <= (n - 1) as f64) {
            return Sample::Outside;
        }
        let j = (f.floor() as usize).min(n - 2);
        base[k] = j;
        frac[k] = f - j as f64;
    }
    let mut out = [0.0; MAX_DOF];
    for corner in 0..(1usize << dof) {
        let mut idx = [0usize; MAX_DOF];
        let mut weight = 1.0;
        for k in 0..dof {
            let upper = (corner >> k) & 1 == 1;
            idx[k] = base[k] + upper as usize;
            weight *= if upper { frac[k] } else { 1.0 - frac[k] };
        }
        let flat = grid.ravel(&idx[..dof]);
        if !field.valid[flat] {
            return Sample::Node;
        }
        for (k, o) in out.iter_mut().enumerate().take(dof) {
            *o += weight * field.components[k][flat];
        }
    }
    Sample::Value(out)
}

/// Something that yields a velocity at `(t, q)`.
pub trait VelocitySource: Sync {
    fn velocity(&self, t: f64, q: &Coord) -> Sample;

    /// True when the velocity vanishes identically, letting the integrator
    /// skip work and keep the state bit-exact.
    fn is_zero(&self) -> bool {
        false
    }
}

/// A velocity field frozen in time.
pub struct StaticVelocity<'a>(pub &'a FlaggedField);

impl VelocitySource for StaticVelocity<'_> {
    fn velocity(&self, _t: f64, q: &Coord) -> Sample {
        interpolate(self.0, q)
    }

    fn is_zero(&self) -> bool {
        self.0.is_identically_zero()
    }
}

/// Linear interpolation in time between two frame fields.
pub struct FrameInterpolated<'a> {
    start: &'a FlaggedField,
    end: &'a FlaggedField,
    t_start: f64,
    t_end: f64,
    zero: bool,
}

impl<'a> FrameInterpolated<'a> {
    pub fn new(start: &'a FlaggedField, end: &'a FlaggedField, t_start: f64, t_end: f64) -> Self {
        let zero = start.is_identically_zero() && end.is_identically_zero();
        FrameInterpolated {
            start,
            end,
            t_start,
            t_end,
            zero,
        }
    }
}

impl VelocitySource for FrameInterpolated<'_> {
    fn velocity(&self, t: f64, q: &Coord) -> Sample {
        let a = interpolate(self.start, q);
        let b = interpolate(self.end, q);
        match (a, b) {
            (Sample::Value(a), Sample::Value(b)) => {
                let span = self.t_end - self.t_start;
                let w = if span > 0.0 { ((t - self.t_start) / span).clamp(0.0, 1.0) } else { 1.0 };
                let mut out = [0.0; MAX_DOF];
                for k in 0..MAX_DOF {
                    out[k] = (1.0 - w) * a[k] + w * b[k];
                }
                Sample::Value(out)
            }
            (Sample::Outside, _) | (_, Sample::Outside) => Sample::Outside,
            _ => Sample::Node,
        }
    }

    fn is_zero(&self) -> bool {
        self.zero
    }
}

fn axpy(q: &Coord, h: f64, v: &Coord) -> Coord {
    let mut out = *q;
    for k in 0..MAX_DOF {
        out[k] += h * v[k];
    }
    out
}

/// One classical RK4 step of `dq/dt = v(t, q)`.
pub fn rk4_step(q: &Coord, t: f64, dt: f64, source: &dyn VelocitySource) -> std::result::Result<Coord, Status> {
    if source.is_zero() {
        return Ok(*q);
    }
    let eval = |t: f64, q: &Coord| match source.velocity(t, q) {
        Sample::Value(v) => Ok(v),
        Sample::Node => Err(Status::FrozenAtNode),
        Sample::Outside => Err(Status::LeftGrid),
    };
    let k1 = eval(t, q)?;
    let k2 = eval(t + 0.5 * dt, &axpy(q, 0.5 * dt, &k1))?;
    let k3 = eval(t + 0.5 * dt, &axpy(q, 0.5 * dt, &k2))?;
    let k4 = eval(t + dt, &axpy(q, dt, &k3))?;
    let mut out = *q;
    for k in 0..MAX_DOF {
        out[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    Ok(out)
}

/// Advances an Epstein trajectory by one RK4 step of `dp/dt = j/|ψ̃|²`.
pub fn step_epstein(traj: &mut PTrajectory, source: &dyn VelocitySource, t: f64, dt: f64) {
    if !traj.is_active() {
        return;
    }
    match rk4_step(&traj.p, t, dt, source) {
        Ok(p) => traj.p = p,
        Err(status) => traj.status = status,
    }
}

/// Updates `traj.x` from the local position field at the current `p`.
pub fn position_of(traj: &mut PTrajectory, position_field: &FlaggedField) {
    if !traj.is_active() {
        return;
    }
    match interpolate(position_field, &traj.p) {
        Sample::Value(x) => traj.x = x,
        Sample::Node => traj.status = Status::FrozenAtNode,
        Sample::Outside => traj.status = Status::LeftGrid,
    }
}

/// Advances a de Broglie–Bohm trajectory by one RK4 step of `dx/dt = ∇S/m`.
pub fn step_dbb(traj: &mut XTrajectory, source: &dyn VelocitySource, t: f64, dt: f64) {
    if !traj.is_active() {
        return;
    }
    match rk4_step(&traj.x, t, dt, source) {
        Ok(x) => traj.x = x,
        Err(status) => traj.status = status,
    }
}

/// Grid fields an Epstein ensemble needs at one instant.
#[derive(Clone, Debug)]
pub struct EpsteinFields {
    pub time: f64,
    /// `j/|ψ̃|²` with node flags.
    pub velocity: FlaggedField,
    /// `x(p) = -∇̃S̃(p)` with node flags.
    pub position: FlaggedField,
    pub current: CurrentField,
}

impl EpsteinFields {
    pub fn compute(
        potential: &Potential,
        method: CurrentMethod,
        psi_x: &ComplexField,
        psi_p: &ComplexField,
    ) -> Result<Self> {
        let current = current::current(potential, method, psi_x, psi_p)?;
        let velocity = velocity_field(&current, psi_p)?;
        let position = spectral::local_position_field(psi_p)?;
        Ok(EpsteinFields {
            time: psi_p.time(),
            velocity,
            position,
            current,
        })
    }
}

/// `j/|ψ̃|²` on the momentum grid, flagged where `|ψ̃|²` is below the node
/// threshold.
pub fn velocity_field(current: &CurrentField, psi_p: &ComplexField) -> Result<FlaggedField> {
    psi_p.expect(Representation::Momentum)?;
    if current.components.len() != psi_p.grid().dof() {
        return Err(Error::GridMismatch("current has wrong number of components".into()));
    }
    let valid = spectral::node_mask(psi_p);
    let components = current
        .components
        .iter()
        .map(|c| {
            c.values()
                .iter()
                .zip(psi_p.values())
                .zip(&valid)
                .map(|((j, psi), ok)| if *ok { j / psi.norm_sqr() } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(FlaggedField {
        repr: Representation::Momentum,
        grid: psi_p.grid().clone(),
        components,
        valid,
    })
}

/// Guidance velocity `∇S/m = Re(ψ* (-iħ∇)ψ)/(m|ψ|²)` on the position grid.
pub fn guidance_field(psi_x: &ComplexField, masses: &[f64]) -> Result<FlaggedField> {
    let mut field = spectral::local_momentum_field(psi_x)?;
    for (c, m) in field.components.iter_mut().zip(masses) {
        c.iter_mut().for_each(|v| *v /= m);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, GridSpec};

    fn flagged(grid: &GridSpec, f: impl Fn(&Coord) -> Coord, valid: impl Fn(&Coord) -> bool) -> FlaggedField {
        let dof = grid.dof();
        let points: Vec<Coord> = (0..grid.len()).map(|i| grid.point(Representation::Momentum, i)).collect();
        FlaggedField {
            repr: Representation::Momentum,
            grid: grid.clone(),
            components: (0..dof).map(|k| points.iter().map(|p| f(p)[k]).collect()).collect(),
            valid: points.iter().map(valid).collect(),
        }
    }

    #[test]
    fn bilinear_is_exact_for_affine_fields() {
        let grid = GridSpec::new(vec![Axis::new(64, 0.0, 10.0), Axis::new(64, 0.0, 20.0)], 1.0).unwrap();
        let f = flagged(&grid, |p| [1.0 + 2.0 * p[0] - p[1], 0.5 * p[1]], |_| true);
        for q in [[0.1, -0.7], [3.3, 2.2], [-5.0, 1.0]] {
            let Sample::Value(v) = interpolate(&f, &q) else { panic!("outside") };
            assert!((v[0] - (1.0 + 2.0 * q[0] - q[1])).abs() < 1e-12);
            assert!((v[1] - 0.5 * q[1]).abs() < 1e-12);
        }
        assert_eq!(interpolate(&f, &[100.0, 0.0]), Sample::Outside);
    }

    #[test]
    fn node_in_stencil_freezes() {
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let dp = grid.dual_spacing(0);
        let f = flagged(&grid, |p| [p[0], 0.0], |p| p[0].abs() > 0.5 * dp);
        assert_eq!(interpolate(&f, &[0.3 * dp, 0.0]), Sample::Node);
        let mut traj = PTrajectory::new(0, [0.3 * dp, 0.0], false);
        step_epstein(&mut traj, &StaticVelocity(&f), 0.0, 0.01);
        assert_eq!(traj.status, Status::FrozenAtNode);
        assert_eq!(traj.p, [0.3 * dp, 0.0]);
    }

    #[test]
    fn zero_field_short_circuits() {
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let f = flagged(&grid, |_| [0.0, 0.0], |_| true);
        let mut traj = PTrajectory::new(0, [0.123456789, 0.0], false);
        for i in 0..1000 {
            step_epstein(&mut traj, &StaticVelocity(&f), i as f64 * 1e-3, 1e-3);
        }
        assert_eq!(traj.p[0], 0.123456789);
    }

    #[test]
    fn constant_field_drift() {
        // dp/dt = -2 → p(t) = p(0) - 2t
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let f = flagged(&grid, |_| [-2.0, 0.0], |_| true);
        let mut traj = PTrajectory::new(0, [1.0, 0.0], false);
        for i in 0..1000 {
            step_epstein(&mut traj, &StaticVelocity(&f), i as f64 * 1e-3, 1e-3);
        }
        assert!((traj.p[0] - (1.0 - 2.0)).abs() < 1e-8);
    }

    #[test]
    fn leaving_the_grid_retires() {
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let (_, hi) = grid.bounds(Representation::Momentum, 0);
        let f = flagged(&grid, |_| [5.0, 0.0], |_| true);
        let mut traj = PTrajectory::new(0, [hi - 0.01, 0.0], false);
        step_epstein(&mut traj, &StaticVelocity(&f), 0.0, 0.01);
        assert_eq!(traj.status, Status::LeftGrid);
    }

    #[test]
    fn time_interpolation_integrates_linear_ramp() {
        // v(t) = t between two frames: p(1) = p(0) + 1/2 exactly under RK4.
        let grid = GridSpec::one_dim(64, 0.0, 10.0).unwrap();
        let a = flagged(&grid, |_| [0.0, 0.0], |_| true);
        let b = flagged(&grid, |_| [1.0, 0.0], |_| true);
        let src = FrameInterpolated::new(&a, &b, 0.0, 1.0);
        let mut traj = PTrajectory::new(0, [0.0, 0.0], false);
        for i in 0..10 {
            step_epstein(&mut traj, &src, i as f64 * 0.1, 0.1);
        }
        assert!((traj.p[0] - 0.5).abs() < 1e-14);
    }
}
