//! The frame loop: propagates the wavefunction, rebuilds the trajectory
//! fields at every frame, advances both ensembles in parallel and collects
//! per-frame statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::current::{self, CurrentMethod};
use crate::dynamics::{self, Propagator, PropagatorConfig};
use crate::ensemble::{self, KsReport};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Coord, Representation, MAX_DOF};
use crate::potential::Potential;
use crate::spectral::FlaggedField;
use crate::stats::{self, MomentCheck, Region, RegionFrequency, TransitionCounter};
use crate::trajectory::{
    guidance_field, position_of, step_dbb, step_epstein, EpsteinFields, FrameInterpolated, PTrajectory,
    Status, XTrajectory,
};

/// Which trajectory models an engine run integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Epstein,
    Dbb,
    Both,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Epstein => "epstein",
            Model::Dbb => "dbb",
            Model::Both => "both",
        }
    }

    pub fn epstein(self) -> bool {
        matches!(self, Model::Epstein | Model::Both)
    }

    pub fn dbb(self) -> bool {
        matches!(self, Model::Dbb | Model::Both)
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epstein" => Ok(Model::Epstein),
            "dbb" => Ok(Model::Dbb),
            "both" => Ok(Model::Both),
            other => Err(Error::Config(format!("unknown model '{other}' (epstein, dbb, both)"))),
        }
    }
}

/// Offset mixed into the seed for the de Broglie–Bohm ensemble so the two
/// models draw from independent streams.
pub const DBB_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub psi: ComplexField,
    pub potential: Potential,
    pub masses: Vec<f64>,
    pub propagator: PropagatorConfig,
    /// Output frames after the initial one.
    pub frames: usize,
    pub method: CurrentMethod,
    pub model: Model,
    pub samples: usize,
    pub seed: u64,
    /// Ensemble members whose full history is recorded.
    pub history_limit: usize,
    pub regions: Vec<Region>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatusCounts {
    pub active: usize,
    pub frozen: usize,
    pub left: usize,
}

impl StatusCounts {
    fn of(statuses: impl Iterator<Item = Status>) -> Self {
        let mut c = StatusCounts {
            active: 0,
            frozen: 0,
            left: 0,
        };
        for s in statuses {
            match s {
                Status::Active => c.active += 1,
                Status::FrozenAtNode => c.frozen += 1,
                Status::LeftGrid => c.left += 1,
            }
        }
        c
    }
}

/// Epstein ensemble statistics at one frame.
#[derive(Clone, Debug, Serialize)]
pub struct EpsteinFrame {
    pub status: StatusCounts,
    pub node_points: usize,
    pub moments: Vec<MomentCheck>,
    pub equivariance: KsReport,
    pub occupancy: Vec<RegionFrequency>,
    pub transitions: usize,
}

/// De Broglie–Bohm ensemble statistics at one frame.
#[derive(Clone, Debug, Serialize)]
pub struct DbbFrame {
    pub status: StatusCounts,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub equivariance: KsReport,
    pub occupancy: Vec<RegionFrequency>,
    pub transitions: usize,
    /// One-dimensional runs only: whether the ensemble kept its ordering.
    pub ordered: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameStats {
    pub index: usize,
    pub time: f64,
    pub norm: f64,
    pub energy: f64,
    pub boundary_mass_position: f64,
    pub boundary_mass_momentum: f64,
    /// `‖∇̃·j − I‖/‖I‖` for the current in use.
    pub divergence_mismatch: f64,
    /// Continuity residual over the last propagator step of the frame.
    pub continuity_residual: Option<f64>,
    pub epstein: Option<EpsteinFrame>,
    pub dbb: Option<DbbFrame>,
}

/// Everything a frame observer can inspect.
pub struct FrameView<'a> {
    pub index: usize,
    pub time: f64,
    pub psi_x: &'a ComplexField,
    pub psi_p: &'a ComplexField,
    pub fields: &'a EpsteinFields,
    pub guidance: Option<&'a FlaggedField>,
    pub epstein: &'a [PTrajectory],
    pub dbb: &'a [XTrajectory],
    pub stats: &'a FrameStats,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub frames: Vec<FrameStats>,
    pub epstein: Vec<PTrajectory>,
    pub dbb: Vec<XTrajectory>,
    pub psi_x: ComplexField,
    pub psi_p: ComplexField,
    pub fields: EpsteinFields,
    pub energy_drift: f64,
    pub norm_drift: f64,
}

impl RunOutput {
    pub fn initial_epstein_momenta(&self) -> Vec<Coord> {
        self.epstein
            .iter()
            .filter_map(|t| t.history.as_ref().and_then(|h| h.first()).map(|r| r.p))
            .collect()
    }
}

fn active_points<'a, T>(items: &'a [T], status: impl Fn(&T) -> Status + 'a, q: impl Fn(&T) -> Coord + 'a) -> Vec<Coord> {
    items.iter().filter(|t| status(t) == Status::Active).map(q).collect()
}

struct Ensembles {
    epstein: Vec<PTrajectory>,
    dbb: Vec<XTrajectory>,
    epstein_transitions: TransitionCounter,
    dbb_transitions: TransitionCounter,
}

/// Runs the full simulation. `observer` sees every frame after its
/// statistics are computed and may veto the run by returning an error.
pub fn run(spec: &RunSpec, mut observer: impl FnMut(&FrameView<'_>) -> Result<()>) -> Result<RunOutput> {
    let grid = spec.psi.grid().clone();
    let dof = grid.dof();
    if spec.propagator.steps_per_frame == 0 {
        return Err(Error::Config("steps_per_frame must be at least 1".into()));
    }
    if spec.samples == 0 {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    if !spec.regions.is_empty() {
        stats::validate_regions(&spec.regions, dof)?;
    }
    let propagator = Propagator::new(&grid, &spec.potential, &spec.masses, spec.propagator.dt)?;
    let mut psi_p = spec.psi.in_representation(Representation::Momentum)?;
    let norm0 = psi_p.norm_sqr();
    if (norm0 - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized {
            norm: norm0,
            tolerance: 1e-6,
        });
    }
    let mut psi_x = psi_p.to_position()?;
    let t0 = psi_p.time();
    let dt = spec.propagator.dt;
    let spf = spec.propagator.steps_per_frame;

    let mut fields = EpsteinFields::compute(&spec.potential, spec.method, &psi_x, &psi_p)?;
    let mut guidance = if spec.model.dbb() {
        Some(guidance_field(&psi_x, &spec.masses)?)
    } else {
        None
    };

    let mut ens = Ensembles {
        epstein: Vec::new(),
        dbb: Vec::new(),
        epstein_transitions: TransitionCounter::new(spec.regions.clone(), spec.samples),
        dbb_transitions: TransitionCounter::new(spec.regions.clone(), spec.samples),
    };
    if spec.model.epstein() {
        ens.epstein = ensemble::sample_momenta(&psi_p, spec.samples, spec.seed)?
            .into_iter()
            .enumerate()
            .map(|(id, p)| PTrajectory::new(id, p, id < spec.history_limit))
            .collect();
        ens.epstein.par_iter_mut().for_each(|t| {
            position_of(t, &fields.position);
            t.record(t0);
        });
    }
    if spec.model.dbb() {
        ens.dbb = ensemble::sample_positions(&psi_x, spec.samples, spec.seed ^ DBB_SEED_OFFSET)?
            .into_iter()
            .enumerate()
            .map(|(id, x)| XTrajectory::new(id, x, id < spec.history_limit))
            .collect();
        ens.dbb.iter_mut().for_each(|t| t.record(t0));
    }

    let energy0 = propagator.energy(&psi_x, &psi_p)?;
    let mut frames = Vec::with_capacity(spec.frames + 1);
    let first = frame_stats(spec, 0, t0, &propagator, &psi_x, &psi_p, &fields, None, &mut ens)?;
    observer(&FrameView {
        index: 0,
        time: t0,
        psi_x: &psi_x,
        psi_p: &psi_p,
        fields: &fields,
        guidance: guidance.as_ref(),
        epstein: &ens.epstein,
        dbb: &ens.dbb,
        stats: &first,
    })?;
    frames.push(first);

    let mut max_energy_drift: f64 = 0.0;
    let mut max_norm_drift: f64 = 0.0;
    for index in 1..=spec.frames {
        let t_prev = t0 + ((index - 1) * spf) as f64 * dt;
        let time = t0 + (index * spf) as f64 * dt;
        for _ in 0..spf - 1 {
            propagator.step(&mut psi_p)?;
        }
        let mut before = psi_p.clone();
        before.set_time(time - dt);
        propagator.step(&mut psi_p)?;
        psi_p.set_time(time);
        psi_x = psi_p.to_position()?;
        dynamics::check_boundary_mass(&psi_x)?;
        dynamics::check_boundary_mass(&psi_p)?;

        let next = EpsteinFields::compute(&spec.potential, spec.method, &psi_x, &psi_p)?;
        let continuity = {
            let before_x = before.to_position()?;
            let j_before = current::current(&spec.potential, spec.method, &before_x, &before)?;
            let j_mid = current::midpoint(&j_before, &next.current);
            let (_, magnitude) = spec.potential.interaction_source_parts(&psi_x, &psi_p)?;
            current::continuity_residual(&before, &psi_p, &j_mid, dt, magnitude.l2_norm())?
        };

        if spec.model.epstein() {
            let source = FrameInterpolated::new(&fields.velocity, &next.velocity, t_prev, time);
            ens.epstein.par_iter_mut().for_each(|t| {
                for s in 0..spf {
                    step_epstein(t, &source, t_prev + s as f64 * dt, dt);
                }
                position_of(t, &next.position);
                t.record(time);
            });
        }
        if let Some(prev_guidance) = guidance.as_ref() {
            let next_guidance = guidance_field(&psi_x, &spec.masses)?;
            let source = FrameInterpolated::new(prev_guidance, &next_guidance, t_prev, time);
            ens.dbb.par_iter_mut().for_each(|t| {
                for s in 0..spf {
                    step_dbb(t, &source, t_prev + s as f64 * dt, dt);
                }
                t.record(time);
            });
            guidance = Some(next_guidance);
        }
        fields = next;

        let stats = frame_stats(spec, index, time, &propagator, &psi_x, &psi_p, &fields, Some(continuity), &mut ens)?;
        max_energy_drift = max_energy_drift.max(((stats.energy - energy0) / energy0.abs().max(1e-300)).abs());
        max_norm_drift = max_norm_drift.max((stats.norm - norm0).abs());
        observer(&FrameView {
            index,
            time,
            psi_x: &psi_x,
            psi_p: &psi_p,
            fields: &fields,
            guidance: guidance.as_ref(),
            epstein: &ens.epstein,
            dbb: &ens.dbb,
            stats: &stats,
        })?;
        frames.push(stats);
    }

    Ok(RunOutput {
        frames,
        epstein: ens.epstein,
        dbb: ens.dbb,
        psi_x,
        psi_p,
        fields,
        energy_drift: max_energy_drift,
        norm_drift: max_norm_drift,
    })
}

#[allow(clippy::too_many_arguments)]
fn frame_stats(
    spec: &RunSpec,
    index: usize,
    time: f64,
    propagator: &Propagator,
    psi_x: &ComplexField,
    psi_p: &ComplexField,
    fields: &EpsteinFields,
    continuity: Option<f64>,
    ens: &mut Ensembles,
) -> Result<FrameStats> {
    let dof = psi_p.grid().dof();
    let (source, magnitude) = spec.potential.interaction_source_parts(psi_x, psi_p)?;
    let divergence = current::divergence_mismatch(&fields.current, &source, magnitude.l2_norm())?;

    let epstein = if spec.model.epstein() {
        for t in &ens.epstein {
            ens.epstein_transitions.observe(t.id, t.is_active().then_some(&t.x));
        }
        let ps = active_points(&ens.epstein, |t| t.status, |t| t.p);
        let xs = active_points(&ens.epstein, |t| t.status, |t| t.x);
        Some(EpsteinFrame {
            status: StatusCounts::of(ens.epstein.iter().map(|t| t.status)),
            node_points: fields.position.invalid_count(),
            moments: stats::moment_checks(&xs, psi_x, psi_p, &fields.position)?,
            equivariance: ensemble::equivariance_check(&ps, &psi_p.density()),
            occupancy: occupancy(&xs, &spec.regions)?,
            transitions: ens.epstein_transitions.transitions(),
        })
    } else {
        None
    };

    let dbb = if spec.model.dbb() {
        for t in &ens.dbb {
            ens.dbb_transitions.observe(t.id, t.is_active().then_some(&t.x));
        }
        let xs = active_points(&ens.dbb, |t| t.status, |t| t.x);
        let (mean, std): (Vec<f64>, Vec<f64>) = (0..dof).map(|k| stats::mean_std(xs.iter().map(|x| x[k]))).unzip();
        let ordered = (dof == 1).then(|| {
            let mut by_start: Vec<(f64, f64)> = ens
                .dbb
                .iter()
                .filter(|t| t.is_active())
                .filter_map(|t| t.history.as_ref().and_then(|h| h.first()).map(|r| (r.x[0], t.x[0])))
                .collect();
            by_start.sort_by(|a, b| a.0.total_cmp(&b.0));
            by_start.windows(2).all(|w| w[0].1 <= w[1].1)
        });
        Some(DbbFrame {
            status: StatusCounts::of(ens.dbb.iter().map(|t| t.status)),
            mean,
            std,
            equivariance: ensemble::equivariance_check(&xs, &psi_x.density()),
            occupancy: occupancy(&xs, &spec.regions)?,
            transitions: ens.dbb_transitions.transitions(),
            ordered,
        })
    } else {
        None
    };

    Ok(FrameStats {
        index,
        time,
        norm: psi_p.norm_sqr(),
        energy: propagator.energy(psi_x, psi_p)?,
        boundary_mass_position: dynamics::boundary_mass(psi_x).1,
        boundary_mass_momentum: dynamics::boundary_mass(psi_p).1,
        divergence_mismatch: divergence,
        continuity_residual: continuity,
        epstein,
        dbb,
    })
}

fn occupancy(xs: &[Coord], regions: &[Region]) -> Result<Vec<RegionFrequency>> {
    if regions.is_empty() {
        Ok(Vec::new())
    } else {
        stats::macrostate_frequencies(xs, regions)
    }
}

/// Number of frames needed to reach `t_end` with the given step settings.
pub fn frame_count(t_end: f64, config: &PropagatorConfig) -> Result<usize> {
    let interval = config.dt * config.steps_per_frame as f64;
    let frames = (t_end / interval).round();
    if !(frames >= 0.0) || ((frames * interval) - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(Error::Config(format!(
            "end time {t_end} is not a whole number of frames of length {interval}"
        )));
    }
    Ok(frames as usize)
}

/// Coordinates padded to [`MAX_DOF`].
pub fn coord(values: &[f64]) -> Coord {
    let mut out = [0.0; MAX_DOF];
    out[..values.len()].copy_from_slice(values);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::Complex64;

    fn linear_spec(model: Model) -> RunSpec {
        let grid = GridSpec::one_dim(256, 0.0, 40.0).unwrap();
        let mut psi = ComplexField::from_fn(Representation::Position, grid, 0.0, |c| {
            Complex64::new((-c[0] * c[0] / 2.0).exp(), 0.0)
        });
        psi.normalize();
        RunSpec {
            psi,
            potential: Potential::Linear { slope: vec![2.0] },
            masses: vec![1.0],
            propagator: PropagatorConfig {
                dt: 1e-3,
                steps_per_frame: 10,
            },
            frames: 20,
            method: CurrentMethod::ClosedForm,
            model,
            samples: 2000,
            seed: 5,
            history_limit: 10,
            regions: vec![],
        }
    }

    #[test]
    fn linear_drift_moves_momenta_classically() {
        let spec = linear_spec(Model::Both);
        let out = run(&spec, |_| Ok(())).unwrap();
        let t = out.frames.last().unwrap().time;
        assert!((t - 0.2).abs() < 1e-12);
        for traj in out.epstein.iter().filter(|t| t.history.is_some()) {
            let p0 = traj.history.as_ref().unwrap()[0].p[0];
            assert!((traj.p[0] - (p0 - 2.0 * t)).abs() < 1e-8, "{} vs {}", traj.p[0], p0 - 2.0 * t);
        }
        let last = out.frames.last().unwrap();
        assert!(last.epstein.as_ref().unwrap().equivariance.passed);
        assert!(last.dbb.as_ref().unwrap().equivariance.passed);
        assert_eq!(last.dbb.as_ref().unwrap().ordered, Some(true));
        assert!(last.continuity_residual.unwrap() < 1e-4);
        assert!(out.frames.iter().all(|f| f.epstein.as_ref().unwrap().moments[0].passed()));
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = linear_spec(Model::Epstein);
        let a = run(&spec, |_| Ok(())).unwrap();
        let b = run(&spec, |_| Ok(())).unwrap();
        let pa: Vec<_> = a.epstein.iter().map(|t| t.p).collect();
        let pb: Vec<_> = b.epstein.iter().map(|t| t.p).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn frame_count_requires_whole_frames() {
        let c = PropagatorConfig {
            dt: 1e-3,
            steps_per_frame: 10,
        };
        assert_eq!(frame_count(5.0, &c).unwrap(), 500);
        assert!(frame_count(0.015, &c).is_err());
    }
}
