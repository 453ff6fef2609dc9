//! Ensemble statistics: moment checks against quadrature, histograms of the
//! implied configuration density, and macrostate occupancies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Coord, Representation, MAX_DOF};
use crate::spectral::{wavefunction_derivative, FlaggedField};

/// Relative tolerance of the quadrature second-moment identity.
pub const SECOND_MOMENT_TOLERANCE: f64 = 1e-6;

/// Quadrature moments of the position operator for one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorMoments {
    pub mean: f64,
    pub second: f64,
    pub std: f64,
}

/// `⟨x̂⟩`, `⟨x̂²⟩` and `Δx̂` by position-space quadrature.
pub fn operator_moments(psi_x: &ComplexField) -> Result<Vec<OperatorMoments>> {
    psi_x.expect(Representation::Position)?;
    let grid = psi_x.grid();
    let dv = psi_x.cell_volume();
    Ok((0..grid.dof())
        .map(|k| {
            let (mut m1, mut m2) = (0.0, 0.0);
            for (i, v) in psi_x.values().iter().enumerate() {
                let x = grid.point(Representation::Position, i)[k];
                let rho = v.norm_sqr();
                m1 += rho * x;
                m2 += rho * x * x;
            }
            let (mean, second) = (m1 * dv, m2 * dv);
            OperatorMoments {
                mean,
                second,
                std: (second - mean * mean).max(0.0).sqrt(),
            }
        })
        .collect())
}

/// Terms of the second-moment identity `⟨x²⟩ = ⟨x̂²⟩ − ħ²∫(∂|ψ̃|/∂p)²dp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SecondMomentIdentity {
    /// `∫|ψ̃|² x(p)² dp`, the implied-distribution second moment.
    pub implied: f64,
    /// `ħ²∫(∂|ψ̃|/∂p)² dp`.
    pub amplitude: f64,
    /// `⟨x̂²⟩` by position quadrature.
    pub operator: f64,
    pub relative_residual: f64,
}

/// Mean of the implied distribution, `∫|ψ̃|² x(p) dp`, per axis.
pub fn implied_mean(psi_p: &ComplexField, position: &FlaggedField) -> Vec<f64> {
    let dv = psi_p.cell_volume();
    (0..position.dof())
        .map(|k| {
            psi_p
                .values()
                .iter()
                .zip(&position.components[k])
                .zip(&position.valid)
                .filter(|(_, ok)| **ok)
                .map(|((v, x), _)| v.norm_sqr() * x)
                .sum::<f64>()
                * dv
        })
        .collect()
}

/// Evaluates both sides of the second-moment identity per axis. At flagged
/// nodes the phase term vanishes and `ħ²|∂ψ̃|²` is attributed entirely to
/// the amplitude term.
pub fn second_moment_identity(
    psi_x: &ComplexField,
    psi_p: &ComplexField,
    position: &FlaggedField,
) -> Result<Vec<SecondMomentIdentity>> {
    psi_p.expect(Representation::Momentum)?;
    let operator = operator_moments(psi_x)?;
    let hbar = psi_p.grid().hbar();
    let dv = psi_p.cell_volume();
    (0..position.dof())
        .map(|k| {
            let derivative = wavefunction_derivative(psi_p, k)?;
            let (mut implied, mut amplitude) = (0.0, 0.0);
            for (i, (v, d)) in psi_p.values().iter().zip(derivative.values()).enumerate() {
                if position.valid[i] {
                    let x = position.components[k][i];
                    implied += v.norm_sqr() * x * x;
                    amplitude += hbar * hbar * (v.conj() * d).re.powi(2) / v.norm_sqr();
                } else {
                    amplitude += hbar * hbar * d.norm_sqr();
                }
            }
            let (implied, amplitude) = (implied * dv, amplitude * dv);
            let op = operator[k].second;
            Ok(SecondMomentIdentity {
                implied,
                amplitude,
                operator: op,
                relative_residual: (implied + amplitude - op).abs() / op.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

/// Monte Carlo comparison of an ensemble's positions with the quadrature
/// moments for one axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub axis: usize,
    pub samples: usize,
    pub ensemble_mean: f64,
    pub ensemble_std: f64,
    pub operator_mean: f64,
    pub operator_std: f64,
    pub implied_mean: f64,
    pub mean_bound: f64,
    pub mean_ok: bool,
    pub std_bound: f64,
    pub std_ok: bool,
    pub identity: SecondMomentIdentity,
    pub identity_ok: bool,
}

impl MomentCheck {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.std_ok && self.identity_ok
    }
}

/// Mean and population standard deviation in a fixed summation order.
pub fn mean_std(values: impl IntoIterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().into_iter().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    let var = values.into_iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Moment checks for the positions `xs` of the active ensemble members.
pub fn moment_checks(
    xs: &[Coord],
    psi_x: &ComplexField,
    psi_p: &ComplexField,
    position: &FlaggedField,
) -> Result<Vec<MomentCheck>> {
    let operator = operator_moments(psi_x)?;
    let implied = implied_mean(psi_p, position);
    let identity = second_moment_identity(psi_x, psi_p, position)?;
    let n = xs.len();
    let root_n = (n as f64).sqrt();
    Ok((0..position.dof())
        .map(|k| {
            let (mean, std) = mean_std(xs.iter().map(|x| x[k]));
            let op = operator[k];
            let mean_bound = 4.0 * op.std / root_n;
            let std_bound = op.std * (1.0 + 4.0 / root_n);
            MomentCheck {
                axis: k,
                samples: n,
                ensemble_mean: mean,
                ensemble_std: std,
                operator_mean: op.mean,
                operator_std: op.std,
                implied_mean: implied[k],
                mean_bound,
                mean_ok: (mean - op.mean).abs() <= mean_bound,
                std_bound,
                std_ok: std <= std_bound,
                identity: identity[k],
                identity_ok: identity[k].relative_residual <= SECOND_MOMENT_TOLERANCE,
            }
        })
        .collect())
}

/// Binning of one or two coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
    pub bins: Vec<usize>,
}

impl HistogramSpec {
    /// `bins` bins per axis covering about `[-half_width, half_width]`, laid
    /// out so that the origin is a bin centre.
    pub fn centered(dof: usize, half_width: f64, bins: usize) -> Self {
        let width = 2.0 * half_width / bins as f64;
        let lower = -((bins / 2) as f64 + 0.5) * width;
        HistogramSpec {
            lower: vec![lower; dof],
            width: vec![width; dof],
            bins: vec![bins; dof],
        }
    }

    pub fn dof(&self) -> usize {
        self.bins.len()
    }

    pub fn len(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, k: usize, b: usize) -> f64 {
        self.lower[k] + (b as f64 + 0.5) * self.width[k]
    }

    fn bin_of(&self, x: &Coord) -> Option<usize> {
        let mut index = 0;
        for k in 0..self.dof() {
            let f = ((x[k] - self.lower[k]) / self.width[k]).floor();
            if !(f >= 0.0 && f < self.bins[k] as f64) {
                return None;
            }
            index = index * self.bins[k] + f as usize;
        }
        Some(index)
    }
}

/// Histogram estimate of a density; `density` integrates to the fraction of
/// samples that fell inside the range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub samples: usize,
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl Histogram {
    pub fn new(spec: HistogramSpec, points: &[Coord]) -> Self {
        let mut counts = vec![0u64; spec.len()];
        let mut outside = 0;
        for p in points {
            match spec.bin_of(p) {
                Some(b) => counts[b] += 1,
                None => outside += 1,
            }
        }
        Histogram {
            spec,
            samples: points.len(),
            counts,
            outside,
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.samples.max(1) as f64;
        self.counts.iter().map(|c| *c as f64 / n).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        let volume: f64 = self.spec.width.iter().product();
        self.fractions().into_iter().map(|f| f / volume).collect()
    }

    /// `Σ|f_b − g_b|` over bin fractions, outside mass included.
    pub fn l1_distance(&self, other: &Histogram) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch("histograms use different binning".into()));
        }
        let (a, b) = (self.fractions(), other.fractions());
        let outside = (self.outside as f64 / self.samples.max(1) as f64
            - other.outside as f64 / other.samples.max(1) as f64)
            .abs();
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() + outside)
    }

    /// Monte Carlo band for [`Histogram::l1_distance`] between two
    /// independent samples of the same law.
    pub fn l1_band(&self) -> f64 {
        2.0 * (self.spec.len() as f64 / self.samples.max(1) as f64).sqrt()
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        let spec = &self.spec;
        let header = if spec.dof() == 1 {
            "bin_center,density"
        } else {
            "bin_center,bin_center1,density"
        };
        writeln!(out, "{header}")?;
        let density = self.density();
        for (i, d) in density.iter().enumerate() {
            if spec.dof() == 1 {
                writeln!(out, "{},{}", spec.center(0, i), d)?;
            } else {
                let (a, b) = (i / spec.bins[1], i % spec.bins[1]);
                writeln!(out, "{},{},{}", spec.center(0, a), spec.center(1, b), d)?;
            }
        }
        Ok(())
    }
}

/// Outcome of a bin-wise bound `f ≤ factor·g` tested within `sigmas`
/// binomial standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub factor: f64,
    pub sigmas: f64,
    pub worst_excess: f64,
    pub worst_bin: Option<usize>,
    pub passed: bool,
}

/// Tests `f_b ≤ factor·g_b` for every bin of two independent histograms.
/// Fractions are floored at `1/N` when estimating their standard errors.
pub fn bounded_by(f: &Histogram, g: &Histogram, factor: f64, sigmas: f64) -> Result<BoundCheck> {
    if f.spec != g.spec {
        return Err(Error::GridMismatch("histograms use different binning".into()));
    }
    let var = |p: f64, n: usize| {
        let n = n.max(1) as f64;
        let p = p.max(1.0 / n);
        p * (1.0 - p).max(0.0) / n
    };
    let (fa, ga) = (f.fractions(), g.fractions());
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_bin = None;
    for (b, (x, y)) in fa.iter().zip(&ga).enumerate() {
        let sigma = (var(*x, f.samples) + factor * factor * var(*y, g.samples)).sqrt();
        let excess = (x - factor * y) / sigma;
        if excess > worst_excess {
            worst_excess = excess;
            worst_bin = Some(b);
        }
    }
    Ok(BoundCheck {
        factor,
        sigmas,
        worst_excess,
        worst_bin,
        passed: worst_excess <= sigmas,
    })
}

/// A named, half-open box `[lower, upper)` in configuration space. Bounds
/// may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(name: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Region {
            name: name.into(),
            lower,
            upper,
        }
    }

    pub fn contains(&self, x: &Coord) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .enumerate()
            .all(|(k, (lo, hi))| x[k] >= *lo && x[k] < *hi)
    }

    fn overlaps(&self, other: &Region) -> bool {
        (0..self.lower.len())
            .all(|k| self.lower[k].max(other.lower[k]) < self.upper[k].min(other.upper[k]))
    }
}

/// Name of the implicit complement of the declared regions.
pub const OTHER_REGION: &str = "other";

/// Checks dimensions, ordering and disjointness of a region list.
pub fn validate_regions(regions: &[Region], dof: usize) -> Result<()> {
    for (i, r) in regions.iter().enumerate() {
        if r.lower.len() != dof || r.upper.len() != dof {
            return Err(Error::Config(format!(
                "region '{}' needs {dof} lower and upper bounds",
                r.name
            )));
        }
        if r.lower.iter().zip(&r.upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config(format!("region '{}' is empty", r.name)));
        }
        if r.name == OTHER_REGION {
            return Err(Error::Config(format!("region name '{OTHER_REGION}' is reserved")));
        }
        for other in &regions[..i] {
            if r.overlaps(other) {
                return Err(Error::OverlappingRegions(other.name.clone(), r.name.clone()));
            }
        }
    }
    Ok(())
}

/// Index of the region containing `x`, or `regions.len()` for "other".
pub fn classify(regions: &[Region], x: &Coord) -> usize {
    regions.iter().position(|r| r.contains(x)).unwrap_or(regions.len())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionFrequency {
    pub name: String,
    pub count: usize,
    pub frequency: f64,
    pub std_error: f64,
}

/// Fraction of `xs` in each region, followed by the "other" row.
pub fn macrostate_frequencies(xs: &[Coord], regions: &[Region]) -> Result<Vec<RegionFrequency>> {
    let dof = regions.first().map_or(0, |r| r.lower.len());
    validate_regions(regions, dof)?;
    let mut counts = vec![0usize; regions.len() + 1];
    for x in xs {
        counts[classify(regions, x)] += 1;
    }
    let n = xs.len().max(1) as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let w = *c as f64 / n;
            RegionFrequency {
                name: regions.get(i).map_or(OTHER_REGION.to_string(), |r| r.name.clone()),
                count: *c,
                frequency: w,
                std_error: (w * (1.0 - w) / n).sqrt(),
            }
        })
        .collect())
}

/// Counts region changes of each ensemble member between observations.
#[derive(Clone, Debug)]
pub struct TransitionCounter {
    regions: Vec<Region>,
    last: Vec<Option<usize>>,
    transitions: usize,
    members_moved: Vec<bool>,
}

impl TransitionCounter {
    pub fn new(regions: Vec<Region>, members: usize) -> Self {
        TransitionCounter {
            regions,
            last: vec![None; members],
            transitions: 0,
            members_moved: vec![false; members],
        }
    }

    /// Records the current position of member `id`; `None` for members no
    /// longer tracked.
    pub fn observe(&mut self, id: usize, x: Option<&Coord>) {
        let Some(x) = x else { return };
        let region = classify(&self.regions, x);
        if let Some(prev) = self.last[id] {
            if prev != region {
                self.transitions += 1;
                self.members_moved[id] = true;
            }
        }
        self.last[id] = Some(region);
    }

    pub fn transitions(&self) -> usize {
        self.transitions
    }

    pub fn members_moved(&self) -> usize {
        self.members_moved.iter().filter(|m| **m).count()
    }
}

/// Mean of an ensemble of coordinates.
pub fn coordinate_mean(points: &[Coord], dof: usize) -> Coord {
    let mut out = [0.0; MAX_DOF];
    for (k, o) in out.iter_mut().enumerate().take(dof) {
        *o = mean_std(points.iter().map(|p| p[k])).0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::spectral::local_position_field;
    use crate::Complex64;

    fn gaussian_p(x0: f64, chirp: f64) -> ComplexField {
        let grid = GridSpec::one_dim(512, 0.0, 60.0).unwrap();
        let mut psi = ComplexField::from_fn(Representation::Momentum, grid, 0.0, |c| {
            let p = c[0];
            Complex64::from_polar((-p * p / 2.0).exp(), -p * x0 - chirp * p * p)
        });
        psi.normalize();
        psi
    }

    #[test]
    fn identity_holds_for_chirped_packet() {
        let psi_p = gaussian_p(1.5, 0.8);
        let psi_x = psi_p.to_position().unwrap();
        let field = local_position_field(&psi_p).unwrap();
        let id = second_moment_identity(&psi_x, &psi_p, &field).unwrap();
        assert!(id[0].relative_residual < 1e-9, "{:?}", id[0]);
        // x(p) = x0 + 2·chirp·p, so ⟨x⟩ = x0 and the implied variance is 4c²/2.
        let mean = implied_mean(&psi_p, &field);
        assert!((mean[0] - 1.5).abs() < 1e-10);
        assert!((id[0].implied - (1.5f64.powi(2) + 2.0 * 0.64)).abs() < 1e-9);
    }

    #[test]
    fn real_profile_puts_everything_in_the_amplitude_term() {
        let psi_p = gaussian_p(0.0, 0.0);
        let psi_x = psi_p.to_position().unwrap();
        let field = local_position_field(&psi_p).unwrap();
        let id = second_moment_identity(&psi_x, &psi_p, &field).unwrap()[0];
        assert!(id.implied < 1e-20);
        assert!((id.amplitude - 0.5).abs() < 1e-10);
        let checks = moment_checks(&vec![[0.0, 0.0]; 1000], &psi_x, &psi_p, &field).unwrap();
        assert!(checks[0].passed(), "{checks:?}");
    }

    #[test]
    fn moment_check_rejects_biased_ensemble() {
        let psi_p = gaussian_p(0.0, 0.0);
        let psi_x = psi_p.to_position().unwrap();
        let field = local_position_field(&psi_p).unwrap();
        let checks = moment_checks(&vec![[0.5, 0.0]; 1000], &psi_x, &psi_p, &field).unwrap();
        assert!(!checks[0].mean_ok);
        assert!(checks[0].std_ok);
    }

    #[test]
    fn centered_histogram_has_origin_bin() {
        let spec = HistogramSpec::centered(1, 10.0, 200);
        let b = spec.bin_of(&[0.0, 0.0]).unwrap();
        assert_eq!(spec.center(0, b), 0.0);
        let h = Histogram::new(spec, &[[0.0, 0.0], [1e-9, 0.0], [100.0, 0.0]]);
        assert_eq!(h.counts[b], 2);
        assert_eq!(h.outside, 1);
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("bin_center,density\n"));
    }

    #[test]
    fn regions_classify_and_reject_overlap() {
        let inf = f64::INFINITY;
        let left = Region::new("left", vec![-inf], vec![0.0]);
        let right = Region::new("right", vec![0.0], vec![inf]);
        let xs = [[-1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [f64::NAN, 0.0]];
        let f = macrostate_frequencies(&xs, &[left.clone(), right]).unwrap();
        assert_eq!(f.iter().map(|r| r.count).collect::<Vec<_>>(), vec![1, 2, 1]);
        assert!((f.iter().map(|r| r.frequency).sum::<f64>() - 1.0).abs() < 1e-12);
        let wide = Region::new("wide", vec![-1.0], vec![1.0]);
        assert!(matches!(
            macrostate_frequencies(&xs, &[left, wide]),
            Err(Error::OverlappingRegions(..))
        ));
    }

    #[test]
    fn transitions_are_counted() {
        let regions = vec![Region::new("a", vec![0.0], vec![1.0])];
        let mut t = TransitionCounter::new(regions, 2);
        t.observe(0, Some(&[0.5, 0.0]));
        t.observe(1, Some(&[0.5, 0.0]));
        t.observe(0, Some(&[1.5, 0.0]));
        t.observe(0, Some(&[0.5, 0.0]));
        t.observe(1, None);
        assert_eq!(t.transitions(), 2);
        assert_eq!(t.members_moved(), 1);
    }

    #[test]
    fn bound_check_tolerates_noise_only() {
        let spec = HistogramSpec::centered(1, 5.0, 10);
        let a = Histogram::new(spec.clone(), &vec![[0.0, 0.0]; 100]);
        let b = Histogram::new(spec.clone(), &vec![[0.0, 0.0]; 100]);
        assert!(bounded_by(&a, &b, 1.0, 3.0).unwrap().passed);
        let c = Histogram::new(spec, &vec![[3.0, 0.0]; 100]);
        assert!(!bounded_by(&c, &b, 2.0, 3.0).unwrap().passed);
    }
}
