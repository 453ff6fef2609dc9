//! Acceptance criteria, one line each. Run with
//! `cargo test -p epstein --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use epstein::dynamics::{propagate, PropagatorConfig};
use epstein::output;
use epstein::scenarios::{self, Overrides, ScenarioRun};
use epstein::{Complex64, ComplexField, CurrentMethod, GridSpec, Potential, Representation, Result};

struct Outcome {
    passed: bool,
    detail: String,
}

struct Runs {
    cache: BTreeMap<String, ScenarioRun>,
}

impl Runs {
    fn get(&mut self, name: &str) -> Result<&ScenarioRun> {
        if !self.cache.contains_key(name) {
            let config = scenarios::builtin(name, &Overrides::default())?;
            self.cache.insert(name.to_string(), scenarios::run_scenario(&config)?);
        }
        Ok(&self.cache[name])
    }
}

fn run_with(name: &str, o: Overrides) -> Result<ScenarioRun> {
    scenarios::run_scenario(&scenarios::builtin(name, &o)?)
}

/// Checks the named verdicts: all must exist, be asserted and pass.
fn require(run: &ScenarioRun, names: &[&str], detail: &mut Vec<String>) -> bool {
    let mut ok = true;
    for name in names {
        match run.verdict(name) {
            Some(v) => {
                ok &= v.asserted && v.passed;
                detail.push(format!("{}/{name} {:.2e}", run.config.scenario, v.value));
            }
            None => {
                ok = false;
                detail.push(format!("{}/{name} missing", run.config.scenario));
            }
        }
    }
    ok
}

fn outcome(passed: bool, detail: Vec<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.join(", "),
    }
}

fn free_particle_exactness(runs: &mut Runs) -> Result<Outcome> {
    let start = Instant::now();
    let run = runs.get("free-particle")?;
    let secs = start.elapsed().as_secs_f64();
    let mut d = Vec::new();
    let ok = require(run, &["free-law", "momentum-constant"], &mut d) && run.config.n == 10_000 && secs <= 30.0;
    d.push(format!("N {} in {secs:.1} s", run.config.n));
    Ok(outcome(ok, d))
}

fn origin_concentration(_: &mut Runs) -> Result<Outcome> {
    let mut ok = true;
    let mut d = Vec::new();
    for a in [0.0, 5.0] {
        let run = run_with(
            "superposition",
            Overrides {
                a: Some(a),
                ..Default::default()
            },
        )?;
        ok &= require(&run, &["origin-at-t0", "momentum-fringes"], &mut d);
        d.push(format!("a = {a}"));
    }
    Ok(outcome(ok, d))
}

fn moment_identities(runs: &mut Runs) -> Result<Outcome> {
    let mut ok = true;
    let mut d = Vec::new();
    for info in scenarios::CATALOG.iter().filter(|s| s.name != "custom") {
        let run = runs.get(info.name)?;
        let mut lines = Vec::new();
        ok &= require(run, &["moment-mean", "moment-spread", "second-moment-identity"], &mut lines);
        d.push(format!("{} ok", info.name));
        if !ok {
            d.extend(lines);
        }
    }
    Ok(outcome(ok, d))
}

fn equivariance(runs: &mut Runs) -> Result<Outcome> {
    let run = runs.get("harmonic-coherent")?;
    let mut ok = run.config.n == 10_000;
    let mut d = Vec::new();
    for target in [0.0, PI / 4.0, PI / 2.0, PI] {
        let frame = run.output.frames.iter().find(|f| (f.time - target).abs() < 1e-9);
        match frame.and_then(|f| f.epstein.as_ref()) {
            Some(e) => {
                ok &= e.equivariance.passed;
                d.push(format!("t {target:.4}: {:.4} < {:.4}", e.equivariance.statistic, e.equivariance.critical));
            }
            None => {
                ok = false;
                d.push(format!("t {target:.4}: no frame"));
            }
        }
    }
    Ok(outcome(ok, d))
}

fn continuity(runs: &mut Runs) -> Result<Outcome> {
    let mut d = Vec::new();
    let mut ok = require(runs.get("linear-drift")?, &["continuity", "poisson-vs-closed"], &mut d);
    ok &= require(runs.get("harmonic-ground")?, &["continuity", "poisson-vs-closed"], &mut d);
    let coherent = run_with(
        "harmonic-coherent",
        Overrides {
            dt: Some(PI / 3140.0),
            frames: Some(5),
            t_end: Some(PI),
            ..Default::default()
        },
    )?;
    ok &= require(&coherent, &["continuity", "poisson-vs-closed"], &mut d);
    let dts = [runs.get("linear-drift")?.config.dt, runs.get("harmonic-ground")?.config.dt, coherent.config.dt];
    ok &= dts.iter().all(|dt| (dt - 1e-3).abs() <= 1e-6);
    Ok(outcome(ok, d))
}

fn classical_force(runs: &mut Runs) -> Result<Outcome> {
    let mut d = Vec::new();
    let mut ok = require(runs.get("harmonic-coherent")?, &["force-law"], &mut d);
    ok &= require(
        runs.get("harmonic-ground")?,
        &["force-law", "ground-current-zero", "ground-frozen-p", "ground-x-zero"],
        &mut d,
    );
    Ok(outcome(ok, d))
}

fn born_weights(runs: &mut Runs) -> Result<Outcome> {
    let names = ["born-pointer-left", "born-pointer-right", "factorized-density"];
    let mut d = Vec::new();
    let mut ok = require(runs.get("measurement")?, &names, &mut d);
    let skewed = run_with(
        "measurement",
        Overrides {
            c1: Some(0.8),
            c2: Some(0.6),
            ..Default::default()
        },
    )?;
    ok &= require(&skewed, &names, &mut d);
    ok &= skewed.config.n == 10_000;
    Ok(outcome(ok, d))
}

fn effective_collapse(runs: &mut Runs) -> Result<Outcome> {
    let mut d = Vec::new();
    let ok = require(runs.get("collapse")?, &["decomposition", "branch-tracking"], &mut d);
    let poisson = run_with(
        "collapse",
        Overrides {
            current: Some(CurrentMethod::Poisson),
            ..Default::default()
        },
    )?;
    let leakage = poisson.verdict("poisson-leakage").map_or(f64::NAN, |v| v.value);
    d.push(format!("poisson leakage {leakage:.2e} (reported)"));
    Ok(outcome(ok && leakage.is_finite(), d))
}

fn coherent_exact(x: f64, t: f64, x0: f64) -> Complex64 {
    let phase = -(0.5 * t + x * x0 * t.sin() - 0.25 * x0 * x0 * (2.0 * t).sin());
    Complex64::from_polar(PI.powf(-0.25) * (-(x - x0 * t.cos()).powi(2) / 2.0).exp(), phase)
}

fn strang_order() -> Result<f64> {
    let grid = GridSpec::one_dim(128, 0.0, 40.0)?;
    let psi = ComplexField::from_fn(Representation::Position, grid, 0.0, |x| coherent_exact(x[0], 0.0, 2.0));
    let potential = Potential::Harmonic {
        mass: vec![1.0],
        omega: vec![1.0],
    };
    let mut errors = Vec::new();
    for dt in [0.02, 0.01] {
        let steps = (1.0 / dt) as usize;
        let config = PropagatorConfig {
            dt,
            steps_per_frame: steps,
        };
        let out = propagate(&psi, &potential, &[1.0], config, 1, |_| Ok(()))?.to_position()?;
        let err = out
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| (v - coherent_exact(out.point(j)[0], 1.0, 2.0)).norm())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok((errors[0] / errors[1]).log2())
}

fn propagator_quality(runs: &mut Runs) -> Result<Outcome> {
    let mut d = Vec::new();
    let mut ok = require(runs.get("free-particle")?, &["free-gaussian"], &mut d);
    ok &= require(runs.get("harmonic-coherent")?, &["period-fidelity"], &mut d);
    let order = strang_order()?;
    ok &= (order - 2.0).abs() <= 0.2;
    d.push(format!("Strang order {order:.3}"));
    Ok(outcome(ok, d))
}

fn determinism(_: &mut Runs) -> Result<Outcome> {
    let o = Overrides {
        n: Some(2000),
        ..Default::default()
    };
    let digests = |name: &str| -> Result<Vec<(String, String)>> {
        let run = run_with(name, o.clone())?;
        Ok(output::render(&run)?
            .into_iter()
            .map(|(n, bytes)| (n, output::sha256_hex(&bytes)))
            .collect())
    };
    let mut ok = true;
    let mut d = Vec::new();
    for name in ["superposition", "measurement"] {
        let a = digests(name)?;
        let b = digests(name)?;
        ok &= a == b;
        d.push(format!("{name}: {} files", a.len()));
    }
    Ok(outcome(ok, d))
}

type Criterion = fn(&mut Runs) -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("free-particle exactness", free_particle_exactness),
        ("origin concentration and separation independence", origin_concentration),
        ("moment identity and variance inequality", moment_identities),
        ("equivariance", equivariance),
        ("continuity and current cross-validation", continuity),
        ("classical-force consistency", classical_force),
        ("Born weights with environment", born_weights),
        ("effective collapse", effective_collapse),
        ("propagator quality", propagator_quality),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut runs = Runs { cache: BTreeMap::new() };
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("AC{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let (passed, detail) = match check(&mut runs) {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!("{id:4} {} {name}: {detail}", if passed { "pass" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
