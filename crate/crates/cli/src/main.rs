use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use epstein::config::ScenarioConfig;
use epstein::engine::Model;
use epstein::output;
use epstein::scenarios::{self, Overrides, ScenarioRun, Verdict};
use epstein::CurrentMethod;

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Momentum-space trajectory simulations with de Broglie–Bohm comparison runs.
#[derive(Parser)]
#[command(name = "epstein", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a TOML configuration file.
    Run(Box<RunArgs>),
    /// Run every scenario briefly at reduced ensemble size and print the checks.
    Validate {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in scenarios, their parameters and checked relations.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario name (see `list`) or path to a TOML configuration.
    target: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Propagator steps per output frame.
    #[arg(long)]
    frames: Option<usize>,
    /// Points per axis.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Position extent per axis.
    #[arg(long)]
    grid_extent: Option<f64>,
    #[arg(long, value_parser = parse_current)]
    current: Option<CurrentMethod>,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    dpe: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    dp: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    slope: Option<f64>,
    /// Measurement control run: allows overlapping environment packets.
    #[arg(long)]
    control: bool,
}

fn parse_current(s: &str) -> Result<CurrentMethod, String> {
    s.parse().map_err(|e: epstein::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: epstein::Error| e.to_string())
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            seed: self.seed,
            dt: self.dt,
            frames: self.frames,
            grid_points: self.grid_points,
            grid_extent: self.grid_extent,
            current: self.current,
            model: self.model,
            threads: self.threads,
            t_end: self.t_end,
            a: self.a,
            dpe: self.dpe,
            c1: self.c1,
            c2: self.c2,
            sigma: self.sigma,
            x0: self.x0,
            dp: self.dp,
            slope: self.slope,
            control: self.control,
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, String> {
    match threads {
        None => Ok(job()),
        Some(0) => Err("--threads must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(job))
            .map_err(|e| e.to_string()),
    }
}

fn resolve(target: &str, overrides: &Overrides) -> epstein::Result<ScenarioConfig> {
    let path = Path::new(target);
    if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
        let mut config = ScenarioConfig::load(path)?;
        overrides.apply_to_file_config(&mut config)?;
        Ok(config)
    } else {
        scenarios::builtin(target, overrides)
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{v:.3e}")
    }
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        let mark = match (v.asserted, v.passed) {
            (false, _) => "info",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        println!(
            "  {mark:4}  {:28} {:>10} <= {:<10} {}",
            v.name,
            fmt_value(v.value),
            fmt_value(v.threshold),
            v.relation
        );
    }
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let config = match resolve(&args.target, &args.overrides()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let started = unix_now();
    let run: ScenarioRun =
        match with_threads(config.threads, || scenarios::run_scenario(&config).map_err(|e| e.to_string())).and_then(|r| r) {
            Ok(run) => run,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        };
    let finished = unix_now();
    let manifest = match output::write_run(&run, &args.out, started, finished) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: cannot write outputs: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    };
    println!(
        "{} (seed {}, N = {}, {} frames, model {})",
        run.config.scenario,
        run.config.seed,
        run.config.n,
        run.output.frames.len(),
        run.config.model.name()
    );
    print_verdicts(&run.verdicts);
    for (k, v) in &run.diagnostics {
        println!("  {k:32} {v}");
    }
    println!("outputs in {} ({} files)", args.out.display(), manifest.files.len() + 1);
    if run.passed() {
        println!("PASS");
        ExitCode::SUCCESS
    } else {
        println!("FAIL");
        ExitCode::from(EXIT_FAILED)
    }
}

fn cmd_validate(n: usize, seed: u64, threads: Option<usize>) -> ExitCode {
    let rows = match with_threads(threads, || scenarios::validation_suite(n, seed).map_err(|e| e.to_string())).and_then(|r| r) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut by_relation: Vec<&str> = rows.iter().map(|r| r.verdict.relation.as_str()).collect();
    by_relation.sort_unstable();
    by_relation.dedup();
    let mut ok = true;
    for relation in by_relation {
        println!("{relation}");
        for row in rows.iter().filter(|r| r.verdict.relation == relation) {
            let v = &row.verdict;
            let mark = match (v.asserted, v.passed) {
                (false, _) => "info",
                (true, true) => "pass",
                (true, false) => "FAIL",
            };
            ok &= !v.asserted || v.passed;
            println!(
                "  {mark:4}  {:18} {:28} {:>10} <= {}",
                row.scenario,
                v.name,
                fmt_value(v.value),
                fmt_value(v.threshold)
            );
        }
    }
    println!("{}", if ok { "PASS" } else { "FAIL" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn cmd_list() -> ExitCode {
    let mut text = String::from("checked in every scenario:\n");
    for r in scenarios::common_relations() {
        let _ = writeln!(text, "    {r}");
    }
    for s in scenarios::CATALOG {
        let _ = writeln!(text, "\n{}: {}", s.name, s.summary);
        for (flag, doc) in s.params {
            let _ = writeln!(text, "  --{flag:8} {doc}");
        }
        for r in s.relations {
            let _ = writeln!(text, "    {r}");
        }
    }
    // a closed pipe (`| head`) is not an error
    let _ = std::io::stdout().write_all(text.as_bytes());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { n, seed, threads } => cmd_validate(*n, *seed, *threads),
        Command::List => cmd_list(),
    }
}
