use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reeb_core::fixtures;
use reeb_core::pipeline::{run_batch, run_pipeline_text, RunConfig, ScanConfig, EXIT_INVARIANT, EXIT_OK, EXIT_PARSE};
use reeb_core::report::{emit_batch, emit_structured, emit_text, emit_value, write_plots, ReportFormat};
use reeb_core::selftest::{run_selftest, DEFAULT_RANDOM_CASES, DEFAULT_SEED};
use reeb_core::specfile::{BackendKind, Overrides};

#[derive(Parser)]
#[command(name = "reeb", version, about = "Classify timelike conformal flows on closed Lorentzian 3-manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the classification pipeline on a spec file (or `fixture:NAME`).
    Classify(ClassifyArgs),
    /// Inspect or run the bundled fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixtureAction,
    },
    /// Run the full invariant suite.
    Selftest {
        /// Randomized exterior-calculus cases per backend.
        #[arg(long, default_value_t = DEFAULT_RANDOM_CASES)]
        cases: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "text")]
        report: ReportFormat,
    },
}

#[derive(Subcommand)]
enum FixtureAction {
    /// List fixture names and expected outcomes.
    List,
    /// Print a fixture's spec file.
    Show { name: String },
    /// Run every fixture in parallel and print a merged report.
    Run(RunOptions),
}

#[derive(Args, Clone)]
struct RunOptions {
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    grid_n: Option<usize>,
    /// Default tolerance (falls back to REEB_TOL, then the backend default).
    #[arg(long, env = "REEB_TOL")]
    tol: Option<f64>,
    #[arg(long, default_value = "text")]
    report: ReportFormat,
    /// Scan for closed orbits of R.
    #[arg(long)]
    orbit_scan: bool,
    #[arg(long, default_value_t = reeb_core::dynamics::DEFAULT_HORIZON)]
    horizon: f64,
    #[arg(long, default_value_t = reeb_core::dynamics::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = reeb_core::dynamics::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Skip the Betti-parity gate.
    #[arg(long)]
    skip_betti: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    spec: String,
    #[command(flatten)]
    run: RunOptions,
    /// Write CSV plot data into this directory.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Write the report to a file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn config(source: &str, o: &RunOptions) -> Result<RunConfig, String> {
    let backend = o.backend.as_deref().map(BackendKind::parse).transpose().map_err(|e| e.to_string())?;
    Ok(RunConfig {
        source: source.to_string(),
        overrides: Overrides { backend, grid_n: o.grid_n, tol: o.tol },
        orbit_scan: o.orbit_scan.then_some(ScanConfig {
            horizon: o.horizon,
            step: o.step,
            threshold: o.threshold,
            samples: None,
        }),
        skip_betti: o.skip_betti,
    })
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn load(spec: &str) -> Result<String, String> {
    if let Some(name) = spec.strip_prefix("fixture:") {
        return fixtures::find(name).map(|f| f.toml).ok_or_else(|| format!("unknown fixture `{name}`"));
    }
    std::fs::read_to_string(spec).map_err(|e| format!("{spec}: {e}"))
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), String> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn classify(args: &ClassifyArgs) -> i32 {
    let cfg = match config(&args.spec, &args.run) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let text = match load(&args.spec) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let outcome = run_pipeline_text(&text, &cfg);
    let doc = match args.run.report {
        ReportFormat::Text => emit_text(&outcome.report),
        ReportFormat::Structured => emit_structured(&outcome.report),
    };
    if let Err(e) = emit(&doc, args.output.as_ref()) {
        eprintln!("error: {e}");
        return EXIT_INVARIANT;
    }
    if let Some(f) = &outcome.report.failure {
        eprintln!("{}: {}", f.stage.name(), f.message);
    }
    if let Some(dir) = &args.plots {
        match write_plots(dir, &outcome) {
            Ok(files) => files.iter().for_each(|p| eprintln!("wrote {}", p.display())),
            Err(e) => {
                eprintln!("error: plots: {e}");
                return EXIT_INVARIANT;
            }
        }
    }
    outcome.exit_code()
}

fn fixtures_cmd(action: &FixtureAction) -> i32 {
    match action {
        FixtureAction::List => {
            for f in fixtures::all() {
                let expect = match (f.expected.case, f.expected.stage) {
                    (Some(c), _) => c.as_str().to_string(),
                    (None, Some(s)) => format!("fails at {}", s.name()),
                    (None, None) => "-".into(),
                };
                println!("{:<20} exit {}  {}", f.name, f.expected.exit_code, expect);
            }
            EXIT_OK
        }
        FixtureAction::Show { name } => match fixtures::find(name) {
            Some(f) => {
                print!("{}", f.toml);
                EXIT_OK
            }
            None => {
                eprintln!("error: unknown fixture `{name}`");
                EXIT_PARSE
            }
        },
        FixtureAction::Run(o) => {
            let cfg = match config("fixtures", o) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_PARSE;
                }
            };
            let items: Vec<(String, String)> = fixtures::all().into_iter().map(|f| (f.name, f.toml)).collect();
            let results = run_batch(&items, &cfg);
            let mut status = EXIT_OK;
            for (name, out) in &results {
                let expected = fixtures::find(name).map(|f| f.expected.exit_code).unwrap_or(EXIT_OK);
                if out.exit_code() != expected {
                    status = EXIT_INVARIANT;
                }
            }
            match o.report {
                ReportFormat::Structured => {
                    print!("{}", emit_batch(results.iter().map(|(n, o)| (n.as_str(), &o.report))));
                }
                ReportFormat::Text => {
                    for (name, out) in &results {
                        let r = &out.report;
                        let what = match (&r.case, &r.failure) {
                            (Some(c), _) => format!("{} k = {:.6e}", c.as_str(), r.k.unwrap_or(f64::NAN)),
                            (None, Some(f)) => format!("failed at {}", f.stage.name()),
                            _ => "-".into(),
                        };
                        println!("{name:<20} exit {}  {what}", out.exit_code());
                    }
                }
            }
            status
        }
    }
}

fn selftest(cases: usize, seed: u64, format: ReportFormat) -> i32 {
    let rep = run_selftest(cases, seed);
    match format {
        ReportFormat::Structured => {
            print!("{}", emit_value(&rep));
        }
        ReportFormat::Text => {
            for e in &rep.entries {
                println!(
                    "[{}] {:<20} {:<64} {:.3e} <= {:.1e}",
                    if e.passed { "ok" } else { "FAIL" },
                    e.subject,
                    e.name,
                    e.residual,
                    e.tol
                );
            }
            for r in &rep.random {
                println!(
                    "[{}] random {:<6} {} cases, {} failures, worst residual/tol {:.3e}",
                    if r.failures == 0 { "ok" } else { "FAIL" },
                    r.backend,
                    r.cases,
                    r.failures,
                    r.worst_ratio
                );
            }
            println!("selftest {}", if rep.passed() { "passed" } else { "FAILED" });
        }
    }
    if rep.passed() {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = e.print();
            return exit(code);
        }
    };
    let code = match &cli.command {
        Command::Classify(a) => classify(a),
        Command::Fixtures { action } => fixtures_cmd(action),
        Command::Selftest { cases, seed, report } => selftest(*cases, *seed, *report),
    };
    exit(code)
}
