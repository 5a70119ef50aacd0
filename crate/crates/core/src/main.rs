use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use ssdn::cli::{self, OutputPaths, Scenario, EXIT_ERROR};
use ssdn::{Error, Result, Variant};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Smooth,
    Subgradient,
}

/// Run smooth double proximal primal-dual consensus dynamics.
///
/// Every flag can also be set through an environment variable named
/// `SSDN_<FLAG>` (for example `SSDN_T_END=50`). Flags win over the environment.
///
/// Exit codes: 0 converged, 1 error, 2 horizon reached without convergence,
/// 3 divergence.
#[derive(Debug, Parser)]
#[command(name = "ssdn", version, allow_negative_numbers = true)]
struct Args {
    /// Scenario file, or the name of a bundled scenario (paper_sec6, single_agent).
    #[arg(long, env = "SSDN_SCENARIO", required_unless_present = "sweep")]
    scenario: Option<String>,
    /// Run every `*.toml` scenario in a directory, in parallel.
    #[arg(long, env = "SSDN_SWEEP", conflicts_with = "scenario")]
    sweep: Option<PathBuf>,
    #[arg(long, env = "SSDN_VARIANT", value_enum)]
    variant: Option<VariantArg>,
    /// Integration step.
    #[arg(long, env = "SSDN_H")]
    h: Option<f64>,
    /// Integration horizon.
    #[arg(long = "t-end", env = "SSDN_T_END")]
    t_end: Option<f64>,
    /// Recording stride in steps.
    #[arg(long, env = "SSDN_STRIDE")]
    stride: Option<usize>,
    /// Trajectory CSV path; with --sweep, the output directory.
    #[arg(long, env = "SSDN_OUT")]
    out: Option<PathBuf>,
    /// Print residuals of the final state and check Lyapunov descent on a coarser step.
    #[arg(long, env = "SSDN_CERTIFY")]
    certify: bool,
    /// Print the resolved scenario as TOML and exit.
    #[arg(long)]
    print_scenario: bool,
}

fn load(spec: &str) -> Result<(Scenario, Option<PathBuf>)> {
    let path = Path::new(spec);
    if path.is_file() {
        let base = path.parent().map(Path::to_path_buf);
        return Ok((cli::load_scenario(path)?, base));
    }
    match Scenario::builtin(spec) {
        Some(s) => Ok((s, None)),
        None => Err(Error::Scenario {
            key: spec.to_string(),
            line: None,
            message: format!(
                "no such file and not a bundled scenario ({})",
                cli::BUILTIN_SCENARIOS.join(", ")
            ),
        }),
    }
}

fn apply_overrides(s: &mut Scenario, args: &Args) -> Result<()> {
    if let Some(v) = args.variant {
        s.variant = match v {
            VariantArg::Smooth => Variant::Smooth,
            VariantArg::Subgradient => Variant::Subgradient,
        };
    }
    if let Some(h) = args.h {
        s.integrator.h = h;
    }
    if let Some(t) = args.t_end {
        s.integrator.t_end = t;
    }
    if let Some(k) = args.stride {
        s.output.stride = k;
    }
    s.validate()
}

fn run_one(s: &Scenario, out: OutputPaths, certify: bool) -> Result<i32> {
    let (summary, traj) = cli::run(s, &out)?;
    print!("{summary}");
    if certify {
        print!("{}", cli::certify(s, &traj.records)?);
    }
    Ok(summary.exit_code())
}

fn single(args: &Args, spec: &str) -> Result<i32> {
    let (mut s, base) = load(spec)?;
    apply_overrides(&mut s, args)?;
    if args.print_scenario {
        print!("{}", s.to_toml_string());
        return Ok(0);
    }
    let mut out = OutputPaths::from_scenario(&s, base.as_deref());
    if let Some(p) = &args.out {
        out.trajectory = Some(p.clone());
    }
    if out.trajectory.is_none() {
        out.trajectory = Some(PathBuf::from(format!("{}.csv", s.name)));
    }
    run_one(&s, out, args.certify)
}

fn sweep(args: &Args, dir: &Path) -> Result<i32> {
    let entries = cli::sweep_entries(dir)?;
    if entries.is_empty() {
        return Err(Error::Io(format!("no *.toml scenarios in {}", dir.display())));
    }
    let out_dir = args.out.clone().unwrap_or_else(|| dir.to_path_buf());
    let results: Vec<(PathBuf, Result<(String, i32)>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .iter()
            .map(|path| {
                let out_dir = &out_dir;
                scope.spawn(move || {
                    let job = || -> Result<(String, i32)> {
                        let mut s = cli::load_scenario(path)?;
                        apply_overrides(&mut s, args)?;
                        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                        let out = OutputPaths {
                            trajectory: Some(out_dir.join(format!("{stem}.csv"))),
                            certificate: Some(out_dir.join(format!("{stem}.certificate.json"))),
                        };
                        let (summary, traj) = cli::run(&s, &out)?;
                        let mut text = summary.to_string();
                        if args.certify {
                            text.push_str(&cli::certify(&s, &traj.records)?.to_string());
                        }
                        Ok((text, summary.exit_code()))
                    };
                    (path.clone(), job())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut codes = Vec::with_capacity(results.len());
    for (path, r) in results {
        println!("== {}", path.display());
        match r {
            Ok((text, code)) => {
                print!("{text}");
                codes.push(code);
            }
            Err(e) => {
                eprintln!("error: {e}");
                codes.push(EXIT_ERROR);
            }
        }
    }
    Ok(cli::combine_exit_codes(codes))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // clap's own usage-error code would collide with the horizon verdict
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    let result = match (&args.sweep, &args.scenario) {
        (Some(dir), _) => sweep(&args, dir),
        (None, Some(spec)) => single(&args, spec),
        (None, None) => unreachable!("clap requires --scenario or --sweep"),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    });
    ExitCode::from(code as u8)
}
