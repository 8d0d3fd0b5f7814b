use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use einldg::experiments::{
    pme_defaults, run_convergence, run_highfield, run_pme, run_stability_scan, selftest,
    write_convergence, write_pme, write_stability, A0Mode, DtRule, RunConfig,
};
use einldg::imex::Order;
use einldg::Error;

#[derive(Parser)]
#[command(
    name = "einldg",
    version,
    about = "EIN-LDG experiments for nonlinear diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// L2 error table over a list of mesh sizes.
    Convergence(Common),
    /// Stable/unstable classification over a list of a0 values.
    Stability(Common),
    /// Porous-medium run with snapshots.
    Pme(Common),
    /// High-field model run to steady state.
    Highfield(Common),
    /// Internal consistency checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    /// Comma-separated mesh sizes.
    #[arg(long)]
    cells: Option<String>,
    /// Fixed time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Fixed a0 value, or "adaptive".
    #[arg(long)]
    a0: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra key=value settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(String),
    Blowup(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) | Error::NonPositiveTime(_) => {
                Failure::Config(e.to_string())
            }
            Error::Blowup { .. } | Error::NegativeAverage { .. } | Error::NoSteadyState(_) => {
                Failure::Blowup(e.to_string())
            }
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn defaults(cmd: &Command) -> RunConfig {
    match cmd {
        Command::Stability(_) => RunConfig {
            cells: vec![1280],
            a0_values: vec![0.20, 0.24, 0.25, 0.30],
            ..RunConfig::default()
        },
        Command::Pme(_) => pme_defaults("barenblatt2"),
        Command::Highfield(_) => RunConfig {
            experiment: "highfield".into(),
            cells: vec![200],
            degree: 2,
            order: Order::Third,
            a0: A0Mode::Adaptive { safety: 1.0 },
            dt: DtRule::Fixed(3.6e-4),
            ..RunConfig::default()
        },
        _ => RunConfig::default(),
    }
}

fn build(cmd: &Command, c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = defaults(cmd);
    if let Some(path) = &c.config {
        cfg.apply_file(path)?;
    }
    if let Some(e) = &c.experiment {
        cfg.set("experiment", e)?;
        if matches!(cmd, Command::Pme(_)) && c.config.is_none() {
            cfg = RunConfig {
                cells: cfg.cells.clone(),
                ..pme_defaults(e)
            };
        }
    }
    if let Some(v) = &c.cells {
        cfg.set("cells", v)?;
    }
    if let Some(dt) = c.dt {
        cfg.dt = DtRule::Fixed(dt);
    }
    if let Some(a0) = &c.a0 {
        cfg.set("a0", a0)?;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(&k.trim().to_ascii_lowercase(), v.trim())?;
    }
    if !matches!(cmd, Command::Pme(_)) || !cfg.cells.is_empty() {
        cfg.validate()?;
    }
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let report = match &cli.command {
        Command::Selftest => {
            let failed = selftest();
            if !failed.is_empty() {
                return Err(Failure::Internal(failed.join("; ")));
            }
            "selftest passed\n".to_string()
        }
        cmd @ Command::Convergence(c) => {
            let cfg = build(cmd, c)?;
            let rows = run_convergence(&cfg)?;
            write_convergence(&cfg, &rows)?
        }
        cmd @ Command::Stability(c) => {
            let cfg = build(cmd, c)?;
            let results = run_stability_scan(&cfg, &cfg.a0_values)?;
            write_stability(&cfg, &results)?
        }
        cmd @ Command::Pme(c) => {
            let cfg = build(cmd, c)?;
            let rep = run_pme(&cfg)?;
            write_pme(&cfg, &rep)?
        }
        cmd @ Command::Highfield(c) => {
            let cfg = build(cmd, c)?;
            run_highfield(&cfg)?
        }
    };
    print!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Blowup(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}
