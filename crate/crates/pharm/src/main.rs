use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pharm::cli::{run, RunConfig};
use pharm::geometry::CircularDomain;
use pharm::{Error, Result};

#[derive(Parser)]
#[command(name = "pharm", version, about = "Injective p-harmonic approximation of monotone maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Triangulate a circular domain.
    Mesh(Common),
    /// Solve the radial p-harmonic problem on the annulus 1 < |z| < 2.
    Solve(Common),
    /// Replace a map on the central cell.
    Replace(Common),
    /// Triple sweeps at each rho.
    Sweep(Common),
    /// Boundary chain over an eps schedule.
    Approximate(Common),
    /// Repeated sweeps until the energy stalls.
    Descent(Common),
    /// Demonstration scenarios.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
    /// Run any scenario by name.
    Run {
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Energies of a collapsing Möbius sequence.
    Mobius(Common),
    /// Fitted constant of the distance-to-boundary estimate.
    Puncture(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source domain JSON.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Target domain JSON.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Chain configuration JSON.
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mesh_edge: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Möbius maps.
    #[arg(long, alias = "K")]
    k: Option<usize>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    svg: bool,
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn build(scenario: &str, c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig { scenario: scenario.to_string(), ..Default::default() };
    if let Some(p) = &c.domain {
        cfg.domain = Some(CircularDomain::from_json(&read(p)?)?);
    }
    if let Some(p) = &c.target {
        cfg.target = Some(CircularDomain::from_json(&read(p)?)?);
    }
    if let Some(p) = &c.chain {
        cfg.chain = Some(serde_json::from_str(&read(p)?)?);
    }
    cfg.mesh_file = c.mesh.clone();
    cfg.map_file = c.map.clone();
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(x) = c.mesh_edge {
        cfg.mesh_edge = x;
    }
    if let Some(x) = c.p {
        cfg.p = x;
    }
    if let Some(x) = &c.rho {
        cfg.rho = x.clone();
    }
    if let Some(x) = &c.eps {
        cfg.eps = x.clone();
    }
    if let Some(x) = c.seed {
        cfg.seed = x;
    }
    if let Some(x) = c.k {
        cfg.k = x;
    }
    if let Some(x) = c.stop_tol {
        cfg.stop_tol = x;
    }
    if let Some(x) = c.max_rounds {
        cfg.max_rounds = x;
    }
    cfg.svg |= c.svg;
    if let Some(p) = &c.config {
        cfg = cfg.merge_json(&read(p)?)?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, common) = match &cli.cmd {
        Cmd::Mesh(c) => ("mesh", c),
        Cmd::Solve(c) => ("solve", c),
        Cmd::Replace(c) => ("replace", c),
        Cmd::Sweep(c) => ("sweep", c),
        Cmd::Approximate(c) => ("approximate", c),
        Cmd::Descent(c) => ("descent", c),
        Cmd::Demo { which: Demo::Mobius(c) } => ("mobius", c),
        Cmd::Demo { which: Demo::Puncture(c) } => ("puncture", c),
        Cmd::Run { scenario, common } => (scenario.as_str(), common),
    };
    match build(scenario, common).and_then(|cfg| run(&cfg)) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary.metrics).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
