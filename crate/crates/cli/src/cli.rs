//! Command-line surface. Exit codes: 0 success, 2 schema or argument error,
//! 3 numerical abort, 1 anything else.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stirlab_core::flow::{FlowFamily, FlowSpec};
use stirlab_core::profile::InitialProfile;
use stirlab_core::SolverConfig;

use crate::config::{ExperimentConfig, ExperimentKind, GridConfig, Model, SchemaError};
use crate::experiments::{
    diffusivity_record, dissipation_record, run_experiment, thresholds_record, DiffusivityArgs, DissipationArgs,
    ThresholdArgs, ThresholdModel,
};
use crate::record::ExperimentRecord;
use crate::sweep::sweep;

#[derive(Debug, Parser)]
#[command(name = "stirlab", version, about = "Stirring experiments on the periodic torus")]
pub struct Cli {
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config value.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear advection-diffusion of a random band-limited datum.
    SimulateAd(SimulateAd),
    /// Keller-Segel runs.
    Ks {
        #[command(subcommand)]
        action: KsAction,
    },
    /// Ignition reaction-diffusion runs.
    Rd {
        #[command(subcommand)]
        action: RdAction,
    },
    /// Dissipation time of one flow.
    DissipationTime(DissipationTime),
    /// Monte Carlo effective diffusivity along the coordinate axes.
    Diffusivity(Diffusivity),
    /// Cell-occupancy histograms.
    Occupancy(Occupancy),
    /// Blow-up thresholds, the Psi envelope and the quench schedule.
    Thresholds(Thresholds),
    /// Run the Cartesian product of a config's sweep ranges.
    Sweep { config: PathBuf },
    /// Run one experiment config.
    Run { config: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum KsAction {
    /// Paired still and stirred runs from one bump.
    Run(KsRun),
}

#[derive(Debug, Subcommand)]
pub enum RdAction {
    /// Paired still and stirred runs from one hot spot.
    Run(RdRun),
}

/// Flow spec `family[:amplitude[:cells[:sign]]]`.
pub fn parse_flow(s: &str) -> Result<FlowSpec, SchemaError> {
    let parts: Vec<&str> = s.split(':').collect();
    let family = match parts[0] {
        "none" | "still" => FlowFamily::None,
        "cellular2d" => FlowFamily::Cellular2d,
        "cellular3d" => FlowFamily::Cellular3d,
        "shear2d" => FlowFamily::Shear2d,
        other => return Err(SchemaError(format!("unknown flow family {other:?}"))),
    };
    if parts.len() > 4 {
        return Err(SchemaError(format!("flow spec {s:?} has more than four fields")));
    }
    let num = |i: usize, default: &'static str| parts.get(i).copied().unwrap_or(default);
    let amplitude: f64 = num(1, "1").parse().map_err(|_| SchemaError(format!("bad amplitude in {s:?}")))?;
    let cells: u32 = num(2, "1").parse().map_err(|_| SchemaError(format!("bad cell count in {s:?}")))?;
    let sign: i8 = num(3, "1").trim_start_matches('+').parse().map_err(|_| SchemaError(format!("bad sign in {s:?}")))?;
    let mut spec = FlowSpec::new(family, amplitude, cells);
    spec.sign = sign;
    Ok(spec)
}

fn parse_list(s: &str) -> Result<Vec<f64>, SchemaError> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| SchemaError(format!("bad number {x:?} in {s:?}"))))
        .collect()
}

#[derive(Debug, Args)]
pub struct SimulateAd {
    #[arg(long, default_value = "cellular2d:1:2")]
    pub flow: String,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub every: f64,
    /// Largest wavenumber of the initial datum.
    #[arg(long, default_value_t = 6)]
    pub kmax: u32,
    #[arg(long, default_value_t = 1.0)]
    pub l2: f64,
}

#[derive(Debug, Args)]
pub struct KsRun {
    #[arg(long, default_value = "cellular2d:1:8")]
    pub flow: String,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub chi: f64,
    #[arg(long, default_value_t = 30.0)]
    pub mass: f64,
    #[arg(long, default_value_t = 0.06)]
    pub width: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 5e-3)]
    pub every: f64,
    /// Skip the refinement rerun of the still case.
    #[arg(long)]
    pub no_confirm: bool,
}

#[derive(Debug, Args)]
pub struct RdRun {
    #[arg(long, default_value = "cellular2d:1:8")]
    pub flow: String,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 380.0)]
    pub rate: f64,
    /// Initial mean temperature.
    #[arg(long, default_value_t = 0.25)]
    pub mean: f64,
    #[arg(long, default_value_t = 0.3)]
    pub horizon: f64,
    #[arg(long, default_value_t = 7.5e-4)]
    pub every: f64,
}

#[derive(Debug, Args)]
pub struct DissipationTime {
    #[arg(long, default_value = "cellular2d:1:1")]
    pub flow: String,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Relative bisection tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct Diffusivity {
    #[arg(long, default_value = "cellular2d:4:1")]
    pub flow: String,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Number of paths.
    #[arg(long = "paths", visible_alias = "M", default_value_t = 10_000)]
    pub paths: usize,
    /// Horizon.
    #[arg(long = "horizon", visible_alias = "T", default_value_t = 10.0)]
    pub horizon: f64,
    /// Euler-Maruyama step (default: the recommended step of the flow).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Also solve the corrector equation on this grid.
    #[arg(long)]
    pub cell_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Occupancy {
    #[arg(long, default_value = "cellular2d:1:4")]
    pub flow: String,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub mu: u32,
    /// Comma-separated waiting times.
    #[arg(long, default_value = "0.005,0.01,0.02")]
    pub tau: String,
    #[arg(long, default_value_t = 40_000)]
    pub paths: usize,
    /// Comma-separated start point.
    #[arg(long, default_value = "0.1,0.1")]
    pub start: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ThresholdKind {
    Quadratic,
    KellerSegel,
}

#[derive(Debug, Args)]
pub struct Thresholds {
    #[arg(long, value_enum, default_value = "quadratic")]
    pub model: ThresholdKind,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub chi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho_bar: f64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Iterations of the Psi envelope.
    #[arg(long, default_value_t = 20)]
    pub iterations: u32,
    /// Ignition temperature; with `--mean` adds the quench schedule.
    #[arg(long, requires = "mean")]
    pub alpha0: Option<f64>,
    #[arg(long, requires = "alpha0")]
    pub mean: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_d: f64,
}

fn grid(dim: usize, n: usize) -> GridConfig {
    GridConfig { dim, n }
}

/// Applies the global overrides, validates and runs a config.
fn run_config(mut cfg: ExperimentConfig, cli: &Cli, default_out: &str) -> Result<ExperimentRecord> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.out = cli.out.clone().unwrap_or_else(|| PathBuf::from(default_out));
    cfg.validate()?;
    let rec = run_experiment(&cfg)?;
    report(&rec, &cfg.out);
    Ok(rec)
}

fn persist_adhoc(rec: ExperimentRecord, cli: &Cli, default_out: &str) -> Result<ExperimentRecord> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(default_out));
    rec.persist(&out)?;
    report(&rec, &out);
    Ok(rec)
}

fn report(rec: &ExperimentRecord, out: &Path) {
    println!("{} (config {})", rec.experiment, &rec.config_hash[..12]);
    for (k, v) in &rec.verdicts {
        println!("  verdict {k}: {v}");
    }
    for (k, v) in &rec.summary {
        println!("  {k} = {v}");
    }
    for t in &rec.tables {
        println!("  table {} ({} rows)", t.name, t.rows.len());
    }
    println!("  written to {}", out.display());
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_toml_str(&text)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SimulateAd(a) => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::Custom);
            cfg.grid = grid(a.dim, a.n);
            let c = cfg.custom.as_mut().expect("filled");
            c.model = Model::Linear;
            c.flow = parse_flow(&a.flow)?;
            c.horizon = a.horizon;
            c.sample_every = a.every;
            c.profile = InitialProfile::RandomBandlimited { seed: cli.seed.unwrap_or(0), kmax: a.kmax, l2: a.l2, mean: 0.0 };
            run_config(cfg, cli, "out/simulate-ad").map(drop)
        }
        Command::Ks { action: KsAction::Run(a) } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::KsSuppression);
            cfg.grid = grid(2, a.n);
            let k = cfg.ks.as_mut().expect("filled");
            k.flow = parse_flow(&a.flow)?;
            k.chi = a.chi;
            k.profile = InitialProfile::GaussianBump { center: vec![0.5, 0.5], width: a.width, mass: a.mass, background: 0.0 };
            k.horizon = a.horizon;
            k.sample_every = a.every;
            k.confirm = !a.no_confirm;
            run_config(cfg, cli, "out/ks").map(drop)
        }
        Command::Rd { action: RdAction::Run(a) } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::RdQuench);
            cfg.grid = grid(2, a.n);
            let r = cfg.rd.as_mut().expect("filled");
            r.flow = parse_flow(&a.flow)?;
            r.alpha0 = a.alpha0;
            r.rate = a.rate;
            r.mean = Some(a.mean);
            r.horizon = a.horizon;
            r.sample_every = a.every;
            run_config(cfg, cli, "out/rd").map(drop)
        }
        Command::DissipationTime(a) => {
            let args = DissipationArgs { flow: parse_flow(&a.flow)?, grid: grid(a.dim, a.n), tol: a.tol, solver: SolverConfig::default() };
            persist_adhoc(dissipation_record(&args)?, cli, "out/dissipation-time").map(drop)
        }
        Command::Diffusivity(a) => {
            let args = DiffusivityArgs {
                flow: parse_flow(&a.flow)?,
                dim: a.dim,
                paths: a.paths,
                horizon: a.horizon,
                dt: a.dt,
                seed: cli.seed.unwrap_or(0),
                cell_n: a.cell_n,
            };
            persist_adhoc(diffusivity_record(&args)?, cli, "out/diffusivity").map(drop)
        }
        Command::Occupancy(a) => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::Occupancy);
            cfg.grid.dim = a.dim;
            let o = cfg.occupancy.as_mut().expect("filled");
            o.flow = parse_flow(&a.flow)?;
            o.mu = a.mu;
            o.taus = parse_list(&a.tau)?;
            o.paths = a.paths;
            o.start = parse_list(&a.start)?;
            run_config(cfg, cli, "out/occupancy").map(drop)
        }
        Command::Thresholds(a) => {
            let args = ThresholdArgs {
                model: match a.model {
                    ThresholdKind::Quadratic => ThresholdModel::Quadratic,
                    ThresholdKind::KellerSegel => ThresholdModel::KellerSegel,
                },
                b: a.b,
                eps0: a.eps0,
                c0: a.c0,
                chi: a.chi,
                rho_bar: a.rho_bar,
                dim: a.dim,
                iterations: a.iterations,
                ignition: a.alpha0.zip(a.mean).map(|(alpha0, mean)| (alpha0, mean, a.rate)),
                c_d: a.c_d,
            };
            persist_adhoc(thresholds_record(&args)?, cli, "out/thresholds").map(drop)
        }
        Command::Run { config } => {
            let cfg = load_config(config)?;
            let default_out = cfg.out.to_string_lossy().into_owned();
            run_config(cfg, cli, &default_out).map(drop)
        }
        Command::Sweep { config } => {
            let mut cfg = load_config(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = &cli.out {
                cfg.out = o.clone();
            }
            let outcome = sweep(&cfg, cli.threads, true)?;
            println!(
                "sweep of {} jobs ({} failed), summary in {}",
                outcome.jobs.len(),
                outcome.failures(),
                cfg.out.join("sweep_summary.csv").display()
            );
            Ok(())
        }
    }
}

/// Exit status for an error chain.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use stirlab_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<SchemaError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            match e {
                E::NumericalAbort { .. } | E::NotConverged { .. } | E::InvariantViolation { .. } | E::Cfl { .. } | E::BracketNotFound { .. } => {
                    return 3
                }
                E::InvalidArgument(_) | E::GridMismatch { .. } | E::UnderResolved { .. } | E::NoQuenchSchedule { .. } => return 2,
                E::Format(_) | E::Io(_) => return 1,
            }
        }
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_specs_parse() {
        let f = parse_flow("cellular2d:4:8").unwrap();
        assert_eq!((f.family, f.amplitude, f.cells_per_side, f.sign), (FlowFamily::Cellular2d, 4.0, 8, 1));
        assert_eq!(parse_flow("shear2d:2:1:-1").unwrap().sign, -1);
        assert_eq!(parse_flow("none").unwrap().family, FlowFamily::None);
        assert!(parse_flow("vortex:1").is_err());
        assert!(parse_flow("cellular2d:x").is_err());
    }

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let schema = anyhow::Error::new(SchemaError("x".into())).context("loading");
        assert_eq!(exit_code(&schema), 2);
        let abort = anyhow::Error::new(stirlab_core::Error::NotConverged { method: "m", iterations: 1, last: 0.0 });
        assert_eq!(exit_code(&abort.context("running")), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }
}
