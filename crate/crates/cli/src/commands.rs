//! Command-line interface.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use otlimit_core::applications::{
    gof_statistic, procrustes_ot, sketched_wasserstein, sliced_ot, GroupFamily, MixtureSpec, Refine, RotationGrid,
    SlicedMode, SlicedOutput, SphereGrid,
};
use otlimit_core::bootstrap::default_k;
use otlimit_core::ctransform::double_c_transform;
use otlimit_core::transport::{is_plan_unique, potentials_unique};
use otlimit_core::measure::read_points_csv_path;
use otlimit_core::{
    bootstrap_ot_wcc, c_transform, read_matrix_csv, sample_limit_wcc, solve_ot, BootstrapConfig, CostMatrix,
    DiscreteMeasure, EmpiricalSample, LimitOptions, MeanShiftCost,
    SampleRatio, Scaling,
};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{Population, PopulationCostKind};

#[derive(Debug, Parser)]
#[command(name = "otlimit", version, about = "Optimal transport with estimated costs: solvers, limit laws and bootstrap")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; JSON goes to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CostArg {
    /// `|x - y|^p`.
    Power,
    /// `|x - y - (mean(x) - mean(y))|^2`, re-estimated from the data.
    MeanShift,
}

#[derive(Debug, clap::Args)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value = "power")]
    pub cost: CostArg,
    /// Exponent of the power cost.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Headerless CSV cost matrix on the two supports; overrides `--cost`.
    #[arg(long)]
    pub cost_matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SlicedArg {
    Average,
    Max,
    Process,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Location,
    LocationScale,
    Affine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a discrete OT problem between two point CSVs.
    Solve {
        /// CSV of points, with an optional trailing `weight` column.
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[command(flatten)]
        cost: CostArgs,
        /// Also report uniqueness of the optimal plan and potentials.
        #[arg(long)]
        faces: bool,
    },
    /// c-transform of a potential given as comma-separated values.
    Ctransform {
        #[arg(long)]
        cost_matrix: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        potential: Vec<f64>,
        /// Return the double transform on the row support instead.
        #[arg(long)]
        double: bool,
    },
    /// Draws from the limit law of the rescaled OT value.
    LimitSample {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[command(flatten)]
        cost: CostArgs,
        /// Sample sizes fixing the two-sample scaling.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 10000)]
        draws: usize,
    },
    /// k-out-of-n bootstrap of the OT value from two samples.
    Bootstrap {
        /// CSV sample from the first population, one point per row.
        #[arg(long)]
        x: PathBuf,
        /// CSV sample from the second population.
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        cost: CostArgs,
        /// Resample size for `x`; defaults to `floor(n^(2/3))`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
    },
    /// Sliced OT between two samples.
    Sliced {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 64)]
        directions: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_enum, default_value = "average")]
        mode: SlicedArg,
    },
    /// OT up to rotations.
    Procrustes {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, default_value_t = 360)]
        resolution: usize,
        /// Skip the alternating refinement.
        #[arg(long)]
        grid_only: bool,
    },
    /// Sketched Wasserstein distance from a JSON mixture specification.
    Sketched {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Goodness-of-fit statistic of a sample against a parametric family.
    Gof {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        nu0: PathBuf,
        #[arg(long, value_enum, default_value = "location")]
        family: FamilyArg,
    },
    /// Run a Monte Carlo experiment from `--config`.
    Experiment,
}

fn points(path: &Path) -> CliResult<DiscreteMeasure> {
    Ok(read_points_csv_path(path)?.into_measure()?)
}

fn sample(path: &Path) -> CliResult<EmpiricalSample> {
    Ok(read_points_csv_path(path)?.into_sample()?)
}

fn matrix_file(path: &Path) -> CliResult<CostMatrix> {
    Ok(read_matrix_csv(File::open(path)?)?)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn population(mu: DiscreteMeasure, nu: DiscreteMeasure, args: &CostArgs) -> CliResult<Population> {
    let kind = match (&args.cost_matrix, args.cost) {
        (Some(path), _) => PopulationCostKind::Fixed(matrix_file(path)?),
        (None, CostArg::Power) => PopulationCostKind::Fixed(CostMatrix::power(&mu, &nu, args.p)?),
        (None, CostArg::MeanShift) => PopulationCostKind::MeanShift,
    };
    Population::with_kind(mu, nu, kind)
}

/// Executes a parsed command line and returns its JSON result.
pub fn execute(cli: &Cli) -> CliResult<Value> {
    match &cli.command {
        Command::Solve { mu, nu, cost, faces } => {
            let pop = population(points(mu)?, points(nu)?, cost)?;
            let sol = solve_ot(&pop.mu, &pop.nu, pop.cost_matrix())?;
            let mut out = json!({
                "value": sol.value,
                "status": sol.status,
                "plan": rows(sol.plan.entries()),
                "phi": sol.dual.phi,
                "psi": sol.dual.psi,
            });
            if *faces {
                let c = pop.cost_matrix();
                out["plan_unique"] = json!(is_plan_unique(&pop.mu, &pop.nu, c, 16, 1e-6)?.unique);
                out["potentials_unique"] = json!(potentials_unique(&pop.mu, &pop.nu, c)?);
            }
            Ok(out)
        }
        Command::Ctransform { cost_matrix, potential, double } => {
            let c = matrix_file(cost_matrix)?;
            let v = if *double {
                double_c_transform(potential, &c)?
            } else {
                c_transform(potential, &c)?
            };
            Ok(json!({ "transform": v }))
        }
        Command::LimitSample { mu, nu, cost, n, m, draws } => {
            let pop = population(points(mu)?, points(nu)?, cost)?;
            let lambda = SampleRatio::new(*n, *m)?.lambda;
            let set = sample_limit_wcc(
                &pop.mu,
                &pop.nu,
                pop.cost_matrix(),
                &pop.limit_model(lambda)?,
                Scaling::TwoSample { lambda },
                *draws,
                &LimitOptions::default(),
                cli.seed,
            )?;
            Ok(json!({ "summary": set.summary, "draws": set.draws }))
        }
        Command::Bootstrap { x, y, cost, k, replicates } => {
            let (x, y) = (sample(x)?, sample(y)?);
            let mut cfg = BootstrapConfig::new(*replicates, cli.seed);
            cfg = cfg.with_k(k.unwrap_or_else(|| default_k(x.len())));
            let out = match (&cost.cost_matrix, cost.cost) {
                (Some(_), _) => {
                    return Err(CliError::Config(
                        "bootstrap needs a cost defined on points; use --cost".into(),
                    ))
                }
                (None, CostArg::MeanShift) => bootstrap_ot_wcc(&x, &y, &MeanShiftCost, &cfg)?,
                (None, CostArg::Power) => {
                    let p = cost.p;
                    let est = otlimit_core::FixedCost(move |a: &otlimit_core::Point, b: &otlimit_core::Point| {
                        a.dist(b).powf(p)
                    });
                    bootstrap_ot_wcc(&x, &y, &est, &cfg)?
                }
            };
            let (mu_n, nu_n) = (x.to_measure()?, y.to_measure()?);
            let point = match cost.cost {
                CostArg::MeanShift => {
                    use otlimit_core::CostEstimator;
                    otlimit_core::ot_value(&mu_n, &nu_n, &MeanShiftCost.estimate(&x, &y, &mu_n, &nu_n)?)?
                }
                CostArg::Power => otlimit_core::ot_value(&mu_n, &nu_n, &CostMatrix::power(&mu_n, &nu_n, cost.p)?)?,
            };
            Ok(json!({
                "estimate": point,
                "k": out.k,
                "l": out.l,
                "failures": out.failures,
                "warnings": out.warnings,
                "summary": otlimit_core::Summary::of(out.law.values()),
                "law": out.law.values(),
            }))
        }
        Command::Sliced { x, y, directions, p, mode } => {
            let (x, y) = (sample(x)?, sample(y)?);
            let grid = SphereGrid::uniform(x.dim(), *directions, cli.seed)?;
            let mode = match mode {
                SlicedArg::Average => SlicedMode::Average,
                SlicedArg::Max => SlicedMode::Max,
                SlicedArg::Process => SlicedMode::Process,
            };
            Ok(match sliced_ot(&x, &y, &grid, *p, mode)? {
                SlicedOutput::Scalar(v) => json!({ "value": v, "mesh": grid.mesh() }),
                SlicedOutput::Process(v) => json!({
                    "values": v,
                    "directions": grid.directions().iter().map(|d| d.coords().to_vec()).collect::<Vec<_>>(),
                }),
            })
        }
        Command::Procrustes { mu, nu, resolution, grid_only } => {
            let (mu, nu) = (points(mu)?, points(nu)?);
            let grid = RotationGrid::new(mu.dim(), *resolution)?;
            let refine = if *grid_only { Refine::GridOnly } else { Refine::Alternating };
            let res = procrustes_ot(&mu, &nu, &grid, refine)?;
            Ok(json!({
                "value": res.value,
                "rotation": rows(&res.rotation),
                "alignment": rows(&res.alignment()),
                "grid_value": res.grid_values[res.grid_index],
                "iterations": res.iterations,
                "mesh": grid.mesh(),
            }))
        }
        Command::Sketched { spec } => {
            let spec: MixtureSpec = serde_json::from_reader(File::open(spec)?)?;
            Ok(serde_json::to_value(sketched_wasserstein(&spec)?)?)
        }
        Command::Gof { sample: s, nu0, family } => {
            let x = sample(s)?;
            let nu0 = points(nu0)?;
            let dim = x.dim();
            let family = match family {
                FamilyArg::Location => GroupFamily::Location { dim },
                FamilyArg::LocationScale => GroupFamily::LocationScale { dim },
                FamilyArg::Affine => GroupFamily::Affine { dim },
            };
            let theta = family.moment_estimate(&x, &nu0)?;
            let stat = gof_statistic(&x, &nu0, &family, &theta)?;
            Ok(json!({
                "statistic": stat,
                "scaled": (x.len() as f64).sqrt() * stat,
                "theta_hat": theta,
            }))
        }
        Command::Experiment => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::Config("experiment requires --config".into()))?;
            let cfg = ExperimentConfig::load(path)?;
            let report = crate::experiment::run(&cfg)?;
            if let Some(out) = &cli.out {
                report.write(out)?;
                return Ok(json!({ "written": out, "rows": report.rows.len() }));
            }
            Ok(serde_json::to_value(&report)?)
        }
    }
}

/// Parses, runs and prints; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return 2;
        }
    }
    let result = execute(&cli).and_then(|v| {
        let text = serde_json::to_string_pretty(&v)?;
        match (&cli.out, &cli.command) {
            (Some(_), Command::Experiment) => println!("{text}"),
            (Some(path), _) => std::fs::write(path, text + "\n")?,
            (None, _) => writeln!(std::io::stdout(), "{text}")?,
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
