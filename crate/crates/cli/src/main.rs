use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hopflab::barriers::{Barrier, BarrierReport, BarrierSamples};
use hopflab::calibration::Calibration;
use hopflab::config::{CalibrateConfig, ExperimentConfig};
use hopflab::geometry::BoundaryGraph;
use hopflab::harness::{measure_boundary_modulus, measure_growth, GrowthReport};
use hopflab::modulus::{CompositeModulus, Modulus};
use hopflab::regdist::{RegularizedDistanceField, SandwichSample};
use hopflab::solver::GridProblem;

#[derive(Parser)]
#[command(name = "hopflab", version, about = "Boundary growth experiments for nondivergence elliptic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output`, then `.`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Calibration file to read, or to write for `calibrate`.
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of randomized sweeps, overriding the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Tabulate ω, its Dini integrals and ω̃.
    ModulusTable,
    /// Sandwich and derivative bounds of the regularized distance.
    RegdistCheck,
    /// Sign of the barriers d^{1±ε}.
    BarrierCheck,
    /// Solve one grid problem.
    Solve,
    /// Lower growth cascade.
    Growth,
    /// Upper growth cascade and boundary modulus.
    BoundaryModulus,
    /// Recompute the calibrated constants.
    Calibrate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ModulusTable => "modulus-table",
            Command::RegdistCheck => "regdist-check",
            Command::BarrierCheck => "barrier-check",
            Command::Solve => "solve",
            Command::Growth => "growth",
            Command::BoundaryModulus => "boundary-modulus",
            Command::Calibrate => "calibrate",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("hopflab {}: check failed", cli.command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("hopflab {}: {e:#}", cli.command.name());
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    config: Option<ExperimentConfig>,
    out: PathBuf,
    seed: u64,
    calibration: Option<PathBuf>,
}

impl Ctx {
    fn section<'a, T>(&'a self, pick: impl Fn(&'a ExperimentConfig) -> Option<&'a T>, name: &'static str) -> Result<&'a T> {
        let cfg = self.config.as_ref().context("this subcommand needs --config")?;
        pick(cfg).with_context(|| format!("config has no `{name}` section"))
    }

    fn calibration(&self) -> Result<Calibration> {
        let path = self.calibration.as_ref().context("this subcommand needs --calibration")?;
        Ok(Calibration::load(path)?)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads")?;
    }
    let config = c.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let out = c
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|cfg| cfg.output.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = c.seed.or(config.as_ref().and_then(|cfg| cfg.seed)).unwrap_or(0);
    let ctx = Ctx { config, out, seed, calibration: c.calibration.clone() };
    match cli.command {
        Command::ModulusTable => modulus_table(&ctx),
        Command::RegdistCheck => regdist_check(&ctx),
        Command::BarrierCheck => barrier_check(&ctx),
        Command::Solve => solve(&ctx),
        Command::Growth => growth(&ctx, false),
        Command::BoundaryModulus => growth(&ctx, true),
        Command::Calibrate => calibrate(&ctx),
    }
}

fn csv(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct ModulusTableReport {
    pass: bool,
    t_tilde0: Option<f64>,
    /// Smallest `t ω̃'(t)/ω̃(t)` between consecutive points below `t̃₀`.
    min_log_slope: Option<f64>,
    strictly_increasing: bool,
}

fn modulus_table(ctx: &Ctx) -> Result<bool> {
    let cfg = ctx.section(|c| c.modulus_table.as_ref(), "modulus_table")?;
    let omega = Modulus::from_spec(&cfg.omega)?;
    let composite = match &cfg.composite {
        Some(p) => {
            let w1 = match &p.omega1 {
                Some(s) => Modulus::from_spec(s)?,
                None => Modulus::constant(0.0, omega.t0())?,
            };
            Some(CompositeModulus::new(p.a, cfg.b, p.c, w1, omega.clone())?)
        }
        None => None,
    };
    let mut points = cfg.points.clone();
    points.sort_by(f64::total_cmp);
    let mut table = String::from("t,omega,dini,omega_tilde\n");
    let mut tilde = Vec::new();
    for &t in &points {
        let w = omega.eval(t)?;
        let dini = omega.dini_integral(t, cfg.b)?;
        let wt = match &composite {
            Some(c) => Some(c.eval_formula(t)?),
            None => None,
        };
        if let (Some(c), Some(v)) = (&composite, wt) {
            if t < c.t_tilde0 {
                tilde.push((t, v));
            }
        }
        table.push_str(&format!("{},{},{},{}\n", csv(t), csv(w), csv(dini), wt.map(csv).unwrap_or_default()));
    }
    let slopes: Vec<f64> = tilde.windows(2).map(|p| (p[1].1 / p[0].1).ln() / (p[1].0 / p[0].0).ln()).collect();
    let strictly_increasing = tilde.windows(2).all(|p| p[1].1 > p[0].1);
    let min_log_slope = slopes.iter().copied().reduce(f64::min);
    let pass = strictly_increasing && min_log_slope.is_none_or(|s| s >= 0.5 - 0.05);
    ctx.write("modulus-table.csv", &table)?;
    ctx.write_json(
        "modulus-table.json",
        &ModulusTableReport { pass, t_tilde0: composite.map(|c| c.t_tilde0), min_log_slope, strictly_increasing },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct RegdistReport<'a> {
    pass: bool,
    points: usize,
    failures: usize,
    max_normalized_deficit: f64,
    /// Largest `|d/(x_n - Γ) - 1|` on families with `S = 0` or a linear graph.
    slack: f64,
    calibration_constants: &'a Calibration,
}

fn regdist_check(ctx: &Ctx) -> Result<bool> {
    let cfg = ctx.section(|c| c.regdist_check.as_ref(), "regdist_check")?;
    let cal = ctx.calibration()?;
    let graph = BoundaryGraph::new(&cfg.graph, cfg.dim, 1.0)?;
    let field = RegularizedDistanceField::new(graph, cfg.working_radius, cfg.order)?;
    let points = field.random_points(cfg.points, ctx.seed);
    let samples = field.sandwich_sweep(&points)?;
    let c = cal.c_regdist(cfg.dim);
    let slack = 1e-10;
    let failures = samples.iter().filter(|s| !s.holds(c, slack)).count();
    let max_normalized_deficit = samples.iter().map(|s| s.normalized_deficit()).fold(0.0, f64::max);
    let mut table = SandwichSample::csv_header(cfg.dim);
    table.push('\n');
    for s in &samples {
        table.push_str(&s.csv_row());
        table.push('\n');
    }
    let pass = failures == 0;
    ctx.write("regdist-check.csv", &table)?;
    ctx.write_json(
        "regdist-check.json",
        &RegdistReport { pass, points: samples.len(), failures, max_normalized_deficit, slack, calibration_constants: &cal },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct BarrierCheckReport<'a> {
    pass: bool,
    epsilon: f64,
    seminorm: f64,
    reports: Vec<BarrierReport>,
    calibration_constants: &'a Calibration,
}

fn barrier_check(ctx: &Ctx) -> Result<bool> {
    let cfg = ctx.section(|c| c.barrier_check.as_ref(), "barrier_check")?;
    let cal = ctx.calibration()?;
    let graph = BoundaryGraph::new(&cfg.graph, 2, 1.0)?;
    let field = RegularizedDistanceField::new(graph, 0.5, hopflab::regdist::DEFAULT_ORDER)?;
    let seminorm = field.graph().local_lip_seminorm(2.0 * cfg.r);
    let epsilon = cfg.epsilon.unwrap_or_else(|| Barrier::select_epsilon(cal.c0_barrier, &field, cfg.r));
    let samples = BarrierSamples::random(&field, cfg.r, cfg.samples, cfg.delta_min * cfg.r, ctx.seed)?;
    let reports = cfg
        .kinds
        .iter()
        .map(|&kind| Ok(Barrier::new(epsilon, kind, cal.ellipticity, cfg.r)?.verify(&samples)))
        .collect::<Result<Vec<_>>>()?;
    let pass = reports.iter().all(|r| r.pass);
    ctx.write_json("barrier-check.json", &BarrierCheckReport { pass, epsilon, seminorm, reports, calibration_constants: &cal })?;
    Ok(pass)
}

fn solve(ctx: &Ctx) -> Result<bool> {
    let cfg = ctx.section(|c| c.solve.as_ref(), "solve")?;
    let graph = BoundaryGraph::new(&cfg.graph, 2, cfg.r)?;
    let problem = GridProblem {
        dirichlet: cfg.data.dirichlet(&graph),
        graph,
        r: cfg.r,
        h: cfg.h,
        operator: cfg.operator.build()?,
        rhs: cfg.data.rhs(),
        stencil: cfg.stencil,
    };
    let sol = problem.solve()?;
    let summary = sol.summary();
    ctx.write("solve.csv", &sol.to_csv())?;
    ctx.write_json("solve.json", &summary)?;
    Ok(summary.residual <= summary.tolerance && summary.abp.maximum_principle)
}

#[derive(Serialize)]
struct GrowthOutput<'a> {
    #[serde(flatten)]
    report: &'a GrowthReport,
    calibration_constants: &'a Calibration,
}

fn growth(ctx: &Ctx, boundary: bool) -> Result<bool> {
    let (cfg, name) = if boundary {
        (ctx.section(|c| c.boundary_modulus.as_ref(), "boundary_modulus")?, "boundary-modulus")
    } else {
        (ctx.section(|c| c.growth.as_ref(), "growth")?, "growth")
    };
    let cal = ctx.calibration()?;
    let report = if boundary { measure_boundary_modulus(cfg, &cal)? } else { measure_growth(cfg, &cal)? };
    ctx.write(&format!("{name}.csv"), &report.to_csv())?;
    ctx.write_json(&format!("{name}.json"), &GrowthOutput { report: &report, calibration_constants: &cal })?;
    Ok(report.pass)
}

fn calibrate(ctx: &Ctx) -> Result<bool> {
    let cfg = match &ctx.config {
        Some(c) => c.calibrate.clone().unwrap_or_default(),
        None => CalibrateConfig::default(),
    };
    cfg.validate()?;
    let cal = Calibration::compute(&cfg, ctx.seed)?;
    let path = ctx.calibration.clone().unwrap_or_else(|| ctx.out.join("calibration.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    cal.save(&path)?;
    let back = Calibration::load(Path::new(&path))?;
    if back != cal {
        bail!("calibration file {} does not read back identically", path.display());
    }
    Ok(true)
}
