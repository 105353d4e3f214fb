use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use odeclass::covering::{
    general_bound, kolmogorov_lower, kolmogorov_upper, kolmogorov_upper_report, parametric_bound, separable_lower,
    solution_class_bound, w1_terms, w2_terms, w3_terms, w_bounds, z1_terms, z2_terms, z3_terms, z_bounds, BoundReport,
    ClassConstants, Formula, Target,
};
use odeclass::deriv::certify::default_grid;
use odeclass::deriv::{certify_bounds, resolve_ode, BoundCertificate, CertifyOptions, OdeKind};
use odeclass::estimators::{DesignSample, FitModel};
use odeclass::gronwall::{verify_pair, PairSpec};
use odeclass::harness::config::{MethodName, MethodSection};
use odeclass::harness::emit::{write_bounds_csv, write_json, write_series_csv, BoundRow};
use odeclass::harness::{run_experiment, run_method, ExperimentConfig, Truth};
use odeclass::numeric::linspace;
use odeclass::rates::{
    critical_radius, figure1_crossover, figure1_rows, figure2_rows, kernel_radius, sample_threshold, standard_class_radius,
    RadiusReport, RateParams,
};

#[derive(Parser)]
#[command(name = "odeclass", version, about = "Smoothness, covering-number and rate tools for ODE solution classes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the factorial derivative bounds along a computed solution.
    Derivs(DerivsArgs),
    /// Evaluate covering-number bounds.
    Bounds(BoundsArgs),
    /// Critical radii, sample thresholds and figure series.
    Rates(RatesArgs),
    /// Fit an estimator to `x,y` data.
    Fit(FitArgs),
    /// Check the stability bound for a pair of ODEs.
    Gronwall(GronwallArgs),
    /// Run a Monte-Carlo experiment from a config file.
    Simulate(SimulateArgs),
}

fn parse_kind(s: &str) -> Result<OdeKind, String> {
    s.parse().map_err(|e: odeclass::Error| e.to_string())
}

#[derive(Args)]
struct DerivsArgs {
    /// Builtin ODE name or a TOML file with `ode`, `y0`, `a`, `b`.
    #[arg(long, default_value = "extremal")]
    ode: String,
    #[arg(long, default_value_t = 8)]
    kmax: usize,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DerivsOutput {
    ode: String,
    kind: OdeKind,
    existence_interval: f64,
    certificates: Vec<BoundCertificate>,
}

fn derivs(args: DerivsArgs) -> Result<()> {
    let ode = resolve_ode(&args.ode)?;
    if args.grid_points < 2 {
        bail!("--grid-points must be at least 2");
    }
    let grid = default_grid(&ode, args.grid_points);
    let certificates = certify_bounds(&ode, args.kmax, Some(&grid), CertifyOptions::default())?;
    println!("{} ({:?}), x in [{}, {}]", ode.name, ode.kind, grid[0], grid[grid.len() - 1]);
    println!("{:>3} {:>16} {:>16} {:>16}", "k", "max |y^(k)|", "bound", "slack");
    for c in &certificates {
        println!("{:>3} {:>16.8e} {:>16.8e} {:>16.8e}", c.k, c.observed_max, c.bound, c.slack);
    }
    if let Some(path) = args.json_out {
        let out =
            DerivsOutput { ode: ode.name.clone(), kind: ode.kind, existence_interval: ode.existence_interval(), certificates };
        write_json(&out, &path)?;
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulaArg {
    Kolmogorov,
    General,
    Parametric,
    Z,
    W,
    Solution,
    Separable,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Solutions,
    FirstDerivatives,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Target {
        match t {
            TargetArg::Solutions => Target::Solutions,
            TargetArg::FirstDerivatives => Target::FirstDerivatives,
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    formula: FormulaArg,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Smoothness of the solution class (`solution`, `separable`).
    #[arg(long, default_value_t = 1)]
    beta: usize,
    /// Smoothness index of a single formula (`kolmogorov`, `general`, `z`, `w`).
    #[arg(long, default_value_t = 1)]
    gamma: usize,
    #[arg(long, value_parser = parse_kind, default_value = "autonomous")]
    kind: OdeKind,
    #[arg(long, value_enum, default_value = "solutions")]
    target: TargetArg,
    /// TOML with `c0`, `b`, `lipschitz`, `lipschitz_param`, `param_dim`, `m`, `l_max`.
    #[arg(long)]
    consts: Option<PathBuf>,
    /// Log-spaced delta grid `lo:hi:count`; replaces --delta.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("--sweep expects lo:hi:count, got `{spec}`");
    }
    let lo: f64 = parts[0].parse().context("sweep lower end")?;
    let hi: f64 = parts[1].parse().context("sweep upper end")?;
    let count: usize = parts[2].parse().context("sweep count")?;
    if !(lo > 0.0 && hi >= lo && count >= 1) {
        bail!("--sweep needs 0 < lo <= hi and count >= 1");
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let mut grid: Vec<f64> = linspace(lo.ln(), hi.ln(), count).into_iter().map(f64::exp).collect();
    grid[0] = lo;
    grid[count - 1] = hi;
    Ok(grid)
}

fn bound_rows(args: &BoundsArgs, delta: f64, consts: &ClassConstants) -> Result<Vec<BoundRow>> {
    let g = args.gamma;
    let single = |formula: Formula, terms| BoundRow::from_report(delta, &BoundReport::from_terms(formula, Some(g), terms));
    let rows = match args.formula {
        FormulaArg::Kolmogorov => vec![
            BoundRow::from_report(delta, &kolmogorov_upper_report(delta, g)?),
            BoundRow {
                formula: format!("{:?}", Formula::KolmogorovLower),
                delta,
                gamma: Some(g),
                value: kolmogorov_lower(delta, g)?,
                terms: vec![],
            },
        ],
        FormulaArg::General => {
            let report = general_bound(delta, |d| kolmogorov_upper(d, g), consts)?;
            vec![BoundRow { gamma: Some(g), ..BoundRow::from_report(delta, &report) }]
        }
        FormulaArg::Parametric => vec![BoundRow::from_report(delta, &parametric_bound(delta, consts)?)],
        FormulaArg::Z => {
            z_bounds(delta, g, consts)?;
            vec![
                single(Formula::Z1, z1_terms(delta, g, consts)),
                single(Formula::Z2, z2_terms(delta, g, consts)),
                single(Formula::Z3, z3_terms(delta, g, consts)),
            ]
        }
        FormulaArg::W => {
            w_bounds(delta, g, consts)?;
            vec![
                single(Formula::W1, w1_terms(delta, g, consts)),
                single(Formula::W2, w2_terms(delta, g, consts)),
                single(Formula::W3, w3_terms(delta, g, consts)),
            ]
        }
        FormulaArg::Solution => {
            vec![BoundRow::from_report(delta, &solution_class_bound(delta, args.beta, consts, args.kind, args.target.into())?)]
        }
        FormulaArg::Separable => vec![BoundRow {
            formula: format!("{:?}", Formula::SeparableLower),
            delta,
            gamma: None,
            value: separable_lower(delta, args.beta, args.target.into())?,
            terms: vec![],
        }],
    };
    Ok(rows)
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let consts = match &args.consts {
        Some(path) => ClassConstants::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ClassConstants::default(),
    };
    let deltas = match &args.sweep {
        Some(spec) => parse_sweep(spec)?,
        None => vec![args.delta],
    };
    let mut rows = Vec::new();
    for delta in deltas {
        rows.extend(bound_rows(&args, delta, &consts)?);
    }
    for r in &rows {
        let gamma = r.gamma.map(|g| g.to_string()).unwrap_or_else(|| "-".into());
        println!("{:<16} delta={:<12.6e} gamma={:<3} value={:.10e}", r.formula, r.delta, gamma, r.value);
    }
    if let Some(path) = args.csv_out {
        write_bounds_csv(&rows, &path)?;
    }
    Ok(())
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    beta: usize,
    #[arg(long, value_parser = parse_kind, default_value = "autonomous")]
    kind: OdeKind,
    /// Emit the series of figure 1 (log vs power entropy terms) or figure 2 (M functions).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    figure: Option<u8>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Largest gamma in the figure series; defaults to 8 for figure 1 and beta otherwise.
    #[arg(long)]
    gamma_max: Option<usize>,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RatesOutput {
    n: usize,
    sigma: f64,
    beta: usize,
    kind: OdeKind,
    critical: RadiusReport,
    kernel: RadiusReport,
    standard_class_r2: f64,
    sample_threshold: f64,
}

fn rates(args: RatesArgs) -> Result<()> {
    match args.figure {
        Some(1) => {
            let gamma_max = args.gamma_max.unwrap_or(8);
            let rows = figure1_rows(args.delta, gamma_max)?;
            match figure1_crossover(args.delta, gamma_max)? {
                Some(g) => println!("crossover gamma = {g}"),
                None => println!("no crossover up to gamma = {gamma_max}"),
            }
            emit_series(&rows, args.csv_out.as_deref())
        }
        Some(_) => {
            let p = RateParams::new(args.n, args.sigma, args.beta)?;
            let rows = figure2_rows(&p, args.gamma_max.unwrap_or(args.beta));
            emit_series(&rows, args.csv_out.as_deref())
        }
        None => {
            let p = RateParams::new(args.n, args.sigma, args.beta)?;
            let out = RatesOutput {
                n: args.n,
                sigma: args.sigma,
                beta: args.beta,
                kind: args.kind,
                critical: critical_radius(&p, args.kind),
                kernel: kernel_radius(&p),
                standard_class_r2: standard_class_radius(args.beta, &p),
                sample_threshold: sample_threshold(args.beta, args.sigma),
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn emit_series(rows: &[odeclass::rates::SeriesRow], path: Option<&Path>) -> Result<()> {
    for r in rows {
        println!("{:>3} {:<10} {:.10e}", r.gamma, r.series_name, r.value);
    }
    if let Some(path) = path {
        write_series_csv(rows, path)?;
    }
    Ok(())
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_parser = |s: &str| s.parse::<MethodName>().map_err(|e| e.to_string()))]
    method: MethodName,
    /// CSV with header columns `x` and `y`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    beta: usize,
    #[arg(long, value_parser = parse_kind, default_value = "autonomous")]
    variant: OdeKind,
    /// Constraint level for `krr`.
    #[arg(long = "C", default_value_t = 1.0, conflicts_with = "cv")]
    c: f64,
    /// Choose C for `krr` by 5-fold cross-validation.
    #[arg(long)]
    cv: bool,
    /// Picard iterations.
    #[arg(long = "R", default_value_t = 8)]
    r: usize,
    /// Quadrature points per Picard iteration.
    #[arg(long = "T", default_value_t = 256)]
    t: usize,
    /// Parametric model for `nls` and `picard`.
    #[arg(long, default_value = "linear-decay")]
    model: String,
    #[arg(long, default_value_t = 17)]
    resolution: usize,
    /// Initial-value estimate for `picard`.
    #[arg(long, default_value_t = 1.0)]
    y0_hat: f64,
    /// Assumed noise scale of the data.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Builtin truth; enables MSE reporting.
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    method: &'static str,
    fit: &'a FitModel,
    in_sample_mse: Option<f64>,
}

fn fit(args: FitArgs) -> Result<()> {
    let data = DesignSample::from_csv(&args.data, args.sigma).with_context(|| format!("reading {}", args.data.display()))?;
    let section = MethodSection {
        name: args.method,
        beta: args.beta,
        variant: args.variant,
        c: args.c,
        cv: args.cv,
        r: args.r,
        t: args.t,
        model: args.model.clone(),
        resolution: args.resolution,
        y0_hat: args.y0_hat,
    };
    let model = run_method(&section, &data)?;
    let mse = match &args.truth {
        Some(name) => {
            let truth = Truth::by_name(name)?;
            let ys = truth.values(&data.xs)?;
            Some(model.fitted.iter().zip(&ys).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / ys.len() as f64)
        }
        None => None,
    };
    let d = &model.diagnostics;
    println!("method      {}", args.method.as_str());
    println!("intercept   {:?}", model.intercept);
    if model.weights.len() <= 8 {
        println!("weights     {:?}", model.weights);
    } else {
        println!("weights     {} values", model.weights.len());
    }
    println!("objective   {:.10e}", d.objective);
    println!("kkt         {:.3e}", d.kkt_residual);
    println!("converged   {}", d.converged);
    if !d.constraint_slacks.is_empty() {
        println!("slacks      {:?}", d.constraint_slacks);
    }
    if let Some(m) = mse {
        println!("mse         {m:.10e}");
    }
    if let Some(path) = args.json_out {
        write_json(&FitOutput { method: args.method.as_str(), fit: &model, in_sample_mse: mse }, &path)?;
    }
    Ok(())
}

#[derive(Args)]
struct GronwallArgs {
    /// TOML pair description (`kind = "linear"` or `kind = "builtin"`).
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    /// Right end of the grid; defaults to the end of the box, `a0 + a`.
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

fn gronwall(args: GronwallArgs) -> Result<()> {
    let pair = PairSpec::load(&args.pair).with_context(|| format!("reading {}", args.pair.display()))?.build()?;
    if args.grid_points < 2 {
        bail!("--grid-points must be at least 2");
    }
    let hi = args.x_max.unwrap_or(pair.a0 + pair.a);
    let grid = linspace(pair.a0, hi, args.grid_points);
    let report = verify_pair(&pair, &grid, args.m)?;
    println!("max ratio          {:.10e}", report.max_ratio);
    println!("worst x            {}", report.worst_x);
    println!("derivative index   {}", report.k);
    println!("zero over zero     {}", report.zero_over_zero);
    println!("existence interval {}", report.existence_interval);
    if let Some(path) = args.json_out {
        write_json(&report, &path)?;
    }
    Ok(())
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` from the config, then `out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let out_dir = args.out_dir.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let (records, summary) = run_experiment(&cfg, &out_dir, args.jobs)?;
    let failed = records.iter().filter(|r| r.failed).count();
    println!("{} runs ({} failed) written to {}", records.len(), failed, out_dir.display());
    println!("target slope {:.6}", summary.target_slope);
    match (&summary.regression, &summary.regression_error) {
        (Some(r), _) => println!("fitted slope {:.6} (stderr {:.4}, r2 {:.4})", r.slope, r.stderr, r.r2),
        (None, Some(e)) => println!("no slope: {e}"),
        _ => {}
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Derivs(a) => derivs(a),
        Command::Bounds(a) => bounds(a),
        Command::Rates(a) => rates(a),
        Command::Fit(a) => fit(a),
        Command::Gronwall(a) => gronwall(a),
        Command::Simulate(a) => simulate(a),
    }
}
