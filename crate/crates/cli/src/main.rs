//! Batch front-end: simulate, fit, select, gof and check-plot.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use latent_mbl::gee::{init_params, init_shared_beta, InitConfig, InitScale, SchemePreset};
use latent_mbl::gof::{check_curves, hosmer_lemeshow, BinningRule, DEFAULT_CHECK_WINDOWS, DEFAULT_TIME_HALFWIDTH};
use latent_mbl::model::ModelDocument;
use latent_mbl::plot::check_panel_svg;
use latent_mbl::report::FitReport;
use latent_mbl::selection::{backward_select, SelectionConfig};
use latent_mbl::simulate::{shared_curvature_design, simulate_general, SimDesign, TimeGrid};
use latent_mbl::{
    fit, BlockingScheme, CorrStructure, FitConfig, MblDataset, MblError, MeanFamily, MeanModel, ModelSpec,
    SharedBetaSpec,
};

use output::OutputDir;

const THREADS_ENV: &str = "LATENT_MBL_THREADS";

#[derive(Parser)]
#[command(name = "latent-mbl", version, about = "Latent trajectory models for multivariate binary longitudinal data")]
struct Cli {
    /// Directory receiving every output file and manifest.json.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit a model and report estimates with sandwich standard errors.
    Fit(FitArgs),
    /// Backward selection of polynomial orders by QIC_u.
    Select(SelectArgs),
    /// Hosmer-Lemeshow statistics for a saved fit.
    Gof(GofArgs),
    /// Predicted versus empirical probability curves for a saved fit.
    CheckPlot(CheckPlotArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimPreset {
    SharedCurvature,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Right,
    Interior,
}

impl From<GridArg> for TimeGrid {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Right => TimeGrid::Right,
            GridArg::Interior => TimeGrid::Interior,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrArg {
    Indep,
    Exch,
    Unstr,
}

impl From<CorrArg> for CorrStructure {
    fn from(c: CorrArg) -> Self {
        match c {
            CorrArg::Indep => CorrStructure::Independence,
            CorrArg::Exch => CorrStructure::Exchangeable,
            CorrArg::Unstr => CorrStructure::Unstructured,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BinsArg {
    Fixed,
    Decile,
}

impl From<BinsArg> for BinningRule {
    fn from(b: BinsArg) -> Self {
        match b {
            BinsArg::Fixed => BinningRule::Fixed,
            BinsArg::Decile => BinningRule::Decile,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Probability,
    Logit,
}

impl From<ScaleArg> for InitScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Probability => InitScale::Probability,
            ScaleArg::Logit => InitScale::Logit,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Latent,
    SharedBeta,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["preset", "design"]))]
struct SimulateArgs {
    /// Built-in design.
    #[arg(long, value_enum)]
    preset: Option<SimPreset>,
    /// SimDesign JSON file.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Overrides the design's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the design's time grid.
    #[arg(long, value_enum)]
    grid: Option<GridArg>,
}

#[derive(Args)]
struct EstimationArgs {
    /// Named blocking scheme: B-I, B-II or B-III.
    #[arg(long, default_value = "B-III")]
    preset: SchemePreset,
    /// Explicit blocks as index lists, e.g. "0,1;2,3;4". Overrides --preset.
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long, value_enum, default_value = "indep")]
    corr: CorrArg,
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Scale of the initial regression on the starting curve.
    #[arg(long, value_enum, default_value = "probability")]
    init_scale: ScaleArg,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "latent")]
    model: ModelArg,
    /// Orders "ma,mb,m1,...,mK", a single order for all, or a model JSON file.
    /// Coefficients in the file are used as starting values.
    #[arg(long)]
    spec: Option<String>,
    #[command(flatten)]
    est: EstimationArgs,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Starting model; defaults to order 2 everywhere.
    #[arg(long)]
    spec: Option<String>,
    #[command(flatten)]
    est: EstimationArgs,
}

#[derive(Args)]
struct GofArgs {
    #[arg(long)]
    input: PathBuf,
    /// fit.json written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, value_enum, default_value = "fixed")]
    hl_bins: BinsArg,
}

#[derive(Args)]
struct CheckPlotArgs {
    #[arg(long)]
    input: PathBuf,
    /// fit.json written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Duration windows "d:halfwidth"; defaults to 2:1 and 8:3.
    #[arg(long = "window")]
    windows: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TIME_HALFWIDTH)]
    t_halfwidth: f64,
}

/// A failure of the numerical procedures, reported with exit code 2.
#[derive(Debug)]
struct NumericalFailure(String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        e.downcast_ref::<NumericalFailure>().is_some()
            || e.downcast_ref::<MblError>().is_some_and(MblError::is_numerical)
    });
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let out = OutputDir::create(&cli.output_dir)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, out),
        Command::Fit(args) => cmd_fit(args, out),
        Command::Select(args) => cmd_select(args, out),
        Command::Gof(args) => cmd_gof(args, out),
        Command::CheckPlot(args) => cmd_check_plot(args, out),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<MblDataset> {
    MblDataset::load(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateConfig {
    design: SimDesign,
    n_subjects: usize,
    n_rows: usize,
}

fn cmd_simulate(args: SimulateArgs, mut out: OutputDir) -> Result<()> {
    let mut design = match (&args.preset, &args.design) {
        (Some(SimPreset::SharedCurvature), _) => shared_curvature_design(1, TimeGrid::Right),
        (None, Some(path)) => read_json::<SimDesign>(path)?,
        (None, None) => bail!("either --preset or --design is required"),
    };
    if let Some(seed) = args.seed {
        design.seed = seed;
    }
    if let Some(grid) = args.grid {
        design.grid = grid.into();
    }
    let dataset = simulate_general(&design)?;
    out.write("data.csv", &dataset.to_csv_string())?;
    let config = SimulateConfig { n_subjects: dataset.n_subjects(), n_rows: dataset.n_obs(), design };
    out.finish("simulate", &config, "ok")
}

// --------------------------------------------------------------------- fit

#[derive(Serialize)]
struct FitRunConfig {
    input: String,
    model: MeanFamily,
    init: Vec<f64>,
    init_config: Option<InitConfig>,
    fit: FitConfig,
}

/// Parses `--spec`: "ma,mb,m1,...,mK", a single order, or a model JSON path.
fn resolve_spec(value: Option<&str>, k: usize) -> Result<(ModelSpec, Option<Vec<f64>>)> {
    let Some(value) = value else {
        return Ok((ModelSpec::uniform(k, 2), None));
    };
    let numbers: Option<Vec<usize>> = value.split(',').map(|s| s.trim().parse().ok()).collect();
    let (spec, start) = match numbers {
        Some(v) if v.len() == 1 => (ModelSpec::uniform(k, v[0]), None),
        Some(v) if v.len() >= 3 => (ModelSpec::new(v[0], v[1], v[2..].to_vec())?, None),
        Some(_) => bail!("--spec needs one order or \"ma,mb,m1,...,mK\""),
        None => {
            let doc: ModelDocument = read_json(Path::new(value))?;
            let (spec, params) = doc.into_parts()?;
            (spec, params.map(|p| p.to_flat()))
        }
    };
    if spec.n_responses() != k {
        bail!("model has {} responses but the data has {k}", spec.n_responses());
    }
    Ok((spec, start))
}

fn resolve_scheme(est: &EstimationArgs, family: &MeanFamily) -> Result<BlockingScheme> {
    let scheme = match &est.blocks {
        Some(text) => BlockingScheme::parse_indices(text)?,
        None => est.preset.scheme(family),
    };
    scheme.validate(family.n_params())?;
    Ok(scheme)
}

fn fit_config(est: &EstimationArgs, family: &MeanFamily) -> Result<FitConfig> {
    if est.tol.is_nan() || est.tol <= 0.0 {
        bail!("--tol must be positive");
    }
    Ok(FitConfig::default()
        .with_scheme(resolve_scheme(est, family)?)
        .with_corr(est.corr.into())
        .with_tol(est.tol)
        .with_max_iter(est.max_iter))
}

fn cmd_fit(args: FitArgs, mut out: OutputDir) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let k = dataset.n_responses;
    let init_config = InitConfig { scale: args.est.init_scale.into(), ..InitConfig::default() };
    let (family, init, used_init_config) = match args.model {
        ModelArg::SharedBeta => {
            if args.spec.is_some() {
                bail!("--spec applies to the latent model only");
            }
            (MeanFamily::SharedBeta(SharedBetaSpec::new(k)?), init_shared_beta(&dataset)?.to_flat(), None)
        }
        ModelArg::Latent => {
            let (spec, start) = resolve_spec(args.spec.as_deref(), k)?;
            match start {
                Some(theta) => (MeanFamily::Latent(spec), theta, None),
                None => {
                    let theta = init_params(&dataset, &spec, &init_config)?.to_flat();
                    (MeanFamily::Latent(spec), theta, Some(init_config))
                }
            }
        }
    };
    let config = fit_config(&args.est, &family)?;
    let run_config = FitRunConfig {
        input: display(&args.input),
        model: family.clone(),
        init: init.clone(),
        init_config: used_init_config,
        fit: config.clone(),
    };

    match fit(&dataset, &family, &init, &config) {
        Ok(result) => {
            let report = FitReport::new(&family, &result, &dataset);
            out.write("fit.json", &report.to_json()?)?;
            out.write("fit.txt", &report.to_text())?;
            if result.converged {
                out.finish("fit", &run_config, "converged")
            } else {
                let report_path = out.path("fit.json");
                out.finish("fit", &run_config, "not converged")?;
                Err(NumericalFailure(format!(
                    "no convergence within {} iterations; see {}",
                    result.iterations,
                    display(&report_path)
                ))
                .into())
            }
        }
        Err(MblError::Diverged { trace }) => {
            let path = out.write_json("trace.json", &trace)?;
            out.finish("fit", &run_config, "diverged")?;
            Err(NumericalFailure(format!("fit diverged after {} iterations; trace in {}", trace.len(), display(&path)))
                .into())
        }
        Err(e) => {
            let numerical = e.is_numerical();
            out.finish("fit", &run_config, "failed")?;
            if numerical {
                Err(NumericalFailure(e.to_string()).into())
            } else {
                Err(e.into())
            }
        }
    }
}

// ------------------------------------------------------------------ select

#[derive(Serialize)]
struct SelectRunConfig {
    input: String,
    full_spec: ModelSpec,
    selection: SelectionConfig,
}

fn cmd_select(args: SelectArgs, mut out: OutputDir) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let (full_spec, start) = resolve_spec(args.spec.as_deref(), dataset.n_responses)?;
    if start.is_some() {
        bail!("select computes its own starting values; pass orders only");
    }
    if args.est.blocks.is_some() {
        bail!("select re-blocks every candidate from --preset; --blocks is not supported");
    }
    let mut fit = fit_config(&args.est, &MeanFamily::Latent(full_spec.clone()))?;
    fit.scheme = None;
    let selection = SelectionConfig {
        fit,
        preset: args.est.preset,
        init: InitConfig { scale: args.est.init_scale.into(), ..InitConfig::default() },
    };
    let run_config = SelectRunConfig { input: display(&args.input), full_spec: full_spec.clone(), selection };

    let trace = match backward_select(&dataset, &full_spec, &run_config.selection) {
        Ok(t) => t,
        Err(e) => {
            out.finish("select", &run_config, "failed")?;
            return Err(e.into());
        }
    };
    out.write("selection.csv", &trace.to_csv())?;
    out.write_json("selection.json", &trace)?;
    let final_params = latent_mbl::ParamVector::from_flat(&trace.final_spec, &trace.final_coefficients)?;
    out.write_json("final_model.json", &ModelDocument::new(&trace.final_spec, Some(&final_params)))?;
    let label = trace.final_spec.label_relative_to(&full_spec);
    out.write("final_label.txt", &format!("{label}\n"))?;
    out.finish("select", &run_config, "ok")
}

// --------------------------------------------------------------------- gof

#[derive(Serialize)]
struct GofRunConfig {
    input: String,
    fit: String,
    rule: BinningRule,
}

fn load_report(path: &Path) -> Result<FitReport> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    FitReport::from_json(&text).with_context(|| format!("cannot parse fit report {}", path.display()))
}

fn check_report_matches(report: &FitReport, dataset: &MblDataset) -> Result<()> {
    if report.model.n_responses() != dataset.n_responses {
        bail!("fit has {} responses but the data has {}", report.model.n_responses(), dataset.n_responses);
    }
    Ok(())
}

fn cmd_gof(args: GofArgs, mut out: OutputDir) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let report = load_report(&args.fit)?;
    check_report_matches(&report, &dataset)?;
    let rule: BinningRule = args.hl_bins.into();
    let hl = hosmer_lemeshow(&dataset, &report.model, &report.coefficients, rule);
    out.write_json("hl.json", &hl)?;
    out.write("hl.txt", &hl.to_text())?;
    let config = GofRunConfig { input: display(&args.input), fit: display(&args.fit), rule };
    out.finish("gof", &config, "ok")
}

// -------------------------------------------------------------- check-plot

#[derive(Serialize)]
struct CheckRunConfig {
    input: String,
    fit: String,
    windows: Vec<(f64, f64)>,
    t_halfwidth: f64,
}

fn parse_window(text: &str) -> Result<(f64, f64)> {
    let (d, h) = text.split_once(':').ok_or_else(|| anyhow!("window `{text}` must look like d:halfwidth"))?;
    let d: f64 = d.trim().parse().with_context(|| format!("bad duration in `{text}`"))?;
    let h: f64 = h.trim().parse().with_context(|| format!("bad half-width in `{text}`"))?;
    if !(d > 0.0 && h >= 0.0) {
        bail!("window `{text}` needs a positive duration and a non-negative half-width");
    }
    Ok((d, h))
}

fn cmd_check_plot(args: CheckPlotArgs, mut out: OutputDir) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let report = load_report(&args.fit)?;
    check_report_matches(&report, &dataset)?;
    let windows: Vec<(f64, f64)> = if args.windows.is_empty() {
        DEFAULT_CHECK_WINDOWS.to_vec()
    } else {
        args.windows.iter().map(|w| parse_window(w)).collect::<Result<_>>()?
    };
    if args.t_halfwidth.is_nan() || args.t_halfwidth < 0.0 {
        bail!("--t-halfwidth must be non-negative");
    }
    for &(d, h) in &windows {
        let curves = check_curves(&dataset, &report.model, &report.coefficients, d, h, args.t_halfwidth);
        for curve in &curves {
            out.write(&format!("check_d{d}_k{}.csv", curve.response + 1), &curve.to_csv())?;
        }
        let title = format!("duration {d} (window ±{h}, time ±{})", args.t_halfwidth);
        out.write(&format!("check_d{d}.svg"), &check_panel_svg(&curves, &title))?;
    }
    let config =
        CheckRunConfig { input: display(&args.input), fit: display(&args.fit), windows, t_halfwidth: args.t_halfwidth };
    out.finish("check-plot", &config, "ok")
}
