//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or missing file, 2 parse or malformed
//! input, 3 inference failure, 4 enumeration cap exceeded.

pub mod experiments;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::candidates::{divmbest, MapSolver};
use crate::error::{Error, Result};
use crate::graph::{gen_labelled_grid, Configuration, GibbsModel};
use crate::infer::{bethe_log_z, exact_log_z, exact_marginals, sum_product, BPSettings};
use crate::io::{self, CandidateFile, GraphFile, MarginalsFile, Meta};
use crate::loss::LossKind;
use crate::predict::{
    ball_posterior, predict, radius_from_fraction, PosteriorSource, Prediction, PredictorConfig, PredictorKind,
};
use crate::tune::{grid_search, synthetic_corpus, CVMode, CVPlan, Objective, ParameterGrid, TuneReport, TuneSettings};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFERENCE: i32 = 3;
pub const EXIT_ENUMERATION: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_)
        | Error::DuplicateId(_)
        | Error::ScopeOutOfRange { .. }
        | Error::TableSizeMismatch { .. }
        | Error::NaNPotential(_)
        | Error::InvalidCardinality { .. } => EXIT_PARSE,
        Error::AllConfigurationsForbidden | Error::EmptyBall | Error::Overflow(_) => EXIT_INFERENCE,
        Error::TooLargeToEnumerate(_) => EXIT_ENUMERATION,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "c3rf", version, about = "Hamming-ball constrained CRF inference and loss-aware candidate selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random binary (or K-label) grid model.
    GenGrid(GenGridArgs),
    /// Node marginals and log Z by belief propagation or enumeration.
    Infer(InferArgs),
    /// Mass and marginals of the model restricted to a Hamming ball.
    Mass(MassArgs),
    /// Diverse M-best candidates.
    Divmbest(DivmbestArgs),
    /// Pick one candidate with a loss-aware predictor.
    Predict(PredictArgs),
    /// Cross-validated parameter search on a synthetic corpus.
    Tune(TuneArgs),
    /// Log-mass estimation error of Bethe and sampling estimators.
    SweepBethe(SweepBetheArgs),
    /// Rank correlation between candidate masses and scores.
    RankCorr(RankCorrArgs),
    /// Mixture marginals over a radius and temperature sweep.
    ExportMarginals(ExportMarginalsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BpArgs {
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
}

impl BpArgs {
    fn settings(&self) -> Result<BPSettings> {
        let s = BPSettings {
            max_iterations: self.max_iterations,
            convergence_tol: self.tolerance,
            damping: self.damping,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Hamming,
    Iou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Exhaustive,
    MaxProduct,
}

impl From<SolverArg> for MapSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exhaustive => MapSolver::Exhaustive,
            SolverArg::MaxProduct => MapSolver::MaxProduct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Map,
    Delta,
    Mass,
    #[value(name = "crf_fela", alias = "crf-fela")]
    CrfFela,
    #[value(name = "c3rf_fela", alias = "c3rf-fela")]
    C3rfFela,
}

impl From<KindArg> for PredictorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Map => PredictorKind::Map,
            KindArg::Delta => PredictorKind::Delta,
            KindArg::Mass => PredictorKind::Mass,
            KindArg::CrfFela => PredictorKind::CrfFela,
            KindArg::C3rfFela => PredictorKind::C3rfFela,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Erm,
    Bdt,
}

#[derive(Debug, Args)]
pub struct GenGridArgs {
    /// Grid side length.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub labels: usize,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub potential_low: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Enumerate instead of running belief propagation.
    #[arg(long)]
    pub exact: bool,
    /// Overrides the temperature stored in the graph file.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the node marginals as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MassArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Ball centre as comma-separated labels.
    #[arg(long, value_delimiter = ',', conflicts_with = "candidates")]
    pub center: Option<Vec<usize>>,
    /// Take the centre from this candidate file.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, conflicts_with = "radius")]
    pub radius_fraction: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DivmbestArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = SolverArg::MaxProduct)]
    pub solver: SolverArg,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long = "radius-fraction", visible_alias = "rho", default_value_t = 0.0)]
    pub radius_fraction: f64,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum, default_value_t = LossArg::Hamming)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Exact posteriors by enumeration.
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 3)]
    pub side: usize,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub potential_low: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KindArg::C3rfFela)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = LossArg::Hamming)]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Erm)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::MaxProduct)]
    pub solver: SolverArg,
    #[arg(long = "lambda", value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long = "radius-fraction", value_delimiter = ',')]
    pub radius_fractions: Option<Vec<f64>>,
    #[arg(long = "temperature", value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    /// Fix T instead of searching over it.
    #[arg(long, conflicts_with = "temperatures")]
    pub pin_temperature: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub permutations: usize,
    #[arg(long)]
    pub leave_one_out: bool,
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub bp: BpArgs,
    /// CSV report path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary of the selection.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepBetheArgs {
    #[arg(long, value_delimiter = ',', default_value = "3,4")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub potential_low: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankCorrArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 4)]
    pub side: usize,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub potential_low: f64,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long = "radius-fraction", value_delimiter = ',', default_value = "0,0.1,0.5")]
    pub radius_fractions: Vec<f64>,
    #[arg(long = "temperature", value_delimiter = ',', default_value = "0.5,1,2")]
    pub temperatures: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportMarginalsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long = "radius-fraction", value_delimiter = ',', default_value = "0,0.1,0.5,1")]
    pub radius_fractions: Vec<f64>,
    #[arg(long = "temperature", value_delimiter = ',', default_value = "0.5,1,2")]
    pub temperatures: Vec<f64>,
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub bp: BpArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn loss_kind(loss: LossArg, classes: usize) -> Result<LossKind> {
    match loss {
        LossArg::Hamming => Ok(LossKind::Hamming),
        LossArg::Iou if classes >= 2 => Ok(LossKind::Iou { classes }),
        LossArg::Iou => Err(Error::InvalidParameter("IOU needs at least 2 classes".into())),
    }
}

fn source(exact: bool, bp: &BpArgs) -> Result<PosteriorSource> {
    Ok(if exact {
        PosteriorSource::Exact
    } else {
        PosteriorSource::BeliefPropagation(bp.settings()?)
    })
}

fn load_model(path: &Path, temperature: Option<f64>) -> Result<GibbsModel> {
    let model = io::read_model(path)?;
    match temperature {
        Some(t) => model.with_temperature(t),
        None => Ok(model),
    }
}

#[derive(Serialize)]
struct PosteriorFile<'a> {
    meta: &'a Meta,
    center: &'a Configuration,
    radius: usize,
    method: &'static str,
    log_mass: f64,
    converged: bool,
    marginals: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct PredictionFile<'a> {
    meta: &'a Meta,
    config: &'a PredictorConfig,
    radius: usize,
    #[serde(flatten)]
    prediction: &'a Prediction,
}

#[derive(Serialize)]
struct TuneSummary<'a> {
    meta: &'a Meta,
    #[serde(flatten)]
    report: &'a TuneReport,
}

fn run_gen_grid(a: &GenGridArgs, meta: Meta) -> Result<()> {
    let model = gen_labelled_grid(a.n, a.labels, a.seed, a.potential_low)?.with_temperature(a.temperature)?;
    io::write_json(&a.out, &GraphFile::from_model(&model, Some(meta)))
}

fn run_infer(a: &InferArgs, meta: Meta) -> Result<()> {
    let model = load_model(&a.graph, a.temperature)?;
    let file = if a.exact {
        let m = exact_marginals(&model)?;
        MarginalsFile {
            meta: Some(meta.clone()),
            method: "exact".into(),
            log_z: exact_log_z(&model)?,
            converged: true,
            iterations: 0,
            marginals: m.node,
        }
    } else {
        let m = sum_product(&model, &a.bp.settings()?)?;
        MarginalsFile {
            meta: Some(meta.clone()),
            method: "bethe".into(),
            log_z: bethe_log_z(&model, &m),
            converged: m.converged,
            iterations: m.iterations,
            marginals: m.node,
        }
    };
    io::write_json(&a.out, &file)?;
    if let Some(csv) = &a.csv {
        io::write_text(csv, &io::marginals_csv(&meta, &file.marginals))?;
    }
    Ok(())
}

fn run_mass(a: &MassArgs, meta: Meta) -> Result<()> {
    let model = load_model(&a.graph, a.temperature)?;
    let center = match (&a.center, &a.candidates) {
        (Some(c), _) => Configuration::new(c.clone()),
        (None, Some(path)) => {
            let set = io::read_candidates(path)?;
            set.items
                .get(a.index)
                .map(|c| c.labels.clone())
                .ok_or_else(|| Error::InvalidParameter(format!("no candidate at index {}", a.index)))?
        }
        (None, None) => return Err(Error::InvalidParameter("either --center or --candidates is required".into())),
    };
    model.graph().check_configuration(&center)?;
    let n = model.num_variables();
    let radius = match (a.radius, a.radius_fraction) {
        (Some(r), _) => r,
        (None, Some(rho)) if (0.0..=1.0).contains(&rho) => radius_from_fraction(rho, n),
        (None, Some(rho)) => return Err(Error::InvalidParameter(format!("radius fraction {rho} outside [0, 1]"))),
        (None, None) => 0,
    };
    let src = source(a.exact, &a.bp)?;
    let post = ball_posterior(&model, &center, radius, &src)?;
    let file = PosteriorFile {
        meta: &meta,
        center: &center,
        radius,
        method: if a.exact { "exact" } else { "bethe" },
        log_mass: post.log_mass,
        converged: post.converged,
        marginals: &post.node_marginals,
    };
    io::write_json(&a.out, &file)
}

fn run_divmbest(a: &DivmbestArgs, meta: Meta) -> Result<()> {
    let model = load_model(&a.graph, None)?;
    let set = divmbest(&model, a.m, a.lambda, a.solver.into(), &a.bp.settings()?)?;
    io::write_json(&a.out, &CandidateFile { meta: Some(meta), set })
}

fn run_predict(a: &PredictArgs, meta: Meta) -> Result<()> {
    let model = load_model(&a.graph, None)?;
    let mut set = io::read_candidates(&a.candidates)?;
    let bad = set.verify_scores(&model, 1e-9);
    if !bad.is_empty() {
        eprintln!("warning: {} candidate score(s) disagree with the model; rescoring", bad.len());
        set.rescore(&model)?;
    }
    let config = PredictorConfig {
        kind: a.kind.into(),
        radius_fraction: a.radius_fraction,
        temperature: a.temperature.unwrap_or(model.temperature()),
        loss: loss_kind(a.loss, a.classes)?,
    };
    let prediction = predict(&model, &set, &config, &source(a.exact, &a.bp)?)?;
    let file = PredictionFile {
        meta: &meta,
        config: &config,
        radius: config.radius(model.num_variables()),
        prediction: &prediction,
    };
    io::write_json(&a.out, &file)
}

fn run_tune(a: &TuneArgs, meta: Meta) -> Result<()> {
    let defaults = ParameterGrid::default();
    let grid = ParameterGrid {
        lambdas: a.lambdas.clone().unwrap_or(defaults.lambdas),
        radius_fractions: a.radius_fractions.clone().unwrap_or(defaults.radius_fractions),
        temperatures: match (a.pin_temperature, &a.temperatures) {
            (Some(t), _) => vec![t],
            (None, Some(ts)) => ts.clone(),
            (None, None) => defaults.temperatures,
        },
    };
    let plan = CVPlan {
        folds: a.folds,
        permutations: a.permutations,
        seed: a.seed,
        mode: if a.leave_one_out { CVMode::LeaveOneOut } else { CVMode::Kfold },
    };
    let settings = TuneSettings {
        kind: a.kind.into(),
        loss: loss_kind(a.loss, 2)?,
        m: a.m,
        solver: a.solver.into(),
        source: source(a.exact, &a.bp)?,
    };
    let objective = match a.objective {
        ObjectiveArg::Erm => Objective::Erm,
        ObjectiveArg::Bdt => Objective::Bdt,
    };
    let corpus = synthetic_corpus(a.instances, a.side, a.potential_low, a.seed)?;
    let report = grid_search(&corpus, &grid, &plan, &settings, objective)?;
    let mut csv = Vec::new();
    csv.extend_from_slice(meta.csv_comment().as_bytes());
    csv.push(b'\n');
    report.write_csv(&mut csv).map_err(|e| Error::Io(e.to_string()))?;
    io::write_text(&a.out, &String::from_utf8(csv).expect("ascii report"))?;
    if let Some(path) = &a.summary {
        io::write_json(path, &TuneSummary { meta: &meta, report: &report })?;
    }
    Ok(())
}

fn csv_document(meta: &Meta, header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = format!("{}\n{header}\n", meta.csv_comment());
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn run_sweep_bethe(a: &SweepBetheArgs, meta: Meta) -> Result<()> {
    let rows = experiments::sweep_bethe(&a.sizes, a.runs, &a.samples, a.potential_low, a.seed, &a.bp.settings()?)?;
    io::write_text(
        &a.out,
        &csv_document(&meta, experiments::SweepRow::HEADER, rows.iter().map(|r| r.csv())),
    )
}

fn run_rank_corr(a: &RankCorrArgs, meta: Meta) -> Result<()> {
    let config = experiments::RankCorrConfig {
        instances: a.instances,
        side: a.side,
        potential_low: a.potential_low,
        m: a.m,
        lambda: a.lambda,
        rhos: a.radius_fractions.clone(),
        temperatures: a.temperatures.clone(),
        seed: a.seed,
    };
    let rows = experiments::rank_corr(&config, &a.bp.settings()?)?;
    io::write_text(
        &a.out,
        &csv_document(&meta, experiments::RankCorrRow::HEADER, rows.iter().map(|r| r.csv())),
    )
}

fn run_export_marginals(a: &ExportMarginalsArgs, meta: Meta) -> Result<()> {
    let model = load_model(&a.graph, None)?;
    let set = io::read_candidates(&a.candidates)?;
    let grids = experiments::export_marginals(
        &model,
        &set,
        &a.radius_fractions,
        &a.temperatures,
        &source(a.exact, &a.bp)?,
    )?;
    for (rho, t, node) in grids {
        let path = a.out.join(format!("marginals_rho{rho}_T{t}.csv"));
        io::write_text(&path, &io::marginals_csv(&meta, &node))?;
    }
    Ok(())
}

fn seed_of(command: &Command) -> Option<u64> {
    match command {
        Command::GenGrid(a) => Some(a.seed),
        Command::Tune(a) => Some(a.seed),
        Command::SweepBethe(a) => Some(a.seed),
        Command::RankCorr(a) => Some(a.seed),
        _ => None,
    }
}

fn name_of(command: &Command) -> &'static str {
    match command {
        Command::GenGrid(_) => "gen-grid",
        Command::Infer(_) => "infer",
        Command::Mass(_) => "mass",
        Command::Divmbest(_) => "divmbest",
        Command::Predict(_) => "predict",
        Command::Tune(_) => "tune",
        Command::SweepBethe(_) => "sweep-bethe",
        Command::RankCorr(_) => "rank-corr",
        Command::ExportMarginals(_) => "export-marginals",
    }
}

pub fn execute(cli: &Cli, args: Vec<String>) -> Result<()> {
    let meta = Meta::new(name_of(&cli.command), args, seed_of(&cli.command));
    match &cli.command {
        Command::GenGrid(a) => run_gen_grid(a, meta),
        Command::Infer(a) => run_infer(a, meta),
        Command::Mass(a) => run_mass(a, meta),
        Command::Divmbest(a) => run_divmbest(a, meta),
        Command::Predict(a) => run_predict(a, meta),
        Command::Tune(a) => run_tune(a, meta),
        Command::SweepBethe(a) => run_sweep_bethe(a, meta),
        Command::RankCorr(a) => run_rank_corr(a, meta),
        Command::ExportMarginals(a) => run_export_marginals(a, meta),
    }
}

/// Parse `argv`, run the command and return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let recorded: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::FileNotFound("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_PARSE);
        assert_eq!(exit_code(&Error::EmptyBall), EXIT_INFERENCE);
        assert_eq!(exit_code(&Error::TooLargeToEnumerate(1)), EXIT_ENUMERATION);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["c3rf", "no-such-command"]), EXIT_USAGE);
        assert_eq!(main_with_args(["c3rf", "infer"]), EXIT_USAGE);
        assert_eq!(
            main_with_args(["c3rf", "infer", "--graph", "/nonexistent.json", "--out", "/tmp/x.json"]),
            EXIT_USAGE
        );
    }
}
