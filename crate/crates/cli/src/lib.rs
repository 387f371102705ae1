//! Command-line front end for shortfall-risk estimation, the linear
//! minimization oracle, bisection training and the verification suites.

pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ubsr_core::estimator::{sample_bracket, TailSpec};
use ubsr_core::lmo::{self, LmoSettings};
use ubsr_core::optimizer::{self, AlphaStart, BisectionConfig, BisectionTrace};
use ubsr_core::rng::RNG_IDENTITY;
use ubsr_core::verify::{self, ConcentrationOutcome, ConcentrationSetup};
use ubsr_core::{estimate_ubsr, Bracket, DistributionModel, LinearModel, SrProblem, UbsrError, Utility, VerificationReport};

use crate::io::{format_f64, input_error, load_dataset, load_samples, to_json, write_atomic, InputError, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "UBSR_SEED";
/// When set, replaces the wall-clock timestamp in metadata.
pub const EPOCH_ENV: &str = "SOURCE_DATE_EPOCH";

#[derive(Debug, Parser, Serialize)]
#[command(name = "ubsr", version, about = "Utility-based shortfall risk: estimation, regression and checks")]
pub struct Cli {
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for Monte-Carlo suites (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Exact shortfall risk of a distribution.
    Analytic(AnalyticArgs),
    /// Sample-average estimate from a CSV of losses or draws from a distribution.
    Estimate(EstimateArgs),
    /// Solve the surrogate regression problem at a fixed level.
    Lmo(LmoArgs),
    /// Bisection training of a shortfall-risk optimal linear model.
    Train(TrainArgs),
    /// Monte-Carlo coverage of the concentration bound.
    Concentration(ConcentrationArgs),
    /// Run structural checks.
    Verify(VerifyArgs),
}

fn parse_bracket(s: &str) -> std::result::Result<Bracket, String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("lo {lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("hi {hi:?}: {e}"))?;
    Bracket::new(lo, hi).map_err(|e| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyticArgs {
    /// uniform:lo,hi | gauss:mu,sigma | exp:rate | point:z | discrete:v1:p1,... | mix:w1*<spec>|w2*<spec>
    #[arg(long)]
    pub dist: DistributionModel,
    /// linear | hinge | blend:a=<r>,tau=<r>
    #[arg(long, default_value = "blend:a=0.5,tau=1")]
    pub utility: Utility,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// CSV file with a single column `z`, or a distribution spec to sample from.
    #[arg(long)]
    pub input: String,
    /// Sample size when `--input` is a distribution.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value = "blend:a=0.5,tau=1")]
    pub utility: Utility,
    #[arg(long)]
    pub lambda: f64,
    /// Initial bracket lo,hi; defaults to [min - 1, max + 1] of the sample.
    #[arg(long, value_parser = parse_bracket, allow_hyphen_values = true)]
    pub bracket: Option<Bracket>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LmoArgs {
    /// CSV with header x1,...,xd,y.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "blend:a=0.5,tau=1")]
    pub utility: Utility,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long)]
    pub norm_bound: Option<f64>,
    #[arg(long, default_value_t = LmoSettings::default().grad_tol)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = LmoSettings::default().max_iter)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaStartArg {
    Zero,
    LossFloor,
}

impl From<AlphaStartArg> for AlphaStart {
    fn from(a: AlphaStartArg) -> Self {
        match a {
            AlphaStartArg::Zero => AlphaStart::Zero,
            AlphaStartArg::LossFloor => AlphaStart::LossFloor,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// CSV with header x1,...,xd,y; the first half trains, the second half estimates.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "blend:a=0.5,tau=1")]
    pub utility: Utility,
    #[arg(long)]
    pub lambda: f64,
    /// Number of bisection iterations.
    #[arg(long = "T", default_value_t = 30)]
    pub iterations: usize,
    #[arg(long)]
    pub norm_bound: Option<f64>,
    /// Shuffle rows with this seed before splitting.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Return the iterate with the smallest estimated risk instead of the last one.
    #[arg(long)]
    pub best_so_far: bool,
    #[arg(long, default_value_t = 0.0)]
    pub beta_margin: f64,
    #[arg(long, value_enum, default_value_t = AlphaStartArg::LossFloor)]
    pub alpha_start: AlphaStartArg,
    #[arg(long, default_value_t = LmoSettings::default().grad_tol)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = LmoSettings::default().max_iter)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ConcentrationArgs {
    #[arg(long, default_value = "uniform:0,10")]
    pub dist: DistributionModel,
    #[arg(long, default_value = "hinge")]
    pub utility: Utility,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    /// subgauss:sigma | subexp:K; defaults to the certificate of `--dist`.
    #[arg(long)]
    pub tail: Option<TailSpec>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub delta_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Analysis bracket lo,hi; defaults to SR +/- 2 standard deviations.
    #[arg(long, value_parser = parse_bracket, allow_hyphen_values = true)]
    pub bracket: Option<Bracket>,
    /// Per-trial CSV; a `.meta.json` sidecar is written next to it.
    #[arg(long, default_value = "concentration.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Nonconvexity,
    Pseudolinear,
    Gradient,
    Randomization,
    Concentration,
    All,
}

/// Overrides apply to every selected check that uses them; unset values take
/// each check's defaults.
#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = CheckKind::All)]
    pub check: CheckKind,
    /// First distribution (pseudolinear, randomization) or base law (gradient).
    #[arg(long)]
    pub f1: Option<DistributionModel>,
    /// Second distribution, or the direction law for the gradient check.
    #[arg(long)]
    pub f2: Option<DistributionModel>,
    #[arg(long)]
    pub utility: Option<Utility>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4,1e-5")]
    pub eps_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub alphas: Vec<f64>,
    /// Law for the concentration check.
    #[arg(long)]
    pub dist: Option<DistributionModel>,
    #[arg(long)]
    pub tail: Option<TailSpec>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub delta_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Provenance block written with every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub seed: u64,
    pub rng: String,
    pub threads: usize,
    pub flags: Value,
    pub timestamp_unix: u64,
}

impl Metadata {
    fn for_run(cli: &Cli) -> Result<Self> {
        let timestamp_unix = match std::env::var(EPOCH_ENV) {
            Ok(s) => s.trim().parse().map_err(|_| input_error(format!("{EPOCH_ENV}={s:?} is not an integer")))?,
            Err(_) => SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        Ok(Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cli.seed,
            rng: RNG_IDENTITY.to_string(),
            threads: rayon::current_num_threads(),
            flags: serde_json::to_value(&cli.command)?,
            timestamp_unix,
        })
    }
}

/// What a subcommand produced: a JSON document for stdout and whether its checks held.
pub struct Outcome {
    pub document: Value,
    pub passed: bool,
}

impl Outcome {
    fn ok(document: Value) -> Self {
        Outcome { document, passed: true }
    }
}

fn with_metadata(mut doc: Value, meta: &Metadata) -> Result<Value> {
    if let Value::Object(map) = &mut doc {
        map.insert("metadata".into(), serde_json::to_value(meta)?);
    }
    Ok(doc)
}

fn emit(path: Option<&Path>, doc: &Value) -> Result<()> {
    if let Some(p) = path {
        write_atomic(p, &to_json(doc)?)?;
    }
    Ok(())
}

fn analytic(args: &AnalyticArgs, meta: &Metadata) -> Result<Outcome> {
    let ubsr = args.dist.ubsr_exact(&args.utility, args.lambda)?;
    let doc = with_metadata(
        json!({
            "ubsr": ubsr,
            "dist": args.dist,
            "utility": args.utility,
            "lambda": args.lambda,
        }),
        meta,
    )?;
    emit(args.out.as_deref(), &doc)?;
    Ok(Outcome::ok(doc))
}

fn estimate(args: &EstimateArgs, meta: &Metadata) -> Result<Outcome> {
    let path = Path::new(&args.input);
    let (samples, source) = if path.is_file() {
        (load_samples(path)?, json!({ "csv": args.input }))
    } else {
        let dist: DistributionModel = args.input.parse().map_err(|e| {
            input_error(format!(
                "--input {:?} is neither a readable file nor a distribution spec: {e}",
                args.input
            ))
        })?;
        (dist.sample(args.n, meta.seed)?, json!({ "dist": dist, "n": args.n, "seed": meta.seed }))
    };
    let bracket = args.bracket.unwrap_or_else(|| sample_bracket(&samples.values));
    let est = estimate_ubsr(&samples.values, &args.utility, args.lambda, bracket, args.tol)?;
    if est.expansions > 0 {
        log::warn!(
            "bracket [{}, {}] expanded {} times to [{}, {}]",
            bracket.lo,
            bracket.hi,
            est.expansions,
            est.bracket_used.lo,
            est.bracket_used.hi
        );
    }
    let doc = with_metadata(
        json!({
            "estimate": est.estimate,
            "iterations": est.iterations,
            "bracket_requested": bracket,
            "bracket_used": est.bracket_used,
            "expansions": est.expansions,
            "q_at_estimate": est.q_at_estimate,
            "n": samples.len(),
            "source": source,
        }),
        meta,
    )?;
    emit(args.out.as_deref(), &doc)?;
    Ok(Outcome::ok(doc))
}

fn lmo_cmd(args: &LmoArgs, meta: &Metadata) -> Result<Outcome> {
    let data = load_dataset(&args.data)?;
    let settings = LmoSettings {
        grad_tol: args.grad_tol,
        max_iter: args.max_iter,
    };
    let res = lmo::solve(&data, &args.utility, args.gamma, args.norm_bound, &settings)?;
    let (b1, b2) = data.data_bounds();
    let doc = with_metadata(
        json!({
            "weights": res.model.weights,
            "objective": res.objective,
            "iterations": res.iterations,
            "grad_norm": res.grad_norm,
            "norm_bound": args.norm_bound,
            "data_bounds": { "feature_norm": b1, "target_abs": b2 },
        }),
        meta,
    )?;
    emit(args.out.as_deref(), &doc)?;
    Ok(Outcome::ok(doc))
}

/// The persisted output of `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub weights: Vec<f64>,
    pub norm_bound: Option<f64>,
    pub utility: Utility,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub shuffle_seed: Option<u64>,
    pub alpha0: f64,
    pub beta0: f64,
    pub final_ubsr_estimate: f64,
    pub warnings: Vec<String>,
    pub metadata: Metadata,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> Result<LinearModel> {
        Ok(LinearModel::new(self.weights.clone(), self.norm_bound)?)
    }
}

fn trace_table(trace: &BisectionTrace) -> Table {
    Table {
        header: vec!["t", "alpha", "beta", "gamma_t", "gamma_hat", "branch", "lmo_objective", "lmo_iters"],
        rows: trace
            .records
            .iter()
            .map(|r| {
                vec![
                    r.t.to_string(),
                    format_f64(r.alpha),
                    format_f64(r.beta),
                    format_f64(r.gamma_t),
                    format_f64(r.gamma_hat),
                    r.branch.to_string(),
                    format_f64(r.lmo_objective),
                    r.lmo_iters.to_string(),
                ]
            })
            .collect(),
    }
}

fn train_cmd(args: &TrainArgs, meta: &Metadata) -> Result<Outcome> {
    let data = load_dataset(&args.data)?;
    let (train_half, estimate_half) = optimizer::split_dataset(&data, args.shuffle_seed)?;
    let cfg = BisectionConfig {
        norm_bound: args.norm_bound,
        lmo: LmoSettings {
            grad_tol: args.grad_tol,
            max_iter: args.max_iter,
        },
        beta_margin: args.beta_margin,
        alpha_start: args.alpha_start.into(),
        best_so_far: args.best_so_far,
        ..BisectionConfig::new(args.iterations, args.lambda, args.utility)
    };
    cfg.validate().map_err(|e| input_error(e.to_string()))?;
    let (model, trace) = optimizer::train(&train_half, &estimate_half, &cfg)?;
    if let Err(msg) = trace.check_invariants() {
        anyhow::bail!("bisection trace violates its invariants: {msg}");
    }
    let file = ModelFile {
        weights: model.weights.clone(),
        norm_bound: model.norm_bound,
        utility: args.utility,
        lambda: args.lambda,
        iterations: args.iterations,
        shuffle_seed: args.shuffle_seed,
        alpha0: trace.alpha0,
        beta0: trace.beta0,
        final_ubsr_estimate: trace.final_ubsr_estimate,
        warnings: trace.warnings.clone(),
        metadata: meta.clone(),
    };
    write_atomic(&args.out, &to_json(&file)?)?;
    if let Some(p) = &args.trace {
        write_atomic(p, &trace_table(&trace).to_bytes()?)?;
    }
    Ok(Outcome::ok(serde_json::to_value(&file)?))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_else(|| OsString::from("concentration"));
    name.push(".meta.json");
    out.with_file_name(name)
}

fn coverage_table(outcome: &ConcentrationOutcome) -> Table {
    Table {
        header: vec!["n", "delta", "trial", "abs_error", "bound", "covered"],
        rows: outcome
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    format_f64(r.delta),
                    r.trial.to_string(),
                    format_f64(r.abs_error),
                    format_f64(r.bound),
                    r.covered.to_string(),
                ]
            })
            .collect(),
    }
}

struct SuiteInput<'a> {
    dist: &'a DistributionModel,
    utility: &'a Utility,
    lambda: f64,
    tail: Option<TailSpec>,
    bracket: Option<Bracket>,
    n_grid: &'a [usize],
    delta_grid: &'a [f64],
    trials: usize,
    seed: u64,
}

fn run_suite(input: SuiteInput<'_>) -> Result<ConcentrationOutcome> {
    let tail = match input.tail {
        Some(t) => t,
        None => TailSpec::certified_for(input.dist).ok_or_else(|| {
            input_error(format!("no tail certificate known for {}; pass --tail", input.dist))
        })?,
    };
    let bracket = match input.bracket {
        Some(b) => b,
        None => SrProblem::default_bracket(input.dist, input.utility, input.lambda)?,
    };
    let problem = SrProblem::for_distribution(input.dist, input.utility, input.lambda, bracket)?;
    Ok(verify::run_concentration_suite(&ConcentrationSetup {
        tail,
        dist: input.dist,
        utility: input.utility,
        problem,
        n_grid: input.n_grid,
        delta_grid: input.delta_grid,
        trials: input.trials,
        seed: input.seed,
    })?)
}

fn concentration_cmd(args: &ConcentrationArgs, meta: &Metadata) -> Result<Outcome> {
    let outcome = run_suite(SuiteInput {
        dist: &args.dist,
        utility: &args.utility,
        lambda: args.lambda,
        tail: args.tail,
        bracket: args.bracket,
        n_grid: &args.n_grid,
        delta_grid: &args.delta_grid,
        trials: args.trials,
        seed: meta.seed,
    })?;
    write_atomic(&args.out, &coverage_table(&outcome).to_bytes()?)?;
    let doc = with_metadata(
        json!({
            "csv": args.out,
            "report": outcome.report,
            "cells": outcome.cells,
            "median_error_slope": outcome.median_error_slope,
        }),
        meta,
    )?;
    write_atomic(&sidecar_path(&args.out), &to_json(&doc)?)?;
    Ok(Outcome {
        passed: outcome.report.passed,
        document: doc,
    })
}

fn uniform(lo: f64, hi: f64) -> Result<DistributionModel> {
    Ok(DistributionModel::uniform(lo, hi)?)
}

fn verify_cmd(args: &VerifyArgs, meta: &Metadata) -> Result<Outcome> {
    let selected: Vec<CheckKind> = match args.check {
        CheckKind::All => vec![
            CheckKind::Nonconvexity,
            CheckKind::Pseudolinear,
            CheckKind::Gradient,
            CheckKind::Randomization,
            CheckKind::Concentration,
        ],
        k => vec![k],
    };
    let pick = |given: &Option<DistributionModel>, lo: f64, hi: f64| -> Result<DistributionModel> {
        match given {
            Some(d) => Ok(d.clone()),
            None => uniform(lo, hi),
        }
    };
    let mut reports: Vec<VerificationReport> = Vec::new();
    for kind in selected {
        let report = match kind {
            CheckKind::Nonconvexity => verify::check_nonconvexity()?,
            CheckKind::Pseudolinear => verify::check_pseudolinearity(
                &pick(&args.f1, 0.0, 10.0)?,
                &pick(&args.f2, 10.0, 20.0)?,
                &args.utility.unwrap_or(Utility::Hinge),
                args.lambda.unwrap_or(2.0),
                args.grid,
            )?,
            CheckKind::Gradient => verify::check_gradient(
                &pick(&args.f1, 0.0, 10.0)?,
                &pick(&args.f2, 10.0, 20.0)?,
                &args.utility.unwrap_or(Utility::SmoothHingeBlend { a: 0.9, tau: 0.5 }),
                args.lambda.unwrap_or(2.0),
                &args.eps_grid,
            )?,
            CheckKind::Randomization => verify::check_randomization_invariance(
                &pick(&args.f1, 0.0, 10.0)?,
                &pick(&args.f2, 0.0, 4.0)?,
                &args.utility.unwrap_or(Utility::Hinge),
                args.lambda.unwrap_or(6.0),
                &args.alphas,
            )?,
            CheckKind::Concentration => {
                run_suite(SuiteInput {
                    dist: &pick(&args.dist, 0.0, 10.0)?,
                    utility: &args.utility.unwrap_or(Utility::Hinge),
                    lambda: args.lambda.unwrap_or(2.0),
                    tail: args.tail,
                    bracket: None,
                    n_grid: &args.n_grid,
                    delta_grid: &args.delta_grid,
                    trials: args.trials,
                    seed: meta.seed,
                })?
                .report
            }
            CheckKind::All => unreachable!("expanded above"),
        };
        let status = if report.skipped {
            "SKIP"
        } else if report.passed {
            "PASS"
        } else {
            "FAIL"
        };
        eprintln!("[{status}] {}: {}", report.name, report.message);
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed);
    let doc = with_metadata(json!({ "passed": passed, "checks": reports }), meta)?;
    emit(args.report.as_deref(), &doc)?;
    Ok(Outcome { document: doc, passed })
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    if cli.threads > 0 {
        // Fails only if the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let meta = Metadata::for_run(cli)?;
    match &cli.command {
        Command::Analytic(a) => analytic(a, &meta),
        Command::Estimate(a) => estimate(a, &meta),
        Command::Lmo(a) => lmo_cmd(a, &meta),
        Command::Train(a) => train_cmd(a, &meta),
        Command::Concentration(a) => concentration_cmd(a, &meta),
        Command::Verify(a) => verify_cmd(a, &meta),
    }
}

/// Exit code for an error: 2 for bad input, 1 for everything else.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<InputError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<UbsrError>() {
        Some(UbsrError::InvalidParameter(_) | UbsrError::Parse { .. } | UbsrError::DimensionMismatch { .. }) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `argv`, runs it, prints the result document and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli).and_then(|o| Ok((to_json(&o.document).context("serializing the result")?, o.passed))) {
        Ok((bytes, passed)) => {
            print!("{}", String::from_utf8_lossy(&bytes));
            if passed {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}
