//! `sievekit`: estimation of variant-specific vaccine effects from two-arm
//! trial CSV data, plus the simulation, bounds and testing machinery.
//!
//! Exit codes: 0 success, 1 usage/configuration, 2 data, 3 degeneracy.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sievekit::bounds::{acece_ratio_bounds, ve_ratio_bounds, IntervalBound, OutcomeProbabilities};
use sievekit::data::{
    ingest_time_fixed, ingest_time_to_event, tabulate, validate, AssumptionChecks, CountTable,
    MarkDichotomizationConfig, SubjectRecord, ValidationReport, Variant,
};
use sievekit::dgp::{
    builtin_scenario, oracle, run_convergence_study, sample, DgpSpec, EstimatorKind, OracleValues,
    SampledData, ScenarioId,
};
use sievekit::estimands::{
    cce, ccs, eet, eie, rr, CcsMode, CiMethod, EetRoute, EstimandOptions, RatioEstimate,
    RiskRatioInterpretation, StratumSelector, ZeroCellPolicy,
};
use sievekit::hypothesis::{
    h0w_test, scaled_infection_falsification, strong_null_test, CiRoute, FalsificationRoute,
    TestResult,
};
use sievekit::survival::{
    cse_cox, cse_k_nonparametric, cumulative_hazard_contrast, discrete_hazards,
};
use sievekit::uncertainty::{
    bootstrap_ci, ccs_ci, eet_trinomial_ci, katz_ci, BootstrapPlan, CcsVarianceMethod,
};
use sievekit::{Error, Result};

use report::{convergence_svg, estimates_csv, summaries_csv, OutDir, RunManifest};

#[derive(Parser)]
#[command(name = "sievekit", version, about = "Variant-specific vaccine effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Input CSV file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for report.json, report.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Master seed for every stochastic step.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Report format written to stdout (files always include both).
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Time-fixed estimands with confidence intervals.
    Analyze(AnalyzeArgs),
    /// Time-to-event estimation (challenge subtype effect, windowed hazards).
    Tte(TteArgs),
    /// Sample scenarios over an n-grid and compare estimators to the oracle.
    Simulate(SimulateArgs),
    /// Partial-identification bounds for the absolute CECE ratio.
    Bounds(BoundsArgs),
    /// Null-hypothesis and falsification tests.
    Test(TestArgs),
    /// Structural validation of a time-fixed CSV.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EstimandArg {
    Ccs,
    Cce,
    Eie,
    Eet,
    Ate1,
    Ate2,
    Cece1,
    Cece2,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Observed,
    Exposure,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CiArg {
    KatzC,
    Decomposition,
    TrinomialF,
    Bootstrap,
    None,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long, value_enum, default_value_t = EstimandArg::Ccs)]
    estimand: EstimandArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Observed)]
    mode: ModeArg,
    /// Report the estimand per level of this covariate as well as marginally.
    #[arg(long)]
    stratify: Option<String>,
    #[arg(long, value_enum, default_value_t = CiArg::KatzC)]
    ci: CiArg,
    #[arg(long, default_value_t = 1000)]
    boot_reps: u32,
    /// Continuity constant added to the cells of a ratio with an empty event
    /// cell (omit to treat empty cells as errors).
    #[arg(long)]
    continuity: Option<f64>,
    /// Treated exposure ratio P(E=1|A=1)/P(E=2|A=1) for the EET.
    #[arg(long)]
    exposure_ratio: Option<f64>,
    /// Untreated infectivity ratio: report EET as EIE times this value.
    #[arg(long)]
    ir0: Option<f64>,
    /// Derive the EET exposure ratio from measured exposure counts.
    #[arg(long)]
    eet_measured: bool,
    /// Dichotomize infected rows by genetic distance at this threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Distance column used with --threshold.
    #[arg(long, default_value = "d")]
    distance_column: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TteMethod {
    Nonparam,
    Cox,
    NelsonAalen,
}

#[derive(Args)]
struct TteArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long, value_enum, default_value_t = TteMethod::Cox)]
    method: TteMethod,
    /// Interval for the nonparametric challenge-subtype estimate.
    #[arg(long)]
    k: Option<u32>,
    /// Window `k1:k2` for cumulative-hazard ratios.
    #[arg(long)]
    window: Option<String>,
    #[arg(long, default_value_t = 1000)]
    boot_reps: u32,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Built-in scenario id or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Comma-separated sample sizes, scientific notation accepted.
    #[arg(long, default_value = "1e3,1e4,1e5")]
    n_grid: String,
    #[arg(long, default_value_t = 20)]
    reps: u32,
    /// Estimators to run (comma-separated: ccs_observed,
    /// ccs_exposure_conditional, cce, eet_assumed_equal, eet_measured,
    /// eet_supplied=R, ate_ratio_1, ate_ratio_2).
    #[arg(long, default_value = "ccs_observed,ccs_exposure_conditional")]
    estimators: String,
    /// File name for the replication-level CSV (inside --out-dir).
    #[arg(long, default_value = "results.csv")]
    out: String,
    /// Also write a convergence plot to this file (inside --out-dir).
    #[arg(long)]
    plot: Option<String>,
    /// Export one sampled dataset of this size instead of running the study.
    #[arg(long)]
    export_n: Option<u64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Four probabilities `P(Y=1|A=0),P(Y=1|A=1),P(Y=2|A=0),P(Y=2|A=1)`.
    #[arg(long)]
    p: Option<String>,
    /// Baseline infection probabilities `b1,b2` for the VE-ratio bounds.
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NullArg {
    StrongSharp,
    H0w,
    ScaledInfection,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FalsificationArg {
    Nonparam,
    Cox,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long, value_enum)]
    null: NullArg,
    /// Single interval for the strong sharp null (default: full horizon).
    #[arg(long)]
    k: Option<u32>,
    /// Comma-separated windows `k1:k2,k3:k4`.
    #[arg(long)]
    windows: Option<String>,
    /// Covariate for the scaled-infection falsification test.
    #[arg(long)]
    covariate: Option<String>,
    #[arg(long, value_enum, default_value_t = FalsificationArg::Nonparam)]
    route: FalsificationArg,
    #[arg(long, default_value_t = 1000)]
    boot_reps: u32,
    /// Use bootstrap intervals for the strong sharp null.
    #[arg(long)]
    bootstrap: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value = "d")]
    distance_column: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit with its own code; the documented usage code is 1
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_thread_cap();
    let outcome = match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Tte(args) => cmd_tte(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Test(args) => cmd_test(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// SIEVEKIT_THREADS caps the rayon pool; it affects speed only, never results.
fn init_thread_cap() {
    if let Ok(v) = std::env::var("SIEVEKIT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ConflictingConfig(_) => 1,
        Error::Parse { .. } | Error::Domain(_) | Error::Io(_) | Error::MissingExposure => 2,
        _ if e.is_degenerate() => 3,
        _ => 2,
    }
}

fn require_data(common: &CommonOpts) -> Result<&Path> {
    common
        .data
        .as_deref()
        .ok_or_else(|| Error::Config("--data is required for this command".into()))
}

fn parse_window(spec: &str) -> Result<(u32, u32)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("window must be k1:k2, got '{spec}'")));
    }
    let k1 = parts[0].parse().map_err(|_| Error::Config(format!("bad window start '{}'", parts[0])))?;
    let k2 = parts[1].parse().map_err(|_| Error::Config(format!("bad window end '{}'", parts[1])))?;
    Ok((k1, k2))
}

fn parse_f64_list(spec: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad {what} value '{s}'"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Config(format!("{what} needs {expected} comma-separated values")));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalyzeReport {
    command: &'static str,
    data: String,
    validation: ValidationReport,
    estimates: Vec<RatioEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    heterogeneity_warning: Option<String>,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let data_path = require_data(&args.common)?;
    let dichotomize = match args.threshold {
        Some(t) => Some(MarkDichotomizationConfig::new(args.distance_column.clone(), t)?),
        None => None,
    };
    let records = ingest_time_fixed(data_path, dichotomize.as_ref())?;
    let validation = validate(&records, AssumptionChecks::default());
    let counts = tabulate(&records, args.stratify.as_deref())?;

    let opts = EstimandOptions {
        zero_cell: match args.continuity {
            Some(c) => ZeroCellPolicy::Continuity(c),
            None => ZeroCellPolicy::Error,
        },
    };
    let route = eet_route(&args)?;

    let mut selectors = vec![StratumSelector::Marginal];
    if let Some(cov) = &args.stratify {
        if let Some(strata) = &counts.strata {
            for level in strata.levels.keys() {
                selectors.push(StratumSelector::level(cov.clone(), level.clone()));
            }
        }
    }

    let mut estimates = Vec::new();
    for selector in &selectors {
        let mut est = point_estimate(&args, &counts, selector, route, &opts)?;
        attach_ci(&args, &records, &counts, selector, route, &opts, &mut est)?;
        estimates.push(est);
    }

    let heterogeneity_warning = heterogeneity(&args, &estimates);
    let manifest = RunManifest::new("analyze", Some(args.common.seed), &[data_path])?;
    emit(
        &args.common,
        AnalyzeReport {
            command: "analyze",
            data: data_path.display().to_string(),
            validation,
            estimates: estimates.clone(),
            heterogeneity_warning,
        },
        Some(estimates_csv(&estimates)),
        manifest,
    )
}

fn eet_route(args: &AnalyzeArgs) -> Result<EetRoute> {
    match (args.exposure_ratio, args.ir0, args.eet_measured) {
        (Some(_), Some(_), _) => Err(Error::ConflictingConfig(
            "--exposure-ratio and --ir0 cannot both be given".into(),
        )),
        (Some(r), None, false) => Ok(EetRoute::Supplied(r)),
        (None, Some(v), false) => Ok(EetRoute::InfectivityRatio(v)),
        (None, None, true) => Ok(EetRoute::Measured),
        (None, None, false) => Ok(EetRoute::AssumedEqual),
        _ => Err(Error::ConflictingConfig(
            "--eet-measured cannot be combined with --exposure-ratio or --ir0".into(),
        )),
    }
}

fn point_estimate(
    args: &AnalyzeArgs,
    counts: &CountTable,
    selector: &StratumSelector,
    route: EetRoute,
    opts: &EstimandOptions,
) -> Result<RatioEstimate> {
    let mode = match args.mode {
        ModeArg::Observed => CcsMode::Observed,
        ModeArg::Exposure => CcsMode::ExposureConditional,
    };
    match args.estimand {
        EstimandArg::Ccs => ccs(counts, selector, mode, opts),
        EstimandArg::Cce => cce(counts, selector, opts),
        EstimandArg::Eie => eie(counts, selector, opts),
        EstimandArg::Eet => eet(counts, selector, route, opts),
        EstimandArg::Ate1 => rr(counts, Variant::One, selector, RiskRatioInterpretation::AteRatio, opts),
        EstimandArg::Ate2 => rr(counts, Variant::Two, selector, RiskRatioInterpretation::AteRatio, opts),
        EstimandArg::Cece1 => rr(counts, Variant::One, selector, RiskRatioInterpretation::Cece, opts),
        EstimandArg::Cece2 => rr(counts, Variant::Two, selector, RiskRatioInterpretation::Cece, opts),
    }
}

fn attach_ci(
    args: &AnalyzeArgs,
    records: &[SubjectRecord],
    counts: &CountTable,
    selector: &StratumSelector,
    route: EetRoute,
    opts: &EstimandOptions,
    est: &mut RatioEstimate,
) -> Result<()> {
    let alpha = args.common.alpha;
    let table = stratum_table(counts, selector)?;
    match args.ci {
        CiArg::None => Ok(()),
        CiArg::KatzC => {
            match args.estimand {
                EstimandArg::Ccs | EstimandArg::Cce | EstimandArg::Eie => {
                    let mode = if args.estimand == EstimandArg::Ccs && args.mode == ModeArg::Exposure {
                        CcsMode::ExposureConditional
                    } else {
                        CcsMode::Observed
                    };
                    let (lo, hi) = ccs_ci(table, est.point, mode, CcsVarianceMethod::Sum, alpha)?;
                    *est = est.clone().with_ci(lo, hi, alpha, CiMethod::KatzC);
                }
                EstimandArg::Eet => {
                    return Err(Error::Config(
                        "use --ci trinomial-f or bootstrap for the EET".into(),
                    ))
                }
                EstimandArg::Ate1 | EstimandArg::Cece1 => {
                    let n = table.excluding_both_exposed();
                    let (lo, hi) = katz_ci(
                        est.point,
                        (n[1][1], n[1].iter().sum(), n[0][1], n[0].iter().sum()),
                        alpha,
                    )?;
                    *est = est.clone().with_ci(lo, hi, alpha, CiMethod::KatzC);
                }
                EstimandArg::Ate2 | EstimandArg::Cece2 => {
                    let n = table.excluding_both_exposed();
                    let (lo, hi) = katz_ci(
                        est.point,
                        (n[1][2], n[1].iter().sum(), n[0][2], n[0].iter().sum()),
                        alpha,
                    )?;
                    *est = est.clone().with_ci(lo, hi, alpha, CiMethod::KatzC);
                }
            }
            Ok(())
        }
        CiArg::Decomposition => {
            if !matches!(args.estimand, EstimandArg::Ccs | EstimandArg::Cce | EstimandArg::Eie) {
                return Err(Error::Config("--ci decomposition applies to ccs, cce or eie".into()));
            }
            if args.mode == ModeArg::Exposure {
                return Err(Error::Config(
                    "the decomposition interval targets the observed-data mode".into(),
                ));
            }
            let (lo, hi) = ccs_ci(table, est.point, CcsMode::Observed, CcsVarianceMethod::Decomposition, alpha)?;
            *est = est.clone().with_ci(lo, hi, alpha, CiMethod::Decomposition);
            Ok(())
        }
        CiArg::TrinomialF => {
            if args.estimand != EstimandArg::Eet {
                return Err(Error::Config("--ci trinomial-f applies to the EET".into()));
            }
            let n = table.excluding_both_exposed();
            let (y1, y2) = (n[1][1], n[1][2]);
            let (lo, hi) = eet_trinomial_ci(y1, y2, alpha)?;
            // interval for y1/y2, rescaled by the constant exposure ratio
            let scale = est.point / (y1 as f64 / y2 as f64);
            *est = est.clone().with_ci(lo * scale, hi * scale, alpha, CiMethod::TrinomialF);
            Ok(())
        }
        CiArg::Bootstrap => {
            let plan = BootstrapPlan::new(args.boot_reps, args.common.seed, alpha)?
                .for_statistic(format!("{:?}", args.estimand).to_lowercase());
            let selector = selector.clone();
            let stratify = args.stratify.clone();
            let estimand = args.estimand;
            let mode = args.mode;
            let (lo, hi, _summary) = bootstrap_ci(records, &plan, move |resample| {
                let counts = tabulate(resample, stratify.as_deref())?;
                let args_like = AnalyzeArgsLike { estimand, mode };
                point_estimate_like(&args_like, &counts, &selector, route, opts).map(|e| e.point)
            })?;
            let (lo, hi) = (lo.min(est.point), hi.max(est.point));
            *est = est.clone().with_ci(lo, hi, alpha, CiMethod::Bootstrap);
            Ok(())
        }
    }
}

// minimal copy of the estimand dispatch for use inside bootstrap closures
struct AnalyzeArgsLike {
    estimand: EstimandArg,
    mode: ModeArg,
}

fn point_estimate_like(
    args: &AnalyzeArgsLike,
    counts: &CountTable,
    selector: &StratumSelector,
    route: EetRoute,
    opts: &EstimandOptions,
) -> Result<RatioEstimate> {
    let mode = match args.mode {
        ModeArg::Observed => CcsMode::Observed,
        ModeArg::Exposure => CcsMode::ExposureConditional,
    };
    match args.estimand {
        EstimandArg::Ccs => ccs(counts, selector, mode, opts),
        EstimandArg::Cce => cce(counts, selector, opts),
        EstimandArg::Eie => eie(counts, selector, opts),
        EstimandArg::Eet => eet(counts, selector, route, opts),
        EstimandArg::Ate1 => rr(counts, Variant::One, selector, RiskRatioInterpretation::AteRatio, opts),
        EstimandArg::Ate2 => rr(counts, Variant::Two, selector, RiskRatioInterpretation::AteRatio, opts),
        EstimandArg::Cece1 => rr(counts, Variant::One, selector, RiskRatioInterpretation::Cece, opts),
        EstimandArg::Cece2 => rr(counts, Variant::Two, selector, RiskRatioInterpretation::Cece, opts),
    }
}

fn stratum_table<'a>(counts: &'a CountTable, selector: &StratumSelector) -> Result<&'a CountTable> {
    match selector {
        StratumSelector::Marginal => Ok(counts),
        StratumSelector::Level { covariate, level } => counts
            .strata
            .as_ref()
            .filter(|s| &s.covariate == covariate)
            .and_then(|s| s.levels.get(level))
            .ok_or_else(|| Error::Config(format!("no stratum {covariate}={level}"))),
    }
}

/// Per-stratum estimates that disagree strongly make the marginal EIE/EET
/// proportionality assumptions suspect; the artifact reports the per-stratum
/// values and flags the spread rather than suppressing anything.
fn heterogeneity(args: &AnalyzeArgs, estimates: &[RatioEstimate]) -> Option<String> {
    if !matches!(args.estimand, EstimandArg::Eie | EstimandArg::Eet) || estimates.len() < 3 {
        return None;
    }
    let levels: Vec<f64> = estimates[1..].iter().map(|e| e.point).collect();
    let max = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 && max / min > 2.0 {
        Some(format!(
            "per-stratum estimates span a {:.2}-fold range; the proportionality assumption behind the marginal value may not hold",
            max / min
        ))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// tte
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TteReport {
    command: &'static str,
    data: String,
    method: String,
    estimates: Vec<RatioEstimate>,
}

fn cmd_tte(args: TteArgs) -> Result<()> {
    let data_path = require_data(&args.common)?;
    let events = ingest_time_to_event(data_path)?;
    let horizon = events.iter().map(|e| e.time).max().unwrap_or(0);
    let alpha = args.common.alpha;
    let mut estimates = Vec::new();
    let method_label;

    match args.method {
        TteMethod::Cox => {
            method_label = "cox";
            let mut est = cse_cox(&events)?;
            let plan = BootstrapPlan::new(args.boot_reps, args.common.seed, alpha)?
                .for_statistic("cse_cox");
            let (lo, hi, _) =
                bootstrap_ci(&events, &plan, |resample| cse_cox(resample).map(|e| e.point))?;
            let point = est.point;
            est = est.with_ci(lo.min(point), hi.max(point), alpha, CiMethod::Bootstrap);
            estimates.push(est);
        }
        TteMethod::Nonparam => {
            method_label = "nonparam";
            match args.k {
                Some(k) => {
                    let hazards = discrete_hazards(&events)?;
                    let mut est = cse_k_nonparametric(&hazards, k)?;
                    let plan = BootstrapPlan::new(args.boot_reps, args.common.seed, alpha)?
                        .for_statistic(format!("cse_k={k}"));
                    let (lo, hi, _) = bootstrap_ci(&events, &plan, move |resample| {
                        let h = discrete_hazards(resample)?;
                        cse_k_nonparametric(&h, k).map(|e| e.point)
                    })?;
                    let point = est.point;
                    est = est.with_ci(lo.min(point), hi.max(point), alpha, CiMethod::Bootstrap);
                    estimates.push(est);
                }
                None => {
                    let window = match &args.window {
                        Some(w) => parse_window(w)?,
                        None => (1, horizon),
                    };
                    estimates.push(window_estimate(&events, window, alpha)?);
                }
            }
        }
        TteMethod::NelsonAalen => {
            method_label = "nelson-aalen";
            let window = match &args.window {
                Some(w) => parse_window(w)?,
                None => (1, horizon),
            };
            estimates.push(window_estimate(&events, window, alpha)?);
        }
    }

    let manifest = RunManifest::new("tte", Some(args.common.seed), &[data_path])?;
    emit(
        &args.common,
        TteReport {
            command: "tte",
            data: data_path.display().to_string(),
            method: method_label.to_string(),
            estimates: estimates.clone(),
        },
        Some(estimates_csv(&estimates)),
        manifest,
    )
}

fn window_estimate(
    events: &[sievekit::EventRecord],
    window: (u32, u32),
    alpha: f64,
) -> Result<RatioEstimate> {
    use sievekit::estimands::{Assumption, EstimandTag};
    let contrast = cumulative_hazard_contrast(events, window)?;
    let z = sievekit::special::normal_quantile(1.0 - alpha / 2.0);
    let half = z * contrast.log_variance.sqrt();
    let mut est = RatioEstimate {
        estimand: EstimandTag::CumulativeHazardRatio,
        stratum: "marginal".into(),
        point: contrast.ratio,
        ci: None,
        alpha: None,
        method: CiMethod::None,
        assumptions: vec![
            Assumption::TteStandardRct,
            Assumption::TteExposureNecessity,
            Assumption::TteNoCrossInfectivity,
            Assumption::ExposureRatioOfExposed,
            Assumption::ScaledNewInfection,
            Assumption::IndependentCensoring,
        ],
        route: Some(format!("window={}:{}", window.0, window.1)),
    };
    est = est.with_ci(contrast.ratio * (-half).exp(), contrast.ratio * half.exp(), alpha, CiMethod::KatzC);
    Ok(est)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    scenario: String,
    oracle: OracleValues,
    summaries: Vec<sievekit::dgp::SummaryRow>,
}

fn load_scenario(spec: &str) -> Result<DgpSpec> {
    if let Ok(id) = ScenarioId::from_str(spec) {
        return Ok(builtin_scenario(id));
    }
    let path = Path::new(spec);
    if path.exists() {
        let body = std::fs::read_to_string(path)?;
        let parsed: DgpSpec = serde_json::from_str(&body)
            .map_err(|e| Error::Parse { line: 1, msg: format!("scenario file: {e}") })?;
        parsed.validate()?;
        return Ok(parsed);
    }
    Err(Error::Config(format!("'{spec}' is neither a builtin scenario nor a file")))
}

fn parse_estimators(spec: &str) -> Result<Vec<EstimatorKind>> {
    spec.split(',')
        .map(|s| {
            let s = s.trim();
            match s {
                "ccs_observed" => Ok(EstimatorKind::CcsObserved),
                "ccs_exposure_conditional" => Ok(EstimatorKind::CcsExposureConditional),
                "cce" => Ok(EstimatorKind::Cce),
                "eet_assumed_equal" => Ok(EstimatorKind::EetAssumedEqual),
                "eet_measured" => Ok(EstimatorKind::EetMeasured),
                "ate_ratio_1" => Ok(EstimatorKind::AteRatio1),
                "ate_ratio_2" => Ok(EstimatorKind::AteRatio2),
                _ => {
                    if let Some(r) = s.strip_prefix("eet_supplied=") {
                        let ratio: f64 = r
                            .parse()
                            .map_err(|_| Error::Config(format!("bad exposure ratio '{r}'")))?;
                        Ok(EstimatorKind::EetSupplied(ratio))
                    } else {
                        Err(Error::Config(format!("unknown estimator '{s}'")))
                    }
                }
            }
        })
        .collect()
}

fn parse_n_grid(spec: &str) -> Result<Vec<u64>> {
    spec.split(',')
        .map(|s| {
            // scientific notation like 1e3 is accepted alongside plain integers
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad grid size '{s}'")))?;
            if !(1.0..=1e9).contains(&v) {
                return Err(Error::Config(format!("grid size out of range: '{s}'")));
            }
            Ok(v.round() as u64)
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let spec = load_scenario(&args.scenario)?;
    let oracle_values = oracle(&spec);
    let out = OutDir::new(&args.common.out_dir)?;

    if let Some(n) = args.export_n {
        // export one dataset in the canonical CSV layout
        let sampled = sample(&spec, n, args.common.seed)?;
        let mut buf = Vec::new();
        match &sampled {
            SampledData::Subjects(records) => sievekit::data::emit_time_fixed_csv(records, &mut buf)?,
            SampledData::Events(events) => sievekit::data::emit_time_to_event_csv(events, &mut buf)?,
        }
        out.write_text(&args.out, std::str::from_utf8(&buf).expect("utf8 csv"))?;
        let manifest = RunManifest::new("simulate", Some(args.common.seed), &[])?;
        out.write_json("manifest.json", &manifest)?;
        println!("wrote {} rows to {}", sampled.len(), out.path(&args.out).display());
        return Ok(());
    }

    let estimators = parse_estimators(&args.estimators)?;
    let n_grid = parse_n_grid(&args.n_grid)?;
    let study = run_convergence_study(&spec, &n_grid, args.reps, &estimators, args.common.seed)?;

    let mut rows_csv = String::from("n,replication,estimator,estimate,error\n");
    for r in &study.rows {
        rows_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            r.replication,
            r.estimator,
            r.estimate.map(|v| v.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default()
        ));
    }
    out.write_text(&args.out, &rows_csv)?;

    if let Some(plot) = &args.plot {
        let mut oracle_lines = Vec::new();
        for kind in &estimators {
            let value = match kind {
                EstimatorKind::CcsObserved | EstimatorKind::Cce => oracle_values.observed_limit_ccs,
                EstimatorKind::CcsExposureConditional => oracle_values.true_ccs,
                EstimatorKind::EetAssumedEqual => oracle_values.observed_limit_eet,
                EstimatorKind::EetMeasured | EstimatorKind::EetSupplied(_) => oracle_values.true_eet,
                EstimatorKind::AteRatio1 | EstimatorKind::AteRatio2 => continue,
            };
            oracle_lines.push((kind.label(), value));
        }
        out.write_text(plot, &convergence_svg(&study.summaries, &oracle_lines))?;
    }

    let manifest = RunManifest::new("simulate", Some(args.common.seed), &[])?;
    emit(
        &args.common,
        SimulateReport {
            command: "simulate",
            scenario: study.scenario.clone(),
            oracle: oracle_values,
            summaries: study.summaries.clone(),
        },
        Some(summaries_csv(&study.summaries)),
        manifest,
    )
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundsReport {
    command: &'static str,
    probabilities: OutcomeProbabilities,
    bounds: Vec<IntervalBound>,
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let probabilities = match (&args.p, &args.common.data) {
        (Some(_), Some(_)) => {
            return Err(Error::ConflictingConfig("give either --p or --data, not both".into()))
        }
        (Some(p), None) => {
            let v = parse_f64_list(p, 4, "--p")?;
            OutcomeProbabilities::new([v[0], v[1], v[2], v[3]])?
        }
        (None, Some(path)) => {
            let records = ingest_time_fixed(path, None)?;
            let counts = tabulate(&records, None)?;
            OutcomeProbabilities::from_counts(&counts)?
        }
        (None, None) => return Err(Error::Config("give --p or --data".into())),
    };

    let mut bounds = vec![acece_ratio_bounds(probabilities)?];
    if let Some(baseline) = &args.baseline {
        let b = parse_f64_list(baseline, 2, "--baseline")?;
        bounds.push(ve_ratio_bounds(probabilities, b[0], b[1], "supplied")?);
    }

    let inputs: Vec<&Path> = args.common.data.as_deref().into_iter().collect();
    let manifest = RunManifest::new("bounds", None, &inputs)?;
    let mut csv = String::from("target,lo,hi,point_identified\n");
    for b in &bounds {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            serde_json::to_value(b.target).unwrap().as_str().unwrap(),
            b.lo,
            b.hi,
            b.point_identified
        ));
    }
    emit(
        &args.common,
        BoundsReport { command: "bounds", probabilities, bounds },
        Some(csv),
        manifest,
    )
}

// ---------------------------------------------------------------------------
// test
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TestReport {
    command: &'static str,
    data: String,
    result: TestResult,
}

fn cmd_test(args: TestArgs) -> Result<()> {
    let data_path = require_data(&args.common)?;
    let events = ingest_time_to_event(data_path)?;
    let horizon = events.iter().map(|e| e.time).max().unwrap_or(0);
    let alpha = args.common.alpha;

    let result = match args.null {
        NullArg::StrongSharp => {
            let window = match (&args.k, &args.windows) {
                (Some(_), Some(_)) => {
                    return Err(Error::ConflictingConfig("give --k or --windows, not both".into()))
                }
                (Some(k), None) => (*k, *k),
                (None, Some(w)) => parse_window(w)?,
                (None, None) => (1, horizon),
            };
            let route = if args.bootstrap {
                CiRoute::Bootstrap { replicates: args.boot_reps, seed: args.common.seed }
            } else {
                CiRoute::Analytic
            };
            strong_null_test(&events, window, alpha, route)?
        }
        NullArg::H0w => {
            let spec = args
                .windows
                .as_deref()
                .ok_or_else(|| Error::Config("--windows is required for the composite null".into()))?;
            let windows: Vec<(u32, u32)> = spec.split(',').map(parse_window).collect::<Result<_>>()?;
            h0w_test(&events, &windows, alpha)?
        }
        NullArg::ScaledInfection => {
            let covariate = args
                .covariate
                .as_deref()
                .ok_or_else(|| Error::Config("--covariate is required for the falsification test".into()))?;
            let route = match args.route {
                FalsificationArg::Nonparam => FalsificationRoute::Nonparametric {
                    replicates: args.boot_reps,
                    seed: args.common.seed,
                },
                FalsificationArg::Cox => FalsificationRoute::Cox,
            };
            scaled_infection_falsification(&events, covariate, alpha, route)?
        }
    };

    let mut csv = String::from("label,statistic,ci_low,ci_high,reject,degenerate\n");
    for d in &result.detail {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.label, d.statistic, d.ci.0, d.ci.1, d.reject, d.degenerate
        ));
    }
    let manifest = RunManifest::new("test", Some(args.common.seed), &[data_path])?;
    emit(
        &args.common,
        TestReport { command: "test", data: data_path.display().to_string(), result },
        Some(csv),
        manifest,
    )
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ValidateReport {
    command: &'static str,
    data: String,
    records: usize,
    validation: ValidationReport,
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let data_path = require_data(&args.common)?;
    let dichotomize = match args.threshold {
        Some(t) => Some(MarkDichotomizationConfig::new(args.distance_column.clone(), t)?),
        None => None,
    };
    let records = ingest_time_fixed(data_path, dichotomize.as_ref())?;
    let validation = validate(&records, AssumptionChecks::default());
    let mut csv = String::from("rule,line,detail\n");
    for v in &validation.violations {
        csv.push_str(&format!("{},{},{}\n", v.rule, v.line, v.detail));
    }
    let manifest = RunManifest::new("validate", None, &[data_path])?;
    emit(
        &args.common,
        ValidateReport {
            command: "validate",
            data: data_path.display().to_string(),
            records: records.len(),
            validation,
        },
        Some(csv),
        manifest,
    )
}

// ---------------------------------------------------------------------------

fn emit<T: Serialize>(
    common: &CommonOpts,
    report: T,
    csv: Option<String>,
    manifest: RunManifest,
) -> Result<()> {
    let out = OutDir::new(&common.out_dir)?;
    let json = out.write_json("report.json", &report)?;
    if let Some(csv) = &csv {
        out.write_text("report.csv", csv)?;
    }
    out.write_json("manifest.json", &manifest)?;
    match common.format {
        Format::Json => println!("{json}"),
        Format::Csv => {
            if let Some(csv) = csv {
                print!("{csv}");
            } else {
                println!("{json}");
            }
        }
    }
    Ok(())
}
