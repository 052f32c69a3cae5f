//! Time-fixed identification functionals: the treatment-effect ratio shared
//! by the ATE ratio and the relative CECE, the CCS and CCE in observed-data
//! and exposure-measured modes, and the EIE/EET family with its explicit
//! exposure-ratio routes.
//!
//! Every estimator returns a [`RatioEstimate`] carrying the identification
//! assumptions it relied on; the ledger is data, not documentation, so
//! reports downstream are self-describing. Points are computed from count
//! tables only, which makes every estimate exactly reproducible from the
//! published table.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, CountTable, Exposure, Variant};
use crate::error::{Error, Result};

/// Identification assumptions an estimate relies on. The `A` ids are the
/// core trial assumptions (unique exposure, no effect on exposure, randomized
/// assignment, exposure necessity, no cross-infectivity, stable exposure
/// ratios); the `S` ids cover the exposure-intervention and time-to-event
/// extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    #[serde(rename = "A1")]
    UniqueExposure,
    #[serde(rename = "A2")]
    NoEffectOnExposure,
    #[serde(rename = "A3")]
    StandardRct,
    #[serde(rename = "A4")]
    ExposureNecessity,
    #[serde(rename = "A5")]
    NoCrossInfectivity,
    #[serde(rename = "A6")]
    NoRelativeEffectOnExposureRatios,
    #[serde(rename = "S-cond-no-effect-on-exposure")]
    CondNoEffectOnExposure,
    #[serde(rename = "S-generalised-exposure-rct")]
    GeneralisedExposureRct,
    #[serde(rename = "S-exposure-rct")]
    ExposureRct,
    #[serde(rename = "S-equal-exposure-of-the-treated")]
    EqualTreatedExposure,
    #[serde(rename = "S-proportional-potential-outcomes")]
    ProportionalPotentialOutcomes,
    #[serde(rename = "S-general-proportional-potential-outcomes")]
    GeneralProportionalPotentialOutcomes,
    #[serde(rename = "S-equal-infectivity-of-the-untreated")]
    EqualInfectivityUntreated,
    #[serde(rename = "S1")]
    TteStandardRct,
    #[serde(rename = "S2")]
    TteExposureNecessity,
    #[serde(rename = "S3")]
    TteNoCrossInfectivity,
    #[serde(rename = "S4")]
    ExposureRatioOfExposed,
    #[serde(rename = "S5")]
    ScaledNewInfection,
    #[serde(rename = "S-independent-censoring")]
    IndependentCensoring,
}

/// Which estimand a [`RatioEstimate`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandTag {
    AteRatio1,
    AteRatio2,
    Cece1,
    Cece2,
    Ccs,
    Cce,
    Eie,
    Eet,
    CceK,
    CseK,
    CseCox,
    CumulativeHazardRatio,
}

/// Confidence-interval construction attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    None,
    KatzC,
    Decomposition,
    TrinomialF,
    Bootstrap,
}

/// Point estimate plus optional confidence interval and the assumption
/// ledger, the universal output of every estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub estimand: EstimandTag,
    pub stratum: String,
    pub point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub method: CiMethod,
    pub assumptions: Vec<Assumption>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
}

impl RatioEstimate {
    fn new(estimand: EstimandTag, stratum: &StratumSelector, point: f64, assumptions: Vec<Assumption>) -> Self {
        RatioEstimate {
            estimand,
            stratum: stratum.label(),
            point,
            ci: None,
            alpha: None,
            method: CiMethod::None,
            assumptions,
            route: None,
        }
    }

    /// Attaches a confidence interval; panics if it does not bracket the point.
    pub fn with_ci(mut self, lo: f64, hi: f64, alpha: f64, method: CiMethod) -> Self {
        assert!(
            lo <= self.point && self.point <= hi,
            "interval [{lo}, {hi}] does not contain point {}",
            self.point
        );
        self.ci = Some((lo, hi));
        self.alpha = Some(alpha);
        self.method = method;
        self
    }
}

/// Selects a covariate level of a stratified table, or the marginal table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StratumSelector {
    Marginal,
    Level { covariate: String, level: String },
}

impl StratumSelector {
    pub fn level(covariate: impl Into<String>, level: impl Into<String>) -> Self {
        StratumSelector::Level { covariate: covariate.into(), level: level.into() }
    }

    pub fn label(&self) -> String {
        match self {
            StratumSelector::Marginal => "marginal".to_string(),
            StratumSelector::Level { covariate, level } => format!("{covariate}={level}"),
        }
    }

    pub fn is_marginal(&self) -> bool {
        matches!(self, StratumSelector::Marginal)
    }

    fn select<'a>(&self, counts: &'a CountTable) -> Result<&'a CountTable> {
        match self {
            StratumSelector::Marginal => Ok(counts),
            StratumSelector::Level { covariate, level } => {
                let strata = counts.strata.as_ref().ok_or_else(|| {
                    Error::Config(format!("table is not stratified, cannot select {covariate}={level}"))
                })?;
                if strata.covariate != *covariate {
                    return Err(Error::Config(format!(
                        "table is stratified by '{}', not '{covariate}'",
                        strata.covariate
                    )));
                }
                strata.levels.get(level).ok_or_else(|| {
                    Error::Config(format!("no stratum '{level}' for covariate '{covariate}'"))
                })
            }
        }
    }
}

/// What to do when a ratio has an empty event cell: refuse (the default; the
/// identification results assume positivity) or add a continuity constant to
/// all four cells of the affected 2x2 table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum ZeroCellPolicy {
    #[default]
    Error,
    Continuity(f64),
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EstimandOptions {
    pub zero_cell: ZeroCellPolicy,
}

/// Interpretation of the shared risk-ratio functional P(Y=j|A=1)/P(Y=j|A=0):
/// the ATE ratio needs randomization only, the relative CECE needs the full
/// exposure assumption set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskRatioInterpretation {
    AteRatio,
    Cece,
}

/// Estimation mode for the CCS: from observed outcomes alone, or conditioning
/// on the measured exposure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcsMode {
    Observed,
    ExposureConditional,
}

/// How the EET obtains the unidentified treated exposure ratio
/// P(E=1|A=1,l)/P(E=2|A=1,l).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EetRoute {
    /// Ratio computed from measured exposure counts in the treated arm.
    Measured,
    /// Ratio supplied externally.
    Supplied(f64),
    /// Ratio assumed to be 1 (equal exposure of the treated).
    AssumedEqual,
    /// EET recovered as EIE times a supplied infectivity ratio of the untreated.
    InfectivityRatio(f64),
}

impl EetRoute {
    fn label(&self) -> &'static str {
        match self {
            EetRoute::Measured => "measured",
            EetRoute::Supplied(_) => "supplied",
            EetRoute::AssumedEqual => "assumed-equal",
            EetRoute::InfectivityRatio(_) => "ir0",
        }
    }
}

/// One 2x2 ratio: events and totals per arm. Continuity (when allowed)
/// follows Haldane: the constant is added to the event and non-event cell of
/// each arm, so totals grow by twice the constant.
fn proportion_ratio(
    x1: f64,
    n1: f64,
    x0: f64,
    n0: f64,
    cells: [&str; 2],
    policy: ZeroCellPolicy,
) -> Result<f64> {
    if n1 <= 0.0 || n0 <= 0.0 {
        return Err(Error::DegenerateCounts("empty treatment arm".into()));
    }
    let (x1, n1, x0, n0) = if x1 == 0.0 || x0 == 0.0 {
        match policy {
            ZeroCellPolicy::Error => {
                let cell = if x1 == 0.0 { cells[0] } else { cells[1] };
                return Err(Error::DegenerateCounts(format!("event cell {cell} is zero")));
            }
            ZeroCellPolicy::Continuity(c) => (x1 + c, n1 + 2.0 * c, x0 + c, n0 + 2.0 * c),
        }
    } else {
        (x1, n1, x0, n0)
    };
    Ok((x1 / n1) / (x0 / n0))
}

fn variant_rr(n: &[[u64; 3]; 2], variant: Variant, policy: ZeroCellPolicy) -> Result<f64> {
    let j = variant.code() as usize;
    let n1: u64 = n[1].iter().sum();
    let n0: u64 = n[0].iter().sum();
    let c1 = format!("n[1][{j}]");
    let c0 = format!("n[0][{j}]");
    proportion_ratio(n[1][j] as f64, n1 as f64, n[0][j] as f64, n0 as f64, [&c1, &c0], policy)
}

/// Variant-specific risk ratio P(Y=j|A=1)/P(Y=j|A=0), the shared functional
/// of the ATE ratio (Table row 1) and the relative CECE.
pub fn rr(
    counts: &CountTable,
    variant: Variant,
    stratum: &StratumSelector,
    interpretation: RiskRatioInterpretation,
    opts: &EstimandOptions,
) -> Result<RatioEstimate> {
    let table = stratum.select(counts)?;
    let (tag, n, ledger) = match interpretation {
        RiskRatioInterpretation::AteRatio => (
            match variant {
                Variant::One => EstimandTag::AteRatio1,
                Variant::Two => EstimandTag::AteRatio2,
            },
            table.n,
            vec![Assumption::StandardRct],
        ),
        RiskRatioInterpretation::Cece => (
            match variant {
                Variant::One => EstimandTag::Cece1,
                Variant::Two => EstimandTag::Cece2,
            },
            table.excluding_both_exposed(),
            vec![
                Assumption::UniqueExposure,
                Assumption::NoEffectOnExposure,
                Assumption::StandardRct,
                Assumption::ExposureNecessity,
                Assumption::NoCrossInfectivity,
            ],
        ),
    };
    let point = variant_rr(&n, variant, opts.zero_cell)?;
    Ok(RatioEstimate::new(tag, stratum, point, ledger))
}

fn ratio_of_variant_rrs(n: &[[u64; 3]; 2], policy: ZeroCellPolicy) -> Result<f64> {
    let rr1 = variant_rr(n, Variant::One, policy)?;
    let rr2 = variant_rr(n, Variant::Two, policy)?;
    Ok(rr1 / rr2)
}

/// CCS: ratio of the two variant-specific risk ratios.
///
/// Observed mode evaluates the identification functional on outcome counts
/// alone. Exposure-conditional mode conditions each variant's risk on the
/// matching measured exposure and needs the exposure-sliced table.
pub fn ccs(
    counts: &CountTable,
    stratum: &StratumSelector,
    mode: CcsMode,
    opts: &EstimandOptions,
) -> Result<RatioEstimate> {
    let table = stratum.select(counts)?;
    match mode {
        CcsMode::Observed => {
            let point = ratio_of_variant_rrs(&table.excluding_both_exposed(), opts.zero_cell)?;
            Ok(RatioEstimate::new(
                EstimandTag::Ccs,
                stratum,
                point,
                vec![
                    Assumption::UniqueExposure,
                    Assumption::StandardRct,
                    Assumption::ExposureNecessity,
                    Assumption::NoCrossInfectivity,
                    Assumption::NoRelativeEffectOnExposureRatios,
                ],
            ))
        }
        CcsMode::ExposureConditional => {
            if !table.exposure_measured() {
                return Err(Error::MissingExposure);
            }
            let mut rrs = [0.0; 2];
            for variant in [Variant::One, Variant::Two] {
                let e = Exposure::Variant(variant);
                let j = variant.code();
                let x1 = table.exposure_cell(Arm::Treated, e, j).unwrap() as f64;
                let m1 = table.exposure_total(Arm::Treated, e).unwrap() as f64;
                let x0 = table.exposure_cell(Arm::Control, e, j).unwrap() as f64;
                let m0 = table.exposure_total(Arm::Control, e).unwrap() as f64;
                let c1 = format!("n[1][e={j}][{j}]");
                let c0 = format!("n[0][e={j}][{j}]");
                rrs[(j - 1) as usize] =
                    proportion_ratio(x1, m1, x0, m0, [&c1, &c0], opts.zero_cell)?;
            }
            Ok(RatioEstimate::new(
                EstimandTag::Ccs,
                stratum,
                rrs[0] / rrs[1],
                vec![
                    Assumption::UniqueExposure,
                    Assumption::StandardRct,
                    Assumption::ExposureNecessity,
                    Assumption::NoCrossInfectivity,
                ],
            ))
        }
    }
}

/// CCE: numerically identical to the observed-mode CCS on every table (they
/// share one identifying formula); only the assumption ledger differs.
pub fn cce(counts: &CountTable, stratum: &StratumSelector, opts: &EstimandOptions) -> Result<RatioEstimate> {
    let table = stratum.select(counts)?;
    let point = ratio_of_variant_rrs(&table.excluding_both_exposed(), opts.zero_cell)?;
    Ok(RatioEstimate::new(
        EstimandTag::Cce,
        stratum,
        point,
        vec![Assumption::UniqueExposure, Assumption::StandardRct, Assumption::ExposureNecessity],
    ))
}

/// EIE: the CCS functional within a covariate stratum (or marginally, under
/// the additional proportional-potential-outcomes assumption).
pub fn eie(counts: &CountTable, stratum: &StratumSelector, opts: &EstimandOptions) -> Result<RatioEstimate> {
    let table = stratum.select(counts)?;
    let point = ratio_of_variant_rrs(&table.excluding_both_exposed(), opts.zero_cell)?;
    let mut ledger = vec![
        Assumption::UniqueExposure,
        Assumption::ExposureNecessity,
        Assumption::NoCrossInfectivity,
        Assumption::CondNoEffectOnExposure,
        Assumption::GeneralisedExposureRct,
    ];
    if stratum.is_marginal() {
        ledger.push(Assumption::GeneralProportionalPotentialOutcomes);
    }
    Ok(RatioEstimate::new(EstimandTag::Eie, stratum, point, ledger))
}

/// EET: ratio of variant outcomes in the treated arm, rescaled by the treated
/// exposure ratio obtained through one of the declared routes. The route is
/// stamped into the result.
pub fn eet(
    counts: &CountTable,
    stratum: &StratumSelector,
    route: EetRoute,
    opts: &EstimandOptions,
) -> Result<RatioEstimate> {
    let table = stratum.select(counts)?;

    let mut ledger = vec![
        Assumption::UniqueExposure,
        Assumption::ExposureNecessity,
        Assumption::NoCrossInfectivity,
        Assumption::ExposureRct,
    ];
    if stratum.is_marginal() {
        ledger.push(Assumption::ProportionalPotentialOutcomes);
    }

    let point = match route {
        EetRoute::InfectivityRatio(ir0) => {
            if !(ir0 > 0.0 && ir0.is_finite()) {
                return Err(Error::Config(format!("infectivity ratio must be positive, got {ir0}")));
            }
            ledger.extend([Assumption::CondNoEffectOnExposure, Assumption::GeneralisedExposureRct]);
            eie(counts, stratum, opts)?.point * ir0
        }
        _ => {
            let n = table.excluding_both_exposed();
            let x1 = n[1][1] as f64;
            let x2 = n[1][2] as f64;
            let outcome_ratio = if x1 == 0.0 || x2 == 0.0 {
                match opts.zero_cell {
                    ZeroCellPolicy::Error => {
                        let cell = if x1 == 0.0 { "n[1][1]" } else { "n[1][2]" };
                        return Err(Error::DegenerateCounts(format!("event cell {cell} is zero")));
                    }
                    ZeroCellPolicy::Continuity(c) => (x1 + c) / (x2 + c),
                }
            } else {
                x1 / x2
            };
            let exposure_ratio = match route {
                EetRoute::Measured => {
                    if !table.exposure_measured() {
                        return Err(Error::MissingExposure);
                    }
                    let e1 = table.exposure_total(Arm::Treated, Exposure::Variant(Variant::One)).unwrap();
                    let e2 = table.exposure_total(Arm::Treated, Exposure::Variant(Variant::Two)).unwrap();
                    if e1 == 0 || e2 == 0 {
                        return Err(Error::DegenerateCounts(
                            "no treated subjects exposed to one of the variants".into(),
                        ));
                    }
                    e1 as f64 / e2 as f64
                }
                EetRoute::Supplied(r) => {
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(Error::Config(format!("exposure ratio must be positive, got {r}")));
                    }
                    r
                }
                EetRoute::AssumedEqual => {
                    ledger.push(Assumption::EqualTreatedExposure);
                    1.0
                }
                EetRoute::InfectivityRatio(_) => unreachable!(),
            };
            outcome_ratio / exposure_ratio
        }
    };

    let mut est = RatioEstimate::new(EstimandTag::Eet, stratum, point, ledger);
    est.route = Some(route.label().to_string());
    Ok(est)
}
