//! Data-generating processes with analytic oracles. Each scenario fixes a
//! treatment assignment probability, an exposure law per arm, and a logistic
//! outcome model; the infection probability given exposure to variant j in
//! arm a is
//!
//! ```text
//! P(Y = j | E = j, A = a) = expit(b0 + b_j) * expit(t_j * a)
//! ```
//!
//! with per-variant coefficients `b_j` and treatment terms `t_j`. The
//! treatment enters through its own logistic factor so its effect on the
//! outcome probability is multiplicative (`expit(0) = 1/2` in the control
//! arm). A time-to-event extension applies the same infection model per
//! interval, with exposure rates scaled by a latent activity level and
//! infection probabilities scaled by a latent frailty, keeping the
//! scaled-infection proportionality exact by construction.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, EventRecord, EventType, Exposure, Outcome, SubjectRecord, Variant};
use crate::error::{Error, Result};
use crate::estimands::{
    cce, ccs, eet, rr, CcsMode, EetRoute, EstimandOptions, RiskRatioInterpretation,
    StratumSelector,
};
use crate::data::{tabulate, CountTable};
use crate::parallel::{derive_seed, map_indexed};

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mixture of latent levels with a multiplier per level (activity scales
/// exposure rates, frailty scales infection probabilities).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentMixture {
    pub weights: Vec<f64>,
    pub multipliers: Vec<f64>,
}

impl LatentMixture {
    pub fn degenerate() -> Self {
        LatentMixture { weights: vec![1.0], multipliers: vec![1.0] }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.weights.is_empty() || self.weights.len() != self.multipliers.len() {
            return Err(Error::Config(format!("{what}: weights and multipliers must align")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Config(format!("{what}: weights must be a distribution")));
        }
        if self.multipliers.iter().any(|m| *m <= 0.0) {
            return Err(Error::Config(format!("{what}: multipliers must be positive")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, m) in self.weights.iter().zip(&self.multipliers) {
            acc += w;
            if u < acc {
                return *m;
            }
        }
        *self.multipliers.last().unwrap()
    }
}

/// An observed baseline covariate for time-to-event scenarios, with
/// per-level multipliers on the two cause-specific infection probabilities.
/// Equal multipliers preserve the scaled-infection assumption; unequal ones
/// violate it, which is what the falsification test should detect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservedCovariate {
    pub name: String,
    pub levels: Vec<ObservedLevel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservedLevel {
    pub label: String,
    pub weight: f64,
    pub cause_multipliers: [f64; 2],
}

/// Time-to-event extension: per-interval exposure law and latent structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TteExtension {
    pub horizon: u32,
    /// Per-interval probability of making an exposure contact (before the
    /// activity multiplier).
    pub exposure_rate: Vec<f64>,
    /// Per-interval share of exposure contacts that are with variant 1.
    pub variant1_share: Vec<f64>,
    /// Latent activity level (common cause of exposures and outcomes).
    pub activity: LatentMixture,
    /// Latent frailty (common cause of outcomes only).
    pub frailty: LatentMixture,
    /// Per-interval drop-out probability after surviving the interval.
    pub dropout: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_covariate: Option<ObservedCovariate>,
}

/// Covariate mixture for time-fixed scenarios: finite categorical levels with
/// optional per-level overrides of the outcome or exposure parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateMixture {
    pub name: String,
    pub levels: Vec<CovariateLevel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateLevel {
    pub label: String,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treatment_effect: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exposure_law: Option<[[f64; 3]; 2]>,
}

/// Full parameterization of a scenario. Serializable, so custom scenarios can
/// be supplied as JSON files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub treatment_prob: f64,
    /// Intercept b0 of the outcome model.
    pub intercept: f64,
    /// Per-exposure-level coefficients `b_e` for e = 0, 1, 2. The e = 0 entry
    /// is inert: unexposed subjects never develop an outcome regardless.
    pub exposure_effect: [f64; 3],
    /// Treatment terms `t_j` per variant.
    pub treatment_effect: [f64; 2],
    /// `P(E = e | A = a)` rows indexed `[arm][e]`.
    pub exposure_law: [[f64; 3]; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<CovariateMixture>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tte: Option<TteExtension>,
}

/// Identifier of a built-in scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    D1,
    D2Ratio,
    D3NoRatio,
    D4EetEqual,
    D5EetUnequal,
    TteRare,
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d1" => Ok(ScenarioId::D1),
            "d2_ratio" => Ok(ScenarioId::D2Ratio),
            "d3_noratio" => Ok(ScenarioId::D3NoRatio),
            "d4_eet_equal" => Ok(ScenarioId::D4EetEqual),
            "d5_eet_unequal" => Ok(ScenarioId::D5EetUnequal),
            "tte_rare" => Ok(ScenarioId::TteRare),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected d1, d2_ratio, d3_noratio, d4_eet_equal, d5_eet_unequal or tte_rare)"
            ))),
        }
    }
}

/// Returns the fully populated spec for a built-in scenario.
pub fn builtin_scenario(id: ScenarioId) -> DgpSpec {
    let base = |name: &str, exposure_law: [[f64; 3]; 2]| DgpSpec {
        name: name.to_string(),
        treatment_prob: 0.5,
        intercept: -2.0,
        exposure_effect: [-1.0, 2.0, 1.0],
        treatment_effect: [-3.0, -3.0],
        exposure_law,
        covariates: None,
        tte: None,
    };
    let third = 1.0 / 3.0;
    match id {
        ScenarioId::D1 => base("d1", [[third, third, third], [third, third, third]]),
        ScenarioId::D2Ratio => base(
            "d2_ratio",
            [[4.0 / 20.0, 8.0 / 20.0, 8.0 / 20.0], [10.0 / 20.0, 5.0 / 20.0, 5.0 / 20.0]],
        ),
        ScenarioId::D3NoRatio => base(
            "d3_noratio",
            [[3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0], [3.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0]],
        ),
        ScenarioId::D4EetEqual => base(
            "d4_eet_equal",
            [[1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0], [1.0 / 5.0, 2.0 / 5.0, 2.0 / 5.0]],
        ),
        ScenarioId::D5EetUnequal => base(
            "d5_eet_unequal",
            [[1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0], [1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0]],
        ),
        ScenarioId::TteRare => {
            let mut spec = base("tte_rare", [[third, third, third], [third, third, third]]);
            spec.exposure_effect = [-1.0, 2.0, 1.5];
            spec.treatment_effect = [-0.8, -0.3];
            spec.tte = Some(TteExtension {
                horizon: 12,
                exposure_rate: vec![0.045; 12],
                variant1_share: vec![0.5; 12],
                activity: LatentMixture { weights: vec![0.5, 0.5], multipliers: vec![0.8, 1.2] },
                frailty: LatentMixture { weights: vec![0.5, 0.5], multipliers: vec![0.85, 1.15] },
                dropout: 0.002,
                observed_covariate: None,
            });
            spec
        }
    }
}

impl DgpSpec {
    /// Baseline infection probability given exposure to `variant`.
    pub fn base_infection(&self, variant: Variant) -> f64 {
        expit(self.intercept + self.exposure_effect[variant.code() as usize])
    }

    /// Treatment factor `expit(t_j * a)` for `variant` in `arm`.
    pub fn treatment_factor(&self, variant: Variant, arm: Arm) -> f64 {
        expit(self.treatment_effect[(variant.code() - 1) as usize] * arm.index() as f64)
    }

    /// Infection probability given exposure to `variant` in `arm`.
    pub fn infection_prob(&self, variant: Variant, arm: Arm) -> f64 {
        self.base_infection(variant) * self.treatment_factor(variant, arm)
    }

    /// Marginal outcome probability `P(Y = j | A = a)` under the exposure law.
    pub fn outcome_prob(&self, variant: Variant, arm: Arm) -> f64 {
        let law = &self.exposure_law[arm.index()];
        law[variant.code() as usize] * self.infection_prob(variant, arm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.treatment_prob > 0.0 && self.treatment_prob < 1.0) {
            return Err(Error::Config("treatment probability must be in (0,1)".into()));
        }
        for (a, row) in self.exposure_law.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::Config(format!("exposure law for arm {a} must be a distribution")));
            }
        }
        if let Some(cov) = &self.covariates {
            let total: f64 = cov.levels.iter().map(|l| l.weight).sum();
            if (total - 1.0).abs() > 1e-9 || cov.levels.is_empty() {
                return Err(Error::Config("covariate level weights must be a distribution".into()));
            }
        }
        if let Some(tte) = &self.tte {
            if tte.horizon < 1 {
                return Err(Error::Config("horizon must be at least 1".into()));
            }
            let k = tte.horizon as usize;
            if tte.exposure_rate.len() != k || tte.variant1_share.len() != k {
                return Err(Error::Config("per-interval laws must cover the horizon".into()));
            }
            if tte.exposure_rate.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::Config("exposure rates must be probabilities".into()));
            }
            if tte.variant1_share.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::Config("variant shares must be probabilities".into()));
            }
            if !(0.0..=1.0).contains(&tte.dropout) {
                return Err(Error::Config("dropout must be a probability".into()));
            }
            tte.activity.validate("activity")?;
            tte.frailty.validate("frailty")?;
            if let Some(obs) = &tte.observed_covariate {
                let total: f64 = obs.levels.iter().map(|l| l.weight).sum();
                if (total - 1.0).abs() > 1e-9 || obs.levels.is_empty() {
                    return Err(Error::Config("observed covariate weights must be a distribution".into()));
                }
            }
            // every per-interval hazard must remain a probability
            let act_max = tte.activity.multipliers.iter().cloned().fold(0.0, f64::max);
            let fr_max = tte.frailty.multipliers.iter().cloned().fold(0.0, f64::max);
            let cov_max = tte
                .observed_covariate
                .as_ref()
                .map(|o| {
                    o.levels
                        .iter()
                        .flat_map(|l| l.cause_multipliers)
                        .fold(0.0, f64::max)
                })
                .unwrap_or(1.0);
            if tte.exposure_rate.iter().any(|r| r * act_max > 1.0) {
                return Err(Error::Config("activity-scaled exposure rate > 1".into()));
            }
            for variant in [Variant::One, Variant::Two] {
                for arm in [Arm::Control, Arm::Treated] {
                    if self.infection_prob(variant, arm) * fr_max * cov_max > 1.0 {
                        return Err(Error::Config(format!(
                            "scaled infection probability > 1 for variant {}",
                            variant.code()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_time_to_event(&self) -> bool {
        self.tte.is_some()
    }
}

/// Analytic oracle values for a scenario: the true estimands, the limits of
/// the observed-data estimators, and the proportionality constants of the
/// time-to-event extension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleValues {
    pub true_ccs: f64,
    pub true_cce: f64,
    pub true_eie: f64,
    pub true_eet: f64,
    pub observed_limit_ccs: f64,
    pub observed_limit_eet: f64,
    pub acece_ratio: f64,
    pub ir0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_treated: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_control: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_k: Option<Vec<f64>>,
}

/// Exact plug-in evaluation of the scenario's closed forms.
pub fn oracle(spec: &DgpSpec) -> OracleValues {
    let t1 = expit(spec.treatment_effect[0]);
    let t2 = expit(spec.treatment_effect[1]);
    let base1 = spec.base_infection(Variant::One);
    let base2 = spec.base_infection(Variant::Two);

    // true CCS/CCE/EIE: the control-arm factor expit(0) cancels in each
    // variant ratio, leaving the treated factors.
    let true_ccs = t1 / t2;
    let true_eet = (base1 * t1) / (base2 * t2);
    let ir0 = base1 / base2;

    let p = |variant: Variant, arm: Arm| spec.outcome_prob(variant, arm);
    let observed_limit_ccs = (p(Variant::One, Arm::Treated) / p(Variant::One, Arm::Control))
        / (p(Variant::Two, Arm::Treated) / p(Variant::Two, Arm::Control));
    let observed_limit_eet = p(Variant::One, Arm::Treated) / p(Variant::Two, Arm::Treated);

    // absolute CECE ratio under intervened exposure: the treated-minus-control
    // difference of infection probabilities, per variant.
    let acece_ratio = (base1 * (t1 - 0.5)) / (base2 * (t2 - 0.5));

    let (gamma_treated, gamma_control, alpha_k) = match &spec.tte {
        None => (None, None, None),
        Some(tte) => {
            let gamma = |arm: Arm| {
                spec.infection_prob(Variant::One, arm) / spec.infection_prob(Variant::Two, arm)
            };
            let alphas = tte.variant1_share.iter().map(|s| s / (1.0 - s)).collect();
            (Some(gamma(Arm::Treated)), Some(gamma(Arm::Control)), Some(alphas))
        }
    };

    OracleValues {
        true_ccs,
        true_cce: true_ccs,
        true_eie: true_ccs,
        true_eet,
        observed_limit_ccs,
        observed_limit_eet,
        acece_ratio,
        ir0,
        gamma_treated,
        gamma_control,
        alpha_k,
    }
}

/// Probability of more than one infectious contact among `m` independent
/// contacts with prevalence `r`: the binomial tail
/// `P(X >= 2) = 1 - (1-r)^m - m r (1-r)^(m-1)`.
pub fn multi_exposure_probability(r: f64, m: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("prevalence must be in [0,1], got {r}")));
    }
    if m < 1 {
        return Err(Error::Domain("contact count must be at least 1".into()));
    }
    if m == 1 {
        return Ok(0.0);
    }
    let mf = m as f64;
    let tail = 1.0 - (1.0 - r).powi(m as i32) - mf * r * (1.0 - r).powi(m as i32 - 1);
    Ok(tail.max(0.0))
}

/// Output of [`sample`]: subject records for time-fixed scenarios, event
/// records for time-to-event ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SampledData {
    Subjects(Vec<SubjectRecord>),
    Events(Vec<EventRecord>),
}

impl SampledData {
    pub fn subjects(self) -> Result<Vec<SubjectRecord>> {
        match self {
            SampledData::Subjects(v) => Ok(v),
            SampledData::Events(_) => Err(Error::Config("expected time-fixed data".into())),
        }
    }

    pub fn events(self) -> Result<Vec<EventRecord>> {
        match self {
            SampledData::Events(v) => Ok(v),
            SampledData::Subjects(_) => Err(Error::Config("expected time-to-event data".into())),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SampledData::Subjects(v) => v.len(),
            SampledData::Events(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `n` iid subjects. Each subject has its own RNG stream derived from
/// `(seed, subject index)`, so the dataset is byte-identical for any number
/// of worker lanes.
pub fn sample(spec: &DgpSpec, n: u64, seed: u64) -> Result<SampledData> {
    if n < 1 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    spec.validate()?;
    if spec.tte.is_some() {
        Ok(SampledData::Events(sample_events(spec, n, seed)))
    } else {
        Ok(SampledData::Subjects(sample_subjects(spec, n, seed)))
    }
}

fn draw_arm(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Arm {
    if rng.gen::<f64>() < spec.treatment_prob {
        Arm::Treated
    } else {
        Arm::Control
    }
}

fn sample_subjects(spec: &DgpSpec, n: u64, seed: u64) -> Vec<SubjectRecord> {
    map_indexed(n as usize, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 1));
        let mut effective = spec.clone();
        let mut covariates = BTreeMap::new();
        if let Some(mixture) = &spec.covariates {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = mixture.levels.last().unwrap();
            for level in &mixture.levels {
                acc += level.weight;
                if u < acc {
                    chosen = level;
                    break;
                }
            }
            covariates.insert(mixture.name.clone(), chosen.label.clone());
            if let Some(te) = chosen.treatment_effect {
                effective.treatment_effect = te;
            }
            if let Some(law) = chosen.exposure_law {
                effective.exposure_law = law;
            }
        }

        let arm = draw_arm(&effective, &mut rng);
        let law = &effective.exposure_law[arm.index()];
        let u: f64 = rng.gen();
        let exposure = if u < law[0] {
            Exposure::Unexposed
        } else if u < law[0] + law[1] {
            Exposure::Variant(Variant::One)
        } else {
            Exposure::Variant(Variant::Two)
        };
        let outcome = match exposure {
            Exposure::Variant(v) => {
                if rng.gen::<f64>() < effective.infection_prob(v, arm) {
                    Outcome::Infected(v)
                } else {
                    Outcome::Uninfected
                }
            }
            _ => Outcome::Uninfected,
        };
        SubjectRecord { arm, outcome, exposure: Some(exposure), covariates }
    })
}

fn sample_events(spec: &DgpSpec, n: u64, seed: u64) -> Vec<EventRecord> {
    let tte = spec.tte.as_ref().unwrap();
    map_indexed(n as usize, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 2));
        let arm = draw_arm(spec, &mut rng);
        let activity = tte.activity.draw(&mut rng);
        let frailty = tte.frailty.draw(&mut rng);
        let mut covariates = BTreeMap::new();
        let mut cause_mult = [1.0, 1.0];
        if let Some(obs) = &tte.observed_covariate {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = obs.levels.last().unwrap();
            for level in &obs.levels {
                acc += level.weight;
                if u < acc {
                    chosen = level;
                    break;
                }
            }
            covariates.insert(obs.name.clone(), chosen.label.clone());
            cause_mult = chosen.cause_multipliers;
        }

        for k in 1..=tte.horizon {
            let idx = (k - 1) as usize;
            let rate = (tte.exposure_rate[idx] * activity).min(1.0);
            let share = tte.variant1_share[idx];
            let u: f64 = rng.gen();
            let exposed = if u < rate * share {
                Some(Variant::One)
            } else if u < rate {
                Some(Variant::Two)
            } else {
                None
            };
            if let Some(v) = exposed {
                let p = (spec.infection_prob(v, arm)
                    * frailty
                    * cause_mult[(v.code() - 1) as usize])
                    .min(1.0);
                if rng.gen::<f64>() < p {
                    return EventRecord { arm, time: k, event: EventType::Infected(v), covariates };
                }
            }
            if tte.dropout > 0.0 && rng.gen::<f64>() < tte.dropout {
                return EventRecord { arm, time: k, event: EventType::Censored, covariates };
            }
        }
        EventRecord { arm, time: tte.horizon, event: EventType::Censored, covariates }
    })
}

/// Time-fixed estimators the convergence harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    CcsObserved,
    CcsExposureConditional,
    Cce,
    EetAssumedEqual,
    EetMeasured,
    EetSupplied(f64),
    AteRatio1,
    AteRatio2,
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::CcsObserved => "ccs_observed".into(),
            EstimatorKind::CcsExposureConditional => "ccs_exposure_conditional".into(),
            EstimatorKind::Cce => "cce".into(),
            EstimatorKind::EetAssumedEqual => "eet_assumed_equal".into(),
            EstimatorKind::EetMeasured => "eet_measured".into(),
            EstimatorKind::EetSupplied(r) => format!("eet_supplied_{r}"),
            EstimatorKind::AteRatio1 => "ate_ratio_1".into(),
            EstimatorKind::AteRatio2 => "ate_ratio_2".into(),
        }
    }
}

/// Evaluates one estimator on a count table.
pub fn evaluate_estimator(kind: EstimatorKind, counts: &CountTable) -> Result<f64> {
    let opts = EstimandOptions::default();
    let marginal = StratumSelector::Marginal;
    let est = match kind {
        EstimatorKind::CcsObserved => ccs(counts, &marginal, CcsMode::Observed, &opts)?,
        EstimatorKind::CcsExposureConditional => {
            ccs(counts, &marginal, CcsMode::ExposureConditional, &opts)?
        }
        EstimatorKind::Cce => cce(counts, &marginal, &opts)?,
        EstimatorKind::EetAssumedEqual => eet(counts, &marginal, EetRoute::AssumedEqual, &opts)?,
        EstimatorKind::EetMeasured => eet(counts, &marginal, EetRoute::Measured, &opts)?,
        EstimatorKind::EetSupplied(r) => eet(counts, &marginal, EetRoute::Supplied(r), &opts)?,
        EstimatorKind::AteRatio1 => {
            rr(counts, Variant::One, &marginal, RiskRatioInterpretation::AteRatio, &opts)?
        }
        EstimatorKind::AteRatio2 => {
            rr(counts, Variant::Two, &marginal, RiskRatioInterpretation::AteRatio, &opts)?
        }
    };
    Ok(est.point)
}

/// One replication's estimate (or the degeneracy that prevented it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub n: u64,
    pub replication: u32,
    pub estimator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean and Monte Carlo standard error per (n, estimator) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: u64,
    pub estimator: String,
    pub mean: f64,
    pub mc_se: f64,
    pub ok: u32,
    pub degenerate: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub scenario: String,
    pub rows: Vec<ReplicationRow>,
    pub summaries: Vec<SummaryRow>,
}

/// Runs `replications` independent samples per grid size, evaluating each
/// requested estimator. Estimator degeneracies are recorded per replication,
/// not fatal. Deterministic for a given seed regardless of parallel order.
pub fn run_convergence_study(
    spec: &DgpSpec,
    n_grid: &[u64],
    replications: u32,
    estimators: &[EstimatorKind],
    seed: u64,
) -> Result<ConvergenceStudy> {
    if n_grid.is_empty() {
        return Err(Error::Config("empty n grid".into()));
    }
    if replications == 0 {
        return Err(Error::Config("at least one replication required".into()));
    }
    if spec.is_time_to_event() {
        return Err(Error::Config("convergence study runs on time-fixed scenarios".into()));
    }
    spec.validate()?;

    let tasks = n_grid.len() * replications as usize;
    let task_rows: Vec<Vec<ReplicationRow>> = map_indexed(tasks, |t| {
        let grid_idx = t / replications as usize;
        let rep = (t % replications as usize) as u32;
        let n = n_grid[grid_idx];
        let subseed = derive_seed(seed, grid_idx as u64, rep as u64 + 3);
        let records = sample_subjects(spec, n, subseed);
        let counts = tabulate(&records, None).expect("sampled records always tabulate");
        estimators
            .iter()
            .map(|kind| match evaluate_estimator(*kind, &counts) {
                Ok(v) => ReplicationRow {
                    n,
                    replication: rep,
                    estimator: kind.label(),
                    estimate: Some(v),
                    error: None,
                },
                Err(e) => ReplicationRow {
                    n,
                    replication: rep,
                    estimator: kind.label(),
                    estimate: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });

    let rows: Vec<ReplicationRow> = task_rows.into_iter().flatten().collect();

    let mut summaries = Vec::new();
    for &n in n_grid {
        for kind in estimators {
            let label = kind.label();
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.estimator == label)
                .filter_map(|r| r.estimate)
                .collect();
            let degenerate = rows
                .iter()
                .filter(|r| r.n == n && r.estimator == label && r.estimate.is_none())
                .count() as u32;
            if values.is_empty() {
                summaries.push(SummaryRow { n, estimator: label, mean: f64::NAN, mc_se: f64::NAN, ok: 0, degenerate });
                continue;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
            } else {
                0.0
            };
            summaries.push(SummaryRow {
                n,
                estimator: label,
                mean,
                mc_se: (var / values.len() as f64).sqrt(),
                ok: values.len() as u32,
                degenerate,
            });
        }
    }

    Ok(ConvergenceStudy { scenario: spec.name.clone(), rows, summaries })
}
