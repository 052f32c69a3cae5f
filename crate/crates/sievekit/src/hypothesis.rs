//! Null-hypothesis machinery: the strong sharp null via confidence-interval
//! inversion of the nonparametric challenge subtype effect, the composite
//! no-waning null over cumulative-hazard windows with Bonferroni adjustment,
//! and the falsification test of the scaled-infection assumption across
//! observed covariate strata.
//!
//! Every test here is a CI-inversion test on the ratio scale: `reject` holds
//! exactly when the (adjusted) interval excludes 1.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{EventRecord, EventType, Variant};
use crate::error::{Error, Result};
use crate::estimands::Assumption;
use crate::special::normal_quantile;
use crate::survival::{build_patterned, cumulative_hazard_contrast, invert_spd, maximize_partial_likelihood};
use crate::uncertainty::{bootstrap_ci, BootstrapPlan};

/// Which null hypothesis a [`TestResult`] addresses. The individual-level
/// sharp null has no standalone test; its tag exists so reports can explain
/// that it is only interpretable together with the strong version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullId {
    SharpK,
    StrongSharpK,
    H0w,
    ScaledInfection,
}

/// One window or stratum contrast inside a composite test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestDetail {
    pub label: String,
    pub statistic: f64,
    pub ci: (f64, f64),
    pub reject: bool,
    pub degenerate: bool,
}

/// CI-inversion test outcome. For composite tests the top-level statistic and
/// interval are those of the decisive contrast (a rejecting one if any exists,
/// otherwise the most extreme), so `reject` always equals `1 not in ci`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub null_id: NullId,
    pub statistic: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub reject: bool,
    pub detail: Vec<TestDetail>,
    pub assumptions: Vec<Assumption>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Interval construction for the test statistics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiRoute {
    Analytic,
    Bootstrap { replicates: u32, seed: u64 },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(())
}

fn contrast_ci(
    events: &[EventRecord],
    window: (u32, u32),
    alpha: f64,
    route: CiRoute,
) -> Result<(f64, (f64, f64))> {
    let contrast = cumulative_hazard_contrast(events, window)?;
    let ci = match route {
        CiRoute::Analytic => {
            let z = normal_quantile(1.0 - alpha / 2.0);
            let half = z * contrast.log_variance.sqrt();
            (contrast.ratio * (-half).exp(), contrast.ratio * half.exp())
        }
        CiRoute::Bootstrap { replicates, seed } => {
            let plan = BootstrapPlan::new(replicates, seed, alpha)?;
            let (lo, hi, _) = bootstrap_ci(events, &plan, |resample| {
                cumulative_hazard_contrast(resample, window).map(|c| c.ratio)
            })?;
            (lo, hi)
        }
    };
    Ok((contrast.ratio, ci))
}

fn tte_assumptions() -> Vec<Assumption> {
    vec![
        Assumption::TteStandardRct,
        Assumption::TteExposureNecessity,
        Assumption::TteNoCrossInfectivity,
        Assumption::ExposureRatioOfExposed,
        Assumption::ScaledNewInfection,
    ]
}

/// Tests the strong sharp null (equal effect on both variants) at one
/// interval, or over a window of intervals pooled as cumulative hazards.
/// Rejects exactly when the interval for the challenge-subtype contrast
/// excludes 1.
pub fn strong_null_test(
    events: &[EventRecord],
    window: (u32, u32),
    alpha: f64,
    route: CiRoute,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let (statistic, ci) = contrast_ci(events, window, alpha, route)?;
    let reject = !(ci.0 <= 1.0 && 1.0 <= ci.1);
    Ok(TestResult {
        null_id: NullId::StrongSharpK,
        statistic,
        ci,
        alpha,
        reject,
        detail: vec![TestDetail {
            label: format!("{}:{}", window.0, window.1),
            statistic,
            ci,
            reject,
            degenerate: false,
        }],
        assumptions: tte_assumptions(),
        note: None,
    })
}

/// Composite no-waning null: all windowed cumulative-hazard-ratio contrasts
/// equal 1 together with hazard proportionality over time. Each window gets a
/// Bonferroni-adjusted interval at `alpha / #windows`; the null is rejected
/// when any window's interval excludes 1. Rejection alone does not establish
/// a variant-specific effect; the null is composite.
pub fn h0w_test(events: &[EventRecord], windows: &[(u32, u32)], alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    if windows.is_empty() {
        return Err(Error::Config("at least one window is required".into()));
    }
    let adjusted = alpha / windows.len() as f64;
    let mut detail = Vec::with_capacity(windows.len());
    let mut usable = 0u32;
    for &w in windows {
        match contrast_ci(events, w, adjusted, CiRoute::Analytic) {
            Ok((statistic, ci)) => {
                usable += 1;
                let reject = !(ci.0 <= 1.0 && 1.0 <= ci.1);
                detail.push(TestDetail {
                    label: format!("{}:{}", w.0, w.1),
                    statistic,
                    ci,
                    reject,
                    degenerate: false,
                });
            }
            Err(e) if e.is_degenerate() => {
                detail.push(TestDetail {
                    label: format!("{}:{}", w.0, w.1),
                    statistic: f64::NAN,
                    ci: (f64::NAN, f64::NAN),
                    reject: false,
                    degenerate: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if usable == 0 {
        return Err(Error::TestInfeasible("all windows degenerate".into()));
    }
    let top = decisive(&detail);
    Ok(TestResult {
        null_id: NullId::H0w,
        statistic: top.statistic,
        ci: top.ci,
        alpha,
        reject: top.reject,
        detail,
        assumptions: tte_assumptions(),
        note: Some(
            "composite null: rejection does not by itself establish a variant-specific effect"
                .to_string(),
        ),
    })
}

fn decisive(detail: &[TestDetail]) -> &TestDetail {
    detail
        .iter()
        .filter(|d| !d.degenerate)
        .max_by(|a, b| {
            let key = |d: &TestDetail| (d.reject as u8, d.statistic.ln().abs());
            let (ra, sa) = key(a);
            let (rb, sb) = key(b);
            ra.cmp(&rb).then(sa.total_cmp(&sb))
        })
        .expect("at least one usable contrast")
}

/// Estimation route for the falsification test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsificationRoute {
    /// Stratum-wise Nelson-Aalen hazard ratios with bootstrap intervals.
    Nonparametric { replicates: u32, seed: u64 },
    /// Equality of covariate coefficients across the two cause-specific
    /// partial-likelihood fits (treatment plus level indicators).
    Cox,
}

/// Falsification test of the scaled-infection assumption restricted to an
/// observed covariate: under the assumption, the stratum-to-reference hazard
/// ratio is the same for both causes, so the cross-cause ratio of those
/// ratios is 1 in every stratum. Rejection falsifies the assumption on the
/// observed subset; non-rejection is reported as "not falsified", never as
/// confirmation.
pub fn scaled_infection_falsification(
    events: &[EventRecord],
    covariate: &str,
    alpha: f64,
    route: FalsificationRoute,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let levels: BTreeSet<&str> = events
        .iter()
        .filter_map(|e| e.covariates.get(covariate).map(|s| s.as_str()))
        .collect();
    if levels.is_empty() {
        return Err(Error::Config(format!("covariate '{covariate}' not present on any record")));
    }
    if levels.len() < 2 {
        return Err(Error::TestInfeasible(format!(
            "covariate '{covariate}' has a single level"
        )));
    }
    let levels: Vec<String> = levels.into_iter().map(|s| s.to_string()).collect();
    let reference = levels[0].clone();
    let contrasts = levels.len() - 1;
    let adjusted = alpha / contrasts as f64;

    let mut detail = Vec::with_capacity(contrasts);
    match route {
        FalsificationRoute::Nonparametric { replicates, seed } => {
            for level in &levels[1..] {
                let stat = cross_cause_level_ratio(events, covariate, level, &reference);
                match stat {
                    Ok(statistic) => {
                        let plan = BootstrapPlan::new(replicates, seed, adjusted)?;
                        let (lo, hi, _) = bootstrap_ci(events, &plan, |resample| {
                            cross_cause_level_ratio(resample, covariate, level, &reference)
                        })?;
                        let reject = !(lo <= 1.0 && 1.0 <= hi);
                        detail.push(TestDetail {
                            label: format!("{level} vs {reference}"),
                            statistic,
                            ci: (lo, hi),
                            reject,
                            degenerate: false,
                        });
                    }
                    Err(e) if e.is_degenerate() => detail.push(TestDetail {
                        label: format!("{level} vs {reference}"),
                        statistic: f64::NAN,
                        ci: (f64::NAN, f64::NAN),
                        reject: false,
                        degenerate: true,
                    }),
                    Err(e) => return Err(e),
                }
            }
        }
        FalsificationRoute::Cox => {
            let design = |e: &EventRecord| {
                let mut x = vec![e.arm.index() as f64];
                let value = e.covariates.get(covariate).map(|s| s.as_str()).unwrap_or("");
                for level in &levels[1..] {
                    x.push(if value == level { 1.0 } else { 0.0 });
                }
                x
            };
            let p = 1 + contrasts;
            let mut fits = Vec::new();
            for cause in [Variant::One, Variant::Two] {
                let pl = build_patterned(events, cause, design, p)?;
                let (beta, _, _) = maximize_partial_likelihood(&pl)?;
                let (_, _, info) = pl.loglik(&beta);
                let cov = invert_spd(&info, p)?;
                fits.push((beta, cov));
            }
            let z = normal_quantile(1.0 - adjusted / 2.0);
            for (idx, level) in levels[1..].iter().enumerate() {
                let i = 1 + idx;
                let delta = fits[0].0[i] - fits[1].0[i];
                let se = (fits[0].1[i * p + i] + fits[1].1[i * p + i]).max(0.0).sqrt();
                let statistic = delta.exp();
                let ci = ((delta - z * se).exp(), (delta + z * se).exp());
                let reject = !(ci.0 <= 1.0 && 1.0 <= ci.1);
                detail.push(TestDetail {
                    label: format!("{level} vs {reference}"),
                    statistic,
                    ci,
                    reject,
                    degenerate: false,
                });
            }
        }
    }

    if detail.iter().all(|d| d.degenerate) {
        return Err(Error::TestInfeasible("all level contrasts degenerate".into()));
    }
    let top = decisive(&detail);
    Ok(TestResult {
        null_id: NullId::ScaledInfection,
        statistic: top.statistic,
        ci: top.ci,
        alpha,
        reject: top.reject,
        detail,
        assumptions: tte_assumptions(),
        note: Some(format!(
            "applies to the observed strata of '{covariate}' only; non-rejection means not falsified, not confirmed"
        )),
    })
}

/// Cross-cause ratio of level-to-reference cumulative-hazard ratios, pooled
/// over arms, full horizon.
fn cross_cause_level_ratio(
    events: &[EventRecord],
    covariate: &str,
    level: &str,
    reference: &str,
) -> Result<f64> {
    let horizon = events.iter().map(|e| e.time).max().unwrap_or(0);
    if horizon == 0 {
        return Err(Error::Domain("no event records".into()));
    }
    let subset = |value: &str| -> Vec<EventRecord> {
        events
            .iter()
            .filter(|e| e.covariates.get(covariate).map(|s| s.as_str()) == Some(value))
            .cloned()
            .collect()
    };
    let in_level = subset(level);
    let in_ref = subset(reference);
    if in_level.is_empty() || in_ref.is_empty() {
        return Err(Error::DegenerateCounts(format!(
            "empty stratum for '{level}' or '{reference}'"
        )));
    }
    let mut log_ratio = 0.0;
    for (cause, sign) in [(Variant::One, 1.0), (Variant::Two, -1.0)] {
        for (records, lv_sign) in [(&in_level, 1.0), (&in_ref, -1.0)] {
            let lambda = pooled_cumulative_hazard(records, cause)?;
            if lambda <= 0.0 {
                return Err(Error::DegenerateCounts(format!(
                    "no cause-{} events in a stratum",
                    cause.code()
                )));
            }
            log_ratio += sign * lv_sign * lambda.ln();
        }
    }
    Ok(log_ratio.exp())
}

/// Full-horizon Nelson-Aalen cumulative hazard pooled over arms.
fn pooled_cumulative_hazard(events: &[EventRecord], cause: Variant) -> Result<f64> {
    let horizon = events.iter().map(|e| e.time).max().unwrap() as usize;
    let mut exits = vec![0u64; horizon + 1];
    let mut counts = vec![0u64; horizon + 1];
    for e in events {
        let last = match e.event {
            EventType::Infected(v) if v != cause => e.time - 1,
            _ => e.time,
        } as usize;
        if last > 0 {
            exits[last] += 1;
        }
        if e.event == EventType::Infected(cause) {
            counts[e.time as usize] += 1;
        }
    }
    let mut at_risk: u64 = 0;
    let mut lambda = 0.0;
    for k in (1..=horizon).rev() {
        at_risk += exits[k];
        if at_risk > 0 {
            lambda += counts[k] as f64 / at_risk as f64;
        } else if counts[k] > 0 {
            return Err(Error::RiskSetExhausted(k as u32));
        }
    }
    Ok(lambda)
}
