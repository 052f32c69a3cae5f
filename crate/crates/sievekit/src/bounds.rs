//! Sharp partial-identification bounds for the absolute CECE ratio and the
//! vaccine-efficacy ratio, in the regime where the treatment is protective
//! against both variants. Other sign regimes are rejected loudly; the source
//! results cover only this case.

use serde::{Deserialize, Serialize};

use crate::data::{CountTable, Variant};
use crate::error::{Error, Result};

/// What an [`IntervalBound`] brackets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundTarget {
    AceceRatio,
    VeRatio,
}

/// A partial-identification interval. `point_identified` is set when the
/// interval collapses to a point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalBound {
    pub lo: f64,
    pub hi: f64,
    pub target: BoundTarget,
    pub point_identified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_provenance: Option<String>,
}

/// The four observed infection probabilities the bounds are built from.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    /// P(Y=1|A=0)
    pub variant1_control: f64,
    /// P(Y=1|A=1)
    pub variant1_treated: f64,
    /// P(Y=2|A=0)
    pub variant2_control: f64,
    /// P(Y=2|A=1)
    pub variant2_treated: f64,
}

impl OutcomeProbabilities {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        for (i, v) in p.iter().enumerate() {
            if !(*v > 0.0 && *v <= 1.0) {
                return Err(Error::Domain(format!(
                    "probability #{i} must be in (0,1], got {v}"
                )));
            }
        }
        Ok(OutcomeProbabilities {
            variant1_control: p[0],
            variant1_treated: p[1],
            variant2_control: p[2],
            variant2_treated: p[3],
        })
    }

    /// Empirical proportions from a count table.
    pub fn from_counts(counts: &CountTable) -> Result<Self> {
        let n = counts.excluding_both_exposed();
        let totals = [n[0].iter().sum::<u64>() as f64, n[1].iter().sum::<u64>() as f64];
        if totals[0] == 0.0 || totals[1] == 0.0 {
            return Err(Error::DegenerateCounts("empty treatment arm".into()));
        }
        OutcomeProbabilities::new([
            n[0][1] as f64 / totals[0],
            n[1][1] as f64 / totals[1],
            n[0][2] as f64 / totals[0],
            n[1][2] as f64 / totals[1],
        ])
    }

    fn check_regime(&self) -> Result<(f64, f64)> {
        let d1 = self.variant1_control - self.variant1_treated;
        let d2 = self.variant2_control - self.variant2_treated;
        if d1 <= 0.0 {
            return Err(Error::OutOfRegime(format!(
                "requires P(Y=1|A=0) > P(Y=1|A=1); got {} <= {}",
                self.variant1_control, self.variant1_treated
            )));
        }
        if d2 <= 0.0 {
            return Err(Error::OutOfRegime(format!(
                "requires P(Y=2|A=0) > P(Y=2|A=1); got {} <= {}",
                self.variant2_control, self.variant2_treated
            )));
        }
        Ok((d1, d2))
    }
}

/// Sharp bounds on the absolute CECE ratio:
/// `[dP1/dP2 * P(Y=2|A=0), dP1/dP2 / P(Y=1|A=0)]` with
/// `dPj = P(Y=j|A=0) - P(Y=j|A=1)`. Point identification requires both
/// control-arm probabilities equal to one.
pub fn acece_ratio_bounds(p: OutcomeProbabilities) -> Result<IntervalBound> {
    let (d1, d2) = p.check_regime()?;
    let delta_ratio = d1 / d2;
    let lo = delta_ratio * p.variant2_control;
    let hi = delta_ratio / p.variant1_control;
    let point_identified = p.variant1_control == 1.0 && p.variant2_control == 1.0;
    Ok(IntervalBound { lo, hi, target: BoundTarget::AceceRatio, point_identified, baseline_provenance: None })
}

/// Vaccine-efficacy ratio bounds: the absolute-CECE bounds rescaled by the
/// supplied control-arm infection probabilities given matching exposure,
/// `VE1/VE2 = aCECEr * P(Y^{a=0}=2|E=2) / P(Y^{a=0}=1|E=1)`.
pub fn ve_ratio_bounds(
    p: OutcomeProbabilities,
    baseline_variant1: f64,
    baseline_variant2: f64,
    provenance: impl Into<String>,
) -> Result<IntervalBound> {
    for (v, which) in [(baseline_variant1, Variant::One), (baseline_variant2, Variant::Two)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!(
                "baseline infection probability for variant {} must be positive, got {v}",
                which.code()
            )));
        }
    }
    let base = acece_ratio_bounds(p)?;
    let scale = baseline_variant2 / baseline_variant1;
    Ok(IntervalBound {
        lo: base.lo * scale,
        hi: base.hi * scale,
        target: BoundTarget::VeRatio,
        point_identified: base.point_identified,
        baseline_provenance: Some(provenance.into()),
    })
}
