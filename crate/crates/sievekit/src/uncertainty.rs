//! Confidence-interval constructions: log-normal risk-ratio intervals (Katz
//! Method C), the correlation-aware decomposition for the CCS, the
//! F-distribution interval for a trinomial proportion ratio, and a
//! deterministic nonparametric percentile bootstrap.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, CountTable, Exposure, Variant};
use crate::error::{Error, Result};
use crate::estimands::CcsMode;
use crate::parallel::{derive_seed, map_indexed};
use crate::special::{f_quantile, normal_quantile};

/// Variance of a log risk ratio under the log-normal approximation:
/// `(1-p1)/(n1 p1) + (1-p0)/(n0 p0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogVariance(pub f64);

impl LogVariance {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn katz_log_variance(x1: f64, n1: f64, x0: f64, n0: f64) -> Result<LogVariance> {
    for (x, n, name) in [(x1, n1, "treated"), (x0, n0, "control")] {
        if !(x > 0.0 && x < n) {
            return Err(Error::DegenerateCounts(format!(
                "{name} cell must be strictly interior (0 < {x} < {n})"
            )));
        }
    }
    let p1 = x1 / n1;
    let p0 = x0 / n0;
    let v = (1.0 - p1) / (n1 * p1) + (1.0 - p0) / (n0 * p0);
    if !v.is_finite() {
        return Err(Error::DegenerateCounts("non-finite log variance".into()));
    }
    Ok(LogVariance(v))
}

/// Log-normal confidence interval for a risk ratio from its 2x2 cells
/// (Katz Method C): `exp(log r ± z_{1-α/2} sqrt(Var))`.
pub fn katz_ci(rr_point: f64, cells: (u64, u64, u64, u64), alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let (x1, n1, x0, n0) = cells;
    let var = katz_log_variance(x1 as f64, n1 as f64, x0 as f64, n0 as f64)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let half = z * var.value().sqrt();
    Ok((rr_point * (-half).exp(), rr_point * half.exp()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(())
}

/// Variance method for the observed-data CCS interval.
///
/// `Sum` adds the two variant-wise Katz variances, ignoring their dependence;
/// this overestimates the variance and the interval is conservative.
/// `Decomposition` rewrites the CCS as three factors whose middle term is
/// jointly independent of the outer two, and combines the outer pair with the
/// known correlation of -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcsVarianceMethod {
    Sum,
    Decomposition,
}

/// Log-variance of the observed-mode CCS under the requested method.
pub fn ccs_log_variance(counts: &CountTable, method: CcsVarianceMethod) -> Result<LogVariance> {
    let n = counts.excluding_both_exposed();
    let n1: f64 = n[1].iter().sum::<u64>() as f64;
    let n0: f64 = n[0].iter().sum::<u64>() as f64;
    let x = |a: usize, y: usize| n[a][y] as f64;

    match method {
        CcsVarianceMethod::Sum => {
            let v1 = katz_log_variance(x(1, 1), n1, x(0, 1), n0)?;
            let v2 = katz_log_variance(x(1, 2), n1, x(0, 2), n0)?;
            Ok(LogVariance(v1.value() + v2.value()))
        }
        CcsVarianceMethod::Decomposition => {
            // CCS = [P(Y=1|A=1)/P(Y=1|A=0)]
            //     * [P(Y=2|A=0,Y!=1)/P(Y=2|A=1,Y!=1)]
            //     * [P(Y!=1|A=0)/P(Y!=1|A=1)].
            // The middle factor is independent of the outer two; the outer
            // pair are the variant-1 risk ratio and the complement ratio
            // P(Y!=1|A=1)/P(Y!=1|A=0), with correlation -1 on the log scale.
            let not1_1 = x(1, 0) + x(1, 2);
            let not1_0 = x(0, 0) + x(0, 2);
            let v_mid = katz_log_variance(x(1, 2), not1_1, x(0, 2), not1_0)?;
            let v_rr1 = katz_log_variance(x(1, 1), n1, x(0, 1), n0)?;
            let v_not1 = katz_log_variance(not1_1, n1, not1_0, n0)?;
            let s1 = v_rr1.value().sqrt();
            let s2 = v_not1.value().sqrt();
            let v_outer = (s1 - s2) * (s1 - s2); // Var(X+Y) with rho = -1
            Ok(LogVariance(v_mid.value() + v_outer))
        }
    }
}

/// With measured exposure the two conditional risk ratios are independent
/// (they condition on disjoint exposure groups), so the exact log variance is
/// the sum of the two Katz variances over the E=1 and E=2 slices.
pub fn ccs_exposure_log_variance(counts: &CountTable) -> Result<LogVariance> {
    if !counts.exposure_measured() {
        return Err(Error::MissingExposure);
    }
    let mut total = 0.0;
    for variant in [Variant::One, Variant::Two] {
        let e = Exposure::Variant(variant);
        let j = variant.code();
        let x1 = counts.exposure_cell(Arm::Treated, e, j).unwrap() as f64;
        let m1 = counts.exposure_total(Arm::Treated, e).unwrap() as f64;
        let x0 = counts.exposure_cell(Arm::Control, e, j).unwrap() as f64;
        let m0 = counts.exposure_total(Arm::Control, e).unwrap() as f64;
        total += katz_log_variance(x1, m1, x0, m0)?.value();
    }
    Ok(LogVariance(total))
}

/// Log-symmetric confidence interval for the CCS around `point`.
pub fn ccs_ci(
    counts: &CountTable,
    point: f64,
    mode: CcsMode,
    method: CcsVarianceMethod,
    alpha: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let var = match mode {
        CcsMode::Observed => ccs_log_variance(counts, method)?,
        CcsMode::ExposureConditional => ccs_exposure_log_variance(counts)?,
    };
    let z = normal_quantile(1.0 - alpha / 2.0);
    let half = z * var.value().sqrt();
    Ok((point * (-half).exp(), point * half.exp()))
}

/// Conservative interval for the ratio `y1/y2` of two event counts from a
/// trinomial sample, built from F-distribution quantiles. `alpha` is the
/// significance level; the F quantile order is `1 - alpha/2`.
pub fn eet_trinomial_ci(y1: u64, y2: u64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if y1 == 0 || y2 == 0 {
        return Err(Error::DegenerateCounts(format!(
            "trinomial interval needs both event counts positive, got ({y1}, {y2})"
        )));
    }
    let p = 1.0 - alpha / 2.0;
    let (y1f, y2f) = (y1 as f64, y2 as f64);
    let f_lo = f_quantile(p, 2.0 * (y2f + 1.0), 2.0 * y1f)?;
    let f_hi = f_quantile(p, 2.0 * (y1f + 1.0), 2.0 * y2f)?;
    let lo = y1f / ((y2f + 1.0) * f_lo);
    let hi = (y1f + 1.0) / y2f * f_hi;
    Ok((lo, hi))
}

/// A bootstrap run: number of replicates, master seed, and the interval level.
/// Replicate `r` draws from an RNG stream derived from `(master_seed, r)`, so
/// the interval does not depend on how replicates are scheduled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub replicates: u32,
    pub master_seed: u64,
    pub alpha: f64,
    /// Label of the statistic being resampled, stamped into reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
}

impl BootstrapPlan {
    pub fn new(replicates: u32, master_seed: u64, alpha: f64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::Config("bootstrap needs at least one replicate".into()));
        }
        check_alpha(alpha)?;
        Ok(BootstrapPlan { replicates, master_seed, alpha, statistic: None })
    }

    pub fn for_statistic(mut self, label: impl Into<String>) -> Self {
        self.statistic = Some(label.into());
        self
    }
}

/// Count of degenerate replicates that were dropped from the interval.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub requested: u32,
    pub used: u32,
    pub degenerate: u32,
}

/// Percentile bootstrap interval for any statistic of the sample.
///
/// Resamples the items with replacement `plan.replicates` times and takes the
/// `alpha/2` and `1 - alpha/2` percentiles of the replicate statistics.
/// Replicates where the statistic is degenerate are dropped and counted.
pub fn bootstrap_ci<T, F>(items: &[T], plan: &BootstrapPlan, statistic: F) -> Result<(f64, f64, ReplicateSummary)>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync + Send,
{
    use rand::Rng;
    use rand::SeedableRng;

    if items.is_empty() {
        return Err(Error::Domain("cannot bootstrap an empty sample".into()));
    }
    let n = items.len();
    let values: Vec<Option<f64>> = map_indexed(plan.replicates as usize, |r| {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(plan.master_seed, r as u64, 0));
        let resample: Vec<T> = (0..n).map(|_| items[rng.gen_range(0..n)].clone()).collect();
        statistic(&resample).ok().filter(|v| v.is_finite())
    });

    let mut kept: Vec<f64> = values.iter().flatten().copied().collect();
    let summary = ReplicateSummary {
        requested: plan.replicates,
        used: kept.len() as u32,
        degenerate: plan.replicates - kept.len() as u32,
    };
    if kept.is_empty() {
        return Err(Error::BootstrapFailure(plan.replicates));
    }
    kept.sort_by(|a, b| a.total_cmp(b));
    let lo = percentile(&kept, plan.alpha / 2.0);
    let hi = percentile(&kept, 1.0 - plan.alpha / 2.0);
    Ok((lo, hi, summary))
}

/// Linear-interpolation percentile of a sorted slice (quantile position
/// `q * (len - 1)`).
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    }
}
