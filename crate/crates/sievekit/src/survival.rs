//! Discrete-time survival estimation with two competing causes: cause-specific
//! hazards, cumulative incidence, the time-to-event contrast and challenge
//! subtype estimators, Nelson-Aalen cumulative hazards over visit windows, and
//! a Breslow-tie Cox partial-likelihood fitter for the treatment indicator.
//!
//! Risk-set conventions: drop-outs stay at risk through their censoring
//! interval; in the cause-specific analyses a competing-cause event censors at
//! the start of its interval, so such subjects are not at risk for the other
//! cause during the interval of their event. The joint hazard table keeps one
//! shared risk set per interval so that incidence conservation is exact.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, EventRecord, EventType, Variant};
use crate::error::{Error, Result};
use crate::estimands::{Assumption, EstimandTag, RatioEstimate, StratumSelector};

fn tte_core_assumptions() -> Vec<Assumption> {
    vec![
        Assumption::TteStandardRct,
        Assumption::TteExposureNecessity,
        Assumption::TteNoCrossInfectivity,
        Assumption::ExposureRatioOfExposed,
        Assumption::ScaledNewInfection,
    ]
}

/// Discrete cause-specific hazards per interval and arm, with the survival
/// factor `h0 = 1 - h1 - h2` implied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HazardTable {
    horizon: u32,
    /// `hazards[k-1][cause-1][arm]`
    hazards: Vec<[[f64; 2]; 2]>,
    /// Risk-set sizes when estimated from data; empty for synthetic tables.
    at_risk: Vec<[u64; 2]>,
    /// Event counts when estimated from data; empty for synthetic tables.
    events: Vec<[[u64; 2]; 2]>,
}

impl HazardTable {
    /// Builds a table from per-interval hazard values `[k][cause][arm]`.
    pub fn from_hazards(hazards: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        if hazards.is_empty() {
            return Err(Error::Domain("hazard table needs at least one interval".into()));
        }
        for (i, row) in hazards.iter().enumerate() {
            for (&h1, &h2) in row[0].iter().zip(&row[1]) {
                if !(0.0..=1.0).contains(&h1) || !(0.0..=1.0).contains(&h2) || h1 + h2 > 1.0 {
                    return Err(Error::Domain(format!(
                        "invalid hazards at interval {}: h1={h1}, h2={h2}",
                        i + 1
                    )));
                }
            }
        }
        let horizon = hazards.len() as u32;
        Ok(HazardTable { horizon, hazards, at_risk: Vec::new(), events: Vec::new() })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Cause-specific hazard at interval `k` (1-based).
    pub fn hazard(&self, cause: Variant, k: u32, arm: Arm) -> f64 {
        self.hazards[(k - 1) as usize][(cause.code() - 1) as usize][arm.index()]
    }

    /// Probability of surviving interval `k` event-free given at risk.
    pub fn survival_factor(&self, k: u32, arm: Arm) -> f64 {
        1.0 - self.hazard(Variant::One, k, arm) - self.hazard(Variant::Two, k, arm)
    }

    pub fn at_risk(&self, k: u32, arm: Arm) -> Option<u64> {
        self.at_risk.get((k - 1) as usize).map(|r| r[arm.index()])
    }

    pub fn event_count(&self, cause: Variant, k: u32, arm: Arm) -> Option<u64> {
        self.events.get((k - 1) as usize).map(|r| r[(cause.code() - 1) as usize][arm.index()])
    }
}

/// Estimates the joint hazard table from first-event records: the hazard for
/// cause j at interval k is the count of type-j events at k over the shared
/// risk set of subjects still in follow-up at k.
pub fn discrete_hazards(events: &[EventRecord]) -> Result<HazardTable> {
    if events.is_empty() {
        return Err(Error::Domain("no event records".into()));
    }
    let horizon = events.iter().map(|e| e.time).max().unwrap();
    let k_max = horizon as usize;

    let mut exits = vec![[0u64; 2]; k_max + 1]; // exits[t][arm]: subjects leaving after t
    let mut event_counts = vec![[[0u64; 2]; 2]; k_max + 1];
    for e in events {
        let a = e.arm.index();
        exits[e.time as usize][a] += 1;
        if let EventType::Infected(v) = e.event {
            event_counts[e.time as usize][(v.code() - 1) as usize][a] += 1;
        }
    }

    // at_risk[k] = number with time >= k, per arm.
    let mut at_risk = vec![[0u64; 2]; k_max];
    let mut running = [0u64; 2];
    for k in (1..=k_max).rev() {
        running[0] += exits[k][0];
        running[1] += exits[k][1];
        at_risk[k - 1] = running;
    }
    for (arm, &n) in at_risk[0].iter().enumerate() {
        if n == 0 {
            return Err(Error::Domain(format!("arm {arm} has no subjects at risk")));
        }
    }

    let mut hazards = Vec::with_capacity(k_max);
    let mut counts = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut row = [[0.0; 2]; 2];
        let mut cnt = [[0u64; 2]; 2];
        for arm in 0..2 {
            let n = at_risk[k - 1][arm];
            for cause in 0..2 {
                let d = event_counts[k][cause][arm];
                cnt[cause][arm] = d;
                if d > 0 && n == 0 {
                    return Err(Error::RiskSetExhausted(k as u32));
                }
                row[cause][arm] = if n == 0 { 0.0 } else { d as f64 / n as f64 };
            }
        }
        hazards.push(row);
        counts.push(cnt);
    }

    Ok(HazardTable { horizon, hazards, at_risk, events: counts })
}

/// Cumulative incidence per cause, arm and interval, plus event-free survival.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncidenceTable {
    horizon: u32,
    /// `mu[k-1][cause-1][arm]`
    mu: Vec<[[f64; 2]; 2]>,
    /// `survival[k-1][arm]`: probability event-free through interval k.
    survival: Vec<[f64; 2]>,
}

impl IncidenceTable {
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn incidence(&self, cause: Variant, k: u32, arm: Arm) -> f64 {
        self.mu[(k - 1) as usize][(cause.code() - 1) as usize][arm.index()]
    }

    pub fn survival(&self, k: u32, arm: Arm) -> f64 {
        self.survival[(k - 1) as usize][arm.index()]
    }
}

/// Evaluates the incidence recursion: the cause-j incidence at k accumulates
/// the interval hazard times the probability of reaching the interval
/// event-free. Conservation `mu1 + mu2 + survival = 1` holds exactly.
pub fn cumulative_incidence(table: &HazardTable) -> IncidenceTable {
    let k_max = table.horizon() as usize;
    let mut mu = Vec::with_capacity(k_max);
    let mut survival = Vec::with_capacity(k_max);
    let mut surv = [1.0_f64; 2];
    let mut acc = [[0.0_f64; 2]; 2];
    for k in 1..=k_max as u32 {
        for arm in [Arm::Control, Arm::Treated] {
            let a = arm.index();
            acc[0][a] += table.hazard(Variant::One, k, arm) * surv[a];
            acc[1][a] += table.hazard(Variant::Two, k, arm) * surv[a];
            surv[a] *= table.survival_factor(k, arm);
        }
        mu.push(acc);
        survival.push(surv);
    }
    IncidenceTable { horizon: table.horizon(), mu, survival }
}

/// Time-to-event contrast conditional on exposure at interval `k`: the ratio
/// of arm-wise cumulative-incidence ratios of the two causes.
pub fn cce_k(incidence: &IncidenceTable, k: u32) -> Result<RatioEstimate> {
    if k < 1 || k > incidence.horizon() {
        return Err(Error::Config(format!("k={k} outside horizon 1..={}", incidence.horizon())));
    }
    for (cause, arm, name) in [
        (Variant::One, Arm::Control, "mu1(0)"),
        (Variant::One, Arm::Treated, "mu1(1)"),
        (Variant::Two, Arm::Treated, "mu2(1)"),
        (Variant::Two, Arm::Control, "mu2(0)"),
    ] {
        if incidence.incidence(cause, k, arm) <= 0.0 {
            return Err(Error::DegenerateIncidence(format!("{name} is zero at k={k}")));
        }
    }
    let r1 = incidence.incidence(Variant::One, k, Arm::Treated) / incidence.incidence(Variant::One, k, Arm::Control);
    let r2 = incidence.incidence(Variant::Two, k, Arm::Treated) / incidence.incidence(Variant::Two, k, Arm::Control);
    Ok(RatioEstimate {
        estimand: EstimandTag::CceK,
        stratum: StratumSelector::Marginal.label(),
        point: r1 / r2,
        ci: None,
        alpha: None,
        method: Default::default(),
        assumptions: vec![
            Assumption::UniqueExposure,
            Assumption::TteStandardRct,
            Assumption::TteExposureNecessity,
        ],
        route: Some(format!("k={k}")),
    })
}

/// Marginal challenge subtype effect at interval `k` from the discrete
/// hazards: the ratio of arm-wise hazard ratios of the two causes.
pub fn cse_k_nonparametric(table: &HazardTable, k: u32) -> Result<RatioEstimate> {
    if k < 1 || k > table.horizon() {
        return Err(Error::Config(format!("k={k} outside horizon 1..={}", table.horizon())));
    }
    for (cause, arm) in [
        (Variant::One, Arm::Treated),
        (Variant::One, Arm::Control),
        (Variant::Two, Arm::Treated),
        (Variant::Two, Arm::Control),
    ] {
        if table.hazard(cause, k, arm) <= 0.0 {
            return Err(Error::DegenerateCounts(format!(
                "hazard h[{}][{k}][{}] is zero",
                cause.code(),
                arm.index()
            )));
        }
    }
    let rr1 = table.hazard(Variant::One, k, Arm::Treated) / table.hazard(Variant::One, k, Arm::Control);
    let rr2 = table.hazard(Variant::Two, k, Arm::Treated) / table.hazard(Variant::Two, k, Arm::Control);
    Ok(RatioEstimate {
        estimand: EstimandTag::CseK,
        stratum: StratumSelector::Marginal.label(),
        point: rr1 / rr2,
        ci: None,
        alpha: None,
        method: Default::default(),
        assumptions: tte_core_assumptions(),
        route: Some(format!("k={k}")),
    })
}

// ---------------------------------------------------------------------------
// Cause-specific risk sets
// ---------------------------------------------------------------------------

/// Last interval during which a subject is at risk for a `cause`-specific
/// analysis: competing-cause events censor at the start of their interval.
fn last_at_risk(record: &EventRecord, cause: Variant) -> u32 {
    match record.event {
        EventType::Infected(v) if v != cause => record.time - 1,
        _ => record.time,
    }
}

/// Per-interval risk-set and event counts by arm for one cause.
struct CauseArmTable {
    /// `rows[k-1] = (at_risk[arm], events[arm])`
    rows: Vec<([u64; 2], [u64; 2])>,
}

fn cause_arm_table(events: &[EventRecord], cause: Variant) -> Result<CauseArmTable> {
    if events.is_empty() {
        return Err(Error::Domain("no event records".into()));
    }
    let k_max = events.iter().map(|e| e.time).max().unwrap() as usize;
    let mut exits = vec![[0u64; 2]; k_max + 1];
    let mut counts = vec![[0u64; 2]; k_max + 1];
    for e in events {
        let a = e.arm.index();
        let last = last_at_risk(e, cause) as usize;
        if last > 0 {
            exits[last][a] += 1;
        }
        if e.event == EventType::Infected(cause) {
            counts[e.time as usize][a] += 1;
        }
    }
    let mut rows = vec![([0u64; 2], [0u64; 2]); k_max];
    let mut running = [0u64; 2];
    for k in (1..=k_max).rev() {
        running[0] += exits[k][0];
        running[1] += exits[k][1];
        rows[k - 1] = (running, [counts[k][0], counts[k][1]]);
    }
    Ok(CauseArmTable { rows })
}

/// Nelson-Aalen cumulative hazard for one cause over a window of intervals,
/// per arm: the sum of interval event counts over risk-set sizes.
pub fn nelson_aalen(events: &[EventRecord], cause: Variant, window: (u32, u32)) -> Result<[f64; 2]> {
    let table = cause_arm_table(events, cause)?;
    let (k1, k2) = check_window(window, table.rows.len() as u32)?;
    let mut cumulative = [0.0; 2];
    for arm in 0..2 {
        let mut any_risk = false;
        for k in k1..=k2 {
            let (at_risk, d) = table.rows[(k - 1) as usize];
            if at_risk[arm] > 0 {
                any_risk = true;
                cumulative[arm] += d[arm] as f64 / at_risk[arm] as f64;
            }
        }
        if !any_risk {
            return Err(Error::RiskSetExhausted(k1));
        }
    }
    Ok(cumulative)
}

fn check_window(window: (u32, u32), horizon: u32) -> Result<(u32, u32)> {
    let (k1, k2) = window;
    if k1 < 1 || k2 < k1 || k2 > horizon {
        return Err(Error::Config(format!(
            "window {k1}:{k2} is not within 1..={horizon}"
        )));
    }
    Ok((k1, k2))
}

/// Windowed cumulative-hazard contrast used by the composite null test: the
/// arm-wise Nelson-Aalen ratio for cause 1 over the same ratio for cause 2,
/// with the delta-method variance of its log.
#[derive(Debug, Clone, Copy)]
pub struct WindowContrast {
    pub ratio: f64,
    pub log_variance: f64,
}

pub fn cumulative_hazard_contrast(events: &[EventRecord], window: (u32, u32)) -> Result<WindowContrast> {
    let mut log_ratio = 0.0;
    let mut log_var = 0.0;
    for (cause, sign) in [(Variant::One, 1.0), (Variant::Two, -1.0)] {
        let table = cause_arm_table(events, cause)?;
        let (k1, k2) = check_window(window, table.rows.len() as u32)?;
        for arm in 0..2 {
            let mut lambda = 0.0;
            let mut var = 0.0;
            for k in k1..=k2 {
                let (at_risk, d) = table.rows[(k - 1) as usize];
                let n = at_risk[arm] as f64;
                if n > 0.0 {
                    lambda += d[arm] as f64 / n;
                    var += d[arm] as f64 / (n * n);
                }
            }
            if lambda <= 0.0 {
                return Err(Error::DegenerateCounts(format!(
                    "no cause-{} events in window {k1}:{k2} for arm {arm}",
                    cause.code()
                )));
            }
            let arm_sign = if arm == 1 { 1.0 } else { -1.0 };
            log_ratio += sign * arm_sign * lambda.ln();
            log_var += var / (lambda * lambda);
        }
    }
    Ok(WindowContrast { ratio: log_ratio.exp(), log_variance: log_var })
}

// ---------------------------------------------------------------------------
// Cox partial likelihood (Breslow ties)
// ---------------------------------------------------------------------------

/// Fitted Cox model for one cause: the treatment log hazard ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: f64,
    pub se: f64,
    pub cause: Variant,
    pub iterations: usize,
    pub converged: bool,
    pub n_events: u64,
}

const COX_MAX_ITER: usize = 50;
const COX_SCORE_TOL: f64 = 1e-10;

/// Aggregated design for the partial likelihood: distinct covariate patterns
/// with per-interval risk-set and event counts. Intervals are coarse, so ties
/// are structural; Breslow's approximation keeps the likelihood smooth.
pub(crate) struct PatternedLikelihood {
    pub patterns: Vec<Vec<f64>>,
    /// `intervals[i] = (at_risk per pattern, events per pattern)`, event intervals only.
    pub intervals: Vec<(Vec<u64>, Vec<u64>)>,
    pub p: usize,
}

pub(crate) fn build_patterned<F>(events: &[EventRecord], cause: Variant, design: F, p: usize) -> Result<PatternedLikelihood>
where
    F: Fn(&EventRecord) -> Vec<f64>,
{
    use std::collections::BTreeMap;
    if events.is_empty() {
        return Err(Error::Domain("no event records".into()));
    }
    let k_max = events.iter().map(|e| e.time).max().unwrap() as usize;

    let mut pattern_ids: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut patterns: Vec<Vec<f64>> = Vec::new();
    let mut subject_pattern = Vec::with_capacity(events.len());
    for e in events {
        let x = design(e);
        debug_assert_eq!(x.len(), p);
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let id = *pattern_ids.entry(key).or_insert_with(|| {
            patterns.push(x.clone());
            patterns.len() - 1
        });
        subject_pattern.push(id);
    }
    let n_pat = patterns.len();

    let mut exits = vec![vec![0u64; n_pat]; k_max + 1];
    let mut event_counts = vec![vec![0u64; n_pat]; k_max + 1];
    for (e, &pat) in events.iter().zip(&subject_pattern) {
        let last = last_at_risk(e, cause) as usize;
        if last > 0 {
            exits[last][pat] += 1;
        }
        if e.event == EventType::Infected(cause) {
            event_counts[e.time as usize][pat] += 1;
        }
    }

    let mut intervals = Vec::new();
    let mut running = vec![0u64; n_pat];
    let mut rows_rev = Vec::with_capacity(k_max);
    for k in (1..=k_max).rev() {
        for pat in 0..n_pat {
            running[pat] += exits[k][pat];
        }
        rows_rev.push((k, running.clone()));
    }
    for (k, at_risk) in rows_rev.into_iter().rev() {
        let d = &event_counts[k];
        if d.iter().any(|&v| v > 0) {
            intervals.push((at_risk, d.clone()));
        }
    }
    Ok(PatternedLikelihood { patterns, intervals, p })
}

impl PatternedLikelihood {
    /// Breslow log partial likelihood with score vector and observed
    /// information matrix (row-major, p x p).
    pub(crate) fn loglik(&self, beta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let exp_xb: Vec<f64> = self
            .patterns
            .iter()
            .map(|x| x.iter().zip(beta).map(|(xi, bi)| xi * bi).sum::<f64>().exp())
            .collect();
        let mut ll = 0.0;
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];
        for (at_risk, events) in &self.intervals {
            let mut s0 = 0.0;
            let mut s1 = vec![0.0; p];
            let mut s2 = vec![0.0; p * p];
            for (pat, (&n, &ex)) in at_risk.iter().zip(&exp_xb).enumerate() {
                if n == 0 {
                    continue;
                }
                let w = n as f64 * ex;
                s0 += w;
                let x = &self.patterns[pat];
                for i in 0..p {
                    s1[i] += w * x[i];
                    for j in 0..p {
                        s2[i * p + j] += w * x[i] * x[j];
                    }
                }
            }
            if s0 <= 0.0 {
                continue;
            }
            let d_total: u64 = events.iter().sum();
            if d_total == 0 {
                continue;
            }
            let d = d_total as f64;
            for (pat, &cnt) in events.iter().enumerate() {
                if cnt > 0 {
                    let x = &self.patterns[pat];
                    let xb: f64 = x.iter().zip(beta).map(|(xi, bi)| xi * bi).sum();
                    ll += cnt as f64 * xb;
                    for i in 0..p {
                        score[i] += cnt as f64 * x[i];
                    }
                }
            }
            ll -= d * s0.ln();
            for i in 0..p {
                score[i] -= d * s1[i] / s0;
                for j in 0..p {
                    info[i * p + j] += d * (s2[i * p + j] / s0 - s1[i] * s1[j] / (s0 * s0));
                }
            }
        }
        (ll, score, info)
    }
}

/// Gauss-Jordan inverse with partial pivoting for the small information
/// matrices that occur here (p is the treatment column plus a handful of
/// covariate indicators).
pub(crate) fn invert_spd(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let w = 2 * p;
    let mut aug = vec![0.0_f64; p * w];
    for i in 0..p {
        for j in 0..p {
            aug[i * w + j] = a[i * p + j];
        }
        aug[i * w + p + i] = 1.0;
    }
    for col in 0..p {
        let mut pivot_row = col;
        let mut pivot_val = aug[col * w + col].abs();
        for row in (col + 1)..p {
            if aug[row * w + col].abs() > pivot_val {
                pivot_val = aug[row * w + col].abs();
                pivot_row = row;
            }
        }
        if pivot_val < 1e-12 {
            return Err(Error::Separation("information matrix is singular".into()));
        }
        if pivot_row != col {
            for k in 0..w {
                aug.swap(col * w + k, pivot_row * w + k);
            }
        }
        let inv_pivot = 1.0 / aug[col * w + col];
        for k in 0..w {
            aug[col * w + k] *= inv_pivot;
        }
        for row in 0..p {
            if row != col {
                let f = aug[row * w + col];
                for k in 0..w {
                    aug[row * w + k] -= f * aug[col * w + k];
                }
            }
        }
    }
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = aug[i * w + p + j];
        }
    }
    Ok(out)
}

/// Newton iteration with step halving when the log likelihood does not
/// increase (rare-event likelihoods can be nearly flat). Converges when the
/// score sup-norm drops below 1e-10, within 50 iterations.
pub(crate) fn maximize_partial_likelihood(pl: &PatternedLikelihood) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let p = pl.p;
    let mut beta = vec![0.0; p];
    let (mut ll, mut score, mut info) = pl.loglik(&beta);
    for iter in 1..=COX_MAX_ITER {
        let inv = invert_spd(&info, p)?;
        let mut step = vec![0.0; p];
        for i in 0..p {
            for j in 0..p {
                step[i] += inv[i * p + j] * score[j];
            }
        }
        // Acceptance slack scales with |ll|: near the optimum the true
        // improvement per step drops below the rounding noise of the
        // log-likelihood sum, and an absolute slack would reject every step.
        let slack = 1e-12 * ll.abs().max(1.0);
        let mut scale = 1.0;
        let mut candidate;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect::<Vec<_>>();
            let (ll_new, score_new, info_new) = pl.loglik(&candidate);
            if ll_new >= ll - slack || halvings >= 30 {
                beta = candidate;
                ll = ll_new;
                score = score_new;
                info = info_new;
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        if beta.iter().any(|b| b.abs() > 30.0) {
            return Err(Error::Separation("coefficient diverging, likelihood is monotone".into()));
        }
        if score.iter().all(|s| s.abs() < COX_SCORE_TOL) {
            let inv = invert_spd(&info, p)?;
            let se = (0..p).map(|i| inv[i * p + i].max(0.0).sqrt()).collect();
            return Ok((beta, se, iter));
        }
    }
    Err(Error::CoxNoConverge(COX_MAX_ITER))
}

/// Fits the cause-specific Cox model with the treatment indicator as the only
/// covariate. Competing-cause events and drop-outs censor; ties within an
/// interval use Breslow's approximation.
pub fn cox_fit(events: &[EventRecord], cause: Variant) -> Result<CoxFit> {
    let mut events_per_arm = [0u64; 2];
    for e in events {
        if e.event == EventType::Infected(cause) {
            events_per_arm[e.arm.index()] += 1;
        }
    }
    let n_events = events_per_arm[0] + events_per_arm[1];
    if n_events == 0 {
        return Err(Error::DegenerateCounts(format!("no cause-{} events", cause.code())));
    }
    if events_per_arm[0] == 0 || events_per_arm[1] == 0 {
        return Err(Error::Separation(format!(
            "all cause-{} events fall in one arm",
            cause.code()
        )));
    }
    let pl = build_patterned(events, cause, |e| vec![e.arm.index() as f64], 1)?;
    let (beta, se, iterations) = maximize_partial_likelihood(&pl)?;
    Ok(CoxFit { beta: beta[0], se: se[0], cause, iterations, converged: true, n_events })
}

/// Challenge subtype effect from two cause-specific Cox fits:
/// `exp(beta_1 - beta_2)`. Constant over intervals under the fitted models.
pub fn cse_cox(events: &[EventRecord]) -> Result<RatioEstimate> {
    let fit1 = cox_fit(events, Variant::One)?;
    let fit2 = cox_fit(events, Variant::Two)?;
    let mut assumptions = tte_core_assumptions();
    assumptions.push(Assumption::IndependentCensoring);
    Ok(RatioEstimate {
        estimand: EstimandTag::CseCox,
        stratum: StratumSelector::Marginal.label(),
        point: (fit1.beta - fit2.beta).exp(),
        ci: None,
        alpha: None,
        method: Default::default(),
        assumptions,
        route: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EventRecord;

    fn ev(a: u8, time: u32, event: u8) -> EventRecord {
        EventRecord::new(Arm::from_u8(a).unwrap(), time, EventType::from_u8(event).unwrap())
    }

    fn toy_events() -> Vec<EventRecord> {
        let mut out = Vec::new();
        // arm 1: 10 subjects, one type-1 event at k=1, rest censored at 3
        out.push(ev(1, 1, 1));
        for _ in 0..9 {
            out.push(ev(1, 3, 0));
        }
        // arm 0: 10 subjects, one type-2 event at k=2, rest censored at 3
        out.push(ev(0, 2, 2));
        for _ in 0..9 {
            out.push(ev(0, 3, 0));
        }
        out
    }

    #[test]
    fn discrete_hazards_direct_ratio() {
        let table = discrete_hazards(&toy_events()).unwrap();
        assert_eq!(table.horizon(), 3);
        assert!((table.hazard(Variant::One, 1, Arm::Treated) - 0.1).abs() < 1e-15);
        assert_eq!(table.hazard(Variant::Two, 1, Arm::Treated), 0.0);
        assert!((table.hazard(Variant::Two, 2, Arm::Control) - 0.1).abs() < 1e-15);
        assert_eq!(table.at_risk(1, Arm::Treated), Some(10));
        assert_eq!(table.at_risk(2, Arm::Treated), Some(9));
    }

    #[test]
    fn discrete_hazards_no_events_all_zero() {
        let events: Vec<EventRecord> = (0..6).map(|i| ev((i % 2) as u8, 4, 0)).collect();
        let table = discrete_hazards(&events).unwrap();
        for k in 1..=4 {
            for arm in [Arm::Control, Arm::Treated] {
                assert_eq!(table.hazard(Variant::One, k, arm), 0.0);
                assert_eq!(table.survival_factor(k, arm), 1.0);
            }
        }
    }

    #[test]
    fn at_risk_is_nonincreasing() {
        let table = discrete_hazards(&toy_events()).unwrap();
        for arm in [Arm::Control, Arm::Treated] {
            for k in 2..=table.horizon() {
                assert!(table.at_risk(k, arm).unwrap() <= table.at_risk(k - 1, arm).unwrap());
            }
        }
    }

    #[test]
    fn cumulative_incidence_hand_recursion() {
        // h1 = (0.1, 0.1), h2 = (0, 0): mu1 at k=2 is 0.1 + 0.9 * 0.1 = 0.19.
        let table = HazardTable::from_hazards(vec![
            [[0.1, 0.1], [0.0, 0.0]],
            [[0.1, 0.1], [0.0, 0.0]],
        ])
        .unwrap();
        let inc = cumulative_incidence(&table);
        for arm in [Arm::Control, Arm::Treated] {
            assert!((inc.incidence(Variant::One, 2, arm) - 0.19).abs() < 1e-15);
        }
    }

    #[test]
    fn cumulative_incidence_single_period() {
        let table = HazardTable::from_hazards(vec![[[0.2, 0.2], [0.0, 0.0]]]).unwrap();
        let inc = cumulative_incidence(&table);
        assert!((inc.incidence(Variant::One, 1, Arm::Control) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn conservation_holds_to_machine_precision() {
        let table = HazardTable::from_hazards(vec![
            [[0.03, 0.01], [0.02, 0.05]],
            [[0.10, 0.20], [0.30, 0.15]],
            [[0.0, 0.0], [0.5, 0.5]],
        ])
        .unwrap();
        let inc = cumulative_incidence(&table);
        for k in 1..=3 {
            for arm in [Arm::Control, Arm::Treated] {
                let total = inc.incidence(Variant::One, k, arm)
                    + inc.incidence(Variant::Two, k, arm)
                    + inc.survival(k, arm);
                assert!((total - 1.0).abs() < 1e-12, "k={k}: {total}");
            }
        }
    }

    #[test]
    fn cce_k_hand_arithmetic() {
        // Incidence ratios 0.04/0.10 and 0.06/0.10 at k=1.
        let table = HazardTable::from_hazards(vec![[[0.10, 0.04], [0.10, 0.06]]]).unwrap();
        let inc = cumulative_incidence(&table);
        let est = cce_k(&inc, 1).unwrap();
        assert!((est.point - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cce_k_identity_on_identical_curves() {
        let table = HazardTable::from_hazards(vec![
            [[0.05, 0.05], [0.02, 0.02]],
            [[0.04, 0.04], [0.03, 0.03]],
        ])
        .unwrap();
        let inc = cumulative_incidence(&table);
        assert!((cce_k(&inc, 2).unwrap().point - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cce_k_names_zero_term() {
        let table = HazardTable::from_hazards(vec![[[0.10, 0.0], [0.10, 0.06]]]).unwrap();
        let inc = cumulative_incidence(&table);
        match cce_k(&inc, 1).unwrap_err() {
            Error::DegenerateIncidence(msg) => assert!(msg.contains("mu1(1)"), "{msg}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn cse_k_hand_arithmetic() {
        // hazards (j=1: 0.02 treated, 0.04 control; j=2: 0.03, 0.03) -> 0.5.
        let table = HazardTable::from_hazards(vec![[[0.04, 0.02], [0.03, 0.03]]]).unwrap();
        let est = cse_k_nonparametric(&table, 1).unwrap();
        assert!((est.point - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cse_k_identity_under_equal_effects() {
        let table = HazardTable::from_hazards(vec![[[0.04, 0.02], [0.06, 0.03]]]).unwrap();
        assert!((cse_k_nonparametric(&table, 1).unwrap().point - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cce_k_at_single_interval_equals_time_fixed_ccs() {
        // one interval: cumulative incidence is the interval hazard, so the
        // contrast collapses to the time-fixed ratio of ratios
        let table = HazardTable::from_hazards(vec![[[0.10, 0.04], [0.10, 0.06]]]).unwrap();
        let inc = cumulative_incidence(&table);
        let a = cce_k(&inc, 1).unwrap().point;
        let b = cse_k_nonparametric(&table, 1).unwrap().point;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn discrete_hazards_rejects_empty_arm() {
        let events = vec![ev(1, 2, 1), ev(1, 2, 0)];
        assert!(matches!(discrete_hazards(&events), Err(Error::Domain(_))));
    }

    #[test]
    fn cse_k_at_single_interval_equals_time_fixed_ccs() {
        use crate::data::tabulate;
        use crate::estimands::{ccs, CcsMode, EstimandOptions, StratumSelector};
        // All subjects observed through one interval; events at k=1.
        let mut events = Vec::new();
        let mut records = Vec::new();
        let spec = [(1u8, 900u64, 40u64, 60u64), (0u8, 800, 100, 100)];
        for (arm, none, y1, y2) in spec {
            for _ in 0..none {
                events.push(ev(arm, 1, 0));
            }
            for _ in 0..y1 {
                events.push(ev(arm, 1, 1));
            }
            for _ in 0..y2 {
                events.push(ev(arm, 1, 2));
            }
            for (y, count) in [(0u8, none), (1, y1), (2, y2)] {
                for _ in 0..count {
                    records.push(crate::data::SubjectRecord::new(
                        Arm::from_u8(arm).unwrap(),
                        crate::data::Outcome::from_u8(y).unwrap(),
                    ));
                }
            }
        }
        let hazards = discrete_hazards(&events).unwrap();
        let cse = cse_k_nonparametric(&hazards, 1).unwrap().point;
        let table = tabulate(&records, None).unwrap();
        let ccs_point = ccs(&table, &StratumSelector::Marginal, CcsMode::Observed, &EstimandOptions::default())
            .unwrap()
            .point;
        assert_eq!(cse.to_bits(), ccs_point.to_bits());
    }

    #[test]
    fn nelson_aalen_zero_without_events() {
        let events: Vec<EventRecord> = (0..8).map(|i| ev((i % 2) as u8, 3, 0)).collect();
        let na = nelson_aalen(&events, Variant::One, (1, 3)).unwrap();
        assert_eq!(na, [0.0, 0.0]);
    }

    #[test]
    fn nelson_aalen_single_event_among_ten() {
        let mut events = vec![ev(0, 1, 1)];
        for _ in 0..9 {
            events.push(ev(0, 2, 0));
        }
        events.push(ev(1, 2, 0));
        let na = nelson_aalen(&events, Variant::One, (1, 1)).unwrap();
        assert!((na[0] - 0.1).abs() < 1e-15);
        assert_eq!(na[1], 0.0);
    }

    #[test]
    fn nelson_aalen_nondecreasing_in_right_endpoint() {
        let events = toy_events();
        let mut last = 0.0;
        for k2 in 1..=3 {
            let na = nelson_aalen(&events, Variant::One, (1, k2)).unwrap();
            assert!(na[1] >= last);
            last = na[1];
        }
    }

    #[test]
    fn nelson_aalen_competing_event_censors_at_interval_start() {
        // One cause-2 event at k=1 among 5 in arm 0; the cause-1 risk set at
        // k=1 must exclude it.
        let mut events = vec![ev(0, 1, 2), ev(0, 1, 1)];
        for _ in 0..3 {
            events.push(ev(0, 2, 0));
        }
        events.push(ev(1, 2, 0));
        let na = nelson_aalen(&events, Variant::One, (1, 1)).unwrap();
        assert!((na[0] - 0.25).abs() < 1e-15, "expected 1/4, got {}", na[0]);
    }

    #[test]
    fn nelson_aalen_invalid_window() {
        let events = toy_events();
        assert!(matches!(nelson_aalen(&events, Variant::One, (0, 2)), Err(Error::Config(_))));
        assert!(matches!(nelson_aalen(&events, Variant::One, (2, 1)), Err(Error::Config(_))));
        assert!(matches!(nelson_aalen(&events, Variant::One, (1, 9)), Err(Error::Config(_))));
    }

    #[test]
    fn cox_exchangeable_arms_give_zero_beta() {
        let mut events = Vec::new();
        for arm in [0u8, 1] {
            events.push(ev(arm, 1, 1));
            events.push(ev(arm, 2, 1));
            events.push(ev(arm, 2, 0));
            events.push(ev(arm, 3, 1));
            for _ in 0..5 {
                events.push(ev(arm, 3, 0));
            }
        }
        let fit = cox_fit(&events, Variant::One).unwrap();
        assert!(fit.beta.abs() < 1e-9, "beta = {}", fit.beta);
        assert!(fit.converged);
        assert!(fit.se > 0.0);
    }

    #[test]
    fn cox_separation_detected() {
        let mut events = vec![ev(1, 1, 1), ev(1, 2, 1)];
        for _ in 0..10 {
            events.push(ev(0, 3, 0));
            events.push(ev(1, 3, 0));
        }
        assert!(matches!(cox_fit(&events, Variant::One), Err(Error::Separation(_))));
    }

    #[test]
    fn cox_matches_brute_force_scan_on_toy_data() {
        // 6 subjects; independent check below maximizes the Breslow partial
        // likelihood by golden-section-free grid refinement.
        let events = vec![ev(1, 1, 1), ev(0, 1, 1), ev(1, 2, 1), ev(0, 2, 0), ev(0, 3, 1), ev(1, 3, 0)];
        let fit = cox_fit(&events, Variant::One).unwrap();
        let brute = brute_force_beta(&events, Variant::One);
        assert!((fit.beta - brute).abs() < 1e-6, "newton {} vs scan {brute}", fit.beta);
    }

    // Independent Breslow partial likelihood for the single treatment column,
    // written directly from the definition over individual subjects.
    pub(super) fn brute_force_loglik(events: &[EventRecord], cause: Variant, beta: f64) -> f64 {
        let k_max = events.iter().map(|e| e.time).max().unwrap();
        let mut ll = 0.0;
        for k in 1..=k_max {
            let mut d_treated = 0u32;
            let mut d_total = 0u32;
            let mut denom = 0.0;
            for e in events {
                if super::last_at_risk(e, cause) >= k {
                    denom += (beta * e.arm.index() as f64).exp();
                }
                if e.event == EventType::Infected(cause) && e.time == k {
                    d_total += 1;
                    if e.arm == Arm::Treated {
                        d_treated += 1;
                    }
                }
            }
            if d_total > 0 {
                ll += d_treated as f64 * beta - d_total as f64 * denom.ln();
            }
        }
        ll
    }

    pub(super) fn brute_force_beta(events: &[EventRecord], cause: Variant) -> f64 {
        let mut best = (-8.0, f64::NEG_INFINITY);
        let mut x = -8.0;
        while x <= 8.0 {
            let ll = brute_force_loglik(events, cause, x);
            if ll > best.1 {
                best = (x, ll);
            }
            x += 1e-2;
        }
        // refine around the coarse maximizer
        let mut lo = best.0 - 2e-2;
        let mut best_fine = best;
        while lo <= best.0 + 2e-2 {
            let ll = brute_force_loglik(events, cause, lo);
            if ll > best_fine.1 {
                best_fine = (lo, ll);
            }
            lo += 1e-4;
        }
        // final pass at 1e-6 resolution
        let mut x = best_fine.0 - 2e-4;
        let mut best_final = best_fine;
        while x <= best_fine.0 + 2e-4 {
            let ll = brute_force_loglik(events, cause, x);
            if ll > best_final.1 {
                best_final = (x, ll);
            }
            x += 1e-6;
        }
        best_final.0
    }

    #[test]
    fn cox_invariant_to_monotone_time_relabeling() {
        let events = vec![
            ev(1, 1, 1),
            ev(0, 1, 1),
            ev(1, 2, 1),
            ev(0, 2, 2),
            ev(0, 3, 1),
            ev(1, 3, 0),
            ev(0, 4, 0),
            ev(1, 4, 1),
        ];
        let relabeled: Vec<EventRecord> = events
            .iter()
            .map(|e| {
                let mut e2 = e.clone();
                e2.time = e.time * e.time + 3; // strictly increasing map
                e2
            })
            .collect();
        let a = cox_fit(&events, Variant::One).unwrap();
        let b = cox_fit(&relabeled, Variant::One).unwrap();
        assert!((a.beta - b.beta).abs() < 1e-9);
    }

    #[test]
    fn cse_cox_identity_for_mirrored_causes() {
        let mut events = Vec::new();
        for arm in [0u8, 1] {
            let reps = if arm == 1 { 3 } else { 5 };
            for _ in 0..reps {
                events.push(ev(arm, 1, 1));
                events.push(ev(arm, 1, 2));
                events.push(ev(arm, 2, 1));
                events.push(ev(arm, 2, 2));
            }
            for _ in 0..20 {
                events.push(ev(arm, 3, 0));
            }
        }
        let est = cse_cox(&events).unwrap();
        assert!((est.point - 1.0).abs() < 1e-8, "point = {}", est.point);
    }
}
