//! Canonical trial-data model: record types, CSV ingestion, structural
//! validation, and cross-tabulation into the count tables that every
//! time-fixed estimator consumes.
//!
//! Time-fixed CSV layout: header `a,y[,e][,d][,<covariates...>]`. With a
//! dichotomization config the outcome is derived from an `infected` flag (or
//! a nonzero `y`) and a genetic-distance column. Time-to-event layout:
//! `a,time,event[,<covariates...>]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment arm indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Arm> {
        match v {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }
}

/// Pathogen variant label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    One,
    Two,
}

impl Variant {
    /// Outcome / exposure code: 1 or 2.
    pub fn code(self) -> u8 {
        match self {
            Variant::One => 1,
            Variant::Two => 2,
        }
    }

    pub fn other(self) -> Variant {
        match self {
            Variant::One => Variant::Two,
            Variant::Two => Variant::One,
        }
    }
}

/// End-of-follow-up outcome: uninfected or infected by one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Uninfected,
    Infected(Variant),
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Uninfected => 0,
            Outcome::Infected(v) => v.code(),
        }
    }

    pub fn from_u8(v: u8) -> Option<Outcome> {
        match v {
            0 => Some(Outcome::Uninfected),
            1 => Some(Outcome::Infected(Variant::One)),
            2 => Some(Outcome::Infected(Variant::Two)),
            _ => None,
        }
    }
}

/// Exposure status over the follow-up period. `Both` is retained in the data
/// model even though estimators that need the unique-exposure assumption
/// exclude such rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Exposure {
    Unexposed,
    Variant(Variant),
    Both,
}

impl Exposure {
    /// Table slice index: 0, 1, 2, or 3 for `Both`.
    pub fn index(self) -> usize {
        match self {
            Exposure::Unexposed => 0,
            Exposure::Variant(v) => v.code() as usize,
            Exposure::Both => 3,
        }
    }
}

/// One row of time-fixed trial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub arm: Arm,
    pub outcome: Outcome,
    /// Absent when exposure was not measured in the trial.
    pub exposure: Option<Exposure>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariates: BTreeMap<String, String>,
}

impl SubjectRecord {
    pub fn new(arm: Arm, outcome: Outcome) -> Self {
        SubjectRecord { arm, outcome, exposure: None, covariates: BTreeMap::new() }
    }

    pub fn with_exposure(mut self, e: Exposure) -> Self {
        self.exposure = Some(e);
        self
    }
}

/// First-event indicator for one interval: censored (drop-out or
/// administrative end) or an infection by one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventType {
    Censored,
    Infected(Variant),
}

impl EventType {
    pub fn code(self) -> u8 {
        match self {
            EventType::Censored => 0,
            EventType::Infected(v) => v.code(),
        }
    }

    pub fn from_u8(v: u8) -> Option<EventType> {
        match v {
            0 => Some(EventType::Censored),
            1 => Some(EventType::Infected(Variant::One)),
            2 => Some(EventType::Infected(Variant::Two)),
            _ => None,
        }
    }
}

/// One subject of time-to-event data: exactly one event or censoring at a
/// discrete interval `1..=K` (first-event analysis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub arm: Arm,
    /// Interval index, 1-based.
    pub time: u32,
    pub event: EventType,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariates: BTreeMap<String, String>,
}

impl EventRecord {
    pub fn new(arm: Arm, time: u32, event: EventType) -> Self {
        EventRecord { arm, time, event, covariates: BTreeMap::new() }
    }
}

/// Threshold rule mapping a genetic distance to the dichotomized outcome:
/// among infected rows, `distance < threshold` is variant 1, anything else
/// variant 2. Ties `distance == threshold` therefore classify as variant 2;
/// this is a convention of the artifact, not something the source data
/// dictates, and it is surfaced in the config rather than buried.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkDichotomizationConfig {
    pub distance_column: String,
    pub threshold: f64,
}

impl MarkDichotomizationConfig {
    pub fn new(distance_column: impl Into<String>, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::Config("dichotomization threshold must be finite".into()));
        }
        Ok(MarkDichotomizationConfig { distance_column: distance_column.into(), threshold })
    }

    pub fn classify(&self, distance: f64) -> Variant {
        if distance < self.threshold {
            Variant::One
        } else {
            Variant::Two
        }
    }
}

/// Cross-tabulated counts `n[arm][y]`, optionally sliced by measured exposure
/// and/or partitioned by the levels of one covariate. The sufficient
/// statistic for all time-fixed functionals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    /// `n[arm][y]` for y in 0, 1, 2.
    pub n: [[u64; 3]; 2],
    /// `n[arm][e][y]` with e in 0, 1, 2, Both; present iff exposure measured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub by_exposure: Option<[[[u64; 3]; 4]; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strata: Option<Strata>,
}

/// Per-stratum sub-tables keyed by covariate level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    pub covariate: String,
    pub levels: BTreeMap<String, CountTable>,
}

impl CountTable {
    pub fn arm_total(&self, arm: Arm) -> u64 {
        self.n[arm.index()].iter().sum()
    }

    pub fn cell(&self, arm: Arm, y: u8) -> u64 {
        self.n[arm.index()][y as usize]
    }

    /// Subjects in `arm` with measured exposure `e`.
    pub fn exposure_total(&self, arm: Arm, e: Exposure) -> Option<u64> {
        self.by_exposure.map(|t| t[arm.index()][e.index()].iter().sum())
    }

    /// Count of `(arm, e, y)` when exposure was measured.
    pub fn exposure_cell(&self, arm: Arm, e: Exposure, y: u8) -> Option<u64> {
        self.by_exposure.map(|t| t[arm.index()][e.index()][y as usize])
    }

    pub fn exposure_measured(&self) -> bool {
        self.by_exposure.is_some()
    }

    /// Outcome counts with `E = Both` rows removed, for estimators that rely
    /// on the unique-exposure assumption. Identical to `n` when exposure is
    /// unmeasured (the exclusion is then vacuous).
    pub fn excluding_both_exposed(&self) -> [[u64; 3]; 2] {
        match self.by_exposure {
            None => self.n,
            Some(t) => {
                let mut out = self.n;
                for a in 0..2 {
                    for y in 0..3 {
                        out[a][y] -= t[a][Exposure::Both.index()][y];
                    }
                }
                out
            }
        }
    }

    fn add_record(&mut self, r: &SubjectRecord) {
        let a = r.arm.index();
        let y = r.outcome.code() as usize;
        self.n[a][y] += 1;
        if let (Some(t), Some(e)) = (self.by_exposure.as_mut(), r.exposure) {
            t[a][e.index()][y] += 1;
        }
    }
}

/// Which structural assumptions `validate` should check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssumptionChecks {
    /// Unique exposure: no `E = Both` rows.
    pub unique_exposure: bool,
    /// Exposure necessity: no infections with `E = 0`.
    pub exposure_necessity: bool,
    /// No cross-infectivity: outcome variant matches exposure variant.
    pub no_cross_infectivity: bool,
}

impl Default for AssumptionChecks {
    fn default() -> Self {
        AssumptionChecks { unique_exposure: true, exposure_necessity: true, no_cross_infectivity: true }
    }
}

/// A single record violating a checked assumption. `line` is the 1-based
/// position of the record in the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub line: usize,
    pub detail: String,
}

/// Violations are reported, never thrown: estimands differ in which
/// assumptions they need, so downstream consumers decide what is fatal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub counts: BTreeMap<String, usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every record against the requested structural assumptions.
/// Datasets without measured exposure vacuously pass all exposure checks.
pub fn validate(records: &[SubjectRecord], checks: AssumptionChecks) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        let Some(e) = r.exposure else { continue };
        if checks.unique_exposure && e == Exposure::Both {
            report.push("A1", line, "exposure to both variants recorded".to_string());
        }
        if checks.exposure_necessity && e == Exposure::Unexposed && r.outcome != Outcome::Uninfected {
            report.push("A4", line, format!("outcome y={} with no exposure", r.outcome.code()));
        }
        if checks.no_cross_infectivity {
            if let (Outcome::Infected(vy), Exposure::Variant(ve)) = (r.outcome, e) {
                if vy != ve {
                    report.push(
                        "A5",
                        line,
                        format!("outcome y={} with exposure e={}", vy.code(), ve.code()),
                    );
                }
            }
        }
    }
    report
}

impl ValidationReport {
    fn push(&mut self, rule: &str, line: usize, detail: String) {
        *self.counts.entry(rule.to_string()).or_insert(0) += 1;
        self.violations.push(Violation { rule: rule.to_string(), line, detail });
    }
}

/// Cross-tabulates records by `(arm, outcome)`, by exposure when measured on
/// every record, and per stratum when a covariate name is given. Empty
/// stratum levels are retained as zero sub-tables.
pub fn tabulate(records: &[SubjectRecord], stratify_by: Option<&str>) -> Result<CountTable> {
    let measured = match records.iter().filter(|r| r.exposure.is_some()).count() {
        0 => false,
        k if k == records.len() => true,
        k => {
            return Err(Error::Domain(format!(
                "exposure measured on {k} of {} records; must be all or none",
                records.len()
            )))
        }
    };

    let mut table = CountTable::default();
    if measured {
        table.by_exposure = Some([[[0; 3]; 4]; 2]);
    }
    for r in records {
        table.add_record(r);
    }

    if let Some(cov) = stratify_by {
        if !records.iter().any(|r| r.covariates.contains_key(cov)) {
            return Err(Error::Config(format!("unknown covariate '{cov}'")));
        }
        let mut levels: BTreeMap<String, CountTable> = BTreeMap::new();
        for r in records {
            let level = r.covariates.get(cov).cloned().unwrap_or_default();
            let sub = levels.entry(level).or_insert_with(|| {
                let mut t = CountTable::default();
                if measured {
                    t.by_exposure = Some([[[0; 3]; 4]; 2]);
                }
                t
            });
            sub.add_record(r);
        }
        table.strata = Some(Strata { covariate: cov.to_string(), levels });
    }

    Ok(table)
}

const RESERVED_COLUMNS: &[&str] = &["a", "y", "e", "d", "infected", "time", "event"];

fn parse_u8(field: &str, name: &str, line: usize) -> Result<u8> {
    field.trim().parse::<u8>().map_err(|_| Error::Parse {
        line,
        msg: format!("column '{name}': expected a small integer, got '{field}'"),
    })
}

fn parse_exposure(field: &str, line: usize) -> Result<Option<Exposure>> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    match t {
        "0" => Ok(Some(Exposure::Unexposed)),
        "1" => Ok(Some(Exposure::Variant(Variant::One))),
        "2" => Ok(Some(Exposure::Variant(Variant::Two))),
        "B" | "b" => Ok(Some(Exposure::Both)),
        other => Err(Error::Parse { line, msg: format!("column 'e': expected 0, 1, 2 or B, got '{other}'") }),
    }
}

/// Reads time-fixed trial data. Without a dichotomization config the file
/// must carry the outcome directly in `y`; with one, infected rows are mapped
/// to a variant by the distance threshold and uninfected rows to `y = 0`.
pub fn ingest_time_fixed(
    path: impl AsRef<Path>,
    dichotomize: Option<&MarkDichotomizationConfig>,
) -> Result<Vec<SubjectRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_time_fixed(file, dichotomize)
}

/// Same as [`ingest_time_fixed`] but over any reader.
pub fn read_time_fixed(
    reader: impl Read,
    dichotomize: Option<&MarkDichotomizationConfig>,
) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let col = |name: &str| headers.iter().position(|h| h == name);
    let a_col = col("a").ok_or_else(|| Error::Parse { line: 1, msg: "missing column 'a'".into() })?;
    let y_col = col("y");
    let e_col = col("e");
    let infected_col = col("infected");
    let distance_col = dichotomize.and_then(|c| col(&c.distance_column));

    if let Some(cfg) = dichotomize {
        if distance_col.is_none() {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing distance column '{}'", cfg.distance_column),
            });
        }
        if y_col.is_none() && infected_col.is_none() {
            return Err(Error::Parse { line: 1, msg: "missing column 'y' or 'infected'".into() });
        }
    } else if y_col.is_none() {
        return Err(Error::Parse { line: 1, msg: "missing column 'y'".into() });
    }

    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| {
            !RESERVED_COLUMNS.contains(&h.as_str())
                && Some(*i) != distance_col
                && !h.is_empty()
        })
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2; // header is line 1
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let get = |i: usize| row.get(i).unwrap_or("");

        let a = parse_u8(get(a_col), "a", line)?;
        let arm = Arm::from_u8(a)
            .ok_or_else(|| Error::Domain(format!("line {line}: treatment arm must be 0 or 1, got {a}")))?;

        let outcome = match dichotomize {
            None => {
                let y = parse_u8(get(y_col.unwrap()), "y", line)?;
                Outcome::from_u8(y)
                    .ok_or_else(|| Error::Domain(format!("line {line}: outcome y must be 0, 1 or 2, got {y}")))?
            }
            Some(cfg) => {
                let infected = match infected_col {
                    Some(c) => parse_u8(get(c), "infected", line)? != 0,
                    None => {
                        let y = parse_u8(get(y_col.unwrap()), "y", line)?;
                        Outcome::from_u8(y)
                            .ok_or_else(|| {
                                Error::Domain(format!("line {line}: outcome y must be 0, 1 or 2, got {y}"))
                            })?
                            != Outcome::Uninfected
                    }
                };
                if infected {
                    let field = get(distance_col.unwrap());
                    if field.trim().is_empty() {
                        return Err(Error::Domain(format!(
                            "line {line}: infected row lacks a value in distance column '{}'",
                            cfg.distance_column
                        )));
                    }
                    let d: f64 = field.trim().parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("column '{}': expected a number, got '{field}'", cfg.distance_column),
                    })?;
                    Outcome::Infected(cfg.classify(d))
                } else {
                    Outcome::Uninfected
                }
            }
        };

        let exposure = match e_col {
            Some(c) => parse_exposure(get(c), line)?,
            None => None,
        };

        let mut covariates = BTreeMap::new();
        for (i, name) in &covariate_cols {
            let v = get(*i);
            if !v.is_empty() {
                covariates.insert(name.clone(), v.to_string());
            }
        }

        out.push(SubjectRecord { arm, outcome, exposure, covariates });
    }
    Ok(out)
}

/// Reads time-to-event data with header `a,time,event[,<covariates...>]`.
pub fn ingest_time_to_event(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_time_to_event(file)
}

/// Same as [`ingest_time_to_event`] but over any reader.
pub fn read_time_to_event(reader: impl Read) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let a_col = col("a").ok_or_else(|| Error::Parse { line: 1, msg: "missing column 'a'".into() })?;
    let t_col = col("time").ok_or_else(|| Error::Parse { line: 1, msg: "missing column 'time'".into() })?;
    let ev_col = col("event").ok_or_else(|| Error::Parse { line: 1, msg: "missing column 'event'".into() })?;

    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !RESERVED_COLUMNS.contains(&h.as_str()) && !h.is_empty())
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let get = |i: usize| row.get(i).unwrap_or("");

        let a = parse_u8(get(a_col), "a", line)?;
        let arm = Arm::from_u8(a)
            .ok_or_else(|| Error::Domain(format!("line {line}: treatment arm must be 0 or 1, got {a}")))?;
        let time: u32 = get(t_col).parse().map_err(|_| Error::Parse {
            line,
            msg: format!("column 'time': expected a positive integer, got '{}'", get(t_col)),
        })?;
        if time < 1 {
            return Err(Error::Domain(format!("line {line}: event time must be >= 1")));
        }
        let ev = parse_u8(get(ev_col), "event", line)?;
        let event = EventType::from_u8(ev)
            .ok_or_else(|| Error::Domain(format!("line {line}: event must be 0, 1 or 2, got {ev}")))?;

        let mut covariates = BTreeMap::new();
        for (i, name) in &covariate_cols {
            let v = get(*i);
            if !v.is_empty() {
                covariates.insert(name.clone(), v.to_string());
            }
        }
        out.push(EventRecord { arm, time, event, covariates });
    }
    Ok(out)
}

/// Writes time-fixed records back out in the canonical CSV layout, so that
/// re-ingesting reproduces the same counts.
pub fn emit_time_fixed_csv(records: &[SubjectRecord], writer: impl Write) -> Result<()> {
    let measured = records.iter().any(|r| r.exposure.is_some());
    let mut covariate_names: Vec<String> = Vec::new();
    for r in records {
        for k in r.covariates.keys() {
            if !covariate_names.contains(k) {
                covariate_names.push(k.clone());
            }
        }
    }
    covariate_names.sort();

    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["a".to_string(), "y".to_string()];
    if measured {
        header.push("e".to_string());
    }
    header.extend(covariate_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Domain(e.to_string()))?;

    for r in records {
        let mut row = vec![r.arm.index().to_string(), r.outcome.code().to_string()];
        if measured {
            row.push(match r.exposure {
                None => String::new(),
                Some(Exposure::Both) => "B".to_string(),
                Some(e) => e.index().to_string(),
            });
        }
        for name in &covariate_names {
            row.push(r.covariates.get(name).cloned().unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| Error::Domain(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes time-to-event records in the canonical CSV layout.
pub fn emit_time_to_event_csv(records: &[EventRecord], writer: impl Write) -> Result<()> {
    let mut covariate_names: Vec<String> = Vec::new();
    for r in records {
        for k in r.covariates.keys() {
            if !covariate_names.contains(k) {
                covariate_names.push(k.clone());
            }
        }
    }
    covariate_names.sort();

    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["a".to_string(), "time".to_string(), "event".to_string()];
    header.extend(covariate_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Domain(e.to_string()))?;
    for r in records {
        let mut row =
            vec![r.arm.index().to_string(), r.time.to_string(), r.event.code().to_string()];
        for name in &covariate_names {
            row.push(r.covariates.get(name).cloned().unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| Error::Domain(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
