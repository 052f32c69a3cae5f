//! Report serialization: JSON is the authoritative format, CSV a flattened
//! projection, SVG a minimal deterministic line plot. Nothing in the report
//! bodies depends on wall-clock time, so outputs are byte-identical across
//! reruns with the same inputs and flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use sievekit::dgp::SummaryRow;
use sievekit::estimands::RatioEstimate;
use sievekit::Result;

/// Everything needed to re-run the command bit-identically given the same
/// input files. The timestamp documents when the run happened; it is the one
/// field that varies between identical reruns, and it lives only here.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: std::collections::BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub unix_timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, input_paths: &[&Path]) -> Result<Self> {
        let mut inputs = std::collections::BTreeMap::new();
        for p in input_paths {
            let bytes = fs::read(p)?;
            let digest = Sha256::digest(&bytes);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            inputs.insert(p.display().to_string(), hex);
        }
        Ok(RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            inputs,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }
}

pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let body = serde_json::to_string_pretty(value).expect("serializable report");
        fs::write(self.path(name), &body)?;
        Ok(body)
    }

    pub fn write_text(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }
}

/// Flattened CSV rows for a set of ratio estimates.
pub fn estimates_csv(estimates: &[RatioEstimate]) -> String {
    let mut out = String::from("estimand,stratum,point,ci_low,ci_high,alpha,method,assumptions,route\n");
    for e in estimates {
        let (lo, hi) = e
            .ci
            .map(|(l, h)| (format!("{l}"), format!("{h}")))
            .unwrap_or_default();
        let alpha = e.alpha.map(|a| a.to_string()).unwrap_or_default();
        let assumptions = e
            .assumptions
            .iter()
            .map(|a| serde_json::to_value(a).unwrap().as_str().unwrap().to_string())
            .collect::<Vec<_>>()
            .join("|");
        let method = serde_json::to_value(e.method).unwrap().as_str().unwrap().to_string();
        let estimand = serde_json::to_value(e.estimand).unwrap().as_str().unwrap().to_string();
        out.push_str(&format!(
            "{estimand},{},{},{lo},{hi},{alpha},{method},{assumptions},{}\n",
            e.stratum,
            e.point,
            e.route.clone().unwrap_or_default()
        ));
    }
    out
}

/// CSV of per-(n, estimator) summary rows from a convergence study.
pub fn summaries_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("n,estimator,mean,mc_se,ok,degenerate\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.n, r.estimator, r.mean, r.mc_se, r.ok, r.degenerate));
    }
    out
}

/// Minimal deterministic SVG line plot: mean estimate against log10(n), one
/// polyline per estimator, plus a dashed oracle reference line per estimator
/// when supplied. Axes and labels only; no timestamps or randomness in the
/// body, so plot files diff cleanly.
pub fn convergence_svg(rows: &[SummaryRow], oracle_lines: &[(String, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 56.0;
    let mut estimators: Vec<String> = Vec::new();
    for r in rows {
        if !estimators.contains(&r.estimator) {
            estimators.push(r.estimator.clone());
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).log10()).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.mean).filter(|v| v.is_finite()).collect();
    ys.extend(oracle_lines.iter().map(|(_, v)| *v));
    let (xmin, xmax) = bounds_of(&xs);
    let (ymin, ymax) = bounds_of(&ys);
    let pad = ((ymax - ymin) * 0.1).max(0.05);
    let (ymin, ymax) = (ymin - pad, ymax + pad);

    let sx = |x: f64| M + (x - xmin) / (xmax - xmin).max(1e-12) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - ymin) / (ymax - ymin).max(1e-12) * (H - 2.0 * M);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{:.6}\" x2=\"{:.6}\" y2=\"{:.6}\" stroke=\"black\"/>\n",
        H - M,
        W - M,
        H - M
    ));
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{:.6}\" stroke=\"black\"/>\n",
        H - M
    ));
    svg.push_str(&format!(
        "<text x=\"{:.6}\" y=\"{:.6}\" font-size=\"12\" text-anchor=\"middle\">log10(n)</text>\n",
        W / 2.0,
        H - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.6}\" font-size=\"12\" transform=\"rotate(-90 16 {:.6})\" text-anchor=\"middle\">estimate</text>\n",
        H / 2.0,
        H / 2.0
    ));

    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (i, est) in estimators.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| &r.estimator == est && r.mean.is_finite())
            .map(|r| format!("{:.6},{:.6}", sx((r.n as f64).log10()), sy(r.mean)))
            .collect();
        if !pts.is_empty() {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.6}\" y=\"{:.6}\" font-size=\"11\" fill=\"{color}\">{est}</text>\n",
            W - M + 4.0 - 120.0,
            M + 14.0 * (i as f64 + 1.0)
        ));
    }
    for (est, value) in oracle_lines {
        if let Some(i) = estimators.iter().position(|e| e == est) {
            let color = COLORS[i % COLORS.len()];
            svg.push_str(&format!(
                "<line x1=\"{M}\" y1=\"{0:.6}\" x2=\"{1:.6}\" y2=\"{0:.6}\" stroke=\"{color}\" stroke-dasharray=\"4 3\" stroke-width=\"1\"/>\n",
                sy(*value),
                W - M
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds_of(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
