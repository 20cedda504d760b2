//! Parameter sweeps such as `quota=0..5` or `seed=1..5,beam=30,50,70,100`.
//!
//! A spec is a comma-separated list of `key=values` axes. Values are single
//! integers or inclusive ranges `a..b`; a bare value after an axis extends
//! that axis. Several axes expand to their cartesian product, first axis
//! outermost.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bench::{evaluate, BenchConfig, BenchError, BenchReport, REPORT_SCHEMA_VERSION};
use super::QaRecord;
use crate::encoding::Encoder;
use crate::hypernode::ExpansionConfig;
use crate::kg_index::KnowledgeGraph;
use crate::localization::HybridConfig;
use crate::service::ChatClient;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error("empty sweep spec")]
    Empty,
    #[error("unknown sweep key `{0}` (expected hops, seeds, beam, quota or topk)")]
    UnknownKey(String),
    #[error("bad sweep value `{0}`")]
    BadValue(String),
    #[error("value `{0}` appears before any key")]
    MissingKey(String),
    #[error("sweep key `{0}` given twice")]
    RepeatedKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKey {
    Hops,
    Seeds,
    Beam,
    Quota,
    Topk,
}

impl SweepKey {
    fn parse(s: &str) -> Result<Self, SweepError> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "hops" | "hop" | "n_hops" => SweepKey::Hops,
            "seeds" | "seed" => SweepKey::Seeds,
            "beam" => SweepKey::Beam,
            "quota" => SweepKey::Quota,
            "topk" | "total" => SweepKey::Topk,
            _ => return Err(SweepError::UnknownKey(s.trim().to_owned())),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepKey::Hops => "hops",
            SweepKey::Seeds => "seeds",
            SweepKey::Beam => "beam",
            SweepKey::Quota => "quota",
            SweepKey::Topk => "topk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub axes: Vec<(SweepKey, Vec<usize>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint(pub Vec<(SweepKey, usize)>);

impl SweepPoint {
    pub fn apply(&self, expansion: &mut ExpansionConfig, hybrid: &mut HybridConfig) {
        for &(key, v) in &self.0 {
            match key {
                SweepKey::Hops => expansion.hops = v,
                SweepKey::Seeds => expansion.seeds = v,
                SweepKey::Beam => expansion.beam = v,
                SweepKey::Quota => hybrid.quota = v,
                SweepKey::Topk => hybrid.total = v,
            }
        }
    }
}

fn parse_values(token: &str, into: &mut Vec<usize>) -> Result<(), SweepError> {
    let bad = || SweepError::BadValue(token.to_owned());
    let token = token.trim();
    if let Some((a, b)) = token.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        into.extend(a..=b);
    } else {
        into.push(token.parse().map_err(|_| bad())?);
    }
    Ok(())
}

pub fn parse_sweep(spec: &str) -> Result<SweepSpec, SweepError> {
    let mut axes: Vec<(SweepKey, Vec<usize>)> = Vec::new();
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token.split_once('=') {
            Some((key, values)) if !key.trim().is_empty() && !key.contains("..") => {
                let key = SweepKey::parse(key)?;
                if axes.iter().any(|(k, _)| *k == key) {
                    return Err(SweepError::RepeatedKey(key.name().to_owned()));
                }
                let mut v = Vec::new();
                parse_values(values, &mut v)?;
                axes.push((key, v));
            }
            _ => {
                let (_, v) = axes
                    .last_mut()
                    .ok_or_else(|| SweepError::MissingKey(token.to_owned()))?;
                parse_values(token, v)?;
            }
        }
    }
    if axes.is_empty() {
        return Err(SweepError::Empty);
    }
    Ok(SweepSpec { axes })
}

impl SweepSpec {
    /// Cartesian product of the axes, first axis outermost.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p: Vec<(SweepKey, usize)> = prefix.clone();
                        p.push((*key, v));
                        p
                    })
                })
                .collect();
        }
        points.into_iter().map(SweepPoint).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub points: Vec<SweepEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub point: SweepPoint,
    pub report: BenchReport,
}

/// Benchmarks every point of `spec` against `base`. Each question is timed
/// at all points back to back, so the latency comparison between points is
/// not skewed by the machine getting faster or slower during the run.
pub fn run_sweep(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    qa: &[QaRecord],
    base: &BenchConfig,
    spec: &SweepSpec,
    generator: Option<&ChatClient>,
) -> Result<SweepReport, BenchError> {
    let points = spec.points();
    let configs: Vec<BenchConfig> = points
        .iter()
        .map(|p| {
            let mut c = *base;
            p.apply(&mut c.expansion, &mut c.hybrid);
            c
        })
        .collect();
    let reports = evaluate(graph, encoder, qa, &configs, generator)?;
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        points: points
            .into_iter()
            .zip(reports)
            .map(|(point, report)| SweepEntry { point, report })
            .collect(),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{:.1}", 100.0 * v))
}

/// One line per point: the swept values, then EM, F1, Recall@K (as
/// percentages) and mean retrieval latency.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::new();
    let keys: Vec<SweepKey> = report
        .points
        .first()
        .map(|e| e.point.0.iter().map(|(k, _)| *k).collect())
        .unwrap_or_default();
    let topk = report.points.first().map_or(0, |e| e.report.config.topk);
    for k in &keys {
        let _ = write!(out, "{:>6} ", k.name());
    }
    let _ = writeln!(
        out,
        "{:>7} {:>7} {:>10} {:>12}",
        "EM(%)",
        "F1(%)",
        format!("Recall@{topk}"),
        "latency(s)"
    );
    for entry in &report.points {
        for (_, v) in &entry.point.0 {
            let _ = write!(out, "{v:>6} ");
        }
        let s = &entry.report.summary;
        let _ = writeln!(
            out,
            "{:>7} {:>7} {:>10} {:>12.6}",
            pct(s.em_rate),
            pct(s.mean_f1),
            pct(s.recall_at_k),
            s.mean_latency_seconds
        );
    }
    out
}
