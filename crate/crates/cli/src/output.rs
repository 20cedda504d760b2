use std::fmt::Write as _;
use std::time::Duration;

use serde_json::{json, Value};

use helprag_core::evaluation::BenchReport;
use helprag_core::{KnowledgeGraph, Retrieval};

pub fn pretty(value: serde_json::Result<Value>) -> String {
    let mut s =
        serde_json::to_string_pretty(&value.expect("reports serialize")).expect("values serialize");
    s.push('\n');
    s
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn query_value(
    question: &str,
    graph: &KnowledgeGraph,
    result: &Retrieval,
    timings: bool,
) -> Value {
    let hypernodes: Vec<Value> = result
        .hypernodes
        .iter()
        .map(|h| {
            json!({
                "triplets": h.triplets(graph).collect::<Vec<_>>(),
                "distance": h.query_distance(),
            })
        })
        .collect();
    let mut out = json!({
        "query": question,
        "hypernodes": hypernodes,
        "passages": result.passages,
    });
    if timings {
        let t = &result.timings;
        out["timings_ms"] = json!({
            "expansion": ms(t.expansion),
            "scoring": ms(t.scoring),
            "dense": ms(t.dense),
            "total": ms(t.total),
        });
    }
    out
}

pub fn query_json(
    question: &str,
    graph: &KnowledgeGraph,
    result: &Retrieval,
    timings: bool,
) -> String {
    pretty(Ok(query_value(question, graph, result, timings)))
}

pub fn query_text(question: &str, result: &Retrieval, timings: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "query: {question}\n");
    let _ = writeln!(out, "hypernodes ({}):", result.hypernodes.len());
    for h in &result.hypernodes {
        let _ = writeln!(out, "  {:>8.4}  {}", h.query_distance(), h.serialized());
    }
    let _ = writeln!(out, "\npassages ({}):", result.passages.len());
    let width = result
        .passages
        .iter()
        .map(|p| p.id.len())
        .max()
        .unwrap_or(0)
        .max(2);
    let _ = writeln!(
        out,
        "  {:>3}  {:<width$} {:<6} {:>10}  supporting",
        "#", "id", "chan", "score"
    );
    for (i, p) in result.passages.iter().enumerate() {
        let channel = serde_json::to_value(p.channel).expect("channel serializes");
        let support: Vec<String> = p.supporting_triplets.iter().map(|t| t.render()).collect();
        let line = format!(
            "  {:>3}  {:<width$} {:<6} {:>10.6}  {}",
            i + 1,
            p.id,
            channel.as_str().unwrap_or_default(),
            p.score,
            support.join("; ")
        );
        let _ = writeln!(out, "{}", line.trim_end());
    }
    if timings {
        let t = &result.timings;
        let _ = writeln!(
            out,
            "\ntimings (ms): expansion {:.3}, scoring {:.3}, dense {:.3}, total {:.3}",
            ms(t.expansion),
            ms(t.scoring),
            ms(t.dense),
            ms(t.total)
        );
    }
    out
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v))
}

pub fn bench_text(report: &BenchReport) -> String {
    let c = &report.config;
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "encoder {}  hops {}  seeds {}  beam {}  quota {}  topk {}",
        c.encoder_id, c.hops, c.seeds, c.beam, c.quota, c.topk
    );
    let _ = writeln!(out, "queries            {}", s.queries);
    let _ = writeln!(out, "mean latency (s)   {:.6}", s.mean_latency_seconds);
    let _ = writeln!(out, "median latency (s) {:.6}", s.median_latency_seconds);
    let _ = writeln!(out, "Recall@{:<11} {}", c.topk, pct(s.recall_at_k));
    let _ = writeln!(out, "F1                 {}", pct(s.mean_f1));
    let _ = writeln!(out, "EM                 {}", pct(s.em_rate));
    out
}
