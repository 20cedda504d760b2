//! Acceptance checks. Runs without the libtest harness so each criterion
//! reports exactly one PASS/FAIL line; the process fails if any check does.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use helprag_core::encoding::{HashEncoder, OracleEncoder, UnitVector};
use helprag_core::evaluation::synthetic::{scale_corpus, scale_queries};
use helprag_core::evaluation::{
    gen_synthetic, load_qa, parse_sweep, recall_at_k, run_benchmark, run_sweep, sweep_table,
    token_f1, BenchConfig, QaRecord, SyntheticParams,
};
use helprag_core::hypernode::select_seeds;
use helprag_core::ingestion::{build_and_embed, load_corpus, load_index, save_index};
use helprag_core::localization::{dense_rank, score_passages};
use helprag_core::{
    encoding, retrieve, run_expansion, Channel, ExpansionConfig, HybridConfig, HyperNode,
    KnowledgeGraph, Triplet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib_paths(graph: &KnowledgeGraph, nodes: &[HyperNode]) -> Vec<(BTreeSet<Fact>, f64)> {
    nodes
        .iter()
        .map(|h| (h.triplets(graph).map(fact_of).collect(), h.query_distance()))
        .collect()
}

fn expansion_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let encoder = HashEncoder::new();
    let mut compared = 0;
    for g in 0..100 {
        let corpus = random_corpus(&mut rng, 200);
        let graph = build_and_embed(&corpus, &encoder).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let cfg = ExpansionConfig {
                hops: rng.gen_range(1..=3),
                seeds: rng.gen_range(1..=5),
                beam: rng.gen_range(1..=20),
            };
            let query = random_query(&mut rng);
            let got = run_expansion(&graph, &encoder, &query, &cfg).map_err(|e| e.to_string())?;
            let want =
                reference_expansion(&corpus, &encoder, &query, cfg.hops, cfg.seeds, cfg.beam);
            ensure(lib_paths(&graph, &got) == want, || {
                format!("graph {g}, {cfg:?}, query {query:?}: beam differs from reference")
            })?;
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:.1?}")
    })?;
    Ok(format!(
        "{compared} runs on 100 graphs identical to reference, {elapsed:.1?}"
    ))
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> UnitVector {
    loop {
        let raw: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(v) = UnitVector::normalize(&raw) {
            return v;
        }
    }
}

fn scoring_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let encoder = HashEncoder::new();
    let mut worst: f64 = 0.0;
    for f in 0..1000 {
        let corpus = random_corpus(&mut rng, 60);
        let graph = build_and_embed(&corpus, &encoder).map_err(|e| e.to_string())?;
        let query = random_unit(&mut rng, 8);
        let count = graph.triplet_count() as u32;
        let nodes: Vec<HyperNode> = (0..rng.gen_range(1..=8))
            .map(|_| {
                let size = rng.gen_range(1..=4);
                let ids: Vec<_> = (0..size)
                    .map(|_| helprag_core::kg_index::TripletId(rng.gen_range(0..count)))
                    .collect();
                HyperNode::new(&graph, &ids, random_unit(&mut rng, 8), &query).unwrap()
            })
            .collect();
        let got = score_passages(&graph, &nodes);
        let want = reference_scores(&corpus, &lib_paths(&graph, &nodes));
        let got_ids: BTreeSet<&str> = got.iter().map(|p| p.id.as_str()).collect();
        let want_ids: BTreeSet<&str> = want.keys().map(String::as_str).collect();
        ensure(got_ids == want_ids, || {
            format!("fixture {f}: scored passages differ")
        })?;
        for p in &got {
            let err = relative_error(p.score, want[&p.id]);
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!("fixture {f}, {}: relative error {err:e}", p.id)
            })?;
        }
        ensure(
            got.windows(2).all(|w| {
                w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id)
            }),
            || format!("fixture {f}: not sorted"),
        )?;
    }
    Ok(format!("1000 fixtures, worst relative error {worst:.1e}"))
}

fn weight_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut checked = 0usize;
    for c in 0..200 {
        let corpus = random_corpus(&mut rng, 200);
        let graph = build_and_embed(&corpus, &HashEncoder::new()).map_err(|e| e.to_string())?;
        let expected = passage_facts(&corpus);
        for (pid, facts) in &expected {
            for fact in facts {
                let t = Triplet::new(&fact[0], &fact[1], &fact[2]).unwrap();
                let id = graph
                    .index()
                    .id_of(&t)
                    .ok_or_else(|| format!("corpus {c}: fact missing"))?;
                let entry = graph
                    .index()
                    .provenance(id)
                    .iter()
                    .find(|p| &p.passage_id == pid)
                    .ok_or_else(|| format!("corpus {c}: {pid} missing from provenance"))?;
                ensure(entry.weight.denominator() as usize == facts.len(), || {
                    format!(
                        "corpus {c}, {pid}: weight 1/{} but {} distinct facts",
                        entry.weight.denominator(),
                        facts.len()
                    )
                })?;
                checked += 1;
            }
        }
        let total: usize = graph
            .index()
            .catalog()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                graph
                    .index()
                    .provenance(helprag_core::kg_index::TripletId(i as u32))
                    .len()
            })
            .sum();
        let want: usize = expected.values().map(BTreeSet::len).sum();
        ensure(total == want, || {
            format!("corpus {c}: {total} provenance entries, expected {want}")
        })?;
    }
    Ok(format!(
        "{checked} provenance weights exact over 200 corpora"
    ))
}

fn synthetic_bench(
    params: &SyntheticParams,
) -> Result<(KnowledgeGraph, OracleEncoder, Vec<QaRecord>), String> {
    let fixture = gen_synthetic(params).map_err(|e| e.to_string())?;
    let encoder = OracleEncoder::from_table(&fixture.oracle).map_err(|e| e.to_string())?;
    let graph = build_and_embed(&fixture.corpus, &encoder).map_err(|e| e.to_string())?;
    Ok((graph, encoder, fixture.qa))
}

fn quota_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let encoder = HashEncoder::new();
    let hybrid = HybridConfig::default();
    let expansion = ExpansionConfig::default();
    let mut qualifying = 0;
    let mut corpora = 0;
    while qualifying < 200 && corpora < 2000 {
        corpora += 1;
        let corpus = random_corpus(&mut rng, 200);
        let graph = build_and_embed(&corpus, &encoder).map_err(|e| e.to_string())?;
        let query = random_query(&mut rng);
        let result =
            retrieve(&graph, &encoder, &query, &expansion, &hybrid).map_err(|e| e.to_string())?;
        let path = score_passages(&graph, &result.hypernodes);
        let q = encoding::encode_one(&encoder, &query).unwrap();
        let dense = dense_rank(&graph, &q, usize::MAX).map_err(|e| e.to_string())?;
        let top_path: Vec<&str> = path.iter().take(4).map(|p| p.id.as_str()).collect();
        if path.len() < 4 || !dense.iter().any(|p| !top_path.contains(&p.id.as_str())) {
            continue;
        }
        qualifying += 1;
        let ids: Vec<&str> = result.passages.iter().map(|p| p.id.as_str()).collect();
        let unique: HashSet<&str> = ids.iter().copied().collect();
        let path_slots = result
            .passages
            .iter()
            .filter(|p| p.channel == Channel::Path)
            .count();
        ensure(
            ids.len() == 5 && unique.len() == 5 && path_slots == 4 && ids[..4] == top_path[..],
            || format!("corpus {corpora}: context {ids:?} with {path_slots} path slots"),
        )?;
    }
    ensure(qualifying >= 200, || {
        format!("only {qualifying} qualifying cases")
    })?;

    let (graph, encoder, qa) = synthetic_bench(&SyntheticParams {
        chains: 30,
        ..Default::default()
    })?;
    let spec = parse_sweep("quota=0..5").map_err(|e| e.to_string())?;
    let report = run_sweep(&graph, &encoder, &qa, &BenchConfig::default(), &spec, None)
        .map_err(|e| e.to_string())?;
    let quotas: Vec<usize> = report
        .points
        .iter()
        .map(|e| e.report.config.quota)
        .collect();
    ensure(quotas == [0, 1, 2, 3, 4, 5], || {
        format!("sweep quotas {quotas:?}")
    })?;
    for line in sweep_table(&report).lines() {
        println!("        {line}");
    }
    Ok(format!(
        "4 path + 1 dense, no duplicates, in {qualifying} qualifying cases; M sweep has 6 rows"
    ))
}

fn multi_hop_construction() -> Check {
    let start = Instant::now();
    let params = SyntheticParams {
        chains: 100,
        hops: 2,
        distractors: 10,
        ..Default::default()
    };
    let (graph, encoder, qa) = synthetic_bench(&params)?;
    let help = run_benchmark(&graph, &encoder, &qa, &BenchConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let dense_only = BenchConfig {
        hybrid: HybridConfig { quota: 0, total: 5 },
        ..Default::default()
    };
    let dense =
        run_benchmark(&graph, &encoder, &qa, &dense_only, None).map_err(|e| e.to_string())?;
    let (r_help, r_dense) = (
        help.summary.recall_at_k.unwrap(),
        dense.summary.recall_at_k.unwrap(),
    );
    let elapsed = start.elapsed();
    ensure(r_help == 1.0 && r_dense == 0.0, || {
        format!("Recall@5 {r_help:.2} at defaults, {r_dense:.2} dense-only")
    })?;
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:.1?}")
    })?;
    Ok(format!(
        "Recall@5 1.00 at defaults vs 0.00 dense-only on {} questions, {elapsed:.1?}",
        qa.len()
    ))
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case_study")
}

fn case_study() -> Check {
    let corpus = load_corpus(&fixture_dir().join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let qa = load_qa(&fixture_dir().join("qa.jsonl")).map_err(|e| e.to_string())?;
    let encoder = HashEncoder::new();
    let graph = build_and_embed(&corpus, &encoder).map_err(|e| e.to_string())?;
    let question = &qa[0].question;
    let q = encoding::encode_one(&encoder, question).unwrap();
    let seeds = select_seeds(&graph, &encoder, &q, 3).map_err(|e| e.to_string())?;
    let mother = Triplet::new(
        "princess elene of georgia",
        "mother of",
        "solomon ii of imereti",
    )
    .unwrap();
    ensure(
        seeds
            .iter()
            .any(|s| s.triplets(&graph).any(|t| *t == mother)),
        || "seed set lacks the \"mother of\" triplet".into(),
    )?;
    let result = retrieve(
        &graph,
        &encoder,
        question,
        &ExpansionConfig::default(),
        &HybridConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let top: Vec<(&str, Channel)> = result
        .passages
        .iter()
        .take(2)
        .map(|p| (p.id.as_str(), p.channel))
        .collect();
    let ids: BTreeSet<&str> = top.iter().map(|(id, _)| *id).collect();
    ensure(
        ids == BTreeSet::from(["elene_of_georgia", "solomon_ii_of_imereti"])
            && top.iter().all(|(_, c)| *c == Channel::Path),
        || format!("top two slots {top:?}"),
    )?;
    Ok("Elene and Solomon II fill the two top path slots; \"mother of\" is a seed".into())
}

fn latency() -> Check {
    let corpus = scale_corpus(10_000, 1_000, 4, 11);
    let encoder = HashEncoder::new();
    let graph = build_and_embed(&corpus, &encoder).map_err(|e| e.to_string())?;
    ensure(graph.triplet_count() == 10_000, || {
        format!("{} triplets", graph.triplet_count())
    })?;
    let qa = scale_queries(30, 1_000, 12);

    let defaults = run_benchmark(&graph, &encoder, &qa, &BenchConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let slowest = defaults
        .rows
        .iter()
        .map(|r| r.latency_seconds)
        .fold(0.0, f64::max);
    ensure(slowest < 1.0, || format!("slowest query {slowest:.3}s"))?;

    let spec = parse_sweep("hops=1..4").map_err(|e| e.to_string())?;
    let config = BenchConfig {
        repeats: 3,
        ..Default::default()
    };
    let sweep =
        run_sweep(&graph, &encoder, &qa, &config, &spec, None).map_err(|e| e.to_string())?;
    let means: Vec<f64> = sweep
        .points
        .iter()
        .map(|e| e.report.summary.mean_latency_seconds)
        .collect();
    let shown: Vec<String> = means.iter().map(|m| format!("{:.2}ms", m * 1e3)).collect();
    ensure(means.windows(2).all(|w| w[0] < w[1]), || {
        format!("N=1..4 mean latency {shown:?}")
    })?;
    Ok(format!(
        "slowest query {:.1}ms; N=1..4 mean latency {}",
        slowest * 1e3,
        shown.join(" < ")
    ))
}

fn metrics() -> Check {
    ensure(
        token_f1("Prince Archil of Imereti", &["Prince Archil of Imereti"]) == 1.0,
        || "F1(gold, gold) != 1".into(),
    )?;
    let partial = token_f1("prince archil", &["prince archil of imereti"]);
    ensure((partial - 2.0 / 3.0).abs() <= 1e-9, || {
        format!("partial F1 {partial}")
    })?;
    let ranked = ["a", "b", "c", "d", "gold"];
    let mut six = ranked.to_vec();
    six.insert(0, "z");
    ensure(recall_at_k(&ranked, &["gold"], 5), || {
        "gold at rank 5 missed".into()
    })?;
    ensure(!recall_at_k(&six, &["gold"], 5), || {
        "gold at rank 6 counted".into()
    })?;
    ensure(!recall_at_k::<&str, &str>(&[], &["gold"], 5), || {
        "empty list counted".into()
    })?;
    Ok(format!(
        "F1(gold,gold)=1, partial F1={partial:.6}, Recall@5 boundaries hold"
    ))
}

fn persistence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let encoder = HashEncoder::new();
    let mut corpus = random_corpus(&mut rng, 200);
    while corpus.len() < 20 {
        corpus = random_corpus(&mut rng, 200);
    }
    let built = build_and_embed(&corpus, &encoder).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bundle = dir.path().join("index");
    save_index(&bundle, &built, None).map_err(|e| e.to_string())?;
    let (loaded, _) = load_index(&bundle).map_err(|e| e.to_string())?;
    ensure(loaded == built, || "loaded graph differs".into())?;
    for i in 0..50 {
        let query = random_query(&mut rng);
        let cfg = ExpansionConfig {
            hops: rng.gen_range(1..=3),
            ..Default::default()
        };
        let a = retrieve(&built, &encoder, &query, &cfg, &HybridConfig::default())
            .map_err(|e| e.to_string())?;
        let b = retrieve(&loaded, &encoder, &query, &cfg, &HybridConfig::default())
            .map_err(|e| e.to_string())?;
        let bits = |r: &helprag_core::Retrieval| -> Vec<u64> {
            r.passages
                .iter()
                .map(|p| p.score.to_bits())
                .chain(r.hypernodes.iter().map(|h| h.query_distance().to_bits()))
                .collect()
        };
        ensure(
            a.hypernodes == b.hypernodes && a.passages == b.passages && bits(&a) == bits(&b),
            || format!("query {i} ({query:?}) differs after reload"),
        )?;
    }
    Ok(format!(
        "50 queries bit-identical on a reloaded {}-passage index",
        corpus.len()
    ))
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        (
            "expansion matches brute-force reference",
            expansion_equivalence,
        ),
        (
            "passage scores match triple-sum reference",
            scoring_equivalence,
        ),
        (
            "provenance weights are exactly 1/|distinct facts|",
            weight_law,
        ),
        ("hybrid quota law and M sweep", quota_law),
        (
            "multi-hop construction: path finds what dense cannot",
            multi_hop_construction,
        ),
        ("case study: Elene and Solomon II", case_study),
        ("latency on 10k triplets and growth with N", latency),
        ("metric correctness", metrics),
        ("persistence round trip", persistence),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {}",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            ))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
