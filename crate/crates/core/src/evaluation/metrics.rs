use std::collections::HashMap;

/// Lowercases, deletes ASCII punctuation, drops the articles a/an/the and
/// collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_tokens {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-level F1 against the best-matching gold answer.
pub fn token_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    golds
        .iter()
        .map(|g| f1_single(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> bool {
    let pred = normalize_answer(prediction);
    golds.iter().any(|g| normalize_answer(g.as_ref()) == pred)
}

/// Whether any gold id appears among the first `k` retrieved ids.
pub fn recall_at_k<R: AsRef<str>, G: AsRef<str>>(retrieved: &[R], gold: &[G], k: usize) -> bool {
    retrieved
        .iter()
        .take(k)
        .any(|r| gold.iter().any(|g| g.as_ref() == r.as_ref()))
}
