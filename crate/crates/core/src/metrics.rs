//! Evaluation metrics: per-query recall against gold passages, and
//! exact-match / token-F1 for answer strings. Queries without gold labels
//! are skipped by returning None so they never touch a denominator.

use std::collections::BTreeSet;

/// |top-k intersected with gold| / |gold|. None when gold is empty or k
/// is 0 (the query cannot be judged).
pub fn recall_at_k(ranked: &[String], gold: &[String], k: usize) -> Option<f64> {
    let gold: BTreeSet<&str> = gold.iter().map(String::as_str).collect();
    if gold.is_empty() || k == 0 {
        return None;
    }
    let top: BTreeSet<&str> = ranked.iter().take(k).map(String::as_str).collect();
    let hits = gold.iter().filter(|id| top.contains(*id)).count();
    Some(hits as f64 / gold.len() as f64)
}

/// True iff every gold passage sits in the top k. None as in
/// [`recall_at_k`].
pub fn all_recall_at_k(ranked: &[String], gold: &[String], k: usize) -> Option<bool> {
    let gold: BTreeSet<&str> = gold.iter().map(String::as_str).collect();
    if gold.is_empty() || k == 0 {
        return None;
    }
    let top: BTreeSet<&str> = ranked.iter().take(k).map(String::as_str).collect();
    Some(gold.iter().all(|id| top.contains(id)))
}

/// Answer-string tokens under standard QA normalization: lowercase, strip
/// ASCII punctuation, drop the articles a/an/the, split on whitespace.
fn answer_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

fn f1_score(predicted: &[String], gold: &[String]) -> f64 {
    if predicted.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if predicted.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: std::collections::HashMap<&str, i64> = std::collections::HashMap::new();
    for token in gold {
        *counts.entry(token.as_str()).or_insert(0) += 1;
    }
    let mut common = 0i64;
    for token in predicted {
        let entry = counts.entry(token.as_str()).or_insert(0);
        if *entry > 0 {
            common += 1;
            *entry -= 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / predicted.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// (exact match, token F1) of a predicted answer, each taken as the best
/// over the gold aliases.
pub fn qa_em_f1(predicted: &str, gold_answers: &[String]) -> (f64, f64) {
    let predicted = answer_tokens(predicted);
    let mut best_em = 0.0f64;
    let mut best_f1 = 0.0f64;
    for alias in gold_answers {
        let gold = answer_tokens(alias);
        if predicted == gold {
            best_em = 1.0;
        }
        best_f1 = best_f1.max(f1_score(&predicted, &gold));
    }
    (best_em, best_f1)
}
