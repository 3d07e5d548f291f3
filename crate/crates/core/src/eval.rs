//! Batch evaluation: run every query through retrieval, judge the ranking
//! against gold passages, optionally answer with the reader, and write
//! per-query diagnostics plus an aggregate report. Reports are
//! deterministic byte-for-byte for a given config and fixtures, so two
//! runs can be diffed directly.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{load_queries, QueryRecord};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::metrics::{all_recall_at_k, qa_em_f1, recall_at_k};
use crate::pipeline::{
    build_dense, build_embedder, build_extractor, ensure_index, retrieve_options,
};
use crate::reader::{self, ReaderAnswer, MAX_READER_PASSAGES};
use crate::retrieval::{retrieve, DiagnosticsRecord, QueryBackends, RankedResult, SearchIndex};

/// Aggregate results, in the shape written to report.json. Recall maps
/// are keyed by cutoff k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_digest: String,
    /// Queries with gold labels: the denominator of every recall mean.
    pub n_queries: usize,
    pub recall: BTreeMap<usize, f64>,
    pub all_recall: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    /// Queries that produced no linked entities and took the dense (or
    /// empty) fallback ranking.
    pub fallback_count: usize,
}

/// One reader interaction, written to answers.jsonl when qa is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub query_id: String,
    pub answer: String,
    pub raw_response: String,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

fn ranked_ids(result: &RankedResult, index: &SearchIndex) -> Vec<String> {
    result
        .order
        .iter()
        .map(|&p| index.corpus().passages()[p as usize].id.clone())
        .collect()
}

fn answer_query(
    query: &QueryRecord,
    result: &RankedResult,
    index: &SearchIndex,
    backend: &dyn crate::extract::AnswerBackend,
) -> Result<ReaderAnswer> {
    let top: Vec<_> = result
        .order
        .iter()
        .take(MAX_READER_PASSAGES)
        .map(|&p| index.corpus().passages()[p as usize].clone())
        .collect();
    if top.is_empty() {
        // Nothing retrieved; there is no context to answer from.
        return Ok(ReaderAnswer {
            answer: String::new(),
            raw_response: String::new(),
            failed: true,
            usage: Default::default(),
        });
    }
    reader::answer(&query.question, &top, backend)
}

/// Runs the full evaluation described by the config, writing
/// diagnostics.jsonl, report.json, answers.jsonl (qa only), and table.txt
/// into `out_dir`. Returns the report and the rendered table.
pub fn run_eval(config: &RunConfig, out_dir: &Path) -> Result<(EvalReport, String)> {
    config.validate()?;
    let index = ensure_index(config)?;
    let queries = load_queries(config.queries_path()?, index.corpus())?;
    let extractor = build_extractor(config)?;
    let embedder = build_embedder(config)?;
    let dense = build_dense(config);
    let backends = QueryBackends {
        extractor: &extractor,
        embedder: &embedder,
        dense: dense.as_deref(),
    };
    let opts = retrieve_options(config);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Invalid(format!("building thread pool: {e}")))?;
    let outcomes: Result<Vec<(RankedResult, Option<ReaderAnswer>)>> = pool.install(|| {
        queries
            .par_iter()
            .map(|query| {
                let result = retrieve(&query.question, &index, &backends, &opts)?;
                let answered = if config.qa {
                    Some(answer_query(query, &result, &index, &extractor)?)
                } else {
                    None
                };
                Ok((result, answered))
            })
            .collect()
    });
    let outcomes = outcomes?;

    let top_n = *config.top_k.last().expect("top_k validated non-empty");
    let mut diagnostics = Vec::with_capacity(queries.len());
    let mut answers: Vec<AnswerRecord> = Vec::new();
    let mut labeled = 0usize;
    let mut fallback_count = 0usize;
    let mut recall_sums: BTreeMap<usize, f64> = config.top_k.iter().map(|&k| (k, 0.0)).collect();
    let mut all_recall_sums: BTreeMap<usize, f64> =
        config.top_k.iter().map(|&k| (k, 0.0)).collect();
    let mut qa_count = 0usize;
    let mut em_sum = 0.0f64;
    let mut f1_sum = 0.0f64;

    for (query, (result, answered)) in queries.iter().zip(&outcomes) {
        diagnostics.push(DiagnosticsRecord::new(&query.id, result, &index, top_n));
        if result.diagnostics.fallback {
            fallback_count += 1;
        }
        let ids = ranked_ids(result, &index);
        if query.gold_ids.is_empty() {
            log::warn!("query {} has no gold passages; skipping metrics", query.id);
        } else {
            labeled += 1;
            for &k in &config.top_k {
                let r = recall_at_k(&ids, &query.gold_ids, k).expect("gold is non-empty");
                *recall_sums.get_mut(&k).expect("key present") += r;
                let ar = all_recall_at_k(&ids, &query.gold_ids, k).expect("gold is non-empty");
                *all_recall_sums.get_mut(&k).expect("key present") += ar as u8 as f64;
            }
        }
        if let Some(answered) = answered {
            let judged = if query.answers.is_empty() {
                None
            } else {
                Some(qa_em_f1(&answered.answer, &query.answers))
            };
            if let Some((em, f1)) = judged {
                qa_count += 1;
                em_sum += em;
                f1_sum += f1;
            }
            answers.push(AnswerRecord {
                query_id: query.id.clone(),
                answer: answered.answer.clone(),
                raw_response: answered.raw_response.clone(),
                failed: answered.failed,
                em: judged.map(|(em, _)| em),
                f1: judged.map(|(_, f1)| f1),
            });
        }
    }

    let mean = |sums: &BTreeMap<usize, f64>| -> BTreeMap<usize, f64> {
        sums.iter()
            .map(|(&k, &sum)| (k, if labeled == 0 { 0.0 } else { sum / labeled as f64 }))
            .collect()
    };
    let report = EvalReport {
        config_digest: config.digest(),
        n_queries: labeled,
        recall: mean(&recall_sums),
        all_recall: mean(&all_recall_sums),
        em: (config.qa && qa_count > 0).then(|| em_sum / qa_count as f64),
        f1: (config.qa && qa_count > 0).then(|| f1_sum / qa_count as f64),
        fallback_count,
    };
    let table = render_table(&report, config, queries.len());

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    jsonl::write(&out_dir.join("diagnostics.jsonl"), &diagnostics)?;
    if config.qa {
        jsonl::write(&out_dir.join("answers.jsonl"), &answers)?;
    }
    let report_path = out_dir.join("report.json");
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Invalid(format!("serializing report: {e}")))?;
    std::fs::write(&report_path, report_json + "\n").map_err(|e| Error::io(&report_path, e))?;
    let table_path = out_dir.join("table.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    Ok((report, table))
}

fn render_table(report: &EvalReport, config: &RunConfig, total_queries: usize) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "mode {}   config {}\n",
        config.mode,
        &report.config_digest[..12]
    ));
    out.push_str(&format!(
        "queries: {} labeled of {} total, {} fallback\n",
        report.n_queries, total_queries, report.fallback_count
    ));
    let header: Vec<String> = report.recall.keys().map(|k| format!("@{k:<7}")).collect();
    out.push_str(&format!("{:<12}{}\n", "metric", header.join("")));
    let row = |name: &str, values: &BTreeMap<usize, f64>| -> String {
        let cells: Vec<String> = values.values().map(|v| format!("{v:<8.4}")).collect();
        format!("{name:<12}{}\n", cells.join(""))
    };
    out.push_str(&row("recall", &report.recall));
    out.push_str(&row("all_recall", &report.all_recall));
    if let (Some(em), Some(f1)) = (report.em, report.f1) {
        out.push_str(&format!("{:<12}{em:<8.4}\n", "em"));
        out.push_str(&format!("{:<12}{f1:<8.4}\n", "f1"));
    }
    out
}
