//! Online retrieval: query entities are linked to graph nodes, probability
//! mass spreads from those nodes via Personalized PageRank over the
//! combined relation and synonym edges, and passages are scored by pulling
//! node mass through the node-passage counts. Alternate ranking modes keep
//! the mass on the query nodes (with or without one hop of neighbors)
//! instead of running the walk.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embed::{link_query_entities, EmbeddingProvider, EmbeddingStore, LinkResult};
use crate::error::{Error, Result};
use crate::extract::{extract_query_entities, ExtractionBackend, TokenUsage};
use crate::graph::{KnowledgeGraph, LoadedIndex, NodePassageMatrix, NodeSpecificity};

/// How node scores are produced from the personalization vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMode {
    /// Full Personalized PageRank propagation.
    #[default]
    Ppr,
    /// The personalization vector itself; no propagation.
    QueryNodesOnly,
    /// Personalization vector plus one hop: each query node copies a
    /// fraction of its mass to each direct neighbor.
    NodesAndNeighbors,
}

impl RankMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankMode::Ppr => "ppr",
            RankMode::QueryNodesOnly => "query-nodes-only",
            RankMode::NodesAndNeighbors => "nodes-and-neighbors",
        }
    }
}

impl std::fmt::Display for RankMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppr" => Ok(RankMode::Ppr),
            "query-nodes-only" => Ok(RankMode::QueryNodesOnly),
            "nodes-and-neighbors" => Ok(RankMode::NodesAndNeighbors),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected ppr, query-nodes-only, or nodes-and-neighbors"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PprConfig {
    /// Probability of continuing the walk; 1 - damping restarts at the
    /// personalization vector.
    pub damping: f64,
    /// L1 convergence threshold between successive iterates.
    pub tolerance: f64,
    pub max_iterations: u32,
    /// Weight each query node's start mass by 1 / (number of passages it
    /// appears in), so ubiquitous phrases anchor less of the walk.
    pub use_specificity: bool,
    pub mode: RankMode,
    /// NodesAndNeighbors only: fraction of a query node's mass copied to
    /// each direct neighbor.
    pub neighbor_epsilon: f64,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 1000,
            use_specificity: true,
            mode: RankMode::Ppr,
            neighbor_epsilon: 0.1,
        }
    }
}

impl PprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config(format!(
                "damping must lie strictly between 0 and 1, got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.neighbor_epsilon >= 0.0 && self.neighbor_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "neighbor_epsilon must be a finite non-negative value, got {}",
                self.neighbor_epsilon
            )));
        }
        Ok(())
    }
}

/// Start distribution for the walk: sparse, non-negative, sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizationVector {
    entries: Vec<(u32, f64)>,
}

impl PersonalizationVector {
    /// Builds from (node, weight) pairs; duplicates accumulate and the
    /// result is renormalized to sum 1.
    pub fn from_weights(pairs: &[(u32, f64)]) -> Result<Self> {
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for &(node, weight) in pairs {
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(Error::Invalid(format!(
                    "personalization weight for node {node} must be finite and non-negative, got {weight}"
                )));
            }
            *merged.entry(node).or_insert(0.0) += weight;
        }
        merged.retain(|_, w| *w > 0.0);
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(Error::Invalid(
                "personalization vector has no positive mass".into(),
            ));
        }
        Ok(PersonalizationVector {
            entries: merged.into_iter().map(|(n, w)| (n, w / total)).collect(),
        })
    }

    /// (node ordinal, mass) pairs in ascending node order.
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    fn max_node(&self) -> Option<u32> {
        self.entries.last().map(|&(n, _)| n)
    }

    fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut dense = vec![0.0; n];
        for &(node, mass) in &self.entries {
            dense[node as usize] = mass;
        }
        dense
    }
}

/// Per-link start mass with optional specificity weighting. Equal mass per
/// link, so entities linking to the same node stack onto it.
pub fn build_personalization(
    links: &[LinkResult],
    specificity: &NodeSpecificity,
    use_specificity: bool,
) -> Result<PersonalizationVector> {
    if links.is_empty() {
        return Err(Error::Invalid(
            "cannot build a personalization vector from zero links".into(),
        ));
    }
    let share = 1.0 / links.len() as f64;
    let mut masses: BTreeMap<u32, f64> = BTreeMap::new();
    for link in links {
        if link.node_ordinal as usize >= specificity.len() {
            return Err(Error::Invalid(format!(
                "link to node {} is outside the graph ({} nodes)",
                link.node_ordinal,
                specificity.len()
            )));
        }
        *masses.entry(link.node_ordinal).or_insert(0.0) += share;
    }
    if use_specificity {
        for (node, mass) in masses.iter_mut() {
            *mass *= specificity.get(*node);
        }
    }
    let pairs: Vec<(u32, f64)> = masses.into_iter().collect();
    PersonalizationVector::from_weights(&pairs)
}

/// Undirected weighted adjacency in compressed sparse rows. Edge weight is
/// the number of distinct (subject, predicate, object) triples connecting
/// the pair, plus 1 per synonym edge; a triple whose endpoints coincide
/// contributes a self-loop.
#[derive(Debug)]
struct PprView {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    out_weight: Vec<f64>,
}

impl PprView {
    fn build(graph: &KnowledgeGraph, use_synonymy: bool) -> PprView {
        let n = graph.len();
        let mut distinct: BTreeSet<(u32, &str, u32)> = BTreeSet::new();
        for edge in &graph.relation_edges {
            distinct.insert((edge.subject, edge.predicate.as_str(), edge.object));
        }
        let mut pair_weight: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (s, _, o) in distinct {
            let key = if s <= o { (s, o) } else { (o, s) };
            *pair_weight.entry(key).or_insert(0.0) += 1.0;
        }
        if use_synonymy {
            for edge in &graph.synonym_edges {
                *pair_weight.entry((edge.a, edge.b)).or_insert(0.0) += 1.0;
            }
        }
        let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &w) in &pair_weight {
            adjacency[a as usize].push((b, w));
            if a != b {
                adjacency[b as usize].push((a, w));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut out_weight = Vec::with_capacity(n);
        offsets.push(0);
        for mut row in adjacency {
            row.sort_by_key(|&(t, _)| t);
            out_weight.push(row.iter().map(|&(_, w)| w).sum());
            for (t, w) in row {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        PprView {
            offsets,
            targets,
            weights,
            out_weight,
        }
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn neighbors(&self, node: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let range = self.offsets[node]..self.offsets[node + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }
}

/// Result of one node-scoring pass. `iterations` is 0 for modes that do
/// not run the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct PprOutcome {
    pub scores: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
    pub residual: f64,
}

fn check_support(v: &PersonalizationVector, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("graph has no nodes".into()));
    }
    match v.max_node() {
        None => Err(Error::Invalid("personalization vector is empty".into())),
        Some(max) if max as usize >= n => Err(Error::Invalid(format!(
            "personalization vector touches node {max}, graph has {n} nodes"
        ))),
        Some(_) => Ok(()),
    }
}

fn ppr_on_view(view: &PprView, v: &PersonalizationVector, cfg: &PprConfig) -> Result<PprOutcome> {
    cfg.validate()?;
    check_support(v, view.len())?;
    let n = view.len();
    let d = cfg.damping;
    let mut pi = v.to_dense(n);
    let mut residual = f64::INFINITY;
    for iteration in 1..=cfg.max_iterations {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for (node, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            if view.out_weight[node] == 0.0 {
                dangling += mass;
                continue;
            }
            let scale = mass / view.out_weight[node];
            for (target, weight) in view.neighbors(node) {
                next[target as usize] += scale * weight;
            }
        }
        for x in next.iter_mut() {
            *x *= d;
        }
        // Dangling mass restarts at v alongside the regular teleport.
        let restart = (1.0 - d) + d * dangling;
        for &(node, mass) in v.entries() {
            next[node as usize] += restart * mass;
        }
        residual = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .sum();
        pi = next;
        if residual <= cfg.tolerance {
            return Ok(PprOutcome {
                scores: pi,
                iterations: iteration,
                converged: true,
                residual,
            });
        }
    }
    log::warn!(
        "walk did not converge in {} iterations (residual {residual:.3e} > {:.3e}); using current iterate",
        cfg.max_iterations,
        cfg.tolerance
    );
    Ok(PprOutcome {
        scores: pi,
        iterations: cfg.max_iterations,
        converged: false,
        residual,
    })
}

fn node_scores_on_view(
    view: &PprView,
    v: &PersonalizationVector,
    cfg: &PprConfig,
) -> Result<PprOutcome> {
    match cfg.mode {
        RankMode::Ppr => ppr_on_view(view, v, cfg),
        RankMode::QueryNodesOnly => {
            cfg.validate()?;
            check_support(v, view.len())?;
            Ok(PprOutcome {
                scores: v.to_dense(view.len()),
                iterations: 0,
                converged: true,
                residual: 0.0,
            })
        }
        RankMode::NodesAndNeighbors => {
            cfg.validate()?;
            check_support(v, view.len())?;
            let mut scores = v.to_dense(view.len());
            for &(node, mass) in v.entries() {
                for (target, _) in view.neighbors(node as usize) {
                    if target != node {
                        scores[target as usize] += cfg.neighbor_epsilon * mass;
                    }
                }
            }
            let total: f64 = scores.iter().sum();
            for x in scores.iter_mut() {
                *x /= total;
            }
            Ok(PprOutcome {
                scores,
                iterations: 0,
                converged: true,
                residual: 0.0,
            })
        }
    }
}

/// Personalized PageRank over the graph's full edge set: the fixed point
/// of pi = (1-d)*v + d*pi*W, where W walks each edge with probability
/// proportional to its weight. Nodes without edges hand their mass back
/// to v. Non-convergence returns the current iterate with a warning.
pub fn ppr(graph: &KnowledgeGraph, v: &PersonalizationVector, cfg: &PprConfig) -> Result<PprOutcome> {
    ppr_on_view(&PprView::build(graph, true), v, cfg)
}

/// Node scores under the configured mode; Ppr delegates to [`ppr`], the
/// other modes reshape the personalization vector without a walk.
pub fn node_scores_for_mode(
    v: &PersonalizationVector,
    graph: &KnowledgeGraph,
    cfg: &PprConfig,
) -> Result<PprOutcome> {
    node_scores_on_view(&PprView::build(graph, true), v, cfg)
}

/// p[j] = sum over nodes i of pi[i] * counts[i][j]. Passages sharing no
/// node with the support of pi score exactly 0.
pub fn score_passages(pi: &[f64], matrix: &NodePassageMatrix) -> Result<Vec<f64>> {
    if pi.len() != matrix.n_nodes() {
        return Err(Error::Invalid(format!(
            "node scores cover {} nodes, matrix holds {}",
            pi.len(),
            matrix.n_nodes()
        )));
    }
    let mut scores = vec![0.0; matrix.n_passages()];
    for (node, &mass) in pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for &(passage, count) in matrix.row(node as u32) {
            scores[passage as usize] += mass * count as f64;
        }
    }
    Ok(scores)
}

/// Passage ordinals with positive score, best first, ties broken toward
/// the lower ordinal.
pub fn rank_order(scores: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32)
        .filter(|&p| scores[p as usize] > 0.0)
        .collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    order
}

/// Scores every passage of the corpus for one question. Scores are only
/// comparable within a single question.
pub trait DenseScorer: Send + Sync {
    fn name(&self) -> String;

    fn score_all(&self, question: &str, corpus: &Corpus) -> Result<Vec<f64>>;
}

/// Fraction of the question's distinct word tokens that appear in the
/// passage. A stand-in for a dense retriever in tests and small demos.
pub struct LexicalOverlapScorer;

fn word_set(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

impl DenseScorer for LexicalOverlapScorer {
    fn name(&self) -> String {
        "lexical-overlap".into()
    }

    fn score_all(&self, question: &str, corpus: &Corpus) -> Result<Vec<f64>> {
        let query_words = word_set(question);
        if query_words.is_empty() {
            return Ok(vec![0.0; corpus.len()]);
        }
        Ok(corpus
            .passages()
            .iter()
            .map(|p| {
                let words = word_set(&p.prompt_input());
                let hits = query_words.iter().filter(|w| words.contains(*w)).count();
                hits as f64 / query_words.len() as f64
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    /// Link-score threshold: averaging with the dense scorer kicks in only
    /// when the weakest query-node link falls below it.
    pub theta: f64,
    pub enabled: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            theta: 0.9,
            enabled: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }

    fn triggered(&self, links: &[LinkResult]) -> bool {
        if !self.enabled || links.is_empty() {
            return false;
        }
        links
            .iter()
            .map(|l| l.score as f64)
            .fold(f64::INFINITY, f64::min)
            < self.theta
    }
}

/// What one retrieval run did, alongside its scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalDiagnostics {
    pub entities: Vec<String>,
    pub links: Vec<LinkResult>,
    /// True when no query entity could be linked and the dense scorer (if
    /// any) supplied the ranking instead.
    pub fallback: bool,
    pub iterations: u32,
    pub converged: bool,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    /// One score per passage, corpus order.
    pub passage_scores: Vec<f64>,
    /// Positive-scoring passages, best first.
    pub order: Vec<u32>,
    pub diagnostics: RetrievalDiagnostics,
}

fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        // Constant vectors carry no ranking signal.
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}

/// Averages min-max-normalized graph and dense scores when the weakest
/// link score sits below theta; otherwise returns `primary` unchanged.
pub fn ensemble(
    primary: &RankedResult,
    dense_scores: &[f64],
    links: &[LinkResult],
    cfg: &EnsembleConfig,
) -> Result<RankedResult> {
    cfg.validate()?;
    if !cfg.triggered(links) {
        return Ok(primary.clone());
    }
    if dense_scores.len() != primary.passage_scores.len() {
        return Err(Error::Invalid(format!(
            "dense scores cover {} passages, graph scores {}",
            dense_scores.len(),
            primary.passage_scores.len()
        )));
    }
    let graph_norm = min_max_normalize(&primary.passage_scores);
    let dense_norm = min_max_normalize(dense_scores);
    let averaged: Vec<f64> = graph_norm
        .iter()
        .zip(&dense_norm)
        .map(|(g, d)| (g + d) / 2.0)
        .collect();
    let order = rank_order(&averaged);
    Ok(RankedResult {
        passage_scores: averaged,
        order,
        diagnostics: primary.diagnostics.clone(),
    })
}

/// Extraction and embedding backends for serving queries, plus the
/// optional dense scorer used for fallback and ensembling.
pub struct QueryBackends<'a> {
    pub extractor: &'a dyn ExtractionBackend,
    pub embedder: &'a dyn EmbeddingProvider,
    pub dense: Option<&'a dyn DenseScorer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RetrieveOptions {
    pub ppr: PprConfig,
    /// When false, synonym edges are left out of the walk.
    pub use_synonymy: bool,
    pub ensemble: EnsembleConfig,
}

impl RetrieveOptions {
    pub fn with_synonymy() -> Self {
        RetrieveOptions {
            use_synonymy: true,
            ..Default::default()
        }
    }
}

/// A loaded index bound to node embeddings, ready to serve queries. The
/// walk's adjacency is materialized lazily, once per synonymy setting, so
/// concurrent queries share it.
pub struct SearchIndex {
    graph: KnowledgeGraph,
    matrix: NodePassageMatrix,
    specificity: NodeSpecificity,
    corpus: Corpus,
    embeddings: EmbeddingStore,
    tau: f64,
    views: [OnceLock<PprView>; 2],
}

impl SearchIndex {
    pub fn new(index: LoadedIndex, embeddings: EmbeddingStore) -> Result<Self> {
        if embeddings.len() != index.graph.len() {
            return Err(Error::Invalid(format!(
                "embedding store holds {} rows, graph has {} nodes",
                embeddings.len(),
                index.graph.len()
            )));
        }
        for (ordinal, phrase) in index.graph.nodes().iter().enumerate() {
            if embeddings.phrase(ordinal as u32) != phrase {
                return Err(Error::Invalid(format!(
                    "embedding row {ordinal} is {:?}, graph node is {phrase:?}",
                    embeddings.phrase(ordinal as u32)
                )));
            }
        }
        Ok(SearchIndex {
            graph: index.graph,
            matrix: index.matrix,
            specificity: index.specificity,
            corpus: index.corpus,
            embeddings,
            tau: index.tau,
            views: [OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn matrix(&self) -> &NodePassageMatrix {
        &self.matrix
    }

    pub fn specificity(&self) -> &NodeSpecificity {
        &self.specificity
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn embeddings(&self) -> &EmbeddingStore {
        &self.embeddings
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn view(&self, use_synonymy: bool) -> &PprView {
        self.views[use_synonymy as usize].get_or_init(|| PprView::build(&self.graph, use_synonymy))
    }
}

/// Full online pipeline for one question: extract query entities, link
/// them to nodes, spread mass under the configured mode, score and rank
/// passages. Questions yielding no linkable entities fall back to the
/// dense scorer (empty result if none is configured), flagged in the
/// diagnostics.
pub fn retrieve(
    question: &str,
    index: &SearchIndex,
    backends: &QueryBackends,
    opts: &RetrieveOptions,
) -> Result<RankedResult> {
    opts.ppr.validate()?;
    opts.ensemble.validate()?;
    let (entities, usage) = extract_query_entities(question, backends.extractor)?;
    let links = if entities.is_empty() || index.graph.is_empty() {
        Vec::new()
    } else {
        link_query_entities(&entities, &index.embeddings, backends.embedder)?
    };

    if links.is_empty() {
        let (passage_scores, order) = match backends.dense {
            Some(dense) => {
                let scores = dense.score_all(question, &index.corpus)?;
                if scores.len() != index.corpus.len() {
                    return Err(Error::Invalid(format!(
                        "dense scorer returned {} scores for {} passages",
                        scores.len(),
                        index.corpus.len()
                    )));
                }
                let order = rank_order(&scores);
                (scores, order)
            }
            None => (vec![0.0; index.corpus.len()], Vec::new()),
        };
        log::warn!("no query entities linked for {question:?}; taking the fallback path");
        return Ok(RankedResult {
            passage_scores,
            order,
            diagnostics: RetrievalDiagnostics {
                entities,
                links,
                fallback: true,
                iterations: 0,
                converged: true,
                usage,
            },
        });
    }

    let v = build_personalization(&links, &index.specificity, opts.ppr.use_specificity)?;
    let outcome = node_scores_on_view(index.view(opts.use_synonymy), &v, &opts.ppr)?;
    let passage_scores = score_passages(&outcome.scores, &index.matrix)?;
    let order = rank_order(&passage_scores);
    let result = RankedResult {
        passage_scores,
        order,
        diagnostics: RetrievalDiagnostics {
            entities,
            links: links.clone(),
            fallback: false,
            iterations: outcome.iterations,
            converged: outcome.converged,
            usage,
        },
    };

    if opts.ensemble.triggered(&links) {
        if let Some(dense) = backends.dense {
            let dense_scores = dense.score_all(question, &index.corpus)?;
            return ensemble(&result, &dense_scores, &links, &opts.ensemble);
        }
        log::warn!("ensemble triggered but no dense scorer is configured; keeping graph ranking");
    }
    Ok(result)
}

/// One query's diagnostics in the shape written to diagnostics.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub query_id: String,
    pub entities: Vec<String>,
    pub links: Vec<LinkRecord>,
    pub fallback: bool,
    pub iterations: u32,
    pub top: Vec<ScoredPassage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub entity: String,
    /// The linked node's phrase.
    pub node: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub score: f32,
}

impl DiagnosticsRecord {
    /// Flattens a result for the log, keeping the best `top_n` passages.
    pub fn new(query_id: &str, result: &RankedResult, index: &SearchIndex, top_n: usize) -> Self {
        let links = result
            .diagnostics
            .links
            .iter()
            .map(|l| LinkRecord {
                entity: l.query_entity.clone(),
                node: index
                    .graph
                    .phrase(l.node_ordinal)
                    .unwrap_or_default()
                    .to_string(),
                score: l.score,
            })
            .collect();
        let top = result
            .order
            .iter()
            .take(top_n)
            .map(|&p| ScoredPassage {
                passage_id: index.corpus.passages()[p as usize].id.clone(),
                score: result.passage_scores[p as usize] as f32,
            })
            .collect();
        DiagnosticsRecord {
            query_id: query_id.to_string(),
            entities: result.diagnostics.entities.clone(),
            links,
            fallback: result.diagnostics.fallback,
            iterations: result.diagnostics.iterations,
            top,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use crate::embed::{embed_all, HashedProvider};
    use crate::extract::fixture::{query_ner_key, FixtureBackend};
    use crate::extract::{PassageExtraction, Triple};
    use crate::graph::GraphBundle;
    use approx::assert_abs_diff_eq;

    fn extraction(id: &str, entities: &[&str], triples: &[(&str, &str, &str)]) -> PassageExtraction {
        PassageExtraction {
            passage_id: id.to_string(),
            named_entities: entities.iter().map(|s| s.to_string()).collect(),
            triples: triples
                .iter()
                .map(|&(s, p, o)| Triple {
                    subject: s.into(),
                    predicate: p.into(),
                    object: o.into(),
                })
                .collect(),
            usage: TokenUsage::default(),
        }
    }

    /// a - b - c path with unit weights: P1 holds a and b, P2 holds b and c.
    fn path_bundle() -> GraphBundle {
        let mut bundle = GraphBundle::new();
        bundle.append(&extraction("p1", &["a", "b"], &[("a", "to", "b")]));
        bundle.append(&extraction("p2", &["b", "c"], &[("b", "to", "c")]));
        bundle
    }

    fn links_to(nodes: &[u32]) -> Vec<LinkResult> {
        nodes
            .iter()
            .map(|&n| LinkResult {
                query_entity: format!("e{n}"),
                node_ordinal: n,
                score: 1.0,
            })
            .collect()
    }

    fn uniform_config() -> PprConfig {
        PprConfig {
            use_specificity: false,
            ..Default::default()
        }
    }

    #[test]
    fn personalization_splits_accumulates_and_weights() {
        let bundle = path_bundle();
        let spec = bundle.specificity();

        let v = build_personalization(&links_to(&[0, 2]), &spec, false).unwrap();
        assert_eq!(v.entries(), &[(0, 0.5), (2, 0.5)]);

        let both_same = build_personalization(&links_to(&[1, 1]), &spec, false).unwrap();
        assert_eq!(both_same.entries(), &[(1, 1.0)]);

        // a sits in one passage (s=1), b in two (s=1/2): masses 0.5 and
        // 0.25 renormalize to 2/3 and 1/3.
        let weighted = build_personalization(&links_to(&[0, 1]), &spec, true).unwrap();
        assert_abs_diff_eq!(weighted.entries()[0].1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weighted.entries()[1].1, 1.0 / 3.0, epsilon = 1e-12);

        assert!(build_personalization(&[], &spec, false).is_err());
        assert!(build_personalization(&links_to(&[9]), &spec, false).is_err());
    }

    #[test]
    fn specificity_example_masses() {
        // Two links with s = (1.0, 0.25): 0.5 and 0.125 -> (0.8, 0.2).
        let mut bundle = GraphBundle::new();
        bundle.append(&extraction("p1", &["a", "b"], &[]));
        bundle.append(&extraction("p2", &["b"], &[]));
        bundle.append(&extraction("p3", &["b"], &[]));
        bundle.append(&extraction("p4", &["b"], &[]));
        let spec = bundle.specificity();
        assert_eq!(spec.get(0), 1.0);
        assert_eq!(spec.get(1), 0.25);
        let v = build_personalization(&links_to(&[0, 1]), &spec, true).unwrap();
        assert_abs_diff_eq!(v.entries()[0].1, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(v.entries()[1].1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn single_node_is_its_own_fixed_point() {
        let mut bundle = GraphBundle::new();
        bundle.append(&extraction("p1", &["only"], &[]));
        let v = PersonalizationVector::from_weights(&[(0, 1.0)]).unwrap();
        let out = ppr(&bundle.graph, &v, &uniform_config()).unwrap();
        assert_abs_diff_eq!(out.scores[0], 1.0, epsilon = 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn path_graph_matches_hand_solution() {
        let bundle = path_bundle();
        let v = PersonalizationVector::from_weights(&[(0, 1.0)]).unwrap();
        let out = ppr(&bundle.graph, &v, &uniform_config()).unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.scores[0], 7.0 / 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.scores[1], 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.scores[2], 1.0 / 12.0, epsilon = 1e-9);
        let total: f64 = out.scores.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn disconnected_node_gets_no_mass_and_dangling_mass_returns_to_v() {
        let mut bundle = path_bundle();
        bundle.append(&extraction("p3", &["z"], &[]));
        let v = PersonalizationVector::from_weights(&[(0, 1.0)]).unwrap();
        let out = ppr(&bundle.graph, &v, &uniform_config()).unwrap();
        assert_eq!(out.scores[3], 0.0);

        // All mass starting on the edgeless node stays there.
        let on_z = PersonalizationVector::from_weights(&[(3, 1.0)]).unwrap();
        let out = ppr(&bundle.graph, &on_z, &uniform_config()).unwrap();
        assert_abs_diff_eq!(out.scores[3], 1.0, epsilon = 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn synonym_edges_join_the_walk_with_weight_one() {
        // a - b by triple, b - c by synonym edge only.
        let mut bundle = GraphBundle::new();
        bundle.append(&extraction("p1", &["a", "b", "c"], &[("a", "to", "b")]));
        let mut graph = bundle.graph.clone();
        let provider = HashedProvider::with_synonyms(32, 1, [("b", "c")]);
        let store = embed_all(graph.nodes(), &provider, 16).unwrap();
        graph.add_synonym_edges(&store, 0.8).unwrap();
        assert_eq!(graph.synonym_edges.len(), 1);

        let v = PersonalizationVector::from_weights(&[(0, 1.0)]).unwrap();
        let out = ppr(&graph, &v, &uniform_config()).unwrap();
        // Same topology as the a-b-c path, so the same fixed point.
        assert_abs_diff_eq!(out.scores[2], 1.0 / 12.0, epsilon = 1e-9);

        // Without synonym edges c is unreachable.
        let stripped = bundle.graph.clone();
        let out = ppr(&stripped, &v, &uniform_config()).unwrap();
        assert_eq!(out.scores[2], 0.0);
    }

    #[test]
    fn duplicate_triples_across_passages_count_once_multiplicity_counts_predicates() {
        // Same (s,p,o) in two passages: weight 1. Two predicates between
        // the same pair: weight 2.
        let mut bundle = GraphBundle::new();
        bundle.append(&extraction("p1", &["a", "b", "c"], &[("a", "to", "b"), ("a", "near", "b"), ("b", "to", "c")]));
        bundle.append(&extraction("p2", &[], &[("a", "to", "b")]));
        let view = PprView::build(&bundle.graph, true);
        let ab: Vec<(u32, f64)> = view.neighbors(0).collect();
        assert_eq!(ab, vec![(1, 2.0)]);
        let b_row: Vec<(u32, f64)> = view.neighbors(1).collect();
        assert_eq!(b_row, vec![(0, 2.0), (2, 1.0)]);
    }

    #[test]
    fn non_convergence_returns_current_iterate() {
        let bundle = path_bundle();
        let v = PersonalizationVector::from_weights(&[(0, 1.0)]).unwrap();
        let cfg = PprConfig {
            max_iterations: 1,
            use_specificity: false,
            ..Default::default()
        };
        let out = ppr(&bundle.graph, &v, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
        let total: f64 = out.scores.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn config_validation_rejects_bad_knobs() {
        let bundle = path_bundle();
        let v = PersonalizationVector::from_weights(&[(0, 1.0)]).unwrap();
        for cfg in [
            PprConfig { damping: 0.0, ..Default::default() },
            PprConfig { damping: 1.0, ..Default::default() },
            PprConfig { tolerance: 0.0, ..Default::default() },
            PprConfig { max_iterations: 0, ..Default::default() },
            PprConfig { neighbor_epsilon: -0.1, ..Default::default() },
        ] {
            assert!(ppr(&bundle.graph, &v, &cfg).is_err(), "{cfg:?}");
        }
        let oob = PersonalizationVector::from_weights(&[(40, 1.0)]).unwrap();
        assert!(ppr(&bundle.graph, &oob, &uniform_config()).is_err());
    }

    #[test]
    fn score_passages_matches_hand_product() {
        // P1 holds a(x1) b(x1); P2 holds c(x2) via a self-pair triple.
        let mut bundle = GraphBundle::new();
        bundle.append(&extraction("p1", &["a", "b"], &[("a", "to", "b")]));
        bundle.append(&extraction("p2", &[], &[("c", "next to", "c")]));
        let pi = [7.0 / 12.0, 1.0 / 3.0, 1.0 / 12.0];
        let scores = score_passages(&pi, &bundle.matrix).unwrap();
        assert_abs_diff_eq!(scores[0], 11.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores[1], 1.0 / 6.0, epsilon = 1e-12);

        assert_eq!(score_passages(&[0.0; 3], &bundle.matrix).unwrap(), vec![0.0, 0.0]);
        assert!(score_passages(&[1.0; 2], &bundle.matrix).is_err());

        let mut single = GraphBundle::new();
        single.append(&extraction("p", &[], &[("x", "of", "x"), ("x", "at", "x")]));
        // Two distinct self-pair triples: slots count 2 each, total 4.
        assert_eq!(score_passages(&[1.0], &single.matrix).unwrap(), vec![4.0]);
    }

    #[test]
    fn modes_reshape_the_start_vector() {
        let bundle = path_bundle();
        let spec = bundle.specificity();
        let v = build_personalization(&links_to(&[0]), &spec, false).unwrap();

        let only = node_scores_for_mode(&v, &bundle.graph, &PprConfig {
            mode: RankMode::QueryNodesOnly,
            use_specificity: false,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(only.scores, vec![1.0, 0.0, 0.0]);
        assert_eq!(only.iterations, 0);

        let hop = node_scores_for_mode(&v, &bundle.graph, &PprConfig {
            mode: RankMode::NodesAndNeighbors,
            use_specificity: false,
            ..Default::default()
        })
        .unwrap();
        assert_abs_diff_eq!(hop.scores[0], 10.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hop.scores[1], 1.0 / 11.0, epsilon = 1e-12);
        assert_eq!(hop.scores[2], 0.0);

        let walked = node_scores_for_mode(&v, &bundle.graph, &uniform_config()).unwrap();
        let direct = ppr(&bundle.graph, &v, &uniform_config()).unwrap();
        assert_eq!(walked, direct);
    }

    #[test]
    fn rank_order_drops_zeros_and_breaks_ties_low() {
        assert_eq!(rank_order(&[0.5, 0.5, 0.2, 0.0]), vec![0, 1, 2]);
        assert_eq!(rank_order(&[0.1, 0.9, 0.1]), vec![1, 0, 2]);
        assert!(rank_order(&[0.0, 0.0]).is_empty());
    }

    fn ranked(scores: Vec<f64>) -> RankedResult {
        let order = rank_order(&scores);
        RankedResult {
            passage_scores: scores,
            order,
            diagnostics: RetrievalDiagnostics::default(),
        }
    }

    fn link_scored(score: f32) -> Vec<LinkResult> {
        vec![LinkResult {
            query_entity: "e".into(),
            node_ordinal: 0,
            score,
        }]
    }

    #[test]
    fn ensemble_averages_normalized_scores_when_triggered() {
        let primary = ranked(vec![2.0, 1.0, 0.0]);
        let cfg = EnsembleConfig { theta: 0.9, enabled: true };
        let out = ensemble(&primary, &[0.2, 0.8, 0.5], &link_scored(0.5), &cfg).unwrap();
        assert_abs_diff_eq!(out.passage_scores[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.passage_scores[1], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(out.passage_scores[2], 0.25, epsilon = 1e-12);
        assert_eq!(out.order, vec![1, 0, 2]);
    }

    #[test]
    fn ensemble_is_a_no_op_unless_triggered() {
        let primary = ranked(vec![2.0, 1.0, 0.0]);
        let strong = ensemble(
            &primary,
            &[0.2, 0.8, 0.5],
            &link_scored(0.95),
            &EnsembleConfig { theta: 0.9, enabled: true },
        )
        .unwrap();
        assert_eq!(strong, primary);

        let disabled = ensemble(
            &primary,
            &[0.2, 0.8, 0.5],
            &link_scored(0.1),
            &EnsembleConfig { theta: 0.9, enabled: false },
        )
        .unwrap();
        assert_eq!(disabled, primary);
    }

    #[test]
    fn constant_dense_scores_leave_the_graph_order() {
        let primary = ranked(vec![2.0, 1.0, 0.0]);
        let cfg = EnsembleConfig { theta: 0.9, enabled: true };
        let out = ensemble(&primary, &[0.4, 0.4, 0.4], &link_scored(0.5), &cfg).unwrap();
        assert_eq!(out.order, primary.order);
        // The constant vector normalizes to zeros, so the averaged scores
        // are exactly half the normalized graph scores.
        assert_abs_diff_eq!(out.passage_scores[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.passage_scores[1], 0.25, epsilon = 1e-12);
    }

    fn demo_corpus() -> Corpus {
        let passages = vec![
            Passage { id: "pa".into(), title: String::new(), text: "a and b together".into() },
            Passage { id: "pb".into(), title: String::new(), text: "b and c together".into() },
        ];
        Corpus::from_passages(passages).unwrap()
    }

    fn demo_search_index() -> SearchIndex {
        let bundle = path_bundle();
        let provider = HashedProvider::new(32, 7);
        let store = embed_all(bundle.graph.nodes(), &provider, 8).unwrap();
        let loaded = LoadedIndex {
            specificity: bundle.specificity(),
            graph: bundle.graph,
            matrix: bundle.matrix,
            corpus: demo_corpus(),
            tau: 0.8,
        };
        SearchIndex::new(loaded, store).unwrap()
    }

    #[test]
    fn retrieve_runs_the_full_pipeline() {
        let index = demo_search_index();
        let mut fixtures = FixtureBackend::default();
        let question = "where do a and b meet?";
        fixtures.insert(
            query_ner_key(question),
            r#"{"named_entities": ["a"]}"#,
        );
        let provider = HashedProvider::new(32, 7);
        let backends = QueryBackends {
            extractor: &fixtures,
            embedder: &provider,
            dense: None,
        };
        let opts = RetrieveOptions {
            ppr: PprConfig { use_specificity: false, ..Default::default() },
            use_synonymy: true,
            ensemble: EnsembleConfig::default(),
        };
        let first = retrieve(question, &index, &backends, &opts).unwrap();
        // pi = (7/12, 1/3, 1/12): pa = 11/12, pb = 5/12.
        assert_eq!(first.order, vec![0, 1]);
        assert!(!first.diagnostics.fallback);
        assert_eq!(first.diagnostics.links.len(), 1);
        assert_abs_diff_eq!(first.passage_scores[0], 11.0 / 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(first.passage_scores[1], 5.0 / 12.0, epsilon = 1e-9);

        let again = retrieve(question, &index, &backends, &opts).unwrap();
        assert_eq!(first, again);

        let record = DiagnosticsRecord::new("q1", &first, &index, 1);
        assert_eq!(record.top.len(), 1);
        assert_eq!(record.top[0].passage_id, "pa");
        assert_eq!(record.links[0].node, "a");
    }

    #[test]
    fn unlinkable_questions_fall_back_to_dense_or_empty() {
        let index = demo_search_index();
        let question = "what color is the sky?";
        let question2 = "together b c";
        let mut fixtures = FixtureBackend::default();
        fixtures.insert(query_ner_key(question), r#"{"named_entities": []}"#);
        fixtures.insert(query_ner_key(question2), r#"{"named_entities": []}"#);
        let provider = HashedProvider::new(32, 7);

        let without_dense = QueryBackends {
            extractor: &fixtures,
            embedder: &provider,
            dense: None,
        };
        let opts = RetrieveOptions::with_synonymy();
        let empty = retrieve(question, &index, &without_dense, &opts).unwrap();
        assert!(empty.diagnostics.fallback);
        assert!(empty.order.is_empty());

        let lexical = LexicalOverlapScorer;
        let with_dense = QueryBackends {
            extractor: &fixtures,
            embedder: &provider,
            dense: Some(&lexical),
        };
        let fell_back = retrieve(question2, &index, &with_dense, &opts).unwrap();
        assert!(fell_back.diagnostics.fallback);
        // pb contains all three tokens, pa only two.
        assert_eq!(fell_back.order, vec![1, 0]);
    }

    #[test]
    fn lexical_scorer_counts_distinct_question_words() {
        let corpus = demo_corpus();
        let scores = LexicalOverlapScorer.score_all("A together!", &corpus).unwrap();
        assert_abs_diff_eq!(scores[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores[1], 0.5, epsilon = 1e-12);
        assert_eq!(LexicalOverlapScorer.score_all("???", &corpus).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mode_strings_round_trip() {
        for mode in [RankMode::Ppr, RankMode::QueryNodesOnly, RankMode::NodesAndNeighbors] {
            assert_eq!(mode.as_str().parse::<RankMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(serde_json::from_str::<RankMode>(&json).unwrap(), mode);
        }
        assert!("pagerank".parse::<RankMode>().is_err());
        assert_eq!(serde_json::to_string(&RankMode::NodesAndNeighbors).unwrap(), "\"nodes-and-neighbors\"");
    }
}
