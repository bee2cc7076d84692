//! Cross-content semantic relations between Topics and SubTopics.
//!
//! A [`SimilarityStrategy`] scores candidate concept pairs; [`link_with`]
//! enumerates the class-homogeneous pairs allowed by the [`LinkScope`] and
//! keeps those scoring at or above the threshold. Two strategies ship:
//! `embedding` (cosine over embeddings of `"title: description"`) and
//! `llm_judge` (the chat model rates each pair).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ProviderError, SimilarityError};
use crate::ontology::{similarity_properties, EdgeType, KnowledgeGraph, NodeClass, PROP_VALIDATED};
use crate::provider::{check_dimensions, ChatProvider, EmbeddingProvider, Message, ProviderRequest};
use crate::registry::Registry;

pub const DEFAULT_THRESHOLD: f64 = 0.85;

/// Dense embedding with positive L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimilarityError> {
        if values.iter().all(|&x| x == 0.0) {
            return Err(SimilarityError::ZeroVector);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Embeds `texts` in order, rejecting blank input and ragged dimensions.
pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, SimilarityError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(SimilarityError::EmptyText);
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = provider.embed(texts)?;
    if raw.len() != texts.len() {
        return Err(ProviderError::format(
            format!("expected {} embeddings, got {}", texts.len(), raw.len()),
            String::new(),
        )
        .into());
    }
    check_dimensions(&raw)?;
    raw.into_iter().map(EmbeddingVector::new).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMethod {
    Embedding,
    LlmJudge,
}

impl RelationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationMethod::Embedding => "embedding",
            RelationMethod::LlmJudge => "llm_judge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationStatus {
    #[default]
    Proposed,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticRelation {
    pub id: String,
    pub source: String,
    pub target: String,
    pub class: NodeClass,
    pub score: f64,
    pub method: RelationMethod,
    #[serde(default)]
    pub status: RelationStatus,
}

impl SemanticRelation {
    pub fn relation_id(source: &str, target: &str) -> String {
        format!("rel:{source}|{target}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkScope {
    /// Endpoints must belong to disjoint sets of study modules.
    #[default]
    CrossModule,
    /// Endpoints must belong to disjoint sets of sessions.
    CrossSession,
}

impl FromStr for LinkScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross_module" => Ok(LinkScope::CrossModule),
            "cross_session" => Ok(LinkScope::CrossSession),
            other => Err(format!("unknown link scope {other:?}")),
        }
    }
}

/// A Topic or SubTopic together with where it is taught.
#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub node_id: String,
    pub class: NodeClass,
    pub title: String,
    pub text: String,
    pub sessions: BTreeSet<String>,
    pub modules: BTreeSet<String>,
}

impl Concept {
    fn disjoint_from(&self, other: &Concept, scope: LinkScope) -> bool {
        let (a, b) = match scope {
            LinkScope::CrossModule => (&self.modules, &other.modules),
            LinkScope::CrossSession => (&self.sessions, &other.sessions),
        };
        !a.is_empty() && !b.is_empty() && a.is_disjoint(b)
    }
}

/// Every Topic and SubTopic with its sessions and study modules, in id order.
pub fn concepts(graph: &KnowledgeGraph) -> Vec<Concept> {
    let topic_sessions = |topic: &str| -> BTreeSet<String> {
        graph
            .incoming(topic, EdgeType::Covers)
            .map(|e| e.source.clone())
            .collect()
    };
    let modules_of = |sessions: &BTreeSet<String>| -> BTreeSet<String> {
        sessions
            .iter()
            .flat_map(|s| graph.outgoing(s, EdgeType::InstanceOf).map(|e| e.target.clone()))
            .flat_map(|lecture| {
                graph
                    .incoming(&lecture, EdgeType::Contains)
                    .map(|e| e.source.clone())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    graph
        .nodes()
        .filter(|n| n.class.is_concept())
        .map(|n| {
            let sessions = match n.class {
                NodeClass::Topic => topic_sessions(&n.id),
                _ => graph
                    .incoming(&n.id, EdgeType::HasSubtopic)
                    .flat_map(|e| topic_sessions(&e.source))
                    .collect(),
            };
            Concept {
                node_id: n.id.clone(),
                class: n.class,
                title: n.title.clone(),
                text: n.similarity_text(),
                modules: modules_of(&sessions),
                sessions,
            }
        })
        .collect()
}

/// Scores concept pairs. Returned scores are in [0, 1], one per pair.
pub trait SimilarityStrategy: Send + Sync {
    fn method(&self) -> RelationMethod;
    fn score_pairs(&self, concepts: &[Concept], pairs: &[(usize, usize)]) -> Result<Vec<f64>, SimilarityError>;
}

pub struct EmbeddingStrategy {
    embedder: Arc<dyn EmbeddingProvider>,
}

impl EmbeddingStrategy {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        EmbeddingStrategy { embedder }
    }
}

impl SimilarityStrategy for EmbeddingStrategy {
    fn method(&self) -> RelationMethod {
        RelationMethod::Embedding
    }

    fn score_pairs(&self, concepts: &[Concept], pairs: &[(usize, usize)]) -> Result<Vec<f64>, SimilarityError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<String> = concepts.iter().map(|c| c.text.clone()).collect();
        let vectors = embed_texts(self.embedder.as_ref(), &texts)?;
        pairs
            .par_iter()
            .map(|&(a, b)| Ok(cosine(vectors[a].as_slice(), vectors[b].as_slice())?.max(0.0)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub related: bool,
    pub score: f64,
    #[serde(default)]
    pub rationale: String,
}

pub struct LlmJudgeStrategy {
    provider: Arc<dyn ChatProvider>,
    model: String,
    ontology_definitions: String,
}

impl LlmJudgeStrategy {
    pub fn new(
        provider: Arc<dyn ChatProvider>,
        model: impl Into<String>,
        ontology_definitions: impl Into<String>,
    ) -> Self {
        LlmJudgeStrategy {
            provider,
            model: model.into(),
            ontology_definitions: ontology_definitions.into(),
        }
    }
}

impl SimilarityStrategy for LlmJudgeStrategy {
    fn method(&self) -> RelationMethod {
        RelationMethod::LlmJudge
    }

    fn score_pairs(&self, concepts: &[Concept], pairs: &[(usize, usize)]) -> Result<Vec<f64>, SimilarityError> {
        pairs
            .par_iter()
            .map(|&(a, b)| {
                let v = llm_judge_similarity(
                    self.provider.as_ref(),
                    &self.model,
                    &self.ontology_definitions,
                    &concepts[a].text,
                    &concepts[b].text,
                )?;
                Ok(if v.related { v.score } else { 0.0 })
            })
            .collect()
    }
}

const JUDGE_INSTRUCTIONS: &str = "You compare two units of university teaching content and decide \
whether they cover the same or closely overlapping subject matter. Respond with a JSON object \
{\"related\": boolean, \"score\": number between 0 and 1, \"rationale\": string} and nothing else.";

pub fn judge_request(model: &str, ontology_definitions: &str, concept_a: &str, concept_b: &str) -> ProviderRequest {
    ProviderRequest::new(
        model,
        vec![
            Message::system(format!("{ontology_definitions}\n\n{JUDGE_INSTRUCTIONS}")),
            Message::user(format!("Concept A: {concept_a}\nConcept B: {concept_b}")),
        ],
    )
}

/// Asks the chat model whether two concepts (`"title: description"`) are related.
pub fn llm_judge_similarity(
    provider: &dyn ChatProvider,
    model: &str,
    ontology_definitions: &str,
    concept_a: &str,
    concept_b: &str,
) -> Result<JudgeVerdict, SimilarityError> {
    if concept_a.trim().is_empty() || concept_b.trim().is_empty() {
        return Err(SimilarityError::EmptyText);
    }
    let request = judge_request(model, ontology_definitions, concept_a, concept_b);
    let response = provider.complete(&request)?;
    let raw = crate::extract::strip_code_fence(&response.content);
    let verdict: JudgeVerdict = serde_json::from_str(raw)
        .map_err(|e| ProviderError::format(format!("invalid judge verdict: {e}"), response.content.clone()))?;
    if !(0.0..=1.0).contains(&verdict.score) {
        return Err(ProviderError::format(
            format!("judge score {} outside [0, 1]", verdict.score),
            response.content,
        )
        .into());
    }
    Ok(verdict)
}

/// Dependencies available to strategy factories.
#[derive(Clone)]
pub struct StrategyContext {
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub chat: Option<Arc<dyn ChatProvider>>,
    pub model: String,
    pub ontology_definitions: String,
}

impl fmt::Debug for StrategyContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StrategyContext")
            .field("embedder", &self.embedder.id())
            .field("chat", &self.chat.as_ref().map(|c| c.id().to_string()))
            .field("model", &self.model)
            .finish()
    }
}

pub type StrategyRegistry = Registry<dyn SimilarityStrategy, StrategyContext, SimilarityError>;

pub fn strategy_registry() -> StrategyRegistry {
    let mut reg = StrategyRegistry::new("similarity strategy");
    reg.register("embedding", |ctx: &StrategyContext| {
        Ok(Box::new(EmbeddingStrategy::new(ctx.embedder.clone())) as Box<dyn SimilarityStrategy>)
    });
    reg.register("llm_judge", |ctx: &StrategyContext| {
        let chat = ctx
            .chat
            .clone()
            .ok_or_else(|| ProviderError::Config("llm_judge needs a chat provider".into()))?;
        Ok(Box::new(LlmJudgeStrategy::new(
            chat,
            ctx.model.clone(),
            ctx.ontology_definitions.clone(),
        )) as Box<dyn SimilarityStrategy>)
    });
    reg
}

pub fn create_strategy(name: &str, ctx: &StrategyContext) -> Result<Box<dyn SimilarityStrategy>, SimilarityError> {
    strategy_registry()
        .create(name, ctx)
        .unwrap_or_else(|| Err(SimilarityError::UnknownStrategy(name.to_string())))
}

/// Pairs of concept indexes eligible for linking under `scope`: same class,
/// different placement, not already linked. Ordered by (source id, target id).
pub fn candidate_pairs(graph: &KnowledgeGraph, concepts: &[Concept], scope: LinkScope) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..concepts.len() {
        for b in a + 1..concepts.len() {
            let (ca, cb) = (&concepts[a], &concepts[b]);
            if ca.class == cb.class
                && ca.disjoint_from(cb, scope)
                && !graph.has_edge(&ca.node_id, &cb.node_id, EdgeType::SimilarTo)
            {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Proposes relations for every eligible pair scoring at least `threshold`.
pub fn link_with(
    graph: &KnowledgeGraph,
    strategy: &dyn SimilarityStrategy,
    threshold: f64,
    scope: LinkScope,
) -> Result<Vec<SemanticRelation>, SimilarityError> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(SimilarityError::InvalidThreshold(threshold));
    }
    let concepts = concepts(graph);
    let pairs = candidate_pairs(graph, &concepts, scope);
    let scores = strategy.score_pairs(&concepts, &pairs)?;
    Ok(pairs
        .iter()
        .zip(scores)
        .filter(|(_, score)| *score >= threshold)
        .map(|(&(a, b), score)| {
            // Concepts are in id order, so a < b is already canonical.
            let (source, target) = (&concepts[a].node_id, &concepts[b].node_id);
            SemanticRelation {
                id: SemanticRelation::relation_id(source, target),
                source: source.clone(),
                target: target.clone(),
                class: concepts[a].class,
                score,
                method: strategy.method(),
                status: RelationStatus::Proposed,
            }
        })
        .collect())
}

/// Embedding-cosine linking.
pub fn link_similar(
    graph: &KnowledgeGraph,
    embedder: Arc<dyn EmbeddingProvider>,
    threshold: f64,
    scope: LinkScope,
) -> Result<Vec<SemanticRelation>, SimilarityError> {
    link_with(graph, &EmbeddingStrategy::new(embedder), threshold, scope)
}

/// Writes relations as SIMILAR_TO edges, skipping pairs already linked.
/// Returns the number of edges added.
pub fn apply_relations(graph: &mut KnowledgeGraph, relations: &[SemanticRelation]) -> Result<usize, SimilarityError> {
    let mut added = 0;
    for r in relations {
        if r.status == RelationStatus::Rejected || graph.has_edge(&r.source, &r.target, EdgeType::SimilarTo) {
            continue;
        }
        graph.add_edge(
            &r.source,
            &r.target,
            EdgeType::SimilarTo,
            similarity_properties(r.score, r.method.as_str(), r.status == RelationStatus::Accepted),
        )?;
        added += 1;
    }
    Ok(added)
}

/// Reflects reviewed relations on the graph: accepted edges are marked
/// validated, rejected edges removed. Returns (validated, removed).
pub fn sync_relation_edges(
    graph: &mut KnowledgeGraph,
    relations: &[SemanticRelation],
) -> Result<(usize, usize), SimilarityError> {
    let (mut validated, mut removed) = (0, 0);
    for r in relations {
        let Some(edge_id) = graph
            .find_edge(&r.source, &r.target, EdgeType::SimilarTo)
            .map(|e| e.id.clone())
        else {
            continue;
        };
        match r.status {
            RelationStatus::Accepted => {
                graph.set_edge_property(&edge_id, PROP_VALIDATED, true.into())?;
                validated += 1;
            }
            RelationStatus::Rejected => {
                graph.remove_edge(&edge_id)?;
                removed += 1;
            }
            RelationStatus::Proposed => {}
        }
    }
    Ok((validated, removed))
}
