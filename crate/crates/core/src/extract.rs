//! Concept extraction: prompt construction, response parsing and the merge
//! of per-chunk answers into one Topic/SubTopic hierarchy per session.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ExtractError, IngestError, ProviderError};
use crate::ingest::{chunk_text, CorpusBundle, MaterialKind};
use crate::ontology::{KnowledgeGraph, NodeClass};
use crate::provider::{ChatProvider, EmbeddingProvider, Message, ProviderRequest};
use crate::similarity::cosine;

pub const DEFAULT_TOPIC_DEFINITION: &str = "Topic: an abstract subject that a teaching session deals with. \
Topics are the upper level of the content hierarchy and each one groups one or more sub-topics.";

pub const DEFAULT_SUBTOPIC_DEFINITION: &str = "Sub-Topic: a fine-grained piece of content belonging to exactly \
one topic, explained concretely in the session material (for example on a slide or in a worked example).";

const SCHEMA_INSTRUCTION: &str = "Answer with a single JSON object and nothing else, using exactly this shape:\n\
{\"topics\": [{\"title\": string, \"description\": string (optional), \
\"subtopics\": [{\"title\": string, \"description\": string}]}]}\n\
Every sub-topic must have a non-empty description. Do not add fields.";

const CONTEXT_HEADER: &str = "## Existing knowledge graph concepts";

/// Teacher-controlled parts of every extraction prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptProfile {
    pub ontology_definitions: String,
    pub teacher_rules: Vec<String>,
    pub terminology: BTreeMap<String, String>,
    pub transcript_rules: Vec<String>,
}

impl Default for PromptProfile {
    fn default() -> Self {
        PromptProfile {
            ontology_definitions: format!("{DEFAULT_TOPIC_DEFINITION}\n{DEFAULT_SUBTOPIC_DEFINITION}"),
            teacher_rules: Vec::new(),
            terminology: BTreeMap::new(),
            transcript_rules: vec![
                "The text is a lecture recording transcript; ignore organisational remarks, \
                 greetings and side discussions that are not part of the taught content."
                    .into(),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConceptKind {
    Topic,
    SubTopic,
}

impl ConceptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptKind::Topic => "Topic",
            ConceptKind::SubTopic => "SubTopic",
        }
    }

    pub fn node_class(self) -> NodeClass {
        match self {
            ConceptKind::Topic => NodeClass::Topic,
            ConceptKind::SubTopic => NodeClass::SubTopic,
        }
    }
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    #[default]
    Pending,
    Accepted,
    Rejected,
    Edited,
}

impl CandidateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateStatus::Pending => "pending",
            CandidateStatus::Accepted => "accepted",
            CandidateStatus::Rejected => "rejected",
            CandidateStatus::Edited => "edited",
        }
    }

    /// Accepted or edited: the candidate survives review.
    pub fn is_kept(self) -> bool {
        matches!(self, CandidateStatus::Accepted | CandidateStatus::Edited)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateConcept {
    pub id: String,
    pub session_id: String,
    pub kind: ConceptKind,
    pub title: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub source_method: String,
    #[serde(default)]
    pub status: CandidateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_parent: Option<String>,
    /// Verdict on the description alone, reviewed separately from the concept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_status: Option<CandidateStatus>,
}

impl CandidateConcept {
    pub fn effective_title(&self) -> &str {
        self.edited_title.as_deref().unwrap_or(&self.title)
    }

    pub fn effective_description(&self) -> Option<&str> {
        self.edited_description.as_deref().or(self.description.as_deref())
    }

    pub fn effective_parent(&self) -> Option<&str> {
        self.edited_parent.as_deref().or(self.parent_id.as_deref())
    }
}

/// One piece of session text small enough for a single prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionChunk {
    pub session_id: String,
    pub chunk_index: usize,
    pub kind: MaterialKind,
    pub text: String,
}

/// Splits a session's materials into chunks numbered across the whole session.
pub fn session_chunks(
    corpus: &CorpusBundle,
    session_id: &str,
    max_chars: usize,
    overlap_chars: usize,
) -> Result<Vec<SessionChunk>, IngestError> {
    let mut out = Vec::new();
    for entry in corpus.session_entries(session_id) {
        for text in chunk_text(&entry.text, max_chars, overlap_chars)? {
            out.push(SessionChunk {
                session_id: session_id.to_string(),
                chunk_index: out.len(),
                kind: entry.kind,
                text,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRequest {
    pub session_id: String,
    pub chunk_index: usize,
    pub request: ProviderRequest,
}

/// One request per chunk, in chunk order.
pub fn build_prompt(
    chunks: &[SessionChunk],
    profile: &PromptProfile,
    kg_context: &[String],
    model: &str,
) -> Result<Vec<ExtractionRequest>, ExtractError> {
    if chunks.is_empty() || chunks.iter().all(|c| c.text.trim().is_empty()) {
        return Err(ExtractError::EmptyCorpus);
    }
    Ok(chunks
        .iter()
        .map(|chunk| {
            let system = system_prompt(profile, chunk.kind == MaterialKind::Transcript);
            let mut user = String::new();
            if !kg_context.is_empty() {
                user.push_str(CONTEXT_HEADER);
                user.push('\n');
                for snippet in kg_context {
                    user.push_str("- ");
                    user.push_str(snippet);
                    user.push('\n');
                }
                user.push('\n');
            }
            user.push_str("## Session content\n");
            user.push_str(&chunk.text);
            user.push_str("\n\n");
            user.push_str(SCHEMA_INSTRUCTION);
            ExtractionRequest {
                session_id: chunk.session_id.clone(),
                chunk_index: chunk.chunk_index,
                request: ProviderRequest::new(model, vec![Message::system(system), Message::user(user)]),
            }
        })
        .collect())
}

fn system_prompt(profile: &PromptProfile, transcript: bool) -> String {
    let mut s = String::from(
        "You extract the taught concepts from university lecture material and classify them \
         into topics and sub-topics.\n\n## Ontology definitions\n",
    );
    s.push_str(&profile.ontology_definitions);
    s.push('\n');
    if !profile.teacher_rules.is_empty() {
        s.push_str("\n## Rules\n");
        for rule in &profile.teacher_rules {
            s.push_str("- ");
            s.push_str(rule);
            s.push('\n');
        }
    }
    if !profile.terminology.is_empty() {
        s.push_str("\n## Terminology\n");
        for (term, meaning) in &profile.terminology {
            s.push_str(&format!("- {term}: {meaning}\n"));
        }
    }
    if transcript && !profile.transcript_rules.is_empty() {
        s.push_str("\n## Transcript handling\n");
        for rule in &profile.transcript_rules {
            s.push_str("- ");
            s.push_str(rule);
            s.push('\n');
        }
    }
    s
}

/// Parsed response shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedTopic {
    pub title: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub subtopics: Vec<ExtractedSubTopic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedSubTopic {
    pub title: String,
    pub description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractionResponse {
    topics: Vec<ExtractedTopic>,
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fence(s: &str) -> &str {
    let t = s.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    // Drop an info string such as `json` on the opening line.
    match body.find('\n') {
        Some(nl) if !body[..nl].contains('{') => body[nl + 1..].trim(),
        _ => body.trim(),
    }
}

/// Parses and checks one extraction response.
pub fn parse_extraction(raw: &str) -> Result<Vec<ExtractedTopic>, ProviderError> {
    let parsed: ExtractionResponse = serde_json::from_str(strip_code_fence(raw))
        .map_err(|e| ProviderError::format(format!("response is not valid extraction JSON: {e}"), raw))?;
    for topic in &parsed.topics {
        if topic.title.trim().is_empty() {
            return Err(ProviderError::format("topic with empty title", raw));
        }
        for sub in &topic.subtopics {
            if sub.title.trim().is_empty() {
                return Err(ProviderError::format(
                    format!("sub-topic of {:?} has an empty title", topic.title),
                    raw,
                ));
            }
            if sub.description.trim().is_empty() {
                return Err(ProviderError::format(
                    format!("sub-topic {:?} has no description", sub.title),
                    raw,
                ));
            }
        }
    }
    Ok(parsed.topics)
}

fn merge_key(title: &str) -> String {
    title.trim().to_lowercase()
}

/// Merges topic lists in order: topics with the same case-folded title
/// collapse into the first occurrence and their sub-topics are unioned the
/// same way. A missing topic description is filled from later occurrences.
pub fn merge_topics<I>(lists: I) -> Vec<ExtractedTopic>
where
    I: IntoIterator,
    I::Item: IntoIterator<Item = ExtractedTopic>,
{
    let mut merged: Vec<ExtractedTopic> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for list in lists {
        for topic in list {
            let pos = *index.entry(merge_key(&topic.title)).or_insert_with(|| {
                merged.push(ExtractedTopic {
                    title: topic.title.trim().to_string(),
                    description: None,
                    subtopics: Vec::new(),
                });
                merged.len() - 1
            });
            let target = &mut merged[pos];
            if target.description.is_none() {
                target.description = topic.description.filter(|d| !d.trim().is_empty());
            }
            for sub in topic.subtopics {
                let key = merge_key(&sub.title);
                if !target.subtopics.iter().any(|s| merge_key(&s.title) == key) {
                    target.subtopics.push(ExtractedSubTopic {
                        title: sub.title.trim().to_string(),
                        description: sub.description,
                    });
                }
            }
        }
    }
    merged
}

/// Flattens one session's merged hierarchy into pending candidates.
pub fn to_candidates(session_id: &str, topics: &[ExtractedTopic], source_method: &str) -> Vec<CandidateConcept> {
    let mut out = Vec::new();
    for (ti, topic) in topics.iter().enumerate() {
        let topic_id = format!("{session_id}-t{:02}", ti + 1);
        out.push(CandidateConcept {
            id: topic_id.clone(),
            session_id: session_id.to_string(),
            kind: ConceptKind::Topic,
            title: topic.title.clone(),
            description: topic.description.clone(),
            parent_id: None,
            source_method: source_method.to_string(),
            status: CandidateStatus::Pending,
            edited_title: None,
            edited_description: None,
            edited_parent: None,
            description_status: None,
        });
        for (si, sub) in topic.subtopics.iter().enumerate() {
            out.push(CandidateConcept {
                id: format!("{topic_id}-s{:02}", si + 1),
                session_id: session_id.to_string(),
                kind: ConceptKind::SubTopic,
                title: sub.title.clone(),
                description: Some(sub.description.clone()),
                parent_id: Some(topic_id.clone()),
                source_method: source_method.to_string(),
                status: CandidateStatus::Pending,
                edited_title: None,
                edited_description: None,
                edited_parent: None,
                description_status: None,
            });
        }
    }
    out
}

/// Sends every request (concurrently) and merges the answers per session.
///
/// Sessions appear in order of their first request; within a session the
/// merge follows chunk index order, so the result does not depend on
/// completion order.
pub fn extract_candidates(
    requests: &[ExtractionRequest],
    provider: &dyn ChatProvider,
) -> Result<Vec<CandidateConcept>, ExtractError> {
    let responses: Vec<Result<Vec<ExtractedTopic>, ProviderError>> = requests
        .par_iter()
        .map(|r| {
            let response = provider.complete(&r.request)?;
            parse_extraction(&response.content)
        })
        .collect();

    let mut sessions: Vec<&str> = Vec::new();
    let mut by_session: HashMap<&str, Vec<(usize, Vec<ExtractedTopic>)>> = HashMap::new();
    for (req, result) in requests.iter().zip(responses) {
        let topics = result?;
        let entry = by_session.entry(req.session_id.as_str()).or_insert_with(|| {
            sessions.push(&req.session_id);
            Vec::new()
        });
        entry.push((req.chunk_index, topics));
    }

    let method = format!("llm:{}", provider.id());
    let mut out = Vec::new();
    for session in sessions {
        let mut chunks = by_session.remove(session).unwrap_or_default();
        chunks.sort_by_key(|(i, _)| *i);
        let merged = merge_topics(chunks.into_iter().map(|(_, t)| t));
        out.extend(to_candidates(session, &merged, &method));
    }
    Ok(out)
}

/// Up to `k` existing Topic/SubTopic snippets most similar to `session_text`,
/// best first. Ties break by node id.
pub fn retrieve_kg_context(
    graph: &KnowledgeGraph,
    session_text: &str,
    embedder: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<String>, ExtractError> {
    let snippets: Vec<(&str, String)> = graph
        .nodes()
        .filter(|n| n.class.is_concept())
        .map(|n| (n.id.as_str(), n.similarity_text()))
        .collect();
    if k == 0 || snippets.is_empty() {
        return Ok(Vec::new());
    }
    let mut texts = Vec::with_capacity(snippets.len() + 1);
    texts.push(session_text.to_string());
    texts.extend(snippets.iter().map(|(_, s)| s.clone()));
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::format(
            format!("expected {} embeddings, got {}", texts.len(), vectors.len()),
            "",
        )
        .into());
    }
    let query = &vectors[0];
    let mut scored: Vec<(f64, &str, &String)> = snippets
        .iter()
        .zip(&vectors[1..])
        .map(|((id, text), v)| {
            // A zero vector (no tokens) carries no signal; rank it last.
            let score = cosine(query, v).unwrap_or(f64::NEG_INFINITY);
            (score, *id, text)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(k).map(|(_, _, t)| t.clone()).collect())
}
