//! Human review: decision log, relation sampling, extraction metrics and
//! promotion of accepted candidates into the graph.
//!
//! Candidates and relations are stored as extracted; their review status is
//! never written back. It is rebuilt by replaying the append-only decision
//! log, so the log alone is the source of truth for every verdict.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ReviewError;
use crate::extract::{CandidateConcept, CandidateStatus, ConceptKind};
use crate::ontology::{EdgeType, KnowledgeGraph, NewNode, NodeClass, Properties};
use crate::similarity::{RelationStatus, SemanticRelation};

pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const RELATIONS_FILE: &str = "relations.jsonl";
pub const MISSING_FILE: &str = "missing.jsonl";

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.10;
pub const DEFAULT_SAMPLE_MIN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Edit,
}

impl Verdict {
    fn status(self) -> CandidateStatus {
        match self {
            Verdict::Accept => CandidateStatus::Accepted,
            Verdict::Reject => CandidateStatus::Rejected,
            Verdict::Edit => CandidateStatus::Edited,
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            "edit" => Ok(Verdict::Edit),
            _ => Err(format!("unknown verdict {s:?} (expected accept, reject or edit)")),
        }
    }
}

/// What a decision judges: the concept itself or only its description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    #[default]
    Concept,
    Description,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub target_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub aspect: Aspect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_parent: Option<String>,
    pub reviewer: String,
    pub timestamp: String,
    /// Allows replacing an earlier verdict.
    #[serde(default, rename = "override", skip_serializing_if = "std::ops::Not::not")]
    pub override_previous: bool,
}

impl Decision {
    pub fn new(target_id: impl Into<String>, verdict: Verdict, reviewer: impl Into<String>) -> Self {
        Decision {
            target_id: target_id.into(),
            verdict,
            aspect: Aspect::Concept,
            edited_title: None,
            edited_description: None,
            edited_parent: None,
            reviewer: reviewer.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            override_previous: false,
        }
    }

    pub fn accept(target_id: impl Into<String>, reviewer: impl Into<String>) -> Self {
        Decision::new(target_id, Verdict::Accept, reviewer)
    }

    pub fn reject(target_id: impl Into<String>, reviewer: impl Into<String>) -> Self {
        Decision::new(target_id, Verdict::Reject, reviewer)
    }

    pub fn edit(target_id: impl Into<String>, reviewer: impl Into<String>) -> Self {
        Decision::new(target_id, Verdict::Edit, reviewer)
    }

    pub fn on_description(mut self) -> Self {
        self.aspect = Aspect::Description;
        self
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.edited_title = Some(title.into());
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.edited_description = Some(description.into());
        self
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.edited_parent = Some(parent.into());
        self
    }

    pub fn overriding(mut self) -> Self {
        self.override_previous = true;
        self
    }

    fn has_edits(&self) -> bool {
        self.edited_title.is_some() || self.edited_description.is_some() || self.edited_parent.is_some()
    }
}

/// A concept the reviewer found in the material but extraction missed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingEntry {
    pub session_id: String,
    pub kind: ConceptKind,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reviewed {
    Candidate(CandidateConcept),
    Relation(SemanticRelation),
}

/// Candidates, relations and the decision log of one project.
///
/// With a directory every mutation is appended to the JSONL files before the
/// in-memory state changes; without one the store lives in memory only.
#[derive(Debug, Clone, Default)]
pub struct ReviewStore {
    dir: Option<PathBuf>,
    candidates: Vec<CandidateConcept>,
    candidate_index: HashMap<String, usize>,
    relations: Vec<SemanticRelation>,
    relation_index: HashMap<String, usize>,
    decisions: Vec<Decision>,
    missing: Vec<MissingEntry>,
}

impl ReviewStore {
    pub fn in_memory() -> Self {
        ReviewStore::default()
    }

    /// Loads the store from `dir`; absent files count as empty.
    pub fn open(dir: &Path) -> Result<Self, ReviewError> {
        let mut store = ReviewStore {
            dir: Some(dir.to_path_buf()),
            ..ReviewStore::default()
        };
        for c in read_jsonl::<CandidateConcept>(&dir.join(CANDIDATES_FILE))? {
            store.insert_candidate(c);
        }
        for r in read_jsonl::<SemanticRelation>(&dir.join(RELATIONS_FILE))? {
            store.insert_relation(r);
        }
        store.missing = read_jsonl(&dir.join(MISSING_FILE))?;
        let path = dir.join(DECISIONS_FILE);
        for (i, d) in read_jsonl::<Decision>(&path)?.into_iter().enumerate() {
            store.apply(&d).map_err(|e| ReviewError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            store.decisions.push(d);
        }
        Ok(store)
    }

    pub fn candidates(&self) -> &[CandidateConcept] {
        &self.candidates
    }

    pub fn candidate(&self, id: &str) -> Option<&CandidateConcept> {
        self.candidate_index.get(id).map(|&i| &self.candidates[i])
    }

    pub fn filter_candidates(&self, status: Option<CandidateStatus>, session: Option<&str>) -> Vec<&CandidateConcept> {
        self.candidates
            .iter()
            .filter(|c| status.is_none_or(|s| c.status == s))
            .filter(|c| session.is_none_or(|s| c.session_id == s))
            .collect()
    }

    pub fn relations(&self) -> &[SemanticRelation] {
        &self.relations
    }

    pub fn relation(&self, id: &str) -> Option<&SemanticRelation> {
        self.relation_index.get(id).map(|&i| &self.relations[i])
    }

    pub fn filter_relations(&self, status: Option<RelationStatus>) -> Vec<&SemanticRelation> {
        self.relations
            .iter()
            .filter(|r| status.is_none_or(|s| r.status == s))
            .collect()
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn missing(&self) -> &[MissingEntry] {
        &self.missing
    }

    /// Session ids in order of first appearance among candidates.
    pub fn sessions(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.candidates
            .iter()
            .filter(|c| seen.insert(c.session_id.as_str()))
            .map(|c| c.session_id.clone())
            .collect()
    }

    /// Appends new candidates as pending; ids already stored are skipped.
    /// Returns how many were added.
    pub fn add_candidates(&mut self, candidates: &[CandidateConcept]) -> Result<usize, ReviewError> {
        let fresh = dedup_new(candidates, |c| &c.id, &self.candidate_index)
            .into_iter()
            .map(|c| CandidateConcept {
                status: CandidateStatus::Pending,
                description_status: None,
                edited_title: None,
                edited_description: None,
                edited_parent: None,
                ..c.clone()
            })
            .collect::<Vec<_>>();
        self.append(CANDIDATES_FILE, &fresh)?;
        let n = fresh.len();
        for c in fresh {
            self.insert_candidate(c);
        }
        Ok(n)
    }

    /// Appends new relations as proposed; ids already stored are skipped.
    pub fn add_relations(&mut self, relations: &[SemanticRelation]) -> Result<usize, ReviewError> {
        let fresh = dedup_new(relations, |r| &r.id, &self.relation_index)
            .into_iter()
            .map(|r| SemanticRelation {
                status: RelationStatus::Proposed,
                ..r.clone()
            })
            .collect::<Vec<_>>();
        self.append(RELATIONS_FILE, &fresh)?;
        let n = fresh.len();
        for r in fresh {
            self.insert_relation(r);
        }
        Ok(n)
    }

    pub fn add_missing(&mut self, entry: MissingEntry) -> Result<(), ReviewError> {
        self.append(MISSING_FILE, std::slice::from_ref(&entry))?;
        self.missing.push(entry);
        Ok(())
    }

    /// Validates and logs a decision, then applies it.
    pub fn record_decision(&mut self, decision: Decision) -> Result<Reviewed, ReviewError> {
        self.check(&decision)?;
        self.append(DECISIONS_FILE, std::slice::from_ref(&decision))?;
        let reviewed = self.apply(&decision)?;
        self.decisions.push(decision);
        Ok(reviewed)
    }

    /// Every rule a decision must pass; nothing is modified.
    fn check(&self, d: &Decision) -> Result<(), ReviewError> {
        if let Some(&i) = self.candidate_index.get(&d.target_id) {
            self.validate_candidate_edit(i, d)?;
            let c = &self.candidates[i];
            let decided = match d.aspect {
                Aspect::Concept => c.status != CandidateStatus::Pending,
                Aspect::Description => c.description_status.is_some(),
            };
            if decided && !d.override_previous {
                return Err(ReviewError::AlreadyDecided(d.target_id.clone()));
            }
            return Ok(());
        }
        if let Some(&i) = self.relation_index.get(&d.target_id) {
            if d.verdict == Verdict::Edit || d.aspect == Aspect::Description {
                return Err(ReviewError::InvalidEdit {
                    id: d.target_id.clone(),
                    reason: "relations can only be accepted or rejected".into(),
                });
            }
            if self.relations[i].status != RelationStatus::Proposed && !d.override_previous {
                return Err(ReviewError::AlreadyDecided(d.target_id.clone()));
            }
            return Ok(());
        }
        Err(ReviewError::NotFound(d.target_id.clone()))
    }

    fn apply(&mut self, d: &Decision) -> Result<Reviewed, ReviewError> {
        self.check(d)?;
        if let Some(&i) = self.candidate_index.get(&d.target_id) {
            let c = &mut self.candidates[i];
            match d.aspect {
                Aspect::Concept => {
                    c.status = d.verdict.status();
                    if d.verdict == Verdict::Edit {
                        c.edited_title = d.edited_title.clone();
                        c.edited_description = d.edited_description.clone();
                        c.edited_parent = d.edited_parent.clone();
                    } else {
                        c.edited_title = None;
                        c.edited_description = None;
                        c.edited_parent = None;
                    }
                }
                Aspect::Description => {
                    c.description_status = Some(d.verdict.status());
                    if d.verdict == Verdict::Edit {
                        c.edited_description = d.edited_description.clone();
                    }
                }
            }
            return Ok(Reviewed::Candidate(c.clone()));
        }
        let i = self.relation_index[&d.target_id];
        let r = &mut self.relations[i];
        r.status = match d.verdict {
            Verdict::Accept => RelationStatus::Accepted,
            _ => RelationStatus::Rejected,
        };
        Ok(Reviewed::Relation(r.clone()))
    }

    fn validate_candidate_edit(&self, i: usize, d: &Decision) -> Result<(), ReviewError> {
        let c = &self.candidates[i];
        let invalid = |reason: &str| ReviewError::InvalidEdit {
            id: d.target_id.clone(),
            reason: reason.to_string(),
        };
        if d.verdict != Verdict::Edit {
            if d.has_edits() {
                return Err(invalid("edited fields are only allowed with an edit verdict"));
            }
            return Ok(());
        }
        if !d.has_edits() {
            return Err(invalid("an edit must change at least one field"));
        }
        if d.edited_title.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return Err(invalid("edited title is empty"));
        }
        if d.edited_description.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return Err(invalid("edited description is empty"));
        }
        if d.aspect == Aspect::Description
            && (d.edited_description.is_none() || d.edited_title.is_some() || d.edited_parent.is_some())
        {
            return Err(invalid("a description edit may only change the description"));
        }
        if let Some(parent) = &d.edited_parent {
            if c.kind != ConceptKind::SubTopic {
                return Err(invalid("only sub-topics have a parent"));
            }
            let ok = self
                .candidate(parent)
                .is_some_and(|p| p.kind == ConceptKind::Topic && p.session_id == c.session_id);
            if !ok {
                return Err(invalid("new parent must be a topic candidate of the same session"));
            }
        }
        Ok(())
    }

    fn insert_candidate(&mut self, c: CandidateConcept) {
        self.candidate_index.insert(c.id.clone(), self.candidates.len());
        self.candidates.push(c);
    }

    fn insert_relation(&mut self, r: SemanticRelation) {
        self.relation_index.insert(r.id.clone(), self.relations.len());
        self.relations.push(r);
    }

    fn append<T: Serialize>(&self, file: &str, items: &[T]) -> Result<(), ReviewError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        if items.is_empty() {
            return Ok(());
        }
        let path = dir.join(file);
        let io = |source| ReviewError::Io {
            path: path.clone(),
            source,
        };
        let mut buf = String::new();
        for item in items {
            buf.push_str(&serde_json::to_string(item).expect("store records serialize"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        f.write_all(buf.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }
}

fn dedup_new<'a, T>(items: &'a [T], id: impl Fn(&T) -> &String, existing: &HashMap<String, usize>) -> Vec<&'a T> {
    let mut seen = HashSet::new();
    items
        .iter()
        .filter(|x| !existing.contains_key(id(x)) && seen.insert(id(x).clone()))
        .collect()
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReviewError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(ReviewError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ReviewError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ReviewError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Number of relations drawn: `min(total, max(min_count, ceil(fraction * total)))`.
pub fn sample_size(total: usize, fraction: f64, min_count: usize) -> usize {
    let by_fraction = (fraction * total as f64).ceil() as usize;
    total.min(min_count.max(by_fraction))
}

/// Seeded draw without replacement, returned in draw order.
pub fn sample_relations(
    relations: &[SemanticRelation],
    fraction: f64,
    min_count: usize,
    seed: u64,
) -> Result<Vec<SemanticRelation>, ReviewError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ReviewError::InvalidFraction(fraction));
    }
    let n = sample_size(relations.len(), fraction, min_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, relations.len(), n)
        .into_iter()
        .map(|i| relations[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    Topic,
    SubTopic,
    Description,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Topic, MetricKind::SubTopic, MetricKind::Description];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Topic => "Topic",
            MetricKind::SubTopic => "SubTopic",
            MetricKind::Description => "Description",
        }
    }
}

/// How edited candidates count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditPolicy {
    /// An edit is a correct extraction that needed correction.
    #[default]
    Lenient,
    /// An edit counts as an incorrect extraction.
    Strict,
}

impl FromStr for EditPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lenient" => Ok(EditPolicy::Lenient),
            "strict" => Ok(EditPolicy::Strict),
            _ => Err(format!("unknown edit policy {s:?} (expected lenient or strict)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricCounts {
    pub accepted: usize,
    pub rejected: usize,
    pub edited: usize,
    pub missing: usize,
}

impl MetricCounts {
    pub fn decided(&self) -> usize {
        self.accepted + self.rejected + self.edited
    }

    fn add(&mut self, status: CandidateStatus) {
        match status {
            CandidateStatus::Accepted => self.accepted += 1,
            CandidateStatus::Rejected => self.rejected += 1,
            CandidateStatus::Edited => self.edited += 1,
            CandidateStatus::Pending => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub precision: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub counts: MetricCounts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionMetrics {
    pub policy: EditPolicy,
    pub kinds: BTreeMap<MetricKind, KindMetrics>,
}

impl ExtractionMetrics {
    pub fn get(&self, kind: MetricKind) -> Option<&KindMetrics> {
        self.kinds.get(&kind)
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 from raw counts. Recall and F1 are omitted for
/// descriptions, which have no notion of a missed item.
pub fn metrics_from_counts(kind: MetricKind, counts: MetricCounts, policy: EditPolicy) -> KindMetrics {
    let hits = match policy {
        EditPolicy::Lenient => counts.accepted + counts.edited,
        EditPolicy::Strict => counts.accepted,
    };
    let precision = ratio(hits, counts.decided());
    if kind == MetricKind::Description {
        return KindMetrics {
            precision,
            recall: None,
            f1: None,
            counts: MetricCounts { missing: 0, ..counts },
        };
    }
    let recall = ratio(hits, counts.accepted + counts.edited + counts.missing);
    KindMetrics {
        precision,
        recall: Some(recall),
        f1: Some(f1(precision, recall)),
        counts,
    }
}

/// Tallies reviewed candidates (statuses as replayed from the log) and
/// reviewer-reported misses per kind.
pub fn tally(candidates: &[CandidateConcept], missing: &[MissingEntry]) -> BTreeMap<MetricKind, MetricCounts> {
    let mut counts: BTreeMap<MetricKind, MetricCounts> = BTreeMap::new();
    for c in candidates {
        let kind = match c.kind {
            ConceptKind::Topic => MetricKind::Topic,
            ConceptKind::SubTopic => MetricKind::SubTopic,
        };
        counts.entry(kind).or_default().add(c.status);
        if let Some(s) = c.description_status {
            counts.entry(MetricKind::Description).or_default().add(s);
        }
    }
    for m in missing {
        let kind = match m.kind {
            ConceptKind::Topic => MetricKind::Topic,
            ConceptKind::SubTopic => MetricKind::SubTopic,
        };
        counts.entry(kind).or_default().missing += 1;
    }
    counts
}

/// Metrics for the requested kinds; each needs at least one decided item.
pub fn compute_extraction_metrics(
    candidates: &[CandidateConcept],
    missing: &[MissingEntry],
    kinds: &[MetricKind],
    policy: EditPolicy,
) -> Result<ExtractionMetrics, ReviewError> {
    let counts = tally(candidates, missing);
    let mut out = ExtractionMetrics {
        policy,
        kinds: BTreeMap::new(),
    };
    for &kind in kinds {
        let c = counts.get(&kind).copied().unwrap_or_default();
        if c.decided() == 0 {
            return Err(ReviewError::InsufficientData(kind.as_str().to_string()));
        }
        out.kinds.insert(kind, metrics_from_counts(kind, c, policy));
    }
    Ok(out)
}

/// Kinds with at least one decided item.
pub fn decided_kinds(candidates: &[CandidateConcept]) -> Vec<MetricKind> {
    tally(candidates, &[])
        .into_iter()
        .filter(|(_, c)| c.decided() > 0)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromotionReport {
    pub session_id: String,
    pub nodes_created: usize,
    pub edges_created: usize,
    pub edges_removed: usize,
}

/// Writes the accepted and edited candidates of one session into the graph.
///
/// Node ids are the candidate ids, so re-running creates nothing new. The
/// graph is only modified if the whole session promotes cleanly.
pub fn promote_accepted(
    candidates: &[CandidateConcept],
    graph: &mut KnowledgeGraph,
    session_id: &str,
) -> Result<PromotionReport, ReviewError> {
    if graph.node(session_id).is_none_or(|n| n.class != NodeClass::Session) {
        return Err(ReviewError::MissingSession(session_id.to_string()));
    }
    let in_session: Vec<&CandidateConcept> = candidates.iter().filter(|c| c.session_id == session_id).collect();
    let topics: Vec<&CandidateConcept> = in_session
        .iter()
        .copied()
        .filter(|c| c.kind == ConceptKind::Topic && c.status.is_kept())
        .collect();
    let kept_topic_ids: HashSet<&str> = topics.iter().map(|t| t.id.as_str()).collect();
    let subtopics: Vec<&CandidateConcept> = in_session
        .iter()
        .copied()
        .filter(|c| c.kind == ConceptKind::SubTopic && c.status.is_kept())
        .collect();

    for s in &subtopics {
        if !s.effective_parent().is_some_and(|p| kept_topic_ids.contains(p)) {
            return Err(ReviewError::OrphanSubTopic { subtopic: s.id.clone() });
        }
    }
    for t in &topics {
        if !subtopics.iter().any(|s| s.effective_parent() == Some(t.id.as_str())) {
            return Err(ReviewError::EmptyTopic { topic: t.id.clone() });
        }
    }

    let mut next = graph.clone();
    let mut report = PromotionReport {
        session_id: session_id.to_string(),
        ..PromotionReport::default()
    };
    for c in topics.iter().chain(&subtopics) {
        if ensure_node(&mut next, c)? {
            report.nodes_created += 1;
        }
    }
    for t in &topics {
        if !next.has_edge(session_id, &t.id, EdgeType::Covers) {
            next.add_edge(session_id, &t.id, EdgeType::Covers, Properties::new())?;
            report.edges_created += 1;
        }
    }
    for s in &subtopics {
        let parent = s.effective_parent().expect("checked above");
        // A re-parenting edit replaces the earlier hierarchy edge.
        let stale: Vec<String> = next
            .incoming(&s.id, EdgeType::HasSubtopic)
            .filter(|e| e.source != parent)
            .map(|e| e.id.clone())
            .collect();
        for id in stale {
            next.remove_edge(&id)?;
            report.edges_removed += 1;
        }
        if !next.has_edge(parent, &s.id, EdgeType::HasSubtopic) {
            next.add_edge(parent, &s.id, EdgeType::HasSubtopic, Properties::new())?;
            report.edges_created += 1;
        }
    }
    *graph = next;
    Ok(report)
}

fn ensure_node(graph: &mut KnowledgeGraph, c: &CandidateConcept) -> Result<bool, ReviewError> {
    let class = c.kind.node_class();
    if let Some(existing) = graph.node(&c.id) {
        if existing.class != class {
            return Err(crate::error::GraphError::DuplicateId(c.id.clone()).into());
        }
        return Ok(false);
    }
    let mut node = NewNode::titled(c.effective_title())
        .with_id(c.id.clone())
        .with_property("session", c.session_id.clone())
        .with_property("source_method", c.source_method.clone());
    if let Some(d) = c.effective_description() {
        node = node.with_description(d);
    }
    graph.add_node(class, node)?;
    Ok(true)
}

/// Writes `bytes` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
