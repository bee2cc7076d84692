//! A project directory and the pipeline stages that operate on it.
//!
//! ```text
//! project.json        configuration
//! corpus/             one normalized CorpusBundle per study module
//! candidates.jsonl    extracted candidates (append-only)
//! decisions.jsonl     reviewer decisions (append-only)
//! relations.jsonl     proposed semantic relations (append-only)
//! missing.jsonl       reviewer-reported misses (append-only)
//! graph.json          the knowledge graph
//! reports/            graph_before_link.json, structure_report.json
//! ```

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ProjectError, ReviewError};
use crate::extract::{
    build_prompt, extract_candidates, retrieve_kg_context, session_chunks, ExtractionRequest, PromptProfile,
};
use crate::ingest::{self, CorpusBundle, SessionManifest, DEFAULT_MAX_CHARS, DEFAULT_OVERLAP_CHARS};
use crate::metrics::{create_detector, structure_report, AdcConvention, StructureReport, DEFAULT_DETECTOR};
use crate::ontology::{EdgeType, KnowledgeGraph, NewNode, NodeClass, Properties};
use crate::provider::{
    create_chat_provider, create_embedding_provider, ChatProvider, ChatSettings, EmbeddingProvider, EmbeddingSettings,
};
use crate::review::{
    compute_extraction_metrics, decided_kinds, promote_accepted, sample_relations, write_atomic, Decision, EditPolicy,
    ExtractionMetrics, PromotionReport, ReviewStore, DEFAULT_SAMPLE_FRACTION, DEFAULT_SAMPLE_MIN,
};
use crate::similarity::{
    apply_relations, create_strategy, link_with, sync_relation_edges, LinkScope, SemanticRelation, StrategyContext,
    DEFAULT_THRESHOLD,
};

pub const CONFIG_FILE: &str = "project.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const CORPUS_DIR: &str = "corpus";
pub const REPORTS_DIR: &str = "reports";
pub const BEFORE_LINK_FILE: &str = "graph_before_link.json";
pub const STRUCTURE_REPORT_FILE: &str = "structure_report.json";
pub const LOCK_FILE: &str = ".run.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub max_chars: usize,
    pub overlap_chars: usize,
    /// Number of existing graph concepts offered as prompt context.
    pub context_k: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_chars: DEFAULT_MAX_CHARS,
            overlap_chars: DEFAULT_OVERLAP_CHARS,
            context_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkingConfig {
    pub threshold: f64,
    pub scope: LinkScope,
    pub strategy: String,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig {
            threshold: DEFAULT_THRESHOLD,
            scope: LinkScope::CrossModule,
            strategy: "embedding".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub fraction: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            fraction: DEFAULT_SAMPLE_FRACTION,
            min_count: DEFAULT_SAMPLE_MIN,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub adc_convention: AdcConvention,
    pub detector: String,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            adc_convention: AdcConvention::EdgeRatio,
            detector: DEFAULT_DETECTOR.into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    pub schema_version: u32,
    pub chat: ChatSettings,
    pub embedding: EmbeddingSettings,
    pub prompt: PromptProfile,
    pub extraction: ExtractionConfig,
    pub linking: LinkingConfig,
    pub sampling: SamplingConfig,
    pub metrics: MetricsConfig,
    pub edit_policy: EditPolicy,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            schema_version: 1,
            chat: ChatSettings {
                provider: "http".into(),
                model: "gpt-4o-mini".into(),
                ..ChatSettings::default()
            },
            embedding: EmbeddingSettings::default(),
            prompt: PromptProfile::default(),
            extraction: ExtractionConfig::default(),
            linking: LinkingConfig::default(),
            sampling: SamplingConfig::default(),
            metrics: MetricsConfig::default(),
            edit_policy: EditPolicy::Lenient,
        }
    }
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<(), ProjectError> {
        let bad = |m: String| Err(ProjectError::Config(m));
        if self.schema_version != 1 {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        let e = &self.extraction;
        if e.max_chars == 0 || e.overlap_chars >= e.max_chars {
            return bad(format!(
                "extraction.overlap_chars ({}) must be smaller than a positive max_chars ({})",
                e.overlap_chars, e.max_chars
            ));
        }
        if !(0.0..=1.0).contains(&self.linking.threshold) {
            return bad(format!("linking.threshold {} outside [0, 1]", self.linking.threshold));
        }
        let s = &self.sampling;
        if !(s.fraction > 0.0 && s.fraction <= 1.0) {
            return bad(format!("sampling.fraction {} outside (0, 1]", s.fraction));
        }
        if s.min_count == 0 {
            return bad("sampling.min_count must be positive".into());
        }
        if self.embedding.dimension == 0 || self.embedding.batch_size == 0 {
            return bad("embedding.dimension and embedding.batch_size must be positive".into());
        }
        if self.chat.retry.attempts == 0 || self.embedding.retry.attempts == 0 {
            return bad("retry.attempts must be at least 1".into());
        }
        if self.prompt.ontology_definitions.trim().is_empty() {
            return bad("prompt.ontology_definitions must not be empty".into());
        }
        Ok(())
    }

    /// Applies `CURRIKG_LLM_*` / `CURRIKG_EMB_*` overrides from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup("CURRIKG_LLM_URL") {
            self.chat.url = Some(url);
        }
        if let Some(key) = lookup("CURRIKG_LLM_KEY") {
            self.chat.api_key = Some(key);
        }
        if let Some(model) = lookup("CURRIKG_LLM_MODEL") {
            self.chat.model = model;
        }
        if let Some(url) = lookup("CURRIKG_EMB_URL") {
            self.embedding.url = Some(url);
        }
        if let Some(key) = lookup("CURRIKG_EMB_KEY") {
            self.embedding.api_key = Some(key);
        }
        if let Some(model) = lookup("CURRIKG_EMB_MODEL") {
            self.embedding.model = model;
        }
    }
}

/// Held while a pipeline stage runs; removes the lock file on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(root: &Path) -> Result<Self, ProjectError> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(ProjectError::Locked(path)),
            Err(source) => Err(ProjectError::Io { path, source }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub module_id: String,
    pub materials: usize,
    pub empty_materials: Vec<String>,
    pub nodes_created: usize,
    pub edges_created: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub sessions: Vec<String>,
    pub skipped_sessions: Vec<String>,
    pub requests: usize,
    pub candidates_added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromoteReport {
    pub sessions: Vec<PromotionReport>,
    pub relations_validated: usize,
    pub relations_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub threshold: f64,
    pub proposed: usize,
    pub edges_added: usize,
    pub relations_added: usize,
    pub structure: StructureReport,
}

#[derive(Debug, Clone)]
pub struct Project {
    root: PathBuf,
    config: ProjectConfig,
}

/// Requests, planned session ids, skipped session ids.
pub type ExtractionPlan = (Vec<ExtractionRequest>, Vec<String>, Vec<String>);

impl Project {
    /// Creates the project layout with `config` written to `project.json`.
    pub fn init(root: &Path, config: ProjectConfig) -> Result<Self, ProjectError> {
        config.validate()?;
        let config_path = root.join(CONFIG_FILE);
        if config_path.exists() {
            return Err(ProjectError::AlreadyExists(root.to_path_buf()));
        }
        for dir in [root.to_path_buf(), root.join(CORPUS_DIR), root.join(REPORTS_DIR)] {
            fs::create_dir_all(&dir).map_err(|source| ProjectError::Io {
                path: dir.clone(),
                source,
            })?;
        }
        let project = Project {
            root: root.to_path_buf(),
            config,
        };
        let mut json = serde_json::to_string_pretty(&project.config).expect("config serializes");
        json.push('\n');
        project.write(&config_path, json.as_bytes())?;
        project.save_graph(&KnowledgeGraph::new())?;
        Ok(project)
    }

    /// Opens a project, applying environment overrides from the process.
    pub fn open(root: &Path) -> Result<Self, ProjectError> {
        Project::open_with_env(root, |k| std::env::var(k).ok())
    }

    pub fn open_with_env(root: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Self, ProjectError> {
        let path = root.join(CONFIG_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ProjectError::NotFound(root.to_path_buf()));
            }
            Err(source) => return Err(ProjectError::Io { path, source }),
        };
        let mut config: ProjectConfig =
            serde_json::from_slice(&bytes).map_err(|e| ProjectError::Config(format!("{}: {e}", path.display())))?;
        config.apply_env(env);
        if let Some(dir) = &config.chat.fixture_dir {
            if dir.is_relative() {
                config.chat.fixture_dir = Some(root.join(dir));
            }
        }
        config.validate()?;
        Ok(Project {
            root: root.to_path_buf(),
            config,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ProjectConfig {
        &mut self.config
    }

    pub fn graph_path(&self) -> PathBuf {
        self.root.join(GRAPH_FILE)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join(REPORTS_DIR)
    }

    pub fn lock(&self) -> Result<RunLock, ProjectError> {
        RunLock::acquire(&self.root)
    }

    pub fn load_graph(&self) -> Result<KnowledgeGraph, ProjectError> {
        let path = self.graph_path();
        match fs::read(&path) {
            Ok(bytes) => Ok(KnowledgeGraph::import(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(KnowledgeGraph::new()),
            Err(source) => Err(ProjectError::Io { path, source }),
        }
    }

    pub fn save_graph(&self, graph: &KnowledgeGraph) -> Result<(), ProjectError> {
        self.write(&self.graph_path(), &graph.export())
    }

    pub fn store(&self) -> Result<ReviewStore, ProjectError> {
        Ok(ReviewStore::open(&self.root)?)
    }

    pub fn chat_provider(&self) -> Result<Arc<dyn ChatProvider>, ProjectError> {
        Ok(create_chat_provider(&self.config.chat)?)
    }

    pub fn embedding_provider(&self) -> Result<Arc<dyn EmbeddingProvider>, ProjectError> {
        Ok(create_embedding_provider(&self.config.embedding)?)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
        write_atomic(path, bytes).map_err(|source| ProjectError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn ensure_dir(&self, dir: &Path) -> Result<(), ProjectError> {
        fs::create_dir_all(dir).map_err(|source| ProjectError::Io {
            path: dir.to_path_buf(),
            source,
        })
    }

    /// Loads a manifest's materials (paths relative to the manifest), stores
    /// the corpus and adds the module/lecture/session skeleton to the graph.
    pub fn ingest(&self, manifest_path: &Path) -> Result<IngestReport, ProjectError> {
        let _lock = self.lock()?;
        let manifest = ingest::load_manifest(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let corpus = ingest::ingest_materials(&manifest, base)?;

        let corpus_dir = self.root.join(CORPUS_DIR);
        self.ensure_dir(&corpus_dir)?;
        let mut json = serde_json::to_string_pretty(&corpus).expect("corpus serializes");
        json.push('\n');
        self.write(
            &corpus_dir.join(format!("{}.json", manifest.module_id)),
            json.as_bytes(),
        )?;

        let mut graph = self.load_graph()?;
        let (nodes_before, edges_before) = (graph.node_count(), graph.edge_count());
        add_skeleton(&mut graph, &manifest)?;
        self.save_graph(&graph)?;
        Ok(IngestReport {
            module_id: manifest.module_id.clone(),
            materials: corpus.entries.len(),
            empty_materials: corpus.flagged().map(|e| e.path.clone()).collect(),
            nodes_created: graph.node_count() - nodes_before,
            edges_created: graph.edge_count() - edges_before,
        })
    }

    /// All stored corpus bundles, ordered by module id.
    pub fn corpora(&self) -> Result<Vec<CorpusBundle>, ProjectError> {
        let dir = self.root.join(CORPUS_DIR);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(ProjectError::Io { path: dir, source }),
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let bytes = fs::read(&p).map_err(|source| ProjectError::Io {
                    path: p.clone(),
                    source,
                })?;
                serde_json::from_slice(&bytes).map_err(|e| ProjectError::Config(format!("{}: {e}", p.display())))
            })
            .collect()
    }

    /// Extraction requests for every session (or one), in corpus order.
    /// Sessions that already have candidates are skipped unless named.
    pub fn plan_extraction(&self, session: Option<&str>) -> Result<ExtractionPlan, ProjectError> {
        let corpora = self.corpora()?;
        let store = self.store()?;
        let graph = self.load_graph()?;
        let embedder = self.embedding_provider()?;
        let cfg = &self.config.extraction;

        let mut sessions: Vec<String> = Vec::new();
        for bundle in &corpora {
            for e in &bundle.entries {
                if !sessions.contains(&e.session_id) {
                    sessions.push(e.session_id.clone());
                }
            }
        }
        if let Some(s) = session {
            if !sessions.iter().any(|x| x == s) {
                return Err(ProjectError::UnknownSession(s.to_string()));
            }
            sessions.retain(|x| x == s);
        }

        let mut requests = Vec::new();
        let (mut planned, mut skipped) = (Vec::new(), Vec::new());
        for sid in sessions {
            let already = store.candidates().iter().any(|c| c.session_id == sid);
            if already && session.is_none() {
                skipped.push(sid);
                continue;
            }
            let bundle = corpora
                .iter()
                .find(|b| b.entries.iter().any(|e| e.session_id == sid))
                .expect("session came from a bundle");
            let chunks = session_chunks(bundle, &sid, cfg.max_chars, cfg.overlap_chars)?;
            if chunks.is_empty() {
                tracing::warn!(session = %sid, "session has no text; skipping");
                skipped.push(sid);
                continue;
            }
            let session_text: String = bundle
                .session_entries(&sid)
                .map(|e| e.text.as_str())
                .collect::<Vec<_>>()
                .join("\n\n");
            let context = retrieve_kg_context(&graph, &session_text, embedder.as_ref(), cfg.context_k)?;
            requests.extend(build_prompt(
                &chunks,
                &self.config.prompt,
                &context,
                &self.config.chat.model,
            )?);
            planned.push(sid);
        }
        Ok((requests, planned, skipped))
    }

    pub fn extract(&self, session: Option<&str>) -> Result<ExtractReport, ProjectError> {
        let _lock = self.lock()?;
        let (requests, sessions, skipped_sessions) = self.plan_extraction(session)?;
        let provider = self.chat_provider()?;
        let candidates = extract_candidates(&requests, provider.as_ref())?;
        let mut store = self.store()?;
        let added = store.add_candidates(&candidates)?;
        Ok(ExtractReport {
            sessions,
            skipped_sessions,
            requests: requests.len(),
            candidates_added: added,
        })
    }

    pub fn decide(&self, decision: Decision) -> Result<crate::review::Reviewed, ProjectError> {
        let mut store = self.store()?;
        Ok(store.record_decision(decision)?)
    }

    /// Accepts every pending candidate. Returns how many were accepted.
    pub fn accept_all(&self, reviewer: &str) -> Result<usize, ProjectError> {
        let mut store = self.store()?;
        let pending: Vec<String> = store
            .filter_candidates(Some(crate::extract::CandidateStatus::Pending), None)
            .into_iter()
            .map(|c| c.id.clone())
            .collect();
        for id in &pending {
            store.record_decision(Decision::accept(id, reviewer))?;
        }
        Ok(pending.len())
    }

    /// Promotes every session with reviewed candidates, then mirrors relation
    /// verdicts onto SIMILAR_TO edges. All-or-nothing across sessions.
    pub fn promote(&self) -> Result<PromoteReport, ProjectError> {
        let _lock = self.lock()?;
        let store = self.store()?;
        let mut graph = self.load_graph()?;
        let mut sessions = Vec::new();
        for sid in store.sessions() {
            let has_kept = store
                .candidates()
                .iter()
                .any(|c| c.session_id == sid && c.status.is_kept());
            if has_kept {
                sessions.push(promote_accepted(store.candidates(), &mut graph, &sid)?);
            }
        }
        let (relations_validated, relations_removed) = sync_relation_edges(&mut graph, store.relations())?;
        self.save_graph(&graph)?;
        Ok(PromoteReport {
            sessions,
            relations_validated,
            relations_removed,
        })
    }

    /// Proposes SIMILAR_TO relations, writes them to the graph and the
    /// relation store, and records the before/after structure report.
    pub fn link(&self, threshold: Option<f64>) -> Result<LinkReport, ProjectError> {
        let _lock = self.lock()?;
        let threshold = threshold.unwrap_or(self.config.linking.threshold);
        let mut graph = self.load_graph()?;
        let ctx = StrategyContext {
            embedder: self.embedding_provider()?,
            chat: match self.config.linking.strategy.as_str() {
                "embedding" => None,
                _ => Some(self.chat_provider()?),
            },
            model: self.config.chat.model.clone(),
            ontology_definitions: self.config.prompt.ontology_definitions.clone(),
        };
        let strategy = create_strategy(&self.config.linking.strategy, &ctx)?;
        let proposals = link_with(&graph, strategy.as_ref(), threshold, self.config.linking.scope)?;

        let before = without_similarity(&graph);
        let reports = self.reports_dir();
        self.ensure_dir(&reports)?;
        self.write(&reports.join(BEFORE_LINK_FILE), &before.export())?;

        let edges_added = apply_relations(&mut graph, &proposals)?;
        let mut store = self.store()?;
        let relations_added = store.add_relations(&proposals)?;
        self.save_graph(&graph)?;
        let structure = self.write_structure_report(&before, &graph)?;
        Ok(LinkReport {
            threshold,
            proposed: proposals.len(),
            edges_added,
            relations_added,
            structure,
        })
    }

    /// Structure report comparing the graph without and with its
    /// SIMILAR_TO edges.
    pub fn structure_metrics(&self) -> Result<StructureReport, ProjectError> {
        let graph = self.load_graph()?;
        self.compare(&without_similarity(&graph), &graph)
    }

    pub fn compare(&self, before: &KnowledgeGraph, after: &KnowledgeGraph) -> Result<StructureReport, ProjectError> {
        let m = &self.config.metrics;
        let detector = create_detector(&m.detector)?;
        Ok(structure_report(
            before,
            after,
            m.adc_convention,
            detector.as_ref(),
            m.seed,
        )?)
    }

    fn write_structure_report(
        &self,
        before: &KnowledgeGraph,
        after: &KnowledgeGraph,
    ) -> Result<StructureReport, ProjectError> {
        let report = self.compare(before, after)?;
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        self.write(&self.reports_dir().join(STRUCTURE_REPORT_FILE), json.as_bytes())?;
        Ok(report)
    }

    pub fn sample(&self, seed: Option<u64>, fraction: Option<f64>) -> Result<Vec<SemanticRelation>, ProjectError> {
        let store = self.store()?;
        let s = &self.config.sampling;
        Ok(sample_relations(
            store.relations(),
            fraction.unwrap_or(s.fraction),
            s.min_count,
            seed.unwrap_or(s.seed),
        )?)
    }

    /// Extraction metrics over every kind that has decided items.
    pub fn extraction_metrics(&self, policy: Option<EditPolicy>) -> Result<ExtractionMetrics, ProjectError> {
        let store = self.store()?;
        let kinds = decided_kinds(store.candidates());
        if kinds.is_empty() {
            return Err(ReviewError::InsufficientData("Topic".into()).into());
        }
        Ok(compute_extraction_metrics(
            store.candidates(),
            store.missing(),
            &kinds,
            policy.unwrap_or(self.config.edit_policy),
        )?)
    }
}

/// The graph with every SIMILAR_TO edge removed.
pub fn without_similarity(graph: &KnowledgeGraph) -> KnowledgeGraph {
    let mut g = graph.clone();
    let ids: Vec<String> = g
        .edges()
        .filter(|e| e.edge_type == EdgeType::SimilarTo)
        .map(|e| e.id.clone())
        .collect();
    for id in ids {
        g.remove_edge(&id).expect("edge listed above");
    }
    g
}

fn add_skeleton(graph: &mut KnowledgeGraph, manifest: &SessionManifest) -> Result<(), ProjectError> {
    ensure_node(
        graph,
        NodeClass::StudyModule,
        NewNode::titled(&manifest.module_title).with_id(&manifest.module_id),
    )?;
    for lecture in &manifest.lectures {
        ensure_node(
            graph,
            NodeClass::Lecture,
            NewNode::titled(&lecture.title).with_id(&lecture.lecture_id),
        )?;
        ensure_edge(graph, &manifest.module_id, &lecture.lecture_id, EdgeType::Contains)?;
        for session in &lecture.sessions {
            let title = session
                .title
                .clone()
                .unwrap_or_else(|| format!("{} - session {}", lecture.title, session.index));
            ensure_node(
                graph,
                NodeClass::Session,
                NewNode::titled(title)
                    .with_id(&session.session_id)
                    .with_property("index", i64::from(session.index)),
            )?;
            ensure_edge(graph, &session.session_id, &lecture.lecture_id, EdgeType::InstanceOf)?;
        }
    }
    Ok(())
}

fn ensure_node(graph: &mut KnowledgeGraph, class: NodeClass, node: NewNode) -> Result<(), ProjectError> {
    let id = node.id.clone().unwrap_or_default();
    match graph.node(&id) {
        Some(existing) if existing.class == class => Ok(()),
        Some(_) => Err(crate::error::GraphError::DuplicateId(id).into()),
        None => graph.add_node(class, node).map(|_| ()).map_err(Into::into),
    }
}

fn ensure_edge(
    graph: &mut KnowledgeGraph,
    source: &str,
    target: &str,
    edge_type: EdgeType,
) -> Result<(), ProjectError> {
    if !graph.has_edge(source, target, edge_type) {
        graph.add_edge(source, target, edge_type, Properties::new())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_and_validation() {
        let mut cfg = ProjectConfig::default();
        cfg.apply_env(|k| match k {
            "CURRIKG_LLM_URL" => Some("http://localhost:9/v1".into()),
            "CURRIKG_EMB_MODEL" => Some("emb".into()),
            _ => None,
        });
        assert_eq!(cfg.chat.url.as_deref(), Some("http://localhost:9/v1"));
        assert_eq!(cfg.embedding.model, "emb");
        cfg.validate().unwrap();

        cfg.sampling.fraction = 0.0;
        assert!(matches!(cfg.validate(), Err(ProjectError::Config(_))));
    }

    #[test]
    fn api_keys_are_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ProjectConfig::default();
        cfg.chat.api_key = Some("secret".into());
        Project::init(dir.path(), cfg).unwrap();
        let raw = fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap();
        assert!(!raw.contains("secret"));
        assert!(matches!(
            Project::init(dir.path(), ProjectConfig::default()),
            Err(ProjectError::AlreadyExists(_))
        ));
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let first = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(ProjectError::Locked(_))));
        drop(first);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn missing_project() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Project::open(dir.path()), Err(ProjectError::NotFound(_))));
    }
}
