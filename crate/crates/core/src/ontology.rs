//! Ontology classes, relation types and the typed property graph.
//!
//! The graph enforces the edge signature table on every insertion, so any
//! reachable `KnowledgeGraph` value is schema-sound. Structural completeness
//! (every topic covered and broken into sub-topics) is checked separately by
//! [`KnowledgeGraph::validate`] because it only holds once review has
//! finished.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

pub const SCHEMA_VERSION: u32 = 1;

/// Property keys used on SIMILAR_TO edges.
pub const PROP_SCORE: &str = "score";
pub const PROP_METHOD: &str = "method";
pub const PROP_VALIDATED: &str = "validated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    StudyModule,
    Lecture,
    Session,
    Topic,
    SubTopic,
    Domain,
    SubDomain,
    Student,
    BackgroundKnowledge,
    LearningGoal,
    Preference,
    AcademicParameters,
}

impl NodeClass {
    pub const ALL: [NodeClass; 12] = [
        NodeClass::StudyModule,
        NodeClass::Lecture,
        NodeClass::Session,
        NodeClass::Topic,
        NodeClass::SubTopic,
        NodeClass::Domain,
        NodeClass::SubDomain,
        NodeClass::Student,
        NodeClass::BackgroundKnowledge,
        NodeClass::LearningGoal,
        NodeClass::Preference,
        NodeClass::AcademicParameters,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::StudyModule => "StudyModule",
            NodeClass::Lecture => "Lecture",
            NodeClass::Session => "Session",
            NodeClass::Topic => "Topic",
            NodeClass::SubTopic => "SubTopic",
            NodeClass::Domain => "Domain",
            NodeClass::SubDomain => "SubDomain",
            NodeClass::Student => "Student",
            NodeClass::BackgroundKnowledge => "BackgroundKnowledge",
            NodeClass::LearningGoal => "LearningGoal",
            NodeClass::Preference => "Preference",
            NodeClass::AcademicParameters => "AcademicParameters",
        }
    }

    /// Every class except `AcademicParameters` requires a non-empty title.
    pub fn requires_title(self) -> bool {
        self != NodeClass::AcademicParameters
    }

    /// Topic and SubTopic, the classes produced by extraction.
    pub fn is_concept(self) -> bool {
        matches!(self, NodeClass::Topic | NodeClass::SubTopic)
    }

    fn id_prefix(self) -> &'static str {
        match self {
            NodeClass::StudyModule => "module",
            NodeClass::Lecture => "lecture",
            NodeClass::Session => "session",
            NodeClass::Topic => "topic",
            NodeClass::SubTopic => "subtopic",
            NodeClass::Domain => "domain",
            NodeClass::SubDomain => "subdomain",
            NodeClass::Student => "student",
            NodeClass::BackgroundKnowledge => "background",
            NodeClass::LearningGoal => "goal",
            NodeClass::Preference => "preference",
            NodeClass::AcademicParameters => "academic",
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeClass {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GraphError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeType {
    Contains,
    InstanceOf,
    Covers,
    HasSubtopic,
    HasSubdomain,
    BelongsToDomain,
    EnrolledIn,
    HasBackground,
    HasGoal,
    HasPreference,
    HasAcademicParams,
    SimilarTo,
}

impl EdgeType {
    pub const ALL: [EdgeType; 12] = [
        EdgeType::Contains,
        EdgeType::InstanceOf,
        EdgeType::Covers,
        EdgeType::HasSubtopic,
        EdgeType::HasSubdomain,
        EdgeType::BelongsToDomain,
        EdgeType::EnrolledIn,
        EdgeType::HasBackground,
        EdgeType::HasGoal,
        EdgeType::HasPreference,
        EdgeType::HasAcademicParams,
        EdgeType::SimilarTo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Contains => "CONTAINS",
            EdgeType::InstanceOf => "INSTANCE_OF",
            EdgeType::Covers => "COVERS",
            EdgeType::HasSubtopic => "HAS_SUBTOPIC",
            EdgeType::HasSubdomain => "HAS_SUBDOMAIN",
            EdgeType::BelongsToDomain => "BELONGS_TO_DOMAIN",
            EdgeType::EnrolledIn => "ENROLLED_IN",
            EdgeType::HasBackground => "HAS_BACKGROUND",
            EdgeType::HasGoal => "HAS_GOAL",
            EdgeType::HasPreference => "HAS_PREFERENCE",
            EdgeType::HasAcademicParams => "HAS_ACADEMIC_PARAMS",
            EdgeType::SimilarTo => "SIMILAR_TO",
        }
    }

    /// The signature table: whether `source -[self]-> target` is legal.
    pub fn allows(self, source: NodeClass, target: NodeClass) -> bool {
        use NodeClass::*;
        match self {
            EdgeType::Contains => source == StudyModule && target == Lecture,
            EdgeType::InstanceOf => source == Session && target == Lecture,
            EdgeType::Covers => source == Session && target == Topic,
            EdgeType::HasSubtopic => source == Topic && target == SubTopic,
            EdgeType::HasSubdomain => source == Domain && target == SubDomain,
            EdgeType::BelongsToDomain => matches!(source, Topic | SubTopic) && matches!(target, Domain | SubDomain),
            EdgeType::EnrolledIn => source == Student && target == StudyModule,
            EdgeType::HasBackground => source == Student && target == BackgroundKnowledge,
            EdgeType::HasGoal => source == Student && target == LearningGoal,
            EdgeType::HasPreference => source == Student && target == Preference,
            EdgeType::HasAcademicParams => source == Student && target == AcademicParameters,
            EdgeType::SimilarTo => source == target && source.is_concept(),
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GraphError::UnknownEdgeType(s.to_string()))
    }
}

/// A scalar property value. Nested structures are not allowed on nodes or edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropertyValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl PropertyValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PropertyValue::Int(i) => Some(*i as f64),
            PropertyValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropertyValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            PropertyValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl From<&str> for PropertyValue {
    fn from(s: &str) -> Self {
        PropertyValue::Text(s.to_string())
    }
}

impl From<String> for PropertyValue {
    fn from(s: String) -> Self {
        PropertyValue::Text(s)
    }
}

impl From<f64> for PropertyValue {
    fn from(f: f64) -> Self {
        PropertyValue::Float(f)
    }
}

impl From<i64> for PropertyValue {
    fn from(i: i64) -> Self {
        PropertyValue::Int(i)
    }
}

impl From<bool> for PropertyValue {
    fn from(b: bool) -> Self {
        PropertyValue::Bool(b)
    }
}

pub type Properties = BTreeMap<String, PropertyValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub class: NodeClass,
    pub title: String,
    pub description: Option<String>,
    #[serde(default)]
    pub properties: Properties,
}

impl Node {
    /// Text used for similarity: `"title: description"`, or the title alone.
    pub fn similarity_text(&self) -> String {
        match self.description.as_deref().map(str::trim) {
            Some(d) if !d.is_empty() => format!("{}: {}", self.title, d),
            _ => self.title.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub source: String,
    pub target: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    #[serde(default)]
    pub properties: Properties,
}

impl Edge {
    pub fn score(&self) -> Option<f64> {
        self.properties.get(PROP_SCORE).and_then(PropertyValue::as_f64)
    }
}

/// Caller-supplied node fields. `id` is generated when absent.
#[derive(Debug, Clone, Default)]
pub struct NewNode {
    pub id: Option<String>,
    pub title: String,
    pub description: Option<String>,
    pub properties: Properties,
}

impl NewNode {
    pub fn titled(title: impl Into<String>) -> Self {
        NewNode {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn with_property(mut self, key: impl Into<String>, value: impl Into<PropertyValue>) -> Self {
        self.properties.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    OrphanSubtopic,
    SubtopicMultipleParents,
    TopicWithoutSubtopic,
    TopicWithoutCovers,
    DanglingEndpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending node or edge id.
    pub subject: String,
    pub message: String,
}

/// Typed property graph over the curriculum, domain and user ontology.
///
/// Nodes and edges are kept in id order, so iteration and export are
/// independent of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<String, Edge>,
    triples: BTreeSet<(String, String, EdgeType)>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_ids(&self) -> BTreeSet<&str> {
        self.nodes.keys().map(String::as_str).collect()
    }

    pub fn has_edge(&self, source: &str, target: &str, edge_type: EdgeType) -> bool {
        let (s, t) = canonical_endpoints(source, target, edge_type);
        self.triples.contains(&(s.to_string(), t.to_string(), edge_type))
    }

    pub fn add_node(&mut self, class: NodeClass, new: NewNode) -> Result<String, GraphError> {
        if class.requires_title() && new.title.trim().is_empty() {
            return Err(GraphError::EmptyTitle(class));
        }
        let id = match new.id {
            Some(id) => {
                if id.is_empty() {
                    return Err(GraphError::EmptyId);
                }
                if self.nodes.contains_key(&id) {
                    return Err(GraphError::DuplicateId(id));
                }
                id
            }
            None => self.generate_node_id(class),
        };
        self.nodes.insert(
            id.clone(),
            Node {
                id: id.clone(),
                class,
                title: new.title,
                description: new.description,
                properties: new.properties,
            },
        );
        Ok(id)
    }

    fn generate_node_id(&self, class: NodeClass) -> String {
        let mut n = self.nodes.len() + 1;
        loop {
            let candidate = format!("{}-{:06}", class.id_prefix(), n);
            if !self.nodes.contains_key(&candidate) {
                return candidate;
            }
            n += 1;
        }
    }

    /// Adds an edge with a generated id derived from its endpoints and type.
    pub fn add_edge(
        &mut self,
        source: &str,
        target: &str,
        edge_type: EdgeType,
        properties: Properties,
    ) -> Result<String, GraphError> {
        self.insert_edge(None, source, target, edge_type, properties)
    }

    /// Adds an edge under an explicit id, as used by import.
    pub fn add_edge_with_id(
        &mut self,
        id: &str,
        source: &str,
        target: &str,
        edge_type: EdgeType,
        properties: Properties,
    ) -> Result<String, GraphError> {
        self.insert_edge(Some(id.to_string()), source, target, edge_type, properties)
    }

    fn insert_edge(
        &mut self,
        id: Option<String>,
        source: &str,
        target: &str,
        edge_type: EdgeType,
        properties: Properties,
    ) -> Result<String, GraphError> {
        let (source, target) = canonical_endpoints(source, target, edge_type);
        let source_class = self
            .nodes
            .get(source)
            .ok_or_else(|| GraphError::DanglingEndpoint(source.to_string()))?
            .class;
        let target_class = self
            .nodes
            .get(target)
            .ok_or_else(|| GraphError::DanglingEndpoint(target.to_string()))?
            .class;
        if source == target || !edge_type.allows(source_class, target_class) {
            return Err(GraphError::SchemaViolation {
                edge_type,
                source_class,
                target_class,
            });
        }
        if edge_type == EdgeType::SimilarTo {
            check_similarity_properties(&properties)?;
        }
        let key = (source.to_string(), target.to_string(), edge_type);
        if self.triples.contains(&key) {
            return Err(GraphError::DuplicateEdge {
                from: key.0,
                to: key.1,
                edge_type,
            });
        }
        let id = id.unwrap_or_else(|| derived_edge_id(source, target, edge_type));
        if id.is_empty() {
            return Err(GraphError::EmptyId);
        }
        if self.edges.contains_key(&id) {
            return Err(GraphError::DuplicateId(id));
        }
        self.edges.insert(
            id.clone(),
            Edge {
                id: id.clone(),
                source: key.0.clone(),
                target: key.1.clone(),
                edge_type,
                properties,
            },
        );
        self.triples.insert(key);
        Ok(id)
    }

    /// Replaces one property on an existing edge, re-checking SIMILAR_TO bounds.
    pub fn set_edge_property(&mut self, edge_id: &str, key: &str, value: PropertyValue) -> Result<(), GraphError> {
        let edge = self
            .edges
            .get_mut(edge_id)
            .ok_or_else(|| GraphError::NotFound(edge_id.to_string()))?;
        let mut props = edge.properties.clone();
        props.insert(key.to_string(), value);
        if edge.edge_type == EdgeType::SimilarTo {
            check_similarity_properties(&props)?;
        }
        edge.properties = props;
        Ok(())
    }

    pub fn remove_edge(&mut self, edge_id: &str) -> Result<Edge, GraphError> {
        let edge = self
            .edges
            .remove(edge_id)
            .ok_or_else(|| GraphError::NotFound(edge_id.to_string()))?;
        self.triples
            .remove(&(edge.source.clone(), edge.target.clone(), edge.edge_type));
        Ok(edge)
    }

    pub fn find_edge(&self, source: &str, target: &str, edge_type: EdgeType) -> Option<&Edge> {
        let (s, t) = canonical_endpoints(source, target, edge_type);
        self.edges
            .values()
            .find(|e| e.source == s && e.target == t && e.edge_type == edge_type)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str, edge_type: EdgeType) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges
            .values()
            .filter(move |e| e.source == id && e.edge_type == edge_type)
    }

    pub fn incoming<'a>(&'a self, id: &'a str, edge_type: EdgeType) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges
            .values()
            .filter(move |e| e.target == id && e.edge_type == edge_type)
    }

    /// Nodes filtered by class and case-insensitive title substring, in id order.
    pub fn query_nodes(&self, class: Option<NodeClass>, title_contains: Option<&str>) -> Vec<&Node> {
        let needle = title_contains.map(str::to_lowercase);
        self.nodes
            .values()
            .filter(|n| class.is_none_or(|c| n.class == c))
            .filter(|n| needle.as_deref().is_none_or(|s| n.title.to_lowercase().contains(s)))
            .collect()
    }

    /// Lists every structural violation; empty iff the graph is complete.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for edge in self.edges.values() {
            for end in [&edge.source, &edge.target] {
                if !self.nodes.contains_key(end) {
                    out.push(Violation {
                        kind: ViolationKind::DanglingEndpoint,
                        subject: edge.id.clone(),
                        message: format!("edge {} references missing node {}", edge.id, end),
                    });
                }
            }
        }
        for node in self.nodes.values() {
            match node.class {
                NodeClass::SubTopic => {
                    let parents = self.incoming(&node.id, EdgeType::HasSubtopic).count();
                    if parents == 0 {
                        out.push(Violation {
                            kind: ViolationKind::OrphanSubtopic,
                            subject: node.id.clone(),
                            message: format!("sub-topic {:?} has no parent topic", node.title),
                        });
                    } else if parents > 1 {
                        out.push(Violation {
                            kind: ViolationKind::SubtopicMultipleParents,
                            subject: node.id.clone(),
                            message: format!("sub-topic {:?} has {} parent topics", node.title, parents),
                        });
                    }
                }
                NodeClass::Topic => {
                    if self.outgoing(&node.id, EdgeType::HasSubtopic).next().is_none() {
                        out.push(Violation {
                            kind: ViolationKind::TopicWithoutSubtopic,
                            subject: node.id.clone(),
                            message: format!("topic {:?} has no sub-topics", node.title),
                        });
                    }
                    if self.incoming(&node.id, EdgeType::Covers).next().is_none() {
                        out.push(Violation {
                            kind: ViolationKind::TopicWithoutCovers,
                            subject: node.id.clone(),
                            message: format!("topic {:?} is not covered by any session", node.title),
                        });
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            schema_version: SCHEMA_VERSION,
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(GraphError::UnsupportedSchemaVersion(doc.schema_version));
        }
        let mut graph = KnowledgeGraph::new();
        for node in doc.nodes {
            let new = NewNode {
                id: Some(node.id),
                title: node.title,
                description: node.description,
                properties: node.properties,
            };
            graph.add_node(node.class, new)?;
        }
        for edge in doc.edges {
            graph.add_edge_with_id(&edge.id, &edge.source, &edge.target, edge.edge_type, edge.properties)?;
        }
        Ok(graph)
    }

    /// Canonical JSON export: arrays sorted by id, newline-terminated.
    pub fn export(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(&self.to_document()).expect("graph document serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn import(bytes: &[u8]) -> Result<Self, GraphError> {
        let doc: GraphDocument = serde_json::from_slice(bytes).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_document(doc)
    }
}

/// On-disk graph document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema_version: u32,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// SIMILAR_TO is stored once with the lexicographically smaller id as source.
fn canonical_endpoints<'a>(source: &'a str, target: &'a str, edge_type: EdgeType) -> (&'a str, &'a str) {
    if edge_type == EdgeType::SimilarTo && target < source {
        (target, source)
    } else {
        (source, target)
    }
}

fn derived_edge_id(source: &str, target: &str, edge_type: EdgeType) -> String {
    format!("{}|{}|{}", source, edge_type.as_str(), target)
}

fn check_similarity_properties(props: &Properties) -> Result<(), GraphError> {
    let score = props
        .get(PROP_SCORE)
        .and_then(PropertyValue::as_f64)
        .ok_or(GraphError::MissingProperty(PROP_SCORE))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(GraphError::InvalidScore(score));
    }
    match props.get(PROP_METHOD).and_then(PropertyValue::as_str) {
        Some(m) if !m.is_empty() => Ok(()),
        _ => Err(GraphError::MissingProperty(PROP_METHOD)),
    }
}

/// Properties for a new SIMILAR_TO edge.
pub fn similarity_properties(score: f64, method: &str, validated: bool) -> Properties {
    let mut props = Properties::new();
    props.insert(PROP_SCORE.into(), PropertyValue::Float(score));
    props.insert(PROP_METHOD.into(), PropertyValue::Text(method.into()));
    props.insert(PROP_VALIDATED.into(), PropertyValue::Bool(validated));
    props
}
