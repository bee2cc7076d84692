//! Structural graph measures: degree centrality, average degree centrality,
//! community detection and Newman modularity, plus before/after reports.
//!
//! Modularity and communities are computed on the undirected simple view of
//! the graph: edge direction is dropped, parallel and antiparallel edges
//! between the same pair collapse to one, and every edge has weight 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::ontology::{EdgeType, KnowledgeGraph};
use crate::registry::Registry;

const EPS: f64 = 1e-12;

/// Degree of one node: in-degree plus out-degree over directed edges.
pub fn degree_centrality(graph: &KnowledgeGraph, node: &str, normalized: bool) -> Result<f64, MetricsError> {
    if !graph.contains_node(node) {
        return Err(MetricsError::NotFound(node.to_string()));
    }
    let degree = graph
        .edges()
        .map(|e| usize::from(e.source == node) + usize::from(e.target == node))
        .sum::<usize>() as f64;
    if !normalized {
        return Ok(degree);
    }
    let n = graph.node_count();
    Ok(if n > 1 { degree / (n - 1) as f64 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdcConvention {
    /// |E| / |V|
    #[default]
    EdgeRatio,
    /// mean of in+out degree, i.e. 2|E| / |V|
    MeanTotalDegree,
    /// mean of degree / (n - 1)
    Normalized,
}

impl AdcConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            AdcConvention::EdgeRatio => "edge_ratio",
            AdcConvention::MeanTotalDegree => "mean_total_degree",
            AdcConvention::Normalized => "normalized",
        }
    }
}

impl FromStr for AdcConvention {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge_ratio" => Ok(AdcConvention::EdgeRatio),
            "mean_total_degree" => Ok(AdcConvention::MeanTotalDegree),
            "normalized" => Ok(AdcConvention::Normalized),
            _ => Err(MetricsError::Unknown {
                kind: "ADC convention",
                name: s.to_string(),
            }),
        }
    }
}

pub fn average_degree_centrality(graph: &KnowledgeGraph, convention: AdcConvention) -> Result<f64, MetricsError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(MetricsError::EmptyGraph);
    }
    let e = graph.edge_count() as f64;
    let n_f = n as f64;
    Ok(match convention {
        AdcConvention::EdgeRatio => e / n_f,
        AdcConvention::MeanTotalDegree => 2.0 * e / n_f,
        AdcConvention::Normalized if n == 1 => 0.0,
        AdcConvention::Normalized => 2.0 * e / n_f / (n_f - 1.0),
    })
}

/// Undirected simple view over nodes indexed in id order.
#[derive(Debug, Clone)]
pub struct UndirectedView {
    ids: Vec<String>,
    adjacency: Vec<BTreeSet<usize>>,
    edge_count: usize,
}

impl UndirectedView {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let ids: Vec<String> = graph.nodes().map(|n| n.id.clone()).collect();
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let pairs = graph
            .edges()
            .filter_map(|e| Some((*index.get(e.source.as_str())?, *index.get(e.target.as_str())?)));
        Self::build(ids.clone(), pairs)
    }

    /// View over `n` anonymous nodes named by their index.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let ids = (0..n).map(|i| format!("{i:04}")).collect();
        Self::build(ids, edges.iter().copied())
    }

    fn build(ids: Vec<String>, pairs: impl Iterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![BTreeSet::new(); ids.len()];
        for (a, b) in pairs {
            if a != b {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }
        let edge_count = adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2;
        UndirectedView {
            ids,
            adjacency,
            edge_count,
        }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Newman modularity of a community labelling indexed like the nodes.
    pub fn modularity(&self, labels: &[usize]) -> f64 {
        debug_assert_eq!(labels.len(), self.node_count());
        let m = self.edge_count as f64;
        if m == 0.0 {
            return 0.0;
        }
        let mut intra: BTreeMap<usize, f64> = BTreeMap::new();
        let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            *degree.entry(c).or_default() += self.degree(i) as f64;
            for j in self.neighbors(i).filter(|&j| j > i) {
                if labels[j] == c {
                    *intra.entry(c).or_default() += 1.0;
                }
            }
        }
        degree
            .iter()
            .map(|(c, d)| intra.get(c).copied().unwrap_or(0.0) / m - (d / (2.0 * m)).powi(2))
            .sum()
    }
}

/// Assignment of every node to a community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<String, usize>,
    pub community_count: usize,
}

impl Partition {
    /// Builds a partition from per-index labels, renumbering communities
    /// 0.. in order of first appearance.
    pub fn from_labels(ids: &[String], labels: &[usize]) -> Self {
        let mut renumber: HashMap<usize, usize> = HashMap::new();
        let mut assignment = BTreeMap::new();
        for (id, &label) in ids.iter().zip(labels) {
            let next = renumber.len();
            let c = *renumber.entry(label).or_insert(next);
            assignment.insert(id.clone(), c);
        }
        Partition {
            assignment,
            community_count: renumber.len(),
        }
    }

    pub fn single(graph: &KnowledgeGraph) -> Self {
        Partition {
            assignment: graph.nodes().map(|n| (n.id.clone(), 0)).collect(),
            community_count: usize::from(graph.node_count() > 0),
        }
    }

    pub fn communities(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.community_count];
        for (id, &c) in &self.assignment {
            out[c].push(id.clone());
        }
        out
    }

    fn labels_for(&self, view: &UndirectedView) -> Result<Vec<usize>, MetricsError> {
        if self.assignment.len() != view.node_count() {
            return Err(MetricsError::PartitionMismatch);
        }
        view.ids()
            .iter()
            .map(|id| self.assignment.get(id).copied().ok_or(MetricsError::PartitionMismatch))
            .collect()
    }
}

pub fn modularity(graph: &KnowledgeGraph, partition: &Partition) -> Result<f64, MetricsError> {
    let view = UndirectedView::from_graph(graph);
    let labels = partition.labels_for(&view)?;
    if view.edge_count() == 0 {
        return Err(MetricsError::NoEdges);
    }
    Ok(view.modularity(&labels))
}

/// A community detection strategy over the undirected view.
pub trait CommunityDetector: Send + Sync {
    fn name(&self) -> &'static str;
    /// One label per node index.
    fn detect(&self, view: &UndirectedView, seed: u64) -> Vec<usize>;
}

/// Greedy agglomerative modularity maximization.
///
/// Starts from singletons and repeatedly applies the merge with the largest
/// positive modularity gain; ties go to the smallest (community, community)
/// id pair. The merged community keeps the smaller id. A refinement pass then
/// moves single nodes between communities while that raises modularity.
/// Fully deterministic; the seed is not consulted.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyModularity {
    pub refine: bool,
}

impl CommunityDetector for GreedyModularity {
    fn name(&self) -> &'static str {
        if self.refine {
            "greedy"
        } else {
            "greedy_merge_only"
        }
    }

    fn detect(&self, view: &UndirectedView, _seed: u64) -> Vec<usize> {
        let mut labels = greedy_merge(view);
        if self.refine {
            refine_moves(view, &mut labels);
        }
        labels
    }
}

fn greedy_merge(view: &UndirectedView) -> Vec<usize> {
    let n = view.node_count();
    let mut labels: Vec<usize> = (0..n).collect();
    let m = view.edge_count() as f64;
    if m == 0.0 {
        return labels;
    }
    // links[a][b]: undirected edges between communities a and b (a != b).
    let mut links: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    for i in 0..n {
        degree.insert(i, view.degree(i) as f64);
        for j in view.neighbors(i) {
            links.entry(i).or_default().insert(j, 1.0);
        }
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (&a, row) in &links {
            for (&b, &l) in row.range(a + 1..) {
                let gain = l / m - degree[&a] * degree[&b] / (2.0 * m * m);
                let better = match best {
                    None => true,
                    Some((g, _, _)) => gain > g + EPS,
                };
                if better {
                    best = Some((gain, a, b));
                }
            }
        }
        let Some((gain, keep, gone)) = best else { break };
        if gain <= EPS {
            break;
        }
        let gone_row = links.remove(&gone).unwrap_or_default();
        for (other, l) in gone_row {
            if let Some(r) = links.get_mut(&other) {
                r.remove(&gone);
            }
            if other == keep {
                continue;
            }
            *links.entry(keep).or_default().entry(other).or_default() += l;
            *links.entry(other).or_default().entry(keep).or_default() += l;
        }
        let d = degree.remove(&gone).unwrap_or(0.0);
        *degree.entry(keep).or_default() += d;
        for label in labels.iter_mut().filter(|l| **l == gone) {
            *label = keep;
        }
    }
    labels
}

/// Moves single nodes to the neighbouring (or a fresh) community with the
/// best modularity gain until no move improves it.
fn refine_moves(view: &UndirectedView, labels: &mut [usize]) {
    let n = view.node_count();
    let m = view.edge_count() as f64;
    if m == 0.0 {
        return;
    }
    let mut community_degree: HashMap<usize, f64> = HashMap::new();
    for (i, &c) in labels.iter().enumerate() {
        *community_degree.entry(c).or_default() += view.degree(i) as f64;
    }
    // Bounded: every accepted move raises Q by more than EPS.
    for _ in 0..n * n + 1 {
        let mut improved = false;
        for i in 0..n {
            let own = labels[i];
            let k = view.degree(i) as f64;
            let mut links_to: BTreeMap<usize, f64> = BTreeMap::new();
            for j in view.neighbors(i) {
                *links_to.entry(labels[j]).or_default() += 1.0;
            }
            let own_links = links_to.get(&own).copied().unwrap_or(0.0);
            let own_rest = community_degree[&own] - k;
            // Gain of moving i from `own` into community c, relative to isolating it.
            let removal = own_links / m - k * own_rest / (2.0 * m * m);
            let mut best: Option<(f64, usize)> = None;
            for (&c, &l) in &links_to {
                if c == own {
                    continue;
                }
                let gain = l / m - k * community_degree[&c] / (2.0 * m * m) - removal;
                if gain > EPS && best.is_none_or(|(g, _)| gain > g + EPS) {
                    best = Some((gain, c));
                }
            }
            if best.is_none() && -removal > EPS && own_rest > 0.0 {
                // Isolating the node is itself an improvement.
                let fresh = (0..).find(|c| !community_degree.contains_key(c)).expect("free label");
                best = Some((-removal, fresh));
            }
            if let Some((_, target)) = best {
                *community_degree.get_mut(&own).expect("own community") -= k;
                if community_degree[&own].abs() < EPS && labels.iter().filter(|&&l| l == own).count() == 1 {
                    community_degree.remove(&own);
                }
                *community_degree.entry(target).or_default() += k;
                labels[i] = target;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Exact modularity maximization by dynamic programming over node subsets,
/// falling back to [`GreedyModularity`] above `max_nodes`. The exact solver
/// is exponential (3^n) and capped at 16 nodes.
#[derive(Debug, Clone, Copy)]
pub struct ExactModularity {
    pub max_nodes: usize,
}

impl Default for ExactModularity {
    fn default() -> Self {
        ExactModularity { max_nodes: 12 }
    }
}

const EXACT_LIMIT: usize = 16;

impl ExactModularity {
    pub fn solve(view: &UndirectedView) -> Vec<usize> {
        let n = view.node_count();
        assert!(n <= EXACT_LIMIT, "exact modularity is limited to {EXACT_LIMIT} nodes");
        let m = view.edge_count() as f64;
        if n == 0 {
            return Vec::new();
        }
        if m == 0.0 {
            return (0..n).collect();
        }
        let full = (1usize << n) - 1;
        let mut masks = vec![0usize; n];
        for (i, mask) in masks.iter_mut().enumerate() {
            *mask = view.neighbors(i).fold(0, |acc, j| acc | (1 << j));
        }
        // Score of a single community.
        let mut score = vec![0.0f64; full + 1];
        for (set, s) in score.iter_mut().enumerate().skip(1) {
            let mut inner = 0usize;
            let mut deg = 0usize;
            for (i, &mask) in masks.iter().enumerate() {
                if set & (1 << i) != 0 {
                    deg += view.degree(i);
                    inner += (mask & set).count_ones() as usize;
                }
            }
            *s = (inner / 2) as f64 / m - (deg as f64 / (2.0 * m)).powi(2);
        }
        let mut best = vec![f64::NEG_INFINITY; full + 1];
        let mut choice = vec![0usize; full + 1];
        best[0] = 0.0;
        for set in 1..=full {
            let low = set & set.wrapping_neg();
            let rest = set ^ low;
            // Enumerate subsets of `rest`, each joined with the lowest node.
            let mut sub = rest;
            loop {
                let part = sub | low;
                let value = score[part] + best[set ^ part];
                if value > best[set] + EPS {
                    best[set] = value;
                    choice[set] = part;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        let mut labels = vec![0usize; n];
        let mut set = full;
        let mut label = 0;
        while set != 0 {
            let part = choice[set];
            for (i, l) in labels.iter_mut().enumerate() {
                if part & (1 << i) != 0 {
                    *l = label;
                }
            }
            label += 1;
            set ^= part;
        }
        labels
    }
}

impl CommunityDetector for ExactModularity {
    fn name(&self) -> &'static str {
        if self.max_nodes >= EXACT_LIMIT {
            "exact"
        } else {
            "auto"
        }
    }

    fn detect(&self, view: &UndirectedView, seed: u64) -> Vec<usize> {
        if view.node_count() <= self.max_nodes.min(EXACT_LIMIT) {
            ExactModularity::solve(view)
        } else {
            GreedyModularity { refine: true }.detect(view, seed)
        }
    }
}

pub type DetectorRegistry = Registry<dyn CommunityDetector, (), MetricsError>;

pub fn detector_registry() -> DetectorRegistry {
    let mut reg = DetectorRegistry::new("community detector");
    reg.register("greedy", |_: &()| {
        Ok(Box::new(GreedyModularity { refine: true }) as Box<dyn CommunityDetector>)
    });
    reg.register("greedy_merge_only", |_: &()| {
        Ok(Box::new(GreedyModularity { refine: false }) as Box<dyn CommunityDetector>)
    });
    reg.register("exact", |_: &()| {
        Ok(Box::new(ExactModularity { max_nodes: EXACT_LIMIT }) as Box<dyn CommunityDetector>)
    });
    reg.register("auto", |_: &()| {
        Ok(Box::new(ExactModularity::default()) as Box<dyn CommunityDetector>)
    });
    reg
}

pub fn create_detector(name: &str) -> Result<Box<dyn CommunityDetector>, MetricsError> {
    detector_registry().create(name, &()).unwrap_or_else(|| {
        Err(MetricsError::Unknown {
            kind: "community detector",
            name: name.to_string(),
        })
    })
}

pub const DEFAULT_DETECTOR: &str = "auto";

/// Detects communities with the default detector: exact up to 12 nodes,
/// greedy agglomeration with refinement above.
pub fn detect_communities(graph: &KnowledgeGraph, seed: u64) -> Result<Partition, MetricsError> {
    detect_communities_with(graph, &ExactModularity::default(), seed)
}

pub fn detect_communities_with(
    graph: &KnowledgeGraph,
    detector: &dyn CommunityDetector,
    seed: u64,
) -> Result<Partition, MetricsError> {
    if graph.node_count() == 0 {
        return Err(MetricsError::EmptyGraph);
    }
    let view = UndirectedView::from_graph(graph);
    let labels = detector.detect(&view, seed);
    Ok(Partition::from_labels(view.ids(), &labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub node_count: usize,
    pub edge_count_before: usize,
    pub edge_count_after: usize,
    pub adc_convention: AdcConvention,
    pub adc_before: f64,
    pub adc_after: f64,
    pub adc_delta: f64,
    pub modularity_before: f64,
    pub modularity_after: f64,
    pub modularity_delta: f64,
    pub communities_before: usize,
    pub communities_after: usize,
    /// SIMILAR_TO edges present after but not before.
    pub added_relations: usize,
    pub edge_histogram_before: BTreeMap<String, usize>,
    pub edge_histogram_after: BTreeMap<String, usize>,
}

pub fn structure_report(
    before: &KnowledgeGraph,
    after: &KnowledgeGraph,
    convention: AdcConvention,
    detector: &dyn CommunityDetector,
    seed: u64,
) -> Result<StructureReport, MetricsError> {
    if before.node_ids() != after.node_ids() {
        return Err(MetricsError::NodeSetMismatch);
    }
    let adc_before = average_degree_centrality(before, convention)?;
    let adc_after = average_degree_centrality(after, convention)?;
    let part_before = detect_communities_with(before, detector, seed)?;
    let part_after = detect_communities_with(after, detector, seed)?;
    let modularity_before = modularity(before, &part_before)?;
    let modularity_after = modularity(after, &part_after)?;
    let similar = |g: &KnowledgeGraph| g.edges().filter(|e| e.edge_type == EdgeType::SimilarTo).count();
    Ok(StructureReport {
        node_count: after.node_count(),
        edge_count_before: before.edge_count(),
        edge_count_after: after.edge_count(),
        adc_convention: convention,
        adc_before,
        adc_after,
        adc_delta: adc_after - adc_before,
        modularity_before,
        modularity_after,
        modularity_delta: modularity_after - modularity_before,
        communities_before: part_before.community_count,
        communities_after: part_after.community_count,
        added_relations: similar(after).saturating_sub(similar(before)),
        edge_histogram_before: edge_histogram(before),
        edge_histogram_after: edge_histogram(after),
    })
}

pub fn edge_histogram(graph: &KnowledgeGraph) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for e in graph.edges() {
        *out.entry(e.edge_type.as_str().to_string()).or_default() += 1;
    }
    out
}

impl StructureReport {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22} {:>10} {:>10} {:>10}", "metric", "before", "after", "delta");
        let _ = writeln!(
            s,
            "{:<22} {:>10.4} {:>10.4} {:>+10.4}",
            format!("ADC ({})", self.adc_convention.as_str()),
            self.adc_before,
            self.adc_after,
            self.adc_delta
        );
        let _ = writeln!(
            s,
            "{:<22} {:>10.4} {:>10.4} {:>+10.4}",
            "modularity", self.modularity_before, self.modularity_after, self.modularity_delta
        );
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>10} {:>+10}",
            "edges",
            self.edge_count_before,
            self.edge_count_after,
            self.edge_count_after as i64 - self.edge_count_before as i64
        );
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>10}",
            "communities", self.communities_before, self.communities_after
        );
        let _ = writeln!(
            s,
            "nodes: {}, added relations: {}",
            self.node_count, self.added_relations
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{NewNode, NodeClass, Properties};

    fn topics(n: usize) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for i in 0..n {
            g.add_node(
                NodeClass::Topic,
                NewNode::titled(format!("t{i}")).with_id(format!("n{i}")),
            )
            .unwrap();
        }
        g
    }

    #[test]
    fn degree_examples() {
        let mut g = KnowledgeGraph::new();
        for (id, class) in [
            ("s", NodeClass::Session),
            ("t", NodeClass::Topic),
            ("u", NodeClass::SubTopic),
        ] {
            g.add_node(class, NewNode::titled(id).with_id(id)).unwrap();
        }
        g.add_node(NodeClass::Topic, NewNode::titled("lonely").with_id("z"))
            .unwrap();
        g.add_edge("s", "t", EdgeType::Covers, Properties::new()).unwrap();
        g.add_edge("t", "u", EdgeType::HasSubtopic, Properties::new()).unwrap();
        assert_eq!(degree_centrality(&g, "t", false).unwrap(), 2.0);
        assert_eq!(degree_centrality(&g, "z", false).unwrap(), 0.0);
        assert!((degree_centrality(&g, "t", true).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            degree_centrality(&g, "nope", false),
            Err(MetricsError::NotFound(_))
        ));
    }

    #[test]
    fn hub_degree_counts_both_directions() {
        let mut g = KnowledgeGraph::new();
        g.add_node(NodeClass::Session, NewNode::titled("s").with_id("s"))
            .unwrap();
        g.add_node(NodeClass::Topic, NewNode::titled("hub").with_id("hub"))
            .unwrap();
        g.add_edge("s", "hub", EdgeType::Covers, Properties::new()).unwrap();
        for i in 0..4 {
            let id = format!("st{i}");
            g.add_node(NodeClass::SubTopic, NewNode::titled(&id).with_id(&id))
                .unwrap();
            g.add_edge("hub", &id, EdgeType::HasSubtopic, Properties::new())
                .unwrap();
        }
        assert_eq!(degree_centrality(&g, "hub", false).unwrap(), 5.0);
    }

    #[test]
    fn adc_conventions() {
        assert!(matches!(
            average_degree_centrality(&KnowledgeGraph::new(), AdcConvention::EdgeRatio),
            Err(MetricsError::EmptyGraph)
        ));
        let view = UndirectedView::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(view.edge_count(), 2);
        let mut g = KnowledgeGraph::new();
        for (id, class) in [
            ("s", NodeClass::Session),
            ("t", NodeClass::Topic),
            ("u", NodeClass::SubTopic),
        ] {
            g.add_node(class, NewNode::titled(id).with_id(id)).unwrap();
        }
        g.add_edge("s", "t", EdgeType::Covers, Properties::new()).unwrap();
        g.add_edge("t", "u", EdgeType::HasSubtopic, Properties::new()).unwrap();
        let total = average_degree_centrality(&g, AdcConvention::MeanTotalDegree).unwrap();
        assert!((total - 4.0 / 3.0).abs() < 1e-12);
        let norm = average_degree_centrality(&g, AdcConvention::Normalized).unwrap();
        assert!((norm - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!("edge_ratio".parse::<AdcConvention>().unwrap(), AdcConvention::EdgeRatio);
        assert!("median".parse::<AdcConvention>().is_err());
    }

    #[test]
    fn modularity_examples() {
        let triangle = UndirectedView::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!((triangle.modularity(&[0, 1, 2]) + 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(triangle.modularity(&[0, 0, 0]), 0.0);
        let two = UndirectedView::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        assert!((two.modularity(&[0, 0, 0, 1, 1, 1]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modularity_errors() {
        let g = topics(2);
        assert!(matches!(
            modularity(&g, &Partition::single(&g)),
            Err(MetricsError::NoEdges)
        ));
        let p = Partition {
            assignment: [("n0".to_string(), 0)].into_iter().collect(),
            community_count: 1,
        };
        assert!(matches!(modularity(&g, &p), Err(MetricsError::PartitionMismatch)));
    }

    #[test]
    fn single_node_single_community() {
        let p = detect_communities(&topics(1), 7).unwrap();
        assert_eq!(p.community_count, 1);
        assert!(matches!(
            detect_communities(&topics(0), 7),
            Err(MetricsError::EmptyGraph)
        ));
    }

    #[test]
    fn complete_graph_stays_whole() {
        let k4 = UndirectedView::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for det in ["greedy", "exact", "auto"] {
            let labels = create_detector(det).unwrap().detect(&k4, 0);
            assert!(labels.iter().all(|&l| l == labels[0]), "{det}");
        }
    }

    #[test]
    fn parallel_edges_collapse() {
        let mut g = topics(2);
        g.add_node(NodeClass::Session, NewNode::titled("s").with_id("s"))
            .unwrap();
        g.add_edge("s", "n0", EdgeType::Covers, Properties::new()).unwrap();
        g.add_edge(
            "n0",
            "n1",
            EdgeType::SimilarTo,
            crate::ontology::similarity_properties(0.9, "embedding", false),
        )
        .unwrap();
        let view = UndirectedView::from_graph(&g);
        assert_eq!(view.edge_count(), 2);
    }

    #[test]
    fn report_for_identical_graphs_has_zero_deltas() {
        let mut g = topics(3);
        g.add_edge(
            "n0",
            "n1",
            EdgeType::SimilarTo,
            crate::ontology::similarity_properties(0.9, "embedding", false),
        )
        .unwrap();
        let det = GreedyModularity { refine: true };
        let r = structure_report(&g, &g, AdcConvention::EdgeRatio, &det, 0).unwrap();
        assert_eq!(r.adc_delta, 0.0);
        assert_eq!(r.modularity_delta, 0.0);
        assert_eq!(r.added_relations, 0);
        assert!(r.render_table().contains("modularity"));
        let other = topics(4);
        assert!(matches!(
            structure_report(&g, &other, AdcConvention::EdgeRatio, &det, 0),
            Err(MetricsError::NodeSetMismatch)
        ));
    }
}
