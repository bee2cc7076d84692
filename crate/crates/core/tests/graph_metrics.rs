mod common;

use common::oracle::*;
use currikg::metrics::*;
use currikg::ontology::*;
use proptest::prelude::*;

fn normalize(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|x| {
            let k = map.len();
            *map.entry(*x).or_insert(k)
        })
        .collect()
}

/// Graph of `n` Topic nodes joined by SIMILAR_TO edges, which any Topic pair admits.
fn topic_graph(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for i in 0..n {
        g.add_node(
            NodeClass::Topic,
            NewNode::titled(format!("t{i}")).with_id(format!("t{i}")),
        )
        .unwrap();
    }
    for &(a, b) in edges {
        g.add_edge(
            &format!("t{a}"),
            &format!("t{b}"),
            EdgeType::SimilarTo,
            similarity_properties(1.0, "test", true),
        )
        .unwrap();
    }
    g
}

fn labels_of(g: &KnowledgeGraph, p: &Partition) -> Vec<usize> {
    let n = g.node_count();
    let mut labels = vec![0; n];
    for (c, members) in p.communities().iter().enumerate() {
        for id in members {
            let i: usize = id[1..].parse().unwrap();
            labels[i] = c;
        }
    }
    labels
}

const TRIANGLES: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];

#[test]
fn two_triangles() {
    assert_eq!(all_partitions(6).len(), 203);
    let g = topic_graph(6, &TRIANGLES);
    let labels = [0, 0, 0, 1, 1, 1];
    let ids: Vec<String> = (0..6).map(|i| format!("t{i}")).collect();
    let q = modularity(&g, &Partition::from_labels(&ids, &labels)).unwrap();
    assert!((q - 0.5).abs() < 1e-9);
    assert!((modularity_from_definition(6, &TRIANGLES, &labels) - 0.5).abs() < 1e-12);

    let (best, _) = brute_force_max_modularity(6, &TRIANGLES);
    let found = detect_communities(&g, 0).unwrap();
    assert_eq!(found.communities().len(), 2);
    let q_found = modularity_from_definition(6, &TRIANGLES, &normalize(&labels_of(&g, &found)));
    assert!((q_found - best).abs() < 1e-9);
}

#[test]
fn k4_stays_one_community() {
    let edges: Vec<(usize, usize)> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
    let (best, _) = brute_force_max_modularity(4, &edges);
    let g = topic_graph(4, &edges);
    let p = detect_communities(&g, 0).unwrap();
    assert_eq!(p.communities().len(), 1);
    assert!(best.abs() < 1e-12);
}

#[test]
fn triangle_of_singletons() {
    let edges = [(0, 1), (1, 2), (0, 2)];
    let g = topic_graph(3, &edges);
    let ids: Vec<String> = (0..3).map(|i| format!("t{i}")).collect();
    let q = modularity(&g, &Partition::from_labels(&ids, &[0, 1, 2])).unwrap();
    assert!((q + 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn default_detector_is_optimal_on_small_random_graphs() {
    for seed in 0..80 {
        let (n, edges) = random_graph(seed, 8);
        let (best, _) = brute_force_max_modularity(n, &edges);
        let g = topic_graph(n, &edges);
        let p = detect_communities(&g, seed).unwrap();
        let q = modularity_from_definition(n, &edges, &normalize(&labels_of(&g, &p)));
        assert!((q - best).abs() < 1e-9, "seed {seed}: {q} vs {best}");
    }
}

#[test]
fn detection_is_deterministic() {
    let (n, edges) = random_graph(7, 40);
    let g = topic_graph(n, &edges);
    let a = detect_communities(&g, 3).unwrap();
    let b = detect_communities(&g, 3).unwrap();
    assert_eq!(a, b);
}

fn tree(extra: usize) -> KnowledgeGraph {
    let path = common::fixtures().join("metrics/tree.json");
    let mut g = KnowledgeGraph::import(&std::fs::read(path).unwrap()).unwrap();
    let links = [("t1", "t2"), ("u1", "u3"), ("u2", "u3")];
    for &(a, b) in &links[..extra] {
        g.add_edge(a, b, EdgeType::SimilarTo, similarity_properties(0.9, "embedding", true))
            .unwrap();
    }
    g
}

#[test]
fn tree_fixtures() {
    let t = tree(0);
    assert_eq!((t.node_count(), t.edge_count()), (10, 9));
    assert!(t.validate().is_empty());
    assert_eq!(average_degree_centrality(&t, AdcConvention::EdgeRatio).unwrap(), 0.9);
    let plus =
        KnowledgeGraph::import(&std::fs::read(common::fixtures().join("metrics/tree_plus_one.json")).unwrap()).unwrap();
    assert_eq!(plus, tree(1));
    assert_eq!(average_degree_centrality(&plus, AdcConvention::EdgeRatio).unwrap(), 1.0);

    let det = create_detector(DEFAULT_DETECTOR).unwrap();
    let report = structure_report(&t, &tree(2), AdcConvention::EdgeRatio, det.as_ref(), 0).unwrap();
    assert!((report.adc_after - 1.1).abs() < 1e-12);
    assert!((report.adc_delta - 0.2).abs() < 1e-12);
    assert_eq!(report.added_relations, 2);
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..9).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        (Just(n), prop::sample::subsequence(pairs.clone(), 1..=pairs.len()))
    })
}

proptest! {
    #[test]
    fn modularity_matches_definition_and_bounds(
        (n, edges) in arb_graph(),
        raw_labels in prop::collection::vec(0usize..4, 8),
    ) {
        let labels = normalize(&raw_labels[..n]);
        let g = topic_graph(n, &edges);
        let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let q = modularity(&g, &Partition::from_labels(&ids, &labels)).unwrap();
        prop_assert!((q - modularity_from_definition(n, &edges, &labels)).abs() < 1e-12);
        prop_assert!((-0.5..=1.0).contains(&q));
        prop_assert_eq!(modularity(&g, &Partition::single(&g)).unwrap(), 0.0);
    }

    #[test]
    fn modularity_ignores_direction(
        (n, edges) in arb_graph(),
        flip in prop::collection::vec(any::<bool>(), 28),
        raw_labels in prop::collection::vec(0usize..4, 8),
    ) {
        let reversed: Vec<(usize, usize)> = edges
            .iter()
            .zip(&flip)
            .map(|(&(a, b), &f)| if f { (b, a) } else { (a, b) })
            .collect();
        let labels = normalize(&raw_labels[..n]);
        let a = UndirectedView::from_edges(n, &edges);
        let b = UndirectedView::from_edges(n, &reversed);
        prop_assert_eq!(a.modularity(&labels), b.modularity(&labels));
        let det = create_detector(DEFAULT_DETECTOR).unwrap();
        prop_assert_eq!(det.detect(&a, 0), det.detect(&b, 0));
    }

    #[test]
    fn adc_grows_by_k_over_n(k in 0usize..4) {
        let before = tree(0);
        let after = tree(k);
        let a = average_degree_centrality(&before, AdcConvention::EdgeRatio).unwrap();
        let b = average_degree_centrality(&after, AdcConvention::EdgeRatio).unwrap();
        prop_assert!((b - a - k as f64 / 10.0).abs() < 1e-12);
    }
}
