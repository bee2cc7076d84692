//! Independent reference computations used by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Modularity computed straight from the definition over an edge list.
pub fn modularity_from_definition(n: usize, edges: &[(usize, usize)], labels: &[usize]) -> f64 {
    let m = edges.len() as f64;
    let mut deg = vec![0usize; n];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    let k = labels.iter().max().map_or(0, |x| x + 1);
    let mut q = 0.0;
    for c in 0..k {
        let intra = edges.iter().filter(|&&(a, b)| labels[a] == c && labels[b] == c).count() as f64;
        let d: usize = (0..n).filter(|&i| labels[i] == c).map(|i| deg[i]).sum();
        q += intra / m - (d as f64 / (2.0 * m)).powi(2);
    }
    q
}

/// Every set partition of `n` items as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            if i == 0 && c > 0 {
                break;
            }
            cur.push(c);
            rec(i + 1, n, cur, if i == 0 { 0 } else { max.max(c) }, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![Vec::new()];
    }
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// Maximum modularity over all partitions, by enumeration.
pub fn brute_force_max_modularity(n: usize, edges: &[(usize, usize)]) -> (f64, Vec<usize>) {
    all_partitions(n)
        .into_iter()
        .map(|p| (modularity_from_definition(n, edges, &p), p))
        .fold((f64::NEG_INFINITY, Vec::new()), |best, cur| {
            if cur.0 > best.0 + 1e-12 {
                cur
            } else {
                best
            }
        })
}

/// Random simple undirected graph with at least one edge.
pub fn random_graph(seed: u64, max_nodes: usize) -> (usize, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(2..=max_nodes);
        let p: f64 = rng.random_range(0.15..0.7);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        if !edges.is_empty() {
            return (n, edges);
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Legal (edge type, source class, target class) triples, written out by hand.
pub const SIGNATURES: &[(&str, &str, &str)] = &[
    ("CONTAINS", "StudyModule", "Lecture"),
    ("INSTANCE_OF", "Session", "Lecture"),
    ("COVERS", "Session", "Topic"),
    ("HAS_SUBTOPIC", "Topic", "SubTopic"),
    ("HAS_SUBDOMAIN", "Domain", "SubDomain"),
    ("BELONGS_TO_DOMAIN", "Topic", "Domain"),
    ("BELONGS_TO_DOMAIN", "Topic", "SubDomain"),
    ("BELONGS_TO_DOMAIN", "SubTopic", "Domain"),
    ("BELONGS_TO_DOMAIN", "SubTopic", "SubDomain"),
    ("ENROLLED_IN", "Student", "StudyModule"),
    ("HAS_BACKGROUND", "Student", "BackgroundKnowledge"),
    ("HAS_GOAL", "Student", "LearningGoal"),
    ("HAS_PREFERENCE", "Student", "Preference"),
    ("HAS_ACADEMIC_PARAMS", "Student", "AcademicParameters"),
    ("SIMILAR_TO", "Topic", "Topic"),
    ("SIMILAR_TO", "SubTopic", "SubTopic"),
];

pub fn is_legal(edge_type: &str, source: &str, target: &str) -> bool {
    SIGNATURES.contains(&(edge_type, source, target))
}

/// Bag-of-words bucket counts: lowercase alphanumeric runs, 64-bit FNV-1a
/// modulo `dim`. Left unnormalized; cosine is scale-free.
pub fn bucket_counts(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let mut word = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            let mut h: u64 = 14695981039346656037;
            for b in word.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(1099511628211);
            }
            v[(h % dim as u64) as usize] += 1.0;
            word.clear();
        }
    }
    v
}

/// Whitespace normalization by paragraphs: words of a line joined by one
/// space, lines by one newline, paragraphs by one blank line.
pub fn normalized_reference(raw: &str) -> String {
    let text = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut paragraphs: Vec<Vec<String>> = vec![Vec::new()];
    for line in text.split('\n') {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            if !paragraphs.last().unwrap().is_empty() {
                paragraphs.push(Vec::new());
            }
        } else {
            paragraphs.last_mut().unwrap().push(words.join(" "));
        }
    }
    paragraphs
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| p.join("\n"))
        .collect::<Vec<_>>()
        .join("\n\n")
}
