//! Student-conditioned extraction of compact subgraphs from both views.
//!
//! Seeds are the target student plus their history questions (interaction
//! view) or the target question's concepts (concept view); retrieval takes
//! the union of every seed's bounded-hop neighborhood and keeps the induced
//! edges. A hard node budget, filled nearest-first by hop and then by the
//! strongest discovering edge, bounds downstream fusion cost on hub-heavy
//! graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{KcEdge, KcGraph, QsEdge, SimEdge, SqGraph, SqNode};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("no seed id was found in the graph")]
    AllSeedsUnknown,
    #[error("instance has an empty history")]
    EmptyHistory,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Hop bound in the student-question view.
    pub k: usize,
    /// Hop bound in the concept view.
    pub n: usize,
    /// Maximum retained nodes per subgraph (seeds always survive).
    pub node_budget: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 2, n: 2, node_budget: 512 }
    }
}

/// One next-question prediction task.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionInstance {
    pub student_id: String,
    /// (question, correctness) pairs, oldest first.
    pub history: Vec<(String, bool)>,
    pub target_question: String,
    pub target_kcs: BTreeSet<String>,
}

/// Retrieved slice of the student-question graph. Node indices refer to the
/// parent graph; `nodes` is ordered seeds-first, then by (hop, discovery
/// weight, index).
#[derive(Clone, Debug, PartialEq)]
pub struct SqSubgraph {
    pub seeds: Vec<SqNode>,
    pub nodes: Vec<SqNode>,
    /// Attribute copied from the parent graph (theta or b), parallel to
    /// `nodes`.
    pub attrs: Vec<f64>,
    pub qs: Vec<QsEdge>,
    pub qq: Vec<SimEdge>,
    pub ss: Vec<SimEdge>,
    /// Seed ids that were not present in the graph (skipped, reported).
    pub missing_seeds: Vec<String>,
}

/// Retrieved slice of the concept graph (parent node indices, induced typed
/// edges).
#[derive(Clone, Debug, PartialEq)]
pub struct KcSubgraph {
    pub seeds: Vec<usize>,
    pub nodes: Vec<usize>,
    pub edges: Vec<KcEdge>,
    pub missing_seeds: Vec<String>,
}

/// Bounded multi-source BFS returning retained nodes in deterministic
/// nearest-first order: (hop, strongest discovering edge desc, node).
fn bounded_neighborhood<N: Copy + Ord>(
    adjacency: &BTreeMap<N, Vec<(N, f64)>>,
    seeds: &[N],
    hops: usize,
    budget: usize,
) -> Vec<N> {
    let mut dist: BTreeMap<N, usize> = BTreeMap::new();
    let mut strength: BTreeMap<N, f64> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &s in seeds {
        if dist.insert(s, 0).is_none() {
            strength.insert(s, f64::INFINITY);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == hops {
            continue;
        }
        let Some(neighbors) = adjacency.get(&u) else { continue };
        for &(v, w) in neighbors {
            match dist.get(&v) {
                None => {
                    dist.insert(v, d + 1);
                    strength.insert(v, w);
                    queue.push_back(v);
                }
                Some(&dv) if dv == d + 1 => {
                    // Same frontier: remember the strongest discovering edge.
                    let e = strength.get_mut(&v).expect("strength tracked");
                    if w > *e {
                        *e = w;
                    }
                }
                _ => {}
            }
        }
    }

    let mut ordered: Vec<N> = dist.keys().copied().collect();
    ordered.sort_by(|a, b| {
        dist[a]
            .cmp(&dist[b])
            .then(strength[b].total_cmp(&strength[a]))
            .then(a.cmp(b))
    });
    ordered.truncate(budget.max(seeds.len()));
    ordered
}

/// Neighborhood union around the target student and their history
/// questions; hops traverse response and similarity edges uniformly.
/// Unknown seed ids are skipped and reported; it is an error when none
/// resolve.
pub fn retrieve_sq_subgraph(
    graph: &SqGraph,
    inst: &PredictionInstance,
    cfg: &RetrievalConfig,
) -> Result<SqSubgraph, RetrievalError> {
    let mut seeds: Vec<SqNode> = Vec::new();
    let mut missing = Vec::new();
    match graph.student_index(&inst.student_id) {
        Some(s) => seeds.push(SqNode::Student(s)),
        None => missing.push(inst.student_id.clone()),
    }
    let mut seen_questions = BTreeSet::new();
    for (q, _) in &inst.history {
        if !seen_questions.insert(q.as_str()) {
            continue;
        }
        match graph.question_index(q) {
            Some(qi) => seeds.push(SqNode::Question(qi)),
            None => missing.push(q.clone()),
        }
    }
    if seeds.is_empty() {
        return Err(RetrievalError::AllSeedsUnknown);
    }

    let adjacency = graph.adjacency();
    let nodes = bounded_neighborhood(&adjacency, &seeds, cfg.k, cfg.node_budget);
    let retained: BTreeSet<SqNode> = nodes.iter().copied().collect();

    let qs: Vec<QsEdge> = graph
        .qs_edges()
        .iter()
        .filter(|e| {
            retained.contains(&SqNode::Question(e.question))
                && retained.contains(&SqNode::Student(e.student))
        })
        .copied()
        .collect();
    let qq: Vec<SimEdge> = graph
        .qq_edges()
        .iter()
        .filter(|e| {
            retained.contains(&SqNode::Question(e.a)) && retained.contains(&SqNode::Question(e.b))
        })
        .copied()
        .collect();
    let ss: Vec<SimEdge> = graph
        .ss_edges()
        .iter()
        .filter(|e| {
            retained.contains(&SqNode::Student(e.a)) && retained.contains(&SqNode::Student(e.b))
        })
        .copied()
        .collect();

    let attrs = nodes.iter().map(|&n| graph.attr(n)).collect();
    Ok(SqSubgraph { seeds, nodes, attrs, qs, qq, ss, missing_seeds: missing })
}

/// Neighborhood union around the target question's concepts; hops ignore
/// edge direction (prerequisites of the target matter as much as its
/// successors).
pub fn retrieve_kc_subgraph(
    graph: &KcGraph,
    target_kcs: &BTreeSet<String>,
    cfg: &RetrievalConfig,
) -> Result<KcSubgraph, RetrievalError> {
    let mut seeds = Vec::new();
    let mut missing = Vec::new();
    for kc in target_kcs {
        match graph.kc_index(kc) {
            Some(i) => seeds.push(i),
            None => missing.push(kc.clone()),
        }
    }
    if seeds.is_empty() {
        return Err(RetrievalError::AllSeedsUnknown);
    }

    let adjacency: BTreeMap<usize, Vec<(usize, f64)>> =
        graph.undirected_adjacency().into_iter().enumerate().collect();
    let nodes = bounded_neighborhood(&adjacency, &seeds, cfg.n, cfg.node_budget);
    let retained: BTreeSet<usize> = nodes.iter().copied().collect();

    let edges: Vec<KcEdge> = graph
        .edges()
        .iter()
        .filter(|e| retained.contains(&e.src) && retained.contains(&e.dst))
        .cloned()
        .collect();

    Ok(KcSubgraph { seeds, nodes, edges, missing_seeds: missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConceptProfile, RelationType};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star_graph() -> SqGraph {
        // One student answering five questions: the student is the hub.
        let students = vec!["s0".to_string()];
        let questions: Vec<String> = (0..5).map(|i| format!("q{i}")).collect();
        let qs = (0..5).map(|q| QsEdge { question: q, student: 0, correct: true }).collect();
        SqGraph::new(students, vec![0.0], questions, vec![0.0; 5], qs, vec![], vec![]).unwrap()
    }

    fn instance(student: &str, history: &[&str], target: &str) -> PredictionInstance {
        PredictionInstance {
            student_id: student.to_string(),
            history: history.iter().map(|q| (q.to_string(), true)).collect(),
            target_question: target.to_string(),
            target_kcs: BTreeSet::new(),
        }
    }

    #[test]
    fn zero_hops_returns_exactly_the_seeds() {
        let g = star_graph();
        let inst = instance("s0", &["q0"], "q1");
        let cfg = RetrievalConfig { k: 0, ..Default::default() };
        let sub = retrieve_sq_subgraph(&g, &inst, &cfg).unwrap();
        assert_eq!(sub.nodes, vec![SqNode::Student(0), SqNode::Question(0)]);
        // The induced edge between the two seeds survives.
        assert_eq!(sub.qs.len(), 1);
    }

    #[test]
    fn one_hop_from_hub_covers_all_leaves() {
        let g = star_graph();
        let inst = instance("s0", &[], "q1");
        let cfg = RetrievalConfig { k: 1, ..Default::default() };
        let sub = retrieve_sq_subgraph(&g, &inst, &cfg).unwrap();
        assert_eq!(sub.nodes.len(), 6);
        assert_eq!(sub.qs.len(), 5);
    }

    #[test]
    fn unknown_seeds_are_skipped_and_reported() {
        let g = star_graph();
        let inst = instance("ghost", &["q0"], "q1");
        let sub = retrieve_sq_subgraph(&g, &inst, &RetrievalConfig::default()).unwrap();
        assert_eq!(sub.missing_seeds, vec!["ghost".to_string()]);
        assert!(sub.seeds.contains(&SqNode::Question(0)));
    }

    #[test]
    fn all_unknown_is_an_error() {
        let g = star_graph();
        let inst = instance("ghost", &["zz"], "q1");
        assert!(matches!(
            retrieve_sq_subgraph(&g, &inst, &RetrievalConfig::default()),
            Err(RetrievalError::AllSeedsUnknown)
        ));
    }

    fn random_sq_graph(rng: &mut ChaCha8Rng) -> SqGraph {
        let n_s = rng.random_range(5..15);
        let n_q = rng.random_range(10..35);
        let students: Vec<String> = (0..n_s).map(|i| format!("s{i:02}")).collect();
        let questions: Vec<String> = (0..n_q).map(|i| format!("q{i:02}")).collect();
        let mut qs = Vec::new();
        for s in 0..n_s {
            for _ in 0..rng.random_range(1..5) {
                qs.push(QsEdge { question: rng.random_range(0..n_q), student: s, correct: rng.random() });
            }
        }
        let mut sim = |n: usize, count: usize| -> Vec<SimEdge> {
            let mut set = BTreeSet::new();
            for _ in 0..count {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    set.insert((a.min(b), a.max(b)));
                }
            }
            set.into_iter()
                .map(|(a, b)| SimEdge { a, b, weight: 0.1 + 0.9 * ((a * 7 + b) % 10) as f64 / 10.0 })
                .collect()
        };
        let qq = sim(n_q, n_q * 2);
        let ss = sim(n_s, n_s);
        SqGraph::new(students, vec![0.0; n_s], questions, vec![0.0; n_q], qs, qq, ss).unwrap()
    }

    /// Independent oracle: one BFS per seed to depth k, union the node
    /// sets, then filter parent edges to retained endpoints.
    fn bfs_union_oracle(g: &SqGraph, seeds: &[SqNode], k: usize) -> BTreeSet<SqNode> {
        let adj = g.adjacency();
        let mut union = BTreeSet::new();
        for &seed in seeds {
            let mut frontier = vec![seed];
            let mut seen: BTreeSet<SqNode> = frontier.iter().copied().collect();
            for _ in 0..k {
                let mut next = Vec::new();
                for u in frontier {
                    for &(v, _) in &adj[&u] {
                        if seen.insert(v) {
                            next.push(v);
                        }
                    }
                }
                frontier = next;
            }
            union.extend(seen);
        }
        union
    }

    #[test]
    fn matches_bfs_union_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..30 {
            let g = random_sq_graph(&mut rng);
            let s = rng.random_range(0..g.student_count());
            let hist_q = rng.random_range(0..g.question_count());
            let inst = instance(&g.students()[s].clone(), &[&g.questions()[hist_q].clone()], "x");
            let k = rng.random_range(0..4);
            let cfg = RetrievalConfig { k, node_budget: 10_000, ..Default::default() };
            let sub = retrieve_sq_subgraph(&g, &inst, &cfg).unwrap();

            let expected = bfs_union_oracle(&g, &sub.seeds, k);
            let got: BTreeSet<SqNode> = sub.nodes.iter().copied().collect();
            assert_eq!(got, expected);

            // Induced-subgraph oracle: exactly the parent edges with both
            // endpoints retained.
            let expect_qs: Vec<QsEdge> = g
                .qs_edges()
                .iter()
                .filter(|e| {
                    expected.contains(&SqNode::Question(e.question))
                        && expected.contains(&SqNode::Student(e.student))
                })
                .copied()
                .collect();
            assert_eq!(sub.qs, expect_qs);
        }
    }

    #[test]
    fn hop_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let g = random_sq_graph(&mut rng);
            let s = rng.random_range(0..g.student_count());
            let inst = instance(&g.students()[s].clone(), &[], "x");
            let cfg = |k| RetrievalConfig { k, node_budget: 10_000, ..Default::default() };
            let mut prev: BTreeSet<SqNode> = BTreeSet::new();
            for k in 0..4 {
                let sub = retrieve_sq_subgraph(&g, &inst, &cfg(k)).unwrap();
                let now: BTreeSet<SqNode> = sub.nodes.iter().copied().collect();
                assert!(prev.is_subset(&now), "nodes(k) must grow with k");
                prev = now;
            }
        }
    }

    #[test]
    fn budget_keeps_nearest_first_and_is_prefix_stable() {
        let g = star_graph();
        let inst = instance("s0", &[], "q0");
        let unbounded =
            retrieve_sq_subgraph(&g, &inst, &RetrievalConfig { k: 1, node_budget: 100, n: 2 })
                .unwrap();
        let capped =
            retrieve_sq_subgraph(&g, &inst, &RetrievalConfig { k: 1, node_budget: 3, n: 2 })
                .unwrap();
        assert_eq!(capped.nodes.len(), 3);
        assert_eq!(capped.nodes[..], unbounded.nodes[..3]);
    }

    fn chain_kc_graph() -> KcGraph {
        let profiles: Vec<ConceptProfile> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|id| ConceptProfile {
                kc_id: id.to_string(),
                name: id.to_string(),
                definition: String::new(),
                category: String::new(),
            })
            .collect();
        // a -> b -> c -> d directed chain; e isolated.
        let edge = |src, dst| KcEdge {
            src,
            dst,
            relation: RelationType::PredecessorSuccessor,
            confidence: 0.9,
            evidence: String::new(),
        };
        KcGraph::from_parts(profiles, vec![edge(0, 1), edge(1, 2), edge(2, 3)])
    }

    fn kc_targets(kcs: &[&str]) -> BTreeSet<String> {
        kcs.iter().map(|k| k.to_string()).collect()
    }

    #[test]
    fn zero_hops_keeps_target_concepts_only() {
        let g = chain_kc_graph();
        let cfg = RetrievalConfig { n: 0, ..Default::default() };
        let sub = retrieve_kc_subgraph(&g, &kc_targets(&["b"]), &cfg).unwrap();
        assert_eq!(sub.nodes, vec![1]);
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn chain_hops_ignore_direction() {
        let g = chain_kc_graph();
        let cfg = RetrievalConfig { n: 1, ..Default::default() };
        let sub = retrieve_kc_subgraph(&g, &kc_targets(&["b"]), &cfg).unwrap();
        // Seed b reaches its predecessor a and successor c.
        assert_eq!(sub.nodes, vec![1, 0, 2]);
        assert_eq!(sub.edges.len(), 2);
    }

    #[test]
    fn disconnected_concept_is_a_singleton() {
        let g = chain_kc_graph();
        let sub =
            retrieve_kc_subgraph(&g, &kc_targets(&["e"]), &RetrievalConfig::default()).unwrap();
        assert_eq!(sub.nodes, vec![4]);
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn repeated_retrieval_is_identical() {
        let g = chain_kc_graph();
        let cfg = RetrievalConfig::default();
        let a = retrieve_kc_subgraph(&g, &kc_targets(&["b", "d"]), &cfg).unwrap();
        let b = retrieve_kc_subgraph(&g, &kc_targets(&["b", "d"]), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
