//! Materialization of the two graph views and their structural axioms.
//!
//! The student-question graph attaches fitted abilities/difficulties as
//! node attributes, keeps one response edge per interaction, and links each
//! node class internally through top-k nearest-neighbor similarity edges
//! with weights exp(-|x - y| / sigma). The concept graph is assembled from
//! adjudicated relation decisions under the type axioms: one relation per
//! pair, symmetric storage for undirected types, and acyclic
//! predecessor-successor / containment edge sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irt::IrtParams;
use crate::model::{
    ConceptProfile, InteractionLog, Interner, KcEdge, KcGraph, ModelError, QsEdge, RelationType,
    SimEdge, SqGraph,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no fitted parameter for {0:?}")]
    MissingParameter(String),
    #[error("decision references unknown concept {0:?}")]
    UnknownKc(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Similarity sparsification settings. Sigmas default to the standard
/// deviation of the respective attribute when unset.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GraphBuildConfig {
    pub sigma_q: Option<f64>,
    pub sigma_s: Option<f64>,
    pub topk_q: usize,
    pub topk_s: usize,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig { sigma_q: None, sigma_s: None, topk_q: 20, topk_s: 20 }
    }
}

/// exp(-|x - y| / sigma), in (0, 1]. Requires sigma > 0.
pub fn similarity_weight(x: f64, y: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "similarity_weight: sigma must be positive, got {sigma}");
    (-(x - y).abs() / sigma).exp()
}

fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Union of each node's directed top-k nearest neighbors by |attr - attr'|,
/// symmetrized into canonical (a < b) edges. Distance ties break toward the
/// smaller index.
fn topk_similarity_edges(attrs: &[f64], k: usize, sigma: f64) -> Vec<SimEdge> {
    let n = attrs.len();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((attrs[i] - attrs[j]).abs(), j))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in candidates.iter().take(k) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    pairs
        .into_iter()
        .map(|(a, b)| SimEdge { a, b, weight: similarity_weight(attrs[a], attrs[b], sigma) })
        .collect()
}

/// Build the student-question graph from a (train-split) log and fitted
/// parameters. Deterministic: reruns produce identical edge sets and
/// bit-identical weights.
pub fn build_sq_graph(
    log: &InteractionLog,
    params: &IrtParams,
    cfg: &GraphBuildConfig,
) -> Result<SqGraph, GraphError> {
    let students = Interner::from_sorted_set(log.student_ids());
    let questions = Interner::from_sorted_set(log.question_ids());

    let theta: Vec<f64> = students
        .names()
        .iter()
        .map(|s| params.theta_of(s).ok_or_else(|| GraphError::MissingParameter(s.clone())))
        .collect::<Result<_, _>>()?;
    let b: Vec<f64> = questions
        .names()
        .iter()
        .map(|q| params.b_of(q).ok_or_else(|| GraphError::MissingParameter(q.clone())))
        .collect::<Result<_, _>>()?;

    let qs: Vec<QsEdge> = log
        .records()
        .iter()
        .map(|rec| QsEdge {
            question: questions.index(&rec.question_id).expect("interned"),
            student: students.index(&rec.student_id).expect("interned"),
            correct: rec.correct,
        })
        .collect();

    let sigma_q = cfg.sigma_q.unwrap_or_else(|| {
        let s = population_std(&b);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    let sigma_s = cfg.sigma_s.unwrap_or_else(|| {
        let s = population_std(&theta);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    assert!(sigma_q > 0.0 && sigma_s > 0.0, "sigmas must be positive");

    let qq = topk_similarity_edges(&b, cfg.topk_q.max(1), sigma_q);
    let ss = topk_similarity_edges(&theta, cfg.topk_s.max(1), sigma_s);

    Ok(SqGraph::new(
        students.into_names(),
        theta,
        questions.into_names(),
        b,
        qs,
        qq,
        ss,
    )?)
}

/// One adjudicated relation ready for graph assembly. `src -> dst` is
/// meaningful for directed types; undirected types may come in either
/// orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecision {
    pub src: String,
    pub dst: String,
    pub relation: RelationType,
    pub confidence: f64,
    pub evidence: String,
}

/// Assembled concept graph plus notes about repairs (dropped duplicates,
/// broken cycles).
#[derive(Debug)]
pub struct KcGraphBuild {
    pub graph: KcGraph,
    pub notes: Vec<String>,
}

/// Assemble a concept graph from decisions. Conflicting duplicates resolve
/// to the highest confidence (exact ties drop the pair); `None` relations
/// never produce edges; cycles among directed relations are broken by
/// removing the lowest-confidence edge on each cycle until none remain.
pub fn build_kc_graph(
    profiles: &BTreeMap<String, ConceptProfile>,
    decisions: &[EdgeDecision],
) -> Result<KcGraphBuild, GraphError> {
    let profile_vec: Vec<ConceptProfile> = profiles.values().cloned().collect();
    let index: BTreeMap<&str, usize> =
        profile_vec.iter().enumerate().map(|(i, p)| (p.kc_id.as_str(), i)).collect();
    let mut notes = Vec::new();

    // Resolve one decision per unordered pair.
    let mut per_pair: BTreeMap<(usize, usize), Vec<&EdgeDecision>> = BTreeMap::new();
    for d in decisions {
        let s = *index.get(d.src.as_str()).ok_or_else(|| GraphError::UnknownKc(d.src.clone()))?;
        let t = *index.get(d.dst.as_str()).ok_or_else(|| GraphError::UnknownKc(d.dst.clone()))?;
        if s == t {
            notes.push(format!("dropped self-relation on {}", d.src));
            continue;
        }
        per_pair.entry((s.min(t), s.max(t))).or_default().push(d);
    }

    struct Resolved {
        src: usize,
        dst: usize,
        relation: RelationType,
        confidence: f64,
        evidence: String,
    }
    let mut resolved: Vec<Resolved> = Vec::new();
    for ((a, b), mut ds) in per_pair {
        ds.sort_by(|x, y| y.confidence.total_cmp(&x.confidence));
        let best = ds[0];
        // Undirected duplicates in either orientation agree; directed ones
        // must match src -> dst exactly.
        let disagrees = |d: &EdgeDecision| {
            d.relation != best.relation || (best.relation.is_directed() && d.src != best.src)
        };
        let tied_conflict =
            ds.iter().skip(1).any(|d| d.confidence == best.confidence && disagrees(d));
        if tied_conflict {
            notes.push(format!(
                "conflicting decisions at equal confidence for ({}, {}); pair dropped",
                profile_vec[a].kc_id, profile_vec[b].kc_id
            ));
            continue;
        }
        if best.relation == RelationType::None {
            continue;
        }
        resolved.push(Resolved {
            src: index[best.src.as_str()],
            dst: index[best.dst.as_str()],
            relation: best.relation,
            confidence: best.confidence,
            evidence: best.evidence.clone(),
        });
    }

    // Break cycles per directed relation type, dropping the weakest edge on
    // each cycle found.
    for relation in [RelationType::PredecessorSuccessor, RelationType::Containment] {
        loop {
            let directed: Vec<(usize, &Resolved)> = resolved
                .iter()
                .enumerate()
                .filter(|(_, r)| r.relation == relation)
                .map(|(i, r)| (i, r))
                .collect();
            let edges: Vec<(usize, usize)> = directed.iter().map(|(_, r)| (r.src, r.dst)).collect();
            let Some(cycle) = find_directed_cycle(profile_vec.len(), &edges) else { break };
            // Lowest confidence on the cycle; ties toward the smaller pair.
            let victim = cycle
                .iter()
                .map(|&ei| directed[ei].0)
                .min_by(|&x, &y| {
                    resolved[x]
                        .confidence
                        .total_cmp(&resolved[y].confidence)
                        .then((resolved[x].src, resolved[x].dst).cmp(&(resolved[y].src, resolved[y].dst)))
                })
                .expect("cycle has edges");
            let r = &resolved[victim];
            notes.push(format!(
                "{relation} cycle broken by dropping {} -> {} (confidence {})",
                profile_vec[r.src].kc_id, profile_vec[r.dst].kc_id, r.confidence
            ));
            resolved.remove(victim);
        }
    }

    // Materialize: undirected types as mirror pairs.
    let mut edges: Vec<KcEdge> = Vec::new();
    for r in &resolved {
        edges.push(KcEdge {
            src: r.src,
            dst: r.dst,
            relation: r.relation,
            confidence: r.confidence,
            evidence: r.evidence.clone(),
        });
        if !r.relation.is_directed() {
            edges.push(KcEdge {
                src: r.dst,
                dst: r.src,
                relation: r.relation,
                confidence: r.confidence,
                evidence: r.evidence.clone(),
            });
        }
    }
    edges.sort_by(|a, b| (a.src, a.dst, a.relation).cmp(&(b.src, b.dst, b.relation)));

    Ok(KcGraphBuild { graph: KcGraph::from_parts(profile_vec, edges), notes })
}

/// DFS cycle search over one directed edge set. Returns the indices (into
/// `edges`) of the edges forming the first cycle found, in deterministic
/// order.
fn find_directed_cycle(n_nodes: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes]; // (dst, edge idx)
    for (i, &(s, t)) in edges.iter().enumerate() {
        adj[s].push((t, i));
    }
    for list in &mut adj {
        list.sort();
    }

    // 0 = white, 1 = on stack, 2 = done
    let mut color = vec![0u8; n_nodes];
    let mut parent_edge: Vec<Option<(usize, usize)>> = vec![None; n_nodes]; // (parent node, edge idx)

    fn dfs(
        u: usize,
        adj: &[Vec<(usize, usize)>],
        color: &mut [u8],
        parent_edge: &mut [Option<(usize, usize)>],
    ) -> Option<(usize, usize, usize)> {
        color[u] = 1;
        for &(v, ei) in &adj[u] {
            if color[v] == 0 {
                parent_edge[v] = Some((u, ei));
                if let Some(found) = dfs(v, adj, color, parent_edge) {
                    return Some(found);
                }
            } else if color[v] == 1 {
                return Some((u, v, ei)); // back edge u -> v closes a cycle
            }
        }
        color[u] = 2;
        None
    }

    for start in 0..n_nodes {
        if color[start] != 0 {
            continue;
        }
        if let Some((u, v, closing)) = dfs(start, &adj, &mut color, &mut parent_edge) {
            // Walk back from u to v collecting the path edges.
            let mut cycle = vec![closing];
            let mut cur = u;
            while cur != v {
                let (p, ei) = parent_edge[cur].expect("path back to cycle head");
                cycle.push(ei);
                cur = p;
            }
            cycle.reverse();
            return Some(cycle);
        }
    }
    None
}

/// A violated concept-graph axiom.
#[derive(Clone, Debug, PartialEq)]
pub enum KcAxiomViolation {
    DirectedCycle { relation: RelationType, cycle: Vec<String> },
    AsymmetricUndirected { relation: RelationType, src: String, dst: String },
    MultipleTypes { a: String, b: String, types: Vec<RelationType> },
}

impl fmt::Display for KcAxiomViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KcAxiomViolation::DirectedCycle { relation, cycle } => {
                write!(f, "{relation} cycle through {}", cycle.join(" -> "))
            }
            KcAxiomViolation::AsymmetricUndirected { relation, src, dst } => {
                write!(f, "undirected {relation} edge {src} -> {dst} missing its mirror")
            }
            KcAxiomViolation::MultipleTypes { a, b, types } => {
                let names: Vec<&str> = types.iter().map(|t| t.as_str()).collect();
                write!(f, "pair ({a}, {b}) carries multiple relations: {}", names.join(", "))
            }
        }
    }
}

/// Check every structural axiom of a concept graph. Empty means valid.
pub fn validate_kc_axioms(graph: &KcGraph) -> Vec<KcAxiomViolation> {
    let mut violations = Vec::new();

    // One relation type per unordered pair.
    let mut pair_types: BTreeMap<(usize, usize), BTreeSet<RelationType>> = BTreeMap::new();
    for e in graph.edges() {
        pair_types.entry((e.src.min(e.dst), e.src.max(e.dst))).or_default().insert(e.relation);
    }
    for ((a, b), types) in &pair_types {
        if types.len() > 1 {
            violations.push(KcAxiomViolation::MultipleTypes {
                a: graph.kc_id(*a).to_string(),
                b: graph.kc_id(*b).to_string(),
                types: types.iter().copied().collect(),
            });
        }
    }

    // Undirected types must be stored symmetrically.
    let edge_set: BTreeSet<(usize, usize, RelationType)> =
        graph.edges().iter().map(|e| (e.src, e.dst, e.relation)).collect();
    for e in graph.edges() {
        if !e.relation.is_directed() && !edge_set.contains(&(e.dst, e.src, e.relation)) {
            violations.push(KcAxiomViolation::AsymmetricUndirected {
                relation: e.relation,
                src: graph.kc_id(e.src).to_string(),
                dst: graph.kc_id(e.dst).to_string(),
            });
        }
    }

    // Directed relation subsets must be acyclic.
    for relation in [RelationType::PredecessorSuccessor, RelationType::Containment] {
        let edges: Vec<(usize, usize)> = graph
            .edges()
            .iter()
            .filter(|e| e.relation == relation)
            .map(|e| (e.src, e.dst))
            .collect();
        if let Some(cycle_edges) = find_directed_cycle(graph.node_count(), &edges) {
            let mut names: Vec<String> =
                cycle_edges.iter().map(|&i| graph.kc_id(edges[i].0).to_string()).collect();
            if let Some(&first) = cycle_edges.first() {
                names.push(graph.kc_id(edges[first].0).to_string());
            }
            violations.push(KcAxiomViolation::DirectedCycle { relation, cycle: names });
        }
    }

    violations
}

// ---------------------------------------------------------------------------
// Serialization to line-delimited records
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SqGraphRecord {
    StudentNode { id: String, theta: f64 },
    QuestionNode { id: String, b: f64 },
    QsEdge { q: String, s: String, r: u8 },
    QqEdge { a: String, b: String, w: f64 },
    SsEdge { a: String, b: String, w: f64 },
}

pub fn sq_graph_to_records(g: &SqGraph) -> Vec<SqGraphRecord> {
    let mut out = Vec::new();
    for (i, id) in g.students().iter().enumerate() {
        out.push(SqGraphRecord::StudentNode { id: id.clone(), theta: g.theta(i) });
    }
    for (i, id) in g.questions().iter().enumerate() {
        out.push(SqGraphRecord::QuestionNode { id: id.clone(), b: g.b(i) });
    }
    for e in g.qs_edges() {
        out.push(SqGraphRecord::QsEdge {
            q: g.questions()[e.question].clone(),
            s: g.students()[e.student].clone(),
            r: e.correct as u8,
        });
    }
    for e in g.qq_edges() {
        out.push(SqGraphRecord::QqEdge {
            a: g.questions()[e.a].clone(),
            b: g.questions()[e.b].clone(),
            w: e.weight,
        });
    }
    for e in g.ss_edges() {
        out.push(SqGraphRecord::SsEdge {
            a: g.students()[e.a].clone(),
            b: g.students()[e.b].clone(),
            w: e.weight,
        });
    }
    out
}

pub fn sq_graph_from_records(records: &[SqGraphRecord]) -> Result<SqGraph, GraphError> {
    let mut students: Vec<(String, f64)> = Vec::new();
    let mut questions: Vec<(String, f64)> = Vec::new();
    for rec in records {
        match rec {
            SqGraphRecord::StudentNode { id, theta } => students.push((id.clone(), *theta)),
            SqGraphRecord::QuestionNode { id, b } => questions.push((id.clone(), *b)),
            _ => {}
        }
    }
    students.sort_by(|a, b| a.0.cmp(&b.0));
    questions.sort_by(|a, b| a.0.cmp(&b.0));
    let s_index: BTreeMap<&str, usize> =
        students.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let q_index: BTreeMap<&str, usize> =
        questions.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let look = |map: &BTreeMap<&str, usize>, id: &str| -> Result<usize, GraphError> {
        map.get(id).copied().ok_or_else(|| GraphError::MissingParameter(id.to_string()))
    };

    let mut qs = Vec::new();
    let mut qq = Vec::new();
    let mut ss = Vec::new();
    for rec in records {
        match rec {
            SqGraphRecord::QsEdge { q, s, r } => qs.push(QsEdge {
                question: look(&q_index, q)?,
                student: look(&s_index, s)?,
                correct: *r == 1,
            }),
            SqGraphRecord::QqEdge { a, b, w } => {
                let (x, y) = (look(&q_index, a)?, look(&q_index, b)?);
                qq.push(SimEdge { a: x.min(y), b: x.max(y), weight: *w });
            }
            SqGraphRecord::SsEdge { a, b, w } => {
                let (x, y) = (look(&s_index, a)?, look(&s_index, b)?);
                ss.push(SimEdge { a: x.min(y), b: x.max(y), weight: *w });
            }
            _ => {}
        }
    }
    qq.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
    ss.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));

    let (s_ids, theta): (Vec<String>, Vec<f64>) = students.into_iter().unzip();
    let (q_ids, b): (Vec<String>, Vec<f64>) = questions.into_iter().unzip();
    Ok(SqGraph::new(s_ids, theta, q_ids, b, qs, qq, ss)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KcGraphRecord {
    Node { id: String, name: String, definition: String, category: String },
    Edge { src: String, dst: String, relation: RelationType, confidence: f64, evidence: String },
}

pub fn kc_graph_to_records(g: &KcGraph) -> Vec<KcGraphRecord> {
    let mut out = Vec::new();
    for p in g.profiles() {
        out.push(KcGraphRecord::Node {
            id: p.kc_id.clone(),
            name: p.name.clone(),
            definition: p.definition.clone(),
            category: p.category.clone(),
        });
    }
    for e in g.edges() {
        out.push(KcGraphRecord::Edge {
            src: g.kc_id(e.src).to_string(),
            dst: g.kc_id(e.dst).to_string(),
            relation: e.relation,
            confidence: e.confidence,
            evidence: e.evidence.clone(),
        });
    }
    out
}

pub fn kc_graph_from_records(records: &[KcGraphRecord]) -> Result<KcGraph, GraphError> {
    let mut profiles: Vec<ConceptProfile> = records
        .iter()
        .filter_map(|r| match r {
            KcGraphRecord::Node { id, name, definition, category } => Some(ConceptProfile {
                kc_id: id.clone(),
                name: name.clone(),
                definition: definition.clone(),
                category: category.clone(),
            }),
            _ => None,
        })
        .collect();
    profiles.sort_by(|a, b| a.kc_id.cmp(&b.kc_id));
    let index: BTreeMap<&str, usize> =
        profiles.iter().enumerate().map(|(i, p)| (p.kc_id.as_str(), i)).collect();

    let mut edges = Vec::new();
    for rec in records {
        if let KcGraphRecord::Edge { src, dst, relation, confidence, evidence } = rec {
            let s =
                *index.get(src.as_str()).ok_or_else(|| GraphError::UnknownKc(src.clone()))?;
            let d =
                *index.get(dst.as_str()).ok_or_else(|| GraphError::UnknownKc(dst.clone()))?;
            edges.push(KcEdge {
                src: s,
                dst: d,
                relation: *relation,
                confidence: *confidence,
                evidence: evidence.clone(),
            });
        }
    }
    edges.sort_by(|a, b| (a.src, a.dst, a.relation).cmp(&(b.src, b.dst, b.relation)));
    Ok(KcGraph::from_parts(profiles, edges))
}
