//! Domain types shared by every stage of the pipeline.
//!
//! All types here are immutable after construction and safe to share across
//! threads; the graphs are rebuilt rather than mutated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown id: {0}")]
    UnknownId(String),
    #[error("similarity weight {0} outside (0, 1]")]
    InvalidWeight(f64),
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(String, String),
}

/// One answered question: who, what, which concepts, outcome, when.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub student_id: String,
    pub question_id: String,
    /// Concept tags; must be non-empty for a valid record.
    pub kc_ids: BTreeSet<String>,
    pub correct: bool,
    pub timestamp: f64,
}

impl Interaction {
    /// Correctness as the 0/1 value used by the likelihood and the loss.
    pub fn r(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Time-ordered interaction records; the single source of behavioral
/// evidence for calibration, graph building, and training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionLog {
    records: Vec<Interaction>,
}

impl InteractionLog {
    /// Build a log sorted globally by timestamp. The sort is stable, so
    /// records with equal timestamps keep their original relative order.
    pub fn new(mut records: Vec<Interaction>) -> Self {
        records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        InteractionLog { records }
    }

    /// Keep records exactly as given. Useful for constructing logs that
    /// deliberately violate invariants, which `validate_log` then reports.
    pub fn from_raw(records: Vec<Interaction>) -> Self {
        InteractionLog { records }
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-student views in stored (time) order.
    pub fn student_sequences(&self) -> BTreeMap<&str, Vec<&Interaction>> {
        let mut out: BTreeMap<&str, Vec<&Interaction>> = BTreeMap::new();
        for rec in &self.records {
            out.entry(rec.student_id.as_str()).or_default().push(rec);
        }
        out
    }

    pub fn student_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.student_id.as_str()).collect()
    }

    pub fn question_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.question_id.as_str()).collect()
    }

    pub fn kc_ids(&self) -> BTreeSet<&str> {
        self.records.iter().flat_map(|r| r.kc_ids.iter().map(String::as_str)).collect()
    }
}

/// A violated log invariant, pointing at the offending record.
#[derive(Clone, Debug, PartialEq)]
pub struct LogViolation {
    pub record_index: usize,
    pub rule: String,
}

impl fmt::Display for LogViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.record_index, self.rule)
    }
}

/// Check every type invariant of a log. Violations are data, not failures:
/// an empty list means the log is well-formed.
pub fn validate_log(log: &InteractionLog) -> Vec<LogViolation> {
    let mut violations = Vec::new();
    let mut last_seen: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (idx, rec) in log.records().iter().enumerate() {
        if rec.kc_ids.is_empty() {
            violations.push(LogViolation { record_index: idx, rule: "empty kc_ids".to_string() });
        }
        if !rec.timestamp.is_finite() {
            violations
                .push(LogViolation { record_index: idx, rule: "non-finite timestamp".to_string() });
        }
        if let Some(&(prev_idx, prev_ts)) = last_seen.get(rec.student_id.as_str()) {
            if rec.timestamp < prev_ts {
                violations.push(LogViolation {
                    record_index: idx,
                    rule: format!(
                        "timestamp order: precedes record {prev_idx} of student {}",
                        rec.student_id
                    ),
                });
            }
        }
        last_seen.insert(rec.student_id.as_str(), (idx, rec.timestamp));
    }
    violations
}

/// The five typed concept-to-concept relations; `None` means "no edge".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    Association,
    Containment,
    Equivalence,
    Sibling,
    PredecessorSuccessor,
    None,
}

impl RelationType {
    pub const ALL_EDGES: [RelationType; 5] = [
        RelationType::Association,
        RelationType::Containment,
        RelationType::Equivalence,
        RelationType::Sibling,
        RelationType::PredecessorSuccessor,
    ];

    /// Directed relations keep src -> dst; the rest are stored as a
    /// symmetric pair of mirror edges.
    pub fn is_directed(&self) -> bool {
        matches!(self, RelationType::Containment | RelationType::PredecessorSuccessor)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RelationType::Association => "association",
            RelationType::Containment => "containment",
            RelationType::Equivalence => "equivalence",
            RelationType::Sibling => "sibling",
            RelationType::PredecessorSuccessor => "predecessor_successor",
            RelationType::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<RelationType> {
        match s {
            "association" => Some(RelationType::Association),
            "containment" => Some(RelationType::Containment),
            "equivalence" => Some(RelationType::Equivalence),
            "sibling" => Some(RelationType::Sibling),
            "predecessor_successor" => Some(RelationType::PredecessorSuccessor),
            "none" => Some(RelationType::None),
            _ => None,
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Standardized description of one knowledge concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptProfile {
    pub kc_id: String,
    pub name: String,
    pub definition: String,
    pub category: String,
}

/// Typed, attributed concept edge (dense node indices into the owning
/// [`KcGraph`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KcEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationType,
    pub confidence: f64,
    pub evidence: String,
}

/// Multi-relational concept graph. Undirected relation types (association,
/// equivalence, sibling) are stored as mirror edge pairs; directed ones
/// (containment, predecessor-successor) as single edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KcGraph {
    profiles: Vec<ConceptProfile>,
    edges: Vec<KcEdge>,
}

impl KcGraph {
    /// `profiles` must be sorted by `kc_id`; index order defines the dense
    /// node ids used by `edges`.
    pub fn from_parts(profiles: Vec<ConceptProfile>, edges: Vec<KcEdge>) -> Self {
        debug_assert!(profiles.windows(2).all(|w| w[0].kc_id < w[1].kc_id));
        KcGraph { profiles, edges }
    }

    pub fn node_count(&self) -> usize {
        self.profiles.len()
    }

    pub fn profiles(&self) -> &[ConceptProfile] {
        &self.profiles
    }

    pub fn profile(&self, idx: usize) -> &ConceptProfile {
        &self.profiles[idx]
    }

    pub fn kc_id(&self, idx: usize) -> &str {
        &self.profiles[idx].kc_id
    }

    pub fn kc_index(&self, kc_id: &str) -> Option<usize> {
        self.profiles.binary_search_by(|p| p.kc_id.as_str().cmp(kc_id)).ok()
    }

    pub fn edges(&self) -> &[KcEdge] {
        &self.edges
    }

    /// Direction-agnostic adjacency: for every stored edge, both endpoints
    /// see each other, weighted by the edge confidence.
    pub fn undirected_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.profiles.len()];
        for e in &self.edges {
            adj[e.src].push((e.dst, e.confidence));
            if e.src != e.dst {
                adj[e.dst].push((e.src, e.confidence));
            }
        }
        for list in &mut adj {
            list.sort_by(|a, b| a.0.cmp(&b.0));
            list.dedup_by_key(|p| p.0);
        }
        adj
    }
}

/// A node of the student-question graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SqNode {
    Student(usize),
    Question(usize),
}

/// Question-student response edge, labeled with correctness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QsEdge {
    pub question: usize,
    pub student: usize,
    pub correct: bool,
}

/// Similarity edge within one node class, stored once with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Tripartite interaction graph: students (with ability), questions (with
/// difficulty), response edges, and top-k similarity edges inside each node
/// class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqGraph {
    students: Vec<String>,
    theta: Vec<f64>,
    questions: Vec<String>,
    b: Vec<f64>,
    qs: Vec<QsEdge>,
    qq: Vec<SimEdge>,
    ss: Vec<SimEdge>,
}

impl SqGraph {
    /// Construction-time validation: similarity weights in (0, 1], canonical
    /// `a < b` similarity edges without duplicates. `students` and
    /// `questions` must be sorted (dense index = rank).
    pub fn new(
        students: Vec<String>,
        theta: Vec<f64>,
        questions: Vec<String>,
        b: Vec<f64>,
        qs: Vec<QsEdge>,
        qq: Vec<SimEdge>,
        ss: Vec<SimEdge>,
    ) -> Result<Self, ModelError> {
        assert_eq!(students.len(), theta.len(), "one theta per student");
        assert_eq!(questions.len(), b.len(), "one difficulty per question");
        for (edges, ids) in [(&qq, &questions), (&ss, &students)] {
            let mut seen = BTreeSet::new();
            for e in edges.iter() {
                if !(e.weight > 0.0 && e.weight <= 1.0) {
                    return Err(ModelError::InvalidWeight(e.weight));
                }
                if e.a >= e.b {
                    return Err(ModelError::DuplicateEdge(
                        ids[e.a].clone(),
                        ids[e.b].clone(),
                    ));
                }
                if !seen.insert((e.a, e.b)) {
                    return Err(ModelError::DuplicateEdge(
                        ids[e.a].clone(),
                        ids[e.b].clone(),
                    ));
                }
            }
        }
        Ok(SqGraph { students, theta, questions, b, qs, qq, ss })
    }

    pub fn student_count(&self) -> usize {
        self.students.len()
    }

    pub fn question_count(&self) -> usize {
        self.questions.len()
    }

    pub fn students(&self) -> &[String] {
        &self.students
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn theta(&self, student: usize) -> f64 {
        self.theta[student]
    }

    pub fn b(&self, question: usize) -> f64 {
        self.b[question]
    }

    pub fn student_index(&self, id: &str) -> Option<usize> {
        self.students.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.questions.binary_search_by(|q| q.as_str().cmp(id)).ok()
    }

    pub fn qs_edges(&self) -> &[QsEdge] {
        &self.qs
    }

    pub fn qq_edges(&self) -> &[SimEdge] {
        &self.qq
    }

    pub fn ss_edges(&self) -> &[SimEdge] {
        &self.ss
    }

    /// Node attribute: theta for students, b for questions.
    pub fn attr(&self, node: SqNode) -> f64 {
        match node {
            SqNode::Student(s) => self.theta[s],
            SqNode::Question(q) => self.b[q],
        }
    }

    /// Full adjacency over all three edge sets. Response edges carry weight
    /// 1.0; similarity edges their weight. Sorted per node, deduplicated by
    /// maximum weight.
    pub fn adjacency(&self) -> BTreeMap<SqNode, Vec<(SqNode, f64)>> {
        let mut adj: BTreeMap<SqNode, Vec<(SqNode, f64)>> = BTreeMap::new();
        for s in 0..self.students.len() {
            adj.insert(SqNode::Student(s), Vec::new());
        }
        for q in 0..self.questions.len() {
            adj.insert(SqNode::Question(q), Vec::new());
        }
        let mut link = |a: SqNode, b: SqNode, w: f64, adj: &mut BTreeMap<_, Vec<(SqNode, f64)>>| {
            adj.get_mut(&a).unwrap().push((b, w));
            adj.get_mut(&b).unwrap().push((a, w));
        };
        for e in &self.qs {
            link(SqNode::Question(e.question), SqNode::Student(e.student), 1.0, &mut adj);
        }
        for e in &self.qq {
            link(SqNode::Question(e.a), SqNode::Question(e.b), e.weight, &mut adj);
        }
        for e in &self.ss {
            link(SqNode::Student(e.a), SqNode::Student(e.b), e.weight, &mut adj);
        }
        for list in adj.values_mut() {
            list.sort_by(|x, y| x.0.cmp(&y.0).then(y.1.total_cmp(&x.1)));
            list.dedup_by_key(|p| p.0);
        }
        adj
    }
}

/// Dense interning of opaque string identifiers, in sorted order.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    names: Vec<String>,
}

impl Interner {
    pub fn from_sorted_set(set: BTreeSet<&str>) -> Self {
        Interner { names: set.into_iter().map(str::to_string).collect() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn into_names(self) -> Vec<String> {
        self.names
    }
}
