//! Role-structured agent pipeline for concept-relation extraction.
//!
//! Five steps over a pluggable backend: (1) concept completion
//! standardizes names and writes definitions/categories, (2) a semantic
//! pass proposes the most plausible relation per candidate pair from the
//! profiles and interaction evidence, (3) a scoring pass grades the
//! proposal against type-specific criteria on a 0-5 scale, (4) arbitration
//! fixes the decision and flags doubtful cases (low mean score or an axiom
//! conflict with already-accepted edges), and (5) doubtful cases go through
//! two persona voting rounds — blind first, then with peer summaries — with
//! the strict round-2 majority winning.
//!
//! Backends: [`heuristic::HeuristicBackend`] (deterministic rules, used by
//! every test) and [`live::LiveBackend`] (chat-completion wire protocol).

pub mod evidence;
pub mod heuristic;
pub mod live;
pub mod prompts;
pub mod schema;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::graphs::{build_kc_graph, EdgeDecision, GraphError};
use crate::model::{ConceptProfile, InteractionLog, KcGraph, RelationType};
use crate::synth::GoldRelation;
use evidence::{EvidenceIndex, PairEvidence};
use schema::{
    criteria_for, ArbitrationPayload, CompletionPayload, Direction, EvidenceSummary, PairPayload,
    PeerVote, ScoringPayload, VotePayload,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("schema failure: {0}")]
    Schema(String),
    #[error("concept has an empty name")]
    EmptyName,
    #[error("empty concept set")]
    EmptyKcSet,
    #[error("gold relation set is empty")]
    EmptyGold,
    #[error("pair evidence requires two distinct concepts")]
    SamePair,
    #[error("unknown concept {0:?}")]
    UnknownKc(String),
    #[error("every candidate pair failed at the backend ({failed} pairs)")]
    AllPairsFailed { failed: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Persona {
    Teaching,
    Structure,
    Behavior,
}

impl Persona {
    pub const ALL: [Persona; 3] = [Persona::Teaching, Persona::Structure, Persona::Behavior];

    pub fn as_str(&self) -> &'static str {
        match self {
            Persona::Teaching => "teaching",
            Persona::Structure => "structure",
            Persona::Behavior => "behavior",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentRole {
    Semantic,
    Scoring,
    Arbiter,
    Persona(Persona),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Completion,
    Proposal,
    Scoring,
    Arbitration,
    Vote,
}

/// One backend invocation. `repair_note` carries the validation error of
/// the previous attempt so a live model can correct itself.
pub struct AgentRequest<'a> {
    pub role: AgentRole,
    pub task: TaskKind,
    pub payload: &'a Value,
    pub repair_note: Option<String>,
}

/// A structured-response agent. Implementations must return JSON that
/// validates against the task schema; the pipeline retries with a repair
/// note and degrades gracefully after `max_retries`.
pub trait AgentBackend {
    fn respond(&self, req: &AgentRequest) -> Result<Value, AgentError>;
}

/// Pipeline knobs. Candidate filtering keeps the quadratic pair scan away
/// from live backends: a pair is examined when it co-occurs at least
/// `candidate_min_cooccurrence` times or its names overlap at least
/// `candidate_min_name_overlap`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub enable_completion: bool,
    pub enable_cross_correction: bool,
    pub candidate_min_cooccurrence: u64,
    pub candidate_min_name_overlap: f64,
    /// Decisions with mean criterion score below this are doubtful.
    pub doubt_threshold: f64,
    pub max_retries: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            enable_completion: true,
            enable_cross_correction: true,
            candidate_min_cooccurrence: 3,
            candidate_min_name_overlap: 0.3,
            doubt_threshold: 3.0,
            max_retries: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationProposal {
    pub a: String,
    pub b: String,
    pub proposed_type: RelationType,
    pub direction: Direction,
    pub justification: String,
    pub evidence_excerpts: String,
    /// True when the backend never produced a valid reply and the proposal
    /// fell back to `None`.
    pub degraded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: BTreeMap<String, u8>,
    pub explanations: BTreeMap<String, String>,
    pub degraded: bool,
}

impl ScoreVector {
    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.values().map(|&s| s as f64).sum::<f64>() / self.scores.len() as f64
    }

    fn zeros(relation: RelationType) -> Self {
        ScoreVector {
            scores: criteria_for(relation).iter().map(|c| (c.to_string(), 0)).collect(),
            explanations: BTreeMap::new(),
            degraded: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Arbitration,
    CrossCorrection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub persona: String,
    pub round: u8,
    pub relation: RelationType,
    pub direction: Direction,
    pub rationale: String,
}

/// Everything every step said about one pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditTrail {
    pub proposal: Option<RelationProposal>,
    pub scores: Option<ScoreVector>,
    pub arbitration_rationale: String,
    pub votes: Vec<VoteRecord>,
}

/// Final adjudicated relation for one canonical (a < b) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationDecision {
    pub a: String,
    pub b: String,
    pub final_type: RelationType,
    pub direction: Direction,
    pub confidence: f64,
    pub doubtful: bool,
    pub provenance: Provenance,
    pub audit: AuditTrail,
}

impl RelationDecision {
    /// Edge view for graph assembly; `None` relations produce nothing.
    pub fn as_edge(&self) -> Option<EdgeDecision> {
        if self.final_type == RelationType::None {
            return None;
        }
        let (src, dst) = match self.direction {
            Direction::Backward => (self.b.clone(), self.a.clone()),
            _ => (self.a.clone(), self.b.clone()),
        };
        Some(EdgeDecision {
            src,
            dst,
            relation: self.final_type,
            confidence: self.confidence,
            evidence: self
                .audit
                .proposal
                .as_ref()
                .map(|p| p.evidence_excerpts.clone())
                .unwrap_or_default(),
        })
    }
}

/// Retry loop shared by every schema-validated call.
fn call_validated<T>(
    backend: &dyn AgentBackend,
    role: AgentRole,
    task: TaskKind,
    payload: &Value,
    max_retries: usize,
    parse: impl Fn(&Value) -> Result<T, String>,
) -> Result<T, AgentError> {
    let mut repair: Option<String> = None;
    let mut last = String::from("no attempts made");
    for _ in 0..=max_retries {
        let req = AgentRequest { role, task, payload, repair_note: repair.clone() };
        match backend.respond(&req) {
            Ok(v) => match parse(&v) {
                Ok(t) => return Ok(t),
                Err(e) => {
                    last = e.clone();
                    repair = Some(e);
                }
            },
            Err(AgentError::Schema(e)) => {
                last = e.clone();
                repair = Some(e);
            }
            Err(AgentError::Backend(e)) => {
                last = e;
                repair = None;
            }
            Err(other) => return Err(other),
        }
    }
    Err(AgentError::Schema(last))
}

/// Step 1: standardize the name and fill definition/category. Profiles that
/// are already complete pass through unchanged. A backend that never
/// validates degrades to `definition = name` and is flagged.
pub fn complete_concept(
    profile: &ConceptProfile,
    backend: &dyn AgentBackend,
    max_retries: usize,
) -> Result<(ConceptProfile, bool), AgentError> {
    if profile.name.trim().is_empty() {
        return Err(AgentError::EmptyName);
    }
    if !profile.definition.trim().is_empty() && !profile.category.trim().is_empty() {
        return Ok((profile.clone(), false));
    }
    let payload = serde_json::to_value(CompletionPayload {
        kc_id: profile.kc_id.clone(),
        name: profile.name.clone(),
    })
    .expect("payload serializes");
    match call_validated(
        backend,
        AgentRole::Semantic,
        TaskKind::Completion,
        &payload,
        max_retries,
        schema::parse_completion,
    ) {
        Ok(resp) => Ok((
            ConceptProfile {
                kc_id: profile.kc_id.clone(),
                name: resp.name,
                definition: resp.definition,
                category: resp.category,
            },
            false,
        )),
        Err(AgentError::Schema(_)) | Err(AgentError::Backend(_)) => Ok((
            ConceptProfile {
                kc_id: profile.kc_id.clone(),
                name: profile.name.clone(),
                definition: profile.name.clone(),
                category: String::new(),
            },
            true,
        )),
        Err(other) => Err(other),
    }
}

/// Step 2 evidence: behavioral + lexical signals for ordered (a, b).
pub fn compute_pair_evidence(
    log: &InteractionLog,
    a: &ConceptProfile,
    b: &ConceptProfile,
) -> Result<PairEvidence, AgentError> {
    if a.kc_id == b.kc_id {
        return Err(AgentError::SamePair);
    }
    Ok(EvidenceIndex::new(log).evidence(a, b))
}

/// Step 2: one relation proposal per candidate pair.
pub fn propose_relation(
    a: &ConceptProfile,
    b: &ConceptProfile,
    ev: &EvidenceSummary,
    backend: &dyn AgentBackend,
    max_retries: usize,
) -> RelationProposal {
    let payload = serde_json::to_value(PairPayload { a: a.clone(), b: b.clone(), evidence: *ev })
        .expect("payload serializes");
    match call_validated(
        backend,
        AgentRole::Semantic,
        TaskKind::Proposal,
        &payload,
        max_retries,
        schema::parse_relation_response,
    ) {
        Ok(resp) => RelationProposal {
            a: a.kc_id.clone(),
            b: b.kc_id.clone(),
            proposed_type: resp.relation,
            direction: resp.direction,
            justification: resp.justification,
            evidence_excerpts: resp.evidence_excerpts,
            degraded: false,
        },
        Err(_) => RelationProposal {
            a: a.kc_id.clone(),
            b: b.kc_id.clone(),
            proposed_type: RelationType::None,
            direction: Direction::Undirected,
            justification: String::new(),
            evidence_excerpts: String::new(),
            degraded: true,
        },
    }
}

/// Step 3: grade the proposal on its type-specific criteria.
pub fn score_relation(
    proposal: &RelationProposal,
    pair: &PairPayload,
    backend: &dyn AgentBackend,
    max_retries: usize,
) -> Result<ScoreVector, AgentError> {
    if proposal.proposed_type == RelationType::None {
        return Err(AgentError::Backend("cannot score a `none` proposal".into()));
    }
    let payload = serde_json::to_value(ScoringPayload {
        pair: pair.clone(),
        relation: proposal.proposed_type,
        direction: proposal.direction,
        criteria: criteria_for(proposal.proposed_type).iter().map(|s| s.to_string()).collect(),
    })
    .expect("payload serializes");
    let relation = proposal.proposed_type;
    match call_validated(backend, AgentRole::Scoring, TaskKind::Scoring, &payload, max_retries, |v| {
        schema::parse_scores(v, relation)
    }) {
        Ok(resp) => Ok(ScoreVector {
            scores: resp.scores,
            explanations: resp.explanations,
            degraded: false,
        }),
        Err(AgentError::Schema(_)) | Err(AgentError::Backend(_)) => Ok(ScoreVector::zeros(relation)),
        Err(other) => Err(other),
    }
}

/// Directed edges accepted so far, for axiom conflict checks during
/// adjudication.
#[derive(Default)]
pub struct AcceptedEdges {
    edges: BTreeMap<RelationType, Vec<(String, String)>>,
}

impl AcceptedEdges {
    /// Would adding src -> dst of this relation close a cycle?
    pub fn closes_cycle(&self, relation: RelationType, src: &str, dst: &str) -> bool {
        if !relation.is_directed() {
            return false;
        }
        let Some(edges) = self.edges.get(&relation) else { return false };
        // Cycle iff src is already reachable from dst.
        let mut frontier = vec![dst];
        let mut seen: BTreeSet<&str> = frontier.iter().copied().collect();
        while let Some(u) = frontier.pop() {
            if u == src {
                return true;
            }
            for (s, d) in edges {
                if s == u && seen.insert(d) {
                    frontier.push(d);
                }
            }
        }
        false
    }

    pub fn insert(&mut self, relation: RelationType, src: &str, dst: &str) {
        if relation.is_directed() {
            self.edges.entry(relation).or_default().push((src.to_string(), dst.to_string()));
        }
    }
}

/// Step 4: fix the decision; flag it doubtful when the mean score is below
/// the threshold or the edge would violate an axiom against already
/// accepted edges.
pub fn arbitrate(
    proposal: &RelationProposal,
    scores: &ScoreVector,
    pair: &PairPayload,
    backend: &dyn AgentBackend,
    max_retries: usize,
    accepted: &AcceptedEdges,
    doubt_threshold: f64,
) -> RelationDecision {
    let payload = serde_json::to_value(ArbitrationPayload {
        pair: pair.clone(),
        proposed_relation: proposal.proposed_type,
        proposed_direction: proposal.direction,
        justification: proposal.justification.clone(),
        scores: scores.scores.clone(),
        mean_score: scores.mean(),
    })
    .expect("payload serializes");

    let (final_type, direction, rationale, schema_failed) = match call_validated(
        backend,
        AgentRole::Arbiter,
        TaskKind::Arbitration,
        &payload,
        max_retries,
        schema::parse_relation_response,
    ) {
        Ok(resp) => (resp.relation, resp.direction, resp.justification, false),
        Err(_) => {
            (proposal.proposed_type, proposal.direction, "arbiter unavailable".to_string(), true)
        }
    };

    let mean = scores.mean();
    let (src, dst) = match direction {
        Direction::Backward => (proposal.b.as_str(), proposal.a.as_str()),
        _ => (proposal.a.as_str(), proposal.b.as_str()),
    };
    let axiom_conflict =
        final_type != RelationType::None && accepted.closes_cycle(final_type, src, dst);
    let doubtful = schema_failed
        || scores.degraded
        || proposal.degraded
        || mean < doubt_threshold
        || axiom_conflict;

    RelationDecision {
        a: proposal.a.clone(),
        b: proposal.b.clone(),
        final_type,
        direction,
        confidence: mean / 5.0,
        doubtful,
        provenance: Provenance::Arbitration,
        audit: AuditTrail {
            proposal: Some(proposal.clone()),
            scores: Some(scores.clone()),
            arbitration_rationale: if axiom_conflict {
                format!("{rationale}; would close a {final_type} cycle")
            } else {
                rationale
            },
            votes: Vec::new(),
        },
    }
}

fn one_vote(
    backend: &dyn AgentBackend,
    persona: Persona,
    payload: &VotePayload,
    max_retries: usize,
) -> Option<VoteRecord> {
    let value = serde_json::to_value(payload).expect("payload serializes");
    call_validated(
        backend,
        AgentRole::Persona(persona),
        TaskKind::Vote,
        &value,
        max_retries,
        schema::parse_relation_response,
    )
    .ok()
    .map(|resp| VoteRecord {
        persona: persona.as_str().to_string(),
        round: payload.round,
        relation: resp.relation,
        direction: resp.direction,
        rationale: resp.justification,
    })
}

/// Step 5: two voting rounds over a doubtful decision. Round 1 is blind;
/// round 2 re-votes with peer summaries. The strict majority of round-2
/// votes wins (ties and empty panels yield `None`), confidence is the vote
/// share, and the result is re-checked against the accepted-edge axioms.
pub fn cross_correct_one(
    decision: &RelationDecision,
    pair: &PairPayload,
    backend: &dyn AgentBackend,
    max_retries: usize,
    accepted: &AcceptedEdges,
) -> RelationDecision {
    let base_payload = |round: u8, peers: Vec<PeerVote>| VotePayload {
        pair: pair.clone(),
        round,
        prior_relation: decision.final_type,
        prior_direction: decision.direction,
        scores: decision.audit.scores.as_ref().map(|s| s.scores.clone()).unwrap_or_default(),
        peer_votes: peers,
    };

    let mut votes: Vec<VoteRecord> = Vec::new();
    let round1: Vec<VoteRecord> = Persona::ALL
        .iter()
        .filter_map(|&p| one_vote(backend, p, &base_payload(1, Vec::new()), max_retries))
        .collect();
    votes.extend(round1.iter().cloned());

    let peers: Vec<PeerVote> = round1
        .iter()
        .map(|v| PeerVote {
            persona: v.persona.clone(),
            relation: v.relation,
            direction: v.direction,
            rationale: v.rationale.clone(),
        })
        .collect();
    let round2: Vec<VoteRecord> = Persona::ALL
        .iter()
        .filter_map(|&p| one_vote(backend, p, &base_payload(2, peers.clone()), max_retries))
        .collect();
    votes.extend(round2.iter().cloned());

    let mut tally: BTreeMap<(RelationType, Direction), usize> = BTreeMap::new();
    for v in &round2 {
        *tally.entry((v.relation, v.direction)).or_default() += 1;
    }
    let valid = round2.len();
    // Strict majority has at most one holder; iteration order only breaks
    // irrelevant ties deterministically.
    let winner = tally.iter().max_by_key(|(_, count)| **count).map(|(key, count)| (*key, *count));

    let (mut final_type, mut direction, mut confidence) = match winner {
        Some(((relation, dir), count)) if count * 2 > valid => {
            (relation, dir, count as f64 / valid as f64)
        }
        _ => (RelationType::None, Direction::Undirected, 0.0),
    };

    // Axiom recheck: violators become non-edges.
    if final_type != RelationType::None {
        let (src, dst) = match direction {
            Direction::Backward => (decision.b.as_str(), decision.a.as_str()),
            _ => (decision.a.as_str(), decision.b.as_str()),
        };
        if accepted.closes_cycle(final_type, src, dst) {
            final_type = RelationType::None;
            direction = Direction::Undirected;
            confidence = 0.0;
        }
    }

    let mut audit = decision.audit.clone();
    audit.votes = votes;
    RelationDecision {
        a: decision.a.clone(),
        b: decision.b.clone(),
        final_type,
        direction,
        confidence,
        doubtful: false,
        provenance: Provenance::CrossCorrection,
        audit,
    }
}

/// Re-examine every doubtful decision with the persona panel.
pub fn cross_correct(
    doubtful: &[(RelationDecision, PairPayload)],
    backend: &dyn AgentBackend,
    max_retries: usize,
    accepted: &mut AcceptedEdges,
) -> Vec<RelationDecision> {
    let mut out = Vec::with_capacity(doubtful.len());
    for (decision, pair) in doubtful {
        let corrected = cross_correct_one(decision, pair, backend, max_retries, accepted);
        if corrected.final_type != RelationType::None {
            let (src, dst) = match corrected.direction {
                Direction::Backward => (corrected.b.as_str(), corrected.a.as_str()),
                _ => (corrected.a.as_str(), corrected.b.as_str()),
            };
            accepted.insert(corrected.final_type, src, dst);
        }
        out.push(corrected);
    }
    out
}

/// Pipeline output: the assembled graph plus the full decision record.
pub struct ExtractionOutcome {
    pub graph: KcGraph,
    pub profiles: BTreeMap<String, ConceptProfile>,
    pub decisions: Vec<RelationDecision>,
    pub notes: Vec<String>,
    pub degraded_pairs: usize,
}

/// Run the whole pipeline over a concept list and an interaction log.
/// Deterministic with the rule backend: identical inputs produce identical
/// graphs.
pub fn extract_relations(
    kcs: &[(String, String)],
    log: &InteractionLog,
    backend: &dyn AgentBackend,
    cfg: &ExtractConfig,
) -> Result<ExtractionOutcome, AgentError> {
    if kcs.is_empty() {
        return Err(AgentError::EmptyKcSet);
    }

    // Step 1: profiles.
    let mut notes = Vec::new();
    let mut profiles: BTreeMap<String, ConceptProfile> = BTreeMap::new();
    for (kc_id, name) in kcs {
        let stub = ConceptProfile {
            kc_id: kc_id.clone(),
            name: name.clone(),
            definition: String::new(),
            category: String::new(),
        };
        let profile = if cfg.enable_completion {
            let (completed, degraded) = complete_concept(&stub, backend, cfg.max_retries)?;
            if degraded {
                notes.push(format!("completion degraded for {kc_id}"));
            }
            completed
        } else {
            ConceptProfile { definition: stub.name.clone(), ..stub }
        };
        profiles.insert(kc_id.clone(), profile);
    }

    // Step 2 precompute: evidence index and candidate pairs.
    let index = EvidenceIndex::new(log);
    let ordered: Vec<&ConceptProfile> = profiles.values().collect();
    let mut candidates: Vec<(usize, usize, EvidenceSummary)> = Vec::new();
    for i in 0..ordered.len() {
        for j in i + 1..ordered.len() {
            let forward = index.evidence(ordered[i], ordered[j]);
            let backward = index.evidence(ordered[j], ordered[i]);
            let summary = EvidenceSummary::from_directed(&forward, &backward);
            if summary.cooccurrence >= cfg.candidate_min_cooccurrence
                || summary.name_overlap >= cfg.candidate_min_name_overlap
            {
                candidates.push((i, j, summary));
            }
        }
    }

    // Steps 2-4 per candidate, in canonical pair order.
    let mut accepted = AcceptedEdges::default();
    let mut decisions: Vec<RelationDecision> = Vec::new();
    let mut pair_payloads: BTreeMap<(String, String), PairPayload> = BTreeMap::new();
    let mut failed_pairs = 0usize;

    for (i, j, summary) in &candidates {
        let (a, b) = (ordered[*i], ordered[*j]);
        let pair = PairPayload { a: a.clone(), b: b.clone(), evidence: *summary };
        pair_payloads.insert((a.kc_id.clone(), b.kc_id.clone()), pair.clone());

        let proposal = propose_relation(a, b, summary, backend, cfg.max_retries);
        if proposal.degraded {
            failed_pairs += 1;
        }
        if proposal.proposed_type == RelationType::None {
            decisions.push(RelationDecision {
                a: proposal.a.clone(),
                b: proposal.b.clone(),
                final_type: RelationType::None,
                direction: Direction::Undirected,
                confidence: 0.0,
                doubtful: proposal.degraded,
                provenance: Provenance::Arbitration,
                audit: AuditTrail { proposal: Some(proposal), ..AuditTrail::default() },
            });
            continue;
        }

        let scores = score_relation(&proposal, &pair, backend, cfg.max_retries)?;
        let decision = arbitrate(
            &proposal,
            &scores,
            &pair,
            backend,
            cfg.max_retries,
            &accepted,
            cfg.doubt_threshold,
        );
        if !decision.doubtful && decision.final_type != RelationType::None {
            if let Some(edge) = decision.as_edge() {
                accepted.insert(edge.relation, &edge.src, &edge.dst);
            }
        }
        decisions.push(decision);
    }

    if !candidates.is_empty() && failed_pairs == candidates.len() {
        return Err(AgentError::AllPairsFailed { failed: failed_pairs });
    }

    // Step 5: re-examine doubtful decisions.
    if cfg.enable_cross_correction {
        let doubtful: Vec<(RelationDecision, PairPayload)> = decisions
            .iter()
            .filter(|d| d.doubtful)
            .map(|d| (d.clone(), pair_payloads[&(d.a.clone(), d.b.clone())].clone()))
            .collect();
        if !doubtful.is_empty() {
            let corrected = cross_correct(&doubtful, backend, cfg.max_retries, &mut accepted);
            let by_pair: BTreeMap<(String, String), RelationDecision> =
                corrected.into_iter().map(|d| ((d.a.clone(), d.b.clone()), d)).collect();
            for d in &mut decisions {
                if let Some(fixed) = by_pair.get(&(d.a.clone(), d.b.clone())) {
                    *d = fixed.clone();
                }
            }
        }
    }

    // Final assembly under the axioms.
    let edge_decisions: Vec<EdgeDecision> =
        decisions.iter().filter_map(RelationDecision::as_edge).collect();
    let build = build_kc_graph(&profiles, &edge_decisions)?;
    notes.extend(build.notes);

    Ok(ExtractionOutcome {
        graph: build.graph,
        profiles,
        decisions,
        notes,
        degraded_pairs: failed_pairs,
    })
}

/// Relation-recovery quality against a gold edge set, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationEval {
    /// Share of gold pairs for which any relation was predicted.
    pub pred_pct: f64,
    /// Share of gold pairs whose predicted type (and orientation, for
    /// directed types) matches gold.
    pub corr_pct: f64,
    /// Jaccard over canonical typed edges: directed edges compare
    /// (src, dst, type), undirected ones (min, max, type).
    pub jacc_pct: f64,
}

fn canonical_edge(src: &str, dst: &str, relation: RelationType) -> (String, String, RelationType) {
    if relation.is_directed() || src <= dst {
        (src.to_string(), dst.to_string(), relation)
    } else {
        (dst.to_string(), src.to_string(), relation)
    }
}

pub fn evaluate_relations(
    predicted: &KcGraph,
    gold: &[GoldRelation],
) -> Result<RelationEval, AgentError> {
    if gold.is_empty() {
        return Err(AgentError::EmptyGold);
    }

    let mut predicted_edges: BTreeSet<(String, String, RelationType)> = BTreeSet::new();
    let mut predicted_pairs: BTreeSet<(String, String)> = BTreeSet::new();
    for e in predicted.edges() {
        let (s, d) = (predicted.kc_id(e.src), predicted.kc_id(e.dst));
        predicted_edges.insert(canonical_edge(s, d, e.relation));
        predicted_pairs.insert((s.min(d).to_string(), s.max(d).to_string()));
    }

    let gold_edges: BTreeSet<(String, String, RelationType)> =
        gold.iter().map(|g| canonical_edge(&g.src, &g.dst, g.relation)).collect();

    let mut covered = 0usize;
    let mut correct = 0usize;
    for g in gold {
        let pair = (
            g.src.as_str().min(g.dst.as_str()).to_string(),
            g.src.as_str().max(g.dst.as_str()).to_string(),
        );
        if predicted_pairs.contains(&pair) {
            covered += 1;
        }
        if predicted_edges.contains(&canonical_edge(&g.src, &g.dst, g.relation)) {
            correct += 1;
        }
    }

    let n = gold.len() as f64;
    let inter = predicted_edges.intersection(&gold_edges).count() as f64;
    let union = predicted_edges.union(&gold_edges).count() as f64;
    Ok(RelationEval {
        pred_pct: 100.0 * covered as f64 / n,
        corr_pct: 100.0 * correct as f64 / n,
        jacc_pct: if union > 0.0 { 100.0 * inter / union } else { 100.0 },
    })
}
