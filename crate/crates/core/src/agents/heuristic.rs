//! Deterministic rule backend: a drop-in replacement for live chat models
//! that exercises every pipeline path offline and reproducibly.
//!
//! The rules operate on the same payloads a live model would see. They are
//! intentionally simple threshold checks over the lexical and behavioral
//! evidence; the per-persona variants read different slices of it, which is
//! what makes two-round voting able to overturn a bad first guess.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use crate::agents::evidence::tokenize;
use crate::agents::schema::{
    criteria_for, CompletionPayload, Direction, EvidenceSummary, PairPayload, ScoringPayload,
    VotePayload,
};
use crate::agents::{AgentBackend, AgentError, AgentRequest, Persona, TaskKind};
use crate::model::{ConceptProfile, RelationType};

/// Rule thresholds. The defaults mirror the documented decision procedure;
/// every value is overridable for experiments.
#[derive(Clone, Copy, Debug)]
pub struct HeuristicRules {
    pub equivalence_overlap: f64,
    pub containment_overlap: f64,
    pub ps_precedence: f64,
    pub ps_dependence: f64,
    pub sibling_overlap_lo: f64,
    pub sibling_overlap_hi: f64,
    pub assoc_min_cooccurrence: u64,
    /// Softer ordering threshold the teaching/behavior personas apply when
    /// re-examining doubtful cases.
    pub persona_precedence: f64,
    pub persona_dependence: f64,
}

impl Default for HeuristicRules {
    fn default() -> Self {
        HeuristicRules {
            equivalence_overlap: 0.8,
            containment_overlap: 0.5,
            ps_precedence: 0.7,
            ps_dependence: 0.15,
            sibling_overlap_lo: 0.3,
            sibling_overlap_hi: 0.8,
            assoc_min_cooccurrence: 5,
            persona_precedence: 0.55,
            persona_dependence: 0.3,
        }
    }
}

/// Dictionary of classroom abbreviations used during name standardization.
const ABBREVIATIONS: &[(&str, &str)] = &[
    ("lcd", "least common denominator"),
    ("lcm", "least common multiple"),
    ("gcf", "greatest common factor"),
    ("hcf", "highest common factor"),
    ("eq", "equation"),
    ("eqn", "equation"),
    ("frac", "fraction"),
    ("expr", "expression"),
];

/// Lowercase, expand known abbreviations, and collapse whitespace.
pub fn standardize_name(name: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    for token in name.to_lowercase().split_whitespace() {
        match ABBREVIATIONS.iter().find(|(abbr, _)| *abbr == token) {
            Some((_, expansion)) => out.push(expansion.to_string()),
            None => out.push(token.to_string()),
        }
    }
    out.join(" ")
}

#[derive(Default)]
pub struct HeuristicBackend {
    pub rules: HeuristicRules,
}

impl HeuristicBackend {
    pub fn new() -> Self {
        HeuristicBackend::default()
    }

    fn complete(&self, payload: &CompletionPayload) -> Result<Value, AgentError> {
        if payload.name.trim().is_empty() {
            return Err(AgentError::Backend("completion: empty concept name".into()));
        }
        let standardized = standardize_name(&payload.name);
        let category = standardized.split_whitespace().next().unwrap_or_default().to_string();
        let definition = format!("{standardized}: {category} concept");
        Ok(json!({ "name": standardized, "definition": definition, "category": category }))
    }

    fn relation_reply(
        relation: RelationType,
        direction: Direction,
        justification: &str,
        excerpts: &str,
    ) -> Value {
        json!({
            "relation": relation,
            "direction": direction,
            "justification": justification,
            "evidence_excerpts": excerpts,
        })
    }

    /// Ordered rule ladder over both orientations of the pair.
    fn propose(&self, p: &PairPayload) -> Value {
        let r = &self.rules;
        let ev = &p.evidence;
        let overlap = ev.name_overlap;
        let excerpts = format!(
            "cooccurrence={}, overlap={:.3}, precedence=({:.3}, {:.3}), dependence=({:.3}, {:.3})",
            ev.cooccurrence,
            overlap,
            ev.precedence_ab,
            ev.precedence_ba,
            ev.dependence_ab,
            ev.dependence_ba
        );

        if overlap >= r.equivalence_overlap {
            return Self::relation_reply(
                RelationType::Equivalence,
                Direction::Undirected,
                "token sets are near-identical",
                &excerpts,
            );
        }
        if let Some(direction) = containment_direction(&p.a, &p.b) {
            if overlap >= r.containment_overlap {
                return Self::relation_reply(
                    RelationType::Containment,
                    direction,
                    "one token set strictly contains the other",
                    &excerpts,
                );
            }
        }
        if ev.precedence_ab >= r.ps_precedence && ev.dependence_ab >= r.ps_dependence {
            return Self::relation_reply(
                RelationType::PredecessorSuccessor,
                Direction::Forward,
                "consistent ordering with correctness dependence",
                &excerpts,
            );
        }
        if ev.precedence_ba >= r.ps_precedence && ev.dependence_ba >= r.ps_dependence {
            return Self::relation_reply(
                RelationType::PredecessorSuccessor,
                Direction::Backward,
                "consistent ordering with correctness dependence",
                &excerpts,
            );
        }
        let shared_category =
            !p.a.category.is_empty() && p.a.category == p.b.category;
        let no_precedence = ev.precedence_ab.max(ev.precedence_ba) < r.ps_precedence;
        if shared_category
            && overlap >= r.sibling_overlap_lo
            && overlap < r.sibling_overlap_hi
            && no_precedence
        {
            return Self::relation_reply(
                RelationType::Sibling,
                Direction::Undirected,
                "same category, related names, no ordering signal",
                &excerpts,
            );
        }
        if ev.cooccurrence >= r.assoc_min_cooccurrence {
            return Self::relation_reply(
                RelationType::Association,
                Direction::Undirected,
                "frequently co-attempted without structural signals",
                &excerpts,
            );
        }
        Self::relation_reply(RelationType::None, Direction::Undirected, "no evidence", &excerpts)
    }

    /// Linear bucketing of evidence into 0..=5 integers per criterion.
    fn score(&self, p: &ScoringPayload) -> Value {
        let ev = &p.pair.evidence;
        let (prec, dep) = ev.along(p.direction);
        let overlap = ev.name_overlap;
        let order_balance = 1.0 - (ev.precedence_ab - ev.precedence_ba).abs();
        let clamp01 = |x: f64| x.clamp(0.0, 1.0);
        let bucket = |x: f64| (5.0 * clamp01(x)).round() as u8;

        let value_of = |criterion: &str| -> u8 {
            match criterion {
                "predecessor_dependency" => bucket(prec * clamp01(dep / 0.4)),
                "correctness_dependency" => bucket(dep / 0.4),
                "answer_order_sequence" => bucket(prec),
                "cooccurrence_strength" => bucket(ev.cooccurrence as f64 / 10.0),
                "contextual_relatedness" => bucket(overlap + 0.4),
                "order_independence" => bucket(order_balance),
                "name_subsumption" => {
                    if containment_direction(&p.pair.a, &p.pair.b).is_some() {
                        5
                    } else {
                        0
                    }
                }
                "definition_coverage" => bucket(overlap),
                "scope_breadth_gap" => {
                    let gap = tokens_of(&p.pair.a).len().abs_diff(tokens_of(&p.pair.b).len());
                    bucket(gap as f64 / 2.0)
                }
                "name_identity" | "definition_identity" => bucket(overlap),
                "usage_interchangeability" => bucket(order_balance),
                "shared_parent" => {
                    let shared =
                        !p.pair.a.category.is_empty() && p.pair.a.category == p.pair.b.category;
                    if shared {
                        bucket(overlap / 0.5)
                    } else {
                        0
                    }
                }
                "no_direct_dependency" => {
                    bucket(1.0 - clamp01(ev.dependence_ab.max(ev.dependence_ba) / 0.4))
                }
                "parallel_usage" => bucket(order_balance),
                _ => 0,
            }
        };

        let mut scores = serde_json::Map::new();
        let mut explanations = serde_json::Map::new();
        for criterion in criteria_for(p.relation) {
            scores.insert(criterion.to_string(), json!(value_of(criterion)));
            explanations
                .insert(criterion.to_string(), json!(format!("bucketed from evidence: {criterion}")));
        }
        json!({ "scores": scores, "explanations": explanations })
    }

    /// The rule arbiter confirms the proposal; doubt flags and axiom checks
    /// are applied by the pipeline on top of this reply.
    fn arbitrate(&self, payload: &Value) -> Result<Value, AgentError> {
        let relation = payload
            .get("proposed_relation")
            .cloned()
            .ok_or_else(|| AgentError::Backend("arbitration payload missing proposal".into()))?;
        let direction = payload
            .get("proposed_direction")
            .cloned()
            .ok_or_else(|| AgentError::Backend("arbitration payload missing direction".into()))?;
        Ok(json!({
            "relation": relation,
            "direction": direction,
            "justification": "proposal consistent with scores and evidence",
        }))
    }

    fn vote(&self, persona: Persona, p: &VotePayload) -> Value {
        if p.round == 2 {
            // Re-vote with peer summaries: keep the prior vote when any
            // peer agrees; defer when the two peers agree with each other.
            let own = p
                .peer_votes
                .iter()
                .find(|v| v.persona == persona.as_str())
                .map(|v| (v.relation, v.direction));
            let others: Vec<(RelationType, Direction)> = p
                .peer_votes
                .iter()
                .filter(|v| v.persona != persona.as_str())
                .map(|v| (v.relation, v.direction))
                .collect();
            if let Some(own) = own {
                let any_agrees = others.iter().any(|o| *o == own);
                let peers_agree = others.len() == 2 && others[0] == others[1];
                let (relation, direction) = if any_agrees || !peers_agree {
                    own
                } else {
                    others[0]
                };
                return Self::relation_reply(relation, direction, "reassessed with peer summaries", "");
            }
            // No own round-1 vote on record: fall through to first-round logic.
        }
        let (relation, direction, why) = self.first_round_vote(persona, &p.pair);
        Self::relation_reply(relation, direction, why, "")
    }

    fn first_round_vote(
        &self,
        persona: Persona,
        pair: &PairPayload,
    ) -> (RelationType, Direction, &'static str) {
        let r = &self.rules;
        let ev = &pair.evidence;
        let overlap = ev.name_overlap;
        let shared_category = !pair.a.category.is_empty() && pair.a.category == pair.b.category;
        let ps_along = |prec: f64, dep: f64, min_dep: f64| {
            prec >= r.persona_precedence && dep >= min_dep
        };
        match persona {
            Persona::Teaching => {
                if ps_along(ev.precedence_ab, ev.dependence_ab, r.ps_dependence) {
                    (RelationType::PredecessorSuccessor, Direction::Forward, "curricular order")
                } else if ps_along(ev.precedence_ba, ev.dependence_ba, r.ps_dependence) {
                    (RelationType::PredecessorSuccessor, Direction::Backward, "curricular order")
                } else if let Some(dir) = containment_direction(&pair.a, &pair.b) {
                    if overlap >= r.containment_overlap {
                        (RelationType::Containment, dir, "hierarchical naming")
                    } else {
                        (RelationType::None, Direction::Undirected, "no curricular signal")
                    }
                } else if shared_category
                    && ev.precedence_ab.max(ev.precedence_ba) < r.persona_precedence
                {
                    (RelationType::Sibling, Direction::Undirected, "parallel units of one topic")
                } else {
                    (RelationType::None, Direction::Undirected, "no curricular signal")
                }
            }
            Persona::Structure => {
                if overlap >= r.equivalence_overlap {
                    (RelationType::Equivalence, Direction::Undirected, "interchangeable terms")
                } else if let Some(dir) = containment_direction(&pair.a, &pair.b) {
                    if overlap >= r.containment_overlap {
                        (RelationType::Containment, dir, "part-whole terminology")
                    } else {
                        (RelationType::None, Direction::Undirected, "no terminological link")
                    }
                } else if shared_category
                    && overlap >= r.sibling_overlap_lo
                    && overlap < r.sibling_overlap_hi
                {
                    (RelationType::Sibling, Direction::Undirected, "common parent terminology")
                } else {
                    (RelationType::None, Direction::Undirected, "no terminological link")
                }
            }
            Persona::Behavior => {
                if ps_along(ev.precedence_ab, ev.dependence_ab, r.persona_dependence) {
                    (RelationType::PredecessorSuccessor, Direction::Forward, "performance gating")
                } else if ps_along(ev.precedence_ba, ev.dependence_ba, r.persona_dependence) {
                    (RelationType::PredecessorSuccessor, Direction::Backward, "performance gating")
                } else if ev.cooccurrence >= r.assoc_min_cooccurrence
                    && (ev.precedence_ab - ev.precedence_ba).abs() < 0.3
                {
                    (RelationType::Association, Direction::Undirected, "co-occurrence without order")
                } else {
                    (RelationType::None, Direction::Undirected, "no behavioral signal")
                }
            }
        }
    }
}

fn tokens_of(p: &ConceptProfile) -> BTreeSet<String> {
    crate::agents::evidence::profile_tokens(p)
}

/// Forward when a's tokens strictly contain into b's (a is the general
/// whole, b the specific part), backward for the reverse, else no
/// containment signal. Token sets must differ strictly.
pub fn containment_direction(a: &ConceptProfile, b: &ConceptProfile) -> Option<Direction> {
    let (ta, tb) = (tokens_of(a), tokens_of(b));
    if ta.is_empty() || tb.is_empty() || ta == tb {
        return None;
    }
    if ta.is_subset(&tb) {
        Some(Direction::Forward)
    } else if tb.is_subset(&ta) {
        Some(Direction::Backward)
    } else {
        None
    }
}

impl AgentBackend for HeuristicBackend {
    fn respond(&self, req: &AgentRequest) -> Result<Value, AgentError> {
        let parse = |e: serde_json::Error| AgentError::Backend(format!("payload: {e}"));
        match req.task {
            TaskKind::Completion => {
                let payload: CompletionPayload =
                    serde_json::from_value(req.payload.clone()).map_err(parse)?;
                self.complete(&payload)
            }
            TaskKind::Proposal => {
                let payload: PairPayload =
                    serde_json::from_value(req.payload.clone()).map_err(parse)?;
                Ok(self.propose(&payload))
            }
            TaskKind::Scoring => {
                let payload: ScoringPayload =
                    serde_json::from_value(req.payload.clone()).map_err(parse)?;
                Ok(self.score(&payload))
            }
            TaskKind::Arbitration => self.arbitrate(req.payload),
            TaskKind::Vote => {
                let payload: VotePayload =
                    serde_json::from_value(req.payload.clone()).map_err(parse)?;
                let persona = match req.role {
                    crate::agents::AgentRole::Persona(p) => p,
                    _ => return Err(AgentError::Backend("vote task requires a persona".into())),
                };
                Ok(self.vote(persona, &payload))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::schema::parse_relation_response;

    fn profile(id: &str, name: &str, category: &str) -> ConceptProfile {
        let standardized = standardize_name(name);
        ConceptProfile {
            kc_id: id.to_string(),
            name: standardized.clone(),
            definition: format!("{standardized}: {category} concept"),
            category: category.to_string(),
        }
    }

    fn evidence(cooccur: u64, overlap: f64, pab: f64, pba: f64, dab: f64, dba: f64) -> EvidenceSummary {
        EvidenceSummary {
            cooccurrence: cooccur,
            name_overlap: overlap,
            precedence_ab: pab,
            precedence_ba: pba,
            dependence_ab: dab,
            dependence_ba: dba,
        }
    }

    fn propose(pair: PairPayload) -> (RelationType, Direction) {
        let backend = HeuristicBackend::new();
        let reply = backend.propose(&pair);
        let parsed = parse_relation_response(&reply).unwrap();
        (parsed.relation, parsed.direction)
    }

    #[test]
    fn abbreviations_expand_during_standardization() {
        assert_eq!(standardize_name("Fractions LCD"), "fractions least common denominator");
        assert_eq!(standardize_name("perimeter eq"), "perimeter equation");
    }

    #[test]
    fn high_overlap_proposes_equivalence() {
        let a = profile("a", "fractions lcd", "fractions");
        let b = profile("b", "fractions least common denominator", "fractions");
        let ev = evidence(20, crate::agents::evidence::name_overlap(&a, &b), 0.5, 0.5, 0.0, 0.0);
        assert!(ev.name_overlap >= 0.8, "overlap {}", ev.name_overlap);
        let (rel, _) = propose(PairPayload { a, b, evidence: ev });
        assert_eq!(rel, RelationType::Equivalence);
    }

    #[test]
    fn ordering_with_dependence_proposes_prerequisite() {
        let a = profile("a", "algebra foundations", "algebra");
        let b = profile("b", "algebra expressions", "algebra");
        let ev = evidence(20, 1.0 / 3.0, 0.95, 0.0, 0.6, 0.0);
        let (rel, dir) = propose(PairPayload { a, b, evidence: ev });
        assert_eq!(rel, RelationType::PredecessorSuccessor);
        assert_eq!(dir, Direction::Forward);
    }

    #[test]
    fn no_evidence_proposes_none() {
        let a = profile("a", "roman numerals", "roman");
        let b = profile("b", "logic puzzles", "logic");
        let ev = evidence(0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (rel, _) = propose(PairPayload { a, b, evidence: ev });
        assert_eq!(rel, RelationType::None);
    }

    #[test]
    fn strict_token_containment_proposes_containment() {
        let a = profile("a", "decimals operations", "decimals");
        let b = profile("b", "decimals operations rounding", "decimals");
        let ev = evidence(20, crate::agents::evidence::name_overlap(&a, &b), 0.5, 0.5, 0.0, 0.0);
        let (rel, dir) = propose(PairPayload { a, b, evidence: ev });
        assert_eq!(rel, RelationType::Containment);
        assert_eq!(dir, Direction::Forward);
    }

    #[test]
    fn weak_order_pair_is_misread_as_sibling() {
        // The cross-correction test case: order too weak for the proposal
        // rule, strong dependence; personas later overturn this.
        let a = profile("a", "measurement units", "measurement");
        let b = profile("b", "measurement conversion", "measurement");
        let ev = evidence(26, 1.0 / 3.0, 0.615, 0.385, 0.7, 0.0);
        let (rel, _) = propose(PairPayload { a, b, evidence: ev });
        assert_eq!(rel, RelationType::Sibling);
    }

    #[test]
    fn full_precedence_scores_order_criterion_five() {
        let backend = HeuristicBackend::new();
        let a = profile("a", "x primer", "x");
        let b = profile("b", "x sequel", "x");
        let payload = ScoringPayload {
            pair: PairPayload { a, b, evidence: evidence(10, 0.33, 1.0, 0.0, 0.5, 0.0) },
            relation: RelationType::PredecessorSuccessor,
            direction: Direction::Forward,
            criteria: criteria_for(RelationType::PredecessorSuccessor)
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        let reply = backend.score(&payload);
        let parsed = crate::agents::schema::parse_scores(&reply, RelationType::PredecessorSuccessor)
            .unwrap();
        assert_eq!(parsed.scores["answer_order_sequence"], 5);
    }
}
