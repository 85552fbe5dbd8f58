//! Task payloads and response schemas shared by every backend.
//!
//! Both the deterministic rule backend and the live chat backend receive
//! the same JSON payloads and must produce responses that validate against
//! the same schemas, so the pipeline is backend-agnostic and every schema
//! path is exercised offline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::evidence::PairEvidence;
use crate::model::{ConceptProfile, RelationType};

/// Orientation of a decided relation over the canonical (a, b) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// a -> b
    Forward,
    /// b -> a
    Backward,
    Undirected,
}

/// Criteria scored per relation type, in fixed order.
pub fn criteria_for(relation: RelationType) -> &'static [&'static str] {
    match relation {
        RelationType::PredecessorSuccessor => {
            &["predecessor_dependency", "correctness_dependency", "answer_order_sequence"]
        }
        RelationType::Association => {
            &["cooccurrence_strength", "contextual_relatedness", "order_independence"]
        }
        RelationType::Containment => {
            &["name_subsumption", "definition_coverage", "scope_breadth_gap"]
        }
        RelationType::Equivalence => {
            &["name_identity", "definition_identity", "usage_interchangeability"]
        }
        RelationType::Sibling => &["shared_parent", "no_direct_dependency", "parallel_usage"],
        RelationType::None => &[],
    }
}

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionPayload {
    pub kc_id: String,
    pub name: String,
}

/// Evidence for both orientations of the canonical (a, b) pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub cooccurrence: u64,
    pub name_overlap: f64,
    pub precedence_ab: f64,
    pub precedence_ba: f64,
    pub dependence_ab: f64,
    pub dependence_ba: f64,
}

impl EvidenceSummary {
    pub fn from_directed(forward: &PairEvidence, backward: &PairEvidence) -> Self {
        EvidenceSummary {
            cooccurrence: forward.cooccurrence,
            name_overlap: forward.name_overlap,
            precedence_ab: forward.precedence_prob,
            precedence_ba: backward.precedence_prob,
            dependence_ab: forward.dependence,
            dependence_ba: backward.dependence,
        }
    }

    /// Evidence as seen along one orientation.
    pub fn along(&self, direction: Direction) -> (f64, f64) {
        match direction {
            Direction::Backward => (self.precedence_ba, self.dependence_ba),
            _ => (self.precedence_ab, self.dependence_ab),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairPayload {
    pub a: ConceptProfile,
    pub b: ConceptProfile,
    pub evidence: EvidenceSummary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoringPayload {
    pub pair: PairPayload,
    pub relation: RelationType,
    pub direction: Direction,
    pub criteria: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArbitrationPayload {
    pub pair: PairPayload,
    pub proposed_relation: RelationType,
    pub proposed_direction: Direction,
    pub justification: String,
    pub scores: BTreeMap<String, u8>,
    pub mean_score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeerVote {
    pub persona: String,
    pub relation: RelationType,
    pub direction: Direction,
    pub rationale: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VotePayload {
    pub pair: PairPayload,
    pub round: u8,
    pub prior_relation: RelationType,
    pub prior_direction: Direction,
    pub scores: BTreeMap<String, u8>,
    /// Peer summaries, present only in round 2.
    pub peer_votes: Vec<PeerVote>,
}

// ---------------------------------------------------------------------------
// Responses and validation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Standardized (expanded) concept name.
    pub name: String,
    pub definition: String,
    pub category: String,
}

/// Shared shape for proposal, arbitration, and persona-vote replies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationResponse {
    pub relation: RelationType,
    pub direction: Direction,
    #[serde(default)]
    pub justification: String,
    #[serde(default)]
    pub evidence_excerpts: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: BTreeMap<String, u8>,
    #[serde(default)]
    pub explanations: BTreeMap<String, String>,
}

pub fn parse_completion(v: &Value) -> Result<CompletionResponse, String> {
    let resp: CompletionResponse =
        serde_json::from_value(v.clone()).map_err(|e| format!("completion schema: {e}"))?;
    if resp.name.trim().is_empty() {
        return Err("completion schema: empty standardized name".into());
    }
    if resp.definition.trim().is_empty() {
        return Err("completion schema: empty definition".into());
    }
    Ok(resp)
}

/// Parse and normalize a relation reply: undirected relations collapse any
/// direction to `Undirected`; directed relations must be oriented.
pub fn parse_relation_response(v: &Value) -> Result<RelationResponse, String> {
    let mut resp: RelationResponse =
        serde_json::from_value(v.clone()).map_err(|e| format!("relation schema: {e}"))?;
    if resp.relation.is_directed() {
        if resp.direction == Direction::Undirected {
            return Err(format!("relation schema: {} requires an orientation", resp.relation));
        }
    } else {
        resp.direction = Direction::Undirected;
    }
    Ok(resp)
}

pub fn parse_scores(v: &Value, relation: RelationType) -> Result<ScoreResponse, String> {
    let raw: Value = v.clone();
    let obj = raw.as_object().ok_or("score schema: not an object")?;
    let scores_val = obj.get("scores").ok_or("score schema: missing `scores`")?;
    let scores_obj = scores_val.as_object().ok_or("score schema: `scores` not an object")?;

    let expected = criteria_for(relation);
    let mut scores = BTreeMap::new();
    for &criterion in expected {
        let raw_score = scores_obj
            .get(criterion)
            .ok_or_else(|| format!("score schema: missing criterion {criterion:?}"))?;
        let as_int = raw_score
            .as_i64()
            .ok_or_else(|| format!("score schema: {criterion} must be an integer"))?;
        if !(0..=5).contains(&as_int) {
            return Err(format!("score schema: {criterion} = {as_int} outside 0..=5"));
        }
        scores.insert(criterion.to_string(), as_int as u8);
    }
    if scores_obj.len() != expected.len() {
        return Err(format!(
            "score schema: expected exactly {} criteria, got {}",
            expected.len(),
            scores_obj.len()
        ));
    }

    let explanations = obj
        .get("explanations")
        .and_then(|e| e.as_object())
        .map(|m| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
                .collect()
        })
        .unwrap_or_default();
    Ok(ScoreResponse { scores, explanations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn scores_must_cover_exact_criteria() {
        let v = json!({"scores": {
            "predecessor_dependency": 4,
            "correctness_dependency": 5,
            "answer_order_sequence": 3
        }});
        let parsed = parse_scores(&v, RelationType::PredecessorSuccessor).unwrap();
        assert_eq!(parsed.scores.len(), 3);
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let v = json!({"scores": {
            "predecessor_dependency": 7,
            "correctness_dependency": 5,
            "answer_order_sequence": 3
        }});
        let err = parse_scores(&v, RelationType::PredecessorSuccessor).unwrap_err();
        assert!(err.contains("outside"));
    }

    #[test]
    fn missing_criterion_is_rejected() {
        let v = json!({"scores": {"predecessor_dependency": 4}});
        assert!(parse_scores(&v, RelationType::PredecessorSuccessor).is_err());
    }

    #[test]
    fn undirected_relation_normalizes_direction() {
        let v = json!({"relation": "sibling", "direction": "forward", "justification": "x"});
        let r = parse_relation_response(&v).unwrap();
        assert_eq!(r.direction, Direction::Undirected);
    }

    #[test]
    fn directed_relation_requires_orientation() {
        let v = json!({"relation": "containment", "direction": "undirected"});
        assert!(parse_relation_response(&v).is_err());
    }

    #[test]
    fn completion_requires_nonempty_definition() {
        let v = json!({"name": "x", "definition": "", "category": "c"});
        assert!(parse_completion(&v).is_err());
    }
}
