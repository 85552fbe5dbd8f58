//! Versioned prompt templates for the live chat backend.

use crate::agents::{AgentRole, TaskKind};

const COMPLETION: &str = include_str!("../../prompts/completion_v1.txt");
const PROPOSAL: &str = include_str!("../../prompts/proposal_v1.txt");
const SCORING: &str = include_str!("../../prompts/scoring_v1.txt");
const ARBITRATION: &str = include_str!("../../prompts/arbitration_v1.txt");
const VOTE: &str = include_str!("../../prompts/vote_v1.txt");

fn template_for(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Completion => COMPLETION,
        TaskKind::Proposal => PROPOSAL,
        TaskKind::Scoring => SCORING,
        TaskKind::Arbitration => ARBITRATION,
        TaskKind::Vote => VOTE,
    }
}

/// JSON shape hint appended to every prompt; the schemas match
/// `agents::schema` validation exactly.
fn schema_hint(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Completion => r#"{"name": "<standardized name>", "definition": "<one-sentence definition>", "category": "<topic area>"}"#,
        TaskKind::Proposal | TaskKind::Arbitration | TaskKind::Vote => r#"{"relation": "association|containment|equivalence|sibling|predecessor_successor|none", "direction": "forward|backward|undirected", "justification": "<short text>", "evidence_excerpts": "<short text>"}"#,
        TaskKind::Scoring => r#"{"scores": {"<criterion>": 0-5 integer, ...exactly the listed criteria...}, "explanations": {"<criterion>": "<short text>"}}"#,
    }
}

/// Render the prompt for one request. `{payload}`, `{schema}`, `{persona}`,
/// and `{round}` are the only placeholders.
pub fn render(role: &AgentRole, task: TaskKind, payload_json: &str, round: Option<u8>) -> String {
    let persona = match role {
        AgentRole::Persona(p) => p.as_str(),
        _ => "",
    };
    template_for(task)
        .replace("{payload}", payload_json)
        .replace("{schema}", schema_hint(task))
        .replace("{persona}", persona)
        .replace("{round}", &round.map(|r| r.to_string()).unwrap_or_default())
}
