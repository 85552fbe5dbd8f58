//! Behavioral and lexical evidence for concept pairs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{ConceptProfile, InteractionLog};

/// Filler vocabulary excluded from token-set comparisons, including the
/// fixed words of the completion template.
const STOPWORDS: &[&str] =
    &["a", "an", "and", "the", "of", "in", "on", "for", "to", "with", "concept", "skill"];

pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(str::to_string)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// Tokens of a profile: standardized name plus definition.
pub fn profile_tokens(p: &ConceptProfile) -> BTreeSet<String> {
    let mut t = tokenize(&p.name);
    t.extend(tokenize(&p.definition));
    t
}

/// Token-set Jaccard over names + definitions.
pub fn name_overlap(a: &ConceptProfile, b: &ConceptProfile) -> f64 {
    jaccard(&profile_tokens(a), &profile_tokens(b))
}

/// Evidence for the ordered pair (A, B).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEvidence {
    /// Students who attempted both concepts at least once.
    pub cooccurrence: u64,
    /// Fraction of co-attempting students whose first A strictly precedes
    /// their first B. precedence(A,B) + precedence(B,A) <= 1; a shared
    /// first interaction counts toward neither.
    pub precedence_prob: f64,
    /// P(correct on B | some earlier A answered correctly) minus
    /// P(correct on B | A attempted earlier but never correctly), over all
    /// B attempts with at least one prior A attempt. Zero when either
    /// group is empty.
    pub dependence: f64,
    /// Token-set Jaccard of names + definitions.
    pub name_overlap: f64,
}

/// Per-student positions and outcomes, precomputed once per log so pair
/// evidence is O(students) per query.
pub struct EvidenceIndex {
    students: Vec<StudentEvidence>,
}

struct StudentEvidence {
    first_pos: BTreeMap<String, usize>,
    attempts: BTreeMap<String, Vec<(usize, bool)>>,
}

impl EvidenceIndex {
    pub fn new(log: &InteractionLog) -> Self {
        let mut students = Vec::new();
        for (_, seq) in log.student_sequences() {
            let mut first_pos = BTreeMap::new();
            let mut attempts: BTreeMap<String, Vec<(usize, bool)>> = BTreeMap::new();
            for (pos, rec) in seq.iter().enumerate() {
                for kc in &rec.kc_ids {
                    first_pos.entry(kc.clone()).or_insert(pos);
                    attempts.entry(kc.clone()).or_default().push((pos, rec.correct));
                }
            }
            students.push(StudentEvidence { first_pos, attempts });
        }
        EvidenceIndex { students }
    }

    /// Behavioral evidence for ordered (a, b); the lexical part comes from
    /// the profiles.
    pub fn evidence(&self, a: &ConceptProfile, b: &ConceptProfile) -> PairEvidence {
        assert_ne!(a.kc_id, b.kc_id, "pair evidence requires distinct concepts");
        let mut cooccurrence = 0u64;
        let mut a_first = 0u64;

        let mut with_prior_correct: Vec<bool> = Vec::new();
        let mut without_prior_correct: Vec<bool> = Vec::new();

        for st in &self.students {
            let (fa, fb) = (st.first_pos.get(&a.kc_id), st.first_pos.get(&b.kc_id));
            if let (Some(&fa), Some(&fb)) = (fa, fb) {
                cooccurrence += 1;
                if fa < fb {
                    a_first += 1;
                }
            }
            let Some(b_attempts) = st.attempts.get(&b.kc_id) else { continue };
            let Some(a_attempts) = st.attempts.get(&a.kc_id) else { continue };
            for &(pos, correct) in b_attempts {
                let priors: Vec<bool> = a_attempts
                    .iter()
                    .filter(|&&(apos, _)| apos < pos)
                    .map(|&(_, ac)| ac)
                    .collect();
                if priors.is_empty() {
                    continue;
                }
                if priors.iter().any(|&c| c) {
                    with_prior_correct.push(correct);
                } else {
                    without_prior_correct.push(correct);
                }
            }
        }

        let precedence_prob =
            if cooccurrence > 0 { a_first as f64 / cooccurrence as f64 } else { 0.0 };
        let dependence = if with_prior_correct.is_empty() || without_prior_correct.is_empty() {
            0.0
        } else {
            let rate = |v: &[bool]| v.iter().filter(|&&c| c).count() as f64 / v.len() as f64;
            rate(&with_prior_correct) - rate(&without_prior_correct)
        };

        PairEvidence {
            cooccurrence,
            precedence_prob,
            dependence,
            name_overlap: name_overlap(a, b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Interaction;
    use proptest::prelude::*;

    fn profile(id: &str, name: &str) -> ConceptProfile {
        ConceptProfile {
            kc_id: id.to_string(),
            name: name.to_string(),
            definition: name.to_string(),
            category: String::new(),
        }
    }

    fn rec(s: &str, kc: &str, correct: bool, ts: f64) -> Interaction {
        Interaction {
            student_id: s.to_string(),
            question_id: format!("{kc}-{ts}"),
            kc_ids: std::iter::once(kc.to_string()).collect(),
            correct,
            timestamp: ts,
        }
    }

    #[test]
    fn never_coattempted_pair_has_empty_evidence() {
        let log = InteractionLog::new(vec![rec("s1", "a", true, 0.0), rec("s2", "b", true, 0.0)]);
        let idx = EvidenceIndex::new(&log);
        let ev = idx.evidence(&profile("a", "alpha topic"), &profile("b", "beta topic"));
        assert_eq!(ev.cooccurrence, 0);
        assert_eq!(ev.precedence_prob, 0.0);
        assert_eq!(ev.dependence, 0.0);
    }

    #[test]
    fn unanimous_ordering_gives_precedence_one() {
        // 3 students all see a before b.
        let mut recs = Vec::new();
        for s in ["s1", "s2", "s3"] {
            recs.push(rec(s, "a", true, 0.0));
            recs.push(rec(s, "b", true, 1.0));
        }
        let log = InteractionLog::new(recs);
        let idx = EvidenceIndex::new(&log);
        let ab = idx.evidence(&profile("a", "x"), &profile("b", "y"));
        let ba = idx.evidence(&profile("b", "y"), &profile("a", "x"));
        assert_eq!(ab.precedence_prob, 1.0);
        assert_eq!(ba.precedence_prob, 0.0);
    }

    #[test]
    fn dependence_sign_flips_with_inverted_outcomes() {
        // Students with a correct first concept succeed on the second;
        // mirror log flips the second concept's outcomes.
        let mut recs = Vec::new();
        for (i, s) in ["s1", "s2", "s3", "s4"].iter().enumerate() {
            let mastered = i % 2 == 0;
            recs.push(rec(s, "a", mastered, 0.0));
            recs.push(rec(s, "b", mastered, 1.0));
        }
        let log = InteractionLog::new(recs.clone());
        let mirrored = InteractionLog::new(
            recs.into_iter()
                .map(|mut r| {
                    if r.kc_ids.contains("b") {
                        r.correct = !r.correct;
                    }
                    r
                })
                .collect(),
        );
        let (a, b) = (profile("a", "x"), profile("b", "y"));
        let dep = EvidenceIndex::new(&log).evidence(&a, &b).dependence;
        let dep_mirror = EvidenceIndex::new(&mirrored).evidence(&a, &b).dependence;
        assert!(dep > 0.0);
        assert!((dep + dep_mirror).abs() < 1e-12, "{dep} vs {dep_mirror}");
    }

    #[test]
    fn shared_interaction_counts_toward_neither_order() {
        // One record tagged with both concepts: equal first positions.
        let log = InteractionLog::new(vec![Interaction {
            student_id: "s1".into(),
            question_id: "q".into(),
            kc_ids: ["a", "b"].iter().map(|k| k.to_string()).collect(),
            correct: true,
            timestamp: 0.0,
        }]);
        let idx = EvidenceIndex::new(&log);
        let ab = idx.evidence(&profile("a", "x"), &profile("b", "y"));
        let ba = idx.evidence(&profile("b", "y"), &profile("a", "x"));
        assert_eq!(ab.cooccurrence, 1);
        assert_eq!(ab.precedence_prob, 0.0);
        assert_eq!(ba.precedence_prob, 0.0);
    }

    #[test]
    fn overlap_is_token_set_jaccard() {
        let a = profile("a", "linear equations");
        let b = profile("b", "equations quadratic");
        // Tokens {linear, equations} vs {equations, quadratic}: 1/3.
        assert!((name_overlap(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn precedence_probs_sum_to_at_most_one(orders in proptest::collection::vec(0u8..3, 1..40)) {
            // Each student's layout: 0 = a first, 1 = b first, 2 = same record.
            let mut recs = Vec::new();
            for (i, o) in orders.iter().enumerate() {
                let s = format!("s{i}");
                match o {
                    0 => {
                        recs.push(rec(&s, "a", true, 0.0));
                        recs.push(rec(&s, "b", true, 1.0));
                    }
                    1 => {
                        recs.push(rec(&s, "b", true, 0.0));
                        recs.push(rec(&s, "a", true, 1.0));
                    }
                    _ => recs.push(Interaction {
                        student_id: s,
                        question_id: "q".into(),
                        kc_ids: ["a", "b"].iter().map(|k| k.to_string()).collect(),
                        correct: true,
                        timestamp: 0.0,
                    }),
                }
            }
            let log = InteractionLog::new(recs);
            let idx = EvidenceIndex::new(&log);
            let (a, b) = (profile("a", "x"), profile("b", "y"));
            let fwd = idx.evidence(&a, &b).precedence_prob;
            let bwd = idx.evidence(&b, &a).precedence_prob;
            prop_assert!(fwd + bwd <= 1.0 + 1e-12);
        }
    }
}
