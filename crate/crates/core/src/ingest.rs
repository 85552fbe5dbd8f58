//! Dataset parsing, filtering, student-level splits, and windowing.
//!
//! Input is delimiter-separated text with a header row; the column mapping
//! is configurable so heterogeneous dataset exports can be consumed without
//! reshaping. Rows with missing mapped fields are dropped and counted, not
//! failed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Interaction, InteractionLog};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header is missing mapped column {0:?}")]
    MissingColumn(String),
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("cannot split {have} students into 3 non-empty groups")]
    TooFewStudents { have: usize },
}

/// Maps logical fields to header column names.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub student: String,
    pub question: String,
    pub kcs: String,
    pub correct: String,
    pub timestamp: String,
    /// Separator for multi-concept cells, e.g. "a;b".
    #[serde(default = "default_kc_delimiter")]
    pub kc_delimiter: String,
}

fn default_kc_delimiter() -> String {
    ";".to_string()
}

/// Student-level split ratios plus the shuffle seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_ratio: 0.8, val_ratio: 0.1, test_ratio: 0.1, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        let ratios = [self.train_ratio, self.val_ratio, self.test_ratio];
        if ratios.iter().any(|r| *r <= 0.0) {
            return Err(IngestError::InvalidSplitSpec("ratios must be positive".into()));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(IngestError::InvalidSplitSpec(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// One training window item; the timestamp is no longer needed once the
/// per-student order is frozen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowItem {
    pub question_id: String,
    pub kc_ids: BTreeSet<String>,
    pub correct: bool,
}

/// A fixed-length, non-overlapping slice of one student's sequence.
/// Always at least 2 items long so there is something to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub student_id: String,
    pub items: Vec<WindowItem>,
}

/// Parse result with drop accounting.
#[derive(Debug)]
pub struct ParseOutcome {
    pub log: InteractionLog,
    pub rows_total: usize,
    pub rows_dropped: usize,
}

/// Parse a delimiter-separated stream into a log.
///
/// A row is dropped (and counted) when any mapped field is missing or
/// unparseable: empty cells, correctness not exactly 0 or 1, non-finite
/// timestamps, or a concept cell that yields no tokens.
pub fn parse_interaction_csv<R: Read>(
    source: R,
    schema: &ColumnSchema,
) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let c_student = col(&schema.student)?;
    let c_question = col(&schema.question)?;
    let c_kcs = col(&schema.kcs)?;
    let c_correct = col(&schema.correct)?;
    let c_timestamp = col(&schema.timestamp)?;

    let mut records = Vec::new();
    let mut rows_total = 0usize;
    let mut rows_dropped = 0usize;

    for row in reader.records() {
        let row = row?;
        rows_total += 1;
        let field = |idx: usize| row.get(idx).map(str::trim).filter(|s| !s.is_empty());

        let parsed = (|| {
            let student_id = field(c_student)?.to_string();
            let question_id = field(c_question)?.to_string();
            let correct = match field(c_correct)?.parse::<f64>().ok()? {
                v if v == 0.0 => false,
                v if v == 1.0 => true,
                _ => return None,
            };
            let timestamp = field(c_timestamp)?.parse::<f64>().ok().filter(|t| t.is_finite())?;
            let kc_ids: BTreeSet<String> = field(c_kcs)?
                .split(schema.kc_delimiter.as_str())
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            if kc_ids.is_empty() {
                return None;
            }
            Some(Interaction { student_id, question_id, kc_ids, correct, timestamp })
        })();

        match parsed {
            Some(rec) => records.push(rec),
            None => rows_dropped += 1,
        }
    }

    Ok(ParseOutcome { log: InteractionLog::new(records), rows_total, rows_dropped })
}

/// Alternately drop students with fewer than `min_student` attempts and
/// questions answered fewer than `min_question` times, until both
/// thresholds hold simultaneously. May return an empty log.
pub fn filter_log(log: &InteractionLog, min_student: usize, min_question: usize) -> InteractionLog {
    assert!(min_student >= 1 && min_question >= 1, "filter thresholds must be >= 1");
    let mut records: Vec<Interaction> = log.records().to_vec();
    loop {
        let mut changed = false;

        let mut per_student: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *per_student.entry(r.student_id.as_str()).or_default() += 1;
        }
        let keep_students: BTreeSet<String> = per_student
            .iter()
            .filter(|(_, &n)| n >= min_student)
            .map(|(s, _)| s.to_string())
            .collect();
        if keep_students.len() != per_student.len() {
            records.retain(|r| keep_students.contains(&r.student_id));
            changed = true;
        }

        let mut per_question: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *per_question.entry(r.question_id.as_str()).or_default() += 1;
        }
        let keep_questions: BTreeSet<String> = per_question
            .iter()
            .filter(|(_, &n)| n >= min_question)
            .map(|(q, _)| q.to_string())
            .collect();
        if keep_questions.len() != per_question.len() {
            records.retain(|r| keep_questions.contains(&r.question_id));
            changed = true;
        }

        if !changed {
            break;
        }
    }
    InteractionLog::from_raw(records)
}

/// Assign each student wholly to train, val, or test. The assignment is a
/// deterministic function of the seed: students are sorted, shuffled with a
/// ChaCha stream, and cut at cumulative-rounded boundaries (sizes match the
/// ratios within one student).
pub fn split_students(
    log: &InteractionLog,
    spec: &SplitSpec,
) -> Result<(InteractionLog, InteractionLog, InteractionLog), IngestError> {
    spec.validate()?;
    let mut students: Vec<&str> = log.student_ids().into_iter().collect();
    if students.len() < 3 {
        return Err(IngestError::TooFewStudents { have: students.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    students.shuffle(&mut rng);

    let n = students.len() as f64;
    let cut1 = (spec.train_ratio * n).round() as usize;
    let cut2 = ((spec.train_ratio + spec.val_ratio) * n).round() as usize;
    let cut1 = cut1.clamp(1, students.len() - 2);
    let cut2 = cut2.clamp(cut1 + 1, students.len() - 1);

    let train_set: BTreeSet<&str> = students[..cut1].iter().copied().collect();
    let val_set: BTreeSet<&str> = students[cut1..cut2].iter().copied().collect();

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for rec in log.records() {
        if train_set.contains(rec.student_id.as_str()) {
            train.push(rec.clone());
        } else if val_set.contains(rec.student_id.as_str()) {
            val.push(rec.clone());
        } else {
            test.push(rec.clone());
        }
    }
    Ok((
        InteractionLog::from_raw(train),
        InteractionLog::from_raw(val),
        InteractionLog::from_raw(test),
    ))
}

/// Cut each student's sequence into consecutive non-overlapping chunks of
/// length `w`. A trailing chunk shorter than 2 has nothing to predict and
/// is dropped.
pub fn window_sequences(log: &InteractionLog, w: usize) -> Vec<Window> {
    assert!(w >= 2, "window length must be >= 2");
    let mut windows = Vec::new();
    for (student, seq) in log.student_sequences() {
        for chunk in seq.chunks(w) {
            if chunk.len() < 2 {
                continue;
            }
            windows.push(Window {
                student_id: student.to_string(),
                items: chunk
                    .iter()
                    .map(|rec| WindowItem {
                        question_id: rec.question_id.clone(),
                        kc_ids: rec.kc_ids.clone(),
                        correct: rec.correct,
                    })
                    .collect(),
            });
        }
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_log;

    const CSV_OK: &str = "\
user,item,skills,score,time
s1,q1,a,1,100
s1,q2,a;b,0,101
s2,q1,b,1,50
s2,q3,c,0,60
s3,q2,a,1,70
";

    fn schema() -> ColumnSchema {
        ColumnSchema {
            student: "user".into(),
            question: "item".into(),
            kcs: "skills".into(),
            correct: "score".into(),
            timestamp: "time".into(),
            kc_delimiter: ";".into(),
        }
    }

    fn rec(s: &str, q: &str, ts: f64) -> Interaction {
        Interaction {
            student_id: s.into(),
            question_id: q.into(),
            kc_ids: ["k"].iter().map(|x| x.to_string()).collect(),
            correct: true,
            timestamp: ts,
        }
    }

    #[test]
    fn parses_complete_rows() {
        let out = parse_interaction_csv(CSV_OK.as_bytes(), &schema()).unwrap();
        assert_eq!(out.log.len(), 5);
        assert_eq!(out.rows_dropped, 0);
        assert!(validate_log(&out.log).is_empty());
    }

    #[test]
    fn drops_and_counts_missing_correctness() {
        let csv = "\
user,item,skills,score,time
s1,q1,a,1,1
s1,q2,a,,2
s1,q3,a,0,3
s1,q4,a,,4
s1,q5,a,1,5
";
        let out = parse_interaction_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.log.len(), 3);
        assert_eq!(out.rows_dropped, 2);
        assert_eq!(out.rows_total, 5);
    }

    #[test]
    fn splits_kc_cell_on_delimiter() {
        let out = parse_interaction_csv(CSV_OK.as_bytes(), &schema()).unwrap();
        let multi = out
            .log
            .records()
            .iter()
            .find(|r| r.question_id == "q2" && r.student_id == "s1")
            .unwrap();
        let kcs: Vec<&str> = multi.kc_ids.iter().map(String::as_str).collect();
        assert_eq!(kcs, ["a", "b"]);
    }

    #[test]
    fn missing_mapped_column_is_an_error() {
        let csv = "user,item,score,time\ns1,q1,1,1\n";
        let err = parse_interaction_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "skills"));
    }

    #[test]
    fn filter_keeps_satisfying_log_unchanged() {
        let recs: Vec<Interaction> = (0..3)
            .flat_map(|s| (0..3).map(move |q| rec(&format!("s{s}"), &format!("q{q}"), q as f64)))
            .collect();
        let log = InteractionLog::new(recs);
        let filtered = filter_log(&log, 3, 3);
        assert_eq!(filtered.len(), log.len());
    }

    #[test]
    fn filter_removes_thin_student() {
        let mut recs = Vec::new();
        for s in ["s1", "s2", "s3"] {
            for q in 0..3 {
                recs.push(rec(s, &format!("q{q}"), q as f64));
            }
        }
        recs.push(rec("thin", "q0", 9.0)); // 1 attempt < 3
        let log = InteractionLog::new(recs);
        let filtered = filter_log(&log, 3, 3);
        assert!(!filtered.student_ids().contains("thin"));
        assert_eq!(filtered.student_ids().len(), 3);
    }

    /// Independent fixpoint oracle: repeatedly recompute both count maps
    /// from scratch and drop violators, in a deliberately different style.
    fn filter_oracle(
        log: &InteractionLog,
        min_s: usize,
        min_q: usize,
    ) -> Vec<(String, String, u64)> {
        let mut keep: Vec<&Interaction> = log.records().iter().collect();
        loop {
            let mut sc: BTreeMap<&str, usize> = BTreeMap::new();
            let mut qc: BTreeMap<&str, usize> = BTreeMap::new();
            for r in &keep {
                *sc.entry(&r.student_id).or_default() += 1;
                *qc.entry(&r.question_id).or_default() += 1;
            }
            let next: Vec<&Interaction> = keep
                .iter()
                .copied()
                .filter(|r| sc[r.student_id.as_str()] >= min_s && qc[r.question_id.as_str()] >= min_q)
                .collect();
            if next.len() == keep.len() {
                break;
            }
            keep = next;
        }
        keep.iter()
            .map(|r| (r.student_id.clone(), r.question_id.clone(), r.timestamp as u64))
            .collect()
    }

    #[test]
    fn filter_cascade_matches_bruteforce_fixpoint() {
        // Removing q3 (one answer) starves s3, whose removal must not
        // disturb the rest.
        let recs = vec![
            rec("s1", "q1", 1.0),
            rec("s1", "q2", 2.0),
            rec("s2", "q1", 3.0),
            rec("s2", "q2", 4.0),
            rec("s3", "q1", 5.0),
            rec("s3", "q3", 6.0),
        ];
        let log = InteractionLog::new(recs);
        let ours = filter_log(&log, 2, 2);
        let oracle = filter_oracle(&log, 2, 2);
        let got: Vec<(String, String, u64)> = ours
            .records()
            .iter()
            .map(|r| (r.student_id.clone(), r.question_id.clone(), r.timestamp as u64))
            .collect();
        assert_eq!(got, oracle);
        assert!(!ours.student_ids().contains("s3"));
        assert!(!ours.question_ids().contains("q3"));
    }

    #[test]
    fn filter_is_idempotent() {
        let recs = vec![
            rec("s1", "q1", 1.0),
            rec("s1", "q2", 2.0),
            rec("s2", "q1", 3.0),
            rec("s2", "q2", 4.0),
            rec("s3", "q3", 5.0),
        ];
        let log = InteractionLog::new(recs);
        let once = filter_log(&log, 2, 2);
        let twice = filter_log(&once, 2, 2);
        assert_eq!(once.records(), twice.records());
    }

    fn ten_student_log() -> InteractionLog {
        let mut recs = Vec::new();
        for s in 0..10 {
            for q in 0..2 {
                recs.push(rec(&format!("s{s}"), &format!("q{q}"), (s * 2 + q) as f64));
            }
        }
        InteractionLog::new(recs)
    }

    #[test]
    fn ten_students_split_8_1_1() {
        let spec = SplitSpec { seed: 3, ..SplitSpec::default() };
        let (tr, va, te) = split_students(&ten_student_log(), &spec).unwrap();
        assert_eq!(tr.student_ids().len(), 8);
        assert_eq!(va.student_ids().len(), 1);
        assert_eq!(te.student_ids().len(), 1);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let log = ten_student_log();
        let spec = SplitSpec { seed: 42, ..SplitSpec::default() };
        let (a1, b1, c1) = split_students(&log, &spec).unwrap();
        let (a2, b2, c2) = split_students(&log, &spec).unwrap();
        assert_eq!(a1.records(), a2.records());
        assert_eq!(b1.records(), b2.records());
        assert_eq!(c1.records(), c2.records());
    }

    #[test]
    fn splits_partition_the_student_set() {
        let mut recs = Vec::new();
        for s in 0..100 {
            recs.push(rec(&format!("s{s:03}"), "q0", s as f64));
        }
        let log = InteractionLog::new(recs);
        let spec = SplitSpec { seed: 9, ..SplitSpec::default() };
        let (tr, va, te) = split_students(&log, &spec).unwrap();
        let (a, b, c) = (tr.student_ids(), va.student_ids(), te.student_ids());
        assert!(a.intersection(&b).next().is_none());
        assert!(a.intersection(&c).next().is_none());
        assert!(b.intersection(&c).next().is_none());
        let union: BTreeSet<&str> = a.union(&b).copied().collect();
        let union: BTreeSet<&str> = union.union(&c).copied().collect();
        assert_eq!(union, log.student_ids());
    }

    fn long_student(n: usize) -> InteractionLog {
        InteractionLog::new((0..n).map(|i| rec("s", &format!("q{i}"), i as f64)).collect())
    }

    #[test]
    fn exactly_one_window_at_capacity() {
        let windows = window_sequences(&long_student(100), 100);
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].items.len(), 100);
    }

    #[test]
    fn chunks_of_250_are_100_100_50() {
        let windows = window_sequences(&long_student(250), 100);
        let lens: Vec<usize> = windows.iter().map(|w| w.items.len()).collect();
        assert_eq!(lens, [100, 100, 50]);
    }

    #[test]
    fn trailing_singleton_is_dropped() {
        let windows = window_sequences(&long_student(101), 100);
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].items.len(), 100);
    }

    #[test]
    fn windows_concatenate_back_to_source_order() {
        let log = long_student(237);
        let windows = window_sequences(&log, 50);
        let concat: Vec<&str> = windows
            .iter()
            .flat_map(|w| w.items.iter().map(|i| i.question_id.as_str()))
            .collect();
        // 237 = 4 * 50 + 37; the trailer survives (>= 2), so everything is kept.
        let source: Vec<&str> = log.records().iter().map(|r| r.question_id.as_str()).collect();
        assert_eq!(concat, source);
    }
}
