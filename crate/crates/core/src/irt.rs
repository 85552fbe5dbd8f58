//! One-parameter (Rasch) calibration by regularized maximum likelihood.
//!
//! P(correct) = sigmoid(theta_s - b_q). The fit alternates exact damped
//! Newton updates over the student block and the question block (each block
//! is separable given the other), which is deterministic and converges to
//! tight gradient tolerances at desk scale. An L2 prior keeps all-correct /
//! all-wrong entities finite. After convergence the difficulties are
//! re-centered to mean zero with abilities shifted by the same amount, so
//! the probability pattern is untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Interaction, InteractionLog, Interner};

#[derive(Debug, Error)]
pub enum IrtError {
    #[error("cannot fit an empty log")]
    EmptyLog,
    #[error("no parameters for student {0:?}")]
    UnknownStudent(String),
    #[error("no parameters for question {0:?}")]
    UnknownQuestion(String),
}

/// Damping schedule for Newton steps: start at `init`, multiply by `shrink`
/// until the local objective decreases, giving up after `max_backtracks`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepControl {
    pub init: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { init: 1.0, shrink: 0.5, max_backtracks: 30 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IrtConfig {
    /// Strength of the Gaussian prior on both parameter blocks.
    pub l2_prior: f64,
    /// Maximum outer sweeps (one sweep = student block + question block).
    pub max_iters: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
    pub step_control: StepControl,
}

impl Default for IrtConfig {
    fn default() -> Self {
        IrtConfig { l2_prior: 0.1, max_iters: 200, tol: 1e-6, step_control: StepControl::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Outer sweeps executed.
    pub iterations: usize,
    /// Objective at the returned parameters (after gauge centering).
    pub final_nll: f64,
    /// Gradient infinity norm at optimizer termination, before the gauge
    /// shift (the shift re-centers a flat direction of the data term).
    pub grad_inf_norm: f64,
    pub converged: bool,
    /// Objective after each sweep; non-increasing by construction.
    pub nll_trace: Vec<f64>,
}

/// Fitted abilities and difficulties keyed by the original string ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrtParams {
    pub theta: BTreeMap<String, f64>,
    pub b: BTreeMap<String, f64>,
    pub fit: FitReport,
}

impl IrtParams {
    pub fn theta_of(&self, student: &str) -> Option<f64> {
        self.theta.get(student).copied()
    }

    pub fn b_of(&self, question: &str) -> Option<f64> {
        self.b.get(question).copied()
    }
}

/// One line of the serialized parameter file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IrtRecord {
    Theta { id: String, value: f64 },
    B { id: String, value: f64 },
    Fit { iterations: usize, final_nll: f64, grad_inf_norm: f64, converged: bool },
}

impl IrtParams {
    pub fn to_records(&self) -> Vec<IrtRecord> {
        let mut out = Vec::with_capacity(self.theta.len() + self.b.len() + 1);
        out.push(IrtRecord::Fit {
            iterations: self.fit.iterations,
            final_nll: self.fit.final_nll,
            grad_inf_norm: self.fit.grad_inf_norm,
            converged: self.fit.converged,
        });
        for (id, v) in &self.theta {
            out.push(IrtRecord::Theta { id: id.clone(), value: *v });
        }
        for (id, v) in &self.b {
            out.push(IrtRecord::B { id: id.clone(), value: *v });
        }
        out
    }

    pub fn from_records(records: Vec<IrtRecord>) -> Self {
        let mut params = IrtParams {
            theta: BTreeMap::new(),
            b: BTreeMap::new(),
            fit: FitReport {
                iterations: 0,
                final_nll: f64::NAN,
                grad_inf_norm: f64::NAN,
                converged: false,
                nll_trace: Vec::new(),
            },
        };
        for rec in records {
            match rec {
                IrtRecord::Theta { id, value } => {
                    params.theta.insert(id, value);
                }
                IrtRecord::B { id, value } => {
                    params.b.insert(id, value);
                }
                IrtRecord::Fit { iterations, final_nll, grad_inf_norm, converged } => {
                    params.fit.iterations = iterations;
                    params.fit.final_nll = final_nll;
                    params.fit.grad_inf_norm = grad_inf_norm;
                    params.fit.converged = converged;
                }
            }
        }
        params
    }
}

/// Overflow-safe logistic of `theta - b`, always in (0, 1).
pub fn rasch_probability(theta: f64, b: f64) -> f64 {
    assert!(theta.is_finite() && b.is_finite(), "rasch_probability: non-finite input");
    sigmoid(theta - b)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// softplus(x) = ln(1 + e^x), computed without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Per-record negative log-likelihood term for ability difference `x` and
/// response `r`: -[r ln p + (1-r) ln(1-p)] with p = sigmoid(x).
fn nll_term(x: f64, r: f64) -> f64 {
    r * softplus(-x) + (1.0 - r) * softplus(x)
}

/// -sum of log-likelihood terms plus (l2/2)(|theta|^2 + |b|^2).
pub fn negative_log_likelihood(
    params: &IrtParams,
    log: &InteractionLog,
    cfg: &IrtConfig,
) -> Result<f64, IrtError> {
    let mut total = 0.0;
    for rec in log.records() {
        let theta = params
            .theta_of(&rec.student_id)
            .ok_or_else(|| IrtError::UnknownStudent(rec.student_id.clone()))?;
        let b = params
            .b_of(&rec.question_id)
            .ok_or_else(|| IrtError::UnknownQuestion(rec.question_id.clone()))?;
        total += nll_term(theta - b, rec.r());
    }
    let prior: f64 = params.theta.values().map(|t| t * t).sum::<f64>()
        + params.b.values().map(|v| v * v).sum::<f64>();
    Ok(total + 0.5 * cfg.l2_prior * prior)
}

struct DenseLog {
    students: Interner,
    questions: Interner,
    /// (student index, question index, response)
    records: Vec<(usize, usize, f64)>,
    by_student: Vec<Vec<usize>>,
    by_question: Vec<Vec<usize>>,
}

impl DenseLog {
    fn new(log: &InteractionLog) -> Self {
        let students = Interner::from_sorted_set(log.student_ids());
        let questions = Interner::from_sorted_set(log.question_ids());
        let mut records = Vec::with_capacity(log.len());
        let mut by_student = vec![Vec::new(); students.len()];
        let mut by_question = vec![Vec::new(); questions.len()];
        for rec in log.records() {
            let s = students.index(&rec.student_id).expect("interned");
            let q = questions.index(&rec.question_id).expect("interned");
            by_student[s].push(records.len());
            by_question[q].push(records.len());
            records.push((s, q, rec.r()));
        }
        DenseLog { students, questions, records, by_student, by_question }
    }
}

fn objective(dense: &DenseLog, theta: &[f64], b: &[f64], l2: f64) -> f64 {
    let data: f64 =
        dense.records.iter().map(|&(s, q, r)| nll_term(theta[s] - b[q], r)).sum();
    let prior: f64 =
        theta.iter().map(|t| t * t).sum::<f64>() + b.iter().map(|v| v * v).sum::<f64>();
    data + 0.5 * l2 * prior
}

fn grad_inf_norm(dense: &DenseLog, theta: &[f64], b: &[f64], l2: f64) -> f64 {
    let mut g_theta = vec![0.0; theta.len()];
    let mut g_b = vec![0.0; b.len()];
    for &(s, q, r) in &dense.records {
        let e = sigmoid(theta[s] - b[q]) - r;
        g_theta[s] += e;
        g_b[q] -= e;
    }
    let mut norm = 0.0f64;
    for (g, x) in g_theta.iter().zip(theta) {
        norm = norm.max((g + l2 * x).abs());
    }
    for (g, x) in g_b.iter().zip(b) {
        norm = norm.max((g + l2 * x).abs());
    }
    norm
}

/// One damped Newton update of a single coordinate whose local objective is
/// `sum_i nll_term(sign * (x - offset_i), r_i) + l2/2 x^2` (sign folds the
/// theta/b asymmetry). Returns the new coordinate value.
fn newton_coordinate(
    x0: f64,
    terms: &[(f64, f64)], // (offset, response), local term = nll(x - offset)
    l2: f64,
    ctrl: &StepControl,
) -> f64 {
    let local = |x: f64| -> f64 {
        terms.iter().map(|&(off, r)| nll_term(x - off, r)).sum::<f64>() + 0.5 * l2 * x * x
    };
    let mut x = x0;
    // A couple of inner iterations per sweep suffice; the outer alternation
    // does the rest.
    for _ in 0..4 {
        let mut g = l2 * x;
        let mut h = l2;
        for &(off, r) in terms {
            let p = sigmoid(x - off);
            g += p - r;
            h += p * (1.0 - p);
        }
        if g.abs() < 1e-12 {
            break;
        }
        let delta = -g / h;
        let f0 = local(x);
        let mut t = ctrl.init;
        let mut accepted = false;
        for _ in 0..=ctrl.max_backtracks {
            let cand = x + t * delta;
            if local(cand) <= f0 {
                x = cand;
                accepted = true;
                break;
            }
            t *= ctrl.shrink;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Fit abilities and difficulties to a log. Deterministic for a given
/// (log, config); errors on an empty log.
pub fn fit_rasch(log: &InteractionLog, cfg: &IrtConfig) -> Result<IrtParams, IrtError> {
    if log.is_empty() {
        return Err(IrtError::EmptyLog);
    }
    let dense = DenseLog::new(log);
    let mut theta = vec![0.0f64; dense.students.len()];
    let mut b = vec![0.0f64; dense.questions.len()];

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    for sweep in 1..=cfg.max_iters {
        iterations = sweep;
        for s in 0..theta.len() {
            let terms: Vec<(f64, f64)> = dense.by_student[s]
                .iter()
                .map(|&i| {
                    let (_, q, r) = dense.records[i];
                    (b[q], r) // theta - b[q] = x - offset
                })
                .collect();
            theta[s] = newton_coordinate(theta[s], &terms, cfg.l2_prior, &cfg.step_control);
        }
        for q in 0..b.len() {
            // For difficulties the term is nll(theta_s - b); substitute
            // y = -b so the local problem has the canonical x - offset form:
            // theta - b = y - (-theta).
            let terms: Vec<(f64, f64)> = dense.by_question[q]
                .iter()
                .map(|&i| {
                    let (s, _, r) = dense.records[i];
                    (-theta[s], r)
                })
                .collect();
            let y = newton_coordinate(-b[q], &terms, cfg.l2_prior, &cfg.step_control);
            b[q] = -y;
        }

        trace.push(objective(&dense, &theta, &b, cfg.l2_prior));
        grad_norm = grad_inf_norm(&dense, &theta, &b, cfg.l2_prior);
        if grad_norm <= cfg.tol {
            converged = true;
            break;
        }
    }

    // Gauge fix: the data term only sees theta - b, so shift both blocks to
    // put mean(b) at exactly zero.
    let mean_b = b.iter().sum::<f64>() / b.len() as f64;
    for t in &mut theta {
        *t -= mean_b;
    }
    for v in &mut b {
        *v -= mean_b;
    }

    let final_nll = objective(&dense, &theta, &b, cfg.l2_prior);
    let theta_map: BTreeMap<String, f64> = dense
        .students
        .names()
        .iter()
        .zip(&theta)
        .map(|(n, v)| (n.clone(), *v))
        .collect();
    let b_map: BTreeMap<String, f64> =
        dense.questions.names().iter().zip(&b).map(|(n, v)| (n.clone(), *v)).collect();

    Ok(IrtParams {
        theta: theta_map,
        b: b_map,
        fit: FitReport { iterations, final_nll, grad_inf_norm: grad_norm, converged, nll_trace: trace },
    })
}

/// Ability for one (possibly unseen) student from their observed history,
/// with difficulties frozen: 1-D regularized Newton on theta alone.
pub fn fit_student_ability(history: &[(f64, bool)], cfg: &IrtConfig) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let terms: Vec<(f64, f64)> =
        history.iter().map(|&(b, correct)| (b, if correct { 1.0 } else { 0.0 })).collect();
    let mut x = 0.0;
    for _ in 0..8 {
        let next = newton_coordinate(x, &terms, cfg.l2_prior.max(1e-3), &cfg.step_control);
        if (next - x).abs() < 1e-10 {
            return next;
        }
        x = next;
    }
    x
}

/// Gradient of the regularized objective by (student id, question id),
/// exposed for finite-difference verification.
pub fn nll_gradient(
    params: &IrtParams,
    log: &InteractionLog,
    cfg: &IrtConfig,
) -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>), IrtError> {
    let mut g_theta: BTreeMap<String, f64> =
        params.theta.iter().map(|(k, v)| (k.clone(), cfg.l2_prior * v)).collect();
    let mut g_b: BTreeMap<String, f64> =
        params.b.iter().map(|(k, v)| (k.clone(), cfg.l2_prior * v)).collect();
    for rec in log.records() {
        let theta = params
            .theta_of(&rec.student_id)
            .ok_or_else(|| IrtError::UnknownStudent(rec.student_id.clone()))?;
        let b = params
            .b_of(&rec.question_id)
            .ok_or_else(|| IrtError::UnknownQuestion(rec.question_id.clone()))?;
        let e = sigmoid(theta - b) - rec.r();
        *g_theta.get_mut(&rec.student_id).unwrap() += e;
        *g_b.get_mut(&rec.question_id).unwrap() -= e;
    }
    Ok((g_theta, g_b))
}

#[allow(dead_code)]
fn single_record_log(student: &str, question: &str, correct: bool) -> InteractionLog {
    InteractionLog::new(vec![Interaction {
        student_id: student.to_string(),
        question_id: question.to_string(),
        kc_ids: std::iter::once("k".to_string()).collect(),
        correct,
        timestamp: 0.0,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{planted_rasch_log, spearman};

    fn empty_params() -> IrtParams {
        IrtParams {
            theta: BTreeMap::new(),
            b: BTreeMap::new(),
            fit: FitReport {
                iterations: 0,
                final_nll: 0.0,
                grad_inf_norm: 0.0,
                converged: false,
                nll_trace: vec![],
            },
        }
    }

    #[test]
    fn equal_ability_and_difficulty_is_half() {
        assert_eq!(rasch_probability(1.3, 1.3), 0.5);
    }

    #[test]
    fn saturates_at_large_gap() {
        assert!(rasch_probability(20.0, 0.0) >= 1.0 - 1e-8);
        assert!(rasch_probability(0.0, 20.0) <= 1e-8);
    }

    #[test]
    fn logistic_of_one() {
        // 1 / (1 + e^-1), evaluated independently at high precision.
        assert!((rasch_probability(1.0, 0.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn empty_log_zero_params_zero_prior_gives_zero() {
        let params = empty_params();
        let log = InteractionLog::new(vec![]);
        let cfg = IrtConfig { l2_prior: 0.0, ..IrtConfig::default() };
        assert_eq!(negative_log_likelihood(&params, &log, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn single_record_at_half_is_ln2() {
        let log = single_record_log("s", "q", true);
        let mut params = empty_params();
        params.theta.insert("s".into(), 0.7);
        params.b.insert("q".into(), 0.7);
        let cfg = IrtConfig { l2_prior: 0.0, ..IrtConfig::default() };
        let nll = negative_log_likelihood(&params, &log, &cfg).unwrap();
        assert!((nll - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn two_record_log_matches_per_term_sum() {
        let mut params = empty_params();
        params.theta.insert("s".into(), 0.9);
        params.b.insert("q1".into(), -0.4);
        params.b.insert("q2".into(), 1.1);
        let log = InteractionLog::new(vec![
            Interaction {
                student_id: "s".into(),
                question_id: "q1".into(),
                kc_ids: std::iter::once("k".to_string()).collect(),
                correct: true,
                timestamp: 0.0,
            },
            Interaction {
                student_id: "s".into(),
                question_id: "q2".into(),
                kc_ids: std::iter::once("k".to_string()).collect(),
                correct: false,
                timestamp: 1.0,
            },
        ]);
        let cfg = IrtConfig { l2_prior: 0.0, ..IrtConfig::default() };
        // Independent per-record terms: -ln p for r=1, -ln(1-p) for r=0,
        // straight from the probability definition.
        let p1 = rasch_probability(0.9, -0.4);
        let p2 = rasch_probability(0.9, 1.1);
        let expected = -p1.ln() - (1.0 - p2).ln();
        let got = negative_log_likelihood(&params, &log, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn unknown_question_is_an_error() {
        let log = single_record_log("s", "q", true);
        let mut params = empty_params();
        params.theta.insert("s".into(), 0.0);
        let cfg = IrtConfig::default();
        assert!(matches!(
            negative_log_likelihood(&params, &log, &cfg),
            Err(IrtError::UnknownQuestion(_))
        ));
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let log = planted_rasch_log(8, 6, 31).log;
        let cfg = IrtConfig { l2_prior: 0.1, ..IrtConfig::default() };
        let mut params = fit_rasch(&log, &cfg).unwrap();
        // Move off the optimum so gradients are non-trivial.
        for (i, v) in params.theta.values_mut().enumerate() {
            *v += 0.3 * ((i % 5) as f64 - 2.0);
        }
        let (g_theta, g_b) = nll_gradient(&params, &log, &cfg).unwrap();

        let mut check = |which_theta: bool, id: &str, analytic: f64| {
            let base = if which_theta { params.theta[id] } else { params.b[id] };
            let h = 1e-5 * (1.0 + base.abs());
            let mut perturbed = params.clone();
            *(if which_theta {
                perturbed.theta.get_mut(id)
            } else {
                perturbed.b.get_mut(id)
            })
            .unwrap() = base + h;
            let f_plus = negative_log_likelihood(&perturbed, &log, &cfg).unwrap();
            *(if which_theta {
                perturbed.theta.get_mut(id)
            } else {
                perturbed.b.get_mut(id)
            })
            .unwrap() = base - h;
            let f_minus = negative_log_likelihood(&perturbed, &log, &cfg).unwrap();
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel <= 1e-5, "{id}: analytic {analytic} vs numeric {numeric} (rel {rel})");
        };

        for (id, g) in &g_theta {
            check(true, id, *g);
        }
        for (id, g) in &g_b {
            check(false, id, *g);
        }
    }

    #[test]
    fn single_positive_record_pushes_ability_above_difficulty() {
        let log = single_record_log("s", "q", true);
        let params = fit_rasch(&log, &IrtConfig::default()).unwrap();
        assert!(params.theta["s"] - params.b["q"] > 0.0);
        assert!(params.theta["s"].is_finite());
    }

    #[test]
    fn planted_parameters_recovered_by_rank() {
        let planted = planted_rasch_log(200, 100, 7);
        let params = fit_rasch(&planted.log, &IrtConfig::default()).unwrap();
        assert!(params.fit.converged, "grad norm {}", params.fit.grad_inf_norm);

        let fitted_theta: Vec<f64> =
            planted.student_ids.iter().map(|s| params.theta[s]).collect();
        let fitted_b: Vec<f64> = planted.question_ids.iter().map(|q| params.b[q]).collect();
        let rho_theta = spearman(&planted.theta, &fitted_theta);
        let rho_b = spearman(&planted.b, &fitted_b);
        assert!(rho_theta >= 0.9, "theta rank correlation {rho_theta}");
        assert!(rho_b >= 0.9, "difficulty rank correlation {rho_b}");
    }

    #[test]
    fn stronger_prior_never_grows_the_norm() {
        let planted = planted_rasch_log(30, 20, 11);
        let weak = fit_rasch(&planted.log, &IrtConfig { l2_prior: 0.1, ..IrtConfig::default() })
            .unwrap();
        let strong = fit_rasch(&planted.log, &IrtConfig { l2_prior: 0.2, ..IrtConfig::default() })
            .unwrap();
        let norm = |p: &IrtParams| {
            p.theta.values().map(|v| v * v).sum::<f64>() + p.b.values().map(|v| v * v).sum::<f64>()
        };
        assert!(norm(&strong) <= norm(&weak) + 1e-9);
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let planted = planted_rasch_log(40, 25, 3);
        let params = fit_rasch(&planted.log, &IrtConfig::default()).unwrap();
        for w in params.fit.nll_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn difficulties_are_centered_after_fit() {
        let planted = planted_rasch_log(25, 15, 5);
        let params = fit_rasch(&planted.log, &IrtConfig::default()).unwrap();
        let mean_b: f64 = params.b.values().sum::<f64>() / params.b.len() as f64;
        assert!(mean_b.abs() <= 1e-9, "mean(b) = {mean_b}");
    }

    #[test]
    fn fit_is_deterministic() {
        let planted = planted_rasch_log(20, 10, 13);
        let a = fit_rasch(&planted.log, &IrtConfig::default()).unwrap();
        let b = fit_rasch(&planted.log, &IrtConfig::default()).unwrap();
        for (x, y) in a.theta.values().zip(b.theta.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn empty_log_fit_is_an_error() {
        assert!(matches!(
            fit_rasch(&InteractionLog::new(vec![]), &IrtConfig::default()),
            Err(IrtError::EmptyLog)
        ));
    }
}
