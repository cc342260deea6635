//! Scoring, bootstrap aggregation, paired significance, and difficulty
//! classes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::answer::ParsedAnswer;
use crate::dfa::{Dfa, OutputBit, Word};
use crate::error::EvalError;
use crate::rng::SeedTree;
use crate::taskgen::{TaskKind, TaskSet};

pub const DEFAULT_RESAMPLES: usize = 10_000;
/// Non-answer rate (percent) at which a row is reported as N/A.
pub const NA_THRESHOLD: f64 = 25.0;
/// Correct answers out of 30 needed to clear a difficulty rung.
pub const SOLVED_THRESHOLD: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Correct,
    Incorrect,
    NonAnswer,
}

pub fn score_sc(dfa: &Dfa, prefix: &Word, answer: &ParsedAnswer) -> Outcome {
    match answer {
        ParsedAnswer::Completion(c) if (1..=5).contains(&c.len()) => {
            if dfa.accepts(prefix.concat(c).symbols()) {
                Outcome::Correct
            } else {
                Outcome::Incorrect
            }
        }
        _ => Outcome::NonAnswer,
    }
}

pub fn score_transducer(target: OutputBit, answer: &ParsedAnswer) -> Outcome {
    match answer {
        ParsedAnswer::Bit(b) if *b == target => Outcome::Correct,
        ParsedAnswer::Bit(_) => Outcome::Incorrect,
        _ => Outcome::NonAnswer,
    }
}

/// Rounds to 10 significant digits, the precision of every float we write.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.9e}").parse().expect("formatted float parses")
}

/// One predictor's results on one DFA's task set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfaScore {
    pub dfa_id: u64,
    pub predictor: String,
    pub correct: usize,
    pub incorrect: usize,
    pub non_answers: usize,
    /// Instances with no response because the request failed. They count
    /// toward neither accuracy nor the non-answer rate.
    #[serde(default)]
    pub unevaluated: usize,
}

impl DfaScore {
    pub fn new(dfa_id: u64, predictor: impl Into<String>) -> Self {
        DfaScore {
            dfa_id,
            predictor: predictor.into(),
            correct: 0,
            incorrect: 0,
            non_answers: 0,
            unevaluated: 0,
        }
    }

    pub fn record(&mut self, o: Outcome) {
        match o {
            Outcome::Correct => self.correct += 1,
            Outcome::Incorrect => self.incorrect += 1,
            Outcome::NonAnswer => self.non_answers += 1,
        }
    }

    /// `correct / (correct + incorrect)`; non-answers are ignored.
    pub fn accuracy(&self) -> Option<f64> {
        let answered = self.correct + self.incorrect;
        (answered > 0).then(|| self.correct as f64 / answered as f64)
    }

    pub fn evaluated(&self) -> usize {
        self.correct + self.incorrect + self.non_answers
    }
}

/// Scores a task set. `None` entries are unevaluated instances.
pub fn score_taskset(
    dfa: &Dfa,
    tasks: &TaskSet,
    predictor: &str,
    answers: &[Option<ParsedAnswer>],
) -> DfaScore {
    assert_eq!(answers.len(), tasks.instances.len(), "one answer slot per instance");
    let mut s = DfaScore::new(tasks.dfa_id, predictor);
    for (j, a) in answers.iter().enumerate() {
        let Some(a) = a else {
            s.unevaluated += 1;
            continue;
        };
        let o = match tasks.kind {
            TaskKind::SequenceCompletion => score_sc(dfa, &tasks.sc_instances()[j].prefix, a),
            TaskKind::Transducer => score_transducer(tasks.transducer_instances()[j].target, a),
        };
        s.record(o);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub predictor: String,
    /// Percent.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// DFAs with a defined accuracy.
    pub n_dfas: usize,
    /// Percent of evaluated instances.
    pub non_answer_rate: f64,
    pub na_flag: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Nearest-rank percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Means of `resamples` with-replacement resamples of `xs`.
fn bootstrap_means(xs: &[f64], resamples: usize, seeds: &SeedTree) -> Vec<f64> {
    let mut rng = seeds.rng();
    (0..resamples)
        .map(|_| {
            let total: f64 = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum();
            total / xs.len() as f64
        })
        .collect()
}

/// Mean per-DFA accuracy with a 95% percentile-bootstrap interval over DFAs.
pub fn aggregate(
    predictor: &str,
    scores: &[DfaScore],
    resamples: usize,
    seeds: &SeedTree,
) -> Result<AggregateReport, EvalError> {
    let accs: Vec<f64> = scores.iter().filter_map(DfaScore::accuracy).collect();
    if accs.is_empty() || resamples == 0 {
        return Err(EvalError::EmptyInput);
    }
    let evaluated: usize = scores.iter().map(DfaScore::evaluated).sum();
    let na: usize = scores.iter().map(|s| s.non_answers).sum();
    let non_answer_rate = 100.0 * na as f64 / evaluated as f64;
    let mut means = bootstrap_means(&accs, resamples, &seeds.child("bootstrap", 0));
    means.sort_by(f64::total_cmp);
    Ok(AggregateReport {
        predictor: predictor.to_string(),
        mean: round_sig(100.0 * mean(&accs)),
        ci_low: round_sig(100.0 * percentile(&means, 0.025)),
        ci_high: round_sig(100.0 * percentile(&means, 0.975)),
        n_dfas: accs.len(),
        non_answer_rate: round_sig(non_answer_rate),
        na_flag: non_answer_rate >= NA_THRESHOLD,
    })
}

/// Two-tailed paired bootstrap p-value for equal mean accuracy.
///
/// Per-DFA differences are resampled; with `m*` the resampled means,
/// `p = 2 min(P(m* <= 0), P(m* >= 0))`, capped at 1. This equals the
/// recentred test comparing `m* - mean` against the observed mean. DFAs
/// where either accuracy is undefined are dropped from both sides.
pub fn paired_significance(
    a: &[DfaScore],
    b: &[DfaScore],
    resamples: usize,
    seeds: &SeedTree,
) -> Result<f64, EvalError> {
    let ids = |s: &[DfaScore]| s.iter().map(|x| x.dfa_id).collect::<BTreeSet<_>>();
    if ids(a) != ids(b) || a.len() != b.len() {
        return Err(EvalError::MismatchedDfaSets);
    }
    let b_by_id: BTreeMap<u64, &DfaScore> = b.iter().map(|s| (s.dfa_id, s)).collect();
    let mut sorted_a: Vec<&DfaScore> = a.iter().collect();
    sorted_a.sort_by_key(|s| s.dfa_id);
    let diffs: Vec<f64> = sorted_a
        .iter()
        .filter_map(|sa| Some(sa.accuracy()? - b_by_id[&sa.dfa_id].accuracy()?))
        .collect();
    if diffs.is_empty() || resamples == 0 {
        return Err(EvalError::EmptyInput);
    }
    let means = bootstrap_means(&diffs, resamples, &seeds.child("paired", 0));
    // Sums of identical values can differ in the last bit; treat tiny
    // means as zero so identical inputs give p = 1.
    let eps = 1e-12;
    let le = means.iter().filter(|&&m| m <= eps).count();
    let ge = means.iter().filter(|&&m| m >= -eps).count();
    let p = 2.0 * le.min(ge) as f64 / resamples as f64;
    Ok(round_sig(p.min(1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DifficultyClass {
    Null,
    #[serde(rename = "2-Gram")]
    Gram2,
    #[serde(rename = "3-Gram")]
    Gram3,
    #[serde(rename = "4-Gram")]
    Gram4,
    #[serde(rename = "5-Gram")]
    Gram5,
    BruteForce,
    Unsolved,
}

impl DifficultyClass {
    /// The rungs in order, each with the transducer baseline that defines it.
    pub const LADDER: [(DifficultyClass, &'static str); 6] = [
        (DifficultyClass::Null, "null-t"),
        (DifficultyClass::Gram2, "2-gram-t"),
        (DifficultyClass::Gram3, "3-gram-t"),
        (DifficultyClass::Gram4, "4-gram-t"),
        (DifficultyClass::Gram5, "5-gram-t"),
        (DifficultyClass::BruteForce, "brute-force-t"),
    ];

    pub const ALL: [DifficultyClass; 7] = [
        DifficultyClass::Null,
        DifficultyClass::Gram2,
        DifficultyClass::Gram3,
        DifficultyClass::Gram4,
        DifficultyClass::Gram5,
        DifficultyClass::BruteForce,
        DifficultyClass::Unsolved,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyClass::Null => "Null",
            DifficultyClass::Gram2 => "2-Gram",
            DifficultyClass::Gram3 => "3-Gram",
            DifficultyClass::Gram4 => "4-Gram",
            DifficultyClass::Gram5 => "5-Gram",
            DifficultyClass::BruteForce => "BruteForce",
            DifficultyClass::Unsolved => "Unsolved",
        }
    }
}

impl fmt::Display for DifficultyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First rung whose correct count reaches 28; `correct[i]` is the score of
/// `LADDER[i]`.
pub fn difficulty_class(correct: [usize; 6]) -> DifficultyClass {
    DifficultyClass::LADDER
        .iter()
        .zip(correct)
        .find(|(_, c)| *c >= SOLVED_THRESHOLD)
        .map(|((class, _), _)| *class)
        .unwrap_or(DifficultyClass::Unsolved)
}

/// Classes for every DFA that has scores for the whole ladder.
pub fn classify_dfas(scores: &[DfaScore]) -> BTreeMap<u64, DifficultyClass> {
    let mut by_dfa: BTreeMap<u64, [Option<usize>; 6]> = BTreeMap::new();
    for s in scores {
        if let Some(i) = DifficultyClass::LADDER.iter().position(|(_, p)| *p == s.predictor) {
            by_dfa.entry(s.dfa_id).or_default()[i] = Some(s.correct);
        }
    }
    by_dfa
        .into_iter()
        .filter_map(|(id, rungs)| {
            let mut correct = [0; 6];
            for (slot, r) in correct.iter_mut().zip(rungs) {
                *slot = r?;
            }
            Some((id, difficulty_class(correct)))
        })
        .collect()
}

/// A row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    #[serde(flatten)]
    pub report: AggregateReport,
    /// Competition rank by mean, descending; `None` for N/A rows.
    pub rank: Option<usize>,
}

pub fn rank_rows(reports: Vec<AggregateReport>) -> Vec<ResultsRow> {
    let mut rows: Vec<ResultsRow> = reports.into_iter().map(|report| ResultsRow { report, rank: None }).collect();
    rows.sort_by(|x, y| {
        x.report
            .na_flag
            .cmp(&y.report.na_flag)
            .then(y.report.mean.total_cmp(&x.report.mean))
            .then(x.report.predictor.cmp(&y.report.predictor))
    });
    let means: Vec<f64> = rows.iter().filter(|r| !r.report.na_flag).map(|r| r.report.mean).collect();
    for r in rows.iter_mut().filter(|r| !r.report.na_flag) {
        r.rank = Some(1 + means.iter().filter(|&&m| m > r.report.mean).count());
    }
    rows
}

/// Keeps, for each model, the better of its `@basic` and `@basic-cot` rows.
/// Predictor ids without those suffixes pass through unchanged.
pub fn best_basic(reports: Vec<AggregateReport>) -> Vec<AggregateReport> {
    let mut best: BTreeMap<String, AggregateReport> = BTreeMap::new();
    let mut out = Vec::new();
    for r in reports {
        let model = r
            .predictor
            .strip_suffix("@basic")
            .or_else(|| r.predictor.strip_suffix("@basic-cot"))
            .map(str::to_string);
        let Some(model) = model else {
            out.push(r);
            continue;
        };
        let better = |new: &AggregateReport, old: &AggregateReport| {
            (!new.na_flag, new.mean) > (!old.na_flag, old.mean)
        };
        match best.get(&model) {
            Some(old) if !better(&r, old) => {}
            _ => {
                best.insert(model, r);
            }
        }
    }
    out.extend(best.into_values());
    out
}

/// Plain-text rendering of a results table.
pub fn render_table(rows: &[ResultsRow]) -> String {
    let mut out = String::from("rank  predictor                         accuracy (95% CI)         n   NA%\n");
    for r in rows {
        let rep = &r.report;
        let rank = r.rank.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
        let acc = if rep.na_flag {
            "N/A".to_string()
        } else {
            format!("{:.1} ({:.1}-{:.1})", rep.mean, rep.ci_low, rep.ci_high)
        };
        out.push_str(&format!(
            "{rank:<5} {:<33} {acc:<25} {:<4} {:.1}\n",
            rep.predictor, rep.n_dfas, rep.non_answer_rate
        ));
    }
    out
}

/// Per-class aggregate for one predictor, restricted to the DFAs in each
/// class. Classes with no scored DFA are omitted.
pub fn by_difficulty(
    predictor: &str,
    scores: &[DfaScore],
    classes: &BTreeMap<u64, DifficultyClass>,
    resamples: usize,
    seeds: &SeedTree,
) -> Vec<(DifficultyClass, AggregateReport)> {
    DifficultyClass::ALL
        .iter()
        .filter_map(|&class| {
            let subset: Vec<DfaScore> = scores
                .iter()
                .filter(|s| classes.get(&s.dfa_id) == Some(&class))
                .cloned()
                .collect();
            aggregate(predictor, &subset, resamples, &seeds.child(class.name(), 0))
                .ok()
                .map(|r| (class, r))
        })
        .collect()
}
