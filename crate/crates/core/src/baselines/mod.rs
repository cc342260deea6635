//! Non-LLM predictors for both tasks.

pub mod brute_force;
pub mod ngram;
pub mod simple;

use std::fmt;
use std::str::FromStr;

use crate::answer::ParsedAnswer;
use crate::error::BaselineError;
use crate::rng::SeedTree;
use crate::taskgen::{TaskKind, TaskSet};

pub use brute_force::{brute_force_s, brute_force_t, brute_force_t_votes, BitVotes};
pub use ngram::{infinity_gram_t, ngram_s, ngram_t, TieRule};
pub use simple::{common_suffix_s, null_t, random_s};

/// A baseline, named as in `predictions.jsonl` (`"6-gram-t"`, `"random-s"`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predictor {
    RandomS,
    CommonSuffixS,
    NgramS(usize),
    BruteForceS,
    NullT,
    NgramT(usize),
    InfinityGramT,
    BruteForceT,
}

impl Predictor {
    pub fn kind(self) -> TaskKind {
        match self {
            Predictor::RandomS
            | Predictor::CommonSuffixS
            | Predictor::NgramS(_)
            | Predictor::BruteForceS => TaskKind::SequenceCompletion,
            _ => TaskKind::Transducer,
        }
    }

    /// Name without the task suffix, as used in result tables.
    pub fn display_name(self) -> String {
        match self {
            Predictor::RandomS => "Random".into(),
            Predictor::CommonSuffixS => "Common-Suffix".into(),
            Predictor::NgramS(n) | Predictor::NgramT(n) => format!("{n}-Gram"),
            Predictor::BruteForceS | Predictor::BruteForceT => "BruteForce".into(),
            Predictor::NullT => "Null".into(),
            Predictor::InfinityGramT => "∞-Gram".into(),
        }
    }

    /// Parses a name with or without the `-s`/`-t` suffix. Unsuffixed names
    /// need `kind` unless only one task has such a predictor.
    pub fn parse(name: &str, kind: Option<TaskKind>) -> Result<Predictor, BaselineError> {
        let unknown = || BaselineError::UnknownPredictor(name.to_string());
        let lower = name.trim().to_ascii_lowercase();
        let (stem, suffix_kind) = if let Some(s) = lower.strip_suffix("-s") {
            (s, Some(TaskKind::SequenceCompletion))
        } else if let Some(s) = lower.strip_suffix("-t") {
            (s, Some(TaskKind::Transducer))
        } else {
            (lower.as_str(), None)
        };
        if let (Some(a), Some(b)) = (suffix_kind, kind) {
            if a != b {
                return Err(BaselineError::WrongTask { predictor: name.to_string(), kind: b.to_string() });
            }
        }
        let kind = suffix_kind.or(kind);
        let sc = |p: Predictor| match kind {
            Some(TaskKind::Transducer) => Err(BaselineError::WrongTask {
                predictor: name.to_string(),
                kind: TaskKind::Transducer.to_string(),
            }),
            _ => Ok(p),
        };
        let t = |p: Predictor| match kind {
            Some(TaskKind::SequenceCompletion) => Err(BaselineError::WrongTask {
                predictor: name.to_string(),
                kind: TaskKind::SequenceCompletion.to_string(),
            }),
            _ => Ok(p),
        };
        match stem {
            "random" => sc(Predictor::RandomS),
            "common-suffix" => sc(Predictor::CommonSuffixS),
            "null" => t(Predictor::NullT),
            "infinity-gram" | "inf-gram" | "∞-gram" => t(Predictor::InfinityGramT),
            "brute-force" | "bruteforce" => match kind {
                Some(TaskKind::SequenceCompletion) => Ok(Predictor::BruteForceS),
                Some(TaskKind::Transducer) => Ok(Predictor::BruteForceT),
                None => Err(unknown()),
            },
            _ => {
                let n: usize = stem
                    .strip_suffix("-gram")
                    .and_then(|n| n.parse().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(unknown)?;
                match kind {
                    Some(TaskKind::SequenceCompletion) => Ok(Predictor::NgramS(n)),
                    Some(TaskKind::Transducer) => Ok(Predictor::NgramT(n)),
                    None => Err(unknown()),
                }
            }
        }
    }

    /// The standard baseline rows for a task.
    pub fn suite(kind: TaskKind) -> Vec<Predictor> {
        match kind {
            TaskKind::SequenceCompletion => {
                let mut v = vec![Predictor::RandomS, Predictor::CommonSuffixS];
                v.extend((2..=6).map(Predictor::NgramS));
                v.push(Predictor::BruteForceS);
                v
            }
            TaskKind::Transducer => {
                let mut v = vec![Predictor::NullT];
                v.extend((2..=6).map(Predictor::NgramT));
                v.push(Predictor::InfinityGramT);
                v.push(Predictor::BruteForceT);
                v
            }
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predictor::RandomS => write!(f, "random-s"),
            Predictor::CommonSuffixS => write!(f, "common-suffix-s"),
            Predictor::NgramS(n) => write!(f, "{n}-gram-s"),
            Predictor::BruteForceS => write!(f, "brute-force-s"),
            Predictor::NullT => write!(f, "null-t"),
            Predictor::NgramT(n) => write!(f, "{n}-gram-t"),
            Predictor::InfinityGramT => write!(f, "infinity-gram-t"),
            Predictor::BruteForceT => write!(f, "brute-force-t"),
        }
    }
}

impl FromStr for Predictor {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predictor::parse(s, None)
    }
}

impl serde::Serialize for Predictor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Predictor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PredictOptions {
    pub parallel: bool,
    pub tie: TieRule,
}

/// Predictions for every instance of `tasks`, in instance order.
///
/// Random_S draws instance `j` from `seeds.child("random-s", j)`.
pub fn predict_taskset(
    predictor: Predictor,
    tasks: &TaskSet,
    seeds: &SeedTree,
    opts: PredictOptions,
) -> Result<Vec<ParsedAnswer>, BaselineError> {
    if predictor.kind() != tasks.kind {
        return Err(BaselineError::WrongTask {
            predictor: predictor.to_string(),
            kind: tasks.kind.to_string(),
        });
    }
    use ParsedAnswer::{Bit, Completion};
    match predictor {
        Predictor::RandomS => Ok((0..tasks.instances.len())
            .map(|j| Completion(random_s(&mut seeds.child("random-s", j as u64).rng())))
            .collect()),
        Predictor::CommonSuffixS => {
            Ok(tasks.sc_instances().iter().map(|i| Completion(common_suffix_s(&i.examples))).collect())
        }
        Predictor::NgramS(n) => Ok(tasks
            .sc_instances()
            .iter()
            .map(|i| Completion(ngram_s(n, &i.examples, &i.prefix)))
            .collect()),
        Predictor::BruteForceS => tasks
            .sc_instances()
            .iter()
            .map(|i| brute_force::brute_force_s_instance(i, opts.parallel).map(Completion))
            .collect(),
        Predictor::NullT => {
            let b = null_t(&tasks.targets());
            Ok(vec![Bit(b); tasks.instances.len()])
        }
        Predictor::NgramT(n) => {
            Ok(tasks.transducer_instances().iter().map(|i| Bit(ngram_t(n, i, opts.tie))).collect())
        }
        Predictor::InfinityGramT => {
            Ok(tasks.transducer_instances().iter().map(|i| Bit(infinity_gram_t(i, opts.tie))).collect())
        }
        Predictor::BruteForceT => tasks
            .transducer_instances()
            .iter()
            .map(|i| brute_force_t(i, opts.parallel).map(Bit))
            .collect(),
    }
}
