//! Task-set generation for the sequence-completion and transducer tasks.
//!
//! Sequence completion: every instance holds `num_examples` accepted words of
//! length `example_len` and a distinct prefix of length `prefix_len` that is
//! not a prefix of any example but extends to an accepted word with a
//! `completion_len`-letter completion. Each example and each
//! (prefix, completion) pair is drawn uniformly and rejected until it fits;
//! `max_rejections` consecutive rejections abort that object.
//!
//! A DFA's first instance is a throwaway pilot: if it cannot be sampled the
//! DFA is rejected. Afterwards a failed instance is simply redrawn.
//!
//! Transducer: every instance is a uniform word of length `seq_len` with its
//! accept trace; the last bit is the hidden target. A DFA is rejected when
//! every target in its task set is equal.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dfa::{bits_from_str, bits_to_string, sample_dfa, Dfa, OutputBit, Symbol, Word};
use crate::error::TaskError;
use crate::rng::SeedTree;

/// Redraws allowed for a single non-pilot instance before the DFA is given up on.
pub const INSTANCE_RETRY_CAP: usize = 1_000;

/// DFA proposals per benchmark slot before generation fails.
pub const SLOT_ATTEMPT_CAP: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "sc")]
    SequenceCompletion,
    #[serde(rename = "transducer")]
    Transducer,
}

impl TaskKind {
    pub fn suffix(self) -> &'static str {
        match self {
            TaskKind::SequenceCompletion => "s",
            TaskKind::Transducer => "t",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::SequenceCompletion => "sc",
            TaskKind::Transducer => "transducer",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sc" | "sequence-completion" => Ok(TaskKind::SequenceCompletion),
            "transducer" | "t" => Ok(TaskKind::Transducer),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub num_states: usize,
    pub num_instances: usize,
    pub num_examples: usize,
    pub example_len: usize,
    pub prefix_len: usize,
    pub completion_len: usize,
    pub seq_len: usize,
    pub max_rejections: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            num_states: 3,
            num_instances: 30,
            num_examples: 30,
            example_len: 10,
            prefix_len: 5,
            completion_len: 5,
            seq_len: 30,
            max_rejections: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScInstance {
    pub examples: Vec<Word>,
    pub prefix: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransducerInstance {
    pub symbols: Word,
    #[serde(with = "bit_string")]
    pub revealed: Vec<OutputBit>,
    pub target: OutputBit,
}

impl TransducerInstance {
    /// `s1 o1 s2 o2 ... s(L-1) o(L-1) sL` with the final output masked.
    pub fn interleaved(&self) -> Vec<char> {
        let mut out = Vec::with_capacity(self.symbols.len() * 2);
        for (i, s) in self.symbols.symbols().iter().enumerate() {
            out.push(s.as_char());
            if let Some(b) = self.revealed.get(i) {
                out.push(b.as_char());
            }
        }
        out
    }
}

mod bit_string {
    use super::*;

    pub fn serialize<S: serde::Serializer>(bits: &[OutputBit], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&bits_to_string(bits))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<OutputBit>, D::Error> {
        let s = String::deserialize(d)?;
        bits_from_str(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Instances {
    Sc(Vec<ScInstance>),
    Transducer(Vec<TransducerInstance>),
}

impl Instances {
    pub fn len(&self) -> usize {
        match self {
            Instances::Sc(v) => v.len(),
            Instances::Transducer(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub dfa_id: u64,
    pub kind: TaskKind,
    pub config: TaskConfig,
    pub instances: Instances,
}

impl TaskSet {
    pub fn sc_instances(&self) -> &[ScInstance] {
        match &self.instances {
            Instances::Sc(v) => v,
            Instances::Transducer(_) => &[],
        }
    }

    pub fn transducer_instances(&self) -> &[TransducerInstance] {
        match &self.instances {
            Instances::Transducer(v) => v,
            Instances::Sc(_) => &[],
        }
    }

    pub fn targets(&self) -> Vec<OutputBit> {
        self.transducer_instances().iter().map(|i| i.target).collect()
    }

    /// The task set as a predictor may see it: transducer targets removed.
    pub fn public(&self) -> PublicTaskSet {
        let instances = match &self.instances {
            Instances::Sc(v) => PublicInstances::Sc(v.clone()),
            Instances::Transducer(v) => PublicInstances::Transducer(
                v.iter()
                    .map(|i| PublicTransducerInstance {
                        symbols: i.symbols.clone(),
                        revealed: i.revealed.clone(),
                    })
                    .collect(),
            ),
        };
        PublicTaskSet { dfa_id: self.dfa_id, kind: self.kind, config: self.config.clone(), instances }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicTransducerInstance {
    pub symbols: Word,
    #[serde(with = "bit_string")]
    pub revealed: Vec<OutputBit>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PublicInstances {
    Sc(Vec<ScInstance>),
    Transducer(Vec<PublicTransducerInstance>),
}

impl PublicInstances {
    pub fn len(&self) -> usize {
        match self {
            PublicInstances::Sc(v) => v.len(),
            PublicInstances::Transducer(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A task set without hidden targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicTaskSet {
    pub dfa_id: u64,
    pub kind: TaskKind,
    pub config: TaskConfig,
    pub instances: PublicInstances,
}

/// Uniform word of length `len` accepted by `dfa`, plus the number of
/// rejected proposals before it.
pub(crate) fn sample_example_counted<R: Rng + ?Sized>(
    dfa: &Dfa,
    rng: &mut R,
    len: usize,
    max_rejections: usize,
) -> Result<(Word, usize), TaskError> {
    for rejected in 0..max_rejections {
        let w = Word::random(rng, len);
        if dfa.accepts(w.symbols()) {
            return Ok((w, rejected));
        }
    }
    Err(TaskError::SamplingExhausted(max_rejections))
}

pub fn sample_example<R: Rng + ?Sized>(
    dfa: &Dfa,
    rng: &mut R,
    len: usize,
    max_rejections: usize,
) -> Result<Word, TaskError> {
    sample_example_counted(dfa, rng, len, max_rejections).map(|(w, _)| w)
}

/// Draws (prefix, completion) pairs until the concatenation is accepted and
/// the prefix starts none of `examples`; returns the prefix only.
pub fn sample_prefix<R: Rng + ?Sized>(
    dfa: &Dfa,
    examples: &[Word],
    rng: &mut R,
    cfg: &TaskConfig,
) -> Result<Word, TaskError> {
    for _ in 0..cfg.max_rejections {
        let prefix = Word::random(rng, cfg.prefix_len);
        let completion = Word::random(rng, cfg.completion_len);
        let q = dfa.run(prefix.symbols());
        if !dfa.is_accepting(dfa.run_from(q, completion.symbols())) {
            continue;
        }
        if examples.iter().any(|e| e.starts_with(&prefix)) {
            continue;
        }
        return Ok(prefix);
    }
    Err(TaskError::SamplingExhausted(cfg.max_rejections))
}

pub fn sample_sc_instance<R: Rng + ?Sized>(
    dfa: &Dfa,
    rng: &mut R,
    cfg: &TaskConfig,
) -> Result<ScInstance, TaskError> {
    let examples = (0..cfg.num_examples)
        .map(|_| sample_example(dfa, rng, cfg.example_len, cfg.max_rejections))
        .collect::<Result<Vec<_>, _>>()?;
    let prefix = sample_prefix(dfa, &examples, rng, cfg)?;
    Ok(ScInstance { examples, prefix })
}

/// Sequence-completion task set for one DFA, or `DfaRejected` if the pilot
/// instance cannot be sampled.
///
/// The pilot draws from `seeds.child("pilot", 0)`; instance `j` draws from
/// `seeds.child("instance", j)`, redrawing from the same stream on failure.
pub fn sample_sc_taskset(
    dfa: &Dfa,
    dfa_id: u64,
    seeds: &SeedTree,
    cfg: &TaskConfig,
) -> Result<TaskSet, TaskError> {
    sample_sc_instance(dfa, &mut seeds.child("pilot", 0).rng(), cfg)
        .map_err(|e| TaskError::DfaRejected(format!("pilot instance failed: {e}")))?;
    let mut instances = Vec::with_capacity(cfg.num_instances);
    for j in 0..cfg.num_instances {
        let mut rng = seeds.child("instance", j as u64).rng();
        let inst = (0..INSTANCE_RETRY_CAP)
            .find_map(|_| sample_sc_instance(dfa, &mut rng, cfg).ok())
            .ok_or_else(|| {
                TaskError::DfaRejected(format!(
                    "instance {j} failed {INSTANCE_RETRY_CAP} times after a successful pilot"
                ))
            })?;
        instances.push(inst);
    }
    Ok(TaskSet {
        dfa_id,
        kind: TaskKind::SequenceCompletion,
        config: cfg.clone(),
        instances: Instances::Sc(instances),
    })
}

pub fn sample_transducer_instance<R: Rng + ?Sized>(
    dfa: &Dfa,
    rng: &mut R,
    seq_len: usize,
) -> TransducerInstance {
    assert!(seq_len >= 1, "a transducer instance needs at least one symbol");
    let symbols = Word::random(rng, seq_len);
    let mut outputs = dfa.transduce(symbols.symbols()).outputs;
    let target = outputs.pop().expect("nonempty trace");
    TransducerInstance { symbols, revealed: outputs, target }
}

/// Transducer task set for one DFA, or `DfaRejected` when all targets agree.
pub fn sample_transducer_taskset(
    dfa: &Dfa,
    dfa_id: u64,
    seeds: &SeedTree,
    cfg: &TaskConfig,
) -> Result<TaskSet, TaskError> {
    let instances: Vec<TransducerInstance> = (0..cfg.num_instances)
        .map(|j| sample_transducer_instance(dfa, &mut seeds.child("instance", j as u64).rng(), cfg.seq_len))
        .collect();
    let ones = instances.iter().filter(|i| i.target.is_one()).count();
    if ones == 0 || ones == instances.len() {
        return Err(TaskError::DfaRejected(format!(
            "all {} transducer targets are {}",
            instances.len(),
            if ones == 0 { 0 } else { 1 }
        )));
    }
    Ok(TaskSet {
        dfa_id,
        kind: TaskKind::Transducer,
        config: cfg.clone(),
        instances: Instances::Transducer(instances),
    })
}

/// One benchmark slot: the surviving DFA and its task set.
#[derive(Clone, Debug)]
pub struct GeneratedTask {
    pub id: u64,
    pub dfa: Dfa,
    /// Hex seed of the attempt node that produced this DFA and its tasks.
    pub seed: String,
    /// DFAs rejected in this slot before this one survived.
    pub rejected_dfas: u64,
    pub taskset: TaskSet,
}

/// Generates `num_dfas` surviving DFAs with their task sets.
///
/// Slot `i` uses `master.child("dfa", i)`; its `a`-th DFA proposal uses
/// `slot.child("attempt", a)`, drawing the DFA from `attempt.child("dfa", 0)`
/// and the task set from the attempt node itself. Slots are independent, so
/// the result does not depend on scheduling.
pub fn generate_benchmark(
    kind: TaskKind,
    num_dfas: usize,
    master: &SeedTree,
    cfg: &TaskConfig,
) -> Result<Vec<GeneratedTask>, TaskError> {
    (0..num_dfas as u64)
        .into_par_iter()
        .map(|id| generate_slot(kind, id, master, cfg))
        .collect()
}

pub fn generate_slot(
    kind: TaskKind,
    id: u64,
    master: &SeedTree,
    cfg: &TaskConfig,
) -> Result<GeneratedTask, TaskError> {
    let slot = master.child("dfa", id);
    for attempt in 0..SLOT_ATTEMPT_CAP {
        let node = slot.child("attempt", attempt);
        let dfa = sample_dfa(&mut node.child("dfa", 0).rng(), cfg.num_states)?;
        let result = match kind {
            TaskKind::SequenceCompletion => sample_sc_taskset(&dfa, id, &node, cfg),
            TaskKind::Transducer => sample_transducer_taskset(&dfa, id, &node, cfg),
        };
        match result {
            Ok(taskset) => {
                return Ok(GeneratedTask {
                    id,
                    dfa,
                    seed: node.to_hex(),
                    rejected_dfas: attempt,
                    taskset,
                })
            }
            Err(TaskError::DfaRejected(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(TaskError::DfaRejected(format!(
        "slot {id}: no DFA survived {SLOT_ATTEMPT_CAP} proposals"
    )))
}

/// The regular expression used by the tokenization control.
pub const REGEX_CONTROL_PATTERN: &str = "^ab(abc)+$";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegexControlItem {
    pub text: String,
    pub label: bool,
}

/// Valid strings `ab(abc)^k` with `k` uniform in `1..=5`, each mutated at one
/// uniform position to a different uniform letter with probability 1/2.
/// Labels come from matching the pattern, not from the mutation flag.
pub fn sample_regex_control<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<RegexControlItem> {
    let pattern = Regex::new(REGEX_CONTROL_PATTERN).expect("valid pattern");
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..=5u32) as usize;
            let mut chars: Vec<char> = format!("ab{}", "abc".repeat(k)).chars().collect();
            if rng.random_bool(0.5) {
                let pos = rng.random_range(0..chars.len() as u32) as usize;
                let others: Vec<char> = Symbol::ALL
                    .iter()
                    .map(|s| s.as_char())
                    .filter(|&c| c != chars[pos])
                    .collect();
                chars[pos] = others[rng.random_range(0..others.len() as u32) as usize];
            }
            let text: String = chars.into_iter().collect();
            let label = pattern.is_match(&text);
            RegexControlItem { text, label }
        })
        .collect()
}
