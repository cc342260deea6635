//! n-gram baselines with backoff, and the longest-match (infinity-gram)
//! transducer predictor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::simple::COMPLETION_MAX;
use crate::dfa::{OutputBit, Symbol, Word};
use crate::taskgen::TransducerInstance;

/// How an n-gram transducer vote with no majority is resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// The follower of the rightmost matching occurrence.
    #[default]
    RightmostOccurrence,
    /// The last revealed output of the trace.
    LastRevealed,
}

/// Plurality completion following the last `n - 1` prefix letters in the
/// examples, backing off to shorter contexts when nothing matches.
///
/// A match counts only where the rest of the example is 1 to 5 letters long;
/// that rest is the candidate completion. Ties go to the lexicographically
/// smallest candidate. With an empty context every 1-5 letter terminal
/// suffix is a candidate.
pub fn ngram_s(n: usize, examples: &[Word], prefix: &Word) -> Word {
    assert!(n >= 1, "n-gram order must be at least 1");
    let prefix = prefix.symbols();
    let longest = (n - 1).min(prefix.len());
    for ctx_len in (0..=longest).rev() {
        if let Some(w) = plurality_completion(examples, &prefix[prefix.len() - ctx_len..]) {
            return w;
        }
    }
    unreachable!("the empty context matches every example of length >= 1")
}

fn plurality_completion(examples: &[Word], context: &[Symbol]) -> Option<Word> {
    let mut votes: BTreeMap<&[Symbol], usize> = BTreeMap::new();
    for e in examples {
        let syms = e.symbols();
        let lo = context.len().max(syms.len().saturating_sub(COMPLETION_MAX));
        for end in lo..syms.len() {
            if &syms[end - context.len()..end] == context {
                *votes.entry(&syms[end..]).or_default() += 1;
            }
        }
    }
    let mut best: Option<(&[Symbol], usize)> = None;
    for (&cand, &count) in &votes {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((cand, count));
        }
    }
    best.map(|(c, _)| Word(c.to_vec()))
}

/// n-gram transducer prediction over the interleaved trace
/// `s1 o1 ... s(L-1) o(L-1) sL`.
pub fn ngram_t(n: usize, inst: &TransducerInstance, tie: TieRule) -> OutputBit {
    assert!(n >= 1, "n-gram order must be at least 1");
    let s = inst.interleaved();
    let longest = (n - 1).min(s.len());
    for ctx_len in (1..=longest).rev() {
        if let Some(b) = vote_after_context(&s, ctx_len, inst, tie) {
            return b;
        }
    }
    base_case(inst)
}

/// Majority over the revealed outputs; ties predict the last revealed output.
fn base_case(inst: &TransducerInstance) -> OutputBit {
    let ones = inst.revealed.iter().filter(|b| b.is_one()).count();
    let zeros = inst.revealed.len() - ones;
    match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => OutputBit::One,
        std::cmp::Ordering::Less => OutputBit::Zero,
        std::cmp::Ordering::Equal => inst.revealed.last().copied().unwrap_or(OutputBit::One),
    }
}

/// Votes among the characters that follow earlier occurrences of the final
/// `ctx_len` characters. `None` when there is no such occurrence.
fn vote_after_context(
    s: &[char],
    ctx_len: usize,
    inst: &TransducerInstance,
    tie: TieRule,
) -> Option<OutputBit> {
    let context = &s[s.len() - ctx_len..];
    let (mut zeros, mut ones) = (0usize, 0usize);
    let mut rightmost = None;
    for start in 0..s.len() - ctx_len {
        if &s[start..start + ctx_len] != context {
            continue;
        }
        // Letters and digits alternate and the context ends on a letter, so
        // every follower is an output digit.
        let bit = OutputBit::from_char(s[start + ctx_len])
            .expect("context occurrences are phase-aligned");
        match bit {
            OutputBit::Zero => zeros += 1,
            OutputBit::One => ones += 1,
        }
        rightmost = Some(bit);
    }
    let rightmost = rightmost?;
    Some(match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => OutputBit::One,
        std::cmp::Ordering::Less => OutputBit::Zero,
        std::cmp::Ordering::Equal => match tie {
            TieRule::RightmostOccurrence => rightmost,
            TieRule::LastRevealed => *inst.revealed.last().unwrap_or(&OutputBit::One),
        },
    })
}

/// Length of the longest suffix of the trace that also occurs earlier with a
/// follower.
pub fn longest_match(s: &[char]) -> usize {
    let n = s.len();
    (1..n)
        .map(|end| {
            s[..end]
                .iter()
                .rev()
                .zip(s.iter().rev())
                .take_while(|(a, b)| a == b)
                .count()
        })
        .max()
        .unwrap_or(0)
}

/// Copies the follower of the longest earlier match of the trace's ending,
/// voting across all occurrences of that match as the n-gram rule does.
pub fn infinity_gram_t(inst: &TransducerInstance, tie: TieRule) -> OutputBit {
    let s = inst.interleaved();
    match longest_match(&s) {
        0 => base_case(inst),
        k => vote_after_context(&s, k, inst, tie).expect("longest match has an occurrence"),
    }
}
