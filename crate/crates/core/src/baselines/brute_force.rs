//! Exhaustive vote over every 3-state DFA consistent with the evidence.
//!
//! Instead of testing 472,392 configurations one by one, the work is grouped
//! by (transition table, start state). Running the evidence once through a
//! table yields constraints on the accept set, and the number of accept sets
//! satisfying them is a power of two. The resulting tallies are exactly the
//! counts a literal enumeration would produce.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::dfa::{DfaSpace, OutputBit, Symbol, Word, ALPHABET};
use crate::error::BaselineError;
use crate::taskgen::{ScInstance, TransducerInstance};

const STATES: usize = 3;
/// Completions considered by the sequence-completion oracle: every word of
/// length 5, in lexicographic order.
pub const BF_COMPLETION_LEN: usize = 5;
pub const BF_COMPLETIONS: usize = 243;

type Table = [[u8; ALPHABET]; STATES];

/// All 19,683 transition tables, built once per process.
fn tables() -> &'static [Table] {
    static TABLES: OnceLock<Vec<Table>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let space = DfaSpace::new(STATES);
        (0..space.num_tables())
            .map(|code| {
                let rows = space.table(code);
                let mut t = [[0u8; ALPHABET]; STATES];
                for (q, row) in rows.iter().enumerate() {
                    for (s, &to) in row.iter().enumerate() {
                        t[q][s] = to as u8;
                    }
                }
                t
            })
            .collect()
    })
}

fn indices(w: &[Symbol]) -> Vec<u8> {
    w.iter().map(|s| s.index() as u8).collect()
}

#[inline]
fn run(t: &Table, from: u8, word: &[u8]) -> u8 {
    word.iter().fold(from, |q, &s| t[q as usize][s as usize])
}

/// Runs `f` over every table and sums the per-table tallies. The serial and
/// parallel paths add the same integers, so they agree exactly.
fn fold_tables<T, F>(parallel: bool, init: fn() -> T, f: F, merge: fn(T, T) -> T) -> T
where
    T: Send,
    F: Fn(&mut T, &Table) + Sync,
{
    let all = tables();
    if parallel {
        all.par_chunks(512)
            .map(|chunk| {
                let mut acc = init();
                chunk.iter().for_each(|t| f(&mut acc, t));
                acc
            })
            .reduce(init, merge)
    } else {
        let mut acc = init();
        all.iter().for_each(|t| f(&mut acc, t));
        acc
    }
}

/// Per-completion counts of consistent DFAs that accept `prefix + c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionTally {
    /// DFAs accepting every example.
    pub consistent: u64,
    /// Indexed by completion in lexicographic order.
    pub counts: Vec<u64>,
}

impl CompletionTally {
    /// The most accepted completion; ties go to the lexicographically smallest.
    pub fn best(&self) -> Word {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        completion_word(best)
    }
}

/// The length-5 word with lexicographic rank `index`.
pub fn completion_word(mut index: usize) -> Word {
    let mut syms = [Symbol::A; BF_COMPLETION_LEN];
    for slot in syms.iter_mut().rev() {
        *slot = Symbol::ALL[index % ALPHABET];
        index /= ALPHABET;
    }
    Word(syms.to_vec())
}

struct ScAcc {
    consistent: u64,
    // Weight added to every completion.
    base: u64,
    bonus: Vec<u64>,
}

/// Tallies completions over all DFAs that accept every example.
///
/// For a fixed (table, start), let `E` be the set of example end states. The
/// consistent accept sets are the supersets of `E`; a completion ending in
/// `f` is accepted by `2^(3 - |E ∪ {f}|)` of them.
pub fn brute_force_s_tally(examples: &[Word], prefix: &Word, parallel: bool) -> CompletionTally {
    let examples: Vec<Vec<u8>> = examples.iter().map(|e| indices(e.symbols())).collect();
    let prefix = indices(prefix.symbols());
    let acc = fold_tables(
        parallel,
        || ScAcc { consistent: 0, base: 0, bonus: vec![0; BF_COMPLETIONS] },
        |acc, t| {
            let mut ends: [Option<[u8; BF_COMPLETIONS]>; STATES] = [None; STATES];
            for start in 0..STATES as u8 {
                let mut e_mask = 0u8;
                for ex in &examples {
                    e_mask |= 1 << run(t, start, ex);
                    if e_mask == 0b111 {
                        break;
                    }
                }
                let k = e_mask.count_ones();
                acc.consistent += 1 << (STATES as u32 - k);
                if k == STATES as u32 {
                    // Only the all-accepting set remains; it accepts everything.
                    acc.base += 1;
                    continue;
                }
                let w = 1u64 << (STATES as u32 - 1 - k);
                acc.base += w;
                let p = run(t, start, &prefix) as usize;
                let ends = ends[p].get_or_insert_with(|| completion_ends(t, p as u8));
                for (c, &f) in ends.iter().enumerate() {
                    if e_mask >> f & 1 == 1 {
                        acc.bonus[c] += w;
                    }
                }
            }
        },
        |mut a, b| {
            a.consistent += b.consistent;
            a.base += b.base;
            a.bonus.iter_mut().zip(&b.bonus).for_each(|(x, y)| *x += y);
            a
        },
    );
    CompletionTally {
        consistent: acc.consistent,
        counts: acc.bonus.iter().map(|b| acc.base + b).collect(),
    }
}

/// End state of every length-5 completion read from `from`.
fn completion_ends(t: &Table, from: u8) -> [u8; BF_COMPLETIONS] {
    let mut layer = vec![from];
    for _ in 0..BF_COMPLETION_LEN {
        layer = layer
            .iter()
            .flat_map(|&q| t[q as usize].iter().copied())
            .collect();
    }
    layer.try_into().expect("3^5 completions")
}

pub fn brute_force_s(
    examples: &[Word],
    prefix: &Word,
    parallel: bool,
) -> Result<Word, BaselineError> {
    let tally = brute_force_s_tally(examples, prefix, parallel);
    if tally.consistent == 0 {
        return Err(BaselineError::NoConsistentDfa);
    }
    Ok(tally.best())
}

pub fn brute_force_s_instance(inst: &ScInstance, parallel: bool) -> Result<Word, BaselineError> {
    brute_force_s(&inst.examples, &inst.prefix, parallel)
}

/// Votes of the consistent DFAs for the next output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BitVotes {
    pub zeros: u64,
    pub ones: u64,
}

impl BitVotes {
    pub fn consistent(&self) -> u64 {
        self.zeros + self.ones
    }

    /// Majority; no majority predicts 1.
    pub fn majority(&self) -> OutputBit {
        OutputBit::from(self.ones >= self.zeros)
    }

    pub fn is_unanimous(&self) -> bool {
        self.consistent() > 0 && (self.zeros == 0 || self.ones == 0)
    }
}

/// Votes for the output after `symbols[revealed.len()]` over every DFA whose
/// outputs on the first `revealed.len()` symbols equal `revealed`.
pub fn brute_force_t_votes(symbols: &[Symbol], revealed: &[OutputBit], parallel: bool) -> BitVotes {
    assert!(symbols.len() > revealed.len(), "no symbol left to predict");
    let symbols = indices(&symbols[..revealed.len() + 1]);
    let revealed: Vec<bool> = revealed.iter().map(|b| b.is_one()).collect();
    fold_tables(
        parallel,
        BitVotes::default,
        |votes, t| {
            'start: for start in 0..STATES as u8 {
                let (mut ones, mut zeros) = (0u8, 0u8);
                let mut q = start;
                for (&s, &bit) in symbols.iter().zip(&revealed) {
                    q = t[q as usize][s as usize];
                    if bit {
                        ones |= 1 << q;
                    } else {
                        zeros |= 1 << q;
                    }
                    if ones & zeros != 0 {
                        continue 'start;
                    }
                }
                q = t[q as usize][*symbols.last().expect("nonempty") as usize];
                let free = STATES as u32 - (ones | zeros).count_ones();
                if ones >> q & 1 == 1 {
                    votes.ones += 1 << free;
                } else if zeros >> q & 1 == 1 {
                    votes.zeros += 1 << free;
                } else {
                    votes.ones += 1 << (free - 1);
                    votes.zeros += 1 << (free - 1);
                }
            }
        },
        |a, b| BitVotes { zeros: a.zeros + b.zeros, ones: a.ones + b.ones },
    )
}

pub fn brute_force_t(inst: &TransducerInstance, parallel: bool) -> Result<OutputBit, BaselineError> {
    let votes = brute_force_t_votes(inst.symbols.symbols(), &inst.revealed, parallel);
    if votes.consistent() == 0 {
        return Err(BaselineError::NoConsistentDfa);
    }
    Ok(votes.majority())
}
