//! Deterministic finite automata over the three-letter alphabet `{a, b, c}`.
//!
//! A [`Dfa`] is used both as an acceptor ([`Dfa::accepts`]) and as a
//! transducer that reports the accept bit after every symbol
//! ([`Dfa::transduce`]). [`sample_dfa`] draws the random automata behind a
//! benchmark and [`DfaSpace`] walks the complete raw configuration space used
//! by the brute-force baselines.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DfaError;

/// Size of the input alphabet.
pub const ALPHABET: usize = 3;

/// Maximum number of whole-DFA proposals drawn by [`sample_dfa`].
pub const DFA_REJECTION_CAP: usize = 10_000;

/// An input letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    A,
    B,
    C,
}

impl Symbol {
    pub const ALL: [Symbol; ALPHABET] = [Symbol::A, Symbol::B, Symbol::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Symbol> {
        Symbol::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::A => 'a',
            Symbol::B => 'b',
            Symbol::C => 'c',
        }
    }

    pub fn from_char(c: char) -> Option<Symbol> {
        match c {
            'a' => Some(Symbol::A),
            'b' => Some(Symbol::B),
            'c' => Some(Symbol::C),
            _ => None,
        }
    }

    pub(crate) fn random<R: Rng + ?Sized>(rng: &mut R) -> Symbol {
        Symbol::ALL[rng.random_range(0..ALPHABET as u32) as usize]
    }
}

/// Transducer output: whether the state reached is accepting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutputBit {
    Zero,
    One,
}

impl OutputBit {
    pub fn as_char(self) -> char {
        match self {
            OutputBit::Zero => '0',
            OutputBit::One => '1',
        }
    }

    pub fn from_char(c: char) -> Option<OutputBit> {
        match c {
            '0' => Some(OutputBit::Zero),
            '1' => Some(OutputBit::One),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_one(self) -> bool {
        self == OutputBit::One
    }
}

impl From<bool> for OutputBit {
    fn from(b: bool) -> Self {
        if b {
            OutputBit::One
        } else {
            OutputBit::Zero
        }
    }
}

impl Serialize for OutputBit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for OutputBit {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match u8::deserialize(deserializer)? {
            0 => Ok(OutputBit::Zero),
            1 => Ok(OutputBit::One),
            other => Err(serde::de::Error::custom(format!("output bit must be 0 or 1, got {other}"))),
        }
    }
}

/// Renders bits as a `0`/`1` string.
pub fn bits_to_string(bits: &[OutputBit]) -> String {
    bits.iter().map(|b| b.as_char()).collect()
}

pub fn bits_from_str(s: &str) -> Result<Vec<OutputBit>, DfaError> {
    s.chars()
        .map(|c| OutputBit::from_char(c).ok_or(DfaError::BadSymbol(c)))
        .collect()
}

/// A string over the input alphabet.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub Vec<Symbol>);

impl Word {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Word(symbols)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Word {
        Word((0..len).map(|_| Symbol::random(rng)).collect())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// All words of exactly `len` letters in lexicographic order.
    pub fn all_of_length(len: usize) -> impl Iterator<Item = Word> {
        let total = ALPHABET.pow(len as u32);
        (0..total).map(move |mut code| {
            let mut v = vec![Symbol::A; len];
            for slot in v.iter_mut().rev() {
                *slot = Symbol::ALL[code % ALPHABET];
                code /= ALPHABET;
            }
            Word(v)
        })
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = DfaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| Symbol::from_char(c).ok_or(DfaError::BadSymbol(c)))
            .collect::<Result<Vec<_>, _>>()
            .map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-symbol accept bits produced by running a DFA as a transducer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransducerTrace {
    pub symbols: Word,
    pub outputs: Vec<OutputBit>,
}

/// A complete DFA. States are `0..num_states`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDfa", into = "RawDfa")]
pub struct Dfa {
    start: usize,
    transitions: Vec<[usize; ALPHABET]>,
    accept: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct RawDfa {
    num_states: usize,
    start: usize,
    transitions: Vec<[usize; ALPHABET]>,
    accept: Vec<bool>,
}

impl TryFrom<RawDfa> for Dfa {
    type Error = DfaError;

    fn try_from(raw: RawDfa) -> Result<Self, Self::Error> {
        if raw.transitions.len() != raw.num_states {
            return Err(DfaError::Malformed(format!(
                "num_states is {} but {} transition rows were given",
                raw.num_states,
                raw.transitions.len()
            )));
        }
        Dfa::new(raw.start, raw.transitions, raw.accept)
    }
}

impl From<Dfa> for RawDfa {
    fn from(d: Dfa) -> Self {
        RawDfa {
            num_states: d.num_states(),
            start: d.start,
            transitions: d.transitions,
            accept: d.accept,
        }
    }
}

impl Dfa {
    pub fn new(
        start: usize,
        transitions: Vec<[usize; ALPHABET]>,
        accept: Vec<bool>,
    ) -> Result<Dfa, DfaError> {
        let n = transitions.len();
        if n == 0 {
            return Err(DfaError::Malformed("a DFA needs at least one state".into()));
        }
        if accept.len() != n {
            return Err(DfaError::Malformed(format!(
                "{} states but {} accept flags",
                n,
                accept.len()
            )));
        }
        if start >= n {
            return Err(DfaError::StateOutOfRange { state: start, num_states: n });
        }
        if let Some(&bad) = transitions.iter().flatten().find(|&&t| t >= n) {
            return Err(DfaError::StateOutOfRange { state: bad, num_states: n });
        }
        Ok(Dfa { start, transitions, accept })
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn transitions(&self) -> &[[usize; ALPHABET]] {
        &self.transitions
    }

    pub fn accept(&self) -> &[bool] {
        &self.accept
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accept[state]
    }

    pub fn num_accepting(&self) -> usize {
        self.accept.iter().filter(|&&a| a).count()
    }

    /// One transition. Rejects a state outside `0..num_states`.
    pub fn step(&self, state: usize, sym: Symbol) -> Result<usize, DfaError> {
        self.transitions
            .get(state)
            .map(|row| row[sym.index()])
            .ok_or(DfaError::StateOutOfRange { state, num_states: self.num_states() })
    }

    #[inline]
    pub(crate) fn next(&self, state: usize, sym: Symbol) -> usize {
        self.transitions[state][sym.index()]
    }

    /// State reached from `from` after reading `symbols`.
    pub fn run_from(&self, from: usize, symbols: &[Symbol]) -> usize {
        symbols.iter().fold(from, |q, &s| self.next(q, s))
    }

    pub fn run(&self, symbols: &[Symbol]) -> usize {
        self.run_from(self.start, symbols)
    }

    pub fn accepts(&self, symbols: &[Symbol]) -> bool {
        self.accept[self.run(symbols)]
    }

    pub fn transduce(&self, symbols: &[Symbol]) -> TransducerTrace {
        let mut q = self.start;
        let outputs = symbols
            .iter()
            .map(|&s| {
                q = self.next(q, s);
                OutputBit::from(self.accept[q])
            })
            .collect();
        TransducerTrace { symbols: Word(symbols.to_vec()), outputs }
    }

    /// States reachable from the start state.
    pub fn reachable_states(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([self.start]);
        let mut frontier = vec![self.start];
        while let Some(q) = frontier.pop() {
            for &t in &self.transitions[q] {
                if seen.insert(t) {
                    frontier.push(t);
                }
            }
        }
        seen
    }

    /// All states reachable and the accept set neither empty nor full.
    pub fn is_valid_sample(&self) -> bool {
        let k = self.num_accepting();
        k > 0 && k < self.num_states() && self.reachable_states().len() == self.num_states()
    }

    /// Canonical byte encoding: start, the transition targets in
    /// (state, symbol) row-major order, then one byte per accept flag.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.num_states() * (ALPHABET + 1));
        out.push(self.start as u8);
        out.extend(self.transitions.iter().flatten().map(|&t| t as u8));
        out.extend(self.accept.iter().map(|&a| a as u8));
        out
    }
}

/// Draws DFAs until one has every state reachable and a proper, nonempty
/// accept set.
///
/// Each proposal draws the start state, then each (state, symbol) target in
/// row-major order, then one fair coin per state for the accept flag.
pub fn sample_dfa<R: Rng + ?Sized>(rng: &mut R, num_states: usize) -> Result<Dfa, DfaError> {
    if num_states < 2 {
        return Err(DfaError::Malformed(format!(
            "sampling needs at least 2 states, got {num_states}"
        )));
    }
    let n = num_states as u32;
    for _ in 0..DFA_REJECTION_CAP {
        let start = rng.random_range(0..n) as usize;
        let transitions: Vec<[usize; ALPHABET]> = (0..num_states)
            .map(|_| std::array::from_fn(|_| rng.random_range(0..n) as usize))
            .collect();
        let accept: Vec<bool> = (0..num_states).map(|_| rng.random_bool(0.5)).collect();
        let dfa = Dfa { start, transitions, accept };
        if dfa.is_valid_sample() {
            return Ok(dfa);
        }
    }
    Err(DfaError::RejectionCapExceeded(DFA_REJECTION_CAP))
}

/// The raw configuration space of all DFAs with a given number of states:
/// every start state, every transition table, and every accept set.
///
/// Index order is start-major, then the transition table read as a base
/// `num_states` integer whose most significant digit is the (state 0, `a`)
/// entry, then the accept set as a bitmask with state `q` at bit `q`.
#[derive(Clone, Copy, Debug)]
pub struct DfaSpace {
    num_states: usize,
    tables: u64,
}

impl DfaSpace {
    pub fn new(num_states: usize) -> DfaSpace {
        assert!(num_states >= 1 && num_states <= 4, "configuration space too large");
        let tables = (num_states as u64).pow((ALPHABET * num_states) as u32);
        DfaSpace { num_states, tables }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_tables(&self) -> u64 {
        self.tables
    }

    pub fn len(&self) -> u64 {
        self.num_states as u64 * self.tables * (1u64 << self.num_states)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transition table number `code` in canonical digit order.
    pub fn table(&self, mut code: u64) -> Vec<[usize; ALPHABET]> {
        let n = self.num_states as u64;
        let mut rows = vec![[0usize; ALPHABET]; self.num_states];
        for k in (0..self.num_states * ALPHABET).rev() {
            rows[k / ALPHABET][k % ALPHABET] = (code % n) as usize;
            code /= n;
        }
        rows
    }

    pub fn get(&self, index: u64) -> Dfa {
        assert!(index < self.len(), "index {index} outside the configuration space");
        let masks = 1u64 << self.num_states;
        let mask = index % masks;
        let rest = index / masks;
        let table = rest % self.tables;
        let start = (rest / self.tables) as usize;
        Dfa {
            start,
            transitions: self.table(table),
            accept: (0..self.num_states).map(|q| mask >> q & 1 == 1).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Dfa> + '_ {
        self.range(0..self.len())
    }

    /// A contiguous slice of the canonical order, for splitting work.
    pub fn range(&self, r: std::ops::Range<u64>) -> impl Iterator<Item = Dfa> + '_ {
        r.map(move |i| self.get(i))
    }
}

/// Every raw DFA configuration with `num_states` states, in canonical order.
pub fn enumerate_all(num_states: usize) -> impl Iterator<Item = Dfa> {
    let space = DfaSpace::new(num_states);
    (0..space.len()).map(move |i| space.get(i))
}
