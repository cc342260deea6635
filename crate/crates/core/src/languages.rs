//! Counting distinct languages in the raw 3-state configuration space.
//!
//! Two DFAs with `m` and `n` states that recognise different languages
//! disagree on some word of length at most `m + n - 2`, so for `n <= 3` the
//! acceptance pattern over all words of length `<= 4` identifies the
//! language exactly. The same bound applies to residual languages of states
//! inside one DFA, which gives the minimal state count.

use std::collections::HashSet;

use crate::dfa::{Dfa, DfaSpace, ALPHABET};

/// Word length sufficient to separate languages of DFAs with at most 3 states.
pub const SEPARATING_LENGTH: usize = 4;

/// Acceptance of every word of length `<= depth` read from `from`, packed in
/// breadth-first (shortlex) order. `depth` must keep the word count `<= 128`.
pub fn residual_signature(dfa: &Dfa, from: usize, depth: usize) -> u128 {
    let words: usize = (0..=depth).map(|l| ALPHABET.pow(l as u32)).sum();
    assert!(words <= 128, "depth {depth} needs {words} bits");
    let mut sig = 0u128;
    let mut bit = 0;
    let mut layer = vec![from];
    for level in 0..=depth {
        for &q in &layer {
            if dfa.is_accepting(q) {
                sig |= 1 << bit;
            }
            bit += 1;
        }
        if level < depth {
            layer = layer
                .iter()
                .flat_map(|&q| dfa.transitions()[q].iter().copied())
                .collect();
        }
    }
    sig
}

pub fn language_signature(dfa: &Dfa) -> u128 {
    residual_signature(dfa, dfa.start(), SEPARATING_LENGTH)
}

/// Number of states of the minimal DFA for this DFA's language.
pub fn minimal_state_count(dfa: &Dfa) -> usize {
    dfa.reachable_states()
        .into_iter()
        .map(|q| residual_signature(dfa, q, SEPARATING_LENGTH))
        .collect::<HashSet<_>>()
        .len()
}

/// Counts of the 3-state configuration space under several conventions.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct LanguageCounts {
    /// Every raw configuration.
    pub raw_configurations: u64,
    /// Configurations passing the sampler's filters (all states reachable,
    /// accept set neither empty nor full).
    pub valid_configurations: u64,
    /// Distinct languages over all raw configurations.
    pub languages_all: u64,
    /// Distinct languages among valid configurations.
    pub languages_valid: u64,
    /// Distinct languages whose minimal DFA has exactly 3 states.
    pub languages_minimal_3: u64,
    /// Distinct languages whose minimal DFA has exactly 2 states.
    pub languages_minimal_2: u64,
    /// Distinct languages whose minimal DFA has exactly 1 state.
    pub languages_minimal_1: u64,
    /// Raw configurations up to renaming of states.
    pub isomorphism_classes_all: u64,
    /// Valid configurations up to renaming of states.
    pub isomorphism_classes_valid: u64,
}

const PERMUTATIONS_3: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Smallest canonical encoding over all renamings of the states.
pub fn isomorphism_class(dfa: &Dfa) -> Vec<u8> {
    assert_eq!(dfa.num_states(), 3);
    PERMUTATIONS_3
        .iter()
        .map(|p| {
            let mut transitions = vec![[0usize; ALPHABET]; 3];
            let mut accept = vec![false; 3];
            for q in 0..3 {
                for s in 0..ALPHABET {
                    transitions[p[q]][s] = p[dfa.transitions()[q][s]];
                }
                accept[p[q]] = dfa.is_accepting(q);
            }
            Dfa::new(p[dfa.start()], transitions, accept)
                .expect("renaming preserves validity")
                .canonical_bytes()
        })
        .min()
        .expect("six permutations")
}

pub fn count_languages() -> LanguageCounts {
    let space = DfaSpace::new(3);
    let mut all = HashSet::new();
    let mut valid = HashSet::new();
    let mut by_size = [HashSet::new(), HashSet::new(), HashSet::new()];
    let mut iso_all = HashSet::new();
    let mut iso_valid = HashSet::new();
    let mut counts = LanguageCounts::default();
    for dfa in space.iter() {
        counts.raw_configurations += 1;
        let sig = language_signature(&dfa);
        if all.insert(sig) {
            by_size[minimal_state_count(&dfa) - 1].insert(sig);
        }
        let iso = isomorphism_class(&dfa);
        if dfa.is_valid_sample() {
            counts.valid_configurations += 1;
            valid.insert(sig);
            iso_valid.insert(iso.clone());
        }
        iso_all.insert(iso);
    }
    counts.languages_all = all.len() as u64;
    counts.languages_valid = valid.len() as u64;
    counts.languages_minimal_1 = by_size[0].len() as u64;
    counts.languages_minimal_2 = by_size[1].len() as u64;
    counts.languages_minimal_3 = by_size[2].len() as u64;
    counts.isomorphism_classes_all = iso_all.len() as u64;
    counts.isomorphism_classes_valid = iso_valid.len() as u64;
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfa::fixtures::*;
    use crate::dfa::Word;

    /// Brute-force language signature from explicit words.
    fn explicit_signature(dfa: &Dfa, depth: usize) -> Vec<bool> {
        (0..=depth)
            .flat_map(Word::all_of_length)
            .map(|w| dfa.accepts(w.symbols()))
            .collect()
    }

    #[test]
    fn packed_signature_matches_explicit_words() {
        let space = DfaSpace::new(3);
        for i in (0..space.len()).step_by(997) {
            let d = space.get(i);
            let sig = language_signature(&d);
            let explicit = explicit_signature(&d, SEPARATING_LENGTH);
            for (bit, &acc) in explicit.iter().enumerate() {
                assert_eq!(sig >> bit & 1 == 1, acc);
            }
        }
    }

    #[test]
    fn minimal_sizes() {
        assert_eq!(minimal_state_count(&sum_mod3()), 3);
        assert_eq!(minimal_state_count(&even_a()), 2);
        let all = Dfa::new(0, vec![[1, 2, 0]; 3], vec![true; 3]).unwrap();
        assert_eq!(minimal_state_count(&all), 1);
    }

    /// The length-4 bound is sufficient: extending every signature to
    /// length 5 does not separate any further languages.
    #[test]
    fn separating_length_is_sufficient() {
        let space = DfaSpace::new(3);
        let mut short = HashSet::new();
        let mut long = HashSet::new();
        for d in space.iter() {
            short.insert(language_signature(&d));
            let lo = residual_signature(&d, d.start(), 4);
            let tail: Vec<bool> = Word::all_of_length(5).map(|w| d.accepts(w.symbols())).collect();
            long.insert((lo, tail));
        }
        assert_eq!(short.len(), long.len());
    }

    /// Orbit count by Burnside's lemma: a transposition fixing state 0
    /// fixes 1 start * 4 accept sets * 27 tables; 3-cycles fix nothing
    /// because the start state cannot be fixed.
    fn burnside_orbits() -> u64 {
        (472_392 + 3 * (1 * 4 * 27)) / 6
    }

    #[test]
    fn frozen_counts() {
        let c = count_languages();
        assert_eq!(c.raw_configurations, 472_392);
        assert_eq!(c.isomorphism_classes_all, burnside_orbits());
        assert_eq!(
            c,
            LanguageCounts {
                raw_configurations: 472_392,
                valid_configurations: 286_740,
                languages_all: 42_042,
                languages_valid: 42_040,
                languages_minimal_3: 41_928,
                languages_minimal_2: 112,
                languages_minimal_1: 2,
                isomorphism_classes_all: 78_786,
                isomorphism_classes_valid: 47_790,
            }
        );
        assert_eq!(
            c.languages_minimal_1 + c.languages_minimal_2 + c.languages_minimal_3,
            c.languages_all
        );
    }
}
