//! Baselines that ignore most of the instance: random completion, common
//! suffix, and the constant transducer predictor.

use std::collections::BTreeMap;

use rand::Rng;

use crate::dfa::{OutputBit, Word};

pub const COMPLETION_MAX: usize = 5;

/// A uniform random completion of exactly five letters.
pub fn random_s<R: Rng + ?Sized>(rng: &mut R) -> Word {
    Word::random(rng, COMPLETION_MAX)
}

/// The terminal suffix `s` (1 to 5 letters) maximising
/// `(examples ending in s) * |s|`; ties go to the lexicographically smallest.
pub fn common_suffix_s(examples: &[Word]) -> Word {
    let mut counts: BTreeMap<&[_], usize> = BTreeMap::new();
    for e in examples {
        let syms = e.symbols();
        for len in 1..=COMPLETION_MAX.min(syms.len()) {
            *counts.entry(&syms[syms.len() - len..]).or_default() += 1;
        }
    }
    // BTreeMap iterates in lexicographic order, so strict `>` keeps the
    // smallest candidate among equal scores.
    let mut best: Option<(&[_], usize)> = None;
    for (&suffix, &count) in &counts {
        let score = count * suffix.len();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((suffix, score));
        }
    }
    Word(best.map(|(s, _)| s.to_vec()).unwrap_or_default())
}

/// The constant bit that scores best on `targets`; ties predict 1.
pub fn null_t(targets: &[OutputBit]) -> OutputBit {
    let ones = targets.iter().filter(|b| b.is_one()).count();
    OutputBit::from(2 * ones >= targets.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfa::fixtures::w;
    use crate::rng::SeedTree;

    #[test]
    fn random_is_five_letters_and_seeded() {
        let a = random_s(&mut SeedTree::from_master(1).rng());
        let b = random_s(&mut SeedTree::from_master(1).rng());
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
    }

    #[test]
    fn common_suffix_prefers_long_single_suffix() {
        assert_eq!(common_suffix_s(&[w("aaaaaaaaaa")]), w("aaaaa"));
    }

    #[test]
    fn common_suffix_tie_breaks_lexicographically() {
        // "ca" scores 3*2, "bca" scores 2*3.
        let ex = [w("abca"), w("bbca"), w("ccca")];
        assert_eq!(common_suffix_s(&ex), w("bca"));
    }

    #[test]
    fn common_suffix_counts_duplicates() {
        // "b" appears twice (score 2) against "a" once; "ab" scores 2*2.
        let ex = [w("cab"), w("cab"), w("cca")];
        assert_eq!(common_suffix_s(&ex), w("cab"));
    }

    #[test]
    fn null_majority_and_tie() {
        let mut t = vec![OutputBit::One; 20];
        t.extend(vec![OutputBit::Zero; 10]);
        assert_eq!(null_t(&t), OutputBit::One);
        let mut t = vec![OutputBit::Zero; 20];
        t.extend(vec![OutputBit::One; 10]);
        assert_eq!(null_t(&t), OutputBit::Zero);
        let mut t = vec![OutputBit::Zero; 15];
        t.extend(vec![OutputBit::One; 15]);
        assert_eq!(null_t(&t), OutputBit::One);
    }
}
