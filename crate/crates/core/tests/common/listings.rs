//! The instances shown in the worked prompt listings, rebuilt from the golden
//! files.

use regbench::dfa::bits_from_str;
use regbench::taskgen::{ScInstance, TransducerInstance};
use regbench::{OutputBit, Word};

pub fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// The sequence-completion instance shown in the listings.
pub fn listed_sc() -> ScInstance {
    let text = golden("sc_basic");
    let mut words: Vec<Word> = text
        .lines()
        .filter(|l| !l.is_empty() && l.chars().all(|c| "abc".contains(c)))
        .map(|l| l.parse().unwrap())
        .collect();
    let prefix = words.pop().unwrap();
    assert_eq!(words.len(), 30);
    assert_eq!(prefix.to_string(), "caacb");
    ScInstance { examples: words, prefix }
}

/// The transducer instance shown in the listings. Its hidden target is not
/// part of any prompt.
pub fn listed_transducer() -> TransducerInstance {
    let text = golden("transducer_basic-cot");
    let field = |name: &str| -> String {
        let line = text.lines().find_map(|l| l.strip_prefix(name)).unwrap();
        line.chars().filter(|c| c.is_ascii_alphanumeric()).collect()
    };
    let symbols: Word = field("Input sequence: ").parse().unwrap();
    let revealed = bits_from_str(&field("Output sequence: ")).unwrap();
    assert_eq!((symbols.len(), revealed.len()), (30, 29));
    TransducerInstance { symbols, revealed, target: OutputBit::One }
}
