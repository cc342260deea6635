use serde::{Deserialize, Serialize};

use crate::dfa::{OutputBit, Word};

/// A prediction for one instance, from a baseline or a parsed model response.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ParsedAnswer {
    Completion(Word),
    Bit(OutputBit),
    /// Nothing well-formed could be extracted; holds the raw text.
    NonAnswer(String),
}

impl ParsedAnswer {
    pub fn is_non_answer(&self) -> bool {
        matches!(self, ParsedAnswer::NonAnswer(_))
    }
}

/// JSON form used in `predictions.jsonl`: `"abcab"`, `0`, `1`, or `null`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Bit(u8),
    Completion(String),
}

impl ParsedAnswer {
    pub fn to_value(&self) -> Option<AnswerValue> {
        match self {
            ParsedAnswer::Completion(w) => Some(AnswerValue::Completion(w.to_string())),
            ParsedAnswer::Bit(b) => Some(AnswerValue::Bit(b.as_u8())),
            ParsedAnswer::NonAnswer(_) => None,
        }
    }

    pub fn from_value(v: Option<&AnswerValue>) -> ParsedAnswer {
        match v {
            None => ParsedAnswer::NonAnswer(String::new()),
            Some(AnswerValue::Bit(0)) => ParsedAnswer::Bit(OutputBit::Zero),
            Some(AnswerValue::Bit(1)) => ParsedAnswer::Bit(OutputBit::One),
            Some(AnswerValue::Bit(other)) => ParsedAnswer::NonAnswer(other.to_string()),
            Some(AnswerValue::Completion(s)) => match s.parse::<Word>() {
                Ok(w) if !w.is_empty() => ParsedAnswer::Completion(w),
                _ => ParsedAnswer::NonAnswer(s.clone()),
            },
        }
    }
}
