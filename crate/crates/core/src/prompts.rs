//! Prompt rendering and response parsing.
//!
//! Templates live in `prompts/{task}_{format}.tmpl` and carry no trailing
//! newline. Placeholders:
//!
//! - `{EXAMPLES}`: one example per line
//! - `{PREFIX}`: the string to complete
//! - `{TRANSDUCER_PREFIX}`: `s1, o1, ..., s30, `
//! - `{INPUT_SEQUENCE}`: `s1, ..., s30`
//! - `{OUTPUT_SEQUENCE}`: `o1, ..., o29, `
//! - `{STEP_SENTENCES}`: one portal sentence per step
//! - `{STRING}`: the regex-control string

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::answer::ParsedAnswer;
use crate::dfa::{OutputBit, Symbol, Word};
use crate::error::PromptError;
use crate::taskgen::{
    PublicTransducerInstance, RegexControlItem, ScInstance, TaskKind, TransducerInstance,
};

/// Longest completion kept when parsing; longer answers are truncated.
pub const MAX_COMPLETION: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptFormat {
    Basic,
    BasicCot,
    MoreExpl,
    DfaCot,
    RedGreen,
    BasicCommas,
}

impl PromptFormat {
    pub const ALL: [PromptFormat; 6] = [
        PromptFormat::Basic,
        PromptFormat::BasicCot,
        PromptFormat::MoreExpl,
        PromptFormat::DfaCot,
        PromptFormat::RedGreen,
        PromptFormat::BasicCommas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptFormat::Basic => "basic",
            PromptFormat::BasicCot => "basic-cot",
            PromptFormat::MoreExpl => "more-expl",
            PromptFormat::DfaCot => "dfa-cot",
            PromptFormat::RedGreen => "red-green",
            PromptFormat::BasicCommas => "basic-commas",
        }
    }

    /// Formats whose answer is wrapped in `<answer>` tags.
    pub fn is_tagged(self) -> bool {
        matches!(self, PromptFormat::BasicCot | PromptFormat::DfaCot | PromptFormat::RedGreen)
    }

    pub fn supports(self, kind: TaskKind) -> bool {
        !(self == PromptFormat::BasicCommas && kind == TaskKind::Transducer)
    }

    /// Formats available for a task.
    pub fn for_task(kind: TaskKind) -> Vec<PromptFormat> {
        PromptFormat::ALL.into_iter().filter(|f| f.supports(kind)).collect()
    }

    fn template(self, kind: TaskKind) -> Result<&'static str, PromptError> {
        use PromptFormat::*;
        Ok(match (kind, self) {
            (TaskKind::SequenceCompletion, Basic) => include_str!("../prompts/sc_basic.tmpl"),
            (TaskKind::SequenceCompletion, BasicCot) => include_str!("../prompts/sc_basic-cot.tmpl"),
            (TaskKind::SequenceCompletion, MoreExpl) => include_str!("../prompts/sc_more-expl.tmpl"),
            (TaskKind::SequenceCompletion, DfaCot) => include_str!("../prompts/sc_dfa-cot.tmpl"),
            (TaskKind::SequenceCompletion, RedGreen) => include_str!("../prompts/sc_red-green.tmpl"),
            (TaskKind::SequenceCompletion, BasicCommas) => {
                include_str!("../prompts/sc_basic-commas.tmpl")
            }
            (TaskKind::Transducer, Basic) => include_str!("../prompts/transducer_basic.tmpl"),
            (TaskKind::Transducer, BasicCot) => include_str!("../prompts/transducer_basic-cot.tmpl"),
            (TaskKind::Transducer, MoreExpl) => include_str!("../prompts/transducer_more-expl.tmpl"),
            (TaskKind::Transducer, DfaCot) => include_str!("../prompts/transducer_dfa-cot.tmpl"),
            (TaskKind::Transducer, RedGreen) => include_str!("../prompts/transducer_red-green.tmpl"),
            (TaskKind::Transducer, BasicCommas) => {
                return Err(PromptError::FormatMismatch {
                    format: self.name().into(),
                    kind: kind.to_string(),
                })
            }
        })
    }
}

impl fmt::Display for PromptFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptFormat {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptFormat::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PromptError::UnknownFormat(s.to_string()))
    }
}

/// The visible part of an instance of either task.
#[derive(Clone, Copy, Debug)]
pub enum InstanceRef<'a> {
    Sc(&'a ScInstance),
    Transducer { symbols: &'a Word, revealed: &'a [OutputBit] },
}

impl InstanceRef<'_> {
    pub fn kind(&self) -> TaskKind {
        match self {
            InstanceRef::Sc(_) => TaskKind::SequenceCompletion,
            InstanceRef::Transducer { .. } => TaskKind::Transducer,
        }
    }
}

impl<'a> From<&'a ScInstance> for InstanceRef<'a> {
    fn from(i: &'a ScInstance) -> Self {
        InstanceRef::Sc(i)
    }
}

impl<'a> From<&'a TransducerInstance> for InstanceRef<'a> {
    fn from(i: &'a TransducerInstance) -> Self {
        InstanceRef::Transducer { symbols: &i.symbols, revealed: &i.revealed }
    }
}

impl<'a> From<&'a PublicTransducerInstance> for InstanceRef<'a> {
    fn from(i: &'a PublicTransducerInstance) -> Self {
        InstanceRef::Transducer { symbols: &i.symbols, revealed: &i.revealed }
    }
}

pub fn render(instance: InstanceRef<'_>, format: PromptFormat) -> Result<String, PromptError> {
    match instance {
        InstanceRef::Sc(i) => render_sc(i, format),
        InstanceRef::Transducer { symbols, revealed } => render_transducer(symbols, revealed, format),
    }
}

fn comma_letters(w: &Word) -> String {
    let letters: Vec<String> = w.symbols().iter().map(|s| s.as_char().to_string()).collect();
    letters.join(", ")
}

pub fn render_sc(inst: &ScInstance, format: PromptFormat) -> Result<String, PromptError> {
    let template = format.template(TaskKind::SequenceCompletion)?;
    let (examples, prefix) = if format == PromptFormat::BasicCommas {
        let ex: Vec<String> = inst.examples.iter().map(comma_letters).collect();
        (ex.join("\n"), format!("{},", comma_letters(&inst.prefix)))
    } else {
        let ex: Vec<String> = inst.examples.iter().map(Word::to_string).collect();
        (ex.join("\n"), inst.prefix.to_string())
    };
    Ok(template.replace("{EXAMPLES}", &examples).replace("{PREFIX}", &prefix))
}

fn room_color(b: OutputBit) -> &'static str {
    match b {
        OutputBit::Zero => "red",
        OutputBit::One => "green",
    }
}

fn step_sentences(symbols: &Word, revealed: &[OutputBit]) -> String {
    let symbols = symbols.symbols();
    let mut lines = Vec::with_capacity(symbols.len());
    for (i, s) in symbols.iter().enumerate() {
        let opening = if i == 0 { "You walk" } else { "Then, you walk" };
        let label = s.as_char().to_ascii_uppercase();
        let ending = match revealed.get(i) {
            Some(&b) => format!("{} room.", room_color(b)),
            None => "...".to_string(),
        };
        lines.push(format!("{opening} through a portal labeled \"{label}\" and end up in a {ending}"));
    }
    lines.join("\n")
}

/// Renders a transducer trace; `revealed` holds one output per symbol except
/// the last.
pub fn render_transducer(
    symbols: &Word,
    revealed: &[OutputBit],
    format: PromptFormat,
) -> Result<String, PromptError> {
    let template = format.template(TaskKind::Transducer)?;
    let mut prefix = String::new();
    for (i, s) in symbols.symbols().iter().enumerate() {
        prefix.push(s.as_char());
        prefix.push_str(", ");
        if let Some(b) = revealed.get(i) {
            prefix.push(b.as_char());
            prefix.push_str(", ");
        }
    }
    let outputs: String = revealed.iter().map(|b| format!("{}, ", b.as_char())).collect();
    Ok(template
        .replace("{TRANSDUCER_PREFIX}", &prefix)
        .replace("{INPUT_SEQUENCE}", &comma_letters(symbols))
        .replace("{OUTPUT_SEQUENCE}", &outputs)
        .replace("{STEP_SENTENCES}", &step_sentences(symbols, revealed)))
}

static ANSWER_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").expect("valid regex"));

/// Content of the last `<answer>...</answer>` span.
pub fn last_answer_tag(text: &str) -> Option<&str> {
    ANSWER_TAG.captures_iter(text).last().map(|c| c.get(1).expect("group").as_str())
}

/// Extracts a prediction from a model response. Never fails; anything
/// unrecognised becomes a non-answer carrying the raw text.
pub fn parse_answer(response: &str, format: PromptFormat, kind: TaskKind) -> ParsedAnswer {
    let parsed = if format.is_tagged() {
        last_answer_tag(response).and_then(|body| match kind {
            TaskKind::Transducer => parse_tagged_bit(body, format),
            TaskKind::SequenceCompletion => parse_tagged_completion(body),
        })
    } else {
        match kind {
            TaskKind::Transducer => parse_leading_bit(response).map(ParsedAnswer::Bit),
            TaskKind::SequenceCompletion if format == PromptFormat::BasicCommas => {
                parse_comma_completion(response)
            }
            TaskKind::SequenceCompletion => parse_leading_completion(response),
        }
    };
    parsed.unwrap_or_else(|| ParsedAnswer::NonAnswer(response.to_string()))
}

fn parse_tagged_bit(body: &str, format: PromptFormat) -> Option<ParsedAnswer> {
    let body = body.trim().to_ascii_lowercase();
    let bit = if format == PromptFormat::RedGreen {
        match body.as_str() {
            "green" => OutputBit::One,
            "red" => OutputBit::Zero,
            _ => return None,
        }
    } else {
        OutputBit::from_char(single_char(&body)?)?
    };
    Some(ParsedAnswer::Bit(bit))
}

fn single_char(s: &str) -> Option<char> {
    let mut it = s.chars();
    let c = it.next()?;
    it.next().is_none().then_some(c)
}

/// Tag bodies may separate letters with commas or spaces; quotes around the
/// answer are tolerated.
fn parse_tagged_completion(body: &str) -> Option<ParsedAnswer> {
    let body = body.trim().trim_matches(|c| matches!(c, '"' | '\'' | '`'));
    let mut symbols = Vec::new();
    for c in body.chars() {
        match Symbol::from_char(c) {
            Some(s) => symbols.push(s),
            None if c == ',' || c.is_whitespace() => {}
            None => return None,
        }
    }
    completion(symbols)
}

fn completion(mut symbols: Vec<Symbol>) -> Option<ParsedAnswer> {
    if symbols.is_empty() {
        return None;
    }
    symbols.truncate(MAX_COMPLETION);
    Some(ParsedAnswer::Completion(Word(symbols)))
}

/// First `0`/`1` of the continuation, skipping whitespace and punctuation;
/// a letter first means no answer.
fn parse_leading_bit(response: &str) -> Option<OutputBit> {
    for c in response.chars() {
        if let Some(b) = OutputBit::from_char(c) {
            return Some(b);
        }
        if c.is_alphanumeric() {
            return None;
        }
    }
    None
}

/// The run of alphabet letters at the start of the continuation, after
/// leading whitespace.
fn parse_leading_completion(response: &str) -> Option<ParsedAnswer> {
    let symbols = response.trim_start().chars().map_while(Symbol::from_char).collect();
    completion(symbols)
}

/// Letters separated by commas and optional spaces, as the prompt shows them
/// (`"a, b, c"`). Stops at the first other character.
fn parse_comma_completion(response: &str) -> Option<ParsedAnswer> {
    let mut symbols = Vec::new();
    let mut rest = response.trim_start();
    while let Some(s) = rest.chars().next().and_then(Symbol::from_char) {
        symbols.push(s);
        rest = &rest[1..];
        let after_comma = rest.strip_prefix(',').map(|r| r.trim_start_matches(' '));
        match after_comma {
            Some(r) => rest = r,
            None => break,
        }
    }
    completion(symbols)
}

/// The ideal response to an instance under a format: what a perfect model
/// following the format's answer convention would output.
pub fn ideal_response(answer: &ParsedAnswer, format: PromptFormat) -> String {
    let body = match answer {
        ParsedAnswer::Completion(w) if format == PromptFormat::BasicCommas => comma_letters(w),
        ParsedAnswer::Completion(w) => w.to_string(),
        ParsedAnswer::Bit(b) if format == PromptFormat::RedGreen => room_color(*b).to_string(),
        ParsedAnswer::Bit(b) => b.as_char().to_string(),
        ParsedAnswer::NonAnswer(raw) => raw.clone(),
    };
    if format.is_tagged() {
        format!("Reasoning omitted.\n<answer>{body}</answer>")
    } else {
        body
    }
}

/// The control prompt. `answer_line` appends the third line used for
/// completion-style endpoints.
pub fn render_regex_control(item: &RegexControlItem, answer_line: bool) -> String {
    let mut text = include_str!("../prompts/regex_control.tmpl").replace("{STRING}", &item.text);
    if answer_line {
        text.push_str("\nAnswer (YES or NO): ");
    }
    text
}

/// Case-insensitive YES/NO as the first word; `None` otherwise.
pub fn parse_yes_no(response: &str) -> Option<bool> {
    let token: String = response
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    match token.to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}
