//! Prompt layout. A prompt is up to three sections joined by a blank line:
//!
//! ```text
//! New fact: <fact>
//! Question: <question>
//! Thought: <thought>
//! Answer: <answer>
//!
//! <more demonstrations, one blank line apart>
//!
//! New fact:
//! <retrieved fact>
//! <retrieved fact>
//!
//! Question: <question>
//! Thought:
//! ```
//!
//! Empty sections are omitted. Labels are emitted in the canonical casing
//! above and matched case-insensitively when parsing.

use super::template::strip_prefix_ci;
use super::{Demonstration, EDIT_PREFIX};

/// Between sections.
pub const SECTION_SEPARATOR: &str = "\n\n";
/// Between demonstrations inside the demonstrations section.
pub const DEMO_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    NewFact,
    Question,
    Thought,
    Answer,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::NewFact, Label::Question, Label::Thought, Label::Answer];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NewFact => "New fact:",
            Label::Question => "Question:",
            Label::Thought => "Thought:",
            Label::Answer => "Answer:",
        }
    }

    /// The label opening `line`, with the remainder after the colon.
    pub fn detect(line: &str) -> Option<(Label, &str)> {
        let line = line.trim_start();
        Label::ALL.into_iter().find_map(|label| strip_prefix_ci(line, label.as_str()).map(|rest| (label, rest.trim())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SectionKind {
    Demonstrations,
    NewFacts,
    Question,
}

/// Assembled prompt: ordered sections and their joined rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    sections: Vec<(SectionKind, String)>,
    rendered: String,
}

impl PromptBundle {
    fn from_sections(sections: Vec<(SectionKind, String)>) -> Self {
        let rendered = sections.iter().map(|(_, text)| text.as_str()).collect::<Vec<_>>().join(SECTION_SEPARATOR);
        Self { sections, rendered }
    }

    pub fn sections(&self) -> &[(SectionKind, String)] {
        &self.sections
    }

    pub fn section(&self, kind: SectionKind) -> Option<&str> {
        self.sections.iter().find(|(k, _)| *k == kind).map(|(_, text)| text.as_str())
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn into_rendered(self) -> String {
        self.rendered
    }
}

pub fn render_demonstration(demo: &Demonstration) -> String {
    let mut out = String::new();
    let (first, rest) = demo.new_facts().split_first().expect("demonstrations carry at least one fact");
    out.push_str(&format!("{} {first}\n", Label::NewFact.as_str()));
    for fact in rest {
        out.push_str(fact);
        out.push('\n');
    }
    out.push_str(&format!(
        "{} {}\n{} {}\n{} {}",
        Label::Question.as_str(),
        demo.question(),
        Label::Thought.as_str(),
        demo.thought(),
        Label::Answer.as_str(),
        demo.answer()
    ));
    out
}

pub fn render_demonstrations(demos: &[Demonstration]) -> String {
    demos.iter().map(render_demonstration).collect::<Vec<_>>().join(DEMO_SEPARATOR)
}

/// Lay out demonstrations, retrieved facts and the target question.
pub fn assemble_prompt<S: AsRef<str>>(demos: &[Demonstration], facts: &[S], question: &str) -> PromptBundle {
    let mut sections = Vec::with_capacity(3);
    if !demos.is_empty() {
        sections.push((SectionKind::Demonstrations, render_demonstrations(demos)));
    }
    if !facts.is_empty() {
        let mut block = Label::NewFact.as_str().to_string();
        for fact in facts {
            block.push('\n');
            block.push_str(fact.as_ref().trim());
        }
        sections.push((SectionKind::NewFacts, block));
    }
    sections.push((
        SectionKind::Question,
        format!("{} {}\n{}", Label::Question.as_str(), question.trim(), Label::Thought.as_str()),
    ));
    PromptBundle::from_sections(sections)
}

/// Parse one `New fact / Question / Thought / Answer` block. Continuation
/// lines after `New fact:` are further facts; after the other labels they
/// extend the current field.
pub fn parse_demonstration_block(block: &str) -> Result<Demonstration, String> {
    let mut facts: Vec<String> = Vec::new();
    let mut question: Option<String> = None;
    let mut thought: Option<String> = None;
    let mut answer: Option<String> = None;
    let mut current: Option<Label> = None;

    for line in block.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some((label, rest)) = Label::detect(line) {
            let slot = match label {
                Label::NewFact => {
                    if !rest.is_empty() {
                        facts.push(rest.to_string());
                    }
                    current = Some(label);
                    continue;
                }
                Label::Question => &mut question,
                Label::Thought => &mut thought,
                Label::Answer => &mut answer,
            };
            if slot.is_some() {
                return Err(format!("duplicate {}", label.as_str()));
            }
            *slot = Some(rest.to_string());
            current = Some(label);
            continue;
        }
        let slot = match current {
            None => continue,
            Some(Label::NewFact) => {
                facts.push(line.to_string());
                continue;
            }
            Some(Label::Question) => &mut question,
            Some(Label::Thought) => &mut thought,
            Some(Label::Answer) => &mut answer,
        };
        if let Some(text) = slot.as_mut() {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(line);
        }
    }

    let missing = |label: Label| format!("missing {}", label.as_str());
    let question = question.ok_or_else(|| missing(Label::Question))?;
    let thought = thought.ok_or_else(|| missing(Label::Thought))?;
    let answer = answer.ok_or_else(|| missing(Label::Answer))?;
    Demonstration::new(facts, &question, &thought, &answer).map_err(|e| e.to_string())
}

/// Split free text at every line that opens with a `New fact:` label.
/// Text before the first label is discarded.
pub fn split_labeled_blocks(text: &str) -> Vec<String> {
    let mut blocks: Vec<String> = Vec::new();
    for line in text.lines() {
        let opens = matches!(Label::detect(line), Some((Label::NewFact, _)));
        if opens {
            blocks.push(String::new());
        }
        if let Some(block) = blocks.last_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    blocks
}

/// What a prompt says, recovered from its rendering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub demos: Vec<Demonstration>,
    /// Facts from a standalone `New fact:` section (not from demonstrations).
    pub facts: Vec<String>,
    /// Statements injected as `Imagine that ...` lines, prefix removed.
    pub imagined: Vec<String>,
    pub question: Option<String>,
    /// Trailing cue after the question (`Thought:` or `Answer:`).
    pub cue: Option<Label>,
}

impl ParsedPrompt {
    /// Every injected statement, standalone facts first.
    pub fn injected(&self) -> impl Iterator<Item = &str> {
        self.facts.iter().chain(self.imagined.iter()).map(String::as_str)
    }
}

fn blank_line_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks = vec![Vec::new()];
    for line in text.lines() {
        if line.trim().is_empty() {
            if !blocks.last().is_some_and(Vec::is_empty) {
                blocks.push(Vec::new());
            }
        } else {
            blocks.last_mut().expect("non-empty").push(line);
        }
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

/// Inverse of [`assemble_prompt`]; also understands `Imagine that` lines.
pub fn parse_prompt(text: &str) -> ParsedPrompt {
    let mut parsed = ParsedPrompt::default();
    for block in blank_line_blocks(text) {
        let first = Label::detect(block[0]).map(|(label, _)| label);
        let has_question = block.iter().any(|l| matches!(Label::detect(l), Some((Label::Question, _))));
        match first {
            Some(Label::NewFact) if has_question => {
                if let Ok(demo) = parse_demonstration_block(&block.join("\n")) {
                    parsed.demos.push(demo);
                }
            }
            Some(Label::NewFact) => {
                for (i, line) in block.iter().enumerate() {
                    let fact = if i == 0 {
                        Label::detect(line).map(|(_, rest)| rest).unwrap_or_default()
                    } else {
                        line.trim()
                    };
                    if !fact.is_empty() {
                        parsed.facts.push(fact.to_string());
                    }
                }
            }
            _ => {
                for line in &block {
                    let line = line.trim();
                    if let Some(rest) = strip_prefix_ci(line, EDIT_PREFIX) {
                        if rest.starts_with(char::is_whitespace) {
                            parsed.imagined.push(rest.trim().to_string());
                        }
                        continue;
                    }
                    match Label::detect(line) {
                        Some((Label::Question, rest)) => {
                            parsed.question = Some(rest.to_string());
                            parsed.cue = None;
                        }
                        Some((label @ (Label::Thought | Label::Answer), "")) if parsed.question.is_some() => {
                            parsed.cue = Some(label);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    parsed
}
