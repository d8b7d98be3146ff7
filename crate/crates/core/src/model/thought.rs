use super::template::{render_statement, strip_prefix_ci};
use super::{Edit, FactChain, PromptTemplate, TemplateRegistry};

/// Prefix of an in-context edit injection.
pub const EDIT_PREFIX: &str = "Imagine that";

/// Interrogative openers stripped when a question is restated as a noun
/// phrase. Longest first so "what is" does not shadow "what is the name of".
pub const QUESTION_OPENERS: &[&str] = &[
    "what is the name of",
    "which entity is",
    "can you name",
    "who or what is",
    "tell me",
    "what was",
    "what are",
    "what is",
    "what's",
    "who was",
    "who is",
    "which is",
    "where is",
];

const CONCLUSION_OPENERS: &[&str] = &["Therefore,", "Thus,"];

/// `e(s, r, o*)`: "Imagine that " followed by the rendered edit.
pub fn inject_edit_prefix(edit: &Edit, template: &PromptTemplate) -> String {
    format!("{EDIT_PREFIX} {}", render_statement(edit, template))
}

/// Question → noun phrase: drops the interrogative opener and the trailing
/// punctuation. "What is the capital of X?" → "the capital of X".
pub fn restate_question(question: &str) -> String {
    let body = question.trim().trim_end_matches(['?', '.', '!']).trim_end();
    for opener in QUESTION_OPENERS {
        if let Some(rest) = strip_prefix_ci(body, opener) {
            if rest.starts_with(char::is_whitespace) {
                return rest.trim().to_string();
            }
        }
    }
    body.to_string()
}

/// Capitalize the first character and make sure the text ends a sentence.
pub fn sentence(text: &str) -> String {
    let text = text.trim();
    let mut chars = text.chars();
    let mut out = match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect::<String>(),
        None => return String::new(),
    };
    if !out.ends_with(['.', '!', '?']) {
        out.push('.');
    }
    out
}

/// One sentence per hop, then `Therefore, {phrase} is {answer}.`
pub fn build_thought(chain: &FactChain, question_phrase: &str, registry: &TemplateRegistry) -> String {
    let mut parts: Vec<String> = chain.hops().iter().map(|hop| sentence(&registry.render(hop))).collect();
    parts.push(format!("{} {} is {}.", CONCLUSION_OPENERS[0], question_phrase.trim(), chain.answer()));
    parts.join(" ")
}

/// Split on sentence terminators followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') {
            let at_end = i + 1 == bytes.len();
            if at_end || bytes[i + 1].is_ascii_whitespace() {
                let s = text[start..=i].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = i + 1;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// The `(phrase, answer)` stated by a closing "Therefore,"/"Thus," sentence.
pub fn conclusion(thought: &str) -> Option<(String, String)> {
    let last = *split_sentences(thought).last()?;
    let body = CONCLUSION_OPENERS
        .iter()
        .find_map(|opener| strip_prefix_ci(last, opener))?
        .trim()
        .trim_end_matches(['.', '!'])
        .trim_end();
    let cut = body.rfind(" is ")?;
    let phrase = body[..cut].trim();
    let answer = body[cut + 4..].trim();
    (!phrase.is_empty() && !answer.is_empty()).then(|| (phrase.to_string(), answer.to_string()))
}
