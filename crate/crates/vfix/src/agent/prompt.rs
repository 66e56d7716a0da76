//! Prompt construction. Templates live under `assets/prompts/` with
//! `{name}` placeholders and are embedded at build time.

use crate::llm::ChatMessage;

use super::Problem;
use crate::toolchain::SourceText;

/// The generic instruction used as feedback when compiler logs are withheld.
pub const SIMPLE_FEEDBACK: &str = "Correct the syntax error in the code.";

const ONESHOT_SYSTEM: &str = include_str!("../../assets/prompts/oneshot_system.txt");
const ONESHOT_USER: &str = include_str!("../../assets/prompts/oneshot_user.txt");
const REACT_SYSTEM: &str = include_str!("../../assets/prompts/react_system.txt");
const REACT_SYSTEM_RAG: &str = include_str!("../../assets/prompts/react_system_rag.txt");
const REACT_USER: &str = include_str!("../../assets/prompts/react_user.txt");
pub(super) const FORMAT_REMINDER: &str = include_str!("../../assets/prompts/format_reminder.txt");

fn fill(template: &str, problem: &Problem, code: &SourceText, feedback: &str) -> String {
    template
        .replace("{description}", &problem.description)
        .replace("{module_header}", &problem.module_header)
        .replace("{implementation}", code.as_str())
        .replace("{feedback}", feedback)
}

/// Build the single-turn repair prompt: system instruction, then problem
/// description and module header, the erroneous implementation, and the
/// feedback block.
pub fn build_oneshot_prompt(
    problem: &Problem,
    code: &SourceText,
    feedback: &str,
) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(ONESHOT_SYSTEM.trim_end()),
        ChatMessage::user(fill(ONESHOT_USER, problem, code, feedback)),
    ]
}

/// The ReAct instruction. The retrieval action is only advertised when the
/// guidance database is in play.
pub fn react_system_prompt(rag_enabled: bool) -> &'static str {
    if rag_enabled {
        REACT_SYSTEM_RAG
    } else {
        REACT_SYSTEM
    }
}

/// First user turn of a ReAct session.
pub fn build_react_initial(problem: &Problem, code: &SourceText, feedback: &str) -> String {
    fill(REACT_USER, problem, code, feedback)
}

/// Observation turn fed back to the model after an action.
pub fn observation_message(index: u32, text: &str) -> String {
    format!("Observation {index}:\n{text}")
}
