//! Parsing of model output: fenced code extraction and the
//! Thought/Action directive grammar.

use once_cell::sync::Lazy;
use regex::Regex;

use super::{AgentAction, AgentError};
use crate::toolchain::SourceText;

static FENCE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)```[a-zA-Z0-9_+\-]*\r?\n(.*?)```").unwrap());

static THOUGHT_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?mi)^\s*thought(?:\s*\d+)?\s*:\s*").unwrap());

static ACTION_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?mi)^\s*action(?:\s*\d+)?\s*:\s*").unwrap());

static ACTION_KEYWORD: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^(compiler|rag|finish)\b").unwrap());

/// Pull Verilog source out of a model response: the first fenced code block
/// if any, otherwise the raw text when it looks like Verilog.
pub fn extract_code_block(text: &str) -> Result<SourceText, AgentError> {
    if let Some(caps) = FENCE.captures(text) {
        let mut body = caps.get(1).unwrap().as_str();
        body = body.strip_suffix('\n').unwrap_or(body);
        return SourceText::new(body).map_err(|_| AgentError::NoCode);
    }
    if text.contains("module") {
        return SourceText::new(text.trim()).map_err(|_| AgentError::NoCode);
    }
    Err(AgentError::NoCode)
}

/// Parse a ReAct response into its last Thought paragraph and the first
/// Action directive following it. Action keywords match case-insensitively;
/// payloads may sit in `[...]` brackets or in the text after the directive.
pub fn parse_agent_response(text: &str) -> Result<(String, AgentAction), AgentError> {
    let last_thought = THOUGHT_LINE.find_iter(text).last();
    let search_from = last_thought.map(|m| m.end()).unwrap_or(0);
    let action_m = ACTION_LINE
        .find_at(text, search_from)
        .or_else(|| ACTION_LINE.find(text))
        .ok_or(AgentError::MalformedResponse)?;

    let thought = match last_thought {
        Some(m) if m.end() <= action_m.start() => text[m.end()..action_m.start()].trim(),
        _ => "",
    };

    let after = &text[action_m.end()..];
    let keyword = ACTION_KEYWORD
        .find(after.trim_start())
        .ok_or(AgentError::MalformedResponse)?;
    let keyword_text = keyword.as_str().to_ascii_lowercase();
    let offset = after.len() - after.trim_start().len();
    let rest = &after[offset + keyword.end()..];

    let (bracket_payload, rest_after) = take_bracket_payload(rest);

    let action = match keyword_text.as_str() {
        "rag" => {
            let excerpt = bracket_payload
                .unwrap_or_else(|| rest_after.trim().to_string())
                .trim()
                .trim_matches('.')
                .trim()
                .to_string();
            AgentAction::Retrieve {
                log_excerpt: excerpt,
            }
        }
        name => {
            let payload = bracket_payload.unwrap_or_else(|| rest_after.to_string());
            let code = extract_code_block(&payload)?;
            if name == "finish" {
                AgentAction::Finish { code }
            } else {
                AgentAction::Compile { code }
            }
        }
    };

    Ok((thought.to_string(), action))
}

/// If `rest` opens with `[`, return the balanced bracket contents and what
/// follows; code payloads like `out[8]` keep their inner brackets.
fn take_bracket_payload(rest: &str) -> (Option<String>, &str) {
    let trimmed = rest.trim_start();
    if !trimmed.starts_with('[') {
        return (None, rest);
    }
    let mut depth = 0usize;
    for (i, c) in trimmed.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return (Some(trimmed[1..i].to_string()), &trimmed[i + 1..]);
                }
            }
            _ => {}
        }
    }
    // Unbalanced open bracket: treat everything after it as the payload.
    (Some(trimmed[1..].to_string()), "")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block_wins() {
        let code = extract_code_block("```verilog\nmodule m; endmodule\n```").unwrap();
        assert_eq!(code.as_str(), "module m; endmodule");
    }

    #[test]
    fn fence_without_language_hint() {
        let code = extract_code_block("prefix\n```\nmodule m;\nendmodule\n```\nsuffix").unwrap();
        assert_eq!(code.as_str(), "module m;\nendmodule");
    }

    #[test]
    fn bare_verilog_passes_through() {
        let code = extract_code_block("module m; endmodule").unwrap();
        assert_eq!(code.as_str(), "module m; endmodule");
    }

    #[test]
    fn prose_is_rejected() {
        assert!(matches!(
            extract_code_block("I cannot help with that."),
            Err(AgentError::NoCode)
        ));
    }

    #[test]
    fn compiler_action_with_fenced_code() {
        let text = "Thought 1: declare out as reg.\nAction 1: Compiler\n```verilog\nmodule m; endmodule\n```";
        let (thought, action) = parse_agent_response(text).unwrap();
        assert_eq!(thought, "declare out as reg.");
        match action {
            AgentAction::Compile { code } => assert_eq!(code.as_str(), "module m; endmodule"),
            other => panic!("expected Compile, got {other:?}"),
        }
    }

    #[test]
    fn finish_without_thought() {
        let text = "Action 3: Finish\n```verilog\nmodule m; endmodule\n```";
        let (thought, action) = parse_agent_response(text).unwrap();
        assert!(thought.is_empty());
        assert!(matches!(action, AgentAction::Finish { .. }));
    }

    #[test]
    fn prose_without_action_is_malformed() {
        assert!(matches!(
            parse_agent_response("Here is some prose with no action."),
            Err(AgentError::MalformedResponse)
        ));
    }

    #[test]
    fn rag_excerpt_from_brackets() {
        let text = "Thought 2: the out signal is a wire.\nAction 2: RAG[..not a valid l-value..]";
        let (_, action) = parse_agent_response(text).unwrap();
        match action {
            AgentAction::Retrieve { log_excerpt } => {
                assert_eq!(log_excerpt, "not a valid l-value")
            }
            other => panic!("expected Retrieve, got {other:?}"),
        }
    }

    #[test]
    fn bracket_payload_keeps_inner_brackets() {
        let text = "Action 1: Compiler[module m; assign x = in[8]; endmodule]";
        let (_, action) = parse_agent_response(text).unwrap();
        match action {
            AgentAction::Compile { code } => {
                assert_eq!(code.as_str(), "module m; assign x = in[8]; endmodule")
            }
            other => panic!("expected Compile, got {other:?}"),
        }
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let text = "Action 1: finish\nmodule m; endmodule";
        let (_, action) = parse_agent_response(text).unwrap();
        assert!(matches!(action, AgentAction::Finish { .. }));
    }

    #[test]
    fn last_thought_first_following_action() {
        let text = "Thought 1: first idea.\nAction 1: RAG[x]\nThought 2: better idea.\nAction 2: Finish\nmodule m; endmodule";
        let (thought, action) = parse_agent_response(text).unwrap();
        assert_eq!(thought, "better idea.");
        assert!(matches!(action, AgentAction::Finish { .. }));
    }

    #[test]
    fn compiler_without_code_is_an_extraction_error() {
        let text = "Thought 1: hmm.\nAction 1: Compiler\nno code here";
        assert!(matches!(
            parse_agent_response(text),
            Err(AgentError::NoCode)
        ));
    }
}
