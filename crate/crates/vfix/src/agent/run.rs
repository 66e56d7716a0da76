//! Session execution: the one-shot turn and the ReAct loop.

use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::llm::{ChatMessage, CompletionParams, LlmBackend};
use crate::retrieval::{render_guidance, retrieve, GuidanceDB};
use crate::toolchain::{
    prefix_rule_fix, CompileResult, Diagnostic, SourceText, Toolchain, DEFAULT_COMPILE_TIMEOUT,
};

use super::parse::{extract_code_block, parse_agent_response};
use super::prompt::{
    build_oneshot_prompt, build_react_initial, observation_message, react_system_prompt,
    FORMAT_REMINDER, SIMPLE_FEEDBACK,
};
use super::{
    AgentAction, AgentError, FeedbackMode, FixOutcome, Mode, Problem, ReActStep, RepairSession,
};

/// Shared, read-only machinery for running sessions. The LLM backend is
/// passed separately because it is stateful and per-session.
pub struct SessionContext<'a> {
    pub toolchain: &'a Toolchain,
    pub db: &'a GuidanceDB,
    pub params: CompletionParams,
    pub compile_timeout: Duration,
}

impl<'a> SessionContext<'a> {
    pub fn new(toolchain: &'a Toolchain, db: &'a GuidanceDB) -> Self {
        SessionContext {
            toolchain,
            db,
            params: CompletionParams::default(),
            compile_timeout: DEFAULT_COMPILE_TIMEOUT,
        }
    }
}

/// Dispatch on mode.
#[allow(clippy::too_many_arguments)]
pub fn run_session(
    ctx: &SessionContext,
    llm: &mut dyn LlmBackend,
    problem: &Problem,
    code: &SourceText,
    mode: Mode,
    feedback_mode: FeedbackMode,
    rag_enabled: bool,
    max_iterations: u32,
    workdir: &Path,
) -> Result<RepairSession, AgentError> {
    match mode {
        Mode::Oneshot => run_oneshot(ctx, llm, problem, code, feedback_mode, rag_enabled, workdir),
        Mode::React => run_react(
            ctx,
            llm,
            problem,
            code,
            feedback_mode,
            rag_enabled,
            max_iterations,
            workdir,
        ),
    }
}

struct CompileSequence<'a> {
    ctx: &'a SessionContext<'a>,
    root: PathBuf,
    next: u32,
}

impl<'a> CompileSequence<'a> {
    fn new(ctx: &'a SessionContext, root: &Path) -> Self {
        CompileSequence {
            ctx,
            root: root.to_path_buf(),
            next: 0,
        }
    }

    fn compile(&mut self, code: &SourceText) -> Result<CompileResult, AgentError> {
        let dir = self.root.join(format!("c{:03}", self.next));
        self.next += 1;
        Ok(self
            .ctx
            .toolchain
            .compile(code, &dir, self.ctx.compile_timeout)?)
    }
}

/// Feedback text shown to the model for a compile result. Simple mode
/// withholds the log; compiler mode passes it through, optionally followed
/// by retrieved guidance.
fn feedback_for(
    ctx: &SessionContext,
    feedback_mode: FeedbackMode,
    rag_enabled: bool,
    result: &CompileResult,
) -> String {
    match feedback_mode {
        FeedbackMode::Simple => SIMPLE_FEEDBACK.to_string(),
        FeedbackMode::Compiler => {
            let mut text = result.raw_log.clone();
            if rag_enabled && !result.success() {
                let entries = retrieve(ctx.db, &result.diagnostics, result.toolchain_id);
                if !entries.is_empty() {
                    let guidance = render_guidance(&entries);
                    if !text.is_empty() && !text.ends_with('\n') {
                        text.push('\n');
                    }
                    text.push('\n');
                    text.push_str(&guidance);
                }
            }
            text
        }
    }
}

fn zero_iteration_session(
    problem: &Problem,
    initial: SourceText,
    mode: Mode,
    feedback_mode: FeedbackMode,
    rag_enabled: bool,
    max_iterations: u32,
    result: CompileResult,
) -> RepairSession {
    RepairSession {
        problem: problem.clone(),
        initial_code: initial.clone(),
        mode,
        feedback_mode,
        rag_enabled,
        steps: Vec::new(),
        max_iterations,
        outcome: FixOutcome {
            fixed: result.success(),
            iterations_used: 0,
            final_code: initial,
            final_compile: result,
        },
        abort: None,
    }
}

/// Single-turn repair: compile for feedback, prompt once, compile the
/// revision.
pub fn run_oneshot(
    ctx: &SessionContext,
    llm: &mut dyn LlmBackend,
    problem: &Problem,
    code: &SourceText,
    feedback_mode: FeedbackMode,
    rag_enabled: bool,
    workdir: &Path,
) -> Result<RepairSession, AgentError> {
    let mut seq = CompileSequence::new(ctx, workdir);
    let initial = prefix_rule_fix(code);
    let initial_result = seq.compile(&initial)?;
    if initial_result.success() {
        return Ok(zero_iteration_session(
            problem,
            initial,
            Mode::Oneshot,
            feedback_mode,
            rag_enabled,
            1,
            initial_result,
        ));
    }

    let feedback = feedback_for(ctx, feedback_mode, rag_enabled, &initial_result);
    let messages = build_oneshot_prompt(problem, &initial, &feedback);

    let mut steps = Vec::new();
    let mut abort = None;
    let (final_code, final_compile) = match llm.complete(&messages, &ctx.params) {
        Err(e) => {
            abort = Some(format!("backend error: {e}"));
            (initial.clone(), initial_result)
        }
        Ok(response) => match extract_code_block(&response) {
            Err(_) => {
                abort = Some("no code in model response".to_string());
                (initial.clone(), initial_result)
            }
            Ok(revised) => {
                let revised = prefix_rule_fix(&revised);
                let result = seq.compile(&revised)?;
                let observation = feedback_for(ctx, feedback_mode, rag_enabled, &result);
                steps.push(ReActStep {
                    index: 1,
                    thought: String::new(),
                    action: AgentAction::Finish {
                        code: revised.clone(),
                    },
                    observation,
                });
                (revised, result)
            }
        },
    };

    Ok(RepairSession {
        problem: problem.clone(),
        initial_code: initial,
        mode: Mode::Oneshot,
        feedback_mode,
        rag_enabled,
        steps,
        max_iterations: 1,
        outcome: FixOutcome {
            fixed: final_compile.success(),
            iterations_used: 1,
            final_code,
            final_compile,
        },
        abort,
    })
}

/// The iterative Thought-Action-Observation loop. An iteration is a step
/// whose action invokes the compiler; pure retrievals are free. The loop
/// stops on the first successful compile, on a Finish action, or at
/// `max_iterations`.
#[allow(clippy::too_many_arguments)]
pub fn run_react(
    ctx: &SessionContext,
    llm: &mut dyn LlmBackend,
    problem: &Problem,
    code: &SourceText,
    feedback_mode: FeedbackMode,
    rag_enabled: bool,
    max_iterations: u32,
    workdir: &Path,
) -> Result<RepairSession, AgentError> {
    let mut seq = CompileSequence::new(ctx, workdir);
    let initial = prefix_rule_fix(code);
    let initial_result = seq.compile(&initial)?;
    if initial_result.success() {
        return Ok(zero_iteration_session(
            problem,
            initial,
            Mode::React,
            feedback_mode,
            rag_enabled,
            max_iterations,
            initial_result,
        ));
    }

    let feedback = feedback_for(ctx, feedback_mode, rag_enabled, &initial_result);
    let mut messages = vec![
        ChatMessage::system(react_system_prompt(rag_enabled)),
        ChatMessage::user(build_react_initial(problem, &initial, &feedback)),
    ];

    let mut latest_diagnostics: Vec<Diagnostic> = initial_result.diagnostics.clone();
    let mut last_code = initial.clone();
    let mut last_result = initial_result;
    let mut steps: Vec<ReActStep> = Vec::new();
    let mut iterations = 0u32;
    let mut malformed_streak = 0u32;
    let mut abort = None;
    // Pure retrieval steps do not consume the iteration budget, so cap the
    // total number of model turns to keep pathological loops finite.
    let max_turns = max_iterations.saturating_mul(4).max(4);
    let mut turns = 0u32;

    while iterations < max_iterations {
        turns += 1;
        if turns > max_turns {
            abort = Some("model turn budget exhausted".to_string());
            break;
        }
        let response = match llm.complete(&messages, &ctx.params) {
            Ok(r) => r,
            Err(e) => {
                abort = Some(format!("backend error: {e}"));
                break;
            }
        };
        messages.push(ChatMessage::assistant(response.clone()));

        let (thought, action) = match parse_agent_response(&response) {
            Ok(parsed) => {
                malformed_streak = 0;
                parsed
            }
            Err(_) => {
                malformed_streak += 1;
                if malformed_streak >= 2 {
                    abort = Some("two consecutive malformed responses".to_string());
                    break;
                }
                messages.push(ChatMessage::user(FORMAT_REMINDER));
                continue;
            }
        };

        let index = steps.len() as u32 + 1;
        match action {
            AgentAction::Retrieve { ref log_excerpt } => {
                let matched: Vec<Diagnostic> = latest_diagnostics
                    .iter()
                    .filter(|d| {
                        d.message.contains(log_excerpt.as_str())
                            || d.raw_line.contains(log_excerpt.as_str())
                    })
                    .cloned()
                    .collect();
                let entries = if rag_enabled {
                    retrieve(ctx.db, &matched, ctx.toolchain.id())
                } else {
                    Vec::new()
                };
                let observation = render_guidance(&entries);
                steps.push(ReActStep {
                    index,
                    thought,
                    action,
                    observation: observation.clone(),
                });
                messages.push(ChatMessage::user(observation_message(index, &observation)));
            }
            AgentAction::Compile { ref code } | AgentAction::Finish { ref code } => {
                let candidate = prefix_rule_fix(code);
                let result = seq.compile(&candidate)?;
                iterations += 1;
                latest_diagnostics = result.diagnostics.clone();
                let observation = feedback_for(ctx, feedback_mode, rag_enabled, &result);
                let finished = matches!(action, AgentAction::Finish { .. });
                steps.push(ReActStep {
                    index,
                    thought,
                    action,
                    observation: observation.clone(),
                });
                last_code = candidate;
                let success = result.success();
                last_result = result;
                if success || finished {
                    break;
                }
                messages.push(ChatMessage::user(observation_message(index, &observation)));
            }
        }
    }

    Ok(RepairSession {
        problem: problem.clone(),
        initial_code: initial,
        mode: Mode::React,
        feedback_mode,
        rag_enabled,
        steps,
        max_iterations,
        outcome: FixOutcome {
            fixed: last_result.success(),
            iterations_used: iterations,
            final_code: last_code,
            final_compile: last_result,
        },
        abort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::retrieval::GuidanceDB;
    use crate::toolchain::{CompileStatus, MockToolchain};

    const RULES: &str = r#"{"match_substring":"/*BUG*/","status":"syntax_error","diagnostics":[{"severity":"error","file":"main.v","line":1,"error_tag":"E1","message":"mock syntax error"}]}"#;

    const DB: &str = r#"{"id":"any-e1","toolchain":"any","error_tag":"E1","guidance":"Remove the bug marker."}"#;

    fn toolchain() -> Toolchain {
        Toolchain::mock(MockToolchain::from_jsonl(RULES).unwrap())
    }

    fn db() -> GuidanceDB {
        GuidanceDB::from_jsonl(DB, "test".into()).unwrap()
    }

    fn problem() -> Problem {
        Problem::new("t1", "A test task.", "module m(input a, output b);").unwrap()
    }

    const GOOD: &str = "module m(input a, output b);\n  assign b = a;\nendmodule";
    const BAD: &str = "module m(input a, output b);\n  /*BUG*/ assign b = a;\nendmodule";

    fn react_turn(n: u32, code: &str) -> String {
        format!("Thought {n}: revise.\nAction {n}: Compiler\n```verilog\n{code}\n```")
    }

    #[test]
    fn oneshot_fixes_with_scripted_revision() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses([format!("```verilog\n{GOOD}\n```")]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_oneshot(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            dir.path(),
        )
        .unwrap();
        assert!(session.outcome.fixed);
        assert_eq!(session.outcome.iterations_used, 1);
        assert_eq!(session.steps.len(), 1);
        assert_eq!(llm.exchanges().len(), 1);
    }

    #[test]
    fn oneshot_on_compiling_input_is_zero_iterations() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses(Vec::<String>::new());
        let dir = tempfile::tempdir().unwrap();
        let session = run_oneshot(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(GOOD).unwrap(),
            FeedbackMode::Compiler,
            false,
            dir.path(),
        )
        .unwrap();
        assert!(session.outcome.fixed);
        assert_eq!(session.outcome.iterations_used, 0);
        assert!(session.steps.is_empty());
        assert_eq!(llm.exchanges().len(), 0, "no LLM call for compiling input");
    }

    #[test]
    fn oneshot_extraction_failure_is_unfixed() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses(["I cannot help with that."]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_oneshot(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            dir.path(),
        )
        .unwrap();
        assert!(!session.outcome.fixed);
        assert!(session.abort.is_some());
        assert_eq!(session.outcome.final_code.as_str(), BAD);
    }

    #[test]
    fn react_two_turn_fix_records_both_observations() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm =
            ScriptedBackend::from_responses([react_turn(1, BAD), react_turn(2, GOOD)]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(session.outcome.fixed);
        assert_eq!(session.outcome.iterations_used, 2);
        assert_eq!(session.steps.len(), 2);
        assert!(session.steps[0].observation.contains("mock syntax error"));
        assert_eq!(session.outcome.final_compile.status, CompileStatus::Success);
    }

    #[test]
    fn react_retrieve_step_is_budget_free() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses([
            "Thought 1: look this up.\nAction 1: RAG[mock syntax error]".to_string(),
            react_turn(2, GOOD),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            true,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(session.outcome.fixed);
        assert_eq!(session.outcome.iterations_used, 1);
        assert_eq!(session.steps.len(), 2);
        assert!(session.steps[0]
            .observation
            .contains("Expert guidance:\nRemove the bug marker."));
    }

    #[test]
    fn react_malformed_twice_aborts() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses(["no action here", "still no action"]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(!session.outcome.fixed);
        assert!(session.abort.as_deref().unwrap().contains("malformed"));
        assert!(session.steps.is_empty());
    }

    #[test]
    fn react_single_malformed_gets_reprompted() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses([
            "garbled".to_string(),
            react_turn(1, GOOD),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(session.outcome.fixed);
        assert!(session.abort.is_none());
        // The reminder went out as a user message.
        let reminded = llm.exchanges()[1]
            .request
            .iter()
            .any(|m| m.content.contains("recognizable action"));
        assert!(reminded);
    }

    #[test]
    fn react_backend_error_aborts_with_reason() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses(Vec::<String>::new());
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(!session.outcome.fixed);
        assert!(session.abort.as_deref().unwrap().contains("backend error"));
    }

    #[test]
    fn simple_mode_hides_logs_but_still_detects_success() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm =
            ScriptedBackend::from_responses([react_turn(1, BAD), react_turn(2, GOOD)]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Simple,
            false,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(session.outcome.fixed);
        for step in &session.steps {
            assert!(!step.observation.contains("mock syntax error"));
        }
        for ex in llm.exchanges() {
            for msg in &ex.request {
                assert!(!msg.content.contains("mock syntax error"));
            }
        }
    }

    #[test]
    fn finish_with_failing_code_terminates_unfixed() {
        let tc = toolchain();
        let gdb = db();
        let ctx = SessionContext::new(&tc, &gdb);
        let mut llm = ScriptedBackend::from_responses([format!(
            "Thought 1: done.\nAction 1: Finish\n```verilog\n{BAD}\n```"
        )]);
        let dir = tempfile::tempdir().unwrap();
        let session = run_react(
            &ctx,
            &mut llm,
            &problem(),
            &SourceText::new(BAD).unwrap(),
            FeedbackMode::Compiler,
            false,
            10,
            dir.path(),
        )
        .unwrap();
        assert!(!session.outcome.fixed);
        assert_eq!(session.outcome.iterations_used, 1);
        assert_eq!(session.steps.len(), 1);
    }
}
