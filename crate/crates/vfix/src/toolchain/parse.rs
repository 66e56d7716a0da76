//! Log parsers for the supported compilers.
//!
//! Quartus prints a numeric code on every message, which becomes the
//! `error_tag` directly. iverilog prints free-form text, so a fixed pattern
//! table maps message shapes to stable tags usable as retrieval keys.

use once_cell::sync::Lazy;
use regex::Regex;

use super::{Diagnostic, Severity, ToolchainId};

/// Tag assigned to iverilog's bare "I give up." line.
pub const TAG_GIVE_UP: &str = "IV_GIVEUP";

/// Pattern table for iverilog messages. First match wins.
static IVERILOG_TAGS: Lazy<Vec<(Regex, &'static str)>> = Lazy::new(|| {
    [
        (r"(?i)unable to bind", "IV_UNDECLARED"),
        (r"(?i)not a valid l-?value", "IV_LVALUE"),
        (r"(?i)out of range", "IV_INDEX_RANGE"),
        (r"(?i)syntax error", "IV_SYNTAX"),
        (r"(?i)requires\s+systemverilog", "IV_SV_REQUIRED"),
        (r"(?i)incomprehensible for loop", "IV_FOR_LOOP"),
        (r"(?i)failed to evaluate event expression", "IV_EVENT_EXPR"),
        (r"(?i)unknown module type", "IV_UNKNOWN_MODULE"),
        (r"(?i)give up", TAG_GIVE_UP),
    ]
    .into_iter()
    .map(|(pat, tag)| (Regex::new(pat).expect("pattern table regex"), tag))
    .collect()
});

static IVERILOG_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^(?P<file>[^:\s][^:]*):(?P<line>\d+): ?(?P<rest>.+)$").unwrap());

static QUARTUS_LINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(?P<sev>Critical Warning|Error|Warning)\s*\((?P<code>\d+)\):\s*(?P<rest>.*)$")
        .unwrap()
});

static QUARTUS_LOCATION: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\bat\s+(?P<file>[^\s():]+)\((?P<line>\d+)\):\s*").unwrap());

static QUARTUS_FILE_ECHO: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\s*File:\s*\S*\s*Line:\s*\d+\s*$").unwrap());

/// Look up the stable tag for an iverilog message, if the pattern table
/// recognizes it.
pub fn iverilog_tag(message: &str) -> Option<&'static str> {
    IVERILOG_TAGS
        .iter()
        .find(|(re, _)| re.is_match(message))
        .map(|(_, tag)| *tag)
}

/// Parse a raw compiler log into structured diagnostics, one per recognized
/// line, in log order. Unrecognized lines are skipped; the caller keeps the
/// raw log for anything the parser misses.
pub fn parse_diagnostics(raw_log: &str, toolchain_id: ToolchainId) -> Vec<Diagnostic> {
    match toolchain_id {
        ToolchainId::Iverilog | ToolchainId::Mock => parse_iverilog(raw_log),
        ToolchainId::Quartus => parse_quartus(raw_log),
    }
}

fn parse_iverilog(raw_log: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for line in raw_log.lines() {
        let trimmed = line.trim();
        if trimmed == "I give up." || trimmed == "I give up" {
            out.push(Diagnostic {
                severity: Severity::Error,
                file: String::new(),
                line: None,
                error_tag: Some(TAG_GIVE_UP.to_string()),
                message: trimmed.to_string(),
                raw_line: line.to_string(),
            });
            continue;
        }
        let Some(caps) = IVERILOG_LINE.captures(line) else {
            continue;
        };
        let Ok(line_no) = caps["line"].parse::<u32>() else {
            continue;
        };
        let rest = caps["rest"].trim();
        let (severity, message) = split_iverilog_severity(rest);
        if message.is_empty() {
            continue;
        }
        out.push(Diagnostic {
            severity,
            file: caps["file"].to_string(),
            line: (line_no >= 1).then_some(line_no),
            error_tag: iverilog_tag(message).map(str::to_string),
            message: message.to_string(),
            raw_line: line.to_string(),
        });
    }
    out
}

fn split_iverilog_severity(rest: &str) -> (Severity, &str) {
    for (prefix, sev) in [
        ("internal error:", Severity::Error),
        ("error:", Severity::Error),
        ("sorry:", Severity::Error),
        ("warning:", Severity::Warning),
    ] {
        if let Some(msg) = rest.strip_prefix(prefix) {
            return (sev, msg.trim());
        }
    }
    // iverilog emits some errors without a severity word, e.g.
    // "main.v:9: Incomprehensible for loop."
    (Severity::Error, rest)
}

fn parse_quartus(raw_log: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for line in raw_log.lines() {
        let Some(caps) = QUARTUS_LINE.captures(line.trim_end()) else {
            continue;
        };
        let severity = match &caps["sev"] {
            "Error" => Severity::Error,
            _ => Severity::Warning,
        };
        let rest = caps["rest"].trim();
        let (file, line_no, message) = match QUARTUS_LOCATION.captures(rest) {
            Some(loc) => {
                let whole = loc.get(0).unwrap();
                (
                    loc["file"].to_string(),
                    loc["line"].parse::<u32>().ok().filter(|n| *n >= 1),
                    &rest[whole.end()..],
                )
            }
            None => (String::new(), None, rest),
        };
        let message = QUARTUS_FILE_ECHO.replace(message, "").trim().to_string();
        out.push(Diagnostic {
            severity,
            file,
            line: line_no,
            error_tag: Some(caps["code"].to_string()),
            message,
            raw_line: line.to_string(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG_INDEX_LOG: &str =
        "main.v:5: error: Index out[8] is out of range.\n1 error(s) during elaboration.\n";

    const FIG_BIND_LINE: &str =
        "vector100r.sv:5: error: Unable to bind wire/reg/memory `clk' in `top_module'";

    const FIG_QUARTUS_LOG: &str = "Error (10161): Verilog HDL error at vector100r.sv(5): object \"clk\" is not declared. Verify the object name is correct. If the name is correct, declare the object. File: /tmp/tmp4u6ib9ig/vector100r.sv Line: 5\nError: Quartus Prime Analysis & Synthesis was unsuccessful. 1 error, 1 warning\n";

    #[test]
    fn iverilog_index_out_of_range() {
        let diags = parse_diagnostics(FIG_INDEX_LOG, ToolchainId::Iverilog);
        assert_eq!(diags.len(), 1);
        let d = &diags[0];
        assert_eq!(d.severity, Severity::Error);
        assert_eq!(d.file, "main.v");
        assert_eq!(d.line, Some(5));
        assert_eq!(d.error_tag.as_deref(), Some("IV_INDEX_RANGE"));
        assert_eq!(d.message, "Index out[8] is out of range.");
        assert_eq!(d.raw_line, "main.v:5: error: Index out[8] is out of range.");
    }

    #[test]
    fn iverilog_unable_to_bind() {
        let diags = parse_diagnostics(FIG_BIND_LINE, ToolchainId::Iverilog);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].error_tag.as_deref(), Some("IV_UNDECLARED"));
        assert_eq!(diags[0].file, "vector100r.sv");
        assert_eq!(diags[0].line, Some(5));
    }

    #[test]
    fn iverilog_two_errors_in_order() {
        let log = format!(
            "{FIG_BIND_LINE}\nvector100r.sv:5: error: Failed to evaluate event expression 'posedge clk'.\n2 error(s) during elaboration.\n"
        );
        let diags = parse_diagnostics(&log, ToolchainId::Iverilog);
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].error_tag.as_deref(), Some("IV_UNDECLARED"));
        assert_eq!(diags[1].error_tag.as_deref(), Some("IV_EVENT_EXPR"));
    }

    #[test]
    fn iverilog_message_only_lines_are_errors() {
        let log = "main.v:1: Variable declaration in unnamed block requires SystemVerilog.\nmain.v:9: Incomprehensible for loop.\n";
        let diags = parse_diagnostics(log, ToolchainId::Iverilog);
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].severity, Severity::Error);
        assert_eq!(diags[0].error_tag.as_deref(), Some("IV_SV_REQUIRED"));
        assert_eq!(diags[1].error_tag.as_deref(), Some("IV_FOR_LOOP"));
    }

    #[test]
    fn iverilog_give_up_line() {
        let log = "main.v:5: syntax error\nI give up.\n";
        let diags = parse_diagnostics(log, ToolchainId::Iverilog);
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].error_tag.as_deref(), Some("IV_SYNTAX"));
        assert_eq!(diags[1].error_tag.as_deref(), Some(TAG_GIVE_UP));
        assert_eq!(diags[1].file, "");
        assert_eq!(diags[1].line, None);
    }

    #[test]
    fn iverilog_warning_severity() {
        let log = "main.v:3: warning: implicit definition of wire 'x'.\n";
        let diags = parse_diagnostics(log, ToolchainId::Iverilog);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert!(diags[0].error_tag.is_none());
    }

    #[test]
    fn quartus_fig5_log() {
        let diags = parse_diagnostics(FIG_QUARTUS_LOG, ToolchainId::Quartus);
        assert_eq!(diags.len(), 1, "summary line must not parse");
        let d = &diags[0];
        assert_eq!(d.severity, Severity::Error);
        assert_eq!(d.file, "vector100r.sv");
        assert_eq!(d.line, Some(5));
        assert_eq!(d.error_tag.as_deref(), Some("10161"));
        assert_eq!(
            d.message,
            "object \"clk\" is not declared. Verify the object name is correct. If the name is correct, declare the object."
        );
    }

    #[test]
    fn quartus_index_error() {
        let log = "Error (10232): Verilog HDL error at conwaylife.sv(23): index -17 cannot fall outside the declared range [255:0] for vector \"q\"";
        let diags = parse_diagnostics(log, ToolchainId::Quartus);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].error_tag.as_deref(), Some("10232"));
        assert_eq!(diags[0].file, "conwaylife.sv");
        assert_eq!(diags[0].line, Some(23));
    }

    #[test]
    fn quartus_warning_codes() {
        let log = "Warning (10236): Verilog HDL Implicit Net warning at top.v(4): created implicit net for \"x\"\nCritical Warning (127005): No clock transition\n";
        let diags = parse_diagnostics(log, ToolchainId::Quartus);
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().all(|d| d.severity == Severity::Warning));
        assert_eq!(diags[0].error_tag.as_deref(), Some("10236"));
        assert_eq!(diags[1].error_tag.as_deref(), Some("127005"));
    }

    #[test]
    fn empty_log_yields_nothing() {
        assert!(parse_diagnostics("", ToolchainId::Iverilog).is_empty());
        assert!(parse_diagnostics("", ToolchainId::Quartus).is_empty());
    }

    #[test]
    fn parsing_is_pure() {
        let a = parse_diagnostics(FIG_QUARTUS_LOG, ToolchainId::Quartus);
        let b = parse_diagnostics(FIG_QUARTUS_LOG, ToolchainId::Quartus);
        assert_eq!(a, b);
    }
}
