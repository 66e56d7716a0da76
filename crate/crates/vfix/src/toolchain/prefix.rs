//! Rule-based pre-fixer applied to generated code before compilation.
//!
//! Three whitelisted text rewrites, each idempotent and unable to change the
//! meaning of already-valid code:
//!   1. `timescale` directives are moved to the top of the file;
//!   2. Unicode smart quotes become their ASCII equivalents;
//!   3. trailing prose after the final `endmodule` is dropped.

use once_cell::sync::Lazy;
use regex::Regex;

use super::SourceText;

static ENDMODULE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\bendmodule\b").unwrap());

pub fn prefix_rule_fix(source: &SourceText) -> SourceText {
    let text = source.as_str();
    let text = ascii_quotes(text);
    let text = hoist_timescale(&text);
    let text = strip_trailing_prose(&text);
    // Rules never empty a non-empty source, so this cannot fail.
    SourceText::with_dialect(text, source.dialect()).expect("rules preserve non-emptiness")
}

fn ascii_quotes(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' => '\'',
            '\u{201C}' | '\u{201D}' => '"',
            other => other,
        })
        .collect()
}

fn is_timescale(line: &str) -> bool {
    line.trim_start().starts_with("`timescale")
}

fn hoist_timescale(text: &str) -> String {
    let lines: Vec<&str> = text.split('\n').collect();
    let directive_count = lines.iter().filter(|l| is_timescale(l)).count();
    if directive_count == 0 {
        return text.to_string();
    }
    // Already a prefix of the file? Leave the text untouched.
    if lines[..directive_count].iter().all(|l| is_timescale(l)) {
        return text.to_string();
    }
    let (directives, rest): (Vec<&str>, Vec<&str>) =
        lines.into_iter().partition(|l| is_timescale(l));
    let mut out: Vec<&str> = directives;
    out.extend(rest);
    out.join("\n")
}

fn strip_trailing_prose(text: &str) -> String {
    let Some(m) = ENDMODULE.find_iter(text).last() else {
        return text.to_string();
    };
    let tail = &text[m.end()..];
    if tail.trim().is_empty() {
        return text.to_string();
    }
    let mut out = text[..m.end()].to_string();
    out.push('\n');
    out
}
