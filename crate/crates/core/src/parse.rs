//! Extraction of proofs from model output and diagnostics from verifier logs.
//!
//! Model output is expected to look like
//!
//! ```text
//! <Thought>
//! ...reasoning, possibly with draft proofs and error blocks...
//! </Thought>
//! <Output>
//! ```lean4
//! theorem ... := by
//!   ...
//! ```
//! </Output>
//! ```
//!
//! The last lean4 fence inside the output section is the proof. Corrector
//! transcripts quote the failed draft earlier in the text, so taking the
//! first fence would resubmit a known-bad proof.

use serde::{Deserialize, Serialize};

use crate::model::{Diagnostic, Severity};

const THOUGHT_OPEN: &str = "<Thought>";
const THOUGHT_CLOSE: &[&str] = &["</Thought>", "<\\Thought>"];
const OUTPUT_OPEN: &str = "<Output>";
const OUTPUT_CLOSE: &str = "</Output>";

/// Why no proof could be taken from a model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    NoCodeBlock,
    ContainsSorry,
    MalformedSections,
}

/// One fenced block: info string (may be empty) and body without the fence lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    pub info: String,
    pub body: String,
}

impl CodeBlock {
    pub fn is_lean(&self) -> bool {
        let info = self.info.split_whitespace().next().unwrap_or("");
        info.eq_ignore_ascii_case("lean4") || info.eq_ignore_ascii_case("lean")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedOutput {
    pub thought: Option<String>,
    pub output_section: Option<String>,
    pub code_blocks: Vec<CodeBlock>,
    pub chosen_proof: Option<String>,
    pub rejection: Option<Rejection>,
    /// Number of lean blocks considered for selection (more than one is logged).
    pub lean_candidates: usize,
    /// Body of the rejected block when the rejection is `ContainsSorry`.
    pub sorry_candidate: Option<String>,
}

impl ParsedOutput {
    /// The proof text to submit to the verifier: the chosen proof, or the
    /// sorry-bearing block so the verifier can report it as a failure.
    pub fn submission(&self) -> Option<&str> {
        self.chosen_proof
            .as_deref()
            .or(self.sorry_candidate.as_deref())
    }
}

/// Parses model output without knowledge of the prompt.
pub fn parse_model_output(raw: &str) -> ParsedOutput {
    parse_model_output_for(raw, None)
}

/// Parses model output; when `fl_statement` is given and the chosen proof
/// starts with it byte-for-byte, that restatement is stripped and the tactic
/// body is kept.
pub fn parse_model_output_for(raw: &str, fl_statement: Option<&str>) -> ParsedOutput {
    let sections = split_sections(raw);
    let mut parsed = ParsedOutput {
        thought: sections.thought.map(str::to_string),
        output_section: sections.output.map(str::to_string),
        code_blocks: extract_code_blocks(raw),
        ..Default::default()
    };

    let candidates: Vec<CodeBlock> = match sections.output {
        Some(out) => {
            let blocks = extract_code_blocks(out);
            let lean: Vec<_> = blocks.iter().filter(|b| b.is_lean()).cloned().collect();
            if lean.is_empty() && !sections.tagged {
                blocks.into_iter().filter(|b| b.info.is_empty()).collect()
            } else {
                lean
            }
        }
        None => {
            // Lenient mode: no Output section, scan everything outside the thought.
            let scope = match (sections.after_thought, sections.unclosed_thought) {
                (Some(rest), _) => rest,
                (None, true) => "",
                (None, false) => raw,
            };
            let blocks = extract_code_blocks(scope);
            let lean: Vec<_> = blocks.iter().filter(|b| b.is_lean()).cloned().collect();
            if lean.is_empty() {
                blocks.into_iter().filter(|b| b.info.is_empty()).collect()
            } else {
                lean
            }
        }
    };
    parsed.lean_candidates = candidates.len();
    if candidates.len() > 1 {
        log::debug!(
            "{} candidate proof blocks; taking the last",
            candidates.len()
        );
    }

    let Some(block) = candidates.last() else {
        parsed.rejection = Some(if sections.malformed {
            Rejection::MalformedSections
        } else {
            Rejection::NoCodeBlock
        });
        return parsed;
    };
    let mut proof = block.body.clone();
    if let Some(fl) = fl_statement {
        if let Some(rest) = proof.strip_prefix(fl) {
            if !rest.trim().is_empty() {
                proof = rest.trim_start_matches(['\r', '\n']).to_string();
            }
        }
    }
    if proof.trim().is_empty() {
        parsed.rejection = Some(Rejection::NoCodeBlock);
    } else if contains_sorry(&proof) {
        parsed.rejection = Some(Rejection::ContainsSorry);
        parsed.sorry_candidate = Some(proof);
    } else {
        parsed.chosen_proof = Some(proof);
    }
    parsed
}

struct Sections<'a> {
    thought: Option<&'a str>,
    output: Option<&'a str>,
    after_thought: Option<&'a str>,
    tagged: bool,
    unclosed_thought: bool,
    malformed: bool,
}

fn split_sections(raw: &str) -> Sections<'_> {
    let open_thought = raw.find(THOUGHT_OPEN);
    let close_thought = THOUGHT_CLOSE
        .iter()
        .filter_map(|tag| raw.find(tag).map(|i| (i, tag.len())))
        .min();
    let open_output = raw.rfind(OUTPUT_OPEN);

    let thought_start = open_thought.map(|i| i + THOUGHT_OPEN.len()).unwrap_or(0);
    let thought = match (close_thought, open_output) {
        (Some((end, _)), _) if end >= thought_start => Some(&raw[thought_start..end]),
        (None, Some(out)) if open_thought.is_some() && out >= thought_start => {
            Some(&raw[thought_start..out])
        }
        (None, None) if open_thought.is_some() => Some(&raw[thought_start..]),
        _ => None,
    };
    let after_thought = close_thought.map(|(i, len)| &raw[i + len..]);

    let output = open_output.map(|i| {
        let body = &raw[i + OUTPUT_OPEN.len()..];
        match body.find(OUTPUT_CLOSE) {
            Some(end) => &body[..end],
            None => body,
        }
    });

    let tagged = open_thought.is_some() || close_thought.is_some() || open_output.is_some();
    let malformed = match (open_output, raw.rfind(OUTPUT_CLOSE)) {
        (None, Some(_)) => true,
        (Some(o), Some(c)) => c < o,
        _ => false,
    };
    let unclosed_thought = open_thought.is_some() && close_thought.is_none();
    Sections {
        thought: thought.map(|t| t.trim_matches('\n')),
        output,
        after_thought,
        tagged,
        unclosed_thought,
        malformed: malformed || (unclosed_thought && open_output.is_none()),
    }
}

/// Returns fence info and trailing text if `line` opens or closes a backtick fence.
fn fence_line(line: &str) -> Option<(usize, &str)> {
    let t = line.trim_start();
    let ticks = t.chars().take_while(|&c| c == '`').count();
    if ticks >= 3 {
        Some((ticks, t[ticks..].trim()))
    } else {
        None
    }
}

/// All fenced code blocks in document order. An unterminated fence runs to
/// the end of the text.
pub fn extract_code_blocks(text: &str) -> Vec<CodeBlock> {
    let mut blocks = Vec::new();
    let mut open: Option<(usize, String, Vec<&str>)> = None;
    for line in text.lines() {
        match &mut open {
            None => {
                if let Some((ticks, info)) = fence_line(line) {
                    open = Some((ticks, info.to_string(), Vec::new()));
                }
            }
            Some((ticks, _, body)) => match fence_line(line) {
                // A closing fence carries no info string; a lone "&" after the
                // fence is tolerated.
                Some((n, rest)) if n >= *ticks && (rest.is_empty() || rest == "&") => {
                    let (_, info, body) = open.take().unwrap();
                    blocks.push(CodeBlock {
                        info,
                        body: body.join("\n"),
                    });
                }
                _ => body.push(line),
            },
        }
    }
    if let Some((_, info, body)) = open {
        blocks.push(CodeBlock {
            info,
            body: body.join("\n"),
        });
    }
    blocks
}

/// Replaces comments and string literals with spaces, preserving byte offsets
/// of everything else. Handles nested `/- -/` blocks.
pub fn mask_comments_and_strings(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    let blank = |s: &str, out: &mut String| {
        for c in s.chars() {
            out.push(if c == '\n' { '\n' } else { ' ' });
        }
    };
    while i < bytes.len() {
        let rest = &src[i..];
        if rest.starts_with("--") {
            let end = rest.find('\n').unwrap_or(rest.len());
            blank(&rest[..end], &mut out);
            i += end;
        } else if rest.starts_with("/-") {
            let mut depth = 0usize;
            let mut j = 0;
            let rb = rest.as_bytes();
            while j < rb.len() {
                if rb[j..].starts_with(b"/-") {
                    depth += 1;
                    j += 2;
                } else if rb[j..].starts_with(b"-/") {
                    depth -= 1;
                    j += 2;
                    if depth == 0 {
                        break;
                    }
                } else {
                    j += 1;
                }
            }
            let j = j.min(rb.len());
            // j always lands on a char boundary: the delimiters are ASCII.
            let end = (0..=j)
                .rev()
                .find(|&k| rest.is_char_boundary(k))
                .unwrap_or(0);
            blank(&rest[..end], &mut out);
            i += end.max(1);
        } else if rest.starts_with('"') {
            let mut j = 1;
            let rb = rest.as_bytes();
            while j < rb.len() {
                match rb[j] {
                    b'\\' => j += 2,
                    b'"' => {
                        j += 1;
                        break;
                    }
                    _ => j += 1,
                }
            }
            let j = j.min(rb.len());
            let end = (j..=rb.len())
                .find(|&k| rest.is_char_boundary(k))
                .unwrap_or(rb.len());
            blank(&rest[..end], &mut out);
            i += end;
        } else {
            let c = rest.chars().next().unwrap();
            out.push(c);
            i += c.len_utf8();
        }
    }
    out
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric()
        || c == '_'
        || c == '\''
        || c == '!'
        || c == '?'
        || c == '.'
        || ('\u{2080}'..='\u{209c}').contains(&c)
}

/// True when the token `sorry` appears outside comments and string literals.
pub fn contains_sorry(src: &str) -> bool {
    let masked = mask_comments_and_strings(src);
    let mut from = 0;
    while let Some(pos) = masked[from..].find("sorry") {
        let start = from + pos;
        let end = start + "sorry".len();
        let before = masked[..start].chars().next_back();
        let after = masked[end..].chars().next();
        let bounded = |c: Option<char>| c.is_none_or(|c| !is_ident_char(c));
        if bounded(before) && bounded(after) {
            return true;
        }
        from = end;
    }
    false
}

/// Source format of a verifier log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    /// `file:line:col: severity: message` as emitted by the Lean toolchain.
    LeanNative,
    /// `line N` header, blank line, message; optionally inside bash fences.
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("verifier reported failure but no diagnostics could be parsed from a {len}-byte log")]
    UnrecognizedLog { len: usize },
    #[error("cannot render an empty diagnostic list")]
    EmptyDiagnostics,
}

/// Parses every diagnostic in `log`, in log order.
pub fn parse_verifier_log(log: &str, format: LogFormat) -> Vec<Diagnostic> {
    match format {
        LogFormat::LeanNative => parse_lean_native(log),
        LogFormat::Block => parse_block_log(log),
    }
}

/// As [`parse_verifier_log`], for a log the verifier flagged as failing: an
/// empty result from non-empty text means the format has drifted.
pub fn parse_failing_log(log: &str, format: LogFormat) -> Result<Vec<Diagnostic>, ParseError> {
    let diags = parse_verifier_log(log, format);
    if diags.is_empty() && !log.trim().is_empty() {
        return Err(ParseError::UnrecognizedLog { len: log.len() });
    }
    Ok(diags)
}

/// Trailing whitespace and surrounding blank lines removed.
pub fn normalize_message(msg: &str) -> String {
    let lines: Vec<&str> = msg.lines().map(str::trim_end).collect();
    let start = lines
        .iter()
        .position(|l| !l.is_empty())
        .unwrap_or(lines.len());
    let end = lines
        .iter()
        .rposition(|l| !l.is_empty())
        .map_or(start, |e| e + 1);
    lines[start..end].join("\n")
}

fn parse_lean_native(log: &str) -> Vec<Diagnostic> {
    struct Pending {
        line: u32,
        col: u32,
        sev: Severity,
        msg: Vec<String>,
    }
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    let flush = |p: Option<Pending>, out: &mut Vec<Diagnostic>| {
        if let Some(p) = p {
            let msg = normalize_message(&p.msg.join("\n"));
            if !msg.is_empty() {
                out.push(Diagnostic::new(Some(p.line), Some(p.col), p.sev, msg));
            }
        }
    };
    for line in log.lines() {
        if let Some((ln, col, sev, first)) = native_header(line) {
            flush(cur.take(), &mut out);
            cur = Some(Pending {
                line: ln,
                col,
                sev,
                msg: vec![first.to_string()],
            });
        } else if let Some(p) = &mut cur {
            p.msg.push(line.to_string());
        }
    }
    flush(cur, &mut out);
    out
}

/// Matches `<path>:<line>:<col>: <severity>: <rest>`.
fn native_header(line: &str) -> Option<(u32, u32, Severity, &str)> {
    for (marker, sev) in [
        (": error: ", Severity::Error),
        (": error:", Severity::Error),
        (": warning: ", Severity::Warning),
        (": warning:", Severity::Warning),
        (": info: ", Severity::Info),
        (": information: ", Severity::Info),
        (": info:", Severity::Info),
    ] {
        let Some(idx) = line.find(marker) else {
            continue;
        };
        let head = &line[..idx];
        let mut parts = head.rsplitn(3, ':');
        let col = parts.next()?.trim().parse().ok()?;
        let ln = parts.next()?.trim().parse().ok()?;
        parts.next()?;
        return Some((ln, col, sev, &line[idx + marker.len()..]));
    }
    None
}

fn line_header(line: &str) -> Option<u32> {
    let t = line.trim();
    let rest = t.strip_prefix("line ")?;
    rest.trim().parse().ok()
}

fn parse_block_log(log: &str) -> Vec<Diagnostic> {
    let fences = extract_code_blocks(log);
    let chunks: Vec<String> = if fences.is_empty() {
        split_on_line_headers(log)
    } else {
        fences.into_iter().map(|b| b.body).collect()
    };
    chunks.iter().filter_map(|c| parse_block(c)).collect()
}

fn split_on_line_headers(log: &str) -> Vec<String> {
    let mut chunks: Vec<Vec<&str>> = Vec::new();
    for line in log.lines() {
        if line_header(line).is_some() || chunks.is_empty() {
            chunks.push(Vec::new());
        }
        chunks.last_mut().unwrap().push(line);
    }
    chunks.into_iter().map(|c| c.join("\n")).collect()
}

fn parse_block(body: &str) -> Option<Diagnostic> {
    let mut lines = body.lines().skip_while(|l| l.trim().is_empty()).peekable();
    let line_no = {
        let l = lines.peek()?;
        line_header(l)
    };
    if line_no.is_some() {
        lines.next();
    }
    let msg = normalize_message(&lines.collect::<Vec<_>>().join("\n"));
    if msg.is_empty() {
        return None;
    }
    Some(Diagnostic::new(line_no, None, Severity::Error, msg))
}

/// One bash fence per diagnostic, in order: `line N`, blank line, message.
pub fn render_error_block(diagnostics: &[Diagnostic]) -> Result<String, ParseError> {
    if diagnostics.is_empty() {
        return Err(ParseError::EmptyDiagnostics);
    }
    let mut out = String::new();
    for d in diagnostics {
        out.push_str("```bash\n");
        if let Some(line) = d.line {
            out.push_str(&format!("line {line}\n\n"));
        }
        out.push_str(&d.message);
        if !d.message.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
    }
    Ok(out)
}
