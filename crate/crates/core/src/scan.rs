//! Lexical scanning of normalized Solidity: function boundaries, visibility,
//! modifiers, and pattern queries. No grammar; brace and paren depth only.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use log::warn;
use regex::Regex;

use crate::corpus::{ContractSource, Diagnostic};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Public,
    External,
    Internal,
    Private,
    Unspecified,
}

/// One `function` or `constructor` declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSpan {
    /// Empty for constructors and unnamed fallbacks.
    pub name: String,
    pub visibility: Visibility,
    pub modifiers: Vec<String>,
    /// Keyword through the character before the body (or the `;`).
    pub header_range: Range<usize>,
    /// The braced body including both braces; empty for declarations
    /// without a body.
    pub body_range: Range<usize>,
    pub param_text: String,
}

impl FunctionSpan {
    pub fn header<'a>(&self, text: &'a str) -> &'a str {
        &text[self.header_range.clone()]
    }

    pub fn body<'a>(&self, text: &'a str) -> &'a str {
        &text[self.body_range.clone()]
    }

    pub fn has_body(&self) -> bool {
        !self.body_range.is_empty()
    }
}

/// Identifier characters, `$` included.
pub fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn at_word(bytes: &[u8], pos: usize, word: &str) -> bool {
    let w = word.as_bytes();
    bytes.len() >= pos + w.len()
        && &bytes[pos..pos + w.len()] == w
        && (pos == 0 || !is_word_byte(bytes[pos - 1]))
        && bytes.get(pos + w.len()).is_none_or(|&b| !is_word_byte(b))
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn read_ident(bytes: &[u8], start: usize) -> usize {
    let mut end = start;
    while end < bytes.len() && is_word_byte(bytes[end]) {
        end += 1;
    }
    end
}

/// Position just past the bracket matching the one at `open`, or `None`.
fn matching(bytes: &[u8], open: usize, lhs: u8, rhs: u8) -> Option<usize> {
    let mut depth = 0usize;
    for (offset, &b) in bytes[open..].iter().enumerate() {
        if b == lhs {
            depth += 1;
        } else if b == rhs {
            depth -= 1;
            if depth == 0 {
                return Some(open + offset + 1);
            }
        }
    }
    None
}

const HEADER_KEYWORDS: &[&str] = &[
    "view",
    "pure",
    "payable",
    "nonpayable",
    "virtual",
    "override",
    "returns",
    "constant",
    "immutable",
];

fn parse_tail(tail: &[u8]) -> (Visibility, Vec<String>) {
    let mut visibility = Visibility::Unspecified;
    let mut modifiers = Vec::new();
    let mut pos = 0;
    while pos < tail.len() {
        let b = tail[pos];
        if b == b'(' {
            pos = matching(tail, pos, b'(', b')').unwrap_or(tail.len());
        } else if is_word_byte(b) {
            let end = read_ident(tail, pos);
            let word = std::str::from_utf8(&tail[pos..end]).unwrap_or_default();
            match word {
                "public" => visibility = Visibility::Public,
                "external" => visibility = Visibility::External,
                "internal" => visibility = Visibility::Internal,
                "private" => visibility = Visibility::Private,
                w if HEADER_KEYWORDS.contains(&w) => {}
                w if w.as_bytes()[0].is_ascii_digit() => {}
                w => modifiers.push(w.to_string()),
            }
            pos = end;
        } else {
            pos += 1;
        }
    }
    (visibility, modifiers)
}

/// Extracts function spans, logging diagnostics for unbalanced input.
pub fn extract_functions(normalized_text: &str) -> Vec<FunctionSpan> {
    let (spans, diagnostics) = scan_functions(normalized_text);
    for d in diagnostics {
        warn!("line {}: {}", d.line, d.message);
    }
    spans
}

/// Best-effort function extraction. Declarations are recognized at brace
/// depth 0 (free functions) or 1 (contract members).
pub fn scan_functions(text: &str) -> (Vec<FunctionSpan>, Vec<Diagnostic>) {
    let bytes = text.as_bytes();
    let line_of = |pos: usize| bytes[..pos].iter().filter(|&&b| b == b'\n').count() + 1;
    let mut spans = Vec::new();
    let mut diagnostics = Vec::new();
    let mut depth = 0usize;
    let mut pos = 0;

    while pos < bytes.len() {
        match bytes[pos] {
            b'{' => {
                depth += 1;
                pos += 1;
                continue;
            }
            b'}' => {
                if depth == 0 {
                    diagnostics.push(Diagnostic {
                        line: line_of(pos),
                        message: "unmatched `}`".into(),
                    });
                }
                depth = depth.saturating_sub(1);
                pos += 1;
                continue;
            }
            _ => {}
        }
        let keyword = ["function", "constructor"]
            .into_iter()
            .find(|kw| depth <= 1 && at_word(bytes, pos, kw));
        let Some(keyword) = keyword else {
            pos += 1;
            continue;
        };

        let start = pos;
        let mut cursor = skip_ws(bytes, pos + keyword.len());
        let mut name = String::new();
        if keyword == "function" {
            let end = read_ident(bytes, cursor);
            name = text[cursor..end].to_string();
            cursor = skip_ws(bytes, end);
        }
        if bytes.get(cursor) != Some(&b'(') {
            pos += keyword.len();
            continue;
        }
        let Some(params_end) = matching(bytes, cursor, b'(', b')') else {
            diagnostics.push(Diagnostic {
                line: line_of(start),
                message: format!("unclosed parameter list for `{keyword} {name}`"),
            });
            break;
        };
        let param_text = text[cursor + 1..params_end - 1].to_string();

        // Header tail: up to `{` or `;` outside parentheses.
        let mut tail_end = params_end;
        let mut paren = 0usize;
        while tail_end < bytes.len() {
            match bytes[tail_end] {
                b'(' => paren += 1,
                b')' => paren = paren.saturating_sub(1),
                b'{' | b';' if paren == 0 => break,
                _ => {}
            }
            tail_end += 1;
        }
        if tail_end == bytes.len() {
            diagnostics.push(Diagnostic {
                line: line_of(start),
                message: format!("declaration of `{name}` never reaches a body or `;`"),
            });
            break;
        }
        let (visibility, modifiers) = parse_tail(&bytes[params_end..tail_end]);

        let body_range = if bytes[tail_end] == b';' {
            tail_end..tail_end
        } else {
            match matching(bytes, tail_end, b'{', b'}') {
                Some(end) => tail_end..end,
                None => {
                    diagnostics.push(Diagnostic {
                        line: line_of(tail_end),
                        message: format!("body of `{name}` is never closed"),
                    });
                    tail_end..bytes.len()
                }
            }
        };
        pos = if body_range.is_empty() {
            tail_end + 1
        } else {
            body_range.end
        };
        spans.push(FunctionSpan {
            name,
            visibility,
            modifiers,
            header_range: start..tail_end,
            body_range,
            param_text,
        });
    }

    if depth > 0 {
        diagnostics.push(Diagnostic {
            line: line_of(bytes.len()),
            message: format!("{depth} unclosed `{{` at end of file"),
        });
    }
    (spans, diagnostics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    /// Whole-word occurrence.
    Identifier,
    /// Whole-word occurrence followed (modulo whitespace) by `(`.
    Call,
    /// Plain substring.
    Substring,
    /// Regular expression (Rust `regex` syntax).
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    File,
    FunctionBody,
    FunctionSignature,
}

macro_rules! named_enum {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+ $(,)?) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim() {
                    $($name => Ok($variant),)+
                    other => Err(format!(concat!("unknown ", $what, " `{}`"), other)),
                }
            }
        }
    };
}

named_enum!(PatternKind, "pattern kind",
    PatternKind::Identifier => "identifier",
    PatternKind::Call => "call",
    PatternKind::Substring => "substring",
    PatternKind::Regex => "regex",
);

named_enum!(Scope, "scope",
    Scope::File => "file",
    Scope::FunctionBody => "function_body",
    Scope::FunctionSignature => "function_signature",
);

/// A text query over a contract or one of its functions.
#[derive(Debug, Clone)]
pub struct Pattern {
    kind: PatternKind,
    scope: Scope,
    needle: String,
    regex: Option<Regex>,
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.scope == other.scope && self.needle == other.needle
    }
}

impl Eq for Pattern {}

impl Pattern {
    pub fn new(kind: PatternKind, scope: Scope, needle: impl Into<String>) -> Result<Self, Error> {
        let needle = needle.into();
        if needle.is_empty() {
            return Err(Error::Config("pattern needle is empty".into()));
        }
        let regex = match kind {
            PatternKind::Regex => Some(
                Regex::new(&needle)
                    .map_err(|e| Error::Config(format!("bad regex `{needle}`: {e}")))?,
            ),
            PatternKind::Identifier | PatternKind::Call => {
                if !needle.bytes().all(is_word_byte) {
                    return Err(Error::Config(format!(
                        "{kind} needle `{needle}` is not an identifier"
                    )));
                }
                None
            }
            PatternKind::Substring => None,
        };
        Ok(Pattern {
            kind,
            scope,
            needle,
            regex,
        })
    }

    pub fn identifier(scope: Scope, needle: &str) -> Self {
        Pattern::new(PatternKind::Identifier, scope, needle).expect("valid identifier")
    }

    pub fn call(scope: Scope, needle: &str) -> Self {
        Pattern::new(PatternKind::Call, scope, needle).expect("valid identifier")
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn needle(&self) -> &str {
        &self.needle
    }

    /// Does the needle occur in `text` under this pattern's kind?
    pub fn matches_text(&self, text: &str) -> bool {
        match self.kind {
            PatternKind::Substring => text.contains(self.needle.as_str()),
            PatternKind::Regex => self.regex.as_ref().is_some_and(|r| r.is_match(text)),
            PatternKind::Identifier | PatternKind::Call => {
                let bytes = text.as_bytes();
                text.match_indices(self.needle.as_str()).any(|(pos, _)| {
                    if !at_word(bytes, pos, &self.needle) {
                        return false;
                    }
                    self.kind == PatternKind::Identifier
                        || bytes.get(skip_ws(bytes, pos + self.needle.len())) == Some(&b'(')
                })
            }
        }
    }

    /// Evaluates against a single function (function scopes) or the whole
    /// file (file scope).
    pub fn matches_in(&self, text: &str, span: Option<&FunctionSpan>) -> bool {
        match (self.scope, span) {
            (Scope::File, _) => self.matches_text(text),
            (Scope::FunctionBody, Some(s)) => self.matches_text(s.body(text)),
            (Scope::FunctionSignature, Some(s)) => self.matches_text(s.header(text)),
            (_, None) => false,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.kind, self.scope, self.needle)
    }
}

/// True iff `pattern` occurs in the source per its kind and scope. Function
/// scopes match when any span matches.
pub fn match_pattern(source: &ContractSource, spans: &[FunctionSpan], pattern: &Pattern) -> bool {
    let text = source.normalized_text.as_str();
    match pattern.scope() {
        Scope::File => pattern.matches_text(text),
        _ => spans.iter().any(|s| pattern.matches_in(text, Some(s))),
    }
}
