//! Indentation-aware tokenizer for the Python subset.
//!
//! Produces a flat token stream with explicit `Newline`, `Indent` and
//! `Dedent` tokens. Newlines inside bracket pairs and after a trailing
//! backslash are suppressed, matching Python's implicit/explicit line
//! joining rules.

use super::ast::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(String),
    Float(String),
    Str {
        /// Exact source token, including quotes and prefix.
        raw: String,
        /// Cooked value with escapes processed (raw strings keep backslashes).
        value: String,
        is_fstring: bool,
    },
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("name `{n}`"),
            Tok::Int(t) | Tok::Float(t) => format!("number `{t}`"),
            Tok::Str { .. } => "string literal".to_string(),
            Tok::Op(op) => format!("`{op}`"),
            Tok::Newline => "end of line".to_string(),
            Tok::Indent => "indent".to_string(),
            Tok::Dedent => "dedent".to_string(),
            Tok::Eof => "end of file".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

/// Multi-character operators, longest first so greedy matching works.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "!=", ">=", "<=", "==", "->", ":=", "+=", "-=", "*=", "/=",
    "%=", "@=", "&=", "|=", "^=", "**", "//", ">>", "<<", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];
    let mut pos = 0usize;
    let mut paren_depth = 0usize;
    let mut at_line_start = true;
    // True once a logical line has emitted at least one real token.
    let mut line_has_content = false;

    while pos < bytes.len() {
        if at_line_start && paren_depth == 0 {
            // Measure indentation; skip blank and comment-only lines.
            let line_start = pos;
            let mut col = 0usize;
            let mut p = pos;
            while p < bytes.len() {
                match bytes[p] {
                    b' ' => {
                        col += 1;
                        p += 1;
                    }
                    b'\t' => {
                        col += 8 - (col % 8);
                        p += 1;
                    }
                    _ => break,
                }
            }
            if p >= bytes.len() {
                pos = p;
                break;
            }
            match bytes[p] {
                b'\n' => {
                    pos = p + 1;
                    continue;
                }
                b'\r' => {
                    pos = p + 1;
                    continue;
                }
                b'#' => {
                    while p < bytes.len() && bytes[p] != b'\n' {
                        p += 1;
                    }
                    pos = p;
                    continue;
                }
                _ => {}
            }
            let current = *indents.last().unwrap();
            if col > current {
                indents.push(col);
                tokens.push(Token {
                    tok: Tok::Indent,
                    span: Span::new(line_start, p),
                });
            } else if col < current {
                while *indents.last().unwrap() > col {
                    indents.pop();
                    tokens.push(Token {
                        tok: Tok::Dedent,
                        span: Span::new(line_start, p),
                    });
                }
                if *indents.last().unwrap() != col {
                    // Inconsistent dedent: recover by treating it as a new level.
                    indents.push(col);
                }
            }
            pos = p;
            at_line_start = false;
            line_has_content = false;
            continue;
        }

        let c = bytes[pos];
        match c {
            b' ' | b'\t' => {
                pos += 1;
            }
            b'\r' => {
                pos += 1;
            }
            b'\n' => {
                if paren_depth > 0 {
                    pos += 1;
                } else {
                    if line_has_content {
                        tokens.push(Token {
                            tok: Tok::Newline,
                            span: Span::new(pos, pos + 1),
                        });
                        line_has_content = false;
                    }
                    pos += 1;
                    at_line_start = true;
                }
            }
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b'\\' => {
                // Explicit line joining: backslash immediately before newline.
                let mut p = pos + 1;
                if p < bytes.len() && bytes[p] == b'\r' {
                    p += 1;
                }
                if p < bytes.len() && bytes[p] == b'\n' {
                    pos = p + 1;
                } else {
                    return Err(LexError {
                        offset: pos,
                        message: "unexpected `\\` outside line continuation".to_string(),
                    });
                }
            }
            b'"' | b'\'' => {
                let token = lex_string(src, pos, String::new())?;
                pos = token.span.end;
                tokens.push(token);
                line_has_content = true;
            }
            b'0'..=b'9' => {
                let token = lex_number(src, pos)?;
                pos = token.span.end;
                tokens.push(token);
                line_has_content = true;
            }
            b'.' if pos + 1 < bytes.len() && bytes[pos + 1].is_ascii_digit() => {
                let token = lex_number(src, pos)?;
                pos = token.span.end;
                tokens.push(token);
                line_has_content = true;
            }
            _ if is_ident_start(c) => {
                let start = pos;
                let mut p = pos;
                while p < bytes.len() && is_ident_continue(bytes[p]) {
                    p += 1;
                }
                let word = &src[start..p];
                // String prefixes: r, b, f, u and two-letter combinations.
                if word.len() <= 2
                    && word
                        .chars()
                        .all(|ch| matches!(ch, 'r' | 'R' | 'b' | 'B' | 'f' | 'F' | 'u' | 'U'))
                    && p < bytes.len()
                    && (bytes[p] == b'"' || bytes[p] == b'\'')
                {
                    let token = lex_string(src, start, word.to_lowercase())?;
                    pos = token.span.end;
                    tokens.push(token);
                } else {
                    tokens.push(Token {
                        tok: Tok::Name(word.to_string()),
                        span: Span::new(start, p),
                    });
                    pos = p;
                }
                line_has_content = true;
            }
            _ => {
                let rest = &src[pos..];
                let mut matched = None;
                for op in OPERATORS {
                    if rest.starts_with(op) {
                        matched = Some(*op);
                        break;
                    }
                }
                match matched {
                    Some(op) => {
                        match op {
                            "(" | "[" | "{" => paren_depth += 1,
                            ")" | "]" | "}" => paren_depth = paren_depth.saturating_sub(1),
                            _ => {}
                        }
                        tokens.push(Token {
                            tok: Tok::Op(op),
                            span: Span::new(pos, pos + op.len()),
                        });
                        pos += op.len();
                        line_has_content = true;
                    }
                    None => {
                        // Skip a full UTF-8 character we do not understand.
                        let ch_len = src[pos..]
                            .chars()
                            .next()
                            .map(|ch| ch.len_utf8())
                            .unwrap_or(1);
                        return Err(LexError {
                            offset: pos,
                            message: format!("unexpected character `{}`", &src[pos..pos + ch_len]),
                        });
                    }
                }
            }
        }
    }

    if line_has_content {
        tokens.push(Token {
            tok: Tok::Newline,
            span: Span::new(pos, pos),
        });
    }
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token {
            tok: Tok::Dedent,
            span: Span::new(pos, pos),
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        span: Span::new(pos, pos),
    });
    Ok(tokens)
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c >= 0x80
}

fn is_ident_continue(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c >= 0x80
}

/// Lex a string starting at `start` (which may point at a prefix like `f` or
/// `rb`). `prefix` carries the already-scanned lowercase prefix letters.
fn lex_string(src: &str, start: usize, prefix: String) -> Result<Token, LexError> {
    let bytes = src.as_bytes();
    let mut pos = start + prefix.len();
    let quote = bytes[pos];
    let is_raw = prefix.contains('r');
    let is_fstring = prefix.contains('f');

    let triple = pos + 2 < bytes.len() && bytes[pos + 1] == quote && bytes[pos + 2] == quote;
    let (open_len, closer): (usize, &[u8]) = if triple {
        (3, &bytes[pos..pos + 3])
    } else {
        (1, &bytes[pos..pos + 1])
    };
    pos += open_len;

    let mut value = String::new();
    loop {
        if pos >= bytes.len() {
            return Err(LexError {
                offset: start,
                message: "unterminated string literal".to_string(),
            });
        }
        if !triple && (bytes[pos] == b'\n') {
            return Err(LexError {
                offset: pos,
                message: "newline inside string literal".to_string(),
            });
        }
        if bytes[pos..].starts_with(closer) {
            pos += closer.len();
            break;
        }
        if bytes[pos] == b'\\' && pos + 1 < bytes.len() {
            // A multibyte character after the backslash is kept verbatim.
            if !bytes[pos + 1].is_ascii() {
                let ch = src[pos + 1..].chars().next().unwrap();
                value.push('\\');
                value.push(ch);
                pos += 1 + ch.len_utf8();
                continue;
            }
            if is_raw {
                value.push('\\');
                value.push(bytes[pos + 1] as char);
            } else {
                let esc = bytes[pos + 1];
                match esc {
                    b'n' => value.push('\n'),
                    b't' => value.push('\t'),
                    b'r' => value.push('\r'),
                    b'\\' => value.push('\\'),
                    b'\'' => value.push('\''),
                    b'"' => value.push('"'),
                    b'0' => value.push('\0'),
                    b'\n' => {}
                    b'x' => {
                        let digits = src.get(pos + 2..pos + 4);
                        if let Some(v) = digits.and_then(|d| u8::from_str_radix(d, 16).ok()) {
                            value.push(v as char);
                            pos += 4;
                            continue;
                        }
                        value.push('\\');
                        value.push('x');
                    }
                    other => {
                        value.push('\\');
                        value.push(other as char);
                    }
                }
            }
            pos += 2;
            continue;
        }
        let ch = src[pos..].chars().next().unwrap();
        value.push(ch);
        pos += ch.len_utf8();
    }

    Ok(Token {
        tok: Tok::Str {
            raw: src[start..pos].to_string(),
            value,
            is_fstring,
        },
        span: Span::new(start, pos),
    })
}

fn lex_number(src: &str, start: usize) -> Result<Token, LexError> {
    let bytes = src.as_bytes();
    let mut pos = start;
    let mut is_float = false;

    if bytes[pos] == b'0'
        && pos + 1 < bytes.len()
        && matches!(bytes[pos + 1], b'x' | b'X' | b'o' | b'O' | b'b' | b'B')
    {
        pos += 2;
        while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
            pos += 1;
        }
        return Ok(Token {
            tok: Tok::Int(src[start..pos].to_string()),
            span: Span::new(start, pos),
        });
    }

    while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'_') {
        pos += 1;
    }
    if pos < bytes.len() && bytes[pos] == b'.' {
        // Not a float if followed by another `.` (ellipsis) or a name char.
        let next = bytes.get(pos + 1).copied();
        if next.map(|c| c.is_ascii_digit()).unwrap_or(false)
            || next
                .map(|c| !is_ident_continue(c) && c != b'.')
                .unwrap_or(true)
        {
            is_float = true;
            pos += 1;
            while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'_') {
                pos += 1;
            }
        }
    }
    if pos < bytes.len() && matches!(bytes[pos], b'e' | b'E') {
        let mut p = pos + 1;
        if p < bytes.len() && matches!(bytes[p], b'+' | b'-') {
            p += 1;
        }
        if p < bytes.len() && bytes[p].is_ascii_digit() {
            is_float = true;
            pos = p;
            while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'_') {
                pos += 1;
            }
        }
    }
    if pos < bytes.len() && matches!(bytes[pos], b'j' | b'J') {
        // Complex literals are lexed but treated as opaque floats.
        pos += 1;
        is_float = true;
    }

    let text = src[start..pos].to_string();
    Ok(Token {
        tok: if is_float {
            Tok::Float(text)
        } else {
            Tok::Int(text)
        },
        span: Span::new(start, pos),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn simple_assignment() {
        assert_eq!(
            kinds("x = 1"),
            vec![
                Tok::Name("x".into()),
                Tok::Op("="),
                Tok::Int("1".into()),
                Tok::Newline,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn indentation_blocks() {
        let toks = kinds("if a:\n    b = 1\nc = 2\n");
        assert!(toks.contains(&Tok::Indent));
        assert!(toks.contains(&Tok::Dedent));
    }

    #[test]
    fn blank_and_comment_lines_do_not_affect_indentation() {
        let toks = kinds("if a:\n    b = 1\n\n    # comment\n    c = 2\n");
        let indents = toks.iter().filter(|t| matches!(t, Tok::Indent)).count();
        let dedents = toks.iter().filter(|t| matches!(t, Tok::Dedent)).count();
        assert_eq!(indents, 1);
        assert_eq!(dedents, 1);
    }

    #[test]
    fn implicit_continuation_in_brackets() {
        let toks = kinds("f(a,\n  b)");
        let newlines = toks.iter().filter(|t| matches!(t, Tok::Newline)).count();
        assert_eq!(newlines, 1);
    }

    #[test]
    fn backslash_continuation() {
        let toks = kinds("def f(a, \\\n      b):\n    pass\n");
        let newlines = toks.iter().filter(|t| matches!(t, Tok::Newline)).count();
        assert_eq!(newlines, 2);
    }

    #[test]
    fn scientific_float() {
        assert_eq!(kinds("1e-10")[0], Tok::Float("1e-10".into()));
    }

    #[test]
    fn string_escapes_and_fstrings() {
        match &kinds("'a\\nb'")[0] {
            Tok::Str { value, .. } => assert_eq!(value, "a\nb"),
            other => panic!("unexpected token {other:?}"),
        }
        match &kinds("f'x {y}'")[0] {
            Tok::Str { is_fstring, .. } => assert!(is_fstring),
            other => panic!("unexpected token {other:?}"),
        }
    }

    #[test]
    fn triple_quoted_string_spans_lines() {
        let toks = kinds("s = '''a\nb'''\n");
        match &toks[2] {
            Tok::Str { value, .. } => assert_eq!(value, "a\nb"),
            other => panic!("unexpected token {other:?}"),
        }
    }
}
