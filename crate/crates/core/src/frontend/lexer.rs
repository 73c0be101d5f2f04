//! Byte-oriented tokenizer for MiniC.
//!
//! Lines and columns are 1-based; columns count bytes from the start of the
//! line, so a tab occupies a single column. Comments and preprocessor lines
//! are dropped.

use super::error::SyntaxError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Char,
    Str,
    Punct,
    Eof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

const PUNCTUATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "~", "&", "|", "^", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}",
];

pub struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    line_start: usize,
    file: &'a str,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str, file: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, line_start: 0, file }
    }

    fn column(&self, at: usize) -> u32 {
        (at - self.line_start) as u32 + 1
    }

    fn error(&self, at: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError::new(self.file, self.line, self.column(at), message)
    }

    fn peek(&self, offset: usize) -> u8 {
        self.src.get(self.pos + offset).copied().unwrap_or(0)
    }

    /// Byte length of the UTF-8 sequence starting at `at` (1 past the end).
    fn char_len_at(&self, at: usize) -> usize {
        match self.src.get(at) {
            Some(b) if *b >= 0xF0 => 4,
            Some(b) if *b >= 0xE0 => 3,
            Some(b) if *b >= 0xC0 => 2,
            _ => 1,
        }
    }

    fn newline(&mut self) {
        self.pos += 1;
        self.line += 1;
        self.line_start = self.pos;
    }

    /// True when only whitespace precedes `pos` on the current line.
    fn at_line_start(&self) -> bool {
        self.src[self.line_start..self.pos].iter().all(|b| *b == b' ' || *b == b'\t')
    }

    fn skip_trivia(&mut self) -> Result<(), SyntaxError> {
        loop {
            match self.peek(0) {
                b'\n' => self.newline(),
                b' ' | b'\t' | b'\r' | 0x0b | 0x0c if self.pos < self.src.len() => self.pos += 1,
                b'/' if self.peek(1) == b'/' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b'/' if self.peek(1) == b'*' => {
                    let open = self.pos;
                    let (line, col) = (self.line, self.column(open));
                    self.pos += 2;
                    loop {
                        if self.pos >= self.src.len() {
                            return Err(SyntaxError::new(self.file, line, col, "unterminated comment"));
                        }
                        if self.src[self.pos] == b'*' && self.peek(1) == b'/' {
                            self.pos += 2;
                            break;
                        }
                        if self.src[self.pos] == b'\n' {
                            self.newline();
                        } else {
                            self.pos += 1;
                        }
                    }
                }
                b'#' if self.at_line_start() => {
                    // Preprocessor residue: skip the logical line.
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        if self.src[self.pos] == b'\\' && self.peek(1) == b'\n' {
                            self.pos += 1;
                            self.newline();
                        } else {
                            self.pos += 1;
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn quoted(&mut self, quote: u8) -> Result<(), SyntaxError> {
        let open = self.pos;
        self.pos += 1;
        loop {
            match self.src.get(self.pos) {
                None | Some(b'\n') => return Err(self.error(open, "unterminated literal")),
                Some(b'\\') if self.peek(1) == b'\n' => {
                    self.pos += 1;
                    self.newline();
                }
                Some(b'\\') => {
                    self.pos += 1;
                    self.pos = (self.pos + self.char_len_at(self.pos)).min(self.src.len());
                }
                Some(&b) if b == quote => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    pub fn next_token(&mut self) -> Result<Token, SyntaxError> {
        self.skip_trivia()?;
        let start = self.pos;
        let (line, column) = (self.line, self.column(start));
        let make = |kind, end| Token { kind, start, end, line, column };
        if start >= self.src.len() {
            return Ok(make(TokenKind::Eof, start));
        }
        let c = self.src[start];
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.peek(0).is_ascii_alphanumeric() || self.peek(0) == b'_' {
                self.pos += 1;
            }
            // Wide/UTF literal prefixes such as L"..." or L'x'.
            if matches!(&self.src[start..self.pos], b"L" | b"u" | b"U" | b"u8") && matches!(self.peek(0), b'"' | b'\'') {
                let quote = self.peek(0);
                self.quoted(quote)?;
                let kind = if quote == b'"' { TokenKind::Str } else { TokenKind::Char };
                return Ok(make(kind, self.pos));
            }
            return Ok(make(TokenKind::Ident, self.pos));
        }
        if c.is_ascii_digit() || (c == b'.' && self.peek(1).is_ascii_digit()) {
            while self.pos < self.src.len() {
                let b = self.src[self.pos];
                let exp = matches!(b, b'+' | b'-')
                    && matches!(self.src[self.pos - 1], b'e' | b'E' | b'p' | b'P')
                    && !self.src[start..self.pos].starts_with(b"0x");
                if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || exp {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            return Ok(make(TokenKind::Number, self.pos));
        }
        if c == b'"' || c == b'\'' {
            self.quoted(c)?;
            let kind = if c == b'"' { TokenKind::Str } else { TokenKind::Char };
            return Ok(make(kind, self.pos));
        }
        for p in PUNCTUATORS {
            if self.src[start..].starts_with(p.as_bytes()) {
                self.pos += p.len();
                return Ok(make(TokenKind::Punct, self.pos));
            }
        }
        let bad = char_at(self.src, start);
        self.pos += self.char_len_at(start);
        Err(self.error(start, format!("unexpected character {bad:?}")))
    }
}

fn char_at(src: &[u8], at: usize) -> char {
    std::str::from_utf8(&src[at..]).ok().and_then(|s| s.chars().next()).unwrap_or(char::REPLACEMENT_CHARACTER)
}

/// Tokenizes a whole source text, ending with an `Eof` token.
pub fn tokenize(src: &str, file: &str) -> Result<Vec<Token>, SyntaxError> {
    let (tokens, mut errors) = tokenize_lenient(src, file);
    match errors.is_empty() {
        true => Ok(tokens),
        false => Err(errors.swap_remove(0)),
    }
}

/// Tokenizes past lexical errors, dropping the offending bytes.
pub fn tokenize_lenient(src: &str, file: &str) -> (Vec<Token>, Vec<SyntaxError>) {
    let mut lexer = Lexer::new(src, file);
    let mut out = Vec::new();
    let mut errors = Vec::new();
    loop {
        match lexer.next_token() {
            Ok(tok) => {
                out.push(tok);
                if tok.kind == TokenKind::Eof {
                    return (out, errors);
                }
            }
            Err(e) => errors.push(e),
        }
    }
}
