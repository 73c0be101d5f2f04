//! Recursive-descent parser for MiniC.
//!
//! Errors inside a top-level declaration discard that declaration and resume
//! at the next top-level `;` or closing `}`; the remaining declarations are
//! kept. Node ids are assigned in pre-order once parsing completes.

use super::ast::{AstNode, DeclInfo, ForParts, NodeId, NodeKind, SourceLoc, Span, TranslationUnit};
use super::error::SyntaxError;
use super::lexer::{tokenize_lenient, Token, TokenKind};

const MAX_NESTING: usize = 96;

const TYPE_WORDS: &[&str] = &[
    "void",
    "char",
    "short",
    "int",
    "long",
    "float",
    "double",
    "signed",
    "unsigned",
    "_Bool",
    "bool",
    "size_t",
    "ssize_t",
    "wchar_t",
    "ptrdiff_t",
    "intptr_t",
    "uintptr_t",
    "int8_t",
    "int16_t",
    "int32_t",
    "int64_t",
    "uint8_t",
    "uint16_t",
    "uint32_t",
    "uint64_t",
    "FILE",
];
const QUALIFIERS: &[&str] = &["const", "volatile", "restrict"];
const STORAGE: &[&str] = &["extern", "static", "register", "auto", "inline"];
const TAGS: &[&str] = &["struct", "union", "enum"];
const UNSUPPORTED: &[&str] = &["do", "goto", "typedef"];
const KEYWORDS: &[&str] =
    &["if", "else", "switch", "case", "default", "while", "for", "return", "break", "continue", "do", "goto", "typedef", "sizeof"];
const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

fn binary_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" => 4,
        "&" => 5,
        "==" | "!=" => 6,
        "<" | ">" | "<=" | ">=" => 7,
        "<<" | ">>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        _ => return None,
    })
}

fn is_type_word(word: &str) -> bool {
    TYPE_WORDS.contains(&word) || QUALIFIERS.contains(&word) || TAGS.contains(&word)
}

#[derive(Clone, Copy)]
struct Pos {
    byte: usize,
    line: u32,
    column: u32,
}

#[derive(Default)]
struct Specifiers {
    is_extern: bool,
    is_static: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum DeclContext {
    Global,
    Local,
}

type PResult<T> = Result<T, SyntaxError>;

struct Parser<'a> {
    src: &'a str,
    file: &'a str,
    toks: Vec<Token>,
    pos: usize,
    nodes: Vec<AstNode>,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Token {
        self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> Token {
        self.toks[(self.pos + k).min(self.toks.len() - 1)]
    }

    fn text(&self, tok: Token) -> &'a str {
        &self.src[tok.start..tok.end]
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    fn is(&self, s: &str) -> bool {
        let tok = self.peek();
        matches!(tok.kind, TokenKind::Punct | TokenKind::Ident) && self.text(tok) == s
    }

    fn is_ident_kw(&self, tok: Token, words: &[&str]) -> bool {
        tok.kind == TokenKind::Ident && words.contains(&self.text(tok))
    }

    fn bump(&mut self) -> Token {
        let tok = self.peek();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_at(&self, tok: Token, message: impl Into<String>) -> SyntaxError {
        SyntaxError::new(self.file, tok.line, tok.column, message)
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        let tok = self.peek();
        let found = match tok.kind {
            TokenKind::Eof => "end of input".to_string(),
            _ => format!("`{}`", self.text(tok)),
        };
        self.error_at(tok, format!("expected {expected}, found {found}"))
    }

    fn expect(&mut self, s: &str) -> PResult<Token> {
        if self.is(s) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&format!("`{s}`")))
        }
    }

    fn expect_ident(&mut self) -> PResult<Token> {
        let tok = self.peek();
        if tok.kind == TokenKind::Ident && !self.is_reserved(tok) {
            Ok(self.bump())
        } else {
            Err(self.unexpected("identifier"))
        }
    }

    fn is_reserved(&self, tok: Token) -> bool {
        let t = self.text(tok);
        KEYWORDS.contains(&t) || is_type_word(t) || STORAGE.contains(&t)
    }

    fn here(&self) -> Pos {
        let tok = self.peek();
        Pos { byte: tok.start, line: tok.line, column: tok.column }
    }

    fn prev_end(&self) -> usize {
        match self.pos {
            0 => 0,
            p => self.toks[p - 1].end,
        }
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        if self.depth >= MAX_NESTING {
            return Err(self.error_at(self.peek(), "nesting too deep"));
        }
        self.depth += 1;
        let out = f(self);
        self.depth -= 1;
        out
    }

    fn make(&mut self, kind: NodeKind, start: Pos, children: Vec<NodeId>) -> NodeId {
        let end = self.prev_end().max(start.byte);
        self.make_span(kind, start, end, children)
    }

    fn make_span(&mut self, kind: NodeKind, start: Pos, end: usize, children: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        for c in &children {
            self.nodes[c.0 as usize].parent = Some(id);
        }
        self.nodes.push(AstNode {
            id,
            kind,
            code: self.src[start.byte..end].to_string(),
            loc: SourceLoc::new(self.file, start.line, start.column),
            span: Span { start: start.byte, end },
            children,
            parent: None,
            enclosing_function: None,
            name: None,
            op: None,
            decl: None,
            for_parts: None,
        });
        id
    }

    fn node_mut(&mut self, id: NodeId) -> &mut AstNode {
        &mut self.nodes[id.0 as usize]
    }

    // ---- declarations -------------------------------------------------

    fn at_decl_start(&self) -> bool {
        let tok = self.peek();
        tok.kind == TokenKind::Ident && {
            let t = self.text(tok);
            is_type_word(t) || STORAGE.contains(&t)
        }
    }

    fn specifiers(&mut self) -> PResult<Specifiers> {
        let mut specs = Specifiers::default();
        let mut saw_type = false;
        loop {
            let tok = self.peek();
            if tok.kind != TokenKind::Ident {
                break;
            }
            match self.text(tok) {
                "extern" => specs.is_extern = true,
                "static" => specs.is_static = true,
                t if STORAGE.contains(&t) || QUALIFIERS.contains(&t) => {}
                t if TYPE_WORDS.contains(&t) => saw_type = true,
                t if TAGS.contains(&t) => {
                    self.bump();
                    if self.is("{") {
                        return Err(self.error_at(self.peek(), "aggregate type definitions are not supported"));
                    }
                    self.expect_ident()?;
                    saw_type = true;
                    continue;
                }
                _ => break,
            }
            self.bump();
        }
        if !saw_type {
            return Err(self.unexpected("type specifier"));
        }
        Ok(specs)
    }

    fn pointer_stars(&mut self) {
        while self.eat("*") {
            while self.is_ident_kw(self.peek(), QUALIFIERS) {
                self.bump();
            }
        }
    }

    fn array_dims(&mut self, children: &mut Vec<NodeId>) -> PResult<bool> {
        let mut is_array = false;
        while self.eat("[") {
            is_array = true;
            if !self.is("]") {
                children.push(self.expr()?);
            }
            self.expect("]")?;
        }
        Ok(is_array)
    }

    fn declaration(&mut self, ctx: DeclContext) -> PResult<Vec<NodeId>> {
        let start = self.here();
        let specs = self.specifiers()?;
        let mut out = Vec::new();
        if self.eat(";") {
            return Ok(out);
        }
        let mut first = true;
        loop {
            let decl_start = if first { start } else { self.here() };
            self.pointer_stars();
            if self.is("(") {
                return Err(self.error_at(self.peek(), "function pointers are not supported"));
            }
            let name_tok = self.expect_ident()?;
            let name = self.text(name_tok).to_string();
            if first && self.is("(") {
                out.push(self.function(start, name, &specs, ctx)?);
                return Ok(out);
            }
            let mut children = Vec::new();
            let is_array = self.array_dims(&mut children)?;
            let has_init = self.eat("=");
            if has_init {
                children.push(self.initializer()?);
            }
            let id = self.make(NodeKind::VarDecl, decl_start, children);
            let node = self.node_mut(id);
            node.name = Some(name);
            node.decl = Some(DeclInfo {
                is_extern: specs.is_extern,
                is_static: specs.is_static,
                is_definition: !specs.is_extern || has_init,
                is_array,
                is_variadic: false,
            });
            out.push(id);
            first = false;
            if !self.eat(",") {
                self.expect(";")?;
                return Ok(out);
            }
        }
    }

    fn function(&mut self, start: Pos, name: String, specs: &Specifiers, ctx: DeclContext) -> PResult<NodeId> {
        let (mut children, is_variadic) = self.params()?;
        let is_definition = self.is("{");
        if is_definition {
            if ctx == DeclContext::Local {
                return Err(self.error_at(self.peek(), "nested function definitions are not supported"));
            }
            children.push(self.block()?);
        } else {
            self.expect(";")?;
        }
        let id = self.make(NodeKind::FunctionDef, start, children);
        let node = self.node_mut(id);
        node.name = Some(name);
        node.decl = Some(DeclInfo { is_extern: specs.is_extern, is_static: specs.is_static, is_definition, is_array: false, is_variadic });
        Ok(id)
    }

    fn params(&mut self) -> PResult<(Vec<NodeId>, bool)> {
        self.expect("(")?;
        let mut params = Vec::new();
        let mut variadic = false;
        if self.eat(")") {
            return Ok((params, variadic));
        }
        if self.is("void") && self.text(self.peek_at(1)) == ")" {
            self.bump();
            self.bump();
            return Ok((params, variadic));
        }
        loop {
            if self.eat("...") {
                variadic = true;
                self.expect(")")?;
                return Ok((params, variadic));
            }
            let start = self.here();
            let specs = self.specifiers()?;
            self.pointer_stars();
            let name = match self.peek() {
                tok if tok.kind == TokenKind::Ident && !self.is_reserved(tok) => {
                    self.bump();
                    Some(self.text(tok).to_string())
                }
                _ => None,
            };
            let mut children = Vec::new();
            let is_array = self.array_dims(&mut children)?;
            let id = self.make(NodeKind::Param, start, children);
            let node = self.node_mut(id);
            node.name = name;
            node.decl = Some(DeclInfo { is_extern: false, is_static: specs.is_static, is_definition: true, is_array, is_variadic: false });
            params.push(id);
            if !self.eat(",") {
                self.expect(")")?;
                return Ok((params, variadic));
            }
        }
    }

    fn initializer(&mut self) -> PResult<NodeId> {
        if !self.is("{") {
            return self.assignment();
        }
        self.nested(|p| {
            let start = p.here();
            p.bump();
            let mut items = Vec::new();
            while !p.is("}") {
                items.push(p.initializer()?);
                if !p.eat(",") {
                    break;
                }
            }
            p.expect("}")?;
            Ok(p.make(NodeKind::InitList, start, items))
        })
    }

    // ---- statements ---------------------------------------------------

    fn block(&mut self) -> PResult<NodeId> {
        self.nested(|p| {
            let start = p.here();
            p.expect("{")?;
            let mut children = Vec::new();
            while !p.is("}") {
                if p.at_eof() {
                    return Err(p.unexpected("`}`"));
                }
                p.statement(&mut children)?;
            }
            p.bump();
            Ok(p.make(NodeKind::Block, start, children))
        })
    }

    /// Statement in branch or loop-body position; always yields one node.
    fn body(&mut self) -> PResult<NodeId> {
        if self.at_decl_start() {
            return Err(self.error_at(self.peek(), "declaration is not allowed here"));
        }
        let start = self.here();
        let mut out = Vec::new();
        self.statement(&mut out)?;
        Ok(match out.len() {
            1 => out[0],
            _ => self.make(NodeKind::Block, start, out),
        })
    }

    fn statement(&mut self, out: &mut Vec<NodeId>) -> PResult<()> {
        self.nested(|p| p.statement_inner(out))
    }

    fn statement_inner(&mut self, out: &mut Vec<NodeId>) -> PResult<()> {
        let tok = self.peek();
        if tok.kind == TokenKind::Ident && self.text(self.peek_at(1)) == ":" && !self.is_reserved(tok) {
            return Err(self.error_at(tok, "labels are not supported"));
        }
        let start = self.here();
        let word = if tok.kind == TokenKind::Ident { self.text(tok) } else { "" };
        match word {
            _ if self.is("{") => out.push(self.block()?),
            _ if self.is(";") => {
                self.bump();
            }
            "if" => {
                self.bump();
                self.expect("(")?;
                let cond = self.expr()?;
                self.expect(")")?;
                let then = self.body()?;
                let mut children = vec![cond, then];
                if self.is("else") {
                    let else_start = self.here();
                    self.bump();
                    let branch = self.body()?;
                    children.push(self.make(NodeKind::Else, else_start, vec![branch]));
                }
                out.push(self.make(NodeKind::If, start, children));
            }
            "switch" => {
                self.bump();
                self.expect("(")?;
                let cond = self.expr()?;
                self.expect(")")?;
                self.expect("{")?;
                let mut children = vec![cond];
                while !self.is("}") {
                    children.push(self.case_label()?);
                }
                self.bump();
                out.push(self.make(NodeKind::Switch, start, children));
            }
            "case" | "default" => {
                return Err(self.error_at(tok, format!("`{word}` outside of switch")));
            }
            "while" => {
                self.bump();
                self.expect("(")?;
                let cond = self.expr()?;
                self.expect(")")?;
                let body = self.body()?;
                out.push(self.make(NodeKind::While, start, vec![cond, body]));
            }
            "for" => out.push(self.for_statement()?),
            "return" => {
                self.bump();
                let mut children = Vec::new();
                if !self.is(";") {
                    children.push(self.expr()?);
                }
                self.expect(";")?;
                out.push(self.make(NodeKind::Return, start, children));
            }
            "break" | "continue" => {
                self.bump();
                self.expect(";")?;
                let kind = if word == "break" { NodeKind::Break } else { NodeKind::Continue };
                out.push(self.make(kind, start, Vec::new()));
            }
            w if UNSUPPORTED.contains(&w) => {
                return Err(self.error_at(tok, format!("`{w}` is not supported")));
            }
            _ if self.at_decl_start() => out.extend(self.declaration(DeclContext::Local)?),
            _ => {
                let e = self.expr()?;
                self.expect(";")?;
                out.push(e);
            }
        }
        Ok(())
    }

    fn case_label(&mut self) -> PResult<NodeId> {
        let start = self.here();
        let mut children = Vec::new();
        let kind = if self.eat("case") {
            children.push(self.conditional()?);
            NodeKind::Case
        } else if self.eat("default") {
            NodeKind::Default
        } else {
            return Err(self.unexpected("`case` or `default`"));
        };
        self.expect(":")?;
        while !(self.is("case") || self.is("default") || self.is("}")) {
            if self.at_eof() {
                return Err(self.unexpected("`}`"));
            }
            self.statement(&mut children)?;
        }
        Ok(self.make(kind, start, children))
    }

    fn for_statement(&mut self) -> PResult<NodeId> {
        let start = self.here();
        self.bump();
        self.expect("(")?;
        let mut parts = ForParts::default();
        if !self.eat(";") {
            if self.at_decl_start() {
                let decls = self.declaration(DeclContext::Local)?;
                if decls.len() != 1 {
                    return Err(self.error_at(self.peek(), "for-init must declare exactly one variable"));
                }
                parts.init = Some(decls[0]);
            } else {
                parts.init = Some(self.expr()?);
                self.expect(";")?;
            }
        }
        if !self.is(";") {
            parts.cond = Some(self.expr()?);
        }
        self.expect(";")?;
        if !self.is(")") {
            parts.step = Some(self.expr()?);
        }
        self.expect(")")?;
        parts.body = Some(self.body()?);
        let children = [parts.init, parts.cond, parts.step, parts.body].into_iter().flatten().collect();
        let id = self.make(NodeKind::For, start, children);
        self.node_mut(id).for_parts = Some(parts);
        Ok(id)
    }

    // ---- expressions --------------------------------------------------

    fn expr(&mut self) -> PResult<NodeId> {
        self.nested(|p| p.assignment())
    }

    fn assignment(&mut self) -> PResult<NodeId> {
        let start = self.here();
        let lhs = self.conditional()?;
        let tok = self.peek();
        if tok.kind == TokenKind::Punct && ASSIGN_OPS.contains(&self.text(tok)) {
            self.bump();
            let rhs = self.nested(|p| p.assignment())?;
            let id = self.make(NodeKind::Assign, start, vec![lhs, rhs]);
            self.node_mut(id).op = Some(self.text(tok).to_string());
            return Ok(id);
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> PResult<NodeId> {
        let start = self.here();
        let cond = self.binary(1)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        let a = self.expr()?;
        self.expect(":")?;
        let b = self.nested(|p| p.conditional())?;
        let id = self.make(NodeKind::BinaryOp, start, vec![cond, a, b]);
        self.node_mut(id).op = Some("?:".into());
        Ok(id)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<NodeId> {
        let start = self.here();
        let mut lhs = self.unary()?;
        loop {
            let tok = self.peek();
            if tok.kind != TokenKind::Punct {
                return Ok(lhs);
            }
            let op = self.text(tok);
            let prec = match binary_precedence(op) {
                Some(p) if p >= min_prec => p,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = self.make(NodeKind::BinaryOp, start, vec![lhs, rhs]);
            self.node_mut(lhs).op = Some(op.to_string());
        }
    }

    fn starts_type_name(&self, tok: Token) -> bool {
        tok.kind == TokenKind::Ident && is_type_word(self.text(tok))
    }

    fn type_name(&mut self) -> PResult<()> {
        self.specifiers()?;
        self.pointer_stars();
        while self.eat("[") {
            self.expect("]")?;
        }
        Ok(())
    }

    fn unary(&mut self) -> PResult<NodeId> {
        self.nested(|p| p.unary_inner())
    }

    fn unary_inner(&mut self) -> PResult<NodeId> {
        let start = self.here();
        let tok = self.peek();
        let text = self.text(tok);
        if tok.kind == TokenKind::Punct && matches!(text, "-" | "+" | "!" | "~" | "*" | "&" | "++" | "--") {
            self.bump();
            let operand = self.unary()?;
            let id = self.make(NodeKind::UnaryOp, start, vec![operand]);
            self.node_mut(id).op = Some(text.to_string());
            return Ok(id);
        }
        if tok.kind == TokenKind::Ident && text == "sizeof" {
            self.bump();
            let children = if self.is("(") && self.starts_type_name(self.peek_at(1)) {
                self.bump();
                self.type_name()?;
                self.expect(")")?;
                Vec::new()
            } else {
                vec![self.unary()?]
            };
            let id = self.make(NodeKind::UnaryOp, start, children);
            self.node_mut(id).op = Some("sizeof".into());
            return Ok(id);
        }
        if self.is("(") && self.starts_type_name(self.peek_at(1)) {
            self.bump();
            self.type_name()?;
            self.expect(")")?;
            let operand = self.unary()?;
            let id = self.make(NodeKind::UnaryOp, start, vec![operand]);
            self.node_mut(id).op = Some("cast".into());
            return Ok(id);
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<NodeId> {
        let start = self.here();
        let mut e = self.primary()?;
        loop {
            if self.eat("[") {
                let index = self.expr()?;
                self.expect("]")?;
                e = self.make(NodeKind::Index, start, vec![e, index]);
            } else if self.is("(") {
                self.bump();
                let callee_name = match self.nodes[e.0 as usize].kind {
                    NodeKind::Identifier => self.nodes[e.0 as usize].name.clone(),
                    _ => None,
                };
                let mut children = vec![e];
                if !self.is(")") {
                    loop {
                        let arg_start = self.here();
                        let value = self.assignment()?;
                        children.push(self.make(NodeKind::Arg, arg_start, vec![value]));
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                e = self.make(NodeKind::Call, start, children);
                self.node_mut(e).name = callee_name;
            } else if self.is(".") || self.is("->") {
                let tok = self.bump();
                let op = self.text(tok);
                let field = self.expect_ident()?;
                e = self.make(NodeKind::MemberAccess, start, vec![e]);
                let field = self.text(field).to_string();
                let node = self.node_mut(e);
                node.op = Some(op.to_string());
                node.name = Some(field);
            } else if self.is("++") || self.is("--") {
                let tok = self.bump();
                let op = self.text(tok);
                e = self.make(NodeKind::UnaryOp, start, vec![e]);
                self.node_mut(e).op = Some(format!("post{op}"));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<NodeId> {
        let start = self.here();
        let tok = self.peek();
        match tok.kind {
            TokenKind::Ident if !self.is_reserved(tok) => {
                self.bump();
                let id = self.make(NodeKind::Identifier, start, Vec::new());
                self.node_mut(id).name = Some(self.text(tok).to_string());
                Ok(id)
            }
            TokenKind::Number | TokenKind::Char => {
                self.bump();
                Ok(self.make(NodeKind::Literal, start, Vec::new()))
            }
            TokenKind::Str => {
                while self.peek().kind == TokenKind::Str {
                    self.bump();
                }
                Ok(self.make(NodeKind::Literal, start, Vec::new()))
            }
            TokenKind::Punct if self.is("(") => {
                self.bump();
                let inner = self.expr()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    // ---- top level ----------------------------------------------------

    fn recover(&mut self, from: usize) {
        self.pos = from;
        self.depth = 0;
        let mut depth = 0usize;
        loop {
            let tok = self.bump();
            match (tok.kind, self.text(tok)) {
                (TokenKind::Eof, _) => return,
                (TokenKind::Punct, "{") => depth += 1,
                (TokenKind::Punct, "}") => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        // A trailing `;` after `}` belongs to the skipped declaration.
                        self.eat(";");
                        return;
                    }
                }
                (TokenKind::Punct, ";") if depth == 0 => return,
                _ => {}
            }
        }
    }

    fn translation_unit(&mut self, errors: &mut Vec<SyntaxError>) -> NodeId {
        let mut children = Vec::new();
        while !self.at_eof() {
            let mark_nodes = self.nodes.len();
            let mark_tok = self.pos;
            match self.declaration(DeclContext::Global) {
                Ok(ids) => children.extend(ids),
                Err(e) => {
                    errors.push(e);
                    self.nodes.truncate(mark_nodes);
                    self.recover(mark_tok);
                }
            }
        }
        let start = Pos { byte: 0, line: 1, column: 1 };
        self.make_span(NodeKind::TranslationUnit, start, self.src.len(), children)
    }
}

/// Re-labels nodes in pre-order from `root` and fills `enclosing_function`.
fn renumber(mut raw: Vec<AstNode>, root: NodeId) -> Vec<AstNode> {
    let mut order = Vec::with_capacity(raw.len());
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        order.push(id);
        stack.extend(raw[id.0 as usize].children.iter().rev());
    }
    let mut new_id = vec![NodeId(u32::MAX); raw.len()];
    for (i, old) in order.iter().enumerate() {
        new_id[old.0 as usize] = NodeId(i as u32);
    }
    let map = |id: NodeId| new_id[id.0 as usize];
    let mut out: Vec<AstNode> = Vec::with_capacity(order.len());
    for old in &order {
        let mut node = std::mem::replace(&mut raw[old.0 as usize], placeholder());
        node.id = map(node.id);
        node.children = node.children.iter().map(|c| map(*c)).collect();
        node.parent = node.parent.map(map);
        if let Some(parts) = node.for_parts.as_mut() {
            for slot in [&mut parts.init, &mut parts.cond, &mut parts.step, &mut parts.body] {
                *slot = slot.map(map);
            }
        }
        let enclosing = match node.kind {
            NodeKind::FunctionDef => Some(node.id),
            _ => node.parent.and_then(|p| out[p.0 as usize].enclosing_function),
        };
        node.enclosing_function = enclosing;
        out.push(node);
    }
    out
}

fn placeholder() -> AstNode {
    AstNode {
        id: NodeId(u32::MAX),
        kind: NodeKind::Literal,
        code: String::new(),
        loc: SourceLoc::new("", 0, 0),
        span: Span::default(),
        children: Vec::new(),
        parent: None,
        enclosing_function: None,
        name: None,
        op: None,
        decl: None,
        for_parts: None,
    }
}

/// Parses a file, recovering from errors at top-level declaration granularity.
/// Returned ids start at 0.
pub fn parse_lenient(source: &str, filename: &str) -> (TranslationUnit, Vec<SyntaxError>) {
    let (toks, mut errors) = tokenize_lenient(source, filename);
    let mut parser = Parser { src: source, file: filename, toks, pos: 0, nodes: Vec::new(), depth: 0 };
    let root = parser.translation_unit(&mut errors);
    let nodes = renumber(parser.nodes, root);
    errors.sort_by_key(|e| (e.line, e.column));
    let unit = TranslationUnit { file: filename.to_string(), source: source.to_string(), root: NodeId(0), nodes };
    (unit, errors)
}
