//! Surface syntax: lexer, recursive-descent parser and program validation.
//!
//! A program is a sequence of sort declarations, predicate definitions and
//! `checkentail` queries. Sorts must be declared before use; predicates may be
//! forward-referenced (arities are checked after the whole file is read).

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{
    AddrExpr, CmpOp, Entailment, Expr, Field, FieldKind, IntExpr, PredCase, PredDef, PredEnv, Pure,
    Sort, SpatialAtom, SymbolicHeap, Var, VarGen,
};

/// A parsed input file.
#[derive(Debug, Clone)]
pub struct Program {
    pub sorts: Vec<Sort>,
    pub preds: PredEnv,
    pub queries: Vec<Query>,
    /// first id not used by any parsed variable; seed for fresh-variable
    /// generation during proof search
    pub next_var_id: u32,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub name: String,
    pub entailment: Entailment,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    // keywords
    Sort,
    Pred,
    Name,
    CheckEntail,
    Exists,
    Forall,
    Emp,
    True,
    False,
    Nil,
    AddrKw,
    IntKw,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Dot,
    Star,
    Amp,
    Pipe,
    Bang,
    Arrow,
    Turnstile,
    CaseSep,
    Implies,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(n) => return write!(f, "identifier `{}`", n),
            Tok::Int(n) => return write!(f, "integer `{}`", n),
            Tok::Sort => "`sort`",
            Tok::Pred => "`pred`",
            Tok::Name => "`name`",
            Tok::CheckEntail => "`checkentail`",
            Tok::Exists => "`exists`",
            Tok::Forall => "`forall`",
            Tok::Emp => "`emp`",
            Tok::True => "`true`",
            Tok::False => "`false`",
            Tok::Nil => "`nil`",
            Tok::AddrKw => "`addr`",
            Tok::IntKw => "`int`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::Comma => "`,`",
            Tok::Semi => "`;`",
            Tok::Colon => "`:`",
            Tok::Dot => "`.`",
            Tok::Star => "`*`",
            Tok::Amp => "`&`",
            Tok::Pipe => "`|`",
            Tok::Bang => "`!`",
            Tok::Arrow => "`->`",
            Tok::Turnstile => "`|-`",
            Tok::CaseSep => "`\\/`",
            Tok::Implies => "`=>`",
            Tok::Eq => "`=`",
            Tok::Ne => "`!=`",
            Tok::Lt => "`<`",
            Tok::Le => "`<=`",
            Tok::Gt => "`>`",
            Tok::Ge => "`>=`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    let err = |line: u32, col: u32, msg: String| ParseError { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let step = |i: &mut usize, col: &mut u32, n: usize| {
            *i += n;
            *col += n as u32;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => step(&mut i, &mut col, 1),
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += (i - start) as u32;
                let tok = match word.as_str() {
                    "sort" => Tok::Sort,
                    "pred" => Tok::Pred,
                    "name" => Tok::Name,
                    "checkentail" => Tok::CheckEntail,
                    "exists" => Tok::Exists,
                    "forall" => Tok::Forall,
                    "emp" => Tok::Emp,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "nil" => Tok::Nil,
                    "addr" => Tok::AddrKw,
                    "int" => Tok::IntKw,
                    _ => Tok::Ident(word),
                };
                out.push(Spanned {
                    tok,
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                col += (i - start) as u32;
                let n: i64 = digits.parse().map_err(|_| {
                    err(
                        tline,
                        tcol,
                        format!("integer literal `{}` out of range", digits),
                    )
                })?;
                out.push(Spanned {
                    tok: Tok::Int(n),
                    line: tline,
                    col: tcol,
                });
            }
            _ => {
                let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let (tok, n) = match two.as_str() {
                    "|-" => (Tok::Turnstile, 2),
                    "\\/" => (Tok::CaseSep, 2),
                    "->" => (Tok::Arrow, 2),
                    "=>" => (Tok::Implies, 2),
                    "!=" => (Tok::Ne, 2),
                    "<=" => (Tok::Le, 2),
                    ">=" => (Tok::Ge, 2),
                    _ => match c {
                        '{' => (Tok::LBrace, 1),
                        '}' => (Tok::RBrace, 1),
                        '(' => (Tok::LParen, 1),
                        ')' => (Tok::RParen, 1),
                        ',' => (Tok::Comma, 1),
                        ';' => (Tok::Semi, 1),
                        ':' => (Tok::Colon, 1),
                        '.' => (Tok::Dot, 1),
                        '*' => (Tok::Star, 1),
                        '&' => (Tok::Amp, 1),
                        '|' => (Tok::Pipe, 1),
                        '!' => (Tok::Bang, 1),
                        '=' => (Tok::Eq, 1),
                        '<' => (Tok::Lt, 1),
                        '>' => (Tok::Gt, 1),
                        '+' => (Tok::Plus, 1),
                        '-' => (Tok::Minus, 1),
                        other => {
                            return Err(err(
                                tline,
                                tcol,
                                format!("unexpected character `{}`", other),
                            ))
                        }
                    },
                };
                step(&mut i, &mut col, n);
                out.push(Spanned {
                    tok,
                    line: tline,
                    col: tcol,
                });
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Lexical scopes for variable resolution. In `auto` mode (queries) unknown
/// identifiers become free variables of the outermost frame; otherwise
/// (predicate cases) they are errors.
struct Scope {
    frames: Vec<HashMap<String, Var>>,
    auto: bool,
}

impl Scope {
    fn new(auto: bool) -> Scope {
        Scope {
            frames: vec![HashMap::new()],
            auto,
        }
    }

    fn push(&mut self) {
        self.frames.push(HashMap::new());
    }

    fn pop(&mut self) {
        self.frames.pop();
    }

    fn bind(&mut self, var: Var) {
        self.frames
            .last_mut()
            .expect("scope has a frame")
            .insert(var.name.clone(), var);
    }

    fn resolve(&mut self, name: &str, vars: &mut VarGen) -> Option<Var> {
        for frame in self.frames.iter().rev() {
            if let Some(v) = frame.get(name) {
                return Some(v.clone());
            }
        }
        if self.auto {
            let v = vars.fresh(name);
            self.frames[0].insert(name.to_string(), v.clone());
            Some(v)
        } else {
            None
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    vars: VarGen,
    sorts: Vec<Sort>,
    preds: PredEnv,
    queries: Vec<Query>,
    /// predicate applications awaiting arity checks: (pred, argc, line, col)
    pending_apps: Vec<(String, usize, u32, u32)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (u32, u32) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == &tok {
            self.advance();
            Ok(())
        } else {
            self.err(format!("expected {}, found {}", tok, self.peek()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(n) => {
                self.advance();
                Ok(n)
            }
            other => self.err(format!("expected {}, found {}", what, other)),
        }
    }

    fn program(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek() {
                Tok::Eof => return Ok(()),
                Tok::Sort => self.sort_decl()?,
                Tok::Pred => self.pred_def()?,
                Tok::Name | Tok::CheckEntail => self.query()?,
                other => {
                    let other = other.clone();
                    return self.err(format!(
                        "expected `sort`, `pred`, `name` or `checkentail`, found {}",
                        other
                    ));
                }
            }
        }
    }

    fn sort_decl(&mut self) -> Result<(), ParseError> {
        self.expect(Tok::Sort)?;
        let (line, col) = self.here();
        let name = self.ident("a sort name")?;
        if self.sorts.iter().any(|s| s.name == name) {
            return Err(ParseError {
                line,
                col,
                msg: format!("duplicate sort `{}`", name),
            });
        }
        self.expect(Tok::LBrace)?;
        let mut fields = Vec::new();
        loop {
            let kind = match self.advance() {
                Tok::AddrKw => FieldKind::Addr,
                Tok::IntKw => FieldKind::Int,
                other => return self.err(format!("expected `addr` or `int`, found {}", other)),
            };
            let fname = self.ident("a field name")?;
            if fields.iter().any(|f: &Field| f.name == fname) {
                return self.err(format!("duplicate field `{}` in sort `{}`", fname, name));
            }
            fields.push(Field { name: fname, kind });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Semi)?;
        self.sorts.push(Sort { name, fields });
        Ok(())
    }

    fn pred_def(&mut self) -> Result<(), ParseError> {
        self.expect(Tok::Pred)?;
        let (line, col) = self.here();
        let name = self.ident("a predicate name")?;
        self.expect(Tok::LParen)?;
        let mut scope = Scope::new(false);
        let mut params = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                let pname = self.ident("a parameter name")?;
                if params.iter().any(|p: &Var| p.name == pname) {
                    return self.err(format!("duplicate parameter `{}`", pname));
                }
                let v = self.vars.fresh(&pname);
                scope.bind(v.clone());
                params.push(v);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Colon)?;
        self.expect(Tok::Eq)?;
        let mut cases = Vec::new();
        loop {
            let body = self.heap(&mut scope)?;
            cases.push(PredCase { body, base: false });
            if !self.eat(&Tok::CaseSep) {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        self.preds
            .insert(PredDef {
                name: name.clone(),
                params,
                cases,
            })
            .map_err(|e| ParseError {
                line,
                col,
                msg: e.to_string(),
            })
    }

    fn query(&mut self) -> Result<(), ParseError> {
        let name = if self.eat(&Tok::Name) {
            let n = self.ident("a query name")?;
            self.expect(Tok::Colon)?;
            Some(n)
        } else {
            None
        };
        let (line, col) = self.here();
        self.expect(Tok::CheckEntail)?;
        let mut scope = Scope::new(true);
        let ante = self.heap(&mut scope)?;
        self.expect(Tok::Turnstile)?;
        let cons = self.heap(&mut scope)?;
        self.expect(Tok::Semi)?;
        let name = name.unwrap_or_else(|| format!("q{}", self.queries.len() + 1));
        if self.queries.iter().any(|q| q.name == name) {
            return Err(ParseError {
                line,
                col,
                msg: format!("duplicate query name `{}`", name),
            });
        }
        self.queries.push(Query {
            name,
            entailment: Entailment { ante, cons },
        });
        Ok(())
    }

    /// A case-shaped assertion: optional `exists` prefix, then either a
    /// spatial part with an optional `& pure` tail, or a pure formula.
    fn heap(&mut self, scope: &mut Scope) -> Result<SymbolicHeap, ParseError> {
        let mut exists = Vec::new();
        if self.peek() == &Tok::Exists {
            self.advance();
            scope.push();
            while let Tok::Ident(n) = self.peek().clone() {
                self.advance();
                let v = self.vars.fresh(&n);
                scope.bind(v.clone());
                exists.push(v);
            }
            if exists.is_empty() {
                return self.err("expected at least one bound variable after `exists`");
            }
            self.expect(Tok::Dot)?;
        }
        let looks_spatial = match self.peek() {
            Tok::Emp => true,
            Tok::Ident(_) => matches!(self.peek2(), Tok::Arrow | Tok::LParen),
            _ => false,
        };
        let heap = if looks_spatial {
            let mut atoms = vec![self.satom(scope)?];
            while self.eat(&Tok::Star) {
                atoms.push(self.satom(scope)?);
            }
            let pure = if self.eat(&Tok::Amp) {
                self.pure(scope)?
            } else {
                Pure::True
            };
            SymbolicHeap::new(exists.clone(), atoms, pure)
        } else {
            let pure = self.pure(scope)?;
            SymbolicHeap::new(exists.clone(), Vec::new(), pure)
        };
        if !exists.is_empty() {
            scope.pop();
        }
        Ok(heap)
    }

    fn satom(&mut self, scope: &mut Scope) -> Result<SpatialAtom, ParseError> {
        if self.eat(&Tok::Emp) {
            return Ok(SpatialAtom::Emp);
        }
        let (line, col) = self.here();
        let name = self.ident("a spatial atom")?;
        if self.eat(&Tok::Arrow) {
            let root = scope.resolve(&name, &mut self.vars).ok_or(ParseError {
                line,
                col,
                msg: format!("unbound variable `{}`", name),
            })?;
            let (sline, scol) = self.here();
            let sort_name = self.ident("a sort name")?;
            self.expect(Tok::LBrace)?;
            let raw = self.args(scope, &Tok::RBrace)?;
            self.expect(Tok::RBrace)?;
            let sort = self
                .sorts
                .iter()
                .find(|s| s.name == sort_name)
                .cloned()
                .ok_or(ParseError {
                    line: sline,
                    col: scol,
                    msg: format!("unknown sort `{}`", sort_name),
                })?;
            if raw.len() != sort.fields.len() {
                return Err(ParseError {
                    line: sline,
                    col: scol,
                    msg: format!(
                        "sort `{}` has {} fields, points-to supplies {}",
                        sort_name,
                        sort.fields.len(),
                        raw.len()
                    ),
                });
            }
            let mut args = Vec::with_capacity(raw.len());
            for (arg, field) in raw.into_iter().zip(&sort.fields) {
                args.push(match field.kind {
                    FieldKind::Addr => match arg {
                        Expr::Addr(_) => arg,
                        Expr::Int(_) => {
                            return Err(ParseError {
                                line: sline,
                                col: scol,
                                msg: format!(
                                    "field `{}` of sort `{}` holds an address, got an integer expression",
                                    field.name, sort_name
                                ),
                            })
                        }
                    },
                    FieldKind::Int => Expr::Int(self.to_int(arg, sline, scol)?),
                });
            }
            Ok(SpatialAtom::PointsTo {
                root,
                sort: sort_name,
                args,
            })
        } else if self.eat(&Tok::LParen) {
            let args = self.args(scope, &Tok::RParen)?;
            self.expect(Tok::RParen)?;
            self.pending_apps
                .push((name.clone(), args.len(), line, col));
            Ok(SpatialAtom::PredApp { pred: name, args })
        } else {
            self.err(format!(
                "expected `->` or `(` after `{}` in a spatial atom",
                name
            ))
        }
    }

    fn args(&mut self, scope: &mut Scope, closer: &Tok) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        if self.peek() == closer {
            return Ok(out);
        }
        loop {
            out.push(self.additive(scope)?);
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn to_int(&self, e: Expr, line: u32, col: u32) -> Result<IntExpr, ParseError> {
        match e {
            Expr::Int(i) => Ok(i),
            Expr::Addr(AddrExpr::Var(v)) => Ok(IntExpr::Var(v)),
            Expr::Addr(AddrExpr::Nil) => Err(ParseError {
                line,
                col,
                msg: "`nil` used in an integer context".into(),
            }),
        }
    }

    fn additive(&mut self, scope: &mut Scope) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        let mut acc = self.term(scope)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => return Ok(acc),
            };
            self.advance();
            let rhs = self.term(scope)?;
            let l = Box::new(self.to_int(acc, line, col)?);
            let r = Box::new(self.to_int(rhs, line, col)?);
            acc = Expr::Int(if op {
                IntExpr::Add(l, r)
            } else {
                IntExpr::Sub(l, r)
            });
        }
    }

    fn term(&mut self, scope: &mut Scope) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::Int(IntExpr::Const(n)))
            }
            Tok::Minus => {
                self.advance();
                let inner = self.term(scope)?;
                Ok(Expr::Int(match self.to_int(inner, line, col)? {
                    // fold negated literals so printing round-trips
                    IntExpr::Const(c) => IntExpr::Const(c.checked_neg().ok_or(ParseError {
                        line,
                        col,
                        msg: "integer literal out of range".into(),
                    })?),
                    other => IntExpr::Neg(Box::new(other)),
                }))
            }
            Tok::Nil => {
                self.advance();
                Ok(Expr::Addr(AddrExpr::Nil))
            }
            Tok::Ident(n) => {
                self.advance();
                let v = scope.resolve(&n, &mut self.vars).ok_or(ParseError {
                    line,
                    col,
                    msg: format!("unbound variable `{}`", n),
                })?;
                Ok(Expr::Addr(AddrExpr::Var(v)))
            }
            Tok::LParen => {
                self.advance();
                let e = self.additive(scope)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => self.err(format!("expected an expression, found {}", other)),
        }
    }

    fn pure(&mut self, scope: &mut Scope) -> Result<Pure, ParseError> {
        self.imp(scope)
    }

    fn imp(&mut self, scope: &mut Scope) -> Result<Pure, ParseError> {
        let lhs = self.disj(scope)?;
        if self.eat(&Tok::Implies) {
            let rhs = self.imp(scope)?;
            Ok(Pure::Imp(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn disj(&mut self, scope: &mut Scope) -> Result<Pure, ParseError> {
        let mut acc = self.conj(scope)?;
        while self.eat(&Tok::Pipe) {
            let rhs = self.conj(scope)?;
            acc = Pure::Or(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn conj(&mut self, scope: &mut Scope) -> Result<Pure, ParseError> {
        let mut acc = self.unary(scope)?;
        while self.eat(&Tok::Amp) {
            let rhs = self.unary(scope)?;
            acc = Pure::And(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn unary(&mut self, scope: &mut Scope) -> Result<Pure, ParseError> {
        match self.peek() {
            Tok::Bang => {
                self.advance();
                Ok(Pure::Not(Box::new(self.unary(scope)?)))
            }
            Tok::True => {
                self.advance();
                Ok(Pure::True)
            }
            Tok::False => {
                self.advance();
                Ok(Pure::False)
            }
            Tok::Forall | Tok::Exists => {
                let forall = self.peek() == &Tok::Forall;
                self.advance();
                scope.push();
                let mut binders = Vec::new();
                while let Tok::Ident(n) = self.peek().clone() {
                    self.advance();
                    let v = self.vars.fresh(&n);
                    scope.bind(v.clone());
                    binders.push(v);
                }
                if binders.is_empty() {
                    return self.err("expected at least one bound variable");
                }
                self.expect(Tok::Dot)?;
                // the binder scopes as far right as possible
                let mut body = self.pure(scope)?;
                scope.pop();
                for v in binders.into_iter().rev() {
                    body = if forall {
                        Pure::Forall(v, Box::new(body))
                    } else {
                        Pure::Exists(v, Box::new(body))
                    };
                }
                Ok(body)
            }
            Tok::LParen => {
                // `( additive ) relop additive` or `( pure )`: try the
                // comparison reading first, backtrack on failure
                let save = self.pos;
                if let Ok(p) = self.comparison(scope) {
                    return Ok(p);
                }
                self.pos = save;
                self.expect(Tok::LParen)?;
                let p = self.pure(scope)?;
                self.expect(Tok::RParen)?;
                Ok(p)
            }
            _ => self.comparison(scope),
        }
    }

    fn comparison(&mut self, scope: &mut Scope) -> Result<Pure, ParseError> {
        let (line, col) = self.here();
        let lhs = self.additive(scope)?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            other => {
                let other = other.clone();
                return self.err(format!("expected a comparison operator, found {}", other));
            }
        };
        self.advance();
        let rhs = self.additive(scope)?;
        // (dis)equality of plain values stays generic; everything else is
        // integer arithmetic
        match (&lhs, &rhs, op) {
            (Expr::Addr(a), Expr::Addr(b), CmpOp::Eq) => Ok(Pure::AddrEq(a.clone(), b.clone())),
            (Expr::Addr(a), Expr::Addr(b), CmpOp::Ne) => Ok(Pure::AddrNe(a.clone(), b.clone())),
            _ => Ok(Pure::IntCmp(
                op,
                self.to_int(lhs, line, col)?,
                self.to_int(rhs, line, col)?,
            )),
        }
    }

    fn finish(mut self) -> Result<Program, ParseError> {
        for (pred, argc, line, col) in &self.pending_apps {
            match self.preds.get(pred) {
                None => {
                    return Err(ParseError {
                        line: *line,
                        col: *col,
                        msg: format!("unknown predicate `{}`", pred),
                    })
                }
                Some(def) if def.arity() != *argc => {
                    return Err(ParseError {
                        line: *line,
                        col: *col,
                        msg: format!(
                            "predicate `{}` expects {} arguments, got {}",
                            pred,
                            def.arity(),
                            argc
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        self.preds.classify_cases();
        Ok(Program {
            sorts: self.sorts,
            preds: self.preds,
            queries: self.queries,
            next_var_id: self.vars.next_id(),
        })
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        vars: VarGen::new(),
        sorts: Vec::new(),
        preds: PredEnv::new(),
        queries: Vec::new(),
        pending_apps: Vec::new(),
    };
    p.program()?;
    p.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIST_PROG: &str = "\
sort node { addr next };
pred ls(x, y) := emp & x = y \\/ exists w. x->node{w} * ls(w, y);
pred tmp(x) := emp \\/ exists u. x->node{u} * tmp(u) \\/ exists u v. x->node{u} * u->node{v} * tmp(v);
name E: checkentail tmp(x) |- exists y. ls(x, y);
";

    #[test]
    fn parses_the_motivating_program() {
        let prog = parse_program(LIST_PROG).unwrap();
        assert_eq!(prog.sorts.len(), 1);
        let ls = prog.preds.get("ls").unwrap();
        assert_eq!(ls.cases.len(), 2);
        assert!(ls.cases[0].base);
        assert!(!ls.cases[1].base);
        assert!(ls.cases[0].body.is_spatially_emp());
        let tmp = prog.preds.get("tmp").unwrap();
        assert_eq!(tmp.cases.len(), 3);
        assert_eq!(prog.queries.len(), 1);
        let q = &prog.queries[0];
        assert_eq!(q.name, "E");
        assert_eq!(q.entailment.cons.exists.len(), 1);
        // x is shared between the two sides
        let fv = crate::ast::entailment_free_vars(&q.entailment);
        assert_eq!(fv.len(), 1);
        assert_eq!(fv.iter().next().unwrap().name, "x");
    }

    #[test]
    fn auto_names_queries_in_order() {
        let text = "\
sort node { addr next };
pred p(x) := x = nil;
checkentail p(x) |- p(x);
checkentail p(x) |- x = nil;
";
        let prog = parse_program(text).unwrap();
        assert_eq!(prog.queries[0].name, "q1");
        assert_eq!(prog.queries[1].name, "q2");
    }

    #[test]
    fn reports_position_and_expectation() {
        let e = parse_program("sort node { addr next }").unwrap_err();
        assert_eq!((e.line, e.col), (1, 24));
        assert!(e.msg.contains("`;`"), "{}", e.msg);

        let e2 = parse_program("pred p(x) := y = nil;").unwrap_err();
        assert!(e2.msg.contains("unbound variable `y`"), "{}", e2.msg);
    }

    #[test]
    fn arity_mismatches_are_errors() {
        let text = "sort node { addr next };\npred p(x) := exists y z. x->node{y, z};";
        let e = parse_program(text).unwrap_err();
        assert!(e.msg.contains("1 fields"), "{}", e.msg);
        assert_eq!(e.line, 2);

        let e2 = parse_program(
            "sort node { addr next };\npred ls(x, y) := x = y;\ncheckentail ls(a) |- ls(a, a);",
        )
        .unwrap_err();
        assert!(e2.msg.contains("expects 2 arguments"), "{}", e2.msg);
    }

    #[test]
    fn forward_references_between_predicates_work() {
        let text = "\
sort node { addr next };
pred even(x, y) := emp & x = y \\/ exists w. x->node{w} * odd(w, y);
pred odd(x, y) := exists w. x->node{w} * even(w, y);
";
        let prog = parse_program(text).unwrap();
        let even = prog.preds.get("even").unwrap();
        // the odd-step is inductive: even and odd are mutually recursive
        assert_eq!(
            even.cases.iter().map(|c| c.base).collect::<Vec<_>>(),
            vec![true, false]
        );
        assert!(!prog.preds.get("odd").unwrap().cases[0].base);
    }

    #[test]
    fn pure_precedence_and_backtracking() {
        let text = "checkentail (x = y | y = nil) & !x != nil => true |- x = x;";
        let prog = parse_program(text).unwrap();
        let p = &prog.queries[0].entailment.ante.pure;
        // `=>` binds weakest, `&` tighter than `|` on its left operand
        let Pure::Imp(l, r) = p else {
            panic!("expected =>, got {:?}", p)
        };
        assert_eq!(**r, Pure::True);
        let Pure::And(or_part, neg) = &**l else {
            panic!("expected &")
        };
        assert!(matches!(&**or_part, Pure::Or(..)));
        assert!(matches!(&**neg, Pure::Not(..)));

        // parenthesized arithmetic backtracks into comparisons
        let arith = "checkentail (x + 1) - 2 >= x - 1 |- true;";
        let prog2 = parse_program(arith).unwrap();
        assert!(matches!(
            prog2.queries[0].entailment.ante.pure,
            Pure::IntCmp(CmpOp::Ge, ..)
        ));
    }

    #[test]
    fn negative_literals_fold() {
        let prog = parse_program("checkentail x = -3 + 2 |- true;").unwrap();
        let Pure::IntCmp(CmpOp::Eq, _, rhs) = &prog.queries[0].entailment.ante.pure else {
            panic!()
        };
        assert_eq!(
            rhs,
            &IntExpr::Add(Box::new(IntExpr::Const(-3)), Box::new(IntExpr::Const(2)))
        );
    }

    #[test]
    fn query_scope_is_per_query_and_binders_shadow() {
        let text = "\
checkentail exists x. x = nil |- true;
checkentail x != nil |- exists x. x != nil;
";
        let prog = parse_program(text).unwrap();
        let q2 = &prog.queries[1].entailment;
        let free = crate::ast::free_vars(&q2.ante);
        assert_eq!(free.len(), 1);
        let bound = &q2.cons.exists[0];
        assert_ne!(free.iter().next().unwrap(), bound);
    }
}
