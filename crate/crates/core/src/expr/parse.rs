//! Problem-file grammar.
//!
//! ```text
//! vars x y z;
//! objective x*y*z;
//! constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;
//! ```
//!
//! Statements end with `;`, whitespace is insignificant and `#` starts a
//! comment that runs to the end of the line. Exponents must be nonnegative
//! integer literals; `/` is only allowed with a constant divisor, which is how
//! rationals such as `17/22` are written.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use super::{Expression, Node};

/// What went wrong while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownVariable(String),
    NonIntegerExponent(String),
    DivisionByNonConstant,
    DivisionByZero,
    DuplicateVariable(String),
    MissingVars,
    MissingObjective,
    DuplicateObjective,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Syntax(m) => write!(f, "syntax error: {m}"),
            Self::UnknownVariable(v) => write!(f, "unknown variable `{v}`"),
            Self::NonIntegerExponent(t) => write!(f, "exponent must be a nonnegative integer, found `{t}`"),
            Self::DivisionByNonConstant => f.write_str("division by a non-constant expression"),
            Self::DivisionByZero => f.write_str("division by zero"),
            Self::DuplicateVariable(v) => write!(f, "variable `{v}` declared twice"),
            Self::MissingVars => f.write_str("the first statement must be `vars ...;`"),
            Self::MissingObjective => f.write_str("missing `objective` statement"),
            Self::DuplicateObjective => f.write_str("more than one `objective` statement"),
        }
    }
}

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

/// A parsed problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDefinition {
    pub variables: Vec<String>,
    pub objective: Expression,
    pub constraints: Vec<Expression>,
}

/// Parses one polynomial over the given variable names.
pub fn parse_expression(text: &str, variables: &[String]) -> Result<Expression, ParseError> {
    let tokens = tokenize(text, 0).map_err(|e| relocate(text, e))?;
    let mut p = Parser { src: text, tokens: &tokens, pos: 0, variables };
    let node = p.expression()?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(t.offset, ParseErrorKind::Syntax(format!("unexpected `{}`", t.text))));
    }
    node.normalize(variables.len()).map_err(|e| ParseError {
        kind: ParseErrorKind::Syntax(e.to_string()),
        line: 1,
        column: 1,
    })
}

/// Parses a full problem definition.
pub fn parse_problem(text: &str) -> Result<ProblemDefinition, ParseError> {
    let cleaned = strip_comments(text);
    let mut variables: Option<Vec<String>> = None;
    let mut objective = None;
    let mut constraints = Vec::new();
    let mut offset = 0;
    let mut statements: Vec<(usize, &str)> = Vec::new();
    for piece in cleaned.split(';') {
        statements.push((offset, piece));
        offset += piece.len() + 1;
    }
    // Whatever follows the last `;` must be blank.
    let (tail_off, tail) = statements.pop().unwrap_or((0, ""));
    if !tail.trim().is_empty() {
        let lead = tail.len() - tail.trim_start().len();
        return Err(position(text, tail_off + lead, ParseErrorKind::Syntax("missing `;`".into())));
    }
    for (off, stmt) in statements {
        let lead = stmt.len() - stmt.trim_start().len();
        let body = stmt.trim();
        let start = off + lead;
        if body.is_empty() {
            continue;
        }
        let (keyword, rest) = body.split_at(body.find(char::is_whitespace).unwrap_or(body.len()));
        let rest_off = start + keyword.len();
        match keyword {
            "vars" => {
                if variables.is_some() {
                    return Err(position(text, start, ParseErrorKind::Syntax("`vars` declared twice".into())));
                }
                let mut names: Vec<String> = Vec::new();
                let mut cursor = rest_off;
                for word in rest.split_whitespace() {
                    let at = cursor + text[cursor..].find(word).unwrap_or(0);
                    cursor = at + word.len();
                    if !is_identifier(word) {
                        return Err(position(text, at, ParseErrorKind::Syntax(format!("invalid variable name `{word}`"))));
                    }
                    if names.iter().any(|n| n == word) {
                        return Err(position(text, at, ParseErrorKind::DuplicateVariable(word.into())));
                    }
                    names.push(word.to_string());
                }
                if names.is_empty() {
                    return Err(position(text, start, ParseErrorKind::Syntax("`vars` needs at least one name".into())));
                }
                variables = Some(names);
            }
            "objective" | "constraint" => {
                let Some(vars) = variables.as_ref() else {
                    return Err(position(text, start, ParseErrorKind::MissingVars));
                };
                let tokens = tokenize(rest, rest_off).map_err(|e| relocate(text, e))?;
                let mut p = Parser { src: text, tokens: &tokens, pos: 0, variables: vars };
                if tokens.is_empty() {
                    return Err(position(text, start, ParseErrorKind::Syntax(format!("empty `{keyword}`"))));
                }
                let node = p.expression()?;
                if let Some(t) = p.peek() {
                    return Err(p.error_at(t.offset, ParseErrorKind::Syntax(format!("unexpected `{}`", t.text))));
                }
                let expr = node.normalize(vars.len()).expect("parser only emits declared variables");
                if keyword == "objective" {
                    if objective.is_some() {
                        return Err(position(text, start, ParseErrorKind::DuplicateObjective));
                    }
                    objective = Some(expr);
                } else {
                    constraints.push(expr);
                }
            }
            other => {
                let kind = if variables.is_none() {
                    ParseErrorKind::MissingVars
                } else {
                    ParseErrorKind::Syntax(format!("unknown statement `{other}`"))
                };
                return Err(position(text, start, kind));
            }
        }
    }
    let variables = variables.ok_or_else(|| position(text, 0, ParseErrorKind::MissingVars))?;
    let objective = objective.ok_or_else(|| position(text, text.len(), ParseErrorKind::MissingObjective))?;
    Ok(ProblemDefinition { variables, objective, constraints })
}

fn strip_comments(text: &str) -> String {
    // Replace comment characters by spaces so byte offsets stay valid.
    let mut out = String::with_capacity(text.len());
    let mut in_comment = false;
    for ch in text.chars() {
        if ch == '#' {
            in_comment = true;
        } else if ch == '\n' {
            in_comment = false;
        }
        if in_comment {
            out.extend(std::iter::repeat_n(' ', ch.len_utf8()));
        } else {
            out.push(ch);
        }
    }
    out
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn position(text: &str, offset: usize, kind: ParseErrorKind) -> ParseError {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    ParseError { kind, line, column }
}

fn relocate(text: &str, e: RawError) -> ParseError {
    position(text, e.offset, e.kind)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(BigRational),
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    text: String,
    offset: usize,
}

struct RawError {
    offset: usize,
    kind: ParseErrorKind,
}

fn tokenize(text: &str, base: usize) -> Result<Vec<Token>, RawError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let lit = &text[start..i];
            let value = decimal_to_rational(lit).ok_or(RawError {
                offset: base + start,
                kind: ParseErrorKind::Syntax(format!("malformed number `{lit}`")),
            })?;
            out.push(Token { kind: TokenKind::Number(value), text: lit.into(), offset: base + start });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let name = &text[start..i];
            out.push(Token { kind: TokenKind::Ident(name.into()), text: name.into(), offset: base + start });
        } else if "+-*/^()".contains(c) {
            i += 1;
            out.push(Token { kind: TokenKind::Op(c), text: c.to_string(), offset: base + start });
        } else {
            let ch = text[start..].chars().next().unwrap_or(c);
            return Err(RawError {
                offset: base + start,
                kind: ParseErrorKind::Syntax(format!("unexpected character `{ch}`")),
            });
        }
    }
    Ok(out)
}

fn decimal_to_rational(lit: &str) -> Option<BigRational> {
    let (int, frac) = match lit.split_once('.') {
        Some((a, b)) => (a, b),
        None => (lit, ""),
    };
    if frac.contains('.') || (int.is_empty() && frac.is_empty()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: BigInt = digits.parse().ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(numer, denom))
}

struct Parser<'a> {
    src: &'a str,
    tokens: &'a [Token],
    pos: usize,
    variables: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token { kind: TokenKind::Op(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn error_at(&self, offset: usize, kind: ParseErrorKind) -> ParseError {
        position(self.src, offset, kind)
    }

    fn end_offset(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.offset + t.text.len())
    }

    fn expression(&mut self) -> Result<Node, ParseError> {
        let mut items = vec![self.term()?];
        while let Some(op) = self.peek_op().filter(|c| *c == '+' || *c == '-') {
            self.pos += 1;
            let t = self.term()?;
            items.push(if op == '-' { Node::Negation(Box::new(t)) } else { t });
        }
        Ok(if items.len() == 1 { items.pop().expect("one item") } else { Node::Sum(items) })
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut factors = vec![self.unary()?];
        while let Some(op) = self.peek_op().filter(|c| *c == '*' || *c == '/') {
            let op_offset = self.peek().map_or(0, |t| t.offset);
            self.pos += 1;
            let f = self.unary()?;
            if op == '*' {
                factors.push(f);
                continue;
            }
            // Division: the divisor must reduce to a nonzero constant.
            let divisor = f.normalize(self.variables.len()).expect("declared variables only");
            if !divisor.is_constant() {
                return Err(self.error_at(op_offset, ParseErrorKind::DivisionByNonConstant));
            }
            let c = divisor.coefficient(&vec![0; self.variables.len()]);
            if c.is_zero() {
                return Err(self.error_at(op_offset, ParseErrorKind::DivisionByZero));
            }
            factors.push(Node::Constant(BigRational::one() / c));
        }
        Ok(if factors.len() == 1 { factors.pop().expect("one factor") } else { Node::Product(factors) })
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Negation(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek_op() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        let exponent = self.exponent()?;
        Ok(Node::Power(Box::new(base), exponent))
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_at(self.end_offset(), ParseErrorKind::Syntax("missing exponent".into())));
        };
        let bad = |p: &Self, text: String| p.error_at(tok.offset, ParseErrorKind::NonIntegerExponent(text));
        match &tok.kind {
            TokenKind::Number(v) => {
                self.pos += 1;
                if !v.is_integer() {
                    return Err(bad(self, tok.text.clone()));
                }
                v.to_integer().to_u32().ok_or_else(|| bad(self, tok.text.clone()))
            }
            TokenKind::Op('(') => {
                self.pos += 1;
                let e = self.exponent()?;
                self.expect(')')?;
                Ok(e)
            }
            TokenKind::Op('-') => {
                let mut text = String::from("-");
                if let Some(next) = self.tokens.get(self.pos + 1) {
                    text.push_str(&next.text);
                }
                Err(bad(self, text))
            }
            _ => Err(bad(self, tok.text.clone())),
        }
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_at(self.end_offset(), ParseErrorKind::Syntax("unexpected end of expression".into())));
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Node::Constant(v)),
            TokenKind::Ident(name) => self
                .variables
                .iter()
                .position(|v| *v == name)
                .map(Node::Variable)
                .ok_or_else(|| self.error_at(tok.offset, ParseErrorKind::UnknownVariable(name))),
            TokenKind::Op('(') => {
                let inner = self.expression()?;
                self.expect(')')?;
                Ok(inner)
            }
            TokenKind::Op(c) => Err(self.error_at(tok.offset, ParseErrorKind::Syntax(format!("unexpected `{c}`")))),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            let offset = self.peek().map_or(self.end_offset(), |t| t.offset);
            Err(self.error_at(offset, ParseErrorKind::Syntax(format!("expected `{c}`"))))
        }
    }
}
