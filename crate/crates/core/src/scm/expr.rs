//! Restricted integer/boolean expression language for hand-written mechanisms.
//!
//! Grammar (lowest to highest precedence): `c ? a : b`, `||`, `&&`, `|`, `^`,
//! `&`, `== !=`, `< <= > >=`, `+ -`, `* / %`, unary `! -`. Operands are integer
//! literals, `true`/`false`, identifiers (`[A-Za-z_][A-Za-z0-9_]*` or any text
//! inside backticks) and the calls `min(a, b)`, `max(a, b)`, `abs(a)`.
//! Booleans are the integers 0 and 1; any non-zero value is truthy.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(i64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    BitOr,
    Xor,
    BitAnd,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprError(pub String);

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Question,
    Colon,
}

const OPS: [&str; 18] = [
    "||", "&&", "==", "!=", "<=", ">=", "|", "^", "&", "<", ">", "+", "-", "*", "/", "%", "!", "=",
];

fn tokenize(src: &str) -> Result<Vec<Tok>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse::<i64>()
                .map_err(|_| ExprError(format!("integer literal `{text}` out of range")))?;
            out.push(Tok::Int(n));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c == '`' {
            let start = i + 1;
            i = start;
            while i < chars.len() && chars[i] != '`' {
                i += 1;
            }
            if i == chars.len() {
                return Err(ExprError("unterminated backtick identifier".into()));
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
            i += 1;
        } else {
            match c {
                '(' => out.push(Tok::LParen),
                ')' => out.push(Tok::RParen),
                ',' => out.push(Tok::Comma),
                '?' => out.push(Tok::Question),
                ':' => out.push(Tok::Colon),
                _ => {
                    let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                    let op = OPS
                        .iter()
                        .find(|op| rest.starts_with(**op))
                        .ok_or_else(|| ExprError(format!("unexpected character `{c}`")))?;
                    if *op == "=" {
                        return Err(ExprError("`=` is not an operator; use `==`".into()));
                    }
                    out.push(Tok::Op(op));
                    i += op.len();
                    continue;
                }
            }
            i += 1;
        }
    }
    Ok(out)
}

fn binary_op(tok: &Tok) -> Option<(BinaryOp, u8)> {
    let Tok::Op(op) = tok else { return None };
    Some(match *op {
        "||" => (BinaryOp::Or, 2),
        "&&" => (BinaryOp::And, 3),
        "|" => (BinaryOp::BitOr, 4),
        "^" => (BinaryOp::Xor, 5),
        "&" => (BinaryOp::BitAnd, 6),
        "==" => (BinaryOp::Eq, 7),
        "!=" => (BinaryOp::Ne, 7),
        "<" => (BinaryOp::Lt, 8),
        "<=" => (BinaryOp::Le, 8),
        ">" => (BinaryOp::Gt, 8),
        ">=" => (BinaryOp::Ge, 8),
        "+" => (BinaryOp::Add, 9),
        "-" => (BinaryOp::Sub, 9),
        "*" => (BinaryOp::Mul, 10),
        "/" => (BinaryOp::Div, 10),
        "%" => (BinaryOp::Rem, 10),
        _ => return None,
    })
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ExprError> {
        match self.next() {
            Some(ref t) if t == want => Ok(()),
            other => Err(ExprError(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            if min_bp <= 1 && self.peek() == Some(&Tok::Question) {
                self.next();
                let then = self.expr(1)?;
                self.expect(&Tok::Colon)?;
                let otherwise = self.expr(1)?;
                lhs = Expr::Cond(Box::new(lhs), Box::new(then), Box::new(otherwise));
                continue;
            }
            let Some((op, bp)) = self.peek().and_then(binary_op) else { break };
            if bp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr(bp + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(Expr::Lit(n)),
            Some(Tok::Op("!")) => Ok(Expr::Unary(UnaryOp::Not, Box::new(self.expr(11)?))),
            Some(Tok::Op("-")) => Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.expr(11)?))),
            Some(Tok::LParen) => {
                let e = self.expr(0)?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    let func = match name.as_str() {
                        "min" => Func::Min,
                        "max" => Func::Max,
                        "abs" => Func::Abs,
                        _ => return Err(ExprError(format!("unknown function `{name}`"))),
                    };
                    self.next();
                    let mut args = vec![self.expr(0)?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.next();
                        args.push(self.expr(0)?);
                    }
                    self.expect(&Tok::RParen)?;
                    let arity = if func == Func::Abs { 1 } else { 2 };
                    if args.len() != arity {
                        return Err(ExprError(format!("`{name}` takes {arity} argument(s)")));
                    }
                    return Ok(Expr::Call(func, args));
                }
                Ok(match name.as_str() {
                    "true" => Expr::Lit(1),
                    "false" => Expr::Lit(0),
                    _ => Expr::Var(name),
                })
            }
            other => Err(ExprError(format!("unexpected token {other:?}"))),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err(ExprError("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0 };
        let e = p.expr(0)?;
        if p.pos != p.toks.len() {
            return Err(ExprError(format!("trailing input after position {}", p.pos)));
        }
        Ok(e)
    }

    /// Identifiers referenced by the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Unary(_, e) => e.collect(out),
            Expr::Binary(_, a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Expr::Cond(c, a, b) => {
                c.collect(out);
                a.collect(out);
                b.collect(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect(out)),
        }
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Result<i64, ExprError> {
        let overflow = || ExprError("integer overflow".into());
        Ok(match self {
            Expr::Lit(n) => *n,
            Expr::Var(v) => lookup(v).ok_or_else(|| ExprError(format!("unbound variable `{v}`")))?,
            Expr::Unary(UnaryOp::Not, e) => i64::from(e.eval(lookup)? == 0),
            Expr::Unary(UnaryOp::Neg, e) => e.eval(lookup)?.checked_neg().ok_or_else(overflow)?,
            Expr::Cond(c, a, b) => {
                if c.eval(lookup)? != 0 {
                    a.eval(lookup)?
                } else {
                    b.eval(lookup)?
                }
            }
            Expr::Call(func, args) => {
                let first = args[0].eval(lookup)?;
                match func {
                    Func::Abs => first.checked_abs().ok_or_else(overflow)?,
                    Func::Min => first.min(args[1].eval(lookup)?),
                    Func::Max => first.max(args[1].eval(lookup)?),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(lookup)?;
                // short-circuit forms
                match op {
                    BinaryOp::And if x == 0 => return Ok(0),
                    BinaryOp::Or if x != 0 => return Ok(1),
                    _ => {}
                }
                let y = b.eval(lookup)?;
                match op {
                    BinaryOp::Or | BinaryOp::And => i64::from(y != 0),
                    BinaryOp::BitOr => x | y,
                    BinaryOp::Xor => x ^ y,
                    BinaryOp::BitAnd => x & y,
                    BinaryOp::Eq => i64::from(x == y),
                    BinaryOp::Ne => i64::from(x != y),
                    BinaryOp::Lt => i64::from(x < y),
                    BinaryOp::Le => i64::from(x <= y),
                    BinaryOp::Gt => i64::from(x > y),
                    BinaryOp::Ge => i64::from(x >= y),
                    BinaryOp::Add => x.checked_add(y).ok_or_else(overflow)?,
                    BinaryOp::Sub => x.checked_sub(y).ok_or_else(overflow)?,
                    BinaryOp::Mul => x.checked_mul(y).ok_or_else(overflow)?,
                    BinaryOp::Div => {
                        if y == 0 {
                            return Err(ExprError("division by zero".into()));
                        }
                        x.checked_div(y).ok_or_else(overflow)?
                    }
                    BinaryOp::Rem => {
                        if y == 0 {
                            return Err(ExprError("division by zero".into()));
                        }
                        x.checked_rem(y).ok_or_else(overflow)?
                    }
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, vars: &[(&str, i64)]) -> Result<i64, ExprError> {
        let e = Expr::parse(src)?;
        e.eval(&|name| vars.iter().find(|(k, _)| *k == name).map(|(_, v)| *v))
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[]).unwrap(), 7);
        assert_eq!(eval("(1 + 2) * 3", &[]).unwrap(), 9);
        assert_eq!(eval("10 - 4 - 3", &[]).unwrap(), 3);
        // == binds tighter than ^, as in C
        assert_eq!(eval("1 ^ 1 == 0", &[]).unwrap(), 1 ^ i64::from(1 == 0));
        assert_eq!(eval("-2 * -3", &[]).unwrap(), 6);
        assert_eq!(eval("!0 && 2 > 1", &[]).unwrap(), 1);
        assert_eq!(eval("x > 0 ? x : -x", &[("x", -5)]).unwrap(), 5);
        assert_eq!(eval("a ? 1 : b ? 2 : 3", &[("a", 0), ("b", 0)]).unwrap(), 3);
    }

    #[test]
    fn xor_mechanism_and_functions() {
        for x in 0..2 {
            for z in 0..2 {
                assert_eq!(eval("x ^ z", &[("x", x), ("z", z)]).unwrap(), x ^ z);
            }
        }
        assert_eq!(eval("min(a, max(b, 3)) + abs(-2)", &[("a", 10), ("b", 1)]).unwrap(), 5);
        assert_eq!(eval("`crude-oil` + 1", &[("crude-oil", 1)]).unwrap(), 2);
    }

    #[test]
    fn errors_are_reported() {
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("x = 1").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(eval("1 / 0", &[]).is_err());
        assert!(eval("y", &[]).is_err());
        assert!(eval("9223372036854775807 + 1", &[]).is_err());
    }

    #[test]
    fn variables_are_collected() {
        let e = Expr::parse("a + b * (c ? d : 1)").unwrap();
        assert_eq!(e.variables(), ["a", "b", "c", "d"].map(String::from).into());
    }
}
