//! Small arithmetic expression language for the data functions f, t0, u0.
//!
//! Grammar (standard precedence, left associative):
//!
//! ```text
//!     expr    := term (('+' | '-') term)*
//!     term    := factor (('*' | '/') factor)*
//!     factor  := '-' factor | primary
//!     primary := NUMBER | 'x' | 'y' | 'pi' | ident '(' expr (',' expr)? ')'
//!              | '(' expr ')'
//! ```
//!
//! with the one-argument functions sin, cos, exp, log, abs, sqrt and the
//! two-argument min, max. Errors carry byte offsets into the source.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    X,
    Y,
    Pi,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Evaluate at a point. Total on finite inputs except for the usual
    /// log/sqrt domain behaviour (NaN), which callers screen for.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Number(c) => *c,
            Expr::X => x,
            Expr::Y => y,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Call(f, args) => {
                let a = args[0].eval(x, y);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                    Func::Min => a.min(args[1].eval(x, y)),
                    Func::Max => a.max(args[1].eval(x, y)),
                }
            }
        }
    }

    /// Print in parseable form (parenthesized to make the round trip exact).
    pub fn to_text(&self) -> String {
        match self {
            Expr::Number(c) => {
                if *c < 0.0 {
                    format!("(-{})", -c)
                } else {
                    format!("{c}")
                }
            }
            Expr::X => "x".into(),
            Expr::Y => "y".into(),
            Expr::Pi => "pi".into(),
            Expr::Neg(e) => format!("(-{})", e.to_text()),
            Expr::Add(a, b) => format!("({} + {})", a.to_text(), b.to_text()),
            Expr::Sub(a, b) => format!("({} - {})", a.to_text(), b.to_text()),
            Expr::Mul(a, b) => format!("({} * {})", a.to_text(), b.to_text()),
            Expr::Div(a, b) => format!("({} / {})", a.to_text(), b.to_text()),
            Expr::Call(f, args) => {
                let args: Vec<String> = args.iter().map(Expr::to_text).collect();
                format!("{}({})", f.name(), args.join(", "))
            }
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let e = p.expr(0)?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::ExprParse {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self, depth: usize) -> Result<Expr> {
        if depth > 200 {
            return Err(self.err("expression nested too deeply"));
        }
        let mut node = self.term(depth)?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term(depth)?;
                    node = Expr::Add(Box::new(node), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term(depth)?;
                    node = Expr::Sub(Box::new(node), Box::new(rhs));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr> {
        let mut node = self.factor(depth)?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor(depth)?;
                    node = Expr::Mul(Box::new(node), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor(depth)?;
                    node = Expr::Div(Box::new(node), Box::new(rhs));
                }
                _ => return Ok(node),
            }
        }
    }

    fn factor(&mut self, depth: usize) -> Result<Expr> {
        if depth > 200 {
            return Err(self.err("expression nested too deeply"));
        }
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary(depth)
    }

    fn primary(&mut self, depth: usize) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr(depth + 1)?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.err("unbalanced parentheses: expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(depth),
            Some(c) => Err(self.err(&format!("unexpected token `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Number(v)),
            _ => Err(Error::ExprParse {
                offset: start,
                msg: format!("invalid number `{text}`"),
            }),
        }
    }

    fn identifier(&mut self, depth: usize) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "x" => return Ok(Expr::X),
            "y" => return Ok(Expr::Y),
            "pi" => return Ok(Expr::Pi),
            _ => {}
        }
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => {
                return Err(Error::ExprParse {
                    offset: start,
                    msg: format!("unknown identifier `{name}`"),
                })
            }
        };
        self.skip_ws();
        if self.peek() != Some(b'(') {
            return Err(self.err(&format!("expected `(` after `{name}`")));
        }
        self.pos += 1;
        let mut args = vec![self.expr(depth + 1)?];
        self.skip_ws();
        if func.arity() == 2 {
            if self.peek() != Some(b',') {
                return Err(self.err(&format!("`{name}` takes two arguments")));
            }
            self.pos += 1;
            args.push(self.expr(depth + 1)?);
            self.skip_ws();
        }
        if self.peek() != Some(b')') {
            return Err(self.err("unbalanced parentheses: expected `)`"));
        }
        self.pos += 1;
        Ok(Expr::Call(func, args))
    }
}
