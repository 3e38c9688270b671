//! Closed-form scalar coefficient functions.
//!
//! Expressions are small trees over chart coordinates `x1..xn`. They can be
//! parsed from text, printed back in the same grammar, differentiated
//! symbolically, and evaluated either as plain numbers or in truncated
//! Taylor arithmetic (see [`crate::jet`]).

use crate::error::{Error, Result};
use crate::jet::{cos_taylor, exp_taylor, pow_taylor, sin_taylor, Jet, JetSpace};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Sum(Vec<ScalarExpr>),
    Product(Vec<ScalarExpr>),
    /// Base raised to a constant real exponent.
    Pow(Box<ScalarExpr>, f64),
    Sin(Box<ScalarExpr>),
    Cos(Box<ScalarExpr>),
    Exp(Box<ScalarExpr>),
}

use ScalarExpr::*;

impl ScalarExpr {
    pub fn c(v: f64) -> Self {
        Const(v)
    }

    pub fn var(i: usize) -> Self {
        Var(i)
    }

    pub fn zero() -> Self {
        Const(0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Const(v) if *v == 0.0)
    }

    pub fn sum(terms: Vec<ScalarExpr>) -> Self {
        let mut flat = Vec::new();
        let mut constant = 0.0;
        for t in terms {
            match t {
                Const(v) => constant += v,
                Sum(inner) => {
                    for s in inner {
                        match s {
                            Const(v) => constant += v,
                            other => flat.push(other),
                        }
                    }
                }
                other => flat.push(other),
            }
        }
        if constant != 0.0 {
            flat.push(Const(constant));
        }
        match flat.len() {
            0 => Const(0.0),
            1 => flat.pop().unwrap(),
            _ => Sum(flat),
        }
    }

    pub fn product(factors: Vec<ScalarExpr>) -> Self {
        let mut flat = Vec::new();
        let mut constant = 1.0;
        for f in factors {
            match f {
                Const(v) => constant *= v,
                Product(inner) => {
                    for s in inner {
                        match s {
                            Const(v) => constant *= v,
                            other => flat.push(other),
                        }
                    }
                }
                other => flat.push(other),
            }
        }
        if constant == 0.0 {
            return Const(0.0);
        }
        if flat.is_empty() {
            return Const(constant);
        }
        if constant != 1.0 {
            flat.insert(0, Const(constant));
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Product(flat)
        }
    }

    pub fn pow(base: ScalarExpr, e: f64) -> Self {
        if e == 0.0 {
            return Const(1.0);
        }
        if e == 1.0 {
            return base;
        }
        match base {
            Const(v) => Const(v.powf(e)),
            Pow(inner, e0) if e0.fract() == 0.0 && e.fract() == 0.0 => Pow(inner, e0 * e),
            other => Pow(Box::new(other), e),
        }
    }

    pub fn sin(a: ScalarExpr) -> Self {
        match a {
            Const(v) => Const(v.sin()),
            other => Sin(Box::new(other)),
        }
    }

    pub fn cos(a: ScalarExpr) -> Self {
        match a {
            Const(v) => Const(v.cos()),
            other => Cos(Box::new(other)),
        }
    }

    pub fn exp(a: ScalarExpr) -> Self {
        match a {
            Const(v) => Const(v.exp()),
            other => Exp(Box::new(other)),
        }
    }

    pub fn neg(a: ScalarExpr) -> Self {
        Self::product(vec![Const(-1.0), a])
    }

    pub fn sub(a: ScalarExpr, b: ScalarExpr) -> Self {
        Self::sum(vec![a, Self::neg(b)])
    }

    pub fn div(a: ScalarExpr, b: ScalarExpr) -> Self {
        Self::product(vec![a, Self::pow(b, -1.0)])
    }

    /// Largest coordinate index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Const(_) => 0,
            Var(i) => i + 1,
            Sum(v) | Product(v) => v.iter().map(|e| e.arity()).max().unwrap_or(0),
            Pow(b, _) => b.arity(),
            Sin(a) | Cos(a) | Exp(a) => a.arity(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Const(v) => *v,
            Var(i) => x[*i],
            Sum(v) => v.iter().map(|e| e.eval(x)).sum(),
            Product(v) => v.iter().map(|e| e.eval(x)).product(),
            Pow(b, e) => {
                let base = b.eval(x);
                if e.fract() == 0.0 && e.abs() < 64.0 {
                    base.powi(*e as i32)
                } else {
                    base.powf(*e)
                }
            }
            Sin(a) => a.eval(x).sin(),
            Cos(a) => a.eval(x).cos(),
            Exp(a) => a.eval(x).exp(),
        }
    }

    /// Evaluates the expression in jet arithmetic around `x0`.
    pub fn eval_jet(&self, sp: &JetSpace, x0: &[f64]) -> Jet {
        match self {
            Const(v) => sp.constant(*v),
            Var(i) => sp.variable(*i, x0[*i]),
            Sum(v) => {
                let mut acc = sp.zero();
                for e in v {
                    sp.add_assign(&mut acc, &e.eval_jet(sp, x0));
                }
                acc
            }
            Product(v) => {
                let mut acc = sp.constant(1.0);
                for e in v {
                    acc = sp.mul(&acc, &e.eval_jet(sp, x0));
                }
                acc
            }
            Pow(b, e) => {
                let base = b.eval_jet(sp, x0);
                if e.fract() == 0.0 && *e > 0.0 {
                    let mut acc = sp.constant(1.0);
                    for _ in 0..(*e as usize) {
                        acc = sp.mul(&acc, &base);
                    }
                    acc
                } else {
                    sp.compose(&base, &pow_taylor(base[0], *e, sp.order()))
                }
            }
            Sin(a) => {
                let j = a.eval_jet(sp, x0);
                sp.compose(&j, &sin_taylor(j[0], sp.order()))
            }
            Cos(a) => {
                let j = a.eval_jet(sp, x0);
                sp.compose(&j, &cos_taylor(j[0], sp.order()))
            }
            Exp(a) => {
                let j = a.eval_jet(sp, x0);
                sp.compose(&j, &exp_taylor(j[0], sp.order()))
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `i`.
    pub fn derivative(&self, i: usize) -> ScalarExpr {
        match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Sum(v) => Self::sum(v.iter().map(|e| e.derivative(i)).collect()),
            Product(v) => {
                let mut terms = Vec::new();
                for k in 0..v.len() {
                    let dk = v[k].derivative(i);
                    if dk.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<ScalarExpr> = v.clone();
                    factors[k] = dk;
                    terms.push(Self::product(factors));
                }
                Self::sum(terms)
            }
            Pow(b, e) => {
                let db = b.derivative(i);
                if db.is_zero() {
                    return Const(0.0);
                }
                Self::product(vec![Const(*e), Self::pow((**b).clone(), e - 1.0), db])
            }
            Sin(a) => {
                let da = a.derivative(i);
                Self::product(vec![Self::cos((**a).clone()), da])
            }
            Cos(a) => {
                let da = a.derivative(i);
                Self::product(vec![Const(-1.0), Self::sin((**a).clone()), da])
            }
            Exp(a) => {
                let da = a.derivative(i);
                Self::product(vec![self.clone(), da])
            }
        }
    }

    /// Parses the text grammar: decimal literals, `x1..xn`, `+ - * / ^`,
    /// `sin`, `cos`, `exp`, parentheses. `dim` bounds the coordinate names.
    pub fn parse(src: &str, dim: usize) -> Result<ScalarExpr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            dim,
            src,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }
}

fn fmt_const(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v < 0.0 {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{}", v)
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(v) => fmt_const(*v, f),
            Var(i) => write!(f, "x{}", i + 1),
            Sum(v) => {
                write!(f, "(")?;
                for (k, e) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{}", e)?;
                }
                write!(f, ")")
            }
            Product(v) => {
                for (k, e) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{}", e)?;
                }
                Ok(())
            }
            Pow(b, e) => {
                write!(f, "(")?;
                write!(f, "{}", b)?;
                write!(f, ")^")?;
                fmt_const(*e, f)
            }
            Sin(a) => write!(f, "sin({})", a),
            Cos(a) => write!(f, "cos({})", a),
            Exp(a) => write!(f, "exp({})", a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // optional exponent, only when followed by digits
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Parse(format!("bad number literal '{text}' in '{src}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '\u{2212}' {
            out.push(Tok::Op('-'));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character '{c}' in '{src}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    dim: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at token {} in '{}'", self.pos, self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op)) = self.peek().cloned() {
            if op != '+' && op != '-' {
                break;
            }
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                ScalarExpr::sum(vec![lhs, rhs])
            } else {
                ScalarExpr::sub(lhs, rhs)
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op)) = self.peek().cloned() {
            if op != '*' && op != '/' {
                break;
            }
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                ScalarExpr::product(vec![lhs, rhs])
            } else {
                ScalarExpr::div(lhs, rhs)
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ScalarExpr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(ScalarExpr::neg(self.unary()?))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<ScalarExpr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            let e = exponent
                .as_const()
                .ok_or_else(|| self.err("exponent must be a constant"))?;
            return Ok(ScalarExpr::pow(base, e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ScalarExpr> {
        let tok = self.peek().cloned().ok_or_else(|| self.err("unexpected end"))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "sin" | "cos" | "exp" => {
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(self.err("expected '(' after function name"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(&Tok::RParen) {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    Ok(match name.as_str() {
                        "sin" => ScalarExpr::sin(arg),
                        "cos" => ScalarExpr::cos(arg),
                        _ => ScalarExpr::exp(arg),
                    })
                }
                _ => {
                    let idx = name
                        .strip_prefix('x')
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&k| k >= 1 && k <= self.dim)
                        .ok_or_else(|| self.err(&format!("unknown identifier '{name}'")))?;
                    Ok(Var(idx - 1))
                }
            },
            _ => Err(self.err("unexpected token")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ScalarExpr {
        ScalarExpr::parse(s, 3).unwrap()
    }

    #[test]
    fn parses_precedence() {
        assert_eq!(p("1 + 2*3").eval(&[0.0; 3]), 7.0);
        assert_eq!(p("-2^2").eval(&[0.0; 3]), -4.0);
        assert_eq!(p("2^3^2").eval(&[0.0; 3]), 512.0);
        assert_eq!(p("(1+2)*3").eval(&[0.0; 3]), 9.0);
        assert!((p("x1/x2 - x3").eval(&[1.0, 4.0, 0.5]) + 0.25).abs() < 1e-15);
        assert!((p("sin(x1)^2 + cos(x1)^2").eval(&[0.3, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((p("exp(0)").eval(&[0.0; 3]) - 1.0).abs() < 1e-15);
        assert_eq!(p("1.5e2").eval(&[0.0; 3]), 150.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScalarExpr::parse("x4", 3).is_err());
        assert!(ScalarExpr::parse("x1^x2", 3).is_err());
        assert!(ScalarExpr::parse("(x1", 3).is_err());
        assert!(ScalarExpr::parse("log(x1)", 3).is_err());
        assert!(ScalarExpr::parse("x1 $ 2", 3).is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["x1 - (x2/2)", "sin(x1*x2)^3 - exp(-x3)", "-0.125*x1^2 + 3", "cos(x1)/x2"] {
            let e = p(s);
            let back = ScalarExpr::parse(&e.to_string(), 3).unwrap();
            let x = [0.3, 1.7, -0.4];
            assert!((e.eval(&x) - back.eval(&x)).abs() < 1e-14, "{s} -> {e}");
        }
    }

    #[test]
    fn symbolic_derivative_matches_jet() {
        let e = p("sin(x1*x2) * exp(x3) / (2 + x1^2)");
        let x0 = [0.4, -1.1, 0.25];
        let sp = JetSpace::new(3, 4);
        let jet = e.eval_jet(&sp, &x0);
        let d = e.derivative(0).derivative(1).derivative(1).derivative(2);
        let want = sp.partial(&jet, &[1, 2, 1]);
        assert!((d.eval(&x0) - want).abs() < 1e-11, "{} vs {}", d.eval(&x0), want);
    }
}
