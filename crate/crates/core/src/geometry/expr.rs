//! Trigonometric polynomials `c₀ + Σ cⱼ cos(kⱼ·x) + Σ sⱼ sin(kⱼ·x)` with integer
//! wave vectors, used to describe test metrics.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr  := sign? term (sign term)*
//! term  := number ('*' trig)? | trig
//! trig  := ('cos' | 'sin') '(' wave ')'
//! wave  := sign? wterm (sign wterm)*
//! wterm := (int '*')? 'x' digit
//! ```
//!
//! Axes are written `x1 … x9`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Const,
    Cos(Vec<i64>),
    Sin(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    coef: f64,
    kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    terms: Vec<Term>,
    source: String,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self {
            terms: Vec::new(),
            source: "0".into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![Term {
                coef: c,
                kind: Kind::Const,
            }],
            source: format!("{c}"),
        }
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            chars: src.chars().filter(|c| !c.is_whitespace()).collect(),
            pos: 0,
        };
        let terms = p.expr()?;
        if p.pos != p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self {
            terms,
            source: src.trim().to_string(),
        })
    }

    /// Highest axis referenced (1-based), or 0 for constants.
    pub fn max_axis(&self) -> usize {
        self.terms
            .iter()
            .filter_map(|t| match &t.kind {
                Kind::Cos(k) | Kind::Sin(k) => k.iter().rposition(|&c| c != 0).map(|i| i + 1),
                Kind::Const => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest |k|∞ over the terms.
    pub fn max_wave(&self) -> i64 {
        self.terms
            .iter()
            .filter_map(|t| match &t.kind {
                Kind::Cos(k) | Kind::Sin(k) => k.iter().map(|c| c.abs()).max(),
                Kind::Const => None,
            })
            .max()
            .unwrap_or(0)
    }

    fn phase(k: &[i64], x: &[f64]) -> f64 {
        k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum()
    }

    fn wave(k: &[i64], i: usize) -> f64 {
        k.get(i).copied().unwrap_or(0) as f64
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| match &t.kind {
                Kind::Const => t.coef,
                Kind::Cos(k) => t.coef * Self::phase(k, x).cos(),
                Kind::Sin(k) => t.coef * Self::phase(k, x).sin(),
            })
            .sum()
    }

    /// Partial derivative along axis `i` (0-based).
    pub fn deriv(&self, x: &[f64], i: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| match &t.kind {
                Kind::Const => 0.0,
                Kind::Cos(k) => -t.coef * Self::wave(k, i) * Self::phase(k, x).sin(),
                Kind::Sin(k) => t.coef * Self::wave(k, i) * Self::phase(k, x).cos(),
            })
            .sum()
    }

    /// Second partial derivative along axes `i`, `j`.
    pub fn deriv2(&self, x: &[f64], i: usize, j: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| match &t.kind {
                Kind::Const => 0.0,
                Kind::Cos(k) => {
                    -t.coef * Self::wave(k, i) * Self::wave(k, j) * Self::phase(k, x).cos()
                }
                Kind::Sin(k) => {
                    -t.coef * Self::wave(k, i) * Self::wave(k, j) * Self::phase(k, x).sin()
                }
            })
            .sum()
    }

    /// Flat coordinate Laplacian `Σᵢ ∂ᵢ∂ᵢ f` in dimension `n`.
    pub fn laplacian(&self, x: &[f64], n: usize) -> f64 {
        (0..n).map(|i| self.deriv2(x, i, i)).sum()
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> Error {
        Error::Expression {
            column: self.pos + 1,
            message: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sign(&mut self) -> Option<f64> {
        if self.eat('+') {
            Some(1.0)
        } else if self.eat('-') {
            Some(-1.0)
        } else {
            None
        }
    }

    fn expr(&mut self) -> Result<Vec<Term>> {
        let mut terms = Vec::new();
        let mut s = self.sign().unwrap_or(1.0);
        loop {
            let mut t = self.term()?;
            t.coef *= s;
            terms.push(t);
            match self.sign() {
                Some(next) => s = next,
                None => break,
            }
        }
        Ok(terms)
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            let exp_sign = (c == '+' || c == '-')
                && self.pos > start
                && matches!(self.chars[self.pos - 1], 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.err("expected a number")
        })
    }

    fn term(&mut self) -> Result<Term> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let coef = self.number()?;
                if self.eat('*') {
                    let kind = self.trig()?;
                    Ok(Term { coef, kind })
                } else {
                    Ok(Term {
                        coef,
                        kind: Kind::Const,
                    })
                }
            }
            Some('c') | Some('s') => Ok(Term {
                coef: 1.0,
                kind: self.trig()?,
            }),
            _ => Err(self.err("expected a number, cos(...) or sin(...)")),
        }
    }

    fn keyword(&mut self, word: &str) -> bool {
        let w: Vec<char> = word.chars().collect();
        if self.chars[self.pos..].starts_with(&w) {
            self.pos += w.len();
            true
        } else {
            false
        }
    }

    fn trig(&mut self) -> Result<Kind> {
        let is_cos = if self.keyword("cos") {
            true
        } else if self.keyword("sin") {
            false
        } else {
            return Err(self.err("expected cos or sin"));
        };
        if !self.eat('(') {
            return Err(self.err("expected '('"));
        }
        let k = self.wave()?;
        if !self.eat(')') {
            return Err(self.err("expected ')'"));
        }
        Ok(if is_cos { Kind::Cos(k) } else { Kind::Sin(k) })
    }

    fn wave(&mut self) -> Result<Vec<i64>> {
        let mut k = vec![0i64; 9];
        let mut s = self.sign().map(|v| v as i64).unwrap_or(1);
        loop {
            let mut mult = 1i64;
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let txt: String = self.chars[start..self.pos].iter().collect();
                mult = txt.parse().map_err(|_| self.err("bad integer"))?;
                if !self.eat('*') {
                    return Err(self.err("expected '*' between integer and axis"));
                }
            }
            if !self.eat('x') {
                return Err(self.err("expected an axis x1..x9"));
            }
            let axis = match self.peek().and_then(|c| c.to_digit(10)) {
                Some(d) if d >= 1 => d as usize,
                _ => return Err(self.err("expected an axis digit 1..9")),
            };
            self.pos += 1;
            k[axis - 1] += s * mult;
            match self.sign() {
                Some(next) => s = next as i64,
                None => break,
            }
        }
        let last = k.iter().rposition(|&c| c != 0).map_or(0, |i| i + 1);
        k.truncate(last);
        Ok(k)
    }
}
