//! Closed-form expressions over named variables and time.
//!
//! The known parts of a system (right-hand sides, `g`, `C`, `d`, the
//! reduction map and the ground-truth unknowns) are stored as expressions so
//! they can be evaluated on plain floats and on tape variables alike, and
//! written down in JSON configuration as ordinary infix strings such as
//! `"beta*N*(1-N) - C*N"`.

use std::fmt;

use crate::autodiff::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Tanh,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Index into the variable slice passed to [`Expr::eval`].
    Var(usize),
    Time,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn eval<S: Real>(&self, vars: &[S], t: S) -> S {
        match self {
            Expr::Const(c) => t.lift(*c),
            Expr::Var(i) => vars[*i],
            Expr::Time => t,
            Expr::Neg(a) => -a.eval(vars, t),
            Expr::Add(a, b) => a.eval(vars, t) + b.eval(vars, t),
            Expr::Sub(a, b) => a.eval(vars, t) - b.eval(vars, t),
            Expr::Mul(a, b) => a.eval(vars, t) * b.eval(vars, t),
            Expr::Div(a, b) => a.eval(vars, t) / b.eval(vars, t),
            Expr::Pow(a, p) => {
                let base = a.eval(vars, t);
                if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    base.powi(*p as i32)
                } else {
                    base.powf(*p)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(vars, t);
                match f {
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Tanh => v.tanh(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    pub fn eval_f64(&self, vars: &[f64], t: f64) -> f64 {
        self.eval(vars, t)
    }

    /// Symbolic partial derivative with respect to variable `var`, with
    /// zeros and ones folded away so the result stays small.
    pub fn derivative(&self, var: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) | Time => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(var)),
            Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Div(a, b) => {
                // (a' b - a b') / b^2
                let num = sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                );
                div(num, pow((**b).clone(), 2.0))
            }
            Pow(a, p) => mul(mul(Const(*p), pow((**a).clone(), p - 1.0)), a.derivative(var)),
            Call(f, a) => {
                let inner = a.derivative(var);
                let a = (**a).clone();
                let outer = match f {
                    Func::Exp => Call(Func::Exp, Box::new(a)),
                    Func::Ln => div(Const(1.0), a),
                    Func::Tanh => sub(Const(1.0), pow(Call(Func::Tanh, Box::new(a)), 2.0)),
                    Func::Sin => Call(Func::Cos, Box::new(a)),
                    Func::Cos => neg(Call(Func::Sin, Box::new(a))),
                    Func::Sqrt => div(Const(0.5), Call(Func::Sqrt, Box::new(a))),
                };
                mul(outer, inner)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Time => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.uses_time(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_time() || b.uses_time()
            }
        }
    }

    /// Parses an infix expression. `names` maps identifiers to variable
    /// indices; `t` always denotes time and `params` are substituted as
    /// constants.
    pub fn parse(src: &str, names: &[&str], params: &[(&str, f64)]) -> Result<Self> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            names,
            params,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Renders the expression with the given variable names.
    pub fn render(&self, names: &[&str]) -> String {
        let mut s = String::new();
        self.write(&mut s, names, 0);
        s
    }

    fn write(&self, out: &mut String, names: &[&str], parent_prec: u8) {
        use std::fmt::Write;
        let prec = self.precedence();
        let paren = prec < parent_prec;
        if paren {
            out.push('(');
        }
        match self {
            Expr::Const(c) => {
                let _ = write!(out, "{c:?}");
            }
            Expr::Var(i) => match names.get(*i) {
                Some(n) => out.push_str(n),
                None => {
                    let _ = write!(out, "v{i}");
                }
            },
            Expr::Time => out.push('t'),
            Expr::Neg(a) => {
                out.push('-');
                a.write(out, names, 4);
            }
            Expr::Add(a, b) => {
                a.write(out, names, 1);
                out.push_str(" + ");
                b.write(out, names, 2);
            }
            Expr::Sub(a, b) => {
                a.write(out, names, 1);
                out.push_str(" - ");
                b.write(out, names, 2);
            }
            Expr::Mul(a, b) => {
                a.write(out, names, 2);
                out.push('*');
                b.write(out, names, 3);
            }
            Expr::Div(a, b) => {
                a.write(out, names, 2);
                out.push('/');
                b.write(out, names, 3);
            }
            Expr::Pow(a, p) => {
                a.write(out, names, 5);
                let _ = write!(out, "^{p:?}");
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(out, names, 0);
                out.push(')');
            }
        }
        if paren {
            out.push(')');
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 6,
        }
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        a => -a,
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => b,
        (a, b) => a + b,
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => neg(b),
        (a, b) => a - b,
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (a, b) if a.is_zero() || b.is_zero() => Expr::Const(0.0),
        (Expr::Const(c), b) if c == 1.0 => b,
        (a, Expr::Const(c)) if c == 1.0 => a,
        (a, b) => a * b,
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, _) if a.is_zero() => Expr::Const(0.0),
        (a, Expr::Const(c)) if c == 1.0 => a,
        (a, b) => a / b,
    }
}

fn pow(a: Expr, p: f64) -> Expr {
    match a {
        _ if p == 0.0 => Expr::Const(1.0),
        a if p == 1.0 => a,
        Expr::Const(c) => Expr::Const(c.powf(p)),
        a => Expr::Pow(Box::new(a), p),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [&'a str],
    params: &'a [(&'a str, f64)],
}

// expr   := term (('+' | '-') term)*
// term   := unary (('*' | '/') unary)*
// unary  := '-' unary | power
// power  := atom ('^' unary)?
// atom   := number | ident | ident '(' expr ')' | '(' expr ')'
impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            column: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == b'*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                e => -e,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = match self.unary()? {
                Expr::Const(c) => c,
                _ => return Err(self.error("exponents must be numeric constants")),
            };
            return Ok(Expr::Pow(Box::new(base), exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Parse {
            column: start + 1,
            message: format!("invalid number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| Error::Parse {
                column: start + 1,
                message: format!("unknown function '{name}'"),
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.error("expected ')'"));
            }
            self.pos += 1;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(i) = self.names.iter().position(|n| *n == name) {
            return Ok(Expr::Var(i));
        }
        if let Some((_, v)) = self.params.iter().find(|(n, _)| *n == name) {
            return Ok(Expr::Const(*v));
        }
        if name == "t" {
            return Ok(Expr::Time);
        }
        Err(Error::Parse {
            column: start + 1,
            message: format!("unknown identifier '{name}'"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("beta*N*(1-N) - C*N^2", &["N", "C"], &[("beta", 2.0)]).unwrap();
        let v = e.eval_f64(&[0.5, 3.0], 0.0);
        assert!((v - (2.0 * 0.25 - 3.0 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn time_and_functions() {
        let e = Expr::parse("5*exp(-5*(t-4)^2)", &[], &[]).unwrap();
        assert_eq!(e.eval_f64(&[], 4.0), 5.0);
        assert!(e.uses_time());
        let e = Expr::parse("-x^2", &["x"], &[]).unwrap();
        assert_eq!(e.eval_f64(&[3.0], 0.0), -9.0);
        let e = Expr::parse("2^-1 + 1.5e-1", &[], &[]).unwrap();
        assert!((e.eval_f64(&[], 0.0) - 0.65).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_columns() {
        match Expr::parse("x + foo", &["x"], &[]) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("(x", &["x"], &[]).is_err());
        assert!(Expr::parse("x y", &["x", "y"], &[]).is_err());
        assert!(Expr::parse("x^y", &["x", "y"], &[]).is_err());
    }

    #[test]
    fn render_round_trips() {
        let names = ["N", "C"];
        for src in [
            "N*(1 - N) - C*N",
            "-(N - C)/(C*2)",
            "exp(-5*(t - 4)^2)",
            "N^2 - -3",
            "N - (C - N)",
            "N/(C/N)",
        ] {
            let e = Expr::parse(src, &names, &[]).unwrap();
            let again = Expr::parse(&e.render(&names), &names, &[]).unwrap();
            for (n, c, t) in [(0.3, 1.7, 0.2), (1.1, -0.4, 3.9)] {
                let a = e.eval_f64(&[n, c], t);
                let b = again.eval_f64(&[n, c], t);
                assert!((a - b).abs() < 1e-14, "{src} -> {}", e.render(&names));
            }
        }
    }

    #[test]
    fn tape_evaluation_differentiates() {
        let e = Expr::parse("x*sin(y) + ln(x)/y", &["x", "y"], &[]).unwrap();
        let tape = Tape::new();
        let x = tape.var(1.3);
        let y = tape.var(0.7);
        let t = tape.var(0.0);
        let out = e.eval(&[x, y], t);
        let g = tape.backward(&[out]).unwrap();
        let dx = 0.7f64.sin() + 1.0 / (1.3 * 0.7);
        let dy = 1.3 * 0.7f64.cos() - 1.3f64.ln() / 0.49;
        assert!((g.wrt(&x) - dx).abs() < 1e-14);
        assert!((g.wrt(&y) - dy).abs() < 1e-14);
    }

    #[test]
    fn symbolic_derivative_matches_tape() {
        let names = ["x", "y"];
        for src in [
            "x*sin(y) + ln(x)/y",
            "exp(-5*(t - 4)^2) - 0.3*x*y",
            "tanh(x*y)^3 - sqrt(x + y) + cos(2*x)",
            "-y*(1 - x)/(x^2 + 1)",
            "x^1.5 + 7",
        ] {
            let e = Expr::parse(src, &names, &[]).unwrap();
            for (xv, yv, tv) in [(1.3, 0.7, 0.0), (0.4, 2.1, 3.9)] {
                let tape = Tape::new();
                let (x, y, t) = (tape.var(xv), tape.var(yv), tape.var(tv));
                let out = e.eval(&[x, y], t);
                let g = tape.backward(&[out]).unwrap();
                for (k, var) in [x, y].iter().enumerate() {
                    let d = e.derivative(k).eval_f64(&[xv, yv], tv);
                    let want = g.wrt(var);
                    assert!((d - want).abs() <= 1e-13 * want.abs().max(1.0), "{src} d/d{k}: {d} vs {want}");
                }
            }
        }
        assert!(Expr::parse("3*t", &names, &[]).unwrap().derivative(0).is_zero());
        assert_eq!(Expr::parse("x*y", &names, &[]).unwrap().derivative(0), Expr::var(1));
    }
}
