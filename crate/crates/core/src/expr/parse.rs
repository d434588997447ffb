//! Lexer, recursive-descent parser, AST printer and the stack tape the AST
//! compiles to.

use std::collections::BTreeMap;
use std::fmt;

use smallvec::SmallVec;

use super::jet::Jet2;
use super::ExprError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan2,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "atan2" => Func::Atan2,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Atan2 | Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Atan2 => "atan2",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Num(f64),
    Pi,
    Var(usize),
    Param(String),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Call(Func, Vec<Ast>),
}

impl Ast {
    /// Integer value of a literal exponent (`2`, `-3`, `(2.0)`), if any.
    fn integer_literal(&self) -> Option<i32> {
        match self {
            Ast::Num(v) if v.fract() == 0.0 && v.abs() <= 1024.0 => Some(*v as i32),
            Ast::Neg(inner) => inner.integer_literal().map(|n| -n),
            _ => None,
        }
    }

    pub(crate) fn print(&self, names: &[String; 3], out: &mut String) {
        use fmt::Write;
        match self {
            Ast::Num(v) => {
                let _ = write!(out, "{v:?}");
            }
            Ast::Pi => out.push_str("pi"),
            Ast::Var(i) => out.push_str(&names[*i]),
            Ast::Param(p) => out.push_str(p),
            Ast::Neg(a) => {
                out.push_str("(-");
                a.print(names, out);
                out.push(')');
            }
            Ast::Bin(op, a, b) => {
                out.push('(');
                a.print(names, out);
                out.push_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => " * ",
                    BinOp::Div => " / ",
                });
                b.print(names, out);
                out.push(')');
            }
            Ast::Pow(a, b) => {
                out.push('(');
                a.print(names, out);
                out.push_str(" ^ ");
                b.print(names, out);
                out.push(')');
            }
            Ast::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.print(names, out);
                }
                out.push(')');
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                position: start,
                expected: vec!["number".into()],
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_owned()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            return Err(ExprError::Syntax { position: i, expected: vec!["token".into()] });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    names: &'a [String; 3],
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            position: self.at(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&c.to_string()])
        }
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Ast, ExprError> {
        let base = self.unary()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exp = self.factor()?;
            return Ok(Ast::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Ast, ExprError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        let at = self.at();
        match self.bump() {
            Tok::Num(v) => Ok(Ast::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Sym('(') {
                    self.bump();
                    let f = Func::lookup(&name).ok_or_else(|| ExprError::UnknownIdentifier(name.clone()))?;
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Sym(',') {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != f.arity() {
                        return Err(ExprError::Syntax {
                            position: at,
                            expected: vec![format!("{} argument(s) to {}", f.arity(), name)],
                        });
                    }
                    return Ok(Ast::Call(f, args));
                }
                if let Some(i) = self.names.iter().position(|n| *n == name) {
                    Ok(Ast::Var(i))
                } else if self.params.contains_key(&name) {
                    Ok(Ast::Param(name))
                } else if name == "pi" {
                    Ok(Ast::Pi)
                } else {
                    Err(ExprError::UnknownIdentifier(name))
                }
            }
            _ => Err(ExprError::Syntax {
                position: at,
                expected: ["number", "identifier", "("].map(String::from).to_vec(),
            }),
        }
    }
}

pub(crate) fn parse_ast(src: &str, names: &[String; 3], params: &BTreeMap<String, f64>) -> Result<Ast, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, names, params };
    let ast = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail(&["operator", "end of input"]);
    }
    Ok(ast)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Instr {
    Const(f64),
    Var(u8),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    PowI(i32),
    PowF,
    Call(Func),
}

pub(crate) fn compile(ast: &Ast, params: &BTreeMap<String, f64>, tape: &mut Vec<Instr>) {
    match ast {
        Ast::Num(v) => tape.push(Instr::Const(*v)),
        Ast::Pi => tape.push(Instr::Const(std::f64::consts::PI)),
        Ast::Var(i) => tape.push(Instr::Var(*i as u8)),
        Ast::Param(p) => tape.push(Instr::Const(params[p])),
        Ast::Neg(a) => {
            compile(a, params, tape);
            tape.push(Instr::Neg);
        }
        Ast::Bin(op, a, b) => {
            compile(a, params, tape);
            compile(b, params, tape);
            tape.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
            });
        }
        Ast::Pow(a, b) => {
            compile(a, params, tape);
            match b.integer_literal() {
                Some(n) => tape.push(Instr::PowI(n)),
                None => {
                    compile(b, params, tape);
                    tape.push(Instr::PowF);
                }
            }
        }
        Ast::Call(f, args) => {
            for a in args {
                compile(a, params, tape);
            }
            tape.push(Instr::Call(*f));
        }
    }
}

/// Scalar types the tape can run on.
pub(crate) trait TapeScalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn var(axis: usize, v: f64) -> Self;
    fn val(&self) -> f64;
    fn powi(self, n: i32) -> Self;
    fn unary(self, f: Func) -> Self;
    fn binary(self, other: Self, f: Func) -> Self;
}

impl TapeScalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn var(_: usize, v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => 1.0,
            1 => self,
            2 => self * self,
            _ if n < 0 => 1.0 / self.powi(-n),
            _ => {
                let mut acc = 1.0;
                let mut base = self;
                let mut e = n as u32;
                while e > 0 {
                    if e & 1 == 1 {
                        acc *= base;
                    }
                    base *= base;
                    e >>= 1;
                }
                acc
            }
        }
    }
    fn unary(self, f: Func) -> Self {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Log => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Abs => self.abs(),
            _ => unreachable!(),
        }
    }
    fn binary(self, o: Self, f: Func) -> Self {
        match f {
            Func::Atan2 => self.atan2(o),
            Func::Min => self.min(o),
            Func::Max => self.max(o),
            _ => unreachable!(),
        }
    }
}

impl TapeScalar for Jet2 {
    fn cst(v: f64) -> Self {
        Jet2::constant(v)
    }
    fn var(axis: usize, v: f64) -> Self {
        Jet2::variable(axis, v)
    }
    fn val(&self) -> f64 {
        self.value
    }
    fn powi(self, n: i32) -> Self {
        Jet2::powi(&self, n)
    }
    fn unary(self, f: Func) -> Self {
        let x = self.value;
        match f {
            Func::Sin => {
                let (s, c) = x.sin_cos();
                self.chain(s, c, -s)
            }
            Func::Cos => {
                let (s, c) = x.sin_cos();
                self.chain(c, -s, -c)
            }
            Func::Tan => {
                let t = x.tan();
                let sec2 = 1.0 + t * t;
                self.chain(t, sec2, 2.0 * t * sec2)
            }
            Func::Exp => {
                let e = x.exp();
                self.chain(e, e, e)
            }
            Func::Log => self.chain(x.ln(), 1.0 / x, -1.0 / (x * x)),
            Func::Sqrt => {
                let r = x.sqrt();
                self.chain(r, 0.5 / r, -0.25 / (r * x))
            }
            Func::Abs => {
                let s = if x < 0.0 { -1.0 } else { 1.0 };
                self.chain(x.abs(), s, 0.0)
            }
            _ => unreachable!(),
        }
    }
    fn binary(self, o: Self, f: Func) -> Self {
        match f {
            Func::Atan2 => {
                let (y, x) = (self, o);
                atan2_jet(y, x, x * x + y * y)
            }
            Func::Min => {
                if self.value <= o.value {
                    self
                } else {
                    o
                }
            }
            Func::Max => {
                if self.value >= o.value {
                    self
                } else {
                    o
                }
            }
            _ => unreachable!(),
        }
    }
}

/// atan2 as a jet: writes θ = atan2(y, x) and uses
/// ∂θ = (x ∂y − y ∂x)/r², differentiated once more by the product rule.
fn atan2_jet(y: Jet2, x: Jet2, r2: Jet2) -> Jet2 {
    let value = y.value.atan2(x.value);
    let r2v = r2.value;
    let mut grad = [0.0; 3];
    for i in 0..3 {
        grad[i] = (x.value * y.grad[i] - y.value * x.grad[i]) / r2v;
    }
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let num_i = x.value * y.grad[i] - y.value * x.grad[i];
            let dnum = x.grad[j] * y.grad[i] + x.value * y.hess(i, j) - y.grad[j] * x.grad[i] - y.value * x.hess(i, j);
            hess[i][j] = dnum / r2v - num_i * r2.grad[j] / (r2v * r2v);
        }
    }
    // symmetrize round-off
    for i in 0..3 {
        for j in i + 1..3 {
            let m = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = m;
            hess[j][i] = m;
        }
    }
    Jet2::from_parts(value, grad, hess)
}

/// Domain failures raised while running a tape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum TapeFault {
    Log(f64),
    Sqrt(f64),
    Pow(f64),
    DivZero,
}

pub(crate) fn run<T: TapeScalar>(tape: &[Instr], p: [f64; 3]) -> Result<T, TapeFault> {
    let mut st: SmallVec<[T; 16]> = SmallVec::new();
    for ins in tape {
        match *ins {
            Instr::Const(v) => st.push(T::cst(v)),
            Instr::Var(i) => st.push(T::var(i as usize, p[i as usize])),
            Instr::Neg => {
                let a = st.pop().unwrap();
                st.push(-a);
            }
            Instr::PowI(n) => {
                let a = st.pop().unwrap();
                if n < 0 && a.val() == 0.0 {
                    return Err(TapeFault::DivZero);
                }
                st.push(a.powi(n));
            }
            Instr::Call(f) if f.arity() == 1 => {
                let a = st.pop().unwrap();
                let v = a.val();
                match f {
                    Func::Log if v <= 0.0 => return Err(TapeFault::Log(v)),
                    Func::Sqrt if v < 0.0 => return Err(TapeFault::Sqrt(v)),
                    _ => {}
                }
                st.push(a.unary(f));
            }
            _ => {
                let b = st.pop().unwrap();
                let a = st.pop().unwrap();
                let r = match *ins {
                    Instr::Add => a + b,
                    Instr::Sub => a - b,
                    Instr::Mul => a * b,
                    Instr::Div => {
                        if b.val() == 0.0 {
                            return Err(TapeFault::DivZero);
                        }
                        a / b
                    }
                    Instr::PowF => {
                        if a.val() <= 0.0 {
                            return Err(TapeFault::Pow(a.val()));
                        }
                        (b * a.unary(Func::Log)).unary(Func::Exp)
                    }
                    Instr::Call(f) => a.binary(b, f),
                    _ => unreachable!(),
                };
                st.push(r);
            }
        }
    }
    Ok(st.pop().expect("non-empty tape"))
}
