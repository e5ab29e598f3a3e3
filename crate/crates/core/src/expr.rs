//! A small arithmetic expression language used by scenario files.
//!
//! Expressions are parsed once and compiled to a flat postfix program with
//! variables resolved to fixed slots, so evaluation inside grid loops costs a
//! handful of stack operations and never allocates for realistic depths.
//!
//! Grammar (usual precedence, `^` is right associative and binds tighter than
//! unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::collections::BTreeMap;
use std::fmt;

use smallvec::SmallVec;

/// Slot layout shared by every compiled expression.
pub const SLOT_T: usize = 0;
pub const SLOT_X: usize = 1;
pub const SLOT_U: usize = 3;
pub const SLOT_ALPHA: usize = 7;
pub const NUM_SLOTS: usize = 11;
pub const MAX_STATE_DIM: usize = 2;
pub const MAX_CONTROL_DIM: usize = 4;
pub const MAX_PARAM_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} (at byte {position} of `{source_text}`)")]
pub struct ExprError {
    pub message: String,
    pub position: usize,
    pub source_text: String,
}

/// Which variable families an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarScope {
    pub time: bool,
    pub state_dim: usize,
    pub control_dim: usize,
    pub param_dim: usize,
}

impl VarScope {
    pub fn drift(state_dim: usize, control_dim: usize) -> Self {
        VarScope { time: true, state_dim, control_dim, param_dim: 0 }
    }

    pub fn coupling(state_dim: usize, control_dim: usize, param_dim: usize) -> Self {
        VarScope { time: true, state_dim, control_dim, param_dim }
    }

    pub fn cost(state_dim: usize) -> Self {
        VarScope { time: true, state_dim, control_dim: 0, param_dim: 0 }
    }

    pub fn time_only() -> Self {
        VarScope { time: true, state_dim: 0, control_dim: 0, param_dim: 0 }
    }

    fn resolve(&self, name: &str) -> Option<usize> {
        let indexed = |prefix: &str, base: usize, dim: usize| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            let idx: usize = if rest.is_empty() { 1 } else { rest.parse().ok()? };
            (idx >= 1 && idx <= dim).then_some(base + idx - 1)
        };
        match name {
            "t" if self.time => Some(SLOT_T),
            "a" => indexed("a", SLOT_ALPHA, self.param_dim),
            _ => indexed("alpha", SLOT_ALPHA, self.param_dim)
                .or_else(|| indexed("x", SLOT_X, self.state_dim))
                .or_else(|| indexed("u", SLOT_U, self.control_dim)),
        }
    }
}

/// Evaluation inputs. Unused families may be empty slices.
#[derive(Debug, Clone, Copy)]
pub struct Args<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub alpha: &'a [f64],
}

impl<'a> Args<'a> {
    pub fn new(t: f64, x: &'a [f64], u: &'a [f64], alpha: &'a [f64]) -> Self {
        Args { t, x, u, alpha }
    }

    fn slot(&self, slot: usize) -> f64 {
        match slot {
            SLOT_T => self.t,
            s if s < SLOT_U => self.x.get(s - SLOT_X).copied().unwrap_or(0.0),
            s if s < SLOT_ALPHA => self.u.get(s - SLOT_U).copied().unwrap_or(0.0),
            s => self.alpha.get(s - SLOT_ALPHA).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func1 {
    Abs,
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Tanh,
    Atan,
    Sign,
    Relu,
    Floor,
}

impl Func1 {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => Func1::Abs,
            "sqrt" => Func1::Sqrt,
            "exp" => Func1::Exp,
            "ln" | "log" => Func1::Ln,
            "sin" => Func1::Sin,
            "cos" => Func1::Cos,
            "tan" => Func1::Tan,
            "tanh" => Func1::Tanh,
            "atan" => Func1::Atan,
            "sign" => Func1::Sign,
            "relu" => Func1::Relu,
            "floor" => Func1::Floor,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func1::Abs => v.abs(),
            Func1::Sqrt => v.sqrt(),
            Func1::Exp => v.exp(),
            Func1::Ln => v.ln(),
            Func1::Sin => v.sin(),
            Func1::Cos => v.cos(),
            Func1::Tan => v.tan(),
            Func1::Tanh => v.tanh(),
            Func1::Atan => v.atan(),
            Func1::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func1::Relu => v.max(0.0),
            Func1::Floor => v.floor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(u8),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    PowI(i32),
    Call(Func1),
    Min(u8),
    Max(u8),
}

/// A compiled expression.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    program: Vec<Op>,
    uses: [bool; NUM_SLOTS],
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses and compiles `source`. Identifiers not in `scope` are looked up
    /// in `params` and folded to constants.
    pub fn compile(source: &str, scope: VarScope, params: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { source, tokens, pos: 0, scope, params, program: Vec::new() };
        parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.error_here("unexpected trailing input"));
        }
        let mut uses = [false; NUM_SLOTS];
        for op in &parser.program {
            if let Op::Var(s) = op {
                uses[*s as usize] = true;
            }
        }
        Ok(Expr { source: source.trim().to_string(), program: parser.program, uses })
    }

    pub fn constant(value: f64) -> Expr {
        Expr { source: format!("{value}"), program: vec![Op::Const(value)], uses: [false; NUM_SLOTS] }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses_time(&self) -> bool {
        self.uses[SLOT_T]
    }

    pub fn uses_state(&self) -> bool {
        self.uses[SLOT_X..SLOT_U].iter().any(|&b| b)
    }

    /// `Some(c)` when the program is a single constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.program.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }

    pub fn eval(&self, args: &Args<'_>) -> f64 {
        let mut stack: SmallVec<[f64; 16]> = SmallVec::new();
        for op in &self.program {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Var(s) => stack.push(args.slot(s as usize)),
                Op::Neg => {
                    let v = stack.pop().unwrap_or(f64::NAN);
                    stack.push(-v);
                }
                Op::Call(f) => {
                    let v = stack.pop().unwrap_or(f64::NAN);
                    stack.push(f.apply(v));
                }
                Op::PowI(k) => {
                    let v = stack.pop().unwrap_or(f64::NAN);
                    stack.push(v.powi(k));
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    let b = stack.pop().unwrap_or(f64::NAN);
                    let a = stack.pop().unwrap_or(f64::NAN);
                    stack.push(match *op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => a / b,
                        _ => a.powf(b),
                    });
                }
                Op::Min(n) | Op::Max(n) => {
                    let n = n as usize;
                    let start = stack.len() - n;
                    let is_min = matches!(op, Op::Min(_));
                    let mut acc = stack[start];
                    for &v in &stack[start + 1..] {
                        acc = if is_min { acc.min(v) } else { acc.max(v) };
                    }
                    stack.truncate(start);
                    stack.push(acc);
                }
            }
        }
        stack.pop().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(source: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &source[start..i];
            let value = text.parse::<f64>().map_err(|_| ExprError {
                message: format!("malformed number `{text}`"),
                position: start,
                source_text: source.to_string(),
            })?;
            out.push((Token::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(source[start..i].to_string()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Token::Sym(c), i));
            i += 1;
        } else {
            return Err(ExprError {
                message: format!("unexpected character `{c}`"),
                position: i,
                source_text: source.to_string(),
            });
        }
    }
    Ok(out)
}

struct Parser<'s> {
    source: &'s str,
    tokens: Vec<(Token, usize)>,
    pos: usize,
    scope: VarScope,
    params: &'s BTreeMap<String, f64>,
    program: Vec<Op>,
}

impl Parser<'_> {
    fn error_here(&self, message: &str) -> ExprError {
        let position = self.tokens.get(self.pos).map(|t| t.1).unwrap_or(self.source.len());
        ExprError { message: message.to_string(), position, source_text: self.source.to_string() }
    }

    fn peek_sym(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((Token::Sym(c), _)) => Some(*c),
            _ => None,
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ExprError> {
        if self.peek_sym() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(&format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<(), ExprError> {
        self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            self.term()?;
            self.program.push(if c == '+' { Op::Add } else { Op::Sub });
        }
        Ok(())
    }

    fn term(&mut self) -> Result<(), ExprError> {
        self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            self.unary()?;
            self.program.push(if c == '*' { Op::Mul } else { Op::Div });
        }
        Ok(())
    }

    fn unary(&mut self) -> Result<(), ExprError> {
        if self.peek_sym() == Some('-') {
            self.pos += 1;
            self.unary()?;
            match self.program.last_mut() {
                Some(Op::Const(c)) => *c = -*c,
                _ => self.program.push(Op::Neg),
            }
            Ok(())
        } else if self.peek_sym() == Some('+') {
            self.pos += 1;
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<(), ExprError> {
        self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let mark = self.program.len();
            self.unary()?;
            if self.program.len() == mark + 1 {
                if let Op::Const(k) = self.program[mark] {
                    if k.fract() == 0.0 && k.abs() <= 64.0 {
                        self.program[mark] = Op::PowI(k as i32);
                        return Ok(());
                    }
                }
            }
            self.program.push(Op::Pow);
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<(), ExprError> {
        let Some((tok, _)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error_here("unexpected end of expression"));
        };
        match tok {
            Token::Num(v) => {
                self.pos += 1;
                self.program.push(Op::Const(v));
                Ok(())
            }
            Token::Sym('(') => {
                self.pos += 1;
                self.expr()?;
                self.expect_sym(')')
            }
            Token::Sym(_) => Err(self.error_here("expected a value")),
            Token::Ident(name) => {
                self.pos += 1;
                if self.peek_sym() == Some('(') {
                    self.pos += 1;
                    self.call(&name)
                } else {
                    self.ident(&name)
                }
            }
        }
    }

    fn call(&mut self, name: &str) -> Result<(), ExprError> {
        let mut argc = 0usize;
        if self.peek_sym() != Some(')') {
            loop {
                self.expr()?;
                argc += 1;
                if self.peek_sym() == Some(',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        let arity_err =
            |p: &Parser<'_>, want: &str| Err(p.error_here(&format!("`{name}` expects {want} argument(s), got {argc}")));
        match name {
            "min" | "max" => {
                if argc == 0 || argc > 255 {
                    return arity_err(self, "at least one");
                }
                self.program.push(if name == "min" { Op::Min(argc as u8) } else { Op::Max(argc as u8) });
            }
            "pow" => {
                if argc != 2 {
                    return arity_err(self, "2");
                }
                self.program.push(Op::Pow);
            }
            _ => {
                let Some(f) = Func1::lookup(name) else {
                    return Err(self.error_here(&format!("unknown function `{name}`")));
                };
                if argc != 1 {
                    return arity_err(self, "1");
                }
                self.program.push(Op::Call(f));
            }
        }
        Ok(())
    }

    fn ident(&mut self, name: &str) -> Result<(), ExprError> {
        if let Some(slot) = self.scope.resolve(name) {
            self.program.push(Op::Var(slot as u8));
            return Ok(());
        }
        if let Some(v) = self.params.get(name) {
            self.program.push(Op::Const(*v));
            return Ok(());
        }
        let value = match name {
            "pi" => std::f64::consts::PI,
            "e" => std::f64::consts::E,
            "inf" => f64::INFINITY,
            _ => {
                self.pos -= 1;
                return Err(self.error_here(&format!("unknown identifier `{name}`")));
            }
        };
        self.program.push(Op::Const(value));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, t: f64, x: &[f64], u: &[f64], alpha: &[f64]) -> f64 {
        let mut params = BTreeMap::new();
        params.insert("C".to_string(), 2.0);
        let e = Expr::compile(src, VarScope::coupling(2, 2, 1), &params).unwrap();
        e.eval(&Args::new(t, x, u, alpha))
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval1("1 + 2 * 3", 0.0, &[], &[], &[]), 7.0);
        assert_eq!(eval1("2 ^ 3 ^ 2", 0.0, &[], &[], &[]), 512.0);
        assert_eq!(eval1("-2 ^ 2", 0.0, &[], &[], &[]), -4.0);
        assert_eq!(eval1("(1 - 2) - 3", 0.0, &[], &[], &[]), -4.0);
        assert_eq!(eval1("8 / 4 / 2", 0.0, &[], &[], &[]), 1.0);
    }

    #[test]
    fn variables_params_and_functions() {
        let v = eval1("C*t + 1/x^2 + u2*alpha - max(x1, x2, 0) + abs(-3)", 1.5, &[2.0, 5.0], &[0.0, 4.0], &[0.5]);
        assert_eq!(v, 3.0 + 0.25 + 2.0 - 5.0 + 3.0);
        assert_eq!(eval1("u^2*alpha", 0.0, &[], &[2.0], &[0.5]), 2.0);
        assert_eq!(eval1("1e-3 * 1E3", 0.0, &[], &[], &[]), 1.0);
        assert!(eval1("inf", 0.0, &[], &[], &[]).is_infinite());
    }

    #[test]
    fn scope_is_enforced() {
        let params = BTreeMap::new();
        let err = Expr::compile("u * alpha", VarScope::cost(1), &params).unwrap_err();
        assert!(err.message.contains("unknown identifier `u`"), "{err}");
        assert!(Expr::compile("x3", VarScope::cost(2), &params).is_err());
        assert!(Expr::compile("x2", VarScope::cost(2), &params).is_ok());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let params = BTreeMap::new();
        for src in ["", "1 +", "(1", "foo(1)", "abs(1, 2)", "1 $ 2", "1 2"] {
            assert!(Expr::compile(src, VarScope::cost(1), &params).is_err(), "{src}");
        }
    }

    #[test]
    fn dependency_tracking() {
        let params = BTreeMap::new();
        let e = Expr::compile("u^2*alpha", VarScope::coupling(1, 1, 1), &params).unwrap();
        assert!(!e.uses_time());
        assert!(!e.uses_state());
        let e = Expr::compile("t + x", VarScope::drift(1, 1), &params).unwrap();
        assert!(e.uses_time() && e.uses_state());
        assert_eq!(Expr::compile("-4", VarScope::cost(1), &params).unwrap().as_constant(), Some(-4.0));
    }
}
