//! Small arithmetic expression language for metric and field components.
//!
//! Grammar: numbers, `pi`, coordinates `t x y`, `+ - * / ^`, parentheses and
//! the functions `sin cos exp sqrt`. On the grid an expression is sampled
//! pointwise; on an abelian frame with periods it is converted exactly to a
//! trigonometric polynomial, which requires every `sin`/`cos` argument to be an
//! affine function with integer wave numbers.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::field::{FieldError, ScalarField, TrigPoly};
use crate::spectral::SpectralPlan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("expression `{expr}` cannot be represented on this backend: {reason}")]
    NotRepresentable { expr: String, reason: String },
    #[error("expression `{expr}` is not periodic along axis {axis}")]
    NotPeriodic { expr: String, axis: usize },
    #[error("expression `{expr}` is not finite at {point:?}")]
    NonFinite { expr: String, point: [f64; 3] },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "{}", ["t", "x", "y"][*i]),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { pos: self.pos, msg: msg.into() })
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let func = match word {
                    "pi" => return Ok(Expr::Num(PI)),
                    "t" => return Ok(Expr::Var(0)),
                    "x" => return Ok(Expr::Var(1)),
                    "y" => return Ok(Expr::Var(2)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    other => {
                        self.pos = start;
                        return self.err(format!("unknown identifier `{other}`"));
                    }
                };
                if !self.eat(b'(') {
                    return self.err("expected `(` after function name");
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Some(c) => self.err(format!("unexpected character `{}`", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Num(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("malformed number `{text}`"))
            }
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        if p.peek().is_some() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Pointwise value at `(t, x, y)`.
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => p[*i],
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, b) => a.eval(p).powf(b.eval(p)),
            Expr::Call(f, a) => {
                let v = a.eval(p);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Value if the expression contains no coordinates.
    pub fn const_value(&self) -> Option<f64> {
        if self.mentions_coordinates() {
            None
        } else {
            Some(self.eval([0.0; 3]))
        }
    }

    pub fn mentions_coordinates(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.mentions_coordinates(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.mentions_coordinates() || b.mentions_coordinates()
            }
        }
    }

    /// `(slope, offset)` when the expression is affine in the coordinates.
    fn affine(&self) -> Option<([f64; 3], f64)> {
        if let Some(c) = self.const_value() {
            return Some(([0.0; 3], c));
        }
        match self {
            Expr::Var(i) => {
                let mut a = [0.0; 3];
                a[*i] = 1.0;
                Some((a, 0.0))
            }
            Expr::Neg(a) => a.affine().map(|(s, c)| (s.map(|v| -v), -c)),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let (sa, ca) = a.affine()?;
                let (sb, cb) = b.affine()?;
                let sign = if matches!(self, Expr::Add(..)) { 1.0 } else { -1.0 };
                Some(([0, 1, 2].map(|i| sa[i] + sign * sb[i]), ca + sign * cb))
            }
            Expr::Mul(a, b) => {
                if let Some(k) = a.const_value() {
                    b.affine().map(|(s, c)| (s.map(|v| k * v), k * c))
                } else if let Some(k) = b.const_value() {
                    a.affine().map(|(s, c)| (s.map(|v| k * v), k * c))
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let k = b.const_value()?;
                a.affine().map(|(s, c)| (s.map(|v| v / k), c / k))
            }
            _ => None,
        }
    }

    fn unrepresentable(&self, reason: &str) -> ExprError {
        ExprError::NotRepresentable { expr: self.to_string(), reason: reason.to_string() }
    }

    /// Exact field on an abelian frame: a constant, or a trigonometric
    /// polynomial when `periods` are known.
    pub fn to_exact_field(&self, periods: Option<[f64; 3]>) -> Result<ScalarField, ExprError> {
        if let Some(c) = self.const_value() {
            if !c.is_finite() {
                return Err(ExprError::NonFinite { expr: self.to_string(), point: [0.0; 3] });
            }
            return Ok(ScalarField::Const(c));
        }
        let Some(periods) = periods else {
            return Err(self.unrepresentable("coordinate-dependent values need an abelian frame with periods"));
        };
        let out = match self {
            Expr::Num(_) => unreachable!(),
            Expr::Var(_) => return Err(self.unrepresentable("bare coordinates are not periodic")),
            Expr::Neg(a) => -a.to_exact_field(Some(periods))?,
            Expr::Add(a, b) => a.to_exact_field(Some(periods))? + b.to_exact_field(Some(periods))?,
            Expr::Sub(a, b) => a.to_exact_field(Some(periods))? - b.to_exact_field(Some(periods))?,
            Expr::Mul(a, b) => a.to_exact_field(Some(periods))? * b.to_exact_field(Some(periods))?,
            Expr::Div(a, b) => a.to_exact_field(Some(periods))?.try_div(&b.to_exact_field(Some(periods))?)?,
            Expr::Pow(a, b) => {
                let Some(e) = b.const_value() else {
                    return Err(self.unrepresentable("exponent must be constant"));
                };
                if e < 0.0 || e.fract() != 0.0 || e > 16.0 {
                    return Err(self.unrepresentable("exponent must be a small non-negative integer"));
                }
                let base = a.to_exact_field(Some(periods))?;
                (0..e as usize).fold(ScalarField::Const(1.0), |acc, _| acc * &base)
            }
            Expr::Call(f, a) => match f {
                Func::Sin | Func::Cos => {
                    let Some((slope, offset)) = a.affine() else {
                        return Err(self.unrepresentable("trigonometric argument must be affine"));
                    };
                    let mut mode = [0i32; 3];
                    for i in 0..3 {
                        let n = slope[i] * periods[i] / (2.0 * PI);
                        if (n - n.round()).abs() > 1e-9 {
                            return Err(ExprError::NotPeriodic { expr: self.to_string(), axis: i });
                        }
                        mode[i] = n.round() as i32;
                    }
                    let (cos_amp, sin_amp) = match f {
                        Func::Cos => (offset.cos(), -offset.sin()),
                        _ => (offset.sin(), offset.cos()),
                    };
                    let p = add_trig(TrigPoly::cos_mode(mode, cos_amp), TrigPoly::sin_mode(mode, sin_amp));
                    ScalarField::Trig(p).simplified()
                }
                Func::Exp | Func::Sqrt => {
                    return Err(self.unrepresentable("exp and sqrt need constant arguments on the frame backend"))
                }
            },
        };
        Ok(out.simplified())
    }

    /// Samples on a grid plan, after checking periodicity and finiteness.
    pub fn to_samples(&self, plan: &SpectralPlan) -> Result<ScalarField, ExprError> {
        if let Some(c) = self.const_value() {
            if !c.is_finite() {
                return Err(ExprError::NonFinite { expr: self.to_string(), point: [0.0; 3] });
            }
            return Ok(ScalarField::Const(c));
        }
        let periods = plan.periods();
        // periodicity probe at a few off-lattice points
        let probes = [[0.137, 0.291, 0.533], [0.71, 0.05, 0.38], [0.45, 0.83, 0.17]];
        for q in probes {
            let p = [0, 1, 2].map(|i| q[i] * periods[i]);
            let v = self.eval(p);
            for axis in 0..3 {
                let mut shifted = p;
                shifted[axis] += periods[axis];
                let w = self.eval(shifted);
                if (v - w).abs() > 1e-9 * (1.0 + v.abs()) {
                    return Err(ExprError::NotPeriodic { expr: self.to_string(), axis });
                }
            }
        }
        let values = plan.sample(|p| self.eval(p));
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ExprError::NonFinite { expr: self.to_string(), point: plan.point(i) });
        }
        Ok(ScalarField::Samples(values).simplified())
    }
}

fn add_trig(a: TrigPoly, b: TrigPoly) -> TrigPoly {
    match ScalarField::Trig(a) + ScalarField::Trig(b) {
        ScalarField::Trig(p) => p,
        ScalarField::Const(c) => TrigPoly::constant(c),
        ScalarField::Samples(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_power() {
        let e = Expr::parse("1 + 2*3^2 - -4/2").unwrap();
        assert_eq!(e.const_value(), Some(21.0));
        assert_eq!(Expr::parse("2^3^2").unwrap().const_value(), Some(512.0));
        assert_eq!(Expr::parse("1e-2 * 3").unwrap().const_value(), Some(0.03));
    }

    #[test]
    fn syntax_errors_report_position() {
        assert!(matches!(Expr::parse("1 + "), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("foo(x)"), Err(ExprError::Syntax { pos: 0, .. })));
        assert!(matches!(Expr::parse("(1"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn trig_conversion_is_exact() {
        let e = Expr::parse("0.1*cos(2*pi*x)").unwrap();
        let f = e.to_exact_field(Some([1.0; 3])).unwrap();
        let ScalarField::Trig(p) = &f else { panic!("{f:?}") };
        assert!((p.coefficient([0, 1, 0]).re - 0.05).abs() < 1e-15);
        for q in [[0.1, 0.2, 0.3], [0.7, 0.9, 0.25]] {
            assert!((p.eval(q, [1.0; 3]) - e.eval(q)).abs() < 1e-14);
        }
    }

    #[test]
    fn trig_products_and_phases() {
        let e = Expr::parse("(1 + sin(2*pi*t + 0.3))*cos(4*pi*y)^2").unwrap();
        let ScalarField::Trig(p) = e.to_exact_field(Some([1.0; 3])).unwrap() else { panic!() };
        for q in [[0.1, 0.2, 0.3], [0.77, 0.41, 0.05]] {
            assert!((p.eval(q, [1.0; 3]) - e.eval(q)).abs() < 1e-13);
        }
    }

    #[test]
    fn frame_rejections() {
        let off = Expr::parse("sin(3*x)").unwrap();
        assert!(matches!(off.to_exact_field(Some([1.0; 3])), Err(ExprError::NotPeriodic { axis: 1, .. })));
        let ex = Expr::parse("exp(cos(2*pi*t))").unwrap();
        assert!(matches!(ex.to_exact_field(Some([1.0; 3])), Err(ExprError::NotRepresentable { .. })));
        let bare = Expr::parse("x").unwrap();
        assert!(bare.to_exact_field(Some([1.0; 3])).is_err());
        assert!(Expr::parse("cos(2*pi*x)").unwrap().to_exact_field(None).is_err());
    }

    #[test]
    fn grid_sampling_checks_periodicity() {
        let plan = SpectralPlan::new(8, [1.0; 3], false);
        assert!(matches!(
            Expr::parse("x").unwrap().to_samples(&plan),
            Err(ExprError::NotPeriodic { axis: 1, .. })
        ));
        let ok = Expr::parse("exp(0.6*sin(2*pi*t))").unwrap().to_samples(&plan).unwrap();
        assert!(matches!(ok, ScalarField::Samples(_)));
        assert_eq!(Expr::parse("2*pi").unwrap().to_samples(&plan).unwrap(), ScalarField::Const(2.0 * PI));
    }
}
