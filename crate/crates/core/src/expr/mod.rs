//! Scalar expressions over `t` and `w` used for coefficients, comparison
//! right-hand sides and class-K envelopes in scenario files.
//!
//! Evaluation never yields NaN or infinity: domain violations and overflow are
//! reported as [`EvalError`].

mod parser;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan,
    Min,
    Max,
    Pow,
}

impl Func {
    const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Atan,
        Func::Min,
        Func::Max,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Atan => "atan",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }
}

/// Expression tree. Parsed trees only carry nonnegative literals; negation is
/// always an explicit [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogDomain,
    SqrtDomain,
    PowDomain,
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("{kind:?} (operand {operand})")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub operand: f64,
}

fn fail(kind: EvalErrorKind, operand: f64) -> EvalError {
    EvalError { kind, operand }
}

fn finite(v: f64, operand: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(fail(EvalErrorKind::Overflow, operand))
    }
}

fn pow(base: f64, exp: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exp < 0.0 {
        return Err(fail(EvalErrorKind::DivisionByZero, base));
    }
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(fail(EvalErrorKind::PowDomain, base));
    }
    finite(base.powf(exp), base)
}

impl Expr {
    pub fn eval(&self, t: f64, w: f64) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(Var::T) => Ok(t),
            Expr::Var(Var::W) => Ok(w),
            Expr::Neg(e) => Ok(-e.eval(t, w)?),
            Expr::Bin(op, l, r) => {
                let a = l.eval(t, w)?;
                let b = r.eval(t, w)?;
                match op {
                    BinOp::Add => finite(a + b, a),
                    BinOp::Sub => finite(a - b, a),
                    BinOp::Mul => finite(a * b, a),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(fail(EvalErrorKind::DivisionByZero, a))
                        } else {
                            finite(a / b, a)
                        }
                    }
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(t, w)?;
                match f {
                    Func::Sin => Ok(x.sin()),
                    Func::Cos => Ok(x.cos()),
                    Func::Exp => finite(x.exp(), x),
                    Func::Log => {
                        if x <= 0.0 {
                            Err(fail(EvalErrorKind::LogDomain, x))
                        } else {
                            Ok(x.ln())
                        }
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            Err(fail(EvalErrorKind::SqrtDomain, x))
                        } else {
                            Ok(x.sqrt())
                        }
                    }
                    Func::Abs => Ok(x.abs()),
                    Func::Atan => Ok(x.atan()),
                    Func::Min => Ok(x.min(args[1].eval(t, w)?)),
                    Func::Max => Ok(x.max(args[1].eval(t, w)?)),
                    Func::Pow => pow(x, args[1].eval(t, w)?),
                }
            }
        }
    }

    pub fn mentions(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) => e.mentions(var),
            Expr::Bin(_, l, r) => l.mentions(var) || r.mentions(var),
            Expr::Call(_, args) => args.iter().any(|a| a.mentions(var)),
        }
    }

    /// Folds variable-free subtrees to literals and drops multiplications by one.
    pub fn simplify(&self) -> Expr {
        let e = match self {
            Expr::Num(_) | Expr::Var(_) => return self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.simplify())),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.simplify(), r.simplify());
                match (op, &l, &r) {
                    (BinOp::Mul, Expr::Num(one), other) | (BinOp::Mul, other, Expr::Num(one))
                        if *one == 1.0 =>
                    {
                        other.clone()
                    }
                    (BinOp::Div, other, Expr::Num(one)) if *one == 1.0 => other.clone(),
                    _ => Expr::Bin(*op, Box::new(l), Box::new(r)),
                }
            }
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(Expr::simplify).collect()),
        };
        if !e.mentions(Var::T) && !e.mentions(Var::W) {
            if let Ok(v) = e.eval(0.0, 0.0) {
                return Expr::Num(v);
            }
        }
        e
    }

    /// If the expression is structurally `a(t)·w`, returns the coefficient `a(t)`
    /// (simplified). The literal `0` counts as `0·w`.
    pub fn linear_in_w(&self) -> Option<Expr> {
        enum Shape {
            Free,
            Linear(Expr),
        }
        fn shape(e: &Expr) -> Option<Shape> {
            if !e.mentions(Var::W) {
                return Some(Shape::Free);
            }
            match e {
                Expr::Var(Var::W) => Some(Shape::Linear(Expr::Num(1.0))),
                Expr::Neg(inner) => match shape(inner)? {
                    Shape::Linear(c) => Some(Shape::Linear(Expr::Neg(Box::new(c)))),
                    Shape::Free => Some(Shape::Free),
                },
                Expr::Bin(op, l, r) => {
                    let (sl, sr) = (shape(l)?, shape(r)?);
                    let bin = |op, a: Expr, b: Expr| Expr::Bin(op, Box::new(a), Box::new(b));
                    match (op, sl, sr) {
                        (BinOp::Add | BinOp::Sub, Shape::Linear(a), Shape::Linear(b)) => {
                            Some(Shape::Linear(bin(*op, a, b)))
                        }
                        (BinOp::Mul, Shape::Linear(a), Shape::Free) => {
                            Some(Shape::Linear(bin(BinOp::Mul, a, (**r).clone())))
                        }
                        (BinOp::Mul, Shape::Free, Shape::Linear(b)) => {
                            Some(Shape::Linear(bin(BinOp::Mul, (**l).clone(), b)))
                        }
                        (BinOp::Div, Shape::Linear(a), Shape::Free) => {
                            Some(Shape::Linear(bin(BinOp::Div, a, (**r).clone())))
                        }
                        _ => None,
                    }
                }
                _ => None,
            }
        }
        match shape(self)? {
            Shape::Linear(c) => Some(c.simplify()),
            Shape::Free => match self.simplify() {
                Expr::Num(v) if v == 0.0 => Some(Expr::Num(0.0)),
                _ => None,
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(v) if *v < 0.0 => 0,
            _ => 5,
        }
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::W) => write!(f, "w"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Bin(op, l, r) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => " * ",
                    BinOp::Div => " / ",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    wrap(f, l, l.precedence() <= p)?;
                    write!(f, "{sym}")?;
                    wrap(f, r, r.precedence() < 3)
                } else {
                    wrap(f, l, l.precedence() < p)?;
                    write!(f, "{sym}")?;
                    wrap(f, r, r.precedence() <= p)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A parsed scalar function of `(t, w)`, keeping its source text.
#[derive(Clone)]
pub struct ScalarFn {
    source: Arc<str>,
    expr: Arc<Expr>,
}

impl ScalarFn {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn constant(v: f64) -> ScalarFn {
        ScalarFn {
            source: format!("{v:?}").into(),
            expr: Arc::new(Expr::Num(v)),
        }
    }

    pub fn eval(&self, t: f64, w: f64) -> Result<f64, EvalError> {
        self.expr.eval(t, w)
    }
}

impl From<Expr> for ScalarFn {
    fn from(e: Expr) -> Self {
        ScalarFn {
            source: e.to_string().into(),
            expr: Arc::new(e),
        }
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({:?})", &*self.source)
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl PartialEq for ScalarFn {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl std::str::FromStr for ScalarFn {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for ScalarFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for ScalarFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(|e| serde::de::Error::custom(format!("in expression {s:?}: {e}")))
    }
}

pub fn parse(text: &str) -> Result<ScalarFn, ParseError> {
    let expr = parser::parse_expr(text)?;
    Ok(ScalarFn {
        source: text.trim().into(),
        expr: Arc::new(expr),
    })
}

pub fn eval(f: &ScalarFn, t: f64, w: f64) -> Result<f64, EvalError> {
    f.eval(t, w)
}

/// Number of sample points used by [`check_class_k`].
pub const CLASS_K_SAMPLES: usize = 1000;

/// A function of `w` verified to vanish at zero and increase on a sampled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassK {
    f: ScalarFn,
    w_max: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassKError {
    #[error("value at 0 is {value}, not 0")]
    NotZeroAtOrigin { value: f64 },
    #[error("not increasing: f({w1}) = {v1} >= f({w2}) = {v2}")]
    NotIncreasing { w1: f64, v1: f64, w2: f64, v2: f64 },
    #[error("w_max must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn check_class_k(f: &ScalarFn, w_max: f64) -> Result<ClassK, ClassKError> {
    if !(w_max > 0.0 && w_max.is_finite()) {
        return Err(ClassKError::InvalidRange(w_max));
    }
    let v0 = f.eval(0.0, 0.0)?;
    if v0.abs() > 1e-12 {
        return Err(ClassKError::NotZeroAtOrigin { value: v0 });
    }
    let last = (CLASS_K_SAMPLES - 1) as f64;
    let mut prev = (0.0, v0);
    for k in 1..CLASS_K_SAMPLES {
        let w = w_max * k as f64 / last;
        let v = f.eval(0.0, w)?;
        if !(v > prev.1) {
            return Err(ClassKError::NotIncreasing {
                w1: prev.0,
                v1: prev.1,
                w2: w,
                v2: v,
            });
        }
        prev = (w, v);
    }
    Ok(ClassK {
        f: f.clone(),
        w_max,
    })
}

impl ClassK {
    pub fn function(&self) -> &ScalarFn {
        &self.f
    }

    /// Upper end of the verified range.
    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn eval(&self, w: f64) -> Result<f64, EvalError> {
        self.f.eval(0.0, w)
    }

    /// Largest `w` in `[0, hi]` with `f(w) < y`, by bisection (relative
    /// resolution `1e-12`). Returns `hi` when `f(hi) < y`.
    pub fn sup_below(&self, y: f64, hi: f64) -> Result<f64, EvalError> {
        if self.eval(hi)? < y {
            return Ok(hi);
        }
        let (mut lo, mut up) = (0.0, hi);
        for _ in 0..200 {
            if up - lo <= 1e-12 * up {
                break;
            }
            let mid = 0.5 * (lo + up);
            if self.eval(mid)? < y {
                lo = mid;
            } else {
                up = mid;
            }
        }
        Ok(lo)
    }
}

impl Serialize for ClassK {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.f.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, t: f64, w: f64) -> f64 {
        parse(src).unwrap().eval(t, w).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(ev("t", 3.0, 0.0), 3.0);
        assert_eq!(ev("1/(1+t^2)", 1.0, 0.0), 0.5);
        assert_eq!(ev("2*sqrt(abs(w))", 0.0, 4.0), 4.0);
        assert_eq!(ev("2*sqrt(abs(w))", 0.0, -4.0), 4.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2+3*4", 0.0, 0.0), 14.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("10-4-3", 0.0, 0.0), 3.0);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev(" max( t , w ) - min(t,w) ", 1.0, 4.0), 3.0);
        assert_eq!(ev("pow(2, 10)", 0.0, 0.0), 1024.0);
        assert_eq!(ev("1e-3*4", 0.0, 0.0), 4e-3);
        assert_eq!(ev("2.5E+1", 0.0, 0.0), 25.0);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ev("0", 7.0, -2.0), 0.0);
        assert_eq!(ev("exp(-t)*w", 0.0, 5.0), 5.0);
        let err = parse("1/w").unwrap().eval(1.0, 0.0).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
    }

    #[test]
    fn eval_errors_instead_of_nan() {
        let kinds = [
            ("log(w)", -1.0, EvalErrorKind::LogDomain),
            ("log(w)", 0.0, EvalErrorKind::LogDomain),
            ("sqrt(w)", -1.0, EvalErrorKind::SqrtDomain),
            ("w^0.5", -1.0, EvalErrorKind::PowDomain),
            ("w^-1", 0.0, EvalErrorKind::DivisionByZero),
            ("exp(w)", 1000.0, EvalErrorKind::Overflow),
            ("w*w", 1e200, EvalErrorKind::Overflow),
        ];
        for (src, w, kind) in kinds {
            let e = parse(src).unwrap().eval(0.0, w).unwrap_err();
            assert_eq!(e.kind, kind, "{src} at w={w}");
        }
        assert_eq!(ev("(-8)^2", 0.0, 0.0), 64.0);
    }

    #[test]
    fn parse_errors() {
        let e = parse("").unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(e.message.contains("empty"));

        let e = parse("1 + x").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(e.message.contains("unknown identifier"));

        let e = parse("(1 + t").unwrap_err();
        assert_eq!(e.offset, 6);
        assert!(e.message.contains("unbalanced"));
        assert_eq!(e.expected, vec!["')'".to_string()]);

        let e = parse("1 + t)").unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(e.message.contains("unbalanced"));

        assert!(parse("sin(t, w)").is_err());
        assert!(parse("sin t").is_err());
        assert!(parse("2 $ 3").is_err());
        assert!(parse("1e400").is_err());
        assert!(parse("1 +").unwrap_err().message.contains("end of input"));
    }

    #[test]
    fn class_k_examples() {
        assert!(check_class_k(&parse("w").unwrap(), 1.0).is_ok());
        assert!(check_class_k(&parse("w^2").unwrap(), 1e3).is_ok());
        match check_class_k(&parse("sin(w)").unwrap(), 4.0) {
            Err(ClassKError::NotIncreasing { w1, w2, .. }) => {
                assert!(w1 < std::f64::consts::FRAC_PI_2 + 0.01);
                assert!(w2 > std::f64::consts::FRAC_PI_2 - 0.01);
            }
            other => panic!("expected NotIncreasing, got {other:?}"),
        }
        assert!(matches!(
            check_class_k(&parse("w+1").unwrap(), 1.0),
            Err(ClassKError::NotZeroAtOrigin { .. })
        ));
        assert!(matches!(
            check_class_k(&parse("log(w)").unwrap(), 1.0),
            Err(ClassKError::Eval(_))
        ));
    }

    #[test]
    fn class_k_sup_below() {
        let k = check_class_k(&parse("w^2").unwrap(), 10.0).unwrap();
        let x = k.sup_below(4.0, 10.0).unwrap();
        assert!((x - 2.0).abs() < 1e-9);
        assert_eq!(k.sup_below(1e6, 10.0).unwrap(), 10.0);
    }

    #[test]
    fn linear_coefficient_extraction() {
        let coef = |s: &str| parse(s).unwrap().expr().linear_in_w();
        assert_eq!(coef("w"), Some(Expr::Num(1.0)));
        assert_eq!(coef("0"), Some(Expr::Num(0.0)));
        assert_eq!(coef("-w"), Some(Expr::Num(-1.0)));
        assert_eq!(coef("3*w - w"), Some(Expr::Num(2.0)));
        let c = coef("w/(1+t^2)").unwrap();
        assert_eq!(c.eval(1.0, 0.0).unwrap(), 0.5);
        let c = coef("exp(-t)*w").unwrap();
        assert_eq!(c, parse("exp(-t)").unwrap().expr().clone());
        assert_eq!(coef("w^2"), None);
        assert_eq!(coef("w + 1"), None);
        assert_eq!(coef("2*sqrt(abs(w))"), None);
        assert_eq!(coef("1"), None);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0..100.0f64).prop_map(Expr::Num),
            Just(Expr::Var(Var::T)),
            Just(Expr::Var(Var::W)),
            Just(Expr::Num(1e-7)),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::Bin(op, Box::new(l), Box::new(r))),
                (
                    prop::sample::select(Func::ALL.to_vec()),
                    prop::collection::vec(inner, 2)
                )
                    .prop_map(|(f, mut args)| {
                        args.truncate(f.arity());
                        Expr::Call(f, args)
                    }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse(&printed).unwrap();
            prop_assert_eq!(back.expr(), &e, "printed as {}", printed);
        }

        #[test]
        fn eval_is_pure(e in arb_expr(), t in -5.0..5.0f64, w in -5.0..5.0f64) {
            let a = e.eval(t, w);
            let b = e.eval(t, w);
            match (a, b) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                    prop_assert!(x.is_finite());
                }
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                _ => prop_assert!(false, "nondeterministic evaluation"),
            }
        }
    }
}
