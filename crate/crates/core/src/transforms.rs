//! The closed registry of unary, binary and scaling transformations, and
//! expression trees composing them.
//!
//! Every unary and binary transform is total: for finite input it returns
//! finite output. Partial operations use regularized forms (signed `log1p`,
//! `sqrt(|x|)`, `x / (x^2 + eps^2)`) and results beyond the `f64` range
//! saturate to `±f64::MAX`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;

/// Bumped whenever a transform's definition or token changes; recorded in
/// recommendation-matrix files.
pub const REGISTRY_VERSION: u32 = 1;

/// Regularizer of the reciprocal and division transforms.
pub const EPSILON: f64 = 1e-8;

fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

/// `x / (x^2 + eps^2)`, rearranged so `x^2` never overflows.
fn soft_reciprocal(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        saturate(1.0 / (x + EPSILON * EPSILON / x))
    }
}

macro_rules! token_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $tok),+
                }
            }

            pub fn from_token(tok: &str) -> Option<Self> {
                match tok {
                    $($tok => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

token_enum!(UnaryOp {
    Log => "log",
    Sqrt => "sqrt",
    Square => "square",
    Cube => "cube",
    Reciprocal => "reciprocal",
    Sigmoid => "sigmoid",
    Tanh => "tanh",
});

token_enum!(BinaryOp {
    Add => "add",
    Subtract => "sub",
    Multiply => "mult",
    Divide => "div",
});

token_enum!(ScalerKind {
    MinMax => "minmax",
    Standard => "standard",
    Robust => "robust",
});

impl UnaryOp {
    pub fn eval(self, x: f64) -> f64 {
        let v = match self {
            UnaryOp::Log => x.signum() * x.abs().ln_1p(),
            UnaryOp::Sqrt => x.abs().sqrt(),
            UnaryOp::Square => x * x,
            UnaryOp::Cube => x * x * x,
            UnaryOp::Reciprocal => soft_reciprocal(x),
            UnaryOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            UnaryOp::Tanh => x.tanh(),
        };
        saturate(if x == 0.0 && self == UnaryOp::Log { 0.0 } else { v })
    }
}

impl BinaryOp {
    pub fn eval(self, a: f64, b: f64) -> f64 {
        saturate(match self {
            BinaryOp::Add => a + b,
            BinaryOp::Subtract => a - b,
            BinaryOp::Multiply => a * b,
            BinaryOp::Divide => a * soft_reciprocal(b),
        })
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Multiply)
    }
}

/// A registry entry, serialized as `kind:name` (e.g. `binary:mult`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformId {
    Unary(UnaryOp),
    Binary(BinaryOp),
    Scaler(ScalerKind),
}

impl TransformId {
    pub fn kind(&self) -> &'static str {
        match self {
            TransformId::Unary(_) => "unary",
            TransformId::Binary(_) => "binary",
            TransformId::Scaler(_) => "scaler",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformId::Unary(op) => op.token(),
            TransformId::Binary(op) => op.token(),
            TransformId::Scaler(k) => k.token(),
        }
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.name())
    }
}

impl FromStr for TransformId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownTransform(s.to_string());
        let (kind, name) = s.split_once(':').ok_or_else(unknown)?;
        match kind {
            "unary" => UnaryOp::from_token(name).map(TransformId::Unary),
            "binary" => BinaryOp::from_token(name).map(TransformId::Binary),
            "scaler" => ScalerKind::from_token(name).map(TransformId::Scaler),
            _ => None,
        }
        .ok_or_else(unknown)
    }
}

impl Serialize for TransformId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransformId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn apply_unary(id: TransformId, x: &[f64]) -> Result<Vec<f64>> {
    match id {
        TransformId::Unary(op) => Ok(x.iter().map(|&v| op.eval(v)).collect()),
        other => Err(Error::UnknownTransform(format!("{other} is not unary"))),
    }
}

pub fn apply_binary(id: TransformId, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let TransformId::Binary(op) = id else {
        return Err(Error::UnknownTransform(format!("{id} is not binary")));
    };
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| op.eval(x, y)).collect())
}

/// Per-column affine parameters: output is `(x - center) / scale`, or `0`
/// for a column whose fitted scale is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(kind: ScalerKind, columns: &[Vec<f64>]) -> ScalerParams {
        let mut center = Vec::with_capacity(columns.len());
        let mut scale = Vec::with_capacity(columns.len());
        for col in columns {
            let (c, s) = if col.is_empty() || stats::is_constant(col) {
                (col.first().copied().unwrap_or(0.0), 0.0)
            } else {
                match kind {
                    ScalerKind::MinMax => {
                        let s = stats::sorted(col);
                        (s[0], s[s.len() - 1] - s[0])
                    }
                    ScalerKind::Standard => (stats::mean(col), stats::std_dev(col)),
                    ScalerKind::Robust => {
                        let s = stats::sorted(col);
                        let iqr = stats::quantile_sorted(&s, 0.75) - stats::quantile_sorted(&s, 0.25);
                        (stats::quantile_sorted(&s, 0.5), iqr)
                    }
                }
            };
            center.push(c);
            scale.push(if s.is_finite() { s } else { 0.0 });
        }
        ScalerParams { kind, center, scale }
    }

    pub fn transform(&self, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if columns.len() != self.center.len() {
            return Err(Error::LengthMismatch { left: columns.len(), right: self.center.len() });
        }
        Ok(columns
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(col, (&c, &s))| {
                col.iter().map(|&v| if s > 0.0 { saturate((v - c) / s) } else { 0.0 }).collect()
            })
            .collect())
    }
}

/// Scales every column, fitting parameters on `columns` unless `params` are
/// given, in which case they are reused unchanged.
pub fn apply_scaler(
    id: TransformId,
    columns: &[Vec<f64>],
    params: Option<&ScalerParams>,
) -> Result<(Vec<Vec<f64>>, ScalerParams)> {
    let TransformId::Scaler(kind) = id else {
        return Err(Error::UnknownTransform(format!("{id} is not a scaler")));
    };
    let params = match params {
        Some(p) if p.kind == kind => p.clone(),
        Some(p) => return Err(Error::ConfigMismatch { expected: kind.to_string(), found: p.kind.to_string() }),
        None => ScalerParams::fit(kind, columns),
    };
    let out = params.transform(columns)?;
    Ok((out, params))
}

/// A generated feature: transforms applied to named source features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransformExpr {
    Feature(String),
    Unary(UnaryOp, Box<TransformExpr>),
    Binary(BinaryOp, Box<TransformExpr>, Box<TransformExpr>),
}

impl TransformExpr {
    pub fn feature(name: impl Into<String>) -> Self {
        TransformExpr::Feature(name.into())
    }

    pub fn unary(op: UnaryOp, arg: TransformExpr) -> Self {
        TransformExpr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, a: TransformExpr, b: TransformExpr) -> Self {
        TransformExpr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Number of transform applications in the tree.
    pub fn order(&self) -> usize {
        match self {
            TransformExpr::Feature(_) => 0,
            TransformExpr::Unary(_, a) => 1 + a.order(),
            TransformExpr::Binary(_, a, b) => 1 + a.order() + b.order(),
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        match self {
            TransformExpr::Feature(name) => vec![name.as_str()],
            TransformExpr::Unary(_, a) => a.leaves(),
            TransformExpr::Binary(_, a, b) => {
                let mut v = a.leaves();
                v.extend(b.leaves());
                v
            }
        }
    }

    fn eval_inner(&self, d: &Dataset) -> Result<Vec<f64>> {
        match self {
            TransformExpr::Feature(name) => d
                .feature_index(name)
                .map(|j| d.feature(j).to_vec())
                .ok_or_else(|| Error::UnknownFeature(name.clone())),
            TransformExpr::Unary(op, a) => Ok(a.eval_inner(d)?.into_iter().map(|v| op.eval(v)).collect()),
            TransformExpr::Binary(op, a, b) => {
                let (va, vb) = (a.eval_inner(d)?, b.eval_inner(d)?);
                Ok(va.iter().zip(&vb).map(|(&x, &y)| op.eval(x, y)).collect())
            }
        }
    }
}

/// Evaluates a generated feature bottom-up against the columns of `d`.
pub fn eval_expr(expr: &TransformExpr, d: &Dataset) -> Result<Vec<f64>> {
    if expr.order() == 0 {
        return Err(Error::NotGenerated);
    }
    expr.eval_inner(d)
}

impl fmt::Display for TransformExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformExpr::Feature(name) => write!(f, "f:{name}"),
            TransformExpr::Unary(op, a) => write!(f, "{op}({a})"),
            TransformExpr::Binary(op, a, b) => write!(f, "{op}({a},{b})"),
        }
    }
}

/// Parses the prefix grammar produced by `Display`:
/// `expr := "f:" name | op "(" expr ")" | op "(" expr "," expr ")"`.
/// Feature names may not contain `(`, `)` or `,`.
impl FromStr for TransformExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (expr, rest) = parse_expr(s)?;
        if !rest.is_empty() {
            return Err(Error::ExprParse(format!("trailing input `{rest}`")));
        }
        Ok(expr)
    }
}

fn parse_expr(s: &str) -> Result<(TransformExpr, &str)> {
    if let Some(rest) = s.strip_prefix("f:") {
        let end = rest.find([',', ')', '(']).unwrap_or(rest.len());
        if end == 0 {
            return Err(Error::ExprParse("empty feature name".into()));
        }
        return Ok((TransformExpr::Feature(rest[..end].to_string()), &rest[end..]));
    }
    let open = s.find('(').ok_or_else(|| Error::ExprParse(format!("expected `(` in `{s}`")))?;
    let op = &s[..open];
    let (first, rest) = parse_expr(&s[open + 1..])?;
    if let Some(uop) = UnaryOp::from_token(op) {
        let rest = rest.strip_prefix(')').ok_or_else(|| Error::ExprParse(format!("expected `)` after {op}")))?;
        return Ok((TransformExpr::unary(uop, first), rest));
    }
    if let Some(bop) = BinaryOp::from_token(op) {
        let rest = rest.strip_prefix(',').ok_or_else(|| Error::ExprParse(format!("expected `,` in {op}")))?;
        let (second, rest) = parse_expr(rest)?;
        let rest = rest.strip_prefix(')').ok_or_else(|| Error::ExprParse(format!("expected `)` after {op}")))?;
        return Ok((TransformExpr::binary(bop, first, second), rest));
    }
    Err(Error::UnknownTransform(op.to_string()))
}
