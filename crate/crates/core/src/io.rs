//! Measure and potential files, and a small deterministic JSON writer.
//!
//! Measure files look like
//! `{"space": {"type": "euclidean", "dim": 1}, "atoms": [{"point": [0.5], "mass": 1}]}`;
//! sphere points have `dim + 1` coordinates and finite spaces use
//! `{"type": "finite", "matrix": [[...]]}` with `{"index": k}` atoms.
//! Potential files are `{"kind": "table", "points": [...], "values": [...]}`
//! or `{"kind": "piecewise1d", "breakpoints": [...], "values": [...],
//! "slopes": [left, right]}`; `"inf"` is accepted wherever a number is.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::duality::PotentialFunction;
use crate::error::{HkError, Result};
use crate::measure::DiscreteMeasure;
use crate::space::{GroundSpace, Point};

/// A JSON value whose objects keep insertion order and whose numbers are
/// printed deterministically.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    /// Shortest round-trip formatting; non-finite values become strings.
    Num(f64),
    /// 17 significant digits.
    Precise(f64),
    Int(i64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj<K: Into<String>>(fields: impl IntoIterator<Item = (K, Json)>) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn nums(v: &[f64]) -> Json {
        Json::Arr(v.iter().map(|x| Json::Num(*x)).collect())
    }

    pub fn str(s: impl Into<String>) -> Json {
        Json::Str(s.into())
    }

    fn write_num(out: &mut String, x: f64, precise: bool) {
        if x.is_nan() {
            out.push_str("\"nan\"");
        } else if x == f64::INFINITY {
            out.push_str("\"inf\"");
        } else if x == f64::NEG_INFINITY {
            out.push_str("\"-inf\"");
        } else if precise {
            let _ = write!(out, "{x:.16e}");
        } else {
            let _ = write!(out, "{x:?}");
        }
    }

    fn write_str(out: &mut String, s: &str) {
        out.push('"');
        for c in s.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\t' => out.push_str("\\t"),
                '\r' => out.push_str("\\r"),
                c if (c as u32) < 0x20 => {
                    let _ = write!(out, "\\u{:04x}", c as u32);
                }
                c => out.push(c),
            }
        }
        out.push('"');
    }

    fn write(&self, out: &mut String, indent: usize) {
        let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat(' ').take(2 * n));
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Num(x) => Self::write_num(out, *x, false),
            Json::Precise(x) => Self::write_num(out, *x, true),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Str(s) => Self::write_str(out, s),
            Json::Arr(items) => {
                // Arrays of scalars stay on one line.
                if items.iter().all(|i| !matches!(i, Json::Arr(_) | Json::Obj(_))) {
                    out.push('[');
                    for (n, i) in items.iter().enumerate() {
                        if n > 0 {
                            out.push_str(", ");
                        }
                        i.write(out, indent);
                    }
                    out.push(']');
                    return;
                }
                out.push_str("[\n");
                for (n, i) in items.iter().enumerate() {
                    pad(out, indent + 1);
                    i.write(out, indent + 1);
                    out.push_str(if n + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(out, indent);
                out.push(']');
            }
            Json::Obj(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push_str("{\n");
                for (n, (k, v)) in fields.iter().enumerate() {
                    pad(out, indent + 1);
                    Self::write_str(out, k);
                    out.push_str(": ");
                    v.write(out, indent + 1);
                    out.push_str(if n + 1 < fields.len() { ",\n" } else { "\n" });
                }
                pad(out, indent);
                out.push('}');
            }
        }
    }

    /// Pretty-printed text with a trailing newline.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.write(&mut s, 0);
        s.push('\n');
        s
    }
}

fn parse_err(context: impl Into<String>, message: impl Into<String>) -> HkError {
    HkError::Parse { context: context.into(), message: message.into() }
}

fn parse_json(text: &str, what: &str) -> Result<Value> {
    serde_json::from_str(text)
        .map_err(|e| parse_err(format!("{what} line {} column {}", e.line(), e.column()), e.to_string()))
}

fn number(v: &Value, ctx: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| parse_err(ctx, "number out of range")),
        Value::String(s) if s == "inf" || s == "+inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        _ => Err(parse_err(ctx, format!("expected a number, found {v}"))),
    }
}

fn field<'a>(v: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| parse_err(ctx, format!("missing field \"{key}\"")))
}

fn array<'a>(v: &'a Value, ctx: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_err(ctx, "expected an array"))
}

fn numbers(v: &Value, ctx: &str) -> Result<Vec<f64>> {
    array(v, ctx)?.iter().enumerate().map(|(i, x)| number(x, &format!("{ctx}[{i}]"))).collect()
}

fn usize_of(v: &Value, ctx: &str) -> Result<usize> {
    v.as_u64().map(|u| u as usize).ok_or_else(|| parse_err(ctx, format!("expected a nonnegative integer, found {v}")))
}

pub fn space_from_json(v: &Value, ctx: &str) -> Result<GroundSpace> {
    let kind = field(v, "type", ctx)?.as_str().ok_or_else(|| parse_err(format!("{ctx}.type"), "expected a string"))?;
    let wrap = |e: HkError, f: &str| parse_err(format!("{ctx}.{f}"), e.to_string());
    match kind {
        "euclidean" => {
            GroundSpace::euclidean(usize_of(field(v, "dim", ctx)?, &format!("{ctx}.dim"))?).map_err(|e| wrap(e, "dim"))
        }
        "sphere" => {
            GroundSpace::sphere(usize_of(field(v, "dim", ctx)?, &format!("{ctx}.dim"))?).map_err(|e| wrap(e, "dim"))
        }
        "finite" => {
            let rows = array(field(v, "matrix", ctx)?, &format!("{ctx}.matrix"))?;
            let m = rows
                .iter()
                .enumerate()
                .map(|(i, r)| numbers(r, &format!("{ctx}.matrix[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            GroundSpace::finite(m).map_err(|e| wrap(e, "matrix"))
        }
        other => Err(parse_err(format!("{ctx}.type"), format!("unknown space type \"{other}\""))),
    }
}

pub fn space_to_json(space: &GroundSpace) -> Json {
    match space {
        GroundSpace::Euclidean { dim } => Json::obj([("type", Json::str("euclidean")), ("dim", Json::Int(*dim as i64))]),
        GroundSpace::Sphere { dim } => Json::obj([("type", Json::str("sphere")), ("dim", Json::Int(*dim as i64))]),
        GroundSpace::Finite(m) => Json::obj([
            ("type", Json::str("finite")),
            ("matrix", Json::Arr(m.rows().iter().map(|r| Json::nums(r)).collect())),
        ]),
    }
}

fn point_from_json(v: &Value, space: &GroundSpace, ctx: &str) -> Result<Point> {
    let p = match space {
        GroundSpace::Finite(_) => Point::Index(usize_of(field(v, "index", ctx)?, &format!("{ctx}.index"))?),
        _ => Point::Coords(numbers(field(v, "point", ctx)?, &format!("{ctx}.point"))?),
    };
    space.validate(&p).map_err(|e| parse_err(ctx, e.to_string()))?;
    Ok(p)
}

pub fn point_to_json(p: &Point) -> Json {
    match p {
        Point::Coords(c) => Json::nums(c),
        Point::Index(i) => Json::Int(*i as i64),
    }
}

fn point_field(p: &Point) -> (&'static str, Json) {
    match p {
        Point::Coords(_) => ("point", point_to_json(p)),
        Point::Index(_) => ("index", point_to_json(p)),
    }
}

pub fn parse_measure(text: &str) -> Result<DiscreteMeasure> {
    let v = parse_json(text, "measure")?;
    let space = space_from_json(field(&v, "space", "measure")?, "space")?;
    let atoms = array(field(&v, "atoms", "measure")?, "atoms")?;
    let mut out = Vec::with_capacity(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        let ctx = format!("atoms[{i}]");
        let p = point_from_json(a, &space, &ctx)?;
        let m = number(field(a, "mass", &ctx)?, &format!("{ctx}.mass"))?;
        if !(m >= 0.0) || !m.is_finite() {
            return Err(parse_err(format!("{ctx}.mass"), format!("mass must be finite and nonnegative, found {m}")));
        }
        out.push((p, m));
    }
    DiscreteMeasure::new(space, out)
}

pub fn measure_to_json(mu: &DiscreteMeasure) -> Json {
    let atoms = mu
        .atoms()
        .iter()
        .map(|a| {
            let (k, p) = point_field(&a.point);
            Json::obj([(k, p), ("mass", Json::Precise(a.mass))])
        })
        .collect();
    Json::obj([("space", space_to_json(mu.space())), ("atoms", Json::Arr(atoms))])
}

pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)?;
    parse_measure(&text).map_err(|e| match e {
        HkError::Parse { context, message } => parse_err(format!("{}: {context}", path.display()), message),
        e => parse_err(path.display().to_string(), e.to_string()),
    })
}

pub fn write_measure(path: &Path, mu: &DiscreteMeasure) -> Result<()> {
    std::fs::write(path, measure_to_json(mu).render())?;
    Ok(())
}

/// Reads a potential; table points are interpreted in `space`.
pub fn parse_potential(text: &str, space: &GroundSpace) -> Result<PotentialFunction> {
    let v = parse_json(text, "potential")?;
    let kind = field(&v, "kind", "potential")?.as_str().ok_or_else(|| parse_err("kind", "expected a string"))?;
    let wrap = |e: HkError| parse_err("potential", e.to_string());
    match kind {
        "table" => {
            let pts = array(field(&v, "points", "potential")?, "points")?;
            let points = pts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let ctx = format!("points[{i}]");
                    let p = match p {
                        Value::Array(_) => Point::Coords(numbers(p, &ctx)?),
                        _ => Point::Index(usize_of(p, &ctx)?),
                    };
                    space.validate(&p).map_err(|e| parse_err(&ctx, e.to_string()))?;
                    Ok(p)
                })
                .collect::<Result<Vec<_>>>()?;
            let values = numbers(field(&v, "values", "potential")?, "values")?;
            PotentialFunction::table(space.clone(), points, values).map_err(wrap)
        }
        "piecewise1d" => {
            if space.ambient_dim() != Some(1) || matches!(space, GroundSpace::Sphere { .. }) {
                return Err(parse_err("kind", "piecewise1d potentials need a one-dimensional euclidean space"));
            }
            let breakpoints = numbers(field(&v, "breakpoints", "potential")?, "breakpoints")?;
            let values = numbers(field(&v, "values", "potential")?, "values")?;
            let slopes = match v.get("slopes") {
                None => (0.0, 0.0),
                Some(s) => {
                    let s = numbers(s, "slopes")?;
                    if s.len() != 2 {
                        return Err(parse_err("slopes", "expected [left, right]"));
                    }
                    (s[0], s[1])
                }
            };
            PotentialFunction::piecewise1d(breakpoints, values, slopes).map_err(wrap)
        }
        other => Err(parse_err("kind", format!("unknown potential kind \"{other}\""))),
    }
}

pub fn potential_to_json(f: &PotentialFunction) -> Json {
    match f {
        PotentialFunction::Table { points, values, .. } => Json::obj([
            ("kind", Json::str("table")),
            ("points", Json::Arr(points.iter().map(point_to_json).collect())),
            ("values", Json::nums(values)),
        ]),
        PotentialFunction::Piecewise1d { breakpoints, values, outer_slopes } => Json::obj([
            ("kind", Json::str("piecewise1d")),
            ("breakpoints", Json::nums(breakpoints)),
            ("values", Json::nums(values)),
            ("slopes", Json::nums(&[outer_slopes.0, outer_slopes.1])),
        ]),
    }
}

pub fn read_potential(path: &Path, space: &GroundSpace) -> Result<PotentialFunction> {
    let text = std::fs::read_to_string(path)?;
    parse_potential(&text, space).map_err(|e| match e {
        HkError::Parse { context, message } => parse_err(format!("{}: {context}", path.display()), message),
        e => parse_err(path.display().to_string(), e.to_string()),
    })
}
