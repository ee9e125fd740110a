//! Plain-text CSV encodings of speed functions and surfaces.
//!
//! ```text
//! # unit_cells=15360 granularity=8 label=team0
//! x,speed,ci_halfwidth,repetitions
//! 112,1436742,0,1
//! 128,1418579,0,1
//! ```
//!
//! Surfaces use the same first line and the column header
//! `n,m,speed,ci_halfwidth,repetitions`, rows ordered by `n` then `m`.
//! Any further line starting with `#` is a comment.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{FpmError, SpeedFunction, SpeedSample, SpeedSurface};

const FUNCTION_COLUMNS: &str = "x,speed,ci_halfwidth,repetitions";
const SURFACE_COLUMNS: &str = "n,m,speed,ci_halfwidth,repetitions";

fn header(unit_cells: u64, granularity: u64, label: &str) -> String {
    format!("# unit_cells={unit_cells} granularity={granularity} label={label}\n")
}

fn push_comments(out: &mut String, comments: &[String]) {
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
}

/// Serializes `f`; `comments` are appended as trailing `#` lines.
pub fn write_speed_function(f: &SpeedFunction, comments: &[String]) -> String {
    let mut out = header(f.unit_cells(), f.granularity(), f.label());
    out.push_str(FUNCTION_COLUMNS);
    out.push('\n');
    for s in f.samples() {
        let _ = writeln!(out, "{},{},{},{}", s.x, s.speed, s.ci_halfwidth, s.repetitions);
    }
    push_comments(&mut out, comments);
    out
}

pub fn write_surface(g: &SpeedSurface, comments: &[String]) -> String {
    let mut out = header(g.unit_cells(), g.granularity(), g.label());
    out.push_str(SURFACE_COLUMNS);
    out.push('\n');
    let per_row = g.ms().len();
    for (i, s) in g.samples().iter().enumerate() {
        let n = g.ns()[i / per_row];
        let _ = writeln!(out, "{n},{},{},{},{}", s.x, s.speed, s.ci_halfwidth, s.repetitions);
    }
    push_comments(&mut out, comments);
    out
}

pub fn read_speed_function(text: &str) -> Result<SpeedFunction, FpmError> {
    let (meta, rows) = split(text, FUNCTION_COLUMNS)?;
    let mut samples = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let [x, speed, ci, reps] = fixed_fields::<4>(line, &fields)?;
        samples.push(SpeedSample {
            x: field(line, "x", x)?,
            speed: field(line, "speed", speed)?,
            ci_halfwidth: field(line, "ci_halfwidth", ci)?,
            repetitions: field(line, "repetitions", reps)?,
        });
    }
    SpeedFunction::new(meta.unit_cells, meta.granularity, samples, meta.label).map_err(|e| at(meta.line, e))
}

pub fn read_surface(text: &str) -> Result<SpeedSurface, FpmError> {
    let (meta, rows) = split(text, SURFACE_COLUMNS)?;
    let mut ns: Vec<u64> = Vec::new();
    let mut ms: Vec<u64> = Vec::new();
    let mut samples = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let [n, m, speed, ci, reps] = fixed_fields::<5>(line, &fields)?;
        let n: u64 = field(line, "n", n)?;
        let m: u64 = field(line, "m", m)?;
        if ns.last() != Some(&n) {
            if ns.last().is_some_and(|&last| n < last) {
                return Err(FpmError::Parse { line, msg: "rows must be ordered by n".into() });
            }
            ns.push(n);
        }
        if ns.len() == 1 {
            ms.push(m);
        }
        samples.push(SpeedSample {
            x: m,
            speed: field(line, "speed", speed)?,
            ci_halfwidth: field(line, "ci_halfwidth", ci)?,
            repetitions: field(line, "repetitions", reps)?,
        });
    }
    SpeedSurface::new(meta.unit_cells, meta.granularity, ns, ms, samples, meta.label).map_err(|e| at(meta.line, e))
}

struct Meta {
    unit_cells: u64,
    granularity: u64,
    label: String,
    line: usize,
}

type Rows<'a> = Vec<(usize, Vec<&'a str>)>;

fn at(line: usize, e: FpmError) -> FpmError {
    match e {
        FpmError::Parse { .. } => e,
        other => FpmError::Parse { line, msg: other.to_string() },
    }
}

fn split<'a>(text: &'a str, columns: &str) -> Result<(Meta, Rows<'a>), FpmError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (line, first) = lines
        .next()
        .ok_or(FpmError::Parse { line: 1, msg: "empty file, expected '# unit_cells=...' header".into() })?;
    let meta = parse_header(line, first)?;
    let (cline, cols) = lines
        .next()
        .ok_or(FpmError::Parse { line: 2, msg: format!("missing column header '{columns}'") })?;
    if cols.trim() != columns {
        return Err(FpmError::Parse { line: cline, msg: format!("expected column header '{columns}', got '{cols}'") });
    }
    let rows = lines
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i, l.split(',').map(str::trim).collect()))
        .collect::<Vec<_>>();
    if rows.is_empty() {
        return Err(FpmError::Parse { line: cline + 1, msg: "no data rows".into() });
    }
    Ok((meta, rows))
}

fn parse_header(line: usize, text: &str) -> Result<Meta, FpmError> {
    let err = |msg: String| FpmError::Parse { line, msg };
    let body = text
        .strip_prefix('#')
        .ok_or_else(|| err(format!("expected '# unit_cells=<int> granularity=<int> label=<string>', got '{text}'")))?
        .trim_start();
    let (head, label) = match body.find("label=") {
        Some(pos) => (&body[..pos], body[pos + "label=".len()..].to_string()),
        None => return Err(err("header is missing label=".into())),
    };
    let mut unit_cells = None;
    let mut granularity = None;
    for kv in head.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("malformed header entry '{kv}'")))?;
        let v: u64 = v.parse().map_err(|_| err(format!("{k} must be a non-negative integer, got '{v}'")))?;
        match k {
            "unit_cells" => unit_cells = Some(v),
            "granularity" => granularity = Some(v),
            _ => return Err(err(format!("unknown header key '{k}'"))),
        }
    }
    Ok(Meta {
        unit_cells: unit_cells.ok_or_else(|| err("header is missing unit_cells=".into()))?,
        granularity: granularity.ok_or_else(|| err("header is missing granularity=".into()))?,
        label,
        line,
    })
}

fn fixed_fields<'a, const N: usize>(line: usize, fields: &[&'a str]) -> Result<[&'a str; N], FpmError> {
    fields
        .try_into()
        .map_err(|_| FpmError::Parse { line, msg: format!("expected {N} fields, got {}", fields.len()) })
}

fn field<T: FromStr>(line: usize, name: &str, raw: &str) -> Result<T, FpmError> {
    raw.parse()
        .map_err(|_| FpmError::Parse { line, msg: format!("invalid {name} '{raw}'") })
}
