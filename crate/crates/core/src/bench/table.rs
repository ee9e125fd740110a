use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fpm::{FpmError, SpeedFunction};

/// One offset of a partition validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub offset: i64,
    pub shares: Vec<u64>,
    pub theoretical_s: f64,
    pub predicted_team_s: Vec<f64>,
    pub experimental_s: f64,
    pub experimental_ci_s: f64,
    pub per_team_s: Vec<f64>,
    pub per_team_ci_s: Vec<f64>,
    /// Measured time at offset 0 over measured time here.
    pub speedup: f64,
    pub theoretical_speedup: f64,
    /// `|theoretical - experimental| / experimental`.
    pub rel_error: f64,
    pub converged: bool,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTable {
    pub n: usize,
    pub l: usize,
    pub balanced_m: usize,
    pub teams: usize,
    pub rows: Vec<ValidationRow>,
}

impl ValidationTable {
    pub fn summary_rows(&self) -> Vec<Table1Row> {
        self.rows
            .iter()
            .map(|r| Table1Row {
                offset: r.offset,
                theoretical_s: r.theoretical_s,
                experimental_s: r.experimental_s,
                speedup: r.speedup,
            })
            .collect()
    }

    /// Row with the smallest measured total time.
    pub fn best(&self) -> &ValidationRow {
        self.rows
            .iter()
            .min_by(|a, b| a.experimental_s.total_cmp(&b.experimental_s))
            .expect("validation table has at least the zero offset")
    }
}

/// Offset, predicted and measured makespan, and measured speedup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub offset: i64,
    pub theoretical_s: f64,
    pub experimental_s: f64,
    pub speedup: f64,
}

const TABLE1_HEADER: &str = "offset,theoretical_s,experimental_s,speedup";

fn comment_lines(out: &mut String, comments: &[String]) {
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
}

pub fn write_table1_csv(rows: &[Table1Row], comments: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, comments);
    out.push_str(TABLE1_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.offset, r.theoretical_s, r.experimental_s, r.speedup);
    }
    out
}

pub fn read_table1_csv(text: &str) -> Result<Vec<Table1Row>, FpmError> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != TABLE1_HEADER {
                return Err(FpmError::Parse { line: lineno, msg: format!("expected header '{TABLE1_HEADER}'") });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(FpmError::Parse { line: lineno, msg: format!("expected 4 fields, got {}", fields.len()) });
        }
        let num = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|_| FpmError::Parse { line: lineno, msg: format!("invalid number '{}'", fields[i]) })
        };
        rows.push(Table1Row {
            offset: fields[0]
                .parse()
                .map_err(|_| FpmError::Parse { line: lineno, msg: format!("invalid offset '{}'", fields[0]) })?,
            theoretical_s: num(1)?,
            experimental_s: num(2)?,
            speedup: num(3)?,
        });
    }
    if !seen_header {
        return Err(FpmError::Parse { line: 1, msg: "missing header".into() });
    }
    Ok(rows)
}

/// Speedups relative to the offset-0 row: `experimental(0) / experimental(offset)`.
pub fn speedup_column(rows: &[Table1Row]) -> Result<Vec<f64>, FpmError> {
    let base = rows
        .iter()
        .find(|r| r.offset == 0)
        .ok_or_else(|| FpmError::Invalid("no row with offset 0".into()))?;
    Ok(rows.iter().map(|r| base.experimental_s / r.experimental_s).collect())
}

/// Per-team measured times for every offset, one row per (offset, team).
pub fn write_table2_csv(table: &ValidationTable, comments: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, comments);
    out.push_str("offset,team,m,predicted_s,measured_s,ci_halfwidth_s\n");
    for r in &table.rows {
        for team in 0..r.shares.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.offset, team, r.shares[team], r.predicted_team_s[team], r.per_team_s[team], r.per_team_ci_s[team]
            );
        }
    }
    out
}

/// Whitespace-separated `offset team0 team1 ... total` columns for plotting.
pub fn write_times_plot(table: &ValidationTable) -> String {
    let mut out = String::from("# offset");
    for t in 0..table.teams {
        let _ = write!(out, " team{t}_s");
    }
    out.push_str(" total_s predicted_s\n");
    let mut rows: Vec<&ValidationRow> = table.rows.iter().collect();
    rows.sort_by_key(|r| r.offset);
    for r in rows {
        let _ = write!(out, "{}", r.offset);
        for t in &r.per_team_s {
            let _ = write!(out, " {t}");
        }
        let _ = writeln!(out, " {} {}", r.experimental_s, r.theoretical_s);
    }
    out
}

/// Two columns, `x speed`, for plotting.
pub fn write_speed_plot(f: &SpeedFunction) -> String {
    let mut out = format!("# {}\n# x speed\n", f.label());
    for s in f.samples() {
        let _ = writeln!(out, "{} {}", s.x, s.speed);
    }
    out
}
