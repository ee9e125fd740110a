use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use imbalance_core::bench::{
    build_speed_function, build_speed_surface, read_table1_csv, speedup_column, validate_partition,
    write_speed_plot, write_table1_csv, write_table2_csv, write_times_plot, MeasurementConfig, Table1Row,
};
use imbalance_core::fpm::{read_speed_function, read_surface, write_speed_function, write_surface};
use imbalance_core::partition::{
    brute_force_oracle, improvement_search, partition_general, partition_paired, predict_makespan, Improvement,
};
use imbalance_core::{
    ConditionReport, PartitionProblem, PartitionReport, ShapeReport, SizeRange, SpeedFunction, ThreadCap,
};

use crate::manifest::{ArtifactDir, RunManifest};
use crate::{BenchArgs, Cli, Command, Method, ModelArgs, UsageError};

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Session { seed: cli.seed, out_dir: cli.out_dir, json: cli.json };
    match cli.command {
        Command::Measure { bench, n, l, m } => measure(&ctx, &bench, n, l, m),
        Command::Check { model, balanced } => check(&ctx, &model, balanced),
        Command::Partition { model, total, processors, method, paired, general, oracle, allow_idle, oracle_cap } => {
            let method = match (paired, general, oracle) {
                (true, _, _) => Method::Paired,
                (_, true, _) => Method::General,
                (_, _, true) => Method::Oracle,
                _ => method,
            };
            partition(&ctx, &model, total, processors, method, allow_idle, oracle_cap)
        }
        Command::Predict { model, shares } => predict(&ctx, &model, &shares),
        Command::Validate { model, bench, n, l, m, offsets } => validate(&ctx, &model, &bench, n, l, m, &offsets),
        Command::Report { table } => report(&ctx, &table),
    }
}

struct Session {
    seed: u64,
    out_dir: Option<PathBuf>,
    json: bool,
}

impl Session {
    fn artifacts(&self, command: &str, inputs: &[(PathBuf, Vec<u8>)]) -> Result<Option<ArtifactDir>> {
        self.out_dir
            .as_deref()
            .map(|dir| ArtifactDir::create(dir, &RunManifest::new(command, inputs)))
            .transpose()
    }

    /// Measurement commands always write artifacts, to `.` by default.
    fn required_artifacts(&self, command: &str, inputs: &[(PathBuf, Vec<u8>)]) -> Result<ArtifactDir> {
        let dir = self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        ArtifactDir::create(&dir, &RunManifest::new(command, inputs))
    }

    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value)?);
        } else {
            print!("{}", text());
        }
        Ok(())
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_model(args: &ModelArgs) -> Result<(SpeedFunction, (PathBuf, Vec<u8>))> {
    let bytes = read_input(&args.model)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| UsageError(format!("{} is not UTF-8", args.model.display())))?;
    let model = match args.slice_n {
        Some(n) => read_surface(&text)
            .and_then(|s| s.slice(n))
            .with_context(|| format!("in {}", args.model.display()))?,
        None => read_speed_function(&text).with_context(|| format!("in {}", args.model.display()))?,
    };
    Ok((model, (args.model.clone(), bytes)))
}

fn measurement_config(ctx: &Session, b: &BenchArgs) -> MeasurementConfig {
    MeasurementConfig {
        teams: b.teams,
        threads_per_team: b.threads,
        min_reps: b.min_reps,
        max_reps: b.max_reps,
        rel_ci_target: b.rel_ci,
        steps_per_trial: b.steps,
        seed: ctx.seed,
        halo: b.halo,
        warmup: !b.no_warmup,
        cap: ThreadCap::from_env(),
    }
}

#[derive(Serialize)]
struct MeasureSummary {
    teams: usize,
    files: Vec<String>,
    unconverged: Vec<String>,
    manifest_sha256: String,
}

fn measure(ctx: &Session, b: &BenchArgs, n: SizeRange, l: usize, m: SizeRange) -> Result<()> {
    let cfg = measurement_config(ctx, b);
    cfg.validate()?;
    let mut out = ctx.required_artifacts("measure", &[])?;
    let comments = [out.reference()];
    let unconverged: Vec<String>;
    if n.len() == 1 {
        let build = build_speed_function(&cfg, n.start, l, m)?;
        for (i, f) in build.per_team.iter().enumerate() {
            out.write(&format!("team{i}.csv"), &write_speed_function(f, &comments))?;
            out.write(&format!("team{i}.dat"), &write_speed_plot(f))?;
        }
        out.write("avg.csv", &write_speed_function(&build.average, &comments))?;
        out.write("avg.dat", &write_speed_plot(&build.average))?;
        unconverged = build.unconverged.iter().map(|m| format!("m={m}")).collect();
    } else {
        let build = build_speed_surface(&cfg, n, m, l)?;
        for (i, s) in build.per_team.iter().enumerate() {
            out.write(&format!("team{i}.csv"), &write_surface(s, &comments))?;
        }
        out.write("avg.csv", &write_surface(&build.average, &comments))?;
        unconverged = build.unconverged.iter().map(|(n, m)| format!("n={n},m={m}")).collect();
    }
    if !unconverged.is_empty() {
        eprintln!(
            "warning: {} sizes stopped at {} repetitions above the {} CI target: {}",
            unconverged.len(),
            cfg.max_reps,
            cfg.rel_ci_target,
            unconverged.join(" ")
        );
    }
    let summary = MeasureSummary {
        teams: cfg.teams,
        files: out.written().iter().map(|p| p.display().to_string()).collect(),
        unconverged,
        manifest_sha256: out.manifest_sha().to_string(),
    };
    ctx.emit(&summary, || {
        let mut s = String::new();
        for f in &summary.files {
            let _ = writeln!(s, "wrote {f}");
        }
        s
    })
}

#[derive(Serialize)]
struct CheckOutput {
    label: String,
    balancing_optimal: bool,
    condition: ConditionReport,
    /// Absent for fewer than three samples.
    shape: Option<ShapeReport>,
    improvement: Option<Improvement>,
}

fn check(ctx: &Session, args: &ModelArgs, balanced: Option<u64>) -> Result<()> {
    let (model, input) = load_model(args)?;
    let condition = model.check_condition();
    let shape = model.classify_shape().ok();
    let improvement = match balanced {
        Some(b) => improvement_search(&model, b).map_err(|e| UsageError(format!("--balanced: {e}")))?,
        None => None,
    };
    let result = CheckOutput {
        label: model.label().to_string(),
        balancing_optimal: condition.satisfied,
        condition,
        shape,
        improvement,
    };
    if let Some(mut out) = ctx.artifacts("check", &[input])? {
        out.write("check.json", &serde_json::to_string_pretty(&result)?)?;
    }
    ctx.emit(&result, || {
        let mut s = String::new();
        if result.condition.satisfied {
            s.push_str("condition satisfied; balancing optimal\n");
        } else {
            let _ = writeln!(s, "condition violated at {} size pairs; balancing may be suboptimal", result.condition.violations.len());
            for (a, b) in result.condition.violations.iter().take(10) {
                let _ = writeln!(s, "  t({a}) > t({b})");
            }
            if let (Some((a, b)), Some(g)) = (result.condition.max_gain_pair, result.condition.max_gain_s) {
                let _ = writeln!(s, "largest gain: {g:.6} s between sizes {a} and {b}");
            }
        }
        match &result.shape {
            Some(shape) => {
                let _ = write!(s, "shape: {}", shape.classification);
                if let Some(p) = shape.peak_x {
                    let _ = write!(s, " (peak at {p})");
                }
                s.push('\n');
            }
            None => s.push_str("shape: not enough samples\n"),
        }
        if let Some(b) = balanced {
            match &result.improvement {
                Some(imp) => {
                    let _ = writeln!(
                        s,
                        "imbalance at {b}: offset {} takes {:.6} s instead of {:.6} s",
                        imp.offset, imp.imbalanced_time, imp.balanced_time
                    );
                }
                None => {
                    let _ = writeln!(s, "no symmetric imbalance beats the balanced share {b}");
                }
            }
        }
        s
    })
}

fn partition(
    ctx: &Session,
    args: &ModelArgs,
    total: u64,
    processors: usize,
    method: Method,
    allow_idle: bool,
    oracle_cap: u64,
) -> Result<()> {
    let (model, input) = load_model(args)?;
    let problem = PartitionProblem::new(total, processors, &model)?.allow_idle(allow_idle);
    let result = match method {
        Method::Paired => partition_paired(&problem)?,
        Method::General => partition_general(&problem)?,
        Method::Oracle => brute_force_oracle(&problem, oracle_cap)?,
    };
    let report = PartitionReport::new(&problem, &result)?;
    if let Some(mut out) = ctx.artifacts("partition", &[input])? {
        out.write("partition.json", &serde_json::to_string_pretty(&report)?)?;
    }
    ctx.emit(&report, || {
        let mut s = String::new();
        let _ = writeln!(s, "shares: {}", join(&report.shares));
        let times: Vec<String> = report.per_time_s.iter().map(|t| format!("{t:.6}")).collect();
        let _ = writeln!(s, "times [s]: {}", times.join(","));
        let _ = writeln!(s, "makespan: {:.6} s", report.makespan_s);
        if let Some(o) = report.offset {
            let _ = writeln!(s, "offset: {o}");
        }
        match (report.balanced_makespan_s, report.speedup) {
            (Some(b), Some(x)) => {
                let _ = writeln!(s, "balanced makespan: {b:.6} s\nspeedup: {x:.3}");
            }
            _ => s.push_str("balanced split not admissible\n"),
        }
        s
    })
}

#[derive(Serialize)]
struct Prediction {
    shares: Vec<u64>,
    per_time_s: Vec<f64>,
    makespan_s: f64,
}

fn predict(ctx: &Session, args: &ModelArgs, shares: &[u64]) -> Result<()> {
    let (model, input) = load_model(args)?;
    let p = predict_makespan(&model, shares)?;
    let result = Prediction { shares: p.shares, per_time_s: p.per_time, makespan_s: p.makespan };
    if let Some(mut out) = ctx.artifacts("predict", &[input])? {
        out.write("predict.json", &serde_json::to_string_pretty(&result)?)?;
    }
    ctx.emit(&result, || {
        let times: Vec<String> = result.per_time_s.iter().map(|t| format!("{t:.6}")).collect();
        format!("times [s]: {}\nmakespan: {:.6} s\n", times.join(","), result.makespan_s)
    })
}

fn validate(
    ctx: &Session,
    args: &ModelArgs,
    b: &BenchArgs,
    n: usize,
    l: usize,
    m: usize,
    offsets: &[i64],
) -> Result<()> {
    let (model, input) = load_model(args)?;
    let cfg = measurement_config(ctx, b);
    cfg.validate()?;
    let table = validate_partition(&cfg, &model, n, l, m, offsets)?;
    let mut out = ctx.required_artifacts("validate", &[input])?;
    let comments = [out.reference()];
    out.write("table1.csv", &write_table1_csv(&table.summary_rows(), &comments))?;
    out.write("table2.csv", &write_table2_csv(&table, &comments))?;
    out.write("times.dat", &format!("# {}\n{}", out.reference(), write_times_plot(&table)))?;
    out.write("validation.json", &serde_json::to_string_pretty(&table)?)?;
    ctx.emit(&table, || {
        let mut s = String::from("offset  theoretical_s  experimental_s  speedup  rel_error\n");
        for r in &table.rows {
            let _ = writeln!(
                s,
                "{:>6}  {:>13.4}  {:>14.4}  {:>7.3}  {:>8.1}%",
                r.offset,
                r.theoretical_s,
                r.experimental_s,
                r.speedup,
                100.0 * r.rel_error
            );
        }
        s
    })
}

#[derive(Serialize)]
struct ReportRow {
    #[serde(flatten)]
    row: Table1Row,
    computed_speedup: f64,
    matches: bool,
}

fn report(ctx: &Session, path: &Path) -> Result<()> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| UsageError(format!("{} is not UTF-8", path.display())))?;
    let rows = read_table1_csv(&text).with_context(|| format!("in {}", path.display()))?;
    let speedups = speedup_column(&rows).map_err(|e| UsageError(e.to_string()))?;
    let out_rows: Vec<ReportRow> = rows
        .iter()
        .zip(&speedups)
        .map(|(r, &s)| ReportRow { row: *r, computed_speedup: s, matches: round3(s) == round3(r.speedup) })
        .collect();
    if let Some(mut out) = ctx.artifacts("report", &[(path.to_path_buf(), bytes)])? {
        let recomputed: Vec<Table1Row> =
            rows.iter().zip(&speedups).map(|(r, &s)| Table1Row { speedup: s, ..*r }).collect();
        out.write("report.csv", &write_table1_csv(&recomputed, &[out.reference()]))?;
    }
    ctx.emit(&out_rows, || {
        let mut s = String::from("offset  theoretical_s  experimental_s  speedup\n");
        for r in &out_rows {
            let _ = writeln!(
                s,
                "{:>6}  {:>13.3}  {:>14.3}  {:>7.3}",
                r.row.offset, r.row.theoretical_s, r.row.experimental_s, r.computed_speedup
            );
        }
        s
    })
}

fn round3(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

fn join(xs: &[u64]) -> String {
    xs.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}
