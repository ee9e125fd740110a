//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imbalance_core::bench::stats::Summary;
use imbalance_core::bench::{read_table1_csv, speedup_column, ValidationTable};
use imbalance_core::fpm::read_speed_function;
use imbalance_core::partition::{
    balanced, brute_force_oracle, partition_general, partition_paired, predict_makespan, DEFAULT_ORACLE_CAP,
};
use imbalance_core::workload::{max_stencil, run_team_workload, GridField};
use imbalance_core::{PartitionError, PartitionProblem, SpeedFunction, StencilDomain, ThreadCap};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_model(rng: &mut ChaCha8Rng, steps: u64) -> SpeedFunction {
    let g = [1u64, 2, 4, 8][rng.gen_range(0..4)];
    let unit = rng.gen_range(1..=20_000u64);
    let points: Vec<(u64, f64)> = (1..=steps).map(|k| (k * g, rng.gen_range(1.0e5..2.0e6))).collect();
    SpeedFunction::from_points(unit, g, &points, "random").unwrap()
}

/// `s(x) = x * q(x)` with `q` a non-increasing multiple of 2^-10: every
/// speed is exact and `t(x)` is non-decreasing after rounding.
fn condition_model(rng: &mut ChaCha8Rng, steps: u64) -> SpeedFunction {
    let g = [1u64, 2, 4, 8][rng.gen_range(0..4)];
    let unit = rng.gen_range(1..=20_000u64);
    let mut q: u64 = rng.gen_range(1024..=65_536);
    let points: Vec<(u64, f64)> = (1..=steps)
        .map(|k| {
            if rng.gen_bool(0.5) {
                q -= rng.gen_range(0..=q.min(4096) - 1);
            }
            let x = k * g;
            (x, x as f64 * (q as f64 / 1024.0))
        })
        .collect();
    SpeedFunction::from_points(unit, g, &points, "condition").unwrap()
}

fn reference_prediction() -> Result<String, String> {
    // s(120) is recovered from the balanced theoretical time: 120 * 15360 / 1.486.
    let csv = "# unit_cells=15360 granularity=8 label=team-average\n\
               x,speed,ci_halfwidth,repetitions\n\
               112,1436742,0,1\n120,1240377,0,1\n128,1418579,0,1\n";
    let model = read_speed_function(csv).map_err(|e| e.to_string())?;
    let pred = predict_makespan(&model, &[128, 112, 128, 112]).map_err(|e| e.to_string())?;
    ensure((pred.makespan - 1.386).abs() <= 0.001, || format!("imbalanced makespan {}", pred.makespan))?;

    let problem = PartitionProblem::new(480, 4, &model).map_err(|e| e.to_string())?;
    let bal = balanced(&problem).map_err(|e| e.to_string())?;
    ensure((bal.makespan - 1.486).abs() <= 0.001, || format!("balanced makespan {}", bal.makespan))?;

    let paired = partition_paired(&problem).map_err(|e| e.to_string())?;
    let speedup = bal.makespan / paired.makespan;
    ensure(paired.offset == Some(8), || format!("offset {:?}", paired.offset))?;
    ensure((speedup - 1.072).abs() <= 0.002, || format!("speedup {speedup}"))?;
    Ok(format!(
        "t(128,112,128,112)={:.4} s, balanced={:.4} s, offset=8, speedup={speedup:.4}",
        pred.makespan, bal.makespan
    ))
}

fn round3(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

fn speedup_arithmetic() -> Result<String, String> {
    let table = "offset,theoretical_s,experimental_s,speedup\n\
                 0,1.486,1.548,1.000\n4,1.470,1.470,1.053\n6,1.401,1.374,1.127\n\
                 7,1.422,1.361,1.137\n8,1.386,1.364,1.135\n9,1.398,1.348,1.148\n\
                 10,1.397,1.352,1.145\n11,1.429,1.372,1.129\n12,1.402,1.368,1.131\n";
    let rows = read_table1_csv(table).map_err(|e| e.to_string())?;
    let computed = speedup_column(&rows).map_err(|e| e.to_string())?;
    let nine = rows.iter().find(|r| r.offset == 9).unwrap();
    let nine_speedup = computed[rows.iter().position(|r| r.offset == 9).unwrap()];
    ensure(round3(nine_speedup) == 1148, || format!("offset 9 gives {nine_speedup}"))?;
    let mismatches: Vec<String> = rows
        .iter()
        .zip(&computed)
        .filter(|(r, &s)| round3(s) != round3(r.speedup))
        .map(|(r, &s)| format!("offset {}: {:.3} vs tabulated {:.3}", r.offset, s, r.speedup))
        .collect();
    ensure(mismatches.is_empty(), || {
        format!(
            "{}/{} rows match; {} (the tabulated column is not reproducible from the 3-decimal times)",
            rows.len() - mismatches.len(),
            rows.len(),
            mismatches.join(", ")
        )
    })?;
    Ok(format!("9/9 rows, offset 9 -> {:.3} from {:.3}", nine_speedup, nine.experimental_s))
}

fn balanced_optimality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7431);
    for case in 0..500 {
        let p = rng.gen_range(2..=4usize);
        let k = rng.gen_range(1..=40 / p as u64);
        let steps = k * p as u64;
        let model = condition_model(&mut rng, steps);
        ensure(model.check_condition().satisfied, || format!("case {case}: generator broke the condition"))?;
        let problem = PartitionProblem::new(steps * model.granularity(), p, &model).unwrap();
        let bal = balanced(&problem).map_err(|e| e.to_string())?;
        let best = brute_force_oracle(&problem, DEFAULT_ORACLE_CAP).map_err(|e| e.to_string())?;
        ensure(best.makespan == bal.makespan, || {
            format!("case {case}: oracle {:?} beats balanced {}", best.shares, bal.makespan)
        })?;
    }
    Ok("500/500 oracle makespans equal the balanced makespan".into())
}

fn oracle_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0eac);
    let (mut even, mut infeasible) = (0, 0);
    for case in 0..500 {
        let p = rng.gen_range(1..=4usize);
        let steps = if p % 2 == 0 { p as u64 * rng.gen_range(1..=48 / p as u64) } else { rng.gen_range(1..=48) };
        let sampled = rng.gen_range(steps.div_ceil(p as u64)..=steps);
        let model = random_model(&mut rng, sampled);
        let idle = rng.gen_bool(0.3);
        let problem = PartitionProblem::new(steps * model.granularity(), p, &model).unwrap().allow_idle(idle);
        let general = partition_general(&problem);
        let oracle = brute_force_oracle(&problem, DEFAULT_ORACLE_CAP);
        match (&general, &oracle) {
            (Ok(g), Ok(o)) => ensure(g.makespan == o.makespan, || {
                format!("case {case}: general {} vs oracle {}", g.makespan, o.makespan)
            })?,
            (Err(PartitionError::Infeasible(_)), Err(PartitionError::Infeasible(_))) => infeasible += 1,
            _ => return Err(format!("case {case}: general {general:?} vs oracle {oracle:?}")),
        }
        if p % 2 == 0 {
            if let (Ok(g), Ok(paired)) = (&general, partition_paired(&problem)) {
                even += 1;
                ensure(g.makespan <= paired.makespan, || {
                    format!("case {case}: general {} > paired {}", g.makespan, paired.makespan)
                })?;
            }
        }
    }
    Ok(format!("500/500 equal ({infeasible} infeasible on both sides), general <= paired on {even} even-p cases"))
}

fn scale_invariance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1e);
    for case in 0..100 {
        let p = [2usize, 4][rng.gen_range(0..2)];
        let k = rng.gen_range(1..=12u64);
        let model = random_model(&mut rng, 2 * k);
        let total = k * p as u64 * model.granularity();
        let problem = PartitionProblem::new(total, p, &model).unwrap();
        let paired = partition_paired(&problem).map_err(|e| e.to_string())?.shares;
        let general = partition_general(&problem).map_err(|e| e.to_string())?.shares;
        for _ in 0..5 {
            let a = 10f64.powf(rng.gen_range(-2.0..2.0));
            let scaled = model.scaled(a).map_err(|e| e.to_string())?;
            let sp = PartitionProblem::new(total, p, &scaled).unwrap();
            ensure(partition_paired(&sp).unwrap().shares == paired, || format!("case {case}: paired differs at a={a}"))?;
            ensure(partition_general(&sp).unwrap().shares == general, || format!("case {case}: general differs at a={a}"))?;
        }
    }
    Ok("100 instances x 5 factors, identical shares".into())
}

fn workload_determinism() -> Result<String, String> {
    let domain = StencilDomain::new(16, 64, 16, 1).unwrap();
    let mut seen = Vec::new();
    for threads in [1, 2, 4] {
        for _ in 0..3 {
            let run = run_team_workload(domain, 42, threads, 3, ThreadCap::new(4)).map_err(|e| e.to_string())?;
            seen.push(run.checksum);
        }
    }
    ensure(seen.iter().all(|c| *c == seen[0]), || format!("checksums differ: {seen:?}"))?;
    Ok(format!("9 runs, checksum {}", &seen[0][..16]))
}

fn stencil_correctness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57e9);
    let domain = StencilDomain::new(8, 8, 8, 1).unwrap();
    let side = 10;
    for field in 0..50 {
        let values: Vec<f64> = (0..side * side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at = |i: isize, j: isize, k: isize| values[(((j + 1) * side + i + 1) * side + k + 1) as usize];
        let input = GridField::from_fn(domain, at);
        let out = max_stencil(&input).map_err(|e| e.to_string())?;
        for j in 0..8 {
            for i in 0..8 {
                for k in 0..8 {
                    let naive = [
                        at(i, j, k),
                        at(i - 1, j, k),
                        at(i + 1, j, k),
                        at(i, j - 1, k),
                        at(i, j + 1, k),
                        at(i, j, k - 1),
                        at(i, j, k + 1),
                    ]
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                    ensure(out.get(i, j, k) == naive, || format!("field {field} cell ({i},{j},{k})"))?;
                }
            }
        }
    }
    Ok("50 fields x 512 cells match".into())
}

fn statistics() -> Result<String, String> {
    // Reference values from exact rational arithmetic and a reference t quantile.
    let reference: [(usize, f64, f64, f64); 4] = [
        (3, 1.3366333333333333, 0.13936822928247794, 0.34620987417617977),
        (5, 1.3688, 0.12634225342299388, 0.15687462752726808),
        (10, 1.4380600000000001, 0.14220387711545235, 0.1017265255528561),
        (30, 1.4450766666666668, 0.1420321301273263, 0.05303566900636865),
    ];
    let samples: Vec<f64> = (0..30)
        .map(|i| {
            let x = 1.25 + 0.0371 * ((7 * i) % 13) as f64 - 0.0123 * ((5 * i) % 4) as f64;
            (x * 1e6).round() / 1e6
        })
        .collect();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let mut worst: f64 = 0.0;
    for (n, mean, sd, hw) in reference {
        let s = Summary::from_samples(&samples[..n]).unwrap();
        for (what, got, want) in [
            ("mean", s.mean, mean),
            ("stddev", s.stddev, sd),
            ("half-width", s.ci_halfwidth, hw),
            ("lower", s.lower(), mean - hw),
            ("upper", s.upper(), mean + hw),
        ] {
            worst = worst.max(rel(got, want));
            ensure(rel(got, want) <= 1e-12, || format!("n={n} {what}: {got} vs {want}"))?;
        }
    }
    Ok(format!("reps 3,5,10,30; worst relative error {worst:.1e}"))
}

fn imbalance(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_imbalance"))
        .args(args)
        .current_dir(dir)
        .env("IMBALANCE_THREAD_CAP", "2")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("imbalance {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let bench = ["--teams", "2", "--threads", "1", "--steps", "3", "--max-reps", "10"];
    let shape = ["--n", "96", "--l", "96"];

    let mut measure = vec!["--out-dir", "model", "measure", "--m", "176:208:8"];
    measure.extend(bench);
    measure.extend(shape);
    imbalance(dir, &measure)?;

    let check: serde_json::Value =
        serde_json::from_str(&imbalance(dir, &["--json", "check", "model/avg.csv", "--balanced", "192"])?)
            .map_err(|e| e.to_string())?;
    let violation = !check["improvement"].is_null();

    let mut validate = vec!["--out-dir", "val", "validate", "model/avg.csv", "--m", "192", "--offsets", "0,8,-8"];
    validate.extend(bench);
    validate.extend(shape);
    imbalance(dir, &validate)?;
    let json = std::fs::read_to_string(dir.join("val/validation.json")).map_err(|e| e.to_string())?;
    let table: ValidationTable = serde_json::from_str(&json).map_err(|e| e.to_string())?;

    let worst = table.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    for r in &table.rows {
        ensure(r.rel_error <= 0.10, || {
            format!("offset {}: predicted {:.4} s, measured {:.4} s", r.offset, r.theoretical_s, r.experimental_s)
        })?;
        let slowest = r.per_team_s.iter().copied().fold(0.0, f64::max);
        ensure(r.experimental_s >= slowest, || format!("offset {}: total below slowest team", r.offset))?;
    }
    let base = table.rows.iter().find(|r| r.offset == 0).unwrap();
    let best = table.rows.iter().filter(|r| r.offset != 0).min_by(|a, b| a.experimental_s.total_cmp(&b.experimental_s));
    let verdict = match (violation, best) {
        (true, Some(best)) => {
            ensure(best.experimental_s - best.experimental_ci_s <= base.experimental_s + base.experimental_ci_s, || {
                format!("best offset {} at {:.4} s is slower than balanced {:.4} s", best.offset, best.experimental_s, base.experimental_s)
            })?;
            format!("violation at 192, best offset {} within CI of balanced", best.offset)
        }
        _ => "no violation at 192".to_string(),
    };
    Ok(format!("offsets -8,0,8: worst error {:.1}%, total >= slowest team, {verdict}", 100.0 * worst))
}

fn main() {
    let criteria: [(u32, &str, Duration, Check); 9] = [
        (1, "reference-value prediction", Duration::from_secs(1), reference_prediction),
        (2, "table speedup arithmetic", Duration::from_secs(1), speedup_arithmetic),
        (3, "balanced optimal under the condition", Duration::from_secs(30), balanced_optimality),
        (4, "general partitioner matches oracle", Duration::from_secs(60), oracle_equivalence),
        (5, "scale invariance", Duration::from_secs(10), scale_invariance),
        (6, "workload determinism", Duration::from_secs(30), workload_determinism),
        (7, "max stencil correctness", Duration::from_secs(10), stencil_correctness),
        (8, "statistics correctness", Duration::from_secs(1), statistics),
        (9, "end-to-end pipeline", Duration::from_secs(600), end_to_end),
    ];
    // Numeric arguments select criteria by id; anything else is ignored.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed > limit {
                Err(format!("{detail}; took longer than {}s", limit.as_secs()))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("acceptance {id} {name}: PASS ({detail}; {:.2}s)", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("acceptance {id} {name}: FAIL ({detail}; {:.2}s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all selected acceptance criteria passed");
}
