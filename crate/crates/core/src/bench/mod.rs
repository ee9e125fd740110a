//! Empirical construction of speed functions.
//!
//! Several teams of threads run the stencil workload at the same time, so
//! the measured speed of each team already reflects contention for memory
//! bandwidth and caches with the others. Each team is timed from the start
//! of a step to the end of its own compute; waiting for slower teams at the
//! per-step barrier is excluded from team times but included in the total.

pub mod stats;
mod table;

pub use table::{
    read_table1_csv, speedup_column, write_speed_plot, write_table1_csv, write_table2_csv, write_times_plot, Table1Row,
    ValidationRow, ValidationTable,
};

use std::fmt;
use std::str::FromStr;
use std::sync::Barrier;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::fpm::{FpmError, SpeedFunction, SpeedSample, SpeedSurface};
use crate::partition::{predict_makespan, PartitionError};
use crate::workload::{init_fields, InputFields, StencilDomain, StepRunner, ThreadCap, WorkloadError};
use stats::{Summary, CONFIDENCE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid measurement configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Model(#[from] FpmError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("team {team} produced checksum {got} after {expected} in an earlier repetition")]
    NonDeterministic { team: usize, expected: String, got: String },
    #[error("measurement invariant violated: {0}")]
    Invariant(String),
}

/// How to run and repeat simultaneous team measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub teams: usize,
    pub threads_per_team: usize,
    pub min_reps: usize,
    pub max_reps: usize,
    /// Stop once every team's CI half-width is at most this fraction of its mean.
    pub rel_ci_target: f64,
    pub steps_per_trial: usize,
    pub seed: u64,
    pub halo: usize,
    /// Run one untimed trial first.
    pub warmup: bool,
    pub cap: ThreadCap,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            teams: 4,
            threads_per_team: 1,
            min_reps: 3,
            max_reps: 30,
            rel_ci_target: 0.05,
            steps_per_trial: 5,
            seed: 42,
            halo: 1,
            warmup: true,
            cap: ThreadCap::from_env(),
        }
    }
}

impl MeasurementConfig {
    /// Fixed; kept as a method so reports can record it.
    pub fn confidence(&self) -> f64 {
        CONFIDENCE
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.teams == 0 || self.threads_per_team == 0 {
            return bad("teams and threads_per_team must be >= 1".into());
        }
        if self.min_reps < 3 || self.max_reps < self.min_reps {
            return bad(format!("need 3 <= min_reps <= max_reps, got {} and {}", self.min_reps, self.max_reps));
        }
        if !(self.rel_ci_target > 0.0 && self.rel_ci_target < 1.0) {
            return bad(format!("rel_ci_target must be in (0, 1), got {}", self.rel_ci_target));
        }
        if self.steps_per_trial == 0 {
            return bad("steps_per_trial must be >= 1".into());
        }
        if self.halo == 0 {
            return bad("halo must be >= 1".into());
        }
        self.cap.check(self.teams * self.threads_per_team)?;
        Ok(())
    }
}

/// An inclusive `start:stop:step` range of sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl SizeRange {
    pub fn new(start: usize, stop: usize, step: usize) -> Result<Self, BenchError> {
        if step == 0 {
            return Err(BenchError::Config("range step must be >= 1".into()));
        }
        if stop < start {
            return Err(BenchError::Config(format!("empty range {start}:{stop}:{step}")));
        }
        if (stop - start) % step != 0 {
            return Err(BenchError::Config(format!("range {start}:{stop}:{step} does not end on a step")));
        }
        Ok(Self { start, stop, step })
    }

    pub fn single(value: usize) -> Self {
        Self { start: value, stop: value, step: 1 }
    }

    pub fn values(&self) -> impl Iterator<Item = usize> {
        (self.start..=self.stop).step_by(self.step)
    }

    pub fn len(&self) -> usize {
        (self.stop - self.start) / self.step + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for SizeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl FromStr for SizeRange {
    type Err = BenchError;

    /// `start:stop:step`, or a single value.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| BenchError::Config(format!("invalid number '{p}' in range '{s}'")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts[..] {
            [v] => Ok(Self::single(parse(v)?)),
            [a, b, c] => Self::new(parse(a)?, parse(b)?, parse(c)?),
            _ => Err(BenchError::Config(format!("expected start:stop:step, got '{s}'"))),
        }
    }
}

/// Per-team grid extents `(n, m, l)`.
pub type Dims = (usize, usize, usize);

/// Repeated simultaneous timings of all teams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRun {
    pub dims: Vec<Dims>,
    /// `per_team_times[rep][team]`, seconds of compute.
    pub per_team_times: Vec<Vec<f64>>,
    /// Wall time of each repetition, inter-team barriers included.
    pub total_times: Vec<f64>,
    pub team_stats: Vec<Summary>,
    pub total_stats: Summary,
    /// Every team reached the relative CI target. A run that stopped at
    /// `max_reps` without reaching it is reported with `false`.
    pub converged: bool,
    pub checksums: Vec<String>,
}

impl MeasurementRun {
    pub fn repetitions(&self) -> usize {
        self.total_times.len()
    }
}

struct TeamState {
    initial: InputFields,
    runner: StepRunner,
}

struct TrialResult {
    compute_s: Vec<f64>,
    total_s: f64,
    checksums: Vec<String>,
}

/// Each team's time counts, per step, from the step's release (the earliest
/// start of any team) to its own finish. Teams that share cores and are not
/// scheduled right away are thereby charged for the wait; with a core per
/// thread this is the plain compute time.
fn run_trial(cfg: &MeasurementConfig, teams: &mut [TeamState]) -> Result<TrialResult, BenchError> {
    let barrier = Barrier::new(teams.len());
    let steps = cfg.steps_per_trial;
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = teams
            .iter_mut()
            .map(|team| {
                let barrier = &barrier;
                let mut fields = team.initial.clone();
                scope.spawn(move || -> Result<_, WorkloadError> {
                    let mut spans = Vec::with_capacity(steps);
                    for _ in 0..steps {
                        barrier.wait();
                        let t0 = Instant::now();
                        team.runner.advance(&mut fields)?;
                        spans.push((t0, Instant::now()));
                    }
                    barrier.wait();
                    Ok((spans, Instant::now(), fields.x.checksum()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("team thread panicked")).collect::<Vec<_>>()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let releases: Vec<Instant> = (0..steps)
        .map(|s| outcomes.iter().map(|o| o.0[s].0).min().expect("at least one team"))
        .collect();
    let compute_s = outcomes
        .iter()
        .map(|o| o.0.iter().zip(&releases).map(|(&(_, t1), &r)| (t1 - r).as_secs_f64()).sum())
        .collect();
    let last = outcomes.iter().map(|o| o.1).max().expect("at least one team");
    Ok(TrialResult {
        compute_s,
        total_s: (last - releases[0]).as_secs_f64(),
        checksums: outcomes.into_iter().map(|o| o.2).collect(),
    })
}

/// Times all teams together, each on its own sub-domain, repeating until the
/// confidence target or `max_reps` is reached.
pub fn measure_teams(cfg: &MeasurementConfig, dims: &[Dims]) -> Result<MeasurementRun, BenchError> {
    cfg.validate()?;
    if dims.len() != cfg.teams {
        return Err(BenchError::Config(format!("{} sub-domains given for {} teams", dims.len(), cfg.teams)));
    }
    let mut teams = dims
        .iter()
        .map(|&(n, m, l)| {
            let domain = StencilDomain::new(n, m, l, cfg.halo)?;
            Ok(TeamState {
                initial: init_fields(domain, cfg.seed),
                runner: StepRunner::new(domain, cfg.threads_per_team)?,
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;

    if cfg.warmup {
        run_trial(cfg, &mut teams)?;
    }

    let mut per_team_times = Vec::new();
    let mut total_times = Vec::new();
    let mut checksums: Option<Vec<String>> = None;
    loop {
        let trial = run_trial(cfg, &mut teams)?;
        match &checksums {
            None => checksums = Some(trial.checksums),
            Some(expected) => {
                for (team, (e, got)) in expected.iter().zip(trial.checksums).enumerate() {
                    if *e != got {
                        return Err(BenchError::NonDeterministic { team, expected: e.clone(), got });
                    }
                }
            }
        }
        per_team_times.push(trial.compute_s);
        total_times.push(trial.total_s);

        let reps = total_times.len();
        if reps < cfg.min_reps {
            continue;
        }
        let team_stats = team_summaries(&per_team_times, cfg.teams);
        let converged = team_stats.iter().all(|s| s.relative_halfwidth() <= cfg.rel_ci_target);
        if converged || reps >= cfg.max_reps {
            let total_stats = Summary::from_samples(&total_times).expect("min_reps >= 3");
            return Ok(MeasurementRun {
                dims: dims.to_vec(),
                per_team_times,
                total_times,
                team_stats,
                total_stats,
                converged,
                checksums: checksums.unwrap_or_default(),
            });
        }
    }
}

fn team_summaries(per_rep: &[Vec<f64>], teams: usize) -> Vec<Summary> {
    (0..teams)
        .map(|t| {
            let xs: Vec<f64> = per_rep.iter().map(|r| r[t]).collect();
            Summary::from_samples(&xs).expect("at least two repetitions")
        })
        .collect()
}

/// All teams process the same `(n, m, l)` sub-domain at once.
pub fn measure_simultaneous(cfg: &MeasurementConfig, dims: Dims) -> Result<MeasurementRun, BenchError> {
    measure_teams(cfg, &vec![dims; cfg.teams])
}

/// The same sub-domain measured with all teams running and with a single
/// team alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionComparison {
    pub simultaneous: MeasurementRun,
    pub separate: MeasurementRun,
}

pub fn compare_contention(cfg: &MeasurementConfig, dims: Dims) -> Result<ContentionComparison, BenchError> {
    let simultaneous = measure_simultaneous(cfg, dims)?;
    let alone = MeasurementConfig { teams: 1, ..cfg.clone() };
    let separate = measure_simultaneous(&alone, dims)?;
    Ok(ContentionComparison { simultaneous, separate })
}

/// Speed sample of one team from a run; the CI on speed is the time CI
/// mapped through `speed = cells / time` to first order.
fn team_sample(run: &MeasurementRun, team: usize, x: u64, cells: u64) -> SpeedSample {
    let s = &run.team_stats[team];
    let speed = cells as f64 / s.mean;
    SpeedSample {
        x,
        speed,
        ci_halfwidth: speed * s.relative_halfwidth(),
        repetitions: s.count as u32,
    }
}

/// Per-team and averaged speed functions over `m`, at fixed `n` and `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBuild {
    pub per_team: Vec<SpeedFunction>,
    pub average: SpeedFunction,
    pub runs: Vec<MeasurementRun>,
    /// Sizes whose measurement stopped at `max_reps` without converging.
    pub unconverged: Vec<u64>,
}

/// Workload sizes are counted in frames of `n * l` cells along `m`; the
/// granularity is the `m` step.
pub fn build_speed_function(
    cfg: &MeasurementConfig,
    n: usize,
    l: usize,
    m_range: SizeRange,
) -> Result<ModelBuild, BenchError> {
    cfg.validate()?;
    let frame = (n * l) as u64;
    let mut samples = vec![Vec::with_capacity(m_range.len()); cfg.teams];
    let mut runs = Vec::with_capacity(m_range.len());
    let mut unconverged = Vec::new();
    for m in m_range.values() {
        let run = measure_simultaneous(cfg, (n, m, l))?;
        for (team, s) in samples.iter_mut().enumerate() {
            s.push(team_sample(&run, team, m as u64, frame * m as u64));
        }
        if !run.converged {
            unconverged.push(m as u64);
        }
        runs.push(run);
    }
    let per_team = samples
        .into_iter()
        .enumerate()
        .map(|(team, s)| SpeedFunction::new(frame, m_range.step as u64, s, format!("team{team}")))
        .collect::<Result<Vec<_>, _>>()?;
    let average = SpeedFunction::average(&per_team)?.with_label("average");
    Ok(ModelBuild { per_team, average, runs, unconverged })
}

/// Per-team and averaged speed surfaces over `(n, m)` at fixed `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBuild {
    pub per_team: Vec<SpeedSurface>,
    pub average: SpeedSurface,
    pub unconverged: Vec<(u64, u64)>,
}

pub fn build_speed_surface(
    cfg: &MeasurementConfig,
    n_range: SizeRange,
    m_range: SizeRange,
    l: usize,
) -> Result<SurfaceBuild, BenchError> {
    cfg.validate()?;
    let ns: Vec<u64> = n_range.values().map(|n| n as u64).collect();
    let ms: Vec<u64> = m_range.values().map(|m| m as u64).collect();
    let mut samples = vec![Vec::with_capacity(ns.len() * ms.len()); cfg.teams];
    let mut unconverged = Vec::new();
    for &n in &ns {
        for &m in &ms {
            let run = measure_simultaneous(cfg, (n as usize, m as usize, l))?;
            for (team, s) in samples.iter_mut().enumerate() {
                s.push(team_sample(&run, team, m, n * m * l as u64));
            }
            if !run.converged {
                unconverged.push((n, m));
            }
        }
    }
    let per_team = samples
        .into_iter()
        .enumerate()
        .map(|(team, s)| {
            SpeedSurface::new(l as u64, m_range.step as u64, ns.clone(), ms.clone(), s, format!("team{team}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let average = SpeedSurface::average(&per_team)?;
    Ok(SurfaceBuild { per_team, average, unconverged })
}

/// Sub-domain extent along `m` of each team for a signed offset: even teams
/// get `balanced - offset`, odd teams `balanced + offset`.
pub fn team_shares(teams: usize, balanced: usize, offset: i64) -> Result<Vec<usize>, BenchError> {
    (0..teams)
        .map(|t| {
            let delta = if t % 2 == 0 { -offset } else { offset };
            let m = balanced as i64 + delta;
            if m < 3 {
                Err(BenchError::Config(format!("offset {offset} leaves team {t} with m={m}")))
            } else {
                Ok(m as usize)
            }
        })
        .collect()
}

/// Runs the real workload at each offset and sets the measured times beside
/// the model's prediction.
///
/// `n` and `l` must match the frame size of `model`. Offset 0 is always
/// measured and serves as the speedup baseline. Rows come back sorted by
/// offset.
pub fn validate_partition(
    cfg: &MeasurementConfig,
    model: &SpeedFunction,
    n: usize,
    l: usize,
    balanced_m: usize,
    offsets: &[i64],
) -> Result<ValidationTable, BenchError> {
    cfg.validate()?;
    if model.unit_cells() != (n * l) as u64 {
        return Err(FpmError::Incompatible(format!(
            "model frame is {} cells but n*l = {}",
            model.unit_cells(),
            n * l
        ))
        .into());
    }
    let mut ordered = vec![0i64];
    ordered.extend(offsets.iter().copied().filter(|&o| o != 0));

    // Check every prediction before spending time on measurements.
    let mut predictions = Vec::with_capacity(ordered.len());
    for &offset in &ordered {
        let shares = team_shares(cfg.teams, balanced_m, offset)?;
        let frames: Vec<u64> = shares.iter().map(|&m| m as u64).collect();
        predictions.push((shares, predict_makespan(model, &frames)?));
    }

    let mut rows = Vec::with_capacity(ordered.len());
    for (&offset, (shares, predicted)) in ordered.iter().zip(predictions) {
        let dims: Vec<Dims> = shares.iter().map(|&m| (n, m, l)).collect();
        let run = measure_teams(cfg, &dims)?;
        let per_team_s: Vec<f64> = run.team_stats.iter().map(|s| s.mean).collect();
        let max_team = per_team_s.iter().copied().fold(0.0, f64::max);
        if run.total_stats.mean < max_team {
            return Err(BenchError::Invariant(format!(
                "offset {offset}: total {} s is below the slowest team's {max_team} s",
                run.total_stats.mean
            )));
        }
        rows.push(ValidationRow {
            offset,
            shares: shares.iter().map(|&m| m as u64).collect(),
            theoretical_s: predicted.makespan,
            predicted_team_s: predicted.per_time,
            experimental_s: run.total_stats.mean,
            experimental_ci_s: run.total_stats.ci_halfwidth,
            per_team_s,
            per_team_ci_s: run.team_stats.iter().map(|s| s.ci_halfwidth).collect(),
            speedup: 0.0,
            theoretical_speedup: 0.0,
            rel_error: (predicted.makespan - run.total_stats.mean).abs() / run.total_stats.mean,
            converged: run.converged,
            repetitions: run.repetitions(),
        });
    }
    let (base_exp, base_theo) = (rows[0].experimental_s, rows[0].theoretical_s);
    for row in &mut rows {
        row.speedup = base_exp / row.experimental_s;
        row.theoretical_speedup = base_theo / row.theoretical_s;
    }
    rows.sort_by_key(|r| r.offset);
    Ok(ValidationTable { n, l, balanced_m, teams: cfg.teams, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(teams: usize) -> MeasurementConfig {
        MeasurementConfig {
            teams,
            threads_per_team: 1,
            min_reps: 3,
            max_reps: 4,
            rel_ci_target: 0.5,
            steps_per_trial: 2,
            seed: 7,
            halo: 1,
            warmup: false,
            cap: ThreadCap::new(16),
        }
    }

    #[test]
    fn config_validation() {
        assert!(quick(2).validate().is_ok());
        assert!(MeasurementConfig { min_reps: 2, ..quick(1) }.validate().is_err());
        assert!(MeasurementConfig { max_reps: 2, ..quick(1) }.validate().is_err());
        assert!(MeasurementConfig { rel_ci_target: 1.0, ..quick(1) }.validate().is_err());
        assert!(MeasurementConfig { steps_per_trial: 0, ..quick(1) }.validate().is_err());
        assert!(matches!(
            MeasurementConfig { teams: 4, threads_per_team: 5, ..quick(1) }.validate(),
            Err(BenchError::Workload(WorkloadError::ThreadCap { requested: 20, cap: 16 }))
        ));
    }

    #[test]
    fn size_range_parsing() {
        let r: SizeRange = "16:64:8".parse().unwrap();
        assert_eq!(r.values().collect::<Vec<_>>(), vec![16, 24, 32, 40, 48, 56, 64]);
        assert_eq!(r.len(), 7);
        assert_eq!(r.to_string(), "16:64:8");
        assert_eq!("12".parse::<SizeRange>().unwrap().values().collect::<Vec<_>>(), vec![12]);
        assert!("64:16:8".parse::<SizeRange>().is_err());
        assert!("16:20:8".parse::<SizeRange>().is_err());
        assert!("16:64:0".parse::<SizeRange>().is_err());
        assert!("16:64".parse::<SizeRange>().is_err());
    }

    #[test]
    fn single_team_run() {
        let run = measure_simultaneous(&quick(1), (6, 8, 6)).unwrap();
        assert!(run.repetitions() >= 3 && run.repetitions() <= 4);
        assert_eq!(run.team_stats.len(), 1);
        assert!(run.total_stats.mean >= run.team_stats[0].mean);
    }

    #[test]
    fn teams_share_checksums_for_equal_sizes() {
        let run = measure_simultaneous(&quick(3), (6, 8, 6)).unwrap();
        assert!(run.checksums.windows(2).all(|w| w[0] == w[1]));
        for (rep, total) in run.per_team_times.iter().zip(&run.total_times) {
            assert!(rep.iter().all(|t| t <= total));
        }
    }

    #[test]
    fn speed_times_mean_time_is_cell_count() {
        let build = build_speed_function(&quick(2), 6, 5, SizeRange::new(8, 16, 4).unwrap()).unwrap();
        assert_eq!(build.per_team.len(), 2);
        assert_eq!(build.average.unit_cells(), 30);
        assert_eq!(build.average.granularity(), 4);
        for (i, m) in [8u64, 12, 16].into_iter().enumerate() {
            for team in 0..2 {
                let s = build.per_team[team].samples()[i];
                let mean = build.runs[i].team_stats[team].mean;
                let cells = (6 * 5) as f64 * m as f64;
                assert!((s.speed * mean - cells).abs() <= cells * 1e-12);
            }
        }
    }

    #[test]
    fn one_row_surface_matches_function_grid() {
        let cfg = quick(1);
        let surface = build_speed_surface(&cfg, SizeRange::single(6), SizeRange::new(8, 12, 4).unwrap(), 5).unwrap();
        let slice = surface.average.slice(6).unwrap();
        assert_eq!(slice.unit_cells(), 30);
        assert_eq!(slice.xs().collect::<Vec<_>>(), vec![8, 12]);
    }

    #[test]
    fn team_share_layout() {
        assert_eq!(team_shares(4, 120, 8).unwrap(), vec![112, 128, 112, 128]);
        assert_eq!(team_shares(2, 120, -4).unwrap(), vec![124, 116]);
        assert!(team_shares(2, 4, 2).is_err());
    }

    #[test]
    fn validation_table_shape() {
        let cfg = quick(2);
        let model = build_speed_function(&cfg, 6, 5, SizeRange::new(8, 16, 4).unwrap()).unwrap().average;
        let table = validate_partition(&cfg, &model, 6, 5, 12, &[4, -4]).unwrap();
        assert_eq!(table.rows.iter().map(|r| r.offset).collect::<Vec<_>>(), vec![-4, 0, 4]);
        assert_eq!(table.rows[1].speedup, 1.0);
        assert_eq!(table.rows[2].shares, vec![8, 16]);
        assert_eq!(table.rows[0].shares, vec![16, 8]);
        for row in &table.rows {
            assert!(row.experimental_s >= row.per_team_s.iter().copied().fold(0.0, f64::max));
        }
        assert!(matches!(
            validate_partition(&cfg, &model, 6, 5, 12, &[8]),
            Err(BenchError::Partition(_))
        ));
        assert!(validate_partition(&cfg, &model, 7, 5, 12, &[0]).is_err());
    }
}
