//! Empirical functional performance models.
//!
//! A [`SpeedFunction`] maps a workload size, counted in integer workload
//! units, to a processing speed in cells per second. Nothing is fitted: the
//! function is the set of measured points, evaluated by piecewise-linear
//! interpolation between neighbours and never extrapolated.
//!
//! The execution time of `x` units is `t(x) = x * unit_cells / s(x)`. Load
//! balancing is guaranteed optimal only when `s(x) / x` never increases with
//! `x` (equivalently, when `t(x)` never decreases); [`SpeedFunction::check_condition`]
//! scans for pairs of sizes where that fails.

mod io;
mod surface;

pub use io::{read_speed_function, read_surface, write_speed_function, write_surface};
pub use surface::SpeedSurface;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Errors raised while building or evaluating speed functions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FpmError {
    #[error("workload size must be positive, got {0}")]
    Domain(u64),
    #[error("workload size {x} outside sampled range [{min}, {max}]")]
    OutOfRange { x: u64, min: u64, max: u64 },
    #[error("at least {needed} samples required, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("incompatible models: {0}")]
    Incompatible(String),
    #[error("invalid speed function: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One measured point of a speed function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    /// Workload size in units.
    pub x: u64,
    /// Mean speed in cells per second.
    pub speed: f64,
    /// Half-width of the 95% confidence interval on `speed`.
    pub ci_halfwidth: f64,
    pub repetitions: u32,
}

impl SpeedSample {
    /// A point with no recorded uncertainty, counted as a single repetition.
    pub fn exact(x: u64, speed: f64) -> Self {
        Self { x, speed, ci_halfwidth: 0.0, repetitions: 1 }
    }

    fn validate(&self) -> Result<(), FpmError> {
        if self.x == 0 {
            return Err(FpmError::Invalid("sample x must be > 0".into()));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(FpmError::Invalid(format!("speed at x={} must be finite and > 0", self.x)));
        }
        if !(self.ci_halfwidth.is_finite() && self.ci_halfwidth >= 0.0) {
            return Err(FpmError::Invalid(format!("ci_halfwidth at x={} must be >= 0", self.x)));
        }
        if self.repetitions == 0 {
            return Err(FpmError::Invalid(format!("repetitions at x={} must be >= 1", self.x)));
        }
        Ok(())
    }
}

/// Speed of one processing unit as a function of workload size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedFunction {
    unit_cells: u64,
    granularity: u64,
    samples: Vec<SpeedSample>,
    label: String,
}

impl SpeedFunction {
    pub fn new(
        unit_cells: u64,
        granularity: u64,
        samples: Vec<SpeedSample>,
        label: impl Into<String>,
    ) -> Result<Self, FpmError> {
        if unit_cells == 0 {
            return Err(FpmError::Invalid("unit_cells must be >= 1".into()));
        }
        if granularity == 0 {
            return Err(FpmError::Invalid("granularity must be >= 1".into()));
        }
        if samples.is_empty() {
            return Err(FpmError::InsufficientData { needed: 1, got: 0 });
        }
        for s in &samples {
            s.validate()?;
        }
        for w in samples.windows(2) {
            if w[1].x <= w[0].x {
                return Err(FpmError::Invalid(format!(
                    "x values must be strictly increasing ({} then {})",
                    w[0].x, w[1].x
                )));
            }
            if (w[1].x - w[0].x) % granularity != 0 {
                return Err(FpmError::Invalid(format!(
                    "step {} -> {} is not a multiple of granularity {granularity}",
                    w[0].x, w[1].x
                )));
            }
        }
        let label = label.into();
        if label.contains('\n') {
            return Err(FpmError::Invalid("label must be a single line".into()));
        }
        Ok(Self { unit_cells, granularity, samples, label })
    }

    /// Convenience constructor from `(x, speed)` pairs.
    pub fn from_points(
        unit_cells: u64,
        granularity: u64,
        points: &[(u64, f64)],
        label: impl Into<String>,
    ) -> Result<Self, FpmError> {
        let samples = points.iter().map(|&(x, s)| SpeedSample::exact(x, s)).collect();
        Self::new(unit_cells, granularity, samples, label)
    }

    pub fn unit_cells(&self) -> u64 {
        self.unit_cells
    }

    pub fn granularity(&self) -> u64 {
        self.granularity
    }

    pub fn samples(&self) -> &[SpeedSample] {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn min_x(&self) -> u64 {
        self.samples[0].x
    }

    pub fn max_x(&self) -> u64 {
        self.samples[self.samples.len() - 1].x
    }

    pub fn xs(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().map(|s| s.x)
    }

    pub fn is_sampled(&self, x: u64) -> bool {
        self.sample_index(x).is_some()
    }

    fn sample_index(&self, x: u64) -> Option<usize> {
        self.samples.binary_search_by_key(&x, |s| s.x).ok()
    }

    /// Every speed multiplied by `factor`; used to check scale invariance.
    pub fn scaled(&self, factor: f64) -> Result<Self, FpmError> {
        let samples = self
            .samples
            .iter()
            .map(|s| SpeedSample {
                speed: s.speed * factor,
                ci_halfwidth: s.ci_halfwidth * factor,
                ..*s
            })
            .collect();
        Self::new(self.unit_cells, self.granularity, samples, self.label.clone())
    }

    /// Speed at `x`: the sample itself when `x` was measured, otherwise the
    /// linear interpolation between the two bracketing samples.
    pub fn eval_speed(&self, x: u64) -> Result<f64, FpmError> {
        if x == 0 {
            return Err(FpmError::Domain(x));
        }
        if x < self.min_x() || x > self.max_x() {
            return Err(FpmError::OutOfRange { x, min: self.min_x(), max: self.max_x() });
        }
        match self.samples.binary_search_by_key(&x, |s| s.x) {
            Ok(i) => Ok(self.samples[i].speed),
            Err(i) => {
                let (lo, hi) = (&self.samples[i - 1], &self.samples[i]);
                let frac = (x - lo.x) as f64 / (hi.x - lo.x) as f64;
                Ok(lo.speed + (hi.speed - lo.speed) * frac)
            }
        }
    }

    /// Execution time in seconds of `x` units; an idle unit (`x == 0`) takes
    /// no time.
    pub fn eval_time(&self, x: u64) -> Result<f64, FpmError> {
        if x == 0 {
            return Ok(0.0);
        }
        let speed = self.eval_speed(x)?;
        Ok((x * self.unit_cells) as f64 / speed)
    }

    /// Time at the `i`-th sample, with no interpolation involved.
    fn sample_time(&self, i: usize) -> f64 {
        let s = &self.samples[i];
        (s.x * self.unit_cells) as f64 / s.speed
    }

    /// Scans every ordered pair of sampled sizes `x < x'` for
    /// `s(x)/x < s(x')/x'`, i.e. a larger workload finishing sooner.
    pub fn check_condition(&self) -> ConditionReport {
        let times: Vec<f64> = (0..self.samples.len()).map(|i| self.sample_time(i)).collect();
        let mut violations = Vec::new();
        let mut best: Option<((u64, u64), f64)> = None;
        for i in 0..times.len() {
            for j in i + 1..times.len() {
                // s(x)/x < s(x')/x'  <=>  t(x) > t(x')
                if times[i] > times[j] {
                    let pair = (self.samples[i].x, self.samples[j].x);
                    let gain = times[i] - times[j];
                    violations.push(pair);
                    if best.map_or(true, |(_, g)| gain > g) {
                        best = Some((pair, gain));
                    }
                }
            }
        }
        ConditionReport {
            satisfied: violations.is_empty(),
            violations,
            max_gain_pair: best.map(|(pair, _)| pair),
            max_gain_s: best.map(|(_, g)| g),
        }
    }

    /// Classifies the sampled curve against the classical FPM shape
    /// restrictions.
    pub fn classify_shape(&self) -> Result<ShapeReport, FpmError> {
        let n = self.samples.len();
        if n < 3 {
            return Err(FpmError::InsufficientData { needed: 3, got: n });
        }
        let speeds: Vec<f64> = self.samples.iter().map(|s| s.speed).collect();
        let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);

        if non_increasing(&speeds) {
            return Ok(ShapeReport {
                classification: ShapeClass::MonotonicallyDecreasing,
                peak_x: None,
            });
        }

        let peak = speeds
            .iter()
            .enumerate()
            .fold(0, |best, (i, &s)| if s > speeds[best] { i } else { best });
        let rising = &self.samples[..=peak];
        let strictly_increasing = rising.windows(2).all(|w| w[1].speed > w[0].speed);
        // Discrete concavity: slopes never increase along the rising part.
        // On a uniform grid this is the same as non-positive second differences.
        let slopes: Vec<f64> = rising
            .windows(2)
            .map(|w| (w[1].speed - w[0].speed) / (w[1].x - w[0].x) as f64)
            .collect();
        let concave = slopes.windows(2).all(|w| w[1] <= w[0]);
        // A ray through the origin crosses the rising part at most once:
        // s(x)/x must be strictly decreasing there.
        let ray_ok = rising
            .windows(2)
            .all(|w| w[1].speed / (w[1].x as f64) < w[0].speed / (w[0].x as f64));
        let falling_ok = non_increasing(&speeds[peak..]);

        let classification = if strictly_increasing && concave && ray_ok && falling_ok {
            ShapeClass::IncreasingConcaveThenDecreasing
        } else {
            ShapeClass::Other
        };
        let peak_x = (classification == ShapeClass::IncreasingConcaveThenDecreasing)
            .then(|| self.samples[peak].x);
        Ok(ShapeReport { classification, peak_x })
    }

    /// Per-size arithmetic mean of several functions measured on the same
    /// grid.
    ///
    /// Confidence half-widths are averaged too. That is an approximation, not a
    /// pooled interval; the averaged model only feeds the partitioner.
    pub fn average(fs: &[SpeedFunction]) -> Result<SpeedFunction, FpmError> {
        let first = fs.first().ok_or(FpmError::InsufficientData { needed: 1, got: 0 })?;
        for f in &fs[1..] {
            if f.unit_cells != first.unit_cells || f.granularity != first.granularity {
                return Err(FpmError::Incompatible(format!(
                    "'{}' has unit_cells={} granularity={}, '{}' has unit_cells={} granularity={}",
                    first.label, first.unit_cells, first.granularity, f.label, f.unit_cells, f.granularity
                )));
            }
            if !f.xs().eq(first.xs()) {
                return Err(FpmError::Incompatible(format!(
                    "'{}' and '{}' are sampled on different grids",
                    first.label, f.label
                )));
            }
        }
        let k = fs.len() as f64;
        let samples = (0..first.samples.len())
            .map(|i| {
                // Sorted before summing so the result does not depend on argument order.
                let mut speeds: Vec<f64> = fs.iter().map(|f| f.samples[i].speed).collect();
                let mut halfwidths: Vec<f64> = fs.iter().map(|f| f.samples[i].ci_halfwidth).collect();
                speeds.sort_by(f64::total_cmp);
                halfwidths.sort_by(f64::total_cmp);
                SpeedSample {
                    x: first.samples[i].x,
                    speed: speeds.iter().sum::<f64>() / k,
                    ci_halfwidth: halfwidths.iter().sum::<f64>() / k,
                    repetitions: fs.iter().map(|f| f.samples[i].repetitions).sum(),
                }
            })
            .collect();
        let label = format!("avg({})", fs.iter().map(|f| f.label.as_str()).collect::<Vec<_>>().join(","));
        SpeedFunction::new(first.unit_cells, first.granularity, samples, label)
    }
}

/// Outcome of scanning a speed function for pairs that break the
/// balancing-safety condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub satisfied: bool,
    /// Pairs `(x, x')`, `x < x'`, where the larger workload runs faster.
    pub violations: Vec<(u64, u64)>,
    /// The violating pair with the largest `t(x) - t(x')`.
    pub max_gain_pair: Option<(u64, u64)>,
    pub max_gain_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeClass {
    MonotonicallyDecreasing,
    IncreasingConcaveThenDecreasing,
    Other,
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeClass::MonotonicallyDecreasing => "monotonically-decreasing",
            ShapeClass::IncreasingConcaveThenDecreasing => "increasing-concave-then-decreasing",
            ShapeClass::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub classification: ShapeClass,
    pub peak_x: Option<u64>,
}
