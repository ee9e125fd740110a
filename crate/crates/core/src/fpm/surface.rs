use serde::{Deserialize, Serialize};

use super::{FpmError, SpeedFunction, SpeedSample};

/// Speed as a function of two size parameters `(n, m)`, sampled on a
/// rectangular grid.
///
/// `unit_cells` counts cells per unit of `n * m`; a slice at fixed `n`
/// therefore has `n * unit_cells` cells per unit of `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSurface {
    unit_cells: u64,
    granularity: u64,
    ns: Vec<u64>,
    ms: Vec<u64>,
    /// Row-major in `n`, then `m`. Each sample's `x` is its `m`.
    samples: Vec<SpeedSample>,
    label: String,
}

impl SpeedSurface {
    pub fn new(
        unit_cells: u64,
        granularity: u64,
        ns: Vec<u64>,
        ms: Vec<u64>,
        samples: Vec<SpeedSample>,
        label: impl Into<String>,
    ) -> Result<Self, FpmError> {
        if ns.is_empty() || ms.is_empty() {
            return Err(FpmError::InsufficientData { needed: 1, got: 0 });
        }
        if ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
            return Err(FpmError::Invalid("n values must be positive and strictly increasing".into()));
        }
        if samples.len() != ns.len() * ms.len() {
            return Err(FpmError::Invalid(format!(
                "expected {}x{} samples, got {}",
                ns.len(),
                ms.len(),
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x != ms[i % ms.len()] {
                return Err(FpmError::Invalid(format!(
                    "sample {i} has m={}, expected m={}",
                    s.x,
                    ms[i % ms.len()]
                )));
            }
        }
        let surface = Self { unit_cells, granularity, ns, ms, samples, label: label.into() };
        // Each row must itself be a valid speed function.
        for &n in &surface.ns {
            surface.slice(n)?;
        }
        Ok(surface)
    }

    pub fn unit_cells(&self) -> u64 {
        self.unit_cells
    }

    pub fn granularity(&self) -> u64 {
        self.granularity
    }

    pub fn ns(&self) -> &[u64] {
        &self.ns
    }

    pub fn ms(&self) -> &[u64] {
        &self.ms
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn samples(&self) -> &[SpeedSample] {
        &self.samples
    }

    pub fn get(&self, n: u64, m: u64) -> Option<&SpeedSample> {
        let i = self.ns.binary_search(&n).ok()?;
        let j = self.ms.binary_search(&m).ok()?;
        Some(&self.samples[i * self.ms.len() + j])
    }

    /// The one-parameter function `m -> s(fixed_n, m)`.
    pub fn slice(&self, fixed_n: u64) -> Result<SpeedFunction, FpmError> {
        let i = self.ns.binary_search(&fixed_n).map_err(|_| FpmError::OutOfRange {
            x: fixed_n,
            min: self.ns[0],
            max: self.ns[self.ns.len() - 1],
        })?;
        let row = self.samples[i * self.ms.len()..(i + 1) * self.ms.len()].to_vec();
        SpeedFunction::new(
            fixed_n * self.unit_cells,
            self.granularity,
            row,
            format!("{}@n={fixed_n}", self.label),
        )
    }

    /// Cell-wise mean of surfaces sharing one grid; see [`SpeedFunction::average`].
    pub fn average(surfaces: &[SpeedSurface]) -> Result<SpeedSurface, FpmError> {
        let first = surfaces.first().ok_or(FpmError::InsufficientData { needed: 1, got: 0 })?;
        if surfaces.iter().any(|s| s.ns != first.ns) {
            return Err(FpmError::Incompatible("surfaces sampled on different n grids".into()));
        }
        let mut samples = Vec::with_capacity(first.samples.len());
        for &n in &first.ns {
            let rows = surfaces.iter().map(|s| s.slice(n)).collect::<Result<Vec<_>, _>>()?;
            samples.extend_from_slice(SpeedFunction::average(&rows)?.samples());
        }
        let label = format!("avg({})", surfaces.iter().map(|s| s.label.as_str()).collect::<Vec<_>>().join(","));
        SpeedSurface::new(first.unit_cells, first.granularity, first.ns.clone(), first.ms.clone(), samples, label)
    }
}
