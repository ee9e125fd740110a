//! A deterministic MPDATA-like stencil pipeline used as the measured workload.
//!
//! Each time step reads five input fields and produces one output field,
//! which replaces the first input for the next step. The step runs five
//! dependent stages over an `n x m x l` grid:
//!
//! 1. a 7-point diffusion of `x` weighted by `u`,
//! 2. a 7-point directional average of the result weighted by `v` and `w`,
//! 3. the 7-point neighbourhood maximum,
//! 4. the 7-point neighbourhood minimum,
//! 5. a pointwise blend `mn + h * (mx - mn)`.
//!
//! Only stage 3 is a real MPDATA stage; the others are surrogates with a
//! comparable memory-traffic profile and no physical meaning.
//!
//! Storage is `m`-major so that splitting a team's threads along `m` hands
//! each worker one contiguous slab. Every cell is computed with a fixed
//! operation order, so results are bit-identical for any thread count.

mod golden;

pub use golden::{GoldenRecord, GoldenParseError};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable bounding the total number of worker threads.
pub const THREAD_CAP_ENV: &str = "IMBALANCE_THREAD_CAP";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("halo of input field '{0}' has not been filled")]
    HaloNotFilled(&'static str),
    #[error("{requested} threads requested but the cap is {cap} (set {THREAD_CAP_ENV} to raise it)")]
    ThreadCap { requested: usize, cap: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mismatched domains: {0}")]
    DomainMismatch(String),
}

/// Upper bound on concurrently running worker threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadCap(usize);

impl ThreadCap {
    pub fn new(cap: usize) -> Self {
        Self(cap.max(1))
    }

    /// `IMBALANCE_THREAD_CAP` if set and valid, otherwise the number of
    /// hardware threads.
    pub fn from_env() -> Self {
        std::env::var(THREAD_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map(Self::new)
            .unwrap_or_else(Self::hardware)
    }

    pub fn hardware() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn check(self, requested: usize) -> Result<(), WorkloadError> {
        if requested > self.0 {
            Err(WorkloadError::ThreadCap { requested, cap: self.0 })
        } else {
            Ok(())
        }
    }
}

/// Extents of a 3-D grid plus the ghost-zone width around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StencilDomain {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub halo: usize,
}

impl StencilDomain {
    pub fn new(n: usize, m: usize, l: usize, halo: usize) -> Result<Self, WorkloadError> {
        if n < 3 || m < 3 || l < 3 {
            return Err(WorkloadError::InvalidDomain(format!("extents must be >= 3, got {n}x{m}x{l}")));
        }
        if halo < 1 {
            return Err(WorkloadError::InvalidDomain("halo must be >= 1".into()));
        }
        Ok(Self { n, m, l, halo })
    }

    /// Interior cell count.
    pub fn cells(&self) -> u64 {
        (self.n * self.m * self.l) as u64
    }

    fn stride_i(&self) -> usize {
        self.l + 2 * self.halo
    }

    /// Cells in one padded `j` plane.
    fn stride_j(&self) -> usize {
        (self.n + 2 * self.halo) * self.stride_i()
    }

    fn padded_len(&self) -> usize {
        (self.m + 2 * self.halo) * self.stride_j()
    }

    /// Flat index of signed coordinates; halo cells have negative or
    /// past-the-end coordinates.
    fn index(&self, i: isize, j: isize, k: isize) -> usize {
        let h = self.halo as isize;
        ((j + h) as usize) * self.stride_j() + ((i + h) as usize) * self.stride_i() + (k + h) as usize
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m && self.l == other.l
    }
}

/// A dense double-precision field covering the domain and its halo.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    domain: StencilDomain,
    values: Vec<f64>,
    halo_filled: bool,
}

impl GridField {
    /// All zeros; the halo counts as unfilled until [`GridField::fill_halo`].
    pub fn zeros(domain: StencilDomain) -> Self {
        Self { domain, values: vec![0.0; domain.padded_len()], halo_filled: false }
    }

    /// Every cell, halo included, from `f(i, j, k)` in signed coordinates.
    pub fn from_fn(domain: StencilDomain, f: impl Fn(isize, isize, isize) -> f64) -> Self {
        let h = domain.halo as isize;
        let mut field = Self::zeros(domain);
        for j in -h..domain.m as isize + h {
            for i in -h..domain.n as isize + h {
                for k in -h..domain.l as isize + h {
                    field.values[domain.index(i, j, k)] = f(i, j, k);
                }
            }
        }
        field.halo_filled = true;
        field
    }

    pub fn domain(&self) -> &StencilDomain {
        &self.domain
    }

    pub fn halo_filled(&self) -> bool {
        self.halo_filled
    }

    pub fn get(&self, i: isize, j: isize, k: isize) -> f64 {
        self.values[self.domain.index(i, j, k)]
    }

    /// Writes one cell; writing into the halo does not mark it filled.
    pub fn set(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let idx = self.domain.index(i, j, k);
        self.values[idx] = v;
    }

    /// Fills the ghost zone by copying the nearest interior cell.
    pub fn fill_halo(&mut self) {
        let d = self.domain;
        let (sj, h) = (d.stride_j(), d.halo);
        for plane in self.values[h * sj..(h + d.m) * sj].chunks_mut(sj) {
            fill_plane_halo(&d, plane);
        }
        fill_j_halo(&d, &mut self.values);
        self.halo_filled = true;
    }

    /// SHA-256 over the interior values, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        self.hash_interior(&mut hasher);
        hex::encode(hasher.finalize())
    }

    fn hash_interior(&self, hasher: &mut Sha256) {
        let d = &self.domain;
        for j in 0..d.m as isize {
            for i in 0..d.n as isize {
                let start = d.index(i, j, 0);
                for v in &self.values[start..start + d.l] {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
    }
}

/// Clamp-to-edge fill of the `i` and `k` ghost cells of one interior `j` plane.
fn fill_plane_halo(d: &StencilDomain, plane: &mut [f64]) {
    let (si, h) = (d.stride_i(), d.halo);
    for i in h..h + d.n {
        let row = &mut plane[i * si..(i + 1) * si];
        let (first, last) = (row[h], row[h + d.l - 1]);
        row[..h].fill(first);
        row[h + d.l..].fill(last);
    }
    let (lo, hi) = plane.split_at_mut(h * si);
    for r in lo.chunks_mut(si) {
        r.copy_from_slice(&hi[..si]);
    }
    let tail = (h + d.n) * si;
    let (body, top) = plane.split_at_mut(tail);
    for r in top.chunks_mut(si) {
        r.copy_from_slice(&body[tail - si..tail]);
    }
}

/// Copies the first and last interior `j` planes into the `j` ghost planes.
fn fill_j_halo(d: &StencilDomain, values: &mut [f64]) {
    let (sj, h) = (d.stride_j(), d.halo);
    let (lo, rest) = values.split_at_mut(h * sj);
    for p in lo.chunks_mut(sj) {
        p.copy_from_slice(&rest[..sj]);
    }
    let tail = (h + d.m) * sj;
    let (body, hi) = values.split_at_mut(tail);
    for p in hi.chunks_mut(sj) {
        p.copy_from_slice(&body[tail - sj..tail]);
    }
}

/// The five fields a time step reads.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFields {
    /// Advected field; replaced by each step's output.
    pub x: GridField,
    pub u: GridField,
    pub v: GridField,
    pub w: GridField,
    pub h: GridField,
}

impl InputFields {
    pub fn domain(&self) -> &StencilDomain {
        self.x.domain()
    }

    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for f in [&self.x, &self.u, &self.v, &self.w, &self.h] {
            f.hash_interior(&mut hasher);
        }
        hex::encode(hasher.finalize())
    }

    fn check(&self) -> Result<(), WorkloadError> {
        let d = self.domain();
        for (name, f) in [("x", &self.x), ("u", &self.u), ("v", &self.v), ("w", &self.w), ("h", &self.h)] {
            if f.domain() != d {
                return Err(WorkloadError::DomainMismatch(format!("field '{name}' has a different domain")));
            }
            if !f.halo_filled {
                return Err(WorkloadError::HaloNotFilled(name));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finaliser; turns a coordinate key into well-mixed bits.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Value in `[0, 1)` for one cell, depending only on the seed, the field and
/// the cell's coordinates, so any halo width sees the same numbers.
fn cell_value(seed: u64, field: u64, i: isize, j: isize, k: isize) -> f64 {
    let mut z = mix(seed ^ field.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    for c in [i, j, k] {
        z = mix(z ^ c as u64);
    }
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic pseudo-random inputs, halos included.
pub fn init_fields(domain: StencilDomain, seed: u64) -> InputFields {
    let field = |id: u64| GridField::from_fn(domain, |i, j, k| cell_value(seed, id, i, j, k));
    InputFields { x: field(0), u: field(1), v: field(2), w: field(3), h: field(4) }
}

/// How a sweep is spread over threads.
enum Exec {
    Inline,
    Pool { pool: rayon::ThreadPool, threads: usize },
}

impl Exec {
    fn new(threads: usize) -> Result<Self, WorkloadError> {
        if threads <= 1 {
            return Ok(Exec::Inline);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| WorkloadError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Exec::Pool { pool, threads })
    }

    /// Writes `kernel(idx)` into every interior cell of `out`, then fills its
    /// halo. `idx` is the flat index of the cell, valid for every field of
    /// the domain.
    fn sweep<F>(&self, out: &mut GridField, kernel: F)
    where
        F: Fn(usize) -> f64 + Sync,
    {
        let d = out.domain;
        let (sj, si, h) = (d.stride_j(), d.stride_i(), d.halo);
        let interior = &mut out.values[h * sj..(h + d.m) * sj];
        let slab = |rows: &mut [f64], first_plane: usize| {
            for (p, plane) in rows.chunks_mut(sj).enumerate() {
                let base = (first_plane + p) * sj;
                for i in h..h + d.n {
                    for k in h..h + d.l {
                        let off = i * si + k;
                        plane[off] = kernel(base + off);
                    }
                }
                fill_plane_halo(&d, plane);
            }
        };
        match self {
            Exec::Inline => slab(interior, h),
            Exec::Pool { pool, threads } => {
                let planes = d.m.div_ceil(*threads);
                pool.install(|| {
                    interior
                        .par_chunks_mut(planes * sj)
                        .enumerate()
                        .for_each(|(c, rows)| slab(rows, h + c * planes));
                });
            }
        }
        fill_j_halo(&d, &mut out.values);
        out.halo_filled = true;
    }
}

/// Stage 3: `mx[i,j,k] = max` over the cell and its six face neighbours.
fn max7(x: &[f64], c: usize, si: usize, sj: usize) -> f64 {
    x[c].max(x[c - si])
        .max(x[c + si])
        .max(x[c - sj])
        .max(x[c + sj])
        .max(x[c - 1])
        .max(x[c + 1])
}

fn min7(x: &[f64], c: usize, si: usize, sj: usize) -> f64 {
    x[c].min(x[c - si])
        .min(x[c + si])
        .min(x[c - sj])
        .min(x[c + sj])
        .min(x[c - 1])
        .min(x[c + 1])
}

/// The seven-point neighbourhood maximum of `input` over its interior.
pub fn max_stencil(input: &GridField) -> Result<GridField, WorkloadError> {
    neighbourhood(input, max7)
}

/// The seven-point neighbourhood minimum of `input` over its interior.
pub fn min_stencil(input: &GridField) -> Result<GridField, WorkloadError> {
    neighbourhood(input, min7)
}

fn neighbourhood(
    input: &GridField,
    op: fn(&[f64], usize, usize, usize) -> f64,
) -> Result<GridField, WorkloadError> {
    if !input.halo_filled {
        return Err(WorkloadError::HaloNotFilled("input"));
    }
    let d = input.domain;
    let (si, sj) = (d.stride_i(), d.stride_j());
    let mut out = GridField::zeros(d);
    Exec::Inline.sweep(&mut out, |c| op(&input.values, c, si, sj));
    Ok(out)
}

/// Reusable buffers and thread pool for repeated time steps.
pub struct StepRunner {
    exec: Exec,
    a: GridField,
    b: GridField,
    mx: GridField,
    mn: GridField,
    out: GridField,
}

impl StepRunner {
    pub fn new(domain: StencilDomain, threads: usize) -> Result<Self, WorkloadError> {
        if threads == 0 {
            return Err(WorkloadError::Config("threads must be >= 1".into()));
        }
        let z = GridField::zeros(domain);
        Ok(Self { exec: Exec::new(threads)?, a: z.clone(), b: z.clone(), mx: z.clone(), mn: z.clone(), out: z })
    }

    /// Runs one step and returns the output field.
    pub fn step(&mut self, fields: &InputFields) -> Result<&GridField, WorkloadError> {
        fields.check()?;
        let d = *fields.domain();
        if !d.same_grid(&self.out.domain) || d.halo != self.out.domain.halo {
            return Err(WorkloadError::DomainMismatch("runner was built for another domain".into()));
        }
        let (si, sj) = (d.stride_i(), d.stride_j());
        let (x, u, v, w, h) = (
            &fields.x.values,
            &fields.u.values,
            &fields.v.values,
            &fields.w.values,
            &fields.h.values,
        );

        self.exec.sweep(&mut self.a, |c| {
            let lap = (((x[c - si] + x[c + si]) + (x[c - sj] + x[c + sj])) + (x[c - 1] + x[c + 1])) - 6.0 * x[c];
            x[c] + 0.125 * u[c] * lap
        });

        let a = &self.a.values;
        self.exec.sweep(&mut self.b, |c| {
            let along_i = 0.5 * (a[c - si] + a[c + si]);
            let across = 0.25 * ((a[c - sj] + a[c + sj]) + (a[c - 1] + a[c + 1]));
            let nb = w[c] * along_i + (1.0 - w[c]) * across;
            (1.0 - v[c]) * a[c] + v[c] * nb
        });

        let b = &self.b.values;
        self.exec.sweep(&mut self.mx, |c| max7(b, c, si, sj));
        self.exec.sweep(&mut self.mn, |c| min7(b, c, si, sj));

        let (mx, mn) = (&self.mx.values, &self.mn.values);
        self.exec.sweep(&mut self.out, |c| mn[c] + h[c] * (mx[c] - mn[c]));
        Ok(&self.out)
    }

    /// Runs one step and moves its output into `fields.x`.
    pub fn advance(&mut self, fields: &mut InputFields) -> Result<(), WorkloadError> {
        self.step(fields)?;
        std::mem::swap(&mut fields.x, &mut self.out);
        Ok(())
    }
}

/// One time step on a single thread.
pub fn run_step(fields: &InputFields) -> Result<GridField, WorkloadError> {
    let mut runner = StepRunner::new(*fields.domain(), 1)?;
    runner.step(fields).cloned()
}

/// Result of running the workload on one team of threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamRun {
    /// Wall-clock compute time, excluding field initialisation.
    pub elapsed_s: f64,
    pub checksum: String,
}

/// Runs `steps` time steps over `domain` with `threads` workers splitting the
/// `m` dimension.
pub fn run_team_workload(
    domain: StencilDomain,
    seed: u64,
    threads: usize,
    steps: usize,
    cap: ThreadCap,
) -> Result<TeamRun, WorkloadError> {
    if threads == 0 {
        return Err(WorkloadError::Config("threads must be >= 1".into()));
    }
    if steps == 0 {
        return Err(WorkloadError::Config("steps must be >= 1".into()));
    }
    cap.check(threads)?;
    let mut fields = init_fields(domain, seed);
    let mut runner = StepRunner::new(domain, threads)?;
    let start = Instant::now();
    for _ in 0..steps {
        runner.advance(&mut fields)?;
    }
    let elapsed_s = start.elapsed().as_secs_f64();
    Ok(TeamRun { elapsed_s, checksum: fields.x.checksum() })
}
