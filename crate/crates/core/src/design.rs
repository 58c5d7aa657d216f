//! Constrained maximin mixture designs over integer per-class counts.
//!
//! A design is a set of `n_rows` points, each a vector of per-class sample
//! counts summing to the subset size with every class under its cap. Designs
//! are built in two stages: batched candidate generation with rejection of
//! cap-violating candidates, then pointwise exchange. The exchange repeatedly
//! locates the closest pair, swaps one member for a fresh candidate and keeps
//! the swap only when the minimum pairwise distance strictly grows.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived_rng, seeded_rng};

/// Consecutive rejected candidates tolerated before sampling gives up.
pub const REJECTION_BUDGET: usize = 10_000;

const PILOT_DRAWS: usize = 2_000;
/// Minimum pilot hits (1% acceptance) for plain simplex rejection to be used.
const PILOT_MIN_HITS: usize = 20;

/// How candidate points are proposed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Simplex rejection when its acceptance rate is workable, capped walk otherwise.
    #[default]
    Auto,
    /// Uniform continuous simplex, largest-remainder rounding, cap rejection.
    Simplex,
    /// Pairwise-transfer Markov chain on the integer points that respect the caps.
    CappedWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n_classes: usize,
    pub subset_size: u64,
    /// Per-class maximum counts. Uniform for balanced datasets.
    pub class_caps: Vec<u64>,
    pub n_rows: usize,
    pub n_opt: usize,
    pub candidate_batch: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub sampler: SamplerKind,
}

impl DesignSpec {
    /// Spec with the same cap for every class, no optimization and seed 0.
    pub fn uniform(n_classes: usize, subset_size: u64, class_cap: u64, n_rows: usize) -> Self {
        DesignSpec {
            n_classes,
            subset_size,
            class_caps: vec![class_cap; n_classes],
            n_rows,
            n_opt: 0,
            candidate_batch: 64,
            rng_seed: 0,
            sampler: SamplerKind::Auto,
        }
    }

    pub fn with_opt_iters(mut self, n_opt: usize) -> Self {
        self.n_opt = n_opt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_candidate_batch(mut self, batch: usize) -> Self {
        self.candidate_batch = batch;
        self
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_subset_size(mut self, subset_size: u64) -> Self {
        self.subset_size = subset_size;
        self
    }

    pub fn capacity(&self) -> u64 {
        self.class_caps.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::config("a design needs at least one class"));
        }
        if self.class_caps.len() != self.n_classes {
            return Err(Error::config(format!(
                "{} class caps given for {} classes",
                self.class_caps.len(),
                self.n_classes
            )));
        }
        if self.subset_size == 0 {
            return Err(Error::config("subset size must be positive"));
        }
        if self.class_caps.contains(&0) {
            return Err(Error::config("class caps must be positive"));
        }
        if self.subset_size > self.capacity() {
            return Err(Error::config(format!(
                "subset size {} exceeds total class capacity {}",
                self.subset_size,
                self.capacity()
            )));
        }
        if self.n_rows < 2 {
            return Err(Error::config("a maximin design needs at least 2 rows"));
        }
        if self.candidate_batch == 0 {
            return Err(Error::config("candidate batch must be positive"));
        }
        Ok(())
    }

    fn check_point(&self, counts: &[u64]) -> bool {
        counts.len() == self.n_classes
            && counts.iter().sum::<u64>() == self.subset_size
            && counts.iter().zip(&self.class_caps).all(|(n, cap)| n <= cap)
    }
}

/// Images per class for one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint {
    pub counts: Vec<u64>,
}

impl DesignPoint {
    pub fn new(counts: Vec<u64>) -> Self {
        DesignPoint { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn squared_distance(&self, other: &DesignPoint) -> u64 {
        self.counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| {
                let d = a.abs_diff(b);
                d * d
            })
            .sum()
    }

    pub fn distance(&self, other: &DesignPoint) -> f64 {
        (self.squared_distance(other) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub spec: DesignSpec,
    pub points: Vec<DesignPoint>,
    /// Minimum pairwise Euclidean distance over the raw counts.
    pub maximin: f64,
}

impl Design {
    pub fn new(spec: DesignSpec, points: Vec<DesignPoint>) -> Result<Self> {
        for (row, p) in points.iter().enumerate() {
            if !spec.check_point(&p.counts) {
                return Err(Error::contract(format!("row {row} violates the design constraints: {:?}", p.counts)));
            }
        }
        let maximin = min_pair(&points)?.2;
        Ok(Design { spec, points, maximin })
    }

    pub fn min_pair(&self) -> Result<(usize, usize, f64)> {
        min_pair(&self.points)
    }

    pub fn subset_size(&self) -> u64 {
        self.spec.subset_size
    }
}

/// Closest pair of points. Ties resolve to the lexicographically smallest
/// index pair.
pub fn min_pair(points: &[DesignPoint]) -> Result<(usize, usize, f64)> {
    if points.len() < 2 {
        return Err(Error::contract(format!("min_pair needs at least 2 points, got {}", points.len())));
    }
    let mut best = (0, 1, u64::MAX);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].squared_distance(&points[j]);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    Ok((best.0, best.1, (best.2 as f64).sqrt()))
}

/// Integer counts proportional to `weights` that sum exactly to `total`
/// (largest-remainder apportionment, ties to the lower index).
pub fn apportion(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let mut assigned: u64 = counts.iter().sum();
    // Guard against a floating-point overshoot of the floors.
    while assigned > total {
        let i = (0..counts.len())
            .filter(|&i| counts[i] > 0)
            .min_by(|&a, &b| (quotas[a] - counts[a] as f64).total_cmp(&(quotas[b] - counts[b] as f64)))
            .expect("positive counts exist while over-assigned");
        counts[i] -= 1;
        assigned -= 1;
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Proposes design points for one spec.
///
/// The capped walk keeps chain state between draws, so a sampler should live
/// for the whole construction of a design.
#[derive(Debug, Clone)]
pub struct CandidateSampler {
    subset_size: u64,
    caps: Vec<u64>,
    mode: SamplerMode,
}

#[derive(Debug, Clone)]
enum SamplerMode {
    Simplex,
    Walk { state: Vec<u64>, burned_in: bool },
}

impl CandidateSampler {
    pub fn new(spec: &DesignSpec) -> Result<Self> {
        spec.validate_sampling()?;
        let kind = match spec.sampler {
            SamplerKind::Auto => auto_kind(spec),
            other => other,
        };
        let mode = match kind {
            SamplerKind::CappedWalk => {
                SamplerMode::Walk { state: initial_fill(spec.subset_size, &spec.class_caps), burned_in: false }
            }
            _ => SamplerMode::Simplex,
        };
        Ok(CandidateSampler { subset_size: spec.subset_size, caps: spec.class_caps.clone(), mode })
    }

    pub fn kind(&self) -> SamplerKind {
        match self.mode {
            SamplerMode::Simplex => SamplerKind::Simplex,
            SamplerMode::Walk { .. } => SamplerKind::CappedWalk,
        }
    }

    fn fits(&self, counts: &[u64]) -> bool {
        counts.iter().zip(&self.caps).all(|(n, cap)| n <= cap)
    }

    /// One proposal, which may violate the caps in simplex mode.
    pub fn propose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DesignPoint {
        let k = self.caps.len();
        match &mut self.mode {
            SamplerMode::Simplex => {
                let weights: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
                DesignPoint::new(apportion(&weights, self.subset_size))
            }
            SamplerMode::Walk { state, burned_in } => {
                let moves = if *burned_in { walk_thinning(k) } else { 10 * walk_thinning(k) };
                *burned_in = true;
                if k > 1 {
                    for _ in 0..moves {
                        transfer(state, &self.caps, rng);
                    }
                }
                DesignPoint::new(state.clone())
            }
        }
    }

    /// A feasible candidate, rejecting cap violations up to [`REJECTION_BUDGET`].
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<DesignPoint> {
        for _ in 0..REJECTION_BUDGET {
            let p = self.propose(rng);
            if self.fits(&p.counts) {
                return Ok(p);
            }
        }
        Err(Error::SamplingFailure { rejections: REJECTION_BUDGET })
    }
}

impl DesignSpec {
    // Everything `validate` checks except the row count, which only matters
    // once a design is assembled.
    fn validate_sampling(&self) -> Result<()> {
        let mut probe = self.clone();
        probe.n_rows = probe.n_rows.max(2);
        probe.candidate_batch = probe.candidate_batch.max(1);
        probe.validate()
    }
}

fn auto_kind(spec: &DesignSpec) -> SamplerKind {
    if spec.class_caps.iter().all(|&c| c >= spec.subset_size) {
        return SamplerKind::Simplex;
    }
    let mut pilot =
        CandidateSampler { subset_size: spec.subset_size, caps: spec.class_caps.clone(), mode: SamplerMode::Simplex };
    let mut rng = derived_rng(spec.rng_seed, "sampler-pilot");
    let hits = (0..PILOT_DRAWS)
        .filter(|_| {
            let p = pilot.propose(&mut rng);
            pilot.fits(&p.counts)
        })
        .count();
    if hits >= PILOT_MIN_HITS {
        SamplerKind::Simplex
    } else {
        SamplerKind::CappedWalk
    }
}

fn walk_thinning(k: usize) -> usize {
    let log_k = (k.max(2) as f64).ln().ceil() as usize;
    4 * k * (log_k + 1)
}

// Balanced start: level fill, then top up classes in index order.
fn initial_fill(total: u64, caps: &[u64]) -> Vec<u64> {
    let k = caps.len() as u64;
    let mut counts: Vec<u64> = caps.iter().map(|&c| c.min(total / k)).collect();
    let mut rest = total - counts.iter().sum::<u64>();
    for (n, &cap) in counts.iter_mut().zip(caps) {
        let add = (cap - *n).min(rest);
        *n += add;
        rest -= add;
    }
    counts
}

// Resample the split of two classes' combined count uniformly over the
// splits that respect both caps. Leaves the uniform distribution on the
// feasible integer points invariant.
fn transfer<R: Rng + ?Sized>(state: &mut [u64], caps: &[u64], rng: &mut R) {
    let k = state.len();
    let i = rng.random_range(0..k);
    let mut j = rng.random_range(0..k - 1);
    if j >= i {
        j += 1;
    }
    let pooled = state[i] + state[j];
    let lo = pooled.saturating_sub(caps[j]);
    let hi = caps[i].min(pooled);
    let xi = rng.random_range(lo..=hi);
    state[i] = xi;
    state[j] = pooled - xi;
}

/// Draw one feasible candidate for `spec`.
pub fn sample_candidate<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<DesignPoint> {
    CandidateSampler::new(spec)?.sample(rng)
}

/// Build the initial design by batched candidate generation.
pub fn initialize_design<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<Design> {
    let mut sampler = CandidateSampler::new(spec)?;
    initialize_with(&mut sampler, spec, rng)
}

fn initialize_with<R: Rng + ?Sized>(sampler: &mut CandidateSampler, spec: &DesignSpec, rng: &mut R) -> Result<Design> {
    spec.validate()?;
    let mut rows: Vec<DesignPoint> = Vec::with_capacity(spec.n_rows);
    let mut consecutive_rejections = 0usize;
    while rows.len() < spec.n_rows {
        for _ in 0..spec.candidate_batch {
            let p = sampler.propose(rng);
            if sampler.fits(&p.counts) {
                rows.push(p);
                consecutive_rejections = 0;
            } else {
                consecutive_rejections += 1;
                if consecutive_rejections >= REJECTION_BUDGET {
                    return Err(Error::SamplingFailure { rejections: consecutive_rejections });
                }
            }
        }
    }
    rows.truncate(spec.n_rows);
    Design::new(spec.clone(), rows)
}

/// Accepted maximin values during one optimization run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizationTrace {
    pub initial: f64,
    /// `(iteration, maximin)` for every accepted exchange.
    pub accepted: Vec<(usize, f64)>,
}

/// Pointwise exchange for `design.spec.n_opt` iterations.
pub fn optimize_design<R: Rng + ?Sized>(design: &Design, rng: &mut R) -> Result<Design> {
    let mut sampler = CandidateSampler::new(&design.spec)?;
    Ok(optimize_with(&mut sampler, design, rng)?.0)
}

pub fn optimize_design_traced<R: Rng + ?Sized>(design: &Design, rng: &mut R) -> Result<(Design, OptimizationTrace)> {
    let mut sampler = CandidateSampler::new(&design.spec)?;
    optimize_with(&mut sampler, design, rng)
}

fn optimize_with<R: Rng + ?Sized>(
    sampler: &mut CandidateSampler,
    design: &Design,
    rng: &mut R,
) -> Result<(Design, OptimizationTrace)> {
    let n = design.points.len();
    if n < 2 {
        return Err(Error::contract("optimization needs at least 2 points"));
    }
    let mut points = design.points.clone();
    let mut dist = vec![vec![0u64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i].squared_distance(&points[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let (mut pair, mut best) = closest(&dist, None);
    let mut trace = OptimizationTrace { initial: (best as f64).sqrt(), accepted: Vec::new() };
    let mut fresh = vec![0u64; n];
    // Failed attempts on the current closest pair alternate between its two
    // members, starting with the lower row index.
    let mut failures = 0usize;
    for iter in 0..design.spec.n_opt {
        let victim = if failures.is_multiple_of(2) { pair.0 } else { pair.1 };
        let candidate = sampler.sample(rng)?;
        for (u, p) in points.iter().enumerate() {
            fresh[u] = if u == victim { u64::MAX } else { candidate.squared_distance(p) };
        }
        let (_, rest) = closest(&dist, Some(victim));
        let trial = rest.min(fresh.iter().copied().min().unwrap_or(u64::MAX));
        if trial > best {
            points[victim] = candidate;
            for u in 0..n {
                if u != victim {
                    dist[victim][u] = fresh[u];
                    dist[u][victim] = fresh[u];
                }
            }
            (pair, best) = closest(&dist, None);
            debug_assert_eq!(best, trial);
            trace.accepted.push((iter, (best as f64).sqrt()));
            failures = 0;
        } else {
            failures += 1;
        }
    }
    let out = Design { spec: design.spec.clone(), points, maximin: (best as f64).sqrt() };
    Ok((out, trace))
}

// Closest pair in the squared-distance matrix, optionally ignoring one row.
fn closest(dist: &[Vec<u64>], skip: Option<usize>) -> ((usize, usize), u64) {
    let mut best = ((0, 1), u64::MAX);
    for i in 0..dist.len() {
        if Some(i) == skip {
            continue;
        }
        for j in (i + 1)..dist.len() {
            if Some(j) == skip {
                continue;
            }
            if dist[i][j] < best.1 {
                best = ((i, j), dist[i][j]);
            }
        }
    }
    best
}

/// Initialize and optimize a design from its own seed.
pub fn build_design(spec: &DesignSpec) -> Result<Design> {
    let mut rng = seeded_rng(spec.rng_seed);
    let mut sampler = CandidateSampler::new(spec)?;
    let initial = initialize_with(&mut sampler, spec, &mut rng)?;
    Ok(optimize_with(&mut sampler, &initial, &mut rng)?.0)
}

/// One optimized design per subset size. Each size gets its own seed derived
/// from the template seed, so the suite is reproducible and order-free.
pub fn generate_design_suite(subset_sizes: &[u64], template: &DesignSpec) -> Result<Vec<Design>> {
    for &s in subset_sizes {
        let spec = template.clone().with_subset_size(s);
        spec.validate().map_err(|e| Error::config(format!("subset size {s} is infeasible: {e}")))?;
    }
    subset_sizes
        .par_iter()
        .map(|&s| {
            let spec =
                template.clone().with_subset_size(s).with_seed(derive_seed(template.rng_seed, &format!("subset-{s}")));
            build_design(&spec)
        })
        .collect()
}

/// JSON metadata written next to a design CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSidecar {
    pub spec: DesignSpec,
    pub seed: u64,
    pub maximin: f64,
}

pub fn write_design_csv<W: Write>(design: &Design, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_string()];
    header.extend((0..design.spec.n_classes).map(|c| format!("class_{c}")));
    w.write_record(&header)?;
    for (row, p) in design.points.iter().enumerate() {
        let mut rec = vec![row.to_string()];
        rec.extend(p.counts.iter().map(|n| n.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_design_csv<R: Read>(input: R, spec: DesignSpec) -> Result<Design> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width != spec.n_classes + 1 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected {} columns, found {width}", spec.n_classes + 1),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let counts = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim().parse::<u64>().map_err(|e| Error::Parse { line, message: format!("bad count {f:?}: {e}") })
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(DesignPoint::new(counts));
    }
    Design::new(spec, points)
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `<path>` (CSV) and its JSON sidecar.
pub fn save_design(design: &Design, csv_path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_design_csv(design, &mut buf)?;
    fs::write(csv_path, buf)?;
    let sidecar = DesignSidecar { spec: design.spec.clone(), seed: design.spec.rng_seed, maximin: design.maximin };
    fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_design(csv_path: &Path) -> Result<Design> {
    let sidecar: DesignSidecar = serde_json::from_slice(&fs::read(sidecar_path(csv_path))?)?;
    read_design_csv(fs::File::open(csv_path)?, sidecar.spec)
}
