//! Residual-driven adaptive collocation sampling.
//!
//! Three strategies share one reference grid of equi-spaced residual points:
//!
//! * `asm1` resamples reference points from a residual-powered PMF and adds
//!   them again (no new locations);
//! * `asm2` scores a fresh uniform candidate pool with the current network
//!   and keeps the highest-residual candidates;
//! * `asm3` (direct grid refinement) samples parents from the same PMF and
//!   places `RF - 1` children within one grid cell of each parent:
//!
//! ```text
//! t_r = t_s + lambda_t * h_t,   x_r = x_s + lambda_x * h_x,   lambda in [-1, 1]
//! ```
//!
//! ASM3 children from earlier events are discarded at every new event.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{linspace, DomainSpec};

/// Fixed equi-spaced residual points, row-major with `t` as the slow axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    t_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
    h_t: f64,
    h_x: f64,
}

pub fn build_reference_grid(domain: &DomainSpec, n_t: usize, n_x: usize) -> Result<ReferenceGrid> {
    domain.validate()?;
    if n_t < 2 {
        return Err(Error::config("collocation.n_t", "need at least 2 nodes"));
    }
    if n_x < 2 {
        return Err(Error::config("collocation.n_x", "need at least 2 nodes"));
    }
    Ok(ReferenceGrid {
        t_nodes: linspace(0.0, domain.t_max, n_t),
        x_nodes: linspace(domain.x_min, domain.x_max, n_x),
        h_t: domain.t_max / (n_t - 1) as f64,
        h_x: domain.length() / (n_x - 1) as f64,
    })
}

impl ReferenceGrid {
    pub fn len(&self) -> usize {
        self.t_nodes.len() * self.x_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_t(&self) -> f64 {
        self.h_t
    }

    pub fn h_x(&self) -> f64 {
        self.h_x
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn point(&self, index: usize) -> (f64, f64) {
        let nx = self.x_nodes.len();
        (self.t_nodes[index / nx], self.x_nodes[index % nx])
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Residual magnitudes aligned with a point list.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    values: Vec<f64>,
}

impl ResidualField {
    /// Takes absolute values; rejects non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite residual".into()));
        }
        Ok(ResidualField {
            values: values.into_iter().map(f64::abs).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmfConfig {
    pub k: f64,
    pub c: f64,
}

impl Default for PmfConfig {
    fn default() -> Self {
        PmfConfig { k: 2.0, c: 0.0 }
    }
}

impl PmfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::config("sampler.pmf.k", "must be > 0"));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::config("sampler.pmf.c", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probabilities: Vec<f64>,
}

impl Pmf {
    pub fn uniform(n: usize) -> Self {
        Pmf {
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    /// Accepts any non-negative weights and normalises them.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::DegenerateDistribution("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution("weights sum to zero".into()));
        }
        Ok(Pmf {
            probabilities: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// `p_i ∝ eps_i^k / mean(eps^k) + c`, normalised over the point set.
pub fn compute_pmf(residuals: &ResidualField, cfg: &PmfConfig) -> Result<Pmf> {
    cfg.validate()?;
    if residuals.is_empty() {
        return Err(Error::DegenerateDistribution("empty residual field".into()));
    }
    let powered: Vec<f64> = residuals.values().iter().map(|e| e.powf(cfg.k)).collect();
    let mean = powered.iter().sum::<f64>() / powered.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numeric("residual powers overflow".into()));
    }
    if mean == 0.0 {
        if cfg.c == 0.0 {
            return Err(Error::DegenerateDistribution("all residuals are zero".into()));
        }
        return Ok(Pmf::uniform(powered.len()));
    }
    let weights: Vec<f64> = if cfg.c == 0.0 {
        // The mean cancels under normalisation.
        powered
    } else {
        powered.iter().map(|p| p / mean + cfg.c).collect()
    };
    Pmf::from_weights(&weights)
}

/// Independent draws with replacement.
pub fn sample_parents<R: Rng + ?Sized>(pmf: &Pmf, count: usize, rng: &mut R) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for p in pmf.probabilities() {
        acc += p;
        cumulative.push(acc);
    }
    // Last index with positive mass absorbs the rounding slack of the total.
    let last_positive = pmf
        .probabilities()
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(pmf.len() - 1);
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Asm1,
    Asm2,
    Asm3,
}

impl Method {
    /// Whether batches from earlier events stay in the training set.
    pub fn accumulates_by_default(self) -> bool {
        matches!(self, Method::Asm1 | Method::Asm2)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::None => "none",
            Method::Asm1 => "asm1",
            Method::Asm2 => "asm2",
            Method::Asm3 => "asm3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CoefficientPolicy {
    /// Fresh `lambda_t, lambda_x ~ U[-1, 1]` for every child.
    Random,
    /// One `(lambda_t, lambda_x)` pair per child slot; length `RF - 1`.
    Constant { pairs: Vec<(f64, f64)> },
}

impl CoefficientPolicy {
    /// Reproducible coefficient sets for refinement factors 2 to 4.
    pub fn preset(refinement_factor: usize) -> Option<Self> {
        let pairs = match refinement_factor {
            2 => vec![(0.5, 0.5)],
            3 => vec![(-0.5, -0.5), (0.5, 0.5)],
            4 => vec![(-0.5, -0.5), (0.5, 0.5), (0.5, -0.5)],
            _ => return None,
        };
        Some(CoefficientPolicy::Constant { pairs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: Method,
    pub points_per_event: usize,
    pub refinement_factor: usize,
    pub coefficient_policy: CoefficientPolicy,
    pub asm2_candidate_pool: usize,
    pub pmf: PmfConfig,
    /// Keep earlier batches; `None` picks the method's default.
    pub accumulate: Option<bool>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: Method::Asm3,
            points_per_event: 150,
            refinement_factor: 2,
            coefficient_policy: CoefficientPolicy::Random,
            asm2_candidate_pool: 1500,
            pmf: PmfConfig::default(),
            accumulate: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_event == 0 {
            return Err(Error::config("sampler.points_per_event", "must be > 0"));
        }
        if self.refinement_factor < 2 {
            return Err(Error::config("sampler.refinement_factor", "must be >= 2"));
        }
        if self.asm2_candidate_pool < self.points_per_event {
            return Err(Error::config(
                "sampler.asm2_candidate_pool",
                "must be >= points_per_event",
            ));
        }
        self.pmf.validate()?;
        if let CoefficientPolicy::Constant { pairs } = &self.coefficient_policy {
            if pairs.len() != self.refinement_factor - 1 {
                return Err(Error::config(
                    "sampler.coefficient_policy",
                    format!("need exactly {} coefficient pairs", self.refinement_factor - 1),
                ));
            }
            if pairs
                .iter()
                .any(|(a, b)| !(-1.0..=1.0).contains(a) || !(-1.0..=1.0).contains(b))
            {
                return Err(Error::config("sampler.coefficient_policy", "coefficients must lie in [-1, 1]"));
            }
            for (i, a) in pairs.iter().enumerate() {
                if pairs[i + 1..].contains(a) {
                    return Err(Error::config("sampler.coefficient_policy", "coefficient pairs must be distinct"));
                }
            }
        }
        Ok(())
    }

    pub fn accumulate(&self) -> bool {
        self.accumulate.unwrap_or(self.method.accumulates_by_default())
    }

    /// Parents per ASM3 event, `round(points / (RF - 1))`, at least one.
    pub fn asm3_parent_count(&self) -> usize {
        let per = (self.refinement_factor - 1) as f64;
        ((self.points_per_event as f64 / per).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub method: Method,
    pub event_index: usize,
    /// Reference-grid indices chosen from the PMF (empty for ASM2).
    pub parent_indices: Vec<usize>,
    /// New collocation points contributed by this event.
    pub refined_points: Vec<(f64, f64)>,
    /// Children emitted per parent; child `j` descends from parent `j / children_per_parent`.
    pub children_per_parent: usize,
}

impl SampleBatch {
    pub fn parent_of(&self, child: usize) -> Option<usize> {
        if self.children_per_parent == 0 {
            return None;
        }
        self.parent_indices.get(child / self.children_per_parent).copied()
    }
}

pub fn refine<R: Rng + ?Sized>(
    grid: &ReferenceGrid,
    parents: &[usize],
    cfg: &SamplerConfig,
    domain: &DomainSpec,
    rng: &mut R,
) -> Result<SampleBatch> {
    if parents.is_empty() {
        return Err(Error::config("sampler", "refinement needs at least one parent"));
    }
    cfg.validate()?;
    let children = cfg.refinement_factor - 1;
    let (h_t, h_x) = (grid.h_t(), grid.h_x());
    let mut refined = Vec::with_capacity(parents.len() * children);
    for &parent in parents {
        if parent >= grid.len() {
            return Err(Error::Domain(format!("parent index {parent} outside the grid")));
        }
        let (ts, xs) = grid.point(parent);
        for slot in 0..children {
            let child = match &cfg.coefficient_policy {
                CoefficientPolicy::Random => loop {
                    let lt: f64 = rng.gen_range(-1.0..=1.0);
                    let lx: f64 = rng.gen_range(-1.0..=1.0);
                    let (t, x) = (ts + lt * h_t, xs + lx * h_x);
                    if domain.contains(t, x) {
                        break (t, x);
                    }
                },
                CoefficientPolicy::Constant { pairs } => {
                    let (lt, lx) = pairs[slot];
                    (
                        (ts + lt * h_t).clamp(0.0, domain.t_max),
                        (xs + lx * h_x).clamp(domain.x_min, domain.x_max),
                    )
                }
            };
            refined.push(child);
        }
    }
    Ok(SampleBatch {
        method: Method::Asm3,
        event_index: 0,
        parent_indices: parents.to_vec(),
        refined_points: refined,
        children_per_parent: children,
    })
}

pub fn asm1_select<R: Rng + ?Sized>(
    grid: &ReferenceGrid,
    residuals: &ResidualField,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SampleBatch> {
    let pmf = compute_pmf(residuals, &cfg.pmf)?;
    Ok(asm1_from_pmf(grid, &pmf, cfg, rng))
}

pub(crate) fn asm1_from_pmf<R: Rng + ?Sized>(grid: &ReferenceGrid, pmf: &Pmf, cfg: &SamplerConfig, rng: &mut R) -> SampleBatch {
    let parents = sample_parents(pmf, cfg.points_per_event, rng);
    SampleBatch {
        method: Method::Asm1,
        event_index: 0,
        refined_points: parents.iter().map(|&i| grid.point(i)).collect(),
        parent_indices: parents,
        children_per_parent: 1,
    }
}

/// Uniform candidates over the domain rectangle, scored by `evaluator`; the
/// `points_per_event` largest residuals win, ties going to earlier draws.
pub fn asm2_select<R, F>(domain: &DomainSpec, mut evaluator: F, cfg: &SamplerConfig, rng: &mut R) -> Result<SampleBatch>
where
    R: Rng + ?Sized,
    F: FnMut(&[(f64, f64)]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let candidates: Vec<(f64, f64)> = (0..cfg.asm2_candidate_pool)
        .map(|_| {
            (
                rng.gen_range(0.0..=domain.t_max),
                rng.gen_range(domain.x_min..=domain.x_max),
            )
        })
        .collect();
    let scores = evaluator(&candidates)?;
    if scores.len() != candidates.len() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("candidate residuals are malformed".into()));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()));
    Ok(SampleBatch {
        method: Method::Asm2,
        event_index: 0,
        parent_indices: Vec::new(),
        refined_points: order[..cfg.points_per_event].iter().map(|&i| candidates[i]).collect(),
        children_per_parent: 0,
    })
}

pub fn asm3_resample<R: Rng + ?Sized>(
    grid: &ReferenceGrid,
    residuals: &ResidualField,
    cfg: &SamplerConfig,
    domain: &DomainSpec,
    rng: &mut R,
) -> Result<SampleBatch> {
    let pmf = compute_pmf(residuals, &cfg.pmf)?;
    asm3_from_pmf(grid, &pmf, cfg, domain, rng)
}

pub(crate) fn asm3_from_pmf<R: Rng + ?Sized>(
    grid: &ReferenceGrid,
    pmf: &Pmf,
    cfg: &SamplerConfig,
    domain: &DomainSpec,
    rng: &mut R,
) -> Result<SampleBatch> {
    let parents = sample_parents(pmf, cfg.asm3_parent_count(), rng);
    refine(grid, &parents, cfg, domain, rng)
}

/// How many times each reference index was drawn as a parent.
pub fn repetition_histogram(batches: &[SampleBatch]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for b in batches {
        for &p in &b.parent_indices {
            *counts.entry(p).or_insert(0) += 1;
        }
    }
    counts
}

/// CSV rows `event, kind, t, x, parent_index` for every parent and child.
pub fn write_batches_csv<W: Write>(out: W, grid: &ReferenceGrid, batches: &[SampleBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["event", "kind", "t", "x", "parent_index"])?;
    for b in batches {
        let event = b.event_index.to_string();
        for &p in &b.parent_indices {
            let (t, x) = grid.point(p);
            w.write_record([event.as_str(), "parent", &t.to_string(), &x.to_string(), &p.to_string()])?;
        }
        for (j, &(t, x)) in b.refined_points.iter().enumerate() {
            let parent = b.parent_of(j).map(|p| p.to_string()).unwrap_or_default();
            w.write_record([event.as_str(), "child", &t.to_string(), &x.to_string(), &parent])?;
        }
    }
    w.flush()?;
    Ok(())
}
