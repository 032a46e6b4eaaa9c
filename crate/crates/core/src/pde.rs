//! One-dimensional advection–dispersion in a porous column.
//!
//! With constant coefficients the transport equation reads
//!
//! ```text
//! phi c_t + v c_x - D_eff c_xx = 0,    D_eff = D_e + alpha_L v
//! ```
//!
//! on `t in [0, T]`, `x in [x_min, x_max]`, with a smoothed pulse at the inlet,
//! zero dispersive flux at the outlet and a clean column at `t = 0`.

use serde::{Deserialize, Serialize};

use crate::diffnet::{sigmoid, Direction, JetObjective, JetProvider, PointJets};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumProperties {
    pub porosity: f64,
    /// Longitudinal dispersivity, m.
    pub dispersivity: f64,
    /// Groundwater velocity, m/s.
    pub velocity: f64,
    /// Molecular dispersion coefficient, m^2/s.
    pub molecular_dispersion: f64,
}

impl Default for MediumProperties {
    fn default() -> Self {
        MediumProperties {
            porosity: 0.3,
            dispersivity: 0.01,
            velocity: 0.0003,
            molecular_dispersion: 1e-9,
        }
    }
}

impl MediumProperties {
    pub fn effective_dispersion(&self) -> f64 {
        self.molecular_dispersion + self.dispersivity * self.velocity
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("medium.porosity", self.porosity),
            ("medium.dispersivity", self.dispersivity),
            ("medium.velocity", self.velocity),
            ("medium.molecular_dispersion", self.molecular_dispersion),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be strictly positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub t_max: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            t_max: 6000.0,
            x_min: 0.0,
            x_max: 1.0,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::config("domain.t_max", "must be > 0"));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::config("domain.x_max", "must exceed x_min"));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        (0.0..=self.t_max).contains(&t) && (self.x_min..=self.x_max).contains(&x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InletPulseSpec {
    /// Sigmoid steepness, 1/s.
    pub steepness: f64,
    pub rise_center: f64,
    pub fall_center: f64,
    /// Evaluate the second factor as `1/(1+exp(a(t+t1)))`, which keeps the
    /// inlet near zero over the whole horizon.
    pub literal_mode: bool,
}

impl Default for InletPulseSpec {
    fn default() -> Self {
        InletPulseSpec {
            steepness: 0.02,
            rise_center: 500.0,
            fall_center: 5500.0,
            literal_mode: false,
        }
    }
}

impl InletPulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.steepness.is_finite() && self.steepness > 0.0) {
            return Err(Error::config("inlet.steepness", "must be > 0"));
        }
        if !self.rise_center.is_finite() || !self.fall_center.is_finite() {
            return Err(Error::config("inlet.rise_center", "must be finite"));
        }
        if !self.literal_mode && self.fall_center <= self.rise_center {
            return Err(Error::config("inlet.fall_center", "must exceed rise_center"));
        }
        Ok(())
    }
}

pub fn inlet_value(spec: &InletPulseSpec, t: f64) -> f64 {
    let a = spec.steepness;
    let rise = sigmoid(a * (t - spec.rise_center));
    let fall = if spec.literal_mode {
        sigmoid(-a * (t + spec.rise_center))
    } else {
        sigmoid(-a * (t - spec.fall_center))
    };
    rise * fall
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub pde: f64,
    pub inlet: f64,
    pub outlet: f64,
    pub initial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pde: 1.0,
            inlet: 1.0,
            outlet: 1.0,
            initial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.pde, self.inlet, self.outlet, self.initial];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("training.weights", "weights must be finite and >= 0"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::config("training.weights", "at least one weight must be > 0"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LossWeights {
            pde: self.pde * factor,
            inlet: self.inlet * factor,
            outlet: self.outlet * factor,
            initial: self.initial * factor,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<(f64, f64)>,
    pub inlet: Vec<f64>,
    pub outlet: Vec<f64>,
    pub initial: Vec<f64>,
}

impl CollocationSet {
    /// Equi-spaced boundary and initial points; `interior` is left to the caller.
    pub fn boundary_grid(domain: &DomainSpec, n_inlet: usize, n_outlet: usize, n_initial: usize) -> Self {
        CollocationSet {
            interior: Vec::new(),
            inlet: linspace(0.0, domain.t_max, n_inlet),
            outlet: linspace(0.0, domain.t_max, n_outlet),
            initial: linspace(domain.x_min, domain.x_max, n_initial),
        }
    }

    pub fn validate(&self, domain: &DomainSpec, weights: &LossWeights) -> Result<()> {
        let lists = [
            ("interior", self.interior.len(), weights.pde),
            ("inlet", self.inlet.len(), weights.inlet),
            ("outlet", self.outlet.len(), weights.outlet),
            ("initial", self.initial.len(), weights.initial),
        ];
        for (name, len, w) in lists {
            if len == 0 && w > 0.0 {
                return Err(Error::config(
                    format!("collocation.{name}"),
                    "empty point list with a positive weight",
                ));
            }
        }
        let t_ok = |t: &f64| (0.0..=domain.t_max).contains(t);
        let x_ok = |x: &f64| (domain.x_min..=domain.x_max).contains(x);
        if !self.interior.iter().all(|(t, x)| t_ok(t) && x_ok(x))
            || !self.inlet.iter().all(t_ok)
            || !self.outlet.iter().all(t_ok)
            || !self.initial.iter().all(x_ok)
        {
            return Err(Error::Domain("collocation point outside the domain".into()));
        }
        Ok(())
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Residual from a value triple; shared by the scalar and batched loss paths.
#[inline]
fn residual_from(props: &MediumProperties, c_t: f64, c_x: f64, c_xx: f64) -> f64 {
    props.porosity * c_t + props.velocity * c_x - props.effective_dispersion() * c_xx
}

/// Residual at batch index `k` of a jet evaluation.
pub fn residual_from_jets(props: &MediumProperties, jets: &PointJets, k: usize) -> f64 {
    residual_from(props, jets.d_t[k], jets.d_x[k], jets.d_xx[k])
}

pub fn pde_residual<N: JetProvider + ?Sized>(net: &N, props: &MediumProperties, t: f64, x: f64) -> Result<f64> {
    let jt = net.jet(t, x, Direction::T)?;
    let jx = net.jet(t, x, Direction::X)?;
    Ok(residual_from(props, jt.d1, jx.d1, jx.d2))
}

pub fn outlet_flux_residual<N: JetProvider + ?Sized>(
    net: &N,
    props: &MediumProperties,
    t: f64,
    x_max: f64,
) -> Result<f64> {
    let jx = net.jet(t, x_max, Direction::X)?;
    Ok(props.effective_dispersion() * jx.d1)
}

pub fn initial_residual<N: JetProvider + ?Sized>(net: &N, x: f64) -> Result<f64> {
    net.value(0.0, x)
}

/// Per-term mean squared residuals before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossTerms {
    pub pde: f64,
    pub inlet: f64,
    pub outlet: f64,
    pub initial: f64,
}

impl LossTerms {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.pde * self.pde + w.inlet * self.inlet + w.outlet * self.outlet + w.initial * self.initial
    }
}

fn mean_sq(values: impl Iterator<Item = Result<f64>>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        let v = v?;
        sum += v * v;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Weighted sum of per-term mean squared residuals, evaluated point by point.
pub fn assemble_loss<N: JetProvider + ?Sized>(
    net: &N,
    props: &MediumProperties,
    spec: &InletPulseSpec,
    weights: &LossWeights,
    points: &CollocationSet,
    domain: &DomainSpec,
) -> Result<f64> {
    points.validate(domain, weights)?;
    let terms = LossTerms {
        pde: mean_sq(points.interior.iter().map(|&(t, x)| pde_residual(net, props, t, x)))?,
        inlet: mean_sq(
            points
                .inlet
                .iter()
                .map(|&t| Ok(net.value(t, domain.x_min)? - inlet_value(spec, t))),
        )?,
        outlet: mean_sq(
            points
                .outlet
                .iter()
                .map(|&t| outlet_flux_residual(net, props, t, domain.x_max)),
        )?,
        initial: mean_sq(points.initial.iter().map(|&x| initial_residual(net, x)))?,
    };
    Ok(terms.weighted_total(weights))
}

/// Batched form of [`assemble_loss`] for the reverse-mode engine.
///
/// Points are laid out as interior, then inlet `(t, x_min)`, outlet
/// `(t, x_max)` and initial `(0, x)`.
#[derive(Debug, Clone)]
pub struct PinnObjective {
    props: MediumProperties,
    weights: LossWeights,
    points: Vec<(f64, f64)>,
    inlet_targets: Vec<f64>,
    counts: [usize; 4],
}

impl PinnObjective {
    pub fn new(
        props: MediumProperties,
        spec: &InletPulseSpec,
        weights: LossWeights,
        set: &CollocationSet,
        domain: &DomainSpec,
    ) -> Result<Self> {
        set.validate(domain, &weights)?;
        let mut points = Vec::with_capacity(set.interior.len() + set.inlet.len() + set.outlet.len() + set.initial.len());
        points.extend_from_slice(&set.interior);
        points.extend(set.inlet.iter().map(|&t| (t, domain.x_min)));
        points.extend(set.outlet.iter().map(|&t| (t, domain.x_max)));
        points.extend(set.initial.iter().map(|&x| (0.0, x)));
        Ok(PinnObjective {
            props,
            weights,
            inlet_targets: set.inlet.iter().map(|&t| inlet_value(spec, t)).collect(),
            counts: [set.interior.len(), set.inlet.len(), set.outlet.len(), set.initial.len()],
            points,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn interior_count(&self) -> usize {
        self.counts[0]
    }

    fn ranges(&self) -> [std::ops::Range<usize>; 4] {
        let [a, b, c, d] = self.counts;
        [0..a, a..a + b, a + b..a + b + c, a + b + c..a + b + c + d]
    }

    pub fn terms(&self, jets: &PointJets) -> LossTerms {
        let [ri, rb, ro, r0] = self.ranges();
        let d_eff = self.props.effective_dispersion();
        let mean = |it: &mut dyn Iterator<Item = f64>, n: usize| {
            if n == 0 {
                0.0
            } else {
                it.map(|v| v * v).sum::<f64>() / n as f64
            }
        };
        LossTerms {
            pde: mean(
                &mut ri.clone().map(|k| residual_from(&self.props, jets.d_t[k], jets.d_x[k], jets.d_xx[k])),
                ri.len(),
            ),
            inlet: mean(
                &mut rb.clone().zip(&self.inlet_targets).map(|(k, g)| jets.value[k] - g),
                rb.len(),
            ),
            outlet: mean(&mut ro.clone().map(|k| d_eff * jets.d_x[k]), ro.len()),
            initial: mean(&mut r0.clone().map(|k| jets.value[k]), r0.len()),
        }
    }
}

impl JetObjective for PinnObjective {
    fn evaluate(&self, jets: &PointJets) -> Result<(f64, PointJets)> {
        let terms = self.terms(jets);
        for (name, v) in [
            ("pde", terms.pde),
            ("inlet", terms.inlet),
            ("outlet", terms.outlet),
            ("initial", terms.initial),
        ] {
            if !v.is_finite() {
                return Err(Error::NumericOverflow { term: name.into() });
            }
        }
        let w = &self.weights;
        let p = &self.props;
        let d_eff = p.effective_dispersion();
        let [ri, rb, ro, r0] = self.ranges();
        let mut adj = PointJets::zeros(jets.len());
        if !ri.is_empty() {
            let scale = 2.0 * w.pde / ri.len() as f64;
            for k in ri {
                let g = scale * residual_from(p, jets.d_t[k], jets.d_x[k], jets.d_xx[k]);
                adj.d_t[k] = g * p.porosity;
                adj.d_x[k] = g * p.velocity;
                adj.d_xx[k] = -g * d_eff;
            }
        }
        if !rb.is_empty() {
            let scale = 2.0 * w.inlet / rb.len() as f64;
            for (k, target) in rb.zip(&self.inlet_targets) {
                adj.value[k] = scale * (jets.value[k] - target);
            }
        }
        if !ro.is_empty() {
            let scale = 2.0 * w.outlet / ro.len() as f64;
            for k in ro {
                adj.d_x[k] = scale * d_eff * d_eff * jets.d_x[k];
            }
        }
        if !r0.is_empty() {
            let scale = 2.0 * w.initial / r0.len() as f64;
            for k in r0 {
                adj.value[k] = scale * jets.value[k];
            }
        }
        Ok((terms.weighted_total(w), adj))
    }
}
