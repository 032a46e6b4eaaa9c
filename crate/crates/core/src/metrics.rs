//! Error norms against the oracle and residual heat-map export.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffnet::Mlp;
use crate::error::{Error, Result};
use crate::fdsolver::FdSolution;
use crate::pde::{linspace, DomainSpec, MediumProperties};
use crate::sampling::ResidualField;
use crate::training::batch_residuals;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGridConfig {
    pub n_t: usize,
    pub n_x: usize,
}

impl Default for EvalGridConfig {
    fn default() -> Self {
        EvalGridConfig { n_t: 121, n_x: 101 }
    }
}

/// Dense equi-spaced evaluation mesh covering the whole domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub t_axis: Vec<f64>,
    pub x_axis: Vec<f64>,
}

impl EvalGrid {
    pub fn new(domain: &DomainSpec, cfg: &EvalGridConfig) -> Result<Self> {
        if cfg.n_t < 2 || cfg.n_x < 2 {
            return Err(Error::config("metrics.n_t", "evaluation grid needs at least 2 nodes per axis"));
        }
        Ok(EvalGrid {
            t_axis: linspace(0.0, domain.t_max, cfg.n_t),
            x_axis: linspace(domain.x_min, domain.x_max, cfg.n_x),
        })
    }

    /// Row-major, `t` slow.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.t_axis
            .iter()
            .flat_map(|&t| self.x_axis.iter().map(move |&x| (t, x)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.t_axis.len() * self.x_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn predict(&self, net: &Mlp) -> Result<Vec<f64>> {
        Ok(net.eval_batch(&self.points())?.value)
    }

    pub fn reference(&self, oracle: &FdSolution) -> Result<Vec<f64>> {
        self.points().into_iter().map(|(t, x)| oracle.sample_at(t, x)).collect()
    }
}

/// `||pred - ref||_2 / ||ref||_2` over flat value lists.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Numeric("prediction and reference lengths differ".into()));
    }
    let norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateReference("reference field has zero norm".into()));
    }
    let err = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        .sqrt();
    Ok(err / norm)
}

/// Coefficient of determination of `pred` against `reference`.
pub fn r_squared(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() || reference.len() < 2 {
        return Err(Error::Numeric("series must have equal length >= 2".into()));
    }
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let total: f64 = reference.iter().map(|r| (r - mean) * (r - mean)).sum();
    if total == 0.0 {
        return Err(Error::DegenerateReference("reference series has zero variance".into()));
    }
    let residual: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok(1.0 - residual / total)
}

pub fn residual_field_on(points: &[(f64, f64)], net: &Mlp, props: &MediumProperties) -> Result<ResidualField> {
    ResidualField::new(batch_residuals(net, props, points)?)
}

/// Breakthrough curve `c(t, x_max)` of the network at the oracle's stored times.
pub fn outlet_prediction(net: &Mlp, oracle: &FdSolution) -> Result<Vec<f64>> {
    let x_max = *oracle.nodes.last().expect("oracle nodes");
    let points: Vec<(f64, f64)> = oracle.times.iter().map(|&t| (t, x_max)).collect();
    Ok(net.eval_batch(&points)?.value)
}

/// Scalar field on a tensor grid, for CSV and SVG export.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub t_axis: Vec<f64>,
    pub x_axis: Vec<f64>,
    /// Row-major, `t` slow.
    pub values: Vec<f64>,
    pub label: String,
}

impl Heatmap {
    pub fn new(t_axis: Vec<f64>, x_axis: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != t_axis.len() * x_axis.len() || t_axis.is_empty() || x_axis.is_empty() {
            return Err(Error::Numeric("heat-map shape mismatch".into()));
        }
        Ok(Heatmap {
            t_axis,
            x_axis,
            values,
            label: label.into(),
        })
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Location and value of the largest entry.
    pub fn argmax(&self) -> ((f64, f64), f64) {
        let (k, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
        let nx = self.x_axis.len();
        ((self.t_axis[k / nx], self.x_axis[k % nx]), v)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "value"])?;
        let nx = self.x_axis.len();
        for (k, v) in self.values.iter().enumerate() {
            let (t, x) = (self.t_axis[k / nx], self.x_axis[k % nx]);
            w.write_record([t.to_string(), x.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Standalone SVG: one rectangle per grid node (time left to right, space
    /// bottom to top), linear color scale, min and max annotated.
    pub fn to_svg(&self) -> String {
        const LEFT: f64 = 70.0;
        const TOP: f64 = 40.0;
        const WIDTH: f64 = 560.0;
        const HEIGHT: f64 = 360.0;
        let (lo, hi) = self.range();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let nt = self.t_axis.len();
        let nx = self.x_axis.len();
        let cw = WIDTH / nt as f64;
        let ch = HEIGHT / nx as f64;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            LEFT + WIDTH + 120.0,
            TOP + HEIGHT + 60.0,
            LEFT + WIDTH + 120.0,
            TOP + HEIGHT + 60.0
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16">{}</text>"#,
            LEFT,
            escape(&self.label)
        );
        for (k, &v) in self.values.iter().enumerate() {
            let (it, ix) = (k / nx, k % nx);
            let x = LEFT + it as f64 * cw;
            let y = TOP + HEIGHT - (ix + 1) as f64 * ch;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                cw + 0.05,
                ch + 0.05,
                color((v - lo) / span)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{WIDTH}" height="{HEIGHT}" fill="none" stroke="black"/>"#
        );
        let (t0, t1) = (self.t_axis[0], self.t_axis[nt - 1]);
        let (x0, x1) = (self.x_axis[0], self.x_axis[nx - 1]);
        let base = TOP + HEIGHT;
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}" font-family="sans-serif" font-size="12">t = {t0}</text>"#, base + 18.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">t = {t1}</text>"#,
            LEFT + WIDTH,
            base + 18.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{base}" font-family="sans-serif" font-size="12" text-anchor="end">x = {x0}</text>"#, LEFT - 6.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">x = {x1}</text>"#, LEFT - 6.0, TOP + 12.0);
        // Color bar.
        let bar_x = LEFT + WIDTH + 20.0;
        let steps = 64;
        for s in 0..steps {
            let frac = s as f64 / (steps - 1) as f64;
            let y = TOP + HEIGHT - (s + 1) as f64 * HEIGHT / steps as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{bar_x}" y="{y:.3}" width="20" height="{:.3}" fill="{}"/>"#,
                HEIGHT / steps as f64 + 0.05,
                color(frac)
            );
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">max {hi:.3e}</text>"#, bar_x + 26.0, TOP + 10.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{base}" font-family="sans-serif" font-size="12">min {lo:.3e}</text>"#, bar_x + 26.0);
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear blue-white-red ramp on `[0, 1]`.
fn color(frac: f64) -> String {
    let f = frac.clamp(0.0, 1.0);
    let (r, g, b) = if f < 0.5 {
        let u = f / 0.5;
        (lerp(49.0, 247.0, u), lerp(54.0, 247.0, u), lerp(149.0, 247.0, u))
    } else {
        let u = (f - 0.5) / 0.5;
        (lerp(247.0, 165.0, u), lerp(247.0, 0.0, u), lerp(247.0, 38.0, u))
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a + (b - a) * u
}
