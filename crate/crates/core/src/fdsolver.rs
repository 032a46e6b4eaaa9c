//! Theta-scheme finite differences for the advection–dispersion column.
//!
//! Central differences in space, one tridiagonal (Thomas) solve per step.
//! The first `startup_steps` steps are each replaced by two implicit half
//! steps, which damps the non-smooth start-up modes Crank–Nicolson would
//! otherwise carry along without spoiling second-order accuracy.

use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{inlet_value, linspace, DomainSpec, InletPulseSpec, MediumProperties};

const TABLE_MAGIC: &[u8; 4] = b"CTAB";
const TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdConfig {
    pub n_x_cells: usize,
    pub n_t_steps: usize,
    pub theta: f64,
    pub startup_steps: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            n_x_cells: 2000,
            n_t_steps: 6000,
            theta: 0.5,
            startup_steps: 2,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_x_cells < 10 {
            return Err(Error::config("oracle.n_x_cells", "must be >= 10"));
        }
        if self.n_t_steps < 10 {
            return Err(Error::config("oracle.n_t_steps", "must be >= 10"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config("oracle.theta", "must lie in [0, 1]"));
        }
        if self.startup_steps > self.n_t_steps {
            return Err(Error::config("oracle.startup_steps", "exceeds n_t_steps"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutletCondition {
    /// `c_x = 0`, closed with a mirrored ghost node.
    ZeroGradient,
    Dirichlet(f64),
}

/// Fully general problem description: coefficients plus boundary and
/// initial data.
pub struct TransportProblem<'a> {
    pub props: MediumProperties,
    pub domain: DomainSpec,
    pub inlet: Box<dyn Fn(f64) -> f64 + 'a>,
    pub initial: Box<dyn Fn(f64) -> f64 + 'a>,
    pub outlet: OutletCondition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Thomas algorithm. `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.main.len();
    if sys.sub.len() != n || sys.sup.len() != n || sys.rhs.len() != n {
        return Err(Error::Numeric("tridiagonal dimensions disagree".into()));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut out = vec![0.0; n];
    thomas(&sys.sub, &sys.main, &sys.sup, &sys.rhs, &mut c, &mut d, &mut out)?;
    Ok(out)
}

fn thomas(
    sub: &[f64],
    main: &[f64],
    sup: &[f64],
    rhs: &[f64],
    c: &mut [f64],
    d: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let n = main.len();
    if n == 0 {
        return Ok(());
    }
    let mut pivot = main[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::SingularSystem { row: 0 });
    }
    c[0] = sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = main[i] - sub[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        c[i] = if i + 1 < n { sup[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
    }
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdSolution {
    pub times: Vec<f64>,
    pub nodes: Vec<f64>,
    /// Row-major `(times, nodes)` table.
    pub values: Vec<f64>,
    /// Set when the cell Peclet number is at least 2.
    pub peclet_warning: bool,
}

impl FdSolution {
    pub fn value(&self, it: usize, ix: usize) -> f64 {
        self.values[it * self.nodes.len() + ix]
    }

    pub fn row(&self, it: usize) -> &[f64] {
        let nx = self.nodes.len();
        &self.values[it * nx..(it + 1) * nx]
    }

    /// Bilinear interpolation on the stored table.
    pub fn sample_at(&self, t: f64, x: f64) -> Result<f64> {
        let (it, wt) = bracket(&self.times, t)
            .ok_or_else(|| Error::Domain(format!("t = {t} outside the oracle table")))?;
        let (ix, wx) = bracket(&self.nodes, x)
            .ok_or_else(|| Error::Domain(format!("x = {x} outside the oracle table")))?;
        let c00 = self.value(it, ix);
        let c01 = self.value(it, ix + 1);
        let c10 = self.value(it + 1, ix);
        let c11 = self.value(it + 1, ix + 1);
        Ok((1.0 - wt) * ((1.0 - wx) * c00 + wx * c01) + wt * ((1.0 - wx) * c10 + wx * c11))
    }

    /// Outlet series `c(t, x_max)` at every stored time.
    pub fn outlet_series(&self) -> Vec<f64> {
        let last = self.nodes.len() - 1;
        (0..self.times.len()).map(|it| self.value(it, last)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "c"])?;
        for (it, t) in self.times.iter().enumerate() {
            for (ix, x) in self.nodes.iter().enumerate() {
                w.write_record([t.to_string(), x.to_string(), self.value(it, ix).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary table: magic `CTAB`, version, row and column counts, then the
    /// row coordinates, column coordinates and row-major values, all little-endian.
    pub fn write_table<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, &self.times, &self.nodes, &self.values)
    }

    pub fn read_table<R: Read>(input: R) -> Result<Self> {
        let (times, nodes, values) = read_table(input)?;
        Ok(FdSolution {
            times,
            nodes,
            values,
            peclet_warning: false,
        })
    }

    pub fn table_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + 8 * (self.times.len() + self.nodes.len() + self.values.len()));
        self.write_table(&mut buf).expect("writing to memory");
        buf
    }
}

pub fn write_table<W: Write>(mut out: W, rows: &[f64], cols: &[f64], values: &[f64]) -> Result<()> {
    if values.len() != rows.len() * cols.len() {
        return Err(Error::Numeric("table shape mismatch".into()));
    }
    out.write_all(TABLE_MAGIC)?;
    out.write_all(&TABLE_VERSION.to_le_bytes())?;
    out.write_all(&(rows.len() as u64).to_le_bytes())?;
    out.write_all(&(cols.len() as u64).to_le_bytes())?;
    for v in rows.iter().chain(cols).chain(values) {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_table<R: Read>(mut input: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    if &word != TABLE_MAGIC {
        return Err(Error::Checkpoint("bad table magic".into()));
    }
    input.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != TABLE_VERSION {
        return Err(Error::Checkpoint("unsupported table version".into()));
    }
    let mut long = [0u8; 8];
    input.read_exact(&mut long)?;
    let nr = u64::from_le_bytes(long) as usize;
    input.read_exact(&mut long)?;
    let nc = u64::from_le_bytes(long) as usize;
    let mut read_n = |n: usize| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut long)?;
            v.push(f64::from_le_bytes(long));
        }
        Ok(v)
    };
    let rows = read_n(nr)?;
    let cols = read_n(nc)?;
    let values = read_n(nr * nc)?;
    Ok((rows, cols, values))
}

/// Index of the lower node and the fractional weight toward the upper one.
fn bracket(axis: &[f64], q: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n < 2 || !(axis[0]..=axis[n - 1]).contains(&q) {
        return None;
    }
    let i = axis.partition_point(|&a| a <= q).clamp(1, n - 1) - 1;
    let w = (q - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, w))
}

pub fn cell_peclet(props: &MediumProperties, dx: f64) -> f64 {
    props.velocity * dx / props.effective_dispersion()
}

/// Advection–dispersion with the pulse inlet, clean initial column and
/// zero-gradient outlet.
pub fn solve(
    props: &MediumProperties,
    domain: &DomainSpec,
    inlet: &InletPulseSpec,
    cfg: &FdConfig,
) -> Result<FdSolution> {
    let problem = TransportProblem {
        props: *props,
        domain: *domain,
        inlet: Box::new(|t| inlet_value(inlet, t)),
        initial: Box::new(|_| 0.0),
        outlet: OutletCondition::ZeroGradient,
    };
    solve_problem(&problem, cfg)
}

pub fn solve_problem(problem: &TransportProblem<'_>, cfg: &FdConfig) -> Result<FdSolution> {
    cfg.validate()?;
    problem.domain.validate()?;
    let p = &problem.props;
    if !(p.porosity > 0.0) || !(p.effective_dispersion() > 0.0) || !p.velocity.is_finite() {
        return Err(Error::config("medium", "porosity and effective dispersion must be > 0"));
    }
    let n = cfg.n_x_cells;
    let dx = problem.domain.length() / n as f64;
    let dt = problem.domain.t_max / cfg.n_t_steps as f64;
    let nodes = linspace(problem.domain.x_min, problem.domain.x_max, n + 1);
    let times = linspace(0.0, problem.domain.t_max, cfg.n_t_steps + 1);

    let peclet = cell_peclet(p, dx);
    let peclet_warning = peclet >= 2.0;
    if peclet_warning {
        warn!("cell Peclet number {peclet:.3} >= 2; central advection may oscillate");
    }

    // Semi-discrete operator on node i: lo*c[i-1] + mid*c[i] + hi*c[i+1].
    let d = p.effective_dispersion();
    let lo = (p.velocity / (2.0 * dx) + d / (dx * dx)) / p.porosity;
    let mid = -2.0 * d / (dx * dx) / p.porosity;
    let hi = (-p.velocity / (2.0 * dx) + d / (dx * dx)) / p.porosity;

    // Unknowns are nodes 1..=n (zero-gradient) or 1..n (Dirichlet outlet).
    let m = match problem.outlet {
        OutletCondition::ZeroGradient => n,
        OutletCondition::Dirichlet(_) => n - 1,
    };
    let stepper = Stepper { lo, mid, hi, m, outlet: problem.outlet };

    let mut values = Vec::with_capacity(times.len() * nodes.len());
    let mut c: Vec<f64> = nodes.iter().map(|&x| (problem.initial)(x)).collect();
    c[0] = (problem.inlet)(0.0);
    if let OutletCondition::Dirichlet(v) = problem.outlet {
        c[n] = v;
    }
    values.extend_from_slice(&c);

    let mut work = StepWork::new(m);
    for step in 0..cfg.n_t_steps {
        let t0 = times[step];
        let t1 = times[step + 1];
        if step < cfg.startup_steps {
            let th = 0.5 * (t0 + t1);
            stepper.advance(&mut c, &mut work, 1.0, th, dt * 0.5, &*problem.inlet)?;
            stepper.advance(&mut c, &mut work, 1.0, t1, dt * 0.5, &*problem.inlet)?;
        } else {
            stepper.advance(&mut c, &mut work, cfg.theta, t1, dt, &*problem.inlet)?;
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite concentration at step {step}")));
        }
        values.extend_from_slice(&c);
    }

    Ok(FdSolution {
        times,
        nodes,
        values,
        peclet_warning,
    })
}

struct Stepper {
    lo: f64,
    mid: f64,
    hi: f64,
    m: usize,
    outlet: OutletCondition,
}

struct StepWork {
    sub: Vec<f64>,
    main: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    out: Vec<f64>,
}

impl StepWork {
    fn new(m: usize) -> Self {
        StepWork {
            sub: vec![0.0; m],
            main: vec![0.0; m],
            sup: vec![0.0; m],
            rhs: vec![0.0; m],
            c: vec![0.0; m],
            d: vec![0.0; m],
            out: vec![0.0; m],
        }
    }
}

impl Stepper {
    /// One theta step from `t0` to `t1` on the full node vector `c`.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        c: &mut [f64],
        w: &mut StepWork,
        theta: f64,
        t1: f64,
        dt: f64,
        inlet: &dyn Fn(f64) -> f64,
    ) -> Result<()> {
        let m = self.m;
        let (lo, mid, hi) = (self.lo, self.mid, self.hi);
        let explicit = (1.0 - theta) * dt;
        let implicit = theta * dt;
        let inlet_new = inlet(t1);
        let last_node = c.len() - 1;
        for k in 0..m {
            let i = k + 1;
            let mirrored = i == last_node;
            let (l, h) = if mirrored { (lo + hi, 0.0) } else { (lo, hi) };
            let right = if mirrored { 0.0 } else { c[i + 1] };
            let lc = l * c[i - 1] + mid * c[i] + h * right;
            w.rhs[k] = c[i] + explicit * lc;
            w.main[k] = 1.0 - implicit * mid;
            w.sub[k] = -implicit * l;
            w.sup[k] = -implicit * h;
        }
        // Known boundary values move to the right-hand side.
        w.rhs[0] += implicit * lo * inlet_new;
        w.sub[0] = 0.0;
        if let OutletCondition::Dirichlet(v) = self.outlet {
            w.rhs[m - 1] += implicit * hi * v;
            w.sup[m - 1] = 0.0;
        }
        thomas(&w.sub, &w.main, &w.sup, &w.rhs, &mut w.c, &mut w.d, &mut w.out)?;
        c[0] = inlet_new;
        c[1..=m].copy_from_slice(&w.out);
        Ok(())
    }
}

/// Pure-diffusion probe with a closed-form solution, used to check accuracy
/// and convergence order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionProbe {
    pub porosity: f64,
    pub diffusion: f64,
    pub t_max: f64,
}

impl Default for DiffusionProbe {
    fn default() -> Self {
        // Decays the fundamental mode by roughly e^-1 over the horizon.
        DiffusionProbe {
            porosity: 0.3,
            diffusion: 5e-6,
            t_max: 6000.0,
        }
    }
}

impl DiffusionProbe {
    pub fn exact(&self, t: f64, x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        (-self.diffusion * pi * pi * t / self.porosity).exp() * (pi * x).sin()
    }

    pub fn solve(&self, cfg: &FdConfig) -> Result<FdSolution> {
        let problem = TransportProblem {
            props: MediumProperties {
                porosity: self.porosity,
                dispersivity: 0.0,
                velocity: 0.0,
                molecular_dispersion: self.diffusion,
            },
            domain: DomainSpec {
                t_max: self.t_max,
                x_min: 0.0,
                x_max: 1.0,
            },
            inlet: Box::new(|_| 0.0),
            initial: Box::new(|x| (std::f64::consts::PI * x).sin()),
            outlet: OutletCondition::Dirichlet(0.0),
        };
        solve_problem(&problem, cfg)
    }

    /// Max-norm error at the final time, relative to the exact peak.
    pub fn relative_error(&self, cfg: &FdConfig) -> Result<f64> {
        let sol = self.solve(cfg)?;
        let last = sol.times.len() - 1;
        let t = sol.times[last];
        let peak = self.exact(t, 0.5);
        let err = sol
            .nodes
            .iter()
            .enumerate()
            .map(|(ix, &x)| (sol.value(last, ix) - self.exact(t, x)).abs())
            .fold(0.0, f64::max);
        Ok(err / peak)
    }

    /// Errors and observed orders for a sequence of grids, each refining
    /// space and time by a factor of two.
    pub fn convergence(&self, base_cells: usize, base_steps: usize, levels: usize) -> Result<ConvergenceReport> {
        let mut errors = Vec::with_capacity(levels);
        for level in 0..levels {
            let cfg = FdConfig {
                n_x_cells: base_cells << level,
                n_t_steps: base_steps << level,
                ..FdConfig::default()
            };
            errors.push(((cfg.n_x_cells, cfg.n_t_steps), self.relative_error(&cfg)?));
        }
        let orders = errors.windows(2).map(|w| (w[0].1 / w[1].1).log2()).collect();
        Ok(ConvergenceReport { errors, orders })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `((cells, steps), relative error)` per level.
    pub errors: Vec<((usize, usize), f64)>,
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        !self.orders.is_empty() && self.orders.iter().all(|o| (lo..=hi).contains(o))
    }
}
