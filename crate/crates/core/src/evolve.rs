//! Method of lines for w_t + a u w_x = u_x w, u_x = Hw, on odd data stored
//! on the positive half-line.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::exact_w;
use crate::grid::{interpolate, make_grid, Grid, GridFunction, TailModel};
use crate::hilbert::HilbertPlan;
use crate::solver::ProfileSolution;

/// Log-graded nodes in the original variable x > 0.
#[derive(Clone, Debug)]
pub struct EvolutionGrid {
    grid: Arc<Grid>,
}

impl EvolutionGrid {
    pub fn new(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        Ok(EvolutionGrid { grid: Arc::new(make_grid(1.0, n, x_min, x_max)?) })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// stored snapshot times; empty means every `snapshot_interval`
    pub snapshots: Vec<f64>,
    pub snapshot_interval: f64,
    /// stop once sup|w| exceeds this multiple of sup|w0|
    pub growth_limit: f64,
    /// Hölder exponent of the datum at 0, carried for the collapse check
    pub alpha: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            n: 4096,
            x_min: 1e-12,
            x_max: 1e6,
            dt_max: 0.01,
            dt_min: 1e-10,
            snapshots: Vec::new(),
            snapshot_interval: 0.05,
            growth_limit: 1e3,
            alpha: 1.0,
        }
    }
}

impl EvolveConfig {
    pub fn grid(&self) -> Result<EvolutionGrid> {
        EvolutionGrid::new(self.n, self.x_min, self.x_max)
    }

    fn snapshot_times(&self, t_end: f64) -> Vec<f64> {
        let mut times: Vec<f64> = if self.snapshots.is_empty() {
            let count = (t_end / self.snapshot_interval + 1e-9).floor() as usize;
            (1..=count).map(|k| k as f64 * self.snapshot_interval).collect()
        } else {
            self.snapshots.iter().copied().filter(|&t| t > 0.0 && t <= t_end).collect()
        };
        times.sort_by(f64::total_cmp);
        times.dedup();
        if times.last().map_or(true, |&t| t < t_end) {
            times.push(t_end);
        }
        times
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    Completed,
    GrowthLimit,
    StepUnderflow,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub alpha: f64,
    pub a: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    pub sup_norms: Vec<f64>,
    pub steps: usize,
    pub termination: Termination,
}

struct Rhs {
    plan: HilbertPlan,
    a: f64,
    tail: TailModel,
}

struct Eval {
    dw: Vec<f64>,
    hw_sup: f64,
    speed: f64,
}

impl Rhs {
    fn eval(&self, grid: &Arc<Grid>, w: &[f64]) -> Eval {
        let x = grid.nodes();
        let slope = w[0] / x[0];
        let f = GridFunction::raw(grid, w.to_vec(), 0.0, slope).with_tail(self.tail);
        let hw = self.plan.transform(&f, 0.0, slope);
        let hw_sup = hw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut dw: Vec<f64> = hw.iter().zip(w).map(|(h, w)| h * w).collect();
        let mut speed = 0.0f64;
        if self.a != 0.0 {
            let u = grid.cumulative_integral(&hw, hw[0] * x[0]);
            let xw = grid.log_derivative(w);
            for j in 0..x.len() {
                let rate = self.a * u[j] / x[j];
                speed = speed.max(rate.abs());
                dw[j] -= rate * xw[j];
            }
        }
        Eval { dw, hw_sup, speed }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn evolve(w0: &GridFunction, a: f64, t_end: f64, config: &EvolveConfig) -> Result<Trajectory> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Parameter(format!("t_end must be positive, got {t_end}")));
    }
    if !(config.dt_max > 0.0 && config.dt_min > 0.0 && config.snapshot_interval > 0.0) {
        return Err(Error::Parameter("time steps must be positive".into()));
    }
    let grid = w0.grid();
    if !w0.is_finite() {
        return Err(Error::NonFinite("initial datum".into()));
    }
    let rhs = Rhs { plan: HilbertPlan::new(grid, 1.0, 2.0)?, a, tail: w0.tail() };
    let h = grid.log_step();
    let sup0 = w0.sup_norm();
    let mut traj = Trajectory {
        alpha: config.alpha,
        a,
        times: vec![0.0],
        snapshots: vec![w0.clone()],
        sup_norms: vec![sup0],
        steps: 0,
        termination: Termination::Completed,
    };
    let targets = config.snapshot_times(t_end);
    let mut w = w0.values().to_vec();
    let mut t = 0.0;
    let n = w.len();
    let stage = |w: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        w.iter().zip(k).map(|(w, k)| w + c * k).collect()
    };
    for &target in &targets {
        while t < target {
            let k1 = rhs.eval(grid, &w);
            let mut dt = config.dt_max;
            if k1.speed > 0.0 {
                dt = dt.min(0.5 * h / k1.speed);
            }
            if k1.hw_sup > 0.0 {
                dt = dt.min(0.2 / k1.hw_sup);
            }
            if dt < config.dt_min {
                traj.termination = Termination::StepUnderflow;
                return Ok(traj);
            }
            // land on the snapshot without a sliver step
            if t + dt >= target - 1e-12 * target.max(1.0) {
                dt = target - t;
            }
            let k2 = rhs.eval(grid, &stage(&w, &k1.dw, 0.5 * dt));
            let k3 = rhs.eval(grid, &stage(&w, &k2.dw, 0.5 * dt));
            let k4 = rhs.eval(grid, &stage(&w, &k3.dw, dt));
            for j in 0..n {
                w[j] += dt / 6.0 * (k1.dw[j] + 2.0 * k2.dw[j] + 2.0 * k3.dw[j] + k4.dw[j]);
            }
            t = if dt == target - t { target } else { t + dt };
            traj.steps += 1;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("solution at t = {t}")));
            }
            if sup(&w) > config.growth_limit * sup0 {
                traj.termination = Termination::GrowthLimit;
                return Ok(traj);
            }
        }
        let slope = w[0] / grid.nodes()[0];
        traj.times.push(t);
        traj.sup_norms.push(sup(&w));
        traj.snapshots.push(GridFunction::raw(grid, w.clone(), 0.0, slope).with_tail(w0.tail()));
    }
    Ok(traj)
}

/// -2x/(1+x²) on the evolution grid.
pub fn clm_datum(grid: &EvolutionGrid) -> GridFunction {
    GridFunction::from_fn(grid.grid(), |x| -2.0 * x / (1.0 + x * x), 0.0, -2.0)
}

/// The exact a = 0 profile in the original variable, W(x^α).
pub fn exact_datum(alpha: f64, grid: &EvolutionGrid) -> Result<GridFunction> {
    crate::exact::check_alpha(alpha)?;
    let g = GridFunction::from_fn(grid.grid(), |x| exact_w(alpha, x.powf(alpha)), 0.0, 0.0);
    let slope = g.values()[0] / grid.nodes()[0];
    Ok(g.with_origin(0.0, slope).with_tail(TailModel::power(alpha, alpha)))
}

/// w0(x) = α Ω(x^α) for a solved profile.
pub fn profile_datum(profile: &ProfileSolution, grid: &EvolutionGrid) -> Result<GridFunction> {
    let alpha = profile.alpha;
    let values = grid
        .nodes()
        .iter()
        .map(|&x| Ok(alpha * profile.omega.evaluate(x.powf(alpha))?))
        .collect::<Result<Vec<f64>>>()?;
    let slope = values[0] / grid.nodes()[0];
    let decay = alpha / (1.0 + profile.lambda);
    Ok(GridFunction::new(grid.grid(), values, 0.0, slope)?.with_tail(TailModel::power(decay, alpha)))
}

/// sup over nodes of |(1-t) w(x,t) - w(x/(1-t)^β, 0)| / sup|w(·,0)| per
/// snapshot, with β = (1+λ)/α.
pub fn check_self_similar_collapse(traj: &Trajectory, profile: &ProfileSolution) -> Result<Vec<f64>> {
    if (traj.alpha - profile.alpha).abs() > 1e-12 {
        return Err(Error::Parameter(format!(
            "trajectory alpha {} differs from profile alpha {}",
            traj.alpha, profile.alpha
        )));
    }
    let w0 = &traj.snapshots[0];
    let scale = w0.sup_norm();
    if scale == 0.0 {
        return Err(Error::Degenerate("zero initial datum".into()));
    }
    let beta = (1.0 + profile.lambda) / profile.alpha;
    let x = w0.grid().nodes();
    let x_max = w0.grid().y_max();
    let mut out = Vec::with_capacity(traj.times.len());
    for (t, w) in traj.times.iter().zip(&traj.snapshots) {
        let stretch = (1.0 - t).powf(-beta);
        let mut dev = 0.0f64;
        for (j, &xj) in x.iter().enumerate() {
            let z = xj * stretch;
            if z > x_max {
                break;
            }
            let want = interpolate(w0, z)?;
            dev = dev.max(((1.0 - t) * w.values()[j] - want).abs());
        }
        out.push(dev / scale);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupFit {
    pub t_star: f64,
    /// coefficient of determination of the 1/sup fit
    pub r_squared: f64,
}

/// Zero crossing of a straight line through 1/sup|w| over the last half of
/// the trajectory.
pub fn detect_blowup(traj: &Trajectory) -> Result<BlowupFit> {
    let m = traj.times.len();
    if m < 10 {
        return Err(Error::Precondition(format!("need at least 10 snapshots, have {m}")));
    }
    let growing = traj.sup_norms.windows(2).all(|w| w[1] > w[0]);
    if !growing {
        return Err(Error::Inconclusive("sup norm is not increasing".into()));
    }
    let start = m / 2;
    let t = &traj.times[start..];
    let inv: Vec<f64> = traj.sup_norms[start..].iter().map(|s| 1.0 / s).collect();
    let k = t.len() as f64;
    let (mt, mi) = (t.iter().sum::<f64>() / k, inv.iter().sum::<f64>() / k);
    let sxy: f64 = t.iter().zip(&inv).map(|(a, b)| (a - mt) * (b - mi)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    let syy: f64 = inv.iter().map(|b| (b - mi) * (b - mi)).sum();
    let slope = sxy / sxx;
    let intercept = mi - slope * mt;
    if !(slope < 0.0) {
        return Err(Error::Inconclusive("1/sup norm is not decreasing".into()));
    }
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(BlowupFit { t_star: -intercept / slope, r_squared })
}
