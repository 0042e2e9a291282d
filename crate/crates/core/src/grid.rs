//! Log-uniform half-line grids and the functions sampled on them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 4096;
pub const DEFAULT_Y_MIN: f64 = 1e-6;
pub const DEFAULT_Y_MAX: f64 = 1e3;

const STENCIL: usize = 5;

#[derive(Clone, Copy, Debug)]
struct Stencil {
    start: usize,
    w: [f64; STENCIL],
}

impl Stencil {
    fn apply(&self, v: &[f64]) -> f64 {
        let s = &v[self.start..self.start + STENCIL];
        self.w.iter().zip(s).map(|(w, v)| w * v).sum()
    }
}

/// Geometric nodes on (0, y_max] plus precomputed difference stencils.
#[derive(Debug)]
pub struct Grid {
    nodes: Vec<f64>,
    alpha: f64,
    log_step: f64,
    first: Vec<Stencil>,
    second: Vec<Stencil>,
}

/// Log-uniform nodes from `y_min` to `y_max`, both included.
pub fn geometric_nodes(n: usize, y_min: f64, y_max: f64) -> Vec<f64> {
    let (a, b) = (y_min.ln(), y_max.ln());
    let h = (b - a) / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|j| (a + j as f64 * h).exp()).collect();
    nodes[0] = y_min;
    nodes[n - 1] = y_max;
    nodes
}

pub fn make_grid(alpha: f64, n: usize, y_min: f64, y_max: f64) -> Result<Grid> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if n < 64 {
        return Err(Error::Parameter(format!("need at least 64 nodes, got {n}")));
    }
    if !(y_min > 0.0 && y_min < 1.0 && y_max > 1.0 && y_max.is_finite()) {
        return Err(Error::Parameter(format!(
            "bounds must satisfy 0 < y_min < 1 < y_max, got [{y_min}, {y_max}]"
        )));
    }
    if y_min > 1e-4 {
        return Err(Error::Parameter(format!("y_min = {y_min} must not exceed 1e-4")));
    }
    let nodes = geometric_nodes(n, y_min, y_max);
    let log_step = (y_max.ln() - y_min.ln()) / (n - 1) as f64;
    let mut first = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    for i in 0..n {
        let start = i.saturating_sub(2).min(n - STENCIL);
        let local = &nodes[start..start + STENCIL];
        let scale = nodes[i] * log_step;
        let w = fornberg(nodes[i], local, scale);
        let mut w1 = [0.0; STENCIL];
        let mut w2 = [0.0; STENCIL];
        for j in 0..STENCIL {
            w1[j] = w[1][j] / scale;
            w2[j] = w[2][j] / (scale * scale);
        }
        first.push(Stencil { start, w: w1 });
        second.push(Stencil { start, w: w2 });
    }
    Ok(Grid { nodes, alpha, log_step, first, second })
}

/// Finite-difference weights for derivatives 0..=2 at `z`, with
/// coordinates rescaled by `scale` to keep the recursion well conditioned.
fn fornberg(z: f64, x: &[f64], scale: f64) -> [[f64; STENCIL]; 3] {
    let n = x.len();
    let xs: Vec<f64> = x.iter().map(|&v| (v - z) / scale).collect();
    let mut c = [[0.0; STENCIL]; 3];
    let mut c1 = 1.0;
    let mut c4 = xs[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(2);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i];
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

impl Grid {
    pub fn default_for(alpha: f64) -> Result<Grid> {
        make_grid(alpha, DEFAULT_NODES, DEFAULT_Y_MIN, DEFAULT_Y_MAX)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn y_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn y_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Spacing in ln y.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    /// Same bounds, twice the number of intervals.
    pub fn refined(&self) -> Result<Grid> {
        make_grid(self.alpha, 2 * self.len() - 1, self.y_min(), self.y_max())
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.len() == other.len()
            && self.y_min() == other.y_min()
            && self.y_max() == other.y_max()
    }

    /// Index of the node closest to `y` in log distance.
    pub fn nearest_index(&self, y: f64) -> usize {
        let j = ((y.ln() - self.y_min().ln()) / self.log_step).round();
        (j.max(0.0) as usize).min(self.len() - 1)
    }

    pub(crate) fn first_derivative(&self, v: &[f64]) -> Vec<f64> {
        self.first.iter().map(|s| s.apply(v)).collect()
    }

    pub(crate) fn second_derivative(&self, v: &[f64]) -> Vec<f64> {
        self.second.iter().map(|s| s.apply(v)).collect()
    }

    /// y·v'(y) at every node.
    pub(crate) fn log_derivative(&self, v: &[f64]) -> Vec<f64> {
        self.first
            .iter()
            .zip(&self.nodes)
            .map(|(s, y)| y * s.apply(v))
            .collect()
    }

    /// Trapezoid weights for ∫ F dy = ∫ F y d(ln y).
    pub(crate) fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.len();
        self.nodes
            .iter()
            .enumerate()
            .map(|(j, y)| {
                let end = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                end * self.log_step * y
            })
            .collect()
    }

    /// Running integral ∫_0^{y_j} F dy by the trapezoid rule in ln y with
    /// the h²/12 derivative correction on every panel.
    /// `head` is the contribution of [0, y_min].
    pub(crate) fn cumulative_integral(&self, integrand: &[f64], head: f64) -> Vec<f64> {
        let h = self.log_step;
        let g: Vec<f64> = integrand.iter().zip(&self.nodes).map(|(f, y)| f * y).collect();
        let dg = self.log_derivative(&g);
        let mut out = Vec::with_capacity(self.len());
        let mut acc = head;
        out.push(acc);
        for j in 1..self.len() {
            acc += 0.5 * h * (g[j] + g[j - 1]) - h * h / 12.0 * (dg[j] - dg[j - 1]);
            out.push(acc);
        }
        out
    }

    /// Replaces `v` below `radius` by a least-squares fit of the local model
    /// over nodes in [radius, 16·radius].
    pub(crate) fn continue_below(&self, v: &mut [f64], radius: f64, basis: Near) -> NearFit {
        let terms = basis.terms();
        let first = self.nearest_index(radius.max(self.y_min()));
        let last = self.nearest_index(4.0 * radius.max(self.y_min())).min(self.len() - 1);
        let count = 3 * terms.len();
        let fallback = NearFit::constant(v[0]);
        if last < first + count {
            return fallback;
        }
        let idx: Vec<usize> =
            (0..count).map(|i| first + (last - first) * i / (count - 1)).collect();
        let scale = self.nodes[last];
        let m = DMatrix::from_fn(count, terms.len(), |i, k| terms[k].eval(self.nodes[idx[i]] / scale));
        let rhs = DVector::from_iterator(count, idx.iter().map(|&i| v[i]));
        let Ok(c) = m.svd(true, true).solve(&rhs, 1e-14) else {
            return fallback;
        };
        // back to unscaled y: c z^p ln z = c s^-p y^p (ln y - ln s)
        let mut fit = NearFit { terms: Vec::with_capacity(terms.len() + 2) };
        for (k, t) in terms.iter().enumerate() {
            let coef = c[k] * scale.powf(-t.power);
            fit.terms.push(Term { coef, power: t.power, log: t.log });
            if t.log {
                fit.terms.push(Term { coef: -coef * scale.ln(), power: t.power, log: false });
            }
        }
        for j in 0..first {
            v[j] = fit.eval(self.nodes[j]);
        }
        fit
    }

    /// Index pair used to extrapolate a quantity to y = 0.
    fn origin_pair(&self) -> (usize, usize) {
        let m = ((4f64).ln() / self.log_step).round().max(1.0) as usize;
        (0, m.min(self.len() - 1))
    }

    /// Linear extrapolation of `q` sampled at nodes to y = 0.
    pub(crate) fn extrapolate_to_origin(&self, q: impl Fn(usize) -> f64) -> f64 {
        let (a, b) = self.origin_pair();
        let (ya, yb) = (self.nodes[a], self.nodes[b]);
        (q(a) * yb - q(b) * ya) / (yb - ya)
    }

    /// Slope at 0 of a function with values `v` and known value `v0` at 0.
    pub(crate) fn origin_slope(&self, v: &[f64], v0: f64) -> f64 {
        self.extrapolate_to_origin(|j| (v[j] - v0) / self.nodes[j])
    }

    /// Second derivative at 0 from values and the stored value and slope,
    /// by a three-term fit of (f - f(0) - y f'(0))/y² near y = 1e-4.
    pub(crate) fn origin_curvature(&self, v: &[f64], v0: f64, s0: f64, basis: Near) -> f64 {
        let mut q: Vec<f64> = v
            .iter()
            .zip(&self.nodes)
            .map(|(f, y)| (f - v0 - s0 * y) / (y * y))
            .collect();
        2.0 * self.continue_below(&mut q, CURVATURE_RADIUS, basis).value_at_zero()
    }
}

const CURVATURE_RADIUS: f64 = 1e-4;

/// Local behaviour assumed by [`Grid::continue_below`].
#[derive(Clone, Copy, Debug)]
pub(crate) enum Near {
    /// 1, y, y²
    Smooth,
    /// y, y², y^e, with y^e ln y when e collides with 1 or 2
    Vanishing { exponent: f64 },
    /// 1, y, y^e for e < 2, with y ln y when e is close to 1
    Offset { exponent: f64 },
}

impl Near {
    fn terms(self) -> Vec<Term> {
        let (integers, fractional): (&[f64], Option<f64>) = match self {
            Near::Smooth => (&[0.0, 1.0, 2.0, 3.0], None),
            Near::Vanishing { exponent } => (&[1.0, 2.0, 3.0], Some(exponent)),
            Near::Offset { exponent } => (&[0.0, 1.0, 2.0], Some(exponent)),
        };
        let top = integers[integers.len() - 1] + 0.5;
        let mut terms: Vec<Term> =
            integers.iter().map(|&power| Term { coef: 1.0, power, log: false }).collect();
        if let Some(e) = fractional {
            for power in [e, e + 1.0] {
                if power > top {
                    break;
                }
                let near = power.round();
                let log = (power - near).abs() < 0.05;
                let power = if log { near } else { power };
                terms.push(Term { coef: 1.0, power, log });
            }
        }
        terms
    }
}

/// c y^p, times ln y when `log` is set.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub coef: f64,
    pub power: f64,
    pub log: bool,
}

impl Term {
    fn eval(&self, y: f64) -> f64 {
        let v = self.coef * y.powf(self.power);
        if self.log {
            v * y.ln()
        } else {
            v
        }
    }

    /// ∫_0^Y y^q · term dy, for q + power > -1.
    fn moment(&self, q: f64, upper: f64) -> f64 {
        let m = q + self.power + 1.0;
        let base = self.coef * upper.powf(m) / m;
        if self.log {
            base * (upper.ln() - 1.0 / m)
        } else {
            base
        }
    }
}

/// Local model of a function near 0 from [`Grid::continue_below`].
#[derive(Clone, Debug)]
pub(crate) struct NearFit {
    terms: Vec<Term>,
}

impl NearFit {
    fn constant(v: f64) -> Self {
        NearFit { terms: vec![Term { coef: v, power: 0.0, log: false }] }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(y)).sum()
    }

    pub fn value_at_zero(&self) -> f64 {
        self.terms.iter().filter(|t| t.power == 0.0 && !t.log).map(|t| t.coef).sum()
    }

    /// Coefficient of y; the slope at 0 when no fractional power below 1 appears.
    pub fn slope(&self) -> f64 {
        self.terms.iter().filter(|t| t.power == 1.0 && !t.log).map(|t| t.coef).sum()
    }

    /// ∫_0^Y (Σ_k a_k y^(q_k)) · fit dy for weights given as (a_k, q_k).
    pub fn weighted_integral(&self, weight: &[(f64, f64)], upper: f64) -> f64 {
        weight
            .iter()
            .map(|&(a, q)| a * self.terms.iter().map(|t| t.moment(q, upper)).sum::<f64>())
            .sum()
    }
}

/// Asymptotic form assumed past y_max: a sum of powers
/// y^-(decay), y^-(decay + step), y^-(decay + 2 step), each also multiplied by
/// ln(y) when `log` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub decay: f64,
    pub step: f64,
    #[serde(default)]
    pub log: bool,
}

impl Default for TailModel {
    fn default() -> Self {
        TailModel::power(1.0, 1.0)
    }
}

impl TailModel {
    pub fn power(decay: f64, step: f64) -> Self {
        TailModel { decay, step, log: false }
    }

    pub fn with_log(self) -> Self {
        TailModel { log: true, ..self }
    }

    pub fn exponents(&self) -> [f64; 3] {
        [self.decay, self.decay + self.step, self.decay + 2.0 * self.step]
    }

    /// Tail of y^shift·f when f follows `self`.
    pub fn shifted(&self, shift: f64) -> TailModel {
        TailModel { decay: self.decay - shift, ..*self }
    }
}

/// Least-squares coefficients of a [`TailModel`].
#[derive(Clone, Copy, Debug)]
pub struct TailFit {
    pub exponents: [f64; 3],
    pub coeffs: [f64; 3],
    /// coefficients of ln(y)·y^-(exponents[k])
    pub log_coeffs: [f64; 3],
    pub misfit: f64,
}

impl TailFit {
    pub fn eval(&self, y: f64) -> f64 {
        let l = y.ln();
        (0..3)
            .map(|k| (self.coeffs[k] + self.log_coeffs[k] * l) * (-self.exponents[k] * l).exp())
            .sum()
    }
}

fn fit_tail(grid: &Grid, values: &[f64], model: TailModel) -> TailFit {
    let y_max = grid.y_max();
    let first = grid.nearest_index(y_max / 8.0);
    let idx: Vec<usize> = {
        let span = grid.len() - first;
        let stride = (span / 64).max(1);
        let mut v: Vec<usize> = (first..grid.len()).step_by(stride).collect();
        if *v.last().unwrap() != grid.len() - 1 {
            v.push(grid.len() - 1);
        }
        v
    };
    let ex = model.exponents();
    let cols = if model.log { 6 } else { 3 };
    let a = DMatrix::from_fn(idx.len(), cols, |i, k| {
        let z = grid.nodes[idx[i]] / y_max;
        if k < 3 {
            z.powf(-ex[k])
        } else {
            z.ln() * z.powf(-ex[k - 3])
        }
    });
    let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| values[i]));
    let scale = b.amax();
    if scale == 0.0 || !scale.is_finite() {
        return TailFit { exponents: ex, coeffs: [0.0; 3], log_coeffs: [0.0; 3], misfit: 0.0 };
    }
    let svd = a.clone().svd(true, true);
    let sol = svd.solve(&b, 1e-13).unwrap_or_else(|_| DVector::zeros(cols));
    let misfit = (&a * &sol - &b).amax() / scale;
    let (mut coeffs, mut log_coeffs) = ([0.0; 3], [0.0; 3]);
    for k in 0..3 {
        coeffs[k] = sol[k] * y_max.powf(ex[k]);
        if model.log {
            // ln(y/y_max) = ln y - ln y_max
            log_coeffs[k] = sol[k + 3] * y_max.powf(ex[k]);
            coeffs[k] -= log_coeffs[k] * y_max.ln();
        }
    }
    TailFit { exponents: ex, coeffs, log_coeffs, misfit }
}

/// Real function on the half-line sampled at grid nodes, with its value and
/// slope at the excluded origin stored alongside.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    value_at_zero: f64,
    slope_at_zero: f64,
    tail: TailModel,
    fit: OnceLock<TailFit>,
}

impl GridFunction {
    pub fn new(
        grid: &Arc<Grid>,
        values: Vec<f64>,
        value_at_zero: f64,
        slope_at_zero: f64,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !value_at_zero.is_finite() || !slope_at_zero.is_finite() {
            return Err(Error::NonFinite("origin data".into()));
        }
        Ok(Self::raw(grid, values, value_at_zero, slope_at_zero))
    }

    pub(crate) fn raw(grid: &Arc<Grid>, values: Vec<f64>, v0: f64, s0: f64) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values,
            value_at_zero: v0,
            slope_at_zero: s0,
            tail: TailModel::default(),
            fit: OnceLock::new(),
        }
    }

    pub fn from_fn(
        grid: &Arc<Grid>,
        f: impl Fn(f64) -> f64,
        value_at_zero: f64,
        slope_at_zero: f64,
    ) -> Self {
        let values = grid.nodes.iter().map(|&y| f(y)).collect();
        Self::raw(grid, values, value_at_zero, slope_at_zero)
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::raw(grid, vec![0.0; grid.len()], 0.0, 0.0)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    pub fn slope_at_zero(&self) -> f64 {
        self.slope_at_zero
    }

    pub fn tail(&self) -> TailModel {
        self.tail
    }

    pub fn with_tail(mut self, tail: TailModel) -> Self {
        self.tail = tail;
        self.fit = OnceLock::new();
        self
    }

    pub fn with_origin(mut self, value_at_zero: f64, slope_at_zero: f64) -> Self {
        self.value_at_zero = value_at_zero;
        self.slope_at_zero = slope_at_zero;
        self
    }

    pub fn tail_fit(&self) -> &TailFit {
        self.fit.get_or_init(|| fit_tail(&self.grid, &self.values, self.tail))
    }

    fn check_grid(&self, other: &GridFunction) {
        assert!(
            Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid),
            "grid functions live on different grids"
        );
    }

    fn zip(&self, other: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.check_grid(other);
        self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        let values = self.values.iter().map(|v| c * v).collect();
        Self::raw(&self.grid, values, c * self.value_at_zero, c * self.slope_at_zero)
            .with_tail(self.tail)
    }

    /// self + c·other
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Self {
        let values = self.zip(other, |a, b| a + c * b);
        Self::raw(
            &self.grid,
            values,
            self.value_at_zero + c * other.value_at_zero,
            self.slope_at_zero + c * other.slope_at_zero,
        )
        .with_tail(self.tail)
    }

    /// Pointwise product; origin data follow the product rule.
    pub fn product(&self, other: &GridFunction) -> Self {
        let values = self.zip(other, |a, b| a * b);
        Self::raw(
            &self.grid,
            values,
            self.value_at_zero * other.value_at_zero,
            self.value_at_zero * other.slope_at_zero + self.slope_at_zero * other.value_at_zero,
        )
        .with_tail(self.tail)
    }

    /// y·f'(y); vanishes at 0 with slope f'(0).
    pub fn log_derivative(&self) -> Self {
        let values = self.grid.log_derivative(&self.values);
        Self::raw(&self.grid, values, 0.0, self.slope_at_zero).with_tail(self.tail)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.value_at_zero.is_finite()
            && self.slope_at_zero.is_finite()
    }

    /// Interpolated value inside the grid, tail model beyond it.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if x > self.grid.y_max() {
            Ok(self.tail_fit().eval(x))
        } else {
            interpolate(self, x)
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("y,value\n");
        for (y, v) in self.grid.nodes.iter().zip(&self.values) {
            out.push_str(&format!("{y:.16e},{v:.16e}\n"));
        }
        fs::write(path, out)?;
        let meta = Sidecar {
            value_at_zero: self.value_at_zero,
            slope_at_zero: self.slope_at_zero,
            alpha: self.grid.alpha,
            y_max: self.grid.y_max(),
            y_min: self.grid.y_min(),
            n: self.grid.len(),
            tail: self.tail,
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<GridFunction> {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let grid = Arc::new(make_grid(meta.alpha, meta.n, meta.y_min, meta.y_max)?);
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("y,value") {
            return Err(Error::Parse(format!("{}: expected header y,value", path.display())));
        }
        let mut values = Vec::with_capacity(meta.n);
        for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let mut parts = line.split(',');
            let (y, v) = match (parts.next(), parts.next()) {
                (Some(y), Some(v)) => (y, v),
                _ => return Err(Error::Parse(format!("line {}: expected two columns", k + 2))),
            };
            let y: f64 = y.trim().parse().map_err(|_| Error::Parse(format!("bad y on line {}", k + 2)))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad value on line {}", k + 2)))?;
            if k >= grid.len() || (y / grid.nodes[k] - 1.0).abs() > 1e-12 {
                return Err(Error::Parse(format!("node {k} does not match the sidecar grid")));
            }
            values.push(v);
        }
        Ok(GridFunction::new(&grid, values, meta.value_at_zero, meta.slope_at_zero)?
            .with_tail(meta.tail))
    }
}

impl std::ops::Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.axpy(1.0, rhs)
    }
}

impl std::ops::Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.axpy(-1.0, rhs)
    }
}

impl std::ops::Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, c: f64) -> GridFunction {
        self.scale(c)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    value_at_zero: f64,
    slope_at_zero: f64,
    alpha: f64,
    y_max: f64,
    y_min: f64,
    n: usize,
    tail: TailModel,
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// First or second derivative by sliding five-point fits.
pub fn differentiate(f: &GridFunction, order: usize) -> Result<GridFunction> {
    let grid = &f.grid;
    let (values, v0) = match order {
        1 => (grid.first_derivative(&f.values), f.slope_at_zero),
        2 => (
            grid.second_derivative(&f.values),
            grid.origin_curvature(&f.values, f.value_at_zero, f.slope_at_zero, Near::Smooth),
        ),
        _ => return Err(Error::Parameter(format!("derivative order must be 1 or 2, got {order}"))),
    };
    let s0 = grid.origin_slope(&values, v0);
    let tail = TailModel { decay: f.tail.decay + order as f64, ..f.tail };
    Ok(GridFunction::raw(grid, values, v0, s0).with_tail(tail))
}

/// Derivative count, integrability exponent and power weight y^γ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub k: usize,
    pub p: f64,
    pub gamma: f64,
}

impl WeightedNormSpec {
    pub fn new(k: usize, p: f64, gamma: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Parameter(format!("p must lie in (1, inf), got {p}")));
        }
        Ok(WeightedNormSpec { k, p, gamma })
    }

    pub fn l2() -> Self {
        WeightedNormSpec { k: 0, p: 2.0, gamma: 0.0 }
    }

    /// Whether γ < (p - 1)/p.
    pub fn hardy_admissible(&self) -> bool {
        self.gamma < (self.p - 1.0) / self.p
    }
}

/// (∫_0^{y_max} |y^γ g|^p dy)^{1/p} for sampled `g`.
pub(crate) fn lp_norm(grid: &Grid, g: &[f64], p: f64, gamma: f64) -> Result<f64> {
    let w = grid.quadrature_weights();
    let f = |y: f64, v: f64| (y.powf(gamma) * v).abs().powf(p);
    let mut total = 0.0;
    for ((y, v), w) in grid.nodes.iter().zip(g).zip(&w) {
        total += w * f(*y, *v);
    }
    let lead = gamma * p + 1.0;
    if lead <= 0.0 && g[0] != 0.0 {
        return Err(Error::Parameter(format!("weight y^{gamma} is not integrable at 0")));
    }
    if lead > 0.0 {
        total += f(grid.nodes[0], g[0]) * grid.nodes[0] / lead;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("norm integrand".into()));
    }
    Ok(total.powf(1.0 / p))
}

/// Σ_{j≤k} ‖y^γ f^{(j)}‖_{L^p}.
pub fn norm(f: &GridFunction, spec: WeightedNormSpec) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::NonFinite("grid function values".into()));
    }
    let mut total = lp_norm(&f.grid, &f.values, spec.p, spec.gamma)?;
    for d in derivatives(f, spec.k)? {
        total += lp_norm(&f.grid, &d.values, spec.p, spec.gamma)?;
    }
    Ok(total)
}

/// f', f'', f''', ... up to order k; orders 1 and 2 use direct stencils.
pub(crate) fn derivatives(f: &GridFunction, k: usize) -> Result<Vec<GridFunction>> {
    let mut out: Vec<GridFunction> = Vec::with_capacity(k);
    for j in 1..=k {
        let d = match j {
            1 | 2 => differentiate(f, j)?,
            _ => differentiate(&out[j - 2], 1)?,
        };
        out.push(d);
    }
    Ok(out)
}

/// The barred norm: ‖f‖ + ‖y f'‖ in the same weighted Sobolev norm.
pub fn bar_norm(f: &GridFunction, spec: WeightedNormSpec) -> Result<f64> {
    Ok(norm(f, spec)? + norm(&f.log_derivative(), spec)?)
}

/// Cubic Lagrange interpolation; the stored origin value anchors [0, y_min].
pub fn interpolate(f: &GridFunction, x: f64) -> Result<f64> {
    let grid = &f.grid;
    let y_max = grid.y_max();
    if !(x >= 0.0) || x > y_max {
        return Err(Error::OutOfRange { x, y_max });
    }
    if x == 0.0 {
        return Ok(f.value_at_zero);
    }
    let nodes = &grid.nodes;
    let v = &f.values;
    if x < nodes[0] {
        let xs = [0.0, nodes[0], nodes[1], nodes[2]];
        let fs = [f.value_at_zero, v[0], v[1], v[2]];
        return Ok(lagrange4(&xs, &fs, x));
    }
    let j = ((x.ln() - nodes[0].ln()) / grid.log_step).floor() as usize;
    let mut j = j.min(grid.len() - 2);
    while j + 1 < grid.len() - 1 && nodes[j + 1] <= x {
        j += 1;
    }
    while j > 0 && nodes[j] > x {
        j -= 1;
    }
    if nodes[j] == x {
        return Ok(v[j]);
    }
    if nodes[j + 1] == x {
        return Ok(v[j + 1]);
    }
    let s = j.saturating_sub(1).min(grid.len() - 4);
    let xs = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
    let fs = [v[s], v[s + 1], v[s + 2], v[s + 3]];
    Ok(lagrange4(&xs, &fs, x))
}

fn lagrange4(xs: &[f64; 4], fs: &[f64; 4], x: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        total += w * fs[i];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(make_grid(1.0, n, 1e-6, 1e3).unwrap())
    }

    #[test]
    fn three_geometric_nodes() {
        let nodes = geometric_nodes(3, 0.01, 100.0);
        assert_eq!(nodes[0], 0.01);
        assert!((nodes[1] - 1.0).abs() < 1e-15);
        assert_eq!(nodes[2], 100.0);
    }

    #[test]
    fn grid_endpoints_and_ratio() {
        let g = make_grid(1.0, 4097, 1e-6, 1e3).unwrap();
        assert_eq!(g.y_min(), 1e-6);
        assert_eq!(g.y_max(), 1e3);
        let r0 = g.nodes()[1] / g.nodes()[0];
        for w in g.nodes().windows(2) {
            assert!((w[1] / w[0] / r0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(make_grid(0.5, 1, 1e-6, 1e3).is_err());
        assert!(make_grid(0.5, 63, 1e-6, 1e3).is_err());
        assert!(make_grid(0.0, 128, 1e-6, 1e3).is_err());
        assert!(make_grid(1.5, 128, 1e-6, 1e3).is_err());
        assert!(make_grid(0.5, 128, 2.0, 1e3).is_err());
        assert!(make_grid(0.5, 128, 1e-6, 0.5).is_err());
    }

    #[test]
    fn derivative_of_square() {
        let g = grid(2048);
        let f = GridFunction::from_fn(&g, |y| y * y, 0.0, 0.0);
        let d = differentiate(&f, 1).unwrap();
        for (y, v) in g.nodes().iter().zip(d.values()) {
            assert!((v / (2.0 * y) - 1.0).abs() < 1e-8, "{y}: {v}");
        }
        let d2 = differentiate(&f, 2).unwrap();
        assert!((d2.value_at_zero() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(512);
        let f = GridFunction::from_fn(&g, |_| 3.5, 3.5, 0.0);
        let d = differentiate(&f, 1).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-9 * 3.5 / 1e-6));
        let scale: Vec<f64> = d.values().iter().zip(g.nodes()).map(|(v, y)| v * y).collect();
        assert!(scale.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = Arc::new(Grid::default_for(1.0).unwrap());
        let f = GridFunction::from_fn(&g, f64::sin, 0.0, 1.0);
        let d2 = differentiate(&f, 2).unwrap();
        // Interior nodes: the spacing y·h must resolve the oscillation, and
        // below 1e-4 the rounding of sin(y) amplified by 1/(y·h)² exceeds 1e-6.
        let mut worst = 0.0f64;
        for (&y, &v) in g.nodes().iter().zip(d2.values()) {
            if y < 1e-4 || y * g.log_step() > 0.05 {
                continue;
            }
            worst = worst.max((v + y.sin()).abs());
        }
        assert!(worst <= 1e-5, "{worst}");
    }

    #[test]
    fn exponential_norms() {
        let g = grid(4096);
        let f = GridFunction::from_fn(&g, |y| (-y).exp(), 1.0, -1.0);
        let n0 = norm(&f, WeightedNormSpec::l2()).unwrap();
        assert!((n0 - 0.5f64.sqrt()).abs() < 1e-5, "{n0}");
        let n1 = norm(&f, WeightedNormSpec::new(1, 2.0, 0.0).unwrap()).unwrap();
        assert!((n1 - 2.0 * 0.5f64.sqrt()).abs() < 1e-5, "{n1}");
        assert_eq!(norm(&GridFunction::zeros(&g), WeightedNormSpec::l2()).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = grid(1024);
        let f = GridFunction::from_fn(&g, |y| y * y * y, 0.0, 0.0);
        for &x in &[3e-7, 2.5e-5, 0.137, 1.9, 47.3, 999.0] {
            let v = interpolate(&f, x).unwrap();
            assert!((v / (x * x * x) - 1.0).abs() < 1e-9, "{x}: {v}");
        }
        assert_eq!(interpolate(&f, 0.0).unwrap(), 0.0);
        assert_eq!(interpolate(&f, g.nodes()[77]).unwrap(), f.values()[77]);
        assert!(matches!(interpolate(&f, 1001.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn tail_fit_recovers_powers() {
        let g = grid(2048);
        let f = GridFunction::from_fn(&g, |y| 3.0 / y - 2.0 / (y * y), 0.0, 0.0);
        let fit = f.tail_fit();
        assert!((fit.coeffs[0] - 3.0).abs() < 1e-9);
        assert!((fit.eval(5e3) - (3.0 / 5e3 - 2.0 / 25e6)).abs() < 1e-13);
        let f = GridFunction::from_fn(&g, |y| (2.0 - 0.7 * y.ln()) / y + 1.0 / (y * y), 0.0, 0.0)
            .with_tail(TailModel::default().with_log());
        let fit = f.tail_fit();
        assert!((fit.log_coeffs[0] + 0.7).abs() < 1e-8 && (fit.coeffs[0] - 2.0).abs() < 1e-7);
        let y = 1e5;
        assert!((fit.eval(y) - (2.0 - 0.7 * y.ln()) / y - 1.0 / (y * y)).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let g = grid(128);
        let f = GridFunction::from_fn(&g, |y| y / (1.0 + y * y), 0.0, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        f.write_csv(&path).unwrap();
        let back = GridFunction::read_csv(&path).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.slope_at_zero(), 1.0);
    }
}
