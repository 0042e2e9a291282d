//! Profile equation in Ω = W/α,
//!
//!   Φ(Ω, λ, a) = (1 + λ) y Ω' + aα Q y Ω' + (1 - α HΩ) Ω,
//!
//! where Q(y) = (1/α) ∫_0^1 (αHΩ)(ys) s^(1/α - 1) ds, and its solution by a
//! chord iteration frozen at the a = 0 profile.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::check_alpha;
use crate::grid::{interpolate, lp_norm, make_grid, Grid, GridFunction, TailModel};
use crate::grid::{DEFAULT_NODES, DEFAULT_Y_MAX, DEFAULT_Y_MIN};
use crate::hilbert::FractionalHilbert;
use crate::linop::{bordered_step, BasePoint};
use crate::quadrature::{gauss_jacobi, gauss_legendre, GaussRule};

/// Residual accepted at a = 0, where the closed form is returned directly.
pub const EXACT_RESIDUAL_BOUND: f64 = 5e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// continuation step in aα
    pub step: f64,
    pub velocity_nodes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n: DEFAULT_NODES,
            y_min: DEFAULT_Y_MIN,
            y_max: DEFAULT_Y_MAX,
            tol: 1e-9,
            max_iter: 50,
            step: 0.005,
            velocity_nodes: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.step > 0.0) {
            return Err(Error::Parameter(format!("step must be positive, got {}", self.step)));
        }
        if self.max_iter == 0 || self.velocity_nodes == 0 {
            return Err(Error::Parameter("iteration and node counts must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self, alpha: f64) -> Result<Grid> {
        make_grid(alpha, self.n, self.y_min, self.y_max)
    }
}

#[derive(Clone, Debug)]
pub struct ProfileSolution {
    pub alpha: f64,
    pub a: f64,
    pub lambda: f64,
    pub omega: GridFunction,
    pub residual_l2: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl ProfileSolution {
    /// The tilde profile W = αΩ.
    pub fn profile(&self) -> GridFunction {
        self.omega.scale(self.alpha)
    }
}

/// Decay of Ω at infinity for a given λ.
fn omega_tail(lambda: f64) -> TailModel {
    TailModel::power(1.0 / (1.0 + lambda), 1.0)
}

const SPLIT: f64 = 0.25;
const PANEL_NODES: usize = 16;

/// Rules for Q(y) = (1/α) ∫_0^1 H(ys) s^(1/α - 1) ds: Gauss-Jacobi with the
/// weight built in for ys ≤ 1/4, Gauss-Legendre panels in ln z above.
#[derive(Clone, Debug)]
pub struct VelocityQuadrature {
    alpha: f64,
    jacobi: GaussRule,
    legendre: GaussRule,
}

impl VelocityQuadrature {
    pub fn new(alpha: f64, nodes: usize) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(VelocityQuadrature {
            alpha,
            jacobi: gauss_jacobi(nodes, 0.0, 1.0 / alpha - 1.0)?,
            legendre: gauss_legendre(PANEL_NODES)?,
        })
    }

    fn at(&self, h: &GridFunction, y: f64) -> f64 {
        let inv = 1.0 / self.alpha;
        let top = h.grid().y_max();
        let eval = |z: f64| interpolate(h, z.min(top)).unwrap_or(f64::NAN);
        let s1 = (SPLIT / y).min(1.0);
        let near: f64 = self
            .jacobi
            .nodes
            .iter()
            .zip(&self.jacobi.weights)
            .map(|(x, w)| w * eval(y * s1 * 0.5 * (1.0 + x)))
            .sum();
        let mut total = inv * (0.5 * s1).powf(inv) * near;
        if s1 < 1.0 {
            let (lo, hi) = (SPLIT.ln(), y.ln());
            let panels = ((hi - lo) / std::f64::consts::LN_2).ceil().max(1.0) as usize;
            let width = (hi - lo) / panels as f64;
            for k in 0..panels {
                let a = lo + k as f64 * width;
                for (x, w) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
                    let v = a + 0.5 * width * (1.0 + x);
                    total += inv * 0.5 * width * w * eval(v.exp()) * ((v - hi) * inv).exp();
                }
            }
        }
        total
    }

    pub fn apply(&self, h: &GridFunction) -> Result<GridFunction> {
        let grid = h.grid();
        let values: Vec<f64> = grid.nodes().par_iter().map(|&y| self.at(h, y)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("velocity ratio".into()));
        }
        let v0 = h.value_at_zero();
        let s0 = h.slope_at_zero() / (1.0 + self.alpha);
        Ok(GridFunction::raw(grid, values, v0, s0))
    }
}

pub fn compute_velocity_ratio(hw: &GridFunction, alpha: f64) -> Result<GridFunction> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    VelocityQuadrature::new(alpha.min(1.0), SolverConfig::default().velocity_nodes)?.apply(hw)
}

/// Reusable pieces for repeated evaluations of Φ on one grid.
#[derive(Debug)]
pub struct PhiEvaluator {
    alpha: f64,
    op: FractionalHilbert,
    quad: VelocityQuadrature,
}

impl PhiEvaluator {
    pub fn new(alpha: f64, grid: &Arc<Grid>, velocity_nodes: usize) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(PhiEvaluator {
            alpha,
            op: FractionalHilbert::new(grid, 1.0 / alpha)?,
            quad: VelocityQuadrature::new(alpha, velocity_nodes)?,
        })
    }

    pub fn residual(&self, omega: &GridFunction, lambda: f64, a: f64) -> Result<GridFunction> {
        let alpha = self.alpha;
        let h = self.op.apply(omega)?;
        let yo = omega.log_derivative();
        let mut phi = yo.scale(1.0 + lambda).axpy(1.0, omega).axpy(-alpha, &h.product(omega));
        if a != 0.0 {
            let q = self.quad.apply(&h.scale(alpha))?;
            phi = phi.axpy(a * alpha, &q.product(&yo));
        }
        Ok(phi.with_tail(omega.tail()))
    }
}

pub fn residual_phi(omega: &GridFunction, lambda: f64, a: f64, alpha: f64) -> Result<GridFunction> {
    PhiEvaluator::new(alpha, omega.grid(), SolverConfig::default().velocity_nodes)?
        .residual(omega, lambda, a)
}

fn l2(f: &GridFunction) -> Result<f64> {
    lp_norm(f.grid(), f.values(), 2.0, 0.0)
}

/// Solver state that can be reused across continuation steps.
pub struct ProfileSolver {
    alpha: f64,
    config: SolverConfig,
    base: BasePoint,
    phi: PhiEvaluator,
}

impl ProfileSolver {
    pub fn new(alpha: f64, config: SolverConfig) -> Result<Self> {
        check_alpha(alpha)?;
        config.validate()?;
        let grid = Arc::new(config.grid(alpha)?);
        Ok(ProfileSolver {
            alpha,
            config,
            base: BasePoint::new(alpha, &grid)?,
            phi: PhiEvaluator::new(alpha, &grid, config.velocity_nodes)?,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.base.grid()
    }

    pub fn base(&self) -> &BasePoint {
        &self.base
    }

    pub fn solve(&self, a: f64, warm_start: Option<&ProfileSolution>) -> Result<ProfileSolution> {
        let alpha = self.alpha;
        let exact = self.base.exact.w.scale(1.0 / alpha);
        if a == 0.0 && warm_start.is_none() {
            let phi = self.phi.residual(&exact, 0.0, 0.0)?;
            let r = l2(&phi)?;
            if !(r <= EXACT_RESIDUAL_BOUND) {
                return Err(Error::NoConvergence { history: vec![r] });
            }
            return Ok(ProfileSolution {
                alpha,
                a,
                lambda: 0.0,
                omega: exact,
                residual_l2: r,
                iterations: 1,
                history: vec![r],
            });
        }
        let (mut omega, mut lambda) = match warm_start {
            Some(w) if w.omega.grid().same_as(self.grid()) => (w.omega.clone(), w.lambda),
            Some(w) => (self.transfer(&w.omega)?, w.lambda),
            None => (exact, 0.0),
        };
        let mut history = Vec::new();
        for _ in 0..self.config.max_iter {
            omega = omega.with_tail(omega_tail(lambda));
            let phi = self.phi.residual(&omega, lambda, a)?;
            let r = l2(&phi)?;
            if !r.is_finite() {
                return Err(Error::NonFinite(format!("residual at a = {a}")));
            }
            history.push(r);
            if r <= self.config.tol {
                return Ok(ProfileSolution {
                    alpha,
                    a,
                    lambda,
                    omega,
                    residual_l2: r,
                    iterations: history.len(),
                    history,
                });
            }
            let (v, mu) = bordered_step(&phi, &self.base)?;
            omega = omega.axpy(-1.0, &v);
            lambda -= mu;
        }
        Err(Error::NoConvergence { history })
    }

    fn transfer(&self, f: &GridFunction) -> Result<GridFunction> {
        let values = self
            .grid()
            .nodes()
            .iter()
            .map(|&y| f.evaluate(y))
            .collect::<Result<Vec<f64>>>()?;
        GridFunction::new(self.grid(), values, f.value_at_zero(), f.slope_at_zero())
    }
}

pub fn solve_profile(
    a: f64,
    alpha: f64,
    config: SolverConfig,
    warm_start: Option<&ProfileSolution>,
) -> Result<ProfileSolution> {
    ProfileSolver::new(alpha, config)?.solve(a, warm_start)
}

/// Least-squares fit λ(a) ≈ Σ_{k=1..4} c_k a^k.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaFit {
    pub coeffs: Vec<f64>,
    /// max |fit - λ| over the fitted points
    pub residual: f64,
    pub max_abs_lambda: f64,
}

pub fn fit_lambda(points: &[(f64, f64)]) -> Option<LambdaFit> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 != 0.0).collect();
    if pts.is_empty() {
        return None;
    }
    let degree = pts.len().min(4);
    let scale = pts.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    let m = DMatrix::from_fn(pts.len(), degree, |i, k| (pts[i].0 / scale).powi(k as i32 + 1));
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let sol = m.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let fitted = &m * &sol;
    let residual = (fitted - &b).amax();
    let coeffs = (0..degree).map(|k| sol[k] / scale.powi(k as i32 + 1)).collect();
    let max_abs_lambda = b.amax();
    Some(LambdaFit { coeffs, residual, max_abs_lambda })
}

#[derive(Debug)]
pub struct Continuation {
    pub solutions: Vec<ProfileSolution>,
    pub fit: Option<LambdaFit>,
    /// target at which the sweep stopped, and why
    pub failure: Option<(f64, Error)>,
}

/// Warm-started sweep over targets sorted by |a|; each side of a = 0 is
/// continued separately in steps of at most `config.step` in aα.
pub fn continuation(a_targets: &[f64], alpha: f64, config: SolverConfig) -> Result<Continuation> {
    let sorted = a_targets.windows(2).all(|w| w[0].abs() <= w[1].abs());
    if !sorted {
        return Err(Error::Parameter("targets must be sorted by |a|".into()));
    }
    let solver = ProfileSolver::new(alpha, config)?;
    let mut solutions: Vec<ProfileSolution> = Vec::new();
    let mut sides: [Option<ProfileSolution>; 2] = [None, None];
    let mut failure = None;
    'targets: for &a in a_targets {
        if a == 0.0 {
            match solver.solve(0.0, None) {
                Ok(s) => solutions.push(s),
                Err(e) => {
                    failure = Some((a, e));
                    break;
                }
            }
            continue;
        }
        let side = usize::from(a < 0.0);
        let start = sides[side].as_ref().map_or(0.0, |s| s.a);
        let steps = (((a - start) * alpha).abs() / config.step - 1e-9).ceil().max(1.0) as usize;
        let mut current = sides[side].clone();
        for j in 1..=steps {
            let aj = if j == steps { a } else { start + (a - start) * j as f64 / steps as f64 };
            match solver.solve(aj, current.as_ref()) {
                Ok(s) => current = Some(s),
                Err(e) => {
                    failure = Some((a, e));
                    break 'targets;
                }
            }
        }
        let done = current.expect("at least one step");
        solutions.push(done.clone());
        sides[side] = Some(done);
    }
    let points: Vec<(f64, f64)> = solutions.iter().map(|s| (s.a, s.lambda)).collect();
    Ok(Continuation { solutions, fit: fit_lambda(&points), failure })
}
