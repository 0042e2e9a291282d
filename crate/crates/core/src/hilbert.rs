//! Fractional Hilbert transform on the half-line,
//!
//!   H^(r) f(x) = (1/π) PV ∫_0^∞ 2r y^(2r-1) f(y) / (x^(2r) - y^(2r)) dy.
//!
//! With y = x e^s the kernel becomes c_p(s) = 2r e^(ps) / (1 - e^(2rs)) with
//! p = 2r. Other values of p give the derivative-transfer integrals (p = k)
//! and the difference quotient (Hf(x) - Hf(0))/x applied to f/y (p = 1).
//! Sums run on the log grid extended by a linear model on the left and a
//! power-law tail model on the right; the pieces beyond the extension are
//! summed analytically.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{differentiate, lp_norm, Grid, GridFunction, Near, TailFit};

const EXTENSION_WIDTH: f64 = 3.0;
const SERIES_TERMS: usize = 48;

/// Kernel table for one (grid, r, p).
#[derive(Debug)]
pub struct HilbertPlan {
    grid: Arc<Grid>,
    r: f64,
    p: f64,
    ext: usize,
    kernel: Vec<f64>,
}

struct Prepared<'a> {
    values: &'a [f64],
    xdf: Vec<f64>,
    f0: f64,
    f1: f64,
    fit: TailFit,
    ext: Vec<f64>,
    weighted: Vec<f64>,
}

impl HilbertPlan {
    pub fn new(grid: &Arc<Grid>, r: f64, p: f64) -> Result<Self> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("r must be at least 1, got {r}")));
        }
        if !(p > 0.0 && p <= 2.0 * r) {
            return Err(Error::Parameter(format!("kernel exponent p = {p} outside (0, 2r]")));
        }
        let h = grid.log_step();
        let ext = (EXTENSION_WIDTH / h).ceil() as usize;
        let total = grid.len() + 2 * ext;
        let kernel = (0..2 * total - 1)
            .map(|idx| {
                let k = idx as f64 - (total - 1) as f64;
                let s = k * h;
                if k < 0.0 {
                    2.0 * r * (p * s).exp() / -(2.0 * r * s).exp_m1()
                } else if k > 0.0 {
                    -2.0 * r * ((p - 2.0 * r) * s).exp() / -(-2.0 * r * s).exp_m1()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(HilbertPlan { grid: Arc::clone(grid), r, p, ext, kernel })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn left_edge(&self) -> f64 {
        self.grid.y_min() * (-(self.ext as f64) * self.grid.log_step()).exp()
    }

    fn right_edge(&self) -> f64 {
        self.grid.y_max() * ((self.ext as f64) * self.grid.log_step()).exp()
    }

    fn prepare<'a>(&self, f: &'a GridFunction, f0: f64, f1: f64) -> Prepared<'a> {
        let grid = &self.grid;
        let h = grid.log_step();
        let fit = *f.tail_fit();
        let n = grid.len();
        let mut ext = Vec::with_capacity(n + 2 * self.ext);
        for j in 0..self.ext {
            let y = grid.y_min() * (-((self.ext - j) as f64) * h).exp();
            ext.push(f0 + f1 * y);
        }
        ext.extend_from_slice(f.values());
        for j in 1..=self.ext {
            let y = grid.y_max() * (j as f64 * h).exp();
            ext.push(fit.eval(y));
        }
        let mut weighted = ext.clone();
        weighted[0] *= 0.5;
        let last = weighted.len() - 1;
        weighted[last] *= 0.5;
        Prepared {
            values: f.values(),
            xdf: grid.log_derivative(f.values()),
            f0,
            f1,
            fit,
            ext,
            weighted,
        }
    }

    fn node(&self, i: usize, d: &Prepared) -> f64 {
        let grid = &self.grid;
        let h = grid.log_step();
        let (r, p) = (self.r, self.p);
        let total = d.ext.len();
        let ii = i + self.ext;
        let off = total - 1 - ii;
        let c = &self.kernel[off..off + total];
        let dot: f64 = c.iter().zip(&d.weighted).map(|(c, f)| c * f).sum();
        let mut acc = h * dot + h * (-d.xdf[i] - (p - r) * d.values[i]);

        // endpoint corrections of the trapezoid rule
        let g = |j: usize| c[j] * d.ext[j];
        let right = (3.0 * g(total - 5) - 16.0 * g(total - 4) + 36.0 * g(total - 3)
            - 48.0 * g(total - 2)
            + 25.0 * g(total - 1))
            / (12.0 * h);
        let left =
            (-25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4)) / (12.0 * h);
        acc -= h * h / 12.0 * (right - left);

        let x = grid.nodes()[i];
        let (yl, yr) = (self.left_edge(), self.right_edge());
        let lr = (x / yr).ln();
        let log_yr = yr.ln();
        // ∫_yr^∞ y^-(e+1) dy = yr^-e / e and ∫_yr^∞ ln y·y^-(e+1) dy = yr^-e (ln yr + 1/e) / e
        let fit = &d.fit;
        let terms = (0..3).flat_map(|k| [(fit.exponents[k], fit.coeffs[k], false), (fit.exponents[k], fit.log_coeffs[k], true)]);
        for (beta, coeff, log) in terms {
            if coeff == 0.0 {
                continue;
            }
            let base = -beta * log_yr;
            for m in 0..SERIES_TERMS {
                let q = 2.0 * r * (m + 1) as f64 - p;
                let e = q + beta;
                let weight = if log { (log_yr + 1.0 / e) / e } else { 1.0 / e };
                let term = -2.0 * r * coeff * (q * lr + base).exp() * weight;
                acc += term;
                if term.abs() < 1e-18 * acc.abs().max(1e-300) {
                    break;
                }
            }
        }
        let ll = (yl / x).ln();
        for m in 0..SERIES_TERMS {
            let e = p + 2.0 * r * m as f64;
            let term = 2.0 * r * (e * ll).exp() * (d.f0 / e + d.f1 * yl / (e + 1.0));
            acc += term;
            if term.abs() < 1e-18 * acc.abs().max(1e-300) {
                break;
            }
        }
        acc / PI
    }

    /// Transform of `f` at every node, with `f ≈ f0 + f1·y` left of the grid.
    pub fn transform(&self, f: &GridFunction, f0: f64, f1: f64) -> Vec<f64> {
        let d = self.prepare(f, f0, f1);
        (0..self.grid.len()).into_par_iter().map(|i| self.node(i, &d)).collect()
    }

    /// Transform at selected nodes only.
    pub fn transform_at(&self, f: &GridFunction, f0: f64, f1: f64, nodes: &[usize]) -> Vec<f64> {
        let d = self.prepare(f, f0, f1);
        nodes.iter().map(|&i| self.node(i, &d)).collect()
    }

    /// -(2r/π)∫_0^∞ f(y)/y dy, the p = 2r transform at x = 0 when f(0) = 0.
    pub fn limit_at_zero(&self, f: &GridFunction) -> f64 {
        let grid = &self.grid;
        let h = grid.log_step();
        let v = f.values();
        let n = v.len();
        let xdf = grid.log_derivative(v);
        let mut integral = h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]));
        integral -= h * h / 12.0 * (xdf[n - 1] - xdf[0]);
        let fit = f.tail_fit();
        let ly = grid.y_max().ln();
        for k in 0..3 {
            let beta = fit.exponents[k];
            let log_part = fit.log_coeffs[k] * (ly + 1.0 / beta);
            integral += (fit.coeffs[k] + log_part) * (-beta * ly).exp() / beta;
        }
        integral += f.slope_at_zero() * grid.y_min();
        -2.0 * self.r / PI * integral
    }
}

/// Kernel tables for H^(r) together with its difference quotient.
#[derive(Debug)]
pub struct FractionalHilbert {
    main: HilbertPlan,
    quotient: HilbertPlan,
}

/// Raised when the sampled function does not decay enough for the tail model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailWarning {
    /// |f(y_max)|·y_max / sup|f|
    pub decay_ratio: f64,
    /// relative misfit of the power-law tail
    pub misfit: f64,
}

/// A transformed function plus any tail diagnostic.
#[derive(Clone, Debug)]
pub struct Transform {
    pub function: GridFunction,
    pub tail_warning: Option<TailWarning>,
}

fn tail_warning(f: &GridFunction) -> Option<TailWarning> {
    let sup = f.sup_norm();
    if sup == 0.0 {
        return None;
    }
    let v = f.values();
    let y_max = f.grid().y_max();
    let decay_ratio = v[v.len() - 1].abs() * y_max / sup;
    let misfit = f.tail_fit().misfit;
    (decay_ratio > 100.0 || misfit > 1e-3).then_some(TailWarning { decay_ratio, misfit })
}

fn check_vanishes(f: &GridFunction) -> Result<()> {
    let scale = f.sup_norm().max(f.slope_at_zero().abs());
    if f.value_at_zero().abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!(
            "f(0) = {:e} must vanish",
            f.value_at_zero()
        )));
    }
    Ok(())
}

impl FractionalHilbert {
    pub fn new(grid: &Arc<Grid>, r: f64) -> Result<Self> {
        Ok(FractionalHilbert {
            main: HilbertPlan::new(grid, r, 2.0 * r)?,
            quotient: HilbertPlan::new(grid, r, 1.0)?,
        })
    }

    pub fn r(&self) -> f64 {
        self.main.r
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.main.grid
    }

    /// H^(r) f(0).
    pub fn value_at_zero(&self, f: &GridFunction) -> f64 {
        self.main.limit_at_zero(f)
    }

    fn divided(&self, f: &GridFunction) -> (GridFunction, f64) {
        let grid = self.grid();
        let q: Vec<f64> = f.values().iter().zip(grid.nodes()).map(|(v, y)| v / y).collect();
        // f carries a y^(2r+1) term next to its Taylor part
        let near = Near::Offset { exponent: 2.0 * self.r() - 1.0 };
        let curv = grid.origin_curvature(f.values(), 0.0, f.slope_at_zero(), near);
        let q = GridFunction::raw(grid, q, f.slope_at_zero(), 0.5 * curv)
            .with_tail(f.tail().shifted(-1.0));
        (q, 0.5 * curv)
    }

    /// (H^(r) f(x) - H^(r) f(0)) / x at every node, evaluated without
    /// subtraction; the origin value is the slope of H^(r) f at 0.
    pub fn difference_quotient(&self, f: &GridFunction) -> Result<GridFunction> {
        check_vanishes(f)?;
        let (q, q1) = self.divided(f);
        let values = self.quotient.transform(&q, f.slope_at_zero(), q1);
        let grid = self.grid();
        let v0 = self.origin_limit(self.origin_nodes().map(|j| values[j]));
        let s0 = grid.origin_slope(&values, v0);
        Ok(GridFunction::raw(grid, values, v0, s0).with_tail(f.tail().shifted(-1.0)))
    }

    fn origin_nodes(&self) -> [usize; 3] {
        let grid = self.grid();
        let m = grid.nearest_index(4.0 * grid.y_min()).max(1);
        [0, m, (2 * m).min(grid.len() - 1)]
    }

    /// Limit at 0 of the difference quotient from three small nodes, which
    /// behaves like c0 + c1 x + c2 x^(2r-1) (x ln x when 2r - 1 is near 1).
    fn origin_limit(&self, d: [f64; 3]) -> f64 {
        let y = self.grid().nodes();
        let e = 2.0 * self.r() - 1.0;
        let idx = self.origin_nodes();
        let third = |x: f64| if (e - 1.0).abs() < 0.05 { x * x.ln() } else { x.powf(e) };
        let scale = y[idx[2]];
        let m = nalgebra::Matrix3::from_fn(|i, k| {
            let x = y[idx[i]] / scale;
            [1.0, x, third(x)][k]
        });
        let rhs = nalgebra::Vector3::from(d);
        match m.lu().solve(&rhs) {
            Some(c) if c[0].is_finite() => c[0],
            _ => {
                let (ya, yb) = (y[idx[0]], y[idx[1]]);
                (d[0] * yb - d[1] * ya) / (yb - ya)
            }
        }
    }

    /// Slope of H^(r) f at 0, extrapolated from the difference quotient
    /// at the smallest-scale probe nodes.
    pub fn slope_at_zero(&self, f: &GridFunction) -> Result<f64> {
        check_vanishes(f)?;
        let (q, q1) = self.divided(f);
        let nodes = self.origin_nodes();
        let d = self.quotient.transform_at(&q, f.slope_at_zero(), q1, &nodes);
        Ok(self.origin_limit([d[0], d[1], d[2]]))
    }

    /// H^(r) f with origin data attached.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        check_vanishes(f)?;
        let values = self.main.transform(f, 0.0, f.slope_at_zero());
        let v0 = self.value_at_zero(f);
        let s0 = self.slope_at_zero(f)?;
        Ok(GridFunction::raw(self.grid(), values, v0, s0).with_tail(f.tail()))
    }
}

pub(crate) fn check_r(r: f64) -> Result<()> {
    if r >= 1.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("r must be at least 1, got {r}")))
    }
}

pub fn apply_fractional_hilbert(f: &GridFunction, r: f64) -> Result<Transform> {
    check_r(r)?;
    let op = FractionalHilbert::new(f.grid(), r)?;
    let function = op.apply(f)?;
    Ok(Transform { function, tail_warning: tail_warning(f) })
}

/// (1/π) PV ∫ 2r x^(2r-k) y^(k-1) f^(k)(y) / (x^(2r) - y^(2r)) dy, k = 1, 2.
pub fn hilbert_derivative(f: &GridFunction, r: f64, k: usize) -> Result<GridFunction> {
    check_r(r)?;
    if k != 1 && k != 2 {
        return Err(Error::Parameter(format!("k must be 1 or 2, got {k}")));
    }
    check_vanishes(f)?;
    let grid = f.grid();
    let dk = differentiate(f, k)?;
    let plan = HilbertPlan::new(grid, r, k as f64)?;
    let values = plan.transform(&dk, dk.value_at_zero(), dk.slope_at_zero());
    let v0 = grid.extrapolate_to_origin(|j| values[j]);
    let s0 = grid.origin_slope(&values, v0);
    Ok(GridFunction::raw(grid, values, v0, s0).with_tail(f.tail()))
}

/// Measured slope at 0 of H^(1/α) f against f'(0)·cot(απ/2).
pub fn hilbert_slope_at_zero(f: &GridFunction, alpha: f64) -> Result<(f64, f64)> {
    crate::exact::check_alpha(alpha)?;
    let op = FractionalHilbert::new(f.grid(), 1.0 / alpha)?;
    let measured = op.slope_at_zero(f)?;
    let predicted = if alpha == 1.0 {
        0.0
    } else {
        f.slope_at_zero() / (alpha * std::f64::consts::FRAC_PI_2).tan()
    };
    Ok((measured, predicted))
}

/// The four members of the kernel inequality chain at (r, t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelEval {
    pub r: f64,
    pub t: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub ordered: bool,
}

const CHAIN_SLACK: f64 = 1e-12;

fn le(a: f64, b: f64) -> bool {
    a <= b + CHAIN_SLACK * a.abs().max(b.abs()).max(1.0)
}

impl KernelEval {
    /// k1 ≤ k2 ≤ k3 ≤ k4 as written.
    pub fn literal_order(&self) -> bool {
        le(self.k1, self.k2) && le(self.k2, self.k3) && le(self.k3, self.k4)
    }

    /// The chain with denominators cleared, meaningful for t > 1:
    /// (r-1)t^(2r) + 1 ≥ r t^(2r-2), t^(2r) + r - 1 ≥ r t², (t-1)(t^(2r-1)+1) ≥ 0.
    pub fn cleared_order(&self) -> bool {
        let (r, t) = (self.r, self.t);
        let t2r = t.powf(2.0 * r);
        le(r * t.powf(2.0 * r - 2.0), (r - 1.0) * t2r + 1.0)
            && le(r * t * t, t2r + r - 1.0)
            && le(0.0, (t - 1.0) * (t.powf(2.0 * r - 1.0) + 1.0))
    }
}

pub fn kernel_chain(r: f64, t: f64) -> Result<KernelEval> {
    check_r(r)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("t must be finite and nonnegative, got {t}")));
    }
    if t == 1.0 {
        return Err(Error::Singular);
    }
    // 1 - t^(2r) and 1 - t² without cancellation near t = 1
    let (one_m_t2r, one_m_t2) = if t > 0.0 {
        let l = t.ln();
        (-(2.0 * r * l).exp_m1(), -(2.0 * l).exp_m1())
    } else {
        (1.0, 1.0)
    };
    let t2r1 = t.powf(2.0 * r - 1.0);
    let k1 = 2.0 * r * t2r1 / one_m_t2r;
    let k2 = 2.0 * t / one_m_t2;
    let k3 = 2.0 * r * t / one_m_t2r;
    let k4 = k1 + 2.0 * r;
    let mut eval = KernelEval { r, t, k1, k2, k3, k4, ordered: false };
    eval.ordered = if t < 1.0 { eval.literal_order() } else { eval.cleared_order() };
    Ok(eval)
}

/// Largest sampled Rayleigh quotient of H^(r) on L².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub r: f64,
    pub estimated_norm: f64,
    pub bound: f64,
    pub probes: usize,
}

/// 1 + 20√2/(3π)
pub fn norm_bound_constant() -> f64 {
    1.0 + 20.0 * 2f64.sqrt() / (3.0 * PI)
}

/// Gaussian times an odd cubic, (y/L)(1 + b(y/L)²) exp(-((y/L - c)/w)²),
/// normalized in L².
#[derive(Clone, Copy, Debug)]
pub struct Probe {
    pub scale: f64,
    pub cubic: f64,
    pub center: f64,
    pub width: f64,
}

impl Probe {
    pub fn random(rng: &mut impl Rng) -> Probe {
        Probe {
            scale: 10f64.powf(rng.gen_range(-1.0..1.0)),
            cubic: rng.gen_range(-0.5..0.5),
            center: rng.gen_range(0.0..3.0),
            width: rng.gen_range(0.3..1.5),
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let z = y / self.scale;
        let g = (z - self.center) / self.width;
        z * (1.0 + self.cubic * z * z) * (-g * g).exp()
    }

    pub fn slope_at_zero(&self) -> f64 {
        let g = self.center / self.width;
        (-g * g).exp() / self.scale
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> GridFunction {
        let f = GridFunction::from_fn(grid, |y| self.eval(y), 0.0, self.slope_at_zero());
        let n = lp_norm(grid, f.values(), 2.0, 0.0).unwrap_or(1.0);
        f.scale(1.0 / n)
    }
}

pub fn estimate_l2_norm(r: f64, probe_count: usize, seed: u64) -> Result<NormEstimate> {
    check_r(r)?;
    let grid = Arc::new(Grid::default_for((1.0 / r).min(1.0))?);
    estimate_l2_norm_on(&grid, r, probe_count, seed)
}

pub fn estimate_l2_norm_on(
    grid: &Arc<Grid>,
    r: f64,
    probe_count: usize,
    seed: u64,
) -> Result<NormEstimate> {
    check_r(r)?;
    if probe_count == 0 {
        return Err(Error::Parameter("need at least one probe".into()));
    }
    let op = FractionalHilbert::new(grid, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Probe> = (0..probe_count).map(|_| Probe::random(&mut rng)).collect();
    let mut best = 0.0f64;
    for probe in &probes {
        let f = probe.sample(grid);
        best = best.max(rayleigh_quotient(&op, &f)?);
    }
    Ok(NormEstimate {
        r,
        estimated_norm: best,
        bound: norm_bound_constant() * r,
        probes: probe_count,
    })
}

/// ‖H^(r) f‖ / ‖f‖ in discrete L².
pub fn rayleigh_quotient(op: &FractionalHilbert, f: &GridFunction) -> Result<f64> {
    let grid = op.grid();
    let hf = op.main.transform(f, 0.0, f.slope_at_zero());
    let num = lp_norm(grid, &hf, 2.0, 0.0)?;
    let den = lp_norm(grid, f.values(), 2.0, 0.0)?;
    if den == 0.0 {
        return Err(Error::Degenerate("zero probe".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_hw, exact_w, exact_profile};
    use crate::grid::make_grid;

    fn grid(alpha: f64, n: usize) -> Arc<Grid> {
        Arc::new(make_grid(alpha, n, 1e-6, 1e3).unwrap())
    }

    fn max_rel_error(g: &Grid, got: &[f64], want: impl Fn(f64) -> f64) -> f64 {
        g.nodes()
            .iter()
            .zip(got)
            .filter(|(y, _)| **y >= 1e-3 && **y <= 1e2)
            .map(|(&y, &v)| ((v - want(y)) / want(y)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn closed_forms_r1_r2() {
        for alpha in [1.0, 0.5] {
            let g = grid(alpha, 2048);
            let p = exact_profile(alpha, &g).unwrap();
            let t = apply_fractional_hilbert(&p.w, 1.0 / alpha).unwrap();
            assert!(t.tail_warning.is_none());
            let err = max_rel_error(&g, t.function.values(), |y| exact_hw(alpha, y));
            assert!(err < 1e-6, "alpha {alpha}: {err}");
            assert!((t.function.value_at_zero() - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = grid(1.0, 256);
        let z = GridFunction::zeros(&g);
        let t = apply_fractional_hilbert(&z, 1.7).unwrap();
        assert!(t.function.values().iter().all(|v| *v == 0.0));
        assert_eq!(t.function.value_at_zero(), 0.0);
    }

    #[test]
    fn rejects_small_r_and_nonzero_origin() {
        let g = grid(1.0, 256);
        let f = GridFunction::from_fn(&g, |y| 1.0 / (1.0 + y), 1.0, -1.0);
        assert!(matches!(apply_fractional_hilbert(&f, 0.5), Err(Error::Parameter(_))));
        assert!(matches!(apply_fractional_hilbert(&f, 1.0), Err(Error::Precondition(_))));
        assert!(hilbert_derivative(&f, 1.0, 1).is_err());
    }

    #[test]
    fn non_decaying_input_warns() {
        let g = grid(1.0, 512);
        let f = GridFunction::from_fn(&g, |y| y / (1.0 + y), 0.0, 1.0);
        let t = apply_fractional_hilbert(&f, 1.0).unwrap();
        assert!(t.tail_warning.is_some());
    }

    #[test]
    fn first_derivative_transfer() {
        let g = grid(1.0, 2048);
        let f = GridFunction::from_fn(&g, |y| exact_w(1.0, y), 0.0, -2.0);
        let d = hilbert_derivative(&f, 1.0, 1).unwrap();
        let worst = g
            .nodes()
            .iter()
            .zip(d.values())
            .filter(|(y, _)| **y >= 1e-3 && **y <= 1e2)
            .map(|(&y, &v)| (v + 4.0 * y / (1.0 + y * y).powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn chain_examples() {
        let e = kernel_chain(2.0, 0.5).unwrap();
        let want = [8.0 / 15.0, 4.0 / 3.0, 32.0 / 15.0, 68.0 / 15.0];
        for (got, want) in [e.k1, e.k2, e.k3, e.k4].iter().zip(want) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(e.ordered);
        let z = kernel_chain(3.0, 0.0).unwrap();
        assert_eq!((z.k1, z.k2, z.k3, z.k4), (0.0, 0.0, 0.0, 6.0));
        for t in [0.1, 0.7, 3.0] {
            let e = kernel_chain(1.0, t).unwrap();
            let k = 2.0 * t / (1.0 - t * t);
            for v in [e.k1, e.k2, e.k3] {
                assert!((v - k).abs() < 1e-13 * k.abs());
            }
        }
        assert!(matches!(kernel_chain(2.0, 1.0), Err(Error::Singular)));
    }

    #[test]
    fn chain_beyond_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let r = rng.gen_range(1.0..20.0);
            let t = rng.gen_range(1.0..8.0);
            if t == 1.0 {
                continue;
            }
            let e = kernel_chain(r, t).unwrap();
            assert!(e.ordered && e.literal_order(), "{r} {t}");
        }
    }

    #[test]
    fn probe_quotient_recomputed() {
        let g = grid(0.5, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Probe::random(&mut rng).sample(&g);
        let op = FractionalHilbert::new(&g, 2.0).unwrap();
        let q = rayleigh_quotient(&op, &f).unwrap();
        let hf = apply_fractional_hilbert(&f, 2.0).unwrap().function;
        let direct = lp_norm(&g, hf.values(), 2.0, 0.0).unwrap()
            / lp_norm(&g, f.values(), 2.0, 0.0).unwrap();
        assert!((q - direct).abs() < 1e-14);
    }

    #[test]
    fn slope_prediction_cases() {
        let g = grid(0.5, 256);
        let flat = GridFunction::from_fn(&g, |y| y * y * (-y).exp(), 0.0, 0.0);
        assert_eq!(hilbert_slope_at_zero(&flat, 0.5).unwrap().1, 0.0);
        let p = exact_profile(0.5, &g).unwrap();
        let (_, predicted) = hilbert_slope_at_zero(&p.w, 0.5).unwrap();
        assert!((predicted + 2f64.sqrt()).abs() < 1e-14);
        let g1 = grid(1.0, 256);
        let p1 = exact_profile(1.0, &g1).unwrap();
        assert_eq!(hilbert_slope_at_zero(&p1.w, 1.0).unwrap().1, 0.0);
    }
}
