//! Linearization at the a = 0 profile,
//!
//!   L V = V + y V' - W H V - V H W,
//!
//! its closed-form inverse on the range space Y, and the bordered solve
//! L V + μ b = rhs with b = y W'/α.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{exact_profile, trig, ExactProfile};
use crate::grid::{lp_norm, Grid, GridFunction, Near, NearFit, TailModel};
use crate::hilbert::FractionalHilbert;

/// Radius below which h uses the doubly subtracted form.
pub const H_SWITCH: f64 = 1e-3;

/// Below this radius g and h are continued by their Taylor forms.
pub const TAYLOR_RADIUS: f64 = 1e-4;

/// Relative tolerance of the Y membership check in [`apply_l_inverse`].
pub const Y_TOLERANCE: f64 = 1e-6;

/// Everything about the a = 0 profile that L and its inverse need.
#[derive(Debug)]
pub struct BasePoint {
    pub alpha: f64,
    pub exact: ExactProfile,
    pub c: f64,
    pub s: f64,
    /// y² + 2cy + 1
    pub d: GridFunction,
    direction: GridFunction,
    direction_functional: f64,
    op: FractionalHilbert,
}

impl BasePoint {
    pub fn new(alpha: f64, grid: &Arc<Grid>) -> Result<Self> {
        let exact = exact_profile(alpha, grid)?;
        let (c, s) = trig(alpha);
        let d = GridFunction::from_fn(grid, |y| y * y + 2.0 * c * y + 1.0, 1.0, 2.0 * c);
        let op = FractionalHilbert::new(grid, 1.0 / alpha)?;
        let direction = exact.w.log_derivative().scale(1.0 / alpha);
        let direction_functional =
            direction.slope_at_zero() + 2.0 * s * op.value_at_zero(&direction);
        if direction_functional.abs() < 1e-14 {
            return Err(Error::DegenerateBase(direction_functional));
        }
        Ok(BasePoint { alpha, exact, c, s, d, direction, direction_functional, op })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.exact.w.grid()
    }

    /// Near 0, H f carries a y^(2/α) term besides its Taylor part, so g
    /// behaves like y, y², y^(2/α) and h like y, y², y^(2/α - 1).
    fn near(&self, shift: f64) -> Near {
        Near::Vanishing { exponent: 2.0 / self.alpha - shift }
    }

    pub fn hilbert(&self) -> &FractionalHilbert {
        &self.op
    }

    /// y W'(y) / α, the direction along which λ enters.
    pub fn direction(&self) -> &GridFunction {
        &self.direction
    }

    fn check_origin(&self, f: &GridFunction, what: &str) -> Result<()> {
        let scale = f.sup_norm().max(f.slope_at_zero().abs()).max(f64::MIN_POSITIVE);
        if f.value_at_zero().abs() > 1e-10 * scale {
            return Err(Error::Precondition(format!(
                "{what}(0) = {:e} must vanish",
                f.value_at_zero()
            )));
        }
        Ok(())
    }
}

pub fn apply_l(v: &GridFunction, base: &BasePoint) -> Result<GridFunction> {
    base.check_origin(v, "V")?;
    let hv = base.op.apply(v)?;
    let w = &base.exact.w;
    let hw = &base.exact.hw;
    let out = v
        .axpy(1.0, &v.log_derivative())
        .axpy(-1.0, &w.product(&hv))
        .axpy(-1.0, &v.product(hw));
    Ok(out.with_tail(v.tail()))
}

/// f(0)' + 2 sin(απ/2) H f(0)
pub fn y_functional(f: &GridFunction, base: &BasePoint) -> Result<f64> {
    base.check_origin(f, "f")?;
    Ok(f.slope_at_zero() + 2.0 * base.s * base.op.value_at_zero(f))
}

/// g = f/y - f'(0)/D
pub fn compute_g(f: &GridFunction, base: &BasePoint) -> Result<GridFunction> {
    Ok(g_near(f, base)?.0)
}

fn g_near(f: &GridFunction, base: &BasePoint) -> Result<(GridFunction, NearFit)> {
    base.check_origin(f, "f")?;
    let grid = base.grid();
    let f1 = f.slope_at_zero();
    let mut values: Vec<f64> = f
        .values()
        .iter()
        .zip(grid.nodes())
        .zip(base.d.values())
        .map(|((v, y), d)| v / y - f1 / d)
        .collect();
    // Taylor form (f''(0)/2 + 2c f'(0)) y + O(y²) where the subtraction is noisy
    let fit = grid.continue_below(&mut values, TAYLOR_RADIUS, base.near(0.0));
    let g = GridFunction::raw(grid, values, 0.0, fit.slope()).with_tail(f.tail().shifted(-1.0));
    Ok((g, fit))
}

/// h = (Hf(x) - Hf(0))/x + 2(c + x)/D·Hf(0) for x ≥ δ, and the doubly
/// subtracted form (Hf(x) - Hf(0) - x (Hf)'(0))/x - 2x(cos απ + cx)/D·Hf(0)
/// below δ.
pub fn compute_h(f: &GridFunction, base: &BasePoint) -> Result<GridFunction> {
    Ok(h_near(f, base)?.0)
}

fn h_near(f: &GridFunction, base: &BasePoint) -> Result<(GridFunction, NearFit)> {
    base.check_origin(f, "f")?;
    let h0 = base.op.value_at_zero(f);
    let dq = base.op.difference_quotient(f)?;
    let grid = base.grid();
    let (c, alpha) = (base.c, base.alpha);
    let cos_ap = (alpha * std::f64::consts::PI).cos();
    let h1 = dq.value_at_zero();
    let mut values: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(dq.values())
        .zip(base.d.values())
        .map(|((&y, &q), &d)| {
            if y >= H_SWITCH {
                q + 2.0 * (c + y) / d * h0
            } else {
                (q - h1) - 2.0 * y * (cos_ap + c * y) / d * h0
            }
        })
        .collect();
    let fit = grid.continue_below(&mut values, TAYLOR_RADIUS, base.near(1.0));
    Ok((GridFunction::raw(grid, values, 0.0, fit.slope()).with_tail(dq.tail()), fit))
}

/// Closed-form inverse without the Y membership check.
pub(crate) fn invert(f: &GridFunction, base: &BasePoint) -> Result<GridFunction> {
    let grid = base.grid();
    let (c, s) = (base.c, base.s);
    let (g, gfit) = g_near(f, base)?;
    let (h, hfit) = h_near(f, base)?;
    let y = grid.nodes();
    let n = y.len();
    let mut i1 = Vec::with_capacity(n);
    let mut i2 = Vec::with_capacity(n);
    for j in 0..n {
        let (yy, gv, hv) = (y[j], g.values()[j], h.values()[j]);
        let odd = (1.0 - yy * yy) / yy * s;
        let even = (1.0 + yy * yy) / yy * c + 2.0;
        i1.push(odd * gv + even * hv);
        i2.push(-even * gv + odd * hv);
    }
    // [0, y_min] exactly from the local models of g and h
    let odd = [(s, -1.0), (-s, 1.0)];
    let even = [(c, -1.0), (2.0, 0.0), (c, 1.0)];
    let neg_even = even.map(|(a, q)| (-a, q));
    let y0 = y[0];
    let head1 = gfit.weighted_integral(&odd, y0) + hfit.weighted_integral(&even, y0);
    let head2 = gfit.weighted_integral(&neg_even, y0) + hfit.weighted_integral(&odd, y0);
    let g1c = grid.cumulative_integral(&i1, head1);
    let g2c = grid.cumulative_integral(&i2, head2);
    let values: Vec<f64> = (0..n)
        .map(|j| {
            let yy = y[j];
            let d = base.d.values()[j];
            let a = yy * (1.0 - yy * yy) * s / (d * d);
            let b = yy * ((1.0 + yy * yy) * c + 2.0 * yy) / (d * d);
            a * g1c[j] - b * g2c[j]
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inverse linearization".into()));
    }
    // V + yV' annihilates 1/y, so a 1/y tail in f forces ln(y)/y in V
    let tail = TailModel { decay: f.tail().decay.min(1.0), ..f.tail() }.with_log();
    Ok(GridFunction::raw(grid, values, 0.0, 0.0).with_tail(tail))
}

pub fn apply_l_inverse(f: &GridFunction, base: &BasePoint) -> Result<GridFunction> {
    let value = y_functional(f, base)?;
    let scale = f.sup_norm() + f.slope_at_zero().abs();
    let bound = Y_TOLERANCE * scale;
    if value.abs() > bound {
        return Err(Error::NotInRange { value, bound });
    }
    invert(f, base)
}

/// Solution of L V + μ b = rhs.
#[derive(Clone, Debug)]
pub struct BorderedSolution {
    pub v: GridFunction,
    pub mu: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BorderedSummary {
    pub mu: f64,
    pub residual: f64,
}

/// (V, μ) without the verification residual.
pub(crate) fn bordered_step(rhs: &GridFunction, base: &BasePoint) -> Result<(GridFunction, f64)> {
    let mu = y_functional(rhs, base)? / base.direction_functional;
    let projected = rhs.axpy(-mu, &base.direction);
    Ok((invert(&projected, base)?, mu))
}

pub fn solve_bordered(rhs: &GridFunction, base: &BasePoint) -> Result<BorderedSolution> {
    let (v, mu) = bordered_step(rhs, base)?;
    let check = apply_l(&v, base)?.axpy(mu, &base.direction).axpy(-1.0, rhs);
    let residual = lp_norm(base.grid(), check.values(), 2.0, 0.0)?;
    Ok(BorderedSolution { v, mu, residual })
}
