//! Closed-form profile at a = 0 and the self-similar ansatz.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// (cos(απ/2), sin(απ/2))
pub fn trig(alpha: f64) -> (f64, f64) {
    let (s, c) = (alpha * FRAC_PI_2).sin_cos();
    (c, s)
}

/// y² + 2 cos(απ/2) y + 1
pub fn denominator(alpha: f64, y: f64) -> f64 {
    let (c, _) = trig(alpha);
    y * y + 2.0 * c * y + 1.0
}

pub fn exact_w(alpha: f64, y: f64) -> f64 {
    let (_, s) = trig(alpha);
    -2.0 * s * y / denominator(alpha, y)
}

pub fn exact_hw(alpha: f64, y: f64) -> f64 {
    let (c, _) = trig(alpha);
    2.0 * (c * y + 1.0) / denominator(alpha, y)
}

/// The a = 0 profile and its transform, sampled in the tilde variable.
#[derive(Clone, Debug)]
pub struct ExactProfile {
    pub alpha: f64,
    pub w: GridFunction,
    pub hw: GridFunction,
    pub lambda: f64,
}

pub fn exact_profile(alpha: f64, grid: &Arc<Grid>) -> Result<ExactProfile> {
    check_alpha(alpha)?;
    let (c, s) = trig(alpha);
    let w = GridFunction::from_fn(grid, |y| exact_w(alpha, y), 0.0, -2.0 * s);
    // d/dy of 2(cy+1)/D at 0 is 2c - 4c = -2c
    let hw = GridFunction::from_fn(grid, |y| exact_hw(alpha, y), 2.0, -2.0 * c);
    Ok(ExactProfile { alpha, w, hw, lambda: 0.0 })
}

/// sgn(x)·(1-t)^-1·W(|x|^α / (1-t)^(1+λ))
pub fn self_similar_evaluate(
    profile: &GridFunction,
    lambda: f64,
    alpha: f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t < 1.0) {
        return Err(Error::Domain(t));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let y = x.abs().powf(alpha) / (1.0 - t).powf(1.0 + lambda);
    Ok(x.signum() * profile.evaluate(y)? / (1.0 - t))
}

/// Solution of the a = 0 equation from ω₀ = -2x/(1+x²).
pub fn clm_exact_solution(x: f64, t: f64) -> Result<f64> {
    if !(t < 1.0) {
        return Err(Error::Domain(t));
    }
    let w0 = -2.0 * x / (1.0 + x * x);
    let hw0 = 2.0 / (1.0 + x * x);
    let q = 2.0 - t * hw0;
    Ok(4.0 * w0 / (q * q + t * t * w0 * w0))
}
