//! The operator I f(x) = ∫_0^x (f(y) - f(0) - y f'(0)) / y² dy and sampled
//! checks of weighted Hardy inequalities.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{derivatives, Near, differentiate, lp_norm, norm, Grid, GridFunction, WeightedNormSpec};

/// LHS and RHS of one sampled inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HardyReport {
    pub function_id: String,
    pub spec: WeightedNormSpec,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when both sides vanish.
    pub ratio: Option<f64>,
}

impl HardyReport {
    fn new(function_id: &str, spec: WeightedNormSpec, lhs: f64, rhs: f64) -> Result<Self> {
        let ratio = if rhs > 0.0 {
            Some(lhs / rhs)
        } else if lhs == 0.0 {
            None
        } else {
            return Err(Error::Degenerate(format!("{function_id}: lhs {lhs:e} over zero")));
        };
        Ok(HardyReport { function_id: function_id.to_string(), spec, lhs, rhs, ratio })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.function_id = id.into();
        self
    }

    pub fn is_degenerate(&self) -> bool {
        self.ratio.is_none()
    }
}

/// The subtracted integrand (f(y) - f(0) - y f'(0)) / y², which is (If)'.
pub fn subtracted_quotient(f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let (f0, f1) = (f.value_at_zero(), f.slope_at_zero());
    let y = grid.nodes();
    let mut values: Vec<f64> = f
        .values()
        .iter()
        .zip(y)
        .map(|(v, y)| {
            let num = v - f0 - f1 * y;
            // numerators at rounding level carry no information
            let noise = 4.0 * f64::EPSILON * (v.abs() + f0.abs() + (f1 * y).abs());
            if num.abs() <= noise {
                0.0
            } else {
                num / (y * y)
            }
        })
        .collect();
    // Below TAYLOR_RADIUS the subtraction loses about eps·|f(0)|/y²; there the
    // remainder f''(0)/2 + O(y) is continued from larger nodes.
    let fit = grid.continue_below(&mut values, TAYLOR_RADIUS, Near::Smooth);
    let (v0, s0) = (fit.value_at_zero(), fit.slope());
    GridFunction::raw(grid, values, v0, s0)
}

const TAYLOR_RADIUS: f64 = 1e-3;

pub fn apply_i(f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let q = subtracted_quotient(f);
    let y = grid.nodes();
    let v = q.values();
    let mut out = Vec::with_capacity(y.len());
    // Taylor form f''(0)/2 on [0, y_min]
    let mut acc = 0.5 * (q.value_at_zero() + v[0]) * y[0];
    out.push(acc);
    for j in 1..y.len() {
        acc += 0.5 * (y[j] - y[j - 1]) * (v[j] + v[j - 1]);
        out.push(acc);
    }
    GridFunction::raw(grid, out, 0.0, q.value_at_zero())
}

fn vanishing_order_ok(f: &GridFunction, k: usize) -> bool {
    let scale = f.sup_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-8;
    let v0 = f.value_at_zero().abs() <= tol * scale;
    let s0 = k < 2 || f.slope_at_zero().abs() <= tol * scale.max(differentiate(f, 1).map(|d| d.sup_norm()).unwrap_or(0.0));
    v0 && s0
}

/// ‖y^(γ-k) f‖_p / ‖y^γ f^(k)‖_p
pub fn hardy_ratio(f: &GridFunction, spec: WeightedNormSpec) -> Result<HardyReport> {
    if !spec.hardy_admissible() {
        return Err(Error::Precondition(format!(
            "gamma = {} must be below (p-1)/p = {}",
            spec.gamma,
            (spec.p - 1.0) / spec.p
        )));
    }
    if spec.k == 0 {
        return Err(Error::Parameter("Hardy ratio needs k >= 1".into()));
    }
    if !vanishing_order_ok(f, spec.k) {
        return Err(Error::Precondition(format!(
            "f and its first {} derivatives must vanish at 0",
            spec.k - 1
        )));
    }
    let grid = f.grid();
    let k = spec.k as i32;
    let divided: Vec<f64> = f.values().iter().zip(grid.nodes()).map(|(v, y)| v / y.powi(k)).collect();
    let lhs = lp_norm(grid, &divided, spec.p, spec.gamma)?;
    let dk = derivatives(f, spec.k)?.pop().expect("k >= 1");
    let rhs = lp_norm(grid, dk.values(), spec.p, spec.gamma)?;
    HardyReport::new("f", spec, lhs, rhs)
}

/// ‖(If)'‖_{W^{k,p}} / ‖f''‖_{W^{k,p}} and
/// ‖x If/(1+x²)‖_{W^{k,p}} / ‖f'‖_{W^{max(k-1,1),p}}.
pub fn check_i_bounds(f: &GridFunction, k: usize, p: f64) -> Result<(HardyReport, HardyReport)> {
    if k > 2 {
        return Err(Error::Parameter(format!("k must lie in 0..=2, got {k}")));
    }
    let spec = WeightedNormSpec::new(k, p, 0.0)?;
    let di = subtracted_quotient(f);
    let f2 = differentiate(f, 2)?;
    let first = HardyReport::new("f", spec, norm(&di, spec)?, norm(&f2, spec)?)?;

    let ifn = apply_i(f);
    let grid = f.grid();
    let weight = GridFunction::from_fn(grid, |y| y / (1.0 + y * y), 0.0, 1.0);
    let g = weight.product(&ifn);
    let f1 = differentiate(f, 1)?;
    let lower = WeightedNormSpec::new(k.saturating_sub(1).max(1), p, 0.0)?;
    let second = HardyReport::new("f", spec, norm(&g, spec)?, norm(&f1, lower)?)?;
    Ok((first, second))
}

/// y^k (c0 + c1 y + c2 y²) exp(-(y/w)²)
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlatProbe {
    pub k: usize,
    pub coeffs: [f64; 3],
    pub width: f64,
}

impl FlatProbe {
    pub fn random(k: usize, rng: &mut impl Rng) -> FlatProbe {
        let mut coeffs = [0.0; 3];
        for c in coeffs.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        FlatProbe { k, coeffs, width: rng.gen_range(0.3..5.0) }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        let z = y / self.width;
        y.powi(self.k as i32) * (c0 + c1 * y + c2 * y * y) * (-z * z).exp()
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> GridFunction {
        let slope = if self.k == 1 { self.coeffs[0] } else { 0.0 };
        let v0 = if self.k == 0 { self.coeffs[0] } else { 0.0 };
        GridFunction::from_fn(grid, |y| self.eval(y), v0, slope)
    }
}

/// Seeded family of functions flat to order k at 0.
pub fn flat_family(k: usize, count: usize, seed: u64) -> Vec<FlatProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| FlatProbe::random(k, &mut rng)).collect()
}

/// Hardy ratios over a seeded family, degenerate members dropped.
pub fn family_ratios(
    grid: &Arc<Grid>,
    spec: WeightedNormSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<HardyReport>> {
    let family = flat_family(spec.k, count, seed);
    let reports: Result<Vec<HardyReport>> = family
        .par_iter()
        .enumerate()
        .map(|(i, probe)| Ok(hardy_ratio(&probe.sample(grid), spec)?.with_id(format!("flat-{i}"))))
        .collect();
    Ok(reports?.into_iter().filter(|r| !r.is_degenerate()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_profile;
    use crate::grid::make_grid;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(make_grid(1.0, n, 1e-6, 1e3).unwrap())
    }

    #[test]
    fn i_of_monomials() {
        let g = grid(1024);
        let sq = apply_i(&GridFunction::from_fn(&g, |y| y * y, 0.0, 0.0));
        for (y, v) in g.nodes().iter().zip(sq.values()) {
            assert!((v - y).abs() <= 1e-12 * y.max(1.0), "{y} {v}");
        }
        let cube = apply_i(&GridFunction::from_fn(&g, |y| y * y * y, 0.0, 0.0));
        for (y, v) in g.nodes().iter().zip(cube.values()) {
            assert!((v - 0.5 * y * y).abs() <= 1e-10 * (y * y).max(1.0), "{y} {v}");
        }
        let affine = apply_i(&GridFunction::from_fn(&g, |y| 2.0 - 3.0 * y, 2.0, -3.0));
        assert!(affine.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn derivative_of_i_is_the_quotient() {
        let g = grid(4096);
        let f = GridFunction::from_fn(&g, |y| (-y).exp(), 1.0, -1.0);
        let i = apply_i(&f);
        let d = differentiate(&i, 1).unwrap();
        let q = subtracted_quotient(&f);
        for j in (10..g.len() - 10).step_by(97) {
            let y = g.nodes()[j];
            if y > 50.0 {
                break;
            }
            assert!((d.values()[j] - q.values()[j]).abs() < 1e-5, "{y}");
        }
    }

    #[test]
    fn classical_constant() {
        let g = grid(4096);
        let f = GridFunction::from_fn(&g, |y| y * (-y).exp(), 0.0, 1.0);
        let r = hardy_ratio(&f, WeightedNormSpec::new(1, 2.0, 0.0).unwrap()).unwrap();
        assert!(r.ratio.unwrap() <= 2.0);
        // ∫(e^-y)² = 1/2 and ∫((1-y)e^-y)² = 1/4
        assert!((r.ratio.unwrap() - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn zero_is_degenerate() {
        let g = grid(256);
        let r = hardy_ratio(&GridFunction::zeros(&g), WeightedNormSpec::new(1, 2.0, 0.0).unwrap());
        assert!(r.unwrap().is_degenerate());
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let g = grid(1024);
        let f = GridFunction::from_fn(&g, |y| y * y * (-y * y).exp(), 0.0, 0.0);
        let spec = WeightedNormSpec::new(2, 2.0, 0.0).unwrap();
        let a = hardy_ratio(&f, spec).unwrap().ratio.unwrap();
        let b = hardy_ratio(&f.scale(-7.5), spec).unwrap().ratio.unwrap();
        assert!((a - b).abs() < 1e-13 * a);
    }

    #[test]
    fn precondition_rejections() {
        let g = grid(256);
        let f = GridFunction::from_fn(&g, |y| y * (-y).exp(), 0.0, 1.0);
        assert!(matches!(
            hardy_ratio(&f, WeightedNormSpec::new(1, 2.0, 0.6).unwrap()),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            hardy_ratio(&f, WeightedNormSpec::new(2, 2.0, 0.0).unwrap()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn affine_numerators_vanish() {
        let g = grid(512);
        let f = GridFunction::from_fn(&g, |y| 1.0 + 2.0 * y, 1.0, 2.0);
        let (a, b) = check_i_bounds(&f, 1, 2.0).unwrap();
        assert!(a.lhs < 1e-8 && b.lhs < 1e-8, "{} {}", a.lhs, b.lhs);
    }

    #[test]
    fn profile_bounds_finite() {
        let g = Arc::new(make_grid(0.5, 2048, 1e-6, 1e3).unwrap());
        let p = exact_profile(0.5, &g).unwrap();
        let (a, b) = check_i_bounds(&p.w, 0, 2.0).unwrap();
        assert!(a.ratio.unwrap().is_finite() && b.ratio.unwrap().is_finite());
    }
}
