//! Benchmark fixtures shared by the criterion targets.

use std::sync::Arc;

use degregorio::{exact_profile, make_grid, BasePoint, GridFunction, Result, TailModel};

pub struct Fixture {
    pub alpha: f64,
    pub profile: GridFunction,
    pub base: BasePoint,
    /// L applied to a smooth element of X
    pub image: GridFunction,
}

pub fn fixture(alpha: f64, n: usize) -> Result<Fixture> {
    let grid = Arc::new(make_grid(alpha, n, 1e-6, 1e3)?);
    let profile = exact_profile(alpha, &grid)?.w;
    let base = BasePoint::new(alpha, &grid)?;
    let v = GridFunction::from_fn(&grid, |y| y * y * (0.4 - y) * (-y).exp(), 0.0, 0.0)
        .with_tail(TailModel::power(1.0 + 2.0 / alpha, 1.0));
    let image = degregorio::apply_l(&v, &base)?;
    Ok(Fixture { alpha, profile, base, image })
}
