//! Seeded verification suites. Each returns named verdicts plus a data table.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{check_self_similar_collapse, detect_blowup, evolve, exact_datum, EvolveConfig};
use crate::exact::{clm_exact_solution, exact_hw, exact_profile, trig};
use crate::grid::{make_grid, norm, Grid, GridFunction, TailModel, WeightedNormSpec};
use crate::hardy::family_ratios;
use crate::hilbert::{apply_fractional_hilbert, estimate_l2_norm, hilbert_slope_at_zero, kernel_chain, Probe};
use crate::linop::{apply_l, apply_l_inverse, y_functional, BasePoint};
use crate::solver::{continuation, residual_phi, ProfileSolver, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Kernel,
    Hilbert,
    Hardy,
    Linop,
    Solver,
    Evolve,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Kernel, Suite::Hilbert, Suite::Hardy, Suite::Linop, Suite::Solver, Suite::Evolve];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernel => "kernel",
            Suite::Hilbert => "hilbert",
            Suite::Hardy => "hardy",
            Suite::Linop => "linop",
            Suite::Solver => "solver",
            Suite::Evolve => "evolve",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown suite {s:?}")))
    }
}

/// One verdict: `passed` iff `measured` is within `threshold` in the sense
/// named by `relation`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Check {
        let passed = measured <= threshold;
        Check { name: name.into(), measured, relation: Relation::AtMost, threshold, passed }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Check {
        let passed = measured >= threshold;
        Check { name: name.into(), measured, relation: Relation::AtLeast, threshold, passed }
    }
}

/// Rows already rendered as text; floats carry 17 significant digits.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Round-trip exact decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub table: Table,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Size knobs. The defaults match the acceptance thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub n: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub kernel_samples: usize,
    pub probes: usize,
    pub family: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n: crate::grid::DEFAULT_NODES,
            y_min: crate::grid::DEFAULT_Y_MIN,
            y_max: crate::grid::DEFAULT_Y_MAX,
            kernel_samples: 10_000,
            probes: 20,
            family: 50,
        }
    }
}

impl VerifyConfig {
    fn grid(&self, alpha: f64) -> Result<Arc<Grid>> {
        Ok(Arc::new(make_grid(alpha, self.n, self.y_min, self.y_max)?))
    }
}

const ALPHAS: [f64; 4] = [0.3, 0.5, std::f64::consts::FRAC_1_PI, 0.9];

pub fn run_suite(suite: Suite, seed: u64, config: &VerifyConfig) -> Result<CheckReport> {
    let (checks, table) = match suite {
        Suite::Kernel => kernel_suite(seed, config)?,
        Suite::Hilbert => hilbert_suite(seed, config)?,
        Suite::Hardy => hardy_suite(seed, config)?,
        Suite::Linop => linop_suite(seed, config)?,
        Suite::Solver => solver_suite(config)?,
        Suite::Evolve => evolve_suite()?,
    };
    Ok(CheckReport { suite, seed, checks, table })
}

type SuiteOutput = (Vec<Check>, Table);

fn kernel_suite(seed: u64, config: &VerifyConfig) -> Result<SuiteOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Table::new(&["r", "t", "k1", "k2", "k3", "k4", "ordered"]);
    let mut violations = 0usize;
    for _ in 0..config.kernel_samples {
        let r = rng.gen_range(1.0..=20.0);
        let t = rng.gen_range(0.0..1.0);
        let e = kernel_chain(r, t)?;
        violations += usize::from(!e.ordered);
        table.push(vec![
            fmt_f64(r),
            fmt_f64(t),
            fmt_f64(e.k1),
            fmt_f64(e.k2),
            fmt_f64(e.k3),
            fmt_f64(e.k4),
            e.ordered.to_string(),
        ]);
    }
    Ok((vec![Check::at_most("chain violations", violations as f64, 0.0)], table))
}

fn hilbert_suite(seed: u64, config: &VerifyConfig) -> Result<SuiteOutput> {
    let mut checks = Vec::new();
    let mut table = Table::new(&["quantity", "parameter", "measured", "reference"]);
    for alpha in ALPHAS {
        let g = config.grid(alpha)?;
        let p = exact_profile(alpha, &g)?;
        let t = apply_fractional_hilbert(&p.w, 1.0 / alpha)?;
        let worst = g
            .nodes()
            .iter()
            .zip(t.function.values())
            .filter(|(y, _)| (1e-3..=1e2).contains(*y))
            .map(|(&y, &v)| ((v - exact_hw(alpha, y)) / exact_hw(alpha, y)).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most(format!("closed form alpha={alpha}"), worst, 1e-6));
        table.push(vec!["closed_form_error".into(), fmt_f64(alpha), fmt_f64(worst), fmt_f64(0.0)]);
    }
    for (i, r) in [1.0, 1.5, 2.0, 3.0, 5.0, 10.0].into_iter().enumerate() {
        let est = estimate_l2_norm(r, config.probes, seed.wrapping_add(i as u64))?;
        checks.push(Check::at_most(format!("norm r={r}"), est.estimated_norm, est.bound));
        if r == 1.0 {
            checks.push(Check::at_least("norm r=1 lower", est.estimated_norm, 0.98));
            checks.push(Check::at_most("norm r=1 upper", est.estimated_norm, 1.0 + 1e-12));
        }
        table.push(vec!["l2_norm".into(), fmt_f64(r), fmt_f64(est.estimated_norm), fmt_f64(est.bound)]);
    }
    for alpha in [0.3, 0.5, 0.9] {
        let g = config.grid(alpha)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let f = Probe::random(&mut rng).sample(&g);
            let (measured, predicted) = hilbert_slope_at_zero(&f, alpha)?;
            worst = worst.max(((measured - predicted) / predicted).abs());
            table.push(vec!["slope_at_zero".into(), fmt_f64(alpha), fmt_f64(measured), fmt_f64(predicted)]);
        }
        checks.push(Check::at_most(format!("trace identity alpha={alpha}"), worst, 1e-3));
    }
    Ok((checks, table))
}

fn hardy_suite(seed: u64, config: &VerifyConfig) -> Result<SuiteOutput> {
    let mut checks = Vec::new();
    let mut table = Table::new(&["function_id", "k", "p", "gamma", "ratio"]);
    let coarse = config.grid(1.0)?;
    let fine = Arc::new(coarse.refined()?);
    for (k, p, gamma) in [(1, 2.0, 0.0), (2, 2.0, 0.0), (1, 3.0, 0.5)] {
        let spec = WeightedNormSpec::new(k, p, gamma)?;
        let reports = family_ratios(&coarse, spec, config.family, seed)?;
        let max_of = |reports: &[crate::hardy::HardyReport]| {
            reports.iter().filter_map(|r| r.ratio).fold(0.0, f64::max)
        };
        let m1 = max_of(&reports);
        let m2 = max_of(&family_ratios(&fine, spec, config.family, seed)?);
        let label = format!("({k},{p},{gamma})");
        checks.push(Check::at_least(format!("{label} nondegenerate"), reports.len() as f64, config.family as f64));
        checks.push(Check::at_most(format!("{label} refinement drift"), ((m2 - m1) / m1).abs(), 0.05));
        if (k, p, gamma) == (1, 2.0, 0.0) {
            checks.push(Check::at_most(format!("{label} maximum"), m1.max(m2), 2.0 + 1e-3));
        }
        for r in reports {
            let ratio = r.ratio.map_or_else(|| "nan".to_string(), fmt_f64);
            table.push(vec![r.function_id, k.to_string(), fmt_f64(p), fmt_f64(gamma), ratio]);
        }
    }
    Ok((checks, table))
}

/// y² (c0 + c1 y) exp(-y/w) with the tail of an element of X.
fn manufactured(grid: &Arc<Grid>, alpha: f64, (c0, c1, w): (f64, f64, f64)) -> GridFunction {
    GridFunction::from_fn(grid, |y| y * y * (c0 + c1 * y) * (-y / w).exp(), 0.0, 0.0)
        .with_tail(TailModel::power(1.0 + 2.0 / alpha, 1.0))
}

fn roundtrip(grid: &Arc<Grid>, alpha: f64, params: (f64, f64, f64)) -> Result<f64> {
    let base = BasePoint::new(alpha, grid)?;
    let v = manufactured(grid, alpha, params);
    let back = apply_l_inverse(&apply_l(&v, &base)?, &base)?;
    let h2 = WeightedNormSpec::new(2, 2.0, 0.0)?;
    Ok(norm(&back.axpy(-1.0, &v), h2)? / norm(&v, h2)?)
}

fn linop_suite(seed: u64, config: &VerifyConfig) -> Result<SuiteOutput> {
    let mut checks = Vec::new();
    let mut table = Table::new(&["alpha", "case", "c0", "c1", "width", "error", "error_refined", "gain"]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<(f64, f64, f64)> = (0..10)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.3..3.0)))
        .collect();
    for alpha in [0.3, 0.5, 0.9] {
        let coarse = config.grid(alpha)?;
        let fine = Arc::new(coarse.refined()?);
        let (mut worst, mut gain) = (0.0f64, f64::INFINITY);
        for (case, &p) in params.iter().enumerate() {
            let e1 = roundtrip(&coarse, alpha, p)?;
            let e2 = roundtrip(&fine, alpha, p)?;
            worst = worst.max(e1);
            gain = gain.min(e1 / e2);
            table.push(vec![
                fmt_f64(alpha),
                case.to_string(),
                fmt_f64(p.0),
                fmt_f64(p.1),
                fmt_f64(p.2),
                fmt_f64(e1),
                fmt_f64(e2),
                fmt_f64(e1 / e2),
            ]);
        }
        checks.push(Check::at_most(format!("roundtrip alpha={alpha}"), worst, 1e-3));
        checks.push(Check::at_least(format!("refinement gain alpha={alpha}"), gain, 4.0));
    }
    for alpha in ALPHAS {
        let base = BasePoint::new(alpha, &config.grid(alpha)?)?;
        let got = y_functional(&base.direction().scale(alpha), &base)?;
        let dev = (got + 2.0 * trig(alpha).1).abs();
        checks.push(Check::at_most(format!("anchor alpha={alpha}"), dev, 1e-8));
    }
    Ok((checks, table))
}

fn solver_suite(config: &VerifyConfig) -> Result<SuiteOutput> {
    let mut checks = Vec::new();
    for alpha in ALPHAS {
        let g = config.grid(alpha)?;
        let p = exact_profile(alpha, &g)?;
        let phi = residual_phi(&p.w.scale(1.0 / alpha), 0.0, 0.0, alpha)?;
        let r = norm(&phi, WeightedNormSpec::l2())?;
        checks.push(Check::at_most(format!("exact residual alpha={alpha}"), r, 5e-5));
    }
    let alpha = 0.5;
    let targets: Vec<f64> =
        [0.0, 0.005, -0.005, 0.01, -0.01, 0.02, -0.02].iter().map(|aa| aa / alpha).collect();
    let solver_config = SolverConfig { n: config.n, y_min: config.y_min, y_max: config.y_max, ..SolverConfig::default() };
    let sweep = continuation(&targets, alpha, solver_config)?;
    let mut table = Table::new(&["a", "lambda", "residual", "iterations"]);
    for s in &sweep.solutions {
        table.push(vec![fmt_f64(s.a), fmt_f64(s.lambda), fmt_f64(s.residual_l2), s.iterations.to_string()]);
        checks.push(Check::at_most(format!("residual a={}", s.a), s.residual_l2, 1e-8));
    }
    let reached = sweep.solutions.len() as f64;
    checks.push(Check::at_least("targets reached", reached, targets.len() as f64));
    if let Some(fit) = &sweep.fit {
        checks.push(Check::at_most("lambda fit residual", fit.residual, 1e-4 * fit.max_abs_lambda));
    }
    Ok((checks, table))
}

fn evolve_suite() -> Result<SuiteOutput> {
    let config = EvolveConfig::default();
    let g = config.grid()?;
    let profile = ProfileSolver::new(1.0, SolverConfig::default())?.solve(0.0, None)?;
    let traj = evolve(&exact_datum(1.0, &g)?, 0.0, 0.75, &config)?;
    let deviations = check_self_similar_collapse(&traj, &profile)?;
    let mut table = Table::new(&["t", "sup_norm", "collapse_deviation", "clm_error"]);
    let mut worst_clm = 0.0f64;
    for ((t, s), (w, d)) in traj.times.iter().zip(&traj.sup_norms).zip(traj.snapshots.iter().zip(&deviations)) {
        let mut err = 0.0f64;
        for (&x, &v) in g.nodes().iter().zip(w.values()) {
            err = err.max((v - clm_exact_solution(x, *t)?).abs());
        }
        worst_clm = worst_clm.max(err);
        table.push(vec![fmt_f64(*t), fmt_f64(*s), fmt_f64(*d), fmt_f64(err)]);
    }
    let fit = detect_blowup(&traj)?;
    let checks = vec![
        Check::at_most("exact solution sup error", worst_clm, 1e-3),
        Check::at_most("collapse deviation", deviations.iter().copied().fold(0.0, f64::max), 1e-3),
        Check::at_most("blow-up time offset", (fit.t_star - 1.0).abs(), 0.02),
    ];
    Ok((checks, table))
}
