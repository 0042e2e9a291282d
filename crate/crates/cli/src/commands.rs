use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use degregorio::exact::{exact_hw, exact_w};
use degregorio::grid::{DEFAULT_NODES, DEFAULT_Y_MAX, DEFAULT_Y_MIN};
use degregorio::verify::fmt_f64;
use degregorio::{
    check_self_similar_collapse, continuation, detect_blowup, evolve, exact_datum, make_grid, profile_datum,
    run_suite, EvolveConfig, ProfileSolution, SolverConfig, Suite, VerifyConfig,
};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::manifest::{GridParams, RunManifest};
use crate::{Cli, Command, ContinueArgs, EvolveArgs, ExactArgs, Failure, SolveArgs, VerifyArgs, EXIT_FAILURE, EXIT_OK};

type Outcome = Result<i32, Failure>;

/// Merges flags over the config file over defaults and records the result.
struct Resolver {
    config: ConfigFile,
    flags: BTreeMap<String, String>,
}

impl Resolver {
    fn pick<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure> {
        let value = match flag {
            Some(v) => v,
            None => self.config.get(key)?.unwrap_or(default),
        };
        self.flags.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, Failure> {
        let value = match flag {
            Some(v) => v,
            None => self.config.get(key)?.ok_or_else(|| Failure::usage(format!("missing --{key}")))?,
        };
        self.flags.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        let value = flag.or_else(|| self.config.get_str(key).map(PathBuf::from));
        if let Some(p) = &value {
            self.flags.insert(key.to_string(), p.display().to_string());
        }
        value
    }

    fn optional_str(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let value = flag.or_else(|| self.config.get_str(key).map(str::to_string));
        if let Some(v) = &value {
            self.flags.insert(key.to_string(), v.clone());
        }
        value
    }
}

struct Context {
    resolver: Resolver,
    threads: usize,
}

impl Context {
    fn manifest(&self, command: &str, seed: Option<u64>, grid: GridParams) -> RunManifest {
        RunManifest::new(command, self.resolver.flags.clone(), seed, grid, self.threads)
    }
}

pub(crate) fn dispatch(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let known: &[&str] = match &cli.command {
        Command::Exact(_) => &["alpha", "grid-n", "out"],
        Command::Solve(_) => &["alpha", "a", "tol", "grid-n", "out"],
        Command::Continue(_) => &["alpha", "a-max", "steps", "tol", "grid-n", "out"],
        Command::Evolve(_) => &["alpha", "a", "t-end", "dt-max", "snapshots", "grid-n", "out-dir"],
        Command::Verify(_) => &["suite", "seed", "grid-n", "out-dir"],
    };
    let mut with_threads = known.to_vec();
    with_threads.push("threads");
    config.check_keys(&with_threads)?;
    let mut resolver = Resolver { config, flags: BTreeMap::new() };
    let threads = resolver.pick("threads", cli.threads, 0usize)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::failed(format!("thread pool: {e}")))?;
    let mut ctx = Context { resolver, threads };
    match cli.command {
        Command::Exact(args) => exact(&mut ctx, args),
        Command::Solve(args) => solve(&mut ctx, args),
        Command::Continue(args) => continue_sweep(&mut ctx, args),
        Command::Evolve(args) => evolve_cmd(&mut ctx, args),
        Command::Verify(args) => verify(&mut ctx, args),
    }
}

fn profile_grid(n: usize) -> GridParams {
    GridParams { n, min: DEFAULT_Y_MIN, max: DEFAULT_Y_MAX }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes `text` to `path`, or to stdout when there is no path.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            fs::create_dir_all(parent_dir(p))?;
            fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn exact(ctx: &mut Context, args: ExactArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let alpha = r.require("alpha", args.alpha)?;
    let n = r.pick("grid-n", args.grid_n, DEFAULT_NODES)?;
    let out = r.optional_path("out", args.out);
    let grid = make_grid(alpha, n, DEFAULT_Y_MIN, DEFAULT_Y_MAX)?;
    let mut csv = String::from("y,W,HW\n");
    for &y in grid.nodes() {
        csv.push_str(&format!("{},{},{}\n", fmt_f64(y), fmt_f64(exact_w(alpha, y)), fmt_f64(exact_hw(alpha, y))));
    }
    emit(out.as_deref(), &csv)?;
    if let Some(p) = &out {
        ctx.manifest("exact", None, profile_grid(n)).write(&parent_dir(p))?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SolveReport {
    alpha: f64,
    a: f64,
    lambda: f64,
    residual_l2: f64,
    iterations: usize,
    profile_csv: Option<String>,
    grid: GridParams,
    history: Vec<f64>,
}

/// Continuation from a = 0, so targets beyond one step still converge.
fn solve_at(alpha: f64, a: f64, config: SolverConfig) -> Result<ProfileSolution, Failure> {
    let mut sweep = continuation(&[a], alpha, config)?;
    if let Some((at, e)) = sweep.failure {
        return Err(Failure::failed(format!("no profile at a = {at}: {e}")));
    }
    sweep.solutions.pop().ok_or_else(|| Failure::failed("continuation produced no solution"))
}

fn profile_csv(sol: &ProfileSolution) -> String {
    let mut csv = String::from("y,W\n");
    let w = sol.profile();
    for (y, v) in w.grid().nodes().iter().zip(w.values()) {
        csv.push_str(&format!("{},{}\n", fmt_f64(*y), fmt_f64(*v)));
    }
    csv
}

fn solve(ctx: &mut Context, args: SolveArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let alpha = r.require("alpha", args.alpha)?;
    let a = r.pick("a", args.a, 0.0)?;
    let defaults = SolverConfig::default();
    let tol = r.pick("tol", args.tol, defaults.tol)?;
    let n = r.pick("grid-n", args.grid_n, defaults.n)?;
    let out = r.optional_path("out", args.out);
    let sol = solve_at(alpha, a, SolverConfig { n, tol, ..defaults })?;
    let csv_path = out.as_ref().map(|p| {
        let stem = p.file_stem().map_or("solve".into(), |s| s.to_string_lossy().into_owned());
        p.with_file_name(format!("{stem}_profile.csv"))
    });
    let report = SolveReport {
        alpha,
        a,
        lambda: sol.lambda,
        residual_l2: sol.residual_l2,
        iterations: sol.iterations,
        profile_csv: csv_path.as_ref().map(|p| p.display().to_string()),
        grid: profile_grid(n),
        history: sol.history.clone(),
    };
    if let Some(p) = &csv_path {
        emit(Some(p), &profile_csv(&sol))?;
    }
    emit(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if let Some(p) = &out {
        ctx.manifest("solve", None, profile_grid(n)).write(&parent_dir(p))?;
    }
    Ok(EXIT_OK)
}

fn continue_sweep(ctx: &mut Context, args: ContinueArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let alpha = r.require("alpha", args.alpha)?;
    let a_max = r.require("a-max", args.a_max)?;
    let steps = r.pick("steps", args.steps, 10usize)?;
    let defaults = SolverConfig::default();
    let tol = r.pick("tol", args.tol, defaults.tol)?;
    let n = r.pick("grid-n", args.grid_n, defaults.n)?;
    let out = r.optional_path("out", args.out);
    if steps == 0 {
        return Err(Failure::usage("--steps must be positive"));
    }
    let targets: Vec<f64> = (0..=steps).map(|k| a_max * k as f64 / steps as f64).collect();
    let sweep = continuation(&targets, alpha, SolverConfig { n, tol, ..defaults })?;
    let mut csv = String::from("a,lambda,residual,iterations\n");
    for s in &sweep.solutions {
        csv.push_str(&format!("{},{},{},{}\n", fmt_f64(s.a), fmt_f64(s.lambda), fmt_f64(s.residual_l2), s.iterations));
    }
    emit(out.as_deref(), &csv)?;
    if let Some(p) = &out {
        ctx.manifest("continue", None, profile_grid(n)).write(&parent_dir(p))?;
    }
    match sweep.failure {
        Some((a, e)) => Err(Failure::failed(format!("continuation stopped at a = {a}: {e}"))),
        None => Ok(EXIT_OK),
    }
}

fn parse_times(list: &str) -> Result<Vec<f64>, Failure> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::usage(format!("bad snapshot time {s:?}"))))
        .collect()
}

#[derive(Serialize)]
struct SupEntry {
    t: f64,
    sup_norm: f64,
}

#[derive(Serialize)]
struct EvolveSummary {
    alpha: f64,
    a: f64,
    lambda: f64,
    t_end: f64,
    steps: usize,
    termination: degregorio::Termination,
    sup_norm: Vec<SupEntry>,
    collapse_deviation: Vec<f64>,
    #[serde(rename = "T_star")]
    t_star: Option<f64>,
    fit_quality: Option<f64>,
    blowup_note: Option<String>,
    grid: GridParams,
}

fn evolve_cmd(ctx: &mut Context, args: EvolveArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let defaults = EvolveConfig::default();
    let alpha = r.pick("alpha", args.alpha, 1.0)?;
    let a = r.pick("a", args.a, 0.0)?;
    let t_end = r.pick("t-end", args.t_end, 0.5)?;
    let dt_max = r.pick("dt-max", args.dt_max, defaults.dt_max)?;
    let n = r.pick("grid-n", args.grid_n, defaults.n)?;
    let snapshots = match r.optional_str("snapshots", args.snapshots) {
        Some(list) => parse_times(&list)?,
        None => Vec::new(),
    };
    let out_dir = r.optional_path("out-dir", args.out_dir);
    if !(t_end > 0.0 && t_end < 1.0) {
        return Err(Failure::usage(format!("--t-end must lie in (0, 1), got {t_end}")));
    }
    let config = EvolveConfig { n, dt_max, snapshots, alpha, ..defaults };
    let grid = config.grid()?;
    let profile = solve_at(alpha, a, SolverConfig::default())?;
    let w0 = if a == 0.0 { exact_datum(alpha, &grid)? } else { profile_datum(&profile, &grid)? };
    let traj = evolve(&w0, a, t_end, &config)?;
    let collapse_deviation = check_self_similar_collapse(&traj, &profile)?;
    let (t_star, fit_quality, blowup_note) = match detect_blowup(&traj) {
        Ok(fit) => (Some(fit.t_star), Some(fit.r_squared), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let grid_params = GridParams { n, min: config.x_min, max: config.x_max };
    let summary = EvolveSummary {
        alpha,
        a,
        lambda: profile.lambda,
        t_end,
        steps: traj.steps,
        termination: traj.termination,
        sup_norm: traj.times.iter().zip(&traj.sup_norms).map(|(&t, &s)| SupEntry { t, sup_norm: s }).collect(),
        collapse_deviation,
        t_star,
        fit_quality,
        blowup_note,
        grid: grid_params.clone(),
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    match &out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (k, w) in traj.snapshots.iter().enumerate() {
                let mut csv = String::from("x,w\n");
                for (x, v) in w.grid().nodes().iter().zip(w.values()) {
                    csv.push_str(&format!("{},{}\n", fmt_f64(*x), fmt_f64(*v)));
                }
                fs::write(dir.join(format!("snapshot_{k:03}.csv")), csv)?;
            }
            fs::write(dir.join("summary.json"), json)?;
            ctx.manifest("evolve", None, grid_params).write(dir)?;
        }
        None => emit(None, &json)?,
    }
    Ok(EXIT_OK)
}

fn verify(ctx: &mut Context, args: VerifyArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let suite_name: String = r.require("suite", args.suite)?;
    let suite: Suite = suite_name.parse().map_err(|e: degregorio::Error| Failure::usage(e.to_string()))?;
    let seed = r.pick("seed", args.seed, 0u64)?;
    let defaults = VerifyConfig::default();
    let n = r.pick("grid-n", args.grid_n, defaults.n)?;
    let out_dir = r.optional_path("out-dir", args.out_dir);
    let config = VerifyConfig { n, ..defaults };
    let report = run_suite(suite, seed, &config)?;
    let csv = report.table.to_csv();
    let mut lines = String::new();
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let rel = match c.relation {
            degregorio::verify::Relation::AtMost => "<=",
            degregorio::verify::Relation::AtLeast => ">=",
        };
        lines.push_str(&format!("{verdict} {}: {} {rel} {}\n", c.name, fmt_f64(c.measured), fmt_f64(c.threshold)));
    }
    match &out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{suite}.csv")), csv)?;
            fs::write(dir.join(format!("{suite}_report.json")), serde_json::to_string_pretty(&report)? + "\n")?;
            ctx.manifest("verify", Some(seed), profile_grid(n)).write(dir)?;
            print!("{lines}");
        }
        None => {
            emit(None, &csv)?;
            eprint!("{lines}");
        }
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_config_beats_default() {
        let config = ConfigFile::parse("alpha=0.3\ntol=1e-7").unwrap();
        let mut r = Resolver { config, flags: BTreeMap::new() };
        assert_eq!(r.pick("alpha", Some(0.5), 1.0).unwrap(), 0.5);
        assert_eq!(r.pick("tol", None, 1e-9).unwrap(), 1e-7);
        assert_eq!(r.pick("steps", None, 10usize).unwrap(), 10);
        assert_eq!(r.flags["alpha"], "0.5");
        assert_eq!(r.flags["steps"], "10");
        assert!(r.require::<f64>("a-max", None).is_err());
    }

    #[test]
    fn snapshot_list() {
        assert_eq!(parse_times("0.1, 0.25,0.5").unwrap(), vec![0.1, 0.25, 0.5]);
        assert!(parse_times("0.1,x").is_err());
    }
}
