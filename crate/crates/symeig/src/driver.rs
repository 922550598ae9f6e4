//! Batch front-end: run configuration, the solve/validate/convergence
//! workflows, file outputs, and the communication bookkeeping for the
//! two-level concurrency contract.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::assembly::{assemble_full, assemble_reduced, Discretization, Problem, ReducedSystem};
use crate::dense;
use crate::eigensolve::{
    self, lift_eigenvector, DecomposedOptions, MergedSpectrum, SolveMode, SolveOptions, SolveStats,
    SubproblemSpectrum,
};
use crate::error::{Error, Result};
use crate::grid::{build_grid, orbit_decomposition, SymmetricGrid};
use crate::group::{builtin_group, verify_great_orthogonality, verify_group_axioms, PointGroup};
use crate::sabasis::{construct_sab, verify_equivalence};

/// Problems the front-end knows how to set up and reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemChoice {
    /// `-1/2 Delta + 1/2 |x|^2`, exact eigenvalues `k+m+n+1.5` (3D).
    Oscillator,
    /// `-Delta`, exact eigenvalues `sum (m_a pi / 2a)^2`.
    Laplacian,
}

impl ProblemChoice {
    pub fn build(&self) -> Problem {
        match self {
            ProblemChoice::Oscillator => Problem::harmonic_oscillator(),
            ProblemChoice::Laplacian => Problem::laplacian(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemChoice::Oscillator => "oscillator",
            ProblemChoice::Laplacian => "laplacian",
        }
    }

    /// First `count` exact eigenvalues, ascending with multiplicity.
    pub fn exact_eigenvalues(&self, dim: usize, half_width: f64, count: usize) -> Vec<f64> {
        let mut vals = Vec::new();
        match self {
            ProblemChoice::Oscillator => {
                // k + m + n + 1.5; enumerate a generous box.
                let bound = (count + 4) as i64;
                for k in 0..bound {
                    for m in 0..bound {
                        for n in 0..bound {
                            if dim == 3 {
                                vals.push((k + m + n) as f64 + 1.5);
                            } else if n == 0 {
                                vals.push((k + m) as f64 + 1.0);
                            }
                        }
                    }
                }
            }
            ProblemChoice::Laplacian => {
                let base = std::f64::consts::PI / (2.0 * half_width);
                let bound = (count + 4) as i64;
                for k in 1..=bound {
                    for m in 1..=bound {
                        if dim == 2 {
                            vals.push(base * base * (k * k + m * m) as f64);
                        } else {
                            for n in 1..=bound {
                                vals.push(base * base * (k * k + m * m + n * n) as f64);
                            }
                        }
                    }
                }
            }
        }
        vals.sort_by(f64::total_cmp);
        vals.truncate(count);
        vals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Decomposed,
    Direct,
    Both,
}

/// Batch run configuration. Parsed from flat `key = value` text or built
/// programmatically.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemChoice,
    pub dim: usize,
    pub half_width: f64,
    pub partitions: Vec<usize>,
    pub scheme: Discretization,
    /// Built-in group name, or `None` for a direct solve only.
    pub group: Option<String>,
    /// Group definition file; takes precedence over `group` when set.
    pub group_file: Option<PathBuf>,
    pub n_e: usize,
    pub n_a: Option<usize>,
    pub tol: f64,
    pub mode: RunMode,
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Shift for generalized solves; defaults to 0 (below the spectrum of
    /// both shipped problems).
    pub sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemChoice::Oscillator,
            dim: 3,
            half_width: 5.0,
            partitions: vec![21, 21, 21],
            scheme: Discretization::Fd2,
            group: Some("D2H".into()),
            group_file: None,
            n_e: 10,
            n_a: None,
            tol: 1e-8,
            mode: RunMode::Decomposed,
            threads: 0,
            out_dir: PathBuf::from("."),
            sigma: 0.0,
        }
    }
}

impl RunConfig {
    /// Parses the flat key-value configuration format; errors carry line
    /// numbers.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let bad = |line: usize, msg: String| Error::Config(format!("line {line}: {msg}"));
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(lineno, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "problem" => {
                    cfg.problem = match value.to_ascii_lowercase().as_str() {
                        "oscillator" => ProblemChoice::Oscillator,
                        "laplacian" => ProblemChoice::Laplacian,
                        other => return Err(bad(lineno, format!("unknown problem `{other}`"))),
                    }
                }
                "dim" => cfg.dim = parse_num(value).map_err(|e| bad(lineno, e))?,
                "half_width" => cfg.half_width = parse_num(value).map_err(|e| bad(lineno, e))?,
                "partitions" => {
                    cfg.partitions = value
                        .split(',')
                        .map(|t| parse_num::<usize>(t.trim()))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| bad(lineno, e))?;
                }
                "scheme" => {
                    cfg.scheme = match value.to_ascii_lowercase().as_str() {
                        "fd2" => Discretization::Fd2,
                        "q1fe" => Discretization::Q1Fe,
                        other => return Err(bad(lineno, format!("unknown scheme `{other}`"))),
                    }
                }
                "group" => {
                    cfg.group = match value.to_ascii_uppercase().as_str() {
                        "NONE" => None,
                        g => Some(g.to_string()),
                    }
                }
                "group_file" => cfg.group_file = Some(PathBuf::from(value)),
                "ne" | "n_e" => cfg.n_e = parse_num(value).map_err(|e| bad(lineno, e))?,
                "na" | "n_a" => cfg.n_a = Some(parse_num(value).map_err(|e| bad(lineno, e))?),
                "tol" => cfg.tol = parse_num(value).map_err(|e| bad(lineno, e))?,
                "mode" => {
                    cfg.mode = match value.to_ascii_lowercase().as_str() {
                        "decomposed" => RunMode::Decomposed,
                        "direct" => RunMode::Direct,
                        "both" => RunMode::Both,
                        other => return Err(bad(lineno, format!("unknown mode `{other}`"))),
                    }
                }
                "threads" => cfg.threads = parse_num(value).map_err(|e| bad(lineno, e))?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "sigma" => cfg.sigma = parse_num(value).map_err(|e| bad(lineno, e))?,
                other => return Err(bad(lineno, format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions.len() != self.dim {
            return Err(Error::Config(format!(
                "{} partition counts for dim {}",
                self.partitions.len(),
                self.dim
            )));
        }
        for &p in &self.partitions {
            if p % 2 == 0 {
                return Err(Error::Config(format!(
                    "partitions must be odd, got {p} (even counts put nodes on coordinate planes)"
                )));
            }
        }
        if self.n_e == 0 {
            return Err(Error::Config("ne must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::Config(format!(
                "tol must lie in (0, 1e-2], got {}",
                self.tol
            )));
        }
        if matches!(self.mode, RunMode::Decomposed | RunMode::Both)
            && self.group.is_none()
            && self.group_file.is_none()
        {
            return Err(Error::Config(
                "decomposed mode requires a group (or set group = NONE with mode = direct)".into(),
            ));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<SymmetricGrid> {
        build_grid(self.dim, self.half_width, &self.partitions)
    }

    pub fn build_group(&self) -> Result<Option<PointGroup>> {
        if let Some(path) = &self.group_file {
            let text = std::fs::read_to_string(path)?;
            let group = PointGroup::from_definition_str(&text)?;
            let report = verify_group_axioms(&group);
            if !report.all_pass() {
                return Err(Error::GroupDefinition(format!(
                    "group `{}` fails verification: {}",
                    group.name,
                    report.failures.join("; ")
                )));
            }
            return Ok(Some(group));
        }
        match &self.group {
            Some(name) => Ok(Some(builtin_group(name)?)),
            None => Ok(None),
        }
    }

    fn direct_mode(&self) -> SolveMode {
        match self.scheme {
            Discretization::Fd2 => SolveMode::Standard,
            Discretization::Q1Fe => SolveMode::ShiftInvert { sigma: self.sigma },
        }
    }

    /// Runs `f` inside a thread pool sized by the config.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        if self.threads == 0 {
            f()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .expect("thread pool");
            pool.install(f)
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("bad number `{s}`"))
}

/// Everything a `solve` run produced.
#[derive(Debug)]
pub struct SolveOutput {
    pub merged: Option<MergedSpectrum>,
    pub direct: Option<SubproblemSpectrum>,
    /// Max relative eigenvalue discrepancy over the first `N_e` entries
    /// when both routes ran.
    pub comparison: Option<f64>,
    pub spectrum_path: PathBuf,
    pub stats_path: PathBuf,
}

/// Solves per the config and writes `spectrum.csv` and `stats.csv` into
/// the output directory. Decomposed entries carry nu-l labels; a direct
/// solve is written unlabeled. `both` also writes `direct_spectrum.csv`
/// and fills the comparison field.
pub fn run_solve(config: &RunConfig) -> Result<SolveOutput> {
    config.validate()?;
    let grid = config.build_grid()?;
    let problem = config.problem.build();

    let merged = match config.mode {
        RunMode::Direct => None,
        _ => {
            let group = config
                .build_group()?
                .ok_or_else(|| Error::Config("decomposed mode requires a group".into()))?;
            let mut opts = DecomposedOptions::new(config.n_e, config.tol);
            opts.n_a = config.n_a;
            opts.sigma = config.sigma;
            let m = config.with_pool(|| {
                eigensolve::solve_decomposed(&problem, &grid, &group, config.scheme, &opts)
            })?;
            Some(m)
        }
    };
    let direct = match config.mode {
        RunMode::Decomposed => None,
        _ => {
            let (a, b) = assemble_full(&problem, &grid, config.scheme);
            let bref = if b.is_identity() { None } else { Some(&b) };
            let mut opts = SolveOptions::new(config.n_e, config.tol, config.direct_mode());
            opts.row_parallel = config.threads > 1;
            Some(config.with_pool(|| eigensolve::solve_symmetric(&a, bref, &opts))?)
        }
    };

    let comparison = match (&merged, &direct) {
        (Some(m), Some(d)) => Some(max_rel_discrepancy(
            m.entries.iter().map(|e| e.lambda),
            d.eigenvalues.iter().copied(),
        )),
        _ => None,
    };

    std::fs::create_dir_all(&config.out_dir)?;
    let spectrum_path = config.out_dir.join("spectrum.csv");
    let stats_path = config.out_dir.join("stats.csv");

    let mut spectrum_csv = String::new();
    writeln!(spectrum_csv, "index,lambda,nu,l,residual,subproblem_index").unwrap();
    if let Some(m) = &merged {
        for (i, e) in m.entries.iter().enumerate() {
            let sub = m
                .subproblems
                .iter()
                .find(|s| s.nu == e.nu)
                .expect("labeled subproblem");
            writeln!(
                spectrum_csv,
                "{},{:.12e},{},{},{:.3e},{}",
                i + 1,
                e.lambda,
                e.nu,
                e.l,
                sub.residuals[e.local_index],
                e.nu
            )
            .unwrap();
        }
    } else if let Some(d) = &direct {
        for (i, &lambda) in d.eigenvalues.iter().enumerate() {
            writeln!(
                spectrum_csv,
                "{},{:.12e},0,0,{:.3e},0",
                i + 1,
                lambda,
                d.residuals[i]
            )
            .unwrap();
        }
    }
    std::fs::write(&spectrum_path, &spectrum_csv)?;

    if config.mode == RunMode::Both {
        // The labeled spectrum stays primary; the direct route goes to its
        // own file for comparison.
        if let Some(d) = &direct {
            let mut csv = String::new();
            writeln!(csv, "index,lambda,nu,l,residual,subproblem_index").unwrap();
            for (i, &lambda) in d.eigenvalues.iter().enumerate() {
                writeln!(
                    csv,
                    "{},{:.12e},0,0,{:.3e},0",
                    i + 1,
                    lambda,
                    d.residuals[i]
                )
                .unwrap();
            }
            std::fs::write(config.out_dir.join("direct_spectrum.csv"), csv)?;
        }
    }

    let mut stats_csv = String::new();
    writeln!(stats_csv, "problem,iterations,opx,time_mv,time_total").unwrap();
    if let Some(d) = &direct {
        writeln!(
            stats_csv,
            "direct,{},{},{:.6},{:.6}",
            d.stats.iterations, d.stats.opx_count, d.stats.time_mv, d.stats.time_total
        )
        .unwrap();
    }
    if let Some(m) = &merged {
        for sub in &m.subproblems {
            writeln!(
                stats_csv,
                "nu={},{},{},{:.6},{:.6}",
                sub.nu,
                sub.stats.iterations,
                sub.stats.opx_count,
                sub.stats.time_mv,
                sub.stats.time_total
            )
            .unwrap();
        }
    }
    std::fs::write(&stats_path, &stats_csv)?;

    Ok(SolveOutput {
        merged,
        direct,
        comparison,
        spectrum_path,
        stats_path,
    })
}

fn max_rel_discrepancy(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0f64, f64::max)
}

/// Validation report of the both-route comparison.
#[derive(Debug)]
pub struct ValidateReport {
    /// Max relative discrepancy between merged-decomposed and reference
    /// spectra over the first `N_e` eigenvalues.
    pub max_rel_discrepancy: f64,
    /// Max B-weighted inner product between normalized lifted eigenvectors
    /// of different (nu, l) labels.
    pub cross_orthogonality: f64,
    /// Per-irrep equivalence deviations (entrywise, spectrum), when the
    /// grid is small enough for the dense path.
    pub equivalence: Vec<(usize, f64, f64)>,
    /// Whether the reference route was a dense solve (vs Lanczos).
    pub dense_reference: bool,
    pub pass: bool,
}

/// Dense-path guard for `run_validate`.
const VALIDATE_DENSE_GUARD: usize = 4000;

/// Compares the decomposed solve against a reference (dense when the grid
/// allows it, otherwise a direct Lanczos solve), checks cross-subproblem
/// eigenvector orthogonality, and verifies the symmetry-adapted-basis
/// equivalence relations.
pub fn run_validate(config: &RunConfig) -> Result<ValidateReport> {
    config.validate()?;
    let grid = config.build_grid()?;
    let n = grid.node_count();
    let problem = config.problem.build();
    let group = config
        .build_group()?
        .ok_or_else(|| Error::Config("validate requires a group".into()))?;
    let orbits = orbit_decomposition(&grid, &group)?;

    let mut opts = DecomposedOptions::new(config.n_e, config.tol);
    opts.n_a = config.n_a;
    opts.sigma = config.sigma;
    let merged = config.with_pool(|| {
        eigensolve::solve_decomposed(&problem, &grid, &group, config.scheme, &opts)
    })?;

    let (a_full, b_full) = assemble_full(&problem, &grid, config.scheme);
    let dense_reference = n <= VALIDATE_DENSE_GUARD;
    let reference: Vec<f64> = if dense_reference {
        let (vals, _) = dense::dense_spectrum(&a_full, &b_full)?;
        vals.into_iter().take(config.n_e).collect()
    } else if config.mode == RunMode::Both {
        let bref = if b_full.is_identity() {
            None
        } else {
            Some(&b_full)
        };
        let mut sopts = SolveOptions::new(config.n_e, config.tol, config.direct_mode());
        sopts.row_parallel = config.threads > 1;
        let direct = config.with_pool(|| eigensolve::solve_symmetric(&a_full, bref, &sopts))?;
        direct.eigenvalues
    } else {
        return Err(Error::SizeGuard {
            n,
            limit: VALIDATE_DENSE_GUARD,
        });
    };

    let max_rel_discrepancy = max_rel_discrepancy(
        merged.entries.iter().map(|e| e.lambda),
        reference.iter().copied(),
    );

    // Cross-subproblem orthogonality of lifted eigenvectors.
    let mut lifted: Vec<Vec<f64>> = Vec::new();
    for e in &merged.entries {
        let sub = merged
            .subproblems
            .iter()
            .find(|s| s.nu == e.nu)
            .expect("labeled subproblem");
        let irrep = group.irrep(e.nu)?;
        let gf = lift_eigenvector(&orbits, irrep, &sub.eigenvectors[e.local_index], e.l)?;
        lifted.push(gf.values);
    }
    let mut cross_orthogonality: f64 = 0.0;
    let mut b_lifted: Vec<Vec<f64>> = Vec::new();
    for v in &lifted {
        let mut bv = vec![0.0; v.len()];
        b_full.matvec(v, &mut bv);
        b_lifted.push(bv);
    }
    let labels: Vec<(usize, usize)> = merged.entries.iter().map(|e| (e.nu, e.l)).collect();
    for i in 0..lifted.len() {
        for j in (i + 1)..lifted.len() {
            if labels[i] == labels[j] {
                continue;
            }
            let num: f64 = lifted[i].iter().zip(&b_lifted[j]).map(|(a, b)| a * b).sum();
            let ni: f64 = lifted[i].iter().zip(&b_lifted[i]).map(|(a, b)| a * b).sum();
            let nj: f64 = lifted[j].iter().zip(&b_lifted[j]).map(|(a, b)| a * b).sum();
            cross_orthogonality = cross_orthogonality.max(num.abs() / (ni * nj).sqrt());
        }
    }

    // Equivalence relations, dense path.
    let mut equivalence = Vec::new();
    if n <= VALIDATE_DENSE_GUARD {
        for nu in 1..=group.n_irreps() {
            let reduced = assemble_reduced(&problem, &grid, &orbits, &group, nu, config.scheme)?;
            let sab = construct_sab(&orbits, &group, nu, 1)?;
            let report =
                verify_equivalence(&reduced, &sab, &problem, &grid, &group, config.scheme)?;
            equivalence.push((nu, report.entry_dev, report.spectrum_dev));
        }
    }

    let equiv_ok = equivalence
        .iter()
        .all(|&(_, e, s)| e <= 1e-10 && s <= 1e-10);
    let pass = max_rel_discrepancy <= 1e-8 && cross_orthogonality <= 1e-8 && equiv_ok;
    Ok(ValidateReport {
        max_rel_discrepancy,
        cross_orthogonality,
        equivalence,
        dense_reference,
        pass,
    })
}

/// One grid level of a convergence study.
#[derive(Debug, Clone)]
pub struct RateLevel {
    pub partitions: usize,
    pub h: f64,
    /// `(eigenvalue index, computed, reference, |error|)` rows.
    pub rows: Vec<(usize, f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RateTable {
    pub levels: Vec<RateLevel>,
    /// Least-squares log-log slope per tracked eigenvalue index.
    pub slopes: Vec<(usize, f64)>,
    /// True when exact eigenvalues backed the errors; false for the
    /// Richardson fallback.
    pub exact_reference: bool,
}

/// Convergence study over uniform refinements: solves on each level and
/// fits `log(error)` against `log(h)` for the tracked eigenvalue indices
/// (1-based). Falls back to a Richardson reference from the two finest
/// levels when no exact spectrum is available (or when forced).
pub fn run_convergence(
    config: &RunConfig,
    level_partitions: &[usize],
    tracked: &[usize],
) -> Result<RateTable> {
    run_convergence_with_reference(config, level_partitions, tracked, true)
}

/// `run_convergence` with an explicit reference choice; `prefer_exact =
/// false` forces the Richardson extrapolation route.
pub fn run_convergence_with_reference(
    config: &RunConfig,
    level_partitions: &[usize],
    tracked: &[usize],
    prefer_exact: bool,
) -> Result<RateTable> {
    if level_partitions.len() < 3 {
        return Err(Error::Config(
            "convergence study needs at least 3 grid levels".into(),
        ));
    }
    let max_tracked = tracked.iter().copied().max().unwrap_or(1);
    let n_e = config.n_e.max(max_tracked + 2);
    let mut per_level: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for &p in level_partitions {
        let mut cfg = config.clone();
        cfg.partitions = vec![p; config.dim];
        cfg.n_e = n_e;
        let grid = cfg.build_grid()?;
        let problem = cfg.problem.build();
        let vals: Vec<f64> = match cfg.build_group()? {
            Some(group) => {
                let mut opts = DecomposedOptions::new(n_e, cfg.tol);
                opts.n_a = cfg.n_a;
                opts.sigma = cfg.sigma;
                let merged = cfg.with_pool(|| {
                    eigensolve::solve_decomposed(&problem, &grid, &group, cfg.scheme, &opts)
                })?;
                merged.entries.iter().map(|e| e.lambda).collect()
            }
            None => {
                let (a, b) = assemble_full(&problem, &grid, cfg.scheme);
                let bref = if b.is_identity() { None } else { Some(&b) };
                let mut sopts = SolveOptions::new(n_e, cfg.tol, cfg.direct_mode());
                sopts.row_parallel = cfg.threads > 1;
                cfg.with_pool(|| eigensolve::solve_symmetric(&a, bref, &sopts))?
                    .eigenvalues
            }
        };
        let h = 2.0 * config.half_width / p as f64;
        per_level.push((p, h, vals));
    }

    // Reference values: exact when available, else Richardson from the two
    // finest levels (h^2 assumed), fitted on the coarser levels only.
    let exact = if prefer_exact {
        config
            .problem
            .exact_eigenvalues(config.dim, config.half_width, n_e)
    } else {
        Vec::new()
    };
    let exact_reference = !exact.is_empty();
    let reference: Vec<f64> = if exact_reference {
        exact
    } else {
        let (_, h1, v1) = &per_level[per_level.len() - 2];
        let (_, h2, v2) = &per_level[per_level.len() - 1];
        let r2 = (h1 / h2) * (h1 / h2);
        v1.iter()
            .zip(v2)
            .map(|(a, b)| (r2 * b - a) / (r2 - 1.0))
            .collect()
    };

    let mut levels = Vec::new();
    for (p, h, vals) in &per_level {
        let mut rows = Vec::new();
        for &idx in tracked {
            let computed = vals[idx - 1];
            let refv = reference[idx - 1];
            rows.push((idx, computed, refv, (computed - refv).abs()));
        }
        levels.push(RateLevel {
            partitions: *p,
            h: *h,
            rows,
        });
    }

    let fit_levels: &[RateLevel] = if exact_reference {
        &levels
    } else {
        // The finest level defined the reference; exclude it from the fit.
        &levels[..levels.len() - 1]
    };
    let mut slopes = Vec::new();
    for (t, &idx) in tracked.iter().enumerate() {
        let points: Vec<(f64, f64)> = fit_levels
            .iter()
            .filter(|lv| lv.rows[t].3 > 0.0)
            .map(|lv| (lv.h.ln(), lv.rows[t].3.ln()))
            .collect();
        slopes.push((idx, least_squares_slope(&points)));
    }
    Ok(RateTable {
        levels,
        slopes,
        exact_reference,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("partitions,h,eig_index,computed,reference,abs_error\n");
        for lv in &self.levels {
            for &(idx, computed, refv, err) in &lv.rows {
                writeln!(
                    out,
                    "{},{:.12e},{},{:.12e},{:.12e},{:.6e}",
                    lv.partitions, lv.h, idx, computed, refv, err
                )
                .unwrap();
            }
        }
        out.push_str("# slopes\n");
        for &(idx, slope) in &self.slopes {
            writeln!(out, "slope,{},{:.4}", idx, slope).unwrap();
        }
        out
    }
}

/// One line per built-in group with its verification status.
pub fn run_groups() -> Vec<String> {
    crate::group::BUILTIN_GROUP_NAMES
        .iter()
        .map(|name| {
            let group = builtin_group(name).expect("builtin");
            let report = verify_group_axioms(&group);
            let orth = verify_great_orthogonality(&group);
            let status = if report.all_pass() && orth <= 1e-12 {
                "verified"
            } else {
                "FAILED"
            };
            format!(
                "{:<10} g={:<2} n_c={} n_sub={} dims={:?} orth_dev={:.1e} {}",
                group.name,
                group.order(),
                group.n_irreps(),
                group.n_sub(),
                group.irreps().iter().map(|ir| ir.dim).collect::<Vec<_>>(),
                orth,
                status
            )
        })
        .collect()
}

/// Writes full and reduced matrices in Matrix Market format, plus an
/// optional node list; returns the written paths.
pub fn export_matrices(config: &RunConfig, with_nodes: bool) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let grid = config.build_grid()?;
    let problem = config.problem.build();
    std::fs::create_dir_all(&config.out_dir)?;
    let mut written = Vec::new();
    let (a, b) = assemble_full(&problem, &grid, config.scheme);
    for (name, m) in [("full_a.mtx", &a), ("full_b.mtx", &b)] {
        let path = config.out_dir.join(name);
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        m.write_matrix_market(&mut f)?;
        written.push(path);
    }
    if let Some(group) = config.build_group()? {
        let orbits = orbit_decomposition(&grid, &group)?;
        for nu in 1..=group.n_irreps() {
            let reduced = assemble_reduced(&problem, &grid, &orbits, &group, nu, config.scheme)?;
            for (tag, m) in [("a", &reduced.a), ("b", &reduced.b)] {
                let path = config.out_dir.join(format!("reduced_nu{nu}_{tag}.mtx"));
                let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
                m.write_matrix_market(&mut f)?;
                written.push(path);
            }
        }
    }
    if with_nodes {
        let path = config.out_dir.join("nodes.txt");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        grid.write_nodes(&mut f)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------
// Communication bookkeeping (two-level concurrency contract)
// ---------------------------------------------------------------------

/// Simulated communication volume of a row-partitioned matrix-vector
/// product: worker `q` sends to worker `p` the values of its rows that
/// appear as column indices in `p`'s rows.
#[derive(Debug, Clone)]
pub struct CommReport {
    pub workers: usize,
    /// Average number of distinct partners each worker exchanges with.
    pub avg_peers: f64,
    /// Average bytes sent per worker (8 bytes per shared value).
    pub avg_bytes_sent: f64,
    /// Total bytes exchanged between workers of *different* groups; zero
    /// by construction in the decomposed mode.
    pub cross_group_bytes: usize,
    /// Per worker-group (subproblem) bytes exchanged internally.
    pub per_group_bytes: Vec<usize>,
}

/// Halo exchange volume of one matrix under a contiguous row partition.
/// Returns per-worker sent bytes and the peer sets.
fn halo_volume(
    m: &crate::sparse::SparseSym,
    workers: usize,
) -> (Vec<usize>, Vec<std::collections::BTreeSet<usize>>) {
    let n = m.order();
    let workers = workers.max(1).min(n.max(1));
    let owner = |row: usize| (row * workers / n.max(1)).min(workers - 1);
    let mut sent = vec![0usize; workers];
    let mut peers: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); workers];
    // needed[p] collects the off-block columns p reads, deduplicated.
    let mut needed: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); workers];
    for i in 0..n {
        let p = owner(i);
        let (cols, _) = m.row(i);
        for &j in cols {
            let q = owner(j);
            if q != p {
                needed[p].insert(j);
            }
        }
    }
    for (p, cols) in needed.iter().enumerate() {
        for &j in cols {
            let q = owner(j);
            sent[q] += 8;
            peers[p].insert(q);
            peers[q].insert(p);
        }
    }
    (sent, peers)
}

/// Communication bookkeeping per the two-level contract: subproblems are
/// dispatched to worker groups sized in proportion to `d_nu * N0`, rows
/// are partitioned within each group, and cross-group traffic is counted
/// (it must be zero: the reduced systems are decoupled).
pub fn communication_accounting(
    systems: &[ReducedSystem],
    total_workers: usize,
) -> Result<CommReport> {
    if systems.is_empty() {
        return Err(Error::Config("no subproblems to account".into()));
    }
    if total_workers < systems.len() {
        return Err(Error::Config(format!(
            "thread budget {total_workers} is below the subproblem count {}",
            systems.len()
        )));
    }
    // Largest-remainder apportionment proportional to system order.
    let total_order: usize = systems.iter().map(|s| s.order()).sum();
    let mut sizes: Vec<usize> = systems
        .iter()
        .map(|s| 1usize.max(s.order() * total_workers / total_order.max(1)))
        .collect();
    while sizes.iter().sum::<usize>() > total_workers {
        let i = sizes
            .iter()
            .enumerate()
            .max_by_key(|(_, &s)| s)
            .map(|(i, _)| i)
            .unwrap();
        sizes[i] = sizes[i].saturating_sub(1).max(1);
        if sizes.iter().all(|&s| s == 1) {
            break;
        }
    }
    while sizes.iter().sum::<usize>() < total_workers {
        let i = (0..systems.len())
            .max_by(|&a, &b| {
                let ra = systems[a].order() as f64 / sizes[a] as f64;
                let rb = systems[b].order() as f64 / sizes[b] as f64;
                ra.total_cmp(&rb)
            })
            .unwrap();
        sizes[i] += 1;
    }

    let mut per_group_bytes = Vec::new();
    let mut all_sent: Vec<usize> = Vec::new();
    let mut all_peers: Vec<usize> = Vec::new();
    for (sys, &w) in systems.iter().zip(&sizes) {
        let (sent, peers) = halo_volume(&sys.a, w);
        per_group_bytes.push(sent.iter().sum());
        all_sent.extend(sent);
        all_peers.extend(peers.iter().map(|p| p.len()));
    }

    // Cross-group coupling count over the block-diagonal union: entries of
    // any reduced matrix never index outside their own block.
    let mut cross_group_bytes = 0usize;
    for sys in systems {
        let order = sys.order();
        for i in 0..order {
            let (cols, _) = sys.a.row(i);
            for &j in cols {
                if j >= order {
                    cross_group_bytes += 8;
                }
            }
        }
    }

    let workers: usize = sizes.iter().sum();
    let avg_peers = all_peers.iter().sum::<usize>() as f64 / workers as f64;
    let avg_bytes_sent = all_sent.iter().sum::<usize>() as f64 / workers as f64;
    Ok(CommReport {
        workers,
        avg_peers,
        avg_bytes_sent,
        cross_group_bytes,
        per_group_bytes,
    })
}

/// Direct-solve counterpart: one worker group over the full matrix.
pub fn communication_accounting_direct(a: &crate::sparse::SparseSym, workers: usize) -> CommReport {
    let (sent, peers) = halo_volume(a, workers);
    let w = sent.len();
    CommReport {
        workers: w,
        avg_peers: peers.iter().map(|p| p.len()).sum::<usize>() as f64 / w as f64,
        avg_bytes_sent: sent.iter().sum::<usize>() as f64 / w as f64,
        cross_group_bytes: 0,
        per_group_bytes: vec![sent.iter().sum()],
    }
}

/// Measured decomposed-vs-direct single-iteration time ratio, following
/// the accumulation rule: sum over subproblems of `time_total/iterations`
/// against the direct solve's `time_total/iterations`.
pub fn measured_iteration_speedup(direct: &SolveStats, subs: &[SolveStats]) -> f64 {
    let direct_iter = direct.time_total / direct.iterations.max(1) as f64;
    let sub_iter = crate::perfmodel::accumulated_iteration_time(subs);
    direct_iter / sub_iter
}
