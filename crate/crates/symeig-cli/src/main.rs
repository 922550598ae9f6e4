//! Batch front-end for the symmetry-decomposition eigensolver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 validation failure,
//! 3 solver non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use symeig::assembly::{assemble_full, assemble_reduced, Discretization};
use symeig::driver::{
    communication_accounting, communication_accounting_direct, run_convergence_with_reference,
    run_groups, run_solve, run_validate, ProblemChoice, RunConfig, RunMode,
};
use symeig::error::Error;
use symeig::grid::orbit_decomposition;
use symeig::perfmodel;

#[derive(Parser)]
#[command(
    name = "symeig",
    about = "Symmetry-based decomposition of grid eigenvalue problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a configured problem and write spectrum/stats CSVs.
    Solve(ConfigArgs),
    /// Cross-check the decomposed solve against a reference route.
    Validate(ConfigArgs),
    /// Eigenvalue convergence study over a sequence of grid levels.
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated partition counts, e.g. 9,13,17,21.
        #[arg(long, value_delimiter = ',', default_values_t = vec![9usize, 13, 17, 21])]
        levels: Vec<usize>,
        /// 1-based eigenvalue indices to track.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 5])]
        track: Vec<usize>,
        /// Use a Richardson reference even when exact eigenvalues exist.
        #[arg(long)]
        richardson: bool,
    },
    /// Evaluate the CPU-time speedup prediction.
    Predict {
        /// Group order g.
        #[arg(long)]
        g: usize,
        /// Number of subproblems n_sub.
        #[arg(long)]
        nsub: usize,
        /// Krylov-dimension reduction factor (> 1).
        #[arg(long)]
        theta1: f64,
        /// Matrix-vector CPU-time fraction in (0, 1).
        #[arg(long)]
        omega: f64,
    },
    /// List the built-in point groups with verification status.
    Groups,
    /// Export assembled matrices in Matrix Market format.
    ExportMatrix {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write the grid node list.
        #[arg(long)]
        nodes: bool,
    },
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (flat `key = value` lines, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
    /// Comma-separated partitions per axis (odd), e.g. 21,21,21.
    #[arg(long, value_delimiter = ',')]
    partitions: Option<Vec<usize>>,
    /// fd2 or q1fe.
    #[arg(long)]
    scheme: Option<String>,
    /// Built-in group name, or NONE.
    #[arg(long)]
    group: Option<String>,
    /// Plain-text group definition file (overrides --group).
    #[arg(long)]
    group_file: Option<PathBuf>,
    #[arg(long)]
    ne: Option<usize>,
    #[arg(long)]
    na: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// decomposed, direct, or both.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Print the simulated communication bookkeeping after a solve.
    #[arg(long)]
    comm_report: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem = match p.to_ascii_lowercase().as_str() {
                "oscillator" => ProblemChoice::Oscillator,
                "laplacian" => ProblemChoice::Laplacian,
                other => return Err(Error::Config(format!("unknown problem `{other}`"))),
            };
        }
        if let Some(d) = self.dim {
            cfg.dim = d;
            if cfg.partitions.len() != d {
                let p = cfg.partitions.first().copied().unwrap_or(9);
                cfg.partitions = vec![p; d];
            }
        }
        if let Some(h) = self.half_width {
            cfg.half_width = h;
        }
        if let Some(p) = &self.partitions {
            cfg.partitions = if p.len() == 1 {
                vec![p[0]; cfg.dim]
            } else {
                p.clone()
            };
        }
        if let Some(s) = &self.scheme {
            cfg.scheme = match s.to_ascii_lowercase().as_str() {
                "fd2" => Discretization::Fd2,
                "q1fe" => Discretization::Q1Fe,
                other => return Err(Error::Config(format!("unknown scheme `{other}`"))),
            };
        }
        if let Some(g) = &self.group {
            cfg.group = match g.to_ascii_uppercase().as_str() {
                "NONE" => None,
                name => Some(name.to_string()),
            };
            if cfg.group.is_none() && cfg.group_file.is_none() && cfg.mode == RunMode::Decomposed {
                cfg.mode = RunMode::Direct;
            }
        }
        if let Some(f) = &self.group_file {
            cfg.group_file = Some(f.clone());
        }
        if let Some(n) = self.ne {
            cfg.n_e = n;
        }
        if let Some(n) = self.na {
            cfg.n_a = Some(n);
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(m) = &self.mode {
            cfg.mode = match m.to_ascii_lowercase().as_str() {
                "decomposed" => RunMode::Decomposed,
                "direct" => RunMode::Direct,
                "both" => RunMode::Both,
                other => return Err(Error::Config(format!("unknown mode `{other}`"))),
            };
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(o) = &self.out_dir {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::MaxIterations { .. } => 3,
        _ => 1,
    }
}

fn cmd_solve(args: &ConfigArgs) -> Result<u8, Error> {
    let cfg = args.resolve()?;
    let out = run_solve(&cfg)?;
    if let Some(m) = &out.merged {
        println!("decomposed solve: {} eigenvalues", m.entries.len());
        println!("{:>4} {:>18} {:>4} {:>3}", "idx", "lambda", "nu", "l");
        for (i, e) in m.entries.iter().enumerate() {
            println!("{:>4} {:>18.12} {:>4} {:>3}", i + 1, e.lambda, e.nu, e.l);
        }
        if !m.complete {
            println!("warning: spectrum flagged incomplete (restart budget exhausted)");
        }
    }
    if let Some(d) = &out.direct {
        println!(
            "direct solve: {} eigenvalues, {} iterations, {} op*x",
            d.eigenvalues.len(),
            d.stats.iterations,
            d.stats.opx_count
        );
    }
    if let Some(c) = out.comparison {
        println!("max relative discrepancy decomposed vs direct: {c:.3e}");
    }
    println!("wrote {}", out.spectrum_path.display());
    println!("wrote {}", out.stats_path.display());

    if args.comm_report {
        print_comm_report(&cfg)?;
    }
    let incomplete = out.merged.as_ref().is_some_and(|m| !m.complete);
    Ok(if incomplete { 3 } else { 0 })
}

fn print_comm_report(cfg: &RunConfig) -> Result<(), Error> {
    let grid = cfg.build_grid()?;
    let problem = cfg.problem.build();
    let workers = if cfg.threads == 0 { 8 } else { cfg.threads };
    println!("communication bookkeeping ({} workers):", workers);
    if let Some(group) = cfg.build_group()? {
        let orbits = orbit_decomposition(&grid, &group)?;
        let systems: Vec<_> = (1..=group.n_irreps())
            .map(|nu| assemble_reduced(&problem, &grid, &orbits, &group, nu, cfg.scheme))
            .collect::<Result<_, _>>()?;
        let rep = communication_accounting(&systems, workers)?;
        println!(
            "  decomposed: peers/worker {:.2}, bytes sent/worker {:.0}, cross-group bytes {}",
            rep.avg_peers, rep.avg_bytes_sent, rep.cross_group_bytes
        );
    }
    let (a, _) = assemble_full(&problem, &grid, cfg.scheme);
    let rep = communication_accounting_direct(&a, workers);
    println!(
        "  direct:     peers/worker {:.2}, bytes sent/worker {:.0}",
        rep.avg_peers, rep.avg_bytes_sent
    );
    Ok(())
}

fn cmd_validate(args: &ConfigArgs) -> Result<u8, Error> {
    let cfg = args.resolve()?;
    let report = run_validate(&cfg)?;
    println!(
        "reference route: {}",
        if report.dense_reference {
            "dense"
        } else {
            "direct Lanczos"
        }
    );
    println!(
        "max relative eigenvalue discrepancy: {:.3e}",
        report.max_rel_discrepancy
    );
    println!(
        "max cross-subproblem eigenvector inner product: {:.3e}",
        report.cross_orthogonality
    );
    for (nu, entry_dev, spec_dev) in &report.equivalence {
        println!("equivalence nu={nu}: entrywise {entry_dev:.3e}, spectrum {spec_dev:.3e}");
    }
    println!("validation: {}", if report.pass { "PASS" } else { "FAIL" });
    Ok(if report.pass { 0 } else { 2 })
}

fn cmd_convergence(
    args: &ConfigArgs,
    levels: &[usize],
    track: &[usize],
    richardson: bool,
) -> Result<u8, Error> {
    let cfg = args.resolve()?;
    let table = run_convergence_with_reference(&cfg, levels, track, !richardson)?;
    println!(
        "reference: {}",
        if table.exact_reference {
            "exact eigenvalues"
        } else {
            "Richardson extrapolation"
        }
    );
    println!(
        "{:>6} {:>12} {:>6} {:>14}",
        "parts", "h", "index", "abs error"
    );
    for lv in &table.levels {
        for &(idx, _, _, err) in &lv.rows {
            println!(
                "{:>6} {:>12.6} {:>6} {:>14.6e}",
                lv.partitions, lv.h, idx, err
            );
        }
    }
    for &(idx, slope) in &table.slopes {
        println!("slope e{idx}: {slope:.3}");
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("rates.csv");
    std::fs::write(&path, table.to_csv())?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_predict(g: usize, nsub: usize, theta1: f64, omega: f64) -> Result<u8, Error> {
    let s = perfmodel::predict_speedup(g, nsub, theta1, omega)?;
    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>10}",
        "g", "n_sub", "theta1", "omega", "speedup"
    );
    println!("{g:>10} {nsub:>10} {theta1:>10.3} {omega:>10.3} {s:>10.2}");
    Ok(0)
}

fn cmd_groups() -> u8 {
    for line in run_groups() {
        println!("{line}");
    }
    0
}

fn cmd_export(args: &ConfigArgs, nodes: bool) -> Result<u8, Error> {
    let cfg = args.resolve()?;
    for path in symeig::driver::export_matrices(&cfg, nodes)? {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Convergence {
            config,
            levels,
            track,
            richardson,
        } => cmd_convergence(config, levels, track, *richardson),
        Command::Predict {
            g,
            nsub,
            theta1,
            omega,
        } => cmd_predict(*g, *nsub, *theta1, *omega),
        Command::Groups => Ok(cmd_groups()),
        Command::ExportMatrix { config, nodes } => cmd_export(config, *nodes),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
