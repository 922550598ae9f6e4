//! End-to-end checks of the decomposed solver against analytic spectra and
//! the remaining edge-case contracts.

use symeig::assembly::{assemble_full, Discretization, Problem};
use symeig::driver::{run_validate, ProblemChoice, RunConfig, RunMode};
use symeig::eigensolve::{
    solve_decomposed, solve_symmetric, DecomposedOptions, SolveMode, SolveOptions,
};
use symeig::error::Error;
use symeig::grid::build_grid;
use symeig::group::builtin_group;

/// Discrete eigenvalues of the 2D FD Laplacian are known in closed form;
/// the solver must hit them to solver accuracy, and they approach
/// pi^2/4 * (2, 5, 5, 8) as h -> 0.
#[test]
fn laplacian_2d_matches_discrete_exact_eigenvalues() {
    let n = 41usize;
    let grid = build_grid(2, 1.0, &[n, n]).unwrap();
    let (a, _) = assemble_full(&Problem::laplacian(), &grid, Discretization::Fd2);
    let opts = SolveOptions::new(4, 1e-10, SolveMode::Standard);
    let spec = solve_symmetric(&a, None, &opts).unwrap();

    let h = 2.0 / n as f64;
    let mode = |k: usize| {
        4.0 / (h * h)
            * (k as f64 * std::f64::consts::PI / (2.0 * n as f64))
                .sin()
                .powi(2)
    };
    let mut exact: Vec<f64> = Vec::new();
    for i in 1..n {
        for j in 1..n {
            exact.push(mode(i) + mode(j));
        }
    }
    exact.sort_by(f64::total_cmp);
    for (v, e) in spec.eigenvalues.iter().zip(&exact) {
        assert!((v - e).abs() <= 1e-8 * e, "{v} vs discrete-exact {e}");
    }
    // Continuum limit pattern 2, 5, 5, 8 in units of pi^2/4.
    let base = std::f64::consts::PI * std::f64::consts::PI / 4.0;
    let pattern = [2.0, 5.0, 5.0, 8.0];
    for (v, p) in spec.eigenvalues.iter().zip(&pattern) {
        assert!((v / base - p).abs() < 0.05, "{} vs {p}", v / base);
    }
}

/// Direct 21^3 FD2 oscillator solve reproduces the analytic clusters
/// (1.5, 2.5 x3, 3.5 x6) up to the h^2 discretization shift.
#[test]
fn oscillator_direct_solve_clusters() {
    let grid = build_grid(3, 5.0, &[21, 21, 21]).unwrap();
    let (a, _) = assemble_full(&Problem::harmonic_oscillator(), &grid, Discretization::Fd2);
    let opts = SolveOptions::new(10, 1e-8, SolveMode::Standard);
    let spec = solve_symmetric(&a, None, &opts).unwrap();
    let exact = [1.5, 2.5, 2.5, 2.5, 3.5, 3.5, 3.5, 3.5, 3.5, 3.5];
    for (v, e) in spec.eigenvalues.iter().zip(&exact) {
        assert!((v - e).abs() < 0.15, "{v} vs {e}");
    }
    for r in &spec.residuals {
        assert!(*r <= 1e-8);
    }
}

/// A single requested eigenvalue returns the symmetric ground state.
#[test]
fn ground_state_alone_is_trivial_irrep() {
    let grid = build_grid(3, 5.0, &[9, 9, 9]).unwrap();
    let group = builtin_group("D2D").unwrap();
    let opts = DecomposedOptions::new(1, 1e-9);
    let merged = solve_decomposed(
        &Problem::harmonic_oscillator(),
        &grid,
        &group,
        Discretization::Fd2,
        &opts,
    )
    .unwrap();
    assert_eq!(merged.entries.len(), 1);
    assert_eq!((merged.entries[0].nu, merged.entries[0].l), (1, 1));
}

/// Exhausting the redundancy budget flags the spectrum incomplete instead
/// of failing; the default budget resolves the same case.
#[test]
fn redundancy_restart_policy() {
    let grid = build_grid(2, 1.0, &[5, 5]).unwrap();
    let group = builtin_group("EXAMPLE2D").unwrap();
    let problem = Problem::laplacian();

    let mut starved = DecomposedOptions::new(10, 1e-10);
    starved.n_a = Some(0);
    starved.max_redundancy_rounds = 0;
    let merged = solve_decomposed(&problem, &grid, &group, Discretization::Fd2, &starved).unwrap();
    assert!(!merged.complete, "expected the starved run to be flagged");

    let mut with_budget = DecomposedOptions::new(10, 1e-10);
    with_budget.n_a = Some(0);
    let merged =
        solve_decomposed(&problem, &grid, &group, Discretization::Fd2, &with_budget).unwrap();
    assert!(merged.complete);
    // And the result matches the dense spectrum.
    let (a, b) = assemble_full(&problem, &grid, Discretization::Fd2);
    let (dense_vals, _) = symeig::dense::dense_spectrum(&a, &b).unwrap();
    for (e, d) in merged.entries.iter().zip(&dense_vals) {
        assert!((e.lambda - d).abs() <= 1e-8 * d.abs().max(1.0));
    }
}

/// The restart budget error carries the partial convergence count.
#[test]
fn restart_budget_exhaustion_reports_partial_progress() {
    let grid = build_grid(3, 5.0, &[9, 9, 9]).unwrap();
    let (a, _) = assemble_full(&Problem::harmonic_oscillator(), &grid, Discretization::Fd2);
    let mut opts = SolveOptions::new(8, 1e-12, SolveMode::Standard);
    opts.max_restarts = 1;
    match solve_symmetric(&a, None, &opts) {
        Err(Error::MaxIterations {
            converged,
            requested,
            ..
        }) => {
            assert!(converged < requested);
        }
        other => panic!("expected MaxIterations, got {other:?}"),
    }
}

/// Validation workflow passes on the oscillator for all three 9^3 groups
/// and on the dense 2D case.
#[test]
fn validate_passes_on_reference_cases() {
    for (problem, dim, parts, group, half_width) in [
        (ProblemChoice::Oscillator, 3, 9usize, "D2H", 5.0),
        (ProblemChoice::Oscillator, 3, 9, "D4", 5.0),
        (ProblemChoice::Oscillator, 3, 9, "D2D", 5.0),
        (ProblemChoice::Laplacian, 2, 5, "EXAMPLE2D", 1.0),
    ] {
        let cfg = RunConfig {
            problem,
            dim,
            half_width,
            partitions: vec![parts; dim],
            scheme: Discretization::Fd2,
            group: Some(group.into()),
            n_e: 10.min(if dim == 2 { 8 } else { 10 }),
            mode: RunMode::Decomposed,
            ..RunConfig::default()
        };
        let report = run_validate(&cfg).unwrap();
        assert!(
            report.pass,
            "{group}: discrepancy {:.2e}, orthogonality {:.2e}",
            report.max_rel_discrepancy, report.cross_orthogonality
        );
        assert!(report.max_rel_discrepancy <= 1e-8);
        assert!(report.cross_orthogonality <= 1e-8);
    }
}

/// Q1FE decomposed solve agrees with the dense generalized spectrum on a
/// non-Abelian group (exercises the shift-invert path end to end).
#[test]
fn q1fe_decomposed_matches_dense() {
    let grid = build_grid(3, 3.0, &[5, 5, 5]).unwrap();
    let group = builtin_group("D2D").unwrap();
    let problem = Problem::harmonic_oscillator();
    let opts = DecomposedOptions::new(8, 1e-9);
    let merged = solve_decomposed(&problem, &grid, &group, Discretization::Q1Fe, &opts).unwrap();
    let (a, b) = assemble_full(&problem, &grid, Discretization::Q1Fe);
    let (dense_vals, _) = symeig::dense::dense_spectrum(&a, &b).unwrap();
    for (e, d) in merged.entries.iter().zip(&dense_vals) {
        assert!(
            (e.lambda - d).abs() <= 1e-8 * d.abs().max(1.0),
            "{} vs {d}",
            e.lambda
        );
    }
}

/// Matrix Market export has the symmetric coordinate header and row count.
#[test]
fn matrix_market_format() {
    let grid = build_grid(2, 1.0, &[3, 3]).unwrap();
    let (a, _) = assemble_full(&Problem::laplacian(), &grid, Discretization::Fd2);
    let mut buf = Vec::new();
    a.write_matrix_market(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "%%MatrixMarket matrix coordinate real symmetric"
    );
    let header: Vec<usize> = lines
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(header[0], 4);
    assert_eq!(header[1], 4);
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), header[2]);
    // Lower triangle only.
    for line in body {
        let mut it = line.split_whitespace();
        let i: usize = it.next().unwrap().parse().unwrap();
        let j: usize = it.next().unwrap().parse().unwrap();
        assert!(j <= i);
    }
}

/// The doubly degenerate Laplacian pair lands in two different
/// subproblems, one eigenvalue each, and the merged spectrum agrees with
/// the direct route over a longer window.
#[test]
fn degenerate_pair_splits_across_subproblems() {
    let grid = build_grid(2, 1.0, &[15, 15]).unwrap();
    let group = builtin_group("EXAMPLE2D").unwrap();
    let problem = Problem::laplacian();
    let opts = DecomposedOptions::new(4, 1e-10);
    let merged = solve_decomposed(&problem, &grid, &group, Discretization::Fd2, &opts).unwrap();
    // Entries 2 and 3 share the eigenvalue but carry different nu labels.
    assert!((merged.entries[1].lambda - merged.entries[2].lambda).abs() < 1e-10);
    let pair_nus: std::collections::BTreeSet<usize> =
        [merged.entries[1].nu, merged.entries[2].nu].into();
    assert_eq!(pair_nus.len(), 2, "pair not split: {:?}", merged.entries);
    assert!(
        !pair_nus.contains(&1),
        "trivial irrep must exclude the pair"
    );
}

/// Merged decomposed spectrum equals the dense full spectrum over the
/// first 20 entries on the 9^3 oscillator.
#[test]
fn merged_first_twenty_match_dense() {
    let grid = build_grid(3, 5.0, &[9, 9, 9]).unwrap();
    let group = builtin_group("D2H").unwrap();
    let problem = Problem::harmonic_oscillator();
    let opts = DecomposedOptions::new(20, 1e-9);
    let merged = solve_decomposed(&problem, &grid, &group, Discretization::Fd2, &opts).unwrap();
    let (a, b) = assemble_full(&problem, &grid, Discretization::Fd2);
    let (dense_vals, _) = symeig::dense::dense_spectrum(&a, &b).unwrap();
    assert_eq!(merged.entries.len(), 20);
    for (e, d) in merged.entries.iter().zip(&dense_vals) {
        assert!((e.lambda - d).abs() <= 1e-8 * d.abs().max(1.0));
    }
}

/// Forcing the Richardson reference still reports second-order slopes.
#[test]
fn richardson_reference_convergence() {
    use symeig::driver::run_convergence_with_reference;
    let cfg = RunConfig {
        problem: ProblemChoice::Oscillator,
        scheme: Discretization::Fd2,
        group: Some("D2H".into()),
        n_e: 6,
        tol: 1e-9,
        mode: RunMode::Decomposed,
        ..RunConfig::default()
    };
    let table = run_convergence_with_reference(&cfg, &[9, 13, 17, 21, 25], &[1, 2], false).unwrap();
    assert!(!table.exact_reference);
    for &(idx, slope) in &table.slopes {
        assert!(
            (slope - 2.0).abs() <= 0.35,
            "index {idx}: Richardson slope {slope:.3}"
        );
    }
}

/// Results are schedule-independent: different thread budgets produce
/// byte-identical spectrum files.
#[test]
fn thread_count_does_not_change_results() {
    use symeig::driver::run_solve;
    let base = RunConfig {
        partitions: vec![9, 9, 9],
        group: Some("D4".into()),
        n_e: 8,
        ..RunConfig::default()
    };
    let mut bytes = Vec::new();
    for threads in [1usize, 2, 4] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base.clone();
        cfg.threads = threads;
        cfg.out_dir = dir.path().to_path_buf();
        let out = run_solve(&cfg).unwrap();
        bytes.push(std::fs::read(out.spectrum_path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[1], bytes[2]);
}

/// Bilinear elements through the decomposed shift-invert path agree with
/// the dense generalized spectrum in two dimensions.
#[test]
fn q1fe_2d_decomposed_matches_dense() {
    let grid = build_grid(2, 1.0, &[9, 9]).unwrap();
    let group = builtin_group("EXAMPLE2D").unwrap();
    let problem = Problem::laplacian();
    let opts = DecomposedOptions::new(6, 1e-9);
    let merged = solve_decomposed(&problem, &grid, &group, Discretization::Q1Fe, &opts).unwrap();
    let (a, b) = assemble_full(&problem, &grid, Discretization::Q1Fe);
    let (dense_vals, _) = symeig::dense::dense_spectrum(&a, &b).unwrap();
    for (e, d) in merged.entries.iter().zip(&dense_vals) {
        assert!((e.lambda - d).abs() <= 1e-8 * d.abs().max(1.0));
    }
}

/// Both-mode runs fill the comparison field and write both spectra.
#[test]
fn both_mode_reports_discrepancy() {
    use symeig::driver::run_solve;
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        partitions: vec![9, 9, 9],
        group: Some("D2H".into()),
        n_e: 10,
        mode: RunMode::Both,
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let out = run_solve(&cfg).unwrap();
    let disc = out.comparison.expect("both mode compares routes");
    assert!(disc <= 1e-8, "discrepancy {disc:.3e}");
    assert!(dir.path().join("spectrum.csv").exists());
    assert!(dir.path().join("direct_spectrum.csv").exists());
    assert!(dir.path().join("stats.csv").exists());
    // Stats carry both the direct row and one row per subproblem.
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 1 + 1 + 8);
}

/// A user-supplied group definition drives the decomposed solve exactly
/// like a built-in.
#[test]
fn group_definition_file_round_trips_through_solve() {
    let text = "\
name = UserD2
dim = 3
elements = E C2x C2y C2z

[element E]
1 0 0
0 1 0
0 0 1
[element C2x]
1 0 0
0 -1 0
0 0 -1
[element C2y]
-1 0 0
0 1 0
0 0 -1
[element C2z]
-1 0 0
0 -1 0
0 0 1

[irrep 1]
dim = 1
E: 1
C2x: 1
C2y: 1
C2z: 1
[irrep 2]
dim = 1
E: 1
C2x: 1
C2y: -1
C2z: -1
[irrep 3]
dim = 1
E: 1
C2x: -1
C2y: 1
C2z: -1
[irrep 4]
dim = 1
E: 1
C2x: -1
C2y: -1
C2z: 1
";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("user_d2.grp");
    std::fs::write(&path, text).unwrap();
    let cfg = RunConfig {
        partitions: vec![9, 9, 9],
        group: None,
        group_file: Some(path),
        n_e: 8,
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let out = symeig::driver::run_solve(&cfg).unwrap();
    let merged = out.merged.unwrap();
    // Same numbers as the built-in D2 route.
    let mut builtin_cfg = cfg.clone();
    builtin_cfg.group_file = None;
    builtin_cfg.group = Some("D2".into());
    builtin_cfg.out_dir = tempfile::tempdir().unwrap().path().to_path_buf();
    let builtin = symeig::driver::run_solve(&builtin_cfg)
        .unwrap()
        .merged
        .unwrap();
    for (a, b) in merged.entries.iter().zip(&builtin.entries) {
        assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        assert_eq!((a.nu, a.l), (b.nu, b.l));
    }
}

/// Validation refuses dense-infeasible grids unless both Lanczos routes
/// are requested, and a shift above the spectrum is caught up front.
#[test]
fn guards_reject_oversized_and_misshifted_runs() {
    let cfg = RunConfig {
        partitions: vec![21, 21, 21],
        group: Some("D2H".into()),
        mode: RunMode::Decomposed,
        ..RunConfig::default()
    };
    match run_validate(&cfg) {
        Err(Error::SizeGuard { n, .. }) => assert_eq!(n, 8000),
        other => panic!("expected SizeGuard, got {other:?}"),
    }

    let grid = build_grid(3, 3.0, &[5, 5, 5]).unwrap();
    let (a, b) = assemble_full(&Problem::harmonic_oscillator(), &grid, Discretization::Q1Fe);
    let opts = SolveOptions::new(3, 1e-8, SolveMode::ShiftInvert { sigma: 1e6 });
    assert!(matches!(
        solve_symmetric(&a, Some(&b), &opts),
        Err(Error::IndefiniteMass)
    ));
}
