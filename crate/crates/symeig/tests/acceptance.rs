//! Acceptance suite: one test per shipped claim, each printing a PASS line
//! with its headline numbers. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines on success).

use std::collections::BTreeMap;
use std::time::Instant;

use symeig::assembly::{
    assemble_full, assemble_reduced, reduced_from_full, Discretization, Problem,
};
use symeig::dense;
use symeig::driver::{
    communication_accounting, measured_iteration_speedup, run_convergence, run_solve,
    ProblemChoice, RunConfig, RunMode,
};
use symeig::eigensolve::{solve_decomposed, DecomposedOptions};
use symeig::grid::{build_grid, orbit_decomposition, GridFunction, SymmetricGrid};
use symeig::group::{
    apply_projector, builtin_group, projector_coefficients, verify_great_orthogonality,
    verify_group_axioms, PointGroup, BUILTIN_GROUP_NAMES,
};
use symeig::perfmodel;
use symeig::sabasis::{construct_sab, rank_of_projected_set, verify_equivalence};

fn pass(criterion: usize, started: Instant, detail: &str) {
    println!(
        "ACCEPTANCE {criterion:02} PASS ({:.2}s) {detail}",
        started.elapsed().as_secs_f64()
    );
}

fn random_function(grid: &SymmetricGrid, seed: u64) -> GridFunction {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(7);
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    GridFunction {
        values: (0..grid.node_count())
            .map(|_| (next() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
            .collect(),
    }
}

fn grid_for(group: &PointGroup) -> SymmetricGrid {
    if group.dim() == 2 {
        build_grid(2, 1.0, &[5, 5]).unwrap()
    } else {
        build_grid(3, 2.0, &[5, 5, 5]).unwrap()
    }
}

/// Criterion 1: group axioms, homomorphism, celebrated sum, and great
/// orthogonality hold exactly (<= 1e-12) for all five built-in groups.
#[test]
fn criterion_01_group_theory_exactness() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for name in BUILTIN_GROUP_NAMES {
        let group = builtin_group(name).unwrap();
        let report = verify_group_axioms(&group);
        assert!(report.all_pass(), "{name}: {:?}", report.failures);
        assert!(report.homomorphism_dev <= 1e-12, "{name}");
        let dsum: usize = group.irreps().iter().map(|ir| ir.dim * ir.dim).sum();
        assert_eq!(dsum, group.order(), "{name}: celebrated sum");
        let orth = verify_great_orthogonality(&group);
        assert!(orth <= 1e-12, "{name}: orthogonality dev {orth:.3e}");
        worst = worst.max(orth.max(report.homomorphism_dev));
    }
    assert!(
        t0.elapsed().as_secs_f64() < 1.0,
        "criterion 1 runtime budget"
    );
    pass(1, t0, &format!("5 groups, max deviation {worst:.2e}"));
}

/// Criterion 2: projector adjoint/product identities, idempotence, and
/// completeness on 100 random grid functions per group, tol 1e-10.
#[test]
fn criterion_02_projector_algebra() {
    let t0 = Instant::now();
    const TOL: f64 = 1e-10;
    for name in BUILTIN_GROUP_NAMES {
        let group = builtin_group(name).unwrap();
        let grid = grid_for(&group);
        let orbits = orbit_decomposition(&grid, &group).unwrap();
        for seed in 0..100u64 {
            let f = random_function(&grid, seed);
            let h = random_function(&grid, seed + 1000);

            // Completeness: sum_nu sum_l P_ll f = f.
            let mut total = GridFunction::zeros(&grid);
            for irrep in group.irreps() {
                for l in 1..=irrep.dim {
                    let c = projector_coefficients(&group, irrep.index, l, l).unwrap();
                    let pf = apply_projector(&c, &f, &orbits).unwrap();
                    for (t, v) in total.values.iter_mut().zip(&pf.values) {
                        *t += v;
                    }
                }
            }
            for (a, b) in total.values.iter().zip(&f.values) {
                assert!((a - b).abs() <= TOL, "{name}: completeness");
            }

            for irrep in group.irreps() {
                let d = irrep.dim;
                for m in 1..=d {
                    for l in 1..=d {
                        let cml = projector_coefficients(&group, irrep.index, m, l).unwrap();
                        let clm = projector_coefficients(&group, irrep.index, l, m).unwrap();
                        // Adjoint.
                        let lhs = apply_projector(&cml, &f, &orbits).unwrap().dot(&h);
                        let rhs = f.dot(&apply_projector(&clm, &h, &orbits).unwrap());
                        assert!((lhs - rhs).abs() <= TOL, "{name}: adjoint");
                        // Idempotence of P_ll.
                        if m == l {
                            let once = apply_projector(&cml, &f, &orbits).unwrap();
                            let twice = apply_projector(&cml, &once, &orbits).unwrap();
                            for (a, b) in once.values.iter().zip(&twice.values) {
                                assert!((a - b).abs() <= TOL, "{name}: idempotence");
                            }
                        }
                    }
                }
            }

            // Product identity across irrep pairs (first seeds only; the
            // full 6-index sweep repeats per function otherwise).
            if seed < 10 {
                for a in group.irreps() {
                    for b in group.irreps() {
                        for m in 1..=a.dim {
                            for l in 1..=a.dim {
                                for mp in 1..=b.dim {
                                    for lp in 1..=b.dim {
                                        let cml =
                                            projector_coefficients(&group, a.index, m, l).unwrap();
                                        let cmplp = projector_coefficients(&group, b.index, mp, lp)
                                            .unwrap();
                                        let inner = apply_projector(&cmplp, &f, &orbits).unwrap();
                                        let lhs = apply_projector(&cml, &inner, &orbits).unwrap();
                                        let expect = if a.index == b.index && l == mp {
                                            apply_projector(
                                                &projector_coefficients(&group, a.index, m, lp)
                                                    .unwrap(),
                                                &f,
                                                &orbits,
                                            )
                                            .unwrap()
                                        } else {
                                            GridFunction::zeros(&grid)
                                        };
                                        for (x, y) in lhs.values.iter().zip(&expect.values) {
                                            assert!((x - y).abs() <= TOL, "{name}: product");
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(
        t0.elapsed().as_secs_f64() < 10.0,
        "criterion 2 runtime budget"
    );
    pass(2, t0, "5 groups x 100 random functions, tol 1e-10");
}

/// Criterion 3: the dense full spectrum equals the d_nu-replicated union
/// of the reduced spectra to 1e-8 relative (2D Laplacian with EXAMPLE2D;
/// 9^3 oscillator with D2H, D4, D2D).
#[test]
fn criterion_03_spectrum_partition_oracle() {
    let t0 = Instant::now();
    let lap = Problem::laplacian();
    let osc = Problem::harmonic_oscillator();
    let osc_grid = build_grid(3, 5.0, &[9, 9, 9]).unwrap();
    let cases: Vec<(&str, &Problem, SymmetricGrid)> = vec![
        ("EXAMPLE2D", &lap, build_grid(2, 1.0, &[31, 31]).unwrap()),
        ("D2H", &osc, osc_grid.clone()),
        ("D4", &osc, osc_grid.clone()),
        ("D2D", &osc, osc_grid),
    ];
    let mut worst: f64 = 0.0;
    for (name, problem, grid) in cases {
        assert!(grid.node_count() <= 2000);
        let group = builtin_group(name).unwrap();
        let orbits = orbit_decomposition(&grid, &group).unwrap();
        let (a_full, b_full) = assemble_full(problem, &grid, Discretization::Fd2);
        let (full_vals, _) = dense::dense_spectrum(&a_full, &b_full).unwrap();
        let mut union: Vec<f64> = Vec::new();
        for nu in 1..=group.n_irreps() {
            let red =
                assemble_reduced(problem, &grid, &orbits, &group, nu, Discretization::Fd2).unwrap();
            let (vals, _) = dense::dense_spectrum(&red.a, &red.b).unwrap();
            for v in vals {
                for _ in 0..red.d {
                    union.push(v);
                }
            }
        }
        union.sort_by(f64::total_cmp);
        assert_eq!(union.len(), full_vals.len(), "{name}: multiset size");
        for (u, f) in union.iter().zip(&full_vals) {
            let rel = (u - f).abs() / f.abs().max(1.0);
            assert!(rel <= 1e-8, "{name}: {u} vs {f}");
            worst = worst.max(rel);
        }
    }
    assert!(
        t0.elapsed().as_secs_f64() < 120.0,
        "criterion 3 runtime budget"
    );
    pass(3, t0, &format!("max relative deviation {worst:.2e}"));
}

fn cluster_multisets(entries: &[(f64, usize, usize)]) -> Vec<BTreeMap<(usize, usize), usize>> {
    // The exact oscillator clusters at N_e = 10 sit at positions
    // [0,1), [1,4), [4,10).
    [(0usize, 1usize), (1, 4), (4, 10)]
        .iter()
        .map(|&(lo, hi)| {
            let mut m = BTreeMap::new();
            for &(_, nu, l) in &entries[lo..hi] {
                *m.entry((nu, l)).or_insert(0) += 1;
            }
            m
        })
        .collect()
}

/// Criterion 4: the decomposed 21^3 FD2 oscillator solve reproduces the
/// published nu-l label multisets per degenerate cluster for D2h, D4, D2d.
#[test]
fn criterion_04_label_tables() {
    let t0 = Instant::now();
    let expected: Vec<(&str, Vec<Vec<((usize, usize), usize)>>)> = vec![
        (
            "D2H",
            vec![
                vec![((1, 1), 1)],
                vec![((6, 1), 1), ((7, 1), 1), ((8, 1), 1)],
                vec![((1, 1), 3), ((2, 1), 1), ((3, 1), 1), ((4, 1), 1)],
            ],
        ),
        (
            "D4",
            vec![
                vec![((1, 1), 1)],
                vec![((3, 1), 1), ((5, 1), 1), ((5, 2), 1)],
                vec![
                    ((1, 1), 2),
                    ((2, 1), 1),
                    ((4, 1), 1),
                    ((5, 1), 1),
                    ((5, 2), 1),
                ],
            ],
        ),
        (
            "D2D",
            vec![
                vec![((1, 1), 1)],
                vec![((2, 1), 1), ((5, 1), 1), ((5, 2), 1)],
                vec![
                    ((1, 1), 2),
                    ((2, 1), 1),
                    ((4, 1), 1),
                    ((5, 1), 1),
                    ((5, 2), 1),
                ],
            ],
        ),
    ];
    let problem = Problem::harmonic_oscillator();
    let grid = build_grid(3, 5.0, &[21, 21, 21]).unwrap();
    for (name, clusters_expected) in expected {
        let group = builtin_group(name).unwrap();
        let opts = DecomposedOptions::new(10, 1e-8);
        let merged = solve_decomposed(&problem, &grid, &group, Discretization::Fd2, &opts).unwrap();
        assert!(merged.complete, "{name}: incomplete spectrum");
        assert_eq!(merged.entries.len(), 10);
        let entries: Vec<(f64, usize, usize)> = merged
            .entries
            .iter()
            .map(|e| (e.lambda, e.nu, e.l))
            .collect();
        let got = cluster_multisets(&entries);
        for (ci, expect) in clusters_expected.iter().enumerate() {
            let want: BTreeMap<(usize, usize), usize> = expect.iter().cloned().collect();
            assert_eq!(got[ci], want, "{name}: cluster {ci} labels {entries:?}");
        }
    }
    assert!(
        t0.elapsed().as_secs_f64() < 120.0,
        "criterion 4 runtime budget"
    );
    pass(4, t0, "label multisets match for D2h, D4, D2d at 21^3 FD2");
}

/// Criterion 5: direct reduced assembly equals the literal full-matrix
/// reduction entrywise (<= 1e-12), all irreps, both schemes.
#[test]
fn criterion_05_assembly_equivalence() {
    let t0 = Instant::now();
    let lap = Problem::laplacian();
    let osc = Problem::harmonic_oscillator();
    let cases: Vec<(&str, &Problem, SymmetricGrid)> = vec![
        ("EXAMPLE2D", &lap, build_grid(2, 1.0, &[3, 3]).unwrap()),
        ("EXAMPLE2D", &lap, build_grid(2, 1.0, &[7, 5]).unwrap()),
        ("D2", &osc, build_grid(3, 2.0, &[5, 3, 5]).unwrap()),
        ("D2H", &osc, build_grid(3, 2.0, &[5, 5, 5]).unwrap()),
        ("D4", &osc, build_grid(3, 2.0, &[5, 3, 5]).unwrap()),
        ("D2D", &osc, build_grid(3, 2.0, &[5, 3, 5]).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    for (name, problem, grid) in cases {
        let group = builtin_group(name).unwrap();
        let orbits = orbit_decomposition(&grid, &group).unwrap();
        for disc in [Discretization::Fd2, Discretization::Q1Fe] {
            let (a_full, b_full) = assemble_full(problem, &grid, disc);
            for nu in 1..=group.n_irreps() {
                let fast = assemble_reduced(problem, &grid, &orbits, &group, nu, disc).unwrap();
                let oracle =
                    reduced_from_full(&a_full, &b_full, &orbits, group.irrep(nu).unwrap()).unwrap();
                let da = (fast.a.to_dense() - oracle.a.to_dense()).amax();
                let db = (fast.b.to_dense() - oracle.b.to_dense()).amax();
                assert!(da <= 1e-12 && db <= 1e-12, "{name} nu={nu} {disc:?}");
                worst = worst.max(da.max(db));
            }
        }
    }
    pass(5, t0, &format!("max entrywise deviation {worst:.2e}"));
}

/// Criterion 6: symmetry-adapted basis theorems on a 5^3 grid: projected
/// rank equals d_nu * N0 for every (group, nu), and the equivalence
/// relations hold to 1e-10 with coinciding spectra.
#[test]
fn criterion_06_sab_theorems() {
    let t0 = Instant::now();
    let osc = Problem::harmonic_oscillator();
    let lap = Problem::laplacian();
    let mut worst: f64 = 0.0;
    for name in BUILTIN_GROUP_NAMES {
        let group = builtin_group(name).unwrap();
        let (problem, grid): (&Problem, SymmetricGrid) = if group.dim() == 2 {
            (&lap, build_grid(2, 1.0, &[5, 5]).unwrap())
        } else {
            (&osc, build_grid(3, 2.0, &[5, 5, 5]).unwrap())
        };
        let orbits = orbit_decomposition(&grid, &group).unwrap();
        for irrep_index in 1..=group.n_irreps() {
            let d = group.irrep(irrep_index).unwrap().dim;
            let rank = rank_of_projected_set(&orbits, &group, irrep_index, 1).unwrap();
            assert_eq!(rank, d * orbits.orbit_count(), "{name} nu={irrep_index}");
            for disc in [Discretization::Fd2, Discretization::Q1Fe] {
                let reduced =
                    assemble_reduced(problem, &grid, &orbits, &group, irrep_index, disc).unwrap();
                let sab = construct_sab(&orbits, &group, irrep_index, 1).unwrap();
                let report =
                    verify_equivalence(&reduced, &sab, problem, &grid, &group, disc).unwrap();
                assert!(
                    report.entry_dev <= 1e-10 && report.spectrum_dev <= 1e-10,
                    "{name} nu={irrep_index} {disc:?}: {report:?}"
                );
                worst = worst.max(report.max_dev());
            }
        }
    }
    pass(
        6,
        t0,
        &format!("ranks exact, max equivalence deviation {worst:.2e}"),
    );
}

/// Criterion 7: Q1FE oscillator eigenvalue errors for 1.5, 2.5, 3.5 decay
/// at second order: log-log slopes 2.0 +/- 0.2 over four grid levels.
#[test]
fn criterion_07_convergence_rates() {
    let t0 = Instant::now();
    let mut cfg = RunConfig {
        problem: ProblemChoice::Oscillator,
        scheme: Discretization::Q1Fe,
        group: Some("D4".into()),
        n_e: 10,
        tol: 1e-8,
        ..RunConfig::default()
    };
    cfg.mode = RunMode::Decomposed;
    let table = run_convergence(&cfg, &[9, 13, 17, 21], &[1, 2, 5]).unwrap();
    assert!(table.exact_reference);
    for &(idx, slope) in &table.slopes {
        assert!(
            (slope - 2.0).abs() <= 0.2,
            "eigenvalue index {idx}: slope {slope:.3}"
        );
    }
    assert!(
        t0.elapsed().as_secs_f64() < 300.0,
        "criterion 7 runtime budget"
    );
    let detail: Vec<String> = table
        .slopes
        .iter()
        .map(|(i, s)| format!("e{i}={s:.2}"))
        .collect();
    pass(7, t0, &format!("slopes {}", detail.join(" ")));
}

/// Criterion 8: the speedup model reproduces the published numbers.
#[test]
fn criterion_08_speedup_model() {
    let t0 = Instant::now();
    let s1 = perfmodel::predict_speedup(8, 8, 4.59, 0.19).unwrap();
    assert!((s1 - 12.52).abs() <= 0.01, "{s1}");
    let s2 = perfmodel::predict_speedup(8, 8, 4.59, 0.49).unwrap();
    assert!((s2 - 7.64).abs() <= 0.01, "{s2}");
    let th = perfmodel::theta1_from_counts(110, 22);
    assert!((th - 4.59).abs() <= 0.01, "{th}");
    let tri = symeig::eigensolve::SolveStats {
        iterations: 22,
        opx_count: 1599,
        time_mv: 175.01,
        time_total: 930.39,
    };
    let w1 = perfmodel::measure_omega(&tri).unwrap();
    assert!((w1 - 0.188).abs() <= 0.001, "{w1}");
    let cubic = symeig::eigensolve::SolveStats {
        iterations: 57,
        opx_count: 3972,
        time_mv: 1696.29,
        time_total: 3465.57,
    };
    let w2 = perfmodel::measure_omega(&cubic).unwrap();
    assert!((w2 - 0.489).abs() <= 0.001, "{w2}");
    pass(
        8,
        t0,
        &format!("s(0.19)={s1:.2} s(0.49)={s2:.2} theta1={th:.2} omega={w1:.3}/{w2:.3}"),
    );
}

/// Criterion 9: desk-scale substitute for the published wall-clock tables:
/// the measured single-iteration decomposed-vs-direct time ratio on the
/// 21^3 FD2 oscillator lies within a factor 2 of the model prediction
/// computed from the measured omega and theta1, and the cross-group
/// communication bookkeeping is exactly zero.
#[test]
fn criterion_09_measured_speedup_and_communication() {
    let t0 = Instant::now();
    let problem = Problem::harmonic_oscillator();
    let grid = build_grid(3, 5.0, &[21, 21, 21]).unwrap();
    let group = builtin_group("D2H").unwrap();

    // Single-threaded pool: per-solve times must not fight for cores.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let (merged, direct) = pool.install(|| {
        let opts = DecomposedOptions::new(10, 1e-8);
        let merged = solve_decomposed(&problem, &grid, &group, Discretization::Fd2, &opts).unwrap();
        let (a, _) = assemble_full(&problem, &grid, Discretization::Fd2);
        let sopts = symeig::eigensolve::SolveOptions::new(
            10,
            1e-8,
            symeig::eigensolve::SolveMode::Standard,
        );
        let direct = symeig::eigensolve::solve_symmetric(&a, None, &sopts).unwrap();
        (merged, direct)
    });

    let sub_stats: Vec<_> = merged.subproblems.iter().map(|s| s.stats.clone()).collect();
    let measured = measured_iteration_speedup(&direct.stats, &sub_stats);

    let omega = perfmodel::measure_omega(&direct.stats).unwrap();
    let nev_sub = merged.subproblems[0].eigenvalues.len();
    let theta1 = perfmodel::theta1_from_counts(10, nev_sub);
    let predicted =
        perfmodel::predict_speedup(group.order(), group.n_sub(), theta1, omega).unwrap();
    let ratio = measured / predicted;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "measured {measured:.2} vs predicted {predicted:.2} (ratio {ratio:.2})"
    );

    // Communication bookkeeping: zero bytes between worker groups.
    let orbits = orbit_decomposition(&grid, &group).unwrap();
    let systems: Vec<_> = (1..=group.n_irreps())
        .map(|nu| {
            assemble_reduced(&problem, &grid, &orbits, &group, nu, Discretization::Fd2).unwrap()
        })
        .collect();
    let comm = communication_accounting(&systems, 8).unwrap();
    assert_eq!(comm.cross_group_bytes, 0);
    pass(
        9,
        t0,
        &format!("measured {measured:.2} vs predicted {predicted:.2}, cross-group bytes 0"),
    );
}

/// Criterion 10: two consecutive solve runs with the same configuration
/// produce byte-identical spectrum CSVs.
#[test]
fn criterion_10_csv_determinism() {
    let t0 = Instant::now();
    let base = RunConfig {
        partitions: vec![9, 9, 9],
        group: Some("D4".into()),
        n_e: 8,
        ..RunConfig::default()
    };
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let mut cfg1 = base.clone();
    cfg1.out_dir = dir1.path().to_path_buf();
    let mut cfg2 = base;
    cfg2.out_dir = dir2.path().to_path_buf();
    let out1 = run_solve(&cfg1).unwrap();
    let out2 = run_solve(&cfg2).unwrap();
    let bytes1 = std::fs::read(out1.spectrum_path).unwrap();
    let bytes2 = std::fs::read(out2.spectrum_path).unwrap();
    assert_eq!(bytes1, bytes2, "spectrum CSVs differ between runs");
    assert!(!bytes1.is_empty());
    pass(10, t0, &format!("{} identical bytes", bytes1.len()));
}
