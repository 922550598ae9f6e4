//! Implicitly restarted Lanczos eigensolver with instrumentation,
//! shift-invert for generalized pencils, per-subproblem solves, and
//! spectrum merging with the redundancy/restart policy.
//!
//! One restart cycle follows the classic scheme: Schur-decompose the
//! tridiagonal `H_m`, pick the `l` unwanted Ritz values as exact shifts,
//! run `l` shifted QR sweeps implemented as products of `m-1` Givens
//! rotations (updating `V`, `H` and the accumulated row vector `q`),
//! contract to the `k`-step factorization with
//! `f_k = v_{k+1} beta_k + f_m sigma_k`, then extend back to `m` steps
//! with fully re-orthogonalized Lanczos.
//!
//! A single-vector Krylov space cannot represent a multiple eigenvalue in
//! exact arithmetic, so converged pairs are locked explicitly and the
//! iteration is restarted against the deflated operator with a fresh
//! deterministic start vector; cheap probe runs afterwards certify that no
//! eigenvalue below the cut was missed. Repeated runs are bit-identical:
//! start vectors come from a fixed counter-seeded generator.

use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{assemble_reduced, Discretization, Problem, ReducedSystem};
use crate::dense;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, OrbitMap, SymmetricGrid};
use crate::group::{Irrep, PointGroup};
use crate::sparse::SparseSym;

/// Residual norm below which the Lanczos recurrence is declared broken
/// down and restarted with a fresh orthogonal direction.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Pencils this small that the Krylov rule would span completely are
/// solved densely: a complete factorization cannot be refined by
/// restarting, so its accuracy would be capped by the inexact inner
/// solves.
const DENSE_FALLBACK_LIMIT: usize = 512;

/// Round iterations after which individually converged wanted pairs are
/// locked even though the full wanted set has not converged yet.
const STAGNATION_ITERS: usize = 40;

/// Targeting mode of one symmetric solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Lanczos on `A` itself, smallest eigenvalues; requires `B = I`.
    Standard,
    /// Lanczos on `(A - sigma B)^{-1} B` in the B-inner product; `sigma`
    /// must lie below the spectrum so the shifted matrix stays positive
    /// definite for the inner conjugate-gradient solves.
    ShiftInvert { sigma: f64 },
}

/// Solver configuration. `m` follows the `2*nev + 5` rule unless capped by
/// the matrix order.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub nev: usize,
    pub tol: f64,
    pub mode: SolveMode,
    pub max_restarts: usize,
    /// Parallelize matrix-vector products over row blocks.
    pub row_parallel: bool,
}

impl SolveOptions {
    pub fn new(nev: usize, tol: f64, mode: SolveMode) -> Self {
        SolveOptions {
            nev,
            tol,
            mode,
            max_restarts: 800,
            row_parallel: false,
        }
    }
}

/// Instrumentation counters for one solve.
#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub opx_count: usize,
    pub time_mv: f64,
    pub time_total: f64,
}

/// Eigenpairs of one reduced (or full) system.
#[derive(Debug, Clone)]
pub struct SubproblemSpectrum {
    /// 1-based irrep label; 0 for a direct full-system solve.
    pub nu: usize,
    /// Irrep dimension (replication factor when merging).
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    /// Columns matching `eigenvalues`, B-normalized.
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub stats: SolveStats,
}

/// One entry of the merged spectrum with its nu-l symmetry label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedEntry {
    pub lambda: f64,
    pub nu: usize,
    pub l: usize,
    /// Index of the eigenvalue within its subproblem.
    pub local_index: usize,
}

/// Globally sorted eigenvalues with labels, plus the per-subproblem data.
#[derive(Debug, Clone)]
pub struct MergedSpectrum {
    pub entries: Vec<MergedEntry>,
    pub n_e: usize,
    /// False when the redundancy/restart budget ran out before every
    /// subproblem had leftover eigenvalues beyond the cut.
    pub complete: bool,
    pub subproblems: Vec<SubproblemSpectrum>,
    /// Per subproblem: eigenvalues left over beyond the `N_e` cut.
    pub leftover: Vec<usize>,
}

// ---------------------------------------------------------------------
// Operator plumbing
// ---------------------------------------------------------------------

/// Deterministic start-vector generator (splitmix64 mapped to [-1, 1]).
fn seeded_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    (0..n)
        .map(|_| {
            let u = next();
            (u >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

struct PencilOp<'a> {
    a: &'a SparseSym,
    b: Option<&'a SparseSym>,
    mode: SolveMode,
    /// `A - sigma B`, present in shift-invert mode.
    shifted: Option<SparseSym>,
    jacobi: Vec<f64>,
    cg_tol: f64,
    row_parallel: bool,
    opx: usize,
    time_mv: f64,
}

impl<'a> PencilOp<'a> {
    fn new(a: &'a SparseSym, b: Option<&'a SparseSym>, opts: &SolveOptions) -> Result<Self> {
        let (shifted, jacobi) = match opts.mode {
            SolveMode::Standard => {
                if b.is_some() {
                    return Err(Error::ShapeMismatch(
                        "standard mode requires an identity mass matrix".into(),
                    ));
                }
                (None, Vec::new())
            }
            SolveMode::ShiftInvert { sigma } => {
                let shifted = match b {
                    Some(bm) => a.shifted(sigma, bm)?,
                    None => a.shifted(sigma, &SparseSym::identity(a.order()))?,
                };
                let mut diag = shifted.diagonal();
                for d in diag.iter_mut() {
                    if *d <= 0.0 {
                        return Err(Error::IndefiniteMass);
                    }
                    *d = 1.0 / *d;
                }
                (Some(shifted), diag)
            }
        };
        Ok(PencilOp {
            a,
            b,
            mode: opts.mode,
            shifted,
            jacobi,
            cg_tol: (opts.tol / 100.0).min(1e-12),
            row_parallel: opts.row_parallel,
            opx: 0,
            time_mv: 0.0,
        })
    }

    fn n(&self) -> usize {
        self.a.order()
    }

    fn mv(&self, m: &SparseSym, x: &[f64], y: &mut [f64]) {
        if self.row_parallel {
            m.matvec_par(x, y);
        } else {
            m.matvec(x, y);
        }
    }

    /// `y = B x` (identity when no mass matrix).
    fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        match self.b {
            Some(bm) => self.mv(bm, x, y),
            None => y.copy_from_slice(x),
        }
    }

    /// Applies the iteration operator; counted and timed.
    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        let t0 = Instant::now();
        match self.mode {
            SolveMode::Standard => self.mv(self.a, x, y),
            SolveMode::ShiftInvert { .. } => {
                let mut rhs = vec![0.0; x.len()];
                self.apply_b(x, &mut rhs);
                self.cg(&rhs, y);
            }
        }
        self.opx += 1;
        self.time_mv += t0.elapsed().as_secs_f64();
    }

    /// Jacobi-preconditioned conjugate gradient on the shifted matrix.
    fn cg(&self, rhs: &[f64], x: &mut [f64]) {
        let m = self.shifted.as_ref().expect("shift-invert operator");
        let n = rhs.len();
        x.iter_mut().for_each(|v| *v = 0.0);
        let rhs_norm = norm2(rhs);
        if rhs_norm == 0.0 {
            return;
        }
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.jacobi).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let target = self.cg_tol * rhs_norm;
        for _ in 0..20 * n {
            self.mv(m, &p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if norm2(&r) <= target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * self.jacobi[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    /// Ritz value of the iteration operator -> eigenvalue of the pencil.
    fn lambda_from_theta(&self, theta: f64) -> f64 {
        match self.mode {
            SolveMode::Standard => theta,
            SolveMode::ShiftInvert { sigma } => sigma + 1.0 / theta,
        }
    }

    /// Ordering that puts the wanted Ritz values first.
    fn wanted_first(&self, a: f64, b: f64) -> std::cmp::Ordering {
        match self.mode {
            SolveMode::Standard => a.total_cmp(&b),
            SolveMode::ShiftInvert { .. } => b.total_cmp(&a),
        }
    }

    /// Explicit pencil residual `|A x - lambda B x| / |B x|`.
    fn residual(&self, lambda: f64, x: &[f64]) -> f64 {
        let n = x.len();
        let mut ax = vec![0.0; n];
        self.mv(self.a, x, &mut ax);
        let mut bx = vec![0.0; n];
        self.apply_b(x, &mut bx);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let r = ax[i] - lambda * bx[i];
            num += r * r;
            den += bx[i] * bx[i];
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// ---------------------------------------------------------------------
// Lanczos factorization
// ---------------------------------------------------------------------

/// A `k`-step Lanczos factorization `Op V_k = V_k H_k + f e_k^T` in the
/// B-inner product: `alpha` is the diagonal of the tridiagonal `H_k`,
/// `beta` its subdiagonal (`beta.len() == alpha.len() - 1`), and `f` the
/// unnormalized residual vector.
#[derive(Debug, Clone)]
pub struct LanczosState {
    pub v: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub f: Vec<f64>,
}

impl LanczosState {
    /// Empty factorization seeded with a start vector (normalized later by
    /// the first extension step).
    pub fn seeded(start: Vec<f64>) -> Self {
        LanczosState {
            v: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            f: start,
        }
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// Dense symmetric tridiagonal `H_m`.
    pub fn tridiagonal(&self) -> nalgebra::DMatrix<f64> {
        let m = self.steps();
        let mut t = nalgebra::DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }

    /// Ritz values (unsorted order of the dense solver) and the matching
    /// eigenvector columns of `H_m`.
    pub fn ritz(&self) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
        dense::sym_eigen(&self.tridiagonal())
    }

    /// Max-norm factorization residual `|Op V - V H - f e_m^T|` column by
    /// column, for verification.
    pub fn factorization_residual<F: FnMut(&[f64], &mut [f64])>(&self, mut op: F) -> f64 {
        let m = self.steps();
        let n = self.f.len();
        let mut worst: f64 = 0.0;
        let mut av = vec![0.0; n];
        for j in 0..m {
            op(&self.v[j], &mut av);
            for i in 0..n {
                let mut expect = self.alpha[j] * self.v[j][i];
                if j > 0 {
                    expect += self.beta[j - 1] * self.v[j - 1][i];
                }
                if j + 1 < m {
                    expect += self.beta[j] * self.v[j + 1][i];
                }
                if j == m - 1 {
                    expect += self.f[i];
                }
                worst = worst.max((av[i] - expect).abs());
            }
        }
        worst
    }
}

/// Locked (converged) eigenpair kept out of later Krylov spaces.
struct LockedPair {
    lambda: f64,
    x: Vec<f64>,
    bx: Vec<f64>,
}

/// Extends the factorization by `steps` Lanczos steps with full
/// re-orthogonalization (two classical Gram-Schmidt passes) against both
/// the basis and the locked set. On breakdown the residual is replaced by
/// a fresh deterministic vector orthogonal to everything seen so far.
fn extend_factorization(
    state: &mut LanczosState,
    op: &mut PencilOp<'_>,
    locked: &[LockedPair],
    steps: usize,
    fresh_counter: &mut u64,
) {
    let n = state.f.len();
    let mut bw = vec![0.0; n];
    for _ in 0..steps {
        // Normalize the pending residual into the next basis vector.
        op.apply_b(&state.f, &mut bw);
        let mut fnorm = dot(&state.f, &bw).max(0.0).sqrt();
        let mut coupling = fnorm;
        if fnorm < BREAKDOWN_TOL {
            if state.v.len() + locked.len() >= n {
                // The space is exhausted; nothing left to add.
                return;
            }
            state.f = fresh_direction(state, op, locked, fresh_counter);
            // The replacement carries no coupling to the previous block.
            coupling = 0.0;
            op.apply_b(&state.f, &mut bw);
            fnorm = dot(&state.f, &bw).max(0.0).sqrt();
        }
        if !state.v.is_empty() {
            state.beta.push(coupling);
        }
        let vj: Vec<f64> = state.f.iter().map(|x| x / fnorm).collect();
        state.v.push(vj);
        let j = state.v.len() - 1;

        let mut w = vec![0.0; n];
        op.apply(state.v[j].as_slice(), &mut w);
        op.apply_b(&w, &mut bw);
        let alpha_j = dot(&state.v[j], &bw);
        state.alpha.push(alpha_j);

        for i in 0..n {
            w[i] -= alpha_j * state.v[j][i];
        }
        if j > 0 {
            let beta_prev = state.beta[j - 1];
            for i in 0..n {
                w[i] -= beta_prev * state.v[j - 1][i];
            }
        }
        // Full re-orthogonalization, two passes.
        for _pass in 0..2 {
            op.apply_b(&w, &mut bw);
            for basis in state.v.iter() {
                let h = dot(basis, &bw);
                if h != 0.0 {
                    for i in 0..n {
                        w[i] -= h * basis[i];
                    }
                }
            }
            for pair in locked {
                let h = dot(&pair.bx, &w);
                if h != 0.0 {
                    for i in 0..n {
                        w[i] -= h * pair.x[i];
                    }
                }
            }
        }
        state.f = w;
    }
}

/// Deterministic replacement vector, B-orthogonal to the current basis and
/// the locked pairs.
fn fresh_direction(
    state: &LanczosState,
    op: &mut PencilOp<'_>,
    locked: &[LockedPair],
    counter: &mut u64,
) -> Vec<f64> {
    let n = state.f.len();
    let mut bw = vec![0.0; n];
    loop {
        *counter += 1;
        let mut w = seeded_vector(n, *counter);
        for _pass in 0..2 {
            op.apply_b(&w, &mut bw);
            for basis in state.v.iter() {
                let h = dot(basis, &bw);
                for i in 0..n {
                    w[i] -= h * basis[i];
                }
            }
            for pair in locked {
                let h = dot(&pair.bx, &w);
                for i in 0..n {
                    w[i] -= h * pair.x[i];
                }
            }
        }
        op.apply_b(&w, &mut bw);
        let nrm = dot(&w, &bw).max(0.0).sqrt();
        if nrm > 1e-8 {
            return w;
        }
    }
}

/// Public single-operator Lanczos extension (Euclidean inner product, no
/// deflation): extends the factorization by `steps` steps and returns the
/// number of operator applications performed.
pub fn lanczos_extend<F: FnMut(&[f64], &mut [f64])>(
    state: &mut LanczosState,
    mut op: F,
    steps: usize,
) -> usize {
    let n = state.f.len();
    let mut counter = 0u64;
    let mut count = 0usize;
    for _ in 0..steps {
        let mut fnorm = norm2(&state.f);
        let mut coupling = fnorm;
        if fnorm < BREAKDOWN_TOL {
            if state.v.len() >= n {
                return count;
            }
            loop {
                counter += 1;
                let mut w = seeded_vector(n, counter);
                for _pass in 0..2 {
                    for basis in state.v.iter() {
                        let h = dot(basis, &w);
                        for i in 0..n {
                            w[i] -= h * basis[i];
                        }
                    }
                }
                if norm2(&w) > 1e-8 {
                    state.f = w;
                    break;
                }
            }
            coupling = 0.0;
            fnorm = norm2(&state.f);
        }
        if !state.v.is_empty() {
            state.beta.push(coupling);
        }
        let vj: Vec<f64> = state.f.iter().map(|x| x / fnorm).collect();
        state.v.push(vj);
        let j = state.v.len() - 1;
        let mut w = vec![0.0; n];
        op(&state.v[j], &mut w);
        count += 1;
        let alpha_j = dot(&state.v[j], &w);
        state.alpha.push(alpha_j);
        for i in 0..n {
            w[i] -= alpha_j * state.v[j][i];
        }
        if j > 0 {
            let bp = state.beta[j - 1];
            for i in 0..n {
                w[i] -= bp * state.v[j - 1][i];
            }
        }
        for _pass in 0..2 {
            for basis in state.v.iter() {
                let h = dot(basis, &w);
                if h != 0.0 {
                    for i in 0..n {
                        w[i] -= h * basis[i];
                    }
                }
            }
        }
        state.f = w;
    }
    count
}

/// Applies `l` implicitly shifted QR sweeps and contracts the `m`-step
/// factorization to `m - l` steps. Each sweep factors `H - mu I = Q R`
/// through `m - 1` Givens rotations, forms `R Q + mu I`, and accumulates
/// the rotations onto the basis and the restart weight vector `q`.
pub fn implicit_restart(state: &mut LanczosState, shifts: &[f64]) {
    let m = state.steps();
    let l = shifts.len();
    if l == 0 || m == 0 {
        return;
    }
    assert!(
        l < m,
        "cannot apply {l} shifts to an {m}-step factorization"
    );
    let n = state.f.len();
    let mut t = state.tridiagonal();
    let mut q = vec![0.0; m];
    q[m - 1] = 1.0;

    for &mu in shifts {
        // Factor phase: premultiply Givens rotations to upper-triangularize
        // T - mu I; record them.
        let mut r = t.clone();
        for i in 0..m {
            r[(i, i)] -= mu;
        }
        let mut rots = Vec::with_capacity(m - 1);
        for i in 0..m - 1 {
            let a = r[(i, i)];
            let b = r[(i + 1, i)];
            let rho = (a * a + b * b).sqrt();
            let (c, s) = if rho == 0.0 {
                (1.0, 0.0)
            } else {
                (a / rho, b / rho)
            };
            rots.push((c, s));
            // Rows i and i+1 of R.
            for col in i..m.min(i + 3) {
                let x = r[(i, col)];
                let y = r[(i + 1, col)];
                r[(i, col)] = c * x + s * y;
                r[(i + 1, col)] = -s * x + c * y;
            }
        }
        // RQ phase: postmultiply by the transposed rotations in order.
        for (i, &(c, s)) in rots.iter().enumerate() {
            for row in 0..m.min(i + 3) {
                let x = r[(row, i)];
                let y = r[(row, i + 1)];
                r[(row, i)] = c * x + s * y;
                r[(row, i + 1)] = -s * x + c * y;
            }
            // Basis columns i, i+1.
            for kk in 0..n {
                let x = state.v[i][kk];
                let y = state.v[i + 1][kk];
                state.v[i][kk] = c * x + s * y;
                state.v[i + 1][kk] = -s * x + c * y;
            }
            let x = q[i];
            let y = q[i + 1];
            q[i] = c * x + s * y;
            q[i + 1] = -s * x + c * y;
        }
        // T <- R Q + mu I, re-symmetrized onto tridiagonal form.
        for i in 0..m {
            r[(i, i)] += mu;
        }
        for i in 0..m {
            for j in 0..m {
                let v = if i == j {
                    r[(i, i)]
                } else if j == i + 1 || i == j + 1 {
                    0.5 * (r[(i, j)] + r[(j, i)])
                } else {
                    0.0
                };
                t[(i, j)] = v;
            }
        }
    }

    let k = m - l;
    // f_k = v_{k+1} * beta_k + f_m * sigma_k
    let beta_k = t[(k, k - 1)];
    let sigma_k = q[k - 1];
    let mut f_new = vec![0.0; n];
    for i in 0..n {
        f_new[i] = state.v[k][i] * beta_k + state.f[i] * sigma_k;
    }
    state.v.truncate(k);
    state.alpha = (0..k).map(|i| t[(i, i)]).collect();
    state.beta = (0..k - 1).map(|i| t[(i + 1, i)]).collect();
    state.f = f_new;
}

// ---------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------

/// Smallest `nev` eigenpairs of a symmetric pencil, IRLM with explicit
/// locking. `b = None` means the standard problem `B = I`.
pub fn solve_symmetric(
    a: &SparseSym,
    b: Option<&SparseSym>,
    opts: &SolveOptions,
) -> Result<SubproblemSpectrum> {
    let t_start = Instant::now();
    let n = a.order();
    let nev = opts.nev.min(n);
    if nev == 0 {
        return Err(Error::ShapeMismatch("nev must be at least 1".into()));
    }
    let b_for_op = match b {
        Some(bm) if bm.is_identity() => None,
        other => other,
    };
    let mut op = PencilOp::new(a, b_for_op, opts)?;
    let m = (2 * nev + 5).min(n);
    if m == n && n <= DENSE_FALLBACK_LIMIT {
        return solve_dense_pencil(a, b_for_op, nev, &mut op, t_start);
    }

    let mut locked: Vec<LockedPair> = Vec::new();
    let mut iterations = 0usize;
    let mut restarts_left = opts.max_restarts;
    let mut fresh_counter = 0u64;
    let mut round = 0u64;

    // Main rounds: collect at least nev converged pairs.
    while locked.len() < nev {
        let need = nev - locked.len();
        let n_free = n - locked.len();
        let m_eff = m.min(n_free);
        let start = if round == 0 {
            vec![1.0; n]
        } else {
            seeded_vector(n, round)
        };
        round += 1;
        run_round(
            &mut op,
            &mut locked,
            need.min(m_eff),
            m_eff,
            opts.tol,
            start,
            &mut restarts_left,
            &mut iterations,
            &mut fresh_counter,
        )?;
    }

    // Probe phase: certify that nothing below the cut was missed. Each
    // probe targets the single best remaining eigenvalue of the deflated
    // operator and either tightens the set or terminates.
    let mut probes = 0usize;
    loop {
        if locked.len() >= n {
            break;
        }
        let mut lambdas: Vec<f64> = locked.iter().map(|p| p.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        let cut = lambdas[nev - 1];
        let gap = 2.0 * opts.tol * cut.abs().max(1.0);
        let n_free = n - locked.len();
        let m_probe = m.min(n_free);
        probes += 1;
        if probes > nev + 16 {
            return Err(Error::MaxIterations {
                restarts: opts.max_restarts - restarts_left,
                converged: nev,
                requested: nev,
            });
        }
        let before = locked.len();
        run_round(
            &mut op,
            &mut locked,
            1,
            m_probe,
            opts.tol,
            seeded_vector(n, 0x5eed + probes as u64),
            &mut restarts_left,
            &mut iterations,
            &mut fresh_counter,
        )?;
        let newest = &locked[before];
        if newest.lambda >= cut - gap {
            break;
        }
    }

    // Select the nev smallest locked pairs.
    let mut order: Vec<usize> = (0..locked.len()).collect();
    order.sort_by(|&i, &j| locked[i].lambda.total_cmp(&locked[j].lambda));
    order.truncate(nev);
    let mut eigenvalues = Vec::with_capacity(nev);
    let mut eigenvectors = Vec::with_capacity(nev);
    let mut residuals = Vec::with_capacity(nev);
    for &i in &order {
        let mut x = locked[i].x.clone();
        canonical_sign(&mut x);
        residuals.push(op.residual(locked[i].lambda, &x));
        eigenvalues.push(locked[i].lambda);
        eigenvectors.push(x);
    }
    let stats = SolveStats {
        iterations,
        opx_count: op.opx,
        time_mv: op.time_mv,
        time_total: t_start.elapsed().as_secs_f64(),
    };
    Ok(SubproblemSpectrum {
        nu: 0,
        d: 1,
        eigenvalues,
        eigenvectors,
        residuals,
        stats,
    })
}

/// Direct dense solve of a pencil too small for meaningful restarts.
fn solve_dense_pencil(
    a: &SparseSym,
    b: Option<&SparseSym>,
    nev: usize,
    op: &mut PencilOp<'_>,
    t_start: Instant,
) -> Result<SubproblemSpectrum> {
    let (vals, vecs) = match b {
        Some(bm) => dense::generalized_eigen(&a.to_dense(), &bm.to_dense())?,
        None => dense::sym_eigen(&a.to_dense()),
    };
    let mut eigenvalues = Vec::with_capacity(nev);
    let mut eigenvectors = Vec::with_capacity(nev);
    let mut residuals = Vec::with_capacity(nev);
    for k in 0..nev {
        let mut x: Vec<f64> = vecs.column(k).iter().copied().collect();
        canonical_sign(&mut x);
        residuals.push(op.residual(vals[k], &x));
        eigenvalues.push(vals[k]);
        eigenvectors.push(x);
    }
    let stats = SolveStats {
        iterations: 1,
        opx_count: 0,
        time_mv: 0.0,
        time_total: t_start.elapsed().as_secs_f64(),
    };
    Ok(SubproblemSpectrum {
        nu: 0,
        d: 1,
        eigenvalues,
        eigenvectors,
        residuals,
        stats,
    })
}

/// One IRLM run against the deflated operator. Locks the whole wanted set
/// once it passes the explicit residual test; after a stagnation span,
/// pairs that converged individually are locked so one slow pair cannot
/// starve the rest (the remainder is picked up by later rounds).
#[allow(clippy::too_many_arguments)]
fn run_round(
    op: &mut PencilOp<'_>,
    locked: &mut Vec<LockedPair>,
    need: usize,
    m_eff: usize,
    tol: f64,
    start: Vec<f64>,
    restarts_left: &mut usize,
    iterations: &mut usize,
    fresh_counter: &mut u64,
) -> Result<()> {
    let n = op.n();
    let mut state = LanczosState::seeded(start);
    // Purge locked components from the start vector; the Krylov space must
    // live entirely in the deflated complement.
    if !locked.is_empty() {
        for _pass in 0..2 {
            for pair in locked.iter() {
                let h = dot(&pair.bx, &state.f);
                if h != 0.0 {
                    for (fi, xi) in state.f.iter_mut().zip(&pair.x) {
                        *fi -= h * xi;
                    }
                }
            }
        }
        let mut bw = vec![0.0; n];
        op.apply_b(&state.f, &mut bw);
        if dot(&state.f, &bw).max(0.0).sqrt() < 1e-8 {
            state.f = fresh_direction(&state, op, locked, fresh_counter);
        }
    }
    extend_factorization(&mut state, op, locked, m_eff, fresh_counter);
    let mut round_iters = 0usize;
    loop {
        *iterations += 1;
        round_iters += 1;
        let m = state.steps();
        let (theta, y) = state.ritz();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| op.wanted_first(theta[i], theta[j]));
        let take = need.min(m);

        // Explicit residuals of the wanted Ritz pairs on the pencil.
        let mut converged: Vec<(f64, Vec<f64>)> = Vec::with_capacity(take);
        for &idx in order.iter().take(take) {
            let lambda = op.lambda_from_theta(theta[idx]);
            let mut x = vec![0.0; n];
            for (j, basis) in state.v.iter().enumerate() {
                let w = y[(j, idx)];
                if w != 0.0 {
                    for i in 0..n {
                        x[i] += w * basis[i];
                    }
                }
            }
            // B-normalize.
            let mut bx = vec![0.0; n];
            op.apply_b(&x, &mut bx);
            let nrm = dot(&x, &bx).max(f64::MIN_POSITIVE).sqrt();
            for v in x.iter_mut() {
                *v /= nrm;
            }
            let res = op.residual(lambda, &x);
            if res <= tol {
                converged.push((lambda, x));
            }
        }
        if converged.len() == take || (round_iters >= STAGNATION_ITERS && !converged.is_empty()) {
            for (lambda, x) in converged {
                let mut bx = vec![0.0; n];
                op.apply_b(&x, &mut bx);
                locked.push(LockedPair { lambda, x, bx });
            }
            return Ok(());
        }

        if *restarts_left == 0 {
            return Err(Error::MaxIterations {
                restarts: *iterations,
                converged: locked.len(),
                requested: locked.len() + need,
            });
        }
        *restarts_left -= 1;

        if m <= take {
            // Full space reached without passing residuals; extend is
            // impossible. Treat as non-convergence.
            return Err(Error::MaxIterations {
                restarts: *iterations,
                converged: locked.len(),
                requested: locked.len() + need,
            });
        }
        let shifts: Vec<f64> = order.iter().skip(take).map(|&i| theta[i]).collect();
        implicit_restart(&mut state, &shifts);
        extend_factorization(&mut state, op, locked, shifts.len(), fresh_counter);
    }
}

/// Fixes the overall sign so that the largest-magnitude entry is positive.
fn canonical_sign(x: &mut [f64]) {
    let mut best = 0usize;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    if x[best] < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

// ---------------------------------------------------------------------
// Decomposed solves and merging
// ---------------------------------------------------------------------

/// Options for the decomposed solve.
#[derive(Debug, Clone)]
pub struct DecomposedOptions {
    pub n_e: usize,
    /// Redundant eigenvalues per subproblem; default
    /// `max(5, ceil(0.2 * N_e / n_sub))`.
    pub n_a: Option<usize>,
    pub tol: f64,
    /// Shift for generalized pencils; must lie below the spectrum.
    pub sigma: f64,
    pub max_restarts: usize,
    /// Re-solve rounds when a subproblem has no leftover beyond the cut.
    pub max_redundancy_rounds: usize,
    pub row_parallel: bool,
}

impl DecomposedOptions {
    pub fn new(n_e: usize, tol: f64) -> Self {
        DecomposedOptions {
            n_e,
            n_a: None,
            tol,
            sigma: 0.0,
            max_restarts: 800,
            max_redundancy_rounds: 3,
            row_parallel: false,
        }
    }

    pub fn default_n_a(n_e: usize, n_sub: usize) -> usize {
        5usize.max((0.2 * n_e as f64 / n_sub as f64).ceil() as usize)
    }
}

/// Solves one reduced system with the mode implied by its mass matrix.
pub fn solve_reduced(system: &ReducedSystem, opts: &SolveOptions) -> Result<SubproblemSpectrum> {
    let b = if system.b_is_identity {
        None
    } else {
        Some(&system.b)
    };
    let mut spec = solve_symmetric(&system.a, b, opts)?;
    spec.nu = system.nu;
    spec.d = system.d;
    Ok(spec)
}

/// Decomposes, solves every subproblem (in parallel), and merges, applying
/// the redundancy policy: each subproblem is asked for
/// `ceil(N_e/n_sub) + n_a` eigenvalues; if after the merge some subproblem
/// has no eigenvalue left beyond the cut, it is re-solved with twice the
/// count, up to the round budget.
pub fn solve_decomposed(
    problem: &Problem,
    grid: &SymmetricGrid,
    group: &PointGroup,
    disc: Discretization,
    opts: &DecomposedOptions,
) -> Result<MergedSpectrum> {
    let orbits = crate::grid::orbit_decomposition(grid, group)?;
    problem.check_symmetric_potential(grid, group)?;
    let systems: Vec<ReducedSystem> = (1..=group.n_irreps())
        .map(|nu| assemble_reduced(problem, grid, &orbits, group, nu, disc))
        .collect::<Result<_>>()?;
    solve_decomposed_systems(&systems, group, opts)
}

/// Decomposed solve over pre-assembled reduced systems.
pub fn solve_decomposed_systems(
    systems: &[ReducedSystem],
    group: &PointGroup,
    opts: &DecomposedOptions,
) -> Result<MergedSpectrum> {
    let n_sub = group.n_sub();
    let n_a = opts
        .n_a
        .unwrap_or_else(|| DecomposedOptions::default_n_a(opts.n_e, n_sub));
    let base_nev = (opts.n_e).div_ceil(n_sub) + n_a;
    let mut nevs: Vec<usize> = systems.iter().map(|s| base_nev.min(s.order())).collect();
    let mut solved: Vec<Option<SubproblemSpectrum>> = vec![None; systems.len()];

    let mut complete = true;
    for round in 0..=opts.max_redundancy_rounds {
        // Solve every system whose requested nev is not yet satisfied.
        let jobs: Vec<usize> = (0..systems.len())
            .filter(|&i| match &solved[i] {
                Some(s) => s.eigenvalues.len() < nevs[i],
                None => true,
            })
            .collect();
        let fresh: Vec<(usize, Result<SubproblemSpectrum>)> = jobs
            .par_iter()
            .map(|&i| {
                let mut sopts =
                    SolveOptions::new(nevs[i], opts.tol, mode_for(&systems[i], opts.sigma));
                sopts.max_restarts = opts.max_restarts;
                sopts.row_parallel = opts.row_parallel;
                (i, solve_reduced(&systems[i], &sopts))
            })
            .collect();
        for (i, res) in fresh {
            solved[i] = Some(res?);
        }
        let subs: Vec<SubproblemSpectrum> = solved
            .iter()
            .map(|s| s.as_ref().expect("solved").clone())
            .collect();
        let merged = merge_spectra(subs, opts.n_e);

        // Redundancy check: a subproblem with zero leftover beyond the cut
        // may be hiding eigenvalues inside it.
        let deficient: Vec<usize> = (0..systems.len())
            .filter(|&i| merged.leftover[i] == 0 && nevs[i] < systems[i].order())
            .collect();
        if deficient.is_empty() {
            return Ok(MergedSpectrum { complete, ..merged });
        }
        if round == opts.max_redundancy_rounds {
            complete = false;
            return Ok(MergedSpectrum { complete, ..merged });
        }
        for i in deficient {
            nevs[i] = (2 * nevs[i]).min(systems[i].order());
        }
    }
    unreachable!()
}

fn mode_for(system: &ReducedSystem, sigma: f64) -> SolveMode {
    if system.b_is_identity {
        SolveMode::Standard
    } else {
        SolveMode::ShiftInvert { sigma }
    }
}

/// Gathers subproblem eigenvalues, replicates each by its irrep dimension
/// with column labels `l = 1..d`, sorts ascending with `(lambda, nu, l)`
/// tie-breaking, and truncates to `N_e` with leftover accounting.
pub fn merge_spectra(subresults: Vec<SubproblemSpectrum>, n_e: usize) -> MergedSpectrum {
    let mut entries: Vec<MergedEntry> = Vec::new();
    for sub in &subresults {
        for (i, &lambda) in sub.eigenvalues.iter().enumerate() {
            for l in 1..=sub.d {
                entries.push(MergedEntry {
                    lambda,
                    nu: sub.nu,
                    l,
                    local_index: i,
                });
            }
        }
    }
    entries.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.nu.cmp(&b.nu))
            .then(a.l.cmp(&b.l))
    });
    let cut = entries.len().min(n_e);
    let kept = entries[..cut].to_vec();
    let mut leftover = vec![0usize; subresults.len()];
    for (si, sub) in subresults.iter().enumerate() {
        let used: std::collections::BTreeSet<usize> = kept
            .iter()
            .filter(|e| e.nu == sub.nu)
            .map(|e| e.local_index)
            .collect();
        leftover[si] = sub.eigenvalues.len() - used.len();
    }
    MergedSpectrum {
        entries: kept,
        n_e,
        complete: true,
        subproblems: subresults,
        leftover,
    }
}

/// Expands a reduced eigenvector to the full grid through the symmetry
/// characteristic `u_l(R x_j) = sum_m Gamma(R)_{lm} u_m(x_j)`.
pub fn lift_eigenvector(
    orbits: &OrbitMap,
    irrep: &Irrep,
    reduced: &[f64],
    l: usize,
) -> Result<GridFunction> {
    let d = irrep.dim;
    let n0 = orbits.orbit_count();
    if reduced.len() != d * n0 {
        return Err(Error::ShapeMismatch(format!(
            "reduced vector of length {} for d*N0 = {}",
            reduced.len(),
            d * n0
        )));
    }
    if l == 0 || l > d {
        return Err(Error::BadIrrepIndex {
            nu: irrep.index,
            m: 1,
            l,
        });
    }
    let mut values = vec![0.0; orbits.node_count()];
    for j in 0..n0 {
        for e in 0..orbits.group_order() {
            let node = orbits.action(e, j);
            let mut acc = 0.0;
            for m in 0..d {
                acc += irrep.entry(e, l - 1, m) * reduced[m * n0 + j];
            }
            values[node] = acc;
        }
    }
    Ok(GridFunction { values })
}
