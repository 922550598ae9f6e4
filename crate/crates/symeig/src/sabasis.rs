//! Explicit symmetry-adapted bases and the exact relation between the two
//! discretization routes.
//!
//! Production solves never build these bases; this module exists to verify
//! that the directly reduced systems coincide with the systems a
//! symmetry-adapted basis would produce: `A_tilde = A / g` for
//! one-dimensional irreps and `Q_l A Q_r = (g/2) A_tilde` for
//! two-dimensional ones, with identical spectra. Dense paths throughout.

use nalgebra::DMatrix;

use crate::assembly::{assemble_full, Discretization, Problem, ReducedSystem};
use crate::dense;
use crate::error::{Error, Result};
use crate::grid::{OrbitMap, SymmetricGrid};
use crate::group::PointGroup;

/// Dense-path guard for the verification routines.
const DENSE_GUARD: usize = 4096;

/// A set of symmetry-adapted basis functions for one (nu, k) symmetry,
/// expressed as nodal coefficient rows (`N' x N`).
#[derive(Debug, Clone)]
pub struct SabSet {
    pub nu: usize,
    pub k: usize,
    /// Row r holds the nodal coefficients of the r-th adapted function.
    pub basis: DMatrix<f64>,
    /// Element chosen as `S` for two-dimensional irreps.
    pub s_elem: Option<usize>,
}

impl SabSet {
    /// Count of adapted functions, `N' = d_nu * N0`.
    pub fn count(&self) -> usize {
        self.basis.nrows()
    }
}

/// Selects the first group element whose `Gamma(S^{-1})` k-th column is
/// linearly independent of the k-th column of `Gamma(E)`.
fn select_s(group: &PointGroup, nu: usize, k: usize) -> Result<usize> {
    let irrep = group.irrep(nu)?;
    let kc = k - 1;
    let e = group.identity_index();
    let col_e: Vec<f64> = (0..irrep.dim).map(|m| irrep.entry(e, m, kc)).collect();
    for s in 0..group.order() {
        let sinv = group.inverse(s);
        let col_s: Vec<f64> = (0..irrep.dim).map(|m| irrep.entry(sinv, m, kc)).collect();
        // 2x2 determinant test for linear independence.
        let det = col_e[0] * col_s[1] - col_e[1] * col_s[0];
        if det.abs() > 1e-9 {
            return Ok(s);
        }
    }
    Err(Error::NoIndependentColumn(nu))
}

/// Builds the symmetry-adapted basis for irrep `nu` (1-based) and column
/// `k`: `P^(nu)_{kk} phi_j` per orbit, plus `P^(nu)_{kk} P_S phi_j` when
/// `d_nu = 2`.
pub fn construct_sab(orbits: &OrbitMap, group: &PointGroup, nu: usize, k: usize) -> Result<SabSet> {
    let irrep = group.irrep(nu)?;
    let d = irrep.dim;
    if d > 2 {
        return Err(Error::UnsupportedIrrepDim(d));
    }
    if k == 0 || k > d {
        return Err(Error::BadIrrepIndex { nu, m: k, l: k });
    }
    let n = orbits.node_count();
    let n0 = orbits.orbit_count();
    let g = group.order();
    let factor = d as f64 / g as f64;
    let kc = k - 1;

    let mut basis = DMatrix::zeros(d * n0, n);
    for j in 0..n0 {
        for e in 0..g {
            basis[(j, orbits.action(e, j))] += factor * irrep.entry(e, kc, kc);
        }
    }
    let mut s_elem = None;
    if d == 2 {
        let s = select_s(group, nu, k)?;
        s_elem = Some(s);
        for j in 0..n0 {
            for e in 0..g {
                // P_kk P_S phi_j = sum_R (d/g) Gamma(R)_kk phi_(RS)(j)
                let target = orbits.action(group.mult(e, s), j);
                basis[(n0 + j, target)] += factor * irrep.entry(e, kc, kc);
            }
        }
    }
    Ok(SabSet {
        nu,
        k,
        basis,
        s_elem,
    })
}

/// Numerical rank of the full projected set
/// `{P^(nu)_{kk} P_R phi_j : R in G, j}`; equals `d_nu * N0` by the basis
/// count theorem.
pub fn rank_of_projected_set(
    orbits: &OrbitMap,
    group: &PointGroup,
    nu: usize,
    k: usize,
) -> Result<usize> {
    let irrep = group.irrep(nu)?;
    let d = irrep.dim;
    if k == 0 || k > d {
        return Err(Error::BadIrrepIndex { nu, m: k, l: k });
    }
    let n = orbits.node_count();
    let n0 = orbits.orbit_count();
    let g = group.order();
    let factor = d as f64 / g as f64;
    let kc = k - 1;
    let mut rows = DMatrix::zeros(g * n0, n);
    for j in 0..n0 {
        for r in 0..g {
            // Coefficient of phi_{T(j)} in P_kk P_R phi_j is
            // (d/g) * Gamma(T R^{-1})_{kk}.
            let rinv = group.inverse(r);
            for t in 0..g {
                let coef = factor * irrep.entry(group.mult(t, rinv), kc, kc);
                basis_add(&mut rows, j * g + r, orbits.action(t, j), coef);
            }
        }
    }
    Ok(numerical_rank(&rows, 1e-10))
}

fn basis_add(m: &mut DMatrix<f64>, r: usize, c: usize, v: f64) {
    m[(r, c)] += v;
}

fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax)
        .count()
}

/// Outcome of the equivalence verification between the directly reduced
/// system and the symmetry-adapted-basis system.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceReport {
    /// Max entrywise deviation of the scaling relation (both A and B).
    pub entry_dev: f64,
    /// Max absolute difference of the sorted spectra.
    pub spectrum_dev: f64,
}

impl EquivalenceReport {
    pub fn max_dev(&self) -> f64 {
        self.entry_dev.max(self.spectrum_dev)
    }
}

/// Assembles the pencil under the adapted basis (`A~_ij = a(Phi_j, Phi_i)`)
/// and checks the exact relation to the reduced system: for `d_nu = 1`,
/// `g * A~ = A`; for `d_nu = 2`, `Q_l A Q_r = (g/2) A~` with `Q_l`, `Q_r`
/// built from `Gamma(S)`. Also compares the two spectra.
pub fn verify_equivalence(
    reduced: &ReducedSystem,
    sab: &SabSet,
    problem: &Problem,
    grid: &SymmetricGrid,
    group: &PointGroup,
    disc: Discretization,
) -> Result<EquivalenceReport> {
    if reduced.nu != sab.nu {
        return Err(Error::ShapeMismatch(format!(
            "reduced system is for irrep {}, basis for irrep {}",
            reduced.nu, sab.nu
        )));
    }
    let n = grid.node_count();
    if n > DENSE_GUARD {
        return Err(Error::SizeGuard {
            n,
            limit: DENSE_GUARD,
        });
    }
    if sab.basis.ncols() != n || reduced.order() != sab.count() {
        return Err(Error::ShapeMismatch(format!(
            "basis {}x{} against a reduced system of order {} on {} nodes",
            sab.count(),
            sab.basis.ncols(),
            reduced.order(),
            n
        )));
    }
    let g = group.order() as f64;
    let irrep = group.irrep(reduced.nu)?;
    let (a_full, b_full) = assemble_full(problem, grid, disc);
    let c = &sab.basis;
    let a_tilde = c * a_full.to_dense() * c.transpose();
    let b_tilde = c * b_full.to_dense() * c.transpose();
    let a_red = reduced.a.to_dense();
    let b_red = reduced.b.to_dense();

    let entry_dev = match reduced.d {
        1 => {
            let da = (&a_tilde * g - &a_red).amax();
            let db = (&b_tilde * g - &b_red).amax();
            da.max(db)
        }
        2 => {
            let s = sab.s_elem.ok_or(Error::NoIndependentColumn(reduced.nu))?;
            let s11 = irrep.entry(s, 0, 0);
            let s12 = irrep.entry(s, 0, 1);
            let n0 = reduced.n0;
            let mut ql = DMatrix::zeros(2 * n0, 2 * n0);
            let mut qr = DMatrix::zeros(2 * n0, 2 * n0);
            for i in 0..n0 {
                ql[(i, i)] = 1.0;
                ql[(n0 + i, i)] = s11;
                ql[(n0 + i, n0 + i)] = s12;
                qr[(i, i)] = 1.0;
                qr[(i, n0 + i)] = s11;
                qr[(n0 + i, n0 + i)] = s12;
            }
            let da = (&ql * &a_red * &qr - &a_tilde * (g / 2.0)).amax();
            let db = (&ql * &b_red * &qr - &b_tilde * (g / 2.0)).amax();
            da.max(db)
        }
        d => return Err(Error::UnsupportedIrrepDim(d)),
    };

    let (vals_red, _) = dense::generalized_eigen(&a_red, &b_red)?;
    let (vals_sab, _) = dense::generalized_eigen(&a_tilde, &b_tilde)?;
    let spectrum_dev = vals_red
        .iter()
        .zip(&vals_sab)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    Ok(EquivalenceReport {
        entry_dev,
        spectrum_dev,
    })
}
