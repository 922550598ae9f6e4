//! Operator discretization (second-order finite differences or multilinear
//! Q1 finite elements) and assembly of the full and symmetry-reduced sparse
//! systems.
//!
//! The reduced system for irrep `nu` folds the full coupling coefficients
//! over the group: for one-dimensional irreps
//! `A_ij = sum_R Gamma(R) a_{i,R(j)}`, and for two-dimensional irreps the
//! four `N0 x N0` blocks `A_[ml]ij = sum_R Gamma(R)_{ml} a_{i,R(j)}` are
//! stored as one sparse matrix of order `2 N0`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{OrbitMap, SymmetricGrid};
use crate::group::{Irrep, PointGroup};
use crate::sparse::{SparseBuilder, SparseSym};

/// Tolerance for the potential-symmetry assertion `V(Rx) = V(x)`.
const POTENTIAL_SYM_TOL: f64 = 1e-10;

pub type Potential = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `-Delta u = lambda u`
    Laplacian,
    /// `-1/2 Delta u + V u = lambda u`
    Schrodinger,
}

/// Continuous eigenvalue problem on `(-a, a)^dim` with zero boundary.
#[derive(Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    potential: Option<Potential>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem").field("kind", &self.kind).finish()
    }
}

impl Problem {
    pub fn laplacian() -> Self {
        Problem {
            kind: ProblemKind::Laplacian,
            potential: None,
        }
    }

    pub fn schrodinger(potential: Potential) -> Self {
        Problem {
            kind: ProblemKind::Schrodinger,
            potential: Some(potential),
        }
    }

    /// `-1/2 Delta + 1/2 |x|^2`.
    pub fn harmonic_oscillator() -> Self {
        Problem::schrodinger(Arc::new(|p: [f64; 3]| {
            0.5 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        }))
    }

    pub fn potential_at(&self, p: [f64; 3]) -> f64 {
        match &self.potential {
            Some(v) => v(p),
            None => 0.0,
        }
    }

    /// Factor in front of the stiffness/Laplacian part.
    fn kinetic_factor(&self) -> f64 {
        match self.kind {
            ProblemKind::Laplacian => 1.0,
            ProblemKind::Schrodinger => 0.5,
        }
    }

    /// Asserts `V(R x) = V(x)` at every node; the decomposition requires the
    /// operator to commute with the group action.
    pub fn check_symmetric_potential(
        &self,
        grid: &SymmetricGrid,
        group: &PointGroup,
    ) -> Result<()> {
        if self.potential.is_none() {
            return Ok(());
        }
        for op in group.elements() {
            for i in 0..grid.node_count() {
                let p = grid.node(i);
                let v = self.potential_at(p);
                let vr = self.potential_at(op.apply(p));
                if (v - vr).abs() > POTENTIAL_SYM_TOL * (1.0 + v.abs()) {
                    return Err(Error::IncompatibleGrid(format!(
                        "potential is not invariant under `{}` at node {i}",
                        op.label
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Second-order central differences; `B = I`.
    Fd2,
    /// Multilinear (Q1) finite elements; generalized pencil `(A, B)`.
    Q1Fe,
}

impl Discretization {
    pub fn name(&self) -> &'static str {
        match self {
            Discretization::Fd2 => "fd2",
            Discretization::Q1Fe => "q1fe",
        }
    }
}

/// Interior coupling stencil on a uniform grid: offset -> (a, b) weights.
/// Rows of interior nodes all share it because boundary basis functions are
/// eliminated by the zero boundary condition.
struct Stencil {
    entries: Vec<([i64; 3], f64, f64)>,
    /// Weight of the lumped nodal quadrature for the potential term.
    potential_weight: f64,
    b_is_identity: bool,
}

fn stencil(problem: &Problem, grid: &SymmetricGrid, disc: Discretization) -> Stencil {
    let dim = grid.dim();
    let kin = problem.kinetic_factor();
    match disc {
        Discretization::Fd2 => {
            let mut entries = Vec::new();
            let mut center = 0.0;
            for a in 0..dim {
                let h = grid.spacing(a);
                center += kin * 2.0 / (h * h);
                let mut plus = [0i64; 3];
                plus[a] = 1;
                let mut minus = [0i64; 3];
                minus[a] = -1;
                entries.push((plus, -kin / (h * h), 0.0));
                entries.push((minus, -kin / (h * h), 0.0));
            }
            entries.push(([0; 3], center, 1.0));
            Stencil {
                entries,
                potential_weight: 1.0,
                b_is_identity: true,
            }
        }
        Discretization::Q1Fe => {
            // Assembled 1D tensor factors for interior rows:
            // stiffness 2/h, -1/h; mass 2h/3, h/6.
            let k1 = |h: f64, d: i64| if d == 0 { 2.0 / h } else { -1.0 / h };
            let m1 = |h: f64, d: i64| if d == 0 { 2.0 * h / 3.0 } else { h / 6.0 };
            let mut entries = Vec::new();
            let deltas: Vec<i64> = vec![-1, 0, 1];
            let mut offsets = vec![[0i64; 3]];
            for a in 0..dim {
                let mut next = Vec::new();
                for off in &offsets {
                    for &d in &deltas {
                        let mut o = *off;
                        o[a] = d;
                        next.push(o);
                    }
                }
                offsets = next;
            }
            let mut volume = 1.0;
            for a in 0..dim {
                volume *= grid.spacing(a);
            }
            for off in offsets {
                let mut mass = 1.0;
                for a in 0..dim {
                    mass *= m1(grid.spacing(a), off[a]);
                }
                let mut stiff = 0.0;
                for a in 0..dim {
                    let mut term = k1(grid.spacing(a), off[a]);
                    for b in 0..dim {
                        if b != a {
                            term *= m1(grid.spacing(b), off[b]);
                        }
                    }
                    stiff += term;
                }
                entries.push((off, kin * stiff, mass));
            }
            Stencil {
                entries,
                potential_weight: volume,
                b_is_identity: false,
            }
        }
    }
}

/// Neighbor lookup in index space; `None` when the neighbor is a boundary
/// (eliminated) node.
fn neighbor(grid: &SymmetricGrid, k: [usize; 3], off: [i64; 3]) -> Option<usize> {
    let c = grid.interior_counts();
    let mut kk = [0usize; 3];
    for a in 0..grid.dim() {
        let t = k[a] as i64 + off[a];
        if t < 0 || t >= c[a] as i64 {
            return None;
        }
        kk[a] = t as usize;
    }
    Some(grid.index_of(kk))
}

/// Assembles the full `N x N` pencil `(A, B)`.
pub fn assemble_full(
    problem: &Problem,
    grid: &SymmetricGrid,
    disc: Discretization,
) -> (SparseSym, SparseSym) {
    let st = stencil(problem, grid, disc);
    let n = grid.node_count();
    let mut a = SparseBuilder::new(n);
    let mut b = SparseBuilder::new(n);
    for i in 0..n {
        let k = grid.axis_indices(i);
        for &(off, av, bv) in &st.entries {
            if let Some(j) = neighbor(grid, k, off) {
                a.add(i, j, av);
                if !st.b_is_identity {
                    b.add(i, j, bv);
                }
            }
        }
        let v = problem.potential_at(grid.node(i));
        if v != 0.0 {
            a.add(i, i, v * st.potential_weight);
        }
    }
    let b = if st.b_is_identity {
        SparseSym::identity(n)
    } else {
        b.build()
    };
    (a.build(), b)
}

/// One irrep's reduced system: sparse pencil of order `d_nu * N0`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// 1-based irrep label.
    pub nu: usize,
    pub d: usize,
    pub n0: usize,
    pub a: SparseSym,
    pub b: SparseSym,
    pub b_is_identity: bool,
}

impl ReducedSystem {
    pub fn order(&self) -> usize {
        self.d * self.n0
    }
}

/// Assembles the reduced system for irrep `nu` (1-based) directly from the
/// stencil, without forming the full matrix. Row `i` runs over orbit
/// representatives; every full coupling `(rep_i, node)` folds into column
/// `j = orbit(node)` with weight `Gamma(R)_{ml}` where `(R, j)` inverts the
/// node.
pub fn assemble_reduced(
    problem: &Problem,
    grid: &SymmetricGrid,
    orbits: &OrbitMap,
    group: &PointGroup,
    nu: usize,
    disc: Discretization,
) -> Result<ReducedSystem> {
    let irrep = group.irrep(nu)?;
    let d = irrep.dim;
    if d > 2 {
        return Err(Error::UnsupportedIrrepDim(d));
    }
    problem.check_symmetric_potential(grid, group)?;
    let st = stencil(problem, grid, disc);
    let n0 = orbits.orbit_count();
    let mut a = SparseBuilder::new(d * n0);
    let mut b = SparseBuilder::new(d * n0);
    for i in 0..n0 {
        let gi = orbits.rep(i);
        let k = grid.axis_indices(gi);
        let vpot = problem.potential_at(grid.node(gi)) * st.potential_weight;
        for &(off, av, bv) in &st.entries {
            let Some(gn) = neighbor(grid, k, off) else {
                continue;
            };
            let (e, j) = orbits.inverse(gn);
            let diag_extra = if off == [0; 3] { vpot } else { 0.0 };
            for m in 0..d {
                for l in 0..d {
                    let gamma = irrep.entry(e, m, l);
                    if gamma == 0.0 {
                        continue;
                    }
                    a.add(m * n0 + i, l * n0 + j, gamma * (av + diag_extra));
                    if !st.b_is_identity {
                        b.add(m * n0 + i, l * n0 + j, gamma * bv);
                    }
                }
            }
        }
    }
    let b = if st.b_is_identity {
        SparseSym::identity(d * n0)
    } else {
        b.build()
    };
    Ok(ReducedSystem {
        nu,
        d,
        n0,
        a: a.build(),
        b,
        b_is_identity: st.b_is_identity,
    })
}

/// Oracle path: evaluates the reduction literally from full-matrix entries,
/// `A_[ml]ij = sum_R Gamma(R)_{ml} A_full[rep(i), action(R, j)]`. Dense
/// loops; intended for tests on dense-feasible grids.
pub fn reduced_from_full(
    a_full: &SparseSym,
    b_full: &SparseSym,
    orbits: &OrbitMap,
    irrep: &Irrep,
) -> Result<ReducedSystem> {
    let d = irrep.dim;
    if d > 2 {
        return Err(Error::UnsupportedIrrepDim(d));
    }
    if a_full.order() != orbits.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "full matrix order {} vs {} grid nodes",
            a_full.order(),
            orbits.node_count()
        )));
    }
    let n0 = orbits.orbit_count();
    let g = orbits.group_order();
    let mut a = SparseBuilder::new(d * n0);
    let mut b = SparseBuilder::new(d * n0);
    let mut b_is_identity = true;
    for i in 0..n0 {
        let gi = orbits.rep(i);
        for j in 0..n0 {
            for e in 0..g {
                let gn = orbits.action(e, j);
                let av = a_full.get(gi, gn);
                let bv = b_full.get(gi, gn);
                if av == 0.0 && bv == 0.0 {
                    continue;
                }
                for m in 0..d {
                    for l in 0..d {
                        let gamma = irrep.entry(e, m, l);
                        if gamma == 0.0 {
                            continue;
                        }
                        a.add(m * n0 + i, l * n0 + j, gamma * av);
                        b.add(m * n0 + i, l * n0 + j, gamma * bv);
                    }
                }
            }
        }
    }
    let b = b.build();
    if !b.is_identity() {
        b_is_identity = false;
    }
    Ok(ReducedSystem {
        nu: irrep.index,
        d,
        n0,
        a: a.build(),
        b,
        b_is_identity,
    })
}
