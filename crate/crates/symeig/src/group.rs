//! Finite point groups, their irreducible representations, and the
//! projection-operator algebra.
//!
//! A [`PointGroup`] bundles orthogonal coordinate transformations with a
//! multiplication table (computed once by matrix matching) and a set of real
//! irreducible representation matrices. Five groups are built in; arbitrary
//! groups can be loaded from a plain-text definition file (see
//! [`PointGroup::from_definition_str`]).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, OrbitMap};

/// Tolerance used when matching a product matrix against the element list.
pub const MULT_MATCH_TOL: f64 = 1e-9;
/// Tolerance for exact structural checks (orthogonality, homomorphism).
pub const EXACT_TOL: f64 = 1e-12;

/// Names of the built-in groups accepted by [`builtin_group`].
pub const BUILTIN_GROUP_NAMES: [&str; 5] = ["EXAMPLE2D", "D2", "D2H", "D4", "D2D"];

/// One orthogonal coordinate transformation, acting on points as `p -> M p`.
///
/// The matrix is stored 3x3; for 2-dimensional groups the third axis is
/// padded with the identity and never touched by grid code.
#[derive(Debug, Clone)]
pub struct SymmetryOperation {
    pub label: String,
    dim: usize,
    mat: [[f64; 3]; 3],
}

impl SymmetryOperation {
    /// Builds an operation from a row-major `dim*dim` slice.
    pub fn new(label: &str, dim: usize, rows: &[f64]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::GroupDefinition(format!(
                "operation `{label}`: dimension must be 2 or 3, got {dim}"
            )));
        }
        if rows.len() != dim * dim {
            return Err(Error::GroupDefinition(format!(
                "operation `{label}`: expected {} entries, got {}",
                dim * dim,
                rows.len()
            )));
        }
        let mut mat = [[0.0; 3]; 3];
        mat[2][2] = 1.0;
        for i in 0..dim {
            for j in 0..dim {
                mat[i][j] = rows[i * dim + j];
            }
        }
        let op = SymmetryOperation {
            label: label.to_string(),
            dim,
            mat,
        };
        if op.orthogonality_deviation() > MULT_MATCH_TOL {
            return Err(Error::GroupDefinition(format!(
                "operation `{label}` is not orthogonal (deviation {:.3e})",
                op.orthogonality_deviation()
            )));
        }
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Applies the transformation to a (padded) point.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.mat[i][0] * p[0] + self.mat[i][1] * p[1] + self.mat[i][2] * p[2];
        }
        out
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat[i][j]
    }

    /// The `dim x dim` matrix as a dense nalgebra matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.mat[i][j])
    }

    pub fn det(&self) -> f64 {
        self.matrix().determinant()
    }

    /// Max-abs deviation of `M^T M` from the identity.
    pub fn orthogonality_deviation(&self) -> f64 {
        let m = self.matrix();
        let d = m.transpose() * &m - DMatrix::identity(self.dim, self.dim);
        d.amax()
    }

    fn matches(&self, mat: &[[f64; 3]; 3], tol: f64) -> bool {
        for i in 0..3 {
            for j in 0..3 {
                if (self.mat[i][j] - mat[i][j]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    fn compose(&self, rhs: &SymmetryOperation) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] += self.mat[i][k] * rhs.mat[k][j];
                }
            }
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        let mut id = [[0.0; 3]; 3];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        self.matches(&id, MULT_MATCH_TOL)
    }

    /// Orthonormal basis of the fixed subspace `{x : M x = x}` (columns),
    /// from the null space of `M - I`. Empty for operations that fix only
    /// the origin.
    pub fn fixed_space_basis(&self) -> DMatrix<f64> {
        let m = self.matrix() - DMatrix::identity(self.dim, self.dim);
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("SVD with V requested");
        let null_dirs: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &sv)| sv < MULT_MATCH_TOL)
            .map(|(k, _)| k)
            .collect();
        let mut basis = DMatrix::zeros(self.dim, null_dirs.len());
        for (c, &k) in null_dirs.iter().enumerate() {
            for j in 0..self.dim {
                basis[(j, c)] = v_t[(k, j)];
            }
        }
        basis
    }

    /// Distance from `p` to the fixed-point set of this operation (the
    /// symmetry element). The identity fixes everything.
    pub fn fixed_set_distance(&self, p: [f64; 3]) -> f64 {
        if self.is_identity() {
            return 0.0;
        }
        distance_to_span(&self.fixed_space_basis(), &p[..self.dim])
    }
}

/// Distance from a point to the span of the given orthonormal columns.
pub(crate) fn distance_to_span(basis: &DMatrix<f64>, p: &[f64]) -> f64 {
    let mut residual = p.to_vec();
    for c in 0..basis.ncols() {
        let dot: f64 = (0..p.len()).map(|j| residual[j] * basis[(j, c)]).sum();
        for j in 0..p.len() {
            residual[j] -= dot * basis[(j, c)];
        }
    }
    residual.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One real irreducible unitary representation: a matrix per group element.
#[derive(Debug, Clone)]
pub struct Irrep {
    /// 1-based irrep label, as used in the nu-l output labels.
    pub index: usize,
    pub dim: usize,
    mats: Vec<DMatrix<f64>>,
}

impl Irrep {
    pub fn new(index: usize, dim: usize, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        for (e, m) in mats.iter().enumerate() {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::GroupDefinition(format!(
                    "irrep {index}: matrix for element {e} has wrong shape"
                )));
            }
        }
        Ok(Irrep { index, dim, mats })
    }

    /// 1x1 irrep from a character row.
    pub fn from_characters(index: usize, chars: &[f64]) -> Self {
        let mats = chars
            .iter()
            .map(|&c| DMatrix::from_element(1, 1, c))
            .collect();
        Irrep {
            index,
            dim: 1,
            mats,
        }
    }

    pub fn mat(&self, elem: usize) -> &DMatrix<f64> {
        &self.mats[elem]
    }

    /// Entry `Gamma(R_elem)_{m,l}` with 0-based `m`, `l`.
    pub fn entry(&self, elem: usize, m: usize, l: usize) -> f64 {
        self.mats[elem][(m, l)]
    }

    pub fn character(&self, elem: usize) -> f64 {
        self.mats[elem].trace()
    }
}

/// A finite point group with its multiplication table and irreps.
#[derive(Debug, Clone)]
pub struct PointGroup {
    pub name: String,
    dim: usize,
    elements: Vec<SymmetryOperation>,
    irreps: Vec<Irrep>,
    mult: Vec<Vec<usize>>,
    inv: Vec<usize>,
    identity: usize,
}

impl PointGroup {
    /// Assembles a group, computing the multiplication table by matching
    /// products against the element list (tolerance [`MULT_MATCH_TOL`]).
    ///
    /// Fails when the set is not closed, has no identity, lacks inverses, or
    /// when the irrep list is structurally inconsistent. Axiom quality checks
    /// beyond construction live in [`verify_group_axioms`].
    pub fn new(
        name: &str,
        dim: usize,
        elements: Vec<SymmetryOperation>,
        irreps: Vec<Irrep>,
    ) -> Result<Self> {
        let g = elements.len();
        if g == 0 {
            return Err(Error::GroupDefinition("empty element list".into()));
        }
        for op in &elements {
            if op.dim() != dim {
                return Err(Error::GroupDefinition(format!(
                    "element `{}` has dimension {} but the group is {dim}-dimensional",
                    op.label,
                    op.dim()
                )));
            }
        }
        let mut mult = vec![vec![0usize; g]; g];
        for i in 0..g {
            for j in 0..g {
                let prod = elements[i].compose(&elements[j]);
                let k = elements
                    .iter()
                    .position(|e| e.matches(&prod, MULT_MATCH_TOL))
                    .ok_or_else(|| {
                        Error::GroupDefinition(format!(
                            "not closed: {} * {} is not in the element list",
                            elements[i].label, elements[j].label
                        ))
                    })?;
                mult[i][j] = k;
            }
        }
        let identity = elements
            .iter()
            .position(|e| e.is_identity())
            .ok_or_else(|| Error::GroupDefinition("no identity element".into()))?;
        let mut inv = vec![usize::MAX; g];
        for i in 0..g {
            let j = (0..g).find(|&j| mult[i][j] == identity).ok_or_else(|| {
                Error::GroupDefinition(format!("element `{}` has no inverse", elements[i].label))
            })?;
            inv[i] = j;
        }
        for irrep in &irreps {
            if irrep.mats.len() != g {
                return Err(Error::GroupDefinition(format!(
                    "irrep {} has {} matrices for {} elements",
                    irrep.index,
                    irrep.mats.len(),
                    g
                )));
            }
        }
        Ok(PointGroup {
            name: name.to_string(),
            dim,
            elements,
            irreps,
            mult,
            inv,
            identity,
        })
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of irreps, `n_c`.
    pub fn n_irreps(&self) -> usize {
        self.irreps.len()
    }

    /// Number of subproblems, `n_sub = sum(d_nu)`.
    pub fn n_sub(&self) -> usize {
        self.irreps.iter().map(|ir| ir.dim).sum()
    }

    pub fn elements(&self) -> &[SymmetryOperation] {
        &self.elements
    }

    pub fn irreps(&self) -> &[Irrep] {
        &self.irreps
    }

    /// Irrep by 1-based label.
    pub fn irrep(&self, nu: usize) -> Result<&Irrep> {
        self.irreps
            .get(nu.wrapping_sub(1))
            .ok_or(Error::BadIrrepIndex { nu, m: 1, l: 1 })
    }

    pub fn mult(&self, i: usize, j: usize) -> usize {
        self.mult[i][j]
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inv[i]
    }

    pub fn identity_index(&self) -> usize {
        self.identity
    }
}

/// Per-axiom validation report for a point group.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub closure: bool,
    pub identity: bool,
    pub inverses: bool,
    pub associativity: bool,
    /// `sum(d_nu^2) == g`
    pub celebrated_sum: bool,
    /// Max deviation of `Gamma(R) Gamma(S) - Gamma(RS)` over all irreps and pairs.
    pub homomorphism_dev: f64,
    /// Max deviation of `M^T M - I` over all operation matrices.
    pub operation_orthogonality_dev: f64,
    /// Max deviation of `Gamma^T Gamma - I` over all irrep matrices.
    pub irrep_orthogonality_dev: f64,
    /// `Gamma(E) == I` for every irrep.
    pub identity_representation: bool,
    pub failures: Vec<String>,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.closure
            && self.identity
            && self.inverses
            && self.associativity
            && self.celebrated_sum
            && self.identity_representation
            && self.homomorphism_dev <= EXACT_TOL
            && self.operation_orthogonality_dev <= EXACT_TOL
            && self.irrep_orthogonality_dev <= EXACT_TOL
    }
}

/// Re-derives the group structure from the raw matrices and reports each
/// axiom separately. Works on arbitrary element/irrep lists so that broken
/// inputs can be diagnosed without constructing a [`PointGroup`].
pub fn verify_axiom_set(elements: &[SymmetryOperation], irreps: &[Irrep]) -> AxiomReport {
    let g = elements.len();
    let mut failures = Vec::new();

    let mut op_orth_dev: f64 = 0.0;
    for e in elements {
        op_orth_dev = op_orth_dev.max(e.orthogonality_deviation());
    }
    if op_orth_dev > EXACT_TOL {
        failures.push(format!(
            "operation matrices deviate from orthogonality by {op_orth_dev:.3e}"
        ));
    }

    // Multiplication table by matching, with failures recorded.
    let mut table = vec![vec![None; g]; g];
    let mut closure = true;
    for i in 0..g {
        for j in 0..g {
            let prod = elements[i].compose(&elements[j]);
            match elements
                .iter()
                .position(|e| e.matches(&prod, MULT_MATCH_TOL))
            {
                Some(k) => table[i][j] = Some(k),
                None => {
                    closure = false;
                    failures.push(format!(
                        "closure: {} * {} not found in element list",
                        elements[i].label, elements[j].label
                    ));
                }
            }
        }
    }

    let identity_idx = elements.iter().position(|e| e.is_identity());
    let identity = identity_idx.is_some();
    if !identity {
        failures.push("no identity element".into());
    }

    let mut inverses = identity;
    if let Some(id) = identity_idx {
        for i in 0..g {
            let found = (0..g).any(|j| table[i][j] == Some(id));
            if !found {
                inverses = false;
                failures.push(format!("element `{}` has no inverse", elements[i].label));
            }
        }
    }

    // Associativity via table consistency: (ij)k == i(jk) whenever defined.
    let mut associativity = true;
    'assoc: for i in 0..g {
        for j in 0..g {
            for k in 0..g {
                let left = table[i][j].and_then(|ij| table[ij][k]);
                let right = table[j][k].and_then(|jk| table[i][jk]);
                if left.is_some() && right.is_some() && left != right {
                    associativity = false;
                    failures.push(format!(
                        "associativity fails at ({}, {}, {})",
                        elements[i].label, elements[j].label, elements[k].label
                    ));
                    break 'assoc;
                }
            }
        }
    }

    let dsum: usize = irreps.iter().map(|ir| ir.dim * ir.dim).sum();
    let celebrated_sum = dsum == g;
    if !celebrated_sum {
        failures.push(format!(
            "sum of squared irrep dimensions is {dsum}, expected {g}"
        ));
    }

    let mut irrep_orth_dev: f64 = 0.0;
    let mut identity_representation = true;
    for ir in irreps {
        for m in &ir.mats {
            let d = (m.transpose() * m - DMatrix::identity(ir.dim, ir.dim)).amax();
            irrep_orth_dev = irrep_orth_dev.max(d);
        }
        if let Some(id) = identity_idx {
            let dev = (ir.mat(id) - DMatrix::identity(ir.dim, ir.dim)).amax();
            if dev > EXACT_TOL {
                identity_representation = false;
                failures.push(format!("irrep {}: Gamma(E) != I (dev {dev:.3e})", ir.index));
            }
        }
    }

    let mut homomorphism_dev: f64 = 0.0;
    for ir in irreps {
        for i in 0..g {
            for j in 0..g {
                if let Some(k) = table[i][j] {
                    let dev = (ir.mat(i) * ir.mat(j) - ir.mat(k)).amax();
                    homomorphism_dev = homomorphism_dev.max(dev);
                }
            }
        }
    }
    if homomorphism_dev > EXACT_TOL {
        failures.push(format!(
            "irrep homomorphism deviates by {homomorphism_dev:.3e}"
        ));
    }

    AxiomReport {
        closure,
        identity,
        inverses,
        associativity,
        celebrated_sum,
        homomorphism_dev,
        operation_orthogonality_dev: op_orth_dev,
        irrep_orthogonality_dev: irrep_orth_dev,
        identity_representation,
        failures,
    }
}

/// Axiom report for an assembled group.
pub fn verify_group_axioms(group: &PointGroup) -> AxiomReport {
    verify_axiom_set(&group.elements, &group.irreps)
}

/// Max deviation of the great-orthogonality sums from their Kronecker
/// pattern: `sum_R Gamma^(nu)(R)_{ml} Gamma^(nu')(R)_{m'l'}` must equal
/// `delta delta delta * g / d_nu`.
pub fn verify_great_orthogonality(group: &PointGroup) -> f64 {
    let g = group.order() as f64;
    let mut max_dev: f64 = 0.0;
    for a in group.irreps() {
        for b in group.irreps() {
            for m in 0..a.dim {
                for l in 0..a.dim {
                    for mp in 0..b.dim {
                        for lp in 0..b.dim {
                            let mut sum = 0.0;
                            for e in 0..group.order() {
                                sum += a.entry(e, m, l) * b.entry(e, mp, lp);
                            }
                            let expected = if a.index == b.index && m == mp && l == lp {
                                g / a.dim as f64
                            } else {
                                0.0
                            };
                            max_dev = max_dev.max((sum - expected).abs());
                        }
                    }
                }
            }
        }
    }
    max_dev
}

/// Coefficients of the projection operator `P^(nu)_{ml}` expanded over the
/// group elements: `coeffs[R] = (d_nu / g) * Gamma^(nu)(R)_{ml}`.
///
/// All shipped tables are real, so the conjugation in the definition is the
/// identity.
#[derive(Debug, Clone)]
pub struct ProjectorCoefficients {
    pub nu: usize,
    pub m: usize,
    pub l: usize,
    pub coeffs: Vec<f64>,
}

/// Builds projector coefficients for irrep `nu` and 1-based row/column
/// indices `m`, `l`.
pub fn projector_coefficients(
    group: &PointGroup,
    nu: usize,
    m: usize,
    l: usize,
) -> Result<ProjectorCoefficients> {
    let irrep = group
        .irreps
        .get(nu.wrapping_sub(1))
        .ok_or(Error::BadIrrepIndex { nu, m, l })?;
    if m == 0 || l == 0 || m > irrep.dim || l > irrep.dim {
        return Err(Error::BadIrrepIndex { nu, m, l });
    }
    let factor = irrep.dim as f64 / group.order() as f64;
    let coeffs = (0..group.order())
        .map(|e| factor * irrep.entry(e, m - 1, l - 1))
        .collect();
    Ok(ProjectorCoefficients { nu, m, l, coeffs })
}

/// Applies the projection operator to a grid function, nodewise:
/// `(P f)(x) = sum_R coeffs[R] * f(R^{-1} x)`, with `R^{-1} x` resolved
/// through the orbit map's node permutations.
pub fn apply_projector(
    coeffs: &ProjectorCoefficients,
    f: &GridFunction,
    orbits: &OrbitMap,
) -> Result<GridFunction> {
    let n = orbits.node_count();
    if f.values.len() != n {
        return Err(Error::IncompatibleGrid(format!(
            "grid function has {} values but the orbit map covers {} nodes",
            f.values.len(),
            n
        )));
    }
    if coeffs.coeffs.len() != orbits.group_order() {
        return Err(Error::IncompatibleGrid(format!(
            "projector over {} elements applied to an orbit map of order {}",
            coeffs.coeffs.len(),
            orbits.group_order()
        )));
    }
    let mut out = vec![0.0; n];
    for e in 0..orbits.group_order() {
        let c = coeffs.coeffs[e];
        if c == 0.0 {
            continue;
        }
        let perm = orbits.node_permutation(orbits.inverse_element(e));
        for (i, val) in out.iter_mut().enumerate() {
            *val += c * f.values[perm[i]];
        }
    }
    Ok(GridFunction { values: out })
}

fn diag3(a: f64, b: f64, c: f64) -> [f64; 9] {
    [a, 0.0, 0.0, 0.0, b, 0.0, 0.0, 0.0, c]
}

fn op3(label: &str, rows: [f64; 9]) -> SymmetryOperation {
    SymmetryOperation::new(label, 3, &rows).expect("builtin operation")
}

fn op2(label: &str, rows: [f64; 4]) -> SymmetryOperation {
    SymmetryOperation::new(label, 2, &rows).expect("builtin operation")
}

fn irrep2(index: usize, mats: &[[f64; 4]]) -> Irrep {
    let ms = mats
        .iter()
        .map(|r| DMatrix::from_row_slice(2, 2, r))
        .collect();
    Irrep::new(index, 2, ms).expect("builtin irrep")
}

// 2x2 blocks used by the two-dimensional irreps of D4 and D2d.
const S1: [f64; 4] = [1.0, 0.0, 0.0, 1.0];
const S2: [f64; 4] = [-1.0, 0.0, 0.0, -1.0];
const S3: [f64; 4] = [0.0, -1.0, 1.0, 0.0];
const S4: [f64; 4] = [0.0, 1.0, -1.0, 0.0];
const S5: [f64; 4] = [1.0, 0.0, 0.0, -1.0];
const S6: [f64; 4] = [-1.0, 0.0, 0.0, 1.0];
const S7: [f64; 4] = [0.0, 1.0, 1.0, 0.0];
const S8: [f64; 4] = [0.0, -1.0, -1.0, 0.0];

fn neg(m: [f64; 4]) -> [f64; 4] {
    [-m[0], -m[1], -m[2], -m[3]]
}

/// Returns one of the built-in groups: `EXAMPLE2D`, `D2`, `D2H`, `D4`, `D2D`
/// (case-insensitive).
///
/// Axis conventions: `C4y` rotates the x-axis onto the z-axis; `c` and `d`
/// are the diagonal two-fold axes `(1,0,1)/sqrt(2)` and `(-1,0,1)/sqrt(2)`
/// in the x-z plane; `e` and `f` are realized as the y and z coordinate
/// axes so that every symmetry element of every shipped group lies on a
/// coordinate axis or plane and odd-partition tensor grids carry no node on
/// any of them.
pub fn builtin_group(name: &str) -> Result<PointGroup> {
    let canon = name.trim().to_ascii_uppercase();
    match canon.as_str() {
        "EXAMPLE2D" => {
            let elements = vec![
                op2("E", [1.0, 0.0, 0.0, 1.0]),
                op2("sx", [1.0, 0.0, 0.0, -1.0]),
                op2("sy", [-1.0, 0.0, 0.0, 1.0]),
                op2("I", [-1.0, 0.0, 0.0, -1.0]),
            ];
            let irreps = vec![
                Irrep::from_characters(1, &[1.0, 1.0, 1.0, 1.0]),
                Irrep::from_characters(2, &[1.0, 1.0, -1.0, -1.0]),
                Irrep::from_characters(3, &[1.0, -1.0, -1.0, 1.0]),
                Irrep::from_characters(4, &[1.0, -1.0, 1.0, -1.0]),
            ];
            PointGroup::new("EXAMPLE2D", 2, elements, irreps)
        }
        "D2" => {
            let elements = vec![
                op3("E", diag3(1.0, 1.0, 1.0)),
                op3("C2x", diag3(1.0, -1.0, -1.0)),
                op3("C2y", diag3(-1.0, 1.0, -1.0)),
                op3("C2z", diag3(-1.0, -1.0, 1.0)),
            ];
            let irreps = vec![
                Irrep::from_characters(1, &[1.0, 1.0, 1.0, 1.0]),
                Irrep::from_characters(2, &[1.0, 1.0, -1.0, -1.0]),
                Irrep::from_characters(3, &[1.0, -1.0, 1.0, -1.0]),
                Irrep::from_characters(4, &[1.0, -1.0, -1.0, 1.0]),
            ];
            PointGroup::new("D2", 3, elements, irreps)
        }
        "D2H" => {
            let elements = vec![
                op3("E", diag3(1.0, 1.0, 1.0)),
                op3("C2x", diag3(1.0, -1.0, -1.0)),
                op3("C2e", diag3(-1.0, 1.0, -1.0)),
                op3("C2f", diag3(-1.0, -1.0, 1.0)),
                op3("I", diag3(-1.0, -1.0, -1.0)),
                op3("IC2x", diag3(-1.0, 1.0, 1.0)),
                op3("IC2e", diag3(1.0, -1.0, 1.0)),
                op3("IC2f", diag3(1.0, 1.0, -1.0)),
            ];
            let rows: [[f64; 8]; 8] = [
                [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
                [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
                [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
                [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
                [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
                [1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0],
                [1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0],
                [1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0],
            ];
            let irreps = rows
                .iter()
                .enumerate()
                .map(|(k, r)| Irrep::from_characters(k + 1, r))
                .collect();
            PointGroup::new("D2H", 3, elements, irreps)
        }
        "D4" => {
            let elements = d4_like_elements(false);
            let mut irreps = d4_like_one_dim_irreps();
            irreps.push(irrep2(5, &[S1, S2, S3, S4, S5, S6, S7, S8]));
            PointGroup::new("D4", 3, elements, irreps)
        }
        "D2D" => {
            let elements = d4_like_elements(true);
            let mut irreps = d4_like_one_dim_irreps();
            irreps.push(irrep2(
                5,
                &[S1, S2, neg(S3), neg(S4), neg(S5), neg(S6), S7, S8],
            ));
            PointGroup::new("D2D", 3, elements, irreps)
        }
        _ => Err(Error::UnknownGroup(name.to_string())),
    }
}

/// Element lists of D4 and D2d in table order. D2d replaces the four
/// operations `C4y, C4y^-1, C2x, C2z` by their products with the inversion.
fn d4_like_elements(improper: bool) -> Vec<SymmetryOperation> {
    let c4y = [0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    let c4y_inv = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
    let c2c = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0];
    let c2d = [0.0, 0.0, -1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 0.0];
    let flip = |m: [f64; 9]| -> [f64; 9] {
        let mut out = m;
        for v in out.iter_mut() {
            *v = -*v;
        }
        out
    };
    if improper {
        vec![
            op3("E", diag3(1.0, 1.0, 1.0)),
            op3("C2y", diag3(-1.0, 1.0, -1.0)),
            op3("IC4y", flip(c4y)),
            op3("IC4y^-1", flip(c4y_inv)),
            op3("IC2x", diag3(-1.0, 1.0, 1.0)),
            op3("IC2z", diag3(1.0, 1.0, -1.0)),
            op3("C2c", c2c),
            op3("C2d", c2d),
        ]
    } else {
        vec![
            op3("E", diag3(1.0, 1.0, 1.0)),
            op3("C2y", diag3(-1.0, 1.0, -1.0)),
            op3("C4y", c4y),
            op3("C4y^-1", c4y_inv),
            op3("C2x", diag3(1.0, -1.0, -1.0)),
            op3("C2z", diag3(-1.0, -1.0, 1.0)),
            op3("C2c", c2c),
            op3("C2d", c2d),
        ]
    }
}

fn d4_like_one_dim_irreps() -> Vec<Irrep> {
    vec![
        Irrep::from_characters(1, &[1.0; 8]),
        Irrep::from_characters(2, &[1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0]),
        Irrep::from_characters(3, &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]),
        Irrep::from_characters(4, &[1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0]),
    ]
}

impl PointGroup {
    /// Parses a plain-text group definition.
    ///
    /// Format (`#` starts a comment, blank lines ignored):
    ///
    /// ```text
    /// name = MyGroup
    /// dim = 3
    /// elements = E C2x C2y C2z
    ///
    /// [element E]
    /// 1 0 0
    /// 0 1 0
    /// 0 0 1
    ///
    /// [irrep 1]
    /// dim = 1
    /// E: 1
    /// C2x: 1
    /// C2y: 1
    /// C2z: 1
    /// ```
    ///
    /// Element matrices are given as `dim` rows of `dim` numbers; irrep
    /// matrices are row-major `d*d` lists per element. Only real tables are
    /// representable, matching the shipped groups.
    pub fn from_definition_str(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::GroupDefinition(format!("line {line}: {msg}"));
        let mut name = String::new();
        let mut dim = 0usize;
        let mut labels: Vec<String> = Vec::new();
        let mut element_rows: std::collections::HashMap<String, Vec<f64>> = Default::default();
        let mut irrep_defs: Vec<(usize, usize, std::collections::HashMap<String, Vec<f64>>)> =
            Vec::new();

        enum Section {
            Header,
            Element(String),
            Irrep,
        }
        let mut section = Section::Header;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let mut parts = inner.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some("element"), Some(label)) => {
                        if !labels.iter().any(|l| l == label) {
                            return Err(bad(lineno, format!("element `{label}` not declared")));
                        }
                        section = Section::Element(label.to_string());
                    }
                    (Some("irrep"), Some(num)) => {
                        let index: usize = num
                            .parse()
                            .map_err(|_| bad(lineno, format!("bad irrep index `{num}`")))?;
                        irrep_defs.push((index, 0, Default::default()));
                        section = Section::Irrep;
                    }
                    _ => return Err(bad(lineno, format!("unknown section `{inner}`"))),
                }
                continue;
            }
            match &section {
                Section::Header => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| bad(lineno, "expected `key = value`".into()))?;
                    match key.trim() {
                        "name" => name = value.trim().to_string(),
                        "dim" => {
                            dim = value
                                .trim()
                                .parse()
                                .map_err(|_| bad(lineno, "bad dim".into()))?
                        }
                        "elements" => {
                            labels = value.split_whitespace().map(|s| s.to_string()).collect()
                        }
                        other => return Err(bad(lineno, format!("unknown key `{other}`"))),
                    }
                }
                Section::Element(label) => {
                    let row: Vec<f64> = line
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(lineno, "bad matrix row".into()))?;
                    if row.len() != dim {
                        return Err(bad(lineno, format!("expected {dim} entries per row")));
                    }
                    element_rows.entry(label.clone()).or_default().extend(row);
                }
                Section::Irrep => {
                    let def = irrep_defs.last_mut().expect("inside an irrep section");
                    if let Some((key, value)) = line.split_once('=') {
                        if key.trim() == "dim" {
                            def.1 = value
                                .trim()
                                .parse()
                                .map_err(|_| bad(lineno, "bad irrep dim".into()))?;
                            continue;
                        }
                    }
                    let (label, values) = line
                        .split_once(':')
                        .ok_or_else(|| bad(lineno, "expected `<element>: entries`".into()))?;
                    let label = label.trim().to_string();
                    if !labels.iter().any(|l| *l == label) {
                        return Err(bad(lineno, format!("element `{label}` not declared")));
                    }
                    let vals: Vec<f64> = values
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(lineno, "bad irrep entries".into()))?;
                    if def.1 == 0 || vals.len() != def.1 * def.1 {
                        return Err(bad(
                            lineno,
                            format!("expected dim*dim = {} entries", def.1 * def.1),
                        ));
                    }
                    def.2.insert(label, vals);
                }
            }
        }

        if name.is_empty() || dim == 0 || labels.is_empty() {
            return Err(Error::GroupDefinition(
                "missing name, dim, or elements header".into(),
            ));
        }
        let mut elements = Vec::with_capacity(labels.len());
        for label in &labels {
            let rows = element_rows.get(label).ok_or_else(|| {
                Error::GroupDefinition(format!("element `{label}` has no matrix section"))
            })?;
            elements.push(SymmetryOperation::new(label, dim, rows)?);
        }
        let mut irreps = Vec::with_capacity(irrep_defs.len());
        for (index, d, map) in &irrep_defs {
            let mut mats = Vec::with_capacity(labels.len());
            for label in &labels {
                let vals = map.get(label).ok_or_else(|| {
                    Error::GroupDefinition(format!("irrep {index}: no matrix for `{label}`"))
                })?;
                mats.push(DMatrix::from_row_slice(*d, *d, vals));
            }
            irreps.push(Irrep::new(*index, *d, mats)?);
        }
        PointGroup::new(&name, dim, elements, irreps)
    }
}
