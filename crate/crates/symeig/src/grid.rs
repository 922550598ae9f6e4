//! Symmetric tensor-product grids, the group action on nodes, and the orbit
//! decomposition that indexes the reduced systems.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::group::{PointGroup, SymmetryOperation};

/// Node-matching tolerance, relative to the grid spacing.
const NODE_MATCH_TOL: f64 = 1e-9;
/// A node closer than this to any symmetry element is rejected.
const FIXED_NODE_TOL: f64 = 1e-12;

/// Uniform tensor-product grid on `(-a, a)^dim` with zero boundary:
/// only interior nodes are indexed, in lexicographic coordinate order.
#[derive(Debug, Clone)]
pub struct SymmetricGrid {
    dim: usize,
    half_width: f64,
    partitions: [usize; 3],
    nodes: Vec<[f64; 3]>,
}

impl SymmetricGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn partitions(&self) -> &[usize] {
        &self.partitions[..self.dim]
    }

    /// Grid spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_width / self.partitions[axis] as f64
    }

    /// Interior node count `N`.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> [f64; 3] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    /// Interior points per axis (`partitions - 1`).
    pub fn interior_counts(&self) -> [usize; 3] {
        let mut out = [1usize; 3];
        for a in 0..self.dim {
            out[a] = self.partitions[a] - 1;
        }
        out
    }

    /// Global index from per-axis interior indices (0-based).
    pub fn index_of(&self, k: [usize; 3]) -> usize {
        let c = self.interior_counts();
        match self.dim {
            2 => k[0] * c[1] + k[1],
            _ => (k[0] * c[1] + k[1]) * c[2] + k[2],
        }
    }

    /// Per-axis interior indices of a global node index.
    pub fn axis_indices(&self, i: usize) -> [usize; 3] {
        let c = self.interior_counts();
        match self.dim {
            2 => [i / c[1], i % c[1], 0],
            _ => [i / (c[1] * c[2]), (i / c[2]) % c[1], i % c[2]],
        }
    }

    /// Maps a point to its node index, or `None` if it is not a node.
    pub fn locate(&self, p: [f64; 3]) -> Option<usize> {
        let mut k = [0usize; 3];
        for a in 0..self.dim {
            let h = self.spacing(a);
            let t = (p[a] + self.half_width) / h;
            let r = t.round();
            if (t - r).abs() > NODE_MATCH_TOL {
                return None;
            }
            let idx = r as i64;
            if idx < 1 || idx as usize > self.partitions[a] - 1 {
                return None;
            }
            k[a] = idx as usize - 1;
        }
        Some(self.index_of(k))
    }

    /// Index of `R * node(i)`; errors if the image is not a grid node.
    pub fn act_on_node(&self, op: &SymmetryOperation, i: usize) -> Result<usize> {
        if op.dim() != self.dim {
            return Err(Error::IncompatibleGrid(format!(
                "operation `{}` is {}-dimensional, grid is {}-dimensional",
                op.label,
                op.dim(),
                self.dim
            )));
        }
        self.locate(op.apply(self.nodes[i]))
            .ok_or_else(|| Error::GridNotInvariant {
                label: op.label.clone(),
                node: i,
            })
    }

    /// Writes the node list as `index x [y [z]]` lines, for debugging.
    pub fn write_nodes<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        for (i, p) in self.nodes.iter().enumerate() {
            match self.dim {
                2 => writeln!(w, "{} {:.16e} {:.16e}", i, p[0], p[1])?,
                _ => writeln!(w, "{} {:.16e} {:.16e} {:.16e}", i, p[0], p[1], p[2])?,
            }
        }
        Ok(())
    }
}

/// Builds the interior grid. Every partition count must be odd and at least
/// 3; an even count would place nodes on the coordinate planes, which are
/// symmetry elements of all shipped groups.
pub fn build_grid(dim: usize, half_width: f64, partitions: &[usize]) -> Result<SymmetricGrid> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::Config(format!(
            "grid dimension must be 2 or 3, got {dim}"
        )));
    }
    if partitions.len() != dim {
        return Err(Error::Config(format!(
            "expected {dim} partition counts, got {}",
            partitions.len()
        )));
    }
    if !(half_width > 0.0) {
        return Err(Error::Config("half_width must be positive".into()));
    }
    for &n in partitions {
        if n % 2 == 0 {
            return Err(Error::EvenPartitionRejected(n));
        }
        if n < 3 {
            return Err(Error::Config(format!("partition count {n} must be >= 3")));
        }
    }
    let mut parts = [1usize; 3];
    parts[..dim].copy_from_slice(partitions);
    let mut axis_coords: [Vec<f64>; 3] = [vec![0.0], vec![0.0], vec![0.0]];
    for a in 0..dim {
        // (2k - n) * (a/n) keeps mirrored coordinates bit-exact negatives.
        let half_h = half_width / parts[a] as f64;
        axis_coords[a] = (1..parts[a])
            .map(|k| (2 * k as i64 - parts[a] as i64) as f64 * half_h)
            .collect();
    }
    let mut nodes = Vec::new();
    for &x in &axis_coords[0] {
        for &y in &axis_coords[1] {
            for &z in &axis_coords[2] {
                nodes.push([x, y, z]);
            }
        }
    }
    Ok(SymmetricGrid {
        dim,
        half_width,
        partitions: parts,
        nodes,
    })
}

/// Real-valued function sampled on the interior nodes of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &SymmetricGrid) -> Self {
        GridFunction {
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples a function of the node coordinates.
    pub fn sample<F: Fn([f64; 3]) -> f64>(grid: &SymmetricGrid, f: F) -> Self {
        GridFunction {
            values: grid.nodes().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Partition of the grid nodes into group orbits, plus the cached node
/// permutation of every group element.
///
/// Orbit `j` is represented by its lexicographically smallest node
/// `rep(j)`; `action(R, j)` is the node index of `R * x_j`. The action is
/// free (no fixed nodes), so `inverse` is single-valued.
#[derive(Debug, Clone)]
pub struct OrbitMap {
    n: usize,
    g: usize,
    rep: Vec<usize>,
    /// `node_action[e][i]` = node index of `R_e * x_i`.
    node_action: Vec<Vec<usize>>,
    /// node -> (element e, orbit j) with `action(e, j) == node`.
    inverse: Vec<(usize, usize)>,
    inv_elem: Vec<usize>,
}

impl OrbitMap {
    /// Orbit count `N0`.
    pub fn orbit_count(&self) -> usize {
        self.rep.len()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn group_order(&self) -> usize {
        self.g
    }

    /// Node index of the canonical representative of orbit `j`.
    pub fn rep(&self, j: usize) -> usize {
        self.rep[j]
    }

    pub fn reps(&self) -> &[usize] {
        &self.rep
    }

    /// Node index of `R_e * x_j` for orbit `j`.
    pub fn action(&self, e: usize, j: usize) -> usize {
        self.node_action[e][self.rep[j]]
    }

    /// `(e, j)` such that `action(e, j)` is the given node.
    pub fn inverse(&self, node: usize) -> (usize, usize) {
        self.inverse[node]
    }

    /// Orbit index containing `node`.
    pub fn orbit_of(&self, node: usize) -> usize {
        self.inverse[node].1
    }

    /// Full node permutation of element `e`.
    pub fn node_permutation(&self, e: usize) -> &[usize] {
        &self.node_action[e]
    }

    /// Group inverse of element `e` (copied from the group table).
    pub fn inverse_element(&self, e: usize) -> usize {
        self.inv_elem[e]
    }
}

/// Checks that no interior node lies on the symmetry element of any
/// non-identity operation.
pub fn check_no_fixed_nodes(grid: &SymmetricGrid, group: &PointGroup) -> Result<()> {
    for (e, op) in group.elements().iter().enumerate() {
        if e == group.identity_index() {
            continue;
        }
        let basis = op.fixed_space_basis();
        for i in 0..grid.node_count() {
            let p = grid.node(i);
            let dist = crate::group::distance_to_span(&basis, &p[..grid.dim()]);
            if dist <= FIXED_NODE_TOL {
                return Err(Error::SymmetryElementNode {
                    node: i,
                    label: op.label.clone(),
                    dist,
                });
            }
        }
    }
    Ok(())
}

/// Decomposes the node set into group orbits.
///
/// Requires the grid to be invariant under every element and free of nodes
/// on symmetry elements; then `N0 = N / g` exactly and the representatives
/// are the lexicographically smallest orbit members.
pub fn orbit_decomposition(grid: &SymmetricGrid, group: &PointGroup) -> Result<OrbitMap> {
    check_no_fixed_nodes(grid, group)?;
    let n = grid.node_count();
    let g = group.order();

    let mut node_action = Vec::with_capacity(g);
    for op in group.elements() {
        let mut perm = vec![0usize; n];
        for (i, slot) in perm.iter_mut().enumerate() {
            *slot = grid.act_on_node(op, i)?;
        }
        node_action.push(perm);
    }

    if n % g != 0 {
        // Cannot happen once the action is free, but keep the guard.
        return Err(Error::SymmetryElementNode {
            node: 0,
            label: format!("N = {n} not divisible by g = {g}"),
            dist: 0.0,
        });
    }

    let mut rep = Vec::with_capacity(n / g);
    let mut inverse = vec![(usize::MAX, usize::MAX); n];
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let j = rep.len();
        rep.push(i);
        for e in 0..g {
            let img = node_action[e][i];
            if seen[img] && inverse[img].1 != j {
                return Err(Error::IncompatibleGrid(format!(
                    "node {img} reached from two orbits; the action is not free"
                )));
            }
            if inverse[img] == (usize::MAX, usize::MAX) {
                inverse[img] = (e, j);
                seen[img] = true;
            } else {
                return Err(Error::SymmetryElementNode {
                    node: img,
                    label: group.elements()[e].label.clone(),
                    dist: 0.0,
                });
            }
        }
    }
    debug_assert_eq!(rep.len() * g, n);
    let inv_elem = (0..g).map(|e| group.inverse(e)).collect();
    Ok(OrbitMap {
        n,
        g,
        rep,
        node_action,
        inverse,
        inv_elem,
    })
}

/// Discrete Fourier invariance check (reciprocal-space symmetry).
///
/// The zero-boundary grid is extended periodically with period `2a` per
/// axis (the boundary layer carries the zero boundary value), transformed,
/// and compared against the transform of `f` composed with `R`: for a real
/// orthogonal `R` mapping the lattice to itself, `DFT(f o R)(q) = f_hat(R q)`,
/// so the returned value is `max_q |f_hat(R q) - f_hat(q)|`. It is zero
/// exactly when `f` is invariant under `R`.
pub fn fourier_invariance_check(
    grid: &SymmetricGrid,
    f: &GridFunction,
    op: &SymmetryOperation,
) -> Result<f64> {
    if f.values.len() != grid.node_count() {
        return Err(Error::IncompatibleGrid(
            "grid function length does not match the grid".into(),
        ));
    }
    let fa = periodic_lattice(grid, &f.values);
    let mut g_vals = vec![0.0; grid.node_count()];
    for (i, slot) in g_vals.iter_mut().enumerate() {
        // g(x) = f(R x); nodes permute because the grid is R-invariant.
        *slot = f.values[grid.act_on_node(op, i)?];
    }
    let ga = periodic_lattice(grid, &g_vals);

    let fhat = dft(grid, &fa);
    let ghat = dft(grid, &ga);
    let dev = fhat
        .iter()
        .zip(&ghat)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    Ok(dev)
}

/// Embeds interior node values into the full periodic lattice
/// (`partitions[a]` points per axis; the extra layer is the boundary, 0).
fn periodic_lattice(grid: &SymmetricGrid, values: &[f64]) -> Vec<f64> {
    let p = grid.partitions;
    let total = p[0] * p[1] * p[2];
    let mut arr = vec![0.0; total];
    for (i, &v) in values.iter().enumerate() {
        let k = grid.axis_indices(i);
        let kz = if grid.dim() == 3 { k[2] + 1 } else { 0 };
        let flat = ((k[0] + 1) * p[1] + (k[1] + 1)) * p[2] + kz;
        arr[flat] = v;
    }
    arr
}

/// Separable DFT over the periodic lattice, normalized by 1/N.
fn dft(grid: &SymmetricGrid, lattice: &[f64]) -> Vec<Complex64> {
    let p = grid.partitions;
    let total = p[0] * p[1] * p[2];
    let mut cur: Vec<Complex64> = lattice.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    // Transform one axis at a time.
    let strides = [p[1] * p[2], p[2], 1];
    for axis in 0..3 {
        if p[axis] == 1 {
            continue;
        }
        let n = p[axis];
        let twiddle: Vec<Complex64> = (0..n * n)
            .map(|mn| {
                let (m, k) = (mn / n, mn % n);
                let phase = -2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64;
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        let mut next = vec![Complex64::new(0.0, 0.0); total];
        let stride = strides[axis];
        for base in 0..total {
            // Only process each line once, from its axis-index-0 element.
            if (base / stride) % n != 0 {
                continue;
            }
            for m in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += twiddle[m * n + k] * cur[base + k * stride];
                }
                next[base + m * stride] = acc;
            }
        }
        cur = next;
    }
    for v in cur.iter_mut() {
        *v /= total as f64;
    }
    cur
}
