//! Finite simplicial complexes with boundary matrices, the simplicial flat
//! norm and homogeneous flat norm as linear programs, and an
//! optimal-transport oracle for cross-checking the `k = 0` case.
//!
//! The flat norms computed here are the *simplicial* ones: fillings range
//! over chains supported on a fixed complex, not over all polyhedral
//! chains of the ambient space. On a fixed mesh this over-approximates the
//! continuum flat norm (fewer competitors) while staying a genuine norm on
//! embedded chains; refining the mesh tightens the value. Infeasibility of
//! the homogeneous problem is exact, not numerical: it certifies that the
//! cycle is not a boundary in the complex, i.e. a homology obstruction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chains::{dot, Chain, Point, Simplex};
use crate::lp::{LpOutcome, LpProblem, LpSolver, LpStats, SimplexSolver};
use crate::{Error, Result, CANONICAL_REL_TOL, LP_TOL};

/// A finite simplicial complex in `R^d`, face-closed, with canonical
/// oriented cells, signed boundary matrices, and per-cell volumes.
///
/// Vertices are indexed in lexicographic coordinate order and every cell
/// is the ascending tuple of its vertex indices, so a canonical chain
/// simplex matches its cell with permutation sign `+1`; orientation lives
/// entirely in chain coefficients.
#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    d: usize,
    dim: usize,
    vertices: Vec<Point>,
    /// `cells[j]` lists the ascending vertex-index tuples of dimension j.
    cells: Vec<Vec<Vec<usize>>>,
    /// `cell_index[j]` maps a tuple back to its position in `cells[j]`.
    cell_index: Vec<BTreeMap<Vec<usize>, usize>>,
    /// `boundary[j][i]` lists `((j-1)-cell, sign)` pairs of cell i, j >= 1.
    boundary: Vec<Vec<Vec<(usize, f64)>>>,
    /// `weights[j][i]` is the j-volume of cell i (strictly positive).
    weights: Vec<Vec<f64>>,
}

impl SimplicialComplex {
    pub fn ambient_dim(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn num_cells(&self, j: usize) -> usize {
        self.cells.get(j).map_or(0, |c| c.len())
    }

    pub fn cells(&self, j: usize) -> &[Vec<usize>] {
        self.cells.get(j).map_or(&[], |c| c.as_slice())
    }

    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.weights[j][i]
    }

    /// Signed incidence of cell `i` of dimension `j >= 1` in the
    /// `(j-1)`-cells.
    pub fn boundary_entries(&self, j: usize, i: usize) -> &[(usize, f64)] {
        &self.boundary[j][i]
    }

    /// Geometric realization of a cell.
    pub fn cell_simplex(&self, j: usize, i: usize) -> Simplex {
        let vertices = self.cells[j][i]
            .iter()
            .map(|&v| self.vertices[v].clone())
            .collect();
        Simplex::new(vertices).expect("cells are validated at build time")
    }

    /// Build a complex from its top-dimensional cells, given geometrically.
    /// Vertices are deduplicated by exact coordinates, the face closure is
    /// computed, boundary matrices are assembled, `bd(bd) = 0` is verified,
    /// and the mesh is checked for conformity — combinatorially (no
    /// duplicate cells) and geometrically (no complex vertex in the
    /// relative interior of a cell it does not span; in the plane, no two
    /// edges crossing properly).
    pub fn build(top_cells: &[Simplex]) -> Result<SimplicialComplex> {
        let Some(first) = top_cells.first() else {
            return Err(Error::MeshConformity("no cells given".into()));
        };
        let dim = first.k();
        let d = first.d();
        for s in top_cells {
            if s.k() != dim || s.d() != d {
                return Err(Error::MeshConformity(format!(
                    "mixed cell dimensions: {}-cell in R^{} next to {}-cell in R^{}",
                    dim,
                    d,
                    s.k(),
                    s.d()
                )));
            }
            if s.volume() * crate::chains::factorial(dim)
                <= CANONICAL_REL_TOL * s.diameter().powi(dim as i32)
            {
                return Err(Error::MeshConformity(format!("degenerate cell {s}")));
            }
        }

        // Vertex table in lexicographic order.
        let vertex_set: BTreeSet<Point> = top_cells
            .iter()
            .flat_map(|s| s.vertices().iter().cloned())
            .collect();
        let vertices: Vec<Point> = vertex_set.into_iter().collect();
        let index_of: BTreeMap<&Point, usize> =
            vertices.iter().enumerate().map(|(i, p)| (p, i)).collect();

        // Face closure, top down.
        let mut cell_sets: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); dim + 1];
        for s in top_cells {
            let mut tuple: Vec<usize> = s.vertices().iter().map(|v| index_of[v]).collect();
            tuple.sort_unstable();
            if !cell_sets[dim].insert(tuple.clone()) {
                return Err(Error::MeshConformity(format!(
                    "duplicate top-dimensional cell on vertices {tuple:?}"
                )));
            }
        }
        for j in (1..=dim).rev() {
            let lower: Vec<Vec<usize>> = cell_sets[j]
                .iter()
                .flat_map(|tuple| {
                    (0..tuple.len()).map(move |r| {
                        let mut face = tuple.clone();
                        face.remove(r);
                        face
                    })
                })
                .collect();
            cell_sets[j - 1].extend(lower);
        }
        let cells: Vec<Vec<Vec<usize>>> =
            cell_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let cell_index: Vec<BTreeMap<Vec<usize>, usize>> = cells
            .iter()
            .map(|list| {
                list.iter()
                    .enumerate()
                    .map(|(i, t)| (t.clone(), i))
                    .collect()
            })
            .collect();

        // Signed boundary matrices.
        let mut boundary: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); dim + 1];
        for j in 1..=dim {
            boundary[j] = cells[j]
                .iter()
                .map(|tuple| {
                    (0..tuple.len())
                        .map(|r| {
                            let mut face = tuple.clone();
                            face.remove(r);
                            let idx = cell_index[j - 1][&face];
                            (idx, if r % 2 == 0 { 1.0 } else { -1.0 })
                        })
                        .collect()
                })
                .collect();
        }
        // bd(bd) = 0, exactly: the signs are integers.
        for j in 2..=dim {
            for column in &boundary[j] {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for &(face, sign) in column {
                    for &(sub, sub_sign) in &boundary[j - 1][face] {
                        *acc.entry(sub).or_insert(0.0) += sign * sub_sign;
                    }
                }
                assert!(
                    acc.values().all(|&v| v == 0.0),
                    "boundary of boundary must vanish"
                );
            }
        }

        let weights: Vec<Vec<f64>> = cells
            .iter()
            .enumerate()
            .map(|(j, list)| {
                list.iter()
                    .map(|tuple| {
                        let verts: Vec<Point> =
                            tuple.iter().map(|&v| vertices[v].clone()).collect();
                        Simplex::new(verts).expect("faces of valid cells are valid").volume()
                    })
                    .map(|w| {
                        let _ = j;
                        w
                    })
                    .collect()
            })
            .collect();

        let complex = SimplicialComplex {
            d,
            dim,
            vertices,
            cells,
            cell_index,
            boundary,
            weights,
        };
        complex.check_conformity()?;
        Ok(complex)
    }

    /// Geometric conformity: every complex vertex must be a vertex of each
    /// cell whose closed hull contains it (catching T-junctions such as two
    /// triangles sharing half an edge), and in the plane no two edges may
    /// cross properly.
    fn check_conformity(&self) -> Result<()> {
        for j in 1..=self.dim {
            for (i, tuple) in self.cells[j].iter().enumerate() {
                let simplex = self.cell_simplex(j, i);
                let scale = simplex.diameter();
                for (v, point) in self.vertices.iter().enumerate() {
                    if tuple.contains(&v) {
                        continue;
                    }
                    if point_in_relative_interior(point, &simplex, 1e-9 * scale.max(1.0)) {
                        return Err(Error::MeshConformity(format!(
                            "vertex {point} lies inside cell {simplex} without being one of its vertices"
                        )));
                    }
                }
            }
        }
        if self.d == 2 && self.dim >= 1 {
            let edges = &self.cells[1];
            for a in 0..edges.len() {
                for b in (a + 1)..edges.len() {
                    if edges[a].iter().any(|v| edges[b].contains(v)) {
                        continue; // sharing a vertex is conforming contact
                    }
                    let p = [
                        self.vertices[edges[a][0]].coords(),
                        self.vertices[edges[a][1]].coords(),
                        self.vertices[edges[b][0]].coords(),
                        self.vertices[edges[b][1]].coords(),
                    ];
                    if segments_cross(p[0], p[1], p[2], p[3]) {
                        return Err(Error::MeshConformity(format!(
                            "edges {:?} and {:?} cross",
                            edges[a], edges[b]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Express a chain in cell coordinates. Every simplex of `t` must match
    /// a cell exactly (vertex-for-vertex); since canonical chains and cells
    /// share the ascending ordering, no extra sign appears.
    pub fn embed(&self, t: &Chain) -> Result<EmbeddedChain<'_>> {
        if t.d() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "chain in R^{}, complex in R^{}",
                t.d(),
                self.d
            )));
        }
        let k = t.k();
        if k > self.dim {
            return Err(Error::NotInComplex(format!(
                "{}-chain on a {}-dimensional complex",
                k, self.dim
            )));
        }
        let index_of: BTreeMap<&Point, usize> =
            self.vertices.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        for (s, c) in t.terms() {
            let tuple: Option<Vec<usize>> = s
                .vertices()
                .iter()
                .map(|v| index_of.get(v).copied())
                .collect();
            let cell = tuple
                .and_then(|tu| self.cell_index[k].get(&tu).copied())
                .ok_or_else(|| {
                    Error::NotInComplex(format!("simplex {s} is not a cell of the complex"))
                })?;
            *coeffs.entry(cell).or_insert(0.0) += c;
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(EmbeddedChain {
            complex: self,
            k,
            coeffs,
        })
    }

    /// An embedded chain from raw cell coefficients.
    pub fn embedded(&self, k: usize, entries: &[(usize, f64)]) -> Result<EmbeddedChain<'_>> {
        if k > self.dim {
            return Err(Error::NotInComplex(format!(
                "{}-chain on a {}-dimensional complex",
                k, self.dim
            )));
        }
        let mut coeffs = BTreeMap::new();
        for &(i, c) in entries {
            if i >= self.num_cells(k) {
                return Err(Error::NotInComplex(format!(
                    "cell index {i} out of range for dimension {k}"
                )));
            }
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("coefficient of cell {i}")));
            }
            if c != 0.0 {
                *coeffs.entry(i).or_insert(0.0) += c;
            }
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(EmbeddedChain {
            complex: self,
            k,
            coeffs,
        })
    }

    /// Simplicial flat norm of an embedded k-chain:
    /// `min over s of |t - Bs|_w + |s|_w` with weighted l1 masses, posed as
    /// a sign-split LP. Always feasible; the value never exceeds the mass.
    pub fn flat_norm<'a>(&'a self, t: &EmbeddedChain<'a>) -> Result<FlatNormResult<'a>> {
        if !std::ptr::eq(t.complex, self) {
            return Err(Error::DimensionMismatch(
                "chain embedded in a different complex".into(),
            ));
        }
        let k = t.k;
        let n_low = self.num_cells(k);
        let n_high = if k + 1 <= self.dim {
            self.num_cells(k + 1)
        } else {
            0
        };
        // Columns: s+ (n_high), s- (n_high), r+ (n_low), r- (n_low).
        let cols = 2 * n_high + 2 * n_low;
        let mut objective = vec![0.0; cols];
        for i in 0..n_high {
            objective[i] = self.weights[k + 1][i];
            objective[n_high + i] = self.weights[k + 1][i];
        }
        for i in 0..n_low {
            objective[2 * n_high + i] = self.weights[k][i];
            objective[2 * n_high + n_low + i] = self.weights[k][i];
        }
        let mut rows = vec![vec![0.0; cols]; n_low];
        if n_high > 0 {
            for (col, entries) in self.boundary[k + 1].iter().enumerate() {
                for &(row, sign) in entries {
                    rows[row][col] = sign;
                    rows[row][n_high + col] = -sign;
                }
            }
        }
        for i in 0..n_low {
            rows[i][2 * n_high + i] = 1.0;
            rows[i][2 * n_high + n_low + i] = -1.0;
        }
        let rhs = t.dense();
        let problem = LpProblem::new(objective, rows, rhs)?;
        let outcome = SimplexSolver::default().solve(&problem)?;
        let LpOutcome::Optimal(solution) = outcome else {
            return Err(Error::Solver(
                "flat norm LP reported infeasible, but s = 0 is always feasible".into(),
            ));
        };
        let filling = self.collect_signed(k + 1, &solution.x, 0, n_high)?;
        let residual = self.collect_signed(k, &solution.x, 2 * n_high, n_low)?;
        Ok(FlatNormResult {
            value: solution.objective_value,
            filling: Some(filling),
            residual,
            feasible: true,
            certificate: None,
            lp_stats: solution.stats,
        })
    }

    /// Homogeneous simplicial flat norm: `min |s|_w subject to Bs = t`,
    /// for cycles `t` only. An infeasible LP certifies that `t` is not a
    /// boundary in the complex (a homology obstruction); the result then
    /// carries `value = +inf`, no filling, and the phase-1 objective in
    /// `lp_stats`.
    pub fn flat_norm_hom<'a>(&'a self, t: &EmbeddedChain<'a>) -> Result<FlatNormResult<'a>> {
        if !std::ptr::eq(t.complex, self) {
            return Err(Error::DimensionMismatch(
                "chain embedded in a different complex".into(),
            ));
        }
        let k = t.k;
        let bt = t.boundary_coeffs();
        let scale = t.coeffs.values().fold(1.0f64, |m, c| m.max(c.abs()));
        if bt.values().any(|&v| v.abs() > LP_TOL * scale) {
            return Err(Error::NotACycle(format!(
                "boundary has coefficient sum up to {:.3e}",
                bt.values().fold(0.0f64, |m, v| m.max(v.abs()))
            )));
        }
        let n_low = self.num_cells(k);
        let n_high = if k + 1 <= self.dim {
            self.num_cells(k + 1)
        } else {
            0
        };
        if n_high == 0 {
            // No candidate fillings at all: only the zero cycle bounds.
            let feasible = t.coeffs.is_empty();
            return Ok(FlatNormResult {
                value: if feasible { 0.0 } else { f64::INFINITY },
                filling: if feasible {
                    Some(self.embedded(self.dim.min(k + 1), &[])?)
                } else {
                    None
                },
                residual: t.clone(),
                feasible,
                certificate: (!feasible).then(|| t.mass()),
                lp_stats: LpStats::default(),
            });
        }
        let mut objective = vec![0.0; 2 * n_high];
        for i in 0..n_high {
            objective[i] = self.weights[k + 1][i];
            objective[n_high + i] = self.weights[k + 1][i];
        }
        let mut rows = vec![vec![0.0; 2 * n_high]; n_low];
        for (col, entries) in self.boundary[k + 1].iter().enumerate() {
            for &(row, sign) in entries {
                rows[row][col] = sign;
                rows[row][n_high + col] = -sign;
            }
        }
        let rhs = t.dense();
        let problem = LpProblem::new(objective, rows, rhs)?;
        match SimplexSolver::default().solve(&problem)? {
            LpOutcome::Optimal(solution) => {
                let filling = self.collect_signed(k + 1, &solution.x, 0, n_high)?;
                let residual = self.embedded(k, &[])?;
                Ok(FlatNormResult {
                    value: solution.objective_value,
                    filling: Some(filling),
                    residual,
                    feasible: true,
                    certificate: None,
                    lp_stats: solution.stats,
                })
            }
            LpOutcome::Infeasible { certificate, stats } => Ok(FlatNormResult {
                value: f64::INFINITY,
                filling: None,
                residual: t.clone(),
                feasible: false,
                certificate: Some(certificate),
                lp_stats: stats,
            }),
        }
    }

    /// Combine a sign-split block `x[offset..offset+n] - x[offset+n..offset+2n]`
    /// into an embedded chain, dropping canonical-noise entries.
    fn collect_signed(
        &self,
        k: usize,
        x: &[f64],
        offset: usize,
        n: usize,
    ) -> Result<EmbeddedChain<'_>> {
        let mut entries = Vec::new();
        let mut max_abs = 0.0f64;
        for i in 0..n {
            let v = x[offset + i] - x[offset + n + i];
            max_abs = max_abs.max(v.abs());
            entries.push((i, v));
        }
        let kept: Vec<(usize, f64)> = entries
            .into_iter()
            .filter(|&(_, v)| v.abs() > LP_TOL * max_abs.max(1.0))
            .collect();
        self.embedded(k.min(self.dim), &kept)
    }
}

/// Barycentric test: does `p` lie in the relative interior of `simplex`?
fn point_in_relative_interior(p: &Point, simplex: &Simplex, tol: f64) -> bool {
    let k = simplex.k();
    let v0 = simplex.vertices()[0].coords();
    let spanning = simplex.spanning_vectors();
    // Solve the normal equations G lambda = E^T (p - v0).
    let mut g = vec![vec![0.0; k + 1]; k];
    let rhs: Vec<f64> = p.coords().iter().zip(v0).map(|(a, b)| a - b).collect();
    for i in 0..k {
        for j in 0..k {
            g[i][j] = dot(&spanning[i], &spanning[j]);
        }
        g[i][k] = dot(&spanning[i], &rhs);
    }
    let Some(lambda) = solve_dense(&mut g) else {
        return false;
    };
    // Residual distance from the affine hull.
    let mut diff = rhs;
    for (i, vec) in spanning.iter().enumerate() {
        for (dr, x) in diff.iter_mut().zip(vec) {
            *dr -= lambda[i] * x;
        }
    }
    let off_hull = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    if off_hull > tol {
        return false;
    }
    let lambda0 = 1.0 - lambda.iter().sum::<f64>();
    let strict = 1e-9;
    lambda0 > strict && lambda.iter().all(|&l| l > strict)
}

/// Gaussian elimination on an augmented `n x (n+1)` system; `None` if
/// singular.
fn solve_dense(aug: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = aug.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))?;
        if aug[pivot][col].abs() <= 1e-14 {
            return None;
        }
        aug.swap(pivot, col);
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = aug[row][col] / aug[col][col];
            for j in col..=n {
                aug[row][j] -= f * aug[col][j];
            }
        }
    }
    Some((0..n).map(|i| aug[i][n] / aug[i][i]).collect())
}

/// Strict proper crossing of segments `ab` and `cd` (no shared endpoints).
fn segments_cross(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> bool {
    let orient = |p: &[f64], q: &[f64], r: &[f64]| -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// A chain written in the cell basis of a complex.
#[derive(Clone, Debug)]
pub struct EmbeddedChain<'a> {
    complex: &'a SimplicialComplex,
    k: usize,
    coeffs: BTreeMap<usize, f64>,
}

impl<'a> EmbeddedChain<'a> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn complex(&self) -> &'a SimplicialComplex {
        self.complex
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs.iter().map(|(&i, &c)| (i, c))
    }

    pub fn coefficient(&self, cell: usize) -> f64 {
        self.coeffs.get(&cell).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Weighted l1 mass: `sum |c_i| * w_k[i]` — the mass of the realized
    /// chain.
    pub fn mass(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(&i, &c)| c.abs() * self.complex.weights[self.k][i])
            .sum()
    }

    /// Dense coefficient vector over `cells[k]`.
    pub fn dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.complex.num_cells(self.k)];
        for (&i, &c) in &self.coeffs {
            v[i] = c;
        }
        v
    }

    fn boundary_coeffs(&self) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        if self.k == 0 {
            return acc;
        }
        for (&i, &c) in &self.coeffs {
            for &(face, sign) in &self.complex.boundary[self.k][i] {
                *acc.entry(face).or_insert(0.0) += sign * c;
            }
        }
        acc
    }

    /// Boundary in cell coordinates (the zero chain for k = 0).
    pub fn boundary(&self) -> EmbeddedChain<'a> {
        let mut coeffs = self.boundary_coeffs();
        coeffs.retain(|_, c| *c != 0.0);
        EmbeddedChain {
            complex: self.complex,
            k: self.k.saturating_sub(1),
            coeffs,
        }
    }

    pub fn is_cycle(&self) -> bool {
        let scale = self.coeffs.values().fold(1.0f64, |m, c| m.max(c.abs()));
        self.boundary_coeffs()
            .values()
            .all(|&v| v.abs() <= LP_TOL * scale)
    }

    pub fn add(&self, other: &EmbeddedChain<'a>) -> Result<EmbeddedChain<'a>> {
        if !std::ptr::eq(self.complex, other.complex) || self.k != other.k {
            return Err(Error::DimensionMismatch(
                "adding embedded chains from different complexes or dimensions".into(),
            ));
        }
        let mut coeffs = self.coeffs.clone();
        for (&i, &c) in &other.coeffs {
            *coeffs.entry(i).or_insert(0.0) += c;
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(EmbeddedChain {
            complex: self.complex,
            k: self.k,
            coeffs,
        })
    }

    pub fn scale(&self, factor: f64) -> EmbeddedChain<'a> {
        let mut coeffs = self.coeffs.clone();
        if factor == 0.0 {
            coeffs.clear();
        } else {
            for c in coeffs.values_mut() {
                *c *= factor;
            }
        }
        EmbeddedChain {
            complex: self.complex,
            k: self.k,
            coeffs,
        }
    }

    pub fn sub(&self, other: &EmbeddedChain<'a>) -> Result<EmbeddedChain<'a>> {
        self.add(&other.scale(-1.0))
    }

    /// Geometric realization as a canonical chain.
    pub fn to_chain(&self) -> Result<Chain> {
        let raw: Vec<(Simplex, f64)> = self
            .coeffs
            .iter()
            .map(|(&i, &c)| (self.complex.cell_simplex(self.k, i), c))
            .collect();
        Chain::new(self.k, self.complex.d, raw)
    }

    pub fn to_wire(&self) -> EmbeddedChainJson {
        EmbeddedChainJson {
            k: self.k,
            coeffs: self.coeffs.iter().map(|(&i, &c)| (i, c)).collect(),
        }
    }
}

/// Wire form of an embedded chain: sparse `(cell, coefficient)` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddedChainJson {
    pub k: usize,
    pub coeffs: Vec<(usize, f64)>,
}

/// Result of a flat-norm LP.
#[derive(Clone, Debug)]
pub struct FlatNormResult<'a> {
    /// The norm value; `+inf` when the homogeneous problem is infeasible.
    pub value: f64,
    /// The optimal filling `s` (absent exactly when infeasible).
    pub filling: Option<EmbeddedChain<'a>>,
    /// `t - Bs` (zero for a feasible homogeneous solve).
    pub residual: EmbeddedChain<'a>,
    pub feasible: bool,
    /// Infeasibility certificate for homogeneous solves: the minimal total
    /// artificial mass of the phase-1 LP (strictly positive, and `None`
    /// whenever a filling exists).
    pub certificate: Option<f64>,
    pub lp_stats: LpStats,
}

impl FlatNormResult<'_> {
    pub fn to_wire(&self) -> FlatNormJson {
        FlatNormJson {
            value: self.value.is_finite().then_some(self.value),
            filling: self.filling.as_ref().map(|f| f.to_wire()),
            residual: self.residual.to_wire(),
            feasible: self.feasible,
            certificate: self.certificate,
            lp_stats: self.lp_stats.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("serialization cannot fail")
    }
}

/// Wire form of a flat-norm result; an infeasible value serializes as
/// `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatNormJson {
    pub value: Option<f64>,
    pub filling: Option<EmbeddedChainJson>,
    pub residual: EmbeddedChainJson,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<f64>,
    pub lp_stats: LpStats,
}

/// Optimal-transport distance between two balanced nonnegative weighted
/// point clouds, with Euclidean ground cost — the `k = 0` oracle for the
/// homogeneous flat norm.
pub fn wasserstein1(sources: &[(Point, f64)], sinks: &[(Point, f64)]) -> Result<f64> {
    if sources.is_empty() || sinks.is_empty() {
        return Err(Error::InvalidArgument(
            "transport needs at least one source and one sink".into(),
        ));
    }
    let d = sources[0].0.dim();
    for (p, w) in sources.iter().chain(sinks) {
        if p.dim() != d {
            return Err(Error::DimensionMismatch(
                "transport points of mixed dimension".into(),
            ));
        }
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "transport weights must be finite and nonnegative, got {w}"
            )));
        }
    }
    let supply: f64 = sources.iter().map(|(_, w)| w).sum();
    let demand: f64 = sinks.iter().map(|(_, w)| w).sum();
    if (supply - demand).abs() > LP_TOL * supply.max(demand).max(1.0) {
        return Err(Error::UnbalancedTransport { supply, demand });
    }
    let ns = sources.len();
    let nt = sinks.len();
    let mut objective = Vec::with_capacity(ns * nt);
    for (p, _) in sources {
        for (q, _) in sinks {
            objective.push(p.distance(q));
        }
    }
    // Row i: sum_j x_ij = a_i. Column constraints for all but the last sink
    // (that one is implied by the balance).
    let mut rows = Vec::with_capacity(ns + nt - 1);
    let mut rhs = Vec::with_capacity(ns + nt - 1);
    for (i, (_, a)) in sources.iter().enumerate() {
        let mut row = vec![0.0; ns * nt];
        for j in 0..nt {
            row[i * nt + j] = 1.0;
        }
        rows.push(row);
        rhs.push(*a);
    }
    for (j, (_, b)) in sinks.iter().enumerate().take(nt - 1) {
        let mut row = vec![0.0; ns * nt];
        for i in 0..ns {
            row[i * nt + j] = 1.0;
        }
        rows.push(row);
        rhs.push(*b);
    }
    let problem = LpProblem::new(objective, rows, rhs)?;
    match SimplexSolver::default().solve(&problem)? {
        LpOutcome::Optimal(solution) => Ok(solution.objective_value),
        LpOutcome::Infeasible { certificate, .. } => Err(Error::Solver(format!(
            "balanced transport LP reported infeasible (certificate {certificate:.3e})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::test_support::{chain, pt};
    use crate::meshes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interval_complex_structure() {
        let complex = meshes::interval_mesh(-2.0, 2.0, 4).unwrap().to_complex().unwrap();
        assert_eq!(complex.dim(), 1);
        assert_eq!(complex.ambient_dim(), 1);
        assert_eq!(complex.num_cells(0), 5);
        assert_eq!(complex.num_cells(1), 4);
        for i in 0..4 {
            assert_eq!(complex.weight(1, i), 1.0, "unit edges");
            let entries = complex.boundary_entries(1, i);
            assert_eq!(entries.len(), 2);
            let sum: f64 = entries.iter().map(|&(_, s)| s).sum();
            assert_eq!(sum, 0.0, "edge boundary signs are -1, +1");
        }
    }

    #[test]
    fn annulus_complex_structure() {
        let complex = meshes::square_annulus_mesh().to_complex().unwrap();
        assert_eq!(complex.num_cells(2), 16, "sixteen triangles");
        assert_eq!(complex.num_cells(0), 16, "outer and inner rings");
        // Euler characteristic of an annulus is zero.
        let chi = complex.num_cells(0) as i64 - complex.num_cells(1) as i64
            + complex.num_cells(2) as i64;
        assert_eq!(chi, 0);
        for j in 0..=2 {
            for i in 0..complex.num_cells(j) {
                assert!(complex.weight(j, i) > 0.0);
            }
        }
    }

    #[test]
    fn half_shared_edge_is_rejected() {
        let a = Simplex::new(vec![pt(&[0.0, 0.0]), pt(&[2.0, 0.0]), pt(&[0.0, 2.0])]).unwrap();
        let b = Simplex::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[1.0, -1.0])]).unwrap();
        match SimplicialComplex::build(&[a, b]) {
            Err(Error::MeshConformity(msg)) => {
                assert!(msg.contains("inside cell"), "got: {msg}")
            }
            other => panic!("expected conformity error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let a = Simplex::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 1.0])]).unwrap();
        let b = Simplex::new(vec![pt(&[1.0, 0.0]), pt(&[0.0, 1.0]), pt(&[0.0, 0.0])]).unwrap();
        assert!(matches!(
            SimplicialComplex::build(&[a, b]),
            Err(Error::MeshConformity(_))
        ));
    }

    #[test]
    fn crossing_edges_are_rejected() {
        let a = Simplex::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 1.0])]).unwrap();
        let b = Simplex::new(vec![pt(&[0.0, 1.0]), pt(&[1.0, 0.0])]).unwrap();
        assert!(matches!(
            SimplicialComplex::build(&[a, b]),
            Err(Error::MeshConformity(_))
        ));
    }

    #[test]
    fn embed_diracs_and_reject_off_mesh() {
        let complex = meshes::interval_mesh(-2.0, 2.0, 4).unwrap().to_complex().unwrap();
        let t = chain(0, 1, &[(&[&[2.0]], 1.0), (&[&[-2.0]], -1.0)]);
        let e = complex.embed(&t).unwrap();
        assert_eq!(e.coefficient(0), -1.0, "vertices are sorted, -2 first");
        assert_eq!(e.coefficient(4), 1.0);
        assert!((e.mass() - 2.0).abs() < 1e-15);
        let off = chain(0, 1, &[(&[&[0.3]], 1.0)]);
        assert!(matches!(complex.embed(&off), Err(Error::NotInComplex(_))));
    }

    #[test]
    fn embedded_boundary_matches_chain_boundary() {
        let complex = meshes::square_annulus_mesh().to_complex().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        for _ in 0..10 {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for i in 0..complex.num_cells(2) {
                if rng.gen_bool(0.4) {
                    entries.push((i, rng.gen_range(-2.0..2.0)));
                }
            }
            let e = complex.embedded(2, &entries).unwrap();
            let via_cells = e.boundary().to_chain().unwrap();
            let via_chain = e.to_chain().unwrap().boundary().unwrap();
            assert!(
                via_cells.chains_equal(&via_chain),
                "cell-basis boundary must realize to the chain boundary"
            );
            assert!((e.mass() - e.to_chain().unwrap().mass()).abs() <= 1e-12 * e.mass().max(1.0));
        }
    }

    #[test]
    fn flat_norm_frozen_interval_example() {
        // min over c of 2|1-c| + 4|c| = 2 at c = 0: keep the residual,
        // fill nothing.
        let complex = meshes::interval_mesh(-2.0, 2.0, 4).unwrap().to_complex().unwrap();
        let t = chain(0, 1, &[(&[&[2.0]], 1.0), (&[&[-2.0]], -1.0)]);
        let e = complex.embed(&t).unwrap();
        let result = complex.flat_norm(&e).unwrap();
        assert!((result.value - 2.0).abs() <= 1e-9, "{}", result.value);
        assert!(result.feasible);
        assert!(result.filling.as_ref().unwrap().is_zero());
        assert!(result.residual.sub(&e).unwrap().is_zero());
        // Zero chain.
        let zero = complex.embedded(0, &[]).unwrap();
        assert_eq!(complex.flat_norm(&zero).unwrap().value, 0.0);
    }

    #[test]
    fn flat_norm_hom_frozen_interval_example() {
        let complex = meshes::interval_mesh(-2.0, 2.0, 4).unwrap().to_complex().unwrap();
        let t = chain(0, 1, &[(&[&[2.0]], 1.0), (&[&[-2.0]], -1.0)]);
        let e = complex.embed(&t).unwrap();
        let result = complex.flat_norm_hom(&e).unwrap();
        assert!((result.value - 4.0).abs() <= 1e-9, "{}", result.value);
        let filling = result.filling.unwrap();
        for i in 0..4 {
            assert!(
                (filling.coefficient(i) - 1.0).abs() <= 1e-9,
                "the segment [-2,2] is the unique filling"
            );
        }
        assert!(result.residual.is_zero());
        // Every 0-chain is a cycle, but an unbalanced one bounds nothing:
        // the obstruction shows up as infeasibility, not as an error.
        let lopsided = complex.embedded(0, &[(0, 1.0)]).unwrap();
        let blocked = complex.flat_norm_hom(&lopsided).unwrap();
        assert!(!blocked.feasible);
        assert!(blocked.value.is_infinite());
        // The zero cycle costs nothing.
        let zero = complex.embedded(0, &[]).unwrap();
        assert_eq!(complex.flat_norm_hom(&zero).unwrap().value, 0.0);
    }

    #[test]
    fn annulus_generator_is_infeasible() {
        let complex = meshes::square_annulus_mesh().to_complex().unwrap();
        let generator = complex.embed(&meshes::square_annulus_generator()).unwrap();
        assert!(generator.is_cycle());
        let result = complex.flat_norm_hom(&generator).unwrap();
        assert!(!result.feasible, "the hole obstructs every filling");
        assert!(result.value.is_infinite());
        assert!(result.filling.is_none());
        let wire = result.to_wire();
        assert!(wire.value.is_none(), "infeasible serializes as null");
        // The inhomogeneous norm is still finite and at most the mass.
        let flat = complex.flat_norm(&generator).unwrap();
        assert!(flat.feasible);
        assert!(flat.value <= generator.mass() * (1.0 + 1e-9));
        // An open arc has real boundary and is rejected up front.
        let arc = complex.embedded(1, &[(0, 1.0)]).unwrap();
        assert!(matches!(
            complex.flat_norm_hom(&arc),
            Err(Error::NotACycle(_))
        ));
    }

    #[test]
    fn flat_norms_scale_absolutely_and_satisfy_triangle_inequality() {
        let complex = meshes::interval_mesh(0.0, 1.0, 8).unwrap().to_complex().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        for _ in 0..10 {
            // Balanced 0-chains (cycles with zero total mass) are always
            // fillable on an interval.
            let mut entries: Vec<(usize, f64)> = (0..8)
                .map(|i| (i, rng.gen_range(-1.0..1.0)))
                .collect();
            let balance: f64 = entries.iter().map(|&(_, c)| c).sum::<f64>();
            entries.push((8, -balance));
            let a = complex.embedded(0, &entries).unwrap();
            let b = {
                let mut entries: Vec<(usize, f64)> = (0..8)
                    .map(|i| (i, rng.gen_range(-1.0..1.0)))
                    .collect();
                let balance: f64 = entries.iter().map(|&(_, c)| c).sum::<f64>();
                entries.push((8, -balance));
                complex.embedded(0, &entries).unwrap()
            };
            for lambda in [-2.0, 0.5] {
                let fa = complex.flat_norm(&a).unwrap().value;
                let fla = complex.flat_norm(&a.scale(lambda)).unwrap().value;
                assert!(
                    (fla - lambda.abs() * fa).abs() <= 1e-8 * fa.max(1.0),
                    "absolute homogeneity"
                );
                let ha = complex.flat_norm_hom(&a).unwrap().value;
                let hla = complex.flat_norm_hom(&a.scale(lambda)).unwrap().value;
                assert!((hla - lambda.abs() * ha).abs() <= 1e-8 * ha.max(1.0));
            }
            let sum = a.add(&b).unwrap();
            let f = |x: &EmbeddedChain<'_>| complex.flat_norm(x).unwrap().value;
            assert!(f(&sum) <= f(&a) + f(&b) + 1e-8, "triangle inequality for F");
            let h = |x: &EmbeddedChain<'_>| complex.flat_norm_hom(x).unwrap().value;
            assert!(h(&sum) <= h(&a) + h(&b) + 1e-8, "triangle inequality for F0");
            assert!(f(&a) <= a.mass() * (1.0 + 1e-9) + 1e-12, "F <= M");
            assert!(f(&a) <= h(&a) + 1e-8, "F <= F0 on cycles");
        }
    }

    #[test]
    fn filling_certificate_recomputes_the_value() {
        let complex = meshes::square_annulus_mesh().to_complex().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        for _ in 0..10 {
            // Random fillable cycle: the boundary of a random 2-chain.
            let entries: Vec<(usize, f64)> = (0..complex.num_cells(2))
                .map(|i| (i, rng.gen_range(-1.5..1.5)))
                .collect();
            let cycle = complex.embedded(2, &entries).unwrap().boundary();
            let flat = complex.flat_norm(&cycle).unwrap();
            let recomputed =
                flat.residual.mass() + flat.filling.as_ref().unwrap().mass();
            assert!(
                (flat.value - recomputed).abs() <= 1e-8 * flat.value.max(1.0),
                "flat value must equal residual + filling masses"
            );
            let hom = complex.flat_norm_hom(&cycle).unwrap();
            assert!(hom.feasible, "boundaries are fillable");
            let refill = hom.filling.as_ref().unwrap();
            assert!(
                (hom.value - refill.mass()).abs() <= 1e-8 * hom.value.max(1.0)
            );
            // The filling really fills: B s = t.
            assert!(refill
                .boundary()
                .sub(&cycle)
                .unwrap()
                .to_chain()
                .unwrap()
                .mass()
                <= 1e-7 * cycle.mass().max(1.0));
        }
    }

    #[test]
    fn wasserstein_frozen_examples() {
        let w = wasserstein1(
            &[(pt(&[0.0]), 1.0)],
            &[(pt(&[1.0]), 1.0)],
        )
        .unwrap();
        assert!((w - 1.0).abs() <= 1e-9);
        // Two unit masses swapped across distance 2: independent moves.
        let w2 = wasserstein1(
            &[(pt(&[0.0, 0.0]), 1.0), (pt(&[2.0, 0.0]), 1.0)],
            &[(pt(&[2.0, 0.0]), 1.0), (pt(&[0.0, 0.0]), 1.0)],
        )
        .unwrap();
        assert!(w2.abs() <= 1e-9, "identical clouds cost nothing: {w2}");
        let w3 = wasserstein1(
            &[(pt(&[0.0, 0.0]), 1.0), (pt(&[2.0, 0.0]), 1.0)],
            &[(pt(&[4.0, 0.0]), 1.0), (pt(&[6.0, 0.0]), 1.0)],
        )
        .unwrap();
        assert!((w3 - 8.0).abs() <= 1e-9, "{w3}");
        assert!(matches!(
            wasserstein1(&[(pt(&[0.0]), 1.0)], &[(pt(&[1.0]), 2.0)]),
            Err(Error::UnbalancedTransport { .. })
        ));
    }

    #[test]
    fn wasserstein_matches_homogeneous_flat_norm_on_fine_mesh() {
        // k = 0: F0 of (sum of dirac differences) on a segment mesh equals
        // the transport distance up to mesh resolution.
        let n = 64;
        let mesh_size = 1.0 / n as f64;
        let complex = meshes::interval_mesh(0.0, 1.0, n).unwrap().to_complex().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(131);
        for _ in 0..5 {
            let snap = |x: f64| (x * n as f64).round() / n as f64;
            let sources: Vec<(Point, f64)> = (0..2)
                .map(|_| (pt(&[snap(rng.gen_range(0.0..1.0))]), rng.gen_range(0.5..1.5)))
                .collect();
            let total: f64 = sources.iter().map(|(_, w)| w).sum();
            let sinks: Vec<(Point, f64)> = vec![
                (pt(&[snap(rng.gen_range(0.0..1.0))]), total / 2.0),
                (pt(&[snap(rng.gen_range(0.0..1.0))]), total / 2.0),
            ];
            let w1 = wasserstein1(&sources, &sinks).unwrap();
            let mut raw = Vec::new();
            for (p, w) in &sinks {
                raw.push((Simplex::new(vec![p.clone()]).unwrap(), *w));
            }
            for (p, w) in &sources {
                raw.push((Simplex::new(vec![p.clone()]).unwrap(), -*w));
            }
            let t = Chain::new(0, 1, raw).unwrap();
            if t.is_zero() {
                continue;
            }
            let e = complex.embed(&t).unwrap();
            let hom = complex.flat_norm_hom(&e).unwrap();
            assert!(
                (hom.value - w1).abs() <= 2.0 * mesh_size + 1e-9,
                "F0 {} vs W1 {}",
                hom.value,
                w1
            );
        }
    }

    #[test]
    fn mesh_json_roundtrip() {
        let mesh = meshes::square_annulus_mesh();
        let json = mesh.to_json();
        let back = meshes::Mesh::from_json(&json).unwrap();
        assert_eq!(mesh.vertices, back.vertices);
        assert_eq!(mesh.cells, back.cells);
        let complex = back.to_complex().unwrap();
        assert_eq!(complex.num_cells(2), 16);
    }
}
