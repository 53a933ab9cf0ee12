//! Exact algebra of polyhedral k-chains in `R^d`.
//!
//! A chain is a finite real combination of oriented simplices
//! `[[v_0, ..., v_k]]`. Every operation returns chains in *canonical form*:
//! vertices of each simplex sorted lexicographically with the permutation
//! parity absorbed into the coefficient, degenerate simplices deleted, and
//! simplices merged with coefficients below `1e-12` of the largest dropped.
//! Vertex coordinates are compared exactly — there is no snapping — so
//! combinatorial identities (boundary of boundary, prism boundaries, cone
//! boundaries) hold to the last bit, not merely to a tolerance.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, CANONICAL_REL_TOL};

/// A point of `R^d`, ordered lexicographically by `f64::total_cmp`.
///
/// `-0.0` is normalised to `0.0` at construction so that bitwise ordering
/// agrees with numeric equality on every value a chain operation can
/// produce.
#[derive(Clone, Debug)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        let coords = coords
            .into_iter()
            .map(|x| if x == 0.0 { 0.0 } else { x })
            .collect();
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|x| x.is_finite())
    }

    /// Euclidean distance to another point.
    pub fn distance(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Prefix the coordinates with a time value, lifting `R^d` to `R^{1+d}`.
    pub fn at_time(&self, t: f64) -> Point {
        let mut coords = Vec::with_capacity(self.coords.len() + 1);
        coords.push(t);
        coords.extend_from_slice(&self.coords);
        Point::new(coords)
    }

    /// Drop coordinate 0 (the time coordinate of a space-time point).
    pub fn drop_time(&self) -> Point {
        Point::new(self.coords[1..].to_vec())
    }

    fn cmp_lex(&self, other: &Point) -> Ordering {
        match self.coords.len().cmp(&other.coords.len()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_lex(other) == Ordering::Equal
    }
}
impl Eq for Point {}
impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_lex(other))
    }
}
impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_lex(other)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// An oriented k-simplex: an ordered list of `k+1` vertices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Simplex {
    vertices: Vec<Point>,
}

impl Simplex {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidArgument("simplex needs vertices".into()));
        }
        let d = vertices[0].dim();
        if vertices.iter().any(|v| v.dim() != d) {
            return Err(Error::DimensionMismatch(
                "simplex vertices have mixed ambient dimensions".into(),
            ));
        }
        Ok(Simplex { vertices })
    }

    pub fn k(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn d(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// The spanning edge vectors `v_i - v_0`, `i = 1..=k`.
    pub fn spanning_vectors(&self) -> Vec<Vec<f64>> {
        let v0 = self.vertices[0].coords();
        self.vertices[1..]
            .iter()
            .map(|v| v.coords().iter().zip(v0).map(|(a, b)| a - b).collect())
            .collect()
    }

    /// The orientation multivector `(v_1-v_0) ^ ... ^ (v_k-v_0)`.
    pub fn multivector(&self) -> MultiVector {
        MultiVector::new(self.d(), self.spanning_vectors())
    }

    /// k-dimensional Hausdorff measure `|eta|/k!`, computed from the
    /// coordinate expansion of the orientation multivector. The expansion
    /// route stays accurate for nearly degenerate simplices, where the
    /// Gram determinant loses half its digits to cancellation — the
    /// canonical degenerate-deletion test depends on that accuracy.
    pub fn volume(&self) -> f64 {
        if self.k() == 0 {
            return 1.0;
        }
        self.multivector().norm() / factorial(self.k())
    }

    /// Largest pairwise vertex distance; the length scale for the
    /// degenerate-volume test.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.vertices.len() {
            for j in (i + 1)..self.vertices.len() {
                best = best.max(self.vertices[i].distance(&self.vertices[j]));
            }
        }
        best
    }

    /// The i-th boundary face (vertex i omitted).
    pub fn face(&self, i: usize) -> Simplex {
        let mut vertices = self.vertices.clone();
        vertices.remove(i);
        Simplex { vertices }
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[")?;
        for (i, v) in self.vertices.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]]")
    }
}

/// A simple m-vector in `R^n`, stored as its spanning vectors together with
/// its coordinate expansion over the basis `e_I`, `I` an ascending m-subset
/// of `{0, ..., n-1}`.
#[derive(Clone, Debug)]
pub struct MultiVector {
    ambient: usize,
    spanning: Vec<Vec<f64>>,
    expansion: Vec<(Vec<usize>, f64)>,
}

impl MultiVector {
    pub fn new(ambient: usize, spanning: Vec<Vec<f64>>) -> Self {
        debug_assert!(spanning.iter().all(|v| v.len() == ambient));
        let m = spanning.len();
        let expansion = index_subsets(ambient, m)
            .into_iter()
            .map(|idx| {
                let mut minor = vec![vec![0.0; m]; m];
                for (r, vec) in spanning.iter().enumerate() {
                    for (c, &i) in idx.iter().enumerate() {
                        minor[r][c] = vec[i];
                    }
                }
                let det = det_in_place(&mut minor);
                (idx, det)
            })
            .collect();
        MultiVector {
            ambient,
            spanning,
            expansion,
        }
    }

    pub fn grade(&self) -> usize {
        self.spanning.len()
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn spanning(&self) -> &[Vec<f64>] {
        &self.spanning
    }

    /// Coordinates over the basis `e_I`, ascending index sets.
    pub fn expansion(&self) -> &[(Vec<usize>, f64)] {
        &self.expansion
    }

    /// Euclidean (mass) norm `|eta|`. For simple multivectors the mass norm
    /// equals the Euclidean norm of the coordinate expansion.
    pub fn norm(&self) -> f64 {
        self.expansion
            .iter()
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of the spatial projection `|p eta|`, treating coordinate 0 as
    /// time: the part of the expansion over index sets avoiding 0.
    pub fn spatial_norm(&self) -> f64 {
        self.expansion
            .iter()
            .filter(|(idx, _)| !idx.contains(&0))
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of the time contraction `|eta ⌟ dt|`: the part of the expansion
    /// over index sets containing 0.
    pub fn temporal_norm(&self) -> f64 {
        self.expansion
            .iter()
            .filter(|(idx, _)| idx.contains(&0))
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt()
    }
}

/// `(euclidean, spatial, temporal)` norms of a simple multivector, with
/// coordinate 0 of the ambient space read as time. The three satisfy
/// `temporal^2 + spatial^2 = euclidean^2` exactly up to rounding.
pub fn simple_norms(mv: &MultiVector) -> (f64, f64, f64) {
    (mv.norm(), mv.spatial_norm(), mv.temporal_norm())
}

/// An affine map `x -> M x + b` from `R^{in_dim}` to `R^{out_dim}`.
#[derive(Clone, Debug)]
pub struct AffineMap {
    matrix: Vec<Vec<f64>>, // out_dim rows, in_dim columns
    translation: Vec<f64>,
}

impl AffineMap {
    pub fn new(matrix: Vec<Vec<f64>>, translation: Vec<f64>) -> Result<Self> {
        if matrix.len() != translation.len() {
            return Err(Error::DimensionMismatch(
                "affine map rows and translation length differ".into(),
            ));
        }
        let in_dim = matrix.first().map_or(0, |r| r.len());
        if matrix.iter().any(|r| r.len() != in_dim) {
            return Err(Error::DimensionMismatch("ragged affine matrix".into()));
        }
        let finite = matrix.iter().flatten().all(|x| x.is_finite())
            && translation.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("affine map entries".into()));
        }
        Ok(AffineMap {
            matrix,
            translation,
        })
    }

    pub fn identity(d: usize) -> Self {
        let matrix = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        AffineMap {
            matrix,
            translation: vec![0.0; d],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.first().map_or(0, |r| r.len())
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn apply(&self, p: &Point) -> Point {
        let coords = self
            .matrix
            .iter()
            .zip(&self.translation)
            .map(|(row, b)| dot(row, p.coords()) + b)
            .collect();
        Point::new(coords)
    }
}

/// Which side of a hyperplane `n . x = c` to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Keep `n . x <= c`.
    Leq,
    /// Keep `n . x >= c`.
    Geq,
}

/// A polyhedral k-chain in `R^d` in canonical form.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    k: usize,
    d: usize,
    terms: BTreeMap<Simplex, f64>,
}

impl Chain {
    /// Canonicalize raw terms into a chain. All simplices must be
    /// k-simplices in `R^d`; repeated-vertex and near-zero-volume simplices
    /// are deleted; coefficients merge under the sorted-vertex form with
    /// permutation parity; coefficients below `1e-12` of the largest are
    /// dropped.
    pub fn new(k: usize, d: usize, raw: Vec<(Simplex, f64)>) -> Result<Chain> {
        let mut terms: BTreeMap<Simplex, f64> = BTreeMap::new();
        for (simplex, coeff) in raw {
            if simplex.k() != k || simplex.d() != d {
                return Err(Error::DimensionMismatch(format!(
                    "expected {k}-simplices in R^{d}, got a {}-simplex in R^{}",
                    simplex.k(),
                    simplex.d()
                )));
            }
            if !coeff.is_finite() || simplex.vertices().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("term {simplex} x {coeff}")));
            }
            if coeff == 0.0 {
                continue;
            }
            let Some((vertices, sign)) = sort_with_parity(simplex.vertices.clone()) else {
                continue; // repeated vertex: degenerate, deleted
            };
            let sorted = Simplex { vertices };
            if k >= 1 {
                // Degenerate (affine dimension < k) up to the canonical
                // relative tolerance: compare sqrt(det Gram) against the
                // simplex diameter to the k-th power.
                let scale = sorted.diameter().powi(k as i32);
                if sorted.volume() * factorial(k) <= CANONICAL_REL_TOL * scale {
                    continue;
                }
            }
            *terms.entry(sorted).or_insert(0.0) += sign * coeff;
        }
        let max_abs = terms.values().fold(0.0f64, |m, c| m.max(c.abs()));
        terms.retain(|_, c| c.abs() > CANONICAL_REL_TOL * max_abs && *c != 0.0);
        Ok(Chain { k, d, terms })
    }

    /// The zero k-chain in `R^d`.
    pub fn zero(k: usize, d: usize) -> Chain {
        Chain {
            k,
            d,
            terms: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterate the canonical terms in their deterministic order.
    pub fn terms(&self) -> impl Iterator<Item = (&Simplex, f64)> {
        self.terms.iter().map(|(s, &c)| (s, c))
    }

    pub fn coefficient(&self, s: &Simplex) -> f64 {
        self.terms.get(s).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// All vertices appearing in the chain (with repetitions).
    pub fn vertices(&self) -> impl Iterator<Item = &Point> {
        self.terms.keys().flat_map(|s| s.vertices().iter())
    }

    pub fn add(&self, other: &Chain) -> Result<Chain> {
        if self.k != other.k || self.d != other.d {
            return Err(Error::DimensionMismatch(format!(
                "adding a {}-chain in R^{} to a {}-chain in R^{}",
                self.k, self.d, other.k, other.d
            )));
        }
        let raw = self
            .terms()
            .chain(other.terms())
            .map(|(s, c)| (s.clone(), c))
            .collect();
        Chain::new(self.k, self.d, raw)
    }

    pub fn sub(&self, other: &Chain) -> Result<Chain> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Chain {
        if factor == 0.0 {
            return Chain::zero(self.k, self.d);
        }
        Chain {
            k: self.k,
            d: self.d,
            terms: self
                .terms
                .iter()
                .map(|(s, c)| (s.clone(), c * factor))
                .collect(),
        }
    }

    pub fn neg(&self) -> Chain {
        self.scale(-1.0)
    }

    /// Boundary chain: `bd [[v_0..v_k]] = sum_i (-1)^i [[v_0..v̂_i..v_k]]`.
    pub fn boundary(&self) -> Result<Chain> {
        if self.k == 0 {
            return Err(Error::UndefinedBoundary);
        }
        let mut raw = Vec::with_capacity(self.terms.len() * (self.k + 1));
        for (simplex, coeff) in self.terms() {
            for i in 0..=self.k {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                raw.push((simplex.face(i), sign * coeff));
            }
        }
        Chain::new(self.k - 1, self.d, raw)
    }

    /// Whether the chain has zero boundary. 0-chains count as cycles when
    /// their coefficients balance to zero total.
    pub fn is_cycle(&self) -> bool {
        if self.k == 0 {
            let total: f64 = self.terms.values().sum();
            let scale = self.max_abs_coeff().max(1.0);
            return total.abs() <= 1e-9 * scale;
        }
        self.boundary().map(|b| b.is_zero()).unwrap_or(false)
    }

    /// Mass: `sum |coeff| * H^k(simplex)` over the canonical terms.
    pub fn mass(&self) -> f64 {
        self.terms().map(|(s, c)| c.abs() * s.volume()).sum()
    }

    /// Pushforward under an affine map. The target dimension may be lower
    /// than k; images that degenerate are deleted (zero mass).
    pub fn affine_pushforward(&self, map: &AffineMap) -> Result<Chain> {
        if map.in_dim() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "map expects R^{}, chain lives in R^{}",
                map.in_dim(),
                self.d
            )));
        }
        let raw = self
            .terms()
            .map(|(s, c)| {
                let vertices = s.vertices().iter().map(|v| map.apply(v)).collect();
                (Simplex { vertices }, c)
            })
            .collect();
        Chain::new(self.k, map.out_dim(), raw)
    }

    /// The copy of the chain placed in the time slice `{t} x R^d`.
    pub fn at_time(&self, t: f64) -> Chain {
        let terms = self
            .terms
            .iter()
            .map(|(s, &c)| {
                let vertices = s.vertices().iter().map(|v| v.at_time(t)).collect();
                (Simplex { vertices }, c)
            })
            .collect();
        // Lifting into a time slice neither merges nor degenerates
        // simplices, so the canonical form carries over directly.
        Chain {
            k: self.k,
            d: self.d + 1,
            terms,
        }
    }

    /// Spatial projection `p_*`: drop the time coordinate of every vertex
    /// and canonicalize (time-degenerate images are deleted).
    pub fn drop_time(&self) -> Result<Chain> {
        if self.d == 0 {
            return Err(Error::DimensionMismatch(
                "cannot drop the time coordinate of a chain in R^0".into(),
            ));
        }
        let raw = self
            .terms()
            .map(|(s, c)| {
                let vertices = s.vertices().iter().map(|v| v.drop_time()).collect();
                (Simplex { vertices }, c)
            })
            .collect();
        Chain::new(self.k, self.d - 1, raw)
    }

    /// Prism product `[[a,b]] x T`, a `(k+1)`-chain in `R^{1+d}` with the new
    /// time coordinate first:
    /// `sum_i (-1)^i [[(a,v_0),..,(a,v_i),(b,v_i),..,(b,v_k)]]` per simplex.
    /// Its boundary satisfies
    /// `bd([[a,b]] x T) = d_b x T - d_a x T - [[a,b]] x bd(T)`.
    pub fn interval_product(a: f64, b: f64, t: &Chain) -> Result<Chain> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("interval endpoints".into()));
        }
        if a >= b {
            return Err(Error::InvalidInterval { a, b });
        }
        let k = t.k;
        let mut raw = Vec::with_capacity(t.terms.len() * (k + 1));
        for (simplex, coeff) in t.terms() {
            let verts = simplex.vertices();
            for i in 0..=k {
                let mut vertices = Vec::with_capacity(k + 2);
                for v in &verts[..=i] {
                    vertices.push(v.at_time(a));
                }
                for v in &verts[i..] {
                    vertices.push(v.at_time(b));
                }
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                raw.push((Simplex { vertices }, sign * coeff));
            }
        }
        Chain::new(k + 1, t.d + 1, raw)
    }

    /// Restriction to a closed half-space `{x : n.x <= c}` (or `>=`).
    ///
    /// Each simplex is split exactly along the hyperplane by recursive
    /// subdivision at its first strictly-crossing edge; pieces keep the
    /// parent orientation by construction. Simplices lying entirely in the
    /// hyperplane are kept (closed half-space semantics); masses of the two
    /// sides partition the total exactly whenever no simplex face lies in
    /// the hyperplane.
    pub fn restrict_halfspace(&self, normal: &[f64], c: f64, side: Side) -> Result<Chain> {
        self.restrict_halfspace_with(normal, c, side, true)
    }

    /// As [`Chain::restrict_halfspace`], with control over simplices lying
    /// entirely inside the hyperplane: `keep_on_plane = false` implements
    /// the open half-space (one-sided limit) semantics used by slicing.
    pub fn restrict_halfspace_with(
        &self,
        normal: &[f64],
        c: f64,
        side: Side,
        keep_on_plane: bool,
    ) -> Result<Chain> {
        if normal.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "normal has dimension {}, chain lives in R^{}",
                normal.len(),
                self.d
            )));
        }
        if normal.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidHyperplane);
        }
        if normal.iter().any(|x| !x.is_finite()) || !c.is_finite() {
            return Err(Error::NonFinite("hyperplane data".into()));
        }
        // For a coordinate hyperplane, pin the clipped coordinate of every
        // crossing vertex to the exact plane value. Slab decompositions and
        // time reparameterizations then share cut vertices bit for bit.
        let axis_pin = {
            let nonzero: Vec<usize> = (0..normal.len()).filter(|&i| normal[i] != 0.0).collect();
            match nonzero.as_slice() {
                [axis] => Some((*axis, c / normal[*axis])),
                _ => None,
            }
        };
        let mut raw = Vec::new();
        for (simplex, coeff) in self.terms() {
            let svals: Vec<f64> = simplex
                .vertices()
                .iter()
                .map(|v| {
                    let s = dot(normal, v.coords()) - c;
                    match side {
                        Side::Leq => s,
                        Side::Geq => -s,
                    }
                })
                .collect();
            clip_simplex(
                simplex.vertices().to_vec(),
                svals,
                keep_on_plane,
                axis_pin,
                &mut |piece| raw.push((piece, coeff)),
            );
        }
        Chain::new(self.k, self.d, raw)
    }

    /// Exact canonical equality (same simplices, identical coefficients).
    pub fn chains_equal(&self, other: &Chain) -> bool {
        self.k == other.k && self.d == other.d && self.terms == other.terms
    }

    /// Canonical equality up to a coefficient tolerance: the canonical
    /// difference has no coefficient above `tol`.
    pub fn approx_eq(&self, other: &Chain, tol: f64) -> bool {
        if self.k != other.k || self.d != other.d {
            return false;
        }
        match self.sub(other) {
            Ok(diff) => diff.max_abs_coeff() <= tol,
            Err(_) => false,
        }
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0 (k={}, d={})", self.k, self.d);
        }
        for (i, (s, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c} * {s}")?;
        }
        Ok(())
    }
}

/// Sort vertices ascending, tracking permutation parity. Returns `None` if
/// two vertices are exactly equal (a degenerate simplex).
fn sort_with_parity(mut vertices: Vec<Point>) -> Option<(Vec<Point>, f64)> {
    let mut sign = 1.0;
    for i in 1..vertices.len() {
        let mut j = i;
        while j > 0 {
            match vertices[j - 1].cmp_lex(&vertices[j]) {
                Ordering::Greater => {
                    vertices.swap(j - 1, j);
                    sign = -sign;
                    j -= 1;
                }
                Ordering::Equal => return None,
                Ordering::Less => break,
            }
        }
    }
    Some((vertices, sign))
}

/// Split a simplex along `{s = 0}` keeping the `s <= 0` part.
///
/// `svals[i]` is the signed value at `vertices[i]`; crossing vertices are
/// assigned the value 0.0 exactly, so the recursion terminates and the two
/// half-space restrictions share crossing points bit for bit.
fn clip_simplex(
    vertices: Vec<Point>,
    svals: Vec<f64>,
    keep_on_plane: bool,
    axis_pin: Option<(usize, f64)>,
    out: &mut impl FnMut(Simplex),
) {
    if svals.iter().all(|&s| s <= 0.0) {
        if keep_on_plane || svals.iter().any(|&s| s < 0.0) {
            out(Simplex { vertices });
        }
        return;
    }
    if svals.iter().all(|&s| s >= 0.0) {
        return;
    }
    // First strictly-crossing edge in lexicographic (i, j) order.
    let n = vertices.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if svals[i] * svals[j] < 0.0 {
                let t = svals[i] / (svals[i] - svals[j]);
                let mut coords: Vec<f64> = vertices[i]
                    .coords()
                    .iter()
                    .zip(vertices[j].coords())
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                if let Some((axis, value)) = axis_pin {
                    coords[axis] = value;
                }
                let x = Point::new(coords);
                // Replacing v_j (resp. v_i) by the crossing point keeps the
                // parent orientation on both pieces.
                let mut v1 = vertices.clone();
                let mut s1 = svals.clone();
                v1[j] = x.clone();
                s1[j] = 0.0;
                clip_simplex(v1, s1, keep_on_plane, axis_pin, out);
                let mut v2 = vertices;
                let mut s2 = svals;
                v2[i] = x;
                s2[i] = 0.0;
                clip_simplex(v2, s2, keep_on_plane, axis_pin, out);
                return;
            }
        }
    }
    unreachable!("mixed signs imply a strictly-crossing edge");
}

/// Largest discrepancy between two chains when paired against a fixed
/// battery of polynomial differential forms: every coordinate `k`-form
/// with constant, linear, and quadratic coefficient functions. The
/// pairings are computed in closed form (uniform moments of a simplex),
/// so the gap vanishes — up to rounding — precisely when the chains agree
/// as currents, no matter how differently they are subdivided. Use this to
/// compare chains produced along different clipping or slicing routes;
/// [`fuzzy_chain_gap`] is the stricter simplex-by-simplex variant.
pub fn current_gap(a: &Chain, b: &Chain) -> Result<f64> {
    if a.k() != b.k() || a.d() != b.d() {
        return Err(Error::DimensionMismatch(format!(
            "comparing a {}-chain in R^{} with a {}-chain in R^{}",
            a.k(),
            a.d(),
            b.k(),
            b.d()
        )));
    }
    let d = a.d();
    let mut probes = vec![FormCoeff::One];
    for i in 0..d {
        probes.push(FormCoeff::Lin(i));
        for j in i..d {
            probes.push(FormCoeff::Quad(i, j));
        }
    }
    let mut worst = 0.0f64;
    for probe in &probes {
        let ma = form_moments(a, probe);
        let mb = form_moments(b, probe);
        for key in ma.keys().chain(mb.keys()) {
            let va = ma.get(key).copied().unwrap_or(0.0);
            let vb = mb.get(key).copied().unwrap_or(0.0);
            worst = worst.max((va - vb).abs());
        }
    }
    Ok(worst)
}

/// Coefficient function of a test form: `1`, `x_i`, or `x_i x_j`.
enum FormCoeff {
    One,
    Lin(usize),
    Quad(usize, usize),
}

impl FormCoeff {
    /// Mean of the coefficient over a simplex (uniform measure): affine
    /// functions average to their centroid value, quadratics follow the
    /// exact second-moment formula for simplices.
    fn mean(&self, vertices: &[Point]) -> f64 {
        let n = vertices.len() as f64;
        match *self {
            FormCoeff::One => 1.0,
            FormCoeff::Lin(i) => {
                vertices.iter().map(|v| v.coords()[i]).sum::<f64>() / n
            }
            FormCoeff::Quad(i, j) => {
                let si: f64 = vertices.iter().map(|v| v.coords()[i]).sum();
                let sj: f64 = vertices.iter().map(|v| v.coords()[j]).sum();
                let sij: f64 = vertices
                    .iter()
                    .map(|v| v.coords()[i] * v.coords()[j])
                    .sum();
                (sij + si * sj) / (n * (n + 1.0))
            }
        }
    }
}

/// Integrals of `f dx^I` over the chain, keyed by the index set `I`.
fn form_moments(chain: &Chain, f: &FormCoeff) -> BTreeMap<Vec<usize>, f64> {
    let mut out = BTreeMap::new();
    let scale = factorial(chain.k());
    for (s, c) in chain.terms() {
        let mean = f.mean(s.vertices());
        for (index_set, component) in s.multivector().expansion() {
            *out.entry(index_set.clone()).or_insert(0.0) += c * component / scale * mean;
        }
    }
    out
}

/// A conservative measure of how far apart two chains are when their
/// vertices agree only up to rounding: greedily match simplices whose
/// sorted vertex lists coincide within `vertex_tol`, then sum
/// `|coeff difference| * volume` over matches plus `|coeff| * volume` over
/// everything unmatched. Zero means the chains agree as weighted geometry
/// to within the tolerance.
pub fn fuzzy_chain_gap(a: &Chain, b: &Chain, vertex_tol: f64) -> f64 {
    let mut gap = 0.0;
    let mut unmatched: Vec<(&Simplex, f64)> = b.terms().collect();
    'outer: for (sa, ca) in a.terms() {
        for idx in 0..unmatched.len() {
            let (sb, cb) = unmatched[idx];
            if simplices_close(sa, sb, vertex_tol) {
                gap += (ca - cb).abs() * sa.volume();
                unmatched.swap_remove(idx);
                continue 'outer;
            }
        }
        gap += ca.abs() * sa.volume();
    }
    for (sb, cb) in unmatched {
        gap += cb.abs() * sb.volume();
    }
    gap
}

fn simplices_close(a: &Simplex, b: &Simplex, tol: f64) -> bool {
    a.vertices().len() == b.vertices().len()
        && a.vertices()
            .iter()
            .zip(b.vertices())
            .all(|(p, q)| p.distance(q) <= tol)
}

/// Wire format for chains (and trajectories, via the `spacetime` flag).
/// Terms are serialized in canonical order, so equal chains produce
/// byte-identical JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainJson {
    pub k: usize,
    pub d: usize,
    pub terms: Vec<ChainTermJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacetime: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainTermJson {
    pub vertices: Vec<Vec<f64>>,
    pub coeff: f64,
}

impl Chain {
    pub fn to_wire(&self) -> ChainJson {
        ChainJson {
            k: self.k,
            d: self.d,
            terms: self
                .terms()
                .map(|(s, c)| ChainTermJson {
                    vertices: s.vertices().iter().map(|v| v.coords().to_vec()).collect(),
                    coeff: c,
                })
                .collect(),
            spacetime: None,
        }
    }

    pub fn from_wire(wire: &ChainJson) -> Result<Chain> {
        let raw = wire
            .terms
            .iter()
            .map(|t| {
                let vertices = t.vertices.iter().map(|v| Point::new(v.clone())).collect();
                Ok((Simplex::new(vertices)?, t.coeff))
            })
            .collect::<Result<Vec<_>>>()?;
        Chain::new(wire.k, wire.d, raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("chain serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Chain> {
        let wire: ChainJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("bad chain JSON: {e}")))?;
        Chain::from_wire(&wire)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Determinant by Gaussian elimination with partial pivoting. The matrices
/// here are at most 4x4 (Gram matrices and multivector minors).
pub(crate) fn det_in_place(m: &mut [Vec<f64>]) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for j in col..n {
                m[row][j] -= f * m[col][j];
            }
        }
    }
    det
}

/// Ascending m-subsets of `{0, .., n-1}`.
pub(crate) fn index_subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    if m > n {
        return vec![];
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    fn rec(start: usize, n: usize, m: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, m, current, out);
            current.pop();
        }
    }
    rec(0, n, m, &mut current, &mut out);
    out
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    pub fn pt(coords: &[f64]) -> Point {
        Point::new(coords.to_vec())
    }

    pub fn simplex(vertices: &[&[f64]]) -> Simplex {
        Simplex::new(vertices.iter().map(|v| pt(v)).collect()).unwrap()
    }

    pub fn chain(k: usize, d: usize, terms: &[(&[&[f64]], f64)]) -> Chain {
        Chain::new(
            k,
            d,
            terms.iter().map(|(vs, c)| (simplex(vs), *c)).collect(),
        )
        .unwrap()
    }

    /// Random nondegenerate k-simplex with coordinates in [-1, 1].
    pub fn random_simplex<R: Rng>(rng: &mut R, k: usize, d: usize) -> Simplex {
        loop {
            let vertices: Vec<Point> = (0..=k)
                .map(|_| Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            let s = Simplex::new(vertices).unwrap();
            if k == 0 || s.volume() > 1e-3 {
                return s;
            }
        }
    }

    pub fn random_chain<R: Rng>(rng: &mut R, k: usize, d: usize, n: usize) -> Chain {
        let raw = (0..n)
            .map(|_| (random_simplex(rng, k, d), rng.gen_range(-2.0..2.0)))
            .collect();
        Chain::new(k, d, raw).unwrap()
    }

    /// Random closed polygonal 1-cycle with `n >= 3` segments.
    pub fn random_loop<R: Rng>(rng: &mut R, d: usize, n: usize, scale: f64) -> Chain {
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new((0..d).map(|_| rng.gen_range(-scale..scale)).collect()))
            .collect();
        let coeff = rng.gen_range(0.5..2.0);
        let raw = (0..n)
            .map(|i| {
                let a = pts[i].clone();
                let b = pts[(i + 1) % n].clone();
                (Simplex::new(vec![a, b]).unwrap(), coeff)
            })
            .collect();
        Chain::new(1, d, raw).unwrap()
    }
}
