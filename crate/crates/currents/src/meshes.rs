//! Mesh construction and serialization: a plain wire format for simplicial
//! meshes plus generators for the fixtures used across the crate — interval
//! meshes, a square annulus with a central hole, concentric disk meshes,
//! and the loops that live on them.

use serde::{Deserialize, Serialize};

use crate::chains::{Chain, Point, Simplex};
use crate::complex::SimplicialComplex;
use crate::{Error, Result};

/// Wire form of a simplicial mesh: vertex coordinates plus
/// top-dimensional cells as vertex-index tuples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    /// Ambient dimension.
    pub d: usize,
    /// Cell dimension.
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Mesh> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad mesh JSON: {e}")))
    }

    /// Realize and validate: builds the full face-closed complex.
    pub fn to_complex(&self) -> Result<SimplicialComplex> {
        let mut cells = Vec::with_capacity(self.cells.len());
        for tuple in &self.cells {
            if tuple.len() != self.dim + 1 {
                return Err(Error::MeshConformity(format!(
                    "cell {:?} does not have {} vertices",
                    tuple,
                    self.dim + 1
                )));
            }
            let verts: Result<Vec<Point>> = tuple
                .iter()
                .map(|&i| {
                    self.vertices
                        .get(i)
                        .map(|c| Point::new(c.clone()))
                        .ok_or_else(|| {
                            Error::MeshConformity(format!("vertex index {i} out of range"))
                        })
                })
                .collect();
            cells.push(Simplex::new(verts?)?);
        }
        SimplicialComplex::build(&cells)
    }
}

/// Uniform mesh of the segment `[a, b]` with `n` edges.
pub fn interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if !(a.is_finite() && b.is_finite()) || a >= b || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "interval mesh needs a < b and n >= 1, got [{a}, {b}] with n = {n}"
        )));
    }
    let vertices: Vec<Vec<f64>> = (0..=n)
        .map(|i| vec![a + (b - a) * i as f64 / n as f64])
        .collect();
    let cells: Vec<Vec<usize>> = (0..n).map(|i| vec![i, i + 1]).collect();
    Ok(Mesh {
        d: 1,
        dim: 1,
        vertices,
        cells,
    })
}

/// Eight points around a square of half-side `r`, counterclockwise from
/// `(r, 0)`: edge midpoints and corners alternating.
fn square_ring(r: f64) -> [[f64; 2]; 8] {
    [
        [r, 0.0],
        [r, r],
        [0.0, r],
        [-r, r],
        [-r, 0.0],
        [-r, -r],
        [0.0, -r],
        [r, -r],
    ]
}

/// A triangulated square annulus: outer boundary the square `[-2, 2]^2`,
/// inner hole the square `[-1, 1]^2`. Sixteen vertices (eight per ring),
/// sixteen triangles (two per sector).
pub fn square_annulus_mesh() -> Mesh {
    let outer = square_ring(2.0);
    let inner = square_ring(1.0);
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(16);
    vertices.extend(outer.iter().map(|p| p.to_vec()));
    vertices.extend(inner.iter().map(|p| p.to_vec()));
    let mut cells = Vec::with_capacity(16);
    for i in 0..8 {
        let o0 = i;
        let o1 = (i + 1) % 8;
        let in0 = 8 + i;
        let in1 = 8 + (i + 1) % 8;
        cells.push(vec![o0, o1, in0]);
        cells.push(vec![o1, in1, in0]);
    }
    Mesh {
        d: 2,
        dim: 2,
        vertices,
        cells,
    }
}

/// The hole-encircling loop of the square annulus: the inner ring traversed
/// counterclockwise, one segment per ring edge (total length 8).
pub fn square_annulus_generator() -> Chain {
    ring_loop_chain(&square_ring(1.0))
}

/// A triangulated square disk `[-1/2, 1/2]^2` built from `rings` nested
/// square rings of half-sides `1/2, 1/4, ..., 1/(2 rings)`, each carrying
/// eight vertices. Consecutive rings are joined by sixteen triangles and
/// the innermost ring is fanned to a central vertex, so the mesh has
/// `8 rings + 1` vertices and `16 (rings - 1) + 8` triangles. The domain
/// is convex and the ring loops of [`concentric_loop`] are edge paths of
/// this mesh.
pub fn concentric_square_disk_mesh(rings: usize) -> Result<Mesh> {
    if rings == 0 {
        return Err(Error::InvalidArgument(
            "a disk mesh needs at least one ring".into(),
        ));
    }
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(8 * rings + 1);
    for j in 1..=rings {
        let ring = square_ring(0.5 / j as f64);
        vertices.extend(ring.iter().map(|p| p.to_vec()));
    }
    vertices.push(vec![0.0, 0.0]);
    let center = 8 * rings;
    let mut cells = Vec::with_capacity(16 * (rings - 1) + 8);
    for j in 0..rings.saturating_sub(1) {
        let outer = 8 * j;
        let inner = 8 * (j + 1);
        for i in 0..8 {
            let o0 = outer + i;
            let o1 = outer + (i + 1) % 8;
            let in0 = inner + i;
            let in1 = inner + (i + 1) % 8;
            cells.push(vec![o0, o1, in0]);
            cells.push(vec![o1, in1, in0]);
        }
    }
    let innermost = 8 * (rings - 1);
    for i in 0..8 {
        cells.push(vec![innermost + i, innermost + (i + 1) % 8, center]);
    }
    Ok(Mesh {
        d: 2,
        dim: 2,
        vertices,
        cells,
    })
}

/// The `j`-th ring loop of the concentric disk mesh: the square ring of
/// half-side `1/(2j)` traversed counterclockwise, one oriented segment per
/// ring edge. Its mass is the ring perimeter `4/j`, and on a
/// [`concentric_square_disk_mesh`] with at least `j` rings it is an edge
/// cycle enclosing area `1/j^2`.
pub fn concentric_loop(j: usize) -> Result<Chain> {
    if j == 0 {
        return Err(Error::InvalidArgument("ring index starts at 1".into()));
    }
    Ok(ring_loop_chain(&square_ring(0.5 / j as f64)))
}

/// A weighted sum of point masses: the 0-chain with a vertex at each given
/// position carrying the given signed weight. Positions sharing identical
/// coordinates merge canonically.
pub fn dirac_chain(d: usize, terms: &[(Vec<f64>, f64)]) -> Result<Chain> {
    let raw: Result<Vec<(Simplex, f64)>> = terms
        .iter()
        .map(|(coords, c)| {
            if coords.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "point of dimension {} in a {d}-dimensional chain",
                    coords.len()
                )));
            }
            Ok((Simplex::new(vec![Point::new(coords.clone())])?, *c))
        })
        .collect();
    Chain::new(0, d, raw?)
}

/// A random cycle that is guaranteed to bound: the boundary of a random
/// top-dimensional chain of the complex, built from `cells` distinct cells
/// with signed coefficients `scale`, `2 scale`, or `3 scale`. The result is
/// a geometric `(dim - 1)`-cycle whose homogeneous flat norm is finite by
/// construction. Coefficients are integer multiples of `scale` so that the
/// telescoping sums in the boundary cancel exactly when `scale` is a power
/// of two; continuous jitter would leave sub-ulp residues on shared faces
/// and the result would no longer pass an exact cycle test.
pub fn random_boundary_cycle<R: rand::Rng>(
    x: &SimplicialComplex,
    rng: &mut R,
    cells: usize,
    scale: f64,
) -> Result<Chain> {
    let top = x.dim();
    if top == 0 {
        return Err(Error::InvalidArgument(
            "a 0-dimensional complex has no bounding cycles".into(),
        ));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "coefficient scale must be positive, got {scale}"
        )));
    }
    let available = x.num_cells(top);
    if cells == 0 || cells > available {
        return Err(Error::InvalidArgument(format!(
            "asked for {cells} of {available} top cells"
        )));
    }
    let picks = rand::seq::index::sample(rng, available, cells);
    let entries: Vec<(usize, f64)> = picks
        .iter()
        .map(|i| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (i, sign * rng.gen_range(1..=3) as f64 * scale)
        })
        .collect();
    x.embedded(top, &entries)?.boundary().to_chain()
}

/// A counterclockwise loop through the given ring points, one oriented
/// segment per consecutive pair.
fn ring_loop_chain(ring: &[[f64; 2]]) -> Chain {
    let raw: Vec<(Simplex, f64)> = (0..ring.len())
        .map(|i| {
            let a = Point::new(ring[i].to_vec());
            let b = Point::new(ring[(i + 1) % ring.len()].to_vec());
            (Simplex::new(vec![a, b]).expect("ring points are distinct"), 1.0)
        })
        .collect();
    Chain::new(1, 2, raw).expect("ring loop is a valid chain")
}
