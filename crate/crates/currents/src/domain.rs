//! Planar polygonal domains and their inward geometry.
//!
//! A [`PolygonalDomain`] is a simple polygon with optional polygonal holes.
//! The module answers one geometric question exactly — is a unit vector a
//! *good direction* at a boundary point at a given scale, i.e. does the
//! boundary patch look like a graph over the perpendicular axis with the
//! material on the upper side — and builds two objects on top of it:
//!
//! * [`direction_field`] covers the boundary with balls carrying verified
//!   good directions (edge normals and corner bisectors), blends them with
//!   piecewise-linear hat weights into a unit field defined near the
//!   boundary, and re-verifies the blend at a thousand sampled boundary
//!   points.
//! * [`contraction_map`] pushes the whole closed domain slightly inward
//!   along that field, with a sampled Lipschitz estimate kept below `1 + ε`
//!   and sampled image/homotopy containment in the domain.
//!
//! [`no_retraction_witness`] is an exact closed-form predicate for a
//! classical obstruction: two disks of radius `L·t` centered at `(±t, t)`
//! miss the wedge-with-disk region `{x₂ ≤ |x₁|} ∩ B̄(0,1)` exactly when
//! `L < √2`, so no Lipschitz retraction with constant below `√2` can be
//! ruled out by this configuration while every `L ≥ √2` is obstructed.

use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Boundary samples used to verify a direction field.
const FIELD_SAMPLES: usize = 1000;

/// Random point pairs used for the sampled Lipschitz estimate of a
/// contraction map.
const LIP_PAIRS: usize = 10_000;

/// Halvings allowed when searching for a ball scale or a step size.
const MAX_HALVINGS: usize = 20;

/// Seed for the deterministic interior sampling of `contraction_map`.
const SAMPLING_SEED: u64 = 20_260_819;

// ---------------------------------------------------------------------------
// Small 2D vector helpers.

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}

/// Distance from `p` to the closed segment `[a, b]`.
fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let e = sub(b, a);
    let ee = dot(e, e);
    if ee == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), e) / ee).clamp(0.0, 1.0);
    dist(p, [a[0] + t * e[0], a[1] + t * e[1]])
}

/// Twice the signed area of the triangle `a, b, c` (positive when
/// counterclockwise).
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Whether the open segments `(a, b)` and `(c, d)` cross properly
/// (transversally, away from all four endpoints).
fn segments_properly_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

// ---------------------------------------------------------------------------
// The domain type.

/// A planar domain bounded by a simple counterclockwise polygon with
/// clockwise simple polygonal holes strictly inside it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonalDomain {
    outer: Vec<[f64; 2]>,
    #[serde(default)]
    holes: Vec<Vec<[f64; 2]>>,
}

impl PolygonalDomain {
    /// Validate and build a domain from its boundary polygons.
    ///
    /// The outer polygon must be simple and counterclockwise, each hole
    /// simple and clockwise, holes strictly inside the outer polygon, and no
    /// two boundary components may touch or cross.
    pub fn new(outer: Vec<[f64; 2]>, holes: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let dom = PolygonalDomain { outer, holes };
        dom.validate()?;
        Ok(dom)
    }

    /// Parse a domain from `{"outer": [[x,y],...], "holes": [[[x,y],...]]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let dom: PolygonalDomain = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("bad polygon JSON: {e}")))?;
        dom.validate()?;
        Ok(dom)
    }

    /// Serialize to the polygon JSON format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }

    /// The outer boundary polygon (counterclockwise).
    pub fn outer(&self) -> &[[f64; 2]] {
        &self.outer
    }

    /// The hole polygons (each clockwise).
    pub fn holes(&self) -> &[Vec<[f64; 2]>] {
        &self.holes
    }

    fn validate(&self) -> Result<()> {
        for ring in self.rings() {
            if ring.len() < 3 {
                return Err(Error::InvalidArgument(
                    "polygon needs at least three vertices".into(),
                ));
            }
            for p in ring {
                if !p[0].is_finite() || !p[1].is_finite() {
                    return Err(Error::NonFinite("polygon vertex".into()));
                }
            }
            for i in 0..ring.len() {
                let j = (i + 1) % ring.len();
                if ring[i] == ring[j] {
                    return Err(Error::InvalidArgument(
                        "polygon has a repeated consecutive vertex".into(),
                    ));
                }
            }
        }
        if signed_area(&self.outer) <= 0.0 {
            return Err(Error::InvalidArgument(
                "outer polygon must be counterclockwise".into(),
            ));
        }
        for hole in &self.holes {
            if signed_area(hole) >= 0.0 {
                return Err(Error::InvalidArgument(
                    "hole polygons must be clockwise".into(),
                ));
            }
        }
        // Simplicity and separation: no two edges of the full boundary may
        // cross properly, and no vertex may lie on a non-incident edge.
        let edges = self.edges();
        for i in 0..edges.len() {
            for j in (i + 1)..edges.len() {
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if segments_properly_cross(a, b, c, d) {
                    return Err(Error::InvalidArgument(
                        "boundary edges cross".into(),
                    ));
                }
            }
        }
        for ring in self.rings() {
            for &p in ring {
                for &(a, b) in &edges {
                    if p == a || p == b {
                        continue;
                    }
                    if point_segment_distance(p, a, b) == 0.0 {
                        return Err(Error::InvalidArgument(
                            "a vertex lies on a non-incident boundary edge".into(),
                        ));
                    }
                }
            }
        }
        for hole in &self.holes {
            for &p in hole {
                if !point_in_ring(p, &self.outer) {
                    return Err(Error::InvalidArgument(
                        "hole vertex outside the outer polygon".into(),
                    ));
                }
            }
        }
        for (i, hole) in self.holes.iter().enumerate() {
            for other in self.holes.iter().skip(i + 1) {
                if hole.iter().any(|&p| point_in_ring(p, other))
                    || other.iter().any(|&p| point_in_ring(p, hole))
                {
                    return Err(Error::InvalidArgument("holes overlap".into()));
                }
            }
        }
        Ok(())
    }

    /// All boundary rings: the outer polygon first, then the holes.
    pub fn rings(&self) -> impl Iterator<Item = &Vec<[f64; 2]>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// All directed boundary edges in storage orientation (outer
    /// counterclockwise, holes clockwise), so the material always lies on
    /// the left of the direction of travel.
    pub fn edges(&self) -> Vec<([f64; 2], [f64; 2])> {
        let mut out = Vec::new();
        for ring in self.rings() {
            for i in 0..ring.len() {
                out.push((ring[i], ring[(i + 1) % ring.len()]));
            }
        }
        out
    }

    /// Whether `p` lies in the open domain (even–odd rule over the full
    /// boundary; points exactly on the boundary are classified arbitrarily).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the full boundary.
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        self.edges()
            .iter()
            .map(|&(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` lies in the open domain with positive boundary clearance.
    pub fn strictly_inside(&self, p: [f64; 2]) -> bool {
        self.contains(p) && self.distance_to_boundary(p) > 0.0
    }

    /// Total length of the boundary.
    pub fn perimeter(&self) -> f64 {
        self.edges().iter().map(|&(a, b)| dist(a, b)).sum()
    }

    /// The point at arclength `s` along ring `ring_idx` (0 = outer,
    /// `1 + i` = hole `i`), wrapping around.
    fn ring_point(&self, ring_idx: usize, s: f64) -> [f64; 2] {
        let ring = self.rings().nth(ring_idx).expect("ring index");
        let total: f64 = (0..ring.len())
            .map(|i| dist(ring[i], ring[(i + 1) % ring.len()]))
            .sum();
        let mut rem = s.rem_euclid(total);
        for i in 0..ring.len() {
            let a = ring[i];
            let b = ring[(i + 1) % ring.len()];
            let len = dist(a, b);
            if rem <= len {
                let t = if len == 0.0 { 0.0 } else { rem / len };
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
            rem -= len;
        }
        ring[0]
    }

    /// Deterministic boundary samples: `n` points distributed over the
    /// components proportionally to their perimeters, equispaced with a
    /// half-step offset inside each component.
    pub fn boundary_samples(&self, n: usize) -> Vec<[f64; 2]> {
        let perims: Vec<f64> = self
            .rings()
            .map(|ring| {
                (0..ring.len())
                    .map(|i| dist(ring[i], ring[(i + 1) % ring.len()]))
                    .sum()
            })
            .collect();
        let total: f64 = perims.iter().sum();
        let mut out = Vec::with_capacity(n + perims.len());
        for (ring_idx, &perim) in perims.iter().enumerate() {
            let count = ((n as f64 * perim / total).round() as usize).max(2);
            for j in 0..count {
                let s = (j as f64 + 0.5) / count as f64 * perim;
                out.push(self.ring_point(ring_idx, s));
            }
        }
        out
    }
}

fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let mut twice = 0.0;
    for i in 0..ring.len() {
        let a = ring[i];
        let b = ring[(i + 1) % ring.len()];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    twice / 2.0
}

fn point_in_ring(p: [f64; 2], ring: &[[f64; 2]]) -> bool {
    let mut inside = false;
    for i in 0..ring.len() {
        let a = ring[i];
        let b = ring[(i + 1) % ring.len()];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

// ---------------------------------------------------------------------------
// Good directions.

/// A boundary-edge piece clipped to the query ball, in graph coordinates.
struct ClippedPiece {
    a: [f64; 2],
    b: [f64; 2],
    ua: f64,
    ub: f64,
    point_like: bool,
}

impl ClippedPiece {
    fn u_lo(&self) -> f64 {
        self.ua.min(self.ub)
    }

    fn u_hi(&self) -> f64 {
        self.ua.max(self.ub)
    }

    /// The piece's point at graph coordinate `u` (an endpoint when `u`
    /// matches one bitwise, interpolated otherwise).
    fn point_at(&self, u: f64) -> [f64; 2] {
        if u == self.ua || self.point_like {
            self.a
        } else if u == self.ub {
            self.b
        } else {
            let t = (u - self.ua) / (self.ub - self.ua);
            [
                self.a[0] + t * (self.b[0] - self.a[0]),
                self.a[1] + t * (self.b[1] - self.a[1]),
            ]
        }
    }
}

/// Whether the unit vector `v` is a good direction for the domain at `x0`
/// at scale `delta`: inside the closed ball `B(x0, delta)` every line
/// parallel to `v` meets the boundary at most once, and at each such
/// crossing the material lies on the `+v` side.
///
/// The test is exact for polygons: boundary edges are clipped to the ball,
/// the clipped pieces are projected to the axis perpendicular to `v`, and
/// the graph property becomes interval arithmetic — pieces may not be
/// parallel to `v`, their projections may not overlap except at shared
/// points, and every piece must have its material-side normal making a
/// positive inner product with `v`.
///
/// Returns [`Error::NotApplicable`] when the ball misses the boundary.
pub fn is_good_direction(
    dom: &PolygonalDomain,
    x0: [f64; 2],
    v: [f64; 2],
    delta: f64,
) -> Result<bool> {
    if !x0[0].is_finite() || !x0[1].is_finite() || !v[0].is_finite() || !v[1].is_finite() {
        return Err(Error::NonFinite("good-direction query".into()));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "good-direction scale must be positive, got {delta}"
        )));
    }
    if (norm(v) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, |v| = {}",
            norm(v)
        )));
    }
    let edges = dom.edges();
    let reaches = edges
        .iter()
        .any(|&(a, b)| point_segment_distance(x0, a, b) < delta);
    if !reaches {
        return Err(Error::NotApplicable(format!(
            "the ball of radius {delta} around ({}, {}) misses the boundary",
            x0[0], x0[1]
        )));
    }

    // Graph axis: u measures position perpendicular to v.
    let uhat = [v[1], -v[0]];
    let mut pieces: Vec<ClippedPiece> = Vec::new();
    for &(p, q) in &edges {
        let e = sub(q, p);
        let qa = dot(e, e);
        let qb = 2.0 * dot(sub(p, x0), e);
        let qc = dot(sub(p, x0), sub(p, x0)) - delta * delta;
        let (lo, hi) = {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                if qc < 0.0 {
                    (0.0, 1.0)
                } else {
                    continue;
                }
            } else {
                let r = disc.sqrt();
                let s1 = (-qb - r) / (2.0 * qa);
                let s2 = (-qb + r) / (2.0 * qa);
                let lo = s1.max(0.0);
                let hi = s2.min(1.0);
                if lo > hi {
                    continue;
                }
                (lo, hi)
            }
        };
        let at = |s: f64| -> [f64; 2] {
            if s == 0.0 {
                p
            } else if s == 1.0 {
                q
            } else {
                [p[0] + s * e[0], p[1] + s * e[1]]
            }
        };
        let a = at(lo);
        let b = if lo == hi { a } else { at(hi) };
        let point_like = a == b;
        if !point_like {
            // Material side: boundary edges keep the material on their left.
            let n_left = [-e[1], e[0]];
            if dot(n_left, v) <= 0.0 {
                return Ok(false);
            }
        }
        let ua = dot(sub(a, x0), uhat);
        let ub = dot(sub(b, x0), uhat);
        if !point_like && ua == ub {
            // A positive-length piece parallel to v is a whole line of
            // crossings.
            return Ok(false);
        }
        pieces.push(ClippedPiece {
            a,
            b,
            ua,
            ub,
            point_like,
        });
    }

    for i in 0..pieces.len() {
        for j in (i + 1)..pieces.len() {
            let lo = pieces[i].u_lo().max(pieces[j].u_lo());
            let hi = pieces[i].u_hi().min(pieces[j].u_hi());
            if lo < hi {
                return Ok(false);
            }
            if lo == hi {
                // Touching projections are fine only where the pieces share
                // the actual boundary point (a polygon corner).
                let pi = pieces[i].point_at(lo);
                let pj = pieces[j].point_at(lo);
                if pi != pj {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Normalized convex combination of unit directions.
///
/// Weights must be nonnegative and sum to one (within `1e-9`). A vanishing
/// combination signals that the inputs could not all be good directions at
/// one point and raises [`Error::ContradictoryDirections`].
pub fn combine_directions(dirs: &[[f64; 2]], weights: &[f64]) -> Result<[f64; 2]> {
    if dirs.is_empty() || dirs.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching nonempty direction/weight lists, got {} and {}",
            dirs.len(),
            weights.len()
        )));
    }
    for v in dirs {
        if (norm(*v) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "directions must be unit vectors, |v| = {}",
                norm(*v)
            )));
        }
    }
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be nonnegative, got {w}"
            )));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "weights must sum to one, got {total}"
        )));
    }
    let mut s = [0.0, 0.0];
    for (v, &w) in dirs.iter().zip(weights) {
        s[0] += w * v[0];
        s[1] += w * v[1];
    }
    let len = norm(s);
    if len <= 1e-9 {
        return Err(Error::ContradictoryDirections(
            "convex combination of the directions vanishes".into(),
        ));
    }
    Ok([s[0] / len, s[1] / len])
}

// ---------------------------------------------------------------------------
// The direction field.

/// A blended inward direction field near the boundary: cover balls with
/// verified good directions and PL hat weights.
#[derive(Clone, Debug)]
pub struct DirectionField {
    centers: Vec<[f64; 2]>,
    directions: Vec<[f64; 2]>,
    deltas: Vec<f64>,
    delta: f64,
    lipschitz: f64,
    lipschitz_samples: usize,
    verified_samples: usize,
}

/// Summary of a direction-field construction, for JSON reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectionFieldReport {
    /// Number of cover balls.
    pub centers: usize,
    /// Smallest ball radius (the field's guaranteed scale).
    pub delta: f64,
    /// Sampled Lipschitz estimate of the field along the boundary.
    pub lipschitz: f64,
    /// Sample pairs behind the Lipschitz estimate.
    pub lipschitz_samples: usize,
    /// Boundary points where the field was re-verified as a good direction.
    pub verified_samples: usize,
}

impl DirectionField {
    /// Smallest cover-ball radius.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The cover balls: center, unit direction, radius.
    pub fn balls(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2], f64)> + '_ {
        (0..self.centers.len()).map(|i| (self.centers[i], self.directions[i], self.deltas[i]))
    }

    /// Hat weights and their blended unit direction at `x`, or `None`
    /// outside every cover ball. The first component is the raw hat sum
    /// (the PL cutoff the contraction map uses).
    fn blend(&self, x: [f64; 2]) -> Option<(f64, Result<[f64; 2]>)> {
        let mut ws = Vec::new();
        let mut vs = Vec::new();
        let mut total = 0.0;
        for i in 0..self.centers.len() {
            let w = 1.0 - dist(x, self.centers[i]) / self.deltas[i];
            if w > 0.0 {
                ws.push(w);
                vs.push(self.directions[i]);
                total += w;
            }
        }
        if total <= 0.0 {
            return None;
        }
        for w in &mut ws {
            *w /= total;
        }
        Some((total, combine_directions(&vs, &ws)))
    }

    /// The blended unit direction at `x`.
    ///
    /// Defined on the union of the cover balls (a neighbourhood of the
    /// boundary); outside it the field is undefined and an error is
    /// returned.
    pub fn eval(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        match self.blend(x) {
            Some((_, v)) => v,
            None => Err(Error::InvalidArgument(format!(
                "({}, {}) is outside the field's boundary neighbourhood",
                x[0], x[1]
            ))),
        }
    }

    /// The largest `r` such that `B(x, r)` fits inside one cover ball —
    /// the scale at which the field value at `x` is known good.
    pub fn coverage_margin(&self, x: [f64; 2]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in 0..self.centers.len() {
            best = best.max(self.deltas[i] - dist(x, self.centers[i]));
        }
        best
    }

    /// The construction summary.
    pub fn report(&self) -> DirectionFieldReport {
        DirectionFieldReport {
            centers: self.centers.len(),
            delta: self.delta,
            lipschitz: self.lipschitz,
            lipschitz_samples: self.lipschitz_samples,
            verified_samples: self.verified_samples,
        }
    }
}

/// One boundary feature for clearance computations: an edge or a vertex.
enum Feature {
    Edge([f64; 2], [f64; 2]),
    Vertex([f64; 2]),
}

impl Feature {
    fn distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Feature::Edge(a, b) => point_segment_distance(p, *a, *b),
            Feature::Vertex(v) => dist(p, *v),
        }
    }

    /// Whether the feature touches the closed segment `[a, b]`.
    fn touches_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        match self {
            Feature::Edge(c, d) => {
                point_segment_distance(*c, a, b) == 0.0
                    || point_segment_distance(*d, a, b) == 0.0
                    || point_segment_distance(a, *c, *d) == 0.0
                    || point_segment_distance(b, *c, *d) == 0.0
                    || segments_properly_cross(a, b, *c, *d)
            }
            Feature::Vertex(v) => point_segment_distance(*v, a, b) == 0.0,
        }
    }

    /// Whether the feature contains the point `p`.
    fn touches_point(&self, p: [f64; 2]) -> bool {
        match self {
            Feature::Edge(a, b) => point_segment_distance(p, *a, *b) == 0.0,
            Feature::Vertex(v) => *v == p,
        }
    }
}

/// Half the distance from a prospective ball center to the nearest boundary
/// feature not touching its carrier (the whole carrier edge, or the corner
/// point itself).
fn cover_radius(features: &[Feature], carrier: Option<([f64; 2], [f64; 2])>, center: [f64; 2]) -> f64 {
    let mut nearest = f64::INFINITY;
    for f in features {
        let touching = match carrier {
            Some((a, b)) => f.touches_segment(a, b),
            None => f.touches_point(center),
        };
        if touching {
            continue;
        }
        nearest = nearest.min(f.distance(center));
    }
    nearest / 2.0
}

/// Verify a candidate ball, halving its radius until the direction is good
/// at that scale.
fn verified_ball(
    dom: &PolygonalDomain,
    center: [f64; 2],
    dir: [f64; 2],
    mut delta: f64,
) -> Result<([f64; 2], [f64; 2], f64)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::FieldConstruction(format!(
            "cover ball at ({}, {}) has no room (radius {delta})",
            center[0], center[1]
        )));
    }
    for _ in 0..=MAX_HALVINGS {
        if is_good_direction(dom, center, dir, delta)? {
            return Ok((center, dir, delta));
        }
        delta /= 2.0;
    }
    Err(Error::FieldConstruction(format!(
        "no scale at ({}, {}) makes ({}, {}) a good direction",
        center[0], center[1], dir[0], dir[1]
    )))
}

/// Build the inward direction field of a domain.
///
/// Cover balls are placed at every corner (direction: inward bisector of
/// the two edge normals) and every edge midpoint (direction: inward edge
/// normal), with radii set to half the distance to the nearest non-touching
/// boundary feature and then halved until the direction verifies as good at
/// that scale. Edges left with coverage gaps get additional midgap balls.
/// The blended field is then re-verified at ~10³ boundary samples; any
/// failure aborts the construction.
pub fn direction_field(dom: &PolygonalDomain) -> Result<DirectionField> {
    let mut features: Vec<Feature> = Vec::new();
    for ring in dom.rings() {
        for i in 0..ring.len() {
            features.push(Feature::Vertex(ring[i]));
            features.push(Feature::Edge(ring[i], ring[(i + 1) % ring.len()]));
        }
    }

    let mut centers: Vec<[f64; 2]> = Vec::new();
    let mut directions: Vec<[f64; 2]> = Vec::new();
    let mut deltas: Vec<f64> = Vec::new();
    // Per-edge centers for the coverage sweep: (arclength position, index).
    let mut edge_cover: Vec<Vec<(f64, usize)>> = Vec::new();
    let mut edge_geom: Vec<([f64; 2], [f64; 2])> = Vec::new();

    let push_ball = |ball: ([f64; 2], [f64; 2], f64),
                         centers: &mut Vec<[f64; 2]>,
                         directions: &mut Vec<[f64; 2]>,
                         deltas: &mut Vec<f64>|
     -> usize {
        centers.push(ball.0);
        directions.push(ball.1);
        deltas.push(ball.2);
        centers.len() - 1
    };

    for ring in dom.rings() {
        let n = ring.len();
        let mut corner_ids = Vec::with_capacity(n);
        for i in 0..n {
            let prev = ring[(i + n - 1) % n];
            let here = ring[i];
            let next = ring[(i + 1) % n];
            let n_prev = left_normal(prev, here);
            let n_next = left_normal(here, next);
            let sum = [n_prev[0] + n_next[0], n_prev[1] + n_next[1]];
            let len = norm(sum);
            if len <= 1e-9 {
                return Err(Error::FieldConstruction(format!(
                    "degenerate corner at ({}, {}): edge normals cancel",
                    here[0], here[1]
                )));
            }
            let bisector = [sum[0] / len, sum[1] / len];
            let radius = cover_radius(&features, None, here);
            let ball = verified_ball(dom, here, bisector, radius)?;
            corner_ids.push(push_ball(ball, &mut centers, &mut directions, &mut deltas));
        }
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let normal = left_normal(a, b);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let radius = cover_radius(&features, Some((a, b)), mid);
            let ball = verified_ball(dom, mid, normal, radius)?;
            let mid_id = push_ball(ball, &mut centers, &mut directions, &mut deltas);
            let len = dist(a, b);
            edge_cover.push(vec![
                (0.0, corner_ids[i]),
                (len / 2.0, mid_id),
                (len, corner_ids[(i + 1) % n]),
            ]);
            edge_geom.push((a, b));
        }
    }

    // Coverage sweep: every point of every edge must lie in the interior of
    // a ball centered on that edge, so hat weights stay positive along the
    // whole boundary; uncovered stretches (including exact touch points of
    // two balls) get additional balls at their midpoints.
    for (cover, &(a, b)) in edge_cover.iter_mut().zip(&edge_geom) {
        let len = dist(a, b);
        let normal = left_normal(a, b);
        for _round in 0..200 {
            match open_cover_gap(cover, &deltas, len) {
                None => break,
                Some(s) => {
                    let t = s / len;
                    let center = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    let radius = cover_radius(&features, Some((a, b)), center);
                    let ball = verified_ball(dom, center, normal, radius)?;
                    let id = push_ball(ball, &mut centers, &mut directions, &mut deltas);
                    cover.push((s, id));
                }
            }
        }
        if open_cover_gap(cover, &deltas, len).is_some() {
            return Err(Error::FieldConstruction(format!(
                "could not cover the edge from ({}, {}) to ({}, {})",
                a[0], a[1], b[0], b[1]
            )));
        }
    }

    let delta = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut field = DirectionField {
        centers,
        directions,
        deltas,
        delta,
        lipschitz: 0.0,
        lipschitz_samples: 0,
        verified_samples: 0,
    };

    // Re-verify the blended field at sampled boundary points, at the scale
    // at which each sample is inside a cover ball.
    let samples = dom.boundary_samples(FIELD_SAMPLES);
    let mut values = Vec::with_capacity(samples.len());
    for &x in &samples {
        let margin = field.coverage_margin(x);
        if margin <= 1e-12 {
            return Err(Error::FieldConstruction(format!(
                "cover misses the boundary point ({}, {})",
                x[0], x[1]
            )));
        }
        let v = field.eval(x)?;
        if !is_good_direction(dom, x, v, margin)? {
            return Err(Error::FieldConstruction(format!(
                "blended field fails the good-direction check at ({}, {})",
                x[0], x[1]
            )));
        }
        values.push(v);
    }
    field.verified_samples = samples.len();

    let mut lipschitz = 0.0f64;
    let mut pairs = 0usize;
    for i in 1..samples.len() {
        let gap = dist(samples[i], samples[i - 1]);
        if gap > 1e-9 {
            lipschitz = lipschitz.max(dist(values[i], values[i - 1]) / gap);
            pairs += 1;
        }
    }
    field.lipschitz = lipschitz;
    field.lipschitz_samples = pairs;
    Ok(field)
}

/// First point of `[0, len]` not interior to any `(s - δ, s + δ)` from
/// `cover`, reported as the midpoint of the uncovered stretch (a good spot
/// for a new ball), or `None` when the open intervals cover everything.
fn open_cover_gap(cover: &[(f64, usize)], deltas: &[f64], len: f64) -> Option<f64> {
    let mut intervals: Vec<(f64, f64)> = cover
        .iter()
        .map(|&(s, id)| (s - deltas[id], s + deltas[id]))
        .collect();
    intervals.sort_by(|p, q| p.0.total_cmp(&q.0));
    // Invariant: every point of [0, reach) is interior to a processed
    // interval, so a next interval starting at or after `reach` leaves the
    // point `reach` itself uncovered.
    let mut reach = 0.0f64;
    for (lo, hi) in intervals {
        if reach > len {
            return None;
        }
        if lo >= reach {
            return Some((reach + lo.min(len).max(reach)) / 2.0);
        }
        reach = reach.max(hi);
    }
    if reach > len {
        None
    } else {
        Some((reach + len) / 2.0)
    }
}

fn left_normal(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let e = sub(b, a);
    let n = [-e[1], e[0]];
    let len = norm(n);
    [n[0] / len, n[1] / len]
}

// ---------------------------------------------------------------------------
// The contraction map.

/// A small inward contraction `f(x) = x + η · φ(x) · ñ(x)` of the closed
/// domain into its interior, where `ñ` is a verified direction field and
/// `φ` is the PL cutoff `min(1, Σ hat weights)` — equal to 1 where the
/// cover is thick, 0 beyond the cover's reach, so deep interior points are
/// fixed exactly.
#[derive(Clone, Debug)]
pub struct ContractionMap {
    domain: PolygonalDomain,
    field: DirectionField,
    epsilon: f64,
    eta: f64,
    halvings: usize,
    lip_estimate: f64,
    lip_pairs: usize,
    sup_displacement: f64,
    containment_samples: usize,
}

/// Summary of a contraction-map construction, for JSON reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    /// The requested bound: Lipschitz estimate stays below `1 + epsilon`
    /// and displacements stay below `epsilon`.
    pub epsilon: f64,
    /// Accepted inward step size.
    pub eta: f64,
    /// Halvings spent in the step-size search.
    pub halvings: usize,
    /// Largest sampled two-point Lipschitz ratio.
    pub lip_estimate: f64,
    /// Point pairs behind the estimate.
    pub lip_pairs: usize,
    /// Largest sampled displacement `|f(x) - x|`.
    pub sup_displacement: f64,
    /// Points whose images (and homotopy segments) were verified inside.
    pub containment_samples: usize,
}

impl ContractionMap {
    /// Apply the contraction.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match self.field.blend(x) {
            Some((hat_sum, Ok(v))) => {
                let step = self.eta * hat_sum.min(1.0);
                [x[0] + step * v[0], x[1] + step * v[1]]
            }
            _ => x,
        }
    }

    /// The underlying direction field.
    pub fn field(&self) -> &DirectionField {
        &self.field
    }

    /// The domain the map contracts.
    pub fn domain(&self) -> &PolygonalDomain {
        &self.domain
    }

    /// The construction summary.
    pub fn report(&self) -> ContractionReport {
        ContractionReport {
            epsilon: self.epsilon,
            eta: self.eta,
            halvings: self.halvings,
            lip_estimate: self.lip_estimate,
            lip_pairs: self.lip_pairs,
            sup_displacement: self.sup_displacement,
            containment_samples: self.containment_samples,
        }
    }
}

/// Build a verified contraction of the closed domain into its interior.
///
/// The step size starts at `0.9 · ε · min(1, δ_field)` and halves (at most
/// 20 times) until, over ~10⁴ random interior pairs plus ~10³ boundary
/// samples: the two-point Lipschitz ratios stay below `1 + ε`, every
/// sampled image lies strictly inside, and the straight-line homotopy from
/// the identity stays inside at sampled intermediate times.
pub fn contraction_map(dom: &PolygonalDomain, epsilon: f64) -> Result<ContractionMap> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let field = direction_field(dom)?;

    // Deterministic samples: boundary points plus rejection-sampled
    // interior points.
    let boundary = dom.boundary_samples(FIELD_SAMPLES);
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &p in &dom.outer {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let mut interior = Vec::with_capacity(2 * LIP_PAIRS);
    let mut budget = 200 * LIP_PAIRS;
    while interior.len() < 2 * LIP_PAIRS && budget > 0 {
        budget -= 1;
        let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if dom.strictly_inside(p) {
            interior.push(p);
        }
    }
    if interior.len() < 2 * LIP_PAIRS {
        return Err(Error::ContractionConstruction(
            "interior sampling failed: the domain has almost no area".into(),
        ));
    }

    let mut eta = 0.9 * epsilon * field.delta().min(1.0);
    for halvings in 0..=MAX_HALVINGS {
        let map = ContractionMap {
            domain: dom.clone(),
            field: field.clone(),
            epsilon,
            eta,
            halvings,
            lip_estimate: 0.0,
            lip_pairs: 0,
            sup_displacement: 0.0,
            containment_samples: 0,
        };
        let mut ok = true;
        let mut lip = 0.0f64;
        let mut pairs = 0usize;
        let mut sup = 0.0f64;
        let mut contained = 0usize;

        for chunk in interior.chunks_exact(2) {
            let (a, b) = (chunk[0], chunk[1]);
            let gap = dist(a, b);
            if gap <= 1e-12 {
                continue;
            }
            let ratio = dist(map.eval(a), map.eval(b)) / gap;
            lip = lip.max(ratio);
            pairs += 1;
            if ratio > 1.0 + epsilon {
                ok = false;
                break;
            }
        }
        if ok {
            'containment: for &x in boundary.iter().chain(&interior) {
                let y = map.eval(x);
                sup = sup.max(dist(x, y));
                if !dom.strictly_inside(y) {
                    ok = false;
                    break;
                }
                for s in [0.25, 0.5, 0.75] {
                    let m = [x[0] + s * (y[0] - x[0]), x[1] + s * (y[1] - x[1])];
                    if m != x && !dom.strictly_inside(m) {
                        ok = false;
                        break 'containment;
                    }
                }
                contained += 1;
            }
        }
        if ok {
            return Ok(ContractionMap {
                lip_estimate: lip,
                lip_pairs: pairs,
                sup_displacement: sup,
                containment_samples: contained,
                ..map
            });
        }
        eta /= 2.0;
    }
    Err(Error::ContractionConstruction(format!(
        "no step size satisfied the sampled bounds after {MAX_HALVINGS} halvings"
    )))
}

// ---------------------------------------------------------------------------
// The no-retraction witness.

/// The smallest value of `x₂ - |x₁|` over the intersection lens of the two
/// closed disks `B((±t, t), L·t)` — positive exactly when the lens misses
/// the region `{x₂ ≤ |x₁|}`, `+∞` when the lens is empty.
///
/// Closed form: the lens is empty for `L < 1`; its lowest point on the
/// symmetry axis gives `t·(1 - √(L² - 1))` for `1 ≤ L < √2`; for `L ≥ √2`
/// the constrained minimum moves off the axis and equals `t·(2 - √2·L)`.
pub fn no_retraction_gap(l: f64, t: f64) -> Result<f64> {
    check_witness_args(l, t)?;
    if l < 1.0 {
        return Ok(f64::INFINITY);
    }
    if l < std::f64::consts::SQRT_2 {
        Ok(t * (1.0 - (l * l - 1.0).sqrt()))
    } else {
        Ok(t * (2.0 - std::f64::consts::SQRT_2 * l))
    }
}

/// Whether a map with Lipschitz constant `l` is obstructed from retracting:
/// true exactly when the two closed disks `B((±t, t), l·t)` have empty
/// intersection with the wedge region `{x₂ ≤ |x₁|} ∩ B̄(0, 1)`.
///
/// Evaluated analytically via [`no_retraction_gap`]; the answer is `l < √2`
/// for every valid `t` (the configuration is scale invariant).
pub fn no_retraction_witness(l: f64, t: f64) -> Result<bool> {
    Ok(no_retraction_gap(l, t)? > 0.0)
}

fn check_witness_args(l: f64, t: f64) -> Result<()> {
    if !l.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite("witness parameters".into()));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant must be positive, got {l}"
        )));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "witness scale must lie in (0, 1), got {t}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> PolygonalDomain {
        PolygonalDomain::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![],
        )
        .unwrap()
    }

    fn l_shape() -> PolygonalDomain {
        PolygonalDomain::new(
            vec![
                [0.0, 0.0],
                [2.0, 0.0],
                [2.0, 1.0],
                [1.0, 1.0],
                [1.0, 2.0],
                [0.0, 2.0],
            ],
            vec![],
        )
        .unwrap()
    }

    fn square_annulus() -> PolygonalDomain {
        PolygonalDomain::new(
            vec![[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]],
            vec![vec![[-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]]],
        )
        .unwrap()
    }

    #[test]
    fn domain_validation_and_json() {
        let dom = unit_square();
        let text = dom.to_json();
        let back = PolygonalDomain::from_json(&text).unwrap();
        assert_eq!(back.outer(), dom.outer());

        let parsed = PolygonalDomain::from_json(
            r#"{"outer": [[0,0],[3,0],[3,3],[0,3]], "holes": [[[1,1],[1,2],[2,2],[2,1]]]}"#,
        )
        .unwrap();
        assert_eq!(parsed.holes().len(), 1);

        // Clockwise outer ring.
        assert!(matches!(
            PolygonalDomain::new(
                vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],
                vec![]
            ),
            Err(Error::InvalidArgument(_))
        ));
        // Hole with counterclockwise orientation.
        assert!(PolygonalDomain::new(
            vec![[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [0.0, 3.0]],
            vec![vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]]],
        )
        .is_err());
        // Hole outside the outer polygon.
        assert!(PolygonalDomain::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![vec![[5.0, 5.0], [5.0, 6.0], [6.0, 6.0], [6.0, 5.0]]],
        )
        .is_err());
        // Self-crossing bowtie.
        assert!(PolygonalDomain::new(
            vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
            vec![]
        )
        .is_err());

        assert!(dom.contains([0.5, 0.5]));
        assert!(!dom.contains([1.5, 0.5]));
        let ann = square_annulus();
        assert!(ann.contains([1.5, 0.0]));
        assert!(!ann.contains([0.0, 0.0]));
        assert!((ann.distance_to_boundary([1.5, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn good_direction_square_cases() {
        let dom = unit_square();
        let s = std::f64::consts::FRAC_1_SQRT_2;

        assert!(is_good_direction(&dom, [0.5, 0.0], [0.0, 1.0], 0.4).unwrap());
        assert!(!is_good_direction(&dom, [0.5, 0.0], [0.0, -1.0], 0.4).unwrap());
        assert!(is_good_direction(&dom, [0.0, 0.0], [s, s], 0.3).unwrap());
        // Tangent direction: the edge itself becomes a vertical line.
        assert!(!is_good_direction(&dom, [0.5, 0.0], [1.0, 0.0], 0.4).unwrap());
        // At scale 1.1 the ball sees the opposite sides of the square.
        assert!(!is_good_direction(&dom, [0.5, 0.0], [0.0, 1.0], 1.1).unwrap());
        // Ball that misses the boundary entirely.
        assert!(matches!(
            is_good_direction(&dom, [0.5, 0.5], [0.0, 1.0], 0.2),
            Err(Error::NotApplicable(_))
        ));
        // Non-unit direction.
        assert!(matches!(
            is_good_direction(&dom, [0.5, 0.0], [0.0, 2.0], 0.2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn good_direction_reflex_corner() {
        let dom = l_shape();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // The reflex corner's material bisector.
        assert!(is_good_direction(&dom, [1.0, 1.0], [-s, -s], 0.4).unwrap());
        // The outward bisector fails.
        assert!(!is_good_direction(&dom, [1.0, 1.0], [s, s], 0.4).unwrap());
        // One of the incident edge normals alone is NOT good at the corner:
        // the other edge runs parallel to it.
        assert!(!is_good_direction(&dom, [1.0, 1.0], [0.0, -1.0], 0.4).unwrap());
    }

    #[test]
    fn combine_directions_cases() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let single = combine_directions(&[[0.0, 1.0]], &[1.0]).unwrap();
        assert_eq!(single, [0.0, 1.0]);

        let pair = combine_directions(&[[0.0, 1.0], [1.0, 0.0]], &[0.5, 0.5]).unwrap();
        assert!((pair[0] - s).abs() <= 1e-15 && (pair[1] - s).abs() <= 1e-15);

        assert!(matches!(
            combine_directions(&[[0.0, 1.0], [0.0, -1.0]], &[0.5, 0.5]),
            Err(Error::ContradictoryDirections(_))
        ));
        assert!(combine_directions(&[[0.0, 1.0]], &[0.5]).is_err());
        assert!(combine_directions(&[[0.0, 3.0]], &[1.0]).is_err());
    }

    #[test]
    fn square_field_is_edge_normals_away_from_corners() {
        let dom = unit_square();
        let field = direction_field(&dom).unwrap();
        assert_eq!(field.report().verified_samples, 1000);
        assert!(field.delta() > 0.0);

        // At edge midpoints only the midpoint ball is active.
        assert_eq!(field.eval([0.5, 0.0]).unwrap(), [0.0, 1.0]);
        assert_eq!(field.eval([1.0, 0.5]).unwrap(), [-1.0, 0.0]);
        assert_eq!(field.eval([0.5, 1.0]).unwrap(), [0.0, -1.0]);
        assert_eq!(field.eval([0.0, 0.5]).unwrap(), [1.0, 0.0]);

        // At a corner only the corner ball is active: the bisector.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = field.eval([0.0, 0.0]).unwrap();
        assert!((v[0] - s).abs() <= 1e-15 && (v[1] - s).abs() <= 1e-15);

        // Between them the blend is a unit vector and still good.
        let x = [0.3, 0.0];
        let v = field.eval(x).unwrap();
        assert!((norm(v) - 1.0).abs() <= 1e-12);
        assert!(is_good_direction(&dom, x, v, field.coverage_margin(x)).unwrap());

        // Outside the cover the field is undefined.
        assert!(field.eval([0.5, 0.5]).is_err());
    }

    #[test]
    fn lshape_and_annulus_fields_verify() {
        let field = direction_field(&l_shape()).unwrap();
        assert!(field.report().verified_samples >= 1000);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = field.eval([1.0, 1.0]).unwrap();
        assert!((v[0] + s).abs() <= 1e-15 && (v[1] + s).abs() <= 1e-15);

        let ann = square_annulus();
        let field = direction_field(&ann).unwrap();
        // Outer bottom edge points up into the material, the hole's bottom
        // edge points down into the material.
        assert_eq!(field.eval([0.0, -2.0]).unwrap(), [0.0, 1.0]);
        assert_eq!(field.eval([0.0, -1.0]).unwrap(), [0.0, -1.0]);
        assert_eq!(field.eval([0.0, 1.0]).unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn field_inwardness_at_sixteen_depths() {
        for dom in [unit_square(), l_shape(), square_annulus()] {
            let field = direction_field(&dom).unwrap();
            for x in dom.boundary_samples(60) {
                let v = field.eval(x).unwrap();
                let delta = field.coverage_margin(x);
                assert!(delta > 0.0);
                for i in 1..=16 {
                    let t = delta * i as f64 / 17.0;
                    let p = [x[0] + t * v[0], x[1] + t * v[1]];
                    assert!(
                        dom.contains(p),
                        "inward step of {t} from ({}, {}) left the domain",
                        x[0],
                        x[1]
                    );
                }
            }
        }
    }

    #[test]
    fn convex_combinations_of_good_directions_stay_good() {
        let dom = l_shape();
        // At the convex corner (0,0) the good directions form the open arc
        // between the two edge normals (the normals themselves are tangent
        // to the other edge); pick two directions strictly inside it. Same
        // at the reflex corner (1,1), whose arc runs from (0,-1) to (-1,0).
        let h = 0.75f64.sqrt();
        let corner_dirs = [[h, 0.5], [0.5, h]];
        let reflex_dirs = [
            [-0.1, -(1.0f64 - 0.01).sqrt()],
            [-(1.0f64 - 0.01).sqrt(), -0.1],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(151);
        for (x0, dirs, delta) in [
            ([0.0, 0.0], corner_dirs, 0.3),
            ([1.0, 1.0], reflex_dirs, 0.2),
        ] {
            for v in dirs {
                assert!(is_good_direction(&dom, x0, v, delta).unwrap());
            }
            for _ in 0..20 {
                let w = rng.gen_range(0.05..0.95);
                let mixed = combine_directions(&dirs, &[w, 1.0 - w]).unwrap();
                assert!(is_good_direction(&dom, x0, mixed, delta).unwrap());
            }
        }
    }

    #[test]
    fn square_contraction_frozen_behaviour() {
        let dom = unit_square();
        let map = contraction_map(&dom, 0.1).unwrap();
        let report = map.report();
        assert!(report.sup_displacement < 0.1);
        assert!(report.lip_estimate <= 1.1);
        assert!(report.lip_pairs >= 9_000);
        assert!(report.containment_samples > 0);

        // Deep interior points are fixed bitwise (the cutoff vanishes).
        assert_eq!(map.eval([0.5, 0.5]), [0.5, 0.5]);

        // Boundary points move inward by less than epsilon.
        for x in dom.boundary_samples(64) {
            let y = map.eval(x);
            let moved = dist(x, y);
            assert!(moved > 0.0 && moved < 0.1);
            assert!(dom.strictly_inside(y));
        }

        // The report serializes.
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("sup_displacement"));
    }

    #[test]
    fn contractions_compose_and_handle_reflex_corners() {
        for dom in [l_shape(), square_annulus()] {
            let map = contraction_map(&dom, 0.2).unwrap();
            // Three-fold composition still lands inside.
            for x in dom.boundary_samples(40) {
                let mut p = x;
                for _ in 0..3 {
                    p = map.eval(p);
                    assert!(dom.strictly_inside(p));
                }
            }
        }
        // Near the reflex corner of the L-shape the image is strictly
        // inside.
        let dom = l_shape();
        let map = contraction_map(&dom, 0.2).unwrap();
        let y = map.eval([1.0, 1.0]);
        assert!(dom.strictly_inside(y));
        assert!(y[0] < 1.0 && y[1] < 1.0);
    }

    #[test]
    fn no_retraction_closed_form() {
        // Frozen values at t = 0.1.
        for l in [1.0, 1.2, 1.41] {
            assert!(no_retraction_witness(l, 0.1).unwrap(), "L = {l}");
        }
        for l in [1.5, 2.0, std::f64::consts::SQRT_2] {
            assert!(!no_retraction_witness(l, 0.1).unwrap(), "L = {l}");
        }
        // Sub-unit Lipschitz constants leave the disks disjoint.
        assert_eq!(no_retraction_gap(0.5, 0.1).unwrap(), f64::INFINITY);
        // The documented gap at L = 1.2, t = 0.1.
        let gap = no_retraction_gap(1.2, 0.1).unwrap();
        assert!((gap - 0.03366750419289201).abs() <= 1e-15);

        // Scale invariance of the verdict.
        for t in [0.01, 0.05, 0.1, 0.15, 0.2] {
            assert!(no_retraction_witness(1.3, t).unwrap());
            assert!(!no_retraction_witness(1.5, t).unwrap());
        }

        assert!(no_retraction_witness(1.2, 0.0).is_err());
        assert!(no_retraction_witness(0.0, 0.1).is_err());
    }

    #[test]
    fn no_retraction_matches_grid_search() {
        // Independent oracle: minimize x2 - |x1| over the lens of the two
        // disks by dense grid search and compare signs (and values, where
        // the lens is nonempty) with the closed form.
        for (l, t) in [(1.1, 0.1), (1.3, 0.05), (1.45, 0.1), (1.7, 0.2), (2.5, 0.1)] {
            let r = l * t;
            let n = 900;
            let mut best = f64::INFINITY;
            for i in 0..=n {
                for j in 0..=n {
                    let x = -r + 2.0 * r * i as f64 / n as f64;
                    let y = t - r + 2.0 * r * j as f64 / n as f64;
                    let in_near = (x - t).powi(2) + (y - t).powi(2) <= r * r;
                    let in_far = (x + t).powi(2) + (y - t).powi(2) <= r * r;
                    if in_near && in_far {
                        best = best.min(y - x.abs());
                    }
                }
            }
            let closed = no_retraction_gap(l, t).unwrap();
            assert!(
                (best - closed).abs() <= 4.0 * r / n as f64,
                "grid {best} vs closed {closed} at L = {l}, t = {t}"
            );
            assert_eq!(best > 0.0, no_retraction_witness(l, t).unwrap());
        }
    }
}
