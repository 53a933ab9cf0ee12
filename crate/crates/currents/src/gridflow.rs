//! Cubical deformation: scaled, shifted cubical skeletons, the radial
//! retraction onto lower skeleta, and the deformation of a cycle onto the
//! grid — `T = P + del R` with `P` skeletal — plus the dynamical variant
//! that records the whole descent as a space-time trajectory with
//! `del S = (time-1 slice of P) - (time-0 slice of T)` exactly.
//!
//! Scope: chains of dimension 0 and 1 in ambient dimension 2 or 3. The
//! retraction is a central projection, so it maps straight segments to
//! polylines on cell boundaries; inserting the face-switch points as
//! vertices makes every projected piece affine, and the whole machine
//! exact in canonical chain arithmetic.
//!
//! Grid combinatorics live in *grid coordinates* `y = (x - shift)/epsilon`,
//! where cell corners are odd integer vectors and cell centers even ones;
//! a point belongs to the j-skeleton when at most j of its coordinates are
//! not odd integers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chains::{Chain, Point, Simplex};
use crate::spacetime::SpaceTimeChain;
use crate::{Error, Result};

/// Distance below which a descent position counts as sitting on the
/// projection-singular set (grid units).
const SINGULAR_TOL: f64 = 1e-9;
/// Required clearance of input vertices (and segments, for curves) from
/// the singular set, in grid units.
const SHIFT_CLEARANCE: f64 = 1e-6;
/// Cap on rejection-sampling candidates for the grid shift.
const SHIFT_CANDIDATES: usize = 1000;
/// Sanity ceiling on the skeletal mass ratio; the theory only promises a
/// finite constant, so a blowout signals a bad shift rather than a bound.
const MASS_RATIO_CEILING: f64 = 50.0;

/// A scaled, shifted cubical grid targeting k-dimensional skeleta in
/// `R^d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    /// Scale: grid cells have side `2 * epsilon`.
    pub epsilon: f64,
    /// Translation, one entry per ambient coordinate, each in
    /// `[-epsilon, epsilon]`.
    pub shift: Vec<f64>,
    /// Ambient dimension.
    pub d: usize,
    /// Target skeleton dimension.
    pub k: usize,
}

impl GridSpec {
    pub fn new(epsilon: f64, shift: Vec<f64>, d: usize, k: usize) -> Result<GridSpec> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grid scale must be positive, got {epsilon}"
            )));
        }
        if shift.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "shift has {} entries in R^{}",
                shift.len(),
                d
            )));
        }
        if shift.iter().any(|a| !a.is_finite() || a.abs() > epsilon) {
            return Err(Error::InvalidArgument(
                "shift entries must lie in [-epsilon, epsilon]".into(),
            ));
        }
        if k >= d {
            return Err(Error::InvalidArgument(format!(
                "target dimension {k} must be below ambient dimension {d}"
            )));
        }
        Ok(GridSpec {
            epsilon,
            shift,
            d,
            k,
        })
    }

    /// The un-shifted grid at the given scale.
    pub fn axis_aligned(epsilon: f64, d: usize, k: usize) -> Result<GridSpec> {
        GridSpec::new(epsilon, vec![0.0; d], d, k)
    }

    /// World to grid coordinates.
    pub fn to_grid(&self, x: &Point) -> Vec<f64> {
        x.coords()
            .iter()
            .zip(&self.shift)
            .map(|(xi, ai)| (xi - ai) / self.epsilon)
            .collect()
    }

    /// Grid to world coordinates.
    pub fn to_world(&self, y: &[f64]) -> Point {
        Point::new(
            y.iter()
                .zip(&self.shift)
                .map(|(yi, ai)| yi * self.epsilon + ai)
                .collect(),
        )
    }
}

/// A cell of the primal skeleton, identified by its integer center; the
/// cell spans the coordinates where the center is even and is pinned to
/// odd values elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkeletonCube {
    pub z: Vec<i64>,
}

impl SkeletonCube {
    /// Cell dimension: the number of even center coordinates.
    pub fn dim(&self) -> usize {
        self.z.iter().filter(|v| *v % 2 == 0).count()
    }

    /// Indices of the spanned (even) coordinates.
    pub fn even_set(&self) -> Vec<usize> {
        self.z
            .iter()
            .enumerate()
            .filter(|(_, v)| *v % 2 == 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cell center in world coordinates.
    pub fn center(&self, g: &GridSpec) -> Point {
        let y: Vec<f64> = self.z.iter().map(|&v| v as f64).collect();
        g.to_world(&y)
    }

    /// Whether a grid point lies in the closed cell.
    pub fn contains_grid(&self, y: &[f64]) -> bool {
        y.iter().zip(&self.z).all(|(yi, &zi)| {
            if zi % 2 == 0 {
                (yi - zi as f64).abs() <= 1.0
            } else {
                *yi == zi as f64
            }
        })
    }
}

/// Is this grid coordinate exactly an odd integer?
fn is_odd_coord(y: f64) -> bool {
    y == y.round() && (y.round() as i64).rem_euclid(2) == 1
}

/// Skeleton level of a grid point: how many coordinates are free of the
/// odd lattice. A point lies on the j-skeleton iff its level is at most j.
fn grid_level(y: &[f64]) -> usize {
    y.iter().filter(|v| !is_odd_coord(**v)).count()
}

fn nearest_even(y: f64) -> i64 {
    2 * (y / 2.0).round() as i64
}

/// The j-cell of the primal skeleton containing `x` (which must lie on
/// the j-skeleton): odd coordinates pin the cell, the rest round to the
/// nearest even center.
pub fn classify_point(x: &Point, g: &GridSpec, j: usize) -> Result<SkeletonCube> {
    if x.dim() != g.d {
        return Err(Error::DimensionMismatch(format!(
            "point in R^{}, grid in R^{}",
            x.dim(),
            g.d
        )));
    }
    if j > g.d {
        return Err(Error::InvalidArgument(format!(
            "skeleton dimension {j} exceeds ambient {}",
            g.d
        )));
    }
    let y = g.to_grid(x);
    if grid_level(&y) > j {
        return Err(Error::InvalidArgument(format!(
            "point is not on the {j}-skeleton (level {})",
            grid_level(&y)
        )));
    }
    let z: Vec<i64> = y
        .iter()
        .map(|&yi| {
            if is_odd_coord(yi) {
                yi.round() as i64
            } else {
                nearest_even(yi)
            }
        })
        .collect();
    let cube = SkeletonCube { z };
    let m = y
        .iter()
        .zip(&cube.z)
        .filter(|(_, &zi)| zi % 2 == 0)
        .map(|(yi, &zi)| (yi - zi as f64).abs())
        .fold(0.0f64, f64::max);
    if cube.dim() == j && m <= SINGULAR_TOL {
        return Err(Error::SingularPosition(format!(
            "point sits at the center of cell {:?}",
            cube.z
        )));
    }
    Ok(cube)
}

/// One retraction step: centrally project a point of the open j-cell from
/// the cell center onto the cell boundary, which lies on the
/// (j-1)-skeleton. Points already on the (j-1)-skeleton are fixed.
pub fn sigma_step(x: &Point, g: &GridSpec, j: usize) -> Result<Point> {
    let y = g.to_grid(x);
    if grid_level(&y) + 1 <= j {
        return Ok(x.clone());
    }
    let cube = classify_point(x, g, j)?;
    let image = project_grid(&y, &cube.z)?;
    Ok(g.to_world(&image))
}

/// Central projection in grid coordinates. Offsets at (or within rounding
/// of) the maximum are pinned to exact odd integers, so skeleton
/// membership stays an exact predicate even at face-switch points, where
/// two offsets tie only up to floating-point noise.
fn project_grid(y: &[f64], z: &[i64]) -> Result<Vec<f64>> {
    let offsets: Vec<f64> = y
        .iter()
        .zip(z)
        .map(|(yi, &zi)| if zi % 2 == 0 { yi - zi as f64 } else { 0.0 })
        .collect();
    let m = offsets.iter().fold(0.0f64, |acc, o| acc.max(o.abs()));
    if m <= SINGULAR_TOL {
        return Err(Error::SingularPosition(format!(
            "projection from the center of cell {z:?}"
        )));
    }
    Ok(y.iter()
        .zip(z)
        .zip(&offsets)
        .map(|((yi, &zi), &off)| {
            if zi % 2 != 0 {
                *yi
            } else if off.abs() >= m * (1.0 - 1e-9) {
                zi as f64 + off.signum()
            } else {
                zi as f64 + off / m
            }
        })
        .collect())
}

/// Distance (grid units) from a grid point to the projection-singular
/// set for target dimension k: the locus where at least k+1 coordinates
/// are even integers. The cheapest k+1 snaps give the distance.
fn singular_distance(y: &[f64], k: usize) -> f64 {
    let mut per_coord: Vec<f64> = y
        .iter()
        .map(|&yi| (yi - nearest_even(yi) as f64).abs())
        .collect();
    per_coord.sort_by(f64::total_cmp);
    per_coord
        .iter()
        .take(k + 1)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn binomial(d: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (d - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// 8-point Gauss-Legendre nodes and weights on [0, 1].
const GAUSS8: [(f64, f64); 8] = [
    (0.01985507175123185, 0.05061426814518815),
    (0.10166676129318664, 0.11119051722668724),
    (0.23723379504183550, 0.15685332293894365),
    (0.40828267875217510, 0.18134189168918100),
    (0.59171732124782490, 0.18134189168918100),
    (0.76276620495816450, 0.15685332293894365),
    (0.89833323870681336, 0.11119051722668724),
    (0.98014492824876815, 0.05061426814518815),
];

/// The shift-quality integral: mass-weighted quadrature of the inverse
/// k-th power of the distance to the singular set, in grid coordinates.
fn shift_integral(t: &Chain, g: &GridSpec) -> f64 {
    if g.k == 0 {
        return t.mass();
    }
    let mut total = 0.0;
    for (s, c) in t.terms() {
        let u = g.to_grid(&s.vertices()[0]);
        let v = g.to_grid(&s.vertices()[1]);
        let len = s.volume();
        let mut acc = 0.0;
        for &(node, w) in &GAUSS8 {
            let y: Vec<f64> = u
                .iter()
                .zip(&v)
                .map(|(a, b)| a + node * (b - a))
                .collect();
            let dist = singular_distance(&y, g.k).max(1e-9);
            acc += w * dist.powi(-(g.k as i32));
        }
        total += c.abs() * len * acc;
    }
    total
}

/// Minimum clearance of the chain from the singular set: vertex distances
/// always, plus segment-to-set distances for curves (the singular set has
/// codimension k+1, so generic segments miss it).
fn chain_clearance(t: &Chain, g: &GridSpec) -> f64 {
    let mut clearance = f64::INFINITY;
    for (s, _) in t.terms() {
        for p in s.vertices() {
            clearance = clearance.min(singular_distance(&g.to_grid(p), g.k));
        }
        if g.k == 1 && s.k() == 1 {
            let u = g.to_grid(&s.vertices()[0]);
            let v = g.to_grid(&s.vertices()[1]);
            clearance = clearance.min(segment_singular_distance(&u, &v, g.d));
        }
    }
    clearance
}

/// Distance from a grid segment to the set of points with two even
/// coordinates (d = 2: even lattice points; d = 3: axis-parallel lines
/// through them), by projecting onto coordinate pairs.
fn segment_singular_distance(u: &[f64], v: &[f64], d: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..d {
        for j in (i + 1)..d {
            let a = [u[i], u[j]];
            let b = [v[i], v[j]];
            let lo = [a[0].min(b[0]), a[1].min(b[1])];
            let hi = [a[0].max(b[0]), a[1].max(b[1])];
            let mut zi = nearest_even(lo[0]) - 2;
            while zi as f64 <= hi[0] + 2.0 {
                let mut zj = nearest_even(lo[1]) - 2;
                while zj as f64 <= hi[1] + 2.0 {
                    best = best.min(point_segment_distance_2d(
                        [zi as f64, zj as f64],
                        a,
                        b,
                    ));
                    zj += 2;
                }
                zi += 2;
            }
        }
    }
    best
}

fn point_segment_distance_2d(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let denom = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if denom > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// Rejection-sample a grid shift: uniform candidates in
/// `[-epsilon, epsilon]^d` until one clears the singular set and keeps
/// the quadrature integral below `2 * binom(d, k) * M(T)`.
pub fn choose_shift(t: &Chain, epsilon: f64, k: usize, seed: u64) -> Result<Vec<f64>> {
    let d = t.d();
    if t.is_zero() {
        return Ok(vec![0.0; d]);
    }
    let bound = 2.0 * binomial(d, k) * t.mass();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_integral = f64::INFINITY;
    let mut best_shift = vec![0.0; d];
    for _ in 0..SHIFT_CANDIDATES {
        let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(-epsilon..epsilon)).collect();
        let g = GridSpec::new(epsilon, shift.clone(), d, k)?;
        let integral = shift_integral(t, &g);
        if integral < best_integral {
            best_integral = integral;
            best_shift = shift.clone();
        }
        if integral <= bound && chain_clearance(t, &g) > SHIFT_CLEARANCE {
            return Ok(shift);
        }
    }
    Err(Error::ShiftSearchFailure {
        candidates: SHIFT_CANDIDATES,
        best_integral,
        bound,
        best_shift,
    })
}

/// Tuning knobs for the deformation.
#[derive(Clone, Debug)]
pub struct DeformOptions {
    /// Pre-split every input segment into this many equal pieces before
    /// the descent; 1 means no extra subdivision. The result is the same
    /// current at any depth, which is what the stability diagnostics
    /// check.
    pub subdivision: usize,
    /// Relative tolerance for the reconstruction defect
    /// `M(T - P - del R) <= defect_tol * M(T)`, with `T` taken at the
    /// requested subdivision depth.
    pub defect_tol: f64,
    /// Seed for the shift search.
    pub seed: u64,
}

impl Default for DeformOptions {
    fn default() -> Self {
        DeformOptions {
            subdivision: 1,
            defect_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Measured quality of a deformation run.
#[derive(Clone, Debug, Serialize)]
pub struct DeformationDiagnostics {
    pub mass_t: f64,
    pub mass_p: f64,
    pub mass_r: f64,
    /// `M(P) / M(T)` — the measured skeletal-mass constant.
    pub p_ratio: f64,
    /// `M(R) / (epsilon * M(T))`.
    pub r_ratio: f64,
    /// `Var(S) / (epsilon * M(T))`, when the trajectory was built.
    pub var_ratio: Option<f64>,
    pub var_s: Option<f64>,
    pub linfty_s: Option<f64>,
    /// Largest distance from a vertex of P or R to the support of T.
    pub support_radius: f64,
    /// The guaranteed ceiling `2 * d * epsilon`.
    pub support_bound: f64,
    /// `M(T - P - del R)` after canonicalization, with `T` refined to the
    /// requested subdivision depth (bitwise the input when it is 1).
    pub defect: f64,
    pub defect_tol_abs: f64,
    pub subdivision: usize,
    pub stages: usize,
}

/// Outcome of a deformation: the skeletal part, the filling, optionally
/// the space-time descent, and the measured diagnostics.
#[derive(Clone, Debug)]
pub struct DeformationResult {
    pub grid: GridSpec,
    pub p: Chain,
    pub r: Chain,
    pub s: Option<SpaceTimeChain>,
    pub diagnostics: DeformationDiagnostics,
}

impl DeformationResult {
    pub fn to_json(&self) -> String {
        let wire = serde_json::json!({
            "grid": self.grid,
            "p": self.p.to_wire(),
            "r": self.r.to_wire(),
            "s": self.s.as_ref().map(|s| s.to_wire()),
            "diagnostics": self.diagnostics,
        });
        serde_json::to_string_pretty(&wire).expect("serialization cannot fail")
    }
}

/// Deform a cycle onto the epsilon-grid, choosing a shift automatically.
pub fn deform(t: &Chain, epsilon: f64, opts: &DeformOptions) -> Result<DeformationResult> {
    let shift = choose_shift(t, epsilon, t.k(), opts.seed)?;
    let g = GridSpec::new(epsilon, shift, t.d(), t.k())?;
    deform_with(t, &g, opts)
}

/// Deform onto an explicitly given grid (no shift search). Useful when
/// two chains must share one grid.
pub fn deform_with(t: &Chain, g: &GridSpec, opts: &DeformOptions) -> Result<DeformationResult> {
    run_deformation(t, g, opts, false)
}

/// As `deform`, but also build the space-time descent trajectory S with
/// `del S = (P at time 1) - (T at time 0)` exactly.
pub fn dynamical_deform(
    t: &Chain,
    epsilon: f64,
    opts: &DeformOptions,
) -> Result<DeformationResult> {
    let shift = choose_shift(t, epsilon, t.k(), opts.seed)?;
    let g = GridSpec::new(epsilon, shift, t.d(), t.k())?;
    dynamical_deform_with(t, &g, opts)
}

/// As `deform_with`, but also build the trajectory.
pub fn dynamical_deform_with(
    t: &Chain,
    g: &GridSpec,
    opts: &DeformOptions,
) -> Result<DeformationResult> {
    run_deformation(t, g, opts, true)
}

/// The axis along which a skeleton segment runs, together with the bit
/// patterns of its pinned coordinates, or `None` if the endpoints coincide
/// or differ in more than one coordinate.
fn skeleton_line(a: &[f64], b: &[f64]) -> Option<(usize, Vec<u64>)> {
    let mut axis = None;
    for i in 0..a.len() {
        if a[i] != b[i] {
            if axis.is_some() {
                return None;
            }
            axis = Some(i);
        }
    }
    let axis = axis?;
    let others = a
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != axis)
        .map(|(_, v)| v.to_bits())
        .collect();
    Some((axis, others))
}

/// One stage of the descent, acting on a list of input pieces; for every
/// input piece, the image polyline it was carried to.
struct Stage {
    /// Time slab this stage occupies.
    t0: f64,
    t1: f64,
    /// Per input piece: source endpoints, coefficient, and the full image
    /// polyline (source subdivision images, consecutive duplicates
    /// dropped).
    carried: Vec<CarriedPiece>,
}

struct CarriedPiece {
    u: Vec<f64>,
    v: Vec<f64>,
    c: f64,
    /// Image polyline r_0 .. r_m with r_0 = sigma(u), r_m = sigma(v).
    images: Vec<Vec<f64>>,
}

fn run_deformation(
    t: &Chain,
    g: &GridSpec,
    opts: &DeformOptions,
    with_trajectory: bool,
) -> Result<DeformationResult> {
    let k = t.k();
    let d = t.d();
    if k != g.k || d != g.d {
        return Err(Error::DimensionMismatch(format!(
            "{k}-chain in R^{d} against a grid for {}-chains in R^{}",
            g.k, g.d
        )));
    }
    if !(k == 0 || k == 1) || !(d == 2 || d == 3) {
        return Err(Error::InvalidArgument(format!(
            "deformation supports dimensions 0 and 1 in R^2 or R^3, got k={k}, d={d}"
        )));
    }
    if opts.subdivision == 0 {
        return Err(Error::InvalidArgument("subdivision must be at least 1".into()));
    }
    if k >= 1 && !t.boundary()?.is_zero() {
        return Err(Error::NotACycle(
            "deformation is defined for cycles only".into(),
        ));
    }

    let stages_count = d - k;
    let knots: Vec<f64> = (0..=stages_count)
        .map(|m| m as f64 / stages_count as f64)
        .collect();

    if t.is_zero() {
        let zero_k = Chain::zero(k, d);
        let zero_r = Chain::zero(k + 1, d);
        let s = if with_trajectory {
            Some(SpaceTimeChain::new(Chain::zero(k + 1, d + 1))?)
        } else {
            None
        };
        return Ok(DeformationResult {
            grid: g.clone(),
            p: zero_k,
            r: zero_r,
            s,
            diagnostics: DeformationDiagnostics {
                mass_t: 0.0,
                mass_p: 0.0,
                mass_r: 0.0,
                p_ratio: 0.0,
                r_ratio: 0.0,
                var_ratio: with_trajectory.then_some(0.0),
                var_s: with_trajectory.then_some(0.0),
                linfty_s: with_trajectory.then_some(0.0),
                support_radius: 0.0,
                support_bound: 2.0 * d as f64 * g.epsilon,
                defect: 0.0,
                defect_tol_abs: 0.0,
                subdivision: opts.subdivision,
                stages: stages_count,
            },
        });
    }

    // Initial pieces in grid coordinates, optionally pre-split.  The world
    // map is seeded with the original vertices so that nodes which survive
    // the descent untouched return to their input coordinates bitwise; the
    // grid round trip alone can drift by an ulp and break exact boundaries.
    let mut world: BTreeMap<Point, Point> = BTreeMap::new();
    let mut pieces: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut point_pieces: Vec<(Vec<f64>, f64)> = Vec::new();
    for (s, c) in t.terms() {
        if k == 0 {
            let y = g.to_grid(&s.vertices()[0]);
            world
                .entry(Point::new(y.clone()))
                .or_insert_with(|| s.vertices()[0].clone());
            point_pieces.push((y, c));
        } else {
            let wu = s.vertices()[0].clone();
            let wv = s.vertices()[1].clone();
            let u = g.to_grid(&wu);
            let v = g.to_grid(&wv);
            world.entry(Point::new(u.clone())).or_insert(wu.clone());
            world.entry(Point::new(v.clone())).or_insert(wv.clone());
            if opts.subdivision == 1 {
                pieces.push((u, v, c));
            } else {
                let n = opts.subdivision;
                let mut prev = u.clone();
                for i in 1..=n {
                    let next: Vec<f64> = if i == n {
                        v.clone()
                    } else {
                        // Subdivision nodes are placed in world coordinates
                        // and seeded into the map, so the refined input is a
                        // straight split of the original segments.
                        let lam = i as f64 / n as f64;
                        let node = Point::new(
                            wu.coords()
                                .iter()
                                .zip(wv.coords())
                                .map(|(a, b)| a + lam * (b - a))
                                .collect(),
                        );
                        let y = g.to_grid(&node);
                        world.entry(Point::new(y.clone())).or_insert(node);
                        y
                    };
                    pieces.push((prev.clone(), next.clone(), c));
                    prev = next;
                }
            }
        }
    }
    // The identities below hold exactly for the refined input, which is the
    // same current as `t` and coincides with it when no subdivision was
    // requested.
    let initial_points = point_pieces.clone();
    let initial_pieces = pieces.clone();

    // Descend stage by stage, from level d down to level k+1.
    let mut stages: Vec<Stage> = Vec::new();
    for (stage_idx, level) in ((k + 1)..=d).rev().enumerate() {
        let t0 = knots[stage_idx];
        let t1 = knots[stage_idx + 1];
        if k == 0 {
            let mut carried = Vec::new();
            let mut next = Vec::new();
            for (y, c) in &point_pieces {
                let image = descend_point(y, level)?;
                next.push((image.clone(), *c));
                carried.push(CarriedPiece {
                    u: y.clone(),
                    v: y.clone(),
                    c: *c,
                    images: vec![image],
                });
            }
            point_pieces = next;
            stages.push(Stage { t0, t1, carried });
        } else {
            let mut carried = Vec::new();
            let mut next = Vec::new();
            for (u, v, c) in &pieces {
                let images = descend_segment(u, v, level)?;
                for w in images.windows(2) {
                    next.push((w[0].clone(), w[1].clone(), *c));
                }
                carried.push(CarriedPiece {
                    u: u.clone(),
                    v: v.clone(),
                    c: *c,
                    images,
                });
            }
            pieces = next;
            stages.push(Stage { t0, t1, carried });
        }
    }

    // Overlay consolidation: split every final image segment at every piece
    // endpoint on its skeleton line.  Overlapping runs then decompose into
    // bitwise-identical elementary intervals, so folds cancel during
    // canonicalization and M(P) measures the underlying current independently
    // of how the input was subdivided.
    if k >= 1 {
        if let Some(last) = stages.last_mut() {
            let mut lines: BTreeMap<(usize, Vec<u64>), Vec<f64>> = BTreeMap::new();
            for piece in &last.carried {
                for w in piece.images.windows(2) {
                    if let Some((axis, others)) = skeleton_line(&w[0], &w[1]) {
                        let entry = lines.entry((axis, others)).or_default();
                        entry.push(w[0][axis]);
                        entry.push(w[1][axis]);
                    }
                }
            }
            for v in lines.values_mut() {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            for piece in &mut last.carried {
                let mut refined: Vec<Vec<f64>> = Vec::with_capacity(piece.images.len());
                for j in 0..piece.images.len() {
                    if j > 0 {
                        let a = &piece.images[j - 1];
                        let b = &piece.images[j];
                        if let Some(key) = skeleton_line(a, b) {
                            let axis = key.0;
                            if let Some(bps) = lines.get(&key) {
                                let lo = a[axis].min(b[axis]);
                                let hi = a[axis].max(b[axis]);
                                let mut inner: Vec<f64> =
                                    bps.iter().copied().filter(|&x| x > lo && x < hi).collect();
                                if b[axis] < a[axis] {
                                    inner.reverse();
                                }
                                for x in inner {
                                    let mut node = a.clone();
                                    node[axis] = x;
                                    refined.push(node);
                                }
                            }
                        }
                    }
                    refined.push(piece.images[j].clone());
                }
                piece.images = refined;
            }
            pieces = Vec::new();
            for piece in &last.carried {
                for w in piece.images.windows(2) {
                    pieces.push((w[0].clone(), w[1].clone(), piece.c));
                }
            }
        }
    }

    // Assemble P, R, S in world coordinates through one shared vertex map.
    let mut to_world = |y: &[f64]| -> Point {
        let key = Point::new(y.to_vec());
        world.entry(key).or_insert_with_key(|p| g.to_world(p.coords())).clone()
    };

    let p_chain = if k == 0 {
        let raw: Vec<(Simplex, f64)> = point_pieces
            .iter()
            .map(|(y, c)| (Simplex::new(vec![to_world(y)]).expect("point"), *c))
            .collect();
        Chain::new(0, d, raw)?
    } else {
        let mut raw = Vec::new();
        for (u, v, c) in &pieces {
            if u == v {
                continue;
            }
            raw.push((
                Simplex::new(vec![to_world(u), to_world(v)]).expect("distinct endpoints"),
                *c,
            ));
        }
        Chain::new(1, d, raw)?
    };

    let mut r_raw: Vec<(Simplex, f64)> = Vec::new();
    for stage in &stages {
        for piece in &stage.carried {
            if k == 0 {
                let p0 = to_world(&piece.u);
                let p1 = to_world(&piece.images[0]);
                if p0 == p1 {
                    continue;
                }
                // Oriented image-to-source so that T = P + del R.
                r_raw.push((Simplex::new(vec![p1, p0]).expect("distinct"), piece.c));
            } else {
                let u = to_world(&piece.u);
                let v = to_world(&piece.v);
                let r: Vec<Point> = piece.images.iter().map(|y| to_world(y)).collect();
                let last = r.last().expect("nonempty image").clone();
                push_triangle(&mut r_raw, [u.clone(), v.clone(), last], piece.c);
                for w in r.windows(2) {
                    push_triangle(
                        &mut r_raw,
                        [u.clone(), w[0].clone(), w[1].clone()],
                        -piece.c,
                    );
                }
            }
        }
    }
    let r_chain = Chain::new(k + 1, d, r_raw)?;

    let s_chain = if with_trajectory {
        let mut s_raw: Vec<(Simplex, f64)> = Vec::new();
        for stage in &stages {
            for piece in &stage.carried {
                if k == 0 {
                    let a = to_world(&piece.u).at_time(stage.t0);
                    let b = to_world(&piece.images[0]).at_time(stage.t1);
                    if a == b {
                        continue;
                    }
                    s_raw.push((Simplex::new(vec![a, b]).expect("distinct"), piece.c));
                } else {
                    let a0 = to_world(&piece.u).at_time(stage.t0);
                    let q0 = to_world(&piece.v).at_time(stage.t0);
                    let r: Vec<Point> = piece
                        .images
                        .iter()
                        .map(|y| to_world(y).at_time(stage.t1))
                        .collect();
                    let last = r.last().expect("nonempty image").clone();
                    push_triangle(&mut s_raw, [a0.clone(), q0, last], -piece.c);
                    for w in r.windows(2) {
                        push_triangle(
                            &mut s_raw,
                            [a0.clone(), w[0].clone(), w[1].clone()],
                            piece.c,
                        );
                    }
                }
            }
        }
        Some(SpaceTimeChain::new(Chain::new(k + 1, d + 1, s_raw)?)?)
    } else {
        None
    };

    // Diagnostics.
    let mass_t = t.mass();
    let mass_p = p_chain.mass();
    let mass_r = r_chain.mass();
    if mass_p > MASS_RATIO_CEILING * mass_t {
        return Err(Error::Solver(format!(
            "skeletal mass blow-up: M(P) = {mass_p:.3e} exceeds {MASS_RATIO_CEILING} * M(T) = \
             {:.3e}; the grid shift is unsuitable",
            MASS_RATIO_CEILING * mass_t
        )));
    }
    let t_refined = if k == 0 {
        let raw: Vec<(Simplex, f64)> = initial_points
            .iter()
            .map(|(y, c)| (Simplex::new(vec![to_world(y)]).expect("point"), *c))
            .collect();
        Chain::new(0, d, raw)?
    } else {
        let raw: Vec<(Simplex, f64)> = initial_pieces
            .iter()
            .map(|(u, v, c)| {
                (
                    Simplex::new(vec![to_world(u), to_world(v)]).expect("distinct"),
                    *c,
                )
            })
            .collect();
        Chain::new(1, d, raw)?
    };
    let defect = t_refined
        .add(&p_chain.scale(-1.0))?
        .add(&r_chain.boundary()?.scale(-1.0))?
        .mass();
    let defect_tol_abs = opts.defect_tol * mass_t;
    if defect > defect_tol_abs {
        return Err(Error::Solver(format!(
            "reconstruction defect {defect:.3e} exceeds tolerance {defect_tol_abs:.3e}"
        )));
    }
    let mut support_radius = 0.0f64;
    for chain in [&p_chain, &r_chain] {
        for (s, _) in chain.terms() {
            for w in s.vertices() {
                support_radius = support_radius.max(distance_to_chain(w, t));
            }
        }
    }
    let (var_s, var_ratio, linfty_s) = match &s_chain {
        Some(s) => {
            let var = s.variation();
            let linf = s.linfty()?.0;
            (
                Some(var),
                Some(var / (g.epsilon * mass_t)),
                Some(linf),
            )
        }
        None => (None, None, None),
    };

    Ok(DeformationResult {
        grid: g.clone(),
        p: p_chain,
        r: r_chain,
        s: s_chain,
        diagnostics: DeformationDiagnostics {
            mass_t,
            mass_p,
            mass_r,
            p_ratio: mass_p / mass_t,
            r_ratio: mass_r / (g.epsilon * mass_t),
            var_ratio,
            var_s,
            linfty_s,
            support_radius,
            support_bound: 2.0 * d as f64 * g.epsilon,
            defect,
            defect_tol_abs,
            subdivision: opts.subdivision,
            stages: stages_count,
        },
    })
}

fn push_triangle(raw: &mut Vec<(Simplex, f64)>, v: [Point; 3], c: f64) {
    if v[0] == v[1] || v[0] == v[2] || v[1] == v[2] {
        return;
    }
    raw.push((Simplex::new(v.to_vec()).expect("distinct vertices"), c));
}

/// Descend a grid point one skeleton level (identity if already below).
fn descend_point(y: &[f64], level: usize) -> Result<Vec<f64>> {
    if grid_level(y) < level {
        return Ok(y.to_vec());
    }
    let z: Vec<i64> = y
        .iter()
        .map(|&yi| {
            if is_odd_coord(yi) {
                yi.round() as i64
            } else {
                nearest_even(yi)
            }
        })
        .collect();
    project_grid(y, &z)
}

/// Descend a grid segment one skeleton level: split at cell boundaries,
/// then at face-switch parameters, and map each sub-piece to its (exact,
/// affine) image. Returns the image polyline including both endpoint
/// images, consecutive duplicates dropped.
fn descend_segment(u: &[f64], v: &[f64], level: usize) -> Result<Vec<Vec<f64>>> {
    let d = u.len();
    // Coordinates frozen along the whole piece (shared exact odd values)
    // do not participate; if too few vary, the piece already lies below.
    let frozen: Vec<bool> = (0..d)
        .map(|i| u[i] == v[i] && is_odd_coord(u[i]))
        .collect();
    let free: Vec<usize> = (0..d).filter(|&i| !frozen[i]).collect();
    if free.len() < level {
        let mut out = vec![u.to_vec(), v.to_vec()];
        out.dedup();
        return Ok(out);
    }
    assert!(
        free.len() == level,
        "piece spans {} coordinates on the {level}-skeleton",
        free.len()
    );

    // Split at crossings of odd-integer hyperplanes in the free
    // coordinates; crossing coordinates are pinned exactly.
    let mut cuts: Vec<(f64, Option<(usize, f64)>)> = Vec::new();
    for &i in &free {
        let (lo, hi) = (u[i].min(v[i]), u[i].max(v[i]));
        let mut w = 2 * ((lo - 1.0) / 2.0).ceil() as i64 + 1;
        while (w as f64) < hi {
            if (w as f64) > lo {
                let t = (w as f64 - u[i]) / (v[i] - u[i]);
                if t > 1e-12 && t < 1.0 - 1e-12 {
                    cuts.push((t, Some((i, w as f64))));
                }
            }
            w += 2;
        }
    }
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<Vec<f64>> = vec![u.to_vec()];
    for (t, pin) in &cuts {
        let mut p: Vec<f64> = u
            .iter()
            .zip(v)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        if let Some((i, value)) = pin {
            p[*i] = *value;
        }
        for (i, fr) in frozen.iter().enumerate() {
            if *fr {
                p[i] = u[i];
            }
        }
        nodes.push(p);
    }
    nodes.push(v.to_vec());
    nodes.dedup();

    // Project each cell-interior sub-piece, splitting it further where
    // the image switches faces.
    let mut images: Vec<Vec<f64>> = Vec::new();
    let push_image = |p: Vec<f64>, images: &mut Vec<Vec<f64>>| {
        if images.last() != Some(&p) {
            images.push(p);
        }
    };
    for w in nodes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        // A sub-piece that already lies below this level passes through.
        let sub_frozen: Vec<bool> = (0..d)
            .map(|i| a[i] == b[i] && is_odd_coord(a[i]))
            .collect();
        if (0..d).filter(|&i| !sub_frozen[i]).count() < level {
            push_image(a.clone(), &mut images);
            push_image(b.clone(), &mut images);
            continue;
        }
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let z: Vec<i64> = (0..d)
            .map(|i| {
                if sub_frozen[i] {
                    a[i].round() as i64
                } else {
                    nearest_even(mid[i])
                }
            })
            .collect();
        // Face-switch parameters: equal absolute offsets in two
        // coordinates. Extra splits are harmless, so every candidate in
        // the open interval is taken.
        let offsets_a: Vec<f64> = (0..d).map(|i| a[i] - z[i] as f64).collect();
        let offsets_b: Vec<f64> = (0..d).map(|i| b[i] - z[i] as f64).collect();
        let mut params = vec![0.0, 1.0];
        for ii in 0..free.len() {
            for jj in (ii + 1)..free.len() {
                let (i, j) = (free[ii], free[jj]);
                for sign in [1.0, -1.0] {
                    // Solve a_i + t (b_i - a_i) = sign * (a_j + t (b_j - a_j)).
                    let p0 = offsets_a[i] - sign * offsets_a[j];
                    let p1 = (offsets_b[i] - offsets_a[i]) - sign * (offsets_b[j] - offsets_a[j]);
                    if p1 != 0.0 {
                        let tt = -p0 / p1;
                        if tt > 1e-12 && tt < 1.0 - 1e-12 {
                            params.push(tt);
                        }
                    }
                }
            }
        }
        params.sort_by(f64::total_cmp);
        params.dedup();
        let eval = |t: f64| -> Vec<f64> {
            if t == 0.0 {
                return a.clone();
            }
            if t == 1.0 {
                return b.clone();
            }
            (0..d)
                .map(|i| {
                    if sub_frozen[i] {
                        a[i]
                    } else {
                        a[i] + t * (b[i] - a[i])
                    }
                })
                .collect()
        };
        for tw in params.windows(2) {
            let pa = eval(tw[0]);
            let pb = eval(tw[1]);
            push_image(project_grid(&pa, &z)?, &mut images);
            push_image(project_grid(&pb, &z)?, &mut images);
        }
    }
    Ok(images)
}

/// Euclidean distance from a point to the support of a chain.
fn distance_to_chain(p: &Point, t: &Chain) -> f64 {
    let mut best = f64::INFINITY;
    for (s, _) in t.terms() {
        if s.k() == 0 {
            best = best.min(p.distance(&s.vertices()[0]));
        } else {
            let a = s.vertices()[0].coords();
            let b = s.vertices()[1].coords();
            let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
            let ap: Vec<f64> = a.iter().zip(p.coords()).map(|(x, y)| y - x).collect();
            let denom: f64 = ab.iter().map(|x| x * x).sum();
            let tt = if denom > 0.0 {
                (ab.iter().zip(&ap).map(|(x, y)| x * y).sum::<f64>() / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dist2: f64 = ap
                .iter()
                .zip(&ab)
                .map(|(y, x)| (y - tt * x) * (y - tt * x))
                .sum();
            best = best.min(dist2.sqrt());
        }
    }
    best
}

#[cfg(test)]
pub mod test_support {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// A random simple polygon loop (star-shaped around a random center)
    /// as a 1-cycle in the plane.
    pub fn random_loop(rng: &mut ChaCha8Rng, sides: usize, radius: f64) -> Chain {
        let cx = rng.gen_range(-1.0..1.0);
        let cy = rng.gen_range(-1.0..1.0);
        let mut pts: Vec<Point> = Vec::new();
        for i in 0..sides {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / sides as f64
                + rng.gen_range(-0.2..0.2);
            let rr = radius * rng.gen_range(0.6..1.4);
            pts.push(Point::new(vec![cx + rr * angle.cos(), cy + rr * angle.sin()]));
        }
        let raw: Vec<(Simplex, f64)> = (0..sides)
            .map(|i| {
                (
                    Simplex::new(vec![pts[i].clone(), pts[(i + 1) % sides].clone()])
                        .expect("distinct"),
                    1.0,
                )
            })
            .collect();
        Chain::new(1, 2, raw).expect("loop")
    }
}
