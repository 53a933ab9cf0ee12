//! End-to-end trajectory pipeline: connect two cycles of a mesh by an
//! explicit space-time chain of certified size.
//!
//! A single build runs in five spliced stages. Both inputs are deformed
//! onto one shared cubical grid (the shift is sampled once for the union
//! of their supports, so cancellation downstream is meaningful); the two
//! skeletal images are rewritten in a common elementary-segment basis by
//! zero-variation refinement bridges; their difference is filled by a
//! linear program over a grid-aligned triangulation that contains every
//! node of both images bitwise; the filling is swept out by a stretch
//! trajectory; and the second deformation is traversed backwards. The
//! splice telescopes, so the boundary of the result is exactly the end
//! cycle at time one minus the start cycle at time zero, while its
//! variation is the sum of the two descent variations plus the mass of
//! the filling — the quantity the homogeneous flat norm bounds from
//! below.
//!
//! On top of the single-pair builder sit [`deformation_distance_bounds`],
//! which returns the certified lower/upper bracket for one pair, and
//! [`connectivity_run`], which drives a whole sequence of cycles against
//! a fixed target and records how trajectory size decays with the
//! filling cost.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::chains::{Chain, Point, Simplex};
use crate::complex::SimplicialComplex;
use crate::gridflow::{
    choose_shift, dynamical_deform_with, DeformOptions, DeformationDiagnostics, GridSpec,
};
use crate::spacetime::{
    concatenate, cone, reverse, static_trajectory, stretch, SpaceTimeChain, TrajectoryReport,
};
use crate::{Error, Result};

/// Hard cap on the number of grid squares a filling complex may cover;
/// beyond this the linear program would dominate the run.
const MAX_FILL_CELLS: usize = 4096;

/// Snap tolerance (grid units) for recognizing the odd-integer pinned
/// coordinates of a skeletal segment.
const PIN_TOL: f64 = 1e-6;

/// A chain with the supports of both inputs and none of the cancellation:
/// every simplex of either chain appears with the absolute value of its
/// coefficient, so a shift sampled for this chain clears both inputs.
fn support_union(a: &Chain, b: &Chain) -> Result<Chain> {
    let mut raw: Vec<(Simplex, f64)> = Vec::with_capacity(a.len() + b.len());
    for (s, c) in a.terms() {
        raw.push((s.clone(), c.abs()));
    }
    for (s, c) in b.terms() {
        raw.push((s.clone(), c.abs()));
    }
    Chain::new(a.k(), a.d(), raw)
}

fn odd_floor(x: f64) -> i64 {
    let f = x.floor() as i64;
    if f.rem_euclid(2) == 1 {
        f
    } else {
        f - 1
    }
}

fn odd_ceil(x: f64) -> i64 {
    let c = x.ceil() as i64;
    if c.rem_euclid(2) == 1 {
        c
    } else {
        c + 1
    }
}

/// The grid line carrying a skeletal segment: the unique axis along which
/// its endpoints differ, plus the odd integer grid values of the pinned
/// coordinates (in axis order, the varying axis omitted).
fn grid_line(g: &GridSpec, s: &Simplex) -> Result<(usize, Vec<i64>)> {
    let u = &s.vertices()[0];
    let v = &s.vertices()[1];
    let mut axis = None;
    for i in 0..u.dim() {
        if u.coords()[i] != v.coords()[i] {
            if axis.is_some() {
                return Err(Error::InvalidArgument(
                    "segment is not aligned with a grid axis".into(),
                ));
            }
            axis = Some(i);
        }
    }
    let axis = axis.ok_or_else(|| {
        Error::InvalidArgument("degenerate segment in a skeletal chain".into())
    })?;
    let yu = g.to_grid(u);
    let mut pinned = Vec::with_capacity(u.dim() - 1);
    for (j, &y) in yu.iter().enumerate() {
        if j == axis {
            continue;
        }
        let m = y.round() as i64;
        if (y - m as f64).abs() > PIN_TOL || m.rem_euclid(2) == 0 {
            return Err(Error::InvalidArgument(format!(
                "segment is pinned at grid value {y}, not on the 1-skeleton"
            )));
        }
        pinned.push(m);
    }
    Ok((axis, pinned))
}

/// Node registry of the skeletal chains on a shared grid: per grid line,
/// every segment endpoint in ascending order along the line, stored with
/// its exact world coordinates. The registry also carries the odd-integer
/// bounding box of everything it has seen, rounded outward.
struct SkeletonRegistry {
    g: GridSpec,
    k: usize,
    d: usize,
    lines: BTreeMap<(usize, Vec<i64>), Vec<Point>>,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl SkeletonRegistry {
    fn build(g: &GridSpec, k: usize, chains: &[&Chain]) -> Result<SkeletonRegistry> {
        let d = chains
            .iter()
            .find(|c| !c.is_zero())
            .map(|c| c.d())
            .ok_or_else(|| {
                Error::InvalidArgument(
                    "cannot build a filling complex around empty chains".into(),
                )
            })?;
        let mut minv = vec![f64::INFINITY; d];
        let mut maxv = vec![f64::NEG_INFINITY; d];
        let mut lines: BTreeMap<(usize, Vec<i64>), Vec<Point>> = BTreeMap::new();
        for chain in chains {
            for vertex in chain.vertices() {
                for (i, y) in g.to_grid(vertex).iter().enumerate() {
                    minv[i] = minv[i].min(*y);
                    maxv[i] = maxv[i].max(*y);
                }
            }
            if k == 0 {
                continue;
            }
            for (s, _) in chain.terms() {
                let (axis, pinned) = grid_line(g, s)?;
                let nodes = lines.entry((axis, pinned)).or_default();
                for vertex in s.vertices() {
                    Self::insert_node(nodes, axis, vertex)?;
                }
            }
        }
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        let mut cells: usize = 1;
        for i in 0..d {
            let a = odd_floor(minv[i]);
            let mut b = odd_ceil(maxv[i]);
            if b == a {
                b = a + 2;
            }
            cells = cells.saturating_mul(((b - a) / 2) as usize);
            lo.push(a);
            hi.push(b);
        }
        if cells > MAX_FILL_CELLS {
            return Err(Error::InvalidArgument(format!(
                "filling complex would cover {cells} grid cells (limit {MAX_FILL_CELLS}); \
                 use a coarser grid"
            )));
        }
        Ok(SkeletonRegistry {
            g: g.clone(),
            k,
            d,
            lines,
            lo,
            hi,
        })
    }

    /// Insert a node into a line's sorted list, deduplicating bitwise. Two
    /// distinct nodes never share their coordinate along the line, so a
    /// coordinate collision with differing points is corrupt input.
    fn insert_node(nodes: &mut Vec<Point>, axis: usize, p: &Point) -> Result<()> {
        let key = p.coords()[axis];
        match nodes.binary_search_by(|q| q.coords()[axis].total_cmp(&key)) {
            Ok(i) => {
                if nodes[i].coords() != p.coords() {
                    return Err(Error::InvalidArgument(
                        "two skeletal nodes collide along a grid line".into(),
                    ));
                }
            }
            Err(i) => nodes.insert(i, p.clone()),
        }
        Ok(())
    }

    /// World point of the grid position with the given integer coordinates.
    fn grid_point(&self, z: &[i64]) -> Point {
        let y: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        self.g.to_world(&y)
    }

    /// Registered nodes on a line strictly between two world coordinates.
    fn nodes_between(&self, axis: usize, pinned: &[i64], a: f64, b: f64) -> Vec<Point> {
        let Some(nodes) = self.lines.get(&(axis, pinned.to_vec())) else {
            return Vec::new();
        };
        nodes
            .iter()
            .filter(|p| {
                let x = p.coords()[axis];
                a < x && x < b
            })
            .cloned()
            .collect()
    }

    /// Interior split points of a skeletal segment: every registered node
    /// and every grid corner strictly inside it, ascending along the line.
    fn segment_splits(&self, s: &Simplex) -> Result<Vec<Point>> {
        let (axis, pinned) = grid_line(&self.g, s)?;
        let u = &s.vertices()[0];
        let v = &s.vertices()[1];
        let (xa, xb) = (u.coords()[axis], v.coords()[axis]);
        let mut splits = self.nodes_between(axis, &pinned, xa, xb);
        let ya = self.g.to_grid(u)[axis];
        let yb = self.g.to_grid(v)[axis];
        let mut m = odd_floor(ya.min(yb)) - 2;
        let m_end = odd_ceil(ya.max(yb)) + 2;
        while m <= m_end {
            let mut z = Vec::with_capacity(self.d);
            let mut pin = pinned.iter();
            for j in 0..self.d {
                if j == axis {
                    z.push(m);
                } else {
                    z.push(*pin.next().expect("pinned covers the other axes"));
                }
            }
            let corner = self.grid_point(&z);
            let x = corner.coords()[axis];
            if xa < x && x < xb {
                splits.push(corner);
            }
            m += 2;
        }
        splits.sort_by(|p, q| p.coords()[axis].total_cmp(&q.coords()[axis]));
        splits.dedup_by(|p, q| p.coords() == q.coords());
        Ok(splits)
    }

    /// The grid-aligned simplicial complex covering the registry's box.
    /// For point chains it is the graph of grid edges; for curve chains it
    /// is a triangulation of the grid squares whose sides are split at
    /// every registered node, with one fan center per square.
    fn complex(&self) -> Result<SimplicialComplex> {
        match (self.k, self.d) {
            (0, 1) => {
                let mut cells = Vec::new();
                let mut m = self.lo[0];
                while m < self.hi[0] {
                    cells.push(Simplex::new(vec![
                        self.grid_point(&[m]),
                        self.grid_point(&[m + 2]),
                    ])?);
                    m += 2;
                }
                SimplicialComplex::build(&cells)
            }
            (0, 2) => {
                let mut cells = Vec::new();
                let mut n = self.lo[1];
                while n <= self.hi[1] {
                    let mut m = self.lo[0];
                    while m < self.hi[0] {
                        cells.push(Simplex::new(vec![
                            self.grid_point(&[m, n]),
                            self.grid_point(&[m + 2, n]),
                        ])?);
                        m += 2;
                    }
                    n += 2;
                }
                let mut m = self.lo[0];
                while m <= self.hi[0] {
                    let mut n = self.lo[1];
                    while n < self.hi[1] {
                        cells.push(Simplex::new(vec![
                            self.grid_point(&[m, n]),
                            self.grid_point(&[m, n + 2]),
                        ])?);
                        n += 2;
                    }
                    m += 2;
                }
                SimplicialComplex::build(&cells)
            }
            (1, 2) => {
                let mut cells = Vec::new();
                let mut m = self.lo[0];
                while m < self.hi[0] {
                    let mut n = self.lo[1];
                    while n < self.hi[1] {
                        self.square_fan(m, n, &mut cells)?;
                        n += 2;
                    }
                    m += 2;
                }
                SimplicialComplex::build(&cells)
            }
            (k, d) => Err(Error::NotApplicable(format!(
                "filling complexes are built for k = 0 in d <= 2 and k = 1 in d = 2, \
                 got k = {k}, d = {d}"
            ))),
        }
    }

    /// Fan-triangulate the square with lower-odd corner `(m, n)`: walk its
    /// perimeter counterclockwise through corners and registered side
    /// nodes, and join consecutive nodes to the square's center.
    fn square_fan(&self, m: i64, n: i64, cells: &mut Vec<Simplex>) -> Result<()> {
        let c00 = self.grid_point(&[m, n]);
        let c10 = self.grid_point(&[m + 2, n]);
        let c11 = self.grid_point(&[m + 2, n + 2]);
        let c01 = self.grid_point(&[m, n + 2]);
        let mut ring: Vec<Point> = Vec::new();
        let side = |ring: &mut Vec<Point>, from: &Point, to: &Point, axis: usize, pin: i64| {
            ring.push(from.clone());
            let (a, b) = (from.coords()[axis], to.coords()[axis]);
            let mut nodes = self.nodes_between(axis, &[pin], a.min(b), a.max(b));
            if a > b {
                nodes.reverse();
            }
            ring.extend(nodes);
        };
        side(&mut ring, &c00, &c10, 0, n);
        side(&mut ring, &c10, &c11, 1, m + 2);
        side(&mut ring, &c11, &c01, 0, n + 2);
        side(&mut ring, &c01, &c00, 1, m);
        let center = self.grid_point(&[m + 1, n + 1]);
        for i in 0..ring.len() {
            let next = &ring[(i + 1) % ring.len()];
            cells.push(Simplex::new(vec![
                center.clone(),
                ring[i].clone(),
                next.clone(),
            ])?);
        }
        Ok(())
    }
}

/// A zero-variation prism between a skeletal cycle and its refinement:
/// returns `(W, Q)` with `Q` the chain rewritten in the elementary basis
/// and `bd W = (Q at time 1) - (P at time 0)` exactly. Every space-time
/// simplex of `W` is spatially degenerate (it sweeps along its own
/// segment), so `W` contributes nothing to variation or to the spatial
/// projection; its slices interpolate between the two subdivisions.
fn refinement_bridge(p: &Chain, reg: &SkeletonRegistry) -> Result<(SpaceTimeChain, Chain)> {
    if p.k() == 0 {
        return Ok((static_trajectory(p)?, p.clone()));
    }
    let mut w_raw = Vec::new();
    let mut q_raw = Vec::new();
    for (s, c) in p.terms() {
        let splits = reg.segment_splits(s)?;
        let u = &s.vertices()[0];
        let v = &s.vertices()[1];
        let mut tops: Vec<Point> = Vec::with_capacity(splits.len() + 2);
        tops.push(u.clone());
        tops.extend(splits);
        tops.push(v.clone());
        let a0 = u.at_time(0.0);
        let c0 = v.at_time(0.0);
        let lifted: Vec<Point> = tops.iter().map(|t| t.at_time(1.0)).collect();
        for i in 0..tops.len() - 1 {
            q_raw.push((
                Simplex::new(vec![tops[i].clone(), tops[i + 1].clone()])?,
                c,
            ));
            w_raw.push((
                Simplex::new(vec![a0.clone(), lifted[i].clone(), lifted[i + 1].clone()])?,
                c,
            ));
        }
        let last = lifted.last().expect("at least two nodes").clone();
        w_raw.push((Simplex::new(vec![a0, c0, last])?, -c));
    }
    let q = Chain::new(p.k(), p.d(), q_raw)?;
    let w = SpaceTimeChain::new(Chain::new(p.k() + 1, p.d() + 1, w_raw)?)?;
    Ok((w, q))
}

/// A built trajectory between two cycles, with its certificates: the flat
/// and homogeneous flat norms of the difference in the ambient complex
/// (the lower bound), the grid filling mass (the dominant variation cost),
/// and the full trajectory measurements.
#[derive(Clone, Debug)]
pub struct BuiltTrajectory {
    /// The spliced trajectory, from the first cycle at time 0 to the
    /// second at time 1.
    pub s: SpaceTimeChain,
    /// Measurements of `s` (variation, endpoint masses, sup-slice norm).
    pub report: TrajectoryReport,
    /// Flat norm of `T1 - T0` in the ambient complex.
    pub flat: f64,
    /// Homogeneous flat norm of `T1 - T0` in the ambient complex: the
    /// certified lower bound for the variation of any connecting
    /// trajectory supported there.
    pub flat_hom: f64,
    /// Mass of the grid filling swept out by the middle stage.
    pub filling_mass: f64,
    /// Mass of the solver-noise corrector cycle (zero when the filling
    /// boundary reproduces the skeletal difference bitwise).
    pub correction_mass: f64,
    /// Grid scale used for both deformations.
    pub epsilon: f64,
    /// Shared grid shift.
    pub shift: Vec<f64>,
    /// Diagnostics of the start cycle's deformation.
    pub deform_minus: DeformationDiagnostics,
    /// Diagnostics of the end cycle's deformation.
    pub deform_plus: DeformationDiagnostics,
    /// Whether `bd S` equals the end cycle at time 1 minus the start cycle
    /// at time 0 exactly, in canonical chain arithmetic.
    pub boundary_exact: bool,
}

impl BuiltTrajectory {
    pub fn to_json(&self) -> String {
        let wire = serde_json::json!({
            "s": self.s.to_wire(),
            "report": self.report,
            "flat": self.flat,
            "flat_hom": self.flat_hom,
            "filling_mass": self.filling_mass,
            "correction_mass": self.correction_mass,
            "epsilon": self.epsilon,
            "shift": self.shift,
            "deform_minus": self.deform_minus,
            "deform_plus": self.deform_plus,
            "boundary_exact": self.boundary_exact,
        });
        serde_json::to_string_pretty(&wire).expect("serialization cannot fail")
    }
}

/// Build a trajectory from `t0` to `t1` through a shared grid of scale
/// `epsilon`, with the default shift seed. See
/// [`build_trajectory_seeded`].
pub fn build_trajectory(
    t0: &Chain,
    t1: &Chain,
    x: &SimplicialComplex,
    epsilon: f64,
) -> Result<BuiltTrajectory> {
    build_trajectory_seeded(t0, t1, x, epsilon, 0)
}

/// Build a trajectory from `t0` to `t1`, both cycles carried by the
/// complex `x`, through a shared grid of scale `epsilon` whose shift is
/// sampled with the given seed.
///
/// The difference `t1 - t0` must bound in `x`; if its homogeneous flat
/// norm is infeasible the build fails with a homology obstruction carrying
/// the phase-1 certificate. Otherwise the result connects the inputs with
/// an exactly telescoping boundary, and its variation is the sum of the
/// two deformation variations and the grid filling mass (plus a corrector
/// of solver-noise size, reported separately).
pub fn build_trajectory_seeded(
    t0: &Chain,
    t1: &Chain,
    x: &SimplicialComplex,
    epsilon: f64,
    seed: u64,
) -> Result<BuiltTrajectory> {
    if t0.k() != t1.k() || t0.d() != t1.d() {
        return Err(Error::DimensionMismatch(format!(
            "connecting a {}-chain in R^{} to a {}-chain in R^{}",
            t0.k(),
            t0.d(),
            t1.k(),
            t1.d()
        )));
    }
    let k = t0.k();
    let d = t0.d();

    let diff = t1.sub(t0)?;
    let (flat, flat_hom) = if diff.is_zero() {
        (0.0, 0.0)
    } else {
        let embedded = x.embed(&diff)?;
        let flat = x.flat_norm(&embedded)?.value;
        let hom = x.flat_norm_hom(&embedded)?;
        if !hom.feasible {
            return Err(Error::HomologyObstruction {
                certificate: hom.certificate.unwrap_or(f64::INFINITY),
            });
        }
        (flat, hom.value)
    };

    let union = support_union(t0, t1)?;
    let shift = choose_shift(&union, epsilon, k, seed)?;
    let g = GridSpec::new(epsilon, shift.clone(), d, k)?;
    let opts = DeformOptions {
        seed,
        ..DeformOptions::default()
    };
    let r0 = dynamical_deform_with(t0, &g, &opts)?;
    let r1 = dynamical_deform_with(t1, &g, &opts)?;
    let s0 = r0.s.as_ref().expect("dynamical deformation builds its trajectory");
    let s1 = r1.s.as_ref().expect("dynamical deformation builds its trajectory");

    let (w0, w1, mid, filling_mass, correction_mass) =
        if r0.p.is_zero() && r1.p.is_zero() {
            let still = SpaceTimeChain::new(Chain::zero(k + 1, d + 1))?;
            (still.clone(), still.clone(), still, 0.0, 0.0)
        } else {
            let registry = SkeletonRegistry::build(&g, k, &[&r0.p, &r1.p])?;
            let (w0, q0) = refinement_bridge(&r0.p, &registry)?;
            let (w1, q1) = refinement_bridge(&r1.p, &registry)?;
            let diff_ref = q1.sub(&q0)?;
            if diff_ref.is_zero() {
                (w0, w1, static_trajectory(&q1)?, 0.0, 0.0)
            } else {
                let complex = registry.complex()?;
                let embedded = complex.embed(&diff_ref)?;
                let fill = complex.flat_norm_hom(&embedded)?;
                if !fill.feasible {
                    return Err(Error::HomologyObstruction {
                        certificate: fill.certificate.unwrap_or(f64::INFINITY),
                    });
                }
                let y = fill
                    .filling
                    .as_ref()
                    .expect("feasible solve carries its filling")
                    .to_chain()?;
                let nu = y.boundary()?.sub(&diff_ref)?;
                let mut mid = stretch(&y.neg())?.add(&static_trajectory(&q1)?)?;
                let correction_mass = nu.mass();
                if !nu.is_zero() {
                    let apex = nu
                        .vertices()
                        .next()
                        .expect("nonzero chain has a vertex")
                        .clone();
                    mid = mid.add(&cone(&nu, &apex)?)?;
                }
                (w0, w1, mid, y.mass(), correction_mass)
            }
        };

    let s = concatenate(
        &concatenate(&concatenate(&concatenate(s0, &w0)?, &mid)?, &reverse(&w1))?,
        &reverse(s1),
    )?;
    let report = s.report()?;
    let expected = t1.at_time(1.0).sub(&t0.at_time(0.0))?;
    let boundary_exact = s.inner().boundary()?.chains_equal(&expected);

    Ok(BuiltTrajectory {
        s,
        report,
        flat,
        flat_hom,
        filling_mass,
        correction_mass,
        epsilon,
        shift,
        deform_minus: r0.diagnostics,
        deform_plus: r1.diagnostics,
        boundary_exact,
    })
}

/// Two-sided bracket for the deformation distance between two cycles of
/// `x`: the homogeneous flat norm of their difference (no trajectory
/// supported anywhere can beat it) and the variation of the explicitly
/// built trajectory (so the true infimum lies in between). The gap closes
/// as `epsilon` shrinks.
pub fn deformation_distance_bounds(
    t0: &Chain,
    t1: &Chain,
    x: &SimplicialComplex,
    epsilon: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let built = build_trajectory_seeded(t0, t1, x, epsilon, seed)?;
    Ok((built.flat_hom, built.report.var))
}

/// Options for a connectivity run.
#[derive(Clone, Debug)]
pub struct ConnectivityOptions {
    /// Upper bound for the per-term grid scale. Each term uses
    /// `min(epsilon0, sqrt(F_hom))`, so the deformation cost
    /// `epsilon * M(T_j)` vanishes together with the filling cost; a term
    /// with zero filling cost keeps `epsilon0`.
    pub epsilon0: f64,
    /// Base seed; term `j` uses `seed + j`.
    pub seed: u64,
}

impl Default for ConnectivityOptions {
    fn default() -> Self {
        ConnectivityOptions {
            epsilon0: 0.5,
            seed: 0,
        }
    }
}

/// Per-term outcome of a connectivity run. A term whose difference to the
/// target does not bound in the complex is recorded as obstructed (with
/// the solver certificate) and produces no trajectory; every other field
/// then stays empty.
#[derive(Clone, Debug, Serialize)]
pub struct ConnectivityRecord {
    /// 1-based term index.
    pub j: usize,
    /// Grid scale used for this term.
    pub epsilon: Option<f64>,
    /// Flat norm of `T - T_j` in the ambient complex.
    pub flat: f64,
    /// Homogeneous flat norm, or `None` when the filling is obstructed.
    pub flat_hom: Option<f64>,
    /// Phase-1 certificate of an obstructed filling.
    pub certificate: Option<f64>,
    /// Variation of the built trajectory.
    pub var: Option<f64>,
    /// Sup-slice norm of the built trajectory.
    pub linfty: Option<f64>,
    /// Mass of the spatial projection (the swept region).
    pub mass_r: Option<f64>,
    /// Grid filling mass inside the trajectory.
    pub filling_mass: Option<f64>,
    /// Whether the boundary identity held exactly.
    pub boundary_exact: Option<bool>,
    /// Full measurement report of the trajectory.
    pub report: Option<TrajectoryReport>,
}

/// Outcome of a connectivity run: one record per term of the sequence,
/// the built trajectories for the unobstructed terms, and the summary
/// verdicts of the decay analysis.
#[derive(Clone, Debug, Serialize)]
pub struct ConnectivityRun {
    pub records: Vec<ConnectivityRecord>,
    /// Built trajectories, index-aligned with `records` (`None` for
    /// obstructed terms). Not serialized; fetch per-term JSON instead.
    #[serde(skip_serializing)]
    pub trajectories: Vec<Option<SpaceTimeChain>>,
    /// Largest ratio of a trajectory's sup-slice norm to the peak cycle
    /// mass of the whole run, or `None` when everything was massless or
    /// obstructed.
    pub c_measured: Option<f64>,
    /// Whether variation decreased strictly across consecutive
    /// unobstructed terms.
    pub var_monotone: bool,
    /// Whether every projection mass stayed below its variation.
    pub mass_bounded_by_var: bool,
}

impl ConnectivityRun {
    /// Summary table: one row per term with the headline numbers;
    /// obstructed terms leave their cells empty.
    pub fn csv(&self) -> String {
        let mut out = String::from("j,flat,flat_hom,var,linfty,mass_R\n");
        let cell = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.j,
                r.flat,
                cell(&r.flat_hom),
                cell(&r.var),
                cell(&r.linfty),
                cell(&r.mass_r),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }
}

/// Drive a sequence of cycles against a fixed target: for each term,
/// compute the flat and homogeneous flat norms of `T - T_j` in `x`, pick
/// the grid scale `min(epsilon0, sqrt(F_hom))`, and build the trajectory
/// from `T_j` to `T`. Obstructed terms are recorded and skipped; any
/// other failure aborts the run. The summary records the measured
/// sup-slice constant and whether variation decayed strictly.
pub fn connectivity_run(
    x: &SimplicialComplex,
    target: &Chain,
    sequence: &[Chain],
    opts: &ConnectivityOptions,
) -> Result<ConnectivityRun> {
    if sequence.is_empty() {
        return Err(Error::InvalidArgument(
            "connectivity run needs at least one term".into(),
        ));
    }
    if !(opts.epsilon0.is_finite() && opts.epsilon0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid scale bound must be positive, got {}",
            opts.epsilon0
        )));
    }
    let mut records = Vec::with_capacity(sequence.len());
    let mut trajectories = Vec::with_capacity(sequence.len());
    let mut peak_mass = target.mass();
    for (idx, tj) in sequence.iter().enumerate() {
        let j = idx + 1;
        peak_mass = peak_mass.max(tj.mass());
        let diff = target.sub(tj)?;
        let (flat, hom) = if diff.is_zero() {
            (0.0, None)
        } else {
            let embedded = x.embed(&diff)?;
            let flat = x.flat_norm(&embedded)?.value;
            (flat, Some(x.flat_norm_hom(&embedded)?))
        };
        let (flat_hom, certificate) = match &hom {
            None => (Some(0.0), None),
            Some(h) if h.feasible => (Some(h.value), None),
            Some(h) => (None, Some(h.certificate.unwrap_or(f64::INFINITY))),
        };
        let Some(fh) = flat_hom else {
            records.push(ConnectivityRecord {
                j,
                epsilon: None,
                flat,
                flat_hom: None,
                certificate,
                var: None,
                linfty: None,
                mass_r: None,
                filling_mass: None,
                boundary_exact: None,
                report: None,
            });
            trajectories.push(None);
            continue;
        };
        let eps_j = if fh > 0.0 {
            opts.epsilon0.min(fh.sqrt())
        } else {
            opts.epsilon0
        };
        let built =
            build_trajectory_seeded(tj, target, x, eps_j, opts.seed.wrapping_add(j as u64))?;
        let mass_r = built.s.spatial_projection()?.mass();
        records.push(ConnectivityRecord {
            j,
            epsilon: Some(eps_j),
            flat,
            flat_hom: Some(fh),
            certificate: None,
            var: Some(built.report.var),
            linfty: Some(built.report.linfty),
            mass_r: Some(mass_r),
            filling_mass: Some(built.filling_mass),
            boundary_exact: Some(built.boundary_exact),
            report: Some(built.report),
        });
        trajectories.push(Some(built.s));
    }
    let mut c_measured: Option<f64> = None;
    let mut var_monotone = true;
    let mut mass_bounded_by_var = true;
    let mut prev_var: Option<f64> = None;
    for r in &records {
        let (Some(var), Some(linfty), Some(mass_r)) = (r.var, r.linfty, r.mass_r) else {
            continue;
        };
        if peak_mass > 0.0 {
            let ratio = linfty / peak_mass;
            c_measured = Some(c_measured.map_or(ratio, |c: f64| c.max(ratio)));
        }
        if let Some(prev) = prev_var {
            if var >= prev {
                var_monotone = false;
            }
        }
        prev_var = Some(var);
        if mass_r > var + 1e-9 * var.max(1.0) {
            mass_bounded_by_var = false;
        }
    }
    Ok(ConnectivityRun {
        records,
        trajectories,
        c_measured,
        var_monotone,
        mass_bounded_by_var,
    })
}
