//! Space-time trajectory calculus for polyhedral chains.
//!
//! A space-time chain lives in `R^{1+d}` with coordinate 0 read as time in
//! `[0,1]`. A *trajectory* is a space-time chain whose boundary is supported
//! entirely in the end slices `{0} x R^d` and `{1} x R^d`; it connects the
//! cycle it starts from to the cycle it ends at. This module builds
//! trajectories (static prisms, cones, stretches, concatenations,
//! reversals, reparameterizations) and measures them (slices by the
//! cylinder formula, variation, `L^inf` slice norms, coarea checks).
//!
//! Sign conventions are pinned by two exact identities that every
//! construction here satisfies in canonical chain arithmetic, bit for bit:
//! the prism boundary
//! `bd([[a,b]] x T) = d_b x T - d_a x T - [[a,b]] x bd(T)` and the cone
//! boundary `bd(cone(T, v)) = -d_0 x T` for cycles `T`.

use serde::Serialize;

use crate::chains::{
    factorial, AffineMap, Chain, ChainJson, Point, Side, Simplex,
};
use crate::{Error, Result};

/// Interior sample count per breakpoint interval for `L^inf` profiles.
const PROFILE_SAMPLES: usize = 16;

/// Tolerance for detecting that a slice time hits a vertex-time breakpoint.
const BREAKPOINT_TOL: f64 = 1e-12;

/// A polyhedral chain in `R^{1+d}` whose first coordinate is time in
/// `[0,1]`, with the trajectory property cached.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeChain {
    inner: Chain,
    is_trajectory: bool,
}

impl SpaceTimeChain {
    /// Wrap a chain in `R^{1+d}`. All vertex times must lie in `[0,1]`
    /// (within `1e-12`); the trajectory flag is computed from the boundary.
    pub fn new(inner: Chain) -> Result<SpaceTimeChain> {
        if inner.d() == 0 {
            return Err(Error::DimensionMismatch(
                "a space-time chain needs a time coordinate plus at least nothing; R^0 has no time axis".into(),
            ));
        }
        for v in inner.vertices() {
            let t = v.coords()[0];
            if !(-BREAKPOINT_TOL..=1.0 + BREAKPOINT_TOL).contains(&t) {
                return Err(Error::InvalidArgument(format!(
                    "vertex time {t} outside [0,1]"
                )));
            }
        }
        let is_trajectory = trajectory_flag(&inner);
        Ok(SpaceTimeChain {
            inner,
            is_trajectory,
        })
    }

    /// The underlying chain in `R^{1+d}`.
    pub fn inner(&self) -> &Chain {
        &self.inner
    }

    /// Dimension of the space-time chain itself (`1+k` for slices of
    /// dimension `k`).
    pub fn dim(&self) -> usize {
        self.inner.k()
    }

    /// Spatial ambient dimension `d`.
    pub fn spatial_dim(&self) -> usize {
        self.inner.d() - 1
    }

    /// Whether the boundary is supported in the end slices `{0, 1} x R^d`.
    pub fn is_trajectory(&self) -> bool {
        self.is_trajectory
    }

    pub fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }

    pub fn mass(&self) -> f64 {
        self.inner.mass()
    }

    pub fn add(&self, other: &SpaceTimeChain) -> Result<SpaceTimeChain> {
        SpaceTimeChain::new(self.inner.add(&other.inner)?)
    }

    pub fn scale(&self, factor: f64) -> SpaceTimeChain {
        SpaceTimeChain {
            inner: self.inner.scale(factor),
            is_trajectory: self.is_trajectory,
        }
    }

    /// Sorted distinct vertex times (the profile breakpoints), always
    /// including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .inner
            .vertices()
            .map(|v| v.coords()[0])
            .chain([0.0, 1.0])
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= BREAKPOINT_TOL);
        times
    }

    /// Restriction to the time slab `[t0, t1]`, with control over whether
    /// simplices lying entirely in the cut planes are kept.
    fn time_slab(&self, t0: f64, t1: f64, keep_lower: bool, keep_upper: bool) -> Result<Chain> {
        let normal = time_normal(self.inner.d());
        let above = self
            .inner
            .restrict_halfspace_with(&normal, t0, Side::Geq, keep_lower)?;
        above.restrict_halfspace_with(&normal, t1, Side::Leq, keep_upper)
    }

    /// Variation of the whole chain: the spatial area genuinely swept,
    /// `sum |coeff| * |p eta| / (1+k)!` over simplices. Time
    /// reparameterization leaves every summand unchanged, so the value is
    /// rate-independent by construction.
    pub fn variation(&self) -> f64 {
        variation_of_chain(&self.inner)
    }

    /// Variation restricted to the closed slab `[t0, t1]`.
    pub fn variation_on(&self, t0: f64, t1: f64) -> Result<f64> {
        check_interval(t0, t1)?;
        Ok(variation_of_chain(&self.time_slab(t0, t1, true, true)?))
    }

    /// Variation of the boundary inside the open slab `(0,1)`; zero exactly
    /// for trajectories.
    pub fn boundary_variation(&self) -> Result<f64> {
        let b = self.inner.boundary()?;
        let tmp = SpaceTimeChain {
            inner: b,
            is_trajectory: false,
        };
        Ok(variation_of_chain(&tmp.time_slab(0.0, 1.0, false, false)?))
    }

    /// One-sided slice from below:
    /// `p_*( bd(S restricted to {time < t}) - (bd S) restricted to {time < t} )`.
    pub fn slice_lower(&self, t: f64) -> Result<Chain> {
        let normal = time_normal(self.inner.d());
        let below = self
            .inner
            .restrict_halfspace_with(&normal, t, Side::Leq, false)?;
        let term1 = below.boundary()?;
        let term2 = self
            .inner
            .boundary()?
            .restrict_halfspace_with(&normal, t, Side::Leq, false)?;
        term1.sub(&term2)?.drop_time()
    }

    /// One-sided slice from above:
    /// `p_*( (bd S) restricted to {time > t} - bd(S restricted to {time > t}) )`.
    pub fn slice_upper(&self, t: f64) -> Result<Chain> {
        let normal = time_normal(self.inner.d());
        let above = self
            .inner
            .restrict_halfspace_with(&normal, t, Side::Geq, false)?;
        let term1 = self
            .inner
            .boundary()?
            .restrict_halfspace_with(&normal, t, Side::Geq, false)?;
        term1.sub(&above.boundary()?)?.drop_time()
    }

    /// The slice `S(t)` as a chain in `R^d`. At generic `t` the two
    /// one-sided slices agree and the lower one is returned; when `t` hits
    /// a vertex-time breakpoint the two-sided average is returned and
    /// flagged.
    pub fn slice(&self, t: f64) -> Result<SliceResult> {
        if !t.is_finite() {
            return Err(Error::NonFinite("slice time".into()));
        }
        let at_breakpoint = self
            .breakpoints()
            .iter()
            .any(|&b| (b - t).abs() <= BREAKPOINT_TOL * t.abs().max(1.0));
        let chain = if at_breakpoint {
            let lower = self.slice_lower(t)?;
            let upper = self.slice_upper(t)?;
            lower.add(&upper)?.scale(0.5)
        } else {
            self.slice_lower(t)?
        };
        Ok(SliceResult {
            chain,
            at_breakpoint,
        })
    }

    /// Spatial projection `p_* S`: drop the time coordinate. Its mass never
    /// exceeds the variation.
    pub fn spatial_projection(&self) -> Result<Chain> {
        self.inner.drop_time()
    }

    /// Start and end cycles `(bd^- S, bd^+ S)`, from
    /// `bd S = d_1 x bd^+ S - d_0 x bd^- S`. Errors when boundary mass
    /// sits strictly inside `(0,1)` (the chain is not a trajectory).
    pub fn endpoints(&self) -> Result<(Chain, Chain)> {
        let b = self.inner.boundary()?;
        let mut minus_raw = Vec::new();
        let mut plus_raw = Vec::new();
        let mut interior_mass = 0.0;
        for (s, c) in b.terms() {
            let times: Vec<f64> = s.vertices().iter().map(|v| v.coords()[0]).collect();
            if times.iter().all(|&t| t.abs() <= BREAKPOINT_TOL) {
                minus_raw.push((s.clone(), -c));
            } else if times.iter().all(|&t| (t - 1.0).abs() <= BREAKPOINT_TOL) {
                plus_raw.push((s.clone(), c));
            } else {
                interior_mass += c.abs() * s.volume();
            }
        }
        if interior_mass > 1e-9 * b.mass().max(1.0) {
            return Err(Error::NotATrajectory(format!(
                "boundary mass {interior_mass:.3e} lies strictly inside (0,1)"
            )));
        }
        let minus = Chain::new(b.k(), b.d(), minus_raw)?.drop_time()?;
        let plus = Chain::new(b.k(), b.d(), plus_raw)?.drop_time()?;
        Ok((minus, plus))
    }

    /// `L^inf` slice norm over `[0,1]` with its sampled profile.
    pub fn linfty(&self) -> Result<(f64, TimeProfile)> {
        self.linfty_on(0.0, 1.0)
    }

    /// `L^inf` slice norm over `[t0, t1]`: the profile is sampled at the
    /// one-sided limits of every breakpoint plus 16 uniform interior points
    /// per interval, and re-checked at doubled resolution; a relative
    /// change above `1e-3` sets the refinement warning.
    pub fn linfty_on(&self, t0: f64, t1: f64) -> Result<(f64, TimeProfile)> {
        check_interval(t0, t1)?;
        self.profile_of(t0, t1, |chain| chain.mass())
    }

    /// Sampled profile of an arbitrary slice functional (used for both
    /// `M(S(t))` and `M(bd S(t))`).
    fn profile_of(
        &self,
        t0: f64,
        t1: f64,
        value: impl Fn(&Chain) -> f64,
    ) -> Result<(f64, TimeProfile)> {
        let mut bps: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .filter(|&b| b >= t0 - BREAKPOINT_TOL && b <= t1 + BREAKPOINT_TOL)
            .collect();
        if bps.first().map_or(true, |&b| (b - t0).abs() > BREAKPOINT_TOL) {
            bps.insert(0, t0);
        }
        if bps.last().map_or(true, |&b| (b - t1).abs() > BREAKPOINT_TOL) {
            bps.push(t1);
        }
        let mut values = Vec::new();
        let mut best = 0.0f64;
        for (i, &b) in bps.iter().enumerate() {
            if i + 1 < bps.len() {
                let v = value(&self.slice_upper(b)?);
                best = best.max(v);
                values.push((b, v));
            }
            if i > 0 {
                let v = value(&self.slice_lower(b)?);
                best = best.max(v);
                values.push((b, v));
            }
        }
        let mut refined = best;
        for w in bps.windows(2) {
            let (a, b) = (w[0], w[1]);
            for pass in 0..2 {
                let m = PROFILE_SAMPLES << pass;
                for s in 1..=m {
                    let t = a + (b - a) * s as f64 / (m + 1) as f64;
                    let v = value(&self.slice_lower(t)?);
                    if pass == 0 {
                        best = best.max(v);
                        values.push((t, v));
                    }
                    refined = refined.max(v);
                }
            }
        }
        let warning = (refined - best).abs() > 1e-3 * best.max(1.0);
        values.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok((
            refined.max(best),
            TimeProfile {
                breakpoints: bps,
                samples_per_interval: PROFILE_SAMPLES,
                values,
                refinement_warning: warning,
            },
        ))
    }

    /// Coarea check: the left side integrates the slice mass `M(S(t))`
    /// numerically over `[0,1]` (adaptive Simpson between breakpoints); the
    /// right side is the exact per-simplex sum
    /// `sum |coeff| * |eta contracted with dt| / (1+k)!`.
    pub fn coarea_check(&self) -> Result<(f64, f64)> {
        let rhs: f64 = self
            .inner
            .terms()
            .map(|(s, c)| c.abs() * s.multivector().temporal_norm() / factorial(s.k()))
            .sum();
        let bps = self.breakpoints();
        let mut lhs = 0.0;
        for w in bps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= BREAKPOINT_TOL {
                continue;
            }
            let f = |t: f64| -> Result<f64> { Ok(self.slice_lower(t)?.mass()) };
            // One-sided values at the ends, generic values inside.
            let fa = self.slice_upper(a)?.mass();
            let fb = self.slice_lower(b)?.mass();
            let fm = f(0.5 * (a + b))?;
            lhs += adaptive_simpson(&f, a, b, fa, fm, fb, 1e-9 * rhs.max(1.0), 14)?;
        }
        Ok((lhs, rhs))
    }

    /// The full measurement report for a trajectory.
    pub fn report(&self) -> Result<TrajectoryReport> {
        let (minus, plus) = self.endpoints()?;
        let var = self.variation();
        let boundary_var = self.boundary_variation()?;
        let (linfty, profile) = self.linfty()?;
        let boundary_linfty = if self.inner.k() >= 2 {
            let (v, _) = self.profile_of(0.0, 1.0, |chain| {
                chain.boundary().map(|b| b.mass()).unwrap_or(0.0)
            })?;
            v
        } else {
            0.0
        };
        // Lipschitz estimate of t -> Var(S;[0,t]) + Var(bd S;(0,t)) at
        // breakpoint resolution; the boundary term vanishes for
        // trajectories.
        let bps = self.breakpoints();
        let mut lip = 0.0f64;
        let mut prev = 0.0;
        for w in bps.windows(2) {
            let cum = self.variation_on(0.0, w[1])?;
            if w[1] - w[0] > BREAKPOINT_TOL {
                lip = lip.max((cum - prev) / (w[1] - w[0]));
            }
            prev = cum;
        }
        let projection_mass = self.spatial_projection()?.mass();
        let end_mass = minus.mass().max(plus.mass());
        Ok(TrajectoryReport {
            var,
            boundary_var,
            linfty,
            boundary_linfty,
            lip,
            minus_mass: minus.mass(),
            plus_mass: plus.mass(),
            projection_mass,
            linfty_over_max_endpoint_mass: if end_mass > 0.0 {
                Some(linfty / end_mass)
            } else {
                None
            },
            linfty_refinement_warning: profile.refinement_warning,
            endpoint_minus: minus.to_wire(),
            endpoint_plus: plus.to_wire(),
        })
    }

    /// Reparameterize time through a strictly increasing piecewise-linear
    /// bijection of `[0,1]`. Simplices are split exactly at the knot
    /// planes, so variation and the `L^inf` profile are invariant.
    pub fn reparameterize(&self, map: &PiecewiseLinearMap) -> Result<SpaceTimeChain> {
        self.apply_time_map(map.knots())
    }

    /// Reparameterize so cumulative variation grows affinely in time (on
    /// the breakpoint grid refined by 16 interior samples per interval).
    /// The reported Lipschitz constant of the result is its total
    /// variation. Returns the chain unchanged when the variation vanishes;
    /// purely static stages collapse to time-degenerate simplices and are
    /// deleted.
    pub fn normalize_speed(&self) -> Result<SpaceTimeChain> {
        let total = self.variation();
        if total <= 1e-12 * self.inner.mass().max(1.0) {
            return Ok(self.clone());
        }
        let bps = self.breakpoints();
        let mut grid = Vec::new();
        for (i, w) in bps.windows(2).enumerate() {
            if i == 0 {
                grid.push(w[0]);
            }
            for s in 1..=PROFILE_SAMPLES {
                grid.push(w[0] + (w[1] - w[0]) * s as f64 / (PROFILE_SAMPLES + 1) as f64);
            }
            grid.push(w[1]);
        }
        let mut knots = Vec::with_capacity(grid.len());
        let mut prev_alpha = 0.0f64;
        for (i, &g) in grid.iter().enumerate() {
            let alpha = if i == 0 {
                0.0
            } else {
                // Clamp to monotone: rounding in the slab restriction can
                // dent the cumulative sum by one ulp.
                (self.variation_on(0.0, g)? / total).max(prev_alpha)
            };
            knots.push((g, alpha));
            prev_alpha = alpha;
        }
        if let Some(last) = knots.last_mut() {
            last.1 = 1.0;
        }
        self.apply_time_map(&knots)
    }

    /// Map vertex times through the piecewise-linear graph `knots`
    /// (weakly increasing images allowed: zero-slope slabs collapse).
    ///
    /// The chain is split progressively at the knot planes — each cut
    /// produces both sides from the same clip recursion — so the two slabs
    /// meeting a plane carry the identical triangulation of the interface
    /// and the boundary of the result telescopes exactly to the mapped
    /// boundary.
    fn apply_time_map(&self, knots: &[(f64, f64)]) -> Result<SpaceTimeChain> {
        let normal = time_normal(self.inner.d());
        let mut raw: Vec<(Simplex, f64)> = Vec::new();
        let mut rest = self.inner.clone();
        for (idx, w) in knots.windows(2).enumerate() {
            let (ta, ia) = w[0];
            let (tb, ib) = w[1];
            assert!(tb > ta, "knot times must increase strictly");
            let chunk = if idx + 2 == knots.len() {
                std::mem::replace(&mut rest, Chain::zero(self.inner.k(), self.inner.d()))
            } else {
                let below = rest.restrict_halfspace_with(&normal, tb, Side::Leq, true)?;
                rest = rest.restrict_halfspace_with(&normal, tb, Side::Geq, false)?;
                below
            };
            let slope = (ib - ia) / (tb - ta);
            for (s, c) in chunk.terms() {
                let vertices = s
                    .vertices()
                    .iter()
                    .map(|v| {
                        let t = v.coords()[0];
                        let mapped = if t == ta {
                            ia
                        } else if t == tb {
                            ib
                        } else {
                            ia + (t - ta) * slope
                        };
                        let mut coords = v.coords().to_vec();
                        coords[0] = mapped;
                        Point::new(coords)
                    })
                    .collect();
                raw.push((Simplex::new(vertices)?, c));
            }
        }
        SpaceTimeChain::new(Chain::new(self.inner.k(), self.inner.d(), raw)?)
    }

    pub fn to_wire(&self) -> ChainJson {
        let mut wire = self.inner.to_wire();
        wire.spacetime = Some(true);
        wire
    }

    pub fn from_wire(wire: &ChainJson) -> Result<SpaceTimeChain> {
        SpaceTimeChain::new(Chain::from_wire(wire)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<SpaceTimeChain> {
        let wire: ChainJson = serde_json::from_str(s)
            .map_err(|e| Error::InvalidArgument(format!("bad trajectory JSON: {e}")))?;
        SpaceTimeChain::from_wire(&wire)
    }
}

/// A slice together with whether the slice time hit a breakpoint (in which
/// case the value is the two-sided average).
#[derive(Clone, Debug)]
pub struct SliceResult {
    pub chain: Chain,
    pub at_breakpoint: bool,
}

/// Sampled slice-mass profile backing an `L^inf` value.
#[derive(Clone, Debug, Serialize)]
pub struct TimeProfile {
    pub breakpoints: Vec<f64>,
    pub samples_per_interval: usize,
    /// `(t, value)` rows sorted by time; breakpoints appear with their
    /// one-sided limit values.
    pub values: Vec<(f64, f64)>,
    pub refinement_warning: bool,
}

impl TimeProfile {
    /// CSV rows `t,mass` (header included).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mass\n");
        for (t, v) in &self.values {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

/// Measurements of a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryReport {
    pub var: f64,
    pub boundary_var: f64,
    pub linfty: f64,
    pub boundary_linfty: f64,
    /// Lipschitz estimate of cumulative variation at breakpoint resolution.
    pub lip: f64,
    pub minus_mass: f64,
    pub plus_mass: f64,
    pub projection_mass: f64,
    pub linfty_over_max_endpoint_mass: Option<f64>,
    pub linfty_refinement_warning: bool,
    pub endpoint_minus: ChainJson,
    pub endpoint_plus: ChainJson,
}

/// The static trajectory `[[0,1]] x T`: the chain `T` standing still. Its
/// variation is zero and every slice equals `T`.
pub fn static_trajectory(t: &Chain) -> Result<SpaceTimeChain> {
    SpaceTimeChain::new(Chain::interval_product(0.0, 1.0, t)?)
}

/// The cone `T > v`: collapse `T` linearly onto the point `v`, reaching it
/// at time 1. Per simplex this is `(-1)^k [[(0,v_0),..,(0,v_k),(1,v)]]`;
/// the sign makes the boundary identity `bd(cone(T,v)) = -d_0 x T` hold
/// exactly for every cycle `T`, and the slice at time `t` is the image of
/// `T` under `x -> (1-t)x + tv`. Non-cycle inputs are permitted and yield a
/// chain flagged as non-trajectory.
pub fn cone(t: &Chain, v: &Point) -> Result<SpaceTimeChain> {
    if v.dim() != t.d() {
        return Err(Error::DimensionMismatch(format!(
            "apex in R^{}, chain in R^{}",
            v.dim(),
            t.d()
        )));
    }
    if !v.is_finite() {
        return Err(Error::NonFinite("cone apex".into()));
    }
    let k = t.k();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let apex = v.at_time(1.0);
    let mut raw = Vec::with_capacity(t.len());
    for (s, c) in t.terms() {
        let mut vertices: Vec<Point> = s.vertices().iter().map(|p| p.at_time(0.0)).collect();
        vertices.push(apex.clone());
        raw.push((Simplex::new(vertices)?, sign * c));
    }
    SpaceTimeChain::new(Chain::new(k + 1, t.d() + 1, raw)?)
}

/// Stretch a `(1+k)`-chain `P` into a trajectory that sweeps it out: each
/// simplex is replaced by the cone of its boundary over its own first
/// vertex. The result satisfies, exactly in canonical arithmetic,
/// `bd S = -d_0 x bd P`, and `Var(S) = M(P)`; its spatial projection is
/// `-P` (the cone construction sweeps each simplex with reversed spatial
/// orientation while keeping the boundary identity above).
pub fn stretch(p: &Chain) -> Result<SpaceTimeChain> {
    if p.k() == 0 {
        return Err(Error::InvalidArgument(
            "stretch needs a chain of dimension at least 1".into(),
        ));
    }
    let k = p.k() - 1;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut raw = Vec::new();
    for (s, c) in p.terms() {
        let apex = s.vertices()[0].at_time(1.0);
        for i in 0..=p.k() {
            let face = s.face(i);
            let face_sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut vertices: Vec<Point> =
                face.vertices().iter().map(|q| q.at_time(0.0)).collect();
            vertices.push(apex.clone());
            raw.push((Simplex::new(vertices)?, sign * face_sign * c));
        }
    }
    SpaceTimeChain::new(Chain::new(p.k(), p.d() + 1, raw)?)
}

/// Run `first` on `[0, 1/2]` and `second` on `[1/2, 1]`. Requires the end
/// cycle of `first` to equal the start cycle of `second` (within `1e-9`
/// relative mass); variation is exactly additive and the `L^inf` norm is
/// the maximum of the parts.
pub fn concatenate(
    first: &SpaceTimeChain,
    second: &SpaceTimeChain,
) -> Result<SpaceTimeChain> {
    if first.inner.k() != second.inner.k() || first.inner.d() != second.inner.d() {
        return Err(Error::DimensionMismatch(
            "concatenating chains of different dimensions".into(),
        ));
    }
    let (_, plus) = first.endpoints()?;
    let (minus, _) = second.endpoints()?;
    let gap = plus.sub(&minus)?.mass();
    if gap > 1e-9 * plus.mass().max(minus.mass()).max(1.0) {
        return Err(Error::EndpointMismatch { gap });
    }
    let a = time_squeeze(&first.inner, 0.5, 0.0)?;
    let b = time_squeeze(&second.inner, 0.5, 0.5)?;
    SpaceTimeChain::new(a.add(&b)?)
}

/// Time reversal: `reverse(S)` runs the same sweep backwards, with the
/// orientation flip that swaps the endpoints without negating them:
/// start(reverse S) = end(S) and end(reverse S) = start(S). Variation and
/// the `L^inf` profile are preserved.
pub fn reverse(s: &SpaceTimeChain) -> SpaceTimeChain {
    let d1 = s.inner.d();
    let mut matrix = vec![vec![0.0; d1]; d1];
    matrix[0][0] = -1.0;
    for (i, row) in matrix.iter_mut().enumerate().skip(1) {
        row[i] = 1.0;
    }
    let mut translation = vec![0.0; d1];
    translation[0] = 1.0;
    let map = AffineMap::new(matrix, translation).expect("reflection map is well-formed");
    let mapped = s
        .inner
        .affine_pushforward(&map)
        .expect("dimensions match")
        .neg();
    SpaceTimeChain::new(mapped).expect("time reflection keeps times in [0,1]")
}

/// A strictly increasing piecewise-linear bijection of `[0,1]`, stored by
/// its knots `(t, a(t))`.
#[derive(Clone, Debug)]
pub struct PiecewiseLinearMap {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinearMap {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<PiecewiseLinearMap> {
        if knots.len() < 2 {
            return Err(Error::InvalidReparameterization(
                "need at least the two end knots".into(),
            ));
        }
        if knots.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
            return Err(Error::NonFinite("reparameterization knots".into()));
        }
        let first = knots.first().unwrap();
        let last = knots.last().unwrap();
        if first.0 != 0.0 || first.1 != 0.0 || last.0 != 1.0 || last.1 != 1.0 {
            return Err(Error::InvalidReparameterization(
                "map must send 0 to 0 and 1 to 1".into(),
            ));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::InvalidReparameterization(format!(
                    "knots must increase strictly: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(PiecewiseLinearMap { knots })
    }

    pub fn identity() -> PiecewiseLinearMap {
        PiecewiseLinearMap {
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        for w in self.knots.windows(2) {
            if t <= w[1].0 {
                let (ta, ia) = w[0];
                let (tb, ib) = w[1];
                if t <= ta {
                    return ia;
                }
                return ia + (t - ta) * (ib - ia) / (tb - ta);
            }
        }
        self.knots.last().unwrap().1
    }
}

/// Variation of a raw space-time chain: `sum |c| |p eta| / k!` with `k` the
/// chain dimension.
fn variation_of_chain(c: &Chain) -> f64 {
    c.terms()
        .map(|(s, coeff)| coeff.abs() * s.multivector().spatial_norm() / factorial(s.k()))
        .sum()
}

fn time_normal(d1: usize) -> Vec<f64> {
    let mut n = vec![0.0; d1];
    n[0] = 1.0;
    n
}

fn check_interval(t0: f64, t1: f64) -> Result<()> {
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::NonFinite("interval endpoints".into()));
    }
    if t0 >= t1 {
        return Err(Error::InvalidInterval { a: t0, b: t1 });
    }
    Ok(())
}

/// Apply `t -> alpha t + beta` to the time coordinate.
fn time_squeeze(inner: &Chain, alpha: f64, beta: f64) -> Result<Chain> {
    let d1 = inner.d();
    let mut matrix = vec![vec![0.0; d1]; d1];
    matrix[0][0] = alpha;
    for (i, row) in matrix.iter_mut().enumerate().skip(1) {
        row[i] = 1.0;
    }
    let mut translation = vec![0.0; d1];
    translation[0] = beta;
    inner.affine_pushforward(&AffineMap::new(matrix, translation)?)
}

fn trajectory_flag(inner: &Chain) -> bool {
    if inner.k() == 0 {
        return false;
    }
    let Ok(b) = inner.boundary() else {
        return false;
    };
    let flat = b.terms().all(|(s, _)| {
        let times: Vec<f64> = s.vertices().iter().map(|v| v.coords()[0]).collect();
        times.iter().all(|&t| t.abs() <= BREAKPOINT_TOL)
            || times.iter().all(|&t| (t - 1.0).abs() <= BREAKPOINT_TOL)
    });
    flat
}

/// Adaptive Simpson quadrature with a fallible integrand.
fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(adaptive_simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1)?)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::chains::test_support::{random_chain, random_loop};
    use rand::Rng;

    /// Random trajectory for property tests: cones over loops, stretches,
    /// statics, and endpoint-compatible concatenations thereof.
    pub fn random_trajectory<R: Rng>(rng: &mut R, d: usize) -> SpaceTimeChain {
        let t = random_loop(rng, d, 4, 1.0);
        match rng.gen_range(0..5) {
            0 => {
                let v = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
                cone(&t, &v).unwrap()
            }
            1 => static_trajectory(&t).unwrap(),
            2 => stretch(&random_chain(rng, 2, d, 3)).unwrap(),
            3 => {
                let v = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
                let w = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
                concatenate(&cone(&t, &v).unwrap(), &reverse(&cone(&t, &w).unwrap())).unwrap()
            }
            _ => {
                let v = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
                reverse(&cone(&t, &v).unwrap())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::random_trajectory;
    use super::*;
    use crate::chains::test_support::{chain, pt, random_chain, random_loop};
    use crate::chains::current_gap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_loop(d: usize) -> Chain {
        // Boundary of the unit right triangle, a 1-cycle.
        let tri = if d == 2 {
            chain(2, 2, &[(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], 1.0)])
        } else {
            chain(
                2,
                3,
                &[(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 1.0)],
            )
        };
        tri.boundary().unwrap()
    }

    #[test]
    fn static_trajectory_stands_still() {
        let t = unit_loop(2);
        let s = static_trajectory(&t).unwrap();
        assert!(s.is_trajectory());
        assert_eq!(s.variation(), 0.0, "a standing chain sweeps no area");
        assert!((s.mass() - t.mass()).abs() < 1e-12);
        let sl = s.slice(0.5).unwrap();
        assert!(!sl.at_breakpoint);
        // The slice is a subdivision of T (prism diagonals cross the cut
        // plane), so compare as currents.
        assert!(current_gap(&sl.chain, &t).unwrap() <= 1e-12);
        let (minus, plus) = s.endpoints().unwrap();
        assert!(minus.chains_equal(&t));
        assert!(plus.chains_equal(&t));
    }

    #[test]
    fn static_of_non_cycle_is_flagged() {
        let t = chain(1, 2, &[(&[&[0.0, 0.0], &[1.0, 0.0]], 1.0)]);
        let s = static_trajectory(&t).unwrap();
        assert!(!s.is_trajectory(), "prism over a non-cycle leaks boundary");
        assert!(s.endpoints().is_err());
    }

    #[test]
    fn cone_of_segment_frozen_value() {
        // cone([[(0,0),(1,0)]], (0,0)): odd dimension flips the join sign.
        let t = chain(1, 2, &[(&[&[0.0, 0.0], &[1.0, 0.0]], 1.0)]);
        let s = cone(&t, &pt(&[0.0, 0.0])).unwrap();
        let expected = chain(
            2,
            3,
            &[(&[&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]], -1.0)],
        );
        assert!(s.inner().chains_equal(&expected), "got {}", s.inner());
        assert_eq!(s.variation(), 0.0, "projected sweep is collinear");
    }

    #[test]
    fn cone_boundary_identity_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let d = if rng.gen_bool(0.5) { 2 } else { 3 };
            let t = random_loop(&mut rng, d, 5, 1.0);
            let v = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let s = cone(&t, &v).unwrap();
            assert!(s.is_trajectory());
            let expected = t.at_time(0.0).neg();
            assert!(
                s.inner().boundary().unwrap().chains_equal(&expected),
                "cone boundary must be -d_0 x T"
            );
            let (minus, plus) = s.endpoints().unwrap();
            assert!(minus.chains_equal(&t));
            assert!(plus.is_zero());
        }
    }

    #[test]
    fn cone_boundary_identity_for_balanced_diracs() {
        let t = chain(0, 2, &[(&[&[0.0, 0.0]], 1.0), (&[&[1.0, 1.0]], -1.0)]);
        let v = pt(&[0.25, 0.5]);
        let s = cone(&t, &v).unwrap();
        assert!(s.is_trajectory());
        let (minus, plus) = s.endpoints().unwrap();
        assert!(minus.chains_equal(&t));
        assert!(plus.is_zero(), "balanced diracs annihilate at the apex");
    }

    #[test]
    fn cone_slice_is_affine_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..20 {
            let d = if rng.gen_bool(0.5) { 2 } else { 3 };
            let t = random_loop(&mut rng, d, 4, 1.0);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = cone(&t, &Point::new(v.clone())).unwrap();
            for tau in [0.3, 0.77] {
                let sl = s.slice(tau).unwrap().chain;
                let mut matrix = vec![vec![0.0; d]; d];
                for (i, row) in matrix.iter_mut().enumerate() {
                    row[i] = 1.0 - tau;
                }
                let translation = v.iter().map(|x| tau * x).collect();
                let map = AffineMap::new(matrix, translation).unwrap();
                let image = t.affine_pushforward(&map).unwrap();
                assert!(
                    current_gap(&sl, &image).unwrap() <= 1e-9,
                    "cylinder slice must match the affine image"
                );
            }
        }
    }

    #[test]
    fn cone_over_triangle_boundary_frozen_variation() {
        // Var(cone) = M(p_* cone) = area of the triangle = 1/2.
        let t = unit_loop(2);
        let centroid = pt(&[1.0 / 3.0, 1.0 / 3.0]);
        let s = cone(&t, &centroid).unwrap();
        assert!((s.variation() - 0.5).abs() < 1e-12, "{}", s.variation());
        let proj = s.spatial_projection().unwrap();
        assert!((proj.mass() - 0.5).abs() < 1e-12);
        // L^inf is attained as t -> 0 where the slice approaches T itself.
        let (linfty, _) = s.linfty().unwrap();
        let expected = t.mass();
        assert!((linfty - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn cone_variation_equals_projection_mass_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let d = if rng.gen_bool(0.5) { 2 } else { 3 };
            let t = random_loop(&mut rng, d, 4, 1.0);
            let v = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let s = cone(&t, &v).unwrap();
            let var = s.variation();
            let pm = s.spatial_projection().unwrap().mass();
            assert!((var - pm).abs() <= 1e-9 * var.max(1.0));
            // L^inf never exceeds the base mass.
            let (linfty, _) = s.linfty().unwrap();
            assert!(linfty <= t.mass() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn stretch_boundary_identity_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..50 {
            let d = if rng.gen_bool(0.5) { 2 } else { 3 };
            let p = random_chain(&mut rng, 2, d, 4);
            let s = stretch(&p).unwrap();
            let expected = p.boundary().unwrap().at_time(0.0).neg();
            assert!(
                s.inner().boundary().unwrap().chains_equal(&expected),
                "stretch boundary must be -d_0 x bd P"
            );
            let var = s.variation();
            assert!((var - p.mass()).abs() <= 1e-9 * p.mass().max(1.0));
            // The sweep covers P with reversed spatial orientation.
            let proj = s.spatial_projection().unwrap();
            assert!(proj.approx_eq(&p.neg(), 1e-9 * p.max_abs_coeff().max(1.0)));
        }
    }

    #[test]
    fn stretch_unit_triangle_frozen_values() {
        let p = chain(2, 2, &[(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], 1.0)]);
        let s = stretch(&p).unwrap();
        assert!((s.variation() - 0.5).abs() < 1e-12);
        let (linfty, _) = s.linfty().unwrap();
        let bd_mass = p.boundary().unwrap().mass(); // 2 + sqrt 2
        assert!(linfty <= bd_mass * (1.0 + 1e-9), "{linfty} vs {bd_mass}");
        assert!(stretch(&Chain::zero(2, 2)).unwrap().is_zero());
    }

    #[test]
    fn concatenation_is_additive_in_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..25 {
            let d = 2;
            let t = random_loop(&mut rng, d, 4, 1.0);
            let v = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let w = Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let s1 = cone(&t, &v).unwrap();
            let s2 = reverse(&cone(&t, &w).unwrap());
            let s = concatenate(&s1, &s2).unwrap();
            assert!(s.is_trajectory());
            let var_sum = s1.variation() + s2.variation();
            assert!(
                (s.variation() - var_sum).abs() <= 1e-12 * var_sum.max(1.0),
                "variation must add under concatenation"
            );
            let (l, _) = s.linfty().unwrap();
            let (l1, _) = s1.linfty().unwrap();
            let (l2, _) = s2.linfty().unwrap();
            let lmax = l1.max(l2);
            assert!((l - lmax).abs() <= 1e-9 * lmax.max(1.0));
            let (minus, plus) = s.endpoints().unwrap();
            assert!(minus.chains_equal(&t));
            assert!(plus.approx_eq(&t, 1e-9));
        }
    }

    #[test]
    fn concatenation_rejects_mismatched_endpoints() {
        let t1 = unit_loop(2);
        let t2 = t1.scale(2.0);
        let s1 = static_trajectory(&t1).unwrap();
        let s2 = static_trajectory(&t2).unwrap();
        match concatenate(&s1, &s2) {
            Err(Error::EndpointMismatch { gap }) => {
                assert!((gap - t1.mass()).abs() < 1e-9, "gap is M(T2 - T1)")
            }
            other => panic!("expected endpoint mismatch, got {other:?}"),
        }
    }

    #[test]
    fn reverse_swaps_endpoints_and_is_involutive() {
        let t = unit_loop(2);
        let s = cone(&t, &pt(&[0.2, 0.4])).unwrap();
        let r = reverse(&s);
        let (minus, plus) = r.endpoints().unwrap();
        assert!(minus.is_zero());
        assert!(plus.chains_equal(&t));
        let rr = reverse(&r);
        assert!(rr.inner().chains_equal(s.inner()), "reversal is an involution");
        assert!((r.variation() - s.variation()).abs() <= 1e-12);
        // Reversing a static prism re-triangulates each time-square along
        // the other diagonal: equal as currents, not simplex by simplex.
        let st = static_trajectory(&t).unwrap();
        assert!(current_gap(reverse(&st).inner(), st.inner()).unwrap() <= 1e-12);
    }

    #[test]
    fn reverse_preserves_variation_and_linfty_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..20 {
            let s = random_trajectory(&mut rng, 2);
            let r = reverse(&s);
            assert!((r.variation() - s.variation()).abs() <= 1e-12 * s.variation().max(1.0));
            let (l, _) = s.linfty().unwrap();
            let (lr, _) = r.linfty().unwrap();
            assert!((l - lr).abs() <= 1e-9 * l.max(1.0));
        }
    }

    #[test]
    fn identity_reparameterization_is_identity() {
        let t = unit_loop(2);
        let s = cone(&t, &pt(&[0.1, 0.7])).unwrap();
        let r = s.reparameterize(&PiecewiseLinearMap::identity()).unwrap();
        assert!(r.inner().chains_equal(s.inner()));
    }

    #[test]
    fn reparameterization_preserves_variation_and_profile() {
        // 8-piece piecewise-linear approximation of t^2.
        let knots: Vec<(f64, f64)> = (0..=8)
            .map(|i| {
                let t = i as f64 / 8.0;
                (t, if i == 8 { 1.0 } else { t * t })
            })
            .collect();
        let map = PiecewiseLinearMap::new(knots).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for _ in 0..10 {
            let s = random_trajectory(&mut rng, 2);
            let r = s.reparameterize(&map).unwrap();
            assert!(
                (r.variation() - s.variation()).abs() <= 1e-9 * s.variation().max(1.0),
                "variation is rate-independent"
            );
            assert_eq!(r.is_trajectory(), s.is_trajectory());
            // Slice correspondence (a_* S)(a(t)) = S(t) at generic t.
            for t in [0.23, 0.61] {
                let lhs = r.slice(map.eval(t)).unwrap().chain;
                let rhs = s.slice(t).unwrap().chain;
                assert!(current_gap(&lhs, &rhs).unwrap() <= 1e-9);
            }
            let (l, _) = s.linfty().unwrap();
            let (lr, _) = r.linfty().unwrap();
            assert!((l - lr).abs() <= 1e-6 * l.max(1.0), "{l} vs {lr}");
        }
    }

    #[test]
    fn reparameterization_rejects_non_monotone_maps() {
        assert!(PiecewiseLinearMap::new(vec![(0.0, 0.0), (0.5, 0.8), (0.6, 0.4), (1.0, 1.0)])
            .is_err());
        assert!(PiecewiseLinearMap::new(vec![(0.0, 0.1), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn normalize_speed_reallocates_time_by_variation() {
        // Two stages with variation split roughly 2/1: after normalizing,
        // the junction must sit at the variation fraction.
        let t = unit_loop(2);
        let far = pt(&[3.0, 3.0]);
        let near = pt(&[1.0 / 3.0, 1.0 / 3.0]);
        let s1 = reverse(&cone(&t, &far).unwrap());
        let s2 = cone(&t, &near).unwrap();
        let s = concatenate(&s1, &s2).unwrap();
        let v1 = s1.variation();
        let v2 = s2.variation();
        let n = s.normalize_speed().unwrap();
        let expected_junction = v1 / (v1 + v2);
        let hit = n
            .breakpoints()
            .iter()
            .any(|&b| (b - expected_junction).abs() < 1e-9);
        assert!(hit, "junction must move to the cumulative-variation split");
        assert!((n.variation() - s.variation()).abs() <= 1e-9 * s.variation());
        let report = n.report().unwrap();
        assert!(report.lip <= n.variation() * (1.0 + 1e-6));
    }

    #[test]
    fn normalize_speed_collapses_static_stages() {
        let t = unit_loop(2);
        let s = concatenate(
            &static_trajectory(&t).unwrap(),
            &cone(&t, &pt(&[0.5, 0.5])).unwrap(),
        )
        .unwrap();
        let n = s.normalize_speed().unwrap();
        assert!((n.variation() - s.variation()).abs() <= 1e-9 * s.variation());
        let report = n.report().unwrap();
        assert!(report.lip <= n.variation() * (1.0 + 1e-6));
        // The zero-variation half contributes nothing after normalization.
        let (minus, _) = n.endpoints().unwrap();
        assert!(minus.chains_equal(&t));
    }

    #[test]
    fn normalize_speed_keeps_zero_variation_chains() {
        let t = unit_loop(2);
        let s = static_trajectory(&t).unwrap();
        let n = s.normalize_speed().unwrap();
        assert!(n.inner().chains_equal(s.inner()));
    }

    #[test]
    fn slice_at_breakpoint_averages_one_sided_limits() {
        let t = unit_loop(2);
        let s1 = static_trajectory(&t).unwrap();
        let s2 = cone(&t, &pt(&[0.5, 0.5])).unwrap();
        let s = concatenate(&s1, &s2).unwrap();
        let result = s.slice(0.5).unwrap();
        assert!(result.at_breakpoint);
        let lower = s.slice_lower(0.5).unwrap();
        let upper = s.slice_upper(0.5).unwrap();
        let avg = lower.add(&upper).unwrap().scale(0.5);
        assert!(result.chain.chains_equal(&avg));
        assert!(lower.approx_eq(&upper, 1e-9), "junction slices agree here");
    }

    #[test]
    fn boundary_formula_at_generic_times() {
        // On a non-trajectory (prism over a non-cycle), the slice of the
        // boundary is minus the boundary of the slice.
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..20 {
            let t = random_chain(&mut rng, 1, 2, 3);
            let s = static_trajectory(&t).unwrap();
            let bd = SpaceTimeChain::new(s.inner().boundary().unwrap()).unwrap();
            for tau in [0.37, 0.81] {
                let lhs = bd.slice(tau).unwrap().chain;
                let rhs = s.slice(tau).unwrap().chain.boundary().unwrap().neg();
                assert!(current_gap(&lhs, &rhs).unwrap() <= 1e-9);
            }
        }
    }

    #[test]
    fn variation_is_additive_over_time_slabs() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..20 {
            let s = random_trajectory(&mut rng, 2);
            let c: f64 = rng.gen_range(0.2..0.8);
            let total = s.variation();
            let left = s.variation_on(0.0, c).unwrap();
            let right = s.variation_on(c, 1.0).unwrap();
            assert!(
                (left + right - total).abs() <= 1e-9 * total.max(1.0),
                "slab additivity"
            );
        }
    }

    #[test]
    fn mass_variation_linfty_inequalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        for _ in 0..15 {
            let s = random_trajectory(&mut rng, 2);
            let var = s.variation();
            let mass = s.mass();
            assert!(var <= mass * (1.0 + 1e-12), "Var <= M");
            let proj_mass = s.spatial_projection().unwrap().mass();
            assert!(proj_mass <= var * (1.0 + 1e-9) + 1e-12, "M(p_*S) <= Var");
            let (linfty, _) = s.linfty().unwrap();
            assert!(
                mass <= linfty + var + 1e-6 * (1.0 + mass),
                "M <= |I| Linf + Var: {mass} vs {linfty} + {var}"
            );
        }
    }

    #[test]
    fn coarea_static_is_exact() {
        let t = unit_loop(2);
        let s = static_trajectory(&t).unwrap();
        let (lhs, rhs) = s.coarea_check().unwrap();
        assert!((lhs - t.mass()).abs() <= 1e-9 * t.mass());
        assert!((rhs - t.mass()).abs() <= 1e-12 * t.mass());
    }

    #[test]
    fn coarea_agrees_on_random_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        for _ in 0..10 {
            let s = random_trajectory(&mut rng, 2);
            let (lhs, rhs) = s.coarea_check().unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-6 * rhs.max(1.0),
                "coarea mismatch: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn endpoints_reject_interior_boundary() {
        let t = chain(1, 2, &[(&[&[0.0, 0.0], &[1.0, 0.0]], 1.0)]);
        let s = static_trajectory(&t).unwrap();
        assert!(matches!(s.endpoints(), Err(Error::NotATrajectory(_))));
    }

    #[test]
    fn report_fields_are_consistent() {
        let t = unit_loop(2);
        let s = cone(&t, &pt(&[1.0 / 3.0, 1.0 / 3.0])).unwrap();
        let report = s.report().unwrap();
        assert!((report.var - 0.5).abs() < 1e-9);
        assert_eq!(report.boundary_var, 0.0, "trajectories have no interior boundary");
        assert!(report.var >= report.projection_mass - 1e-9);
        assert!((report.minus_mass - t.mass()).abs() < 1e-12);
        assert_eq!(report.plus_mass, 0.0);
        assert!(report.lip > 0.0);
    }

    #[test]
    fn json_roundtrip_keeps_spacetime_flag() {
        let t = unit_loop(2);
        let s = cone(&t, &pt(&[0.0, 0.0])).unwrap();
        let json = s.to_json();
        assert!(json.contains("\"spacetime\": true"));
        let back = SpaceTimeChain::from_json(&json).unwrap();
        assert!(back.inner().chains_equal(s.inner()));
        assert_eq!(back.is_trajectory(), s.is_trajectory());
    }

    #[test]
    fn rejects_times_outside_unit_interval() {
        let c = chain(1, 2, &[(&[&[-0.5, 0.0], &[1.0, 0.0]], 1.0)]);
        assert!(SpaceTimeChain::new(c).is_err());
    }
}
