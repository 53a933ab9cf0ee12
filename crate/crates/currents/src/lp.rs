//! Dense two-phase simplex for the small linear programs behind flat norms
//! and optimal transport.
//!
//! Problems are given in equality standard form: minimize `c . x` subject to
//! `A x = b`, `x >= 0`. Phase 1 minimizes the total artificial mass; a
//! strictly positive phase-1 optimum is returned as an infeasibility
//! certificate rather than an error, since "this cycle has no filling" is an
//! answer, not a failure. Pricing is Dantzig's rule, switching to Bland's
//! rule after a run of degenerate pivots so that cycling cannot occur.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, LP_TOL};

/// `minimize objective . x  subject to  constraints x = rhs, x >= 0`.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>, constraints: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let n = objective.len();
        if constraints.len() != rhs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows vs {} right-hand sides",
                constraints.len(),
                rhs.len()
            )));
        }
        if constraints.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(
                "constraint row length differs from objective length".into(),
            ));
        }
        let finite = objective.iter().all(|x| x.is_finite())
            && rhs.iter().all(|x| x.is_finite())
            && constraints.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("linear program data".into()));
        }
        Ok(LpProblem {
            objective,
            constraints,
            rhs,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }
}

/// Counters describing a finished solve.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LpStats {
    pub rows: usize,
    pub cols: usize,
    pub phase1_pivots: usize,
    pub phase2_pivots: usize,
    pub bland_activated: bool,
}

/// A primal optimal point.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub stats: LpStats,
}

/// Either an optimum or a proof that no feasible point exists: the
/// certificate is the (strictly positive) minimal total artificial mass.
#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible { certificate: f64, stats: LpStats },
}

/// The seam for swapping in another solver; everything downstream calls
/// through this trait.
pub trait LpSolver {
    fn solve(&self, problem: &LpProblem) -> Result<LpOutcome>;
}

/// The built-in dense tableau solver.
#[derive(Clone, Debug)]
pub struct SimplexSolver {
    /// Feasibility and pricing tolerance.
    pub tol: f64,
}

impl Default for SimplexSolver {
    fn default() -> Self {
        SimplexSolver { tol: LP_TOL }
    }
}

impl LpSolver for SimplexSolver {
    fn solve(&self, problem: &LpProblem) -> Result<LpOutcome> {
        Tableau::new(problem, self.tol).solve(problem)
    }
}

struct Tableau {
    /// m rows of n original + m artificial columns, rhs last.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; entry `ncols` holds minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    n: usize,
    m: usize,
    tol: f64,
    stats: LpStats,
}

impl Tableau {
    fn new(problem: &LpProblem, tol: f64) -> Tableau {
        let n = problem.num_vars();
        let m = problem.num_constraints();
        let ncols = n + m;
        let mut rows = Vec::with_capacity(m);
        for (i, row) in problem.constraints.iter().enumerate() {
            let flip = if problem.rhs[i] < 0.0 { -1.0 } else { 1.0 };
            let mut r = Vec::with_capacity(ncols + 1);
            r.extend(row.iter().map(|&a| flip * a));
            r.extend((0..m).map(|j| if j == i { 1.0 } else { 0.0 }));
            r.push(flip * problem.rhs[i]);
            rows.push(r);
        }
        let basis = (n..n + m).collect();
        // Phase-1 reduced costs: cost 1 on each artificial, all basic, so
        // the row is minus the column sums over the original columns.
        let mut obj = vec![0.0; ncols + 1];
        for j in 0..n {
            obj[j] = -rows.iter().map(|r| r[j]).sum::<f64>();
        }
        obj[ncols] = -rows.iter().map(|r| r[ncols]).sum::<f64>();
        Tableau {
            rows,
            obj,
            basis,
            n,
            m,
            tol,
            stats: LpStats {
                rows: m,
                cols: n,
                ..LpStats::default()
            },
        }
    }

    fn rhs_col(&self) -> usize {
        self.n + self.m
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let ncols = self.rhs_col();
        let p = self.rows[r][c];
        for j in 0..=ncols {
            self.rows[r][j] /= p;
        }
        for i in 0..self.m {
            if i != r {
                let f = self.rows[i][c];
                if f != 0.0 {
                    for j in 0..=ncols {
                        self.rows[i][j] -= f * self.rows[r][j];
                    }
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for j in 0..=ncols {
                self.obj[j] -= f * self.rows[r][j];
            }
        }
        self.basis[r] = c;
    }

    /// Run pivots until the reduced costs over `cols` are nonnegative.
    /// Returns the number of pivots; errors on unboundedness or a blown
    /// pivot budget.
    fn optimize(&mut self, cols: usize) -> Result<usize> {
        let rhs = self.rhs_col();
        let budget = 2000 + 200 * (self.n + self.m);
        let mut pivots = 0;
        let mut degenerate_run = 0usize;
        let bland_after = 2 * (self.n + self.m) + 10;
        loop {
            let bland = degenerate_run > bland_after;
            if bland && !self.stats.bland_activated {
                self.stats.bland_activated = true;
            }
            // Entering column.
            let mut enter = None;
            if bland {
                for j in 0..cols {
                    if self.obj[j] < -self.tol {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -self.tol;
                for j in 0..cols {
                    if self.obj[j] < best {
                        best = self.obj[j];
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else {
                return Ok(pivots);
            };
            // Ratio test; under Bland break ties by smallest basis index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.rows[i][c];
                if a > self.tol {
                    let ratio = self.rows[i][rhs] / a;
                    let better = match leave {
                        None => true,
                        Some((bi, br)) => {
                            ratio < br - self.tol
                                || (ratio < br + self.tol
                                    && if bland {
                                        self.basis[i] < self.basis[bi]
                                    } else {
                                        i < bi
                                    })
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Solver(
                    "linear program is unbounded below".into(),
                ));
            };
            if ratio.abs() <= self.tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
            pivots += 1;
            if pivots > budget {
                return Err(Error::Solver(format!(
                    "simplex pivot budget exhausted after {pivots} pivots"
                )));
            }
        }
    }

    fn solve(mut self, problem: &LpProblem) -> Result<LpOutcome> {
        let rhs = self.rhs_col();
        // Phase 1 over all columns (artificials included).
        self.stats.phase1_pivots = self.optimize(self.n + self.m)?;
        let phase1_value = -self.obj[rhs];
        if phase1_value > self.tol {
            return Ok(LpOutcome::Infeasible {
                certificate: phase1_value,
                stats: self.stats,
            });
        }
        // Rebuild reduced costs for the true objective; artificials are
        // simply never priced again (they sit at level zero if still basic).
        let mut obj = vec![0.0; rhs + 1];
        for j in 0..self.n {
            obj[j] = problem.objective[j];
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                let cb = problem.objective[b];
                if cb != 0.0 {
                    for j in 0..=rhs {
                        obj[j] -= cb * self.rows[i][j];
                    }
                }
            }
        }
        self.obj = obj;
        self.stats.phase2_pivots = self.optimize(self.n)?;
        let mut x = vec![0.0; self.n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.rows[i][rhs].max(0.0);
            }
        }
        let objective_value = problem
            .objective
            .iter()
            .zip(&x)
            .map(|(c, v)| c * v)
            .sum();
        Ok(LpOutcome::Optimal(LpSolution {
            x,
            objective_value,
            stats: self.stats,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(ob: &[f64], a: &[&[f64]], b: &[f64]) -> Result<LpOutcome> {
        let problem = LpProblem::new(
            ob.to_vec(),
            a.iter().map(|r| r.to_vec()).collect(),
            b.to_vec(),
        )
        .unwrap();
        SimplexSolver::default().solve(&problem)
    }

    fn optimal(outcome: Result<LpOutcome>) -> LpSolution {
        match outcome.unwrap() {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible { certificate, .. } => {
                panic!("expected optimum, got infeasible ({certificate})")
            }
        }
    }

    #[test]
    fn minimizes_over_a_simplex_face() {
        // min x0 subject to x0 + x1 = 1.
        let s = optimal(solve(&[1.0, 0.0], &[&[1.0, 1.0]], &[1.0]));
        assert!(s.objective_value.abs() < 1e-9);
        assert!((s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn picks_cheaper_route() {
        // min 2a + 3b subject to a + b = 1.
        let s = optimal(solve(&[2.0, 3.0], &[&[1.0, 1.0]], &[1.0]));
        assert!((s.objective_value - 2.0).abs() < 1e-9);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn handles_negative_rhs_rows() {
        // -x0 = -2 is x0 = 2 after the sign flip.
        let s = optimal(solve(&[1.0], &[&[-1.0]], &[-2.0]));
        assert!((s.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn reports_infeasibility_with_certificate() {
        // x0 + x1 = -1 has no nonnegative solution; the artificial mass
        // needed is 1.
        match solve(&[1.0, 1.0], &[&[1.0, 1.0]], &[-1.0]).unwrap() {
            LpOutcome::Infeasible { certificate, .. } => {
                assert!((certificate - 1.0).abs() < 1e-9)
            }
            LpOutcome::Optimal(_) => panic!("expected infeasible"),
        }
    }

    #[test]
    fn detects_unbounded_problems() {
        // min -x0 subject to x0 - x1 = 0 runs off to infinity.
        let out = solve(&[-1.0, 0.0], &[&[1.0, -1.0]], &[0.0]);
        assert!(matches!(out, Err(Error::Solver(_))));
    }

    #[test]
    fn beale_cycling_example_terminates_at_optimum() {
        // The classical degenerate example on which naive Dantzig pricing
        // can cycle, in equality form with slack columns. Optimal value
        // -0.05 at x = (0.04, 0, 1, 0), slacks (0.03, 0, 0) — verified
        // against an independent solver.
        let s = optimal(solve(
            &[-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0],
            &[
                &[0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
                &[0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
                &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            &[0.0, 0.0, 1.0],
        ));
        assert!((s.objective_value + 0.05).abs() < 1e-9, "{}", s.objective_value);
        assert!((s.x[0] - 0.04).abs() < 1e-9);
        assert!((s.x[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // Duplicate constraint leaves an artificial basic at level zero.
        let s = optimal(solve(
            &[1.0, 2.0],
            &[&[1.0, 1.0], &[1.0, 1.0]],
            &[1.0, 1.0],
        ));
        assert!((s.objective_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_feasible_problems_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let n = rng.gen_range(3..10);
            let m = rng.gen_range(1..n);
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let b: Vec<f64> = a
                .iter()
                .map(|row| row.iter().zip(&x0).map(|(r, x)| r * x).sum())
                .collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let problem = LpProblem::new(c.clone(), a.clone(), b.clone()).unwrap();
            let s = optimal(SimplexSolver::default().solve(&problem));
            let upper: f64 = c.iter().zip(&x0).map(|(ci, xi)| ci * xi).sum();
            assert!(s.objective_value <= upper + 1e-7, "x0 was feasible");
            assert!(s.objective_value >= -1e-7, "objective is nonnegative");
            for (row, bi) in a.iter().zip(&b) {
                let lhs: f64 = row.iter().zip(&s.x).map(|(r, x)| r * x).sum();
                assert!((lhs - bi).abs() <= 1e-6 * (1.0 + bi.abs()), "A x = b violated");
            }
            assert!(s.x.iter().all(|&x| x >= -1e-9));
        }
    }

    #[test]
    fn rejects_malformed_problems() {
        assert!(LpProblem::new(vec![1.0], vec![vec![1.0, 2.0]], vec![1.0]).is_err());
        assert!(LpProblem::new(vec![1.0], vec![vec![1.0]], vec![1.0, 2.0]).is_err());
        assert!(LpProblem::new(vec![f64::NAN], vec![vec![1.0]], vec![1.0]).is_err());
    }
}
