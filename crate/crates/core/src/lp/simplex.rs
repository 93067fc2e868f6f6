//! Two-phase revised simplex for bounded variables with an explicit dense
//! basis inverse.
//!
//! Every row `lo <= a.x <= hi` gets a logical column `s` with
//! `a.x - s = 0` and bounds `[lo, hi]`, so the working system has a zero
//! right-hand side and only column bounds. Rows whose logical cannot absorb
//! the starting point get an artificial column; phase one drives those to
//! zero. Pricing is Dantzig's rule until a run of degenerate pivots trips
//! the switch to Bland's rule for the rest of the solve.

use super::{LinearProgram, LpSolution, LpSolver, LpStatus, INF};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseSimplex {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Scaled tolerance on the final row and bound residuals.
    pub residual_tol: f64,
    pub refactor_every: usize,
    pub degenerate_limit: usize,
    pub max_iterations: Option<usize>,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            pivot_tol: 1e-9,
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            residual_tol: 1e-7,
            refactor_every: 64,
            degenerate_limit: 50,
            max_iterations: None,
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        lp.validate()?;
        let mut w = Work::new(self, lp);
        w.refactor()?;

        if !w.artificials.is_empty() {
            let cost: Vec<f64> = (0..w.ncols())
                .map(|j| if j >= w.first_artificial { 1.0 } else { 0.0 })
                .collect();
            w.optimize(&cost)?;
            let infeas: f64 = (w.first_artificial..w.ncols()).map(|j| w.x[j]).sum();
            let scale = lp
                .rows
                .iter()
                .flat_map(|r| [r.lo, r.hi])
                .filter(|v| v.is_finite())
                .fold(1.0f64, |a, v| a.max(v.abs()));
            if infeas > self.residual_tol * scale {
                return Ok(w.finish(LpStatus::Infeasible, lp));
            }
            w.retire_artificials()?;
        }

        let mut cost = lp.objective.clone();
        cost.resize(w.ncols(), 0.0);
        let status = w.optimize(&cost)?;
        if status == LpStatus::Unbounded {
            return Ok(w.finish(LpStatus::Unbounded, lp));
        }
        w.refactor()?;
        let violation = lp.max_violation(&w.x[..w.n]);
        let scale = 1.0 + w.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if violation > self.residual_tol * scale {
            return Err(Error::Numerical(format!(
                "simplex residual {violation:.3e} exceeds tolerance"
            )));
        }
        w.cost = cost;
        Ok(w.finish(LpStatus::Optimal, lp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic column held at zero.
    Zero,
}

struct Work<'a> {
    opts: &'a DenseSimplex,
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    first_artificial: usize,
    artificials: Vec<usize>,
    cost: Vec<f64>,
    since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
    iterations: usize,
}

impl<'a> Work<'a> {
    fn new(opts: &'a DenseSimplex, lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((r, a));
                }
            }
        }
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut status = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (v, s) = initial_nonbasic(lower[j], upper[j]);
            x.push(v);
            status.push(s);
        }
        let mut activity = vec![0.0; m];
        for (j, col) in cols.iter().enumerate() {
            for &(r, a) in col {
                activity[r] += a * x[j];
            }
        }
        let mut basis = vec![0; m];
        let mut pending = Vec::new();
        for (r, row) in lp.rows.iter().enumerate() {
            let j = cols.len();
            cols.push(vec![(r, -1.0)]);
            lower.push(row.lo);
            upper.push(row.hi);
            let v = activity[r];
            if v >= row.lo - opts.feas_tol && v <= row.hi + opts.feas_tol {
                x.push(v);
                status.push(Status::Basic);
                basis[r] = j;
            } else {
                let (b, s) = if v < row.lo {
                    (row.lo, Status::Lower)
                } else {
                    (row.hi, Status::Upper)
                };
                x.push(b);
                status.push(s);
                pending.push((r, b - v));
            }
        }
        let first_artificial = cols.len();
        let mut artificials = Vec::new();
        for (r, gap) in pending {
            let j = cols.len();
            cols.push(vec![(r, gap.signum())]);
            lower.push(0.0);
            upper.push(INF);
            x.push(gap.abs());
            status.push(Status::Basic);
            basis[r] = j;
            artificials.push(j);
        }
        Work {
            opts,
            n,
            m,
            cols,
            lower,
            upper,
            x,
            status,
            basis,
            binv: Vec::new(),
            first_artificial,
            artificials,
            cost: Vec::new(),
            since_refactor: 0,
            degenerate_run: 0,
            bland: false,
            iterations: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    /// Recomputes the basis inverse by Gauss-Jordan elimination with
    /// partial pivoting and the basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&i, &k| a[i * m + c].abs().total_cmp(&a[k * m + c].abs()))
                .unwrap();
            if a[p * m + c].abs() < 1e-11 {
                return Err(Error::Numerical("basis matrix is singular".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = 1.0 / a[c * m + c];
            for k in 0..m {
                a[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = a[i * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[c * m + k];
                        inv[i * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;

        let mut rhs = vec![0.0; m];
        for j in 0..self.ncols() {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                for &(r, v) in &self.cols[j] {
                    rhs[r] -= v * self.x[j];
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            self.x[self.basis[k]] = row.iter().zip(&rhs).map(|(b, v)| b * v).sum();
        }
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr += c * self.binv[k * m + r];
                }
            }
        }
        y
    }

    fn column_ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for &(r, v) in &self.cols[j] {
            for (k, o) in out.iter_mut().enumerate() {
                *o += self.binv[k * m + r] * v;
            }
        }
        out
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, cost: &[f64], y: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.opt_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols() {
            let st = self.status[j];
            if st == Status::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = cost[j] - self.cols[j].iter().map(|&(r, v)| y[r] * v).sum::<f64>();
            let dir = match st {
                Status::Lower if d < -tol => 1.0,
                Status::Upper if d > tol => -1.0,
                Status::Zero if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|b| d.abs() > b.2) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn optimize(&mut self, cost: &[f64]) -> Result<LpStatus> {
        let limit = self
            .opts
            .max_iterations
            .unwrap_or(100 * (self.m + self.ncols()) + 10_000);
        loop {
            if self.iterations >= limit {
                return Err(Error::Numerical(format!(
                    "simplex hit the iteration limit ({limit})"
                )));
            }
            let y = self.duals(cost);
            let Some((q, dir)) = self.price(cost, &y) else {
                return Ok(LpStatus::Optimal);
            };
            self.iterations += 1;
            let alpha = self.column_ftran(q);

            // ratio test: basic values move by -dir * theta * alpha
            let ptol = self.opts.pivot_tol;
            let mut ratios = Vec::new();
            for (k, &a) in alpha.iter().enumerate() {
                let rate = dir * a;
                let j = self.basis[k];
                let room = if rate > ptol {
                    self.x[j] - self.lower[j]
                } else if rate < -ptol {
                    self.upper[j] - self.x[j]
                } else {
                    continue;
                };
                if room < INF {
                    ratios.push((k, rate, room.max(0.0) / rate.abs()));
                }
            }
            let min_ratio = ratios.iter().map(|r| r.2).fold(INF, f64::min);
            let leave = ratios
                .into_iter()
                .filter(|r| r.2 <= min_ratio + ptol)
                .reduce(|best, r| {
                    let wins = if self.bland {
                        self.basis[r.0] < self.basis[best.0]
                    } else {
                        r.1.abs() > best.1.abs()
                    };
                    if wins {
                        r
                    } else {
                        best
                    }
                });
            let flip = self.upper[q] - self.lower[q];
            let (theta, leave) = match leave {
                Some((k, rate, ratio)) if ratio < flip => (ratio, Some((k, rate))),
                _ => (flip, None),
            };
            if theta == INF {
                return Ok(LpStatus::Unbounded);
            }

            if theta <= ptol {
                self.degenerate_run += 1;
                if self.degenerate_run > self.opts.degenerate_limit {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }

            self.x[q] += dir * theta;
            for (k, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    self.x[self.basis[k]] -= dir * theta * a;
                }
            }

            match leave {
                None => {
                    // bound flip
                    self.status[q] = if dir > 0.0 {
                        Status::Upper
                    } else {
                        Status::Lower
                    };
                    self.x[q] = if dir > 0.0 {
                        self.upper[q]
                    } else {
                        self.lower[q]
                    };
                }
                Some((r, rate)) => {
                    let out = self.basis[r];
                    let (v, s) = if rate > 0.0 {
                        (self.lower[out], Status::Lower)
                    } else {
                        (self.upper[out], Status::Upper)
                    };
                    self.x[out] = v;
                    self.status[out] = s;
                    self.status[q] = Status::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &alpha);
                }
            }
        }
    }

    /// Product-form update of the inverse after column `alpha` enters at row `r`.
    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let d = 1.0 / alpha[r];
        for k in 0..m {
            self.binv[r * m + k] *= d;
        }
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                &mut tail[(i - r - 1) * m..(i - r) * m]
            };
            for (v, p) in row.iter_mut().zip(prow.iter()) {
                *v -= a * p;
            }
        }
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            // a failed refresh keeps the updated inverse; the final
            // residual check catches any resulting drift
            let _ = self.refactor();
        }
    }

    /// Pins artificials at zero and pivots basic ones out where possible.
    /// Those left basic sit on redundant rows and stay fixed at zero.
    fn retire_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for j in self.first_artificial..self.ncols() {
            self.upper[j] = 0.0;
            if self.status[j] != Status::Basic {
                self.x[j] = 0.0;
                self.status[j] = Status::Lower;
                continue;
            }
            let r = self.basis.iter().position(|&b| b == j).unwrap();
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let entering = (0..self.first_artificial).find(|&c| {
                self.status[c] != Status::Basic
                    && self.cols[c]
                        .iter()
                        .map(|&(i, v)| row[i] * v)
                        .sum::<f64>()
                        .abs()
                        > 1e-7
            });
            if let Some(c) = entering {
                let alpha = self.column_ftran(c);
                self.status[c] = Status::Basic;
                self.basis[r] = c;
                self.status[j] = Status::Lower;
                self.x[j] = 0.0;
                self.pivot(r, &alpha);
            }
        }
        self.refactor()
    }

    fn finish(self, status: LpStatus, lp: &LinearProgram) -> LpSolution {
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let row_duals = if status == LpStatus::Optimal {
            self.duals(&self.cost)
        } else {
            vec![0.0; self.m]
        };
        LpSolution {
            status,
            objective: if status == LpStatus::Optimal {
                lp.objective_value(&x)
            } else {
                f64::NAN
            },
            x,
            row_duals,
            iterations: self.iterations,
        }
    }
}

fn initial_nonbasic(lo: f64, hi: f64) -> (f64, Status) {
    if lo.is_finite() {
        (lo, Status::Lower)
    } else if hi.is_finite() {
        (hi, Status::Upper)
    } else {
        (0.0, Status::Zero)
    }
}
