//! Dense two-phase simplex for small linear programs.
//!
//! Used for the optimal-face programs, which are not transportation problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value in the caller's sense; NaN unless optimal.
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    kind: RowKind,
    rhs: f64,
}

/// `min` or `max` of `c . x` subject to linear rows; variables are nonnegative unless marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    sense: Sense,
    free: Vec<bool>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            sense,
            free: vec![false; n],
            rows: Vec::new(),
        }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn set_all_free(&mut self) {
        self.free.iter_mut().for_each(|f| *f = true);
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) {
        assert_eq!(coeffs.len(), self.objective.len(), "row length");
        self.rows.push(Row { coeffs, kind, rhs });
    }

    /// Adds a row given as `(variable, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], kind: RowKind, rhs: f64) {
        let mut coeffs = vec![0.0; self.objective.len()];
        for &(j, a) in entries {
            coeffs[j] += a;
        }
        self.add_row(coeffs, kind, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Standard::build(self).solve(self)
    }
}

/// Standard form `A x = b, x >= 0, b >= 0` with slack and artificial columns.
struct Standard {
    m: usize,
    // Column layout: structural | slack/surplus | artificial.
    n_total: usize,
    first_art: usize,
    a: Vec<f64>, // m x (n_total + 1), row-major; last column is rhs
    basis: Vec<usize>,
    orig_a: DMatrix<f64>,
    orig_b: DVector<f64>,
    cost: Vec<f64>,
    // For each original variable: (plus column, optional minus column).
    var_cols: Vec<(usize, Option<usize>)>,
    alive: Vec<bool>,
}

impl Standard {
    fn build(lp: &LinearProgram) -> Self {
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        let mut n_struct = 0;
        for &f in &lp.free {
            if f {
                var_cols.push((n_struct, Some(n_struct + 1)));
                n_struct += 2;
            } else {
                var_cols.push((n_struct, None));
                n_struct += 1;
            }
        }
        let m = lp.rows.len();
        let n_slack = lp.rows.iter().filter(|r| r.kind != RowKind::Eq).count();
        // Normalize signs so that every rhs is nonnegative.
        let rows: Vec<(Vec<f64>, RowKind, f64)> = lp
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    let kind = match r.kind {
                        RowKind::Le => RowKind::Ge,
                        RowKind::Ge => RowKind::Le,
                        RowKind::Eq => RowKind::Eq,
                    };
                    (r.coeffs.iter().map(|v| -v).collect(), kind, -r.rhs)
                } else {
                    (r.coeffs.clone(), r.kind, r.rhs)
                }
            })
            .collect();
        let n_art = rows.iter().filter(|r| r.1 != RowKind::Le).count();
        let first_art = n_struct + n_slack;
        let n_total = first_art + n_art;
        let width = n_total + 1;
        let mut a = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut slack = n_struct;
        let mut art = first_art;
        for (i, (coeffs, kind, rhs)) in rows.iter().enumerate() {
            let row = &mut a[i * width..(i + 1) * width];
            for (k, &v) in coeffs.iter().enumerate() {
                let (p, q) = var_cols[k];
                row[p] = v;
                if let Some(q) = q {
                    row[q] = -v;
                }
            }
            row[n_total] = *rhs;
            match kind {
                RowKind::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                RowKind::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                RowKind::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        let orig_a = DMatrix::from_fn(m, n_total, |i, j| a[i * width + j]);
        let orig_b = DVector::from_fn(m, |i, _| a[i * width + n_total]);
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n_total];
        for (k, &c) in lp.objective.iter().enumerate() {
            let (p, q) = var_cols[k];
            cost[p] = sign * c;
            if let Some(q) = q {
                cost[q] = -sign * c;
            }
        }
        Self {
            m,
            n_total,
            first_art,
            a,
            basis,
            orig_a,
            orig_b,
            cost,
            var_cols,
            alive: vec![true; m],
        }
    }

    fn width(&self) -> usize {
        self.n_total + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width() + j]
    }

    fn pivot(&mut self, r: usize, col: usize, reduced: &mut [f64]) {
        let w = self.width();
        let p = self.a[r * w + col];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r || !self.alive[i] {
                continue;
            }
            let f = self.a[i * w + col];
            if f != 0.0 {
                let row = &mut self.a[i * w..(i + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        let f = reduced[col];
        if f != 0.0 {
            for (v, pv) in reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            reduced[col] = 0.0;
        }
        self.basis[r] = col;
    }

    /// Reduced costs (and negated objective in the last slot) for cost vector `c`.
    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut red = c.to_vec();
        red.push(0.0);
        for i in 0..self.m {
            if !self.alive[i] {
                continue;
            }
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for (v, a) in red.iter_mut().zip(&self.a[i * w..(i + 1) * w]) {
                    *v -= cb * a;
                }
            }
        }
        red
    }

    /// Runs simplex iterations; returns false if unbounded.
    fn iterate(&mut self, reduced: &mut [f64], allowed: usize) -> Result<bool> {
        let cap = 50 * (self.m + self.n_total) + 1000;
        let scale = 1.0
            + reduced[..allowed]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = COST_TOL * scale;
        let mut bland = false;
        let mut streak = 0;
        for _ in 0..cap {
            let entering = if bland {
                (0..allowed).find(|&j| reduced[j] < -tol)
            } else {
                let mut best = None;
                let mut best_val = -tol;
                for (j, &v) in reduced[..allowed].iter().enumerate() {
                    if v < best_val {
                        best_val = v;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                if !self.alive[i] {
                    continue;
                }
                let aij = self.at(i, col);
                if aij > PIVOT_TOL {
                    let ratio = self.at(i, self.n_total).max(0.0) / aij;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best_ratio = best_ratio.min(ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(false);
            };
            if best_ratio <= 1e-12 {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.pivot(r, col, reduced);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let n_art = self.n_total - self.first_art;
        if n_art > 0 {
            let mut c1 = vec![0.0; self.n_total];
            c1[self.first_art..].iter_mut().for_each(|v| *v = 1.0);
            let mut red = self.reduced_costs(&c1);
            self.iterate(&mut red, self.n_total)?;
            let infeas: f64 = (0..self.m)
                .filter(|&i| self.alive[i] && self.basis[i] >= self.first_art)
                .map(|i| self.at(i, self.n_total))
                .sum();
            let bmax = self.orig_b.amax();
            if infeas > 1e-9 * (1.0 + bmax) {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    value: f64::NAN,
                    x: Vec::new(),
                });
            }
            // Drive zero-level artificials out of the basis or drop redundant rows.
            for i in 0..self.m {
                if self.basis[i] < self.first_art {
                    continue;
                }
                let col = (0..self.first_art)
                    .filter(|&j| self.at(i, j).abs() > PIVOT_TOL)
                    .max_by(|&p, &q| self.at(i, p).abs().total_cmp(&self.at(i, q).abs()));
                match col {
                    Some(j) => self.pivot(i, j, &mut red),
                    None => self.alive[i] = false,
                }
            }
        }
        let cost = self.cost.clone();
        let mut red = self.reduced_costs(&cost);
        if !self.iterate(&mut red, self.first_art)? {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                value: f64::NAN,
                x: Vec::new(),
            });
        }
        let xs = self.refined_solution();
        let x: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(p, q)| xs[p] - q.map_or(0.0, |q| xs[q]))
            .collect();
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            value,
            x,
        })
    }

    /// Basic solution recomputed from the original data for accuracy.
    fn refined_solution(&self) -> Vec<f64> {
        let rows: Vec<usize> = (0..self.m).filter(|&i| self.alive[i]).collect();
        let k = rows.len();
        let mut xs = vec![0.0; self.n_total];
        let tableau: Vec<(usize, f64)> = rows
            .iter()
            .map(|&i| (self.basis[i], self.at(i, self.n_total).max(0.0)))
            .collect();
        let b = DMatrix::from_fn(k, k, |r, c| self.orig_a[(rows[r], tableau[c].0)]);
        let rhs = DVector::from_fn(k, |r, _| self.orig_b[rows[r]]);
        let refined = b.lu().solve(&rhs).filter(|sol| {
            sol.iter()
                .zip(&tableau)
                .all(|(s, t)| s.is_finite() && (s - t.1).abs() <= 1e-6 * (1.0 + t.1.abs()))
        });
        for (c, &(col, val)) in tableau.iter().enumerate() {
            xs[col] = refined.as_ref().map_or(val, |s| s[c].max(0.0));
        }
        xs
    }
}
