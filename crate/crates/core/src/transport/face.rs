//! Linear programs over the primal and dual optimal faces.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{solve_ot, OtSolution};
use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, RowKind};
use crate::measure::DiscreteMeasure;

const UNIQUENESS_SEED: u64 = 0x0715_fa5e;

/// Default inflation of the optimal faces: `1e-9 (1 + |OT|)`.
pub fn default_face_tol(value: f64) -> f64 {
    1e-9 * (1.0 + value.abs())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaceOptions {
    /// Face inflation; `None` selects [`default_face_tol`].
    pub face_tol: Option<f64>,
    /// Restrict the dual face to `|phi|, |psi| <= 2 |c|_inf + 1` instead of fixing the shift.
    pub dual_box: bool,
}

impl FaceOptions {
    pub fn with_tol(face_tol: f64) -> Self {
        Self {
            face_tol: Some(face_tol),
            dual_box: false,
        }
    }
}

/// An OT instance solved once, ready for repeated face programs.
#[derive(Debug, Clone)]
pub struct OptimalFaces {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    c: CostMatrix,
    solution: OtSolution,
    tol: f64,
    dual_box: bool,
}

impl OptimalFaces {
    pub fn new(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        c: &CostMatrix,
        opts: FaceOptions,
    ) -> Result<Self> {
        let solution = solve_ot(mu, nu, c)?.require_optimal()?;
        let tol = opts
            .face_tol
            .unwrap_or_else(|| default_face_tol(solution.value));
        if !(tol >= 0.0) {
            return Err(Error::InvalidInput("face_tol must be nonnegative".into()));
        }
        Ok(Self {
            mu: mu.clone(),
            nu: nu.clone(),
            c: c.clone(),
            solution,
            tol,
            dual_box: opts.dual_box,
        })
    }

    pub fn value(&self) -> f64 {
        self.solution.value
    }

    pub fn solution(&self) -> &OtSolution {
        &self.solution
    }

    pub fn face_tol(&self) -> f64 {
        self.tol
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.c
    }

    /// `min <g, pi>` over plans with `<c, pi> <= OT + face_tol`.
    pub fn min_primal(&self, g: &DMatrix<f64>) -> Result<f64> {
        let (n, m) = (self.mu.len(), self.nu.len());
        if g.nrows() != n || g.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "direction is {}x{}, expected {n}x{m}",
                g.nrows(),
                g.ncols()
            )));
        }
        if g.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        if n == 1 || m == 1 {
            // Only one coupling exists.
            return Ok(self.solution.plan.pair(g));
        }
        let idx = |i: usize, j: usize| i * m + j;
        let mut lp = LinearProgram::minimize((0..n * m).map(|k| g[(k / m, k % m)]).collect());
        for i in 0..n {
            let row: Vec<(usize, f64)> = (0..m).map(|j| (idx(i, j), 1.0)).collect();
            lp.add_sparse_row(&row, RowKind::Eq, self.mu.weights()[i]);
        }
        // The last column constraint is implied by the others.
        for j in 0..m - 1 {
            let row: Vec<(usize, f64)> = (0..n).map(|i| (idx(i, j), 1.0)).collect();
            lp.add_sparse_row(&row, RowKind::Eq, self.nu.weights()[j]);
        }
        lp.add_row(
            (0..n * m).map(|k| self.c.get(k / m, k % m)).collect(),
            RowKind::Le,
            self.solution.value + self.tol,
        );
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.value),
            s => Err(Error::Numerical(format!("primal face program {s:?}"))),
        }
    }

    /// `max gphi . phi + gpsi . psi` over dual pairs with value `>= OT - face_tol`.
    pub fn max_dual(&self, gphi: &[f64], gpsi: &[f64]) -> Result<f64> {
        let (n, m) = (self.mu.len(), self.nu.len());
        if gphi.len() != n || gpsi.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "dual direction lengths ({}, {}), expected ({n}, {m})",
                gphi.len(),
                gpsi.len()
            )));
        }
        if gphi.iter().chain(gpsi).all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        if self.dual_box {
            return self.max_dual_boxed(gphi, gpsi);
        }
        let imbalance = gphi.iter().sum::<f64>() - gpsi.iter().sum::<f64>();
        let scale: f64 = gphi.iter().chain(gpsi).map(|v| v.abs()).sum();
        if imbalance.abs() > 1e-8 * (1.0 + scale) {
            return Err(Error::DualFaceUnbounded);
        }
        if n == 1 || m == 1 {
            // The face is a single shift class.
            return Ok(self.point_eval(gphi, gpsi));
        }
        // Variables: phi_1..phi_{n-1}, psi_0..psi_{m-1}; phi_0 = 0 fixes the shift.
        let nv = n - 1 + m;
        let phi_var = |i: usize| if i == 0 { None } else { Some(i - 1) };
        let psi_var = |j: usize| n - 1 + j;
        let mut obj = vec![0.0; nv];
        for i in 1..n {
            obj[i - 1] = gphi[i];
        }
        for j in 0..m {
            obj[psi_var(j)] = gpsi[j];
        }
        let mut lp = LinearProgram::maximize(obj);
        lp.set_all_free();
        for i in 0..n {
            for j in 0..m {
                let mut row = vec![(psi_var(j), 1.0)];
                if let Some(v) = phi_var(i) {
                    row.push((v, 1.0));
                }
                lp.add_sparse_row(&row, RowKind::Le, self.c.get(i, j));
            }
        }
        let mut value_row = vec![0.0; nv];
        for i in 1..n {
            value_row[i - 1] = self.mu.weights()[i];
        }
        for j in 0..m {
            value_row[psi_var(j)] = self.nu.weights()[j];
        }
        lp.add_row(value_row, RowKind::Ge, self.solution.value - self.tol);
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.value),
            LpStatus::Unbounded => Err(Error::DualFaceUnbounded),
            LpStatus::Infeasible => Err(Error::Numerical("dual face program infeasible".into())),
        }
    }

    fn max_dual_boxed(&self, gphi: &[f64], gpsi: &[f64]) -> Result<f64> {
        let (n, m) = (self.mu.len(), self.nu.len());
        let bound = 2.0 * self.c.sup_norm() + 1.0;
        let obj: Vec<f64> = gphi.iter().chain(gpsi).copied().collect();
        let mut lp = LinearProgram::maximize(obj);
        lp.set_all_free();
        for i in 0..n {
            for j in 0..m {
                lp.add_sparse_row(&[(i, 1.0), (n + j, 1.0)], RowKind::Le, self.c.get(i, j));
            }
        }
        for k in 0..n + m {
            lp.add_sparse_row(&[(k, 1.0)], RowKind::Le, bound);
            lp.add_sparse_row(&[(k, 1.0)], RowKind::Ge, -bound);
        }
        let w: Vec<f64> = self
            .mu
            .weights()
            .iter()
            .chain(self.nu.weights())
            .copied()
            .collect();
        lp.add_row(w, RowKind::Ge, self.solution.value - self.tol);
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.value),
            s => Err(Error::Numerical(format!("boxed dual face program {s:?}"))),
        }
    }

    /// `gphi . phi* + gpsi . psi*` at the solver's potentials.
    pub fn point_eval(&self, gphi: &[f64], gpsi: &[f64]) -> f64 {
        let d = &self.solution.dual;
        gphi.iter().zip(&d.phi).map(|(a, b)| a * b).sum::<f64>()
            + gpsi.iter().zip(&d.psi).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Random-direction test for a unique optimal plan.
    pub fn plan_uniqueness<R: Rng + ?Sized>(
        &self,
        trials: usize,
        eps: f64,
        rng: &mut R,
    ) -> Result<Uniqueness> {
        let (n, m) = (self.mu.len(), self.nu.len());
        for _ in 0..trials {
            let g = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let face_min = self.min_primal(&g)?;
            if (face_min - self.solution.plan.pair(&g)).abs() > eps {
                return Ok(Uniqueness {
                    unique: false,
                    witness: Some(g),
                });
            }
        }
        Ok(Uniqueness {
            unique: true,
            witness: None,
        })
    }

    /// Heuristic check that the potentials are unique up to a constant shift.
    ///
    /// Probes the dual face along `trials` random directions that annihilate
    /// shifts and compares with the solver's potentials.
    pub fn potentials_unique<R: Rng + ?Sized>(
        &self,
        trials: usize,
        tol: f64,
        rng: &mut R,
    ) -> Result<bool> {
        for _ in 0..trials {
            let gphi = centered_normal(self.mu.len(), rng);
            let gpsi = centered_normal(self.nu.len(), rng);
            if self.max_dual(&gphi, &gpsi)? - self.point_eval(&gphi, &gpsi) > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn centered_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

/// Outcome of [`is_plan_unique`].
#[derive(Debug, Clone)]
pub struct Uniqueness {
    pub unique: bool,
    /// Direction on which the face minimum differs from the solver's plan.
    pub witness: Option<DMatrix<f64>>,
}

pub fn min_over_primal_face(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    g: &DMatrix<f64>,
    face_tol: Option<f64>,
) -> Result<f64> {
    OptimalFaces::new(
        mu,
        nu,
        c,
        FaceOptions {
            face_tol,
            dual_box: false,
        },
    )?
    .min_primal(g)
}

pub fn max_over_dual_face(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    gphi: &[f64],
    gpsi: &[f64],
    face_tol: Option<f64>,
) -> Result<f64> {
    OptimalFaces::new(
        mu,
        nu,
        c,
        FaceOptions {
            face_tol,
            dual_box: false,
        },
    )?
    .max_dual(gphi, gpsi)
}

/// Seeded version of [`OptimalFaces::plan_uniqueness`] with default faces.
pub fn is_plan_unique(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    trials: usize,
    eps: f64,
) -> Result<Uniqueness> {
    let faces = OptimalFaces::new(mu, nu, c, FaceOptions::default())?;
    faces.plan_uniqueness(trials, eps, &mut ChaCha8Rng::seed_from_u64(UNIQUENESS_SEED))
}

/// Seeded version of [`OptimalFaces::potentials_unique`] with 16 probes at tolerance 1e-6.
pub fn potentials_unique(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
) -> Result<bool> {
    let faces = OptimalFaces::new(mu, nu, c, FaceOptions::default())?;
    faces.potentials_unique(16, 1e-6, &mut ChaCha8Rng::seed_from_u64(UNIQUENESS_SEED))
}
