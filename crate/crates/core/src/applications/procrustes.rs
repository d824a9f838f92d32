//! Quadratic OT minimized over rotations of the second measure.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grids::RotationGrid;
use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Point};
use crate::transport::solve_ot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refine {
    GridOnly,
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesResult {
    pub value: f64,
    /// Minimizing `tau` in `||x - tau y||^2`.
    #[serde(with = "crate::serde_rows")]
    pub rotation: DMatrix<f64>,
    pub grid_values: Vec<f64>,
    pub grid_index: usize,
    /// Alternating steps taken after the grid search.
    pub iterations: usize,
}

impl ProcrustesResult {
    /// The rotation carrying the first measure onto the second, `tau^T`.
    pub fn alignment(&self) -> DMatrix<f64> {
        self.rotation.transpose()
    }
}

/// Cost matrix `||x_i - tau y_j||^2`.
pub fn rotated_cost(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tau: &DMatrix<f64>,
) -> Result<CostMatrix> {
    let ty: Vec<Point> = nu.support().iter().map(|y| apply(tau, y)).collect();
    CostMatrix::from_supports(mu.support(), &ty, |x, y| x.dist2(y))
}

fn apply(r: &DMatrix<f64>, y: &Point) -> Point {
    Point::new(
        (0..r.nrows())
            .map(|i| (0..r.ncols()).map(|j| r[(i, j)] * y.0[j]).sum())
            .collect(),
    )
}

/// Rotation maximizing `<R, m>_F` over SO(d).
pub fn nearest_rotation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let d = m.nrows();
    let mut r = &u * &vt;
    if r.determinant() < 0.0 {
        // Singular values come sorted descending; flip the smallest direction.
        let mut s = DMatrix::identity(d, d);
        let k = (0..d)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .expect("nonempty");
        s[(k, k)] = -1.0;
        r = &u * s * &vt;
    }
    r
}

/// `inf_tau OT(mu, nu, ||x - tau y||^2)` over a rotation grid, optionally refined by
/// alternating between the OT plan and the weighted orthogonal Procrustes step.
pub fn procrustes_ot(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    grid: &RotationGrid,
    refine: Refine,
) -> Result<ProcrustesResult> {
    let d = grid.dim();
    if mu.dim() != d || nu.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "measures in dimension {} and {}, rotations in {d}",
            mu.dim(),
            nu.dim()
        )));
    }
    let grid_values = grid
        .rotations()
        .par_iter()
        .map(|r| {
            Ok(solve_ot(mu, nu, &rotated_cost(mu, nu, r)?)?
                .require_optimal()?
                .value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (grid_index, &gv) = grid_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("grid is nonempty");
    let mut rotation = grid.rotations()[grid_index].clone();
    let mut value = gv;
    let mut iterations = 0;
    if refine == Refine::Alternating {
        let mut plan = solve_ot(mu, nu, &rotated_cost(mu, nu, &rotation)?)?.plan;
        while iterations < 100 {
            iterations += 1;
            let mut cross = DMatrix::zeros(d, d);
            for (i, x) in mu.support().iter().enumerate() {
                for (j, y) in nu.support().iter().enumerate() {
                    let w = plan.entries()[(i, j)];
                    if w > 0.0 {
                        for a in 0..d {
                            for b in 0..d {
                                cross[(a, b)] += w * x.0[a] * y.0[b];
                            }
                        }
                    }
                }
            }
            let cand = nearest_rotation(&cross);
            let sol = solve_ot(mu, nu, &rotated_cost(mu, nu, &cand)?)?.require_optimal()?;
            let improvement = value - sol.value;
            if improvement < 0.0 {
                break;
            }
            rotation = cand;
            value = sol.value;
            plan = sol.plan;
            if improvement < 1e-10 {
                break;
            }
        }
    }
    Ok(ProcrustesResult {
        value,
        rotation,
        grid_values,
        grid_index,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::applications::grids::random_rotation;
    use crate::rng::substream;
    use rand::Rng;

    fn cloud(n: usize, d: usize, seed: u64) -> DiscreteMeasure {
        let mut rng = substream(seed, 0);
        DiscreteMeasure::uniform(
            (0..n)
                .map(|_| Point::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect(),
        )
        .unwrap()
    }

    fn rotate(mu: &DiscreteMeasure, r: &DMatrix<f64>) -> DiscreteMeasure {
        DiscreteMeasure::new(
            mu.support().iter().map(|x| apply(r, x)).collect(),
            mu.weights().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn identical_measures_at_identity() {
        let mu = cloud(6, 2, 1);
        let res = procrustes_ot(
            &mu,
            &mu,
            &RotationGrid::planar(36).unwrap(),
            Refine::GridOnly,
        )
        .unwrap();
        assert!(res.value.abs() < 1e-12);
        assert_eq!(res.grid_index, 0);
    }

    #[test]
    fn grid_rotation_is_recovered_exactly() {
        let mu = cloud(7, 2, 2);
        let grid = RotationGrid::planar(72).unwrap();
        let r = grid.rotations()[17].clone();
        let nu = rotate(&mu, &r);
        let res = procrustes_ot(&mu, &nu, &grid, Refine::GridOnly).unwrap();
        assert!(res.value < 1e-12);
        assert!((res.alignment() - r).abs().max() < 1e-12);
    }

    #[test]
    fn alternating_recovers_off_grid_rotations() {
        let mut rng = substream(3, 1);
        for d in [2, 3] {
            let grid = RotationGrid::new(d, if d == 2 { 90 } else { 2000 }).unwrap();
            let mu = cloud(8, d, 4 + d as u64);
            let r = random_rotation(d, &mut rng).unwrap();
            let nu = rotate(&mu, &r);
            let res = procrustes_ot(&mu, &nu, &grid, Refine::Alternating).unwrap();
            assert!(res.value < 1e-8, "d = {d}: {}", res.value);
            assert!((res.alignment() - &r).singular_values().max() < 1e-4);
        }
    }

    #[test]
    fn finer_grid_within_mesh_bound() {
        let mu = cloud(5, 2, 8);
        let nu = cloud(5, 2, 9);
        let coarse = RotationGrid::planar(720).unwrap();
        let fine = RotationGrid::planar(7200).unwrap();
        let a = procrustes_ot(&mu, &nu, &coarse, Refine::GridOnly)
            .unwrap()
            .value;
        let b = procrustes_ot(&mu, &nu, &fine, Refine::GridOnly)
            .unwrap()
            .value;
        let rx = mu
            .support()
            .iter()
            .map(|p| p.dot(p.coords()).sqrt())
            .fold(0.0, f64::max);
        let ry = nu
            .support()
            .iter()
            .map(|p| p.dot(p.coords()).sqrt())
            .fold(0.0, f64::max);
        let lip = 2.0 * ry * (rx + ry);
        assert!(a >= b - 1e-12);
        assert!(a - b <= lip * coarse.mesh() + 1e-12);
    }

    #[test]
    fn nearest_rotation_is_proper() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
        let r = nearest_rotation(&m);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
}
