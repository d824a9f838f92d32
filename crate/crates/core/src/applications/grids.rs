//! Finite discretizations of SO(d) and of the unit sphere.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::Point;
use crate::rng::substream;

const MESH_PROBES: u64 = 512;
const MESH_SEED: u64 = 0x0005_eed0_f9e5;

/// Operator-norm distance `||a - b||_2` between two rotations of equal dimension.
pub fn rotation_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    let tr = (a.transpose() * b).trace();
    match d {
        2 => (2.0 - tr).max(0.0).sqrt(),
        3 => (3.0 - tr).max(0.0).sqrt(),
        _ => (a - b).singular_values().max(),
    }
}

pub fn planar_rotation(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Rotation matrix of the unit quaternion `(w, x, y, z)`.
pub fn quaternion_rotation(q: [f64; 4]) -> DMatrix<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
}

/// Haar-distributed random rotation in dimension 2 or 3.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    match dim {
        2 => Ok(planar_rotation(rng.random_range(0.0..2.0 * PI))),
        3 => {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            Ok(quaternion_rotation(q))
        }
        _ => Err(Error::InvalidInput(format!(
            "rotations supported in d = 2, 3, got {dim}"
        ))),
    }
}

/// A finite net of rotations.
#[derive(Debug, Clone)]
pub struct RotationGrid {
    dim: usize,
    rotations: Vec<DMatrix<f64>>,
    mesh: f64,
}

impl RotationGrid {
    /// `resolution` equally spaced angles for d = 2, a super-Fibonacci quaternion
    /// net of `resolution` points for d = 3.
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        match dim {
            2 => Self::planar(resolution),
            3 => Self::spatial(resolution),
            _ => Err(Error::InvalidInput(format!(
                "rotations supported in d = 2, 3, got {dim}"
            ))),
        }
    }

    pub fn planar(n_angles: usize) -> Result<Self> {
        if n_angles == 0 {
            return Err(Error::EmptyInput);
        }
        let rotations = (0..n_angles)
            .map(|k| planar_rotation(2.0 * PI * k as f64 / n_angles as f64))
            .collect();
        Ok(Self {
            dim: 2,
            rotations,
            mesh: 2.0 * (PI / (2.0 * n_angles as f64)).sin(),
        })
    }

    pub fn spatial(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let phi = 2f64.sqrt();
        let psi = 1.533_751_168_755_204_3;
        let rotations = (0..n)
            .map(|i| {
                let s = i as f64 + 0.5;
                let r = (s / n as f64).sqrt();
                let rr = (1.0 - s / n as f64).sqrt();
                let a = 2.0 * PI * s / phi;
                let b = 2.0 * PI * s / psi;
                quaternion_rotation([r * a.sin(), r * a.cos(), rr * b.sin(), rr * b.cos()])
            })
            .collect();
        let mut grid = Self {
            dim: 3,
            rotations,
            mesh: 0.0,
        };
        grid.mesh = grid.estimate_mesh(MESH_PROBES, MESH_SEED);
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn rotations(&self) -> &[DMatrix<f64>] {
        &self.rotations
    }

    /// Covering radius in operator norm: exact for d = 2, a Monte Carlo
    /// estimate from Haar probes for d = 3.
    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Largest distance from `probes` random rotations to the nearest grid element.
    pub fn estimate_mesh(&self, probes: u64, seed: u64) -> f64 {
        (0..probes)
            .into_par_iter()
            .map(|i| {
                let r = random_rotation(self.dim, &mut substream(seed, i))
                    .expect("grid dimension is 2 or 3");
                self.rotations
                    .iter()
                    .map(|g| rotation_distance(g, &r))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Directions on the unit sphere with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    directions: Vec<Point>,
    weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(directions: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::EmptyInput);
        }
        if directions.len() != weights.len() {
            return Err(Error::DimensionMismatch("one weight per direction".into()));
        }
        let d = directions[0].dim();
        if d < 2 || directions.iter().any(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch(
                "directions must share a dimension >= 2".into(),
            ));
        }
        if directions
            .iter()
            .any(|p| (p.dot(p.coords()).sqrt() - 1.0).abs() > 1e-12)
        {
            return Err(Error::InvalidInput(
                "directions must be unit vectors".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidInput(
                "quadrature weights must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(Self {
            directions,
            weights,
        })
    }

    /// Equal-weight directions: uniform angles (d = 2), a spherical Fibonacci
    /// net (d = 3), or seeded Gaussian directions (d >= 4).
    pub fn uniform(dim: usize, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let directions: Vec<Point> = match dim {
            0 | 1 => return Err(Error::InvalidInput("sphere grids need d >= 2".into())),
            2 => (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    Point::new(vec![a.cos(), a.sin()])
                })
                .collect(),
            3 => {
                let golden = (1.0 + 5f64.sqrt()) / 2.0;
                (0..n)
                    .map(|i| {
                        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        let a = 2.0 * PI * i as f64 / golden;
                        normalize(vec![r * a.cos(), r * a.sin(), z])
                    })
                    .collect()
            }
            _ => (0..n)
                .map(|i| {
                    let mut rng = substream(seed, i as u64);
                    random_direction(dim, &mut rng)
                })
                .collect(),
        };
        Self::new(directions, vec![1.0 / n as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Euclidean covering radius: exact for the d = 2 uniform-angle grid,
    /// estimated from seeded uniform probes otherwise.
    pub fn mesh(&self) -> f64 {
        if self.dim() == 2 && self.is_equiangular() {
            return 2.0 * (PI / (2.0 * self.len() as f64)).sin();
        }
        self.estimate_mesh(MESH_PROBES * 4, MESH_SEED)
    }

    pub fn estimate_mesh(&self, probes: u64, seed: u64) -> f64 {
        let d = self.dim();
        (0..probes)
            .into_par_iter()
            .map(|i| {
                let u = random_direction(d, &mut substream(seed, i));
                self.directions
                    .iter()
                    .map(|p| p.dist(&u))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    }

    fn is_equiangular(&self) -> bool {
        let n = self.len() as f64;
        self.directions.iter().enumerate().all(|(k, p)| {
            let a = 2.0 * PI * k as f64 / n;
            (p.0[0] - a.cos()).abs() < 1e-12 && (p.0[1] - a.sin()).abs() < 1e-12
        })
    }
}

pub(crate) fn normalize(v: Vec<f64>) -> Point {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Point::new(v.into_iter().map(|x| x / n).collect())
}

pub(crate) fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return normalize(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quaternion_rotations_are_orthogonal() {
        let g = RotationGrid::spatial(200).unwrap();
        for r in g.rotations() {
            let e = (r.transpose() * r - DMatrix::identity(3, 3)).abs().max();
            assert!(e < 1e-12);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn distance_matches_operator_norm() {
        let mut rng = substream(1, 0);
        for d in [2, 3] {
            for _ in 0..20 {
                let a = random_rotation(d, &mut rng).unwrap();
                let b = random_rotation(d, &mut rng).unwrap();
                let op = (&a - &b).singular_values().max();
                assert_abs_diff_eq!(rotation_distance(&a, &b), op, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn planar_mesh_is_exact() {
        let g = RotationGrid::planar(36).unwrap();
        assert!(g.estimate_mesh(2000, 3) <= g.mesh() + 1e-12);
        assert!(g.estimate_mesh(2000, 3) > 0.9 * g.mesh());
    }

    #[test]
    fn spatial_mesh_shrinks() {
        let coarse = RotationGrid::spatial(100).unwrap().mesh();
        let fine = RotationGrid::spatial(3000).unwrap().mesh();
        assert!(fine < coarse && fine < 0.5, "{coarse} {fine}");
    }

    #[test]
    fn sphere_grids_are_unit() {
        for d in [2, 3, 5] {
            let g = SphereGrid::uniform(d, 64, 9).unwrap();
            assert_eq!(g.dim(), d);
            assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        let g = SphereGrid::uniform(3, 400, 0).unwrap();
        assert!(g.mesh() < 0.2);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SphereGrid::new(vec![Point::new(vec![1.0, 1.0])], vec![1.0]).is_err());
        assert!(SphereGrid::new(vec![Point::new(vec![1.0, 0.0])], vec![0.5]).is_err());
        assert!(RotationGrid::new(4, 10).is_err());
    }
}
