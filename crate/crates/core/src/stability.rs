//! First-order stability of the OT value in measures and cost.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::transport::{FaceOptions, OptimalFaces};

/// Bracket `lower <= OT(mu~, nu~, c~) - OT(mu, nu, c) <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SandwichBounds {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.lower - tol <= x && x <= self.upper + tol
    }
}

fn same_support(a: &DiscreteMeasure, b: &DiscreteMeasure, name: &str) -> Result<()> {
    if a.support() != b.support() {
        return Err(Error::DimensionMismatch(format!(
            "{name} and its perturbation must share the same atoms in the same order"
        )));
    }
    Ok(())
}

fn weight_diff(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Vec<f64> {
    b.weights()
        .iter()
        .zip(a.weights())
        .map(|(x, y)| x - y)
        .collect()
}

/// Sandwich bounds on the change of the OT value.
///
/// The lower bound combines the primal face of the perturbed problem with the
/// dual face of the original one. The upper bound is the smaller of two
/// face-program combinations routed through `(mu~, nu~, c)` and `(mu, nu, c~)`.
pub fn sandwich_bounds(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    c: &CostMatrix,
    c_t: &CostMatrix,
    face_tol: Option<f64>,
) -> Result<SandwichBounds> {
    same_support(mu, mu_t, "mu")?;
    same_support(nu, nu_t, "nu")?;
    c.check_shape(mu, nu)?;
    c_t.check_shape(mu, nu)?;
    let opts = FaceOptions {
        face_tol,
        dual_box: false,
    };
    let dc: DMatrix<f64> = c_t.values() - c.values();
    let dmu = weight_diff(mu, mu_t);
    let dnu = weight_diff(nu, nu_t);

    let base = OptimalFaces::new(mu, nu, c, opts)?;
    let pert = OptimalFaces::new(mu_t, nu_t, c_t, opts)?;
    let mixed = OptimalFaces::new(mu_t, nu_t, c, opts)?;

    let lower = pert.min_primal(&dc)? + base.max_dual(&dmu, &dnu)?;
    let upper1 = mixed.min_primal(&dc)? + mixed.max_dual(&dmu, &dnu)?;
    let upper2 = base.min_primal(&dc)? + pert.max_dual(&dmu, &dnu)?;
    Ok(SandwichBounds {
        lower,
        upper: upper1.min(upper2),
    })
}

/// Direction `(dmu, dnu, dc)` for perturbing an OT instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTriple {
    pub dmu: Vec<f64>,
    pub dnu: Vec<f64>,
    #[serde(with = "crate::serde_rows")]
    pub dc: DMatrix<f64>,
}

impl PerturbationTriple {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            dmu: vec![0.0; n],
            dnu: vec![0.0; m],
            dc: DMatrix::zeros(n, m),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            dmu: self.dmu.iter().map(|v| v * t).collect(),
            dnu: self.dnu.iter().map(|v| v * t).collect(),
            dc: &self.dc * t,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            dmu: self
                .dmu
                .iter()
                .zip(&other.dmu)
                .map(|(a, b)| a + b)
                .collect(),
            dnu: self
                .dnu
                .iter()
                .zip(&other.dnu)
                .map(|(a, b)| a + b)
                .collect(),
            dc: &self.dc + &other.dc,
        }
    }

    /// Checks shapes and zero total mass of the measure directions.
    pub fn check_admissible(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
        if self.dmu.len() != mu.len() || self.dnu.len() != nu.len() {
            return Err(Error::Inadmissible(
                "direction lengths do not match supports".into(),
            ));
        }
        if self.dc.nrows() != mu.len() || self.dc.ncols() != nu.len() {
            return Err(Error::Inadmissible(
                "cost direction has the wrong shape".into(),
            ));
        }
        let (smu, snu) = (self.dmu.iter().sum::<f64>(), self.dnu.iter().sum::<f64>());
        if smu.abs() > 1e-12 || snu.abs() > 1e-12 {
            return Err(Error::Inadmissible(format!(
                "measure directions must sum to zero, got {smu:.3e} and {snu:.3e}"
            )));
        }
        if self
            .dmu
            .iter()
            .chain(&self.dnu)
            .chain(self.dc.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Inadmissible("direction is not finite".into()));
        }
        Ok(())
    }

    /// Largest `t` such that `mu + s dmu` and `nu + s dnu` stay nonnegative for `s <= t`.
    pub fn max_step(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let ratio = |w: &[f64], d: &[f64]| {
            w.iter()
                .zip(d)
                .filter(|(_, d)| **d < 0.0)
                .map(|(w, d)| -w / d)
                .fold(f64::INFINITY, f64::min)
        };
        ratio(mu.weights(), &self.dmu).min(ratio(nu.weights(), &self.dnu))
    }

    /// The instance `(mu + t dmu, nu + t dnu, c + t dc)`.
    pub fn apply(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        c: &CostMatrix,
        t: f64,
    ) -> Result<(DiscreteMeasure, DiscreteMeasure, CostMatrix)> {
        let shift = |m: &DiscreteMeasure, d: &[f64]| -> Result<DiscreteMeasure> {
            let mut w: Vec<f64> = m.weights().iter().zip(d).map(|(a, b)| a + t * b).collect();
            // Absorb rounding so the total stays exactly representable as one.
            let rest: f64 = w[1..].iter().sum();
            w[0] = 1.0 - rest;
            m.reweighted(w)
        };
        Ok((
            shift(mu, &self.dmu)?,
            shift(nu, &self.dnu)?,
            CostMatrix::new(c.values() + &self.dc * t)?,
        ))
    }
}

/// One-sided directional derivative of `(mu, nu, c) -> OT(mu, nu, c)`.
///
/// Equals the minimum of `<dc, pi>` over optimal plans plus the maximum of
/// `dmu . phi + dnu . psi` over optimal potentials.
pub fn gateaux_derivative(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    delta: &PerturbationTriple,
    face_tol: Option<f64>,
) -> Result<f64> {
    delta.check_admissible(mu, nu)?;
    let faces = OptimalFaces::new(
        mu,
        nu,
        c,
        FaceOptions {
            face_tol,
            dual_box: false,
        },
    )?;
    gateaux_from_faces(&faces, delta)
}

/// [`gateaux_derivative`] on an already solved instance.
pub fn gateaux_from_faces(faces: &OptimalFaces, delta: &PerturbationTriple) -> Result<f64> {
    delta.check_admissible(faces.mu(), faces.nu())?;
    Ok(faces.min_primal(&delta.dc)? + faces.max_dual(&delta.dmu, &delta.dnu)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::ot_value;

    fn instance() -> (DiscreteMeasure, DiscreteMeasure, CostMatrix) {
        let mu = DiscreteMeasure::on_indices(&[0.2, 0.3, 0.5]).unwrap();
        let nu = DiscreteMeasure::on_indices(&[0.45, 0.25, 0.3]).unwrap();
        let c = CostMatrix::from_rows(&[
            vec![0.3, 1.2, 2.0],
            vec![1.1, 0.2, 0.9],
            vec![2.2, 0.7, 0.1],
        ])
        .unwrap();
        (mu, nu, c)
    }

    #[test]
    fn identical_instances_give_zero_bounds() {
        let (mu, nu, c) = instance();
        let b = sandwich_bounds(&mu, &nu, &mu, &nu, &c, &c, None).unwrap();
        assert!(b.lower.abs() < 1e-9 && b.upper.abs() < 1e-9);
    }

    #[test]
    fn constant_cost_shift() {
        let (mu, nu, c) = instance();
        let eps = 0.37;
        let ct = c.map(|v| v + eps).unwrap();
        let b = sandwich_bounds(&mu, &nu, &mu, &nu, &c, &ct, None).unwrap();
        let diff = ot_value(&mu, &nu, &ct).unwrap() - ot_value(&mu, &nu, &c).unwrap();
        assert!(b.contains(diff, 1e-9));
        assert!((diff - eps).abs() < 1e-12);
    }

    #[test]
    fn support_mismatch() {
        let (mu, nu, c) = instance();
        let other = DiscreteMeasure::on_line(&[5.0, 6.0, 7.0], &[0.2, 0.3, 0.5]).unwrap();
        assert!(sandwich_bounds(&mu, &nu, &other, &nu, &c, &c, None).is_err());
    }

    #[test]
    fn derivative_trivial_directions() {
        let (mu, nu, c) = instance();
        let zero = PerturbationTriple::zero(3, 3);
        assert_eq!(gateaux_derivative(&mu, &nu, &c, &zero, None).unwrap(), 0.0);
        let along_c = PerturbationTriple {
            dc: c.values().clone(),
            ..PerturbationTriple::zero(3, 3)
        };
        let d = gateaux_derivative(&mu, &nu, &c, &along_c, None).unwrap();
        assert!((d - ot_value(&mu, &nu, &c).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn inadmissible_direction() {
        let (mu, nu, c) = instance();
        let mut bad = PerturbationTriple::zero(3, 3);
        bad.dmu[0] = 0.1;
        assert!(matches!(
            gateaux_derivative(&mu, &nu, &c, &bad, None),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let (mu, nu, c) = instance();
        let delta = PerturbationTriple {
            dmu: vec![0.1, -0.3, 0.2],
            dnu: vec![-0.2, 0.15, 0.05],
            dc: DMatrix::from_fn(3, 3, |i, j| ((i + 2 * j) % 3) as f64 - 1.0),
        };
        let d = gateaux_derivative(&mu, &nu, &c, &delta, None).unwrap();
        let base = ot_value(&mu, &nu, &c).unwrap();
        let quotient = |t: f64| {
            let (a, b, ct) = delta.apply(&mu, &nu, &c, t).unwrap();
            (ot_value(&a, &b, &ct).unwrap() - base) / t
        };
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&t| (quotient(t) - d).abs())
            .collect();
        assert!(errs[2] < 1e-3, "{errs:?}");
        assert!(errs[2] <= errs[0] + 1e-12);
        let h = gateaux_derivative(&mu, &nu, &c, &delta.scaled(2.5), None).unwrap();
        assert!((h - 2.5 * d).abs() < 1e-8);
    }
}
