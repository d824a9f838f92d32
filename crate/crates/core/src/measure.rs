//! Finitely supported probability measures and empirical samples.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn scalar(x: f64) -> Self {
        Self(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    // -0.0 and 0.0 must hash identically.
    fn key(&self) -> Vec<u64> {
        self.0
            .iter()
            .map(|&x| if x == 0.0 { 0 } else { x.to_bits() })
            .collect()
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Self::scalar(x)
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

fn check_points(points: &[Point]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let d = first.dim();
    for (i, p) in points.iter().enumerate() {
        if p.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "point {i} has dimension {}, expected {d}",
                p.dim()
            )));
        }
        if p.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
    }
    Ok(d)
}

/// A probability measure with finitely many atoms.
///
/// Atoms are pairwise distinct and every weight is strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        Self::new(raw.support, raw.weights)
    }
}

impl DiscreteMeasure {
    /// Builds a measure, merging duplicate atoms.
    ///
    /// Rejects weights that are not strictly positive or do not sum to one.
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} atoms but {} weights",
                support.len(),
                weights.len()
            )));
        }
        check_points(&support)?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "weights must be positive, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(support.len());
        let mut pts = Vec::with_capacity(support.len());
        let mut ws: Vec<f64> = Vec::with_capacity(support.len());
        for (p, w) in support.into_iter().zip(weights) {
            match index.get(&p.key()) {
                Some(&k) => ws[k] += w,
                None => {
                    index.insert(p.key(), pts.len());
                    pts.push(p);
                    ws.push(w);
                }
            }
        }
        Ok(Self {
            support: pts,
            weights: ws,
        })
    }

    /// Uniform weights on the given (distinct) atoms.
    pub fn uniform(support: Vec<Point>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        EmpiricalSample::new(support)?.to_measure()
    }

    /// A measure on the real line.
    pub fn on_line(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(
            atoms.iter().map(|&x| Point::scalar(x)).collect(),
            weights.to_vec(),
        )
    }

    /// Weights on the abstract index support `0, 1, ..., N-1`.
    pub fn on_indices(weights: &[f64]) -> Result<Self> {
        let atoms: Vec<f64> = (0..weights.len()).map(|i| i as f64).collect();
        Self::on_line(&atoms, weights)
    }

    /// Point mass.
    pub fn dirac(p: Point) -> Self {
        Self {
            support: vec![p],
            weights: vec![1.0],
        }
    }

    /// Same atoms, new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.support.clone(), weights)
    }

    /// Index of the atom equal to `p`, if any.
    pub fn position(&self, p: &Point) -> Option<usize> {
        let key = p.key();
        self.support.iter().position(|q| q.key() == key)
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    /// Integral of a function given by its values on the atoms.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Draws `n` i.i.d. atoms.
    pub fn sample<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> EmpiricalSample {
        let idx = self.sample_indices(n, rng);
        EmpiricalSample {
            draws: idx.into_iter().map(|i| self.support[i].clone()).collect(),
        }
    }

    /// Draws `n` i.i.d. atom indices by inversion of the cumulative weights.
    pub fn sample_indices<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        let last = self.len() - 1;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                cdf.partition_point(|&c| c <= u).min(last)
            })
            .collect()
    }
}

/// An i.i.d. sample of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    pub draws: Vec<Point>,
}

impl EmpiricalSample {
    pub fn new(draws: Vec<Point>) -> Result<Self> {
        check_points(&draws)?;
        Ok(Self { draws })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| Point::scalar(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Point::dim)
    }

    /// Empirical measure; duplicates are merged by integer counts.
    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        check_points(&self.draws)?;
        let n = self.draws.len();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
        let mut pts = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for p in &self.draws {
            match index.get(&p.key()) {
                Some(&k) => counts[k] += 1,
                None => {
                    index.insert(p.key(), pts.len());
                    pts.push(p.clone());
                    counts.push(1);
                }
            }
        }
        Ok(DiscreteMeasure {
            support: pts,
            weights: counts.into_iter().map(|c| c as f64 / n as f64).collect(),
        })
    }

    /// Resamples `k` points with replacement.
    pub fn resample<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> EmpiricalSample {
        let n = self.draws.len();
        EmpiricalSample {
            draws: (0..k)
                .map(|_| self.draws[rng.random_range(0..n)].clone())
                .collect(),
        }
    }

    /// Coordinate-wise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for p in &self.draws {
            for (a, x) in m.iter_mut().zip(&p.0) {
                *a += x;
            }
        }
        let n = self.draws.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Sample sizes `(n, m)` with `lambda = m / (n + m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRatio {
    pub lambda: f64,
    pub n: usize,
    pub m: usize,
}

impl SampleRatio {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("sample sizes must be positive".into()));
        }
        Ok(Self {
            lambda: m as f64 / (n + m) as f64,
            n,
            m,
        })
    }

    /// `sqrt(n m / (n + m))`.
    pub fn rate(&self) -> f64 {
        let (n, m) = (self.n as f64, self.m as f64);
        (n * m / (n + m)).sqrt()
    }
}

/// Points read from CSV, with optional weights from a final `weight` column.
#[derive(Debug, Clone)]
pub struct PointTable {
    pub points: Vec<Point>,
    pub weights: Option<Vec<f64>>,
}

impl PointTable {
    pub fn into_sample(self) -> Result<EmpiricalSample> {
        EmpiricalSample::new(self.points)
    }

    /// A weighted table becomes a measure directly, an unweighted one its empirical measure.
    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        match self.weights {
            Some(w) => DiscreteMeasure::new(self.points, w),
            None => EmpiricalSample::new(self.points)?.to_measure(),
        }
    }
}

/// Reads a header-first CSV of points.
pub fn read_points_csv<R: std::io::Read>(reader: R) -> Result<PointTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let weighted = headers
        .iter()
        .next_back()
        .is_some_and(|h| h.eq_ignore_ascii_case("weight"));
    let ncoord = headers.len() - usize::from(weighted);
    if ncoord == 0 {
        return Err(Error::InvalidInput("csv has no coordinate columns".into()));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidInput(format!("csv row {}: {e}", line + 2)))?;
        if vals.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "csv row {}: wrong arity",
                line + 2
            )));
        }
        if weighted {
            weights.push(vals[ncoord]);
        }
        points.push(Point(vals[..ncoord].to_vec()));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(PointTable {
        points,
        weights: weighted.then_some(weights),
    })
}

pub fn read_points_csv_path(path: &Path) -> Result<PointTable> {
    read_points_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::on_line(&[0.0, 1.0], &[0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::on_line(&[0.0, 1.0], &[1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::on_line(&[0.0, 1.0], &[1.0, 0.0]).is_err());
        assert!(DiscreteMeasure::on_line(&[0.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn merges_duplicates() {
        let m = DiscreteMeasure::on_line(&[1.0, 0.0, 1.0, -0.0], &[0.25; 4]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.support()[0], Point::scalar(1.0));
    }

    #[test]
    fn empirical_counts_are_exact() {
        let s = EmpiricalSample::from_scalars(&[3.0, 1.0, 3.0, 3.0, 2.0, 1.0, 3.0]).unwrap();
        let m = s.to_measure().unwrap();
        assert_eq!(m.weights(), &[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]);
    }

    #[test]
    fn sample_ratio() {
        let r = SampleRatio::new(300, 100).unwrap();
        assert!((r.lambda - 0.25).abs() < 1e-15);
        assert!((r.rate() - 75f64.sqrt()).abs() < 1e-12);
        assert!(SampleRatio::new(0, 3).is_err());
    }

    #[test]
    fn csv_with_weights() {
        let data = "x,y,weight\n0,0,0.25\n1,0,0.75\n";
        let t = read_points_csv(data.as_bytes()).unwrap();
        assert_eq!(t.points.len(), 2);
        let m = t.into_measure().unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
        let plain = read_points_csv("x\n1\n2\n2\n".as_bytes()).unwrap();
        assert!(plain.weights.is_none());
        assert_eq!(plain.into_measure().unwrap().len(), 2);
    }

    #[test]
    fn sampling_frequencies() {
        let m = DiscreteMeasure::on_line(&[0.0, 1.0, 2.0], &[0.2, 0.3, 0.5]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let idx = m.sample_indices(100_000, &mut rng);
        let f2 = idx.iter().filter(|&&i| i == 2).count() as f64 / 1e5;
        assert!((f2 - 0.5).abs() < 0.01);
    }

    #[test]
    fn serde_roundtrip_validates() {
        let m = DiscreteMeasure::on_line(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: DiscreteMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"support":[[0.0],[1.0]],"weights":[0.5,0.6]}"#;
        assert!(serde_json::from_str::<DiscreteMeasure>(bad).is_err());
    }
}
