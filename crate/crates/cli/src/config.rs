//! JSON experiment configuration.

use std::path::Path;

use otlimit_core::applications::{GroupFamily, MixtureSpec, Refine};
use otlimit_core::regelev::{ElevationSpec, ProbeRate};
use otlimit_core::rng::substream;
use otlimit_core::{CostMatrix, DiscreteMeasure, Point};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    WccClt,
    ExtremalClt,
    BootstrapWcc,
    BootstrapExtremal,
    Sliced,
    Procrustes,
    Sketched,
    Gof,
    StabilityProbe,
    RegelevProbe,
}

/// A finitely supported measure, given explicitly or generated from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    Explicit { support: Vec<Point>, weights: Vec<f64> },
    Random { random: RandomMeasure },
}

/// Atoms uniform in `[-scale, scale]^dim`, weights uniform in `[0.5, 1.5]` then normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMeasure {
    pub atoms: usize,
    pub dim: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl MeasureSpec {
    pub fn build(&self) -> CliResult<DiscreteMeasure> {
        match self {
            Self::Explicit { support, weights } => Ok(DiscreteMeasure::new(support.clone(), weights.clone())?),
            Self::Random { random: r } => {
                if r.atoms == 0 || r.dim == 0 {
                    return Err(CliError::Config("random measure needs atoms >= 1 and dim >= 1".into()));
                }
                let mut rng = substream(r.seed, 0);
                let pts = (0..r.atoms)
                    .map(|_| Point::new((0..r.dim).map(|_| rng.random_range(-r.scale..=r.scale)).collect()))
                    .collect();
                let raw: Vec<f64> = (0..r.atoms).map(|_| rng.random_range(0.5..1.5)).collect();
                let total: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
                let rest: f64 = w[1..].iter().sum();
                w[0] = 1.0 - rest;
                Ok(DiscreteMeasure::new(pts, w)?)
            }
        }
    }
}

/// Population cost and, for estimated costs, how it is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    /// Known cost `|x - y|^p`.
    Power { p: f64 },
    /// Known cost given on the population supports.
    Matrix { rows: Vec<Vec<f64>> },
    /// `||x - y - theta||^2` with `theta` the difference of means, estimated by plug-in.
    MeanShift,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::Power { p: 2.0 }
    }
}

/// A finite family of costs indexed by a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    /// One matrix per grid point, on the population supports.
    Matrices { matrices: Vec<Vec<Vec<f64>>> },
    /// Projected costs `|<theta, x - y>|^p` over a sphere grid.
    Sliced { directions: usize, p: f64 },
}

impl FamilySpec {
    pub fn matrices(&self) -> CliResult<Vec<CostMatrix>> {
        match self {
            Self::Matrices { matrices } => {
                if matrices.is_empty() {
                    return Err(CliError::Config("empty cost family".into()));
                }
                matrices.iter().map(|m| Ok(CostMatrix::from_rows(m)?)).collect()
            }
            Self::Sliced { .. } => Err(CliError::Config("sliced families are built from the supports".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMode {
    Inf,
    Sup,
    Average,
    Max,
}

/// Resample size rule: a fixed `k` or `floor(n^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KRule {
    Fixed(usize),
    Exponent { exponent: f64 },
}

impl Default for KRule {
    fn default() -> Self {
        Self::Exponent { exponent: 2.0 / 3.0 }
    }
}

impl KRule {
    pub fn k(&self, n: usize) -> usize {
        match *self {
            Self::Fixed(k) => k,
            Self::Exponent { exponent } => ((n as f64).powf(exponent).floor() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default)]
    pub k: KRule,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_datasets")]
    pub datasets: usize,
    /// Also run the n-out-of-n bootstrap and report its distance.
    #[serde(default)]
    pub negative_control: bool,
}

fn default_replicates() -> usize {
    2000
}

fn default_datasets() -> usize {
    20
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            k: KRule::default(),
            replicates: default_replicates(),
            datasets: default_datasets(),
            negative_control: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub face_tol: Option<f64>,
    pub arg_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcrustesSection {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_refine")]
    pub refine: Refine,
}

fn default_resolution() -> usize {
    360
}

fn default_refine() -> Refine {
    Refine::Alternating
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchedSection {
    pub spec: MixtureSpec,
    /// Standard deviation of the off-diagonal distance estimates, on the limit scale.
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofSection {
    pub family: GroupFamily,
    pub nu0: MeasureSpec,
    /// True parameter; the sample law is `(g_theta)_# nu0` unless `mu` is given.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
}

fn default_instances() -> usize {
    100
}

fn default_atoms() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegelevSection {
    pub spec: ElevationSpec,
    #[serde(default = "one")]
    pub sigma: f64,
    pub rates: Vec<ProbeRate>,
}

/// A complete experiment description. All randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu: Option<MeasureSpec>,
    #[serde(default)]
    pub nu: Option<MeasureSpec>,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub mode: Option<StatMode>,
    /// Sample sizes `(n, m)`.
    #[serde(default)]
    pub sizes: Vec<(usize, usize)>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_limit_draws")]
    pub limit_draws: usize,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub procrustes: Option<ProcrustesSection>,
    #[serde(default)]
    pub sketched: Option<SketchedSection>,
    #[serde(default)]
    pub gof: Option<GofSection>,
    #[serde(default)]
    pub stability: Option<StabilitySection>,
    #[serde(default)]
    pub regelev: Option<RegelevSection>,
    /// Include raw statistic and limit draws in the outputs.
    #[serde(default)]
    pub raw_draws: bool,
}

fn default_reps() -> usize {
    1000
}

fn default_limit_draws() -> usize {
    20_000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn need<'a, T>(&self, field: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        field
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("scenario {:?} requires `{name}`", self.scenario)))
    }

    pub fn mu(&self) -> CliResult<DiscreteMeasure> {
        self.need(&self.mu, "mu")?.build()
    }

    pub fn nu(&self) -> CliResult<DiscreteMeasure> {
        self.need(&self.nu, "nu")?.build()
    }

    /// Schema checks that do not need any computation.
    pub fn validate(&self) -> CliResult<()> {
        use Scenario::*;
        let s = self.scenario;
        let cfg_err = |msg: String| Err(CliError::Config(msg));
        if matches!(s, WccClt | ExtremalClt | BootstrapWcc | BootstrapExtremal | Sliced | Procrustes) {
            self.need(&self.mu, "mu")?;
            self.need(&self.nu, "nu")?;
        }
        if matches!(s, WccClt | ExtremalClt | BootstrapWcc | BootstrapExtremal | Sliced | Sketched | Gof) {
            if self.sizes.is_empty() {
                return cfg_err(format!("scenario {s:?} requires `sizes`"));
            }
            if self.sizes.iter().any(|&(n, m)| n == 0 || m == 0) {
                return cfg_err("sample sizes must be positive".into());
            }
            if self.reps == 0 || self.limit_draws == 0 {
                return cfg_err("reps and limit_draws must be positive".into());
            }
        }
        if matches!(s, ExtremalClt | BootstrapExtremal) {
            self.need(&self.family, "family")?;
            if !matches!(self.mode, Some(StatMode::Inf | StatMode::Sup)) {
                return cfg_err("extremal scenarios take mode `inf` or `sup`".into());
            }
        }
        if s == Sliced {
            match &self.family {
                Some(FamilySpec::Sliced { .. }) => {}
                _ => return cfg_err("scenario sliced requires a `sliced` family".into()),
            }
            if !matches!(self.mode, Some(StatMode::Average | StatMode::Max)) {
                return cfg_err("scenario sliced takes mode `average` or `max`".into());
            }
        }
        if matches!(s, BootstrapWcc | BootstrapExtremal) {
            let b = &self.bootstrap;
            if b.replicates == 0 || b.datasets == 0 {
                return cfg_err("bootstrap replicates and datasets must be positive".into());
            }
            if let KRule::Fixed(0) = b.k {
                return cfg_err("bootstrap k must be positive".into());
            }
        }
        if matches!(s, Sketched) {
            self.need(&self.sketched, "sketched")?.spec.validate()?;
        }
        if matches!(s, Gof) {
            self.need(&self.gof, "gof")?;
        }
        if matches!(s, StabilityProbe) {
            let st = self.need(&self.stability, "stability")?;
            if st.instances == 0 || st.atoms == 0 {
                return cfg_err("stability probe needs instances and atoms".into());
            }
        }
        if matches!(s, RegelevProbe) {
            self.need(&self.regelev, "regelev")?;
            self.need(&self.mu, "mu")?;
            self.need(&self.nu, "nu")?;
        }
        if let CostSpec::Power { p } = self.cost {
            if !(p > 0.0) {
                return cfg_err(format!("cost exponent must be positive, got {p}"));
            }
        }
        Ok(())
    }
}
