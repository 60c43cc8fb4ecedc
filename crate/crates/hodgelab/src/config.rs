//! Experiment configuration. Every section is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hodgelab_core::exponent::ExponentSpec;
use hodgelab_core::forms::complex::CubicalComplex;
use hodgelab_core::forms::metric::MetricField;
use hodgelab_core::parametrix::test_metric;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Box {
        #[serde(default = "two")]
        n: usize,
        #[serde(default)]
        cells: Option<Vec<usize>>,
        #[serde(default)]
        h: Option<f64>,
    },
    /// Box with the cubes in `hole[k][0] <= c_k < hole[k][1]` removed.
    PuncturedBox {
        #[serde(default = "two")]
        n: usize,
        #[serde(default)]
        cells: Option<Vec<usize>>,
        #[serde(default)]
        h: Option<f64>,
        hole: Vec<[usize; 2]>,
    },
    /// Box over [-1/2, 1/2]^{n-1} x [0, 1] whose last face lies on x_n = 0.
    Halfbox {
        #[serde(default = "two")]
        n: usize,
        #[serde(default)]
        cells: Option<Vec<usize>>,
    },
}

fn two() -> usize {
    2
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::Box { n: 2, cells: Some(vec![16, 16]), h: None }
    }
}

fn cells_or_default(n: usize, cells: &Option<Vec<usize>>) -> anyhow::Result<Vec<usize>> {
    let c = cells.clone().unwrap_or_else(|| vec![if n == 2 { 64 } else { 16 }; n]);
    if c.len() != n {
        bail!("domain has n = {n} but {} cell counts", c.len());
    }
    Ok(c)
}

impl DomainSpec {
    pub fn n(&self) -> usize {
        match self {
            DomainSpec::Box { n, .. } | DomainSpec::PuncturedBox { n, .. } | DomainSpec::Halfbox { n, .. } => *n,
        }
    }

    pub fn build(&self) -> anyhow::Result<CubicalComplex> {
        let cx = match self {
            DomainSpec::Box { n, cells, h } => {
                let c = cells_or_default(*n, cells)?;
                CubicalComplex::unit_box(*n, &c, h.unwrap_or(1.0 / c[0] as f64))?
            }
            DomainSpec::PuncturedBox { n, cells, h, hole } => {
                let c = cells_or_default(*n, cells)?;
                let hole: Vec<(usize, usize)> = hole.iter().map(|r| (r[0], r[1])).collect();
                CubicalComplex::punctured_box(*n, &c, h.unwrap_or(1.0 / c[0] as f64), &hole)?
            }
            DomainSpec::Halfbox { n, cells } => {
                let c = cells_or_default(*n, cells)?;
                let h = 1.0 / c[0] as f64;
                let mut origin = vec![-0.5; *n];
                origin[n - 1] = 0.0;
                CubicalComplex::from_mask(*n, &c, h, &origin, |_| true)?
            }
        };
        Ok(cx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Euclidean,
    /// diag(1 + x_1/4, 1, 1).
    Test,
    Constant { diag: [f64; 3] },
    /// g_ii = base_i + slope_i . x
    Affine { base: [f64; 3], slope: [[f64; 3]; 3] },
    /// g_ii = exp(rate_i . x)
    Exponential { rate: [[f64; 3]; 3] },
}

impl MetricSpec {
    pub fn build(&self) -> MetricField {
        match self {
            MetricSpec::Euclidean => MetricField::euclidean(),
            MetricSpec::Test => test_metric(),
            MetricSpec::Constant { diag } => MetricField::constant(*diag),
            MetricSpec::Affine { base, slope } => MetricField::affine(*base, *slope),
            MetricSpec::Exponential { rate } => MetricField::exponential(*rate),
        }
    }

    /// Accepts a JSON object or one of the names `euclidean`, `test`.
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        let t = s.trim();
        if t.starts_with('{') {
            return serde_json::from_str(t).context("metric spec");
        }
        match t {
            "euclidean" => Ok(MetricSpec::Euclidean),
            "test" => Ok(MetricSpec::Test),
            _ => bail!("unknown metric '{t}' (expected euclidean, test or a JSON object)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentConfig {
    Constant {
        value: f64,
    },
    Split {
        axis: usize,
        #[serde(default = "half")]
        at: f64,
        left: f64,
        right: f64,
    },
    Radial {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    Affine {
        gradient: Vec<f64>,
        offset: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig::Constant { value: 2.0 }
    }
}

fn pad3(v: &[f64]) -> anyhow::Result<[f64; 3]> {
    if v.len() > 3 {
        bail!("at most three coordinates expected, got {}", v.len());
    }
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    Ok(out)
}

impl ExponentConfig {
    pub fn to_spec(&self) -> anyhow::Result<ExponentSpec> {
        Ok(match self {
            ExponentConfig::Constant { value } => ExponentSpec::Constant(*value),
            ExponentConfig::Split { axis, at, left, right } => ExponentSpec::Split { axis: *axis, at: *at, left: *left, right: *right },
            ExponentConfig::Radial { center, inner, outer } => ExponentSpec::Radial { center: pad3(center)?, inner: *inner, outer: *outer },
            ExponentConfig::Affine { gradient, offset } => ExponentSpec::Affine { gradient: pad3(gradient)?, offset: *offset },
        })
    }

    pub fn describe(&self) -> String {
        serde_json::to_string(self).expect("exponent spec serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Dirichlet,
    Neumann,
    Full,
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative algebraic residual of the linear solvers.
    pub solver: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub domain: DomainSpec,
    pub metric: MetricSpec,
    pub exponent: ExponentConfig,
    pub degree: usize,
    pub problem: ProblemKind,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            domain: DomainSpec::default(),
            metric: MetricSpec::default(),
            exponent: ExponentConfig::default(),
            degree: 1,
            problem: ProblemKind::default(),
            tolerances: Tolerances::default(),
            seed: 1,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version);
        }
        let n = self.domain.n();
        if !(2..=3).contains(&n) {
            bail!("domain dimension must be 2 or 3");
        }
        if self.degree > n {
            bail!("degree {} exceeds the dimension {n}", self.degree);
        }
        if !(self.tolerances.solver > 0.0) {
            bail!("solver tolerance must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn documented_shapes_parse() {
        let cfg = ExperimentConfig::from_json(
            r#"{"schema_version":1,"domain":{"kind":"punctured_box","cells":[9,9],"hole":[[3,6],[3,6]]},
                "exponent":{"kind":"split","axis":0,"left":2.0,"right":4.0},"metric":{"kind":"test"},"degree":1,"seed":7}"#,
        )
        .unwrap();
        assert_eq!(cfg.domain.build().unwrap().count(2), 72);
        assert!(matches!(cfg.exponent.to_spec().unwrap(), ExponentSpec::Split { at, .. } if at == 0.5));
        let b = ExperimentConfig::from_json(r#"{"domain":{"kind":"box","n":2,"cells":[64,64]}}"#).unwrap();
        assert_eq!(b.domain.build().unwrap().count(0), 65 * 65);
        let hb = ExperimentConfig::from_json(r#"{"domain":{"kind":"halfbox"}}"#).unwrap();
        assert_eq!(hb.domain.build().unwrap().origin[1], 0.0);
        let p = ExperimentConfig::from_json(r#"{"domain":{"kind":"punctured_box","hole":[[24,40],[24,40]]}}"#).unwrap();
        assert_eq!(p.domain.build().unwrap().count(2), 64 * 64 - 256);
        for ex in [r#"{"kind":"radial","center":[0.5,0.5],"inner":2.0,"outer":3.0}"#, r#"{"kind":"affine","gradient":[1.0,0.0],"offset":2.0}"#] {
            let e: ExponentConfig = serde_json::from_str(ex).unwrap();
            e.to_spec().unwrap();
        }
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(ExperimentConfig::from_json(r#"{"seeds":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"domain":{"kind":"box","size":3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"degree":3}"#).is_err());
    }

    #[test]
    fn metric_shorthand() {
        assert_eq!(MetricSpec::parse("test").unwrap(), MetricSpec::Test);
        assert!(MetricSpec::parse(r#"{"kind":"constant","diag":[1.0,2.0,1.0]}"#).is_ok());
        assert!(MetricSpec::parse("round").is_err());
    }
}
