//! Experiment configuration: one JSON file shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use specidem::generate::{self, RandomSpec};
use specidem::idempotent::{interior_grid, IdempotentConfig};
use specidem::io::{self, Pair};
use specidem::model::{PerturbedOperator, Side};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Random {
        n: usize,
        r: usize,
        #[serde(default)]
        coeff_scale: Option<f64>,
        /// Abscissa the spectrum is kept clear of.
        #[serde(default)]
        center: Option<f64>,
    },
    Geometric {
        n: usize,
        r: usize,
    },
    Power {
        n: usize,
        r: usize,
        p: f64,
    },
    LogCondition {
        n: usize,
        r: usize,
    },
    Cluster {
        n: usize,
        xi0: f64,
    },
}

impl Generator {
    pub fn build(&self, seed: u64) -> specidem::Result<PerturbedOperator> {
        match *self {
            Generator::Random {
                n,
                r,
                coeff_scale,
                center,
            } => {
                let mut spec = RandomSpec::new(n, r);
                if let Some(s) = coeff_scale {
                    spec.coeff_scale = s;
                }
                if let Some(c) = center {
                    spec.xi = c;
                }
                generate::random_instance(&spec, seed)
            }
            Generator::Geometric { n, r } => generate::geometric_family(n, r),
            Generator::Power { n, r, p } => generate::power_family(n, r, p),
            Generator::LogCondition { n, r } => generate::log_condition_family(n, r),
            Generator::Cluster { n, xi0 } => generate::cluster_family(n, xi0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideChoice {
    Plus,
    Minus,
    #[default]
    Both,
}

impl SideChoice {
    pub fn sides(self) -> Vec<Side> {
        match self {
            SideChoice::Plus => vec![Side::Plus],
            SideChoice::Minus => vec![Side::Minus],
            SideChoice::Both => vec![Side::Plus, Side::Minus],
        }
    }
}

/// `count` interior points of `(lo, hi)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbscissaGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    pub rank: usize,
    /// Nodes timed on the dense route when it is extrapolated.
    pub dense_nodes: usize,
    /// Largest `N` for which the dense route runs on every node.
    pub full_dense_max: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            sizes: vec![256],
            rank: 2,
            dense_nodes: 4,
            full_dense_max: 512,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Instance file; relative paths are taken from the config's directory.
    pub instance: Option<PathBuf>,
    pub generator: Option<Generator>,
    pub seed: u64,
    pub xi: Vec<f64>,
    pub grid: Option<AbscissaGrid>,
    pub side: SideChoice,
    /// Relative quadrature tolerance.
    pub tol: Option<f64>,
    pub order: Option<usize>,
    pub max_depth: Option<usize>,
    /// Summability gate threshold.
    pub threshold: Option<f64>,
    /// Cap on the weighted sums of the decomposability test.
    pub delta_cap: Option<f64>,
    /// Compare against the dense oracle; defaults to `N ≤ 512`.
    pub oracle: Option<bool>,
    pub cert_tol: Option<f64>,
    /// Vector to certify; a range vector `J y` with random `y` when absent.
    pub vector: Option<Vec<Pair>>,
    /// Single bundle to verify (with `instance` or `generator`).
    pub bundle: Option<PathBuf>,
    /// Directory of `instance.json` + `bundle*.json` subdirectories.
    pub corpus: Option<PathBuf>,
    pub bench: BenchSection,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.instance,
            &mut cfg.bundle,
            &mut cfg.corpus,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn operator(&self) -> anyhow::Result<PerturbedOperator> {
        match (&self.instance, &self.generator) {
            (Some(path), None) => io::read_instance(path)
                .with_context(|| format!("loading instance {}", path.display())),
            (None, Some(g)) => Ok(g.build(self.seed)?),
            (Some(_), Some(_)) => bail!("config names both an instance file and a generator"),
            (None, None) => bail!("config names neither an instance file nor a generator"),
        }
    }

    /// Explicit `xi` list, else the grid, else 101 points of the admissible range.
    pub fn abscissae(&self, op: &PerturbedOperator) -> Vec<f64> {
        if !self.xi.is_empty() {
            return self.xi.clone();
        }
        match &self.grid {
            Some(g) => interior_grid(g.lo, g.hi, g.count),
            None => {
                let (a, b) = op.spectrum.admissible_range();
                interior_grid(a, b, 101)
            }
        }
    }

    pub fn idempotent(&self) -> IdempotentConfig {
        let mut c = IdempotentConfig::default();
        if let Some(t) = self.tol {
            c.quad.tol = t;
        }
        if let Some(o) = self.order {
            c.quad.order = o;
        }
        if let Some(d) = self.max_depth {
            c.quad.max_depth = d;
        }
        if let Some(cap) = self.delta_cap {
            c.delta.cap = cap;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"instance": "inst.json", "out": "/abs/out", "side": "minus"}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert_eq!(cfg.instance.unwrap(), dir.path().join("inst.json"));
        assert_eq!(cfg.out.unwrap(), PathBuf::from("/abs/out"));
        assert_eq!(cfg.side.sides(), vec![Side::Minus]);
    }

    #[test]
    fn exactly_one_instance_source() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.operator().is_err());
        cfg.generator = Some(Generator::Geometric { n: 5, r: 1 });
        assert_eq!(cfg.operator().unwrap().n(), 5);
        cfg.instance = Some("x.json".into());
        assert!(cfg.operator().is_err());
    }

    #[test]
    fn abscissae_prefer_the_explicit_list() {
        let op = Generator::Geometric { n: 5, r: 1 }.build(0).unwrap();
        let mut cfg = ExperimentConfig {
            grid: Some(AbscissaGrid {
                lo: -0.5,
                hi: 0.5,
                count: 3,
            }),
            ..Default::default()
        };
        assert_eq!(cfg.abscissae(&op), interior_grid(-0.5, 0.5, 3));
        cfg.xi = vec![0.1];
        assert_eq!(cfg.abscissae(&op), vec![0.1]);
        cfg.tol = Some(1e-6);
        cfg.order = Some(8);
        let ic = cfg.idempotent();
        assert_eq!((ic.quad.tol, ic.quad.order), (1e-6, 8));
    }
}
