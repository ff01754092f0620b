//! Experiment configuration: defaults, plain key=value config files, and
//! the canonical form hashed into every report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cablesys::graph::Family;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub generation: Option<u32>,
    pub mesh_k: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub budget_nodes: u64,
    pub p_values: Vec<f64>,
    pub epsilon: Option<f64>,
    pub samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: Family::Sierpinski,
            generation: None,
            mesh_k: 2,
            seed: 2024,
            out: PathBuf::from("reports"),
            workers: 0,
            budget_nodes: 4_000_000,
            p_values: vec![1.5, 2.0, 4.0],
            epsilon: None,
            samples: 100,
        }
    }
}

impl ExperimentConfig {
    /// Canonical key=value form: sorted keys, one per line. Hashing this
    /// string identifies the configuration in reports; parsing it back
    /// round-trips exactly.
    pub fn canonical(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("family", self.family.name().to_string());
        if let Family::Vicsek { n_dim } = self.family {
            kv.insert("N", n_dim.to_string());
        }
        if let Some(g) = self.generation {
            kv.insert("gen", g.to_string());
        }
        kv.insert("mesh_k", self.mesh_k.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("out", self.out.display().to_string());
        kv.insert("workers", self.workers.to_string());
        kv.insert("budget_nodes", self.budget_nodes.to_string());
        kv.insert(
            "p_values",
            self.p_values
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if let Some(e) = self.epsilon {
            kv.insert("epsilon", e.to_string());
        }
        kv.insert("samples", self.samples.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        cablesys::report::config_hash(&self.canonical())
    }

    /// Apply one key=value assignment (config file line or flag mirror).
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match key {
            "family" => {
                self.family = match value {
                    "sierpinski" => Family::Sierpinski,
                    "vicsek" => {
                        let n = if let Family::Vicsek { n_dim } = self.family {
                            n_dim
                        } else {
                            2
                        };
                        Family::Vicsek { n_dim: n }
                    }
                    "line" => Family::Line,
                    other => bail!("unknown family '{other}'"),
                }
            }
            "N" => {
                let n: u32 = value.parse().context("N")?;
                if !matches!(self.family, Family::Vicsek { .. }) && n > 0 {
                    self.family = Family::Vicsek { n_dim: n };
                } else {
                    self.family = Family::Vicsek { n_dim: n };
                }
            }
            "gen" => self.generation = Some(value.parse().context("gen")?),
            "mesh_k" => self.mesh_k = value.parse().context("mesh_k")?,
            "seed" => self.seed = value.parse().context("seed")?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = value.parse().context("workers")?,
            "budget_nodes" => self.budget_nodes = value.parse().context("budget_nodes")?,
            "p_values" => {
                self.p_values = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .context("p_values")?;
            }
            "epsilon" => self.epsilon = Some(value.parse().context("epsilon")?),
            "samples" => self.samples = value.parse().context("samples")?,
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn generation_or_default(&self) -> u32 {
        self.generation
            .unwrap_or_else(|| cablesys::experiment::default_generation(self.family))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip_identical() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("family", "vicsek").unwrap();
        cfg.set("N", "3").unwrap();
        cfg.set("gen", "4").unwrap();
        cfg.set("epsilon", "0.2").unwrap();
        let canon = cfg.canonical();
        let mut back = ExperimentConfig::default();
        for line in canon.lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k, v).unwrap();
        }
        assert_eq!(cfg, back);
        assert_eq!(canon, back.canonical());
        assert_eq!(cfg.hash(), back.hash());
    }
}
