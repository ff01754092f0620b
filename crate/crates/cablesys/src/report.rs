//! Report containers and writers: inequality fits, heat-kernel sample rows,
//! operator-norm trends, in JSON for machines and CSV for plotting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One sampled instance of an inequality: lhs <= fitted_constant * rhs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub center: usize,
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Fit of one inequality over a battery of balls and samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityFit {
    pub name: String,
    /// exponents in play (alpha, beta, nu, q, p, ...)
    pub exponents: BTreeMap<String, f64>,
    pub samples: Vec<SampleRow>,
    /// sup of lhs/rhs over the valid samples (inf for lower-bound fits)
    pub fitted_constant: f64,
    /// smallest safety margin among the retained balls
    pub margin_min: f64,
    /// balls discarded because 2B crossed the truncation boundary
    pub skipped_margin: usize,
    /// slope of log(per-radius fit) vs log r, when a radius trend is scanned
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trend_slope: Option<f64>,
    /// per-radius fitted constants behind `trend_slope`
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub radius_fits: Vec<(f64, f64)>,
    /// free-text provenance of the fitted constant
    pub provenance: String,
}

impl InequalityFit {
    pub fn new(name: impl Into<String>) -> Self {
        InequalityFit {
            name: name.into(),
            exponents: BTreeMap::new(),
            samples: Vec::new(),
            fitted_constant: f64::NAN,
            margin_min: f64::INFINITY,
            skipped_margin: 0,
            trend_slope: None,
            radius_fits: Vec::new(),
            provenance: String::new(),
        }
    }

    pub fn with_exponent(mut self, key: &str, value: f64) -> Self {
        self.exponents.insert(key.to_string(), value);
        self
    }

    /// Sup of ratios over the samples.
    pub fn fit_sup(&mut self) -> f64 {
        self.fitted_constant = self
            .samples
            .iter()
            .map(|s| s.ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        self.fitted_constant
    }

    /// Inf of ratios (lower-bound style fits such as Faber-Krahn).
    pub fn fit_inf(&mut self) -> f64 {
        self.fitted_constant = self
            .samples
            .iter()
            .map(|s| s.ratio)
            .fold(f64::INFINITY, f64::min);
        self.fitted_constant
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "center,r,lhs,rhs,ratio")?;
        for s in &self.samples {
            writeln!(f, "{},{},{},{},{}", s.center, s.r, s.lhs, s.rhs, s.ratio)?;
        }
        Ok(())
    }
}

/// One heat-kernel sample: kernel value, gradient, time derivative and the
/// fitted bound at (x, y, t).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatSampleRow {
    pub family: String,
    pub generation: u32,
    pub k: u32,
    pub x: usize,
    pub y: usize,
    pub t: f64,
    pub d: f64,
    pub p: f64,
    pub grad_p: f64,
    pub dpdt: f64,
    pub bound_rhs: f64,
    pub ratio: f64,
}

pub fn write_heat_csv(path: &Path, rows: &[HeatSampleRow]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "family,generation,k,x,y,t,d,p,grad_p,dpdt,bound_rhs,ratio")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.family, r.generation, r.k, r.x, r.y, r.t, r.d, r.p, r.grad_p, r.dpdt, r.bound_rhs, r.ratio
        )?;
    }
    Ok(())
}

/// Operator-norm trend over increasing generations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendReport {
    pub name: String,
    pub p: f64,
    pub epsilon: f64,
    /// (generation, empirical norm)
    pub norms: Vec<(u32, f64)>,
    /// slope of log norm vs generation index
    pub slope: f64,
    pub verdict: String,
}

impl TrendReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "generation,p,epsilon,empirical_norm")?;
        for &(g, n) in &self.norms {
            writeln!(f, "{},{},{},{}", g, self.p, self.epsilon, n)?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    assert!(points.len() >= 2, "fit needs at least two points");
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

/// Slope of log y vs log x; NaN when fewer than two usable points remain.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite())
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if logs.len() < 2 {
        return f64::NAN;
    }
    linear_fit(&logs).0
}

/// Hex SHA-256 of a canonical configuration string; embedded in reports so
/// identical configs are recognizable byte-for-byte.
pub fn config_hash(canonical: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_and_slopes() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|i| {
                let x = i as f64;
                (x, 3.0 * x.powf(1.7))
            })
            .collect();
        assert!((loglog_slope(&pts) - 1.7).abs() < 1e-10);
        let (m, b) = linear_fit(&[(0.0, 1.0), (1.0, 3.0)]);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash("family=sierpinski gen=5");
        let b = config_hash("family=sierpinski gen=5");
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_ne!(a, config_hash("family=sierpinski gen=6"));
    }
}
