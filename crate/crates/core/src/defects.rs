//! Macroscopic defects `(x_j, beta_j, lambda_j)` and their classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::RateFamily;

/// Exponents closer than this are treated as equal when classifying.
const BETA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    /// Location on the unit torus, in `[0, 1)`.
    pub x: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl DefectSpec {
    pub fn new(x: f64, beta: f64, lambda: f64) -> Self {
        DefectSpec { x, beta, lambda }
    }

    /// Rate divisor `lambda N^beta` on an `n`-site lattice.
    pub fn divisor(&self, n: usize) -> f64 {
        self.lambda * (n as f64).powf(self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectClass {
    /// Super-slow: macroscopically infinite mass, Dirichlet pin.
    Super,
    /// Critical: carries an atom of order-one mass.
    Critical,
    /// Sub-critical: invisible in the limit.
    Sub,
}

pub fn classify(spec: &DefectSpec, family: RateFamily) -> DefectClass {
    match family {
        RateFamily::PowerAlpha(alpha) => {
            if (spec.beta - alpha).abs() <= BETA_TOL {
                DefectClass::Critical
            } else if spec.beta > alpha {
                DefectClass::Super
            } else {
                DefectClass::Sub
            }
        }
        RateFamily::Bounded => {
            if spec.beta.abs() <= BETA_TOL && spec.lambda > 1.0 {
                DefectClass::Critical
            } else {
                DefectClass::Sub
            }
        }
    }
}

/// An ordered, validated list of defects with their classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectSet {
    defects: Vec<DefectSpec>,
    classes: Vec<DefectClass>,
}

impl DefectSet {
    pub fn empty() -> Self {
        DefectSet { defects: Vec::new(), classes: Vec::new() }
    }

    pub fn new(defects: Vec<DefectSpec>, family: RateFamily) -> Result<Self> {
        for (index, d) in defects.iter().enumerate() {
            let bad = |reason: String| Error::Defect { index, reason };
            if !(0.0..1.0).contains(&d.x) {
                return Err(bad(format!("location {} not in [0, 1)", d.x)));
            }
            if !(d.lambda > 0.0) || !d.lambda.is_finite() {
                return Err(bad(format!("lambda {} must be positive", d.lambda)));
            }
            if !d.beta.is_finite() {
                return Err(bad("beta must be finite".into()));
            }
            if family == RateFamily::Bounded && d.beta > BETA_TOL {
                return Err(bad(format!("bounded rates need beta <= 0, got {}", d.beta)));
            }
            if let Some(other) = defects[..index].iter().position(|e| e.x == d.x) {
                return Err(bad(format!("same location as defect {other}")));
            }
        }
        let classes = defects.iter().map(|d| classify(d, family)).collect();
        Ok(DefectSet { defects, classes })
    }

    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }

    pub fn get(&self, j: usize) -> (&DefectSpec, DefectClass) {
        (&self.defects[j], self.classes[j])
    }

    pub fn specs(&self) -> &[DefectSpec] {
        &self.defects
    }

    pub fn classes(&self) -> &[DefectClass] {
        &self.classes
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &DefectSpec, DefectClass)> {
        self.defects
            .iter()
            .zip(&self.classes)
            .enumerate()
            .map(|(j, (d, c))| (j, d, *c))
    }

    pub fn of_class(&self, class: DefectClass) -> impl Iterator<Item = (usize, &DefectSpec)> {
        self.iter().filter(move |(_, _, c)| *c == class).map(|(j, d, _)| (j, d))
    }

    /// Lattice sites `floor(x_j N)`; two defects on one site are rejected.
    pub fn lattice_sites(&self, n: usize) -> Result<Vec<usize>> {
        let sites: Vec<usize> = self
            .defects
            .iter()
            .map(|d| ((d.x * n as f64).floor() as usize).min(n - 1))
            .collect();
        check_distinct(&sites, n)?;
        Ok(sites)
    }

    /// Nearest nodes of the grid `i / m`.
    pub fn grid_nodes(&self, m: usize) -> Result<Vec<usize>> {
        let nodes: Vec<usize> = self
            .defects
            .iter()
            .map(|d| ((d.x * m as f64).round() as usize) % m)
            .collect();
        check_distinct(&nodes, m)?;
        Ok(nodes)
    }

    /// `max lambda_j` over critical defects, 1 when there are none.
    pub fn lambda_max(&self) -> f64 {
        self.of_class(DefectClass::Critical)
            .map(|(_, d)| d.lambda)
            .fold(1.0, f64::max)
    }
}

fn check_distinct(sites: &[usize], size: usize) -> Result<()> {
    for (b, sb) in sites.iter().enumerate() {
        if let Some(a) = sites[..b].iter().position(|sa| sa == sb) {
            return Err(Error::DefectCollision { first: a, second: b, site: *sb, size });
        }
    }
    Ok(())
}
