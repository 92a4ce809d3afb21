//! Chart configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calculus::CLOSEDNESS_TOL;
use super::potential::{Potential, PotentialChart};
use crate::error::{GeometryError, Result};
use crate::sampling;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub closedness: f64,
    pub gradient: f64,
    pub compatibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            closedness: CLOSEDNESS_TOL,
            gradient: 1e-6,
            compatibility: 1e-9,
        }
    }
}

fn default_grid() -> usize {
    200
}

fn default_fibre_box() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Fibre coordinates are sampled from `[-fibre_box, fibre_box]`.
    #[serde(default = "default_fibre_box")]
    pub fibre_box: f64,
    pub domain: Domain,
    pub potential: Potential,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ChartConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GeometryError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeometryError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn chart(&self) -> Result<PotentialChart> {
        PotentialChart::new(
            self.n,
            self.potential.clone(),
            self.domain.lower.clone(),
            self.domain.upper.clone(),
        )
    }

    /// Low-discrepancy points of the `3n`-dimensional chart.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut lo = self.domain.lower.clone();
        let mut hi = self.domain.upper.clone();
        lo.extend(std::iter::repeat(-self.fibre_box).take(2 * n));
        hi.extend(std::iter::repeat(self.fibre_box).take(2 * n));
        sampling::into_box(&sampling::halton(3 * n, self.grid, self.seed), &lo, &hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
n = 1
seed = 3
grid = 10

[domain]
lower = [0.5]
upper = [2.0]

[potential]
kind = "polynomial"
terms = [{ coef = 0.08333333333333333, powers = [4] }]
"#;

    #[test]
    fn parses_and_samples() {
        let c = ChartConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(c.tolerances, Tolerances::default());
        let pts = c.grid_points();
        assert_eq!(pts.len(), 10);
        assert!(pts
            .iter()
            .all(|p| p.len() == 3 && (0.5..=2.0).contains(&p[0])));
        assert!(c.chart().is_ok());
    }

    #[test]
    fn nested_potentials_parse() {
        let text = r#"
n = 2
[domain]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
[potential]
kind = "sum"
parts = [{ kind = "log-sum-exp" }, { kind = "polynomial", terms = [{ coef = 0.5, powers = [2, 0] }, { coef = 0.5, powers = [0, 2] }] }]
"#;
        let c = ChartConfig::from_toml_str(text).unwrap();
        assert!(matches!(c.potential, Potential::Sum { .. }));
        assert!(ChartConfig::from_toml_str("n = 1").is_err());
    }
}
