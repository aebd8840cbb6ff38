//! Generic local phase oracles: `|x⟩ ↦ e^{i Σ_y c_{x,y} g(f(y)/2^m)} |x⟩`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::FunctionTable;
use crate::error::{Error, Result};

/// Slack allowed when comparing user-supplied `B` and `C` to exact values.
const BOUND_SLACK: f64 = 1e-12;

/// Shape function `g` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GPreset {
    /// `g(t) = 2πt`.
    Linear,
    /// `g(t) = sin(2πt)`.
    Sine,
}

impl GPreset {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            GPreset::Linear => TAU * t,
            GPreset::Sine => (TAU * t).sin(),
        }
    }

    /// `sup_{t ∈ [0,1]} |g'(t)|`.
    pub fn derivative_bound(self) -> f64 {
        TAU
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(GPreset::Linear),
            "sine" => Ok(GPreset::Sine),
            other => Err(Error::InvalidInput(format!("unknown g preset '{other}' (expected linear or sine)"))),
        }
    }
}

/// Parameters of a generic local phase oracle for one input width `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlpSpec {
    pub g: GPreset,
    /// Derivative bound of `g`; never below the preset's exact value.
    #[serde(rename = "B")]
    pub b: f64,
    /// Coefficient bound, `max |c_{x,y}| ≤ C`.
    #[serde(rename = "C")]
    pub c: f64,
    pub p_bound: usize,
    /// `coeffs[x][y] = c_{x,y}`.
    pub coeffs: Vec<Vec<f64>>,
}

/// `min(|y - x|, size - |y - x|)`.
pub fn cyclic_distance(x: usize, y: usize, size: usize) -> usize {
    let d = x.abs_diff(y);
    d.min(size - d)
}

impl GlpSpec {
    /// Builds a spec with `B` from the preset and `C = max |c_{x,y}|`.
    pub fn new(g: GPreset, p_bound: usize, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let c = coeffs.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let spec = Self { g, b: g.derivative_bound(), c, p_bound, coeffs };
        spec.check_shape()?;
        Ok(spec)
    }

    /// `c_{x,y} = scale·δ_{xy}` on `2^n` points.
    pub fn diagonal(n: usize, g: GPreset, scale: f64) -> Result<Self> {
        let size = 1usize << n;
        let coeffs = (0..size)
            .map(|x| (0..size).map(|y| if x == y { scale } else { 0.0 }).collect())
            .collect();
        Self::new(g, 0, coeffs)
    }

    /// `c_{x,y} = scale` for every pair within cyclic distance `p_bound`.
    pub fn banded(n: usize, g: GPreset, p_bound: usize, scale: f64) -> Result<Self> {
        let size = 1usize << n;
        let coeffs = (0..size)
            .map(|x| {
                (0..size)
                    .map(|y| if cyclic_distance(x, y, size) <= p_bound { scale } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(g, p_bound, coeffs)
    }

    /// Number of points the coefficient matrix covers.
    pub fn size(&self) -> usize {
        self.coeffs.len()
    }

    fn check_shape(&self) -> Result<()> {
        let size = self.coeffs.len();
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::InvalidInput(format!("coefficient matrix has {size} rows, expected a power of two")));
        }
        if let Some(row) = self.coeffs.iter().position(|r| r.len() != size) {
            return Err(Error::InvalidInput(format!("coefficient row {row} does not have {size} entries")));
        }
        if self.coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coefficient matrix has non-finite entries".into()));
        }
        Ok(())
    }

    /// Checks shape, the declared bounds and the band condition for `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.check_shape()?;
        let size = 1usize << n;
        if self.size() != size {
            return Err(Error::Dimension(format!(
                "coefficient matrix is {0}×{0} but n = {n} needs {size}×{size}",
                self.size()
            )));
        }
        let exact_b = self.g.derivative_bound();
        if !(self.b >= exact_b - BOUND_SLACK) {
            return Err(Error::InvalidInput(format!("B = {} is below sup|g'| = {exact_b}", self.b)));
        }
        let max_c = self.coeffs.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(self.c >= max_c - BOUND_SLACK) {
            return Err(Error::InvalidInput(format!("C = {} is below max |c| = {max_c}", self.c)));
        }
        for (x, row) in self.coeffs.iter().enumerate() {
            for (y, &v) in row.iter().enumerate() {
                if v != 0.0 && cyclic_distance(x, y, size) > self.p_bound {
                    return Err(Error::BandViolation { x, y, value: v });
                }
            }
        }
        Ok(())
    }

    /// Phase `Σ_y c_{x,y} g(f(y)/2^m)` applied to `|x⟩`, not reduced mod 2π.
    pub fn phase(&self, x: usize, f: &FunctionTable) -> f64 {
        let scale = f.codomain_size() as f64;
        self.coeffs[x]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(y, &c)| c * self.g.eval(f.eval(y) as f64 / scale))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_distance_wraps() {
        assert_eq!(cyclic_distance(0, 7, 8), 1);
        assert_eq!(cyclic_distance(2, 5, 8), 3);
        assert_eq!(cyclic_distance(4, 4, 8), 0);
    }

    #[test]
    fn band_violation_is_reported() {
        let mut spec = GlpSpec::banded(3, GPreset::Linear, 1, 1.0).unwrap();
        spec.validate(3).unwrap();
        spec.coeffs[0][3] = 0.5;
        assert!(matches!(spec.validate(3), Err(Error::BandViolation { x: 0, y: 3, .. })));
        // Distance 1 across the seam stays inside the band.
        spec.coeffs[0][3] = 0.0;
        spec.coeffs[0][7] = 0.5;
        spec.validate(3).unwrap();
    }

    #[test]
    fn declared_bounds_checked() {
        let mut spec = GlpSpec::diagonal(1, GPreset::Sine, 2.0).unwrap();
        assert_eq!(spec.c, 2.0);
        spec.c = 1.0;
        assert!(spec.validate(1).is_err());
        spec.c = 3.0;
        spec.b = 1.0;
        assert!(spec.validate(1).is_err());
    }

    #[test]
    fn json_field_names() {
        let text = r#"{"g": "sine", "B": 6.3, "C": 1.0, "p_bound": 0, "coeffs": [[1.0, 0.0], [0.0, 1.0]]}"#;
        let spec: GlpSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.g, GPreset::Sine);
        spec.validate(1).unwrap();
        let v = serde_json::to_value(&spec).unwrap();
        assert!(v.get("B").is_some() && v.get("C").is_some());
    }
}
