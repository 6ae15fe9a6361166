use super::{population_std, MaterialDataset, PhaseState, PHASE_DIM};
use crate::error::{Error, Result};

const COMPONENT_NAMES: [&str; PHASE_DIM] = ["E11", "E22", "G12", "S11", "S22", "S12"];

/// Per-component affine map to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl StandardizationStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Shape(format!(
                "standardization mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if let Some(i) = std.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::DegenerateData(format!(
                "standard deviation of component {i} must be positive, got {}",
                std[i]
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput(
                "standardization mean is not finite".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    /// Statistics of row-major samples with `dim` components each.
    pub fn from_rows(rows: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {dim}",
                rows.len()
            )));
        }
        let n = rows.len() / dim;
        if n < 2 {
            return Err(Error::DegenerateData(
                "at least two points are required for standardization".into(),
            ));
        }
        let mut mean = Vec::with_capacity(dim);
        let mut std = Vec::with_capacity(dim);
        for c in 0..dim {
            let m = population_std(rows.iter().skip(c).step_by(dim).copied());
            if m.is_degenerate() {
                let name = if dim == PHASE_DIM {
                    COMPONENT_NAMES[c].to_string()
                } else {
                    c.to_string()
                };
                return Err(Error::DegenerateData(format!(
                    "component {name} is constant"
                )));
            }
            mean.push(m.mean);
            std.push(m.std);
        }
        Self::new(mean, std)
    }

    /// Zero mean, with strains scaled by `√c_i` and stresses by `1/√c_i` so that
    /// squared distances follow the diagonal weight `c`, and one common factor
    /// giving unit mean variance. Rows must hold six phase components.
    pub fn metric(rows: &[f64], c: [f64; 3]) -> Result<Self> {
        let comp = Self::from_rows(rows, PHASE_DIM)?;
        if let Some(i) = c.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "metric weight {i} must be positive, got {}",
                c[i]
            )));
        }
        let weight = |k: usize| {
            if k < 3 {
                c[k].sqrt()
            } else {
                1.0 / c[k - 3].sqrt()
            }
        };
        let spread: f64 = (0..PHASE_DIM)
            .map(|k| (comp.std[k] * weight(k)).powi(2))
            .sum::<f64>()
            / PHASE_DIM as f64;
        let scale = spread.sqrt();
        let std = (0..PHASE_DIM).map(|k| scale / weight(k)).collect();
        Self::new(comp.mean, std)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn apply_in_place(&self, z: &mut [f64]) {
        for ((v, m), s) in z.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert_in_place(&self, z: &mut [f64]) {
        for ((v, m), s) in z.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }

    /// Standardizes a phase state; requires six components.
    pub fn apply(&self, z: &PhaseState) -> [f64; PHASE_DIM] {
        debug_assert_eq!(self.dim(), PHASE_DIM);
        let mut a = z.to_array();
        self.apply_in_place(&mut a);
        a
    }

    pub fn invert(&self, x: &[f64; PHASE_DIM]) -> PhaseState {
        debug_assert_eq!(self.dim(), PHASE_DIM);
        let mut a = *x;
        self.invert_in_place(&mut a);
        PhaseState::from_array(a)
    }
}

pub fn compute_standardization(dataset: &MaterialDataset) -> Result<StandardizationStats> {
    StandardizationStats::from_rows(&dataset.to_rows(), PHASE_DIM)
}
