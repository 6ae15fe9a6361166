//! Case runners for the cantilever beam and the biaxial tissue, run
//! configuration and result files.

mod beam;
mod config;
mod patch;
mod run;
mod tissue;

pub use beam::{beam_nrmsd, data_driven_curve, reference_curve, BeamSpec, DeflectionCurve};
pub use config::{
    AutoencoderSpec, CaseKind, DatasetSource, RunConfig, SolverKind, SolverSpec, TissueCase,
    Tolerances,
};
pub use patch::{PatchReport, PatchSpec};
pub use run::{
    case_discretization, run_beam_case, run_patch_case, run_tissue_case, tissue_protocols,
    write_iterations, write_voronoi, BeamResult, ProtocolResult, TissueResult, DATASET_FILE,
    DEFLECTION_FILE, ITERATIONS_FILE, MODEL_FILE, NRMSD_FILE, PATCH_FILE, PROTOCOL_NRMSD_FILE,
    VORONOI_FILE,
};
pub use tissue::{
    predicted_curve, protocol_nrmsd, protocol_spec, CasePreset, FungSurrogate, ProtocolRecord,
    ProtocolSpec, StressStrainCurve, TissueSpec, PROTOCOL_TABLE, SPECIMEN_SIZE,
};

use crate::error::{Error, Result};

/// `√(Σ(aᵢ − bᵢ)² / N) / normalizer`.
pub fn nrmsd(predicted: &[f64], reference: &[f64], normalizer: f64) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.is_empty() {
        return Err(Error::InvalidInput(format!(
            "nrmsd needs two non-empty sequences of equal length, got {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    if !(normalizer > 0.0) {
        return Err(Error::InvalidInput(format!(
            "nrmsd normalizer must be positive, got {normalizer}"
        )));
    }
    let ss: f64 = predicted
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / predicted.len() as f64).sqrt() / normalizer)
}

/// Piecewise-linear interpolation of `(x, y)` at `at`; `x` must increase and
/// every query must lie in `[x₀, x_last]`.
pub fn interpolate_curve(x: &[f64], y: &[f64], at: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(
            "curve needs at least two points with matching lengths".into(),
        ));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("curve abscissae must increase".into()));
    }
    let (lo, hi) = (x[0], x[x.len() - 1]);
    let tol = 1e-12 * (hi - lo);
    at.iter()
        .map(|&t| {
            if t < lo - tol || t > hi + tol {
                return Err(Error::InvalidInput(format!(
                    "{t} lies outside the curve range [{lo}, {hi}]"
                )));
            }
            let k = x.partition_point(|&v| v < t).clamp(1, x.len() - 1);
            let s = (t - x[k - 1]) / (x[k] - x[k - 1]);
            Ok(y[k - 1] + s * (y[k] - y[k - 1]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nrmsd_examples() {
        let a = [0.3, 0.5, 0.9];
        assert_eq!(nrmsd(&a, &a, 10.0).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((nrmsd(&b, &a, 10.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(nrmsd(&a, &a[..2], 10.0).is_err());
        assert!(nrmsd(&a, &a, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn nrmsd_scales_with_the_error(
            r in proptest::collection::vec(-1.0..1.0f64, 1..50),
            e in proptest::collection::vec(-1.0..1.0f64, 50),
            c in 0.01..100.0f64,
        ) {
            let p: Vec<f64> = r.iter().zip(&e).map(|(a, b)| a + b).collect();
            let q: Vec<f64> = r.iter().zip(&e).map(|(a, b)| a + c * b).collect();
            let base = nrmsd(&p, &r, 3.0).unwrap();
            let scaled = nrmsd(&q, &r, 3.0).unwrap();
            prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + c * base));
        }
    }

    #[test]
    fn interpolation_hits_nodes_and_midpoints() {
        let x = [0.0, 1.0, 3.0];
        let y = [0.0, 2.0, 0.0];
        let v = interpolate_curve(&x, &y, &[0.0, 0.5, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 2.0, 1.0, 0.0]);
        assert!(interpolate_curve(&x, &y, &[3.5]).is_err());
        assert!(interpolate_curve(&[0.0, 0.0], &[1.0, 2.0], &[0.0]).is_err());
    }
}
