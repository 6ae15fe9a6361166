//! Material local step: nearest data (DMDD), local convex hull projection
//! (LCDD) and Shepard reconstruction in an autoencoder embedding (AEDD).

mod knn;
mod nnls;

pub use knn::{Neighbor, PointSet};
pub use nnls::nnls;

use std::fmt;
use std::str::FromStr;

use crate::autoencoder::TrainedAutoencoder;
use crate::error::{Error, Result};
use crate::phase::{MaterialDataset, PhaseState, WeightMatrix, PHASE_DIM};

/// Distances below this (in embedding units) count as coincident points.
pub const SHEPARD_EPS: f64 = 1e-12;

/// Default neighbor count.
pub const DEFAULT_K: usize = 6;

/// Encoded material dataset, index-aligned with its source.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub points: PointSet,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

pub fn build_embedding_set(
    model: &TrainedAutoencoder,
    dataset: &MaterialDataset,
) -> Result<EmbeddingSet> {
    let rows = model.embed_dataset(dataset)?;
    Ok(EmbeddingSet {
        points: PointSet::new(rows, model.embedding_dim())?,
    })
}

/// Shepard weights `φ_I / Σφ_J`, `φ_I = 1/d_I²`, from squared distances.
/// A distance below [`SHEPARD_EPS`] yields the indicator of the closest such neighbor.
pub fn shepard_weights_from_sq_dists(sq_dists: &[f64]) -> Result<Vec<f64>> {
    if sq_dists.is_empty() {
        return Err(Error::InvalidParameter(
            "Shepard interpolation needs at least one neighbor".into(),
        ));
    }
    let eps2 = SHEPARD_EPS * SHEPARD_EPS;
    let mut closest: Option<usize> = None;
    for (i, &d) in sq_dists.iter().enumerate() {
        if d < eps2 && closest.is_none_or(|c| d < sq_dists[c]) {
            closest = Some(i);
        }
    }
    let mut w = vec![0.0; sq_dists.len()];
    if let Some(c) = closest {
        w[c] = 1.0;
        return Ok(w);
    }
    let mut total = 0.0;
    for (wi, d) in w.iter_mut().zip(sq_dists) {
        *wi = 1.0 / d;
        total += *wi;
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Shepard weights of `query` with respect to row-major `neighbors`.
pub fn shepard_weights(query: &[f64], neighbors: &[f64]) -> Result<Vec<f64>> {
    let dim = query.len();
    if dim == 0 || neighbors.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "{} neighbor values do not match query dimension {dim}",
            neighbors.len()
        )));
    }
    let d2: Vec<f64> = neighbors
        .chunks_exact(dim)
        .map(|p| p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    shepard_weights_from_sq_dists(&d2)
}

fn combine(dataset: &MaterialDataset, idx: &[usize], weights: &[f64]) -> PhaseState {
    let mut z = [0.0; PHASE_DIM];
    for (&i, &c) in idx.iter().zip(weights) {
        for (zj, pj) in z.iter_mut().zip(dataset.get(i).to_array()) {
            *zj += c * pj;
        }
    }
    PhaseState::from_array(z)
}

fn metric_set(dataset: &MaterialDataset, w: &WeightMatrix) -> PointSet {
    let rows: Vec<f64> = dataset
        .points()
        .iter()
        .flat_map(|p| w.metric_coordinates(p))
        .collect();
    PointSet::new(rows, PHASE_DIM).expect("finite dataset")
}

/// LCDD projection in metric coordinates: coefficients over the `k` nearest points.
fn lcdd_coefficients(
    metric: &PointSet,
    yz: &[f64; PHASE_DIM],
    k: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let nn = metric.knn(yz, k)?;
    let idx: Vec<usize> = nn.iter().map(|n| n.0).collect();
    if k == 1 {
        return Ok((idx, vec![1.0]));
    }
    // rows 0..6: centered data (y_I − y_z); row 6: penalty row for Σc = 1
    let m = PHASE_DIM + 1;
    let mut a = vec![0.0; m * k];
    let mut fro = 0.0;
    for (j, &i) in idx.iter().enumerate() {
        for (r, (p, q)) in metric.point(i).iter().zip(yz).enumerate() {
            let v = p - q;
            a[r * k + j] = v;
            fro += v * v;
        }
    }
    let rho = if fro > 0.0 { 1e4 * fro } else { 1.0 };
    let sr = rho.sqrt();
    for j in 0..k {
        a[PHASE_DIM * k + j] = sr;
    }
    let mut b = vec![0.0; m];
    b[PHASE_DIM] = sr;
    let mut c = nnls(&a, m, k, &b, 30 * k)?;
    let sum: f64 = c.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::LocalSolver(format!(
            "degenerate convex combination (sum {sum})"
        )));
    }
    c.iter_mut().for_each(|v| *v /= sum);
    Ok((idx, c))
}

/// Nearest dataset point under the phase metric (lowest index on ties).
pub fn dmdd_local(z: &PhaseState, dataset: &MaterialDataset, w: &WeightMatrix) -> PhaseState {
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in dataset.points().iter().enumerate() {
        let d = crate::phase::phase_distance_sq(z, p, w);
        if d < best.1 {
            best = (i, d);
        }
    }
    *dataset.get(best.0)
}

/// Projection of `z` onto the convex hull of its `k` nearest dataset points.
pub fn lcdd_local(
    z: &PhaseState,
    dataset: &MaterialDataset,
    w: &WeightMatrix,
    k: usize,
) -> Result<PhaseState> {
    let metric = metric_set(dataset, w);
    let (idx, c) = lcdd_coefficients(&metric, &w.metric_coordinates(z), k)?;
    Ok(combine(dataset, &idx, &c))
}

fn embedding_neighbors(
    z: &PhaseState,
    model: &TrainedAutoencoder,
    emb: &EmbeddingSet,
    k: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let q = model.encode_state(z)?;
    let nn = emb.points.knn(&q, k)?;
    let d2: Vec<f64> = nn.iter().map(|n| n.1).collect();
    let weights = shepard_weights_from_sq_dists(&d2)?;
    Ok((nn.into_iter().map(|n| n.0).collect(), weights))
}

fn check_aligned(emb: &EmbeddingSet, dataset: &MaterialDataset) -> Result<()> {
    if emb.len() != dataset.len() {
        return Err(Error::Shape(format!(
            "embedding set has {} points, dataset has {}",
            emb.len(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Encode, interpolate embeddings with Shepard weights, decode.
pub fn aedd_solver_i(
    z: &PhaseState,
    model: &TrainedAutoencoder,
    emb: &EmbeddingSet,
    dataset: &MaterialDataset,
    k: usize,
) -> Result<PhaseState> {
    check_aligned(emb, dataset)?;
    let (idx, weights) = embedding_neighbors(z, model, emb, k)?;
    decode_combination(model, emb, &idx, &weights)
}

fn decode_combination(
    model: &TrainedAutoencoder,
    emb: &EmbeddingSet,
    idx: &[usize],
    weights: &[f64],
) -> Result<PhaseState> {
    let mut y = vec![0.0; emb.dim()];
    for (&i, &c) in idx.iter().zip(weights) {
        for (yj, pj) in y.iter_mut().zip(emb.points.point(i)) {
            *yj += c * pj;
        }
    }
    model.decode_to_state(&y)
}

/// Encode, then apply the embedding-space Shepard weights to the raw data points.
pub fn aedd_solver_ii(
    z: &PhaseState,
    model: &TrainedAutoencoder,
    emb: &EmbeddingSet,
    dataset: &MaterialDataset,
    k: usize,
) -> Result<PhaseState> {
    check_aligned(emb, dataset)?;
    let (idx, weights) = embedding_neighbors(z, model, emb, k)?;
    Ok(combine(dataset, &idx, &weights))
}

/// Local solver variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalSolverKind {
    Dmdd,
    Lcdd,
    AeddI,
    AeddII,
}

impl LocalSolverKind {
    pub fn needs_model(self) -> bool {
        matches!(self, LocalSolverKind::AeddI | LocalSolverKind::AeddII)
    }
}

impl FromStr for LocalSolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmdd" => Ok(Self::Dmdd),
            "lcdd" => Ok(Self::Lcdd),
            "aedd1" | "aedd_i" | "aedd-i" => Ok(Self::AeddI),
            "aedd" | "aedd2" | "aedd_ii" | "aedd-ii" => Ok(Self::AeddII),
            _ => Err(Error::Config(format!(
                "unknown local solver `{s}` (expected dmdd, lcdd, aedd1 or aedd2)"
            ))),
        }
    }
}

impl fmt::Display for LocalSolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dmdd => "dmdd",
            Self::Lcdd => "lcdd",
            Self::AeddI => "aedd1",
            Self::AeddII => "aedd2",
        })
    }
}

/// Solver variant, neighbor count and (for AEDD) the trained model.
#[derive(Debug, Clone)]
pub struct LocalSolverChoice {
    pub kind: LocalSolverKind,
    pub k: usize,
    pub model: Option<TrainedAutoencoder>,
}

impl LocalSolverChoice {
    pub fn dmdd() -> Self {
        Self {
            kind: LocalSolverKind::Dmdd,
            k: 1,
            model: None,
        }
    }

    pub fn lcdd(k: usize) -> Self {
        Self {
            kind: LocalSolverKind::Lcdd,
            k,
            model: None,
        }
    }

    pub fn aedd(kind: LocalSolverKind, k: usize, model: TrainedAutoencoder) -> Self {
        Self {
            kind,
            k,
            model: Some(model),
        }
    }
}

/// Material state returned by a local step with the data points it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub state: PhaseState,
    pub neighbors: Vec<usize>,
}

/// A local solver with its search structures precomputed for one dataset.
#[derive(Debug, Clone)]
pub struct LocalSolver {
    kind: LocalSolverKind,
    k: usize,
    dataset: MaterialDataset,
    w: WeightMatrix,
    metric: Option<PointSet>,
    model: Option<TrainedAutoencoder>,
    emb: Option<EmbeddingSet>,
}

impl LocalSolver {
    pub fn new(
        choice: LocalSolverChoice,
        dataset: &MaterialDataset,
        w: &WeightMatrix,
    ) -> Result<Self> {
        let LocalSolverChoice { kind, k, model } = choice;
        let k = if kind == LocalSolverKind::Dmdd { 1 } else { k };
        if k < 1 || k > dataset.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} must lie in 1..={} for this dataset",
                dataset.len()
            )));
        }
        let (model, emb) = if kind.needs_model() {
            let model = model.ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "local solver {kind} requires a trained autoencoder"
                ))
            })?;
            let emb = build_embedding_set(&model, dataset)?;
            (Some(model), Some(emb))
        } else {
            (None, None)
        };
        let metric = (!kind.needs_model()).then(|| metric_set(dataset, w));
        Ok(Self {
            kind,
            k,
            dataset: dataset.clone(),
            w: w.clone(),
            metric,
            model,
            emb,
        })
    }

    pub fn kind(&self) -> LocalSolverKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dataset(&self) -> &MaterialDataset {
        &self.dataset
    }

    pub fn weight(&self) -> &WeightMatrix {
        &self.w
    }

    pub fn solve(&self, z: &PhaseState) -> Result<LocalResult> {
        match self.kind {
            LocalSolverKind::Dmdd => {
                let metric = self.metric.as_ref().unwrap();
                let (i, _) = metric.nearest(&self.w.metric_coordinates(z))?;
                Ok(LocalResult {
                    state: *self.dataset.get(i),
                    neighbors: vec![i],
                })
            }
            LocalSolverKind::Lcdd => {
                let metric = self.metric.as_ref().unwrap();
                let (idx, c) = lcdd_coefficients(metric, &self.w.metric_coordinates(z), self.k)?;
                Ok(LocalResult {
                    state: combine(&self.dataset, &idx, &c),
                    neighbors: idx,
                })
            }
            LocalSolverKind::AeddI | LocalSolverKind::AeddII => {
                let model = self.model.as_ref().unwrap();
                let emb = self.emb.as_ref().unwrap();
                let (idx, weights) = embedding_neighbors(z, model, emb, self.k)?;
                let state = if self.kind == LocalSolverKind::AeddI {
                    decode_combination(model, emb, &idx, &weights)?
                } else {
                    combine(&self.dataset, &idx, &weights)
                };
                if !state.is_finite() {
                    return Err(Error::LocalSolver("non-finite material state".into()));
                }
                Ok(LocalResult {
                    state,
                    neighbors: idx,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::build_weight_matrix_isotropic;

    #[test]
    fn shepard_examples() {
        let w = shepard_weights(&[0.0], &[-1.0, 1.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        let w = shepard_weights(&[0.0], &[1.0, 2.0]).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
        let w = shepard_weights(&[1.0, 1.0], &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
        assert!(shepard_weights(&[1.0], &[]).is_err());
    }

    #[test]
    fn dmdd_two_candidates() {
        let id = WeightMatrix::diagonal([1.0, 1.0, 1.0]).unwrap();
        let ds = MaterialDataset::from_points(
            vec![
                PhaseState::ZERO,
                PhaseState::new([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ],
            "t",
        )
        .unwrap();
        let z = PhaseState::new([0.9, 0.0, 0.0], [0.95, 0.0, 0.0]);
        assert_eq!(dmdd_local(&z, &ds, &id), *ds.get(1));
        let solver = LocalSolver::new(LocalSolverChoice::dmdd(), &ds, &id).unwrap();
        assert_eq!(solver.solve(&z).unwrap().neighbors, vec![1]);
    }

    #[test]
    fn lcdd_k1_and_segment_projection() {
        let w = build_weight_matrix_isotropic(4800.0, 0.0).unwrap();
        let a = PhaseState::new([0.01, 0.0, 0.0], [48.0, 0.0, 0.0]);
        let b = PhaseState::new([0.02, 0.0, 0.0], [96.0, 0.0, 0.0]);
        let ds = MaterialDataset::from_points(vec![a, b], "t").unwrap();
        let z = PhaseState::new([0.012, 0.0, 0.0], [80.0, 0.0, 0.0]);
        assert_eq!(lcdd_local(&z, &ds, &w, 1).unwrap(), a);
        // closed-form projection onto the segment in the weighted metric
        let ya = w.metric_coordinates(&a);
        let yb = w.metric_coordinates(&b);
        let yz = w.metric_coordinates(&z);
        let d: Vec<f64> = yb.iter().zip(&ya).map(|(p, q)| p - q).collect();
        let t = d
            .iter()
            .zip(yz.iter().zip(&ya))
            .map(|(di, (zi, ai))| di * (zi - ai))
            .sum::<f64>()
            / d.iter().map(|v| v * v).sum::<f64>();
        let t = t.clamp(0.0, 1.0);
        let got = lcdd_local(&z, &ds, &w, 2).unwrap();
        let expect_e = a.strain[0] + t * (b.strain[0] - a.strain[0]);
        let expect_s = a.stress[0] + t * (b.stress[0] - a.stress[0]);
        assert!((got.strain[0] - expect_e).abs() < 1e-8 * 0.02);
        assert!((got.stress[0] - expect_s).abs() < 1e-6 * 96.0);
    }

    #[test]
    fn solver_kind_parsing() {
        assert_eq!(
            "AEDD2".parse::<LocalSolverKind>().unwrap(),
            LocalSolverKind::AeddII
        );
        assert_eq!(
            "lcdd".parse::<LocalSolverKind>().unwrap(),
            LocalSolverKind::Lcdd
        );
        assert!("foo".parse::<LocalSolverKind>().is_err());
        assert_eq!(LocalSolverKind::AeddI.to_string(), "aedd1");
    }

    #[test]
    fn aedd_requires_model() {
        let w = build_weight_matrix_isotropic(1.0, 0.0).unwrap();
        let ds = MaterialDataset::from_points(vec![PhaseState::ZERO], "t").unwrap();
        let choice = LocalSolverChoice {
            kind: LocalSolverKind::AeddII,
            k: 1,
            model: None,
        };
        assert!(LocalSolver::new(choice, &ds, &w).is_err());
        assert!(LocalSolver::new(LocalSolverChoice::lcdd(2), &ds, &w).is_err());
    }
}
