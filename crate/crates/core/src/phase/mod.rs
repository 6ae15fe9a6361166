//! Phase-space data model for plane problems.
//!
//! A phase state pairs a Green-Lagrange strain with a second Piola-Kirchhoff
//! stress, both in Voigt form. Strain stores the engineering shear `2·E12`
//! and stress stores `S12`, so the weight matrix acts as a plain 3×3 product.

mod generate;
mod io;
mod standardize;

pub use generate::{
    add_noise, generate_sparse_path_dataset, generate_svk_grid_dataset, uniform_grid,
};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_HEADER};
pub use standardize::{compute_standardization, StandardizationStats};

use crate::error::{Error, Result};

/// Dimension of the plane phase space (3 strain + 3 stress components).
pub const PHASE_DIM: usize = 6;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// One point `z = (E, S)` of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    /// `(E11, E22, 2·E12)`.
    pub strain: Vec3,
    /// `(S11, S22, S12)`.
    pub stress: Vec3,
}

impl PhaseState {
    pub const ZERO: PhaseState = PhaseState {
        strain: [0.0; 3],
        stress: [0.0; 3],
    };

    pub fn new(strain: Vec3, stress: Vec3) -> Self {
        Self { strain, stress }
    }

    pub fn from_array(z: [f64; PHASE_DIM]) -> Self {
        Self {
            strain: [z[0], z[1], z[2]],
            stress: [z[3], z[4], z[5]],
        }
    }

    pub fn to_array(&self) -> [f64; PHASE_DIM] {
        let [e1, e2, e3] = self.strain;
        let [s1, s2, s3] = self.stress;
        [e1, e2, e3, s1, s2, s3]
    }

    pub fn is_finite(&self) -> bool {
        self.strain
            .iter()
            .chain(self.stress.iter())
            .all(|v| v.is_finite())
    }

    /// Tensorial shear strain `E12`.
    pub fn tensor_shear_strain(&self) -> f64 {
        0.5 * self.strain[2]
    }
}

pub(crate) fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Lower Cholesky factor of a symmetric 3×3 matrix, `None` unless positive definite.
fn cholesky3(m: &Mat3) -> Option<Mat3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut sum = m[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn invert3(m: &Mat3) -> Option<Mat3> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    Some(inv)
}

/// Symmetric positive-definite metric `Ĉ` weighting the strain and stress distances.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    c: Mat3,
    c_inv: Mat3,
    /// Lower Cholesky factor of `c`.
    chol: Mat3,
}

impl WeightMatrix {
    pub fn new(c: Mat3) -> Result<Self> {
        let scale = c
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() || scale == 0.0 {
            return Err(Error::InvalidParameter(
                "weight matrix must be finite and non-zero".into(),
            ));
        }
        for i in 0..3 {
            for j in 0..i {
                if (c[i][j] - c[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "weight matrix is not symmetric (entries ({i},{j}) and ({j},{i}))"
                    )));
                }
            }
        }
        let chol = cholesky3(&c).ok_or_else(|| {
            Error::InvalidParameter("weight matrix is not positive definite".into())
        })?;
        let c_inv = invert3(&c)
            .ok_or_else(|| Error::InvalidParameter("weight matrix is singular".into()))?;
        Ok(Self { c, c_inv, chol })
    }

    pub fn diagonal(d: Vec3) -> Result<Self> {
        Self::new([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn c(&self) -> &Mat3 {
        &self.c
    }

    pub fn c_inv(&self) -> &Mat3 {
        &self.c_inv
    }

    /// `Ĉ · v`.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        mat_vec(&self.c, v)
    }

    /// `Ĉ⁻¹ · v`.
    pub fn apply_inv(&self, v: &Vec3) -> Vec3 {
        mat_vec(&self.c_inv, v)
    }

    /// Maps a phase state to coordinates in which the phase distance is
    /// `‖y(a) − y(b)‖²`: `y = (Lᵀ E, L⁻¹ S) / √2` with `Ĉ = L Lᵀ`.
    pub fn metric_coordinates(&self, z: &PhaseState) -> [f64; PHASE_DIM] {
        let l = &self.chol;
        let e = &z.strain;
        let s = &z.stress;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // Lᵀ E
        let ye = [
            l[0][0] * e[0] + l[1][0] * e[1] + l[2][0] * e[2],
            l[1][1] * e[1] + l[2][1] * e[2],
            l[2][2] * e[2],
        ];
        // L⁻¹ S by forward substitution
        let y0 = s[0] / l[0][0];
        let y1 = (s[1] - l[1][0] * y0) / l[1][1];
        let y2 = (s[2] - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
        [ye[0] * h, ye[1] * h, ye[2] * h, y0 * h, y1 * h, y2 * h]
    }

    /// Inverse of [`metric_coordinates`](Self::metric_coordinates).
    pub fn from_metric_coordinates(&self, y: &[f64; PHASE_DIM]) -> PhaseState {
        let l = &self.chol;
        let r2 = std::f64::consts::SQRT_2;
        let ye = [y[0] * r2, y[1] * r2, y[2] * r2];
        let ys = [y[3] * r2, y[4] * r2, y[5] * r2];
        // back substitution for Lᵀ E = ye
        let e2 = ye[2] / l[2][2];
        let e1 = (ye[1] - l[2][1] * e2) / l[1][1];
        let e0 = (ye[0] - l[1][0] * e1 - l[2][0] * e2) / l[0][0];
        let s = [
            l[0][0] * ys[0],
            l[1][0] * ys[0] + l[1][1] * ys[1],
            l[2][0] * ys[0] + l[2][1] * ys[1] + l[2][2] * ys[2],
        ];
        PhaseState::new([e0, e1, e2], s)
    }
}

/// Plane-strain isotropic weight matrix `E/(1−ν²)·diag-block(1, 1, (1−ν)/2)`.
pub fn build_weight_matrix_isotropic(
    young_modulus: f64,
    poisson_ratio: f64,
) -> Result<WeightMatrix> {
    if !(young_modulus > 0.0) || !young_modulus.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Young's modulus must be positive, got {young_modulus}"
        )));
    }
    if !(0.0..0.5).contains(&poisson_ratio) {
        return Err(Error::InvalidParameter(format!(
            "Poisson's ratio must lie in [0, 0.5), got {poisson_ratio}"
        )));
    }
    let f = young_modulus / (1.0 - poisson_ratio * poisson_ratio);
    WeightMatrix::diagonal([f, f, f * (1.0 - poisson_ratio) / 2.0])
}

const STRAIN_NAMES: [&str; 3] = ["E11", "E22", "G12"];
const STRESS_NAMES: [&str; 3] = ["S11", "S22", "S12"];

/// Diagonal weight matrix from the per-component ratio `std(S_i) / std(E_i)`.
pub fn build_weight_matrix_from_data(dataset: &MaterialDataset) -> Result<WeightMatrix> {
    if dataset.len() < 2 {
        return Err(Error::DegenerateData(
            "at least two points are required to estimate the weight matrix".into(),
        ));
    }
    let mut diag = [0.0; 3];
    for (i, d) in diag.iter_mut().enumerate() {
        let se = population_std(dataset.points().iter().map(|p| p.strain[i]));
        let ss = population_std(dataset.points().iter().map(|p| p.stress[i]));
        let degenerate = if se.is_degenerate() {
            Some(STRAIN_NAMES[i])
        } else if ss.is_degenerate() {
            Some(STRESS_NAMES[i])
        } else {
            None
        };
        if let Some(name) = degenerate {
            return Err(Error::DegenerateData(format!(
                "component {name} has zero variance"
            )));
        }
        *d = ss.std / se.std;
    }
    WeightMatrix::diagonal(diag)
}

pub(crate) struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    /// Zero spread, up to the rounding left by computing the mean.
    pub fn is_degenerate(&self) -> bool {
        !(self.std > 1e-12 * self.mean.abs()) || self.std == 0.0
    }
}

pub(crate) fn population_std(values: impl Iterator<Item = f64> + Clone) -> Moments {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Moments {
        mean,
        std: var.sqrt(),
    }
}

/// Energy-like squared distance `½ΔEᵀĈΔE + ½ΔSᵀĈ⁻¹ΔS`.
pub fn phase_distance_sq(a: &PhaseState, b: &PhaseState, w: &WeightMatrix) -> f64 {
    let de = [
        a.strain[0] - b.strain[0],
        a.strain[1] - b.strain[1],
        a.strain[2] - b.strain[2],
    ];
    let ds = [
        a.stress[0] - b.stress[0],
        a.stress[1] - b.stress[1],
        a.stress[2] - b.stress[2],
    ];
    0.5 * dot3(&de, &w.apply(&de)) + 0.5 * dot3(&ds, &w.apply_inv(&ds))
}

/// Provenance recorded alongside a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub noise_factor: f64,
    /// Loading-path id for every point, when the data was generated along paths.
    pub path_ids: Option<Vec<usize>>,
    pub source: String,
}

/// Ordered, non-empty collection of material states. The position of a point
/// is its identity for neighbor searches.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDataset {
    points: Vec<PhaseState>,
    pub meta: DatasetMeta,
}

impl MaterialDataset {
    pub fn new(points: Vec<PhaseState>, meta: DatasetMeta) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "material dataset must not be empty".into(),
            ));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dataset point {i} is not finite"
            )));
        }
        if let Some(ids) = &meta.path_ids {
            if ids.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} path ids for {} points",
                    ids.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, meta })
    }

    pub fn from_points(points: Vec<PhaseState>, source: &str) -> Result<Self> {
        Self::new(
            points,
            DatasetMeta {
                source: source.to_string(),
                ..DatasetMeta::default()
            },
        )
    }

    pub fn points(&self) -> &[PhaseState] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &PhaseState {
        &self.points[i]
    }

    /// Concatenates datasets in order; path ids become the index of the source dataset.
    pub fn concat(parts: &[MaterialDataset], source: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut ids = Vec::new();
        for (k, part) in parts.iter().enumerate() {
            points.extend_from_slice(part.points());
            ids.extend(std::iter::repeat_n(k, part.len()));
        }
        Self::new(
            points,
            DatasetMeta {
                path_ids: Some(ids),
                source: source.to_string(),
                ..DatasetMeta::default()
            },
        )
    }

    /// Row-major `len × 6` copy of the data.
    pub fn to_rows(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.to_array()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn beam_weight() -> WeightMatrix {
        build_weight_matrix_isotropic(4800.0, 0.0).unwrap()
    }

    #[test]
    fn isotropic_weight_matrix_values() {
        let w = beam_weight();
        assert_eq!(
            w.c(),
            &[[4800.0, 0.0, 0.0], [0.0, 4800.0, 0.0], [0.0, 0.0, 2400.0]]
        );

        let w = build_weight_matrix_isotropic(1.0, 0.0).unwrap();
        assert_eq!(w.c(), &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]]);

        let w = build_weight_matrix_isotropic(3000.0, 0.25).unwrap();
        let c = w.c();
        assert!((c[0][0] - 3200.0).abs() < 1e-9);
        assert!((c[1][1] - 3200.0).abs() < 1e-9);
        assert!((c[2][2] - 1200.0).abs() < 1e-9);
        assert_eq!(c[0][1], 0.0);
    }

    #[test]
    fn isotropic_weight_matrix_rejects_bad_parameters() {
        assert!(matches!(
            build_weight_matrix_isotropic(0.0, 0.1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build_weight_matrix_isotropic(-5.0, 0.1).is_err());
        assert!(build_weight_matrix_isotropic(100.0, 0.5).is_err());
        assert!(build_weight_matrix_isotropic(100.0, -0.1).is_err());
    }

    #[test]
    fn weight_inverse_is_accurate() {
        let w = WeightMatrix::new([[5.0, 1.0, 0.5], [1.0, 4.0, 0.2], [0.5, 0.2, 3.0]]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += w.c()[i][k] * w.c_inv()[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-10);
            }
        }
        assert!(WeightMatrix::new([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(WeightMatrix::new([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn weight_from_proportional_data() {
        let pts: Vec<_> = (0..7)
            .map(|i| {
                let e = [
                    0.001 * i as f64,
                    -0.002 * i as f64 + 0.01,
                    0.0005 * (i * i) as f64,
                ];
                PhaseState::new(e, [100.0 * e[0], 100.0 * e[1], 100.0 * e[2]])
            })
            .collect();
        let ds = MaterialDataset::from_points(pts, "test").unwrap();
        let w = build_weight_matrix_from_data(&ds).unwrap();
        for i in 0..3 {
            assert!((w.c()[i][i] - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weight_from_two_points() {
        let ds = MaterialDataset::from_points(
            vec![
                PhaseState::ZERO,
                PhaseState::new([0.02, 0.02, 0.02], [96.0, 96.0, 48.0]),
            ],
            "test",
        )
        .unwrap();
        let w = build_weight_matrix_from_data(&ds).unwrap();
        assert!((w.c()[0][0] - 4800.0).abs() < 1e-9);
        assert!((w.c()[1][1] - 4800.0).abs() < 1e-9);
        assert!((w.c()[2][2] - 2400.0).abs() < 1e-9);
        assert!((w.c_inv()[2][2] - 1.0 / 2400.0).abs() < 1e-15);
    }

    #[test]
    fn weight_from_constant_shear_is_degenerate() {
        let ds = MaterialDataset::from_points(
            vec![
                PhaseState::new([0.0, 0.1, 0.3], [1.0, 2.0, 3.0]),
                PhaseState::new([0.1, 0.2, 0.3], [2.0, 1.0, 4.0]),
            ],
            "test",
        )
        .unwrap();
        let err = build_weight_matrix_from_data(&ds).unwrap_err();
        assert!(err.to_string().contains("G12"), "{err}");
    }

    #[test]
    fn distance_examples() {
        let w = beam_weight();
        let a = PhaseState::new([0.003, -0.001, 0.002], [10.0, 4.0, -3.0]);
        assert_eq!(phase_distance_sq(&a, &a, &w), 0.0);

        let b = PhaseState::new([0.01, 0.0, 0.0], [0.0; 3]);
        assert!((phase_distance_sq(&b, &PhaseState::ZERO, &w) - 0.24).abs() < 1e-14);
        let c = PhaseState::new([0.0; 3], [48.0, 0.0, 0.0]);
        assert!((phase_distance_sq(&c, &PhaseState::ZERO, &w) - 0.24).abs() < 1e-14);
    }

    #[test]
    fn metric_coordinates_round_trip_and_distance() {
        let w = WeightMatrix::new([[5.0, 1.0, 0.5], [1.0, 4.0, 0.2], [0.5, 0.2, 3.0]]).unwrap();
        let a = PhaseState::new([0.3, -0.2, 0.1], [2.0, -1.0, 0.4]);
        let b = PhaseState::new([-0.1, 0.5, 0.2], [0.5, 1.5, -0.4]);
        let ya = w.metric_coordinates(&a);
        let yb = w.metric_coordinates(&b);
        let d: f64 = ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((d - phase_distance_sq(&a, &b, &w)).abs() < 1e-12);
        let back = w.from_metric_coordinates(&ya);
        for (x, y) in back.to_array().iter().zip(a.to_array()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn dataset_rejects_empty_and_non_finite() {
        assert!(MaterialDataset::from_points(vec![], "x").is_err());
        let bad = PhaseState::new([f64::NAN, 0.0, 0.0], [0.0; 3]);
        assert!(MaterialDataset::from_points(vec![bad], "x").is_err());
    }

    fn state() -> impl Strategy<Value = PhaseState> {
        proptest::array::uniform6(-1.0f64..1.0).prop_map(|z| {
            PhaseState::from_array([
                z[0] * 0.02,
                z[1] * 0.02,
                z[2] * 0.02,
                z[3] * 96.0,
                z[4] * 96.0,
                z[5] * 48.0,
            ])
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn distance_is_symmetric_and_positive(a in state(), b in state()) {
            let w = beam_weight();
            let dab = phase_distance_sq(&a, &b, &w);
            let dba = phase_distance_sq(&b, &a, &w);
            prop_assert_eq!(dab, dba);
            prop_assert!(dab >= 0.0);
            prop_assert_eq!(dab == 0.0, a == b);
        }
    }

    proptest! {
        #[test]
        fn distance_scales_quadratically(a in state(), d in state(), t in -3.0f64..3.0) {
            let w = beam_weight();
            let shifted = |s: f64| {
                let mut z = a.to_array();
                for (zi, di) in z.iter_mut().zip(d.to_array()) {
                    *zi += s * di;
                }
                PhaseState::from_array(z)
            };
            let base = phase_distance_sq(&PhaseState::ZERO, &d, &w);
            let scaled = phase_distance_sq(&a, &shifted(t), &w);
            prop_assert!((scaled - t * t * base).abs() <= 1e-9 * (1.0 + t * t * base));
        }
    }
}
