//! Biaxial testing of a square tissue specimen: the eleven loading protocols,
//! the train/test case presets, a synthetic surrogate material and the
//! quarter-symmetry model.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{BoundaryConditions, Dirichlet, FixedPointRun, Problem};
use crate::meshfree::{rectangle_grid, Discretization, Polygon};
use crate::phase::{
    load_dataset, save_dataset, DatasetMeta, MaterialDataset, PhaseState, Vec3, WeightMatrix,
};

/// One row of the protocol table: final stretches and measured edge
/// displacements of the full specimen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSpec {
    pub id: usize,
    pub label: &'static str,
    pub stretch_circ: f64,
    pub stretch_rad: f64,
    pub u_circ: f64,
    pub u_rad: f64,
}

const fn row(
    id: usize,
    label: &'static str,
    stretch_circ: f64,
    stretch_rad: f64,
    u_circ: f64,
    u_rad: f64,
) -> ProtocolSpec {
    ProtocolSpec {
        id,
        label,
        stretch_circ,
        stretch_rad,
        u_circ,
        u_rad,
    }
}

/// Side length of the specimen in mm.
pub const SPECIMEN_SIZE: f64 = 7.5;

pub const PROTOCOL_TABLE: [ProtocolSpec; 11] = [
    row(
        1,
        "Biaxial Tension T_Circ:T_Rad=1:1",
        1.333,
        1.525,
        2.498,
        3.938,
    ),
    row(
        2,
        "Biaxial Tension T_Circ:T_Rad=1:0.8",
        1.342,
        1.499,
        2.564,
        3.744,
    ),
    row(
        3,
        "Biaxial Tension T_Circ:T_Rad=1:0.6",
        1.355,
        1.466,
        2.662,
        3.498,
    ),
    row(
        4,
        "Biaxial Tension T_Circ:T_Rad=1:0.4",
        1.369,
        1.415,
        2.770,
        3.110,
    ),
    row(
        5,
        "Biaxial Tension T_Circ:T_Rad=1:0.2",
        1.388,
        1.326,
        2.913,
        2.442,
    ),
    row(
        6,
        "Biaxial Tension T_Circ:T_Rad=0.8:1",
        1.313,
        1.541,
        2.344,
        4.055,
    ),
    row(
        7,
        "Biaxial Tension T_Circ:T_Rad=0.6:1",
        1.275,
        1.562,
        2.064,
        4.215,
    ),
    row(
        8,
        "Biaxial Tension T_Circ:T_Rad=0.4:1",
        1.213,
        1.588,
        1.596,
        4.409,
    ),
    row(
        9,
        "Biaxial Tension T_Circ:T_Rad=0.2:1",
        1.109,
        1.618,
        0.820,
        4.635,
    ),
    row(10, "Pure Shear in x", 1.387, 0.721, 2.903, -2.093),
    row(11, "Pure Shear in y", 0.620, 1.612, -2.847, 4.590),
];

pub fn protocol_spec(id: usize) -> Result<&'static ProtocolSpec> {
    PROTOCOL_TABLE
        .iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::Config(format!("unknown protocol id {id}")))
}

/// A protocol with its prescribed displacements and the file holding its
/// measured stress–strain data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolRecord {
    pub id: usize,
    #[serde(default)]
    pub label: String,
    /// Edge displacement of the full specimen along x, mm.
    pub u_circ: f64,
    /// Edge displacement of the full specimen along y, mm.
    pub u_rad: f64,
    pub data: PathBuf,
}

impl ProtocolRecord {
    /// Table displacements for protocol `id` with data at `data`.
    pub fn from_table(id: usize, data: PathBuf) -> Result<Self> {
        let p = protocol_spec(id)?;
        Ok(Self {
            id,
            label: p.label.to_string(),
            u_circ: p.u_circ,
            u_rad: p.u_rad,
            data,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.u_circ.is_finite() || !self.u_rad.is_finite() {
            return Err(Error::Config(format!(
                "protocol {}: displacements must be finite",
                self.id
            )));
        }
        if !self.data.is_file() {
            return Err(Error::Config(format!(
                "protocol {}: data file {} not found",
                self.id,
                self.data.display()
            )));
        }
        Ok(())
    }

    /// Reads the data file; errors name the file.
    pub fn load(&self) -> Result<MaterialDataset> {
        load_dataset(&self.data).map_err(|e| {
            Error::Config(format!(
                "protocol {} data {}: {e}",
                self.id,
                self.data.display()
            ))
        })
    }
}

/// The five train/test splits of the tissue study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CasePreset {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

impl CasePreset {
    pub const ALL: [CasePreset; 5] = [
        CasePreset::Case1,
        CasePreset::Case2,
        CasePreset::Case3,
        CasePreset::Case4,
        CasePreset::Case5,
    ];

    pub fn training(self) -> &'static [usize] {
        match self {
            CasePreset::Case1 => &[1, 3, 4, 7, 8],
            CasePreset::Case2 => &[1, 3, 4, 7, 8, 10, 11],
            CasePreset::Case3 => &[1, 2, 6, 10, 11],
            CasePreset::Case4 => &[2, 5, 7, 8],
            CasePreset::Case5 => &[1, 2, 3, 4, 5, 6, 7, 8, 9],
        }
    }

    pub fn testing(self) -> &'static [usize] {
        match self {
            CasePreset::Case1 | CasePreset::Case2 => &[2, 5],
            CasePreset::Case3 => &[3, 4],
            CasePreset::Case4 => &[1, 3, 4],
            CasePreset::Case5 => &[10, 11],
        }
    }
}

impl std::str::FromStr for CasePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "case1" => Ok(CasePreset::Case1),
            "case2" => Ok(CasePreset::Case2),
            "case3" => Ok(CasePreset::Case3),
            "case4" => Ok(CasePreset::Case4),
            "case5" => Ok(CasePreset::Case5),
            _ => Err(Error::Config(format!("unknown case preset '{s}'"))),
        }
    }
}

/// Synthetic stand-in for measured tissue data. Stresses derive from the
/// anisotropic exponential energy
/// `W = c/2 (exp Q − 1)`, `Q = a11 E11² + a22 E22² + 2 a12 E11 E22 + a33 G12²`,
/// evaluated along the homogeneous stretch path of each protocol and perturbed
/// by Gaussian measurement noise. Each path also carries a small in-plane
/// shear that grows with the stretch, as a misaligned specimen would show.
/// It exists to exercise the pipeline and is not fitted to any real tissue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FungSurrogate {
    /// N/mm².
    pub c: f64,
    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
    pub a33: f64,
    /// Largest final engineering shear strain of a path; each protocol draws
    /// its own from `[−shear, shear]`.
    pub shear: f64,
    /// Samples per protocol, at stretch fractions `k / points`.
    pub points: usize,
    /// Noise std per component as a fraction of that component's largest
    /// magnitude along the protocol.
    pub noise: f64,
    pub seed: u64,
}

impl Default for FungSurrogate {
    fn default() -> Self {
        Self {
            c: 0.01,
            a11: 4.0,
            a22: 1.5,
            a12: 0.5,
            a33: 1.5,
            shear: 0.05,
            points: 50,
            noise: 0.005,
            seed: 1,
        }
    }
}

impl FungSurrogate {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.a11 > 0.0) || !(self.a22 > 0.0) || !(self.a33 > 0.0) {
            return Err(Error::InvalidParameter(
                "surrogate c, a11, a22 and a33 must be positive".into(),
            ));
        }
        if self.a12 * self.a12 >= self.a11 * self.a22 {
            return Err(Error::InvalidParameter(
                "surrogate exponent must be positive definite (a12² < a11·a22)".into(),
            ));
        }
        if self.points == 0 || !(self.noise >= 0.0) || !(self.shear >= 0.0) {
            return Err(Error::InvalidParameter(
                "surrogate needs at least one point and non-negative noise".into(),
            ));
        }
        Ok(())
    }

    /// `S = ∂W/∂E` in Voigt form.
    pub fn stress(&self, e: &Vec3) -> Vec3 {
        let q = self.a11 * e[0] * e[0]
            + self.a22 * e[1] * e[1]
            + 2.0 * self.a12 * e[0] * e[1]
            + self.a33 * e[2] * e[2];
        let f = self.c * q.exp();
        [
            f * (self.a11 * e[0] + self.a12 * e[1]),
            f * (self.a22 * e[1] + self.a12 * e[0]),
            f * self.a33 * e[2],
        ]
    }

    fn rng(&self, p: &ProtocolSpec) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(1000).wrapping_add(p.id as u64))
    }

    /// Noise-free states along the protocol's homogeneous stretch path.
    pub fn clean_path(&self, p: &ProtocolSpec) -> Vec<PhaseState> {
        let g = self.shear * self.rng(p).random_range(-1.0..=1.0);
        (1..=self.points)
            .map(|k| {
                let t = k as f64 / self.points as f64;
                let lc = 1.0 + t * (p.stretch_circ - 1.0);
                let lr = 1.0 + t * (p.stretch_rad - 1.0);
                let e = [0.5 * (lc * lc - 1.0), 0.5 * (lr * lr - 1.0), t * g];
                PhaseState::new(e, self.stress(&e))
            })
            .collect()
    }

    pub fn protocol_dataset(&self, p: &ProtocolSpec) -> Result<MaterialDataset> {
        self.validate()?;
        let mut points = self.clean_path(p);
        let mut max = [0.0f64; 6];
        for z in &points {
            for (m, v) in max.iter_mut().zip(z.to_array()) {
                *m = m.max(v.abs());
            }
        }
        let mut rng = self.rng(p);
        // the first draw set the path shear
        let _: f64 = rng.random_range(-1.0..=1.0);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for z in &mut points {
            let mut a = z.to_array();
            for (v, m) in a.iter_mut().zip(max) {
                *v += self.noise * m * unit.sample(&mut rng);
            }
            *z = PhaseState::from_array(a);
        }
        MaterialDataset::new(
            points,
            DatasetMeta {
                seed: Some(self.seed),
                noise_factor: self.noise,
                path_ids: None,
                source: format!("surrogate protocol {}", p.id),
            },
        )
    }

    /// Writes `protocol_<id>.csv` for all eleven protocols into `dir`.
    pub fn write_protocol_files(&self, dir: &Path) -> Result<Vec<ProtocolRecord>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        PROTOCOL_TABLE
            .iter()
            .map(|p| {
                let path = dir.join(format!("protocol_{}.csv", p.id));
                save_dataset(&self.protocol_dataset(p)?, &path)?;
                ProtocolRecord::from_table(p.id, path)
            })
            .collect()
    }
}

/// Discretization and load program of the quarter specimen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TissueSpec {
    /// Side of the full specimen, mm.
    pub specimen_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub jitter: f64,
    pub support_factor: f64,
    pub basis_order: usize,
    pub node_seed: u64,
    pub subdivisions: usize,
    pub load_steps: usize,
}

impl Default for TissueSpec {
    fn default() -> Self {
        Self {
            specimen_size: SPECIMEN_SIZE,
            nx: 5,
            ny: 5,
            jitter: 0.0,
            support_factor: 2.0,
            basis_order: 1,
            node_seed: 1,
            subdivisions: 1,
            load_steps: 10,
        }
    }
}

impl TissueSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.specimen_size > 0.0) || !(self.support_factor > 0.0) {
            return Err(Error::Config(
                "tissue.specimen_size and tissue.support_factor must be positive".into(),
            ));
        }
        if self.load_steps == 0 || self.subdivisions == 0 {
            return Err(Error::Config(
                "tissue.load_steps and tissue.subdivisions must be at least 1".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "tissue.jitter must lie in [0, 0.5), got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Upper-right quarter `[0, a]²` with `a` half the specimen size. Symmetry
    /// fixes `u_x` on `x = 0` and `u_y` on `y = 0`; the right and top edges
    /// move by half the full-specimen displacements, which gives the same
    /// stretch as the full specimen.
    /// Nodes and integration cells of the quarter specimen.
    pub fn discretization(&self) -> Result<Discretization> {
        self.validate()?;
        let a = 0.5 * self.specimen_size;
        let nodes = rectangle_grid(
            [0.0, 0.0],
            [a, a],
            self.nx,
            self.ny,
            self.jitter,
            self.support_factor,
            self.node_seed,
        )?
        .with_basis_order(self.basis_order)?;
        let domain = Polygon::rectangle([0.0, 0.0], [a, a])?;
        Discretization::new(nodes, domain, self.subdivisions)
    }

    /// Quarter model with symmetry conditions on `x = 0` and `y = 0` and half
    /// the protocol displacements on the far edges.
    pub fn problem(&self, protocol: &ProtocolRecord, w: WeightMatrix) -> Result<Problem> {
        let disc = self.discretization()?;
        let a = 0.5 * self.specimen_size;
        let mut dirichlet = Vec::new();
        for i in 0..disc.num_nodes() {
            let x = disc.nodes.coord(i);
            let fix = |component, value| Dirichlet {
                node: i,
                component,
                value,
            };
            if x[0] == 0.0 {
                dirichlet.push(fix(0, 0.0));
            } else if x[0] == a {
                dirichlet.push(fix(0, 0.5 * protocol.u_circ));
            }
            if x[1] == 0.0 {
                dirichlet.push(fix(1, 0.0));
            } else if x[1] == a {
                dirichlet.push(fix(1, 0.5 * protocol.u_rad));
            }
        }
        let bcs = BoundaryConditions {
            dirichlet,
            ..Default::default()
        };
        Problem::new(disc, bcs, w)
    }
}

/// Volume-averaged physical strain and stress after every load step.
#[derive(Debug, Clone, PartialEq)]
pub struct StressStrainCurve {
    pub load_factor: Vec<f64>,
    pub strain: Vec<Vec3>,
    pub stress: Vec<Vec3>,
}

pub fn predicted_curve(problem: &Problem, run: &FixedPointRun) -> StressStrainCurve {
    let vols = &problem.discretization().shapes.volumes;
    let total: f64 = vols.iter().sum();
    let mut c = StressStrainCurve {
        load_factor: Vec::with_capacity(run.steps.len()),
        strain: Vec::with_capacity(run.steps.len()),
        stress: Vec::with_capacity(run.steps.len()),
    };
    for s in &run.steps {
        let mut e = [0.0; 3];
        let mut t = [0.0; 3];
        for (z, v) in s.state.physical.iter().zip(vols) {
            for k in 0..3 {
                e[k] += v * z.strain[k] / total;
                t[k] += v * z.stress[k] / total;
            }
        }
        c.load_factor.push(s.state.load_factor);
        c.strain.push(e);
        c.stress.push(t);
    }
    c
}

/// NRMSD of the predicted normal stresses against measured data, normalized
/// by the largest measured normal stress. For each normal component the
/// predicted curve (from the origin) is interpolated at the measured strains;
/// data outside the predicted strain range is skipped.
pub fn protocol_nrmsd(curve: &StressStrainCurve, data: &MaterialDataset) -> Result<f64> {
    let normalizer = data
        .points()
        .iter()
        .flat_map(|z| [z.stress[0].abs(), z.stress[1].abs()])
        .fold(0.0, f64::max);
    if !(normalizer > 0.0) {
        return Err(Error::DegenerateData(format!(
            "{}: measured normal stresses are all zero",
            data.meta.source
        )));
    }
    let mut ss = 0.0;
    let mut count = 0usize;
    for k in 0..2 {
        let mut pts: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
            .chain(
                curve
                    .strain
                    .iter()
                    .zip(&curve.stress)
                    .map(|(e, s)| (e[k], s[k])),
            )
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|b, a| b.0 - a.0 <= 1e-14 * (1.0 + a.0.abs()));
        if pts.len() < 2 {
            continue;
        }
        let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
        for z in data.points() {
            let x = z.strain[k];
            if x < lo || x > hi {
                continue;
            }
            let j = pts.partition_point(|p| p.0 < x).clamp(1, pts.len() - 1);
            let (a, b) = (pts[j - 1], pts[j]);
            let y = a.1 + (x - a.0) / (b.0 - a.0) * (b.1 - a.1);
            ss += (y - z.stress[k]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: no measured strain lies within the predicted range",
            data.meta.source
        )));
    }
    Ok((ss / count as f64).sqrt() / normalizer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_presets_match_the_study_table() {
        let expected: [(&[usize], &[usize]); 5] = [
            (&[1, 3, 4, 7, 8], &[2, 5]),
            (&[1, 3, 4, 7, 8, 10, 11], &[2, 5]),
            (&[1, 2, 6, 10, 11], &[3, 4]),
            (&[2, 5, 7, 8], &[1, 3, 4]),
            (&[1, 2, 3, 4, 5, 6, 7, 8, 9], &[10, 11]),
        ];
        for (case, (train, test)) in CasePreset::ALL.iter().zip(expected) {
            assert_eq!(case.training(), train);
            assert_eq!(case.testing(), test);
            assert!(case
                .training()
                .iter()
                .all(|id| !case.testing().contains(id)));
        }
        assert_eq!("Case-5".parse::<CasePreset>().unwrap(), CasePreset::Case5);
        assert!("case6".parse::<CasePreset>().is_err());
    }

    #[test]
    fn table_displacements_match_the_stretches() {
        for p in &PROTOCOL_TABLE {
            assert!(
                (p.u_circ - (p.stretch_circ - 1.0) * SPECIMEN_SIZE).abs() < 5e-3,
                "{p:?}"
            );
            assert!(
                (p.u_rad - (p.stretch_rad - 1.0) * SPECIMEN_SIZE).abs() < 5e-3,
                "{p:?}"
            );
        }
    }

    #[test]
    fn surrogate_stress_is_the_energy_gradient() {
        let s = FungSurrogate::default();
        let energy = |e: &Vec3| {
            let q = s.a11 * e[0] * e[0]
                + s.a22 * e[1] * e[1]
                + 2.0 * s.a12 * e[0] * e[1]
                + s.a33 * e[2] * e[2];
            0.5 * s.c * (q.exp() - 1.0)
        };
        let e = [0.3, -0.1, 0.05];
        let got = s.stress(&e);
        let h = 1e-6;
        for k in 0..3 {
            let mut a = e;
            let mut b = e;
            a[k] += h;
            b[k] -= h;
            let fd = (energy(&a) - energy(&b)) / (2.0 * h);
            assert!((fd - got[k]).abs() < 1e-8, "{k}: {fd} vs {}", got[k]);
        }
    }

    #[test]
    fn surrogate_paths_end_at_the_table_stretch() {
        let s = FungSurrogate {
            noise: 0.0,
            ..Default::default()
        };
        let p = protocol_spec(10).unwrap();
        let d = s.protocol_dataset(p).unwrap();
        assert_eq!(d.len(), s.points);
        let last = d.get(d.len() - 1);
        assert!((last.strain[0] - 0.5 * (1.387f64.powi(2) - 1.0)).abs() < 1e-12);
        assert!((last.strain[1] - 0.5 * (0.721f64.powi(2) - 1.0)).abs() < 1e-12);
        assert!(last.strain[2].abs() <= s.shear);
        let noisy = FungSurrogate::default().protocol_dataset(p).unwrap();
        assert_eq!(noisy, FungSurrogate::default().protocol_dataset(p).unwrap());
        assert_ne!(noisy, d);
    }

    #[test]
    fn exact_curve_has_zero_nrmsd() {
        let s = FungSurrogate {
            noise: 0.0,
            ..Default::default()
        };
        let p = protocol_spec(3).unwrap();
        let data = s.protocol_dataset(p).unwrap();
        let pts = s.clean_path(p);
        let curve = StressStrainCurve {
            load_factor: (1..=pts.len())
                .map(|k| k as f64 / pts.len() as f64)
                .collect(),
            strain: pts.iter().map(|z| z.strain).collect(),
            stress: pts.iter().map(|z| z.stress).collect(),
        };
        assert!(protocol_nrmsd(&curve, &data).unwrap() < 1e-15);
        let shifted = StressStrainCurve {
            stress: curve
                .stress
                .iter()
                .map(|t| [t[0] + 0.001, t[1] + 0.001, t[2]])
                .collect(),
            ..curve.clone()
        };
        let max = data
            .points()
            .iter()
            .flat_map(|z| [z.stress[0].abs(), z.stress[1].abs()])
            .fold(0.0, f64::max);
        assert!((protocol_nrmsd(&shifted, &data).unwrap() - 0.001 / max).abs() < 1e-12);
    }

    #[test]
    fn missing_protocol_file_is_a_config_error() {
        let r =
            ProtocolRecord::from_table(4, PathBuf::from("/nonexistent/protocol_4.csv")).unwrap();
        assert!(matches!(r.validate(), Err(Error::Config(_))));
        assert!(ProtocolRecord::from_table(12, PathBuf::new()).is_err());
    }
}
