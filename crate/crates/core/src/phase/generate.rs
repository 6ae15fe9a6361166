use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetMeta, MaterialDataset, PhaseState, WeightMatrix, PHASE_DIM};
use crate::error::{Error, Result};

/// `m` uniformly spaced values from `-b` to `b`, with both ends exact.
pub fn uniform_grid(m: usize, b: f64) -> Vec<f64> {
    (0..m)
        .map(|i| {
            if i + 1 == m {
                b
            } else {
                -b + 2.0 * b * i as f64 / (m - 1) as f64
            }
        })
        .collect()
}

fn check_bound(strain_bound: f64) -> Result<()> {
    if !(strain_bound > 0.0) || !strain_bound.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "strain bound must be positive, got {strain_bound}"
        )));
    }
    Ok(())
}

/// Tensor-product grid of strain states with linear stresses `S = Ĉ E`.
/// The first strain component varies slowest.
pub fn generate_svk_grid_dataset(
    points_per_axis: usize,
    strain_bound: f64,
    w: &WeightMatrix,
    seed: u64,
) -> Result<MaterialDataset> {
    if points_per_axis < 2 {
        return Err(Error::InvalidParameter(format!(
            "points per axis must be at least 2, got {points_per_axis}"
        )));
    }
    check_bound(strain_bound)?;
    let axis = uniform_grid(points_per_axis, strain_bound);
    let mut points = Vec::with_capacity(points_per_axis.pow(3));
    for &e1 in &axis {
        for &e2 in &axis {
            for &e3 in &axis {
                let e = [e1, e2, e3];
                points.push(PhaseState::new(e, w.apply(&e)));
            }
        }
    }
    MaterialDataset::new(
        points,
        DatasetMeta {
            seed: Some(seed),
            noise_factor: 0.0,
            path_ids: None,
            source: format!("grid {points_per_axis}^3, bound {strain_bound}"),
        },
    )
}

/// Adds Gaussian noise with per-component std `factor · max|z_c| / ∛M`.
pub fn add_noise(dataset: &MaterialDataset, factor: f64, seed: u64) -> Result<MaterialDataset> {
    if !(factor >= 0.0) || !factor.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise factor must be non-negative, got {factor}"
        )));
    }
    let mut out = dataset.clone();
    out.meta.noise_factor = factor;
    out.meta.seed = Some(seed);
    if factor == 0.0 {
        return Ok(out);
    }
    let scale = (dataset.len() as f64).cbrt();
    let mut zmax = [0.0_f64; PHASE_DIM];
    for p in dataset.points() {
        for (m, v) in zmax.iter_mut().zip(p.to_array()) {
            *m = m.max(v.abs());
        }
    }
    let dists: Vec<Option<Normal<f64>>> = zmax
        .iter()
        .map(|m| {
            let sd = factor * m / scale;
            (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite positive std"))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(dataset.len());
    for p in dataset.points() {
        let mut z = p.to_array();
        for (v, d) in z.iter_mut().zip(&dists) {
            if let Some(d) = d {
                *v += d.sample(&mut rng);
            }
        }
        points.push(PhaseState::from_array(z));
    }
    MaterialDataset::new(points, out.meta)
}

/// Rotation matrix from a uniformly random unit quaternion.
fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut q = [0.0_f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = normal.sample(rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Quasi-uniform directions (Fibonacci lattice on the sphere, randomly rotated),
/// each scaled onto the surface of the cube `[-1, 1]³`.
pub(crate) fn cube_directions(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = random_rotation(&mut rng);
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let zc = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - zc * zc).max(0.0).sqrt();
            let phi = golden * i as f64;
            let v = [r * phi.cos(), r * phi.sin(), zc];
            let d = super::mat_vec(&rot, &v);
            let m = d.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
            [d[0] / m, d[1] / m, d[2] / m]
        })
        .collect()
}

/// Strain states along `n_paths` radial loading paths, `points_per_path` per path,
/// at `k / points_per_path · strain_bound · direction` for `k = 1..=points_per_path`.
pub fn generate_sparse_path_dataset(
    n_paths: usize,
    points_per_path: usize,
    strain_bound: f64,
    w: &WeightMatrix,
    seed: u64,
) -> Result<MaterialDataset> {
    if n_paths < 1 {
        return Err(Error::InvalidParameter(
            "at least one loading path is required".into(),
        ));
    }
    if points_per_path < 2 {
        return Err(Error::InvalidParameter(format!(
            "points per path must be at least 2, got {points_per_path}"
        )));
    }
    check_bound(strain_bound)?;
    let dirs = cube_directions(n_paths, seed);
    let mut points = Vec::with_capacity(n_paths * points_per_path);
    let mut ids = Vec::with_capacity(n_paths * points_per_path);
    for (p, d) in dirs.iter().enumerate() {
        for k in 1..=points_per_path {
            let t = k as f64 / points_per_path as f64 * strain_bound;
            let e = [t * d[0], t * d[1], t * d[2]];
            points.push(PhaseState::new(e, w.apply(&e)));
            ids.push(p);
        }
    }
    MaterialDataset::new(
        points,
        DatasetMeta {
            seed: Some(seed),
            noise_factor: 0.0,
            path_ids: Some(ids),
            source: format!("{n_paths} paths x {points_per_path} points, bound {strain_bound}"),
        },
    )
}
