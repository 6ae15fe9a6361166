//! Reproducing-kernel approximation on scattered nodes with stabilized
//! conforming nodal integration over Voronoi cells.

mod scni;
mod voronoi;

pub use scni::{smoothed_gradients, Discretization, SmoothedShapeData};
pub use voronoi::{voronoi_partition, Cell, Polygon, Segment, VoronoiPartition};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Cubic B-spline kernel on normalized distance `y`, zero for `y ≥ 1`.
pub fn cubic_bspline(y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel argument must be non-negative, got {y}"
        )));
    }
    Ok(bspline(y))
}

#[inline]
fn bspline(y: f64) -> f64 {
    if y <= 0.5 {
        2.0 / 3.0 - 4.0 * y * y + 4.0 * y * y * y
    } else if y < 1.0 {
        4.0 / 3.0 - 4.0 * y + 4.0 * y * y - 4.0 / 3.0 * y * y * y
    } else {
        0.0
    }
}

/// Meshfree nodes with per-node (axis-aligned elliptical) kernel supports.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    coords: Vec<Point>,
    /// Support half-widths `(a_x, a_y)` of every node.
    support: Vec<Point>,
    /// Length scales used to normalize the basis and the Voronoi metric.
    scale: Point,
    /// Polynomial order of the reproducing basis, 1 or 2.
    order: usize,
}

impl NodeSet {
    pub fn new(coords: Vec<Point>, support: Vec<Point>, scale: Point) -> Result<Self> {
        if coords.is_empty() || coords.len() != support.len() {
            return Err(Error::InvalidInput(format!(
                "{} nodes with {} support sizes",
                coords.len(),
                support.len()
            )));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "node coordinates must be finite".into(),
            ));
        }
        if support.iter().flatten().any(|v| !(*v > 0.0)) || !(scale[0] > 0.0 && scale[1] > 0.0) {
            return Err(Error::InvalidParameter(
                "support sizes and scales must be positive".into(),
            ));
        }
        Ok(Self {
            coords,
            support,
            scale,
            order: 1,
        })
    }

    /// Same nodes with a linear (`1`) or quadratic (`2`) reproducing basis.
    pub fn with_basis_order(mut self, order: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "basis order must be 1 or 2, got {order}"
            )));
        }
        self.order = order;
        Ok(self)
    }

    pub fn basis_order(&self) -> usize {
        self.order
    }

    /// Nodes with a uniform circular support of radius `a`.
    pub fn with_uniform_support(coords: Vec<Point>, a: f64) -> Result<Self> {
        let n = coords.len();
        Self::new(coords, vec![[a, a]; n], [a, a])
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Point {
        self.coords[i]
    }

    pub fn support(&self, i: usize) -> Point {
        self.support[i]
    }

    pub fn scale(&self) -> Point {
        self.scale
    }

    /// Copy of the node set translated by `shift`.
    pub fn translated(&self, shift: Point) -> Self {
        let mut s = self.clone();
        for c in &mut s.coords {
            c[0] += shift[0];
            c[1] += shift[1];
        }
        s
    }

    /// RK shape functions at `x`, reproducing polynomials up to the basis order.
    pub fn shape_functions(&self, x: Point) -> Result<ShapeValues> {
        let nb = if self.order == 2 { 6 } else { 3 };
        let mut idx = Vec::new();
        let mut phi = Vec::new();
        let mut basis: Vec<[f64; 6]> = Vec::new();
        let mut m = [[0.0; 6]; 6];
        let [sx, sy] = self.scale;
        for (i, (c, a)) in self.coords.iter().zip(&self.support).enumerate() {
            let dx = x[0] - c[0];
            let dy = x[1] - c[1];
            let ux = dx / a[0];
            let uy = dy / a[1];
            let r2 = ux * ux + uy * uy;
            if r2 >= 1.0 {
                continue;
            }
            let w = bspline(r2.sqrt());
            if w <= 0.0 {
                continue;
            }
            let (hx, hy) = (dx / sx, dy / sy);
            let h = [1.0, hx, hy, hx * hx, hx * hy, hy * hy];
            for r in 0..nb {
                for s in 0..nb {
                    m[r][s] += w * h[r] * h[s];
                }
            }
            idx.push(i);
            phi.push(w);
            basis.push(h);
        }
        let coverage = |reason: String| Error::Coverage {
            x: x[0],
            y: x[1],
            reason,
        };
        if idx.len() < nb {
            return Err(coverage(format!(
                "only {} nodes cover the point",
                idx.len()
            )));
        }
        let b = solve_moment(&m, nb).ok_or_else(|| coverage("singular moment matrix".into()))?;
        let values = basis
            .iter()
            .zip(&phi)
            .map(|(h, w)| (0..nb).map(|r| b[r] * h[r]).sum::<f64>() * w)
            .collect();
        Ok(ShapeValues {
            indices: idx,
            values,
        })
    }
}

/// Solves `M b = e₁` for the leading `n × n` block of the symmetric moment
/// matrix by Cholesky.
fn solve_moment(m: &[[f64; 6]; 6], n: usize) -> Option<[f64; 6]> {
    let trace: f64 = (0..n).map(|i| m[i][i]).sum();
    let mut l = [[0.0; 6]; 6];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-12 * trace {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 6];
    y[0] = 1.0;
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i][k] * y[k];
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k][i] * y[k];
        }
        y[i] /= l[i][i];
    }
    Some(y)
}

/// Sparse shape-function values at one point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapeValues {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ShapeValues {
    /// `Σ_I Ψ_I f_I` for nodal values `f`.
    pub fn interpolate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * f(i))
            .sum()
    }
}

/// Regular `nx × ny` grid on the rectangle `[x0, x0+lx] × [y0, y0+ly]`, node
/// index `i·ny + j` (numbered along the short direction when `ny < nx`). Interior nodes are jittered uniformly by up to
/// `jitter` spacings per axis. Supports are `support_factor` spacings.
pub fn rectangle_grid(
    origin: Point,
    size: Point,
    nx: usize,
    ny: usize,
    jitter: f64,
    support_factor: f64,
    seed: u64,
) -> Result<NodeSet> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid must be at least 2x2, got {nx}x{ny}"
        )));
    }
    if !(size[0] > 0.0 && size[1] > 0.0) {
        return Err(Error::InvalidParameter(
            "domain size must be positive".into(),
        ));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::InvalidParameter(format!(
            "jitter must lie in [0, 0.5), got {jitter}"
        )));
    }
    if !(support_factor > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "support factor must exceed 1, got {support_factor}"
        )));
    }
    let hx = size[0] / (nx - 1) as f64;
    let hy = size[1] / (ny - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let mut x = if i + 1 == nx {
                origin[0] + size[0]
            } else {
                origin[0] + i as f64 * hx
            };
            let mut y = if j + 1 == ny {
                origin[1] + size[1]
            } else {
                origin[1] + j as f64 * hy
            };
            let interior = i > 0 && i + 1 < nx && j > 0 && j + 1 < ny;
            if interior && jitter > 0.0 {
                x += jitter * hx * rng.random_range(-1.0..1.0);
                y += jitter * hy * rng.random_range(-1.0..1.0);
            }
            coords.push([x, y]);
        }
    }
    let support = vec![[support_factor * hx, support_factor * hy]; coords.len()];
    NodeSet::new(coords, support, [hx, hy])
}
