//! Dof layout with the transformation method for essential conditions, and
//! assembly of the reduced residual and banded tangent.
//!
//! The prescribed value at a Dirichlet node `J` constrains the approximation,
//! `Σ_I Ψ_I(x_J) q_I = g_J`, not the coefficient itself. For every
//! constrained component the coefficients of the constrained nodes become
//! dependent unknowns, `q_D = C_D⁻¹ (g − C_F q_F)`, and Newton runs on the
//! remaining free coefficients.

use std::collections::BTreeMap;

use super::banded::{dense_inverse, BandMatrix};
use super::kinematics::{Mat2, NodalPotential, IDENTITY};
use crate::error::{Error, Result};
use crate::meshfree::Discretization;

/// A prescribed displacement component at a node, at full load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dirichlet {
    pub node: usize,
    /// 0 for x, 1 for y.
    pub component: usize,
    pub value: f64,
}

/// Maps full nodal coefficients to free unknowns.
#[derive(Debug, Clone)]
pub(crate) struct DofLayout {
    pub per_node: usize,
    pub n_free: usize,
    /// Free unknown of each full dof, if it is not dependent.
    free_of: Vec<Option<usize>>,
    /// `q_p = constant_p · load_factor + Σ coeff · q_free` for every full dof.
    expansion: Vec<Vec<(usize, f64)>>,
    constant: Vec<f64>,
    /// Half-bandwidth of the reduced tangent.
    pub bandwidth: usize,
}

impl DofLayout {
    /// Layout for `fields` vector fields (displacement, then multiplier). Every
    /// field is constrained at the Dirichlet nodes; only the displacement
    /// field takes the prescribed values, the others are held at zero.
    pub fn new(disc: &Discretization, dirichlet: &[Dirichlet], fields: usize) -> Result<Self> {
        let n = disc.num_nodes();
        let per_node = 2 * fields;
        let mut prescribed: [BTreeMap<usize, f64>; 2] = [BTreeMap::new(), BTreeMap::new()];
        for d in dirichlet {
            if d.node >= n || d.component > 1 {
                return Err(Error::InvalidInput(format!(
                    "Dirichlet condition on node {} component {} is out of range",
                    d.node, d.component
                )));
            }
            if !d.value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite prescribed value at node {}",
                    d.node
                )));
            }
            if let Some(old) = prescribed[d.component].insert(d.node, d.value) {
                if old != d.value {
                    return Err(Error::InvalidInput(format!(
                        "conflicting prescribed values on node {} component {}",
                        d.node, d.component
                    )));
                }
            }
        }
        let n_dof = n * per_node;
        let mut dependent = vec![false; n_dof];
        for f in 0..fields {
            for (c, set) in prescribed.iter().enumerate() {
                for &node in set.keys() {
                    dependent[node * per_node + 2 * f + c] = true;
                }
            }
        }
        let mut free_of = vec![None; n_dof];
        let mut n_free = 0;
        for p in 0..n_dof {
            if !dependent[p] {
                free_of[p] = Some(n_free);
                n_free += 1;
            }
        }
        let mut expansion: Vec<Vec<(usize, f64)>> = free_of
            .iter()
            .map(|f| f.map(|i| vec![(i, 1.0)]).unwrap_or_default())
            .collect();
        let mut constant = vec![0.0; n_dof];

        for (c, set) in prescribed.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let nodes: Vec<usize> = set.keys().copied().collect();
            let pos: BTreeMap<usize, usize> =
                nodes.iter().enumerate().map(|(a, &j)| (j, a)).collect();
            let nd = nodes.len();
            let mut cd = vec![vec![0.0; nd]; nd];
            let mut cf: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nd];
            for (a, &j) in nodes.iter().enumerate() {
                let sv = &disc.shapes.nodal[j];
                for (&i, &v) in sv.indices.iter().zip(&sv.values) {
                    match pos.get(&i) {
                        Some(&b) => cd[a][b] = v,
                        None => cf[a].push((i, v)),
                    }
                }
            }
            let inv = dense_inverse(&cd).map_err(|_| {
                Error::InvalidInput(format!(
                    "prescribed nodes of component {c} give a singular transformation matrix"
                ))
            })?;
            for f in 0..fields {
                for (a2, &j) in nodes.iter().enumerate() {
                    let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
                    let mut value = 0.0;
                    for a in 0..nd {
                        let w = inv[a2][a];
                        if w == 0.0 {
                            continue;
                        }
                        value += w * set[&nodes[a]];
                        for &(i, v) in &cf[a] {
                            let free =
                                free_of[i * per_node + 2 * f + c].expect("unconstrained node");
                            *terms.entry(free).or_insert(0.0) -= w * v;
                        }
                    }
                    let p = j * per_node + 2 * f + c;
                    expansion[p] = terms.into_iter().filter(|(_, v)| *v != 0.0).collect();
                    constant[p] = if f == 0 { value } else { 0.0 };
                }
            }
        }

        let mut layout = Self {
            per_node,
            n_free,
            free_of,
            expansion,
            constant,
            bandwidth: 0,
        };
        layout.bandwidth = layout.symbolic_bandwidth(disc);
        Ok(layout)
    }

    fn symbolic_bandwidth(&self, disc: &Discretization) -> usize {
        let mut bw = 0;
        for g in &disc.shapes.gradients {
            let mut lo = usize::MAX;
            let mut hi = 0;
            for &i in &g.indices {
                for c in 0..self.per_node {
                    for &(f, _) in &self.expansion[i * self.per_node + c] {
                        lo = lo.min(f);
                        hi = hi.max(f);
                    }
                }
            }
            if lo <= hi {
                bw = bw.max(hi - lo);
            }
        }
        bw
    }

    #[cfg(test)]
    pub fn n_dof(&self) -> usize {
        self.expansion.len()
    }

    /// Free unknowns of a full coefficient vector.
    pub fn restrict(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (p, f) in self.free_of.iter().enumerate() {
            if let Some(i) = f {
                out[*i] = q[p];
            }
        }
        out
    }

    /// Full coefficients from free unknowns at a load factor.
    pub fn expand(&self, free: &[f64], load_factor: f64, q: &mut [f64]) {
        for (p, terms) in self.expansion.iter().enumerate() {
            q[p] = self.constant[p] * load_factor
                + terms.iter().map(|&(i, c)| c * free[i]).sum::<f64>();
        }
    }

    /// `Zᵀ g`: a full gradient reduced to the free unknowns.
    fn reduce(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (p, terms) in self.expansion.iter().enumerate() {
            for &(i, c) in terms {
                out[i] += c * g[p];
            }
        }
        out
    }

    pub fn new_tangent(&self) -> BandMatrix {
        BandMatrix::zeros(self.n_free, self.bandwidth, self.bandwidth)
    }
}

/// Field gradients `(F, ∇λ)` at node `l` from full coefficients.
pub(crate) fn node_fields(
    disc: &Discretization,
    per_node: usize,
    q: &[f64],
    l: usize,
) -> [Mat2; 2] {
    let g = &disc.shapes.gradients[l];
    let mut x = [IDENTITY, [[0.0; 2]; 2]];
    for (&i, b) in g.indices.iter().zip(&g.values) {
        for f in 0..per_node / 2 {
            for k in 0..2 {
                let v = q[i * per_node + 2 * f + k];
                x[f][k][0] += v * b[0];
                x[f][k][1] += v * b[1];
            }
        }
    }
    x
}

/// Reduced gradient of `Σ_L V_L π_L + linearᵀ q` at `q`, and optionally its
/// Hessian added into `tangent` (which must be zeroed by the caller).
pub(crate) fn assemble(
    disc: &Discretization,
    layout: &DofLayout,
    q: &[f64],
    potentials: &[NodalPotential],
    linear: &[f64],
    mut tangent: Option<&mut BandMatrix>,
) -> Vec<f64> {
    let pn = layout.per_node;
    let nf = pn / 2;
    let mut grad = linear.to_vec();
    let mut p_rows: Vec<[f64; 8]> = Vec::new();
    let mut local_k: Vec<f64> = Vec::new();
    for (l, pot) in potentials.iter().enumerate() {
        let vol = disc.shapes.volumes[l];
        let gl = &disc.shapes.gradients[l];
        let x = node_fields(disc, pn, q, l);
        let dpi = pot.gradient(&x);
        for (&i, b) in gl.indices.iter().zip(&gl.values) {
            for f in 0..nf {
                for k in 0..2 {
                    grad[i * pn + 2 * f + k] += vol * (dpi[f][k][0] * b[0] + dpi[f][k][1] * b[1]);
                }
            }
        }
        let Some(band) = tangent.as_deref_mut() else {
            continue;
        };
        let h = pot.hessian(&x);
        let m = gl.indices.len();
        let nl = m * pn;
        // P[(I, c)][col] = V Σ_j b_Ij H[(c, j)][col]
        p_rows.clear();
        for b in &gl.values {
            for c in 0..pn {
                let (f, k) = (c / 2, c % 2);
                let r0 = 4 * f + 2 * k;
                let mut row = [0.0; 8];
                for col in 0..4 * nf {
                    row[col] = vol * (b[0] * h[r0][col] + b[1] * h[r0 + 1][col]);
                }
                p_rows.push(row);
            }
        }
        local_k.clear();
        local_k.resize(nl * nl, 0.0);
        for a in 0..nl {
            let row = &p_rows[a];
            for (jb, b) in gl.values.iter().enumerate() {
                for c in 0..pn {
                    let (f, k) = (c / 2, c % 2);
                    let col = 4 * f + 2 * k;
                    local_k[a * nl + jb * pn + c] = row[col] * b[0] + row[col + 1] * b[1];
                }
            }
        }
        for a in 0..nl {
            let pa = gl.indices[a / pn] * pn + a % pn;
            for &(fa, ca) in &layout.expansion[pa] {
                for bidx in 0..nl {
                    let kab = local_k[a * nl + bidx];
                    if kab == 0.0 {
                        continue;
                    }
                    let pb = gl.indices[bidx / pn] * pn + bidx % pn;
                    for &(fb, cb) in &layout.expansion[pb] {
                        band.add(fa, fb, ca * cb * kab);
                    }
                }
            }
        }
    }
    layout.reduce(&grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshfree::{rectangle_grid, Polygon};
    use crate::phase::build_weight_matrix_isotropic;

    fn disc() -> Discretization {
        let nodes = rectangle_grid([0.0, 0.0], [3.0, 1.0], 7, 3, 0.2, 2.0, 4).unwrap();
        Discretization::new(
            nodes,
            Polygon::rectangle([0.0, 0.0], [3.0, 1.0]).unwrap(),
            1,
        )
        .unwrap()
    }

    fn left_clamp(d: &Discretization, value: f64) -> Vec<Dirichlet> {
        (0..d.num_nodes())
            .filter(|&i| d.nodes.coord(i)[0] == 0.0)
            .flat_map(|i| {
                [0, 1].map(|c| Dirichlet {
                    node: i,
                    component: c,
                    value: value * (1.0 + c as f64),
                })
            })
            .collect()
    }

    #[test]
    fn expansion_satisfies_the_constraints() {
        let d = disc();
        let bcs = left_clamp(&d, 0.01);
        let layout = DofLayout::new(&d, &bcs, 2).unwrap();
        assert_eq!(layout.n_free, layout.n_dof() - 4 * 3);
        let free: Vec<f64> = (0..layout.n_free)
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let mut q = vec![0.0; layout.n_dof()];
        layout.expand(&free, 0.5, &mut q);
        for bc in &bcs {
            let sv = &d.shapes.nodal[bc.node];
            for f in 0..2 {
                let u = sv.interpolate(|i| q[i * 4 + 2 * f + bc.component]);
                let expect = if f == 0 { 0.5 * bc.value } else { 0.0 };
                assert!((u - expect).abs() < 1e-12, "{u} vs {expect}");
            }
        }
        assert_eq!(layout.restrict(&q), free);
    }

    #[test]
    fn tangent_matches_finite_difference_of_residual() {
        let d = disc();
        let layout = DofLayout::new(&d, &left_clamp(&d, 0.0), 2).unwrap();
        let w = build_weight_matrix_isotropic(100.0, 0.3).unwrap();
        let pots: Vec<NodalPotential> = (0..d.num_nodes())
            .map(|l| NodalPotential::DataDriven {
                c: *w.c(),
                e_hat: [0.001 * l as f64, -0.002, 0.0005],
                s_hat: [0.05, 0.01 * (l % 3) as f64, -0.02],
            })
            .collect();
        let linear: Vec<f64> = (0..layout.n_dof())
            .map(|p| 1e-3 * ((p % 7) as f64 - 3.0))
            .collect();
        let free: Vec<f64> = (0..layout.n_free)
            .map(|i| 0.01 * (i as f64 * 1.3).cos())
            .collect();
        let mut q = vec![0.0; layout.n_dof()];
        layout.expand(&free, 1.0, &mut q);
        let mut k = layout.new_tangent();
        let r = assemble(&d, &layout, &q, &pots, &linear, Some(&mut k));
        let h = 1e-7;
        for col in (0..layout.n_free).step_by(5) {
            let mut fp = free.clone();
            fp[col] += h;
            let mut fm = free.clone();
            fm[col] -= h;
            layout.expand(&fp, 1.0, &mut q);
            let rp = assemble(&d, &layout, &q, &pots, &linear, None);
            layout.expand(&fm, 1.0, &mut q);
            let rm = assemble(&d, &layout, &q, &pots, &linear, None);
            for row in 0..layout.n_free {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                let an = k.get(row, col);
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                    "K[{row}][{col}] {an} vs {fd}"
                );
                assert!((k.get(row, col) - k.get(col, row)).abs() <= 1e-9 * (1.0 + an.abs()));
            }
        }
        assert!(r.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn band_is_narrow_for_column_numbering() {
        let nodes = rectangle_grid([0.0, -0.2], [50.0, 0.4], 41, 5, 0.25, 2.0, 1).unwrap();
        let d = Discretization::new(
            nodes,
            Polygon::rectangle([0.0, -0.2], [50.0, 0.4]).unwrap(),
            1,
        )
        .unwrap();
        let layout = DofLayout::new(&d, &left_clamp(&d, 0.0), 2).unwrap();
        assert!(layout.bandwidth < 200, "bandwidth {}", layout.bandwidth);
    }
}
