//! Smoothed shape-function gradients over Voronoi cells.

use std::collections::HashMap;

use super::voronoi::{voronoi_partition, Polygon, VoronoiPartition};
use super::{NodeSet, Point, ShapeValues};
use crate::error::{Error, Result};

/// Sparse smoothed gradients `b̃_I(x_L)` of one integration cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SmoothedGradient {
    pub indices: Vec<usize>,
    pub values: Vec<Point>,
}

/// Shape data at the nodal integration points.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedShapeData {
    /// Cell areas `V_L`.
    pub volumes: Vec<f64>,
    /// `Ψ_I(x_L)` at every node `L`.
    pub nodal: Vec<ShapeValues>,
    /// `b̃_I(x_L) = (1/V_L) ∮ Ψ_I n dΓ` at every node `L`.
    pub gradients: Vec<SmoothedGradient>,
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Boundary integrals of every cell by the trapezoidal rule, each segment split
/// into `subdivisions` equal pieces.
pub fn smoothed_gradients(
    partition: &VoronoiPartition,
    nodes: &NodeSet,
    subdivisions: usize,
) -> Result<SmoothedShapeData> {
    if subdivisions == 0 {
        return Err(Error::InvalidParameter(
            "at least one quadrature subdivision is required".into(),
        ));
    }
    if partition.cells.len() != nodes.len() {
        return Err(Error::Shape(format!(
            "{} cells for {} nodes",
            partition.cells.len(),
            nodes.len()
        )));
    }
    let vertex_shapes: Vec<ShapeValues> = partition
        .vertices
        .iter()
        .map(|&p| nodes.shape_functions(p))
        .collect::<Result<_>>()?;
    // interior subdivision points, shared by both cells of an edge
    let mut edge_points: HashMap<(usize, usize), Vec<ShapeValues>> = HashMap::new();

    let n = nodes.len();
    let mut acc = vec![[0.0; 2]; n];
    let mut touched = vec![false; n];
    let mut list: Vec<usize> = Vec::new();
    let mut gradients = Vec::with_capacity(n);
    let mut volumes = Vec::with_capacity(n);
    for cell in &partition.cells {
        for seg in &cell.segments {
            let (lo, hi) = (seg.a.min(seg.b), seg.a.max(seg.b));
            let interior: &Vec<ShapeValues> = match edge_points.entry((lo, hi)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let (pa, pb) = (partition.vertices[lo], partition.vertices[hi]);
                    let pts = (1..subdivisions)
                        .map(|k| {
                            nodes.shape_functions(lerp(pa, pb, k as f64 / subdivisions as f64))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    e.insert(pts)
                }
            };
            // sample values along the segment in canonical order lo → hi
            let mut chain: Vec<&ShapeValues> = Vec::with_capacity(subdivisions + 1);
            chain.push(&vertex_shapes[lo]);
            chain.extend(interior.iter());
            chain.push(&vertex_shapes[hi]);
            let h = seg.length / subdivisions as f64;
            for (k, sv) in chain.iter().enumerate() {
                let w = if k == 0 || k == subdivisions {
                    0.5 * h
                } else {
                    h
                };
                for (&i, &v) in sv.indices.iter().zip(&sv.values) {
                    if !touched[i] {
                        touched[i] = true;
                        list.push(i);
                    }
                    acc[i][0] += w * v * seg.normal[0];
                    acc[i][1] += w * v * seg.normal[1];
                }
            }
        }
        list.sort_unstable();
        let inv = 1.0 / cell.area;
        let mut g = SmoothedGradient {
            indices: Vec::with_capacity(list.len()),
            values: Vec::with_capacity(list.len()),
        };
        for &i in &list {
            g.indices.push(i);
            g.values.push([acc[i][0] * inv, acc[i][1] * inv]);
            acc[i] = [0.0; 2];
            touched[i] = false;
        }
        list.clear();
        gradients.push(g);
        volumes.push(cell.area);
    }
    let nodal = nodes
        .coords()
        .iter()
        .map(|&p| nodes.shape_functions(p))
        .collect::<Result<_>>()?;
    Ok(SmoothedShapeData {
        volumes,
        nodal,
        gradients,
    })
}

/// Nodes, domain, Voronoi partition and smoothed shape data.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub nodes: NodeSet,
    pub domain: Polygon,
    pub partition: VoronoiPartition,
    pub shapes: SmoothedShapeData,
    /// Trapezoidal pieces per boundary segment used for the smoothed gradients.
    pub subdivisions: usize,
}

impl Discretization {
    pub fn new(nodes: NodeSet, domain: Polygon, subdivisions: usize) -> Result<Self> {
        let partition = voronoi_partition(&nodes, &domain)?;
        let shapes = smoothed_gradients(&partition, &nodes, subdivisions)?;
        Ok(Self {
            nodes,
            domain,
            partition,
            shapes,
            subdivisions,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Smoothed gradient of the field with nodal coefficients `f` at node `l`.
    pub fn gradient_at(&self, l: usize, f: impl Fn(usize) -> f64) -> Point {
        let g = &self.shapes.gradients[l];
        let mut out = [0.0; 2];
        for (&i, b) in g.indices.iter().zip(&g.values) {
            let v = f(i);
            out[0] += b[0] * v;
            out[1] += b[1] * v;
        }
        out
    }

    /// Domain-boundary segments (from Voronoi cells) lying on the domain
    /// edge `edge` (index of its first vertex), as physical endpoint pairs.
    pub fn boundary_segments_on_edge(&self, edge: usize) -> Vec<(Point, Point)> {
        let dv = &self.domain.vertices;
        let a = dv[edge];
        let b = dv[(edge + 1) % dv.len()];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let on_edge = |p: Point| {
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            cross.abs() <= 1e-9 * len * len
        };
        let mut out = Vec::new();
        for cell in &self.partition.cells {
            for s in cell.segments.iter().filter(|s| s.neighbor.is_none()) {
                let (pa, pb) = (self.partition.vertices[s.a], self.partition.vertices[s.b]);
                if on_edge(pa) && on_edge(pb) {
                    out.push((pa, pb));
                }
            }
        }
        out
    }
}
