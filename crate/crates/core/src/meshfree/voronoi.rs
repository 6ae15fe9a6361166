//! Voronoi cells of the nodes clipped to a convex domain polygon.
//!
//! Cells are computed in coordinates scaled by the node set's length scales,
//! so a stretched regular grid yields rectangular cells. Vertices shared by
//! neighboring cells are merged so that interior edges match exactly.

use std::collections::HashMap;

use super::{NodeSet, Point};
use crate::error::{Error, Result};

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidInput(
                "a polygon needs at least three vertices".into(),
            ));
        }
        let p = Self { vertices };
        if !(p.area() > 0.0) {
            return Err(Error::InvalidInput(
                "polygon must be counterclockwise with positive area".into(),
            ));
        }
        let n = p.vertices.len();
        for i in 0..n {
            let a = p.vertices[i];
            let b = p.vertices[(i + 1) % n];
            let c = p.vertices[(i + 2) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross < 0.0 {
                return Err(Error::InvalidInput("domain polygon must be convex".into()));
            }
        }
        Ok(p)
    }

    pub fn rectangle(origin: Point, size: Point) -> Result<Self> {
        let [x0, y0] = origin;
        let [x1, y1] = [x0 + size[0], y0 + size[1]];
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| dist(self.vertices[i], self.vertices[(i + 1) % n]))
            .sum()
    }

    /// True if `p` lies inside or on the boundary, within `tol` (length units).
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let len = dist(a, b);
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            cross >= -tol * len
        })
    }
}

pub(crate) fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// One straight piece of a cell boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Global vertex ids, in counterclockwise order around the cell.
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub normal: Point,
    /// Cell on the other side, `None` on the domain boundary.
    pub neighbor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Global vertex ids, counterclockwise.
    pub vertices: Vec<usize>,
    pub area: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiPartition {
    pub vertices: Vec<Point>,
    pub cells: Vec<Cell>,
    pub domain: Polygon,
}

impl VoronoiPartition {
    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn cell_polygon(&self, i: usize) -> Vec<Point> {
        self.cells[i]
            .vertices
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    /// Total length of segments on the domain boundary.
    pub fn boundary_length(&self) -> f64 {
        self.cells
            .iter()
            .flat_map(|c| &c.segments)
            .filter(|s| s.neighbor.is_none())
            .map(|s| s.length)
            .sum()
    }
}

/// Clips a convex polygon to `{p : n·p ≤ c}`.
fn clip(poly: &[Point], n: Point, c: f64) -> Vec<Point> {
    let m = poly.len();
    let mut out = Vec::with_capacity(m + 1);
    let side = |p: Point| n[0] * p[0] + n[1] * p[1] - c;
    for i in 0..m {
        let p = poly[i];
        let q = poly[(i + 1) % m];
        let (sp, sq) = (side(p), side(q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Drops consecutive vertices closer than `tol` (scaled coordinates).
fn dedup(poly: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q| dist(*q, p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && dist(out[0], *out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

/// Voronoi partition of `domain` generated by the nodes.
pub fn voronoi_partition(nodes: &NodeSet, domain: &Polygon) -> Result<VoronoiPartition> {
    let [sx, sy] = nodes.scale();
    let to_s = |p: Point| [p[0] / sx, p[1] / sy];
    let from_s = |p: Point| [p[0] * sx, p[1] * sy];
    let pts: Vec<Point> = nodes.coords().iter().map(|&p| to_s(p)).collect();
    let dom: Vec<Point> = domain.vertices.iter().map(|&p| to_s(p)).collect();
    let extent = dom
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let tol = 1e-9 * extent;

    let scaled_domain = Polygon {
        vertices: dom.clone(),
    };
    for (i, p) in pts.iter().enumerate() {
        if !scaled_domain.contains(*p, tol) {
            return Err(Error::InvalidInput(format!(
                "node {i} lies outside the domain"
            )));
        }
    }
    // sort for a sweep over nearby candidates
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a][0].partial_cmp(&pts[b][0]).unwrap().then(a.cmp(&b)));
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if pts[b][0] - pts[a][0] > tol {
                break;
            }
            if dist(pts[a], pts[b]) <= tol {
                return Err(Error::InvalidInput(format!("nodes {a} and {b} coincide")));
            }
        }
    }

    let mut raw_cells: Vec<Vec<Point>> = Vec::with_capacity(pts.len());
    for (i, &xi) in pts.iter().enumerate() {
        let mut poly = dom.clone();
        // candidates by increasing distance; stop once they cannot cut the cell
        let mut cand: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, &xj)| (dist(xi, xj), j))
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(d, j) in &cand {
            let radius = poly.iter().map(|&v| dist(v, xi)).fold(0.0, f64::max);
            if d > 2.0 * radius + tol {
                break;
            }
            let xj = pts[j];
            let n = [xj[0] - xi[0], xj[1] - xi[1]];
            let c = 0.5 * ((xj[0] * xj[0] + xj[1] * xj[1]) - (xi[0] * xi[0] + xi[1] * xi[1]));
            poly = dedup(clip(&poly, n, c), tol);
            if poly.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "Voronoi cell of node {i} is degenerate"
                )));
            }
        }
        raw_cells.push(poly);
    }

    // merge vertices across cells
    let mut vertices: Vec<Point> = Vec::new();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let cell_size = 10.0 * tol;
    let key = |p: Point| {
        (
            (p[0] / cell_size).floor() as i64,
            (p[1] / cell_size).floor() as i64,
        )
    };
    let mut cells_ids: Vec<Vec<usize>> = Vec::with_capacity(raw_cells.len());
    for poly in &raw_cells {
        let mut ids: Vec<usize> = Vec::with_capacity(poly.len());
        for &p in poly {
            let (kx, ky) = key(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = grid.get(&(kx + dx, ky + dy)) {
                        for &v in list {
                            if dist(vertices[v], p) <= tol {
                                found = Some(v);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                vertices.push(p);
                grid.entry((kx, ky)).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            });
            if ids.last() != Some(&id) {
                ids.push(id);
            }
        }
        while ids.len() > 1 && ids.first() == ids.last() {
            ids.pop();
        }
        cells_ids.push(ids);
    }

    let phys: Vec<Point> = vertices.iter().map(|&p| from_s(p)).collect();
    let mut edge_owner: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (c, ids) in cells_ids.iter().enumerate() {
        let n = ids.len();
        for k in 0..n {
            let (a, b) = (ids[k], ids[(k + 1) % n]);
            edge_owner.entry((a.min(b), a.max(b))).or_default().push(c);
        }
    }
    let mut cells = Vec::with_capacity(cells_ids.len());
    for (c, ids) in cells_ids.into_iter().enumerate() {
        let poly: Vec<Point> = ids.iter().map(|&v| phys[v]).collect();
        let area = shoelace(&poly);
        let n = ids.len();
        let mut segments = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (ids[k], ids[(k + 1) % n]);
            let (pa, pb) = (phys[a], phys[b]);
            let len = dist(pa, pb);
            let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
            let owners = &edge_owner[&(a.min(b), a.max(b))];
            let neighbor = match owners.as_slice() {
                [_] => None,
                [x, y] => Some(if *x == c { *y } else { *x }),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "Voronoi edge ({a}, {b}) is shared by {} cells",
                        owners.len()
                    )))
                }
            };
            segments.push(Segment {
                a,
                b,
                length: len,
                normal,
                neighbor,
            });
        }
        cells.push(Cell {
            vertices: ids,
            area,
            segments,
        });
    }
    Ok(VoronoiPartition {
        vertices: phys,
        cells,
        domain: domain.clone(),
    })
}
