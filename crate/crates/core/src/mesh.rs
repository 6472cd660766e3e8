//! Structured simplicial meshes of intervals and axis-aligned rectangles.
//!
//! Nodes, elements and boundary facets are stored in flat arrays. A 1D mesh
//! has 2 nodes per element and 1 node per facet; a 2D mesh has 3 nodes per
//! (counterclockwise) triangle and 2 nodes per boundary edge.
//!
//! Facet markers: in 1D `0` is the left end and `1` the right end; in 2D the
//! rectangle sides are `0` bottom, `1` right, `2` top, `3` left.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    elements: Vec<usize>,
    facet_nodes: Vec<usize>,
    facet_markers: Vec<u32>,
    h: f64,
}

/// How a node of a refined mesh was created: a copy of a parent node
/// (`[i, i]`) or the midpoint of the parent edge `[a, b]`.
pub type NodeParents = Vec<[usize; 2]>;

pub fn build_interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidRange { lower: a, upper: b });
    }
    if n == 0 {
        return Err(Error::InvalidSize("interval mesh needs at least one element".into()));
    }
    let coords: Vec<f64> = (0..=n)
        .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
        .collect();
    let elements = (0..n).flat_map(|i| [i, i + 1]).collect();
    Mesh::from_parts(1, coords, elements, vec![0, n], vec![0, 1])
}

/// Structured triangulation of the rectangle `[lower, upper]`, every cell
/// split along its lower-left to upper-right diagonal.
pub fn build_rect_mesh(nx: usize, ny: usize, lower: [f64; 2], upper: [f64; 2]) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidSize(format!(
            "rectangle mesh needs nx, ny >= 1 (got {nx} x {ny})"
        )));
    }
    let finite = lower.iter().chain(upper.iter()).all(|c| c.is_finite());
    if !finite || !(lower[0] < upper[0]) || !(lower[1] < upper[1]) {
        return Err(Error::DegenerateRectangle { lower, upper });
    }
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let lerp = |lo: f64, hi: f64, k: usize, n: usize| {
        if k == n {
            hi
        } else {
            lo + (hi - lo) * k as f64 / n as f64
        }
    };
    let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push(lerp(lower[0], upper[0], i, nx));
            coords.push(lerp(lower[1], upper[1], j, ny));
        }
    }
    let mut elements = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (n00, n10, n01, n11) = (node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1));
            elements.extend_from_slice(&[n00, n10, n11]);
            elements.extend_from_slice(&[n00, n11, n01]);
        }
    }
    let mut facet_nodes = Vec::new();
    let mut facet_markers = Vec::new();
    for i in 0..nx {
        facet_nodes.extend_from_slice(&[node(i, 0), node(i + 1, 0)]);
        facet_markers.push(0);
    }
    for j in 0..ny {
        facet_nodes.extend_from_slice(&[node(nx, j), node(nx, j + 1)]);
        facet_markers.push(1);
    }
    for i in (0..nx).rev() {
        facet_nodes.extend_from_slice(&[node(i + 1, ny), node(i, ny)]);
        facet_markers.push(2);
    }
    for j in (0..ny).rev() {
        facet_nodes.extend_from_slice(&[node(0, j + 1), node(0, j)]);
        facet_markers.push(3);
    }
    Mesh::from_parts(2, coords, elements, facet_nodes, facet_markers)
}

pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    refine_uniform_with_parents(mesh).0
}

/// Uniform refinement (bisection in 1D, red refinement in 2D). Parent nodes
/// keep their indices; new midpoint nodes are appended in order of first
/// appearance while sweeping the elements.
pub fn refine_uniform_with_parents(mesh: &Mesh) -> (Mesh, NodeParents) {
    let dim = mesh.dim;
    let mut coords = mesh.coords.clone();
    let mut parents: NodeParents = (0..mesh.n_nodes()).map(|i| [i, i]).collect();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();

    let mut midpoint = |a: usize, b: usize, coords: &mut Vec<f64>, parents: &mut NodeParents| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let id = parents.len();
            for d in 0..dim {
                let m = 0.5 * (coords[a * dim + d] + coords[b * dim + d]);
                coords.push(m);
            }
            parents.push([key.0, key.1]);
            id
        })
    };

    let mut elements = Vec::with_capacity(mesh.elements.len() * if dim == 1 { 2 } else { 4 });
    for e in 0..mesh.n_elements() {
        let el = mesh.element(e);
        if dim == 1 {
            let m = midpoint(el[0], el[1], &mut coords, &mut parents);
            elements.extend_from_slice(&[el[0], m, m, el[1]]);
        } else {
            let (a, b, c) = (el[0], el[1], el[2]);
            let ab = midpoint(a, b, &mut coords, &mut parents);
            let bc = midpoint(b, c, &mut coords, &mut parents);
            let ca = midpoint(c, a, &mut coords, &mut parents);
            elements.extend_from_slice(&[a, ab, ca, ab, b, bc, ca, bc, c, ab, bc, ca]);
        }
    }

    let mut facet_nodes = Vec::new();
    let mut facet_markers = Vec::new();
    for f in 0..mesh.n_facets() {
        let nodes = mesh.facet(f);
        let marker = mesh.facet_markers[f];
        if dim == 1 {
            facet_nodes.push(nodes[0]);
            facet_markers.push(marker);
        } else {
            let m = midpoint(nodes[0], nodes[1], &mut coords, &mut parents);
            facet_nodes.extend_from_slice(&[nodes[0], m, m, nodes[1]]);
            facet_markers.extend_from_slice(&[marker, marker]);
        }
    }

    let h = max_edge_length(dim, &coords, &elements);
    let refined = Mesh {
        dim,
        coords,
        elements,
        facet_nodes,
        facet_markers,
        h,
    };
    (refined, parents)
}

/// Prolongs nodal values of a P1 function through one refinement step.
pub fn prolong_nodal(parents: &NodeParents, coarse: &[f64]) -> Vec<f64> {
    parents
        .iter()
        .map(|&[a, b]| if a == b { coarse[a] } else { 0.5 * (coarse[a] + coarse[b]) })
        .collect()
}

fn max_edge_length(dim: usize, coords: &[f64], elements: &[usize]) -> f64 {
    let npe = dim + 1;
    let dist = |a: usize, b: usize| {
        (0..dim)
            .map(|d| (coords[a * dim + d] - coords[b * dim + d]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    elements
        .chunks_exact(npe)
        .flat_map(|el| {
            (0..npe).flat_map(move |i| ((i + 1)..npe).map(move |j| (el[i], el[j])))
        })
        .map(|(a, b)| dist(a, b))
        .fold(0.0, f64::max)
}

impl Mesh {
    /// Builds a mesh from flat arrays and validates every invariant.
    pub fn from_parts(
        dim: usize,
        coords: Vec<f64>,
        elements: Vec<usize>,
        facet_nodes: Vec<usize>,
        facet_markers: Vec<u32>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {dim}")));
        }
        if !coords.len().is_multiple_of(dim) || !elements.len().is_multiple_of(dim + 1) || !facet_nodes.len().is_multiple_of(dim) {
            return Err(Error::InvalidMesh("array lengths inconsistent with dimension".into()));
        }
        if facet_nodes.len() / dim != facet_markers.len() {
            return Err(Error::InvalidMesh("facet marker count does not match facet count".into()));
        }
        let n_nodes = coords.len() / dim;
        if let Some(&bad) = elements.iter().chain(&facet_nodes).find(|&&i| i >= n_nodes) {
            return Err(Error::InvalidMesh(format!("node index {bad} out of range ({n_nodes} nodes)")));
        }
        let h = max_edge_length(dim, &coords, &elements);
        let mesh = Mesh {
            dim,
            coords,
            elements,
            facet_nodes,
            facet_markers,
            h,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn n_facets(&self) -> usize {
        self.facet_markers.len()
    }

    /// Maximal element edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.dim + 1;
        &self.elements[e * npe..(e + 1) * npe]
    }

    pub fn facet(&self, f: usize) -> &[usize] {
        &self.facet_nodes[f * self.dim..(f + 1) * self.dim]
    }

    pub fn facet_marker(&self, f: usize) -> u32 {
        self.facet_markers[f]
    }

    /// Signed length (1D) or area (2D) of element `e`.
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = self.element(e);
        if self.dim == 1 {
            self.node(el[1])[0] - self.node(el[0])[0]
        } else {
            let (a, b, c) = (self.node(el[0]), self.node(el[1]), self.node(el[2]));
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_measure(e)).sum()
    }

    /// Length of boundary facet `f` (1 for a boundary point in 1D).
    pub fn facet_measure(&self, f: usize) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let nodes = self.facet(f);
            let (a, b) = (self.node(nodes[0]), self.node(nodes[1]));
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`; unused coordinates are zero.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for d in 0..self.dim {
            lo[d] = f64::INFINITY;
            hi[d] = f64::NEG_INFINITY;
        }
        for i in 0..self.n_nodes() {
            for (d, &x) in self.node(i).iter().enumerate() {
                lo[d] = lo[d].min(x);
                hi[d] = hi[d].max(x);
            }
        }
        (lo, hi)
    }

    /// Nodes lying on at least one boundary facet, sorted.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut nodes = self.facet_nodes.clone();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn validate(&self) -> Result<()> {
        let n_nodes = self.n_nodes();
        if n_nodes == 0 || self.n_elements() == 0 {
            return Err(Error::InvalidMesh("mesh has no nodes or no elements".into()));
        }
        if self.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMesh("non-finite node coordinate".into()));
        }
        if let Some(&bad) = self.elements.iter().chain(&self.facet_nodes).find(|&&i| i >= n_nodes) {
            return Err(Error::InvalidMesh(format!("node index {bad} out of range ({n_nodes} nodes)")));
        }
        let (lo, hi) = self.bounding_box();
        let scale = (0..self.dim).map(|d| hi[d] - lo[d]).fold(0.0, f64::max).max(1.0);
        for e in 0..self.n_elements() {
            let measure = self.element_measure(e);
            if !(measure > GEOM_TOL * scale.powi(self.dim as i32)) {
                return Err(Error::InvalidMesh(format!("element {e} has non-positive measure {measure}")));
            }
        }
        let on_boundary = |p: &[f64]| {
            (0..self.dim).any(|d| (p[d] - lo[d]).abs() <= GEOM_TOL * scale || (p[d] - hi[d]).abs() <= GEOM_TOL * scale)
        };
        for f in 0..self.n_facets() {
            if let Some(&i) = self.facet(f).iter().find(|&&i| !on_boundary(self.node(i))) {
                return Err(Error::InvalidMesh(format!("facet {f} node {i} is not on the boundary")));
            }
            let nodes = self.facet(f);
            let mut mid = [0.0; 2];
            for &i in nodes {
                for (d, x) in self.node(i).iter().enumerate() {
                    mid[d] += x / nodes.len() as f64;
                }
            }
            if !on_boundary(&mid[..self.dim]) {
                return Err(Error::InvalidMesh(format!("facet {f} cuts through the interior")));
            }
        }
        if self.dim == 2 {
            let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
            for e in 0..self.n_elements() {
                let el = self.element(e);
                for k in 0..3 {
                    let (a, b) = (el[k], el[(k + 1) % 3]);
                    *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            let mut facet_edges: HashMap<(usize, usize), usize> = HashMap::new();
            for f in 0..self.n_facets() {
                let nodes = self.facet(f);
                *facet_edges.entry((nodes[0].min(nodes[1]), nodes[0].max(nodes[1]))).or_default() += 1;
            }
            for (edge, &count) in &edge_count {
                let is_facet = facet_edges.contains_key(edge);
                match (count, is_facet) {
                    (1, true) | (2, false) => {}
                    (1, false) => {
                        return Err(Error::InvalidMesh(format!("edge {edge:?} has one element but no boundary facet")))
                    }
                    _ => {
                        return Err(Error::InvalidMesh(format!(
                            "edge {edge:?} shared by {count} elements (boundary facet: {is_facet})"
                        )))
                    }
                }
            }
            if let Some((edge, _)) = facet_edges.iter().find(|(e, &c)| c > 1 || !edge_count.contains_key(e)) {
                return Err(Error::InvalidMesh(format!("facet {edge:?} duplicated or not an element edge")));
            }
        }
        Ok(())
    }

    /// Plain-text dump: header `dim n_nodes n_elements n_facets`, then node
    /// coordinates, 0-based element indices, and facet indices followed by the marker.
    pub fn to_dump_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {} {}", self.dim, self.n_nodes(), self.n_elements(), self.n_facets());
        for i in 0..self.n_nodes() {
            let line: Vec<String> = self.node(i).iter().map(|x| format!("{x:.17e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        for e in 0..self.n_elements() {
            let line: Vec<String> = self.element(e).iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        for f in 0..self.n_facets() {
            let mut line: Vec<String> = self.facet(f).iter().map(usize::to_string).collect();
            line.push(self.facet_markers[f].to_string());
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Parses the format written by [`Mesh::to_dump_string`] and validates the result.
    pub fn from_dump_str(text: &str) -> Result<Self> {
        // Counts come from untrusted input; cap them by the available lines
        // so a bogus header cannot trigger a huge allocation.
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line: usize, message: String| Error::MeshParse { line, message };

        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let fields: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(hline, format!("bad header field {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let &[dim, n_nodes, n_elements, n_facets] = fields.as_slice() else {
            return Err(parse_err(hline, format!("header needs 4 fields, found {}", fields.len())));
        };
        if dim != 1 && dim != 2 {
            return Err(parse_err(hline, format!("unsupported dimension {dim}")));
        }
        let remaining = text.lines().count();
        n_nodes
            .checked_add(n_elements)
            .and_then(|s| s.checked_add(n_facets))
            .filter(|&s| s <= remaining)
            .ok_or_else(|| parse_err(hline, "header counts exceed the number of lines".into()))?;

        let mut coords = Vec::with_capacity(n_nodes * dim);
        for _ in 0..n_nodes {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "unexpected end of input in nodes".into()))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(ln, format!("bad coordinate {t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(parse_err(ln, format!("expected {dim} coordinates, found {}", vals.len())));
            }
            coords.extend(vals);
        }
        let mut read_indices = |count: usize, width: usize, what: &str| -> Result<Vec<Vec<usize>>> {
            let mut rows = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, l) = lines
                    .next()
                    .ok_or_else(|| parse_err(0, format!("unexpected end of input in {what}")))?;
                let vals: Vec<usize> = l
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| parse_err(ln, format!("bad index {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if vals.len() != width {
                    return Err(parse_err(ln, format!("expected {width} fields in {what}, found {}", vals.len())));
                }
                rows.push(vals);
            }
            Ok(rows)
        };
        let elements: Vec<usize> = read_indices(n_elements, dim + 1, "elements")?.concat();
        let facets = read_indices(n_facets, dim + 1, "facets")?;
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing data after facets".into()));
        }
        let mut facet_nodes = Vec::with_capacity(n_facets * dim);
        let mut facet_markers = Vec::with_capacity(n_facets);
        for row in facets {
            facet_nodes.extend_from_slice(&row[..dim]);
            facet_markers.push(
                u32::try_from(row[dim]).map_err(|_| Error::InvalidMesh(format!("marker {} too large", row[dim])))?,
            );
        }
        Mesh::from_parts(dim, coords, elements, facet_nodes, facet_markers)
    }
}
