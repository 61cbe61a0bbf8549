//! Uniform unfitted triangulation of [-1,1]^2 with entity classification and
//! global Lagrange DOF numbering.
//!
//! Each of the N^2 squares is split by its negative-slope diagonal, giving
//! 2 N^2 congruent right triangles. For every interior edge the neighbor with
//! the smaller element id is `T_e^1`; the edge normal points from `T_e^1`
//! into `T_e^2` and the tangent is the normal rotated by +90 degrees.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    classify_element, edge_intersections, rot90, CutPolicy, CutTopology, LevelSet, Point, Side,
    Triangle, Vector, SNAP_REL,
};

#[derive(Clone, Debug)]
pub struct Edge {
    /// Vertex ids, smaller first.
    pub vertices: [usize; 2],
    /// Neighbor elements; the first one has the smaller element id.
    pub elements: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements.1.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct MeshTopology {
    pub n: usize,
    pub h: f64,
    pub vertices: Vec<Point>,
    /// Vertex triples, counterclockwise.
    pub elements: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Edge id of local edge i (running from vertex i to vertex i+1).
    pub element_edges: Vec<[usize; 3]>,
}

impl MeshTopology {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn triangle(&self, e: usize) -> Triangle {
        let v = self.elements[e];
        Triangle([self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]])
    }

    /// Element diameter; all elements are congruent on this mesh.
    pub fn h_t(&self) -> f64 {
        self.h * 2f64.sqrt()
    }

    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn edge_geometry(&self, e: usize) -> EdgeGeometry {
        let edge = &self.edges[e];
        let a = self.vertices[edge.vertices[0]];
        let b = self.vertices[edge.vertices[1]];
        let d = b - a;
        let length = d.norm();
        let dir = d / length;
        let mut normal = Vector::new(dir.y, -dir.x);
        let c1 = self.triangle(edge.elements.0).barycenter();
        let reference = match edge.elements.1 {
            Some(t2) => self.triangle(t2).barycenter() - c1,
            None => {
                let mid = Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
                mid - c1
            }
        };
        if normal.dot(&reference) < 0.0 {
            normal = -normal;
        }
        EdgeGeometry {
            endpoints: (a, b),
            normal,
            tangent: rot90(normal),
            length,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EdgeGeometry {
    /// Endpoints in canonical order (smaller vertex id first).
    pub endpoints: (Point, Point),
    /// Unit normal from `T_e^1` to `T_e^2` (outward on boundary edges).
    pub normal: Vector,
    /// Normal rotated by +90 degrees.
    pub tangent: Vector,
    pub length: f64,
}

impl EdgeGeometry {
    pub fn point_at(&self, t: f64) -> Point {
        self.endpoints.0 + (self.endpoints.1 - self.endpoints.0) * t
    }
}

/// Build the uniform unfitted mesh with N subdivisions per axis.
pub fn build_uniform_mesh(n: usize) -> MeshTopology {
    assert!(n >= 2, "mesh must have at least 2 subdivisions per axis");
    let h = 2.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(-1.0 + i as f64 * h, -1.0 + j as f64 * h));
        }
    }

    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let bl = vid(i, j);
            let br = vid(i + 1, j);
            let tl = vid(i, j + 1);
            let tr = vid(i + 1, j + 1);
            // negative-slope diagonal tl-br
            elements.push([bl, br, tl]);
            elements.push([br, tr, tl]);
        }
    }

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut element_edges = Vec::with_capacity(elements.len());
    for (t, verts) in elements.iter().enumerate() {
        let mut ids = [0usize; 3];
        for l in 0..3 {
            let a = verts[l];
            let b = verts[(l + 1) % 3];
            let key = (a.min(b), a.max(b));
            let id = match edge_index.get(&key) {
                Some(&id) => {
                    edges[id].elements.1 = Some(t);
                    id
                }
                None => {
                    let id = edges.len();
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        elements: (t, None),
                    });
                    edge_index.insert(key, id);
                    id
                }
            };
            ids[l] = id;
        }
        element_edges.push(ids);
    }

    MeshTopology {
        n,
        h,
        vertices,
        elements,
        edges,
        element_edges,
    }
}

/// Sub-edge data of a crossed edge.
#[derive(Clone, Copy, Debug)]
pub struct EdgeSplit {
    /// Crossing parameter along the canonical edge direction.
    pub t: f64,
    pub point: Point,
    /// Side of the first part [0, t].
    pub first_side: Side,
    pub len_first: f64,
    pub len_second: f64,
}

impl EdgeSplit {
    pub fn len(&self, side: Side) -> f64 {
        if side == self.first_side {
            self.len_first
        } else {
            self.len_second
        }
    }
}

/// How an edge relates to the interface.
#[derive(Clone, Debug)]
pub enum EdgeKind {
    /// Entirely on one side.
    Plain(Side),
    /// Runs along the interface (every sample inside the snap band).
    OnInterface,
    /// Crossed once; carries the sub-edge split.
    Crossed(EdgeSplit),
}

/// Classification of all mesh entities against a level set.
#[derive(Clone, Debug)]
pub struct EntityClasses {
    /// Per-element cut topology.
    pub cuts: Vec<CutTopology>,
    pub interface_elements: Vec<usize>,
    pub edge_kind: Vec<EdgeKind>,
    /// Interior crossed edges.
    pub interface_edges: Vec<usize>,
    /// Boundary edges crossed by the interface.
    pub boundary_interface_edges: Vec<usize>,
    /// Interior uncrossed edges of interface elements.
    pub flux_edges: Vec<usize>,
    /// Edge belongs to at least one interface element.
    pub touches_interface: Vec<bool>,
}

impl EntityClasses {
    pub fn is_interface_element(&self, e: usize) -> bool {
        self.cuts[e].is_interface()
    }

    /// Side of a non-interface element.
    pub fn element_side(&self, e: usize) -> Option<Side> {
        self.cuts[e].side()
    }
}

/// Classify every element and edge of the mesh. `q` is the arc order used
/// for per-element interface arcs; `policy` decides whether unresolved cuts
/// abort or degrade to majority-side elements.
pub fn classify_entities(
    mesh: &MeshTopology,
    ls: &LevelSet,
    q: usize,
    policy: CutPolicy,
) -> Result<EntityClasses> {
    let snap = SNAP_REL * mesh.h;

    let cuts: Vec<CutTopology> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            classify_element(ls, &mesh.triangle(e), q, snap, policy).map_err(|err| match err {
                Error::BadCutCount { count, .. } => Error::BadCutCount { element: e, count },
                Error::SameEdgeCut { .. } => Error::SameEdgeCut { element: e },
                other => other.with_element(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let interface_elements: Vec<usize> = cuts
        .iter()
        .enumerate()
        .filter_map(|(e, c)| c.is_interface().then_some(e))
        .collect();

    let mut touches_interface = vec![false; mesh.edges.len()];
    for &e in &interface_elements {
        for &id in &mesh.element_edges[e] {
            touches_interface[id] = true;
        }
    }

    let edge_kind: Vec<EdgeKind> = (0..mesh.edges.len())
        .into_par_iter()
        .map(|id| {
            let g = mesh.edge_geometry(id);
            let (a, b) = g.endpoints;
            let majority_side = || {
                let mut plus = 0usize;
                let mut minus = 0usize;
                for k in 0..=32 {
                    let t = k as f64 / 32.0;
                    let phi = ls.evaluate(g.point_at(t));
                    if phi >= snap {
                        plus += 1;
                    } else if phi <= -snap {
                        minus += 1;
                    }
                }
                if plus >= minus {
                    Side::Plus
                } else {
                    Side::Minus
                }
            };
            let roots = match edge_intersections(ls, a, b, snap) {
                Ok(r) => r,
                Err(_) if policy == CutPolicy::Relaxed => {
                    return Ok(EdgeKind::Plain(majority_side()))
                }
                Err(err) => return Err(err.with_element(mesh.edges[id].elements.0)),
            };
            match roots.len() {
                0 => {
                    // definite side from the densest sample available
                    let mut side = None;
                    for k in 0..=32 {
                        let t = k as f64 / 32.0;
                        let phi = ls.evaluate(g.point_at(t));
                        if phi.abs() >= snap {
                            side = Some(Side::from_phi(phi, snap));
                            break;
                        }
                    }
                    Ok(match side {
                        Some(s) => EdgeKind::Plain(s),
                        None => EdgeKind::OnInterface,
                    })
                }
                1 => {
                    let (t, point) = roots[0];
                    let phi_first = ls.evaluate(g.point_at(0.5 * t));
                    let first_side = Side::from_phi(phi_first, snap);
                    Ok(EdgeKind::Crossed(EdgeSplit {
                        t,
                        point,
                        first_side,
                        len_first: t * g.length,
                        len_second: (1.0 - t) * g.length,
                    }))
                }
                _ if policy == CutPolicy::Relaxed => Ok(EdgeKind::Plain(majority_side())),
                c => Err(Error::TooManyCrossings {
                    count: c,
                    element: Some(mesh.edges[id].elements.0),
                }),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut interface_edges = Vec::new();
    let mut boundary_interface_edges = Vec::new();
    let mut flux_edges = Vec::new();
    for (id, kind) in edge_kind.iter().enumerate() {
        let boundary = mesh.edges[id].is_boundary();
        match kind {
            EdgeKind::Crossed(_) => {
                if boundary {
                    boundary_interface_edges.push(id);
                } else {
                    interface_edges.push(id);
                }
            }
            EdgeKind::Plain(_) if !boundary && touches_interface[id] => flux_edges.push(id),
            _ => {}
        }
    }

    Ok(EntityClasses {
        cuts,
        interface_elements,
        edge_kind,
        interface_edges,
        boundary_interface_edges,
        flux_edges,
        touches_interface,
    })
}

/// Lagrange node coordinates of one element in local ordering: the three
/// vertices, then p-1 nodes per edge (edge i from vertex i to vertex i+1),
/// then the interior node for p = 3.
pub fn lagrange_nodes(p: usize, tri: &Triangle) -> Vec<Point> {
    let mut nodes = Vec::with_capacity((p + 1) * (p + 2) / 2);
    for i in 0..3 {
        nodes.push(tri.vertex(i));
    }
    for e in 0..3 {
        let (a, b) = tri.edge(e);
        for k in 1..p {
            let t = k as f64 / p as f64;
            nodes.push(a + (b - a) * t);
        }
    }
    if p == 3 {
        nodes.push(tri.barycenter());
    }
    nodes
}

/// Number of Lagrange nodes per element.
pub fn local_dim(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// Global DOF numbering for continuous Lagrange elements.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub degree: usize,
    pub n_dofs: usize,
    /// Global dof per local node, per element.
    pub element_dofs: Vec<Vec<usize>>,
    /// One coordinate per global dof.
    pub coords: Vec<Point>,
    pub on_boundary: Vec<bool>,
    pub n_vertices: usize,
}

impl DofMap {
    /// Global dof of a mesh vertex (vertex dofs lead the numbering).
    pub fn vertex_dof(&self, vertex: usize) -> usize {
        vertex
    }
}

/// Build the global DOF map for degree p in {2, 3}.
pub fn build_dof_map(mesh: &MeshTopology, p: usize) -> Result<DofMap> {
    if p != 2 && p != 3 {
        return Err(Error::UnsupportedDegree(p));
    }
    let nv = mesh.vertices.len();
    let ne = mesh.edges.len();
    let per_edge = p - 1;
    let per_element = if p == 3 { 1 } else { 0 };
    let n_dofs = nv + ne * per_edge + mesh.n_elements() * per_element;

    let mut coords = vec![Point::origin(); n_dofs];
    for (v, &pnt) in mesh.vertices.iter().enumerate() {
        coords[v] = pnt;
    }

    let mut element_dofs = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let tri = mesh.triangle(e);
        let nodes = lagrange_nodes(p, &tri);
        let verts = mesh.elements[e];
        let mut dofs = Vec::with_capacity(local_dim(p));
        for l in 0..3 {
            dofs.push(verts[l]);
        }
        for l in 0..3 {
            let a = verts[l];
            let b = verts[(l + 1) % 3];
            let id = mesh.element_edges[e][l];
            let canonical = a < b; // local direction matches stored direction
            for k in 0..per_edge {
                let slot = if canonical { k } else { per_edge - 1 - k };
                let dof = nv + id * per_edge + slot;
                dofs.push(dof);
                coords[dof] = nodes[3 + l * per_edge + k];
            }
        }
        for k in 0..per_element {
            let dof = nv + ne * per_edge + e * per_element + k;
            dofs.push(dof);
            coords[dof] = nodes[3 + 3 * per_edge + k];
        }
        element_dofs.push(dofs);
    }

    let mut on_boundary = vec![false; n_dofs];
    for (id, edge) in mesh.edges.iter().enumerate() {
        if edge.is_boundary() {
            on_boundary[edge.vertices[0]] = true;
            on_boundary[edge.vertices[1]] = true;
            for k in 0..per_edge {
                on_boundary[nv + id * per_edge + k] = true;
            }
        }
    }

    Ok(DofMap {
        degree: p,
        n_dofs,
        element_dofs,
        coords,
        on_boundary,
        n_vertices: nv,
    })
}

/// Plain-text mesh listing for debugging: one record per line, index first.
pub fn dump_mesh(mesh: &MeshTopology, out: &mut dyn Write) -> std::io::Result<()> {
    for (i, v) in mesh.vertices.iter().enumerate() {
        writeln!(out, "v {i} {:.16e} {:.16e}", v.x, v.y)?;
    }
    for (i, t) in mesh.elements.iter().enumerate() {
        writeln!(out, "t {i} {} {} {}", t[0], t[1], t[2])?;
    }
    for (i, e) in mesh.edges.iter().enumerate() {
        match e.elements.1 {
            Some(t2) => writeln!(
                out,
                "e {i} {} {} {} {}",
                e.vertices[0], e.vertices[1], e.elements.0, t2
            )?,
            None => writeln!(
                out,
                "e {i} {} {} {} -",
                e.vertices[0], e.vertices[1], e.elements.0
            )?,
        }
    }
    Ok(())
}
