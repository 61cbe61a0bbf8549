//! Implicit interface geometry on triangles: level sets, cut detection,
//! fictitious elements, interface arcs and curved subregions.
//!
//! All routines are pure functions of their inputs and can be called from
//! element-parallel loops.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

/// Snap tolerance relative to the element scale: nodes with |phi| below
/// `SNAP_REL * scale` are treated as lying on the interface and are assigned
/// to the minus side.
pub const SNAP_REL: f64 = 1e-12;

/// Number of sign-scan intervals per segment used to seed root bracketing.
const SCAN_INTERVALS: usize = 32;

/// Absolute bisection tolerance on the segment parameter.
const BISECT_TOL: f64 = 1e-14;

/// Rotate a vector by +90 degrees.
pub fn rot90(v: Vector) -> Vector {
    Vector::new(-v.y, v.x)
}

/// Side of the interface. `Plus` where the level set is positive, `Minus`
/// where it is negative; points inside the snap band count as `Minus`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn from_phi(phi: f64, snap: f64) -> Side {
        if phi >= snap {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// Implicit description of the interface curve as the zero set of a scalar
/// field. The shipped instances cover the scenarios used by the studies;
/// `Custom` accepts arbitrary callables.
#[derive(Clone)]
pub enum LevelSet {
    /// a x + b y - c = 0
    Line { a: f64, b: f64, c: f64 },
    /// y - (x^2 + 2x + c) = 0
    Parabola { c: f64 },
    /// x^2 + y^2 - r0^2 = 0
    Circle { r0: f64 },
    /// (x^2 + y^2) (1 + 0.6 sin 6θ) - (1.5 π / 6.28)^4 = 0
    Flower,
    Custom {
        phi: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        grad: Arc<dyn Fn(Point) -> Vector + Send + Sync>,
    },
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSet::Line { a, b, c } => write!(f, "Line({a}, {b}, {c})"),
            LevelSet::Parabola { c } => write!(f, "Parabola({c})"),
            LevelSet::Circle { r0 } => write!(f, "Circle({r0})"),
            LevelSet::Flower => write!(f, "Flower"),
            LevelSet::Custom { .. } => write!(f, "Custom"),
        }
    }
}

const FLOWER_AMPLITUDE: f64 = 0.6;

/// Flower threshold (1.5 π / 6.28)^4.
pub fn flower_threshold() -> f64 {
    (1.5 * PI / 6.28).powi(4)
}

impl LevelSet {
    pub fn line(a: f64, b: f64, c: f64) -> Self {
        LevelSet::Line { a, b, c }
    }

    pub fn parabola(c: f64) -> Self {
        LevelSet::Parabola { c }
    }

    pub fn circle(r0: f64) -> Self {
        LevelSet::Circle { r0 }
    }

    pub fn flower() -> Self {
        LevelSet::Flower
    }

    pub fn evaluate(&self, p: Point) -> f64 {
        let (x, y) = (p.x, p.y);
        match self {
            LevelSet::Line { a, b, c } => a * x + b * y - c,
            LevelSet::Parabola { c } => y - (x * x + 2.0 * x + c),
            LevelSet::Circle { r0 } => x * x + y * y - r0 * r0,
            LevelSet::Flower => {
                // The two-argument angle keeps the formula finite on x = 0;
                // sin(6θ) has period π/3 so the branch choice is immaterial.
                let theta = y.atan2(x);
                let r2 = x * x + y * y;
                r2 * (1.0 + FLOWER_AMPLITUDE * (6.0 * theta).sin()) - flower_threshold()
            }
            LevelSet::Custom { phi, .. } => phi(p),
        }
    }

    pub fn gradient(&self, p: Point) -> Vector {
        let (x, y) = (p.x, p.y);
        match self {
            LevelSet::Line { a, b, .. } => Vector::new(*a, *b),
            LevelSet::Parabola { .. } => Vector::new(-2.0 * x - 2.0, 1.0),
            LevelSet::Circle { .. } => Vector::new(2.0 * x, 2.0 * y),
            LevelSet::Flower => {
                let theta = y.atan2(x);
                let s = (6.0 * theta).sin();
                let c = (6.0 * theta).cos();
                let a = FLOWER_AMPLITUDE;
                Vector::new(
                    2.0 * x * (1.0 + a * s) - 6.0 * a * y * c,
                    2.0 * y * (1.0 + a * s) + 6.0 * a * x * c,
                )
            }
            LevelSet::Custom { grad, .. } => grad(p),
        }
    }

    /// Unit normal of the interface pointing from the minus into the plus side.
    pub fn unit_normal(&self, p: Point) -> Vector {
        let g = self.gradient(p);
        g / g.norm()
    }
}

/// Triangle with counterclockwise vertex order. Local edge `i` runs from
/// vertex `i` to vertex `(i + 1) % 3`.
#[derive(Clone, Copy, Debug)]
pub struct Triangle(pub [Point; 3]);

impl Triangle {
    pub fn new(a: Point, b: Point, c: Point) -> Self {
        Triangle([a, b, c])
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.0[i]
    }

    pub fn edge(&self, i: usize) -> (Point, Point) {
        (self.0[i], self.0[(i + 1) % 3])
    }

    pub fn barycenter(&self) -> Point {
        let v = &self.0;
        Point::new(
            (v[0].x + v[1].x + v[2].x) / 3.0,
            (v[0].y + v[1].y + v[2].y) / 3.0,
        )
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.0;
        0.5 * ((v[1].x - v[0].x) * (v[2].y - v[0].y) - (v[2].x - v[0].x) * (v[1].y - v[0].y))
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn diameter(&self) -> f64 {
        (0..3)
            .map(|i| {
                let (a, b) = self.edge(i);
                (b - a).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Index of the longest edge.
    pub fn longest_edge(&self) -> usize {
        (0..3)
            .max_by(|&i, &j| {
                let li = (self.edge(i).1 - self.edge(i).0).norm();
                let lj = (self.edge(j).1 - self.edge(j).0).norm();
                li.partial_cmp(&lj).unwrap()
            })
            .unwrap()
    }
}

/// One interface crossing on the boundary of a triangle.
#[derive(Clone, Copy, Debug)]
pub struct EdgeCrossing {
    /// Local edge index the crossing sits on.
    pub edge: usize,
    /// Parameter along that edge in [0, 1].
    pub t: f64,
    pub point: Point,
    /// True when the crossing was snapped onto a vertex.
    pub at_vertex: bool,
}

impl EdgeCrossing {
    /// Position along the triangle boundary in [0, 3).
    pub fn boundary_param(&self) -> f64 {
        self.edge as f64 + self.t
    }
}

/// Cut pattern diagnostic: `TypeI` cuts pass through the two legs of the
/// right angle (the hypotenuse stays whole), `TypeII` cuts involve the
/// hypotenuse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutType {
    TypeI,
    TypeII,
}

/// Interface data of a cut element.
#[derive(Clone, Debug)]
pub struct InterfaceCut {
    /// The two boundary cut points, ordered by boundary parameter.
    pub crossings: [EdgeCrossing; 2],
    /// Points on the zero set from `crossings[0]` to `crossings[1]`,
    /// `q + 1` of them including both endpoints.
    pub arc_nodes: Vec<Point>,
    pub cut_type: CutType,
}

/// Result of classifying one triangle against the interface.
#[derive(Clone, Debug)]
pub enum CutTopology {
    NonInterface(Side),
    Interface(InterfaceCut),
}

impl CutTopology {
    pub fn is_interface(&self) -> bool {
        matches!(self, CutTopology::Interface(_))
    }

    pub fn side(&self) -> Option<Side> {
        match self {
            CutTopology::NonInterface(s) => Some(*s),
            CutTopology::Interface(_) => None,
        }
    }
}

/// How classification treats cuts that violate the mesh-resolution
/// assumptions (more than two boundary cut points, tangential touches).
/// `Strict` reports them as errors; `Relaxed` assigns the element to the
/// majority side and ignores the unresolved feature, which is the only way
/// to run interfaces whose curvature is not resolved by the mesh (flower
/// petal tips on coarse grids).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CutPolicy {
    #[default]
    Strict,
    Relaxed,
}

/// Sign class of a sampled level-set value with a dead band around zero.
#[derive(Clone, Copy, PartialEq, Eq)]
enum SignClass {
    Plus,
    Minus,
    Band,
}

fn sign_class(phi: f64, snap: f64) -> SignClass {
    if phi >= snap {
        SignClass::Plus
    } else if phi <= -snap {
        SignClass::Minus
    } else {
        SignClass::Band
    }
}

/// Bisect for the root of `phi(a + t (b - a))` inside a bracket with strictly
/// opposite definite signs at the ends.
fn bisect_segment(ls: &LevelSet, a: Point, b: Point, mut t0: f64, mut t1: f64, f0: f64) -> f64 {
    let mut sign0 = f0 > 0.0;
    while t1 - t0 > BISECT_TOL {
        let tm = 0.5 * (t0 + t1);
        let fm = ls.evaluate(a + (b - a) * tm);
        if fm == 0.0 {
            return tm;
        }
        if (fm > 0.0) == sign0 {
            t0 = tm;
            sign0 = fm > 0.0;
        } else {
            t1 = tm;
        }
    }
    0.5 * (t0 + t1)
}

/// Interface crossings of a straight segment, sorted by the segment
/// parameter. Endpoints inside the snap band are not reported as crossings.
/// More than two sign changes violate assumption (H1).
pub fn edge_intersections(
    ls: &LevelSet,
    a: Point,
    b: Point,
    snap: f64,
) -> Result<Vec<(f64, Point)>> {
    let mut crossings = Vec::new();
    let mut last_definite: Option<(f64, f64)> = None; // (t, phi)
    let mut changes = 0usize;
    for k in 0..=SCAN_INTERVALS {
        let t = k as f64 / SCAN_INTERVALS as f64;
        let phi = ls.evaluate(a + (b - a) * t);
        match sign_class(phi, snap) {
            SignClass::Band => continue,
            _ => {
                if let Some((tp, fp)) = last_definite {
                    if (fp > 0.0) != (phi > 0.0) {
                        changes += 1;
                        if changes > 2 {
                            return Err(Error::TooManyCrossings {
                                count: changes,
                                element: None,
                            });
                        }
                        let t_root = bisect_segment(ls, a, b, tp, t, fp);
                        crossings.push((t_root, a + (b - a) * t_root));
                    }
                }
                last_definite = Some((t, phi));
            }
        }
    }
    Ok(crossings)
}

/// Find a point of the zero set along the line `base + s * dir` near `s = 0`,
/// scanning outward for a bracket. `dir` is expected to be of unit length and
/// `span` limits the search to |s| <= span.
fn root_along_direction(ls: &LevelSet, base: Point, dir: Vector, span: f64) -> Option<Point> {
    let f_at = |s: f64| ls.evaluate(base + dir * s);
    let n = 64usize;
    let step = span / n as f64;
    let f0 = f_at(0.0);
    if f0 == 0.0 {
        return Some(base);
    }
    // Expand symmetrically so the bracket closest to the chord wins.
    let mut prev = [(0.0, f0), (0.0, f0)];
    for k in 1..=n {
        for (m, sgn) in [(0usize, 1.0f64), (1usize, -1.0f64)] {
            let s = sgn * k as f64 * step;
            let f = f_at(s);
            let (sp, fp) = prev[m];
            if fp != 0.0 && f != 0.0 && (f > 0.0) != (fp > 0.0) {
                let (mut s0, mut s1, mut f0) = if sp < s { (sp, s, fp) } else { (s, sp, f) };
                while s1 - s0 > BISECT_TOL * span.max(1.0) {
                    let sm = 0.5 * (s0 + s1);
                    let fm = f_at(sm);
                    if fm == 0.0 {
                        s0 = sm;
                        s1 = sm;
                        break;
                    }
                    if (fm > 0.0) == (f0 > 0.0) {
                        s0 = sm;
                        f0 = fm;
                    } else {
                        s1 = sm;
                    }
                }
                let s_root = 0.5 * (s0 + s1);
                return Some(base + dir * s_root);
            }
            if f == 0.0 {
                return Some(base + dir * s);
            }
            prev[m] = (s, f);
        }
    }
    None
}

/// Place `q + 1` nodes on the zero set between two cut points by root finding
/// along normals of the chord.
pub fn arc_points(ls: &LevelSet, p0: Point, p1: Point, q: usize) -> Result<Vec<Point>> {
    let chord = p1 - p0;
    let len = chord.norm();
    let normal = rot90(chord) / len;
    let mut nodes = Vec::with_capacity(q + 1);
    nodes.push(p0);
    for k in 1..q {
        let t = k as f64 / q as f64;
        let base = p0 + chord * t;
        let node = root_along_direction(ls, base, normal, len)
            .ok_or(Error::DegenerateCut { element: None })?;
        nodes.push(node);
    }
    nodes.push(p1);
    Ok(nodes)
}

/// Classify one triangle against the interface. `q` is the arc
/// parameterization order (the arc carries `q + 1` nodes); `snap` the
/// absolute snap tolerance on level-set values.
pub fn classify_element(
    ls: &LevelSet,
    tri: &Triangle,
    q: usize,
    snap: f64,
    policy: CutPolicy,
) -> Result<CutTopology> {
    let mut n_plus = 0usize;
    let mut n_minus = 0usize;
    let mut crossings: Vec<EdgeCrossing> = Vec::new();

    let mut scan_failed = false;
    for e in 0..3 {
        let (a, b) = tri.edge(e);
        for k in 0..=SCAN_INTERVALS {
            let t = k as f64 / SCAN_INTERVALS as f64;
            let phi = ls.evaluate(a + (b - a) * t);
            match sign_class(phi, snap) {
                SignClass::Plus => n_plus += 1,
                SignClass::Minus => n_minus += 1,
                SignClass::Band => {}
            }
        }
        match edge_intersections(ls, a, b, snap) {
            Ok(roots) => {
                for (t, point) in roots {
                    crossings.push(EdgeCrossing {
                        edge: e,
                        t,
                        point,
                        at_vertex: false,
                    });
                }
            }
            Err(err) => match policy {
                CutPolicy::Strict => return Err(err),
                CutPolicy::Relaxed => scan_failed = true,
            },
        }
    }

    let majority = if n_plus >= n_minus {
        Side::Plus
    } else {
        Side::Minus
    };

    if !(n_plus > 0 && n_minus > 0) {
        if n_plus == 0 && n_minus == 0 {
            return Err(Error::DegenerateCut { element: None });
        }
        return Ok(CutTopology::NonInterface(majority));
    }
    if scan_failed {
        return Ok(CutTopology::NonInterface(majority));
    }

    // Vertices inside the snap band are genuine cut points of a mixed-sign
    // element (the interface passes through the vertex into the interior).
    for v in 0..3 {
        if sign_class(ls.evaluate(tri.vertex(v)), snap) == SignClass::Band {
            crossings.push(EdgeCrossing {
                edge: v,
                t: 0.0,
                point: tri.vertex(v),
                at_vertex: true,
            });
        }
    }

    if crossings.len() != 2 {
        return match policy {
            CutPolicy::Strict => Err(Error::BadCutCount {
                element: usize::MAX,
                count: crossings.len(),
            }),
            CutPolicy::Relaxed => Ok(CutTopology::NonInterface(majority)),
        };
    }
    if crossings[0].edge == crossings[1].edge && !crossings[0].at_vertex && !crossings[1].at_vertex
    {
        return match policy {
            CutPolicy::Strict => Err(Error::SameEdgeCut { element: usize::MAX }),
            CutPolicy::Relaxed => Ok(CutTopology::NonInterface(majority)),
        };
    }

    crossings.sort_by(|a, b| a.boundary_param().partial_cmp(&b.boundary_param()).unwrap());
    let arc_nodes = match arc_points(ls, crossings[0].point, crossings[1].point, q) {
        Ok(nodes) => nodes,
        Err(err) => match policy {
            CutPolicy::Strict => return Err(err),
            CutPolicy::Relaxed => return Ok(CutTopology::NonInterface(majority)),
        },
    };

    let hypotenuse = tri.longest_edge();
    let cut_type = if crossings.iter().any(|c| c.edge == hypotenuse && !c.at_vertex) {
        CutType::TypeII
    } else {
        CutType::TypeI
    };

    Ok(CutTopology::Interface(InterfaceCut {
        crossings: [crossings[0], crossings[1]],
        arc_nodes,
        cut_type,
    }))
}

/// Element dilated by `lambda` about its barycenter.
#[derive(Clone, Debug)]
pub struct FictitiousTriangle {
    pub triangle: Triangle,
    pub lambda: f64,
    pub parent: Option<usize>,
}

/// Dilate a triangle about its barycenter: X = O + lambda (Y - O).
pub fn fictitious_element(tri: &Triangle, lambda: f64) -> FictitiousTriangle {
    assert!(lambda >= 1.0, "dilation factor must be >= 1");
    let o = tri.barycenter();
    let map = |v: Point| o + (v - o) * lambda;
    FictitiousTriangle {
        triangle: Triangle([map(tri.vertex(0)), map(tri.vertex(1)), map(tri.vertex(2))]),
        lambda,
        parent: None,
    }
}

/// Interface arc clipped by the fictitious element: `q + 1` nodes on the zero
/// set with endpoints on the dilated boundary.
pub fn extended_arc(ls: &LevelSet, fict: &FictitiousTriangle, q: usize) -> Result<Vec<Point>> {
    let tri = &fict.triangle;
    let snap = SNAP_REL * tri.diameter();
    let mut cuts: Vec<Point> = Vec::new();
    for e in 0..3 {
        let (a, b) = tri.edge(e);
        for (_, p) in edge_intersections(ls, a, b, snap)? {
            cuts.push(p);
        }
    }
    if cuts.len() != 2 {
        return Err(Error::DegenerateCut { element: None });
    }
    arc_points(ls, cuts[0], cuts[1], q)
}

/// Extended arc with geometric back-off of `lambda` toward 1 when the dilated
/// boundary is crossed more than twice (tight interface features). Returns
/// the arc and the dilation factor actually used.
pub fn extended_arc_with_backoff(
    ls: &LevelSet,
    tri: &Triangle,
    lambda: f64,
    q: usize,
) -> Result<(Vec<Point>, f64)> {
    let mut lam = lambda;
    for _ in 0..8 {
        let fict = fictitious_element(tri, lam);
        match extended_arc(ls, &fict, q) {
            Ok(arc) => return Ok((arc, lam)),
            Err(_) if lam > 1.0 + 1e-9 => lam = 1.0 + 0.5 * (lam - 1.0),
            Err(e) => return Err(e),
        }
    }
    let fict = fictitious_element(tri, 1.0);
    extended_arc(ls, &fict, q).map(|arc| (arc, 1.0))
}

/// One curved subregion of a cut element. The straight boundary runs through
/// `polygon` (cut point, passed vertices, cut point); `arc` closes the region
/// from the last polygon point back to the first.
#[derive(Clone, Debug)]
pub struct CurvedRegion {
    pub side: Side,
    pub polygon: Vec<Point>,
    pub arc: Vec<Point>,
}

/// Curved integration cell: the image of the reference triangle under
/// F(rho, t) = apex + rho (gamma(t) - apex) with gamma the arc.
#[derive(Clone, Debug)]
pub struct CurvedCell {
    pub apex: Point,
    pub arc: Vec<Point>,
}

impl CurvedRegion {
    /// Candidate fan anchors, in deterministic preference order. The straight
    /// part of the region is convex, so any of these lies inside it; the
    /// anchor must additionally see the arc under a monotone angle, which the
    /// quadrature validates per anchor.
    pub fn anchor_candidates(&self) -> Vec<Point> {
        let poly = &self.polygon;
        let n = poly.len();
        let chord_mid = Point::new(
            0.5 * (poly[0].x + poly[n - 1].x),
            0.5 * (poly[0].y + poly[n - 1].y),
        );
        let mut candidates = Vec::new();
        if n > 2 {
            candidates.push(poly[1]);
            if n > 3 {
                candidates.push(poly[n - 2]);
            }
            let mean = poly.iter().fold(Point::origin(), |acc, p| {
                Point::new(acc.x + p.x / n as f64, acc.y + p.y / n as f64)
            });
            candidates.push(mean);
        }
        candidates.push(chord_mid);
        candidates
    }

    /// Decompose into straight fan triangles plus one curved cell, all fanned
    /// from `anchor`.
    pub fn cells_with_anchor(&self, anchor: Point) -> (Vec<Triangle>, CurvedCell) {
        let poly = &self.polygon;
        let n = poly.len();
        debug_assert!(n >= 2);
        let mut tris = Vec::new();
        for i in 0..n - 1 {
            let t = Triangle([anchor, poly[i], poly[i + 1]]);
            if t.area() > 1e-30 {
                tris.push(t);
            }
        }
        (
            tris,
            CurvedCell {
                apex: anchor,
                arc: self.arc.clone(),
            },
        )
    }

    /// Decompose with the default anchor.
    pub fn cells(&self) -> (Vec<Triangle>, CurvedCell) {
        self.cells_with_anchor(self.anchor_candidates()[0])
    }
}

/// Both curved subregions of a cut element.
#[derive(Clone, Debug)]
pub struct SplitRegions {
    pub plus: CurvedRegion,
    pub minus: CurvedRegion,
}

impl SplitRegions {
    pub fn region(&self, side: Side) -> &CurvedRegion {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

/// Split a cut element into its plus and minus subregions. The two regions
/// share the interface arc, so their quadrature measures tile the element
/// exactly.
pub fn split_subdomains(
    ls: &LevelSet,
    tri: &Triangle,
    cut: &InterfaceCut,
) -> Result<SplitRegions> {
    let snap = SNAP_REL * tri.diameter();
    let pa = cut.crossings[0].boundary_param();
    let pb = cut.crossings[1].boundary_param();

    let collect = |from: f64, to: f64| -> Vec<Point> {
        // Vertices with boundary parameter strictly between `from` and `to`
        // (cyclically), skipping ones that coincide with a cut point.
        let mut pts = Vec::new();
        let span = to - from;
        let span = if span <= 0.0 { span + 3.0 } else { span };
        for v in 0..3 {
            let mut d = v as f64 - from;
            while d <= 1e-12 {
                d += 3.0;
            }
            if d < span - 1e-12 {
                pts.push((d, tri.vertex(v)));
            }
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.into_iter().map(|(_, p)| p).collect()
    };

    let forward_vertices = collect(pa, pb);
    let backward_vertices = collect(pb, pa);

    let ca = cut.crossings[0].point;
    let cb = cut.crossings[1].point;

    let mut poly_fwd = vec![ca];
    poly_fwd.extend(forward_vertices.iter().copied());
    poly_fwd.push(cb);
    let mut arc_fwd: Vec<Point> = cut.arc_nodes.clone();
    arc_fwd.reverse(); // region boundary closes from cb back to ca

    let mut poly_bwd = vec![cb];
    poly_bwd.extend(backward_vertices.iter().copied());
    poly_bwd.push(ca);
    let arc_bwd = cut.arc_nodes.clone();

    let region_side = |poly: &[Point], arc: &[Point]| -> Option<Side> {
        // Definite vertex sign wins; otherwise probe between chord and arc.
        for p in &poly[1..poly.len() - 1] {
            match sign_class(ls.evaluate(*p), snap) {
                SignClass::Plus => return Some(Side::Plus),
                SignClass::Minus => return Some(Side::Minus),
                SignClass::Band => {}
            }
        }
        let chord_mid = Point::new(
            0.5 * (poly[0].x + poly[poly.len() - 1].x),
            0.5 * (poly[0].y + poly[poly.len() - 1].y),
        );
        let arc_mid = arc[arc.len() / 2];
        let probe = Point::new(
            0.5 * (chord_mid.x + arc_mid.x),
            0.5 * (chord_mid.y + arc_mid.y),
        );
        match sign_class(ls.evaluate(probe), snap) {
            SignClass::Plus => Some(Side::Plus),
            SignClass::Minus => Some(Side::Minus),
            SignClass::Band => None,
        }
    };

    let side_fwd = region_side(&poly_fwd, &arc_fwd).ok_or(Error::DegenerateCut { element: None })?;
    let side_bwd = region_side(&poly_bwd, &arc_bwd).ok_or(Error::DegenerateCut { element: None })?;
    if side_fwd == side_bwd {
        return Err(Error::DegenerateCut { element: None });
    }

    let fwd = CurvedRegion {
        side: side_fwd,
        polygon: poly_fwd,
        arc: arc_fwd,
    };
    let bwd = CurvedRegion {
        side: side_bwd,
        polygon: poly_bwd,
        arc: arc_bwd,
    };
    Ok(match side_fwd {
        Side::Plus => SplitRegions {
            plus: fwd,
            minus: bwd,
        },
        Side::Minus => SplitRegions {
            plus: bwd,
            minus: fwd,
        },
    })
}
