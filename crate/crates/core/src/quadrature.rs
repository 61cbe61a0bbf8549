//! Numerical integration on segments, reference/physical triangles, interface
//! arcs and curved subregions of cut elements.
//!
//! The curved-cell rule integrates polynomial integrands exactly on the
//! discrete region (the one bounded by the interpolated arc), so the plus and
//! minus rules of a cut element tile the element without quadrature
//! inconsistency; only the arc interpolation error of order O(h^{q+1})
//! remains.

use crate::error::{Error, Result};
use crate::geometry::{CurvedCell, CurvedRegion, Point, Triangle, Vector};

/// Gauss rule on the unit interval [0, 1].
#[derive(Clone, Debug)]
pub struct SegmentRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes by Newton iteration on the Legendre polynomial.
/// Exactness degree 2n - 1.
pub fn gauss_segment(n: usize) -> SegmentRule {
    assert!(n >= 1 && n <= 64, "segment rule size out of range");
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        // root of P_n on [-1, 1]
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (1.0 - x)); // descending roots -> ascending nodes
        weights.push(0.5 * w);
    }
    nodes.reverse();
    weights.reverse();
    SegmentRule { nodes, weights }
}

/// Legendre polynomial value and derivative at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quadrature rule on the reference triangle (0,0), (1,0), (0,1).
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

/// Tensorized Duffy rule with exactness degree >= d and positive weights.
pub fn gauss_triangle(d: usize) -> TriangleRule {
    assert!(d <= 40, "triangle exactness degree out of range");
    let n = d / 2 + 1;
    let g = gauss_segment(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (iu, &u) in g.nodes.iter().enumerate() {
        for (iv, &v) in g.nodes.iter().enumerate() {
            points.push((u, v * (1.0 - u)));
            weights.push(g.weights[iu] * g.weights[iv] * (1.0 - u));
        }
    }
    TriangleRule { points, weights }
}

/// Quadrature rule in physical coordinates.
#[derive(Clone, Debug, Default)]
pub struct PhysRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl PhysRule {
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn extend_from(&mut self, other: PhysRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Affine image of a reference rule on a straight triangle.
pub fn triangle_rule(tri: &Triangle, d: usize) -> PhysRule {
    let reference = gauss_triangle(d);
    let v0 = tri.vertex(0);
    let e1 = tri.vertex(1) - v0;
    let e2 = tri.vertex(2) - v0;
    let jac = 2.0 * tri.area();
    let mut rule = PhysRule::default();
    for ((x, y), w) in reference.points.iter().zip(&reference.weights) {
        rule.points.push(v0 + e1 * *x + e2 * *y);
        rule.weights.push(w * jac);
    }
    rule
}

/// Polynomial curve through arc nodes at uniform parameters on [0, 1],
/// stored in the Newton basis.
#[derive(Clone, Debug)]
pub struct ArcCurve {
    ts: Vec<f64>,
    // divided-difference coefficients per coordinate
    cx: Vec<f64>,
    cy: Vec<f64>,
}

impl ArcCurve {
    pub fn new(nodes: &[Point]) -> Self {
        let q = nodes.len() - 1;
        let ts: Vec<f64> = (0..=q).map(|k| k as f64 / q as f64).collect();
        let newton = |vals: Vec<f64>| {
            let mut c = vals;
            for level in 1..=q {
                for i in (level..=q).rev() {
                    c[i] = (c[i] - c[i - 1]) / (ts[i] - ts[i - level]);
                }
            }
            c
        };
        let cx = newton(nodes.iter().map(|p| p.x).collect());
        let cy = newton(nodes.iter().map(|p| p.y).collect());
        ArcCurve { ts, cx, cy }
    }

    pub fn degree(&self) -> usize {
        self.ts.len() - 1
    }

    pub fn eval(&self, t: f64) -> Point {
        Point::new(self.horner(&self.cx, t).0, self.horner(&self.cy, t).0)
    }

    pub fn velocity(&self, t: f64) -> Vector {
        Vector::new(self.horner(&self.cx, t).1, self.horner(&self.cy, t).1)
    }

    /// Newton-form Horner evaluation with derivative.
    fn horner(&self, c: &[f64], t: f64) -> (f64, f64) {
        let q = c.len() - 1;
        let mut val = c[q];
        let mut der = 0.0;
        for i in (0..q).rev() {
            der = der * (t - self.ts[i]) + val;
            val = val * (t - self.ts[i]) + c[i];
        }
        (val, der)
    }
}

/// Gauss rule along an interpolated arc; weights carry the curve speed.
pub fn arc_rule(nodes: &[Point], n: usize) -> PhysRule {
    let curve = ArcCurve::new(nodes);
    let g = gauss_segment(n);
    let mut rule = PhysRule::default();
    for (&t, &w) in g.nodes.iter().zip(&g.weights) {
        rule.points.push(curve.eval(t));
        rule.weights.push(w * curve.velocity(t).norm());
    }
    rule
}

/// Exact arc length of the interpolated curve (high-order fallback rule).
pub fn arc_length(nodes: &[Point]) -> f64 {
    arc_rule(nodes, nodes.len() + 6).measure()
}

/// Rule on one curved cell. On the (rho, t) unit square the integrand of a
/// degree-d polynomial is itself polynomial of degree (d + 1, q d + 2q - 1),
/// so the tensor rule below is exact on the discrete cell.
fn curved_cell_rule(cell: &CurvedCell, d: usize) -> Result<PhysRule> {
    let curve = ArcCurve::new(&cell.arc);
    let q = curve.degree();
    let n_rho = d / 2 + 2;
    let n_t = (q * (d + 2)) / 2 + 1;
    let g_rho = gauss_segment(n_rho);
    let g_t = gauss_segment(n_t);
    let apex = cell.apex;

    let mut rule = PhysRule::default();
    let mut pos = 0usize;
    let mut neg = 0usize;
    let mut max_abs: f64 = 0.0;
    for (&t, &wt) in g_t.nodes.iter().zip(&g_t.weights) {
        let gamma = curve.eval(t);
        let vel = curve.velocity(t);
        let radial = gamma - apex;
        let det = radial.x * vel.y - radial.y * vel.x;
        max_abs = max_abs.max(det.abs());
        if det > 0.0 {
            pos += 1;
        } else if det < 0.0 {
            neg += 1;
        }
        for (&rho, &wr) in g_rho.nodes.iter().zip(&g_rho.weights) {
            rule.points.push(apex + radial * rho);
            rule.weights.push(wt * wr * rho * det);
        }
    }
    if pos > 0 && neg > 0 {
        // mixed orientation only counts when both parts are significant
        let sig_pos = rule.weights.iter().any(|&w| w > 1e-13 * max_abs);
        let sig_neg = rule.weights.iter().any(|&w| w < -1e-13 * max_abs);
        if sig_pos && sig_neg {
            return Err(Error::NonInvertibleMap { element: None });
        }
    }
    if neg > pos {
        for w in &mut rule.weights {
            *w = -*w;
        }
    }
    Ok(rule)
}

/// Physical rule on a curved subregion: straight fan triangles plus the
/// curved cell, exact for polynomials of degree <= d on the discrete region.
/// Fan anchors are tried in order until the curved-cell map is invertible
/// (strongly curved arcs on coarse meshes reject some anchors).
pub fn curved_region_rule(region: &CurvedRegion, d: usize) -> Result<PhysRule> {
    let mut last_err = Error::NonInvertibleMap { element: None };
    for anchor in region.anchor_candidates() {
        let (tris, cell) = region.cells_with_anchor(anchor);
        match curved_cell_rule(&cell, d) {
            Ok(curved) => {
                let mut rule = PhysRule::default();
                for tri in &tris {
                    if tri.area() > 0.0 {
                        rule.extend_from(triangle_rule(tri, d));
                    }
                }
                rule.extend_from(curved);
                return Ok(rule);
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        classify_element, split_subdomains, CutPolicy, CutTopology, LevelSet, Side, SNAP_REL,
    };
    use approx::assert_relative_eq;

    #[test]
    fn segment_rule_basics() {
        let g1 = gauss_segment(1);
        assert_eq!(g1.nodes.len(), 1);
        assert_relative_eq!(g1.nodes[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(g1.weights[0], 1.0, epsilon = 1e-15);

        // n = 3 integrates x^5 exactly
        let g3 = gauss_segment(3);
        let approx5: f64 = g3
            .nodes
            .iter()
            .zip(&g3.weights)
            .map(|(&x, &w)| w * x.powi(5))
            .sum();
        assert_relative_eq!(approx5, 1.0 / 6.0, epsilon = 1e-14);

        let g4 = gauss_segment(4);
        let approx7: f64 = g4
            .nodes
            .iter()
            .zip(&g4.weights)
            .map(|(&x, &w)| w * x.powi(7))
            .sum();
        assert!((approx7 - 0.125).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_exactness() {
        for d in [0usize, 2, 4, 6, 10] {
            let rule = gauss_triangle(d);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let total: f64 = rule.weights.iter().sum();
            assert_relative_eq!(total, 0.5, epsilon = 1e-13);
        }
        // \int_T x^2 y^2 = 1/180
        let rule = gauss_triangle(4);
        let val: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&(x, y), &w)| w * x * x * y * y)
            .sum();
        assert_relative_eq!(val, 1.0 / 180.0, epsilon = 1e-15);
    }

    #[test]
    fn triangle_rule_vs_monte_carlo() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let d = 5usize;
        // fixed random polynomial of total degree d
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut terms = Vec::new();
        for a in 0..=d {
            for b in 0..=(d - a) {
                terms.push((a as i32, b as i32, rng.random_range(-1.0..1.0)));
            }
        }
        let f = |x: f64, y: f64| -> f64 {
            terms
                .iter()
                .map(|&(a, b, c)| c * x.powi(a) * y.powi(b))
                .sum()
        };
        let rule = gauss_triangle(d);
        let exact: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&(x, y), &w)| w * f(x, y))
            .sum();

        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut x: f64 = rng.random_range(0.0..1.0);
            let mut y: f64 = rng.random_range(0.0..1.0);
            if x + y > 1.0 {
                (x, y) = (1.0 - x, 1.0 - y);
            }
            let v = f(x, y);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let mc = 0.5 * mean;
        let sigma = 0.5 * (var / n as f64).sqrt();
        assert!(
            (exact - mc).abs() <= 3.0 * sigma + 1e-12,
            "quadrature {exact} vs MC {mc} +- {sigma}"
        );
    }

    fn unit_right_triangle(h: f64, x0: f64, y0: f64) -> Triangle {
        Triangle([
            Point::new(x0, y0),
            Point::new(x0 + h, y0),
            Point::new(x0, y0 + h),
        ])
    }

    #[test]
    fn curved_region_measures_tile_element() {
        let r0 = std::f64::consts::PI / 6.28;
        let ls = LevelSet::circle(r0);
        let tri = unit_right_triangle(0.2, r0 - 0.1, -0.05);
        let snap = SNAP_REL * tri.diameter();
        let cut = match classify_element(&ls, &tri, 4, snap, CutPolicy::Strict).unwrap() {
            CutTopology::Interface(c) => c,
            _ => panic!("expected cut element"),
        };
        let regions = split_subdomains(&ls, &tri, &cut).unwrap();
        let total = curved_region_rule(&regions.plus, 4).unwrap().measure()
            + curved_region_rule(&regions.minus, 4).unwrap().measure();
        assert_relative_eq!(total, tri.area(), epsilon = 1e-10 * tri.area());
    }

    #[test]
    fn circle_cut_region_matches_segment_area() {
        // Element cut by a circle; the discrete minus region approximates the
        // circular segment area with the arc interpolation error only.
        let r0 = 0.5;
        let ls = LevelSet::circle(r0);
        let h = 0.05;
        // position the triangle so the circle sweeps through its interior
        let tri = Triangle([
            Point::new(r0 - 0.6 * h, -0.4 * h),
            Point::new(r0 + 0.8 * h, -0.4 * h),
            Point::new(r0 - 0.6 * h, h),
        ]);
        let snap = SNAP_REL * tri.diameter();
        let cut = match classify_element(&ls, &tri, 5, snap, CutPolicy::Strict).unwrap() {
            CutTopology::Interface(c) => c,
            _ => panic!("expected cut element"),
        };
        let regions = split_subdomains(&ls, &tri, &cut).unwrap();
        let minus_area = curved_region_rule(&regions.minus, 4).unwrap().measure();

        // analytic area inside the circle: polygon part plus circular segment
        let (p0, p1) = (cut.crossings[0].point, cut.crossings[1].point);
        let ang = |p: Point| p.y.atan2(p.x);
        let (mut a0, mut a1) = (ang(p0), ang(p1));
        if a1 < a0 {
            std::mem::swap(&mut a0, &mut a1);
        }
        let dtheta = a1 - a0;
        let segment = 0.5 * r0 * r0 * (dtheta - dtheta.sin());
        // straight part of the minus region: polygon (crossing, vertices in
        // the minus side, crossing) with the chord closing it
        let verts: Vec<Point> = (0..3)
            .map(|i| tri.vertex(i))
            .filter(|p| ls.evaluate(*p) < 0.0)
            .collect();
        let mut poly = vec![p0];
        poly.extend(verts);
        poly.push(p1);
        let mut poly_area = 0.0;
        for i in 1..poly.len() - 1 {
            poly_area += Triangle([poly[0], poly[i], poly[i + 1]]).area();
        }
        let expected = poly_area + segment;
        assert!(
            (minus_area - expected).abs() < 1e-8,
            "area {minus_area} vs analytic {expected}"
        );
    }

    #[test]
    fn line_cut_region_polynomial_exact() {
        // straight cut: integral of x*y over the polygonal subregion matches
        // the Green-theorem polygon moment formula
        let ls = LevelSet::line(1.0, 1.0, 0.5);
        let tri = unit_right_triangle(1.0, 0.0, 0.0);
        let snap = SNAP_REL * tri.diameter();
        let cut = match classify_element(&ls, &tri, 4, snap, CutPolicy::Strict).unwrap() {
            CutTopology::Interface(c) => c,
            _ => panic!(),
        };
        let regions = split_subdomains(&ls, &tri, &cut).unwrap();
        let plus = regions.region(Side::Plus);
        let rule = curved_region_rule(plus, 4).unwrap();
        let got: f64 = rule.iter().map(|(p, w)| w * p.x * p.y).sum();

        // polygon moment oracle via Green's theorem on the closed polygon
        let mut poly = plus.polygon.clone();
        poly.extend(plus.arc.iter().skip(1).take(plus.arc.len().saturating_sub(2)));
        let moment_xy = |poly: &[Point]| -> f64 {
            // \int x y dA = 1/24 sum (x_i y_{i+1} ... ) use shoelace-type formula
            let n = poly.len();
            let mut s = 0.0;
            for i in 0..n {
                let p = poly[i];
                let q = poly[(i + 1) % n];
                let cross = p.x * q.y - q.x * p.y;
                s += cross * (2.0 * p.x * p.y + p.x * q.y + q.x * p.y + 2.0 * q.x * q.y);
            }
            s / 24.0
        };
        let expected = moment_xy(&poly);
        assert!(
            (got - expected).abs() < 1e-13,
            "moment {got} vs polygon formula {expected}"
        );
    }

    #[test]
    fn arc_rule_lengths() {
        // straight arc
        let nodes: Vec<Point> = (0..=4)
            .map(|k| Point::new(0.25 * k as f64, 0.5 * 0.25 * k as f64))
            .collect();
        let rule = arc_rule(&nodes, 5);
        assert_relative_eq!(rule.measure(), (1.0f64 + 0.25).sqrt(), epsilon = 1e-14);

        // circular arc vs r0 * dtheta
        let r0 = 0.5;
        let t0 = 0.3f64;
        let t1 = 0.5f64;
        let q = 5;
        let nodes: Vec<Point> = (0..=q)
            .map(|k| {
                let t = t0 + (t1 - t0) * k as f64 / q as f64;
                Point::new(r0 * t.cos(), r0 * t.sin())
            })
            .collect();
        let rule = arc_rule(&nodes, 8);
        assert!((rule.measure() - r0 * (t1 - t0)).abs() < 1e-8);
    }

    #[test]
    fn refining_never_hurts_derived_checks() {
        // the three derived integral checks must not get worse when d or q grows
        let r0 = 0.5;
        let ls = LevelSet::circle(r0);
        let tri = Triangle([
            Point::new(r0 - 0.03, -0.02),
            Point::new(r0 + 0.04, -0.02),
            Point::new(r0 - 0.03, 0.05),
        ]);
        let err_for = |q: usize, d: usize| -> f64 {
            let snap = SNAP_REL * tri.diameter();
            let cut = match classify_element(&ls, &tri, q, snap, CutPolicy::Strict).unwrap() {
                CutTopology::Interface(c) => c,
                _ => panic!(),
            };
            let regions = split_subdomains(&ls, &tri, &cut).unwrap();
            let total = curved_region_rule(&regions.plus, d).unwrap().measure()
                + curved_region_rule(&regions.minus, d).unwrap().measure();
            (total - tri.area()).abs()
        };
        let e_low = err_for(3, 2);
        let e_high = err_for(6, 6);
        assert!(e_high <= e_low + 1e-15);
    }
}
