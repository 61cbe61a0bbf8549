//! Lagrange P2/P3 shape functions with derivatives up to third order, the
//! least-squares construction of immersed basis functions on interface
//! elements, and nodal interpolation.
//!
//! On a cut element the local space is spanned by two polynomial pieces per
//! Lagrange node. Writing the candidate function as
//! `sum v_i xi_i + sum c_i eta_i`, the hidden coefficients `c` minimize the
//! jump-violation functional
//!
//! ```text
//! J(u, v) = w0 ∫ [u][v] + w1 h² ∫ [∂n u][∂n v]
//!         + w2 h⁴ ∫ [β ∂nn u][β ∂nn v]
//!         + w3 h⁶ ∫ [β(∂nΔu + ∂ntt u)][β(∂nΔv + ∂ntt v)]   over Γ_T^λ,
//! ```
//!
//! which leads to the linear system `A c = -B v` with Gram matrices
//! `A = J(eta_j, eta_i)` and `B = J(xi_j, eta_i)`. The arc Γ_T^λ lives on the
//! element dilated by λ about its barycenter so that small cuts stay well
//! conditioned.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    extended_arc_with_backoff, rot90, split_subdomains, CutPolicy, CutTopology, LevelSet, Point,
    Side, SplitRegions, Triangle, Vector, SNAP_REL,
};
use crate::mesh::{
    build_dof_map, classify_entities, lagrange_nodes, local_dim, DofMap, EntityClasses,
    MeshTopology,
};
use crate::quadrature::{arc_rule, curved_region_rule, triangle_rule, PhysRule};

/// Material coefficient on the two sides of the interface.
#[derive(Clone, Copy, Debug)]
pub struct Beta {
    pub plus: f64,
    pub minus: f64,
}

impl Beta {
    pub fn new(minus: f64, plus: f64) -> Self {
        assert!(minus > 0.0 && plus > 0.0, "beta must be positive");
        Beta { plus, minus }
    }

    pub fn of(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.plus,
            Side::Minus => self.minus,
        }
    }

    pub fn max(&self) -> f64 {
        self.plus.max(self.minus)
    }

    pub fn average(&self) -> f64 {
        0.5 * (self.plus + self.minus)
    }

    pub fn is_uniform(&self) -> bool {
        self.plus == self.minus
    }
}

/// Weights of the jump-violation functional and the dilation factor of the
/// fictitious element.
#[derive(Clone, Copy, Debug)]
pub struct JWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub lambda: f64,
}

impl JWeights {
    /// Default weights: w0 = max(beta)^2, the rest 1, dilation 2.
    pub fn for_beta(beta: Beta) -> Self {
        JWeights {
            w0: beta.max() * beta.max(),
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            lambda: 2.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        assert!(lambda >= 1.0);
        self.lambda = lambda;
        self
    }

    fn validate(&self) {
        assert!(self.w0 > 0.0, "w0 must be positive");
        assert!(self.w1 >= 0.0 && self.w2 >= 0.0 && self.w3 >= 0.0);
        assert!(self.lambda >= 1.0);
    }
}

/// Monomial exponents up to total degree `p` in graded order.
fn monomial_exponents(p: usize) -> Vec<(i32, i32)> {
    let mut exps = Vec::new();
    for total in 0..=p as i32 {
        for ax in (0..=total).rev() {
            exps.push((ax, total - ax));
        }
    }
    exps
}

/// Values and derivatives of all shape functions of one element at a point.
#[derive(Clone, Debug)]
pub struct BasisEval {
    pub value: Vec<f64>,
    pub grad: Vec<Vector>,
    /// Hessian entries `[xx, xy, yy]`.
    pub hess: Vec<[f64; 3]>,
    /// Third derivatives `[xxx, xxy, xyy, yyy]`.
    pub third: Vec<[f64; 4]>,
}

impl BasisEval {
    fn with_len(n: usize, order: usize) -> Self {
        BasisEval {
            value: vec![0.0; n],
            grad: if order >= 1 { vec![Vector::zeros(); n] } else { Vec::new() },
            hess: if order >= 2 { vec![[0.0; 3]; n] } else { Vec::new() },
            third: if order >= 3 { vec![[0.0; 4]; n] } else { Vec::new() },
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Normal derivative of shape i: n . grad.
    pub fn dn(&self, i: usize, n: &Vector) -> f64 {
        self.grad[i].dot(n)
    }

    /// Second directional derivative a^T H b of shape i.
    pub fn dab(&self, i: usize, a: &Vector, b: &Vector) -> f64 {
        let h = &self.hess[i];
        a.x * b.x * h[0] + (a.x * b.y + a.y * b.x) * h[1] + a.y * b.y * h[2]
    }

    /// Third-order contraction over directions (a, b, c) of shape i.
    pub fn dabc(&self, i: usize, a: &Vector, b: &Vector, c: &Vector) -> f64 {
        let t = &self.third[i];
        let cxx = a.x * b.x * c.x;
        let cxy = a.x * b.x * c.y + a.x * b.y * c.x + a.y * b.x * c.x;
        let cyx = a.x * b.y * c.y + a.y * b.x * c.y + a.y * b.y * c.x;
        let cyy = a.y * b.y * c.y;
        cxx * t[0] + cxy * t[1] + cyx * t[2] + cyy * t[3]
    }

    /// Flux-type third derivative ∂n Δu + ∂ntt u of shape i.
    pub fn flux3(&self, i: usize, n: &Vector, t: &Vector) -> f64 {
        let d = &self.third[i];
        let dn_lap = n.x * (d[0] + d[2]) + n.y * (d[1] + d[3]);
        dn_lap + self.dabc(i, n, t, t)
    }
}

/// Scaled local frame of one element: the nodal basis is stored as monomial
/// coefficients in coordinates centered at the element and scaled by its
/// diameter, which keeps the Vandermonde solve well conditioned.
#[derive(Clone, Debug)]
pub struct ElementFrame {
    pub degree: usize,
    pub tri: Triangle,
    pub center: Point,
    pub scale: f64,
    pub nodes: Vec<Point>,
    exponents: Vec<(i32, i32)>,
    /// (n_mono x n_basis): column j holds the monomial coefficients of psi_j.
    coeffs: DMatrix<f64>,
}

impl ElementFrame {
    pub fn new(degree: usize, tri: Triangle) -> Result<Self> {
        if degree != 2 && degree != 3 {
            return Err(Error::UnsupportedDegree(degree));
        }
        let nodes = lagrange_nodes(degree, &tri);
        let n = nodes.len();
        let center = tri.barycenter();
        let scale = tri.diameter();
        let exponents = monomial_exponents(degree);
        let mut vander = DMatrix::zeros(n, n);
        for (j, node) in nodes.iter().enumerate() {
            let lx = (node.x - center.x) / scale;
            let ly = (node.y - center.y) / scale;
            for (k, &(a, b)) in exponents.iter().enumerate() {
                vander[(j, k)] = lx.powi(a) * ly.powi(b);
            }
        }
        let coeffs = vander
            .try_inverse()
            .expect("Lagrange Vandermonde must be invertible");
        Ok(ElementFrame {
            degree,
            tri,
            center,
            scale,
            nodes,
            exponents,
            coeffs,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.nodes.len()
    }

    /// Evaluate all shape functions with derivatives up to `order` (<= 3).
    pub fn basis_at(&self, p: Point, order: usize) -> BasisEval {
        assert!(order <= 3, "derivative order above 3 not supported");
        let n = self.n_basis();
        let m = self.exponents.len();
        let lx = (p.x - self.center.x) / self.scale;
        let ly = (p.y - self.center.y) / self.scale;
        let s1 = 1.0 / self.scale;
        let s2 = s1 * s1;
        let s3 = s2 * s1;

        // monomial derivative tables in local coordinates
        let pow = |base: f64, e: i32| -> f64 {
            if e < 0 {
                0.0
            } else {
                base.powi(e)
            }
        };
        let fall = |a: i32, k: i32| -> f64 {
            // falling factorial a (a-1) ... (a-k+1), zero when a < k
            let mut f = 1.0;
            for step in 0..k {
                f *= (a - step) as f64;
            }
            if a < k {
                0.0
            } else {
                f
            }
        };

        let mut eval = BasisEval::with_len(n, order);
        let mut mono = vec![0.0; m];
        let mut dx = vec![0.0; m];
        let mut dy = vec![0.0; m];
        let mut dxx = vec![0.0; m];
        let mut dxy = vec![0.0; m];
        let mut dyy = vec![0.0; m];
        let mut d3 = vec![[0.0; 4]; m];
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            mono[k] = pow(lx, a) * pow(ly, b);
            if order >= 1 {
                dx[k] = fall(a, 1) * pow(lx, a - 1) * pow(ly, b) * s1;
                dy[k] = fall(b, 1) * pow(lx, a) * pow(ly, b - 1) * s1;
            }
            if order >= 2 {
                dxx[k] = fall(a, 2) * pow(lx, a - 2) * pow(ly, b) * s2;
                dxy[k] = fall(a, 1) * fall(b, 1) * pow(lx, a - 1) * pow(ly, b - 1) * s2;
                dyy[k] = fall(b, 2) * pow(lx, a) * pow(ly, b - 2) * s2;
            }
            if order >= 3 {
                d3[k] = [
                    fall(a, 3) * pow(lx, a - 3) * pow(ly, b) * s3,
                    fall(a, 2) * fall(b, 1) * pow(lx, a - 2) * pow(ly, b - 1) * s3,
                    fall(a, 1) * fall(b, 2) * pow(lx, a - 1) * pow(ly, b - 2) * s3,
                    fall(b, 3) * pow(lx, a) * pow(ly, b - 3) * s3,
                ];
            }
        }

        for j in 0..n {
            let col = self.coeffs.column(j);
            let mut v = 0.0;
            let mut gx = 0.0;
            let mut gy = 0.0;
            let mut hxx = 0.0;
            let mut hxy = 0.0;
            let mut hyy = 0.0;
            let mut t3 = [0.0; 4];
            for k in 0..m {
                let c = col[k];
                v += c * mono[k];
                if order >= 1 {
                    gx += c * dx[k];
                    gy += c * dy[k];
                }
                if order >= 2 {
                    hxx += c * dxx[k];
                    hxy += c * dxy[k];
                    hyy += c * dyy[k];
                }
                if order >= 3 {
                    for d in 0..4 {
                        t3[d] += c * d3[k][d];
                    }
                }
            }
            eval.value[j] = v;
            if order >= 1 {
                eval.grad[j] = Vector::new(gx, gy);
            }
            if order >= 2 {
                eval.hess[j] = [hxx, hxy, hyy];
            }
            if order >= 3 {
                eval.third[j] = t3;
            }
        }
        eval
    }

    /// Value, gradient, Hessian and third derivatives of shape function `i`.
    pub fn shape(&self, i: usize, p: Point, order: usize) -> (f64, Vector, [f64; 3], [f64; 4]) {
        let eval = self.basis_at(p, order);
        (
            eval.value[i],
            if order >= 1 { eval.grad[i] } else { Vector::zeros() },
            if order >= 2 { eval.hess[i] } else { [0.0; 3] },
            if order >= 3 { eval.third[i] } else { [0.0; 4] },
        )
    }
}

/// Immersed local basis of a cut element: for every Lagrange node a plus-side
/// and a minus-side polynomial, stored as coefficients in the element's
/// Lagrange basis, together with the least-squares Gram matrices and the
/// min-eigenvalue diagnostic of `A`.
#[derive(Clone, Debug)]
pub struct IfeLocalBasis {
    pub element: usize,
    pub node_sides: Vec<Side>,
    /// Column j = Lagrange coefficients of the plus piece of phi_j.
    pub plus: DMatrix<f64>,
    pub minus: DMatrix<f64>,
    pub gram_a: DMatrix<f64>,
    pub gram_b: DMatrix<f64>,
    /// min-eig(A) / max-eig(A).
    pub eig_margin: f64,
    /// Dilation factor actually used for the extended arc.
    pub lambda_used: f64,
}

impl IfeLocalBasis {
    pub fn piece(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

/// The four jump quantities of the functional evaluated for one basis family
/// at one quadrature point.
struct JumpRows {
    rows: [DVector<f64>; 4],
}

fn jump_rows(
    eval: &BasisEval,
    node_sides: &[Side],
    beta: Beta,
    normal: &Vector,
    tangent: &Vector,
    eta: bool,
) -> JumpRows {
    let n = eval.len();
    let mut j0 = DVector::zeros(n);
    let mut j1 = DVector::zeros(n);
    let mut j2 = DVector::zeros(n);
    let mut j3 = DVector::zeros(n);
    for i in 0..n {
        // xi_i lives on the side of its node, eta_i on the opposite side
        let carrier = if eta {
            node_sides[i].opposite()
        } else {
            node_sides[i]
        };
        let (sign, b) = match carrier {
            Side::Plus => (1.0, beta.plus),
            Side::Minus => (-1.0, beta.minus),
        };
        j0[i] = sign * eval.value[i];
        j1[i] = sign * eval.dn(i, normal);
        j2[i] = sign * b * eval.dab(i, normal, normal);
        j3[i] = sign * b * eval.flux3(i, normal, tangent);
    }
    JumpRows {
        rows: [j0, j1, j2, j3],
    }
}

/// Weighted pointwise jump system of the functional: tall matrices with one
/// row per (quadrature point, jump kind), scaled so that
/// `A = M_eta^T M_eta` and `B = M_eta^T M_xi`. Solving the least-squares
/// problem on the tall matrices avoids squaring the condition number of the
/// normal equations.
pub struct JumpSystem {
    pub m_eta: DMatrix<f64>,
    pub m_xi: DMatrix<f64>,
}

/// Build the weighted jump system over an extended interface arc.
pub fn jlambda_system(
    frame: &ElementFrame,
    ls: &LevelSet,
    beta: Beta,
    weights: &JWeights,
    arc_nodes: &[Point],
    node_sides: &[Side],
    arc_points: usize,
) -> JumpSystem {
    weights.validate();
    let n = frame.n_basis();
    let h = frame.scale;
    let h2 = h * h;
    let scale = [
        weights.w0,
        weights.w1 * h2,
        weights.w2 * h2 * h2,
        weights.w3 * h2 * h2 * h2,
    ];
    let rule = arc_rule(arc_nodes, arc_points);
    let nq = rule.points.len();
    let mut m_eta = DMatrix::zeros(4 * nq, n);
    let mut m_xi = DMatrix::zeros(4 * nq, n);
    for (iq, (p, w)) in rule.iter().enumerate() {
        let normal = ls.unit_normal(p);
        let tangent = rot90(normal);
        let eval = frame.basis_at(p, 3);
        let eta = jump_rows(&eval, node_sides, beta, &normal, &tangent, true);
        let xi = jump_rows(&eval, node_sides, beta, &normal, &tangent, false);
        for k in 0..4 {
            let sw = (w * scale[k]).sqrt();
            let row = 4 * iq + k;
            for j in 0..n {
                m_eta[(row, j)] = sw * eta.rows[k][j];
                m_xi[(row, j)] = sw * xi.rows[k][j];
            }
        }
    }
    JumpSystem { m_eta, m_xi }
}

impl JumpSystem {
    /// Gram matrices of the functional: `A_ij = J(eta_j, eta_i)` and
    /// `B_ij = J(xi_j, eta_i)`.
    pub fn gram(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = self.m_eta.transpose() * &self.m_eta;
        let b = self.m_eta.transpose() * &self.m_xi;
        (a, b)
    }

    /// Hidden-side coefficient matrix (column j solves for nodal values e_j)
    /// and the min-eig margin of `A`.
    pub fn solve_all(&self, element: usize) -> Result<(DMatrix<f64>, f64)> {
        let svd = self.m_eta.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(f64::MIN, f64::max);
        let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
        let margin = (smin / smax) * (smin / smax);
        if !(margin > 1e-14) || smax <= 0.0 {
            return Err(Error::SingularBasis { element, margin });
        }
        let solved = svd
            .solve(&self.m_xi, 0.0)
            .map_err(|_| Error::SingularBasis { element, margin })?;
        Ok((-solved, margin))
    }
}

/// Assemble the least-squares Gram matrices over an extended interface arc.
pub fn jlambda_gram(
    frame: &ElementFrame,
    ls: &LevelSet,
    beta: Beta,
    weights: &JWeights,
    arc_nodes: &[Point],
    node_sides: &[Side],
    arc_points: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    jlambda_system(frame, ls, beta, weights, arc_nodes, node_sides, arc_points).gram()
}

/// Solve `A c = -B v` through the spectral decomposition of `A` and report
/// the min-eig margin. Near-singular systems are reported, not regularized.
/// Prefer [`JumpSystem::solve_all`] where the tall system is available; the
/// Gram route carries the squared condition number.
pub fn solve_ife_coefficients(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let eig = a.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let margin = min_eig / max_eig;
    if !(margin > 1e-14) || max_eig <= 0.0 {
        return Err(Error::SingularBasis {
            element: usize::MAX,
            margin,
        });
    }
    let rhs = -(b * v);
    let apply_inv = |r: &DVector<f64>| -> DVector<f64> {
        let mut c = DVector::zeros(r.len());
        for k in 0..r.len() {
            let q = eig.eigenvectors.column(k);
            c += q * (q.dot(r) / eig.eigenvalues[k]);
        }
        c
    };
    let mut c = apply_inv(&rhs);
    // one refinement pass keeps the normal-equation residual near roundoff
    let residual = &rhs - a * &c;
    c += apply_inv(&residual);
    Ok((c, margin))
}

/// Unisolvence diagnostic of one cut element: the min-eig/max-eig margin of
/// the least-squares Gram matrix, reported without any solvability gate.
pub fn check_unisolvence(
    frame: &ElementFrame,
    ls: &LevelSet,
    beta: Beta,
    weights: &JWeights,
    snap: f64,
) -> Result<f64> {
    let node_sides: Vec<Side> = frame
        .nodes
        .iter()
        .map(|&p| Side::from_phi(ls.evaluate(p), snap))
        .collect();
    let q = frame.degree + 2;
    let (arc, _) = extended_arc_with_backoff(ls, &frame.tri, weights.lambda, q)?;
    let system = jlambda_system(frame, ls, beta, weights, &arc, &node_sides, frame.degree + 3);
    let svd = system.m_eta.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(f64::MIN, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    Ok((smin / smax) * (smin / smax))
}

/// Build the immersed basis of one cut element.
pub fn build_ife_basis(
    element: usize,
    frame: &ElementFrame,
    ls: &LevelSet,
    beta: Beta,
    weights: &JWeights,
    snap: f64,
) -> Result<IfeLocalBasis> {
    let n = frame.n_basis();
    let node_sides: Vec<Side> = frame
        .nodes
        .iter()
        .map(|&p| Side::from_phi(ls.evaluate(p), snap))
        .collect();
    let q = frame.degree + 2;
    let (arc, lambda_used) = extended_arc_with_backoff(ls, &frame.tri, weights.lambda, q)
        .map_err(|e| e.with_element(element))?;
    let system = jlambda_system(frame, ls, beta, weights, &arc, &node_sides, frame.degree + 3);
    let (a, b) = system.gram();
    let (coeff, margin) = system.solve_all(element)?;

    let mut plus = DMatrix::zeros(n, n);
    let mut minus = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let (own, other) = match node_sides[i] {
                Side::Plus => (&mut plus, &mut minus),
                Side::Minus => (&mut minus, &mut plus),
            };
            own[(i, j)] = if i == j { 1.0 } else { 0.0 };
            other[(i, j)] = coeff[(i, j)];
        }
    }

    Ok(IfeLocalBasis {
        element,
        node_sides,
        plus,
        minus,
        gram_a: a,
        gram_b: b,
        eig_margin: margin,
        lambda_used,
    })
}

/// Per-element basis: plain Lagrange away from the interface, immersed on cut
/// elements.
#[derive(Clone, Debug)]
pub enum ElementBasis {
    Standard,
    Immersed(Box<IfeLocalBasis>),
}

/// Exact solution interface used by interpolation, right-hand sides and
/// error norms. All quantities are per side of the interface.
pub trait ExactSolution: Sync {
    fn value(&self, side: Side, p: Point) -> f64;
    fn gradient(&self, side: Side, p: Point) -> Vector;
    /// Hessian entries `[xx, xy, yy]`.
    fn hessian(&self, side: Side, p: Point) -> [f64; 3];
}

/// Global immersed finite element space on an unfitted mesh.
pub struct Space {
    pub mesh: MeshTopology,
    pub levelset: LevelSet,
    pub degree: usize,
    pub beta: Beta,
    pub weights: JWeights,
    pub classes: EntityClasses,
    pub dofs: DofMap,
    pub frames: Vec<ElementFrame>,
    pub bases: Vec<ElementBasis>,
    /// Curved subregions of interface elements, indexed by element.
    pub regions: Vec<Option<SplitRegions>>,
}

/// Build the global space: classify entities, construct the immersed local
/// bases and the DOF map.
pub fn build_space(
    mesh: MeshTopology,
    ls: LevelSet,
    degree: usize,
    beta: Beta,
    weights: JWeights,
) -> Result<Space> {
    build_space_with_policy(mesh, ls, degree, beta, weights, CutPolicy::Strict)
}

/// [`build_space`] with an explicit policy for unresolved cuts.
pub fn build_space_with_policy(
    mesh: MeshTopology,
    ls: LevelSet,
    degree: usize,
    beta: Beta,
    weights: JWeights,
    policy: CutPolicy,
) -> Result<Space> {
    weights.validate();
    let q = degree + 2;
    let classes = classify_entities(&mesh, &ls, q, policy)?;
    let dofs = build_dof_map(&mesh, degree)?;
    let snap = SNAP_REL * mesh.h;

    let frames: Vec<ElementFrame> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| ElementFrame::new(degree, mesh.triangle(e)))
        .collect::<Result<Vec<_>>>()?;

    let bases: Vec<ElementBasis> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| match &classes.cuts[e] {
            CutTopology::NonInterface(_) => Ok(ElementBasis::Standard),
            CutTopology::Interface(_) => {
                let basis = build_ife_basis(e, &frames[e], &ls, beta, &weights, snap)?;
                Ok(ElementBasis::Immersed(Box::new(basis)))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let regions: Vec<Option<SplitRegions>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| match &classes.cuts[e] {
            CutTopology::Interface(cut) => split_subdomains(&ls, &mesh.triangle(e), cut)
                .map(Some)
                .map_err(|err| err.with_element(e)),
            CutTopology::NonInterface(_) => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Space {
        mesh,
        levelset: ls,
        degree,
        beta,
        weights,
        classes,
        dofs,
        frames,
        bases,
        regions,
    })
}

impl Space {
    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs
    }

    pub fn local_dim(&self) -> usize {
        local_dim(self.degree)
    }

    /// Snap tolerance used for node-side assignment.
    pub fn snap(&self) -> f64 {
        SNAP_REL * self.mesh.h
    }

    /// Evaluate the basis of one element on a given side. On non-interface
    /// elements the side is ignored.
    pub fn basis_eval(&self, element: usize, side: Side, p: Point, order: usize) -> BasisEval {
        let eval = self.frames[element].basis_at(p, order);
        match &self.bases[element] {
            ElementBasis::Standard => eval,
            ElementBasis::Immersed(ife) => transform_eval(&eval, ife.piece(side), order),
        }
    }

    /// Quadrature covering one element; interface elements get one rule per
    /// side.
    pub fn element_quadrature(&self, element: usize, d: usize) -> Result<Vec<(Side, PhysRule)>> {
        match (&self.classes.cuts[element], &self.regions[element]) {
            (CutTopology::NonInterface(side), _) => {
                Ok(vec![(*side, triangle_rule(&self.mesh.triangle(element), d))])
            }
            (CutTopology::Interface(_), Some(regions)) => {
                let plus = curved_region_rule(&regions.plus, d)
                    .map_err(|e| e.with_element(element))?;
                let minus = curved_region_rule(&regions.minus, d)
                    .map_err(|e| e.with_element(element))?;
                Ok(vec![(Side::Plus, plus), (Side::Minus, minus)])
            }
            _ => unreachable!("interface element without split regions"),
        }
    }

    /// Nodal interpolant of an exact solution: the coefficient at each node
    /// is the value on the side containing the node.
    pub fn interpolate(&self, exact: &dyn ExactSolution) -> DVector<f64> {
        let snap = self.snap();
        let mut u = DVector::zeros(self.n_dofs());
        for (dof, &p) in self.dofs.coords.iter().enumerate() {
            let side = Side::from_phi(self.levelset.evaluate(p), snap);
            u[dof] = exact.value(side, p);
        }
        u
    }

    /// Min-eig margins of all interface elements.
    pub fn unisolvence_margins(&self) -> Vec<(usize, f64)> {
        self.bases
            .iter()
            .enumerate()
            .filter_map(|(e, b)| match b {
                ElementBasis::Immersed(ife) => Some((e, ife.eig_margin)),
                ElementBasis::Standard => None,
            })
            .collect()
    }

    /// Diagnostic dump of the immersed bases: per element the node values of
    /// every basis function together with the min-eig margin.
    pub fn dump_bases(&self, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        for (e, basis) in self.bases.iter().enumerate() {
            if let ElementBasis::Immersed(ife) = basis {
                writeln!(out, "element {e} margin {:.6e} lambda {}", ife.eig_margin, ife.lambda_used)?;
                let n = self.frames[e].n_basis();
                for j in 0..n {
                    let mut line = format!("  phi {j}");
                    for (i, &node) in self.frames[e].nodes.iter().enumerate() {
                        let side = ife.node_sides[i];
                        let eval = self.basis_eval(e, side, node, 0);
                        line.push_str(&format!(" {:.3e}", eval.value[j]));
                    }
                    writeln!(out, "{line}")?;
                }
            }
        }
        Ok(())
    }
}

/// Apply a piece-coefficient matrix to a raw Lagrange evaluation:
/// phi_j = sum_i piece[i, j] psi_i.
fn transform_eval(eval: &BasisEval, piece: &DMatrix<f64>, order: usize) -> BasisEval {
    let n = eval.len();
    let mut out = BasisEval::with_len(n, order);
    for j in 0..n {
        let mut v = 0.0;
        let mut g = Vector::zeros();
        let mut h = [0.0; 3];
        let mut t = [0.0; 4];
        for i in 0..n {
            let c = piece[(i, j)];
            if c == 0.0 {
                continue;
            }
            v += c * eval.value[i];
            if order >= 1 {
                g += eval.grad[i] * c;
            }
            if order >= 2 {
                for k in 0..3 {
                    h[k] += c * eval.hess[i][k];
                }
            }
            if order >= 3 {
                for k in 0..4 {
                    t[k] += c * eval.third[i][k];
                }
            }
        }
        out.value[j] = v;
        if order >= 1 {
            out.grad[j] = g;
        }
        if order >= 2 {
            out.hess[j] = h;
        }
        if order >= 3 {
            out.third[j] = t;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_element, CutPolicy};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn reference_triangle() -> Triangle {
        Triangle([
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
    }

    #[test]
    fn lagrange_kronecker_and_partition() {
        for p in [2usize, 3] {
            let frame = ElementFrame::new(p, reference_triangle()).unwrap();
            for (j, &node) in frame.nodes.iter().enumerate() {
                let eval = frame.basis_at(node, 0);
                for i in 0..frame.n_basis() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((eval.value[i] - expect).abs() < 1e-12);
                }
            }
            // sum of gradients vanishes (partition of unity)
            let p0 = Point::new(0.21, 0.37);
            let eval = frame.basis_at(p0, 1);
            let sum_val: f64 = eval.value.iter().sum();
            let sum_grad: Vector = eval.grad.iter().sum();
            assert_relative_eq!(sum_val, 1.0, epsilon = 1e-13);
            assert!(sum_grad.norm() < 1e-12);
        }
    }

    #[test]
    fn p2_third_derivatives_vanish() {
        let frame = ElementFrame::new(2, reference_triangle()).unwrap();
        let eval = frame.basis_at(Point::new(0.3, 0.3), 3);
        for i in 0..frame.n_basis() {
            for d in 0..4 {
                assert!(eval.third[i][d].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let tri = Triangle([
            Point::new(0.1, -0.2),
            Point::new(0.9, 0.05),
            Point::new(0.2, 0.8),
        ]);
        for p in [2usize, 3] {
            let frame = ElementFrame::new(p, tri).unwrap();
            let x0 = Point::new(0.35, 0.2);
            let s = 1e-5;
            for i in 0..frame.n_basis() {
                let f = |p: Point| frame.basis_at(p, 0).value[i];
                let eval = frame.basis_at(x0, 2);
                let fd_x = (f(Point::new(x0.x + s, x0.y)) - f(Point::new(x0.x - s, x0.y))) / (2.0 * s);
                let fd_y = (f(Point::new(x0.x, x0.y + s)) - f(Point::new(x0.x, x0.y - s))) / (2.0 * s);
                assert!((eval.grad[i].x - fd_x).abs() < 1e-8);
                assert!((eval.grad[i].y - fd_y).abs() < 1e-8);
                let fd_xx = (f(Point::new(x0.x + s, x0.y)) - 2.0 * f(x0) + f(Point::new(x0.x - s, x0.y))) / (s * s);
                assert!((eval.hess[i][0] - fd_xx).abs() < 1e-5);
            }
        }
    }

    fn line_cut_basis(p: usize, beta: Beta) -> (ElementFrame, IfeLocalBasis, LevelSet) {
        let tri = reference_triangle();
        let ls = LevelSet::line(1.0, 1.0, 0.62);
        let frame = ElementFrame::new(p, tri).unwrap();
        let weights = JWeights::for_beta(beta);
        let basis = build_ife_basis(0, &frame, &ls, beta, &weights, 1e-13).unwrap();
        (frame, basis, ls)
    }

    #[test]
    fn uniform_beta_reduces_to_lagrange() {
        for p in [2usize, 3] {
            let beta = Beta::new(1.0, 1.0);
            let (frame, basis, _) = line_cut_basis(p, beta);
            // B = -A and c = v: both pieces collapse onto the Lagrange basis
            let diff = (&basis.gram_a + &basis.gram_b).norm();
            assert!(diff < 1e-10 * basis.gram_a.norm());
            let n = frame.n_basis();
            let id = DMatrix::<f64>::identity(n, n);
            assert!((&basis.plus - &id).norm() < 1e-10);
            assert!((&basis.minus - &id).norm() < 1e-10);
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2usize, 3] {
            let beta = Beta::new(1.0, 100.0);
            let (frame, basis, _ls) = line_cut_basis(p, beta);
            let n = basis.plus.nrows();
            // sum of all basis functions stays 1 on both sides
            for _ in 0..50 {
                let mut l1: f64 = rng.random_range(0.0..1.0);
                let mut l2: f64 = rng.random_range(0.0..1.0);
                if l1 + l2 > 1.0 {
                    (l1, l2) = (1.0 - l1, 1.0 - l2);
                }
                let pt = Point::new(l1, l2);
                let eval = frame.basis_at(pt, 0);
                for side in [Side::Plus, Side::Minus] {
                    let piece = basis.piece(side);
                    let mut total = 0.0;
                    for j in 0..n {
                        for k in 0..n {
                            total += piece[(k, j)] * eval.value[k];
                        }
                    }
                    assert!(
                        (total - 1.0).abs() < 1e-10,
                        "partition of unity off by {:.3e} for p = {p}",
                        (total - 1.0).abs()
                    );
                }
            }
            // Gram-route solve agrees with a direct refinement solve
            let ones = DVector::from_element(n, 1.0);
            let (c, margin) = solve_ife_coefficients(&basis.gram_a, &basis.gram_b, &ones).unwrap();
            assert!(margin > 0.0);
            let tol = if p == 2 { 1e-9 } else { 1e-5 };
            for i in 0..n {
                assert!((c[i] - 1.0).abs() < tol, "coefficient {} = {}", i, c[i]);
            }
        }
    }

    #[test]
    fn gram_matches_refined_quadrature() {
        let beta = Beta::new(1.0, 100.0);
        let tri = reference_triangle();
        let ls = LevelSet::line(1.0, 1.0, 0.62);
        let frame = ElementFrame::new(2, tri).unwrap();
        let weights = JWeights::for_beta(beta);
        let node_sides: Vec<Side> = frame
            .nodes
            .iter()
            .map(|&p| Side::from_phi(ls.evaluate(p), 1e-13))
            .collect();
        let (arc, _) = extended_arc_with_backoff(&ls, &tri, 2.0, 4).unwrap();
        let (a1, b1) = jlambda_gram(&frame, &ls, beta, &weights, &arc, &node_sides, 5);
        let (a2, b2) = jlambda_gram(&frame, &ls, beta, &weights, &arc, &node_sides, 50);
        assert!((&a1 - &a2).norm() < 1e-9 * a2.norm());
        assert!((&b1 - &b2).norm() < 1e-9 * b2.norm());
    }

    #[test]
    fn least_squares_is_a_minimum() {
        // J(c) <= J(c + delta) for random perturbations
        let beta = Beta::new(1.0, 10.0);
        let (_, basis, _) = line_cut_basis(2, beta);
        let n = basis.plus.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (c, _) = solve_ife_coefficients(&basis.gram_a, &basis.gram_b, &v).unwrap();
        let j_of = |c: &DVector<f64>| {
            (c.transpose() * &basis.gram_a * c)[(0, 0)]
                + 2.0 * (c.transpose() * &basis.gram_b * &v)[(0, 0)]
        };
        let j_opt = j_of(&c);
        for _ in 0..100 {
            let mut delta = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            delta *= 1e-3 / delta.norm();
            let j_pert = j_of(&(&c + &delta));
            assert!(j_opt <= j_pert + 1e-14 * j_opt.abs().max(1.0));
        }
    }

    #[test]
    fn line_cut_unisolvence_and_paper_determinant() {
        // cuts through the two legs at distances d, e in [1/2, 1] from the
        // right-angle vertex: the determinant formula of the uniqueness proof
        // must be positive, and so must the assembled Gram margin
        let tri = reference_triangle();
        let frame = ElementFrame::new(2, tri).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d: f64 = rng.random_range(0.5..1.0);
            let e: f64 = rng.random_range(0.5..1.0);
            let rho: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
            // line through (d, 0) and (0, e)
            let ls = LevelSet::line(e, d, d * e);
            let beta = Beta::new(1.0, rho);
            let weights = JWeights::for_beta(beta).with_lambda(1.0);
            let basis = build_ife_basis(0, &frame, &ls, beta, &weights, 1e-13).unwrap();
            assert!(basis.eig_margin > 0.0);

            let p1 = -d.powi(3) * (1.0 - 2.0 * e).powi(2) * e
                - 2.0 * d * d * (e - 2.0) * e.powi(3)
                - e.powi(4)
                + d * e.powi(3) * (4.0 * e - 1.0)
                + d.powi(4) * (4.0 * e - 2.0 * e * e - 1.0);
            let p2 = 2.0 * d.powi(4) * (e - 1.0) * (e - 1.0)
                + d.powi(3) * (1.0 - 2.0 * e).powi(2) * e
                + 2.0 * d * d * (e - 1.0) * (e - 1.0) * e * e
                + 2.0 * e.powi(4)
                + d * (e.powi(3) - 4.0 * e.powi(4));
            let det = 32.0 * (d * d + e * e).powi(2) * (p1 + rho * p2);
            assert!(det > 0.0, "determinant formula not positive at d={d} e={e} rho={rho}");
        }
    }

    #[test]
    fn kronecker_and_weak_continuity() {
        let r0 = 0.5;
        let ls = LevelSet::circle(r0);
        let tri = Triangle([
            Point::new(r0 - 0.07, -0.05),
            Point::new(r0 + 0.09, -0.05),
            Point::new(r0 - 0.07, 0.09),
        ]);
        for p in [2usize, 3] {
            let beta = Beta::new(50.0, 1.0);
            let frame = ElementFrame::new(p, tri).unwrap();
            let weights = JWeights::for_beta(beta);
            let basis = build_ife_basis(0, &frame, &ls, beta, &weights, 1e-14).unwrap();
            let n = frame.n_basis();
            // Kronecker property at the nodes, evaluating the owning side
            for j in 0..n {
                for (i, &node) in frame.nodes.iter().enumerate() {
                    let piece = basis.piece(basis.node_sides[i]);
                    let eval = frame.basis_at(node, 0);
                    let mut v = 0.0;
                    for k in 0..n {
                        v += piece[(k, j)] * eval.value[k];
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-10);
                }
            }
            // the two pieces genuinely differ across a curved interface
            let snap = SNAP_REL * tri.diameter();
            let cut = match classify_element(&ls, &tri, p + 2, snap, CutPolicy::Strict).unwrap() {
                CutTopology::Interface(c) => c,
                _ => panic!(),
            };
            let rule = arc_rule(&cut.arc_nodes, p + 3);
            let mut max_jump = 0.0f64;
            for j in 0..n {
                let mut jump2 = 0.0;
                for (pt, w) in rule.iter() {
                    let eval = frame.basis_at(pt, 0);
                    let mut vp = 0.0;
                    let mut vm = 0.0;
                    for k in 0..n {
                        vp += basis.plus[(k, j)] * eval.value[k];
                        vm += basis.minus[(k, j)] * eval.value[k];
                    }
                    jump2 += w * (vp - vm) * (vp - vm);
                }
                max_jump = max_jump.max(jump2);
            }
            assert!(max_jump > 1e-18, "pieces should differ weakly on a curved cut");
        }
    }

    #[test]
    fn uniform_weight_scaling_leaves_basis_unchanged() {
        // scaling beta by kappa and rescaling the value/normal-derivative
        // weights by kappa^2 multiplies the whole functional by kappa^2, so
        // the minimizer is unchanged
        let kappa = 7.0;
        let tri = reference_triangle();
        let ls = LevelSet::line(1.0, 1.0, 0.62);
        let frame = ElementFrame::new(2, tri).unwrap();
        let beta1 = Beta::new(1.0, 10.0);
        let beta2 = Beta::new(kappa, 10.0 * kappa);
        let w1 = JWeights::for_beta(beta1);
        let mut w2 = JWeights::for_beta(beta2);
        w2.w1 = kappa * kappa;
        let b1 = build_ife_basis(0, &frame, &ls, beta1, &w1, 1e-13).unwrap();
        let b2 = build_ife_basis(0, &frame, &ls, beta2, &w2, 1e-13).unwrap();
        assert!((&b1.plus - &b2.plus).norm() < 1e-10);
        assert!((&b1.minus - &b2.minus).norm() < 1e-10);
    }
}
