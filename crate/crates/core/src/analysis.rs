//! Error norms against exact or reference solutions and convergence-order
//! reporting.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::space::{ExactSolution, Space};

/// Broken L2 / H1-semi / H2-semi errors. The H2 seminorm uses the Frobenius
/// inner product of Hessians (the mixed derivative counts twice), matching
/// the energy of the scheme.
#[derive(Clone, Copy, Debug)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

impl ErrorNorms {
    pub fn as_array(&self) -> [f64; 3] {
        [self.l2, self.h1, self.h2]
    }
}

/// Volume quadrature exactness for norm evaluation: 2p + 4 leaves the
/// trigonometric factors of the manufactured solutions below discretization
/// error at every shipped resolution.
pub fn norm_exactness(degree: usize) -> usize {
    2 * degree + 4
}

/// Integrate the error of a discrete function against the exact solution,
/// splitting cut elements per subregion with the matching side data.
pub fn error_norms(space: &Space, u: &DVector<f64>, exact: &dyn ExactSolution) -> Result<ErrorNorms> {
    error_norms_with_exactness(space, u, exact, norm_exactness(space.degree))
}

pub fn error_norms_with_exactness(
    space: &Space,
    u: &DVector<f64>,
    exact: &dyn ExactSolution,
    exactness: usize,
) -> Result<ErrorNorms> {
    let sums: Vec<[f64; 3]> = (0..space.mesh.n_elements())
        .into_par_iter()
        .map(|e| -> Result<[f64; 3]> {
            let dofs = &space.dofs.element_dofs[e];
            let mut acc = [0.0; 3];
            for (side, rule) in space.element_quadrature(e, exactness)? {
                for (p, w) in rule.iter() {
                    let eval = space.basis_eval(e, side, p, 2);
                    let mut val = -exact.value(side, p);
                    let gradient = exact.gradient(side, p);
                    let mut gx = -gradient.x;
                    let mut gy = -gradient.y;
                    let hess = exact.hessian(side, p);
                    let mut hxx = -hess[0];
                    let mut hxy = -hess[1];
                    let mut hyy = -hess[2];
                    for (i, &dof) in dofs.iter().enumerate() {
                        let c = u[dof];
                        val += c * eval.value[i];
                        gx += c * eval.grad[i].x;
                        gy += c * eval.grad[i].y;
                        hxx += c * eval.hess[i][0];
                        hxy += c * eval.hess[i][1];
                        hyy += c * eval.hess[i][2];
                    }
                    acc[0] += w * val * val;
                    acc[1] += w * (gx * gx + gy * gy);
                    acc[2] += w * (hxx * hxx + 2.0 * hxy * hxy + hyy * hyy);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = [0.0; 3];
    for s in sums {
        for k in 0..3 {
            total[k] += s[k];
        }
    }
    Ok(ErrorNorms {
        l2: total[0].sqrt(),
        h1: total[1].sqrt(),
        h2: total[2].sqrt(),
    })
}

/// Broken L2 norm of a coefficient vector (used for cross-checks between
/// interpolants and discrete solutions).
pub fn broken_l2(space: &Space, u: &DVector<f64>) -> Result<f64> {
    let d = norm_exactness(space.degree);
    let sums: Vec<f64> = (0..space.mesh.n_elements())
        .into_par_iter()
        .map(|e| -> Result<f64> {
            let dofs = &space.dofs.element_dofs[e];
            let mut acc = 0.0;
            for (side, rule) in space.element_quadrature(e, d)? {
                for (p, w) in rule.iter() {
                    let eval = space.basis_eval(e, side, p, 0);
                    let mut val = 0.0;
                    for (i, &dof) in dofs.iter().enumerate() {
                        val += u[dof] * eval.value[i];
                    }
                    acc += w * val * val;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sums.iter().sum::<f64>().sqrt())
}

/// Grid values of a discrete function at the (N+1)^2 mesh vertices. Vertex
/// coefficients are the nodal values of the Lagrange-type basis.
fn vertex_grid(space: &Space, u: &DVector<f64>) -> Vec<f64> {
    let n = space.mesh.n;
    let mut grid = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let dof = space.dofs.vertex_dof(space.mesh.vertex_id(i, j));
            grid.push(u[dof]);
        }
    }
    grid
}

/// Second-order difference approximation of the gradient on the vertex grid:
/// central stencils inside, one-sided second-order stencils on the boundary.
fn grid_gradient(grid: &[f64], n: usize, h: f64) -> Vec<[f64; 2]> {
    let at = |i: usize, j: usize| grid[j * (n + 1) + i];
    let mut out = vec![[0.0; 2]; (n + 1) * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            let dx = if i == 0 {
                (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * h)
            } else if i == n {
                (3.0 * at(n, j) - 4.0 * at(n - 1, j) + at(n - 2, j)) / (2.0 * h)
            } else {
                (at(i + 1, j) - at(i - 1, j)) / (2.0 * h)
            };
            let dy = if j == 0 {
                (-3.0 * at(i, 0) + 4.0 * at(i, 1) - at(i, 2)) / (2.0 * h)
            } else if j == n {
                (3.0 * at(i, n) - 4.0 * at(i, n - 1) + at(i, n - 2)) / (2.0 * h)
            } else {
                (at(i, j + 1) - at(i, j - 1)) / (2.0 * h)
            };
            out[j * (n + 1) + i] = [dx, dy];
        }
    }
    out
}

/// Discrete vertex-grid norms against a reference solution on a nested finer
/// mesh: `h (sum_X (u_h(X) - u_ref(X))^2)^{1/2}` and the same applied to the
/// second-order difference gradients.
pub fn discrete_norms(
    coarse: &Space,
    u_coarse: &DVector<f64>,
    fine: &Space,
    u_fine: &DVector<f64>,
) -> Result<(f64, f64)> {
    let nc = coarse.mesh.n;
    let nf = fine.mesh.n;
    if nf % nc != 0 {
        return Err(Error::NonNestedGrids {
            coarse: nc,
            fine: nf,
        });
    }
    let ratio = nf / nc;
    let h = coarse.mesh.h;

    let grid_c = vertex_grid(coarse, u_coarse);
    let mut grid_f = Vec::with_capacity((nc + 1) * (nc + 1));
    for j in 0..=nc {
        for i in 0..=nc {
            let dof = fine
                .dofs
                .vertex_dof(fine.mesh.vertex_id(i * ratio, j * ratio));
            grid_f.push(u_fine[dof]);
        }
    }

    let mut e0 = 0.0;
    for (a, b) in grid_c.iter().zip(&grid_f) {
        e0 += (a - b) * (a - b);
    }
    let g_c = grid_gradient(&grid_c, nc, h);
    let g_f = grid_gradient(&grid_f, nc, h);
    let mut e1 = 0.0;
    for (a, b) in g_c.iter().zip(&g_f) {
        e1 += (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
    }
    Ok((h * e0.sqrt(), h * e1.sqrt()))
}

/// Order between consecutive refinement levels:
/// `log(e_{k-1}/e_k) / log(h_{k-1}/h_k)`.
pub fn convergence_orders(errors: &[f64], hs: &[f64]) -> Vec<f64> {
    assert_eq!(errors.len(), hs.len());
    assert!(errors.len() >= 2, "need at least two levels");
    errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// One refinement level of a convergence study.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub n: usize,
    pub h: f64,
    pub errors: Vec<f64>,
    /// One order per error column, absent on the first row.
    pub orders: Vec<Option<f64>>,
}

/// Tabulated errors with computed orders.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    /// Column labels, e.g. `["e0", "e1", "e2"]`.
    pub labels: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ErrorReport {
    pub fn new(labels: &[&str], ns: &[usize], hs: &[f64], errors: &[Vec<f64>]) -> Self {
        assert_eq!(ns.len(), errors.len());
        let n_cols = labels.len();
        let mut rows = Vec::with_capacity(ns.len());
        for (k, (&n, errs)) in ns.iter().zip(errors).enumerate() {
            assert_eq!(errs.len(), n_cols);
            let orders = (0..n_cols)
                .map(|c| {
                    if k == 0 {
                        None
                    } else {
                        let e_prev = errors[k - 1][c];
                        let e_cur = errs[c];
                        Some((e_prev / e_cur).ln() / (hs[k - 1] / hs[k]).ln())
                    }
                })
                .collect();
            rows.push(ReportRow {
                n,
                h: hs[k],
                errors: errs.clone(),
                orders,
            });
        }
        ErrorReport {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    /// Orders of the final refinement level, one per column.
    pub fn final_orders(&self) -> Vec<f64> {
        self.rows
            .last()
            .map(|r| r.orders.iter().map(|o| o.unwrap_or(f64::NAN)).collect())
            .unwrap_or_default()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.errors[c]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,h");
        for label in &self.labels {
            out.push_str(&format!(",{label},order_{label}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{:.6e}", row.n, row.h));
            for (e, o) in row.errors.iter().zip(&row.orders) {
                match o {
                    Some(o) => out.push_str(&format!(",{e:.6e},{o:.2}")),
                    None => out.push_str(&format!(",{e:.6e},")),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| N |");
        for label in &self.labels {
            out.push_str(&format!(" {label} | order |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &self.labels {
            out.push_str("---|---|");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.n));
            for (e, o) in row.errors.iter().zip(&row.orders) {
                match o {
                    Some(o) => out.push_str(&format!(" {e:.4e} | {o:.2} |")),
                    None => out.push_str(&format!(" {e:.4e} | |")),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn order_formula() {
        let orders = convergence_orders(&[1.0, 0.125], &[1.0, 0.5]);
        assert_relative_eq!(orders[0], 3.0, epsilon = 1e-14);
        let flat = convergence_orders(&[0.7, 0.7], &[1.0, 0.5]);
        assert_relative_eq!(flat[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn printed_table_orders_reproduced() {
        // error columns of the P2 line interpolation study; the printed
        // two-decimal orders follow from the error values alone
        let l2 = [2.2981e-2, 2.9230e-3, 3.6703e-4, 4.5932e-5, 5.7431e-6];
        let h1 = [9.2168e-1, 2.3391e-1, 5.8708e-2, 1.4692e-2, 3.6738e-3];
        let h2 = [3.5313e1, 1.7926e1, 8.9983e0, 4.5036e0, 2.2524e0];
        let printed_l2 = [2.97, 2.99, 3.00, 3.00];
        let printed_h1 = [1.98, 1.99, 2.00, 2.00];
        let printed_h2 = [0.98, 0.99, 1.00, 1.00];
        let hs: Vec<f64> = [10.0, 20.0, 40.0, 80.0, 160.0]
            .iter()
            .map(|n| 2.0 / n)
            .collect();
        for (errors, printed) in [
            (&l2[..], &printed_l2[..]),
            (&h1[..], &printed_h1[..]),
            (&h2[..], &printed_h2[..]),
        ] {
            let orders = convergence_orders(errors, &hs);
            for (o, p) in orders.iter().zip(printed) {
                assert!(
                    (o - p).abs() <= 0.01,
                    "order {o:.4} differs from printed {p}"
                );
            }
        }
    }

    #[test]
    fn grid_gradient_exact_for_quadratics() {
        // x^2 on a 5x5 grid: the central difference of a quadratic is exact
        let n = 4usize;
        let h = 0.5;
        let mut grid = vec![0.0; (n + 1) * (n + 1)];
        for j in 0..=n {
            for i in 0..=n {
                let x = i as f64 * h;
                grid[j * (n + 1) + i] = x * x;
            }
        }
        let grads = grid_gradient(&grid, n, h);
        for j in 0..=n {
            for i in 1..n {
                let x = i as f64 * h;
                assert_relative_eq!(grads[j * (n + 1) + i][0], 2.0 * x, epsilon = 1e-13);
                assert_relative_eq!(grads[j * (n + 1) + i][1], 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn csv_has_six_significant_digits() {
        let report = ErrorReport::new(
            &["e0"],
            &[10, 20],
            &[0.2, 0.1],
            &[vec![1.234567e-3], vec![1.5e-4]],
        );
        let csv = report.to_csv();
        assert!(csv.contains("1.234567e-3"));
        assert!(csv.lines().count() == 3);
    }
}
