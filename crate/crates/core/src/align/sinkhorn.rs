//! Entropic OT by alternating scaling with log-domain absorption.
//!
//! The plan is `P = diag(u) K diag(v)` with `K_ij = exp((f_i + g_j - C_ij) / eps)`.
//! The dual potentials `f`, `g` live in the log domain; whenever a scaling
//! factor leaves `[1/ABSORB, ABSORB]` it is folded into its potential and the
//! kernel is rebuilt, so nothing overflows even for `C / eps` in the hundreds.
//!
//! Plain scaling converges linearly and, on degenerate problems (uniform
//! marginals with coinciding partial sums are common), so slowly that a
//! 1e-9 tolerance is out of reach. Every [`NEWTON_EVERY`] sweeps the solver
//! therefore tries damped Newton steps on the concave dual objective, which
//! has the same optimum. A step is kept if it gives sufficient ascent or a
//! smaller marginal violation; scaling resumes as soon as the violation
//! stops dropping.

use super::{check_marginals, marginal_violation, AlignError, CostMatrix, TransportPlan};
use crate::matrix::Matrix;

const ABSORB: f64 = 1e30;
/// Scaling sweeps between Newton attempts.
pub const NEWTON_EVERY: usize = 20;
const MAX_HALVINGS: usize = 40;
const MAX_EXPONENT_STEP: f64 = 30.0;

/// Regularized transport plan. Stops once the largest row/column marginal
/// violation is at most `tol`; otherwise fails with
/// [`AlignError::NonConvergence`] carrying the last iterate.
pub fn sinkhorn(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan, AlignError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(AlignError::BadEpsilon(epsilon));
    }
    check_marginals(cost, a, b)?;
    let (m, n) = (cost.rows(), cost.cols());
    // Start from potentials that put a unit entry in every row and column,
    // so no kernel row underflows entirely however small eps is.
    let f: Vec<f64> = (0..m).map(|i| (0..n).map(|j| cost.get(i, j)).fold(f64::INFINITY, f64::min)).collect();
    let g: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| cost.get(i, j) - f[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let (mut f, mut g) = (f, g);
    let mut u = vec![1.0f64; m];
    let mut v = vec![1.0f64; n];
    let mut kernel = build_kernel(cost, &f, &g, epsilon);
    let mut row_mass = vec![0.0f64; m];
    let mut col_mass = vec![0.0f64; n];

    let mut iterations = 0;
    let mut converged = false;
    // false right after a Newton step, which moves both marginals
    let mut cols_exact = false;
    // zero-mass entries are pinned by a zero scaling, which the dual step cannot express
    let newton = a.iter().chain(b).all(|&x| x > 0.0);
    while iterations < max_iter {
        // Row masses of the current plan; columns are exact after the last v update.
        for (i, rm) in row_mass.iter_mut().enumerate() {
            *rm = kernel.row(i).iter().zip(&v).map(|(k, vj)| k * vj).sum();
        }
        if cols_exact {
            let violation = row_mass
                .iter()
                .zip(&u)
                .zip(a)
                .map(|((s, ui), ai)| (ui * s - ai).abs())
                .fold(0.0, f64::max);
            if violation <= tol {
                converged = true;
                break;
            }
        }
        for ((ui, s), ai) in u.iter_mut().zip(&row_mass).zip(a) {
            *ui = if *ai == 0.0 { 0.0 } else { ai / s };
        }
        col_mass.iter_mut().for_each(|c| *c = 0.0);
        for (i, ui) in u.iter().enumerate() {
            for (c, k) in col_mass.iter_mut().zip(kernel.row(i)) {
                *c += k * ui;
            }
        }
        for ((vj, s), bj) in v.iter_mut().zip(&col_mass).zip(b) {
            *vj = if *bj == 0.0 { 0.0 } else { bj / s };
        }
        iterations += 1;

        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            // A kernel row or column underflowed entirely; nothing left to scale.
            break;
        }
        let out_of_range = |x: &f64| *x != 0.0 && !(1.0 / ABSORB..=ABSORB).contains(x);
        if u.iter().any(out_of_range) || v.iter().any(out_of_range) {
            absorb(&mut f, &mut u, epsilon);
            absorb(&mut g, &mut v, epsilon);
            kernel = build_kernel(cost, &f, &g, epsilon);
        }
        cols_exact = true;

        if newton && iterations % NEWTON_EVERY == 0 && iterations < max_iter {
            absorb(&mut f, &mut u, epsilon);
            absorb(&mut g, &mut v, epsilon);
            kernel = build_kernel(cost, &f, &g, epsilon);
            let mut current = marginal_violation(&kernel, a, b);
            while iterations < max_iter {
                let Some((trial, violation)) = newton_step(cost, a, b, epsilon, &mut f, &mut g, &kernel, current)
                else {
                    break;
                };
                iterations += 1;
                kernel = trial;
                cols_exact = false;
                if violation <= tol {
                    converged = true;
                    break;
                }
                if violation >= current {
                    // an ascent step that did not help the marginals; let scaling rebalance
                    break;
                }
                current = violation;
            }
            if converged {
                break;
            }
        }
    }

    let plan = Matrix::from_fn(m, n, |i, j| u[i] * kernel.get(i, j) * v[j]);
    let result = TransportPlan::assemble(plan, cost, a, b, iterations);
    if converged && result.marginal_violation.is_finite() {
        Ok(result)
    } else {
        Err(AlignError::NonConvergence {
            violation: result.marginal_violation,
            iterations,
            plan: Box::new(result),
        })
    }
}

/// One damped Newton step on the dual `(f, g)` at `kernel = P(f, g)`.
///
/// The Newton system `[[diag(P 1), P], [P^T, diag(P^T 1)]] (df, dg) =
/// eps * (a - P 1, b - P^T 1)` becomes a graph Laplacian once `dg` is negated:
/// rows and columns are nodes and `P_ij` the edge weights. It is singular
/// along constants, so the last column node is grounded. The step is halved
/// until the violation drops below `current`. Returns the new kernel and its
/// violation, updating `f`, `g`.
#[allow(clippy::too_many_arguments)]
fn newton_step(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    f: &mut [f64],
    g: &mut [f64],
    kernel: &Matrix,
    current: f64,
) -> Option<(Matrix, f64)> {
    let (m, n) = (cost.rows(), cost.cols());
    let nodes = m + n;
    let mut w = vec![0.0f64; nodes * nodes];
    for i in 0..m {
        for j in 0..n {
            let p = kernel.get(i, j);
            w[i * nodes + m + j] = p;
            w[(m + j) * nodes + i] = p;
        }
    }
    let rows = kernel.row_sums();
    let cols = kernel.col_sums();
    let mut rhs: Vec<f64> = (0..m)
        .map(|i| epsilon * (a[i] - rows[i]))
        .chain((0..n).map(|j| epsilon * (cols[j] - b[j])))
        .collect();
    let step = grounded_laplacian_solve(&mut w, &mut rhs, nodes)?;
    // Near-disconnected plans give huge linearized steps; start from one
    // that rescales no kernel entry by more than exp(MAX_EXPONENT_STEP).
    let largest = step.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let mut t = (MAX_EXPONENT_STEP * epsilon / largest).min(1.0);
    let objective = dual_objective(f, g, a, b, epsilon, kernel);
    // directional derivative of the dual along the step, in (df, dg) form
    let slope: f64 = (0..m).map(|i| (a[i] - rows[i]) * step[i]).sum::<f64>()
        - (0..n).map(|j| (b[j] - cols[j]) * step[m + j]).sum::<f64>();
    for _ in 0..MAX_HALVINGS {
        let tf: Vec<f64> = f.iter().zip(&step[..m]).map(|(x, d)| x + t * d).collect();
        let tg: Vec<f64> = g.iter().zip(&step[m..]).map(|(x, d)| x - t * d).collect();
        let trial = build_kernel(cost, &tf, &tg, epsilon);
        let violation = marginal_violation(&trial, a, b);
        // Sufficient ascent on the dual, or failing that (once the gain is
        // below rounding) a smaller marginal violation.
        let ascent = dual_objective(&tf, &tg, a, b, epsilon, &trial) > objective + 1e-4 * t * slope;
        if violation.is_finite() && ((ascent && slope > 0.0) || violation < current) {
            f.copy_from_slice(&tf);
            g.copy_from_slice(&tg);
            return Some((trial, violation));
        }
        t *= 0.5;
    }
    None
}

/// `<f, a> + <g, b> - eps * sum(P)`: concave, maximized at the regularized optimum.
fn dual_objective(f: &[f64], g: &[f64], a: &[f64], b: &[f64], epsilon: f64, kernel: &Matrix) -> f64 {
    let linear: f64 = f.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() + g.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    linear - epsilon * kernel.as_slice().iter().sum::<f64>()
}

/// Solves `L x = rhs` for the Laplacian with symmetric edge weights `w`
/// (`nodes x nodes`, diagonal ignored) and `x` fixed to 0 at the last node.
///
/// Each pivot is the sum of the node's remaining edge weights instead of a
/// difference, so elimination stays accurate when weights span hundreds of
/// orders of magnitude. `None` if some node is cut off from the ground.
fn grounded_laplacian_solve(w: &mut [f64], rhs: &mut [f64], nodes: usize) -> Option<Vec<f64>> {
    let last = nodes - 1;
    let mut pivot = vec![0.0f64; nodes];
    for k in 0..last {
        let d: f64 = (k + 1..nodes).map(|j| w[k * nodes + j]).sum();
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        pivot[k] = d;
        for i in k + 1..nodes {
            let wik = w[i * nodes + k];
            if wik == 0.0 {
                continue;
            }
            let scale = wik / d;
            rhs[i] += scale * rhs[k];
            for j in k + 1..nodes {
                if j != i {
                    w[i * nodes + j] += scale * w[k * nodes + j];
                }
            }
        }
    }
    let mut x = vec![0.0f64; nodes];
    for k in (0..last).rev() {
        let pull: f64 = (k + 1..last).map(|j| w[k * nodes + j] * x[j]).sum();
        x[k] = (rhs[k] + pull) / pivot[k];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn absorb(potential: &mut [f64], scaling: &mut [f64], epsilon: f64) {
    for (p, s) in potential.iter_mut().zip(scaling.iter_mut()) {
        if *s > 0.0 {
            *p += epsilon * s.ln();
            *s = 1.0;
        }
    }
}

fn build_kernel(cost: &CostMatrix, f: &[f64], g: &[f64], epsilon: f64) -> Matrix {
    Matrix::from_fn(cost.rows(), cost.cols(), |i, j| {
        ((f[i] + g[j] - cost.get(i, j)) / epsilon).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{ot_exact, uniform_marginal};

    #[test]
    fn zero_diagonal_cost_is_small() {
        let c = CostMatrix::new(Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let u = uniform_marginal(4);
        let p = sinkhorn(&c, &u, &u, 0.01, 10_000, 1e-9).unwrap();
        assert!(p.cost <= 0.05, "{}", p.cost);
        assert!(p.cost >= ot_exact(&c, &u, &u).unwrap().cost - 1e-9);
        assert!(p.marginal_violation <= 1e-9);
    }

    #[test]
    fn single_source_row_sum() {
        let c = CostMatrix::from_rows(&[[0.3, 1.7]]).unwrap();
        let p = sinkhorn(&c, &[1.0], &[0.4, 0.6], 0.05, 1000, 1e-12).unwrap();
        assert!((p.plan.row_sums()[0] - 1.0).abs() <= 1e-12);
        // Only one coupling is feasible.
        assert!((p.cost - (0.4 * 0.3 + 0.6 * 1.7)).abs() < 1e-12);
    }

    #[test]
    fn small_epsilon_does_not_overflow() {
        let c = CostMatrix::new(Matrix::from_fn(3, 5, |i, j| if (i + j) % 3 == 0 { 0.0 } else { 2.0 })).unwrap();
        let (a, b) = (uniform_marginal(3), uniform_marginal(5));
        let p = sinkhorn(&c, &a, &b, 0.001, 200_000, 1e-9).unwrap();
        assert!(p.plan.as_slice().iter().all(|x| x.is_finite() && *x >= 0.0));
        let exact = ot_exact(&c, &a, &b).unwrap().cost;
        assert!((p.cost - exact).abs() < 1e-3, "{} vs {exact}", p.cost);
    }

    #[test]
    fn reports_nonconvergence() {
        let c = CostMatrix::new(Matrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 / 2.5)).unwrap();
        let u = uniform_marginal(6);
        match sinkhorn(&c, &u, &u, 0.01, 1, 1e-15) {
            Err(AlignError::NonConvergence { iterations, plan, .. }) => {
                assert_eq!(iterations, 1);
                assert!(plan.plan.as_slice().iter().all(|x| *x >= 0.0));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(matches!(sinkhorn(&c, &u, &u, 0.0, 10, 1e-9), Err(AlignError::BadEpsilon(_))));
    }

    #[test]
    fn degenerate_uniform_instance_converges() {
        // Two nearly disconnected blocks in the limiting plan; scaling alone stalls near 2e-9.
        let c = CostMatrix::from_rows(&[
            [1.6875, 0.1188, 1.1507, 0.0878, 1.7520, 1.3295],
            [1.1477, 0.3214, 0.7938, 1.6660, 0.8244, 1.7071],
            [0.8460, 0.1799, 0.8373, 1.1295, 0.0920, 1.8587],
            [1.2915, 0.6087, 0.6026, 1.7406, 0.6271, 0.8254],
            [1.9358, 0.7822, 0.3310, 1.6218, 0.6832, 1.2837],
            [1.0666, 0.1722, 1.3666, 0.6064, 1.9398, 1.8029],
        ])
        .unwrap();
        let u = uniform_marginal(6);
        let p = sinkhorn(&c, &u, &u, 0.005, 100_000, 1e-9).unwrap();
        assert!(p.marginal_violation <= 1e-9);
        assert!((p.cost - ot_exact(&c, &u, &u).unwrap().cost).abs() < 1e-3);
    }

    #[test]
    fn tiny_epsilon_first_sweep_does_not_underflow() {
        // every cost / eps above 745 would zero a kernel built from zero potentials
        let c = CostMatrix::from_rows(&[[1.9, 1.8, 1.95], [1.85, 1.99, 1.9]]).unwrap();
        let (a, b) = (uniform_marginal(2), uniform_marginal(3));
        let p = sinkhorn(&c, &a, &b, 0.001, 100_000, 1e-9).unwrap();
        assert!(p.marginal_violation <= 1e-9);
    }

    #[test]
    fn laplacian_solve_matches_direct() {
        // path 0 - 1 - 2 with weights 2 and 3, grounded at 2
        let mut w = vec![0.0, 2.0, 0.0, 2.0, 0.0, 3.0, 0.0, 3.0, 0.0];
        let mut rhs = vec![1.0, 0.0, -1.0];
        let x = grounded_laplacian_solve(&mut w, &mut rhs, 3).unwrap();
        // currents: 1 unit flows 0 -> 2, so x1 = 1/3 and x0 = x1 + 1/2
        assert!((x[1] - 1.0 / 3.0).abs() < 1e-15 && (x[0] - 5.0 / 6.0).abs() < 1e-15 && x[2] == 0.0);
        let mut cut = vec![0.0; 9];
        assert!(grounded_laplacian_solve(&mut cut, &mut [1.0, 0.0, 0.0], 3).is_none());
    }
}
