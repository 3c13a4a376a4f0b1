//! Transportation simplex (north-west corner start, potential-based pivoting).
//!
//! The basis is a spanning tree over the `m + n` row/column nodes with
//! exactly `m + n - 1` basic cells, degenerate (zero-flow) cells included.
//! Entering cells follow Dantzig's rule; after a degenerate pivot the next
//! choice falls back to Bland's smallest-index rule so the method cannot cycle.

use super::{check_marginals, AlignError, CostMatrix, TransportPlan};
use crate::matrix::Matrix;

const REDUCED_COST_TOL: f64 = 1e-12;
const DEGENERATE_STEP: f64 = 1e-14;

/// Exact optimal transport plan for marginals `a` (rows) and `b` (columns).
pub fn ot_exact(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<TransportPlan, AlignError> {
    check_marginals(cost, a, b)?;
    let (m, n) = (cost.rows(), cost.cols());
    let mut basis = Basis::north_west(a, b);
    let pivot_limit = 1000 + 50 * m * n;
    let mut pivots = 0;
    let mut bland = false;
    loop {
        let (u, v) = basis.potentials(cost);
        let Some((ei, ej)) = basis.entering(cost, &u, &v, bland) else {
            break;
        };
        if pivots == pivot_limit {
            return Err(AlignError::PivotLimit(pivot_limit));
        }
        let step = basis.pivot(ei, ej);
        bland = step <= DEGENERATE_STEP;
        pivots += 1;
    }
    Ok(TransportPlan::assemble(basis.flow, cost, a, b, pivots))
}

struct Basis {
    m: usize,
    n: usize,
    flow: Matrix,
    basic: Vec<bool>,
}

impl Basis {
    fn north_west(a: &[f64], b: &[f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut flow = Matrix::zeros(m, n);
        let mut basic = vec![false; m * n];
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let q = ra[i].min(rb[j]);
            flow.set(i, j, q);
            basic[i * n + j] = true;
            ra[i] = (ra[i] - q).max(0.0);
            rb[j] = (rb[j] - q).max(0.0);
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Basis { m, n, flow, basic }
    }

    /// Tree adjacency: node `i < m` is row `i`, node `m + j` is column `j`.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for i in 0..self.m {
            for j in 0..self.n {
                if self.basic[i * self.n + j] {
                    adj[i].push(self.m + j);
                    adj[self.m + j].push(i);
                }
            }
        }
        adj
    }

    /// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
    fn potentials(&self, cost: &CostMatrix) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut pot = vec![f64::NAN; self.m + self.n];
        pot[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &next in &adj[node] {
                if pot[next].is_nan() {
                    let c = if node < self.m {
                        cost.get(node, next - self.m)
                    } else {
                        cost.get(next, node - self.m)
                    };
                    pot[next] = c - pot[node];
                    stack.push(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    fn entering(&self, cost: &CostMatrix, u: &[f64], v: &[f64], bland: bool) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for i in 0..self.m {
            for j in 0..self.n {
                if self.basic[i * self.n + j] {
                    continue;
                }
                let reduced = cost.get(i, j) - u[i] - v[j];
                if reduced < -REDUCED_COST_TOL {
                    if bland {
                        return Some((i, j));
                    }
                    if best.is_none_or(|(_, r)| reduced < r) {
                        best = Some(((i, j), reduced));
                    }
                }
            }
        }
        best.map(|(cell, _)| cell)
    }

    /// Brings `(ei, ej)` into the basis; returns the step length moved.
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        let cycle = self.cycle(ei, ej);
        // cycle[0] is the entering cell (+); signs alternate from there.
        let mut leave: Option<(usize, f64)> = None;
        for (k, &(i, j)) in cycle.iter().enumerate().skip(1).step_by(2) {
            let x = self.flow.get(i, j);
            let better = match leave {
                None => true,
                Some((lk, lx)) => x < lx || (x == lx && i * self.n + j < cycle[lk].0 * self.n + cycle[lk].1),
            };
            if better {
                leave = Some((k, x));
            }
        }
        let (leave_k, theta) = leave.expect("a basis cycle has at least one donor cell");
        for (k, &(i, j)) in cycle.iter().enumerate() {
            let x = self.flow.get(i, j);
            let updated = if k == leave_k {
                0.0
            } else if k % 2 == 0 {
                x + theta
            } else {
                (x - theta).max(0.0)
            };
            self.flow.set(i, j, updated);
        }
        let (li, lj) = cycle[leave_k];
        self.basic[li * self.n + lj] = false;
        self.basic[ei * self.n + ej] = true;
        theta
    }

    /// Cells of the unique cycle formed by adding `(ei, ej)` to the tree.
    fn cycle(&self, ei: usize, ej: usize) -> Vec<(usize, usize)> {
        let adj = self.adjacency();
        let (start, goal) = (self.m + ej, ei);
        let mut parent = vec![usize::MAX; self.m + self.n];
        parent[start] = start;
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if node == goal {
                break;
            }
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    stack.push(next);
                }
            }
        }
        // Walk goal -> start, then emit cells from the column end.
        let mut nodes = vec![goal];
        let mut node = goal;
        while node != start {
            node = parent[node];
            nodes.push(node);
        }
        nodes.reverse();
        let mut cells = vec![(ei, ej)];
        for pair in nodes.windows(2) {
            let (p, q) = (pair[0], pair[1]);
            cells.push(if p < self.m { (p, q - self.m) } else { (q, p - self.m) });
        }
        cells
    }
}
