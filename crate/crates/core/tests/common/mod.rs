//! Shared fixtures and brute-force reference solvers for the integration tests.
#![allow(dead_code)]

use speechsim::rng::SynthRng;
use speechsim::EmbeddingSequence;

/// Random sequence of `t` unit frames in dimension `d`.
pub fn unit_sequence(rng: &mut SynthRng, id: &str, t: usize, d: usize) -> EmbeddingSequence {
    let frames: Vec<f32> = (0..t * d).map(|_| rng.normal() as f32).collect();
    EmbeddingSequence::new(id, "x", d, frames)
        .unwrap()
        .normalize_rows()
        .unwrap()
}

pub fn random_cost(rng: &mut SynthRng, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..n).map(|_| 2.0 * rng.uniform()).collect()).collect()
}

/// Minimum over every monotone path from the first to the last cell using
/// unit down / right / diagonal steps. Costs are summed from the start so the
/// floating-point result is comparable exactly with a forward recurrence.
pub fn brute_force_dtw(cost: &[Vec<f64>]) -> f64 {
    fn walk(cost: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let (m, n) = (cost.len(), cost[0].len());
        if i == m - 1 && j == n - 1 {
            *best = best.min(acc);
            return;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let (a, b) = (i + di, j + dj);
            if a < m && b < n {
                walk(cost, a, b, acc + cost[a][b], best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(cost, 0, 0, cost[0][0], &mut best);
    best
}

/// Number of monotone paths through an `m x n` grid (Delannoy number).
pub fn path_count(m: usize, n: usize) -> u64 {
    let mut t = vec![vec![0u64; n]; m];
    for i in 0..m {
        for j in 0..n {
            t[i][j] = if i == 0 || j == 0 {
                1
            } else {
                t[i - 1][j] + t[i][j - 1] + t[i - 1][j - 1]
            };
        }
    }
    t[m - 1][n - 1]
}

/// Exact transport cost by enumerating every basic feasible solution.
///
/// Each basis of the `m x n` transportation polytope is a spanning tree of
/// the bipartite row/column graph with `m + n - 1` cells. For every such tree
/// the flows are forced (peel leaves), and the cheapest non-negative one is
/// the optimum. Exponential, so keep `m * n` small.
pub fn vertex_enumeration_ot(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn combos(
        cells: &[(usize, usize)],
        start: usize,
        k: usize,
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for idx in start..cells.len() {
            if cells.len() - idx < k - chosen.len() {
                break;
            }
            chosen.push(cells[idx]);
            combos(cells, idx + 1, k, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |basis: &[(usize, usize)]| {
        if let Some(flows) = tree_flows(basis, a, b) {
            if flows.iter().all(|&f| f >= -1e-12) {
                let c: f64 = basis.iter().zip(&flows).map(|(&(i, j), f)| f * cost[i][j]).sum();
                best = best.min(c);
            }
        }
    };
    combos(&cells, 0, k, &mut chosen, &mut visit);
    best
}

/// Flows on a candidate basis, or `None` if the cells do not form a spanning tree.
fn tree_flows(basis: &[(usize, usize)], a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (a.len(), b.len());
    // nodes 0..m are rows, m..m+n columns
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &(i, j) in basis {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
        if ri == rj {
            return None;
        }
        parent[ri] = rj;
    }
    let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut degree = vec![0usize; m + n];
    for &(i, j) in basis {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut flows = vec![f64::NAN; basis.len()];
    let mut open = basis.len();
    while open > 0 {
        let (e, leaf) = basis
            .iter()
            .enumerate()
            .filter(|(e, _)| flows[*e].is_nan())
            .find_map(|(e, &(i, j))| {
                if degree[i] == 1 {
                    Some((e, i))
                } else if degree[m + j] == 1 {
                    Some((e, m + j))
                } else {
                    None
                }
            })?;
        let (i, j) = basis[e];
        let other = if leaf == i { m + j } else { i };
        let f = supply[leaf];
        flows[e] = f;
        supply[other] -= f;
        degree[i] -= 1;
        degree[m + j] -= 1;
        open -= 1;
    }
    Some(flows)
}

pub fn to_rows(cost: &speechsim::CostMatrix) -> Vec<Vec<f64>> {
    (0..cost.rows()).map(|i| cost.matrix().row(i).to_vec()).collect()
}
