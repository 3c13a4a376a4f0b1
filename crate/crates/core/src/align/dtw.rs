use super::CostMatrix;

/// Monotone alignment from `(1, 1)` to `(m, n)`, 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    pub steps: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimal-cost warping path under steps {(1,0), (0,1), (1,1)}.
///
/// Ties between predecessors resolve diagonal first, then vertical
/// (`i - 1`), then horizontal (`j - 1`), so the path is reproducible.
pub fn dtw(cost: &CostMatrix) -> WarpPath {
    let (m, n) = (cost.rows(), cost.cols());
    let mut acc = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            let c = cost.get(i, j);
            acc[i * n + j] = match (i, j) {
                (0, 0) => c,
                (0, _) => c + acc[j - 1],
                (_, 0) => c + acc[(i - 1) * n],
                _ => {
                    let (_, best) = best_predecessor(
                        acc[(i - 1) * n + j - 1],
                        acc[(i - 1) * n + j],
                        acc[i * n + j - 1],
                    );
                    c + best
                }
            };
        }
    }

    let mut steps = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (m - 1, n - 1);
    steps.push((m, n));
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let (step, _) = best_predecessor(
                acc[(i - 1) * n + j - 1],
                acc[(i - 1) * n + j],
                acc[i * n + j - 1],
            );
            match step {
                Step::Diagonal => (i - 1, j - 1),
                Step::Vertical => (i - 1, j),
                Step::Horizontal => (i, j - 1),
            }
        };
        steps.push((i + 1, j + 1));
    }
    steps.reverse();
    WarpPath {
        steps,
        cost: acc[m * n - 1],
    }
}

/// Optimal path cost only, in `O(n)` memory. Same recurrence (and therefore
/// the same floating-point result) as [`dtw`].
pub fn dtw_cost(cost: &CostMatrix) -> f64 {
    let (m, n) = (cost.rows(), cost.cols());
    let mut prev = vec![0.0f64; n];
    let mut cur = vec![0.0f64; n];
    for i in 0..m {
        for j in 0..n {
            let c = cost.get(i, j);
            cur[j] = match (i, j) {
                (0, 0) => c,
                (0, _) => c + cur[j - 1],
                (_, 0) => c + prev[0],
                _ => c + best_predecessor(prev[j - 1], prev[j], cur[j - 1]).1,
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Diagonal,
    Vertical,
    Horizontal,
}

#[inline]
fn best_predecessor(diag: f64, up: f64, left: f64) -> (Step, f64) {
    let mut best = (Step::Diagonal, diag);
    if up < best.1 {
        best = (Step::Vertical, up);
    }
    if left < best.1 {
        best = (Step::Horizontal, left);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn cm(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn zero_diagonal() {
        let p = dtw(&cm(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_eq!(p.steps, vec![(1, 1), (2, 2)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn single_cell() {
        let p = dtw(&cm(&[&[0.7]]));
        assert_eq!(p.steps, vec![(1, 1)]);
        assert_eq!(p.cost, 0.7);
    }

    #[test]
    fn ties_prefer_diagonal() {
        let p = dtw(&CostMatrix::new(Matrix::zeros(3, 3)).unwrap());
        assert_eq!(p.steps, vec![(1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn ties_prefer_vertical_over_horizontal() {
        // At (3,3) the up and left predecessors tie at 0, the diagonal costs 2.
        let c = cm(&[&[0.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 0.0]]);
        let p = dtw(&c);
        assert_eq!(p.steps, vec![(1, 1), (1, 2), (2, 3), (3, 3)]);
        let c = cm(&[&[0.0, 0.0, 2.0], &[2.0, 0.0, 0.0]]);
        let p = dtw(&c);
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.steps, vec![(1, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn rectangular_path_is_monotone() {
        let c = CostMatrix::new(Matrix::from_fn(4, 7, |i, j| ((i * 3 + j * 5) % 7) as f64 / 4.0)).unwrap();
        let p = dtw(&c);
        assert_eq!(p.steps.first(), Some(&(1, 1)));
        assert_eq!(p.steps.last(), Some(&(4, 7)));
        for w in p.steps.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
        }
        let along: f64 = p.steps.iter().map(|&(i, j)| c.get(i - 1, j - 1)).sum();
        assert!((along - p.cost).abs() < 1e-12);
        assert_eq!(dtw_cost(&c), p.cost);
    }
}
