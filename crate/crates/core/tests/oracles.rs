mod common;

use common::{brute_force_dtw, path_count, random_cost, vertex_enumeration_ot};
use speechsim::align::{dtw, dtw_cost, ot_exact, sinkhorn, uniform_marginal};
use speechsim::rng::SynthRng;
use speechsim::CostMatrix;

#[test]
fn path_counts_match_known_values() {
    assert_eq!(path_count(2, 2), 3);
    assert_eq!(path_count(3, 3), 13);
    assert_eq!(path_count(5, 5), 321);
}

#[test]
fn dtw_dp_equals_path_enumeration() {
    let mut rng = SynthRng::new(11);
    let mut checked = 0;
    for m in 1..=5 {
        for n in 1..=5 {
            for _ in 0..6 {
                let rows = random_cost(&mut rng, m, n);
                let c = CostMatrix::from_rows(&rows).unwrap();
                let expected = brute_force_dtw(&rows);
                assert_eq!(dtw_cost(&c), expected, "{m}x{n}");
                let path = dtw(&c);
                assert_eq!(path.cost, expected);
                let along: f64 = path.steps.iter().map(|&(i, j)| rows[i - 1][j - 1]).sum();
                assert!((along - expected).abs() < 1e-12);
                checked += 1;
            }
        }
    }
    assert!(checked >= 100);
}

#[test]
fn dtw_path_is_monotone_and_spans_the_grid() {
    let mut rng = SynthRng::new(12);
    for _ in 0..50 {
        let (m, n) = (rng.range_inclusive(1, 9), rng.range_inclusive(1, 9));
        let c = CostMatrix::from_rows(&random_cost(&mut rng, m, n)).unwrap();
        let p = dtw(&c);
        assert_eq!(p.steps.first(), Some(&(1, 1)));
        assert_eq!(p.steps.last(), Some(&(m, n)));
        for w in p.steps.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)), "{:?}", w);
        }
    }
}

#[test]
fn exact_ot_matches_vertex_enumeration() {
    let mut rng = SynthRng::new(21);
    for m in 1..=4 {
        for n in 1..=4 {
            for trial in 0..4 {
                let rows = random_cost(&mut rng, m, n);
                let c = CostMatrix::from_rows(&rows).unwrap();
                // alternate uniform and random marginals
                let (a, b) = if trial % 2 == 0 {
                    (uniform_marginal(m), uniform_marginal(n))
                } else {
                    (random_simplex(&mut rng, m), random_simplex(&mut rng, n))
                };
                let plan = ot_exact(&c, &a, &b).unwrap();
                let oracle = vertex_enumeration_ot(&rows, &a, &b);
                assert!((plan.cost - oracle).abs() < 1e-12, "{m}x{n}: {} vs {oracle}", plan.cost);
                assert!(plan.marginal_violation < 1e-12);
                assert!(plan.plan.as_slice().iter().all(|&p| p >= 0.0));
            }
        }
    }
}

fn random_simplex(rng: &mut SynthRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.1 + rng.uniform()).collect();
    let s: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
    // make the sum exactly representable as 1 within the solver tolerance
    let rest: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - rest;
    p
}

#[test]
fn sinkhorn_approaches_exact_cost_at_small_epsilon() {
    let mut rng = SynthRng::new(31);
    let rows = random_cost(&mut rng, 5, 7);
    let c = CostMatrix::from_rows(&rows).unwrap();
    let (a, b) = (uniform_marginal(5), uniform_marginal(7));
    let exact = ot_exact(&c, &a, &b).unwrap().cost;
    let s = sinkhorn(&c, &a, &b, 0.005, 200_000, 1e-9).unwrap();
    assert!((s.cost - exact).abs() <= 1e-3, "{} vs {exact}", s.cost);
    assert!(s.cost >= exact - 1e-9);
    assert!(s.marginal_violation <= 1e-9);
}

#[test]
fn exact_ot_reorder_case_is_free() {
    // cost of matching the swapped pair: zero on the anti-diagonal
    let c = CostMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let u = uniform_marginal(2);
    assert_eq!(ot_exact(&c, &u, &u).unwrap().cost, 0.0);
    assert_eq!(dtw_cost(&c), 2.0);
}
