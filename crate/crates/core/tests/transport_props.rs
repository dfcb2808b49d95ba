use concentra::measure::{empirical_measure, product_distance, total_variation, DiscreteMeasure, FiniteMetricSpace, RealLine};
use concentra::transport::{kantorovich_dual_w1, monotone_coupling, wasserstein_1d, wasserstein_exact};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weights(raw: &[f64]) -> Vec<f64> {
    let t: f64 = raw.iter().sum();
    raw.iter().map(|x| x / t).collect()
}

/// Shortest-path closure of arbitrary positive edge weights.
fn metric_from_edges(m: usize, edges: &[f64]) -> FiniteMetricSpace {
    let mut d = vec![vec![0.0; m]; m];
    let mut e = edges.iter().cycle();
    for i in 0..m {
        for j in 0..i {
            let w = *e.next().unwrap();
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    FiniteMetricSpace::from_matrix(d).unwrap()
}

fn finite_instance() -> impl Strategy<Value = (FiniteMetricSpace, DiscreteMeasure<usize>, DiscreteMeasure<usize>)> {
    (2usize..=8).prop_flat_map(|m| {
        (
            prop::collection::vec(0.1f64..3.0, m * (m - 1) / 2),
            prop::collection::vec(0.01f64..1.0, m),
            prop::collection::vec(0.01f64..1.0, m),
        )
            .prop_map(move |(edges, a, b)| {
                let space = metric_from_edges(m, &edges);
                let pts: Vec<usize> = (0..m).collect();
                (
                    space,
                    DiscreteMeasure::new(pts.clone(), weights(&a)).unwrap(),
                    DiscreteMeasure::new(pts, weights(&b)).unwrap(),
                )
            })
    })
}

fn real_measure() -> impl Strategy<Value = DiscreteMeasure<f64>> {
    prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..12).prop_map(|atoms| {
        let (x, w): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        DiscreteMeasure::from_masses(x, w).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn strong_duality((space, mu, nu) in finite_instance()) {
        let (w, plan) = wasserstein_exact(&space, &mu, &nu, 1.0).unwrap();
        plan.check(&space).unwrap();
        let dual = kantorovich_dual_w1(&space, &mu, &nu).unwrap();
        prop_assert!((w - dual.value).abs() <= 1e-9, "primal {} dual {}", w, dual.value);
        prop_assert!(dual.lipschitz_violation(&space) <= 1e-9);
    }

    #[test]
    fn wasserstein_is_monotone_in_order((space, mu, nu) in finite_instance()) {
        let orders = [1.0, 1.25, 1.5, 1.75, 2.0];
        let w: Vec<f64> = orders.iter().map(|s| wasserstein_exact(&space, &mu, &nu, *s).unwrap().0).collect();
        for k in 1..w.len() {
            prop_assert!(w[k - 1] <= w[k] + 1e-10, "{:?}", w);
        }
    }

    #[test]
    fn quantile_formula_matches_lp(mu in real_measure(), nu in real_measure(), s in 1.0f64..=2.0) {
        let (w, plan) = wasserstein_exact(&RealLine, &mu, &nu, s).unwrap();
        plan.check(&RealLine).unwrap();
        let q = wasserstein_1d(&mu, &nu, s).unwrap();
        prop_assert!((w - q).abs() <= 1e-10 * w.max(1.0), "lp {} quantile {}", w, q);
    }

    #[test]
    fn tie_rule_does_not_change_cost(xs in prop::collection::vec(-3.0f64..3.0, 2..8), s in 1.0f64..=2.0) {
        // equal weights everywhere make every step of the merge a tie
        let n = xs.len();
        let mu = DiscreteMeasure::uniform(xs.clone()).unwrap();
        let ys: Vec<f64> = xs.iter().rev().map(|x| x + 0.5).collect();
        let nu = DiscreteMeasure::uniform(ys).unwrap();
        let merged: f64 = monotone_coupling(&mu, &nu)
            .into_iter()
            .map(|(i, j, m)| m * (mu.support()[i] - nu.support()[j]).abs().powf(s))
            .sum();
        // the other tie rule: pair sorted atoms one to one
        let mut a = xs.clone();
        let mut b: Vec<f64> = nu.support().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let paired: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(s) / n as f64).sum();
        prop_assert!((merged - paired).abs() <= 1e-12);
        let (w, _) = wasserstein_exact(&RealLine, &mu, &nu, s).unwrap();
        prop_assert!((w.powf(s) - paired).abs() <= 1e-10);
    }

    #[test]
    fn product_distance_properties(
        pairs in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 1..6),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d1 = product_distance(&RealLine, &x[..1], &y[..1], 1.7).unwrap();
        prop_assert_eq!(d1, (x[0] - y[0]).abs());
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let s = 1.0 + k as f64 / 10.0;
            let d = product_distance(&RealLine, &x, &y, s).unwrap();
            prop_assert!(d <= prev + 1e-12);
            prev = d;
        }
    }
}

#[test]
fn plans_satisfy_their_invariants_on_random_instances() {
    for seed in 0..50 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = r.random_range(2..10);
        let edges: Vec<f64> = (0..m * m).map(|_| r.random_range(0.1..2.0)).collect();
        let space = metric_from_edges(m, &edges);
        let a: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
        let pts: Vec<usize> = (0..m).collect();
        let mu = DiscreteMeasure::from_masses(pts.clone(), a).unwrap();
        let nu = DiscreteMeasure::from_masses(pts, b).unwrap();
        for s in [1.0, 1.5, 2.0] {
            let (_, plan) = wasserstein_exact(&space, &mu, &nu, s).unwrap();
            plan.check(&space).unwrap();
        }
    }
}

#[test]
fn empirical_measure_converges_in_total_variation() {
    let support: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let raw: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    let mu = DiscreteMeasure::from_masses(support.clone(), raw).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cumulative: Vec<f64> = mu
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let u: f64 = rng.random();
            support[cumulative.iter().position(|c| u < *c).unwrap_or(9)]
        })
        .collect();
    let emp = empirical_measure(&draws).unwrap();
    assert!(total_variation(&emp, &mu) < 0.02);
}
