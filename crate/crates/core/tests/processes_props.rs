use concentra::constants::spectral_radius;
use concentra::processes::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn models() -> Vec<MarkovModel> {
    vec![
        MarkovModel::gaussian_kernel(0.7, 0.5, 1.0),
        MarkovModel::Ou { rho: 1.0, tau: 0.5, x0: -0.5 },
        MarkovModel::Arma {
            a: vec![vec![0.5, 0.2], vec![-0.1, 0.3]],
            b: vec![vec![1.0, 0.0], vec![0.4, 0.8]],
        },
        MarkovModel::Tabular(
            TabularChain::new(
                vec!["-1".into(), "0".into(), "2".into()],
                vec![0.2, 0.5, 0.3],
                vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.2, 0.6], vec![0.3, 0.3, 0.4]],
            )
            .unwrap(),
        ),
    ]
}

#[test]
fn simulation_does_not_depend_on_the_worker_count() {
    for model in models() {
        let one = in_pool(1, || simulate_joint(&model, 7, 500, 42).unwrap());
        let four = in_pool(4, || simulate_joint(&model, 7, 500, 42).unwrap());
        assert_eq!(one, four);
        let other = simulate_joint(&model, 7, 500, 43).unwrap();
        assert_ne!(one.values, other.values);
    }
}

#[test]
fn a_prefix_of_paths_is_stable_under_more_paths() {
    let model = MarkovModel::gaussian_kernel(0.9, 1.0, 0.0);
    let few = simulate_joint(&model, 5, 10, 3).unwrap();
    let many = simulate_joint(&model, 5, 100, 3).unwrap();
    for i in 0..10 {
        assert_eq!(few.path(i), many.path(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gaussian_kernel_lipschitz_is_theta(theta in -2.0f64..2.0, sigma2 in 0.1f64..3.0, s in 1.0f64..=2.0) {
        let model = MarkovModel::gaussian_kernel(theta, sigma2, 0.0);
        let pairs = [(0.0, 1.0), (-3.0, 2.5), (0.1, 0.2)];
        let l = kernel_lipschitz_estimate(&model, &pairs, s).unwrap();
        prop_assert!((l - theta.abs()).abs() <= 1e-9 * theta.abs().max(1.0), "{} vs {}", l, theta);
    }

    #[test]
    fn three_dependence_coefficients_agree(theta in -1.5f64..1.5, sigma2 in 0.2f64..3.0) {
        prop_assume!(theta.abs() > 1e-3);
        let model = MarkovModel::gaussian_kernel(theta, sigma2, 0.0);
        let probes: Vec<Vec<f64>> = [-1.0, 0.0, 2.0].iter().map(|x| vec![*x]).collect();
        let xs = [-1.0, 0.0, 2.0];
        let grid = [-1.0, -0.5, 0.5, 1.0];

        let m2 = ms_estimate(None, &model, 2.0, &probes).unwrap().value;
        let kappa = lambda_mgf_estimate(None, &model, &grid, &xs).unwrap().kappa_hat;
        prop_assert!(((m2 * sigma2).sqrt() - theta.abs()).abs() <= 1e-9);
        prop_assert!(((kappa * sigma2).sqrt() - theta.abs()).abs() <= 1e-9);

        // the same potential written out by hand goes through quadrature
        let grad = move |h: &[f64], y: f64| vec![-theta * (y - theta * h[h.len() - 1]) / sigma2];
        let m2q = ms_estimate(Some(&grad), &model, 2.0, &probes).unwrap().value;
        let dudx = move |x: f64, y: f64| -theta * (y - theta * x) / sigma2;
        let kq = lambda_mgf_estimate(Some(&dudx), &model, &grid, &xs).unwrap().kappa_hat;
        prop_assert!(((m2q * sigma2).sqrt() - theta.abs()).abs() <= 1e-9);
        prop_assert!(((kq * sigma2).sqrt() - theta.abs()).abs() <= 1e-9);
    }

    #[test]
    fn arma_covariance_is_psd(entries in prop::collection::vec(-1.0f64..1.0, 8), radius in 0.1f64..0.95, n in 1usize..8) {
        let raw = DMatrix::from_row_slice(2, 2, &entries[..4]);
        let r = spectral_radius(&raw);
        prop_assume!(r > 1e-6);
        let a = raw * (radius / r);
        let b = DMatrix::from_row_slice(2, 2, &entries[4..]);
        let cov = arma_joint_covariance(&a, &b, n).unwrap();
        prop_assert!((&cov - cov.transpose()).amax() <= 1e-12);
        prop_assert!(covariance_min_eigenvalue(&cov) >= -1e-10 * cov.amax().max(1.0));
    }
}
