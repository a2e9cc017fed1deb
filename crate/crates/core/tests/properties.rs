use proptest::prelude::*;

use rpn::data::{kfold, ColumnStats};
use rpn::distributions::{kl_mvn, kl_nw, posterior_predictive, NormalParams, NormalWishartParams};
use rpn::eval::{auc_roc, prr, rejection_curve};
use rpn::linalg::{Matrix, SymPD};
use rpn::uncertainty::{
    ensemble_variance, epkl, expected_data_entropy, mutual_information, predictive_entropy, variance_decomposition,
};

fn spd(k: usize) -> impl Strategy<Value = SymPD> {
    (prop::collection::vec(-2.0f64..2.0, k * k), 0.1f64..2.0).prop_map(move |(a, ridge)| {
        let a = Matrix::from_vec(k, k, a).unwrap();
        let mut s = a.matmul(&a.transpose()).unwrap();
        for i in 0..k {
            s[(i, i)] += ridge;
        }
        rpn::linalg::cholesky(&s).unwrap()
    })
}

fn omega() -> impl Strategy<Value = NormalWishartParams> {
    (1usize..4).prop_flat_map(|k| {
        (
            prop::collection::vec(-5.0f64..5.0, k),
            spd(k),
            -4.0f64..4.0,
            0.01f64..40.0,
        )
            .prop_map(move |(m, l, lk, extra)| {
                NormalWishartParams::new(m, l, lk.exp(), k as f64 + 1.0 + extra).unwrap()
            })
    })
}

fn normal(k: usize) -> impl Strategy<Value = NormalParams> {
    (prop::collection::vec(-3.0f64..3.0, k), spd(k)).prop_map(|(m, l)| NormalParams::new(m, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn entropy_and_variance_decompose(o in omega()) {
        let total = predictive_entropy(&o).unwrap();
        let parts = expected_data_entropy(&o).unwrap() + mutual_information(&o).unwrap();
        prop_assert!((total - parts).abs() <= 1e-10 * (1.0 + total.abs()));
        let v = variance_decomposition(&o).unwrap();
        let sum = v.data.add(&v.knowledge).unwrap();
        prop_assert!(v.total.sub(&sum).unwrap().max_abs() <= 1e-10 * (1.0 + v.total.max_abs()));
    }

    #[test]
    fn knowledge_measures_are_ordered(o in omega()) {
        let mi = mutual_information(&o).unwrap();
        prop_assert!(mi > 0.0);
        prop_assert!(epkl(&o).unwrap() >= mi);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(p in omega(), seed in 0u64..1000) {
        prop_assert!(kl_nw(&p, &p).unwrap().abs() < 1e-9);
        let k = p.dim();
        let shifted: Vec<f64> = p.m.iter().enumerate().map(|(i, v)| v + ((seed + i as u64) % 7) as f64 * 0.3).collect();
        let q = NormalWishartParams::new(shifted, p.l.scale(1.5).unwrap(), p.kappa * 2.0, p.nu + k as f64).unwrap();
        prop_assert!(kl_nw(&p, &q).unwrap() >= 0.0);
    }

    #[test]
    fn gaussian_kl_nonnegative(p in normal(2), q in normal(2)) {
        prop_assert!(kl_mvn(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl_mvn(&p, &p).unwrap().abs() < 1e-10);
    }

    #[test]
    fn predictive_covariance_matches_total_variance(o in omega()) {
        prop_assume!(o.nu > o.dim() as f64 + 1.5);
        let t = posterior_predictive(&o).unwrap();
        let cov = t.covariance().unwrap().to_matrix();
        let v = variance_decomposition(&o).unwrap();
        prop_assert!(cov.sub(&v.total).unwrap().max_abs() <= 1e-8 * (1.0 + cov.max_abs()));
    }

    #[test]
    fn ensemble_variance_splits(members in prop::collection::vec(normal(2), 2..8)) {
        let v = ensemble_variance(&members).unwrap();
        let sum = v.data.add(&v.knowledge).unwrap();
        prop_assert!(v.total.sub(&sum).unwrap().max_abs() < 1e-10);
        for i in 0..2 {
            prop_assert!(v.knowledge[(i, i)] >= -1e-12);
        }
    }

    #[test]
    fn prr_is_bounded_by_the_oracle(errors in prop::collection::vec(0.0f64..10.0, 2..200), seed in any::<u64>()) {
        prop_assume!(errors.iter().any(|e| (e - errors[0]).abs() > 1e-6));
        let scores: Vec<f64> = (0..errors.len()).map(|i| ((i as u64).wrapping_mul(seed | 1) % 9973) as f64).collect();
        let value = prr(&rejection_curve(&errors, &scores).unwrap()).unwrap();
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&value));
        prop_assert!((prr(&rejection_curve(&errors, &errors).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_is_antisymmetric(a in prop::collection::vec(-5.0f64..5.0, 1..60), b in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let ab = auc_roc(&a, &b).unwrap();
        let ba = auc_roc(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab + ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kfold_partitions_indices(n in 10usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold(n, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        for (train, test) in &folds {
            prop_assert_eq!(train.len() + test.len(), n);
            for &i in test {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn standardization_round_trips(vals in prop::collection::vec(-100.0f64..100.0, 12)) {
        let m = Matrix::from_vec(6, 2, vals).unwrap();
        prop_assume!((0..2).all(|j| { let c = m.column(j); c.iter().any(|v| (v - c[0]).abs() > 1e-3) }));
        let stats = ColumnStats::from_matrix(&m).unwrap();
        let back = stats.invert(&stats.apply(&m).unwrap()).unwrap();
        prop_assert!(back.sub(&m).unwrap().max_abs() < 1e-9);
    }
}
