mod common;

use gpc_ipm::oracle::solve_oracle;
use gpc_ipm::qp::{complementarity_measure, in_neighborhood, kkt_residuals};
use gpc_ipm::{IterPoint, QpProblem};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #[test]
    fn complementarity_ignores_constraint_order(
        pairs in proptest::collection::vec((1e-6f64..100.0, 1e-6f64..100.0), 1..30),
        seed in any::<u64>(),
    ) {
        let (y, l): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let z = IterPoint::from_slices(&[0.0], &y, &l).unwrap();

        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(&mut common::rng(seed));
        let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let lp: Vec<f64> = order.iter().map(|&i| l[i]).collect();
        let zp = IterPoint::from_slices(&[0.0], &yp, &lp).unwrap();

        let a = complementarity_measure(&z).unwrap();
        let b = complementarity_measure(&zp).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn zero_gamma_neighborhood_holds_for_positive_points(
        pairs in proptest::collection::vec((1e-12f64..1e6, 1e-12f64..1e6), 1..30),
    ) {
        let (y, l): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let z = IterPoint::from_slices(&[1.0, -1.0], &y, &l).unwrap();
        prop_assert!(in_neighborhood(&z, 0.0, 0.0));
    }
}

#[test]
fn oracle_optima_satisfy_kkt_conditions() {
    let mut rng = common::rng(21);
    for _ in 0..200 {
        let p = common::random_qp(&mut rng, 8, 12);
        let sol = solve_oracle(&p).unwrap();
        let z = IterPoint::new(sol.x.clone(), p.a() * &sol.x - p.b(), sol.lambda.clone()).unwrap();
        let r = kkt_residuals(&p, &z).unwrap();
        assert!(r.dual.amax() <= 1e-9, "dual residual {:e}", r.dual.amax());
        assert!(r.primal.amax() <= 1e-9, "primal residual {:e}", r.primal.amax());
        assert!(r.comp.amax() <= 1e-9, "complementarity {:e}", r.comp.amax());
        for (i, &li) in sol.lambda.iter().enumerate() {
            if !sol.active_set.contains(&i) {
                assert_eq!(li, 0.0);
            }
            assert!(li >= -1e-10);
        }
    }
}

#[test]
fn json_round_trip_preserves_problem() {
    let mut rng = common::rng(22);
    for _ in 0..20 {
        let p = common::random_qp(&mut rng, 5, 7);
        let q = QpProblem::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(p.g(), q.g());
        assert_eq!(p.a(), q.a());
        assert_eq!(p.b(), q.b());
        assert_eq!(p.c(), q.c());
    }
}

#[test]
fn malformed_problem_files_name_the_problem() {
    let err = QpProblem::from_json_str("{\"n\": 1,\n \"m\": 1,\n \"G\": [1], \"c\": [0], \"A\": [1, 2], \"b\": [0]}")
        .unwrap_err()
        .to_string();
    assert!(err.contains("`A`"), "{err}");

    let err = QpProblem::from_json_str("{\"n\": 1,\n \"m\": 1,\n \"G\": oops}")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 3"), "{err}");

    let not_psd = r#"{"n":1,"m":1,"G":[-1],"c":[0],"A":[1],"b":[0]}"#;
    assert!(QpProblem::from_json_str(not_psd).is_err());
    let _ = DVector::<f64>::zeros(1);
}
