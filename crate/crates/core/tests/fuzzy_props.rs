mod common;

use common::{random_box, random_grid, rng};
use fuzzy_lyapunov::fuzzy::{FuzzyBox, FuzzyError, LevelGrid, NEST_TOL};
use proptest::prelude::*;

fn nested(u: &FuzzyBox) -> bool {
    u.cuts().windows(2).all(|w| {
        (0..u.dim()).all(|i| w[0].lo()[i] <= w[1].lo()[i] + NEST_TOL && w[1].hi()[i] <= w[0].hi()[i] + NEST_TOL)
    })
}

fn triple(seed: u64) -> (FuzzyBox, FuzzyBox, FuzzyBox) {
    let mut r = rng(seed);
    let grid = random_grid(&mut r);
    let dim = 1 + (seed % 3) as usize;
    (
        random_box(&mut r, &grid, dim, 5.0),
        random_box(&mut r, &grid, dim, 5.0),
        random_box(&mut r, &grid, dim, 5.0),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn triangle_inequality(seed in any::<u64>()) {
        let (u, v, w) = triple(seed);
        let lhs = u.sup_metric(&w).unwrap();
        let rhs = u.sup_metric(&v).unwrap() + v.sup_metric(&w).unwrap();
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), lambda in -10.0f64..10.0) {
        let (u, v, _) = triple(seed);
        let lhs = u.scale(lambda).sup_metric(&v.scale(lambda)).unwrap();
        let rhs = lambda.abs() * u.sup_metric(&v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn translation_invariance(seed in any::<u64>()) {
        let (u, v, w) = triple(seed);
        let lhs = u.add(&w).unwrap().sup_metric(&v.add(&w).unwrap()).unwrap();
        prop_assert!((lhs - u.sup_metric(&v).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn h_difference_round_trip(seed in any::<u64>()) {
        let (y, z, u) = triple(seed);
        let x = y.add(&z).unwrap();
        let back = x.h_difference(&y).unwrap();
        prop_assert!(back.sup_metric(&z).unwrap() <= 1e-12);
        // whenever a difference exists it satisfies x = y + z
        if let Ok(d) = u.h_difference(&y) {
            prop_assert!(y.add(&d).unwrap().sup_metric(&u).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn operations_preserve_nesting(seed in any::<u64>(), lambda in -10.0f64..10.0) {
        let (u, v, _) = triple(seed);
        prop_assert!(nested(&u.add(&v).unwrap()));
        prop_assert!(nested(&u.scale(lambda)));
        prop_assert!(nested(&u.add(&v).unwrap().h_difference(&u).unwrap()));
    }

    #[test]
    fn metric_is_symmetric_and_zero_on_diagonal(seed in any::<u64>()) {
        let (u, v, _) = triple(seed);
        prop_assert_eq!(u.sup_metric(&v).unwrap(), v.sup_metric(&u).unwrap());
        prop_assert_eq!(u.sup_metric(&u).unwrap(), 0.0);
    }

    #[test]
    fn wider_subtrahend_has_no_difference(seed in any::<u64>()) {
        let mut r = rng(seed);
        let grid = LevelGrid::default();
        let y = random_box(&mut r, &grid, 1, 3.0);
        prop_assume!(!y.is_crisp());
        let x = FuzzyBox::crisp(grid, vec![1.0]).unwrap();
        let no_difference = matches!(x.h_difference(&y), Err(FuzzyError::NoHDifference { .. }));
        prop_assert!(no_difference);
    }
}

#[test]
fn json_round_trip() {
    let (u, _, _) = triple(3);
    let text = serde_json::to_string(&u).unwrap();
    let back: FuzzyBox = serde_json::from_str(&text).unwrap();
    assert_eq!(back, u);
}
