mod common;

use common::{ivp_matrix, matrix_states, MATRIX_COEFFS};
use fuzzy_lyapunov::expr::parse;
use fuzzy_lyapunov::fuzzy::{FuzzyBox, LevelGrid};
use fuzzy_lyapunov::ivp::{solve, FuzzyIvp, Rhs, Trajectory};
use proptest::prelude::*;

fn check_structure(name: &str, tr: &Trajectory) {
    let mut prev: Option<FuzzyBox> = None;
    for x in tr.states() {
        for w in x.cuts().windows(2) {
            for i in 0..x.dim() {
                assert!(w[0].lo()[i] <= w[1].lo()[i] + 1e-10, "{name}: nesting lo");
                assert!(w[1].hi()[i] <= w[0].hi()[i] + 1e-10, "{name}: nesting hi");
            }
        }
        if let Some(p) = &prev {
            for j in 0..x.levels() {
                let (d0, d1) = (p.diameter(j).unwrap(), x.diameter(j).unwrap());
                for (a, b) in d0.iter().zip(&d1) {
                    assert!(b + 1e-10 >= *a, "{name}: diameter shrinks at level {j}: {a} -> {b}");
                }
            }
        }
        prev = Some(x);
    }
}

#[test]
fn matrix_nesting_and_diameter_monotonicity() {
    for (name, ivp) in ivp_matrix() {
        check_structure(&name, &solve(&ivp).unwrap());
    }
}

#[test]
fn trivial_solution_is_exact() {
    for a in MATRIX_COEFFS {
        let zero = FuzzyBox::zero(LevelGrid::default(), 2);
        let tr = solve(&FuzzyIvp::new(0.0, zero.clone(), Rhs::linear(parse(a).unwrap()), 5.0, 0.05, 1.0).unwrap()).unwrap();
        assert!(tr.states().all(|x| x == zero), "a = {a}");
        assert!(tr.distances().iter().all(|d| *d == 0.0));
    }
}

#[test]
fn crisp_reduction_matches_point_dynamics() {
    // x' = a(t)·x has x(t) = x0·exp(∫ a)
    let cases: [(&str, fn(f64) -> f64); 3] = [
        ("-1", |t| -t),
        ("1/(1+t^2)", |t| t.atan()),
        ("sin(t)", |t| 1.0 - t.cos()),
    ];
    for (a, integral) in cases {
        let x0 = FuzzyBox::crisp(LevelGrid::default(), vec![1.5]).unwrap();
        let tr = solve(&FuzzyIvp::new(0.0, x0, Rhs::linear(parse(a).unwrap()), 10.0, 0.01, 100.0).unwrap()).unwrap();
        for (k, &t) in tr.times().iter().enumerate() {
            let x = tr.state(k);
            assert!(x.is_crisp());
            assert!((x.cuts()[0].lo()[0] - 1.5 * integral(t).exp()).abs() < 1e-6, "a = {a}, t = {t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_starts_keep_structure(t0 in 0.0f64..3.0, k in 0usize..5, a in 0usize..6) {
        let x0 = matrix_states().swap_remove(k);
        let ivp = FuzzyIvp::new(t0, x0, Rhs::linear(parse(MATRIX_COEFFS[a]).unwrap()), t0 + 3.0, 0.02, 1e3).unwrap();
        check_structure("random start", &solve(&ivp).unwrap());
    }

    #[test]
    fn solve_is_deterministic(k in 0usize..5, a in 0usize..6) {
        let x0 = matrix_states().swap_remove(k);
        let ivp = FuzzyIvp::new(0.0, x0, Rhs::linear(parse(MATRIX_COEFFS[a]).unwrap()), 2.0, 0.05, 1e3).unwrap();
        prop_assert_eq!(solve(&ivp).unwrap().to_csv(), solve(&ivp).unwrap().to_csv());
    }
}
