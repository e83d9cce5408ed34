use npqr::bspline::{derivative_at, eval_coeffs, invert_unchecked, BasisConfig, SplineCurve};
use proptest::prelude::*;

fn monotone_coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len - 1).prop_filter_map("all-zero increments", |g| {
        let total: f64 = g.iter().sum();
        if total <= 1e-6 {
            return None;
        }
        let mut c = Vec::with_capacity(g.len() + 1);
        let mut acc = 0.0;
        c.push(0.0);
        for v in &g {
            acc += v / total;
            c.push(acc.min(1.0));
        }
        *c.last_mut().unwrap() = 1.0;
        Some(c)
    })
}

fn basis_and_coeffs() -> impl Strategy<Value = (BasisConfig, Vec<f64>)> {
    (1usize..=3, 1usize..=10).prop_flat_map(|(m, p)| {
        let basis = BasisConfig::new(m, p).unwrap();
        monotone_coeffs(basis.len()).prop_map(move |c| (basis, c))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn basis_is_a_nonnegative_partition(m in 0usize..=3, p in 1usize..=12, u in 0.0f64..=1.0) {
        let b = BasisConfig::new(m, p).unwrap().eval(u).unwrap();
        prop_assert_eq!(b.len(), p + m);
        prop_assert!(b.iter().all(|v| *v >= 0.0));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn at_most_degree_plus_one_functions_are_active(m in 0usize..=3, p in 1usize..=12, u in 0.0f64..=1.0) {
        let b = BasisConfig::new(m, p).unwrap().eval(u).unwrap();
        prop_assert!(b.iter().filter(|v| **v != 0.0).count() <= m + 1);
    }

    #[test]
    fn monotone_coefficients_give_monotone_unit_curve((basis, c) in basis_and_coeffs(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (ylo, yhi) = (eval_coeffs(&basis, &c, lo), eval_coeffs(&basis, &c, hi));
        prop_assert!(ylo <= yhi + 1e-15);
        prop_assert!(eval_coeffs(&basis, &c, 0.0).abs() < 1e-15);
        prop_assert!((eval_coeffs(&basis, &c, 1.0) - 1.0).abs() < 1e-15);
        prop_assert!(derivative_at(&basis, &c, lo) >= -1e-12);
    }

    #[test]
    fn inversion_round_trips((basis, c) in basis_and_coeffs(), y in 0.0f64..=1.0) {
        let u = invert_unchecked(&basis, &c, y);
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert!((eval_coeffs(&basis, &c, u) - y).abs() < 1e-10);
    }

    #[test]
    fn checked_curve_agrees_with_free_functions((basis, c) in basis_and_coeffs(), u in 0.0f64..=1.0) {
        let curve = SplineCurve::new(basis, c.clone()).unwrap();
        prop_assert_eq!(curve.eval(u).unwrap(), eval_coeffs(&basis, &c, u));
        let y = curve.eval(u).unwrap();
        prop_assert!((curve.eval(curve.invert(y).unwrap()).unwrap() - y).abs() < 1e-10);
    }
}

#[test]
fn identity_curve_is_the_identity() {
    for m in 1..=3 {
        for p in 1..=8 {
            let curve = SplineCurve::identity(BasisConfig::new(m, p).unwrap());
            for k in 0..=20 {
                let u = k as f64 / 20.0;
                assert!((curve.eval(u).unwrap() - u).abs() < 1e-14);
                assert!((curve.invert(u).unwrap() - u).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn out_of_range_arguments_are_rejected() {
    let curve = SplineCurve::identity(BasisConfig::new(2, 4).unwrap());
    assert!(curve.eval(1.5).is_err());
    assert!(curve.eval(f64::NAN).is_err());
    assert!(curve.invert(-0.1).is_err());
    let wiggly = SplineCurve::new(BasisConfig::new(2, 4).unwrap(), vec![0.0, 0.5, 0.4, 0.8, 0.9, 1.0]).unwrap();
    assert!(wiggly.eval(0.3).is_ok());
    assert!(wiggly.invert(0.5).is_err());
    assert!(SplineCurve::new(BasisConfig::new(2, 4).unwrap(), vec![0.0, 1.0]).is_err());
}
