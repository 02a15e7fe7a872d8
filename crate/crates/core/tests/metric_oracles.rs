mod support;

use argqual_core::metrics::{
    combine_pvalues_fisher, krippendorff_alpha, macro_f1, pearson, spearman, welch_t_test, AgreementTable,
    PairedSeries,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles;

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-50i32..50, n), prop::collection::vec(-50i32..50, n)))
        .prop_map(|(x, y)| (x.into_iter().map(|v| v as f64 / 4.0).collect(), y.into_iter().map(|v| v as f64 / 4.0).collect()))
}

fn nonconstant(v: &[f64]) -> bool {
    v.iter().any(|x| *x != v[0])
}

proptest! {
    #[test]
    fn pearson_and_spearman_match_oracles((x, y) in series(2..40)) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        prop_assert!((pearson(&s).unwrap() - oracles::pearson(&x, &y)).abs() < 1e-9);
        prop_assert!((spearman(&s).unwrap() - oracles::spearman(&x, &y)).abs() < 1e-9);
    }

    #[test]
    fn correlations_are_symmetric_and_transform_invariant((x, y) in series(3..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let swapped = PairedSeries::new(y.clone(), x.clone()).unwrap();
        prop_assert!((pearson(&s).unwrap() - pearson(&swapped).unwrap()).abs() < 1e-12);
        prop_assert_eq!(spearman(&s).unwrap(), spearman(&swapped).unwrap());
        let affine: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r_affine = pearson(&PairedSeries::new(affine, y.clone()).unwrap()).unwrap();
        prop_assert!((r_affine - pearson(&s).unwrap()).abs() < 1e-9);
        // exp is strictly increasing, so ranks and hence Spearman are unchanged exactly
        let mono: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        prop_assert_eq!(spearman(&PairedSeries::new(mono, y).unwrap()).unwrap(), spearman(&s).unwrap());
    }

    #[test]
    fn macro_f1_matches_oracle_and_is_order_invariant(
        pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60),
        shift in 1u8..4,
    ) {
        let (pred, gold): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let value = macro_f1(&pred, &gold, &[]).unwrap();
        prop_assert!((value - oracles::macro_f1(&pred, &gold, &[])).abs() < 1e-9);
        let (rp, rg): (Vec<u8>, Vec<u8>) = pairs.iter().rev().copied().unzip();
        prop_assert_eq!(macro_f1(&rp, &rg, &[]).unwrap(), value);
        let relabel = |v: &[u8]| v.iter().map(|c| (c + shift) % 4).collect::<Vec<_>>();
        prop_assert!((macro_f1(&relabel(&pred), &relabel(&gold), &[]).unwrap() - value).abs() < 1e-12);
    }

    #[test]
    fn krippendorff_matches_pairwise_oracle(
        rows in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, 0u8..3), 3), 2..25),
    ) {
        let Ok(table) = AgreementTable::new(rows.clone()) else { return Ok(()); };
        match krippendorff_alpha(&table) {
            Ok(alpha) => prop_assert!((alpha - oracles::krippendorff_alpha(&rows)).abs() < 1e-9),
            Err(_) => {}
        }
    }

    #[test]
    fn welch_matches_definition_and_quadrature(
        a in prop::collection::vec(0.0f64..1.0, 2..25),
        b in prop::collection::vec(0.0f64..1.0, 2..25),
    ) {
        let Ok(w) = welch_t_test(&a, &b) else { return Ok(()) };
        let (t, df) = oracles::welch_t_df(&a, &b);
        prop_assert!((w.t - t).abs() < 1e-9 * t.abs().max(1.0));
        prop_assert!((w.df - df).abs() < 1e-9 * df.max(1.0));
        prop_assert!((w.p_two_sided - oracles::t_two_sided_quadrature(t, df)).abs() < 1e-8);
        let back = welch_t_test(&b, &a).unwrap();
        prop_assert_eq!(back.t, -w.t);
        prop_assert!((back.p_two_sided - w.p_two_sided).abs() < 1e-15);
    }

    #[test]
    fn fisher_matches_closed_form(ps in prop::collection::vec(1e-6f64..=1.0, 1..12)) {
        let f = combine_pvalues_fisher(&ps).unwrap();
        let (x, p) = oracles::fisher_combined(&ps);
        prop_assert!((f.statistic - x).abs() < 1e-9);
        prop_assert!((f.p - p).abs() < 1e-9);
        let mut with_one = ps.clone();
        with_one.push(1.0);
        prop_assert_eq!(combine_pvalues_fisher(&with_one).unwrap().statistic, f.statistic);
    }
}

#[test]
fn single_fisher_pvalue_is_identity() {
    for p in [1e-5, 0.01, 0.3, 0.999, 1.0] {
        assert!((combine_pvalues_fisher(&[p]).unwrap().p - p).abs() < 1e-9);
    }
}

#[test]
fn krippendorff_random_labels_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<Option<u8>>> =
        (0..10_000).map(|_| (0..3).map(|_| Some(rng.gen_range(0..2))).collect()).collect();
    let alpha = krippendorff_alpha(&AgreementTable::new(rows).unwrap()).unwrap();
    assert!(alpha.abs() < 0.05, "{alpha}");
}
