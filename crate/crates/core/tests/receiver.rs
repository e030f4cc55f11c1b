mod common;

use common::*;
use num_complex::Complex64;
use pilotsim::linalg::split;
use pilotsim::receiver::{
    cell_se, interference_floor, mmmse_combiner, mmmse_sinrs, mmmse_sinrs_split, sinr, spectral_efficiency,
};
use proptest::prelude::*;
use rand::Rng;

fn instance(seed: u64, cells: usize, m: usize, k: usize) -> (Vec<CM>, CM) {
    let mut g = rng(seed);
    let est = (0..cells)
        .map(|_| {
            let gain: f64 = g.gen_range(0.05..4.0);
            cgauss(&mut g, m, k) * Complex64::new(gain.sqrt(), 0.0)
        })
        .collect();
    let s = g.gen_range(0.05..2.0);
    let z = hpd(&mut g, m, s);
    (est, z)
}

#[test]
fn closed_form_sinr_matches_explicit_combiner() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let (est, z) = instance(seed, 2, 8, 3);
        let got = mmmse_sinrs(&est, 1, &z).unwrap();
        for d in 0..3 {
            let w = mmse_combiner(&est, 1, d, &z);
            let want = sinr_reference(&w, &est, 1, d, &z);
            worst = worst.max((got[d] - want).abs() / want);
        }
    }
    assert!(worst < 1e-12, "worst relative error {worst}");
}

#[test]
fn combiner_columns_match_reference() {
    let (est, z) = instance(3, 3, 6, 2);
    let w = mmmse_combiner(&est, 2, &z).unwrap().w;
    for d in 0..2 {
        let want = mmse_combiner(&est, 2, d, &z);
        assert!(rel(&w.columns(d, 1).into_owned(), &want) < 1e-10);
    }
}

#[test]
fn library_sinr_matches_reference_for_any_combiner() {
    let mut g = rng(8);
    for seed in 0..30 {
        let (est, z) = instance(seed + 500, 2, 5, 2);
        let w = cgauss(&mut g, 5, 1);
        let wv = pilotsim::CVector64::from_column_slice(w.as_slice());
        let got = sinr(&wv, &est, 0, 1, &z).unwrap();
        let want = sinr_reference(&w, &est, 0, 1, &z);
        assert!((got - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn mmse_beats_matched_filter_on_every_instance() {
    let mut wins = 0;
    for seed in 0..100 {
        let (est, z) = instance(1000 + seed, 2, 8, 3);
        let g = mmmse_sinrs(&est, 0, &z).unwrap();
        let all = (0..3).all(|d| {
            let mr = est[0].columns(d, 1).into_owned();
            sinr_reference(&mr, &est, 0, d, &z) <= g[d] * (1.0 + 1e-12)
        });
        wins += usize::from(all);
    }
    assert_eq!(wins, 100);
}

#[test]
fn split_path_matches_stacked_path() {
    let (est, z) = instance(77, 3, 8, 4);
    let mut all = CM::zeros(8, 12);
    // serving cell first, as the split form expects
    for (slot, j) in [1, 0, 2].into_iter().enumerate() {
        all.columns_mut(slot * 4, 4).copy_from(&est[j]);
    }
    let (hr, hi) = split(&all);
    let a = mmmse_sinrs_split(&hr, &hi, 4, &z).unwrap();
    let b = mmmse_sinrs(&est, 1, &z).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-10 * y);
    }
}

#[test]
fn floor_adds_noise_to_error_covariances() {
    let mut g = rng(4);
    let covs = [hpd(&mut g, 4, 1.0), hpd(&mut g, 4, 0.5)];
    let z = interference_floor(covs.iter(), 4, 0.25).unwrap();
    let want = &covs[0] + &covs[1] + eye(4) * Complex64::new(0.25, 0.0);
    assert!(rel(&z, &want) < 1e-14);
    assert!(interference_floor([eye(3)].iter(), 4, 1.0).is_err());
}

#[test]
fn rate_follows_prelog_and_shannon() {
    let r = spectral_efficiency(3.0, 10, 200).unwrap();
    assert!((r.se - 0.95 * 2.0).abs() < 1e-14);
    assert_eq!(r.tau_up, 190);
    assert!(spectral_efficiency(1.0, 200, 200).is_err());
    assert!(spectral_efficiency(-1.0, 1, 200).is_err());
    assert!((cell_se(&[1.0, 3.0], 0, 10).unwrap() - 3.0).abs() < 1e-14);
    assert_eq!(cell_se(&[], 5, 10).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinr_ignores_combiner_scale(seed in any::<u64>(), re in -5.0f64..5.0, im in -5.0f64..5.0) {
        prop_assume!(re * re + im * im > 1e-3);
        let (est, z) = instance(seed, 2, 6, 2);
        let w = mmse_combiner(&est, 0, 0, &z);
        let wv = pilotsim::CVector64::from_column_slice(w.as_slice());
        let a = sinr(&wv, &est, 0, 0, &z).unwrap();
        let b = sinr(&(&wv * Complex64::new(re, im)), &est, 0, 0, &z).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn sinr_is_nonnegative_and_finite(seed in any::<u64>(), k in 1usize..4) {
        let (est, z) = instance(seed, 2, 6, k);
        for g in mmmse_sinrs(&est, 1, &z).unwrap() {
            prop_assert!(g.is_finite() && g >= 0.0);
        }
    }

    #[test]
    fn extra_interferer_never_helps(seed in any::<u64>()) {
        let (est, z) = instance(seed, 2, 6, 2);
        let base = mmmse_sinrs(&est, 0, &z).unwrap();
        let mut more = est.clone();
        more.push(cgauss(&mut rng(seed ^ 1), 6, 1));
        let worse = mmmse_sinrs(&more, 0, &z).unwrap();
        for (a, b) in base.iter().zip(&worse) {
            prop_assert!(*b <= a * (1.0 + 1e-10));
        }
    }

    #[test]
    fn se_is_monotone_in_sinr(a in 0.0f64..1e3, b in 0.0f64..1e3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(spectral_efficiency(lo, 5, 200).unwrap().se <= spectral_efficiency(hi, 5, 200).unwrap().se);
    }
}
