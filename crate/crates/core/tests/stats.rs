mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use vibropt::estimators::{compute_metrics, uniform_proba};
use vibropt::stats::*;

fn ev(values: Vec<f64>) -> ErrorVector {
    ErrorVector {
        ids: (0..values.len()).map(|i| format!("e{i}")).collect(),
        n_classes: 1,
        values,
    }
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Lower-tail p by walking all 2^m sign patterns of the observed ranks.
fn brute_force_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
    let ranks = average_ranks(&nz.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let observed: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let m = nz.len();
    let mut hits = 0u64;
    for mask in 0u64..(1 << m) {
        let w: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << m) as f64
}

#[test]
fn exact_p_matches_enumeration() {
    let mut r = rng(31);
    for trial in 0..200 {
        let m = 1 + trial % 10;
        // small integer magnitudes force ties; a few zeros are thrown in
        let d: Vec<f64> = (0..m + 2)
            .map(|_| {
                let mag = r.random_range(0..6) as f64;
                if r.random_bool(0.5) { mag } else { -mag }
            })
            .collect();
        let got = wilcoxon_signed_rank(&d, ZeroMethod::Wilcox);
        if got.n_nonzero == 0 {
            assert_eq!(got.p_value, 1.0);
            continue;
        }
        assert_eq!(got.method, WilcoxonMethod::Exact);
        let want = brute_force_p(&d);
        assert!((got.p_value - want).abs() < 1e-12, "{d:?}: {} vs {want}", got.p_value);
    }
}

#[test]
fn hand_worked_wilcoxon_examples() {
    let all_negative = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0, -4.0, -5.0], ZeroMethod::Wilcox);
    assert_eq!(all_negative.statistic, 0.0);
    assert!((all_negative.p_value - 1.0 / 32.0).abs() < 1e-15);
    let positive = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], ZeroMethod::Wilcox);
    assert!(positive.p_value >= 0.875);
    let zeros = wilcoxon_signed_rank(&[0.0; 8], ZeroMethod::Wilcox);
    assert_eq!(zeros.p_value, 1.0);
    assert_eq!(zeros.method, WilcoxonMethod::Degenerate);
}

#[test]
fn large_samples_switch_to_the_normal_approximation() {
    let d: Vec<f64> = (1..=40).map(|i| i as f64 * if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
    assert_eq!(wilcoxon_signed_rank(&d, ZeroMethod::Wilcox).method, WilcoxonMethod::Normal);
    assert_eq!(wilcoxon_signed_rank(&d[..25], ZeroMethod::Wilcox).method, WilcoxonMethod::Exact);
}

#[test]
fn normal_approximation_tracks_exact_p() {
    let mut r = rng(77);
    for m in 20..=25 {
        for _ in 0..40 {
            let shift = r.random_range(-0.8..0.8);
            let d: Vec<f64> = gaussian(&mut r, m).iter().map(|v| v + shift).collect();
            let exact = wilcoxon_signed_rank_by(&d, ZeroMethod::Wilcox, WilcoxonMethod::Exact).p_value;
            let normal = wilcoxon_signed_rank_by(&d, ZeroMethod::Wilcox, WilcoxonMethod::Normal).p_value;
            assert!((exact - normal).abs() <= 0.01, "m {m}: exact {exact}, normal {normal}");
        }
    }
}

#[test]
fn null_rejection_rate_is_near_nominal() {
    let mut r = rng(2024);
    let mut rejections = 0;
    for _ in 0..200 {
        let a = ev(gaussian(&mut r, 50).iter().map(|v| v.abs()).collect());
        let b = ev(gaussian(&mut r, 50).iter().map(|v| v.abs()).collect());
        if wilcoxon_one_tailed(&a, &b).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 200.0;
    assert!((0.01..=0.10).contains(&rate), "rejection rate {rate}");
}

#[test]
fn pratt_keeps_zeros_in_the_ranking() {
    let d = [0.0, 0.0, -1.0, -2.0, 3.0];
    let wilcox = wilcoxon_signed_rank(&d, ZeroMethod::Wilcox);
    let pratt = wilcoxon_signed_rank(&d, ZeroMethod::Pratt);
    assert_eq!(wilcox.n_nonzero, 3);
    assert_eq!(wilcox.statistic, 3.0);
    // zeros take ranks 1 and 2, so +3 is ranked 5
    assert_eq!(pratt.statistic, 5.0);
}

#[test]
fn gav_hand_example() {
    let g = hedges_gav(&ev(vec![0.0, 1.0, 2.0]), &ev(vec![1.0, 2.0, 3.0])).unwrap();
    assert!((g - 4.0 / 7.0).abs() < 1e-12);
    let same = ev(vec![0.3, 0.1, 0.7, 0.2]);
    assert_eq!(hedges_gav(&same, &same).unwrap(), 0.0);
    assert!(hedges_gav(&ev(vec![1.0; 5]), &ev(vec![1.0; 5])).is_err());
    assert!(hedges_gav(&ev(vec![1.0, 2.0]), &ev(vec![2.0, 1.0])).is_err());
}

proptest! {
    #[test]
    fn gav_symmetries(seed: u64, n in 3usize..60, shift in -5.0f64..5.0, c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let a = gaussian(&mut r, n);
        let b: Vec<f64> = gaussian(&mut r, n).iter().map(|v| v + 0.5).collect();
        let g = hedges_gav(&ev(a.clone()), &ev(b.clone())).unwrap();
        let swapped = hedges_gav(&ev(b.clone()), &ev(a.clone())).unwrap();
        prop_assert_eq!(g, -swapped);

        let shifted = hedges_gav(&ev(a.iter().map(|v| v + shift).collect()), &ev(b.iter().map(|v| v + shift).collect())).unwrap();
        prop_assert!((shifted - g).abs() <= 1e-9 * g.abs().max(1.0));

        // deviations scaled by c around each group mean, mean gap unchanged
        let stretch = |v: &[f64]| -> Vec<f64> {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| m + c * (x - m)).collect()
        };
        let scaled = hedges_gav(&ev(stretch(&a)), &ev(stretch(&b))).unwrap();
        prop_assert!((scaled - g / c).abs() <= 1e-9 * (g / c).abs().max(1e-9));
    }
}

#[test]
fn bootstrap_ci_behaviour() {
    let mut r = rng(5);
    let base: Vec<f64> = gaussian(&mut r, 200).iter().map(|v| v.abs()).collect();
    let jitter = gaussian(&mut r, 200);
    let near: Vec<f64> = base.iter().zip(&jitter).map(|(b, j)| b + 1e-3 * j).collect();
    let ci = bootstrap_ci(&ev(near.clone()), &ev(base.clone()), 0.95, 2000, 1).unwrap();
    assert!(ci.lower <= 0.0 && ci.upper >= 0.0, "{ci:?}");

    let narrow = bootstrap_ci(&ev(near.clone()), &ev(base.clone()), 0.95, 2000, 1).unwrap();
    let wide = bootstrap_ci(&ev(near.clone()), &ev(base.clone()), 0.9875, 2000, 1).unwrap();
    assert!(wide.half_width >= narrow.half_width);
    assert_eq!(narrow, bootstrap_ci(&ev(near), &ev(base), 0.95, 2000, 1).unwrap());

    assert!(bootstrap_ci(&ev(vec![1.0; 9]), &ev(vec![2.0; 9]), 0.95, 100, 0).is_err());
}

#[test]
fn bootstrap_half_width_is_stable_across_seeds() {
    let mut r = rng(8);
    let a: Vec<f64> = gaussian(&mut r, 500).iter().map(|v| v.abs()).collect();
    let b: Vec<f64> = gaussian(&mut r, 500).iter().map(|v| 1.2 * v.abs()).collect();
    let x = bootstrap_ci(&ev(a.clone()), &ev(b.clone()), 0.95, 10_000, 1).unwrap();
    let y = bootstrap_ci(&ev(a), &ev(b), 0.95, 10_000, 2).unwrap();
    let rel = (x.half_width - y.half_width).abs() / x.half_width;
    assert!(rel <= 0.10, "half-widths {} and {}", x.half_width, y.half_width);
}

#[test]
fn bonferroni_levels() {
    let b = bonferroni(0.05, 4).unwrap();
    assert!((b.alpha_corrected - 0.0125).abs() < 1e-15);
    assert!((b.ci_level - 0.9875).abs() < 1e-15);
    assert_eq!(bonferroni(0.05, 1).unwrap().alpha_corrected, 0.05);
    let ten = bonferroni(0.05, 10).unwrap();
    assert!((ten.alpha_corrected - 0.005).abs() < 1e-15);
    assert!((ten.ci_level - 0.995).abs() < 1e-15);
}

#[test]
fn error_vectors_are_entry_major_and_match_mae() {
    let u = error_vectors(uniform_proba(1, 6).view(), &[2], &["a".into()]).unwrap();
    let sixth = 1.0 / 6.0;
    let want = [sixth, sixth, 5.0 / 6.0, sixth, sixth, sixth];
    for (a, b) in u.values.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }

    let mut r = rng(3);
    let mut p = Array2::from_shape_fn((40, 6), |_| r.random_range(0.0..1.0));
    for mut row in p.outer_iter_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    let labels: Vec<usize> = (0..40).map(|i| i % 6).collect();
    let ids: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let e = error_vectors(p.view(), &labels, &ids).unwrap();
    assert_eq!(e.len(), 240);
    let mae = compute_metrics(p.view(), &labels).unwrap().mae;
    assert!((e.mean() - mae).abs() < 1e-12);
    assert!(error_vectors(p.view(), &labels[..39], &ids).is_err());
}

#[test]
fn self_comparison_is_null() {
    let e = ev((0..30).map(|i| (i as f64 * 0.37).sin().abs()).collect());
    let rep = compare(&e, &e, &CompareOptions::default()).unwrap();
    assert_eq!(rep.p_value, 1.0);
    assert_eq!(rep.g_av, Some(0.0));
    assert!(!rep.significant);
}
