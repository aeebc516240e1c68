mod common;

use std::collections::BTreeSet;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use vibropt::dsp::emd::EmdConfig;
use vibropt::dsp::{PipelineConfig, StageConfig, StageKind};
use vibropt::estimators::{GbtParams, Hyperparams};
use vibropt::features::{FeatureCatalog, FeatureMatrix};
use vibropt::ml_opt::*;
use vibropt::pipeline_opt::*;
use vibropt::signal_io::{assign_folds, synth_dataset, Dataset, FaultClass, SignalWindow, SynthSpec};

const FS: f64 = 1000.0;

fn two_class_dataset(per_class: usize, seed: u64, mut make: impl FnMut(usize, &mut rand_chacha::ChaCha8Rng) -> Vec<f64>) -> Dataset {
    let mut r = rng(seed);
    let mut windows = Vec::new();
    for c in 0..2 {
        for i in 0..per_class {
            let x = make(c, &mut r);
            windows.push(SignalWindow::new(vec![x], FS, FaultClass::ALL[c], format!("c{c}/{i:02}")).unwrap());
        }
    }
    assign_folds(&Dataset::new(windows).unwrap(), 3, 11).unwrap()
}

/// Both classes share a dominant random low-frequency tone; only class 1
/// carries a weak amplitude-modulated 300 Hz component, well above fs/8.
fn hf_am_dataset() -> Dataset {
    two_class_dataset(15, 1, |c, r| {
        let amp = r.random_range(1.0..3.0);
        let phase = r.random_range(0.0..6.28);
        let f_low = r.random_range(8.0..12.0);
        let noise = gaussian(r, 512);
        (0..512)
            .map(|i| {
                let t = i as f64 / FS;
                let low = amp * (2.0 * std::f64::consts::PI * f_low * t + phase).sin();
                let hf = if c == 1 {
                    0.4 * (1.0 + 0.8 * (2.0 * std::f64::consts::PI * 20.0 * t).sin())
                        * (2.0 * std::f64::consts::PI * 300.0 * t).sin()
                } else {
                    0.0
                };
                low + hf + 0.02 * noise[i]
            })
            .collect()
    })
}

/// Classes differ only in raw band power: half of class 1 carries extra
/// 0 Hz power, the other half a louder broadband floor, on top of shared
/// random low-frequency tones. Each filter discards one of the two cues.
fn band_power_dataset() -> Dataset {
    let mut i = 0usize;
    two_class_dataset(30, 0, |c, r| {
        i += 1;
        let tones: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (r.random_range(0.5..1.5), r.random_range(2.0..15.0), r.random_range(0.0..6.28)))
            .collect();
        let z = gaussian(r, 512);
        let (dc, floor) = match (c, i % 2) {
            (0, _) => (0.0, 0.05),
            (_, 1) => (1.5, 0.05),
            _ => (0.0, 0.15),
        };
        (0..512)
            .map(|t| {
                let tt = t as f64 / FS;
                tones.iter().map(|(a, f, p)| a * (2.0 * std::f64::consts::PI * f * tt + p).sin()).sum::<f64>() + dc + floor * z[t]
            })
            .collect()
    })
}

fn small_opts(stages: Vec<StageKind>) -> SearchOptions {
    SearchOptions {
        catalog: FeatureCatalog { bands: 8 },
        stages,
        ..SearchOptions::default()
    }
}

fn scored(records: &[SearchRecord], phase: SearchPhase) -> Vec<&SearchRecord> {
    records.iter().filter(|r| r.phase == phase).collect()
}

#[test]
fn high_frequency_signature_keeps_the_first_imf() {
    let d = hf_am_dataset();
    let cache = FeatureCache::new();
    for fold in 0..3 {
        let t = tune_stage_hyperparams(&d, fold, &StageGrid::full(), &small_opts(vec![StageKind::Emd]), &cache).unwrap();
        let band = t.emd.unwrap();
        assert_eq!(band.imf_lower, 0, "fold {fold} picked {band:?}");
        // the oracle: dropping IMF 0 must cost likelihood on every band
        let recs = scored(&t.records, SearchPhase::Emd);
        let best_dropping = recs
            .iter()
            .filter(|r| !r.candidate.starts_with("EMD(0,"))
            .filter_map(|r| r.aic)
            .fold(f64::INFINITY, f64::min);
        let best_keeping = recs
            .iter()
            .filter(|r| r.candidate.starts_with("EMD(0,"))
            .filter_map(|r| r.aic)
            .fold(f64::INFINITY, f64::min);
        assert!(best_keeping < best_dropping);
    }
}

#[test]
fn raw_band_power_prefers_the_empty_pipeline() {
    let d = band_power_dataset();
    let cache = FeatureCache::new();
    for fold in 0..3 {
        let s = optimize_fold(&d, fold, &StageGrid::full(), &small_opts(vec![StageKind::Emd, StageKind::Wavelet, StageKind::Tkeo]), &cache).unwrap();
        assert!(s.winner.is_empty(), "fold {fold} picked {}", s.winner);

        let (winner, recs) = search_ordering(&d, fold, &[StageConfig::Tkeo], &small_opts(vec![StageKind::Tkeo]), &cache).unwrap();
        assert!(winner.is_empty());
        let aic = |name: &str| recs.iter().find(|r| r.candidate == name).unwrap().aic.unwrap();
        assert!(aic("NONE") < aic("TKEO"));
    }
}

fn synth_folds() -> Dataset {
    let spec = SynthSpec::balanced(6, 2000.0, 0.1);
    assign_folds(&synth_dataset(&spec, 21).unwrap(), 3, 2021).unwrap()
}

#[test]
fn two_stage_search_bookkeeping() {
    let d = synth_folds();
    let opts = small_opts(vec![StageKind::Emd, StageKind::Wavelet, StageKind::Tkeo]);
    let cache = FeatureCache::new();
    for fold in 0..3 {
        let s = optimize_fold(&d, fold, &StageGrid::full(), &opts, &cache).unwrap();
        let counts = [SearchPhase::Emd, SearchPhase::Wavelet, SearchPhase::Ordering].map(|p| scored(&s.records, p).len());
        assert_eq!(counts, [30, 24, 16]);

        let ordering = scored(&s.records, SearchPhase::Ordering);
        let min = ordering.iter().filter_map(|r| r.aic).fold(f64::INFINITY, f64::min);
        assert_eq!(s.winner_aic, min);
        assert_eq!(ordering.iter().find(|r| r.rank == 1).unwrap().candidate, s.winner.to_string());
        for phase in [SearchPhase::Emd, SearchPhase::Wavelet, SearchPhase::Ordering] {
            let ranks: BTreeSet<usize> = scored(&s.records, phase).iter().map(|r| r.rank).collect();
            let n = scored(&s.records, phase).len();
            assert_eq!(ranks, (1..=n).collect());
        }
        // frozen hyperparameters are the ones used by every ordering candidate
        let emd = StageConfig::Emd(s.tuned_emd.unwrap()).to_string();
        assert!(ordering.iter().filter(|r| r.candidate.contains("EMD")).all(|r| r.candidate.contains(&emd)));

        let test: BTreeSet<String> = d.test_indices(fold).unwrap().iter().map(|&i| d.windows()[i].source_id().to_string()).collect();
        let train: BTreeSet<String> = d.train_indices(fold).unwrap().iter().map(|&i| d.windows()[i].source_id().to_string()).collect();
        let used: BTreeSet<String> = s.train_ids.iter().cloned().collect();
        assert!(used.is_disjoint(&test));
        assert_eq!(used, train);
    }
}

#[test]
fn search_is_deterministic() {
    let d = synth_folds();
    let opts = small_opts(vec![StageKind::Emd, StageKind::Wavelet, StageKind::Tkeo]);
    let a = optimize_fold(&d, 1, &StageGrid::shrunken(), &opts, &FeatureCache::new()).unwrap();
    let b = optimize_fold(&d, 1, &StageGrid::shrunken(), &opts, &FeatureCache::new()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn joint_search_covers_every_grid_combination() {
    let grid = StageGrid::shrunken();
    let c = joint_candidates(&[StageKind::Emd, StageKind::Tkeo], &grid).unwrap();
    // NONE, EMD×4, TKEO, EMD|TKEO ×4, TKEO|EMD ×4
    assert_eq!(c.len(), 1 + 4 + 1 + 4 + 4);
    assert_eq!(c.iter().map(PipelineConfig::to_string).collect::<BTreeSet<_>>().len(), c.len());
}

// ---------------------------------------------------------------------------
// Feature elimination and classifier tuning
// ---------------------------------------------------------------------------

/// `informative` columns with class-dependent means followed by `noise`
/// pure-noise columns.
fn mixed_matrix(seed: u64, n: usize, classes: usize, informative: usize, noise: usize, shift: f64) -> FeatureMatrix {
    let mut r = rng(seed);
    let p = informative + noise;
    let centres: Vec<Vec<f64>> = (0..classes).map(|_| gaussian(&mut r, informative)).collect();
    let values = Array2::from_shape_fn((n, p), |(i, j)| {
        let base: f64 = r.sample(rand_distr::StandardNormal);
        if j < informative { base + shift * centres[i % classes][j] } else { base }
    });
    matrix(values, cycle_labels(n, classes))
}

#[test]
fn rfecv_recovers_informative_features() {
    let m = mixed_matrix(3, 150, 3, 20, 200, 1.2);
    let res = rfecv(&m, &Hyperparams::Logreg { l2_lambda: 1.0 }, &RfecvSchedule::default(), 3, 5).unwrap();
    let informative = res
        .selected_features
        .iter()
        .filter(|f| f[1..].parse::<usize>().unwrap() < 20)
        .count();
    let share = informative as f64 / res.selected_features.len() as f64;
    assert!(share >= 0.8, "{informative}/{} informative", res.selected_features.len());
    let counts: Vec<usize> = res.cv_score_trace.iter().map(|t| t.n_features).collect();
    assert_eq!(counts, RfecvSchedule::default().trace(220));
    assert_eq!(res.row_ids, m.row_ids);
}

#[test]
fn rfecv_with_gbt_follows_the_schedule() {
    let m = mixed_matrix(4, 60, 3, 4, 8, 1.5);
    let hp = Hyperparams::Gbt(GbtParams { n_trees: 10, max_depth: 2, ..GbtParams::default() });
    let schedule = RfecvSchedule::new(vec![1000], vec![1]).unwrap();
    let res = rfecv(&m, &hp, &schedule, 3, 0).unwrap();
    let counts: Vec<usize> = res.cv_score_trace.iter().map(|t| t.n_features).collect();
    assert_eq!(counts, (1..=12).rev().collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn schedule_trace_is_closed_form(start in 1usize..3000) {
        let s = RfecvSchedule::default();
        let trace = s.trace(start);
        prop_assert_eq!(trace[0], start);
        prop_assert_eq!(*trace.last().unwrap(), 1);
        for w in trace.windows(2) {
            prop_assert!(w[1] < w[0]);
            // largest threshold exceeded sets the step; at or below 8 the step is 3
            let step = [(700, 400), (350, 100), (125, 50), (75, 25), (37, 12), (17, 6), (8, 3)]
                .iter()
                .find(|(t, _)| w[0] > *t)
                .map_or(3, |(_, s)| *s);
            prop_assert_eq!(w[1], w[0].saturating_sub(step).max(1));
        }
    }
}

#[test]
fn separable_toy_ties_break_towards_stronger_penalty() {
    let m = mixed_matrix(6, 60, 3, 4, 0, 12.0);
    let grid: Vec<Hyperparams> = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
        .into_iter()
        .map(|l2_lambda| Hyperparams::Logreg { l2_lambda })
        .collect();
    let res = tune_classifier(&m, &grid, 3, 1).unwrap();
    assert!(res.grid_scores.iter().all(|g| g.mean_f1 == 1.0), "{:?}", res.grid_scores);
    assert_eq!(res.best_hyperparams, Hyperparams::Logreg { l2_lambda: 1.0 });

    let single = tune_classifier(&m, &grid[..1], 3, 1).unwrap();
    assert_eq!(single.best_hyperparams, grid[0]);
    assert!(tune_classifier(&m, &[], 3, 1).is_err());
}

#[test]
fn noise_features_score_near_the_prior_baseline() {
    let m = mixed_matrix(9, 180, 6, 0, 10, 0.0);
    let res = tune_classifier(&m, &default_logreg_grid(), 3, 2).unwrap();
    let best = res.grid_scores.iter().map(|g| g.mean_f1).fold(0.0, f64::max);
    // balanced classes: chance-level weighted f1 is 1/6
    assert!((best - 1.0 / 6.0).abs() <= 0.1, "best f1 {best}");
}

#[test]
fn duplicating_an_informative_feature_does_not_hurt() {
    let base = mixed_matrix(12, 90, 3, 6, 10, 0.7);
    let mut values = Array2::zeros((90, 17));
    values.slice_mut(ndarray::s![.., ..16]).assign(&base.values);
    values.column_mut(16).assign(&base.values.column(0));
    let dup = matrix(values, base.labels.clone());
    let hp = Hyperparams::Logreg { l2_lambda: 1.0 };
    let schedule = RfecvSchedule::new(vec![1000], vec![1]).unwrap();
    let best = |m: &FeatureMatrix| {
        rfecv(m, &hp, &schedule, 3, 4).unwrap().cv_score_trace.iter().map(|t| t.mean_f1).fold(0.0, f64::max)
    };
    let (a, b) = (best(&base), best(&dup));
    assert!(b >= a - 1e-9, "best score fell from {a} to {b}");
}

#[test]
fn rfecv_is_deterministic_given_seed() {
    let m = mixed_matrix(1, 60, 3, 5, 20, 1.0);
    let hp = Hyperparams::Logreg { l2_lambda: 0.1 };
    let a = rfecv(&m, &hp, &RfecvSchedule::default(), 3, 9).unwrap();
    let b = rfecv(&m, &hp, &RfecvSchedule::default(), 3, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(RfecvSchedule::default().step_for(8), 3);
    assert_eq!(EmdConfig::default().max_imfs, 10);
}
