//! Acceptance suite. Runs every criterion, prints one `[PASS]` or `[FAIL]`
//! line each, and exits non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use ndarray::Array2;
use rand::Rng;
use vibropt::dsp::cwt::{cwt_filter, WaveletConfig, WaveletKind};
use vibropt::dsp::emd::{emd_decompose, EmdConfig};
use vibropt::dsp::tkeo::tkeo;
use vibropt::estimators::*;
use vibropt::experiment::*;
use vibropt::ml_opt::{rfecv, RfecvSchedule};
use vibropt::pipeline_opt::{GridMode, SearchPhase};
use vibropt::stats::*;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64, detail: String) -> Outcome {
    check(
        elapsed.as_secs() < limit_s,
        format!("{detail}; {:.1} s (limit {limit_s} s)", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------

fn paper_scale_substitution() -> Outcome {
    let root = Path::new("data/mafaulda");
    let cfg = paper_config(root);
    let back = Config::from_toml(&cfg.to_toml()).map_err(|e| e.to_string())?;
    let names: Vec<&str> = back.experiments.iter().map(|e| e.name.as_str()).collect();
    let native = back.experiment("native_50khz_5s").map_err(|e| e.to_string())?;
    let fixture = fixture_config();
    let ok = back == cfg
        && names == ["native_50khz_5s", "decimate_1khz_5s", "truncate_50khz_0p1s"]
        && native.grid_mode == GridMode::Shrunken
        && back.comparisons.len() == 4
        && fixture.data.synth_spec().is_some();
    check(
        ok,
        format!(
            "full-scale results not reproduced at desk scale; `init-config --full` writes the real-data template \
             ({} experiments, {} comparisons); the synthetic substitute suite follows",
            names.len(),
            back.comparisons.len()
        ),
    )
}

fn dsp_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst_emd: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let n = r.random_range(128..1024);
        let noise = gaussian(&mut r, n);
        let f = r.random_range(0.005..0.2);
        let x: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * f * i as f64).sin() + 0.5 * noise[i] + 1e-3 * i as f64)
            .collect();
        let dec = emd_decompose(&x, &EmdConfig::default()).map_err(|e| e.to_string())?;
        let mut sum = dec.residual.clone();
        for imf in &dec.imfs {
            sum.iter_mut().zip(imf).for_each(|(s, v)| *s += v);
        }
        let err = sum.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_emd = worst_emd.max(err / norm);
    }

    let constant_zero = tkeo(&[2.0; 64]).map_err(|e| e.to_string())?.iter().all(|&v| v == 0.0);
    let (a, w) = (1.7, 0.23);
    let x: Vec<f64> = (0..500).map(|n| a * (w * n as f64).sin()).collect();
    let expected = a * a * w.sin().powi(2);
    let worst_tkeo = tkeo(&x).map_err(|e| e.to_string())?[1..499]
        .iter()
        .map(|v| ((v - expected) / expected).abs())
        .fold(0.0, f64::max);

    let mut worst_r: f64 = 1.0;
    for kind in WaveletKind::ALL {
        for period in [10.0, 16.0, 30.0, 50.0, 80.0] {
            let x = sine(4096, 1.0, 1.0 / period, 1.0);
            let y = cwt_filter(&x, &WaveletConfig::new(0, 9, kind)).map_err(|e| e.to_string())?;
            worst_r = worst_r.min(pearson(&x, &y));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst_emd <= 1e-9 && constant_zero && worst_tkeo <= 1e-6 && worst_r > 0.99;
    let detail = format!(
        "EMD worst relative error {worst_emd:.2e}; TKEO constant→0 {constant_zero}, sinusoid error {worst_tkeo:.2e}; CWT min r {worst_r:.5}"
    );
    if ok {
        within(elapsed, 60, detail)
    } else {
        Err(detail)
    }
}

fn brute_force_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
    let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|x| {
            let below = abs.iter().filter(|y| *y < x).count() as f64;
            let equal = abs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let m = nz.len();
    let hits = (0u64..1 << m)
        .filter(|mask| (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum::<f64>() <= observed)
        .count();
    hits as f64 / (1u64 << m) as f64
}

fn wilcoxon_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(99);
    let mut mismatches = 0;
    let mut cases = 0;
    for m in 1..=10 {
        for _ in 0..100 {
            // integer magnitudes make ties common
            let d: Vec<f64> = (0..m)
                .map(|_| {
                    let mag = r.random_range(1..8) as f64;
                    if r.random_bool(0.5) { mag } else { -mag }
                })
                .collect();
            cases += 1;
            if wilcoxon_signed_rank(&d, ZeroMethod::Wilcox).p_value != brute_force_p(&d) {
                mismatches += 1;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for m in 20..=25 {
        for _ in 0..50 {
            let shift = r.random_range(-0.8..0.8);
            let d: Vec<f64> = gaussian(&mut r, m).iter().map(|v| v + shift).collect();
            let e = wilcoxon_signed_rank_by(&d, ZeroMethod::Wilcox, WilcoxonMethod::Exact).p_value;
            let n = wilcoxon_signed_rank_by(&d, ZeroMethod::Wilcox, WilcoxonMethod::Normal).p_value;
            worst = worst.max((e - n).abs());
        }
    }
    let detail = format!("{mismatches}/{cases} exact mismatches for m ≤ 10; max |Δp| {worst:.4} for m = 20..25");
    if mismatches == 0 && worst <= 0.01 {
        within(start.elapsed(), 60, detail)
    } else {
        Err(detail)
    }
}

fn bonferroni_level() -> Outcome {
    let b = bonferroni(0.05, 4).map_err(|e| e.to_string())?;
    check(b.alpha_corrected == 0.0125, format!("alpha_corr = {}", b.alpha_corrected))
}

fn mae_closed_form() -> Outcome {
    let labels: Vec<usize> = (0..600).map(|i| i % 6).collect();
    let m = compute_metrics(uniform_proba(600, 6).view(), &labels).map_err(|e| e.to_string())?;
    let analytic = 5.0 / 18.0;
    check(
        (m.mae - analytic).abs() <= 1e-9 && format!("{:.4}", m.mae) == "0.2778",
        format!("MAE {:.12} vs 5/18 = {analytic:.12}", m.mae),
    )
}

fn estimator_checks() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let x = Array2::from_shape_vec((50, 5), gaussian(&mut r, 250)).unwrap();
        let y: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let params: Vec<f64> = (0..18).map(|_| r.random_range(-1.0..1.0)).collect();
        let lambda = r.random_range(0.0..2.0);
        let (_, g) = logreg_objective(x.view(), &y, 3, lambda, &params);
        for i in 0..params.len() {
            let h = 1e-6;
            let (mut up, mut dn) = (params.clone(), params.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (logreg_objective(x.view(), &y, 3, lambda, &up).0 - logreg_objective(x.view(), &y, 3, lambda, &dn).0) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
        }
    }
    let mut rises = 0;
    let mut rounds = 0;
    for seed in 0..10u64 {
        let mut r = rng(1000 + seed);
        let x = Array2::from_shape_vec((90, 4), gaussian(&mut r, 360)).unwrap();
        let y: Vec<usize> = (0..90).map(|i| i % 6).collect();
        let m = fit_gbt(x.view(), &y, 6, &GbtParams { n_trees: 40, ..GbtParams::default() }).map_err(|e| e.to_string())?;
        for w in m.loss_trace.windows(2) {
            rounds += 1;
            if w[1] > w[0] + 1e-12 {
                rises += 1;
            }
        }
    }
    check(
        worst <= 1e-4 && rises == 0,
        format!("logreg gradient max relative error {worst:.2e}; GBT loss rose in {rises}/{rounds} rounds"),
    )
}

fn rfecv_recovery() -> Outcome {
    let mut r = rng(3);
    let centres: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut r, 20)).collect();
    let values = Array2::from_shape_fn((150, 220), |(i, j)| {
        let base: f64 = r.sample(rand_distr::StandardNormal);
        if j < 20 { base + 1.2 * centres[i % 3][j] } else { base }
    });
    let m = matrix(values, cycle_labels(150, 3));
    let schedule = RfecvSchedule::default();
    let res = rfecv(&m, &Hyperparams::Logreg { l2_lambda: 1.0 }, &schedule, 3, 5).map_err(|e| e.to_string())?;
    let informative = res
        .selected_features
        .iter()
        .filter(|f| f[1..].parse::<usize>().is_ok_and(|j| j < 20))
        .count();
    let share = informative as f64 / res.selected_features.len() as f64;
    let counts: Vec<usize> = res.cv_score_trace.iter().map(|t| t.n_features).collect();
    let trace_ok = counts == schedule.trace(220);

    // closed-form schedule from every start count up to 2000
    let table = [(700, 400), (350, 100), (125, 50), (75, 25), (37, 12), (17, 6), (8, 3)];
    let closed_form = (1..=2000usize).all(|start| {
        let mut want = vec![start];
        let mut c = start;
        while c > 1 {
            let step = table.iter().find(|(t, _)| c > *t).map_or(3, |(_, s)| *s);
            c = c.saturating_sub(step).max(1);
            want.push(c);
        }
        schedule.trace(start) == want
    });
    check(
        share >= 0.8 && trace_ok && closed_form,
        format!(
            "{informative}/{} selected features informative ({:.0}%); trace from 220 follows schedule {trace_ok}; closed form for starts 1..=2000 {closed_form}",
            res.selected_features.len(),
            100.0 * share
        ),
    )
}

// ---------------------------------------------------------------------------
// Fixture corpus
// ---------------------------------------------------------------------------

fn fixture_in(dir: &Path) -> Config {
    let mut cfg = fixture_config();
    cfg.paths.output_dir = dir.join("reports");
    cfg.paths.cache_dir = dir.join("cache");
    cfg
}

fn run_fixture(dir: &Path) -> Result<(Workspace, Duration), String> {
    let start = Instant::now();
    let ws = Workspace::new(fixture_in(dir)).map_err(|e| e.to_string())?;
    ws.run_all().map_err(|e| e.to_string())?;
    Ok((ws, start.elapsed()))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn fixture_findings(ws: &Workspace, elapsed: Duration) -> Outcome {
    let train = read_train(&ws.experiment_dir("full").join("train_logreg.json")).map_err(|e| e.to_string())?;
    let train_gbt = read_train(&ws.experiment_dir("full").join("train_gbt.json")).map_err(|e| e.to_string())?;
    let f1 = train.pooled.f1_weighted.min(train_gbt.pooled.f1_weighted);
    let a = f1 >= 0.95;

    let alpha_corr = bonferroni(ws.config.stats.alpha, ws.config.comparisons.len()).map_err(|e| e.to_string())?.alpha_corrected;
    // the reference effect (0.64) is the boosted-tree comparison; the
    // logistic one is reported alongside
    let mut b = false;
    let mut rq2 = Vec::new();
    for est in ["gbt", "logreg"] {
        let c = read_compare(&ws.out_dir.join(format!("compare_rq2-{est}.json"))).map_err(|e| e.to_string())?;
        let rep = &c.report;
        let g = rep.g_av.unwrap_or(f64::NAN);
        let met = c.comparison.null == "truncated" && rep.mae_null > rep.mae_alt && rep.p_value < alpha_corr && g > 0.0;
        if est == "gbt" {
            b = met;
        }
        rq2.push(format!(
            "{est}{}: MAE {:.4} vs {:.4}, median {:.4} vs {:.4}, p {:.2e}, g_av {g:.3}",
            if est == "gbt" { "" } else { " (informational)" },
            rep.mae_null,
            rep.mae_alt,
            rep.median_null,
            rep.median_alt,
            rep.p_value
        ));
    }

    let mut c_ok = true;
    let mut folds = 0;
    for exp in &ws.config.experiments {
        let s = read_search(&ws.experiment_dir(&exp.name).join("search.json")).map_err(|e| e.to_string())?;
        for f in &s.folds {
            folds += 1;
            let ordering: Vec<_> = f.records.iter().filter(|r| r.phase == SearchPhase::Ordering).collect();
            let min = ordering.iter().filter_map(|r| r.aic).fold(f64::INFINITY, f64::min);
            let winner = ordering.iter().find(|r| r.rank == 1);
            c_ok &= ordering.len() == 16
                && f.winner_aic == min
                && winner.is_some_and(|w| w.candidate == f.winner.to_string() && w.aic == Some(min));
        }
    }

    let detail = format!(
        "(a) full-window pooled f1 logreg {:.4}, gbt {:.4} [{}]; (b) truncated vs full, α_corr {alpha_corr}: {} [{}]; \
         (c) 16 ordering candidates with winner at minimum AIC in {folds} folds [{}]",
        train.pooled.f1_weighted,
        train_gbt.pooled.f1_weighted,
        if a { "ok" } else { "below 0.95" },
        rq2.join("; "),
        if b { "ok" } else { "not met" },
        if c_ok { "ok" } else { "violated" },
    );
    if a && b && c_ok {
        within(elapsed, 15 * 60, detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match &outcome {
            Ok(d) => println!("[PASS] {name}: {d}"),
            Err(d) => println!("[FAIL] {name}: {d}"),
        }
        results.push((name, outcome));
    };

    run("paper-scale results (substituted suite)", &mut paper_scale_substitution);
    run("DSP correctness", &mut dsp_correctness);
    run("exact Wilcoxon oracle", &mut wilcoxon_oracle);
    run("Bonferroni", &mut bonferroni_level);
    run("MAE closed form", &mut mae_closed_form);
    run("logistic gradient and GBT loss", &mut estimator_checks);
    run("RFECV ground-truth recovery", &mut rfecv_recovery);

    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path().join("run");
    let first = run_fixture(&dir);
    let first_snapshot = first.as_ref().ok().map(|_| snapshot(&dir.join("reports")));
    run("end-to-end fixture reproduction", &mut || {
        let (ws, elapsed) = first.as_ref().map_err(|e| e.clone())?;
        fixture_findings(ws, *elapsed)
    });
    run("determinism", &mut || {
        let before = first_snapshot.clone().ok_or("first fixture run failed")?;
        std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
        run_fixture(&dir)?;
        let after = snapshot(&dir.join("reports"));
        let differing: Vec<String> = before
            .keys()
            .chain(after.keys())
            .filter(|k| before.get(*k) != after.get(*k))
            .map(|k| k.display().to_string())
            .collect();
        check(
            differing.is_empty() && !before.is_empty(),
            if differing.is_empty() {
                format!("{} report files byte-identical across two runs", before.len())
            } else {
                format!("differing files: {}", differing.join(", "))
            },
        )
    });

    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
