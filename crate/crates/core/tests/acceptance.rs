//! Acceptance gate: ten release criteria, one test each. Every test
//! prints a single `criterion N: PASS` line (visible with --nocapture);
//! a failing criterion panics with a `criterion N: FAIL` message.
//!
//! Run with: cargo test -p clusterfactor --test acceptance -- --nocapture

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use clusterfactor::backtest::{
    aggregate_report, run_backtest, BacktestConfig, MethodSpec,
};
use clusterfactor::clustering::{
    adjusted_rand_index, hierarchical_cluster, kmeans_cluster, ClusterAssignment,
    ClusterConfig,
};
use clusterfactor::factor::{build_factor_returns, fit_ols};
use clusterfactor::ingest::{
    HeadlineRecord, ReturnsPanel, SectorMap, TradingCalendar, CANONICAL_SECTOR_CODES,
};
use clusterfactor::similarity::{return_correlation, tfidf_dedup};
use clusterfactor::stats::{paired_t_test, t_cdf};
use clusterfactor::synth::{generate_market, perturb_assignment, World, WorldSpec};

fn pass(n: usize, msg: &str) {
    println!("criterion {n}: PASS — {msg}");
}

fn check(n: usize, ok: bool, msg: &str) {
    assert!(ok, "criterion {n}: FAIL — {msg}");
}

fn weekday_calendar(start: NaiveDate, n: usize) -> TradingCalendar {
    let mut dates = Vec::with_capacity(n);
    let mut d = start;
    while dates.len() < n {
        if d.weekday().num_days_from_monday() < 5 {
            dates.push(d);
        }
        d += chrono::Duration::days(1);
    }
    TradingCalendar::new(dates).unwrap()
}

fn sector_map_from_labels(labels: &BTreeMap<String, usize>, effective: NaiveDate) -> SectorMap {
    let mut map = SectorMap::new();
    for (t, &l) in labels {
        map.insert(effective, t, CANONICAL_SECTOR_CODES[l % 11]).unwrap();
    }
    map
}

// ---------------------------------------------------------------------------
// criterion 1: OLS oracle equivalence

/// Least squares via modified Gram-Schmidt QR, written independently of the
/// library's normal-equation solver.
fn qr_solve(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let p = x[0].len();
    let mut q: Vec<Vec<f64>> = x.to_vec();
    let mut r = vec![vec![0.0f64; p]; p];
    for j in 0..p {
        for i in 0..j {
            let dot: f64 = (0..n).map(|t| q[t][i] * q[t][j]).sum();
            r[i][j] = dot;
            for t in 0..n {
                q[t][j] -= dot * q[t][i];
            }
        }
        let norm: f64 = (0..n).map(|t| q[t][j] * q[t][j]).sum::<f64>().sqrt();
        r[j][j] = norm;
        for t in 0..n {
            q[t][j] /= norm;
        }
    }
    let qty: Vec<f64> = (0..p).map(|j| (0..n).map(|t| q[t][j] * y[t]).sum()).collect();
    let mut beta = vec![0.0f64; p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in (i + 1)..p {
            s -= r[i][j] * beta[j];
        }
        beta[i] = s / r[i][i];
    }
    beta
}

#[test]
fn criterion_01_ols_matches_pseudo_inverse_oracle() {
    let started = Instant::now();
    let k = 11;
    let n_days = 21;
    let cal = weekday_calendar("2023-01-02".parse().unwrap(), n_days);
    let mut tickers: Vec<String> = (0..k).map(|c| format!("F{c:02}")).collect();
    tickers.push("TGT".into());
    let labels: BTreeMap<String, usize> =
        (0..k).map(|c| (format!("F{c:02}"), c)).collect();

    let mut worst = 0.0f64;
    for inst in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let returns: Vec<Option<f64>> = (0..n_days * (k + 1))
            .map(|_| Some(normal.sample(&mut rng)))
            .collect();
        let membership = vec![true; n_days * (k + 1)];
        let panel =
            ReturnsPanel::from_parts(cal.clone(), tickers.clone(), returns, membership)
                .unwrap();
        // one singleton cluster per proxy ticker: factor c is exactly F{c}'s return
        let assignment =
            ClusterAssignment::new(cal.date(n_days - 1), "oracle", k, labels.clone())
                .unwrap();
        let factors = build_factor_returns(&panel, &assignment, 0..=(n_days - 1)).unwrap();
        let model = fit_ols(&panel, &factors, "TGT", 0..=(n_days - 1)).unwrap();

        let tgt = panel.ticker_index("TGT").unwrap();
        let x: Vec<Vec<f64>> = (0..n_days)
            .map(|d| {
                let mut row = vec![1.0];
                row.extend(factors.row(d).unwrap());
                row
            })
            .collect();
        let y: Vec<f64> = (0..n_days).map(|d| panel.ret(d, tgt).unwrap()).collect();
        let oracle = qr_solve(&x, &y);
        worst = worst.max((model.alpha - oracle[0]).abs());
        for c in 0..k {
            worst = worst.max((model.betas[c] - oracle[c + 1]).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(1, worst < 1e-8, &format!("max |ols - qr oracle| = {worst:.3e}"));
    check(1, secs < 5.0, &format!("runtime {secs:.2}s exceeds 5s"));
    pass(1, &format!("fit_ols vs QR pseudo-inverse, 100 instances, max dev {worst:.2e}, {secs:.2}s"));
}

// ---------------------------------------------------------------------------
// criterion 2: clustering recovery

#[test]
fn criterion_02_clustering_recovers_planted_partition() {
    let started = Instant::now();
    let mut good = 0;
    for seed in 0..10u64 {
        let spec = WorldSpec {
            n_stocks: 110,
            n_clusters: 11,
            n_days: 120,
            factor_vol: 1.0,
            idio_vol: 0.2,
            seed: 4000 + seed,
            ..Default::default()
        };
        let w = generate_market(&spec).unwrap();
        let as_of = w.panel.calendar().date(119);
        let sim = return_correlation(&w.panel, as_of, 24).unwrap();
        let truth = w.true_assignment(as_of).unwrap();
        let cfg = ClusterConfig { k: 11, seed, ..Default::default() };
        let km = adjusted_rand_index(&kmeans_cluster(&sim, &cfg).unwrap(), &truth);
        let hc = adjusted_rand_index(&hierarchical_cluster(&sim, &cfg).unwrap(), &truth);
        if km >= 0.99 && hc >= 0.99 {
            good += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(2, good >= 9, &format!("ARI >= 0.99 on only {good}/10 seeds"));
    check(2, secs < 30.0, &format!("runtime {secs:.2}s exceeds 30s"));
    pass(2, &format!("kmeans+hierarchical ARI >= 0.99 on {good}/10 seeds, {secs:.2}s"));
}

// ---------------------------------------------------------------------------
// criterion 3: ordering reproduction on a planted world

fn avg_rmse_for(w: &World, sectors: &SectorMap, method: &str, seed: u64) -> f64 {
    let cal = w.panel.calendar();
    let cfg = BacktestConfig {
        start: cal.date(90),
        end: cal.date(cal.len() - 1),
        methods: vec![MethodSpec::parse(method).unwrap()],
        k: 11,
        estimation_days: 21,
        seed,
    };
    let series = run_backtest(&w.panel, sectors, &w.embeddings, &cfg).unwrap();
    aggregate_report(&series).rows[0].avg_rmse
}

#[test]
fn criterion_03_returns_clustering_beats_noisy_sectors_beats_random() {
    let started = Instant::now();
    let mut gap_a = 0; // returns < perturbed sectors
    let mut gap_b = 0; // perturbed sectors < random
    for seed in 0..5u64 {
        let spec = WorldSpec {
            n_stocks: 100,
            n_clusters: 11,
            n_days: 756,
            factor_vol: 1.0,
            idio_vol: 1.0,
            seed: 7000 + seed,
            ..Default::default()
        };
        let w = generate_market(&spec).unwrap();
        let cal = w.panel.calendar();
        let truth = w.true_assignment(cal.date(0)).unwrap();
        let perturbed = perturb_assignment(&truth, 0.25, 31 + seed);
        let sectors = sector_map_from_labels(&perturbed.labels, cal.date(0));

        let r_returns = avg_rmse_for(&w, &sectors, "returns_hierarchical_12w", seed);
        let r_sector = avg_rmse_for(&w, &sectors, "gics_sector_tracking", seed);
        let r_random = avg_rmse_for(&w, &sectors, "random", seed);
        if r_returns < r_sector {
            gap_a += 1;
        }
        if r_sector < r_random {
            gap_b += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(3, gap_a >= 4, &format!("returns < perturbed-sector on only {gap_a}/5 seeds"));
    check(3, gap_b >= 4, &format!("perturbed-sector < random on only {gap_b}/5 seeds"));
    check(3, secs < 300.0, &format!("runtime {secs:.2}s exceeds 5min"));
    pass(3, &format!(
        "RMSE ordering returns < 25%-perturbed sectors on {gap_a}/5, sectors < random on {gap_b}/5, {secs:.1}s"
    ));
}

// ---------------------------------------------------------------------------
// criterion 4: noiseless sanity

#[test]
fn criterion_04_noiseless_world_returns_methods_near_exact() {
    let spec = WorldSpec {
        n_stocks: 100,
        n_clusters: 11,
        n_days: 220,
        factor_vol: 1.0,
        idio_vol: 0.0,
        seed: 42,
        ..Default::default()
    };
    let w = generate_market(&spec).unwrap();
    let cal = w.panel.calendar();
    let truth = w.true_assignment(cal.date(0)).unwrap();
    let sectors = sector_map_from_labels(&truth.labels, cal.date(0));
    let methods: Vec<MethodSpec> = MethodSpec::full_roster()
        .into_iter()
        .filter(|m| m.method_id.starts_with("returns_"))
        .collect();
    assert_eq!(methods.len(), 8);
    let cfg = BacktestConfig {
        start: cal.date(145),
        end: cal.date(219),
        methods,
        k: 11,
        estimation_days: 21,
        seed: 1,
    };
    let series = run_backtest(&w.panel, &sectors, &w.embeddings, &cfg).unwrap();
    let mut worst = 0.0f64;
    let mut days = 0;
    for s in series.values() {
        for &r in &s.rmse {
            worst = worst.max(r);
            days += 1;
        }
    }
    check(4, worst < 1e-6, &format!("max daily RMSE {worst:.3e} with idio_vol=0"));
    pass(4, &format!("all 8 returns methods, {days} (method,day) cells, max RMSE {worst:.2e}"));
}

// ---------------------------------------------------------------------------
// criterion 5: rmse >= mae everywhere

#[test]
fn criterion_05_rmse_dominates_mae_over_full_run() {
    let spec = WorldSpec {
        n_stocks: 66,
        n_clusters: 11,
        n_days: 220,
        factor_vol: 1.0,
        idio_vol: 1.0,
        seed: 9,
        ..Default::default()
    };
    let w = generate_market(&spec).unwrap();
    let cal = w.panel.calendar();
    let truth = w.true_assignment(cal.date(0)).unwrap();
    let sectors = sector_map_from_labels(&truth.labels, cal.date(0));
    let cfg = BacktestConfig {
        start: cal.date(145),
        end: cal.date(219),
        methods: MethodSpec::full_roster(),
        k: 11,
        estimation_days: 21,
        seed: 2,
    };
    let series = run_backtest(&w.panel, &sectors, &w.embeddings, &cfg).unwrap();
    let mut cells = 0;
    let mut violations = 0;
    for s in series.values() {
        for (r, m) in s.rmse.iter().zip(&s.mae) {
            cells += 1;
            if r < m {
                violations += 1;
            }
        }
    }
    check(5, violations == 0, &format!("{violations}/{cells} cells with rmse < mae"));
    pass(5, &format!("rmse >= mae on all {cells} (method,day) cells across 17 methods"));
}

// ---------------------------------------------------------------------------
// criterion 6: t-test calibration and df=1 closed form

#[test]
fn criterion_06_t_test_null_calibration_and_cauchy_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let trials = 10_000;
    let n = 30;
    let mut rejections = 0;
    for _ in 0..trials {
        // two methods with identically distributed errors: the null holds
        let a: Vec<Option<f64>> = (0..n).map(|_| Some(normal.sample(&mut rng))).collect();
        let b: Vec<Option<f64>> = (0..n).map(|_| Some(normal.sample(&mut rng))).collect();
        let res = paired_t_test("a", "b", &a, &b).unwrap();
        if res.p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    check(6, (rate - 0.05).abs() <= 0.01, &format!("null rejection rate {rate:.4}"));

    // df=1 Student t is Cauchy: F(x) = 1/2 + atan(x)/pi
    let mut worst = 0.0f64;
    for i in 0..20 {
        let x = -5.0 + 0.5263157894736842 * i as f64; // 20 points on [-5, 5]
        let exact = 0.5 + x.atan() / std::f64::consts::PI;
        worst = worst.max((t_cdf(x, 1) - exact).abs());
    }
    check(6, worst < 1e-10, &format!("df=1 closed-form deviation {worst:.3e}"));
    pass(6, &format!("null rejection rate {rate:.4} in [0.04,0.06]; df=1 max dev {worst:.2e}"));
}

// ---------------------------------------------------------------------------
// criterion 7: dedup contract

/// Brute-force TF-IDF (dense vectors over the sorted vocabulary) plus greedy
/// scan, iterated to a fixed point; written independently of the library.
fn dedup_oracle(texts: &[String], threshold: f64) -> Vec<usize> {
    fn tokens(t: &str) -> Vec<String> {
        t.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }
    let mut alive: Vec<usize> = (0..texts.len()).collect();
    loop {
        let docs: Vec<Vec<String>> = alive.iter().map(|&i| tokens(&texts[i])).collect();
        let mut vocab: Vec<String> = docs.iter().flatten().cloned().collect();
        vocab.sort();
        vocab.dedup();
        let n = docs.len() as f64;
        let df: Vec<f64> = vocab
            .iter()
            .map(|t| docs.iter().filter(|d| d.contains(t)).count() as f64)
            .collect();
        let vecs: Vec<Vec<f64>> = docs
            .iter()
            .map(|d| {
                vocab
                    .iter()
                    .zip(&df)
                    .map(|(t, &dfv)| {
                        let tf = d.iter().filter(|x| *x == t).count() as f64;
                        tf * (((1.0 + n) / (1.0 + dfv)).ln() + 1.0)
                    })
                    .collect()
            })
            .collect();
        let cosine = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
        };
        let mut survivors: Vec<usize> = Vec::new();
        for pos in 0..docs.len() {
            if !survivors.iter().any(|&s| cosine(&vecs[s], &vecs[pos]) > threshold) {
                survivors.push(pos);
            }
        }
        if survivors.len() == alive.len() {
            return alive;
        }
        alive = survivors.into_iter().map(|p| alive[p]).collect();
    }
}

#[test]
fn criterion_07_dedup_matches_greedy_oracle_and_is_idempotent() {
    let date: NaiveDate = "2022-06-01".parse().unwrap();
    let rec = |text: &str| HeadlineRecord::new(date, "AAA", text, 100, "pr").unwrap();

    // 5-document fixture: 1 and 2 are near-duplicates, 4 echoes 1, 3 and 5 distinct
    let texts = [
        "acme beats quarterly earnings estimates".to_string(),
        "acme beats quarterly earnings estimates again".to_string(),
        "regulator opens probe into widget pricing".to_string(),
        "acme earnings beat quarterly estimates".to_string(),
        "chief executive announces retirement plans".to_string(),
    ];
    let records: Vec<HeadlineRecord> = texts.iter().map(|t| rec(t)).collect();
    let kept = tfidf_dedup(records.clone(), 0.3);
    let kept_texts: Vec<&str> = kept.iter().map(|r| r.text.as_str()).collect();
    let oracle = dedup_oracle(&texts, 0.3);
    let oracle_texts: Vec<&str> = oracle.iter().map(|&i| texts[i].as_str()).collect();
    check(
        7,
        kept_texts == oracle_texts,
        &format!("survivors {kept_texts:?} != oracle {oracle_texts:?}"),
    );

    // idempotence on 100 random fixtures
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let vocab = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "theta", "kappa"];
    for fixture in 0..100 {
        let n_docs = rng.gen_range(2..9);
        let records: Vec<HeadlineRecord> = (0..n_docs)
            .map(|_| {
                let len = rng.gen_range(1..6);
                let words: Vec<&str> =
                    (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
                rec(&words.join(" "))
            })
            .collect();
        let once = tfidf_dedup(records, 0.3);
        let twice = tfidf_dedup(once.clone(), 0.3);
        check(7, once == twice, &format!("fixture {fixture} not idempotent"));
    }
    pass(7, "survivor set matches brute-force greedy oracle; idempotent on 100 random fixtures");
}

// ---------------------------------------------------------------------------
// criterion 8: no look-ahead

#[test]
fn criterion_08_future_perturbation_leaves_past_metrics_bit_identical() {
    let spec = WorldSpec {
        n_stocks: 44,
        n_clusters: 4,
        n_days: 160,
        factor_vol: 1.0,
        idio_vol: 1.0,
        seed: 88,
        ..Default::default()
    };
    let w = generate_market(&spec).unwrap();
    let cal = w.panel.calendar();
    let truth = w.true_assignment(cal.date(0)).unwrap();
    let sectors = sector_map_from_labels(&truth.labels, cal.date(0));
    let cfg = BacktestConfig {
        start: cal.date(45),
        end: cal.date(159),
        methods: vec![
            MethodSpec::parse("returns_kmeans_4w").unwrap(),
            MethodSpec::parse("embedding_4w_hierarchical").unwrap(),
            MethodSpec::parse("gics_sector_tracking").unwrap(),
            MethodSpec::parse("random").unwrap(),
        ],
        k: 4,
        estimation_days: 21,
        seed: 5,
    };
    let baseline = run_backtest(&w.panel, &sectors, &w.embeddings, &cfg).unwrap();

    for &(day, ticker, bump) in &[(120usize, 7usize, 5.0f64), (130, 0, -3.0), (152, 40, 9.0)] {
        let cutoff = cal.date(day);
        let orig = w.panel.ret(day, ticker).unwrap_or(0.0);
        let mutated = w.panel.with_return(day, ticker, Some(orig + bump));
        let rerun = run_backtest(&mutated, &sectors, &w.embeddings, &cfg).unwrap();
        for (id, base) in &baseline {
            let alt = &rerun[id];
            assert_eq!(base.dates, alt.dates);
            for (pos, d) in base.dates.iter().enumerate() {
                if *d >= cutoff {
                    continue;
                }
                let same = base.rmse[pos].to_bits() == alt.rmse[pos].to_bits()
                    && base.mae[pos].to_bits() == alt.mae[pos].to_bits()
                    && (0..w.panel.n_tickers()).all(|t| {
                        base.error(pos, t).map(f64::to_bits)
                            == alt.error(pos, t).map(f64::to_bits)
                    });
                check(
                    8,
                    same,
                    &format!("{id} metrics on {d} changed after perturbing {cutoff}"),
                );
            }
        }
    }
    pass(8, "3 future perturbations, all earlier (method,day) metrics bit-identical");
}

// ---------------------------------------------------------------------------
// criterion 9: end-to-end determinism via the CLI

#[test]
fn criterion_09_cli_pipeline_is_byte_reproducible_at_any_jobs() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_clusterfactor");
    let t = tempfile::tempdir().unwrap();
    let run_cli = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().expect("spawn");
        assert!(
            out.status.success(),
            "criterion 9: FAIL — {:?}: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };

    let mut captured: Vec<Vec<Vec<u8>>> = Vec::new();
    for (tag, jobs) in [("one", "1"), ("two", "3")] {
        let data = t.path().join(format!("data_{tag}"));
        let run = t.path().join(format!("run_{tag}"));
        run_cli(&[
            "generate", "--seed", "17", "--stocks", "44", "--clusters", "4",
            "--days", "250", "--out", data.to_str().unwrap(),
        ]);
        // preprocess pass-through canonicalizes the embeddings file in place
        let emb = data.join("embeddings.csv");
        let emb2 = data.join("embeddings2.csv");
        run_cli(&[
            "preprocess", "--embeddings-in", emb.to_str().unwrap(),
            "--out", emb2.to_str().unwrap(),
        ]);
        std::fs::rename(&emb2, &emb).unwrap();
        run_cli(&[
            "backtest", "--seed", "17", "--jobs", jobs,
            "--data", data.to_str().unwrap(),
            "--methods",
            "returns_kmeans_4w,returns_hierarchical_1w,embedding_4w_kmeans,gics_sector_tracking,random",
            "--k", "4", "--start", "2022-05-02",
            "--out", run.to_str().unwrap(),
        ]);
        let ttest = run_cli(&[
            "ttest", "--run", run.to_str().unwrap(),
            "--method-a", "returns_kmeans_4w", "--method-b", "random",
        ]);
        let mut files: Vec<Vec<u8>> = vec![
            std::fs::read(data.join("returns.csv")).unwrap(),
            std::fs::read(data.join("embeddings.csv")).unwrap(),
            std::fs::read(run.join("report.csv")).unwrap(),
            std::fs::read(run.join("daily.csv")).unwrap(),
            std::fs::read(run.join("errors_returns_kmeans_4w.csv")).unwrap(),
            std::fs::read(run.join("errors_random.csv")).unwrap(),
        ];
        files.push(ttest);
        captured.push(files);
    }
    check(
        9,
        captured[0] == captured[1],
        "pipeline outputs differ between --jobs 1 and --jobs 3",
    );
    pass(9, "generate/preprocess/backtest/ttest byte-identical across --jobs settings");
}

// ---------------------------------------------------------------------------
// criterion 10: scale

#[test]
fn criterion_10_scale_500_stocks_3_years_full_roster() {
    let spec = WorldSpec {
        n_stocks: 500,
        n_clusters: 11,
        n_days: 756,
        factor_vol: 1.0,
        idio_vol: 1.0,
        seed: 10,
        ..Default::default()
    };
    let started = Instant::now();
    let w = generate_market(&spec).unwrap();
    let cal = w.panel.calendar();
    let truth = w.true_assignment(cal.date(0)).unwrap();
    let sectors = sector_map_from_labels(&truth.labels, cal.date(0));
    let cfg = BacktestConfig {
        start: cal.date(145),
        end: cal.date(755),
        methods: MethodSpec::full_roster(),
        k: 11,
        estimation_days: 21,
        seed: 3,
    };
    let series = run_backtest(&w.panel, &sectors, &w.embeddings, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert_eq!(series.len(), 17);
    check(10, secs < 1800.0, &format!("runtime {secs:.1}s exceeds 30min"));
    pass(10, &format!("500 stocks x 3 years x 17 methods in {secs:.1}s"));
}
