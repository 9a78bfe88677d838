//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line per
//! checked quantity; run with `--nocapture` to see them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use abduct_rank::classifier::{loss_and_grad, Class, HeadParams};
use abduct_rank::cli::{cmd_correlate, cmd_grid, CorrelateArgs, GridArgs};
use abduct_rank::stats::{read_runs_csv, spearman, t_p_value};
use abduct_rank::synth::SyntheticEncoder;
use abduct_rank::{
    predict_sim, softmax, write_embedding_store, CorrelationReport, EmbeddingRole, EmbeddingStore, StoreKind,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

struct Criterion {
    name: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion {
            name,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, what: &str, ok: bool, detail: impl std::fmt::Display) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {} :: {what}: {detail}", self.name);
        if !ok {
            self.failures.push(what.to_string());
        }
    }

    fn within(&mut self, what: &str, value: f64, lo: f64, hi: f64) {
        self.check(what, (lo..=hi).contains(&value), format!("{value:.6} in [{lo}, {hi}]"));
    }

    fn runtime(&mut self, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.check("runtime", took < limit, format!("{took:.2?} < {limit:?}"));
    }

    fn finish(self) {
        assert!(self.failures.is_empty(), "{} failed: {:?}", self.name, self.failures);
    }
}

fn correlate_fixture(dir: &Path) -> CorrelationReport {
    let out = dir.join("report.json");
    cmd_correlate(&CorrelateArgs {
        runs: fixture("table1.csv"),
        out: out.clone(),
    })
    .unwrap();
    serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap()
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn sort_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    ranks
}

const TABLE1_PEARSON: f64 = 0.625549365039868;
const TABLE1_SPEARMAN: f64 = 0.6654447769226502;

#[test]
fn table1_correlation_reproduction() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = correlate_fixture(dir.path());
    let runs = read_runs_csv(fixture("table1.csv")).unwrap();
    let sim: Vec<f64> = runs.iter().map(|r| r.sim_accuracy).collect();
    let clf: Vec<f64> = runs.iter().map(|r| r.clf_accuracy).collect();

    let mut c = Criterion::new("table1 correlation");
    let oracle_r = brute_pearson(&sim, &clf);
    let oracle_rho = brute_pearson(&sort_ranks(&sim), &sort_ranks(&clf));
    c.check(
        "oracle pin r",
        (oracle_r - TABLE1_PEARSON).abs() < 1e-12,
        format!("{oracle_r:.15}"),
    );
    c.check(
        "oracle pin rho",
        (oracle_rho - TABLE1_SPEARMAN).abs() < 1e-12,
        format!("{oracle_rho:.15}"),
    );
    c.check(
        "implementation matches oracle",
        (report.pearson_r - oracle_r).abs() < 1e-12 && (report.spearman_rho - oracle_rho).abs() < 1e-12,
        format!("r {:.15} rho {:.15}", report.pearson_r, report.spearman_rho),
    );
    c.check("n", report.n == 17, report.n);
    c.within("pearson r", report.pearson_r, 0.64, 0.66);
    c.within("pearson p", report.pearson_p, 0.004, 0.006);
    c.within("spearman rho", report.spearman_rho, 0.66, 0.68);
    c.within("spearman p", report.spearman_p, 0.002, 0.004);
    c.runtime(started, Duration::from_secs(1));
    c.finish();
}

#[test]
fn table1_speedup_reproduction() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = correlate_fixture(dir.path());
    let runs = read_runs_csv(fixture("table1.csv")).unwrap();
    let oracle = runs.iter().map(|r| r.clf_seconds / r.sim_seconds).sum::<f64>() / runs.len() as f64;

    let mut c = Criterion::new("table1 speedup");
    let speedup = report.mean_speedup.unwrap_or(f64::NAN);
    c.check(
        "matches oracle",
        (speedup - oracle).abs() < 1e-9,
        format!("{speedup:.4} vs {oracle:.4}"),
    );
    c.within("mean clf/sim seconds", speedup, 560.0, 680.0);
    c.runtime(started, Duration::from_secs(1));
    c.finish();
}

#[test]
fn gradient_matches_central_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=32);
        let batch_size = rng.random_range(1..=16);
        let head = HeadParams {
            d,
            weights: (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        };
        let xs: Vec<Vec<f32>> = (0..batch_size)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0f32..2.0)).collect())
            .collect();
        let batch: Vec<(&[f32], Class)> = xs
            .iter()
            .map(|x| {
                let class = if rng.random_bool(0.5) {
                    Class::Plausible
                } else {
                    Class::Implausible
                };
                (x.as_slice(), class)
            })
            .collect();
        let (_, grad) = loss_and_grad(&head, &batch).unwrap();
        let loss_at = |head: &HeadParams| loss_and_grad(head, &batch).unwrap().0;

        let mut analytic = grad.weights.clone();
        analytic.extend(grad.bias);
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..2 * d + 2 {
            let mut plus = head.clone();
            let mut minus = head.clone();
            if k < 2 * d {
                plus.weights[k] += h;
                minus.weights[k] -= h;
            } else {
                plus.bias[k - 2 * d] += h;
                minus.bias[k - 2 * d] -= h;
            }
            numeric.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * h));
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = diff / scale(&analytic).max(scale(&numeric)).max(1e-12);
        worst = worst.max(rel);
    }
    let mut c = Criterion::new("gradient finite differences");
    c.check(
        "max relative error over 100 cases",
        worst < 1e-4,
        format!("{worst:.3e} < 1e-4"),
    );
    c.runtime(started, Duration::from_secs(10));
    c.finish();
}

fn write_split(dir: &Path, enc: &SyntheticEncoder, name: &str, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let (store, labels) = enc.generate(n, seed).unwrap();
    let s = dir.join(format!("{name}.emb"));
    let l = dir.join(format!("{name}.labels"));
    write_embedding_store(&store, &s).unwrap();
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&l, text).unwrap();
    (s, l)
}

/// Writes train/dev stores for `models` and a manifest over them.
fn synthetic_manifest(dir: &Path, models: &[(String, f64)], dim: usize, grid: serde_json::Value) -> PathBuf {
    let mut entries = Vec::new();
    for (k, (id, noise)) in models.iter().enumerate() {
        let enc = SyntheticEncoder::new(id.as_str(), dim, *noise, 1000 + k as u64);
        let slug = id.replace('/', "_");
        let (ts, tl) = write_split(dir, &enc, &format!("{slug}-train"), 600, 2000 + k as u64);
        let (ds, dl) = write_split(dir, &enc, &format!("{slug}-dev"), 300, 3000 + k as u64);
        entries.push(serde_json::json!({
            "model_id": id,
            "train_embeddings": ts,
            "train_labels": tl,
            "dev_embeddings": ds,
            "dev_labels": dl,
            "grid": grid,
            "allow_any_lr": true,
        }));
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::json!({ "models": entries }).to_string()).unwrap();
    path
}

fn desk_grid() -> serde_json::Value {
    serde_json::json!([
        {"learning_rate": 0.1, "batch_size": 16},
        {"learning_rate": 0.5, "batch_size": 16},
        {"learning_rate": 0.5, "batch_size": 32},
        {"learning_rate": 1.0, "batch_size": 32},
    ])
}

#[test]
fn desk_scale_synthetic_correlation() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let models: Vec<(String, f64)> = (0..12)
        .map(|k| (format!("synthetic/enc-{k:02}"), 0.05 + 0.14 * k as f64))
        .collect();
    let manifest = synthetic_manifest(dir.path(), &models, 32, desk_grid());
    let out = dir.path().join("grid");
    cmd_grid(
        &GridArgs {
            manifest,
            out: out.clone(),
            seed: 7,
        },
        true,
    )
    .unwrap();
    let report_path = dir.path().join("report.json");
    let table = cmd_correlate(&CorrelateArgs {
        runs: out.join("runs.csv"),
        out: report_path.clone(),
    })
    .unwrap();
    print!("{table}");
    let report: CorrelationReport = serde_json::from_str(&fs::read_to_string(report_path).unwrap()).unwrap();
    let runs = read_runs_csv(out.join("runs.csv")).unwrap();
    let spread = |f: fn(&abduct_rank::ModelRun) -> f64| {
        let v: Vec<f64> = runs.iter().map(f).collect();
        v.iter().copied().fold(f64::MIN, f64::max) - v.iter().copied().fold(f64::MAX, f64::min)
    };

    let mut c = Criterion::new("desk-scale synthetic correlation");
    c.check("models", report.n >= 10, report.n);
    c.check(
        "accuracy spread (sim, clf)",
        spread(|r| r.sim_accuracy) > 10.0 && spread(|r| r.clf_accuracy) > 10.0,
        format!(
            "{:.1} / {:.1} points",
            spread(|r| r.sim_accuracy),
            spread(|r| r.clf_accuracy)
        ),
    );
    c.check(
        "pearson r > 0.5",
        report.pearson_r > 0.5,
        format!("{:.4} (p = {:.2e})", report.pearson_r, report.pearson_p),
    );
    c.runtime(started, Duration::from_secs(120));
    c.finish();
}

fn output_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn cli_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("inputs");
    fs::create_dir_all(&inputs).unwrap();
    let models: Vec<(String, f64)> = (0..3).map(|k| (format!("det-{k}"), 0.2 + 0.4 * k as f64)).collect();
    let manifest = synthetic_manifest(&inputs, &models, 16, desk_grid());
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let train = (inputs.join("det-0-train.emb"), inputs.join("det-0-train.labels"));
    let dev = (inputs.join("det-0-dev.emb"), inputs.join("det-0-dev.labels"));

    let commands = |out: &Path| -> Vec<(&'static str, Vec<String>)> {
        vec![
            (
                "predict-sim",
                vec![
                    "predict-sim".into(),
                    "--embeddings".into(),
                    s(&dev.0),
                    "--labels".into(),
                    s(&dev.1),
                    "--per-instance".into(),
                    "--out".into(),
                    s(&out.join("sim.json")),
                ],
            ),
            (
                "train-head",
                vec![
                    "train-head".into(),
                    "--train-embeddings".into(),
                    s(&train.0),
                    "--train-labels".into(),
                    s(&train.1),
                    "--dev-embeddings".into(),
                    s(&dev.0),
                    "--dev-labels".into(),
                    s(&dev.1),
                    "--lr".into(),
                    "5e-5".into(),
                    "--batch-size".into(),
                    "16".into(),
                    "--seed".into(),
                    "11".into(),
                    "--out".into(),
                    s(&out.join("head.json")),
                ],
            ),
            (
                "grid",
                vec![
                    "grid".into(),
                    "--manifest".into(),
                    s(&manifest),
                    "--seed".into(),
                    "11".into(),
                    "--out".into(),
                    s(&out.join("grid")),
                ],
            ),
            (
                "correlate",
                vec![
                    "correlate".into(),
                    "--runs".into(),
                    s(&fixture("table1.csv")),
                    "--out".into(),
                    s(&out.join("report.json")),
                ],
            ),
        ]
    };
    let mut c = Criterion::new("determinism");
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out = dir.path().join(tag);
            let stdouts: Vec<Vec<u8>> = commands(&out)
                .into_iter()
                .map(|(_, args)| {
                    let o = Command::new(env!("CARGO_BIN_EXE_abduct-rank"))
                        .arg("--no-timing")
                        .args(args)
                        .output()
                        .unwrap();
                    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
                    o.stdout
                })
                .collect();
            (output_files(&out), stdouts)
        })
        .collect();
    for (k, (name, _)) in commands(dir.path()).iter().enumerate() {
        let same_stdout = runs[0].1[k] == runs[1].1[k];
        let files_for = |files: &BTreeMap<PathBuf, Vec<u8>>| -> Vec<(PathBuf, Vec<u8>)> {
            let prefix = match *name {
                "predict-sim" => "sim",
                "train-head" => "head",
                "grid" => "grid",
                _ => "report",
            };
            files
                .iter()
                .filter(|(p, _)| p.starts_with(prefix) || p.to_string_lossy().starts_with(prefix))
                .map(|(p, b)| (p.clone(), b.clone()))
                .collect()
        };
        let (a, b) = (files_for(&runs[0].0), files_for(&runs[1].0));
        c.check(
            name,
            !a.is_empty() && a == b && same_stdout,
            format!("{} output files byte-identical", a.len()),
        );
    }
    c.finish();
}

fn invariant(c: &mut Criterion, what: &str, outcome: Result<(), String>) {
    let detail = match &outcome {
        Ok(()) => "1000 cases".to_string(),
        Err(e) => e.clone(),
    };
    c.check(what, outcome.is_ok(), detail);
}

fn runner(seed_byte: u8) -> TestRunner {
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::from_seed(proptest::test_runner::RngAlgorithm::ChaCha, &[seed_byte; 32]),
    )
}

fn check_with<S: Strategy>(
    seed: u8,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(seed).run(&strategy, test).map_err(|e| e.to_string())
}

fn nonzero_vec(d: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-10.0f32..10.0, d).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn store_strategy() -> impl Strategy<Value = EmbeddingStore> {
    (1usize..12, 1usize..6, "[a-z/-]{1,12}", prop::option::of(0u64..100)).prop_flat_map(|(dim, n, id, truncated)| {
        prop::collection::vec(
            prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), dim),
            n * 5,
        )
        .prop_map(move |values| {
            let mut store = EmbeddingStore::new(id.clone(), dim, StoreKind::Pooled).unwrap();
            store.truncated = truncated;
            for (k, v) in values.into_iter().enumerate() {
                store
                    .insert_pooled((k / 5) as u32, EmbeddingRole::ALL[k % 5], v)
                    .unwrap();
            }
            store
        })
    })
}

#[test]
fn invariant_suites() {
    let started = Instant::now();
    let mut c = Criterion::new("invariant suites");

    let sim_scale = check_with(
        1,
        (1usize..32).prop_flat_map(|d| {
            (
                nonzero_vec(d),
                nonzero_vec(d),
                nonzero_vec(d),
                0.001f32..1000.0,
                0.001f32..1000.0,
                0.001f32..1000.0,
            )
        }),
        |(o, h1, h2, a, b, k)| {
            let base = predict_sim(&o, &h1, &h2).unwrap();
            let scale = |v: &[f32], s: f32| v.iter().map(|x| x * s).collect::<Vec<f32>>();
            let scaled = predict_sim(&scale(&o, a), &scale(&h1, b), &scale(&h2, k)).unwrap();
            prop_assert!((scaled.score_h1 - base.score_h1).abs() < 1e-6);
            prop_assert!((scaled.score_h2 - base.score_h2).abs() < 1e-6);
            if (base.score_h1 - base.score_h2).abs() > 1e-5 {
                prop_assert_eq!(scaled.choice, base.choice);
            }
            Ok(())
        },
    );
    invariant(&mut c, "cosine scale-invariance of similarity predictions", sim_scale);

    let softmax_shift = check_with(
        2,
        (prop::collection::vec(-300.0f64..300.0, 1..12), -1e3f64..1e3),
        |(z, shift)| {
            let p = softmax(&z).unwrap();
            let shifted: Vec<f64> = z.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
            Ok(())
        },
    );
    invariant(&mut c, "softmax shift-invariance and normalization", softmax_shift);

    let spearman_monotone = check_with(
        3,
        (3usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(-10_000i32..10_000, n),
                prop::collection::vec(-10_000i32..10_000, n),
            )
        }),
        |(xs, ys)| {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let ys: Vec<f64> = ys.into_iter().map(f64::from).collect();
            prop_assume!(xs.iter().any(|x| *x != xs[0]) && ys.iter().any(|y| *y != ys[0]));
            let base = spearman(&xs, &ys).unwrap();
            let up: Vec<f64> = xs.iter().map(|x| x * x * x + 5.0 * x).collect();
            let down: Vec<f64> = ys.iter().map(|y| -(y * y * y) - 3.0 * y).collect();
            prop_assert_eq!(spearman(&up, &ys).unwrap(), base);
            prop_assert!((spearman(&xs, &down).unwrap() + base).abs() < 1e-12);
            Ok(())
        },
    );
    invariant(&mut c, "spearman monotone-transform invariance", spearman_monotone);

    let p_values = check_with(4, (-1.0f64..1.0, -1.0f64..1.0, 3usize..200), |(r1, r2, n)| {
        let p1 = t_p_value(r1, n).unwrap();
        prop_assert_eq!(p1, t_p_value(-r1, n).unwrap());
        prop_assert!((0.0..=1.0).contains(&p1));
        let p2 = t_p_value(r2, n).unwrap();
        if r1.abs() < r2.abs() {
            prop_assert!(p1 >= p2, "|{}| < |{}| but p {} < {}", r1, r2, p1, p2);
        }
        prop_assert!(t_p_value(r1, n + 1).unwrap() <= p1 + 1e-15);
        Ok(())
    });
    invariant(&mut c, "p-value symmetry and monotonicity", p_values);

    let roundtrip = check_with(5, store_strategy(), |store| {
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        let back = EmbeddingStore::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &store);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
        Ok(())
    });
    invariant(&mut c, "store roundtrip identity", roundtrip);

    c.runtime(started, Duration::from_secs(60));
    c.finish();
}
