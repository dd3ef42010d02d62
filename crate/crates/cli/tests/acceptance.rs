//! Acceptance suite: one PASS/FAIL line per criterion, each with its time
//! limit. Exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use mtc_core::capture::{assemble_sessions, parse_capture, Direction, Session, SessionConfig, Transport};
use mtc_core::dataset::{balance_benign_malware, filter_min_payload, filter_noise, Denylist, Label};
use mtc_core::eval::{compute_metrics, ConfusionMatrix, Fraction};
use mtc_core::features::FeatureMatrix;
use mtc_core::models::{fit_forest, fit_knn, fit_tree, Classifier, ForestParams, MaxFeatures, TreeParams};
use mtc_core::synth::random_corpus;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn session_json(s: &Session) -> Value {
    let packets: Vec<Value> = s
        .packets
        .iter()
        .map(|p| {
            json!({
                "ts": p.timestamp_us,
                "dir": match p.direction { Direction::Forward => "fwd", Direction::Backward => "bwd" },
                "flags": p.tcp_flags,
                "payload": p.payload.iter().map(|b| format!("{b:02x}")).collect::<String>(),
            })
        })
        .collect();
    json!({
        "transport": match s.key.transport { Transport::Tcp => "tcp", Transport::Udp => "udp" },
        "endpoint_a": s.key.endpoint_a.to_string(),
        "endpoint_b": s.key.endpoint_b.to_string(),
        "initiator": s.initiator.to_string(),
        "session_index": s.session_index,
        "packets": packets,
    })
}

fn golden() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/golden");
    let expected: Value = serde_json::from_slice(&std::fs::read(dir.join("expected.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let files = expected.as_object().ok_or("expected.json is not an object")?;
    check(files.len() >= 6, || format!("only {} golden captures", files.len()))?;
    let mut sessions = 0;
    for (name, want) in files {
        let parsed = parse_capture(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let st = parsed.stats;
        let stats = json!({
            "frames": st.frames,
            "accepted": st.accepted,
            "skipped_non_ip": st.skipped_non_ip,
            "skipped_fragments": st.skipped_fragments,
            "skipped_other_transport": st.skipped_other_transport,
            "skipped_malformed": st.skipped_malformed,
            "truncated_records": st.truncated_records,
        });
        check(stats == want["stats"], || {
            format!("{name}: stats {stats} != {}", want["stats"])
        })?;
        let got: Vec<Value> = assemble_sessions(parsed.packets, SessionConfig::default())
            .iter()
            .map(session_json)
            .collect();
        sessions += got.len();
        check(Value::Array(got) == want["sessions"], || {
            format!("{name}: session list differs")
        })?;
    }
    Ok(format!("{} captures, {sessions} sessions bit-exact", files.len()))
}

fn preprocessing() -> Outcome {
    let corpus = random_corpus(1000, 2024);
    check(corpus.len() == 1000, || format!("{} sessions generated", corpus.len()))?;
    let denylist = Denylist::default();
    let kept = filter_min_payload(&corpus, 784);
    let (kept, tally) = filter_noise(&kept, &denylist);
    let kept = balance_benign_malware(&kept, 42).map_err(|e| e.to_string())?;
    for s in &kept.sessions {
        check(s.session.total_payload_bytes >= 784, || {
            format!(
                "{} has {} payload bytes",
                s.session_id.to_hex(),
                s.session.total_payload_bytes
            )
        })?;
        if let Some(rule) = denylist.rules.iter().find(|r| r.matches(s)) {
            return Err(format!("{} survived rule {}", s.session_id.to_hex(), rule.name()));
        }
    }
    let (b, m) = (kept.count(Label::Benign), kept.count(Label::Malware));
    check(b == m && b > 0, || format!("{b} benign vs {m} malware"))?;
    let removed: usize = tally.values().sum();
    Ok(format!(
        "1000 -> {} sessions ({removed} denylisted), {b} per label",
        kept.len()
    ))
}

fn ratio(f: Fraction) -> Ratio<u64> {
    if f.den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(f.num, f.den)
    }
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for case in 0..500 {
        let n_classes = rng.random_range(2..=6);
        let len = rng.random_range(1..=300);
        let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..n_classes)).collect();
        // agree with the truth about half the time so every regime occurs
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.random_bool(0.5) {
                    t
                } else {
                    rng.random_range(0..n_classes)
                }
            })
            .collect();
        let classes: Vec<String> = (0..n_classes).map(|c| format!("c{c}")).collect();
        let cm = ConfusionMatrix::from_indices(classes.clone(), &truth, &pred).map_err(|e| e.to_string())?;

        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as u64;
        let acc = ratio(cm.accuracy());
        check(acc == Ratio::new(cm.trace(), cm.total()), || {
            format!("case {case}: accuracy != trace/total")
        })?;
        check(acc == Ratio::new(correct, len as u64), || {
            format!("case {case}: accuracy != correct/n")
        })?;

        let (mut tp_sum, mut pos_sum) = (0u64, 0u64);
        for c in 0..n_classes {
            let tp = (0..len).filter(|&i| truth[i] == c && pred[i] == c).count() as u64;
            let fp = (0..len).filter(|&i| truth[i] != c && pred[i] == c).count() as u64;
            let fn_ = (0..len).filter(|&i| truth[i] == c && pred[i] != c).count() as u64;
            tp_sum += tp;
            pos_sum += tp + fn_;
            let k = cm.binary_counts(c);
            check((k.tp, k.fp, k.fn_) == (tp, fp, fn_), || {
                format!("case {case}: class {c} counts")
            })?;
            let p = ratio(k.precision());
            let r = ratio(k.recall());
            let harmonic = if p + r == Ratio::from_integer(0) {
                Ratio::from_integer(0)
            } else {
                Ratio::from_integer(2) * p * r / (p + r)
            };
            check(ratio(k.f1()) == harmonic, || {
                format!("case {case}: class {c} F1 != harmonic mean")
            })?;
        }
        let micro = ratio(cm.micro_recall());
        check(micro == Ratio::new(tp_sum, pos_sum), || {
            format!("case {case}: micro recall")
        })?;
        check(micro == acc, || format!("case {case}: micro recall != accuracy"))?;

        let t: Vec<&str> = truth.iter().map(|&c| classes[c].as_str()).collect();
        let p: Vec<&str> = pred.iter().map(|&c| classes[c].as_str()).collect();
        let report = compute_metrics(&t, &p, &classes).map_err(|e| e.to_string())?;
        check(report.confusion == cm, || {
            format!("case {case}: string-label confusion differs")
        })?;
    }
    Ok("500 label vectors, all identities exact".into())
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, levels: u32) -> FeatureMatrix {
    let data: Vec<Vec<f32>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(0..levels) as f32).collect())
        .collect();
    FeatureMatrix::from_rows(&data).expect("non-empty rows")
}

/// Every distance computed and fully sorted by (distance, index).
fn brute_neighbours(x: &FeatureMatrix, q: &[f32], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..x.rows())
        .map(|i| {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(q)
                .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                .sum();
            (d.sqrt(), i)
        })
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    all[..k].iter().map(|&(_, i)| i).collect()
}

fn model_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for inst in 0..50 {
        let rows = rng.random_range(10..60);
        let cols = rng.random_range(1..6);
        let n_classes = rng.random_range(2..5);
        let x = random_matrix(&mut rng, rows, cols, 5);
        let y: Vec<usize> = (0..rows).map(|_| rng.random_range(0..n_classes)).collect();
        let k = rng.random_range(1..=7.min(rows));
        let knn = fit_knn(&x, &y, n_classes, k).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let q: Vec<f32> = (0..cols).map(|_| rng.random_range(0..5) as f32).collect();
            let want = brute_neighbours(&x, &q, k);
            let got = knn.neighbours(&q).map_err(|e| e.to_string())?;
            check(got == want, || format!("knn instance {inst}: {got:?} != {want:?}"))?;
            let mut counts = vec![0usize; n_classes];
            want.iter().for_each(|&i| counts[y[i]] += 1);
            let expect: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
            check(knn.predict_proba(&q).map_err(|e| e.to_string())? == expect, || {
                format!("knn instance {inst}: probabilities")
            })?;
        }
    }

    for case in 0..30 {
        let rows = rng.random_range(2..120);
        let x = random_matrix(&mut rng, rows, 4, 4);
        // a label that is a function of the row keeps the data consistent
        let y: Vec<usize> = (0..rows)
            .map(|i| x.row(i).iter().map(|v| *v as usize).fold(7usize, |h, v| h * 31 + v) % 3)
            .collect();
        let tree = fit_tree(&x, &y, 3, &TreeParams::default()).map_err(|e| e.to_string())?;
        for i in 0..rows {
            check(tree.predict(x.row(i)).map_err(|e| e.to_string())? == y[i], || {
                format!("tree case {case}: training row {i} misclassified")
            })?;
        }
    }

    let x = random_matrix(&mut rng, 300, 6, 10);
    let y: Vec<usize> = (0..300).map(|_| rng.random_range(0..3)).collect();
    let tree = fit_tree(&x, &y, 3, &TreeParams::default()).map_err(|e| e.to_string())?;
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        max_features: MaxFeatures::All,
        ..ForestParams::random_forest()
    };
    let forest = fit_forest(&x, &y, 3, &params, 123).map_err(|e| e.to_string())?;
    let probe = random_matrix(&mut rng, 200, 6, 11);
    for i in 0..probe.rows() {
        let a = forest.predict_proba(probe.row(i)).map_err(|e| e.to_string())?;
        let b = tree.predict_proba(probe.row(i)).map_err(|e| e.to_string())?;
        check(a == b, || format!("probe row {i}: forest {a:?} != tree {b:?}"))?;
    }
    Ok("knn 50/50 exact, tree 30/30 consistent sets fitted, 1-tree forest = tree on 200 probes".into())
}

fn mtc(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mtc"))
        .args(args)
        .env_remove("MTC_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "mtc {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("UTF-8 temp path")
}

struct Pipeline {
    dir: TempDir,
    corpus: PathBuf,
}

impl Pipeline {
    fn report(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// The experiments whose reports are checked, as (report file, args).
    fn experiments(&self) -> Vec<(String, Vec<String>)> {
        let corpus = p(&self.corpus).to_string();
        let base = |extra: &[&str]| -> Vec<String> {
            let mut v: Vec<String> = ["eval"].iter().map(|s| s.to_string()).collect();
            v.extend(extra.iter().map(|s| s.to_string()));
            v.extend(["--in".to_string(), corpus.clone(), "--seed".into(), "42".into()]);
            v
        };
        vec![
            (
                "cv-binary.json".into(),
                base(&["cv", "--model", "rf", "--folds", "5", "--task", "binary"]),
            ),
            (
                "cv-family.json".into(),
                base(&["cv", "--model", "rf", "--folds", "5", "--task", "family"]),
            ),
            (
                "zd-charlie.json".into(),
                base(&["zero-day", "--model", "rf", "--family", "Charlie"]),
            ),
            (
                "zd-alpha.json".into(),
                base(&["zero-day", "--model", "rf", "--family", "Alpha"]),
            ),
        ]
    }

    fn run(&self, name: &str, args: &[String]) -> Result<Value, String> {
        let out = self.report(name);
        let mut args: Vec<&str> = args.iter().map(String::as_str).collect();
        args.extend(["--out", p(&out)]);
        mtc(&args)?;
        body(&out)
    }
}

fn body(path: &Path) -> Result<Value, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    Ok(v["body"].clone())
}

fn planted_end_to_end(state: &mut Option<Pipeline>) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let caps = dir.path().join("caps");
    let raw = dir.path().join("raw.mtc");
    let corpus = dir.path().join("corpus.mtc");
    mtc(&["synth", "--out", p(&caps), "--per-class", "400"])?;
    mtc(&["ingest", "--manifest", p(&caps.join("manifest.toml")), "--out", p(&raw)])?;
    mtc(&[
        "preprocess",
        "--in",
        p(&raw),
        "--out",
        p(&corpus),
        "--min-payload",
        "784",
    ])?;
    let pipeline = Pipeline { dir, corpus };
    let mut results = Vec::new();
    for (name, args) in pipeline.experiments() {
        results.push(pipeline.run(&name, &args)?);
    }
    let binary = results[0]["result"]["mean"]["accuracy"]
        .as_f64()
        .ok_or("no binary accuracy")?;
    let family_f1 = results[1]["result"]["mean"]["macro_f1"]
        .as_f64()
        .ok_or("no family macro F1")?;
    let zd = |r: &Value| {
        r["result"]["families"][0]["accuracy"]
            .as_f64()
            .ok_or("no zero-day accuracy")
    };
    let (charlie, alpha) = (zd(&results[2])?, zd(&results[3])?);
    *state = Some(pipeline);
    let summary = format!(
        "binary acc {binary:.4} (>= 0.99), family macro-F1 {family_f1:.4} (>= 0.95), \
         zero-day Charlie {charlie:.4} (>= 0.95), Alpha {alpha:.4} (<= 0.10)"
    );
    check(
        binary >= 0.99 && family_f1 >= 0.95 && charlie >= 0.95 && alpha <= 0.10,
        || summary.clone(),
    )?;
    Ok(summary)
}

fn determinism(state: &mut Option<Pipeline>) -> Outcome {
    let pipeline = state.as_ref().ok_or("end-to-end stage did not produce a corpus")?;
    let mut compared = 0;
    for (name, args) in pipeline.experiments() {
        let first = body(&pipeline.report(&name))?;
        let again = pipeline.run(&format!("rerun-{name}"), &args)?;
        check(first == again, || format!("{name}: report body changed on rerun"))?;
        let a = serde_json::to_vec_pretty(&first).map_err(|e| e.to_string())?;
        let b = serde_json::to_vec_pretty(&again).map_err(|e| e.to_string())?;
        check(a == b, || format!("{name}: body bytes differ"))?;
        compared += 1;
    }
    let plugin_args: Vec<String> = [
        "eval",
        "cv",
        "--in",
        p(&pipeline.corpus),
        "--task",
        "family",
        "--seed",
        "7",
        "--plugin",
        env!("CARGO_BIN_EXE_mtc-ref-plugin"),
        "--arch",
        "rf",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let first = pipeline.run("plugin-1.json", &plugin_args)?;
    let again = pipeline.run("plugin-2.json", &plugin_args)?;
    check(first == again, || "plugin report body changed on rerun".into())?;
    compared += 1;
    Ok(format!(
        "{compared} experiments rerun, bodies byte-identical (incl. subprocess plugin)"
    ))
}

fn main() -> ExitCode {
    let mut state = None;
    type Stage<'a> = Box<dyn FnMut(&mut Option<Pipeline>) -> Outcome + 'a>;
    let criteria: Vec<(&str, f64, Stage)> = vec![
        ("golden-capture parsing", 1.0, Box::new(|_| golden())),
        ("preprocessing contract", 5.0, Box::new(|_| preprocessing())),
        ("metric identities", 1.0, Box::new(|_| metric_identities())),
        ("classical-model oracles", 30.0, Box::new(|_| model_oracles())),
        ("planted-signal end-to-end", 120.0, Box::new(planted_end_to_end)),
        ("determinism", 120.0, Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, limit, mut run) in criteria {
        let start = Instant::now();
        let outcome = run(&mut state);
        let secs = start.elapsed().as_secs_f64();
        let verdict = match outcome {
            Ok(detail) if secs < limit => format!("PASS  {name}: {detail}"),
            Ok(detail) => format!("FAIL  {name}: over time limit; {detail}"),
            Err(why) => format!("FAIL  {name}: {why}"),
        };
        if verdict.starts_with("FAIL") {
            failed += 1;
        }
        println!("{verdict} [{secs:.2} s, limit {limit} s]");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
