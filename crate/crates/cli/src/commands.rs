use std::fs;
use std::path::{Path, PathBuf};

use mtc_core::capture::SessionConfig;
use mtc_core::dataset::{
    balance_benign_malware, build_corpus, compute_tls_share, filter_min_payload, filter_noise, load_corpus,
    min_family_filter, save_corpus, BuildOptions, DatasetManifest, Denylist, Label,
};
use mtc_core::eval::{
    read_report, run_cross_dataset, run_cv, run_incremental, run_zero_day, run_zero_day_all, write_predictions_csv,
    write_report, EvalData, ExternalPlugin, IncrementalOptions, IncrementalTask, ModelPlugin, ReportBody, ReportFile,
    SamplePrediction, Task, ZeroDayOptions, MTAB_FAMILY_ORDER, USTCB_FAMILY_ORDER,
};
use mtc_core::features::{ExtractorConfig, Representation};
use mtc_core::models::{ForestParams, ModelSpec, TreeParams};
use mtc_core::synth::{write_synth_corpus, SynthConfig};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Failure;
use crate::render::{self, IncrementalSummary, ZeroDaySummary};
use crate::{
    Command, CommonEvalArgs, CrossArgs, CvArgs, EvalCommand, ExtractorArgs, FeaturizeArgs, IncrementalArgs,
    IncrementalTaskArg, IngestArgs, ModelArgs, NativeModel, OrderPreset, PreprocessArgs, ReportArgs, StatsArgs,
    SynthArgs, TaskArg, ZeroDayArgs,
};

pub fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Stats(a) => stats(a),
        Command::Featurize(a) => featurize(a),
        Command::Eval(EvalCommand::Cv(a)) => cv(a),
        Command::Eval(EvalCommand::ZeroDay(a)) => zero_day(a),
        Command::Eval(EvalCommand::Incremental(a)) => incremental(a),
        Command::Eval(EvalCommand::Cross(a)) => cross(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    for (name, t) in [("--tcp-timeout", a.tcp_timeout), ("--udp-timeout", a.udp_timeout)] {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Usage(format!("{name} must be a positive number of seconds")));
        }
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let options = BuildOptions {
        sessions: SessionConfig::from_secs(a.tcp_timeout, a.udp_timeout),
    };
    let (corpus, report) = build_corpus(&manifest, options)?;
    save_corpus(&corpus, &a.out)?;
    let frames: u64 = report.files.iter().map(|f| f.stats.frames).sum();
    let accepted: u64 = report.files.iter().map(|f| f.stats.accepted).sum();
    println!(
        "{}: {} captures, {frames} frames ({accepted} TCP/UDP), {} sessions -> {}",
        corpus.name,
        report.files.len(),
        corpus.len(),
        a.out.display()
    );
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<(), Failure> {
    let mut corpus = load_corpus(&a.input)?;
    let before = corpus.len();
    println!("input: {before} sessions");
    if a.min_payload > 0 {
        corpus = filter_min_payload(&corpus, a.min_payload);
        println!("min payload {}: {} kept", a.min_payload, corpus.len());
    }
    if !a.no_denylist {
        let denylist = match &a.denylist {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                toml::from_str::<Denylist>(&text).map_err(|e| io_failure(path, e))?
            }
            None => Denylist::default(),
        };
        let (kept, tally) = filter_noise(&corpus, &denylist);
        corpus = kept;
        for (rule, n) in &tally {
            println!("  noise {rule}: {n} removed");
        }
        println!("noise filter: {} kept", corpus.len());
    }
    if let Some(min) = a.min_family {
        corpus = min_family_filter(&corpus, min);
        println!("min family size {min}: {} kept", corpus.len());
    }
    if a.balance {
        corpus = balance_benign_malware(&corpus, a.seed)?;
        println!("balanced (seed {}): {} kept", a.seed, corpus.len());
    }
    println!(
        "output: {} benign, {} malware -> {}",
        corpus.count(Label::Benign),
        corpus.count(Label::Malware),
        a.out.display()
    );
    save_corpus(&corpus, &a.out)?;
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&a.input)?;
    let stats = compute_tls_share(&corpus);
    if a.json {
        let v = json!({
            "dataset": corpus.name,
            "sessions": corpus.len(),
            "stats": stats,
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("stats serialize"));
    } else {
        print!("{}", render::corpus_stats(&corpus.name, &stats));
    }
    Ok(())
}

fn extractor_config(a: &ExtractorArgs) -> Result<ExtractorConfig, Failure> {
    let config = ExtractorConfig { m: a.m, n: a.n, p: a.p };
    config.validate()?;
    Ok(config)
}

fn featurize(a: FeaturizeArgs) -> Result<(), Failure> {
    let config = extractor_config(&a.extractor)?;
    let corpus = load_corpus(&a.input)?;
    let data = EvalData::from_corpus(&corpus, a.extractor.repr, &config)?;
    let labels = a.labels.unwrap_or_else(|| with_suffix(&a.out, ".labels"));
    data.save(&a.out, &labels)?;
    println!(
        "{} tensors of shape {:?} ({}) -> {}, {}",
        data.len(),
        data.x.dims,
        a.extractor.repr,
        a.out.display(),
        labels.display()
    );
    Ok(())
}

fn is_tensor_file(path: &Path) -> Result<bool, Failure> {
    use std::io::Read;
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(f.read_exact(&mut magic).is_ok() && &magic == b"FTNS")
}

/// Load a corpus store (featurized with `extractor`) or a tensor file with
/// its label file. Returns the data and its config description.
fn load_data(path: &Path, labels: Option<&Path>, extractor: &ExtractorArgs) -> Result<(EvalData, Value), Failure> {
    if is_tensor_file(path)? {
        let labels = labels
            .map(Path::to_path_buf)
            .unwrap_or_else(|| with_suffix(path, ".labels"));
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let data = EvalData::from_files(name, path, &labels)?;
        let desc = json!({
            "kind": "tensors",
            "sha256": sha256_file(path)?,
            "labels_sha256": sha256_file(&labels)?,
        });
        Ok((data, desc))
    } else {
        if labels.is_some() {
            return Err(Failure::Usage("--labels only applies to tensor-file inputs".into()));
        }
        let config = extractor_config(extractor)?;
        let corpus = load_corpus(path)?;
        let data = EvalData::from_corpus(&corpus, extractor.repr, &config)?;
        let desc = json!({
            "kind": "corpus",
            "sha256": sha256_file(path)?,
            "repr": extractor.repr,
            "extractor": config_for(extractor.repr, &config),
        });
        Ok((data, desc))
    }
}

/// Only the extractor parameters the representation reads.
fn config_for(repr: Representation, c: &ExtractorConfig) -> Value {
    match repr {
        Representation::DeepMal => json!({ "m": c.m, "n": c.n }),
        Representation::PktSeq => json!({ "p": c.p }),
        _ => json!({}),
    }
}

fn build_plugin(a: &ModelArgs) -> Result<ModelPlugin, Failure> {
    if let Some(exe) = &a.plugin {
        let config = match &a.plugin_config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                match serde_json::from_str::<Value>(&text).map_err(|e| io_failure(path, e))? {
                    Value::Object(map) => map,
                    _ => return Err(Failure::Usage(format!("{}: expected a JSON object", path.display()))),
                }
            }
            None => Default::default(),
        };
        return Ok(ModelPlugin::External(ExternalPlugin {
            exe: exe.clone(),
            prefix_args: a.plugin_args.clone(),
            arch: a.arch.clone(),
            config,
            work_dir: None,
        }));
    }
    let tree = TreeParams {
        max_depth: a.max_depth,
        ..TreeParams::default()
    };
    let forest = |base: ForestParams| ForestParams {
        n_trees: a.trees,
        tree: tree.clone(),
        ..base
    };
    let spec = match a.model {
        NativeModel::Dt => ModelSpec::Dt(tree.clone()),
        NativeModel::Rf => ModelSpec::Rf(forest(ForestParams::random_forest())),
        NativeModel::Et => ModelSpec::ExtraTrees(forest(ForestParams::extra_trees())),
        NativeModel::Knn => ModelSpec::Knn { k: a.k },
    };
    if a.trees == 0 {
        return Err(Failure::Usage("--trees must be at least 1".into()));
    }
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    Ok(ModelPlugin::native(spec))
}

fn check_folds(k: usize) -> Result<(), Failure> {
    if k < 2 {
        return Err(Failure::Usage(format!("--folds {k}: need at least 2")));
    }
    Ok(())
}

/// Write (if requested) and print the report for one experiment.
fn emit(
    experiment: &str,
    config: Value,
    common: &CommonEvalArgs,
    result: &impl serde::Serialize,
) -> Result<(), Failure> {
    let body = ReportBody::new(experiment, config, common.seed, result);
    print!("{}", render::report_text(&body));
    if let Some(out) = &common.out {
        write_report(out, &ReportFile::stamped(body))?;
        println!("report: {}", out.display());
    }
    Ok(())
}

fn emit_predictions(path: Option<&Path>, rows: &[SamplePrediction], n_classes: usize) -> Result<(), Failure> {
    if let Some(path) = path {
        write_predictions_csv(path, rows, n_classes)?;
        println!("predictions: {}", path.display());
    }
    Ok(())
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Binary => Task::Binary,
        TaskArg::Family => Task::Family,
    }
}

fn cv(a: CvArgs) -> Result<(), Failure> {
    check_folds(a.folds)?;
    let plugin = build_plugin(&a.common.model)?;
    let (data, input) = load_data(&a.data.input, a.data.labels.as_deref(), &a.common.extractor)?;
    let task = task_of(a.task);
    let config = json!({
        "experiment": "cv",
        "input": input,
        "model": plugin,
        "task": task,
        "folds": a.folds,
        "seed": a.common.seed,
    });
    let result = run_cv(&data, &plugin, task, a.folds, a.common.seed)?;
    emit("cv", config, &a.common, &result)?;
    emit_predictions(a.predictions.as_deref(), &result.predictions, result.classes.len())
}

fn zero_day(a: ZeroDayArgs) -> Result<(), Failure> {
    let plugin = build_plugin(&a.common.model)?;
    let (data, input) = load_data(&a.data.input, a.data.labels.as_deref(), &a.common.extractor)?;
    let options = ZeroDayOptions { two_sided: a.two_sided };
    let config = json!({
        "experiment": "zero-day",
        "input": input,
        "model": plugin,
        "family": a.family,
        "two_sided": a.two_sided,
        "seed": a.common.seed,
    });
    let families = match &a.family {
        Some(f) => vec![run_zero_day(&data, &plugin, f, a.common.seed, options)?],
        None => {
            if data.malware_families().is_empty() {
                return Err(Failure::Data(format!("dataset {:?} has no malware family", data.name)));
            }
            run_zero_day_all(&data, &plugin, a.common.seed, options)?
        }
    };
    let summary = ZeroDaySummary::new(families);
    emit("zero-day", config, &a.common, &summary)?;
    let rows: Vec<SamplePrediction> = summary.families.iter().flat_map(|r| r.predictions.clone()).collect();
    emit_predictions(a.predictions.as_deref(), &rows, 2)
}

fn incremental(a: IncrementalArgs) -> Result<(), Failure> {
    check_folds(a.folds)?;
    let plugin = build_plugin(&a.common.model)?;
    let (data, input) = load_data(&a.data.input, a.data.labels.as_deref(), &a.common.extractor)?;
    let order: Vec<String> = match a.order_preset {
        Some(OrderPreset::Mtab) => MTAB_FAMILY_ORDER.iter().map(|s| s.to_string()).collect(),
        Some(OrderPreset::Ustcb) => USTCB_FAMILY_ORDER.iter().map(|s| s.to_string()).collect(),
        None if a.order.is_empty() => data.malware_families(),
        None => a.order.clone(),
    };
    if order.is_empty() {
        return Err(Failure::Data(format!("dataset {:?} has no malware family", data.name)));
    }
    let options = IncrementalOptions {
        task: match a.task {
            IncrementalTaskArg::Binary => IncrementalTask::Binary,
            IncrementalTaskArg::Family => IncrementalTask::Family,
            IncrementalTaskArg::Both => IncrementalTask::Both,
        },
        k: a.folds,
        rebalance: !a.no_rebalance,
    };
    let config = json!({
        "experiment": "incremental",
        "input": input,
        "model": plugin,
        "order": order,
        "options": options,
        "seed": a.common.seed,
    });
    let steps = run_incremental(&data, &plugin, &order, a.common.seed, options)?;
    emit("incremental", config, &a.common, &IncrementalSummary { order, steps })
}

fn cross(a: CrossArgs) -> Result<(), Failure> {
    let plugin = build_plugin(&a.common.model)?;
    let (train, train_desc) = load_data(&a.train, None, &a.common.extractor)?;
    let (test, test_desc) = load_data(&a.test, None, &a.common.extractor)?;
    let test_family = a.test_family.clone().unwrap_or_else(|| a.train_family.clone());
    let config = json!({
        "experiment": "cross",
        "train": train_desc,
        "test": test_desc,
        "model": plugin,
        "train_family": a.train_family,
        "test_family": test_family,
        "seed": a.common.seed,
    });
    let result = run_cross_dataset(&train, &test, &plugin, &a.train_family, &test_family, a.common.seed)?;
    emit("cross", config, &a.common, &result)?;
    emit_predictions(a.predictions.as_deref(), &result.predictions, 2)
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let file = read_report(&a.input)?;
    if a.json {
        println!("{}", String::from_utf8(file.body.to_bytes()).expect("JSON is UTF-8"));
    } else {
        print!("{}", render::report_text(&file.body));
        println!("generated at unix time {}", file.generated_at_unix);
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let config = SynthConfig {
        sessions_per_class: a.per_class,
        short_sessions: a.short,
        dns_sessions: a.dns,
        seed: a.seed,
        dataset_name: a.name,
        ..SynthConfig::planted_default()
    };
    let manifest = write_synth_corpus(&config, &a.out).map_err(|e| io_failure(&a.out, e))?;
    println!("{}", manifest.display());
    Ok(())
}
