//! Reference model plugin: the built-in classical models behind the
//! external train/predict contract. Useful for exercising the subprocess
//! boundary and as a template for third-party plugins.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtc_core::eval::{read_prediction_file, write_prediction_file};
use mtc_core::features::{read_label_file, read_tensor_file};
use mtc_core::models::{load_model, save_model, Classifier, ModelSpec};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "mtc-ref-plugin",
    version,
    about = "Classical models behind the mtc plugin contract"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Fit a model and save it
    Train {
        /// Model name: dt, rf, et, extra_trees or knn
        #[arg(long)]
        arch: String,
        #[arg(long)]
        train_x: PathBuf,
        #[arg(long)]
        train_y: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// JSON with target, classes and optional trees / k / max_depth
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write class probabilities for every tensor
    Predict {
        #[arg(long)]
        model_in: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
struct PluginConfig {
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    classes: Option<Vec<String>>,
    #[serde(default)]
    trees: Option<usize>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    max_depth: Option<usize>,
}

fn spec_for(arch: &str, config: &PluginConfig) -> Result<ModelSpec, String> {
    let mut spec = ModelSpec::by_name(arch).ok_or_else(|| format!("unknown arch {arch:?}"))?;
    match &mut spec {
        ModelSpec::Dt(t) => t.max_depth = config.max_depth.or(t.max_depth),
        ModelSpec::Rf(f) | ModelSpec::ExtraTrees(f) => {
            f.n_trees = config.trees.unwrap_or(f.n_trees);
            f.tree.max_depth = config.max_depth.or(f.tree.max_depth);
        }
        ModelSpec::Knn { k } => *k = config.k.unwrap_or(*k),
    }
    Ok(spec)
}

fn train(
    arch: &str,
    train_x: &Path,
    train_y: &Path,
    model_out: &Path,
    seed: u64,
    config: Option<&Path>,
) -> Result<(), String> {
    let config: PluginConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => PluginConfig::default(),
    };
    let x = read_tensor_file(train_x).map_err(|e| e.to_string())?;
    let rows = read_label_file(train_y).map_err(|e| e.to_string())?;
    let column: Vec<&str> = match config.target.as_deref().unwrap_or("label") {
        "label" => rows.iter().map(|r| r.label.as_str()).collect(),
        "family" => rows.iter().map(|r| r.family.as_str()).collect(),
        other => return Err(format!("unknown target {other:?}")),
    };
    let classes = config.classes.clone().unwrap_or_else(|| {
        let mut c: Vec<String> = column.iter().map(|s| s.to_string()).collect();
        c.sort();
        c.dedup();
        c
    });
    let y = column
        .iter()
        .map(|v| {
            classes
                .iter()
                .position(|c| c == v)
                .ok_or_else(|| format!("label {v:?} not among classes {classes:?}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let model = spec_for(arch, &config)?
        .fit(&x, &y, classes.len(), seed)
        .map_err(|e| e.to_string())?;
    save_model(model_out, &model).map_err(|e| e.to_string())
}

fn predict(model_in: &Path, x: &Path, out: &Path) -> Result<(), String> {
    let model = load_model(model_in).map_err(|e| e.to_string())?;
    let x_data = read_tensor_file(x).map_err(|e| e.to_string())?;
    let mut labels_path = x.as_os_str().to_owned();
    labels_path.push(".labels");
    let labels_path = PathBuf::from(labels_path);
    let ids: Vec<String> = if labels_path.is_file() {
        read_label_file(&labels_path)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|r| r.session_id)
            .collect()
    } else {
        (0..x_data.rows()).map(|i| i.to_string()).collect()
    };
    if ids.len() != x_data.rows() {
        return Err(format!("{} ids for {} tensors", ids.len(), x_data.rows()));
    }
    let probs = model.predict_matrix(&x_data).map_err(|e| e.to_string())?;
    write_prediction_file(out, &ids, &probs, model.n_classes()).map_err(|e| format!("{}: {e}", out.display()))?;
    read_prediction_file(out, model.n_classes()).map(|_| ())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.verb {
        Verb::Train {
            arch,
            train_x,
            train_y,
            model_out,
            seed,
            config,
        } => train(&arch, &train_x, &train_y, &model_out, seed, config.as_deref()),
        Verb::Predict { model_in, x, out } => predict(&model_in, &x, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mtc-ref-plugin: {e}");
            ExitCode::from(2)
        }
    }
}
