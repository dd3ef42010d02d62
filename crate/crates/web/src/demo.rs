use mtc_core::dataset::{is_tls_record_start, LabeledCorpus, LabeledSession};
use mtc_core::eval::{run_cv, run_zero_day, EvalData, ModelPlugin, Task, ZeroDayOptions};
use mtc_core::features::{extract_img28, extract_stats, ExtractorConfig, Representation, STATS_NAMES};
use mtc_core::models::{ForestParams, ModelSpec};
use mtc_core::synth::{synth_corpus, SynthConfig};
use serde::Serialize;

/// Largest corpus the page will generate.
pub const MAX_PER_CLASS: usize = 400;

fn config(per_class: usize, seed: u32) -> Result<SynthConfig, String> {
    if per_class == 0 || per_class > MAX_PER_CLASS {
        return Err(format!("sessions per class must lie in 1..={MAX_PER_CLASS}"));
    }
    Ok(SynthConfig {
        sessions_per_class: per_class,
        short_sessions: 0,
        dns_sessions: 0,
        seed: u64::from(seed),
        ..SynthConfig::planted_default()
    })
}

fn corpus(per_class: usize, seed: u32) -> Result<LabeledCorpus, String> {
    Ok(synth_corpus(&config(per_class, seed)?))
}

fn forest(trees: usize) -> Result<ModelPlugin, String> {
    if trees == 0 {
        return Err("at least one tree".into());
    }
    Ok(ModelPlugin::native(ModelSpec::Rf(ForestParams {
        n_trees: trees,
        ..ForestParams::random_forest()
    })))
}

#[derive(Serialize)]
struct ClassInfo {
    family: String,
    label: String,
    /// `[start, end, low, high]` per planted region.
    plants: Vec<[usize; 4]>,
}

pub fn classes() -> String {
    let info: Vec<ClassInfo> = SynthConfig::planted_default()
        .classes
        .iter()
        .map(|c| ClassInfo {
            family: c.family.clone(),
            label: c.label.to_string(),
            plants: c
                .plants
                .iter()
                .map(|p| [p.start, p.start + p.len, usize::from(p.low), usize::from(p.high)])
                .collect(),
        })
        .collect();
    serde_json::to_string(&info).expect("serializable")
}

fn pick(class: usize, index: usize, seed: u32) -> Result<LabeledSession, String> {
    let cfg = config(index + 1, seed)?;
    let family = cfg
        .classes
        .get(class)
        .ok_or_else(|| format!("class {class} out of range"))?
        .family
        .clone();
    synth_corpus(&cfg)
        .sessions
        .into_iter()
        .filter(|s| s.family == family)
        .nth(index)
        .ok_or_else(|| format!("no session {index} for {family}"))
}

/// The IMG28 view of one planted session as 784 grey levels.
pub fn session_image(class: usize, index: usize, seed: u32) -> Result<Vec<u8>, String> {
    let s = pick(class, index, seed)?;
    let t = extract_img28(&s.session).map_err(|e| e.to_string())?;
    Ok(t.values.iter().map(|v| (v * 255.0).round() as u8).collect())
}

#[derive(Serialize)]
struct Summary {
    family: String,
    session_id: String,
    packets: usize,
    payload_bytes: u64,
    tls: bool,
    stats: Vec<(&'static str, f32)>,
}

pub fn session_summary(class: usize, index: usize, seed: u32) -> Result<String, String> {
    let s = pick(class, index, seed)?;
    let stats = extract_stats(&s.session);
    let summary = Summary {
        family: s.family.clone(),
        session_id: s.session_id.to_hex(),
        packets: s.session.packets.len(),
        payload_bytes: s.session.total_payload_bytes,
        tls: s.session.packets.iter().any(|p| is_tls_record_start(&p.payload)),
        stats: STATS_NAMES.iter().copied().zip(stats.values).collect(),
    };
    Ok(serde_json::to_string(&summary).expect("serializable"))
}

#[derive(Serialize)]
struct CvView {
    task: &'static str,
    classes: Vec<String>,
    sessions: usize,
    accuracy: f64,
    macro_f1: f64,
    fold_accuracy: Vec<f64>,
    confusion: Vec<Vec<u64>>,
}

/// Random-forest cross-validation on a freshly generated planted corpus.
pub fn cross_validate(
    per_class: usize,
    trees: usize,
    folds: usize,
    family_task: bool,
    seed: u32,
) -> Result<String, String> {
    let plugin = forest(trees)?;
    let data = EvalData::from_corpus(
        &corpus(per_class, seed)?,
        Representation::Raw784,
        &ExtractorConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let task = if family_task { Task::Family } else { Task::Binary };
    let r = run_cv(&data, &plugin, task, folds, u64::from(seed)).map_err(|e| e.to_string())?;
    let view = CvView {
        task: task.as_str(),
        classes: r.classes,
        sessions: data.len(),
        accuracy: r.mean.accuracy,
        macro_f1: r.mean.macro_f1,
        fold_accuracy: r.folds.iter().map(|f| f.accuracy).collect(),
        confusion: r.mean.confusion.counts,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

#[derive(Serialize)]
struct ZeroDayView {
    family: String,
    accuracy: f64,
    detected: usize,
    n_test: usize,
    n_train: usize,
}

/// Train without `family`, report how much of it is flagged malicious.
pub fn zero_day(family: &str, per_class: usize, trees: usize, seed: u32) -> Result<String, String> {
    let plugin = forest(trees)?;
    let data = EvalData::from_corpus(
        &corpus(per_class, seed)?,
        Representation::Raw784,
        &ExtractorConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let r =
        run_zero_day(&data, &plugin, family, u64::from(seed), ZeroDayOptions::default()).map_err(|e| e.to_string())?;
    let view = ZeroDayView {
        family: r.family,
        accuracy: r.accuracy,
        detected: r.detected,
        n_test: r.n_test,
        n_train: r.n_train,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}
