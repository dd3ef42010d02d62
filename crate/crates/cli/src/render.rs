use std::fmt::Write;

use mtc_core::dataset::{CorpusStats, LabelStats};
use mtc_core::eval::{CrossResult, CvResult, IncrementalStep, MetricsReport, ReportBody, ZeroDayResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroDaySummary {
    pub families: Vec<ZeroDayResult>,
    /// Unweighted mean over held-out families.
    pub mean_accuracy: f64,
}

impl ZeroDaySummary {
    pub fn new(families: Vec<ZeroDayResult>) -> Self {
        let mean_accuracy = families.iter().map(|r| r.accuracy).sum::<f64>() / families.len().max(1) as f64;
        ZeroDaySummary {
            families,
            mean_accuracy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementalSummary {
    pub order: Vec<String>,
    pub steps: Vec<IncrementalStep>,
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn share(s: &LabelStats) -> String {
    s.tls_share().map(pct).unwrap_or_else(|| "-".into())
}

pub fn corpus_stats(name: &str, stats: &CorpusStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dataset {name}");
    let _ = writeln!(out, "{:<10} {:>9} {:>9}", "label", "sessions", "TLS");
    for (label, s) in [("benign", &stats.benign), ("malware", &stats.malware)] {
        let _ = writeln!(out, "{label:<10} {:>9} {:>9}", s.sessions, share(s));
    }
    if !stats.per_family.is_empty() {
        let _ = writeln!(out, "families:");
        for (family, n) in &stats.per_family {
            let _ = writeln!(out, "  {family:<20} {n:>9}");
        }
    }
    out
}

pub fn metrics(m: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "accuracy {}  macro precision {}  macro recall {}  macro F1 {}",
        pct(m.accuracy),
        pct(m.macro_precision),
        pct(m.macro_recall),
        pct(m.macro_f1)
    );
    let width = m.per_class.iter().map(|c| c.class.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(
        out,
        "  {:<width$} {:>8} {:>9} {:>9} {:>9} {:>9}",
        "class", "support", "precision", "recall", "F1", "accuracy"
    );
    for c in &m.per_class {
        let _ = writeln!(
            out,
            "  {:<width$} {:>8} {:>9} {:>9} {:>9} {:>9}",
            c.class,
            c.support,
            pct(c.precision),
            pct(c.recall),
            pct(c.f1),
            pct(c.accuracy)
        );
    }
    let _ = writeln!(out, "  confusion (rows true, columns predicted):");
    for (class, row) in m.confusion.classes.iter().zip(&m.confusion.counts) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        let _ = writeln!(out, "  {class:<width$} {}", cells.join(""));
    }
    out
}

fn cv_text(r: &CvResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} task, {} folds, classes {:?}", r.task.as_str(), r.k, r.classes);
    for (f, m) in r.folds.iter().enumerate() {
        let _ = writeln!(
            out,
            "  fold {f}: accuracy {}  macro F1 {}",
            pct(m.accuracy),
            pct(m.macro_f1)
        );
    }
    let _ = write!(out, "mean: {}", metrics(&r.mean));
    out
}

fn zero_day_text(r: &ZeroDaySummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>9} {:>9} {:>9}",
        "held-out family", "detected", "sessions", "accuracy"
    );
    for f in &r.families {
        let _ = writeln!(
            out,
            "{:<20} {:>9} {:>9} {:>9}",
            f.family,
            f.detected,
            f.n_test,
            pct(f.accuracy)
        );
        if let Some(m) = &f.two_sided {
            let _ = write!(out, "  two-sided: {}", metrics(m));
        }
    }
    let _ = writeln!(out, "mean accuracy {}", pct(r.mean_accuracy));
    out
}

fn incremental_text(r: &IncrementalSummary) -> String {
    let opt = |x: Option<f64>| x.map(pct).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4} {:<20} {:>8} {:>8} {:>9} {:>9}",
        "step", "added family", "benign", "malware", "binary", "family"
    );
    for s in &r.steps {
        let _ = writeln!(
            out,
            "{:>4} {:<20} {:>8} {:>8} {:>9} {:>9}",
            s.step,
            s.families.last().map(String::as_str).unwrap_or(""),
            s.n_benign,
            s.n_malware,
            opt(s.binary_accuracy),
            opt(s.family_accuracy)
        );
    }
    out
}

fn cross_text(r: &CrossResult) -> String {
    format!(
        "train {}:{} -> test {}:{}: {}/{} detected, accuracy {}\n",
        r.train_dataset,
        r.train_family,
        r.test_dataset,
        r.test_family,
        r.detected,
        r.n_test,
        pct(r.accuracy)
    )
}

/// Human-readable rendering of a report body.
pub fn report_text(body: &ReportBody) -> String {
    let rendered = match body.experiment.as_str() {
        "cv" => serde_json::from_value(body.result.clone()).ok().map(|r| cv_text(&r)),
        "zero-day" => serde_json::from_value(body.result.clone())
            .ok()
            .map(|r| zero_day_text(&r)),
        "incremental" => serde_json::from_value(body.result.clone())
            .ok()
            .map(|r| incremental_text(&r)),
        "cross" => serde_json::from_value(body.result.clone()).ok().map(|r| cross_text(&r)),
        _ => None,
    };
    let mut out = format!(
        "{} ({}), seed {}, config {}\n",
        body.experiment,
        body.tool,
        body.seed,
        &body.fingerprint[..body.fingerprint.len().min(16)]
    );
    out.push_str(&rendered.unwrap_or_else(|| {
        let mut s = serde_json::to_string_pretty(&body.result).unwrap_or_default();
        s.push('\n');
        s
    }));
    out
}
