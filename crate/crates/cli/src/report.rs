use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::PairArgs;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub metric: String,
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Rows without a score (unreadable gold, scoring errors).
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convert_failed: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unmatched_pred: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unmatched_gold: Vec<String>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Summary of the numeric `metric` field over report rows.
pub fn summarize_rows(rows: &[Map<String, Value>], metric: &str) -> Summary {
    let scores: Vec<f64> = rows.iter().filter_map(|r| r.get(metric).and_then(Value::as_f64)).collect();
    let convert_failed = rows
        .iter()
        .any(|r| r.contains_key("convert_failed"))
        .then(|| rows.iter().filter(|r| r.get("convert_failed") == Some(&Value::Bool(true))).count());
    Summary {
        metric: metric.to_string(),
        count: scores.len(),
        mean: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
        median: median(&scores),
        failures: rows.len() - scores.len(),
        convert_failed,
        unmatched_pred: Vec::new(),
        unmatched_gold: Vec::new(),
    }
}

fn fmt_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

/// Human-readable table on standard error, scores as percentages.
pub fn print_table(summaries: &[Summary]) {
    eprintln!("{:<10} {:>9} {:>9} {:>6} {:>8}", "metric", "mean", "median", "count", "failures");
    for s in summaries {
        eprintln!("{:<10} {:>9} {:>9} {:>6} {:>8}", s.metric, fmt_percent(s.mean), fmt_percent(s.median), s.count, s.failures);
    }
}

/// Writes JSONL rows (to `-o` or stdout) and the summary file, then prints
/// the table.
pub fn write_report(args: &PairArgs, rows: &[Map<String, Value>], summaries: &[Summary]) -> Result<()> {
    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let summary_path = args.summary.clone().or_else(|| args.output.as_ref().map(|o| summary_path_for(o)));
    if let Some(path) = summary_path {
        let value = if summaries.len() == 1 {
            serde_json::to_value(&summaries[0])?
        } else {
            serde_json::to_value(summaries)?
        };
        fs::write(&path, serde_json::to_string_pretty(&value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print_table(summaries);
    Ok(())
}

pub fn summary_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    output.with_file_name(name)
}

#[derive(Args)]
pub struct SummarizeArgs {
    /// JSONL report written by an `eval` subcommand.
    report: PathBuf,
    /// Field to aggregate (default: the first known metric present).
    #[arg(long)]
    metric: Option<String>,
}

const KNOWN_METRICS: [&str; 5] = ["tedn", "omr_ned", "cer", "ser", "ler"];

pub fn summarize(args: &SummarizeArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let value: Value = serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        match value {
            Value::Object(map) => rows.push(map),
            _ => bail!("line {} is not a JSON object", i + 1),
        }
    }
    let metrics: Vec<String> = match &args.metric {
        Some(m) => vec![m.clone()],
        None => KNOWN_METRICS
            .iter()
            .filter(|m| rows.iter().any(|r| r.contains_key(**m)))
            .map(|m| m.to_string())
            .collect(),
    };
    if metrics.is_empty() {
        bail!("no known metric field in {}", args.report.display());
    }
    let summaries: Vec<Summary> = metrics.iter().map(|m| summarize_rows(&rows, m)).collect();
    let value = if summaries.len() == 1 { serde_json::to_value(&summaries[0])? } else { serde_json::to_value(&summaries)? };
    println!("{}", serde_json::to_string_pretty(&value)?);
    print_table(&summaries);
    Ok(())
}
