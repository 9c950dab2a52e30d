use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use omrkit::metrics::omrned::{extract_measures, omr_ned, CostTable, SYMBOLS_VERSION};
use omrkit::metrics::seq::{error_rate, SymbolLevel};
use omrkit::metrics::ted::{tedn as tedn_score, DEFAULT_MAX_NODES};
use serde_json::{json, Map, Value};

use crate::corpus::{load_score, pair, par_map, SCORE_EXTENSIONS};
use crate::report::{summarize_rows, write_report, Summary};
use crate::PairArgs;

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("rows are built as objects"),
    }
}

fn with_unmatched(mut s: Summary, unmatched_pred: &[String], unmatched_gold: &[String]) -> Summary {
    s.unmatched_pred = unmatched_pred.to_vec();
    s.unmatched_gold = unmatched_gold.to_vec();
    s
}

#[derive(Args)]
pub struct TednArgs {
    #[command(flatten)]
    pairs: PairArgs,
    /// Trees are truncated to fewer than this many nodes after flattening.
    #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
    max_nodes: usize,
}

fn tedn_row(id: &str, pred: &Path, gold: &Path, max_nodes: usize) -> Map<String, Value> {
    let gold_tree = match load_score(gold) {
        Ok(t) => t,
        Err(e) => return object(json!({ "id": id, "tedn": null, "error": format!("gold: {e:#}") })),
    };
    let (pred_tree, pred_error) = match load_score(pred) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(format!("{e:#}"))),
    };
    match tedn_score(pred_tree.as_ref(), &gold_tree, max_nodes) {
        Ok(out) => {
            let mut row = object(json!({
                "id": id,
                "tedn": out.score,
                "pred_nodes": out.pred_nodes,
                "gold_nodes": out.gold_nodes,
                "truncated": out.truncated,
                "convert_failed": pred_error.is_some(),
            }));
            if let Some(e) = pred_error {
                row.insert("pred_error".into(), Value::String(e));
            }
            row
        }
        Err(e) => object(json!({ "id": id, "tedn": null, "error": e.to_string() })),
    }
}

pub fn tedn(args: &TednArgs) -> Result<()> {
    let p = pair(&args.pairs.pred, &args.pairs.gold, &SCORE_EXTENSIONS)?;
    let rows = par_map(&p.pairs, |(id, pred, gold)| tedn_row(id, pred, gold, args.max_nodes));
    let summary = with_unmatched(summarize_rows(&rows, "tedn"), &p.unmatched_pred, &p.unmatched_gold);
    write_report(&args.pairs, &rows, &[summary])
}

#[derive(Args)]
pub struct OmrNedArgs {
    #[command(flatten)]
    pairs: PairArgs,
    /// JSON cost table `{category: {insert, delete}}`; missing entries cost 1.
    #[arg(long)]
    costs: Option<PathBuf>,
}

fn omrned_row(id: &str, pred: &Path, gold: &Path, costs: &CostTable<f64>, cost_json: &Value) -> Map<String, Value> {
    let fail = |msg: String| object(json!({ "id": id, "omr_ned": null, "error": msg }));
    let gold_measures = match load_score(gold).map_err(|e| format!("{e:#}")).and_then(|t| {
        extract_measures(&t).map_err(|e| e.to_string())
    }) {
        Ok(m) => m,
        Err(e) => return fail(format!("gold: {e}")),
    };
    let (pred_measures, pred_error) = match load_score(pred)
        .map_err(|e| format!("{e:#}"))
        .and_then(|t| extract_measures(&t).map_err(|e| e.to_string()))
    {
        Ok(m) => (m, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    match omr_ned(&pred_measures, &gold_measures, costs) {
        Ok(out) => {
            let mut row = object(json!({
                "id": id,
                "omr_ned": out.score,
                "distance": out.distance,
                "denominator": out.denominator,
                "pred_measures": pred_measures.len(),
                "gold_measures": gold_measures.len(),
                "convert_failed": pred_error.is_some(),
                "symbols_version": SYMBOLS_VERSION,
                "costs": cost_json,
            }));
            if let Some(e) = pred_error {
                row.insert("pred_error".into(), Value::String(e));
            }
            row
        }
        Err(e) => fail(e.to_string()),
    }
}

pub fn omrned(args: &OmrNedArgs) -> Result<()> {
    let costs = match &args.costs {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            CostTable::from_json(&text).with_context(|| format!("cost table {}", path.display()))?
        }
        None => CostTable::default(),
    };
    let cost_json = costs.to_json();
    let p = pair(&args.pairs.pred, &args.pairs.gold, &SCORE_EXTENSIONS)?;
    let rows = par_map(&p.pairs, |(id, pred, gold)| omrned_row(id, pred, gold, &costs, &cost_json));
    let summary = with_unmatched(summarize_rows(&rows, "omr_ned"), &p.unmatched_pred, &p.unmatched_gold);
    write_report(&args.pairs, &rows, &[summary])
}

#[derive(Args)]
pub struct ErArgs {
    #[command(flatten)]
    pairs: PairArgs,
    /// Unit level; all three by default.
    #[arg(long)]
    level: Option<SymbolLevel>,
}

const TEXT_EXTENSIONS: [&str; 3] = ["abc", "txt", "krn"];

fn metric_name(level: SymbolLevel) -> &'static str {
    match level {
        SymbolLevel::Char => "cer",
        SymbolLevel::Symbol => "ser",
        SymbolLevel::Line => "ler",
    }
}

pub fn error_rates(args: &ErArgs) -> Result<()> {
    let levels: Vec<SymbolLevel> = match args.level {
        Some(l) => vec![l],
        None => vec![SymbolLevel::Char, SymbolLevel::Symbol, SymbolLevel::Line],
    };
    let p = pair(&args.pairs.pred, &args.pairs.gold, &TEXT_EXTENSIONS)?;
    let rows = par_map(&p.pairs, |(id, pred, gold)| {
        let mut row = Map::new();
        row.insert("id".into(), json!(id));
        let texts = fs::read_to_string(pred).and_then(|p| Ok((p, fs::read_to_string(gold)?)));
        match texts {
            Ok((p, g)) => {
                for &level in &levels {
                    let v = error_rate(&p, &g, level).map_or(Value::Null, |r| json!(r));
                    row.insert(metric_name(level).into(), v);
                }
            }
            Err(e) => {
                for &level in &levels {
                    row.insert(metric_name(level).into(), Value::Null);
                }
                row.insert("error".into(), json!(e.to_string()));
            }
        }
        row
    });
    let summaries: Vec<Summary> = levels
        .iter()
        .map(|&l| with_unmatched(summarize_rows(&rows, metric_name(l)), &p.unmatched_pred, &p.unmatched_gold))
        .collect();
    write_report(&args.pairs, &rows, &summaries)
}
