use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use omrkit::abc::parse_abc;
use omrkit::convert::convert;
use omrkit::mxl::{read_musicxml, LabeledTree};
use rayon::prelude::*;

/// Sizes the worker pool from `OMRKIT_THREADS` (default: all cores).
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("OMRKIT_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().with_context(|| format!("OMRKIT_THREADS={value} is not a number"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring worker pool")?;
    Ok(())
}

/// Applies `f` to every item on the worker pool; results keep input order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Files of a directory with one of `extensions`, keyed by file stem.
pub fn files_by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
    paths.sort();
    for path in paths {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if let Some(previous) = out.insert(stem.clone(), path.clone()) {
            bail!("{} and {} share the stem `{stem}`", previous.display(), path.display());
        }
    }
    Ok(out)
}

pub struct Pairing {
    pub pairs: Vec<(String, PathBuf, PathBuf)>,
    pub unmatched_pred: Vec<String>,
    pub unmatched_gold: Vec<String>,
}

/// Matches predictions to gold files by stem. Two plain files form a single
/// pair named after the gold file.
pub fn pair(pred_dir: &Path, gold_dir: &Path, extensions: &[&str]) -> Result<Pairing> {
    match (pred_dir.is_file(), gold_dir.is_file()) {
        (true, true) => {
            let id = gold_dir.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let pairs = vec![(id, pred_dir.to_path_buf(), gold_dir.to_path_buf())];
            return Ok(Pairing { pairs, unmatched_pred: Vec::new(), unmatched_gold: Vec::new() });
        }
        (true, false) | (false, true) => bail!("--pred and --gold must both be files or both be directories"),
        (false, false) => {}
    }
    let pred = files_by_stem(pred_dir, extensions)?;
    let gold = files_by_stem(gold_dir, extensions)?;
    let pairs = pred
        .iter()
        .filter_map(|(stem, p)| gold.get(stem).map(|g| (stem.clone(), p.clone(), g.clone())))
        .collect();
    let unmatched_pred = pred.keys().filter(|k| !gold.contains_key(*k)).cloned().collect::<Vec<_>>();
    let unmatched_gold = gold.keys().filter(|k| !pred.contains_key(*k)).cloned().collect::<Vec<_>>();
    for (side, list) in [("prediction", &unmatched_pred), ("gold", &unmatched_gold)] {
        for stem in list {
            eprintln!("warning: {side} `{stem}` has no counterpart");
        }
    }
    Ok(Pairing { pairs, unmatched_pred, unmatched_gold })
}

pub const SCORE_EXTENSIONS: [&str; 4] = ["abc", "musicxml", "xml", "mxl"];

fn is_abc(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("abc"))
}

/// Reads a score as a MusicXML tree, converting ABC on the way.
pub fn load_score(path: &Path) -> Result<LabeledTree> {
    if is_abc(path) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let score = parse_abc(&text).with_context(|| format!("parsing {}", path.display()))?;
        let conversion = convert(&score).with_context(|| format!("converting {}", path.display()))?;
        Ok(conversion.tree)
    } else {
        Ok(read_musicxml(path)?)
    }
}
