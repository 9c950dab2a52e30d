//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line with
//! its measurements; the process exits nonzero if any criterion fails.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use omrkit::abc::{emit_abc, parse_abc, AbcScore};
use omrkit::bpe::{train, TokenVocab, FIRST_MERGE_ID};
use omrkit::canon::{canonicalize, CanonConfig};
use omrkit::convert::convert;
use omrkit::imgprep::{reassemble, segment_canvas, segment_image, MAX_ASPECT};
use omrkit::metrics::omrned::{omr_ned, CostTable, SymbolCategory};
use omrkit::metrics::seq::{error_rate, levenshtein, SymbolLevel};
use omrkit::metrics::ted::{tedn, tree_edit_distance, EditCosts, DEFAULT_MAX_NODES};
use omrkit::mxl::{parse_musicxml, read_musicxml, serialize_musicxml, LabeledTree};
use omrkit_testkit::abc_gen::{random_tune, TuneOptions};
use omrkit_testkit::gen::{random_measures, random_string, random_tree};
use omrkit_testkit::oracle::{forest_ted, levenshtein_recursive, musicxml_events, omr_ned_enumerated, sounding_events};
use omrkit_testkit::rng;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn zss_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let costs = EditCosts::<u32>::default();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..=8);
        let a = random_tree(&mut r, n, 3);
        let n = r.random_range(1..=8);
        let b = random_tree(&mut r, n, 3);
        if tree_edit_distance(&a, &b, &costs).map_err(|e| e.to_string())? != forest_ted(&a, &b, 1, 1, 1) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(mismatches == 0 && secs < 60.0, format!("1000 pairs, {mismatches} mismatches, {secs:.2}s (limit 60s)"))
}

fn chorale_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/chorales")
}

fn tedn_boundaries() -> Outcome {
    let mut paths: Vec<PathBuf> = fs::read_dir(chorale_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "mxl"))
        .collect();
    paths.sort();
    let mut bad = Vec::new();
    for path in &paths {
        let gold = read_musicxml(path).map_err(|e| e.to_string())?;
        let same = tedn(Some(&gold), &gold, DEFAULT_MAX_NODES).map_err(|e| e.to_string())?;
        let empty = tedn(None, &gold, DEFAULT_MAX_NODES).map_err(|e| e.to_string())?;
        let root_only = tedn(Some(&LabeledTree::leaf("score-partwise")), &gold, DEFAULT_MAX_NODES).map_err(|e| e.to_string())?;
        if same.score != 0.0 || empty.score != 1.0 || root_only.score != 1.0 {
            bad.push(path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    check(
        paths.len() >= 50 && bad.is_empty(),
        format!("{} real MusicXML chorales (.mxl), violations: {bad:?}", paths.len()),
    )
}

fn levenshtein_oracle() -> Outcome {
    let mut r = rng(3);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let a: Vec<char> = random_string(&mut r, 10, &['a', 'b', 'c', 'd']).chars().collect();
        let b: Vec<char> = random_string(&mut r, 10, &['a', 'b', 'c', 'd']).chars().collect();
        if levenshtein(&a, &b) != levenshtein_recursive(&a, &b) {
            mismatches += 1;
        }
        let (sa, sb): (String, String) = (a.iter().collect(), b.iter().collect());
        if !sb.is_empty() {
            let rate = error_rate(&sa, &sb, SymbolLevel::Char).map_err(|e| e.to_string())?;
            if rate != levenshtein_recursive(&a, &b) as f64 / b.len() as f64 {
                mismatches += 1;
            }
        }
    }
    let kitten = error_rate("kitten", "sitting", SymbolLevel::Char).map_err(|e| e.to_string())?;
    check(
        mismatches == 0 && kitten == 3.0 / 7.0,
        format!("1000 pairs, {mismatches} mismatches; kitten/sitting CER = {kitten} (expected 3/7)"),
    )
}

fn omrned_oracle() -> Outcome {
    let mut r = rng(4);
    let mut weighted = CostTable::<f64>::default();
    weighted.set(SymbolCategory::Note, 2.0, 0.5).map_err(|e| e.to_string())?;
    weighted.set(SymbolCategory::Clef, 0.25, 3.0).map_err(|e| e.to_string())?;
    let mut pairs = 0;
    let mut mismatches = 0;
    let mut boundary = 0;
    for costs in [CostTable::default(), weighted] {
        for _ in 0..500 {
            let pred = random_measures(&mut r, 5, 6);
            let gold = random_measures(&mut r, 5, 6);
            pairs += 1;
            let brute = omr_ned_enumerated(&pred, &gold, &costs);
            let Ok(out) = omr_ned(&pred, &gold, &costs) else {
                // Gold without any symbol has no denominator.
                continue;
            };
            if (out.distance - brute).abs() > 1e-9 {
                mismatches += 1;
            }
            let identity = omr_ned(&gold, &gold, &costs).map_err(|e| e.to_string())?;
            let empty = omr_ned(&[], &gold, &costs).map_err(|e| e.to_string())?;
            if identity.score != 0.0 || empty.score != 1.0 {
                boundary += 1;
            }
        }
    }
    check(
        mismatches == 0 && boundary == 0,
        format!("{pairs} pairs of <= 5 measures, {mismatches} DP/enumeration mismatches, {boundary} identity/empty violations"),
    )
}

fn bars_per_line(score: &AbcScore) -> Vec<Vec<usize>> {
    score
        .voices
        .iter()
        .map(|v| {
            let mut lines = vec![0];
            for m in &v.measures {
                *lines.last_mut().unwrap() += 1;
                if m.line_end.is_some() {
                    lines.push(0);
                }
            }
            if lines.len() > 1 && *lines.last().unwrap() == 0 {
                lines.pop();
            }
            lines
        })
        .collect()
}

fn canonicalization() -> Outcome {
    let mut r = rng(5);
    let cfg = CanonConfig::default();
    let (mut tunes, mut violations, mut event_checked) = (0, Vec::new(), 0);
    for i in 0..1500 {
        let single = i < 1000;
        let opts = if single { TuneOptions { multi_voice: false, ..Default::default() } } else { TuneOptions::default() };
        let src = random_tune(&mut r, i, opts);
        tunes += 1;
        let verdict = (|| -> Result<(), String> {
            let score = parse_abc(&src).map_err(|e| e.to_string())?;
            let text = emit_abc(&canonicalize(&score, &cfg).map_err(|e| e.to_string())?);
            let reparsed = parse_abc(&text).map_err(|e| e.to_string())?;
            if reparsed.header_value("L") != Some("1/8") {
                return Err("unit note is not 1/8".into());
            }
            if emit_abc(&canonicalize(&reparsed, &cfg).map_err(|e| e.to_string())?) != text {
                return Err("not idempotent".into());
            }
            for lines in bars_per_line(&reparsed) {
                let (last, full) = lines.split_last().unwrap();
                if full.iter().any(|&n| n != 5) || *last > 5 {
                    return Err(format!("bars per line {lines:?}"));
                }
            }
            if single {
                if sounding_events(&score) != sounding_events(&reparsed) {
                    return Err("event sequence changed".into());
                }
                event_checked += 1;
            }
            Ok(())
        })();
        if let Err(e) = verdict {
            violations.push(format!("tune {i}: {e}"));
        }
    }
    check(
        violations.is_empty(),
        format!(
            "{tunes} tunes ({event_checked} single-voice with event check), {} violations {:?}",
            violations.len(),
            violations.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn is_pitch_letter(c: char) -> bool {
    matches!(c, 'A'..='G' | 'a'..='g')
}

fn canonical_tune(r: &mut impl Rng, i: usize) -> Result<String, String> {
    let src = random_tune(r, i, TuneOptions::default());
    let score = parse_abc(&src).map_err(|e| e.to_string())?;
    Ok(emit_abc(&canonicalize(&score, &CanonConfig::default()).map_err(|e| e.to_string())?))
}

fn bpe() -> Outcome {
    let mut r = rng(6);
    let corpus = (0..10_000).map(|i| canonical_tune(&mut r, i)).collect::<Result<Vec<_>, _>>()?;
    let held_out = (10_000..11_000).map(|i| canonical_tune(&mut r, i)).collect::<Result<Vec<_>, _>>()?;
    let start = Instant::now();
    let vocab = train(corpus.iter().map(String::as_str), 4097, false).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let vocab = TokenVocab::from_json(&vocab.to_json()).map_err(|e| e.to_string())?;
    let mut round_trip_failures = 0;
    for t in &held_out {
        if vocab.decode(&vocab.encode(t)).ok().as_deref() != Some(t.as_str()) {
            round_trip_failures += 1;
        }
    }
    let pitch_tokens: Vec<String> = (FIRST_MERGE_ID..vocab.len() as u32)
        .filter_map(|id| vocab.token_bytes(id))
        .filter_map(|b| std::str::from_utf8(b).ok())
        .filter(|s| s.chars().count() >= 3 && s.chars().all(is_pitch_letter))
        .map(str::to_string)
        .collect();
    check(
        vocab.len() == 4097 && round_trip_failures == 0 && !pitch_tokens.is_empty(),
        format!(
            "vocab {} trained on {} tunes in {secs:.1}s; {round_trip_failures}/1000 held-out round-trip failures; {} pitch-only tokens of length >= 3, e.g. {:?}",
            vocab.len(),
            corpus.len(),
            pitch_tokens.len(),
            pitch_tokens.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn conversion_fidelity() -> Outcome {
    let mut r = rng(7);
    let mut mismatches = Vec::new();
    let mut notes = 0;
    for i in 0..500 {
        let src = random_tune(&mut r, i, TuneOptions::single_voice());
        let score = parse_abc(&src).map_err(|e| e.to_string())?;
        let c = convert(&score).map_err(|e| format!("tune {i}: {e}"))?;
        let tree = parse_musicxml(serialize_musicxml(&c.tree).as_bytes()).map_err(|e| e.to_string())?;
        let expected = sounding_events(&score);
        notes += expected.len();
        if musicxml_events(&tree) != expected {
            mismatches.push(i);
        }
    }
    check(mismatches.is_empty(), format!("500 tunes, {notes} events, mismatching tunes: {mismatches:?}"))
}

/// Independent statement of the segment count: one segment while the page
/// fits a 1:4 band, otherwise enough strides of the 4W band to reach the bottom.
fn expected_segments(w: u32, h: u32, overlap: f64) -> usize {
    let band = 4 * u64::from(w);
    if u64::from(h) <= band {
        return 1;
    }
    let stride = band as f64 * (1.0 - overlap);
    ((f64::from(h) - band as f64) / stride).ceil() as usize + 1
}

fn segmentation() -> Outcome {
    let mut r = rng(8);
    let mut problems = Vec::new();
    for case in 0..200 {
        let w: u32 = r.random_range(8..=96);
        let ratio = (r.random_range(0.2f64.ln()..=20f64.ln())).exp();
        let h = ((f64::from(w) * ratio).round() as u32).max(1);
        let overlap = [0.0, 0.1, 0.25, 0.5][case % 4];
        let img = image::RgbImage::from_fn(w, h, |_, _| image::Rgb([r.random(), r.random(), r.random()]));
        let batch = segment_image::<f32>(&img, overlap).map_err(|e| e.to_string())?;
        let s = expected_segments(w, h, overlap);
        if batch.data.shape() != [s, 4, 3, 448, 448] {
            problems.push(format!("{w}x{h}: shape {:?}, expected S={s}", batch.data.shape()));
            continue;
        }
        let g = &batch.geometry;
        let mut covered = 0;
        for seg in g {
            if seg.y_offset > covered || seg.height > MAX_ASPECT * w {
                problems.push(format!("{w}x{h}: gap or oversize band {seg:?}"));
            }
            covered = covered.max(seg.y_offset + seg.height);
        }
        if g[0].y_offset != 0 || covered != h {
            problems.push(format!("{w}x{h}: covers up to {covered}"));
        }
        for (k, seg) in g.iter().enumerate() {
            let canvas = segment_canvas(&img, seg);
            let back = reassemble(batch.data.index_axis(ndarray::Axis(0), k));
            let exact = canvas
                .enumerate_pixels()
                .all(|(x, y, p)| (0..3).all(|c| back[[c, y as usize, x as usize]] == f32::from(p.0[c]) / 255.0));
            if !exact {
                problems.push(format!("{w}x{h}: segment {k} does not reassemble"));
            }
        }
    }
    check(problems.is_empty(), format!("200 pages, H/W in [0.2, 20], problems: {:?}", problems.iter().take(3).collect::<Vec<_>>()))
}

fn run_eval(metric: &str, pred: &Path, gold: &Path, out: &Path, threads: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_omrkit"))
        .args(["eval", metric, "--pred"])
        .arg(pred)
        .arg("--gold")
        .arg(gold)
        .arg("-o")
        .arg(out)
        .env("OMRKIT_THREADS", threads)
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("eval {metric} exited with {status}"))
    }
}

/// Replaces the `n`th pitch letter of the tune body with another pitch letter.
fn mutate_pitch(src: &str, n: usize) -> String {
    let body_start = src.find("\nK:").and_then(|k| src[k + 1..].find('\n').map(|e| k + 2 + e)).unwrap_or(0);
    let mut seen = 0;
    let mut out = String::with_capacity(src.len());
    let mut in_quote = false;
    for (i, c) in src.char_indices() {
        if i >= body_start && c == '"' {
            in_quote = !in_quote;
        }
        if i >= body_start && !in_quote && matches!(c, 'A'..='G') {
            seen += 1;
            if seen == n {
                out.push(if c == 'G' { 'A' } else { (c as u8 + 1) as char });
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (pred, gold) = (dir.path().join("pred"), dir.path().join("gold"));
    fs::create_dir_all(&pred).map_err(|e| e.to_string())?;
    fs::create_dir_all(&gold).map_err(|e| e.to_string())?;
    let mut r = rng(9);
    for i in 0..10 {
        let src = random_tune(&mut r, i, TuneOptions::single_voice());
        let score = parse_abc(&src).map_err(|e| e.to_string())?;
        let xml = serialize_musicxml(&convert(&score).map_err(|e| e.to_string())?.tree);
        fs::write(gold.join(format!("piece{i:02}.musicxml")), xml).map_err(|e| e.to_string())?;
        let prediction = match i {
            0..=3 => src,
            9 => "this is not ABC".to_string(),
            _ => mutate_pitch(&src, i),
        };
        fs::write(pred.join(format!("piece{i:02}.abc")), prediction).map_err(|e| e.to_string())?;
    }
    let mut notes = Vec::new();
    for metric in ["tedn", "omrned"] {
        let key = if metric == "tedn" { "tedn" } else { "omr_ned" };
        let first = dir.path().join(format!("{metric}-1.jsonl"));
        let second = dir.path().join(format!("{metric}-2.jsonl"));
        run_eval(metric, &pred, &gold, &first, "1")?;
        run_eval(metric, &pred, &gold, &second, "4")?;
        let a = fs::read(&first).map_err(|e| e.to_string())?;
        let b = fs::read(&second).map_err(|e| e.to_string())?;
        let sa = fs::read(first.with_extension("jsonl.summary.json")).map_err(|e| e.to_string())?;
        let sb = fs::read(second.with_extension("jsonl.summary.json")).map_err(|e| e.to_string())?;
        let rows: Vec<serde_json::Value> =
            String::from_utf8_lossy(&a).lines().map(serde_json::from_str).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let scores: Vec<f64> = rows.iter().filter_map(|row| row[key].as_f64()).collect();
        let identical_zero = scores.iter().take(4).all(|&s| s == 0.0);
        let mutated_positive = scores[4..9].iter().all(|&s| s > 0.0);
        let failed = &rows[9];
        let failed_ok = failed[key] == 1.0 && failed["convert_failed"] == true;
        if a != b || sa != sb || rows.len() != 10 || scores.len() != 10 || !identical_zero || !mutated_positive || !failed_ok {
            return Err(format!(
                "eval {metric}: identical reruns {}, rows {}, scores {scores:?}",
                a == b && sa == sb,
                rows.len()
            ));
        }
        notes.push(format!("{metric} {:.3?}", scores));
    }
    Ok(format!("10 ABC predictions vs 10 MusicXML gold, reruns byte-identical; {}", notes.join("; ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 Zhang-Shasha equals forest recursion", zss_oracle),
        ("2 TEDn boundary laws on real scores", tedn_boundaries),
        ("3 Levenshtein equals recursion", levenshtein_oracle),
        ("4 OMR-NED DP equals enumeration", omrned_oracle),
        ("5 canonical ABC laws", canonicalization),
        ("6 BPE round trip and pitch merges", bpe),
        ("7 ABC to MusicXML pitch/duration fidelity", conversion_fidelity),
        ("8 segmentation shape, coverage and reassembly", segmentation),
        ("9 end-to-end eval determinism", end_to_end),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail} ({secs:.1}s)");
            }
        }
        std::io::stdout().flush().ok();
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
