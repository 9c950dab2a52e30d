//! ABC to MusicXML.
//!
//! Each voice becomes one `<part>`, each ABC measure one `<measure>`. Notes
//! carry pitch, duration in divisions, ties, chord flags, tuplet ratios and
//! note types; key, meter and clef come from the header and from inline or
//! body field changes. Decorations map through a short table (staccato,
//! accent, fermata, trill); everything else is counted and dropped.

use std::collections::BTreeMap;

use num_integer::Integer;
use thiserror::Error;

use crate::abc::timing::{timelines, Context, TimedEvent, TimedItem, TimedKind, TimedMeasure};
use crate::abc::{AbcScore, Barline, Clef, Diagnostic, Meter, Step};
use crate::mxl::{make_label, LabeledTree};
use crate::Rational;

/// Upper bound on `<divisions>`; finer durations are rounded.
pub const MAX_DIVISIONS: i64 = 960;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConvertError {
    #[error("score has no measures")]
    EmptyScore,
    #[error("unsupported meter `{0}`")]
    UnsupportedMeter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub tree: LabeledTree,
    pub diagnostics: Vec<Diagnostic>,
    /// Dropped elements by name (unmapped decorations and the like).
    pub dropped: BTreeMap<String, usize>,
    pub divisions: i64,
}

fn leaf(tag: &str) -> LabeledTree {
    LabeledTree::leaf(tag)
}

fn text(tag: &str, value: impl ToString) -> LabeledTree {
    LabeledTree::leaf(make_label(tag, &[], Some(&value.to_string())))
}

fn with_attrs(tag: &str, attrs: &[(&str, &str)], children: Vec<LabeledTree>) -> LabeledTree {
    let attrs: Vec<(String, String)> = attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    LabeledTree::node(make_label(tag, &attrs, None), children)
}

fn node(tag: &str, children: Vec<LabeledTree>) -> LabeledTree {
    LabeledTree::node(tag, children)
}

/// Note type and dot count for a written duration in whole notes.
pub fn note_type(written: Rational) -> Option<(&'static str, u32)> {
    const TYPES: [(&str, i64, i64); 11] = [
        ("breve", 2, 1),
        ("whole", 1, 1),
        ("half", 1, 2),
        ("quarter", 1, 4),
        ("eighth", 1, 8),
        ("16th", 1, 16),
        ("32nd", 1, 32),
        ("64th", 1, 64),
        ("128th", 1, 128),
        ("256th", 1, 256),
        ("512th", 1, 512),
    ];
    for (name, n, d) in TYPES {
        let base = Rational::new(n, d);
        let mut total = base;
        let mut add = base;
        for dots in 0..=3 {
            if written == total {
                return Some((name, dots));
            }
            add /= 2;
            total += add;
        }
    }
    None
}

fn alter_accidental(alter: i8) -> &'static str {
    match alter {
        -2 => "flat-flat",
        -1 => "flat",
        1 => "sharp",
        2 => "double-sharp",
        _ => "natural",
    }
}

fn key_element(ctx: &Context) -> LabeledTree {
    let mut children = vec![text("fifths", ctx.key.fifths)];
    if let Some(mode) = ctx.key.mode {
        children.push(text("mode", mode.name()));
    }
    node("key", children)
}

fn time_element(meter: &Meter) -> Option<LabeledTree> {
    let (beats, beat_type) = meter.beats()?;
    let children = vec![text("beats", beats), text("beat-type", beat_type)];
    Some(match meter.symbol() {
        Some(symbol) => with_attrs("time", &[("symbol", symbol)], children),
        None => node("time", children),
    })
}

fn clef_element(clef: Option<Clef>) -> LabeledTree {
    let (sign, line) = clef.unwrap_or(Clef::Treble).sign_line();
    node("clef", vec![text("sign", sign), text("line", line)])
}

/// Attribute children that differ between two contexts (all of them when
/// `before` is `None`).
fn attribute_children(before: Option<&Context>, now: &Context, divisions: Option<i64>) -> Vec<LabeledTree> {
    let mut out = Vec::new();
    if let Some(d) = divisions {
        out.push(text("divisions", d));
    }
    if before.is_none_or(|b| b.key.fifths != now.key.fifths || b.key.mode != now.key.mode) {
        out.push(key_element(now));
    }
    if before.is_none_or(|b| b.meter != now.meter) {
        if let Some(t) = time_element(&now.meter) {
            out.push(t);
        }
    }
    if before.is_none_or(|b| b.clef != now.clef) {
        out.push(clef_element(now.clef));
    }
    out
}

/// Bar style and repeat for a barline token, seen from the side it is on.
fn barline_element(bar: &Barline, location: &str, ending: Option<(&str, &str)>) -> Option<LabeledTree> {
    let s = bar.as_str().trim_end_matches(|c: char| c.is_ascii_digit() || c == ',' || c == '-');
    let backward = location == "right" && bar.repeat_backward();
    let forward = location == "left" && (s.ends_with(':') || s == "::");
    let style = match s {
        "|" => None,
        "||" => Some("light-light"),
        "|]" => Some("light-heavy"),
        "[|" => Some("heavy-light"),
        "[|]" => Some("none"),
        _ if backward => Some("light-heavy"),
        _ if forward => Some("heavy-light"),
        _ => None,
    };
    let mut children = Vec::new();
    if let Some(style) = style {
        children.push(text("bar-style", style));
    }
    if let Some((number, kind)) = ending {
        children.push(with_attrs("ending", &[("number", number), ("type", kind)], vec![]));
    }
    if backward {
        children.push(with_attrs("repeat", &[("direction", "backward")], vec![]));
    }
    if forward {
        children.push(with_attrs("repeat", &[("direction", "forward")], vec![]));
    }
    (!children.is_empty()).then(|| with_attrs("barline", &[("location", location)], children))
}

struct PartWriter<'a> {
    divisions: i64,
    diags: &'a mut Vec<Diagnostic>,
    dropped: &'a mut BTreeMap<String, usize>,
    /// Pitches with an open tie: (step, octave, alter).
    open_ties: Vec<(Step, i8, i8)>,
    rounded: bool,
}

impl PartWriter<'_> {
    fn ticks(&mut self, duration: Rational) -> i64 {
        let t = duration * 4 * self.divisions;
        if !t.is_integer() {
            self.rounded = true;
        }
        t.round().to_integer().max(1)
    }

    fn note(&mut self, e: &TimedEvent, part: &str) -> LabeledTree {
        let mut children = Vec::new();
        if e.grace {
            children.push(leaf("grace"));
        }
        if e.chord {
            children.push(leaf("chord"));
        }
        let mut attrs: Vec<(&str, &str)> = Vec::new();
        let mut tie_stop = false;
        let mut pitch_key = None;
        match &e.kind {
            TimedKind::Note { pitch, alter } => {
                let mut p = vec![text("step", pitch.step.letter())];
                if *alter != 0 {
                    p.push(text("alter", alter));
                }
                p.push(text("octave", pitch.octave));
                children.push(node("pitch", p));
                let key = (pitch.step, pitch.octave, *alter);
                if let Some(i) = self.open_ties.iter().position(|k| *k == key) {
                    self.open_ties.remove(i);
                    tie_stop = true;
                }
                pitch_key = Some(key);
            }
            TimedKind::Rest { visible } => {
                if !visible {
                    attrs.push(("print-object", "no"));
                }
                if e.bars > 1 {
                    self.diags.push(Diagnostic::new(format!(
                        "{part}: multi-measure rest of {} bars written as one long rest",
                        e.bars
                    )));
                }
                children.push(leaf("rest"));
            }
        }
        if !e.grace {
            let ticks = self.ticks(e.duration);
            children.push(text("duration", ticks));
        }
        if tie_stop {
            children.push(with_attrs("tie", &[("type", "stop")], vec![]));
        }
        if e.tie && pitch_key.is_some() {
            children.push(with_attrs("tie", &[("type", "start")], vec![]));
        }
        children.push(text("voice", e.layer + 1));
        match note_type(e.written) {
            Some((name, dots)) => {
                children.push(text("type", name));
                for _ in 0..dots {
                    children.push(leaf("dot"));
                }
            }
            None if e.bars > 1 || e.duration > Rational::from_integer(2) => {}
            None => self.diags.push(Diagnostic::new(format!(
                "{part}: duration {} has no note type",
                e.written
            ))),
        }
        if let TimedKind::Note { pitch, alter } = &e.kind {
            if pitch.accidental.is_some() {
                children.push(text("accidental", alter_accidental(*alter)));
            }
        }
        if let Some((actual, normal)) = e.tuplet {
            children.push(node("time-modification", vec![text("actual-notes", actual), text("normal-notes", normal)]));
        }

        let mut notations = Vec::new();
        if tie_stop {
            notations.push(with_attrs("tied", &[("type", "stop")], vec![]));
        }
        if e.tie && pitch_key.is_some() {
            notations.push(with_attrs("tied", &[("type", "start")], vec![]));
        }
        let mut articulations = Vec::new();
        let mut ornaments = Vec::new();
        for d in &e.decorations {
            match d.as_str() {
                "staccato" => articulations.push(leaf("staccato")),
                "accent" | ">" | "emphasis" => articulations.push(leaf("accent")),
                "fermata" => notations.push(leaf("fermata")),
                "trill" => ornaments.push(leaf("trill-mark")),
                other => *self.dropped.entry(format!("decoration:{other}")).or_default() += 1,
            }
        }
        if !ornaments.is_empty() {
            notations.push(node("ornaments", ornaments));
        }
        if !articulations.is_empty() {
            notations.push(node("articulations", articulations));
        }
        if !notations.is_empty() {
            children.push(node("notations", notations));
        }
        if let (true, Some(key)) = (e.tie, pitch_key) {
            self.open_ties.push(key);
        }
        let attrs: Vec<(String, String)> = attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        LabeledTree::node(make_label("note", &attrs, None), children)
    }

    fn measure(
        &mut self,
        index: usize,
        m: &TimedMeasure,
        previous: Option<&Context>,
        left_forward: bool,
        part: &str,
    ) -> (LabeledTree, Context) {
        let number = (index + 1).to_string();
        let mut children = Vec::new();

        let ending = m.ending.as_deref().map(|e| e.trim_start_matches('[').to_string());
        let left = match (&m.left_barline, left_forward) {
            (Some(b), _) => Some(b.clone()),
            (None, true) => Some(Barline("|:".into())),
            (None, false) => None,
        };
        let left_el = match &left {
            Some(b) => barline_element(b, "left", ending.as_deref().map(|n| (n, "start"))),
            None => ending
                .as_deref()
                .map(|n| with_attrs("barline", &[("location", "left")], vec![with_attrs("ending", &[("number", n), ("type", "start")], vec![])])),
        };
        if let Some(el) = left_el {
            children.push(el);
        }

        let attrs = attribute_children(previous, &m.start, previous.is_none().then_some(self.divisions));
        if !attrs.is_empty() {
            children.push(node("attributes", attrs));
        }

        let mut ctx = m.start.clone();
        let mut layer = 0;
        let mut elapsed = 0i64;
        for item in &m.items {
            match item {
                TimedItem::Context(next) => {
                    let attrs = attribute_children(Some(&ctx), next, None);
                    if !attrs.is_empty() {
                        children.push(node("attributes", attrs));
                    }
                    ctx = next.clone();
                }
                TimedItem::Event(e) => {
                    if e.layer != layer {
                        if elapsed > 0 {
                            children.push(node("backup", vec![text("duration", elapsed)]));
                        }
                        elapsed = 0;
                        layer = e.layer;
                    }
                    let n = self.note(e, part);
                    if !e.grace && !e.chord {
                        elapsed += self.ticks(e.duration);
                    }
                    children.push(n);
                }
            }
        }

        if let (Some(bar), Some(actual)) = (m.start.bar_length(), Some(m.duration())) {
            if actual != bar && actual != Rational::from_integer(0) && m.events().all(|e| e.bars == 1) {
                self.diags.push(Diagnostic::new(format!(
                    "{part} measure {number}: duration {actual} does not fill the meter ({bar})"
                )));
            }
        }

        if let Some(right) = &m.right_barline {
            if let Some(el) = barline_element(right, "right", None) {
                children.push(el);
            }
        }
        (with_attrs("measure", &[("number", &number)], children), ctx)
    }
}

fn divisions_for(timelines: &[Vec<TimedMeasure>]) -> i64 {
    let mut lcm = 1i64;
    for m in timelines.iter().flatten() {
        for e in m.events() {
            if e.grace {
                continue;
            }
            let q = e.duration * 4;
            lcm = lcm.lcm(q.denom());
            if lcm > MAX_DIVISIONS {
                return MAX_DIVISIONS;
            }
        }
    }
    lcm
}

/// Converts a parsed tune into a score-partwise tree.
pub fn convert(score: &AbcScore) -> Result<Conversion, ConvertError> {
    if let Some(m) = score.header_value("M") {
        Meter::parse(m).map_err(|_| ConvertError::UnsupportedMeter(m.to_string()))?;
    }
    let lines = timelines(score);
    if lines.iter().all(Vec::is_empty) {
        return Err(ConvertError::EmptyScore);
    }
    let divisions = divisions_for(&lines);
    let mut diagnostics = Vec::new();
    let mut dropped = BTreeMap::new();
    if divisions == MAX_DIVISIONS {
        diagnostics.push(Diagnostic::new(format!("divisions capped at {MAX_DIVISIONS}; some durations are rounded")));
    }

    let mut root_children = Vec::new();
    if let Some(title) = score.header_value("T") {
        root_children.push(node("work", vec![text("work-title", title)]));
    }
    let mut part_list = Vec::new();
    let mut parts = Vec::new();
    for (v, measures) in lines.iter().enumerate() {
        let voice = &score.voices[v];
        if measures.is_empty() {
            diagnostics.push(Diagnostic::new(format!("voice {} has no music and is skipped", voice.id)));
            continue;
        }
        let id = format!("P{}", parts.len() + 1);
        let name = if voice.id.is_empty() { id.clone() } else { voice.id.clone() };
        part_list.push(with_attrs("score-part", &[("id", &id)], vec![text("part-name", &name)]));

        let mut writer = PartWriter {
            divisions,
            diags: &mut diagnostics,
            dropped: &mut dropped,
            open_ties: Vec::new(),
            rounded: false,
        };
        let mut previous: Option<Context> = None;
        let mut left_forward = false;
        let mut measure_nodes = Vec::new();
        for (i, m) in measures.iter().enumerate() {
            let (el, ctx) = writer.measure(i, m, previous.as_ref(), left_forward, &name);
            measure_nodes.push(el);
            previous = Some(ctx);
            left_forward = m.right_barline.as_ref().is_some_and(|b| {
                let s = b.as_str();
                s.ends_with(':') || s.starts_with("::") || s.contains("|:")
            });
        }
        if writer.rounded {
            writer.diags.push(Diagnostic::new(format!("{name}: durations rounded to {divisions} divisions")));
        }
        parts.push(with_attrs("part", &[("id", &id)], measure_nodes));
    }
    root_children.push(node("part-list", part_list));
    root_children.extend(parts);
    for (what, n) in &dropped {
        diagnostics.push(Diagnostic::new(format!("dropped {n} x {what}")));
    }
    let tree = with_attrs("score-partwise", &[("version", "4.0")], root_children);
    Ok(Conversion { tree, diagnostics, dropped, divisions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::parse_abc;
    use crate::mxl::{parse_musicxml, serialize_musicxml};

    fn conv(src: &str) -> Conversion {
        convert(&parse_abc(src).unwrap()).unwrap()
    }

    fn notes(t: &LabeledTree) -> Vec<&LabeledTree> {
        t.preorder().into_iter().filter(|n| n.tag() == "note").collect()
    }

    #[test]
    fn two_half_notes() {
        let c = conv("X:1\nL:1/8\nM:4/4\nK:C\nC4C4|]\n");
        let measures: Vec<_> = c.tree.preorder().into_iter().filter(|n| n.tag() == "measure").collect();
        assert_eq!(measures.len(), 1);
        let n = notes(&c.tree);
        assert_eq!(n.len(), 2);
        for note in n {
            assert_eq!(note.child_tagged("type").unwrap().text().as_deref(), Some("half"));
            let d: i64 = note.child_tagged("duration").unwrap().text().unwrap().parse().unwrap();
            assert_eq!(Rational::new(d, c.divisions * 4), Rational::new(1, 2));
        }
    }

    #[test]
    fn chord_flags() {
        let c = conv("X:1\nL:1/8\nK:C\n[CEG]2|\n");
        let n = notes(&c.tree);
        assert_eq!(n.len(), 3);
        let chord: Vec<bool> = n.iter().map(|n| n.child_tagged("chord").is_some()).collect();
        assert_eq!(chord, [false, true, true]);
    }

    #[test]
    fn key_alters_and_ties() {
        let c = conv("X:1\nL:1/4\nK:D\nF2- F2|c ^c =c _B|\n");
        let n = notes(&c.tree);
        let alters: Vec<Option<String>> = n
            .iter()
            .map(|n| n.child_tagged("pitch").unwrap().child_tagged("alter").and_then(|a| a.text()))
            .collect();
        assert_eq!(alters, [Some("1".into()), Some("1".into()), Some("1".into()), Some("1".into()), None, Some("-1".into())]);
        assert!(n[0].children.iter().any(|c| c.label == "tie@type=start"));
        assert!(n[1].children.iter().any(|c| c.label == "tie@type=stop"));
    }

    #[test]
    fn triplets_get_time_modification() {
        let c = conv("X:1\nL:1/8\nM:2/4\nK:C\n(3CDE F2|\n");
        assert_eq!(c.divisions, 3);
        let n = notes(&c.tree);
        assert!(n[0].child_tagged("time-modification").is_some());
        assert_eq!(n[0].child_tagged("type").unwrap().text().as_deref(), Some("eighth"));
        assert_eq!(n[0].child_tagged("duration").unwrap().text().as_deref(), Some("1"));
        assert!(c.diagnostics.is_empty(), "{:?}", c.diagnostics);
    }

    #[test]
    fn overlay_backs_up() {
        let c = conv("X:1\nL:1/4\nM:4/4\nK:C\nCDEF&G,A,B,C|\n");
        let m = c.tree.preorder().into_iter().find(|n| n.tag() == "measure").unwrap();
        let backup = m.child_tagged("backup").unwrap();
        assert_eq!(backup.child_tagged("duration").unwrap().text().as_deref(), Some("4"));
    }

    #[test]
    fn decorations_map_or_drop() {
        let c = conv("X:1\nK:C\n.C !fermata!D TE !coda!F|\n");
        let labels: Vec<String> = c.tree.preorder().iter().map(|n| n.label.clone()).collect();
        assert!(labels.contains(&"staccato".to_string()));
        assert!(labels.contains(&"fermata".to_string()));
        assert!(labels.contains(&"trill-mark".to_string()));
        assert_eq!(c.dropped.get("decoration:coda"), Some(&1));
    }

    #[test]
    fn repeats_and_endings() {
        let c = conv("X:1\nL:1/4\nM:2/4\nK:C\n|:CD|[1EF:|[2GA|]\n");
        let labels: Vec<String> = c.tree.preorder().iter().map(|n| n.label.clone()).collect();
        assert!(labels.contains(&"repeat@direction=forward".to_string()));
        assert!(labels.contains(&"repeat@direction=backward".to_string()));
        assert!(labels.contains(&"ending@number=1@type=start".to_string()));
        assert!(labels.contains(&"ending@number=2@type=start".to_string()));
    }

    #[test]
    fn errors() {
        assert_eq!(convert(&parse_abc("X:1\nK:C\n").unwrap()), Err(ConvertError::EmptyScore));
        assert!(matches!(
            convert(&parse_abc("X:1\nM:4/x\nK:C\nC|\n").unwrap()),
            Err(ConvertError::UnsupportedMeter(_))
        ));
    }

    #[test]
    fn serializes_to_parseable_xml() {
        let c = conv("X:1\nT:A & B <test>\nL:1/8\nM:C|\nK:Bb clef=bass\nB,2 z2 x4|\n");
        let xml = serialize_musicxml(&c.tree);
        assert_eq!(parse_musicxml(xml.as_bytes()).unwrap(), c.tree);
        assert!(xml.contains("<sign>F</sign>"));
        assert!(xml.contains("print-object=\"no\""));
        assert!(xml.contains("<time symbol=\"cut\">"));
    }
}
