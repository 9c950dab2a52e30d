//! Slow, obviously-correct reference implementations.

use std::collections::{BTreeMap, HashMap};

use omrkit::abc::{AbcScore, HeaderField, MusicEvent, Note, Segment};
use omrkit::metrics::omrned::{CostTable, MeasureSymbols, Symbol};
use omrkit::mxl::LabeledTree;
use omrkit::{Cost, Rational};

/// Tree edit distance by the forest recursion: remove the rightmost root
/// from either side, or match the two rightmost roots and recurse into
/// their children and into what remains. Memoized on the forest pair.
pub fn forest_ted<C: Cost + std::hash::Hash + Eq>(a: &LabeledTree, b: &LabeledTree, ins: C, del: C, ren: C) -> C {
    fn go<C: Cost>(
        f: &[LabeledTree],
        g: &[LabeledTree],
        costs: (C, C, C),
        memo: &mut HashMap<(Vec<LabeledTree>, Vec<LabeledTree>), C>,
    ) -> C {
        let (ins, del, ren) = costs;
        if f.is_empty() && g.is_empty() {
            return C::zero();
        }
        let key = (f.to_vec(), g.to_vec());
        if let Some(v) = memo.get(&key) {
            return *v;
        }
        // Forest minus its rightmost root: the root's children take its place.
        let strip = |forest: &[LabeledTree]| -> Vec<LabeledTree> {
            let (last, rest) = forest.split_last().expect("non-empty");
            let mut out = rest.to_vec();
            out.extend(last.children.iter().cloned());
            out
        };
        let mut best: Option<C> = None;
        let mut consider = |v: C| {
            best = Some(match best {
                Some(b) if b <= v => b,
                _ => v,
            });
        };
        if !f.is_empty() {
            consider(go(&strip(f), g, costs, memo) + del);
        }
        if !g.is_empty() {
            consider(go(f, &strip(g), costs, memo) + ins);
        }
        if let (Some((v, f_rest)), Some((w, g_rest))) = (f.split_last(), g.split_last()) {
            let r = if v.label == w.label { C::zero() } else { ren };
            consider(go(f_rest, g_rest, costs, memo) + go(&v.children, &w.children, costs, memo) + r);
        }
        let v = best.expect("at least one move");
        memo.insert(key, v);
        v
    }
    let mut memo = HashMap::new();
    go(std::slice::from_ref(a), std::slice::from_ref(b), (ins, del, ren), &mut memo)
}

/// Levenshtein distance straight from the recursive definition, memoized on
/// suffix positions.
pub fn levenshtein_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo).min(go(a, b, i, j + 1, memo)).min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Symmetric multiset difference priced per category, from counts.
pub fn measure_cost_by_counts(a: &MeasureSymbols, b: &MeasureSymbols, costs: &CostTable<f64>) -> f64 {
    let mut diff: BTreeMap<&Symbol, i64> = BTreeMap::new();
    for s in a.symbols() {
        *diff.entry(s).or_default() += 1;
    }
    for s in b.symbols() {
        *diff.entry(s).or_default() -= 1;
    }
    diff.iter()
        .map(|(s, &d)| {
            let c = costs.get(s.category);
            if d > 0 {
                d as f64 * c.delete
            } else {
                (-d) as f64 * c.insert
            }
        })
        .sum()
}

/// Minimum over every alignment of the two measure lists, enumerated
/// explicitly (no dynamic programming).
pub fn omr_ned_enumerated(pred: &[MeasureSymbols], gold: &[MeasureSymbols], costs: &CostTable<f64>) -> f64 {
    let del = |m: &MeasureSymbols| m.symbols().iter().map(|s| costs.get(s.category).delete).sum::<f64>();
    let ins = |m: &MeasureSymbols| m.symbols().iter().map(|s| costs.get(s.category).insert).sum::<f64>();
    let mut best = f64::INFINITY;
    // Each alignment is a path of moves; walk all of them depth-first.
    let mut stack = vec![(0usize, 0usize, 0.0f64)];
    while let Some((i, j, cost)) = stack.pop() {
        if i == pred.len() && j == gold.len() {
            best = best.min(cost);
            continue;
        }
        if i < pred.len() {
            stack.push((i + 1, j, cost + del(&pred[i])));
        }
        if j < gold.len() {
            stack.push((i, j + 1, cost + ins(&gold[j])));
        }
        if i < pred.len() && j < gold.len() {
            stack.push((i + 1, j + 1, cost + measure_cost_by_counts(&pred[i], &gold[j], costs)));
        }
    }
    best
}

/// A sounding event: pitch as (letter, octave, alter) or `None` for a rest,
/// and its duration in whole notes.
pub type PitchDuration = (Option<(char, i8, i8)>, Rational);

const SHARP_ORDER: [char; 7] = ['F', 'C', 'G', 'D', 'A', 'E', 'B'];

fn key_fifths(value: &str) -> i32 {
    let value = value.trim();
    let token = value.split_whitespace().next().unwrap_or("");
    let mut chars = token.chars();
    let Some(tonic) = chars.next().filter(|c| ('A'..='G').contains(c)) else {
        return 0;
    };
    let rest: String = chars.collect();
    let (acc, mode) = match rest.chars().next() {
        Some('#') => (7, &rest[1..]),
        Some('b') => (-7, &rest[1..]),
        _ => (0, rest.as_str()),
    };
    let major = match tonic {
        'C' => 0,
        'G' => 1,
        'D' => 2,
        'A' => 3,
        'E' => 4,
        'B' => 5,
        _ => -1,
    };
    let mode = mode.to_ascii_lowercase();
    let shift = match mode.get(..3.min(mode.len())).unwrap_or("") {
        "" | "maj" | "ion" => 0,
        "m" | "min" | "aeo" => -3,
        "mix" => -1,
        "dor" => -2,
        "phr" => -4,
        "lyd" => 1,
        "loc" => -5,
        _ if mode.starts_with('m') => -3,
        _ => 0,
    };
    major + acc + shift
}

fn key_alter(fifths: i32, letter: char) -> i8 {
    if fifths > 0 && SHARP_ORDER[..fifths as usize].contains(&letter) {
        1
    } else if fifths < 0 && SHARP_ORDER.iter().rev().take((-fifths) as usize).any(|&c| c == letter) {
        -1
    } else {
        0
    }
}

fn fraction(text: &str) -> Option<Rational> {
    let (n, d) = text.trim().split_once('/')?;
    let n: i64 = n.trim().parse().ok()?;
    let d: i64 = d.trim().parse().ok()?;
    (d != 0).then(|| Rational::new(n, d))
}

fn meter_value(text: &str) -> Option<Rational> {
    match text.trim() {
        "C" => Some(Rational::new(1, 1)),
        "C|" => Some(Rational::new(1, 1)),
        t => fraction(t),
    }
}

fn meter_numerator(text: &str) -> u32 {
    match text.trim() {
        "C" => 4,
        "C|" => 2,
        t => t.split('/').next().and_then(|n| n.trim().parse().ok()).unwrap_or(4),
    }
}

struct Walk {
    unit: Rational,
    unit_fixed: bool,
    meter_num: u32,
    fifths: i32,
    accidentals: HashMap<(char, i8), i8>,
    tuplet: Option<(Rational, u32)>,
    broken: Option<Rational>,
    out: Vec<PitchDuration>,
    /// Indices in `out` of the last rhythmic event's entries.
    last: Vec<usize>,
}

impl Walk {
    fn field(&mut self, f: &HeaderField) {
        match f.key.as_str() {
            "L" => {
                if let Some(u) = fraction(&f.value) {
                    self.unit = u;
                    self.unit_fixed = true;
                }
            }
            "M" => {
                self.meter_num = meter_numerator(&f.value);
                if !self.unit_fixed {
                    if let Some(m) = meter_value(&f.value) {
                        self.unit = if m < Rational::new(3, 4) { Rational::new(1, 16) } else { Rational::new(1, 8) };
                    }
                }
            }
            "K" => self.fifths = key_fifths(&f.value),
            _ => {}
        }
    }

    fn pitch(&mut self, n: &Note) -> (char, i8, i8) {
        let letter = n.pitch.step.letter();
        let key = (letter, n.pitch.octave);
        let alter = match n.pitch.accidental {
            Some(a) => {
                self.accidentals.insert(key, a.alter());
                a.alter()
            }
            None => self.accidentals.get(&key).copied().unwrap_or_else(|| key_alter(self.fifths, letter)),
        };
        (letter, n.pitch.octave, alter)
    }

    fn factor(&mut self) -> Rational {
        let mut f = Rational::from_integer(1);
        if let Some((ratio, left)) = self.tuplet {
            f *= ratio;
            self.tuplet = (left > 1).then_some((ratio, left - 1));
        }
        if let Some(b) = self.broken.take() {
            f *= b;
        }
        f
    }

    fn push(&mut self, items: Vec<PitchDuration>) {
        let f = self.factor();
        self.last.clear();
        for (p, d) in items {
            self.last.push(self.out.len());
            self.out.push((p, d * f));
        }
    }

    fn event(&mut self, e: &MusicEvent) {
        match e {
            MusicEvent::Note(n) => {
                let p = self.pitch(n);
                self.push(vec![(Some(p), self.unit * n.length)]);
            }
            MusicEvent::Rest(r) => {
                assert!(!r.kind.is_multi_measure(), "oracle does not model multi-measure rests");
                self.push(vec![(None, self.unit * r.length)]);
            }
            MusicEvent::Chord(c) => {
                let items: Vec<PitchDuration> =
                    c.notes.iter().map(|n| (Some(self.pitch(n)), self.unit * n.length * c.length)).collect();
                self.push(items);
            }
            MusicEvent::Tuplet(t) => {
                let q = t.q.unwrap_or(match t.p {
                    2 | 4 | 8 => 3,
                    3 | 6 => 2,
                    _ if self.meter_num.is_multiple_of(3) && self.meter_num > 3 => 3,
                    _ => 2,
                });
                self.tuplet = Some((Rational::new(i64::from(q), i64::from(t.p)), t.r.unwrap_or(t.p)));
            }
            MusicEvent::BrokenRhythm(b) => {
                let short = Rational::new(1, 1 << b.degree);
                let long = Rational::from_integer(2) - short;
                let (prev, next) = if b.first_longer { (long, short) } else { (short, long) };
                for &i in &self.last {
                    self.out[i].1 *= prev;
                }
                self.broken = Some(next);
            }
            MusicEvent::InlineField(f) => self.field(f),
            _ => {}
        }
    }
}

/// `(pitch, duration)` of every non-grace note and rest of a single-voice
/// tune, in order, computed straight from the syntax tree.
pub fn sounding_events(score: &AbcScore) -> Vec<PitchDuration> {
    assert!(score.voices.len() <= 1, "oracle handles one voice");
    let mut w = Walk {
        unit: Rational::new(1, 8),
        unit_fixed: false,
        meter_num: 4,
        fifths: 0,
        accidentals: HashMap::new(),
        tuplet: None,
        broken: None,
        out: Vec::new(),
        last: Vec::new(),
    };
    for h in &score.headers {
        w.field(h);
    }
    let Some(voice) = score.voices.first() else { return Vec::new() };

    // Body field lines sit between music segments; apply each before the
    // measures that follow it.
    let mut lines_before_field: Vec<(usize, &HeaderField)> = Vec::new();
    let mut lines = 0;
    let music_segments: Vec<usize> =
        score.layout.iter().enumerate().filter(|(_, s)| matches!(s, Segment::Music { .. })).map(|(i, _)| i).collect();
    for (i, seg) in score.layout.iter().enumerate() {
        match seg {
            Segment::Music { lines: n, .. } => {
                if Some(&i) != music_segments.last() {
                    lines += n;
                }
            }
            Segment::Field(f) => lines_before_field.push((lines, f)),
            Segment::Comment(_) => {}
        }
    }

    let mut line = 0;
    let mut pending = lines_before_field.into_iter().peekable();
    let mut apply_due = |line: usize, w: &mut Walk| {
        while let Some((at, f)) = pending.peek() {
            if *at > line {
                break;
            }
            w.field(f);
            pending.next();
        }
    };
    apply_due(0, &mut w);
    for m in &voice.measures {
        w.accidentals.clear();
        for e in m.lead.iter().chain(&m.events) {
            if let MusicEvent::LineEnd(_) = e {
                line += 1;
                apply_due(line, &mut w);
                continue;
            }
            w.event(e);
        }
        if m.line_end.is_some() {
            line += 1;
            apply_due(line, &mut w);
        }
    }
    w.out
}

/// `(pitch, duration)` of every non-grace `<note>` in a MusicXML tree, in
/// document order, reading `<divisions>` as it changes.
pub fn musicxml_events(tree: &LabeledTree) -> Vec<PitchDuration> {
    let mut out = Vec::new();
    let mut divisions = 1i64;
    for node in tree.preorder() {
        match node.tag().as_str() {
            "divisions" => divisions = node.text().and_then(|t| t.parse().ok()).unwrap_or(1),
            "note" if node.child_tagged("grace").is_none() => {
                let ticks: i64 = node
                    .child_tagged("duration")
                    .and_then(|d| d.text())
                    .and_then(|t| t.parse().ok())
                    .unwrap_or(0);
                let duration = Rational::new(ticks, 4 * divisions);
                let pitch = node.child_tagged("pitch").map(|p| {
                    let get = |tag: &str| p.child_tagged(tag).and_then(|c| c.text());
                    let step = get("step").and_then(|s| s.chars().next()).unwrap_or('?');
                    let octave = get("octave").and_then(|s| s.parse().ok()).unwrap_or(0);
                    let alter = get("alter").and_then(|s| s.parse().ok()).unwrap_or(0);
                    (step, octave, alter)
                });
                out.push((pitch, duration));
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(s: &str) -> LabeledTree {
        LabeledTree::leaf(s)
    }

    #[test]
    fn forest_small_cases() {
        let a = LabeledTree::node("a", vec![l("b"), l("c")]);
        assert_eq!(forest_ted(&a, &a, 1u32, 1, 1), 0);
        assert_eq!(forest_ted(&a, &l("a"), 1u32, 1, 1), 2);
        assert_eq!(forest_ted(&l("x"), &l("y"), 1u32, 1, 1), 1);
        assert_eq!(forest_ted(&l("x"), &l("y"), 1u32, 1, 5), 2);
    }

    #[test]
    fn levenshtein_small_cases() {
        assert_eq!(levenshtein_recursive(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein_recursive(b"", b"abc"), 3);
        assert_eq!(levenshtein_recursive(b"flaw", b"lawn"), 2);
    }

    #[test]
    fn keys() {
        assert_eq!(key_fifths("D"), 2);
        assert_eq!(key_fifths("Bb"), -2);
        assert_eq!(key_fifths("Am"), 0);
        assert_eq!(key_fifths("Ador"), 1);
        assert_eq!(key_fifths("Dmix"), 1);
        assert_eq!(key_fifths("F#m"), 3);
        assert_eq!(key_alter(2, 'C'), 1);
        assert_eq!(key_alter(-2, 'E'), -1);
        assert_eq!(key_alter(-2, 'A'), 0);
    }

    #[test]
    fn walk_matches_hand_count() {
        let score = omrkit::abc::parse_abc("X:1\nM:4/4\nL:1/8\nK:D\nf>g (3abc [Ac]2 z|\n").unwrap();
        let ev = sounding_events(&score);
        let r = Rational::new;
        assert_eq!(ev[0], (Some(('F', 5, 1)), r(3, 16)));
        assert_eq!(ev[1], (Some(('G', 5, 0)), r(1, 16)));
        assert_eq!(ev[2], (Some(('A', 5, 0)), r(1, 12)));
        assert_eq!(ev[4], (Some(('C', 5, 1)), r(1, 12)));
        assert_eq!(ev[5], (Some(('A', 4, 0)), r(1, 4)));
        assert_eq!(ev[7], (None, r(1, 8)));
    }
}
