//! Resolves written ABC events into absolute durations and sounding
//! alterations.
//!
//! Durations are fractions of a whole note. The walk applies the unit note
//! length in effect, chord multipliers, tuplets and broken rhythm; alterations
//! follow explicit accidentals, then earlier accidentals on the same pitch in
//! the measure, then the key signature.

use std::collections::HashMap;

use super::fields::voice_id;
use super::{
    default_unit, parse_unit, AbcScore, Barline, Clef, HeaderField, KeySignature, Meter,
    MusicEvent, Note, Pitch, Segment, Step,
};
use crate::Rational;

/// Unit, meter, key and clef in effect at some point of a voice.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub unit: Rational,
    pub meter: Meter,
    pub key: KeySignature,
    pub clef: Option<Clef>,
}

impl Context {
    /// Context given by the tune header alone.
    pub fn from_headers(headers: &[HeaderField]) -> Context {
        let mut meter = Meter::Free;
        let mut unit = None;
        let mut key = KeySignature::default();
        for h in headers {
            match h.key.as_str() {
                "M" => meter = Meter::parse(&h.value).unwrap_or(Meter::Free),
                "L" => unit = parse_unit(&h.value).or(unit),
                "K" => key = KeySignature::parse(&h.value),
                _ => {}
            }
        }
        let unit = unit.unwrap_or_else(|| default_unit(&meter));
        let clef = key.clef;
        Context { unit, meter, key, clef }
    }

    /// Applies an `M:`, `L:` or `K:` field; returns whether anything changed.
    pub fn apply(&mut self, field: &HeaderField) -> bool {
        let before = self.clone();
        match field.key.as_str() {
            "M" => {
                if let Ok(m) = Meter::parse(&field.value) {
                    self.meter = m;
                }
            }
            "L" => {
                if let Some(u) = parse_unit(&field.value) {
                    self.unit = u;
                }
            }
            "K" => {
                let key = KeySignature::parse(&field.value);
                if key.clef.is_some() {
                    self.clef = key.clef;
                }
                self.key = key;
            }
            _ => {}
        }
        *self != before
    }

    pub fn bar_length(&self) -> Option<Rational> {
        self.meter.ratio()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimedKind {
    /// `alter` is the sounding alteration in semitones.
    Note { pitch: Pitch, alter: i8 },
    Rest { visible: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub kind: TimedKind,
    /// Sounding duration in whole notes.
    pub duration: Rational,
    /// Duration before tuplet scaling; decides the printed note type.
    pub written: Rational,
    /// `(actual, normal)` when inside a tuplet.
    pub tuplet: Option<(u32, u32)>,
    /// Second and later members of a chord.
    pub chord: bool,
    pub grace: bool,
    pub tie: bool,
    /// Overlay layer, 0 for the main line of the voice.
    pub layer: u32,
    pub decorations: Vec<String>,
    /// Multi-measure rest count for `Z`/`X`, 1 otherwise.
    pub bars: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimedItem {
    Event(TimedEvent),
    /// The context changed at this point (inline or body field).
    Context(Context),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedMeasure {
    pub start: Context,
    pub items: Vec<TimedItem>,
    pub left_barline: Option<Barline>,
    pub right_barline: Option<Barline>,
    /// Ending marker (`[1`, `|2`) that starts in this measure.
    pub ending: Option<String>,
}

impl TimedMeasure {
    pub fn events(&self) -> impl Iterator<Item = &TimedEvent> {
        self.items.iter().filter_map(|i| match i {
            TimedItem::Event(e) => Some(e),
            TimedItem::Context(_) => None,
        })
    }

    /// Sum of non-grace, non-chord-member durations in layer 0.
    pub fn duration(&self) -> Rational {
        self.events()
            .filter(|e| !e.grace && !e.chord && e.layer == 0)
            .map(|e| e.duration)
            .sum()
    }
}

/// Timeline for every voice, in voice order.
pub fn timelines(score: &AbcScore) -> Vec<Vec<TimedMeasure>> {
    let changes = body_field_changes(score);
    (0..score.voices.len())
        .map(|v| walk_voice(score, v, changes.get(&v).map(Vec::as_slice).unwrap_or(&[])))
        .collect()
}

/// Body field lines (`M:`, `L:`, `K:` on their own line) keyed by voice and
/// by how many text lines of that voice precede them.
fn body_field_changes(score: &AbcScore) -> HashMap<usize, Vec<(usize, HeaderField)>> {
    let mut out: HashMap<usize, Vec<(usize, HeaderField)>> = HashMap::new();
    let mut lines_seen = vec![0usize; score.voices.len()];
    let mut current: Option<usize> = None;
    for seg in &score.layout {
        match seg {
            Segment::Music { voice, lines, .. } => {
                if let Some(n) = lines_seen.get_mut(*voice) {
                    *n += lines;
                }
                current = Some(*voice);
            }
            Segment::Field(f) if matches!(f.key.as_str(), "M" | "L" | "K") => {
                let targets: Vec<usize> = match current {
                    Some(v) => vec![v],
                    None => (0..score.voices.len()).collect(),
                };
                for v in targets {
                    out.entry(v).or_default().push((lines_seen[v], f.clone()));
                }
            }
            _ => {}
        }
    }
    out
}

fn default_tuplet_q(p: u32, meter: &Meter) -> u32 {
    match p {
        2 | 4 | 8 => 3,
        3 | 6 => 2,
        _ if meter.is_compound() => 3,
        _ => 2,
    }
}

struct Walker<'a> {
    ctx: Context,
    measures: Vec<TimedMeasure>,
    current: Option<TimedMeasure>,
    accidentals: HashMap<(Step, i8), i8>,
    /// `(actual, normal, remaining)`.
    tuplet: Option<(u32, u32, u32)>,
    /// Factor for the next rhythmic event after a broken-rhythm sign.
    broken_next: Option<Rational>,
    /// `(measure, first item, end item)` of the last rhythmic event.
    last_rhythmic: Option<(usize, usize, usize)>,
    decorations: Vec<String>,
    layer: u32,
    lines_seen: usize,
    changes: &'a [(usize, HeaderField)],
    next_change: usize,
}

impl<'a> Walker<'a> {
    fn measure(&mut self) -> &mut TimedMeasure {
        let ctx = &self.ctx;
        self.current.get_or_insert_with(|| TimedMeasure {
            start: ctx.clone(),
            items: Vec::new(),
            left_barline: None,
            right_barline: None,
            ending: None,
        })
    }

    fn close_measure(&mut self, right: Option<Barline>) {
        let mut m = self.current.take().unwrap_or_else(|| TimedMeasure {
            start: self.ctx.clone(),
            items: Vec::new(),
            left_barline: None,
            right_barline: None,
            ending: None,
        });
        m.right_barline = right;
        self.measures.push(m);
        self.accidentals.clear();
        self.layer = 0;
    }

    fn change(&mut self, field: &HeaderField) {
        if self.ctx.apply(field) {
            if field.key == "K" {
                self.accidentals.clear();
            }
            let ctx = self.ctx.clone();
            let m = self.measure();
            if m.items.is_empty() {
                m.start = ctx;
            } else {
                m.items.push(TimedItem::Context(ctx));
            }
        }
    }

    fn line_end(&mut self) {
        self.lines_seen += 1;
        while let Some((at, field)) = self.changes.get(self.next_change) {
            if *at > self.lines_seen {
                break;
            }
            self.next_change += 1;
            let field = field.clone();
            self.change(&field);
        }
    }

    fn alter(&mut self, pitch: &Pitch) -> i8 {
        let key = (pitch.step, pitch.octave);
        match pitch.accidental {
            Some(acc) => {
                self.accidentals.insert(key, acc.alter());
                acc.alter()
            }
            None => match self.accidentals.get(&key) {
                Some(a) => *a,
                None => self.ctx.key.alter(pitch.step),
            },
        }
    }

    /// Tuplet and broken-rhythm factors for the next rhythmic event.
    fn rhythm_factor(&mut self) -> (Rational, Option<(u32, u32)>) {
        let mut factor = Rational::from_integer(1);
        let mut tuplet = None;
        if let Some((p, q, remaining)) = self.tuplet {
            factor *= Rational::new(q as i64, p as i64);
            tuplet = Some((p, q));
            self.tuplet = (remaining > 1).then_some((p, q, remaining - 1));
        }
        if let Some(f) = self.broken_next.take() {
            factor *= f;
        }
        (factor, tuplet)
    }

    fn push_rhythmic(&mut self, events: Vec<TimedEvent>) {
        let m = self.measures.len();
        let layer = self.layer;
        let measure = self.measure();
        let start = measure.items.len();
        for mut e in events {
            e.layer = layer;
            measure.items.push(TimedItem::Event(e));
        }
        let end = measure.items.len();
        self.last_rhythmic = Some((m, start, end));
    }

    fn note_event(&mut self, note: &Note, multiplier: Rational, chord: bool, grace: bool) -> TimedEvent {
        let alter = self.alter(&note.pitch);
        let written = self.ctx.unit * note.length * multiplier;
        TimedEvent {
            kind: TimedKind::Note { pitch: note.pitch, alter },
            duration: written,
            written,
            tuplet: None,
            chord,
            grace,
            tie: note.tie,
            layer: 0,
            decorations: Vec::new(),
            bars: 1,
        }
    }

    fn finish_rhythmic(&mut self, mut events: Vec<TimedEvent>) {
        let (factor, tuplet) = self.rhythm_factor();
        let decorations = std::mem::take(&mut self.decorations);
        for e in &mut events {
            e.duration *= factor;
            e.written = match tuplet {
                Some((p, q)) => e.duration * Rational::new(p as i64, q as i64),
                None => e.duration,
            };
            e.tuplet = tuplet;
        }
        if let Some(first) = events.first_mut() {
            first.decorations = decorations;
        }
        self.push_rhythmic(events);
    }

    fn event(&mut self, event: &MusicEvent) {
        match event {
            MusicEvent::Note(n) => {
                let e = self.note_event(n, Rational::from_integer(1), false, false);
                self.finish_rhythmic(vec![e]);
            }
            MusicEvent::Chord(c) => {
                let events = c
                    .notes
                    .iter()
                    .enumerate()
                    .map(|(i, n)| {
                        let mut e = self.note_event(n, c.length, i > 0, false);
                        e.tie |= c.tie;
                        e
                    })
                    .collect();
                self.finish_rhythmic(events);
            }
            MusicEvent::Rest(r) => {
                let (duration, bars) = if r.kind.is_multi_measure() {
                    let bars = r.length.to_integer().max(1);
                    let bar = self.ctx.bar_length().unwrap_or(Rational::from_integer(1));
                    (bar * bars, bars as u32)
                } else {
                    (self.ctx.unit * r.length, 1)
                };
                let visible = matches!(r.kind, super::RestKind::Visible | super::RestKind::MultiMeasure);
                let e = TimedEvent {
                    kind: TimedKind::Rest { visible },
                    duration,
                    written: duration,
                    tuplet: None,
                    chord: false,
                    grace: false,
                    tie: false,
                    layer: 0,
                    decorations: Vec::new(),
                    bars,
                };
                self.finish_rhythmic(vec![e]);
            }
            MusicEvent::GraceGroup(g) => {
                let layer = self.layer;
                let mut out = Vec::new();
                for e in &g.events {
                    match e {
                        MusicEvent::Note(n) => out.push(self.note_event(n, Rational::from_integer(1), false, true)),
                        MusicEvent::Chord(c) => {
                            for (i, n) in c.notes.iter().enumerate() {
                                out.push(self.note_event(n, c.length, i > 0, true));
                            }
                        }
                        _ => {}
                    }
                }
                let m = self.measure();
                for mut e in out {
                    e.layer = layer;
                    m.items.push(TimedItem::Event(e));
                }
            }
            MusicEvent::Tuplet(t) => {
                if t.p >= 2 {
                    let q = t.q.unwrap_or_else(|| default_tuplet_q(t.p, &self.ctx.meter));
                    let r = t.r.unwrap_or(t.p);
                    self.tuplet = Some((t.p, q, r));
                }
            }
            MusicEvent::BrokenRhythm(b) => {
                let short = Rational::new(1, 1 << b.degree);
                let long = Rational::from_integer(2) - short;
                let (prev, next) = if b.first_longer { (long, short) } else { (short, long) };
                if let Some((m, start, end)) = self.last_rhythmic {
                    let items = if m == self.measures.len() {
                        self.current.as_mut().map(|c| &mut c.items)
                    } else {
                        self.measures.get_mut(m).map(|c| &mut c.items)
                    };
                    if let Some(items) = items {
                        for item in &mut items[start..end] {
                            if let TimedItem::Event(e) = item {
                                e.duration *= prev;
                                e.written = match e.tuplet {
                                    Some((p, q)) => e.duration * Rational::new(p as i64, q as i64),
                                    None => e.duration,
                                };
                            }
                        }
                    }
                }
                self.broken_next = Some(next);
            }
            MusicEvent::Decoration(d) => self.decorations.push(d.name()),
            MusicEvent::InlineField(f) => self.change(f),
            MusicEvent::Overlay => {
                self.layer += 1;
                self.accidentals.clear();
            }
            MusicEvent::Ending(e) => {
                self.measure().ending.get_or_insert_with(|| e.clone());
            }
            MusicEvent::LineEnd(_) => self.line_end(),
            MusicEvent::SlurOpen
            | MusicEvent::SlurClose
            | MusicEvent::Annotation(_)
            | MusicEvent::TextPlaceholder(_)
            | MusicEvent::Space(_)
            | MusicEvent::Opaque(_) => {}
        }
    }
}

fn walk_voice(score: &AbcScore, voice: usize, changes: &[(usize, HeaderField)]) -> Vec<TimedMeasure> {
    let mut ctx = Context::from_headers(&score.headers);
    if let Some(decl) = score.voice_declaration(voice) {
        if let Some(clef) = Clef::find(decl) {
            ctx.clef = Some(clef);
        }
    }
    let mut w = Walker {
        ctx,
        measures: Vec::new(),
        current: None,
        accidentals: HashMap::new(),
        tuplet: None,
        broken_next: None,
        last_rhythmic: None,
        decorations: Vec::new(),
        layer: 0,
        lines_seen: 0,
        changes,
        next_change: 0,
    };
    // Changes placed before any music of this voice.
    while let Some((0, field)) = changes.get(w.next_change) {
        w.next_change += 1;
        let field = field.clone();
        w.ctx.apply(&field);
    }

    for m in &score.voices[voice].measures {
        for e in &m.lead {
            w.event(e);
        }
        if let Some(b) = &m.left_barline {
            w.measure().left_barline = Some(b.clone());
            if let Some(digits) = ending_of(b) {
                w.measure().ending = Some(digits);
            }
        }
        for e in &m.events {
            w.event(e);
        }
        w.close_measure(m.right_barline.clone());
        if m.line_end.is_some() {
            w.line_end();
        }
    }
    w.measures
}

/// Ending number carried by a barline such as `|1` or `:|2`.
fn ending_of(bar: &Barline) -> Option<String> {
    let s = bar.as_str();
    let i = s.find(|c: char| c.is_ascii_digit())?;
    Some(s[i..].to_string())
}

/// Identity of a voice for display: its declared id.
pub fn voice_name(score: &AbcScore, voice: usize) -> &str {
    score
        .voice_declaration(voice)
        .map(voice_id)
        .unwrap_or_else(|| score.voices[voice].id.as_str())
}
