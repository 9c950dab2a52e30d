//! Canonical training dialect.
//!
//! A canonical tune has one fixed unit note length, a fixed number of bars
//! per text line, each line ending in a `%N` comment with the running bar
//! count, and (for several voices) lines of all voices interleaved, each
//! prefixed by `[V:id]`. Meter and key changes in the body become inline
//! fields. [`mask_text`] replaces free text with a placeholder token.
//!
//! Text lines no longer say where the score breaks, so the source's score
//! line breaks are written as `$` and the header declares `I:linebreak $`.
//! Which source marks count as breaks follows its own `I:linebreak` (or
//! `%%linebreak`) setting; without one, both line ends and `$` do.

use thiserror::Error;

use crate::abc::{
    parse_unit, scan_barline, AbcScore, Barline, HeaderField, LineEnd, Measure,
    MusicEvent, Opaque, Segment, SourceDialect, VoiceSwitch,
};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonConfig {
    pub bars_per_line: usize,
    pub unit_note: Rational,
    pub text_token: String,
}

impl Default for CanonConfig {
    fn default() -> Self {
        CanonConfig {
            bars_per_line: 5,
            unit_note: Rational::new(1, 8),
            text_token: "<|text|>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("invalid canonicalization config: {0}")]
    InvalidConfig(String),
    #[error("length {length} at unit {from} has no power-of-two form at unit {to} (voice {voice}, bar {measure})")]
    NonRepresentableDuration { voice: String, measure: usize, length: Rational, from: Rational, to: Rational },
}

impl CanonConfig {
    pub fn validate(&self) -> Result<(), CanonError> {
        if self.bars_per_line == 0 {
            return Err(CanonError::InvalidConfig("bars_per_line must be at least 1".into()));
        }
        let u = self.unit_note;
        let ok = *u.numer() == 1 && (*u.denom()).count_ones() == 1 && *u.denom() <= 64;
        if !ok {
            return Err(CanonError::InvalidConfig(format!("unit note {u} is not one of 1/1 .. 1/64")));
        }
        Ok(())
    }
}

fn is_power_of_two_denominator(r: Rational) -> bool {
    (*r.denom()).count_ones() == 1
}

/// Rewrites a tune into the canonical dialect. The result parses back to an
/// equal score, and canonicalizing it again changes nothing.
pub fn canonicalize(score: &AbcScore, config: &CanonConfig) -> Result<AbcScore, CanonError> {
    config.validate()?;
    let mut out = score.clone();
    let policy = LinebreakPolicy::of(&out);
    for voice in &mut out.voices {
        mark_score_breaks(&mut voice.measures, policy);
    }
    let anchors = inline_body_fields(&mut out);
    rescale(&mut out, config.unit_note)?;
    set_unit_header(&mut out, config.unit_note);
    set_linebreak_header(&mut out);
    for voice in &mut out.voices {
        voice.trailing.clear();
        for m in &mut voice.measures {
            tidy_measure(m);
        }
        merge_barlines(&mut voice.measures);
    }
    out.layout = canonical_layout(&mut out, anchors, config.bars_per_line);
    out.source_dialect = SourceDialect::Canonical;
    Ok(out)
}

/// Which source marks end a score line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LinebreakPolicy {
    end_of_line: bool,
    dollar: bool,
}

fn linebreak_value(h: &HeaderField) -> Option<String> {
    let line = h.to_line();
    let rest = if h.is("I") { h.value.trim_start().strip_prefix("linebreak") } else { line.strip_prefix("%%linebreak") };
    rest.map(str::to_string)
}

impl LinebreakPolicy {
    /// The last `linebreak` directive of the tune header, else the file
    /// preamble, else the default of both marks.
    fn of(score: &AbcScore) -> Self {
        let from_header = score.headers.iter().rev().find_map(linebreak_value);
        let from_preamble = || {
            score.preamble.lines().rev().find_map(|l| l.trim().strip_prefix("%%linebreak").map(str::to_string))
        };
        match from_header.or_else(from_preamble) {
            Some(v) => {
                let words: Vec<&str> = v.split_whitespace().collect();
                LinebreakPolicy { end_of_line: words.contains(&"<EOL>"), dollar: words.contains(&"$") }
            }
            None => LinebreakPolicy { end_of_line: true, dollar: true },
        }
    }
}

fn is_continuation(end: &LineEnd) -> bool {
    end.tail.trim_start().starts_with('\\')
}

/// Turns the source's score line breaks into `$` marks: on the measure for a
/// break at a barline, as an opaque `$` ahead of the line end for a break
/// inside a measure. Text line ends stay until [`tidy_measure`] drops them.
fn mark_score_breaks(measures: &mut [Measure], policy: LinebreakPolicy) {
    let last = measures.len().saturating_sub(1);
    for i in 0..measures.len() {
        if !policy.dollar {
            measures[i].explicit_linebreak = false;
        }
        if !policy.end_of_line {
            continue;
        }
        let breaks_in_lead =
            measures[i].lead.iter().any(|e| matches!(e, MusicEvent::LineEnd(end) if !is_continuation(end)));
        if breaks_in_lead && i > 0 {
            measures[i - 1].explicit_linebreak = true;
        }
        let m = &mut measures[i];
        if i < last && m.line_end.as_ref().is_some_and(|end| !is_continuation(end)) {
            m.explicit_linebreak = true;
        }
        let mut events = Vec::with_capacity(m.events.len());
        for e in m.events.drain(..) {
            if matches!(&e, MusicEvent::LineEnd(end) if !is_continuation(end)) {
                events.push(MusicEvent::Opaque(Opaque { text: "$".into(), offset: 0 }));
            }
            events.push(e);
        }
        m.events = events;
    }
    // Nothing follows the last bar, so it never ends a score line.
    if let Some(m) = measures.last_mut() {
        m.explicit_linebreak = false;
    }
}

/// Replaces any `linebreak` directive in the tune header with `I:linebreak $`.
fn set_linebreak_header(score: &mut AbcScore) {
    score.headers.retain(|h| linebreak_value(h).is_none());
    let k = score.headers.iter().position(|h| h.is("K")).unwrap_or(score.headers.len());
    score.headers.insert(k, HeaderField::new("I", "linebreak $"));
}

/// Where a body line sat: after this many complete measures of a voice.
struct Anchored {
    measures_before: usize,
    segment: Segment,
}

/// Text-line boundaries of one voice: `(measure, Some(event index))` for a
/// break inside a measure, `(measure, None)` for a break after it.
fn line_breaks(measures: &[Measure]) -> Vec<(usize, Option<usize>)> {
    let mut out = Vec::new();
    for (i, m) in measures.iter().enumerate() {
        for _ in m.lead.iter().filter(|e| matches!(e, MusicEvent::LineEnd(_))) {
            out.push((i, Some(0)));
        }
        for (j, e) in m.events.iter().enumerate() {
            if matches!(e, MusicEvent::LineEnd(_)) {
                out.push((i, Some(j + 1)));
            }
        }
        if m.line_end.is_some() {
            out.push((i, None));
        }
    }
    out
}

/// Turns `K:`, `M:` and `L:` body lines into inline fields at the same stream
/// position and records where the remaining field and comment lines sit.
fn inline_body_fields(score: &mut AbcScore) -> Vec<Anchored> {
    let breaks: Vec<Vec<(usize, Option<usize>)>> =
        score.voices.iter().map(|v| line_breaks(&v.measures)).collect();
    let mut lines_seen = vec![0usize; score.voices.len()];
    let mut current: Option<usize> = None;
    // (voice, measure, event index, field), in source order.
    let mut inserts: Vec<(usize, usize, usize, HeaderField)> = Vec::new();
    let mut anchors = Vec::new();

    let position = |v: usize, lines: usize, measures: &[Measure]| -> Option<(usize, usize)> {
        if measures.is_empty() {
            return None;
        }
        if lines == 0 {
            return Some((0, 0));
        }
        match breaks[v].get(lines - 1) {
            Some(&(m, Some(j))) => Some((m, j)),
            Some(&(m, None)) if m + 1 < measures.len() => Some((m + 1, 0)),
            _ => {
                let last = measures.len() - 1;
                Some((last, measures[last].events.len()))
            }
        }
    };

    for seg in &score.layout {
        match seg {
            Segment::Music { voice, lines, .. } => {
                if let Some(n) = lines_seen.get_mut(*voice) {
                    *n += lines;
                }
                current = Some(*voice);
            }
            Segment::Field(f) if f.is("K") || f.is("M") || f.is("L") => {
                let targets: Vec<usize> = match current {
                    Some(v) => vec![v],
                    None => (0..score.voices.len()).collect(),
                };
                for v in targets {
                    if let Some((m, j)) = position(v, lines_seen[v], &score.voices[v].measures) {
                        inserts.push((v, m, j, f.clone()));
                    }
                }
            }
            other => {
                let measures_before = match current {
                    Some(v) => complete_measures(&breaks[v], lines_seen[v]),
                    None => 0,
                };
                anchors.push(Anchored { measures_before, segment: other.clone() });
            }
        }
    }

    // Insert back to front so earlier indices stay valid; equal positions
    // keep source order.
    for (v, m, j, f) in inserts.into_iter().rev() {
        score.voices[v].measures[m].events.insert(j, MusicEvent::InlineField(f));
    }
    anchors
}

fn complete_measures(breaks: &[(usize, Option<usize>)], lines: usize) -> usize {
    if lines == 0 {
        return 0;
    }
    match breaks.get(lines - 1).or(breaks.last()) {
        Some(&(m, None)) => m + 1,
        Some(&(m, Some(_))) => m,
        None => 0,
    }
}

/// Rescales every length to the new unit, removing `L:` changes.
fn rescale(score: &mut AbcScore, unit: Rational) -> Result<(), CanonError> {
    let header_unit = score.unit_note();
    for voice in &mut score.voices {
        let mut current = header_unit;
        for (mi, m) in voice.measures.iter_mut().enumerate() {
            let fail = |length: Rational, from: Rational| CanonError::NonRepresentableDuration {
                voice: voice.id.clone(),
                measure: mi + 1,
                length,
                from,
                to: unit,
            };
            let mut events = Vec::with_capacity(m.events.len());
            for mut e in m.events.drain(..) {
                if let MusicEvent::InlineField(f) = &e {
                    if f.is("L") {
                        if let Some(u) = parse_unit(&f.value) {
                            current = u;
                        }
                        continue;
                    }
                }
                let factor = current / unit;
                rescale_event(&mut e, factor).map_err(|len| fail(len, current))?;
                events.push(e);
            }
            m.events = events;
        }
    }
    Ok(())
}

fn scale(length: &mut Rational, factor: Rational) -> Result<(), Rational> {
    let scaled = *length * factor;
    if !is_power_of_two_denominator(scaled) {
        return Err(*length);
    }
    *length = scaled;
    Ok(())
}

fn rescale_event(e: &mut MusicEvent, factor: Rational) -> Result<(), Rational> {
    match e {
        MusicEvent::Note(n) => scale(&mut n.length, factor),
        MusicEvent::Rest(r) if !r.kind.is_multi_measure() => scale(&mut r.length, factor),
        MusicEvent::Chord(c) => scale(&mut c.length, factor),
        MusicEvent::GraceGroup(g) => {
            for inner in &mut g.events {
                rescale_event(inner, factor)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn set_unit_header(score: &mut AbcScore, unit: Rational) {
    let value = format!("{}/{}", unit.numer(), unit.denom());
    score.headers.retain(|h| !h.is("L"));
    let k = score.headers.iter().position(|h| h.is("K")).unwrap_or(score.headers.len());
    score.headers.insert(k, HeaderField::new("L", value));
}

/// Drops line structure and boundary whitespace from a measure.
fn tidy_measure(m: &mut Measure) {
    m.lead.clear();
    m.line_end = None;
    let mut events: Vec<MusicEvent> = Vec::with_capacity(m.events.len());
    for e in m.events.drain(..) {
        if matches!(e, MusicEvent::LineEnd(_)) {
            continue;
        }
        match (events.last_mut(), e) {
            (Some(MusicEvent::Space(a)), MusicEvent::Space(b)) => a.push_str(&b),
            (Some(MusicEvent::Opaque(a)), MusicEvent::Opaque(b)) => a.text.push_str(&b.text),
            (_, e) => events.push(e),
        }
    }
    while matches!(events.first(), Some(MusicEvent::Space(_))) {
        events.remove(0);
    }
    while matches!(events.last(), Some(MusicEvent::Space(_))) {
        events.pop();
    }
    m.events = events;
}

/// `|` followed by `|:` would read back as one `||:` token; store it that way.
fn merge_barlines(measures: &mut [Measure]) {
    for i in 1..measures.len() {
        let (before, after) = measures.split_at_mut(i);
        let (prev, cur) = (&mut before[i - 1], &mut after[0]);
        if let (Some(right), Some(left)) = (&prev.right_barline, &cur.left_barline) {
            let joined = format!("{}{}", right.as_str(), left.as_str());
            if !prev.explicit_linebreak && scan_barline(&joined) == Some(joined.len()) {
                prev.right_barline = Some(Barline(joined));
                cur.left_barline = None;
            }
        }
    }
}

fn canonical_layout(score: &mut AbcScore, anchors: Vec<Anchored>, per_line: usize) -> Vec<Segment> {
    let nvoices = score.voices.len();
    let declared_in_header: Vec<bool> = (0..nvoices)
        .map(|v| score.headers.iter().any(|h| h.is("V") && crate::abc::voice_id(&h.value) == score.voices[v].id))
        .collect();
    let declarations: Vec<Option<String>> =
        (0..nvoices).map(|v| score.voice_declaration(v).map(str::to_string)).collect();
    let groups = score.voices.iter().map(|v| v.measures.len().div_ceil(per_line)).max().unwrap_or(0);

    // Line ends: the last bar of each line carries `%N`.
    for voice in &mut score.voices {
        let len = voice.measures.len();
        for (i, m) in voice.measures.iter_mut().enumerate() {
            let end_of_line = (i + 1) % per_line == 0 || i + 1 == len;
            if end_of_line {
                m.line_end = Some(LineEnd { tail: format!("%{}", i + 1) });
            }
        }
    }

    let anchored_after = |a: &Anchored| a.measures_before.div_ceil(per_line).min(groups);
    let mut layout = Vec::new();
    let push_anchored = |layout: &mut Vec<Segment>, group: usize| {
        for a in anchors.iter().filter(|a| anchored_after(a) == group) {
            layout.push(a.segment.clone());
        }
    };

    if nvoices == 1 {
        let switch = if declared_in_header[0] || (declarations[0].is_none() && score.voices[0].id == "1") {
            VoiceSwitch::Implicit
        } else {
            match score.layout.iter().find_map(|s| match s {
                Segment::Music { voice: 0, switch: sw @ VoiceSwitch::Line(_), .. } => Some(sw.clone()),
                _ => None,
            }) {
                Some(sw) => sw,
                None => VoiceSwitch::Inline(declarations[0].clone().unwrap_or_else(|| score.voices[0].id.clone())),
            }
        };
        let mut first = Some(switch);
        let mut open = false;
        if matches!(first, Some(VoiceSwitch::Line(_))) {
            layout.push(Segment::Music { voice: 0, switch: first.take().expect("checked"), lines: 0 });
            open = true;
        }
        for g in 0..=groups {
            if g > 0 {
                match layout.last_mut() {
                    Some(Segment::Music { lines, .. }) if open => *lines += 1,
                    _ => {
                        let switch = first.take().unwrap_or(VoiceSwitch::Implicit);
                        layout.push(Segment::Music { voice: 0, switch, lines: 1 });
                        open = true;
                    }
                }
            }
            if anchors.iter().any(|a| anchored_after(a) == g) {
                push_anchored(&mut layout, g);
                open = false;
            }
        }
        return layout;
    }

    for v in 0..nvoices {
        if !declared_in_header[v] {
            let text = declarations[v].clone().unwrap_or_else(|| score.voices[v].id.clone());
            layout.push(Segment::Music { voice: v, switch: VoiceSwitch::Line(text), lines: 0 });
        }
    }
    push_anchored(&mut layout, 0);
    for g in 1..=groups {
        for v in 0..nvoices {
            if score.voices[v].measures.len() > (g - 1) * per_line {
                let id = score.voices[v].id.clone();
                layout.push(Segment::Music { voice: v, switch: VoiceSwitch::Inline(id), lines: 1 });
            }
        }
        push_anchored(&mut layout, g);
    }
    layout
}

/// Replaces titles, composers, lyrics, voice names and annotations with
/// `token`.
pub fn mask_text(score: &AbcScore, token: &str) -> AbcScore {
    let mut out = score.clone();
    let mask_field = |f: &mut HeaderField| match f.key.as_str() {
        "T" | "C" | "w" | "W" => f.value = token.to_string(),
        "V" => f.value = mask_voice_names(&f.value, token),
        _ => {}
    };
    for h in &mut out.headers {
        mask_field(h);
    }
    for seg in &mut out.layout {
        match seg {
            Segment::Field(f) => mask_field(f),
            Segment::Music { switch: VoiceSwitch::Line(t) | VoiceSwitch::Inline(t), .. } => {
                *t = mask_voice_names(t, token);
            }
            _ => {}
        }
    }
    for voice in &mut out.voices {
        for m in &mut voice.measures {
            for e in m.events.iter_mut().chain(m.lead.iter_mut()) {
                mask_event(e, token);
            }
        }
        for e in &mut voice.trailing {
            mask_event(e, token);
        }
    }
    out
}

fn mask_event(e: &mut MusicEvent, token: &str) {
    match e {
        MusicEvent::Annotation(a) => {
            let keep = a.chars().next().filter(|c| "^_<>@".contains(*c));
            *a = match keep {
                Some(c) => format!("{c}{token}"),
                None => token.to_string(),
            };
        }
        MusicEvent::InlineField(f) if f.is("V") => f.value = mask_voice_names(&f.value, token),
        _ => {}
    }
}

/// Masks `nm=`, `snm=`, `name=` and `subname=` values in a `V:` declaration.
fn mask_voice_names(value: &str, token: &str) -> String {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some((pos, key_len)) = find_name_key(rest) {
        let (head, tail) = rest.split_at(pos + key_len);
        out.push_str(head);
        if let Some(quoted) = tail.strip_prefix('"') {
            let end = quoted.find('"').map_or(quoted.len(), |e| e + 1);
            out.push('"');
            out.push_str(token);
            out.push('"');
            rest = &quoted[end.min(quoted.len())..];
        } else {
            let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
            out.push_str(token);
            rest = &tail[end..];
        }
    }
    out.push_str(rest);
    out
}

/// First `name=`-like key that starts a word; `(offset, key length)`.
fn find_name_key(s: &str) -> Option<(usize, usize)> {
    const KEYS: [&str; 4] = ["subname=", "name=", "snm=", "nm="];
    let mut best: Option<(usize, usize)> = None;
    for key in KEYS {
        let mut from = 0;
        while let Some(i) = s[from..].find(key) {
            let at = from + i;
            let word_start = at == 0 || s[..at].ends_with(char::is_whitespace);
            if word_start {
                if best.is_none_or(|(b, _)| at < b) {
                    best = Some((at, key.len()));
                }
                break;
            }
            from = at + key.len();
        }
    }
    best
}
