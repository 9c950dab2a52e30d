use super::{AbcScore, Decoration, Measure, MusicEvent, Note, Pitch, Segment, VoiceSwitch};
use crate::Rational;

/// Length suffix in ABC syntax: `1` is empty, `1/2` is `/`.
pub fn format_length(length: Rational) -> String {
    let (n, d) = (*length.numer(), *length.denom());
    match (n, d) {
        (1, 1) => String::new(),
        (n, 1) => n.to_string(),
        (1, 2) => "/".into(),
        (1, d) => format!("/{d}"),
        (n, d) => format!("{n}/{d}"),
    }
}

/// Accidental, letter and octave marks. Octave 4 is `C`, 5 is `c`.
pub fn format_pitch(pitch: &Pitch) -> String {
    let mut s = String::new();
    if let Some(acc) = pitch.accidental {
        s.push_str(acc.symbol());
    }
    let letter = pitch.step.letter();
    if pitch.octave >= 5 {
        s.push(letter.to_ascii_lowercase());
        for _ in 5..pitch.octave {
            s.push('\'');
        }
    } else {
        s.push(letter);
        for _ in pitch.octave..4 {
            s.push(',');
        }
    }
    s
}

fn note_text(note: &Note, out: &mut String) {
    out.push_str(&format_pitch(&note.pitch));
    out.push_str(&format_length(note.length));
    if note.tie {
        out.push('-');
    }
}

pub(super) fn event_text(event: &MusicEvent) -> String {
    let mut s = String::new();
    push_event(event, &mut s);
    s
}

fn push_event(event: &MusicEvent, out: &mut String) {
    match event {
        MusicEvent::Note(n) => note_text(n, out),
        MusicEvent::Rest(r) => {
            out.push(r.kind.letter());
            out.push_str(&format_length(r.length));
        }
        MusicEvent::Chord(c) => {
            out.push('[');
            for n in &c.notes {
                note_text(n, out);
            }
            out.push(']');
            out.push_str(&format_length(c.length));
            if c.tie {
                out.push('-');
            }
        }
        MusicEvent::Tuplet(t) => {
            out.push('(');
            out.push_str(&t.p.to_string());
            if t.q.is_some() || t.r.is_some() {
                out.push(':');
                if let Some(q) = t.q {
                    out.push_str(&q.to_string());
                }
                if let Some(r) = t.r {
                    out.push(':');
                    out.push_str(&r.to_string());
                }
            }
        }
        MusicEvent::GraceGroup(g) => {
            out.push('{');
            if g.acciaccatura {
                out.push('/');
            }
            for e in &g.events {
                push_event(e, out);
            }
            out.push('}');
        }
        MusicEvent::BrokenRhythm(b) => {
            let c = if b.first_longer { '>' } else { '<' };
            out.extend(std::iter::repeat_n(c, b.degree as usize));
        }
        MusicEvent::Decoration(Decoration::Bang(n)) => {
            out.push('!');
            out.push_str(n);
            out.push('!');
        }
        MusicEvent::Decoration(Decoration::Plus(n)) => {
            out.push('+');
            out.push_str(n);
            out.push('+');
        }
        MusicEvent::Decoration(Decoration::Short(c)) => out.push(*c),
        MusicEvent::InlineField(f) => {
            out.push('[');
            out.push_str(&f.key);
            out.push(':');
            out.push_str(&f.value);
            out.push(']');
        }
        MusicEvent::SlurOpen => out.push('('),
        MusicEvent::SlurClose => out.push(')'),
        MusicEvent::Annotation(a) => {
            out.push('"');
            out.push_str(a);
            out.push('"');
        }
        MusicEvent::TextPlaceholder(t) => {
            out.push_str("<|");
            out.push_str(t);
            out.push_str("|>");
        }
        MusicEvent::Overlay => out.push('&'),
        MusicEvent::Ending(e) => out.push_str(e),
        MusicEvent::Space(s) => out.push_str(s),
        MusicEvent::LineEnd(end) => {
            out.push_str(&end.tail);
            out.push('\n');
        }
        MusicEvent::Opaque(o) => out.push_str(&o.text),
    }
}

/// Text chunk of a voice stream; `ends_line` chunks close one text line.
struct Piece {
    text: String,
    ends_line: bool,
}

fn measure_pieces(m: &Measure, out: &mut Vec<Piece>) {
    let mut text = String::new();
    let flush_events = |events: &[MusicEvent], text: &mut String, out: &mut Vec<Piece>| {
        for e in events {
            push_event(e, text);
            if matches!(e, MusicEvent::LineEnd(_)) {
                out.push(Piece { text: std::mem::take(text), ends_line: true });
            }
        }
    };
    flush_events(&m.lead, &mut text, out);
    if let Some(b) = &m.left_barline {
        text.push_str(b.as_str());
    }
    flush_events(&m.events, &mut text, out);
    if let Some(b) = &m.right_barline {
        text.push_str(b.as_str());
    }
    if m.explicit_linebreak {
        text.push('$');
    }
    match &m.line_end {
        Some(end) => {
            text.push_str(&end.tail);
            text.push('\n');
            out.push(Piece { text, ends_line: true });
        }
        None if !text.is_empty() => out.push(Piece { text, ends_line: false }),
        None => {}
    }
}

/// Render a score back to ABC text.
pub fn emit_abc(score: &AbcScore) -> String {
    let mut out = score.preamble.clone();
    for h in &score.headers {
        out.push_str(&h.to_line());
        out.push('\n');
    }

    let streams: Vec<Vec<Piece>> = score
        .voices
        .iter()
        .map(|v| {
            let mut pieces = Vec::new();
            for m in &v.measures {
                measure_pieces(m, &mut pieces);
            }
            let mut text = String::new();
            for e in &v.trailing {
                push_event(e, &mut text);
                if matches!(e, MusicEvent::LineEnd(_)) {
                    pieces.push(Piece { text: std::mem::take(&mut text), ends_line: true });
                }
            }
            if !text.is_empty() {
                pieces.push(Piece { text, ends_line: false });
            }
            pieces
        })
        .collect();
    let mut cursors = vec![0usize; streams.len()];
    let mut last_segment = vec![None; streams.len()];
    for (i, seg) in score.layout.iter().enumerate() {
        if let Segment::Music { voice, .. } = seg {
            if let Some(slot) = last_segment.get_mut(*voice) {
                *slot = Some(i);
            }
        }
    }

    for (i, seg) in score.layout.iter().enumerate() {
        match seg {
            Segment::Music { voice, switch, lines } => {
                match switch {
                    VoiceSwitch::Line(t) => {
                        out.push_str("V:");
                        out.push_str(t);
                        out.push('\n');
                    }
                    VoiceSwitch::Inline(t) => {
                        out.push_str("[V:");
                        out.push_str(t);
                        out.push(']');
                    }
                    VoiceSwitch::Implicit => {}
                }
                let Some(stream) = streams.get(*voice) else { continue };
                let is_last = last_segment[*voice] == Some(i);
                let cursor = &mut cursors[*voice];
                let mut ended = 0;
                while *cursor < stream.len() && (ended < *lines || is_last) {
                    let piece = &stream[*cursor];
                    out.push_str(&piece.text);
                    ended += usize::from(piece.ends_line);
                    *cursor += 1;
                }
            }
            Segment::Field(f) => {
                out.push_str(&f.to_line());
                out.push('\n');
            }
            Segment::Comment(c) => {
                out.push_str(c);
                out.push('\n');
            }
        }
    }

    // Voices that the layout never mentions (scores built in code).
    for (v, stream) in streams.iter().enumerate() {
        if cursors[v] < stream.len() {
            if !out.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("V:");
            out.push_str(&score.voices[v].id);
            out.push('\n');
            for piece in &stream[cursors[v]..] {
                out.push_str(&piece.text);
            }
            if !out.ends_with('\n') {
                out.push('\n');
            }
        }
    }

    if let Some(t) = &score.trailing {
        out.push_str(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::{Accidental, Step};

    #[test]
    fn lengths() {
        assert_eq!(format_length(Rational::from_integer(1)), "");
        assert_eq!(format_length(Rational::from_integer(4)), "4");
        assert_eq!(format_length(Rational::new(1, 2)), "/");
        assert_eq!(format_length(Rational::new(1, 4)), "/4");
        assert_eq!(format_length(Rational::new(3, 2)), "3/2");
    }

    #[test]
    fn pitches() {
        assert_eq!(format_pitch(&Pitch::new(Step::C, 4)), "C");
        assert_eq!(format_pitch(&Pitch::new(Step::C, 5)), "c");
        assert_eq!(format_pitch(&Pitch::new(Step::C, 7)), "c''");
        assert_eq!(format_pitch(&Pitch::new(Step::G, 2)), "G,,");
        assert_eq!(format_pitch(&Pitch::new(Step::F, 4).with_accidental(Accidental::Sharp)), "^F");
    }
}
