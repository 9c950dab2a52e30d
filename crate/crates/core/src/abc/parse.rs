use super::lex::{Lexer, Token};
use super::{
    voice_id, voice_length_diagnostic, AbcError, AbcScore, Barline, Diagnostic, HeaderField,
    LineEnd, Measure, MusicEvent, Segment, SourceDialect, Voice, VoiceSwitch,
};

/// A parsed tune together with the non-fatal problems found on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub score: AbcScore,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parse one ABC tune. Text after the first blank line of the body is kept
/// verbatim in [`AbcScore::trailing`].
pub fn parse_abc(text: &str) -> Result<AbcScore, AbcError> {
    parse_abc_with_diagnostics(text).map(|p| p.score)
}

pub fn parse_abc_with_diagnostics(text: &str) -> Result<Parsed, AbcError> {
    let text = text.replace("\r\n", "\n");
    if text.trim().is_empty() {
        return Err(AbcError::EmptyInput);
    }
    let lines = split_lines(&text);
    let mut diags = Vec::new();

    let x_index = lines
        .iter()
        .position(|l| !is_blank_or_comment(l.text))
        .filter(|&i| lines[i].text.starts_with("X:"))
        .ok_or_else(|| {
            let has_x = lines.iter().any(|l| l.text.starts_with("X:"));
            AbcError::MalformedHeader(if has_x {
                "X: must be the first field of the tune".into()
            } else {
                "missing X: field".into()
            })
        })?;
    let preamble = text[..lines[x_index].start].to_string();

    let mut headers = Vec::new();
    let mut body_start = None;
    for (i, line) in lines.iter().enumerate().skip(x_index) {
        let l = line.text;
        if l.starts_with('%') {
            headers.push(comment_field(l));
            continue;
        }
        let Some((key, value)) = split_field(l) else {
            return Err(AbcError::MalformedHeader(format!(
                "missing K: field before line {}",
                i + 1
            )));
        };
        if key == "X" && i != x_index {
            return Err(AbcError::MalformedHeader("second X: field before K:".into()));
        }
        headers.push(HeaderField::new(key, value));
        if key == "K" {
            body_start = Some(i + 1);
            break;
        }
    }
    let body_start = body_start
        .ok_or_else(|| AbcError::MalformedHeader("missing K: field".into()))?;

    let mut body = Body::new(&headers);
    let mut trailing = None;
    for line in &lines[body_start..] {
        if line.text.trim().is_empty() {
            let rest = &text[line.start..];
            if !rest.trim().is_empty() {
                diags.push(Diagnostic::at(
                    "text after a blank line is not part of this tune",
                    line.start..text.len(),
                ));
            }
            trailing = Some(rest.to_string());
            break;
        }
        body.line(line, &mut diags)?;
    }
    let voices = body.finish(&mut diags)?;

    let score = AbcScore {
        preamble,
        headers,
        voices,
        layout: body.layout,
        trailing,
        source_dialect: SourceDialect::Raw,
    };
    if let Some(d) = voice_length_diagnostic(&score) {
        diags.push(d);
    }
    Ok(Parsed { score, diagnostics: diags })
}

struct Line<'a> {
    start: usize,
    text: &'a str,
    newline: bool,
}

fn split_lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < text.len() {
        match text[start..].find('\n') {
            Some(n) => {
                out.push(Line { start, text: &text[start..start + n], newline: true });
                start += n + 1;
            }
            None => {
                out.push(Line { start, text: &text[start..], newline: false });
                start = text.len();
            }
        }
    }
    out
}

fn is_blank_or_comment(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('%')
}

fn comment_field(line: &str) -> HeaderField {
    if let Some(rest) = line.strip_prefix("%%") {
        HeaderField::new("%%", rest)
    } else {
        HeaderField::new("%", &line[1..])
    }
}

/// `K:G` style field line: one letter (or `+`) and a colon.
fn split_field(line: &str) -> Option<(&str, &str)> {
    let b = line.as_bytes();
    if b.len() >= 2 && (b[0].is_ascii_alphabetic() || b[0] == b'+') && b[1] == b':' {
        Some((&line[..1], &line[2..]))
    } else {
        None
    }
}

/// Field lines inside the body. `A:|` and `A::` read as a note then a
/// barline, so they stay music.
fn body_field(line: &str) -> Option<(&str, &str)> {
    let (key, value) = split_field(line)?;
    let note_letter = matches!(key.as_bytes()[0], b'A'..=b'G' | b'a'..=b'g');
    if note_letter && (value.starts_with('|') || value.starts_with(':')) {
        return None;
    }
    Some((key, value))
}

/// Split a music line into code and the line tail (trailing whitespace,
/// continuation backslash and comment).
fn split_tail(line: &str) -> (&str, &str) {
    let mut in_quote = false;
    let mut comment = line.len();
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '%' if !in_quote => {
                comment = i;
                break;
            }
            _ => {}
        }
    }
    let mut end = line[..comment].trim_end().len();
    if line[..end].ends_with('\\') {
        end = line[..end - 1].trim_end().len();
    }
    (&line[..end], &line[end..])
}

#[derive(Default)]
struct VoiceBuilder {
    voice: Voice,
    pending: Measure,
    /// The previous token closed a measure, so `$` marks its line break.
    just_closed: bool,
    open_slurs: Vec<usize>,
}

impl VoiceBuilder {
    fn event(&mut self, event: MusicEvent) {
        self.just_closed = false;
        self.pending.events.push(event);
    }

    fn barline(&mut self, bar: Barline) {
        if self.pending.has_content() || self.pending.left_barline.is_some() {
            self.pending.right_barline = Some(bar);
            self.voice.measures.push(std::mem::take(&mut self.pending));
            self.just_closed = true;
        } else {
            self.pending.lead = std::mem::take(&mut self.pending.events);
            self.pending.left_barline = Some(bar);
            self.just_closed = false;
        }
    }

    fn line_end(&mut self, tail: &str) {
        self.just_closed = false;
        let attach = self.pending.events.is_empty()
            && self.pending.left_barline.is_none()
            && self.voice.measures.last().is_some_and(|m| m.line_end.is_none());
        let end = LineEnd { tail: tail.to_string() };
        if attach {
            self.voice.measures.last_mut().expect("checked above").line_end = Some(end);
        } else {
            self.pending.events.push(MusicEvent::LineEnd(end));
        }
    }

    fn finish(&mut self) -> Result<(), AbcError> {
        if let Some(&offset) = self.open_slurs.last() {
            return Err(AbcError::UnbalancedBrackets { what: "slur", offset });
        }
        let mut pending = std::mem::take(&mut self.pending);
        if pending.has_content() || pending.left_barline.is_some() {
            if let Some(MusicEvent::LineEnd(_)) = pending.events.last() {
                let Some(MusicEvent::LineEnd(end)) = pending.events.pop() else { unreachable!() };
                pending.line_end = Some(end);
            }
            self.voice.measures.push(pending);
        } else {
            self.voice.trailing = pending.events;
        }
        Ok(())
    }
}

struct Body {
    voices: Vec<VoiceBuilder>,
    current: Option<usize>,
    layout: Vec<Segment>,
    /// The last layout entry is a music segment that following music lines
    /// extend.
    in_music: bool,
}

impl Body {
    fn new(headers: &[HeaderField]) -> Self {
        let mut body = Body { voices: Vec::new(), current: None, layout: Vec::new(), in_music: false };
        for h in headers.iter().filter(|h| h.is("V")) {
            body.voice(voice_id(&h.value));
        }
        body
    }

    fn voice(&mut self, id: &str) -> usize {
        if let Some(i) = self.voices.iter().position(|v| v.voice.id == id) {
            return i;
        }
        self.voices.push(VoiceBuilder { voice: Voice::new(id), ..Default::default() });
        self.voices.len() - 1
    }

    fn line(&mut self, line: &Line<'_>, diags: &mut Vec<Diagnostic>) -> Result<(), AbcError> {
        let text = line.text;
        if text.starts_with('%') {
            self.layout.push(Segment::Comment(text.to_string()));
            self.in_music = false;
            return Ok(());
        }
        if let Some((key, value)) = body_field(text) {
            if key == "V" {
                let idx = self.voice(voice_id(value));
                self.layout.push(Segment::Music {
                    voice: idx,
                    switch: VoiceSwitch::Line(value.to_string()),
                    lines: 0,
                });
                self.current = Some(idx);
                self.in_music = true;
            } else {
                self.layout.push(Segment::Field(HeaderField::new(key, value)));
                self.in_music = false;
            }
            return Ok(());
        }

        let mut code_start = 0;
        let inline_switch = text
            .strip_prefix("[V:")
            .and_then(|rest| rest.find(']').map(|end| &rest[..end]));
        let idx = if let Some(inner) = inline_switch {
            let idx = self.voice(voice_id(inner));
            self.layout.push(Segment::Music {
                voice: idx,
                switch: VoiceSwitch::Inline(inner.to_string()),
                lines: 1,
            });
            code_start = inner.len() + 4;
            idx
        } else {
            let idx = match self.current {
                Some(i) => i,
                None if !self.voices.is_empty() => 0,
                None => self.voice("1"),
            };
            match self.layout.last_mut() {
                Some(Segment::Music { voice, lines, .. }) if self.in_music && *voice == idx => {
                    *lines += 1
                }
                _ => self.layout.push(Segment::Music { voice: idx, switch: VoiceSwitch::Implicit, lines: 1 }),
            }
            idx
        };
        self.current = Some(idx);
        self.in_music = true;

        let (code, tail) = split_tail(&text[code_start..]);
        let base = line.start + code_start;
        let tokens = Lexer::new(code, base, diags).tokens()?;
        let vb = &mut self.voices[idx];
        for (tok, offset) in tokens {
            match tok {
                Token::Barline(b) => vb.barline(b),
                Token::Dollar if vb.just_closed => {
                    vb.voice.measures.last_mut().expect("a measure was just closed").explicit_linebreak = true;
                    vb.just_closed = false;
                }
                Token::Dollar => {
                    diags.push(Diagnostic::at("`$` not after a barline kept as opaque text", offset..offset + 1));
                    vb.event(MusicEvent::Opaque(super::Opaque { text: "$".into(), offset }));
                }
                Token::Event(MusicEvent::InlineField(f)) if f.is("V") => {
                    diags.push(Diagnostic::at(
                        "voice switch in the middle of a line is kept as an inline field",
                        offset..offset + f.value.len() + 4,
                    ));
                    vb.event(MusicEvent::InlineField(f));
                }
                Token::Event(MusicEvent::SlurOpen) => {
                    vb.open_slurs.push(offset);
                    vb.event(MusicEvent::SlurOpen);
                }
                Token::Event(MusicEvent::SlurClose) => {
                    if vb.open_slurs.pop().is_none() {
                        return Err(AbcError::UnbalancedBrackets { what: "slur", offset });
                    }
                    vb.event(MusicEvent::SlurClose);
                }
                Token::Event(e) => vb.event(e),
            }
        }
        if line.newline || !tail.is_empty() {
            vb.line_end(tail);
        }
        Ok(())
    }

    fn finish(&mut self, _diags: &mut [Diagnostic]) -> Result<Vec<Voice>, AbcError> {
        let mut voices = Vec::with_capacity(self.voices.len());
        for vb in &mut self.voices {
            vb.finish()?;
            voices.push(std::mem::take(&mut vb.voice));
        }
        Ok(voices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::{emit_abc, measure_count, Chord, Note, Step};
    use crate::Rational;

    const MINIMAL: &str = "X:1\nT:t\nM:4/4\nL:1/8\nK:C\nCDEF|\n";

    #[test]
    fn minimal_tune() {
        let s = parse_abc(MINIMAL).unwrap();
        assert_eq!(s.voices.len(), 1);
        assert_eq!(s.voices[0].measures.len(), 1);
        let notes: Vec<&Note> = s.voices[0].measures[0]
            .events
            .iter()
            .filter_map(|e| match e {
                MusicEvent::Note(n) => Some(n),
                _ => None,
            })
            .collect();
        assert_eq!(notes.len(), 4);
        assert!(notes.iter().all(|n| n.length == Rational::from_integer(1)));
        assert_eq!(s.unit_note(), Rational::new(1, 8));
        assert_eq!(emit_abc(&s), MINIMAL);
    }

    #[test]
    fn chord_length() {
        let s = parse_abc("X:1\nL:1/4\nK:C\n[CEG]4|\n").unwrap();
        let MusicEvent::Chord(Chord { notes, length, .. }) = &s.voices[0].measures[0].events[0] else {
            panic!()
        };
        assert_eq!(notes.iter().map(|n| n.pitch.step).collect::<Vec<_>>(), [Step::C, Step::E, Step::G]);
        assert_eq!(*length, Rational::from_integer(4));
    }

    #[test]
    fn default_unit_without_l_field() {
        assert_eq!(parse_abc("X:1\nM:2/4\nK:C\nC|\n").unwrap().unit_note(), Rational::new(1, 16));
        assert_eq!(parse_abc("X:1\nM:6/8\nK:C\nC|\n").unwrap().unit_note(), Rational::new(1, 8));
    }

    #[test]
    fn explicit_linebreak() {
        let s = parse_abc("X:1\nK:C\nA|B|C|D|E|$F|\n").unwrap();
        let m = &s.voices[0].measures;
        assert_eq!(m.len(), 6);
        assert!(m[4].explicit_linebreak);
        assert_eq!(m.iter().filter(|m| m.explicit_linebreak).count(), 1);
    }

    #[test]
    fn measure_counts() {
        assert_eq!(measure_count(&parse_abc(MINIMAL).unwrap()), 1);
        let twelve = format!("X:1\nK:C\n{}\n", "C|".repeat(12));
        assert_eq!(measure_count(&parse_abc(&twelve).unwrap()), 12);
        let multi = "X:1\nK:C\nV:1\nC|C|C|C|C|C|C|\nV:2\nC|C|C|C|C|C|\n";
        let p = parse_abc_with_diagnostics(multi).unwrap();
        assert_eq!(measure_count(&p.score), 7);
        assert!(p.diagnostics.iter().any(|d| d.message.contains("unequal")));
    }

    #[test]
    fn hard_errors() {
        assert!(matches!(parse_abc("T:x\nK:C\nC|\n"), Err(AbcError::MalformedHeader(_))));
        assert!(matches!(parse_abc("X:1\nT:x\nC|\n"), Err(AbcError::MalformedHeader(_))));
        assert!(matches!(parse_abc("X:1\nK:C\n(CD|\n"), Err(AbcError::UnbalancedBrackets { .. })));
        assert!(matches!(parse_abc("X:1\nK:C\nCD)|\n"), Err(AbcError::UnbalancedBrackets { .. })));
        assert!(matches!(parse_abc("X:1\nK:C\nC0|\n"), Err(AbcError::BadDuration { .. })));
        assert_eq!(parse_abc("  \n"), Err(AbcError::EmptyInput));
    }

    #[test]
    fn voices_and_layout() {
        let src = "X:1\nM:2/4\nK:G\nV:1 clef=treble\nAB|cd|\n%%comment\nw:la la\nV:2\n[V:1]ef|\nGA|Bc|\n";
        let s = parse_abc(src).unwrap();
        assert_eq!(s.voices.len(), 2);
        assert_eq!(s.voices[0].measures.len(), 5);
        assert_eq!(s.voices[1].measures.len(), 0);
        assert_eq!(emit_abc(&s), src);
    }

    #[test]
    fn roundtrip_odd_layout() {
        for src in [
            "% pre\n\nX:1\nK:C\n|:C D E F:|[1 G2 \\ % cont\n|][2 A2|]\n",
            "X:1\nK:C\n  C D\n  E F|G\n",
            "X:1\nK:C\nC2 z2 | \"Am\"!trill!c>d (3efg|$\nA|]",
            "X:1\nK:C\nCDEF|\n\nX:2\nK:D\nDD|\n",
            "X:1\nK:C\n|C|D\n|E|\n",
            "X:1\nK:C\nC#*D|\n",
        ] {
            let p = parse_abc_with_diagnostics(src).unwrap();
            assert_eq!(emit_abc(&p.score), src, "{src:?}");
        }
    }

    #[test]
    fn crlf_is_normalized() {
        let a = parse_abc("X:1\r\nK:C\r\nCD|\r\n").unwrap();
        let b = parse_abc("X:1\nK:C\nCD|\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn field_like_music_line() {
        let s = parse_abc("X:1\nK:C\nA:|B\n").unwrap();
        assert_eq!(s.voices[0].measures.len(), 2);
        assert!(matches!(s.layout[0], Segment::Music { .. }));
    }

    #[test]
    fn trailing_blank_body_line() {
        let s = parse_abc("X:1\nK:C\nCD|\n\n").unwrap();
        assert_eq!(s.trailing.as_deref(), Some("\n"));
    }
}
