//! Tokenizer for the code part of one body line (comments already removed).

use super::{
    AbcError, Accidental, Barline, BrokenRhythm, Chord, Decoration, Diagnostic, GraceGroup,
    HeaderField, MusicEvent, Note, Opaque, Pitch, Rest, RestKind, Step, Tuplet,
};
use crate::Rational;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Token {
    Event(MusicEvent),
    Barline(Barline),
    /// `$`; an engraved line break when it follows a barline.
    Dollar,
}

const SHORT_DECORATIONS: &str = ".~HLMOPSTuv";

pub(super) struct Lexer<'a, 'd> {
    src: &'a str,
    pos: usize,
    /// Offset of `src` in the whole (normalized) input.
    base: usize,
    diags: &'d mut Vec<Diagnostic>,
}

impl<'a, 'd> Lexer<'a, 'd> {
    pub(super) fn new(src: &'a str, base: usize, diags: &'d mut Vec<Diagnostic>) -> Self {
        Lexer { src, pos: 0, base, diags }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub(super) fn tokens(mut self) -> Result<Vec<(Token, usize)>, AbcError> {
        let mut out: Vec<(Token, usize)> = Vec::new();
        while self.pos < self.src.len() {
            let start = self.offset();
            let tok = self.next_token()?;
            // Merge adjacent opaque runs into one span.
            if let (Token::Event(MusicEvent::Opaque(o)), Some((Token::Event(MusicEvent::Opaque(prev)), _))) =
                (&tok, out.last_mut())
            {
                if prev.offset + prev.text.len() == o.offset {
                    prev.text.push_str(&o.text);
                    continue;
                }
            }
            out.push((tok, start));
        }
        for (tok, start) in &out {
            if let Token::Event(MusicEvent::Opaque(o)) = tok {
                self.diags.push(Diagnostic::at(
                    format!("unsupported construct `{}` kept as opaque text", o.text),
                    *start..*start + o.text.len(),
                ));
            }
        }
        Ok(out)
    }

    fn opaque_char(&mut self) -> Token {
        let offset = self.offset();
        let c = self.bump().expect("opaque_char called at end of input");
        Token::Event(MusicEvent::Opaque(Opaque { text: c.to_string(), offset }))
    }

    fn opaque_span(&self, start: usize, end: usize) -> Token {
        Token::Event(MusicEvent::Opaque(Opaque {
            text: self.src[start..end].to_string(),
            offset: self.base + start,
        }))
    }

    fn next_token(&mut self) -> Result<Token, AbcError> {
        let c = self.peek().expect("next_token called at end of input");
        if c.is_whitespace() {
            let start = self.pos;
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            return Ok(Token::Event(MusicEvent::Space(self.src[start..self.pos].to_string())));
        }
        if let Some(len) = scan_barline(self.rest()) {
            let text = self.rest()[..len].to_string();
            self.pos += len;
            return Ok(Token::Barline(Barline(text)));
        }
        match c {
            '"' => self.annotation(),
            '!' | '+' => Ok(self.delimited_decoration(c)),
            '[' => self.bracket(),
            '{' => self.grace_group(),
            '(' => Ok(self.paren()),
            ')' => {
                self.bump();
                Ok(Token::Event(MusicEvent::SlurClose))
            }
            '<' if self.rest().starts_with("<|") => Ok(self.placeholder()),
            '<' | '>' => Ok(self.broken_rhythm(c)),
            '&' => {
                self.bump();
                Ok(Token::Event(MusicEvent::Overlay))
            }
            '$' => {
                self.bump();
                Ok(Token::Dollar)
            }
            'z' | 'x' | 'Z' | 'X' => self.rest_event(),
            _ if SHORT_DECORATIONS.contains(c) => {
                self.bump();
                Ok(Token::Event(MusicEvent::Decoration(Decoration::Short(c))))
            }
            _ if starts_note(self.rest()) => Ok(Token::Event(MusicEvent::Note(self.note()?))),
            _ => Ok(self.opaque_char()),
        }
    }

    fn annotation(&mut self) -> Result<Token, AbcError> {
        let start = self.offset();
        self.bump();
        match self.rest().find('"') {
            Some(end) => {
                let text = self.rest()[..end].to_string();
                self.pos += end + 1;
                Ok(Token::Event(MusicEvent::Annotation(text)))
            }
            None => Err(AbcError::UnbalancedBrackets { what: "quoted string", offset: start }),
        }
    }

    fn delimited_decoration(&mut self, delim: char) -> Token {
        let start = self.pos;
        let body = &self.rest()[1..];
        match body.find(delim) {
            Some(end) if end > 0 && !body[..end].contains(char::is_whitespace) => {
                let name = body[..end].to_string();
                self.pos += end + 2;
                let d = if delim == '!' { Decoration::Bang(name) } else { Decoration::Plus(name) };
                Token::Event(MusicEvent::Decoration(d))
            }
            _ => {
                self.bump();
                self.opaque_span(start, self.pos)
            }
        }
    }

    fn bracket(&mut self) -> Result<Token, AbcError> {
        let start = self.pos;
        let rest = self.rest();
        let mut chars = rest.chars().skip(1);
        let first = chars.next();
        let second = chars.next();
        // Inline field `[K:G]`.
        if first.is_some_and(|c| c.is_ascii_alphabetic()) && second == Some(':') {
            return match rest.find(']') {
                Some(end) => {
                    let key = rest[1..2].to_string();
                    let value = rest[3..end].to_string();
                    self.pos += end + 1;
                    Ok(Token::Event(MusicEvent::InlineField(HeaderField { key, value })))
                }
                None => Err(AbcError::UnbalancedBrackets { what: "inline field", offset: self.offset() }),
            };
        }
        // Variant ending `[1`, `[2,3`.
        if first.is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            self.ending_digits();
            return Ok(Token::Event(MusicEvent::Ending(self.src[start..self.pos].to_string())));
        }
        self.chord()
    }

    fn ending_digits(&mut self) {
        while let Some(c) = self.peek() {
            let continues = c.is_ascii_digit()
                || ((c == ',' || c == '-') && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()));
            if !continues {
                break;
            }
            self.bump();
        }
    }

    fn chord(&mut self) -> Result<Token, AbcError> {
        let open = self.offset();
        let start = self.pos;
        let Some(close) = self.rest().find(']') else {
            return Err(AbcError::UnbalancedBrackets { what: "chord", offset: open });
        };
        let end = self.pos + close;
        self.bump();
        let mut notes = Vec::new();
        while self.pos < end {
            if starts_note(&self.src[self.pos..end]) {
                notes.push(self.note()?);
            } else {
                break;
            }
        }
        if self.pos != end || notes.is_empty() {
            // Not a chord we understand; keep the bracketed text verbatim.
            self.pos = end + 1;
            return Ok(self.opaque_span(start, self.pos));
        }
        self.bump();
        let length = self.length()?;
        let tie = self.tie();
        Ok(Token::Event(MusicEvent::Chord(Chord { notes, length, tie })))
    }

    fn grace_group(&mut self) -> Result<Token, AbcError> {
        let open = self.offset();
        let Some(close) = self.rest().find('}') else {
            return Err(AbcError::UnbalancedBrackets { what: "grace group", offset: open });
        };
        let inner_start = self.pos + 1;
        let inner_end = self.pos + close;
        let mut inner = &self.src[inner_start..inner_end];
        let acciaccatura = inner.starts_with('/');
        let mut inner_base = self.base + inner_start;
        if acciaccatura {
            inner = &inner[1..];
            inner_base += 1;
        }
        let mut events = Vec::new();
        for (tok, _) in Lexer::new(inner, inner_base, self.diags).tokens()? {
            match tok {
                Token::Event(e @ (MusicEvent::Note(_) | MusicEvent::Chord(_) | MusicEvent::Space(_))) => {
                    events.push(e)
                }
                Token::Event(e @ MusicEvent::Opaque(_)) => events.push(e),
                other => {
                    let text = match other {
                        Token::Barline(b) => b.0,
                        Token::Dollar => "$".into(),
                        Token::Event(e) => super::emit::event_text(&e),
                    };
                    events.push(MusicEvent::Opaque(Opaque { text, offset: inner_base }));
                }
            }
        }
        self.pos = inner_end + 1;
        Ok(Token::Event(MusicEvent::GraceGroup(GraceGroup { acciaccatura, events })))
    }

    fn paren(&mut self) -> Token {
        self.bump();
        if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Token::Event(MusicEvent::SlurOpen);
        }
        let p = self.number().unwrap_or(0);
        let mut q = None;
        let mut r = None;
        if self.peek() == Some(':') {
            self.bump();
            q = self.number();
            if self.peek() == Some(':') {
                self.bump();
                r = self.number();
            }
        }
        Token::Event(MusicEvent::Tuplet(Tuplet { p, q, r }))
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        self.src[start..self.pos].parse().ok()
    }

    fn placeholder(&mut self) -> Token {
        let start = self.pos;
        match self.rest()[2..].find("|>") {
            Some(end) => {
                let name = self.rest()[2..2 + end].to_string();
                self.pos += end + 4;
                Token::Event(MusicEvent::TextPlaceholder(name))
            }
            None => {
                self.pos += 2;
                self.opaque_span(start, self.pos)
            }
        }
    }

    fn broken_rhythm(&mut self, c: char) -> Token {
        let mut degree = 0u8;
        while self.peek() == Some(c) && degree < 3 {
            self.bump();
            degree += 1;
        }
        Token::Event(MusicEvent::BrokenRhythm(BrokenRhythm { first_longer: c == '>', degree }))
    }

    fn rest_event(&mut self) -> Result<Token, AbcError> {
        let kind = match self.bump() {
            Some('z') => RestKind::Visible,
            Some('x') => RestKind::Invisible,
            Some('Z') => RestKind::MultiMeasure,
            _ => RestKind::MultiMeasureInvisible,
        };
        let length = self.length()?;
        Ok(Token::Event(MusicEvent::Rest(Rest { kind, length })))
    }

    fn note(&mut self) -> Result<Note, AbcError> {
        let rest = self.rest();
        let (accidental, skip) = if rest.starts_with("^^") {
            (Some(Accidental::DoubleSharp), 2)
        } else if rest.starts_with("__") {
            (Some(Accidental::DoubleFlat), 2)
        } else if rest.starts_with('^') {
            (Some(Accidental::Sharp), 1)
        } else if rest.starts_with('_') {
            (Some(Accidental::Flat), 1)
        } else if rest.starts_with('=') {
            (Some(Accidental::Natural), 1)
        } else {
            (None, 0)
        };
        self.pos += skip;
        let letter = self.bump().expect("starts_note checked the letter");
        let step = Step::from_letter(letter).expect("starts_note checked the letter");
        let mut octave: i8 = if letter.is_ascii_lowercase() { 5 } else { 4 };
        while let Some(c) = self.peek() {
            match c {
                '\'' => octave = octave.saturating_add(1),
                ',' => octave = octave.saturating_sub(1),
                _ => break,
            }
            self.bump();
        }
        let length = self.length()?;
        let tie = self.tie();
        Ok(Note { pitch: Pitch { step, accidental, octave }, length, tie })
    }

    fn tie(&mut self) -> bool {
        if self.peek() == Some('-') {
            self.bump();
            true
        } else {
            false
        }
    }

    /// `2`, `/`, `//`, `3/2`, `/4`, `3/`. Absent means 1.
    fn length(&mut self) -> Result<Rational, AbcError> {
        let start = self.pos;
        let bad = |lx: &Self| AbcError::BadDuration {
            text: lx.src[start..lx.pos].to_string(),
            offset: lx.base + start,
        };
        let mut numerator: i64 = 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            let n = self.number().map(i64::from).ok_or_else(|| bad(self))?;
            if n == 0 {
                return Err(bad(self));
            }
            numerator = n;
        }
        let mut denominator: i64 = 1;
        while self.peek() == Some('/') {
            self.bump();
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                let d = self.number().map(i64::from).ok_or_else(|| bad(self))?;
                if d == 0 {
                    return Err(bad(self));
                }
                denominator = denominator.checked_mul(d).ok_or_else(|| bad(self))?;
            } else {
                denominator = denominator.checked_mul(2).ok_or_else(|| bad(self))?;
            }
        }
        Ok(Rational::new(numerator, denominator))
    }
}

fn starts_note(s: &str) -> bool {
    let s = s.trim_start_matches(['^', '_', '=']);
    s.chars().next().is_some_and(|c| Step::from_letter(c).is_some())
}

/// Length of the barline token at the start of `s`, if any.
pub fn scan_barline(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    let mut i = 0;
    let bracket_open = b.first() == Some(&b'[');
    if bracket_open {
        if b.get(1) != Some(&b'|') {
            return None;
        }
        i = 1;
    }
    let run_start = i;
    while i < b.len() && (b[i] == b'|' || b[i] == b':') {
        i += 1;
    }
    let run = &s[run_start..i];
    if run.is_empty() {
        return None;
    }
    let has_bar = run.contains('|');
    if !has_bar && run.len() < 2 {
        return None;
    }
    if has_bar && b.get(i) == Some(&b']') && run.ends_with('|') {
        i += 1;
    } else if has_bar && run.ends_with('|') && b.get(i).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < b.len() {
            let continues = b[i].is_ascii_digit()
                || ((b[i] == b',' || b[i] == b'-') && b.get(i + 1).is_some_and(u8::is_ascii_digit));
            if !continues {
                break;
            }
            i += 1;
        }
    }
    Some(i)
}
