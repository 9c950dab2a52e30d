//! ABC notation: typed AST, parser and emitter.
//!
//! The supported subset is what MusicXML-to-ABC converters produce for
//! ordinary scores: the `X T C M L Q K V` header fields, notes, rests,
//! chords, ties, slurs, tuplets, grace groups, broken rhythm, decorations,
//! voice overlays and inline fields. Anything else becomes an
//! [`MusicEvent::Opaque`] span with a diagnostic, so evaluation never fails
//! on near-valid model output.
//!
//! Parsing is lossless for the supported subset: the AST keeps whitespace,
//! comments and line layout, and [`emit_abc`] reproduces text that parses
//! back to an equal AST.

mod emit;
mod fields;
mod lex;
mod parse;
pub mod timing;

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::Rational;

pub use emit::{emit_abc, format_length, format_pitch};
pub use fields::{default_unit, parse_unit, Clef, KeySignature, Meter, Mode};
pub use lex::scan_barline;
pub use parse::{parse_abc, parse_abc_with_diagnostics, Parsed};

/// Hard parse failures. Everything else is reported as a [`Diagnostic`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbcError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unbalanced {what} at byte {offset}")]
    UnbalancedBrackets { what: &'static str, offset: usize },
    #[error("bad duration `{text}` at byte {offset}")]
    BadDuration { text: String, offset: usize },
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
    pub span: Option<Range<usize>>,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Self {
        Diagnostic { message: message.into(), span: None }
    }

    pub fn at(message: impl Into<String>, span: Range<usize>) -> Self {
        Diagnostic { message: message.into(), span: Some(span) }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.span {
            Some(span) => write!(f, "warning at {}..{}: {}", span.start, span.end, self.message),
            None => write!(f, "warning: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceDialect {
    #[default]
    Raw,
    Canonical,
}

/// One header line. `key` is the field letter, or `%` / `%%` for comment and
/// directive lines; `value` is everything after the colon, verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderField {
    pub key: String,
    pub value: String,
}

impl HeaderField {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        HeaderField { key: key.into(), value: value.into() }
    }

    pub fn is_comment(&self) -> bool {
        self.key.starts_with('%')
    }

    pub fn is(&self, key: &str) -> bool {
        self.key == key
    }

    pub fn to_line(&self) -> String {
        if self.is_comment() {
            format!("{}{}", self.key, self.value)
        } else {
            format!("{}:{}", self.key, self.value)
        }
    }
}

/// A parsed tune.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbcScore {
    /// Blank and comment lines before `X:`, verbatim.
    pub preamble: String,
    /// Header lines from `X:` up to and including `K:`.
    pub headers: Vec<HeaderField>,
    pub voices: Vec<Voice>,
    /// Source order of body lines; interleaves voices with field and comment
    /// lines.
    pub layout: Vec<Segment>,
    /// Text after the first blank line of the body (further tunes), verbatim.
    pub trailing: Option<String>,
    pub source_dialect: SourceDialect,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Voice {
    pub id: String,
    pub measures: Vec<Measure>,
    /// Layout-only events after the last measure.
    pub trailing: Vec<MusicEvent>,
}

impl Voice {
    pub fn new(id: impl Into<String>) -> Self {
        Voice { id: id.into(), ..Default::default() }
    }
}

/// How a run of body lines selects its voice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoiceSwitch {
    /// Continues the current voice (or the implicit voice `1`).
    Implicit,
    /// A `V:` field line; holds the value after the colon.
    Line(String),
    /// A `[V:...]` prefix on the first line; holds the text after `V:`.
    Inline(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// `lines` consecutive music lines of one voice.
    Music { voice: usize, switch: VoiceSwitch, lines: usize },
    /// A field line inside the body, e.g. `w:` lyrics or a meter change.
    Field(HeaderField),
    /// A `%` comment or `%%` directive line inside the body, verbatim.
    Comment(String),
}

/// Barline token, verbatim (`|`, `||`, `|]`, `:|`, `|:`, `::`, `|1`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Barline(pub String);

impl Barline {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn repeat_forward(&self) -> bool {
        let s = self.0.trim_end_matches(|c: char| c.is_ascii_digit() || c == ',' || c == '-');
        s.ends_with(':') || s.starts_with("::")
    }

    pub fn repeat_backward(&self) -> bool {
        self.0.starts_with(':')
    }
}

/// Whatever follows the last token of a line: trailing whitespace, a
/// continuation backslash and/or a `%` comment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LineEnd {
    pub tail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Measure {
    /// Layout events that precede `left_barline`.
    pub lead: Vec<MusicEvent>,
    pub left_barline: Option<Barline>,
    pub events: Vec<MusicEvent>,
    pub right_barline: Option<Barline>,
    /// `$` after the closing barline: an engraved line break.
    pub explicit_linebreak: bool,
    /// The text line ends right after this measure.
    pub line_end: Option<LineEnd>,
}

impl Measure {
    pub fn has_content(&self) -> bool {
        self.events.iter().any(|e| !e.is_layout())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub const ALL: [Step; 7] = [Step::C, Step::D, Step::E, Step::F, Step::G, Step::A, Step::B];

    pub fn from_letter(c: char) -> Option<Step> {
        Some(match c.to_ascii_uppercase() {
            'C' => Step::C,
            'D' => Step::D,
            'E' => Step::E,
            'F' => Step::F,
            'G' => Step::G,
            'A' => Step::A,
            'B' => Step::B,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        match self {
            Step::C => 'C',
            Step::D => 'D',
            Step::E => 'E',
            Step::F => 'F',
            Step::G => 'G',
            Step::A => 'A',
            Step::B => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Accidental {
    DoubleFlat,
    Flat,
    Natural,
    Sharp,
    DoubleSharp,
}

impl Accidental {
    pub fn alter(self) -> i8 {
        match self {
            Accidental::DoubleFlat => -2,
            Accidental::Flat => -1,
            Accidental::Natural => 0,
            Accidental::Sharp => 1,
            Accidental::DoubleSharp => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Accidental::DoubleFlat => "__",
            Accidental::Flat => "_",
            Accidental::Natural => "=",
            Accidental::Sharp => "^",
            Accidental::DoubleSharp => "^^",
        }
    }
}

/// Written pitch. Octave numbering is scientific: ABC `C` is C4, `c` is C5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pitch {
    pub step: Step,
    pub accidental: Option<Accidental>,
    pub octave: i8,
}

impl Pitch {
    pub fn new(step: Step, octave: i8) -> Self {
        Pitch { step, accidental: None, octave }
    }

    pub fn with_accidental(mut self, accidental: Accidental) -> Self {
        self.accidental = Some(accidental);
        self
    }
}

/// `length` is a multiple of the unit note length in effect.
#[derive(Debug, Clone, PartialEq)]
pub struct Note {
    pub pitch: Pitch,
    pub length: Rational,
    pub tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestKind {
    /// `z`
    Visible,
    /// `x`
    Invisible,
    /// `Z`; `length` counts bars.
    MultiMeasure,
    /// `X`; `length` counts bars.
    MultiMeasureInvisible,
}

impl RestKind {
    pub fn letter(self) -> char {
        match self {
            RestKind::Visible => 'z',
            RestKind::Invisible => 'x',
            RestKind::MultiMeasure => 'Z',
            RestKind::MultiMeasureInvisible => 'X',
        }
    }

    pub fn is_multi_measure(self) -> bool {
        matches!(self, RestKind::MultiMeasure | RestKind::MultiMeasureInvisible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rest {
    pub kind: RestKind,
    pub length: Rational,
}

/// `[CEG]2`: member notes carry their own lengths, `length` multiplies them.
#[derive(Debug, Clone, PartialEq)]
pub struct Chord {
    pub notes: Vec<Note>,
    pub length: Rational,
    pub tie: bool,
}

/// `(p:q:r`: put `p` notes into the time of `q` for the next `r` notes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tuplet {
    pub p: u32,
    pub q: Option<u32>,
    pub r: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraceGroup {
    /// `{/g}` form.
    pub acciaccatura: bool,
    pub events: Vec<MusicEvent>,
}

/// `>` makes the previous note longer and the next one shorter; `<` the
/// opposite. `degree` counts repeated symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrokenRhythm {
    pub first_longer: bool,
    pub degree: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoration {
    /// `!name!`
    Bang(String),
    /// `+name+`
    Plus(String),
    /// Single-character shorthand such as `.`, `~`, `T` or `H`.
    Short(char),
}

impl Decoration {
    /// Long name used for mapping, e.g. `.` and `!staccato!` both give
    /// `staccato`.
    pub fn name(&self) -> String {
        match self {
            Decoration::Bang(n) | Decoration::Plus(n) => n.clone(),
            Decoration::Short(c) => match c {
                '.' => "staccato",
                '~' => "roll",
                'H' => "fermata",
                'L' => "accent",
                'M' => "lowermordent",
                'O' => "coda",
                'P' => "uppermordent",
                'S' => "segno",
                'T' => "trill",
                'u' => "upbow",
                'v' => "downbow",
                _ => "unknown",
            }
            .to_string(),
        }
    }
}

/// Unsupported source text, kept verbatim. Equality ignores the offset so
/// that re-emitted text compares equal.
#[derive(Debug, Clone)]
pub struct Opaque {
    pub text: String,
    pub offset: usize,
}

impl PartialEq for Opaque {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MusicEvent {
    Note(Note),
    Rest(Rest),
    Chord(Chord),
    Tuplet(Tuplet),
    GraceGroup(GraceGroup),
    BrokenRhythm(BrokenRhythm),
    Decoration(Decoration),
    InlineField(HeaderField),
    SlurOpen,
    SlurClose,
    /// Quoted string: annotation or chord symbol, without the quotes.
    Annotation(String),
    /// `<|...|>` literal in the body; holds the inner name.
    TextPlaceholder(String),
    /// `&` voice overlay.
    Overlay,
    /// `[1`, `[2` variant-ending markers.
    Ending(String),
    Space(String),
    /// A text line ends inside the measure.
    LineEnd(LineEnd),
    Opaque(Opaque),
}

impl MusicEvent {
    /// Whitespace and line structure only; no musical meaning.
    pub fn is_layout(&self) -> bool {
        matches!(self, MusicEvent::Space(_) | MusicEvent::LineEnd(_))
    }

    /// Notes, rests and chords: the events that take time.
    pub fn is_rhythmic(&self) -> bool {
        matches!(self, MusicEvent::Note(_) | MusicEvent::Rest(_) | MusicEvent::Chord(_))
    }
}

impl AbcScore {
    pub fn header(&self, key: &str) -> Option<&HeaderField> {
        self.headers.iter().find(|h| h.is(key))
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header(key).map(|h| h.value.trim())
    }

    /// Meter from the `M:` header; free meter when absent.
    pub fn meter(&self) -> Result<Meter, fields::MeterError> {
        match self.header_value("M") {
            Some(v) => Meter::parse(v),
            None => Ok(Meter::Free),
        }
    }

    /// Unit note length from `L:`, or the meter-based default.
    pub fn unit_note(&self) -> Rational {
        self.header_value("L")
            .and_then(parse_unit)
            .unwrap_or_else(|| default_unit(&self.meter().unwrap_or(Meter::Free)))
    }

    pub fn key(&self) -> KeySignature {
        self.header_value("K").map(KeySignature::parse).unwrap_or_default()
    }

    pub fn voice_index(&self, id: &str) -> Option<usize> {
        self.voices.iter().position(|v| v.id == id)
    }

    /// Equality that ignores [`AbcScore::source_dialect`].
    pub fn structurally_eq(&self, other: &AbcScore) -> bool {
        self.preamble == other.preamble
            && self.headers == other.headers
            && self.voices == other.voices
            && self.layout == other.layout
            && self.trailing == other.trailing
    }

    /// Text of the `V:` declaration for a voice: the first `V:` line in the
    /// header or body, or the first inline `[V:...]` switch.
    pub fn voice_declaration(&self, voice: usize) -> Option<&str> {
        let id = &self.voices.get(voice)?.id;
        let header = self
            .headers
            .iter()
            .filter(|h| h.is("V"))
            .find(|h| fields::voice_id(&h.value) == id)
            .map(|h| h.value.as_str());
        header.or_else(|| {
            self.layout.iter().find_map(|s| match s {
                Segment::Music { voice: v, switch: VoiceSwitch::Line(t), .. }
                | Segment::Music { voice: v, switch: VoiceSwitch::Inline(t), .. }
                    if *v == voice =>
                {
                    Some(t.as_str())
                }
                _ => None,
            })
        })
    }
}

/// Number of measures in the longest voice.
pub fn measure_count(score: &AbcScore) -> usize {
    score.voices.iter().map(|v| v.measures.len()).max().unwrap_or(0)
}

/// Warning when voices disagree on their measure count.
pub fn voice_length_diagnostic(score: &AbcScore) -> Option<Diagnostic> {
    let counts: Vec<usize> = score
        .voices
        .iter()
        .filter(|v| !v.measures.is_empty())
        .map(|v| v.measures.len())
        .collect();
    let max = counts.iter().copied().max()?;
    let min = counts.iter().copied().min()?;
    (max != min).then(|| {
        let detail: Vec<String> = score
            .voices
            .iter()
            .filter(|v| !v.measures.is_empty())
            .map(|v| format!("{}={}", v.id, v.measures.len()))
            .collect();
        Diagnostic::new(format!("voices have unequal measure counts ({})", detail.join(", ")))
    })
}

pub(crate) use fields::voice_id;
