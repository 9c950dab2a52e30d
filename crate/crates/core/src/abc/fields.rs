use thiserror::Error;

use super::Step;
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unsupported meter `{0}`")]
pub struct MeterError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Meter {
    /// `M:none` or no meter at all.
    Free,
    /// `M:C`, 4/4.
    Common,
    /// `M:C|`, 2/2.
    Cut,
    /// `M:6/8`, `M:2+3/8`; `beats` keeps the numerator text.
    Fraction { beats: String, numerator: i64, denominator: i64 },
}

impl Meter {
    pub fn parse(value: &str) -> Result<Meter, MeterError> {
        let v = value.trim();
        let err = || MeterError(value.to_string());
        match v {
            "" | "none" | "None" | "NONE" => return Ok(Meter::Free),
            "C" => return Ok(Meter::Common),
            "C|" => return Ok(Meter::Cut),
            _ => {}
        }
        let (beats, den) = v.split_once('/').ok_or_else(err)?;
        let beats = beats.trim().trim_matches(|c| c == '(' || c == ')');
        let denominator: i64 = den.trim().parse().map_err(|_| err())?;
        let mut numerator = 0i64;
        for part in beats.split('+') {
            let n: i64 = part.trim().parse().map_err(|_| err())?;
            numerator += n;
        }
        if numerator <= 0 || denominator <= 0 {
            return Err(err());
        }
        Ok(Meter::Fraction { beats: beats.replace(' ', ""), numerator, denominator })
    }

    /// Bar length in whole notes; `None` for free meter.
    pub fn ratio(&self) -> Option<Rational> {
        match self {
            Meter::Free => None,
            Meter::Common => Some(Rational::from_integer(1)),
            Meter::Cut => Some(Rational::from_integer(1)),
            Meter::Fraction { numerator, denominator, .. } => {
                Some(Rational::new(*numerator, *denominator))
            }
        }
    }

    /// `(beats, beat-type)` as MusicXML writes them.
    pub fn beats(&self) -> Option<(String, i64)> {
        match self {
            Meter::Free => None,
            Meter::Common => Some(("4".into(), 4)),
            Meter::Cut => Some(("2".into(), 2)),
            Meter::Fraction { beats, denominator, .. } => Some((beats.clone(), *denominator)),
        }
    }

    pub fn symbol(&self) -> Option<&'static str> {
        match self {
            Meter::Common => Some("common"),
            Meter::Cut => Some("cut"),
            _ => None,
        }
    }

    /// 6/8, 9/8, 12/8 and friends.
    pub fn is_compound(&self) -> bool {
        match self {
            Meter::Fraction { numerator, .. } => *numerator > 3 && numerator % 3 == 0,
            _ => false,
        }
    }
}

/// Parses an `L:` value such as `1/8` or `1`.
pub fn parse_unit(value: &str) -> Option<Rational> {
    let v = value.trim();
    let r = match v.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            if d == 0 {
                return None;
            }
            Rational::new(n, d)
        }
        None => Rational::from_integer(v.parse().ok()?),
    };
    (r > Rational::from_integer(0)).then_some(r)
}

/// Unit note length when a tune has no `L:` field: a sixteenth if the meter
/// is below 3/4, an eighth otherwise; free meter and `C`/`C|` use an eighth.
pub fn default_unit(meter: &Meter) -> Rational {
    match meter {
        Meter::Fraction { .. } => {
            let r = meter.ratio().expect("fraction meter has a ratio");
            if r < Rational::new(3, 4) {
                Rational::new(1, 16)
            } else {
                Rational::new(1, 8)
            }
        }
        _ => Rational::new(1, 8),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Major,
    Minor,
    Dorian,
    Phrygian,
    Lydian,
    Mixolydian,
    Locrian,
}

impl Mode {
    fn parse(s: &str) -> Option<Mode> {
        let l = s.to_ascii_lowercase();
        if l.is_empty() {
            return Some(Mode::Major);
        }
        if l == "m" {
            return Some(Mode::Minor);
        }
        let p: String = l.chars().take(3).collect();
        Some(match p.as_str() {
            "maj" | "ion" => Mode::Major,
            "min" | "aeo" => Mode::Minor,
            "dor" => Mode::Dorian,
            "phr" => Mode::Phrygian,
            "lyd" => Mode::Lydian,
            "mix" => Mode::Mixolydian,
            "loc" => Mode::Locrian,
            _ => return None,
        })
    }

    /// Shift in fifths relative to the major key on the same tonic.
    fn fifths_offset(self) -> i8 {
        match self {
            Mode::Major => 0,
            Mode::Minor => -3,
            Mode::Dorian => -2,
            Mode::Phrygian => -4,
            Mode::Lydian => 1,
            Mode::Mixolydian => -1,
            Mode::Locrian => -5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
            Mode::Dorian => "dorian",
            Mode::Phrygian => "phrygian",
            Mode::Lydian => "lydian",
            Mode::Mixolydian => "mixolydian",
            Mode::Locrian => "locrian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clef {
    Treble,
    Bass,
    Alto,
    Tenor,
    Percussion,
}

impl Clef {
    fn parse(token: &str) -> Option<Clef> {
        let t = token.strip_prefix("clef=").unwrap_or(token);
        let t = t.trim_end_matches(|c: char| c == '-' || c == '+' || c.is_ascii_digit());
        Some(match t {
            "treble" | "G" => Clef::Treble,
            "bass" | "F" => Clef::Bass,
            "alto" | "C" => Clef::Alto,
            "tenor" => Clef::Tenor,
            "perc" | "percussion" | "P" => Clef::Percussion,
            _ => return None,
        })
    }

    /// Scans `clef=...` or bare clef names in a `K:` or `V:` value.
    pub fn find(value: &str) -> Option<Clef> {
        value.split_whitespace().find_map(|tok| {
            if tok.starts_with("clef=") || matches!(tok, "treble" | "bass" | "alto" | "tenor" | "perc") {
                Clef::parse(tok)
            } else {
                None
            }
        })
    }

    /// MusicXML `(sign, line)`.
    pub fn sign_line(self) -> (&'static str, u8) {
        match self {
            Clef::Treble => ("G", 2),
            Clef::Bass => ("F", 4),
            Clef::Alto => ("C", 3),
            Clef::Tenor => ("C", 4),
            Clef::Percussion => ("percussion", 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeySignature {
    /// Position on the circle of fifths; negative for flats.
    pub fifths: i8,
    /// `None` for `K:none` and unrecognised keys.
    pub mode: Option<Mode>,
    /// Explicit accidentals after the key, e.g. `K:D ^g`.
    pub extra: Vec<(Step, i8)>,
    pub clef: Option<Clef>,
}

impl KeySignature {
    pub fn parse(value: &str) -> KeySignature {
        let mut key = KeySignature { mode: Some(Mode::Major), ..Default::default() };
        let mut tokens = value.split_whitespace().peekable();
        let Some(first) = tokens.peek().copied() else {
            return key;
        };
        let mut chars = first.chars();
        let tonic = chars.next().and_then(|c| if c.is_ascii_uppercase() { Step::from_letter(c) } else { None });
        match tonic {
            Some(step) if first != "none" => {
                tokens.next();
                let rest: &str = chars.as_str();
                let (shift, mode_text) = match rest.chars().next() {
                    Some('#') => (7i8, &rest[1..]),
                    Some('b') => (-7i8, &rest[1..]),
                    _ => (0, rest),
                };
                let mut mode = Mode::parse(mode_text);
                if mode_text.is_empty() {
                    if let Some(m) = tokens.peek().and_then(|t| Mode::parse(t)) {
                        if !tokens.peek().unwrap().contains('=') {
                            mode = Some(m);
                            tokens.next();
                        }
                    }
                }
                let mode = mode.unwrap_or(Mode::Major);
                key.fifths = major_fifths(step) + shift + mode.fifths_offset();
                key.mode = Some(mode);
            }
            _ => {
                if first == "none" || first.starts_with('H') {
                    tokens.next();
                    key.mode = None;
                }
            }
        }
        for tok in tokens {
            if let Some(clef) = Clef::find(tok) {
                key.clef = Some(clef);
                continue;
            }
            if let Some(acc) = explicit_accidental(tok) {
                key.extra.push(acc);
            }
        }
        key
    }

    /// Alteration the key signature applies to a step.
    pub fn alter(&self, step: Step) -> i8 {
        if let Some((_, a)) = self.extra.iter().rev().find(|(s, _)| *s == step) {
            return *a;
        }
        const SHARPS: [Step; 7] = [Step::F, Step::C, Step::G, Step::D, Step::A, Step::E, Step::B];
        const FLATS: [Step; 7] = [Step::B, Step::E, Step::A, Step::D, Step::G, Step::C, Step::F];
        let n = self.fifths.unsigned_abs() as usize;
        if self.fifths > 0 {
            let full = (n / 7) as i8;
            let part = n % 7;
            full + SHARPS[..part].contains(&step) as i8
        } else if self.fifths < 0 {
            let full = (n / 7) as i8;
            let part = n % 7;
            -(full + FLATS[..part].contains(&step) as i8)
        } else {
            0
        }
    }
}

fn major_fifths(step: Step) -> i8 {
    match step {
        Step::C => 0,
        Step::G => 1,
        Step::D => 2,
        Step::A => 3,
        Step::E => 4,
        Step::B => 5,
        Step::F => -1,
    }
}

fn explicit_accidental(tok: &str) -> Option<(Step, i8)> {
    let (alter, rest) = if let Some(r) = tok.strip_prefix("^^") {
        (2, r)
    } else if let Some(r) = tok.strip_prefix("__") {
        (-2, r)
    } else if let Some(r) = tok.strip_prefix('^') {
        (1, r)
    } else if let Some(r) = tok.strip_prefix('_') {
        (-1, r)
    } else {
        (0, tok.strip_prefix('=')?)
    };
    let mut chars = rest.chars();
    let step = Step::from_letter(chars.next()?)?;
    chars.next().is_none().then_some((step, alter))
}

/// Voice id: the first word of a `V:` value.
pub fn voice_id(value: &str) -> &str {
    value.split_whitespace().next().unwrap_or("")
}
