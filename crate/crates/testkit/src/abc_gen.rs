//! Random ABC tunes.
//!
//! Tunes mix stepwise runs, triad arpeggios and random leaps so that byte
//! pair statistics look like real folk-tune corpora, and they exercise the
//! notation features the parser understands: accidentals, octave marks,
//! chords, tuplets, broken rhythm, ties, slurs, grace notes, decorations,
//! annotations, repeats, endings, inline fields and multiple voices.

use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TuneOptions {
    /// Allow more than one voice.
    pub multi_voice: bool,
    /// Allow `K:`/`L:`/`M:` lines and inline fields inside the body.
    pub body_fields: bool,
    /// Allow text fields (titles, lyrics, annotations).
    pub text: bool,
    /// Allow grace notes.
    pub grace: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { multi_voice: true, body_fields: true, text: true, grace: true }
    }
}

impl TuneOptions {
    /// Single voice, no body fields: the shape used for conversion checks.
    pub fn single_voice() -> Self {
        TuneOptions { multi_voice: false, body_fields: false, ..Default::default() }
    }
}

pub const KEYS: [&str; 16] = [
    "C", "G", "D", "A", "E", "F", "Bb", "Eb", "Am", "Em", "Dm", "Gm", "Ador", "Dmix", "Edor", "Bm",
];
const METERS: [&str; 10] = ["4/4", "3/4", "2/4", "6/8", "9/8", "C", "C|", "12/8", "5/4", "3/8"];
const UNITS: [&str; 3] = ["1/8", "1/16", "1/4"];
const WORDS: [&str; 12] = [
    "The", "Kesh", "Reel", "Morning", "Dew", "Lark", "Jig", "Harvest", "Home", "Silver", "Spear", "Polka",
];
const TRIADS: [[usize; 3]; 6] = [[0, 2, 4], [4, 6, 8], [3, 5, 7], [1, 3, 5], [5, 7, 9], [2, 4, 6]];
const LETTERS: [char; 7] = ['C', 'D', 'E', 'F', 'G', 'A', 'B'];

/// Diatonic index (0 = C4) written as an ABC pitch.
fn pitch_text(index: i32) -> String {
    let letter = LETTERS[index.rem_euclid(7) as usize];
    let octave = index.div_euclid(7) + 4;
    match octave {
        o if o <= 4 => format!("{letter}{}", ",".repeat((4 - o) as usize)),
        o => format!("{}{}", letter.to_ascii_lowercase(), "'".repeat((o - 5) as usize)),
    }
}

fn words<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn accidental<R: Rng>(rng: &mut R) -> &'static str {
    if rng.random_bool(0.9) {
        ""
    } else {
        ["^", "_", "=", "^^", "__"].choose(rng).unwrap()
    }
}

/// Length suffix for a duration given in half units.
fn length_suffix(half_units: u32) -> String {
    match half_units {
        1 => "/".into(),
        2 => String::new(),
        n if n % 2 == 0 => (n / 2).to_string(),
        n => format!("{n}/2"),
    }
}

struct Body<'a, R> {
    rng: &'a mut R,
    opts: TuneOptions,
    /// Current diatonic position for stepwise motion.
    pos: i32,
    low: i32,
    high: i32,
}

impl<R: Rng> Body<'_, R> {
    fn step(&mut self) -> i32 {
        let delta = *[-2, -1, -1, 1, 1, 2, 0, 3, -3].choose(self.rng).unwrap();
        self.pos = (self.pos + delta).clamp(self.low, self.high);
        self.pos
    }

    fn note(&mut self, half_units: u32) -> String {
        let p = self.step();
        format!("{}{}{}", accidental(self.rng), pitch_text(p), length_suffix(half_units))
    }

    fn decoration(&mut self) -> String {
        if !self.rng.random_bool(0.08) {
            return String::new();
        }
        let d = [".", "~", "T", "H", "!trill!", "!fermata!", "!accent!", "!p!", "!mf!", "!segno!"];
        d.choose(self.rng).unwrap().to_string()
    }

    /// One beat group; returns text and duration in half units.
    fn group(&mut self, beat: u32) -> (String, u32) {
        let roll: f64 = self.rng.random();
        let mut out = self.decoration();
        let dur;
        if roll < 0.14 {
            // Triad arpeggio.
            let base = self.rng.random_range(-3..4);
            let t = TRIADS.choose(self.rng).unwrap();
            for i in t {
                out.push_str(&pitch_text(base + *i as i32));
            }
            dur = 6;
        } else if roll < 0.20 {
            // Block chord.
            let base = self.rng.random_range(-2..5);
            let t = TRIADS.choose(self.rng).unwrap();
            out.push('[');
            for i in t {
                out.push_str(&pitch_text(base + *i as i32));
            }
            out.push(']');
            let len = *[2u32, 4].choose(self.rng).unwrap();
            out.push_str(&length_suffix(len));
            dur = len;
        } else if roll < 0.26 {
            out.push_str("(3");
            for _ in 0..3 {
                let n = self.note(2);
                out.push_str(&n);
            }
            dur = 4;
        } else if roll < 0.33 {
            let a = self.note(2);
            let b = self.note(2);
            let sign = *[">", "<", ">>"].choose(self.rng).unwrap();
            out.push_str(&format!("{a}{sign}{b}"));
            dur = 4;
        } else if roll < 0.37 {
            let p = self.step();
            let t = pitch_text(p);
            out.push_str(&format!("{t}2-{t}"));
            dur = 6;
        } else if roll < 0.42 {
            out.push_str(&format!("z{}", length_suffix(beat)));
            dur = beat;
        } else if roll < 0.45 {
            let notes = self.rng.random_range(2..4);
            out.push('(');
            for _ in 0..notes {
                let n = self.note(2);
                out.push_str(&n);
            }
            out.push(')');
            dur = 2 * notes;
        } else if roll < 0.48 && self.opts.grace {
            let g = pitch_text(self.pos + 1);
            let n = self.note(2);
            out.push_str(&format!("{{{g}}}{n}"));
            dur = 2;
        } else if roll < 0.52 && self.opts.text {
            let text = words(self.rng, 1);
            let place = *["^", "_", ""].choose(self.rng).unwrap();
            let chord = ["G", "Am", "D7", "Em", "C"].choose(self.rng).unwrap();
            let label = if place.is_empty() { chord.to_string() } else { format!("{place}{text}") };
            let n = self.note(2);
            out.push_str(&format!("\"{label}\"{n}"));
            dur = 2;
        } else {
            // Stepwise run, mostly unit notes.
            let n = self.rng.random_range(1..5);
            dur = 2 * n;
            for _ in 0..n {
                let s = self.note(2);
                out.push_str(&s);
            }
            if n > 1 && self.rng.random_bool(0.2) {
                let long = self.note(4);
                out.push_str(&long);
                return (out, dur + 4);
            }
        }
        (out, dur)
    }

    /// Measure contents exactly `bar` half units long.
    fn measure(&mut self, bar: u32, beat: u32) -> String {
        let mut out = String::new();
        let mut total = 0;
        while total < bar {
            let left = bar - total;
            // A few tries at a group that fits, then a single note to fill.
            let (g, d) = (0..4)
                .map(|_| self.group(beat))
                .find(|(_, d)| *d <= left)
                .unwrap_or_else(|| (self.note(left), left));
            if !out.is_empty() && self.rng.random_bool(0.6) {
                out.push(' ');
            }
            out.push_str(&g);
            total += d;
        }
        if self.opts.body_fields && self.rng.random_bool(0.02) {
            out.push_str(&format!("[K:{}]", KEYS.choose(self.rng).unwrap()));
        }
        out
    }
}

/// Bar length and beat in half units of `unit` for a meter.
fn bar_shape(meter: &str, unit: &str) -> (u32, u32) {
    let (num, den) = match meter {
        "C" => (4, 4),
        "C|" => (2, 2),
        "none" => (4, 4),
        m => {
            let (n, d) = m.split_once('/').unwrap();
            (n.parse::<u32>().unwrap(), d.parse::<u32>().unwrap())
        }
    };
    let unit_den: u32 = unit[2..].parse().unwrap();
    // Half units per bar: 2 * num/den / (1/unit_den).
    let bar = (2 * num * unit_den / den).max(2);
    let beat = if num % 3 == 0 && num > 3 { 3 * 2 * unit_den / den } else { 2 * unit_den / den };
    (bar, beat.max(1))
}

fn voice_body<R: Rng>(rng: &mut R, opts: TuneOptions, meter: &str, unit: &str, measures: usize, clef_low: bool) -> Vec<String> {
    let (bar, beat) = bar_shape(meter, unit);
    let (low, high) = if clef_low { (-10, 3) } else { (-3, 10) };
    let mut body = Body { rng, opts, pos: if clef_low { -4 } else { 2 }, low, high };
    let mut lines = Vec::new();
    let mut line = String::new();
    let repeat = body.rng.random_bool(0.3);
    let endings = repeat && measures >= 4 && body.rng.random_bool(0.5);
    let per_line = body.rng.random_range(2..7);
    let mut on_line = 0;
    if repeat {
        line.push_str("|:");
    }
    for m in 0..measures {
        if endings && m == measures - 2 {
            line.push_str("[1 ");
        }
        if endings && m == measures - 1 {
            line.push_str("[2 ");
        }
        let content = body.measure(bar, beat);
        line.push_str(&content);
        let last = m + 1 == measures;
        let bar_text = if last {
            if repeat && !endings { ":|" } else { "|]" }
        } else if endings && m == measures - 2 {
            ":|"
        } else if body.rng.random_bool(0.05) {
            "||"
        } else {
            "|"
        };
        line.push_str(bar_text);
        on_line += 1;
        if (on_line >= per_line || last) && !(endings && m == measures - 2) {
            let roll: f64 = body.rng.random();
            if roll < 0.05 {
                line.push_str(" % phrase");
            } else if roll < 0.08 {
                line.push('\\');
            } else if roll < 0.12 {
                line.push('$');
            } else if roll < 0.2 {
                line.push(' ');
            }
            lines.push(std::mem::take(&mut line));
            on_line = 0;
            if opts.text && !last && body.rng.random_bool(0.05) {
                lines.push(format!("w: {}", words(body.rng, 3).to_lowercase()));
            }
            if opts.body_fields && !last && body.rng.random_bool(0.06) {
                let field = match body.rng.random_range(0..3) {
                    0 => format!("K:{}", KEYS.choose(body.rng).unwrap()),
                    1 => format!("M:{meter}"),
                    _ => format!("L:{unit}"),
                };
                lines.push(field);
            }
        } else if body.rng.random_bool(0.5) {
            line.push(' ');
        }
    }
    lines
}

/// A random tune with reference number `x`.
pub fn random_tune<R: Rng>(rng: &mut R, x: usize, opts: TuneOptions) -> String {
    let mut out = format!("X:{x}\n");
    if opts.text {
        let n = rng.random_range(1..4);
        out.push_str(&format!("T:{}\n", words(rng, n)));
        if rng.random_bool(0.3) {
            out.push_str(&format!("C:{}\n", words(rng, 2)));
        }
    }
    let meter = *METERS.choose(rng).unwrap();
    out.push_str(&format!("M:{meter}\n"));
    let unit = *UNITS.choose(rng).unwrap();
    let unit_written = rng.random_bool(0.85);
    if unit_written {
        out.push_str(&format!("L:{unit}\n"));
    }
    let unit = if unit_written {
        unit
    } else {
        // ABC default unit for the meter.
        let (n, d) = match meter {
            "C" => (4, 4),
            "C|" => (2, 2),
            m => {
                let (n, d) = m.split_once('/').unwrap();
                (n.parse::<u32>().unwrap(), d.parse::<u32>().unwrap())
            }
        };
        if 4 * n < 3 * d { "1/16" } else { "1/8" }
    };
    if rng.random_bool(0.3) {
        out.push_str("Q:1/4=120\n");
    }
    if rng.random_bool(0.1) {
        out.push_str("% transcribed by hand\n");
    }
    let voices = if opts.multi_voice && rng.random_bool(0.3) { rng.random_range(2..4) } else { 1 };
    let measures = rng.random_range(3..20);
    let key = *KEYS.choose(rng).unwrap();
    if voices == 1 {
        out.push_str(&format!("K:{key}\n"));
        for line in voice_body(rng, opts, meter, unit, measures, false) {
            out.push_str(&line);
            out.push('\n');
        }
        return out;
    }
    for v in 1..=voices {
        let clef = if v == voices { " clef=bass" } else { "" };
        let name = if opts.text { format!(" name=\"{}\"", words(rng, 1)) } else { String::new() };
        out.push_str(&format!("V:{v}{name}{clef}\n"));
    }
    out.push_str(&format!("K:{key}\n"));
    let inline = rng.random_bool(0.4);
    let opts = TuneOptions { body_fields: false, ..opts };
    let bodies: Vec<Vec<String>> =
        (1..=voices).map(|v| voice_body(rng, opts, meter, unit, measures, v == voices)).collect();
    if inline {
        // Interleave line by line with inline voice switches.
        let rows = bodies.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..rows {
            for (v, body) in bodies.iter().enumerate() {
                if let Some(line) = body.get(r) {
                    if line.starts_with("w:") {
                        continue;
                    }
                    out.push_str(&format!("[V:{}] {line}\n", v + 1));
                }
            }
        }
    } else {
        for (v, body) in bodies.iter().enumerate() {
            out.push_str(&format!("V:{}\n", v + 1));
            for line in body {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}
