use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeqError {
    #[error("gold sequence is empty")]
    EmptyGold,
}

/// Unit over which an error rate is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolLevel {
    /// Unicode scalar values (CER).
    Char,
    /// Whitespace-separated tokens (SER).
    Symbol,
    /// Text lines (LER).
    Line,
}

impl SymbolLevel {
    pub fn name(self) -> &'static str {
        match self {
            SymbolLevel::Char => "char",
            SymbolLevel::Symbol => "symbol",
            SymbolLevel::Line => "line",
        }
    }

    /// Splits `text` into units of this level.
    pub fn units(self, text: &str) -> Vec<&str> {
        match self {
            SymbolLevel::Char => text.char_indices().map(|(i, c)| &text[i..i + c.len_utf8()]).collect(),
            SymbolLevel::Symbol => text.split_whitespace().collect(),
            SymbolLevel::Line => text.lines().collect(),
        }
    }
}

impl fmt::Display for SymbolLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SymbolLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(SymbolLevel::Char),
            "symbol" => Ok(SymbolLevel::Symbol),
            "line" => Ok(SymbolLevel::Line),
            _ => Err(format!("unknown level `{s}` (expected char, symbol or line)")),
        }
    }
}

/// Unit-cost edit distance between two sequences, O(mn) time and O(n) memory.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance between the unit sequences divided by the gold unit count.
pub fn error_rate(pred: &str, gold: &str, level: SymbolLevel) -> Result<f64, SeqError> {
    let g = level.units(gold);
    if g.is_empty() {
        return Err(SeqError::EmptyGold);
    }
    let p = level.units(pred);
    Ok(levenshtein(&p, &g) as f64 / g.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitten_sitting() {
        assert_eq!(error_rate("kitten", "sitting", SymbolLevel::Char).unwrap(), 3.0 / 7.0);
    }

    #[test]
    fn boundaries() {
        for level in [SymbolLevel::Char, SymbolLevel::Symbol, SymbolLevel::Line] {
            assert_eq!(error_rate("a b\nc", "a b\nc", level).unwrap(), 0.0);
            assert_eq!(error_rate("", "a b\nc", level).unwrap(), 1.0);
            assert_eq!(error_rate("x", "", level), Err(SeqError::EmptyGold));
        }
    }

    #[test]
    fn units() {
        assert_eq!(SymbolLevel::Char.units("aé"), ["a", "é"]);
        assert_eq!(SymbolLevel::Symbol.units(" A>B  c\n"), ["A>B", "c"]);
        assert_eq!(SymbolLevel::Line.units("a\nb\n"), ["a", "b"]);
        assert_eq!(error_rate("A B C", "A C", SymbolLevel::Symbol).unwrap(), 0.5);
    }

    #[test]
    fn parse_level() {
        assert_eq!("line".parse::<SymbolLevel>(), Ok(SymbolLevel::Line));
        assert!("word".parse::<SymbolLevel>().is_err());
    }
}
