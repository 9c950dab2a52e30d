//! OMR-NED: edit distance over measure sequences where substituting one
//! measure for another costs the category-weighted symmetric difference of
//! their symbol multisets.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};
use thiserror::Error;

use crate::mxl::LabeledTree;
use crate::{Cost, Rational};

/// Bumped whenever categories or symbol payloads change meaning.
pub const SYMBOLS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OmrNedError {
    #[error("gold has no measures or zero insertion cost")]
    EmptyGold,
    #[error("document has no <measure> elements")]
    NoMeasures,
    #[error("invalid cost table: {0}")]
    InvalidCosts(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolCategory {
    Note,
    Rest,
    Clef,
    Key,
    Time,
    BarlineAttr,
    Articulation,
    Other,
}

impl SymbolCategory {
    pub const ALL: [SymbolCategory; 8] = [
        SymbolCategory::Note,
        SymbolCategory::Rest,
        SymbolCategory::Clef,
        SymbolCategory::Key,
        SymbolCategory::Time,
        SymbolCategory::BarlineAttr,
        SymbolCategory::Articulation,
        SymbolCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SymbolCategory::Note => "note",
            SymbolCategory::Rest => "rest",
            SymbolCategory::Clef => "clef",
            SymbolCategory::Key => "key",
            SymbolCategory::Time => "time",
            SymbolCategory::BarlineAttr => "barline-attr",
            SymbolCategory::Articulation => "articulation",
            SymbolCategory::Other => "other",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SymbolCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SymbolCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SymbolCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown symbol category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    pub category: SymbolCategory,
    pub payload: String,
}

impl Symbol {
    pub fn new(category: SymbolCategory, payload: impl Into<String>) -> Self {
        Symbol { category, payload: payload.into() }
    }
}

/// Multiset of symbols, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MeasureSymbols {
    symbols: Vec<Symbol>,
}

impl MeasureSymbols {
    pub fn new(mut symbols: Vec<Symbol>) -> Self {
        symbols.sort();
        MeasureSymbols { symbols }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn count(&self, category: SymbolCategory) -> usize {
        self.symbols.iter().filter(|s| s.category == category).count()
    }

    fn extend(&mut self, more: Vec<Symbol>) {
        self.symbols.extend(more);
        self.symbols.sort();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryCost<C> {
    pub insert: C,
    pub delete: C,
}

/// Insertion and deletion cost per symbol category.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable<C> {
    costs: [CategoryCost<C>; 8],
}

impl<C: Cost> Default for CostTable<C> {
    fn default() -> Self {
        CostTable::uniform(C::one(), C::one())
    }
}

impl<C: Cost> CostTable<C> {
    pub fn uniform(insert: C, delete: C) -> Self {
        CostTable { costs: [CategoryCost { insert, delete }; 8] }
    }

    pub fn get(&self, category: SymbolCategory) -> CategoryCost<C> {
        self.costs[category.index()]
    }

    pub fn set(&mut self, category: SymbolCategory, insert: C, delete: C) -> Result<(), OmrNedError> {
        for (what, c) in [("insert", insert), ("delete", delete)] {
            if !c.is_nonnegative() {
                return Err(OmrNedError::InvalidCosts(format!("{category} {what} cost {c:?} is negative")));
            }
        }
        self.costs[category.index()] = CategoryCost { insert, delete };
        Ok(())
    }

    /// `{category: {insert, delete}}` with costs as `f64`.
    pub fn to_json(&self) -> Value {
        let map: serde_json::Map<String, Value> = SymbolCategory::ALL
            .iter()
            .map(|c| {
                let cc = self.get(*c);
                (
                    c.name().to_string(),
                    json!({ "insert": cc.insert.to_f64(), "delete": cc.delete.to_f64() }),
                )
            })
            .collect();
        Value::Object(map)
    }
}

impl CostTable<f64> {
    /// Reads `{category: {insert, delete}}`. Missing categories and fields
    /// keep the default of 1.
    pub fn from_json(text: &str) -> Result<Self, OmrNedError> {
        let value: Value = serde_json::from_str(text).map_err(|e| OmrNedError::InvalidCosts(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| OmrNedError::InvalidCosts("top level must be an object".into()))?;
        let mut table = CostTable::default();
        for (name, entry) in obj {
            let category: SymbolCategory = name.parse().map_err(OmrNedError::InvalidCosts)?;
            let field = |key: &str| -> Result<f64, OmrNedError> {
                match entry.get(key) {
                    None => Ok(1.0),
                    Some(v) => v
                        .as_f64()
                        .ok_or_else(|| OmrNedError::InvalidCosts(format!("{name}.{key} must be a number"))),
                }
            };
            table.set(category, field("insert")?, field("delete")?)?;
        }
        Ok(table)
    }
}

/// Cost of inserting every symbol of a measure.
pub fn insertion_cost<C: Cost>(m: &MeasureSymbols, costs: &CostTable<C>) -> C {
    m.symbols.iter().fold(C::zero(), |acc, s| acc + costs.get(s.category).insert)
}

/// Cost of deleting every symbol of a measure.
pub fn deletion_cost<C: Cost>(m: &MeasureSymbols, costs: &CostTable<C>) -> C {
    m.symbols.iter().fold(C::zero(), |acc, s| acc + costs.get(s.category).delete)
}

/// Delete cost for every symbol of `a` missing from `b` plus insert cost for
/// every symbol of `b` missing from `a`, counted with multiplicity.
pub fn measure_cost<C: Cost>(a: &MeasureSymbols, b: &MeasureSymbols, costs: &CostTable<C>) -> C {
    let mut total = C::zero();
    let (mut i, mut j) = (0, 0);
    let (x, y) = (&a.symbols, &b.symbols);
    while i < x.len() || j < y.len() {
        let ord = match (x.get(i), y.get(j)) {
            (Some(p), Some(q)) => p.cmp(q),
            (Some(_), None) => Ordering::Less,
            (None, _) => Ordering::Greater,
        };
        match ord {
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
            Ordering::Less => {
                total = total + costs.get(x[i].category).delete;
                i += 1;
            }
            Ordering::Greater => {
                total = total + costs.get(y[j].category).insert;
                j += 1;
            }
        }
    }
    total
}

/// Unnormalized sequence edit distance between measure lists.
pub fn omr_ned_distance<C: Cost>(pred: &[MeasureSymbols], gold: &[MeasureSymbols], costs: &CostTable<C>) -> C {
    let del: Vec<C> = pred.iter().map(|m| deletion_cost(m, costs)).collect();
    let ins: Vec<C> = gold.iter().map(|m| insertion_cost(m, costs)).collect();
    let mut prev: Vec<C> = Vec::with_capacity(gold.len() + 1);
    prev.push(C::zero());
    for j in 0..gold.len() {
        prev.push(prev[j] + ins[j]);
    }
    let mut cur = vec![C::zero(); gold.len() + 1];
    for (i, p) in pred.iter().enumerate() {
        cur[0] = prev[0] + del[i];
        for (j, g) in gold.iter().enumerate() {
            let sub = prev[j] + measure_cost(p, g, costs);
            cur[j + 1] = sub.min_of(prev[j + 1] + del[i]).min_of(cur[j] + ins[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[gold.len()]
}

/// OMR-NED result.
#[derive(Debug, Clone, PartialEq)]
pub struct OmrNedOutcome<C> {
    pub score: f64,
    pub distance: C,
    /// Cost of inserting every gold measure.
    pub denominator: C,
}

/// Distance normalized by the cost of inserting all gold measures.
pub fn omr_ned<C: Cost>(
    pred: &[MeasureSymbols],
    gold: &[MeasureSymbols],
    costs: &CostTable<C>,
) -> Result<OmrNedOutcome<C>, OmrNedError> {
    let denominator = gold.iter().fold(C::zero(), |acc, m| acc + insertion_cost(m, costs));
    if gold.is_empty() || denominator.partial_cmp(&C::zero()) != Some(Ordering::Greater) {
        return Err(OmrNedError::EmptyGold);
    }
    let distance = omr_ned_distance(pred, gold, costs);
    Ok(OmrNedOutcome { score: distance.ratio(denominator), distance, denominator })
}

fn alter_symbol(alter: &str) -> String {
    let a: f64 = alter.trim().parse().unwrap_or(0.0);
    match a {
        0.0 => String::new(),
        1.0 => "#".into(),
        2.0 => "##".into(),
        -1.0 => "b".into(),
        -2.0 => "bb".into(),
        a => format!("({a})"),
    }
}

fn text_of(t: &LabeledTree, tag: &str) -> Option<String> {
    t.child_tagged(tag).and_then(|c| c.text())
}

fn quarters(duration: &str, divisions: i64) -> String {
    match duration.trim().parse::<i64>() {
        Ok(d) if divisions > 0 => Rational::new(d, divisions).to_string(),
        _ => duration.trim().to_string(),
    }
}

/// Per-part state carried across measures.
#[derive(Default)]
struct PartState {
    divisions: i64,
}

fn measure_symbols(measure: &LabeledTree, state: &mut PartState) -> Vec<Symbol> {
    let mut out = Vec::new();
    for el in &measure.children {
        match el.tag().as_str() {
            "attributes" => {
                for a in &el.children {
                    match a.tag().as_str() {
                        "divisions" => {
                            if let Some(d) = a.text().and_then(|t| t.trim().parse().ok()) {
                                state.divisions = d;
                            }
                        }
                        "key" => {
                            let fifths = text_of(a, "fifths").unwrap_or_default();
                            let mode = text_of(a, "mode").unwrap_or_default();
                            let payload = if mode.is_empty() { fifths } else { format!("{fifths} {mode}") };
                            out.push(Symbol::new(SymbolCategory::Key, payload));
                        }
                        "time" => {
                            let payload = match (text_of(a, "beats"), text_of(a, "beat-type")) {
                                (Some(b), Some(t)) => format!("{b}/{t}"),
                                _ if a.child_tagged("senza-misura").is_some() => "senza-misura".into(),
                                _ => "time".into(),
                            };
                            out.push(Symbol::new(SymbolCategory::Time, payload));
                        }
                        "clef" => {
                            let sign = text_of(a, "sign").unwrap_or_default();
                            let line = text_of(a, "line").unwrap_or_default();
                            let octave = text_of(a, "clef-octave-change").map(|o| o.to_string()).unwrap_or_default();
                            out.push(Symbol::new(SymbolCategory::Clef, format!("{sign}{line}{octave}")));
                        }
                        _ => {}
                    }
                }
            }
            "note" => note_symbols(el, state, &mut out),
            "barline" => {
                let mut parts = Vec::new();
                if let Some(style) = text_of(el, "bar-style") {
                    parts.push(style);
                }
                if let Some(r) = el.child_tagged("repeat") {
                    parts.push(format!("repeat-{}", r.attribute("direction").unwrap_or_default()));
                }
                if let Some(e) = el.child_tagged("ending") {
                    parts.push(format!(
                        "ending-{}-{}",
                        e.attribute("number").unwrap_or_default(),
                        e.attribute("type").unwrap_or_default()
                    ));
                }
                if !parts.is_empty() {
                    out.push(Symbol::new(SymbolCategory::BarlineAttr, parts.join(" ")));
                }
            }
            "direction" => {
                for dt in el.children_tagged("direction-type") {
                    for d in &dt.children {
                        out.push(Symbol::new(SymbolCategory::Other, format!("direction:{}", d.tag())));
                    }
                }
            }
            "harmony" => out.push(Symbol::new(SymbolCategory::Other, "harmony")),
            _ => {}
        }
    }
    out
}

fn note_symbols(note: &LabeledTree, state: &PartState, out: &mut Vec<Symbol>) {
    let grace = note.child_tagged("grace").is_some();
    let duration = text_of(note, "duration").map(|d| quarters(&d, state.divisions));
    let with_duration = |base: String| match (&duration, grace) {
        (_, true) => format!("grace:{base}"),
        (Some(d), false) => format!("{base}:{d}"),
        (None, false) => base,
    };
    if note.child_tagged("rest").is_some() {
        out.push(Symbol::new(SymbolCategory::Rest, with_duration("rest".into())));
    } else if let Some(p) = note.child_tagged("pitch") {
        let step = text_of(p, "step").unwrap_or_default();
        let alter = text_of(p, "alter").map(|a| alter_symbol(&a)).unwrap_or_default();
        let octave = text_of(p, "octave").unwrap_or_default();
        out.push(Symbol::new(SymbolCategory::Note, with_duration(format!("{step}{alter}{octave}"))));
    } else if let Some(u) = note.child_tagged("unpitched") {
        let step = text_of(u, "display-step").unwrap_or_default();
        let octave = text_of(u, "display-octave").unwrap_or_default();
        out.push(Symbol::new(SymbolCategory::Note, with_duration(format!("x{step}{octave}"))));
    }
    for n in note.children_tagged("notations") {
        for item in &n.children {
            match item.tag().as_str() {
                "articulations" | "ornaments" | "technical" => {
                    for a in &item.children {
                        out.push(Symbol::new(SymbolCategory::Articulation, a.tag()));
                    }
                }
                "fermata" | "arpeggiate" => out.push(Symbol::new(SymbolCategory::Articulation, item.tag())),
                "tied" | "slur" | "tuplet" => out.push(Symbol::new(
                    SymbolCategory::Other,
                    format!("{}-{}", item.tag(), item.attribute("type").unwrap_or_default()),
                )),
                _ => {}
            }
        }
    }
}

/// One symbol multiset per measure index, merged across parts.
pub fn extract_measures(tree: &LabeledTree) -> Result<Vec<MeasureSymbols>, OmrNedError> {
    let mut merged: Vec<MeasureSymbols> = Vec::new();
    let mut any = false;
    let mut add = |index: usize, symbols: Vec<Symbol>| {
        if merged.len() <= index {
            merged.resize_with(index + 1, MeasureSymbols::default);
        }
        merged[index].extend(symbols);
    };
    match tree.tag().as_str() {
        "score-timewise" => {
            let mut states: HashMap<String, PartState> = HashMap::new();
            for (i, measure) in tree.children_tagged("measure").enumerate() {
                any = true;
                let mut symbols = Vec::new();
                for part in measure.children_tagged("part") {
                    let id = part.attribute("id").unwrap_or_default();
                    symbols.extend(measure_symbols(part, states.entry(id).or_default()));
                }
                add(i, symbols);
            }
        }
        _ => {
            for part in tree.children_tagged("part") {
                let mut state = PartState::default();
                for (i, measure) in part.children_tagged("measure").enumerate() {
                    any = true;
                    add(i, measure_symbols(measure, &mut state));
                }
            }
        }
    }
    if !any {
        return Err(OmrNedError::NoMeasures);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mxl::parse_musicxml;

    fn note(p: &str) -> Symbol {
        Symbol::new(SymbolCategory::Note, p)
    }

    #[test]
    fn measure_cost_examples() {
        let costs = CostTable::<f64>::default();
        let a = MeasureSymbols::new(vec![note("C4"), note("G4")]);
        let b = MeasureSymbols::new(vec![note("C4"), note("A4")]);
        assert_eq!(measure_cost(&a, &a, &costs), 0.0);
        assert_eq!(measure_cost(&a, &b, &costs), 2.0);
        assert_eq!(measure_cost(&MeasureSymbols::default(), &a, &costs), 2.0);
        // Multisets: a duplicate note is one extra deletion.
        let c = MeasureSymbols::new(vec![note("C4"), note("C4"), note("G4")]);
        assert_eq!(measure_cost(&c, &a, &costs), 1.0);
    }

    #[test]
    fn weighted_categories() {
        let mut costs = CostTable::<f64>::default();
        costs.set(SymbolCategory::Rest, 0.5, 2.0).unwrap();
        let a = MeasureSymbols::new(vec![Symbol::new(SymbolCategory::Rest, "rest:1")]);
        let e = MeasureSymbols::default();
        assert_eq!(measure_cost(&a, &e, &costs), 2.0);
        assert_eq!(measure_cost(&e, &a, &costs), 0.5);
        assert!(costs.set(SymbolCategory::Rest, -1.0, 1.0).is_err());
    }

    #[test]
    fn omr_ned_boundaries() {
        let costs = CostTable::<f64>::default();
        let gold = vec![
            MeasureSymbols::new(vec![note("C4:1"), note("D4:1")]),
            MeasureSymbols::new(vec![note("E4:2")]),
        ];
        assert_eq!(omr_ned(&gold, &gold, &costs).unwrap().score, 0.0);
        assert_eq!(omr_ned(&[], &gold, &costs).unwrap().score, 1.0);
        assert_eq!(omr_ned(&gold, &[], &costs), Err(OmrNedError::EmptyGold));
        let pred = vec![MeasureSymbols::new(vec![note("C4:1"), note("D4:1")])];
        assert_eq!(omr_ned(&pred, &gold, &costs).unwrap().score, 1.0 / 3.0);
    }

    #[test]
    fn cost_table_json() {
        let t = CostTable::from_json(r#"{"note": {"insert": 2, "delete": 3}, "rest": {"insert": 0.5}}"#).unwrap();
        assert_eq!(t.get(SymbolCategory::Note), CategoryCost { insert: 2.0, delete: 3.0 });
        assert_eq!(t.get(SymbolCategory::Rest), CategoryCost { insert: 0.5, delete: 1.0 });
        assert_eq!(t.get(SymbolCategory::Key), CategoryCost { insert: 1.0, delete: 1.0 });
        assert!(CostTable::from_json(r#"{"dynamics": {}}"#).is_err());
        assert!(CostTable::from_json(r#"{"note": {"insert": -1}}"#).is_err());
        assert_eq!(t.to_json()["note"]["delete"], 3.0);
    }

    #[test]
    fn extract_from_fixture() {
        let xml = br#"<score-partwise><part id="P1">
<measure number="1">
  <attributes><divisions>2</divisions><key><fifths>0</fifths></key>
    <time><beats>4</beats><beat-type>4</beat-type></time><clef><sign>G</sign><line>2</line></clef></attributes>
  <note><pitch><step>C</step><octave>4</octave></pitch><duration>4</duration></note>
  <note><pitch><step>F</step><alter>1</alter><octave>4</octave></pitch><duration>4</duration>
    <notations><articulations><staccato/></articulations></notations></note>
</measure>
<measure number="2"/>
</part></score-partwise>"#;
        let t = parse_musicxml(xml).unwrap();
        let m = extract_measures(&t).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].count(SymbolCategory::Note), 2);
        assert_eq!(m[0].count(SymbolCategory::Clef), 1);
        assert_eq!(m[0].count(SymbolCategory::Key), 1);
        assert_eq!(m[0].count(SymbolCategory::Time), 1);
        assert_eq!(m[0].count(SymbolCategory::Articulation), 1);
        assert!(m[0].symbols().contains(&note("F#4:2")));
        assert!(m[1].is_empty());
        let none = parse_musicxml(b"<score-partwise><part id=\"P1\"/></score-partwise>").unwrap();
        assert_eq!(extract_measures(&none), Err(OmrNedError::NoMeasures));
    }

    #[test]
    fn parts_merge_by_index() {
        let xml = br#"<score-partwise>
<part id="P1"><measure><note><rest/><duration>1</duration></note></measure></part>
<part id="P2"><measure><note><rest/><duration>1</duration></note></measure><measure/></part>
</score-partwise>"#;
        let m = extract_measures(&parse_musicxml(xml).unwrap()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].count(SymbolCategory::Rest), 2);
    }
}
