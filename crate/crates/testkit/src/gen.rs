//! Random trees, strings, measure lists and MusicXML documents.

use omrkit::metrics::omrned::{MeasureSymbols, Symbol, SymbolCategory};
use omrkit::mxl::LabeledTree;
use rand::seq::IndexedRandom;
use rand::Rng;

/// A random ordered tree with exactly `nodes` nodes whose labels come from
/// the first `alphabet` lowercase letters.
pub fn random_tree<R: Rng>(rng: &mut R, nodes: usize, alphabet: u8) -> LabeledTree {
    assert!(nodes >= 1 && (1..=26).contains(&alphabet));
    let mut labels = Vec::with_capacity(nodes);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for i in 0..nodes {
        labels.push(char::from(b'a' + rng.random_range(0..alphabet)).to_string());
        if i > 0 {
            let parent = rng.random_range(0..i);
            let at = rng.random_range(0..=children[parent].len());
            children[parent].insert(at, i);
        }
    }
    fn build(i: usize, labels: &[String], children: &[Vec<usize>]) -> LabeledTree {
        LabeledTree::node(labels[i].clone(), children[i].iter().map(|&c| build(c, labels, children)).collect())
    }
    build(0, &labels, &children)
}

pub fn random_string<R: Rng>(rng: &mut R, max_len: usize, alphabet: &[char]) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

const PAYLOADS: [(SymbolCategory, &[&str]); 6] = [
    (SymbolCategory::Note, &["C4:1/4", "D4:1/4", "E4:1/2", "G#4:1/8", "C4:1"]),
    (SymbolCategory::Rest, &["rest:1/4", "rest:1"]),
    (SymbolCategory::Clef, &["G2", "F4"]),
    (SymbolCategory::Key, &["0 major", "2 major"]),
    (SymbolCategory::Time, &["4/4", "3/4"]),
    (SymbolCategory::Articulation, &["staccato", "fermata"]),
];

pub fn random_measure<R: Rng>(rng: &mut R, max_symbols: usize) -> MeasureSymbols {
    let n = rng.random_range(0..=max_symbols);
    MeasureSymbols::new(
        (0..n)
            .map(|_| {
                let (cat, payloads) = PAYLOADS.choose(rng).unwrap();
                Symbol::new(*cat, *payloads.choose(rng).unwrap())
            })
            .collect(),
    )
}

pub fn random_measures<R: Rng>(rng: &mut R, max_measures: usize, max_symbols: usize) -> Vec<MeasureSymbols> {
    let n = rng.random_range(0..=max_measures);
    (0..n).map(|_| random_measure(rng, max_symbols)).collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A score-partwise document in the shape notation editors export: header
/// metadata, layout defaults, credits, beams, stems, lyrics, directions and
/// harmony, none of which the ABC converter produces.
pub fn engraved_musicxml<R: Rng>(rng: &mut R, title: &str) -> String {
    let mut x = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n<!DOCTYPE score-partwise PUBLIC \"-//Recordare//DTD MusicXML 4.0 Partwise//EN\" \"http://www.musicxml.org/dtds/partwise.dtd\">\n<score-partwise version=\"4.0\">\n",
    );
    x += &format!("  <work><work-title>{}</work-title></work>\n", esc(title));
    x += "  <identification>\n    <creator type=\"composer\">Anonymous</creator>\n    <encoding><software>Engraver 3.1</software><encoding-date>2024-05-01</encoding-date></encoding>\n  </identification>\n";
    x += "  <defaults><scaling><millimeters>7</millimeters><tenths>40</tenths></scaling><page-layout><page-height>1697</page-height><page-width>1200</page-width></page-layout></defaults>\n";
    x += &format!("  <credit page=\"1\"><credit-words default-x=\"600\" default-y=\"1600\" justify=\"center\">{}</credit-words></credit>\n", esc(title));
    let parts = rng.random_range(1..3);
    x += "  <part-list>\n";
    for p in 1..=parts {
        x += &format!("    <score-part id=\"P{p}\"><part-name>Part {p}</part-name><score-instrument id=\"P{p}-I1\"><instrument-name>Piano</instrument-name></score-instrument></score-part>\n");
    }
    x += "  </part-list>\n";
    let measures = rng.random_range(4..16);
    let steps = ["C", "D", "E", "F", "G", "A", "B"];
    for p in 1..=parts {
        x += &format!("  <part id=\"P{p}\">\n");
        for m in 1..=measures {
            x += &format!("    <measure number=\"{m}\" width=\"{}\">\n", 180 + rng.random_range(0..60));
            if m == 1 {
                let (sign, line) = if p == 2 { ("F", 4) } else { ("G", 2) };
                x += &format!("      <print><system-layout><system-margins><left-margin>0</left-margin><right-margin>0</right-margin></system-margins></system-layout></print>\n      <attributes><divisions>2</divisions><key><fifths>{}</fifths><mode>major</mode></key><time><beats>4</beats><beat-type>4</beat-type></time><clef><sign>{sign}</sign><line>{line}</line></clef></attributes>\n", rng.random_range(-3..4));
                x += "      <direction placement=\"above\"><direction-type><metronome><beat-unit>quarter</beat-unit><per-minute>96</per-minute></metronome></direction-type><sound tempo=\"96\"/></direction>\n";
            }
            if rng.random_bool(0.2) {
                x += "      <harmony><root><root-step>C</root-step></root><kind>major</kind></harmony>\n";
            }
            if rng.random_bool(0.15) {
                x += "      <direction placement=\"below\"><direction-type><dynamics><mf/></dynamics></direction-type></direction>\n";
            }
            let mut left = 8;
            while left > 0 {
                let d = *[1, 2, 2, 4].choose(rng).unwrap().min(&left);
                left -= d;
                let kind = match d {
                    1 => "eighth",
                    2 => "quarter",
                    _ => "half",
                };
                if rng.random_bool(0.1) {
                    x += &format!("      <note><rest/><duration>{d}</duration><voice>1</voice><type>{kind}</type></note>\n");
                    continue;
                }
                let step = steps.choose(rng).unwrap();
                let octave = if p == 2 { 3 } else { rng.random_range(4..6) };
                let alter = if rng.random_bool(0.1) { "<alter>1</alter>" } else { "" };
                let stem = if octave >= 5 { "down" } else { "up" };
                x += &format!(
                    "      <note default-x=\"{}\" default-y=\"-20\"><pitch><step>{step}</step>{alter}<octave>{octave}</octave></pitch><duration>{d}</duration><voice>1</voice><type>{kind}</type><stem>{stem}</stem>",
                    rng.random_range(10..170)
                );
                if d == 1 {
                    x += "<beam number=\"1\">begin</beam>";
                }
                if rng.random_bool(0.1) {
                    x += "<notations><articulations><staccato placement=\"below\"/></articulations></notations>";
                }
                if p == 1 && rng.random_bool(0.3) {
                    x += "<lyric number=\"1\"><syllabic>single</syllabic><text>la</text></lyric>";
                }
                x += "</note>\n";
            }
            if m == measures {
                x += "      <barline location=\"right\"><bar-style>light-heavy</bar-style></barline>\n";
            }
            x += "    </measure>\n";
        }
        x += "  </part>\n";
    }
    x += "</score-partwise>\n";
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tree_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..20 {
            assert_eq!(random_tree(&mut rng, n, 3).node_count(), n);
        }
    }

    #[test]
    fn engraved_documents_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..10 {
            let xml = engraved_musicxml(&mut rng, &format!("Study & Étude <{i}>"));
            let tree = omrkit::mxl::parse_musicxml(xml.as_bytes()).unwrap();
            assert!(tree.node_count() > 50);
        }
    }
}
