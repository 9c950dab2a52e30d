use omrkit::abc::{emit_abc, parse_abc, AbcScore};
use omrkit::bpe::{train, BASE_VOCAB_SIZE};
use omrkit::canon::{canonicalize, mask_text, CanonConfig};
use omrkit::convert::convert;
use omrkit::mxl::{parse_musicxml, serialize_musicxml};
use omrkit_testkit::abc_gen::{random_tune, TuneOptions};
use omrkit_testkit::oracle::{musicxml_events, sounding_events};
use omrkit_testkit::rng;

/// Measures on each text line of each voice.
fn bars_per_line(score: &AbcScore) -> Vec<Vec<usize>> {
    score
        .voices
        .iter()
        .map(|v| {
            let mut lines = vec![0];
            for m in &v.measures {
                *lines.last_mut().unwrap() += 1;
                if m.line_end.is_some() {
                    lines.push(0);
                }
            }
            if lines.len() > 1 && *lines.last().unwrap() == 0 {
                lines.pop();
            }
            lines
        })
        .collect()
}

/// Lines of the tune body: everything after the first `K:` line.
fn body_lines(text: &str) -> Vec<&str> {
    text.lines().skip_while(|l| !l.starts_with("K:")).skip(1).collect()
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Score line breaks of a raw single-voice tune whose lines end at barlines:
/// every music line but the last, unless it continues with `\`.
fn raw_score_breaks(src: &str) -> usize {
    let is_field = |l: &str| l.len() > 1 && l.as_bytes()[1] == b':' && l.as_bytes()[0].is_ascii_alphabetic();
    let music: Vec<&str> = body_lines(src)
        .into_iter()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('%') && !is_field(l))
        .collect();
    music.iter().take(music.len().saturating_sub(1)).filter(|l| !strip_comment(l).trim_end().ends_with('\\')).count()
}

/// `$` marks outside annotations and comments in a canonical body.
fn dollar_marks(text: &str) -> usize {
    body_lines(text)
        .into_iter()
        .map(|l| {
            let mut in_quote = false;
            strip_comment(l)
                .chars()
                .filter(|&c| {
                    if c == '"' {
                        in_quote = !in_quote;
                    }
                    c == '$' && !in_quote
                })
                .count()
        })
        .sum()
}

#[test]
fn canonical_form_on_generated_single_voice_tunes() {
    let mut r = rng(11);
    let cfg = CanonConfig::default();
    for i in 0..300 {
        let src = random_tune(&mut r, i, TuneOptions { multi_voice: false, ..Default::default() });
        let score = parse_abc(&src).unwrap();
        let canon = canonicalize(&score, &cfg).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let text = emit_abc(&canon);
        let reparsed = parse_abc(&text).unwrap();
        assert_eq!(reparsed.header_value("L"), Some("1/8"), "{text}");
        assert_eq!(sounding_events(&score), sounding_events(&reparsed), "events changed\n{src}\n---\n{text}");
        assert_eq!(dollar_marks(&text), raw_score_breaks(&src), "score line breaks\n{src}\n---\n{text}");
        let again = emit_abc(&canonicalize(&reparsed, &cfg).unwrap());
        assert_eq!(text, again, "not idempotent\n{src}");
        for lines in bars_per_line(&reparsed) {
            let (last, full) = lines.split_last().unwrap();
            assert!(full.iter().all(|&n| n == 5) && *last <= 5, "{lines:?}\n{text}");
        }
    }
}

#[test]
fn canonical_form_on_generated_multi_voice_tunes() {
    let mut r = rng(12);
    let cfg = CanonConfig::default();
    for i in 0..300 {
        let src = random_tune(&mut r, i, TuneOptions::default());
        let score = parse_abc(&src).unwrap();
        let canon = canonicalize(&score, &cfg).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let text = emit_abc(&canon);
        let reparsed = parse_abc(&text).unwrap();
        let again = emit_abc(&canonicalize(&reparsed, &cfg).unwrap());
        assert_eq!(text, again, "not idempotent\n{src}");
        let masked = emit_abc(&mask_text(&canon, &cfg.text_token));
        parse_abc(&masked).unwrap_or_else(|e| panic!("{e}\n{masked}"));
    }
}

#[test]
fn conversion_keeps_pitches_and_durations() {
    let mut r = rng(13);
    for i in 0..300 {
        let src = random_tune(&mut r, i, TuneOptions::single_voice());
        let score = parse_abc(&src).unwrap();
        let c = convert(&score).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let tree = parse_musicxml(serialize_musicxml(&c.tree).as_bytes()).unwrap();
        assert_eq!(musicxml_events(&tree), sounding_events(&score), "{src}");
    }
}

#[test]
fn bpe_round_trips_generated_tunes() {
    let mut r = rng(14);
    let corpus: Vec<String> = (0..200).map(|i| random_tune(&mut r, i, TuneOptions::default())).collect();
    let vocab = train(corpus.iter().map(String::as_str), BASE_VOCAB_SIZE + 300, false).unwrap();
    assert_eq!(vocab.len(), BASE_VOCAB_SIZE + 300);
    for i in 0..100 {
        let t = random_tune(&mut r, 1000 + i, TuneOptions::default());
        assert_eq!(vocab.decode(&vocab.encode(&t)).unwrap(), t);
    }
}

#[test]
fn engraved_documents_meet_metric_boundaries() {
    use omrkit::metrics::omrned::{extract_measures, omr_ned, CostTable};
    use omrkit::metrics::ted::{tedn, DEFAULT_MAX_NODES};
    use omrkit_testkit::gen::engraved_musicxml;

    let mut r = rng(15);
    for i in 0..25 {
        let xml = engraved_musicxml(&mut r, &format!("Study <{i}> & variation"));
        let gold = parse_musicxml(xml.as_bytes()).unwrap();
        assert_eq!(parse_musicxml(serialize_musicxml(&gold).as_bytes()).unwrap(), gold);
        assert_eq!(tedn(Some(&gold), &gold, DEFAULT_MAX_NODES).unwrap().score, 0.0);
        assert_eq!(tedn(None, &gold, DEFAULT_MAX_NODES).unwrap().score, 1.0);
        let measures = extract_measures(&gold).unwrap();
        let costs = CostTable::<f64>::default();
        assert_eq!(omr_ned(&measures, &measures, &costs).unwrap().score, 0.0);
        assert_eq!(omr_ned(&[], &measures, &costs).unwrap().score, 1.0);
    }
}
