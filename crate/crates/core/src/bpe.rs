//! Byte-level BPE over ABC text.
//!
//! Ids 0..=255 are raw bytes, 256..=259 the special tokens, and learned
//! merges follow from 260 on. Text is split only around special-token
//! literals, so merges may cross whitespace and barlines. Pair frequencies
//! count every adjacent position (overlaps included); equal frequencies go to
//! the pair whose (left, right) byte strings sort first.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BEGIN_OF_ABC: &str = "<|begin_of_abc|>";
pub const IMAGE: &str = "<|image|>";
pub const END_OF_ABC: &str = "<|end_of_abc|>";
pub const TEXT: &str = "<|text|>";

/// Special tokens in id order, starting at [`FIRST_SPECIAL_ID`].
pub const SPECIAL_TOKENS: [&str; 4] = [BEGIN_OF_ABC, IMAGE, END_OF_ABC, TEXT];
pub const FIRST_SPECIAL_ID: u32 = 256;
pub const FIRST_MERGE_ID: u32 = FIRST_SPECIAL_ID + SPECIAL_TOKENS.len() as u32;
/// Vocabulary size with no merges.
pub const BASE_VOCAB_SIZE: usize = FIRST_MERGE_ID as usize;
pub const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BpeError {
    #[error("corpus supports only {learned} of {requested} merges")]
    CorpusTooSmall { requested: usize, learned: usize },
    #[error("vocabulary size {0} is below the {BASE_VOCAB_SIZE} base symbols")]
    InvalidVocabSize(usize),
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("bad vocabulary file: {0}")]
    Format(String),
}

/// A trained tokenizer: the merge list plus the byte string of every id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    merges: Vec<(u32, u32)>,
    tokens: Vec<Vec<u8>>,
    ranks: HashMap<(u32, u32), u32>,
}

/// Pieces of a text: plain runs and special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece<'a> {
    Plain(&'a str),
    Special(u32),
}

fn split_specials(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let hit = SPECIAL_TOKENS
            .iter()
            .enumerate()
            .filter_map(|(i, s)| rest.find(s).map(|at| (at, i)))
            .min();
        match hit {
            Some((at, i)) => {
                if at > 0 {
                    out.push(Piece::Plain(&rest[..at]));
                }
                out.push(Piece::Special(FIRST_SPECIAL_ID + i as u32));
                rest = &rest[at + SPECIAL_TOKENS[i].len()..];
            }
            None => {
                if !rest.is_empty() {
                    out.push(Piece::Plain(rest));
                }
                return out;
            }
        }
    }
}

impl TokenVocab {
    /// Tokenizer with no merges: one id per byte plus the specials.
    pub fn bytes_only() -> Self {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.extend(SPECIAL_TOKENS.iter().map(|s| s.as_bytes().to_vec()));
        TokenVocab { merges: Vec::new(), tokens, ranks: HashMap::new() }
    }

    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let id = self.tokens.len() as u32;
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        self.tokens.push(bytes);
        self.ranks.insert((left, right), self.merges.len() as u32);
        self.merges.push((left, right));
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Bytes of a token, or `None` for an unknown id.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn is_special(id: u32) -> bool {
        (FIRST_SPECIAL_ID..FIRST_MERGE_ID).contains(&id)
    }

    pub fn special_id(literal: &str) -> Option<u32> {
        SPECIAL_TOKENS.iter().position(|s| *s == literal).map(|i| FIRST_SPECIAL_ID + i as u32)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for piece in split_specials(text) {
            match piece {
                Piece::Special(id) => out.push(id),
                Piece::Plain(s) => out.extend(self.encode_plain(s.as_bytes())),
            }
        }
        out
    }

    /// Applies merges in rank order; each round merges every non-overlapping
    /// occurrence of the best-ranked pair from left to right.
    fn encode_plain(&self, bytes: &[u8]) -> Vec<u32> {
        let mut ids: Vec<u32> = bytes.iter().map(|&b| u32::from(b)).collect();
        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { return ids };
            let (l, r) = self.merges[rank as usize];
            let new_id = FIRST_MERGE_ID + rank;
            let mut merged = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(ids[i]);
                    i += 1;
                }
            }
            ids = merged;
        }
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>, BpeError> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(self.token_bytes(id).ok_or(BpeError::UnknownTokenId(id))?);
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        String::from_utf8(self.decode_bytes(ids)?).map_err(|_| BpeError::InvalidUtf8)
    }

    /// Readable form of a token in the byte-to-unicode alphabet.
    pub fn token_string(&self, id: u32) -> Option<String> {
        if Self::is_special(id) {
            return Some(SPECIAL_TOKENS[(id - FIRST_SPECIAL_ID) as usize].to_string());
        }
        self.token_bytes(id).map(bytes_to_unicode)
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            vocab_size: self.len(),
            specials: SPECIAL_TOKENS
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), FIRST_SPECIAL_ID + i as u32))
                .collect(),
            merges: self.merges.iter().map(|&(l, r)| [l, r]).collect(),
            tokens: (FIRST_MERGE_ID..self.len() as u32).map(|id| self.token_string(id).unwrap_or_default()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, BpeError> {
        let file: VocabFile = serde_json::from_str(json).map_err(|e| BpeError::Format(e.to_string()))?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(BpeError::Format(format!("unsupported version {}", file.version)));
        }
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if file.specials.get(*s) != Some(&(FIRST_SPECIAL_ID + i as u32)) {
                return Err(BpeError::Format(format!("special token {s} missing or renumbered")));
            }
        }
        let mut vocab = TokenVocab::bytes_only();
        for [l, r] in file.merges {
            let next = vocab.len() as u32;
            for id in [l, r] {
                if id >= next || Self::is_special(id) {
                    return Err(BpeError::Format(format!("merge refers to id {id} before it exists or to a special")));
                }
            }
            if vocab.ranks.contains_key(&(l, r)) {
                return Err(BpeError::Format(format!("duplicate merge ({l}, {r})")));
            }
            vocab.push_merge(l, r);
        }
        if file.vocab_size != vocab.len() {
            return Err(BpeError::Format(format!("vocab_size {} but {} tokens", file.vocab_size, vocab.len())));
        }
        Ok(vocab)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    vocab_size: usize,
    specials: std::collections::BTreeMap<String, u32>,
    /// Merges as `[left id, right id]` in training order; merge `k` creates
    /// id `260 + k`.
    merges: Vec<[u32; 2]>,
    /// Learned tokens in id order, for inspection only.
    tokens: Vec<String>,
}

/// GPT-2 style printable stand-in for each byte.
fn byte_char(b: u8) -> char {
    let printable = |b: u8| (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
    if printable(b) {
        return char::from(b);
    }
    let shift = (0..b).filter(|&x| !printable(x)).count() as u32;
    char::from_u32(256 + shift).expect("valid code point")
}

pub fn bytes_to_unicode(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_char(b)).collect()
}

type PairBytes = (Rc<[u8]>, Rc<[u8]>);

/// Heap entry: highest count first, then smallest (left, right) bytes.
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: usize,
    key: Reverse<PairBytes>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count.cmp(&other.count).then_with(|| self.key.cmp(&other.key)).then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: u32 = u32::MAX;

/// All plain runs of a corpus as one array of doubly linked token lists.
struct Corpus {
    ids: Vec<u32>,
    prev: Vec<u32>,
    next: Vec<u32>,
}

struct Trainer {
    corpus: Corpus,
    vocab: TokenVocab,
    bytes: Vec<Rc<[u8]>>,
    counts: HashMap<(u32, u32), usize>,
    positions: HashMap<(u32, u32), Vec<u32>>,
    heap: BinaryHeap<Candidate>,
}

impl Trainer {
    fn new<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut corpus = Corpus { ids: Vec::new(), prev: Vec::new(), next: Vec::new() };
        for text in texts {
            for piece in split_specials(text) {
                let Piece::Plain(s) = piece else { continue };
                let start = corpus.ids.len() as u32;
                let n = s.len() as u32;
                for (k, &b) in s.as_bytes().iter().enumerate() {
                    let k = k as u32;
                    corpus.ids.push(u32::from(b));
                    corpus.prev.push(if k == 0 { NONE } else { start + k - 1 });
                    corpus.next.push(if k + 1 == n { NONE } else { start + k + 1 });
                }
            }
        }
        let vocab = TokenVocab::bytes_only();
        let bytes = vocab.tokens.iter().map(|t| Rc::from(t.as_slice())).collect();
        let mut trainer =
            Trainer { corpus, vocab, bytes, counts: HashMap::new(), positions: HashMap::new(), heap: BinaryHeap::new() };
        for i in 0..trainer.corpus.ids.len() as u32 {
            let j = trainer.corpus.next[i as usize];
            if j != NONE {
                let pair = (trainer.corpus.ids[i as usize], trainer.corpus.ids[j as usize]);
                *trainer.counts.entry(pair).or_default() += 1;
                trainer.positions.entry(pair).or_default().push(i);
            }
        }
        let pairs: Vec<(u32, u32)> = trainer.counts.keys().copied().collect();
        for pair in pairs {
            trainer.push_candidate(pair);
        }
        trainer
    }

    fn push_candidate(&mut self, pair: (u32, u32)) {
        let count = self.counts.get(&pair).copied().unwrap_or(0);
        if count >= 2 {
            let key = Reverse((self.bytes[pair.0 as usize].clone(), self.bytes[pair.1 as usize].clone()));
            self.heap.push(Candidate { count, key, pair });
        }
    }

    /// Best pair whose heap entry is still current.
    fn pop_best(&mut self) -> Option<(u32, u32)> {
        while let Some(c) = self.heap.pop() {
            if self.counts.get(&c.pair).copied() == Some(c.count) {
                return Some(c.pair);
            }
        }
        None
    }

    fn adjust(&mut self, pair: (u32, u32), delta: isize, at: u32, touched: &mut Vec<(u32, u32)>) {
        let c = self.counts.entry(pair).or_default();
        *c = c.checked_add_signed(delta).expect("pair count stays non-negative");
        if delta > 0 {
            self.positions.entry(pair).or_default().push(at);
        }
        touched.push(pair);
    }

    fn merge(&mut self, pair: (u32, u32)) {
        let (a, b) = pair;
        let new_id = self.vocab.push_merge(a, b);
        self.bytes.push(Rc::from(self.vocab.tokens[new_id as usize].as_slice()));
        let mut sites = self.positions.remove(&pair).unwrap_or_default();
        sites.sort_unstable();
        let mut touched = Vec::new();
        for i in sites {
            let changes = {
                let c = &mut self.corpus;
                let iu = i as usize;
                let j = c.next[iu];
                // The site may have been consumed by an earlier merge in this pass.
                if c.ids[iu] != a || j == NONE || c.ids[j as usize] != b {
                    continue;
                }
                let p = c.prev[iu];
                let n = c.next[j as usize];
                let mut changes: Vec<((u32, u32), isize, u32)> = Vec::with_capacity(5);
                if p != NONE {
                    changes.push(((c.ids[p as usize], a), -1, p));
                }
                changes.push(((a, b), -1, i));
                if n != NONE {
                    changes.push(((b, c.ids[n as usize]), -1, j));
                }
                c.ids[iu] = new_id;
                c.ids[j as usize] = NONE;
                c.next[iu] = n;
                if n != NONE {
                    c.prev[n as usize] = i;
                    changes.push(((new_id, c.ids[n as usize]), 1, i));
                }
                if p != NONE {
                    changes.push(((c.ids[p as usize], new_id), 1, p));
                }
                changes
            };
            for (pair, delta, at) in changes {
                self.adjust(pair, delta, at, &mut touched);
            }
        }
        self.counts.remove(&pair);
        touched.sort_unstable();
        touched.dedup();
        for p in touched {
            if p != pair {
                self.push_candidate(p);
            }
        }
    }
}

/// Learns merges until the vocabulary reaches `vocab_size` or no pair occurs
/// at least twice. With `strict`, stopping early is an error.
pub fn train<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    vocab_size: usize,
    strict: bool,
) -> Result<TokenVocab, BpeError> {
    if vocab_size < BASE_VOCAB_SIZE {
        return Err(BpeError::InvalidVocabSize(vocab_size));
    }
    let requested = vocab_size - BASE_VOCAB_SIZE;
    let mut trainer = Trainer::new(corpus);
    if trainer.corpus.ids.is_empty() && requested > 0 {
        return Err(BpeError::CorpusTooSmall { requested, learned: 0 });
    }
    while trainer.vocab.merges.len() < requested {
        let Some(pair) = trainer.pop_best() else { break };
        trainer.merge(pair);
    }
    let learned = trainer.vocab.merges.len();
    if strict && learned < requested {
        return Err(BpeError::CorpusTooSmall { requested, learned });
    }
    Ok(trainer.vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let v = train(["aaab aaab"], BASE_VOCAB_SIZE + 1, true).unwrap();
        assert_eq!(v.merges(), &[(u32::from(b'a'), u32::from(b'a'))]);
        assert_eq!(v.token_bytes(FIRST_MERGE_ID), Some(&b"aa"[..]));
    }

    #[test]
    fn ties_break_lexicographically() {
        // "ab", "bc" and "cd" each occur twice; "ab" sorts first.
        let v = train(["cdab-cdab"], BASE_VOCAB_SIZE + 1, true).unwrap();
        assert_eq!(v.token_bytes(FIRST_MERGE_ID), Some(&b"ab"[..]));
    }

    #[test]
    fn zero_merges_is_bytes() {
        let v = train(["abc abc"], BASE_VOCAB_SIZE, true).unwrap();
        assert_eq!(v.len(), BASE_VOCAB_SIZE);
        assert_eq!(v.encode("ab"), vec![97, 98]);
        assert_eq!(v.encode(""), Vec::<u32>::new());
        assert_eq!(v.decode(&[]).unwrap(), "");
    }

    #[test]
    fn stops_when_pairs_run_out() {
        let v = train(["abab"], BASE_VOCAB_SIZE + 50, false).unwrap();
        assert!(v.len() < BASE_VOCAB_SIZE + 50);
        assert!(matches!(
            train(["abab"], BASE_VOCAB_SIZE + 50, true),
            Err(BpeError::CorpusTooSmall { requested: 50, .. })
        ));
        assert!(matches!(train([""], BASE_VOCAB_SIZE + 1, false), Err(BpeError::CorpusTooSmall { .. })));
        assert_eq!(train(["x"], 10, false), Err(BpeError::InvalidVocabSize(10)));
    }

    #[test]
    fn specials_are_atomic() {
        let corpus = ["T:<|text|>\nCEG CEG CEG<|text|>CEG", "<|begin_of_abc|>CEG CEG"];
        let v = train(corpus, BASE_VOCAB_SIZE + 20, false).unwrap();
        for &(l, r) in v.merges() {
            assert!(!TokenVocab::is_special(l) && !TokenVocab::is_special(r));
        }
        let ids = v.encode("T:<|text|>\n");
        assert_eq!(ids.iter().filter(|&&i| i == TokenVocab::special_id(TEXT).unwrap()).count(), 1);
        assert_eq!(v.decode(&ids).unwrap(), "T:<|text|>\n");
        let ceg = v.encode("CEG");
        assert_eq!(ceg.len(), 1);
        assert_eq!(v.token_string(ceg[0]).unwrap(), "CEG");
    }

    #[test]
    fn round_trip_with_unseen_bytes() {
        let v = train(["abcabc abc"], BASE_VOCAB_SIZE + 5, false).unwrap();
        for s in ["abcabc", "zß€ abc\n\t", "<|image|><|end_of_abc|>", "<|tex", ""] {
            assert_eq!(v.decode(&v.encode(s)).unwrap(), s);
        }
        assert_eq!(v.decode(&[999_999]), Err(BpeError::UnknownTokenId(999_999)));
        assert_eq!(v.decode(&[0xC3]), Err(BpeError::InvalidUtf8));
    }

    #[test]
    fn overlapping_runs() {
        let v = train(["aaaa aaaa"], BASE_VOCAB_SIZE + 2, true).unwrap();
        let a = u32::from(b'a');
        assert_eq!(v.merges(), &[(a, a), (FIRST_MERGE_ID, FIRST_MERGE_ID)]);
        assert_eq!(v.encode("aaaaa"), vec![FIRST_MERGE_ID + 1, a]);
    }

    #[test]
    fn json_round_trip() {
        let v = train(["CEG CEG CEG ABc ABc"], BASE_VOCAB_SIZE + 6, false).unwrap();
        let json = v.to_json();
        assert!(json.contains("\"<|begin_of_abc|>\": 256"));
        assert!(json.contains("ĠC"), "{json}");
        assert_eq!(TokenVocab::from_json(&json).unwrap(), v);
        assert!(TokenVocab::from_json("{}").is_err());
    }

    #[test]
    fn byte_alphabet_is_a_bijection() {
        let chars: std::collections::HashSet<char> = (0..=255u8).map(byte_char).collect();
        assert_eq!(chars.len(), 256);
        assert_eq!(byte_char(b' '), 'Ġ');
        assert_eq!(byte_char(b'\n'), 'Ċ');
    }

    #[test]
    fn deterministic() {
        let corpus: Vec<String> = (0..30).map(|i| format!("X:{i}\nK:C\nCEG c{} |\n", "ABcd".repeat(i % 4))).collect();
        let a = train(corpus.iter().map(String::as_str), BASE_VOCAB_SIZE + 40, false).unwrap();
        let b = train(corpus.iter().map(String::as_str), BASE_VOCAB_SIZE + 40, false).unwrap();
        assert_eq!(a, b);
    }
}
