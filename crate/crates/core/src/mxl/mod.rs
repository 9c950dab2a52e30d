//! MusicXML documents as ordered labeled trees.
//!
//! Every element becomes one node. Its label is the tag, followed by the
//! attributes sorted by name as `@key=value`, followed by `=text` when the
//! element has non-whitespace text: `<note default-x="12">` gives
//! `note@default-x=12`, `<step>C</step>` gives `step=C`. Literal `\`, `@` and
//! `=` inside values are backslash-escaped, so a label always splits back
//! into the same tag, attributes and text.

mod xml;

use std::fmt;

use thiserror::Error;

pub use xml::{parse_musicxml, read_musicxml, serialize_musicxml, unzip_mxl};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MxlError {
    #[error("XML syntax error: {0}")]
    XmlSyntaxError(String),
    #[error("not a MusicXML document: {0}")]
    NotMusicXml(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad .mxl container: {0}")]
    Container(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledTree {
    pub label: String,
    pub children: Vec<LabeledTree>,
}

impl LabeledTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        LabeledTree { label: label.into(), children: Vec::new() }
    }

    pub fn node(label: impl Into<String>, children: Vec<LabeledTree>) -> Self {
        LabeledTree { label: label.into(), children }
    }

    pub fn node_count(&self) -> usize {
        let mut count = 0;
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            count += 1;
            stack.extend(t.children.iter());
        }
        count
    }

    /// Nodes in document (pre-order) order.
    pub fn preorder(&self) -> Vec<&LabeledTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            stack.extend(t.children.iter().rev());
        }
        out
    }

    /// Element tag part of the label.
    pub fn tag(&self) -> String {
        split_label(&self.label).tag
    }

    pub fn children_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a LabeledTree> + 'a {
        self.children.iter().filter(move |c| c.tag() == tag)
    }

    pub fn child_tagged(&self, tag: &str) -> Option<&LabeledTree> {
        self.children.iter().find(|c| c.tag() == tag)
    }

    /// Text part of the label, if any.
    pub fn text(&self) -> Option<String> {
        split_label(&self.label).text
    }

    pub fn attribute(&self, key: &str) -> Option<String> {
        split_label(&self.label).attributes.into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        writeln!(f, "{:indent$}{}", "", self.label, indent = depth * 2)?;
        for c in &self.children {
            c.fmt_indented(f, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indented(f, 0)
    }
}

/// A tree whose `note` subtrees have been folded into single leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlattenedTree(LabeledTree);

impl FlattenedTree {
    pub fn tree(&self) -> &LabeledTree {
        &self.0
    }

    pub fn into_tree(self) -> LabeledTree {
        self.0
    }

    pub fn node_count(&self) -> usize {
        self.0.node_count()
    }
}

/// Parts of a label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelParts {
    pub tag: String,
    pub attributes: Vec<(String, String)>,
    pub text: Option<String>,
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        if matches!(c, '\\' | '@' | '=') {
            out.push('\\');
        }
        out.push(c);
    }
}

/// Builds a label; `attributes` are sorted by key here.
pub fn make_label(tag: &str, attributes: &[(String, String)], text: Option<&str>) -> String {
    let mut attrs: Vec<&(String, String)> = attributes.iter().collect();
    attrs.sort();
    let mut out = String::from(tag);
    for (k, v) in attrs {
        out.push('@');
        escape_into(&mut out, k);
        out.push('=');
        escape_into(&mut out, v);
    }
    if let Some(t) = text {
        out.push('=');
        escape_into(&mut out, t);
    }
    out
}

/// Inverse of [`make_label`].
pub fn split_label(label: &str) -> LabelParts {
    // Split on unescaped separators, remembering which separator came first.
    let mut pieces: Vec<(char, String)> = Vec::new();
    let mut cur = String::new();
    let mut sep = '\0';
    let mut chars = label.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            '@' | '=' => {
                pieces.push((sep, std::mem::take(&mut cur)));
                sep = c;
            }
            _ => cur.push(c),
        }
    }
    pieces.push((sep, cur));

    let mut parts = LabelParts { tag: pieces[0].1.clone(), ..Default::default() };
    let mut i = 1;
    while i < pieces.len() {
        let (sep, ref piece) = pieces[i];
        match sep {
            '@' => {
                let value = match pieces.get(i + 1) {
                    Some(('=', v)) => {
                        i += 1;
                        v.clone()
                    }
                    _ => String::new(),
                };
                parts.attributes.push((piece.clone(), value));
            }
            _ => parts.text = Some(piece.clone()),
        }
        i += 1;
    }
    parts
}

/// Folds every `note` subtree into one leaf labeled with the note label and
/// all descendant labels in document order, joined by `|`.
pub fn flatten_notes(tree: &LabeledTree) -> FlattenedTree {
    fn go(t: &LabeledTree) -> LabeledTree {
        if t.tag() == "note" && !t.children.is_empty() {
            let mut label = t.label.clone();
            for d in t.preorder().into_iter().skip(1) {
                label.push('|');
                label.push_str(&d.label);
            }
            LabeledTree::leaf(label)
        } else {
            LabeledTree { label: t.label.clone(), children: t.children.iter().map(go).collect() }
        }
    }
    FlattenedTree(go(tree))
}

/// Keeps the first `max_nodes` nodes in pre-order. A pre-order prefix always
/// contains the ancestors of its nodes, so the result is a tree.
pub fn truncate(tree: &LabeledTree, max_nodes: usize) -> LabeledTree {
    fn go(t: &LabeledTree, budget: &mut usize) -> LabeledTree {
        *budget -= 1;
        let mut children = Vec::new();
        for c in &t.children {
            if *budget == 0 {
                break;
            }
            children.push(go(c, budget));
        }
        LabeledTree { label: t.label.clone(), children }
    }
    let mut budget = max_nodes.max(1);
    go(tree, &mut budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> LabeledTree {
        let mut t = LabeledTree::leaf(format!("n{}", n - 1));
        for i in (0..n - 1).rev() {
            t = LabeledTree::node(format!("n{i}"), vec![t]);
        }
        t
    }

    #[test]
    fn labels_round_trip() {
        let attrs = vec![("type".to_string(), "a=b@c".to_string()), ("number".to_string(), "1".to_string())];
        let label = make_label("beam", &attrs, Some("begin\\x"));
        assert_eq!(label, "beam@number=1@type=a\\=b\\@c=begin\\\\x");
        let p = split_label(&label);
        assert_eq!(p.tag, "beam");
        assert_eq!(p.attributes, vec![("number".into(), "1".into()), ("type".into(), "a=b@c".into())]);
        assert_eq!(p.text.as_deref(), Some("begin\\x"));
        assert_eq!(split_label("step=C").text.as_deref(), Some("C"));
        assert_eq!(split_label("chord"), LabelParts { tag: "chord".into(), ..Default::default() });
        assert_eq!(split_label("x@k=").attributes, vec![("k".into(), String::new())]);
    }

    #[test]
    fn flatten_note_fixture() {
        let note = LabeledTree::node("note", vec![
            LabeledTree::node("pitch", vec![LabeledTree::leaf("step=C"), LabeledTree::leaf("octave=4")]),
            LabeledTree::leaf("duration=2"),
        ]);
        assert_eq!(note.node_count(), 5);
        let f = flatten_notes(&note);
        assert_eq!(f.node_count(), 1);
        assert_eq!(f.tree().label, "note|pitch|step=C|octave=4|duration=2");
        assert_eq!(flatten_notes(f.tree()), f);
    }

    #[test]
    fn flatten_without_notes_is_identity() {
        let t = chain(6);
        assert_eq!(flatten_notes(&t).into_tree(), t);
    }

    #[test]
    fn truncate_chain() {
        let t = chain(10);
        assert_eq!(truncate(&t, 6000), t);
        let c = truncate(&t, 4);
        assert_eq!(c, chain(4));
    }

    #[test]
    fn truncate_branching_prefix() {
        let t = LabeledTree::node("r", vec![
            LabeledTree::node("a", vec![LabeledTree::leaf("a1"), LabeledTree::leaf("a2")]),
            LabeledTree::leaf("b"),
        ]);
        let c = truncate(&t, 3);
        let labels: Vec<&str> = c.preorder().iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, ["r", "a", "a1"]);
    }
}
