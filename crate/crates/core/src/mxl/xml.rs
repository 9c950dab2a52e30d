use std::io::Read;
use std::path::Path;

use super::{make_label, split_label, LabeledTree, MxlError};

const ROOTS: [&str; 2] = ["score-partwise", "score-timewise"];

/// Parses a MusicXML document (UTF-8 bytes, optional BOM).
pub fn parse_musicxml(bytes: &[u8]) -> Result<LabeledTree, MxlError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let text = std::str::from_utf8(bytes)
        .map_err(|e| MxlError::XmlSyntaxError(format!("input is not UTF-8: {e}")))?;
    let options = roxmltree::ParsingOptions { allow_dtd: true, ..Default::default() };
    let doc = roxmltree::Document::parse_with_options(text, options)
        .map_err(|e| MxlError::XmlSyntaxError(e.to_string()))?;
    let root = doc.root_element();
    let tag = root.tag_name().name();
    if !ROOTS.contains(&tag) {
        return Err(MxlError::NotMusicXml(format!("root element is <{tag}>")));
    }
    Ok(build(root))
}

fn build(node: roxmltree::Node<'_, '_>) -> LabeledTree {
    let attributes: Vec<(String, String)> =
        node.attributes().map(|a| (a.name().to_string(), a.value().to_string())).collect();
    let mut text = String::new();
    let mut children = Vec::new();
    for child in node.children() {
        if child.is_element() {
            children.push(build(child));
        } else if child.is_text() {
            text.push_str(child.text().unwrap_or(""));
        }
    }
    let trimmed = text.trim();
    let text = (!trimmed.is_empty()).then_some(trimmed);
    LabeledTree { label: make_label(node.tag_name().name(), &attributes, text), children }
}

/// Reads `.xml`, `.musicxml` or compressed `.mxl` files. Zip archives are
/// recognised by content, not by extension.
pub fn read_musicxml(path: &Path) -> Result<LabeledTree, MxlError> {
    let bytes = std::fs::read(path).map_err(|e| MxlError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if bytes.starts_with(b"PK\x03\x04") {
        parse_musicxml(&unzip_mxl(&bytes)?)
    } else {
        parse_musicxml(&bytes)
    }
}

/// Main document of a compressed MusicXML container: the first `rootfile`
/// listed in `META-INF/container.xml`, or else the first XML file outside
/// `META-INF`.
pub fn unzip_mxl(bytes: &[u8]) -> Result<Vec<u8>, MxlError> {
    let container = |e: zip::result::ZipError| MxlError::Container(e.to_string());
    let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes)).map_err(container)?;
    let read_entry = |archive: &mut zip::ZipArchive<std::io::Cursor<&[u8]>>, name: &str| {
        let mut file = archive.by_name(name).map_err(container)?;
        let mut out = Vec::new();
        file.read_to_end(&mut out).map_err(|e| MxlError::Container(e.to_string()))?;
        Ok::<_, MxlError>(out)
    };

    let main = match read_entry(&mut archive, "META-INF/container.xml") {
        Ok(manifest) => {
            let text = String::from_utf8_lossy(&manifest).into_owned();
            let doc = roxmltree::Document::parse(&text).map_err(|e| MxlError::Container(e.to_string()))?;
            doc.descendants()
                .find(|n| n.has_tag_name("rootfile"))
                .and_then(|n| n.attribute("full-path"))
                .map(str::to_string)
        }
        Err(_) => None,
    };
    let main = match main {
        Some(m) => m,
        None => archive
            .file_names()
            .filter(|n| !n.starts_with("META-INF/"))
            .filter(|n| n.ends_with(".xml") || n.ends_with(".musicxml"))
            .min()
            .map(str::to_string)
            .ok_or_else(|| MxlError::Container("no MusicXML document in archive".into()))?,
    };
    read_entry(&mut archive, &main)
}

fn escape_xml(out: &mut String, s: &str, attribute: bool) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

fn write_node(out: &mut String, t: &LabeledTree, depth: usize) {
    let parts = split_label(&t.label);
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push('<');
    out.push_str(&parts.tag);
    for (k, v) in &parts.attributes {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        escape_xml(out, v, true);
        out.push('"');
    }
    match (&parts.text, t.children.is_empty()) {
        (None, true) => out.push_str("/>\n"),
        (Some(text), true) => {
            out.push('>');
            escape_xml(out, text, false);
            out.push_str("</");
            out.push_str(&parts.tag);
            out.push_str(">\n");
        }
        (text, false) => {
            out.push('>');
            if let Some(text) = text {
                escape_xml(out, text, false);
            }
            out.push('\n');
            for c in &t.children {
                write_node(out, c, depth + 1);
            }
            for _ in 0..depth {
                out.push_str("  ");
            }
            out.push_str("</");
            out.push_str(&parts.tag);
            out.push_str(">\n");
        }
    }
}

/// Writes a tree as an indented UTF-8 MusicXML document.
pub fn serialize_musicxml(tree: &LabeledTree) -> String {
    let root = split_label(&tree.label).tag;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    match root.as_str() {
        "score-partwise" => out.push_str(
            "<!DOCTYPE score-partwise PUBLIC \"-//Recordare//DTD MusicXML 4.0 Partwise//EN\" \"http://www.musicxml.org/dtds/partwise.dtd\">\n",
        ),
        "score-timewise" => out.push_str(
            "<!DOCTYPE score-timewise PUBLIC \"-//Recordare//DTD MusicXML 4.0 Timewise//EN\" \"http://www.musicxml.org/dtds/timewise.dtd\">\n",
        ),
        _ => {}
    }
    write_node(&mut out, tree, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_tree() {
        let t = parse_musicxml(b"<score-partwise><part/></score-partwise>").unwrap();
        assert_eq!(t.node_count(), 2);
    }

    #[test]
    fn text_and_attributes_fold_into_labels() {
        let xml = br#"<?xml version="1.0"?>
<!DOCTYPE score-partwise PUBLIC "-//Recordare//DTD MusicXML 4.0 Partwise//EN" "http://www.musicxml.org/dtds/partwise.dtd">
<score-partwise version="4.0">
  <part id="P1">
    <measure number="1" width="200">
      <note><pitch><step>C</step><octave>4</octave></pitch></note>
    </measure>
  </part>
</score-partwise>"#;
        let t = parse_musicxml(xml).unwrap();
        assert_eq!(t.label, "score-partwise@version=4.0");
        let m = &t.children[0].children[0];
        assert_eq!(m.label, "measure@number=1@width=200");
        assert_eq!(m.children[0].children[0].children[0].label, "step=C");
        assert_eq!(t.node_count(), 7);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_musicxml(b"<a><b></a>"), Err(MxlError::XmlSyntaxError(_))));
        assert!(matches!(parse_musicxml(b"<html/>"), Err(MxlError::NotMusicXml(_))));
    }

    #[test]
    fn serialize_round_trip() {
        let xml = br#"<score-partwise><part id="P&amp;1"><measure number="1"><direction><words>a &lt; b "c"</words></direction></measure></part></score-partwise>"#;
        let t = parse_musicxml(xml).unwrap();
        let s = serialize_musicxml(&t);
        assert!(s.starts_with("<?xml"));
        assert_eq!(parse_musicxml(s.as_bytes()).unwrap(), t);
    }

    #[test]
    fn mxl_container() {
        use std::io::Write;
        let mut buf = std::io::Cursor::new(Vec::new());
        {
            let mut z = zip::ZipWriter::new(&mut buf);
            let opts: zip::write::SimpleFileOptions = Default::default();
            z.start_file("META-INF/container.xml", opts).unwrap();
            z.write_all(br#"<container><rootfiles><rootfile full-path="score.xml"/></rootfiles></container>"#).unwrap();
            z.start_file("score.xml", opts).unwrap();
            z.write_all(b"<score-partwise><part/></score-partwise>").unwrap();
            z.finish().unwrap();
        }
        let inner = unzip_mxl(buf.get_ref()).unwrap();
        assert_eq!(parse_musicxml(&inner).unwrap().node_count(), 2);
    }
}
