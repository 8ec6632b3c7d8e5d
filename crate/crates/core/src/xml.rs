//! Thin pull-parser over quick-xml that enforces document well-formedness
//! and delivers owned, entity-resolved names, attributes and text.

use std::fmt::Write as _;

use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::Event as QEvent;
use quick_xml::{Reader, XmlVersion};
use thiserror::Error;

/// A document is not well-formed XML.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed XML at byte {position}: {message}")]
pub struct XmlError {
    pub position: u64,
    pub message: String,
}

#[derive(Debug)]
pub(crate) enum Event {
    Open {
        name: String,
        attrs: Vec<(String, String)>,
        position: u64,
    },
    /// Closes the innermost open element; `text` is its direct character
    /// content concatenated across child elements.
    Close { name: String, text: String },
}

pub(crate) struct EventReader<'a> {
    reader: Reader<&'a [u8]>,
    open: Vec<(String, String)>,
    seen_root: bool,
    done: bool,
}

impl<'a> EventReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Result<Self, XmlError> {
        std::str::from_utf8(bytes).map_err(|e| XmlError {
            position: e.valid_up_to() as u64,
            message: "document is not valid UTF-8".into(),
        })?;
        let mut reader = Reader::from_reader(bytes);
        let config = reader.config_mut();
        config.expand_empty_elements = true;
        config.check_end_names = true;
        Ok(Self {
            reader,
            open: Vec::new(),
            seen_root: false,
            done: false,
        })
    }

    fn error(&self, message: impl Into<String>) -> XmlError {
        XmlError {
            position: self.reader.buffer_position(),
            message: message.into(),
        }
    }

    fn push_text(&mut self, text: &str) -> Result<(), XmlError> {
        match self.open.last_mut() {
            Some((_, buf)) => {
                buf.push_str(text);
                Ok(())
            }
            None if text.trim().is_empty() => Ok(()),
            None => Err(self.error("character data outside the root element")),
        }
    }

    pub(crate) fn next_event(&mut self) -> Result<Option<Event>, XmlError> {
        if self.done {
            return Ok(None);
        }
        loop {
            let position = self.reader.buffer_position();
            let event = self.reader.read_event().map_err(|e| XmlError {
                position: self.reader.error_position(),
                message: e.to_string(),
            })?;
            match event {
                QEvent::Start(start) => {
                    if self.open.is_empty() && self.seen_root {
                        return Err(self.error("more than one root element"));
                    }
                    let name = utf8(start.name().as_ref());
                    let mut attrs = Vec::new();
                    for attr in start.attributes() {
                        let attr = attr.map_err(|e| self.error(e.to_string()))?;
                        let value = attr
                            .normalized_value(XmlVersion::Implicit1_0)
                            .map_err(|e| self.error(e.to_string()))?;
                        attrs.push((utf8(attr.key.as_ref()), value.into_owned()));
                    }
                    self.open.push((name.clone(), String::new()));
                    return Ok(Some(Event::Open {
                        name,
                        attrs,
                        position,
                    }));
                }
                QEvent::End(_) => {
                    let (name, text) = self
                        .open
                        .pop()
                        .ok_or_else(|| self.error("unexpected closing tag"))?;
                    if self.open.is_empty() {
                        self.seen_root = true;
                    }
                    return Ok(Some(Event::Close { name, text }));
                }
                QEvent::Text(text) => {
                    let content = text.xml10_content().into_owned();
                    self.push_text(&content)?;
                }
                QEvent::CData(cdata) => {
                    let content = cdata.into_inner().into_owned();
                    self.push_text(&content)?;
                }
                QEvent::GeneralRef(reference) => {
                    let resolved = match reference.resolve_char_ref() {
                        Ok(Some(ch)) => ch.to_string(),
                        Ok(None) => {
                            let name = reference.xml10_content();
                            resolve_predefined_entity(&name)
                                .ok_or_else(|| self.error(format!("unknown entity &{name};")))?
                                .to_owned()
                        }
                        Err(e) => return Err(self.error(e.to_string())),
                    };
                    if self.open.is_empty() {
                        return Err(self.error("entity reference outside the root element"));
                    }
                    self.push_text(&resolved)?;
                }
                QEvent::Empty(_) => unreachable!("empty elements are expanded"),
                QEvent::Comment(_) | QEvent::Decl(_) | QEvent::PI(_) | QEvent::DocType(_) => {}
                QEvent::Eof => {
                    if !self.open.is_empty() {
                        return Err(self.error("unexpected end of document"));
                    }
                    if !self.seen_root {
                        return Err(self.error("document has no root element"));
                    }
                    self.done = true;
                    return Ok(None);
                }
            }
        }
    }
}

fn utf8(bytes: impl AsRef<[u8]>) -> String {
    // Input was validated as UTF-8 up front; slices of it stay valid.
    String::from_utf8_lossy(bytes.as_ref()).into_owned()
}

/// Appends `name="value"` with attribute-safe escaping.
pub(crate) fn write_attr(out: &mut String, name: &str, value: &str) {
    let escaped = escape(value);
    let _ = write!(out, " {name}=\"");
    if escaped.contains(['\t', '\n', '\r']) {
        // attribute-value normalization would turn raw whitespace into spaces
        for ch in escaped.chars() {
            match ch {
                '\t' => out.push_str("&#9;"),
                '\n' => out.push_str("&#10;"),
                '\r' => out.push_str("&#13;"),
                c => out.push(c),
            }
        }
    } else {
        out.push_str(&escaped);
    }
    out.push('"');
}

pub(crate) const XML_DECL: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(src: &str) -> Result<Vec<Event>, XmlError> {
        let mut r = EventReader::new(src.as_bytes())?;
        let mut out = Vec::new();
        while let Some(ev) = r.next_event()? {
            out.push(ev);
        }
        Ok(out)
    }

    #[test]
    fn resolves_entities_in_text_and_attributes() {
        let events = drain(r#"<a x="1 &amp; 2">x &lt; y&#33;</a>"#).unwrap();
        match &events[0] {
            Event::Open { attrs, .. } => assert_eq!(attrs[0].1, "1 & 2"),
            other => panic!("{other:?}"),
        }
        match &events[1] {
            Event::Close { text, .. } => assert_eq!(text, "x < y!"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_ill_formed_documents() {
        for bad in [
            "",
            "   ",
            "<a>",
            "<a></b>",
            "<a/><b/>",
            "text<a/>",
            "<a x='1' x='2'/>",
            "<a>&nope;</a>",
        ] {
            assert!(drain(bad).is_err(), "accepted {bad:?}");
        }
        assert!(EventReader::new(&[0x3c, 0xff, 0x3e]).is_err());
    }

    #[test]
    fn escapes_attribute_values() {
        let mut s = String::new();
        write_attr(&mut s, "v", "a\"<&>'");
        assert_eq!(s, r#" v="a&quot;&lt;&amp;&gt;&apos;""#);
    }

    #[test]
    fn control_whitespace_survives_attribute_normalization() {
        let mut doc = String::from("<a");
        write_attr(&mut doc, "v", "x\ty\nz\r");
        doc.push_str("/>");
        let mut r = EventReader::new(doc.as_bytes()).unwrap();
        match r.next_event().unwrap() {
            Some(Event::Open { attrs, .. }) => assert_eq!(attrs[0].1, "x\ty\nz\r"),
            other => panic!("{other:?}"),
        }
    }
}
