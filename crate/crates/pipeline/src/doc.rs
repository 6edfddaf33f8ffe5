//! Documents, bundles and their byte-level encodings.
//!
//! A bundle moves through the pipeline as one queue item: raw documents out
//! of gathering, canonical records out of translation. The binary layout is
//! length-prefixed big-endian throughout, matching the envelope framing used
//! on the wire.

use std::fmt;

/// Payload type identifier for bundle-carrying interfaces.
pub const BUNDLE_PAYLOAD: &str = "DocumentBundle";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    Txt,
    Markup,
    Binary,
}

impl DocFormat {
    pub fn from_extension(ext: &str) -> DocFormat {
        match ext {
            "txt" => DocFormat::Txt,
            "htm" | "html" => DocFormat::Markup,
            _ => DocFormat::Binary,
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            DocFormat::Txt => 0,
            DocFormat::Markup => 1,
            DocFormat::Binary => 2,
        }
    }

    fn from_byte(b: u8) -> Result<DocFormat, String> {
        match b {
            0 => Ok(DocFormat::Txt),
            1 => Ok(DocFormat::Markup),
            2 => Ok(DocFormat::Binary),
            _ => Err(format!("unknown doc format {b}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Doc {
    pub id: String,
    pub format: DocFormat,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleStage {
    Raw,
    Translated,
}

impl fmt::Display for BundleStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BundleStage::Raw => f.write_str("RAW"),
            BundleStage::Translated => f.write_str("TRANSLATED"),
        }
    }
}

/// A batch of documents with a stable id, flowing gather -> translate ->
/// index. TRANSLATED bundles contain only canonical records.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentBundle {
    pub bundle_id: String,
    pub stage: BundleStage,
    pub docs: Vec<Doc>,
}

impl DocumentBundle {
    pub fn raw(bundle_id: impl Into<String>, docs: Vec<Doc>) -> Self {
        Self { bundle_id: bundle_id.into(), stage: BundleStage::Raw, docs }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.docs.iter().map(|d| d.bytes.len()).sum::<usize>());
        out.push(match self.stage {
            BundleStage::Raw => 0,
            BundleStage::Translated => 1,
        });
        put_bytes(&mut out, self.bundle_id.as_bytes());
        out.extend_from_slice(&(self.docs.len() as u32).to_be_bytes());
        for doc in &self.docs {
            put_bytes(&mut out, doc.id.as_bytes());
            out.push(doc.format.to_byte());
            put_bytes(&mut out, &doc.bytes);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let mut pos = 0usize;
        let stage = match take_u8(bytes, &mut pos)? {
            0 => BundleStage::Raw,
            1 => BundleStage::Translated,
            b => return Err(format!("unknown bundle stage {b}")),
        };
        let bundle_id = take_string(bytes, &mut pos)?;
        let count = take_u32(bytes, &mut pos)? as usize;
        if count > 1 << 20 {
            return Err("implausible doc count".to_string());
        }
        let mut docs = Vec::with_capacity(count);
        for _ in 0..count {
            let id = take_string(bytes, &mut pos)?;
            let format = DocFormat::from_byte(take_u8(bytes, &mut pos)?)?;
            let content = take_slice(bytes, &mut pos)?.to_vec();
            docs.push(Doc { id, format, bytes: content });
        }
        if pos != bytes.len() {
            return Err("trailing bytes after bundle".to_string());
        }
        Ok(Self { bundle_id, stage, docs })
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
}

fn take_u8(bytes: &[u8], pos: &mut usize) -> Result<u8, String> {
    let b = *bytes.get(*pos).ok_or("truncated bundle")?;
    *pos += 1;
    Ok(b)
}

fn take_u32(bytes: &[u8], pos: &mut usize) -> Result<u32, String> {
    let s = bytes.get(*pos..*pos + 4).ok_or("truncated bundle")?;
    *pos += 4;
    Ok(u32::from_be_bytes(s.try_into().unwrap()))
}

fn take_slice<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], String> {
    let len = take_u32(bytes, pos)? as usize;
    let s = bytes.get(*pos..*pos + len).ok_or("truncated bundle")?;
    *pos += len;
    Ok(s)
}

fn take_string(bytes: &[u8], pos: &mut usize) -> Result<String, String> {
    String::from_utf8(take_slice(bytes, pos)?.to_vec()).map_err(|e| e.to_string())
}

/// A translated document: the common record format every later stage
/// understands.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDoc {
    pub doc_id: String,
    pub source_uri: String,
    pub title: String,
    pub body: String,
    /// Number of whitespace-separated tokens in `body`.
    pub token_count: usize,
}

impl CanonicalDoc {
    pub fn new(doc_id: String, source_uri: String, title: String, body: String) -> Self {
        let token_count = body.split_whitespace().count();
        Self { doc_id, source_uri, title, body, token_count }
    }

    /// Tagged text record: `#DOC`, `#SRC`, `#TITLE` headers, then the body
    /// after a `#BODY` line.
    pub fn encode(&self) -> Vec<u8> {
        format!(
            "#DOC {}\n#SRC {}\n#TITLE {}\n#BODY\n{}",
            self.doc_id, self.source_uri, self.title, self.body
        )
        .into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> Result<CanonicalDoc, String> {
        let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
        let body_start = text.find("#BODY\n").ok_or("missing #BODY section")?;
        let (head, tail) = text.split_at(body_start);
        let body = tail["#BODY\n".len()..].to_string();
        let mut doc_id = None;
        let mut source_uri = None;
        let mut title = None;
        for line in head.lines() {
            if let Some(rest) = line.strip_prefix("#DOC ") {
                doc_id = Some(rest.to_string());
            } else if let Some(rest) = line.strip_prefix("#SRC ") {
                source_uri = Some(rest.to_string());
            } else if let Some(rest) = line.strip_prefix("#TITLE ") {
                title = Some(rest.to_string());
            }
        }
        Ok(CanonicalDoc::new(
            doc_id.ok_or("missing #DOC header")?,
            source_uri.unwrap_or_default(),
            title.unwrap_or_default(),
            body,
        ))
    }
}
