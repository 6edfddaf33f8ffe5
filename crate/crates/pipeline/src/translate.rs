//! Translation: raw documents become canonical records.
//!
//! TXT passes through, MARKUP has its tags stripped, BINARY keeps printable
//! runs of at least four bytes. Malformed documents are skipped and counted;
//! the bundle is still emitted.

use crate::doc::{BundleStage, CanonicalDoc, Doc, DocFormat, DocumentBundle};

/// Minimum run of printable bytes extracted from BINARY content.
pub const MIN_PRINTABLE_RUN: usize = 4;

#[derive(Debug, thiserror::Error)]
#[error("malformed document `{doc_id}`: {reason}")]
pub struct MalformedDoc {
    pub doc_id: String,
    pub reason: String,
}

/// Strip `<...>` tag spans and normalize whitespace.
pub fn strip_markup(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut in_tag = false;
    for ch in input.chars() {
        match ch {
            '<' => {
                in_tag = true;
                // Tag boundaries separate words.
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            c if !in_tag => out.push(c),
            _ => {}
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extract the `<title>` element text, if any.
fn markup_title(input: &str) -> Option<String> {
    let lower = input.to_lowercase();
    let start = lower.find("<title>")? + "<title>".len();
    let end = lower[start..].find("</title>")? + start;
    let title = input[start..end].trim();
    (!title.is_empty()).then(|| title.to_string())
}

/// Keep maximal runs of printable ASCII (space through tilde) of at least
/// `MIN_PRINTABLE_RUN` bytes, joined by single spaces.
pub fn extract_printable_runs(bytes: &[u8]) -> String {
    let mut runs: Vec<String> = Vec::new();
    let mut current = Vec::new();
    for &b in bytes.iter().chain(std::iter::once(&0u8)) {
        if (0x20..=0x7e).contains(&b) {
            current.push(b);
        } else {
            if current.len() >= MIN_PRINTABLE_RUN {
                runs.push(String::from_utf8_lossy(&current).into_owned());
            }
            current.clear();
        }
    }
    runs.join(" ").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn first_line_title(body: &str) -> String {
    body.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .chars()
        .take(80)
        .collect()
}

/// Translate one raw document into its canonical record.
pub fn translate_doc(doc: &Doc) -> Result<CanonicalDoc, MalformedDoc> {
    let source_uri = format!("corpus://{}", doc.id);
    match doc.format {
        DocFormat::Txt => {
            let text = std::str::from_utf8(&doc.bytes).map_err(|e| MalformedDoc {
                doc_id: doc.id.clone(),
                reason: format!("invalid utf-8: {e}"),
            })?;
            Ok(CanonicalDoc::new(
                doc.id.clone(),
                source_uri,
                first_line_title(text),
                text.to_string(),
            ))
        }
        DocFormat::Markup => {
            let text = std::str::from_utf8(&doc.bytes).map_err(|e| MalformedDoc {
                doc_id: doc.id.clone(),
                reason: format!("invalid utf-8: {e}"),
            })?;
            let body = strip_markup(text);
            let title = markup_title(text).unwrap_or_else(|| first_line_title(&body));
            Ok(CanonicalDoc::new(doc.id.clone(), source_uri, title, body))
        }
        DocFormat::Binary => {
            let body = extract_printable_runs(&doc.bytes);
            Ok(CanonicalDoc::new(doc.id.clone(), source_uri, doc.id.clone(), body))
        }
    }
}

/// Translate a RAW bundle. Malformed documents are dropped and returned for
/// reporting; the translated bundle keeps everyone else, ids preserved.
pub fn translate_bundle(bundle: &DocumentBundle) -> Result<(DocumentBundle, Vec<MalformedDoc>), String> {
    if bundle.stage != BundleStage::Raw {
        return Err(format!("bundle `{}` is not RAW", bundle.bundle_id));
    }
    let mut docs = Vec::with_capacity(bundle.docs.len());
    let mut skipped = Vec::new();
    for doc in &bundle.docs {
        match translate_doc(doc) {
            Ok(canonical) => docs.push(Doc {
                id: doc.id.clone(),
                format: DocFormat::Txt,
                bytes: canonical.encode(),
            }),
            Err(bad) => skipped.push(bad),
        }
    }
    Ok((
        DocumentBundle {
            bundle_id: bundle.bundle_id.clone(),
            stage: BundleStage::Translated,
            docs,
        },
        skipped,
    ))
}
