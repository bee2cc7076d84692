//! Session manifests, material loading and text chunking.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::IngestError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_CHARS: usize = 8_000;
pub const DEFAULT_OVERLAP_CHARS: usize = 400;

/// Kind of lecture material. Declaration order is the order materials of one
/// session are presented to the extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    SlidesText,
    Manuscript,
    Transcript,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Material {
    pub path: String,
    pub kind: MaterialKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session_id: String,
    pub index: u32,
    #[serde(default)]
    pub title: Option<String>,
    pub materials: Vec<Material>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LectureEntry {
    pub lecture_id: String,
    pub title: String,
    pub sessions: Vec<SessionEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub schema_version: u32,
    pub module_id: String,
    pub module_title: String,
    pub lectures: Vec<LectureEntry>,
}

impl SessionManifest {
    pub fn parse(bytes: &[u8]) -> Result<Self, IngestError> {
        let manifest: SessionManifest = serde_json::from_slice(bytes).map_err(|e| IngestError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        manifest.check()?;
        Ok(manifest)
    }

    fn check(&self) -> Result<(), IngestError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(IngestError::UnsupportedSchemaVersion(self.schema_version));
        }
        let mut ids = HashSet::new();
        ids.insert(self.module_id.as_str());
        for lecture in &self.lectures {
            if !ids.insert(&lecture.lecture_id) {
                return Err(IngestError::DuplicateId(lecture.lecture_id.clone()));
            }
            for session in &lecture.sessions {
                if !ids.insert(&session.session_id) {
                    return Err(IngestError::DuplicateId(session.session_id.clone()));
                }
                let mut paths = HashSet::new();
                for m in &session.materials {
                    if !paths.insert(&m.path) {
                        return Err(IngestError::DuplicateMaterialPath {
                            session: session.session_id.clone(),
                            path: m.path.clone(),
                        });
                    }
                }
            }
            let mut indexes: Vec<u32> = lecture.sessions.iter().map(|s| s.index).collect();
            indexes.sort_unstable();
            if indexes.iter().enumerate().any(|(i, &ix)| ix as usize != i + 1) {
                return Err(IngestError::NonContiguousSessionIndex {
                    lecture: lecture.lecture_id.clone(),
                    found: indexes,
                });
            }
        }
        Ok(())
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&LectureEntry, &SessionEntry)> {
        self.lectures
            .iter()
            .flat_map(|l| l.sessions.iter().map(move |s| (l, s)))
    }
}

pub fn load_manifest(path: &Path) -> Result<SessionManifest, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SessionManifest::parse(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub session_id: String,
    pub kind: MaterialKind,
    pub path: String,
    pub text: String,
    pub char_count: usize,
    /// Set when the material normalizes to empty text.
    #[serde(default)]
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusBundle {
    pub module_id: String,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusBundle {
    /// Non-empty entries for one session, in presentation order.
    pub fn session_entries<'a>(&'a self, session_id: &'a str) -> impl Iterator<Item = &'a CorpusEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.session_id == session_id && !e.empty)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(|e| e.empty)
    }
}

/// Loads every material of the manifest relative to `root`.
pub fn ingest_materials(manifest: &SessionManifest, root: &Path) -> Result<CorpusBundle, IngestError> {
    let mut entries = Vec::new();
    for (_, session) in manifest.sessions() {
        let mut materials: Vec<&Material> = session.materials.iter().collect();
        materials.sort_by_key(|m| m.kind);
        for material in materials {
            let path: PathBuf = root.join(&material.path);
            let raw = match fs::read_to_string(&path) {
                Ok(raw) => raw,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(IngestError::MaterialNotFound(path));
                }
                Err(source) => return Err(IngestError::Io { path, source }),
            };
            let text = normalize_text(&raw);
            let char_count = text.chars().count();
            if char_count == 0 {
                tracing::warn!(path = %material.path, "material is empty after normalization");
            }
            entries.push(CorpusEntry {
                session_id: session.session_id.clone(),
                kind: material.kind,
                path: material.path.clone(),
                empty: char_count == 0,
                text,
                char_count,
            });
        }
    }
    Ok(CorpusBundle {
        module_id: manifest.module_id.clone(),
        entries,
    })
}

/// Normalizes line endings to `\n`, collapses runs of blanks within a line,
/// trims line ends, caps blank-line runs at one and trims the whole text.
pub fn normalize_text(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    let mut blank_run = 0usize;
    for line in unified.split('\n') {
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() {
            blank_run += 1;
            continue;
        }
        if !out.is_empty() {
            out.push_str(if blank_run > 0 { "\n\n" } else { "\n" });
        }
        out.push_str(&collapsed);
        blank_run = 0;
    }
    out
}

/// Splits `text` into chunks of at most `max_chars` characters where each
/// chunk after the first repeats the last `overlap_chars` characters of its
/// predecessor. Cuts prefer paragraph breaks, then sentence ends, within the
/// back half of the window.
pub fn chunk_text(text: &str, max_chars: usize, overlap_chars: usize) -> Result<Vec<String>, IngestError> {
    if max_chars == 0 || overlap_chars >= max_chars {
        return Err(IngestError::InvalidChunkParams {
            max_chars,
            overlap_chars,
        });
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    if n <= max_chars {
        return Ok(vec![text.to_string()]);
    }
    // Byte offset of every char index, plus the end.
    let offsets: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();

    let mut chunks = Vec::new();
    let mut start = 0usize;
    loop {
        if n - start <= max_chars {
            chunks.push(text[offsets[start]..].to_string());
            break;
        }
        let hard_end = start + max_chars;
        let lo = (start + overlap_chars + 1).max(start + max_chars / 2);
        let end = find_boundary(&chars, lo, hard_end, is_paragraph_break)
            .or_else(|| find_boundary(&chars, lo, hard_end, is_sentence_end))
            .unwrap_or(hard_end);
        chunks.push(text[offsets[start]..offsets[end]].to_string());
        start = end - overlap_chars;
    }
    Ok(chunks)
}

/// Latest cut position in `lo..=hi` accepted by `is_cut`.
fn find_boundary(chars: &[char], lo: usize, hi: usize, is_cut: fn(&[char], usize) -> bool) -> Option<usize> {
    (lo..=hi).rev().find(|&i| is_cut(chars, i))
}

fn is_paragraph_break(chars: &[char], i: usize) -> bool {
    i >= 2 && chars[i - 1] == '\n' && chars[i - 2] == '\n'
}

fn is_sentence_end(chars: &[char], i: usize) -> bool {
    i >= 2 && chars[i - 1].is_whitespace() && matches!(chars[i - 2], '.' | '!' | '?')
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest_json(sessions: &str) -> String {
        format!(
            r#"{{"schema_version": 1, "module_id": "es", "module_title": "Embedded Systems",
                "lectures": [{{"lecture_id": "es-l1", "title": "Lecture", "sessions": {sessions}}}]}}"#
        )
    }

    #[test]
    fn duplicate_session_id_rejected() {
        let json = manifest_json(
            r#"[{"session_id": "s", "index": 1, "materials": []},
                {"session_id": "s", "index": 2, "materials": []}]"#,
        );
        assert!(matches!(
            SessionManifest::parse(json.as_bytes()),
            Err(IngestError::DuplicateId(id)) if id == "s"
        ));
    }

    #[test]
    fn gap_in_session_indexes_rejected() {
        let json = manifest_json(
            r#"[{"session_id": "a", "index": 1, "materials": []},
                {"session_id": "b", "index": 3, "materials": []}]"#,
        );
        assert!(matches!(
            SessionManifest::parse(json.as_bytes()),
            Err(IngestError::NonContiguousSessionIndex { .. })
        ));
    }

    #[test]
    fn repeated_material_path_rejected() {
        let json = manifest_json(
            r#"[{"session_id": "a", "index": 1, "materials": [
                {"path": "x.txt", "kind": "slides_text"}, {"path": "x.txt", "kind": "transcript"}]}]"#,
        );
        assert!(matches!(
            SessionManifest::parse(json.as_bytes()),
            Err(IngestError::DuplicateMaterialPath { .. })
        ));
    }

    #[test]
    fn missing_schema_version_is_a_parse_error() {
        let err = SessionManifest::parse(br#"{"module_id": "x"}"#).unwrap_err();
        assert!(matches!(err, IngestError::Parse { .. }));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("a  b\t\tc\r\nd\r\re"), "a b c\nd\n\ne");
        assert_eq!(normalize_text("\n\n  x  \n\n\n\n y \n"), "x\n\ny");
        assert_eq!(normalize_text(" \t\n \r\n"), "");
    }

    #[test]
    fn short_text_is_one_chunk() {
        assert_eq!(chunk_text("hello", 10, 2).unwrap(), vec!["hello".to_string()]);
    }

    #[test]
    fn invalid_chunk_params() {
        assert!(chunk_text("x", 10, 10).is_err());
        assert!(chunk_text("x", 0, 0).is_err());
    }

    #[test]
    fn chunks_prefer_paragraphs_then_sentences() {
        let para = format!("{}\n\n{}", "a".repeat(70), "b".repeat(70));
        let chunks = chunk_text(&para, 100, 10).unwrap();
        assert!(chunks[0].ends_with("\n\n"));

        let sent = format!("{}. {}", "a".repeat(70), "b".repeat(70));
        let chunks = chunk_text(&sent, 100, 10).unwrap();
        assert!(chunks[0].ends_with(". "));
    }

    fn reconstruct(chunks: &[String], overlap: usize) -> String {
        let mut out = chunks[0].clone();
        for c in &chunks[1..] {
            out.extend(c.chars().skip(overlap));
        }
        out
    }

    proptest! {
        #[test]
        fn chunking_reconstructs_input(
            text in "[a-zé .\n]{0,600}",
            max in 5usize..120,
            overlap_frac in 0.0f64..0.9,
        ) {
            let overlap = ((max as f64) * overlap_frac) as usize;
            let chunks = chunk_text(&text, max, overlap).unwrap();
            prop_assert!(chunks.iter().all(|c| c.chars().count() <= max));
            prop_assert_eq!(reconstruct(&chunks, overlap), text);
        }

        #[test]
        fn normalization_is_idempotent(text in "[a-z \t\r\n]{0,200}") {
            let once = normalize_text(&text);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }
    }
}
