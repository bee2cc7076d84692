mod common;

use common::oracle::normalized_reference;
use currikg::error::IngestError;
use currikg::ingest::*;
use proptest::prelude::*;
use std::fs;

const MANIFEST: &str = r#"{
  "schema_version": 1,
  "module_id": "rt",
  "module_title": "Real-Time Systems",
  "lectures": [
    {"lecture_id": "rt-l1", "title": "Scheduling", "sessions": [
      {"session_id": "rt-l1-s1", "index": 1, "materials": [
        {"path": "a.txt", "kind": "transcript"},
        {"path": "b.txt", "kind": "slides_text"}]}]},
    {"lecture_id": "rt-l2", "title": "Resource access", "sessions": [
      {"session_id": "rt-l2-s1", "index": 1, "materials": [
        {"path": "c.txt", "kind": "manuscript"}]}]}
  ]
}"#;

const FILES: [(&str, &str); 3] = [
    ("a.txt", "  so today   we talk about\r\nrate monotonic\tscheduling \r\n\r\n\r\nand deadlines.  \n"),
    ("b.txt", "Rate monotonic scheduling\n\n\n- shorter period, higher priority\n- utilisation bound n(2^(1/n) - 1)\n"),
    ("c.txt", "Priority inversion occurs when  a low-priority task\nholds a lock.\r\rThe priority ceiling protocol bounds it."),
];

#[test]
fn two_lectures_with_char_counts_from_reference_normalization() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), MANIFEST).unwrap();
    for (name, text) in FILES {
        fs::write(dir.path().join(name), text).unwrap();
    }
    let manifest = load_manifest(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.lectures.len(), 2);
    assert_eq!(manifest, load_manifest(&dir.path().join("manifest.json")).unwrap());

    let bundle = ingest_materials(&manifest, dir.path()).unwrap();
    assert_eq!(bundle.entries.len(), 3);
    // Slides come before transcripts within a session.
    let paths: Vec<&str> = bundle.entries.iter().map(|e| e.path.as_str()).collect();
    assert_eq!(paths, ["b.txt", "a.txt", "c.txt"]);
    let mut total = 0;
    for entry in &bundle.entries {
        let raw = FILES.iter().find(|(n, _)| *n == entry.path).unwrap().1;
        let expected = normalized_reference(raw);
        assert_eq!(entry.text, expected);
        assert_eq!(entry.char_count, expected.chars().count());
        assert!(!entry.empty);
        total += entry.char_count;
    }
    assert_eq!(
        total,
        FILES
            .iter()
            .map(|(_, t)| normalized_reference(t).chars().count())
            .sum::<usize>()
    );
}

#[test]
fn bundled_fixture_counts_match_file_lengths() {
    let root = common::fixtures().join("two_module/es");
    let manifest = load_manifest(&root.join("manifest.json")).unwrap();
    let bundle = ingest_materials(&manifest, &root).unwrap();
    for entry in &bundle.entries {
        // The fixture files are already normalized apart from the final newline.
        let raw = fs::read_to_string(root.join(&entry.path)).unwrap();
        assert_eq!(entry.char_count, raw.trim_end().chars().count(), "{}", entry.path);
    }
}

#[test]
fn missing_and_blank_materials() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), " \n\t\r\n  ").unwrap();
    fs::write(dir.path().join("b.txt"), "text").unwrap();
    let manifest = SessionManifest::parse(MANIFEST.as_bytes()).unwrap();
    match ingest_materials(&manifest, dir.path()) {
        Err(IngestError::MaterialNotFound(p)) => assert!(p.ends_with("c.txt")),
        other => panic!("expected MaterialNotFound, got {other:?}"),
    }
    fs::write(dir.path().join("c.txt"), "more").unwrap();
    let bundle = ingest_materials(&manifest, dir.path()).unwrap();
    let flagged: Vec<&str> = bundle.flagged().map(|e| e.path.as_str()).collect();
    assert_eq!(flagged, ["a.txt"]);
}

fn reconstruct(chunks: &[String], overlap: usize) -> String {
    let mut out = String::new();
    for (i, c) in chunks.iter().enumerate() {
        let skip = if i == 0 { 0 } else { overlap };
        out.extend(c.chars().skip(skip));
    }
    out
}

fn prose(len: usize) -> String {
    let sentences = [
        "The scheduler picks the ready task with the highest priority. ",
        "Deadlines are met when utilisation stays below the bound. ",
        "Interrupt latency adds jitter to every release.\n\n",
        "Timers drive periodic releases. ",
    ];
    sentences.iter().cycle().flat_map(|s| s.chars()).take(len).collect()
}

#[test]
fn ten_thousand_chars_make_three_chunks() {
    let text = prose(10_000);
    let chunks = chunk_text(&text, 4_000, 200).unwrap();
    assert_eq!(chunks.len(), 3);
    assert!(chunks.iter().all(|c| c.chars().count() <= 4_000));
    assert_eq!(reconstruct(&chunks, 200), text);
}

proptest! {
    #[test]
    fn chunks_reconstruct_for_any_parameters(
        text in "[a-z .\n]{0,3000}",
        max in 2usize..600,
        overlap_frac in 0.0f64..0.9,
    ) {
        let overlap = ((max as f64) * overlap_frac) as usize;
        let chunks = chunk_text(&text, max, overlap).unwrap();
        prop_assert!(chunks.iter().all(|c| c.chars().count() <= max));
        prop_assert_eq!(reconstruct(&chunks, overlap), text);
    }

    #[test]
    fn normalization_matches_reference(raw in "[a-c \t\r\n]{0,200}") {
        let n = normalize_text(&raw);
        prop_assert_eq!(&n, &normalized_reference(&raw));
        prop_assert_eq!(normalize_text(&n), n);
    }
}
