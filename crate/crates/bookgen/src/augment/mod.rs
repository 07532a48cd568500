//! Training-pair construction.
//!
//! Indexing pairs map five content forms to their identifier level:
//! keywords, summary and whole text to the book-id; each chapter body to
//! its chapter-id; each section body to its section-id. Keywords and the
//! summary are extracted from the leading chapter, and the whole text
//! covers the first `whole_text_chapter_cap` chapters.
//!
//! Retrieval pairs map pseudo-queries (single-chapter answerable and
//! multiple-chapter answerable, `X` of each) to the book-id.

mod generator;
mod textrank;

pub use generator::{
    parse_numbered_list, render_prompt, ExtractiveGenerator, LlmSettings, QueryCategory,
    QueryGenerator, QueryRequest, RemoteLlmGenerator, MULTI_CHAPTER_PROMPT,
    SINGLE_CHAPTER_PROMPT,
};
pub use textrank::{
    keyword_scores, split_sentences, textrank_keywords, textrank_summary, word_tokens,
};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Book;
use crate::error::{Error, Result};
use crate::identifiers::{IdLevel, IdentifierSet};

pub const KEYWORD_COUNT: usize = 10;
pub const KEYWORD_WINDOW: usize = 4;
pub const SUMMARY_SENTENCES: usize = 3;
/// Chapters fed into a multi-chapter prompt: first, middle and last,
/// capped at this many.
pub const MULTI_PROMPT_CHAPTERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Keywords,
    Summary,
    SectionText,
    ChapterText,
    WholeText,
    QuerySingleChapter,
    QueryMultiChapter,
}

impl InputKind {
    /// The identifier level each kind targets. Total by construction.
    pub fn id_level(self) -> IdLevel {
        match self {
            InputKind::Keywords
            | InputKind::Summary
            | InputKind::WholeText
            | InputKind::QuerySingleChapter
            | InputKind::QueryMultiChapter => IdLevel::Book,
            InputKind::SectionText => IdLevel::Section,
            InputKind::ChapterText => IdLevel::Chapter,
        }
    }

    pub fn is_query(self) -> bool {
        matches!(
            self,
            InputKind::QuerySingleChapter | InputKind::QueryMultiChapter
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub book_key: String,
    pub kind: InputKind,
    pub input_text: String,
    pub target_id: String,
}

fn check_level(pair: &TrainingPair) -> Result<()> {
    let fields = pair.target_id.split('#').count();
    if fields != pair.kind.id_level().field_count() {
        return Err(Error::IdentifierFormat {
            id: pair.target_id.clone(),
            msg: format!(
                "kind {:?} requires a {}-field identifier, found {fields}",
                pair.kind,
                pair.kind.id_level().field_count()
            ),
        });
    }
    Ok(())
}

/// The five-content-form indexing pairs for one book: 3 book-level pairs
/// plus one per chapter and one per section.
pub fn build_indexing_pairs(
    book: &Book,
    ids: &IdentifierSet,
    whole_text_chapter_cap: usize,
) -> Result<Vec<TrainingPair>> {
    if ids.chapter_ids.len() != book.chapters.len() {
        return Err(Error::BadArgument(format!(
            "identifier set of {} does not match the book ({} chapter ids, {} chapters)",
            book.book_key,
            ids.chapter_ids.len(),
            book.chapters.len()
        )));
    }
    let total_sections: usize = book.chapters.iter().map(|c| c.sections.len()).sum();
    if ids.section_ids.len() != total_sections {
        return Err(Error::BadArgument(format!(
            "identifier set of {} does not match the book ({} section ids, {} sections)",
            book.book_key,
            ids.section_ids.len(),
            total_sections
        )));
    }

    let leading = book.chapters[0].full_text();
    let mut pairs = Vec::with_capacity(3 + book.chapters.len() + total_sections);
    let mut push = |kind, input_text: String, target_id: &str| {
        pairs.push(TrainingPair {
            book_key: book.book_key.clone(),
            kind,
            input_text,
            target_id: target_id.to_string(),
        });
    };

    push(
        InputKind::Keywords,
        textrank_keywords(&leading, KEYWORD_COUNT, KEYWORD_WINDOW).join(" "),
        &ids.book_id,
    );
    push(
        InputKind::Summary,
        textrank_summary(&leading, SUMMARY_SENTENCES),
        &ids.book_id,
    );
    push(
        InputKind::WholeText,
        book.whole_text(whole_text_chapter_cap),
        &ids.book_id,
    );
    for (ch, cid) in book.chapters.iter().zip(&ids.chapter_ids) {
        push(InputKind::ChapterText, ch.full_text(), cid);
    }
    for ((_, _, section), sid) in book.all_sections().zip(&ids.section_ids) {
        push(InputKind::SectionText, section.text.clone(), sid);
    }

    for pair in &pairs {
        check_level(pair)?;
    }
    Ok(pairs)
}

/// The single indexing pair used when identifier augmentation is
/// disabled: whole text to book-id.
pub fn build_plain_indexing_pair(
    book: &Book,
    ids: &IdentifierSet,
    whole_text_chapter_cap: usize,
) -> TrainingPair {
    TrainingPair {
        book_key: book.book_key.clone(),
        kind: InputKind::WholeText,
        input_text: book.whole_text(whole_text_chapter_cap),
        target_id: ids.book_id.clone(),
    }
}

/// Prompt content for a category: the leading chapter (single) or the
/// first, middle and last chapters joined by the `#` token (multi).
/// Returns `(content, degraded)` where `degraded` flags a multi request
/// that fell back to single-chapter content.
fn prepare_content(book: &Book, category: QueryCategory) -> (String, bool) {
    match category {
        QueryCategory::Single => (book.chapters[0].full_text(), false),
        QueryCategory::Multi => {
            let n = book.chapters.len();
            if n < 2 {
                return (book.chapters[0].full_text(), true);
            }
            let mut picks = vec![0, n / 2, n - 1];
            picks.dedup();
            picks.truncate(MULTI_PROMPT_CHAPTERS);
            let texts: Vec<String> = picks
                .iter()
                .map(|&i| book.chapters[i].full_text())
                .collect();
            (texts.join(" # "), false)
        }
    }
}

/// Generate `x` pseudo-queries of the given category via `generator`.
/// Books with a single chapter degrade multi to single-chapter content
/// with a warning rather than failing.
pub fn generate_queries(
    book: &Book,
    category: QueryCategory,
    x: usize,
    generator: &dyn QueryGenerator,
) -> Result<Vec<String>> {
    if x < 1 {
        return Err(Error::BadArgument("x must be at least 1".into()));
    }
    let (content, degraded) = prepare_content(book, category);
    if degraded {
        log::warn!(
            "book {} has a single chapter; multi-chapter queries fall back to single-chapter content",
            book.book_key
        );
    }
    let req = QueryRequest {
        book_key: book.book_key.clone(),
        category,
        x,
        content,
    };
    let queries = generator.generate(&req)?;
    if queries.len() != x || queries.iter().any(|q| q.trim().is_empty()) {
        return Err(Error::QueryGeneration {
            book_key: book.book_key.clone(),
            category: category.to_string(),
            msg: format!("generator returned {} queries, wanted {x}", queries.len()),
        });
    }
    Ok(queries)
}

/// `x` single-chapter plus `x` multi-chapter query pairs, all targeting
/// the book-id.
pub fn build_retrieval_pairs(
    book: &Book,
    ids: &IdentifierSet,
    x: usize,
    generator: &dyn QueryGenerator,
) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::with_capacity(2 * x);
    for (category, kind) in [
        (QueryCategory::Single, InputKind::QuerySingleChapter),
        (QueryCategory::Multi, InputKind::QueryMultiChapter),
    ] {
        for query in generate_queries(book, category, x, generator)? {
            pairs.push(TrainingPair {
                book_key: book.book_key.clone(),
                kind,
                input_text: query,
                target_id: ids.book_id.clone(),
            });
        }
    }
    for pair in &pairs {
        check_level(pair)?;
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

pub fn save_pairs(pairs: &[TrainingPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for pair in pairs {
        let line =
            serde_json::to_string(pair).map_err(|e| Error::MalformedRecord(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TrainingPair = serde_json::from_str(&line)
            .map_err(|e| Error::at_line(i + 1, Error::MalformedRecord(e.to_string())))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, Book, Chapter, Metadata, Section};
    use crate::identifiers::{build_identifier_set, Embedder, IdParams};

    fn make_book(chapters: Vec<Chapter>) -> Book {
        Book {
            book_key: "bk0".into(),
            metadata: Metadata {
                title: "The Quiet Harbor".into(),
                author: "Alma Calvino".into(),
                publisher: "Meridian Press".into(),
            },
            chapters,
        }
    }

    fn section(title: &str, text: &str) -> Section {
        Section {
            title: title.into(),
            text: text.into(),
        }
    }

    fn ids_for(book: &Book) -> IdentifierSet {
        build_identifier_set(book, &Embedder::new(32), &IdParams::default()).unwrap()
    }

    #[test]
    fn two_by_two_book_yields_nine_pairs() {
        let book = make_book(vec![
            Chapter {
                title: "One".into(),
                sections: vec![
                    section("A", "The harbor froze early. Ships waited."),
                    section("B", "Trade slowed until spring thaw came."),
                ],
            },
            Chapter {
                title: "Two".into(),
                sections: vec![
                    section("C", "The orchard bloomed in spring."),
                    section("D", "Harvest filled every cellar in town."),
                ],
            },
        ]);
        let ids = ids_for(&book);
        let pairs = build_indexing_pairs(&book, &ids, 100).unwrap();
        assert_eq!(pairs.len(), 9);
        let book_level = pairs
            .iter()
            .filter(|p| p.kind.id_level() == IdLevel::Book)
            .count();
        let chapter_level = pairs
            .iter()
            .filter(|p| p.kind == InputKind::ChapterText)
            .count();
        let section_level = pairs
            .iter()
            .filter(|p| p.kind == InputKind::SectionText)
            .count();
        assert_eq!((book_level, chapter_level, section_level), (3, 2, 4));
    }

    #[test]
    fn chapter_only_book_pairs_come_from_implicit_sections() {
        let book = make_book(vec![
            Chapter {
                title: "One".into(),
                sections: vec![section("One:body", "A body of chapter text here.")],
            },
            Chapter {
                title: "Two".into(),
                sections: vec![section("Two:body", "Another body of chapter text.")],
            },
        ]);
        let ids = ids_for(&book);
        let pairs = build_indexing_pairs(&book, &ids, 100).unwrap();
        let section_pairs: Vec<_> = pairs
            .iter()
            .filter(|p| p.kind == InputKind::SectionText)
            .collect();
        assert_eq!(section_pairs.len(), 2);
        assert!(section_pairs[0].target_id.contains("#One:body#"));
    }

    #[test]
    fn whole_text_honors_chapter_cap() {
        // synthetic chapter texts differ, so concatenation boundaries are
        // visible through exact string comparison
        let corpus = synth_corpus(3, 1, 120..=120, 1..=1, 6..=8).unwrap();
        let book = &corpus.books[0];
        let ids = ids_for(book);
        let pairs = build_indexing_pairs(book, &ids, 100).unwrap();
        let whole = pairs
            .iter()
            .find(|p| p.kind == InputKind::WholeText)
            .unwrap();
        let expected: Vec<String> = book.chapters[..100]
            .iter()
            .map(|c| c.full_text())
            .collect();
        assert_eq!(whole.input_text, expected.join(" "));
        // chapter 101's text is not in the capped whole text
        let ch101 = book.chapters[100].full_text();
        assert!(!whole.input_text.contains(&ch101));
    }

    #[test]
    fn kind_to_level_mapping_is_total_and_checked() {
        let corpus = synth_corpus(19, 4, 1..=3, 0..=2, 8..=16).unwrap();
        for book in &corpus.books {
            let ids = ids_for(book);
            let pairs = build_indexing_pairs(book, &ids, 100).unwrap();
            for p in &pairs {
                let fields = p.target_id.split('#').count();
                assert_eq!(fields, p.kind.id_level().field_count(), "{p:?}");
            }
        }
    }

    #[test]
    fn generate_queries_returns_exactly_x() {
        let corpus = synth_corpus(23, 1, 3..=3, 2..=2, 20..=30).unwrap();
        let book = &corpus.books[0];
        let generator = ExtractiveGenerator::new(7);
        let queries = generate_queries(book, QueryCategory::Single, 5, &generator).unwrap();
        assert_eq!(queries.len(), 5);
        assert!(queries.iter().all(|q| !q.trim().is_empty()));
    }

    #[test]
    fn extractive_single_query_contains_a_top_keyword() {
        let corpus = synth_corpus(29, 1, 2..=2, 2..=2, 25..=35).unwrap();
        let book = &corpus.books[0];
        let generator = ExtractiveGenerator::new(3);
        let queries = generate_queries(book, QueryCategory::Single, 1, &generator).unwrap();
        let keywords = textrank_keywords(
            &book.chapters[0].full_text(),
            KEYWORD_COUNT,
            KEYWORD_WINDOW,
        );
        let query_words = word_tokens(&queries[0]);
        assert!(
            query_words.iter().any(|w| keywords.contains(w)),
            "query {:?} misses keywords {keywords:?}",
            queries[0]
        );
    }

    #[test]
    fn single_chapter_book_degrades_multi_to_single() {
        let corpus = synth_corpus(37, 1, 1..=1, 1..=1, 20..=20).unwrap();
        let book = &corpus.books[0];
        let generator = ExtractiveGenerator::new(3);
        let queries = generate_queries(book, QueryCategory::Multi, 2, &generator).unwrap();
        assert_eq!(queries.len(), 2);
    }

    #[test]
    fn multi_prompt_content_joins_chapters_with_separator() {
        struct Spy(std::sync::Mutex<Option<QueryRequest>>);
        impl QueryGenerator for Spy {
            fn generate(&self, req: &QueryRequest) -> crate::error::Result<Vec<String>> {
                *self.0.lock().unwrap() = Some(req.clone());
                Ok(vec!["q".to_string(); req.x])
            }
        }
        let corpus = synth_corpus(41, 1, 5..=5, 1..=1, 10..=12).unwrap();
        let book = &corpus.books[0];
        let spy = Spy(std::sync::Mutex::new(None));
        generate_queries(book, QueryCategory::Multi, 1, &spy).unwrap();
        let req = spy.0.lock().unwrap().clone().unwrap();
        let parts: Vec<&str> = req.content.split('#').collect();
        assert_eq!(parts.len(), MULTI_PROMPT_CHAPTERS);
        assert_eq!(parts[0].trim(), book.chapters[0].full_text());
        assert_eq!(parts[1].trim(), book.chapters[2].full_text());
        assert_eq!(parts[2].trim(), book.chapters[4].full_text());
    }

    #[test]
    fn retrieval_pairs_count_and_targets() {
        let corpus = synth_corpus(43, 2, 2..=3, 1..=2, 15..=25).unwrap();
        let generator = ExtractiveGenerator::new(11);
        for book in &corpus.books {
            let ids = ids_for(book);
            let pairs = build_retrieval_pairs(book, &ids, 5, &generator).unwrap();
            assert_eq!(pairs.len(), 10);
            assert!(pairs.iter().all(|p| p.target_id == ids.book_id));
            let singles = pairs
                .iter()
                .filter(|p| p.kind == InputKind::QuerySingleChapter)
                .count();
            assert_eq!(singles, 5);
        }
    }

    #[test]
    fn x_zero_is_rejected() {
        let corpus = synth_corpus(47, 1, 1..=1, 1..=1, 10..=10).unwrap();
        let book = &corpus.books[0];
        let ids = ids_for(book);
        let err =
            build_retrieval_pairs(book, &ids, 0, &ExtractiveGenerator::new(1)).unwrap_err();
        assert!(matches!(err, Error::BadArgument(_)));
    }

    #[test]
    fn pairs_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let corpus = synth_corpus(53, 2, 1..=2, 1..=2, 10..=15).unwrap();
        let mut pairs = Vec::new();
        for book in &corpus.books {
            let ids = ids_for(book);
            pairs.extend(build_indexing_pairs(book, &ids, 100).unwrap());
        }
        save_pairs(&pairs, &path).unwrap();
        assert_eq!(load_pairs(&path).unwrap(), pairs);
    }

    #[test]
    fn plain_indexing_pair_is_whole_text_to_book_id() {
        let corpus = synth_corpus(59, 1, 2..=2, 1..=1, 10..=10).unwrap();
        let book = &corpus.books[0];
        let ids = ids_for(book);
        let pair = build_plain_indexing_pair(book, &ids, 100);
        assert_eq!(pair.kind, InputKind::WholeText);
        assert_eq!(pair.target_id, ids.book_id);
        assert_eq!(pair.input_text, book.whole_text(100));
    }
}
