//! Hierarchical book identifiers.
//!
//! Three levels, each building on the previous with `'#'` as separator:
//!
//! - book-id: `title#author#publisher`
//! - chapter-id: `book-id#chapter_title#<chapter number>`
//! - section-id: `chapter-id#section_title#<section number>`
//!
//! The numbers are semantic structured numbers: recursive k-means digit
//! paths over hashed term-frequency embeddings, computed per book across
//! its chapter texts (chapter level) and per chapter across its section
//! texts (section level), so that textually similar siblings share digit
//! prefixes.

mod embed;
mod kmeans;

pub use embed::{fnv1a64, Embedder};
pub use kmeans::{hierarchical_kmeans, SemanticNumber};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Book, Corpus, SEPARATOR};
use crate::error::{Error, Result};

/// Identifier construction parameters; `k` and `leaf_threshold` default
/// to 10 and 100.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdParams {
    pub k: usize,
    pub leaf_threshold: usize,
    pub seed: u64,
    pub embed_dim: usize,
}

impl Default for IdParams {
    fn default() -> Self {
        IdParams {
            k: 10,
            leaf_threshold: 100,
            seed: 13,
            embed_dim: 64,
        }
    }
}

/// All identifiers of one book. `section_ids` is flat in reading order
/// (chapter by chapter); `section_ids_by_chapter` regroups it when the
/// owning book is at hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierSet {
    pub book_key: String,
    pub book_id: String,
    pub chapter_ids: Vec<String>,
    pub section_ids: Vec<String>,
}

impl IdentifierSet {
    pub fn section_ids_by_chapter<'a>(&'a self, book: &Book) -> Vec<&'a [String]> {
        let mut out = Vec::with_capacity(book.chapters.len());
        let mut offset = 0;
        for ch in &book.chapters {
            let n = ch.sections.len();
            out.push(&self.section_ids[offset..offset + n]);
            offset += n;
        }
        out
    }
}

pub fn book_id(book: &Book) -> String {
    format!(
        "{}{SEPARATOR}{}{SEPARATOR}{}",
        book.metadata.title, book.metadata.author, book.metadata.publisher
    )
}

/// Build the full identifier set for one book.
///
/// Chapter numbers cluster the embeddings of every chapter body in the
/// book; section numbers cluster the section texts within each chapter
/// (reseeded per chapter). Fails if two chapters (or two sections of one
/// chapter) end up with the same identifier string, which happens only
/// when both their titles and their numbers collide.
pub fn build_identifier_set(
    book: &Book,
    embedder: &Embedder,
    params: &IdParams,
) -> Result<IdentifierSet> {
    let bid = book_id(book);

    let chapter_vecs: Vec<Vec<f64>> = book
        .chapters
        .iter()
        .map(|ch| embedder.embed(&ch.full_text()))
        .collect();
    let chapter_numbers =
        hierarchical_kmeans(&chapter_vecs, params.k, params.leaf_threshold, params.seed)?;

    let mut chapter_ids = Vec::with_capacity(book.chapters.len());
    let mut seen_chapters = HashSet::new();
    for (ch, number) in book.chapters.iter().zip(&chapter_numbers) {
        let cid = format!("{bid}{SEPARATOR}{}{SEPARATOR}{}", ch.title, number.render());
        if !seen_chapters.insert(cid.clone()) {
            return Err(Error::IdentifierCollision(cid));
        }
        chapter_ids.push(cid);
    }

    let mut section_ids = Vec::new();
    for (ci, (ch, cid)) in book.chapters.iter().zip(&chapter_ids).enumerate() {
        let section_vecs: Vec<Vec<f64>> = ch
            .sections
            .iter()
            .map(|s| embedder.embed(&s.text))
            .collect();
        let section_numbers = hierarchical_kmeans(
            &section_vecs,
            params.k,
            params.leaf_threshold,
            params.seed.wrapping_add(ci as u64 + 1),
        )?;
        let mut seen_sections = HashSet::new();
        for (s, number) in ch.sections.iter().zip(&section_numbers) {
            let sid = format!("{cid}{SEPARATOR}{}{SEPARATOR}{}", s.title, number.render());
            if !seen_sections.insert(sid.clone()) {
                return Err(Error::IdentifierCollision(sid));
            }
            section_ids.push(sid);
        }
    }

    Ok(IdentifierSet {
        book_key: book.book_key.clone(),
        book_id: bid,
        chapter_ids,
        section_ids,
    })
}

/// Identifier sets for a whole corpus, in corpus order.
pub fn build_corpus_identifiers(
    corpus: &Corpus,
    params: &IdParams,
) -> Result<Vec<IdentifierSet>> {
    let embedder = Embedder::new(params.embed_dim);
    corpus
        .books
        .iter()
        .map(|b| build_identifier_set(b, &embedder, params))
        .collect()
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdLevel {
    Book,
    Chapter,
    Section,
}

impl IdLevel {
    pub fn field_count(self) -> usize {
        match self {
            IdLevel::Book => 3,
            IdLevel::Chapter => 5,
            IdLevel::Section => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBookId {
    pub title: String,
    pub author: String,
    pub publisher: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedChapterId {
    pub book: ParsedBookId,
    pub chapter_title: String,
    pub number: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSectionId {
    pub chapter: ParsedChapterId,
    pub section_title: String,
    pub number: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedIdentifier {
    Book(ParsedBookId),
    Chapter(ParsedChapterId),
    Section(ParsedSectionId),
}

/// Split an identifier back into its components; the inverse of
/// construction.
pub fn parse_identifier(id: &str, level: IdLevel) -> Result<ParsedIdentifier> {
    let fields: Vec<&str> = id.split(SEPARATOR).collect();
    let want = level.field_count();
    if fields.len() != want {
        return Err(Error::IdentifierFormat {
            id: id.to_string(),
            msg: format!("expected {want} fields, found {}", fields.len()),
        });
    }
    for f in &fields {
        if f.is_empty() {
            return Err(Error::IdentifierFormat {
                id: id.to_string(),
                msg: "empty field".into(),
            });
        }
    }
    let book = ParsedBookId {
        title: fields[0].to_string(),
        author: fields[1].to_string(),
        publisher: fields[2].to_string(),
    };
    Ok(match level {
        IdLevel::Book => ParsedIdentifier::Book(book),
        IdLevel::Chapter => ParsedIdentifier::Chapter(ParsedChapterId {
            book,
            chapter_title: fields[3].to_string(),
            number: fields[4].to_string(),
        }),
        IdLevel::Section => ParsedIdentifier::Section(ParsedSectionId {
            chapter: ParsedChapterId {
                book,
                chapter_title: fields[3].to_string(),
                number: fields[4].to_string(),
            },
            section_title: fields[5].to_string(),
            number: fields[6].to_string(),
        }),
    })
}

// ---------------------------------------------------------------------------
// File format: one record per book, same line-record style as the corpus
// ---------------------------------------------------------------------------

pub fn save_identifiers(sets: &[IdentifierSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for set in sets {
        let line =
            serde_json::to_string(set).map_err(|e| Error::MalformedRecord(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_identifiers(path: impl AsRef<Path>) -> Result<Vec<IdentifierSet>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut sets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let set: IdentifierSet = serde_json::from_str(&line)
            .map_err(|e| Error::at_line(i + 1, Error::MalformedRecord(e.to_string())))?;
        sets.push(set);
    }
    Ok(sets)
}
