//! Book data model, corpus file I/O, and synthetic corpus generation.
//!
//! A corpus file is UTF-8 with one JSON record per line:
//!
//! ```text
//! {"book_key":"bk00001","title":"...","author":"...","publisher":"...",
//!  "chapters":[{"title":"...","sections":[{"title":"...","text":"..."}]},
//!              {"title":"...","text":"..."}]}
//! ```
//!
//! A chapter may carry `sections` or, for books that only have top-level
//! chapters, a direct `text` body. Direct bodies are normalized on load
//! into a single implicit section titled `"<chapter title>:body"` so that
//! every downstream consumer sees a uniform chapter/section tree; saving
//! folds such sections back into the `text` form.
//!
//! `'#'` is the reserved identifier separator and is rejected in every
//! identifier-contributing field (metadata and titles) rather than
//! escaped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEPARATOR: char = '#';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub title: String,
    pub author: String,
    pub publisher: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chapter {
    pub title: String,
    pub sections: Vec<Section>,
}

impl Chapter {
    /// Title of the implicit section synthesized for a chapter that
    /// stores its body directly.
    pub fn body_section_title(chapter_title: &str) -> String {
        format!("{chapter_title}:body")
    }

    /// Chapter body: section texts concatenated in order.
    pub fn full_text(&self) -> String {
        let parts: Vec<&str> = self.sections.iter().map(|s| s.text.as_str()).collect();
        parts.join(" ")
    }

    fn is_implicit_body(&self) -> bool {
        self.sections.len() == 1 && self.sections[0].title == Self::body_section_title(&self.title)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Book {
    pub book_key: String,
    pub metadata: Metadata,
    pub chapters: Vec<Chapter>,
}

impl Book {
    /// Concatenation of the first `min(cap, #chapters)` chapter bodies.
    pub fn whole_text(&self, chapter_cap: usize) -> String {
        let parts: Vec<String> = self
            .chapters
            .iter()
            .take(chapter_cap)
            .map(Chapter::full_text)
            .collect();
        parts.join(" ")
    }

    /// Sections of the whole book in reading order as (chapter index,
    /// section index, section) triples.
    pub fn all_sections(&self) -> impl Iterator<Item = (usize, usize, &Section)> {
        self.chapters.iter().enumerate().flat_map(|(ci, ch)| {
            ch.sections.iter().enumerate().map(move |(si, s)| (ci, si, s))
        })
    }

    fn validate(&self) -> Result<()> {
        check_field("book_key", &self.book_key)?;
        check_field("title", &self.metadata.title)?;
        check_field("author", &self.metadata.author)?;
        check_field("publisher", &self.metadata.publisher)?;
        if self.chapters.is_empty() {
            return Err(Error::NoChapters(self.book_key.clone()));
        }
        for ch in &self.chapters {
            check_field("chapter title", &ch.title)?;
            if ch.sections.is_empty() {
                return Err(Error::MalformedRecord(format!(
                    "chapter {:?} has neither sections nor text",
                    ch.title
                )));
            }
            for s in &ch.sections {
                check_field("section title", &s.title)?;
                if s.text.trim().is_empty() {
                    return Err(Error::EmptyField(format!("text of section {:?}", s.title)));
                }
            }
        }
        Ok(())
    }
}

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::EmptyField(name.to_string()));
    }
    if value.contains(SEPARATOR) {
        return Err(Error::ReservedSeparator(name.to_string()));
    }
    Ok(())
}

/// An ordered, validated set of books. Immutable after construction;
/// share freely across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub books: Vec<Book>,
}

impl Corpus {
    pub fn new(books: Vec<Book>) -> Result<Self> {
        let mut keys = HashSet::new();
        let mut triples = HashSet::new();
        for book in &books {
            book.validate()?;
            if !keys.insert(book.book_key.clone()) {
                return Err(Error::DuplicateBookKey(book.book_key.clone()));
            }
            let triple = (
                book.metadata.title.clone(),
                book.metadata.author.clone(),
                book.metadata.publisher.clone(),
            );
            if !triples.insert(triple) {
                return Err(Error::DuplicateMetadata(
                    book.metadata.title.clone(),
                    book.metadata.author.clone(),
                ));
            }
        }
        Ok(Corpus { books })
    }

    pub fn len(&self) -> usize {
        self.books.len()
    }

    pub fn is_empty(&self) -> bool {
        self.books.is_empty()
    }

    pub fn by_key(&self, book_key: &str) -> Option<&Book> {
        self.books.iter().find(|b| b.book_key == book_key)
    }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SectionRecord {
    title: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct ChapterRecord {
    title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sections: Option<Vec<SectionRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct BookRecord {
    book_key: String,
    title: String,
    author: String,
    publisher: String,
    chapters: Vec<ChapterRecord>,
}

impl BookRecord {
    fn into_book(self) -> Result<Book> {
        let mut chapters = Vec::with_capacity(self.chapters.len());
        for ch in self.chapters {
            let sections = match (ch.sections, ch.text) {
                (Some(_), Some(_)) => {
                    return Err(Error::MalformedRecord(format!(
                        "chapter {:?} has both sections and text",
                        ch.title
                    )))
                }
                (Some(sections), None) => sections
                    .into_iter()
                    .map(|s| Section {
                        title: s.title,
                        text: s.text,
                    })
                    .collect(),
                (None, Some(text)) => vec![Section {
                    title: Chapter::body_section_title(&ch.title),
                    text,
                }],
                (None, None) => {
                    return Err(Error::MalformedRecord(format!(
                        "chapter {:?} has neither sections nor text",
                        ch.title
                    )))
                }
            };
            chapters.push(Chapter {
                title: ch.title,
                sections,
            });
        }
        Ok(Book {
            book_key: self.book_key,
            metadata: Metadata {
                title: self.title,
                author: self.author,
                publisher: self.publisher,
            },
            chapters,
        })
    }

    fn from_book(book: &Book) -> Self {
        let chapters = book
            .chapters
            .iter()
            .map(|ch| {
                if ch.is_implicit_body() {
                    ChapterRecord {
                        title: ch.title.clone(),
                        sections: None,
                        text: Some(ch.sections[0].text.clone()),
                    }
                } else {
                    ChapterRecord {
                        title: ch.title.clone(),
                        sections: Some(
                            ch.sections
                                .iter()
                                .map(|s| SectionRecord {
                                    title: s.title.clone(),
                                    text: s.text.clone(),
                                })
                                .collect(),
                        ),
                        text: None,
                    }
                }
            })
            .collect();
        BookRecord {
            book_key: book.book_key.clone(),
            title: book.metadata.title.clone(),
            author: book.metadata.author.clone(),
            publisher: book.metadata.publisher.clone(),
            chapters,
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut books = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: BookRecord = serde_json::from_str(&line)
            .map_err(|e| Error::at_line(lineno, Error::MalformedRecord(e.to_string())))?;
        let book = record
            .into_book()
            .map_err(|e| Error::at_line(lineno, e))?;
        book.validate().map_err(|e| Error::at_line(lineno, e))?;
        books.push(book);
    }
    Corpus::new(books)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for book in &corpus.books {
        let record = BookRecord::from_book(book);
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::MalformedRecord(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

const TITLE_ADJECTIVES: &[&str] = &[
    "Crimson", "Silent", "Hidden", "Golden", "Iron", "Wandering", "Forgotten", "Emerald",
    "Hollow", "Burning", "Frozen", "Distant", "Gilded", "Broken", "Quiet", "Scarlet",
    "Ancient", "Restless", "Pale", "Shattered", "Velvet", "Wild", "Sunken", "Last",
];

const TITLE_NOUNS: &[&str] = &[
    "River", "Mountain", "Garden", "Harbor", "Letter", "Voyage", "Orchard", "Tower",
    "Compass", "Meadow", "Lantern", "Archive", "Bridge", "Island", "Forest", "Mirror",
    "Crown", "Valley", "Atlas", "Shore", "Engine", "Library", "Sparrow", "Comet",
];

const FIRST_NAMES: &[&str] = &[
    "Alma", "Bruno", "Clara", "Daniel", "Edith", "Felix", "Greta", "Hugo", "Irene",
    "Jonas", "Karin", "Lionel", "Mirela", "Nadia", "Oskar", "Petra", "Quentin", "Rosa",
    "Stefan", "Talia",
];

const LAST_NAMES: &[&str] = &[
    "Albrecht", "Barros", "Calvino", "Dresner", "Ekholm", "Fontaine", "Grahame", "Hartley",
    "Ibarra", "Jansson", "Kovacs", "Lindqvist", "Moreau", "Novak", "Olsen", "Pereira",
    "Quiroga", "Rendell", "Soderberg", "Tanaka",
];

const PUBLISHER_NAMES: &[&str] = &[
    "Meridian", "Northgate", "Alder", "Cobblestone", "Fernwood", "Halcyon", "Ironwood",
    "Juniper", "Kestrel", "Longford", "Marrow", "Nightingale", "Oakum", "Pinnacle",
    "Quayside", "Rowanberry",
];

const PUBLISHER_SUFFIXES: &[&str] = &["Press", "Books", "House", "Publishing"];

const COMMON_WORDS: &[&str] = &[
    "the", "a", "morning", "evening", "light", "shadow", "road", "house", "window", "door",
    "water", "stone", "tree", "field", "wind", "rain", "snow", "fire", "smoke", "cloud",
    "letter", "paper", "table", "chair", "room", "stair", "garden", "wall", "gate", "path",
    "voice", "sound", "silence", "song", "story", "word", "name", "face", "hand", "eye",
    "heart", "mind", "dream", "sleep", "night", "day", "summer", "winter", "spring",
    "autumn", "harvest", "market", "village", "town", "city", "street", "bridge", "river",
    "lake", "sea", "shore", "boat", "sail", "journey", "map", "coin", "bread", "salt",
    "wine", "apple", "horse", "bird", "dog", "cat", "fox", "wolf", "bear", "deer",
    "mountain", "valley", "hill", "meadow", "forest", "glade", "north", "south", "east",
    "west", "old", "young", "small", "great", "long", "short", "dark", "bright", "cold",
    "warm", "slow", "quick", "quiet", "loud", "early", "late", "first", "last", "walked",
    "turned", "opened", "closed", "carried", "followed", "watched", "waited", "listened",
    "remembered", "forgot", "found", "lost", "returned", "arrived", "departed", "spoke",
    "answered", "asked", "wrote", "read", "counted", "gathered", "planted", "built",
    "mended", "traded", "sang", "slept", "woke", "crossed", "climbed", "descended",
    "entered", "left", "stayed", "moved", "rested", "worked", "between", "beyond",
    "beneath", "above", "against", "toward", "within", "without", "before", "after",
];

const TOPIC_SYLLABLES: &[&str] = &[
    "bren", "cald", "dru", "fenn", "gal", "harl", "jor", "kel", "lor", "mab", "nev",
    "orin", "pell", "quor", "rask", "sol", "tav", "ul", "vex", "wyn", "yar", "zel",
];

/// Probability that a content word is drawn from the book's topic words
/// rather than the shared pool; keeps books distinguishable by content.
const TOPIC_WORD_RATE: f64 = 0.18;
const TOPIC_WORDS_PER_BOOK: usize = 3;

fn draw<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

fn draw_range(rng: &mut ChaCha8Rng, range: &RangeInclusive<usize>) -> usize {
    rng.gen_range(range.clone())
}

fn topic_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let a = draw(rng, TOPIC_SYLLABLES);
        let b = draw(rng, TOPIC_SYLLABLES);
        let word = format!("{a}{b}");
        if used.insert(word.clone()) {
            return word;
        }
    }
}

fn unique_title(
    rng: &mut ChaCha8Rng,
    used: &mut HashSet<(String, String, String)>,
) -> (String, String, String) {
    for attempt in 0..u32::MAX {
        let mut title = format!(
            "The {} {}",
            draw(rng, TITLE_ADJECTIVES),
            draw(rng, TITLE_NOUNS)
        );
        if attempt >= 64 {
            title.push_str(&format!(" {}", attempt - 62));
        }
        let author = format!("{} {}", draw(rng, FIRST_NAMES), draw(rng, LAST_NAMES));
        let publisher = format!(
            "{} {}",
            draw(rng, PUBLISHER_NAMES),
            draw(rng, PUBLISHER_SUFFIXES)
        );
        let triple = (title, author, publisher);
        if used.insert(triple.clone()) {
            return triple;
        }
    }
    unreachable!("title pool exhausted");
}

fn unique_heading(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    for attempt in 0..u32::MAX {
        let a = capitalize(draw(rng, COMMON_WORDS));
        let b = capitalize(draw(rng, COMMON_WORDS));
        let mut heading = format!("{a} {b}");
        if attempt >= 64 {
            heading.push_str(&format!(" {}", attempt - 62));
        }
        if used.insert(heading.clone()) {
            return heading;
        }
    }
    unreachable!("heading pool exhausted");
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn section_text(rng: &mut ChaCha8Rng, n_words: usize, topic_words: &[String]) -> String {
    let mut out = String::new();
    let mut sentence_len = 0usize;
    let mut target = rng.gen_range(6..=12);
    for i in 0..n_words {
        let word = if rng.gen_bool(TOPIC_WORD_RATE) {
            topic_words[rng.gen_range(0..topic_words.len())].clone()
        } else {
            draw(rng, COMMON_WORDS).to_string()
        };
        if i > 0 {
            out.push(' ');
        }
        if sentence_len == 0 {
            out.push_str(&capitalize(&word));
        } else {
            out.push_str(&word);
        }
        sentence_len += 1;
        if sentence_len >= target || i + 1 == n_words {
            out.push('.');
            sentence_len = 0;
            target = rng.gen_range(6..=12);
        }
    }
    out
}

/// Generate a deterministic synthetic corpus. Every book receives a
/// distinct metadata triple and a few private topic words that are mixed
/// into its section texts.
///
/// `sections_per_chapter` may include 0, in which case the chapter
/// carries a direct text body (stored as an implicit section).
pub fn synth_corpus(
    seed: u64,
    n_books: usize,
    chapters_per_book: RangeInclusive<usize>,
    sections_per_chapter: RangeInclusive<usize>,
    words_per_section: RangeInclusive<usize>,
) -> Result<Corpus> {
    if n_books == 0 {
        return Err(Error::BadArgument("n_books must be at least 1".into()));
    }
    for (name, range) in [
        ("chapters_per_book", &chapters_per_book),
        ("sections_per_chapter", &sections_per_chapter),
        ("words_per_section", &words_per_section),
    ] {
        if range.is_empty() {
            return Err(Error::BadArgument(format!("{name} range is empty")));
        }
    }
    if *chapters_per_book.start() == 0 {
        return Err(Error::BadArgument(
            "chapters_per_book must start at 1 or more".into(),
        ));
    }
    if *words_per_section.start() == 0 {
        return Err(Error::BadArgument(
            "words_per_section must start at 1 or more".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used_triples = HashSet::new();
    let mut used_topic_words = HashSet::new();
    let mut books = Vec::with_capacity(n_books);

    for i in 0..n_books {
        let (title, author, publisher) = unique_title(&mut rng, &mut used_triples);
        let topic_words: Vec<String> = (0..TOPIC_WORDS_PER_BOOK)
            .map(|_| topic_word(&mut rng, &mut used_topic_words))
            .collect();

        let n_chapters = draw_range(&mut rng, &chapters_per_book);
        let mut used_headings = HashSet::new();
        let mut chapters = Vec::with_capacity(n_chapters);
        for _ in 0..n_chapters {
            let chapter_title = unique_heading(&mut rng, &mut used_headings);
            let n_sections = draw_range(&mut rng, &sections_per_chapter);
            let sections = if n_sections == 0 {
                let words = draw_range(&mut rng, &words_per_section);
                vec![Section {
                    title: Chapter::body_section_title(&chapter_title),
                    text: section_text(&mut rng, words, &topic_words),
                }]
            } else {
                (0..n_sections)
                    .map(|_| {
                        let section_title = unique_heading(&mut rng, &mut used_headings);
                        let words = draw_range(&mut rng, &words_per_section);
                        Section {
                            title: section_title,
                            text: section_text(&mut rng, words, &topic_words),
                        }
                    })
                    .collect()
            };
            chapters.push(Chapter {
                title: chapter_title,
                sections,
            });
        }

        books.push(Book {
            book_key: format!("bk{i:05}"),
            metadata: Metadata {
                title,
                author,
                publisher,
            },
            chapters,
        });
    }

    Corpus::new(books)
}
