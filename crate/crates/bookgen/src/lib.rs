//! Generative retrieval engine for book search.
//!
//! A book corpus is indexed by teaching a small encoder-decoder model to
//! generate hierarchical identifiers (book-, chapter- and section-level)
//! from book content and from pseudo-queries. At search time the model
//! decodes under a prefix-trie constraint so only valid identifiers can
//! be produced, and book- and chapter-level results are aggregated into
//! a ranked list.
//!
//! Pipeline stages (each is also a CLI subcommand):
//!
//! 1. [`corpus`] — book data model, corpus file I/O, synthetic corpora
//! 2. [`identifiers`] — hierarchical identifiers with semantic structured
//!    numbers from recursive k-means over text embeddings
//! 3. [`augment`] — indexing pairs (five content forms) and retrieval
//!    pairs (two pseudo-query categories)
//! 4. [`numerics`] — tensor graph with reverse-mode autodiff and Adam
//! 5. [`model`] — the encoder-decoder with bi-level positional encoding
//!    and retentive attention
//! 6. [`decode`] — prefix tries, constrained beam search, parallel and
//!    serial score aggregation
//! 7. [`evalkit`] — Hits@K / MRR@K metrics and experiment orchestration

pub mod augment;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod evalkit;
pub mod identifiers;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
