//! Pseudo-query generators.
//!
//! Two implementations of [`QueryGenerator`]:
//!
//! - [`ExtractiveGenerator`] — deterministic and offline; samples
//!   keyword-bearing sentences (single-chapter) or stitches fragments
//!   from several chapters (multi-chapter). Used by all tests and the
//!   default pipeline.
//! - [`RemoteLlmGenerator`] — HTTP client for a chat-completion-style
//!   endpoint. Request and response bodies are JSON with a single
//!   `content` field; the model name travels in the `x-model` header and
//!   the auth token as a bearer `authorization` header. Retries three
//!   times with exponential backoff and caps in-flight requests.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identifiers::fnv1a64;

use super::textrank::{split_sentences, textrank_keywords, word_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryCategory {
    Single,
    Multi,
}

impl fmt::Display for QueryCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryCategory::Single => write!(f, "single"),
            QueryCategory::Multi => write!(f, "multi"),
        }
    }
}

/// Prepared generation request: `content` is one chapter's text for the
/// single category, or several chapter texts joined by the `#` token for
/// the multi category.
#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub book_key: String,
    pub category: QueryCategory,
    pub x: usize,
    pub content: String,
}

pub trait QueryGenerator: Send + Sync {
    /// Produce exactly `req.x` non-empty queries.
    fn generate(&self, req: &QueryRequest) -> Result<Vec<String>>;
}

// ---------------------------------------------------------------------------
// Extractive generator
// ---------------------------------------------------------------------------

const QUERY_KEYWORDS: usize = 10;
const KEYWORD_WINDOW: usize = 4;
const MAX_QUERY_WORDS: usize = 24;
const MULTI_FRAGMENT_WORDS: usize = 8;

#[derive(Debug, Clone)]
pub struct ExtractiveGenerator {
    pub seed: u64,
}

impl ExtractiveGenerator {
    pub fn new(seed: u64) -> Self {
        ExtractiveGenerator { seed }
    }

    fn rng_for(&self, req: &QueryRequest) -> ChaCha8Rng {
        let tag = match req.category {
            QueryCategory::Single => 0x51,
            QueryCategory::Multi => 0xA3,
        };
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(req.book_key.as_bytes()) ^ tag)
    }

    fn single(&self, req: &QueryRequest) -> Vec<String> {
        let mut rng = self.rng_for(req);
        let sentences = split_sentences(&req.content);
        let keywords = textrank_keywords(&req.content, QUERY_KEYWORDS, KEYWORD_WINDOW);
        let candidates: Vec<&String> = {
            let keyword_bearing: Vec<&String> = sentences
                .iter()
                .filter(|s| {
                    word_tokens(s)
                        .iter()
                        .any(|w| keywords.iter().any(|k| k == w))
                })
                .collect();
            if keyword_bearing.is_empty() {
                sentences.iter().collect()
            } else {
                keyword_bearing
            }
        };
        (0..req.x)
            .map(|_| {
                let s = candidates[rng.gen_range(0..candidates.len())];
                truncate_words(s, MAX_QUERY_WORDS)
            })
            .collect()
    }

    fn multi(&self, req: &QueryRequest) -> Vec<String> {
        let mut rng = self.rng_for(req);
        let parts: Vec<&str> = req
            .content
            .split('#')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() < 2 {
            // degraded input; behave like the single category
            return self.single(req);
        }
        let fragments_per_part: Vec<Vec<String>> = parts
            .iter()
            .map(|part| {
                let keywords = textrank_keywords(part, QUERY_KEYWORDS, KEYWORD_WINDOW);
                let sentences = split_sentences(part);
                let mut fragments: Vec<String> = sentences
                    .iter()
                    .filter(|s| {
                        word_tokens(s)
                            .iter()
                            .any(|w| keywords.iter().any(|k| k == w))
                    })
                    .map(|s| truncate_words(s, MULTI_FRAGMENT_WORDS))
                    .collect();
                if fragments.is_empty() {
                    fragments = sentences
                        .iter()
                        .map(|s| truncate_words(s, MULTI_FRAGMENT_WORDS))
                        .collect();
                }
                fragments
            })
            .collect();
        (0..req.x)
            .map(|_| {
                let mut pieces = Vec::with_capacity(parts.len());
                for frags in &fragments_per_part {
                    pieces.push(frags[rng.gen_range(0..frags.len())].clone());
                }
                pieces.join(" ")
            })
            .collect()
    }
}

fn truncate_words(s: &str, max_words: usize) -> String {
    let words: Vec<&str> = s.split_whitespace().take(max_words).collect();
    words.join(" ")
}

impl QueryGenerator for ExtractiveGenerator {
    fn generate(&self, req: &QueryRequest) -> Result<Vec<String>> {
        if req.content.trim().is_empty() {
            return Err(Error::QueryGeneration {
                book_key: req.book_key.clone(),
                category: req.category.to_string(),
                msg: "empty content".into(),
            });
        }
        let queries = match req.category {
            QueryCategory::Single => self.single(req),
            QueryCategory::Multi => self.multi(req),
        };
        Ok(queries)
    }
}

// ---------------------------------------------------------------------------
// Remote LLM generator
// ---------------------------------------------------------------------------

pub const SINGLE_CHAPTER_PROMPT: &str = "Given the following chapter from a book, generate {X} \
pseudo queries that can be answered using the information contained within this single chapter. \
The queries should focus on key themes, events, characters, and any specific details provided \
in the chapter. A single chapter content: {chapter texts}.";

pub const MULTI_CHAPTER_PROMPT: &str = "Given the following chapters from a book, where they are \
separated by a token \"#\", generate {X} complex pseudo queries that require synthesizing \
information from multiple chapters to answer. Each query should be clear, specific, and \
necessitate the integration of information across different chapters. Multiple chapter \
contents: {chapter texts}.";

pub fn render_prompt(category: QueryCategory, x: usize, content: &str) -> String {
    let template = match category {
        QueryCategory::Single => SINGLE_CHAPTER_PROMPT,
        QueryCategory::Multi => MULTI_CHAPTER_PROMPT,
    };
    template
        .replace("{X}", &x.to_string())
        .replace("{chapter texts}", content)
}

/// Parse a numbered list ("1. ..." or "2) ...") into its items.
pub fn parse_numbered_list(text: &str) -> Vec<String> {
    let mut items = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let digits: String = line.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            continue;
        }
        let rest = &line[digits.len()..];
        let Some(rest) = rest.strip_prefix(['.', ')']) else {
            continue;
        };
        let item = rest.trim();
        if !item.is_empty() {
            items.push(item.to_string());
        }
    }
    items
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LlmSettings {
    pub endpoint: String,
    #[serde(default)]
    pub auth_token: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// Base backoff in milliseconds; doubles per retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> u64 {
    30
}
fn default_max_parallel() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Serialize)]
struct LlmRequestBody<'a> {
    content: &'a str,
}

#[derive(Deserialize)]
struct LlmResponseBody {
    content: String,
}

/// Counting semaphore; bounds in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap() += 1;
        self.sem.cv.notify_one();
    }
}

pub struct RemoteLlmGenerator {
    settings: LlmSettings,
    agent: ureq::Agent,
    gate: Semaphore,
}

const RETRIES: u32 = 3;

impl RemoteLlmGenerator {
    pub fn new(settings: LlmSettings) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build();
        let gate = Semaphore::new(settings.max_parallel);
        RemoteLlmGenerator {
            settings,
            agent,
            gate,
        }
    }

    fn call_once(&self, prompt: &str) -> Result<String> {
        let _permit = self.gate.acquire();
        let mut request = self
            .agent
            .post(&self.settings.endpoint)
            .set("x-model", &self.settings.model);
        if let Some(token) = &self.settings.auth_token {
            request = request.set("authorization", &format!("Bearer {token}"));
        }
        let response = request
            .send_json(LlmRequestBody { content: prompt })
            .map_err(|e| Error::Http(e.to_string()))?;
        let body: LlmResponseBody = response
            .into_json()
            .map_err(|e| Error::Http(format!("bad response body: {e}")))?;
        Ok(body.content)
    }

    fn call_with_retries(&self, prompt: &str) -> Result<String> {
        let mut last = None;
        for attempt in 0..RETRIES {
            match self.call_once(prompt) {
                Ok(content) => return Ok(content),
                Err(e) => {
                    log::warn!("llm request attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                    if attempt + 1 < RETRIES {
                        let delay = self.settings.backoff_ms.saturating_mul(1 << attempt);
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

impl QueryGenerator for RemoteLlmGenerator {
    fn generate(&self, req: &QueryRequest) -> Result<Vec<String>> {
        let prompt = render_prompt(req.category, req.x, &req.content);
        let content = self
            .call_with_retries(&prompt)
            .map_err(|e| Error::QueryGeneration {
                book_key: req.book_key.clone(),
                category: req.category.to_string(),
                msg: e.to_string(),
            })?;
        let queries = parse_numbered_list(&content);
        if queries.len() < req.x {
            return Err(Error::QueryGeneration {
                book_key: req.book_key.clone(),
                category: req.category.to_string(),
                msg: format!("expected {} queries, parsed {}", req.x, queries.len()),
            });
        }
        Ok(queries.into_iter().take(req.x).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_list_parsing() {
        let text = "Here you go:\n1. What did the miller trade?\n2) Who arrived at night?\n\n3 . dropped\nnot numbered\n4. Last one?";
        let items = parse_numbered_list(text);
        assert_eq!(
            items,
            vec![
                "What did the miller trade?",
                "Who arrived at night?",
                "Last one?"
            ]
        );
    }

    #[test]
    fn prompts_substitute_both_placeholders() {
        let p = render_prompt(QueryCategory::Single, 5, "CHAPTER BODY");
        assert!(p.contains("generate 5 pseudo queries"));
        assert!(p.ends_with("A single chapter content: CHAPTER BODY."));
        let p = render_prompt(QueryCategory::Multi, 3, "A # B");
        assert!(p.contains("separated by a token \"#\""));
        assert!(p.contains("generate 3 complex pseudo queries"));
        assert!(p.ends_with("Multiple chapter contents: A # B."));
    }

    #[test]
    fn extractive_is_deterministic() {
        let generator = ExtractiveGenerator::new(9);
        let req = QueryRequest {
            book_key: "bk1".into(),
            category: QueryCategory::Single,
            x: 4,
            content: "The miller traded grain for salt. The stranger arrived at night. \
                      The river rose in spring."
                .into(),
        };
        let a = generator.generate(&req).unwrap();
        let b = generator.generate(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|q| !q.is_empty()));
    }

    #[test]
    fn extractive_multi_combines_fragments_from_all_parts() {
        let generator = ExtractiveGenerator::new(9);
        let req = QueryRequest {
            book_key: "bk1".into(),
            category: QueryCategory::Multi,
            x: 2,
            content: "The harbor froze in winter. # The orchard bloomed in spring.".into(),
        };
        let queries = generator.generate(&req).unwrap();
        for q in &queries {
            assert!(q.contains("harbor") || q.contains("froze"), "{q}");
            assert!(q.contains("orchard") || q.contains("bloomed"), "{q}");
        }
    }

    #[test]
    fn remote_generator_round_trips_against_local_server() {
        use std::io::{Read, Write};
        // one-shot HTTP server on an ephemeral port
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut total = 0;
            // read until the JSON body closes
            loop {
                let n = stream.read(&mut buf[total..]).unwrap();
                total += n;
                let text = String::from_utf8_lossy(&buf[..total]);
                if text.contains("\r\n\r\n") && text.trim_end().ends_with('}') {
                    break;
                }
            }
            let request = String::from_utf8_lossy(&buf[..total]).to_string();
            let body = r#"{"content":"1. One query about the chapter?\n2. Another query?"}"#;
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
            request
        });

        let generator = RemoteLlmGenerator::new(LlmSettings {
            endpoint: format!("http://{addr}/generate"),
            auth_token: Some("secret".into()),
            model: "test-model".into(),
            timeout_secs: 5,
            max_parallel: 2,
            backoff_ms: 1,
        });
        let req = QueryRequest {
            book_key: "bk1".into(),
            category: QueryCategory::Single,
            x: 2,
            content: "Chapter text.".into(),
        };
        let queries = generator.generate(&req).unwrap();
        assert_eq!(
            queries,
            vec!["One query about the chapter?", "Another query?"]
        );
        let request = handle.join().unwrap();
        assert!(request.contains("x-model: test-model"));
        assert!(request.contains("authorization: Bearer secret"));
        assert!(request.contains("generate 2 pseudo queries"));
    }

    #[test]
    fn remote_generator_fails_after_retries() {
        // unroutable port: connection refused on every attempt
        let generator = RemoteLlmGenerator::new(LlmSettings {
            endpoint: "http://127.0.0.1:1/generate".into(),
            auth_token: None,
            model: "m".into(),
            timeout_secs: 1,
            max_parallel: 1,
            backoff_ms: 1,
        });
        let req = QueryRequest {
            book_key: "bk9".into(),
            category: QueryCategory::Multi,
            x: 1,
            content: "a # b".into(),
        };
        let err = generator.generate(&req).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bk9"), "{msg}");
        assert!(msg.contains("multi"), "{msg}");
    }
}
