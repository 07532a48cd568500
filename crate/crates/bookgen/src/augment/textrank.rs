//! TextRank keyword and sentence extraction.
//!
//! Keywords: a binary undirected co-occurrence graph over distinct words
//! within a sliding window, ranked by damped power iteration.
//!
//! Summary: a sentence graph weighted by normalized word overlap,
//! `|W_i ∩ W_j| / (|W_i| + |W_j|)` over distinct word sets, ranked the
//! same way; the selected sentences are re-emitted in original order.
//!
//! Power iteration runs with damping 0.85 until the L1 residual falls
//! below 1e-6 (at most 100 iterations); scores are normalized to sum 1.

use std::collections::{HashMap, HashSet};

pub const DAMPING: f64 = 0.85;
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;

/// Lowercased word tokens with leading/trailing punctuation stripped.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// Sentence boundaries: '.', '!' or '?' followed by whitespace (or end
/// of text). Returned sentences are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|n| n.is_whitespace());
            if at_boundary {
                let s = current.trim();
                if !s.is_empty() {
                    sentences.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

/// Damped power iteration over a symmetric non-negative weight matrix.
/// Nodes with zero out-weight distribute their mass uniformly. Returns
/// scores summing to 1.
pub fn power_iteration(weights: &[Vec<f64>]) -> Vec<f64> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let out_weight: Vec<f64> = weights.iter().map(|row| row.iter().sum()).collect();
    let mut scores = vec![1.0 / n as f64; n];
    for _ in 0..MAX_ITERATIONS {
        let mut next = vec![(1.0 - DAMPING) / n as f64; n];
        for j in 0..n {
            if out_weight[j] > 0.0 {
                for i in 0..n {
                    if weights[j][i] > 0.0 {
                        next[i] += DAMPING * scores[j] * weights[j][i] / out_weight[j];
                    }
                }
            } else {
                for item in next.iter_mut() {
                    *item += DAMPING * scores[j] / n as f64;
                }
            }
        }
        let residual: f64 = next
            .iter()
            .zip(&scores)
            .map(|(a, b)| (a - b).abs())
            .sum();
        scores = next;
        if residual < TOLERANCE {
            break;
        }
    }
    let total: f64 = scores.iter().sum();
    for s in &mut scores {
        *s /= total;
    }
    scores
}

/// Distinct words of `text` with their TextRank scores, sorted by score
/// descending with ties broken by first occurrence.
pub fn keyword_scores(text: &str, window: usize) -> Vec<(String, f64)> {
    assert!(window >= 2, "window must be at least 2");
    let tokens = word_tokens(text);
    if tokens.is_empty() {
        return Vec::new();
    }

    // distinct words in first-occurrence order
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut words: Vec<&str> = Vec::new();
    for t in &tokens {
        if !index.contains_key(t.as_str()) {
            index.insert(t, words.len());
            words.push(t);
        }
    }
    let n = words.len();

    // binary co-occurrence within the sliding window
    let mut weights = vec![vec![0.0; n]; n];
    for (pos, t) in tokens.iter().enumerate() {
        let a = index[t.as_str()];
        for other in tokens.iter().skip(pos + 1).take(window - 1) {
            let b = index[other.as_str()];
            if a != b {
                weights[a][b] = 1.0;
                weights[b][a] = 1.0;
            }
        }
    }

    let scores = power_iteration(&weights);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
        .into_iter()
        .map(|i| (words[i].to_string(), scores[i]))
        .collect()
}

/// Top `top_k` words by TextRank score; ties broken by first occurrence.
/// Empty text yields an empty list.
pub fn textrank_keywords(text: &str, top_k: usize, window: usize) -> Vec<String> {
    assert!(top_k >= 1, "top_k must be at least 1");
    keyword_scores(text, window)
        .into_iter()
        .take(top_k)
        .map(|(w, _)| w)
        .collect()
}

/// Select the `top_n` highest-scoring sentences and re-emit them in
/// their original order, joined by a single space.
pub fn textrank_summary(text: &str, top_n: usize) -> String {
    assert!(top_n >= 1, "top_n must be at least 1");
    let sentences = split_sentences(text);
    let token_sets: Vec<HashSet<String>> = sentences
        .iter()
        .map(|s| word_tokens(s).into_iter().collect())
        .collect();
    let usable: Vec<usize> = (0..sentences.len())
        .filter(|&i| !token_sets[i].is_empty())
        .collect();
    if usable.is_empty() {
        return String::new();
    }
    if usable.len() == 1 {
        return sentences[usable[0]].clone();
    }

    let n = usable.len();
    let mut weights = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let (i, j) = (usable[a], usable[b]);
            let overlap = token_sets[i].intersection(&token_sets[j]).count() as f64;
            let w = overlap / (token_sets[i].len() + token_sets[j].len()) as f64;
            weights[a][b] = w;
            weights[b][a] = w;
        }
    }
    let scores = power_iteration(&weights);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(top_n).map(|a| usable[a]).collect();
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| sentences[i].clone())
        .collect::<Vec<_>>()
        .join(" ")
}
