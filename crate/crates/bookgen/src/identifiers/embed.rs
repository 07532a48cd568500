//! Deterministic hashed term-frequency embedder.
//!
//! Stands in for a learned sentence encoder when computing semantic
//! structured numbers: tokens are whitespace-split, lowercased, hashed
//! into one of `dimension` buckets with FNV-1a (64-bit), counted, and
//! the count vector is L2-normalized. Identical text always maps to the
//! identical vector, which is all the clustering step relies on.

/// FNV-1a, 64-bit. Fixed here so that embeddings are stable across
/// platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct Embedder {
    pub dimension: usize,
}

impl Embedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedder dimension must be positive");
        Embedder { dimension }
    }

    /// Embed `text` as a unit vector; empty or whitespace-only text maps
    /// to the zero vector.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in text.split_whitespace() {
            let token = token.to_lowercase();
            let bucket = (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = Embedder::new(16);
        assert!(e.embed("").iter().all(|&x| x == 0.0));
        assert!(e.embed("   ").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nonempty_text_has_unit_norm() {
        let e = Embedder::new(16);
        for text in ["hello", "a b c", "one one two three five eight"] {
            assert!((norm(&e.embed(text)) - 1.0).abs() < 1e-9, "{text}");
        }
    }

    #[test]
    fn repetition_preserves_direction() {
        let e = Embedder::new(32);
        let single = e.embed("t");
        let double = e.embed("t t");
        for (a, b) in single.iter().zip(&double) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // Independent oracle: recompute the expected term-frequency vector
    // by hand from the documented hash on a 3-word vocabulary.
    #[test]
    fn matches_hand_computed_term_frequency_vector() {
        let dim = 8;
        let e = Embedder::new(dim);
        let text = "ash ash birch cedar";
        let mut expected = vec![0.0f64; dim];
        for (word, count) in [("ash", 2.0), ("birch", 1.0), ("cedar", 1.0)] {
            // oracle-side FNV-1a, written out explicitly
            let mut h: u64 = 0xcbf29ce484222325;
            for &b in word.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            expected[(h % dim as u64) as usize] += count;
        }
        let n = norm(&expected);
        for x in &mut expected {
            *x /= n;
        }
        let got = e.embed(text);
        for (g, w) in got.iter().zip(&expected) {
            assert!((g - w).abs() < 1e-12, "got {got:?}, want {expected:?}");
        }
    }
}
