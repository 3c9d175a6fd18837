//! Signed feature-hashing embedder over unigrams and bigrams of content terms.

use crate::text::{content_terms, fnv1a, tokenize};

pub const DEFAULT_DIM: usize = 256;

/// Embeds `text` into a unit-norm vector of length `dim`.
///
/// Features are the content-term unigrams and adjacent bigrams. Text without
/// content terms falls back to all tokens, then to the whole trimmed string,
/// so any non-empty input yields a non-zero vector.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut terms = content_terms(text);
    if terms.is_empty() {
        terms = tokenize(text);
    }
    if terms.is_empty() {
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            terms.push(trimmed.to_string());
        }
    }

    let mut v = vec![0.0; dim];
    let mut add = |feature: &str| {
        let h = fnv1a(seed, feature.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    };
    for term in &terms {
        add(&format!("u:{term}"));
    }
    for pair in terms.windows(2) {
        add(&format!("b:{} {}", pair[0], pair[1]));
    }

    normalize(&mut v);
    v
}

/// Scales `v` to unit L2 norm in place and returns the original norm.
/// A zero vector is left untouched.
pub fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn unit_norm_and_dimension() {
        for text in ["pool kids", "the of and", "!!!", "a"] {
            let v = hash_embed(text, 64, 0);
            assert_eq!(v.len(), 64);
            assert!((norm(&v) - 1.0).abs() < 1e-9, "{text}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = hash_embed("family pool with lifeguards", 256, 3);
        let b = hash_embed("family pool with lifeguards", 256, 3);
        assert_eq!(a, b);
        assert_ne!(a, hash_embed("family pool with lifeguards", 256, 4));
    }

    #[test]
    fn shared_vocabulary_raises_similarity() {
        let a = hash_embed("pool kids playground babysitting family pool", 256, 0);
        let b = hash_embed("kids playground pool family suites", 256, 0);
        let c = hash_embed("wifi desk printer meeting rooms", 256, 0);
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }
}
