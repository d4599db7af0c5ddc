use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const HEADER: &str = "NIVOCAB v1";

/// Token to embedding-row map. Tokens outside the vocabulary fall into one
/// of `oov_buckets` hashed rows placed after the known tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    oov_buckets: usize,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Vocab {
    pub fn new(tokens: Vec<String>, oov_buckets: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index, oov_buckets: oov_buckets.max(1) }
    }

    /// Keeps tokens seen at least `min_count` times, most frequent first
    /// (ties alphabetical), up to `max_size` entries.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: usize, max_size: usize, oov_buckets: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Self::new(ranked.into_iter().map(|(t, _)| t.to_string()).collect(), oov_buckets)
    }

    /// Number of embedding rows needed, buckets included.
    pub fn size(&self) -> usize {
        self.tokens.len() + self.oov_buckets
    }

    pub fn known(&self) -> usize {
        self.tokens.len()
    }

    pub fn oov_buckets(&self) -> usize {
        self.oov_buckets
    }

    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) => i,
            None => self.tokens.len() + (fnv1a(token) % self.oov_buckets as u64) as usize,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER} {} {}\n", self.tokens.len(), self.oov_buckets);
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{i}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Vocab(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let rest = header.strip_prefix(HEADER).ok_or_else(|| bad("missing NIVOCAB v1 header"))?;
        let nums: Vec<usize> = rest.split_whitespace().map(|s| s.parse().map_err(|_| bad("bad header field"))).collect::<Result<_>>()?;
        let [size, buckets] = nums[..] else {
            return Err(bad("header needs size and bucket count"));
        };
        let mut tokens = vec![String::new(); size];
        let mut seen = vec![false; size];
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad("line without tab"))?;
            let id: usize = id.parse().map_err(|_| bad("bad id"))?;
            if id >= size || seen[id] {
                return Err(bad("id out of range or repeated"));
            }
            tokens[id] = tok.to_string();
            seen[id] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(bad("missing ids"));
        }
        Ok(Self::new(tokens, buckets))
    }

    /// Hex SHA-256 of the serialized form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_and_buckets() {
        let v = Vocab::build(["b", "a", "b", "c", "a", "b"], 2, 10, 4);
        assert_eq!(v.id("b"), 0);
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.size(), 6);
        let c = v.id("c");
        assert!((2..6).contains(&c));
        assert_eq!(c, v.id("c"));
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::build(["x", "=", "1", "x"], 1, 10, 8);
        let back = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.hash(), back.hash());
        assert!(v.to_text().starts_with("NIVOCAB v1 3 8\n"));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Vocab::from_text("VOCAB 1 1\n").is_err());
        assert!(Vocab::from_text("NIVOCAB v1 2 4\na\t0\n").is_err());
        assert!(Vocab::from_text("NIVOCAB v1 1 4\na\t3\n").is_err());
    }
}
