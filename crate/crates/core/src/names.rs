//! Name-embedding providers: a precomputed-vector file loader and a
//! deterministic character n-gram hashing fallback.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array1;

use crate::error::{Result, TkgaError};

pub trait NameProvider {
    fn dimension(&self) -> usize;
    fn embed(&self, label: &str) -> Result<Array1<f64>>;

    fn embed_all(&self, labels: &[String]) -> Result<Vec<Array1<f64>>> {
        labels.iter().map(|l| self.embed(l)).collect()
    }
}

/// Loads `label\tf1 f2 ... f_dn` lines.
pub struct FileNameProvider {
    dimension: usize,
    vectors: HashMap<String, Array1<f64>>,
}

impl FileNameProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<FileNameProvider> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| TkgaError::io(path.display().to_string(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<FileNameProvider> {
        let mut vectors = HashMap::new();
        let mut dimension = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label, rest) = line.split_once('\t').ok_or_else(|| {
                TkgaError::parse(origin, lineno + 1, "expected 'label\\tvalues'")
            })?;
            let values: std::result::Result<Vec<f64>, _> =
                rest.split_whitespace().map(str::parse::<f64>).collect();
            let values = values
                .map_err(|e| TkgaError::parse(origin, lineno + 1, format!("bad float: {e}")))?;
            match dimension {
                None => dimension = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(TkgaError::parse(
                        origin,
                        lineno + 1,
                        format!("dimension mismatch: {} vs {d}", values.len()),
                    ))
                }
                _ => {}
            }
            vectors.insert(label.to_string(), Array1::from(values));
        }
        let dimension = dimension.ok_or_else(|| {
            TkgaError::parse(origin, 0, "empty name-vector file")
        })?;
        Ok(FileNameProvider { dimension, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl NameProvider for FileNameProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, label: &str) -> Result<Array1<f64>> {
        self.vectors
            .get(label)
            .cloned()
            .ok_or_else(|| TkgaError::NameLookup(label.to_string()))
    }
}

/// Hashes character n-grams into a fixed number of buckets and L2-normalizes
/// the resulting count vector. Fully deterministic.
pub struct HashNgramProvider {
    dimension: usize,
    min_n: usize,
    max_n: usize,
}

impl HashNgramProvider {
    pub fn new(dimension: usize) -> HashNgramProvider {
        HashNgramProvider {
            dimension,
            min_n: 2,
            max_n: 4,
        }
    }
}

// FNV-1a, fixed offsets: stable across platforms and runs
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl NameProvider for HashNgramProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, label: &str) -> Result<Array1<f64>> {
        let mut v = Array1::<f64>::zeros(self.dimension);
        let padded: Vec<char> = format!("^{label}$").chars().collect();
        for n in self.min_n..=self.max_n {
            if padded.len() < n {
                continue;
            }
            for window in padded.windows(n) {
                let gram: String = window.iter().collect();
                let bucket = (fnv1a(gram.as_bytes()) % self.dimension as u64) as usize;
                v[bucket] += 1.0;
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        } else {
            // degenerate (empty label): deterministic unit basis vector
            v[0] = 1.0;
        }
        Ok(v)
    }
}
