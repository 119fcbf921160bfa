use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::library::TemplateLibrary;
use crate::scalar::Scalar;

use super::{ModelError, QstrModel};

const CACHE_FORMAT: &str = "syntempo-cache";
const CACHE_VERSION: u32 = 1;

/// Projected template embeddings for every library entry, tagged with the
/// content hash of the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateEncodingCache<T> {
    params_hash: String,
    encodings: Vec<Array2<T>>,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    params_hash: String,
    d_model: usize,
    rows: Vec<usize>,
}

impl<T: Scalar> TemplateEncodingCache<T> {
    pub fn params_hash(&self) -> &str {
        &self.params_hash
    }

    pub fn len(&self) -> usize {
        self.encodings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encodings.is_empty()
    }

    pub fn encoding(&self, id: usize) -> Option<&Array2<T>> {
        self.encodings.get(id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = CacheHeader {
            format: CACHE_FORMAT.to_string(),
            version: CACHE_VERSION,
            params_hash: self.params_hash.clone(),
            d_model: self.encodings.first().map_or(0, |e| e.ncols()),
            rows: self.encodings.iter().map(|e| e.nrows()).collect(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.encodings {
            for v in e.iter() {
                w.write_all(&v.le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: CacheHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| ModelError::VersionMismatch(format!("cache header: {e}")))?;
        if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
            return Err(ModelError::VersionMismatch(format!("{} v{}", header.format, header.version)));
        }
        let mut buf = [0u8; 8];
        let mut encodings = Vec::with_capacity(header.rows.len());
        for &rows in &header.rows {
            let mut m = Array2::zeros((rows, header.d_model));
            for v in m.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = T::of(f64::from_le_bytes(buf));
            }
            encodings.push(m);
        }
        Ok(Self { params_hash: header.params_hash, encodings })
    }
}

impl<T: Scalar> QstrModel<T> {
    /// Encodes every library template in id order.
    pub fn encode_library(&self, lib: &TemplateLibrary) -> Result<TemplateEncodingCache<T>, ModelError> {
        let encodings = lib
            .entries()
            .par_iter()
            .map(|e| self.encode_template(&e.template).map(|enc| enc.projected))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TemplateEncodingCache { params_hash: self.content_hash().to_string(), encodings })
    }

    fn check_cache(&self, cache: &TemplateEncodingCache<T>) -> Result<(), ModelError> {
        if cache.params_hash != self.content_hash() {
            return Err(ModelError::StaleCache {
                expected: self.content_hash().to_string(),
                found: cache.params_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn score_with_cache<S: AsRef<str>>(
        &self,
        tokens: &[S],
        cache: &TemplateEncodingCache<T>,
        id: usize,
    ) -> Result<T, ModelError> {
        self.check_cache(cache)?;
        let e_t = cache.encoding(id).ok_or(ModelError::UnknownTemplate(id))?;
        let e_s = self.encode_sentence(tokens)?.projected;
        self.score_projected(&e_s, e_t)
    }

    /// Scores every cached template against one sentence, in id order.
    ///
    /// Work is spread over the current rayon pool; each score is computed
    /// independently, so the result does not depend on the thread count.
    pub fn score_all_with_cache<S: AsRef<str>>(
        &self,
        tokens: &[S],
        cache: &TemplateEncodingCache<T>,
    ) -> Result<Vec<T>, ModelError> {
        self.check_cache(cache)?;
        let e_s = self.encode_sentence(tokens)?.projected;
        cache.encodings.par_iter().map(|e_t| self.score_projected(&e_s, e_t)).collect()
    }
}
