//! Hidden-state storage, GloVe vectors and embedding subtraction.
//!
//! # HSB1 layout
//!
//! All integers are little-endian.
//!
//! | field                 | type                          |
//! |-----------------------|-------------------------------|
//! | magic                 | 4 bytes, `b"HSB1"`            |
//! | model id length       | `u16`, then UTF-8 bytes       |
//! | parse file length     | `u16`, then UTF-8 bytes       |
//! | layer                 | `u32`                         |
//! | dim                   | `u32`                         |
//! | sentence count        | `u32`                         |
//! | row counts            | `u32` per sentence            |
//! | payload               | `f32` values, row-major, sentences concatenated |

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::treebank::SentenceParse;

pub const HSB_MAGIC: &[u8; 4] = b"HSB1";

/// Word-aligned activations of one model layer over a parse file.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStateSet {
    pub model_id: String,
    /// 0 is the embedding output.
    pub layer: usize,
    pub dim: usize,
    /// Name of the CoNLL-U file the rows align to.
    pub parse_file: String,
    rows: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f32>,
}

impl HiddenStateSet {
    /// Builds a set from per-sentence row-major matrices.
    pub fn new(
        model_id: impl Into<String>,
        layer: usize,
        dim: usize,
        parse_file: impl Into<String>,
        sentences: Vec<Vec<f32>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("hidden dimension must be positive".into()));
        }
        let mut rows = Vec::with_capacity(sentences.len());
        let mut offsets = Vec::with_capacity(sentences.len());
        let mut data = Vec::with_capacity(sentences.iter().map(Vec::len).sum());
        for (i, s) in sentences.into_iter().enumerate() {
            if s.len() % dim != 0 {
                return Err(Error::Shape(format!(
                    "sentence {i} has {} values, not a multiple of dim {dim}",
                    s.len()
                )));
            }
            offsets.push(data.len());
            rows.push(s.len() / dim);
            data.extend_from_slice(&s);
        }
        Ok(HiddenStateSet {
            model_id: model_id.into(),
            layer,
            dim,
            parse_file: parse_file.into(),
            rows,
            offsets,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_counts(&self) -> &[usize] {
        &self.rows
    }

    /// Row-major `rows x dim` values of sentence `i`.
    pub fn sentence(&self, i: usize) -> &[f32] {
        let start = self.offsets[i];
        &self.data[start..start + self.rows[i] * self.dim]
    }

    /// Sentence `i` as an `N x d` matrix of 64-bit floats.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            self.rows[i],
            self.dim,
            self.sentence(i).iter().map(|&x| x as f64),
        )
    }

    /// Checks that every sentence has one row per token of its parse.
    pub fn check_alignment(&self, parses: &[SentenceParse]) -> Result<()> {
        if parses.len() != self.len() {
            return Err(Error::Alignment {
                sentence: self.len().min(parses.len()),
                message: format!(
                    "{} hidden-state sentences but {} parses",
                    self.len(),
                    parses.len()
                ),
            });
        }
        for (i, (rows, parse)) in self.rows.iter().zip(parses).enumerate() {
            if *rows != parse.len() {
                return Err(Error::Alignment {
                    sentence: i,
                    message: format!("{rows} rows for a {}-token parse", parse.len()),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.data.len() * 4);
        out.extend_from_slice(HSB_MAGIC);
        for s in [&self.model_id, &self.parse_file] {
            out.extend_from_slice(&(s.len() as u16).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&(self.layer as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        for &r in &self.rows {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != HSB_MAGIC {
            return Err(Error::Format("missing HSB1 magic bytes".into()));
        }
        let model_id = cur.string()?;
        let parse_file = cur.string()?;
        let layer = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            rows.push(cur.u32()? as usize);
        }
        let expected = rows.iter().sum::<usize>() * dim * 4;
        let found = bytes.len() - cur.pos;
        if expected != found {
            return Err(Error::Truncated { expected, found });
        }
        let data: Vec<f32> = bytes[cur.pos..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut offsets = Vec::with_capacity(count);
        let mut acc = 0;
        for &r in &rows {
            offsets.push(acc);
            acc += r * dim;
        }
        Ok(HiddenStateSet {
            model_id,
            layer,
            dim,
            parse_file,
            rows,
            offsets,
            data,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("header ends before declared fields".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let b = self.take(2)?;
        let len = u16::from_le_bytes([b[0], b[1]]) as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format("header string is not UTF-8".into()))
    }
}

pub fn read_hidden_states(path: impl AsRef<Path>) -> Result<HiddenStateSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    HiddenStateSet::from_bytes(&bytes)
}

/// Reads a set and validates it against its companion parses.
pub fn read_aligned_hidden_states(
    path: impl AsRef<Path>,
    parses: &[SentenceParse],
) -> Result<HiddenStateSet> {
    let set = read_hidden_states(path)?;
    set.check_alignment(parses)?;
    Ok(set)
}

pub fn write_hidden_states(path: impl AsRef<Path>, set: &HiddenStateSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Returns `layer_states - embedding_states`, keeping the layer index of the
/// first argument.
pub fn subtract_embeddings(
    layer_states: &HiddenStateSet,
    embedding_states: &HiddenStateSet,
) -> Result<HiddenStateSet> {
    if embedding_states.layer != 0 {
        return Err(Error::Alignment {
            sentence: 0,
            message: format!(
                "embedding states come from layer {}, expected 0",
                embedding_states.layer
            ),
        });
    }
    if layer_states.dim != embedding_states.dim {
        return Err(Error::Alignment {
            sentence: 0,
            message: format!(
                "dimension {} vs {}",
                layer_states.dim, embedding_states.dim
            ),
        });
    }
    if let Some(i) = (0..layer_states.len().max(embedding_states.len())).find(|&i| {
        layer_states.rows.get(i) != embedding_states.rows.get(i)
    }) {
        return Err(Error::Alignment {
            sentence: i,
            message: "row counts differ between layer and embedding states".into(),
        });
    }
    let data = layer_states
        .data
        .iter()
        .zip(&embedding_states.data)
        .map(|(a, b)| a - b)
        .collect();
    Ok(HiddenStateSet {
        data,
        ..layer_states.clone()
    })
}

/// Static word vectors loaded from the GloVe text format.
#[derive(Clone, Debug, Default)]
pub struct GloveTable {
    pub dim: usize,
    entries: HashMap<String, Vec<f32>>,
}

impl GloveTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = GloveTable::default();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else {
                continue;
            };
            let vec = parts
                .map(str::parse::<f32>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::FormatAt {
                    line: lineno + 1,
                    message: format!("bad float: {e}"),
                })?;
            if table.dim == 0 {
                table.dim = vec.len();
            }
            if vec.len() != table.dim || vec.is_empty() {
                return Err(Error::FormatAt {
                    line: lineno + 1,
                    message: format!("expected {} values, found {}", table.dim, vec.len()),
                });
            }
            table.entries.entry(word.to_string()).or_insert(vec);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Case-insensitive lookup: the query is lowercased first.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Euclidean distance between two words, if both are in the vocabulary.
    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        let (va, vb) = (self.get(a)?, self.get(b)?);
        Some(
            va.iter()
                .zip(vb)
                .map(|(x, y)| {
                    let d = *x as f64 - *y as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        )
    }
}

pub fn load_glove(path: impl AsRef<Path>) -> Result<GloveTable> {
    GloveTable::load(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Decoder,
    Encoder,
    EncoderDecoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringRule {
    Causal,
    Pll,
    PllWholeWord,
}

/// One exported hidden-state file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportEntry {
    /// `train`, `dev`, `test` or `blimp`.
    pub corpus: String,
    pub layer: usize,
    pub parse_file: PathBuf,
    pub hidden_state_file: PathBuf,
    pub sha256: String,
}

/// JSON manifest written by the extractor next to its HSB1 files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model_id: String,
    pub architecture: Architecture,
    pub num_layers: usize,
    pub dim: usize,
    /// Subword pooling policy, e.g. `mean`.
    pub alignment: String,
    /// Which stack of an encoder-decoder was exported.
    #[serde(default)]
    pub stack: Option<String>,
    pub scoring: ScoringRule,
    pub exports: Vec<ExportEntry>,
}

impl ExportManifest {
    /// Loads a manifest; relative file paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ExportManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.exports {
            e.parse_file = base.join(&e.parse_file);
            e.hidden_state_file = base.join(&e.hidden_state_file);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for corpus in self.corpora() {
            for layer in 0..=self.num_layers {
                if self.entry(&corpus, layer).is_none() {
                    return Err(Error::Format(format!(
                        "manifest for {} lacks layer {layer} of corpus {corpus}",
                        self.model_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn corpora(&self) -> Vec<String> {
        let mut c: Vec<String> = self.exports.iter().map(|e| e.corpus.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn entry(&self, corpus: &str, layer: usize) -> Option<&ExportEntry> {
        self.exports
            .iter()
            .find(|e| e.corpus == corpus && e.layer == layer)
    }

    /// Recomputes every file checksum.
    pub fn verify_checksums(&self) -> Result<()> {
        for e in &self.exports {
            let bytes = fs::read(&e.hidden_state_file).map_err(|x| Error::io(&e.hidden_state_file, x))?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(Error::Checksum {
                    path: e.hidden_state_file.clone(),
                });
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
