use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::train::{TrainConfig, TrainingLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Structural,
    Orthogonal,
    Headword,
    Control,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Structural,
        Family::Orthogonal,
        Family::Headword,
        Family::Control,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Structural => "structural",
            Family::Orthogonal => "orthogonal",
            Family::Headword => "headword",
            Family::Control => "control",
        }
    }

    fn code(self) -> u8 {
        match self {
            Family::Structural => 0,
            Family::Orthogonal => 1,
            Family::Headword => 2,
            Family::Control => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.code() == c)
            .ok_or_else(|| Error::Format(format!("unknown probe family code {c}")))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown probe family {s:?}")))
    }
}

/// Parameters of one probe.
///
/// `proj` is the `k x d` projection for the structural, headword and control
/// families, and the `d x d` matrix `V` for the orthogonal family, which also
/// carries a per-dimension `scale`. The headword probe owns a learned ROOT
/// vector in hidden-state space.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeParams {
    pub family: Family,
    pub proj: DMatrix<f64>,
    pub scale: Option<DVector<f64>>,
    pub root: Option<DVector<f64>>,
}

impl ProbeParams {
    /// Validates the family-specific shape rules.
    pub fn new(
        family: Family,
        proj: DMatrix<f64>,
        scale: Option<DVector<f64>>,
        root: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (k, d) = proj.shape();
        let ok = match family {
            Family::Orthogonal => {
                k == d && scale.as_ref().is_some_and(|s| s.len() == d) && root.is_none()
            }
            Family::Headword => {
                k <= d && scale.is_none() && root.as_ref().is_some_and(|r| r.len() == d)
            }
            Family::Structural | Family::Control => k <= d && scale.is_none() && root.is_none(),
        };
        if !ok || k == 0 {
            return Err(Error::Shape(format!(
                "invalid {family} parameters: proj {k}x{d}, scale {:?}, root {:?}",
                scale.as_ref().map(|s| s.len()),
                root.as_ref().map(|r| r.len())
            )));
        }
        Ok(ProbeParams {
            family,
            proj,
            scale,
            root,
        })
    }

    /// Random initialization: projection entries uniform in `±sqrt(6/(d+k))`,
    /// `V` a random orthogonal matrix, scale ones, ROOT vector zeros.
    pub fn init<R: Rng + ?Sized>(family: Family, dim: usize, rank: usize, rng: &mut R) -> Self {
        match family {
            Family::Orthogonal => ProbeParams {
                family,
                proj: random_orthogonal(dim, rng),
                scale: Some(DVector::from_element(dim, 1.0)),
                root: None,
            },
            _ => {
                let k = rank.min(dim);
                let bound = (6.0 / (dim + k) as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let proj = DMatrix::from_fn(k, dim, |_, _| u.sample(rng));
                ProbeParams {
                    family,
                    proj,
                    scale: None,
                    root: (family == Family::Headword).then(|| DVector::zeros(dim)),
                }
            }
        }
    }

    /// Hidden-state width `d`.
    pub fn input_dim(&self) -> usize {
        self.proj.ncols()
    }

    /// Output width `k`.
    pub fn rank(&self) -> usize {
        self.proj.nrows()
    }

    /// The linear map `g`: `B`, or `diag(scale) V` for the orthogonal family.
    pub fn linear_map(&self) -> DMatrix<f64> {
        match &self.scale {
            Some(s) => DMatrix::from_fn(self.proj.nrows(), self.proj.ncols(), |a, b| {
                s[a] * self.proj[(a, b)]
            }),
            None => self.proj.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ProbeParams {
            family: self.family,
            proj: DMatrix::zeros(self.proj.nrows(), self.proj.ncols()),
            scale: self.scale.as_ref().map(|s| DVector::zeros(s.len())),
            root: self.root.as_ref().map(|r| DVector::zeros(r.len())),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t = vec![self.proj.as_slice()];
        t.extend(self.scale.as_ref().map(|s| s.as_slice()));
        t.extend(self.root.as_ref().map(|r| r.as_slice()));
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = vec![self.proj.as_mut_slice()];
        t.extend(self.scale.as_mut().map(|s| s.as_mut_slice()));
        t.extend(self.root.as_mut().map(|r| r.as_mut_slice()));
        t
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `‖VᵀV − I‖_F` for the orthogonal family.
    pub fn orthogonality_defect(&self) -> Option<f64> {
        (self.family == Family::Orthogonal).then(|| {
            let v = &self.proj;
            let g = v.transpose() * v - DMatrix::identity(v.ncols(), v.ncols());
            g.norm()
        })
    }
}

/// Haar-random orthogonal matrix via QR of a Gaussian matrix, with the sign
/// of each column fixed by the diagonal of `R`.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PRB1";
const CHECKPOINT_VERSION: u32 = 1;

/// Trained probe with the configuration and log that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ProbeParams,
    pub config: TrainConfig,
    pub log: TrainingLog,
    /// Free-form provenance (model id, layer, config hash).
    pub meta: std::collections::BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointTrailer {
    config: TrainConfig,
    log: TrainingLog,
    meta: std::collections::BTreeMap<String, String>,
}

impl Checkpoint {
    /// Binary layout (little-endian): magic `PRB1`, `u32` version, `u8`
    /// family, `u32` rows, `u32` cols, `f64` projection (column-major),
    /// `u32` length + `f64` scale, `u32` length + `f64` root, `u32` length +
    /// JSON trailer with config, log and metadata.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(p.family.code());
        out.extend_from_slice(&(p.proj.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.proj.ncols() as u32).to_le_bytes());
        push_f64s(&mut out, p.proj.as_slice());
        for v in [&p.scale, &p.root] {
            let s = v.as_ref().map(|v| v.as_slice()).unwrap_or(&[]);
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            push_f64s(&mut out, s);
        }
        let trailer = serde_json::to_vec(&CheckpointTrailer {
            config: self.config.clone(),
            log: self.log.clone(),
            meta: self.meta.clone(),
        })
        .expect("checkpoint trailer serializes");
        out.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
        out.extend_from_slice(&trailer);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing PRB1 magic bytes".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let family = Family::from_code(r.take(1)?[0])?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let proj = DMatrix::from_column_slice(rows, cols, &r.f64s(rows * cols)?);
        let n = r.u32()? as usize;
        let scale = (n > 0).then(|| r.f64s(n)).transpose()?.map(DVector::from_vec);
        let n = r.u32()? as usize;
        let root = (n > 0).then(|| r.f64s(n)).transpose()?.map(DVector::from_vec);
        let n = r.u32()? as usize;
        let trailer: CheckpointTrailer = serde_json::from_slice(r.take(n)?)
            .map_err(|e| Error::Format(format!("checkpoint trailer: {e}")))?;
        Ok(Checkpoint {
            params: ProbeParams::new(family, proj, scale, root)?,
            config: trailer.config,
            log: trailer.log,
            meta: trailer.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Truncated {
            expected: self.pos + n,
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}
