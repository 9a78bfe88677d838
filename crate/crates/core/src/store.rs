//! Binary embedding store (`EMB1`).
//!
//! Layout, all integers little-endian, all floats IEEE-754 binary32:
//!
//! ```text
//! b"EMB1" | version: u16 = 1 | header_len: u32 | header: UTF-8 JSON
//! then `count` records:
//!   instance: u32 | role: u8 (0..=4) | [TOKEN only: n_tokens: u32] | floats
//! ```
//!
//! A pooled record carries `dim` floats, a token record `n_tokens * dim`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DEFAULT_SEPARATOR;
use crate::error::{Error, Result};
use crate::tensor::{mean_pool, TokenMatrix, Vector};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u16 = 1;

/// Which text an embedding encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmbeddingRole {
    /// `o1 + o2`
    ObsPair,
    H1,
    H2,
    /// `o1 + o2 + h1`
    ObsH1,
    /// `o1 + o2 + h2`
    ObsH2,
}

impl EmbeddingRole {
    pub const ALL: [EmbeddingRole; 5] = [
        EmbeddingRole::ObsPair,
        EmbeddingRole::H1,
        EmbeddingRole::H2,
        EmbeddingRole::ObsH1,
        EmbeddingRole::ObsH2,
    ];
    pub const SIMILARITY: [EmbeddingRole; 3] = [EmbeddingRole::ObsPair, EmbeddingRole::H1, EmbeddingRole::H2];
    pub const CLASSIFICATION: [EmbeddingRole; 2] = [EmbeddingRole::ObsH1, EmbeddingRole::ObsH2];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }
}

impl fmt::Display for EmbeddingRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            EmbeddingRole::ObsPair => "OBS_PAIR",
            EmbeddingRole::H1 => "H1",
            EmbeddingRole::H2 => "H2",
            EmbeddingRole::ObsH1 => "OBS_H1",
            EmbeddingRole::ObsH2 => "OBS_H2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StoreKind {
    Pooled,
    Token,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Pooled(Vector),
    Token(TokenMatrix),
}

impl Embedding {
    fn kind(&self) -> StoreKind {
        match self {
            Embedding::Pooled(_) => StoreKind::Pooled,
            Embedding::Token(_) => StoreKind::Token,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Embedding::Pooled(v) => v.dim(),
            Embedding::Token(m) => m.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreHeader {
    model_id: String,
    dim: usize,
    kind: StoreKind,
    count: usize,
    separator: String,
    created_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncated: Option<u64>,
}

/// Per-model collection of role-tagged embeddings, all of one dimension and kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub model_id: String,
    pub separator: String,
    pub created_by: String,
    /// Number of texts the extractor truncated to the encoder's max length, if it reported one.
    pub truncated: Option<u64>,
    dim: usize,
    kind: StoreKind,
    records: BTreeMap<(u32, EmbeddingRole), Embedding>,
}

impl EmbeddingStore {
    pub fn new(model_id: impl Into<String>, dim: usize, kind: StoreKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidStore("dim must be >= 1".into()));
        }
        Ok(EmbeddingStore {
            model_id: model_id.into(),
            separator: DEFAULT_SEPARATOR.into(),
            created_by: concat!("abduct-rank ", env!("CARGO_PKG_VERSION")).into(),
            truncated: None,
            dim,
            kind,
            records: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, instance: u32, role: EmbeddingRole, embedding: Embedding) -> Result<()> {
        if embedding.kind() != self.kind {
            return Err(Error::InvalidStore(format!(
                "{:?} record inserted into a {:?} store",
                embedding.kind(),
                self.kind
            )));
        }
        if embedding.dim() != self.dim {
            return Err(Error::InvalidStore(format!(
                "record for instance {instance} role {role} has dim {}, store dim is {}",
                embedding.dim(),
                self.dim
            )));
        }
        if self.records.insert((instance, role), embedding).is_some() {
            return Err(Error::InvalidStore(format!(
                "duplicate record for instance {instance} role {role}"
            )));
        }
        Ok(())
    }

    pub fn insert_pooled(&mut self, instance: u32, role: EmbeddingRole, values: Vec<f32>) -> Result<()> {
        self.insert(instance, role, Embedding::Pooled(Vector::new(values)?))
    }

    pub fn get(&self, instance: u32, role: EmbeddingRole) -> Option<&Embedding> {
        self.records.get(&(instance, role))
    }

    /// Pooled vector for `(instance, role)`, or a `MissingRole` error.
    pub fn pooled(&self, instance: u32, role: EmbeddingRole) -> Result<&Vector> {
        match self.records.get(&(instance, role)) {
            Some(Embedding::Pooled(v)) => Ok(v),
            Some(Embedding::Token(_)) => Err(Error::InvalidStore(
                "token-level store must be pooled before evaluation".into(),
            )),
            None => Err(Error::MissingRole { instance, role }),
        }
    }

    /// Checks that instances `0..n` all carry `roles`.
    pub fn require_roles(&self, n: usize, roles: &[EmbeddingRole]) -> Result<()> {
        for i in 0..n {
            let instance = index_u32(i)?;
            for &role in roles {
                if !self.records.contains_key(&(instance, role)) {
                    return Err(Error::MissingRole { instance, role });
                }
            }
        }
        Ok(())
    }

    /// Number of distinct instance indices present.
    pub fn instance_count(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for &(i, _) in self.records.keys() {
            if last != Some(i) {
                n += 1;
                last = Some(i);
            }
        }
        n
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, EmbeddingRole, &Embedding)> {
        self.records.iter().map(|(&(i, r), e)| (i, r, e))
    }

    fn header(&self) -> StoreHeader {
        StoreHeader {
            model_id: self.model_id.clone(),
            dim: self.dim,
            kind: self.kind,
            count: self.records.len(),
            separator: self.separator.clone(),
            created_by: self.created_by.clone(),
            truncated: self.truncated,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for (&(instance, role), embedding) in &self.records {
            w.write_all(&instance.to_le_bytes())?;
            w.write_all(&[role.tag()])?;
            let floats = match embedding {
                Embedding::Pooled(v) => v.as_slice(),
                Embedding::Token(m) => {
                    w.write_all(&(m.n_tokens() as u32).to_le_bytes())?;
                    m.as_flat()
                }
            };
            for f in floats {
                w.write_all(&f.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let io_err = |e: io::Error| Error::Header(e.to_string());
        let mut magic = [0u8; 4];
        if read_full(&mut r, &mut magic).map_err(io_err)? < 4 || magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let mut buf2 = [0u8; 2];
        if read_full(&mut r, &mut buf2).map_err(io_err)? < 2 {
            return Err(Error::Header("file ends inside the version field".into()));
        }
        let version = u16::from_le_bytes(buf2);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut buf4 = [0u8; 4];
        if read_full(&mut r, &mut buf4).map_err(io_err)? < 4 {
            return Err(Error::Header("file ends inside the header length".into()));
        }
        let mut header_bytes = vec![0u8; u32::from_le_bytes(buf4) as usize];
        if read_full(&mut r, &mut header_bytes).map_err(io_err)? < header_bytes.len() {
            return Err(Error::Header("file ends inside the JSON header".into()));
        }
        let header: StoreHeader = serde_json::from_slice(&header_bytes).map_err(|e| Error::Header(e.to_string()))?;
        let mut store =
            EmbeddingStore::new(header.model_id, header.dim, header.kind).map_err(|e| Error::Header(e.to_string()))?;
        store.separator = header.separator;
        store.created_by = header.created_by;
        store.truncated = header.truncated;

        let dim = header.dim;
        for k in 0..header.count {
            let mut prefix = [0u8; 5];
            match read_full(&mut r, &mut prefix).map_err(io_err)? {
                0 => {
                    return Err(Error::CountMismatch {
                        header: header.count,
                        found: k.to_string(),
                    })
                }
                5 => {}
                _ => return Err(Error::Truncated(k)),
            }
            let instance = u32::from_le_bytes(prefix[..4].try_into().unwrap());
            let role = EmbeddingRole::from_tag(prefix[4])
                .ok_or_else(|| Error::InvalidStore(format!("record {k} has unknown role tag {}", prefix[4])))?;
            let n_tokens = match header.kind {
                StoreKind::Pooled => 1,
                StoreKind::Token => {
                    if read_full(&mut r, &mut buf4).map_err(io_err)? < 4 {
                        return Err(Error::Truncated(k));
                    }
                    let n = u32::from_le_bytes(buf4) as usize;
                    if n == 0 {
                        return Err(Error::InvalidStore(format!("record {k} has zero tokens")));
                    }
                    n
                }
            };
            let mut raw = vec![0u8; n_tokens * dim * 4];
            if read_full(&mut r, &mut raw).map_err(io_err)? < raw.len() {
                return Err(Error::Truncated(k));
            }
            let floats: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if floats.iter().any(|f| !f.is_finite()) {
                return Err(Error::NonFinite { instance, role });
            }
            let embedding = match header.kind {
                StoreKind::Pooled => Embedding::Pooled(Vector::new(floats)?),
                StoreKind::Token => Embedding::Token(TokenMatrix::from_flat(floats, n_tokens, dim)?),
            };
            store.insert(instance, role, embedding)?;
        }
        let mut extra = [0u8; 1];
        if read_full(&mut r, &mut extra).map_err(io_err)? > 0 {
            return Err(Error::CountMismatch {
                header: header.count,
                found: format!("more than {}", header.count),
            });
        }
        Ok(store)
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub(crate) fn index_u32(i: usize) -> Result<u32> {
    u32::try_from(i).map_err(|_| Error::InvalidStore(format!("instance index {i} exceeds u32")))
}

pub fn write_embedding_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    store.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_embedding_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::read_from(BufReader::new(file))
}

/// Replaces every token matrix with its mean-pooled vector.
pub fn pool_store(token_store: &EmbeddingStore) -> Result<EmbeddingStore> {
    if token_store.kind != StoreKind::Token {
        return Err(Error::InvalidStore("pool_store expects a TOKEN store".into()));
    }
    let mut pooled = EmbeddingStore {
        kind: StoreKind::Pooled,
        records: BTreeMap::new(),
        ..token_store.clone_empty()
    };
    for (&key, embedding) in &token_store.records {
        let Embedding::Token(m) = embedding else {
            unreachable!("store kind is checked on insert")
        };
        pooled.records.insert(key, Embedding::Pooled(mean_pool(m)?));
    }
    Ok(pooled)
}

impl EmbeddingStore {
    fn clone_empty(&self) -> Self {
        EmbeddingStore {
            model_id: self.model_id.clone(),
            separator: self.separator.clone(),
            created_by: self.created_by.clone(),
            truncated: self.truncated,
            dim: self.dim,
            kind: self.kind,
            records: BTreeMap::new(),
        }
    }
}
