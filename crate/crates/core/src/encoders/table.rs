use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Caption, EncoderError, TextEncoder};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const DTYPE_F32: u8 = 0x01;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an embedding table (bad magic)")]
    Magic,
    #[error("unsupported dtype tag {0:#04x}")]
    Dtype(u8),
    #[error("embedding data truncated: expected {expected} floats")]
    Truncated { expected: usize },
    #[error("sidecar manifest: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("{0}")]
    Mismatch(String),
    #[error("duplicate caption id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    encoder_name: String,
    ids: Vec<String>,
}

/// Id-indexed matrix of caption vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    encoder_name: String,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(
        encoder_name: impl Into<String>,
        dim: usize,
        ids: Vec<String>,
        data: Vec<f32>,
    ) -> Result<EmbeddingTable, TableError> {
        if data.len() != ids.len() * dim {
            return Err(TableError::Mismatch(format!(
                "{} ids × {dim} dims needs {} floats, got {}",
                ids.len(),
                ids.len() * dim,
                data.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(TableError::DuplicateId(id.clone()));
            }
        }
        Ok(EmbeddingTable {
            encoder_name: encoder_name.into(),
            dim,
            ids,
            data,
            index,
        })
    }

    /// Encodes every caption with `encoder`.
    pub fn from_encoder<E: TextEncoder + ?Sized>(
        encoder: &E,
        captions: &[Caption],
    ) -> Result<EmbeddingTable, EncoderError> {
        let dim = encoder.dim();
        let rows = encoder.encode_all(captions)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(EncoderError::Dim {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        let ids = captions.iter().map(|c| c.id.to_string()).collect();
        Ok(EmbeddingTable::new(encoder.name(), dim, ids, data)?)
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&[DTYPE_F32])?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    /// Reads the binary matrix; returns `(count, dim, data)`.
    pub fn read_binary<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f32>), TableError> {
        let mut head = [0u8; 13];
        r.read_exact(&mut head).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => TableError::Magic,
            _ => TableError::Io(e),
        })?;
        if &head[..4] != MAGIC {
            return Err(TableError::Magic);
        }
        let count = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        if head[12] != DTYPE_F32 {
            return Err(TableError::Dtype(head[12]));
        }
        let expected = count * dim;
        let mut bytes = Vec::with_capacity(expected * 4);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != expected * 4 {
            return Err(TableError::Truncated { expected });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((count, dim, data))
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes `path` and `path.json`, each via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        let mut bin = Vec::new();
        self.write_binary(&mut bin)?;
        atomic_write(path, &bin)?;
        let sidecar = Sidecar {
            encoder_name: self.encoder_name.clone(),
            ids: self.ids.clone(),
        };
        atomic_write(
            &Self::sidecar_path(path),
            &serde_json::to_vec_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable, TableError> {
        let (count, dim, data) = Self::read_binary(io::BufReader::new(fs::File::open(path)?))?;
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(Self::sidecar_path(path))?)?;
        if sidecar.ids.len() != count {
            return Err(TableError::Mismatch(format!(
                "binary has {count} rows but sidecar lists {} ids",
                sidecar.ids.len()
            )));
        }
        EmbeddingTable::new(sidecar.encoder_name, dim, sidecar.ids, data)
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Looks captions up by id in a precomputed table.
#[derive(Debug, Clone)]
pub struct FileBackedEncoder {
    table: EmbeddingTable,
}

impl FileBackedEncoder {
    pub fn new(table: EmbeddingTable) -> FileBackedEncoder {
        FileBackedEncoder { table }
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }
}

impl TextEncoder for FileBackedEncoder {
    fn name(&self) -> String {
        self.table.encoder_name.clone()
    }

    fn dim(&self) -> usize {
        self.table.dim
    }

    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError> {
        self.table
            .get(caption.id)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| EncoderError::MissingId(caption.id.to_string()))
    }
}
