//! Tensor file formats.
//!
//! Binary layout, all little-endian: the magic bytes `HEMI`, a `u32` rank,
//! `rank` × `u64` extents, then the `f64` payload in row-major order.
//! The TSV form writes one matrix row per line.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"HEMI";

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.rank() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(mut bytes: &[u8]) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(&mut bytes, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data("tensor file lacks HEMI header".into()));
    }
    let mut word = [0u8; 4];
    read_exact(&mut bytes, &mut word)?;
    let rank = u32::from_le_bytes(word) as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut long = [0u8; 8];
    for _ in 0..rank {
        read_exact(&mut bytes, &mut long)?;
        shape.push(u64::from_le_bytes(long) as usize);
    }
    let n: usize = shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(Error::Data(format!(
            "tensor payload has {} bytes, shape {:?} needs {}",
            bytes.len(),
            shape,
            n * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data)
}

fn read_exact(bytes: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    bytes
        .read_exact(buf)
        .map_err(|_| Error::Data("truncated tensor file".into()))
}

pub fn save(t: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

/// Writes a tensor as TSV, one row per line. Values use Rust's shortest
/// round-trip formatting, so reading the text back is lossless.
pub fn write_tsv<W: Write>(t: &Tensor, mut w: W) -> std::io::Result<()> {
    let cols = t.cols().max(1);
    for row in t.data().chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join("\t"))?;
    }
    Ok(())
}

pub fn save_tsv(t: &Tensor, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_tsv(t, &mut buf).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads a TSV matrix written by [`write_tsv`].
pub fn load_tsv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}
