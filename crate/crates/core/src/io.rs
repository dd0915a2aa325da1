//! `.dtf` tensor container: one UTF-8 JSON header line
//! `{"dims":[...],"dtype":"f64","order":"col"}` followed by the raw
//! little-endian `f64` payload in layout order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::tensor::DenseTensor;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: Vec<usize>,
    dtype: String,
    order: String,
}

pub fn encode(t: &DenseTensor) -> Vec<u8> {
    let header = Header { dims: t.dims().to_vec(), dtype: "f64".into(), order: "col".into() };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(t.len() * 8);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(mut reader: impl BufRead) -> Result<DenseTensor> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header terminator".into()));
    }
    line.pop();
    let header: Header =
        serde_json::from_slice(&line).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.dtype != "f64" || header.order != "col" {
        return Err(Error::Format(format!(
            "unsupported dtype/order {}/{}",
            header.dtype, header.order
        )));
    }
    let len: usize = header.dims.iter().product();
    let mut payload = Vec::with_capacity(len * 8);
    reader.read_to_end(&mut payload)?;
    if payload.len() != len * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            len * 8
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseTensor::new(header.dims, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    decode(BufReader::new(fs::File::open(path)?))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_tensor(path, &DenseTensor::from_matrix(m))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_tensor(path)?.to_matrix()
}
