//! The CVF1 field file format.
//!
//! Layout: the 4 bytes `CVF1`, one UTF-8 JSON header line terminated by
//! `\n`, then the payload of little-endian `f64` values in node order with
//! components interleaved per node.

use crate::error::{Error, Result};
use crate::grid::{GridMap, GridSpec, ScalarField, VectorField};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CVF1";
const MAX_HEADER: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    Scalar(ScalarField),
    Vector(VectorField),
    Map(GridMap),
}

impl FieldData {
    pub fn spec(&self) -> &GridSpec {
        match self {
            FieldData::Scalar(s) => s.spec(),
            FieldData::Vector(v) => v.spec(),
            FieldData::Map(m) => m.spec(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FieldData::Scalar(_) => "scalar",
            FieldData::Vector(_) => "vector",
            FieldData::Map(_) => "map",
        }
    }

    fn components(&self) -> Vec<&[f64]> {
        match self {
            FieldData::Scalar(s) => vec![s.values()],
            FieldData::Vector(v) => v.comps().iter().map(|c| c.as_slice()).collect(),
            FieldData::Map(m) => m.displacement().comps().iter().map(|c| c.as_slice()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvfHeader {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub kind: String,
    /// Payload length in bytes.
    pub payload_len: usize,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub meta: Value,
}

pub fn write_field<W: Write>(w: &mut W, field: &FieldData, meta: Option<&Value>) -> Result<()> {
    let spec = field.spec();
    let comps = field.components();
    let header = CvfHeader {
        dim: spec.dim(),
        sizes: spec.sizes().to_vec(),
        kind: field.kind().to_string(),
        payload_len: 8 * comps.len() * spec.len(),
        meta: meta.cloned().unwrap_or(Value::Null),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::FormatError(e.to_string()))?;
    let mut buf = Vec::with_capacity(header.payload_len + line.len() + 5);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    for i in 0..spec.len() {
        for c in &comps {
            buf.extend_from_slice(&c[i].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(r: R) -> Result<(FieldData, CvfHeader)> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::FormatError("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::FormatError("bad magic".into()));
    }
    let mut line = Vec::new();
    (&mut r)
        .take(MAX_HEADER as u64)
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::FormatError(e.to_string()))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::FormatError("unterminated header".into()));
    }
    line.pop();
    let header: CvfHeader =
        serde_json::from_slice(&line).map_err(|e| Error::FormatError(format!("header: {e}")))?;
    if header.dim != header.sizes.len() {
        return Err(Error::FormatError("dim does not match sizes".into()));
    }
    let spec = GridSpec::new(&header.sizes).map_err(|e| Error::FormatError(e.to_string()))?;
    let ncomp = match header.kind.as_str() {
        "scalar" => 1,
        "vector" | "map" => spec.dim(),
        k => return Err(Error::FormatError(format!("unknown kind {k}"))),
    };
    let expect = 8 * ncomp * spec.len();
    if header.payload_len != expect {
        return Err(Error::FormatError(format!(
            "payload_len {} does not match grid ({expect})",
            header.payload_len
        )));
    }
    let mut payload = vec![0u8; expect];
    r.read_exact(&mut payload).map_err(|_| Error::FormatError("truncated payload".into()))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::FormatError("trailing bytes after payload".into()));
    }
    let mut comps = vec![vec![0.0; spec.len()]; ncomp];
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        comps[k % ncomp][k / ncomp] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    let fmt = |e: Error| Error::FormatError(e.to_string());
    let field = match header.kind.as_str() {
        "scalar" => FieldData::Scalar(ScalarField::new(spec, comps.pop().unwrap()).map_err(fmt)?),
        "vector" => FieldData::Vector(VectorField::new(spec, comps).map_err(fmt)?),
        _ => FieldData::Map(GridMap::new(VectorField::new(spec, comps).map_err(fmt)?).map_err(fmt)?),
    };
    Ok((field, header))
}

pub fn write_field_file(path: &Path, field: &FieldData, meta: Option<&Value>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_field(&mut f, field, meta)
}

pub fn read_field_file(path: &Path) -> Result<(FieldData, CvfHeader)> {
    read_field(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldData {
        let s = GridSpec::new(&[8, 12]).unwrap();
        FieldData::Vector(VectorField::from_fn(&s, |x| [x[0].sin() * 1e-300, 1.0 / 3.0 + x[1], 0.0]))
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let f = sample();
        let mut buf = Vec::new();
        write_field(&mut buf, &f, Some(&serde_json::json!({"note": "x"}))).unwrap();
        let (g, h) = read_field(&buf[..]).unwrap();
        assert_eq!(h.meta["note"], "x");
        let (FieldData::Vector(a), FieldData::Vector(b)) = (&f, &g) else { panic!() };
        for c in 0..2 {
            for (x, y) in a.comp(c).iter().zip(b.comp(c)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample(), None).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_field(&buf[..]), Err(Error::FormatError(_))));
    }

    #[test]
    fn header_mismatch_rejected() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample(), None).unwrap();
        let text = String::from_utf8_lossy(&buf[..60]).to_string();
        let bad = text.replacen("[8,12]", "[8,13]", 1);
        let mut b2 = bad.into_bytes();
        b2.extend_from_slice(&buf[60..]);
        assert!(matches!(read_field(&b2[..]), Err(Error::FormatError(_))));
        let mut b3 = buf.clone();
        b3[0] = b'X';
        assert!(matches!(read_field(&b3[..]), Err(Error::FormatError(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample(), None).unwrap();
        buf.push(0);
        assert!(matches!(read_field(&buf[..]), Err(Error::FormatError(_))));
    }
}
