//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic "TEMPCKPT" | format_version u32 | header_len u32 | header (JSON, header_len bytes)
//! entry_count u32
//! per entry: name_len u32 | name (UTF-8) | ndim u32 | dims u64 * ndim | values f64 * prod(dims)
//! ```

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"TEMPCKPT";
pub const FORMAT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<T: Real, H: Serialize, W: Write>(
    mut w: W,
    header: &H,
    params: &ParamStore<T>,
) -> Result<()> {
    let header = serde_json::to_vec(header)?;
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(header.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header).map_err(io_err)?;
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, t) in params {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(t.values.len() * 8);
        for v in &t.values {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<T: Real, H: DeserializeOwned, R: Read>(mut r: R) -> Result<(H, ParamStore<T>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format_version {version}")));
    }
    let header_len = read_u32(&mut r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header).map_err(io_err)?;
    let header: H = serde_json::from_slice(&header)?;
    let count = read_u32(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw).map_err(io_err)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        let t = Tensor::new(shape, values)
            .map_err(|e| Error::Checkpoint(format!("entry {name}: {e}")))?
            .with_grad();
        params.insert(name, t);
    }
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn roundtrip_is_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamStore::<f64>::new();
        p.insert("a.w".into(), Tensor::xavier(3, 4, &mut rng));
        p.insert("a.b".into(), Tensor::new(vec![4], vec![0.1, -0.0, 1e-300, f64::MAX]).unwrap());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &serde_json::json!({"d_model": 4}), &p).unwrap();
        let (h, q): (serde_json::Value, ParamStore<f64>) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(h["d_model"], 4);
        assert_eq!(q.keys().collect::<Vec<_>>(), p.keys().collect::<Vec<_>>());
        for (k, t) in &p {
            let bits_a: Vec<u64> = t.values.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = q[k].values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
            assert_eq!(t.shape, q[k].shape);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint::<f64, serde_json::Value, _>(&b"NOTACKPT...."[..]).is_err());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &0u8, &ParamStore::<f64>::new()).unwrap();
        buf[8] = 9;
        assert!(read_checkpoint::<f64, u8, _>(buf.as_slice()).is_err());
    }
}
