//! Binary file formats.
//!
//! `FCPT` v1: magic, `u8` version, `u8` order, order × `u64` sizes, then the
//! values as little-endian `f64` in first-mode-fastest order.
//!
//! `FCPK` v1: magic, `u8` version, `u8` order, `u32` rank, order × `u64`
//! sizes, rank × `f64` weights, then each factor column-major in mode order.

use super::{DenseTensor, KruskalTensor};
use crate::error::{FcpError, Result};
use nalgebra::DMatrix;
use std::io::{Read, Write};

const TENSOR_MAGIC: &[u8; 4] = b"FCPT";
const KRUSKAL_MAGIC: &[u8; 4] = b"FCPK";
const VERSION: u8 = 1;

fn format_err(msg: impl Into<String>) -> FcpError {
    FcpError::Format(msg.into())
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err("unexpected end of file"),
        _ => FcpError::Io(e),
    })?;
    Ok(buf)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        out.push(f64::from_le_bytes(read_array::<8>(r)?));
    }
    Ok(out)
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<usize> {
    let m = read_array::<4>(r)?;
    if &m != magic {
        return Err(format_err(format!(
            "bad magic {:?}, expected {}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let [version] = read_array::<1>(r)?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let [order] = read_array::<1>(r)?;
    if order == 0 {
        return Err(format_err("order must be positive"));
    }
    Ok(order as usize)
}

fn read_sizes(r: &mut impl Read, order: usize) -> Result<Vec<usize>> {
    (0..order)
        .map(|_| {
            let v = u64::from_le_bytes(read_array::<8>(r)?);
            usize::try_from(v).map_err(|_| format_err("mode size overflows"))
        })
        .collect()
}

fn ensure_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(format_err("trailing bytes after payload")),
    }
}

pub fn write_tensor(w: &mut impl Write, t: &DenseTensor) -> Result<()> {
    let order = u8::try_from(t.order()).map_err(|_| format_err("order above 255"))?;
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&[VERSION, order])?;
    for &n in t.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<DenseTensor> {
    let order = read_header(r, TENSOR_MAGIC)?;
    let shape = read_sizes(r, order)?;
    let len = super::checked_volume(&shape)?;
    let data = read_f64s(r, len)?;
    ensure_eof(r)?;
    DenseTensor::new(shape, data).map_err(|e| format_err(e.to_string()))
}

pub fn write_kruskal(w: &mut impl Write, k: &KruskalTensor) -> Result<()> {
    let order = u8::try_from(k.order()).map_err(|_| format_err("order above 255"))?;
    let rank = u32::try_from(k.rank()).map_err(|_| format_err("rank above u32"))?;
    w.write_all(KRUSKAL_MAGIC)?;
    w.write_all(&[VERSION, order])?;
    w.write_all(&rank.to_le_bytes())?;
    for n in k.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for x in k.weights() {
        w.write_all(&x.to_le_bytes())?;
    }
    for f in k.factors() {
        for x in f.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_kruskal(r: &mut impl Read) -> Result<KruskalTensor> {
    let order = read_header(r, KRUSKAL_MAGIC)?;
    let rank = u32::from_le_bytes(read_array::<4>(r)?) as usize;
    let shape = read_sizes(r, order)?;
    let weights = read_f64s(r, rank)?;
    let mut factors = Vec::with_capacity(order);
    for &i in &shape {
        let len = i.checked_mul(rank).ok_or_else(|| format_err("factor size overflows"))?;
        factors.push(DMatrix::from_vec(i, rank, read_f64s(r, len)?));
    }
    ensure_eof(r)?;
    KruskalTensor::new(weights, factors).map_err(|e| format_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_header_layout() {
        let t = DenseTensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"FCPT");
        assert_eq!(buf[4], 1);
        assert_eq!(buf[5], 2);
        assert_eq!(&buf[6..14], &2u64.to_le_bytes());
        assert_eq!(&buf[22..30], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 6 + 16 + 16);
        assert_eq!(read_tensor(&mut buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn kruskal_round_trip() {
        let k = KruskalTensor::new(
            vec![2.0, 1.0],
            vec![DMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]), DMatrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.])],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_kruskal(&mut buf, &k).unwrap();
        assert_eq!(&buf[..4], b"FCPK");
        assert_eq!(&buf[6..10], &2u32.to_le_bytes());
        assert_eq!(read_kruskal(&mut buf.as_slice()).unwrap(), k);
    }

    #[test]
    fn rejects_corrupt_input() {
        let t = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(&mut bad.as_slice()), Err(FcpError::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_tensor(&mut &short[..]), Err(FcpError::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_tensor(&mut long.as_slice()).is_err());
        let mut ver = buf;
        ver[4] = 9;
        assert!(read_tensor(&mut ver.as_slice()).is_err());
    }
}
