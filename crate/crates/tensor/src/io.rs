//! Binary tensor files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"CDTI"            magic
//! u8                 rank
//! u64 * rank         extents, outermost first
//! u8                 0 = real, 1 = complex
//! (f64, f64) * numel interleaved (re, im), row-major
//! ```
//!
//! Real tensors are written with zero imaginary parts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Result, Shape, Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"CDTI";
const FLAG_REAL: u8 = 0;
const FLAG_COMPLEX: u8 = 1;

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    let rank = u8::try_from(t.shape().rank())
        .map_err(|_| TensorError::Format(format!("rank {} too large", t.shape().rank())))?;
    w.write_all(MAGIC)?;
    w.write_all(&[rank])?;
    for &d in t.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&[if t.is_real() { FLAG_REAL } else { FLAG_COMPLEX }])?;
    let mut buf = Vec::with_capacity(16 * t.numel());
    let im = t.im();
    for (i, re) in t.re().iter().enumerate() {
        buf.extend_from_slice(&re.to_le_bytes());
        let v = im.map_or(0.0, |im| im[i]);
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    let rank = byte[0] as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut word = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut word)?;
        let d = u64::from_le_bytes(word);
        dims.push(
            usize::try_from(d).map_err(|_| TensorError::Format(format!("extent {d} too large")))?,
        );
    }
    r.read_exact(&mut byte)?;
    let flag = byte[0];
    if flag != FLAG_REAL && flag != FLAG_COMPLEX {
        return Err(TensorError::Format(format!("unknown type flag {flag}")));
    }
    let shape = Shape::new(dims);
    let n = shape.numel();
    let mut raw = vec![0u8; 16 * n];
    r.read_exact(&mut raw)?;
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for pair in raw.chunks_exact(16) {
        re.push(f64::from_le_bytes(pair[..8].try_into().unwrap()));
        im.push(f64::from_le_bytes(pair[8..].try_into().unwrap()));
    }
    if flag == FLAG_REAL {
        if im.iter().any(|&v| v != 0.0) {
            return Err(TensorError::Format(
                "real-flagged tensor has nonzero imaginary values".into(),
            ));
        }
        Tensor::from_parts(shape, re, None)
    } else {
        Tensor::from_parts(shape, re, Some(im))
    }
}

pub fn save(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::complex([2], vec![1.0, 2.0], vec![-1.0, 0.5]).unwrap();
        let mut bytes = Vec::new();
        write_tensor(&mut bytes, &t).unwrap();
        assert_eq!(&bytes[..4], b"CDTI");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..13], &2u64.to_le_bytes());
        assert_eq!(bytes[13], 1);
        assert_eq!(&bytes[14..22], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[22..30], &(-1.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 14 + 32);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_tensor(&b"XXXX\x00\x00"[..]).is_err());
        let mut bytes = Vec::new();
        write_tensor(&mut bytes, &Tensor::zeros([3])).unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(read_tensor(&bytes[..]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cdti");
        let t = Tensor::real([2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        save(&path, &t).unwrap();
        let back = load(&path).unwrap();
        assert!(back.is_real());
        assert!(back.bit_eq(&t));
    }

    proptest! {
        #[test]
        fn round_trip_preserves_bits(
            dims in prop::collection::vec(1usize..4, 0..4),
            complex in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let shape = Shape::new(dims);
            let n = shape.numel();
            let vals: Vec<f64> = (0..n).map(|i| ((seed as f64) * 1e-9 + i as f64).sin()).collect();
            let t = if complex {
                Tensor::from_parts(shape, vals.clone(), Some(vals.iter().map(|v| -v * 3.0).collect())).unwrap()
            } else {
                Tensor::from_parts(shape, vals, None).unwrap()
            };
            let mut bytes = Vec::new();
            write_tensor(&mut bytes, &t).unwrap();
            let back = read_tensor(&bytes[..]).unwrap();
            prop_assert!(back.bit_eq(&t));
        }
    }
}
