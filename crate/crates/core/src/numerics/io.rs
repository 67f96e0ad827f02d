//! Binary matrix serialization.
//!
//! Matrix blob, all integers little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `PPMX`                            |
//! | 2     | format version (1)                      |
//! | 1     | precision in bytes per value (8 or 4)   |
//! | 1     | reserved, 0                             |
//! | 8     | rows (u64)                              |
//! | 8     | cols (u64)                              |
//! | n     | rows·cols IEEE-754 values, row-major    |
//!
//! Archive (named collection of matrices, used by checkpoints):
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `PPAR`                            |
//! | 2     | format version (1)                      |
//! | 4     | entry count (u32)                       |
//! | ...   | per entry: name length (u16), UTF-8 name, matrix blob |

use std::io::{Read, Write};

use super::matrix::Matrix;
use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"PPMX";
const ARCHIVE_MAGIC: &[u8; 4] = b"PPAR";
const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    fn width(self) -> u8 {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

pub fn write_matrix<W: Write>(w: &mut W, m: &Matrix, precision: Precision) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[precision.width(), 0])?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.data().len() * precision.width() as usize);
    match precision {
        Precision::F64 => m.data().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        Precision::F32 => m
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Matrix> {
    if &read_exact::<4, _>(r)? != MATRIX_MAGIC {
        return Err(Error::Format("bad matrix magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported matrix version {version}")));
    }
    let [width, _] = read_exact::<2, _>(r)?;
    let rows = u64::from_le_bytes(read_exact(r)?) as usize;
    let cols = u64::from_le_bytes(read_exact(r)?) as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
    let mut data = Vec::with_capacity(n);
    match width {
        8 => {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            data.extend(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
        }
        4 => {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            data.extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64));
        }
        w => return Err(Error::Format(format!("unsupported precision width {w}"))),
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn write_archive<W: Write>(w: &mut W, entries: &[(String, &Matrix)]) -> Result<()> {
    w.write_all(ARCHIVE_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, m) in entries {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| Error::Format("entry name too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        write_matrix(w, m, Precision::F64)?;
    }
    Ok(())
}

pub fn read_archive<R: Read>(r: &mut R) -> Result<Vec<(String, Matrix)>> {
    if &read_exact::<4, _>(r)? != ARCHIVE_MAGIC {
        return Err(Error::Format("bad archive magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported archive version {version}")));
    }
    let count = u32::from_le_bytes(read_exact(r)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("entry name not UTF-8".into()))?;
        out.push((name, read_matrix(r)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_stable() {
        let m = Matrix::from_rows(&[vec![1.0, -2.5]]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, Precision::F64).unwrap();
        assert_eq!(&buf[..4], b"PPMX");
        assert_eq!(&buf[4..8], &[1, 0, 8, 0]);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 24 + 16);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), -2.5);
    }

    #[test]
    fn f32_blobs_are_upcast() {
        let m = Matrix::from_rows(&[vec![0.5, 1.25], vec![3.0, -4.0]]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, Precision::F32).unwrap();
        assert_eq!(read_matrix(&mut buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn truncated_input_is_an_error() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &Matrix::zeros(3, 3), Precision::F64).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_matrix(&mut buf.as_slice()).is_err());
        assert!(read_matrix(&mut &b"XXXX"[..]).is_err());
    }

    proptest! {
        #[test]
        fn archive_round_trip_is_bit_exact(
            rows in 0usize..5,
            cols in 1usize..5,
            seed in proptest::collection::vec(-1e6f64..1e6, 25),
        ) {
            let m = Matrix::from_fn(rows, cols, |r, c| seed[r * 5 + c]);
            let entries = vec![("layer.0.w".to_string(), &m), ("b".to_string(), &m)];
            let mut buf = Vec::new();
            write_archive(&mut buf, &entries).unwrap();
            let back = read_archive(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 2);
            prop_assert_eq!(&back[0].0, "layer.0.w");
            for (a, b) in back[0].1.data().iter().zip(m.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
