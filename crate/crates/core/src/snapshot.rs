//! Binary dump of a [`DiagonalRecord`].
//!
//! Little-endian: `b"W2PT"`, version `u32`, `Nx u32`, `n u64`, `dt f64`,
//! `dx f64`, then the slices `(n,n), (n,n+1), (n+1,n), (n+1,n+1)`, each row-major
//! with interleaved real and imaginary parts.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::evolution::DiagonalRecord;
use crate::C64;

pub const MAGIC: &[u8; 4] = b"W2PT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

pub fn write_record(mut out: impl Write, record: &DiagonalRecord) -> Result<()> {
    record.validate()?;
    let nx = record.nx();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * nx * nx * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&u32::try_from(nx).map_err(|_| invalid("grid too large for snapshot"))?.to_le_bytes());
    buf.extend_from_slice(&(record.n as u64).to_le_bytes());
    buf.extend_from_slice(&record.dt.to_le_bytes());
    buf.extend_from_slice(&record.dx.to_le_bytes());
    for (_, s) in record.slices() {
        for v in s.as_standard_layout().iter() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_record(mut input: impl Read) -> Result<DiagonalRecord> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(invalid("not a W2PT snapshot"));
    }
    let word = |a: usize| u32::from_le_bytes(header[a..a + 4].try_into().unwrap());
    let wide = |a: usize| -> [u8; 8] { header[a..a + 8].try_into().unwrap() };
    let version = word(4);
    if version != VERSION {
        return Err(invalid(format!("unsupported snapshot version {version}")));
    }
    let nx = word(8) as usize;
    let n = u64::from_le_bytes(wide(12)) as usize;
    let dt = f64::from_le_bytes(wide(20));
    let dx = f64::from_le_bytes(wide(28));
    let mut body = vec![0u8; 4 * nx * nx * 16];
    input.read_exact(&mut body)?;
    let mut chunks = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut slice = || {
        let data: Vec<C64> = (0..nx * nx).map(|_| C64::new(chunks.next().unwrap(), chunks.next().unwrap())).collect();
        Array2::from_shape_vec((nx, nx), data).unwrap()
    };
    Ok(DiagonalRecord { n, dt, dx, w_nn: slice(), w_nn1: slice(), w_n1n: slice(), w_n1n1: slice() })
}
