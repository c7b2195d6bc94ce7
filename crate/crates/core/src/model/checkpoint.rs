//! Flat binary container of named matrices.
//!
//! The file is a sequence of records, read until end of file:
//!
//! | field       | encoding                          |
//! |-------------|-----------------------------------|
//! | name length | `u64`, little-endian              |
//! | name        | UTF-8 bytes                       |
//! | rows        | `u64`, little-endian              |
//! | cols        | `u64`, little-endian              |
//! | values      | `rows * cols` × `f64` LE, row-major |

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub fn write_named<W: Write>(mut w: W, entries: &[(&str, &Matrix)]) -> io::Result<()> {
    for (name, m) in entries {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u64(bytes: &[u8], pos: &mut usize) -> Option<u64> {
    let b = bytes.get(*pos..*pos + 8)?;
    *pos += 8;
    Some(u64::from_le_bytes(b.try_into().ok()?))
}

pub fn read_named<R: Read>(mut r: R) -> Result<Vec<(String, Matrix)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let truncated = || Error::Contract("checkpoint is truncated".into());
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let len = read_u64(&bytes, &mut pos).ok_or_else(truncated)? as usize;
        let name = bytes.get(pos..pos + len).ok_or_else(truncated)?;
        let name = String::from_utf8(name.to_vec())
            .map_err(|_| Error::Contract("checkpoint name is not UTF-8".into()))?;
        pos += len;
        let rows = read_u64(&bytes, &mut pos).ok_or_else(truncated)? as usize;
        let cols = read_u64(&bytes, &mut pos).ok_or_else(truncated)? as usize;
        let count = rows.checked_mul(cols).ok_or_else(truncated)?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_bits(read_u64(&bytes, &mut pos).ok_or_else(truncated)?));
        }
        out.push((name, Matrix::from_vec(rows, cols, values)?));
    }
    Ok(out)
}

pub fn save(path: &Path, entries: &[(&str, &Matrix)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_named(io::BufWriter::new(file), entries).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_named(io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let m = Matrix::from_rows(&[[1.5, -2.0]]).unwrap();
        let mut buf = Vec::new();
        write_named(&mut buf, &[("w", &m)]).unwrap();
        let mut want = Vec::new();
        want.extend_from_slice(&1u64.to_le_bytes());
        want.push(b'w');
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1.5f64.to_le_bytes());
        want.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(buf, want);
        let back = read_named(buf.as_slice()).unwrap();
        assert_eq!(back, vec![("w".to_string(), m)]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let m = Matrix::ones(2, 2);
        let mut buf = Vec::new();
        write_named(&mut buf, &[("a", &m)]).unwrap();
        buf.pop();
        assert!(read_named(buf.as_slice()).is_err());
    }
}
