//! Binary serialization of TT vectors and matrices.
//!
//! Layout: 4-byte magic (`TTRV` / `TTRM`), one endianness tag byte
//! (1 = little-endian), `d` as u64, mode sizes (row then column sizes for
//! matrices), ranks `r_0..r_d`, then core entries as little-endian f64 in
//! C order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::tt::{TtMatrix, TtVector};

const MAGIC_VECTOR: &[u8; 4] = b"TTRV";
const MAGIC_MATRIX: &[u8; 4] = b"TTRM";
const LITTLE_ENDIAN_TAG: u8 = 1;

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_f64_slice<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn write_tt_vector<W: Write>(w: &mut W, x: &TtVector) -> Result<()> {
    w.write_all(MAGIC_VECTOR)?;
    w.write_all(&[LITTLE_ENDIAN_TAG])?;
    let d = x.len();
    write_u64(w, d as u64)?;
    for n in x.dims() {
        write_u64(w, n as u64)?;
    }
    for r in x.ranks() {
        write_u64(w, r as u64)?;
    }
    for c in x.cores() {
        write_f64_slice(w, c.as_slice().expect("standard layout"))?;
    }
    Ok(())
}

pub fn read_tt_vector<R: Read>(r: &mut R) -> Result<TtVector> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC_VECTOR {
        return Err(Error::Format("not a TT vector file".into()));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    if tag[0] != LITTLE_ENDIAN_TAG {
        return Err(Error::Format(format!("unsupported endianness tag {}", tag[0])));
    }
    let d = read_u64(r)? as usize;
    if d == 0 || d > 1 << 20 {
        return Err(Error::Format(format!("implausible order {d}")));
    }
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        dims.push(read_u64(r)? as usize);
    }
    let mut ranks = Vec::with_capacity(d + 1);
    for _ in 0..=d {
        ranks.push(read_u64(r)? as usize);
    }
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let len = ranks[k]
            .checked_mul(dims[k])
            .and_then(|v| v.checked_mul(ranks[k + 1]))
            .ok_or_else(|| Error::Format("core size overflow".into()))?;
        let data = read_f64_vec(r, len)?;
        let core = Array3::from_shape_vec((ranks[k], dims[k], ranks[k + 1]), data)
            .map_err(|e| Error::Format(format!("core shape: {e}")))?;
        cores.push(core);
    }
    TtVector::new(cores)
}

pub fn write_tt_matrix<W: Write>(w: &mut W, a: &TtMatrix) -> Result<()> {
    w.write_all(MAGIC_MATRIX)?;
    w.write_all(&[LITTLE_ENDIAN_TAG])?;
    let d = a.len();
    write_u64(w, d as u64)?;
    for n in a.row_dims() {
        write_u64(w, n as u64)?;
    }
    for n in a.col_dims() {
        write_u64(w, n as u64)?;
    }
    for r in a.ranks() {
        write_u64(w, r as u64)?;
    }
    for c in a.cores() {
        write_f64_slice(w, c.as_slice().expect("standard layout"))?;
    }
    Ok(())
}

pub fn read_tt_matrix<R: Read>(r: &mut R) -> Result<TtMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC_MATRIX {
        return Err(Error::Format("not a TT matrix file".into()));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    if tag[0] != LITTLE_ENDIAN_TAG {
        return Err(Error::Format(format!("unsupported endianness tag {}", tag[0])));
    }
    let d = read_u64(r)? as usize;
    if d == 0 || d > 1 << 20 {
        return Err(Error::Format(format!("implausible order {d}")));
    }
    let mut rows = Vec::with_capacity(d);
    for _ in 0..d {
        rows.push(read_u64(r)? as usize);
    }
    let mut cols = Vec::with_capacity(d);
    for _ in 0..d {
        cols.push(read_u64(r)? as usize);
    }
    let mut ranks = Vec::with_capacity(d + 1);
    for _ in 0..=d {
        ranks.push(read_u64(r)? as usize);
    }
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let len = ranks[k] * rows[k] * cols[k] * ranks[k + 1];
        let data = read_f64_vec(r, len)?;
        let core = Array4::from_shape_vec((ranks[k], rows[k], cols[k], ranks[k + 1]), data)
            .map_err(|e| Error::Format(format!("core shape: {e}")))?;
        cores.push(core);
    }
    TtMatrix::new(cores)
}

pub fn save_tt_vector<P: AsRef<Path>>(path: P, x: &TtVector) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tt_vector(&mut f, x)
}

pub fn load_tt_vector<P: AsRef<Path>>(path: P) -> Result<TtVector> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tt_vector(&mut f)
}

pub fn save_tt_matrix<P: AsRef<Path>>(path: P, a: &TtMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tt_matrix(&mut f, a)
}

pub fn load_tt_matrix<P: AsRef<Path>>(path: P) -> Result<TtMatrix> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tt_matrix(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vector_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = TtVector::random_rank(&[3, 5, 2], 3, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_tt_vector(&mut buf, &x).unwrap();
        let y = read_tt_vector(&mut std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(x.dims(), y.dims());
        assert_eq!(x.ranks(), y.ranks());
        for (a, b) in x.cores().iter().zip(y.cores()) {
            assert_eq!(a.as_slice().unwrap(), b.as_slice().unwrap());
        }
    }

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let f0 = ndarray::Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0f64));
        let f1 = ndarray::Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0f64));
        let a = TtMatrix::from_kron(vec![f0, f1]).unwrap();
        let mut buf = Vec::new();
        write_tt_matrix(&mut buf, &a).unwrap();
        let b = read_tt_matrix(&mut std::io::Cursor::new(&buf)).unwrap();
        for (x, y) in a.cores().iter().zip(b.cores()) {
            assert_eq!(x.as_slice().unwrap(), y.as_slice().unwrap());
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        let buf = b"NOPE\x01".to_vec();
        assert!(read_tt_vector(&mut std::io::Cursor::new(&buf)).is_err());
    }
}
