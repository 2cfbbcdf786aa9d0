//! Binary snapshot format.
//!
//! Layout: magic "RCSF", version u32, n u32, period f64, field count u32,
//! representation tag u8 (0 physical, 1 spectral), then each field as n^3
//! interleaved (re, im) f64 pairs, x index fastest, all little-endian.
//! Field identities (a, u1, u2, u3, ...) are positional; run directories get
//! a JSON index naming each snapshot file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::grid::{Field, Grid, Repr};

pub const MAGIC: &[u8; 4] = b"RCSF";
pub const VERSION: u32 = 1;

fn repr_tag(repr: Repr) -> u8 {
    match repr {
        Repr::Physical => 0,
        Repr::Spectral => 1,
    }
}

fn tag_repr(tag: u8) -> Result<Repr> {
    match tag {
        0 => Ok(Repr::Physical),
        1 => Ok(Repr::Spectral),
        t => Err(CoreError::Snapshot(format!("unknown representation tag {t}"))),
    }
}

pub fn write_snapshot(path: &Path, grid: &Grid, fields: &[&Field]) -> Result<()> {
    if fields.is_empty() {
        return Err(CoreError::Snapshot("no fields to write".into()));
    }
    let repr = fields[0].repr;
    for f in fields {
        if f.repr != repr {
            return Err(CoreError::Snapshot("mixed representations".into()));
        }
        if f.n() != grid.n() {
            return Err(CoreError::Snapshot("field size does not match grid".into()));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&grid.period().to_le_bytes())?;
    w.write_all(&(fields.len() as u32).to_le_bytes())?;
    w.write_all(&[repr_tag(repr)])?;
    for f in fields {
        for v in &f.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct Snapshot {
    pub grid: Grid,
    pub fields: Vec<Field>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Snapshot("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::Snapshot(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let period = read_f64(&mut r)?;
    let count = read_u32(&mut r)? as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let repr = tag_repr(tag[0])?;
    let grid = Grid::new(n, period)?;
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = grid.zeros(repr);
        for v in f.data.iter_mut() {
            *v = Complex64::new(read_f64(&mut r)?, read_f64(&mut r)?);
        }
        fields.push(f);
    }
    Ok(Snapshot { grid, fields })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let grid = Grid::new(8, 3.25).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let mut a = grid.zeros(Repr::Spectral);
        let mut b = grid.zeros(Repr::Spectral);
        for v in a.data.iter_mut().chain(b.data.iter_mut()) {
            *v = Complex64::new(rng.gen::<f64>(), rng.gen::<f64>());
        }
        let dir = std::env::temp_dir().join("rcsf_roundtrip_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pair.rcsf");
        write_snapshot(&path, &grid, &[&a, &b]).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.grid.n(), 8);
        assert_eq!(snap.grid.period(), 3.25);
        assert_eq!(snap.fields.len(), 2);
        // Bitwise: every f64 must survive exactly.
        for (orig, back) in [&a, &b].iter().zip(snap.fields.iter()) {
            for (x, y) in orig.data.iter().zip(back.data.iter()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn header_is_as_documented() {
        let grid = Grid::new(8, 2.0).unwrap();
        let f = grid.zeros(Repr::Physical);
        let dir = std::env::temp_dir().join("rcsf_header_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("one.rcsf");
        write_snapshot(&path, &grid, &[&f]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"RCSF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2.0);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 1);
        assert_eq!(bytes[24], 0u8);
        assert_eq!(bytes.len(), 25 + 8 * 8 * 8 * 16);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn rejects_corrupt_magic() {
        let dir = std::env::temp_dir().join("rcsf_corrupt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.rcsf");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_snapshot(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }
}
