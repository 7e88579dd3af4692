//! Field snapshot files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size    | content                         |
//! |--------|---------|---------------------------------|
//! | 0      | 4       | ASCII magic `FPM1`              |
//! | 4      | 4       | `N` as u32                      |
//! | 8      | 8       | `L` as f64                      |
//! | 16     | 8       | time as f64                     |
//! | 24     | 4       | name length `m` in bytes, u32   |
//! | 28     | m       | name, UTF-8                     |
//! | 28 + m | 8 N^2   | values as f64, row-major        |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Grid, LatticeError, ScalarField};

pub const MAGIC: &[u8; 4] = b"FPM1";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: ScalarField,
    pub time: f64,
    pub name: String,
}

pub fn encode(field: &ScalarField, time: f64, name: &str, out: &mut impl Write) -> io::Result<()> {
    let g = field.grid();
    out.write_all(MAGIC)?;
    out.write_all(&(g.n() as u32).to_le_bytes())?;
    out.write_all(&g.half_width().to_le_bytes())?;
    out.write_all(&time.to_le_bytes())?;
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode(input: &mut impl Read) -> Result<Snapshot, LatticeError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LatticeError::BadSnapshot("bad magic".into()));
    }
    let n = read_u32(input)? as usize;
    let l = read_f64(input)?;
    let time = read_f64(input)?;
    let name_len = read_u32(input)? as usize;
    if name_len > 1 << 16 {
        return Err(LatticeError::BadSnapshot("name too long".into()));
    }
    let mut name = vec![0u8; name_len];
    input.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| LatticeError::BadSnapshot("name is not UTF-8".into()))?;
    let grid = Grid::new(n, l)?;
    let mut buf = vec![0u8; 8 * grid.len()];
    input.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Snapshot {
        field: ScalarField::from_values(&grid, values)?,
        time,
        name,
    })
}

pub fn write_snapshot(path: &Path, field: &ScalarField, time: f64, name: &str) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode(field, time, name, &mut w)?;
    w.flush()
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, LatticeError> {
    let mut r = BufReader::new(File::open(path)?);
    decode(&mut r)
}

fn read_u32(input: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(input: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn header_layout_is_exact() {
        let g = make_grid(4, 1.5).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| x + 2.0 * y);
        let mut bytes = Vec::new();
        encode(&f, 0.25, "u", &mut bytes).unwrap();
        assert_eq!(bytes.len(), 28 + 1 + 8 * 16);
        assert_eq!(&bytes[0..4], b"FPM1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1.5);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 0.25);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1);
        assert_eq!(bytes[28], b'u');
        let first = f64::from_le_bytes(bytes[29..37].try_into().unwrap());
        assert_eq!(first, f.values()[0]);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let g = make_grid(4, 1.0).unwrap();
        let mut bytes = Vec::new();
        encode(&ScalarField::zeros(&g), 0.0, "p", &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&mut bad.as_slice()).is_err());
        let short = &bytes[..bytes.len() - 3];
        assert!(decode(&mut &short[..]).is_err());
    }
}
