//! `TSL1` binary snapshots of physical-space samples.
//!
//! Layout (all little-endian): magic `TSL1`, version `u32`, dimension `u8`,
//! points per side `u64`, time `f64`, label length `u16` followed by that many
//! UTF-8 bytes, then `n^d` samples as `f64` with `x1` fastest.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

pub const MAGIC: &[u8; 4] = b"TSL1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub n: usize,
    pub time: f64,
    pub label: String,
    pub samples: Vec<f64>,
}

impl Snapshot {
    pub fn of_field(field: &SpectralField, time: f64) -> Self {
        let grid = field.grid();
        Self {
            dim: grid.dim(),
            n: grid.n(),
            time,
            label: field.label.clone(),
            samples: field.to_physical(),
        }
    }

    pub fn to_field(&self) -> Result<SpectralField> {
        let grid = Grid::new(self.dim, self.n)?;
        Ok(SpectralField::from_physical(&grid, &self.samples).with_label(self.label.clone()))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let label = self.label.as_bytes();
        let label_len = u16::try_from(label.len())
            .map_err(|_| Error::Format(format!("label of {} bytes exceeds u16", label.len())))?;
        let expected = self.n.pow(self.dim as u32);
        if self.samples.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} samples, have {}",
                self.samples.len()
            )));
        }
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.dim as u8])?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&label_len.to_le_bytes())?;
        w.write_all(label)?;
        let mut buf = Vec::with_capacity(8 * self.samples.len());
        for v in &self.samples {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let [dim] = read_array::<1>(r)?;
        let n = u64::from_le_bytes(read_array(r)?) as usize;
        let time = f64::from_le_bytes(read_array(r)?);
        let label_len = u16::from_le_bytes(read_array(r)?) as usize;
        let mut label = vec![0u8; label_len];
        r.read_exact(&mut label)?;
        let label = String::from_utf8(label).map_err(|e| Error::Format(e.to_string()))?;
        if !(dim == 2 || dim == 3) || n == 0 {
            return Err(Error::Format(format!("bad shape d={dim} n={n}")));
        }
        let count = n
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::Format("sample count overflows".into()))?;
        let mut raw = vec![0u8; 8 * count];
        r.read_exact(&mut raw)?;
        let samples = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            dim: dim as usize,
            n,
            time,
            label,
            samples,
        })
    }
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_bytes_are_exact() {
        let snap = Snapshot {
            dim: 2,
            n: 8,
            time: 0.25,
            label: "rho".into(),
            samples: (0..64).map(|i| i as f64).collect(),
        };
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"TSL1");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(buf[8], 2);
        assert_eq!(&buf[9..17], &8u64.to_le_bytes());
        assert_eq!(&buf[17..25], &0.25f64.to_le_bytes());
        assert_eq!(&buf[25..27], &3u16.to_le_bytes());
        assert_eq!(&buf[27..30], b"rho");
        assert_eq!(buf.len(), 30 + 64 * 8);
        // x1 fastest: sample index 1 is (i1=1, i2=0).
        assert_eq!(&buf[38..46], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Snapshot::read_from(&mut &b"TSL2\0\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        Snapshot { dim: 2, n: 8, time: 0.0, label: String::new(), samples: vec![0.0; 64] }
            .write_to(&mut buf)
            .unwrap();
        buf.truncate(buf.len() - 1);
        assert!(Snapshot::read_from(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn round_trips(time in -1e6f64..1e6, label in "[a-z_]{0,12}", seed in 0u64..1000) {
            let samples: Vec<f64> = (0..64).map(|i| ((i as u64 * 31 + seed) % 97) as f64 / 7.0).collect();
            let snap = Snapshot { dim: 2, n: 8, time, label, samples };
            let mut buf = Vec::new();
            snap.write_to(&mut buf).unwrap();
            prop_assert_eq!(Snapshot::read_from(&mut buf.as_slice()).unwrap(), snap);
        }
    }
}
