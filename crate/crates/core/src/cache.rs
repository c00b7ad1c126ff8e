//! Binary cache for assembled operators.
//!
//! Layout, little-endian: magic "PHKL", version u32, channel u8, d u8, N u32,
//! beta f64, eta f64, statistics u8, then the M×M quadratic-form matrix as
//! f64 row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::collision::{Channel, CollisionMatrixL, Diagnostics};
use crate::equilibrium::Statistics;
use crate::error::{Error, Result};
use crate::lattice::BZGrid;

pub const MAGIC: &[u8; 4] = b"PHKL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 1 + 4 + 8 + 8 + 1;

pub fn write(l: &CollisionMatrixL, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * l.len() * l.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(l.channel.tag());
    buf.push(u8::try_from(l.grid.dim()).map_err(|_| Error::Cache("dimension exceeds u8".into()))?);
    buf.extend_from_slice(&(l.grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&l.beta.to_le_bytes());
    buf.extend_from_slice(&l.eta.to_le_bytes());
    buf.push(l.statistics.tag());
    let m = l.len();
    for i in 0..m {
        for j in 0..m {
            buf.extend_from_slice(&l.form[(i, j)].to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read(mut input: impl Read) -> Result<CollisionMatrixL> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Cache("not a PHKL file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported cache version {version}")));
    }
    let channel = Channel::from_tag(bytes[8]).ok_or_else(|| Error::Cache("bad channel tag".into()))?;
    let d = bytes[9] as usize;
    let n = u32_at(10) as usize;
    let beta = f64_at(14);
    let eta = f64_at(22);
    let statistics = Statistics::from_tag(bytes[30]).ok_or_else(|| Error::Cache("bad statistics tag".into()))?;
    let grid = BZGrid::new(d, n).map_err(|e| Error::Cache(e.to_string()))?;
    let m = grid.len();
    if bytes.len() != HEADER_LEN + 8 * m * m {
        return Err(Error::Cache(format!("payload has {} bytes, expected {}", bytes.len() - HEADER_LEN, 8 * m * m)));
    }
    let data: Vec<f64> =
        bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(CollisionMatrixL {
        channel,
        form: DMatrix::from_row_slice(m, m, &data),
        grid,
        statistics,
        beta,
        eta,
        diagnostics: Diagnostics::default(),
    })
}

/// Cache directory keyed by a caller-supplied digest of the full model.
#[derive(Clone, Debug)]
pub struct MatrixCache {
    dir: PathBuf,
}

impl MatrixCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    pub fn path(&self, key: &str, channel: Channel) -> PathBuf {
        self.dir.join(format!("{key}-{}.phkl", channel.name()))
    }

    pub fn load(&self, key: &str, channel: Channel) -> Result<Option<CollisionMatrixL>> {
        let p = self.path(key, channel);
        if !p.exists() {
            return Ok(None);
        }
        read(fs::File::open(p)?).map(Some)
    }

    pub fn store(&self, key: &str, l: &CollisionMatrixL) -> Result<()> {
        let p = self.path(key, l.channel);
        let tmp = p.with_extension("tmp");
        write(l, std::io::BufWriter::new(fs::File::create(&tmp)?))?;
        fs::rename(tmp, p)?;
        Ok(())
    }

    /// Returns the cached matrix or builds and stores it.
    pub fn get_or_build(
        &self,
        key: &str,
        channel: Channel,
        build: impl FnOnce() -> Result<CollisionMatrixL>,
    ) -> Result<CollisionMatrixL> {
        if let Some(l) = self.load(key, channel)? {
            return Ok(l);
        }
        let l = build()?;
        self.store(key, &l)?;
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CollisionMatrixL {
        let grid = BZGrid::new(1, 4).unwrap();
        let form = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        CollisionMatrixL {
            channel: Channel::L4p,
            form,
            grid,
            statistics: Statistics::Classical,
            beta: 0.5,
            eta: 0.125,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let l = sample();
        let mut buf = Vec::new();
        write(&l, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PHKL");
        assert_eq!(buf.len(), HEADER_LEN + 8 * 16);
        let back = read(&buf[..]).unwrap();
        assert_eq!(back.form, l.form);
        assert_eq!((back.channel, back.statistics, back.beta, back.eta), (l.channel, l.statistics, l.beta, l.eta));
        assert_eq!(back.grid, l.grid);
    }

    #[test]
    fn truncated_file_rejected() {
        let mut buf = Vec::new();
        write(&sample(), &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read(&buf[..]), Err(Error::Cache(_))));
        assert!(matches!(read(&b"XXXX"[..]), Err(Error::Cache(_))));
    }

    #[test]
    fn directory_cache_reuses_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cache = MatrixCache::new(dir.path()).unwrap();
        let mut calls = 0;
        let a = cache
            .get_or_build("k", Channel::L4p, || {
                calls += 1;
                Ok(sample())
            })
            .unwrap();
        let b = cache
            .get_or_build("k", Channel::L4p, || {
                calls += 1;
                Ok(sample())
            })
            .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(a.form, b.form);
    }
}
