//! Flat binary store of suitability maps.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "OWAMAPS\0"
//! 8       4     version (1)
//! 12      4     reserved (0)
//! 16      8     map count m
//! 24      8     valid pixels per map
//! 32      32    SHA-256 of the validity mask
//! 64      ...   m records of `pixels` f64 values, valid pixels in row-major order
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use owa_core::MapSource;
use sha2::{Digest, Sha256};

pub const MAGIC: [u8; 8] = *b"OWAMAPS\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 64;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: not a map store", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: unsupported store version {version}", path.display())]
    Version { path: PathBuf, version: u32 },
    #[error("{}: expected {expected} bytes, file holds {found}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("record of {found} pixels, store holds {expected} per map")]
    RecordLength { expected: usize, found: usize },
    #[error("store holds {written} of {declared} maps")]
    Incomplete { written: usize, declared: usize },
    #[error("store mask digest does not match the stack mask")]
    MaskMismatch,
}

/// SHA-256 over the grid dimensions and one byte per cell (1 valid, 0 not).
pub fn mask_digest(ncols: usize, nrows: usize, mask: &[bool]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((ncols as u64).to_le_bytes());
    h.update((nrows as u64).to_le_bytes());
    let bytes: Vec<u8> = mask.iter().map(|&v| v as u8).collect();
    h.update(&bytes);
    h.finalize().into()
}

pub struct MapStoreWriter {
    path: PathBuf,
    out: BufWriter<File>,
    maps: usize,
    pixels: usize,
    written: usize,
}

impl MapStoreWriter {
    pub fn create(
        path: &Path,
        maps: usize,
        pixels: usize,
        digest: [u8; 32],
    ) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        let mut header = Vec::with_capacity(HEADER_LEN as usize);
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&0u32.to_le_bytes());
        header.extend_from_slice(&(maps as u64).to_le_bytes());
        header.extend_from_slice(&(pixels as u64).to_le_bytes());
        header.extend_from_slice(&digest);
        out.write_all(&header).map_err(io_err)?;
        Ok(MapStoreWriter {
            path: path.to_path_buf(),
            out,
            maps,
            pixels,
            written: 0,
        })
    }

    /// Appends the next record; records must arrive in design order.
    pub fn append(&mut self, map: &[f64]) -> Result<(), StoreError> {
        if map.len() != self.pixels {
            return Err(StoreError::RecordLength {
                expected: self.pixels,
                found: map.len(),
            });
        }
        if self.written == self.maps {
            return Err(StoreError::Incomplete {
                written: self.written + 1,
                declared: self.maps,
            });
        }
        let mut bytes = Vec::with_capacity(map.len() * 8);
        for v in map {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.out
            .write_all(&bytes)
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), StoreError> {
        if self.written != self.maps {
            return Err(StoreError::Incomplete {
                written: self.written,
                declared: self.maps,
            });
        }
        self.out.flush().map_err(|source| StoreError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub struct MapStoreReader {
    path: PathBuf,
    file: Mutex<File>,
    maps: usize,
    pixels: usize,
    digest: [u8; 32],
}

impl MapStoreReader {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = File::open(path).map_err(io_err)?;
        let found = file.metadata().map_err(io_err)?.len();
        let mut header = [0u8; HEADER_LEN as usize];
        if found < HEADER_LEN {
            return Err(StoreError::Truncated {
                path: path.to_path_buf(),
                expected: HEADER_LEN,
                found,
            });
        }
        file.read_exact(&mut header).map_err(io_err)?;
        if header[..8] != MAGIC {
            return Err(StoreError::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(StoreError::Version {
                path: path.to_path_buf(),
                version,
            });
        }
        let (maps, pixels) = (u64_at(16), u64_at(24));
        let expected = maps
            .checked_mul(pixels)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(HEADER_LEN))
            .unwrap_or(u64::MAX);
        if found != expected {
            return Err(StoreError::Truncated {
                path: path.to_path_buf(),
                expected,
                found,
            });
        }
        let digest = header[32..64].try_into().unwrap();
        Ok(MapStoreReader {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            maps: maps as usize,
            pixels: pixels as usize,
            digest,
        })
    }

    pub fn mask_digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn check_mask(&self, digest: [u8; 32]) -> Result<(), StoreError> {
        if self.digest == digest {
            Ok(())
        } else {
            Err(StoreError::MaskMismatch)
        }
    }

    pub fn read_map(&self, map: usize) -> Result<Vec<f64>, StoreError> {
        let mut out = vec![0.0; self.pixels];
        self.read_block(map, 0, &mut out)?;
        Ok(out)
    }
}

impl MapSource for MapStoreReader {
    type Error = StoreError;

    fn map_count(&self) -> usize {
        self.maps
    }

    fn pixel_count(&self) -> usize {
        self.pixels
    }

    fn read_block(&self, map: usize, start: usize, out: &mut [f64]) -> Result<(), StoreError> {
        assert!(
            map < self.maps && start + out.len() <= self.pixels,
            "read outside the store"
        );
        let offset = HEADER_LEN + ((map * self.pixels + start) as u64) * 8;
        let mut bytes = vec![0u8; out.len() * 8];
        {
            let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
            file.seek(SeekFrom::Start(offset))
                .and_then(|_| file.read_exact(&mut bytes))
                .map_err(|source| StoreError::Io {
                    path: self.path.clone(),
                    source,
                })?;
        }
        for (v, b) in out.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().unwrap());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.bin");
        let digest = mask_digest(3, 1, &[true, false, true]);
        let mut w = MapStoreWriter::create(&path, 2, 2, digest).unwrap();
        w.append(&[0.25, 0.5]).unwrap();
        assert!(matches!(
            w.append(&[1.0]),
            Err(StoreError::RecordLength { .. })
        ));
        w.append(&[0.75, 1.0]).unwrap();
        w.finish().unwrap();

        let r = MapStoreReader::open(&path).unwrap();
        assert_eq!((r.map_count(), r.pixel_count()), (2, 2));
        assert_eq!(r.read_map(1).unwrap(), vec![0.75, 1.0]);
        let mut one = [0.0];
        r.read_block(0, 1, &mut one).unwrap();
        assert_eq!(one, [0.5]);
        r.check_mask(digest).unwrap();
        assert!(r.check_mask(mask_digest(3, 1, &[true; 3])).is_err());

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 64 + 32);
        std::fs::write(&path, &bytes[..80]).unwrap();
        assert!(matches!(
            MapStoreReader::open(&path),
            Err(StoreError::Truncated { .. })
        ));
    }

    #[test]
    fn unfinished_store_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let w = MapStoreWriter::create(&dir.path().join("m.bin"), 2, 1, [0; 32]).unwrap();
        assert!(matches!(
            w.finish(),
            Err(StoreError::Incomplete {
                written: 0,
                declared: 2
            })
        ));
    }
}
