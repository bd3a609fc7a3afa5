use std::io::Write;
use std::path::Path;

use owa_core::Raster;

use crate::error::{Error, Result};

/// 16-bit binary PGM: `floor(v · 65535)` per valid cell, 0 for nodata.
pub fn render_pgm<W: Write>(r: &Raster, mut out: W) -> std::io::Result<()> {
    let m = r.meta();
    write!(out, "P5\n{} {}\n65535\n", m.ncols, m.nrows)?;
    let mut body = Vec::with_capacity(r.len() * 2);
    for cell in 0..r.len() {
        let level = match r.get(cell) {
            Some(v) => (v.clamp(0.0, 1.0) * 65535.0).floor() as u16,
            None => 0,
        };
        body.extend_from_slice(&level.to_be_bytes());
    }
    out.write_all(&body)
}

pub fn render_pgm_file(r: &Raster, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut w = std::io::BufWriter::new(file);
    render_pgm(r, &mut w)
        .and_then(|_| w.flush())
        .map_err(Error::io(path))
}
