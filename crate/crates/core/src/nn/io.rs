//! Flat binary parameter files.
//!
//! Layout: magic `MRFILNN1`, then little-endian u32 layer-width count and the
//! widths themselves, then per affine layer the row-major weights followed by
//! the biases, all as little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MlpParams, MlpSpec};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MRFILNN1";

pub fn save_params(params: &MlpParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let widths = &params.spec().layer_widths;
    w.write_all(&(widths.len() as u32).to_le_bytes())?;
    for &width in widths {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    for layer in &params.layers {
        for v in layer.weights.iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<MlpParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic, not a parameter file",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_widths = u32::from_le_bytes(u32buf) as usize;
    if n_widths < 2 || n_widths > 64 {
        return Err(Error::Format(format!("implausible layer count {n_widths}")));
    }
    let mut widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        r.read_exact(&mut u32buf)?;
        widths.push(u32::from_le_bytes(u32buf) as usize);
    }
    let spec = MlpSpec::new(widths).map_err(|e| Error::Format(e.to_string()))?;
    let mut params = MlpParams::zeros(spec);
    let mut f64buf = [0u8; 8];
    for layer in params.layers.iter_mut() {
        for v in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
            r.read_exact(&mut f64buf)?;
            *v = f64::from_le_bytes(f64buf);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after parameters",
            path.display()
        )));
    }
    Ok(params)
}
