//! Flat binary serialization of a trained encoder pair (regular + momentum):
//! 4-byte magic, version byte, architecture header, then row-major f64
//! parameter arrays for both encoders.

use crate::encoder::{Activation, Encoder};
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"CCLM";
pub const VERSION: u8 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFile(msg.into())
}

pub fn save(path: &Path, encoder: &Encoder<f64>, momentum: &Encoder<f64>) -> Result<()> {
    if encoder.num_params() != momentum.num_params() {
        return Err(bad("encoder pair has mismatched shapes"));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&[match encoder.activation {
        Activation::Identity => 0,
        Activation::Tanh => 1,
    }])?;
    w.write_all(&[encoder.normalize as u8])?;
    // dims: input width then each layer's output width
    let mut dims = vec![encoder.input_dim() as u32];
    dims.extend(encoder.layers.iter().map(|l| l.weight.rows as u32));
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in &dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for enc in [encoder, momentum] {
        for p in enc.flatten_params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Encoder<f64>, Encoder<f64>)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 7];
    r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if header[..4] != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    if header[4] != VERSION {
        return Err(bad(format!("unsupported version {}", header[4])));
    }
    let activation = match header[5] {
        0 => Activation::Identity,
        1 => Activation::Tanh,
        a => return Err(bad(format!("unknown activation code {a}"))),
    };
    let normalize = match header[6] {
        0 => false,
        1 => true,
        n => return Err(bad(format!("bad normalize flag {n}"))),
    };
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf).map_err(|_| bad("truncated dims"))?;
    let n_dims = u32::from_le_bytes(u32_buf) as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(bad(format!("implausible layer count {n_dims}")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        r.read_exact(&mut u32_buf).map_err(|_| bad("truncated dims"))?;
        let d = u32::from_le_bytes(u32_buf) as usize;
        if d == 0 {
            return Err(bad("zero layer width"));
        }
        dims.push(d);
    }
    let mut template = Encoder::<f64>::random(&dims, activation, normalize, 0);
    let n = template.num_params();
    let mut read_params = |enc: &mut Encoder<f64>| -> Result<()> {
        let mut flat = Vec::with_capacity(n);
        let mut f64_buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut f64_buf)
                .map_err(|_| bad("truncated parameters"))?;
            flat.push(f64::from_le_bytes(f64_buf));
        }
        enc.set_params(&flat)
    };
    read_params(&mut template)?;
    let encoder = template.clone();
    let mut momentum = template;
    read_params(&mut momentum)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(Error::Io)? != 0 {
        return Err(bad("trailing bytes after parameters"));
    }
    Ok((encoder, momentum))
}
