//! Flat binary checkpoints.
//!
//! A network blob is laid out as (all integers little-endian):
//!
//! ```text
//! magic    [u8; 4]   b"MRNN"
//! version  u16       1
//! layers   u32
//! per layer:
//!   tag    u8        0 dense | 1 conv1d | 2 sigmoid | 3 flatten | 4 centered sigmoid
//!   dense    inputs u32, outputs u32
//!   conv1d   steps u32, in_channels u32, out_channels u32, kernel u32
//!   sigmoid  rank u32, dims [u32; rank]
//!   flatten  rank u32, dims [u32; rank], rank u32, dims [u32; rank]
//! count    u64       total parameter count
//! values   [f64; count] in layer order, weights before biases
//! ```
//!
//! Higher-level formats (autoencoders, translators) prepend their own header
//! and embed one or more network blobs.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{LayerSpec, Network, NnError};

pub const NETWORK_MAGIC: [u8; 4] = *b"MRNN";
pub const NETWORK_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Network(#[from] NnError),
}

pub(crate) fn write_u8(w: &mut impl Write, v: u8) -> io::Result<()> {
    w.write_all(&[v])
}
pub(crate) fn write_u16(w: &mut impl Write, v: u16) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
pub(crate) fn write_u32(w: &mut impl Write, v: usize) -> io::Result<()> {
    let v = u32::try_from(v).map_err(|_| io::Error::other("extent exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}
pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_u8(r: &mut impl Read) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}
pub(crate) fn read_u16(r: &mut impl Read) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}
pub(crate) fn read_u32(r: &mut impl Read) -> io::Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}
pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
pub(crate) fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn expect_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<(), CheckpointError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if found != expected {
        return Err(CheckpointError::BadMagic { expected, found });
    }
    Ok(())
}

fn write_dims(w: &mut impl Write, dims: &[usize]) -> io::Result<()> {
    write_u32(w, dims.len())?;
    dims.iter().try_for_each(|d| write_u32(w, *d))
}

fn read_dims(r: &mut impl Read) -> io::Result<Vec<usize>> {
    let rank = read_u32(r)?;
    if rank > 8 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "rank too large"));
    }
    (0..rank).map(|_| read_u32(r)).collect()
}

pub fn write_network(w: &mut impl Write, net: &Network) -> Result<(), CheckpointError> {
    w.write_all(&NETWORK_MAGIC)?;
    write_u16(w, NETWORK_VERSION)?;
    write_u32(w, net.layers().len())?;
    for layer in net.layers() {
        match layer.spec() {
            LayerSpec::Dense { inputs, outputs } => {
                write_u8(w, 0)?;
                write_u32(w, *inputs)?;
                write_u32(w, *outputs)?;
            }
            LayerSpec::Conv1d {
                steps,
                in_channels,
                out_channels,
                kernel,
            } => {
                write_u8(w, 1)?;
                write_u32(w, *steps)?;
                write_u32(w, *in_channels)?;
                write_u32(w, *out_channels)?;
                write_u32(w, *kernel)?;
            }
            LayerSpec::Sigmoid { shape, centered } => {
                write_u8(w, if *centered { 4 } else { 2 })?;
                write_dims(w, shape)?;
            }
            LayerSpec::Flatten { input, output } => {
                write_u8(w, 3)?;
                write_dims(w, input)?;
                write_dims(w, output)?;
            }
        }
    }
    write_u64(w, net.param_count() as u64)?;
    for v in net.layers().iter().flat_map(|l| l.params()) {
        write_f64(w, *v)?;
    }
    Ok(())
}

pub fn read_network(r: &mut impl Read) -> Result<Network, CheckpointError> {
    expect_magic(r, NETWORK_MAGIC)?;
    let version = read_u16(r)?;
    if version != NETWORK_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(r)?;
    if count > 1024 {
        return Err(CheckpointError::Malformed(format!("{count} layers")));
    }
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let spec = match read_u8(r)? {
            0 => LayerSpec::Dense {
                inputs: read_u32(r)?,
                outputs: read_u32(r)?,
            },
            1 => LayerSpec::Conv1d {
                steps: read_u32(r)?,
                in_channels: read_u32(r)?,
                out_channels: read_u32(r)?,
                kernel: read_u32(r)?,
            },
            t @ (2 | 4) => LayerSpec::Sigmoid {
                shape: read_dims(r)?,
                centered: t == 4,
            },
            3 => LayerSpec::Flatten {
                input: read_dims(r)?,
                output: read_dims(r)?,
            },
            tag => return Err(CheckpointError::Malformed(format!("layer tag {tag}"))),
        };
        specs.push(spec);
    }
    let total = read_u64(r)? as usize;
    let expected: usize = specs.iter().map(LayerSpec::param_count).sum();
    if total != expected {
        return Err(CheckpointError::Malformed(format!(
            "header declares {total} parameters, layers need {expected}"
        )));
    }
    let mut params = Vec::with_capacity(specs.len());
    for spec in &specs {
        let p = (0..spec.param_count())
            .map(|_| read_f64(r))
            .collect::<io::Result<Vec<_>>>()?;
        params.push(p);
    }
    Ok(Network::from_parts(specs, params)?)
}
