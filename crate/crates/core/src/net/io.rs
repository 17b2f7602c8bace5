//! Binary model persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  b"LBNM"
//! version  u32      currently 1
//! input    u32 x3   height, width, channels
//! classes  u32
//! scale    f64      pixel -> internal input multiplier
//! nlayers  u32
//! layers   repeated descriptor + row-major f64 weight arrays:
//!   0x01 conv   u32 in_c, u32 out_c, u32 kernel, u32 padding,
//!               weights [out_c*k*k*in_c], bias [out_c]
//!   0x02 relu
//!   0x03 pool   u32 size
//!   0x04 dense  u32 in_len, u32 out_len, weights [out*in], bias [out]
//! ```
//!
//! Loading rebuilds the network through the validating constructor, so a
//! descriptor chain with inconsistent shapes is rejected. Trailing bytes and
//! truncation are detected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Conv, Dense, Layer, Network};

const MAGIC: &[u8; 4] = b"LBNM";
const VERSION: u32 = 1;

const TAG_CONV: u8 = 0x01;
const TAG_RELU: u8 = 0x02;
const TAG_POOL: u8 = 0x03;
const TAG_DENSE: u8 = 0x04;

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let (h, wd, c) = net.input_shape();
    put_u32(&mut w, h as u32)?;
    put_u32(&mut w, wd as u32)?;
    put_u32(&mut w, c as u32)?;
    put_u32(&mut w, net.num_classes() as u32)?;
    put_f64(&mut w, net.input_scale())?;
    put_u32(&mut w, net.layers().len() as u32)?;
    for layer in net.layers() {
        match layer {
            Layer::Conv(conv) => {
                w.write_all(&[TAG_CONV])?;
                put_u32(&mut w, conv.in_channels as u32)?;
                put_u32(&mut w, conv.out_channels as u32)?;
                put_u32(&mut w, conv.kernel as u32)?;
                put_u32(&mut w, conv.padding as u32)?;
                put_f64s(&mut w, &conv.weights)?;
                put_f64s(&mut w, &conv.bias)?;
            }
            Layer::Relu => w.write_all(&[TAG_RELU])?,
            Layer::AvgPool { size } => {
                w.write_all(&[TAG_POOL])?;
                put_u32(&mut w, *size as u32)?;
            }
            Layer::Dense(dense) => {
                w.write_all(&[TAG_DENSE])?;
                put_u32(&mut w, dense.in_len as u32)?;
                put_u32(&mut w, dense.out_len as u32)?;
                put_f64s(&mut w, &dense.weights)?;
                put_f64s(&mut w, &dense.bias)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Network> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let h = get_u32(&mut r)? as usize;
    let w = get_u32(&mut r)? as usize;
    let c = get_u32(&mut r)? as usize;
    let num_classes = get_u32(&mut r)? as usize;
    let scale = get_f64(&mut r)?;
    let nlayers = get_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(nlayers);
    for _ in 0..nlayers {
        let mut tag = [0u8; 1];
        read_exact(&mut r, &mut tag)?;
        let layer = match tag[0] {
            TAG_CONV => {
                let in_c = get_u32(&mut r)? as usize;
                let out_c = get_u32(&mut r)? as usize;
                let kernel = get_u32(&mut r)? as usize;
                let padding = get_u32(&mut r)? as usize;
                let weights = get_f64s(&mut r, out_c * kernel * kernel * in_c)?;
                let bias = get_f64s(&mut r, out_c)?;
                Layer::Conv(Conv::new(in_c, out_c, kernel, padding, weights, bias)?)
            }
            TAG_RELU => Layer::Relu,
            TAG_POOL => Layer::AvgPool {
                size: get_u32(&mut r)? as usize,
            },
            TAG_DENSE => {
                let in_len = get_u32(&mut r)? as usize;
                let out_len = get_u32(&mut r)? as usize;
                let weights = get_f64s(&mut r, in_len * out_len)?;
                let bias = get_f64s(&mut r, out_len)?;
                Layer::Dense(Dense::new(in_len, out_len, weights, bias)?)
            }
            t => return Err(Error::ModelFormat(format!("unknown layer tag 0x{t:02x}"))),
        };
        layers.push(layer);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::ModelFormat("trailing bytes after layer stack".into()));
    }
    Network::new((h, w, c), num_classes, scale, layers)
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for &v in vs {
        put_f64(w, v)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::ModelFormat("unexpected end of file".into()))
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(get_f64(r)?);
    }
    Ok(out)
}
