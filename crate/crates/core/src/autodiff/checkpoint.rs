//! Binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "MLURCKPT"
//! version    u32       1
//! layers     u32       number of manifest entries
//! manifest   per layer: kind u8 followed by its fields
//!              0 conv2d       in u32, out u32, kernel u32, stride u32, pad u32, dilation u32
//!              1 batchnorm2d  channels u32, initialized u8, eps f32, momentum f32
//!              2 relu         -
//!              3 maxpool2d    kernel u32, stride u32
//!              4 flatten      -
//!              5 linear       in u32, out u32
//!              6 affine       -
//! payload    f32 arrays in manifest order
//!              conv2d       weight [out·in·k·k], bias [out]
//!              batchnorm2d  gamma, beta, running_mean, running_var [channels each]
//!              linear       weight [out·in], bias [out]
//!              affine       scale [1], shift [1]
//! ```
//!
//! Decoding rejects trailing bytes.

use crate::error::{Error, Result};
use crate::prelude::*;

use super::{Affine, BatchNorm2d, Conv2d, ConvGeometry, Flatten, Layer, Linear, MaxPool2d, Real, Relu, Sequential};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MLURCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const CONV: u8 = 0;
const BN: u8 = 1;
const RELU: u8 = 2;
const POOL: u8 = 3;
const FLATTEN: u8 = 4;
const LINEAR: u8 = 5;
const AFFINE: u8 = 6;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s<T: Real>(out: &mut Vec<u8>, vals: &[T]) {
    for v in vals {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint<T: Real>(net: &Sequential<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    put_u32(&mut out, net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                out.push(CONV);
                let g = c.geometry;
                for v in [c.in_channels(), c.out_channels(), g.kernel, g.stride, g.pad, g.dilation] {
                    put_u32(&mut out, v);
                }
            }
            Layer::BatchNorm2d(b) => {
                out.push(BN);
                put_u32(&mut out, b.channels());
                out.push(b.is_initialized() as u8);
                out.extend_from_slice(&(b.eps as f32).to_le_bytes());
                out.extend_from_slice(&(b.momentum as f32).to_le_bytes());
            }
            Layer::Relu(_) => out.push(RELU),
            Layer::MaxPool2d(p) => {
                out.push(POOL);
                put_u32(&mut out, p.kernel);
                put_u32(&mut out, p.stride);
            }
            Layer::Flatten(_) => out.push(FLATTEN),
            Layer::Linear(l) => {
                out.push(LINEAR);
                put_u32(&mut out, l.inputs());
                put_u32(&mut out, l.outputs());
            }
            Layer::Affine(_) => out.push(AFFINE),
        }
    }
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                put_f32s(&mut out, c.weight.data());
                put_f32s(&mut out, c.bias.data());
            }
            Layer::BatchNorm2d(b) => {
                put_f32s(&mut out, b.gamma.data());
                put_f32s(&mut out, b.beta.data());
                put_f32s(&mut out, &b.running_mean);
                put_f32s(&mut out, &b.running_var);
            }
            Layer::Linear(l) => {
                put_f32s(&mut out, l.weight.data());
                put_f32s(&mut out, l.bias.data());
            }
            Layer::Affine(a) => put_f32s(&mut out, &[a.scale, a.shift]),
            _ => {}
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn fill<T: Real>(&mut self, dst: &mut [T]) -> Result<()> {
        for v in dst {
            *v = T::lit(self.f32()? as f64);
        }
        Ok(())
    }
}

fn bad(msg: String) -> Error {
    Error::Checkpoint(msg)
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Sequential<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(4096));
    let mut bn_ready = Vec::new();
    for _ in 0..count {
        let layer = match r.u8()? {
            CONV => {
                let (cin, cout) = (r.u32()?, r.u32()?);
                let geometry = ConvGeometry { kernel: r.u32()?, stride: r.u32()?, pad: r.u32()?, dilation: r.u32()? };
                if geometry.kernel == 0 || geometry.stride == 0 || geometry.dilation == 0 {
                    return Err(bad("degenerate conv geometry".into()));
                }
                Layer::Conv2d(Conv2d::new(cin, cout, geometry))
            }
            BN => {
                let c = r.u32()?;
                let ready = r.u8()? != 0;
                let mut b = BatchNorm2d::new(c);
                b.eps = r.f32()? as f64;
                b.momentum = r.f32()? as f64;
                bn_ready.push(ready);
                Layer::BatchNorm2d(b)
            }
            RELU => Layer::Relu(Relu::new()),
            POOL => {
                let (k, s) = (r.u32()?, r.u32()?);
                if k == 0 || s == 0 {
                    return Err(bad("degenerate pooling window".into()));
                }
                Layer::MaxPool2d(MaxPool2d::new(k, s))
            }
            FLATTEN => Layer::Flatten(Flatten::new()),
            LINEAR => {
                let (i, o) = (r.u32()?, r.u32()?);
                Layer::Linear(Linear::new(i, o))
            }
            AFFINE => Layer::Affine(Affine::new(T::one(), T::zero())),
            k => return Err(bad(format!("unknown layer kind {k}"))),
        };
        layers.push(layer);
    }
    let mut bn_ready = bn_ready.into_iter();
    for layer in &mut layers {
        match layer {
            Layer::Conv2d(c) => {
                r.fill(c.weight.data_mut())?;
                r.fill(c.bias.data_mut())?;
            }
            Layer::BatchNorm2d(b) => {
                r.fill(b.gamma.data_mut())?;
                r.fill(b.beta.data_mut())?;
                let mut mean = vec![T::zero(); b.channels()];
                let mut var = vec![T::zero(); b.channels()];
                r.fill(&mut mean)?;
                r.fill(&mut var)?;
                if bn_ready.next().unwrap_or(false) {
                    b.set_running_stats(mean, var)?;
                } else {
                    b.running_mean = mean;
                    b.running_var = var;
                }
            }
            Layer::Linear(l) => {
                r.fill(l.weight.data_mut())?;
                r.fill(l.bias.data_mut())?;
            }
            Layer::Affine(a) => {
                a.scale = T::lit(r.f32()? as f64);
                a.shift = T::lit(r.f32()? as f64);
            }
            _ => {}
        }
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Sequential::new(layers))
}
