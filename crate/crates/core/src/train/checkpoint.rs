//! Binary checkpoint of a model and its optimiser state.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "CDILCKPT"  u32 version
//! config:     u8 variant, u64 input_dim, channels, depth, kernel, classes, seed,
//!             u8 activation, u8 norm, u8 weight_norm,
//!             u8 init (0 fan-in, 1 normal) then f64 std for normal
//! params:     u64 count, then per array: u64 len, len x f64
//! optimiser:  u64 step, f64 lr, beta1, beta2, eps,
//!             u64 count, arrays (m), u64 count, arrays (v)
//! ```
//!
//! Decoding either returns a complete model or an error; trailing bytes are
//! rejected.

use std::fs;
use std::path::Path;

use super::AdamState;
use crate::error::{Error, Result};
use crate::model::{build_model, Init, Model, ModelConfig, Variant};
use crate::nn::Activation;

pub const MAGIC: &[u8; 8] = b"CDILCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: AdamState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn array(&mut self, a: &[f64]) {
        self.u64(a.len() as u64);
        for &v in a {
            self.f64(v);
        }
    }
    fn arrays<'a>(&mut self, arrays: impl ExactSizeIterator<Item = &'a [f64]>) {
        self.u64(arrays.len() as u64);
        for a in arrays {
            self.array(a);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self, name: &str) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            c => Err(Error::Checkpoint(format!("bad {name} flag {c}"))),
        }
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// Arrays whose lengths must equal `expected`.
    fn arrays(&mut self, expected: &[usize], what: &str) -> Result<Vec<Vec<f64>>> {
        let count = self.usize()?;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "{what}: {count} arrays, model has {}",
                expected.len()
            )));
        }
        expected
            .iter()
            .enumerate()
            .map(|(i, &want)| {
                let len = self.usize()?;
                if len != want {
                    return Err(Error::Checkpoint(format!(
                        "{what} array {i}: length {len}, expected {want}"
                    )));
                }
                (0..len).map(|_| self.f64()).collect()
            })
            .collect()
    }
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Cdil => 0,
        Variant::Dil => 1,
        Variant::Cnn => 2,
        Variant::Tcn => 3,
    }
}

fn variant_from_code(c: u8) -> Result<Variant> {
    Ok(match c {
        0 => Variant::Cdil,
        1 => Variant::Dil,
        2 => Variant::Cnn,
        3 => Variant::Tcn,
        _ => return Err(Error::Checkpoint(format!("unknown variant code {c}"))),
    })
}

pub fn encode_checkpoint(model: &Model, optimizer: &AdamState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let c = &model.config;
    w.u8(variant_code(c.variant));
    for v in [c.input_dim, c.channels, c.depth, c.kernel, c.classes] {
        w.u64(v as u64);
    }
    w.u64(c.seed);
    w.u8(match c.activation {
        Activation::Relu => 0,
        Activation::Identity => 1,
    });
    w.u8(u8::from(c.norm));
    w.u8(u8::from(c.weight_norm));
    match c.init {
        Init::FanIn => w.u8(0),
        Init::Normal { std } => {
            w.u8(1);
            w.f64(std);
        }
    }
    w.arrays(model.params().into_iter());
    w.u64(optimizer.step);
    for v in [optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps] {
        w.f64(v);
    }
    w.arrays(optimizer.m.iter().map(Vec::as_slice));
    w.arrays(optimizer.v.iter().map(Vec::as_slice));
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("missing CDILCKPT magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let variant = variant_from_code(r.u8()?)?;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let seed = r.u64()?;
    let activation = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        c => return Err(Error::Checkpoint(format!("unknown activation code {c}"))),
    };
    let norm = r.flag("norm")?;
    let weight_norm = r.flag("weight_norm")?;
    let init = match r.u8()? {
        0 => Init::FanIn,
        1 => Init::Normal { std: r.f64()? },
        c => return Err(Error::Checkpoint(format!("unknown init code {c}"))),
    };
    let config = ModelConfig {
        variant,
        input_dim: dims[0],
        channels: dims[1],
        depth: dims[2],
        kernel: dims[3],
        classes: dims[4],
        seed,
        activation,
        norm,
        weight_norm,
        init,
    };
    let mut model = build_model(&config).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let lengths: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let params = r.arrays(&lengths, "parameter")?;
    let step = r.u64()?;
    let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let m = r.arrays(&lengths, "first moment")?;
    let v = r.arrays(&lengths, "second moment")?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    for (dst, src) in model.params_mut().into_iter().zip(params) {
        dst.copy_from_slice(&src);
    }
    Ok(Checkpoint {
        model,
        optimizer: AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step,
            m,
            v,
        },
    })
}

pub fn checkpoint_save(path: impl AsRef<Path>, model: &Model, optimizer: &AdamState) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, optimizer)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
