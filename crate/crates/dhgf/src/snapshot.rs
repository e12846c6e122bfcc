//! Binary snapshots of models and datasets.
//!
//! Layout (little endian): magic `DHGF`, `u32` format version, a length
//! prefixed payload tag (`hgf`, `mlp`, `pcn` or `dataset`), then the payload.
//! Models store their [`ModelSpec`] followed by every learnable and stateful
//! quantity, so a restored model continues training exactly where it stopped.

use std::path::Path;

use dhgf_core::data::Dataset;
use dhgf_core::Rng;

use crate::error::{AppResult, DataError};
use crate::model::{HgfOptions, Method, Model, ModelSpec, RuleName};

pub const MAGIC: &[u8; 4] = b"DHGF";
pub const VERSION: u32 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> DataError {
        DataError::parse(self.path, self.pos, msg)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated: need {n} more bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }
    fn bool(&mut self) -> Result<bool, DataError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(self.err(format!("invalid flag {b}"))),
        }
    }
    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, DataError> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(self.err(format!("length {n} exceeds the remaining data")));
        }
        Ok(n as usize)
    }
    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, DataError> {
        let n = self.len()?;
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| DataError::parse(self.path, at, "invalid UTF-8"))
    }
    /// Reads a vector into `dst`, whose length must match.
    fn f64s_into(&mut self, dst: &mut [f64]) -> Result<(), DataError> {
        let n = self.len()?;
        if n != dst.len() {
            return Err(self.err(format!("expected {} values, found {n}", dst.len())));
        }
        for d in dst {
            *d = self.f64()?;
        }
        Ok(())
    }
}

fn header(w: &mut Writer, tag: &str) {
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.str(tag);
}

fn read_header(r: &mut Reader) -> Result<String, DataError> {
    if r.take(4)? != MAGIC {
        r.pos = 0;
        return Err(r.err("not a DHGF snapshot"));
    }
    let v = r.u32()?;
    if v != VERSION {
        return Err(r.err(format!("unsupported snapshot version {v}")));
    }
    r.str()
}

fn write_spec(w: &mut Writer, s: &ModelSpec) {
    for v in [s.input, s.depth, s.width, s.output] {
        w.u64(v as u64);
    }
    w.f64(s.lr);
    let o = &s.hgf;
    w.f64(o.omega);
    w.u8(o.volatility as u8);
    w.f64(o.omega_vol);
    w.u8(o.reset_precision as u8);
    w.u8(match o.rule {
        RuleName::Standard => 0,
        RuleName::Precision => 1,
        RuleName::Ratio => 2,
    });
    w.u8(o.ratio_predicted as u8);
    w.u8(o.precision_weighted_output as u8);
    w.f64(o.prior_precision);
}

fn read_spec(r: &mut Reader, method: Method) -> Result<ModelSpec, DataError> {
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u64()? as usize;
    }
    let lr = r.f64()?;
    let omega = r.f64()?;
    let volatility = r.bool()?;
    let omega_vol = r.f64()?;
    let reset_precision = r.bool()?;
    let rule = match r.u8()? {
        0 => RuleName::Standard,
        1 => RuleName::Precision,
        2 => RuleName::Ratio,
        b => return Err(r.err(format!("unknown weight rule {b}"))),
    };
    let hgf = HgfOptions {
        omega,
        volatility,
        omega_vol,
        reset_precision,
        rule,
        ratio_predicted: r.bool()?,
        precision_weighted_output: r.bool()?,
        prior_precision: r.f64()?,
    };
    Ok(ModelSpec {
        method,
        input: dims[0],
        depth: dims[1],
        width: dims[2],
        output: dims[3],
        lr,
        hgf,
    })
}

/// Serialises `model`, built from `spec`.
pub fn encode_model(spec: &ModelSpec, model: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    header(&mut w, model.method().name());
    write_spec(&mut w, spec);
    match model {
        Model::Hgf { net, .. } => {
            for l in &net.layers {
                for v in [&l.mu, &l.pi, &l.mu_hat, &l.pi_hat, &l.delta] {
                    w.f64s(v);
                }
            }
            for c in &net.couplings {
                w.f64s(&c.alpha);
                w.f64s(&c.bias);
            }
            for v in net.volatility.iter().flatten() {
                for x in [&v.mu_vol, &v.pi_vol, &v.mu_hat_vol, &v.pi_hat_vol, &v.vope] {
                    w.f64s(x);
                }
            }
            w.u64(net.volatility_floor_hits);
        }
        Model::Mlp { model, .. } => {
            w.f64s(&model.stack.params);
            write_adam(&mut w, &model.adam);
        }
        Model::Pcn { model } => {
            w.f64s(&model.stack.params);
            write_adam(&mut w, &model.adam);
        }
    }
    w.buf
}

fn write_adam(w: &mut Writer, a: &dhgf_core::baselines::AdamState) {
    w.u64(a.step);
    w.f64s(&a.m);
    w.f64s(&a.v);
}

fn read_adam(r: &mut Reader, a: &mut dhgf_core::baselines::AdamState) -> Result<(), DataError> {
    a.step = r.u64()?;
    r.f64s_into(&mut a.m)?;
    r.f64s_into(&mut a.v)
}

/// Restores a model and its spec from [`encode_model`] output; `path` is
/// only used in error messages.
pub fn decode_model(bytes: &[u8], path: &Path) -> AppResult<(ModelSpec, Model)> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        path,
    };
    let tag = read_header(&mut r)?;
    let method = Method::parse(&tag).ok_or_else(|| r.err(format!("payload `{tag}` is not a model")))?;
    let spec = read_spec(&mut r, method)?;
    // every parameter is overwritten below, so the init stream is irrelevant
    let mut model = Model::build(&spec, &mut Rng::new(0)).map_err(|e| r.err(format!("invalid model spec: {e}")))?;
    match &mut model {
        Model::Hgf { net, .. } => {
            for l in &mut net.layers {
                for v in [&mut l.mu, &mut l.pi, &mut l.mu_hat, &mut l.pi_hat, &mut l.delta] {
                    r.f64s_into(v)?;
                }
            }
            for c in &mut net.couplings {
                r.f64s_into(&mut c.alpha)?;
                r.f64s_into(&mut c.bias)?;
            }
            for v in net.volatility.iter_mut().flatten() {
                for x in [
                    &mut v.mu_vol,
                    &mut v.pi_vol,
                    &mut v.mu_hat_vol,
                    &mut v.pi_hat_vol,
                    &mut v.vope,
                ] {
                    r.f64s_into(x)?;
                }
            }
            net.volatility_floor_hits = r.u64()?;
        }
        Model::Mlp { model, .. } => {
            r.f64s_into(&mut model.stack.params)?;
            read_adam(&mut r, &mut model.adam)?;
        }
        Model::Pcn { model } => {
            r.f64s_into(&mut model.stack.params)?;
            read_adam(&mut r, &mut model.adam)?;
        }
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after the payload").into());
    }
    Ok((spec, model))
}

pub fn save_model(path: &Path, spec: &ModelSpec, model: &Model) -> AppResult<()> {
    write_atomic(path, &encode_model(spec, model))
}

pub fn load_model(path: &Path) -> AppResult<(ModelSpec, Model)> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_model(&bytes, path)
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    header(&mut w, "dataset");
    w.str(&ds.name);
    w.u64(ds.dim as u64);
    w.u64(ds.classes as u64);
    w.u64(ds.len() as u64);
    for &f in &ds.features {
        w.buf.extend_from_slice(&f.to_le_bytes());
    }
    w.buf.extend_from_slice(&ds.labels);
    w.buf
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> AppResult<Dataset> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        path,
    };
    let tag = read_header(&mut r)?;
    if tag != "dataset" {
        return Err(r.err(format!("payload `{tag}` is not a dataset")).into());
    }
    let name = r.str()?;
    let dim = r.u64()? as usize;
    let classes = r.u64()? as usize;
    let n = r.u64()? as usize;
    let need = n
        .checked_mul(dim)
        .and_then(|k| k.checked_mul(4))
        .and_then(|k| k.checked_add(n));
    if need != Some(bytes.len() - r.pos) {
        return Err(r
            .err(format!(
                "{n} samples of dimension {dim} do not match the remaining {} bytes",
                bytes.len() - r.pos
            ))
            .into());
    }
    let features = r
        .take(n * dim * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = r.take(n)?.to_vec();
    Ok(Dataset::new(name, features, labels, dim, classes)?)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> AppResult<()> {
    write_atomic(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> AppResult<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_dataset(&bytes, path)
}

/// Writes through a temporary sibling so a failure never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| DataError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))?;
    Ok(())
}
