//! Binary model files and small CSV exports.
//!
//! Every model file starts with a four-byte magic and a little-endian `u32`
//! version, followed by little-endian `u32` dimensions and an `f32` payload.
//!
//! - `RBM1`: `n_visible`, `n_hidden`, `W` (row-major, visible × hidden), `b_V`, `b_H`
//! - `LRO1`: `n_hidden`, `n_classes`, `C` (row-major, hidden × classes), `c`
//! - `LPJ1`: `n_classes`, `n_hidden`, `P` (row-major, classes × hidden)
//! - `CLS1`: input side, padding, block count, (channels, convolutions) per
//!   block, dense count, units per dense layer, parameter count, parameters

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rbmdyn_core::biasing::{HiddenBias, LabelProjection, LinearReadout};
use rbmdyn_core::classifier::{Architecture, Classifier, ConvBlock};
use rbmdyn_core::rbm::Rbm;

use crate::error::{AppError, Result};

pub const FORMAT_VERSION: u32 = 1;

struct Encoder(Vec<u8>);

impl Encoder {
    fn new(magic: &[u8; 4]) -> Self {
        let mut e = Self(magic.to_vec());
        e.u32(FORMAT_VERSION);
        e
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn dim(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    fn f32s<'a>(&mut self, values: impl IntoIterator<Item = &'a f32>) {
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.get(..4) != Some(&magic[..]) {
            return Err(AppError::data(format!(
                "not a {what} file (expected magic {})",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut d = Self { bytes, pos: 4, what };
        let version = d.u32()?;
        if version != FORMAT_VERSION {
            return Err(AppError::data(format!("unsupported {what} file version {version}")));
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AppError::data(format!("truncated {} file", self.what)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| AppError::data("dimension overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("four bytes"))).collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(AppError::data(format!(
                "{} trailing bytes after {} payload",
                self.bytes.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}

pub fn encode_rbm(rbm: &Rbm) -> Vec<u8> {
    let mut e = Encoder::new(b"RBM1");
    e.dim(rbm.n_visible());
    e.dim(rbm.n_hidden());
    e.f32s(rbm.weights().iter());
    e.f32s(rbm.visible_bias().iter());
    e.f32s(rbm.hidden_bias().iter());
    e.0
}

pub fn decode_rbm(bytes: &[u8]) -> Result<Rbm> {
    let mut d = Decoder::new(bytes, b"RBM1", "RBM")?;
    let (nv, nh) = (d.dim()?, d.dim()?);
    let w = d.f32s(nv * nh)?;
    let bv = d.f32s(nv)?;
    let bh = d.f32s(nh)?;
    d.finish()?;
    let w = Array2::from_shape_vec((nv, nh), w).expect("length read to shape");
    Ok(Rbm::new(w, Array1::from(bv), Array1::from(bh))?)
}

pub fn encode_readout(r: &LinearReadout) -> Vec<u8> {
    let mut e = Encoder::new(b"LRO1");
    e.dim(r.weights().nrows());
    e.dim(r.weights().ncols());
    e.f32s(r.weights().iter());
    e.f32s(r.bias().iter());
    e.0
}

pub fn decode_readout(bytes: &[u8]) -> Result<LinearReadout> {
    let mut d = Decoder::new(bytes, b"LRO1", "readout")?;
    let (nh, nc) = (d.dim()?, d.dim()?);
    let w = d.f32s(nh * nc)?;
    let b = d.f32s(nc)?;
    d.finish()?;
    let w = Array2::from_shape_vec((nh, nc), w).expect("length read to shape");
    Ok(LinearReadout::new(w, Array1::from(b))?)
}

pub fn encode_projection(p: &LabelProjection) -> Vec<u8> {
    let mut e = Encoder::new(b"LPJ1");
    e.dim(p.rows().nrows());
    e.dim(p.rows().ncols());
    e.f32s(p.rows().iter());
    e.0
}

pub fn decode_projection(bytes: &[u8]) -> Result<LabelProjection> {
    let mut d = Decoder::new(bytes, b"LPJ1", "label projection")?;
    let (nc, nh) = (d.dim()?, d.dim()?);
    let rows = d.f32s(nc * nh)?;
    d.finish()?;
    let rows = Array2::from_shape_vec((nc, nh), rows).expect("length read to shape");
    Ok(LabelProjection::new(rows)?)
}

pub fn encode_classifier(c: &Classifier<f32>) -> Vec<u8> {
    let arch = c.architecture();
    let mut e = Encoder::new(b"CLS1");
    e.dim(arch.input_side);
    e.dim(arch.padding);
    e.dim(arch.blocks.len());
    for b in &arch.blocks {
        e.dim(b.channels);
        e.dim(b.convs);
    }
    e.dim(arch.dense.len());
    for &u in &arch.dense {
        e.dim(u);
    }
    let params = c.params_flat();
    e.dim(params.len());
    e.f32s(params.iter());
    e.0
}

pub fn decode_classifier(bytes: &[u8]) -> Result<Classifier<f32>> {
    let mut d = Decoder::new(bytes, b"CLS1", "classifier")?;
    let input_side = d.dim()?;
    let padding = d.dim()?;
    let n_blocks = d.dim()?;
    let blocks = (0..n_blocks)
        .map(|_| Ok(ConvBlock { channels: d.dim()?, convs: d.dim()? }))
        .collect::<Result<Vec<_>>>()?;
    let n_dense = d.dim()?;
    let dense = (0..n_dense).map(|_| d.dim()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        input_side,
        padding,
        blocks,
        dense,
    };
    let mut c = Classifier::<f32>::zeros(arch).map_err(|e| AppError::data(format!("classifier architecture: {e}")))?;
    let n = d.dim()?;
    if n != c.parameter_count() {
        return Err(AppError::data(format!(
            "classifier file holds {n} parameters, architecture needs {}",
            c.parameter_count()
        )));
    }
    let params = d.f32s(n)?;
    d.finish()?;
    if params.iter().any(|v| !v.is_finite()) {
        return Err(AppError::data("classifier parameters are not finite"));
    }
    c.set_params_flat(&params)?;
    Ok(c)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

pub fn load_rbm(path: &Path) -> Result<Rbm> {
    decode_rbm(&read_file(path)?).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

pub fn load_readout(path: &Path) -> Result<LinearReadout> {
    decode_readout(&read_file(path)?).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

pub fn load_projection(path: &Path) -> Result<LabelProjection> {
    decode_projection(&read_file(path)?).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

pub fn load_classifier(path: &Path) -> Result<Classifier<f32>> {
    decode_classifier(&read_file(path)?).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

/// `index,value` rows.
pub fn bias_csv(bias: &HiddenBias) -> Vec<u8> {
    let mut out = b"index,value\n".to_vec();
    for (i, v) in bias.values().iter().enumerate() {
        writeln!(out, "{i},{v}").expect("write to Vec");
    }
    out
}

/// One column per named series, one row per step (1-based).
pub fn curves_csv(names: &[String], series: &[Vec<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    write!(out, "step").expect("write to Vec");
    for n in names {
        write!(out, ",{n}").expect("write to Vec");
    }
    out.push(b'\n');
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..len {
        write!(out, "{}", t + 1).expect("write to Vec");
        for s in series {
            match s.get(t) {
                Some(v) => write!(out, ",{v}").expect("write to Vec"),
                None => out.push(b','),
            }
        }
        out.push(b'\n');
    }
    out
}

/// Square matrix with row and column labels.
pub fn matrix_csv<R: AsRef<[f64]>>(labels: &[String], rows: &[R]) -> Vec<u8> {
    let mut out = Vec::new();
    write!(out, "from\\to").expect("write to Vec");
    for l in labels {
        write!(out, ",{l}").expect("write to Vec");
    }
    out.push(b'\n');
    for (l, row) in labels.iter().zip(rows) {
        write!(out, "{l}").expect("write to Vec");
        for v in row.as_ref() {
            write!(out, ",{v}").expect("write to Vec");
        }
        out.push(b'\n');
    }
    out
}

/// 8-bit binary PGM (`P5`); intensities in [0, 1] map to 0–255.
pub fn pgm(width: usize, height: usize, pixels: &[f32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}
