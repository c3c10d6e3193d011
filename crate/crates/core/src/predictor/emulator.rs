//! Attention-gated encoder-decoder emulator and its weight-file format.
//!
//! Architecture `attn-unet-v1` on a `2 × K × K` input (ABS counts, GU counts):
//!
//! ```text
//! enc1  conv3x3 2→16, conv3x3 16→16            K
//! enc2  maxpool2, conv3x3 16→32, 32→32         K/2
//! bott  maxpool2, conv3x3 32→64, 64→64         K/4
//! up ×2, ag2(skip=enc2, gate=up), cat → 96
//! dec2  conv3x3 96→32, 32→32                   K/2
//! up ×2, ag1(skip=enc1, gate=up), cat → 48
//! dec1  conv3x3 48→16, 16→16                   K
//! head  conv1x1 16→1, sigmoid
//! ```
//!
//! Every 3×3 convolution uses zero padding 1, a bias and ReLU. An attention
//! gate computes `x · σ(psi(relu(theta_x(x) + phi_g(g))))` with 1×1
//! projections to 16 channels and then to 1. Weights are `[out, in, kh, kw]`.
//!
//! File layout: `b"ABSEMUL1"`, a `u32` little-endian header length, a UTF-8
//! JSON header `{"arch", "k", "tensors": [{"name", "shape", "offset"}]}`,
//! then the little-endian `f32` blob. Offsets count elements, not bytes.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmap::Pattern;
use crate::scalar::Real;

use super::{check_resolution, CoveragePredictor, ProbabilityMap};

pub const MAGIC: &[u8; 8] = b"ABSEMUL1";
pub const ARCH: &str = "attn-unet-v1";
const GATE_CHANNELS: usize = 16;

/// Tensor names and shapes of the architecture, in file order.
pub fn arch_tensors() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut conv = |name: &str, o: usize, i: usize, k: usize| {
        out.push((format!("{name}.weight"), vec![o, i, k, k]));
        out.push((format!("{name}.bias"), vec![o]));
    };
    for (block, cin, c) in [("enc1", 2, 16), ("enc2", 16, 32), ("bott", 32, 64)] {
        conv(&format!("{block}.conv1"), c, cin, 3);
        conv(&format!("{block}.conv2"), c, c, 3);
    }
    conv("ag2.theta_x", GATE_CHANNELS, 32, 1);
    conv("ag2.phi_g", GATE_CHANNELS, 64, 1);
    conv("ag2.psi", 1, GATE_CHANNELS, 1);
    conv("dec2.conv1", 32, 96, 3);
    conv("dec2.conv2", 32, 32, 3);
    conv("ag1.theta_x", GATE_CHANNELS, 16, 1);
    conv("ag1.phi_g", GATE_CHANNELS, 32, 1);
    conv("ag1.psi", 1, GATE_CHANNELS, 1);
    conv("dec1.conv1", 16, 48, 3);
    conv("dec1.conv2", 16, 16, 3);
    conv("head", 1, 16, 1);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: String,
    k: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Weights of an `attn-unet-v1` model, in architecture order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmulatorModel<T> {
    pub k: usize,
    pub tensors: Vec<Tensor<T>>,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || !k.is_multiple_of(4) {
        return Err(Error::Shape(format!(
            "grid resolution {k} must be a positive multiple of 4"
        )));
    }
    Ok(())
}

impl<T: Real> EmulatorModel<T> {
    pub fn zeros(k: usize) -> Result<Self> {
        check_k(k)?;
        let tensors = arch_tensors()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                Tensor {
                    name,
                    shape,
                    data: vec![T::zero(); n],
                }
            })
            .collect();
        Ok(Self { k, tensors })
    }

    /// Uniform `±1/√fan_in` initialisation.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(k)?;
        let mut fan_in = 1;
        for t in &mut m.tensors {
            if t.shape.len() == 4 {
                fan_in = t.shape[1] * t.shape[2] * t.shape[3];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(m)
    }

    fn tensor(&self, name: &str) -> &Tensor<T> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .expect("model validated against the architecture")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for t in &self.tensors {
            entries.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
            });
            offset += t.data.len();
        }
        let header = serde_json::to_vec(&Header {
            arch: ARCH.to_string(),
            k: self.k,
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + offset * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(fmt("missing ABSEMUL1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() < hlen {
            return Err(fmt("header length exceeds file size"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.arch != ARCH {
            return Err(Error::Format(format!(
                "unsupported architecture {:?}",
                header.arch
            )));
        }
        check_k(header.k).map_err(|e| Error::Format(e.to_string()))?;
        let blob = &body[hlen..];
        if !blob.len().is_multiple_of(4) {
            return Err(fmt("weight blob is not a whole number of f32 values"));
        }
        let n_floats = blob.len() / 4;
        let expected = arch_tensors();
        if header.tensors.len() != expected.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                expected.len(),
                header.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(expected.len());
        for (name, shape) in expected {
            let e = header
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if e.shape != shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    e.shape
                )));
            }
            let n: usize = shape.iter().product();
            if e.offset.checked_add(n).is_none_or(|end| end > n_floats) {
                return Err(Error::Format(format!("tensor {name} runs past the blob")));
            }
            let data = blob[e.offset * 4..(e.offset + n) * 4]
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self {
            k: header.k,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Forward pass on a row-major `2 × k × k` input.
    pub fn forward(&self, input: &[T]) -> Result<ProbabilityMap<T>> {
        let k = self.k;
        if input.len() != 2 * k * k {
            return Err(Error::Shape(format!(
                "input has {} values, expected 2×{k}×{k}",
                input.len()
            )));
        }
        let x = Map {
            c: 2,
            h: k,
            w: k,
            data: input.to_vec(),
        };
        let e1 = self.block(&x, "enc1");
        let e2 = self.block(&e1.max_pool(), "enc2");
        let b = self.block(&e2.max_pool(), "bott");
        let u2 = b.upsample();
        let d2 = self.block(&Map::concat(&self.gate(&e2, &u2, "ag2"), &u2), "dec2");
        let u1 = d2.upsample();
        let d1 = self.block(&Map::concat(&self.gate(&e1, &u1, "ag1"), &u1), "dec1");
        let out = self.conv(&d1, "head", Act::Sigmoid);
        Ok(ProbabilityMap { k, probs: out.data })
    }

    fn conv(&self, x: &Map<T>, name: &str, act: Act) -> Map<T> {
        let w = self.tensor(&format!("{name}.weight"));
        let b = self.tensor(&format!("{name}.bias"));
        x.conv(&w.data, &b.data, w.shape[0], w.shape[2], act)
    }

    fn block(&self, x: &Map<T>, name: &str) -> Map<T> {
        let h = self.conv(x, &format!("{name}.conv1"), Act::Relu);
        self.conv(&h, &format!("{name}.conv2"), Act::Relu)
    }

    fn gate(&self, skip: &Map<T>, g: &Map<T>, name: &str) -> Map<T> {
        let tx = self.conv(skip, &format!("{name}.theta_x"), Act::None);
        let pg = self.conv(g, &format!("{name}.phi_g"), Act::None);
        let mut s = tx;
        for (a, b) in s.data.iter_mut().zip(&pg.data) {
            *a = (*a + *b).max(T::zero());
        }
        let alpha = self.conv(&s, &format!("{name}.psi"), Act::Sigmoid);
        let mut out = skip.clone();
        let hw = skip.h * skip.w;
        for ch in out.data.chunks_mut(hw) {
            for (v, a) in ch.iter_mut().zip(&alpha.data) {
                *v = *v * *a;
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Act {
    None,
    Relu,
    Sigmoid,
}

/// Channel-major feature map.
#[derive(Clone)]
struct Map<T> {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Real> Map<T> {
    fn conv(&self, weight: &[T], bias: &[T], c_out: usize, ks: usize, act: Act) -> Map<T> {
        let (h, w) = (self.h, self.w);
        let hw = h * w;
        let pad = (ks / 2) as isize;
        let mut out = vec![T::zero(); c_out * hw];
        for o in 0..c_out {
            let dst = &mut out[o * hw..(o + 1) * hw];
            dst.iter_mut().for_each(|v| *v = bias[o]);
            for i in 0..self.c {
                let src = &self.data[i * hw..(i + 1) * hw];
                for ky in 0..ks {
                    let dy = ky as isize - pad;
                    for kx in 0..ks {
                        let dx = kx as isize - pad;
                        let wv = weight[((o * self.c + i) * ks + ky) * ks + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let y0 = (-dy).max(0) as usize;
                        let y1 = (h as isize - dy).min(h as isize) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let drow = &mut dst[y * w + x0..y * w + x1];
                            let srow = &src[sy * w + (x0 as isize + dx) as usize
                                ..sy * w + (x1 as isize + dx) as usize];
                            for (d, s) in drow.iter_mut().zip(srow) {
                                *d = *d + wv * *s;
                            }
                        }
                    }
                }
            }
        }
        match act {
            Act::None => {}
            Act::Relu => out.iter_mut().for_each(|v| *v = v.max(T::zero())),
            Act::Sigmoid => out
                .iter_mut()
                .for_each(|v| *v = T::one() / (T::one() + (-*v).exp())),
        }
        Map {
            c: c_out,
            h,
            w,
            data: out,
        }
    }

    fn max_pool(&self) -> Map<T> {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = Vec::with_capacity(self.c * h * w);
        for ch in 0..self.c {
            let src = &self.data[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for y in 0..h {
                for x in 0..w {
                    let at = |yy: usize, xx: usize| src[yy * self.w + xx];
                    let m = at(2 * y, 2 * x)
                        .max(at(2 * y, 2 * x + 1))
                        .max(at(2 * y + 1, 2 * x))
                        .max(at(2 * y + 1, 2 * x + 1));
                    data.push(m);
                }
            }
        }
        Map {
            c: self.c,
            h,
            w,
            data,
        }
    }

    fn upsample(&self) -> Map<T> {
        let (h, w) = (self.h * 2, self.w * 2);
        let mut data = Vec::with_capacity(self.c * h * w);
        for ch in 0..self.c {
            let src = &self.data[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for y in 0..h {
                for x in 0..w {
                    data.push(src[(y / 2) * self.w + x / 2]);
                }
            }
        }
        Map {
            c: self.c,
            h,
            w,
            data,
        }
    }

    fn concat(a: &Map<T>, b: &Map<T>) -> Map<T> {
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Map {
            c: a.c + b.c,
            h: a.h,
            w: a.w,
            data,
        }
    }
}

/// Learned predictor backed by an [`EmulatorModel`].
pub struct Emulator {
    model: EmulatorModel<f32>,
}

impl Emulator {
    pub fn new(model: EmulatorModel<f32>) -> Self {
        Self { model }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(EmulatorModel::load(path)?))
    }

    pub fn model(&self) -> &EmulatorModel<f32> {
        &self.model
    }
}

/// Stacks ABS and GU counts into the `2 × K × K` model input.
pub fn stack_input<T: Real>(abs: &Pattern, gu: &Pattern) -> Vec<T> {
    abs.counts
        .iter()
        .chain(&gu.counts)
        .map(|&c| T::lit(c as f64))
        .collect()
}

impl CoveragePredictor for Emulator {
    fn resolution(&self) -> usize {
        self.model.k
    }

    fn predict(&self, abs: &Pattern, gu: &Pattern) -> Result<ProbabilityMap<f64>> {
        check_resolution(self.model.k, abs, gu)?;
        Ok(self.model.forward(&stack_input(abs, gu))?.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_outputs_half() {
        let m = EmulatorModel::<f64>::zeros(8).unwrap();
        let out = m.forward(&vec![1.0; 128]).unwrap();
        assert!(out.probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn byte_round_trip() {
        let m = EmulatorModel::<f32>::random(8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let back = EmulatorModel::<f32>::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_corrupt_files() {
        let m = EmulatorModel::<f32>::zeros(8).unwrap();
        let bytes = m.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmulatorModel::<f32>::from_bytes(&bad),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            EmulatorModel::<f32>::from_bytes(&bytes[..bytes.len() - 4]),
            Err(Error::Format(_))
        ));
        assert!(EmulatorModel::<f32>::zeros(6).is_err());
    }

    #[test]
    fn parameter_count() {
        let n: usize = arch_tensors()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        let conv = |o: usize, i: usize, k: usize| o * i * k * k + o;
        let want = conv(16, 2, 3)
            + conv(16, 16, 3)
            + conv(32, 16, 3)
            + conv(32, 32, 3)
            + conv(64, 32, 3)
            + conv(64, 64, 3)
            + conv(16, 32, 1)
            + conv(16, 64, 1)
            + conv(1, 16, 1)
            + conv(32, 96, 3)
            + conv(32, 32, 3)
            + conv(16, 16, 1)
            + conv(16, 32, 1)
            + conv(1, 16, 1)
            + conv(16, 48, 3)
            + conv(16, 16, 3)
            + conv(1, 16, 1);
        assert_eq!(n, want);
    }
}
