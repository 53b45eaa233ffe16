//! Weight files: a flat little-endian f32 blob plus a text sidecar listing
//! each tensor's name and shape in storage order.
//!
//! ```text
//! detpipe-weights 1
//! rpn.conv.weight 256 6 3 3
//! rpn.conv.bias 256
//! ...
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::head::DetectHead;
use super::layers::{Conv3x3, Linear};
use super::rpn::RpnHead;

const MAGIC: &str = "detpipe-weights 1";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad sidecar: {0}")]
    Sidecar(String),
    #[error("weight blob has {actual} bytes, sidecar describes {expected}")]
    Size { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub rpn: RpnHead,
    pub head: DetectHead,
}

/// `model.bin` -> `model.shapes`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("shapes")
}

struct Tensor<'a> {
    name: &'static str,
    shape: Vec<usize>,
    data: &'a [f64],
}

impl ModelWeights {
    fn tensors(&self) -> Vec<Tensor<'_>> {
        let conv = &self.rpn.conv;
        let mut out = vec![
            Tensor {
                name: "rpn.conv.weight",
                shape: vec![conv.out_channels, conv.in_channels, 3, 3],
                data: &conv.weight,
            },
            Tensor {
                name: "rpn.conv.bias",
                shape: vec![conv.out_channels],
                data: &conv.bias,
            },
        ];
        let linears: [(&'static str, &'static str, &Linear); 5] = [
            ("rpn.score.weight", "rpn.score.bias", &self.rpn.score),
            ("rpn.delta.weight", "rpn.delta.bias", &self.rpn.delta),
            ("head.fc.weight", "head.fc.bias", &self.head.fc),
            ("head.cls.weight", "head.cls.bias", &self.head.cls),
            ("head.reg.weight", "head.reg.bias", &self.head.reg),
        ];
        for (wn, bn, l) in linears {
            out.push(Tensor {
                name: wn,
                shape: vec![l.out_dim, l.in_dim],
                data: &l.weight,
            });
            out.push(Tensor {
                name: bn,
                shape: vec![l.out_dim],
                data: &l.bias,
            });
        }
        out
    }

    /// Rounds every parameter to f32 precision so a save/load cycle is exact.
    pub fn quantize_f32(&mut self) {
        let all = [
            &mut self.rpn.conv.weight,
            &mut self.rpn.conv.bias,
            &mut self.rpn.score.weight,
            &mut self.rpn.score.bias,
            &mut self.rpn.delta.weight,
            &mut self.rpn.delta.bias,
            &mut self.head.fc.weight,
            &mut self.head.fc.bias,
            &mut self.head.cls.weight,
            &mut self.head.cls.bias,
            &mut self.head.reg.weight,
            &mut self.head.reg.bias,
        ];
        for v in all {
            v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    pub fn to_bytes(&self) -> (Vec<u8>, String) {
        let mut blob = Vec::new();
        let mut sidecar = format!("{MAGIC}\n");
        for t in self.tensors() {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            sidecar.push_str(&format!("{} {}\n", t.name, dims.join(" ")));
            for &v in t.data {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        (blob, sidecar)
    }

    pub fn from_bytes(blob: &[u8], sidecar: &str) -> Result<Self, WeightsError> {
        let mut lines = sidecar.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(WeightsError::Sidecar(format!("missing {MAGIC:?} header")));
        }
        let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let name = parts.next().unwrap_or_default().to_string();
            let shape = parts
                .map(|p| p.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| WeightsError::Sidecar(format!("bad shape in line {line:?}")))?;
            if shape.is_empty() {
                return Err(WeightsError::Sidecar(format!("no shape for {name}")));
            }
            entries.push((name, shape));
        }
        let expected: usize = entries.iter().map(|(_, s)| s.iter().product::<usize>() * 4).sum();
        if expected != blob.len() {
            return Err(WeightsError::Size {
                expected,
                actual: blob.len(),
            });
        }
        let take = |name: &str, rank: usize| -> Result<(Vec<usize>, Vec<f64>), WeightsError> {
            let (n, shape) = entries
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| WeightsError::Sidecar(format!("missing tensor {name}")))?;
            if shape.len() != rank {
                return Err(WeightsError::Sidecar(format!("{n} should have rank {rank}")));
            }
            // tensors are stored in sidecar order
            let start: usize = entries
                .iter()
                .take_while(|(m, _)| m != name)
                .map(|(_, s)| s.iter().product::<usize>() * 4)
                .sum();
            let len: usize = shape.iter().product();
            let data = blob[start..start + len * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            Ok((shape.clone(), data))
        };

        let (cs, cw) = take("rpn.conv.weight", 4)?;
        if cs[2] != 3 || cs[3] != 3 {
            return Err(WeightsError::Sidecar("rpn.conv.weight must be 3x3".into()));
        }
        let (_, cb) = take("rpn.conv.bias", 1)?;
        let conv = Conv3x3 {
            in_channels: cs[1],
            out_channels: cs[0],
            weight: cw,
            bias: cb,
        };
        let linear = |w: &str, b: &str| -> Result<Linear, WeightsError> {
            let (s, weight) = take(w, 2)?;
            let (_, bias) = take(b, 1)?;
            Ok(Linear {
                in_dim: s[1],
                out_dim: s[0],
                weight,
                bias,
            })
        };
        let score = linear("rpn.score.weight", "rpn.score.bias")?;
        let delta = linear("rpn.delta.weight", "rpn.delta.bias")?;
        let fc = linear("head.fc.weight", "head.fc.bias")?;
        let cls = linear("head.cls.weight", "head.cls.bias")?;
        let reg = linear("head.reg.weight", "head.reg.bias")?;
        let weights = ModelWeights {
            rpn: RpnHead { conv, score, delta },
            head: DetectHead { fc, cls, reg },
        };
        let shape_ok = weights.rpn.conv.check().is_ok()
            && [&weights.rpn.score, &weights.rpn.delta, &weights.head.fc, &weights.head.cls, &weights.head.reg]
                .iter()
                .all(|l| l.check().is_ok());
        if !shape_ok {
            return Err(WeightsError::Sidecar("bias length does not match weight shape".into()));
        }
        Ok(weights)
    }

    pub fn save(&self, bin: &Path) -> Result<(), WeightsError> {
        let (blob, sidecar) = self.to_bytes();
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| WeightsError::Io { path, source }
        };
        fs::write(bin, blob).map_err(io_err(bin))?;
        let side = sidecar_path(bin);
        fs::write(&side, sidecar).map_err(io_err(&side))?;
        Ok(())
    }

    pub fn load(bin: &Path) -> Result<Self, WeightsError> {
        let blob = fs::read(bin).map_err(|source| WeightsError::Io {
            path: bin.to_path_buf(),
            source,
        })?;
        let side = sidecar_path(bin);
        let sidecar = fs::read_to_string(&side).map_err(|source| WeightsError::Io {
            path: side.clone(),
            source,
        })?;
        Self::from_bytes(&blob, &sidecar)
    }
}
