//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "PWSICKPT"
//! version  u32      1
//! cfg_len  u32      length of the JSON network config that follows
//! cfg      bytes    NetConfig as JSON
//! seed     u64      training seed
//! n_tens   u32      number of parameter tensors
//! per tensor: name_len u16, name utf8, ndim u8, dims u64 x ndim, data f64 x prod(dims)
//! opt_kind u8       0 adam, 1 sgd
//! step     u64
//! moments  u8       1 if m and v follow
//! m, v     f64 x n_params each (present only if moments == 1)
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnet::network::{NetConfig, Network};
use crate::nnet::optim::{OptimizerKind, OptimizerState};

pub const MAGIC: &[u8; 8] = b"PWSICKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub seed: u64,
    pub params: Vec<f64>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = Network::new(self.config.clone())?;
        if self.params.len() != net.n_params {
            return Err(Error::invalid("parameter count does not match config"));
        }
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config)?;
        b.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        b.extend_from_slice(&cfg);
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&(net.layout.len() as u32).to_le_bytes());
        for t in &net.layout {
            b.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            b.extend_from_slice(t.name.as_bytes());
            b.push(t.shape.len() as u8);
            for &d in &t.shape {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &self.params[t.range()] {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.optimizer {
            Some(o) => {
                b.push(match o.kind {
                    OptimizerKind::Adam => 0,
                    OptimizerKind::Sgd => 1,
                });
                b.extend_from_slice(&o.step.to_le_bytes());
                b.push(1);
                for v in o.m.iter().chain(&o.v) {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => {
                b.push(0);
                b.extend_from_slice(&0u64.to_le_bytes());
                b.push(0);
            }
        }
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::invalid("not a checkpoint file"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
        }
        let cfg_len = read_u32(&mut r)? as usize;
        let mut cfg = vec![0u8; cfg_len];
        read_exact(&mut r, &mut cfg)?;
        let config: NetConfig = serde_json::from_slice(&cfg)?;
        let net = Network::new(config.clone())?;
        let seed = read_u64(&mut r)?;
        let n_tens = read_u32(&mut r)? as usize;
        if n_tens != net.layout.len() {
            return Err(Error::invalid("tensor count does not match config"));
        }
        let mut params = vec![0.0; net.n_params];
        for t in &net.layout {
            let name_len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            if name != t.name.as_bytes() {
                return Err(Error::invalid(format!("unexpected tensor {}", String::from_utf8_lossy(&name))));
            }
            let mut nd = [0u8; 1];
            read_exact(&mut r, &mut nd)?;
            let dims = (0..nd[0]).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims != t.shape {
                return Err(Error::invalid(format!("tensor {} has shape {dims:?}, expected {:?}", t.name, t.shape)));
            }
            for v in &mut params[t.range()] {
                *v = read_f64(&mut r)?;
            }
        }
        let mut kind = [0u8; 1];
        read_exact(&mut r, &mut kind)?;
        let step = read_u64(&mut r)?;
        let mut has = [0u8; 1];
        read_exact(&mut r, &mut has)?;
        let optimizer = if has[0] == 1 {
            let kind = if kind[0] == 1 { OptimizerKind::Sgd } else { OptimizerKind::Adam };
            let mut o = OptimizerState::new(kind, net.n_params);
            o.step = step;
            for v in o.m.iter_mut().chain(o.v.iter_mut()) {
                *v = read_f64(&mut r)?;
            }
            Some(o)
        } else {
            None
        };
        if (r.position() as usize) != bytes.len() {
            return Err(Error::invalid("trailing bytes after checkpoint"));
        }
        Ok(Self {
            config,
            seed,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::invalid("truncated checkpoint"))
}

fn read_u16(r: &mut Cursor<&[u8]>) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut Cursor<&[u8]>) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
