//! Self-describing binary checkpoints (`.ckpt`).
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"GLCK"
//! u32    format version (1)
//! u64    training step counter
//! f64    action scale
//! u32    obs dim, u32 act dim
//! 5 ×    network      (policy, q1, q2, q1_target, q2_target)
//! 3 ×    adam moments (policy, q1, q2)
//! ```
//!
//! A network is: `u32` layer-size count, the sizes as `u32`s, then per layer
//! the row-major weight matrix followed by the bias vector, all `f64`.
//! Adam moments reuse the network encoding twice (m then v) plus a `u64`
//! step count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::linalg::Mat;
use crate::nn::{AdamState, Mlp, MlpGrads};
use crate::rl::{RlConfig, RlState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> std::io::Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }
    fn net(&mut self, net: &Mlp) -> std::io::Result<()> {
        self.u32(net.sizes.len() as u32)?;
        for &s in &net.sizes {
            self.u32(s as u32)?;
        }
        for l in 0..net.n_layers() {
            self.f64s(&net.weights[l].data)?;
            self.f64s(&net.biases[l])?;
        }
        Ok(())
    }
    fn grads(&mut self, g: &MlpGrads) -> std::io::Result<()> {
        for l in 0..g.weights.len() {
            self.f64s(&g.weights[l].data)?;
            self.f64s(&g.biases[l])?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
    fn net(&mut self) -> Result<Mlp, CheckpointError> {
        let n_sizes = self.u32()? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(CheckpointError::Corrupt(format!(
                "implausible layer count {n_sizes}"
            )));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(self.u32()? as usize);
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..n_sizes - 1 {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            let data = self.f64s(rows * cols)?;
            weights.push(Mat::from_vec(rows, cols, data));
            biases.push(self.f64s(rows)?);
        }
        Ok(Mlp {
            sizes,
            weights,
            biases,
        })
    }
    fn grads_like(&mut self, net: &Mlp) -> Result<MlpGrads, CheckpointError> {
        let mut g = MlpGrads::zeros_like(net);
        for l in 0..net.n_layers() {
            let n = g.weights[l].data.len();
            g.weights[l].data = self.f64s(n)?;
            g.biases[l] = self.f64s(net.biases[l].len())?;
        }
        Ok(g)
    }
}

/// Write the full learner state (networks, targets, optimizer moments) plus
/// the training step counter.
pub fn save_checkpoint(path: &Path, state: &RlState, step: u64) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = Writer(BufWriter::new(File::create(path)?));
    w.0.write_all(CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION)?;
    w.u64(step)?;
    w.f64(state.action_scale)?;
    w.u32(state.obs_dim as u32)?;
    w.u32(state.act_dim as u32)?;
    for net in [
        &state.policy,
        &state.q1,
        &state.q2,
        &state.q1_target,
        &state.q2_target,
    ] {
        w.net(net)?;
    }
    for opt in [&state.opt_policy, &state.opt_q1, &state.opt_q2] {
        w.grads(&opt.m)?;
        w.grads(&opt.v)?;
        w.u64(opt.t)?;
    }
    w.0.flush()?;
    Ok(())
}

/// Load a checkpoint. Network shapes come from the file; `cfg` supplies the
/// training hyperparameters. Returns the state and the stored step counter.
pub fn load_checkpoint(path: &Path, cfg: RlConfig) -> Result<(RlState, u64), CheckpointError> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.0.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let step = r.u64()?;
    let action_scale = r.f64()?;
    let obs_dim = r.u32()? as usize;
    let act_dim = r.u32()? as usize;
    let policy = r.net()?;
    let q1 = r.net()?;
    let q2 = r.net()?;
    let q1_target = r.net()?;
    let q2_target = r.net()?;
    if policy.input_dim() != obs_dim || policy.output_dim() != 2 * act_dim {
        return Err(CheckpointError::Corrupt(
            "policy shape disagrees with stored dims".into(),
        ));
    }
    if q1.input_dim() != obs_dim + act_dim {
        return Err(CheckpointError::Corrupt(
            "critic shape disagrees with stored dims".into(),
        ));
    }
    let mut read_opt = |net: &Mlp| -> Result<AdamState, CheckpointError> {
        let m = r.grads_like(net)?;
        let v = r.grads_like(net)?;
        let t = r.u64()?;
        Ok(AdamState { m, v, t })
    };
    let opt_policy = read_opt(&policy)?;
    let opt_q1 = read_opt(&q1)?;
    let opt_q2 = read_opt(&q2)?;
    Ok((
        RlState {
            cfg,
            obs_dim,
            act_dim,
            action_scale,
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            opt_policy,
            opt_q1,
            opt_q2,
            updates: step,
        },
        step,
    ))
}
