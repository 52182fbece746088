//! `SLPW` parameter checkpoints.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic "SLPW" | version u32 | spec_len u64 | spec (JSON, spec_len bytes)
//! tensor_count u64 | tensors
//! has_training u8 | [epoch u64 | adam_step u64 | epoch_count u64 |
//!                    (loss f64, learning_rate f64) per epoch |
//!                    moment_count u64 | first moments | second moments]
//! ```
//!
//! A tensor is `ndim u32 | dims u64 × ndim | values f64`. Tensors follow
//! declaration order: per layer the weight (`fan_in × out`), bias, and with
//! normalization the scale, shift, running mean and running variance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::AdamState;
use super::params::NetworkParameters;
use super::spec::NetworkSpec;
use super::train::EpochRecord;
use crate::binio::OffsetReader;
use crate::error::{Result, SlpError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SLPW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    /// Completed epochs.
    pub epoch: usize,
    pub adam: AdamState,
    pub trace: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: NetworkParameters,
    pub training: Option<TrainingState>,
}

/// Expected shape of every checkpoint tensor, in order.
fn tensor_shapes(spec: &NetworkSpec) -> Result<Vec<Vec<usize>>> {
    let plan = spec.plan()?;
    let mut out = Vec::new();
    for (i, l) in plan.layers.iter().enumerate() {
        out.push(vec![l.fan_in, l.out]);
        out.push(vec![l.out]);
        if plan.has_bn(i) {
            out.extend(std::iter::repeat_n(vec![l.out], 4));
        }
    }
    Ok(out)
}

fn write_tensor<W: Write>(w: &mut W, shape: &[usize], data: &[f64]) -> Result<()> {
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut OffsetReader<R>, expect: &[usize]) -> Result<Vec<f64>> {
    let at = r.offset();
    let ndim = r.u32("tensor rank")? as usize;
    let mut shape = Vec::with_capacity(ndim.min(8));
    for _ in 0..ndim {
        shape.push(r.u64("tensor dimension")? as usize);
    }
    if shape != expect {
        return Err(SlpError::format(at, format!("tensor shape {shape:?}, expected {expect:?}")));
    }
    let n: usize = expect.iter().product();
    let mut data = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        data.push(r.f64("tensor value")?);
    }
    Ok(data)
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let shapes = tensor_shapes(&ckpt.spec)?;
    let tensors = ckpt.params.tensors();
    if shapes.len() != tensors.len() || shapes.iter().zip(&tensors).any(|(s, t)| s.iter().product::<usize>() != t.len()) {
        return Err(SlpError::dims("parameters do not match the network spec"));
    }
    let spec = serde_json::to_vec(&ckpt.spec).map_err(|e| SlpError::arg(e.to_string()))?;
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(spec.len() as u64).to_le_bytes())?;
    w.write_all(&spec)?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (s, t) in shapes.iter().zip(&tensors) {
        write_tensor(&mut w, s, t)?;
    }
    match &ckpt.training {
        None => w.write_all(&[0])?,
        Some(st) => {
            w.write_all(&[1])?;
            w.write_all(&(st.epoch as u64).to_le_bytes())?;
            w.write_all(&st.adam.step.to_le_bytes())?;
            w.write_all(&(st.trace.len() as u64).to_le_bytes())?;
            for e in &st.trace {
                w.write_all(&e.loss.to_le_bytes())?;
                w.write_all(&e.learning_rate.to_le_bytes())?;
            }
            let trainable = trainable_shapes(&ckpt.spec)?;
            if st.adam.m.len() != trainable.len() || st.adam.v.len() != trainable.len() {
                return Err(SlpError::dims("optimizer state does not match the network spec"));
            }
            w.write_all(&(trainable.len() as u64).to_le_bytes())?;
            for moments in [&st.adam.m, &st.adam.v] {
                for (s, t) in trainable.iter().zip(moments) {
                    if s.iter().product::<usize>() != t.len() {
                        return Err(SlpError::dims("optimizer state does not match the network spec"));
                    }
                    write_tensor(&mut w, s, t)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn trainable_shapes(spec: &NetworkSpec) -> Result<Vec<Vec<usize>>> {
    let plan = spec.plan()?;
    let mut out = Vec::new();
    for (i, l) in plan.layers.iter().enumerate() {
        out.push(vec![l.fan_in, l.out]);
        out.push(vec![l.out]);
        if plan.has_bn(i) {
            out.extend(std::iter::repeat_n(vec![l.out], 2));
        }
    }
    Ok(out)
}

pub fn read_checkpoint<R: Read>(inner: R) -> Result<Checkpoint> {
    let mut r = OffsetReader::new(inner);
    let magic: [u8; 4] = r.exact("magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(SlpError::format(0, format!("bad magic {magic:?}, expected \"SLPW\"")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(SlpError::format(4, format!("unsupported version {version}")));
    }
    let len = r.u64("spec length")? as usize;
    let at = r.offset();
    let text = r.bytes(len, "network spec")?;
    let spec: NetworkSpec = serde_json::from_slice(&text).map_err(|e| SlpError::format(at, format!("network spec: {e}")))?;
    let shapes = tensor_shapes(&spec).map_err(|e| SlpError::format(at, format!("network spec: {e}")))?;

    let at = r.offset();
    let count = r.u64("tensor count")? as usize;
    if count != shapes.len() {
        return Err(SlpError::format(at, format!("{count} tensors, spec needs {}", shapes.len())));
    }
    let mut params = NetworkParameters::init(&spec, 0)?;
    for (t, s) in params.tensors_mut().into_iter().zip(&shapes) {
        *t = read_tensor(&mut r, s)?;
    }

    let at = r.offset();
    let flag: [u8; 1] = r.exact("training flag")?;
    let training = match flag[0] {
        0 => None,
        1 => {
            let epoch = r.u64("epoch")? as usize;
            let step = r.u64("optimizer step")?;
            let at = r.offset();
            let n = r.u64("trace length")? as usize;
            if n != epoch {
                return Err(SlpError::format(at, format!("trace has {n} epochs, checkpoint is at epoch {epoch}")));
            }
            let mut trace = Vec::with_capacity(n.min(1 << 16));
            for e in 0..n {
                trace.push(EpochRecord {
                    epoch: e + 1,
                    loss: r.f64("trace loss")?,
                    learning_rate: r.f64("trace learning rate")?,
                });
            }
            let trainable = trainable_shapes(&spec)?;
            let at = r.offset();
            let m_count = r.u64("moment count")? as usize;
            if m_count != trainable.len() {
                return Err(SlpError::format(at, format!("{m_count} moment tensors, spec needs {}", trainable.len())));
            }
            let mut m = Vec::with_capacity(m_count);
            for s in &trainable {
                m.push(read_tensor(&mut r, s)?);
            }
            let mut v = Vec::with_capacity(m_count);
            for s in &trainable {
                v.push(read_tensor(&mut r, s)?);
            }
            Some(TrainingState {
                epoch,
                adam: AdamState { m, v, step },
                trace,
            })
        }
        other => return Err(SlpError::format(at, format!("training flag {other} is not 0 or 1"))),
    };
    r.expect_eof()?;
    Ok(Checkpoint { spec, params, training })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(ckpt, File::create(path)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{TrainConfig, Trainer, TrainingData};

    fn trained() -> Checkpoint {
        let spec = NetworkSpec::narrowed(2, 2, 4, 1.0, 256);
        let data = crate::channel::sample_rayleigh(2, 2, 16, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(spec, cfg).unwrap();
        t.run_epoch(&TrainingData {
            channels: &data,
            labels: None,
        })
        .unwrap();
        t.checkpoint()
    }

    #[test]
    fn roundtrip_with_and_without_state() {
        let ck = trained();
        let mut buf = Vec::new();
        write_checkpoint(&ck, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SLPW");
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), ck);

        let bare = Checkpoint { training: None, ..ck };
        let mut buf = Vec::new();
        write_checkpoint(&bare, &mut buf).unwrap();
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), bare);
    }

    #[test]
    fn corruption_is_located() {
        let mut buf = Vec::new();
        write_checkpoint(&trained(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(SlpError::Format { offset: 0, .. })));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(SlpError::Format { offset: 4, .. })));
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(
            read_checkpoint(cut),
            Err(SlpError::Format { offset, .. }) if offset == cut.len() as u64
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
    }
}
