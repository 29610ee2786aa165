//! Binary checkpoint: magic `HLF1`, `u16` version, config text, parameter
//! table, optimizer table, RNG words. All integers little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::Config;
use super::io::{put_string, put_u16, put_u32, put_u64, Reader};
use crate::diff::{AdamState, Tensor};
use crate::error::{Error, Result};
use crate::model::HlFormer;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HLF1";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Learning-rate plateau tracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub best_sumr: f64,
    /// Epochs since `best_sumr` last improved.
    pub stale_epochs: u64,
}

impl Default for ScheduleState {
    fn default() -> Self {
        Self {
            best_sumr: f64::NEG_INFINITY,
            stale_epochs: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: Config,
    pub model: HlFormer,
    pub optimizer: AdamState,
    pub schedule: ScheduleState,
    /// Batch-order RNG, see [`rng_to_words`].
    pub rng_state: Vec<u64>,
    /// Completed epochs.
    pub epoch: u64,
}

/// Seed (4 words), stream, and the 128-bit word position (low, high).
pub fn rng_to_words(rng: &ChaCha8Rng) -> Vec<u64> {
    let seed = rng.get_seed();
    let mut out: Vec<u64> = seed
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    out.push(rng.get_stream());
    let pos = rng.get_word_pos();
    out.push(pos as u64);
    out.push((pos >> 64) as u64);
    out
}

pub fn rng_from_words(words: &[u64]) -> Result<ChaCha8Rng> {
    if words.len() != 7 {
        return Err(Error::arg(format!("RNG state needs 7 words, got {}", words.len())));
    }
    let mut seed = [0u8; 32];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(&words[..4]) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(words[4]);
    rng.set_word_pos(words[5] as u128 | (words[6] as u128) << 64);
    Ok(rng)
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_string(out, name);
    put_u32(out, t.rank() as u32);
    for &d in t.shape() {
        put_u32(out, d as u32);
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_tensor(r: &mut Reader<'_>) -> Result<(String, Tensor)> {
    let name = r.string()?;
    let at = r.offset();
    let rank = r.u32()? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Format {
            offset: at,
            detail: format!("tensor {name} has rank {rank}"),
        });
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let count = match count {
        Some(n) if n > 0 => n,
        _ => {
            return Err(Error::Format {
                offset: at,
                detail: format!("tensor {name} has shape {shape:?}"),
            })
        }
    };
    if count.saturating_mul(8) > r.remaining() {
        return Err(r.error(format!("truncated payload of tensor {name}")));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f64()?);
    }
    Ok((name, Tensor::new(shape, data)?))
}

fn read_table(r: &mut Reader<'_>) -> Result<Vec<(u64, String, Tensor)>> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let at = r.offset();
        let (name, t) = read_tensor(r)?;
        out.push((at, name, t));
    }
    Ok(out)
}

fn expect_tensor(
    entry: Option<&(u64, String, Tensor)>,
    name: &str,
    shape: &[usize],
    end: u64,
) -> Result<Tensor> {
    match entry {
        Some((_, n, t)) if n == name && t.shape() == shape => Ok(t.clone()),
        Some((at, n, t)) => Err(Error::Format {
            offset: *at,
            detail: format!("expected {name} {shape:?}, found {n} {:?}", t.shape()),
        }),
        None => Err(Error::Format {
            offset: end,
            detail: format!("missing tensor {name}"),
        }),
    }
}

const OPTIMIZER_SCALARS: [&str; 8] = [
    "adam.step",
    "adam.lr",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "schedule.best_sumr",
    "schedule.stale_epochs",
    "epoch",
];

impl Checkpoint {
    /// A fresh checkpoint: initial parameters, zero moments, epoch 0.
    pub fn initial(config: Config) -> Result<Self> {
        config.validate()?;
        let model = HlFormer::new(config.model.clone())?;
        let optimizer = AdamState::new(&model.params, config.train.lr);
        let rng = super::train::batch_rng(config.model.seed);
        Ok(Self {
            config,
            model,
            optimizer,
            schedule: ScheduleState::default(),
            rng_state: rng_to_words(&rng),
            epoch: 0,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u16(&mut out, CHECKPOINT_VERSION);
        put_string(&mut out, &self.config.to_text());
        let params = &self.model.params;
        put_u32(&mut out, params.len() as u32);
        for (_, name, t) in params.iter() {
            put_tensor(&mut out, name, t);
        }
        put_u32(&mut out, (2 * params.len() + OPTIMIZER_SCALARS.len()) as u32);
        for (name, m) in params.names().iter().zip(&self.optimizer.first) {
            put_tensor(&mut out, &format!("m.{name}"), m);
        }
        for (name, v) in params.names().iter().zip(&self.optimizer.second) {
            put_tensor(&mut out, &format!("v.{name}"), v);
        }
        let scalars = [
            self.optimizer.step as f64,
            self.optimizer.lr,
            self.optimizer.beta1,
            self.optimizer.beta2,
            self.optimizer.eps,
            self.schedule.best_sumr,
            self.schedule.stale_epochs as f64,
            self.epoch as f64,
        ];
        for (name, v) in OPTIMIZER_SCALARS.iter().zip(scalars) {
            put_tensor(&mut out, name, &Tensor::scalar(v));
        }
        put_u32(&mut out, self.rng_state.len() as u32);
        for &w in &self.rng_state {
            put_u64(&mut out, w);
        }
        out
    }

    /// Parses and validates a checkpoint. Nothing is returned unless the
    /// whole buffer is well formed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.bytes(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                detail: "bad magic".into(),
            });
        }
        let version_at = r.offset();
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: version_at,
                detail: format!("unsupported version {version}"),
            });
        }
        let config_at = r.offset();
        let text = r.string()?;
        let config = Config::parse(&text).map_err(|e| Error::Format {
            offset: config_at,
            detail: format!("config block: {e}"),
        })?;
        let mut model = HlFormer::new(config.model.clone())?;

        let table_at = r.offset();
        let params = read_table(&mut r)?;
        if params.len() != model.params.len() {
            return Err(Error::Format {
                offset: table_at,
                detail: format!(
                    "{} parameter tensors, config implies {}",
                    params.len(),
                    model.params.len()
                ),
            });
        }
        let mut loaded = Vec::with_capacity(params.len());
        for (i, (_, name, t)) in model.params.iter().enumerate() {
            loaded.push((name.to_string(), expect_tensor(params.get(i), name, t.shape(), r.offset())?));
        }
        model.params.load(&loaded)?;

        let opt_at = r.offset();
        let opt = read_table(&mut r)?;
        let n = model.params.len();
        if opt.len() != 2 * n + OPTIMIZER_SCALARS.len() {
            return Err(Error::Format {
                offset: opt_at,
                detail: format!("optimizer table has {} tensors", opt.len()),
            });
        }
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for (i, (_, name, t)) in model.params.iter().enumerate() {
            first.push(expect_tensor(opt.get(i), &format!("m.{name}"), t.shape(), r.offset())?);
            second.push(expect_tensor(
                opt.get(n + i),
                &format!("v.{name}"),
                t.shape(),
                r.offset(),
            )?);
        }
        let mut scalars = [0.0; OPTIMIZER_SCALARS.len()];
        for (k, name) in OPTIMIZER_SCALARS.iter().enumerate() {
            scalars[k] = expect_tensor(opt.get(2 * n + k), name, &[1, 1], r.offset())?.data()[0];
        }
        let as_count = |v: f64, k: usize| -> Result<u64> {
            if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
                Ok(v as u64)
            } else {
                Err(Error::Format {
                    offset: opt[2 * n + k].0,
                    detail: format!("{} is not a count: {v}", OPTIMIZER_SCALARS[k]),
                })
            }
        };
        let optimizer = AdamState {
            first,
            second,
            step: as_count(scalars[0], 0)?,
            lr: scalars[1],
            beta1: scalars[2],
            beta2: scalars[3],
            eps: scalars[4],
        };
        let schedule = ScheduleState {
            best_sumr: scalars[5],
            stale_epochs: as_count(scalars[6], 6)?,
        };
        let epoch = as_count(scalars[7], 7)?;

        let rng_at = r.offset();
        let words = r.u32()? as usize;
        if words != 7 {
            return Err(Error::Format {
                offset: rng_at,
                detail: format!("RNG state has {words} words, expected 7"),
            });
        }
        let mut rng_state = Vec::with_capacity(words);
        for _ in 0..words {
            rng_state.push(r.u64()?);
        }
        if !r.is_at_end() {
            return Err(r.error("trailing bytes"));
        }
        Ok(Self {
            config,
            model,
            optimizer,
            schedule,
            rng_state,
            epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Where training writes its best checkpoint: `run.ckpt` -> `run.best.ckpt`.
pub fn best_checkpoint_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.best.{}", ext.to_string_lossy()),
        None => format!("{stem}.best"),
    };
    path.with_file_name(name)
}

/// Shorthand for [`Checkpoint::save`].
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    checkpoint.save(path)
}

/// Shorthand for [`Checkpoint::load`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
