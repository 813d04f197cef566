//! Binary checkpoint format, little endian throughout:
//!
//! ```text
//! magic "QFLOWCKP" | version u32
//! settings (TOML text) | meta text          each as u64 length + bytes
//! manifest: count u32, then per array: name, rows u64, cols u64, offset u64
//! parameter data: f64 blocks at the manifest offsets
//! rng: seed [u8; 32], stream u64, word position u128
//! adam: step u64, lr, beta1, beta2, eps, m blocks, v blocks
//! trainer: step, states visited, loss sum, loss count
//! buffer: window states, risky flags, modes, top list
//! sha256 of everything above
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::AdamConfig;
use crate::config::{AlgoConfig, TrainConfig};
use crate::env::Environment;
use crate::{Adam, ParamStore};

use super::{TrainError, Trainer, VisitBuffer, TOP_CAPACITY};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QFLOWCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Settings {
    algo: AlgoConfig,
    train: TrainConfig,
}

fn err(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn block(&mut self, a: &Array2<f64>) {
        for &v in a.iter() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| err("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, TrainError> {
        usize::try_from(self.u64()?).map_err(|_| err("length overflows"))
    }
    fn f64(&mut self) -> Result<f64, TrainError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bytes(&mut self) -> Result<&'a [u8], TrainError> {
        let n = self.usize()?;
        self.take(n)
    }
    fn text(&mut self) -> Result<String, TrainError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| err("invalid utf-8 text"))
    }
    fn block(&mut self, shape: (usize, usize)) -> Result<Array2<f64>, TrainError> {
        let n = shape.0.checked_mul(shape.1).ok_or_else(|| err("shape overflows"))?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| err("shape overflows"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Array2::from_shape_vec(shape, data).map_err(|e| err(e.to_string()))
    }
}

/// Validates the header and checksum and returns the body.
fn verified_body(bytes: &[u8]) -> Result<&[u8], TrainError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + DIGEST_LEN {
        return Err(err("truncated file"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(err("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(err(format!("format version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(err("checksum mismatch (file corrupted or truncated)"));
    }
    Ok(body)
}

/// The free-form meta text of a checkpoint, read without an environment.
pub fn checkpoint_meta(bytes: &[u8]) -> Result<String, TrainError> {
    let mut r = Reader { buf: verified_body(bytes)?, pos: 12 };
    r.bytes()?;
    r.u64()?;
    r.text()
}

impl<E: Environment> Trainer<E> {
    /// Serialized checkpoint bytes, checksum included.
    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>, TrainError> {
        let mut w = Writer::default();
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);

        let mut train = self.config.clone();
        train.seed = 0;
        let settings = toml::to_string(&Settings { algo: self.algo.clone(), train })
            .map_err(|e| err(format!("settings: {e}")))?;
        w.bytes(settings.as_bytes());
        w.u64(self.config.seed);
        w.bytes(self.meta.as_bytes());

        w.u32(self.store.len() as u32);
        let mut offset = 0u64;
        for (_, name, p) in self.store.iter() {
            w.bytes(name.as_bytes());
            w.u64(p.nrows() as u64);
            w.u64(p.ncols() as u64);
            w.u64(offset);
            offset += p.len() as u64;
        }
        for (_, _, p) in self.store.iter() {
            w.block(p);
        }

        w.0.extend_from_slice(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.0.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());

        let c = self.adam.config;
        w.u64(self.adam.step);
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            w.f64(v);
        }
        for m in self.adam.m.iter().chain(&self.adam.v) {
            w.block(m);
        }

        w.u64(self.step);
        w.u64(self.states_visited);
        w.f64(self.loss_sum);
        w.u64(self.loss_count);

        w.u64(self.buffer.len() as u64);
        for s in self.buffer.window() {
            w.bytes(&self.env.encode(s));
        }
        let flags: Vec<u8> = self.buffer.risky_flags().map(u8::from).collect();
        w.bytes(&flags);
        w.u64(self.buffer.modes().len() as u64);
        for &m in self.buffer.modes() {
            w.u64(m as u64);
        }
        w.u64(self.buffer.top().len() as u64);
        for (r, s) in self.buffer.top() {
            w.f64(*r);
            w.bytes(&self.env.encode(s));
        }

        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        Ok(w.0)
    }

    /// Writes the checkpoint through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let bytes = self.checkpoint_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, env: E) -> Result<Self, TrainError> {
        let bytes = fs::read(path)?;
        Self::from_checkpoint_bytes(&bytes, env)
    }

    /// Restores a trainer; the file is fully validated before anything is
    /// constructed.
    pub fn from_checkpoint_bytes(bytes: &[u8], env: E) -> Result<Self, TrainError> {
        let body = verified_body(bytes)?;
        let mut r = Reader { buf: body, pos: 12 };

        let settings: Settings =
            toml::from_str(&r.text()?).map_err(|e| err(format!("settings: {e}")))?;
        let mut config = settings.train;
        config.seed = r.u64()?;
        let meta = r.text()?;
        let mut trainer = Trainer::new(env, settings.algo, config)?;
        trainer.meta = meta;

        let count = r.u32()? as usize;
        if count != trainer.store.len() {
            return Err(err(format!("{count} parameter arrays, model has {}", trainer.store.len())));
        }
        let mut shapes = Vec::with_capacity(count);
        let mut expected_offset = 0u64;
        for id in trainer.store.ids() {
            let name = r.text()?;
            let shape = (r.usize()?, r.usize()?);
            let offset = r.u64()?;
            let have = trainer.store.get(id);
            if name != trainer.store.name(id) || shape != have.dim() || offset != expected_offset {
                return Err(err(format!(
                    "manifest entry `{name}` {shape:?} @ {offset} does not match `{}` {:?}",
                    trainer.store.name(id),
                    have.dim()
                )));
            }
            expected_offset += have.len() as u64;
            shapes.push(shape);
        }
        let mut store = ParamStore::new();
        for (id, &shape) in trainer.store.ids().zip(&shapes) {
            store.add(trainer.store.name(id).to_string(), r.block(shape)?);
        }

        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let step = r.u64()?;
        let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
        let mut m = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for &shape in &shapes {
            m.push(r.block(shape)?);
        }
        for &shape in &shapes {
            v.push(r.block(shape)?);
        }
        let adam = Adam { config, step, m, v };

        let t_step = r.u64()?;
        let states_visited = r.u64()?;
        let loss_sum = r.f64()?;
        let loss_count = r.u64()?;

        let mut buffer = VisitBuffer::new(trainer.buffer.capacity(), trainer.buffer.risky_capacity(), TOP_CAPACITY);
        let n = r.usize()?;
        for _ in 0..n {
            buffer.push_window(trainer.env.decode(r.bytes()?)?);
        }
        for &f in r.bytes()? {
            buffer.push_risky(f != 0);
        }
        let n_modes = r.usize()?;
        let mut modes = BTreeSet::new();
        for _ in 0..n_modes {
            modes.insert(r.usize()?);
        }
        let n_top = r.usize()?;
        let mut top = Vec::with_capacity(n_top.min(TOP_CAPACITY));
        for _ in 0..n_top {
            let reward = r.f64()?;
            top.push((reward, trainer.env.decode(r.bytes()?)?));
        }
        buffer.restore_extras(modes, top);
        if r.pos != body.len() {
            return Err(err(format!("{} unexpected trailing bytes", body.len() - r.pos)));
        }

        trainer.store = store;
        trainer.adam = adam;
        trainer.rng = rng;
        trainer.step = t_step;
        trainer.states_visited = states_visited;
        trainer.loss_sum = loss_sum;
        trainer.loss_count = loss_count;
        trainer.buffer = buffer;
        Ok(trainer)
    }
}
